"""Microphone array and source geometry, and target-dependent phase differences.

Convention: the array axis is local +x, azimuth is measured from +x toward
+y in the horizontal plane and elevation from that plane toward +z. A TPD
is the phase difference ``angle(Y[m1]) - angle(Y[m2])`` that a source at
the given location would produce, so both the 1D and the 3D variants are
directly comparable with observed IPDs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOUND_SPEED = 343.0

# 15-10-5-20-5-10-15 cm spacing of the 8-element non-uniform linear array
DEFAULT_SPACING = (0.15, 0.10, 0.05, 0.20, 0.05, 0.10, 0.15)

# four pairs symmetric about the centre plus two offset ones
DEFAULT_PAIRS = ((0, 7), (1, 6), (2, 5), (3, 4), (4, 7), (0, 3))


@dataclass(frozen=True)
class MicPair:
    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 == self.m2:
            raise ValueError(f"degenerate pair ({self.m1}, {self.m2})")
        if self.m1 < 0 or self.m2 < 0:
            raise ValueError(f"negative mic index in ({self.m1}, {self.m2})")

    def swapped(self) -> "MicPair":
        return MicPair(self.m2, self.m1)


def as_pairs(pairs) -> tuple[MicPair, ...]:
    return tuple(p if isinstance(p, MicPair) else MicPair(int(p[0]), int(p[1])) for p in pairs)


def parse_pairs(text: str) -> tuple[MicPair, ...]:
    """Parse ``"0-7,1-6"`` or ``"0:7 1:6"`` into pairs."""
    out = []
    for token in text.replace(",", " ").split():
        a, _, b = token.replace(":", "-").partition("-")
        if not b:
            raise ValueError(f"cannot parse mic pair {token!r}")
        out.append(MicPair(int(a), int(b)))
    if not out:
        raise ValueError("empty pair list")
    return tuple(out)


@dataclass(frozen=True)
class SourceLocation:
    """Source position relative to the array reference point (radians, radians, metres).

    Elevation and distance may be unknown (``None``) when only a direction
    is available; such a location supports 1D TPDs only.
    """

    azimuth: float
    elevation: float | None = None
    distance: float | None = None

    def __post_init__(self):
        if self.distance is not None and not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        if self.elevation is not None and not -np.pi / 2 - 1e-12 <= self.elevation <= np.pi / 2 + 1e-12:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    @property
    def is_complete(self) -> bool:
        return self.elevation is not None and self.distance is not None


@dataclass
class MicrophoneArray:
    positions: np.ndarray
    reference_point: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.shape[1] != 3:
            raise ValueError(f"positions must be (M, 3), got {self.positions.shape}")
        if len(self.positions) < 2:
            raise ValueError("an array needs at least two microphones")
        d = np.linalg.norm(self.positions[:, None] - self.positions[None], axis=-1)
        if np.any(d[~np.eye(len(d), dtype=bool)] < 1e-9):
            raise ValueError("microphone positions must be distinct")
        if self.reference_point is None:
            self.reference_point = self.positions.mean(axis=0)
        else:
            self.reference_point = np.asarray(self.reference_point, dtype=float).reshape(3)

    @property
    def n_mics(self) -> int:
        return len(self.positions)

    @property
    def aperture(self) -> float:
        d = np.linalg.norm(self.positions[:, None] - self.positions[None], axis=-1)
        return float(d.max())

    def is_linear(self, tol: float = 1e-9) -> bool:
        centred = self.positions - self.positions.mean(axis=0)
        s = np.linalg.svd(centred, compute_uv=False)
        return bool(s[1] <= tol * max(s[0], 1.0))

    def translated(self, offset) -> "MicrophoneArray":
        offset = np.asarray(offset, dtype=float)
        return MicrophoneArray(self.positions + offset, self.reference_point + offset)

    def check_pairs(self, pairs) -> tuple[MicPair, ...]:
        pairs = as_pairs(pairs)
        for p in pairs:
            if p.m1 >= self.n_mics or p.m2 >= self.n_mics:
                raise ValueError(f"pair ({p.m1}, {p.m2}) out of range for {self.n_mics} mics")
        return pairs


def linear_array(spacing=DEFAULT_SPACING, origin=(0.0, 0.0, 0.0)) -> MicrophoneArray:
    """Collinear array along +x with the given inter-mic gaps, centred on ``origin``."""
    x = np.concatenate([[0.0], np.cumsum(spacing)])
    x -= x.mean()
    pos = np.zeros((len(x), 3))
    pos[:, 0] = x
    return MicrophoneArray(pos + np.asarray(origin, dtype=float))


def default_array(origin=(0.0, 0.0, 0.0)) -> MicrophoneArray:
    return linear_array(DEFAULT_SPACING, origin)


def locate(loc: SourceLocation, array: MicrophoneArray) -> np.ndarray:
    """Cartesian position of ``loc`` in the array's frame (axis along +x)."""
    if not loc.is_complete:
        raise ValueError("locating a source needs azimuth, elevation and distance")
    ce = np.cos(loc.elevation)
    direction = np.array([ce * np.cos(loc.azimuth), ce * np.sin(loc.azimuth), np.sin(loc.elevation)])
    return array.reference_point + loc.distance * direction


def relative_location(point, array: MicrophoneArray) -> SourceLocation:
    """Inverse of :func:`locate`; azimuth folds into ``[0, pi]`` (linear-array cone)."""
    v = np.asarray(point, dtype=float) - array.reference_point
    d = float(np.linalg.norm(v))
    if d == 0:
        raise ValueError("point coincides with the reference point")
    elevation = float(np.arcsin(np.clip(v[2] / d, -1.0, 1.0)))
    azimuth = float(np.arctan2(abs(v[1]), v[0]))
    return SourceLocation(azimuth, elevation, d)


def _array_axis(array: MicrophoneArray) -> np.ndarray:
    if not array.is_linear():
        raise ValueError("array is not collinear")
    centred = array.positions - array.positions.mean(axis=0)
    axis = np.linalg.svd(centred)[2][0]
    # orient along +x so offsets agree with the azimuth convention
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    return axis


def mic_offsets(array: MicrophoneArray) -> np.ndarray:
    """Signed positions of each mic along the array axis, relative to the array reference point."""
    axis = _array_axis(array)
    return (array.positions - array.reference_point) @ axis


def bin_frequencies(n_bins: int, sample_rate: float) -> np.ndarray:
    """Physical centre frequency of each one-sided bin, ``k * fs / fft_size``."""
    if n_bins < 2:
        raise ValueError("need at least two frequency bins")
    fft_size = 2 * (n_bins - 1)
    return np.arange(n_bins) * sample_rate / fft_size


@dataclass
class Tpd:
    """Target-dependent phase differences, shape ``(P, F)`` in radians."""

    data: np.ndarray
    pairs: tuple[MicPair, ...]
    sample_rate: float
    sound_speed: float
    mode: str


def tpd_1d(azimuth, pairs, array, n_bins, sample_rate=16000, sound_speed=SOUND_SPEED) -> Tpd:
    """Plane-wave TPD from azimuth only.

    ``TPD[p, k] = 2 pi f_k (x_m1 - x_m2) cos(azimuth) / c``; the mic further
    along the source direction hears the wave first and leads in phase.
    """
    pairs = array.check_pairs(pairs)
    x = mic_offsets(array)
    sep = np.array([x[p.m1] - x[p.m2] for p in pairs])
    f = bin_frequencies(n_bins, sample_rate)
    data = 2.0 * np.pi * np.outer(sep, f) * np.cos(azimuth) / sound_speed
    return Tpd(data, pairs, sample_rate, sound_speed, "1d")


def tpd_3d(loc: SourceLocation, pairs, array, n_bins, sample_rate=16000, sound_speed=SOUND_SPEED) -> Tpd:
    """Spherical-wave TPD from exact source-to-mic path lengths.

    ``TPD[p, k] = 2 pi f_k (d_m2 - d_m1) / c``. For a linear array this is
    the law-of-cosines form with signed mic offsets, and it works for any
    array shape.
    """
    pairs = array.check_pairs(pairs)
    src = locate(loc, array)
    dist = np.linalg.norm(array.positions - src, axis=1)
    if np.any(dist < 1e-9):
        raise ValueError("source coincides with a microphone")
    diff = np.array([dist[p.m2] - dist[p.m1] for p in pairs])
    f = bin_frequencies(n_bins, sample_rate)
    data = 2.0 * np.pi * np.outer(diff, f) / sound_speed
    return Tpd(data, pairs, sample_rate, sound_speed, "3d")


def aliasing_frequency(array: MicrophoneArray, pair: MicPair, sound_speed=SOUND_SPEED) -> float:
    spacing = np.linalg.norm(array.positions[pair.m1] - array.positions[pair.m2])
    return sound_speed / (2.0 * spacing)
