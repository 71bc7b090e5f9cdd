"""Image-source room simulation and seeded multi-speaker scene generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, fftconvolve, sosfilt

from .geometry import (
    SOUND_SPEED,
    MicrophoneArray,
    SourceLocation,
    default_array,
    relative_location,
)

SINC_TAPS = 8


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple[float, float, float]
    t60: float
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"invalid room dimensions {self.dims}")
        if not self.t60 >= 0:
            raise ValueError(f"t60 must be non-negative, got {self.t60}")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dims
        return 2.0 * (lx * ly + ly * lz + lx * lz)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= margin) and np.all(p <= np.asarray(self.dims) - margin))


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform absorption ``alpha = 24 ln(10) V / (c S T60)`` (0.161 V / (S T60) at 343 m/s)."""
    if room.t60 <= 0:
        raise ValueError("t60 must be positive to derive absorption")
    return 24.0 * math.log(10.0) * room.volume / (room.sound_speed * room.surface * room.t60)


def reflection_coeff(room: RoomSpec) -> float:
    """Wall pressure reflection coefficient ``sqrt(1 - alpha)`` from Sabine's formula."""
    alpha = sabine_absorption(room)
    if alpha >= 1.0:
        raise ValueError(
            f"room too small for requested T60: {room.dims} m with T60={room.t60} s needs alpha={alpha:.3f} >= 1"
        )
    return math.sqrt(1.0 - alpha)


def default_length(room: RoomSpec, fs: int, direct: float = 0.0) -> int:
    """RIR length covering the direct path plus ``2 * T60`` of decay."""
    return int(math.ceil((2.0 * room.t60 + direct / room.sound_speed) * fs)) + SINC_TAPS


def auto_max_order(room: RoomSpec, reach: float | None = None) -> int:
    """Reflection order beyond which every image lies further than ``reach`` metres.

    ``reach`` defaults to ``c * 1.5 * T60``.
    """
    if reach is None:
        reach = room.sound_speed * 1.5 * room.t60
    return int(math.ceil(reach / min(room.dims))) + 1


def _axis_images(s: float, length: float, order: int):
    n = np.arange(-order, order + 1)
    coords = np.concatenate([s + 2 * n * length, -s + 2 * n * length])
    refl = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
    keep = refl <= order
    return coords[keep], refl[keep]


def image_sources(room: RoomSpec, src, max_order: int, within: float | None = None, centre=None):
    """Positions ``(K, 3)`` and reflection counts ``(K,)`` of the image sources.

    Images with more than ``max_order`` reflections are dropped, and so are
    images further than ``within`` metres from ``centre`` (default: the
    source) when ``within`` is given.
    """
    src = np.asarray(src, dtype=float)
    centre = src if centre is None else np.asarray(centre, dtype=float)
    (cx, rx), (cy, ry), (cz, rz) = [_axis_images(src[i], room.dims[i], max_order) for i in range(3)]
    dy2 = (cy - centre[1])[:, None] ** 2 + (cz - centre[2])[None, :] ** 2
    ryz = ry[:, None] + rz[None, :]
    pos, bounces = [], []
    for x, r in zip(cx, rx):
        keep = ryz <= max_order - r
        if within is not None:
            keep &= dy2 + (x - centre[0]) ** 2 <= within**2
        iy, iz = np.nonzero(keep)
        if len(iy) == 0:
            continue
        pos.append(np.column_stack([np.full(len(iy), x), cy[iy], cz[iz]]))
        bounces.append(ryz[iy, iz] + r)
    return np.concatenate(pos), np.concatenate(bounces)


_SINC_RESOLUTION = 1024


def _sinc_table() -> np.ndarray:
    """Hann-windowed sinc taps for fractional offsets ``0, 1/1024, ..., 1``.

    Row ``q`` holds the weights of samples ``floor(d) - 3 .. floor(d) + 4``
    for a delay ``d`` with fractional part ``q / 1024``.
    """
    half = SINC_TAPS // 2
    frac = np.arange(_SINC_RESOLUTION + 1) / _SINC_RESOLUTION
    x = np.arange(-(half - 1), half + 1)[None, :] - frac[:, None]
    return np.sinc(x) * 0.5 * (1.0 + np.cos(np.pi * x / half))


_SINC = _sinc_table()


def ism_rirs(
    room: RoomSpec,
    src,
    mics,
    fs: int = 16000,
    max_order: int | None = None,
    fractional: str = "round",
    length: int | None = None,
    highpass: float | None = 100.0,
) -> np.ndarray:
    """Impulse responses from one source to several mics, shape ``(M, length)``.

    Each image contributes ``beta**bounces / (4 pi r)`` at delay ``r / c``.
    ``fractional`` selects nearest-sample placement (``"round"``) or an
    8-tap Hann-windowed sinc (``"sinc"``).

    All image amplitudes are positive, so late images landing on the same
    samples pile up into a spurious low-frequency component that stretches
    the decay. Reverberant responses are therefore high-passed at
    ``highpass`` Hz; a direct-path-only response (``max_order=0``) is
    returned unfiltered.
    """
    src = np.asarray(src, dtype=float)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    if not room.contains(src):
        raise ValueError(f"source {src.tolist()} outside room {room.dims}")
    for m in mics:
        if not room.contains(m):
            raise ValueError(f"microphone {m.tolist()} outside room {room.dims}")
        if np.linalg.norm(m - src) < 1e-6:
            raise ValueError("source coincides with a microphone")
    if fractional not in ("round", "sinc"):
        raise ValueError(f"unknown fractional delay mode {fractional!r}")

    c = room.sound_speed
    direct = np.linalg.norm(mics - src, axis=1)
    if length is None:
        length = default_length(room, fs, direct.max())
    # images arriving after the last tap at every mic are irrelevant
    centre = mics.mean(axis=0)
    reach = length / fs * c + np.linalg.norm(mics - centre, axis=1).max()
    if max_order is None:
        max_order = auto_max_order(room, reach) if room.t60 > 0 else 0
    beta = reflection_coeff(room) if max_order > 0 else 1.0
    images, bounces = image_sources(room, src, max_order, within=reach, centre=centre)

    out = np.zeros((len(mics), length))
    gain = beta ** bounces.astype(float) / (4.0 * np.pi)
    ix, iy, iz = (np.ascontiguousarray(images[:, k]) for k in range(3))
    for m, (mx, my, mz) in enumerate(mics):
        r = np.sqrt((ix - mx) ** 2 + (iy - my) ** 2 + (iz - mz) ** 2)
        delay = r * (fs / c)
        amp = gain / r
        if fractional == "round":
            idx = np.rint(delay).astype(np.int64)
            ok = idx < length
            out[m] = np.bincount(idx[ok], weights=amp[ok], minlength=length)[:length]
            continue
        whole = np.floor(delay)
        q = np.rint((delay - whole) * _SINC_RESOLUTION).astype(np.int64)
        base = whole.astype(np.int64) - (SINC_TAPS // 2 - 1)
        for j in range(SINC_TAPS):
            idx = base + j
            ok = (idx >= 0) & (idx < length)
            out[m] += np.bincount(idx[ok], weights=amp[ok] * _SINC[q[ok], j], minlength=length)[:length]
    if max_order > 0 and highpass:
        out = sosfilt(butter(2, highpass, "highpass", fs=fs, output="sos"), out, axis=1)
    return out


def ism_rir(room: RoomSpec, src, mic, fs: int = 16000, max_order: int | None = None,
            fractional: str = "round", length: int | None = None,
            highpass: float | None = 100.0) -> np.ndarray:
    return ism_rirs(room, src, [mic], fs, max_order, fractional, length, highpass)[0]


def schroeder_edc(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, normalised to 0 dB at t=0."""
    energy = np.cumsum(np.asarray(rir, dtype=float)[::-1] ** 2)[::-1]
    if energy[0] <= 0:
        raise ValueError("impulse response has no energy")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def decay_time(rir: np.ndarray, fs: int, start_db: float = -5.0, stop_db: float = -35.0) -> float:
    """T60 from a least-squares line through the EDC between two levels.

    The default ``-5 .. -35`` dB range is the T30 evaluation extrapolated
    to 60 dB of decay.
    """
    edc = schroeder_edc(rir)
    sel = np.nonzero((edc <= start_db) & (edc >= stop_db))[0]
    if len(sel) < 2:
        raise ValueError(f"EDC never spans {start_db}..{stop_db} dB")
    t = sel / fs
    slope, _ = np.polyfit(t, edc[sel], 1)
    if slope >= 0:
        raise ValueError("EDC does not decay")
    return -60.0 / slope


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------


@dataclass
class Source:
    position: np.ndarray
    location: SourceLocation
    signal: str
    is_target: bool = False


@dataclass
class Scenario:
    room: RoomSpec
    array: MicrophoneArray
    sources: list[Source]
    sir_db: float
    seed: int
    mode: str = "standard"

    def __post_init__(self):
        targets = [s for s in self.sources if s.is_target]
        if len(targets) != 1:
            raise ValueError(f"a scenario needs exactly one target, got {len(targets)}")
        for p in self.array.positions:
            if not self.room.contains(p, 0.1):
                raise ValueError(f"microphone {p.tolist()} closer than 0.1 m to a wall")
        for s in self.sources:
            if not self.room.contains(s.position, 0.1):
                raise ValueError(f"source {s.position.tolist()} closer than 0.1 m to a wall")

    @property
    def target_index(self) -> int:
        return next(i for i, s in enumerate(self.sources) if s.is_target)

    @property
    def target(self) -> Source:
        return self.sources[self.target_index]

    @property
    def interferers(self) -> list[Source]:
        return [s for s in self.sources if not s.is_target]


@dataclass(frozen=True)
class SamplingRanges:
    room_min: tuple[float, float, float] = (3.0, 3.0, 3.0)
    room_max: tuple[float, float, float] = (10.0, 8.0, 5.0)
    t60: tuple[float, float] = (0.05, 0.7)
    sir_db: tuple[float, float] = (-6.0, 6.0)
    n_interferers: int = 1
    array_height: tuple[float, float] = (1.0, 1.5)
    source_height: tuple[float, float] = (1.0, 1.9)
    distance: tuple[float, float] = (0.5, 4.0)
    target_distance: tuple[float, float] | None = None
    wall_margin: float = 0.3
    mode: str = "standard"
    max_azimuth_diff_deg: float = 15.0
    min_distance_diff: float = 1.0
    max_tries: int = 20000

    def __post_init__(self):
        if not 1 <= self.n_interferers <= 3:
            raise ValueError("n_interferers must be between 1 and 3")
        if self.mode not in ("standard", "close_azimuth"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        for name in ("t60", "sir_db", "array_height", "source_height", "distance", "target_distance"):
            if getattr(self, name) is None:
                continue
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"empty range for {name}: {lo} > {hi}")

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingRanges":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sampling keys: {sorted(unknown)}")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


# 1D-vs-3D comparison protocol: a tracked talker within 2 m and an interferer
# in nearly the same direction at a clearly different range
CLOSE_AZIMUTH_EVAL = SamplingRanges(
    t60=(0.1, 0.4), sir_db=(0.0, 0.0), target_distance=(0.5, 2.0), mode="close_azimuth"
)


class SamplingError(RuntimeError):
    pass


def _uniform(rng, lo_hi):
    lo, hi = lo_hi
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _sample_source(rng, room: RoomSpec, array: MicrophoneArray, ranges: SamplingRanges, distance):
    lx, ly, _ = room.dims
    m = ranges.wall_margin
    for _ in range(ranges.max_tries):
        p = np.array([rng.uniform(m, lx - m), rng.uniform(m, ly - m), _uniform(rng, ranges.source_height)])
        if not room.contains(p, m):
            continue
        d = np.linalg.norm(p - array.reference_point)
        if not distance[0] <= d <= distance[1]:
            continue
        if np.min(np.linalg.norm(array.positions - p, axis=1)) < 0.2:
            continue
        return p
    raise SamplingError("could not place a source within the configured distance range")


def sample_scenario(seed: int, ranges: SamplingRanges = SamplingRanges()) -> Scenario:
    """Draw a complete scene; the same seed always yields the same scene."""
    rng = np.random.default_rng(seed)
    for _ in range(ranges.max_tries):
        dims = tuple(_uniform(rng, (lo, hi)) for lo, hi in zip(ranges.room_min, ranges.room_max))
        t60 = _uniform(rng, ranges.t60)
        room = RoomSpec(dims, t60)
        if sabine_absorption(room) < 0.99:
            break
    else:
        raise SamplingError("no room in range supports the sampled T60")
    sir = _uniform(rng, ranges.sir_db)

    base = default_array()
    half = base.aperture / 2.0
    lx, ly, lz = dims
    m = max(ranges.wall_margin, 0.1)
    if lx - 2 * (m + half) <= 0 or lz < ranges.array_height[0] + m:
        raise SamplingError(f"array does not fit in room {dims}")
    centre = np.array([
        rng.uniform(m + half, lx - m - half),
        rng.uniform(m, ly - m),
        min(_uniform(rng, ranges.array_height), lz - m),
    ])
    array = base.translated(centre)

    for _ in range(ranges.max_tries):
        target_range = ranges.target_distance or ranges.distance
        positions = [_sample_source(rng, room, array, ranges, target_range)]
        positions += [_sample_source(rng, room, array, ranges, ranges.distance) for _ in range(ranges.n_interferers)]
        locs = [relative_location(p, array) for p in positions]
        if ranges.mode == "close_azimuth":
            tgt = locs[0]
            ok = all(
                abs(np.degrees(o.azimuth - tgt.azimuth)) < ranges.max_azimuth_diff_deg
                and abs(o.distance - tgt.distance) >= ranges.min_distance_diff
                for o in locs[1:]
            )
            if not ok:
                continue
        break
    else:
        raise SamplingError("no source placement satisfies the close-azimuth constraint")

    sources = [
        Source(p, loc, f"synth:{seed}:{i}", is_target=(i == 0))
        for i, (p, loc) in enumerate(zip(positions, locs))
    ]
    return Scenario(room, array, sources, sir, seed, ranges.mode)


def _power(x) -> float:
    return float(np.mean(np.asarray(x, dtype=float) ** 2))


def render_scenario(
    sc: Scenario,
    clean,
    fs: int = 16000,
    fractional: str = "round",
    max_order: int | None = None,
    reference_channel: int = 0,
):
    """Convolve each clean source with its RIRs and mix.

    Each interferer is scaled to sit ``sc.sir_db`` below the target on the
    reference channel.

    Returns ``(mixture, images)``: the ``(M, L)`` mixture and one ``(M, L)``
    reverberant image per source (after SIR scaling). ``L`` is the longest
    clean length; reverberant tails beyond it are cut.
    """
    clean = [np.asarray(c, dtype=float) for c in clean]
    if len(clean) != len(sc.sources):
        raise ValueError(f"{len(sc.sources)} sources but {len(clean)} clean signals")
    n = max(len(c) for c in clean)
    images = []
    for src, sig in zip(sc.sources, clean):
        h = ism_rirs(sc.room, src.position, sc.array.positions, fs, max_order, fractional)
        img = fftconvolve(sig[None, :], h, axes=1)[:, :n]
        if img.shape[1] < n:
            img = np.pad(img, ((0, 0), (0, n - img.shape[1])))
        images.append(img)
    t = sc.target_index
    p_target = _power(images[t][reference_channel])
    if p_target <= 0:
        raise ValueError("target signal is silent")
    for i, img in enumerate(images):
        if i == t:
            continue
        p_i = _power(img[reference_channel])
        if p_i <= 0:
            continue
        images[i] = img * math.sqrt(p_target / (p_i * 10.0 ** (sc.sir_db / 10.0)))
    mixture = np.sum(images, axis=0)
    return mixture, images


def with_room(sc: Scenario, **changes) -> Scenario:
    return replace(sc, room=replace(sc.room, **changes))
