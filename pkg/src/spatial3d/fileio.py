"""On-disk formats: RIFF/WAVE audio, feature matrices and scene descriptions.

Feature file layout (all integers little-endian)::

    bytes 0..7    magic  b"S3DFEAT1"
    bytes 8..11   uint32 header length H
    bytes 12..    H bytes of UTF-8 JSON header
    then          T*D float32 values, row-major

The header holds ``layout``, ``manifest`` (list of ``[name, width]``),
``shape`` ``[T, D]``, ``dtype`` (always ``"<f4"``), ``digest`` and the
resolved ``config`` the digest was computed from.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .features import FeatureMatrix
from .geometry import MicrophoneArray, SourceLocation
from .room import RoomSpec, Scenario, Source

FEATURE_MAGIC = b"S3DFEAT1"
SCENARIO_FORMAT = "spatial3d-scenario/1"

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


class FeatureFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a PCM16 or float32 WAV file.

    Returns ``(channels, sample_rate)`` with ``channels`` shaped ``(M, L)``;
    PCM16 is scaled by 1/32768, float32 is returned as stored.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise WavError(f"{path}: truncated RIFF header at byte {len(raw)}")
    if raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file (byte 0)")
    fmt = None
    data = None
    pos = 12
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise WavError(f"{path}: truncated chunk header at byte {pos}")
        cid = raw[pos : pos + 4]
        size = struct.unpack_from("<I", raw, pos + 4)[0]
        body = pos + 8
        if body + size > len(raw):
            name = cid.decode("latin-1")
            raise WavError(
                f"{path}: truncated {name!r} chunk at byte {pos}: needs {size} bytes, {len(raw) - body} present"
            )
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"{path}: 'fmt ' chunk too short at byte {pos}")
            tag, n_ch, rate, _, align, bits = struct.unpack_from("<HHIIHH", raw, body)
            if tag == _EXTENSIBLE and size >= 40:
                tag = struct.unpack_from("<H", raw, body + 24)[0]
            fmt = (tag, n_ch, rate, align, bits, pos)
        elif cid == b"data":
            data = (body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavError(f"{path}: missing 'fmt ' chunk")
    if data is None:
        raise WavError(f"{path}: missing 'data' chunk")
    tag, n_ch, rate, align, bits, fmt_pos = fmt
    if n_ch < 1:
        raise WavError(f"{path}: zero channels in 'fmt ' chunk at byte {fmt_pos}")
    if (tag, bits) == (_PCM, 16):
        dtype, scale = "<i2", 1.0 / 32768.0
    elif (tag, bits) == (_FLOAT, 32):
        dtype, scale = "<f4", None
    else:
        raise WavError(f"{path}: unsupported codec (format {tag}, {bits} bits) in 'fmt ' chunk at byte {fmt_pos}")
    start, size = data
    frame = n_ch * (bits // 8)
    n = size // frame
    samples = np.frombuffer(raw, dtype=dtype, count=n * n_ch, offset=start).reshape(n, n_ch).T
    if scale is None:
        return samples.astype(np.float32), rate
    return samples.astype(np.float64) * scale, rate


def write_wav(path, channels, sample_rate: int, fmt: str = "float32", comment: str | None = None) -> None:
    """Write ``(M, L)`` (or 1-D) samples as PCM16 or IEEE float32.

    ``comment`` goes into a ``LIST/INFO/ICMT`` chunk after the samples.
    """
    x = np.atleast_2d(np.asarray(channels))
    n_ch, n = x.shape
    if fmt == "float32":
        payload = np.ascontiguousarray(x.T, dtype="<f4").tobytes()
        tag, bits = _FLOAT, 32
    elif fmt == "pcm16":
        q = np.rint(np.clip(np.asarray(x, dtype=float), -1.0, 1.0) * 32768.0)
        payload = np.ascontiguousarray(np.clip(q, -32768, 32767).T, dtype="<i2").tobytes()
        tag, bits = _PCM, 16
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    align = n_ch * bits // 8
    body = b"fmt " + struct.pack("<IHHIIHH", 16, tag, n_ch, sample_rate, sample_rate * align, align, bits)
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\0"
    if comment is not None:
        text = comment.encode("utf-8") + b"\0"
        if len(text) & 1:
            text += b"\0"
        info = b"INFO" + b"ICMT" + struct.pack("<I", len(text)) + text
        body += b"LIST" + struct.pack("<I", len(info)) + info
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)


def read_wav_comment(path) -> str | None:
    """The ``LIST/INFO/ICMT`` text of a WAV file, if any."""
    raw = Path(path).read_bytes()
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        size = struct.unpack_from("<I", raw, pos + 4)[0]
        if cid == b"LIST" and raw[pos + 8 : pos + 12] == b"INFO":
            sub = pos + 12
            while sub + 8 <= pos + 8 + size:
                sid = raw[sub : sub + 4]
                ssize = struct.unpack_from("<I", raw, sub + 4)[0]
                if sid == b"ICMT":
                    return raw[sub + 8 : sub + 8 + ssize].rstrip(b"\0").decode("utf-8")
                sub += 8 + ssize + (ssize & 1)
        pos += 8 + size + (size & 1)
    return None


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_features(path, fm: FeatureMatrix, config: dict | None = None) -> str:
    """Write ``fm``; returns the digest stored in the header."""
    config = config or {}
    digest = config_digest(config)
    header = {
        "layout": fm.layout,
        "manifest": [[n, d] for n, d in fm.manifest],
        "shape": list(fm.data.shape),
        "dtype": "<f4",
        "digest": digest,
        "config": config,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    Path(path).write_bytes(FEATURE_MAGIC + struct.pack("<I", len(hbytes)) + hbytes + payload)
    return digest


def read_feature_header(path) -> dict:
    return _read_features(path)[0]


def _read_features(path):
    raw = Path(path).read_bytes()
    if raw[:8] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic at byte 0")
    if len(raw) < 12:
        raise FeatureFileError(f"{path}: truncated header length at byte 8")
    hlen = struct.unpack_from("<I", raw, 8)[0]
    if 12 + hlen > len(raw):
        raise FeatureFileError(f"{path}: truncated header at byte 12 (needs {hlen} bytes)")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FeatureFileError(f"{path}: unreadable header at byte 12: {exc}") from exc
    return header, raw, 12 + hlen


def read_features(path, expected_digest: str | None = None) -> FeatureMatrix:
    """Read a feature file; with ``expected_digest`` a stale file is rejected."""
    header, raw, offset = _read_features(path)
    if header.get("dtype") != "<f4":
        raise FeatureFileError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    t, d = header["shape"]
    need = t * d * 4
    have = len(raw) - offset
    if have != need:
        raise FeatureFileError(f"{path}: payload at byte {offset} has {have} bytes, header shape needs {need}")
    if expected_digest is not None and header.get("digest") != expected_digest:
        raise FeatureFileError(
            f"{path}: config digest {header.get('digest')} does not match expected {expected_digest}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=t * d, offset=offset).reshape(t, d).copy()
    try:
        return FeatureMatrix(data, header["layout"], [tuple(m) for m in header["manifest"]])
    except ValueError as exc:
        raise FeatureFileError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _loc_to_dict(loc: SourceLocation) -> dict:
    d = {"azimuth": loc.azimuth}
    if loc.elevation is not None:
        d["elevation"] = loc.elevation
    if loc.distance is not None:
        d["distance"] = loc.distance
    return d


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "format": SCENARIO_FORMAT,
        "seed": sc.seed,
        "mode": sc.mode,
        "sir_db": sc.sir_db,
        "room": {"dims": list(sc.room.dims), "t60": sc.room.t60, "sound_speed": sc.room.sound_speed},
        "array": {
            "positions": sc.array.positions.tolist(),
            "reference_point": sc.array.reference_point.tolist(),
        },
        "sources": [
            {
                "position": np.asarray(s.position, dtype=float).tolist(),
                "location": _loc_to_dict(s.location),
                "signal": s.signal,
                "role": "target" if s.is_target else "interferer",
            }
            for s in sc.sources
        ],
    }


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"unsupported scenario format {d.get('format')!r}")
    try:
        room = RoomSpec(tuple(d["room"]["dims"]), d["room"]["t60"], d["room"]["sound_speed"])
        array = MicrophoneArray(np.array(d["array"]["positions"]), np.array(d["array"]["reference_point"]))
        sources = []
        for i, s in enumerate(d["sources"]):
            loc = s["location"]
            if s["role"] not in ("target", "interferer"):
                raise ValueError(f"source {i}: unknown role {s['role']!r}")
            sources.append(Source(
                np.array(s["position"], dtype=float),
                SourceLocation(loc["azimuth"], loc.get("elevation"), loc.get("distance")),
                s["signal"],
                s["role"] == "target",
            ))
        return Scenario(room, array, sources, d["sir_db"], d["seed"], d.get("mode", "standard"))
    except KeyError as exc:
        raise ValueError(f"scenario is missing field {exc}") from exc


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), sort_keys=True, indent=2) + "\n"


def write_scenario(path, sc: Scenario) -> None:
    Path(path).write_text(dump_scenario(sc))


def read_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(d)
