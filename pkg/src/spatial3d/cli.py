"""Command-line front-end: ``spatial3d {simulate,extract,evaluate,render}``.

Configuration is resolved from built-in defaults, then the preset, then a
JSON config file (``--config`` or ``$SPATIAL3D_CONFIG``), then command-line
flags. The resolved config, or its SHA-256 digest, is written into every
output.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .dsp import ALL_IN_ONE, PIPELINED, StftConfig
from .evaluation import EvalConfig, evaluate_scenario, format_table, summarize
from .features import extract_features
from .geometry import DEFAULT_PAIRS, as_pairs, parse_pairs
from .room import (
    CLOSE_AZIMUTH_EVAL,
    SamplingError,
    SamplingRanges,
    render_scenario,
    sample_scenario,
)
from .signals import resolve_signal

log = logging.getLogger("spatial3d")

CONFIG_ENV = "SPATIAL3D_CONFIG"
TPD_CONVENTION = "ipd=angle(Y[m1])-angle(Y[m2]); tpd3d=2*pi*f*(|s-m2|-|s-m1|)/c; tpd1d=2*pi*f*(x_m1-x_m2)*cos(az)/c"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

PRESETS = {
    "pipelined": (PIPELINED, SamplingRanges()),
    "all-in-one": (ALL_IN_ONE, SamplingRanges()),
    "close-azimuth": (PIPELINED, CLOSE_AZIMUTH_EVAL),
}

# value -> colour stops of the heatmap, linearly interpolated per channel
COLORMAP = (
    (0.00, (0, 0, 64)),
    (0.25, (0, 96, 192)),
    (0.50, (32, 192, 160)),
    (0.75, (240, 200, 40)),
    (1.00, (255, 255, 224)),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def parse_seeds(text: str) -> list[int]:
    """``"7"``, ``"0..9"`` (inclusive) or ``"1,4,9"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = _int(lo), _int(hi)
            if hi < lo:
                raise UsageError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(_int(part))
    if not seeds:
        raise UsageError("no seeds given")
    return seeds


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"bad seed {text!r}") from None


def _pairs_text(pairs) -> str:
    return ",".join(f"{p.m1}-{p.m2}" for p in as_pairs(pairs))


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(args) -> dict:
    """Merge defaults, preset, config file and flags into one plain dict."""
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    file_cfg = {}
    if path:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    preset = getattr(args, "preset", None) or file_cfg.get("preset", "pipelined")
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}")
    stft_cfg, ranges = PRESETS[preset]
    cfg = {
        "preset": preset,
        "stft": stft_cfg.as_dict(),
        "pairs": _pairs_text(DEFAULT_PAIRS),
        "tpd": "3d",
        "tpd_convention": TPD_CONVENTION,
        "sample_rate": 16000,
        "duration": 3.0,
        "sharpness": 10.0,
        "threshold": 0.5,
        "fractional": "round",
        "reference_channel": 0,
        "sampling": ranges.as_dict(),
    }
    file_over = {k: v for k, v in file_cfg.items() if k != "preset"}
    if getattr(args, "preset", None):
        # an explicit preset beats the file's front-end and sampling choices
        file_over.pop("stft", None)
        file_over.pop("sampling", None)
    cfg = _merge(cfg, file_over)
    if getattr(args, "tpd", None):
        cfg["tpd"] = args.tpd
    if getattr(args, "pairs", None):
        cfg["pairs"] = args.pairs
    # normalise and validate
    cfg["pairs"] = _pairs_text(parse_pairs(cfg["pairs"]))
    if cfg["tpd"] not in ("1d", "3d"):
        raise UsageError(f"unknown TPD mode {cfg['tpd']!r}")
    stft_from(cfg)
    SamplingRanges.from_dict(cfg["sampling"])
    return cfg


def stft_from(cfg: dict) -> StftConfig:
    return StftConfig(**cfg["stft"])


def digest(cfg: dict) -> str:
    return fileio.config_digest(cfg)


def feature_config(cfg: dict) -> dict:
    """The part of the run config a feature file depends on."""
    keys = ("stft", "pairs", "tpd", "tpd_convention", "sample_rate", "reference_channel")
    return {k: cfg[k] for k in keys}


def _eval_config(cfg: dict) -> EvalConfig:
    return EvalConfig(
        stft=stft_from(cfg),
        pairs=tuple((p.m1, p.m2) for p in parse_pairs(cfg["pairs"])),
        sharpness=cfg["sharpness"],
        threshold=cfg["threshold"],
        duration=cfg["duration"],
        sample_rate=cfg["sample_rate"],
        reference_channel=cfg["reference_channel"],
        fractional=cfg["fractional"],
    )


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    return x[:n] if len(x) >= n else np.pad(x, (0, n - len(x)))


def _load_clean(input_dir: Path | None, sc, cfg) -> tuple[list[np.ndarray], list[str]]:
    fs, n = cfg["sample_rate"], int(round(cfg["duration"] * cfg["sample_rate"]))
    if input_dir is None:
        return [resolve_signal(s.signal, cfg["duration"], fs) for s in sc.sources], [s.signal for s in sc.sources]
    files = sorted(input_dir.glob("*.wav"))
    if not files:
        raise ValueError(f"no .wav files in {input_dir}")
    rng = np.random.default_rng([sc.seed, 7])
    picks = rng.choice(len(files), size=len(sc.sources), replace=len(files) < len(sc.sources))
    signals, refs = [], []
    for k in picks:
        x, rate = fileio.read_wav(files[k])
        if rate != fs:
            raise ValueError(f"{files[k]}: sample rate {rate} Hz, expected {fs} Hz")
        signals.append(_fit_length(np.asarray(x[0], dtype=float), n))
        refs.append(f"file:{files[k].name}")
    return signals, refs


def _simulate_one(seed: int, cfg: dict, input_dir: Path | None, dest: Path, run_digest: str) -> None:
    ranges = SamplingRanges.from_dict(cfg["sampling"])
    sc = sample_scenario(seed, ranges)
    clean, refs = _load_clean(input_dir, sc, cfg)
    sc = replace(sc, sources=[replace(s, signal=r) for s, r in zip(sc.sources, refs)])
    mixture, images = render_scenario(sc, clean, cfg["sample_rate"], cfg["fractional"],
                                      reference_channel=cfg["reference_channel"])
    dest.mkdir(parents=True)
    doc = fileio.scenario_to_dict(sc)
    doc["provenance"] = {"digest": run_digest, "config": cfg}
    (dest / "scenario.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    comment = f"spatial3d config-digest {run_digest}"
    fileio.write_wav(dest / "mixture.wav", mixture, cfg["sample_rate"], comment=comment)
    for i, img in enumerate(images):
        fileio.write_wav(dest / f"source_{i}.wav", img, cfg["sample_rate"], comment=comment)


def cmd_simulate(args, cfg) -> int:
    input_dir = None
    if not args.synthetic:
        if args.input is None:
            raise UsageError("simulate needs --input DIR or --synthetic")
        input_dir = Path(args.input)
        if not input_dir.is_dir():
            raise FileNotFoundError(f"input directory {input_dir} does not exist")
        if not any(input_dir.glob("*.wav")):
            raise ValueError(f"no .wav files in {input_dir}")
    seeds = parse_seeds(args.seeds)
    out = Path(args.out)
    targets = [out / f"scene_{s:05d}" for s in seeds]
    clash = [t for t in targets if t.exists()]
    if clash:
        raise ValueError(f"{clash[0]} already exists")
    run_digest = digest(cfg)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        for s in seeds:
            log.info("simulating seed %d", s)
            _simulate_one(s, cfg, input_dir, staging / f"scene_{s:05d}", run_digest)
        for s, t in zip(seeds, targets):
            (staging / t.name).rename(t)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(f"wrote {len(seeds)} scenario(s) to {out} (config {run_digest[:12]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def _read_scene(scene_dir: Path):
    path = scene_dir / "scenario.json"
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    return fileio.read_scenario(path)


def cmd_extract(args, cfg) -> int:
    scene_dir = Path(args.scenario)
    sc = _read_scene(scene_dir)
    mixture, rate = fileio.read_wav(scene_dir / "mixture.wav")
    if rate != cfg["sample_rate"]:
        raise ValueError(f"{scene_dir / 'mixture.wav'}: sample rate {rate} Hz, config says {cfg['sample_rate']} Hz")
    fcfg = feature_config(cfg)
    want = fileio.config_digest(fcfg)
    out = Path(args.out)
    if out.exists() and not args.force:
        have = fileio.read_feature_header(out).get("digest")
        if have != want:
            raise ValueError(f"{out} holds features with config digest {have}, current config is {want}; use --force")
    fm = extract_features(
        np.asarray(mixture, dtype=float), sc.array, sc.target.location, stft_from(cfg),
        parse_pairs(cfg["pairs"]), cfg["tpd"], cfg["sample_rate"], sc.room.sound_speed,
        cfg["reference_channel"],
    )
    fileio.write_features(out, fm, fcfg)
    print(f"wrote {fm.layout} features {fm.data.shape[0]}x{fm.data.shape[1]} to {out} (config {want[:12]})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _eval_dir(scene_dir: str, cfg: dict) -> dict:
    d = Path(scene_dir)
    sc = _read_scene(d)
    mixture, _ = fileio.read_wav(d / "mixture.wav")
    images = [np.asarray(fileio.read_wav(d / f"source_{i}.wav")[0], dtype=float) for i in range(len(sc.sources))]
    return evaluate_scenario(sc, cfg=_eval_config(cfg), rendered=(np.asarray(mixture, dtype=float), images))


def _eval_seed(seed: int, cfg: dict) -> dict:
    sc = sample_scenario(seed, SamplingRanges.from_dict(cfg["sampling"]))
    return evaluate_scenario(sc, cfg=_eval_config(cfg))


def cmd_evaluate(args, cfg) -> int:
    if args.scenarios and args.seeds:
        raise UsageError("give scenario directories or --seeds, not both")
    if args.seeds:
        jobs = [(_eval_seed, s) for s in parse_seeds(args.seeds)]
    else:
        jobs = [(_eval_dir, d) for d in args.scenarios]
    if not jobs:
        raise ValueError("nothing to evaluate: no scenario directories or seeds")
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_call, [(f, a, cfg) for f, a in jobs]))
    else:
        rows = [_call((f, a, cfg)) for f, a in jobs]
    summary = summarize(rows)
    run_digest = digest(cfg)
    table = f"# spatial3d config-digest {run_digest}\n" + format_table(rows)
    summary_doc = {"digest": run_digest, "config": cfg, "summary": summary}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table)
        out.with_suffix(".summary.json").write_text(json.dumps(summary_doc, sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write(table)
    stream = sys.stdout if args.out else sys.stderr
    for k in sorted(summary):
        v = summary[k]
        print(f"{k}\t{v:.6f}" if isinstance(v, float) else f"{k}\t{v}", file=stream)
    return EXIT_OK


def _call(job):
    f, a, cfg = job
    return f(a, cfg)


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


def colorize(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to uint8 RGB through :data:`COLORMAP`."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    xs = [s[0] for s in COLORMAP]
    rgb = np.stack([np.interp(v, xs, [s[1][c] for s in COLORMAP]) for c in range(3)], axis=-1)
    return np.rint(rgb).astype(np.uint8)


def heatmap(matrix: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    """``(T, F)`` matrix to an ``(F, T, 3)`` image; time runs right, frequency up."""
    m = np.asarray(matrix, dtype=float)
    span = vmax - vmin
    v = np.zeros_like(m) if span <= 0 else (m - vmin) / span
    return colorize(v.T[::-1])


def write_ppm(path, image: np.ndarray, comment: str = "") -> None:
    h, w, _ = image.shape
    head = "P6\n" + "".join(f"# {line}\n" for line in comment.splitlines()) + f"{w} {h}\n255\n"
    Path(path).write_bytes(head.encode("ascii") + np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path) -> tuple[np.ndarray, list[str]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6\n"):
        raise ValueError(f"{path}: not a binary PPM (byte 0)")
    pos, comments, fields = 3, [], []
    while len(fields) < 3:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            fields.extend(int(t) for t in line.split())
    w, h, _ = fields
    return np.frombuffer(raw, np.uint8, w * h * 3, pos).reshape(h, w, 3), comments


def cmd_render(args, cfg) -> int:
    panels, headers = [], []
    for path in args.features:
        header = fileio.read_feature_header(path)
        fm = fileio.read_features(path)
        try:
            panels.append(fm.block(args.block))
        except KeyError as exc:
            raise ValueError(f"{path}: {exc.args[0]}") from exc
        headers.append(header)
    if args.vmin is not None and args.vmax is not None:
        vmin, vmax = args.vmin, args.vmax
    elif args.block == "SF":
        # SF lies in [-P, P] for P pairs
        n_pairs = max(len(parse_pairs(h.get("config", {}).get("pairs", _pairs_text(DEFAULT_PAIRS)))) for h in headers)
        vmin, vmax = -float(n_pairs), float(n_pairs)
    else:
        vmin = min(float(p.min()) for p in panels)
        vmax = max(float(p.max()) for p in panels)
    images = [heatmap(p, vmin, vmax) for p in panels]
    height = max(im.shape[0] for im in images)
    gap = np.full((height, 4, 3), 255, np.uint8)
    row = []
    for i, im in enumerate(images):
        if im.shape[0] < height:
            im = np.concatenate([np.full((height - im.shape[0], im.shape[1], 3), 255, np.uint8), im])
        row.extend([gap, im] if i else [im])
    image = np.concatenate(row, axis=1)
    comment = "\n".join(
        [f"spatial3d block={args.block} vmin={vmin:.6g} vmax={vmax:.6g}"]
        + [f"panel {i} config-digest {h.get('digest')}" for i, h in enumerate(headers)]
    )
    write_ppm(args.out, image, comment)
    print(f"wrote {image.shape[1]}x{image.shape[0]} image to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spatial3d", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--tpd", choices=("1d", "3d"))
        sp.add_argument("--pairs", help='mic pairs, e.g. "0-7,1-6,2-5,3-4,4-7,0-3"')

    sp = sub.add_parser("simulate", help="render seeded room scenarios to WAV")
    common(sp)
    seeds = sp.add_mutually_exclusive_group(required=True)
    seeds.add_argument("--seeds", help='"0..9", "3" or "1,4,9"')
    seeds.add_argument("--seed", type=int)
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--input", help="directory of clean-speech WAV files")
    src.add_argument("--synthetic", action="store_true", help="use seeded synthetic talkers")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("extract", help="compute the feature matrix of one scenario")
    common(sp)
    sp.add_argument("scenario", help="scenario directory written by simulate")
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true", help="overwrite features made with another config")

    sp = sub.add_parser("evaluate", help="compare mixture, IRM and 1D/3D SF masks")
    common(sp)
    sp.add_argument("scenarios", nargs="*", help="scenario directories")
    seeds = sp.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", help="simulate these seeds on the fly instead")
    seeds.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", help="results table path (default: stdout)")

    sp = sub.add_parser("render", help="draw feature blocks as a PPM heatmap")
    common(sp)
    sp.add_argument("features", nargs="+", help="feature files; several are drawn side by side")
    sp.add_argument("--block", default="SF")
    sp.add_argument("--vmin", type=float)
    sp.add_argument("--vmax", type=float)
    sp.add_argument("--out", required=True)
    return p


COMMANDS = {"simulate": cmd_simulate, "extract": cmd_extract, "evaluate": cmd_evaluate, "render": cmd_render}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "seed", None) is not None:
        args.seeds = str(args.seed)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"spatial3d: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError, SamplingError) as exc:
        print(f"spatial3d: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"spatial3d: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
