"""Per-scenario comparison of the mixture, the IRM and SF masks from 1D and 3D TPDs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dsp import PIPELINED, StftConfig, stft
from .features import ipd, spatial_feature
from .geometry import DEFAULT_PAIRS, tpd_1d, tpd_3d
from .masking import apply_mask, ideal_ratio_mask, sdr, sf_contrast, sf_mask, si_snr
from .room import Scenario, render_scenario
from .signals import resolve_signal

METHODS = ("mixture", "irm", "sf1d", "sf3d")
COLUMNS = (
    ["scenario", "sir_db", "t60", "d_azimuth_deg", "d_distance_m"]
    + [f"{m}_{k}" for m in METHODS for k in ("si_snr", "sdr")]
    + ["contrast_1d", "contrast_3d"]
)


@dataclass(frozen=True)
class EvalConfig:
    stft: StftConfig = PIPELINED
    pairs: tuple = DEFAULT_PAIRS
    sharpness: float = 10.0
    threshold: float = 0.5
    duration: float = 3.0
    sample_rate: int = 16000
    reference_channel: int = 0
    fractional: str = "round"


def evaluate_scenario(sc: Scenario, clean=None, cfg: EvalConfig = EvalConfig(), rendered=None) -> dict:
    """Metrics of one scene; ``clean`` defaults to the scene's synthetic talkers."""
    if rendered is None:
        if clean is None:
            clean = [resolve_signal(s.signal, cfg.duration, cfg.sample_rate) for s in sc.sources]
        rendered = render_scenario(sc, clean, cfg.sample_rate, cfg.fractional,
                                   reference_channel=cfg.reference_channel)
    mixture, images = rendered
    t = sc.target_index
    ref_ch = cfg.reference_channel
    target_img = images[t][ref_ch]
    interf_img = sum(img[ref_ch] for i, img in enumerate(images) if i != t)

    mix_spec = stft(mixture, cfg.stft, cfg.sample_rate)
    ref_spec = mix_spec.channel(ref_ch)
    tgt_spec = stft(target_img, cfg.stft, cfg.sample_rate)
    itf_spec = stft(interf_img, cfg.stft, cfg.sample_rate)

    phase = ipd(mix_spec, cfg.pairs)
    loc = sc.target.location
    n_bins = cfg.stft.n_bins
    fs = cfg.sample_rate
    c = sc.room.sound_speed
    sf1 = spatial_feature(phase, tpd_1d(loc.azimuth, cfg.pairs, sc.array, n_bins, fs, c))
    sf3 = spatial_feature(phase, tpd_3d(loc, cfg.pairs, sc.array, n_bins, fs, c))
    n_pairs = len(cfg.pairs)

    n = len(target_img)
    estimates = {
        "mixture": mixture[ref_ch],
        "irm": apply_mask(ref_spec, ideal_ratio_mask(tgt_spec, itf_spec), n),
        "sf1d": apply_mask(ref_spec, sf_mask(sf1, n_pairs, cfg.sharpness, cfg.threshold), n),
        "sf3d": apply_mask(ref_spec, sf_mask(sf3, n_pairs, cfg.sharpness, cfg.threshold), n),
    }
    others = [s.location for s in sc.interferers]
    row = {
        "scenario": sc.seed,
        "sir_db": sc.sir_db,
        "t60": sc.room.t60,
        "d_azimuth_deg": float(min(abs(np.degrees(o.azimuth - loc.azimuth)) for o in others)),
        "d_distance_m": float(min(abs(o.distance - loc.distance) for o in others)),
    }
    for name, est in estimates.items():
        row[f"{name}_si_snr"] = si_snr(est, target_img)
        row[f"{name}_sdr"] = sdr(est, target_img)
    row["contrast_1d"] = sf_contrast(sf1, tgt_spec, itf_spec)
    row["contrast_3d"] = sf_contrast(sf3, tgt_spec, itf_spec)
    return row


def summarize(rows) -> dict:
    if not rows:
        raise ValueError("no scenarios to summarise")
    out = {f"median_{k}": float(np.median([r[k] for r in rows])) for k in COLUMNS[5:]}
    out["n"] = len(rows)
    out["frac_contrast_3d_gt_1d"] = float(np.mean([r["contrast_3d"] > r["contrast_1d"] for r in rows]))
    out["frac_irm_gt_mixture"] = float(np.mean([r["irm_si_snr"] > r["mixture_si_snr"] for r in rows]))
    return out


def format_table(rows, delimiter: str = "\t") -> str:
    """Rows sorted by scenario id as delimited text with a header line."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in sorted(rows, key=lambda r: r["scenario"]):
        w.writerow([r["scenario"]] + [f"{r[k]:.6f}" for k in COLUMNS[1:]])
    return buf.getvalue()
