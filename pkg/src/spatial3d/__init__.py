"""Location-guided spatial features for target speech extraction with a linear mic array."""

from .dsp import (
    ALL_IN_ONE,
    PIPELINED,
    StftConfig,
    istft,
    lfb,
    lps,
    mel_filterbank,
    stft,
)
from .features import (
    FeatureMatrix,
    assemble_all_in_one,
    assemble_pipelined,
    extract_features,
    ipd,
    spatial_feature,
)
from .geometry import (
    DEFAULT_PAIRS,
    MicPair,
    MicrophoneArray,
    SourceLocation,
    default_array,
    linear_array,
    tpd_1d,
    tpd_3d,
)
from .masking import ideal_ratio_mask, sdr, sf_contrast, sf_mask, si_snr
from .room import RoomSpec, Scenario, ism_rirs, render_scenario, sample_scenario

__version__ = "0.1.0"

__all__ = [
    "ALL_IN_ONE", "PIPELINED", "StftConfig", "istft", "lfb", "lps", "mel_filterbank", "stft",
    "FeatureMatrix", "assemble_all_in_one", "assemble_pipelined", "extract_features", "ipd",
    "spatial_feature", "DEFAULT_PAIRS", "MicPair", "MicrophoneArray", "SourceLocation",
    "linear_array", "default_array", "tpd_1d", "tpd_3d", "ideal_ratio_mask", "sdr", "sf_contrast",
    "sf_mask", "si_snr", "RoomSpec", "Scenario", "ism_rirs", "render_scenario", "sample_scenario",
]
