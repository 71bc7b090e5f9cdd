import numpy as np
import pytest

from spatial3d.dsp import PIPELINED, interior, stft
from spatial3d.masking import (
    METRIC_CLAMP_DB,
    apply_mask,
    ideal_ratio_mask,
    sdr,
    separate,
    sf_contrast,
    sf_mask,
    si_snr,
)


def test_irm_values():
    m = ideal_ratio_mask(np.array([[3.0, 0.0, 2j]]), np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(m, [[0.75, 0.0, 2 / (2 + 1e-8)]])
    with pytest.raises(ValueError):
        ideal_ratio_mask(np.ones((2, 3)), np.ones((3, 2)))


def test_sf_mask_is_a_logistic_in_normalised_sf():
    sf = np.linspace(-6, 6, 25)
    m = sf_mask(sf, 6)
    np.testing.assert_allclose(m, 1 / (1 + np.exp(-10 * (sf / 6 - 0.5))), atol=1e-12)
    assert sf_mask(np.array(3.0), 6) == pytest.approx(0.5)
    assert np.all(np.diff(m) > 0)
    with pytest.raises(ValueError):
        sf_mask(sf, 6, sharpness=0.0)


def _split(ref, noise):
    """Remove the component of ``noise`` along ``ref`` (both zero-mean)."""
    return noise - np.dot(noise, ref) / np.dot(ref, ref) * ref


def test_si_snr_against_orthogonal_construction(rng):
    ref = rng.standard_normal(4000)
    ref -= ref.mean()
    noise = rng.standard_normal(4000)
    noise -= noise.mean()
    noise = _split(ref, noise)
    for snr_db in (-10.0, 0.0, 17.0):
        scale = np.sqrt(np.dot(ref, ref) / np.dot(noise, noise) / 10 ** (snr_db / 10))
        est = 0.3 * ref + 0.3 * scale * noise
        assert si_snr(est, ref) == pytest.approx(snr_db, abs=1e-9)
        assert si_snr(-5.0 * est, ref) == pytest.approx(snr_db, abs=1e-9)


def test_sdr_keeps_the_mean():
    ref = np.array([1.0, 2.0, 3.0, 4.0])
    est = ref + 10.0
    assert si_snr(est, ref) == METRIC_CLAMP_DB
    # projection 13/3 ref, residual [20, 10, 0, -10] / 3: ratio 5070 / 600
    assert sdr(est, ref) == pytest.approx(10 * np.log10(5070 / 600))


def test_metric_clamps_and_errors(rng):
    ref = rng.standard_normal(100)
    assert si_snr(ref, ref) == METRIC_CLAMP_DB
    assert si_snr(np.zeros(100), ref) == -METRIC_CLAMP_DB
    with pytest.raises(ValueError):
        si_snr(ref[:50], ref)
    with pytest.raises(ValueError):
        sdr(ref, np.zeros(100))


def test_unit_mask_is_transparent(rng):
    x = rng.standard_normal(6000)
    spec = stft(x, PIPELINED)
    y = apply_mask(spec, np.ones(spec.shape), len(x))
    s = interior(PIPELINED, len(x))
    np.testing.assert_allclose(y[s], x[s], atol=1e-10)
    with pytest.raises(ValueError):
        apply_mask(spec, np.ones((2, 2)))
    with pytest.raises(ValueError):
        apply_mask(spec, np.full(spec.shape, 1.5))


def test_oracle_mask_separates_disjoint_tones():
    fs = 16000
    t = np.arange(fs) / fs
    a, b = np.sin(2 * np.pi * 500 * t), 0.8 * np.sin(2 * np.pi * 3000 * t)
    sa, sb = stft(a, PIPELINED), stft(b, PIPELINED)
    mix = stft(a + b, PIPELINED)
    res = separate(mix, ideal_ratio_mask(sa, sb), a, a + b)
    s = interior(PIPELINED, fs)
    assert si_snr(res.estimate[s], a[s]) > 30.0
    assert res.si_snr_db > 20.0
    assert res.baseline_si_snr_db == pytest.approx(10 * np.log10(1 / 0.64), abs=0.05)


def test_sf_contrast_counts_dominant_active_bins():
    st = np.array([[1.0, 1.0, 1e-6, 0.1]])
    si = np.array([[0.1, 0.2, 1e-7, 1.0]])
    sf = np.array([[5.0, 3.0, 100.0, -2.0]])
    # bin 2 is 100+ dB down and gated out
    assert sf_contrast(sf, st, si) == pytest.approx(4.0 - (-2.0))
    with pytest.raises(ValueError):
        sf_contrast(sf, st, st * 0.5)
    with pytest.raises(ValueError):
        sf_contrast(sf[:, :3], st, si)


def test_irm_limits(rng):
    st = rng.standard_normal((4, 257)) + 1j * rng.standard_normal((4, 257))
    np.testing.assert_allclose(ideal_ratio_mask(st, np.zeros_like(st)), 1.0, atol=1e-6)
    np.testing.assert_allclose(ideal_ratio_mask(st, 1j * st), 0.5, atol=1e-6)


def test_sf_mask_saturates():
    assert sf_mask(np.array(6.0), 6) > 0.99
    assert sf_mask(np.array(-6.0), 6) < 1e-6


def test_zero_mask_is_silence(rng):
    spec = stft(rng.standard_normal(4000), PIPELINED)
    np.testing.assert_array_equal(apply_mask(spec, np.zeros(spec.shape), 4000), 0.0)


def test_irm_of_a_lone_source_reconstructs_it(rng):
    x = rng.standard_normal(16000)
    spec = stft(x, PIPELINED)
    y = apply_mask(spec, ideal_ratio_mask(spec, np.zeros(spec.shape)), len(x))
    s = interior(PIPELINED, len(x))
    assert np.linalg.norm(y[s] - x[s]) / np.linalg.norm(x[s]) < 1e-3


def test_power_ratio_of_100_is_20_db(rng):
    ref = rng.standard_normal(1000)
    ref -= ref.mean()
    e = rng.standard_normal(1000)
    e -= e.mean()
    e = _split(ref, e)
    e *= np.sqrt(np.dot(ref, ref) / np.dot(e, e) / 100.0)
    assert si_snr(ref + e, ref) == pytest.approx(20.0, abs=1e-9)


def test_sf_contrast_symmetries(rng):
    st = rng.uniform(0.1, 1, (6, 257))
    si = rng.uniform(0.1, 1, (6, 257))
    assert sf_contrast(np.full(st.shape, 2.5), st, si) == pytest.approx(0.0, abs=1e-12)
    sf = rng.standard_normal(st.shape)
    assert sf_contrast(sf, si, st) == pytest.approx(-sf_contrast(sf, st, si))
