import itertools
import math

import numpy as np
import pytest

from spatial3d.geometry import default_array
from spatial3d.room import (
    CLOSE_AZIMUTH_EVAL,
    RoomSpec,
    SamplingRanges,
    Scenario,
    Source,
    decay_time,
    image_sources,
    ism_rir,
    ism_rirs,
    reflection_coeff,
    render_scenario,
    sabine_absorption,
    sample_scenario,
    schroeder_edc,
)
from spatial3d.signals import resolve_signal, synthetic_speech

ROOM = RoomSpec((5.0, 4.0, 3.0), 0.4)


def test_sabine_absorption():
    # V = 60, S = 94; 24 ln 10 / 343 = 0.1611138
    assert sabine_absorption(ROOM) == pytest.approx(0.1611138 * 60 / (94 * 0.4), rel=1e-6)
    assert reflection_coeff(ROOM) == pytest.approx(math.sqrt(1 - sabine_absorption(ROOM)))
    with pytest.raises(ValueError, match="too small"):
        reflection_coeff(RoomSpec((2.0, 2.0, 2.0), 0.05))


def brute_force_images(room, src, order):
    """Textbook enumeration: x = (1 - 2u) s + 2 n L with |n - u| + |n| wall hits per axis."""
    out = {}
    rng = range(-order - 1, order + 2)
    for n in itertools.product(rng, repeat=3):
        for u in itertools.product((0, 1), repeat=3):
            hits = sum(abs(n[i] - u[i]) + abs(n[i]) for i in range(3))
            if hits > order:
                continue
            p = tuple(round((1 - 2 * u[i]) * src[i] + 2 * n[i] * room.dims[i], 9) for i in range(3))
            out[p] = hits
    return out


@pytest.mark.parametrize("order", [0, 1, 2, 4])
def test_image_sources_match_enumeration(order):
    src = np.array([1.2, 2.9, 1.4])
    pos, bounces = image_sources(ROOM, src, order)
    got = {tuple(np.round(p, 9)): int(b) for p, b in zip(pos, bounces)}
    assert got == brute_force_images(ROOM, src, order)
    if order == 1:
        assert len(got) == 7


def test_direct_path_only_response():
    src, mic = np.array([1.0, 1.0, 1.5]), np.array([3.0, 2.5, 1.2])
    r = np.linalg.norm(src - mic)
    h = ism_rir(ROOM, src, mic, max_order=0, length=400)
    k = int(round(r * 16000 / 343.0))
    assert np.count_nonzero(h) == 1
    assert h[k] == pytest.approx(1 / (4 * np.pi * r))


def test_sinc_delay_is_band_limited_and_centred():
    src, mic = np.array([1.0, 1.0, 1.5]), np.array([3.0, 2.5, 1.2])
    r = np.linalg.norm(src - mic)
    h = ism_rir(ROOM, src, mic, max_order=0, fractional="sinc", length=400)
    d = r * 16000 / 343.0
    assert np.count_nonzero(h) == 8
    assert h.sum() == pytest.approx(1 / (4 * np.pi * r), rel=0.02)
    centroid = np.sum(np.arange(400) * h) / h.sum()
    assert centroid == pytest.approx(d, abs=0.05)


def test_rir_validation():
    with pytest.raises(ValueError):
        ism_rirs(ROOM, [6.0, 1.0, 1.0], [[1.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        ism_rirs(ROOM, [1.0, 1.0, 1.0], [[1.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        ism_rirs(ROOM, [1.0, 1.0, 1.0], [[2.0, 1.0, 1.0]], fractional="cubic")


def test_edc_and_decay_time_of_an_exact_exponential():
    fs = 16000
    t = np.arange(2 * fs) / fs
    h = 10.0 ** (-3.0 * t / 0.5)  # energy falls 60 dB in 0.5 s
    edc = schroeder_edc(h)
    assert edc[0] == 0.0
    assert edc[fs // 4] == pytest.approx(-30.0, abs=0.01)
    assert decay_time(h, fs) == pytest.approx(0.5, rel=1e-3)
    with pytest.raises(ValueError):
        schroeder_edc(np.zeros(10))


@pytest.mark.parametrize("t60", [0.3, 0.6])
def test_reverberant_rir_decay(t60):
    room = RoomSpec((6.0, 5.0, 3.0), t60)
    h = ism_rir(room, [1.5, 1.2, 1.6], [4.1, 3.3, 1.3])
    assert decay_time(h, 16000) == pytest.approx(t60, rel=0.25)


def test_sampling_is_deterministic_and_valid():
    a, b = sample_scenario(11), sample_scenario(11)
    assert a.room == b.room and a.sir_db == b.sir_db
    np.testing.assert_array_equal(a.array.positions, b.array.positions)
    for sa, sb in zip(a.sources, b.sources):
        np.testing.assert_array_equal(sa.position, sb.position)
    assert sample_scenario(12).room != a.room
    for seed in range(20):
        sc = sample_scenario(seed)
        assert sum(s.is_target for s in sc.sources) == 1
        assert -6 <= sc.sir_db <= 6 and 0.05 <= sc.room.t60 <= 0.7
        for s in sc.sources:
            assert sc.room.contains(s.position, 0.3)
            assert 0.5 <= s.location.distance <= 4.0


def test_close_azimuth_sampling_constraints():
    for seed in range(20):
        sc = sample_scenario(seed, CLOSE_AZIMUTH_EVAL)
        tgt = sc.target.location
        assert sc.sir_db == 0.0 and 0.1 <= sc.room.t60 <= 0.4
        assert 0.5 <= tgt.distance <= 2.0
        for o in sc.interferers:
            assert abs(np.degrees(o.location.azimuth - tgt.azimuth)) < 15
            assert abs(o.location.distance - tgt.distance) >= 1.0


def test_sampling_ranges_dict_round_trip():
    d = CLOSE_AZIMUTH_EVAL.as_dict()
    assert SamplingRanges.from_dict(d) == CLOSE_AZIMUTH_EVAL
    with pytest.raises(ValueError):
        SamplingRanges.from_dict({"nonsense": 1})
    with pytest.raises(ValueError):
        SamplingRanges(n_interferers=4)


def test_scenario_validation():
    sc = sample_scenario(3)
    with pytest.raises(ValueError):
        Scenario(sc.room, sc.array, [Source(s.position, s.location, s.signal, False) for s in sc.sources], 0.0, 3)
    far = default_array(origin=(0.3, 2.0, 1.2))
    with pytest.raises(ValueError):
        Scenario(sc.room, far, sc.sources, 0.0, 3)


def test_render_hits_the_requested_sir():
    sc = sample_scenario(5)
    clean = [resolve_signal(s.signal, 1.0) for s in sc.sources]
    mix, images = render_scenario(sc, clean)
    assert mix.shape == images[0].shape == (8, 16000)
    np.testing.assert_allclose(mix, images[0] + images[1])
    ratio = 10 * np.log10(np.mean(images[0][0] ** 2) / np.mean(images[1][0] ** 2))
    assert ratio == pytest.approx(sc.sir_db, abs=1e-9)
    with pytest.raises(ValueError):
        render_scenario(sc, clean[:1])


def test_synthetic_speech_is_seeded():
    a = synthetic_speech(4, 1.0)
    np.testing.assert_array_equal(a, synthetic_speech(4, 1.0))
    assert len(a) == 16000
    assert np.sqrt(np.mean(a**2)) == pytest.approx(0.1)
    assert not np.array_equal(a, synthetic_speech(5, 1.0))
    with pytest.raises(ValueError):
        resolve_signal("file:foo.wav")


def test_one_metre_direct_tap():
    room = RoomSpec((6.0, 5.0, 3.0), 0.3)
    h = ism_rir(room, [2.0, 2.0, 1.5], [3.0, 2.0, 1.5], max_order=0, length=200)
    assert np.flatnonzero(h).tolist() == [round(16000 / 343.0)] == [47]
    assert h[47] == pytest.approx(1 / (4 * np.pi))


def test_mirrored_geometry_gives_the_same_response():
    room = RoomSpec((5.0, 4.0, 3.0), 0.4)
    src, mic = np.array([1.2, 1.1, 1.4]), np.array([3.1, 2.6, 1.2])

    def flip(p):
        return np.array([room.dims[0] - p[0], p[1], p[2]])

    np.testing.assert_allclose(ism_rir(room, src, mic), ism_rir(room, flip(src), flip(mic)), atol=1e-12)


def test_reflection_coefficient_examples():
    room = RoomSpec((5.0, 4.0, 3.0), 0.3)
    assert sabine_absorption(room) == pytest.approx(0.343, abs=1e-3)
    assert reflection_coeff(room) == pytest.approx(0.811, abs=1e-3)
    assert reflection_coeff(RoomSpec((5.0, 4.0, 3.0), 1e4)) == pytest.approx(1.0, abs=1e-4)


def test_t60_of_a_small_room_and_its_tail():
    room = RoomSpec((5.0, 4.0, 3.0), 0.3)
    h = ism_rir(room, [1.3, 1.7, 1.5], [3.4, 2.2, 1.4])
    assert decay_time(h, 16000) == pytest.approx(0.3, rel=0.25)
    cut = int(1.5 * 0.3 * 16000)
    assert np.sum(h[cut:] ** 2) < 0.01 * np.sum(h**2)


def _scene(sir_db):
    sc = sample_scenario(8)
    return Scenario(sc.room, sc.array, sc.sources, sir_db, sc.seed)


@pytest.mark.parametrize("sir_db, tol", [(0.0, 1e-6), (6.0, 0.01)])
def test_render_sir_examples(sir_db, tol):
    sc = _scene(sir_db)
    clean = [resolve_signal(s.signal, 0.5) for s in sc.sources]
    _, images = render_scenario(sc, clean)
    ratio = 10 * np.log10(np.mean(images[0][0] ** 2) / np.mean(images[1][0] ** 2))
    assert ratio == pytest.approx(sir_db, abs=tol)


def test_single_source_render_is_its_own_image():
    sc = sample_scenario(8)
    alone = Scenario(sc.room, sc.array, [sc.target], 0.0, sc.seed)
    mix, images = render_scenario(alone, [resolve_signal(sc.target.signal, 0.5)])
    np.testing.assert_array_equal(mix, images[0])


def test_render_is_linear_in_the_clean_signals():
    sc = _scene(3.0)
    clean = [resolve_signal(s.signal, 0.5) for s in sc.sources]
    mix, _ = render_scenario(sc, clean)
    mix2, _ = render_scenario(sc, [2.5 * c for c in clean])
    np.testing.assert_allclose(mix2, 2.5 * mix, rtol=1e-9, atol=1e-12)


def test_thousand_seeds_stay_in_range():
    r = SamplingRanges()
    for seed in range(1000):
        sc = sample_scenario(seed)
        assert all(lo <= d <= hi for d, lo, hi in zip(sc.room.dims, r.room_min, r.room_max))
        assert r.t60[0] <= sc.room.t60 <= r.t60[1] and r.sir_db[0] <= sc.sir_db <= r.sir_db[1]
        for s in sc.sources:
            assert r.distance[0] <= s.location.distance <= r.distance[1]
            assert sc.room.contains(s.position, r.wall_margin)
