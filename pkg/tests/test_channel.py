import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfisac.channel import (
    LOS,
    NLOS,
    PathParams,
    bistatic_doppler,
    channel_matrix,
    compute_paths,
    path_phasors,
    realize_channel,
    steering_vector,
)
from cfisac.scenario import DOWNLINK, SPEED_OF_LIGHT, UPLINK, ScenarioConfig, generate_scenario

from conftest import make_scenario
from oracles import EXAMPLE_AZIMUTH, EXAMPLE_PATH_LENGTH, EXAMPLE_TAU, channel_sum


def test_los_delay_one_microsecond():
    sc = make_scenario([((0, 0, 0), DOWNLINK), ((300, 0, 0), UPLINK)])
    (los,) = compute_paths(sc, 0, 1)
    assert los.kind == LOS and los.reflector_id is None
    assert los.tau == pytest.approx(1e-6, rel=1e-12)


def test_nlos_example_against_oracle():
    sc = make_scenario([((0, 0, 10), DOWNLINK), ((1000, 0, 10), UPLINK)],
                       [((500, 200, 10), (0, 0, 0), 0.5)])
    los, nlos = compute_paths(sc, 0, 1)
    assert nlos.kind == NLOS and nlos.reflector_id == 0
    assert nlos.tau * SPEED_OF_LIGHT == pytest.approx(EXAMPLE_PATH_LENGTH, abs=1e-6)
    assert nlos.tau == pytest.approx(EXAMPLE_TAU, rel=1e-9)
    assert nlos.phi == pytest.approx(EXAMPLE_AZIMUTH, abs=1e-9)
    assert nlos.theta == pytest.approx(0.0, abs=1e-12)
    assert nlos.nu == 0.0
    lam = SPEED_OF_LIGHT / sc.carrier_frequency
    assert abs(nlos.alpha) == pytest.approx(lam / (4 * math.pi * EXAMPLE_PATH_LENGTH) * 0.5)
    assert abs(los.alpha) == pytest.approx(lam / (4 * math.pi * 1000))


def test_steering_examples():
    assert np.allclose(steering_vector(0.7, 0.0, 4, 4), np.ones(16))
    assert np.array_equal(steering_vector(1.0, 0.3, 1, 1), np.array([1.0 + 0j]))
    assert np.allclose(steering_vector(0.0, math.pi / 2, 2, 1), [1, -1], atol=1e-15)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2),
       st.integers(1, 6), st.integers(1, 6))
def test_steering_unit_modulus(phi, theta, M, N):
    a = steering_vector(phi, theta, M, N)
    assert a.shape == (M * N,)
    assert np.all(np.abs(np.abs(a) - 1) < 1e-12)


def _path(alpha, tau, nu=0.0, phi=0.0, theta=0.0):
    return PathParams(alpha, tau, nu, phi, theta, LOS, 0, 1)


def test_channel_matrix_trivial_cases():
    f0 = 3.5e9
    tau = 1000 / f0  # integer number of carrier cycles
    assert np.allclose(channel_matrix([_path(1.0, tau)], 4, 4, f0, 1e-8), np.ones(16))
    pair = [_path(1.0, 2e-6, 5.0, 0.3, 0.2), _path(-1.0, 2e-6, 5.0, 0.3, 0.2)]
    assert np.allclose(channel_matrix(pair, 4, 4, f0, 1e-8, 7), 0)
    with pytest.raises(ValueError):
        channel_matrix([], 4, 4, f0, 1e-8)


def test_channel_matrix_against_term_by_term_oracle():
    rng = np.random.default_rng(0)
    f0, T_x = 3.5e9, 1e-8
    for trial in range(20):
        raw = [dict(alpha=complex(rng.normal(), rng.normal()), tau=rng.uniform(1e-7, 1e-5),
                    nu=rng.uniform(-500, 500), phi=rng.uniform(-math.pi, math.pi),
                    theta=rng.uniform(-1.5, 1.5)) for _ in range(3)]
        paths = [_path(**p) for p in raw]
        n = int(rng.integers(0, 10_000))
        got = channel_matrix(paths, 4, 4, f0, T_x, n)
        want = channel_sum(raw, 4, 4, f0, T_x, n)
        assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)


def test_channel_linearity():
    a = [_path(0.5, 1e-6, 10, 0.1, 0.2), _path(0.2j, 2e-6, -4, 1.0, -0.3)]
    b = [_path(-0.3, 3e-6, 0, 2.0, 0.5)]
    f0, T = 3.5e9, 1e-8
    assert np.allclose(channel_matrix(a + b, 4, 4, f0, T, 5),
                       channel_matrix(a, 4, 4, f0, T, 5) + channel_matrix(b, 4, 4, f0, T, 5), atol=1e-14)


def test_doppler_matches_numeric_path_rate():
    rng = np.random.default_rng(1)
    f0 = 3.5e9
    for _ in range(20):
        pd, pu, pr = rng.uniform(0, 1000, (3, 3))
        v = rng.uniform(-30, 30, 3)

        def length(t):
            p = pr + v * t
            return np.linalg.norm(pd - p) + np.linalg.norm(p - pu)

        h = 1e-3
        rate = (length(h) - length(-h)) / (2 * h)
        assert bistatic_doppler(pd, pu, pr, v, f0) == pytest.approx(-f0 / SPEED_OF_LIGHT * rate, rel=1e-6, abs=1e-6)


def test_doppler_drives_phase_like_delay():
    """The per-sample Doppler phasor tracks the delay phase of a moving reflector."""
    sc = make_scenario([((0, 0, 10), DOWNLINK), ((800, 100, 20), UPLINK)],
                       [((400, 300, 15), (20, -10, 0), 0.3)])
    _, p = compute_paths(sc, 0, 1)
    T = 1e-4
    moved = make_scenario([((0, 0, 10), DOWNLINK), ((800, 100, 20), UPLINK)],
                          [((400 + 20 * T, 300 - 10 * T, 15), (20, -10, 0), 0.3)])
    _, q = compute_paths(moved, 0, 1)
    delay_phase_rate = -sc.carrier_frequency * (q.tau - p.tau) / T
    assert p.nu == pytest.approx(delay_phase_rate, rel=1e-5)


def test_static_reflector_zero_doppler(small_scenario):
    paths = compute_paths(small_scenario, 0, 2)
    static = [p for p in paths if p.reflector_id == 0]
    assert static[0].nu == 0.0


def test_path_structure_and_delay_ordering():
    sc = generate_scenario(ScenarioConfig(n_static=4, n_mobile=4), 2)
    ch = realize_channel(sc)
    for (d, u), ps in ch.paths.items():
        assert ps[0].kind == LOS and all(p.kind == NLOS for p in ps[1:])
        assert len(ps) == 1 + len(sc.reflectors)
        assert all(p.tau > ps[0].tau for p in ps[1:])
        assert all(abs(p.alpha) < abs(ps[0].alpha) for p in ps[1:])


def test_reciprocity():
    sc = make_scenario([((0, 0, 10), DOWNLINK), ((700, 300, 40), UPLINK)],
                       [((200, 500, 30), (5, 5, 0), 0.4)])
    fwd = compute_paths(sc, 0, 1)
    swapped = make_scenario([((0, 0, 10), UPLINK), ((700, 300, 40), DOWNLINK)],
                            [((200, 500, 30), (5, 5, 0), 0.4)])
    back = compute_paths(swapped, 1, 0)
    for a, b in zip(fwd, back):
        assert a.tau == pytest.approx(b.tau, rel=1e-14)
        assert abs(a.alpha) == pytest.approx(abs(b.alpha), rel=1e-14)


def test_role_and_identity_errors(small_scenario):
    with pytest.raises(ValueError):
        compute_paths(small_scenario, 0, 0)
    with pytest.raises(ValueError):
        compute_paths(small_scenario, 2, 0)


def test_path_params_invariants():
    with pytest.raises(ValueError):
        PathParams(1.0, 0.0, 0.0, 0.0, 0.0, LOS, 0, 1)
    with pytest.raises(ValueError):
        PathParams(1.0, 1e-6, 0.0, 4.0, 0.0, LOS, 0, 1)
    with pytest.raises(ValueError):
        PathParams(1.0, 1e-6, 0.0, 0.0, 0.0, LOS, 0, 1, reflector_id=3)
    with pytest.raises(ValueError):
        PathParams(1.0, 1e-6, 0.0, 0.0, 0.0, NLOS, 0, 1)


def test_phasor_advances_per_sample():
    p = _path(1.0, 1e-6, nu=250.0)
    ph = path_phasors([p], 3.5e9, 1e-8, [0, 1, 2])[0]
    step = ph[1] / ph[0]
    assert np.angle(step) == pytest.approx(2 * math.pi * 250.0 * 1e-8)
    assert ph[2] / ph[1] == pytest.approx(step)


@settings(max_examples=50)
@given(st.floats(10, 1000), st.floats(10, 1000), st.floats(0, 50))
def test_nlos_longer_than_los(x, y, z):
    sc = make_scenario([((0, 0, 10), DOWNLINK), ((900, 50, 30), UPLINK)],
                       [((x, y + 1.0, z), (0, 0, 0), 0.5)])
    los, nlos = compute_paths(sc, 0, 1)
    assert nlos.tau > los.tau
