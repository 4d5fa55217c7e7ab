import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqzsim import gaussian as gs


def test_vacuum_is_identity():
    v = gs.vacuum()
    assert np.allclose(v.cov, np.eye(2))
    assert np.allclose(v.mean, 0)
    assert v.power == 0


def test_coherent_power_and_phase():
    s = gs.coherent(80e-6, phase=np.pi / 3)
    assert np.isclose(s.power, 80e-6)
    assert np.allclose(s.mean, np.sqrt(80e-6) * np.array([0.5, np.sqrt(3) / 2]))
    with pytest.raises(ValueError):
        gs.coherent(-1.0)


def test_squeeze_variance():
    s = gs.squeeze(gs.vacuum(), 0.5, 0.0)
    assert np.isclose(gs.measure_variance(s, 0.0), np.exp(-1.0))
    assert np.isclose(gs.measure_variance(s, np.pi / 2), np.exp(1.0))
    s = gs.squeeze(gs.vacuum(), 0.5, 0.7)
    v_min, v_max, th = gs.variance_extrema(s)
    assert np.isclose(v_min, np.exp(-1.0)) and np.isclose(v_max, np.exp(1.0))
    assert np.isclose(np.mod(th - 0.7, np.pi), 0.0) or np.isclose(np.mod(th - 0.7, np.pi), np.pi)


def test_squeezer_is_symplectic():
    omega = np.array([[0, 1], [-1, 0]])
    S = gs.squeezer(0.8, 0.3)
    assert np.allclose(S @ omega @ S.T, omega)
    assert np.allclose(S, gs.rotation(0.3) @ np.diag([np.exp(-0.8), np.exp(0.8)]) @ gs.rotation(-0.3))


def test_loss_channel():
    s = gs.squeeze(gs.coherent(1e-3), 1.0, 0.0)
    out = gs.loss(s, 0.5)
    assert np.allclose(out.cov, 0.5 * s.cov + 0.5 * np.eye(2))
    assert np.isclose(out.power, 0.5 * s.power)
    assert gs.loss(s, 0.0).allclose(gs.coherent(0.0))
    with pytest.raises(ValueError):
        gs.loss(s, 1.2)


def test_excess_noise_axis():
    s = gs.excess_noise(gs.vacuum(), 0.4, np.pi / 2)
    assert np.allclose(s.cov, np.diag([1.0, 1.4]))


def test_db_roundtrip():
    assert np.isclose(gs.to_db(10 ** -0.185), -1.85)
    assert np.isclose(gs.from_db(gs.to_db(0.37)), 0.37)
    with pytest.raises(ValueError):
        gs.to_db(0.0)


def test_invalid_covariance_rejected():
    with pytest.raises(ValueError):
        gs.QuadratureState(np.zeros(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        gs.QuadratureState(np.zeros(3), np.eye(2))


def test_batched_operations_match_loop():
    r = np.array([0.1, 0.5, 1.2])
    eta = np.array([0.9, 0.5, 0.3])
    batch = gs.loss(gs.squeeze(gs.vacuum(), r, 0.2), eta)
    assert batch.batch_shape == (3,)
    for k in range(3):
        single = gs.loss(gs.squeeze(gs.vacuum(), r[k], 0.2), eta[k])
        assert np.allclose(batch.cov[k], single.cov)


def test_metadata_carried():
    s = gs.coherent(1e-3, wavelength=1064e-9, linewidth=30e3)
    out = gs.loss(gs.squeeze(s, 0.3, 0.0), 0.5)
    assert out.wavelength == 1064e-9 and out.linewidth == 30e3


def rounding_floor(peak_trace, n_ops):
    """det(cov) rounding after ``n_ops`` float64 steps: about n eps trace**2, doubled twice for margin."""
    return 4 * max(n_ops, 1) * np.finfo(float).eps * peak_trace**2


angles = st.floats(-np.pi, np.pi)
rates = st.floats(0.0, 2.0)
fractions = st.floats(0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["sq", "rot", "loss", "noise"]), rates, angles, fractions), max_size=8))
def test_random_sequences_stay_physical(ops):
    s = gs.coherent(1e-4, phase=0.4)
    peak = 2.0
    for kind, r, phi, eta in ops:
        if kind == "sq":
            s = gs.squeeze(s, r, phi)
        elif kind == "rot":
            s = gs.phase_rotate(s, phi)
        elif kind == "loss":
            s = gs.loss(s, eta)
        else:
            s = gs.excess_noise(s, r, phi)
        peak = max(peak, float(np.trace(s.cov)))
    assert s.is_physical(1e-9 + rounding_floor(peak, len(ops)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), rates, angles), max_size=8))
def test_lossless_sequences_keep_purity(ops):
    s = gs.vacuum()
    peak = 2.0
    for is_squeeze, r, phi in ops:
        s = gs.squeeze(s, r, phi) if is_squeeze else gs.phase_rotate(s, phi)
        peak = max(peak, float(np.trace(s.cov)))
    assert abs(s.det() - 1.0) <= 1e-9 + rounding_floor(peak, len(ops))


@settings(max_examples=100, deadline=None)
@given(rates, angles, fractions)
def test_loss_pulls_variance_toward_vacuum(r, phi, eta):
    s = gs.squeeze(gs.vacuum(), r, phi)
    v_min, v_max, _ = gs.variance_extrema(gs.loss(s, eta))
    assert np.exp(-2 * r) - 1e-12 <= v_min <= 1 + 1e-12
    assert 1 - 1e-12 <= v_max <= np.exp(2 * r) + 1e-9
