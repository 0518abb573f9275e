import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from feprnn.errors import DomainError
from feprnn.kinematics import sym_to_voigt
from feprnn.pathgen import CreepProtocol, CsrProtocol, LoadPath, PathSpec, creep_path, protocol_end_time, sample_paths
from oracles import FROZEN, ramp


def test_deterministic():
    a = sample_paths(PathSpec(count=5, steps=20, seed=9, dt_bounds=(1e-3, 1e3)))
    b = sample_paths(PathSpec(count=5, steps=20, seed=9, dt_bounds=(1e-3, 1e3)))
    for p, q in zip(a, b):
        assert p.U.tobytes() == q.U.tobytes() and p.dt.tobytes() == q.dt.tobytes()


def test_zero_amplitude():
    for p in sample_paths(PathSpec(count=3, steps=10, amplitude=0.0)):
        assert np.array_equal(p.U, np.broadcast_to(np.eye(3), p.U.shape))


def test_log_uniform_dt_ks():
    ps = sample_paths(PathSpec(count=1000, steps=1, seed=2, dt_bounds=(1e-3, 1e3)))
    x = np.log10([p.dt[0] for p in ps])
    assert stats.kstest(x, stats.uniform(loc=-3, scale=6).cdf).pvalue > 0.05


@given(st.integers(0, 2**31 - 1), st.integers(2, 40))
def test_proportional_spd_and_capped(seed, steps):
    spec = PathSpec(count=2, steps=steps, seed=seed)
    for p in sample_paths(spec):
        assert np.array_equal(p.U[0], np.eye(3))
        assert np.all(np.linalg.eigvalsh(p.U) > 0.0)
        assert np.max(np.abs(p.U - np.eye(3))) <= spec.amplitude * (1 + 1e-12)
        dev = sym_to_voigt(p.U - np.eye(3))
        sv = np.linalg.svd(dev, compute_uv=False)
        assert sv[1] < 1e-10 * sv[0]


def test_reversals_occur():
    ps = sample_paths(PathSpec(count=20, steps=60, seed=0))
    flips = 0
    for p in ps:
        m = sym_to_voigt(p.U - np.eye(3)) @ sym_to_voigt(p.U[-1] - np.eye(3))
        flips += np.any(np.diff(np.sign(np.diff(m))) != 0)
    assert flips > 0


def test_invalid_specs():
    with pytest.raises(DomainError):
        PathSpec(dt_bounds=(0.0, 1.0))
    with pytest.raises(DomainError):
        PathSpec(amplitude=-1.0)
    with pytest.raises(DomainError):
        LoadPath(np.stack([np.eye(3)] * 2), np.array([-1.0]))
    with pytest.raises(DomainError):
        CreepProtocol(97.0, 0.0, 10.0)
    with pytest.raises(DomainError):
        CsrProtocol(0.0)


def test_creep_ramp_rule():
    prev, rate, dt, cap, expected = FROZEN["ramp_cap"]
    proto = creep_path(cap, rate, 100.0)
    assert proto.next_stress(prev, dt) == expected == ramp(prev, rate, dt, cap)
    assert proto.next_stress(0.0, 0.5) == 5.0
    assert protocol_end_time(proto) == pytest.approx(9.7 + 100.0)
    jump = creep_path(290.0, np.inf, 10.0)
    assert jump.next_stress(0.0, 1e-3) == 290.0 and jump.ramp_time == 0.0


def test_csr_protocol():
    p = CsrProtocol(1e-4, 0.03)
    assert p.end_time == pytest.approx(300.0) and p.strain(150.0) == pytest.approx(0.015)
    assert protocol_end_time(CsrProtocol(0.0, duration=50.0)) == 50.0
