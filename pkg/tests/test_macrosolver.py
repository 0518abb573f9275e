import dataclasses

import numpy as np
import pytest

from feprnn.errors import DomainError
from feprnn.kinematics import off_axis_frame
from feprnn.macrosolver import (
    CouponSpec,
    FieldFrame,
    build_mesh,
    field_statistics,
    initial_compliance,
    oblique_angle,
    run,
)
from feprnn.micromodel import VoigtMixture
from feprnn.pathgen import CreepProtocol, CsrProtocol
from feprnn.stepping import AdaptiveStepping
from oracles import fd_voigt_tangent, rotate_stiffness

SMALL = CouponSpec(length=40.0, width=10.0, n_length=8, n_width=2)
STEP = AdaptiveStepping(dt0=20.0, dt_max=20.0)


def _csr(strain=0.004, rate=1e-4):
    return CsrProtocol(rate=rate, target_strain=strain)


@pytest.fixture(scope="module")
def hyper(shipped):
    fp, mp = shipped
    return VoigtMixture([(fp, 0.4), (dataclasses.replace(mp, viscosities=tuple(1e40 for _ in mp.viscosities)), 0.6)])


# ---------------------------------------------------------------- mesh


def test_default_mesh_size():
    mesh = build_mesh(CouponSpec())
    assert mesh.n_elements == 576
    assert mesh.volume.sum() == pytest.approx(120.0 * 20.0 * 1.0, rel=1e-12)
    assert np.all(mesh.volume > 0.0)


def test_straight_angle_oblique_mesh_is_identical():
    a = build_mesh(SMALL)
    b = build_mesh(dataclasses.replace(SMALL, tabs="oblique", beta=90.0))
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.dN, b.dN)


def test_oblique_mesh_keeps_gauge_length():
    m = build_mesh(dataclasses.replace(SMALL, tabs="oblique", beta=60.0))
    y_top, y_bot = m.nodes[m.top, 1], m.nodes[m.bottom, 1]
    assert np.allclose(y_top - y_bot, SMALL.length)
    assert np.ptp(y_top) == pytest.approx(SMALL.width / np.tan(np.radians(60.0)))
    assert m.volume.sum() == pytest.approx(SMALL.length * SMALL.width * SMALL.thickness)


@pytest.mark.parametrize("kw", [dict(tabs="bevel"), dict(beta=0.0), dict(width=-1.0), dict(n_width=0)])
def test_coupon_spec_rejects(kw):
    with pytest.raises(DomainError):
        CouponSpec(**kw)


# ---------------------------------------------------------------- tab angle


def test_isotropic_compliance_gives_right_angle():
    E, nu = 1000.0, 0.3
    G = E / (2 * (1 + nu))
    S = np.zeros((6, 6))
    S[:3, :3] = -nu / E
    np.fill_diagonal(S[:3, :3], 1.0 / E)
    S[3:, 3:] = np.eye(3) / G
    assert oblique_angle(S) == 90.0


def test_on_axis_angles(composite):
    for theta0 in (0.0, 90.0):
        assert oblique_angle(initial_compliance(composite, theta0)) == pytest.approx(90.0, abs=1e-6)


def test_off_axis_angle_against_rotated_stiffness(composite):
    fresh = composite.fresh_state()
    C_local = fd_voigt_tangent(lambda U: composite.evaluate(U, 1.0, fresh)[0])
    C_glob = rotate_stiffness(C_local, off_axis_frame(15.0))
    ref = oblique_angle(np.linalg.inv(C_glob))
    beta = oblique_angle(initial_compliance(composite, 15.0))
    assert beta == pytest.approx(ref, abs=1e-3)
    assert 0.0 < beta < 90.0


def test_nonpositive_compliance_rejected():
    with pytest.raises(DomainError):
        oblique_angle(-np.eye(6))


# ---------------------------------------------------------------- solver


def test_zero_rate_run_stays_at_rest(composite):
    mesh = build_mesh(SMALL)
    res = run(mesh, CsrProtocol(rate=0.0, duration=40.0), composite, STEP)
    assert not res.log.failed and len(res.frames) == 3
    for fr in res.frames:
        assert np.all(fr.sig_yy == 0.0) and fr.global_sig_yy == 0.0


def test_patch_test_uniform_field(hyper):
    mesh = build_mesh(dataclasses.replace(SMALL, theta0=90.0))
    res = run(mesh, _csr(), hyper, STEP, lateral_free=True)
    assert not res.log.failed
    for fr in res.frames[1:]:
        assert np.max(np.abs(fr.eps_yy - fr.global_eps)) <= 1e-6 * fr.global_eps
        assert np.ptp(fr.sig_yy) <= 1e-6 * np.max(np.abs(fr.sig_yy))
        assert fr.global_sig_yy == pytest.approx(fr.sig_yy.mean(), rel=1e-6)


@pytest.fixture(scope="module")
def off_axis_run(composite):
    return run(build_mesh(SMALL), _csr(), composite, STEP)


def test_strain_follows_master_displacement(off_axis_run):
    for fr in off_axis_run.frames:
        assert fr.global_eps == pytest.approx(1e-4 * fr.time, abs=1e-15)


def test_reactions_balance(off_axis_run):
    for fr in off_axis_run.frames[1:]:
        scale = np.max(np.abs(fr.reaction_top))
        assert np.max(np.abs(fr.reaction_top + fr.reaction_bottom)) <= 1e-8 * scale


def test_work_is_nonnegative(off_axis_run):
    w = np.array([fr.work for fr in off_axis_run.frames[1:]])
    assert np.all(w >= 0.0)


def test_runs_are_deterministic(composite, off_axis_run):
    again = run(build_mesh(SMALL), _csr(), composite, STEP)
    for a, b in zip(off_axis_run.frames, again.frames):
        assert np.array_equal(a.eps_yy, b.eps_yy) and np.array_equal(a.sig_xy, b.sig_xy)


def test_oblique_at_right_angle_is_bitwise_straight(composite, off_axis_run):
    mesh = build_mesh(dataclasses.replace(SMALL, tabs="oblique", beta=90.0))
    res = run(mesh, _csr(), composite, STEP)
    for a, b in zip(off_axis_run.frames, res.frames):
        assert np.array_equal(a.sig_yy, b.sig_yy)


def test_curve_columns(off_axis_run):
    c = off_axis_run.curve()
    assert set(c) == {"time_s", "eps_yy_eng", "sig_yy_eng", "sig_xy_eng"}
    assert np.all(np.diff(c["sig_yy_eng"]) > 0.0)


def test_creep_tracks_ramp(composite):
    mesh = build_mesh(dataclasses.replace(SMALL, theta0=90.0))
    proto = CreepProtocol(sigma_max=20.0, rate=1.0, hold=100.0)
    res = run(mesh, proto, composite, STEP, lateral_free=True)
    assert not res.log.failed
    prev = 0.0
    for a, b in zip(res.frames, res.frames[1:]):
        want = min(prev + (b.time - a.time), 20.0)
        assert b.applied == want
        assert b.global_sig_yy == pytest.approx(want, rel=1e-8)
        prev = want


def test_failed_run_is_reported(composite):
    hard = AdaptiveStepping(dt0=100.0, dt_max=100.0, dt_min=50.0, max_iter=1)
    res = run(build_mesh(SMALL), _csr(0.02), composite, hard)
    assert res.log.failed and res.log.message
    assert len(res.frames) >= 1


# ---------------------------------------------------------------- statistics


def _frame(eps, phi):
    n = len(eps)
    z = np.zeros(n)
    return FieldFrame(1.0, np.asarray(eps, float), z, z, np.asarray(phi, float), 0.0, 0.0, 0.0, 0.0, 0)


def test_field_statistics_values():
    s = field_statistics([_frame([1.0] * 4, [0.0] * 4), _frame([1.0, 3.0, 1.0, 3.0], [-1.0, 2.0, 0.0, 0.0])])
    assert s.eps_cov[0] == 0.0
    assert s.eps_cov[1] == pytest.approx(0.5)
    assert s.phi_min[1] == -1.0 and s.phi_max[1] == 2.0 and s.phi_mean[1] == 0.25


def test_field_statistics_empty():
    with pytest.raises(DomainError):
        field_statistics([])
