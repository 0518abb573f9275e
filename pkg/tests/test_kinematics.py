import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from feprnn.errors import ContractError, DomainError
from feprnn.kinematics import (
    in_plane_rotation,
    nominal_stress,
    nominal_stress_tangent,
    off_axis_frame,
    polar_decompose,
    polar_derivatives,
    reorientation_angle,
    rotation_matrix,
    sym_to_voigt,
    to_global,
    to_global_stress,
    to_local,
    to_local_stress,
    voigt_to_sym,
)
from oracles import FROZEN, nominal, polar_svd

angles = st.floats(0.0, 90.0)
small = arrays(float, (3, 3), elements=st.floats(-0.4, 0.4))


def random_F(rng, n, spread=0.4):
    F = np.eye(3) + spread * rng.uniform(-1, 1, size=(n, 3, 3))
    return F[np.linalg.det(F) > 0.2]


def test_rotation_matrix_closed_forms():
    assert np.array_equal(rotation_matrix(0.0), np.eye(3))
    assert np.allclose(rotation_matrix(90.0), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    Q = rotation_matrix(45.0)
    assert np.allclose(np.abs(Q[:2, :2]), np.sqrt(0.5), atol=1e-15)


def test_rotation_grid_orthogonal():
    for t in np.arange(0.0, 91.0):
        Q = rotation_matrix(t)
        assert np.max(np.abs(Q @ Q.T - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(Q) - 1.0) < 1e-12


@pytest.mark.parametrize("bad", [-1.0, 90.5, np.nan])
def test_rotation_matrix_range(bad):
    with pytest.raises(DomainError):
        rotation_matrix(bad)


def test_off_axis_frame_puts_fiber_at_theta_from_load_axis():
    for t in (0.0, 15.0, 45.0, 90.0):
        a = off_axis_frame(t).T @ [1.0, 0.0, 0.0]
        assert np.degrees(np.arccos(a[1])) == pytest.approx(t, abs=1e-12)


@given(small, angles)
def test_local_global_round_trip(A, t):
    F = np.eye(3) + A
    if np.linalg.det(F) <= 0.05:
        return
    Q = off_axis_frame(t)
    L = to_local(F, Q)
    assert np.max(np.abs(to_global(L, Q) - F)) < 1e-12
    assert abs(np.linalg.det(L) - np.linalg.det(F)) < 1e-12


def test_identity_conjugation():
    assert np.allclose(to_local(np.eye(3), off_axis_frame(33.0)), np.eye(3), atol=1e-15)
    F = np.eye(3) + 0.1 * np.arange(9).reshape(3, 3)
    assert np.allclose(to_local(F, rotation_matrix(0.0)), F, atol=1e-15)


def test_stress_round_trip_1000(rng):
    A = rng.standard_normal((1000, 3, 3))
    S = 0.5 * (A + np.swapaxes(A, 1, 2))
    Q = off_axis_frame(27.0)
    assert np.max(np.abs(to_global_stress(to_local_stress(S, Q), Q) - S)) < 1e-12


def test_stress_transforms():
    Q = off_axis_frame(45.0)
    assert np.array_equal(to_global_stress(np.zeros((3, 3)), Q), np.zeros((3, 3)))
    assert np.allclose(to_global_stress(7.0 * np.eye(3), Q), 7.0 * np.eye(3), atol=1e-14)
    n = Q.T @ [1.0, 0.0, 0.0]
    out = to_global_stress(np.diag([1.0, 0.0, 0.0]), Q)
    assert np.allclose(out, np.outer(n, n), atol=1e-15)
    assert np.allclose(out, FROZEN["uniaxial_45"], atol=1e-15)


def test_asymmetric_stress_rejected():
    s = np.zeros((3, 3))
    s[0, 1] = 1e-6
    with pytest.raises(ContractError):
        to_global_stress(s, off_axis_frame(10.0))


def test_polar_1000_random(rng):
    F = random_F(rng, 1400)[:1000]
    assert len(F) == 1000
    R, U = polar_decompose(F)
    assert np.max(np.abs(R @ U - F)) < 1e-10
    assert np.max(np.abs(np.swapaxes(R, 1, 2) @ R - np.eye(3))) < 1e-10
    assert np.min(np.linalg.eigvalsh(U)) > 0.0
    assert np.max(np.abs(U - np.swapaxes(U, 1, 2))) < 1e-12
    Rs, Us = zip(*(polar_svd(f) for f in F[:50]))
    assert np.allclose(R[:50], np.array(Rs), atol=1e-10)
    assert np.allclose(U[:50], np.array(Us), atol=1e-10)


def test_polar_trivial_cases():
    R, U = polar_decompose(np.eye(3))
    assert np.allclose(R, np.eye(3), atol=1e-15) and np.allclose(U, np.eye(3), atol=1e-15)
    R0 = in_plane_rotation(31.0)
    R, U = polar_decompose(R0)
    assert np.allclose(R, R0, atol=1e-13) and np.allclose(U, np.eye(3), atol=1e-13)


def test_polar_rejects_inverted():
    with pytest.raises(DomainError):
        polar_decompose(np.diag([1.0, 1.0, -1.0]))


def test_polar_derivatives_match_fd(rng):
    F = random_F(rng, 5, 0.2)[0]
    R, U, dR, dU = polar_derivatives(F)
    h = 1e-6
    for k in range(3):
        for l in range(3):
            E = np.zeros((3, 3))
            E[k, l] = h
            Rp, Up = polar_decompose(F + E)
            Rm, Um = polar_decompose(F - E)
            assert np.allclose(dR[:, :, k, l], (Rp - Rm) / (2 * h), atol=1e-7)
            assert np.allclose(dU[:, :, k, l], (Up - Um) / (2 * h), atol=1e-7)


def test_nominal_stress_identities(rng):
    s = rng.standard_normal((3, 3))
    s = s + s.T
    assert np.array_equal(nominal_stress(s, np.eye(3)), s)
    lam, p = 1.3, 2.5
    assert np.allclose(nominal_stress(p * np.eye(3), lam * np.eye(3)), lam**2 * p * np.eye(3), rtol=1e-14)
    F = np.eye(3)
    F[0, 1] = 0.3
    s = np.diag([0.0, 4.0, 0.0])
    assert np.allclose(nominal_stress(s, F), nominal(s, F), atol=1e-13)
    with pytest.raises(DomainError):
        nominal_stress(s, np.zeros((3, 3)))


def test_nominal_stress_tangent_matches_fd(rng):
    F = random_F(rng, 5, 0.2)[0]
    A = rng.standard_normal((3, 3, 3, 3))
    A = 0.5 * (A + np.swapaxes(A, 0, 1))

    def sigma(G):
        d = G - F
        s0 = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])
        return s0 + np.einsum("ijkl,kl->ij", A, d)

    T = nominal_stress_tangent(sigma(F), A, F)
    h = 1e-6
    for k in range(3):
        for l in range(3):
            E = np.zeros((3, 3))
            E[k, l] = h
            fd = (nominal(sigma(F + E), F + E) - nominal(sigma(F - E), F - E)) / (2 * h)
            assert np.allclose(T[:, :, k, l], fd, atol=1e-6)


def test_reorientation_angle():
    assert reorientation_angle(np.eye(3)) == 0.0
    F = np.eye(3)
    F[1, 0] = np.tan(np.radians(5.0))
    assert reorientation_angle(F) == pytest.approx(5.0, abs=1e-12)
    F = np.eye(3) * 2.0
    F[1, 0] = 2.0
    assert reorientation_angle(F) == pytest.approx(45.0, abs=1e-12)
    F = np.eye(3)
    F[0, 0] = 0.0
    with pytest.raises(DomainError):
        reorientation_angle(F)


@given(arrays(float, 6, elements=st.floats(-10, 10)))
def test_voigt_round_trip(v):
    assert np.array_equal(sym_to_voigt(voigt_to_sym(v)), v)
