"""Finite-strain tensor utilities.

All functions accept a single 3x3 tensor or a stack of them with arbitrary
leading batch dimensions (``(..., 3, 3)``). Angles are degrees at the API
boundary and radians internally.

Voigt ordering is fixed to (xx, yy, zz, xy, yz, zx). Strain-like Voigt
vectors use engineering shear (twice the tensor component); stress-like
vectors store tensor components.
"""

import numpy as np

from .errors import ContractError, DomainError

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0))
VOIGT_LABELS = ("xx", "yy", "zz", "xy", "yz", "zx")

I3 = np.eye(3)


def _basis_sym():
    """Symmetric unit tensors for engineering-strain perturbations."""
    E = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        if i == j:
            E[k, i, i] = 1.0
        else:
            E[k, i, j] = E[k, j, i] = 0.5
    return E


SYM_BASIS = _basis_sym()
FULL_BASIS = np.eye(9).reshape(9, 3, 3)


def sym_to_voigt(A):
    """Tensor components of a symmetric tensor in Voigt order (no shear factor)."""
    A = np.asarray(A, dtype=float)
    return np.stack([A[..., i, j] for i, j in VOIGT_PAIRS], axis=-1)


def voigt_to_sym(v):
    v = np.asarray(v, dtype=float)
    A = np.empty(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        A[..., i, j] = v[..., k]
        A[..., j, i] = v[..., k]
    return A


def strain_to_voigt(A):
    """Engineering Voigt vector of a symmetric strain-like tensor."""
    v = sym_to_voigt(A)
    v[..., 3:] *= 2.0
    return v


def _check_angle(theta):
    if not np.all(np.isfinite(theta)) or np.any(theta < 0.0) or np.any(theta > 90.0):
        raise DomainError(f"off-axis angle must lie in [0, 90] degrees, got {theta}")


def _rz(theta_deg):
    t = np.deg2rad(theta_deg)
    c, s = np.cos(t), np.sin(t)
    # exact values at the grid points that matter for symmetry arguments
    if theta_deg % 90.0 == 0.0:
        c, s = round(c), round(s)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(theta_deg):
    """In-plane transformation matrix Q0(theta) about the z axis."""
    theta_deg = float(theta_deg)
    _check_angle(theta_deg)
    return _rz(theta_deg)


def off_axis_frame(theta_deg):
    """Global-to-fiber transformation for a fiber at ``theta_deg`` from the y axis.

    Loading is along global y. The returned Q maps the global fiber direction
    (sin theta, cos theta, 0) onto the local e1 axis, so theta = 0 loads along
    the fibers and theta = 90 is transverse loading.
    """
    theta_deg = float(theta_deg)
    _check_angle(theta_deg)
    return rotation_matrix(90.0 - theta_deg).T.copy()


def in_plane_rotation(phi_deg):
    """Proper rotation about z by ``phi_deg`` (any sign)."""
    return _rz(float(phi_deg))


def to_local(F, Q):
    """Q F Q^T."""
    return Q @ np.asarray(F, dtype=float) @ Q.T


def to_global(F_local, Q):
    """Inverse of :func:`to_local`."""
    return Q.T @ np.asarray(F_local, dtype=float) @ Q


def to_global_stress(sigma_local, Q, tol=1e-9):
    """Q^T sigma_L Q for a symmetric local stress."""
    s = np.asarray(sigma_local, dtype=float)
    asym = np.max(np.abs(s - np.swapaxes(s, -1, -2)), initial=0.0)
    if asym > tol * max(1.0, np.max(np.abs(s), initial=0.0)):
        raise ContractError(f"local stress is not symmetric (max asymmetry {asym:.3e})")
    return Q.T @ s @ Q


def to_local_stress(sigma, Q):
    return Q @ np.asarray(sigma, dtype=float) @ Q.T


def _require_positive_det(F, what="deformation gradient"):
    J = np.linalg.det(F)
    if np.any(~np.isfinite(J)) or np.any(J <= 0.0):
        raise DomainError(f"{what} must have positive determinant (min det = {np.min(J):.3e})")
    return J


def polar_decompose(F):
    """Right polar decomposition F = R U.

    U is obtained from the spectral decomposition of C = F^T F and
    R = F U^-1. Returns ``(R, U)``.
    """
    F = np.asarray(F, dtype=float)
    _require_positive_det(F)
    C = np.swapaxes(F, -1, -2) @ F
    lam2, V = np.linalg.eigh(C)
    lam = np.sqrt(lam2)
    Vt = np.swapaxes(V, -1, -2)
    U = (V * lam[..., None, :]) @ Vt
    Uinv = (V / lam[..., None, :]) @ Vt
    U = 0.5 * (U + np.swapaxes(U, -1, -2))
    R = F @ Uinv
    return R, U


def polar_derivatives(F):
    """Derivatives of the polar factors with respect to F.

    Returns ``(R, U, dR, dU)`` where ``dR[..., i, j, k, l] = dR_ij / dF_kl``
    and likewise for U. Computed from the Sylvester equation
    ``U dU + dU U = dC`` solved in the eigenbasis of U.
    """
    F = np.asarray(F, dtype=float)
    _require_positive_det(F)
    C = np.swapaxes(F, -1, -2) @ F
    lam2, V = np.linalg.eigh(C)
    lam = np.sqrt(lam2)
    Vt = np.swapaxes(V, -1, -2)
    U = (V * lam[..., None, :]) @ Vt
    U = 0.5 * (U + np.swapaxes(U, -1, -2))
    Uinv = (V / lam[..., None, :]) @ Vt
    R = F @ Uinv

    E = FULL_BASIS  # (9, 3, 3), E[kl] = e_k (x) e_l
    Fb = F[..., None, :, :]
    dC = np.swapaxes(E, -1, -2) @ Fb + np.swapaxes(Fb, -1, -2) @ E
    Vb, Vtb = V[..., None, :, :], Vt[..., None, :, :]
    dCp = Vtb @ dC @ Vb
    denom = lam[..., :, None] + lam[..., None, :]
    dUp = dCp / denom[..., None, :, :]
    dU = Vb @ dUp @ Vtb
    dR = (E - R[..., None, :, :] @ dU) @ Uinv[..., None, :, :]
    # (..., 9, 3, 3) -> (..., 3, 3, 3, 3) with derivative indices last
    shape = F.shape[:-2]
    dU = np.moveaxis(dU.reshape(shape + (3, 3, 3, 3)), (-4, -3), (-2, -1))
    dR = np.moveaxis(dR.reshape(shape + (3, 3, 3, 3)), (-4, -3), (-2, -1))
    return R, U, dR, dU


def nominal_stress(sigma, F):
    """First Piola-Kirchhoff (nominal) stress P = J sigma F^-T."""
    sigma = np.asarray(sigma, dtype=float)
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if np.any(np.abs(J) < 1e-300):
        raise DomainError("deformation gradient is singular")
    _require_positive_det(F)
    Finv = np.linalg.inv(F)
    return J[..., None, None] * sigma @ np.swapaxes(Finv, -1, -2)


def nominal_stress_tangent(sigma, dsigma_dF, F):
    """dP/dF from the Cauchy stress and its F-derivative.

    ``dsigma_dF[..., i, j, k, l] = d sigma_ij / d F_kl``; returns the same
    layout for P.
    """
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    Finv = np.linalg.inv(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    # dJ/dF_kl = J Finv_lk
    dJ = J[..., None, None] * FinvT
    term1 = np.einsum("...kl,...ij->...ijkl", dJ, sigma @ FinvT)
    term2 = J[..., None, None, None, None] * np.einsum("...imkl,...mj->...ijkl", dsigma_dF, FinvT)
    # d(F^-T)_mj / dF_kl = -Finv_jk Finv_lm
    term3 = -J[..., None, None, None, None] * np.einsum(
        "...im,...jk,...lm->...ijkl", sigma, Finv, Finv
    )
    return term1 + term2 + term3


def reorientation_angle(F_local):
    """Fiber reorientation angle arctan(F21 / F11) in degrees."""
    F = np.asarray(F_local, dtype=float)
    f11 = F[..., 0, 0]
    if np.any(f11 == 0.0):
        raise DomainError("F11 = 0: reorientation angle undefined")
    return np.rad2deg(np.arctan(F[..., 1, 0] / f11))


def tangent_to_voigt(dsigma_dF):
    """6x6 Voigt tangent (engineering shear) from a full dsigma/dF.

    Column k is the stress response to the symmetric strain perturbation of
    unit engineering magnitude in Voigt slot k.
    """
    D = np.asarray(dsigma_dF, dtype=float)
    cols = np.einsum("...ijkl,mkl->...ijm", D, SYM_BASIS)
    return np.moveaxis(sym_to_voigt(np.moveaxis(cols, -1, -3)), -2, -1)
