"""Embedded material models: hyperelastic fiber and multi-mode viscoplastic matrix.

Both models work on stacks of deformation gradients ``(..., 3, 3)`` so a
whole PRNN material layer, an RVE or a macroscopic mesh can be updated in one
call. History lives in explicit state objects; updates never mutate their
inputs.

Fiber (transversely isotropic, fiber axis = local e1)::

    psi = mu/2 (I1 - 3) - mu ln J + lam/2 (ln J)^2
          + [alpha + beta ln J + gamma (I4 - 1)] (I4 - 1) - alpha/2 (I5 - 1)

Matrix: sigma = kappa (J - 1) I + (G_r / J) dev(B~) + sum_j (G_j / J) dev(B~_e,j)
with an Eyring-type viscosity per relaxation process.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, DomainError, SolverError
from .kinematics import SYM_BASIS, FULL_BASIS, VOIGT_PAIRS, polar_decompose, sym_to_voigt

I3 = np.eye(3)

NEWTON_TOL = 1e-10  # relative to the process activation stress
NEWTON_MAXIT = 50
_SINH_CLIP = 700.0


@dataclass(frozen=True)
class FiberProperties:
    mu: float
    lam: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.mu > 0.0:
            raise DomainError("fiber shear modulus mu must be positive")

    @property
    def shear_modulus_12(self):
        """Small-strain axial shear modulus G12 = mu - alpha."""
        return self.mu - self.alpha

    def with_shear_modulus_12(self, g12):
        """Copy with alpha adjusted so that G12 takes the requested value."""
        return replace(self, alpha=self.mu - g12)

    def small_strain_stiffness(self):
        """Analytic 6x6 linearization at F = I (engineering shear)."""
        mu, lam, a, b, g = self.mu, self.lam, self.alpha, self.beta, self.gamma
        C = np.zeros((6, 6))
        C[0, 0] = lam + 2 * mu + 4 * b + 8 * g - 4 * a
        C[1, 1] = C[2, 2] = lam + 2 * mu
        C[0, 1] = C[1, 0] = C[0, 2] = C[2, 0] = lam + 2 * b
        C[1, 2] = C[2, 1] = lam
        C[3, 3] = C[5, 5] = mu - a
        C[4, 4] = mu
        return C

    def to_dict(self):
        return dict(mu=self.mu, lam=self.lam, alpha=self.alpha, beta=self.beta, gamma=self.gamma)


@dataclass(frozen=True)
class MatrixProperties:
    """Multi-mode elasto-viscoplastic matrix.

    ``process[j]`` is the relaxation process of mode j; modes are listed in
    calibration order (the first mode of each process comes first within it).
    """

    bulk: float
    hardening: float
    tau0: tuple
    shear_moduli: tuple
    viscosities: tuple
    process: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "tau0", tuple(float(t) for t in np.atleast_1d(self.tau0)))
        object.__setattr__(self, "shear_moduli", tuple(float(g) for g in self.shear_moduli))
        object.__setattr__(self, "viscosities", tuple(float(e) for e in self.viscosities))
        proc = self.process
        if proc is None:
            proc = (0,) * len(self.shear_moduli)
        object.__setattr__(self, "process", tuple(int(p) for p in proc))
        m = len(self.shear_moduli)
        if m < 1:
            raise DomainError("matrix needs at least one mode")
        if len(self.viscosities) != m or len(self.process) != m:
            raise DomainError("mode lists must have equal length")
        if any(p < 0 or p >= len(self.tau0) for p in self.process):
            raise DomainError("mode assigned to an undefined process")
        vals = (self.bulk, self.hardening) + self.tau0 + self.shear_moduli + self.viscosities
        if not all(v > 0.0 for v in vals):
            raise DomainError("moduli, activation stresses and viscosities must be positive")

    @property
    def n_modes(self):
        return len(self.shear_moduli)

    @property
    def n_processes(self):
        return len(self.tau0)

    @property
    def instantaneous_shear_modulus(self):
        return self.hardening + sum(self.shear_moduli)

    def mode_order(self):
        """Mode indices interleaved by process then by rank inside the process."""
        per = [[j for j in range(self.n_modes) if self.process[j] == p] for p in range(self.n_processes)]
        order = []
        for r in range(max(len(x) for x in per)):
            order.extend(x[r] for x in per if r < len(x))
        return order

    def to_dict(self):
        return dict(
            bulk=self.bulk,
            hardening=self.hardening,
            tau0=list(self.tau0),
            shear_moduli=list(self.shear_moduli),
            viscosities=list(self.viscosities),
            process=list(self.process),
        )


def mode_subset(props, n):
    """Keep the first ``n`` modes in interleaved calibration order."""
    if not 1 <= n <= props.n_modes:
        raise DomainError(f"mode count {n} outside [1, {props.n_modes}]")
    keep = sorted(props.mode_order()[:n])
    used = sorted({props.process[j] for j in keep})
    remap = {p: i for i, p in enumerate(used)}
    return MatrixProperties(
        bulk=props.bulk,
        hardening=props.hardening,
        tau0=tuple(props.tau0[p] for p in used),
        shear_moduli=tuple(props.shear_moduli[j] for j in keep),
        viscosities=tuple(props.viscosities[j] for j in keep),
        process=tuple(remap[props.process[j]] for j in keep),
    )


@dataclass
class MatrixState:
    """History of a stack of matrix points.

    Be: elastic Finger tensor per mode, ``(..., m, 3, 3)``.
    F_prev: deformation gradient at the end of the previous step.
    eps_p: accumulated equivalent plastic strain per process, ``(..., P)``.
    """

    Be: np.ndarray
    F_prev: np.ndarray
    eps_p: np.ndarray

    @classmethod
    def fresh(cls, props, shape=()):
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        Be = np.broadcast_to(I3, shape + (props.n_modes, 3, 3)).copy()
        F_prev = np.broadcast_to(I3, shape + (3, 3)).copy()
        return cls(Be, F_prev, np.zeros(shape + (props.n_processes,)))

    @property
    def shape(self):
        return self.F_prev.shape[:-2]

    @property
    def n_modes(self):
        return self.Be.shape[-3]

    def size(self):
        """Number of scalar history variables per point."""
        return 9 * self.n_modes + 9 + self.eps_p.shape[-1]

    def to_vector(self):
        s = self.shape
        return np.concatenate(
            [self.Be.reshape(s + (-1,)), self.F_prev.reshape(s + (9,)), self.eps_p], axis=-1
        )

    @classmethod
    def from_vector(cls, v, n_modes):
        s = v.shape[:-1]
        nb = 9 * n_modes
        Be = v[..., :nb].reshape(s + (n_modes, 3, 3))
        F_prev = v[..., nb : nb + 9].reshape(s + (3, 3))
        return cls(Be, F_prev, v[..., nb + 9 :])

    def broadcast(self, lead):
        """Prepend leading axes ``lead`` (copies)."""
        lead = tuple(lead)
        return MatrixState(
            np.broadcast_to(self.Be, lead + self.Be.shape).copy(),
            np.broadcast_to(self.F_prev, lead + self.F_prev.shape).copy(),
            np.broadcast_to(self.eps_p, lead + self.eps_p.shape).copy(),
        )

    def __getitem__(self, idx):
        return MatrixState(self.Be[idx], self.F_prev[idx], self.eps_p[idx])

    def copy(self):
        return MatrixState(self.Be.copy(), self.F_prev.copy(), self.eps_p.copy())

    def check(self, props):
        if self.n_modes != props.n_modes or self.eps_p.shape[-1] != props.n_processes:
            raise ContractError(
                f"state carries {self.n_modes} modes / {self.eps_p.shape[-1]} processes, "
                f"properties define {props.n_modes} / {props.n_processes}"
            )


@dataclass
class MaterialPointResult:
    stress: np.ndarray
    state: object
    tangent: np.ndarray = field(default=None)


def _det_positive(F):
    J = np.linalg.det(F)
    if np.any(~np.isfinite(J)) or np.any(J <= 0.0):
        raise DomainError(f"deformation gradient must have positive determinant (min {np.min(J):.3e})")
    return J


def _dev(A):
    return A - (np.trace(A, axis1=-2, axis2=-1) / 3.0)[..., None, None] * I3


# ---------------------------------------------------------------- fiber


def fiber_energy(F, props):
    """Stored energy per unit reference volume."""
    F = np.asarray(F, dtype=float)
    J = _det_positive(F)
    C = np.swapaxes(F, -1, -2) @ F
    lnJ = np.log(J)
    I1 = np.trace(C, axis1=-2, axis2=-1)
    I4 = C[..., 0, 0]
    I5 = np.sum(C[..., :, 0] ** 2, axis=-1)
    p = props
    return (
        0.5 * p.mu * (I1 - 3.0)
        - p.mu * lnJ
        + 0.5 * p.lam * lnJ**2
        + (p.alpha + p.beta * lnJ + p.gamma * (I4 - 1.0)) * (I4 - 1.0)
        - 0.5 * p.alpha * (I5 - 1.0)
    )


def fiber_stress(F, props):
    """Cauchy stress of the fiber model, sigma = 2/J F dpsi/dC F^T."""
    F = np.asarray(F, dtype=float)
    J = _det_positive(F)
    p = props
    b = F @ np.swapaxes(F, -1, -2)
    n = F[..., :, 0]
    bn = np.einsum("...ij,...j->...i", b, n)
    I4 = np.sum(n * n, axis=-1)
    lnJ = np.log(J)
    iso = p.lam * lnJ + p.beta * (I4 - 1.0)
    coef = 2.0 * (p.alpha + p.beta * lnJ + 2.0 * p.gamma * (I4 - 1.0))
    nn = n[..., :, None] * n[..., None, :]
    nbn = n[..., :, None] * bn[..., None, :]
    tau = (
        p.mu * (b - I3)
        + iso[..., None, None] * I3
        + coef[..., None, None] * nn
        - p.alpha * (nbn + np.swapaxes(nbn, -1, -2))
    )
    return tau / J[..., None, None]


def fiber_update(F, props, dt=None, state=None, tangent=True):
    """Stateless fiber update; ``dt`` and ``state`` are accepted for interface parity."""
    sigma = fiber_stress(F, props)
    D = None
    if tangent:
        D = consistent_tangent(lambda G, _dt, _s: (fiber_stress(G, props), None), F, dt, None)
    return MaterialPointResult(sigma, state, D)


# ---------------------------------------------------------------- matrix


def _h(y):
    """sinh(y)/y and its derivative for y >= 0."""
    y = np.minimum(y, _SINH_CLIP)
    small = y < 1e-3
    ys = np.where(small, 1.0, y)
    sh, ch = np.sinh(ys), np.cosh(ys)
    h = np.where(small, 1.0 + y**2 / 6.0 + y**4 / 120.0, sh / ys)
    dh = np.where(small, y / 3.0 + y**3 / 30.0, (ys * ch - sh) / ys**2)
    return h, dh


_VOIGT_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


def _solve_tau(ebar_tr, a, c, vv, proc, tau0):
    """Equivalent driving stress per process on flat arrays.

    Solves tau = eq(S(tau)) where S is the summed deviatoric mode stress of a
    process after viscous relief with factor 1 + c h(tau / tau0). The residual
    rho = ln tau - ln eq(S) is nearly linear in ln tau at low stress and in tau
    in the exponential regime, so Newton runs in ln tau for y = tau / tau0 < 1
    and in tau above, kept inside a sign-change bracket (bisection fallback).
    Only unconverged points are recomputed.
    """
    n, m = c.shape
    P = len(tau0)
    member = np.zeros((m, P))
    member[np.arange(m), proc] = 1.0

    def stresses_modal(eb, aa, cc, hm):
        ebar = eb / (1.0 + cc * hm)[..., None]
        qm1 = np.expm1(2.0 * ebar)  # exp(2 ebar) - 1 without cancellation
        return aa[..., None] * (qm1 - qm1.mean(axis=-1, keepdims=True))

    def stresses(eb, aa, cc, V6, hm):
        ebar = eb / (1.0 + cc * hm)[..., None]
        qm1 = np.expm1(2.0 * ebar)
        sp = aa[..., None] * (qm1 - qm1.mean(axis=-1, keepdims=True))
        q = 1.0 + qm1
        S = np.einsum("nmq,mp->npq", np.einsum("nmqk,nmk->nmq", V6, sp), member)
        return ebar, q, S

    def equivalent(S):
        return np.sqrt(1.5 * np.sum(_VOIGT_WEIGHTS * S**2, axis=-1))

    # each mode's stress magnitude falls as its relief grows, so the summed
    # mode equivalents at h = 1 bound the root from above (triangle inequality)
    _, _, S0 = stresses(ebar_tr, a, c, vv, np.ones_like(c))
    modal0 = np.einsum("nmqk,nmk->nmq", vv, stresses_modal(ebar_tr, a, c, np.ones_like(c)))
    upper = equivalent(modal0) @ member
    eq0 = equivalent(S0)
    tau = np.zeros((n, P))
    pos = upper > 0.0
    hi = np.log(np.where(pos, upper, 1.0))
    lo = np.minimum(hi - 60.0, np.log(np.where(eq0 > 0.0, eq0, np.exp(hi - 60.0))) - 1.0)
    # start from the no-relief value, exact when flow is below round-off
    ell = np.where(eq0 > 0.0, np.log(np.where(eq0 > 0.0, eq0, 1.0)), hi)
    h_up, _ = _h(upper / tau0)
    frozen = np.all((c * h_up[:, proc] < 1e-17)[:, :, None] | (member == 0.0), axis=1)
    tol = NEWTON_TOL * tau0
    active = pos & ~frozen
    dx_old = hi - lo
    rows = np.nonzero(active.any(axis=1))[0]
    it = 0
    while rows.size:
        if it >= NEWTON_MAXIT:
            p_bad = int(np.nonzero(active[rows[0]])[0][0])
            raise SolverError(
                "matrix corrector did not converge",
                mode=int(np.nonzero(proc == p_bad)[0][0]),
                process=p_bad,
                iterations=it,
                point=int(rows[0]),
            )
        it += 1
        el = ell[rows]
        t = np.exp(el)
        y = t / tau0
        h, dh = _h(y)
        hm, dhm = h[:, proc], (dh / tau0)[:, proc]
        eb, cc, aa, V6 = ebar_tr[rows], c[rows], a[rows], vv[rows]
        ebar, q, S = stresses(eb, aa, cc, V6, hm)
        eq = np.maximum(equivalent(S), 1e-300)
        w = cc * hm
        debar = -eb * ((w / (1.0 + w)) / (1.0 + w) * dhm / hm)[..., None]
        g = 2.0 * q * debar
        dsp = aa[..., None] * (g - g.mean(axis=-1, keepdims=True))
        dS = np.einsum("nmq,mp->npq", np.einsum("nmqk,nmk->nmq", V6, dsp), member)
        deq = 1.5 * np.sum(_VOIGT_WEIGHTS * S * dS, axis=-1) / eq
        rho = el - np.log(eq)
        drho = 1.0 - t * deq / eq  # d rho / d ln tau
        act = active[rows]
        lo_r = np.where(act & (rho < 0.0), el, lo[rows])
        hi_r = np.where(act & (rho > 0.0), el, hi[rows])
        delta = rho / drho
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(y > 1.0, el + np.log(np.maximum(1.0 - delta, 1e-300)), el - delta)
        # bisect when Newton leaves the bracket or stops halving its step, as
        # happens when a fast mode switches from unrelaxed to relaxed
        slow = np.abs(step - el) > 0.5 * dx_old[rows]
        bad = (step <= lo_r) | (step >= hi_r) | ~np.isfinite(step) | slow
        new = np.where(bad, 0.5 * (lo_r + hi_r), step)
        dx_old[rows] = np.where(act, np.abs(new - el), dx_old[rows])
        conv = (np.abs(t - eq) < tol) | (np.abs(rho) < 1e-14)
        # a converged point still takes its Newton step, polishing to round-off
        ell[rows] = np.where(act, np.where(conv, np.where(bad, el, step), new), el)
        lo[rows], hi[rows] = lo_r, hi_r
        active[rows] = act & ~conv
        rows = rows[active[rows].any(axis=1)]
    tau[pos] = np.exp(ell[pos])
    return tau


def matrix_stress(F, dt, state, props):
    """Advance a stack of matrix points by one step.

    Returns ``(sigma, new_state)``. ``dt`` may be a scalar or broadcastable
    to the batch shape.
    """
    F = np.asarray(F, dtype=float)
    state.check(props)
    J = _det_positive(F)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), J.shape)
    if np.any(dt < 0.0):
        raise DomainError("time increment must be non-negative")
    G = np.asarray(props.shear_moduli)
    eta0 = np.asarray(props.viscosities)
    tau0 = np.asarray(props.tau0)
    proc = np.asarray(props.process)
    P = props.n_processes
    member = np.zeros((props.n_modes, P))
    member[np.arange(props.n_modes), proc] = 1.0

    f = F @ np.linalg.inv(state.F_prev)
    fb = f[..., None, :, :]
    Btr = fb @ state.Be @ np.swapaxes(fb, -1, -2)
    lam2, V = np.linalg.eigh(0.5 * (Btr + np.swapaxes(Btr, -1, -2)))
    if np.any(lam2 <= 0.0):
        raise DomainError("trial elastic Finger tensor lost positive definiteness")
    eps = 0.5 * np.log(lam2)
    ebar_tr = eps - eps.mean(axis=-1, keepdims=True)
    Jm = J[..., None]
    a = G / Jm  # (..., m)
    c = G * dt[..., None] / (Jm * eta0)
    Vt = np.swapaxes(V, -1, -2)

    def driving(hm):
        ebar = ebar_tr / (1.0 + c * hm)[..., None]
        qm1 = np.expm1(2.0 * ebar)
        sp = a[..., None] * (qm1 - qm1.mean(axis=-1, keepdims=True))
        q = 1.0 + qm1
        return ebar, q, sp

    # products V_ik V_jk for the six Voigt pairs: (..., m, 6, 3)
    vv = np.stack([V[..., i, :] * V[..., j, :] for i, j in VOIGT_PAIRS], axis=-2)
    lead = J.shape
    n = int(np.prod(lead))
    tau = _solve_tau(
        ebar_tr.reshape(n, -1, 3),
        np.broadcast_to(a, lead + a.shape[-1:]).reshape(n, -1),
        np.broadcast_to(c, lead + c.shape[-1:]).reshape(n, -1),
        vv.reshape(n, -1, 6, 3),
        proc,
        tau0,
    ).reshape(lead + (P,))

    h, _ = _h(tau / tau0)
    hm = h[..., proc]
    ebar, q, sp = driving(hm)
    s_modes = (V * sp[..., None, :]) @ Vt
    Jb = J[..., None, None]
    b = F @ np.swapaxes(F, -1, -2)
    sigma = (
        (props.bulk * (J - 1.0))[..., None, None] * I3
        + props.hardening / Jb * _dev(Jb ** (-2.0 / 3.0) * b)
        + s_modes.sum(axis=-3)
    )
    Be = (V * (J[..., None, None] ** (2.0 / 3.0) * np.exp(2.0 * ebar))[..., None, :]) @ Vt
    Be = 0.5 * (Be + np.swapaxes(Be, -1, -2))
    dep = np.sqrt(2.0 / 3.0) * np.linalg.norm(ebar_tr - ebar, axis=-1)
    Gsum = member.T @ G
    deps_p = np.einsum("...m,mp->...p", dep * G, member) / Gsum
    new_state = MatrixState(Be, F.copy(), state.eps_p + deps_p)
    return sigma, new_state


def matrix_update(F, dt, state, props, tangent=True):
    """Matrix update returning stress, advanced state and (optionally) the 6x6 tangent."""
    if np.any(np.asarray(dt) <= 0.0):
        raise DomainError("time increment must be positive")
    sigma, new = matrix_stress(F, dt, state, props)
    D = None
    if tangent:
        D = consistent_tangent(lambda G, d, s: matrix_stress(G, d, s, props), F, dt, state)
    return MaterialPointResult(sigma, new, D)


# ---------------------------------------------------------------- tangents


def _broadcast_state(state, lead):
    return broadcast_state(state, lead)


def consistent_tangent(update, F, dt, state, h=None):
    """6x6 tangent by central differences on the stretch components.

    ``update(F, dt, state) -> (sigma, state)``. The stretch U of F = R U is
    perturbed by engineering-strain unit tensors; history is held at its
    step-entry value. Step ``h = 1e-7 (1 + max|F|)`` unless given.
    """
    F = np.asarray(F, dtype=float)
    R, U = polar_decompose(F)
    if h is None:
        h = 1e-7 * (1.0 + np.max(np.abs(F)))
    dU = h * SYM_BASIS  # (6, 3, 3)
    lead_shape = F.shape[:-2]
    dUb = dU.reshape((6,) + (1,) * len(lead_shape) + (3, 3))
    Fp = R @ (U + dUb)
    Fm = R @ (U - dUb)
    Fs = np.concatenate([Fp, Fm], axis=0)
    sig, _ = update(Fs, dt, _broadcast_state(state, (12,)))
    dsig = (sig[:6] - sig[6:]) / (2.0 * h)  # (6, ..., 3, 3)
    cols = sym_to_voigt(dsig)  # (6, ..., 6): [col, ..., row]
    return np.moveaxis(cols, 0, -1)


def stress_derivative(update, F, dt, state, h=None):
    """Full d sigma_ij / d F_kl by central differences, shape ``(..., 3, 3, 3, 3)``."""
    F = np.asarray(F, dtype=float)
    if h is None:
        h = 1e-7 * (1.0 + np.max(np.abs(F)))
    lead_shape = F.shape[:-2]
    E = (h * FULL_BASIS).reshape((9,) + (1,) * len(lead_shape) + (3, 3))
    Fs = np.concatenate([F + E, F - E], axis=0)
    sig, _ = update(Fs, dt, _broadcast_state(state, (18,)))
    d = (sig[:9] - sig[9:]) / (2.0 * h)  # (9, ..., 3, 3)
    d = np.moveaxis(d, 0, -1)  # (..., 3, 3, 9)
    return d.reshape(lead_shape + (3, 3, 3, 3))


def isotropic_stiffness(bulk, shear):
    """6x6 isotropic stiffness (engineering shear)."""
    C = np.zeros((6, 6))
    C[:3, :3] = bulk - 2.0 * shear / 3.0
    C[np.arange(3), np.arange(3)] = bulk + 4.0 * shear / 3.0
    C[3:, 3:] = np.eye(3) * shear
    return C


def fiber_model(props):
    """Uniform ``update(F, dt, state)`` callable for the fiber."""
    return lambda F, dt, state: (fiber_stress(F, props), state)


def matrix_model(props):
    return lambda F, dt, state: matrix_stress(F, dt, state, props)


# ---------------------------------------------------------------- uniform interface


class FiberMaterial:
    """Fiber model behind the common ``fresh_state`` / ``evaluate`` interface."""

    family = "fiber"

    def __init__(self, props):
        self.props = props

    def fresh_state(self, shape=()):
        return None

    def evaluate(self, F, dt, state):
        return fiber_stress(F, self.props), state


class MatrixMaterial:
    family = "matrix"

    def __init__(self, props):
        self.props = props

    def fresh_state(self, shape=()):
        return MatrixState.fresh(self.props, shape)

    def evaluate(self, F, dt, state):
        return matrix_stress(F, dt, state, self.props)


def material_for(props):
    if isinstance(props, FiberProperties):
        return FiberMaterial(props)
    if isinstance(props, MatrixProperties):
        return MatrixMaterial(props)
    raise DomainError(f"no material model for {type(props).__name__}")


def broadcast_state(state, lead):
    """Prepend axes to any supported state (None, MatrixState or tuples of them)."""
    if state is None:
        return None
    if isinstance(state, tuple):
        return tuple(broadcast_state(s, lead) for s in state)
    return state.broadcast(lead)


def take_state(state, idx):
    if state is None:
        return None
    if isinstance(state, tuple):
        return tuple(take_state(s, idx) for s in state)
    return state[idx]
