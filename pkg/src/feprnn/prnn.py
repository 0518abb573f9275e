"""Physically recurrent neural network with embedded material models.

Encoder: each fictitious point j receives U_j = I + W_j * (U - I), with W_j a
symmetric 3x3 weight matrix (6 reals) and * the elementwise product.
Material layer: fiber points run the hyperelastic fiber model, matrix points
the multi-mode viscoplastic matrix model, each with its own history.
Decoder: sparse, sigma_k = sum_j d_jk sigma_j,k for each Voigt component k.

Training uses forward-mode sensitivities of every point's history with
directional central differences of the material update. Because each point
owns only six encoder weights, this gives the same gradient as
backpropagation through time at lower cost.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .constitutive import (
    FiberMaterial,
    FiberProperties,
    MatrixMaterial,
    MatrixProperties,
    MatrixState,
    broadcast_state,
    mode_subset,
)
from .errors import ContractError, DomainError, EvaluationError, SolverError
from .kinematics import (
    VOIGT_PAIRS,
    off_axis_frame,
    polar_derivatives,
    reorientation_angle,
    sym_to_voigt,
    voigt_to_sym,
)

I3 = np.eye(3)


def _unit_sym():
    """Symmetric unit tensors with ones in both off-diagonal slots."""
    E = np.zeros((6, 3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        E[k, i, j] = E[k, j, i] = 1.0
    return E


UNIT_SYM = _unit_sym()


def split_points(N):
    """Fiber and matrix point counts for N fictitious points (25 / 75 rule)."""
    if N < 2:
        raise DomainError("a PRNN needs at least 2 material points")
    q = 0.25 * N
    if N % 2 == 0 and N % 4 != 0:
        nf = math.ceil(q)
    else:
        nf = int(math.floor(q + 0.5))
    return nf, N - nf


@dataclass
class PrnnLayout:
    """Fiber points come first, then matrix points."""

    n_points: int
    n_fiber: int
    fiber_props: FiberProperties
    matrix_props: MatrixProperties

    @classmethod
    def from_split(cls, N, fiber_props, matrix_props):
        nf, _ = split_points(N)
        return cls(N, nf, fiber_props, matrix_props)

    @property
    def n_matrix(self):
        return self.n_points - self.n_fiber

    def fresh_state(self, shape=()):
        return MatrixState.fresh(self.matrix_props, tuple(shape) + (self.n_matrix,))


@dataclass
class PrnnParams:
    """Encoder weights W (N, 6) in Voigt order and decoder weights d (N, 6)."""

    W: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        if self.W.shape != self.d.shape or self.W.ndim != 2 or self.W.shape[1] != 6:
            raise ContractError("encoder and decoder weights must both be (N, 6)")

    @property
    def n_points(self):
        return self.W.shape[0]

    @property
    def size(self):
        return self.W.size + self.d.size

    def to_vector(self):
        return np.concatenate([self.W.reshape(-1), self.d.reshape(-1)])

    @classmethod
    def from_vector(cls, v, N):
        v = np.asarray(v, dtype=float)
        return cls(v[: 6 * N].reshape(N, 6).copy(), v[6 * N :].reshape(N, 6).copy())

    def tobytes(self):
        return self.to_vector().astype("<f8").tobytes()

    def copy(self):
        return PrnnParams(self.W.copy(), self.d.copy())

    @classmethod
    def initialize(cls, N, rng):
        W = np.empty((N, 6))
        W[:, :3] = rng.uniform(0.5, 1.5, size=(N, 3))
        W[:, 3:] = rng.uniform(-0.25, 0.25, size=(N, 3))
        d = rng.uniform(0.0, 2.0 / N, size=(N, 6))
        return cls(W, d)

    @classmethod
    def voigt_equivalent(cls, weights):
        """All-ones encoder and decoder rows equal to the mixture weights."""
        w = np.asarray(weights, dtype=float)
        return cls(np.ones((w.size, 6)), np.repeat(w[:, None], 6, axis=1))


def encode(W, U):
    """Fictitious stretches (..., N, 3, 3) for W (N, 6) and U (..., 3, 3)."""
    Wm = voigt_to_sym(W)
    return I3 + Wm * (np.asarray(U, dtype=float)[..., None, :, :] - I3)


def _check_points(Uj, offset=0):
    det = np.linalg.det(Uj)
    bad = ~(det > 0.0)
    if np.any(bad):
        j = int(np.nonzero(bad.reshape(-1, bad.shape[-1]).any(axis=0))[0][0])
        raise EvaluationError(f"fictitious stretch of point {j + offset} has det <= 0", point=j + offset)


def _point_stresses(layout, Uj, dt, state):
    """Per-point Voigt stresses (..., N, 6) and the advanced matrix state."""
    _check_points(Uj)
    nf = layout.n_fiber
    dt = np.asarray(dt, dtype=float)
    out = np.empty(Uj.shape[:-2] + (6,))
    sf, _ = FiberMaterial(layout.fiber_props).evaluate(Uj[..., :nf, :, :], dt, None)
    out[..., :nf, :] = sym_to_voigt(sf)
    sm, new = MatrixMaterial(layout.matrix_props).evaluate(Uj[..., nf:, :, :], dt[..., None], state)
    out[..., nf:, :] = sym_to_voigt(sm)
    return out, new


def forward(params, layout, U, dt, state):
    """One recurrent step: returns ``(sigma (..., 3, 3), new_state)``."""
    if params.n_points != layout.n_points:
        raise ContractError("parameter and layout point counts differ")
    Uj = encode(params.W, U)
    s, new = _point_stresses(layout, Uj, dt, state)
    return voigt_to_sym(np.sum(params.d * s, axis=-2)), new


class Prnn:
    """Trained network bound to a layout; implements ``fresh_state`` / ``evaluate``."""

    def __init__(self, params, layout):
        self.params, self.layout = params, layout

    def fresh_state(self, shape=()):
        return self.layout.fresh_state(shape)

    def evaluate(self, U, dt, state):
        return forward(self.params, self.layout, U, dt, state)


# ---------------------------------------------------------------- macroscopic point


def effective_local_F(F_local, rotation=True):
    """Deformation handed to the local model.

    With the rotation update the full local F is used and the objective
    evaluation follows the material rotation. Without it, the in-plane fiber
    rotation phi is stripped, R(phi)^T F_L, and never restored, so the fibers
    stay at their initial orientation.
    """
    if rotation:
        return np.asarray(F_local, dtype=float)
    phi = reorientation_angle(F_local)
    Rt = np.swapaxes(_rz_stack(phi), -1, -2)
    return Rt @ F_local


def _rz_stack(phi_deg):
    t = np.deg2rad(np.asarray(phi_deg, dtype=float))
    c, s = np.cos(t), np.sin(t)
    R = np.zeros(t.shape + (3, 3))
    R[..., 0, 0], R[..., 0, 1], R[..., 1, 0], R[..., 1, 1], R[..., 2, 2] = c, -s, s, c, 1.0
    return R


def _strip_rotation_derivative(F_L):
    """d(R(phi)^T F_L)/dF_L as (..., 3, 3, 3, 3)."""
    t = np.arctan(F_L[..., 1, 0] / F_L[..., 0, 0])
    c, s = np.cos(t), np.sin(t)
    Rt = np.zeros(t.shape + (3, 3))
    Rt[..., 0, 0], Rt[..., 0, 1], Rt[..., 1, 0], Rt[..., 1, 1], Rt[..., 2, 2] = c, s, -s, c, 1.0
    dRt = np.zeros(t.shape + (3, 3))
    dRt[..., 0, 0], dRt[..., 0, 1], dRt[..., 1, 0], dRt[..., 1, 1] = -s, c, -c, -s
    r2 = F_L[..., 0, 0] ** 2 + F_L[..., 1, 0] ** 2
    dphi = np.zeros(F_L.shape)
    dphi[..., 0, 0] = -F_L[..., 1, 0] / r2
    dphi[..., 1, 0] = F_L[..., 0, 0] / r2
    # Rt_im dF_mj / dF_kl = Rt_ik delta_jl
    out = np.einsum("...ik,jl->...ijkl", Rt, I3)
    out = out + np.einsum("...ij,...kl->...ijkl", dRt @ F_L, dphi)
    return out


def network_tangent(model, U, dt, state, h=None):
    """d sigma_U / d U by central differences: (..., 3, 3, 6), symmetric directions."""
    U = np.asarray(U, dtype=float)
    if h is None:
        h = 1e-7 * (1.0 + np.max(np.abs(U)))
    lead = U.shape[:-2]
    E = (h * UNIT_SYM).reshape((6,) + (1,) * len(lead) + (3, 3))
    Us = np.concatenate([U + E, U - E], axis=0)
    dtb = np.broadcast_to(np.asarray(dt, dtype=float), (12,) + lead)
    sig, _ = model.evaluate(Us, dtb, broadcast_state(state, (12,)))
    return np.moveaxis((sig[:6] - sig[6:]) / (2.0 * h), 0, -1)


def full_point_eval(model, F, dt, theta0, state, tangent=True, rotation=True):
    """Macroscopic integration-point update through a local-frame model.

    Builds the off-axis frame, maps F to the fiber frame, splits off the
    rotation by polar decomposition, evaluates the model on the stretch,
    rotates the stress back and returns the global Cauchy stress, the
    derivative d sigma / d F (..., 3, 3, 3, 3) and the new state.
    """
    F = np.asarray(F, dtype=float)
    Q = off_axis_frame(theta0)
    F_L = Q @ F @ Q.T
    F_e = effective_local_F(F_L, rotation)
    R, U, dR, dU = polar_derivatives(F_e)
    dtb = np.broadcast_to(np.asarray(dt, dtype=float), F.shape[:-2])
    sig_U, new = model.evaluate(U, dtb, state)
    sig_L = R @ sig_U @ np.swapaxes(R, -1, -2)
    sigma = Q.T @ sig_L @ Q
    if not tangent:
        return sigma, None, new
    N = network_tangent(model, U, dtb, state)  # (..., 3, 3, 6)
    # d U-coefficient (Voigt slot) / d F_e: diagonal and upper off-diagonal entries
    dUc = np.stack([dU[..., i, j, :, :] for i, j in VOIGT_PAIRS], axis=-3)  # (..., 6, 3, 3)
    dsigU = np.einsum("...ijm,...mkl->...ijkl", N, dUc)
    A = np.einsum("...imkl,...mn,...jn->...ijkl", dR, sig_U, R)
    dsigL = A + np.swapaxes(A, -3, -4) + np.einsum("...im,...mnkl,...jn->...ijkl", R, dsigU, R)
    if not rotation:
        dsigL = np.einsum("...ijmn,...mnkl->...ijkl", dsigL, _strip_rotation_derivative(F_L))
    # sigma = Q^T sigma_L Q with F_L = Q F Q^T
    D = np.einsum("mi,nj,...mnpq,pk,ql->...ijkl", Q, Q, dsigL, Q, Q, optimize=True)
    return sigma, D, new


# ---------------------------------------------------------------- training


@dataclass
class TrainSpec:
    epochs: int = 2000
    learning_rate: float = 1e-2
    patience: int = 200
    validation_fraction: float = 0.2
    seed: int = 0
    betas: tuple = (0.9, 0.999)
    max_rejections: int = 10


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    rejections: int = 0
    train_idx: list = field(default_factory=list)
    val_idx: list = field(default_factory=list)


def _stack_group(dataset, idx):
    U = np.stack([dataset.paths[i].U for i in idx])  # (S, T+1, 3, 3)
    dt = np.stack([dataset.paths[i].dt for i in idx])  # (S, T)
    y = np.stack([dataset.stress[i] for i in idx])  # (S, T+1, 6)
    return U, dt, y


def _groups(dataset, idx):
    g = {}
    for i in idx:
        g.setdefault(dataset.paths[i].n_steps, []).append(i)
    return [_stack_group(dataset, v) for v in g.values()]


def component_scale(dataset, idx=None):
    """Per-component standard deviation of the target stresses (records t >= 1)."""
    idx = range(len(dataset)) if idx is None else idx
    y = np.concatenate([dataset.stress[i][1:] for i in idx], axis=0)
    std = y.std(axis=0)
    return np.where(std > 0.0, std, 1.0)


def predict(params, layout, U, dt):
    """Network stresses (S, T+1, 6) for stacked paths U (S, T+1, 3, 3)."""
    S, T1 = U.shape[:2]
    state = layout.fresh_state((S,))
    out = np.zeros((S, T1, 6))
    for t in range(1, T1):
        sig, state = forward(params, layout, U[:, t], dt[:, t - 1], state)
        out[:, t] = sym_to_voigt(sig)
    return out


def loss(params, layout, groups, scale):
    tot, count = 0.0, 0
    for U, dt, y in groups:
        r = (predict(params, layout, U, dt)[:, 1:] - y[:, 1:]) / scale
        tot += np.sum(r**2)
        count += r.size
    return tot / count


def loss_and_gradient(params, layout, groups, scale, h=1e-7):
    """Normalized MSE and its gradient with respect to all 12 N parameters.

    The history of every point carries its sensitivity to that point's six
    encoder weights; each step differentiates the material update by a
    central difference along the combined (stretch, history) direction.
    """
    N, nf = layout.n_points, layout.n_fiber
    gW = np.zeros((N, 6))
    gd = np.zeros((N, 6))
    tot, count = 0.0, 0
    nm = layout.n_matrix
    for U, dt, y in groups:
        S, T1 = U.shape[:2]
        state = layout.fresh_state((S,))
        zlen = state.size()
        dz = np.zeros((6, S, nm, zlen))
        Wm = voigt_to_sym(params.W)
        count += S * (T1 - 1) * 6
        for t in range(1, T1):
            D = U[:, t] - I3  # (S, 3, 3)
            Uj = I3 + Wm * D[:, None]
            s, new = _point_stresses(layout, Uj, dt[:, t - 1], state)
            pred = np.sum(params.d * s, axis=-2)
            r = (pred - y[:, t]) / scale
            tot += np.sum(r**2)
            gres = 2.0 * r / scale  # dL/dpred (unnormalized by count)
            gd += np.einsum("sk,sjk->jk", gres, s)
            # directions: dU_j / dW_jp = E_p * D for every point
            dU = UNIT_SYM[:, None, None] * D[None, :, None]  # (6, S, 1, 3, 3)
            dU = np.broadcast_to(dU, (6, S, N, 3, 3))
            z = state.to_vector()  # (S, nm, zlen)
            # step along each direction scaled to a relative perturbation of ~h
            mag_u = np.max(np.abs(dU), axis=(-1, -2))  # (6, S, N)
            mag_z = np.zeros((6, S, N))
            mag_z[..., nf:] = np.max(np.abs(dz), axis=-1)
            mag = np.maximum(mag_u, mag_z)
            base = np.zeros((S, N))
            base[:, :] = np.max(np.abs(Uj), axis=(-1, -2))
            base[:, nf:] = np.maximum(base[:, nf:], np.max(np.abs(z), axis=-1))
            eps = np.where(mag > 0.0, h * (1.0 + base) / np.where(mag > 0.0, mag, 1.0), 0.0)
            e4 = eps[..., None, None]
            Up = np.concatenate([Uj + e4 * dU, Uj - e4 * dU], axis=0)  # (12, S, N, 3, 3)
            ez = eps[..., nf:, None]
            zp = np.concatenate([z + ez * dz, z - ez * dz], axis=0)
            st_p = MatrixState.from_vector(zp, layout.matrix_props.n_modes)
            dtp = np.broadcast_to(dt[:, t - 1], (12, S))
            sp, newp = _point_stresses(layout, Up, dtp, st_p)
            den = np.where(eps > 0.0, 2.0 * eps, 1.0)[..., None]
            ds = (sp[:6] - sp[6:]) / den  # (6, S, N, 6) d sigma_j,k / d W_jp
            ds = np.where(eps[..., None] > 0.0, ds, 0.0)
            zn = newp.to_vector()
            dz = np.where(ez > 0.0, (zn[:6] - zn[6:]) / np.where(ez > 0.0, 2.0 * ez, 1.0), 0.0)
            gW += np.einsum("sk,jk,psjk->jp", gres, params.d, ds)
            state = new
    return tot / count, PrnnParams(gW / count, gd / count)


def _split(n, fraction, rng):
    perm = rng.permutation(n)
    n_val = int(round(fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if fraction > 0 and n > 1 else 0), n - 1)
    return sorted(perm[n_val:].tolist()), sorted(perm[:n_val].tolist())


def train(dataset, layout, spec=TrainSpec(), params=None):
    """Adam on the normalized MSE; returns the best-validation parameters and a report."""
    rng = np.random.default_rng(spec.seed)
    if params is None:
        params = PrnnParams.initialize(layout.n_points, rng)
    tr, va = _split(len(dataset), spec.validation_fraction, rng)
    scale = component_scale(dataset, tr)
    g_tr, g_va = _groups(dataset, tr), _groups(dataset, va)
    report = TrainReport(train_idx=tr, val_idx=va)
    x = params.to_vector()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2 = spec.betas
    N = layout.n_points
    best = params.copy()

    def val_of(p):
        return loss(p, layout, g_va, scale) if g_va else None

    cur = params
    L, g = loss_and_gradient(cur, layout, g_tr, scale)
    vl = val_of(cur)
    report.train_loss.append(L)
    report.val_loss.append(vl)
    report.best_val = vl if vl is not None else L
    stagnant = 0
    for epoch in range(1, spec.epochs + 1):
        gv = g.to_vector()
        m = b1 * m + (1 - b1) * gv
        v = b2 * v + (1 - b2) * gv**2
        mh = m / (1 - b1**epoch)
        vh = v / (1 - b2**epoch)
        step = spec.learning_rate * mh / (np.sqrt(vh) + 1e-8)
        for _ in range(spec.max_rejections + 1):
            trial = PrnnParams.from_vector(x - step, N)
            try:
                L, g = loss_and_gradient(trial, layout, g_tr, scale)
                break
            except (EvaluationError, DomainError):
                report.rejections += 1
                step = 0.5 * step
        else:
            raise SolverError("training step rejected repeatedly", epoch=epoch)
        if not np.isfinite(L):
            raise SolverError("non-finite training loss", epoch=epoch)
        x = trial.to_vector()
        cur = trial
        vl = val_of(cur)
        report.train_loss.append(L)
        report.val_loss.append(vl)
        crit = vl if vl is not None else L
        if crit < report.best_val:
            report.best_val, report.best_epoch, best = crit, epoch, cur.copy()
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= spec.patience:
                break
    if spec.epochs == 0:
        best = params.copy()
    return best, report


# ---------------------------------------------------------------- transfer


def transfer_properties(params, layout, fiber_props=None, matrix_props=None, n_modes=None):
    """New layout with swapped properties; the parameters are not touched."""
    fp = layout.fiber_props if fiber_props is None else fiber_props
    mp = layout.matrix_props if matrix_props is None else matrix_props
    if not isinstance(fp, FiberProperties) or not isinstance(mp, MatrixProperties):
        raise DomainError("transfer requires fiber and matrix property sets of the trained families")
    if n_modes is not None:
        mp = mode_subset(mp, n_modes)
    return PrnnLayout(layout.n_points, layout.n_fiber, fp, mp)


def error_metrics(params, layout, dataset):
    """MAE over all components and steps (MPa) and as % of the test stress std."""
    abs_err, n, ys = 0.0, 0, []
    for U, dt, y in _groups(dataset, range(len(dataset))):
        pred = predict(params, layout, U, dt)
        abs_err += np.sum(np.abs(pred[:, 1:] - y[:, 1:]))
        n += pred[:, 1:].size
        ys.append(y[:, 1:].reshape(-1))
    mae = abs_err / n
    std = np.concatenate(ys).std()
    return mae, 100.0 * mae / std if std > 0 else float("inf")


def mode_sweep(params, layout, matrix_props, dataset, counts=None):
    """Error versus number of matrix modes, no retraining (one pass per count)."""
    counts = range(1, matrix_props.n_modes + 1) if counts is None else counts
    rows = []
    for n in counts:
        lay = transfer_properties(params, layout, matrix_props=matrix_props, n_modes=n)
        mae, rel = error_metrics(params, lay, dataset)
        rows.append((n, mae, rel))
    return rows
