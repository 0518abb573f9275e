"""Coupon-scale finite-element solver with a homogenized point evaluator.

Gauge section of an off-axis coupon meshed with linear 6-node wedges, one
integration point each. Nodal equilibrium is written with the nominal stress
on the reference configuration, which is equivalent to the updated-Lagrangian
statement with Cauchy stress on the current configuration. Every integration
point runs the surrogate through the objective frame update (fiber frame,
polar split, rotate back).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError
from .kinematics import (
    nominal_stress,
    nominal_stress_tangent,
    off_axis_frame,
    reorientation_angle,
    tangent_to_voigt,
)
from .pathgen import CreepProtocol, protocol_end_time
from .prnn import full_point_eval
from .stepping import AdaptiveStepping, march

I3 = np.eye(3)


@dataclass(frozen=True)
class CouponSpec:
    length: float = 120.0  # gauge length L0 [mm]
    width: float = 20.0
    thickness: float = 1.0
    theta0: float = 15.0
    tabs: str = "straight"  # or "oblique"
    beta: float = 90.0  # tab angle [deg], used for oblique tabs
    n_length: int = 48
    n_width: int = 6
    n_thickness: int = 1

    def __post_init__(self):
        if min(self.length, self.width, self.thickness) <= 0.0:
            raise DomainError("coupon dimensions must be positive")
        if self.tabs not in ("straight", "oblique"):
            raise DomainError(f"unknown end-tab style {self.tabs!r}")
        if not 0.0 < self.beta < 180.0:
            raise DomainError("oblique tab angle must lie in (0, 180) degrees")
        if min(self.n_length, self.n_width, self.n_thickness) < 1:
            raise DomainError("mesh divisions must be at least 1")

    @property
    def area(self):
        return self.width * self.thickness


# reference gradients of the linear wedge at its centroid (xi = eta = 1/3, zeta = 0)
_WEDGE_DN = np.array(
    [
        [-0.5, -0.5, -1.0 / 6.0],
        [0.5, 0.0, -1.0 / 6.0],
        [0.0, 0.5, -1.0 / 6.0],
        [-0.5, -0.5, 1.0 / 6.0],
        [0.5, 0.0, 1.0 / 6.0],
        [0.0, 0.5, 1.0 / 6.0],
    ]
)


@dataclass
class MacroMesh:
    nodes: np.ndarray
    elements: np.ndarray  # (n_el, 6)
    top: np.ndarray  # node indices on the loaded end
    bottom: np.ndarray
    dN: np.ndarray = field(repr=False)  # (n_el, 6, 3)
    volume: np.ndarray = field(repr=False)  # (n_el,)
    spec: CouponSpec = None

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]


def tab_shear(beta):
    """cot(beta), exactly zero for straight (90 degree) tabs."""
    return 0.0 if beta == 90.0 else 1.0 / math.tan(math.radians(beta))


def build_mesh(spec):
    """Structured wedge mesh: each hexahedral cell is split into two wedges."""
    nx, ny, nz = spec.n_width, spec.n_length, spec.n_thickness
    xs = np.linspace(0.0, spec.width, nx + 1)
    ys = np.linspace(0.0, spec.length, ny + 1)
    zs = np.linspace(0.0, spec.thickness, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    k = tab_shear(spec.beta) if spec.tabs == "oblique" else 0.0
    if k != 0.0:
        Y = Y + (X - 0.5 * spec.width) * k
    nodes = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)

    def nid(i, j, l):
        return (i * (ny + 1) + j) * (nz + 1) + l

    els = []
    for i in range(nx):
        for j in range(ny):
            for l in range(nz):
                a, b, c, d = nid(i, j, l), nid(i + 1, j, l), nid(i + 1, j + 1, l), nid(i, j + 1, l)
                a2, b2, c2, d2 = (n + 1 for n in (a, b, c, d))
                els.append((a, b, c, a2, b2, c2))
                els.append((a, c, d, a2, c2, d2))
    elements = np.array(els)
    Xe = nodes[elements]  # (e, 6, 3)
    Jac = np.einsum("eai,aj->eij", Xe, _WEDGE_DN)
    detJ = np.linalg.det(Jac)
    if np.any(detJ <= 0.0):
        raise DomainError("degenerate wedge element in coupon mesh")
    dN = np.einsum("aj,eji->eai", _WEDGE_DN, np.linalg.inv(Jac))
    I, J, _ = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    J = J.reshape(-1)
    return MacroMesh(nodes, elements, np.nonzero(J == ny)[0], np.nonzero(J == 0)[0], dN, detJ, spec)


def oblique_angle(S, load=1, shear=3):
    """Tab angle beta = acot(-S_16 / S_11) in (0, 180) degrees.

    ``S`` is a 6x6 compliance in Voigt order with engineering shear; ``load``
    and ``shear`` pick the loading-direction and in-plane shear slots.
    """
    S = np.asarray(S, dtype=float)
    s11, s16 = S[load, load], S[load, shear]
    if not s11 > 0.0:
        raise DomainError("compliance S11 must be positive")
    return math.degrees(math.atan2(1.0, -s16 / s11))


def initial_compliance(model, theta0, dt=1.0):
    """Inverse of the global 6x6 tangent of the evaluator at F = I."""
    _, D, _ = full_point_eval(model, I3, dt, theta0, model.fresh_state())
    return np.linalg.inv(tangent_to_voigt(D))


# ---------------------------------------------------------------- boundary conditions


class _Dofs:
    """Reduced-dof map. Top y-dofs share one master dof."""

    def __init__(self, mesh, lateral_free):
        n = mesh.n_nodes
        kind = np.zeros((n, 3), dtype=int)  # 0 free, 1 fixed, 2 master
        kind[mesh.bottom, 1] = 1
        kind[mesh.top, 1] = 2
        if lateral_free:
            X = mesh.nodes
            o = mesh.bottom[np.argmin(np.abs(X[mesh.bottom]).sum(axis=1))]
            kind[o, :] = 1
            far = mesh.bottom[(np.abs(X[mesh.bottom, 2]) < 1e-12)]
            far = far[np.argmax(X[far, 0])]
            kind[far, 2] = 1
        else:
            kind[mesh.bottom, :] = 1
            kind[mesh.top, 0] = 1
            kind[mesh.top, 2] = 1
        self.kind = kind.reshape(-1)
        free = np.nonzero(self.kind == 0)[0]
        self.n_free = free.size
        self.master = self.n_free
        col = np.full(3 * n, -1)
        col[free] = np.arange(free.size)
        col[self.kind == 2] = self.master
        self.col = col
        rows = np.nonzero(col >= 0)[0]
        self.T = sp.csr_matrix((np.ones(rows.size), (rows, col[rows])), shape=(3 * n, self.n_free + 1))
        self.top_y = 3 * mesh.top + 1
        self.top_x = 3 * mesh.top
        self.bottom = np.concatenate([3 * mesh.bottom + c for c in range(3)])
        self.top = np.concatenate([3 * mesh.top + c for c in range(3)])


# ---------------------------------------------------------------- solver

_DENSE_LIMIT = 64


def _linear_solve(K, b):
    """Sparse LU; tiny systems use a minimum-norm least-squares step instead.

    A mesh of one or two one-point wedges has zero-energy modes, so its
    tangent is singular even though the stress solution is unique.
    """
    if b.size <= _DENSE_LIMIT:
        return np.linalg.lstsq(K.toarray(), b, rcond=1e-10)[0]
    try:
        return spla.splu(K).solve(b)
    except RuntimeError as exc:
        raise SolverError(f"singular coupon tangent: {exc}") from exc



@dataclass
class FieldFrame:
    time: float
    eps_yy: np.ndarray
    sig_yy: np.ndarray
    sig_xy: np.ndarray
    phi: np.ndarray
    global_eps: float
    global_sig_yy: float
    global_sig_xy: float
    applied: float
    iterations: int
    reaction_top: np.ndarray = None
    reaction_bottom: np.ndarray = None
    work: float = 0.0


@dataclass
class RunResult:
    frames: list
    log: object
    mesh: MacroMesh = None

    def curve(self):
        return {
            "time_s": np.array([f.time for f in self.frames]),
            "eps_yy_eng": np.array([f.global_eps for f in self.frames]),
            "sig_yy_eng": np.array([f.global_sig_yy for f in self.frames]),
            "sig_xy_eng": np.array([f.global_sig_xy for f in self.frames]),
        }


class CouponSolver:
    def __init__(self, mesh, model, lateral_free=False, rotation=True, tol=1e-9):
        self.mesh, self.model = mesh, model
        self.theta0 = mesh.spec.theta0
        self.Q = off_axis_frame(self.theta0)
        self.rotation = rotation
        self.tol = tol
        self.dofs = _Dofs(mesh, lateral_free)
        ne = mesh.n_elements
        edofs = (3 * mesh.elements[:, :, None] + np.arange(3)).reshape(ne, 18)
        self._edofs = edofs
        self._ii = np.repeat(edofs, 18, axis=1).reshape(-1)
        self._jj = np.tile(edofs, (1, 18)).reshape(-1)

    def element_F(self, u):
        m = self.mesh
        # I + grad u rather than grad x: exact at rest, no cancellation
        return I3 + np.einsum("eai,eaj->eij", u.reshape(-1, 3)[m.elements], m.dN)

    def internal(self, u, dt, state, tangent=True):
        m = self.mesh
        F = self.element_F(u)
        sigma, D, new = full_point_eval(self.model, F, dt, self.theta0, state, tangent=tangent, rotation=self.rotation)
        P = nominal_stress(sigma, F)
        fe = np.einsum("eij,eaj,e->eai", P, m.dN, m.volume).reshape(-1)
        f = np.bincount(self._edofs.reshape(-1), weights=fe, minlength=3 * m.n_nodes)
        K = None
        if tangent:
            A = nominal_stress_tangent(sigma, D, F)
            ke = np.einsum("eaJ,eiJkL,ebL,e->eaibk", m.dN, A, m.dN, m.volume, optimize=True)
            K = sp.coo_matrix((ke.reshape(-1), (self._ii, self._jj)), shape=(3 * m.n_nodes,) * 2).tocsr()
        return f, K, F, P, new

    def step(self, u0, dt, state, master_disp=None, force=None, max_iter=25):
        """One increment; either the master displacement or the master force is given."""
        d = self.dofs
        T = d.T
        u = u0.copy()
        if master_disp is not None:
            u[d.kind == 2] = master_disp
        for it in range(max_iter + 1):
            f, K, F, P, new = self.internal(u, dt, state)
            r = T.T @ f
            if force is not None:
                r[d.master] -= force
            else:
                r = r[: d.n_free]
            scale = max(np.linalg.norm(f[d.top]), np.linalg.norm(f[d.bottom]), 1e-300)
            floor = 1e3 * np.finfo(float).eps * max(scale, 1.0) * math.sqrt(r.size)
            if np.max(np.abs(r), initial=0.0) <= max(self.tol * scale, floor):
                return u, f, F, P, new, it
            if it == max_iter:
                break
            Kr = (T.T @ K @ T).tocsc()
            if force is None:
                Kr = Kr[: d.n_free, : d.n_free]
            dx = _linear_solve(Kr, -r)
            if force is None:
                u[d.kind == 0] += dx
            else:
                u[d.kind == 0] += dx[: d.n_free]
                u[d.kind == 2] += dx[d.master]
            if not np.all(np.isfinite(u)):
                raise SolverError("coupon Newton produced non-finite displacements", iterations=it)
        raise SolverError("coupon Newton did not converge", residual=float(np.max(np.abs(r))), iterations=it)


def run(mesh, protocol, model, stepping=None, lateral_free=False, rotation=True, tol=1e-9):
    """Time-march a CSR or creep protocol; returns frames at every accepted step."""
    spec = mesh.spec
    stepping = stepping or AdaptiveStepping()
    solver = CouponSolver(mesh, model, lateral_free, rotation, tol)
    creep = isinstance(protocol, CreepProtocol)
    A0, L0 = spec.area, spec.length
    d = solver.dofs
    n = mesh.n_elements
    frames = [
        FieldFrame(0.0, np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), 0.0, 0.0, 0.0, 0.0, 0)
    ]
    cur = {
        "u": np.zeros(3 * mesh.n_nodes),
        "du": np.zeros(3 * mesh.n_nodes),
        "dt": None,
        "state": model.fresh_state((n,)),
        "applied": 0.0,
        "f": np.zeros(3 * mesh.n_nodes),
    }

    def attempt(t, dt):
        u0 = cur["u"].copy()
        if cur["dt"]:
            u0 = u0 + cur["du"] * (dt / cur["dt"])  # linear extrapolation predictor
        if creep:
            target = protocol.next_stress(cur["applied"], dt)
            out = solver.step(u0, dt, cur["state"], force=target * A0, max_iter=stepping.max_iter)
        else:
            target = protocol.strain(t + dt)
            out = solver.step(u0, dt, cur["state"], master_disp=target * L0, max_iter=stepping.max_iter)
        return target, out

    def commit(t, dt, result):
        target, (u, f, F, P, new, it) = result
        Fl = solver.Q @ F @ solver.Q.T
        top_disp = float(u[d.kind == 2][0])
        work = float(np.dot(0.5 * (f + cur["f"])[d.top_y], (u - cur["u"])[d.top_y]))
        frames.append(
            FieldFrame(
                t,
                F[:, 1, 1] - 1.0,
                P[:, 1, 1],
                P[:, 0, 1],
                reorientation_angle(Fl),
                top_disp / L0,
                float(f[d.top_y].sum() / A0),
                float(f[d.top_x].sum() / A0),
                target if creep else float(f[d.top_y].sum() / A0),
                it,
                f[d.top].reshape(3, -1).sum(axis=1),
                f[d.bottom].reshape(3, -1).sum(axis=1),
                work,
            )
        )
        cur["du"], cur["dt"] = u - cur["u"], dt
        cur["u"], cur["state"], cur["f"] = u, new, f
        if creep:
            cur["applied"] = target

    log = march(protocol_end_time(protocol), stepping, attempt, commit)
    return RunResult(frames, log, mesh)


@dataclass
class FieldSummary:
    time: np.ndarray
    global_eps: np.ndarray
    phi_mean: np.ndarray
    phi_min: np.ndarray
    phi_max: np.ndarray
    eps_mean: np.ndarray
    eps_min: np.ndarray
    eps_max: np.ndarray
    eps_cov: np.ndarray


def field_statistics(series):
    """Mean / min / max of phi and eps_yy per frame plus the CoV of eps_yy."""
    frames = series.frames if isinstance(series, RunResult) else series
    if not frames:
        raise DomainError("empty series")
    eps = np.array([f.eps_yy for f in frames])
    phi = np.array([f.phi for f in frames])
    mean = eps.mean(axis=1)
    std = eps.std(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.where(np.abs(mean) > 0.0, std / np.abs(mean), 0.0)
    return FieldSummary(
        np.array([f.time for f in frames]),
        np.array([f.global_eps for f in frames]),
        phi.mean(axis=1),
        phi.min(axis=1),
        phi.max(axis=1),
        mean,
        eps.min(axis=1),
        eps.max(axis=1),
        cov,
    )
