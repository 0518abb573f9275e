"""Ground-truth micromodels used to generate PRNN training data.

Level 0 is a Voigt (equal-deformation) mixture of the embedded constituent
models. Level 1 is a small periodic finite-element RVE: a structured
hexahedral grid with a single fiber along the local e1 axis, solved by Newton's
method with the macroscopic deformation imposed through periodic fluctuations,
and homogenized by volume averaging of the Cauchy stress.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .constitutive import (
    FiberProperties,
    MatrixProperties,
    broadcast_state,
    material_for,
    stress_derivative,
)
from .errors import DomainError, SolverError
from .kinematics import nominal_stress, nominal_stress_tangent, sym_to_voigt

I3 = np.eye(3)


def properties_hash(*props):
    """SHA-256 over the canonical JSON of the given property sets."""
    blob = json.dumps(
        [dict(kind=type(p).__name__, **p.to_dict()) for p in props], sort_keys=True
    ).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- level 0


class VoigtMixture:
    """Equal-deformation mixture: sigma = sum_i w_i sigma_i(F)."""

    level = 0

    def __init__(self, components):
        components = [(p, float(w)) for p, w in components]
        if not components:
            raise DomainError("mixture needs at least one constituent")
        w = np.array([c[1] for c in components])
        if np.any(w <= 0.0) or np.any(w > 1.0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must lie in (0, 1] and sum to 1")
        self.components = components
        self.materials = [material_for(p) for p, _ in components]
        self.weights = w

    @property
    def props(self):
        return [p for p, _ in self.components]

    def properties_hash(self):
        return properties_hash(*self.props)

    def fresh_state(self, shape=()):
        return tuple(m.fresh_state(shape) for m in self.materials)

    def evaluate(self, F, dt, state):
        F = np.asarray(F, dtype=float)
        sigma = np.zeros(F.shape)
        new = []
        for mat, w, s in zip(self.materials, self.weights, state):
            sig, s_new = mat.evaluate(F, dt, s)
            sigma = sigma + w * sig
            new.append(s_new)
        return sigma, tuple(new)


def voigt_evaluate(mix, path):
    """Stress sequence ``(T+1, 3, 3)`` of a mixture along a load path."""
    state = mix.fresh_state()
    out = np.zeros((path.n_steps + 1, 3, 3))
    for k in range(path.n_steps):
        try:
            out[k + 1], state = mix.evaluate(path.U[k + 1], path.dt[k], state)
        except (DomainError, SolverError) as exc:
            raise SolverError(f"mixture update failed at step {k + 1}: {exc}", step=k + 1) from exc
    return out


# ---------------------------------------------------------------- level 1 mesh

_GAUSS = np.array(
    [[a, b, c] for c in (-1.0, 1.0) for b in (-1.0, 1.0) for a in (-1.0, 1.0)]
) / np.sqrt(3.0)
_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1], [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
    dtype=float,
)


def _hex_shape_gradients(xi):
    """dN_a/dxi_i at the points ``xi`` (q, 3): returns (q, 8, 3)."""
    g = np.empty((xi.shape[0], 8, 3))
    t = 1.0 + xi[:, None, :] * _CORNERS[None, :, :]  # (q, 8, 3)
    for i in range(3):
        others = [j for j in range(3) if j != i]
        g[:, :, i] = 0.125 * _CORNERS[None, :, i] * t[:, :, others[0]] * t[:, :, others[1]]
    return g


def _graded(n, p):
    s = np.linspace(-1.0, 1.0, n + 1)
    return 0.5 + 0.5 * np.sign(s) * np.abs(s) ** p


@dataclass
class RveMesh:
    """Structured periodic hex grid over the unit cell with one e1-aligned fiber.

    Cross-section node lines are graded symmetrically about the cell center so
    that the area of the tagged elements equals the target fiber fraction.
    """

    n: int
    nodes: np.ndarray  # (n+1)^3 x 3
    elements: np.ndarray  # n^3 x 8
    fiber: np.ndarray  # n^3 bool
    periodic: np.ndarray  # node -> independent node index in [0, n^3)
    dN: np.ndarray = field(repr=False)  # (n_el, 8 gp, 8 nodes, 3) reference gradients
    weights: np.ndarray = field(repr=False)  # (n_el, 8) reference volumes

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def volume(self):
        return float(self.weights.sum())

    @property
    def fiber_fraction(self):
        return float(self.weights[self.fiber].sum() / self.weights.sum())

    @classmethod
    def build(cls, n=4, fiber_fraction=0.4, shift=(0, 0)):
        if n < 2:
            raise DomainError("RVE needs at least 2 divisions per side")
        if not 0.0 < fiber_fraction < 1.0:
            raise DomainError("fiber fraction must lie in (0, 1)")
        r = np.sqrt(fiber_fraction / np.pi)
        c = (np.arange(n) + 0.5) / n
        tag2 = (c[:, None] - 0.5) ** 2 + (c[None, :] - 0.5) ** 2 < r**2  # (y, z)
        if not tag2.any():
            raise DomainError("mesh too coarse to contain a fiber")

        def area(p):
            h = np.diff(_graded(n, p))
            return np.sum(np.outer(h, h)[tag2]) - fiber_fraction

        try:
            p = brentq(area, 0.05, 20.0, xtol=1e-14)
        except ValueError as exc:
            raise DomainError("fiber fraction not reachable on this grid") from exc
        hy = np.diff(_graded(n, p))
        # integer translation of the periodic cell: roll spacing and tags together
        sy, sz = shift
        hy_y, hy_z = np.roll(hy, sy), np.roll(hy, sz)
        tag2 = np.roll(np.roll(tag2, sy, axis=0), sz, axis=1)
        xs = np.linspace(0.0, 1.0, n + 1)
        ys = np.concatenate([[0.0], np.cumsum(hy_y)])
        zs = np.concatenate([[0.0], np.cumsum(hy_z)])
        ys[-1] = zs[-1] = 1.0

        m = n + 1
        idx = lambda i, j, k: (i * m + j) * m + k  # noqa: E731
        I, J, K = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
        nodes = np.stack([xs[I], ys[J], zs[K]], axis=-1).reshape(-1, 3)
        periodic = (((I % n) * n + (J % n)) * n + (K % n)).reshape(-1)
        ei, ej, ek = [a.reshape(-1) for a in np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")]
        elements = np.stack(
            [
                idx(ei + a, ej + b, ek + c)
                for a, b, c in ((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1))
            ],
            axis=-1,
        )
        fiber = tag2[ej, ek]

        g = _hex_shape_gradients(_GAUSS)  # (8 gp, 8 nodes, 3)
        Xe = nodes[elements]  # (e, 8, 3)
        Jac = np.einsum("eai,qaj->eqij", Xe, g)  # dX_i/dxi_j
        detJ = np.linalg.det(Jac)
        if np.any(detJ <= 0.0):
            raise DomainError("degenerate RVE element")
        dN = np.einsum("qaj,eqji->eqai", g, np.linalg.inv(Jac))
        return cls(n, nodes, elements, fiber, periodic, dN, detJ)


# ---------------------------------------------------------------- level 1 solver


@dataclass
class RveState:
    w: np.ndarray  # periodic fluctuation per independent node, (n^3, 3)
    fiber: object
    matrix: object


class Rve:
    """Periodic RVE as a local-frame material: ``evaluate(F, dt, state)``."""

    level = 1

    def __init__(self, mesh, fiber_props, matrix_props, tol=1e-8, max_iter=25):
        if not isinstance(fiber_props, FiberProperties) or not isinstance(matrix_props, MatrixProperties):
            raise DomainError("RVE expects fiber and matrix property sets")
        self.mesh = mesh
        self.fiber_props, self.matrix_props = fiber_props, matrix_props
        self.fiber_mat, self.matrix_mat = material_for(fiber_props), material_for(matrix_props)
        self.tol, self.max_iter = tol, max_iter
        self.last_iterations = 0
        m = mesh
        self._fe = np.nonzero(m.fiber)[0]
        self._me = np.nonzero(~m.fiber)[0]
        n_ind = m.n**3
        # node dof -> reduced dof; independent node 0 is pinned
        dof = np.arange(3 * n_ind).reshape(n_ind, 3) - 3
        self._node_dof = dof[m.periodic]  # (nodes, 3), -ve = pinned
        self._n_red = 3 * n_ind - 3
        edofs = self._node_dof[m.elements].reshape(m.n_elements, 24)
        self._edofs = edofs
        ii = np.repeat(edofs, 24, axis=1).reshape(-1)
        jj = np.tile(edofs, (1, 24)).reshape(-1)
        self._keep = (ii >= 0) & (jj >= 0)
        self._ii, self._jj = ii[self._keep], jj[self._keep]

    @property
    def props(self):
        return [self.fiber_props, self.matrix_props]

    def properties_hash(self):
        return properties_hash(*self.props)

    def fresh_state(self, shape=()):
        if shape != ():
            raise DomainError("RVE states are not batched")
        m = self.mesh
        return RveState(
            np.zeros((m.n**3, 3)),
            self.fiber_mat.fresh_state((self._fe.size, 8)),
            self.matrix_mat.fresh_state((self._me.size, 8)),
        )

    def _gp_F(self, Fbar, w):
        # F = Fbar + grad w; exact at zero fluctuation (no round-off from X)
        m = self.mesh
        return Fbar + np.einsum("eai,eqaj->eqij", w[m.periodic][m.elements], m.dN)

    def _material(self, Fg, dt, state, tangent):
        sig = np.empty(Fg.shape)
        A = np.empty(Fg.shape + (3, 3)) if tangent else None
        new = {}
        for mat, els, s, key in (
            (self.fiber_mat, self._fe, state.fiber, "fiber"),
            (self.matrix_mat, self._me, state.matrix, "matrix"),
        ):
            if els.size == 0:
                new[key] = s
                continue
            Fe = Fg[els]
            sig[els], new[key] = mat.evaluate(Fe, dt, s)
            if tangent:
                dsig = stress_derivative(mat.evaluate, Fe, dt, s)
                A[els] = nominal_stress_tangent(sig[els], dsig, Fe)
        return sig, A, new

    def _assemble(self, Fg, sig, A, tangent):
        m = self.mesh
        P = nominal_stress(sig, Fg)
        fe = np.einsum("eqij,eqaj,eq->eai", P, m.dN, m.weights).reshape(m.n_elements, 24)
        f = np.zeros(self._n_red)
        sel = self._edofs >= 0
        np.add.at(f, self._edofs[sel], fe[sel])
        K = None
        if tangent:
            ke = np.einsum("eqaJ,eqiJkL,eqbL,eq->eaibk", m.dN, A, m.dN, m.weights, optimize=True)
            ke = ke.reshape(m.n_elements, 24 * 24)
            K = sp.coo_matrix(
                (ke.reshape(-1)[self._keep], (self._ii, self._jj)), shape=(self._n_red,) * 2
            ).tocsc()
        return f, K

    def solve_step(self, F, dt, state):
        """Equilibrate the RVE at macroscopic ``F``; returns ``(sigma_hom, new_state)``."""
        F = np.asarray(F, dtype=float)
        if F.shape != (3, 3):
            raise DomainError("RVE expects a single 3x3 deformation gradient")
        if not np.linalg.det(F) > 0.0:
            raise DomainError("macroscopic deformation gradient must have positive determinant")
        w = state.w.copy()
        scale = None
        it = 0
        while True:
            Fg = self._gp_F(F, w)
            sig, A, new = self._material(Fg, dt, state, tangent=True)
            f, K = self._assemble(Fg, sig, A, tangent=True)
            norm = np.linalg.norm(f)
            if scale is None:
                scale = norm
                # round-off level of the internal forces; keeps F = I at zero iterations
                floor = 1e3 * np.finfo(float).eps * np.max(np.abs(A)) * self.mesh.volume
            if norm <= max(self.tol * scale, floor):
                break
            if it >= self.max_iter:
                raise SolverError("RVE Newton did not converge", residual=norm, iterations=it)
            du = spla.spsolve(K, -f)
            w.reshape(-1)[3:] += du
            it += 1
        self.last_iterations = it
        J = np.linalg.det(Fg)
        wJ = self.mesh.weights * J
        sigma = np.einsum("eqij,eq->ij", sig, wJ) / wJ.sum()
        return 0.5 * (sigma + sigma.T), RveState(w, new["fiber"], new["matrix"])

    def evaluate(self, F, dt, state):
        return self.solve_step(F, dt, state)


def rve_solve_step(rve, F_target, dt, state):
    return rve.solve_step(F_target, dt, state)


# ---------------------------------------------------------------- datasets


@dataclass
class SnapshotDataset:
    """Paths with homogenized local-frame stresses (Voigt tensor components)."""

    paths: list
    stress: list  # per sample, (T+1, 6)
    level: int
    properties_hash: str
    seed: int = None
    skipped: int = 0

    def __len__(self):
        return len(self.paths)

    def subset(self, idx):
        return SnapshotDataset(
            [self.paths[i] for i in idx],
            [self.stress[i] for i in idx],
            self.level,
            self.properties_hash,
            self.seed,
            0,
        )


def _evaluate_batch(generator, paths):
    """Evaluate equal-length paths in one batched sweep."""
    U = np.stack([p.U for p in paths], axis=1)  # (T+1, n, 3, 3)
    dt = np.stack([p.dt for p in paths], axis=1)  # (T, n)
    state = generator.fresh_state((len(paths),))
    out = np.zeros(U.shape)
    for k in range(dt.shape[0]):
        out[k + 1], state = generator.evaluate(U[k + 1], dt[k], state)
    return [sym_to_voigt(out[:, i]) for i in range(len(paths))]


def _evaluate_single(generator, path):
    state = generator.fresh_state()
    out = np.zeros(path.U.shape)
    for k in range(path.n_steps):
        out[k + 1], state = generator.evaluate(path.U[k + 1], path.dt[k], state)
    return sym_to_voigt(out)


def generate_dataset(generator, paths, seed=None):
    """Evaluate every path from a fresh state and collect a dataset.

    Failed paths are skipped and counted. Mixtures are evaluated in batches of
    equal-length paths; the RVE path by path.
    """
    if len(paths) == 0:
        raise DomainError("no paths to evaluate")
    results = [None] * len(paths)
    batchable = isinstance(generator, VoigtMixture)
    if batchable:
        groups = {}
        for i, p in enumerate(paths):
            groups.setdefault(p.n_steps, []).append(i)
        for idx in groups.values():
            try:
                for i, s in zip(idx, _evaluate_batch(generator, [paths[i] for i in idx])):
                    results[i] = s
            except (DomainError, SolverError):
                pass  # fall back to per-path evaluation to isolate failures
    for i, p in enumerate(paths):
        if results[i] is None:
            try:
                results[i] = _evaluate_single(generator, p)
            except (DomainError, SolverError):
                results[i] = False
    keep = [i for i, r in enumerate(results) if r is not False]
    return SnapshotDataset(
        [paths[i] for i in keep],
        [results[i] for i in keep],
        generator.level,
        generator.properties_hash(),
        seed,
        len(paths) - len(keep),
    )
