"""Single macroscopic material point under uniaxial engineering loading.

The point is driven by F_yy (strain-rate control) or by the nominal stress
P_yy (creep control). The loaded edge does not rotate (F_yx = 0) but may
translate transversely, and out-of-plane shear rotations about y are held
(F_yz = F_zx = 0). The remaining components F_xx, F_xy, F_xz, F_zy, F_zz are
found by Newton's method so that the matching nominal stresses vanish. P_yx,
P_yz and P_zx are the reactions of the kinematic constraints.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .kinematics import nominal_stress, nominal_stress_tangent, off_axis_frame, reorientation_angle
from .pathgen import CreepProtocol, protocol_end_time
from .prnn import full_point_eval
from .stepping import AdaptiveStepping, march

FREE = ((0, 0), (0, 1), (0, 2), (2, 1), (2, 2))
YY = (1, 1)


@dataclass
class SinglePointProblem:
    theta0: float
    model: object
    protocol: object
    rotation: bool = True
    stepping: AdaptiveStepping = field(default_factory=AdaptiveStepping)
    tol: float = 1e-8  # MPa, on the free nominal-stress components


@dataclass
class Curve:
    time: list = field(default_factory=lambda: [0.0])
    eps_yy: list = field(default_factory=lambda: [0.0])
    sig_yy: list = field(default_factory=lambda: [0.0])
    sig_xy: list = field(default_factory=lambda: [0.0])
    applied: list = field(default_factory=lambda: [0.0])
    phi: list = field(default_factory=lambda: [0.0])
    residual: list = field(default_factory=lambda: [0.0])
    iterations: list = field(default_factory=lambda: [0])
    F: list = field(default_factory=lambda: [np.eye(3)])
    log: object = None

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in ("time", "eps_yy", "sig_yy", "sig_xy", "applied", "phi")}


def _newton(problem, F0, dt, state, target_P=None, target_F=None):
    """Solve the mixed constraint system for one increment."""
    F = F0.copy()
    rows = list(FREE)
    cols = list(FREE)
    if target_P is not None:
        rows.append(YY)
        cols.append(YY)
    else:
        F[YY] = target_F
    ri = np.array(rows)
    ci = np.array(cols)
    for it in range(problem.stepping.max_iter + 1):
        sigma, D, new = full_point_eval(problem.model, F, dt, problem.theta0, state, rotation=problem.rotation)
        P = nominal_stress(sigma, F)
        r = P[ri[:, 0], ri[:, 1]].copy()
        if target_P is not None:
            r[-1] -= target_P
        scale = max(1.0, np.max(np.abs(P)))
        if np.max(np.abs(r)) < max(problem.tol, 1e-13 * scale):
            return F, sigma, P, new, it, float(np.max(np.abs(r)))
        if it == problem.stepping.max_iter:
            break
        A = nominal_stress_tangent(sigma, D, F)
        Jm = A[ri[:, 0], ri[:, 1]][:, ci[:, 0], ci[:, 1]]
        dx = np.linalg.solve(Jm, -r)
        F[ci[:, 0], ci[:, 1]] += dx
        if not np.all(np.isfinite(F)) or not np.linalg.det(F) > 0.0:
            raise SolverError("single-point Newton left the admissible set", iterations=it)
    raise SolverError("single-point Newton did not converge", residual=float(np.max(np.abs(r))))


def solve(problem):
    """Run the protocol; CSR prescribes F_yy, creep tracks the ramp-hold stress."""
    proto = problem.protocol
    creep = isinstance(proto, CreepProtocol)
    Q = off_axis_frame(problem.theta0)
    curve = Curve()
    cur = {"F": np.eye(3), "state": problem.model.fresh_state(), "applied": 0.0}

    def attempt(t, dt):
        if creep:
            target = proto.next_stress(cur["applied"], dt)
            out = _newton(problem, cur["F"], dt, cur["state"], target_P=target)
        else:
            target = proto.strain(t + dt)
            out = _newton(problem, cur["F"], dt, cur["state"], target_F=1.0 + target)
        return target, out

    def commit(t, dt, result):
        target, (F, sigma, P, new, it, res) = result
        cur["F"], cur["state"] = F, new
        if creep:
            cur["applied"] = target
        curve.time.append(t)
        curve.eps_yy.append(F[1, 1] - 1.0)
        curve.sig_yy.append(P[1, 1])
        curve.sig_xy.append(P[0, 1])
        curve.applied.append(target if creep else P[1, 1])
        curve.phi.append(float(reorientation_angle(Q @ F @ Q.T)))
        curve.residual.append(res)
        curve.iterations.append(it)
        curve.F.append(F)

    curve.log = march(protocol_end_time(proto), problem.stepping, attempt, commit)
    return curve


def solve_csr(problem):
    return solve(problem)


def solve_creep(problem):
    if not isinstance(problem.protocol, CreepProtocol):
        raise SolverError("solve_creep needs a creep protocol")
    return solve(problem)


def rotation_update(F_local, flag):
    """Local deformation seen by the model with or without the fiber-rotation update."""
    from .prnn import effective_local_F

    return effective_local_F(F_local, flag)
