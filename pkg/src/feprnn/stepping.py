"""Adaptive time stepping shared by the single-point and coupon solvers."""

from dataclasses import dataclass

from .errors import DomainError, EvaluationError, SolverError

RECOVERABLE = (SolverError, DomainError, EvaluationError)


@dataclass(frozen=True)
class AdaptiveStepping:
    dt0: float = 1.0
    dt_min: float = 1e-6
    dt_max: float = 1.0
    cut: float = 0.5
    growth: float = 1.2
    grow_after: int = 5
    max_iter: int = 25
    max_cuts: int = 8

    def __post_init__(self):
        if not 0.0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise DomainError("stepping requires 0 < dt_min <= dt0 <= dt_max")
        if not 0.0 < self.cut < 1.0 < self.growth:
            raise DomainError("stepping requires cut < 1 < growth")


@dataclass
class StepLog:
    accepted: int = 0
    cuts: int = 0
    failed: bool = False
    message: str = ""


def march(t_end, stepping, attempt, commit):
    """Advance from t = 0 to ``t_end``.

    ``attempt(t, dt)`` returns a trial result or raises a recoverable error;
    ``commit(t_new, dt, result)`` accepts it. Failed attempts cut dt; after
    ``grow_after`` consecutive successes dt grows up to ``dt_max``. The run
    stops with ``failed`` set when dt would drop below ``dt_min`` or more than
    ``max_cuts`` consecutive cuts are needed.
    """
    log = StepLog()
    t, dt = 0.0, stepping.dt0
    streak, consecutive = 0, 0
    span = max(abs(t_end), 1.0)
    while t_end - t > 1e-12 * span:
        h = min(dt, t_end - t)
        try:
            result = attempt(t, h)
        except RECOVERABLE as exc:
            consecutive += 1
            log.cuts += 1
            dt = h * stepping.cut
            streak = 0
            if consecutive > stepping.max_cuts or dt < stepping.dt_min:
                log.failed = True
                log.message = f"step at t = {t:.6g} s failed after {consecutive} cuts: {exc}"
                return log
            continue
        t = t + h if t_end - (t + h) > 1e-12 * span else t_end
        commit(t, h, result)
        log.accepted += 1
        consecutive = 0
        streak += 1
        if streak >= stepping.grow_after:
            dt = min(dt * stepping.growth, stepping.dt_max)
            streak = 0
    return log
