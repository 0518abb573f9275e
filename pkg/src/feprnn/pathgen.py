"""Load-path generation for training, validation and test data.

Paths are proportional: ``U_t = I + m(t) D`` with a fixed symmetric unit
direction D and a scalar Gaussian-process magnitude m that starts at zero and
may reverse (unloading/reloading). Time increments are either fixed or drawn
log-uniformly per step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError
from .kinematics import voigt_to_sym

I3 = np.eye(3)


@dataclass(frozen=True)
class PathSpec:
    count: int = 144
    steps: int = 60
    length_scale: float = 0.2  # fraction of the path length
    amplitude: float = 0.08  # cap on max |U - I|
    dt: float = 1.0  # fixed increment [s], used when dt_bounds is None
    dt_bounds: tuple = None  # (low, high) [s] for log-uniform sampling
    seed: int = 0
    max_retries: int = 20

    def __post_init__(self):
        if self.count < 0 or self.steps < 0:
            raise DomainError("path count and step count must be non-negative")
        if self.amplitude < 0.0 or self.length_scale <= 0.0:
            raise DomainError("amplitude must be >= 0 and length scale > 0")
        if self.dt_bounds is None:
            if not self.dt > 0.0:
                raise DomainError("fixed time increment must be positive")
        else:
            lo, hi = self.dt_bounds
            if not 0.0 < lo <= hi:
                raise DomainError("log-uniform time bounds must satisfy 0 < low <= high")


@dataclass
class LoadPath:
    """Stretch sequence ``U`` of shape (T+1, 3, 3) with ``U[0] = I`` and
    increments ``dt`` of shape (T,), ``dt[k]`` leading from record k to k+1."""

    U: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.dt = np.asarray(self.dt, dtype=float)
        if self.U.shape[0] != self.dt.shape[0] + 1:
            raise DomainError("a path with T increments needs T + 1 stretch records")
        if np.any(self.dt <= 0.0):
            raise DomainError("time increments must be positive")

    @property
    def n_steps(self):
        return self.dt.shape[0]

    @property
    def time(self):
        return np.concatenate([[0.0], np.cumsum(self.dt)])


def _se_cholesky(steps, length_scale):
    t = np.arange(steps + 1, dtype=float)
    ell = max(length_scale * max(steps, 1), 1e-12)
    K = np.exp(-0.5 * ((t[:, None] - t[None, :]) / ell) ** 2)
    # condition on m(0) = 0: covariance of m(t) - m(0) given m(0)
    k0 = K[1:, 0]
    Kc = K[1:, 1:] - np.outer(k0, k0)
    jitter = 1e-10 * np.trace(Kc) / max(steps, 1)
    return np.linalg.cholesky(Kc + jitter * np.eye(steps))


def random_direction(rng):
    """Symmetric unit direction, uniform on the sphere of the six components."""
    v = rng.standard_normal(6)
    return voigt_to_sym(v / np.linalg.norm(v))


def _one_path(rng, spec, L):
    n = spec.steps
    for _ in range(spec.max_retries):
        D = random_direction(rng)
        m = np.concatenate([[0.0], L @ rng.standard_normal(n)]) if n else np.zeros(1)
        peak = np.max(np.abs(m)) * np.max(np.abs(D))
        scale = 0.0 if peak == 0.0 else spec.amplitude * rng.uniform(0.5, 1.0) / peak
        U = I3 + (scale * m)[:, None, None] * D
        if np.all(np.linalg.eigvalsh(U) > 0.0):
            break
    else:
        raise SolverError("could not generate a path with positive-definite stretch")
    if spec.dt_bounds is None:
        dt = np.full(n, float(spec.dt))
    else:
        lo, hi = np.log10(spec.dt_bounds)
        dt = 10.0 ** rng.uniform(lo, hi, size=n)
    return LoadPath(U, dt)


def sample_paths(spec):
    """Generate ``spec.count`` proportional GP paths.

    Each path draws from its own RNG stream spawned from ``spec.seed`` so the
    result does not depend on generation order.
    """
    L = _se_cholesky(spec.steps, spec.length_scale) if spec.steps else None
    streams = np.random.SeedSequence(spec.seed).spawn(spec.count)
    return [_one_path(np.random.default_rng(s), spec, L) for s in streams]


@dataclass(frozen=True)
class CreepProtocol:
    """Engineering-stress ramp at a fixed rate capped at ``sigma_max``, then hold.

    ``next_stress`` applies sigma_t = min(sigma_{t-1} + rate dt, sigma_max).
    """

    sigma_max: float
    rate: float
    hold: float

    def __post_init__(self):
        if not self.rate > 0.0 or not self.hold > 0.0:
            raise DomainError("creep rate and hold duration must be positive")

    @property
    def ramp_time(self):
        return 0.0 if np.isinf(self.rate) else self.sigma_max / self.rate

    @property
    def duration(self):
        return self.ramp_time + self.hold

    def next_stress(self, previous, dt):
        if np.isinf(self.rate):
            return float(self.sigma_max)
        return min(previous + self.rate * dt, self.sigma_max)


def creep_path(sigma_target, rate, hold):
    return CreepProtocol(float(sigma_target), float(rate), float(hold))


@dataclass(frozen=True)
class CsrProtocol:
    """Constant engineering strain rate up to ``target_strain``.

    A zero rate needs an explicit ``duration``; otherwise the duration is
    target / rate.
    """

    rate: float
    target_strain: float = 0.03
    duration: float = None

    def __post_init__(self):
        if self.rate < 0.0:
            raise DomainError("strain rate must be non-negative")
        if self.rate == 0.0 and self.duration is None:
            raise DomainError("a zero-rate protocol needs an explicit duration")

    @property
    def end_time(self):
        if self.duration is not None:
            return float(self.duration)
        return self.target_strain / self.rate

    def strain(self, t):
        return self.rate * t


def protocol_end_time(protocol):
    if isinstance(protocol, CreepProtocol):
        return protocol.duration
    return protocol.end_time
