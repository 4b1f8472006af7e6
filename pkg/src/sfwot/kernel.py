"""
Reference kernels in log domain: Gibbs construction from a cost, exponential
tilting by a bounded potential, and entropies taken against the kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .measures import Coupling, DimensionError, DiscreteMeasure

KERNEL_MASS_TOL = 1e-10


class InfeasibleError(ValueError):
    """Some point with positive mass has no reachable partner."""


@dataclass(frozen=True, eq=False)
class ReferenceKernel:
    """Log-mass of a reference probability ``R`` on ``source x target``.

    Entries equal to ``-inf`` are outside the support of ``R``. ``epsilon``
    is the temperature of a Gibbs kernel (1 for a generic ``R``) and
    ``log_partition`` the log of its normalizing constant.
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    log_weights: np.ndarray = field(repr=False)
    epsilon: float = 1.0
    log_partition: float = 0.0

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float)
        if lw.shape != (len(self.source), len(self.target)):
            raise DimensionError("kernel shape does not match supports")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValueError("kernel log-weights must be finite or -inf")
        total = logsumexp(lw)
        if not np.isfinite(total) or abs(np.expm1(total)) > KERNEL_MASS_TOL:
            raise ValueError(f"kernel mass is {np.exp(total)!r}, expected 1")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @property
    def support(self):
        return np.isfinite(self.log_weights)

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def as_coupling(self) -> Coupling:
        return Coupling(self.source, self.target, self.weights)


@dataclass(frozen=True, eq=False)
class TiltResult:
    kernel: ReferenceKernel
    log_partition: float


def _log_product(mu, nu):
    with np.errstate(divide="ignore"):
        return np.log(mu.weights)[:, None] + np.log(nu.weights)[None, :]


def gibbs_reference(cost, epsilon, mu: DiscreteMeasure, nu: DiscreteMeasure) -> ReferenceKernel:
    """Kernel ``R ∝ exp(-cost / epsilon) (mu ⊗ nu)``.

    Infinite costs become pairs outside the support. The returned kernel
    records ``log Z = log sum exp(-cost/epsilon) mu nu``, so that
    ``log R = -cost/epsilon + log mu + log nu - log Z``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    c = np.asarray(cost, dtype=float)
    if c.shape != (len(mu), len(nu)):
        raise DimensionError("cost shape does not match supports")
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise ValueError("costs must lie in [0, +inf]")
    finite = np.isfinite(c)
    if not finite.any(axis=1).all() or not finite.any(axis=0).all():
        raise InfeasibleError("a row or column of the cost is entirely infinite")
    logits = np.where(finite, -c / epsilon, -np.inf) + _log_product(mu, nu)
    if not np.isfinite(logits[mu.weights > 0]).any(axis=1).all():
        raise InfeasibleError("a source point with positive mass reaches no target mass")
    if not np.isfinite(logits[:, nu.weights > 0]).any(axis=0).all():
        raise InfeasibleError("a target point with positive mass is reached by no source mass")
    log_z = float(logsumexp(logits))
    return ReferenceKernel(mu, nu, logits - log_z, epsilon=float(epsilon), log_partition=log_z)


def tilt(kernel: ReferenceKernel, phi) -> TiltResult:
    """Exponential tilting ``R_phi = exp(-phi) R / Z_phi``, evaluated in log domain."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != kernel.log_weights.shape:
        raise DimensionError("potential shape does not match kernel")
    supp = kernel.support
    if not np.all(np.isfinite(phi[supp])):
        raise ValueError("potential must be finite on the kernel support")
    logits = np.where(supp, kernel.log_weights - np.where(supp, phi, 0.0), -np.inf)
    log_z = float(logsumexp(logits))
    tilted = ReferenceKernel(
        kernel.source,
        kernel.target,
        logits - log_z,
        epsilon=kernel.epsilon,
        log_partition=kernel.log_partition + log_z,
    )
    return TiltResult(tilted, log_z)


def entropy_wrt_kernel(pi: Coupling, kernel: ReferenceKernel) -> float:
    """``H(pi || R)``, computed against the kernel's log-weights."""
    p = pi.probs
    if p.shape != kernel.log_weights.shape:
        raise DimensionError("coupling shape does not match kernel")
    pos = p > 0
    lr = kernel.log_weights[pos]
    if np.any(lr == -np.inf):
        return np.inf
    pp = p[pos]
    return max(float(np.sum(pp * (np.log(pp) - lr))), 0.0)


def tilting_identity_residual(pi: Coupling, kernel: ReferenceKernel, phi, _sign=-1.0) -> float:
    """Residual of ``<phi, pi> + H(pi || R) = H(pi || R_phi) - log Z_phi``.

    Returns ``inf`` when ``pi`` is not absolutely continuous w.r.t. ``R``.
    ``_sign`` exists only so that tests can inject the wrong sign.
    """
    res = tilt(kernel, phi)
    h_r = entropy_wrt_kernel(pi, kernel)
    h_phi = entropy_wrt_kernel(pi, res.kernel)
    if not (np.isfinite(h_r) and np.isfinite(h_phi)):
        return np.inf
    p = pi.probs
    pos = p > 0
    lin = float(np.sum(p[pos] * np.asarray(phi, dtype=float)[pos]))
    return abs(lin + h_r - h_phi - _sign * res.log_partition)
