"""Outer regularized Gauss-Newton (Levenberg-Marquardt) iteration.

Each step linearizes the power-density map around the current conductivity,
solves the coupled block system for the update, clamps the result away from
zero, and records residual / step / error diagnostics.  The regularization
weight either follows a geometric schedule or is chosen a posteriori so the
linearized residual sits at a fixed fraction of the nonlinear residual.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import adjoint, fem, forward

log = logging.getLogger(__name__)

RESIDUAL_FLOOR_REL = 1e-12
HANKE_MAX_TRIALS = 20
HANKE_BAND = 1.1


@dataclass(frozen=True)
class LmConfig:
    alpha0: float = 1.0
    decay: float = 0.5
    alpha_min: float = 1e-8
    beta: float = 1e-3
    adjoint: str = "h1"
    max_iters: int = 15
    sigma_min: float = 1e-12
    sigma0: float = 1.0
    hanke_q: float = 0.0
    discrepancy: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.alpha0 <= 0 or self.alpha_min <= 0:
            raise ValueError("alpha0 and alpha_min must be positive")
        if self.adjoint not in ("l2", "h1", "h2"):
            raise ValueError(f"unknown adjoint variant {self.adjoint!r}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.hanke_q and not 0.0 < self.hanke_q < 1.0:
            raise ValueError("hanke_q must lie in (0, 1)")

    def variant(self):
        return adjoint.AdjointVariant(self.adjoint, self.beta)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    alpha: float
    residual: float
    step_norm: float
    rel_error: float
    seconds: float
    status: str = "ok"


@dataclass
class LmState:
    sigma: forward.Conductivity
    k: int = 0
    history: list = field(default_factory=list)


def alpha_schedule(k, config):
    """A priori geometric weight max(alpha0 * decay^k, alpha_min)."""
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return max(config.alpha0 * config.decay ** k, config.alpha_min)


def canonical_order(measurements):
    """Deterministic measurement ordering, invariant under input permutation.

    Sorts by the boundary-condition canonical key, breaking ties with the
    data bytes, so reconstructions do not depend on file listing order.
    """
    def key(j):
        bc_key = measurements.bcs[j].canonical_key()
        return (repr(bc_key), measurements.data[j].tobytes())

    order = sorted(range(measurements.m), key=key)
    return measurements.subset(order)


def residual_norm(mass, fields):
    """Stacked measurement-space norm: sqrt(sum_j <M r_j, r_j>)."""
    total = 0.0
    for r in fields:
        total += fem.mass_norm(mass, r) ** 2
    return float(np.sqrt(total))


def _lumped_norm(diag, fields):
    total = 0.0
    for r in fields:
        r = np.asarray(r, dtype=float)
        total += float(r @ (diag * r))
    return float(np.sqrt(total))


def clamp_update(sigma, tau, sigma_min):
    """Apply the additive update and clamp nodewise to sigma_min."""
    values = np.maximum(sigma.values + np.asarray(tau, dtype=float), sigma_min)
    return forward.Conductivity(values, sigma_min=sigma_min)


def lm_step(ctx, config, alpha, residuals):
    """Solve the coupled step system at weight alpha; returns tau."""
    return adjoint.solve_lm_step(ctx, config.variant(), alpha, residuals)


def hanke_alpha(ctx, config, residuals, alpha_init):
    """A posteriori weight: find alpha with
    ||r - J tau(alpha)|| ~= q ||r|| (band [q, 1.1 q], lumped norms).

    Bisects on log(alpha) after geometric bracketing; falls back to the
    supplied a priori value with a warning if no bracket is found.
    Returns (alpha, tau) so the accepted trial solve is reused.
    """
    q = config.hanke_q
    diag = ctx.lumped_diag
    rnorm = _lumped_norm(diag, residuals)
    if rnorm == 0.0:
        return alpha_init, np.zeros(ctx.mesh.n_nodes)

    def ratio(alpha):
        tau = lm_step(ctx, config, alpha, residuals)
        lin = apply_derivative_stacked(ctx, tau)
        rem = [residuals[j] - lin[j] for j in range(ctx.m)]
        return _lumped_norm(diag, rem) / rnorm, tau

    lo = hi = float(alpha_init)
    r_mid, tau_mid = ratio(lo)
    trials = 1
    if q <= r_mid <= HANKE_BAND * q:
        return lo, tau_mid
    # the linearized residual ratio grows with alpha (more damping)
    if r_mid > HANKE_BAND * q:
        while trials < HANKE_MAX_TRIALS:
            lo /= 4.0
            r_lo, tau_lo = ratio(lo)
            trials += 1
            if q <= r_lo <= HANKE_BAND * q:
                return lo, tau_lo
            if r_lo < q:
                break
        else:
            log.warning("hanke_alpha: no bracket after %d trials, "
                        "falling back to alpha=%g", trials, alpha_init)
            return alpha_init, tau_mid
        hi = lo * 4.0
    else:
        while trials < HANKE_MAX_TRIALS:
            hi *= 4.0
            r_hi, tau_hi = ratio(hi)
            trials += 1
            if q <= r_hi <= HANKE_BAND * q:
                return hi, tau_hi
            if r_hi > HANKE_BAND * q:
                break
        else:
            log.warning("hanke_alpha: no bracket after %d trials, "
                        "falling back to alpha=%g", trials, alpha_init)
            return alpha_init, tau_mid
        lo = hi / 4.0
    while trials < HANKE_MAX_TRIALS:
        mid = float(np.sqrt(lo * hi))
        r_mid, tau_mid = ratio(mid)
        trials += 1
        if q <= r_mid <= HANKE_BAND * q:
            return mid, tau_mid
        if r_mid > HANKE_BAND * q:
            hi = mid
        else:
            lo = mid
    log.warning("hanke_alpha: band not reached after %d trials, "
                "using last trial alpha=%g", trials, mid)
    return mid, tau_mid


def apply_derivative_stacked(ctx, tau):
    return adjoint.apply_derivative(ctx, tau)


def relative_l2_error(mass, sigma_values, truth_values):
    diff = np.asarray(sigma_values, dtype=float) - np.asarray(truth_values,
                                                              dtype=float)
    denom = fem.mass_norm(mass, truth_values)
    if denom == 0.0:
        return float(fem.mass_norm(mass, diff))
    return float(fem.mass_norm(mass, diff) / denom)


def run_lm(mesh, geom, measurements, config, sigma_true=None,
           on_iteration=None):
    """Run the outer iteration from sigma0 against the supplied data.

    Returns the final state; history holds one record per completed step.
    rel_error is against sigma_true when given, else nan.  The loop stops at
    max_iters, at the discrepancy level when configured, or when the
    residual falls below an exact-fit floor.
    """
    measurements = canonical_order(measurements)
    sigma = forward.constant_conductivity(mesh, config.sigma0,
                                          sigma_min=config.sigma_min)
    state = LmState(sigma=sigma)
    mass = fem.assemble_mass(mesh, geom)
    data_norm = residual_norm(mass, measurements.data)
    floor = RESIDUAL_FLOOR_REL * max(data_norm, 1.0)

    for k in range(config.max_iters):
        t0 = time.perf_counter()
        ctx = adjoint.build_context(mesh, geom, state.sigma, measurements.bcs)
        predicted = ctx.power_densities()
        residuals = [measurements.data[j] - predicted[j]
                     for j in range(measurements.m)]
        res = residual_norm(mass, residuals)
        if config.discrepancy and res <= config.discrepancy:
            break
        if res <= floor:
            break
        alpha = alpha_schedule(k, config)
        if config.hanke_q:
            alpha, tau = hanke_alpha(ctx, config, residuals, alpha)
        else:
            tau = lm_step(ctx, config, alpha, residuals)
        sigma_next = clamp_update(state.sigma, tau, config.sigma_min)
        step_norm = float(fem.mass_norm(mass, sigma_next.values
                                        - state.sigma.values))
        rel_error = float("nan")
        if sigma_true is not None:
            rel_error = relative_l2_error(mass, sigma_next.values, sigma_true)
        record = IterationRecord(k=k, alpha=alpha, residual=res,
                                 step_norm=step_norm, rel_error=rel_error,
                                 seconds=time.perf_counter() - t0)
        state.history.append(record)
        state.sigma = sigma_next
        state.k = k + 1
        if on_iteration is not None:
            on_iteration(record)
    return state
