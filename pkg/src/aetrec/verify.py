"""Independent oracles: dense Jacobians, adjoint identity, Taylor slopes.

Everything here is deliberately naive (dense matrices, column-by-column
builds, finite differences) so it can cross-check the sparse operator
implementations.  Guards keep the dense builds restricted to tiny meshes.
"""

from dataclasses import dataclass

import numpy as np

from . import adjoint, fem, forward, mesh as meshmod, phantom

DENSE_NODE_LIMIT = 200
FD_STEP_SCALE = 1e-6
EXACT_REMAINDER_TOL = 1e-13


@dataclass(frozen=True)
class DenseJacobian:
    """Stacked (m * nodes) x nodes derivative matrix with provenance tag."""

    matrix: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in ("columnwise-derivative",
                                   "finite-difference"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def build_dense_jacobian(ctx):
    """Column j = derivative applied to the j-th nodal basis vector."""
    n = ctx.mesh.n_nodes
    if n > DENSE_NODE_LIMIT:
        raise ValueError(f"dense Jacobian limited to {DENSE_NODE_LIMIT} "
                         f"nodes, got {n}")
    cols = np.zeros((ctx.m * n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols[:, j] = np.concatenate(adjoint.apply_derivative(ctx, e))
        e[j] = 0.0
    return DenseJacobian(matrix=cols, provenance="columnwise-derivative")


def finite_difference_jacobian(ctx, step=None):
    """Central-difference Jacobian of the forward map around ctx.sigma."""
    n = ctx.mesh.n_nodes
    if n > DENSE_NODE_LIMIT:
        raise ValueError(f"dense Jacobian limited to {DENSE_NODE_LIMIT} "
                         f"nodes, got {n}")
    base = ctx.sigma.values
    if step is None:
        step = FD_STEP_SCALE * max(float(np.max(np.abs(base))), 1.0)
    cols = np.zeros((ctx.m * n, n))
    for j in range(n):
        plus = base.copy()
        minus = base.copy()
        plus[j] += step
        minus[j] -= step
        f_plus = forward.forward_map(
            ctx.mesh, ctx.geom,
            forward.Conductivity(plus, sigma_min=ctx.sigma.sigma_min),
            ctx.bcs)
        f_minus = forward.forward_map(
            ctx.mesh, ctx.geom,
            forward.Conductivity(minus, sigma_min=ctx.sigma.sigma_min),
            ctx.bcs)
        cols[:, j] = (np.concatenate(f_plus.data)
                      - np.concatenate(f_minus.data)) / (2.0 * step)
    return DenseJacobian(matrix=cols, provenance="finite-difference")


def _stacked_lumped(ctx):
    return np.tile(ctx.lumped_diag, ctx.m)


def adjoint_identity_report(ctx, trials=8, seed=0, route="continuous",
                            perturbation=0.0):
    """Max relative mismatch of <J tau, z> vs <tau, adjoint z> over random
    pairs, in the lumped-mass inner products.

    route "transpose" pairs against the literal matrix transpose (algebraic
    sanity at roundoff); route "continuous" applies the PDE-based adjoint.
    A nonzero perturbation scales the adjoint output, to confirm the check
    actually detects a broken adjoint.
    """
    if route not in ("transpose", "continuous"):
        raise ValueError(f"unknown route {route!r}")
    jac = build_dense_jacobian(ctx)
    diag = ctx.lumped_diag
    big = _stacked_lumped(ctx)
    rng = np.random.default_rng(seed)
    n = ctx.mesh.n_nodes
    worst = 0.0
    for _ in range(trials):
        tau = rng.standard_normal(n)
        z_stacked = rng.standard_normal(ctx.m * n)
        zs = [z_stacked[j * n:(j + 1) * n] for j in range(ctx.m)]
        lhs = float((jac.matrix @ tau) @ (big * z_stacked))
        if route == "transpose":
            a = jac.matrix.T @ (big * z_stacked) / diag
        else:
            a = adjoint.apply_adjoint_pre_embedding(ctx, zs)
        if perturbation:
            a = a * (1.0 + perturbation)
        rhs = float(tau @ (diag * a))
        tau_norm = float(np.sqrt(tau @ (diag * tau)))
        z_norm = float(np.sqrt(z_stacked @ (big * z_stacked)))
        mismatch = abs(lhs - rhs) / (tau_norm * z_norm)
        worst = max(worst, mismatch)
    return worst


@dataclass(frozen=True)
class TaylorResult:
    slope: float
    exact: bool
    t_values: tuple
    remainders: tuple


def taylor_slope(ctx, tau, t_values):
    """Least-squares slope of log remainder vs log step for the expansion
    E(sigma + t tau) ~ E(sigma) + t J tau.  Zero remainder reports exact."""
    tau = np.asarray(tau, dtype=float)
    t_values = tuple(float(t) for t in t_values)
    if any(t <= 0 for t in t_values):
        raise ValueError("step sizes must be positive")
    base = ctx.sigma.values
    for t in t_values:
        if np.any(base + t * tau < ctx.sigma.sigma_min):
            raise ValueError("sigma + t*tau dips below sigma_min")
    e0 = np.concatenate(ctx.power_densities())
    jtau = np.concatenate(adjoint.apply_derivative(ctx, tau))
    big = _stacked_lumped(ctx)

    def stacked_norm(v):
        return float(np.sqrt(v @ (big * v)))

    scale = max(stacked_norm(e0), 1.0)
    remainders = []
    for t in t_values:
        et = np.concatenate(forward.forward_map(
            ctx.mesh, ctx.geom,
            forward.Conductivity(base + t * tau,
                                 sigma_min=ctx.sigma.sigma_min),
            ctx.bcs).data)
        remainders.append(stacked_norm(et - e0 - t * jtau))
    remainders = tuple(remainders)
    if max(remainders) <= EXACT_REMAINDER_TOL * scale:
        return TaylorResult(slope=float("inf"), exact=True,
                            t_values=t_values, remainders=remainders)
    logs_t = np.log(np.asarray(t_values))
    logs_r = np.log(np.asarray(remainders))
    slope = float(np.polyfit(logs_t, logs_r, 1)[0])
    return TaylorResult(slope=slope, exact=False,
                        t_values=t_values, remainders=remainders)


def _smooth_test_sigma(mesh_obj):
    spec = phantom.PhantomSpec(
        background=1.0,
        bumps=(phantom.GaussianBump(center=(0.3, 0.1), width=0.5,
                                    amplitude=0.8),),
        lo=0.2, hi=5.0)
    return phantom.evaluate_phantom(spec, mesh_obj)


def _smooth_test_tau(mesh_obj, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.4, 0.4, size=2)
    w = rng.uniform(0.4, 0.8)
    a = rng.uniform(0.5, 1.5)
    r2 = np.sum((mesh_obj.nodes - c) ** 2, axis=1)
    return a * np.exp(-r2 / w ** 2)


def run_suite(seed=0, perturb_adjoint=0.0):
    """Deterministic oracle battery; returns pass/fail checks with values.

    perturb_adjoint feeds a relative perturbation into the continuous
    adjoint check, to demonstrate the check fails when the adjoint is wrong.
    """
    checks = []

    def check(name, value, threshold, passed):
        checks.append({"name": name, "value": value,
                       "threshold": threshold, "passed": bool(passed)})

    counts_ok = True
    for r in range(1, 9):
        msh = meshmod.build_disk_mesh(r)
        counts_ok &= (msh.n_nodes == 1 + 3 * r * (r + 1)
                      and msh.n_triangles == 6 * r * r)
    check("mesh-counts", float(counts_ok), "exact", counts_ok)

    msh = meshmod.build_disk_mesh(4)
    geom = meshmod.element_geometry(msh)
    sig = forward.constant_conductivity(msh, 1.0)
    dev = 0.0
    for bc in fem.standard_bcs()[:2]:
        e = forward.power_density(msh, geom, sig,
                                  forward.solve_potential(msh, geom, sig, bc))
        dev = max(dev, float(np.max(np.abs(e - 1.0))))
    check("forward-constant-sigma", dev, 1e-8, dev <= 1e-8)

    tiny = meshmod.build_disk_mesh(2)
    tiny_geom = meshmod.element_geometry(tiny)
    sig2 = forward.Conductivity(_smooth_test_sigma(tiny))
    ctx2 = adjoint.build_context(tiny, tiny_geom, sig2, fem.standard_bcs()[:2])

    mt = adjoint_identity_report(ctx2, trials=8, seed=seed, route="transpose")
    check("adjoint-transpose", mt, 1e-12, mt <= 1e-12)

    mc = adjoint_identity_report(ctx2, trials=8, seed=seed,
                                 route="continuous",
                                 perturbation=perturb_adjoint)
    check("adjoint-continuous", mc, 1e-8, mc <= 1e-8)

    jac = build_dense_jacobian(ctx2)
    fd = finite_difference_jacobian(ctx2)
    denom = max(float(np.max(np.abs(jac.matrix))), 1.0)
    jd = float(np.max(np.abs(jac.matrix - fd.matrix))) / denom
    check("jacobian-vs-fd", jd, 1e-5, jd <= 1e-5)

    small = meshmod.build_disk_mesh(3)
    small_geom = meshmod.element_geometry(small)
    sig3 = forward.Conductivity(_smooth_test_sigma(small))
    ctx3 = adjoint.build_context(small, small_geom, sig3, fem.standard_bcs()[:2])
    tau3 = _smooth_test_tau(small, seed + 1)
    ts = taylor_slope(ctx3, tau3, [2.0 ** -p for p in range(2, 8)])
    slope_ok = ts.exact or 1.9 <= ts.slope <= 2.1
    check("taylor-slope", ts.slope, "1.9..2.1", slope_ok)

    res = step_oracle_mismatch(ctx2, alpha=0.1, seed=seed + 2)
    check("step-vs-normal-equations", res, 1e-6, res <= 1e-6)

    oracle = phantom.TwoLayerOracle(sigma_in=2.0, sigma_out=1.0, radius=0.5)
    mr = oracle.matching_residual()
    check("two-layer-interface", mr, 1e-12, mr <= 1e-12)

    return {"seed": seed,
            "passed": all(c["passed"] for c in checks),
            "checks": checks}


def step_oracle_mismatch(ctx, alpha, seed=0):
    """Relative difference between the coupled-system step and the dense
    normal-equations step (J^T M_L J + alpha M_L) tau = J^T M_L r."""
    rng = np.random.default_rng(seed)
    n = ctx.mesh.n_nodes
    residuals = [rng.standard_normal(n) for _ in range(ctx.m)]
    variant = adjoint.AdjointVariant("l2")
    tau_block = adjoint.solve_lm_step(ctx, variant, alpha, residuals)

    jac = build_dense_jacobian(ctx).matrix
    big = _stacked_lumped(ctx)
    ml = np.diag(ctx.lumped_diag)
    lhs = jac.T @ (big[:, None] * jac) + alpha * ml
    rhs = jac.T @ (big * np.concatenate(residuals))
    tau_dense = np.linalg.solve(lhs, rhs)
    denom = max(float(np.linalg.norm(tau_dense)), 1e-30)
    return float(np.linalg.norm(tau_block - tau_dense)) / denom


def format_report(suite):
    lines = []
    for c in suite["checks"]:
        tag = "PASS" if c["passed"] else "FAIL"
        lines.append(f"{tag}  {c['name']:28s} value={c['value']:.6g} "
                     f"threshold={c['threshold']}")
    tag = "PASS" if suite["passed"] else "FAIL"
    lines.append(f"{tag}  suite (seed={suite['seed']})")
    return "\n".join(lines) + "\n"
