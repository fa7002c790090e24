"""Derivative of the power-density map, its adjoints, and the step system.

The derivative of E(sigma) = sigma |grad u|^2 in direction tau is

    E'(sigma) tau = |grad u|^2 tau + 2 sigma grad u . grad u'(sigma)tau,

where u'(sigma)tau solves the linearized potential equation.  Its L2
adjoint is realized through the auxiliary Dirichlet solve V, and the
smoother-space adjoints through Neumann embedding problems (identity, one
Helmholtz-type solve, or a fourth-order problem split into two second-order
equations).  Every operator here acts on nodal fields; element products are
carried at P0 inside quadrature and lump-projected back to nodes, so the
assembled step system is the exact normal-equations system of the discrete
derivative in the lumped-mass inner product.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem, forward, sparse


@dataclass(frozen=True)
class AdjointVariant:
    """Embedding adjoint selector: tag in {l2, h1, h2} with smoothing beta."""

    tag: str
    beta: float = 1e-3

    def __post_init__(self):
        if self.tag not in ("l2", "h1", "h2"):
            raise ValueError(f"unknown adjoint variant {self.tag!r}")
        if self.tag != "l2" and self.beta <= 0:
            raise ValueError("beta must be positive for h1/h2 variants")


class LinearizationContext:
    """Caches everything needed to linearize around one conductivity.

    Holds the measurement potentials and their gradients, the factorized
    homogeneous-Dirichlet operator for sigma (shared by every linearized
    and adjoint solve), and the FEM matrices reused by the block assembly.
    """

    def __init__(self, mesh, geom, sigma, bcs):
        self.mesh = mesh
        self.geom = geom
        self.sigma = sigma
        self.bcs = list(bcs)
        self.sigma_e = fem.element_average(mesh, sigma.values)

        self.mass = fem.assemble_mass(mesh, geom)
        self.stiff_unit = assemble_unit_stiffness(mesh, geom)
        self.lumped_diag = fem.lumped_mass_diagonal(geom)
        self.avg = fem.element_average_matrix(mesh)
        self.lump = fem.lump_matrix(mesh, geom)

        k_sigma = fem.assemble_stiffness(mesh, geom, sigma.values)
        self.k_dirichlet = fem.dirichlet_zero_operator(k_sigma, mesh)
        self.lu = sparse.factorize(self.k_dirichlet)
        self.interior = mesh.interior_mask()

        self.potentials = []
        self.grads = []
        self.w2 = []
        self.conv = []
        self.conv_sigma = []
        self.du = []
        for bc in self.bcs:
            u = forward.solve_potential(mesh, geom, sigma, bc)
            g = fem.gradient(mesh, geom, u)
            self.potentials.append(u)
            self.grads.append(g)
            self.w2.append(g[:, 0] ** 2 + g[:, 1] ** 2)
            self.conv.append(fem.assemble_convection(mesh, geom, g))
            self.conv_sigma.append(
                fem.assemble_convection(mesh, geom,
                                        self.sigma_e[:, None] * g))
            self.du.append(fem.directional_gradient_matrix(mesh, geom, g))
        self._istar_cache = {}
        self._power = None

    @property
    def m(self):
        return len(self.bcs)

    def power_densities(self):
        """Power densities at the linearization point (cached)."""
        if self._power is None:
            self._power = [
                fem.project_p0_to_p1(self.mesh, self.geom,
                                     self.sigma_e * self.w2[j])
                for j in range(self.m)]
        return self._power

    def dirichlet_solve(self, rhs):
        """Solve the cached homogeneous-Dirichlet system for one rhs."""
        rhs = rhs.copy()
        rhs[self.mesh.boundary_nodes] = 0.0
        return sparse.solve(self.k_dirichlet, rhs, lu=self.lu)

    def istar_solver(self, variant):
        key = (variant.tag, variant.beta)
        if key not in self._istar_cache:
            self._istar_cache[key] = _build_istar_solver(self, variant)
        return self._istar_cache[key]


def assemble_unit_stiffness(mesh, geom):
    ones = np.ones(mesh.n_nodes)
    return fem.assemble_stiffness(mesh, geom, ones)


def build_context(mesh, geom, sigma, bcs):
    return LinearizationContext(mesh, geom, sigma, bcs)


def linearized_potential(ctx, tau, j):
    """u'(sigma)tau for measurement j: homogeneous-Dirichlet solve with
    rhs = -(weak divergence of tau grad u_j)."""
    return ctx.dirichlet_solve(-(ctx.conv[j] @ np.asarray(tau, dtype=float)))


def apply_derivative(ctx, tau):
    """E'(sigma) tau per measurement, lumped to nodes."""
    tau = np.asarray(tau, dtype=float)
    tau_e = fem.element_average(ctx.mesh, tau)
    out = []
    for j in range(ctx.m):
        uprime = linearized_potential(ctx, tau, j)
        gup = fem.gradient(ctx.mesh, ctx.geom, uprime)
        e = (ctx.w2[j] * tau_e
             + 2.0 * ctx.sigma_e * np.einsum("td,td->t", ctx.grads[j], gup))
        out.append(fem.project_p0_to_p1(ctx.mesh, ctx.geom, e))
    return out


def apply_V(ctx, z, j):
    """Adjoint-state potential: L_sigma (Vz) = -div(z sigma grad u_j),
    Vz = 0 on the boundary."""
    return ctx.dirichlet_solve(-(ctx.conv_sigma[j] @ np.asarray(z, dtype=float)))


def apply_adjoint_pre_embedding(ctx, zs):
    """L2 adjoint of the derivative:
    sum_j |grad u_j|^2 z_j + 2 grad u_j . grad(V_j z_j), lumped to nodes."""
    if len(zs) != ctx.m:
        raise ValueError("need one field per measurement")
    out = np.zeros(ctx.mesh.n_nodes)
    for j, z in enumerate(zs):
        z = np.asarray(z, dtype=float)
        v = apply_V(ctx, z, j)
        gv = fem.gradient(ctx.mesh, ctx.geom, v)
        e = (ctx.w2[j] * fem.element_average(ctx.mesh, z)
             + 2.0 * np.einsum("td,td->t", ctx.grads[j], gv))
        out += fem.project_p0_to_p1(ctx.mesh, ctx.geom, e)
    return out


def _build_istar_solver(ctx, variant):
    mass = ctx.mass
    n = ctx.mesh.n_nodes
    if variant.tag == "l2":
        return lambda y: np.asarray(y, dtype=float).copy()
    b2 = variant.beta ** 2
    if variant.tag == "h1":
        a = sp.csr_matrix(mass + b2 * ctx.stiff_unit)
        lu = sparse.factorize(a)

        def solve_h1(y):
            return sparse.solve(a, mass @ np.asarray(y, dtype=float), lu=lu)

        return solve_h1
    # h2: coupled second-order split of (I + beta^2 Laplacian^2) w = y with
    # natural Neumann rows: [[M, b2 K], [K, -M]] (w, v) = (M y, 0)
    k1 = ctx.stiff_unit
    a = sp.bmat([[mass, b2 * k1], [k1, -mass]], format="csr")
    lu = sparse.factorize(a)

    def solve_h2(y):
        rhs = np.concatenate([mass @ np.asarray(y, dtype=float), np.zeros(n)])
        return sparse.solve(a, rhs, lu=lu)[:n]

    return solve_h2


def apply_i_star(ctx, variant, y):
    """Embedding adjoint i* applied to a nodal field."""
    return ctx.istar_solver(variant)(y)


def step_rhs(ctx, variant, residuals):
    """Right-hand-side field of the step equation: i* applied to the L2
    adjoint of the data residual."""
    return apply_i_star(ctx, variant, apply_adjoint_pre_embedding(ctx, residuals))


def block_names(variant, m):
    names = ["tau", "z3"]
    if variant.tag == "h2":
        names.append("z2")
    names.append("z1")
    for j in range(m):
        names.extend([f"y1_{j}", f"y2_{j}", f"y3_{j}"])
    return names


def assemble_lm_blocks(ctx, variant, alpha, rhs_field=None):
    """Assemble the coupled sparse system for one step.

    Unknown blocks: tau; z3, z2 (h2 only), z1; per measurement y1_j, y2_j,
    y3_j.  Rows (weak form):
      tau : alpha M tau + M z3 = M rhs_field
      z3  : smoothing coupling z3 = i*(z1) per variant
      z1  : lumped-mass row expressing z1 as the adjoint applied to the
            derivative (composed through the nodal data representation)
      y*  : Dirichlet-zero potential solves for the derivative (y1), and
            the two adjoint-state solves (y2 from tau, y3 from y1)
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    mesh, geom = ctx.mesh, ctx.geom
    n = mesh.n_nodes
    mass = ctx.mass
    k1 = ctx.stiff_unit
    ml = sp.diags(ctx.lumped_diag, format="csr")
    pi = fem.interior_row_mask_matrix(mesh)
    b2 = variant.beta ** 2
    names = block_names(variant, ctx.m)

    contributions = [("tau", "tau", alpha * mass), ("tau", "z3", mass)]
    if variant.tag == "l2":
        contributions += [("z3", "z3", mass), ("z3", "z1", -mass)]
    elif variant.tag == "h1":
        contributions += [("z3", "z3", sp.csr_matrix(mass + b2 * k1)),
                          ("z3", "z1", -mass)]
    else:
        contributions += [("z3", "z3", k1), ("z3", "z2", mass),
                          ("z2", "z2", -b2 * k1), ("z2", "z3", mass),
                          ("z2", "z1", -mass)]

    contributions.append(("z1", "z1", ml))
    areas = geom.areas
    for j in range(ctx.m):
        du = ctx.du[j]
        w2 = ctx.w2[j]
        # weak pairings against |grad u|^2 and the nodal smoothing operators
        atwa = (ctx.avg.T @ sp.diags(areas * w2)) @ ctx.avg
        p_w2 = (ctx.lump @ sp.diags(w2)) @ ctx.avg
        lsd = (ctx.lump @ sp.diags(ctx.sigma_e)) @ du
        w_j = atwa @ p_w2
        g_j = atwa @ lsd
        b_j = sp.csr_matrix(ctx.conv[j].T)
        s_j = ctx.conv_sigma[j] @ p_w2
        d_j = ctx.conv_sigma[j] @ lsd
        contributions += [
            ("z1", "tau", -w_j),
            ("z1", f"y1_{j}", -2.0 * g_j),
            ("z1", f"y2_{j}", -2.0 * b_j),
            ("z1", f"y3_{j}", -4.0 * b_j),
            (f"y1_{j}", f"y1_{j}", ctx.k_dirichlet),
            (f"y1_{j}", "tau", pi @ ctx.conv[j]),
            (f"y2_{j}", f"y2_{j}", ctx.k_dirichlet),
            (f"y2_{j}", "tau", pi @ s_j),
            (f"y3_{j}", f"y3_{j}", ctx.k_dirichlet),
            (f"y3_{j}", f"y1_{j}", pi @ d_j),
        ]

    system = sparse.assemble_block(names, n, contributions)
    if np.any(np.diff(system.matrix.indptr) == 0):
        raise AssertionError("assembled block system has an empty row")
    if rhs_field is not None:
        system.set_rhs("tau", mass @ np.asarray(rhs_field, dtype=float))
    return system


def solve_lm_step(ctx, variant, alpha, residuals):
    """One regularized step: returns the tau block of the coupled solve."""
    rhs_field = step_rhs(ctx, variant, residuals)
    system = assemble_lm_blocks(ctx, variant, alpha, rhs_field)
    x = system.solve()
    return system.extract(x, "tau")
