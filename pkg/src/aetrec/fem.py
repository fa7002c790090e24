"""P1 finite element forms on disk meshes.

All bilinear forms used by the reconstruction are assembled here: weighted
stiffness, consistent and lumped mass, convection-type gradient couplings,
and Dirichlet elimination.  Coefficients multiplying two P1 factors are
evaluated per element (one-point rule); single P1 factors are integrated
exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import sparse

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class DirichletBC:
    """Dirichlet boundary data.

    kind is one of:
      "linear"   -- f(x, y) = a*x + b*y with params (a, b)
      "paper-f3" -- f(x, y) = (x - y)/sqrt(2)
      "nodal"    -- explicit values aligned with mesh.boundary_nodes
    """

    kind: str
    params: tuple = ()
    values: np.ndarray = None

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        if self.kind == "linear":
            a, b = self.params
            return a * points[:, 0] + b * points[:, 1]
        if self.kind == "paper-f3":
            return (points[:, 0] - points[:, 1]) / SQRT2
        raise ValueError(f"cannot evaluate bc of kind {self.kind!r} at points")

    def boundary_values(self, mesh):
        if self.kind == "nodal":
            vals = np.asarray(self.values, dtype=float)
            if vals.shape[0] != len(mesh.boundary_nodes):
                raise ValueError("nodal bc must cover every boundary node")
            return vals
        return self.evaluate(mesh.nodes[mesh.boundary_nodes])

    def canonical_key(self):
        """Deterministic sort key used to canonicalize measurement order."""
        if self.kind == "nodal":
            return ("nodal", self.values.tobytes())
        return (self.kind,) + tuple(float(p) for p in self.params)


def bc_linear(a, b):
    return DirichletBC(kind="linear", params=(float(a), float(b)))


def bc_diagonal():
    return DirichletBC(kind="paper-f3")


def bc_nodal(values):
    return DirichletBC(kind="nodal", values=np.asarray(values, dtype=float))


def standard_bcs():
    """The three-voltage boundary set x, y, (x - y)/sqrt(2)."""
    return [bc_linear(1.0, 0.0), bc_linear(0.0, 1.0), bc_diagonal()]


def _element_triplet_arrays(mesh, local):
    """Scatter (t, 3, 3) local matrices into global triplet arrays."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return rows, cols, local.ravel()


def element_average(mesh, u):
    """Element means of a nodal field (the P1 value at the centroid)."""
    return np.asarray(u, dtype=float)[mesh.triangles].mean(axis=1)


def gradient(mesh, geom, u):
    """Per-triangle constant gradient of the P1 interpolant, shape (t, 2)."""
    u = np.asarray(u, dtype=float)
    return np.einsum("ti,tid->td", u[mesh.triangles], geom.basis_grads)


def assemble_stiffness(mesh, geom, coeff):
    """Weighted stiffness K_ij = sum_e coeff_e A_e (grad phi_i . grad phi_j).

    The coefficient is a nodal field evaluated per element as the mean of
    its three vertex values.
    """
    coeff_e = element_average(mesh, coeff)
    local = np.einsum("tid,tjd->tij", geom.basis_grads, geom.basis_grads)
    local *= (coeff_e * geom.areas)[:, None, None]
    rows, cols, vals = _element_triplet_arrays(mesh, local)
    a = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    a.sum_duplicates()
    return a

def assemble_mass(mesh, geom):
    """Consistent P1 mass matrix (local A/12 * [[2,1,1],[1,2,1],[1,1,2]])."""
    base = (np.full((3, 3), 1.0) + np.eye(3)) / 12.0
    local = geom.areas[:, None, None] * base[None, :, :]
    rows, cols, vals = _element_triplet_arrays(mesh, local)
    a = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    a.sum_duplicates()
    return a


def lumped_mass_diagonal(geom):
    """Diagonal of the lumped (row-sum) mass matrix: incident area / 3."""
    return geom.node_areas / 3.0


def assemble_convection(mesh, geom, g):
    """Gradient-coupling form C_ij = int phi_j (g . grad phi_i).

    g is a per-element vector field; the form is exact since the integrand
    is P1 x P0.
    """
    g = np.asarray(g, dtype=float)
    gdot = np.einsum("td,tid->ti", g, geom.basis_grads)  # g . grad phi_i
    local = (geom.areas / 3.0)[:, None, None] * gdot[:, :, None]
    local = np.broadcast_to(local, (mesh.n_triangles, 3, 3)).copy()
    rows, cols, vals = _element_triplet_arrays(mesh, local)
    a = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    a.sum_duplicates()
    return a


def directional_gradient_matrix(mesh, geom, g):
    """Sparse (t x n) operator taking nodal v to the element field g . grad v."""
    g = np.asarray(g, dtype=float)
    gdot = np.einsum("td,tid->ti", g, geom.basis_grads)
    rows = np.repeat(np.arange(mesh.n_triangles), 3)
    cols = mesh.triangles.ravel()
    return sp.coo_matrix((gdot.ravel(), (rows, cols)),
                         shape=(mesh.n_triangles, mesh.n_nodes)).tocsr()


def element_average_matrix(mesh):
    """Sparse (t x n) element-mean operator."""
    rows = np.repeat(np.arange(mesh.n_triangles), 3)
    cols = mesh.triangles.ravel()
    vals = np.full(3 * mesh.n_triangles, 1.0 / 3.0)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(mesh.n_triangles, mesh.n_nodes)).tocsr()


def lump_matrix(mesh, geom):
    """Sparse (n x t) lumped projection: area-weighted incident-element mean."""
    rows = mesh.triangles.ravel()
    cols = np.repeat(np.arange(mesh.n_triangles), 3)
    vals = np.repeat(geom.areas, 3) / geom.node_areas[rows]
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(mesh.n_nodes, mesh.n_triangles)).tocsr()


def project_p0_to_p1(mesh, geom, e):
    """Lumped projection of a P0 element field to nodes."""
    e = np.asarray(e, dtype=float)
    acc = np.zeros(mesh.n_nodes)
    np.add.at(acc, mesh.triangles.ravel(), np.repeat(geom.areas * e, 3))
    return acc / geom.node_areas


def apply_dirichlet(matrix, rhs, mesh, bc, symmetric=True):
    """Impose Dirichlet values: identity boundary rows, rhs = boundary value.

    With symmetric=True the constrained columns are eliminated into the rhs
    (keeps the system symmetric); block systems use plain row replacement.
    """
    n = mesh.n_nodes
    bidx = mesh.boundary_nodes
    values = bc.boundary_values(mesh)
    keep = np.ones(n)
    keep[bidx] = 0.0
    d_keep = sp.diags(keep)
    i_bnd = sp.diags(1.0 - keep)
    if symmetric:
        lift = np.zeros(n)
        lift[bidx] = values
        new_rhs = keep * (rhs - matrix @ lift)
        new_matrix = d_keep @ matrix @ d_keep + i_bnd
    else:
        new_rhs = keep * rhs
        new_matrix = d_keep @ matrix + i_bnd
    new_rhs[bidx] = values
    return sp.csr_matrix(new_matrix), new_rhs


def dirichlet_zero_operator(matrix, mesh):
    """Row-replaced operator for repeated homogeneous-Dirichlet solves."""
    n = mesh.n_nodes
    keep = np.ones(n)
    keep[mesh.boundary_nodes] = 0.0
    op = sp.diags(keep) @ matrix + sp.diags(1.0 - keep)
    return sp.csr_matrix(op)


def interior_row_mask_matrix(mesh):
    keep = np.ones(mesh.n_nodes)
    keep[mesh.boundary_nodes] = 0.0
    return sp.diags(keep)


def mass_norm(mass, v):
    """L2(Omega) norm of a nodal field in the given mass inner product."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (mass @ v), 0.0)))


def solve_weighted_laplace(mesh, geom, coeff, bc):
    """Solve div(coeff grad u) = 0 with Dirichlet data bc."""
    k = assemble_stiffness(mesh, geom, coeff)
    a, b = apply_dirichlet(k, np.zeros(mesh.n_nodes), mesh, bc,
                           symmetric=True)
    return sparse.solve(a, b)
