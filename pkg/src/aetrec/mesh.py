"""Structured triangulations of the unit disk.

The mesh is built from concentric rings: ring j (1 <= j <= n_rings) carries
6*j equally spaced nodes at radius j/n_rings, so a mesh with R rings has
1 + 3*R*(R+1) nodes and 6*R^2 triangles.  Construction is deterministic and
meshes with ring counts in an integer ratio are nested node-for-node.
"""

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_RADIUS_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of the unit disk.

    Attributes
    ----------
    nodes : (n, 2) float array of node coordinates.
    triangles : (t, 3) int array of node indices, counterclockwise.
    boundary_nodes : sorted int array of nodes with ||x|| >= 1 - 1e-12.
    n_rings : structured refinement level.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    n_rings: int

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def interior_mask(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return mask


@dataclass(frozen=True)
class ElementGeometry:
    """Per-triangle area and constant P1 basis gradients.

    ``basis_grads[e, i]`` is the gradient (2-vector) of the hat function of
    local vertex i on triangle e.
    """

    areas: np.ndarray
    basis_grads: np.ndarray
    node_areas: np.ndarray = field(repr=False, default=None)

    @property
    def total_area(self):
        return float(self.areas.sum())


def ring_start(j):
    """Node index of the first node on ring j (ring 0 is the center node)."""
    if j == 0:
        return 0
    return 1 + 3 * j * (j - 1)


def build_disk_mesh(n_rings):
    """Build the structured disk mesh with the given number of rings."""
    if n_rings < 1:
        raise ValueError("n_rings must be >= 1")
    n_rings = int(n_rings)

    n_nodes = 1 + 3 * n_rings * (n_rings + 1)
    nodes = np.zeros((n_nodes, 2))
    for j in range(1, n_rings + 1):
        k = np.arange(6 * j)
        theta = 2.0 * np.pi * k / (6 * j)
        r = j / n_rings
        start = ring_start(j)
        nodes[start:start + 6 * j, 0] = r * np.cos(theta)
        nodes[start:start + 6 * j, 1] = r * np.sin(theta)

    triangles = []
    for j in range(1, n_rings + 1):
        inner_n = 6 * (j - 1) if j > 1 else 1
        outer_start = ring_start(j)
        inner_start = ring_start(j - 1)
        for s in range(6):
            if j == 1:
                o0 = outer_start + s
                o1 = outer_start + (s + 1) % 6
                triangles.append((o0, o1, 0))
                continue
            # ladder between j-1 inner and j outer nodes of sector s
            for t in range(j):
                o0 = outer_start + (j * s + t) % (6 * j)
                o1 = outer_start + (j * s + t + 1) % (6 * j)
                i0 = inner_start + ((j - 1) * s + t) % inner_n
                triangles.append((o0, o1, i0))
            for t in range(1, j):
                o = outer_start + (j * s + t) % (6 * j)
                i1 = inner_start + ((j - 1) * s + t) % inner_n
                i0 = inner_start + ((j - 1) * s + t - 1) % inner_n
                triangles.append((o, i1, i0))
    triangles = np.asarray(triangles, dtype=np.int64)

    # counterclockwise orientation enforced at construction
    p = nodes[triangles]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = signed < 0
    if np.any(flip):
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

    radii = np.hypot(nodes[:, 0], nodes[:, 1])
    marked = np.arange(ring_start(n_rings), n_nodes)
    by_radius = np.where(radii >= 1.0 - BOUNDARY_RADIUS_TOL)[0]
    # construction-time marking is authoritative; the radius rule must agree
    if not np.array_equal(np.sort(by_radius), marked):
        raise AssertionError("boundary marking inconsistent with radius rule")

    return Mesh(nodes=nodes, triangles=triangles, boundary_nodes=marked,
                n_rings=n_rings)


def element_geometry(mesh):
    """Compute areas and P1 basis gradients for every triangle."""
    p = mesh.nodes[mesh.triangles]  # (t, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1])
    if np.any(areas <= 0):
        raise ValueError("degenerate or misoriented triangle (area <= 0)")

    # grad(phi_i) = perp(p_{i+2} - p_{i+1}) / (2A), perp(v) = (-v_y, v_x)
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        edge = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -edge[:, 1]
        grads[:, i, 1] = edge[:, 0]
    grads /= (2.0 * areas)[:, None, None]

    node_areas = np.zeros(mesh.n_nodes)
    np.add.at(node_areas, mesh.triangles.ravel(),
              np.repeat(areas, 3))
    return ElementGeometry(areas=areas, basis_grads=grads,
                           node_areas=node_areas)


def edge_incidence(mesh):
    """Count how many triangles share each undirected edge.

    Returns a dict {(a, b): count} with a < b.  Conforming meshes have
    count 2 on interior edges and 1 on boundary edges.
    """
    counts = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def max_edge_length(mesh):
    p = mesh.nodes[mesh.triangles]
    best = 0.0
    for i in range(3):
        d = p[:, (i + 1) % 3] - p[:, i]
        best = max(best, float(np.max(np.hypot(d[:, 0], d[:, 1]))))
    return best


def nested_restriction(coarse, fine):
    """Index map from coarse nodes into a finer nested mesh.

    Requires fine.n_rings to be an integer multiple c of coarse.n_rings;
    coarse ring j node k then coincides with fine ring c*j node c*k.
    """
    if fine.n_rings % coarse.n_rings != 0:
        raise ValueError("meshes are not nested")
    c = fine.n_rings // coarse.n_rings
    idx = np.zeros(coarse.n_nodes, dtype=np.int64)
    idx[0] = 0
    for j in range(1, coarse.n_rings + 1):
        k = np.arange(6 * j)
        idx[ring_start(j) + k] = ring_start(c * j) + c * k
    return idx


def locate_points(mesh, points):
    """Find the containing triangle and barycentric coordinates per point.

    Uses a trapezoid-map point locator; points that fall marginally outside
    the polygonal domain are snapped to the nearest node.
    Returns (tri_index, bary) with tri_index = -1 for snapped points, in
    which case bary[0] holds the nearest node index.
    """
    from matplotlib.tri import Triangulation

    triang = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1],
                           triangles=mesh.triangles)
    finder = triang.get_trifinder()
    points = np.asarray(points, dtype=float)
    tri_idx = finder(points[:, 0], points[:, 1])
    bary = np.zeros((len(points), 3))
    found = tri_idx >= 0
    if np.any(found):
        tris = mesh.triangles[tri_idx[found]]
        p = mesh.nodes[tris]
        v0 = p[:, 1] - p[:, 0]
        v1 = p[:, 2] - p[:, 0]
        w = points[found] - p[:, 0]
        det = v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]
        l1 = (w[:, 0] * v1[:, 1] - v1[:, 0] * w[:, 1]) / det
        l2 = (v0[:, 0] * w[:, 1] - w[:, 0] * v0[:, 1]) / det
        bary[found, 0] = 1.0 - l1 - l2
        bary[found, 1] = l1
        bary[found, 2] = l2
    if np.any(~found):
        for i in np.where(~found)[0]:
            d = np.hypot(mesh.nodes[:, 0] - points[i, 0],
                         mesh.nodes[:, 1] - points[i, 1])
            bary[i, 0] = float(np.argmin(d))
    return tri_idx, bary


def interpolate_nodal(src_mesh, values, dst_mesh):
    """Interpolate a nodal field from src_mesh onto the nodes of dst_mesh.

    Nested structured meshes use the exact node-index restriction; the
    general path does barycentric interpolation.
    """
    values = np.asarray(values, dtype=float)
    if (src_mesh.n_rings >= dst_mesh.n_rings
            and src_mesh.n_rings % dst_mesh.n_rings == 0):
        return values[nested_restriction(dst_mesh, src_mesh)].copy()
    tri_idx, bary = locate_points(src_mesh, dst_mesh.nodes)
    out = np.zeros(dst_mesh.n_nodes)
    found = tri_idx >= 0
    if np.any(found):
        tris = src_mesh.triangles[tri_idx[found]]
        out[found] = np.sum(values[tris] * bary[found], axis=1)
    for i in np.where(~found)[0]:
        out[i] = values[int(bary[i, 0])]
    return out


def write_mesh_file(mesh, path):
    """Plain-text mesh export: node, triangle and boundary sections."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i} {x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i} {a} {b} {c}\n")
        fh.write(f"boundary {len(mesh.boundary_nodes)}\n")
        fh.write(" ".join(str(int(b)) for b in mesh.boundary_nodes) + "\n")


def read_mesh_file(path):
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    assert take() == "nodes"
    n = int(take())
    nodes = np.zeros((n, 2))
    for _ in range(n):
        i = int(take())
        nodes[i, 0] = float(take())
        nodes[i, 1] = float(take())
    assert take() == "triangles"
    t = int(take())
    triangles = np.zeros((t, 3), dtype=np.int64)
    for _ in range(t):
        i = int(take())
        triangles[i] = (int(take()), int(take()), int(take()))
    assert take() == "boundary"
    nb = int(take())
    boundary = np.array([int(take()) for _ in range(nb)], dtype=np.int64)
    # ring count back-solved from the node-count formula
    n_rings = int(round((-3 + np.sqrt(9 + 12 * (n - 1))) / 6))
    return Mesh(nodes=nodes, triangles=triangles, boundary_nodes=boundary,
                n_rings=n_rings)
