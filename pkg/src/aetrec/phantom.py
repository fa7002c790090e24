"""Ground-truth conductivity phantoms and the radial two-layer oracle."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GaussianBump:
    center: tuple
    width: float
    amplitude: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")


@dataclass(frozen=True)
class PhantomSpec:
    """Smooth bump phantom: clamp(background + sum of Gaussians, lo, hi)."""

    background: float = 1.0
    bumps: tuple = ()
    lo: float = 1.0
    hi: float = 10.0

    def __post_init__(self):
        if self.background <= 0 or self.lo <= 0:
            raise ValueError("background and lo must be positive")


def evaluate_phantom(spec, mesh):
    """Evaluate the phantom at mesh nodes; returns a nodal array."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    values = np.full(mesh.n_nodes, float(spec.background))
    for bump in spec.bumps:
        cx, cy = bump.center
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        values += bump.amplitude * np.exp(-r2 / bump.width ** 2)
    return np.clip(values, spec.lo, spec.hi)


def default_bump_spec():
    """The reference two-bump phantom with range [1, 10] used in experiments."""
    return PhantomSpec(
        background=1.0,
        bumps=(GaussianBump(center=(0.35, 0.2), width=0.3, amplitude=9.0),
               GaussianBump(center=(-0.25, -0.3), width=0.25, amplitude=5.0)),
        lo=1.0, hi=10.0)


@dataclass(frozen=True)
class TwoLayerOracle:
    """Analytic solution of div(sigma grad u) = 0, u = x on the unit circle,
    for the radial two-layer conductivity sigma_in (r < R) / sigma_out.

    The potential is u = A r cos(theta) inside and (B r + C/r) cos(theta)
    outside; A, B, C solve the interface/boundary matching system.
    """

    sigma_in: float
    sigma_out: float
    radius: float
    A: float = field(init=False, default=0.0)
    B: float = field(init=False, default=0.0)
    C: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not (0.0 < self.radius < 1.0):
            raise ValueError("interface radius must lie in (0, 1)")
        if self.sigma_in <= 0 or self.sigma_out <= 0:
            raise ValueError("conductivities must be positive")
        R = self.radius
        si, so = self.sigma_in, self.sigma_out
        # rows: continuity of u at R, continuity of sigma du/dr at R, u = x
        # on the unit circle (coefficients of cos(theta))
        mat = np.array([[R, -R, -1.0 / R],
                        [si, -so, so / R ** 2],
                        [0.0, 1.0, 1.0]])
        rhs = np.array([0.0, 0.0, 1.0])
        a, b, c = np.linalg.solve(mat, rhs)
        object.__setattr__(self, "A", float(a))
        object.__setattr__(self, "B", float(b))
        object.__setattr__(self, "C", float(c))

    def matching_residual(self):
        """Max residual of the three matching conditions (sanity check)."""
        R = self.radius
        r1 = self.A * R - (self.B * R + self.C / R)
        r2 = self.sigma_in * self.A - self.sigma_out * (self.B - self.C / R ** 2)
        r3 = self.B + self.C - 1.0
        return float(max(abs(r1), abs(r2), abs(r3)))

    def potential(self, points):
        points = np.asarray(points, dtype=float)
        x, y = points[:, 0], points[:, 1]
        r = np.hypot(x, y)
        inside = r < self.radius
        u = np.empty_like(x)
        u[inside] = self.A * x[inside]
        out = ~inside
        r2 = np.maximum(r[out] ** 2, 1e-300)
        u[out] = self.B * x[out] + self.C * x[out] / r2
        return u

    def grad_potential(self, points):
        points = np.asarray(points, dtype=float)
        x, y = points[:, 0], points[:, 1]
        r = np.hypot(x, y)
        inside = r < self.radius
        g = np.empty((len(x), 2))
        g[inside, 0] = self.A
        g[inside, 1] = 0.0
        out = ~inside
        r2 = np.maximum(r[out] ** 2, 1e-300)
        r4 = r2 ** 2
        # grad of C x / r^2
        g[out, 0] = self.B + self.C * (y[out] ** 2 - x[out] ** 2) / r4
        g[out, 1] = -2.0 * self.C * x[out] * y[out] / r4
        return g

    def sigma_at(self, points):
        points = np.asarray(points, dtype=float)
        r = np.hypot(points[:, 0], points[:, 1])
        return np.where(r < self.radius, self.sigma_in, self.sigma_out)

    def power_density(self, points):
        g = self.grad_potential(points)
        return self.sigma_at(points) * (g[:, 0] ** 2 + g[:, 1] ** 2)


def two_layer_nodal_sigma(oracle, mesh, interface="midpoint"):
    """Nodal conductivity for the two-layer phantom.

    Nodes on the interface circle (within 1e-12) take the inside value,
    the outside value, or their average depending on ``interface``.
    """
    r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    si, so = oracle.sigma_in, oracle.sigma_out
    values = np.where(r < oracle.radius - 1e-12, si, so)
    on_interface = np.abs(r - oracle.radius) <= 1e-12
    interface_value = {"inside": si, "outside": so,
                       "midpoint": 0.5 * (si + so)}[interface]
    values = values.astype(float)
    values[on_interface] = interface_value
    return values
