"""Forward power-density operator and measurement simulation."""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fem, mesh as meshmod

SIGMA_MIN_DEFAULT = 1e-12


@dataclass(frozen=True)
class Conductivity:
    """Nodal conductivity clamped from below by sigma_min."""

    values: np.ndarray
    sigma_min: float = SIGMA_MIN_DEFAULT

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("conductivity values must be finite")
        object.__setattr__(self, "values", np.maximum(values, self.sigma_min))


def constant_conductivity(mesh, value, sigma_min=SIGMA_MIN_DEFAULT):
    return Conductivity(np.full(mesh.n_nodes, float(value)), sigma_min)


@dataclass
class MeasurementSet:
    """Boundary conditions with their power densities on one mesh."""

    mesh: object
    bcs: list
    data: list                      # nodal power densities, one per bc
    noise_std: float = 0.0
    noise_seed: int = None          # None marks exact data

    def __post_init__(self):
        if len(self.bcs) == 0:
            raise ValueError("at least one measurement required")
        if len(self.bcs) != len(self.data):
            raise ValueError("bcs and data length mismatch")

    @property
    def m(self):
        return len(self.bcs)

    def subset(self, indices):
        return MeasurementSet(self.mesh, [self.bcs[i] for i in indices],
                              [self.data[i] for i in indices],
                              self.noise_std, self.noise_seed)


def solve_potential(mesh, geom, sigma, bc):
    """Solve div(sigma grad u) = 0 in the disk with Dirichlet data bc."""
    return fem.solve_weighted_laplace(mesh, geom, sigma.values, bc)


def power_density(mesh, geom, sigma, u):
    """Nodal power density: element sigma |grad u|^2, lumped to nodes."""
    g = fem.gradient(mesh, geom, u)
    sigma_e = fem.element_average(mesh, sigma.values)
    e = sigma_e * (g[:, 0] ** 2 + g[:, 1] ** 2)
    return fem.project_p0_to_p1(mesh, geom, e)


def forward_map(mesh, geom, sigma, bcs):
    """Exact power densities for every boundary condition."""
    if len(bcs) == 0:
        raise ValueError("at least one boundary condition required")
    data = []
    for bc in bcs:
        u = solve_potential(mesh, geom, sigma, bc)
        data.append(power_density(mesh, geom, sigma, u))
    return MeasurementSet(mesh=mesh, bcs=list(bcs), data=data)


def add_noise(measurements, std, seed):
    """Add independent Gaussian noise per node per measurement (PCG64 rng)."""
    if std < 0:
        raise ValueError("noise std must be nonnegative")
    if measurements.noise_seed is not None:
        raise ValueError("noise may only be added to exact data")
    rng = np.random.default_rng(seed)
    noisy = [d + std * rng.standard_normal(d.shape) for d in measurements.data]
    return MeasurementSet(mesh=measurements.mesh, bcs=list(measurements.bcs),
                          data=noisy, noise_std=float(std),
                          noise_seed=int(seed))


def det_condition(mesh, geom, u1, u2):
    """Per-element det(grad u1, grad u2), the ellipticity diagnostic."""
    g1 = fem.gradient(mesh, geom, u1)
    g2 = fem.gradient(mesh, geom, u2)
    return g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0]


def simulate_measurements(recon_mesh, recon_geom, sigma_eval, bcs,
                          sim_n_rings=None, noise_std=0.0, noise_seed=0):
    """Simulate data on a finer mesh, restrict to the reconstruction mesh,
    then add noise.

    sigma_eval(mesh) must return nodal conductivity values on any mesh; the
    simulation mesh defaults to one refinement level finer (doubled rings)
    to decouple simulation from inversion.
    """
    if sim_n_rings is None:
        sim_n_rings = 2 * recon_mesh.n_rings
    if sim_n_rings < recon_mesh.n_rings:
        raise ValueError("simulation mesh must be at least as fine")
    if sim_n_rings == recon_mesh.n_rings:
        sim_mesh, sim_geom = recon_mesh, recon_geom
    else:
        sim_mesh = meshmod.build_disk_mesh(sim_n_rings)
        sim_geom = meshmod.element_geometry(sim_mesh)
    sigma_sim = Conductivity(sigma_eval(sim_mesh))
    fine = forward_map(sim_mesh, sim_geom, sigma_sim, bcs)
    data = [meshmod.interpolate_nodal(sim_mesh, d, recon_mesh)
            for d in fine.data]
    exact = MeasurementSet(mesh=recon_mesh, bcs=list(bcs), data=data)
    if noise_std > 0.0:
        return exact, add_noise(exact, noise_std, noise_seed)
    return exact, exact
