import numpy as np
import pytest

from aetrec import mesh as meshmod, phantom


def test_two_layer_coefficients_frozen():
    # hand-solved matching system for sigma_in=2, sigma_out=1, R=1/2:
    # A = 8/11, B = 12/11, C = -1/11
    oracle = phantom.TwoLayerOracle(sigma_in=2.0, sigma_out=1.0, radius=0.5)
    assert abs(oracle.A - 8.0 / 11.0) < 1e-14
    assert abs(oracle.B - 12.0 / 11.0) < 1e-14
    assert abs(oracle.C + 1.0 / 11.0) < 1e-14
    assert oracle.matching_residual() < 1e-12


def test_two_layer_closed_form_inner_coefficient():
    # A = 2 sigma_out / (sigma_out (1 + R^2) + sigma_in (1 - R^2))
    for si, so, r in ((2.0, 1.0, 0.5), (5.0, 1.5, 0.3), (0.5, 3.0, 0.7)):
        oracle = phantom.TwoLayerOracle(sigma_in=si, sigma_out=so, radius=r)
        closed = 2.0 * so / (so * (1 + r * r) + si * (1 - r * r))
        assert abs(oracle.A - closed) < 1e-13


def test_two_layer_interface_conditions_dense_sample():
    oracle = phantom.TwoLayerOracle(sigma_in=2.0, sigma_out=1.0, radius=0.5)
    theta = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
    eps = 1e-9
    inner = np.column_stack([(0.5 - eps) * np.cos(theta),
                             (0.5 - eps) * np.sin(theta)])
    outer = np.column_stack([(0.5 + eps) * np.cos(theta),
                             (0.5 + eps) * np.sin(theta)])
    # potential continuous across the interface
    assert np.max(np.abs(oracle.potential(inner)
                         - oracle.potential(outer))) < 1e-7
    # radial flux sigma du/dr continuous
    gi = oracle.grad_potential(inner)
    go = oracle.grad_potential(outer)
    nrm = np.column_stack([np.cos(theta), np.sin(theta)])
    flux_i = 2.0 * np.einsum("pd,pd->p", gi, nrm)
    flux_o = 1.0 * np.einsum("pd,pd->p", go, nrm)
    assert np.max(np.abs(flux_i - flux_o)) < 1e-7
    # boundary data u = x on the unit circle
    ring = np.column_stack([np.cos(theta), np.sin(theta)])
    assert np.max(np.abs(oracle.potential(ring) - ring[:, 0])) < 1e-12


def test_two_layer_harmonicity_away_from_interface():
    # five-point Laplacian of the closed form vanishes off the interface
    oracle = phantom.TwoLayerOracle(sigma_in=3.0, sigma_out=1.0, radius=0.4)
    h = 1e-4
    for cx, cy in ((0.1, 0.05), (0.7, 0.1), (-0.3, 0.55)):
        pts = np.array([[cx, cy], [cx + h, cy], [cx - h, cy],
                        [cx, cy + h], [cx, cy - h]])
        u = oracle.potential(pts)
        lap = (u[1] + u[2] + u[3] + u[4] - 4.0 * u[0]) / h ** 2
        assert abs(lap) < 1e-4


def test_two_layer_validation():
    with pytest.raises(ValueError):
        phantom.TwoLayerOracle(sigma_in=1.0, sigma_out=1.0, radius=1.5)
    with pytest.raises(ValueError):
        phantom.TwoLayerOracle(sigma_in=-1.0, sigma_out=1.0, radius=0.5)


def test_two_layer_nodal_sigma_conventions():
    oracle = phantom.TwoLayerOracle(sigma_in=2.0, sigma_out=1.0, radius=0.5)
    m = meshmod.build_disk_mesh(8)  # ring 4 sits exactly on r = 0.5
    r = np.hypot(m.nodes[:, 0], m.nodes[:, 1])
    on = np.abs(r - 0.5) <= 1e-12
    assert np.any(on)
    mid = phantom.two_layer_nodal_sigma(oracle, m, interface="midpoint")
    assert np.allclose(mid[on], 1.5)
    assert np.allclose(phantom.two_layer_nodal_sigma(oracle, m, "inside")[on],
                       2.0)
    assert np.allclose(phantom.two_layer_nodal_sigma(oracle, m, "outside")[on],
                       1.0)
    assert np.all(mid[r < 0.5 - 1e-9] == 2.0)
    assert np.all(mid[r > 0.5 + 1e-9] == 1.0)


def test_phantom_evaluation_and_clamping():
    m = meshmod.build_disk_mesh(6)
    spec = phantom.default_bump_spec()
    values = phantom.evaluate_phantom(spec, m)
    assert values.shape == (m.n_nodes,)
    assert np.all(values >= spec.lo) and np.all(values <= spec.hi)
    assert values.max() > 9.0  # near-saturated at the main bump center
    # far from both bumps the background survives
    far = np.hypot(m.nodes[:, 0] + 0.8, m.nodes[:, 1] - 0.55) < 0.15
    assert np.any(far)
    assert np.max(values[far]) < 1.6


def test_phantom_validation():
    with pytest.raises(ValueError):
        phantom.PhantomSpec(background=0.0)
    with pytest.raises(ValueError):
        phantom.GaussianBump(center=(0, 0), width=0.0, amplitude=1.0)


def test_power_density_of_oracle():
    oracle = phantom.TwoLayerOracle(sigma_in=2.0, sigma_out=1.0, radius=0.5)
    inner = np.array([[0.1, 0.1], [0.0, 0.2]])
    e_in = oracle.power_density(inner)
    assert np.allclose(e_in, 2.0 * oracle.A ** 2)
    far = np.array([[0.0, 0.99]])
    # near the boundary the gradient approaches grad(Bx + Cx/r^2)
    g = oracle.grad_potential(far)
    assert np.allclose(oracle.power_density(far),
                       g[0, 0] ** 2 + g[0, 1] ** 2)
