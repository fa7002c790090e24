import numpy as np
import pytest

from aetrec import adjoint, fem, forward, mesh as meshmod, verify


@pytest.fixture(scope="module")
def ctx2():
    m = meshmod.build_disk_mesh(2)
    geom = meshmod.element_geometry(m)
    sig = forward.Conductivity(verify._smooth_test_sigma(m))
    return adjoint.build_context(m, geom, sig, fem.standard_bcs()[:2])


def test_dense_jacobian_linearity(ctx2):
    jac = verify.build_dense_jacobian(ctx2)
    assert jac.provenance == "columnwise-derivative"
    rng = np.random.default_rng(0)
    tau = rng.standard_normal(ctx2.mesh.n_nodes)
    want = np.concatenate(adjoint.apply_derivative(ctx2, tau))
    assert np.max(np.abs(jac.matrix @ tau - want)) < 1e-12


def test_dense_jacobian_guard():
    m = meshmod.build_disk_mesh(8)  # 217 nodes > 200
    geom = meshmod.element_geometry(m)
    ctx = adjoint.build_context(m, geom,
                                forward.constant_conductivity(m, 1.0),
                                fem.standard_bcs()[:1])
    with pytest.raises(ValueError):
        verify.build_dense_jacobian(ctx)
    with pytest.raises(ValueError):
        verify.finite_difference_jacobian(ctx)


def test_fd_jacobian_agrees(ctx2):
    jac = verify.build_dense_jacobian(ctx2)
    fd = verify.finite_difference_jacobian(ctx2)
    assert fd.provenance == "finite-difference"
    denom = max(float(np.max(np.abs(jac.matrix))), 1.0)
    assert np.max(np.abs(jac.matrix - fd.matrix)) / denom < 1e-5


def test_jacobian_kernel_column_combination():
    # at sigma = 1 with data ax+by, J applied to the nodal field ax+by is
    # small compared to J's own scale (discrete shadow of the kernel)
    m = meshmod.build_disk_mesh(3)
    geom = meshmod.element_geometry(m)
    ctx = adjoint.build_context(m, geom,
                                forward.constant_conductivity(m, 1.0),
                                [fem.bc_linear(1.0, 0.0)])
    jac = verify.build_dense_jacobian(ctx).matrix
    tau = m.nodes[:, 0]
    out = jac @ tau
    assert np.linalg.norm(out) < 0.1 * np.linalg.norm(jac @ (tau + 1.0))


def test_adjoint_identity_routes(ctx2):
    assert verify.adjoint_identity_report(ctx2, trials=6, seed=0,
                                          route="transpose") < 1e-12
    assert verify.adjoint_identity_report(ctx2, trials=6, seed=0,
                                          route="continuous") < 1e-8
    with pytest.raises(ValueError):
        verify.adjoint_identity_report(ctx2, route="sideways")


def test_adjoint_identity_zero_field(ctx2):
    # z = 0 pairs to exactly zero mismatch; fold into a direct evaluation
    zs = [np.zeros(ctx2.mesh.n_nodes) for _ in range(ctx2.m)]
    out = adjoint.apply_adjoint_pre_embedding(ctx2, zs)
    assert np.max(np.abs(out)) == 0.0


def test_perturbed_adjoint_detected(ctx2):
    clean = verify.adjoint_identity_report(ctx2, trials=6, seed=0,
                                           route="continuous")
    broken = verify.adjoint_identity_report(ctx2, trials=6, seed=0,
                                            route="continuous",
                                            perturbation=1e-3)
    assert broken > 1e-8 > clean


def test_taylor_slope_quadratic(ctx2):
    tau = verify._smooth_test_tau(ctx2.mesh, 3)
    result = verify.taylor_slope(ctx2, tau, [2.0 ** -p for p in range(2, 8)])
    assert not result.exact
    assert 1.9 <= result.slope <= 2.1


def test_taylor_zero_direction_reports_exact(ctx2):
    result = verify.taylor_slope(ctx2, np.zeros(ctx2.mesh.n_nodes),
                                 [0.25, 0.125])
    assert result.exact
    assert max(result.remainders) == 0.0


def test_taylor_constant_sigma_constant_tau_exact():
    # for f = x the potential stays x for every constant conductivity, so
    # E(sigma + t tau) is affine in t and the remainder vanishes
    m = meshmod.build_disk_mesh(3)
    geom = meshmod.element_geometry(m)
    ctx = adjoint.build_context(m, geom,
                                forward.constant_conductivity(m, 2.0),
                                [fem.bc_linear(1.0, 0.0)])
    result = verify.taylor_slope(ctx, np.full(m.n_nodes, 0.3),
                                 [0.5, 0.25, 0.125])
    assert result.exact


def test_taylor_preconditions(ctx2):
    with pytest.raises(ValueError):
        verify.taylor_slope(ctx2, np.ones(ctx2.mesh.n_nodes), [0.5, -0.25])
    huge = -100.0 * np.ones(ctx2.mesh.n_nodes)
    with pytest.raises(ValueError):
        verify.taylor_slope(ctx2, huge, [1.0])


def test_suite_passes_and_is_deterministic():
    a = verify.run_suite(seed=0)
    b = verify.run_suite(seed=0)
    assert a["passed"]
    assert a == b
    names = [c["name"] for c in a["checks"]]
    assert "adjoint-continuous" in names and "taylor-slope" in names


def test_suite_negative_control():
    bad = verify.run_suite(seed=0, perturb_adjoint=1e-3)
    assert not bad["passed"]
    failed = {c["name"] for c in bad["checks"] if not c["passed"]}
    assert failed == {"adjoint-continuous"}
    report = verify.format_report(bad)
    assert "FAIL" in report and "adjoint-continuous" in report
