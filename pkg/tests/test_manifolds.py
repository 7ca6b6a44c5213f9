import numpy as np
import pytest

from decmanopt.errors import SingularityError
from decmanopt.manifolds import check_projection_lipschitz, generalized_stiefel, stiefel
from decmanopt.problems import PcaProblem


def random_spd(d, rng, spread=2.0):
    g = rng.standard_normal((d, d))
    q, _ = np.linalg.qr(g)
    w = np.linspace(1.0, spread, d)
    return q @ np.diag(w) @ q.T


def test_project_fixed_point():
    rng = np.random.default_rng(0)
    spec = stiefel(8, 3)
    x = spec.random_point(rng)
    assert np.linalg.norm(spec.project(x) - x) <= 1e-12


def test_project_removes_column_scaling():
    rng = np.random.default_rng(1)
    spec = stiefel(8, 3)
    x = spec.random_point(rng)
    assert np.linalg.norm(spec.project(2.5 * x) - x) <= 1e-10


def test_project_is_nearest_point():
    # Brute-force oracle: local minimization of ||m - y|| over the manifold
    # from several random restarts must not beat the polar factor.
    rng = np.random.default_rng(2)
    spec = stiefel(10, 5)
    y = rng.standard_normal((10, 5))
    p = spec.project(y)
    d_polar = np.linalg.norm(p - y)
    best = np.inf
    for _ in range(10):
        m = spec.random_point(rng)
        for _ in range(500):
            m = spec.project(m - 0.5 * (m - y))
        best = min(best, np.linalg.norm(m - y))
    assert d_polar <= best + 1e-6


def test_project_idempotent():
    rng = np.random.default_rng(3)
    for spec in (stiefel(10, 5), generalized_stiefel(6, 2, random_spd(6, rng))):
        for _ in range(20):
            y = rng.standard_normal((spec.d, spec.r))
            p = spec.project(y)
            assert spec.feasibility_residual(p) <= 1e-8
            assert np.linalg.norm(spec.project(p) - p) <= 1e-8


def test_project_rank_deficient_rejected():
    spec = stiefel(5, 2)
    y = np.zeros((5, 2))
    y[:, 0] = 1.0
    y[:, 1] = 1.0
    with pytest.raises(SingularityError):
        spec.project(y)


def test_tangent_project_idempotent_and_kills_base():
    rng = np.random.default_rng(4)
    spec = stiefel(9, 4)
    x = spec.random_point(rng)
    u = rng.standard_normal((9, 4))
    pu = spec.tangent_project(x, u)
    assert spec.tangency_residual(x, pu) <= 1e-8
    assert np.linalg.norm(spec.tangent_project(x, pu) - pu) <= 1e-9
    # u = x projects to zero since sym(x'x) = I.
    assert np.linalg.norm(spec.tangent_project(x, x)) <= 1e-10


def test_tangent_project_orthogonal_decomposition():
    # The residual u - P(u) must be orthogonal to every tangent vector.
    rng = np.random.default_rng(5)
    for spec in (stiefel(10, 5), generalized_stiefel(7, 3, random_spd(7, rng))):
        x = spec.random_point(rng)
        u = rng.standard_normal((spec.d, spec.r))
        normal_part = u - spec.tangent_project(x, u)
        for _ in range(20):
            w = spec.random_tangent(x, rng)
            assert abs(np.sum(normal_part * w)) <= 1e-8 * max(1.0, np.linalg.norm(w))


def test_tangent_project_self_adjoint():
    rng = np.random.default_rng(6)
    for spec in (stiefel(10, 5), generalized_stiefel(6, 2, random_spd(6, rng))):
        x = spec.random_point(rng)
        for _ in range(10):
            u = rng.standard_normal((spec.d, spec.r))
            w = rng.standard_normal((spec.d, spec.r))
            lhs = np.sum(spec.tangent_project(x, u) * w)
            rhs = np.sum(u * spec.tangent_project(x, w))
            assert abs(lhs - rhs) <= 1e-9


def test_riemannian_gradient_degenerate_cases():
    rng = np.random.default_rng(7)
    spec = stiefel(8, 3)
    x = spec.random_point(rng)
    s = rng.standard_normal((3, 3))
    normal = x @ (s + s.T)
    assert np.linalg.norm(spec.riemannian_gradient(x, normal)) <= 1e-9
    tangent = spec.random_tangent(x, rng)
    assert np.linalg.norm(spec.riemannian_gradient(x, tangent) - tangent) <= 1e-9


def test_riemannian_gradient_directional_derivative():
    # Finite differences along projection-retracted tangent curves.
    rng = np.random.default_rng(8)
    spec = stiefel(10, 5)
    problem = PcaProblem([rng.standard_normal((40, 10)) for _ in range(3)], spec)
    x = spec.random_point(rng)
    grad = spec.riemannian_gradient(x, problem.mean_gradient(x))
    h = 1e-6
    for _ in range(10):
        w = spec.random_tangent(x, rng, 1.0)
        fp = problem.value_at(spec.project(x + h * w))
        fm = problem.value_at(spec.project(x - h * w))
        fd = (fp - fm) / (2.0 * h)
        an = float(np.sum(grad * w))
        assert abs(fd - an) <= 1e-5 * max(1.0, abs(an))


def test_normal_vector_inequality_stiefel():
    # <v, y - x> <= (||v|| / 2) ||y - x||^2 for normals v (radius one).
    rng = np.random.default_rng(9)
    spec = stiefel(10, 5)
    for _ in range(200):
        x = spec.random_point(rng)
        y = spec.random_point(rng)
        s = rng.standard_normal((5, 5))
        v = x @ (s + s.T)
        lhs = np.sum(v * (y - x))
        rhs = 0.5 * np.linalg.norm(v) * np.linalg.norm(y - x) ** 2
        assert lhs <= rhs + 1e-9


def test_retraction_first_order_agreement():
    # ||P(x + xi) - x - xi|| / ||xi||^2 stays bounded as xi shrinks.
    rng = np.random.default_rng(10)
    spec = stiefel(10, 5)
    x = spec.random_point(rng)
    xi0 = spec.random_tangent(x, rng, 1.0)
    ratios = []
    for scale in (1e-1, 1e-2, 1e-3, 1e-4):
        xi = scale * xi0
        ratios.append(np.linalg.norm(spec.project(x + xi) - x - xi) / scale**2)
    assert max(ratios) <= 3.0 * max(ratios[0], 1e-6)


def test_projection_probe_zero_perturbation():
    rng = np.random.default_rng(11)
    spec = stiefel(6, 2)
    x = spec.random_point(rng)
    # With u = 0 both probe numerators vanish (up to one reprojection's roundoff).
    assert np.linalg.norm(spec.project(x + 0.0) - x) <= 1e-13
    assert np.linalg.norm(spec.tangent_project(x, np.zeros((6, 2)))) == 0.0


def test_projection_probe_quadratic_ratio_stable():
    spec = stiefel(10, 5)
    ratios = []
    for scale in (1e-2, 1e-3, 1e-4):
        report = check_projection_lipschitz(spec, trials=200, noise_scale=scale, seed=12)
        ratios.append(report.max_ratio_quad)
    # O(||u||^2) behavior: the ratio does not diverge as the scale shrinks.
    assert max(ratios) <= 3.0 * ratios[0]


def test_projection_probe_lipschitz_bound():
    spec = stiefel(10, 5)
    report = check_projection_lipschitz(spec, trials=500, noise_scale=0.3, seed=13)
    assert report.max_ratio_lip <= 2.0
    assert np.isfinite(report.max_ratio_quad)


def test_generalized_projection_feasible():
    rng = np.random.default_rng(14)
    spec = generalized_stiefel(8, 3, random_spd(8, rng))
    y = rng.standard_normal((8, 3))
    p = spec.project(y)
    assert spec.feasibility_residual(p) <= 1e-8
    # B-polar of a feasible point is the point itself.
    assert np.linalg.norm(spec.project(p) - p) <= 1e-8


def test_generalized_gamma_default():
    rng = np.random.default_rng(15)
    b = random_spd(5, rng, spread=4.0)
    spec = generalized_stiefel(5, 2, b)
    w = np.linalg.eigvalsh(b)
    assert np.isclose(spec.gamma, 0.5 / w[-1])


def test_random_point_feasible_and_seeded():
    spec = stiefel(12, 4)
    a = spec.random_point(np.random.default_rng(42))
    b = spec.random_point(np.random.default_rng(42))
    assert np.array_equal(a, b)
    assert spec.feasibility_residual(a) <= 1e-8
