import numpy as np
import pytest

from decmanopt.algorithms import (
    AgentSystem,
    RunConfig,
    StepSchedule,
    consensus_step,
    dprgd_step,
    dprgt_step,
    estimate_smoothness,
    init_system,
    init_tracker,
    run,
    theoretical_beta,
)
from decmanopt.errors import InvalidInputError, TubeViolationError
from decmanopt.metrics import induced_mean, write_trace
from decmanopt.network import MixingMatrix, build_graph, metropolis_weights
from decmanopt.problems import PcaProblem, gen_pca_data


def single_agent_mixing():
    return MixingMatrix(1, np.array([[1.0]]), 0.0)


def test_step_schedule():
    const = StepSchedule("constant", 0.25)
    assert const.alpha(0) == const.alpha(999) == 0.25
    dim = StepSchedule("diminishing", 2.0)
    assert np.isclose(dim.alpha(0), 2.0)
    assert np.isclose(dim.alpha(3), 1.0)
    with pytest.raises(InvalidInputError):
        StepSchedule("constant", 0.0)
    with pytest.raises(InvalidInputError):
        StepSchedule("linear", 1.0)


def test_init_identical_zero_consensus():
    problem, _ = gen_pca_data(8, 50, 10, 5, 0.8, seed=0)
    system = init_system(problem, "identical", seed=1)
    assert np.all(system.points == system.points[0])
    system2 = init_system(problem, "perturbed", seed=1, delta=0.0)
    assert np.array_equal(system2.points, system.points)


def test_init_perturbed_stays_in_neighborhood():
    problem, _ = gen_pca_data(8, 50, 10, 5, 0.8, seed=0)
    system = init_system(problem, "perturbed", seed=2, delta=0.1)
    spec = problem.spec
    assert spec.is_feasible(system.points)
    _, x_bar = induced_mean(spec, system.points)
    max_dev = np.max(np.linalg.norm(system.points - x_bar, axis=(1, 2)))
    assert max_dev <= 0.5 * spec.gamma
    assert max_dev > 0


def test_consensus_fixed_point_on_agreement():
    problem, _ = gen_pca_data(4, 50, 8, 3, 0.8, seed=3)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=4)
    stepped = consensus_step(system, m, 2, problem)
    assert np.max(np.abs(stepped.points - system.points)) <= 1e-12


def test_consensus_complete_graph_one_step():
    problem, _ = gen_pca_data(4, 50, 8, 3, 0.8, seed=5)
    m = metropolis_weights(build_graph("complete", 4))
    system = init_system(problem, "perturbed", seed=6, delta=0.1)
    _, x_bar = induced_mean(problem.spec, system.points)
    stepped = consensus_step(system, m, 1, problem)
    for block in stepped.points:
        assert np.linalg.norm(block - x_bar) <= 1e-10


def test_dprgd_zero_step_equals_consensus():
    problem, _ = gen_pca_data(4, 50, 8, 3, 0.8, seed=7)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "perturbed", seed=8, delta=0.1)
    a = consensus_step(system, m, 1, problem)
    b = dprgd_step(system, m, 1, problem, 0.0)
    assert np.max(np.abs(a.points - b.points)) <= 1e-15


def test_dprgd_single_agent_is_centralized():
    problem, _ = gen_pca_data(1, 100, 8, 3, 0.8, seed=9)
    m = single_agent_mixing()
    spec = problem.spec
    system = init_system(problem, "identical", seed=10)
    x = system.points[0].copy()
    alpha = 0.5
    for _ in range(10):
        system = dprgd_step(system, m, 3, problem, alpha)
        g = spec.tangent_project(x, problem.local_grad(0, x))
        x = spec.project(x - alpha * g)
        assert np.max(np.abs(system.points[0] - x)) <= 1e-12


def test_dprgt_single_agent_tracker_telescopes():
    problem, _ = gen_pca_data(1, 100, 8, 3, 0.8, seed=11)
    m = single_agent_mixing()
    spec = problem.spec
    system = init_tracker(init_system(problem, "identical", seed=12), problem)
    for _ in range(10):
        system = dprgt_step(system, m, 1, problem, 0.5)
        g = spec.tangent_project(system.points[0], problem.local_grad(0, system.points[0]))
        assert np.max(np.abs(system.tracker[0] - g)) <= 1e-12


def test_dprgt_symmetry_preserved():
    # Identical data and identical initialization keep the agents identical.
    rng = np.random.default_rng(13)
    a = rng.standard_normal((50, 8))
    from decmanopt import manifolds

    problem = PcaProblem([a.copy() for _ in range(4)], manifolds.stiefel(8, 3))
    m = metropolis_weights(build_graph("ring", 4))
    system = init_tracker(init_system(problem, "identical", seed=14), problem)
    alpha = 0.5 / np.linalg.norm(a.T @ a, 2)  # stable for this data scale
    for _ in range(20):
        system = dprgt_step(system, m, 1, problem, alpha)
        for i in range(1, 4):
            # identical up to roundoff drift (mixing rows sum in different orders)
            assert np.max(np.abs(system.points[i] - system.points[0])) <= 1e-12


def test_dprgt_requires_tracker():
    problem, _ = gen_pca_data(4, 50, 8, 3, 0.8, seed=15)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=16)
    with pytest.raises(InvalidInputError):
        dprgt_step(system, m, 1, problem, 0.1)


def test_run_zero_iterations():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=17)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=18)
    trace = run(RunConfig(algorithm="consensus", max_iters=0), problem, m, system, truth)
    assert len(trace.records) == 1
    assert trace.records[0].iter == 0


def test_run_huge_eps_stops_immediately():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=19)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=20)
    cfg = RunConfig(algorithm="dprgd", schedule=StepSchedule("constant", 0.1),
                    max_iters=100, stop_eps=1e6)
    trace = run(cfg, problem, m, system, truth)
    assert trace.status == "stopped"
    assert len(trace.records) == 1 and trace.records[0].iter == 0


def test_run_trace_row_count():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=21)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=22)
    cfg = RunConfig(algorithm="dprgd", schedule=StepSchedule("constant", 0.1),
                    max_iters=40, trace_every=10)
    trace = run(cfg, problem, m, system, truth)
    assert [rec.iter for rec in trace.records] == [0, 10, 20, 30, 40]


def test_run_records_final_iterate_with_uneven_cadence():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=23)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "identical", seed=24)
    cfg = RunConfig(algorithm="consensus", max_iters=25, trace_every=10)
    trace = run(cfg, problem, m, system, truth)
    assert [rec.iter for rec in trace.records] == [0, 10, 20, 25]


def test_run_deterministic_trace_files(tmp_path):
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=25)
    m = metropolis_weights(build_graph("er", 4, seed=1, p=0.7))
    cfg = RunConfig(algorithm="dprgt", schedule=StepSchedule("constant", 0.3), max_iters=50)

    def one():
        system = init_system(problem, "perturbed", seed=26, delta=0.1)
        trace = run(cfg, problem, m, system, truth)
        path = tmp_path / "t.csv"
        write_trace(path, trace.records)
        return path.read_bytes()

    assert one() == one()


def test_run_feasibility_throughout():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=27)
    m = metropolis_weights(build_graph("ring", 4))
    system = init_system(problem, "perturbed", seed=28, delta=0.1)
    for algorithm, needs_alpha in (("consensus", False), ("dprgd", True), ("dprgt", True)):
        cfg = RunConfig(algorithm=algorithm, schedule=StepSchedule("constant", 0.2), max_iters=30)
        trace = run(cfg, problem, m, system, truth)
        assert np.max(problem.spec.feasibility_residual(trace.system.points)) <= 1e-8


def test_run_tube_violation_at_initial_mean():
    # Two antipodal agents on the circle: the stacked mean is zero, so the
    # induced mean is undefined and the run aborts before iterating.
    from decmanopt import manifolds

    spec = manifolds.stiefel(2, 1)
    problem = PcaProblem([np.eye(2), np.eye(2)], spec)
    points = np.array([[[1.0], [0.0]], [[-1.0], [0.0]]])
    m = metropolis_weights(build_graph("complete", 2))
    with pytest.raises(TubeViolationError) as info:
        run(RunConfig(algorithm="consensus", max_iters=5), problem, m, AgentSystem(points))
    assert info.value.iteration == 0
    assert info.value.records == []


def test_run_tube_violation_mid_run_carries_context():
    # Mixing weights engineered so agent 0 averages two antipodal neighbors.
    from decmanopt import manifolds

    spec = manifolds.stiefel(2, 1)
    problem = PcaProblem([np.eye(2)] * 3, spec)
    w = np.array([[0.5, 0.5, 0.0], [0.5, 0.25, 0.25], [0.0, 0.25, 0.75]])
    sigma2 = float(np.linalg.svd(w, compute_uv=False)[1])
    m = MixingMatrix(3, w, sigma2)
    points = np.array([[[1.0], [0.0]], [[-1.0], [0.0]], [[0.0], [1.0]]])
    with pytest.raises(TubeViolationError) as info:
        run(RunConfig(algorithm="consensus", max_iters=5), problem, m, AgentSystem(points))
    assert info.value.iteration == 1
    assert info.value.agent == 0
    assert len(info.value.records) == 1  # the initial record survives


def test_tracking_conservation_and_boundedness():
    problem, truth = gen_pca_data(8, 200, 10, 5, 0.8, seed=29)
    m = metropolis_weights(build_graph("er", 8, seed=2, p=0.5))
    system = init_system(problem, "perturbed", seed=30, delta=0.1)
    cfg = RunConfig(algorithm="dprgt", schedule=StepSchedule("constant", 0.5), max_iters=200)
    trace = run(cfg, problem, m, system, truth)
    assert np.max(trace.tracking_gap) <= 1e-10
    l_hat = estimate_smoothness(problem, trials=30, seed=31)
    # Tracker norms stay within the 4L envelope.
    assert np.max(np.abs(trace.s_hat_norm_sq)) <= (4.0 * l_hat) ** 2


def test_consensus_error_contracts_up_to_rate_bound():
    problem, truth = gen_pca_data(8, 50, 10, 5, 0.8, seed=32)
    m = metropolis_weights(build_graph("ring", 8))
    system = init_system(problem, "perturbed", seed=33, delta=0.1)
    cfg = RunConfig(algorithm="consensus", max_iters=60)
    trace = run(cfg, problem, m, system, truth)
    errors = np.sqrt(8 * np.array([rec.consensus_error for rec in trace.records]))
    rho = 2.0 * m.sigma2
    for k in range(len(errors) - 1):
        if errors[k] > 1e-13:
            assert errors[k + 1] <= rho * errors[k] + 1e-12


def test_run_early_stop_mid_run():
    problem, truth = gen_pca_data(4, 50, 8, 3, 0.8, seed=36)
    m = metropolis_weights(build_graph("complete", 4))
    system = init_system(problem, "identical", seed=37)
    cfg = RunConfig(algorithm="dprgt", schedule=StepSchedule("constant", 1.0),
                    max_iters=5000, stop_eps=1e-12, trace_every=10)
    trace = run(cfg, problem, m, system, truth)
    assert trace.status == "stopped"
    final = trace.records[-1]
    assert final.iter < 5000
    assert final.consensus_error <= 1e-12 and final.grad_norm_sq <= 1e-12


def test_dprgt_tuned_step_recovers_optimum():
    # With a tuned constant step the tracked method drives the induced mean
    # to the planted subspace well within 2000 iterations.
    problem, truth = gen_pca_data(8, 1000, 10, 5, 0.8, seed=7)
    m = metropolis_weights(build_graph("er", 8, seed=3, p=0.6))
    system = init_system(problem, "identical", seed=11)
    cfg = RunConfig(algorithm="dprgt", schedule=StepSchedule("constant", 1.0),
                    max_iters=2000, trace_every=100)
    trace = run(cfg, problem, m, system, truth)
    assert trace.records[-1].dist_to_truth < 1e-4


def test_estimate_smoothness_and_theoretical_beta():
    problem, _ = gen_pca_data(4, 100, 8, 3, 0.8, seed=34)
    l_hat = estimate_smoothness(problem, trials=20, seed=35)
    assert np.isfinite(l_hat) and l_hat > 0
    beta = theoretical_beta(problem.spec.gamma, l_hat)
    assert 0 < beta <= 1.0
    with pytest.raises(InvalidInputError):
        theoretical_beta(0.5, 0.0)
