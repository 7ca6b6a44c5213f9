"""Experiment orchestration: configs, runs, sweeps, and rate studies.

A configuration is a flat text file of dotted ``key = value`` lines
('#' comments allowed), e.g.::

    problem.kind = pca
    problem.seed = 7
    graph.topology = er
    graph.p = 0.6
    graph.seed = 3
    algo.kind = dprgt
    algo.beta = 1.0
    run.K = 3000
    run.seed = 11
    out.dir = out/pca

Running writes ``trace.csv`` (the metrics schema) and ``manifest.txt``, a
key=value echo of the fully resolved configuration followed by reserved
summary keys (status, final.*, timing.*, network.*).  Because the echo is
itself a valid configuration and every seed is explicit, re-running from a
manifest reproduces the trace byte for byte.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import algorithms, metrics, network, problems
from .errors import ConfigError, InvalidInputError, TubeViolationError

_REQUIRED = object()

# Manifest-only keys; ignored when a manifest is re-used as a config.
RESERVED_PREFIXES = ("status", "abort.", "final.", "timing.", "network.", "sweep.")

_SCHEMA_KEYS = {
    "problem.kind",
    "problem.path",
    "problem.n",
    "problem.d",
    "problem.r",
    "problem.m_i",
    "problem.xi",
    "problem.m",
    "problem.T",
    "problem.seed",
    "graph.topology",
    "graph.p",
    "graph.seed",
    "algo.kind",
    "algo.t",
    "algo.schedule",
    "algo.beta",
    "run.K",
    "run.seed",
    "run.eps",
    "run.trace_every",
    "run.init",
    "run.delta",
    "metrics.agent_dist",
    "out.dir",
    "out.points",
}


def parse_config_text(text, origin="<config>"):
    """Parse flat dotted-key lines into a string-to-string mapping."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        raw[key] = value
    return raw


def parse_config_file(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read(), origin=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc


def apply_overrides(raw, overrides):
    """Apply CLI ``key=value`` overrides on top of a parsed config."""
    out = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _reserved(key):
    return any(key == p or key.startswith(p) for p in RESERVED_PREFIXES)


class _Resolver:
    def __init__(self, raw):
        self.raw = raw
        self.used = set()

    def get(self, key, default=_REQUIRED, cast=str, choices=None):
        self.used.add(key)
        if key not in self.raw:
            if default is _REQUIRED:
                raise ConfigError(f"missing required config key {key}")
            return default
        value = self.raw[key]
        try:
            value = cast(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key}: cannot parse {self.raw[key]!r}") from exc
        if choices is not None and value not in choices:
            raise ConfigError(f"config key {key}: {value!r} not one of {sorted(choices)}")
        return value

    def check_unknown(self):
        unknown = [
            k for k in self.raw
            if k not in _SCHEMA_KEYS and not _reserved(k)
        ]
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]}")


def _bool(value):
    lowered = value.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment; ``echo`` maps every key to its final value."""

    problem_kind: str
    problem_path: str | None
    n: int
    d: int
    r: int
    m_i: int
    xi: float
    m: int
    T: int
    problem_seed: int
    topology: str
    p: float
    graph_seed: int
    algo_kind: str
    t: int
    schedule: str
    beta: float
    max_iters: int
    run_seed: int
    eps: float | None
    trace_every: int
    init_mode: str
    delta: float
    agent_dist: bool
    out_dir: str
    save_points: bool
    echo: tuple


def resolve_config(raw):
    """Validate and type the raw mapping; unknown keys are rejected."""
    res = _Resolver(raw)
    kind = res.get("problem.kind", choices={"pca", "gevp", "lrmc", "bundle"})
    path = res.get("problem.path", default=None)
    if kind == "bundle" and path is None:
        raise ConfigError("missing required config key problem.path (problem.kind = bundle)")
    n = res.get("problem.n", default=8, cast=int)
    algo_kind = res.get("algo.kind", choices={"consensus", "dprgd", "dprgt"})
    needs_beta = algo_kind in ("dprgd", "dprgt")
    cfg = ExperimentConfig(
        problem_kind=kind,
        problem_path=path,
        n=n,
        d=res.get("problem.d", default=10, cast=int),
        r=res.get("problem.r", default=5, cast=int),
        m_i=res.get("problem.m_i", default=1000, cast=int),
        xi=res.get("problem.xi", default=0.8, cast=float),
        m=res.get("problem.m", default=100, cast=int),
        T=res.get("problem.T", default=1000, cast=int),
        problem_seed=res.get("problem.seed", default=0 if kind == "bundle" else _REQUIRED, cast=int),
        topology=res.get("graph.topology", choices={"ring", "complete", "er"}),
        p=res.get("graph.p", default=0.3, cast=float),
        graph_seed=res.get(
            "graph.seed",
            default=_REQUIRED if raw.get("graph.topology") == "er" else 0,
            cast=int,
        ),
        algo_kind=algo_kind,
        t=res.get("algo.t", default=1, cast=int),
        schedule=res.get("algo.schedule", default="constant", choices={"constant", "diminishing"}),
        beta=res.get("algo.beta", default=_REQUIRED if needs_beta else 0.0, cast=float),
        max_iters=res.get("run.K", cast=int),
        run_seed=res.get("run.seed", cast=int),
        eps=res.get("run.eps", default=None, cast=float),
        trace_every=res.get("run.trace_every", default=1, cast=int),
        init_mode=res.get("run.init", default="identical", choices={"identical", "perturbed"}),
        delta=res.get("run.delta", default=0.1, cast=float),
        agent_dist=res.get("metrics.agent_dist", default=False, cast=_bool),
        out_dir=res.get("out.dir"),
        save_points=res.get("out.points", default=False, cast=_bool),
        echo=(),
    )
    res.check_unknown()
    echo = _echo_items(cfg)
    return ExperimentConfig(**{**cfg.__dict__, "echo": tuple(echo.items())})


def _echo_items(cfg):
    echo = {
        "problem.kind": cfg.problem_kind,
        "problem.n": cfg.n,
        "problem.d": cfg.d,
        "problem.r": cfg.r,
        "problem.m_i": cfg.m_i,
        "problem.xi": cfg.xi,
        "problem.m": cfg.m,
        "problem.T": cfg.T,
        "problem.seed": cfg.problem_seed,
        "graph.topology": cfg.topology,
        "graph.p": cfg.p,
        "graph.seed": cfg.graph_seed,
        "algo.kind": cfg.algo_kind,
        "algo.t": cfg.t,
        "algo.schedule": cfg.schedule,
        "algo.beta": cfg.beta,
        "run.K": cfg.max_iters,
        "run.seed": cfg.run_seed,
        "run.trace_every": cfg.trace_every,
        "run.init": cfg.init_mode,
        "run.delta": cfg.delta,
        "metrics.agent_dist": str(cfg.agent_dist).lower(),
        "out.dir": cfg.out_dir,
        "out.points": str(cfg.save_points).lower(),
    }
    if cfg.problem_path is not None:
        echo["problem.path"] = cfg.problem_path
    if cfg.eps is not None:
        echo["run.eps"] = cfg.eps
    return echo


def load_config(path, overrides=()):
    return resolve_config(apply_overrides(parse_config_file(path), overrides))


# ---------------------------------------------------------------------------
# experiment assembly


def build_problem(cfg):
    if cfg.problem_kind == "pca":
        return problems.gen_pca_data(cfg.n, cfg.m_i, cfg.d, cfg.r, cfg.xi, cfg.problem_seed)
    if cfg.problem_kind == "gevp":
        return problems.gen_gevp_data(cfg.n, cfg.m_i, cfg.d, cfg.r, cfg.xi, cfg.problem_seed)
    if cfg.problem_kind == "lrmc":
        return problems.gen_lrmc_data(cfg.n, cfg.m, cfg.T, cfg.r, cfg.problem_seed)
    return problems.load_dataset(cfg.problem_path)


def build_mixing(cfg, n):
    graph = network.build_graph(cfg.topology, n, seed=cfg.graph_seed, p=cfg.p)
    return network.metropolis_weights(graph, t=cfg.t)


def build_run(cfg):
    """Problem, mixing matrix, initial system, and run config from an
    experiment config; validates cross-references (n in particular)."""
    problem, truth = build_problem(cfg)
    if cfg.problem_kind != "bundle" and problem.n_agents != cfg.n:
        raise ConfigError("problem.n is inconsistent with the generated problem")
    mixing = build_mixing(cfg, problem.n_agents)
    system = algorithms.init_system(problem, cfg.init_mode, seed=cfg.run_seed, delta=cfg.delta)
    run_cfg = algorithms.RunConfig(
        algorithm=cfg.algo_kind,
        t=cfg.t,
        schedule=algorithms.StepSchedule(cfg.schedule, cfg.beta) if cfg.beta > 0 else algorithms.StepSchedule(),
        max_iters=cfg.max_iters,
        seed=cfg.run_seed,
        stop_eps=cfg.eps,
        trace_every=cfg.trace_every,
    )
    return problem, truth, mixing, system, run_cfg


def _write_manifest(path, cfg, summary):
    lines = [f"{k}={v}" for k, v in cfg.echo]
    lines += [f"{k}={v}" for k, v in summary.items()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(cfg, no_clobber=False):
    """Build, run, and persist one experiment; returns the trace path.

    Output files are overwritten unless ``no_clobber`` is set.  Aborted runs
    (projection tube violations) persist their partial trace, record the
    abort iteration and agent in the manifest, and re-raise.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    trace_path = os.path.join(cfg.out_dir, "trace.csv")
    manifest_path = os.path.join(cfg.out_dir, "manifest.txt")
    if no_clobber and (os.path.exists(trace_path) or os.path.exists(manifest_path)):
        raise ConfigError(f"output exists in {cfg.out_dir} and --no-clobber is set")
    problem, truth, mixing, system, run_cfg = build_run(cfg)
    started = time.monotonic_ns()
    try:
        trace = algorithms.run(run_cfg, problem, mixing, system, truth)
    except TubeViolationError as exc:
        metrics.write_trace(trace_path, exc.records)
        _write_manifest(
            manifest_path,
            cfg,
            {
                "status": "aborted",
                "abort.iteration": exc.iteration,
                "abort.agent": "" if exc.agent is None else exc.agent,
                "timing.wall_ns": time.monotonic_ns() - started,
                "network.sigma2": repr(float(mixing.sigma2)),
            },
        )
        raise
    metrics.write_trace(trace_path, trace.records)
    final = trace.records[-1]
    summary = {
        "status": trace.status,
        "final.iter": final.iter,
        "final.consensus_error": repr(float(final.consensus_error)),
        "final.objective_at_mean": repr(float(final.objective_at_mean)),
        "final.grad_norm_sq": repr(float(final.grad_norm_sq)),
        "final.dist_to_truth": "" if final.dist_to_truth is None else repr(float(final.dist_to_truth)),
        "timing.wall_ns": time.monotonic_ns() - started,
        "network.sigma2": repr(float(mixing.sigma2)),
    }
    if cfg.agent_dist and truth is not None and truth.x_star is not None:
        dists = [metrics.subspace_distance(x, truth.x_star) for x in trace.system.points]
        summary["final.agent_dist_mean"] = repr(float(np.mean(dists)))
    if cfg.save_points:
        for i, x in enumerate(trace.system.points):
            problems.save_matrix(os.path.join(cfg.out_dir, f"points_{i}.csv"), x)
    _write_manifest(manifest_path, cfg, summary)
    return trace_path


# ---------------------------------------------------------------------------
# step-size sweeps


@dataclass
class SweepCandidate:
    beta: float
    status: str
    score: float
    final_objective: float | None
    final_grad_norm_sq: float | None
    final_consensus_error: float | None


@dataclass
class SweepResult:
    best_beta: float
    metric: str
    candidates: list


def sweep(cfg, betas, metric="grad_norm_sq", workers=1):
    """Run every step-size candidate under identical seeds and pick the best.

    ``metric`` scores the final trace record ('objective' or
    'grad_norm_sq'); ties break toward the smaller candidate.  Candidates
    whose runs abort score +inf.  Candidates may execute on a thread pool;
    results are merged in candidate order, so the outcome does not depend
    on the worker count.
    """
    if not betas:
        raise InvalidInputError("need at least one step-size candidate")
    if metric not in ("objective", "grad_norm_sq"):
        raise InvalidInputError(f"unknown sweep metric {metric!r}")

    def run_candidate(beta):
        problem, truth, mixing, system, run_cfg = build_run(cfg)
        run_cfg = algorithms.RunConfig(
            algorithm=run_cfg.algorithm,
            t=run_cfg.t,
            schedule=algorithms.StepSchedule(cfg.schedule, beta),
            max_iters=run_cfg.max_iters,
            seed=run_cfg.seed,
            stop_eps=run_cfg.stop_eps,
            trace_every=run_cfg.trace_every,
        )
        try:
            trace = algorithms.run(run_cfg, problem, mixing, system, truth)
        except TubeViolationError:
            return SweepCandidate(beta, "aborted", float("inf"), None, None, None)
        final = trace.records[-1]
        score = final.objective_at_mean if metric == "objective" else final.grad_norm_sq
        return SweepCandidate(
            beta,
            trace.status,
            float(score),
            final.objective_at_mean,
            final.grad_norm_sq,
            final.consensus_error,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            candidates = list(pool.map(run_candidate, betas))
    else:
        candidates = [run_candidate(b) for b in betas]
    best = min(candidates, key=lambda c: (c.score, c.beta))
    return SweepResult(best.beta, metric, candidates)


def write_sweep_summary(path, result):
    with open(path, "w") as fh:
        fh.write("beta,status,score,final_objective,final_grad_norm_sq,final_consensus_error\n")
        for c in result.candidates:
            row = [
                repr(float(c.beta)),
                c.status,
                repr(float(c.score)),
                "" if c.final_objective is None else repr(float(c.final_objective)),
                "" if c.final_grad_norm_sq is None else repr(float(c.final_grad_norm_sq)),
                "" if c.final_consensus_error is None else repr(float(c.final_consensus_error)),
            ]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# consensus rate study


@dataclass
class RateStudyResult:
    """Per-step contraction ratios of a consensus-only run.

    ``errors`` are the stacked deviations e_k = ||x_k - xbar_k||, truncated
    at the first value below 1e-13 (the numerical floor); ``ratios`` are
    e_{k+1}/e_k within that window, each required to satisfy the
    2 sigma2^t bound; ``tail_rate`` is a geometric fit over the tail of the
    window, to compare against sigma2^t.
    """

    errors: np.ndarray
    ratios: np.ndarray
    tail_rate: float
    sigma2: float
    t: int

    @property
    def rate_bound(self):
        return 2.0 * self.sigma2**self.t


ERROR_FLOOR = 1e-13
# Ratios used for the tail fit additionally require both endpoints a decade
# above the floor, so rounding noise cannot bias the fitted rate.
FIT_FLOOR = 1e-12


def rate_study(cfg):
    """Measure per-step consensus contraction and fit the asymptotic rate.

    Requires a consensus-only configuration.  Every in-window ratio must
    satisfy e_{k+1}/e_k <= 2 sigma2^t + 1e-6; a violation raises
    RuntimeError since it falsifies the contraction property.
    """
    if cfg.algo_kind != "consensus":
        raise ConfigError("rate_study requires algo.kind = consensus")
    base = resolve_config({**dict(cfg.echo), "run.trace_every": "1"})
    problem, truth, mixing, system, run_cfg = build_run(base)
    trace = algorithms.run(run_cfg, problem, mixing, system, truth)
    n = problem.n_agents
    errors = np.sqrt(n * np.array([rec.consensus_error for rec in trace.records]))
    cut = np.nonzero(errors < ERROR_FLOOR)[0]
    if cut.size:
        errors = errors[: cut[0]]
    if errors.size < 2:
        return RateStudyResult(errors, np.array([]), float("nan"), mixing.sigma2, cfg.t)
    ratios = errors[1:] / errors[:-1]
    bound = mixing.contraction_rate() + 1e-6
    worst = float(np.max(ratios))
    if worst > bound:
        raise RuntimeError(f"contraction ratio {worst:.6g} exceeds the bound {bound:.6g}")
    clean = np.nonzero(errors[1:] >= FIT_FLOOR)[0]
    fit_ratios = ratios[clean] if clean.size else ratios
    tail = fit_ratios[len(fit_ratios) // 2:]
    tail_rate = float(np.exp(np.mean(np.log(tail))))
    return RateStudyResult(errors, ratios, tail_rate, mixing.sigma2, cfg.t)
