"""Reported quantities: induced mean, stationarity pair, subspace distance.

The induced mean of agents x_1..x_n is the projection of their Euclidean
average onto the manifold; the stationarity pair is the consensus error
(1/n) sum ||x_i - xbar||^2 together with ||grad f(xbar)||^2.  The
subspace distance d_s is the orthogonal-Procrustes-aligned Frobenius
distance (alignment over the full orthogonal group, reflections
included), which is invariant to the right-orthogonal gauge of frame
optima.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .numerics import thin_svd

TRACE_COLUMNS = (
    "iter",
    "step_size",
    "consensus_error",
    "objective_at_mean",
    "grad_norm_sq",
    "dist_to_truth",
    "wall_ns",
)


@dataclass
class TraceRecord:
    """Metrics of one recorded iteration."""

    iter: int
    step_size: float
    consensus_error: float
    objective_at_mean: float
    grad_norm_sq: float
    dist_to_truth: float | None = None
    wall_ns: int | None = None


def induced_mean(spec, points):
    """Euclidean average xhat of the stacked points and its projection xbar.

    Raises :class:`decmanopt.errors.SingularityError` when xhat falls outside
    the tube where the projection is single valued.
    """
    x_hat = np.mean(points, axis=0)
    return x_hat, spec.project(x_hat)


def consensus_error(points, x_bar):
    """(1/n) sum_i ||x_i - xbar||^2."""
    dev = points - x_bar
    return float(np.sum(dev * dev)) / points.shape[0]


def stationarity(problem, points):
    """The pair (consensus error, ||grad f(xbar)||^2).

    The gradient at the mean is formed by averaging the per-agent Euclidean
    gradients at xbar and projecting once, which equals averaging Riemannian
    gradients at the common point.
    """
    spec = problem.spec
    _, x_bar = induced_mean(spec, points)
    g = spec.tangent_project(x_bar, problem.mean_gradient(x_bar))
    return consensus_error(points, x_bar), float(np.sum(g * g))


def subspace_distance(x, x_star):
    """d_s(x, x*) = min over orthogonal Q of ||x Q - x*||."""
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise InvalidInputError(f"shape mismatch {x.shape} vs {x_star.shape}")
    u, _, v = thin_svd(x.T @ x_star)
    q = u @ v.T
    return float(np.linalg.norm(x @ q - x_star))


@dataclass
class CurvatureProbeReport:
    """Empirical smoothness constants from random manifold pairs.

    ``quad_bound`` is the smallest constant making the Riemannian quadratic
    upper bound hold across the samples; ``grad_lip`` the largest observed
    ratio ||grad f_i(x) - grad f_i(y)|| / ||x - y||.
    """

    quad_bound: float
    grad_lip: float
    trials: int


def quadratic_upper_bound_probe(problem, trials, seed=0):
    """Estimate the Riemannian quadratic upper-bound and gradient-Lipschitz
    constants of the local objectives over random feasible pairs."""
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    spec = problem.spec
    rng = np.random.default_rng(seed)
    quad = 0.0
    lip = 0.0
    for _ in range(trials):
        i = int(rng.integers(problem.n_agents))
        x = spec.random_point(rng)
        y = spec.random_point(rng)
        diff = y - x
        nd2 = float(np.sum(diff * diff))
        if nd2 < 1e-24:
            continue
        gx = spec.tangent_project(x, problem.local_grad(i, x))
        gy = spec.tangent_project(y, problem.local_grad(i, y))
        gap = problem.local_value(i, y) - problem.local_value(i, x) - float(np.sum(gx * diff))
        quad = max(quad, 2.0 * gap / nd2)
        lip = max(lip, float(np.linalg.norm(gy - gx)) / np.sqrt(nd2))
    return CurvatureProbeReport(quad, lip, trials)


# ---------------------------------------------------------------------------
# trace persistence


def _fmt(value):
    return "" if value is None else repr(float(value))


def write_trace(path, records):
    """Write trace records as CSV with the fixed column order.

    Floats use shortest round-trip formatting so identical runs produce
    byte-identical files.  The wall_ns column is left empty on disk: trace
    files are part of the determinism contract (identical configuration and
    seeds must reproduce them byte for byte), which measured wall time would
    break.  Wall time is reported in the run manifest instead.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.iter,
                    _fmt(rec.step_size),
                    _fmt(rec.consensus_error),
                    _fmt(rec.objective_at_mean),
                    _fmt(rec.grad_norm_sq),
                    _fmt(rec.dist_to_truth),
                    "",
                ]
            )


def read_trace(path):
    """Parse a trace CSV back into records (wall_ns comes back as None)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise InvalidInputError(f"{path}: unexpected trace header {header}")
        for row in reader:
            records.append(
                TraceRecord(
                    iter=int(row[0]),
                    step_size=float(row[1]),
                    consensus_error=float(row[2]),
                    objective_at_mean=float(row[3]),
                    grad_norm_sq=float(row[4]),
                    dist_to_truth=float(row[5]) if row[5] else None,
                    wall_ns=int(row[6]) if row[6] else None,
                )
            )
    return records
