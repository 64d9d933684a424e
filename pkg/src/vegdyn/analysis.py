"""Diagnostics: equilibria and bifurcations of the two-state GKE, finite-size
convergence, pairwise correlations, front tracking, periods and wave speeds.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from . import gke, ssa
from .model import PHI_DEFAULT, ModelSpec, SigmoidParams, eval_sigmoid, gf_single_patch

ROOT_GRID = 10_000
MERGE_TOL = 1e-6
DIFF_STEP = 1e-6


# ---------------------------------------------------------------------------
# Equilibria of dG/dt = (1 - G)(phi(qG) - jbar q G)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumPoint:
    jbar: float
    grass: float
    stability: str  # "stable" | "unstable"
    kind: str  # "trivial" (G = 1) | "nontrivial"


def twostate_rhs(G, jbar: float, phi: SigmoidParams = PHI_DEFAULT, density: float = 1.0):
    G = np.asarray(G, dtype=float)
    return (1 - G) * (eval_sigmoid(phi, density * G) - jbar * density * G)


def _f(G, jbar, phi, q):
    return eval_sigmoid(phi, q * G) - jbar * q * G


def equilibria_2state(jbar: float, phi: SigmoidParams = PHI_DEFAULT, density: float = 1.0) -> list[EquilibriumPoint]:
    """All equilibria in [0, 1], sorted by grass fraction.

    ``density`` is the local site density q (1 for a single patch); it gives
    the zero-dispersal limit of the spatial model at a point with density q.
    """
    if not jbar > 0:
        raise ValueError("jbar must be positive")
    q = float(density)
    grid = np.linspace(0.0, 1.0, ROOT_GRID + 1)
    vals = _f(grid, jbar, phi, q)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
        a, b = grid[i], grid[i + 1]
        if vals[i] == 0:
            r = a
        elif vals[i + 1] == 0:
            r = b
        else:
            r = brentq(_f, a, b, args=(jbar, phi, q), xtol=1e-14, rtol=1e-15)
        if not roots or abs(r - roots[-1]) > MERGE_TOL:
            roots.append(r)
    out = []
    for r in roots:
        if abs(r - 1.0) <= MERGE_TOL:
            continue
        lo, hi = max(r - DIFF_STEP, 0.0), min(r + DIFF_STEP, 1.0)
        slope = (_f(hi, jbar, phi, q) - _f(lo, jbar, phi, q)) / (hi - lo)
        # d/dG [(1-G) f] = (1-G) f'(G) at a root of f
        out.append(EquilibriumPoint(float(jbar), float(r), "stable" if slope < 0 else "unstable", "nontrivial"))
    # at G = 1 the derivative is -f(1)
    f1 = float(_f(1.0, jbar, phi, q))
    out.append(EquilibriumPoint(float(jbar), 1.0, "stable" if f1 > 0 else "unstable", "trivial"))
    return out


@dataclass
class BifurcationResult:
    points: list[EquilibriumPoint]
    saddle_nodes: list[float]
    transcritical: float

    def branch(self, stability: str | None = None, kind: str | None = None) -> list[EquilibriumPoint]:
        return [p for p in self.points if (stability is None or p.stability == stability) and (kind is None or p.kind == kind)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["jbar", "grass", "stability", "kind"])
            for p in self.points:
                w.writerow([repr(p.jbar), repr(p.grass), p.stability, p.kind])


def _n_nontrivial(jbar, phi, q=1.0):
    return sum(1 for p in equilibria_2state(jbar, phi, q) if p.kind == "nontrivial")


def bifurcation_sweep(jbar_grid, phi: SigmoidParams = PHI_DEFAULT, tol: float = 1e-6) -> BifurcationResult:
    """Equilibria along ``jbar_grid``, saddle-nodes and the transcritical point.

    A saddle-node sits where the number of interior roots changes by two
    between neighbouring grid values; it is then bisected in jbar to ``tol``.
    The transcritical point, where a root crosses G = 1, is jbar = phi(1).
    """
    grid = np.asarray(jbar_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("jbar grid must be strictly increasing with at least two points")
    points, counts = [], []
    for jb in grid:
        eq = equilibria_2state(jb, phi)
        points.extend(eq)
        counts.append(sum(1 for p in eq if p.kind == "nontrivial"))
    saddles = []
    for i in range(grid.size - 1):
        if abs(counts[i + 1] - counts[i]) == 2:
            a, b, ca = grid[i], grid[i + 1], counts[i]
            while b - a > tol:
                mid = 0.5 * (a + b)
                if _n_nontrivial(mid, phi) == ca:
                    a = mid
                else:
                    b = mid
            saddles.append(0.5 * (a + b))
    return BifurcationResult(points, saddles, float(eval_sigmoid(phi, 1.0)))


def stable_roots(jbar: float, phi: SigmoidParams = PHI_DEFAULT, density: float = 1.0) -> np.ndarray:
    return np.array([p.grass for p in equilibria_2state(jbar, phi, density) if p.stability == "stable"])


def zero_dispersal_distance(profile_G, nodes, density, jbar: float, phi: SigmoidParams = PHI_DEFAULT) -> np.ndarray:
    """Distance of P_G at each node to the nearest stable zero-dispersal equilibrium.

    ``density`` gives q at the nodes (array or callable).
    """
    q = density(nodes) if callable(density) else np.asarray(density, dtype=float)
    out = np.empty(len(nodes))
    for k, (g, qk) in enumerate(zip(profile_G, q)):
        out[k] = np.min(np.abs(stable_roots(jbar, phi, qk) - g))
    return out


# ---------------------------------------------------------------------------
# Finite-size studies
# ---------------------------------------------------------------------------


def _aggregate(P: np.ndarray, grid: gke.Grid) -> np.ndarray:
    """Site-averaged occupancy sum_k w_k P_k over the grid."""
    return grid.weights @ P


def snapshot_fractions(traj: ssa.Trajectory, K: int) -> np.ndarray:
    """(n_snapshots, K) fraction of sites in each state."""
    n = traj.snapshots.shape[1]
    return np.stack([np.bincount(s, minlength=K) / n for s in traj.snapshots.astype(np.int64)])


@dataclass
class ConvergenceResult:
    N: np.ndarray
    errors: np.ndarray  # (n_N, replicas)
    slope: float
    ci: tuple[float, float]
    reference_times: np.ndarray
    reference: np.ndarray  # aggregated GKE occupancy at the reference times

    @property
    def mean_error(self) -> np.ndarray:
        return self.errors.mean(axis=1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "replica", "error"])
            for i, n in enumerate(self.N):
                for r, e in enumerate(self.errors[i]):
                    w.writerow([int(n), r, repr(float(e))])


def loglog_slope(N, err, level: float = 0.95):
    """Least-squares slope of log(err) vs log(N) with a t-based confidence interval."""
    x, y = np.log(np.asarray(N, dtype=float)), np.log(np.asarray(err, dtype=float))
    fit = stats.linregress(x, y)
    dof = max(len(x) - 2, 1)
    half = stats.t.ppf(0.5 + level / 2, dof) * fit.stderr if len(x) > 2 else math.inf
    return float(fit.slope), (float(fit.slope - half), float(fit.slope + half))


def convergence_study(model: ModelSpec, N_list, replicas: int, t_end: float, seed, h: float = 1e-3,
                      n_nodes: int = 200, exclude_absorbed: bool = False) -> ConvergenceResult:
    """Sup-in-time distance between SSA occupancy and the GKE solution, per N.

    The error of one replica is the max over the snapshot times {1, ..., t_end}
    and over states of |empirical fraction - GKE fraction|; the reported
    slope is fitted to the replica-mean error against N on log-log axes.
    """
    times = np.arange(1.0, math.floor(t_end) + 1.0)
    grid = gke.make_grid(model.measure, n_nodes, model.boundary if not model.measure.is_discrete else None)
    series = gke.integrate(model, grid, None, h, float(times[-1]), snapshot_times=times)
    ref = np.array([_aggregate(P, grid) for P in series.values])
    N_arr = np.asarray(N_list, dtype=int)
    errors = np.zeros((N_arr.size, replicas))
    for i, N in enumerate(N_arr):
        for r in range(replicas):
            ss = ssa.child_seed(seed, i, r)
            traj = ssa.simulate(model, int(N), float(times[-1]), ss, snapshot_times=times, record_events=False)
            if exclude_absorbed and traj.absorbed:
                errors[i, r] = np.nan
                continue
            errors[i, r] = np.max(np.abs(snapshot_fractions(traj, model.K) - ref))
    mean = np.nanmean(errors, axis=1)
    if np.all(mean > 0):
        slope, ci = loglog_slope(N_arr, mean)
    else:
        slope, ci = float("nan"), (float("nan"), float("nan"))
    return ConvergenceResult(N_arr, errors, slope, ci, series.times, ref)


def indicator_correlation(a: np.ndarray, b: np.ndarray) -> float | None:
    """Pearson correlation of two 0/1 samples; None if either is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.std() == 0 or b.std() == 0:
        return None
    return float(np.corrcoef(a, b)[0, 1])


@dataclass
class CorrelationResult:
    max_abs: float
    pairs: np.ndarray  # (n_pairs, 2) site indices
    correlations: np.ndarray  # (n_pairs, K), NaN where skipped
    skipped: list[tuple[int, str]] = field(default_factory=list)


def pairwise_correlation(model: ModelSpec, N: int, site_pairs: int, t: float, replicas: int, seed,
                         states_at=None) -> CorrelationResult:
    """Across replicas, correlation of 1{X_i(t) = x} and 1{X_j(t) = x} for random pairs (i, j).

    ``states_at`` may supply a precomputed (replicas, N) state matrix; it is
    used by tests to calibrate the estimator on independent samples.
    """
    if N < 2:
        raise ValueError("need at least two sites")
    pair_ss, run_ss = ssa.child_seed(seed, 0), ssa.child_seed(seed, 1)
    prng = np.random.default_rng(pair_ss)
    pairs = np.array([prng.choice(N, size=2, replace=False) for _ in range(site_pairs)], dtype=np.int64)
    if states_at is None:
        states_at = np.empty((replicas, N), dtype=np.int64)
        for r in range(replicas):
            traj = ssa.simulate(model, N, t, ssa.replica_seed(run_ss, r), snapshot_times=[t], record_events=False)
            states_at[r] = traj.snapshots[0]
    labels = model.states.labels
    corr = np.full((site_pairs, len(labels)), np.nan)
    skipped = []
    for p, (i, j) in enumerate(pairs):
        for k, lab in enumerate(labels):
            c = indicator_correlation(states_at[:, i] == k, states_at[:, j] == k)
            if c is None:
                skipped.append((p, lab))
            else:
                corr[p, k] = c
    finite = corr[np.isfinite(corr)]
    return CorrelationResult(float(np.max(np.abs(finite))) if finite.size else float("nan"), pairs, corr, skipped)


# ---------------------------------------------------------------------------
# Fronts, waves and periods
# ---------------------------------------------------------------------------


def front_position(profile, nodes, threshold: float = 0.5):
    """Leftmost crossing of ``profile`` through ``threshold`` (linear interpolation).

    Empty bins (NaN) are skipped. Returns None when there is no crossing.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    y = np.asarray(profile, dtype=float)
    x = np.asarray(nodes, dtype=float)
    ok = np.isfinite(y)
    y, x = y[ok], x[ok]
    d = y - threshold
    for k in range(len(y) - 1):
        if d[k] == 0:
            return float(x[k])
        if d[k] * d[k + 1] < 0:
            return float(x[k] + (x[k + 1] - x[k]) * d[k] / (d[k] - d[k + 1]))
    if len(y) and d[-1] == 0:
        return float(x[-1])
    return None


def wave_speed(times, positions, forest_side: str = "right"):
    """Least-squares front speed, positive when forest expands.

    ``forest_side`` says where the forest lies relative to the tracked front.
    Missing positions (None) are dropped; returns None with fewer than two.
    """
    pts = [(t, p) for t, p in zip(times, positions) if p is not None and np.isfinite(p)]
    if len(pts) < 2:
        return None
    t, p = np.array(pts).T
    slope = float(np.polyfit(t, p, 1)[0])
    if forest_side == "right":
        return -slope
    if forest_side == "left":
        return slope
    raise ValueError("forest_side must be 'left' or 'right'")


@dataclass
class PeriodEstimate:
    period: float
    spacings: np.ndarray
    crossings: np.ndarray

    @property
    def relative_spread(self) -> float:
        return float((self.spacings.max() - self.spacings.min()) / self.period)


def estimate_period(series, times, t_window=None, hysteresis: float = 0.0):
    """Period from the mean spacing of upward mean-crossings.

    ``hysteresis`` > 0 only counts an upward crossing after the series has
    dropped below mean - hysteresis, which suppresses jitter from noise.
    Returns None with fewer than three crossings.
    """
    y = np.asarray(series, dtype=float)
    t = np.asarray(times, dtype=float)
    if t_window is not None:
        sel = (t >= t_window[0]) & (t <= t_window[1])
        y, t = y[sel], t[sel]
    if y.size < 3 or np.ptp(y) == 0:
        return None
    m = y.mean()
    armed = False
    cross = []
    for k in range(len(y) - 1):
        if y[k] < m - hysteresis:
            armed = True
        if armed and y[k] < m <= y[k + 1]:
            cross.append(t[k] + (t[k + 1] - t[k]) * (m - y[k]) / (y[k + 1] - y[k]))
            armed = False
    if len(cross) < 3:
        return None
    cross = np.array(cross)
    sp = np.diff(cross)
    return PeriodEstimate(float(sp.mean()), sp, cross)


# ---------------------------------------------------------------------------
# Basin survey for the single-patch chain
# ---------------------------------------------------------------------------


@dataclass
class BasinSurvey:
    jbar: float
    fractions: np.ndarray
    end_grass: np.ndarray  # (n_fractions, seeds)
    stable: np.ndarray
    unstable: np.ndarray

    def outcome(self) -> np.ndarray:
        """Index into ``stable`` of the nearest stable root for every run."""
        return np.argmin(np.abs(self.end_grass[..., None] - self.stable), axis=-1)

    def cluster_distance(self) -> np.ndarray:
        return np.min(np.abs(self.end_grass[..., None] - self.stable), axis=-1)

    def split_point(self) -> float | None:
        """Initial grass fraction where runs switch from the lower to the upper stable state.

        Linear interpolation of the fraction of runs ending at the upper root
        through 1/2.
        """
        upper = (self.outcome() == len(self.stable) - 1).mean(axis=1)
        return front_position(upper, self.fractions, 0.5)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["jbar", "initial_grass", "seed", "final_grass"])
            for i, p in enumerate(self.fractions):
                for s, g in enumerate(self.end_grass[i]):
                    w.writerow([repr(self.jbar), repr(float(p)), s, repr(float(g))])


def basin_survey(jbar: float, N: int, t_end: float, fractions, seeds: int, seed,
                 phi: SigmoidParams = PHI_DEFAULT) -> BasinSurvey:
    """Single-patch SSA end states from i.i.d. initial states at several grass fractions."""
    fractions = np.asarray(fractions, dtype=float)
    end = np.empty((fractions.size, seeds))
    for i, p in enumerate(fractions):
        model = gf_single_patch(jbar, phi, grass0=float(p))
        for s in range(seeds):
            ss = ssa.child_seed(seed, i, s)
            traj = ssa.simulate(model, N, t_end, ss, snapshot_times=[t_end], record_events=False)
            end[i, s] = np.mean(traj.snapshots[-1] == 0)
    eq = equilibria_2state(jbar, phi)
    stable = np.array(sorted(p.grass for p in eq if p.stability == "stable"))
    unstable = np.array(sorted(p.grass for p in eq if p.stability == "unstable"))
    return BasinSurvey(float(jbar), fractions, end, stable, unstable)
