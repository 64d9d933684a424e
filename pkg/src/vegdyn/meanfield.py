"""Single-site simulation of the mean-field (McKean-Vlasov) jump process.

Given a GKE solution P(t, r), a single site at location r is a
time-inhomogeneous Markov chain with rates
Lambda_{x,y}(t) = Phi_{x,y}(int W_{x,y}(r, r') P_psi(t, r') dq(r')).
It is sampled exactly by thinning: candidate events arrive at a constant
rate B_x bounding the total outflow of the current state x, and a candidate
at time t is accepted with probability Lambda_x(t) / B_x.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gke import FieldSeries, GKEProblem, Grid
from .model import ModelSpec
from .ssa import child_seed


@dataclass
class RateSchedule:
    """Kernel fields at one site location, tabulated on the solver's time grid.

    ``fields`` has shape (n_times, n_channels) per location column in
    ``node_fields`` (n_times, n_channels, n_nodes). Rates between snapshots
    use the piecewise-linear interpolant of the fields.
    """

    model: ModelSpec
    grid: Grid
    times: np.ndarray
    node_fields: np.ndarray
    bounds: np.ndarray  # (n_transitions, n_nodes): max of Lambda over the tabulated times
    initial_values: np.ndarray | None = None  # (n_nodes, K) field at the first time

    @classmethod
    def from_series(cls, model: ModelSpec, series: FieldSeries) -> "RateSchedule":
        if series.times.shape[0] < 1:
            raise ValueError("schedule needs at least one snapshot")
        problem = GKEProblem(model, series.grid)
        fields = np.array([problem.fields(P) for P in series.values])
        rates = np.array([problem.rates(P, f) for P, f in zip(series.values, fields)])
        return cls(model, series.grid, np.asarray(series.times, dtype=float), fields, rates.max(axis=0), series.values[0])

    @classmethod
    def constant(cls, model: ModelSpec, grid: Grid, P: np.ndarray, t_max: float) -> "RateSchedule":
        """Schedule for a field frozen at ``P`` on [0, t_max]."""
        P = np.asarray(P, dtype=float)
        series = FieldSeries(np.array([0.0, t_max]), np.array([P, P]), grid, model.states.labels)
        return cls.from_series(model, series)

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def node(self, r) -> int:
        """Grid node used for location ``r`` (exact patch or nearest node)."""
        if self.grid.domain == "patches":
            k = int(r)
            if not 0 <= k < len(self.grid):
                raise IndexError(f"patch {r} out of range")
            return k
        nodes = self.grid.nodes
        if self.grid.boundary == "periodic":
            d = np.abs(nodes - float(r)) % self.grid.length
            d = np.minimum(d, self.grid.length - d)
        else:
            d = np.abs(nodes - float(r))
        return int(np.argmin(d))

    def fields_at(self, t, node: int) -> np.ndarray:
        """Interpolated channel fields at times ``t`` (array) for one node, shape (len(t), C)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError(f"time outside schedule range [{self.times[0]}, {self.times[-1]}]")
        f = self.node_fields[:, :, node]
        if self.times.shape[0] == 1:
            return np.repeat(f, t.shape[0], axis=0)
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.shape[0] - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        w = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)[:, None]
        return (1 - w) * f[k] + w * f[k + 1]

    def rates_at(self, t, node: int) -> np.ndarray:
        """All transition rates at times ``t``, shape (len(t), n_transitions)."""
        f = self.fields_at(t, node)
        _, _, t_channel = self.model.channels()
        out = np.empty((f.shape[0], len(self.model.transitions)))
        for k, spec in enumerate(self.model.transitions):
            c = t_channel[k]
            amp = spec.kernel.amplitude if spec.kernel is not None else 0.0
            u = amp * f[:, c] if c >= 0 else np.zeros(f.shape[0])
            out[:, k] = spec.rate(u)
        return out


def lambda_rates(s: RateSchedule, t: float, r, x: str) -> list[tuple[str, float]]:
    """Rates Lambda_{x,y}(t) out of state ``x`` at location ``r``."""
    rates = s.rates_at([t], s.node(r))[0]
    return [(spec.target, float(rates[k])) for k, spec in enumerate(s.model.transitions) if spec.source == x]


@dataclass
class SiteTrajectory:
    init: str
    t_end: float
    times: np.ndarray
    states: list[str]  # state entered at each jump

    def state_at(self, t: float) -> str:
        k = int(np.searchsorted(self.times, t, side="right"))
        return self.init if k == 0 else self.states[k - 1]


class _Thinner:
    """Vectorized thinning sampler over many independent replicas at one node."""

    def __init__(self, s: RateSchedule, node: int):
        m = s.model
        self.s = s
        self.node = node
        self.src = np.array([m.index(t.source) for t in m.transitions], dtype=np.int64)
        self.dst = np.array([m.index(t.target) for t in m.transitions], dtype=np.int64)
        # Phi is monotone, so Lambda on a linear segment of the field lies between
        # its endpoint values; the tabulated maximum therefore bounds it everywhere.
        per_t = s.bounds[:, node] * (1 + 1e-12)
        self.bound = np.zeros(m.K)
        np.add.at(self.bound, self.src, per_t)

    def run(self, states: np.ndarray, t_end: float, rng: np.random.Generator, checkpoints=None, on_jump=None):
        """Advance ``states`` in place to ``t_end``; returns states at ``checkpoints``."""
        n = states.shape[0]
        cps = np.asarray(checkpoints if checkpoints is not None else [], dtype=float)
        rec = np.empty((cps.shape[0], n), dtype=np.int64)
        t = np.zeros(n)
        active = np.ones(n, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            B = self.bound[states[idx]]
            u_wait, u_acc = rng.random(idx.shape[0]), rng.random(idx.shape[0])
            with np.errstate(divide="ignore"):
                t_new = np.where(B > 0, t[idx] - np.log1p(-u_wait) / np.where(B > 0, B, 1.0), np.inf)
            t_stop = np.minimum(t_new, t_end)
            for c, tc in enumerate(cps):
                hit = (t[idx] <= tc) & (tc < t_stop) | ((tc == t_end) & (t_stop == t_end) & (t_new > t_end))
                rec[c, idx[hit]] = states[idx[hit]]
            done = t_new > t_end
            active[idx[done]] = False
            go = ~done
            if not go.any():
                break
            gi, gt = idx[go], t_new[go]
            t[gi] = gt
            rates = self.s.rates_at(gt, self.node)
            rates[self.src[None, :] != states[gi][:, None]] = 0.0
            cum = np.cumsum(rates, axis=1)
            target = u_acc[go] * self.bound[states[gi]]
            accept = target < cum[:, -1]
            if accept.any():
                ai = np.flatnonzero(accept)
                tr = np.minimum((cum[ai] <= target[ai, None]).sum(axis=1), rates.shape[1] - 1)
                old = states[gi[ai]].copy()
                states[gi[ai]] = self.dst[tr]
                if on_jump is not None:
                    on_jump(gt[ai], gi[ai], old, states[gi[ai]])
        return rec


def simulate_site(s: RateSchedule, r, init: str, t_end: float, seed) -> SiteTrajectory:
    """Exact single-site path of the mean-field process on [0, t_end]."""
    if t_end > s.t_max + 1e-12:
        raise ValueError(f"t_end {t_end} beyond schedule range {s.t_max}")
    labels = s.model.states.labels
    th = _Thinner(s, s.node(r))
    states = np.array([labels.index(init)], dtype=np.int64)
    times, entered = [], []

    def on_jump(tj, _sites, _old, new):
        times.extend(float(x) for x in tj)
        entered.extend(labels[int(y)] for y in new)

    th.run(states, t_end, np.random.default_rng(seed), on_jump=on_jump)
    return SiteTrajectory(init, float(t_end), np.array(times), entered)


def ensemble_paths(s: RateSchedule, r, init: str, n_replicas: int, t_end: float, seed) -> list[SiteTrajectory]:
    """``n_replicas`` independent single-site paths on [0, t_end], sampled together."""
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    if t_end > s.t_max + 1e-12:
        raise ValueError(f"t_end {t_end} beyond schedule range {s.t_max}")
    labels = s.model.states.labels
    states = np.full(n_replicas, labels.index(init), dtype=np.int64)
    times = [[] for _ in range(n_replicas)]
    entered = [[] for _ in range(n_replicas)]

    def on_jump(tj, sites, _old, new):
        for t, i, y in zip(tj, sites, new):
            times[i].append(float(t))
            entered[i].append(labels[int(y)])

    _Thinner(s, s.node(r)).run(states, t_end, np.random.default_rng(seed), on_jump=on_jump)
    return [SiteTrajectory(init, float(t_end), np.array(times[i]), entered[i]) for i in range(n_replicas)]


@dataclass
class Occupancy:
    times: np.ndarray
    labels: tuple[str, ...]
    frequency: np.ndarray  # (n_times, K)
    stderr: np.ndarray
    n_replicas: int

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "state", "frequency", "stderr"])
            for i, t in enumerate(self.times):
                for k, lab in enumerate(self.labels):
                    w.writerow([repr(float(t)), lab, repr(float(self.frequency[i, k])), repr(float(self.stderr[i, k]))])


def ensemble_occupancy(s: RateSchedule, r, n_replicas: int, times, seed, init=None) -> Occupancy:
    """Empirical state distribution of ``n_replicas`` independent mean-field sites.

    Initial states are drawn from the schedule's field at t=0 at the site's
    node unless ``init`` (a state label) is given.
    """
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    times = np.sort(np.asarray(times, dtype=float))
    if times.size and (times[0] < s.times[0] or times[-1] > s.t_max + 1e-12):
        raise ValueError("occupancy times outside schedule range")
    node = s.node(r)
    K = s.model.K
    init_ss, dyn_ss = child_seed(seed, 0), child_seed(seed, 1)
    if init is not None:
        states = np.full(n_replicas, s.model.index(init), dtype=np.int64)
    else:
        p0 = _initial_probs(s, node)
        states = np.random.default_rng(init_ss).choice(K, size=n_replicas, p=p0).astype(np.int64)
    t_end = float(times[-1]) if times.size else 0.0
    rec = _Thinner(s, node).run(states, t_end, np.random.default_rng(dyn_ss), checkpoints=times)
    freq = np.stack([np.bincount(row, minlength=K) / n_replicas for row in rec]) if times.size else np.zeros((0, K))
    stderr = np.sqrt(freq * (1 - freq) / n_replicas)
    return Occupancy(times, s.model.states.labels, freq, stderr, n_replicas)


def _initial_probs(s: RateSchedule, node: int) -> np.ndarray:
    if s.initial_values is None:
        raise ValueError("schedule lacks the initial field; pass init= explicitly")
    p = np.clip(np.asarray(s.initial_values[node], dtype=float), 0, None)
    return p / p.sum()
