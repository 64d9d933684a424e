"""Exact event-driven simulation of the finite-size N-site jump process.

Site i flips x -> y at rate Phi_{x,y}((1/N) sum_j W_{x,y}(r_i, r_j) 1{X_j = psi(x,y)}).
The direct method is used: waiting times are exponential in the total rate
and the event is drawn proportionally to its rate. Local fields are cached
and updated in O(N) per flip.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _ssa_core as core
from .gke import kernel_block
from .model import ModelSpec, sample_sites

KERNEL_MEMORY_BUDGET = 512 * 2**20
CUTOFF_SIGMAS = 6.0
REFRESH_EVERY = 100_000
CHUNK = 1 << 16

ABSORBED = "ABSORBED"


class EventCapExceeded(RuntimeError):
    """The event log hit its configured cap; ``trajectory`` holds the truncated run."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


def seed_sequence(seed) -> np.random.SeedSequence:
    """``seed`` as a SeedSequence (ints and None are wrapped, sequences pass through)."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """Reproducible stream indexed by ``keys`` below ``seed``; distinct keys give independent streams."""
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys))


def replica_seed(seed, replica: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for replica ``replica`` of a run seeded by ``seed``."""
    return child_seed(seed, replica)


@dataclass
class Event:
    t: float
    site: int
    source: str
    target: str


@dataclass
class Trajectory:
    labels: tuple[str, ...]
    positions: np.ndarray
    initial_states: np.ndarray
    t_end: float
    times: np.ndarray
    sites: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    absorbed: bool = False
    absorption_time: float | None = None
    snapshot_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int8))

    @property
    def n_events(self) -> int:
        return self.times.shape[0]

    def final_states(self) -> np.ndarray:
        """Replay the event log on the initial states."""
        s = self.initial_states.copy()
        if self.n_events:
            rev_sites = self.sites[::-1]
            uniq, first = np.unique(rev_sites, return_index=True)
            s[uniq] = self.targets[::-1][first]
        return s

    def events(self):
        for k in range(self.n_events):
            yield Event(float(self.times[k]), int(self.sites[k]), self.labels[self.sources[k]], self.labels[self.targets[k]])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "site", "from", "to"])
            for k in range(self.n_events):
                w.writerow([repr(float(self.times[k])), int(self.sites[k]), self.labels[self.sources[k]], self.labels[self.targets[k]]])

    def snapshots_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "site", "pos", "state"])
            for ti, t in enumerate(self.snapshot_times):
                for i in range(self.positions.shape[0]):
                    pos = self.positions[i]
                    pos = int(pos) if np.issubdtype(self.positions.dtype, np.integer) else repr(float(pos))
                    w.writerow([repr(float(t)), i, pos, self.labels[self.snapshots[ti, i]]])


class SiteSystem:
    """N sites with positions, states and cached kernel-weighted fields."""

    def __init__(self, model: ModelSpec, positions: np.ndarray, states: np.ndarray, rng: np.random.Generator,
                 kernel_memory: int = KERNEL_MEMORY_BUDGET):
        self.model = model
        self.positions = positions
        self.states = np.asarray(states, dtype=np.int64).copy()
        self.rng = rng
        self.t = 0.0
        self.N = self.states.shape[0]
        self.discrete = model.measure.is_discrete
        self.event_counter = 0
        self._setup_tables()
        if self.discrete:
            self._setup_patches()
        else:
            self._setup_continuum(kernel_memory)

    # -- table setup ---------------------------------------------------------

    def _setup_tables(self):
        m = self.model
        kernels, chans, t_channel = m.channels()
        self.kernels = kernels
        self.channel_list = chans
        self.src = np.array([m.index(t.source) for t in m.transitions], dtype=np.int64)
        self.dst = np.array([m.index(t.target) for t in m.transitions], dtype=np.int64)
        self.kind = np.empty(len(m.transitions), dtype=np.int64)
        self.par = np.zeros((len(m.transitions), 5))
        for k, t in enumerate(m.transitions):
            amp = t.kernel.amplitude if t.kernel is not None else 0.0
            if t.rate.kind == "constant":
                self.kind[k] = core.RATE_CONST
                self.par[k, 0] = t.rate.value
            elif t.rate.kind == "linear":
                self.kind[k] = core.RATE_LINEAR
            else:
                s = t.rate.sigmoid
                self.kind[k] = core.RATE_SIGMOID
                self.par[k, :4] = (s.lo, s.hi, s.center, s.slope)
            self.par[k, 4] = amp
        self.chan = t_channel.astype(np.int64)
        self.ch_kernel = np.array([c[0] for c in chans], dtype=np.int64)
        self.ch_dep = np.array([c[1] for c in chans], dtype=np.int64)

    def _setup_continuum(self, kernel_memory):
        n = self.N
        n_shapes = len(self.kernels)
        self.shape_kind = np.zeros(n_shapes, dtype=np.int64)
        self.shape_par = np.zeros((n_shapes, 4))
        boundary = self.model.boundary
        L = self.model.measure.length
        for k, ker in enumerate(self.kernels):
            if ker.kind == "constant":
                self.shape_kind[k] = core.SHAPE_CONST
                self.shape_par[k, 3] = ker.value
            elif ker.kind == "gaussian_ring":
                self.shape_kind[k] = core.SHAPE_RING
                self.shape_par[k] = (ker.sigma, ker.length, ker.ring_norm, 0.0)
            elif boundary == "reflecting":
                self.shape_kind[k] = core.SHAPE_LINE_REFLECT
                self.shape_par[k] = (ker.sigma, L, 1.0, 0.0)
            else:
                self.shape_kind[k] = core.SHAPE_LINE
                self.shape_par[k] = (ker.sigma, L or 0.0, 1.0, 0.0)
        self.precomputed = n_shapes * n * n * 8 <= kernel_memory
        if self.precomputed:
            self.rows = np.empty((n_shapes, n, n))
            for k, ker in enumerate(self.kernels):
                self.rows[k] = kernel_block(ker, self.positions, self.positions, boundary, L)
            self.cutoff = 0.0
        else:
            self.rows = np.zeros((0, 0, 0))
            sig = [k.sigma for k in self.kernels if k.sigma is not None]
            self.cutoff = CUTOFF_SIGMAS * max(sig) if sig else 0.0
        self.counts = np.bincount(self.states, minlength=self.model.K).astype(np.int64)
        self.fields = np.zeros((len(self.channel_list), n))
        core.continuum_fields(self.states, self.positions, self.rows, self.shape_kind, self.shape_par,
                              self.cutoff, self.ch_kernel, self.ch_dep, self.fields)
        self.rate_st = np.zeros((n, len(self.src)))
        self.site_rate = np.zeros(n)
        core.continuum_rates(self.states, self.fields, self.src, self.kind, self.par, self.chan, self.rate_st, self.site_rate)

    def _setup_patches(self):
        m = self.model
        n_p = m.measure.n_patches
        K = m.K
        self.patch = np.asarray(self.positions, dtype=np.int64)
        self.wmat = np.array([np.asarray(k.matrix, dtype=float) if k.kind == "patch_matrix"
                              else np.full((n_p, n_p), k.value) for k in self.kernels]).reshape(len(self.kernels), n_p, n_p)
        self.counts = np.zeros((n_p, K), dtype=np.int64)
        np.add.at(self.counts, (self.patch, self.states), 1)
        self.members = np.full((n_p * K, self.N), -1, dtype=np.int64)
        self.msize = np.zeros(n_p * K, dtype=np.int64)
        self.mpos = np.zeros(self.N, dtype=np.int64)
        for i in range(self.N):
            g = self.patch[i] * K + self.states[i]
            self.members[g, self.msize[g]] = i
            self.mpos[i] = self.msize[g]
            self.msize[g] += 1
        self.fields = np.zeros((len(self.channel_list), n_p))
        core.patch_fields(self.counts, self.wmat, self.ch_kernel, self.ch_dep, self.N, self.fields)
        self.rate_g = np.zeros((n_p, len(self.src)))
        core.patch_rates(self.fields, self.src, self.kind, self.par, self.chan, self.rate_g)

    # -- queries -------------------------------------------------------------

    def site_fields(self, i: int) -> np.ndarray:
        """Cached channel fields seen by site ``i``."""
        return self.fields[:, self.patch[i]] if self.discrete else self.fields[:, i]

    def recompute_fields(self) -> np.ndarray:
        """From-scratch field computation (for cache verification)."""
        if self.discrete:
            out = np.zeros_like(self.fields)
            core.patch_fields(self.counts, self.wmat, self.ch_kernel, self.ch_dep, self.N, out)
            return out
        out = np.zeros_like(self.fields)
        for c, (k, dep) in enumerate(self.channel_list):
            w = kernel_block(self.kernels[k], self.positions, self.positions[self.states == dep],
                             self.model.boundary, self.model.measure.length)
            out[c] = w.sum(axis=1) / self.N
        return out

    def total_rate(self) -> float:
        if self.discrete:
            return float(np.sum(self.counts[:, self.src] * self.rate_g))
        return float(self.site_rate.sum())

    def occupancy(self) -> np.ndarray:
        return np.bincount(self.states, minlength=self.model.K) / self.N

    # -- dynamics ------------------------------------------------------------

    def advance(self, t_end: float, uniforms: np.ndarray, max_events: int, snap_times=None, snaps=None, snap_ptr=None):
        """Run the compiled loop; returns (n_events, n_uniforms_used, status, event arrays)."""
        ev_t = np.empty(max_events)
        ev_site = np.empty(max_events, dtype=np.int64)
        ev_from = np.empty(max_events, dtype=np.int64)
        ev_to = np.empty(max_events, dtype=np.int64)
        if snap_times is None:
            snap_times = np.zeros(0)
            snaps = np.zeros((0, self.N), dtype=np.int64)
            snap_ptr = np.zeros(1, dtype=np.int64)
        if self.discrete:
            t, n_ev, n_u, status = core.advance_patches(
                self.t, t_end, self.states, self.patch, self.counts,
                self.src, self.dst, self.kind, self.par, self.chan,
                self.ch_kernel, self.ch_dep, self.wmat,
                self.fields, self.rate_g,
                self.members, self.msize, self.mpos,
                uniforms, ev_t, ev_site, ev_from, ev_to,
                snap_times, snap_ptr, snaps,
            )
        else:
            t, n_ev, n_u, status, self.event_counter = core.advance_continuum(
                self.t, t_end, self.states, self.positions, self.counts,
                self.src, self.dst, self.kind, self.par, self.chan,
                self.ch_kernel, self.ch_dep,
                self.rows, self.shape_kind, self.shape_par, self.cutoff,
                self.fields, self.rate_st, self.site_rate,
                uniforms, ev_t, ev_site, ev_from, ev_to,
                snap_times, snap_ptr, snaps, REFRESH_EVERY, self.event_counter,
            )
        self.t = t
        return n_ev, n_u, status, (ev_t[:n_ev], ev_site[:n_ev], ev_from[:n_ev], ev_to[:n_ev])


def init_state(model: ModelSpec, N: int, seed, kernel_memory: int = KERNEL_MEMORY_BUDGET) -> SiteSystem:
    """Place N sites from the site measure and draw their initial states."""
    if N < 1:
        raise ValueError("need at least one site")
    pos_ss, state_ss, dyn_ss = (child_seed(seed, k) for k in range(3))
    positions = sample_sites(model.measure, N, pos_ss)
    discrete = model.measure.is_discrete
    law = model.initial_law
    probs = law.at(positions, discrete)
    rng = np.random.default_rng(state_ss)
    if law.assignment == "quota":
        states = np.empty(N, dtype=np.int64)
        gid = law.group_ids(positions, discrete)
        for g in np.unique(gid):
            idx = np.flatnonzero(gid == g)
            p = probs[idx[0]]
            raw = p * idx.size
            n_x = np.floor(raw).astype(int)
            short = idx.size - n_x.sum()
            n_x[np.argsort(-(raw - n_x), kind="stable")[:short]] += 1
            labels = np.repeat(np.arange(model.K), n_x)
            states[idx] = rng.permutation(labels)
    else:
        cum = np.cumsum(probs, axis=1)
        u = rng.random(N)[:, None]
        states = np.minimum((u >= cum).sum(axis=1), model.K - 1).astype(np.int64)
    return SiteSystem(model, positions, states, np.random.default_rng(dyn_ss), kernel_memory)


def transition_rates(sys: SiteSystem, model: ModelSpec, i: int) -> list[tuple[str, float]]:
    """Rates of every transition available to site ``i`` from its current state."""
    x = sys.states[i]
    f = sys.site_fields(i)
    out = []
    for k, t in enumerate(model.transitions):
        if sys.src[k] != x:
            continue
        c = sys.chan[k]
        u = sys.par[k, 4] * f[c] if c >= 0 else 0.0
        out.append((t.target, float(t.rate(u))))
    return out


def step(sys: SiteSystem, model: ModelSpec | None = None):
    """One Gillespie event; returns the Event or ``ABSORBED``."""
    u = sys.rng.random(3)
    n_ev, _, status, (t, site, src, dst) = sys.advance(np.inf, u, 1)
    if status == core.ABSORBED:
        return ABSORBED
    if not np.isfinite(sys.t):
        raise FloatingPointError("non-finite event time")
    labels = sys.model.states.labels
    return Event(float(t[0]), int(site[0]), labels[src[0]], labels[dst[0]])


def simulate(model: ModelSpec, N: int, t_end: float, seed, snapshot_times=(), max_events: int = 50_000_000,
             kernel_memory: int = KERNEL_MEMORY_BUDGET, record_events: bool = True) -> Trajectory:
    """Simulate until ``t_end`` or absorption, recording events and state snapshots.

    ``record_events=False`` keeps only snapshots and the final state (the
    event arrays come back empty), which saves memory in long replica sweeps.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    sys = init_state(model, N, seed, kernel_memory)
    return run_system(sys, t_end, snapshot_times, max_events, record_events)


def run_system(sys: SiteSystem, t_end: float, snapshot_times=(), max_events: int = 50_000_000,
               record_events: bool = True) -> Trajectory:
    initial = sys.states.copy()
    snap_times = np.sort(np.asarray(snapshot_times, dtype=float))
    snaps = np.zeros((snap_times.shape[0], sys.N), dtype=np.int64)
    snap_ptr = np.zeros(1, dtype=np.int64)
    chunks = []
    total = 0
    status = core.REACHED_END
    absorbed_at = None
    if t_end > 0:
        while True:
            cap = min(CHUNK, max_events - total) if record_events else CHUNK
            if cap <= 0:
                traj = _trajectory(sys, initial, t_end, chunks, False, None, snap_times[: snap_ptr[0]], snaps[: snap_ptr[0]])
                raise EventCapExceeded(f"event cap {max_events} reached at t={sys.t:.6g}", traj)
            u = sys.rng.random(3 * cap)
            n_ev, n_u, status, ev = sys.advance(t_end, u, cap, snap_times, snaps, snap_ptr)
            total += n_ev
            if record_events:
                chunks.append(tuple(a.copy() for a in ev))
            if status == core.ABSORBED:
                absorbed_at = float(sys.t)
                break
            if status == core.REACHED_END:
                break
    else:
        while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] <= 0:
            snaps[snap_ptr[0]] = sys.states
            snap_ptr[0] += 1
    traj = _trajectory(sys, initial, t_end, chunks, absorbed_at is not None, absorbed_at, snap_times[: snap_ptr[0]], snaps[: snap_ptr[0]])
    return traj


def _trajectory(sys, initial, t_end, chunks, absorbed, absorbed_at, snap_times, snaps):
    if chunks:
        times, sites, src, dst = (np.concatenate(parts) for parts in zip(*chunks))
    else:
        times, sites, src, dst = np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return Trajectory(
        labels=sys.model.states.labels,
        positions=sys.positions,
        initial_states=initial,
        t_end=float(t_end),
        times=times,
        sites=sites,
        sources=src.astype(np.int8),
        targets=dst.astype(np.int8),
        absorbed=absorbed,
        absorption_time=absorbed_at,
        snapshot_times=snap_times.copy(),
        snapshots=snaps.astype(np.int8),
    )


def occupancy(traj: Trajectory, times, spatial_bins=None) -> np.ndarray:
    """Fraction of sites in each state at each time.

    Returns shape (n_times, K), or (n_times, n_bins, K) when ``spatial_bins``
    (bin edges, or ``"patches"``) is given. Empty bins are NaN.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > traj.t_end):
        raise ValueError("occupancy times must lie in [0, t_end]")
    K = len(traj.labels)
    if spatial_bins is None:
        bins = np.zeros(traj.initial_states.shape[0], dtype=np.int64)
        n_bins = 1
    elif isinstance(spatial_bins, str) and spatial_bins == "patches":
        bins = np.asarray(traj.positions, dtype=np.int64)
        n_bins = int(bins.max()) + 1
    else:
        edges = np.asarray(spatial_bins, dtype=float)
        n_bins = edges.shape[0] - 1
        bins = np.clip(np.searchsorted(edges, traj.positions, side="right") - 1, 0, n_bins - 1)
    base = np.zeros((n_bins, K))
    np.add.at(base, (bins, traj.initial_states), 1)
    # cumulative changes after each event
    delta = np.zeros((traj.n_events + 1, n_bins, K))
    if traj.n_events:
        b = bins[traj.sites]
        k = np.arange(1, traj.n_events + 1)
        np.add.at(delta, (k, b, traj.sources.astype(np.int64)), -1)
        np.add.at(delta, (k, b, traj.targets.astype(np.int64)), 1)
    cum = np.cumsum(delta, axis=0)
    idx = np.searchsorted(traj.times, times, side="right")
    counts = base[None] + cum[idx]
    sizes = counts.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(sizes > 0, counts / np.where(sizes > 0, sizes, 1), np.nan)
    return frac[:, 0, :] if spatial_bins is None else frac
