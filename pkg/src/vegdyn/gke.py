"""Deterministic solvers for the generalized Kolmogorov equations (GKEs).

For every location r and state x the probabilities obey

    dP_x/dt = sum_{y != x} Lambda_{y,x}(r) P_y(r) - sum_{y != x} Lambda_{x,y}(r) P_x(r),
    Lambda_{x,y}(r) = Phi_{x,y}( int W_{x,y}(r, r') P_{psi(x,y)}(r') dq(r') ).

On patches the integral is a weighted sum (ODE system); on continuous
domains it is a trapezoid-rule quadrature (nonlocal IDE). Time stepping is
explicit Euler.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import Kernel, ModelSpec, SiteMeasure, ring_distance

NEG_CLIP = 1e-8


class NumericalAbort(RuntimeError):
    """Solver stopped on a non-finite or clearly negative probability.

    ``partial`` carries the snapshots recorded before the abort.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes and weights against the site measure (weights sum to 1)."""

    domain: str
    nodes: np.ndarray
    weights: np.ndarray
    boundary: str
    length: float | None = None

    def __len__(self):
        return self.nodes.shape[0]


@dataclass
class ProbabilityField:
    values: np.ndarray  # (n_nodes, K)
    time: float = 0.0


@dataclass
class FieldSeries:
    times: np.ndarray
    values: np.ndarray  # (n_snap, n_nodes, K)
    grid: Grid
    labels: tuple[str, ...]

    def state(self, label: str) -> np.ndarray:
        return self.values[:, :, self.labels.index(label)]

    def at(self, t: float) -> np.ndarray:
        """Field at snapshot time ``t`` (nearest recorded)."""
        return self.values[int(np.argmin(np.abs(self.times - t)))]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "node", "pos"] + [f"P_{lab}" for lab in self.labels])
            for ti, t in enumerate(self.times):
                for k, pos in enumerate(self.grid.nodes):
                    w.writerow([repr(float(t)), k, repr(float(pos))] + [repr(float(v)) for v in self.values[ti, k]])


def make_grid(measure: SiteMeasure, n_nodes: int = 200, boundary: str | None = None) -> Grid:
    """Uniform nodes with trapezoid weights times the site density, normalized to 1."""
    if measure.is_discrete:
        if boundary not in (None, "none"):
            raise ValueError(f"patches take no boundary, got {boundary!r}")
        return Grid("patches", np.arange(measure.n_patches), np.asarray(measure.weights, dtype=float), "none")
    if n_nodes < 3:
        raise ValueError("continuous grids need at least 3 nodes")
    L = measure.length
    if measure.domain == "ring":
        boundary = boundary or "periodic"
        if boundary != "periodic":
            raise ValueError(f"ring domain is periodic, got boundary {boundary!r}")
        nodes = L * np.arange(n_nodes) / n_nodes
        w = np.full(n_nodes, L / n_nodes)
    else:
        boundary = boundary or "reflecting"
        if boundary not in ("reflecting", "open", "periodic"):
            raise ValueError(f"unknown interval boundary {boundary!r}")
        if boundary == "periodic":
            nodes = L * np.arange(n_nodes) / n_nodes
            w = np.full(n_nodes, L / n_nodes)
        else:
            nodes = np.linspace(0.0, L, n_nodes)
            w = np.full(n_nodes, L / (n_nodes - 1))
            w[0] *= 0.5
            w[-1] *= 0.5
    w = w * measure.density(nodes)
    return Grid(measure.domain, nodes, w / w.sum(), boundary, L)


def quadrature(f, g: Grid) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != len(g):
        raise ValueError(f"expected {len(g)} node values, got {f.shape[0]}")
    return float(g.weights @ f)


def _gauss(d, sigma):
    return np.exp(-(d**2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))


def kernel_block(kernel: Kernel, x, y, boundary: str, length: float | None) -> np.ndarray:
    """Kernel shape (amplitude 1) between points ``x`` (rows) and ``y`` (cols).

    Reflecting boundaries fold the even, 2L-periodic extension into the kernel
    (method of images), so integrating against values on [0, L] equals
    integrating the unfolded kernel against the extended field.
    """
    x = np.asarray(x, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[None, :]
    if kernel.kind == "constant":
        return np.full((x.shape[0], y.shape[1]), kernel.value)
    if kernel.kind == "patch_matrix":
        m = np.asarray(kernel.matrix, dtype=float)
        return m[np.ix_(x[:, 0].astype(int), y[0].astype(int))]
    if kernel.kind == "gaussian_ring":
        d = ring_distance(x, y, kernel.length)
        return kernel.ring_norm * _gauss(d, kernel.sigma)
    sigma = kernel.sigma
    if boundary in ("reflecting", "periodic"):
        period = 2 * length if boundary == "reflecting" else length
        n_img = int(math.ceil(10 * sigma / period)) + 1
        out = np.zeros((x.shape[0], y.shape[1]))
        for m in range(-n_img, n_img + 1):
            out += _gauss(x - y + m * period, sigma)
            if boundary == "reflecting":
                out += _gauss(x + y + m * period, sigma)
        return out
    return _gauss(x - y, sigma)


class GKEProblem:
    """Precomputed quadrature operators for one (model, grid) pair."""

    def __init__(self, model: ModelSpec, grid: Grid):
        self.model = model
        self.grid = grid
        kernels, chans, t_channel = model.channels()
        shape_ops = [kernel_block(k, grid.nodes, grid.nodes, grid.boundary, grid.length) * grid.weights[None, :] for k in kernels]
        self.channels = chans
        self.ops = [shape_ops[k] for k, _ in chans]
        self.t_channel = t_channel
        self.src = np.array([model.index(t.source) for t in model.transitions])
        self.dst = np.array([model.index(t.target) for t in model.transitions])
        self.amp = np.array([t.kernel.amplitude if t.kernel is not None else 0.0 for t in model.transitions])

    def fields(self, P: np.ndarray) -> np.ndarray:
        """Channel fields, shape (n_channels, n_nodes), amplitude excluded."""
        return np.array([op @ P[:, dep] for op, (_, dep) in zip(self.ops, self.channels)]).reshape(len(self.ops), -1)

    def rates(self, P: np.ndarray, fields: np.ndarray | None = None) -> np.ndarray:
        """Per-transition rates Lambda at every node, shape (n_transitions, n_nodes)."""
        if fields is None:
            fields = self.fields(P)
        out = np.empty((len(self.model.transitions), P.shape[0]))
        for t, spec in enumerate(self.model.transitions):
            c = self.t_channel[t]
            u = self.amp[t] * fields[c] if c >= 0 else np.zeros(P.shape[0])
            out[t] = spec.rate(u)
        return out

    def rhs(self, P: np.ndarray) -> np.ndarray:
        lam = self.rates(P)
        d = np.zeros_like(P)
        for t in range(lam.shape[0]):
            flux = lam[t] * P[:, self.src[t]]
            d[:, self.src[t]] -= flux
            d[:, self.dst[t]] += flux
        return d

    def max_outflow(self, P: np.ndarray) -> float:
        lam = self.rates(P)
        out = np.zeros(P.shape)
        for t in range(lam.shape[0]):
            out[:, self.src[t]] += lam[t]
        return float(out.max())


def initial_field(model: ModelSpec, grid: Grid) -> ProbabilityField:
    return ProbabilityField(model.initial_law.at(grid.nodes, model.measure.is_discrete), 0.0)


def rhs(field: ProbabilityField, model: ModelSpec, grid: Grid) -> np.ndarray:
    P = np.asarray(field.values if isinstance(field, ProbabilityField) else field, dtype=float)
    if P.shape != (len(grid), model.K):
        raise ValueError(f"field shape {P.shape} does not match grid/model {(len(grid), model.K)}")
    return GKEProblem(model, grid).rhs(P)


def _clip_negative(P: np.ndarray, t: float, problem: GKEProblem):
    low = P.min()
    if low >= 0:
        return P
    if low < -NEG_CLIP:
        raise NumericalAbort(
            f"probability {low:.3e} < -{NEG_CLIP} at t={t:.6g}; reduce the step below "
            f"1/max_outflow = {1.0 / max(problem.max_outflow(np.clip(P, 0, 1)), 1e-300):.4g}"
        )
    bad = np.any(P < 0, axis=1)
    Q = np.where(P < 0, 0.0, P)
    Q[bad] /= Q[bad].sum(axis=1, keepdims=True)
    return Q


def integrate(
    model: ModelSpec,
    grid: Grid,
    init: ProbabilityField | np.ndarray | None,
    h: float,
    t_end: float,
    snapshot_times=None,
) -> FieldSeries:
    """Forward-Euler integration of the GKEs.

    ``snapshot_times=None`` records every step (including t=0); otherwise the
    field is recorded at the steps nearest to the requested times.
    """
    if h <= 0:
        raise ValueError("time step must be positive")
    problem = GKEProblem(model, grid)
    if init is None:
        init = initial_field(model, grid)
    P = np.array(init.values if isinstance(init, ProbabilityField) else init, dtype=float)
    t0 = init.time if isinstance(init, ProbabilityField) else 0.0
    n_steps = int(round((t_end - t0) / h)) if t_end > t0 else 0
    if snapshot_times is None:
        snap_steps = np.arange(n_steps + 1)
    else:
        snap_steps = np.unique(np.clip(np.rint((np.asarray(snapshot_times, dtype=float) - t0) / h), 0, n_steps).astype(int))
    times, values = [], []
    ptr = 0

    def record(step):
        nonlocal ptr
        while ptr < len(snap_steps) and snap_steps[ptr] == step:
            times.append(t0 + step * h)
            values.append(P.copy())
            ptr += 1

    record(0)
    for n in range(1, n_steps + 1):
        P = P + h * problem.rhs(P)
        if not np.all(np.isfinite(P)):
            raise NumericalAbort(f"non-finite probability at t={t0 + n * h:.6g}", _series(times, values, grid, model))
        try:
            P = _clip_negative(P, t0 + n * h, problem)
        except NumericalAbort as exc:
            exc.partial = _series(times, values, grid, model)
            raise
        record(n)
    return _series(times, values, grid, model)


def _series(times, values, grid, model):
    vals = np.array(values) if values else np.zeros((0, len(grid), model.K))
    return FieldSeries(np.array(times, dtype=float), vals, grid, model.states.labels)


def solve_2state_ode(jbar: float, phi, grass0: float, h: float, t_end: float, density: float = 1.0):
    """Euler solution of dG/dt = (1-G)(phi(qG) - jbar q G) at site density q.

    With ``density=1`` this is the single-patch grass/forest GKE.
    """
    n = int(round(t_end / h))
    G = np.empty(n + 1)
    G[0] = grass0
    for k in range(n):
        g = G[k]
        G[k + 1] = g + h * (1 - g) * (phi(density * g) - jbar * density * g)
    return np.arange(n + 1) * h, G
