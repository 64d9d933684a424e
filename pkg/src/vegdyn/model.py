"""Model description for K-state spatial vegetation models.

A model is a set of states, a transition table and a site measure. Each
transition ``x -> y`` fires at rate ``Phi(u)`` where ``u`` is a kernel-weighted
density of some other state (``depends_on``) around the site, or at a constant
rate when the transition depends on nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

EXP_CLAMP = 700.0

# Default fire-response parameters (mu, nu, omega and phi sigmoids).
DEFAULT_MU = 0.1
DEFAULT_NU = 0.05


class ModelValidationError(ValueError):
    """Raised when a model configuration is inconsistent.

    ``problems`` lists every offending entry, not just the first one.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid model: " + "; ".join(self.problems))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSet:
    labels: tuple[str, ...]
    absorbing_hint: str | None = None

    def __post_init__(self):
        problems = []
        if len(self.labels) < 2:
            problems.append("need at least two states")
        if len(set(self.labels)) != len(self.labels):
            problems.append(f"duplicate state labels in {self.labels}")
        if self.absorbing_hint is not None and self.absorbing_hint not in self.labels:
            problems.append(f"absorbing hint {self.absorbing_hint!r} is not a state")
        if problems:
            raise ModelValidationError(problems)

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class SigmoidParams:
    """Logistic curve ``lo + (hi - lo) / (1 + exp(-(x - center) / slope))``.

    ``lo`` is the value far below ``center``; it may exceed ``hi`` (decreasing curve).
    """

    lo: float
    hi: float
    center: float
    slope: float

    def __post_init__(self):
        problems = []
        if not self.slope > 0:
            problems.append(f"sigmoid slope must be positive, got {self.slope}")
        if self.lo < 0 or self.hi < 0:
            problems.append(f"sigmoid rates must be nonnegative, got lo={self.lo}, hi={self.hi}")
        if problems:
            raise ModelValidationError(problems)

    def __call__(self, x):
        return eval_sigmoid(self, x)


PHI_DEFAULT = SigmoidParams(lo=0.1, hi=0.9, center=0.4, slope=0.05)
OMEGA_DEFAULT = SigmoidParams(lo=0.9, hi=0.4, center=0.4, slope=0.01)


def eval_sigmoid(p: SigmoidParams, x):
    """Evaluate the sigmoid at cover fraction ``x`` (scalar or array).

    ``x`` is clamped to [0, 1]; non-finite input raises ``ValueError``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("sigmoid argument must be finite")
    arr = np.clip(arr, 0.0, 1.0)
    z = np.clip(-(arr - p.center) / p.slope, -EXP_CLAMP, EXP_CLAMP)
    # expand around the nearer asymptote so a limit of 0 is approached without cancellation
    out = np.where(z >= 0, p.lo + (p.hi - p.lo) / (1.0 + np.exp(z)), p.hi + (p.lo - p.hi) / (1.0 + np.exp(-z)))
    if out.ndim == 0:
        return float(out)
    return out


KERNEL_KINDS = ("constant", "gaussian_ring", "gaussian_line", "patch_matrix")


@dataclass(frozen=True)
class Kernel:
    """Interaction kernel W(r, r') scaled by ``amplitude``.

    ``gaussian_ring`` uses the ring distance on a circle of circumference
    ``length`` and the truncation-corrected normalization, so that it
    integrates to ``amplitude`` against the uniform probability measure.
    ``gaussian_line`` is the plain unit-mass Gaussian on the real line.
    """

    kind: str
    amplitude: float = 1.0
    sigma: float | None = None
    length: float | None = None
    value: float = 1.0
    matrix: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        problems = []
        if self.kind not in KERNEL_KINDS:
            problems.append(f"unknown kernel kind {self.kind!r}")
        if self.amplitude < 0:
            problems.append(f"kernel amplitude must be nonnegative, got {self.amplitude}")
        if self.kind in ("gaussian_ring", "gaussian_line"):
            if self.sigma is None or not self.sigma > 0:
                problems.append(f"{self.kind} needs sigma > 0, got {self.sigma}")
        if self.kind == "gaussian_ring" and (self.length is None or not self.length > 0):
            problems.append(f"gaussian_ring needs length > 0, got {self.length}")
        if self.kind == "constant" and self.value < 0:
            problems.append(f"constant kernel must be nonnegative, got {self.value}")
        if self.kind == "patch_matrix":
            if self.matrix is None:
                problems.append("patch_matrix kernel needs a matrix")
            else:
                m = np.asarray(self.matrix, dtype=float)
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    problems.append(f"patch matrix must be square, got shape {m.shape}")
                elif np.any(m < 0) or not np.all(np.isfinite(m)):
                    problems.append("patch matrix entries must be finite and nonnegative")
        if problems:
            raise ModelValidationError(problems)

    @property
    def ring_norm(self) -> float:
        """C(sigma) = L / (2 Phi(L / 2 sigma) - 1)."""
        return self.length / (2.0 * ndtr(self.length / (2.0 * self.sigma)) - 1.0)

    def sup_norm(self) -> float:
        """Supremum of the kernel (amplitude included)."""
        if self.kind == "constant":
            return self.amplitude * self.value
        if self.kind == "gaussian_ring":
            return self.amplitude * self.ring_norm / (self.sigma * math.sqrt(2 * math.pi))
        if self.kind == "gaussian_line":
            return self.amplitude / (self.sigma * math.sqrt(2 * math.pi))
        return self.amplitude * float(np.max(self.matrix))

    def shape_key(self) -> tuple:
        """Identity of the kernel up to amplitude; used to share kernel rows."""
        return (self.kind, self.sigma, self.length, self.value, self.matrix)


def ring_distance(r, rp, length):
    d = np.abs(np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)) % length
    return np.minimum(d, length - d)


def eval_kernel(k: Kernel, r, rp):
    """Kernel weight between locations ``r`` and ``rp`` (broadcasting)."""
    if k.kind == "constant":
        out = np.full(np.broadcast(np.asarray(r), np.asarray(rp)).shape, k.amplitude * k.value)
    elif k.kind == "patch_matrix":
        m = np.asarray(k.matrix, dtype=float)
        ri, rj = np.asarray(r), np.asarray(rp)
        if np.any(ri < 0) or np.any(rj < 0) or np.any(ri >= m.shape[0]) or np.any(rj >= m.shape[1]):
            raise IndexError(f"patch index out of range for {m.shape[0]} patches")
        out = k.amplitude * m[ri.astype(int), rj.astype(int)]
    else:
        if k.kind == "gaussian_ring":
            d = ring_distance(r, rp, k.length)
            c = k.ring_norm
        else:
            d = np.asarray(r, dtype=float) - np.asarray(rp, dtype=float)
            c = 1.0
        out = k.amplitude * c / (k.sigma * math.sqrt(2 * math.pi)) * np.exp(-(d**2) / (2 * k.sigma**2))
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


MEASURE_KINDS = ("uniform", "trapezoid", "discrete")
DOMAIN_KINDS = ("ring", "interval", "patches")


@dataclass(frozen=True)
class SiteMeasure:
    """Probability measure q from which site locations are drawn.

    Continuous domains are ``ring`` (periodic, circumference ``length``) and
    ``interval`` ([0, length]); ``patches`` is a discrete set of M locations
    labelled 0..M-1 with masses ``weights``.
    """

    kind: str
    domain: str
    length: float | None = None
    a: float | None = None
    b: float | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        problems = []
        if self.kind not in MEASURE_KINDS:
            problems.append(f"unknown measure kind {self.kind!r}")
        if self.domain not in DOMAIN_KINDS:
            problems.append(f"unknown domain {self.domain!r}")
        if self.domain in ("ring", "interval") and (self.length is None or not self.length > 0):
            problems.append(f"{self.domain} domain needs length > 0")
        if self.kind == "discrete":
            if self.domain != "patches":
                problems.append("discrete measure lives on a patches domain")
            w = np.asarray(self.weights if self.weights is not None else [], dtype=float)
            if w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                problems.append(f"patch weights must be nonnegative and sum to 1, got {self.weights}")
        elif self.domain == "patches":
            problems.append("patches domain needs a discrete measure")
        if self.kind == "trapezoid":
            if self.domain != "interval":
                problems.append("trapezoid measure lives on an interval domain")
            elif self.a is None or self.b is None or self.a < 0 or self.b < 0:
                problems.append("trapezoid measure needs a, b >= 0")
            elif abs(self.a * self.length + self.b * self.length**2 / 2 - 1.0) > 1e-12:
                problems.append(
                    f"trapezoid density must have mass 1: a*L + b*L^2/2 = "
                    f"{self.a * self.length + self.b * self.length ** 2 / 2}"
                )
        if problems:
            raise ModelValidationError(problems)

    @property
    def n_patches(self) -> int:
        return len(self.weights) if self.domain == "patches" else 0

    @property
    def is_discrete(self) -> bool:
        return self.domain == "patches"

    def density(self, x):
        """Lebesgue density of q on a continuous domain."""
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.full(x.shape, 1.0 / self.length)
        if self.kind == "trapezoid":
            return self.a + self.b * x
        raise TypeError("discrete measures have no density")

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.length)
        if self.kind == "uniform":
            return x / self.length
        if self.kind == "trapezoid":
            return self.a * x + 0.5 * self.b * x**2
        raise TypeError("discrete measures use cumulative weights")

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.length * u
        if self.kind == "trapezoid":
            if self.b == 0:
                return u / self.a
            return (-self.a + np.sqrt(self.a**2 + 2 * self.b * u)) / self.b
        cum = np.cumsum(self.weights)
        return np.minimum(np.searchsorted(cum, u, side="right"), len(self.weights) - 1)


def sample_sites(m: SiteMeasure, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. site locations from ``m`` by inverse-CDF sampling.

    Patches are returned as integer indices, continuous locations as floats.
    """
    if n < 1:
        raise ValueError("need at least one site")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    x = m.inverse_cdf(u)
    if m.is_discrete:
        return np.asarray(x, dtype=np.int64)
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Transitions and the full model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFn:
    """Rate as a function of the local field: constant, identity or sigmoid."""

    kind: str
    value: float = 0.0
    sigmoid: SigmoidParams | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "sigmoid"):
            raise ModelValidationError([f"unknown rate kind {self.kind!r}"])
        if self.kind == "constant" and self.value < 0:
            raise ModelValidationError([f"constant rate must be nonnegative, got {self.value}"])
        if self.kind == "sigmoid" and self.sigmoid is None:
            raise ModelValidationError(["sigmoid rate needs SigmoidParams"])

    def __call__(self, u):
        if self.kind == "constant":
            return np.full(np.shape(u), self.value) if np.ndim(u) else self.value
        if self.kind == "linear":
            return u
        return eval_sigmoid(self.sigmoid, u)

    def sup(self, umax: float) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "linear":
            return umax
        return max(eval_sigmoid(self.sigmoid, 0.0), eval_sigmoid(self.sigmoid, umax))

    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear":
            return 1.0
        s = self.sigmoid
        return abs(s.hi - s.lo) / (4.0 * s.slope)


@dataclass(frozen=True)
class TransitionSpec:
    source: str
    target: str
    rate: RateFn
    kernel: Kernel | None = None
    depends_on: str | None = None

    @property
    def field_sup(self) -> float:
        return self.kernel.sup_norm() if self.kernel is not None else 0.0

    @property
    def sup_rate(self) -> float:
        return self.rate.sup(self.field_sup)


@dataclass(frozen=True)
class InitialLaw:
    """Per-location initial distribution over states.

    ``default`` applies everywhere unless overridden by ``blocks`` (half-open
    intervals ``[lo, hi)`` on a continuous domain) or ``per_patch``.
    ``assignment`` is ``"iid"`` (independent draws) or ``"quota"``
    (deterministic counts per group of sites sharing a law, randomly placed).
    """

    default: tuple[float, ...]
    blocks: tuple[tuple[float, float, tuple[float, ...]], ...] = ()
    per_patch: tuple[tuple[float, ...], ...] | None = None
    assignment: str = "iid"

    def vectors(self) -> list[tuple[float, ...]]:
        out = [self.default] + [b[2] for b in self.blocks]
        if self.per_patch is not None:
            out.extend(self.per_patch)
        return out

    def at(self, positions, discrete: bool) -> np.ndarray:
        """Return an (n, K) array of initial probabilities at ``positions``."""
        pos = np.asarray(positions)
        out = np.tile(np.asarray(self.default, dtype=float), (pos.shape[0], 1))
        if discrete and self.per_patch is not None:
            out = np.asarray(self.per_patch, dtype=float)[pos.astype(int)]
        elif not discrete:
            for lo, hi, vec in self.blocks:
                inside = (pos >= lo) & (pos < hi)
                out[inside] = vec
        return out

    def group_ids(self, positions, discrete: bool) -> np.ndarray:
        """Label sites by which law vector applies (used for quota assignment)."""
        pos = np.asarray(positions)
        if discrete:
            if self.per_patch is not None:
                return pos.astype(np.int64)
            return np.zeros(pos.shape[0], dtype=np.int64)
        gid = np.zeros(pos.shape[0], dtype=np.int64)
        for k, (lo, hi, _) in enumerate(self.blocks):
            gid[(pos >= lo) & (pos < hi)] = k + 1
        return gid


BOUNDARIES = ("periodic", "reflecting", "open", "none")


@dataclass(frozen=True)
class ModelSpec:
    states: StateSet
    transitions: tuple[TransitionSpec, ...]
    measure: SiteMeasure
    initial_law: InitialLaw
    boundary: str = "none"
    family: str = "generic"
    params: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        problems = validate_transitions(self.states, self.transitions)
        k = len(self.states)
        for vec in self.initial_law.vectors():
            v = np.asarray(vec, dtype=float)
            if v.shape != (k,) or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
                problems.append(f"initial law {vec} is not a probability vector over {k} states")
        if self.initial_law.assignment not in ("iid", "quota"):
            problems.append(f"unknown initial assignment {self.initial_law.assignment!r}")
        if self.initial_law.per_patch is not None and len(self.initial_law.per_patch) != self.measure.n_patches:
            problems.append("per-patch initial law must give one vector per patch")
        if self.boundary not in BOUNDARIES:
            problems.append(f"unknown boundary {self.boundary!r}")
        m = self.measure.n_patches
        for t in self.transitions:
            if t.kernel is None:
                continue
            if self.measure.is_discrete and t.kernel.kind == "patch_matrix":
                if len(t.kernel.matrix) != m:
                    problems.append(f"kernel of {t.source}->{t.target} has wrong size for {m} patches")
            elif self.measure.is_discrete and t.kernel.kind != "constant":
                problems.append(f"kernel of {t.source}->{t.target} must be a patch matrix on patches")
            elif not self.measure.is_discrete and t.kernel.kind == "patch_matrix":
                problems.append(f"patch kernel used on continuous domain for {t.source}->{t.target}")
        if problems:
            raise ModelValidationError(problems)

    @property
    def K(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        return self.states.index(label)

    @property
    def sup_rates(self) -> np.ndarray:
        return np.array([t.sup_rate for t in self.transitions])

    @property
    def lipschitz(self) -> np.ndarray:
        return np.array([t.rate.lipschitz() for t in self.transitions])

    def channels(self):
        """Distinct (kernel shape, dependency) pairs the transitions read.

        Returns ``(kernels, channels, t_channel)`` where ``kernels`` holds one
        representative Kernel per distinct shape, ``channels`` is a list of
        ``(kernel_index, dep_state_index)`` and ``t_channel[t]`` is the channel
        of transition ``t`` (-1 for field-independent transitions).
        """
        kernels, shape_ids, chans, t_channel = [], {}, [], []
        for t in self.transitions:
            if t.depends_on is None:
                t_channel.append(-1)
                continue
            key = t.kernel.shape_key()
            if key not in shape_ids:
                shape_ids[key] = len(kernels)
                kernels.append(t.kernel)
            ch = (shape_ids[key], self.index(t.depends_on))
            if ch not in chans:
                chans.append(ch)
            t_channel.append(chans.index(ch))
        return kernels, chans, np.array(t_channel, dtype=np.int64)


def validate_transitions(states: StateSet, transitions: Sequence[TransitionSpec]) -> list[str]:
    problems = []
    seen = set()
    for t in transitions:
        name = f"{t.source}->{t.target}"
        for lab in (t.source, t.target):
            if lab not in states.labels:
                problems.append(f"{name}: unknown state {lab!r}")
        if t.source == t.target:
            problems.append(f"{name}: self transition")
        if (t.source, t.target) in seen:
            problems.append(f"{name}: duplicate transition pair")
        seen.add((t.source, t.target))
        if t.depends_on is None:
            if t.rate.kind != "constant":
                problems.append(f"{name}: field-independent transition needs a constant rate")
        else:
            if t.depends_on not in states.labels:
                problems.append(f"{name}: depends on unknown state {t.depends_on!r}")
            if t.kernel is None:
                problems.append(f"{name}: field-dependent transition needs a kernel")
        if t.rate.kind == "sigmoid" and t.rate.sigmoid is not None:
            s = t.rate.sigmoid
            if s.lo < 0 or s.hi < 0:
                problems.append(f"{name}: negative sigmoid rate")
    return problems


# ---------------------------------------------------------------------------
# Building models from raw configuration
# ---------------------------------------------------------------------------

FAMILIES = ("gf", "gstf", "generic")


def _sigmoid_from(raw, default: SigmoidParams) -> SigmoidParams:
    if raw is None:
        return default
    if isinstance(raw, SigmoidParams):
        return raw
    vals = {**default.__dict__, **dict(raw)}
    return SigmoidParams(float(vals["lo"]), float(vals["hi"]), float(vals["center"]), float(vals["slope"]))


def build_measure(domain: Mapping) -> tuple[SiteMeasure, str]:
    """Return the site measure and default boundary for a domain section."""
    kind = domain.get("type", "patches")
    if kind == "patches":
        weights = domain.get("weights")
        if weights is None:
            m = int(domain.get("M", 1))
            weights = [1.0 / m] * m
        return SiteMeasure("discrete", "patches", weights=tuple(float(w) for w in weights)), "none"
    length = float(domain.get("L", 1.0))
    measure = domain.get("measure", "uniform")
    if kind == "ring":
        if measure != "uniform":
            raise ModelValidationError([f"ring domain supports a uniform measure, got {measure!r}"])
        return SiteMeasure("uniform", "ring", length=length), domain.get("boundary", "periodic")
    if kind == "interval":
        if measure == "trapezoid":
            sm = SiteMeasure("trapezoid", "interval", length=length, a=float(domain["a"]), b=float(domain["b"]))
        else:
            sm = SiteMeasure("uniform", "interval", length=length)
        return sm, domain.get("boundary", "reflecting")
    raise ModelValidationError([f"unknown domain type {kind!r}"])


def _make_kernel(measure: SiteMeasure, amplitude: float, sigma, matrix=None) -> Kernel:
    if measure.is_discrete:
        m = measure.n_patches
        mat = matrix if matrix is not None else [[1.0] * m for _ in range(m)]
        return Kernel("patch_matrix", amplitude=amplitude, matrix=tuple(tuple(float(v) for v in row) for row in mat))
    if sigma is None:
        raise ModelValidationError(["continuous domains need kernels.sigma"])
    if measure.domain == "ring":
        return Kernel("gaussian_ring", amplitude=amplitude, sigma=float(sigma), length=measure.length)
    return Kernel("gaussian_line", amplitude=amplitude, sigma=float(sigma))


def _initial_law(raw: Mapping | None, labels: Sequence[str]) -> InitialLaw:
    k = len(labels)

    def vec(v):
        if isinstance(v, Mapping):
            unknown = set(v) - set(labels)
            if unknown:
                raise ModelValidationError([f"initial law names unknown states {sorted(unknown)}"])
            return tuple(float(v.get(lab, 0.0)) for lab in labels)
        return tuple(float(x) for x in v)

    if raw is None:
        return InitialLaw(default=tuple([1.0 / k] * k))
    default = vec(raw.get("law", [1.0 / k] * k))
    blocks = tuple((float(b["lo"]), float(b["hi"]), vec(b["law"])) for b in raw.get("blocks", ()))
    per_patch = raw.get("per_patch")
    if per_patch is not None:
        per_patch = tuple(vec(v) for v in per_patch)
    return InitialLaw(default=default, blocks=blocks, per_patch=per_patch, assignment=raw.get("assignment", "iid"))


def _rate_from(raw: Mapping) -> RateFn:
    kind = raw.get("kind", "constant")
    if kind == "sigmoid":
        return RateFn("sigmoid", sigmoid=_sigmoid_from(raw, PHI_DEFAULT))
    return RateFn(kind, value=float(raw.get("value", 0.0)))


def build_model(config: Mapping) -> ModelSpec:
    """Assemble and validate a ModelSpec from a raw configuration mapping.

    ``config`` has sections ``model`` (family and rate parameters),
    ``domain``, ``kernels`` and optionally ``initial``. Built-in families:

    * ``gf``   two-state grass/forest: G->F at the J_F-weighted forest density,
      F->G at phi of the W-weighted grass density.
    * ``gstf`` four-state grass/sapling/savanna tree/forest.
    * ``generic`` an explicit transition list.
    """
    model = dict(config.get("model", {}))
    domain = dict(config.get("domain", {}))
    kernels = dict(config.get("kernels", {}))
    family = model.get("family", "gf")
    if family not in FAMILIES:
        raise ModelValidationError([f"unknown model family {family!r}"])
    measure, boundary = build_measure(domain)
    sigma = kernels.get("sigma")
    problems = []

    def nonneg(name, value):
        if value is not None and float(value) < 0:
            problems.append(f"{name} must be nonnegative, got {value}")
        return value

    try:
        phi = _sigmoid_from(model.get("phi"), PHI_DEFAULT)
    except ModelValidationError as exc:
        problems.extend(f"phi: {p}" for p in exc.problems)
        phi = None
    try:
        omega = _sigmoid_from(model.get("omega"), OMEGA_DEFAULT)
    except ModelValidationError as exc:
        problems.extend(f"omega: {p}" for p in exc.problems)
        omega = None

    jbar = float(nonneg("kernels.jbar", kernels.get("jbar", 1.0)))
    beta = float(nonneg("kernels.beta", kernels.get("beta", 0.4)))
    mu = float(nonneg("model.mu", model.get("mu", DEFAULT_MU)))
    nu = float(nonneg("model.nu", model.get("nu", DEFAULT_NU)))
    if problems:
        raise ModelValidationError(problems)

    W = _make_kernel(measure, 1.0, sigma, kernels.get("W_matrix"))
    JF = _make_kernel(measure, jbar, sigma, kernels.get("J_matrix"))
    params = {"family": family, "jbar": jbar, "sigma": sigma}

    if family == "gf":
        labels = ("G", "F")
        transitions = (
            TransitionSpec("G", "F", RateFn("linear"), JF, "F"),
            TransitionSpec("F", "G", RateFn("sigmoid", sigmoid=phi), W, "G"),
        )
        params["phi"] = phi.__dict__
    elif family == "gstf":
        labels = ("G", "S", "T", "F")
        JS = _make_kernel(measure, beta, sigma, kernels.get("J_matrix"))
        transitions = (
            TransitionSpec("G", "S", RateFn("linear"), JS, "T"),
            TransitionSpec("G", "F", RateFn("linear"), JF, "F"),
            TransitionSpec("S", "F", RateFn("linear"), JF, "F"),
            TransitionSpec("T", "F", RateFn("linear"), JF, "F"),
            TransitionSpec("F", "G", RateFn("sigmoid", sigmoid=phi), W, "G"),
            TransitionSpec("S", "T", RateFn("sigmoid", sigmoid=omega), W, "G"),
            TransitionSpec("S", "G", RateFn("constant", value=mu)),
            TransitionSpec("T", "G", RateFn("constant", value=nu)),
        )
        params.update(beta=beta, mu=mu, nu=nu, phi=phi.__dict__, omega=omega.__dict__)
    else:
        labels = tuple(model["states"])
        rows = []
        for raw in model.get("transitions", ()):
            dep = raw.get("depends_on")
            kern = None
            if dep is not None:
                kraw = raw.get("kernel", {})
                kern = _make_kernel(measure, float(kraw.get("amplitude", 1.0)), kraw.get("sigma", sigma), kraw.get("matrix"))
            try:
                rows.append(TransitionSpec(raw["from"], raw["to"], _rate_from(raw.get("rate", {})), kern, dep))
            except ModelValidationError as exc:
                problems.extend(f"{raw.get('from')}->{raw.get('to')}: {p}" for p in exc.problems)
        if problems:
            raise ModelValidationError(problems)
        transitions = tuple(rows)

    states = StateSet(labels, absorbing_hint="G" if "G" in labels else None)
    init = _initial_law(config.get("initial"), labels)
    return ModelSpec(
        states=states,
        transitions=transitions,
        measure=measure,
        initial_law=init,
        boundary=boundary,
        family=family,
        params=params,
    )


def gf_single_patch(jbar: float, phi: SigmoidParams = PHI_DEFAULT, grass0: float = 0.5) -> ModelSpec:
    """Two-state grass/forest model on one patch with W(1,1) = 1, J_F(1,1) = jbar."""
    return build_model(
        {
            "model": {"family": "gf", "phi": phi.__dict__},
            "domain": {"type": "patches", "weights": [1.0]},
            "kernels": {"jbar": jbar},
            "initial": {"law": {"G": grass0, "F": 1.0 - grass0}},
        }
    )
