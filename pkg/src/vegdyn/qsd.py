"""Quasi-stationary distribution of the single-patch grass/forest chain.

The chain counts forest sites k in {0, ..., N}; k = 0 (all grass) absorbs.
Restricted to k = 1..N its sub-generator Q is tridiagonal. The QSD is the
L1-normalized left eigenvector of Q for the eigenvalue of largest real part
-rho, and rho is the asymptotic absorption rate.

Row k of the default ("printed") matrix is

    sub   (k/N) phi((N-k)/N)
    diag  -(k/N) (phi((N-k)/N) + jbar (N-k)/N)
    super (k jbar / N) ((N-k)/N)

which is the SSA generator with every rate divided by N. ``time_scale="ssa"``
gives the unscaled generator (same eigenvectors, rho multiplied by N).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import PHI_DEFAULT, SigmoidParams, eval_sigmoid

TIME_SCALES = ("printed", "ssa")


class QSDPreconditionError(ValueError):
    """phi(0) must be positive for a QSD to exist."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class RestrictedGenerator:
    N: int
    jbar: float
    phi: SigmoidParams
    diag: np.ndarray
    sup: np.ndarray  # Q[k, k+1]
    sub: np.ndarray  # Q[k+1, k]
    absorb: float  # rate from k=1 into the absorbing state
    time_scale: str = "printed"

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def left_apply(self, x: np.ndarray) -> np.ndarray:
        """x Q for a row vector x."""
        y = x * self.diag
        y[1:] += x[:-1] * self.sup
        y[:-1] += x[1:] * self.sub
        return y

    @property
    def grass_fraction(self) -> np.ndarray:
        k = np.arange(1, self.N + 1)
        return (self.N - k) / self.N


@dataclass
class QsdResult:
    rho: float
    qsd: np.ndarray
    residual: float
    iterations: int
    log_rho: float = float("nan")


def build_restricted_generator(N: int, jbar: float, phi: SigmoidParams = PHI_DEFAULT,
                               time_scale: str = "printed") -> RestrictedGenerator:
    if N < 1:
        raise ValueError("N must be at least 1")
    if not jbar > 0:
        raise ValueError("jbar must be positive")
    if time_scale not in TIME_SCALES:
        raise ValueError(f"time_scale must be one of {TIME_SCALES}")
    if not eval_sigmoid(phi, 0.0) > 0:
        raise QSDPreconditionError("phi(0) must be positive for a quasi-stationary distribution to exist")
    k = np.arange(1, N + 1, dtype=float)
    g = (N - k) / N  # grass fraction in row k
    death = (k / N) * eval_sigmoid(phi, g)
    birth = (k * jbar / N) * g
    if np.any(death <= 0):
        raise QSDPreconditionError("forest loss rate vanishes at some state; the restricted chain is reducible")
    diag = -(death + birth)
    sup = birth[:-1]
    sub = death[1:]
    absorb = float(death[0])
    scale = float(N) if time_scale == "ssa" else 1.0
    return RestrictedGenerator(N, float(jbar), phi, np.atleast_1d(diag * scale), sup * scale, sub * scale,
                               absorb * scale, time_scale)


def _rates(gen: RestrictedGenerator):
    """Per-row death (k -> k-1, including absorption from k=1) and birth (k -> k+1) rates."""
    death = np.empty(gen.N)
    death[0] = gen.absorb
    death[1:] = gen.sub
    birth = np.zeros(gen.N)
    birth[:-1] = gen.sup
    return death, birth


@njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _slack_thomas_log(death, birth, log_rhs):
    """Solve (-Q^T) z = rhs for positive rhs, in log scale, without subtractions.

    -Q^T is an M-matrix whose column sums are known exactly: the absorption
    rate in column 1 and zero elsewhere. Tracking the column slack through the
    elimination gives every pivot as a sum of positive terms,
    p_j = birth_j + death_j * slack_{j-1} / p_{j-1}, and both substitution
    sweeps only add positive terms. Each entry of z is then accurate to a few
    ulps, even when the smallest eigenvalue is far below the matrix entries;
    the log scale keeps tails far below the float range representable.
    """
    n = death.shape[0]
    log_piv = np.empty(n)
    log_slack = math.log(death[0])
    log_piv[0] = _logaddexp(math.log(birth[0]) if birth[0] > 0 else -np.inf, log_slack)
    for j in range(1, n):
        log_carry = math.log(death[j]) + log_slack - log_piv[j - 1]
        log_b = math.log(birth[j]) if birth[j] > 0 else -np.inf
        log_piv[j] = _logaddexp(log_b, log_carry)
        log_slack = log_carry
    z = log_rhs.copy()
    for j in range(1, n):
        z[j] = _logaddexp(z[j], math.log(birth[j - 1]) - log_piv[j - 1] + z[j - 1])
    z[n - 1] -= log_piv[n - 1]
    for j in range(n - 2, -1, -1):
        z[j] = _logaddexp(z[j], math.log(death[j + 1]) + z[j + 1]) - log_piv[j]
    return z


def dominant_eigenpair(gen: RestrictedGenerator, tol: float = 1e-10, max_iter: int = 10_000) -> QsdResult:
    """Left eigenpair of Q with the eigenvalue of largest real part (inverse iteration on Q^T).

    Iterates are kept in log scale so that QSD tails and rho remain accurate
    far below machine precision (rho underflows to 0.0 only below ~1e-308;
    ``log_rho`` is always finite). Converged once the residual is below
    ``tol`` and rho has stopped moving.
    """
    death, birth = _rates(gen)
    n = gen.N
    log_x = np.full(n, -math.log(n))
    residual = np.inf
    log_rho_prev = np.inf
    for it in range(1, max_iter + 1):
        log_y = _slack_thomas_log(death, birth, log_x)
        log_x = log_y - np.logaddexp.reduce(log_y)
        # Interior and last rows of Q sum to zero, so sum(xQ) = -x_1 * absorb.
        log_rho = math.log(gen.absorb) + log_x[0]
        x = np.exp(log_x)
        rho = math.exp(log_rho)
        residual = float(np.max(np.abs(gen.left_apply(x) + rho * x)))
        if residual < tol and abs(log_rho - log_rho_prev) <= 1e-13:
            break
        log_rho_prev = log_rho
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_iter} iterations", residual)
    return QsdResult(rho, x, residual, it, log_rho)


@dataclass
class SweepRow:
    N: int
    jbar: float
    rho: float
    qsd: np.ndarray
    residual: float
    log_rho: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    monotone_violations: list[tuple[int, float, float]]  # (N, jbar_lo, jbar_hi) where rho increased

    def rho_table(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        out = {}
        for N in sorted({r.N for r in self.rows}):
            rs = [r for r in self.rows if r.N == N]
            out[N] = (np.array([r.jbar for r in rs]), np.array([r.rho for r in rs]))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "jbar", "rho"])
            for r in self.rows:
                w.writerow([r.N, repr(r.jbar), repr(r.rho)])

    def qsd_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "jbar", "grass_fraction", "mass"])
            for r in self.rows:
                k = np.arange(1, r.N + 1)
                for gf, mass in zip((r.N - k) / r.N, r.qsd):
                    w.writerow([r.N, repr(r.jbar), repr(float(gf)), repr(float(mass))])


def qsd_sweep(N_list, jbar_grid, phi: SigmoidParams = PHI_DEFAULT, time_scale: str = "printed",
              tol: float = 1e-10) -> SweepResult:
    """Dominant eigenpair for every (N, jbar); flags any increase of rho along jbar."""
    N_list = list(N_list)
    jbar_grid = list(jbar_grid)
    if not N_list or not jbar_grid:
        raise ValueError("sweep grids must be nonempty")
    rows, violations = [], []
    for N in N_list:
        prev = None
        for jb in sorted(jbar_grid):
            res = dominant_eigenpair(build_restricted_generator(N, jb, phi, time_scale), tol)
            rows.append(SweepRow(int(N), float(jb), res.rho, res.qsd, res.residual, res.log_rho))
            if prev is not None and res.log_rho > prev[1] + 1e-9:
                violations.append((int(N), prev[0], float(jb)))
            prev = (float(jb), res.log_rho)
    return SweepResult(rows, violations)
