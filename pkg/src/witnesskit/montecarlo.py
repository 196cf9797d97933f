"""Random-state error analysis for separability calls made with the W0 witness.

States are rho(p, d) = p|psi+><psi+| + (1-p)(1/4 + d X) with X uniform in the
unit ball of traceless Hermitian 4x4 matrices. One fixed ball sample is drawn
per seed and rescaled for every (p, d), so runs are reproducible and cells
can be evaluated in any order.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .linalg import partial_transpose, projector, Operator
from .states import MAX_NOISE_RADIUS, PPT_TOL, ball_offsets, bell, unit_ball_sample
from .witness import W0_MATRIX, tau_threshold, theta_threshold

__all__ = [
    "plane_parameter",
    "ball_volumes",
    "analytical_bound",
    "analytical_bound_numeric",
    "BallSample",
    "ErrorCurve",
    "FalseRate",
    "SoundnessReport",
    "draw_sample",
    "error_curve",
    "false_separable_rate",
    "soundness_scan",
    "curve_csv",
    "worker_count",
]

_VOL_PREFACTOR = math.pi ** 7 / math.factorial(7)
DEFAULT_P_GRID = np.linspace(0.0, 1.0, 101)


def worker_count() -> int:
    """Thread cap from WITNESSKIT_THREADS, defaulting to the logical core count."""
    env = os.environ.get("WITNESSKIT_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = max(1, int(env))
        except ValueError:
            raise ParameterError(f"WITNESSKIT_THREADS={env!r} is not an integer") from None
    return n


def plane_parameter(alpha):
    """q such that Tr(W0 rho(q, 0)) = alpha."""
    return 1.0 / 3.0 - 4.0 / 3.0 * np.asarray(alpha, dtype=float)


def ball_volumes(q: float, p: float, d: float) -> tuple[float, float]:
    """Volumes of the 14-dim sections of B(rho(p,0), (1-p)d) and of the
    separable ball B(1/4, 1/sqrt(12)) by the plane with parameter q."""
    r_bp = (1 - p) ** 2 * d * d - 0.75 * (p - q) ** 2
    r_xp = 1.0 / 12.0 - 0.75 * q * q
    vol = lambda r2: _VOL_PREFACTOR * r2 ** 7 if r2 > 0 else 0.0
    return vol(r_bp), vol(r_xp)


def analytical_bound(alpha, d: float):
    """E_-(alpha, d) = 1 - (alpha(alpha - 1/2)(d^2 - 3/4))^7 / (d(alpha + 1/2))^14."""
    alpha = np.asarray(alpha, dtype=float)
    if not 0.0 < d <= MAX_NOISE_RADIUS + 1e-15:
        raise ParameterError(f"d={d} outside (0, 1/sqrt(12)]")
    tau = tau_threshold(d)
    if np.any(alpha < 0) or np.any(alpha > tau):
        raise ParameterError(f"alpha outside [0, tau(d)={tau:.6g}]")
    val = 1.0 - (alpha * (alpha - 0.5) * (d * d - 0.75)) ** 7 / (d * (alpha + 0.5)) ** 14
    val = np.clip(val, 0.0, 1.0)  # roundoff near alpha = tau
    return float(val) if val.ndim == 0 else val


def analytical_bound_numeric(alpha: float, d: float, p_grid: np.ndarray | None = None) -> float:
    """sup over p of 1 - vol(XP)/vol(BP), evaluated on a grid of p."""
    p_grid = np.linspace(0.0, 1.0, 200_001) if p_grid is None else np.asarray(p_grid)
    q = float(plane_parameter(alpha))
    r_bp = (1 - p_grid) ** 2 * d * d - 0.75 * (p_grid - q) ** 2
    r_xp = 1.0 / 12.0 - 0.75 * q * q
    ok = r_bp > 0
    if not ok.any():
        return 0.0
    return float(np.max(1.0 - (r_xp / r_bp[ok]) ** 7))


@dataclass(frozen=True)
class BallSample:
    """Fixed unit-ball draw with the W0 values and partial transposes it needs."""

    coords: np.ndarray        # (n, 15)
    w0_unit: np.ndarray       # Tr(W0 X) for each unit offset X
    pt_unit: np.ndarray       # X^{T_B}, (n, 4, 4)
    seed: int | None

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def draw_sample(n_samples: int, seed: int | None) -> BallSample:
    if n_samples <= 0:
        raise ParameterError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    coords = unit_ball_sample(n_samples, rng)
    offs = ball_offsets(coords, 1.0)
    w0 = np.einsum("ab,nba->n", W0_MATRIX, offs).real
    pt = offs.reshape(-1, 2, 2, 2, 2).transpose(0, 1, 4, 3, 2).reshape(-1, 4, 4)
    return BallSample(coords, w0, pt, seed)


_PSI = bell("psi+")
_PSI_PT = partial_transpose(Operator(projector(_PSI), (2, 2)), 1).mat


def _cell(sample: BallSample, p: float, d: float, tol: float):
    """W0 values and NPT flags for every sample state at (p, d)."""
    values = -0.5 * p + (1 - p) * (0.25 + d * sample.w0_unit)
    if d == 0.0 or p == 1.0:
        base = p * _PSI_PT + (1 - p) * np.eye(4) / 4
        npt = np.full(sample.n, np.linalg.eigvalsh(base)[0] < -tol)
        return values, npt
    mats = (1 - p) * d * sample.pt_unit
    mats += p * _PSI_PT + (1 - p) * np.eye(4) / 4
    npt = np.linalg.eigvalsh(mats)[:, 0] < -tol
    return values, npt


def _map_cells(fn, p_grid, threads):
    threads = worker_count() if threads is None else max(1, int(threads))
    if threads == 1:
        return [fn(p) for p in p_grid]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, p_grid))


@dataclass(frozen=True)
class ErrorCurve:
    d: float
    alpha_lo: np.ndarray
    alpha_hi: np.ndarray
    e_minus: np.ndarray       # NaN where every p left the bin empty
    E_minus: np.ndarray       # analytical bound at the lower bin edge
    n_in_bin: np.ndarray      # samples in the bin at the maximising p
    sigma: np.ndarray         # binomial standard error at the maximising p
    p_at_max: np.ndarray
    n_samples: int
    seed: int | None
    p_grid: np.ndarray = field(repr=False, default_factory=lambda: DEFAULT_P_GRID)

    def sigma_at_bound(self) -> np.ndarray:
        """Binomial standard error of a bin fraction whose true value is E_-."""
        e = np.clip(np.nan_to_num(self.E_minus, nan=1.0), 0.0, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n_in_bin > 0, np.sqrt(e * (1 - e) / np.maximum(self.n_in_bin, 1)), np.nan)

    def bound_violations(self, k: float = 3.0) -> np.ndarray:
        """Indices of bins with e_- > E_- + k sigma (sigma: the larger of the
        plug-in and at-bound binomial errors); empty bins are skipped."""
        sig = np.fmax(np.nan_to_num(self.sigma), np.nan_to_num(self.sigma_at_bound()))
        ok = ~np.isnan(self.e_minus) & ~np.isnan(self.E_minus)
        return np.flatnonzero(ok & (self.e_minus > self.E_minus + k * sig))


def error_curve(d: float, n_samples: int = 50_000, *, p_grid: Sequence[float] | None = None,
                n_bins: int = 50, alpha_edges: Sequence[float] | None = None,
                seed: int | None = 0, sample: BallSample | None = None,
                tol: float = PPT_TOL, threads: int | None = None) -> ErrorCurve:
    """Empirical sup-over-p error of calling rho separable from its W0 value.

    For each p and each alpha bin, e_w is the fraction of NPT states among the
    sampled states whose W0 value falls in the bin; e_- is its maximum over p.
    Default bins split [0, tau(d)] into ``n_bins`` equal parts.
    """
    if not 0.0 <= d <= MAX_NOISE_RADIUS + 1e-15:
        raise ParameterError(f"d={d} outside [0, 1/sqrt(12)]")
    p_grid = DEFAULT_P_GRID if p_grid is None else np.asarray(p_grid, dtype=float)
    if alpha_edges is None:
        tau = tau_threshold(d)
        if tau <= 0:
            raise ParameterError("tau(d) = 0: pass explicit alpha_edges")
        edges = np.linspace(0.0, tau, n_bins + 1)
    else:
        edges = np.asarray(alpha_edges, dtype=float)
    nb = edges.size - 1
    sample = draw_sample(n_samples, seed) if sample is None else sample

    def per_p(p):
        values, npt = _cell(sample, float(p), d, tol)
        idx = np.searchsorted(edges, values, side="right") - 1
        idx[values == edges[-1]] = nb - 1
        inside = (idx >= 0) & (idx < nb)
        tot = np.bincount(idx[inside], minlength=nb)
        bad = np.bincount(idx[inside], weights=npt[inside].astype(float), minlength=nb)
        return tot, bad

    cells = _map_cells(per_p, p_grid, threads)
    tot = np.array([c[0] for c in cells])
    bad = np.array([c[1] for c in cells])
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(tot > 0, bad / np.maximum(tot, 1), np.nan)
    e_minus = np.full(nb, np.nan)
    n_in = np.zeros(nb, dtype=int)
    p_at = np.full(nb, np.nan)
    for k in range(nb):
        col = frac[:, k]
        if np.all(np.isnan(col)):
            continue
        j = int(np.nanargmax(col))
        e_minus[k], n_in[k], p_at[k] = col[j], tot[j, k], p_grid[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma = np.where(n_in > 0, np.sqrt(np.nan_to_num(e_minus * (1 - e_minus)) / np.maximum(n_in, 1)), np.nan)
    lo, hi = edges[:-1], edges[1:]
    if d > 0:
        tau = tau_threshold(d)
        bound = np.array([analytical_bound(a, d) if 0 <= a <= tau else np.nan for a in lo])
    else:
        bound = np.where(lo > 0, 0.0, np.nan)
    return ErrorCurve(d, lo, hi, e_minus, bound, n_in, sigma, p_at, sample.n, sample.seed, p_grid)


@dataclass(frozen=True)
class FalseRate:
    d: float
    rate: float
    p_at_max: float
    n_called_separable: int
    sigma: float


def false_separable_rate(d: float, n_samples: int = 50_000, *, seed: int | None = 0,
                         p_grid: Sequence[float] | None = None, sample: BallSample | None = None,
                         min_count: int = 100, tol: float = PPT_TOL,
                         threads: int | None = None) -> FalseRate:
    """sup over p of P(NPT | Tr(W0 rho) >= 0).

    Only p values with at least ``min_count`` states called separable enter
    the supremum; thinner cells give ratios dominated by sampling noise.
    """
    if not 0.0 <= d <= MAX_NOISE_RADIUS + 1e-15:
        raise ParameterError(f"d={d} outside [0, 1/sqrt(12)]")
    p_grid = DEFAULT_P_GRID if p_grid is None else np.asarray(p_grid, dtype=float)
    sample = draw_sample(n_samples, seed) if sample is None else sample

    def per_p(p):
        values, npt = _cell(sample, float(p), d, tol)
        sep = values >= 0
        return int(sep.sum()), int((npt & sep).sum())

    cells = _map_cells(per_p, p_grid, threads)
    best = (0.0, float("nan"), 0)
    for p, (n, k) in zip(p_grid, cells):
        if n >= min_count and k / n > best[0]:
            best = (k / n, float(p), n)
    rate, p_at, n = best
    if n == 0:
        n = max((c[0] for c in cells), default=0)
    sigma = math.sqrt(rate * (1 - rate) / n) if n else float("nan")
    return FalseRate(d, rate, p_at, n, sigma)


@dataclass(frozen=True)
class SoundnessReport:
    n_states: int
    tau_violations: int
    theta_violations: int
    witness_violations: int
    certified_tau: int
    certified_theta: int


def soundness_scan(d_values: Sequence[float], n_samples: int = 10_000, *,
                   p_grid: Sequence[float] | None = None, seed: int | None = 0,
                   tol: float = PPT_TOL, threads: int | None = None) -> SoundnessReport:
    """Count sampled states that contradict the certification rules.

    A violation is an NPT state with W0 value >= tau(d), an NPT state with
    value >= theta(p, d), or a PPT state with negative value.
    """
    p_grid = DEFAULT_P_GRID if p_grid is None else np.asarray(p_grid, dtype=float)
    sample = draw_sample(n_samples, seed)
    totals = np.zeros(6, dtype=np.int64)
    for d in d_values:
        tau = tau_threshold(d)

        def per_p(p, d=d, tau=tau):
            values, npt = _cell(sample, float(p), d, tol)
            theta = theta_threshold(p, d) if p > 0 else np.inf
            cert_t = values >= tau
            cert_th = values >= theta
            return np.array([values.size, int((npt & cert_t).sum()), int((npt & cert_th).sum()),
                             int(((values < 0) & ~npt).sum()), int(cert_t.sum()), int(cert_th.sum())])

        totals += np.sum(_map_cells(per_p, p_grid, threads), axis=0)
    return SoundnessReport(*(int(x) for x in totals))


def curve_csv(curve: ErrorCurve) -> str:
    """CSV with one row per alpha bin; empty bins have blank e_minus."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "alpha", "alpha_hi", "e_minus", "E_minus", "n_in_bin", "sigma", "p_at_max"])
    fmt = lambda x: "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))
    for k in range(curve.alpha_lo.size):
        w.writerow([repr(float(curve.d)), fmt(curve.alpha_lo[k]), fmt(curve.alpha_hi[k]),
                    fmt(curve.e_minus[k]), fmt(curve.E_minus[k]), int(curve.n_in_bin[k]),
                    fmt(curve.sigma[k]), fmt(curve.p_at_max[k])])
    return buf.getvalue()
