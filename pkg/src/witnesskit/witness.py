"""Witness operators, edge-witness epsilon optimisation and certification thresholds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    NoNPTWitnessError,
    OptimizationError,
    ParameterError,
    ThresholdError,
    TrivialKernelError,
)
from .linalg import (
    Operator,
    as_operator,
    hs_norm,
    null_space,
    partial_transpose,
    projector,
    seesaw_minimize,
)
from .states import (
    MAX_NOISE_RADIUS,
    PPT_TOL,
    DensityMatrix,
    ghz_state,
    kernel_product_vectors,
    upb_completion_vectors,
    upb_vectors,
    w_state,
)

log = logging.getLogger(__name__)

W0_MATRIX = 0.5 * np.array([[1, 0, 0, 0],
                            [0, 0, -1, 0],
                            [0, -1, 0, 0],
                            [0, 0, 0, 1]], dtype=float)

__all__ = [
    "W0_MATRIX",
    "Witness",
    "Verdict",
    "EpsilonResult",
    "npt_witness",
    "ghz_witness",
    "w_witness_1",
    "w_witness_2",
    "edge_prewitness",
    "edge_witness",
    "optimize_epsilon",
    "upb_primed_denominator",
    "upb_noise_threshold",
    "tau_threshold",
    "theta_threshold",
    "tau_threshold_geometric",
    "theta_threshold_geometric",
    "alpha_to_q",
    "q_to_alpha",
    "classify",
    "zero_plane_distance",
]


@dataclass(frozen=True, eq=False)
class Witness:
    """A Hermitian witness operator with a record of how it was built."""

    op: Operator
    kind: str
    provenance: dict = field(default_factory=dict)
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in {"npt", "ghz", "w1", "w2", "edge"}:
            raise ParameterError(f"unknown witness kind {self.kind!r}")
        m = self.op.mat
        if np.abs(m - m.conj().T).max() > 1e-12:
            raise ParameterError("witness operator is not Hermitian")

    @property
    def mat(self) -> np.ndarray:
        return self.op.mat

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims

    def value(self, rho) -> float:
        """Tr(W rho)."""
        r = rho.mat if isinstance(rho, Operator) else np.asarray(rho)
        return float(np.real(np.vdot(self.op.mat.conj().T, r)))

    def is_w0(self) -> bool:
        return self.op.dim == 4 and np.allclose(self.op.mat, W0_MATRIX, atol=1e-12)


@dataclass(frozen=True)
class Verdict:
    value: float
    classification: str
    threshold_used: str | None = None
    threshold: float | None = None


@dataclass(frozen=True)
class EpsilonResult:
    value: float
    left: np.ndarray
    right: np.ndarray
    restarts: int
    converged: int


def _canonical_phase(v: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    idx = np.flatnonzero(np.abs(v) > tol)
    if idx.size == 0:
        return v
    return v * (abs(v[idx[0]]) / v[idx[0]])


def _lex_key(v: np.ndarray) -> tuple:
    return tuple(np.round(np.column_stack([v.real, v.imag]).ravel(), 9))


def npt_witness(rho, dims: Sequence[int] | None = None, party: int = 1,
                tol: float = PPT_TOL) -> Witness:
    """W = |phi><phi|^T for the most negative eigenvector phi of rho^T.

    Degenerate minima are resolved deterministically: each candidate
    eigenvector gets its first significant entry made real-positive and the
    lexicographically largest one wins.
    """
    rho = as_operator(rho, dims) if not isinstance(rho, Operator) else rho
    if rho.nparties < 2:
        raise ParameterError("npt_witness needs a multipartite state")
    rt = partial_transpose(rho, party).mat
    w, v = np.linalg.eigh(rt)
    if w[0] >= -tol:
        raise NoNPTWitnessError(f"state is PPT (min eigenvalue {w[0]:.3e}); no NPT witness exists")
    cands = [_canonical_phase(v[:, k]) for k in np.flatnonzero(w <= w[0] + 1e-12)]
    phi = max(cands, key=_lex_key)
    op = partial_transpose(Operator(projector(phi), rho.dims, hermitian=True), party)
    return Witness(Operator(op.mat, rho.dims, hermitian=True), "npt",
                   {"eigenvalue": float(w[0]), "eigenvector": phi, "party": party})


def _three_qubit(mat: np.ndarray, kind: str, note: str) -> Witness:
    return Witness(Operator(mat, (2, 2, 2), hermitian=True), kind, {"definition": note})


def ghz_witness() -> Witness:
    g = ghz_state()
    return _three_qubit(0.75 * np.eye(8) - projector(g), "ghz", "3/4 - |GHZ><GHZ|")


def w_witness_1() -> Witness:
    return _three_qubit(2.0 / 3.0 * np.eye(8) - projector(w_state()), "w1", "2/3 - |W><W|")


def w_witness_2() -> Witness:
    return _three_qubit(0.5 * np.eye(8) - projector(ghz_state()), "w2", "1/2 - |GHZ><GHZ|")


# -- edge witnesses -----------------------------------------------------------

def _independent(vectors: list[np.ndarray], tol: float = 1e-8) -> list[int]:
    keep: list[int] = []
    for i, v in enumerate(vectors):
        trial = np.column_stack([vectors[j] for j in keep] + [v])
        if np.linalg.matrix_rank(trial, tol) == len(keep) + 1:
            keep.append(i)
    return keep


def edge_prewitness(delta, dims: Sequence[int] | None = None, *, party: int = 0,
                    use_product_vectors: bool = False, dedup_tol: float = 1e-10,
                    rng: np.random.Generator | None = None) -> tuple[Operator, dict]:
    """W-bar = P + Q^T built from the kernels of delta and delta^T.

    With ``use_product_vectors`` the kernel projectors are replaced by sums of
    projectors onto linearly independent product vectors found in each kernel,
    which are strictly positive on the kernel. If P coincides with Q^T only one
    copy is kept.
    """
    delta = delta if isinstance(delta, Operator) else as_operator(delta, dims)
    dt = partial_transpose(delta, party)

    def kernel_op(m: Operator, name: str) -> np.ndarray:
        if use_product_vectors:
            pv = kernel_product_vectors(m, rng=rng)
            vecs = [v.vector / np.linalg.norm(v.vector) for v in pv]
            idx = _independent(vecs)
            if not idx:
                raise TrivialKernelError(f"no product vectors in the kernel of {name}")
            return sum(projector(vecs[i]) for i in idx)
        k = null_space(m.mat)
        if k.shape[1] == 0:
            raise TrivialKernelError(f"kernel of {name} is trivial")
        return k @ k.conj().T

    p = kernel_op(delta, "delta")
    if np.abs(dt.mat - delta.mat).max() <= 1e-12:
        q = p
    else:
        q = kernel_op(Operator(dt.mat, delta.dims), "delta^T")
    qt = partial_transpose(Operator(q, delta.dims), party).mat
    same = np.abs(p - qt).max() <= dedup_tol
    wbar = p if same else p + qt
    wbar = 0.5 * (wbar + wbar.conj().T)
    info = {"P_rank": int(round(np.trace(p).real)), "Q_rank": int(round(np.trace(q).real)),
            "merged": bool(same), "party": party, "product_vectors": use_product_vectors}
    return Operator(wbar, delta.dims, hermitian=True), info


def optimize_epsilon(wbar, dims: Sequence[int], *, denominator=None, restarts: int = 500,
                     rng: np.random.Generator | None = None, max_sweeps: int = 10_000,
                     tol: float = 1e-12) -> EpsilonResult:
    """inf over product vectors of <e,f|W-bar|e,f> (or its ratio to <e,f|I|e,f>).

    Seesaw from ``restarts`` random starts; returns the smallest value found
    and the product vector attaining it.
    """
    if len(dims) != 2:
        raise ParameterError("epsilon optimisation is implemented for bipartite operators")
    w = wbar.mat if isinstance(wbar, Operator) else np.asarray(wbar)
    den = None
    if denominator is not None:
        den = denominator.mat if isinstance(denominator, Operator) else np.asarray(denominator)
    rng = np.random.default_rng(0) if rng is None else rng
    res = seesaw_minimize(w, dims, rng, denominator=den, restarts=restarts,
                          max_sweeps=max_sweeps, abs_tol=tol)
    if not res.converged.any():
        raise OptimizationError(f"no restart converged within {max_sweeps} sweeps")
    vals = np.where(res.converged, res.values, np.inf)
    best = int(np.argmin(vals))
    value = float(vals[best])
    if value < -1e-10:
        log.warning("negative product expectation %.3e: input is not a valid pre-witness", value)
    return EpsilonResult(value, res.left[best], res.right[best], restarts, int(res.converged.sum()))


def upb_primed_denominator() -> Operator:
    """Sum of the projectors onto psi_0..psi_8 (UPB plus four partner vectors)."""
    vecs = upb_vectors() + upb_completion_vectors()[:4]
    return Operator(sum(projector(v.vector) for v in vecs), (3, 3), hermitian=True)


def edge_witness(delta, dims: Sequence[int] | None = None, *, epsilon="optimize",
                 denominator=None, restarts: int = 500, party: int = 0,
                 use_product_vectors: bool | None = None,
                 rng: np.random.Generator | None = None) -> Witness:
    """W = W-bar - epsilon * I for a PPT edge state delta.

    ``epsilon`` is a positive number, ``"optimize"`` (I = 1) or ``"primed"``
    (I = ``denominator``, defaulting to the nine-projector operator for the
    UPB state).
    """
    delta = delta if isinstance(delta, Operator) else as_operator(delta, dims)
    if use_product_vectors is None:
        use_product_vectors = getattr(delta, "label", "") == "chessboard"
    wbar, info = edge_prewitness(delta, party=party, use_product_vectors=use_product_vectors, rng=rng)
    n = wbar.dim
    if epsilon == "primed":
        if denominator is None:
            if getattr(delta, "label", "") != "upb":
                raise ParameterError("primed epsilon needs an explicit denominator operator")
            denominator = upb_primed_denominator()
        den = denominator.mat if isinstance(denominator, Operator) else np.asarray(denominator)
        res = optimize_epsilon(wbar, wbar.dims, denominator=den, restarts=restarts, rng=rng)
        eps, sub, mode = res.value, den, "primed"
    elif epsilon == "optimize":
        res = optimize_epsilon(wbar, wbar.dims, restarts=restarts, rng=rng)
        eps, sub, mode = res.value, np.eye(n), "optimize"
    else:
        eps, sub, mode = float(epsilon), np.eye(n), "given"
    if not eps > 0:
        raise OptimizationError(f"epsilon={eps:.3e} is not positive: not an edge state or optimizer failure")
    info.update({"epsilon_mode": mode, "wbar": wbar.mat, "subtracted": sub,
                 "state": getattr(delta, "label", "")})
    return Witness(Operator(wbar.mat - eps * sub, wbar.dims, hermitian=True), "edge", info, eps)


def upb_noise_threshold(epsilon: float) -> float:
    """Mixing weight above which p rho_UPB + (1-p)/9 is detected by W_UPB."""
    return 1.0 - 9.0 * epsilon / 5.0


# -- thresholds for the Bell scenario ------------------------------------------

def q_to_alpha(q):
    return (1.0 - 3.0 * np.asarray(q)) / 4.0


def alpha_to_q(alpha):
    return 1.0 / 3.0 - 4.0 / 3.0 * np.asarray(alpha)


def _check_d(d: float) -> None:
    if not 0.0 <= d <= MAX_NOISE_RADIUS + 1e-15:
        raise ParameterError(f"d={d} outside [0, 1/sqrt(12)]")


def tau_threshold(d: float) -> float:
    """Smallest value of Tr(W0 rho) that certifies separability when only d is known."""
    _check_d(d)
    rad = max((1.0 / 12.0 - d * d) * (0.75 - d * d), 0.0)
    return 0.25 - d * d - math.sqrt(rad)


def theta_threshold(p: float, d: float) -> float:
    """Certification threshold when the mixing weight p is also known."""
    _check_d(d)
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p={p} outside (0, 1]")
    return 0.25 - 1.0 / (24.0 * p) - 3.0 * p / 8.0 + (1.0 - p) ** 2 * d * d / (2.0 * p)


def _r2_xp(q):
    return 1.0 / 12.0 - 0.75 * q * q


def _r2_bp(q, p, d):
    return (1.0 - p) ** 2 * d * d - 0.75 * (q - p) ** 2


def _r2_kp(q, d):
    res = minimize_scalar(lambda p: -_r2_bp(q, p, d), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-14})
    return max(-res.fun, _r2_bp(q, 0.0, d), _r2_bp(q, 1.0, d))


def tau_threshold_geometric(d: float) -> float:
    """tau from the plane where the noise cone's section outgrows the separable ball.

    Solves r_KP(q)^2 = r_XP(q)^2 by root bracketing, the radius of KP being
    maximised over p numerically, and maps the larger root to alpha.
    """
    _check_d(d)
    if d == 0.0:
        return 0.0
    if abs(d - MAX_NOISE_RADIUS) < 1e-12:
        return 1.0 / 6.0
    f = lambda q: _r2_kp(q, d) - _r2_xp(q)
    q_hi = 1.0 / math.sqrt(3.0)
    grid = np.linspace(0.0, q_hi, 400)
    vals = np.array([f(q) for q in grid])
    sign = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if sign.size == 0:
        raise ThresholdError(f"no crossing of the section radii for d={d}")
    k = sign[-1]
    q = brentq(f, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15)
    return float(q_to_alpha(q))


def theta_threshold_geometric(p: float, d: float) -> float:
    """theta from the plane where the ball around rho(p,0) leaves the separable ball."""
    _check_d(d)
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"p={p} outside (0, 1]")
    q = brentq(lambda q: _r2_bp(q, p, d) - _r2_xp(q), -10.0, 10.0, xtol=1e-15, rtol=1e-15)
    return float(q_to_alpha(q))


def classify(value: float, *, d: float | None = None, p: float | None = None,
             witness: Witness | None = None) -> Verdict:
    """Three-way verdict from a measured Tr(W0 rho).

    Negative values certify entanglement. Separability is certified at or
    above theta(p, d) when p is known, else at or above tau(d).
    """
    if witness is not None and (d is not None) and not witness.is_w0():
        raise ThresholdError("tau/theta thresholds apply only to the two-qubit W0 witness")
    if value < 0:
        return Verdict(float(value), "entangled")
    if d is None:
        return Verdict(float(value), "inconclusive")
    if p is not None:
        name, thr = "theta", theta_threshold(p, d)
    else:
        name, thr = "tau", tau_threshold(d)
    label = "separable_certified" if value >= thr else "inconclusive"
    return Verdict(float(value), label, name, thr)


def zero_plane_distance(witness, rho) -> float:
    """HS distance from rho to the unit-trace hyperplane Tr(W sigma) = 0."""
    w = witness.mat if isinstance(witness, Witness) else np.asarray(witness)
    r = rho.mat if isinstance(rho, Operator) else np.asarray(rho)
    n = w.shape[0]
    val = np.real(np.trace(w @ r))
    return float(abs(val) / hs_norm(w - np.trace(w).real / n * np.eye(n)))
