"""State catalog, the PPT test, noise-ball sampling and kernel product vectors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidStateError, ParameterError
from .linalg import (
    Operator,
    ProductVector,
    as_operator,
    generator_basis,
    null_space,
    partial_transpose,
    projector,
    schmidt,
    seesaw_minimize,
)

log = logging.getLogger(__name__)

PPT_TOL = 1e-10
BALL_DIM = 15
MAX_NOISE_RADIUS = 1.0 / math.sqrt(12.0)

__all__ = [
    "DensityMatrix",
    "NoiseBallSpec",
    "ChessboardParams",
    "PPT_TOL",
    "MAX_NOISE_RADIUS",
    "bell",
    "ghz_state",
    "w_state",
    "pure_state",
    "maximally_mixed",
    "noisy_state",
    "min_pt_eigenvalue",
    "is_ppt",
    "unit_ball_sample",
    "ball_offsets",
    "sample_ball_state",
    "upb_vectors",
    "upb_completion_vectors",
    "upb_state",
    "chessboard_vectors",
    "chessboard_state",
    "chessboard_kernel_basis",
    "chessboard_product_vectors",
    "horodecki_state",
    "kernel_product_vectors",
]


@dataclass(frozen=True, eq=False, repr=False)
class DensityMatrix(Operator):
    """Hermitian, positive semidefinite, unit-trace operator.

    ``label`` and ``params`` record which catalog constructor produced the
    state, so later steps can pick closed-form shortcuts.
    """

    label: str = ""
    params: object = None

    def __post_init__(self):
        super().__post_init__()
        m = self.mat
        if np.abs(m - m.conj().T).max() > 1e-12:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-12:
            raise InvalidStateError(f"density matrix has trace {np.trace(m).real!r}")
        if np.linalg.eigvalsh(m)[0] < -PPT_TOL:
            raise InvalidStateError("density matrix has a negative eigenvalue")

    def __repr__(self):
        tag = f" label={self.label!r}" if self.label else ""
        return f"DensityMatrix(dims={list(self.dims)}{tag})"


def _as_density(rho, dims=None) -> Operator:
    if isinstance(rho, Operator) and dims is None:
        return rho
    rho = as_operator(rho, dims)
    if rho.nparties == 1 and dims is None:
        n = rho.dim
        root = int(round(math.sqrt(n)))
        if root * root == n:
            rho = Operator(rho.mat, (root, root))
    return rho


def bell(kind: str = "psi+") -> np.ndarray:
    """Two-qubit Bell vector: one of ``phi+``, ``phi-``, ``psi+``, ``psi-``."""
    s = 1.0 / math.sqrt(2.0)
    table = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    try:
        return np.array(table[kind], dtype=complex)
    except KeyError:
        raise ParameterError(f"unknown Bell state {kind!r}") from None


def ghz_state() -> np.ndarray:
    v = np.zeros(8, dtype=complex)
    v[0] = v[7] = 1.0 / math.sqrt(2.0)
    return v


def w_state() -> np.ndarray:
    v = np.zeros(8, dtype=complex)
    v[[4, 2, 1]] = 1.0 / math.sqrt(3.0)
    return v


def pure_state(psi, dims: Sequence[int], label: str = "") -> DensityMatrix:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(projector(psi), tuple(dims), label=label)


def maximally_mixed(dims: Sequence[int]) -> DensityMatrix:
    n = math.prod(dims)
    return DensityMatrix(np.eye(n) / n, tuple(dims), label="maximally-mixed")


def noisy_state(psi, p: float, sigma, dims: Sequence[int] | None = None) -> DensityMatrix:
    """p |psi><psi| + (1 - p) sigma."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"mixing weight p={p} outside [0, 1]")
    sigma = _as_density(sigma, dims)
    if not isinstance(sigma, DensityMatrix):
        sigma = DensityMatrix(sigma.mat, sigma.dims)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    mat = p * projector(psi) + (1.0 - p) * sigma.mat
    return DensityMatrix(mat, sigma.dims, label="noisy", params={"p": p})


def min_pt_eigenvalue(rho, dims: Sequence[int] | None = None, party: int = 1) -> float:
    rho = _as_density(rho, dims)
    return float(np.linalg.eigvalsh(partial_transpose(rho, party).mat)[0])


def is_ppt(rho, dims: Sequence[int] | None = None, tol: float = PPT_TOL) -> bool:
    """Positivity of the partial transpose on the second party.

    For 2x2 and 2x3 systems this decides separability; beyond that a True
    answer only means PPT.
    """
    return min_pt_eigenvalue(rho, dims) >= -tol


@dataclass(frozen=True)
class NoiseBallSpec:
    """Noise model: ||sigma - 1/4|| <= d around a state mixed with weight p."""

    p: float
    d: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p={self.p} outside [0, 1]")
        if not 0.0 <= self.d <= MAX_NOISE_RADIUS + 1e-15:
            raise ParameterError(f"d={self.d} outside [0, 1/sqrt(12)]")


def unit_ball_sample(n: int, rng: np.random.Generator, dim: int = BALL_DIM) -> np.ndarray:
    """``n`` points uniform (Lebesgue) in the unit ball of R^dim."""
    x = rng.standard_normal((n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / dim)
    return x * r[:, None]


def ball_offsets(coords: np.ndarray, d: float) -> np.ndarray:
    """Traceless 4x4 perturbations d * sum_i x_i G_i for unit-ball coordinates."""
    g = generator_basis(4).operators[1:]
    return d * np.einsum("ni,iab->nab", np.atleast_2d(coords), g)


def _check_max_entangled_qubits(psi: np.ndarray) -> None:
    if psi.size != 4:
        raise ParameterError("noise-ball sampling is defined for two-qubit targets")
    s = schmidt(psi / np.linalg.norm(psi), (2, 2)).coefficients
    if abs(s[0] - s[1]) > 1e-10:
        raise ParameterError("noise-ball sampling needs a maximally entangled target")


def sample_ball_state(spec: NoiseBallSpec, psi=None, rng: np.random.Generator | None = None) -> DensityMatrix:
    """Draw rho = p|psi><psi| + (1-p)(1/4 + Delta) with 1/4 + Delta uniform in B(1/4, d).

    The direction of Delta is uniform on the unit sphere of traceless
    Hermitian 4x4 matrices and its norm has density proportional to r^14.
    """
    psi = bell("psi+") if psi is None else np.asarray(psi, dtype=complex).reshape(-1)
    _check_max_entangled_qubits(psi)
    rng = np.random.default_rng() if rng is None else rng
    delta = ball_offsets(unit_ball_sample(1, rng), spec.d)[0]
    sigma = np.eye(4) / 4 + delta
    mat = spec.p * projector(psi) + (1 - spec.p) * sigma
    return DensityMatrix(mat, (2, 2), label="noise-ball", params=spec)


# -- unextendible product basis ---------------------------------------------

def _basis(i: int, n: int = 3) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[i] = 1.0
    return v


def upb_vectors() -> list[ProductVector]:
    """The five 'Tiles' product vectors psi_0..psi_4."""
    e0, e1, e2 = (_basis(i) for i in range(3))
    s = 1.0 / math.sqrt(2.0)
    u = (e0 + e1 + e2) / math.sqrt(3.0)
    pairs = [
        (e0, s * (e0 - e1)),
        (s * (e0 - e1), e2),
        (e2, s * (e1 - e2)),
        (s * (e1 - e2), e0),
        (u, u),
    ]
    return [ProductVector(p, label=f"psi{i}") for i, p in enumerate(pairs)]


def upb_completion_vectors() -> list[ProductVector]:
    """psi_5..psi_9: with psi_0..psi_3 they form an orthonormal product basis."""
    e0, e1, e2 = (_basis(i) for i in range(3))
    s = 1.0 / math.sqrt(2.0)
    pairs = [
        (e0, s * (e0 + e1)),
        (s * (e0 + e1), e2),
        (e2, s * (e1 + e2)),
        (s * (e1 + e2), e0),
        (e1, e1),
    ]
    return [ProductVector(p, label=f"psi{i + 5}") for i, p in enumerate(pairs)]


def upb_state() -> DensityMatrix:
    """(1 - sum_i |psi_i><psi_i|) / 4, the bound entangled UPB state."""
    p = sum(projector(v.vector) for v in upb_vectors())
    return DensityMatrix((np.eye(9) - p) / 4, (3, 3), label="upb")


# -- chessboard states --------------------------------------------------------

@dataclass(frozen=True)
class ChessboardParams:
    """Real chessboard parameters; s and t are fixed by rho = rho^{T_A}."""

    m: float
    n: float
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("m", "n", "a", "c"):
            if getattr(self, name) == 0:
                raise ParameterError(f"chessboard parameter {name} must be nonzero")
        if self.a ** 2 + self.b ** 2 == 0:
            raise ParameterError("chessboard needs a^2 + b^2 > 0")

    @property
    def s(self) -> float:
        return self.a * self.c / self.n

    @property
    def t(self) -> float:
        return self.a * self.d / self.m

    @classmethod
    def random(cls, rng: np.random.Generator, low: float = 0.3, high: float = 2.0) -> "ChessboardParams":
        signs = rng.choice([-1.0, 1.0], size=6)
        return cls(*(signs * rng.uniform(low, high, 6)))


def chessboard_vectors(params: ChessboardParams) -> list[np.ndarray]:
    """V_1..V_4 in the row-major |ij> ordering.

    V_4 places -a on |10>, as required for the matrix display and the kernel
    vector k_5 to be consistent.
    """
    m, n, a, b, c, d = (params.m, params.n, params.a, params.b, params.c, params.d)
    s, t = params.s, params.t
    return [
        np.array([m, 0, s, 0, n, 0, 0, 0, 0], dtype=complex),
        np.array([0, a, 0, b, 0, c, 0, 0, 0], dtype=complex),
        np.array([n, 0, 0, 0, -m, 0, t, 0, 0], dtype=complex),
        np.array([0, b, 0, -a, 0, 0, 0, d, 0], dtype=complex),
    ]


def chessboard_state(params: ChessboardParams) -> DensityMatrix:
    vs = chessboard_vectors(params)
    norm = sum(np.vdot(v, v).real for v in vs)
    mat = sum(projector(v) for v in vs) / norm
    return DensityMatrix(mat, (3, 3), label="chessboard", params=params)


def chessboard_kernel_basis(params: ChessboardParams) -> list[np.ndarray]:
    """Unnormalised kernel vectors k_1..k_5."""
    m, n, a, b, c, d = (params.m, params.n, params.a, params.b, params.c, params.d)
    ab2 = a * a + b * b
    return [
        np.array([0, 0, 0, 0, 0, 0, 0, 0, 1], dtype=complex),
        np.array([m / n, 0, -(m * m + n * n) / (a * c), 0, 1, 0, 0, 0, 0], dtype=complex),
        np.array([0, -a * c / ab2, 0, -b * c / ab2, 0, 1, 0, 0, 0], dtype=complex),
        np.array([-a * d / (m * n), 0, d / c, 0, 0, 0, 1, 0, 0], dtype=complex),
        np.array([0, -b * d / ab2, 0, a * d / ab2, 0, 0, 0, 1, 0], dtype=complex),
    ]


@dataclass(frozen=True)
class BranchFailure:
    label: str
    reason: str


@dataclass
class ChessboardSolutions:
    vectors: list[ProductVector] = field(default_factory=list)
    failures: list[BranchFailure] = field(default_factory=list)


def chessboard_product_vectors(params: ChessboardParams) -> ChessboardSolutions:
    """Closed-form product vectors in the chessboard kernel.

    Returns |22>, k_4' = k_4 - (mn/ac) k_1 and the four branches
    (1, +-g2, g1) x (+-m^2 g2/(mn + ad g1), 1, -+(a^2+b^2+bd g1)/(ac g2))
    for both roots g1 of the quadratic. Branches that hit a zero
    denominator are reported in ``failures`` instead of raising.
    """
    m, n, a, b, c, d = (params.m, params.n, params.a, params.b, params.c, params.d)
    out = ChessboardSolutions()
    e = [_basis(i) for i in range(3)]
    out.vectors.append(ProductVector((e[2], e[2]), label="k1"))
    out.vectors.append(ProductVector(
        (np.array([-a * d / (m * n), 0, 1], dtype=complex),
         np.array([1, 0, -m * n / (a * c)], dtype=complex)), label="k4'"))

    alpha1 = (m * m + n * n) * b * m * n - (a * a + b * b) * a * m * m
    alpha3 = a * d * d * n * n
    alpha13 = (m * m + n * n) * (m * n + a * b) * d - 2 * a * b * d * m * m
    if alpha3 == 0:
        for label in ("g0+", "g0-", "g1+", "g1-"):
            out.failures.append(BranchFailure(label, "alpha_3 = 0 (d = 0)"))
        return out
    root = np.sqrt(complex(alpha13 ** 2 - 4 * alpha1 * alpha3))
    for k, sgn in enumerate((1.0, -1.0)):
        g1 = (-alpha13 + sgn * root) / (2 * alpha3)
        g2 = np.sqrt((b * m * n + d * (m * n + a * b) * g1 + a * d * d * g1 ** 2) / (a * m * m))
        den = m * n + a * d * g1
        for pm, tag in ((1.0, "+"), (-1.0, "-")):
            label = f"g{k}{tag}"
            if abs(den) < 1e-14 or abs(g2) < 1e-14:
                out.failures.append(BranchFailure(label, "zero denominator"))
                continue
            left = np.array([1, pm * g2, g1], dtype=complex)
            right = np.array([pm * m * m * g2 / den, 1,
                              -pm * (a * a + b * b + b * d * g1) / (a * c * g2)], dtype=complex)
            out.vectors.append(ProductVector((left, right), label=label))
    rho = chessboard_state(params).mat
    scored = []
    for v in out.vectors:
        v = v.normalized()
        scored.append(ProductVector(v.factors, float(np.linalg.norm(rho @ v.vector)), v.label))
    out.vectors = scored
    return out


# -- Horodecki 2x4 states -----------------------------------------------------

def horodecki_state(b: float) -> DensityMatrix:
    """P. Horodecki's 2x4 family, PPT for every b in [0, 1]."""
    if not 0.0 <= b <= 1.0:
        raise ParameterError(f"b={b} outside [0, 1]")
    m = np.zeros((8, 8))
    for i in range(7):
        m[i, i] = b
    for i in range(3):
        m[i, i + 5] = m[i + 5, i] = b
    m[4, 4] = m[7, 7] = (1 + b) / 2
    m[4, 7] = m[7, 4] = math.sqrt(1 - b * b) / 2
    return DensityMatrix(m / (7 * b + 1), (2, 4), label="horodecki", params={"b": b})


# -- product vectors in kernels ----------------------------------------------

def kernel_product_vectors(rho, dims: Sequence[int] | None = None, *,
                           restarts: int = 200, tol: float = 1e-8,
                           rng: np.random.Generator | None = None,
                           max_sweeps: int = 5000) -> list[ProductVector]:
    """Product vectors |e>|f> annihilated by ``rho``.

    Chessboard states use the closed-form solutions. Otherwise the distance
    of |e>|f> from the kernel, <e,f|1 - P_ker|e,f>, is minimised by
    alternating lowest-eigenvector updates from random starts; hits with
    residual below ``tol`` are kept and deduplicated up to phase.
    """
    rho = _as_density(rho, dims)
    params = getattr(rho, "params", None)
    if getattr(rho, "label", "") == "chessboard" and isinstance(params, ChessboardParams):
        sol = chessboard_product_vectors(params)
        for fail in sol.failures:
            log.warning("chessboard branch %s skipped: %s", fail.label, fail.reason)
        return [v for v in sol.vectors if v.residual <= tol]
    if rho.nparties != 2:
        raise ParameterError("kernel product-vector search needs a bipartite state")
    kern = null_space(rho.mat)
    if kern.shape[1] == 0:
        return []
    rng = np.random.default_rng(0) if rng is None else rng
    range_proj = np.eye(rho.dim) - kern @ kern.conj().T
    res = seesaw_minimize(range_proj, rho.dims, rng, restarts=restarts, max_sweeps=max_sweeps,
                          abs_tol=0.0, rel_tol=1e-10, target=(tol * 1e-2) ** 2)
    found: list[ProductVector] = []
    vecs = np.einsum("ra,rb->rab", res.left, res.right).reshape(len(res.values), -1)
    resid = np.linalg.norm(vecs @ range_proj.T, axis=1)
    for r in np.argsort(resid):
        if resid[r] > tol:
            break
        cand = ProductVector((res.left[r], res.right[r]), float(resid[r]))
        v = vecs[r]
        if all(abs(np.vdot(w.vector, v)) <= 1 - 1e-6 for w in found):
            found.append(cand)
    return found
