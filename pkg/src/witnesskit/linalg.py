"""Dense linear algebra for small multipartite operators.

Operators are plain complex matrices carrying the list of subsystem
dimensions. Party 0 is the leftmost tensor factor (Alice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

RANK_TOL = 1e-10
HERMITIAN_TOL = 1e-12
MAX_TOTAL_DIM = 4096

__all__ = [
    "Operator",
    "SchmidtForm",
    "GeneratorBasis",
    "CoefficientMatrix",
    "as_operator",
    "tensor",
    "partial_transpose",
    "schmidt",
    "generator_basis",
    "expand",
    "hs_inner",
    "hs_norm",
    "bloch_vector",
    "matrix_rank",
    "null_space",
    "projector",
    "random_unitary",
    "random_pure_state",
    "random_hermitian",
    "random_schmidt_state",
    "ProductVector",
    "SeesawResult",
    "seesaw_minimize",
]


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix on a tensor-product space.

    Parameters
    ----------
    mat : array_like
        The matrix, of total dimension ``prod(dims)``.
    dims : sequence of int
        Subsystem dimensions, leftmost factor first.
    hermitian : bool
        If set, Hermiticity is verified to ``HERMITIAN_TOL``.
    """

    mat: np.ndarray
    dims: tuple[int, ...]
    hermitian: bool = False

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"operator must be square, got shape {mat.shape}")
        if any(d < 1 for d in dims) or math.prod(dims) != mat.shape[0]:
            raise DimensionError(f"dims {dims} do not match matrix size {mat.shape[0]}")
        if self.hermitian and np.abs(mat - mat.conj().T).max(initial=0.0) > HERMITIAN_TOL:
            raise ParameterError("operator flagged Hermitian is not Hermitian")
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def nparties(self) -> int:
        return len(self.dims)

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)

    def dag(self) -> "Operator":
        return Operator(self.mat.conj().T, self.dims)

    def __repr__(self):
        return f"Operator(dims={list(self.dims)})\n{self.mat!r}"


def as_operator(op, dims: Sequence[int] | None = None) -> Operator:
    """Coerce ``op`` to an :class:`Operator`.

    Bare arrays without ``dims`` are treated as single-party operators.
    """
    if isinstance(op, Operator):
        if dims is not None and tuple(dims) != op.dims:
            return Operator(op.mat, dims)
        return op
    mat = np.asarray(op, dtype=complex)
    if dims is None:
        dims = (mat.shape[0],)
    return Operator(mat, tuple(dims))


def tensor(*ops) -> Operator:
    """Kronecker product in party order.

    Accepts operators as separate arguments or as a single sequence.
    """
    if len(ops) == 1 and not isinstance(ops[0], (Operator, np.ndarray)):
        ops = tuple(ops[0])
    if not ops:
        raise DimensionError("tensor() needs at least one factor")
    factors = [as_operator(o) for o in ops]
    dims = tuple(d for f in factors for d in f.dims)
    if math.prod(dims) > MAX_TOTAL_DIM:
        raise DimensionError(f"total dimension {math.prod(dims)} exceeds {MAX_TOTAL_DIM}")
    mat = factors[0].mat
    for f in factors[1:]:
        mat = np.kron(mat, f.mat)
    return Operator(mat, dims)


def partial_transpose(op, party: int, dims: Sequence[int] | None = None) -> Operator:
    """Transpose the tensor factor ``party`` and leave the others alone."""
    op = as_operator(op, dims)
    n = op.nparties
    if not 0 <= party < n:
        raise DimensionError(f"party index {party} invalid for {n} parties")
    t = op.mat.reshape(op.dims + op.dims)
    t = np.swapaxes(t, party, n + party)
    return Operator(t.reshape(op.dim, op.dim), op.dims)


@dataclass(frozen=True)
class SchmidtForm:
    coefficients: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    rank: int

    def recompose(self) -> np.ndarray:
        """Return the state vector sum_i s_i |a_i>|b_i>."""
        return np.einsum("i,ai,bi->ab", self.coefficients, self.left_vectors,
                         self.right_vectors).reshape(-1)


def schmidt(psi, dims: Sequence[int], rank_tol: float = RANK_TOL) -> SchmidtForm:
    """Schmidt decomposition of a normalised bipartite vector.

    Coefficients come sorted in non-increasing order; the columns of
    ``left_vectors``/``right_vectors`` are the matching orthonormal vectors.
    The rank counts coefficients above ``rank_tol`` relative to the largest.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if len(dims) != 2:
        raise DimensionError("Schmidt decomposition needs exactly two parties")
    da, db = int(dims[0]), int(dims[1])
    if da * db != psi.size:
        raise DimensionError(f"dims {tuple(dims)} do not match vector of length {psi.size}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
        raise ParameterError("Schmidt decomposition expects a normalised vector")
    u, s, vh = np.linalg.svd(psi.reshape(da, db))
    rank = int(np.sum(s > rank_tol * s[0]))
    return SchmidtForm(s, u[:, : s.size], vh.T[:, : s.size], rank)


@dataclass(frozen=True)
class GeneratorBasis:
    """Hilbert-Schmidt orthonormal Hermitian basis G_0..G_{N^2-1}.

    G_0 is proportional to the identity and the remaining operators are the
    traceless generators, ordered as the usual Pauli / Gell-Mann sequence.
    """

    N: int
    operators: np.ndarray  # shape (N*N, N, N)
    convention: str = "orthonormal"

    def __len__(self):
        return self.operators.shape[0]

    def __getitem__(self, i):
        return self.operators[i]

    def __iter__(self):
        return iter(self.operators)

    def gram(self) -> np.ndarray:
        ops = self.operators
        return np.einsum("iab,jba->ij", ops, ops).real


def generator_basis(N: int, convention: str = "orthonormal") -> GeneratorBasis:
    """Generalised Gell-Mann basis of Hermitian N x N operators.

    With ``convention="orthonormal"`` every element has Tr(G_i G_j) = delta_ij,
    so G_0 = 1/sqrt(N) and, for N = 2, G_k = sigma_k / sqrt(2).
    ``convention="physics"`` rescales to G_0 = 1 and the raw Pauli / Gell-Mann
    matrices (Tr G_k^2 = 2), which is how published decompositions are printed.
    """
    if N < 2:
        raise ParameterError("generator basis needs N >= 2")
    if convention not in ("orthonormal", "physics"):
        raise ParameterError(f"unknown convention {convention!r}")
    s = 1.0 / math.sqrt(2.0)
    ops = [np.eye(N, dtype=complex) / math.sqrt(N)]
    for k in range(1, N):
        for j in range(k):
            sym = np.zeros((N, N), dtype=complex)
            sym[j, k] = sym[k, j] = s
            asym = np.zeros((N, N), dtype=complex)
            asym[j, k] = -1j * s
            asym[k, j] = 1j * s
            ops += [sym, asym]
        diag = np.zeros(N)
        diag[:k] = 1.0
        diag[k] = -k
        ops.append(np.diag(diag / math.sqrt(k * (k + 1))).astype(complex))
    ops = np.array(ops)
    if convention == "physics":
        ops[0] *= math.sqrt(N)
        ops[1:] *= math.sqrt(2.0)
    return GeneratorBasis(N, ops, convention)


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product Tr(A B^dagger)."""
    a, b = np.asarray(a), np.asarray(b)
    return complex(np.vdot(b, a))


def hs_norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a)))


@dataclass(frozen=True)
class CoefficientMatrix:
    """Expansion of a bipartite operator in a product of generator bases."""

    lam: np.ndarray
    bases: tuple[GeneratorBasis, GeneratorBasis]

    def reduced(self) -> np.ndarray:
        """Block with the identity row and column removed."""
        return self.lam[1:, 1:]

    def recompose(self) -> np.ndarray:
        ga, gb = (b.operators for b in self.bases)
        na, nb = self.bases[0].N, self.bases[1].N
        m = np.einsum("ij,iab,jcd->acbd", self.lam, ga, gb)
        return m.reshape(na * nb, na * nb)


def expand(op, dims: Sequence[int] | None = None, convention: str = "orthonormal") -> CoefficientMatrix:
    """Coefficients lambda_ij with op = sum_ij lambda_ij G^A_i (x) G^B_j.

    In the orthonormal convention lambda_ij = <G_i (x) G_j, op>_HS. The
    physics convention divides by the generator norms so the coefficients
    multiply raw Pauli / Gell-Mann matrices.
    """
    op = as_operator(op, dims)
    if op.nparties != 2:
        raise DimensionError("expand() needs a bipartite operator")
    na, nb = op.dims
    ba, bb = generator_basis(na, convention), generator_basis(nb, convention)
    t = op.mat.reshape(na, nb, na, nb)
    lam = np.einsum("ica,jdb,abcd->ij", ba.operators, bb.operators, t)
    if convention == "physics":
        lam = lam / np.outer(np.einsum("iab,iba->i", ba.operators, ba.operators),
                             np.einsum("iab,iba->i", bb.operators, bb.operators))
    if np.abs(lam.imag).max(initial=0.0) < 1e-13:
        lam = lam.real.copy()
    return CoefficientMatrix(lam, (ba, bb))


def bloch_vector(op, basis: GeneratorBasis | None = None) -> np.ndarray:
    """Bloch coordinates (f_0, f_1, ...) of a single-party operator.

    The identity coefficient f_0 multiplies the bare identity, the others
    multiply the orthonormal traceless generators, so a pure-state projector
    has f_0 = 1/N and sum_{i>=1} f_i^2 = 1 - 1/N.
    """
    op = np.asarray(op, dtype=complex)
    n = op.shape[0]
    if basis is None:
        basis = generator_basis(n)
    f = np.einsum("iab,ba->i", basis.operators, op).real
    f[0] = np.trace(op).real / n
    return f


def matrix_rank(m, tol: float = RANK_TOL) -> int:
    """Numerical rank with singular values measured relative to the largest."""
    s = np.linalg.svd(np.atleast_2d(np.asarray(m)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def null_space(m, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the kernel of a Hermitian matrix."""
    m = np.asarray(m)
    w, v = np.linalg.eigh(m)
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    return v[:, np.abs(w) <= tol * scale]


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase correction."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (z + z.conj().T) / 2


def random_schmidt_state(dims: Sequence[int], rank: int, rng: np.random.Generator,
                         coefficients: Iterable[float] | None = None) -> np.ndarray:
    """Random bipartite pure state with prescribed Schmidt rank."""
    da, db = dims
    if not 1 <= rank <= min(da, db):
        raise ParameterError(f"Schmidt rank {rank} impossible in {da}x{db}")
    if coefficients is None:
        s = rng.uniform(0.2, 1.0, rank)
    else:
        s = np.asarray(list(coefficients), dtype=float)
    s = s / np.linalg.norm(s)
    ua, ub = random_unitary(da, rng), random_unitary(db, rng)
    return np.einsum("i,ai,bi->ab", s, ua[:, :rank], ub[:, :rank]).reshape(-1)


@dataclass(frozen=True)
class ProductVector:
    """A product vector given by one factor per party."""

    factors: tuple[np.ndarray, ...]
    residual: float = 0.0
    label: str = ""

    @property
    def vector(self) -> np.ndarray:
        v = self.factors[0]
        for f in self.factors[1:]:
            v = np.kron(v, f)
        return v

    def normalized(self) -> "ProductVector":
        return ProductVector(tuple(f / np.linalg.norm(f) for f in self.factors),
                             self.residual, self.label)


@dataclass(frozen=True)
class SeesawResult:
    values: np.ndarray        # final value per restart
    left: np.ndarray          # (restarts, dA)
    right: np.ndarray         # (restarts, dB)
    sweeps: np.ndarray        # sweeps used per restart
    converged: np.ndarray     # bool per restart

    @property
    def best(self) -> int:
        return int(np.argmin(self.values))


def _lowest_vectors(m: np.ndarray, denom: np.ndarray | None):
    """Lowest (generalised) eigenpair for a stack of small Hermitian matrices."""
    if denom is None:
        w, v = np.linalg.eigh(m)
        return w[:, 0], v[:, :, 0]
    chol = np.linalg.cholesky(denom)
    linv = np.linalg.inv(chol)
    c = linv @ m @ np.conj(np.swapaxes(linv, 1, 2))
    w, y = np.linalg.eigh(c)
    x = np.einsum("rji,rj->ri", np.conj(linv), y[:, :, 0])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return w[:, 0], x


def seesaw_minimize(op, dims: Sequence[int], rng: np.random.Generator, *,
                    denominator=None, restarts: int = 500, max_sweeps: int = 10_000,
                    abs_tol: float = 1e-12, rel_tol: float = 0.0,
                    target: float = -np.inf) -> SeesawResult:
    """Minimise <e,f|op|e,f> (or its ratio to <e,f|denominator|e,f>) over
    unit product vectors by alternating lowest-eigenvector updates.

    All restarts advance together as one batch; each half step is the exact
    minimiser over one factor, so the value never increases. A restart stops
    when the per-sweep decrease falls below ``max(abs_tol, rel_tol*|value|)``
    or the value drops to ``target``.
    """
    da, db = (int(d) for d in dims)
    w4 = np.asarray(op, dtype=complex).reshape(da, db, da, db)
    d4 = None if denominator is None else np.asarray(denominator, dtype=complex).reshape(da, db, da, db)
    f = rng.standard_normal((restarts, db)) + 1j * rng.standard_normal((restarts, db))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    e = np.zeros((restarts, da), dtype=complex)
    values = np.full(restarts, np.inf)
    sweeps = np.zeros(restarts, dtype=int)
    active = np.ones(restarts, dtype=bool)
    for sweep in range(1, max_sweeps + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        fa = f[idx]
        m = np.einsum("ibjd,rb,rd->rij", w4, fa.conj(), fa)
        den = None if d4 is None else np.einsum("ibjd,rb,rd->rij", d4, fa.conj(), fa)
        _, ea = _lowest_vectors(m, den)
        m = np.einsum("aibj,ra,rb->rij", w4, ea.conj(), ea)
        den = None if d4 is None else np.einsum("aibj,ra,rb->rij", d4, ea.conj(), ea)
        val, fa = _lowest_vectors(m, den)
        e[idx], f[idx] = ea, fa
        prev = values[idx]
        values[idx] = val
        sweeps[idx] = sweep
        delta = np.abs(prev - val)
        done = (delta <= np.maximum(abs_tol, rel_tol * np.abs(val))) | (val <= target)
        active[idx[done]] = False
    return SeesawResult(values, e, f, sweeps, ~active)
