"""Local decompositions of witnesses: measurement settings, product-vector and
tensor-product forms, constructive setting counts and rank lower bounds."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import DimensionError, ParameterError
from .linalg import (
    RANK_TOL,
    Operator,
    as_operator,
    expand,
    generator_basis,
    hs_norm,
    matrix_rank,
    partial_transpose,
    projector,
)
from .states import upb_completion_vectors, upb_vectors

__all__ = [
    "Setting",
    "LocalDecomposition",
    "ProductVectorDecomposition",
    "TensorDecomposition",
    "PAULI",
    "operator_basis_decomposition",
    "tensor_to_local",
    "sigma_tau_decomposition",
    "two_qubit_three_settings",
    "onp_five_projectors",
    "round_robin_pairing",
    "theorem1_ons",
    "settings_lower_bound",
    "pauli_coefficients",
    "pauli_decomposition",
    "ghz_decomposition",
    "w1_decomposition",
    "w2_decomposition",
    "upb_product_vectors",
    "upb_witness_settings",
    "product_vectors_to_settings",
    "transpose_party",
    "verify",
    "prune_settings",
    "merge_settings",
    "count_settings",
    "decomposition_to_dict",
    "decomposition_from_dict",
]

UNITARY_TOL = 1e-12
PRUNE_TOL = 1e-12
_SAME = 1 - 1e-9

PAULI = {
    "1": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_S = 1.0 / math.sqrt(2.0)
# eigenbasis (columns) and eigenvalues of each Pauli letter
_PAULI_BASES = {
    "z": (np.eye(2, dtype=complex), np.array([1.0, -1.0])),
    "x": (_S * np.array([[1, 1], [1, -1]], dtype=complex), np.array([1.0, -1.0])),
    "y": (_S * np.array([[1, 1], [1j, -1j]], dtype=complex), np.array([1.0, -1.0])),
}


# -- data types ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Setting:
    """One local von Neumann setting: a basis per party and real outcome weights.

    ``bases[k]`` holds party k's basis vectors as columns; ``coeffs`` has one
    axis per party and realises sum c_{kl..} |A_k><A_k| x |B_l><B_l| x ...
    """

    bases: tuple
    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        bases = tuple(np.asarray(b, dtype=complex) for b in self.bases)
        for b in bases:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise DimensionError("setting bases must be square matrices")
            if np.abs(b.conj().T @ b - np.eye(b.shape[0])).max() > UNITARY_TOL:
                raise ParameterError("setting basis is not orthonormal")
        coeffs = np.asarray(self.coeffs)
        if np.iscomplexobj(coeffs):
            if np.abs(coeffs.imag).max(initial=0.0) > 1e-12:
                raise ParameterError("setting coefficients must be real")
            coeffs = coeffs.real
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != tuple(b.shape[0] for b in bases):
            raise DimensionError(f"coefficient shape {coeffs.shape} does not match bases")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.bases)

    def unitary(self) -> np.ndarray:
        return reduce(np.kron, self.bases)

    def operator(self) -> np.ndarray:
        u = self.unitary()
        return (u * self.coeffs.ravel()) @ u.conj().T

    def probabilities(self, rho) -> np.ndarray:
        """Outcome probabilities <A_k B_l ..|rho|A_k B_l ..>, shaped like ``coeffs``."""
        r = rho.mat if isinstance(rho, Operator) else np.asarray(rho)
        u = self.unitary()
        p = np.einsum("ai,ab,bi->i", u.conj(), r, u).real
        return p.reshape(self.dims)


@dataclass(frozen=True, eq=False)
class LocalDecomposition:
    settings: tuple
    dims: tuple
    target: Operator | None = None
    note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "settings", tuple(self.settings))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        for s in self.settings:
            if s.dims != self.dims:
                raise DimensionError(f"setting dims {s.dims} differ from {self.dims}")

    def __len__(self) -> int:
        return len(self.settings)

    def recompose(self) -> np.ndarray:
        n = math.prod(self.dims)
        out = np.zeros((n, n), dtype=complex)
        for s in self.settings:
            out += s.operator()
        return out

    def residual(self, target=None) -> float:
        target = self.target if target is None else target
        if target is None:
            raise ParameterError("no target to compare with")
        t = target.mat if isinstance(target, Operator) else np.asarray(target)
        return hs_norm(self.recompose() - t)


@dataclass(frozen=True, eq=False)
class ProductVectorDecomposition:
    """sum_i c_i |e_i><e_i| x |f_i><f_i| x ..."""

    terms: tuple
    dims: tuple
    normalized: bool = True

    def __post_init__(self):
        terms = tuple((float(c), tuple(np.asarray(v, dtype=complex) for v in vs)) for c, vs in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "dims", tuple(self.dims))

    def __len__(self) -> int:
        return len(self.terms)

    def recompose(self) -> np.ndarray:
        n = math.prod(self.dims)
        out = np.zeros((n, n), dtype=complex)
        for c, vs in self.terms:
            out += c * projector(reduce(np.kron, vs))
        return out

    def residual(self, target) -> float:
        t = target.mat if isinstance(target, Operator) else np.asarray(target)
        return hs_norm(self.recompose() - t)


@dataclass(frozen=True, eq=False)
class TensorDecomposition:
    """sum_i gamma_i A_i x B_i x ..."""

    terms: tuple
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(g), tuple(np.asarray(o) for o in ops))
                                                for g, ops in self.terms))
        object.__setattr__(self, "dims", tuple(self.dims))

    def __len__(self) -> int:
        return len(self.terms)

    def recompose(self) -> np.ndarray:
        n = math.prod(self.dims)
        out = np.zeros((n, n), dtype=complex)
        for g, ops in self.terms:
            out += g * reduce(np.kron, ops)
        return out

    def residual(self, target) -> float:
        t = target.mat if isinstance(target, Operator) else np.asarray(target)
        return hs_norm(self.recompose() - t)


# -- helpers --------------------------------------------------------------------

def _op(target, dims=None) -> Operator:
    if isinstance(target, Operator):
        return target
    m = getattr(target, "op", None)
    if isinstance(m, Operator):
        return m
    op = as_operator(target, dims)
    if dims is None and op.nparties == 1:
        n = int(round(math.sqrt(op.dim)))
        if n * n == op.dim:
            op = Operator(op.mat, (n, n))
    return op


def _complete_basis(vectors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Orthonormal basis whose leading columns are the given orthonormal vectors."""
    cols = [np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in vectors]
    for k in range(n):
        if len(cols) == n:
            break
        e = np.zeros(n, dtype=complex)
        e[k] = 1.0
        for c in cols:
            e = e - np.vdot(c, e) * c
        nrm = np.linalg.norm(e)
        if nrm > 1e-6:
            cols.append(e / nrm)
    basis = np.column_stack(cols)
    q, r = np.linalg.qr(basis)
    # undo QR sign/phase changes so the given vectors are kept verbatim
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return q


def _svd(psi, dims):
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if len(dims) != 2:
        raise DimensionError("a bipartite state is required")
    da, db = dims
    if psi.size != da * db:
        raise DimensionError(f"state of length {psi.size} does not fit dims {tuple(dims)}")
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-12:
        raise ParameterError(f"state is not normalised (norm {nrm:.15f})")
    u, s, vh = np.linalg.svd(psi.reshape(da, db), full_matrices=True)
    return u, s, vh.T


def _schmidt_rank(s, tol=RANK_TOL) -> int:
    return int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0


# -- tensor-product forms -------------------------------------------------------

def _alice_ops(basis, n: int) -> list[np.ndarray]:
    if basis is None or basis == "orthonormal":
        return list(generator_basis(n).operators)
    if basis == "pauli-half":
        if n != 2:
            raise DimensionError("the Pauli basis with sigma_0 = 1/2 needs a qubit first party")
        return [0.5 * PAULI["1"], PAULI["x"], PAULI["y"], PAULI["z"]]
    ops = [np.asarray(o, dtype=complex) for o in basis]
    if len(ops) != n * n:
        raise ParameterError(f"Alice basis needs {n * n} operators")
    return ops


def operator_basis_decomposition(target, dims: Sequence[int] | None = None, *,
                                 alice_basis=None, drop_tol: float = PRUNE_TOL) -> TensorDecomposition:
    """W = sum_i A_i x B~_i for a Hermitian operator basis {A_i} of the first party.

    ``alice_basis`` is ``None``/``"orthonormal"`` (generator basis),
    ``"pauli-half"`` ({1/2, sigma_x, sigma_y, sigma_z}) or an explicit list.
    B~_i = sum_j (Gram^-1)_ij Tr_A[(A_j x 1) W]; vanishing terms are dropped.
    """
    op = _op(target, dims)
    if op.nparties != 2:
        raise DimensionError("operator_basis_decomposition needs a bipartite operator")
    da, db = op.dims
    ops = _alice_ops(alice_basis, da)
    gram = np.array([[np.trace(a.conj().T @ b) for b in ops] for a in ops])
    t = op.mat.reshape(da, db, da, db)
    # b_j = Tr_A[(A_j^dag x 1) W]
    b = np.stack([np.einsum("ca,abcd->bd", a.conj().T, t) for a in ops])
    tau = np.einsum("ij,jbd->ibd", np.linalg.inv(gram.T), b)
    terms = []
    for a, tt in zip(ops, tau):
        if hs_norm(tt) > drop_tol:
            if np.abs(tt.imag).max() < 1e-13:
                tt = tt.real
            terms.append((1.0, (a, tt)))
    return TensorDecomposition(terms, op.dims)


def sigma_tau_decomposition(target, dims: Sequence[int] | None = None) -> TensorDecomposition:
    """W = sum_{i=0}^{3} sigma_i x tau~_i on a 2xN system with sigma_0 = 1/2."""
    return operator_basis_decomposition(target, dims, alice_basis="pauli-half", drop_tol=-1.0)


def tensor_to_local(td: TensorDecomposition, target=None) -> LocalDecomposition:
    """One setting per term: each factor is measured in its own eigenbasis."""
    settings = []
    for g, ops in td.terms:
        bases, vals = [], []
        for o in ops:
            w, v = np.linalg.eigh(np.asarray(o, dtype=complex))
            bases.append(v)
            vals.append(w)
        coeffs = g * reduce(np.multiply.outer, vals)
        settings.append(Setting(tuple(bases), coeffs))
    return LocalDecomposition(settings, td.dims, _op(target) if target is not None else None)


# -- two-qubit constructions ------------------------------------------------------

def two_qubit_three_settings(psi) -> LocalDecomposition:
    """|psi><psi|^{T_B} measured with z-z, x-x and y-y settings in the Schmidt frame."""
    u, s, v = _svd(psi, (2, 2))
    a, b = s
    vb = v.conj()
    def rot(frame, local):
        return frame @ local
    zb, xb, yb = (_PAULI_BASES[k][0] for k in "zxy")
    settings = [
        Setting((rot(u, zb), rot(vb, zb)), np.diag([a * a, b * b]), "z"),
        Setting((rot(u, xb), rot(vb, xb)), a * b * np.eye(2), "x"),
        Setting((rot(u, yb), rot(vb, yb)), -a * b * np.array([[0, 1], [1, 0]]), "y"),
    ]
    target = partial_transpose(Operator(projector(np.asarray(psi).reshape(-1)), (2, 2)), 1)
    return LocalDecomposition(settings, (2, 2), target, "three settings")


def onp_five_projectors(psi) -> ProductVectorDecomposition:
    """Five product projectors realising |psi><psi|^{T_B} for an entangled two-qubit psi.

    The Schmidt frame supplies positive coefficients, so no separate phase
    rotation is needed; the third vector A'_1 + A'_2 is already unit length.
    """
    u, s, v = _svd(psi, (2, 2))
    a, b = s
    if b <= RANK_TOL * a:
        raise ParameterError("both Schmidt coefficients must be positive")
    vb = v.conj()
    c, sn = math.sqrt(a / (a + b)), math.sqrt(b / (a + b))
    w = np.exp(1j * math.pi / 3)
    a1 = np.array([w * c, sn / w])
    a2 = np.array([c / w, w * sn])
    a3 = a1 + a2
    k = (a + b) ** 2 / 3
    terms = [(k, (u @ x, vb @ x)) for x in (a1, a2, a3)]
    terms += [(-a * b, (u[:, 0], vb[:, 1])), (-a * b, (u[:, 1], vb[:, 0]))]
    return ProductVectorDecomposition(terms, (2, 2))


# -- optimal settings for Schmidt rank l ----------------------------------------

def round_robin_pairing(l: int) -> list[list[tuple[int, int]]]:
    """Group all pairs of {0..l-1} into matchings by the circle method.

    Even l gives l-1 perfect matchings; odd l gives l matchings of (l-1)/2
    pairs, each index missing from exactly one of them. Indices are 0-based.
    """
    if l < 2:
        raise ParameterError("pairing needs l >= 2")
    n = l if l % 2 == 0 else l + 1
    arr = list(range(n))
    rounds = []
    for _ in range(n - 1):
        pairs = [tuple(sorted((arr[i], arr[n - 1 - i]))) for i in range(n // 2)]
        pairs = sorted(p for p in pairs if p[1] < l)
        rounds.append(pairs)
        arr = [arr[0], arr[-1]] + arr[1:-1]
    return sorted(rounds, key=lambda r: [p for p in r])


def _missing_index(pairs, l):
    used = {i for p in pairs for i in p}
    rest = [i for i in range(l) if i not in used]
    return rest[0] if rest else None


def theorem1_ons(psi, dims: Sequence[int], *, transpose: bool = False) -> LocalDecomposition:
    """Settings realising |psi><psi| (or its partial transpose) for Schmidt rank l.

    Uses one diagonal setting plus an X and a Y setting per matching of the
    Schmidt indices: 2l-1 settings for even l, 2l for odd l (the diagonal
    terms ride on the X settings), 1 for l = 1.
    """
    u, s, v = _svd(psi, dims)
    da, db = dims
    l = _schmidt_rank(s)
    settings = []

    def basis_from(frame, n, pairs, kind):
        cols = [None] * n
        used = set()
        for j, k in pairs:
            if kind == "x":
                p, m = _S * (frame[:, j] + frame[:, k]), _S * (frame[:, j] - frame[:, k])
            else:
                p, m = _S * (frame[:, j] + 1j * frame[:, k]), _S * (frame[:, j] - 1j * frame[:, k])
            cols[j], cols[k] = p, m
            used.update((j, k))
        for i in range(n):
            if cols[i] is None:
                cols[i] = frame[:, i]
        return np.column_stack(cols)

    if l == 1 or l % 2 == 0:
        c = np.zeros((da, db))
        for k in range(l):
            c[k, k] = s[k] ** 2
        settings.append(Setting((u, v), c, "diag"))
    if l >= 2:
        for pairs in round_robin_pairing(l):
            cx = np.zeros((da, db))
            cy = np.zeros((da, db))
            for j, k in pairs:
                w = s[j] * s[k]
                cx[j, j] = cx[k, k] = w
                cy[j, j] = cy[k, k] = -w
            miss = _missing_index(pairs, l)
            if miss is not None:
                cx[miss, miss] = s[miss] ** 2
            tag = ",".join(f"{j}{k}" for j, k in pairs)
            settings.append(Setting((basis_from(u, da, pairs, "x"), basis_from(v, db, pairs, "x")), cx, f"x[{tag}]"))
            settings.append(Setting((basis_from(u, da, pairs, "y"), basis_from(v, db, pairs, "y")), cy, f"y[{tag}]"))
    target = Operator(projector(np.asarray(psi).reshape(-1)), tuple(dims))
    dec = LocalDecomposition(settings, tuple(dims), target, f"schmidt rank {l}")
    return transpose_party(dec, 1) if transpose else dec


# -- lower bounds ----------------------------------------------------------------

def settings_lower_bound(target, dims: Sequence[int] | None = None, tol: float = RANK_TOL) -> int:
    """ceil(r / (N - 1)) with r the rank of the reduced coefficient matrix.

    Each setting contributes a reduced coefficient block of rank at most
    N - 1 (N the smaller local dimension). A state vector is expanded as its
    projector; one of full Schmidt rank on N x N is raised to N + 1.
    """
    vec = np.asarray(target.mat if isinstance(target, Operator) else getattr(target, "mat", target))
    full_schmidt = False
    if vec.ndim == 1:
        if dims is None:
            n = int(round(math.sqrt(vec.size)))
            dims = (n, n)
        _, s, _ = _svd(vec / np.linalg.norm(vec), dims)
        full_schmidt = dims[0] == dims[1] and _schmidt_rank(s) == dims[0]
        op = Operator(projector(vec / np.linalg.norm(vec)), tuple(dims))
    else:
        op = _op(target, dims)
    if op.nparties != 2:
        raise DimensionError("lower bound is defined for bipartite operators")
    n = min(op.dims)
    if n < 2:
        raise DimensionError("lower bound needs local dimension at least 2")
    lam = np.atleast_2d(expand(op).reduced())
    r = matrix_rank(lam, tol) if np.abs(lam).max(initial=0.0) > 0 else 0
    bound = max(1, -(-r // (n - 1)))
    if full_schmidt:
        bound = max(bound, n + 1)
    return bound


# -- Pauli decompositions for qubits ------------------------------------------------

def pauli_coefficients(target, tol: float = PRUNE_TOL) -> dict[str, float]:
    """Coefficients of W in the raw Pauli-string basis (strings over 1, x, y, z)."""
    m = target.mat if isinstance(target, Operator) else getattr(target, "mat", np.asarray(target))
    m = np.asarray(m)
    nq = int(round(math.log2(m.shape[0])))
    if 2 ** nq != m.shape[0]:
        raise DimensionError("Pauli decomposition needs a qubit register")
    out = {}
    for letters in itertools.product("1xyz", repeat=nq):
        s = "".join(letters)
        c = np.trace(reduce(np.kron, [PAULI[ch] for ch in s]) @ m) / 2 ** nq
        if abs(c) > tol:
            if abs(c.imag) > 1e-12:
                raise ParameterError("operator is not Hermitian")
            out[s] = float(c.real)
    return out


def _compatible(setting: list[str], s: str) -> bool:
    return all(a == "1" or b == "1" or a == b for a, b in zip(setting, s))


def pauli_decomposition(target, dims: Sequence[int] | None = None) -> LocalDecomposition:
    """Group Pauli strings into joint settings (one axis per qubit).

    Strings are visited by descending weight and join the first setting whose
    fixed axes agree; identity slots left open at the end are set to z.
    """
    op = _op(target, dims)
    nq = int(round(math.log2(op.dim)))
    if op.dims != (2,) * nq:
        op = Operator(op.mat, (2,) * nq)
    coeffs = pauli_coefficients(op)
    order = sorted(coeffs, key=lambda s: (-sum(ch != "1" for ch in s), s))
    groups: list[tuple[list[str], list[str]]] = []
    for s in order:
        for axes, members in groups:
            if _compatible(axes, s):
                for i, ch in enumerate(s):
                    if ch != "1":
                        axes[i] = ch
                members.append(s)
                break
        else:
            groups.append((list(s), [s]))
    settings = []
    for axes, members in groups:
        axes = [a if a != "1" else "z" for a in axes]
        bases = tuple(_PAULI_BASES[a][0] for a in axes)
        c = np.zeros((2,) * nq)
        for s in members:
            factors = [_PAULI_BASES[a][1] if ch != "1" else np.ones(2) for a, ch in zip(axes, s)]
            c = c + coeffs[s] * reduce(np.multiply.outer, factors)
        settings.append(Setting(bases, c, "".join(axes)))
    return LocalDecomposition(settings, op.dims, op, "pauli")


def ghz_decomposition() -> LocalDecomposition:
    from .witness import ghz_witness
    return pauli_decomposition(ghz_witness())


def w1_decomposition() -> LocalDecomposition:
    from .witness import w_witness_1
    return pauli_decomposition(w_witness_1())


def w2_decomposition() -> LocalDecomposition:
    from .witness import w_witness_2
    return pauli_decomposition(w_witness_2())


# -- product-vector grouping ------------------------------------------------------

def _parallel(a, b) -> bool:
    return abs(np.vdot(a, b)) > _SAME * np.linalg.norm(a) * np.linalg.norm(b)


def _orthogonal(a, b) -> bool:
    return abs(np.vdot(a, b)) < 1e-9 * np.linalg.norm(a) * np.linalg.norm(b)


def product_vectors_to_settings(pvd: ProductVectorDecomposition, target=None) -> LocalDecomposition:
    """Greedily pack product projectors into shared local bases.

    A term joins a setting when, for every party, its vector is parallel to
    one already in that party's basis or orthogonal to all of them. Unused
    basis slots are completed arbitrarily.
    """
    groups: list[tuple[list[list[np.ndarray]], list[tuple[float, tuple[int, ...]]]]] = []
    for c, vs in pvd.terms:
        nvs = [v / np.linalg.norm(v) for v in vs]
        weight = c * math.prod(np.linalg.norm(v) ** 2 for v in vs)
        placed = False
        for party_vecs, members in groups:
            idx = []
            for pv, v, n in zip(party_vecs, nvs, pvd.dims):
                hit = [k for k, w in enumerate(pv) if _parallel(w, v)]
                if hit:
                    idx.append(hit[0])
                elif len(pv) < n and all(_orthogonal(w, v) for w in pv):
                    idx.append(-1)
                else:
                    break
            else:
                for p, (pv, v) in enumerate(zip(party_vecs, nvs)):
                    if idx[p] == -1:
                        pv.append(v)
                        idx[p] = len(pv) - 1
                members.append((weight, tuple(idx)))
                placed = True
                break
        if not placed:
            groups.append(([[v] for v in nvs], [(weight, (0,) * len(nvs))]))
    settings = []
    for party_vecs, members in groups:
        bases = []
        for pv, n in zip(party_vecs, pvd.dims):
            b = _complete_basis(pv, n)
            # keep the stored phases of the given vectors
            for k, v in enumerate(pv):
                b[:, k] = v
            bases.append(b)
        c = np.zeros(pvd.dims)
        for w, idx in members:
            c[idx] += w
        settings.append(Setting(tuple(bases), c))
    tgt = _op(target) if target is not None else Operator(pvd.recompose(), pvd.dims)
    return LocalDecomposition(settings, pvd.dims, tgt)


# -- UPB witness decompositions ----------------------------------------------------

def _unit(v):
    v = np.asarray(v, dtype=complex)
    return v / np.linalg.norm(v)


def upb_product_vectors(variant: str, epsilon: float) -> ProductVectorDecomposition:
    """Product-projector forms of the UPB witness.

    ``a``: W-bar = sum of the five UPB projectors (epsilon ignored).
    ``b``: W-bar - epsilon * 1 with 1 resolved in psi_0..3, psi_5..9.
    ``c``: W-bar - epsilon * I with I the sum of the projectors onto psi_0..8.
    """
    upb = [tuple(v.factors) for v in upb_vectors()]
    comp = [tuple(v.factors) for v in upb_completion_vectors()]
    if variant == "a":
        terms = [(1.0, f) for f in upb]
    elif variant == "b":
        order = [upb[0], comp[0], upb[1], comp[1], upb[2], comp[2], upb[3], comp[3], upb[4], comp[4]]
        weights = [1 - epsilon, -epsilon] * 4 + [1.0, -epsilon]
        terms = list(zip(weights, order))
    elif variant == "c":
        order = [upb[0], comp[0], upb[1], comp[1], upb[2], comp[2], upb[3], comp[3], upb[4]]
        weights = [1 - epsilon, -epsilon] * 4 + [1 - epsilon]
        terms = list(zip(weights, order))
    else:
        raise ParameterError(f"unknown UPB variant {variant!r}")
    return ProductVectorDecomposition(terms, (3, 3))


def upb_witness_settings(variant: str = "b", epsilon: float = 0.0) -> LocalDecomposition:
    """Local settings for the UPB witness variants a (5), b (6) and c (5)."""
    pvd = upb_product_vectors(variant, epsilon)
    dec = product_vectors_to_settings(pvd)
    return LocalDecomposition(dec.settings, dec.dims, dec.target, f"upb-{variant}")


# -- utilities -----------------------------------------------------------------

def transpose_party(dec: LocalDecomposition, party: int) -> LocalDecomposition:
    """Partial transpose on ``party`` by conjugating that party's basis vectors."""
    if not 0 <= party < len(dec.dims):
        raise DimensionError(f"party {party} out of range")
    settings = []
    for s in dec.settings:
        bases = list(s.bases)
        bases[party] = bases[party].conj()
        settings.append(Setting(tuple(bases), s.coeffs, s.label))
    target = partial_transpose(dec.target, party) if dec.target is not None else None
    return LocalDecomposition(settings, dec.dims, target, dec.note)


def verify(dec, target=None) -> float:
    """Hilbert-Schmidt residual between the realised operator and ``target``."""
    if target is None:
        target = getattr(dec, "target", None)
    if target is None:
        raise ParameterError("no target to verify against")
    t = target.mat if isinstance(target, Operator) else getattr(target, "mat", np.asarray(target))
    return hs_norm(dec.recompose() - np.asarray(t))


def prune_settings(dec: LocalDecomposition, tol: float = PRUNE_TOL) -> LocalDecomposition:
    keep = [s for s in dec.settings if np.abs(s.coeffs).max(initial=0.0) >= tol]
    return LocalDecomposition(keep, dec.dims, dec.target, dec.note)


def _match_basis(a: np.ndarray, b: np.ndarray) -> list[int] | None:
    """Permutation mapping columns of ``a`` onto columns of ``b`` up to phases."""
    ov = np.abs(a.conj().T @ b)
    perm = []
    for i in range(a.shape[1]):
        hits = np.flatnonzero(ov[i] > _SAME)
        if hits.size != 1:
            return None
        perm.append(int(hits[0]))
    return perm if len(set(perm)) == len(perm) else None


def merge_settings(dec: LocalDecomposition) -> LocalDecomposition:
    """Combine settings whose bases coincide party by party up to order and phase."""
    merged: list[Setting] = []
    for s in dec.settings:
        for i, m in enumerate(merged):
            perms = [_match_basis(b, mb) for b, mb in zip(s.bases, m.bases)]
            if all(p is not None for p in perms):
                c = m.coeffs.copy()
                idx = np.ix_(*perms)
                c[idx] += s.coeffs
                merged[i] = Setting(m.bases, c, m.label)
                break
        else:
            merged.append(s)
    return LocalDecomposition(merged, dec.dims, dec.target, dec.note)


def count_settings(dec, tol: float = PRUNE_TOL) -> int:
    """Number of distinct settings after pruning null ones and merging duplicates."""
    if isinstance(dec, ProductVectorDecomposition):
        dec = product_vectors_to_settings(dec)
    elif isinstance(dec, TensorDecomposition):
        dec = tensor_to_local(dec)
    return len(merge_settings(prune_settings(dec, tol)))


# -- serialization -------------------------------------------------------------

def _c2l(v: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex).ravel()]


def decomposition_to_dict(dec: LocalDecomposition) -> dict:
    """JSON-ready form; basis vectors are lists of [re, im] pairs."""
    return {
        "target_dims": list(dec.dims),
        "note": dec.note,
        "settings": [
            {
                "label": s.label,
                "bases": [[_c2l(b[:, k]) for k in range(b.shape[1])] for b in s.bases],
                "coeffs": s.coeffs.tolist(),
            }
            for s in dec.settings
        ],
    }


def decomposition_from_dict(data: dict, target=None) -> LocalDecomposition:
    dims = tuple(data["target_dims"])
    settings = []
    for sd in data["settings"]:
        bases = []
        for vecs in sd["bases"]:
            cols = [np.array([complex(re, im) for re, im in v]) for v in vecs]
            bases.append(np.column_stack(cols))
        settings.append(Setting(tuple(bases), np.array(sd["coeffs"], dtype=float), sd.get("label", "")))
    tgt = _op(target, dims) if target is not None else None
    return LocalDecomposition(settings, dims, tgt, data.get("note", ""))
