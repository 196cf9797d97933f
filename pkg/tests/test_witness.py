import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from witnesskit.errors import (
    NoNPTWitnessError,
    OptimizationError,
    ParameterError,
    ThresholdError,
    TrivialKernelError,
)
from witnesskit.linalg import Operator, partial_transpose, projector, random_unitary
from witnesskit.states import (
    MAX_NOISE_RADIUS,
    ChessboardParams,
    bell,
    chessboard_state,
    ghz_state,
    horodecki_state,
    maximally_mixed,
    min_pt_eigenvalue,
    noisy_state,
    pure_state,
    upb_state,
    upb_vectors,
    w_state,
)
from witnesskit.witness import (
    W0_MATRIX,
    Witness,
    alpha_to_q,
    classify,
    edge_prewitness,
    edge_witness,
    ghz_witness,
    npt_witness,
    optimize_epsilon,
    q_to_alpha,
    tau_threshold,
    tau_threshold_geometric,
    theta_threshold,
    theta_threshold_geometric,
    upb_noise_threshold,
    w_witness_1,
    w_witness_2,
    zero_plane_distance,
)

MIX = np.eye(4) / 4
PSI = bell("psi+")
UPB_EPS = 0.028416213  # frozen seesaw optimum, 500 restarts
UPB_EPS_PRIMED = 0.031086865


def rho_p(p):
    return noisy_state(PSI, p, MIX, (2, 2))


def _random_product_vectors(dims, n, rng):
    out = None
    for d in dims:
        v = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        out = v if out is None else np.einsum("na,nb->nab", out, v).reshape(n, -1)
    return out


def _min_product_expectation(w, n=100_000, seed=0):
    v = _random_product_vectors(w.dims, n, np.random.default_rng(seed))
    return np.einsum("na,ab,nb->n", v.conj(), w.mat, v).real.min()


# -- NPT witness --------------------------------------------------------------

def test_npt_witness_reproduces_w0():
    w = npt_witness(rho_p(0.5))
    assert np.abs(w.mat - W0_MATRIX).max() <= 1e-12
    assert w.value(rho_p(0.5)) == pytest.approx(-1 / 8, abs=1e-12)
    assert w.is_w0()


def test_npt_witness_boundary_state_is_refused():
    with pytest.raises(NoNPTWitnessError) as exc:
        npt_witness(rho_p(1 / 3))
    assert exc.value.code == "no_npt_witness"


def test_npt_witness_pure_bell():
    w = npt_witness(pure_state(PSI, (2, 2)))
    assert w.value(pure_state(PSI, (2, 2))) == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("p", np.linspace(0, 1, 21))
def test_w0_value_on_werner_line(p):
    w = Witness(Operator(W0_MATRIX, (2, 2)), "npt")
    assert w.value(rho_p(p)) == pytest.approx((1 - p) / 4 - p / 2, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dims=st.sampled_from([(2, 2), (2, 3), (3, 3)]))
def test_npt_witness_value_is_min_pt_eigenvalue(seed, dims):
    rng = np.random.default_rng(seed)
    n = math.prod(dims)
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    rho = noisy_state(psi / np.linalg.norm(psi), 0.9, np.eye(n) / n, dims)
    lam = min_pt_eigenvalue(rho)
    if lam < -1e-9:
        assert npt_witness(rho).value(rho) == pytest.approx(lam, abs=1e-12)


def test_npt_witness_is_deterministic_for_degenerate_minimum():
    # the qutrit maximally entangled state has PT = SWAP/3, eigenvalue -1/3 three times
    psi = np.zeros(9)
    psi[[0, 4, 8]] = 1 / math.sqrt(3)
    rho = pure_state(psi, (3, 3))
    w1, w2 = npt_witness(rho), npt_witness(rho)
    assert np.array_equal(w1.mat, w2.mat)
    assert w1.value(rho) == pytest.approx(-1 / 3, abs=1e-12)


def test_npt_witness_needs_bipartite():
    with pytest.raises(ParameterError):
        npt_witness(Operator(np.eye(2) / 2, (2,)))


# -- three-qubit witnesses ----------------------------------------------------

def test_three_qubit_witness_values():
    ghz = pure_state(ghz_state(), (2, 2, 2))
    w = pure_state(w_state(), (2, 2, 2))
    assert ghz_witness().value(ghz) == pytest.approx(-0.25, abs=1e-14)
    assert w_witness_1().value(w) == pytest.approx(-1 / 3, abs=1e-14)
    assert w_witness_2().value(ghz) == pytest.approx(-0.5, abs=1e-14)


def test_ghz_witness_nonnegative_on_product_states():
    rng = np.random.default_rng(3)
    wm = ghz_witness().mat
    vals = []
    for _ in range(10_000):
        facs = []
        for _ in range(3):
            a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            m = a @ a.conj().T
            facs.append(m / np.trace(m))
        rho = np.kron(np.kron(facs[0], facs[1]), facs[2])
        vals.append(np.trace(wm @ rho).real)
    assert min(vals) >= 0.0


@pytest.mark.parametrize("make", [ghz_witness, w_witness_1, w_witness_2,
                                  lambda: Witness(Operator(W0_MATRIX, (2, 2)), "npt")])
def test_witness_positive_on_sampled_product_vectors(make):
    assert _min_product_expectation(make()) >= -1e-9


def test_witness_rejects_unknown_kind_and_non_hermitian():
    with pytest.raises(ParameterError):
        Witness(Operator(np.eye(4), (2, 2)), "bogus")
    with pytest.raises(ParameterError):
        Witness(Operator(np.triu(np.ones((4, 4))), (2, 2)), "npt")


# -- geometry behind the thresholds -------------------------------------------

def test_boundary_state_distance_to_centre():
    assert np.linalg.norm(rho_p(1 / 3).mat - MIX) == pytest.approx(1 / math.sqrt(12), abs=1e-12)


def test_zero_plane_orthogonal_to_werner_line():
    rng = np.random.default_rng(4)
    normal = _w0_normal()
    traceless = _traceless_basis()
    a = rho_p(1 / 3).mat
    for p in np.linspace(0, 1, 11):
        line = a - rho_p(p).mat
        for _ in range(100):
            n = MIX + np.einsum("i,iab->ab", rng.standard_normal(15), traceless)
            n -= np.trace(W0_MATRIX @ n).real / np.vdot(normal, normal).real * normal
            assert abs(np.trace(W0_MATRIX @ n).real) <= 1e-12
            assert abs(np.vdot(line, a - n).real) <= 1e-10


def _traceless_basis():
    from witnesskit.linalg import generator_basis
    return generator_basis(4).operators[1:]


def _w0_normal():
    return W0_MATRIX - np.trace(W0_MATRIX) / 4 * np.eye(4)


def test_zero_plane_distance_of_boundary_state():
    w = Witness(Operator(W0_MATRIX, (2, 2)), "npt")
    assert zero_plane_distance(w, rho_p(1 / 3)) == pytest.approx(0.0, abs=1e-15)
    d_mix = zero_plane_distance(w, MIX)
    assert d_mix == pytest.approx(1 / math.sqrt(12), abs=1e-12)


# -- thresholds -----------------------------------------------------------------

def test_tau_endpoints():
    assert tau_threshold(0.0) == 0.0
    assert tau_threshold(MAX_NOISE_RADIUS) == pytest.approx(1 / 6, abs=1e-15)


def test_tau_at_point_one():
    assert tau_threshold(0.1) == pytest.approx(0.0070479305, abs=1e-10)


def test_theta_values():
    assert theta_threshold(1 / 3, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert theta_threshold(1.0, 0.2) == pytest.approx(-1 / 6, abs=1e-15)
    assert theta_threshold(0.5, 0.2) == pytest.approx(0.25 - 1 / 12 - 3 / 16 + 0.01, abs=1e-15)


def test_threshold_domain_errors():
    with pytest.raises(ParameterError):
        tau_threshold(0.3)
    with pytest.raises(ParameterError):
        theta_threshold(0.0, 0.1)


@pytest.mark.parametrize("d", np.linspace(0.01, MAX_NOISE_RADIUS, 12))
def test_tau_matches_geometric_oracle(d):
    assert tau_threshold(d) == pytest.approx(tau_threshold_geometric(d), abs=1e-8)


@pytest.mark.parametrize("p", [0.05, 0.2, 1 / 3, 0.5, 0.8, 1.0])
@pytest.mark.parametrize("d", [0.0, 0.05, 0.15, 0.25, MAX_NOISE_RADIUS])
def test_theta_matches_geometric_oracle(p, d):
    assert theta_threshold(p, d) == pytest.approx(theta_threshold_geometric(p, d), abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(-1, 1))
def test_alpha_q_roundtrip(alpha):
    assert float(q_to_alpha(alpha_to_q(alpha))) == pytest.approx(alpha, abs=1e-14)


def test_alpha_is_w0_value_at_white_noise():
    for q in np.linspace(0, 1, 11):
        assert float(q_to_alpha(q)) == pytest.approx(np.trace(W0_MATRIX @ rho_p(q).mat).real, abs=1e-14)


def test_classify_examples():
    assert classify(-0.1).classification == "entangled"
    v = classify(0.2, d=0.1)
    assert (v.classification, v.threshold_used) == ("separable_certified", "tau")
    assert classify(0.003, d=0.1).classification == "inconclusive"
    assert classify(0.003).classification == "inconclusive"
    assert classify(0.1, d=0.1, p=0.5).threshold_used == "theta"


def test_classify_refuses_thresholds_for_other_witnesses():
    with pytest.raises(ThresholdError):
        classify(0.1, d=0.1, witness=ghz_witness())


# -- edge witnesses -------------------------------------------------------------

def test_upb_prewitness_is_sum_of_tile_projectors():
    wbar, info = edge_prewitness(upb_state())
    expected = sum(projector(v.vector) for v in upb_vectors())
    assert np.abs(wbar.mat - expected).max() <= 1e-10
    assert info["merged"]


def test_upb_epsilon_and_value():
    w = edge_witness(upb_state(), restarts=500, rng=np.random.default_rng(0))
    assert w.epsilon == pytest.approx(0.02842, abs=1e-4)
    assert w.epsilon == pytest.approx(UPB_EPS, abs=1e-8)
    assert w.epsilon >= (1 / 9) * ((6 - math.sqrt(30)) / 6) * ((2 - math.sqrt(3)) / 2)
    assert w.value(upb_state()) == pytest.approx(-w.epsilon, abs=1e-10)


def test_upb_primed_epsilon():
    w = edge_witness(upb_state(), epsilon="primed", restarts=500, rng=np.random.default_rng(0))
    assert w.epsilon == pytest.approx(UPB_EPS_PRIMED, abs=1e-8)


def test_epsilon_invariant_under_local_unitaries():
    rng = np.random.default_rng(5)
    wbar, _ = edge_prewitness(upb_state())
    u = np.kron(random_unitary(3, rng), random_unitary(3, rng))
    rotated = u @ wbar.mat @ u.conj().T
    e1 = optimize_epsilon(wbar, (3, 3), restarts=500, rng=np.random.default_rng(1)).value
    e2 = optimize_epsilon(rotated, (3, 3), restarts=500, rng=np.random.default_rng(2)).value
    assert e1 == pytest.approx(e2, abs=1e-6)


def test_upb_noise_robustness_threshold():
    w = edge_witness(upb_state(), epsilon=UPB_EPS)
    p_star = upb_noise_threshold(UPB_EPS)
    for p in np.linspace(0, 1, 201):
        if abs(p - p_star) < 1e-9:
            continue
        rho = p * upb_state().mat + (1 - p) * np.eye(9) / 9
        assert (w.value(rho) < 0) == (p > p_star)


def test_chessboard_edge_witness():
    rho = chessboard_state(ChessboardParams.random(np.random.default_rng(3)))
    w = edge_witness(rho, restarts=200, rng=np.random.default_rng(0))
    assert w.epsilon > 0
    assert w.provenance["product_vectors"]
    assert w.value(rho) == pytest.approx(-w.epsilon, abs=1e-10)


def test_horodecki_edge_witness():
    rho = horodecki_state(0.5)
    w = edge_witness(rho, restarts=200, rng=np.random.default_rng(0))
    assert w.epsilon == pytest.approx(0.0051114, abs=1e-6)
    assert w.value(rho) == pytest.approx(-w.epsilon, abs=1e-10)
    assert (w.provenance["P_rank"], w.provenance["Q_rank"]) == (3, 3)


def test_edge_witness_not_fired_on_separable_state():
    w = edge_witness(horodecki_state(0.5), restarts=200, rng=np.random.default_rng(0))
    assert w.value(horodecki_state(0.0)) >= 0
    assert w.value(maximally_mixed((2, 4))) >= 0


def test_edge_witness_given_epsilon_and_errors():
    w = edge_witness(upb_state(), epsilon=0.01)
    assert w.epsilon == 0.01
    with pytest.raises(OptimizationError):
        edge_witness(upb_state(), epsilon=0.0)
    with pytest.raises(TrivialKernelError):
        edge_prewitness(maximally_mixed((3, 3)))
    with pytest.raises(ParameterError):
        edge_witness(horodecki_state(0.5), epsilon="primed")


def test_unit_chessboard_is_not_an_edge_state():
    with pytest.raises(OptimizationError):
        edge_witness(chessboard_state(ChessboardParams(1, 1, 1, 1, 1, 1)), restarts=100,
                     rng=np.random.default_rng(0))


def test_sigma_tau_display_from_printed_kernel_vectors():
    # The published sigma x tau~ matrices for b = 1/2 follow from W = P + Q^T built from
    # the printed kernel vectors; the third vector for rho^T has a sign slip in its
    # fifth entry, so only that printed set reproduces the display exactly.
    b = 0.5
    y = math.sqrt((1 - b) / (1 + b))
    c = 1 / (2 + y * y)
    s, n = 1 / math.sqrt(2), 1 / math.sqrt(2 + y * y)
    p = sum(projector(s * np.array(v, float)) for v in ([1, 0, 0, 0, 0, -1, 0, 0], [0, 1, 0, 0, 0, 0, -1, 0]))
    p += projector(n * np.array([0, 0, 1, 0, y, 0, 0, -1]))
    q = sum(projector(s * np.array(v, float)) for v in ([0, 0, 1, 0, 0, -1, 0, 0], [0, 0, 0, 1, 0, 0, -1, 0]))
    q += projector(n * np.array([0, 1, 0, 0, 1, 0, 0, y]))
    w = p + partial_transpose(Operator(q, (2, 4)), 1).mat
    from witnesskit.decomp import sigma_tau_decomposition
    td = sigma_tau_decomposition(Operator(w, (2, 4)))
    taus = [t[1][1] for t in td.terms]
    expected = [
        np.diag([-c, c, c, -c]) + 1.5 * np.eye(4),
        0.25 * np.array([[0, -c * y * y, 2 * c * y, 0], [-c * y * y, 0, -2, 2 * c * y],
                         [2 * c * y, -2, 0, -c * (4 + y * y)], [0, 2 * c * y, -c * (4 + y * y), 0]]),
        0.25j * np.array([[0, -c * y * y, -2 * c * y, 0], [c * y * y, 0, -2, -2 * c * y],
                          [2 * c * y, 2, 0, -c * (4 + y * y)], [0, 2 * c * y, c * (4 + y * y), 0]]),
        -c * y * y / 4 * np.eye(4),
    ]
    for t, e in zip(taus, expected):
        assert np.abs(t - e).max() <= 1e-12
    rt = partial_transpose(horodecki_state(b), 1).mat
    assert np.linalg.norm(horodecki_state(b).mat @ p) <= 1e-12
    # printed vector is not in the kernel, the corrected one is
    assert np.linalg.norm(rt @ (n * np.array([0, 1, 0, 0, 1, 0, 0, y]))) > 0.1
    assert np.linalg.norm(rt @ np.array([0, 1, 0, 0, -1, 0, 0, y])) <= 1e-12
