"""Command line interface.

Every subcommand accepts ``--seed``, ``--out`` and ``--format``. With
``--out`` a ``<out>.manifest.json`` file records the command, arguments,
seed, version and output digest. Exit codes: 0 success, 1 usage error,
2 domain error (reported as JSON with a ``code`` field).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import subprocess
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .decomp import (
    count_settings,
    decomposition_from_dict,
    decomposition_to_dict,
    onp_five_projectors,
    operator_basis_decomposition,
    pauli_decomposition,
    product_vectors_to_settings,
    settings_lower_bound,
    sigma_tau_decomposition,
    tensor_to_local,
    theorem1_ons,
    two_qubit_three_settings,
    upb_witness_settings,
    verify,
)
from .errors import ParameterError, WitnessKitError
from .linalg import Operator, null_space, partial_transpose, schmidt
from .measure import estimate_witness, shot_records_csv
from .montecarlo import curve_csv, error_curve, false_separable_rate
from .states import (
    NoiseBallSpec,
    ChessboardParams,
    DensityMatrix,
    bell,
    chessboard_state,
    ghz_state,
    horodecki_state,
    is_ppt,
    maximally_mixed,
    min_pt_eigenvalue,
    noisy_state,
    pure_state,
    sample_ball_state,
    upb_state,
    w_state,
)
from .witness import (
    W0_MATRIX,
    Witness,
    classify,
    edge_witness,
    ghz_witness,
    npt_witness,
    tau_threshold,
    theta_threshold,
    w_witness_1,
    w_witness_2,
)

log = logging.getLogger("witnesskit")

FAMILIES = ("noisy-bell", "ghz", "w", "upb", "chessboard", "horodecki")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- encoding ---------------------------------------------------------------------

def encode_matrix(m) -> list:
    """Row-major nested list of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(data) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in data])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return _jsonable(np.stack([x.real, x.imag], axis=-1).tolist())
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x) + 0.0  # drops the sign of -0.0
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _matrix_csv(m) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    m = np.asarray(m, dtype=complex)
    for i, j in np.ndindex(*m.shape):
        w.writerow([i, j, repr(float(m[i, j].real)), repr(float(m[i, j].imag))])
    return buf.getvalue()


def _record_csv(rec: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = sorted(k for k, v in rec.items() if not isinstance(v, (list, dict, tuple, np.ndarray)))
    w.writerow(keys)
    w.writerow([repr(rec[k]) if isinstance(rec[k], float) else rec[k] for k in keys])
    return buf.getvalue()


# -- spec parsing ---------------------------------------------------------------------

def _parse_kv(text: str) -> tuple[str, dict[str, str]]:
    name, _, rest = text.partition(":")
    kv = {}
    if rest:
        for part in rest.split(","):
            if "=" not in part:
                raise UsageError(f"malformed spec fragment {part!r} (expected key=value)")
            k, v = part.split("=", 1)
            kv[k.strip()] = v.strip()
    return name.strip(), kv


def _float(kv, key, default=None):
    if key not in kv:
        if default is None:
            raise UsageError(f"missing parameter {key!r}")
        return default
    try:
        return float(kv[key])
    except ValueError:
        raise UsageError(f"parameter {key}={kv[key]!r} is not a number") from None


def build_state(family: str, *, p=None, d=None, b=None, params=None, kind="psi+",
                rng: np.random.Generator | None = None) -> DensityMatrix:
    if family == "noisy-bell":
        p = 0.5 if p is None else p
        d = 0.0 if d is None else d
        psi = bell(kind)
        if d > 0:
            return sample_ball_state(NoiseBallSpec(p, d), psi, rng or np.random.default_rng(0))
        return noisy_state(psi, p, maximally_mixed((2, 2)))
    if family == "ghz":
        return pure_state(ghz_state(), (2, 2, 2), "ghz")
    if family == "w":
        return pure_state(w_state(), (2, 2, 2), "w")
    if family == "upb":
        return upb_state()
    if family == "chessboard":
        if params is None:
            raise UsageError("chessboard needs six parameters m,n,a,b,c,d")
        return chessboard_state(ChessboardParams(*params))
    if family == "horodecki":
        return horodecki_state(0.5 if b is None else b)
    raise UsageError(f"unknown state family {family!r}")


def parse_state_spec(spec: str, rng: np.random.Generator | None = None) -> DensityMatrix:
    """``family[:key=value,...]`` or a path to a state JSON file."""
    path = Path(spec)
    if path.suffix == ".json" or path.is_file():
        if not path.is_file():
            raise UsageError(f"state file {spec!r} not found")
        data = json.loads(path.read_text())
        return DensityMatrix(decode_matrix(data["matrix"]), tuple(data["dims"]), label=data.get("family", ""))
    family, kv = _parse_kv(spec)
    if family == "chessboard":
        params = [_float(kv, k) for k in ("m", "n", "a", "b", "c", "d")]
        return build_state(family, params=params)
    return build_state(family,
                       p=_float(kv, "p", 0.5) if family == "noisy-bell" else None,
                       d=_float(kv, "d", 0.0) if family == "noisy-bell" else None,
                       b=_float(kv, "b", 0.5) if family == "horodecki" else None,
                       kind=kv.get("kind", "psi+"), rng=rng)


def _state_summary(rho: DensityMatrix) -> dict:
    w = np.linalg.eigvalsh(rho.mat)
    out = {"dims": list(rho.dims), "family": rho.label, "matrix": encode_matrix(rho.mat),
           "eigenvalues": w, "kernel_dim": int(null_space(rho.mat).shape[1])}
    if rho.nparties == 2:
        out["ppt"] = is_ppt(rho)
        out["min_pt_eigenvalue"] = min_pt_eigenvalue(rho)
    return out


# -- witness specs ------------------------------------------------------------------------

def build_witness(spec: str, *, edge=False, epsilon="optimize", restarts=500,
                  rng: np.random.Generator | None = None) -> Witness:
    name, kv = _parse_kv(spec)
    if name == "w0":
        return npt_witness(noisy_state(bell("psi+"), 0.5, maximally_mixed((2, 2))))
    if name == "ghz":
        return ghz_witness()
    if name == "w1":
        return w_witness_1()
    if name == "w2":
        return w_witness_2()
    if name == "npt":
        return npt_witness(parse_state_spec(spec.partition(":")[2], rng))
    if name in ("upb", "horodecki", "chessboard") and not edge:
        edge = True
    if name in FAMILIES or Path(spec).is_file():
        rho = parse_state_spec(spec, rng)
        if edge:
            return edge_witness(rho, epsilon=epsilon, restarts=restarts, rng=rng)
        return npt_witness(rho)
    raise UsageError(f"unknown witness spec {spec!r}")


def _epsilon_arg(text: str):
    if text in ("optimize", "primed"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("epsilon must be a number, 'optimize' or 'primed'") from None


# -- subcommands -------------------------------------------------------------------------------

def cmd_state_make(args, rng):
    params = None
    if args.params:
        try:
            params = [float(x) for x in args.params.split(",")]
        except ValueError:
            raise UsageError("--params expects six comma-separated numbers") from None
        if len(params) != 6:
            raise UsageError("--params expects six comma-separated numbers")
    rho = build_state(args.family, p=args.p, d=args.d, b=args.b, params=params, rng=rng)
    out = _state_summary(rho)
    csv_text = _matrix_csv(rho.mat)
    return out, csv_text


def cmd_witness_build(args, rng):
    w = build_witness(args.target, edge=args.edge, epsilon=args.epsilon, restarts=args.restarts, rng=rng)
    prov = {k: v for k, v in w.provenance.items() if k not in ("wbar", "subtracted")}
    if "eigenvector" in prov:
        prov["eigenvector"] = [[float(z.real), float(z.imag)] for z in prov["eigenvector"]]
    out = {"kind": w.kind, "dims": list(w.dims), "matrix": encode_matrix(w.mat),
           "epsilon": w.epsilon, "provenance": prov}
    return out, _matrix_csv(w.mat)


def cmd_witness_thresholds(args, rng):
    out = {"d": args.d, "tau": tau_threshold(args.d)}
    if args.p is not None:
        out["p"] = args.p
        out["theta"] = theta_threshold(args.p, args.d)
    return out, _record_csv(out)


def _decompose(w: Witness, mode: str, spec_name: str, epsilon: float | None):
    dims = w.dims
    phi = w.provenance.get("eigenvector") if w.kind == "npt" else None
    qubits = all(d == 2 for d in dims)
    if mode == "ons":
        if phi is not None:
            return theorem1_ons(phi, dims, transpose=True)
        if qubits:
            return pauli_decomposition(w.op)
        return tensor_to_local(operator_basis_decomposition(w.op), w.op)
    if mode == "onp":
        if phi is not None and dims == (2, 2):
            pvd = onp_five_projectors(phi)
            return product_vectors_to_settings(pvd, w.op)
        if spec_name == "upb" and w.provenance.get("epsilon_mode") == "primed":
            return upb_witness_settings("c", w.epsilon)
        raise ParameterError("onp mode is available for two-qubit NPT witnesses and the primed UPB witness", )
    if mode == "pauli":
        if qubits:
            return pauli_decomposition(w.op)
        return tensor_to_local(operator_basis_decomposition(w.op), w.op)
    if mode == "published":
        if phi is not None and dims == (2, 2):
            return two_qubit_three_settings(phi)
        if w.kind in ("ghz", "w1", "w2"):
            return pauli_decomposition(w.op)
        if spec_name == "upb":
            variant = "c" if w.provenance.get("epsilon_mode") == "primed" else "b"
            return upb_witness_settings(variant, w.epsilon)
        if dims[0] == 2 and len(dims) == 2:
            return tensor_to_local(sigma_tau_decomposition(w.op), w.op)
        return tensor_to_local(operator_basis_decomposition(w.op), w.op)
    raise UsageError(f"unknown mode {mode!r}")


def cmd_decompose(args, rng):
    w = build_witness(args.target, epsilon=args.epsilon, restarts=args.restarts, rng=rng)
    name = _parse_kv(args.target)[0]
    dec = _decompose(w, args.mode, name, w.epsilon)
    out = {
        "target": args.target,
        "mode": args.mode,
        "witness_kind": w.kind,
        "epsilon": w.epsilon,
        "witness_matrix": encode_matrix(w.mat),
        "decomposition": decomposition_to_dict(dec),
        "settings": count_settings(dec),
        "residual": verify(dec, w.op),
    }
    if len(w.dims) == 2:
        out["lower_bound"] = settings_lower_bound(w.op)
    return out, _record_csv(out)


def cmd_montecarlo_curve(args, rng):
    curve = error_curve(args.d, args.samples, seed=args.seed, n_bins=args.bins,
                        p_grid=np.linspace(0.0, 1.0, args.p_points))
    out = {
        "d": curve.d, "n_samples": curve.n_samples, "seed": curve.seed,
        "p_grid": curve.p_grid, "alpha_lo": curve.alpha_lo, "alpha_hi": curve.alpha_hi,
        "e_minus": curve.e_minus, "E_minus": curve.E_minus, "n_in_bin": curve.n_in_bin,
        "sigma": curve.sigma, "p_at_max": curve.p_at_max,
        "bound_violations": curve.bound_violations(),
    }
    return out, curve_csv(curve)


def cmd_montecarlo_falserate(args, rng):
    fr = false_separable_rate(args.d, args.samples, seed=args.seed,
                              p_grid=np.linspace(0.0, 1.0, args.p_points), min_count=args.min_count)
    out = {"d": fr.d, "rate": fr.rate, "p_at_max": fr.p_at_max,
           "n_called_separable": fr.n_called_separable, "sigma": fr.sigma,
           "n_samples": args.samples, "seed": args.seed}
    return out, _record_csv(out)


def cmd_simulate(args, rng):
    rho = parse_state_spec(args.state, rng)
    path = Path(args.decomposition)
    if not path.is_file():
        raise UsageError(f"decomposition file {args.decomposition!r} not found")
    data = json.loads(path.read_text())
    dec = decomposition_from_dict(data.get("decomposition", data))
    if tuple(dec.dims) != tuple(rho.dims):
        raise ParameterError(f"decomposition dims {dec.dims} do not match state dims {rho.dims}")
    est = estimate_witness(rho, dec, args.shots, rng)
    realised = dec.recompose()
    is_w0 = realised.shape == (4, 4) and np.allclose(realised, W0_MATRIX, atol=1e-10)
    if is_w0 and args.d is not None:
        verdict = classify(est.value, d=args.d, p=args.p)
    else:
        verdict = classify(est.value)
    out = {
        "value": est.value, "stderr": est.stderr, "shots_per_setting": est.shots_per_setting,
        "settings_used": est.settings_used, "exact": float(np.real(np.trace(realised @ rho.mat))),
        "verdict": verdict.classification, "threshold_used": verdict.threshold_used,
        "threshold": verdict.threshold,
        "counts": [r.counts for r in est.records],
    }
    return out, shot_records_csv(est.records)


# -- parser --------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed (default 0)")
    p.add_argument("--out", type=str, default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="witnesskit", description="Entanglement witnesses and local measurement settings.")
    ap.add_argument("--version", action="version", version=f"witnesskit {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    st = sub.add_parser("state", help="state catalog")
    st_sub = st.add_subparsers(dest="action", required=True, parser_class=_Parser)
    mk = st_sub.add_parser("make", help="build a catalog state")
    mk.add_argument("--family", choices=FAMILIES, required=True)
    mk.add_argument("--p", type=float)
    mk.add_argument("--d", type=float)
    mk.add_argument("--b", type=float)
    mk.add_argument("--params", type=str, help="chessboard m,n,a,b,c,d")
    _common(mk)
    mk.set_defaults(func=cmd_state_make)

    wt = sub.add_parser("witness", help="witness construction")
    wt_sub = wt.add_subparsers(dest="action", required=True, parser_class=_Parser)
    bd = wt_sub.add_parser("build", help="build a witness for a state")
    bd.add_argument("--for", dest="target", required=True,
                    help="w0, ghz, w1, w2, npt:<state>, <state-spec> or a state JSON file")
    bd.add_argument("--edge", action="store_true", help="build an edge witness W-bar - eps I")
    bd.add_argument("--epsilon", type=_epsilon_arg, default="optimize")
    bd.add_argument("--restarts", type=int, default=500)
    _common(bd)
    bd.set_defaults(func=cmd_witness_build)
    th = wt_sub.add_parser("thresholds", help="tau(d) and theta(p, d)")
    th.add_argument("--d", type=float, required=True)
    th.add_argument("--p", type=float)
    _common(th)
    th.set_defaults(func=cmd_witness_thresholds)

    dc = sub.add_parser("decompose", help="decompose a witness into local settings")
    dc.add_argument("--target", required=True)
    dc.add_argument("--mode", choices=("ons", "onp", "pauli", "published"), default="published")
    dc.add_argument("--epsilon", type=_epsilon_arg, default="optimize")
    dc.add_argument("--restarts", type=int, default=500)
    _common(dc)
    dc.set_defaults(func=cmd_decompose)

    mc = sub.add_parser("montecarlo", help="random-state error analysis")
    mc_sub = mc.add_subparsers(dest="action", required=True, parser_class=_Parser)
    cv = mc_sub.add_parser("curve", help="e_- and E_- per alpha bin")
    cv.add_argument("--d", type=float, required=True)
    cv.add_argument("--samples", type=int, default=50_000)
    cv.add_argument("--bins", type=int, default=50)
    cv.add_argument("--p-points", type=int, default=101)
    _common(cv)
    cv.set_defaults(func=cmd_montecarlo_curve)
    fr = mc_sub.add_parser("falserate", help="sup-over-p false separable rate")
    fr.add_argument("--d", type=float, required=True)
    fr.add_argument("--samples", type=int, default=50_000)
    fr.add_argument("--p-points", type=int, default=101)
    fr.add_argument("--min-count", type=int, default=100)
    _common(fr)
    fr.set_defaults(func=cmd_montecarlo_falserate)

    sm = sub.add_parser("simulate", help="finite-shot estimate of a witness")
    sm.add_argument("--state", required=True)
    sm.add_argument("--decomposition", required=True, help="JSON written by 'decompose'")
    sm.add_argument("--shots", type=int, default=10_000)
    sm.add_argument("--d", type=float, help="noise radius, enables tau/theta certification")
    sm.add_argument("--p", type=float, help="known mixing weight")
    _common(sm)
    sm.set_defaults(func=cmd_simulate)
    return ap


def _git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(out_path: Path, argv: Sequence[str], args, payload: bytes) -> Path:
    manifest = {
        "command": " ".join(x for x in (args.command, getattr(args, "action", None)) if x),
        "argv": list(argv),
        "seed": args.seed,
        "version": __version__,
        "git_describe": _git_describe(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": {str(out_path): hashlib.sha256(payload).hexdigest()},
    }
    mpath = out_path.with_name(out_path.name + ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rng = np.random.default_rng(args.seed)
    try:
        out, csv_text = args.func(args, rng)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"witnesskit: error: {exc}", file=sys.stderr)
        return 1
    except WitnessKitError as exc:
        sys.stdout.write(dumps({"error": {"code": exc.code, "message": str(exc)}}))
        return 2
    text = dumps(out) if args.format == "json" else csv_text
    payload = text.encode()
    if args.out:
        path = Path(args.out)
        path.write_bytes(payload)
        write_manifest(path, argv, args, payload)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
