"""Command-line front end (``mia-limits``).

Every subcommand parses its inputs, calls one library function and writes a
JSON report to standard output.  Exit codes: 0 on success, 2 on invalid
input (with a JSON error object on standard output), 1 on internal errors.

Distributions given with ``--probs`` are resolved in this order:

1. ``uniform:K`` shorthand,
2. a path to an existing JSON file (``{"atoms": [...], "probs": [...]}`` or a
   bare list of probabilities),
3. an inline comma-separated list such as ``0.5,0.3,0.2``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .brute_force import (
    LearningProcedureSpec,
    constant_procedure,
    delta_bruteforce,
    injective_procedure,
    max_atom_procedure,
)
from .core_types import AttackWeights, DiscreteDistribution, JointDistribution, MiaLimitsError
from .discrete_security import (
    c_k,
    diversity_bounds,
    max_delta_bound_from_ck,
    min_n_for_security,
    min_n_from_ck,
    min_sec_discrete,
    worst_case_sandwich,
)
from .divergence import (
    d_alpha,
    dp_security_bound,
    ldp_delta_sup,
    mutual_information,
    pinsker_security_bound,
    security_report,
    tilde_d,
    total_variation,
)
from .empmean_bounds import (
    EmpMeanBoundInput,
    empmean_security_bound,
    gaussian_tv_bound,
    min_n_epsilon,
    min_n_epsilon_exact,
    standardized_moments,
)
from .overfit_sim import (
    OverfitConfig,
    RegressionTask,
    fraction_curves_rows,
    run_overfit_experiment,
)

SEED_ENV = "MIA_LIMITS_SEED"

#: Diversity values and training-set sizes of the reference table.
TABLE1_CK = (4.30, 6.74, 9.20)
TABLE1_N = (1000, 5000, 10000)
#: Reference bounds displayed to two decimals, keyed by (C_K, n).
TABLE1_REFERENCE = {
    (4.30, 1000): 0.07, (6.74, 1000): 0.11, (9.20, 1000): 0.15,
    (4.30, 5000): 0.03, (6.74, 5000): 0.05, (9.20, 5000): 0.07,
    (4.30, 10000): 0.02, (6.74, 10000): 0.03, (9.20, 10000): 0.05,
}


class CliError(MiaLimitsError):
    """Invalid command line; ``code`` distinguishes the failure."""

    def __init__(self, message: str, code: str = "usage_error"):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def _to_plain(obj: Any) -> Any:
    if hasattr(obj, "to_json"):
        return _to_plain(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _format(obj: Any, pretty: bool, indent: int = 0) -> str:
    pad = "  " * (indent + 1) if pretty else ""
    sep = "\n" if pretty else ""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return json.dumps(round(obj, 6)) if pretty else "%.17g" % obj
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_format(v, pretty, indent + 1)}" for k, v in obj.items()]
        close = "  " * indent if pretty else ""
        return "{" + sep + ("," + sep if pretty else ", ").join(items) + sep + close + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(_format(v, pretty, indent + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, pretty: bool = False) -> str:
    """JSON text with every float written to 17 significant digits (rounded if ``pretty``)."""
    return _format(_to_plain(obj), pretty)


# ---------------------------------------------------------------------------
# Input parsing
# ---------------------------------------------------------------------------


def _read_json(path_or_text: str) -> Any:
    path = Path(path_or_text)
    try:
        text = path.read_text() if path.is_file() else path_or_text
    except OSError as exc:
        raise CliError(str(exc), "file_error") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON: {exc}", "malformed_json") from exc


def parse_probs(text: str) -> DiscreteDistribution:
    if text.startswith("uniform:"):
        try:
            K = int(text.split(":", 1)[1])
        except ValueError as exc:
            raise CliError(f"bad uniform shorthand {text!r}", "invalid_input") from exc
        return DiscreteDistribution.uniform(K)
    if Path(text).is_file():
        obj = _read_json(text)
        if isinstance(obj, list):
            return DiscreteDistribution.from_probs(obj)
        return DiscreteDistribution.from_json(obj)
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise CliError(f"cannot parse probabilities {text!r}", "invalid_input") from exc
    return DiscreteDistribution.from_probs(values)


def _weights(args) -> AttackWeights:
    return AttackWeights(nu=args.nu, lam=args.lam)


def parse_procedure(spec: Any, K: int, n: int) -> LearningProcedureSpec:
    """Build a procedure from ``{"type": ..., "table": {...}}``.

    Table keys are comma-joined counts (``"1,0,2"``); values are a parameter
    id or an ``{id: probability}`` mixture.
    """
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    builders: dict[str, Callable[[int, int], LearningProcedureSpec]] = {
        "injective": injective_procedure,
        "constant": constant_procedure,
        "max_atom": max_atom_procedure,
    }
    if kind in builders:
        return builders[kind](K, n)
    if kind == "table":
        table = {}
        for key, value in spec.get("table", {}).items():
            try:
                counts = tuple(int(c) for c in str(key).split(","))
            except ValueError as exc:
                raise CliError(f"bad count-vector key {key!r}", "invalid_input") from exc
            table[counts] = value
        return LearningProcedureSpec(K, n, table, "table")
    raise CliError(f"unknown procedure type {kind!r}", "invalid_procedure")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_divergence(args) -> dict:
    if args.joints:
        obj = _read_json(args.joints)
        if not isinstance(obj, dict) or "j0" not in obj or "j1" not in obj:
            raise CliError('joints must be an object with "j0" and "j1"', "invalid_input")
        j0 = JointDistribution.from_matrix(obj["j0"])
        j1 = JointDistribution.from_matrix(obj["j1"])
        weights = _weights(args)
        report = security_report(weights, j0, j1)
        mi = mutual_information(j1)
        return {
            "report": report,
            "mutual_information_nats": mi,
            "pinsker_bound": pinsker_security_bound(weights.gamma, mi),
        }
    if args.p is None or args.q is None:
        raise CliError("give --p and --q, or --joints", "missing_argument")
    p = [float(v) for v in args.p.split(",")]
    q = [float(v) for v in args.q.split(",")]
    return {
        "alpha": args.alpha,
        "tilde_d": tilde_d(args.alpha, p, q),
        "d_alpha": d_alpha(args.alpha, p, q),
        "total_variation": total_variation(p, q),
    }


def cmd_discrete_security(args) -> dict:
    dist = parse_probs(args.probs)
    result = min_sec_discrete(dist, args.n, _weights(args))
    return {**result.to_json(), "sandwich": worst_case_sandwich(dist, args.n)}


def cmd_diversity(args) -> dict:
    return diversity_bounds(parse_probs(args.probs)).to_json()


def cmd_sample_size(args) -> dict:
    if args.ck is not None:
        return {"ck": args.ck, "eps": args.eps, "n": min_n_from_ck(args.ck, args.eps)}
    if args.probs is None:
        raise CliError("give --probs or --ck", "missing_argument")
    dist = parse_probs(args.probs)
    return {"ck": c_k(dist), "eps": args.eps, "n": min_n_for_security(dist, args.eps)}


def cmd_delta_bruteforce(args) -> dict:
    dist = parse_probs(args.probs)
    proc = parse_procedure(_read_json(args.procedure), dist.K, args.n)
    return delta_bruteforce(dist, args.n, _weights(args), proc).to_json()


def cmd_empmean_bound(args) -> dict:
    out: dict[str, Any] = {}
    gamma = _weights(args).gamma
    moments = None
    if args.samples:
        try:
            samples = np.loadtxt(args.samples, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read samples: {exc}", "file_error") from exc
        moments = standardized_moments(samples)
        out["moments"] = moments
    inp = EmpMeanBoundInput(
        n=args.n, d=args.d, gamma=gamma, c_lp=args.c_lp, moments=moments, c_d=args.c_d
    )
    result = empmean_security_bound(inp)
    out["bound"] = result
    out["gaussian_tv_bound"] = (
        gaussian_tv_bound(args.n, args.d, args.beta_norm) if args.n >= 2 else None
    )
    if args.target_eps is not None:
        out["min_n_sufficient"] = min_n_epsilon(result.c_lp, args.d, args.target_eps)
        out["min_n_exact"] = min_n_epsilon_exact(result.c_lp, args.d, args.target_eps)
    return out


def _overfit_config(obj: dict) -> OverfitConfig:
    try:
        task = RegressionTask(**obj["task"])
        weights = AttackWeights.from_json(obj.get("weights", {"nu": 0.5, "lambda": 1.0}))
        kwargs = {
            k: tuple(obj[k]) if k in ("eps_list", "seeds") else obj[k]
            for k in ("model", "eps_list", "attack_eps", "n_draws", "seeds")
            if k in obj
        }
    except (KeyError, TypeError) as exc:
        raise CliError(f"invalid overfit config: {exc}", "invalid_config") from exc
    config = OverfitConfig(task=task, weights=weights, **kwargs)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        base = int(env_seed)
        config = OverfitConfig(
            task=config.task, model=config.model, eps_list=config.eps_list,
            attack_eps=config.attack_eps, weights=config.weights, n_draws=config.n_draws,
            seeds=tuple(base + i for i in range(len(config.seeds))),
        )
    return config


def cmd_overfit_sim(args) -> dict:
    config = _overfit_config(_read_json(args.config))
    results = run_overfit_experiment(config, threads=args.threads)
    if args.csv_out:
        rows = fraction_curves_rows(config, results)
        with open(args.csv_out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["seed", "split", "eps", "fraction"])
            writer.writeheader()
            for row in rows:
                writer.writerow({**row, "eps": "%.17g" % row["eps"], "fraction": "%.17g" % row["fraction"]})
    return {
        "config": {
            "task": config.task.to_json(),
            "model": config.model,
            "eps_list": list(config.eps_list),
            "attack_eps": config.attack_eps,
            "weights": config.weights.to_json(),
            "n_draws": config.n_draws,
            "seeds": list(config.seeds),
        },
        "results": [
            {**asdict(r), "accuracy": asdict(r.accuracy)} for r in results
        ],
    }


def cmd_dp_bound(args) -> dict:
    weights = _weights(args)
    out = {
        "gamma": weights.gamma,
        "dp_bound": dp_security_bound(weights.gamma, args.eps, args.dp_delta),
    }
    if weights.gamma == 1.0:
        out["ldp_delta_sup"] = ldp_delta_sup(args.eps, args.dp_delta)
    return out


def reproduce_table1() -> list[dict]:
    """Worst-case leakage bound ``C_K / (2 sqrt(n))`` on the reference grid."""
    rows = []
    for n in TABLE1_N:
        for ck in TABLE1_CK:
            value = max_delta_bound_from_ck(ck, n)
            rows.append({
                "ck": ck,
                "n": n,
                "delta_bound": value,
                "rounded_nearest": round(value, 2),
                "rounded_up": math.ceil(round(value * 100, 9)) / 100,
                "reference": TABLE1_REFERENCE[(ck, n)],
            })
    return rows


def cmd_reproduce_table1(args) -> dict:
    return {"rows": reproduce_table1()}


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        code = "unknown_subcommand" if "invalid choice" in message else "usage_error"
        raise CliError(message, code)


def _add_weights(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nu", type=float, default=0.5, help="probability of a fresh test point")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="weight of the true-positive rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mia-limits", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mia-limits {__version__}")
    parser.add_argument("--pretty", action="store_true", help="indent and round floats")
    parser.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    parser.add_argument("--manifest-out", help="write a run manifest to this path")
    parser.add_argument("--replay", help="re-run a manifest and check its output digest")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("divergence", help="D_alpha, tilde D_alpha and TV, or a joint-law report")
    p.add_argument("--p")
    p.add_argument("--q")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--joints", help='JSON file or text {"j0": [[...]], "j1": [[...]]}')
    _add_weights(p)
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("discrete-security", help="minimum security over all procedures")
    p.add_argument("--probs", required=True)
    p.add_argument("--n", type=int, required=True)
    _add_weights(p)
    p.set_defaults(func=cmd_discrete_security)

    p = sub.add_parser("diversity", help="C_K, Gini-Simpson and Shannon entropy")
    p.add_argument("--probs", required=True)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("sample-size", help="n guaranteeing security at least 1 - eps")
    p.add_argument("--probs")
    p.add_argument("--ck", type=float)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_sample_size)

    p = sub.add_parser("delta-bruteforce", help="exact leakage of a procedure by enumeration")
    p.add_argument("--probs", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--procedure", default='{"type": "injective"}',
                   help="JSON file or text describing the procedure")
    _add_weights(p)
    p.set_defaults(func=cmd_delta_bruteforce)

    p = sub.add_parser("empmean-bound", help="security bound for empirical-mean procedures")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--c-lp", type=float)
    p.add_argument("--c-d", type=float, help="external CLT constant C(d)")
    p.add_argument("--samples", help="CSV file, one feature vector per row")
    p.add_argument("--beta-norm", type=float, default=0.0)
    p.add_argument("--target-eps", type=float)
    _add_weights(p)
    p.set_defaults(func=cmd_empmean_bound)

    p = sub.add_parser("overfit-sim", help="interpolating regressors and the loss attack")
    p.add_argument("--config", required=True, help="JSON file or text")
    p.add_argument("--csv-out", help="write fraction curves as CSV")
    p.set_defaults(func=cmd_overfit_sim)

    p = sub.add_parser("dp-bound", help="security bound for a differentially private procedure")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--dp-delta", type=float, default=0.0)
    _add_weights(p)
    p.set_defaults(func=cmd_dp_bound)

    p = sub.add_parser("reproduce-table1", help="C_K/(2 sqrt(n)) on the reference grid")
    p.set_defaults(func=cmd_reproduce_table1)
    return parser


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to re-run a command and check its output."""

    subcommand: str
    argv: tuple[str, ...]
    config: dict
    seed: int | None
    version: str
    wall_time: float
    output_sha256: str

    def to_json(self) -> dict:
        return {**asdict(self), "argv": list(self.argv)}

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(**{**obj, "argv": tuple(obj["argv"])})


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _run(argv: Sequence[str]) -> tuple[str, argparse.Namespace, float]:
    parser = build_parser()
    args = parser.parse_args(list(argv))
    if args.replay:
        return _replay(args.replay)
    if args.command is None:
        raise CliError("a subcommand is required", "missing_subcommand")
    start = time.perf_counter()
    text = dumps(args.func(args), pretty=args.pretty)
    elapsed = time.perf_counter() - start
    if args.manifest_out:
        config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest_out", "replay")}
        env_seed = os.environ.get(SEED_ENV)
        manifest = RunManifest(
            subcommand=args.command,
            argv=tuple(a for a in _strip_manifest_flag(argv)),
            config=config,
            seed=int(env_seed) if env_seed is not None else None,
            version=__version__,
            wall_time=elapsed,
            output_sha256=_digest(text),
        )
        Path(args.manifest_out).write_text(dumps(manifest, pretty=True) + "\n")
    return text, args, elapsed


def _strip_manifest_flag(argv: Sequence[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--manifest-out":
            skip = True
            continue
        if a.startswith("--manifest-out="):
            continue
        out.append(a)
    return out


def _replay(path: str):
    manifest = RunManifest.from_json(_read_json(path))
    if manifest.seed is not None:
        os.environ[SEED_ENV] = str(manifest.seed)
    text, args, elapsed = _run(manifest.argv)
    if _digest(text) != manifest.output_sha256:
        raise RuntimeError("replayed output does not match the manifest digest")
    return text, args, elapsed


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        text, _, _ = _run(argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except MiaLimitsError as exc:
        print(dumps({"error": {"code": exc.code, "message": str(exc)}}))
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        print(dumps({"error": {"code": "internal_error", "message": f"{type(exc).__name__}: {exc}"}}))
        return 1
    print(text)
    return 0
