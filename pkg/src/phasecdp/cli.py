"""Command-line interface.

Subcommands:
  simulate          draw a signal, masks, and measurements; write them out
  solve             run one recovery, end-to-end or from saved measurements
  phase-transition  success-rate sweep over the number of patterns
  noise-sweep       Poisson-noise sweep over an SNR grid with a line fit
  verify-theory     numerical checks of the supporting lemmas

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness, masks
from .analysis import rel_error_lifted, rel_mse_db, rel_mse_lifted, snr_db
from .harness import ExperimentSpec, derive_seed
from .measurement import (
    LiftedOperator,
    MeasurementSet,
    add_poisson_noise,
    forward_cdp,
    forward_gaussian,
    read_measurement_csv,
)
from .signals import SignalVector
from .solver import SolverConfig, solve_poisson, solve_trace_ls


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasecdp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path prefix")

    p_sim = sub.add_parser("simulate", help="generate signal, masks, measurements")
    common(p_sim)
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--L", type=int)
    p_sim.add_argument("--signal-model", choices=harness.SIGNAL_MODELS)
    p_sim.add_argument("--measurement-model", choices=harness.MEASUREMENT_MODELS)
    p_sim.add_argument("--noise-snr-db", type=float)

    p_solve = sub.add_parser("solve", help="run one recovery")
    common(p_solve)
    p_solve.add_argument("--n", type=int)
    p_solve.add_argument("--L", type=int)
    p_solve.add_argument("--signal-model", choices=harness.SIGNAL_MODELS)
    p_solve.add_argument("--measurement-model", choices=harness.MEASUREMENT_MODELS)
    p_solve.add_argument("--noise-snr-db", type=float)
    p_solve.add_argument("--measurements", help="measurement CSV from `simulate`")
    p_solve.add_argument("--ensemble", help="ensemble JSON from `simulate`")
    p_solve.add_argument("--signal", help="signal JSON from `simulate`, to score recovery")
    p_solve.add_argument("--lam", type=float)
    p_solve.add_argument("--max-iters", type=int)
    p_solve.add_argument("--rel-obj-tol", type=float)
    p_solve.add_argument("--loss", choices=["squared_l2", "poisson"])
    p_solve.add_argument("--step-rule", choices=["fixed", "backtracking"])
    p_solve.add_argument("--x0", choices=["zero", "scaled_adjoint"])

    p_pt = sub.add_parser("phase-transition", help="success-rate sweep over L")
    common(p_pt)
    p_pt.add_argument("--n", type=int)
    p_pt.add_argument("--trials", type=int)
    p_pt.add_argument("--L-list", type=int, nargs="+")
    p_pt.add_argument("--signal-model", choices=harness.SIGNAL_MODELS)
    p_pt.add_argument("--measurement-model", choices=harness.MEASUREMENT_MODELS)
    p_pt.add_argument("--max-iters", type=int)

    p_ns = sub.add_parser("noise-sweep", help="Poisson-noise sweep over SNR")
    common(p_ns)
    p_ns.add_argument("--n", type=int)
    p_ns.add_argument("--trials", type=int)
    p_ns.add_argument("--L", type=int)
    p_ns.add_argument("--snr-list", type=float, nargs="+")
    p_ns.add_argument("--signal-model", choices=harness.SIGNAL_MODELS)
    p_ns.add_argument("--measurement-model", choices=harness.MEASUREMENT_MODELS)
    p_ns.add_argument("--max-iters", type=int)

    p_vt = sub.add_parser("verify-theory", help="numerical lemma checks")
    common(p_vt)
    p_vt.add_argument("--lemma", choices=harness.THEORY_LEMMAS, required=True)
    p_vt.add_argument("--n", type=int, default=16)
    p_vt.add_argument("--mode", choices=["exact", "mc"], default="exact")
    p_vt.add_argument("--samples", type=int, default=100_000)
    p_vt.add_argument("--trials", type=int)
    p_vt.add_argument("--L", type=int, default=64)
    p_vt.add_argument("--L-list", type=int, nargs="+")
    p_vt.add_argument("--beta", type=float, default=3.0)
    p_vt.add_argument("--batches", type=int, default=7)
    p_vt.add_argument("--batch-size", type=int, default=2048)
    p_vt.add_argument("--tol", type=float)

    return parser


def _merged_spec(args, kind: str, list_field: str | None = None) -> ExperimentSpec:
    data = _load_config(args.config)
    data["kind"] = kind
    overrides = {
        "n": args.n,
        "trials": getattr(args, "trials", None),
        "master_seed": args.seed,
        "signal_model": getattr(args, "signal_model", None),
        "measurement_model": getattr(args, "measurement_model", None),
        "out": args.out,
        "L": getattr(args, "L", None),
        "noise_snr_db": getattr(args, "noise_snr_db", None),
    }
    if list_field == "L_list":
        overrides["L_list"] = getattr(args, "L_list", None)
    if list_field == "snr_list":
        overrides["snr_list"] = getattr(args, "snr_list", None)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    if getattr(args, "max_iters", None) is not None:
        data.setdefault("solver", {})["max_iters"] = args.max_iters
    try:
        return ExperimentSpec.from_json_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _signal_to_json(x: SignalVector) -> dict:
    return {
        "n": x.n,
        "model": x.model,
        "seed": x.seed,
        "entries": [[float(v.real), float(v.imag)] for v in x.entries],
    }


def _signal_from_json(data: dict) -> SignalVector:
    entries = np.array([complex(re, im) for re, im in data["entries"]])
    return SignalVector(entries, model=data.get("model", "custom"), seed=data.get("seed"))


def _cmd_simulate(args) -> int:
    spec = _merged_spec(args, harness.SINGLE_SOLVE)
    if spec.out is None:
        raise ConfigError("simulate requires --out")
    seed = derive_seed(spec.master_seed, 0, 0)
    x = harness._make_signal(spec.signal_model, spec.n, derive_seed(seed, 0))
    if spec.measurement_model == "gaussian":
        y = forward_gaussian(x, spec.n * spec.L, derive_seed(seed, 1))
        ensemble = None
    else:
        ensemble = harness._make_cdp_ensemble(
            spec.measurement_model, spec.n, spec.L, derive_seed(seed, 1)
        )
        y = forward_cdp(x, ensemble)
    if spec.noise_snr_db is not None:
        y = add_poisson_noise(y, spec.noise_snr_db, seed=derive_seed(seed, 2))
    y.to_csv(f"{spec.out}_measurements.csv")
    with open(f"{spec.out}_signal.json", "w") as fh:
        json.dump(_signal_to_json(x), fh)
        fh.write("\n")
    if ensemble is not None:
        with open(f"{spec.out}_ensemble.json", "w") as fh:
            json.dump(ensemble.to_json_dict(explicit_patterns=True), fh)
            fh.write("\n")
    print(f"wrote {spec.out}_measurements.csv")
    return 0


def _solver_overrides(args) -> dict:
    overrides = {}
    for flag, key in [
        ("lam", "lam"),
        ("max_iters", "max_iters"),
        ("rel_obj_tol", "rel_obj_tol"),
        ("loss", "loss"),
        ("step_rule", "step_rule"),
        ("x0", "x0"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _cmd_solve(args) -> int:
    if args.measurements:
        if not args.ensemble:
            raise ConfigError("--measurements requires --ensemble")
        values, header = read_measurement_csv(args.measurements)
        with open(args.ensemble) as fh:
            ensemble = masks.ensemble_from_json_dict(json.load(fh))
        y = MeasurementSet(values, ensemble=ensemble)
        op = LiftedOperator(ensemble)
        noisy = header.get("noise") is not None
        if noisy:
            snr = header["noise"].get("realized_snr_db") or 30.0
            cfg_kwargs = {
                "lam": 1.0 / 10.0 ** (snr / 20.0),
                "loss": "poisson",
                "step_rule": "backtracking",
                "x0": "scaled_adjoint",
            }
            cfg_kwargs.update(_solver_overrides(args))
            report = solve_poisson(op, y, SolverConfig(**cfg_kwargs))
        else:
            cfg_kwargs = {"lam": 1e-3}
            cfg_kwargs.update(_solver_overrides(args))
            report = solve_trace_ls(op, y, SolverConfig(**cfg_kwargs))
        result = {
            "source": args.measurements,
            "solver": report.to_json_dict(trace_stride=max(1, report.iterations // 200)),
        }
        if args.signal:
            with open(args.signal) as fh:
                truth = _signal_from_json(json.load(fh))
            rel = rel_error_lifted(report.X_hat, truth)
            result["rel_err"] = rel
            result["success"] = bool(rel < harness.SUCCESS_THRESHOLD)
            if np.linalg.norm(report.X_hat) > 0:
                result["rel_mse_db"] = rel_mse_db(rel_mse_lifted(report.X_hat, truth))
            result["snr_db"] = snr_db(y, truth, op)
    else:
        spec = _merged_spec(args, harness.SINGLE_SOLVE)
        extra = _solver_overrides(args)
        spec.solver.update(extra)
        result = harness.run_single_solve(spec)
    out = args.out
    if out:
        with open(f"{out}_solve.json", "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {out}_solve.json")
    else:
        json.dump(result, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _cmd_phase_transition(args) -> int:
    spec = _merged_spec(args, harness.PHASE_TRANSITION, list_field="L_list")
    if spec.out is None:
        raise ConfigError("phase-transition requires --out (or out in the config)")
    record = harness.run_phase_transition(spec)
    paths = record.write()
    rates = ", ".join(
        f"L={a['param']:g}: {a['success_rate']:.2f}" for a in record.aggregates
    )
    print(f"success rates: {rates}")
    print(f"wrote {paths['trials']}")
    return 0


def _cmd_noise_sweep(args) -> int:
    spec = _merged_spec(args, harness.NOISE_SWEEP, list_field="snr_list")
    if spec.out is None:
        raise ConfigError("noise-sweep requires --out (or out in the config)")
    record = harness.run_noise_sweep(spec)
    paths = record.write()
    fit = record.summary["fit"]
    if fit is not None:
        print(
            f"fit: slope={fit['slope']:.3f} intercept={fit['intercept']:.2f} r2={fit['r2']:.3f}"
        )
    print(f"wrote {paths['trials']}")
    return 0


def _cmd_verify_theory(args) -> int:
    data = _load_config(args.config)
    kwargs = {
        "lemma": args.lemma,
        "n": args.n,
        "mode": args.mode,
        "samples": args.samples,
        "L": args.L,
        "beta": args.beta,
        "batches": args.batches,
        "batch_size": args.batch_size,
    }
    if args.trials is not None:
        kwargs["trials"] = args.trials
    if args.L_list is not None:
        kwargs["L_list"] = args.L_list
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.tol is not None:
        kwargs["tol"] = args.tol
    for key, value in data.items():
        kwargs.setdefault(key, value)
    try:
        report = harness.run_verify_theory(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(f"{args.out}_{args.lemma}.json", "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}_{args.lemma}.json")
    else:
        print(text)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "phase-transition": _cmd_phase_transition,
    "noise-sweep": _cmd_noise_sweep,
    "verify-theory": _cmd_verify_theory,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        handler = _COMMANDS[args.command]
    except KeyError:
        print(f"unknown command {args.command!r}", file=sys.stderr)
        return 2
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures: IO, divergence, unreachable SNR
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
