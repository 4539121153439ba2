"""Command-line interface: ``rmcert <subcommand> ...``.

Every failure exits nonzero; ``--error-json`` prints the error as one JSON
line on stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .boundary import RULES, boundary_curves, certify_point
from .config import ExperimentConfig, load_config
from .errors import DomainError, RmcertError
from .pipeline import build_state, noise_sweep, run_pipeline, simulate_dataset
from .qudit import fidelity
from .randmeas import Observable, calibrate_observable, estimate_moments, setting_unitaries
from .sampling import SeededStream
from .tomography import mub_bases, reconstruct
from .witness import dft_certify, dft_correlator

EXIT_ERROR = 1
EXIT_INTERNAL = 70


def _emit(obj, out=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _config_from_args(args, **extra):
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    changes = {k: v for k, v in extra.items() if v is not None}
    for name in ("seed", "k_sigma", "d"):
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "events", None) is not None:
        changes["n_events"] = args.events
    if getattr(args, "exact", False):
        changes["n_events"] = None
    return cfg.replace(**changes)


def cmd_gen_state(args):
    cfg = _config_from_args(args, state=args.kind, phimax=args.phimax, dephasing_n=args.n)
    rho = build_state(cfg)
    io.save_state(rho, args.out)
    print(args.out)


def cmd_sample_unitaries(args):
    pr = tuple(args.phase_noise) if args.phase_noise else None
    ua, ub = setting_unitaries(args.d, args.seed, 0, args.n, pr)
    io.save_unitaries(ua, ub, args.out, {"seed": args.seed, "phase_noise": list(pr) if pr else None})
    print(args.out)


def cmd_simulate(args):
    cfg = _config_from_args(args, state="file", state_file=args.state, n_unitaries=args.n, observable=args.observable)
    rho = io.load_state(args.state)
    cfg = cfg.replace(d=rho.dim_a)
    obs = Observable.from_spec(cfg.d, cfg.observable)
    if args.unitaries:
        from .randmeas import SettingRecord, _draw_counts, correlators, outcome_probabilities
        from .sampling import TAG_COUNTS

        ua, ub = io.load_unitaries(args.unitaries)
        if cfg.n_events is None:
            xs = correlators(rho, ua, ub, obs)
            records = [SettingRecord(ua[i], ub[i], x=float(xs[i])) for i in range(len(ua))]
        else:
            p = outcome_probabilities(rho, ua, ub)
            cs = SeededStream(cfg.seed).child(TAG_COUNTS)
            records = [SettingRecord(ua[i], ub[i], counts=_draw_counts(p[i], cfg.n_events, cs.at(i))) for i in range(len(ua))]
        ds = io.RandomizedDataset(cfg.d, obs, records, {"seed": cfg.seed, "n_events": cfg.n_events, "unitaries": str(args.unitaries)})
    else:
        ds = simulate_dataset(rho, cfg, obs)
    io.save_dataset(ds, args.out)
    print(args.out)


def cmd_estimate(args):
    ds = io.ingest(args.dataset)
    est = estimate_moments(ds.correlators(), ds.d, args.kappa4)
    if args.out:
        io.save_estimate(est, args.out)
    _emit(est.to_dict())


def cmd_boundary(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for c in boundary_curves(args.d, args.grid):
        print(c.to_csv(out / f"boundary_r{c.r}.csv"))


def cmd_certify(args):
    if args.estimate:
        est = io.load_estimate(args.estimate)
    else:
        ds = io.ingest(args.dataset)
        est = estimate_moments(ds.correlators(), ds.d, args.kappa4)
    rep = certify_point(est, args.d, boundary_curves(args.d, args.grid), args.k_sigma, args.rule)
    body = {"estimate": est.to_dict(), "certification": rep.to_dict()}
    if args.out:
        io.save_report(body, args.out)
    _emit(body)


def cmd_tomo(args):
    data = io.load_tomo_counts(args.counts)
    res = reconstruct(data, mub_bases(data.d), weighted=args.weighted, n_starts=args.starts, seed=args.seed, workers=args.workers)
    io.save_state(res.rho, args.out)
    body = {"objective": res.objective, "iterations": res.iterations, "converged": res.converged, "state": str(args.out)}
    if args.reference:
        body["fidelity"] = fidelity(res.rho, io.load_state(args.reference))
    _emit(body)


def cmd_witness_dft(args):
    if args.value is None and not args.state:
        raise DomainError("give --state or --value")
    if args.state:
        rho = io.load_state(args.state)
        c, d = dft_correlator(rho), rho.dim_a
    else:
        if args.d is None:
            raise DomainError("--value needs --d")
        c, d = args.value, args.d
    _emit({"value": c, "d": d, "certified_r": dft_certify(c, d)})


def cmd_noise_sweep(args):
    cfg = _config_from_args(args)
    rows = noise_sweep(cfg, args.widths, args.dft_trials)
    if args.out:
        keys = list(rows[0])
        io.write_csv(args.out, keys, ([r[k] for k in keys] for r in rows))
    _emit(rows)


def cmd_calibrate(args):
    obs = Observable.from_spec(args.d, args.observable)
    cal = calibrate_observable(obs, args.d, args.samples, SeededStream(args.seed), args.states)
    _emit({"observable": [float(v) for v in obs.eigenvalues], **cal.__dict__})


def cmd_run(args):
    cfg = _config_from_args(args)
    res = run_pipeline(cfg, args.out)
    _emit(res.report)


def _observable_arg(text):
    if text in ("isotropic", "linear"):
        return text
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"observable must be 'isotropic', 'linear' or comma-separated values: {text}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--error-json", action="store_true", default=argparse.SUPPRESS, help="print failures as JSON on stderr")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="rmcert", description=__doc__.splitlines()[0], parents=[common], allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help, parents=[common], allow_abbrev=False)
        sp.set_defaults(func=fn)
        return sp

    def sim_flags(sp):
        sp.add_argument("--config", help="ExperimentConfig JSON")
        sp.add_argument("--seed", type=int)
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--exact", action="store_true", help="exact correlators (no shot noise)")
        g.add_argument("--events", type=int, help="events per setting")

    sp = add("gen-state", cmd_gen_state, "write a state file")
    sp.add_argument("--kind", choices=("mes", "dephased", "product"), default="mes")
    sp.add_argument("--d", type=int, default=5)
    sp.add_argument("--phimax", type=float)
    sp.add_argument("--n", type=int, help="dephasing ensemble size")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("sample-unitaries", cmd_sample_unitaries, "write seeded Haar settings")
    sp.add_argument("--d", type=int, default=5)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--phase-noise", type=float, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--out", required=True)

    sp = add("simulate", cmd_simulate, "simulate a randomized-measurement dataset")
    sp.add_argument("--state", required=True)
    sp.add_argument("--unitaries", help="settings file (default: seeded settings)")
    sp.add_argument("--n", type=int, help="number of settings")
    sp.add_argument("--observable", type=_observable_arg)
    sim_flags(sp)
    sp.add_argument("--out", required=True)

    sp = add("estimate", cmd_estimate, "moments and uncertainties from a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kappa4", type=float, default=1.0)
    sp.add_argument("--out")

    sp = add("boundary", cmd_boundary, "write boundary curves")
    sp.add_argument("--d", type=int, default=5)
    sp.add_argument("--grid", type=int, default=512)
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("certify", cmd_certify, "certify an estimate or dataset")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--estimate")
    g.add_argument("--dataset")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--k-sigma", type=float, default=2.0)
    sp.add_argument("--rule", choices=RULES, default="ellipse")
    sp.add_argument("--grid", type=int, default=512)
    sp.add_argument("--kappa4", type=float, default=1.0)
    sp.add_argument("--out")

    sp = add("tomo", cmd_tomo, "MUB tomography from counts")
    sp.add_argument("--counts", required=True)
    sp.add_argument("--weighted", action="store_true")
    sp.add_argument("--starts", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--reference", help="state file to report fidelity against")
    sp.add_argument("--out", required=True)

    sp = add("witness-dft", cmd_witness_dft, "two-basis witness value and certified r")
    sp.add_argument("--state")
    sp.add_argument("--value", type=float)
    sp.add_argument("--d", type=int)

    sp = add("noise-sweep", cmd_noise_sweep, "certification versus phase-noise width")
    sim_flags(sp)
    sp.add_argument("--d", type=int)
    sp.add_argument("--k-sigma", type=float)
    sp.add_argument("--widths", type=float, nargs="+", default=[0.0, np.pi / 2, np.pi, 2 * np.pi])
    sp.add_argument("--dft-trials", type=int, default=1)
    sp.add_argument("--out", help="CSV path")

    sp = add("calibrate", cmd_calibrate, "fourth-moment scale of an observable")
    sp.add_argument("--d", type=int, default=5)
    sp.add_argument("--observable", type=_observable_arg, default="isotropic")
    sp.add_argument("--samples", type=int, default=20000)
    sp.add_argument("--states", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("run", cmd_run, "full pipeline")
    sim_flags(sp)
    sp.add_argument("--d", type=int)
    sp.add_argument("--k-sigma", type=float)
    sp.add_argument("--out", help="output directory")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (RmcertError, OSError) as exc:
        return _fail(args, exc, EXIT_ERROR)
    except Exception as exc:  # noqa: BLE001
        return _fail(args, exc, EXIT_INTERNAL)
    return 0


def _fail(args, exc, code):
    if isinstance(exc, RmcertError):
        body = exc.to_dict()
    else:
        body = {"error": "io" if isinstance(exc, OSError) else "internal", "type": type(exc).__name__, "message": str(exc)}
    if getattr(args, "error_json", False):
        print(json.dumps(body, sort_keys=True), file=sys.stderr)
    else:
        print(f"rmcert: error: {body.get('message', exc)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
