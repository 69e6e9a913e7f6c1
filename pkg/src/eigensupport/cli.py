"""Command-line front end.

    eigensupport identify graph.txt
    eigensupport simulate --model gaussian --kite 5 --n 500
    eigensupport estimate --data sample.csv --algorithm bagging --truth graph.txt
    eigensupport reproduce kite5 --replications 100
    eigensupport phase --n 60 --trials 100

Every command writes ``manifest.json`` to ``--out``; passing that file back
through ``--config`` repeats the run.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data_models import (DatasetHandle, GapLaw, KhatEstimate, gen_gaussian_covariance,
                          gen_markov_random_times, gen_ou_random_times, gen_var_random_times)
from .estimators import (adaptive_stop, backward_trajectory, bagging_backward, l0_estimate,
                         l2_threshold_estimate)
from .exceptions import EigenSupportError, InvalidArgument, ParseError
from .experiments import (g2_study, kite5_study, phase_study, rows_to_csv, rows_to_markdown,
                          spectrum_csv, normalized_adjacency)
from .graph_core import (ForbiddenSet, Support, make_kite, read_edge_list, support_error,
                         write_edge_list)
from .identifiability import identify, kernel_identifiability_test
from .spectral_ops import SpectralFunction, read_matrix_text

EXIT_USAGE = 2
EXIT_FAILURE = 3


class UsageError(Exception):
    pass


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(args):
    skip = {"func", "config"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return {"config": cfg,
            "versions": {"eigensupport": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()}}


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _graph(args):
    if getattr(args, "graph", None):
        return read_edge_list(args.graph)
    if getattr(args, "kite", None):
        return make_kite(args.kite)
    raise UsageError("give a graph file (--graph) or a kite size (--kite)")


# -- identify ---------------------------------------------------------------

def cmd_identify(args):
    s = read_edge_list(args.graph_file)
    if args.method == "kernel":
        v = kernel_identifiability_test(s, trials=args.trials, seed=args.seed)
    else:
        v = identify(s, trials=args.trials, seed=args.seed)
    label = "identifiable" if v.identifiable else "not identifiable"
    print(f"{label} ({v.method})")
    if v.witness is not None and not isinstance(v.witness, np.ndarray):
        print(f"witness: {[int(x) + 1 for x in v.witness]}")
    elif isinstance(v.witness, np.ndarray):
        print("witness: commuting zero-diagonal matrix written to the report")
    if args.json or args.out_given:
        _dump(_out(args) / "identify.json", v.to_dict())
    return 0


# -- simulate ---------------------------------------------------------------

def _default_chain(s):
    """Symmetric, doubly stochastic walk on the graph: ``I - L / (d_max + 1)``."""
    a = s.adjacency()
    lap = np.diag(a.sum(axis=1)) - a
    return np.eye(len(a)) - lap / (a.sum(axis=1).max() + 1)


def cmd_simulate(args):
    s = _graph(args)
    f = SpectralFunction.parse(args.f)
    w = normalized_adjacency(s)
    out = _out(args)
    if args.model == "gaussian":
        data, est = gen_gaussian_covariance(w, f, args.n, seed=args.seed, sigma=args.sigma)
    elif args.model == "markov":
        p = read_matrix_text(args.p_matrix) if args.p_matrix else _default_chain(s)
        data, est = gen_markov_random_times(p, GapLaw.parse(args.gap_law), args.n, seed=args.seed)
    elif args.model == "var":
        data, est = gen_var_random_times(w * args.scale, GapLaw.parse(args.gap_law), args.n,
                                         args.noise_scale, seed=args.seed)
    else:
        shift = np.eye(len(w)) * (1 - np.linalg.eigvalsh(w)[0])
        data, est = gen_ou_random_times(w + shift, GapLaw.parse(args.gap_law), args.n,
                                        seed=args.seed)
    data.write(out / "sample.csv")
    est.write(out / "sample")
    write_edge_list(s, out / "truth.txt")
    print(f"wrote {data.n_units} {args.model} observations to {out / 'sample.csv'}")
    return 0


# -- estimate ---------------------------------------------------------------

_ALG_PARAMS = {"l0": {"lam", "criterion"}, "l2": {"threshold"},
               "backward": {"min_edges", "keep_prob"},
               "bagging": {"min_edges", "keep_prob", "runs"}}


def cmd_estimate(args):
    if args.algorithm is None:
        raise UsageError("--algorithm is required")
    given = {k for k in ("lam", "threshold", "min_edges", "keep_prob", "runs", "criterion")
             if getattr(args, k) is not None}
    wrong = given - _ALG_PARAMS[args.algorithm]
    if wrong:
        raise UsageError(f"--{sorted(wrong)[0].replace('_', '-')} does not apply to {args.algorithm}")
    if bool(args.data) == bool(args.khat):
        raise UsageError("give exactly one of --data or --khat")
    data = DatasetHandle.read(args.data) if args.data else None
    est = data.estimate() if data is not None else KhatEstimate.read(args.khat)
    n = est.k_hat.shape[0]
    forbidden = ForbiddenSet.diagonal(n)
    out = _out(args)
    min_edges = args.min_edges if args.min_edges is not None else 1
    traj = None
    if args.algorithm == "l0":
        s = l0_estimate(est.k_hat, forbidden, args.lam if args.lam is not None else 0.01,
                        criterion=args.criterion or "min_singular")
    elif args.algorithm == "l2":
        s = l2_threshold_estimate(est.k_hat, forbidden, args.threshold or 0.0)
    elif args.algorithm == "backward":
        train = est
        keep = args.keep_prob if args.keep_prob is not None else 0.5
        if data is not None and keep < 1:
            rng = np.random.default_rng(args.seed)
            mask = rng.random(data.n_obs) < keep
            train = data.estimate(mask)
        traj = backward_trajectory(train.k_hat, forbidden, train.n, train.sigma_hat, min_edges,
                                   k_hat_ref=est.k_hat)
        s = adaptive_stop(traj, est.k_hat)
    else:
        if data is None:
            raise UsageError("bagging needs raw observations (--data)")
        res = bagging_backward(data, forbidden, args.runs or 100,
                               args.keep_prob if args.keep_prob is not None else 0.5,
                               seed=args.seed, min_edges=min_edges, k_hat_full=est.k_hat,
                               jobs=args.jobs)
        s = res.final_support
        (out / "bagging.json").write_text(res.to_json() + "\n")
    write_edge_list(s, out / "estimate.txt")
    if traj is not None:
        (out / "trajectory.csv").write_text(traj.to_csv())
        (out / "trajectory.json").write_text(traj.to_json() + "\n")
    print(f"estimated support: {len(s)} edges {s.one_based()}")
    if args.truth:
        truth = read_edge_list(args.truth)
        err = support_error(s, truth)
        print(f"support error: {err}")
        print(f"exact: {err == 0}")
        _dump(out / "error.json", {"support_error": err, "exact": err == 0})
    return 0


# -- reproduce and phase ----------------------------------------------------

def cmd_reproduce(args):
    out = _out(args)
    reps = args.replications or (1000 if args.full else 100)
    timing = {}
    if args.table == "kite5":
        rows, _, sec = kite5_study(reps, args.seed, n=args.n or 500, m_runs=args.runs,
                                   jobs=args.jobs)
        extra = {"n": args.n or 500}
        timing["kite5"] = sec
        body = rows_to_markdown(rows, "kite, 5 vertices")
    elif args.table == "g2":
        f = SpectralFunction.parse(args.f)
        grid = [args.n] if args.n else [10**4, 5000, 2000, 1000]
        rows, csv_parts, md = [], [], []
        for n in grid:
            r, _, sec = g2_study(f, n, reps, args.seed, m_runs=args.runs, jobs=args.jobs)
            timing[f"g2_n{n}"] = sec
            csv_parts.append(rows_to_csv(r, {"f": args.f, "n": n}))
            md.append(rows_to_markdown(r, f"15-vertex graph, f={args.f}, n={n}"))
        (out / "g2.csv").write_text(csv_parts[0] + "".join(p.split("\n", 1)[1] for p in csv_parts[1:]))
        (out / "g2.md").write_text("\n".join(md))
        _dump(out / "timing.json", timing)
        print("\n".join(md))
        return 0
    elif args.table == "spectrum":
        text, gaps = spectrum_csv()
        (out / "spectrum.csv").write_text(text)
        _dump(out / "spectrum_gaps.json", {k: float(v) for k, v in gaps.items()})
        print(text + json.dumps({k: round(float(v), 6) for k, v in gaps.items()}))
        return 0
    else:
        rep = phase_study(args.n or 60, trials=reps, seed=args.seed, jobs=args.jobs)
        rep.write(out / "phase.csv")
        print((out / "phase.csv").read_text())
        return 0
    (out / f"{args.table}.csv").write_text(rows_to_csv(rows, extra))
    (out / f"{args.table}.md").write_text(body)
    _dump(out / "timing.json", timing)
    print(body)
    return 0


def cmd_phase(args):
    out = _out(args)
    mult = [float(x) for x in args.multipliers.split(",")]
    rep = phase_study(args.n, mult, args.trials, args.seed, args.jobs)
    rep.write(out / "phase.csv")
    for p, fr, _ in rep.rows():
        print(f"p={p:.5f}  c={p * args.n / math.log(args.n):.3f}  frequency={fr:.3f}")
    return 0


# -- parser -----------------------------------------------------------------

COMMON_OPTIONS = ("seed", "out", "jobs", "config")


def _common_options(suppress):
    """Shared flags; copies attached to subcommands leave unset flags alone."""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default(0), help="master random seed")
    common.add_argument("--out", default=default(None), help="output directory (default: current)")
    common.add_argument("--jobs", type=int, default=default(1), help="worker processes")
    common.add_argument("--config", default=default(None), help="JSON file of option defaults")
    return common


def build_parser():
    p = argparse.ArgumentParser(prog="eigensupport", parents=[_common_options(False)],
                                description="Support recovery from commuting observations.")
    common = _common_options(True)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("identify", parents=[common], help="decide identifiability of a graph")
    q.add_argument("graph_file")
    q.add_argument("--method", choices=["auto", "kernel"], default="auto")
    q.add_argument("--trials", type=int, default=3)
    q.add_argument("--json", action="store_true", help="write identify.json")
    q.set_defaults(func=cmd_identify)

    q = sub.add_parser("simulate", parents=[common], help="draw a synthetic sample")
    q.add_argument("--model", choices=["gaussian", "markov", "var", "ou"], default="gaussian")
    q.add_argument("--graph", help="edge-list file")
    q.add_argument("--kite", type=int, help="use the kite on this many vertices")
    q.add_argument("--f", default="exp", help="exp, inverse or inv-square (gaussian model)")
    q.add_argument("--n", type=int, default=500)
    q.add_argument("--sigma", choices=["gaussian", "empirical"], default="gaussian")
    q.add_argument("--gap-law", default="point_mass:1")
    q.add_argument("--noise-scale", type=float, default=1.0)
    q.add_argument("--scale", type=float, default=0.9, help="multiplier on W for the VAR model")
    q.add_argument("--p-matrix", help="text file with a transition matrix (markov)")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("estimate", parents=[common], help="estimate a support")
    q.add_argument("--data", help="sample CSV written by simulate")
    q.add_argument("--khat", help="stem of a k_hat/sigma binary pair")
    q.add_argument("--algorithm", choices=sorted(_ALG_PARAMS), help="required")
    q.add_argument("--lam", type=float)
    q.add_argument("--criterion", choices=["min_singular", "restricted"])
    q.add_argument("--threshold", type=float)
    q.add_argument("--min-edges", type=int)
    q.add_argument("--keep-prob", type=float)
    q.add_argument("--runs", type=int)
    q.add_argument("--truth", help="edge list of the true support")
    q.set_defaults(func=cmd_estimate)

    q = sub.add_parser("reproduce", parents=[common], help="rerun a benchmark table")
    q.add_argument("table", choices=["kite5", "g2", "spectrum", "phase"])
    q.add_argument("--replications", type=int)
    q.add_argument("--full", action="store_true", help="full-scale replication count")
    q.add_argument("--f", default="inv-square")
    q.add_argument("--n", type=int)
    q.add_argument("--runs", type=int, default=100, help="bagging runs per replication")
    q.set_defaults(func=cmd_reproduce)

    q = sub.add_parser("phase", parents=[common], help="identifiability of random graphs")
    q.add_argument("--n", type=int, default=60)
    q.add_argument("--trials", type=int, default=100)
    q.add_argument("--multipliers", default="0.25,0.5,0.75,1,1.25,1.5,2,3")
    q.set_defaults(func=cmd_phase)
    return p, sub.choices


def parse_args(argv):
    parser, subparsers = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {known.config}: {exc}") from None
        cfg = cfg.get("config", cfg)
        command = cfg.pop("command", None)
        if command and not any(a in subparsers for a in argv):
            argv = [command] + list(argv)
        chosen = next((a for a in argv if a in subparsers), None)
        if chosen:
            # a manifest also carries the positional argument
            positional = {"identify": "graph_file", "reproduce": "table"}.get(chosen)
            if positional and positional in cfg:
                idx = argv.index(chosen)
                rest = argv[idx + 1:]
                if not [a for a in rest if not a.startswith("-")]:
                    argv = argv[:idx + 1] + [str(cfg[positional])] + rest
            parser.set_defaults(**{k: v for k, v in cfg.items() if k in COMMON_OPTIONS})
            subparsers[chosen].set_defaults(**{k: v for k, v in cfg.items()
                                               if k != positional and k not in COMMON_OPTIONS})
    args = parser.parse_args(argv)
    args.out_given = args.out is not None
    if args.out is None:
        args.out = "."
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse reports bad flags this way
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        code = args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EigenSupportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    manifest = _manifest(args)
    manifest["config"]["command"] = args.command
    manifest["config"].pop("out_given", None)
    _dump(Path(args.out) / "manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
