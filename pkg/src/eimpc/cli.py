"""Command-line entry point.

Exit codes: 0 success, 2 infeasible input state, 3 configuration error,
4 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import fields

import numpy as np

from .active_set import ActiveSetSolver, SolverOptions, Status, Termination
from .batch_qp import assemble_batch, objective
from .certificates import certify
from .datagen import (WalkConfig, generate_data, manifest_text, read_dataset, stack_records,
                      write_dataset)
from .errors import (FormatError, InfeasibleError, InvalidArgumentError, IterationLimitError,
                     NonConvergenceError, RecursiveFeasibilityError, TrainingDivergenceError)
from .formats import load_problem, save_problem
from .neural import DEFAULT_WIDTHS, TrainConfig, forward, load_model, loss_data, save_model, train
from .planner import Method, closed_loop_eval, open_loop_eval
from .systems import build_benchmark

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("eimpc")


class ConfigError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


_PATH_ARGS = ("func", "out", "data", "model", "warm", "problem", "verbose")


def _config_hash(args):
    """Hash of the flags that influence results (paths excluded)."""
    items = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
             for k, v in sorted(vars(args).items()) if k not in _PATH_ARGS}
    return hashlib.sha256(json.dumps(items, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _solver_options(pairs):
    opts = {}
    known = {f.name: f.type for f in fields(SolverOptions)}
    for pair in pairs or ():
        key, _, val = pair.partition("=")
        if key not in known:
            raise ConfigError(f"unknown solver option {key!r}; known: {', '.join(known)}")
        if key == "temporary_bounds":
            opts[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in ("max_iter_factor", "cycle_repeats"):
            opts[key] = int(val)
        else:
            opts[key] = float(val)
    return SolverOptions(**opts)


def _load_spec(args, data_dir=None):
    if getattr(args, "problem", None):
        return load_problem(args.problem)
    if getattr(args, "sys", None):
        return build_benchmark(args.sys, args.variant)
    if data_dir is not None:
        path = os.path.join(data_dir, "problem.txt")
        if os.path.exists(path):
            return load_problem(path)
    raise ConfigError("no problem given: use --sys, --problem or a data directory with problem.txt")


def _require(path):
    if not os.path.exists(path):
        raise ConfigError(f"missing input {path}")
    return path


def _threads(args):
    t = args.threads or int(os.environ.get("MPC_WARMSTART_THREADS", "1") or 1)
    if t != 1:
        log.info("--threads %d requested; running single-threaded", t)
    return t


def _write_report(out_dir, stem, header, rows, cfg_hash):
    """Aligned text table plus comma-separated ``method,metric,value`` rows."""
    os.makedirs(out_dir, exist_ok=True)
    keys = list(rows[0].keys()) if rows else []
    fmt = lambda v: f"{v:.6g}" if isinstance(v, float) else str(v)
    table = [keys] + [[fmt(r[k]) for k in keys] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(keys))]
    text = [f"# {header}", f"# config {cfg_hash}"]
    text += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in table]
    with open(os.path.join(out_dir, f"{stem}.txt"), "w", newline="\n") as f:
        f.write("\n".join(text) + "\n")
    label_keys = [k for k in keys if k in ("init", "criterion", "method")]
    csv = ["method,metric,value"]
    for r in rows:
        label = "/".join(str(r[k]) for k in label_keys)
        csv += [f"{label},{k},{r[k]!r}" for k in keys if k not in label_keys]
    with open(os.path.join(out_dir, f"{stem}.csv"), "w", newline="\n") as f:
        f.write("\n".join(csv) + "\n")
    print("\n".join(text[2:]))


# -- commands -------------------------------------------------------------

def cmd_gen_data(args):
    spec = _load_spec(args)
    qp = assemble_batch(spec)
    solver = ActiveSetSolver(qp, _solver_options(args.solver_opt))
    if len(args.goals) != 3:
        raise ConfigError("--goals needs three counts: train,buffer,test")
    cfg = WalkConfig(*args.goals, step_d=args.step_d, seed=args.seed)
    t0 = time.perf_counter()
    data = generate_data(spec, cfg, qp, solver)
    elapsed = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    write_dataset(os.path.join(args.out, "train.mpcd"), data.train, data.dims)
    write_dataset(os.path.join(args.out, "test.mpcd"), data.test, data.dims)
    save_problem(spec, os.path.join(args.out, "problem.txt"))
    manifest = dict(data.manifest, config=_config_hash(args))
    with open(os.path.join(args.out, "manifest.txt"), "w", newline="\n") as f:
        f.write(manifest_text(manifest))
    # cold re-solve of a deterministic subset
    rng = np.random.default_rng(args.seed)
    pool = data.train + data.test
    idx = rng.choice(len(pool), min(args.recheck, len(pool)), replace=False)
    ok = 0
    for i in idx:
        r = pool[i]
        res = solver.solve(r.x)
        ok += res.status == Status.OPTIMAL and abs(
            objective(qp, res.z, r.x) - objective(qp, r.z, r.x)) <= 1e-6 * (1 + abs(objective(qp, r.z, r.x)))
    print(f"train records {len(data.train)}, test records {len(data.test)}, "
          f"re-check {ok}/{len(idx)} passed, {elapsed:.1f} s")
    return EXIT_OK if ok == len(idx) else EXIT_NUMERICAL


def cmd_train(args):
    data_path = _require(os.path.join(args.data, "train.mpcd"))
    spec = _load_spec(args, args.data)
    qp = assemble_batch(spec)
    _, records = read_dataset(data_path)
    if not records:
        raise ConfigError("training file holds no records")
    key = args.sys or {f"Sys{k}": k for k in DEFAULT_WIDTHS}.get(spec.name, 0)
    widths = args.widths or list(DEFAULT_WIDTHS.get(key, ())) or None
    if widths is None:
        widths = [qp.dims.n, 32, 32, qp.dims.d_p]
    if widths[0] != qp.dims.n or widths[-1] != qp.dims.d_p:
        raise ConfigError(f"widths must start with n={qp.dims.n} and end with d_p={qp.dims.d_p}")
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs, learning_rate=args.lr,
                      seed=args.seed, validation_fraction=args.val_frac)
    _threads(args)
    model, tlog = train(loss_data(qp, *stack_records(records)), qp, cfg, widths=widths)
    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, "model.json"))
    with open(os.path.join(args.out, "loss.txt"), "w", newline="\n") as f:
        f.write(f"# config {_config_hash(args)}\n" + tlog.to_text())
    print(f"trained {model.widths} ({model.n_params} parameters): "
          f"val loss {tlog.val_loss[0]:.4g} -> {tlog.val_loss[-1]:.4g}")
    return EXIT_OK


def _criteria(text):
    try:
        return [Termination.parse(c) for c in text.split(",") if c.strip()]
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from None


def cmd_eval_open(args):
    spec = _load_spec(args, args.data)
    qp = assemble_batch(spec)
    _, records = read_dataset(_require(os.path.join(args.data, "test.mpcd")))
    model = load_model(_require(args.model)) if args.model else None
    if args.limit:
        records = records[:args.limit]
    solver = ActiveSetSolver(qp, _solver_options(args.solver_opt))
    rows = open_loop_eval(qp, records, model, _criteria(args.criteria), solver=solver)
    _write_report(args.out, "open_loop", f"open-loop metrics, {len(records)} test states", rows,
                  _config_hash(args))
    return EXIT_OK


def cmd_eval_closed(args):
    spec = _load_spec(args, args.data)
    qp = assemble_batch(spec)
    _, records = read_dataset(_require(os.path.join(args.data, "test.mpcd")))
    model = load_model(_require(args.model)) if args.model else None
    rng = np.random.default_rng(args.seed)
    count = min(args.x0_count, len(records))
    x0s = [records[i].x for i in np.sort(rng.choice(len(records), count, replace=False))]
    methods = []
    for c in _criteria(args.criteria):
        for init in ("nn", "cold"):
            methods.append(Method(init, str(c)))
    solver = ActiveSetSolver(qp, _solver_options(args.solver_opt))
    rows, _ = closed_loop_eval(spec, qp, model, methods, x0s, solver, args.max_steps)
    for r in rows:
        r.pop("seconds")  # wall clock would break byte-identical reports
    _write_report(args.out, "closed_loop", f"closed-loop metrics, {count} initial states", rows,
                  _config_hash(args))
    return EXIT_OK


def cmd_solve(args):
    spec = _load_spec(args)
    qp = assemble_batch(spec)
    x = args.x
    if x.shape != (qp.dims.n,):
        raise ConfigError(f"--x needs {qp.dims.n} values")
    model = load_model(_require(args.warm)) if args.warm else None
    crit = _criteria(args.criterion)[0]
    solver = ActiveSetSolver(qp, _solver_options(args.solver_opt))
    z_init = forward(model, x) if model is not None else None
    res = solver.solve(x, z_init=z_init, criterion=crit)
    if res.status == Status.INFEASIBLE:
        print("infeasible")
        return EXIT_INFEASIBLE
    cert = certify(qp, res.z, x)
    print(f"status {res.status.value}")
    print(f"J {objective(qp, res.z, x)!r}")
    print(f"eta {cert.eta!r}")
    print(f"phase1_iters {res.phase1_iters}")
    print(f"phase2_iters {res.phase2_iters}")
    print(f"u0 {' '.join(repr(float(v)) for v in qp.first_input(res.z))}")
    if args.full:
        nu, lam = (res.nu, res.lam) if res.status == Status.OPTIMAL else (cert.nu, cert.lam)
        for name, v in (("z", res.z), ("nu", nu), ("lambda", lam)):
            print(f"{name} {' '.join(repr(float(t)) for t in v)}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration code, not argparse's 2 (reserved for infeasible)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="eimpc", description="Network-initialized active-set MPC.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def problem_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--sys", type=int, choices=(1, 2, 3, 4))
        g.add_argument("--problem", help="problem file")
        sp.add_argument("--variant", default="reconciled", choices=("reconciled", "literal"))
        sp.add_argument("--solver-opt", action="append", metavar="KEY=VALUE",
                        help="override a solver tolerance (repeatable)")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("gen-data", help="generate train and test data")
    problem_args(sp)
    sp.add_argument("--goals", type=_int_list, default=[2000, 400, 400])
    sp.add_argument("--step-d", type=float, default=None)
    sp.add_argument("--recheck", type=int, default=100)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train the planner network")
    problem_args(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--widths", type=_int_list, default=None)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--batch", type=int, default=128)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--val-frac", type=float, default=0.05)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    for name, func, extra in (("eval-open", cmd_eval_open, "--limit"),
                              ("eval-closed", cmd_eval_closed, "--x0-count")):
        sp = sub.add_parser(name, help=f"{name[5:]}-loop evaluation")
        problem_args(sp)
        sp.add_argument("--data", required=True)
        sp.add_argument("--model", default=None)
        sp.add_argument("--criteria", default="pf,pfsub,gap:0.1,optimal")
        sp.add_argument("--out", required=True)
        if extra == "--limit":
            sp.add_argument("--limit", type=int, default=0, help="use the first LIMIT test states")
        else:
            sp.add_argument("--x0-count", type=int, default=16)
            sp.add_argument("--max-steps", type=int, default=500)
        sp.set_defaults(func=func)

    sp = sub.add_parser("solve", help="solve one QP")
    problem_args(sp)
    sp.add_argument("--x", type=_float_list, required=True)
    sp.add_argument("--warm", default=None, help="model file for the initial guess")
    sp.add_argument("--criterion", default="optimal")
    sp.add_argument("--full", action="store_true")
    sp.set_defaults(func=cmd_solve)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InfeasibleError, RecursiveFeasibilityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE if isinstance(e, InfeasibleError) else EXIT_NUMERICAL
    except (ConfigError, InvalidArgumentError, FormatError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, IterationLimitError, TrainingDivergenceError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
