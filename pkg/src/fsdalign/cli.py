"""Command-line entry point.

Exit status is 0 on success, 1 when a command fails at run time and 2 for
usage errors. Logs go to stderr; data goes to stdout or to the files named
by flags. Floats are written in shortest round-trip form.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from . import penalty as pen
from .alignment import Mode, Sort
from .checks import oracle_check
from .data import DatasetParseError, generate, read_dataset, write_dataset
from .dominance import DEFAULT_GRID, check_fsd, rate_experiment
from .measures import DomainError, quantile_curve, read_csv
from .ot1d import ot_weighted
from .penalty import UnsupportedOperation
from .policy import TabularPolicy
from .softsort import SoftSortConfig, SoftSortConvergenceError
from .trainer import LossKind, TrainConfig, TrainingDiverged, train

log = logging.getLogger("fsdalign")


def _penalty_arg(text: str) -> pen.PenaltyFn:
    try:
        return pen.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fsdalign",
        description="Distributional preference alignment via first-order stochastic dominance.",
        allow_abbrev=False,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    g = sub.add_parser("gen", allow_abbrev=False, help="generate a planted-reward preference dataset")
    g.add_argument("--k", type=int, default=4, help="number of prompts")
    g.add_argument("--m", type=int, default=8, help="number of responses")
    g.add_argument("--n", type=int, default=4096, help="records (per label when unpaired)")
    g.add_argument("--mode", choices=[m.value for m in Mode], default="paired")
    g.add_argument("--temp", type=float, default=0.5)
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--reward-seed", type=_seed, default=None, help="seed of the reward table (default: --seed)")
    g.add_argument("--out", required=True, help="JSONL output path")
    g.add_argument("--meta", default=None, help="also write generator metadata to this JSON file")
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("align", allow_abbrev=False, help="train a tabular policy")
    a.add_argument("--data", required=True, help="training JSONL")
    a.add_argument("--mode", choices=[m.value for m in Mode], default=None,
                   help="paired data can be trained unpaired; default: the data's mode")
    a.add_argument("--loss", choices=[k.value for k in LossKind], default="aot")
    a.add_argument("--h", type=_penalty_arg, default=pen.logistic(), help="penalty, e.g. logistic:0.01")
    a.add_argument("--sort", choices=[s.value for s in Sort], default="hard")
    a.add_argument("--soft-eps", type=float, default=0.1)
    a.add_argument("--batch", type=int, default=64)
    a.add_argument("--steps", type=int, default=2000)
    a.add_argument("--lr", type=float, default=1e-2)
    a.add_argument("--seed", type=_seed, default=0)
    a.add_argument("--ref", default=None, help="reference policy JSON (default: uniform)")
    a.add_argument("--init", default=None, help="initial policy JSON (default: the reference)")
    a.add_argument("--k", type=int, default=None, help="prompt count if not recorded with the data")
    a.add_argument("--m", type=int, default=None, help="response count if not recorded with the data")
    a.add_argument("--eval-data", default=None, help="held-out JSONL for the dominance columns")
    a.add_argument("--eval-every", type=int, default=100)
    a.add_argument("--out", required=True, help="trained policy JSON")
    a.add_argument("--metrics", default=None, help="metrics CSV")
    a.add_argument("--timing", action="store_true", help="fill the ms column (not reproducible)")
    a.set_defaults(func=cmd_align)

    d = sub.add_parser("dominance", allow_abbrev=False, help="FSD report for two samples, as JSON")
    d.add_argument("--u", required=True, help="value,weight CSV of the dominating candidate")
    d.add_argument("--v", required=True, help="value,weight CSV of the reference")
    d.add_argument("--h", type=_penalty_arg, default=None, help="also report OT_h for this penalty")
    d.set_defaults(func=cmd_dominance)

    q = sub.add_parser("quantiles", allow_abbrev=False, help="write the quantile margin curve")
    q.add_argument("--u", required=True)
    q.add_argument("--v", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantiles)

    r = sub.add_parser("rate", allow_abbrev=False, help="empirical convergence rate of OT_h")
    r.add_argument("--shift", type=float, default=0.3)
    r.add_argument("--width", type=float, default=1.0)
    r.add_argument("--ns", type=_int_list, default=[16, 64, 256, 1024, 4096])
    r.add_argument("--reps", type=int, default=200)
    r.add_argument("--seed", type=_seed, default=0)
    r.add_argument("--h", type=_penalty_arg, default=pen.least_squares(0.0))
    r.set_defaults(func=cmd_rate)

    o = sub.add_parser("oracle-check", allow_abbrev=False, help="run the built-in correctness suites")
    o.add_argument("--trials", type=int, default=200)
    o.add_argument("--seed", type=_seed, default=0)
    o.set_defaults(func=cmd_oracle_check)
    return p


def cmd_gen(args) -> int:
    ds = generate(args.k, args.m, args.n, args.mode, args.temp, args.seed, args.reward_seed)
    write_dataset(ds, args.out, args.meta)
    log.info("wrote %d %s records to %s", len(ds), ds.mode.value, args.out)
    return 0


def _load_data(path, k, m, mode: Mode | None):
    ds = read_dataset(path, k, m)
    if mode is Mode.UNPAIRED:
        ds = ds.to_unpaired()
    elif mode is Mode.PAIRED and ds.mode is not Mode.PAIRED:
        raise DomainError(f"{path} holds unpaired records; it cannot be trained paired")
    return ds


def cmd_align(args) -> int:
    ref = TabularPolicy.load(args.ref) if args.ref else None
    k, m = args.k, args.m
    if ref is not None:
        k = ref.k if k is None else k
        m = ref.m if m is None else m
    mode = Mode(args.mode) if args.mode else None
    data = _load_data(args.data, k, m, mode)
    eval_data = None
    if args.eval_data:
        eval_data = read_dataset(args.eval_data, data.k, data.m)
    if ref is None:
        ref = TabularPolicy.uniform(data.k, data.m)
    theta0 = TabularPolicy.load(args.init) if args.init else ref.copy()
    cfg = TrainConfig(
        loss=LossKind(args.loss),
        h=args.h,
        sort=Sort(args.sort),
        soft=SoftSortConfig(epsilon=args.soft_eps),
        batch_size=args.batch,
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        eval_every=args.eval_every,
    )
    log.info("training %s (%s, h=%s, sort=%s) for %d steps", cfg.loss.value, data.mode.value, cfg.h, cfg.sort.value, cfg.steps)
    try:
        theta, metrics = train(theta0, ref, data, cfg, eval_data)
    except TrainingDiverged as exc:
        if args.metrics:
            exc.metrics.to_csv(args.metrics, timing=args.timing)
        raise
    theta.save(args.out)
    if args.metrics:
        metrics.to_csv(args.metrics, timing=args.timing)
    fin = metrics.final
    log.info("final loss %r, fsd_holds %s, w2_violation %r, min margin %r", fin.loss, fin.fsd_holds, fin.w2_violation, fin.min_margin)
    return 0


def cmd_dominance(args) -> int:
    mu, nu = read_csv(args.u), read_csv(args.v)
    out = check_fsd(mu, nu).to_dict()
    if args.h is not None:
        out["h"] = str(args.h)
        out["ot_cost"] = ot_weighted(mu, nu, args.h)[0]
    print(json.dumps(out))
    return 0


def cmd_quantiles(args) -> int:
    mu, nu = read_csv(args.u), read_csv(args.v)
    qu = quantile_curve(mu, DEFAULT_GRID)
    qv = quantile_curve(nu, DEFAULT_GRID)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("percentile,q_u,q_v,margin\n")
        for p, a, b in zip(DEFAULT_GRID, qu, qv):
            fh.write(f"{float(p)!r},{float(a)!r},{float(b)!r},{float(a - b)!r}\n")
    return 0


def cmd_rate(args) -> int:
    res = rate_experiment(args.shift, args.width, args.ns, args.reps, args.h, args.seed)
    print(f"slope,{res.slope!r}")
    print("n,mean_abs_error")
    for n, e in res.points:
        print(f"{n},{e!r}")
    return 0


def cmd_oracle_check(args) -> int:
    if args.trials < 1:
        raise DomainError("--trials must be at least 1")
    results = oracle_check(args.trials, args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


RUNTIME_ERRORS = (
    DomainError,
    DatasetParseError,
    UnsupportedOperation,
    SoftSortConvergenceError,
    TrainingDiverged,
    OSError,
    json.JSONDecodeError,
)


def _configure_logging(verbose: bool) -> None:
    for old in list(log.handlers):
        log.removeHandler(old)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
