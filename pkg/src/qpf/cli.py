"""Command-line entry point (``qpf``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import cachefile, dataset, harness, nn
from .filters import FilterVariant

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_ERROR = 2


def _seed_list(raw: str) -> list[int]:
    seeds = [int(p) for p in raw.replace(";", ",").split(",") if p.strip()]
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--dataset", choices=dataset.DATASETS, default="mnist")
    p.add_argument("--filter", dest="filter_kind", default="none",
                   choices=["none", "encoding", "one-cnot", "two-cnot", "custom"])
    p.add_argument("--arrangement", help='CNOT wires as "c t" or "c1 t1 c2 t2"')
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--activation", choices=nn.ACTIVATIONS, default="identity")
    p.add_argument("--eval-every", type=int, default=50, help="iterations between metric rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--cache-dir", default="cache")
    p.add_argument("--out", default="runs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("extract", parents=[common], help="write filtered feature caches")
    sub.add_parser("train", parents=[common], help="train and write checkpoint + metrics CSV")
    sub.add_parser("eval", parents=[common], help="evaluate a stored checkpoint")
    for name in ("sweep-one-cnot", "sweep-two-cnot"):
        sp = sub.add_parser(name, parents=[common], help=f"train every {name[6:]} arrangement")
        sp.add_argument("--seeds", type=_seed_list, help="comma-separated seeds (mean/std mode)")
        sp.add_argument("--rerun", action="store_true", help="ignore stored results")
        if name == "sweep-one-cnot":
            sp.add_argument("--max-spread", type=float, default=0.015,
                            help="soft bound on max-min accuracy (fraction)")
    tp = sub.add_parser("table", parents=[common], help="collect the dataset x variant summary")
    tp.add_argument("--run-missing", action="store_true", help="train runs that have no result yet")
    return parser


def config_from_args(args) -> harness.RunConfig:
    train = nn.TrainConfig(
        hidden=args.hidden,
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        activation=args.activation,
        eval_every=args.eval_every,
    )
    variant = FilterVariant.parse(args.filter_kind, args.arrangement)
    return harness.RunConfig(args.dataset, variant, train, args.data_dir, args.cache_dir, args.out)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def run(args) -> int:
    config = config_from_args(args)
    if args.command == "extract":
        paths = harness.cmd_extract(config)
        _emit({"command": "extract", **{k: str(v) for k, v in paths.items()}})
    elif args.command == "train":
        res = harness.run_many([config], reuse=False)[0]
        _emit({"command": "train", "accuracy": res.accuracy, "n_params": res.n_params,
               "run_dir": str(res.run_dir), "config_digest": res.digest})
    elif args.command == "eval":
        acc = harness.cmd_eval(config)
        _emit({"command": "eval", "accuracy": acc, "config_digest": config.digest})
    elif args.command == "sweep-one-cnot":
        s = harness.cmd_sweep_one_cnot(config, args.seeds, args.max_spread, reuse=not args.rerun)
        _emit({"command": args.command, "csv": str(s.csv_path), "spread": s.spread, "spread_ok": s.spread_ok,
               "results": {r.label: r.accuracy for r in s.results}})
    elif args.command == "sweep-two-cnot":
        s = harness.cmd_sweep_two_cnot(config, args.seeds, reuse=not args.rerun)
        _emit({"command": args.command, "csv": str(s.csv_path), "diagonal_mean": s.diagonal_mean,
               "other_mean": s.other_mean, "diagonal_better": s.diagonal_better,
               "results": {r.label: r.accuracy for r in s.results}})
    elif args.command == "table":
        t = harness.cmd_table(config, run_missing=args.run_missing)
        _emit({"command": "table", "csv": str(t.path), "missing": t.missing})
        if t.missing:
            print(json.dumps({"error": "missing-runs", "message": ", ".join(t.missing)}), file=sys.stderr)
            return EXIT_INCOMPLETE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except harness.HarnessError as exc:
        code, msg = exc.code, str(exc)
    except (dataset.DatasetError, cachefile.CacheFormatError, ValueError, OSError) as exc:
        code, msg = type(exc).__name__, str(exc)
    print(json.dumps({"error": code, "message": msg}, sort_keys=True), file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
