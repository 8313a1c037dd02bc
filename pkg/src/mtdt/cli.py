"""Command-line front door: generate, train, eval, predict, serve.

Exit codes: 0 on success, 1 with a diagnostic on stderr for domain
failures (bad data, invalid configs, diverged training), 2 for usage
errors (unknown flags, unreadable files).  `MTDT_LOG` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigurationError, ContractError, ShapeError
from .metrics import evaluate
from .model import load_checkpoint, save_checkpoint
from .server import RequestError, create_app, load_bundle, parse_predict_request, predict_from_request
from .sim.dataset import ScenarioConfig, generate_dataset, read_jsonl, write_jsonl
from .sim.topology import IntersectionTopology, four_way_topology
from .training import TrainConfig, split_records, train

log = logging.getLogger("mtdt")

CHECKPOINT_NAME = "model.ckpt"
REPORT_NAME = "train_report.json"


def _read_json(path: str):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc


def _write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _load_topology(path: str | None) -> IntersectionTopology:
    if path is None:
        return four_way_topology()
    return IntersectionTopology.from_json_obj(_read_json(path))


def _addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"address must look like HOST:PORT, got {text!r}")
    return host, int(port)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    topology = _load_topology(args.topology)
    cfg = ScenarioConfig.from_json_obj(_read_json(args.config)) if args.config else ScenarioConfig()
    records = generate_dataset(topology, cfg, args.n, args.seed)
    write_jsonl(records, args.out)
    log.info("wrote %d records to %s", len(records), args.out)
    return 0


def cmd_topology(args) -> int:
    _write_json(four_way_topology().to_json_obj(), args.out)
    log.info("wrote default topology to %s", args.out)
    return 0


def cmd_train(args) -> int:
    records = read_jsonl(args.data)
    cfg = TrainConfig.from_json_obj(_read_json(args.config)) if args.config else TrainConfig()
    topology = _load_topology(args.topology)
    params, norm, report = train(records, topology, cfg)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, CHECKPOINT_NAME)
    save_checkpoint(ckpt, topology, params, norm, extra={"train_config": cfg.to_json_obj()})
    _write_json(report.to_json_obj() | {"checkpoint": CHECKPOINT_NAME}, os.path.join(args.out, REPORT_NAME))
    log.info(
        "trained on %d records: weight decay %g, best epoch %d, val loss %.6f",
        len(records), report.chosen_weight_decay, report.best_epoch, report.best_val_total,
    )
    return 0


def cmd_eval(args) -> int:
    records = read_jsonl(args.data)
    topology, params, norm, extra = load_checkpoint(args.ckpt)
    if args.split == "test":
        seed = extra.get("train_config", {}).get("seed", TrainConfig().seed)
        _, _, records = split_records(records, seed)
    report = evaluate(
        records, topology, params, norm,
        use_true_aggregates=args.variant == "true-aggregates",
    )
    _write_json(report.to_json_obj(), args.out)
    if args.csv:
        report.write_csv(args.csv)
    log.info("evaluated %d records (%s) into %s", report.n_records, report.variant, args.out)
    return 0


def cmd_predict(args) -> int:
    bundle = load_bundle(args.ckpt)
    body = _read_json(args.request)
    parsed = parse_predict_request(body, {bundle.topology.intersection_id: bundle.topology})
    _write_json(predict_from_request(parsed, bundle), args.out)
    log.info("wrote prediction to %s", args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    bundle = load_bundle(args.ckpt) if args.ckpt else None
    host, port = args.addr
    app = create_app(bundle)
    log.info("serving on %s:%d (checkpoint: %s)", host, port, bundle.checkpoint_id if bundle else "none")
    uvicorn.run(app, host=host, port=port, log_level=log.getEffectiveLevel())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtdt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate scenarios into a JSONL dataset")
    p.add_argument("--topology", metavar="FILE", help="topology JSON (default: built-in four-way layout)")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", metavar="FILE", required=True, help="output JSONL path")
    p.add_argument("--config", metavar="FILE", help="scenario sampling ranges JSON")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("topology", help="write the built-in four-way topology as JSON")
    p.add_argument("--out", metavar="FILE", required=True)
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("train", help="train the model and write a checkpoint")
    p.add_argument("--data", metavar="FILE", required=True, help="JSONL dataset")
    p.add_argument("--config", metavar="FILE", help="train config JSON (default: built-in)")
    p.add_argument("--topology", metavar="FILE", help="topology JSON (default: built-in four-way layout)")
    p.add_argument("--out", metavar="DIR", required=True, help=f"writes {CHECKPOINT_NAME} and {REPORT_NAME}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and write the report")
    p.add_argument("--data", metavar="FILE", required=True, help="JSONL dataset")
    p.add_argument("--ckpt", metavar="FILE", required=True)
    p.add_argument("--out", metavar="FILE", required=True, help="report JSON path")
    p.add_argument("--csv", metavar="FILE", help="also write the report as a CSV table")
    p.add_argument("--variant", choices=("chained", "true-aggregates"), default="chained",
                   help="series-module input source (default: chained imputation)")
    p.add_argument("--split", choices=("all", "test"), default="all",
                   help="'test' re-derives the training-time test split of --data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="run one PredictRequest through the model")
    p.add_argument("--ckpt", metavar="FILE", required=True)
    p.add_argument("--request", metavar="FILE", required=True, help="PredictRequest JSON")
    p.add_argument("--out", metavar="FILE", required=True, help="PredictResponse JSON path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--ckpt", metavar="FILE", help="checkpoint to serve (optional: simulate-only service)")
    p.add_argument("--addr", type=_addr, default=("127.0.0.1", 8000), help="HOST:PORT (default 127.0.0.1:8000)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MTDT_LOG", "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "INFO"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"mtdt: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, ContractError, ShapeError) as exc:
        print(f"mtdt: {exc}", file=sys.stderr)
        return 1
    except RequestError as exc:
        for e in exc.errors:
            print(f"mtdt: request{'.' + e['field'] if e['field'] else ''}: {e['message']}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
