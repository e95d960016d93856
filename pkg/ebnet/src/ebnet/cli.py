"""Command line: train-present, train-future, eval.

Each training command writes weights.pt and report.json into --out; eval
prints metrics as JSON and optionally writes them to a file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import EbnetError
from .model import NetConfig
from .train import evaluate, train_future, train_present


def _add_common(parser):
    parser.add_argument("--data", required=True, help="dataset directory")
    parser.add_argument("--device", default="cpu")


def _net_config(args) -> NetConfig:
    kwargs = dict(seed=args.seed, width=args.width, batch_size=args.batch_size,
                  patience=args.patience)
    if args.n_basis is not None:
        kwargs["n_b"] = args.n_basis
    if args.m_t is not None:
        kwargs["m_t"] = args.m_t
    if args.n_sc is not None:
        kwargs["n_sc"] = args.n_sc
    return NetConfig(**kwargs)


def _add_config_args(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--patience", type=int, default=25)
    parser.add_argument("--m-t", type=int, default=None,
                        help="antenna count (default: from dataset geometry)")
    parser.add_argument("--n-sc", type=int, default=None)
    parser.add_argument("--n-basis", type=int, default=None)


def _cmd_train_present(args) -> int:
    cfg = _net_config(args)
    log = print if args.verbose else None
    report = train_present(args.data, cfg, args.out, device=args.device,
                           epochs=args.epochs, log=log)
    print(f"present task: test NMSE {report.test['nmse']:.4f} "
          f"({report.test['nmse_db']:.2f} dB), CS {report.test['cs']:.4f}, "
          f"zero-fill NMSE {report.baselines['zero_fill_nmse']:.4f}, "
          f"{report.runtime_s:.0f} s, report in {args.out}")
    return 0


def _cmd_train_future(args) -> int:
    log = print if args.verbose else None
    report = train_future(args.data, args.present_weights, args.out,
                          device=args.device, epochs_stage1=args.epochs_stage1,
                          epochs_stage2=args.epochs_stage2, log=log)
    print(f"future task: test NMSE {report.test['future_nmse']:.4f} vs "
          f"hold-last {report.test['hold_last_nmse']:.4f}, present NMSE "
          f"{report.test['present_nmse']:.4f}, {report.runtime_s:.0f} s, "
          f"report in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    metrics = evaluate(args.data, args.weights, device=args.device)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebnet",
        description="Neural partial-to-whole channel predictor trained on "
                    "exported channel datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-present", help="train the three subnetworks")
    _add_common(p)
    _add_config_args(p)
    p.add_argument("--epochs", type=int, default=None,
                   help="override the configured epoch count")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_train_present)

    p = sub.add_parser("train-future",
                       help="two-stage adaptation to next-step prediction")
    _add_common(p)
    p.add_argument("--present-weights", required=True)
    p.add_argument("--epochs-stage1", type=int, default=None)
    p.add_argument("--epochs-stage2", type=int, default=None)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_train_future)

    p = sub.add_parser("eval", help="test-split metrics for saved weights")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", default=None, help="also write metrics JSON here")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EbnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
