"""Trainer CLI: train one model, run inference, or drive the whole matrix."""

from __future__ import annotations

import argparse
import json
import sys

from .data import Corpus, ensure_drop_view
from .experiment import run_experiment
from .infer import infer_corpus
from .network import NetworkConfig, build_network
from .train import TrainConfig, train


def _net_config(args) -> NetworkConfig:
    return NetworkConfig(n_rrdb_blocks=args.blocks, base_features=args.features)


def _train_config(args) -> TrainConfig:
    return TrainConfig(eta=args.eta, batch_size=args.batch,
                       cycle_iters=args.cycle_iters, n_cycles=args.cycles,
                       seed=args.seed)


def _progress(iteration, l_tot, l_pix, l_phys, lr):
    print(f"iter {iteration:7d}  l_tot {l_tot:.3e}  l_pix {l_pix:.3e}  "
          f"l_phys {l_phys:.3e}  lr {lr:.2e}")


def cmd_train(args) -> int:
    mask_manifest = ensure_drop_view(args.root, args.rate)
    corpus = Corpus(args.root, manifest=args.manifest, split="train",
                    mask_manifest=mask_manifest)
    model = build_network(_net_config(args))
    final = train(model, corpus, _train_config(args), args.out,
                  progress=_progress if args.verbose else None)
    print(f"final checkpoint: {final}")
    return 0


def cmd_infer(args) -> int:
    mask_manifest = ensure_drop_view(args.root, args.rate)
    corpus = Corpus(args.root, manifest=args.manifest, split=args.split,
                    mask_manifest=mask_manifest)
    n = infer_corpus(args.checkpoint, corpus, args.out, args.model_name, args.rate)
    print(f"wrote {n} predictions to {args.out}")
    return 0


def cmd_experiment(args) -> int:
    reports = run_experiment(
        args.root, args.out, drop_rates=tuple(args.rates),
        net_cfg=_net_config(args), train_cfg=_train_config(args),
        progress=_progress if args.verbose else None)
    print(json.dumps({k: v for k, v in sorted(reports.items())}, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumesr-train",
        description="Train and evaluate SR models on a plumesr corpus.")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--root", required=True, help="corpus directory")
        p.add_argument("--blocks", type=int, default=8, help="RRDB blocks")
        p.add_argument("--features", type=int, default=64)
        p.add_argument("--batch", type=int, default=16)
        p.add_argument("--cycle-iters", type=int, default=20_000)
        p.add_argument("--cycles", type=int, default=4)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model")
    common(p)
    p.add_argument("--eta", type=float, default=100.0,
                   help="physics weight (0 = Std-SR)")
    p.add_argument("--rate", type=float, required=True, help="drop rate")
    p.add_argument("--manifest", default="manifest.jsonl")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="super-resolve a split with a checkpoint")
    p.add_argument("--root", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--manifest", default="manifest.jsonl")
    p.add_argument("--model-name", default="model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("experiment", help="run the full comparison matrix")
    common(p)
    p.add_argument("--eta", type=float, default=100.0)
    p.add_argument("--rates", type=float, nargs="+",
                   default=[0.0, 0.2, 0.4, 0.6])
    p.add_argument("--out", required=True, help="bundle directory")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"plumesr-train: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
