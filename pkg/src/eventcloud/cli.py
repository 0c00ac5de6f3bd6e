"""``eventcloud`` command line: prep, synth, train, eval, bench, count."""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig, load_config
from .errors import EventCloudError


def _config(args):
    return load_config(args.config) if args.config else RunConfig().validate()


def cmd_prep(args):
    from .data import prep_dataset
    counts = prep_dataset(args.data, args.out, _config(args), args.format)
    for split, n in counts.items():
        print(f"{split}: {n} windows")


def cmd_synth(args):
    from . import synth
    if args.kind == "classify":
        synth.synth_classification(args.out, args.seed, args.classes, args.train, args.test)
    else:
        synth.synth_eye(args.out, args.seed, args.train, args.test)
    print(f"wrote {args.train} train and {args.test} test windows to {args.out}")


def cmd_train(args):
    from .train import train_loop, tune_allocator
    cfg = _config(args)
    if args.seed is not None:
        cfg.seed = cfg.model.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
    tune_allocator()
    result = train_loop(cfg, args.data, args.out, log=print)
    best = result["best"]
    print("best epoch {}: {}".format(best["epoch"], ", ".join(
        f"{k}={v:.4f}" for k, v in best.items() if k not in ("epoch", "metric"))))


def cmd_eval(args):
    from .train import eval_checkpoint
    ev = eval_checkpoint(_config(args), args.checkpoint, args.data, args.split)
    for k, v in ev.items():
        if k != "metric":
            print(f"{k} {v:.6f}")


def cmd_bench(args):
    from .bench import bench_latency
    cfg = _config(args)
    r = bench_latency(cfg.model, args.iters, args.seed if args.seed is not None else cfg.seed)
    print(f"iters {r['iters']}  P5 {r['p5']:.3f} ms  P50 {r['p50']:.3f} ms  P95 {r['p95']:.3f} ms")


def cmd_count(args):
    from .model import count_flops, count_params
    cfg = _config(args)
    params = count_params(cfg.model)
    flops = count_flops(cfg.model)
    print(f"params {params} ({params / 1e6:.3f} M)")
    print(f"flops {flops} ({flops / 1e9:.3f} GFLOPs)")


def build_parser():
    p = argparse.ArgumentParser(prog="eventcloud", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="flat key = value config file")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("prep", cmd_prep, "cut recordings into windows")
    sp.add_argument("--data", required=True, help="directory with <split>/recordings.txt")
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", choices=("csv", "binary"), default="binary")

    sp = add("synth", cmd_synth, "generate a synthetic dataset")
    sp.add_argument("--kind", choices=("classify", "eye"), default="classify")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--train", type=int, default=2400)
    sp.add_argument("--test", type=int, default=600)
    sp.add_argument("--classes", type=int, default=3)

    sp = add("train", cmd_train, "train a model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)

    sp = add("eval", cmd_eval, "evaluate a checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")

    sp = add("bench", cmd_bench, "inference latency percentiles")
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--seed", type=int)

    add("count", cmd_count, "parameter and FLOP counts")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (EventCloudError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
