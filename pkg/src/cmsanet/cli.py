"""Command-line entry point: ``cmsanet {gen,train,eval,gradcheck,dump,ablate}``.

Exit codes: 0 success, 1 gradient check above tolerance, 2 bad configuration
or usage, 3 missing or malformed data, 4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cmsanet import experiment as ex
from cmsanet.config import load_config
from cmsanet.errors import (
    ConfigError,
    DimensionError,
    GenerationError,
    NumericError,
    ParseError,
    UsageError,
    VocabularyError,
)
from cmsanet.synthdata import generate, load, serialize

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("cmsanet")


def _config(args):
    return load_config(args.config, args.set or ())


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {p}")
    return p


def cmd_gen(args) -> int:
    cfg = _config(args)
    seed = cfg.seed if args.seed is None else args.seed
    samples = generate(seed, args.count, ex.gen_config(cfg), start=args.start)
    out = Path(args.out)
    serialize(samples, out)
    cfg.replace(seed=seed, out=str(out)).write(out / ex.CONFIG_NAME)
    print(f"wrote {len(samples)} samples to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    data = _require_dir(args.data or cfg.data, "data")
    cfg = cfg.replace(data=str(data), out=str(args.out))
    samples = load(data)
    _, history = ex.train_run(cfg, samples, args.out)
    print(f"trained {cfg.iterations} iterations, final loss {history[-1].loss:.6f}" if history
          else "trained 0 iterations")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Path(args.ckpt)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    cfg = _config(args) if args.config or args.set else None
    model = ex.load_model(ckpt, cfg)
    samples = load(_require_dir(args.data, "data"))
    report = ex.eval_run(model, samples, args.out, write_masks=not args.no_masks)
    model.cfg.write(Path(args.out) / ex.CONFIG_NAME)
    for k, v in report.summary().items():
        print(f"{k}={v:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from cmsanet.gradsuite import check_network, check_primitives

    cfg = _config(args)
    seed = cfg.seed if args.seed is None else args.seed
    lines = check_primitives(seed) + check_network(cfg, seed, per_group=args.per_group)
    for line in lines:
        print(line)
    failed = [line for line in lines if not line.passed]
    print(f"{len(lines) - len(failed)}/{len(lines)} checks passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_dump(args) -> int:
    ckpt = Path(args.ckpt)
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = ex.load_model(ckpt, _config(args) if args.config or args.set else None)
    samples = load(_require_dir(args.data, "data"))
    match = [s for s in samples if s.id == args.sample_id]
    if not match:
        raise UsageError(f"sample id {args.sample_id} not in {args.data}")
    for p in ex.dump_sample(model, match[0], args.out):
        print(p)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    names = args.variants or list(ex.ABLATIONS)
    unknown = [n for n in names if n not in ex.ABLATIONS]
    if unknown:
        raise UsageError(f"unknown variant(s) {unknown}; choose from {list(ex.ABLATIONS)}")
    results = ex.run_ablations(cfg, args.out, names)
    for r in results.values():
        print(f"{r.name:<20} overall_iou={r.report.overall_iou:.4f} mean_iou={r.report.mean_iou:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmsanet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--start", type=int, default=0, help="index of the first sample")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-masks", action="store_true", help="skip per-sample mask files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and the full network")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--per-group", type=int, default=3, help="entries checked per parameter tensor")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dump", help="write probability map, mask and attention for one sample")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample-id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("ablate", help="train and evaluate the full model and its ablations")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", nargs="+", metavar="NAME")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, VocabularyError, GenerationError, DimensionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
