"""Command-line entry point: vocab, train-center, train-synthon, predict,
evaluate, stats.

Exit codes: 0 success, 1 runtime error, 2 configuration error.
Configuration precedence: flags, then ``--config`` key=value file, then
defaults.  ``RETROGRAPH_SEED`` supplies the seed when no flag or config
value gives one.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("retrograph")


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def read_config(path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; keys use dashes or underscores."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip().strip('"')
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text}")


def _model_flags(p):
    p.add_argument("--hidden-dim", type=int, default=512)
    p.add_argument("--t-a", type=int, default=7, help="atom message-passing iterations")
    p.add_argument("--t-e", type=int, default=7, help="fragment message-passing iterations")
    p.add_argument("--type-known", type=_bool, default=False, help="append the reaction class to atom features")


def _train_flags(p):
    p.add_argument("--train", required=True, help="mapped reaction file")
    p.add_argument("--valid", help="mapped reaction file for model selection (default: training set)")
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    _model_flags(p)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="retrograph", description="Two-step graph retrosynthesis.")
    ap.add_argument("--config", help="key=value file; flags override it")
    ap.add_argument("--seed", type=int, help="random seed (fallback: RETROGRAPH_SEED)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="BLAS threads; 1 is fully deterministic")
    ap.add_argument("--log", help="append JSON-lines records here")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("vocab", help="build the substructure vocabulary and coverage statistics")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="vocabulary TSV")
    p.add_argument("--stats", help="coverage CSV")

    p = sub.add_parser("train-center", help="train reaction-center identification")
    _train_flags(p)
    p.add_argument("--use-brics", type=_bool, default=True, help="fragment message passing")

    p = sub.add_parser("train-synthon", help="train synthon completion")
    _train_flags(p)
    p.add_argument("--vocab", help="vocabulary TSV (default: built from --train)")

    p = sub.add_parser("predict", help="rank reactant sets for products")
    p.add_argument("--model", required=True, help="directory with center/, synthon/ and vocab.tsv")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--product", help="product SMILES")
    src.add_argument("--products", help="file with one product SMILES (or mapped reaction) per line")
    p.add_argument("--type", type=int, help="reaction class 1..10 when the model was trained with it")
    p.add_argument("--k", type=int, default=10, help="synthon beam")
    p.add_argument("--n", type=int, default=10, help="reactant beam")
    p.add_argument("--max-steps", type=int, default=30)
    p.add_argument("--out", help="prediction TSV (default: stdout)")

    p = sub.add_parser("evaluate", help="top-k accuracy of a prediction file")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True, help="mapped reaction file")
    p.add_argument("--out", help="CSV report (default: stdout)")

    p = sub.add_parser("stats", help="reaction-center coverage of a reaction file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", help="CSV (default: stdout)")
    return ap


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        conf = read_config(args.config)
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in ap._actions} | {a.dest for a in sub._actions}
        unknown = sorted(set(conf) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        ap.set_defaults(**{k: v for k, v in conf.items() if k in {a.dest for a in ap._actions}})
        sub.set_defaults(**{k: v for k, v in conf.items() if k in {a.dest for a in sub._actions}})
        args = ap.parse_args(argv)
        # defaults from a file arrive as strings; convert through each action
        for parser in (ap, sub):
            for a in parser._actions:
                v = getattr(args, a.dest, None)
                if isinstance(v, str) and a.type is not None and a.dest in conf:
                    try:
                        setattr(args, a.dest, a.type(v))
                    except (ValueError, argparse.ArgumentTypeError) as exc:
                        raise ConfigError(f"bad value for {a.dest}: {v}") from exc
    if args.seed is None and os.environ.get("RETROGRAPH_SEED"):
        try:
            args.seed = int(os.environ["RETROGRAPH_SEED"])
        except ValueError as exc:
            raise ConfigError("RETROGRAPH_SEED must be an integer") from exc
    if args.command in ("train-center", "train-synthon"):
        if args.seed is None:
            raise ConfigError("training needs --seed (or RETROGRAPH_SEED)")
        for name in ("epochs", "batch", "hidden_dim"):
            if getattr(args, name) < 1:
                raise ConfigError(f"--{name.replace('_', '-')} must be positive")
        if args.t_a < 0 or args.t_e < 0:
            raise ConfigError("message-passing iterations must be non-negative")
    if args.command == "predict" and (args.k < 1 or args.n < 1 or args.max_steps < 1):
        raise ConfigError("--k, --n and --max-steps must be at least 1")
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return args


class _JsonLog:
    def __init__(self, path):
        self.path = path

    def __call__(self, **record):
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def _read_records(path):
    from .reactions import read_reactions

    if not Path(path).exists():
        raise ConfigError(f"no such file: {path}")
    records, n_bad = read_reactions(path, skip_errors=True)
    if n_bad:
        log.warning("skipped %d malformed reactions in %s", n_bad, path)
    return records


def _encoder_cfg(args, use_brics):
    from .encoder import EncoderConfig

    return EncoderConfig(hidden_dim=args.hidden_dim, t_a=args.t_a, t_e=args.t_e, use_brics=use_brics,
                         type_known=args.type_known)


def _train_cfg(args):
    from .center_id import TrainConfig

    return TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, patience=args.patience,
                       seed=args.seed, eval_every=args.eval_every, log_path=args.log)


def cmd_vocab(args, emit):
    from .reactions import build_vocab, coverage_stats, prepare, write_stats_csv

    records = _read_records(args.inp)
    report = prepare(records)
    vocab = build_vocab(report)
    vocab.write_tsv(args.out)
    stats = coverage_stats(records)
    if args.stats:
        write_stats_csv(stats, args.stats)
    emit(command="vocab", n_records=len(records), n_examples=len(report.examples), vocab_size=len(vocab),
         n_unsupported=report.n_unsupported, n_decomposition_errors=report.n_decomposition_errors, **stats)
    return 0


def cmd_train_center(args, emit):
    from .center_id import train_center
    from .reactions import prepare

    train = prepare(_read_records(args.train)).examples
    valid = prepare(_read_records(args.valid)).examples if args.valid else train
    model, history = train_center(train, valid, _encoder_cfg(args, args.use_brics), _train_cfg(args), dtype=np.dtype(args.dtype))
    model.store.save(Path(args.out) / "center")
    emit(command="train-center", n_train=len(train), best_valid_top1=max((h.get("valid_top1", 0) for h in history), default=0))
    return 0


def cmd_train_synthon(args, emit):
    from .reactions import SubstructureVocab, build_vocab, prepare
    from .synthon import train_synthon

    report = prepare(_read_records(args.train))
    vocab = SubstructureVocab.read_tsv(args.vocab) if args.vocab else build_vocab(report)
    train = [ex for ex in report.examples if all(u in vocab for u in ex.trace.units)]
    if len(train) < len(report.examples):
        log.warning("dropped %d traces with units outside the vocabulary", len(report.examples) - len(train))
    valid = prepare(_read_records(args.valid)).examples if args.valid else train
    valid = [ex for ex in valid if all(u in vocab for u in ex.trace.units)]
    model, history = train_synthon(train, valid, vocab, _encoder_cfg(args, False), _train_cfg(args), dtype=np.dtype(args.dtype))
    out = Path(args.out)
    model.store.save(out / "synthon")
    vocab.write_tsv(out / "vocab.tsv")
    emit(command="train-synthon", n_train=len(train), vocab_size=len(vocab),
         best_valid_top1=max((h.get("valid_top1", 0) for h in history), default=0))
    return 0


def load_predictor(model_dir, K=10, N=10, max_steps=30):
    from .autodiff import ParamStore
    from .center_id import CenterModel
    from .encoder import EncoderConfig
    from .inference import InferenceConfig, Predictor
    from .reactions import SubstructureVocab
    from .synthon import SynthonModel

    d = Path(model_dir)
    for part in ("center", "synthon", "vocab.tsv"):
        if not (d / part).exists():
            raise ConfigError(f"model directory {d} lacks {part}")
    fields = [f.name for f in dataclasses.fields(EncoderConfig)]
    cs = ParamStore.load(d / "center")
    ss = ParamStore.load(d / "synthon")
    center = CenterModel(cs, EncoderConfig(**{k: cs.meta[k] for k in fields}))
    synthon = SynthonModel(ss, EncoderConfig(**{k: ss.meta[k] for k in fields}), SubstructureVocab.read_tsv(d / "vocab.tsv"))
    return Predictor(center, synthon, InferenceConfig(K, N, max_steps))


def cmd_predict(args, emit):
    from .chem.smiles import write_smiles
    from .inference import write_predictions
    from .reactions import parse_reaction

    predictor = load_predictor(args.model, args.k, args.n, args.max_steps)
    if args.product:
        items = [(args.product, args.type)]
    else:
        items = []
        for line in Path(args.products).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ">" in line:
                r = parse_reaction(line)
                items.append((write_smiles(r.product.strip_maps()), r.reaction_type if args.type is None else args.type))
            else:
                items.append((line.split()[0], args.type))
    rows = []
    for smiles, rtype in items:
        try:
            ranked = predictor.predict_smiles(smiles, rtype)[: args.n]
        except Exception as exc:  # keep going over a file; report the product
            log.error("prediction failed for %s: %s", smiles, exc)
            if args.product:
                raise
            ranked = []
        rows.append((smiles, ranked))
    out = args.out or "/dev/stdout"
    write_predictions(out, rows)
    emit(command="predict", n_products=len(rows), n_rows=sum(len(r) for _, r in rows))
    return 0


def cmd_evaluate(args, emit):
    from .evaluate import evaluate_files

    records = _read_records(args.gold)
    if not Path(args.pred).exists():
        raise ConfigError(f"no such file: {args.pred}")
    table = evaluate_files(args.pred, records, args.out or "/dev/stdout")
    emit(command="evaluate", **{f"top{k}": v for k, v in table["all"].items()})
    return 0


def cmd_stats(args, emit):
    from .reactions import coverage_stats, write_stats_csv

    stats = coverage_stats(_read_records(args.inp))
    write_stats_csv(stats, args.out or "/dev/stdout")
    emit(command="stats", **stats)
    return 0


COMMANDS = {
    "vocab": cmd_vocab, "train-center": cmd_train_center, "train-synthon": cmd_train_synthon,
    "predict": cmd_predict, "evaluate": cmd_evaluate, "stats": cmd_stats,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"retrograph: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    from threadpoolctl import threadpool_limits

    emit = _JsonLog(args.log)
    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args, emit)
    except ConfigError as exc:
        print(f"retrograph: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"retrograph: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
