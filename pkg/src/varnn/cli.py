"""Command-line entry point: ``varnn {train,eval,tag,gradcheck,synth}``.

Exit codes: 0 ok, 2 I/O or unreadable data, 3 numeric failure, 4 schema
mismatch between checkpoint and data, 5 gradient check failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint, gradcheck, synthetic
from .cells import CELL_KINDS
from .corpus import (CorpusError, LabelFormatError, build_vocab, format_conll,
                     read_conll, score, split_train_val)
from .network import DIRECTIONS, REGIMES, ModelConfig, predict
from .training import NonFiniteLossError, TrainConfig, evaluate, format_history, train

log = logging.getLogger("varnn")

EXIT_OK, EXIT_IO, EXIT_NUMERIC, EXIT_SCHEMA, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_corpus(path):
    try:
        return read_conll(path)
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}", EXIT_IO) from None
    except CorpusError as e:
        raise CliError(f"{path}: {e}", EXIT_IO) from None


def _load_checkpoint(path):
    try:
        return checkpoint.load(path)
    except OSError as e:
        raise CliError(f"cannot read checkpoint {path}: {e.strerror}", EXIT_IO) from None
    except checkpoint.CheckpointError as e:
        raise CliError(f"{path}: {e}", EXIT_SCHEMA) from None


def _model_config(args, vocab):
    label_count = args.label_count or len(vocab.labels)
    if label_count < len(vocab.labels):
        raise CliError(f"--label-count {label_count} is below the {len(vocab.labels)} labels in the data",
                       EXIT_SCHEMA)
    return ModelConfig(vocab_size=len(vocab.words), cell_kind=args.cell, direction=args.direction,
                       embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
                       label_count=label_count, dropout_regime=args.regime, drop_prob=args.p,
                       mask_gru_candidate_hidden=args.mask_gru_candidate_hidden)


def cmd_train(args):
    train_raw = _read_corpus(args.train)
    if args.val:
        val_raw = _read_corpus(args.val)
    else:
        train_raw, val_raw = split_train_val(train_raw, args.split, args.seed)
    test_raw = _read_corpus(args.test) if args.test else None

    vocab = build_vocab(train_raw, args.min_count, args.lowercase)
    config = _model_config(args, vocab)
    encode = lambda corpus: [vocab.encode(s) for s in corpus]  # noqa: E731
    try:
        train_set, val_set = encode(train_raw), encode(val_raw)
        test_set = encode(test_raw) if test_raw else None
    except CorpusError as e:
        raise CliError(f"label mismatch: {e}", EXIT_SCHEMA) from None

    os.makedirs(args.out, exist_ok=True)
    scores = []
    for run in range(args.runs):
        seed = args.seed + run
        tc = TrainConfig(learning_rate=args.lr, epochs=args.epochs, weight_decay=args.weight_decay,
                         clip_norm=args.clip if args.clip > 0 else None, seed=seed,
                         patience=args.patience)
        try:
            result = train(config, train_set, val_set, tc, vocab.labels)
        except NonFiniteLossError as e:
            raise CliError(str(e), EXIT_NUMERIC) from None
        ckpt = checkpoint.Checkpoint(config, vocab, result.params, tc.to_dict(), seed, result.best_f)
        stem = os.path.join(args.out, f"run{seed}")
        checkpoint.save(ckpt, stem + ".ckpt")
        with open(stem + ".history.tsv", "w") as fh:
            fh.write(format_history(result.history))
        if test_set is not None:
            f = evaluate(result.params, config, test_set, vocab.labels).f_measure
        else:
            f = result.best_f
        scores.append(f)
        print(f"run\t{seed}\tbest_epoch={result.best_epoch}\tval_f={result.best_f:.4f}\tf={f:.4f}")
    which = "test" if test_set is not None else "val"
    print(f"summary\t{which}\truns={len(scores)}\tbest_f={max(scores):.4f}"
          f"\taverage_f={float(np.mean(scores)):.4f}")
    return EXIT_OK


def cmd_eval(args):
    ckpt = _load_checkpoint(args.checkpoint)
    gold_raw = _read_corpus(args.test)
    known = set(ckpt.vocab.labels)
    gold, pred = [], []
    for k, sentence in enumerate(gold_raw):
        words, labels = zip(*sentence)
        unknown = [l for l in labels if l not in known]
        if unknown:
            raise CliError(f"sentence {k}: label {unknown[0]!r} not in checkpoint label map",
                           EXIT_SCHEMA)
        tokens = ckpt.vocab.encode_words(words)
        gold.append(list(labels))
        pred.append(ckpt.vocab.decode_labels(predict(ckpt.params, ckpt.config, tokens)))
    print(score(gold, pred).line())
    return EXIT_OK


def cmd_tag(args):
    ckpt = _load_checkpoint(args.checkpoint)
    try:
        fh = open(args.input, encoding="utf-8") if args.input != "-" else sys.stdin
    except OSError as e:
        raise CliError(f"cannot read {args.input}: {e.strerror}", EXIT_IO) from None
    out = []
    with fh:
        for lineno, line in enumerate(fh, start=1):
            words = line.split()
            if not words:
                log.warning("line %d: empty, skipped", lineno)
                continue
            labels = ckpt.vocab.decode_labels(
                predict(ckpt.params, ckpt.config, ckpt.vocab.encode_words(words)))
            out.append(list(zip(words, labels)))
    sys.stdout.write(format_conll(out))
    return EXIT_OK


def cmd_gradcheck(args):
    cells = [args.cell] if args.cell else CELL_KINDS
    directions = [args.direction] if args.direction else DIRECTIONS
    regimes = [args.regime] if args.regime else REGIMES
    failures = []
    print("cell\tdirection\tregime\tmax_rel_err\tworst_tensor")
    for (cell, direction, regime), errs in gradcheck.run_all(
            cells, directions, regimes, seeds=range(args.seed, args.seed + args.seeds),
            length=args.length, embed_dim=args.embed_dim, hidden_dim=args.hidden_dim,
            label_count=args.label_count, drop_prob=args.p, weight_decay=args.weight_decay):
        worst = max(errs, key=errs.get)
        print(f"{cell}\t{direction}\t{regime}\t{errs[worst]:.3e}\t{worst}")
        bad = sorted(name for name, e in errs.items() if not e < gradcheck.TOLERANCE)
        if bad:
            failures.append(f"{cell}/{direction}/{regime}: {', '.join(bad)}")
    if failures:
        raise CliError("gradient check failed for " + "; ".join(failures), EXIT_GRADCHECK)
    return EXIT_OK


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    splits = synthetic.generate_splits(args.n_train, args.n_val, args.n_test, args.seed,
                                       args.label_noise)
    for name, corpus in zip(("train", "val", "test"), splits):
        with open(os.path.join(args.out, f"{name}.conll"), "w", encoding="utf-8") as fh:
            fh.write(format_conll(corpus))
    return EXIT_OK


def _model_flags(p):
    p.add_argument("--cell", choices=CELL_KINDS, default="lstm")
    p.add_argument("--direction", choices=DIRECTIONS, default="uni")
    p.add_argument("--regime", choices=REGIMES, default="none")
    p.add_argument("--p", type=float, default=0.5, help="dropout (drop) probability")
    p.add_argument("--embed-dim", type=int, default=100)
    p.add_argument("--hidden-dim", type=int, default=100)
    p.add_argument("--mask-gru-candidate-hidden", action="store_true",
                   help="also apply the hidden mask inside the GRU candidate")


def build_parser():
    parser = argparse.ArgumentParser(prog="varnn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults (keys use underscores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one or more seeded runs")
    p.add_argument("--train", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--val")
    group.add_argument("--split", type=float, default=0.8)
    p.add_argument("--test")
    p.add_argument("--out", required=True, help="directory for checkpoints and histories")
    _model_flags(p)
    p.add_argument("--label-count", type=int, default=None)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=1e-5)
    p.add_argument("--clip", type=float, default=5.0, help="global norm threshold; 0 disables")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a CoNLL file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tag", help="label whitespace-tokenised sentences")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default="-", help="one sentence per line; '-' for stdin")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("gradcheck", help="finite-difference check of BPTT gradients")
    p.add_argument("--cell", choices=CELL_KINDS)
    p.add_argument("--direction", choices=DIRECTIONS)
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--length", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=5)
    p.add_argument("--hidden-dim", type=int, default=5)
    p.add_argument("--label-count", type=int, default=3)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write the bundled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-val", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return parser


def _apply_config_file(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    pre, _ = probe.parse_known_args(argv)
    if not pre.config:
        return
    try:
        with open(pre.config) as fh:
            defaults = json.load(fh)
    except (OSError, ValueError) as e:
        raise CliError(f"cannot read config {pre.config}: {e}", EXIT_IO) from None
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**defaults)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as e:
        print(f"varnn: error: {e}", file=sys.stderr)
        return e.code
    except LabelFormatError as e:
        print(f"varnn: error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except ValueError as e:
        # invalid option values share argparse's usage-error code
        print(f"varnn: error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
