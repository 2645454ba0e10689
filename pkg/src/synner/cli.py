"""Command-line entry points: train, eval, predict, inspect, gen-synth.

Data layout convention: for a corpus file ``X.conll`` the parses live next to
it as ``X.trees`` and ``X.deps`` (same stem). ``--trees``/``--deps`` point at
alternative directories holding those files. A plain-text config file with
one ``key=value`` per line seeds the settings; command-line flags override.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import checkpoint as ckpt_mod
from . import synparse, synth, train as train_mod
from .corpus import ColumnMap, load_conll
from .model import format_inspection
from .train import Dataset, TrainConfig, prepare_dataset

_BOOL_KEYS = {"gate", "crf_mask"}
_INT_KEYS = {"layers", "hidden", "heads", "word_dim", "batch_size", "max_epochs",
             "seed", "min_count", "window"}
_FLOAT_KEYS = {"dropout", "lr", "beta1", "beta2", "epsilon", "stop_at_dev_f1"}


def parse_config_file(path: str) -> dict:
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip()] = _coerce(key.strip(), value.strip())
    return out


def _coerce(key: str, value: str):
    if key in _BOOL_KEYS:
        return _parse_onoff(value)
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "syntax":
        return _parse_syntax(value)
    return value


def _parse_onoff(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {value!r}")


def _parse_syntax(value: str) -> tuple[str, ...]:
    value = value.strip()
    if not value or value == "none":
        return ()
    return tuple(part.strip() for part in value.split(",") if part.strip())


def build_config(args: argparse.Namespace) -> TrainConfig:
    settings: dict = {}
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in ("encoder", "fusion", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    if getattr(args, "syntax", None) is not None:
        settings["syntax"] = _parse_syntax(args.syntax)
    if getattr(args, "gate", None) is not None:
        settings["gate"] = _parse_onoff(args.gate)
    if getattr(args, "crf_mask", None) is not None:
        settings["crf_mask"] = _parse_onoff(args.crf_mask)
    return TrainConfig.from_dict(settings)


def _sibling(conll_path: str, override_dir: str | None, ext: str) -> str:
    stem = os.path.splitext(os.path.basename(conll_path))[0]
    base = override_dir if override_dir else os.path.dirname(conll_path)
    return os.path.join(base, f"{stem}.{ext}")


def load_dataset(conll_path: str, config: TrainConfig, trees_dir: str | None,
                 deps_dir: str | None, columns: ColumnMap | None = None) -> Dataset:
    corpus = load_conll(conll_path, columns)
    trees = graphs = None
    if "con" in config.syntax:
        trees = synparse.load_trees(_sibling(conll_path, trees_dir, "trees"))
        for k, (tree, sent) in enumerate(zip(trees, corpus.sentences)):
            synparse.check_alignment(tree, sent.surfaces, f"sentence {k}: ")
    if "dep" in config.syntax:
        graphs = synparse.load_deps(_sibling(conll_path, deps_dir, "deps"))
        for k, (g, sent) in enumerate(zip(graphs, corpus.sentences)):
            synparse.check_dep_alignment(g, len(sent), f"sentence {k}: ")
    return prepare_dataset(corpus, trees, graphs, config.syntax, config.window)


def _load_static(config: TrainConfig):
    if not config.embeddings_file:
        return None
    from .encoder import load_word_vectors

    return load_word_vectors(config.embeddings_file)


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    config.validate()
    train_data = load_dataset(args.train, config, args.trees, args.deps)
    dev_data = load_dataset(args.dev, config, args.trees, args.deps)
    os.makedirs(args.out, exist_ok=True)
    result = train_mod.train_model(config, train_data, dev_data,
                                   static_vectors=_load_static(config),
                                   log_stream=sys.stderr if args.verbose else None)
    metrics_path = os.path.join(args.out, "metrics.tsv")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(result.log_lines()) + "\n")
    ckpt_path = os.path.join(args.out, "model.ckpt")
    ckpt_mod.save_checkpoint(ckpt_path, config.to_dict(),
                             ckpt_mod.vocab_bundle(result.model), result.model)
    print(f"best dev F1 {result.best_f1:.2f} at epoch {result.best_epoch} "
          f"({result.seconds:.1f}s); checkpoint: {ckpt_path}")
    if args.test:
        test_data = load_dataset(args.test, config, args.trees, args.deps)
        feats = result.model.featurize_corpus(test_data.corpus, test_data.memories)
        report = train_mod.evaluate_model(result.model, feats)
        print(f"test {report.formatted()}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, config = ckpt_mod.restore_model(args.checkpoint)
    data = load_dataset(args.data, config, args.trees, args.deps)
    feats = model.featurize_corpus(data.corpus, data.memories)
    report = train_mod.evaluate_model(model, feats)
    print(report.formatted())
    for etype, (p, r, f) in report.per_type.items():
        print(f"{etype}\tP={p:.2f}\tR={r:.2f}\tF1={f:.2f}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model, config = ckpt_mod.restore_model(args.checkpoint)
    data = load_dataset(args.data, config, args.trees, args.deps)
    if args.out == "-":
        train_mod.predict_corpus(model, data, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            train_mod.predict_corpus(model, data, fh)
        print(f"wrote {args.out}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    model, config = ckpt_mod.restore_model(args.checkpoint)
    data = load_dataset(args.data, config, args.trees, args.deps)
    if not 0 <= args.sentence < len(data.corpus):
        raise SystemExit(f"sentence index {args.sentence} out of range")
    mems = data.memories[args.sentence] if data.memories else None
    feats = model.featurize(data.corpus.sentences[args.sentence], mems)
    records = model.inspect(feats)
    if args.token is not None:
        if not 0 <= args.token < len(records):
            raise SystemExit(f"token index {args.token} out of range")
        records = [records[args.token]]
    for line in format_inspection(records, args.sentence):
        print(line)
    return 0


def cmd_gen_synth(args: argparse.Namespace) -> int:
    spec = synth.SynthSpec(n_train=args.train_size, n_dev=args.dev_size,
                           n_test=args.test_size, n_types=args.types,
                           noise=args.noise, seed=args.seed)
    paths = synth.gen_synth(args.out, spec)
    for split in ("train", "dev", "test"):
        print(f"{split}: {paths[split]['conll']}")
    return 0


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", help="directory holding <stem>.trees files")
    p.add_argument("--deps", help="directory holding <stem>.deps files")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--encoder", choices=["bilstm", "transformer", "adapted"])
    p.add_argument("--syntax", help="comma list from pos,con,dep (or 'none')")
    p.add_argument("--fusion", choices=["none", "dc", "sa"])
    p.add_argument("--gate", choices=["on", "off"])
    p.add_argument("--crf-mask", dest="crf_mask", choices=["on", "off"])
    p.add_argument("--seed", type=int)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="synner",
                                     description="syntax-enhanced NER toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    _add_model_flags(p)
    _add_data_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a labeled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _add_data_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write predictions as a CoNLL column")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-")
    _add_data_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect", help="dump memory/attention/gate weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sentence", type=int, default=0)
    p.add_argument("--token", type=int)
    _add_data_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--train-size", type=int, default=500)
    p.add_argument("--dev-size", type=int, default=100)
    p.add_argument("--test-size", type=int, default=100)
    p.add_argument("--types", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gen_synth)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
