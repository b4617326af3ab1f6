"""Command-line entry point.

Subcommands: train, eval, score, report, gradcheck, synth. Every run
prints its resolved configuration to standard output before acting.
Exit codes: 0 success, 1 check failure, 2 input or data error,
3 numeric abort.
"""

import argparse
import dataclasses
import os
import sys

from .corpus import RUBRIC_PRESETS, load_corpus, resolve_rubric, save_corpus
from .encoder import EncoderConfig
from .errors import DimscoreError, NumericAbort
from .gradcheck import MODEL_THRESHOLD, OP_THRESHOLD, run_suites
from .metrics import MetricsReport, parse_report_csv, render_report
from .model import predict_records, score_text
from .synth import synth_corpus
from .trainer import (TRAIN_PRESETS, TrainConfig, effective_config,
                      load_checkpoint, preset_config, save_checkpoint, train)


_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_ENCODER_FIELDS = {f.name: f.type for f in dataclasses.fields(EncoderConfig)}


def _announce(subcommand, pairs):
    print("resolved config:")
    print(f"  subcommand = {subcommand}")
    for key, value in pairs:
        print(f"  {key} = {value}")


def _coerce(key, value, typ):
    from .errors import ConfigError
    try:
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"config key {key!r}: bad value {value!r}") from None


def _read_config_file(path):
    """Split a `key = value` file into train, encoder, and rubric parts."""
    from .errors import ConfigError
    train_kw, encoder_kw = {}, {}
    preset = None
    rubric = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "preset":
                preset = value
            elif key == "rubric":
                rubric = value
            elif key in _TRAIN_FIELDS:
                train_kw[key] = _coerce(key, value, _TRAIN_FIELDS[key])
            elif key in _ENCODER_FIELDS:
                encoder_kw[key] = _coerce(key, value, _ENCODER_FIELDS[key])
            else:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return preset, train_kw, encoder_kw, rubric


def _resolve_train_setup(config_arg):
    """A preset name or config-file path -> (TrainConfig, EncoderConfig, rubric)."""
    if config_arg in TRAIN_PRESETS:
        cfg = preset_config(config_arg)
        return cfg, EncoderConfig(vocab_size=8192), resolve_rubric("ellipse-style")
    preset, train_kw, encoder_kw, rubric_arg = _read_config_file(config_arg)
    if preset is not None:
        cfg = preset_config(preset, **train_kw)
    else:
        cfg = TrainConfig(**train_kw)
    encoder_kw.setdefault("vocab_size", 8192)
    enc = EncoderConfig(**encoder_kw)
    rubric = resolve_rubric(rubric_arg or "ellipse-style")
    return cfg, enc, rubric


def _config_pairs(cfg):
    return [(f.name, getattr(cfg, f.name)) for f in dataclasses.fields(cfg)]


def cmd_train(args):
    cfg, enc, rubric = _resolve_train_setup(args.config)
    eff = effective_config(cfg)
    pairs = [("config", args.config), ("train", args.train), ("eval", args.eval),
             ("out", args.out), ("rubric", rubric.name),
             ("dimensions", ",".join(rubric.dimensions)),
             ("bands", f"{rubric.bands[0]}..{rubric.bands[-1]}")]
    pairs += _config_pairs(cfg)
    if eff is not cfg:
        pairs += [("effective_num_train_epochs", eff.num_train_epochs),
                  ("effective_warmup_steps", eff.warmup_steps)]
    pairs += [(f"encoder_{k}", v) for k, v in _config_pairs(enc)]
    _announce("train", pairs)
    train_corpus = load_corpus(args.train, rubric)
    eval_corpus = load_corpus(args.eval, rubric)
    ckpt, log = train(cfg, train_corpus, eval_corpus, encoder_cfg=enc,
                      model_id=os.path.basename(args.out))
    save_checkpoint(ckpt, args.out)
    log_path = args.out + ".log.csv"
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(log.to_csv())
    last = log.entries[-1]
    print(f"wrote checkpoint {args.out} (step {ckpt.step})")
    print(f"wrote log {log_path}")
    print(render_report(last.report, fmt="text"), end="")
    return 0


def cmd_eval(args):
    ckpt = load_checkpoint(args.ckpt)
    _announce("eval", [("ckpt", args.ckpt), ("test", args.test),
                       ("format", args.format), ("rubric", ckpt.rubric.name)])
    corpus = load_corpus(args.test, ckpt.rubric)
    model = ckpt.to_model()
    preds = predict_records(model, corpus.records)
    from .metrics import evaluate_corpus
    report = evaluate_corpus(preds, corpus,
                             corpus_id=os.path.basename(args.test),
                             model_id=os.path.basename(args.ckpt))
    print(render_report(report, fmt=args.format), end="")
    return 0


def cmd_score(args):
    ckpt = load_checkpoint(args.ckpt)
    _announce("score", [("ckpt", args.ckpt), ("essay", args.essay),
                        ("prompt", args.prompt if args.prompt else "<none>"),
                        ("rubric", ckpt.rubric.name)])
    if args.essay == "-":
        text = sys.stdin.read()
    else:
        with open(args.essay, encoding="utf-8") as fh:
            text = fh.read()
    model = ckpt.to_model()
    scores = score_text(model, text, prompt=args.prompt)
    for dim in ckpt.rubric.dimensions:
        print(f"{dim}\t{scores.bands[dim]!r}\t{scores.raw[dim]!r}")
    return 0


def cmd_report(args):
    _announce("report", [("metrics", args.metrics), ("format", args.format)])
    with open(args.metrics, encoding="utf-8") as fh:
        rows = parse_report_csv(fh.read())
    name = os.path.splitext(os.path.basename(args.metrics))[0]
    report = MetricsReport(corpus_id=name, model_id="-", n_essays="-",
                           rows=list(rows.values()))
    print(render_report(report, fmt=args.format), end="")
    return 0


def cmd_gradcheck(args):
    _announce("gradcheck", [("dims", args.dims),
                            ("op_threshold", OP_THRESHOLD),
                            ("model_threshold", MODEL_THRESHOLD)])
    ops, model, ok = run_suites(args.dims)
    failing = []
    for name, err in ops:
        status = "ok" if err < OP_THRESHOLD else "FAIL"
        print(f"op {name:<18} worst_rel_err {err:.3e}  {status}")
        if err >= OP_THRESHOLD:
            failing.append(name)
    worst_model = 0.0
    for name, err in model:
        worst_model = max(worst_model, err)
        if err >= MODEL_THRESHOLD:
            failing.append(name)
            print(f"model {name:<24} worst_rel_err {err:.3e}  FAIL")
    print(f"model worst_rel_err {worst_model:.3e}  "
          f"{'ok' if worst_model < MODEL_THRESHOLD else 'FAIL'}")
    if not ok:
        print("failing: " + ", ".join(failing), file=sys.stderr)
        return 1
    return 0


def cmd_synth(args):
    rubric = resolve_rubric(args.rubric)
    _announce("synth", [("n", args.n), ("rubric", rubric.name),
                        ("seed", args.seed), ("out", args.out),
                        ("prompt_dependent", args.prompt_dependent),
                        ("topics", args.topics)])
    corpus = synth_corpus(args.n, rubric, seed=args.seed,
                          prompt_dependent=args.prompt_dependent,
                          n_topics=args.topics)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} essays to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dimscore",
        description="Multi-dimensional essay scoring: train, evaluate, and "
                    "score with per-dimension rubric bands.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", required=True,
                   help="preset name (%s) or `key = value` config file"
                        % ", ".join(sorted(TRAIN_PRESETS)))
    p.add_argument("--train", required=True, help="training corpus CSV")
    p.add_argument("--eval", required=True, help="held-out corpus CSV")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score one essay from a file or stdin")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--essay", default="-",
                   help="essay file, or `-` for standard input (default)")
    p.add_argument("--prompt", default=None, help="optional prompt text")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="re-render a metrics CSV")
    p.add_argument("--metrics", required=True, help="metrics CSV path")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="run gradient self-checks")
    p.add_argument("--dims", choices=("small", "full"), default="small")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic scored corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rubric", default="ellipse-style",
                   help="preset name (%s) or rubric config file"
                        % ", ".join(sorted(RUBRIC_PRESETS)))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--prompt-dependent", action="store_true")
    p.add_argument("--topics", type=int, default=8)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3
    except (DimscoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
