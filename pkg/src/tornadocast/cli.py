"""``tornadocast`` command line: prep, synth, train, score, crossval, append.

Exit codes: 0 success, 2 input/file errors, 3 schema/shape errors,
4 numerical divergence.

Every command accepts ``--config FILE`` with flat ``key = value`` lines (keys
are the long option names, dashes or underscores); explicit flags override it.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import dataio
from . import neuralnet as nn
from .evaluator import MODES, classify, cross_validate
from .exceptions import DataError, SchemaError, TornadocastError
from .preprocess import (
    FoldPlan,
    MeanImputer,
    SequenceBatch,
    SmoteConfig,
    Standardizer,
    make_sequences,
    smote,
)
from .synth import SynthConfig, generate, write_yearly_fixture
from .trainer import TrainConfig, train

log = logging.getLogger("tornadocast")


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    values = read_config_file(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or not action.option_strings:
            raise DataError(f"unknown config key {key!r} for '{args.command}'")
        if action.const is not None and action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _add_train_flags(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--hidden", type=int, default=64, help="LSTM hidden size")
    g.add_argument("--dropout", type=float, default=0.2)
    g.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    g.add_argument("--epochs", type=int, default=10)
    g.add_argument("--batch-size", type=int, default=128)
    g.add_argument("--train-seed", type=int, default=42)
    g.add_argument("--clip-norm", type=float, default=None, help="optional global-norm gradient clip")
    g.add_argument("--patience", type=int, default=None, help="optional early stopping on training loss")
    g.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    g.add_argument("--window", type=int, default=1, help="sequence length in days")
    g.add_argument("--threshold", type=float, default=0.5)
    s = p.add_argument_group("SMOTE")
    s.add_argument("--no-smote", action="store_true")
    s.add_argument("--k-neighbors", type=int, default=5)
    s.add_argument("--target-ratio", type=float, default=1.0)
    s.add_argument("--smote-seed", type=int, default=42)


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        hidden_size=args.hidden, dropout_rate=args.dropout, learning_rate=args.lr,
        epochs=args.epochs, batch_size=args.batch_size, seed=args.train_seed,
        clip_norm=args.clip_norm, patience=args.patience, dtype=args.dtype,
    )


def _smote_config(args) -> SmoteConfig:
    return SmoteConfig(args.k_neighbors, args.target_ratio, args.smote_seed)


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_prep(args) -> int:
    weather = dataio.load_weather_csv(args.weather)
    events = dataio.load_events_csv(args.events)
    table, dropped_cols = dataio.clean_weather(weather, args.sparsity, impute=not args.keep_missing)
    for problem in dataio.check_ranges(table):
        log.warning("range check: %s has %d values outside %s",
                    problem["column"], problem["count"], problem["range"])
    samples, dropped_events = dataio.join_label(table, events)
    summary = dataio.summarize(samples)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_dataset(samples, out)
    reports = Path(args.reports) if args.reports else out.parent
    reports.mkdir(parents=True, exist_ok=True)
    dataio.write_json({"sparsity_threshold": args.sparsity, "dropped": dropped_cols},
                      reports / f"{out.stem}.dropped_columns.json")
    dataio.write_json({"count": len(dropped_events), "events": dropped_events},
                      reports / f"{out.stem}.dropped_events.json")
    dataio.write_json(summary.to_dict(), reports / f"{out.stem}.summary.json")

    print(summary.format_table())
    print(f"features: {summary.n_features}; dropped columns: "
          f"{', '.join(d['column'] for d in dropped_cols) or 'none'}; "
          f"unmatched events: {len(dropped_events)}")
    return 0


def cmd_synth(args) -> int:
    if args.yearly_fixture:
        w, e = write_yearly_fixture(args.out, seed=args.seed)
        print(f"wrote {w} and {e}")
        return 0
    cfg = SynthConfig(args.n, args.features, args.rate, args.separability, args.seed, args.locations)
    samples, truth = generate(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_dataset(samples, out)
    dataio.write_json(truth.to_dict(), out.with_suffix(".truth.json"))
    print(f"wrote {len(samples)} rows ({truth.n_positives} positive) to {out}; "
          f"Bayes accuracy {truth.bayes_accuracy:.4f}")
    return 0


def _fit_pipeline(samples: dataio.LabeledDataset, args):
    """Impute/standardize/SMOTE on the full dataset, then train. Returns (params, doc extras, curve)."""
    if args.window > 1:
        samples = samples.sorted_by_location()
    batch = make_sequences(samples, args.window)
    X, y = batch.inputs, batch.labels
    imputer = None
    if np.isnan(X).any():
        imputer = MeanImputer().fit(X)
        X = imputer.transform(X)
    std = Standardizer().fit(X)
    X = std.transform(X)
    if not args.no_smote:
        X, y, _ = smote(X, y, _smote_config(args))
    cfg = _train_config(args)
    model, curve = train(SequenceBatch(X, y, args.window), cfg)
    extras = {
        "feature_names": samples.feature_names,
        "window": args.window,
        "threshold": args.threshold,
        "standardizer": std.to_dict(),
        "impute_means": None if imputer is None else imputer.means_.tolist(),
        "train_config": cfg.to_dict(),
        "smote": None if args.no_smote else vars(_smote_config(args)),
        "training_curve": curve.to_dict(),
    }
    return model.params, extras, curve


def cmd_train(args) -> int:
    samples = dataio.read_dataset(args.dataset)
    params, extras, curve = _fit_pipeline(samples, args)
    nn.save_params(params, args.model, **extras)
    if args.curve:
        _write(args.curve, curve.to_csv())
    if len(curve):
        print(f"trained {len(curve)} epochs: loss {curve.loss[-1]:.4f}, accuracy {curve.accuracy[-1]:.4f}")
    print(f"model written to {args.model}")
    return 0


def score_frame(frame: pd.DataFrame, params: nn.LstmParams, doc: dict) -> pd.DataFrame:
    """Append ``probability`` and ``prediction`` columns to ``frame``."""
    names = doc["feature_names"]
    have = dataio.feature_columns(frame)
    missing = [c for c in names if c not in have]
    extra = [c for c in have if c not in names]
    if missing or extra:
        raise SchemaError(
            f"model expects {len(names)} features, input has {len(have)} "
            f"(missing={missing}, unexpected={extra})"
        )
    work = frame.copy()
    if dataio.RESULT not in work.columns:
        work[dataio.RESULT] = 0
    samples = dataio.LabeledDataset.from_frame(work[[dataio.DATE, dataio.LOCATION, *names, dataio.RESULT]])
    window = int(doc.get("window", 1))
    order = np.arange(len(samples))
    if window > 1:
        order = np.lexsort((samples.dates, samples.location_ids.astype(str)))
        samples = samples.subset(order)
    batch = make_sequences(samples, window)
    X = batch.inputs
    if doc.get("impute_means") is not None:
        imputer = MeanImputer()
        imputer.means_ = np.asarray(doc["impute_means"])
        X = imputer.transform(X)
    X = Standardizer.from_dict(doc["standardizer"]).transform(X)
    probs = nn.predict_proba(params, X)

    prob_col = np.full(len(frame), np.nan)
    prob_col[order[batch.source_index]] = probs
    out = frame.copy()
    out["probability"] = prob_col
    pred = pd.array([pd.NA] * len(frame), dtype="Int64")
    scored = ~np.isnan(prob_col)
    pred[scored] = classify(prob_col[scored], float(doc.get("threshold", 0.5)))
    out["prediction"] = pred
    return out


def cmd_score(args) -> int:
    if not Path(args.model).is_file():
        raise DataError(f"model file not found: {args.model}")
    params, doc = nn.load_params(args.model)
    if not Path(args.input).is_file():
        raise DataError(f"input file not found: {args.input}")
    frame = pd.read_csv(args.input, dtype={dataio.DATE: str, dataio.LOCATION: str})
    scored = score_frame(frame, params, doc)
    if args.out:
        scored.to_csv(args.out, index=False, lineterminator="\n")
    else:
        scored.to_csv(sys.stdout, index=False, lineterminator="\n")
    if dataio.RESULT in frame.columns:
        ok = scored["prediction"].notna().to_numpy()
        acc = float((scored["prediction"][ok].astype(int) == frame[dataio.RESULT][ok]).mean())
        print(f"scored {int(ok.sum())} rows; accuracy {acc:.4f}", file=sys.stderr)
    return 0


def cmd_crossval(args) -> int:
    samples = dataio.read_dataset(args.dataset)
    report = cross_validate(
        samples,
        FoldPlan(args.folds, args.seed),
        _train_config(args),
        mode=args.mode,
        smote_config=_smote_config(args),
        window=args.window,
        threshold=args.threshold,
        use_smote=not args.no_smote,
        jobs=args.jobs,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc["dataset_sha256"] = _file_sha256(args.dataset)
    dataio.write_json(doc, out / "report.json")
    for fold in report.folds:
        if fold.roc is not None:
            _write(out / f"roc_fold_{fold.fold_index}.csv", fold.roc.to_csv())
        _write(out / f"curve_fold_{fold.fold_index}.csv", fold.curve.to_csv())
    _write(out / "avg_confusion.csv", report.average_confusion.to_csv())

    for fold in report.folds:
        auc = "n/a" if fold.auc is None else f"{fold.auc:.4f}"
        print(f"fold {fold.fold_index}: accuracy {fold.metrics.accuracy:.4f}  AUC {auc}")
    print(f"mode {report.mode}: accuracy {report.mean_accuracy:.4f} +/- {report.std_accuracy:.4f}")
    return 0


def cmd_append(args) -> int:
    dataset = Path(args.dataset)
    header = dataio.read_dataset_header(dataset)
    if not Path(args.new_rows).is_file():
        raise DataError(f"input file not found: {args.new_rows}")
    new = pd.read_csv(args.new_rows, dtype={dataio.DATE: str, dataio.LOCATION: str})
    extra = [c for c in new.columns if c not in header]
    missing = [c for c in header if c not in new.columns]
    if extra:
        raise SchemaError(f"new rows carry unknown column(s): {', '.join(extra)}")
    if missing:
        raise SchemaError(f"new rows lack column(s): {', '.join(missing)}")
    new = new[header]
    dataio.LabeledDataset.from_frame(new)  # validates dates, numerics and labels

    target = Path(args.out) if args.out else dataset
    if target != dataset:
        target.write_bytes(dataset.read_bytes())
    if len(new):
        body = new.to_csv(index=False, header=False, lineterminator="\n")
        with target.open("ab") as fh:
            existing = dataset.read_bytes()
            if existing and not existing.endswith(b"\n"):
                fh.write(b"\n")
            fh.write(body.encode("utf-8"))
    summary = dataio.summarize(dataio.read_dataset(target))
    print(f"appended {len(new)} rows to {target}")
    print(summary.format_table())
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tornadocast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="clean weather + events into the canonical labeled CSV")
    p.add_argument("weather")
    p.add_argument("events")
    p.add_argument("out")
    p.add_argument("--sparsity", type=float, default=0.5, help="max missing fraction kept")
    p.add_argument("--keep-missing", action="store_true", help="skip global mean imputation")
    p.add_argument("--reports", help="directory for JSON reports (default: next to OUT)")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("synth", help="write a synthetic dataset with known ground truth")
    p.add_argument("out", help="output CSV (or directory with --yearly-fixture)")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--features", type=int, default=16)
    p.add_argument("--rate", type=float, default=0.023)
    p.add_argument("--separability", type=float, default=4.0)
    p.add_argument("--locations", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--yearly-fixture", action="store_true",
                   help="write raw weather.csv/events.csv reproducing the yearly-count table")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a canonical dataset and save the model JSON")
    p.add_argument("dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--curve", help="optional CSV path for the training curve")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="append probability,prediction columns to rows")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("crossval", help="k-fold evaluation with JSON/CSV reports")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default="sound")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=42, help="fold shuffle seed")
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("append", help="append rows with the same schema to a dataset")
    p.add_argument("dataset")
    p.add_argument("new_rows")
    p.add_argument("--out", help="write the extended dataset here instead of in place")
    p.set_defaults(func=cmd_append)

    for action in sub.choices.values():
        action.add_argument("--config", help="flat key=value file of option defaults")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args = _apply_config(parser, args, argv)
        return args.func(args)
    except TornadocastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
