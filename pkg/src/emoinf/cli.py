"""Command-line interface.

Subcommands: synth, extract, train, predict, analyze (sampling | temporal |
social | cca | evaluate | ablate), export-dot. Every command writes a run
manifest next to its outputs. Exit codes: 0 success, 1 usage error, 2 data
error, 3 partial success.

Analysis and training commands write delimited data (CSV/JSON) and, unless
--no-figures is given, render the same data as PNG figures alongside.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

CONFIG_ENV = "EMOINF_CONFIG"  # default --config path for synth

import numpy as np

from . import __version__
from .analysis import (
    ablation_run,
    cca,
    evaluate,
    holdout_evaluate,
    report_json,
    sampling_test,
    social_correlation,
    split_labeled_images,
    temporal_correlation,
    write_rows_csv,
    write_variant_metrics_csv,
)
from .dotexport import export_ego_dot
from .factorgraph import as_kind
from .features import extract_features, read_ppm
from .inference import BpConfig
from .learning import (
    TrainConfig,
    fit,
    load_params,
    predict,
    save_params,
    write_trace_csv,
)
from .network import (
    CATEGORIES,
    NetworkFormatError,
    as_category,
    load_network,
    mask_image_labels,
    resolve_multilabel,
    save_network,
    slice_index,
)
from .synth import SynthConfig, generate, save_truth

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _write_manifest(out_dir: Path, command: str, args_ns, inputs, outputs,
                    started: float, extra=None) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:] if sys.argv else [],
        "seed": getattr(args_ns, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
        "version": __version__,
    }
    if extra:
        manifest["config"] = extra
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{command.replace(' ', '_')}_manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _child_seeds(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _categories_arg(value: str):
    if value == "all":
        return list(CATEGORIES)
    return [as_category(v) for v in value.split(",")]


def _train_config(args) -> TrainConfig:
    bp = BpConfig(schedule=args.bp_schedule, damping=args.bp_damping,
                  max_iterations=args.bp_max_iter, tolerance=args.bp_tol)
    return TrainConfig(max_outer=args.max_iter, step_size=args.step_size,
                       step2_iters=args.step2_iters, step3_iters=args.step3_iters,
                       freeze_decay=args.freeze_decay, bp=bp)


def _add_train_flags(p, max_iter_default=20):
    p.add_argument("--window", type=int, default=1, help="temporal window W")
    p.add_argument("--max-iter", type=int, default=max_iter_default)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--step2-iters", type=int, default=10)
    p.add_argument("--step3-iters", type=int, default=5)
    p.add_argument("--freeze-decay", action="store_true",
                   help="keep both decay rates at their initial values")
    p.add_argument("--bp-schedule", choices=["sequential", "synchronous"],
                   default="sequential")
    p.add_argument("--bp-damping", type=float, default=0.3)
    p.add_argument("--bp-max-iter", type=int, default=100)
    p.add_argument("--bp-tol", type=float, default=1e-6)


def build_parser() -> _Parser:
    parser = _Parser(prog="emoinf",
                     description="Emotion influence modeling for image networks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic network with hidden truth")
    p.add_argument("--config", help="SynthConfig JSON file (overrides flags)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--mean-degree", type=float, default=4.0)
    p.add_argument("--images-per-slice", type=float, default=2.0)
    p.add_argument("--influence-density", type=float, default=0.3)
    p.add_argument("--label-rate", type=float, default=0.5)
    p.add_argument("--feature-separation", type=float, default=1.5)
    p.add_argument("--category", default="happiness")
    p.add_argument("--out", required=True, help="network file path")
    p.add_argument("--truth-out", help="truth sidecar path (default: <out>.truth.json)")

    p = sub.add_parser("extract", help="extract features from PPM images")
    p.add_argument("--images-dir", required=True)
    p.add_argument("--manifest", required=True,
                   help="JSON list of {file, id, owner, t | epoch_seconds}")
    p.add_argument("--slice-seconds", type=float, default=7 * 24 * 3600.0)
    p.add_argument("--origin-epoch", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="image-record fragment path")

    p = sub.add_parser("train", help="fit the influence model")
    p.add_argument("--net", required=True)
    p.add_argument("--category", default="all",
                   help='one category, a comma list, or "all"')
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-frac", type=float, default=0.0,
                   help="fraction of labeled images to hold out before fitting")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--split-unit", choices=["image", "slice"], default="image",
                   help="hold out single images or whole (user, slice) groups")
    p.add_argument("--no-figures", action="store_true")
    _add_train_flags(p)

    p = sub.add_parser("predict", help="predict probabilities and labels")
    p.add_argument("--net", required=True)
    p.add_argument("--params", required=True, nargs="+",
                   help="one or more params files from train")
    p.add_argument("--out", required=True, help="predictions file (JSON lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bp-schedule", choices=["sequential", "synchronous"],
                   default="sequential")
    p.add_argument("--bp-damping", type=float, default=0.3)
    p.add_argument("--bp-max-iter", type=int, default=100)
    p.add_argument("--bp-tol", type=float, default=1e-6)

    p = sub.add_parser("analyze", help="observation statistics and evaluation")
    an = p.add_subparsers(dest="analysis", required=True)

    q = an.add_parser("sampling", help="matched-group emotion ratio test")
    q.add_argument("--net", required=True)
    q.add_argument("--category", default="happiness")
    q.add_argument("--group-size", type=int, default=50)
    q.add_argument("--repetitions", type=int, default=10)
    q.add_argument("--deltas", default="1,2,3,4")
    q.add_argument("--t-mode", choices=["distinct", "window-disjoint"],
                   default="distinct")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--no-figures", action="store_true")

    q = an.add_parser("temporal", help="self-agreement rate over slice gaps")
    q.add_argument("--net", required=True)
    q.add_argument("--category", default="happiness")
    q.add_argument("--user-sample", type=int, default=0)
    q.add_argument("--max-delta", type=int, default=4)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--no-figures", action="store_true")

    q = an.add_parser("social", help="friend vs random-group agreement rates")
    q.add_argument("--net", required=True)
    q.add_argument("--category", default="happiness")
    q.add_argument("--user-sample", type=int, default=0)
    q.add_argument("--deltas", default="1,2,3,4")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--no-figures", action="store_true")

    q = an.add_parser("cca", help="canonical correlation between column blocks")
    q.add_argument("--data", required=True,
                   help="numeric CSV without header; rows are samples")
    q.add_argument("--x-dims", type=int, required=True,
                   help="first x-dims columns are X, the rest are Y")
    q.add_argument("--out-dir", required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--no-figures", action="store_true")

    q = an.add_parser("evaluate", help="score predictions against network labels")
    q.add_argument("--net", required=True)
    q.add_argument("--predictions", required=True)
    q.add_argument("--ids", help="JSON file with image ids to score "
                                 "(e.g. the split file from train); default: all labeled")
    q.add_argument("--out-dir", required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--no-figures", action="store_true")

    q = an.add_parser("ablate", help="refit with factor kinds removed and compare")
    q.add_argument("--net", required=True)
    q.add_argument("--category", default="happiness")
    q.add_argument("--drops", default="f3,f4,f5",
                   help="comma list of kinds to drop one at a time")
    q.add_argument("--split-frac", type=float, default=0.2)
    q.add_argument("--split-seed", type=int, default=0)
    q.add_argument("--split-unit", choices=["image", "slice"], default="image")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--no-figures", action="store_true")
    _add_train_flags(q)

    p = sub.add_parser("export-dot", help="ego influence network as DOT text")
    p.add_argument("--net", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--min-weight", type=float, default=0.5)
    p.add_argument("--slices", help="comma list of slices (default: last five)")
    p.add_argument("--category",
                   help="influence category (required if predictions carry several)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap (current commands are single-process)")
    return parser


# -- command bodies ---------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.time()
    config_path = args.config or os.environ.get(CONFIG_ENV)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            config = SynthConfig.from_json(json.load(fh))
    else:
        config = SynthConfig(
            seed=args.seed, n_users=args.users, horizon=args.horizon,
            mean_degree=args.mean_degree, images_per_slice=args.images_per_slice,
            influence_density=args.influence_density, label_rate=args.label_rate,
            feature_separation=args.feature_separation, category=args.category,
        )
    net, truth = generate(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, out)
    truth_path = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.json")
    save_truth(truth, truth_path, planted=config.planted_params(net.users),
               config=config)
    _write_manifest(out.parent, "synth", args, [config_path] if config_path else [],
                    [out, truth_path], started, extra=config.to_json())
    return EXIT_OK


def cmd_extract(args) -> int:
    started = time.time()
    with open(args.manifest, encoding="utf-8") as fh:
        entries = json.load(fh)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rngs = _child_seeds(args.seed, max(1, len(entries)))
    failures = []
    written = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for i, entry in enumerate(entries):
            path = Path(args.images_dir) / entry["file"]
            try:
                grid = read_ppm(path)
                feats = extract_features(grid, seed=int(rngs[i].integers(0, 2**31)))
            except (OSError, ValueError) as exc:
                failures.append({"file": str(path), "error": str(exc)})
                continue
            t = entry.get("t")
            if t is None:
                t = slice_index(float(entry["epoch_seconds"]),
                                origin_epoch=args.origin_epoch,
                                slice_seconds=args.slice_seconds)
            fh.write(_dump({
                "kind": "image", "id": str(entry["id"]),
                "owner": str(entry["owner"]), "t": int(t),
                "features": [float(x) for x in feats],
            }) + "\n")
            written += 1
    _write_manifest(out.parent, "extract", args, [args.manifest, args.images_dir],
                    [out], started,
                    extra={"written": written, "failures": failures})
    if failures:
        for failure in failures:
            print(f"failed: {failure['file']}: {failure['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    net = load_network(args.net)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _train_config(args)
    categories = _categories_arg(args.category)

    outputs = []
    split_record = {}
    for category in categories:
        work_net = net
        if args.split_frac > 0:
            _, test_ids = split_labeled_images(net, category, args.split_frac,
                                               args.split_seed,
                                               unit=args.split_unit)
            split_record[category.value] = test_ids
            work_net = mask_image_labels(net, test_ids, category)
        result = fit(work_net, category, config, window=args.window)
        params_path = out_dir / f"params_{category.value}.json"
        save_params(result.params, params_path, category, args.window,
                    meta={"iterations": len(result.trace),
                          "converged": result.converged,
                          "seed": args.seed})
        trace_path = out_dir / f"trace_{category.value}.csv"
        write_trace_csv(result.trace, trace_path)
        outputs += [params_path, trace_path]
        if not args.no_figures and result.trace:
            from . import plots
            fig_path = out_dir / f"trace_{category.value}.png"
            plots.plot_trace(result.trace, fig_path, category.value)
            outputs.append(fig_path)
    if split_record:
        split_path = out_dir / "split.json"
        with open(split_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(split_record, fh, sort_keys=True, indent=2)
            fh.write("\n")
        outputs.append(split_path)
    _write_manifest(out_dir, "train", args, [args.net], outputs, started,
                    extra={"categories": [c.value for c in categories],
                           "window": args.window,
                           "split_frac": args.split_frac})
    return EXIT_OK


def _bp_from(args) -> BpConfig:
    return BpConfig(schedule=args.bp_schedule, damping=args.bp_damping,
                    max_iterations=args.bp_max_iter, tolerance=args.bp_tol)


def cmd_predict(args) -> int:
    started = time.time()
    net = load_network(args.net)
    bp = _bp_from(args)
    loaded = []
    for path in args.params:
        params, category, window, meta = load_params(path)
        loaded.append((category, window, params))
    seen = [c for c, _, _ in loaded]
    if len(set(seen)) != len(seen):
        raise ValueError("duplicate category in params files")

    results = {}
    for category, window, params in loaded:
        results[category] = predict(net, params, category, window=window, bp=bp)

    image_ids = [rec.image_id for rec in net.iter_images()]
    user_keys = sorted({key for r in results.values() for key in r.user_probs})
    influence_keys = sorted({key for r in results.values() for key in r.influence})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"kind": "header", "version": 1,
                        "categories": sorted(c.value for c in results),
                        "net": str(args.net)}) + "\n")
        for iid in image_ids:
            probs = {c.value: results[c].image_probs[iid] for c in results}
            maps = {c.value: results[c].image_map[iid] for c in results}
            emotion = resolve_multilabel(probs)
            fh.write(_dump({"kind": "image", "id": iid, "probs": probs,
                            "map": maps,
                            "emotion": emotion.value if emotion else "neutral"}) + "\n")
        for (u, t) in user_keys:
            probs = {c.value: r.user_probs[(u, t)] for c, r in results.items()
                     if (u, t) in r.user_probs}
            maps = {c.value: r.user_map[(u, t)] for c, r in results.items()
                    if (u, t) in r.user_map}
            emotion = resolve_multilabel(probs) if probs else None
            fh.write(_dump({"kind": "user", "user": u, "t": t, "probs": probs,
                            "map": maps,
                            "emotion": emotion.value if emotion else "neutral"}) + "\n")
        for (src, dst, t) in influence_keys:
            weights = {c.value: r.influence[(src, dst, t)]
                       for c, r in results.items() if (src, dst, t) in r.influence}
            fh.write(_dump({"kind": "influence", "src": src, "dst": dst, "t": t,
                            "weights": weights}) + "\n")
    _write_manifest(out.parent, "predict", args,
                    [args.net, *args.params], [out], started)
    return EXIT_OK


def load_predictions(path):
    """Parse a predictions file into (header, images, users, influence)."""
    header = None
    images, users, influence = {}, {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec.get("kind")
            if kind == "header":
                header = rec
            elif kind == "image":
                images[rec["id"]] = rec
            elif kind == "user":
                users[(rec["user"], rec["t"])] = rec
            elif kind == "influence":
                influence[(rec["src"], rec["dst"], rec["t"])] = rec
    if header is None:
        raise ValueError(f"{path}: missing predictions header")
    return header, images, users, influence


def cmd_analyze(args) -> int:
    started = time.time()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    name = f"analyze {args.analysis}"

    if args.analysis == "sampling":
        net = load_network(args.net)
        deltas = tuple(int(d) for d in args.deltas.split(","))
        report = sampling_test(net, args.category, group_size=args.group_size,
                               repetitions=args.repetitions, deltas=deltas,
                               seed=args.seed, t_mode=args.t_mode)
        csv_path = out_dir / "sampling.csv"
        write_rows_csv(report.to_rows(), csv_path)
        json_path = out_dir / "sampling.json"
        report_json({"category": report.category.value,
                     "repetitions": report.repetitions,
                     "rows": report.to_rows()}, json_path)
        outputs += [csv_path, json_path]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "sampling.png"
            plots.plot_sampling(report, fig)
            outputs.append(fig)

    elif args.analysis == "temporal":
        net = load_network(args.net)
        rates, excluded = temporal_correlation(net, args.category,
                                               user_sample_n=args.user_sample,
                                               max_delta=args.max_delta,
                                               seed=args.seed)
        rows = [{"delta": d, "rate": rates[d]} for d in sorted(rates)]
        csv_path = out_dir / "temporal.csv"
        write_rows_csv(rows, csv_path)
        report_json({"rates": {str(k): v for k, v in rates.items()},
                     "excluded_users": excluded}, out_dir / "temporal.json")
        outputs += [csv_path, out_dir / "temporal.json"]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "temporal.png"
            plots.plot_temporal(rates, fig, args.category)
            outputs.append(fig)

    elif args.analysis == "social":
        net = load_network(args.net)
        deltas = tuple(int(d) for d in args.deltas.split(","))
        friends, skipped_f = social_correlation(net, args.category,
                                                user_sample_n=args.user_sample,
                                                deltas=deltas, mode="friends",
                                                seed=args.seed)
        randoms, skipped_r = social_correlation(net, args.category,
                                                user_sample_n=args.user_sample,
                                                deltas=deltas, mode="random",
                                                seed=args.seed)
        rows = [{"delta": d, "friends": friends[d], "random": randoms[d]}
                for d in deltas]
        csv_path = out_dir / "social.csv"
        write_rows_csv(rows, csv_path)
        report_json({"friends": {str(k): v for k, v in friends.items()},
                     "random": {str(k): v for k, v in randoms.items()},
                     "skipped_users": {"friends": skipped_f, "random": skipped_r}},
                    out_dir / "social.json")
        outputs += [csv_path, out_dir / "social.json"]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "social.png"
            plots.plot_social(friends, randoms, fig, args.category)
            outputs.append(fig)

    elif args.analysis == "cca":
        data = np.loadtxt(args.data, delimiter=",", ndmin=2)
        if args.x_dims < 1 or args.x_dims >= data.shape[1]:
            raise ValueError(f"--x-dims must split {data.shape[1]} columns")
        result = cca(data[:, :args.x_dims], data[:, args.x_dims:])
        report_json({"correlations": result.correlations,
                     "rank_deficient": result.rank_deficient},
                    out_dir / "cca.json")
        rows = [{"component": i + 1, "correlation": float(c)}
                for i, c in enumerate(result.correlations)]
        write_rows_csv(rows, out_dir / "cca.csv")
        outputs += [out_dir / "cca.json", out_dir / "cca.csv"]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "cca.png"
            plots.plot_cca(result.correlations, fig)
            outputs.append(fig)

    elif args.analysis == "evaluate":
        net = load_network(args.net)
        header, images, _, _ = load_predictions(args.predictions)
        wanted = None
        if args.ids:
            with open(args.ids, encoding="utf-8") as fh:
                loaded_ids = json.load(fh)
            wanted = (set(sum(loaded_ids.values(), []))
                      if isinstance(loaded_ids, dict) else set(loaded_ids))
        truth, preds = {}, {}
        for rec in net.iter_images():
            if not rec.labels:
                continue
            if wanted is not None and rec.image_id not in wanted:
                continue
            for cat, label in rec.labels.items():
                if cat.value not in header["categories"]:
                    continue
                truth.setdefault(cat, {})[rec.image_id] = label
                preds.setdefault(cat, {})[rec.image_id] = \
                    images[rec.image_id]["probs"][cat.value]
        report = evaluate(preds, truth)
        write_rows_csv(report.to_rows(), out_dir / "metrics.csv")
        report_json({"rows": report.to_rows()}, out_dir / "metrics.json")
        outputs += [out_dir / "metrics.csv", out_dir / "metrics.json"]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "metrics.png"
            plots.plot_metrics({"model": report}, fig)
            outputs.append(fig)

    elif args.analysis == "ablate":
        net = load_network(args.net)
        config = _train_config(args)
        category = as_category(args.category)
        full = holdout_evaluate(net, category, config, window=args.window,
                                test_fraction=args.split_frac,
                                split_seed=args.split_seed,
                                split_unit=args.split_unit)
        variants = {"baseline": full.baseline, "full": full.metrics}
        for kind in args.drops.split(","):
            kind = kind.strip()
            variants[f"drop_{kind}"] = ablation_run(
                net, category, config, drop=(as_kind(kind),), window=args.window,
                test_fraction=args.split_frac, split_seed=args.split_seed,
                split_unit=args.split_unit)
        csv_path = out_dir / "ablation.csv"
        write_variant_metrics_csv(variants, csv_path)
        report_json({name: rep.to_rows() for name, rep in variants.items()},
                    out_dir / "ablation.json")
        outputs += [csv_path, out_dir / "ablation.json"]
        if not args.no_figures:
            from . import plots
            fig = out_dir / "ablation.png"
            plots.plot_metrics(variants, fig)
            outputs.append(fig)

    inputs = [getattr(args, "net", None) or getattr(args, "data", None)]
    _write_manifest(out_dir, name, args, [p for p in inputs if p], outputs, started)
    return EXIT_OK


def cmd_export_dot(args) -> int:
    started = time.time()
    net = load_network(args.net)
    header, _, users, influence = load_predictions(args.predictions)
    categories = header["categories"]
    category = args.category
    if category is None:
        if len(categories) != 1:
            raise ValueError(
                f"predictions carry {len(categories)} categories; pass --category")
        category = categories[0]
    elif category not in categories:
        raise ValueError(f"category {category!r} not in predictions {categories}")

    weights = {key: rec["weights"][category]
               for key, rec in influence.items() if category in rec["weights"]}
    emotions = {key: rec["emotion"] for key, rec in users.items()}
    slices = None
    if args.slices:
        slices = [int(s) for s in args.slices.split(",")]
    text = export_ego_dot(net, args.user, weights, emotions,
                          min_weight=args.min_weight, slices=slices)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    _write_manifest(out.parent, "export-dot", args,
                    [args.net, args.predictions], [out], started)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "analyze": cmd_analyze,
    "export-dot": cmd_export_dot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkFormatError, FileNotFoundError, KeyError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
