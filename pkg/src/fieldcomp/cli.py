"""Command line entry point: ``fieldcomp generate|train|predict|benchmark``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ann, metrics, pca, report, simulator
from .config import load_config
from .errors import EncodingMismatch, FieldCompError, IoError, ParseError
from .geometry import BEAM_IDS, fit_plane, intersect_planes

log = logging.getLogger("fieldcomp")


def _out_dir(args, cfg):
    out = Path(args.out if args.out is not None else cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _seed(args, cfg):
    return cfg.seed if args.seed is None else args.seed


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def fmt_vec(v):
    return " ".join(f"{float(c):.6g}" for c in v)


def cmd_generate(args, cfg):
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    points = cfg.generate.points
    if args.runs is not None:
        points = (points * args.runs)[:args.runs] if args.runs > len(points) else points[:args.runs]
    total = 0
    for i, n in enumerate(points):
        seq = np.random.SeedSequence([seed, i])
        scen_seed, run_seed = seq.spawn(2)
        scenario = simulator.sample_scenario(cfg.scenario, scen_seed)
        run = simulator.generate_compensation_run(scenario, metrics.history_split(n), run_seed,
                                                  run_id=f"run{i:03d}")
        run.seed = seed
        run.config_hash = cfg.scenario.config_hash()
        simulator.write_run(run, out / f"run{i:03d}.csv")
        total += len(run)
        c = run.counts()
        print(f"{run.run_id}: points/beam {c[1]}/{c[2]}/{c[3]}  truth {fmt_vec(run.truth)}  seed {seed}")
    print(f"{len(points)} runs, {total} points total -> {out}")
    return 0


def _collect_runs(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.glob("*.csv")))
        else:
            files.append(p)
    if not files:
        raise ParseError("no run files given")
    runs = []
    for f in files:
        for run in simulator.read_runs(f):
            run.source = str(f)
            runs.append(run)
    return runs


def cmd_train(args, cfg):
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    runs = _collect_runs(args.runs)
    for run in runs:
        if run.truth is None:
            raise ParseError(f"{run.source}: run {run.run_id} has no truth (missing .meta.json)")
    model_path = out / f"{args.method}_model.json"
    if args.method == "pca":
        model = pca.fit_offset_model(runs, cfg.train.pca_components)
        pca.save_offset_model(model, model_path)
        ratio = model.offset_pca.explained_ratio
        print(f"explained_ratio {' '.join(f'{r:.6g}' for r in ratio)}")
    else:
        encoding = "nine" if args.method == "ann9" else "four"
        if encoding == "nine":
            for run in runs:
                c = run.counts()
                if min(c.values()) == 0:
                    raise EncodingMismatch(f"{run.source}: run {run.run_id} lacks points for beam(s) "
                                           f"{[b for b in BEAM_IDS if c[b] == 0]}; nine-input encoding "
                                           "needs one point per beam")
        hyper = ann.Hyperparams.from_dict(cfg.train.ann)
        net, history = ann.train(ann.training_set_from_runs(runs, encoding), hyper, seed)
        net.metadata["training_run_ids"] = [r.run_id for r in runs]
        ann.save_network(net, model_path)
        _write_text(out / f"{args.method}_loss.csv",
                    "epoch,loss\n" + "".join(f"{i},{float(l)!r}\n" for i, l in enumerate(history)))
        print(f"final loss {history[-1]:.6g} after {len(history)} epochs")
    print(f"model -> {model_path}")
    return 0


def _load_model(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    kind = data.get("kind")
    if kind == "pca":
        return kind, pca.offset_model_from_dict(data)
    if kind == "ann":
        return kind, ann.network_from_dict(data)
    raise ParseError(f"{path}: unknown model kind {kind!r}")


def cmd_predict(args, cfg):
    points = [p for run in simulator.read_runs(args.measurements) for p in run.points]
    if args.model == "planes":
        planes = []
        for b in BEAM_IDS:
            pts = np.array([p.point for p in points if p.beam_id == b]).reshape(-1, 3)
            planes.append(fit_plane(pts))
        print(fmt_vec(intersect_planes(*planes)))
        return 0
    kind, model = _load_model(args.model)
    try:
        if kind == "pca":
            print(fmt_vec(pca.predict_pca(model, points)))
        elif model.layer_sizes[0] == 9:
            if len(points) != 3:
                raise EncodingMismatch(f"nine-input network needs exactly 3 points, got {len(points)}")
            print(fmt_vec(ann.predict_ann(model, points)))
        else:
            for row in np.atleast_2d(ann.predict_ann(model, points)):
                print(fmt_vec(row))
    except FieldCompError as exc:
        raise type(exc)(f"{args.measurements}: {exc}") from exc
    return 0


def cmd_benchmark(args, cfg):
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    bench = cfg.benchmark
    if args.trials is not None:
        bench.n_trials = args.trials
    if args.scenarios is not None:
        bench.n_scenarios = args.scenarios
    bench.validate()

    def progress(done, total):
        log.info("scenario %d/%d done", done, total)

    points = metrics.run_scaling_benchmark(bench, seed, cfg.scenario, progress, workers=args.workers)
    _write_text(out / "benchmark.csv", metrics.benchmark_csv(points))
    _write_text(out / "benchmark_detail.csv", metrics.detail_csv(points))
    noise = cfg.scenario.noise_sigma
    report.plot_scaling(points, out / "scaling.png", noise)
    report.plot_spread(points, out / "spread.png", noise)
    print(report.summary_table(points, noise))
    print("grid search counts 3 measurements per grid point (one per beam)")
    print(f"results -> {out}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="base random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="fieldcomp",
        description="Predict compensation points from few measurements and benchmark the methods.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="simulate labelled compensation runs")
    g.add_argument("--runs", type=int, help="number of runs (default: length of generate.points)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="fit a PCA or neural-network model")
    t.add_argument("--method", choices=("pca", "ann9", "ann4"), required=True)
    t.add_argument("runs", nargs="+", help="run CSV files or directories of them")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict the compensation point")
    p.add_argument("--model", required=True, help="model file, or 'planes' for a direct plane fit")
    p.add_argument("measurements", help="CSV file of measured plane points")
    p.set_defaults(func=cmd_predict)

    b = sub.add_parser("benchmark", parents=[common], help="sigma versus measurement count for all methods")
    b.add_argument("--trials", type=int, help="prediction trials per scenario (overrides config)")
    b.add_argument("--scenarios", type=int, help="number of held-out scenarios (overrides config)")
    b.add_argument("--workers", type=int, default=1,
                   help="processes for independent scenarios (output does not depend on it)")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except FieldCompError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
