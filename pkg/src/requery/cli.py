"""Command-line front end.

Every command writes its outputs plus a ``manifest.json`` into ``--out``
(default: ``$REQUERY_OUT`` or ``./runs``). ``requery rerun MANIFEST``
repeats a run from its manifest.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import accuracy, multimodal, rephrase, synth
from .confidence import DISTRIBUTIONS, MEASURES, canonical_distribution, canonical_measure
from .data import dumps_benchmark, file_sha256, load_benchmark
from .errors import CapabilityError, InputError, RequeryError
from .export import RunManifest, atomic_write, curve_csv, json_text, read_curve_csv, steps_csv

OUT_ENV = "REQUERY_OUT"
DEFAULT_TRIALS = 100


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "runs"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _finish(args, out: Path, flags: dict, outputs: dict[str, str], inputs=(), seeds=()) -> int:
    for name, text in outputs.items():
        atomic_write(out / name, text)
    manifest = RunManifest(
        command=args.command,
        flags=flags,
        input_hashes={str(p): file_sha256(p) for p in inputs},
        seeds=[int(s) for s in seeds],
        version=__version__,
        outputs=sorted(outputs),
    )
    manifest.write(out)
    print(json.dumps({"out": str(out), "outputs": manifest.outputs}))
    return 0


def cmd_gen(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = synth.SynthConfig.from_dict(json.load(fh))
    else:
        cfg = synth.preset(args.preset)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.n_instances is not None:
        cfg = replace(cfg, n_instances=args.n_instances)
    bench = synth.generate(cfg)
    flags = {"preset": args.preset, "config": args.config, "seed": args.seed, "n_instances": args.n_instances}
    outputs = {"config.json": json_text(cfg.to_dict()), "benchmark.jsonl": dumps_benchmark(bench)}
    out = _out_dir(args)
    return _finish(args, out, flags, outputs, inputs=[args.config] if args.config else [], seeds=[cfg.seed])


def cmd_amae(args) -> int:
    bench = load_benchmark(args.benchmark)
    dist, meas = canonical_distribution(args.distribution), canonical_measure(args.measure)
    summary = multimodal.amae_trials(bench, dist, meas, args.trials, args.seed, workers=args.workers)
    upper = accuracy.per_object_best(bench, dist).mean
    prios = multimodal.initial_priorities(bench, dist, meas)
    report = {
        "benchmark": bench.name,
        "distribution": dist,
        "measure": meas,
        "amae": summary.to_dict(),
        "amae_file_initials": multimodal.mae_curve(bench, prios, dist).area,
        "upper_bound_accuracy": upper,
        "coverage_at_upper_bound": multimodal.coverage_at_upper_bound(bench, prios, upper, dist),
        "detection_rate": bench.detection_rate,
    }
    flags = {"benchmark": args.benchmark, "distribution": dist, "measure": meas,
             "trials": args.trials, "seed": args.seed}
    outputs = {"mae_curve.csv": curve_csv(summary.mean_curve, "value"), "amae_summary.json": json_text(report)}
    return _finish(args, _out_dir(args), flags, outputs, [args.benchmark], [args.seed])


def cmd_armae(args) -> int:
    bench = load_benchmark(args.benchmark)
    dist, meas = canonical_distribution(args.distribution), canonical_measure(args.measure)
    summary, results = rephrase.sweep_trials(bench, args.selection, dist, meas, args.trials, args.seed,
                                             workers=args.workers, priority_source=args.priority_source)
    report = {
        "benchmark": bench.name,
        "selection": args.selection,
        "distribution": dist,
        "measure": meas,
        "priority_source": args.priority_source,
        "armae": summary.to_dict(),
        "truncated": results[0].truncated,
        "min_coverage": float(summary.mean_curve.coverages[-1]),
        "total_requeries": results[0].total_requeries,
    }
    flags = {"benchmark": args.benchmark, "selection": args.selection, "distribution": dist,
             "measure": meas, "trials": args.trials, "seed": args.seed,
             "priority_source": args.priority_source}
    outputs = {
        "rmae_curve.csv": curve_csv(summary.mean_curve, "rmae"),
        "steps.csv": steps_csv([r.steps for r in results]),
        "armae_summary.json": json_text(report),
    }
    return _finish(args, _out_dir(args), flags, outputs, [args.benchmark], [args.seed])


def cmd_accuracy(args) -> int:
    bench = load_benchmark(args.benchmark)
    dist = canonical_distribution(args.distribution)
    rows = [r.to_dict() for r in accuracy.all_modes(bench, args.n_samples, args.seed, dist)]
    report = {"benchmark": bench.name, "distribution": dist, "detection_rate": bench.detection_rate,
              "modes": rows}
    flags = {"benchmark": args.benchmark, "distribution": dist, "n_samples": args.n_samples, "seed": args.seed}
    return _finish(args, _out_dir(args), flags, {"accuracy.json": json_text(report)},
                   [args.benchmark], [args.seed])


def cmd_converge(args) -> int:
    bench = load_benchmark(args.benchmark)
    dist, meas = canonical_distribution(args.distribution), canonical_measure(args.measure)
    report = {"benchmark": bench.name, "distribution": dist, "measure": meas,
              "converged_accuracy": rephrase.converged_report(bench, dist, meas)}
    flags = {"benchmark": args.benchmark, "distribution": dist, "measure": meas}
    return _finish(args, _out_dir(args), flags, {"converged.json": json_text(report)}, [args.benchmark])


def _curve_from_run(run: str):
    path = Path(run)
    if path.is_dir():
        path = path / "rmae_curve.csv"
    return path, read_curve_csv(path)


def cmd_crossover(args) -> int:
    comb_path, comb = _curve_from_run(args.combined)
    smart_path, smart = _curve_from_run(args.smart)
    if args.common_range:
        comb, smart = rephrase.common_range(comb, smart)
    cross = rephrase.crossover_coverage(comb, smart)
    report = {
        "crossover_coverage": cross,
        "armae_combined": comb.area,
        "armae_smart": smart.area,
        "common_range": bool(args.common_range),
        "n_points": len(comb),
    }
    flags = {"combined": args.combined, "smart": args.smart, "common_range": bool(args.common_range)}
    return _finish(args, _out_dir(args), flags, {"crossover.json": json_text(report)}, [comb_path, smart_path])


def _argv_from_manifest(manifest: RunManifest) -> list[str]:
    argv = [manifest.command]
    for key, value in manifest.flags.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        argv += [flag] if value is True else [flag, str(value)]
    return argv


def cmd_rerun(args) -> int:
    manifest = RunManifest.load(args.manifest)
    for path, digest in manifest.input_hashes.items():
        if file_sha256(path) != digest:
            raise InputError(f"input {path} changed since the recorded run")
    argv = _argv_from_manifest(manifest)
    out = args.out or str(Path(args.manifest).parent)
    return main(argv + ["--out", out])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="requery", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, benchmark=True):
        if benchmark:
            p.add_argument("--benchmark", required=True, help="benchmark .jsonl file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")

    def scoring(p):
        p.add_argument("--distribution", default="single", choices=DISTRIBUTIONS)
        p.add_argument("--measure", default="softmax", choices=MEASURES)

    def trials(p):
        p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1, help="processes used for trials")

    p = sub.add_parser("gen", help="generate a synthetic benchmark")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(synth.PRESETS))
    src.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-instances", type=int)
    common(p, benchmark=False)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("amae", help="MAE-coverage curve and AMAE (multimodal re-query)")
    common(p)
    scoring(p)
    trials(p)
    p.set_defaults(func=cmd_amae)

    p = sub.add_parser("armae", help="RMAE sweep and ARMAE (rephrase re-query)")
    common(p)
    scoring(p)
    p.add_argument("--selection", default="combined", choices=rephrase.SELECTIONS)
    p.add_argument("--priority-source", default=rephrase.FUSED, choices=rephrase.PRIORITY_SOURCES)
    trials(p)
    p.set_defaults(func=cmd_armae)

    p = sub.add_parser("accuracy", help="per-expression and per-object accuracies")
    common(p)
    p.add_argument("--distribution", default="single", choices=DISTRIBUTIONS)
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("converge", help="accuracy under unlimited re-queries")
    common(p)
    scoring(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("crossover", help="coverage below which combined beats smart replacement")
    p.add_argument("--combined", required=True, help="armae run directory or curve CSV")
    p.add_argument("--smart", required=True, help="armae run directory or curve CSV")
    p.add_argument("--common-range", action="store_true", help="cut both curves to their shared coverages")
    common(p, benchmark=False)
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    p.set_defaults(func=cmd_rerun)
    return parser


def _exit_code(exc: Exception) -> int:
    return 3 if isinstance(exc, CapabilityError) else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # absolute input paths let a manifest be re-run from any directory
    for name in ("benchmark", "config", "combined", "smart"):
        if getattr(args, name, None):
            setattr(args, name, os.path.abspath(getattr(args, name)))
    try:
        if getattr(args, "trials", 1) < 1:
            raise InputError("--trials must be >= 1")
        return args.func(args)
    except (RequeryError, OSError, json.JSONDecodeError) as exc:
        kind = getattr(exc, "kind", "io" if isinstance(exc, OSError) else "parse")
        record = {"error": kind, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
