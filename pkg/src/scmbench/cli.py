"""Command-line front end: ``scmbench generate | analyze | verify | evaluate``.

Exit status is 0 on success, 2 on invalid configuration or arguments and 3 on
any other failure.  Progress goes to standard error; data goes to files (or to
standard output for ``analyze`` without ``--out``).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import DEFAULT_PROBE_SAMPLES, analyze
from .dataset import GenerationOptions, dumps, generate_dataset, metrics_csv, write_atomic, write_dataset_dir
from .errors import ConfigSyntaxError, DomainError, ParamError, ScmBenchError, ValidationError
from .harness import DEFAULT_TIMEOUT, EstimatorSpec, run_evaluation, write_run
from .queries import DEFAULT_ESTIMATION_SAMPLES
from .rng import stream
from .scm import Scm, sample_scm
from .soi import SCHEMA_VERSION, SoiWarning, apply_overrides, dump_soi, load_document, soi_from_mapping, soi_hash
from .verify import verify_ctf_axioms, verify_do_calculus, verify_markov

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def load_soi(path: str, overrides: list[str]):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read SoI file: {exc}", "soi") from None
    doc = apply_overrides(load_document(text), overrides or [])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SoiWarning)
        soi = soi_from_mapping(doc)
    for w in caught:
        _log(f"warning: {w.message}")
    return soi


def _recorded_argv(argv: list[str]) -> list[str]:
    """Command line without flags that do not affect the generated content."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--out", "--jobs"):
            skip = True
            continue
        if tok.startswith("--out=") or tok.startswith("--jobs="):
            continue
        out.append(tok)
    return out


def _default_jobs() -> int:
    return os.cpu_count() or 1


# -- generate ---------------------------------------------------------------------

def _generate_one(task) -> str:
    soi, seed, index, options, out = task
    ds = generate_dataset(soi, seed, index, options)
    name = f"scm_{index}"
    write_dataset_dir(ds, Path(out) / name, include_queries=not soi.disable_queries)
    return name


def cmd_generate(args, argv) -> int:
    soi = load_soi(args.soi, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    options = GenerationOptions(
        n_estimation=args.estimation_samples, probe_samples=args.probe_samples, analyze=not args.no_analysis
    )
    started = _dt.datetime.now(_dt.timezone.utc).isoformat() if args.stamp else None
    tasks = [(soi, args.seed, k, options, str(out)) for k in range(args.num_scms)]
    jobs = args.jobs or _default_jobs()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            names = []
            for name in pool.map(_generate_one, tasks):
                _log(f"generated {name}")
                names.append(name)
    else:
        names = []
        for t in tasks:
            names.append(_generate_one(t))
            _log(f"generated {names[-1]}")
    write_atomic(out / "soi.yaml", dump_soi(soi))
    manifest = {
        "tool_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "soi_hash": soi_hash(soi),
        "master_seed": args.seed,
        "command_line": ["scmbench", *_recorded_argv(argv)],
        "num_scms": args.num_scms,
        "scms": [{"index": k, "path": name} for k, name in enumerate(names)],
    }
    if started:
        manifest["timestamps"] = {"started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    write_atomic(out / "manifest.json", dumps(manifest))
    return EXIT_OK


# -- analyze -----------------------------------------------------------------------

def cmd_analyze(args, argv) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory", "input")
    rows = []
    dirs = sorted(
        (p for p in root.iterdir() if p.is_dir() and (p / "scm.json").exists()),
        key=lambda p: (len(p.name), p.name),
    )
    for d in dirs:
        metrics_path = d / "metrics.json"
        if metrics_path.exists() and not args.recompute:
            metrics = json.loads(metrics_path.read_text())["metrics"]
            metrics = {k: (float("nan") if v is None else v) for k, v in metrics.items()}
        else:
            scm = Scm.from_json(json.loads((d / "scm.json").read_text()))
            seed = int(scm.provenance.get("master_seed", 0))
            index = int(scm.provenance.get("scm_index", 0))
            metrics, _ = analyze(scm, args.probe_samples, stream(seed, "analysis", index))
        rows.append((d.name, metrics))
        _log(f"analyzed {d.name}")
    text = metrics_csv(rows)
    if args.out:
        write_atomic(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- verify ------------------------------------------------------------------------

def cmd_verify(args, argv) -> int:
    soi = load_soi(args.soi, args.set)
    result = None
    for k in range(args.scms):
        scm = sample_scm(soi, stream(args.seed, "scm", k))
        if args.level == "l1":
            res = verify_markov(scm, args.samples, args.alpha, args.max_cond, stream(args.seed, "l1", k), args.min_cond)
        elif args.level == "l2":
            res = verify_do_calculus(scm, args.samples, args.alpha, seed=args.seed * 1_000_003 + k)
        else:
            res = verify_ctf_axioms(scm, args.samples, stream(args.seed, "l3", k))
        result = res if result is None else result.extend(res)
        _log(f"verified scm {k}")
    if result is None:
        from .verify import VerificationResult

        result = VerificationResult(args.level)
    report = result.summary()
    text = dumps(report)
    if args.out:
        out = Path(args.out)
        write_atomic(out / "verification.json", text)
        if args.records:
            write_atomic(out / "records.json", dumps([r.to_json() for r in result.records]))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------------

def cmd_evaluate(args, argv) -> int:
    sois = []
    for path in args.soi:
        sois.append((Path(path).stem, load_soi(path, args.set)))
    names = [n for n, _ in sois]
    if len(set(names)) != len(names):
        raise ValidationError("SoI files must have distinct names", "soi")
    if args.estimator_cmd:
        spec = EstimatorSpec(Path(args.estimator_cmd[0]).name, tuple(args.estimator_cmd), args.timeout)
    else:
        spec = EstimatorSpec.builtin(args.estimator, args.timeout)
    out = Path(args.out)
    run = run_evaluation(
        sois,
        args.seeds,
        args.scms,
        spec,
        out / "work",
        expose_ground_truth=args.expose_ground_truth,
        n_estimation=args.estimation_samples,
        jobs=args.jobs or _default_jobs(),
    )
    write_run(run, out)
    overall = run.summary()["overall"]
    _log(f"mean error {overall['mean_error']}, failure rate {overall['failure_rate']}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override an SoI field")

    parser = argparse.ArgumentParser(prog="scmbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample SCMs, data, queries and ground truths")
    g.add_argument("--soi", required=True)
    g.add_argument("--num-scms", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--estimation-samples", type=int, default=DEFAULT_ESTIMATION_SAMPLES)
    g.add_argument("--probe-samples", type=int, default=DEFAULT_PROBE_SAMPLES)
    g.add_argument("--no-analysis", action="store_true", help="skip metrics.json")
    g.add_argument("--stamp", action="store_true", help="record wall-clock timestamps in the manifest")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", parents=[common], help="collect metrics of a generated tree into CSV")
    a.add_argument("input")
    a.add_argument("--out", default=None)
    a.add_argument("--recompute", action="store_true", help="ignore stored metrics.json files")
    a.add_argument("--probe-samples", type=int, default=DEFAULT_PROBE_SAMPLES)
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", parents=[common], help="statistical verification of sampled SCMs")
    v.add_argument("--level", choices=["l1", "l2", "l3"], required=True)
    v.add_argument("--soi", required=True)
    v.add_argument("--scms", type=int, default=1)
    v.add_argument("--alpha", type=float, default=0.05)
    v.add_argument("--samples", type=int, default=50_000, help="data points (l1, l2) or noise draws (l3)")
    v.add_argument("--max-cond", type=int, default=3)
    v.add_argument("--min-cond", type=int, default=1, help="smallest conditioning set for l1 (0 tests marginal independence)")
    v.add_argument("--out", default=None)
    v.add_argument("--records", action="store_true", help="also write per-test records")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("evaluate", parents=[common], help="run an estimator over generated benchmarks")
    e.add_argument("--soi", required=True, action="append")
    e.add_argument("--seeds", type=int, nargs="+", default=[0])
    e.add_argument("--scms", type=int, default=1)
    grp = e.add_mutually_exclusive_group()
    grp.add_argument("--estimator", choices=["oracle", "zero", "fail"], default="oracle")
    grp.add_argument("--estimator-cmd", nargs="+", default=None)
    e.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    e.add_argument("--expose-ground-truth", action="store_true", help="write ground_truth.jsonl for oracle runs")
    e.add_argument("--estimation-samples", type=int, default=DEFAULT_ESTIMATION_SAMPLES)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except (ConfigSyntaxError, ValidationError, DomainError, ParamError) as exc:
        _log(f"error: {exc}")
        return EXIT_INVALID
    except (ScmBenchError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
