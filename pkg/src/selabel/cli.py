"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every run prints its fully resolved configuration before doing work, and
output directories are never overwritten without --force.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import engine
from .corpus import CorpusSpec, generate_corpus, save_corpus
from .engine import ExperimentConfig
from .errors import SelabelError, ValidationError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

ABLATION_SWITCHES = {
    "CS": "calibrate_scores",
    "CC": "cap_candidates",
    "AIN": "auto_infer_negatives",
}
DEFAULT_VARIANTS = ("SL", "SL+CS", "SL+CC", "SL+AIN", "SL+CS+CC+AIN")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SelabelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selabel",
        description="Selective labeling experiments for span extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus file")
    p.add_argument("--spec", required=True, help="corpus spec JSON")
    p.add_argument("--out", required=True, help="output corpus file")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_gen_corpus)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", action="store_true", help="continue from the newest checkpoint")
    p.add_argument("--force", action="store_true")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--scorer", default=None, help="start from a scorer checkpoint instead of training the bootstrap model")
    p.add_argument("--noise-rate", type=float, default=None, help="override the annotator noise rate")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("ablate", help="run the feature-ablation matrix")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=10, help="seeds per variant")
    p.add_argument(
        "--switches",
        default=None,
        help="comma list like 'CS,AIN' for one custom variant instead of the full matrix",
    )
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("sweep-rounds", help="same budget spread over varying round counts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rounds", default="1,2,4,8,16", help="comma list of round counts")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_sweep_rounds)

    p = sub.add_parser("sweep-bootstrap", help="initial/selective/full triplets per bootstrap size")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default="50,100,250", help="comma list of bootstrap sizes")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_sweep_bootstrap)

    p = sub.add_parser("report", help="aggregate run directories into a comparison CSV")
    p.add_argument("--runs", required=True, help="directory containing run subdirectories")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("serve", help="serve the annotation API (and UI) for a live experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None, help="static UI bundle directory")
    p.add_argument("--lease-seconds", type=float, default=120.0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=_cmd_serve)

    return parser


def _default_jobs() -> int:
    return max(1, os.cpu_count() or 1)


def _output_root() -> Path:
    return Path(os.environ.get("SELABEL_OUT_ROOT", "."))


def _resolve_out(raw: str) -> Path:
    path = Path(raw)
    return path if path.is_absolute() else _output_root() / path


def _guard_overwrite(path: Path, force: bool, *, expect_dir: bool) -> None:
    if not path.exists():
        return
    if force:
        return
    if expect_dir and path.is_dir() and not any(path.iterdir()):
        return
    raise ValidationError(f"{path} already exists; pass --force to overwrite")


def _print_config(config: dict) -> None:
    print("resolved config:")
    print(json.dumps(dict(sorted(config.items())), indent=1, sort_keys=True))


def _cmd_gen_corpus(args: argparse.Namespace) -> int:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = CorpusSpec.from_dict(raw)
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=False)
    _print_config(spec.to_dict())
    corpus = generate_corpus(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    print(f"wrote {len(corpus)} docs / {corpus.num_candidates} candidates to {out}")
    return EXIT_OK


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "noise_rate", None) is not None:
        config = replace(config, noise_rate=args.noise_rate)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out)
    if not args.resume:
        _guard_overwrite(out, args.force, expect_dir=True)
    _print_config(config.to_dict())
    init_scorer = None
    if args.scorer is not None:
        from .scorer import load_scorer

        init_scorer = load_scorer(args.scorer)
    if args.resume:
        result = engine.resume_experiment(config, out)
    else:
        result = engine.run_experiment(config, out, init_scorer=init_scorer)
    print(
        f"finished: initial_f1={result.initial_f1:.4f} final_f1={result.final_f1:.4f} "
        f"questions={result.questions_asked}/{result.question_budget} "
        f"stop={result.stop_reason}"
    )
    return EXIT_OK


def _run_one(spec: tuple[dict, str]) -> dict:
    """Worker for pools: run a config dict, write into its own directory."""
    raw, out_dir = spec
    config = ExperimentConfig.from_dict(raw)
    result = engine.run_experiment(config, out_dir)
    return {
        "out_dir": out_dir,
        "seed": config.seed,
        "initial_f1": result.initial_f1,
        "final_f1": result.final_f1,
        "questions_asked": result.questions_asked,
    }


def _fan_out(jobs: int, work: list[tuple[dict, str]]) -> list[dict]:
    if jobs <= 1 or len(work) <= 1:
        return [_run_one(w) for w in work]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def parse_switches(raw: str) -> dict[str, bool]:
    """'CS,AIN' -> switch dict enabling exactly those features."""
    enabled = {s.strip().upper() for s in raw.split(",") if s.strip()}
    unknown = enabled - set(ABLATION_SWITCHES)
    if unknown:
        raise ValidationError(f"unknown ablation switches: {', '.join(sorted(unknown))}")
    return {key: (name in enabled) for name, key in ABLATION_SWITCHES.items()}


def variant_config(config: ExperimentConfig, variant: str) -> ExperimentConfig:
    """Variant names look like 'SL', 'SL+CS', 'SL+CS+CC+AIN'. Plain SL is
    top-k on the score-distance metric with every extra feature off."""
    parts = variant.split("+")
    if parts[0] != "SL":
        raise ValidationError(f"variant {variant!r} must start with 'SL'")
    switches = parse_switches(",".join(parts[1:])) if len(parts) > 1 else parse_switches("")
    return replace(
        config,
        strategy="top_k",
        metric="score_distance",
        **switches,
    )


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=True)
    _print_config(config.to_dict())
    variants = list(DEFAULT_VARIANTS)
    if args.switches is not None:
        enabled = [s.strip().upper() for s in args.switches.split(",") if s.strip()]
        variants = ["SL", "SL+" + "+".join(enabled)] if enabled else ["SL"]
    work = []
    for variant in variants:
        vconf = variant_config(config, variant)
        for s in range(args.seeds):
            run_conf = replace(vconf, seed=config.seed + s)
            run_dir = out / variant.replace("+", "_") / f"seed_{run_conf.seed}"
            work.append((run_conf.to_dict(), str(run_dir)))
    results = _fan_out(args.jobs, work)
    _write_matrix_summary(out / "summary.csv", variants, args.seeds, config.seed, results)
    print(f"ran {len(results)} experiments; summary at {out / 'summary.csv'}")
    return EXIT_OK


def _write_matrix_summary(
    path: Path, variants: list[str], seeds: int, base_seed: int, results: list[dict]
) -> None:
    by_dir = {r["out_dir"]: r for r in results}
    rows = ["variant,seeds,mean_final_f1,std_final_f1,mean_initial_f1"]
    root = path.parent
    for variant in variants:
        finals, initials = [], []
        for s in range(seeds):
            run_dir = str(root / variant.replace("+", "_") / f"seed_{base_seed + s}")
            r = by_dir[run_dir]
            finals.append(r["final_f1"])
            initials.append(r["initial_f1"])
        mean = sum(finals) / len(finals)
        var = sum((x - mean) ** 2 for x in finals) / len(finals)
        rows.append(
            f"{variant},{seeds},{mean:.6f},{var ** 0.5:.6f},"
            f"{sum(initials) / len(initials):.6f}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _parse_int_list(raw: str, what: str) -> list[int]:
    values = [s.strip() for s in raw.split(",") if s.strip()]
    if not values:
        raise ValidationError(f"empty {what} list")
    try:
        return [int(v) for v in values]
    except ValueError as exc:
        raise ValidationError(f"bad {what} list {raw!r}") from exc


def _cmd_sweep_rounds(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=True)
    _print_config(config.to_dict())
    rounds_list = _parse_int_list(args.rounds, "rounds")
    work = []
    for rounds in rounds_list:
        for s in range(args.seeds):
            run_conf = replace(config, rounds=rounds, seed=config.seed + s)
            work.append((run_conf.to_dict(), str(out / f"rounds_{rounds}" / f"seed_{run_conf.seed}")))
    results = _fan_out(args.jobs, work)
    rows = ["rounds,seed,initial_f1,final_f1,questions_asked"]
    for (raw, run_dir), r in zip(work, results):
        rows.append(
            f"{raw['rounds']},{raw['seed']},{r['initial_f1']:.6f},"
            f"{r['final_f1']:.6f},{r['questions_asked']}"
        )
    (out / "sweep_rounds.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"ran {len(results)} experiments; summary at {out / 'sweep_rounds.csv'}")
    return EXIT_OK


def _cmd_sweep_bootstrap(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=True)
    _print_config(config.to_dict())
    sizes = _parse_int_list(args.sizes, "sizes")
    work = []
    for size in sizes:
        for mode in ("initial", "selective", "full"):
            for s in range(args.seeds):
                run_conf = replace(config, bootstrap_docs=size, mode=mode, seed=config.seed + s)
                run_dir = out / f"bootstrap_{size}" / mode / f"seed_{run_conf.seed}"
                work.append((run_conf.to_dict(), str(run_dir)))
    results = _fan_out(args.jobs, work)
    rows = ["bootstrap_docs,mode,seed,initial_f1,final_f1"]
    for (raw, _), r in zip(work, results):
        rows.append(
            f"{raw['bootstrap_docs']},{raw['mode']},{raw['seed']},"
            f"{r['initial_f1']:.6f},{r['final_f1']:.6f}"
        )
    (out / "sweep_bootstrap.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"ran {len(results)} experiments; summary at {out / 'sweep_bootstrap.csv'}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    runs_dir = Path(args.runs)
    if not runs_dir.is_dir():
        raise ValidationError(f"{runs_dir} is not a directory")
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=False)
    rows = ["run,seed,strategy,metric,rounds,initial_f1,final_f1,gap_closed,questions_asked"]
    summaries = sorted(runs_dir.glob("**/summary.json"))
    if not summaries:
        raise ValidationError(f"no summary.json files under {runs_dir}")
    for path in summaries:
        s = json.loads(path.read_text(encoding="utf-8"))
        conf = s["config"]
        gap = "" if s.get("gap_closed") is None else f"{s['gap_closed']:.3f}"
        rows.append(
            f"{path.parent.relative_to(runs_dir)},{conf['seed']},{conf['strategy']},"
            f"{conf['metric']},{conf['rounds']},{s['initial_f1']:.6f},"
            f"{s['final_f1']:.6f},{gap},{s['questions_asked']}"
        )
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"aggregated {len(summaries)} runs into {out}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import AnnotationSession, create_app

    config = _load_config(args)
    out = _resolve_out(args.out)
    _guard_overwrite(out, args.force, expect_dir=True)
    _print_config(config.to_dict())
    session = AnnotationSession(config, out_dir=out, lease_seconds=args.lease_seconds)
    app = create_app(session, ui_dir=args.ui_dir)
    session.start()
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    finally:
        session.stop()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
