"""Command-line entry point: ``synth``, ``train``, ``table``, ``report``, ``gradcheck``.

Run configuration comes from an optional ``--config`` file of ``key = value``
lines; any key can also be given as a flag of the same name, which wins.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfg
from .corpus import SYNTH_PRESETS, Corpus, CorpusError, Geometry, ScenarioKind, load_manifest, save_manifest, synth_preset
from .experiment import run_table, write_run_artifacts
from .gradcheck import run_suite
from .report import ReportError, emit_report, from_csv, to_csv, to_json, to_text

log = logging.getLogger("dysarthric_dann")

REPORT_FORMATS = {"text": "report.txt", "csv": "report.csv", "json": "report.json"}


def _add_config_flags(p: argparse.ArgumentParser, require_seed: bool) -> None:
    p.add_argument("--config", type=Path, help="key = value file; flags below override it")
    for key in cfg.ALL_KEYS:
        p.add_argument(f"--{key}", dest=key, metavar="VALUE", required=require_seed and key == "seed")


def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", type=Path, help="manifest.csv of a WAV corpus")
    src.add_argument("--synth", choices=sorted(SYNTH_PRESETS), help="generate the synthetic corpus in memory")
    p.add_argument("--corpus-seed", type=int, default=7, help="generator seed for --synth (default 7)")
    p.add_argument("--sample-rate", type=int, help="resampling rate for --corpus (default: the preset's rate)")


def _run_configs(args):
    values = cfg.load_config(args.config) if args.config else {}
    for key in cfg.ALL_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    # a synthetic corpus brings its own architecture unless one is named
    if getattr(args, "synth", None) and "preset" not in values:
        values["preset"] = args.synth
    return cfg.train_config(values), cfg.model_config(values), values.get("preset", "paper")


def _load_corpus(args, model_config, preset: str) -> Corpus:
    if args.synth:
        corpus = synth_preset(args.synth, args.corpus_seed)
    else:
        rate = args.sample_rate or SYNTH_PRESETS[preset].sample_rate
        corpus = load_manifest(args.corpus, sample_rate=rate, input_length=model_config.input_length)
    if corpus.input_length != model_config.input_length:
        raise CorpusError(
            f"corpus waveforms have {corpus.input_length} samples, model expects {model_config.input_length}"
        )
    return corpus


def cmd_synth(args) -> int:
    geometry = Geometry(args.n_control, ("mild",) * args.mild + ("moderate",) * args.moderate + ("high",) * args.high)
    corpus = synth_preset(args.preset, args.seed, geometry)
    path = save_manifest(corpus, args.out)
    print(f"{len(corpus.utterances)} utterances, {len(corpus.speakers)} speakers -> {path}")
    return 0


def _write_config(out: Path, train, model) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dump_config(train, model), encoding="utf-8")


def cmd_train(args) -> int:
    train, model, preset = _run_configs(args)
    corpus = _load_corpus(args, model, preset)
    table = run_table(corpus, [args.scenario], train, model, supervised=args.supervised, speakers=[args.speaker],
                      test_on_all=args.test_on_all)
    write_run_artifacts(table, args.out, model)
    _write_config(args.out, train, model)
    res = next(iter(table.runs.values()))
    print(f"{res.speaker} {res.kind}: rotations {[round(v, 2) for v in res.per_rotation]}, mean {res.mean:.2f}")
    return 0


def cmd_table(args) -> int:
    train, model, preset = _run_configs(args)
    corpus = _load_corpus(args, model, preset)
    speakers = args.speakers.split(",") if args.speakers else None
    kinds = [ScenarioKind(k.strip()) for k in args.scenarios.split(",")]
    table = run_table(corpus, kinds, train, model, supervised=args.supervised, speakers=speakers,
                      test_on_all=args.test_on_all, results_dir=args.out)
    _write_config(args.out, train, model)
    for fmt, name in REPORT_FORMATS.items():
        emit_report(table.report, args.out / name, fmt, title=args.title)
    print(to_text(table.report, args.title), end="")
    return 0


def cmd_report(args) -> int:
    matrix = args.results / "wrr_matrix.csv"
    try:
        report = from_csv(matrix.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportError(f"cannot read {matrix}: {exc}") from exc
    body = {"text": lambda r: to_text(r, args.title), "csv": to_csv, "json": to_json}[args.format](report)
    if args.out:
        args.out.write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(range(args.seeds), args.epsilon)
    failed = [r for r in results if not r.ok]
    for r in results:
        if args.verbose or not r.ok:
            print(f"{'ok  ' if r.ok else 'FAIL'} {r.case:32s} seed {r.seed}  max rel err {r.max_error:.3e}")
    worst = max(r.max_error for r in results)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed (worst {worst:.3e})")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dysarthric-dann", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus as WAV files plus a manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--preset", choices=sorted(SYNTH_PRESETS), default="desk")
    p.add_argument("--n-control", type=int, default=13)
    p.add_argument("--mild", type=int, default=5)
    p.add_argument("--moderate", type=int, default=3)
    p.add_argument("--high", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="one scenario for one test speaker, all three rotations")
    _add_corpus_flags(p)
    p.add_argument("--scenario", required=True, choices=[k.value for k in ScenarioKind])
    p.add_argument("--speaker", required=True)
    p.add_argument("--supervised", action="store_true", help="alpha = 1: target labels are used")
    p.add_argument("--test-on-all", action="store_true", help="SI tests on all three batches")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p, require_seed=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("table", help="speaker x scenario WRR table")
    _add_corpus_flags(p)
    p.add_argument("--scenarios", default="SI,MTL,DANN", help="comma-separated, e.g. SI,SD,SA,MTL,DANN")
    p.add_argument("--speakers", help="comma-separated subset (default: every dysarthric speaker)")
    p.add_argument("--supervised", action="store_true")
    p.add_argument("--test-on-all", action="store_true")
    p.add_argument("--title")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p, require_seed=True)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("report", help="re-emit the WRR table of a results directory")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--format", choices=sorted(REPORT_FORMATS), default="text")
    p.add_argument("--title")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and layer")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (cfg.ConfigError, CorpusError, ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
