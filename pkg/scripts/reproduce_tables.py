"""Run the unsupervised and supervised table protocols over several seeds.

    python3 scripts/reproduce_tables.py --seeds 0 1 2 --out results/tables

Prints each seed's table as it finishes, then the seed-averaged column
means.  With ``--out`` every per-seed report is also written as text and CSV.
"""

import argparse
import logging
from pathlib import Path

from dysarthric_dann.corpus import synth_preset
from dysarthric_dann.replication import PROTOCOLS, run_protocol
from dysarthric_dann.report import emit_report, to_text


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--protocol", choices=[*PROTOCOLS, "both"], default="both")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--corpus-seed", type=int, default=7)
    ap.add_argument("--out", type=Path)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    corpus = synth_preset("desk", args.corpus_seed)
    names = list(PROTOCOLS) if args.protocol == "both" else [args.protocol]
    for name in names:

        def progress(seed, report, seconds, name=name):
            title = f"{name} protocol, seed {seed} ({seconds:.0f}s)"
            print(to_text(report, title))
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                emit_report(report, args.out / f"{name}_seed{seed}.txt", "text", title)
                emit_report(report, args.out / f"{name}_seed{seed}.csv", "csv")

        run = run_protocol(name, args.seeds, corpus=corpus, progress=progress)
        means = ", ".join(f"{k} {v:.2f}" for k, v in run.column_means().items())
        print(f"{name}: mean over seeds {args.seeds}: {means}\n")


if __name__ == "__main__":
    main()
