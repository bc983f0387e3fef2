"""The two table protocols, run over several training seeds.

``unsupervised`` trains SI on control speech only (tested on all three
batches) against DANN with unlabelled dysarthric data.  ``supervised``
compares SI, DANN and MTL with labelled dysarthric data plus the
speaker-adapted SI model.  Both default to the moderate and high tiers of the
desk corpus with the desk architecture.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, Severity, synth_preset
from .experiment import TrainConfig, run_table
from .model import ModelConfig
from .report import WrrReport

PROTOCOLS = {
    "unsupervised": dict(kinds=("SI", "DANN"), supervised=False, test_on_all=True),
    "supervised": dict(kinds=("SI", "DANN", "MTL", "SA"), supervised=True, test_on_all=False),
}


@dataclass
class ProtocolRun:
    protocol: str
    seeds: list[int]
    reports: list[WrrReport] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def column_means(self) -> dict[str, float]:
        """Mean WRR per scenario, averaged over speakers and then seeds."""
        cols = self.reports[0].scenarios
        return {c: float(np.mean([np.mean(r.column(c)) for r in self.reports])) for c in cols}


def target_speakers(corpus: Corpus, tiers: Sequence[str] = ("moderate", "high")) -> list[str]:
    wanted = {Severity(t) for t in tiers}
    return [s.speaker_id for s in corpus.speakers if s.severity in wanted]


def run_protocol(
    protocol: str,
    seeds: Sequence[int] = (0, 1, 2),
    corpus: Corpus | None = None,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig = TrainConfig(),
    speakers: Sequence[str] | None = None,
    progress=None,
) -> ProtocolRun:
    spec = PROTOCOLS[protocol]
    corpus = corpus if corpus is not None else synth_preset("desk")
    model_config = model_config if model_config is not None else ModelConfig.desk(corpus.input_length)
    speakers = list(speakers) if speakers is not None else target_speakers(corpus)
    out = ProtocolRun(protocol, list(seeds))
    for seed in seeds:
        start = time.perf_counter()
        table = run_table(
            corpus,
            spec["kinds"],
            dataclasses.replace(train_config, seed=seed),
            model_config,
            supervised=spec["supervised"],
            speakers=speakers,
            test_on_all=spec["test_on_all"],
        )
        out.seconds.append(time.perf_counter() - start)
        out.reports.append(table.report)
        if progress is not None:
            progress(seed, table.report, out.seconds[-1])
    return out
