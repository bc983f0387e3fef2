"""Training loop, the five scenario runners and the speaker x scenario table.

Whenever a scenario's training data does not depend on the rotation (SI,
DANN, MTL) or even on the speaker (SI, the SA base model), one training
trajectory is shared and every (speaker, rotation) gets its own validation
monitor.  Each monitor applies the early-stopping rule on its own validation
WRR and keeps the weights of its best epoch, which is exactly what a
separate run with the same seed would have returned.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, ScenarioKind, ScenarioSpec, Split, Utterance, as_arrays, rotation_roles, scenario_split
from .model import (
    BaselineModel,
    Batch,
    DannModel,
    ModelConfig,
    adversarial_loss,
    build_baseline,
    build_dann,
    freeze_for_adaptation,
    save_checkpoint,
)
from .report import Row, WrrReport, wrr

log = logging.getLogger(__name__)


class EmptySplitError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-4
    optimizer: str = "adam"
    patience: int = 5
    seed: int = 0
    dann_lambda: float = 1.5
    mtl_lambda: float = -0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.dann_lambda <= 0 or self.mtl_lambda >= 0:
            raise ValueError("DANN needs lambda > 0 and MTL lambda < 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- optimisers -----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place to the arrays in ``params``.

    Only names present in ``grads`` are touched.
    """
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {m.shape}, parameter {p.shape}")
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
    for name, g in grads.items():
        params[name] -= lr * g


# -- monitors and the training engine ---------------------------------------------


def evaluate(model: BaselineModel, utterances: Sequence[Utterance]) -> float:
    x, y = as_arrays(utterances)
    return wrr(int((model.predict(x) == y).sum()), len(y))


@dataclass
class Monitor:
    """Early-stopping state for one validation set.

    Improvement means strictly greater validation WRR; ``patience``
    consecutive epochs without improvement stop the monitor.
    """

    validation: list[Utterance]
    test: list[Utterance] = field(default_factory=list)
    patience: int = 5
    label: str = ""
    val_history: list[float] = field(default_factory=list)
    best_wrr: float = -1.0
    best_epoch: int = 0
    test_wrr: float | None = None
    best_params: dict[str, np.ndarray] | None = field(default=None, repr=False)
    stale: int = 0
    stopped: bool = False

    def update(self, epoch: int, val_wrr: float) -> bool:
        """Record one epoch; returns True when this epoch is the new best."""
        self.val_history.append(val_wrr)
        if val_wrr > self.best_wrr:
            self.best_wrr, self.best_epoch, self.stale = val_wrr, epoch, 0
            return True
        self.stale += 1
        if self.stale >= self.patience:
            self.stopped = True
        return False


def _predict_many(model: BaselineModel, utterances: Iterable[Utterance]) -> dict[int, int]:
    unique = list({id(u): u for u in utterances}.values())
    if not unique:
        return {}
    x, _ = as_arrays(unique)
    preds = model.predict(x)
    return {id(u): int(p) for u, p in zip(unique, preds)}


def _score(preds: dict[int, int], utterances: Sequence[Utterance]) -> float:
    return wrr(sum(preds[id(u)] == u.digit for u in utterances), len(utterances))


def _batches(n: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + size] for i in range(0, n, size)]  # final short batch kept


class _TargetStream:
    """Endless shuffled mini-batches over the target utterances."""

    def __init__(self, x: np.ndarray, y: np.ndarray, size: int, rng: np.random.Generator):
        self.x, self.y, self.size, self.rng = x, y, size, rng
        self.order, self.pos = np.zeros(0, dtype=np.int64), 0

    def reshuffle(self):
        self.order, self.pos = self.rng.permutation(len(self.x)), 0

    def next(self) -> tuple[np.ndarray, np.ndarray]:
        if self.pos >= len(self.order):
            self.reshuffle()
        idx = self.order[self.pos : self.pos + self.size]
        self.pos += self.size
        return self.x[idx], self.y[idx]


def fit(
    model: BaselineModel,
    train: Sequence[Utterance],
    monitors: list[Monitor],
    config: TrainConfig,
    target: Sequence[Utterance] = (),
    target_labelled: bool = False,
    lr: float | None = None,
    keep_params: bool = True,
) -> list[dict]:
    """Train until every monitor has stopped or ``config.epochs`` is reached.

    Returns the per-epoch history.  The model is left at the final epoch's
    weights; each monitor holds its best-epoch snapshot and test WRR.
    """
    if not train:
        raise EmptySplitError("empty training set")
    if not monitors or any(not m.validation for m in monitors):
        raise EmptySplitError("empty validation set")
    lr = config.learning_rate if lr is None else lr
    adversarial = isinstance(model, DannModel)
    if adversarial and not target and (model.alpha == 1 or model.lam != 0):
        raise EmptySplitError("adversarial training needs target utterances")
    x, y = as_arrays(train)
    source_rng = np.random.default_rng([config.seed, 1])
    stream = None
    if adversarial and target:
        tx, ty = as_arrays(target)
        stream = _TargetStream(tx, ty, config.batch_size, np.random.default_rng([config.seed, 2]))
    state = AdamState()
    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        if stream is not None:
            stream.reshuffle()
        sums: dict[str, float] = {}
        seen = 0
        for idx in _batches(len(x), config.batch_size, source_rng):
            source = Batch(x[idx], y[idx])
            if adversarial:
                tgt = None
                if stream is not None:
                    txb, tyb = stream.next()
                    tgt = Batch(txb, tyb if (target_labelled and model.alpha == 1) else None)
                lb = adversarial_loss(model, source, tgt)
                graph, loss = lb.graph, lb.training_node
                parts = dict(
                    label_source=lb.label_source,
                    label_target=lb.label_target,
                    domain_source=lb.domain_source,
                    domain_target=lb.domain_target,
                    objective=lb.total,
                )
            else:
                graph, loss = model.label_loss(source)
                parts = dict(label_source=float(graph.value(loss)))
            grads = model.gradients(graph, loss)
            if config.optimizer == "adam":
                adam_step(model.params, grads, state, lr)
            else:
                sgd_step(model.params, grads, lr)
            for k, val in parts.items():
                sums[k] = sums.get(k, 0.0) + val * len(idx)
            seen += len(idx)
        active = [m for m in monitors if not m.stopped]
        preds = _predict_many(model, (u for m in active for u in m.validation))
        entry = {"epoch": epoch, "samples": seen, **{k: v / seen for k, v in sums.items()}, "val_wrr": {}}
        for m in active:
            val = _score(preds, m.validation)
            entry["val_wrr"][m.label] = val
            if m.update(epoch, val):
                if m.test:
                    missing = [u for u in m.test if id(u) not in preds]
                    preds.update(_predict_many(model, missing))
                    m.test_wrr = _score(preds, m.test)
                if keep_params:
                    m.best_params = {k: v.copy() for k, v in model.params.items()}
        history.append(entry)
        log.debug("epoch %d %s", epoch, entry)
        if all(m.stopped for m in monitors):
            break
    return history


def train(model: BaselineModel, split: Split, config: TrainConfig, lr: float | None = None) -> tuple[BaselineModel, dict]:
    """Train on ``split`` with early stopping; weights end at the best epoch.

    Returns the model and a result fragment with the best validation WRR,
    its epoch, the test WRR at that epoch and the per-epoch history.
    """
    if not split.validation:
        raise EmptySplitError("empty validation set")
    monitor = Monitor(split.validation, split.test, config.patience, label="validation")
    history = fit(model, split.train, [monitor], config, split.target, split.target_labelled, lr)
    for name, arr in monitor.best_params.items():
        model.params[name][...] = arr
    return model, {
        "best_val_wrr": monitor.best_wrr,
        "best_epoch": monitor.best_epoch,
        "test_wrr": monitor.test_wrr,
        "history": history,
    }


# -- scenarios ------------------------------------------------------------------


@dataclass
class RunResult:
    kind: str
    speaker: str
    per_rotation: list[float]
    best_epochs: list[int]
    histories: list[list[dict]] = field(default_factory=list, repr=False)
    checkpoints: list[dict[str, np.ndarray]] = field(default_factory=list, repr=False)
    base_checksum: str | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_rotation))


def scenario_label(kind: ScenarioKind | str, supervised: bool) -> str:
    kind = ScenarioKind(kind)
    if kind in (ScenarioKind.DANN, ScenarioKind.MTL):
        return f"{kind.value}-{'sup' if supervised else 'unsup'}"
    return kind.value


def _lam(kind: ScenarioKind, config: TrainConfig) -> float:
    return config.dann_lambda if kind is ScenarioKind.DANN else config.mtl_lambda


def _rotation_monitors(corpus: Corpus, kind: ScenarioKind, speaker: str, config: TrainConfig, supervised: bool,
                       test_on_all: bool) -> tuple[list[Monitor], list[Split]]:
    monitors, splits = [], []
    for r in (1, 2, 3):
        split = scenario_split(corpus, ScenarioSpec(kind, speaker, r, supervised, test_on_all))
        splits.append(split)
        monitors.append(Monitor(split.validation, split.test, config.patience, label=f"{speaker}/r{r}"))
    return monitors, splits


def _result(kind: str, speaker: str, monitors: list[Monitor], histories: list[list[dict]], base=None) -> RunResult:
    return RunResult(
        kind=kind,
        speaker=speaker,
        per_rotation=[float(m.test_wrr) for m in monitors],
        best_epochs=[m.best_epoch for m in monitors],
        histories=histories,
        checkpoints=[m.best_params for m in monitors],
        base_checksum=base,
    )


def train_si_shared(corpus: Corpus, speakers: Sequence[str], config: TrainConfig, model_config: ModelConfig,
                    test_on_all: bool = False) -> dict[str, RunResult]:
    """One control-only trajectory, monitored for every (speaker, rotation)."""
    model = build_baseline(model_config, config.seed)
    per_speaker = {s: _rotation_monitors(corpus, ScenarioKind.SI, s, config, False, test_on_all)[0] for s in speakers}
    train_set = scenario_split(corpus, ScenarioSpec(ScenarioKind.SI, speakers[0])).train
    history = fit(model, train_set, [m for ms in per_speaker.values() for m in ms], config)
    return {s: _result("SI", s, ms, [history] * 3) for s, ms in per_speaker.items()}


def sa_base(corpus: Corpus, config: TrainConfig, model_config: ModelConfig) -> tuple[BaselineModel, list[dict]]:
    """Phase one of SA: the control-only model, independent of speaker and rotation.

    Early stopping watches WRR on the first batch of every control speaker
    (in-sample), since no dysarthric data may enter this phase.
    """
    model = build_baseline(model_config, config.seed)
    control = [u for sid in corpus.control_ids for u in corpus.of(sid)]
    monitor = Monitor([u for u in control if u.batch == 1], [], config.patience, label="control")
    history = fit(model, control, [monitor], config)
    for name, arr in monitor.best_params.items():
        model.params[name][...] = arr
    return model, history


def adapt_sa(base: BaselineModel, corpus: Corpus, speaker: str, config: TrainConfig) -> RunResult:
    """Phase two of SA: fine-tune the last conv layer and label head per rotation."""
    monitors, histories, checkpoints = [], [], []
    for r in (1, 2, 3):
        split = scenario_split(corpus, ScenarioSpec(ScenarioKind.SA, speaker, r))
        model = freeze_for_adaptation(base.clone())
        monitor = Monitor(split.validation, split.test, config.patience, label=f"{speaker}/r{r}")
        histories.append(fit(model, split.adaptation, [monitor], config, lr=config.finetune_learning_rate))
        monitors.append(monitor)
    return _result("SA", speaker, monitors, histories, base=base.checksum())


def run_scenario(corpus: Corpus, kind: ScenarioKind | str, speaker: str, config: TrainConfig,
                 model_config: ModelConfig, supervised: bool = False, test_on_all: bool = False,
                 sa_base_model: BaselineModel | None = None) -> RunResult:
    """All three rotations of one scenario for one test speaker."""
    kind = ScenarioKind(kind)
    if kind is ScenarioKind.SI:
        return train_si_shared(corpus, [speaker], config, model_config, test_on_all)[speaker]
    if kind in (ScenarioKind.DANN, ScenarioKind.MTL):
        monitors, splits = _rotation_monitors(corpus, kind, speaker, config, supervised, False)
        model = build_dann(model_config, _lam(kind, config), int(supervised), config.seed)
        history = fit(model, splits[0].train, monitors, config, splits[0].target, splits[0].target_labelled)
        return _result(scenario_label(kind, supervised), speaker, monitors, [history] * 3)
    if kind is ScenarioKind.SD:
        monitors, histories = [], []
        for r in (1, 2, 3):
            split = scenario_split(corpus, ScenarioSpec(kind, speaker, r))
            monitor = Monitor(split.validation, split.test, config.patience, label=f"{speaker}/r{r}")
            histories.append(fit(build_baseline(model_config, config.seed), split.train, [monitor], config))
            monitors.append(monitor)
        return _result("SD", speaker, monitors, histories)
    if kind is ScenarioKind.SA:
        base = sa_base_model if sa_base_model is not None else sa_base(corpus, config, model_config)[0]
        return adapt_sa(base, corpus, speaker, config)
    raise ValueError(kind)


@dataclass
class TableResult:
    report: WrrReport
    runs: dict[tuple[str, str], RunResult]


def run_table(corpus: Corpus, kinds: Sequence[ScenarioKind | str], config: TrainConfig, model_config: ModelConfig,
              supervised: bool = False, speakers: Sequence[str] | None = None, test_on_all: bool = False,
              results_dir: str | Path | None = None) -> TableResult:
    """Speaker x scenario WRR matrix, rows in corpus speaker order."""
    kinds = [ScenarioKind(k) for k in kinds]
    speakers = list(speakers) if speakers is not None else corpus.dysarthric_ids
    labels = [scenario_label(k, supervised) for k in kinds]
    runs: dict[tuple[str, str], RunResult] = {}
    for kind, label in zip(kinds, labels):
        log.info("scenario %s over %d speakers", label, len(speakers))
        if kind is ScenarioKind.SI:
            for s, res in train_si_shared(corpus, speakers, config, model_config, test_on_all).items():
                runs[(s, label)] = res
        elif kind is ScenarioKind.SA:
            base, _ = sa_base(corpus, config, model_config)
            for s in speakers:
                runs[(s, label)] = adapt_sa(base, corpus, s, config)
        else:
            for s in speakers:
                runs[(s, label)] = run_scenario(corpus, kind, s, config, model_config, supervised)
    rows = [
        Row(s, corpus.speaker(s).severity.value, {label: runs[(s, label)].mean for label in labels}) for s in speakers
    ]
    table = TableResult(WrrReport(labels, rows), runs)
    if results_dir is not None:
        write_run_artifacts(table, results_dir, model_config)
    return table


def write_run_artifacts(table: TableResult, results_dir: str | Path, model_config: ModelConfig) -> None:
    """Checkpoints (one per speaker/scenario/rotation), history JSON lines, WRR matrix CSV."""
    from .report import to_csv

    root = Path(results_dir)
    (root / "checkpoints").mkdir(parents=True, exist_ok=True)
    lines = []
    for (speaker, label), res in table.runs.items():
        for r, (hist, params) in enumerate(zip(res.histories, res.checkpoints), start=1):
            if params is not None:
                save_checkpoint(BaselineModel(model_config, params), root / "checkpoints" / f"{speaker}_{label}_r{r}.ckpt")
            record = {
                "speaker": speaker,
                "scenario": label,
                "rotation": r,
                "test_wrr": res.per_rotation[r - 1],
                "best_epoch": res.best_epochs[r - 1],
                "history": hist,
            }
            lines.append(json.dumps(record, sort_keys=True))
    (root / "history.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (root / "wrr_matrix.csv").write_text(to_csv(table.report), encoding="utf-8")


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
