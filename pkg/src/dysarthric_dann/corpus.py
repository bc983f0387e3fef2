"""Corpus data model, WAV/manifest ingestion, preprocessing and the synthetic
digit corpus, plus the per-scenario train/validation/test splitter."""

from __future__ import annotations

import csv
import io
import logging
import wave
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

DIGITS = 10
BATCHES = 3
REPETITIONS = 7
PER_SPEAKER = DIGITS * BATCHES * REPETITIONS  # 210


class CorpusError(ValueError):
    pass


class WavError(CorpusError):
    pass


class NotWavError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class TruncatedFileError(WavError):
    pass


class MalformedRowError(CorpusError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"manifest line {line}: {reason}")
        self.line = line


class MissingFileError(CorpusError):
    pass


class DuplicateCellError(CorpusError):
    pass


class UnknownSpeakerError(CorpusError):
    pass


class IncompleteSpeakerError(CorpusError):
    pass


class Severity(str, Enum):
    MILD = "mild"
    MODERATE = "moderate"
    HIGH = "high"
    CONTROL = "control"


@dataclass(frozen=True)
class SpeakerRecord:
    speaker_id: str
    is_control: bool
    severity: Severity
    intelligibility: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "severity", Severity(self.severity))
        if self.is_control != (self.severity is Severity.CONTROL):
            raise CorpusError(f"{self.speaker_id}: control flag and severity disagree")
        if self.intelligibility is not None and not 0 <= self.intelligibility <= 100:
            raise CorpusError(f"{self.speaker_id}: intelligibility outside 0-100")


# eq=False: utterances are compared by identity in leakage checks
@dataclass(frozen=True, eq=False)
class Utterance:
    speaker_id: str
    digit: int
    batch: int
    repetition: int
    waveform: np.ndarray = field(repr=False)
    domain: int

    @property
    def cell(self) -> tuple[str, int, int, int]:
        return (self.speaker_id, self.digit, self.batch, self.repetition)


@dataclass
class Corpus:
    speakers: list[SpeakerRecord]
    utterances: list[Utterance]
    sample_rate: int = 16000
    input_length: int = 24000

    def __post_init__(self):
        known = {s.speaker_id: s for s in self.speakers}
        for u in self.utterances:
            spk = known.get(u.speaker_id)
            if spk is None:
                raise UnknownSpeakerError(f"utterance references unknown speaker {u.speaker_id}")
            if u.domain != (0 if spk.is_control else 1):
                raise CorpusError(f"{u.cell}: domain label disagrees with speaker record")
            if u.waveform.shape != (self.input_length,):
                raise CorpusError(f"{u.cell}: waveform length {u.waveform.shape} != {self.input_length}")
        self._by_speaker: dict[str, list[Utterance]] = {s.speaker_id: [] for s in self.speakers}
        for u in self.utterances:
            self._by_speaker[u.speaker_id].append(u)

    def speaker(self, speaker_id: str) -> SpeakerRecord:
        for s in self.speakers:
            if s.speaker_id == speaker_id:
                return s
        raise UnknownSpeakerError(speaker_id)

    def of(self, speaker_id: str) -> list[Utterance]:
        if speaker_id not in self._by_speaker:
            raise UnknownSpeakerError(speaker_id)
        return self._by_speaker[speaker_id]

    @property
    def control_ids(self) -> list[str]:
        return [s.speaker_id for s in self.speakers if s.is_control]

    @property
    def dysarthric_ids(self) -> list[str]:
        return [s.speaker_id for s in self.speakers if not s.is_control]

    def completeness(self) -> dict[str, list[tuple[int, int, int]]]:
        """Missing (digit, batch, repetition) cells per speaker."""
        report = {}
        for s in self.speakers:
            have = {(u.digit, u.batch, u.repetition) for u in self.of(s.speaker_id)}
            missing = [
                (d, b, r)
                for d in range(DIGITS)
                for b in range(1, BATCHES + 1)
                for r in range(1, REPETITIONS + 1)
                if (d, b, r) not in have
            ]
            if missing:
                report[s.speaker_id] = missing
        return report


# -- WAV --------------------------------------------------------------------


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM WAV; samples are scaled by 1/32768."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise NotWavError(f"{path}: not a RIFF/WAVE file")
    try:
        with wave.open(io.BytesIO(raw), "rb") as w:
            channels, width, rate, frames = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            if channels != 1:
                raise UnsupportedEncodingError(f"{path}: {channels} channels, expected mono")
            if width != 2:
                raise UnsupportedEncodingError(f"{path}: {8 * width}-bit samples, expected 16-bit")
            data = w.readframes(frames)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise TruncatedFileError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise TruncatedFileError(f"{path}: {exc}") from exc
    if len(data) != 2 * frames:
        raise TruncatedFileError(f"{path}: header declares {frames} frames, found {len(data) // 2}")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM; values are scaled by 32768 and clipped."""
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(ints.tobytes())


def resample_linear(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    if rate == target_rate or len(samples) == 0:
        return np.asarray(samples, dtype=np.float64)
    n_out = max(1, int(round(len(samples) * target_rate / rate)))
    t_out = np.arange(n_out) * (rate / target_rate)
    return np.interp(t_out, np.arange(len(samples)), samples)


def preprocess(waveform: np.ndarray, target_length: int) -> np.ndarray:
    """Peak-normalise, then centre-crop or symmetrically zero-pad."""
    x = np.asarray(waveform, dtype=np.float64)
    if x.size == 0:
        raise CorpusError("empty waveform")
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x / peak
    n = len(x)
    if n >= target_length:
        start = (n - target_length) // 2
        return x[start : start + target_length].copy()
    left = (target_length - n) // 2
    out = np.zeros(target_length)
    out[left : left + n] = x
    return out


# -- manifest ---------------------------------------------------------------

MANIFEST_HEADER = ["speaker_id", "is_control", "severity", "digit", "batch", "repetition", "path"]


def _parse_int(text: str, lo: int, hi: int, what: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise MalformedRowError(line, f"{what} {text!r} is not an integer") from None
    if not lo <= value <= hi:
        raise MalformedRowError(line, f"{what} {value} outside [{lo}, {hi}]")
    return value


def load_manifest(path: str | Path, sample_rate: int = 16000, input_length: int = 24000) -> Corpus:
    """Load every WAV listed in a manifest into a preprocessed corpus.

    Paths are relative to the manifest's directory.  Missing cells are
    logged (see :meth:`Corpus.completeness`), not treated as errors.
    """
    path = Path(path)
    root = path.parent
    speakers: dict[str, SpeakerRecord] = {}
    utterances: list[Utterance] = []
    seen: set[tuple] = set()
    header_seen = False
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            row = [c.strip() for c in row]
            if not header_seen:
                if row != MANIFEST_HEADER:
                    raise MalformedRowError(lineno, f"expected header {','.join(MANIFEST_HEADER)}")
                header_seen = True
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise MalformedRowError(lineno, f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
            spk_id, ctrl, sev, digit, batch, rep, rel = row
            if ctrl not in ("0", "1"):
                raise MalformedRowError(lineno, f"is_control must be 0 or 1, got {ctrl!r}")
            try:
                record = SpeakerRecord(spk_id, ctrl == "1", Severity(sev))
            except (ValueError, CorpusError) as exc:
                raise MalformedRowError(lineno, str(exc)) from None
            digit_i = _parse_int(digit, 0, DIGITS - 1, "digit", lineno)
            batch_i = _parse_int(batch, 1, BATCHES, "batch", lineno)
            rep_i = _parse_int(rep, 1, REPETITIONS, "repetition", lineno)
            if spk_id in speakers and speakers[spk_id] != record:
                raise MalformedRowError(lineno, f"speaker {spk_id} metadata changes between rows")
            speakers.setdefault(spk_id, record)
            cell = (spk_id, digit_i, batch_i, rep_i)
            if cell in seen:
                raise DuplicateCellError(f"manifest line {lineno}: duplicate cell {cell}")
            seen.add(cell)
            wav_path = root / rel
            if not wav_path.is_file():
                raise MissingFileError(f"manifest line {lineno}: {wav_path} not found")
            samples, rate = load_wav(wav_path)
            wavef = preprocess(resample_linear(samples, rate, sample_rate), input_length)
            utterances.append(Utterance(spk_id, digit_i, batch_i, rep_i, wavef, 0 if record.is_control else 1))
    utterances.sort(key=lambda u: u.cell)
    corpus = Corpus(list(speakers.values()), utterances, sample_rate, input_length)
    for spk, missing in corpus.completeness().items():
        log.warning("speaker %s is missing %d of %d cells", spk, len(missing), PER_SPEAKER)
    return corpus


def save_manifest(corpus: Corpus, directory: str | Path, name: str = "manifest.csv") -> Path:
    """Write one WAV per utterance plus a manifest; returns the manifest path."""
    directory = Path(directory)
    (directory / "wav").mkdir(parents=True, exist_ok=True)
    records = {s.speaker_id: s for s in corpus.speakers}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for u in corpus.utterances:
        s = records[u.speaker_id]
        rel = f"wav/{u.speaker_id}_d{u.digit}_b{u.batch}_r{u.repetition}.wav"
        write_wav(directory / rel, u.waveform, corpus.sample_rate)
        writer.writerow([u.speaker_id, int(s.is_control), s.severity.value, u.digit, u.batch, u.repetition, rel])
    out = directory / name
    out.write_text(buf.getvalue(), encoding="utf-8")
    return out


# -- synthetic corpus ---------------------------------------------------------

# speaker ids follow the UAS naming; the grouping matches the severity tiers
PAPER_DYSARTHRIC = {
    Severity.MILD: ["F05", "M08", "M10", "M14", "M09"],
    Severity.MODERATE: ["M11", "F04", "M05"],
    Severity.HIGH: ["M16", "F02", "M07", "M01", "M12", "F03", "M04"],
}
PAPER_CONTROLS = ["CF02", "CF03", "CF04", "CF05", "CM01", "CM04", "CM05", "CM06", "CM08", "CM09", "CM10", "CM12", "CM13"]


@dataclass(frozen=True)
class Geometry:
    n_control: int = 13
    severities: tuple[str, ...] = tuple(
        ["mild"] * 5 + ["moderate"] * 3 + ["high"] * 7
    )

    @property
    def n_dysarthric(self) -> int:
        return len(self.severities)

    def validate(self) -> None:
        if self.n_control < 0 or (self.n_control == 0 and not self.severities):
            raise CorpusError("geometry needs at least one speaker")
        for s in self.severities:
            if Severity(s) is Severity.CONTROL:
                raise CorpusError("dysarthric speakers cannot have severity 'control'")


@dataclass(frozen=True)
class Distortion:
    """Generator knobs.  Tuples are (mild, moderate, high)."""

    warp: tuple[float, float, float] = (0.05, 0.15, 0.30)
    tempo: tuple[float, float, float] = (0.05, 0.10, 0.20)
    snr_db: tuple[float, float, float] = (30.0, 20.0, 12.0)
    tremor_depth: tuple[float, float, float] = (0.1, 0.3, 0.5)
    detune: tuple[float, float, float] = (0.0, 0.0, 0.0)  # tier-wide downward shift of every tone
    control_snr_db: float = 40.0
    timbre: float = 0.04  # per-speaker frequency scale spread
    f_min: float = 200.0
    f_max: float = 1400.0
    word_fraction: float = 0.6  # word duration / window duration at tempo 1

    def tier(self, severity: Severity) -> dict[str, float]:
        i = {Severity.MILD: 0, Severity.MODERATE: 1, Severity.HIGH: 2}[severity]
        return dict(warp=self.warp[i], tempo=self.tempo[i], snr_db=self.snr_db[i], tremor=self.tremor_depth[i],
                    detune=self.detune[i])


N_GRID = 12


@dataclass(frozen=True)
class DigitPrototype:
    freqs: np.ndarray  # [3] Hz
    centers: np.ndarray  # [3] envelope centres in word time (0-1)
    widths: np.ndarray  # [3] envelope widths in word time

    def render(self, t: np.ndarray, start: float, duration: float, freq_scale=1.0, gains=(1.0, 1.0, 1.0),
               phases=(0.0, 0.0, 0.0)) -> np.ndarray:
        u = (t - start) / duration
        out = np.zeros_like(t)
        for j in range(3):
            env = np.exp(-0.5 * ((u - self.centers[j]) / self.widths[j]) ** 2)
            out += gains[j] * env * np.sin(2 * np.pi * self.freqs[j] * freq_scale * t + phases[j])
        # hard word boundaries
        out *= (u >= 0) & (u <= 1)
        return out


def digit_prototypes(seed: int, distortion: Distortion = Distortion()) -> list[DigitPrototype]:
    rng = np.random.default_rng([seed, 0xD161])
    grid = np.geomspace(distortion.f_min, distortion.f_max, N_GRID)
    used: set[tuple[int, ...]] = set()
    protos = []
    for _ in range(DIGITS):
        while True:
            idx = tuple(sorted(rng.choice(N_GRID, 3, replace=False).tolist()))
            if idx not in used:
                used.add(idx)
                break
        order = rng.permutation(3)
        protos.append(
            DigitPrototype(
                freqs=grid[list(idx)][order],
                centers=np.sort(rng.uniform(0.2, 0.8, 3)),
                widths=rng.uniform(0.08, 0.2, 3),
            )
        )
    return protos


def _piecewise_warp(n: int, magnitude: float, rng: np.random.Generator, knots: int = 6) -> np.ndarray:
    """Monotone piecewise-linear map of sample positions with slopes in 1 +/- magnitude."""
    if magnitude <= 0:
        return np.arange(n, dtype=np.float64)
    slopes = 1.0 + rng.uniform(-magnitude, magnitude, knots)
    edges = np.linspace(0, n, knots + 1)
    seg = np.diff(edges) * slopes
    positions = np.concatenate([[0.0], np.cumsum(seg)])
    positions *= n / positions[-1]  # keep total length
    return np.interp(np.arange(n), edges, positions)


def _add_noise(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    power = np.mean(x**2)
    if power == 0:
        return x
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return x + rng.normal(0.0, sigma, x.shape)


def synth_corpus(
    geometry: Geometry = Geometry(),
    seed: int = 7,
    sample_rate: int = 16000,
    input_length: int = 24000,
    distortion: Distortion = Distortion(),
) -> Corpus:
    """Deterministic surrogate corpus of spoken digits.

    Every digit is a three-tone word with its own tone order and timing.
    Speakers scale the tones (timbre) and gains; dysarthric speakers add
    severity-scaled tempo change, time warp, amplitude tremor and noise,
    plus an optional tier-wide detune shared by every speaker of a tier.
    """
    geometry.validate()
    if distortion.f_max >= 0.45 * sample_rate:
        raise CorpusError(f"f_max {distortion.f_max} Hz too close to Nyquist at {sample_rate} Hz")
    protos = digit_prototypes(seed, distortion)
    rng = np.random.default_rng([seed, 0xC0DE])

    dys_ids = _dysarthric_ids(geometry)
    speakers = [SpeakerRecord(sid, True, Severity.CONTROL) for sid in _control_ids(geometry.n_control)]
    speakers += [SpeakerRecord(sid, False, Severity(sev)) for sid, sev in zip(dys_ids, geometry.severities)]

    window = input_length / sample_rate
    t = np.arange(input_length) / sample_rate
    base_duration = distortion.word_fraction * window
    utterances = []
    for spk in speakers:
        srng = np.random.default_rng(rng.integers(2**63))
        freq_scale = 1.0 + srng.uniform(-distortion.timbre, distortion.timbre)
        gains = srng.uniform(0.6, 1.4, 3)
        if spk.is_control:
            tempo, knobs = 1.0, None
        else:
            knobs = distortion.tier(spk.severity)
            # dysarthric speech is mostly slower; the factor is fixed per speaker
            tempo = 1.0 + knobs["tempo"] * srng.uniform(0.5, 1.0) * (1 if srng.random() < 0.8 else -1)
            tremor_rate = srng.uniform(4.0, 8.0)
            freq_scale *= 1.0 - knobs["detune"]
        for digit in range(DIGITS):
            for batch in range(1, BATCHES + 1):
                for rep in range(1, REPETITIONS + 1):
                    duration = base_duration * tempo * (1 + srng.uniform(-0.03, 0.03))
                    duration = min(duration, 0.95 * window)
                    slack = window - duration
                    start = slack / 2 + srng.uniform(-0.3, 0.3) * slack
                    phases = srng.uniform(0, 2 * np.pi, 3)
                    fs = freq_scale * (1 + srng.uniform(-0.01, 0.01))
                    if knobs is None:
                        x = protos[digit].render(t, start, duration, fs, gains, phases)
                        x = _add_noise(x, distortion.control_snr_db, srng)
                    else:
                        pos = _piecewise_warp(input_length, knobs["warp"], srng) / sample_rate
                        x = protos[digit].render(pos, start, duration, fs, gains, phases)
                        x *= 1 + knobs["tremor"] * np.sin(2 * np.pi * tremor_rate * t + srng.uniform(0, 2 * np.pi))
                        x = _add_noise(x, knobs["snr_db"], srng)
                    x = preprocess(x, input_length)
                    utterances.append(Utterance(spk.speaker_id, digit, batch, rep, x, 0 if spk.is_control else 1))
    return Corpus(speakers, utterances, sample_rate, input_length)


@dataclass(frozen=True)
class SynthPreset:
    sample_rate: int
    input_length: int
    distortion: Distortion


# "desk" is the 2 kHz / 0.25 s corpus that ModelConfig.desk() is sized for.
# Its knobs were retuned so that a shared, tier-wide detune dominates the
# random per-utterance distortions, which no amount of unlabelled data undoes.
DESK_DISTORTION = Distortion(
    warp=(0.03, 0.06, 0.10),
    tempo=(0.02, 0.04, 0.06),
    snr_db=(30.0, 25.0, 20.0),
    tremor_depth=(0.05, 0.10, 0.15),
    detune=(0.04, 0.08, 0.12),
    f_min=120.0,
    f_max=850.0,
)
SYNTH_PRESETS = {
    "paper": SynthPreset(16000, 24000, Distortion()),
    "desk": SynthPreset(2000, 500, DESK_DISTORTION),
}


def synth_preset(name: str, seed: int = 7, geometry: Geometry = Geometry()) -> Corpus:
    try:
        p = SYNTH_PRESETS[name]
    except KeyError:
        raise CorpusError(f"unknown corpus preset {name!r}; choose from {sorted(SYNTH_PRESETS)}") from None
    return synth_corpus(geometry, seed, p.sample_rate, p.input_length, p.distortion)


def _control_ids(n: int) -> list[str]:
    if n <= len(PAPER_CONTROLS):
        return PAPER_CONTROLS[:n]
    return PAPER_CONTROLS + [f"C{i:02d}" for i in range(len(PAPER_CONTROLS), n)]


def _dysarthric_ids(geometry: Geometry) -> list[str]:
    pools = {sev: list(ids) for sev, ids in PAPER_DYSARTHRIC.items()}
    out, extra = [], 0
    for sev in geometry.severities:
        pool = pools[Severity(sev)]
        if pool:
            out.append(pool.pop(0))
        else:
            extra += 1
            out.append(f"D{extra:02d}")
    return out


def magnitude_spectrum(x: np.ndarray) -> np.ndarray:
    spec = np.abs(np.fft.rfft(x))
    norm = np.linalg.norm(spec)
    return spec / norm if norm > 0 else spec


def spectral_distance(utterance: np.ndarray, prototype: np.ndarray) -> float:
    """L2 distance between unit-norm magnitude spectra."""
    return float(np.linalg.norm(magnitude_spectrum(utterance) - magnitude_spectrum(prototype)))


def prototype_waveform(corpus: Corpus, seed: int, digit: int, distortion: Distortion = Distortion()) -> np.ndarray:
    """Clean, centred rendering of a digit prototype at the corpus rate."""
    protos = digit_prototypes(seed, distortion)
    window = corpus.input_length / corpus.sample_rate
    duration = distortion.word_fraction * window
    t = np.arange(corpus.input_length) / corpus.sample_rate
    return preprocess(protos[digit].render(t, (window - duration) / 2, duration), corpus.input_length)


# -- scenario splits ----------------------------------------------------------


class ScenarioKind(str, Enum):
    SI = "SI"
    SD = "SD"
    SA = "SA"
    DANN = "DANN"
    MTL = "MTL"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    test_speaker: str
    rotation: int = 1
    supervised_target: bool = False  # alpha for DANN/MTL
    test_on_all_batches: bool = False  # SI only: test on all 210 utterances

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.rotation not in (1, 2, 3):
            raise ValueError("rotation must be 1, 2 or 3")

    @property
    def alpha(self) -> int:
        return int(self.supervised_target)


@dataclass
class Split:
    train: list[Utterance]  # labelled source stream
    validation: list[Utterance]
    test: list[Utterance]
    target: list[Utterance] = field(default_factory=list)  # dysarthric stream for DANN/MTL
    target_labelled: bool = False
    adaptation: list[Utterance] = field(default_factory=list)  # SA fine-tuning set


def rotation_roles(rotation: int) -> tuple[int, int, int]:
    """(primary, second, third) batch indices for a rotation.

    The primary batch is the validation batch (SI, DANN, MTL) or the
    labelled batch of the test speaker (SD training, SA adaptation).
    """
    primary = rotation
    second = rotation % 3 + 1
    third = second % 3 + 1
    return primary, second, third


def scenario_split(corpus: Corpus, spec: ScenarioSpec) -> Split:
    record = corpus.speaker(spec.test_speaker)
    if record.is_control:
        raise CorpusError(f"test speaker {spec.test_speaker} is a control speaker")
    own = corpus.of(spec.test_speaker)
    by_batch = {b: [u for u in own if u.batch == b] for b in range(1, BATCHES + 1)}
    for b, utts in by_batch.items():
        if not utts:
            raise IncompleteSpeakerError(f"{spec.test_speaker} has no utterances in batch {b}")
    primary, second, third = rotation_roles(spec.rotation)
    control = [u for sid in corpus.control_ids for u in corpus.of(sid)]
    others = [u for sid in corpus.dysarthric_ids if sid != spec.test_speaker for u in corpus.of(sid)]

    kind = spec.kind
    if kind is ScenarioKind.SI:
        test = own if spec.test_on_all_batches else by_batch[second] + by_batch[third]
        return Split(train=list(control), validation=by_batch[primary], test=list(test))
    if kind in (ScenarioKind.DANN, ScenarioKind.MTL):
        return Split(
            train=list(control),
            validation=by_batch[primary],
            test=by_batch[second] + by_batch[third],
            target=others,
            target_labelled=spec.supervised_target,
        )
    if kind is ScenarioKind.SD:
        return Split(train=control + by_batch[primary], validation=by_batch[second], test=by_batch[third])
    if kind is ScenarioKind.SA:
        return Split(
            train=list(control),
            validation=by_batch[second],
            test=by_batch[third],
            adaptation=by_batch[primary],
        )
    raise ValueError(f"unknown scenario kind {kind}")


def as_arrays(utterances: Sequence[Utterance]) -> tuple[np.ndarray, np.ndarray]:
    if not utterances:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    x = np.stack([u.waveform for u in utterances])
    y = np.array([u.digit for u in utterances], dtype=np.int64)
    return x, y
