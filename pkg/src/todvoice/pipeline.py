"""End-to-end corpus runs: augment, synthesize, validate, split, transcribe.

Every dialogue gets its own seed stream derived from (global_seed,
dialogue_id, stage), so output is byte-identical across runs and worker
counts. A dialogue that fails any stage is quarantined with its reason and the
run continues.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .bargein import BargeInConfig, apply_bargein_stage
from .clients import (
    ASRClient,
    ChatClient,
    ClientConfig,
    ClientError,
    HTTPASRClient,
    HTTPChatClient,
    HTTPEmbedClient,
    HTTPTTSClient,
    StubASRClient,
    StubChatClient,
    StubDirectory,
    StubEmbedClient,
    StubTTSClient,
    TTSClient,
)
from .corpus import Dialogue, Violation, validate_dialogue
from .crossturn import CrossTurnConfig, apply_crossturn_stage
from .disfluency import DisfluencyConfig, apply_disfluency_stage
from .emotion import annotate_dialogue
from .metrics import WerCell, build_wer_report
from .seeding import rng_for, stable_seed
from .speakers import (
    Pool,
    PoolWeights,
    assign_assistant_speaker,
    build_pool,
    load_speaker_manifest,
    sample_user_speaker,
)
from .synthesis import ManifestRow, synthesize_dialogue
from .turntaking import StrategyConfig

log = logging.getLogger(__name__)

STAGE_ORDER = ("crossturn", "bargein", "disfluency", "emotion", "synthesis", "validate")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageToggles:
    crossturn: bool = True
    bargein: bool = True
    disfluency: bool = True
    emotion: bool = True
    synthesis: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    global_seed: int = 0
    stub: bool = True
    workers: int = 1
    out_dir: str = "out"
    stages: StageToggles = StageToggles()
    crossturn: CrossTurnConfig = CrossTurnConfig()
    bargein: BargeInConfig = BargeInConfig()
    disfluency: DisfluencyConfig = DisfluencyConfig()
    pool_weights: PoolWeights = PoolWeights()
    turn_taking: StrategyConfig = StrategyConfig("linear_weighted")
    split_ratios: tuple[float, float, float] = (0.75, 0.10, 0.15)
    speaker_manifest: str | None = None
    assistant_manifest: str | None = None
    asr_corruption: float = 0.0
    clients: Mapping[str, ClientConfig] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if len(self.split_ratios) != 3 or any(r < 0 for r in self.split_ratios):
            raise ConfigError("split_ratios must be three non-negative numbers")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("split_ratios must sum to 1")


_SECTION_TYPES: dict[str, type] = {
    "stages": StageToggles,
    "crossturn": CrossTurnConfig,
    "bargein": BargeInConfig,
    "disfluency": DisfluencyConfig,
    "pool_weights": PoolWeights,
    "turn_taking": StrategyConfig,
}

_SCALAR_KEYS = (
    "global_seed",
    "stub",
    "workers",
    "out_dir",
    "speaker_manifest",
    "assistant_manifest",
    "asr_corruption",
)


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SCALAR_KEYS:
            kwargs[key] = value
        elif key == "split_ratios":
            kwargs[key] = tuple(value)
        elif key in _SECTION_TYPES:
            section_type = _SECTION_TYPES[key]
            known = {f.name for f in dataclasses.fields(section_type)}
            bad = set(value) - known
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            kwargs[key] = section_type(**value)
        elif key == "clients":
            kwargs[key] = {role: ClientConfig(**cc) for role, cc in value.items()}
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Clients:
    generator: ChatClient
    judge: ChatClient
    tts: TTSClient
    asr: ASRClient
    embed: Any
    directory: StubDirectory | None = None


def build_clients(cfg: PipelineConfig) -> Clients:
    if cfg.stub:
        directory = StubDirectory()
        chat = StubChatClient()
        return Clients(
            generator=chat,
            judge=chat,
            tts=StubTTSClient(),
            asr=StubASRClient(directory, corruption_rate=cfg.asr_corruption, seed=cfg.global_seed),
            embed=StubEmbedClient(directory),
            directory=directory,
        )
    def cc(role: str) -> ClientConfig:
        if role not in cfg.clients:
            raise ConfigError(f"no client config for {role!r} outside stub mode")
        return cfg.clients[role]

    return Clients(
        generator=HTTPChatClient(cc("generator")),
        judge=HTTPChatClient(cc("judge")),
        tts=HTTPTTSClient(cc("tts")),
        asr=HTTPASRClient(cc("asr")),
        embed=HTTPEmbedClient(cc("embed")),
    )


@dataclass(frozen=True)
class QuarantineRow:
    dialogue_id: str
    stage: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"dialogue_id": self.dialogue_id, "stage": self.stage, "reason": self.reason}


@dataclass
class RunResult:
    dialogues: list[Dialogue]
    quarantined: list[QuarantineRow]
    manifest: list[ManifestRow]


class _StageFailure(Exception):
    def __init__(self, stage: str, reason: str) -> None:
        super().__init__(reason)
        self.stage = stage
        self.reason = reason


def _load_pools(cfg: PipelineConfig) -> tuple[Pool | None, list | None]:
    assistant_profiles = None
    assistant_ids: set[str] = set()
    if cfg.assistant_manifest:
        assistant_profiles = load_speaker_manifest(cfg.assistant_manifest)
        assistant_ids = {sp.speaker_id for sp in assistant_profiles}
    pool = None
    if cfg.speaker_manifest:
        pool = build_pool(load_speaker_manifest(cfg.speaker_manifest), assistant_ids)
    return pool, assistant_profiles


def process_dialogue(
    d: Dialogue,
    cfg: PipelineConfig,
    clients: Clients,
    pool: Pool | None = None,
    assistant_profiles: Sequence | None = None,
) -> tuple[Dialogue, list[ManifestRow]]:
    """Apply the enabled stages to one dialogue; raises _StageFailure."""
    seed = cfg.global_seed
    stage = "crossturn"
    try:
        if cfg.stages.crossturn:
            d = apply_crossturn_stage(d, cfg.crossturn, rng_for(seed, d.dialogue_id, "crossturn"))
        stage = "bargein"
        if cfg.stages.bargein:
            d = apply_bargein_stage(
                d, cfg.bargein, clients.judge, clients.generator, rng_for(seed, d.dialogue_id, "bargein")
            )
        stage = "disfluency"
        if cfg.stages.disfluency:
            turns = apply_disfluency_stage(
                d.turns, cfg.disfluency, clients.generator, rng_for(seed, d.dialogue_id, "disfluency")
            )
            d = d.with_turns(turns)
        stage = "emotion"
        if cfg.stages.emotion:
            d = annotate_dialogue(d, clients.judge, skip_labeled=d.source == "emowoz")
        stage = "speakers"
        if pool is not None:
            rng = rng_for(seed, d.dialogue_id, "speaker")
            user_sp = sample_user_speaker(pool, cfg.pool_weights, rng)
            assistant_sp = (
                assign_assistant_speaker(assistant_profiles, rng) if assistant_profiles else None
            )
            d = dataclasses.replace(d, user_speaker=user_sp, assistant_speaker=assistant_sp)
        stage = "synthesis"
        rows: list[ManifestRow] = []
        if cfg.stages.synthesis:
            d, rows = synthesize_dialogue(
                d, clients.tts, cfg.out_dir, rng_for(seed, d.dialogue_id, "style")
            )
            if clients.directory is not None:
                speaker_for = {
                    True: d.user_speaker.speaker_id if d.user_speaker else "user",
                    False: d.assistant_speaker.speaker_id if d.assistant_speaker else "assistant",
                }
                for t in d.turns:
                    if t.audio_ref:
                        clients.directory.register(
                            str(Path(cfg.out_dir) / t.audio_ref), t.text, speaker_for[t.role.value == "user"]
                        )
        stage = "validate"
        violations = validate_dialogue(d)
        if violations:
            summary = "; ".join(f"{v.rule}@{v.turn_index}" for v in violations[:5])
            raise _StageFailure("validate", summary)
        return d, rows
    except _StageFailure:
        raise
    except Exception as exc:
        raise _StageFailure(stage, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(dialogues: Sequence[Dialogue], cfg: PipelineConfig) -> RunResult:
    clients = build_clients(cfg)
    pool, assistant_profiles = _load_pools(cfg)

    def one(d: Dialogue) -> tuple[Dialogue | None, list[ManifestRow], QuarantineRow | None]:
        try:
            out, rows = process_dialogue(d, cfg, clients, pool, assistant_profiles)
            return out, rows, None
        except _StageFailure as exc:
            log.warning("%s quarantined at %s: %s", d.dialogue_id, exc.stage, exc.reason)
            return None, [], QuarantineRow(d.dialogue_id, exc.stage, exc.reason)

    if cfg.workers <= 1:
        results = [one(d) for d in dialogues]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool_exec:
            results = list(pool_exec.map(one, dialogues))

    out: list[Dialogue] = []
    quarantined: list[QuarantineRow] = []
    manifest: list[ManifestRow] = []
    for processed, rows, bad in results:
        if bad is not None:
            quarantined.append(bad)
        elif processed is not None:
            out.append(processed)
            manifest.extend(rows)
    manifest.sort(key=lambda r: (r.dialogue_id, r.turn))
    return RunResult(out, quarantined, manifest)


# --- split -------------------------------------------------------------------------


def largest_remainder_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    sizes = [int(q) for q in quotas]
    shortfall = n - sum(sizes)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in by_fraction[:shortfall]:
        sizes[i] += 1
    return sizes


def split_corpus(
    dialogues: Sequence[Dialogue],
    ratios: Sequence[float] = (0.75, 0.10, 0.15),
    seed: int = 0,
) -> tuple[list[Dialogue], list[Dialogue], list[Dialogue]]:
    """Disjoint, exhaustive train/valid/test split by seeded shuffle."""
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ConfigError("ratios must be three numbers summing to 1")
    ordered = sorted(dialogues, key=lambda d: d.dialogue_id)
    rng_for(seed, "split").shuffle(ordered)
    n_train, n_valid, n_test = largest_remainder_sizes(len(ordered), ratios)
    return (
        ordered[:n_train],
        ordered[n_train : n_train + n_valid],
        ordered[n_train + n_valid :],
    )


# --- ASR validation ------------------------------------------------------------------


@dataclass(frozen=True)
class WerValidation:
    report: dict[str, WerCell]
    sampled_dialogues: int
    failed_files: int


def wer_validation(
    dialogues: Sequence[Dialogue],
    sample_n: int,
    asr: ASRClient,
    audio_root: str | Path,
    seed: int = 0,
) -> WerValidation:
    """Transcribe sampled user turns and report WER per accent pool."""
    ordered = sorted(dialogues, key=lambda d: d.dialogue_id)
    rng = rng_for(seed, "wer_validation")
    if sample_n < len(ordered):
        ordered = rng.sample(ordered, sample_n)
        ordered.sort(key=lambda d: d.dialogue_id)
    rows: list[tuple[str, str, str]] = []
    failed = 0
    for d in ordered:
        accent = d.user_speaker.accent_pool if d.user_speaker else "unknown"
        for t in d.user_turns():
            if not t.audio_ref:
                continue
            try:
                hyp = asr.transcribe(str(Path(audio_root) / t.audio_ref))
            except ClientError as exc:
                log.warning("ASR failed on %s turn %d: %s", d.dialogue_id, t.index, exc)
                failed += 1
                continue
            rows.append((accent, t.text, hyp))
    return WerValidation(build_wer_report(rows), len(ordered), failed)


def seed_for(global_seed: int, dialogue_id: str, stage: str) -> int:
    """Exposed for reproducing a single dialogue's stream outside a run."""
    return stable_seed(global_seed, dialogue_id, stage)
