"""Dialogue data model: goals, turns, spoken-behavior metadata, validation, JSON I/O.

A dialogue is a finalized, strictly-alternating sequence of user/assistant
turns. Spoken-behavior augmentations (cross-turn dictation, barge-ins,
disfluencies, emotion labels) attach as per-turn metadata rather than
restructuring the schema, so every downstream consumer can ignore the ones
it does not care about.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Iterable, Iterator

BARGEIN_TOKEN = "<bargein>"

DISFLUENCY_TYPES = ("FP", "DM", "EDIT", "REP", "COR", "RST")


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


class Emotion(IntEnum):
    """Seven-way emotion label; integer ids are part of the on-disk format."""

    NEUTRAL = 0
    FEARFUL = 1
    DISSATISFIED = 2
    APOLOGETIC = 3
    ABUSIVE = 4
    EXCITED = 5
    SATISFIED = 6

    @property
    def label_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "Emotion":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown emotion name: {name!r}") from None


class BargeInType(str, Enum):
    ERROR_RECOVERY = "error_recovery"
    CLARIFICATION = "clarification"
    EFFICIENCY = "efficiency"


class BargeInStyle(str, Enum):
    IMPLICIT = "implicit"
    RAW = "raw"
    INTERPRETED = "interpreted"


# On-disk subtype tags, e.g. "INCOHERENT_RAW" for an error-recovery barge-in
# with a raw-style interruption.
_TYPE_TAG = {
    BargeInType.ERROR_RECOVERY: "INCOHERENT",
    BargeInType.CLARIFICATION: "FAIL",
    BargeInType.EFFICIENCY: "REF",
}
_STYLE_TAG = {
    BargeInStyle.IMPLICIT: "IMPL",
    BargeInStyle.RAW: "RAW",
    BargeInStyle.INTERPRETED: "INTERP",
}
_TAG_TYPE = {v: k for k, v in _TYPE_TAG.items()}
_TAG_STYLE = {v: k for k, v in _STYLE_TAG.items()}


class CorpusError(Exception):
    """Structural error in corpus data."""


class MalformedTagError(CorpusError):
    """Tagged text does not parse against its disfluency metadata."""


@dataclass(frozen=True)
class SubGoal:
    domain: str
    intent: str
    constraints: dict[str, str] = field(default_factory=dict)
    requests: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "requests", frozenset(self.requests))
        overlap = set(self.constraints) & self.requests
        if overlap:
            raise CorpusError(f"slots in both constraints and requests: {sorted(overlap)}")
        for name in list(self.constraints) + list(self.requests):
            if not name:
                raise CorpusError("empty slot name in sub-goal")


@dataclass(frozen=True)
class Goal:
    text: str
    sub_goals: tuple[SubGoal, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_goals", tuple(self.sub_goals))
        if not self.sub_goals:
            raise CorpusError("goal must contain at least one sub-goal")


@dataclass(frozen=True)
class CrossTurnMeta:
    """Marks a turn as part of a segmented-dictation exchange."""

    slot_name: str
    chunk_index: int
    chunk_text: str
    is_error: bool = False
    corrected_in_turn: int | None = None


@dataclass(frozen=True)
class BargeInMeta:
    type: BargeInType
    style: BargeInStyle
    erroneous_slots: dict[str, str] | None = None
    corrected_slots: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if self.type is BargeInType.ERROR_RECOVERY:
            if self.erroneous_slots is None or self.corrected_slots is None:
                raise CorpusError("error-recovery barge-in requires erroneous and corrected slots")
            if set(self.erroneous_slots) != set(self.corrected_slots):
                raise CorpusError("erroneous and corrected slot keys must match")
        elif self.erroneous_slots is not None or self.corrected_slots is not None:
            raise CorpusError(f"{self.type.value} barge-in must not carry slot corrections")

    @property
    def subtype(self) -> str:
        return f"{_TYPE_TAG[self.type]}_{_STYLE_TAG[self.style]}"

    @classmethod
    def from_subtype(cls, subtype: str, **kwargs: Any) -> "BargeInMeta":
        base, _, style = subtype.partition("_")
        if base not in _TAG_TYPE or style not in _TAG_STYLE:
            raise CorpusError(f"unknown barge-in subtype: {subtype!r}")
        return cls(type=_TAG_TYPE[base], style=_TAG_STYLE[style], **kwargs)


@dataclass(frozen=True)
class DisfluencyMeta:
    type: str
    position: int
    inserted_span: str
    original_value: str | None = None

    def __post_init__(self) -> None:
        if self.type not in DISFLUENCY_TYPES:
            raise CorpusError(f"unknown disfluency type: {self.type!r}")
        if self.position < 0:
            raise CorpusError("disfluency position must be non-negative")
        if self.type == "COR" and self.original_value is None:
            raise CorpusError("COR must record the corrected value")


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    accent_pool: str
    country: str
    age: int
    age_bin: str
    gender: str
    ref_audio: str | None = None
    ref_duration_s: float | None = None


@dataclass(frozen=True)
class Turn:
    index: int
    role: Role
    text: str
    tagged: str | None = None
    slot_spans: tuple[tuple[str, int, int], ...] = ()
    emotion: Emotion | None = None
    bargein: BargeInMeta | None = None
    disfluency: tuple[DisfluencyMeta, ...] = ()
    crossturn: CrossTurnMeta | None = None
    audio_ref: str | None = None
    duration_s: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "slot_spans", tuple(tuple(s) for s in self.slot_spans))
        object.__setattr__(self, "disfluency", tuple(self.disfluency))

    @property
    def tagged_text(self) -> str:
        return self.tagged if self.tagged is not None else self.text

    def with_(self, **changes: Any) -> "Turn":
        return replace(self, **changes)


@dataclass(frozen=True)
class Dialogue:
    dialogue_id: str
    source: str
    goal: Goal
    turns: tuple[Turn, ...]
    user_speaker: SpeakerProfile | None = None
    assistant_speaker: SpeakerProfile | None = None
    state_per_turn: dict[int, dict[str, str]] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))

    def with_turns(self, turns: Iterable[Turn]) -> "Dialogue":
        return replace(self, turns=tuple(turns))

    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role is Role.USER]

    def state_at(self, turn_index: int) -> dict[str, str] | None:
        """Latest belief state at or before turn_index, if states were ingested."""
        if not self.state_per_turn:
            return None
        best: dict[str, str] | None = None
        for idx in sorted(self.state_per_turn):
            if idx > turn_index:
                break
            best = self.state_per_turn[idx]
        return best


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    turn_index: int | None = None

    def __str__(self) -> str:
        where = f"turn {self.turn_index}: " if self.turn_index is not None else ""
        return f"[{self.rule}] {where}{self.detail}"


def renumber(turns: Iterable[Turn]) -> tuple[Turn, ...]:
    """Reassign dense indices from 0 preserving order."""
    return tuple(t.with_(index=i) for i, t in enumerate(turns))


def validate_dialogue(d: Dialogue) -> list[Violation]:
    """Check structural invariants; returns violations instead of raising."""
    out: list[Violation] = []

    if not d.goal.sub_goals:
        out.append(Violation("goal.sub_goals", "goal has no sub-goals"))

    for i, t in enumerate(d.turns):
        if t.index != i:
            out.append(Violation("turns.indices", f"expected index {i}, found {t.index}", t.index))

    for i in range(1, len(d.turns)):
        prev, cur = d.turns[i - 1], d.turns[i]
        if prev.role is cur.role:
            # Assistant may speak twice in a row only when resuming right
            # after an interruption it just handled.
            allowed = (
                prev.role is Role.ASSISTANT
                and i >= 2
                and d.turns[i - 2].role is Role.USER
                and d.turns[i - 2].bargein is not None
            )
            if not allowed:
                out.append(
                    Violation(
                        "turns.alternation",
                        f"consecutive {cur.role.value} turns at {i - 1}, {i}",
                        i,
                    )
                )

    for t in d.turns:
        n = len(t.text)
        taken: list[tuple[int, int]] = []
        for name, start, end in t.slot_spans:
            if not (0 <= start < end <= n):
                out.append(
                    Violation("turn.span_bounds", f"span {name!r} [{start}:{end}) outside text of length {n}", t.index)
                )
                continue
            for s0, e0 in taken:
                if start < e0 and s0 < end:
                    out.append(Violation("turn.span_overlap", f"span {name!r} overlaps another span", t.index))
                    break
            taken.append((start, end))

        if t.role is Role.USER and BARGEIN_TOKEN in t.text:
            out.append(Violation("turn.bargein_token", "user turn contains the truncation token", t.index))
        if t.role is Role.ASSISTANT:
            if t.bargein is not None and not t.text.endswith(BARGEIN_TOKEN):
                out.append(Violation("turn.truncation", "truncated assistant turn must end with the token", t.index))
            if BARGEIN_TOKEN in t.text and not t.text.endswith(BARGEIN_TOKEN):
                out.append(Violation("turn.truncation", "truncation token not at end of turn", t.index))
            if t.text.endswith(BARGEIN_TOKEN) and t.bargein is None:
                out.append(Violation("turn.truncation_meta", "truncated turn lacks barge-in metadata", t.index))

        if t.bargein is not None and t.bargein.type is BargeInType.ERROR_RECOVERY:
            state = d.state_at(t.index)
            if state is not None and t.bargein.corrected_slots:
                for k, v in t.bargein.corrected_slots.items():
                    if k in state and state[k] != v:
                        out.append(
                            Violation(
                                "turn.bargein_slots",
                                f"corrected value {v!r} for {k!r} disagrees with state {state[k]!r}",
                                t.index,
                            )
                        )

    return out


# --- fluent projection -------------------------------------------------------

_FILLER_TYPES = {"FP", "DM", "EDIT"}
_MARKERS = tuple(f"[{t}]" for t in DISFLUENCY_TYPES)


def _remove_once(text: str, piece: str, kind: str) -> str:
    if piece not in text:
        raise MalformedTagError(f"{kind}: expected segment {piece!r} not found in tagged text")
    return text.replace(piece, "", 1)


def fluent_projection(turn: Turn) -> str:
    """Reconstruct the fluent reading of a turn from its tagged text.

    For FP/DM/EDIT/REP the result is exactly the pre-augmentation text; for
    COR/RST it is the fluent remainder, which always contains the final
    (correct) slot value.
    """
    text = turn.tagged_text
    if not turn.disfluency:
        if any(m in text for m in _MARKERS):
            raise MalformedTagError("tagged text carries markers but no disfluency metadata")
        return text

    for meta in turn.disfluency:
        if meta.type in _FILLER_TYPES:
            text = _remove_once(text, f"[{meta.type}] {meta.inserted_span} ", meta.type)
        elif meta.type == "REP":
            # The recorded unit may keep trailing punctuation from its source
            # words even though the spoken copy drops it.
            bare = re.sub(r"[^\w'%]+$", "", meta.inserted_span) or meta.inserted_span
            for piece in (f" [REP] {meta.inserted_span}", f" [REP] {bare}", f"[REP] {bare} "):
                if piece in text:
                    text = text.replace(piece, "", 1)
                    break
            else:
                raise MalformedTagError("REP: recorded copy not found in tagged text")
        elif meta.type == "COR":
            text = _remove_once(text, "[COR] ", "COR")
            lead_in = f"{meta.inserted_span}— no, "
            if lead_in in text:
                text = text.replace(lead_in, "", 1)
            if meta.original_value and meta.original_value not in text:
                raise MalformedTagError("COR projection lost the corrected value")
        elif meta.type == "RST":
            text = _remove_once(text, f"{meta.inserted_span} [RST] ", "RST")
        else:  # pragma: no cover - DisfluencyMeta rejects unknown types
            raise MalformedTagError(f"unknown disfluency type {meta.type!r}")

    if any(m in text for m in _MARKERS):
        raise MalformedTagError("unconsumed disfluency markers remain after projection")
    return text


# --- JSON serialization ------------------------------------------------------


def _speaker_to_dict(sp: SpeakerProfile) -> dict[str, Any]:
    out: dict[str, Any] = {
        "speaker_id": sp.speaker_id,
        "category": sp.accent_pool.capitalize(),
        "country": sp.country,
        "age": sp.age,
        "age_bin": sp.age_bin,
        "sex": sp.gender,
    }
    if sp.ref_audio is not None:
        out["ref_audio"] = sp.ref_audio
    if sp.ref_duration_s is not None:
        out["ref_duration_s"] = sp.ref_duration_s
    return out


def _speaker_from_dict(d: dict[str, Any]) -> SpeakerProfile:
    return SpeakerProfile(
        speaker_id=d.get("speaker_id", ""),
        accent_pool=d["category"].lower(),
        country=d["country"],
        age=int(d["age"]),
        age_bin=d.get("age_bin", ""),
        gender=d["sex"],
        ref_audio=d.get("ref_audio"),
        ref_duration_s=d.get("ref_duration_s"),
    )


def turn_to_dict(t: Turn, state: dict[str, str] | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {"role": t.role.value, "text": t.text}
    if t.tagged is not None and t.tagged != t.text:
        out["tagged"] = t.tagged
    if t.slot_spans:
        out["slot_spans"] = [[name, start, end] for name, start, end in t.slot_spans]
    if t.emotion is not None:
        out["emotion"] = {"label": int(t.emotion), "name": t.emotion.label_name}
    if t.bargein is not None:
        b: dict[str, Any] = {"type": t.bargein.type.value.upper(), "subtype": t.bargein.subtype}
        if t.bargein.erroneous_slots is not None:
            b["erroneous_slots"] = dict(t.bargein.erroneous_slots)
            b["corrected_slots"] = dict(t.bargein.corrected_slots or {})
        out["bargein"] = b
    if t.disfluency:
        out["disfluency"] = [
            {
                "type": m.type,
                "position": m.position,
                "inserted_span": m.inserted_span,
                **({"original_value": m.original_value} if m.original_value is not None else {}),
            }
            for m in t.disfluency
        ]
    if t.crossturn is not None:
        c: dict[str, Any] = {
            "slot_name": t.crossturn.slot_name,
            "chunk_index": t.crossturn.chunk_index,
            "chunk_text": t.crossturn.chunk_text,
            "is_error": t.crossturn.is_error,
        }
        if t.crossturn.corrected_in_turn is not None:
            c["corrected_in_turn"] = t.crossturn.corrected_in_turn
        out["crossturn"] = c
    if t.audio_ref is not None:
        out["audio_path"] = t.audio_ref
    if t.duration_s is not None:
        out["duration_s"] = t.duration_s
    if state is not None:
        out["state"] = state
    return out


def turn_from_dict(d: dict[str, Any], index: int) -> Turn:
    emotion = None
    if "emotion" in d and d["emotion"] is not None:
        e = d["emotion"]
        emotion = Emotion(int(e["label"]))
        if "name" in e and Emotion.from_name(e["name"]) is not emotion:
            raise CorpusError(f"emotion label/name mismatch: {e}")
    bargein = None
    if "bargein" in d and d["bargein"] is not None:
        b = d["bargein"]
        bargein = BargeInMeta.from_subtype(
            b["subtype"],
            erroneous_slots=b.get("erroneous_slots"),
            corrected_slots=b.get("corrected_slots"),
        )
    disfluency = tuple(
        DisfluencyMeta(
            type=m["type"],
            position=int(m["position"]),
            inserted_span=m["inserted_span"],
            original_value=m.get("original_value"),
        )
        for m in d.get("disfluency", [])
    )
    crossturn = None
    if "crossturn" in d and d["crossturn"] is not None:
        c = d["crossturn"]
        crossturn = CrossTurnMeta(
            slot_name=c["slot_name"],
            chunk_index=int(c["chunk_index"]),
            chunk_text=c["chunk_text"],
            is_error=bool(c.get("is_error", False)),
            corrected_in_turn=c.get("corrected_in_turn"),
        )
    return Turn(
        index=index,
        role=Role(d["role"]),
        text=d["text"],
        tagged=d.get("tagged"),
        slot_spans=tuple((s[0], int(s[1]), int(s[2])) for s in d.get("slot_spans", [])),
        emotion=emotion,
        bargein=bargein,
        disfluency=disfluency,
        crossturn=crossturn,
        audio_ref=d.get("audio_path"),
        duration_s=d.get("duration_s"),
    )


def dialogue_to_dict(d: Dialogue) -> dict[str, Any]:
    structured = {
        "domains": sorted({sg.domain for sg in d.goal.sub_goals}),
        "intents": sorted({sg.intent for sg in d.goal.sub_goals}),
        "sub_goals": [
            {
                "domain": sg.domain,
                "intent": sg.intent,
                "constraints": dict(sg.constraints),
                "requests": sorted(sg.requests),
            }
            for sg in d.goal.sub_goals
        ],
    }
    out: dict[str, Any] = {
        "dialogue_id": d.dialogue_id,
        "source": d.source,
        "goal": {"text": d.goal.text, "structured": structured},
        "turns": [
            turn_to_dict(t, state=(d.state_per_turn or {}).get(t.index))
            for t in d.turns
        ],
    }
    if d.user_speaker is not None:
        out["speaker"] = _speaker_to_dict(d.user_speaker)
    if d.assistant_speaker is not None:
        out["assistant_speaker"] = _speaker_to_dict(d.assistant_speaker)
    return out


def dialogue_from_dict(data: dict[str, Any]) -> Dialogue:
    goal_d = data["goal"]
    sub_goals = tuple(
        SubGoal(
            domain=sg["domain"],
            intent=sg["intent"],
            constraints=dict(sg.get("constraints", {})),
            requests=frozenset(sg.get("requests", [])),
        )
        for sg in goal_d.get("structured", {}).get("sub_goals", [])
    )
    goal = Goal(text=goal_d.get("text", ""), sub_goals=sub_goals)
    turns = tuple(turn_from_dict(t, i) for i, t in enumerate(data["turns"]))
    state_per_turn: dict[int, dict[str, str]] = {
        i: dict(t["state"]) for i, t in enumerate(data["turns"]) if t.get("state") is not None
    }
    return Dialogue(
        dialogue_id=data["dialogue_id"],
        source=data.get("source", "generic"),
        goal=goal,
        turns=turns,
        user_speaker=_speaker_from_dict(data["speaker"]) if data.get("speaker") else None,
        assistant_speaker=_speaker_from_dict(data["assistant_speaker"]) if data.get("assistant_speaker") else None,
        state_per_turn=state_per_turn or None,
    )


def dumps_dialogue(d: Dialogue) -> str:
    return json.dumps(dialogue_to_dict(d), ensure_ascii=False)


def loads_dialogue(s: str) -> Dialogue:
    return dialogue_from_dict(json.loads(s))


def load_corpus(path: str | Path) -> list[Dialogue]:
    """Read a corpus file: NDJSON (one dialogue per line) or a JSON array/object."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        return [dialogue_from_dict(x) for x in json.loads(text)]
    if path.suffix == ".json" and stripped.startswith("{") and "\n{" not in text.strip():
        return [dialogue_from_dict(json.loads(text))]
    return [loads_dialogue(line) for line in text.splitlines() if line.strip()]


def iter_corpus(path: str | Path) -> Iterator[Dialogue]:
    yield from load_corpus(path)


def save_corpus(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(dumps_dialogue(d))
            fh.write("\n")
