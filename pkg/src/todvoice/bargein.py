"""Barge-in insertion: sampled user interruptions of in-progress assistant turns.

Candidates are user turns drawn per-turn Bernoulli(sample_rate); each gets a
uniformly drawn (type, style) cell. A judge call filters unnatural fits, a
generator call produces the 3-turn block [truncated assistant, interruption,
recovery], and the block is spliced in front of the original assistant
response, which then resumes the task.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass

from . import prompts
from .clients import ChatClient, ClientError
from .corpus import (
    BARGEIN_TOKEN,
    BargeInMeta,
    BargeInStyle,
    BargeInType,
    Dialogue,
    Role,
    Turn,
    renumber,
)

log = logging.getLogger(__name__)


class BlockRejected(ValueError):
    """Generated insertion block violates the format contract."""


@dataclass(frozen=True)
class BargeInConfig:
    sample_rate: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.sample_rate <= 1.0:
            raise ValueError("sample_rate must be in [0, 1]")


@dataclass(frozen=True)
class Candidate:
    turn_idx: int
    type: BargeInType
    style: BargeInStyle


@dataclass(frozen=True)
class InsertionBlock:
    turns: tuple[tuple[Role, str], ...]
    meta: BargeInMeta


def sample_candidates(d: Dialogue, cfg: BargeInConfig, rng: random.Random) -> list[Candidate]:
    out: list[Candidate] = []
    types = list(BargeInType)
    styles = list(BargeInStyle)
    for t in d.turns:
        if t.role is Role.USER and rng.random() < cfg.sample_rate:
            out.append(Candidate(t.index, rng.choice(types), rng.choice(styles)))
    return out


def _context_str(d: Dialogue, turn_idx: int, width: int = 6) -> str:
    lines = [f"{t.role.value}: {t.text}" for t in d.turns[max(0, turn_idx - width) : turn_idx]]
    return "\n".join(lines) if lines else "(start of dialogue)"


def _current_exchange(d: Dialogue, turn_idx: int) -> str:
    lines = [f"user: {d.turns[turn_idx].text}"]
    if turn_idx + 1 < len(d.turns):
        lines.append(f"assistant: {d.turns[turn_idx + 1].text}")
    return "\n".join(lines)


def judge_validity(d: Dialogue, candidate: Candidate, judge: ChatClient) -> bool:
    prompt = prompts.interruption_validity_prompt(
        candidate.type,
        _current_exchange(d, candidate.turn_idx),
        _context_str(d, candidate.turn_idx),
        d.state_at(candidate.turn_idx),
    )
    return judge.complete(prompt).strip().lower().startswith("y")


_LINE_RE = re.compile(r"^\[(Assistant|User)\]:\s*(.*)$")


def _parse_turns(reply: str) -> tuple[list[tuple[Role, str]], dict, dict]:
    reply = reply.strip()
    if reply.startswith("{"):
        data = json.loads(reply)
        turns = [(Role(t["role"]), t["text"]) for t in data.get("turns", [])]
        return turns, data.get("erroneous_slots") or {}, data.get("corrected_slots") or {}
    turns = []
    for line in reply.splitlines():
        m = _LINE_RE.match(line.strip())
        if m:
            turns.append((Role(m.group(1).lower()), m.group(2)))
    return turns, {}, {}


def generate_insertion(
    d: Dialogue,
    candidate: Candidate,
    state: dict[str, str] | None,
    gen: ChatClient,
) -> InsertionBlock:
    prompt = prompts.interruption_generation_prompt(
        candidate.type,
        candidate.style,
        _current_exchange(d, candidate.turn_idx),
        _context_str(d, candidate.turn_idx),
        state,
    )
    reply = gen.complete(prompt)
    try:
        turns, erroneous, corrected = _parse_turns(reply)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise BlockRejected(f"unparseable block: {exc}") from exc

    if len(turns) != 3:
        raise BlockRejected(f"expected 3 turns, got {len(turns)}")
    roles = [r for r, _ in turns]
    if roles != [Role.ASSISTANT, Role.USER, Role.ASSISTANT]:
        raise BlockRejected(f"bad role sequence: {[r.value for r in roles]}")
    if not turns[0][1].endswith(BARGEIN_TOKEN):
        raise BlockRejected("truncated turn does not end with the truncation token")
    if any(BARGEIN_TOKEN in text for _, text in turns[1:]):
        raise BlockRejected("truncation token outside the truncated turn")

    if candidate.type is BargeInType.ERROR_RECOVERY:
        if not erroneous or not corrected:
            raise BlockRejected("error-recovery block missing slot corrections")
        for key, value in corrected.items():
            if state is None or state.get(key) != value:
                raise BlockRejected(f"corrected value for {key!r} does not match dialogue state")
        meta = BargeInMeta(
            type=candidate.type,
            style=candidate.style,
            erroneous_slots=dict(erroneous),
            corrected_slots=dict(corrected),
        )
    else:
        meta = BargeInMeta(type=candidate.type, style=candidate.style)

    return InsertionBlock(turns=tuple(turns), meta=meta)


def apply_insertion(d: Dialogue, at: int, block: InsertionBlock) -> Dialogue:
    """Splice the block immediately before the assistant response to turn `at`."""
    splice = at + 1
    width = len(block.turns)
    new: list[Turn] = list(d.turns[:splice])
    for i, (role, text) in enumerate(block.turns):
        meta = block.meta if i < 2 else None
        new.append(Turn(index=0, role=role, text=text, bargein=meta))
    new.extend(d.turns[splice:])

    # Cross-turn correction pointers and per-turn states past the splice move down.
    shifted: list[Turn] = []
    for t in new:
        ct = t.crossturn
        if ct is not None and ct.corrected_in_turn is not None and ct.corrected_in_turn >= splice:
            ct = type(ct)(
                slot_name=ct.slot_name,
                chunk_index=ct.chunk_index,
                chunk_text=ct.chunk_text,
                is_error=ct.is_error,
                corrected_in_turn=ct.corrected_in_turn + width,
            )
            t = t.with_(crossturn=ct)
        shifted.append(t)

    state = None
    if d.state_per_turn is not None:
        state = {(k + width if k >= splice else k): v for k, v in d.state_per_turn.items()}

    return Dialogue(
        dialogue_id=d.dialogue_id,
        source=d.source,
        goal=d.goal,
        turns=renumber(shifted),
        user_speaker=d.user_speaker,
        assistant_speaker=d.assistant_speaker,
        state_per_turn=state,
    )


def apply_bargein_stage(
    d: Dialogue,
    cfg: BargeInConfig,
    judge: ChatClient,
    gen: ChatClient,
    rng: random.Random,
) -> Dialogue:
    """Sample, judge, generate, and splice; failed candidates are skipped."""
    offset = 0
    for cand in sample_candidates(d, cfg, rng):
        idx = cand.turn_idx + offset
        shifted = Candidate(idx, cand.type, cand.style)
        try:
            if not judge_validity(d, shifted, judge):
                continue
            block = generate_insertion(d, shifted, d.state_at(idx), gen)
        except ClientError as exc:
            log.warning("%s: candidate at turn %d skipped (client failure: %s)", d.dialogue_id, idx, exc)
            continue
        except BlockRejected as exc:
            log.warning("%s: candidate at turn %d rejected (%s)", d.dialogue_id, idx, exc)
            continue
        d = apply_insertion(d, idx, block)
        offset += 3
    return d
