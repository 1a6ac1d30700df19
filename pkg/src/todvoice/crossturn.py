"""Cross-turn slot segmentation: long alphanumeric values become dictated chunks.

A segmentable value (phone number, email, booking code) is split into short
chunks; the user dictates one chunk per turn and the assistant confirms each.
With probability p_error exactly one chunk is mis-spoken and immediately
corrected in the following user turn, so the corrected chunk sequence always
reconstructs the gold value.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .corpus import CrossTurnMeta, Dialogue, Role, Turn, renumber

_DIGIT_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]


@dataclass(frozen=True)
class CrossTurnConfig:
    p_error: float = 0.20
    min_digits: int = 7
    min_code_len: int = 5
    # Self-corrections on categorical (non-segmentable) slot values are not
    # quantified by the source material; off unless explicitly enabled.
    categorical_corrections: bool = False
    p_categorical: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_error <= 1.0:
            raise ValueError("p_error must be in [0, 1]")


def is_segmentable(slot_value: str, cfg: CrossTurnConfig = CrossTurnConfig()) -> bool:
    if "@" in slot_value:
        return True
    digits = sum(ch.isdigit() for ch in slot_value)
    if digits >= cfg.min_digits:
        return True
    if (
        len(slot_value) >= cfg.min_code_len
        and not re.search(r"\s", slot_value)
        and any(ch.isalpha() for ch in slot_value)
        and any(ch.isdigit() for ch in slot_value)
    ):
        return True
    return False


def _split_digits(digits: str) -> list[str]:
    """Split a digit string into 3-chunks; remainders fold into 4-chunks."""
    n = len(digits)
    if n <= 4:
        return [digits]
    rem = n % 3
    if rem == 0:
        sizes = [3] * (n // 3)
    elif rem == 1:
        sizes = [3] * (n // 3 - 1) + [4]
    elif n == 5:
        sizes = [3, 2]
    else:
        sizes = [3] * ((n - 8) // 3) + [4, 4]
    out, at = [], 0
    for size in sizes:
        out.append(digits[at : at + size])
        at += size
    return out


def _vocalize_dots(part: str) -> str:
    return part.replace(".", " dot ").replace("  ", " ").strip()


def segment_value(slot_value: str, cfg: CrossTurnConfig = CrossTurnConfig()) -> list[str]:
    if not is_segmentable(slot_value, cfg):
        raise ValueError(f"value is not segmentable: {slot_value!r}")
    if "@" in slot_value:
        local, domain = slot_value.split("@", 1)
        return [_vocalize_dots(local), "at " + _vocalize_dots(domain)]
    if not re.search(r"\s", slot_value) and any(ch.isalpha() for ch in slot_value):
        chunks: list[str] = []
        for run in re.findall(r"[A-Za-z]+|\d+", slot_value):
            if run.isdigit() and len(run) >= cfg.min_code_len:
                chunks.extend(_split_digits(run))
            else:
                chunks.append(run)
        return chunks
    return _split_digits("".join(ch for ch in slot_value if ch.isdigit()))


def render_dictation(chunk: str) -> str:
    """Spoken form of one chunk: digits word-by-word, letter codes letter-by-letter."""
    if chunk.isdigit():
        return " ".join(_DIGIT_WORDS[int(ch)] for ch in chunk)
    if chunk.isalpha() and chunk.isupper():
        return " ".join(chunk)
    return chunk


def corrupt_chunk(chunk: str, rng: random.Random) -> str:
    """Substitute one character within its class (digit->digit, letter->letter)."""
    positions = [i for i, ch in enumerate(chunk) if ch.isalnum()]
    if not positions:
        return chunk
    i = rng.choice(positions)
    ch = chunk[i]
    if ch.isdigit():
        repl = str((int(ch) + 1 + rng.randrange(9)) % 10)
        while repl == ch:  # pragma: no cover - offset construction prevents this
            repl = str(rng.randrange(10))
    else:
        alphabet = "abcdefghijklmnopqrstuvwxyz"
        pool = [c for c in alphabet if c != ch.lower()]
        repl = rng.choice(pool)
        if ch.isupper():
            repl = repl.upper()
    return chunk[:i] + repl + chunk[i + 1 :]


def _shift_spans(
    spans: tuple[tuple[str, int, int], ...], drop: str, at: int, delta: int
) -> tuple[tuple[str, int, int], ...]:
    out = []
    for name, s, e in spans:
        if name == drop and s <= at < e:
            continue
        if s >= at:
            out.append((name, s + delta, e + delta))
        else:
            out.append((name, s, e))
    return tuple(out)


def expand_turn(
    d: Dialogue,
    turn_idx: int,
    slot: str,
    chunks: list[str],
    rng: random.Random,
    cfg: CrossTurnConfig = CrossTurnConfig(),
) -> Dialogue:
    """Rewrite one user turn into a chunk-dictation sub-dialogue."""
    turn = d.turns[turn_idx]
    span = next(((s, e) for name, s, e in turn.slot_spans if name == slot), None)
    if turn.role is not Role.USER or span is None:
        raise ValueError(f"turn {turn_idx} has no user slot span for {slot!r}")
    start, end = span

    error_at = rng.randrange(len(chunks)) if rng.random() < cfg.p_error else None
    spoken = list(chunks)
    if error_at is not None:
        spoken[error_at] = corrupt_chunk(chunks[error_at], rng)

    block: list[Turn] = []

    def add(role: Role, text: str, meta: CrossTurnMeta) -> None:
        block.append(Turn(index=0, role=role, text=text, crossturn=meta))

    for i, chunk in enumerate(spoken):
        dictated = render_dictation(chunk)
        meta = CrossTurnMeta(slot_name=slot, chunk_index=i, chunk_text=chunk, is_error=(i == error_at))
        if i == 0:
            first_text = turn.text[:start] + dictated + turn.text[end:]
            delta = len(dictated) - (end - start)
            block.append(
                turn.with_(
                    text=first_text,
                    tagged=None,
                    slot_spans=_shift_spans(turn.slot_spans, slot, start, delta),
                    crossturn=meta,
                )
            )
        else:
            add(Role.USER, f"Then {dictated}.", meta)
        add(Role.ASSISTANT, f"Got it, {dictated}.", meta)
        if i == error_at:
            fix = render_dictation(chunks[i])
            fix_meta = CrossTurnMeta(slot_name=slot, chunk_index=i, chunk_text=chunks[i], is_error=False)
            add(Role.USER, f"Wait, I meant {fix}.", fix_meta)
            add(Role.ASSISTANT, f"Got it, {fix}.", fix_meta)

    # The correction user turn sits two positions after the erroneous chunk turn.
    if error_at is not None:
        err_pos = next(
            i for i, t in enumerate(block)
            if t.crossturn and t.crossturn.chunk_index == error_at and t.crossturn.is_error and t.role is Role.USER
        )
        corrected_abs = turn_idx + err_pos + 2
        err_turn = block[err_pos]
        block[err_pos] = err_turn.with_(
            crossturn=CrossTurnMeta(
                slot_name=slot,
                chunk_index=error_at,
                chunk_text=err_turn.crossturn.chunk_text,
                is_error=True,
                corrected_in_turn=corrected_abs,
            )
        )

    added = len(block) - 1
    new_turns = renumber(list(d.turns[:turn_idx]) + block + list(d.turns[turn_idx + 1 :]))

    state = None
    if d.state_per_turn is not None:
        state = {(k + added if k > turn_idx else k): v for k, v in d.state_per_turn.items()}

    return Dialogue(
        dialogue_id=d.dialogue_id,
        source=d.source,
        goal=d.goal,
        turns=new_turns,
        user_speaker=d.user_speaker,
        assistant_speaker=d.assistant_speaker,
        state_per_turn=state,
    )


def reconstruct_value(d: Dialogue, slot: str) -> str:
    """Rebuild the dictated value from chunk metadata, applying corrections."""
    by_chunk: dict[int, str] = {}
    for t in d.turns:
        m = t.crossturn
        if m is None or m.slot_name != slot or t.role is not Role.USER:
            continue
        if m.chunk_index not in by_chunk or not m.is_error:
            by_chunk[m.chunk_index] = m.chunk_text
        if m.is_error and m.corrected_in_turn is not None:
            fix = d.turns[m.corrected_in_turn].crossturn
            if fix is not None:
                by_chunk[m.chunk_index] = fix.chunk_text
    chunks = [by_chunk[i] for i in sorted(by_chunk)]
    if len(chunks) == 2 and chunks[1].startswith("at "):
        local = chunks[0].replace(" dot ", ".")
        domain = chunks[1][3:].replace(" dot ", ".")
        return f"{local}@{domain}"
    return "".join(chunks)


def segmentable_slots(turn: Turn, cfg: CrossTurnConfig) -> list[tuple[str, str]]:
    """(slot, value) pairs in span order whose values qualify for segmentation."""
    out = []
    for name, s, e in sorted(turn.slot_spans, key=lambda sp: sp[1]):
        value = turn.text[s:e]
        if is_segmentable(value, cfg):
            out.append((name, value))
    return out


def _merge_into_next_assistant(d: Dialogue, j: int) -> Dialogue:
    """Fold turn j into turn j+1 when both are assistant turns."""
    if j + 1 >= len(d.turns):
        return d
    conf, nxt = d.turns[j], d.turns[j + 1]
    if conf.role is not Role.ASSISTANT or nxt.role is not Role.ASSISTANT:
        return d
    shift = len(conf.text) + 1
    merged = nxt.with_(
        text=f"{conf.text} {nxt.text}",
        tagged=f"{conf.text} {nxt.tagged}" if nxt.tagged is not None else None,
        slot_spans=tuple((n, s + shift, e + shift) for n, s, e in nxt.slot_spans),
        crossturn=conf.crossturn,
    )
    turns = renumber(list(d.turns[:j]) + [merged] + list(d.turns[j + 2 :]))
    state = None
    if d.state_per_turn is not None:
        state = {(k if k <= j else k - 1): v for k, v in d.state_per_turn.items()}
    return Dialogue(
        dialogue_id=d.dialogue_id,
        source=d.source,
        goal=d.goal,
        turns=turns,
        user_speaker=d.user_speaker,
        assistant_speaker=d.assistant_speaker,
        state_per_turn=state,
    )


def apply_crossturn_stage(
    d: Dialogue, cfg: CrossTurnConfig, rng: random.Random
) -> Dialogue:
    """Expand the leftmost segmentable slot of each eligible user turn.

    The block's final confirmation is folded into the assistant turn that
    originally followed, keeping roles strictly alternating.
    """
    i = 0
    while i < len(d.turns):
        t = d.turns[i]
        if t.role is Role.USER and t.crossturn is None:
            slots = segmentable_slots(t, cfg)
            if slots:
                name, value = slots[0]
                chunks = segment_value(value, cfg)
                if len(chunks) >= 2:
                    before = len(d.turns)
                    d = expand_turn(d, i, name, chunks, rng, cfg)
                    j = i + len(d.turns) - before
                    d = _merge_into_next_assistant(d, j)
                    i = j
        i += 1
    return d
