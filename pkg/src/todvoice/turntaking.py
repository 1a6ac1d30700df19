"""Streaming three-class turn-taking decisions.

Each assistant-side token stream carries per-frame probabilities over
{listen, turnend, bargein}. A strategy watches a sliding window of the last W
frames and fires at most once per stream; fire outcomes are scored against the
final-W trigger window as correct / early / confused / missed, and a binary
collapse merges correct with confused.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CLASSES = ("listen", "turnend", "bargein")
FIRE_CLASSES = ("turnend", "bargein")
STRATEGY_NAMES = ("argmax", "prob_threshold", "tail_threshold", "listen_relative", "linear_weighted")

TRIGGER_WINDOW = 6

DEFAULT_THRESHOLDS: dict[str, tuple[float, float]] = {
    "prob_threshold": (5.0, 0.5),
    "tail_threshold": (2.7, 0.3),
    "listen_relative": (3.0, 0.3),
    "linear_weighted": (0.45, 0.05),
}

_SUM_TOL = 1e-6


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbFrame:
    p_listen: float
    p_turnend: float
    p_bargein: float

    def __post_init__(self) -> None:
        for p in (self.p_listen, self.p_turnend, self.p_bargein):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        total = self.p_listen + self.p_turnend + self.p_bargein
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"frame probabilities sum to {total}, not 1")

    def p(self, cls: str) -> float:
        return {"listen": self.p_listen, "turnend": self.p_turnend, "bargein": self.p_bargein}[cls]


def frame_argmax(f: ProbFrame) -> str:
    """Most probable class; ties favor listen, then turnend."""
    best, best_p = "listen", f.p_listen
    for cls in FIRE_CLASSES:
        if f.p(cls) > best_p:
            best, best_p = cls, f.p(cls)
    return best


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str
    window: int = TRIGGER_WINDOW
    t_turnend: float | None = None
    t_bargein: float | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.strategy == "argmax":
            if self.t_turnend is not None or self.t_bargein is not None:
                raise ValueError("argmax takes no thresholds")
            return
        te, bi = DEFAULT_THRESHOLDS[self.strategy]
        if self.t_turnend is None:
            object.__setattr__(self, "t_turnend", te)
        if self.t_bargein is None:
            object.__setattr__(self, "t_bargein", bi)
        if self.t_turnend <= 0 or self.t_bargein <= 0:
            raise ValueError("thresholds must be positive")
        if not self.t_bargein < self.t_turnend:
            raise ValueError("the barge-in threshold must sit below the turn-end threshold")


@dataclass(frozen=True)
class FireDecision:
    fired: bool
    fire_class: str | None = None
    frame_index: int | None = None

    def __post_init__(self) -> None:
        if self.fired:
            if self.fire_class not in FIRE_CLASSES:
                raise ValueError("a fire decision needs a non-listen class")
            if self.frame_index is None or self.frame_index < 0:
                raise ValueError("a fire decision needs a frame index")
        elif self.fire_class is not None or self.frame_index is not None:
            raise ValueError("a listen decision carries no class or frame")


NO_FIRE = FireDecision(False)


def window_score(strategy: str, window: Sequence[ProbFrame], cls: str) -> float:
    """Aggregate score for one class over the current window (oldest first)."""
    if strategy == "prob_threshold":
        return sum(f.p(cls) for f in window)
    if strategy == "tail_threshold":
        best_len, best_sum = 0, 0.0
        run_len, run_sum = 0, 0.0
        for f in window:
            if frame_argmax(f) == cls:
                run_len += 1
                run_sum += f.p(cls)
            else:
                run_len, run_sum = 0, 0.0
            if run_len > best_len or (run_len == best_len and run_sum > best_sum):
                best_len, best_sum = run_len, run_sum
        return best_sum
    if strategy == "listen_relative":
        return sum(max(0.0, f.p(cls) - f.p_listen) for f in window)
    if strategy == "linear_weighted":
        n = len(window)
        denom = n * (n + 1) / 2
        return sum((k + 1) * f.p(cls) for k, f in enumerate(window)) / denom
    raise ValueError(f"no window score for strategy {strategy!r}")


def _decide(cfg: StrategyConfig, window: Sequence[ProbFrame], frame_index: int) -> FireDecision:
    if cfg.strategy == "argmax":
        cls = frame_argmax(window[-1])
        if cls != "listen":
            return FireDecision(True, cls, frame_index)
        return NO_FIRE
    # turn-end first: its threshold is the higher one, and ties resolve to it
    for cls, threshold in (("turnend", cfg.t_turnend), ("bargein", cfg.t_bargein)):
        if window_score(cfg.strategy, window, cls) > threshold:
            return FireDecision(True, cls, frame_index)
    return NO_FIRE


class StrategyState:
    """Single-stream accumulator; step() raises once the stream has fired."""

    def __init__(self, cfg: StrategyConfig) -> None:
        self.cfg = cfg
        self._window: deque[ProbFrame] = deque(maxlen=cfg.window)
        self._n = 0
        self.fired: FireDecision | None = None

    def step(self, frame: ProbFrame) -> FireDecision:
        if self.fired is not None:
            raise ContractViolation("stream already fired; no further frames accepted")
        self._window.append(frame)
        decision = _decide(self.cfg, list(self._window), self._n)
        self._n += 1
        if decision.fired:
            self.fired = decision
        return decision


def run_stream(frames: Iterable[ProbFrame], cfg: StrategyConfig) -> FireDecision:
    state = StrategyState(cfg)
    for frame in frames:
        decision = state.step(frame)
        if decision.fired:
            return decision
    return NO_FIRE


def label_frames(n_tokens: int, turn_type: str) -> list[str]:
    if n_tokens < 1:
        raise ValueError("a stream holds at least one frame")
    if turn_type not in FIRE_CLASSES:
        raise ValueError(f"terminal label must be one of {FIRE_CLASSES}")
    tail = min(n_tokens, TRIGGER_WINDOW)
    return ["listen"] * (n_tokens - tail) + [turn_type] * tail


def trigger_window_of(n_frames: int) -> tuple[int, int]:
    """0-based inclusive [t_s, t_e] covering the final trigger frames."""
    return max(0, n_frames - TRIGGER_WINDOW), n_frames - 1


def classify_outcome(fire: FireDecision, truth: str, trigger_window: tuple[int, int]) -> str:
    if truth not in FIRE_CLASSES:
        raise ValueError(f"truth must be one of {FIRE_CLASSES}")
    if not fire.fired:
        return "missed"
    t_s, _ = trigger_window
    if fire.frame_index < t_s:
        return "early"
    return "correct" if fire.fire_class == truth else "confused"


OUTCOME_CLASSES = ("correct", "early", "confused", "missed")


@dataclass(frozen=True)
class OutcomeCounts:
    correct: int = 0
    early: int = 0
    confused: int = 0
    missed: int = 0

    @property
    def total(self) -> int:
        return self.correct + self.early + self.confused + self.missed

    def pct(self, outcome: str) -> float:
        if self.total == 0:
            return 0.0
        return 100.0 * getattr(self, outcome) / self.total

    @property
    def binary_accuracy(self) -> float:
        return self.pct("correct") + self.pct("confused")

    def as_percentages(self) -> dict[str, float]:
        out = {name: self.pct(name) for name in OUTCOME_CLASSES}
        out["binary"] = self.binary_accuracy
        return out


def binary_accuracy(correct_pct: float, confused_pct: float) -> float:
    """Binary collapse: a fire in the window counts regardless of class."""
    return correct_pct + confused_pct


@dataclass(frozen=True)
class OutcomeReport:
    per_truth: dict[str, OutcomeCounts] = field(default_factory=dict)

    def as_table(self) -> dict[str, dict[str, float]]:
        return {truth: counts.as_percentages() for truth, counts in self.per_truth.items()}


def evaluate_set(
    streams: Iterable[tuple[Sequence[ProbFrame], str]], cfg: StrategyConfig
) -> OutcomeReport:
    tallies: dict[str, dict[str, int]] = {}
    for frames, truth in streams:
        fire = run_stream(frames, cfg)
        outcome = classify_outcome(fire, truth, trigger_window_of(len(frames)))
        tallies.setdefault(truth, {name: 0 for name in OUTCOME_CLASSES})[outcome] += 1
    return OutcomeReport({truth: OutcomeCounts(**counts) for truth, counts in tallies.items()})


def sweep_thresholds(
    streams: Sequence[tuple[Sequence[ProbFrame], str]],
    strategy: str,
    te_values: Sequence[float],
    bi_values: Sequence[float],
    window: int = TRIGGER_WINDOW,
) -> list[dict[str, object]]:
    rows: list[dict[str, object]] = []
    for te in te_values:
        for bi in bi_values:
            if not 0 < bi < te:
                continue
            cfg = StrategyConfig(strategy, window=window, t_turnend=te, t_bargein=bi)
            report = evaluate_set(streams, cfg)
            rows.append({"t_turnend": te, "t_bargein": bi, "table": report.as_table()})
    return rows


# --- stream I/O ----------------------------------------------------------------


@dataclass(frozen=True)
class LabeledStream:
    stream_id: str
    truth: str
    frames: tuple[ProbFrame, ...]


def read_streams(path: str | Path) -> list[LabeledStream]:
    """Newline-delimited records {stream_id, t, truth, p_listen, p_turnend, p_bargein}."""
    grouped: dict[str, list[tuple[int, ProbFrame]]] = {}
    truths: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            sid = str(rec.get("stream_id", "0"))
            frame = ProbFrame(rec["p_listen"], rec["p_turnend"], rec["p_bargein"])
            grouped.setdefault(sid, []).append((int(rec.get("t", line_no)), frame))
            if "truth" in rec:
                prev = truths.setdefault(sid, rec["truth"])
                if prev != rec["truth"]:
                    raise ValueError(f"stream {sid} carries conflicting truth labels")
    out: list[LabeledStream] = []
    for sid, rows in grouped.items():
        if sid not in truths:
            raise ValueError(f"stream {sid} has no truth label")
        rows.sort(key=lambda r: r[0])
        out.append(LabeledStream(sid, truths[sid], tuple(frame for _, frame in rows)))
    return out


def format_report(report: OutcomeReport, cfg: StrategyConfig) -> dict[str, object]:
    return {
        "strategy": cfg.strategy,
        "window": cfg.window,
        "thresholds": {"turnend": cfg.t_turnend, "bargein": cfg.t_bargein},
        "rows": report.as_table(),
    }
