"""Shared fixtures: dialogue builders and speaker manifests."""

from __future__ import annotations

import pytest

from todvoice.corpus import Dialogue, Goal, Role, SubGoal, Turn
from todvoice.speakers import ACCENT_POOLS, AGE_BINS, GENDERS, SpeakerProfile

_BIN_AGE = {"10s": 15, "20-30s": 28, "40-50s": 45, "60+": 67}


def make_goal(**constraints: str) -> Goal:
    constraints = constraints or {"food": "italian"}
    rendered = ", ".join(f"{k} = {v}" for k, v in constraints.items())
    return Goal(
        text=f"You want to find a restaurant with {rendered}.",
        sub_goals=(SubGoal(domain="restaurant", intent="find_restaurant",
                           constraints=dict(constraints), requests=("phone",)),),
    )


def make_dialogue(texts=None, dialogue_id="dlg-0001", spans=None, source="generic") -> Dialogue:
    """Alternating dialogue from (role, text) pairs; spans maps turn index to span tuples."""
    if texts is None:
        texts = [
            (Role.USER, "I want a cheap italian restaurant please."),
            (Role.ASSISTANT, "Sure, which part of town?"),
            (Role.USER, "The centre would be great."),
            (Role.ASSISTANT, "Booked. Anything else?"),
        ]
    spans = spans or {}
    turns = tuple(
        Turn(index=i, role=role, text=text, slot_spans=tuple(spans.get(i, ())))
        for i, (role, text) in enumerate(texts)
    )
    return Dialogue(dialogue_id=dialogue_id, source=source, goal=make_goal(), turns=turns)


def user_pool_profiles(countries=("US", "NG"), duration=12.0) -> list[SpeakerProfile]:
    """One speaker per (pool, country, bin, gender) cell."""
    out = []
    sid = 0
    for pool in ACCENT_POOLS:
        for age_bin in AGE_BINS:
            for gender in GENDERS:
                for country in countries:
                    out.append(SpeakerProfile(
                        speaker_id=f"spk{sid:04d}", accent_pool=pool, country=country,
                        age=_BIN_AGE[age_bin], age_bin=age_bin, gender=gender,
                        ref_audio=f"ref/{sid:04d}.wav", ref_duration_s=duration))
                    sid += 1
    return out


def assistant_pool_profiles() -> list[SpeakerProfile]:
    return [
        SpeakerProfile(speaker_id=f"asst{i:02d}", accent_pool="native", country="US",
                       age=30, age_bin="20-30s", gender="female" if i < 5 else "male",
                       ref_audio=f"ref/a{i:02d}.wav", ref_duration_s=10.0)
        for i in range(10)
    ]


@pytest.fixture
def dialogue() -> Dialogue:
    return make_dialogue()


@pytest.fixture
def user_pool() -> list[SpeakerProfile]:
    return user_pool_profiles()


@pytest.fixture
def assistant_pool() -> list[SpeakerProfile]:
    return assistant_pool_profiles()
