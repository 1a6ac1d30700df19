"""Census-weighted, demographically stratified speaker sampling.

User voices come from a three-stage draw: accent pool by configured weights,
then country uniform within the pool, then a speaker stratified so the four
age bins land at 25% each and genders at 50/50. Assistant voices come from a
fixed pool of ten native speakers, disjoint from the user pool.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CorpusError, SpeakerProfile

log = logging.getLogger(__name__)

ACCENT_POOLS = ("native", "african", "indian", "asian")
AGE_BINS = ("10s", "20-30s", "40-50s", "60+")
GENDERS = ("female", "male")

MAX_REF_DURATION_S = 25.0
_COUNTRY_RETRIES = 1000


class ConfigError(CorpusError):
    pass


class SamplingError(CorpusError):
    pass


def age_bin_of(age: int) -> str:
    if age < 10:
        raise ValueError(f"age {age} below the youngest bin")
    if age < 20:
        return "10s"
    if age < 40:
        return "20-30s"
    if age < 60:
        return "40-50s"
    return "60+"


@dataclass(frozen=True)
class PoolWeights:
    native: float = 0.7457
    african: float = 0.1619
    indian: float = 0.0092
    asian: float = 0.0832

    def __post_init__(self) -> None:
        for name in ACCENT_POOLS:
            if getattr(self, name) < 0:
                raise ConfigError(f"weight for {name} must be non-negative")
        if self.total() <= 0:
            raise ConfigError("weights must not all be zero")

    def total(self) -> float:
        return self.native + self.african + self.indian + self.asian

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in ACCENT_POOLS}


@dataclass(frozen=True)
class Pool:
    """Immutable user-speaker index keyed by (accent_pool, country, age_bin, gender)."""

    strata: Mapping[tuple[str, str, str, str], tuple[SpeakerProfile, ...]]
    countries: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.strata.values())

    def accent_pools(self) -> tuple[str, ...]:
        return tuple(p for p in ACCENT_POOLS if p in self.countries)


def build_pool(
    candidates: Iterable[SpeakerProfile],
    assistant_ids: frozenset[str] | set[str] = frozenset(),
) -> Pool:
    strata: dict[tuple[str, str, str, str], list[SpeakerProfile]] = {}
    countries: dict[str, set[str]] = {}
    for sp in candidates:
        if sp.ref_duration_s is not None and sp.ref_duration_s > MAX_REF_DURATION_S:
            log.info("speaker %s excluded: reference %.1fs over the %.0fs cap",
                     sp.speaker_id, sp.ref_duration_s, MAX_REF_DURATION_S)
            continue
        if sp.speaker_id in assistant_ids:
            log.info("speaker %s excluded: reserved for the assistant pool", sp.speaker_id)
            continue
        if sp.accent_pool not in ACCENT_POOLS:
            raise ConfigError(f"unknown accent pool {sp.accent_pool!r} for {sp.speaker_id}")
        expected = age_bin_of(sp.age)
        if sp.age_bin != expected:
            log.warning("speaker %s age_bin %r disagrees with age %d; using %r",
                        sp.speaker_id, sp.age_bin, sp.age, expected)
            sp = SpeakerProfile(
                speaker_id=sp.speaker_id, accent_pool=sp.accent_pool, country=sp.country,
                age=sp.age, age_bin=expected, gender=sp.gender,
                ref_audio=sp.ref_audio, ref_duration_s=sp.ref_duration_s,
            )
        key = (sp.accent_pool, sp.country, sp.age_bin, sp.gender)
        strata.setdefault(key, []).append(sp)
        countries.setdefault(sp.accent_pool, set()).add(sp.country)
    if not strata:
        raise ConfigError("speaker pool is empty after filtering")
    return Pool(
        strata={k: tuple(v) for k, v in strata.items()},
        countries={p: tuple(sorted(c)) for p, c in countries.items()},
    )


def _weighted_choice(weights: Sequence[tuple[str, float]], rng: random.Random) -> str:
    total = sum(w for _, w in weights)
    r = rng.random() * total
    acc = 0.0
    for name, w in weights:
        acc += w
        if r < acc:
            return name
    return weights[-1][0]


def sample_user_speaker(pool: Pool, weights: PoolWeights, rng: random.Random) -> SpeakerProfile:
    """Three-stage draw; an empty stratum triggers bounded country resampling."""
    present = [(p, getattr(weights, p)) for p in pool.accent_pools() if getattr(weights, p) > 0]
    if not present:
        raise SamplingError("no accent pool has both weight and speakers")
    accent = _weighted_choice(present, rng)
    age_bin = rng.choice(AGE_BINS)
    gender = rng.choice(GENDERS)
    countries = pool.countries[accent]
    for _ in range(_COUNTRY_RETRIES):
        country = rng.choice(countries)
        stratum = pool.strata.get((accent, country, age_bin, gender))
        if stratum:
            return rng.choice(stratum)
    raise SamplingError(
        f"no speaker found for pool={accent}, bin={age_bin}, gender={gender} "
        f"after {_COUNTRY_RETRIES} country draws"
    )


def validate_assistant_pool(profiles: Sequence[SpeakerProfile]) -> None:
    if len(profiles) != 10:
        raise ConfigError(f"assistant pool must hold exactly 10 speakers, got {len(profiles)}")
    if any(sp.accent_pool != "native" for sp in profiles):
        raise ConfigError("assistant pool must be all native-accent speakers")
    females = sum(1 for sp in profiles if sp.gender == "female")
    if females != 5:
        raise ConfigError(f"assistant pool must be 5 female / 5 male, got {females} female")
    if len({sp.speaker_id for sp in profiles}) != 10:
        raise ConfigError("assistant pool speaker ids must be unique")


def assign_assistant_speaker(
    assistant_pool: Sequence[SpeakerProfile], rng: random.Random
) -> SpeakerProfile:
    validate_assistant_pool(assistant_pool)
    return rng.choice(list(assistant_pool))


# --- manifests ----------------------------------------------------------------


def _profile_from_dict(row: Mapping[str, object]) -> SpeakerProfile:
    age = int(row["age"])  # type: ignore[arg-type]
    return SpeakerProfile(
        speaker_id=str(row["speaker_id"]),
        accent_pool=str(row["accent_pool"]).lower(),
        country=str(row["country"]),
        age=age,
        age_bin=str(row.get("age_bin") or age_bin_of(age)),
        gender=str(row["gender"]).lower(),
        ref_audio=str(row["ref_audio"]) if row.get("ref_audio") else None,
        ref_duration_s=float(row["ref_duration_s"]) if row.get("ref_duration_s") is not None else None,  # type: ignore[arg-type]
    )


def _profile_to_dict(sp: SpeakerProfile) -> dict[str, object]:
    out: dict[str, object] = {
        "speaker_id": sp.speaker_id,
        "accent_pool": sp.accent_pool,
        "country": sp.country,
        "age": sp.age,
        "age_bin": sp.age_bin,
        "gender": sp.gender,
    }
    if sp.ref_audio is not None:
        out["ref_audio"] = sp.ref_audio
    if sp.ref_duration_s is not None:
        out["ref_duration_s"] = sp.ref_duration_s
    return out


def load_speaker_manifest(path: str | Path) -> list[SpeakerProfile]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ConfigError("speaker manifest must be a JSON array of profiles")
    return [_profile_from_dict(row) for row in data]


def save_speaker_manifest(profiles: Sequence[SpeakerProfile], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([_profile_to_dict(sp) for sp in profiles], indent=2) + "\n",
        encoding="utf-8",
    )
