import dataclasses

import numpy as np
import pytest

from minutecast import harness, synth
from minutecast.domain import (
    ActivityCatalog,
    ActivityEvent,
    CaseLog,
    DynamicContextRecord,
    Manifest,
    StaticContext,
)


@pytest.fixture(scope="session")
def scenario():
    return synth.default_scenario()


@pytest.fixture(scope="session")
def small_corpus(scenario):
    """30 generated cases with a 24/3/3 split, shared across pipeline tests."""
    manifest, cases, traces = synth.generate_dataset(scenario, 30, seed=11)
    data = harness.prepare(manifest, cases, ratio=(8, 1, 1), seed=3, k=5)
    return {"manifest": manifest, "cases": cases, "traces": traces, "data": data,
            "scenario": scenario}


@pytest.fixture(scope="session")
def tiny_cases(scenario):
    """Five short cases for the overfit fixture."""
    tiny = dataclasses.replace(
        scenario,
        duration_mean_min=8.0,
        duration_sd_min=2.0,
        duration_min_min=5.0,
        duration_max_min=12.0,
    )
    return synth.generate_dataset(tiny, 5, seed=11)


@pytest.fixture
def toy_manifest():
    """Three activities, one per-field vocabulary, for hand-checked examples."""
    return Manifest(
        catalog=ActivityCatalog(("alpha", "beta", "gamma")),
        vocabularies={
            "injury_type": ("blunt", "penetrating", "burn", "missing"),
            "fio2": ("room_air", "face_mask", "missing"),
        },
    )


def make_case(case_id="c1", duration_s=600, events=(), vitals=(), static=None):
    return CaseLog(
        case_id=case_id,
        static=static or StaticContext(age=30.0, gcs=14.0, injury_type="blunt"),
        vitals=tuple(vitals),
        events=tuple(ActivityEvent(*e) for e in events),
        duration_s=duration_s,
    )


def make_record(t_s, **kwargs):
    return DynamicContextRecord(t_s=t_s, **kwargs)
