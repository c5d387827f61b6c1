"""JSON file formats for manifests, case logs, and corpus directories.

A corpus directory looks like:

    corpus/
      manifest.json          schema_version 1
      cases/case_0000.json   one document per CaseLog
      traces/...             optional generator ground-truth traces

Times are always integer seconds; events are stored by activity name and
resolved to catalog ids at load time.
"""

from __future__ import annotations

import json
from pathlib import Path

from .domain import (
    ActivityCatalog,
    ActivityEvent,
    CaseLog,
    CaseValidationError,
    DynamicContextRecord,
    Manifest,
    StaticContext,
    validate_case,
)

SCHEMA_VERSION = 1


def manifest_to_dict(manifest: Manifest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "catalog": list(manifest.catalog.labels),
        "vocabularies": {k: list(v) for k, v in manifest.vocabularies.items()},
        "static_numeric": list(manifest.static_numeric),
        "dynamic_numeric": list(manifest.dynamic_numeric),
        "static_categorical": list(manifest.static_categorical),
        "dynamic_categorical": list(manifest.dynamic_categorical),
    }


def manifest_from_dict(doc: dict) -> Manifest:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema_version {doc.get('schema_version')}")
    return Manifest(
        catalog=ActivityCatalog(tuple(doc["catalog"])),
        vocabularies={k: tuple(v) for k, v in doc["vocabularies"].items()},
        static_numeric=tuple(doc["static_numeric"]),
        dynamic_numeric=tuple(doc["dynamic_numeric"]),
        static_categorical=tuple(doc["static_categorical"]),
        dynamic_categorical=tuple(doc["dynamic_categorical"]),
    )


def case_to_dict(case: CaseLog, catalog: ActivityCatalog) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "case_id": case.case_id,
        "duration_s": case.duration_s,
        "static": {
            "age": case.static.age,
            "gcs": case.static.gcs,
            "ais": case.static.ais,
            "heart_rate": case.static.heart_rate,
            "systolic_bp": case.static.systolic_bp,
            "injury_type": case.static.injury_type,
        },
        "vitals": [
            {
                "t_s": r.t_s,
                "heart_rate": r.heart_rate,
                "respiratory_rate": r.respiratory_rate,
                "systolic_bp": r.systolic_bp,
                "diastolic_bp": r.diastolic_bp,
                "oxygen_saturation": r.oxygen_saturation,
                "fio2": r.fio2,
            }
            for r in case.vitals
        ],
        "events": [
            {
                "label": catalog.labels[e.label_id],
                "start_s": e.start_s,
                "end_s": e.end_s,
            }
            for e in case.events
        ],
    }


def case_from_dict(doc: dict, catalog: ActivityCatalog) -> CaseLog:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported case schema_version {doc.get('schema_version')}")
    events = []
    for ev in doc["events"]:
        idx = catalog.label_index(ev["label"])
        if idx is None:
            raise CaseValidationError(f"{doc['case_id']}: unknown activity {ev['label']!r}")
        events.append(ActivityEvent(idx, int(ev["start_s"]), int(ev["end_s"])))
    case = CaseLog(
        case_id=doc["case_id"],
        static=StaticContext(**doc["static"]),
        vitals=tuple(
            DynamicContextRecord(**{**r, "t_s": int(r["t_s"])}) for r in doc["vitals"]
        ),
        events=tuple(events),
        duration_s=int(doc["duration_s"]),
    )
    return validate_case(case, catalog)


def save_corpus(corpus_dir, manifest: Manifest, cases, traces=None) -> None:
    corpus_dir = Path(corpus_dir)
    (corpus_dir / "cases").mkdir(parents=True, exist_ok=True)
    _dump(corpus_dir / "manifest.json", manifest_to_dict(manifest))
    for case in cases:
        _dump(corpus_dir / "cases" / f"{case.case_id}.json", case_to_dict(case, manifest.catalog))
    if traces is not None:
        (corpus_dir / "traces").mkdir(exist_ok=True)
        for case_id, trace in traces.items():
            _dump(corpus_dir / "traces" / f"{case_id}.json", trace)


def load_manifest(corpus_dir) -> Manifest:
    with open(Path(corpus_dir) / "manifest.json") as fh:
        return manifest_from_dict(json.load(fh))


def load_corpus(corpus_dir) -> tuple[Manifest, list[CaseLog]]:
    """Load manifest plus all cases, sorted by case_id for determinism."""
    corpus_dir = Path(corpus_dir)
    manifest = load_manifest(corpus_dir)
    cases = []
    for path in sorted((corpus_dir / "cases").glob("*.json")):
        with open(path) as fh:
            cases.append(case_from_dict(json.load(fh), manifest.catalog))
    if not cases:
        raise ValueError(f"no case files under {corpus_dir}/cases")
    return manifest, cases


def _dump(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
