import pytest

from minutecast.dataset import (
    case_from_dict,
    case_to_dict,
    manifest_from_dict,
    manifest_to_dict,
)
from minutecast.domain import (
    ActivityCatalog,
    ActivityEvent,
    CaseValidationError,
    DynamicContextRecord,
    Manifest,
    validate_case,
)

from conftest import make_case, make_record


class TestActivityCatalog:
    def test_label_index_round_trip(self):
        catalog = ActivityCatalog(("a", "b", "c"))
        for i, name in enumerate(catalog.labels):
            assert catalog.label_index(name) == i

    def test_lookup(self):
        catalog = ActivityCatalog(("A", "B", "C"))
        assert catalog.label_index("B") == 1
        assert catalog.embedding_id("B") == 2
        assert catalog.label_index("Z") is None

    def test_sixty_one_labels(self):
        names = tuple(f"act{i}" for i in range(61))
        catalog = ActivityCatalog(names)
        assert catalog.n == 61
        assert catalog.label_index(names[-1]) == 60

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(ValueError):
            ActivityCatalog(("a", "a"))
        with pytest.raises(ValueError):
            ActivityCatalog(("a", ""))
        with pytest.raises(ValueError):
            ActivityCatalog(())

    def test_hash_tracks_order(self):
        a = ActivityCatalog(("a", "b"))
        b = ActivityCatalog(("b", "a"))
        assert a.content_hash() != b.content_hash()
        assert a.content_hash() == ActivityCatalog(("a", "b")).content_hash()


class TestValidateCase:
    def setup_method(self):
        self.catalog = ActivityCatalog(("a", "b", "c"))

    def test_inverted_interval(self):
        case = make_case(events=[(0, 50, 40)])
        with pytest.raises(CaseValidationError, match="inverted"):
            validate_case(case, self.catalog)

    def test_vitals_resorted_stably(self):
        case = make_case(vitals=[make_record(300), make_record(100), make_record(300, heart_rate=80.0)])
        out = validate_case(case, self.catalog)
        assert [r.t_s for r in out.vitals] == [100, 300, 300]
        # stable: the two t_s=300 records keep their relative order
        assert out.vitals[1].heart_rate is None
        assert out.vitals[2].heart_rate == 80.0

    def test_well_formed_unchanged(self):
        case = make_case(events=[(1, 10, 30)], vitals=[make_record(60), make_record(120)])
        assert validate_case(case, self.catalog) is case

    def test_idempotent(self):
        case = make_case(vitals=[make_record(300), make_record(100)])
        once = validate_case(case, self.catalog)
        assert validate_case(once, self.catalog) is once

    def test_unknown_label(self):
        case = make_case(events=[(7, 0, 10)])
        with pytest.raises(CaseValidationError, match="unknown label"):
            validate_case(case, self.catalog)

    def test_event_beyond_duration(self):
        case = make_case(duration_s=600, events=[(0, 500, 700)])
        with pytest.raises(CaseValidationError, match="beyond"):
            validate_case(case, self.catalog)

    def test_negative_time(self):
        case = make_case(events=[(0, -5, 10)])
        with pytest.raises(CaseValidationError, match="negative"):
            validate_case(case, self.catalog)

    def test_nonpositive_duration(self):
        case = make_case(duration_s=0)
        with pytest.raises(CaseValidationError, match="duration"):
            validate_case(case, self.catalog)


class TestSerialization:
    def test_manifest_round_trip(self, toy_manifest):
        doc = manifest_to_dict(toy_manifest)
        again = manifest_from_dict(doc)
        assert again.catalog.labels == toy_manifest.catalog.labels
        assert again.catalog.content_hash() == toy_manifest.catalog.content_hash()
        assert manifest_to_dict(again) == doc

    def test_case_round_trip(self, toy_manifest):
        case = make_case(
            events=[(1, 10, 30), (0, 20, 25)],
            vitals=[make_record(90, heart_rate=90.0, fio2="room_air")],
        )
        doc = case_to_dict(case, toy_manifest.catalog)
        again = case_from_dict(doc, toy_manifest.catalog)
        assert case_to_dict(again, toy_manifest.catalog) == doc

    def test_case_rejects_unknown_activity(self, toy_manifest):
        doc = case_to_dict(make_case(), toy_manifest.catalog)
        doc["events"] = [{"label": "nope", "start_s": 0, "end_s": 5}]
        with pytest.raises(CaseValidationError, match="unknown activity"):
            case_from_dict(doc, toy_manifest.catalog)

    def test_manifest_requires_missing_token(self):
        with pytest.raises(ValueError, match="missing"):
            Manifest(
                catalog=ActivityCatalog(("a",)),
                vocabularies={"injury_type": ("blunt",), "fio2": ("room_air", "missing")},
            )
