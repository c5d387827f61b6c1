import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from minutecast import harness
from minutecast.dataset import save_corpus
from minutecast.features import stack_labels
from minutecast.metrics import decide
from minutecast.service import DecisionService, create_app
from minutecast.training import TrainConfig, compute_label_weights, save_checkpoint, train_model


@pytest.fixture(scope="module")
def served(small_corpus, tmp_path_factory):
    """A corpus on disk, a quickly trained calibrated model, and the app."""
    root = tmp_path_factory.mktemp("served")
    manifest = small_corpus["manifest"]
    cases = small_corpus["cases"]
    data = small_corpus["data"]
    save_corpus(root / "corpus", manifest, cases, small_corpus["traces"])

    cfg = TrainConfig(seed=3, max_epochs=15, patience=15, hidden=(32, 16))
    model, _ = train_model(data.train, data.validation, manifest, cfg)
    thresholds = harness.calibrate_on(model, data.validation, cfg.mask)
    report, preds, probs = harness.evaluate_model(
        model, data.test, cfg.mask, thresholds, manifest.catalog.labels, "test"
    )
    alpha = compute_label_weights(stack_labels(data.train))
    ckpt = root / "model.ckpt"
    save_checkpoint(ckpt, model, cfg, data.stats, manifest.catalog.content_hash(),
                    data.seed, alpha)
    (root / "thresholds.json").write_text(json.dumps(thresholds.to_dict()))
    (root / "report.json").write_text(json.dumps(report.to_dict()))

    service = DecisionService(
        root / "corpus", checkpoint=ckpt,
        thresholds=root / "thresholds.json", report=root / "report.json",
    )
    client = TestClient(create_app(service))
    return {
        "service": service, "client": client, "data": data, "cfg": cfg,
        "model": model, "thresholds": thresholds, "root": root, "manifest": manifest,
    }


def replay_session(client, case_id):
    resp = client.post("/sessions", json={"mode": "replay", "case_id": case_id})
    assert resp.status_code == 200
    return resp.json()["session_id"]


class TestBasics:
    def test_catalog(self, served):
        doc = served["client"].get("/catalog").json()
        assert doc["labels"] == list(served["manifest"].catalog.labels)
        assert "injury_type" in doc["vocabularies"]

    def test_cases_listing(self, served):
        cases = served["client"].get("/cases").json()
        assert len(cases) == 30
        assert {"case_id", "duration_s", "minutes"} <= set(cases[0])

    def test_unknown_case(self, served):
        resp = served["client"].post("/sessions", json={"mode": "replay", "case_id": "nope"})
        assert resp.status_code == 404

    def test_unknown_model(self, served):
        resp = served["client"].post(
            "/sessions", json={"mode": "replay", "case_id": "case_0000", "model_id": "zzz"}
        )
        assert resp.status_code == 404

    def test_unknown_session(self, served):
        assert served["client"].post("/sessions/s999999/tick").status_code == 404

    def test_load_second_model(self, served):
        resp = served["client"].post("/models", json={
            "checkpoint": str(served["root"] / "model.ckpt"),
            "thresholds": str(served["root"] / "thresholds.json"),
            "model_id": "twin",
        })
        assert resp.status_code == 200
        ids = {m["model_id"] for m in served["client"].get("/models").json()}
        assert {"default", "twin"} <= ids


class TestReplayParity:
    def test_predicted_sets_match_offline_for_every_minute(self, served):
        data = served["data"]
        client = served["client"]
        labels = served["manifest"].catalog.labels
        offline_by_case = {}
        report, preds, probs = harness.evaluate_model(
            served["model"], data.test, served["cfg"].mask,
            served["thresholds"], labels, "test",
        )
        for i, sample in enumerate(data.test):
            offline_by_case.setdefault(sample.case_id, {})[sample.minute_index] = {
                labels[j] for j in range(len(labels)) if preds[i, j]
            }
        for case_id, minutes in offline_by_case.items():
            sid = replay_session(client, case_id)
            for t in sorted(minutes):
                frame = client.post(f"/sessions/{sid}/tick").json()
                assert frame["minute"] == t
                assert set(frame["predicted"]) == minutes[t], (case_id, t)

    def test_minute_zero_context(self, served):
        sid = replay_session(served["client"], "case_0000")
        frame = served["client"].post(f"/sessions/{sid}/tick").json()
        assert frame["minute"] == 0
        assert frame["context"]["last_k"] == []

    def test_end_of_case(self, served):
        case = served["service"].cases["case_0000"]
        sid = replay_session(served["client"], "case_0000")
        for _ in range(case.n_minutes):
            assert served["client"].post(f"/sessions/{sid}/tick").status_code == 200
        resp = served["client"].post(f"/sessions/{sid}/tick")
        assert resp.status_code == 409
        assert "end-of-case" in resp.json()["detail"]

    def test_frame_internally_consistent(self, served):
        sid = replay_session(served["client"], "case_0001")
        for _ in range(3):
            frame = served["client"].post(f"/sessions/{sid}/tick").json()
            probs = np.array(frame["probabilities"])
            taus = np.array(frame["thresholds"])
            want = set(np.array(served["manifest"].catalog.labels)[probs >= taus])
            assert set(frame["predicted"]) == want

    def test_truth_and_correctness_in_replay(self, served):
        data = served["data"]
        case_id = data.split.test[0]
        case = served["service"].cases[case_id]
        sid = replay_session(served["client"], case_id)
        frame = served["client"].post(f"/sessions/{sid}/tick").json()
        from minutecast.features import label_vector

        labels = served["manifest"].catalog.labels
        truth = label_vector(case.events, 0, len(labels))
        assert set(frame["true"]) == {labels[i] for i in range(len(labels)) if truth[i]}
        for name, state in frame["correctness"].items():
            p = name in frame["predicted"]
            t = name in frame["true"]
            assert state == ("TP" if p and t else "FP" if p else "FN" if t else "TN")


class TestOverrides:
    def test_vitals_override_affects_next_tick(self, served):
        client = served["client"]
        case_id = "case_0002"
        sid_a = replay_session(client, case_id)
        sid_b = replay_session(client, case_id)
        for _ in range(3):
            client.post(f"/sessions/{sid_a}/tick")
            client.post(f"/sessions/{sid_b}/tick")
        resp = client.post(f"/sessions/{sid_b}/overrides",
                           json={"kind": "vitals", "fields": {"systolic_bp": 70.0}})
        assert resp.status_code == 200
        oid = resp.json()["override_id"]
        plain = client.post(f"/sessions/{sid_a}/tick").json()
        doctored = client.post(f"/sessions/{sid_b}/tick").json()
        assert doctored["context"]["vitals"]["systolic_bp"] == 70.0
        assert plain["context"]["vitals"]["systolic_bp"] != 70.0
        assert doctored["probabilities"] != plain["probabilities"]
        # removal restores parity with the untouched replay
        client.delete(f"/sessions/{sid_b}/overrides/{oid}")
        after_a = client.post(f"/sessions/{sid_a}/tick").json()
        after_b = client.post(f"/sessions/{sid_b}/tick").json()
        assert after_a["probabilities"] == after_b["probabilities"]
        assert after_a["predicted"] == after_b["predicted"]

    def test_inject_event_enters_process_context(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0003")
        for _ in range(2):
            client.post(f"/sessions/{sid}/tick")
        client.post(f"/sessions/{sid}/overrides", json={
            "kind": "inject_event", "activity": "iv placement",
            "start_s": 130, "end_s": 150,
        })
        frame = client.post(f"/sessions/{sid}/tick").json()  # minute 2, cutoff 120... injected at 130 not yet visible
        frame = client.post(f"/sessions/{sid}/tick").json()  # minute 3, cutoff 180
        assert "iv placement" in frame["context"]["last_k"]

    def test_suppress_event_leaves_ground_truth(self, served):
        client = served["client"]
        service = served["service"]
        labels = served["manifest"].catalog.labels
        case_id, target = None, None
        for cid, case in sorted(service.cases.items()):
            for ev in case.events:
                if ev.start_s >= 60 and labels[ev.label_id] and ev.start_s < 240:
                    case_id, target = cid, ev
                    break
            if target:
                break
        name = labels[target.label_id]
        sid = replay_session(client, case_id)
        client.post(f"/sessions/{sid}/overrides", json={
            "kind": "suppress_event", "activity": name, "start_s": target.start_s,
        })
        frames = []
        target_minute = target.start_s // 60
        for _ in range(target_minute + 2):
            frames.append(client.post(f"/sessions/{sid}/tick").json())
        after = frames[target_minute + 1]
        assert name not in after["context"]["last_k"]
        truth_minutes = [f for f in frames if name in f.get("true", [])]
        assert truth_minutes, "suppressed event must stay in ground truth"

    def test_bad_overrides_rejected(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0004")
        assert client.post(f"/sessions/{sid}/overrides",
                           json={"kind": "vitals", "fields": {"bogus": 1}}).status_code == 400
        assert client.post(f"/sessions/{sid}/overrides",
                           json={"kind": "inject_event", "activity": "nope",
                                 "start_s": 0, "end_s": 10}).status_code == 400
        assert client.post(f"/sessions/{sid}/overrides",
                           json={"kind": "teleport"}).status_code == 400
        assert client.delete(f"/sessions/{sid}/overrides/ov999").status_code == 404


class TestLiveMode:
    def test_record_event_visible_next_minute(self, served):
        client = served["client"]
        resp = client.post("/sessions", json={
            "mode": "live", "static": {"age": 40, "gcs": 6, "injury_type": "blunt"},
        })
        sid = resp.json()["session_id"]
        client.post(f"/sessions/{sid}/tick")
        client.post(f"/sessions/{sid}/tick")
        assert client.post(f"/sessions/{sid}/events", json={
            "activity": "intubation prep", "start_s": 130, "end_s": 180,
        }).status_code == 200
        client.post(f"/sessions/{sid}/tick")  # minute 2, cutoff 120
        frame = client.post(f"/sessions/{sid}/tick").json()  # minute 3, cutoff 180
        assert "intubation prep" in frame["context"]["last_k"]
        assert "true" not in frame  # live mode has no ground truth

    def test_record_event_rejected_in_replay(self, served):
        sid = replay_session(served["client"], "case_0005")
        resp = served["client"].post(f"/sessions/{sid}/events", json={
            "activity": "intubation prep", "start_s": 0, "end_s": 10,
        })
        assert resp.status_code == 400

    def test_unknown_activity_rejected(self, served):
        resp = served["client"].post("/sessions", json={"mode": "live"})
        sid = resp.json()["session_id"]
        assert served["client"].post(f"/sessions/{sid}/events", json={
            "activity": "zzz", "start_s": 0, "end_s": 5,
        }).status_code == 400


class TestFramesAndStream:
    def test_frames_endpoint(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0006")
        for _ in range(3):
            client.post(f"/sessions/{sid}/tick")
        frames = client.get(f"/sessions/{sid}/frames").json()
        assert [f["minute"] for f in frames] == [0, 1, 2]

    def test_stream_replays_frames_in_order(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0007")
        for _ in range(3):
            client.post(f"/sessions/{sid}/tick")
        got, events = [], []
        with client.stream("GET", f"/sessions/{sid}/stream",
                           params={"follow": "false"}) as resp:
            assert resp.headers["content-type"].startswith("text/event-stream")
            event = None
            for line in resp.iter_lines():
                if line.startswith("event:"):
                    event = line.split(":", 1)[1].strip()
                    events.append(event)
                elif line.startswith("data:") and event == "frame":
                    got.append(json.loads(line.split(":", 1)[1]))
        assert [f["minute"] for f in got] == [0, 1, 2]
        assert events[-1] == "end"

    def test_stream_bounded_by_max_frames(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0010")
        for _ in range(4):
            client.post(f"/sessions/{sid}/tick")
        got = []
        with client.stream("GET", f"/sessions/{sid}/stream",
                           params={"max_frames": 2}) as resp:
            event = None
            for line in resp.iter_lines():
                if line.startswith("event:"):
                    event = line.split(":", 1)[1].strip()
                elif line.startswith("data:") and event == "frame":
                    got.append(json.loads(line.split(":", 1)[1]))
        assert [f["minute"] for f in got] == [0, 1]

    def test_two_subscribers_identical(self, served):
        service = served["service"]
        sid = replay_session(served["client"], "case_0008")
        snap_a, q_a = service.subscribe(sid)
        snap_b, q_b = service.subscribe(sid)
        assert snap_a == snap_b == []
        ticker = threading.Thread(target=lambda: [service.tick(sid) for _ in range(3)])
        ticker.start()
        ticker.join()
        frames_a = [q_a.get(timeout=2) for _ in range(3)]
        frames_b = [q_b.get(timeout=2) for _ in range(3)]
        assert frames_a == frames_b
        assert [f["minute"] for f in frames_a] == [0, 1, 2]
        service.close_session(sid)
        assert q_a.get(timeout=2) is None  # close sentinel ends streams

    def test_closed_session_rejects_ticks(self, served):
        client = served["client"]
        sid = replay_session(client, "case_0009")
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.post(f"/sessions/{sid}/tick").status_code == 404


class TestTimelineReport:
    def test_eval_report_endpoint(self, served):
        doc = served["client"].get("/reports/eval").json()
        assert doc["split"] == "test"
        assert len(doc["per_label"]) == served["manifest"].catalog.n

    def test_timeline_endpoint(self, served):
        client = served["client"]
        case_id = served["data"].split.test[0]
        doc = client.get(f"/reports/timeline/{case_id}", params={"cutoff": 0.5}).json()
        case = served["service"].cases[case_id]
        assert doc["case_id"] == case_id
        assert len(doc["minutes"]) == case.n_minutes

    def test_unknown_case_404(self, served):
        assert served["client"].get("/reports/timeline/zzz").status_code == 404
