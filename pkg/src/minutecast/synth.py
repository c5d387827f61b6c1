"""Synthetic case generator with known ground-truth structure.

Cases are built on a minute grid: every activity starts on an exact minute
boundary and has a fixed duration (or runs to the end of the case), so each
occurrence labels a deterministic set of minutes. Three signal sources give
the pipeline something real to learn:

* phase templates -- activities with a typical start minute (a small hazard
  window of two or three minutes) and a per-case occurrence probability,
  optionally gated on static context (injury type, GCS);
* follow rules -- "B follows A after a fixed or small-range minute delay";
  rules with p=1 and a fixed delay are deterministic chains whose consequent
  is exactly predictable from the set of already-occurred activities;
* vitals episodes -- hypotension/hypoxia windows that are visible in the
  recorded vitals at least one full minute before their response activities
  start, so patient context genuinely adds predictive power over process
  context alone.

Every generated case passes domain validation, and a per-case trace records
which rules fired for oracle-style checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    ActivityCatalog,
    ActivityEvent,
    CaseLog,
    DynamicContextRecord,
    Manifest,
    MISSING,
    StaticContext,
    validate_case,
)

INJURY_TYPES = ("blunt", "penetrating", "fall", "burn")
FIO2_VALUES = ("room_air", "nasal_cannula", "face_mask", "bag_valve", "ventilator")

UNTIL_END = -1  # duration sentinel: activity runs to the end of the case


@dataclass(frozen=True)
class ActivityTemplate:
    name: str
    phase: str
    start_mean_min: float
    start_sd_min: float
    duration_s: int  # fixed seconds, or UNTIL_END
    base_p: float


@dataclass(frozen=True)
class StaticGate:
    """Replaces an activity's occurrence probability when a static condition
    holds (field op value, op in eq/le/ge)."""

    activity: str
    field: str
    op: str
    value: object
    p_when: float


@dataclass(frozen=True)
class FollowRule:
    """Consequent starts delay minutes after the antecedent's start minute."""

    antecedent: str
    consequent: str
    p: float
    delay_lo_min: int = 1
    delay_hi_min: int = 1
    duration_s: int = 59

    @property
    def deterministic(self) -> bool:
        return self.p >= 1.0 and self.delay_lo_min == self.delay_hi_min


@dataclass(frozen=True)
class EpisodeResponse:
    activity: str
    p: float
    delay_lo_min: int  # minutes after the onset minute; >= 1 so the
    delay_hi_min: int  # deteriorated vitals are visible at the cutoff first
    duration_s: int


@dataclass(frozen=True)
class VitalsEpisode:
    name: str
    p_case: float
    fields: dict  # field -> (lo, hi) value range while the episode is active
    onset_lo_min: float
    onset_hi_min: float
    dur_lo_min: float
    dur_hi_min: float
    responses: tuple[EpisodeResponse, ...]


@dataclass
class ScenarioConfig:
    """Full description of the generative process; JSON round-trippable."""

    activities: tuple[ActivityTemplate, ...]
    static_gates: tuple[StaticGate, ...]
    follow_rules: tuple[FollowRule, ...]
    episodes: tuple[VitalsEpisode, ...]
    injury_probs: tuple[float, ...] = (0.48, 0.32, 0.12, 0.08)
    low_gcs_p: float = 0.30
    duration_mean_min: float = 28.0
    duration_sd_min: float = 14.0
    duration_min_min: float = 5.0
    duration_max_min: float = 90.0
    vitals_interval_mean_s: float = 200.0
    vitals_interval_sd_s: float = 110.0
    vitals_interval_min_s: float = 30.0
    static_missing_p: float = 0.02
    vitals_missing_p: float = 0.03

    def __post_init__(self):
        names = [a.name for a in self.activities]
        if len(set(names)) != len(names):
            raise ValueError("duplicate activity template names")
        known = set(names)
        for rule in self.follow_rules:
            if rule.antecedent not in known or rule.consequent not in known:
                raise ValueError(f"follow rule references unknown activity: {rule}")
            if not 0 <= rule.p <= 1:
                raise ValueError(f"follow rule probability out of range: {rule}")
            if rule.delay_lo_min < 1 or rule.delay_hi_min < rule.delay_lo_min:
                raise ValueError(f"follow rule delay must satisfy 1 <= lo <= hi: {rule}")
        for gate in self.static_gates:
            if gate.activity not in known:
                raise ValueError(f"static gate references unknown activity: {gate}")
        for ep in self.episodes:
            for resp in ep.responses:
                if resp.activity not in known:
                    raise ValueError(f"episode response unknown activity: {resp}")
                if resp.delay_lo_min < 1 or resp.delay_hi_min < resp.delay_lo_min:
                    raise ValueError(
                        "episode response delay must be >= 1 minute so the "
                        "vitals deterioration is visible before the response"
                    )
        self._check_acyclic()

    def _check_acyclic(self):
        adj: dict[str, list[str]] = {}
        for rule in self.follow_rules:
            adj.setdefault(rule.antecedent, []).append(rule.consequent)
        state: dict[str, int] = {}

        def visit(node):
            state[node] = 1
            for nxt in adj.get(node, []):
                if state.get(nxt) == 1:
                    raise ValueError(f"follow-rule cycle through {nxt!r}")
                if state.get(nxt, 0) == 0:
                    visit(nxt)
            state[node] = 2

        for node in list(adj):
            if state.get(node, 0) == 0:
                visit(node)

    @property
    def catalog(self) -> ActivityCatalog:
        return ActivityCatalog(tuple(a.name for a in self.activities))

    def deterministic_labels(self) -> tuple[str, ...]:
        """Consequents of p=1 fixed-delay rules, in catalog order."""
        det = {r.consequent for r in self.follow_rules if r.deterministic}
        return tuple(a.name for a in self.activities if a.name in det)

    def chain_horizon_min(self, name: str) -> int:
        """Worst-case minutes needed after an activity's start for every
        consequent hanging off it (transitively) to fit."""
        horizon = 0
        for rule in self.follow_rules:
            if rule.antecedent == name:
                tail = 1 if rule.duration_s == UNTIL_END else -(-rule.duration_s // 60)
                horizon = max(
                    horizon,
                    rule.delay_hi_min + tail - 1 + self.chain_horizon_min(rule.consequent),
                )
        return horizon

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "activities": [vars(a) for a in self.activities],
            "static_gates": [vars(g) for g in self.static_gates],
            "follow_rules": [vars(r) for r in self.follow_rules],
            "episodes": [
                {
                    "name": e.name,
                    "p_case": e.p_case,
                    "fields": {k: list(v) for k, v in e.fields.items()},
                    "onset_lo_min": e.onset_lo_min,
                    "onset_hi_min": e.onset_hi_min,
                    "dur_lo_min": e.dur_lo_min,
                    "dur_hi_min": e.dur_hi_min,
                    "responses": [vars(r) for r in e.responses],
                }
                for e in self.episodes
            ],
            "injury_probs": list(self.injury_probs),
            "low_gcs_p": self.low_gcs_p,
            "duration_mean_min": self.duration_mean_min,
            "duration_sd_min": self.duration_sd_min,
            "duration_min_min": self.duration_min_min,
            "duration_max_min": self.duration_max_min,
            "vitals_interval_mean_s": self.vitals_interval_mean_s,
            "vitals_interval_sd_s": self.vitals_interval_sd_s,
            "vitals_interval_min_s": self.vitals_interval_min_s,
            "static_missing_p": self.static_missing_p,
            "vitals_missing_p": self.vitals_missing_p,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        if doc.get("schema_version") != 1:
            raise ValueError(f"unsupported scenario schema_version {doc.get('schema_version')}")
        return cls(
            activities=tuple(ActivityTemplate(**a) for a in doc["activities"]),
            static_gates=tuple(StaticGate(**g) for g in doc["static_gates"]),
            follow_rules=tuple(FollowRule(**r) for r in doc["follow_rules"]),
            episodes=tuple(
                VitalsEpisode(
                    name=e["name"],
                    p_case=e["p_case"],
                    fields={k: tuple(v) for k, v in e["fields"].items()},
                    onset_lo_min=e["onset_lo_min"],
                    onset_hi_min=e["onset_hi_min"],
                    dur_lo_min=e["dur_lo_min"],
                    dur_hi_min=e["dur_hi_min"],
                    responses=tuple(EpisodeResponse(**r) for r in e["responses"]),
                )
                for e in doc["episodes"]
            ),
            injury_probs=tuple(doc["injury_probs"]),
            low_gcs_p=doc["low_gcs_p"],
            duration_mean_min=doc["duration_mean_min"],
            duration_sd_min=doc["duration_sd_min"],
            duration_min_min=doc["duration_min_min"],
            duration_max_min=doc["duration_max_min"],
            vitals_interval_mean_s=doc["vitals_interval_mean_s"],
            vitals_interval_sd_s=doc["vitals_interval_sd_s"],
            vitals_interval_min_s=doc["vitals_interval_min_s"],
            static_missing_p=doc["static_missing_p"],
            vitals_missing_p=doc["vitals_missing_p"],
        )


def _t(name, phase, mean, sd, dur, p):
    return ActivityTemplate(name, phase, mean, sd, dur, p)


def default_scenario() -> ScenarioConfig:
    """61 activities across five phases, shaped like a trauma-bay workflow.

    Tuned so process context dominates (chains and persistence), patient
    context adds a real smaller margin (vitals episodes, injury gates), and a
    per-minute frequency table stays far behind a trained model.
    """
    activities = (
        # arrival-assessment: a burst of short checks in the first minutes
        _t("pulse check", "arrival-assessment", 1.2, 0.7, 59, 0.0),
        _t("blood pressure check", "arrival-assessment", 2.0, 0.7, 59, 0.0),
        _t("visual assessment", "arrival-assessment", 0.5, 0.6, 59, 0.95),
        _t("attach monitor leads", "arrival-assessment", 0.7, 0.7, 59, 0.90),
        _t("pulse oximeter placement", "arrival-assessment", 1.5, 0.7, 59, 0.0),
        _t("expose patient", "arrival-assessment", 1.0, 0.7, 59, 0.85),
        _t("gcs assessment", "arrival-assessment", 1.4, 0.8, 59, 0.90),
        _t("pupil exam", "arrival-assessment", 2.2, 0.8, 59, 0.0),
        _t("temperature check", "arrival-assessment", 2.4, 0.8, 59, 0.0),
        _t("primary survey", "arrival-assessment", 0.6, 0.6, 299, 0.90),
        # airway
        _t("airway positioning", "airway", 2.5, 1.0, 59, 0.40),
        _t("suction airway", "airway", 3.5, 1.2, 59, 0.0),
        _t("oxygen via mask", "airway", 3.0, 1.2, UNTIL_END, 0.10),
        _t("bag valve mask", "airway", 4.0, 1.2, 119, 0.05),
        _t("intubation prep", "airway", 4.5, 1.0, 59, 0.25),
        _t("intubation", "airway", 5.5, 1.0, 59, 0.0),
        _t("ventilator setup", "airway", 6.5, 1.0, 59, 0.0),
        _t("capnography check", "airway", 7.0, 1.2, 59, 0.0),
        _t("cervical collar placement", "airway", 3.5, 1.0, UNTIL_END, 0.08),
        _t("airway reassessment", "airway", 8.0, 1.0, 59, 0.35),
        # circulation
        _t("iv placement", "circulation", 2.0, 0.8, 119, 0.90),
        _t("io placement", "circulation", 4.0, 1.2, 59, 0.08),
        _t("blood draw", "circulation", 3.0, 1.0, 59, 0.0),
        _t("type and cross", "circulation", 4.0, 1.2, 59, 0.03),
        _t("fluid bolus", "circulation", 5.0, 1.5, 119, 0.05),
        _t("blood transfusion", "circulation", 7.0, 1.5, 239, 0.0),
        _t("pressure dressing", "circulation", 4.0, 1.0, 59, 0.0),
        _t("pelvic binder", "circulation", 6.0, 1.2, 119, 0.02),
        _t("tourniquet application", "circulation", 3.0, 1.0, 59, 0.15),
        _t("central line placement", "circulation", 9.0, 1.2, 179, 0.12),
        # imaging
        _t("chest x-ray", "imaging", 7.5, 1.4, 59, 0.0),
        _t("pelvis x-ray", "imaging", 8.5, 1.4, 59, 0.0),
        _t("x-ray positioning", "imaging", 6.5, 1.4, 59, 0.80),
        _t("fast exam", "imaging", 5.0, 1.2, 119, 0.75),
        _t("abdominal exam", "imaging", 6.0, 1.2, 59, 0.0),
        _t("log roll", "imaging", 6.0, 1.2, 59, 0.70),
        _t("spine exam", "imaging", 7.0, 1.2, 59, 0.0),
        _t("extremity exam", "imaging", 8.0, 1.2, 59, 0.0),
        _t("ct head order", "imaging", 9.0, 1.2, 59, 0.35),
        _t("ct transport prep", "imaging", 10.0, 1.4, 119, 0.0),
        _t("transport to ct", "imaging", 10.0, 1.4, 59, 0.0),
        # disposition
        _t("secondary survey", "disposition", 11.0, 1.2, 179, 0.80),
        _t("analgesia administration", "disposition", 8.0, 1.2, 59, 0.65),
        _t("sedation administration", "disposition", 7.0, 1.2, 59, 0.0),
        _t("antibiotic administration", "disposition", 10.0, 1.2, 59, 0.15),
        _t("tetanus prophylaxis", "disposition", 12.0, 1.2, 59, 0.10),
        _t("wound irrigation", "disposition", 9.0, 1.2, 119, 0.30),
        _t("wound suturing", "disposition", 10.0, 1.2, 59, 0.0),
        _t("splint application", "disposition", 12.0, 1.4, 119, 0.28),
        _t("foley placement", "disposition", 9.5, 1.2, 59, 0.55),
        _t("ng tube placement", "disposition", 10.5, 1.2, 59, 0.0),
        _t("warm blanket application", "disposition", 5.0, 1.2, 59, 0.0),
        _t("reassess vitals", "disposition", 13.0, 1.4, 59, 0.60),
        _t("or notification", "disposition", 12.0, 1.2, 59, 0.35),
        _t("transport to or", "disposition", 13.0, 1.2, 59, 0.0),
        _t("family update", "disposition", 11.0, 1.2, 59, 0.60),
        _t("disposition decision", "disposition", 13.0, 1.2, 59, 0.80),
        _t("handoff report", "disposition", 14.0, 1.2, 59, 0.0),
        _t("icu handoff call", "disposition", 12.0, 1.2, 59, 0.0),
        _t("documentation check", "disposition", 14.0, 1.4, 59, 0.0),
        _t("team debrief", "disposition", 16.0, 1.4, 119, 0.35),
    )
    static_gates = (
        StaticGate("intubation prep", "gcs", "le", 8, 0.95),
        StaticGate("ct head order", "gcs", "le", 8, 0.80),
        StaticGate("tourniquet application", "injury_type", "eq", "penetrating", 0.80),
        StaticGate("wound irrigation", "injury_type", "eq", "penetrating", 0.80),
        StaticGate("or notification", "injury_type", "eq", "penetrating", 0.60),
        StaticGate("antibiotic administration", "injury_type", "eq", "penetrating", 0.50),
        StaticGate("tetanus prophylaxis", "injury_type", "eq", "penetrating", 0.40),
        StaticGate("cervical collar placement", "injury_type", "eq", "blunt", 0.70),
        StaticGate("pelvic binder", "injury_type", "eq", "blunt", 0.22),
        StaticGate("splint application", "injury_type", "eq", "fall", 0.55),
    )
    follow_rules = (
        # deterministic chains: consequent fills exactly the next minute
        FollowRule("attach monitor leads", "pulse oximeter placement", 1.0),
        FollowRule("gcs assessment", "pupil exam", 1.0),
        FollowRule("expose patient", "temperature check", 1.0),
        FollowRule("intubation prep", "intubation", 1.0),
        FollowRule("intubation", "ventilator setup", 1.0),
        FollowRule("tourniquet application", "pressure dressing", 1.0),
        FollowRule("x-ray positioning", "chest x-ray", 1.0),
        FollowRule("fast exam", "abdominal exam", 1.0),
        FollowRule("log roll", "spine exam", 1.0),
        FollowRule("ct head order", "transport to ct", 1.0),
        FollowRule("wound irrigation", "wound suturing", 1.0),
        FollowRule("or notification", "transport to or", 1.0),
        FollowRule("foley placement", "ng tube placement", 1.0),
        FollowRule("disposition decision", "handoff report", 1.0),
        FollowRule("secondary survey", "documentation check", 1.0),
        FollowRule("visual assessment", "pulse check", 1.0),
        FollowRule("pulse check", "blood pressure check", 1.0),
        FollowRule("temperature check", "warm blanket application", 1.0),
        FollowRule("airway positioning", "suction airway", 1.0),
        FollowRule("spine exam", "extremity exam", 1.0),
        FollowRule("family update", "icu handoff call", 1.0),
        # probabilistic texture with small delay windows
        FollowRule("iv placement", "blood draw", 1.0),
        FollowRule("blood draw", "type and cross", 0.5, 1, 2),
        FollowRule("chest x-ray", "pelvis x-ray", 1.0),
        FollowRule("ventilator setup", "capnography check", 1.0),
        FollowRule("intubation", "sedation administration", 1.0),
        FollowRule("ct head order", "ct transport prep", 0.9, 1, 1, 119),
    )
    episodes = (
        VitalsEpisode(
            name="hypotension",
            p_case=0.65,
            fields={"systolic_bp": (60.0, 85.0), "heart_rate": (115.0, 140.0)},
            onset_lo_min=3.0,
            onset_hi_min=18.0,
            dur_lo_min=3.0,
            dur_hi_min=5.0,
            responses=(
                EpisodeResponse("fluid bolus", 0.95, 1, 1, 119),
                EpisodeResponse("blood transfusion", 0.85, 2, 2, 239),
            ),
        ),
        VitalsEpisode(
            name="hypoxia",
            p_case=0.50,
            fields={"oxygen_saturation": (82.0, 91.0), "respiratory_rate": (28.0, 38.0)},
            onset_lo_min=2.0,
            onset_hi_min=15.0,
            dur_lo_min=3.0,
            dur_hi_min=5.0,
            responses=(
                EpisodeResponse("oxygen via mask", 0.95, 1, 1, UNTIL_END),
                EpisodeResponse("bag valve mask", 0.30, 2, 3, 119),
            ),
        ),
    )
    return ScenarioConfig(
        activities=activities,
        static_gates=static_gates,
        follow_rules=follow_rules,
        episodes=episodes,
    )


def build_manifest(scenario: ScenarioConfig) -> Manifest:
    return Manifest(
        catalog=scenario.catalog,
        vocabularies={
            "injury_type": INJURY_TYPES + (MISSING,),
            "fio2": FIO2_VALUES + (MISSING,),
        },
    )


def _trunc_normal(rng, mean, sd, lo, hi=None) -> float:
    for _ in range(64):
        x = rng.normal(mean, sd)
        if x >= lo and (hi is None or x <= hi):
            return float(x)
    return float(lo if hi is None else min(max(mean, lo), hi))


def _maybe_missing(rng, value, p):
    return None if rng.random() < p else value


def generate_case(scenario: ScenarioConfig, rng: np.random.Generator, case_id: str):
    """One validated CaseLog plus its ground-truth trace."""
    catalog = scenario.catalog
    n_min = int(round(_trunc_normal(
        rng,
        scenario.duration_mean_min,
        scenario.duration_sd_min,
        scenario.duration_min_min,
        scenario.duration_max_min,
    )))
    duration_s = 60 * n_min
    trace: dict = {"case_id": case_id, "duration_min": n_min, "fired": []}

    # static context
    injury = str(rng.choice(INJURY_TYPES, p=np.array(scenario.injury_probs)))
    low_gcs = rng.random() < scenario.low_gcs_p
    gcs = int(rng.integers(3, 9)) if low_gcs else int(rng.integers(12, 16))
    ais = int(np.clip(rng.integers(2, 6) + (1 if injury == "penetrating" else 0), 1, 6))
    age = 5 * round(_trunc_normal(rng, 27.0, 18.0, 1.0, 90.0) / 5)
    arrival_hr = 5 * round(_trunc_normal(rng, 105.0, 18.0, 50.0, 180.0) / 5)
    arrival_sbp = 5 * round(_trunc_normal(rng, 118.0, 16.0, 70.0, 190.0) / 5)
    static_truth = {
        "injury_type": injury, "gcs": gcs, "ais": ais, "age": age,
        "heart_rate": arrival_hr, "systolic_bp": arrival_sbp,
    }
    trace["static"] = static_truth
    static = StaticContext(
        age=_maybe_missing(rng, float(age), scenario.static_missing_p),
        gcs=_maybe_missing(rng, float(gcs), scenario.static_missing_p),
        ais=_maybe_missing(rng, float(ais), scenario.static_missing_p),
        heart_rate=_maybe_missing(rng, float(arrival_hr), scenario.static_missing_p),
        systolic_bp=_maybe_missing(rng, float(arrival_sbp), scenario.static_missing_p),
        injury_type=_maybe_missing(rng, injury, 0.02),
    )

    def gated_p(name: str, base_p: float) -> float:
        p = base_p
        for gate in scenario.static_gates:
            if gate.activity != name:
                continue
            actual = static_truth.get(gate.field)
            hit = (
                (gate.op == "eq" and actual == gate.value)
                or (gate.op == "le" and actual is not None and actual <= gate.value)
                or (gate.op == "ge" and actual is not None and actual >= gate.value)
            )
            if hit:
                p = gate.p_when
        return p

    events: list[tuple[str, int, int]] = []  # (name, start_s, end_s)

    def emit(name: str, start_min: int, dur_s: int, why: str, antecedent=None):
        start_s = 60 * start_min
        end_s = duration_s - 1 if dur_s == UNTIL_END else min(start_s + dur_s, duration_s)
        events.append((name, start_s, end_s))
        trace["fired"].append(
            {"activity": name, "start_s": start_s, "end_s": end_s,
             "source": why, "antecedent": antecedent}
        )
        for rule in scenario.follow_rules:
            if rule.antecedent != name:
                continue
            if rng.random() >= rule.p:
                continue
            delay = int(rng.integers(rule.delay_lo_min, rule.delay_hi_min + 1))
            c_min = start_min + delay
            tail = 1 if rule.duration_s == UNTIL_END else -(-rule.duration_s // 60)
            if c_min + tail > n_min:
                if rule.deterministic:
                    raise AssertionError(
                        f"deterministic consequent {rule.consequent!r} does not fit; "
                        "trigger scheduling must leave room"
                    )
                continue
            emit(rule.consequent, c_min, rule.duration_s,
                 "deterministic-rule" if rule.deterministic else "rule", name)

    # phase templates (chain consequents have base_p 0 and appear via rules)
    for template in scenario.activities:
        p = gated_p(template.name, template.base_p)
        if rng.random() >= p:
            continue
        own_tail = 1 if template.duration_s == UNTIL_END else -(-template.duration_s // 60)
        margin = max(scenario.chain_horizon_min(template.name), own_tail - 1)
        hi = n_min - 1 - margin
        if hi < 0:
            continue  # case too short for this activity
        start_min = int(round(_trunc_normal(
            rng, template.start_mean_min, template.start_sd_min, 0.0, float(hi)
        )))
        emit(template.name, start_min, template.duration_s, "template")

    # vitals episodes and their responses
    episode_windows: list[tuple[VitalsEpisode, int, int]] = []
    for episode in scenario.episodes:
        if rng.random() >= episode.p_case:
            continue
        onset_hi = min(episode.onset_hi_min, n_min - 4.0)
        if onset_hi <= episode.onset_lo_min:
            continue
        onset_s = int(round(60.0 * rng.uniform(episode.onset_lo_min, onset_hi)))
        onset_min = onset_s // 60
        ep_dur_s = int(round(60.0 * rng.uniform(episode.dur_lo_min, episode.dur_hi_min)))
        end_s = min(onset_s + ep_dur_s, duration_s - 1)
        episode_windows.append((episode, onset_s, end_s))
        trace["fired"].append(
            {"episode": episode.name, "onset_s": onset_s, "end_s": end_s, "source": "episode"}
        )
        for resp in episode.responses:
            if rng.random() >= resp.p:
                continue
            delay = int(rng.integers(resp.delay_lo_min, resp.delay_hi_min + 1))
            r_min = onset_min + delay
            tail = 1 if resp.duration_s == UNTIL_END else -(-resp.duration_s // 60)
            if r_min + tail > n_min:
                continue
            emit(resp.activity, r_min, resp.duration_s, "episode-response", episode.name)

    # vitals series: baseline cadence plus an extra record right at each
    # episode onset (teams re-check when a patient deteriorates)
    hr0 = _trunc_normal(rng, 100.0, 14.0, 55.0, 160.0)
    rr0 = _trunc_normal(rng, 22.0, 5.0, 8.0, 40.0)
    sbp0 = _trunc_normal(rng, 118.0, 14.0, 85.0, 185.0)
    dbp0 = 0.62 * sbp0 + rng.normal(5.0, 4.0)
    spo2_0 = min(100.0, _trunc_normal(rng, 97.5, 1.8, 90.0, 100.5))
    times = []
    t = int(round(rng.uniform(30.0, 90.0)))
    while t < duration_s:
        times.append(t)
        t += int(round(_trunc_normal(
            rng,
            scenario.vitals_interval_mean_s,
            scenario.vitals_interval_sd_s,
            scenario.vitals_interval_min_s,
        )))
    for _, onset_s, _end in episode_windows:
        times.append(onset_s)
        if onset_s + 70 < duration_s:
            times.append(onset_s + 70)
    times = sorted(set(min(u, duration_s - 1) for u in times))

    uses_nasal = rng.random() < 0.10
    oxygen_starts = sorted(s for (nm, s, _e) in events if nm == "oxygen via mask")
    bag_windows = [(s, e) for (nm, s, e) in events if nm == "bag valve mask"]
    vent_starts = sorted(s for (nm, s, _e) in events if nm == "ventilator setup")

    def fio2_at(u: int) -> str:
        if vent_starts and u >= vent_starts[0]:
            return "ventilator"
        if any(s <= u <= e for s, e in bag_windows):
            return "bag_valve"
        if oxygen_starts and u >= oxygen_starts[0]:
            return "face_mask"
        return "nasal_cannula" if uses_nasal else "room_air"

    # values are quantized the way a monitor read-off would be charted
    grid = {
        "heart_rate": 5.0,
        "respiratory_rate": 2.0,
        "systolic_bp": 5.0,
        "diastolic_bp": 5.0,
        "oxygen_saturation": 2.0,
    }
    vitals = []
    for u in times:
        base = {
            "heart_rate": hr0 + rng.normal(0.0, 3.0),
            "respiratory_rate": rr0 + rng.normal(0.0, 1.5),
            "systolic_bp": sbp0 + rng.normal(0.0, 3.0),
            "diastolic_bp": dbp0 + rng.normal(0.0, 2.5),
            "oxygen_saturation": min(100.0, spo2_0 + rng.normal(0.0, 1.0)),
        }
        pinned = set()
        for episode, onset_s, end_s in episode_windows:
            if onset_s <= u <= end_s:
                for fname, (lo, hi) in episode.fields.items():
                    base[fname] = rng.uniform(lo, hi)
                    pinned.add(fname)
        record = {"t_s": u}
        for fname, value in base.items():
            step = grid[fname]
            value = step * round(float(value) / step)
            if fname not in pinned:
                value = _maybe_missing(rng, value, scenario.vitals_missing_p)
            record[fname] = value
        record["fio2"] = _maybe_missing(rng, fio2_at(u), 0.05)
        vitals.append(DynamicContextRecord(**record))

    activity_events = tuple(
        ActivityEvent(catalog.label_index(nm), s, e)
        for nm, s, e in sorted(events, key=lambda ev: (ev[1], ev[0]))
    )
    case = CaseLog(
        case_id=case_id,
        static=static,
        vitals=tuple(vitals),
        events=activity_events,
        duration_s=duration_s,
    )
    return validate_case(case, catalog), trace


def generate_dataset(scenario: ScenarioConfig, n_cases: int, seed: int):
    """n_cases independent cases with per-case derived rngs; reproducible and
    order-independent."""
    if n_cases < 3:
        raise ValueError("need at least 3 cases to be splittable")
    manifest = build_manifest(scenario)
    cases, traces = [], {}
    for i in range(n_cases):
        case_id = f"case_{i:04d}"
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        case, trace = generate_case(scenario, rng, case_id)
        cases.append(case)
        traces[case_id] = trace
    return manifest, cases, traces
