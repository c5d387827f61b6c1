"""Per-minute feature pipeline: split, normalize, encode, and sample cases.

Each case is sampled once per minute t = 0..ceil(duration/60)-1. Features are
computed at cutoff 60*t (only history strictly before the cutoff is visible)
and the label covers activities overlapping [60t, 60(t+1)).

Randomness: the only random step is last-k subsampling when more than k
activities started in the most recent minute. Its generator is derived per
(seed, case_id, minute) so preprocessing is order-independent, parallelizable
per case, and exactly reproducible one minute at a time by the runtime
service.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    PAD_ID,
    MISSING,
    ActivityEvent,
    CaseLog,
    DynamicContextRecord,
    Manifest,
    StaticContext,
)
from .serialize import load_blob, save_blob

CACHE_SCHEMA_VERSION = 1

BLOCKS = ("last_k", "all_occurred", "dynamic", "static", "timestamp")


@dataclass(frozen=True)
class ContextMask:
    """Which context blocks feed the model; the unit of ablation."""

    use_last_k: bool = True
    use_all_occurred: bool = True
    use_dynamic: bool = True
    use_static: bool = True
    use_timestamp: bool = True

    def __post_init__(self):
        if not any(self.flags()):
            raise ValueError("context mask must enable at least one block")

    def flags(self) -> tuple[bool, ...]:
        return (
            self.use_last_k,
            self.use_all_occurred,
            self.use_dynamic,
            self.use_static,
            self.use_timestamp,
        )

    def describe(self) -> str:
        return "+".join(b for b, on in zip(BLOCKS, self.flags()) if on)

    @classmethod
    def from_string(cls, text: str) -> "ContextMask":
        """Parse 'last_k+all_occurred+timestamp' (also accepts commas, 'full')."""
        text = text.strip().lower()
        if text in ("full", "all"):
            return cls()
        parts = [p for p in text.replace(",", "+").split("+") if p]
        unknown = [p for p in parts if p not in BLOCKS]
        if unknown:
            raise ValueError(f"unknown context block(s) {unknown}; expected {BLOCKS}")
        return cls(*(b in parts for b in BLOCKS))


FULL_MASK = ContextMask()


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSplit":
        return cls(
            tuple(doc["train"]), tuple(doc["validation"]), tuple(doc["test"]), doc["seed"]
        )


def split_cases(cases, ratio, seed: int) -> DatasetSplit:
    """Seeded shuffle then partition by ratio proportions; remainders to train."""
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise ValueError("ratio must be three positive parts")
    if len(cases) < len(ratio):
        raise ValueError(f"need at least {len(ratio)} cases, got {len(cases)}")
    ids = sorted(c.case_id for c in cases)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate case ids")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    total = sum(ratio)
    n_val = int(len(ids) * ratio[1] / total)
    n_test = int(len(ids) * ratio[2] / total)
    n_train = len(ids) - n_val - n_test
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
        seed=seed,
    )


@dataclass
class NormalizerStats:
    """Per-feature (min, max) fitted on the training split only.

    Keys are namespaced: 'static.age', 'dynamic.heart_rate', 'timestamp'.
    Degenerate features (no observed values, or min == max) are flagged and
    scale to 0.
    """

    entries: dict[str, tuple[float, float]] = field(default_factory=dict)
    degenerate: set[str] = field(default_factory=set)

    def scale(self, key: str, x: float) -> float:
        lo, hi = self.entries[key]
        return scale_numeric(x, lo, hi)

    def to_dict(self) -> dict:
        return {
            "entries": {k: list(v) for k, v in sorted(self.entries.items())},
            "degenerate": sorted(self.degenerate),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizerStats":
        return cls(
            entries={k: (float(v[0]), float(v[1])) for k, v in doc["entries"].items()},
            degenerate=set(doc["degenerate"]),
        )


def scale_numeric(x: float, lo: float, hi: float) -> float:
    """Linear scaling to [0, 1], clamped; degenerate ranges map to 0."""
    if not math.isfinite(x):
        raise ValueError(f"cannot scale non-finite value {x}")
    if hi <= lo:
        return 0.0
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


def fit_normalizer(train_cases, manifest: Manifest, max_minutes: float | None = None) -> NormalizerStats:
    """Scan the training split for per-feature extrema.

    Timestamp range is [0, longest training-case duration in minutes] unless
    max_minutes caps it explicitly.
    """
    if not train_cases:
        raise ValueError("cannot fit normalizer on an empty training split")
    stats = NormalizerStats()
    pools: dict[str, list[float]] = {f"static.{n}": [] for n in manifest.static_numeric}
    pools.update({f"dynamic.{n}": [] for n in manifest.dynamic_numeric})
    for case in train_cases:
        for name in manifest.static_numeric:
            v = case.static.numeric(name)
            if v is not None:
                pools[f"static.{name}"].append(float(v))
        for rec in case.vitals:
            for name in manifest.dynamic_numeric:
                v = rec.numeric(name)
                if v is not None:
                    pools[f"dynamic.{name}"].append(float(v))
    for key, values in pools.items():
        if not values:
            stats.entries[key] = (0.0, 0.0)
            stats.degenerate.add(key)
        else:
            lo, hi = min(values), max(values)
            stats.entries[key] = (lo, hi)
            if lo == hi:
                stats.degenerate.add(key)
    if max_minutes is None:
        max_minutes = max(c.duration_s / 60.0 for c in train_cases)
    stats.entries["timestamp"] = (0.0, float(max_minutes))
    if max_minutes <= 0:
        stats.degenerate.add("timestamp")
    return stats


def encode_one_hot(value: str | None, vocabulary) -> np.ndarray:
    """One-hot over a vocabulary whose last entry is the missing token."""
    if vocabulary[-1] != MISSING:
        raise ValueError(f"vocabulary must end with {MISSING!r}")
    out = np.zeros(len(vocabulary))
    if value is None:
        out[-1] = 1.0
        return out
    try:
        out[vocabulary.index(value)] = 1.0
    except ValueError:
        raise ValueError(f"value {value!r} not in vocabulary {list(vocabulary)}") from None
    return out


def carry_forward_vitals(vitals, cutoff_s: float) -> DynamicContextRecord | None:
    """Most recent record with t_s <= cutoff_s; None before the first record."""
    latest = None
    for rec in vitals:
        if rec.t_s <= cutoff_s:
            latest = rec
        else:
            break
    return latest


def static_vector(static: StaticContext, manifest: Manifest, stats: NormalizerStats) -> np.ndarray:
    parts = []
    for name in manifest.static_numeric:
        v = static.numeric(name)
        parts.append(0.0 if v is None else stats.scale(f"static.{name}", v))
    vec = [np.array(parts)]
    for cat in manifest.static_categorical:
        vec.append(encode_one_hot(getattr(static, cat), manifest.vocabularies[cat]))
    return np.concatenate(vec)


def dynamic_vector(
    record: DynamicContextRecord | None, manifest: Manifest, stats: NormalizerStats
) -> np.ndarray:
    """Encode a carried-forward record; None encodes everything as missing."""
    parts = []
    for name in manifest.dynamic_numeric:
        v = None if record is None else record.numeric(name)
        parts.append(0.0 if v is None else stats.scale(f"dynamic.{name}", v))
    vec = [np.array(parts)]
    for cat in manifest.dynamic_categorical:
        value = None if record is None else getattr(record, cat)
        vec.append(encode_one_hot(value, manifest.vocabularies[cat]))
    return np.concatenate(vec)


def select_last_k(events, cutoff_s: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Embedding ids of the k most recent activity starts before cutoff_s.

    Ordered most-recent-first (ties by catalog index ascending), PAD-padded.
    If more than k activities started within [cutoff_s - 60, cutoff_s), k of
    those are drawn uniformly without replacement from rng.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = [ev for ev in events if ev.start_s < cutoff_s]
    seen.sort(key=lambda ev: (-ev.start_s, ev.label_id))
    window = [ev for ev in seen if ev.start_s >= cutoff_s - 60]
    if len(window) > k:
        chosen = rng.choice(len(window), size=k, replace=False)
        picked = sorted(
            (window[i] for i in chosen), key=lambda ev: (-ev.start_s, ev.label_id)
        )
    else:
        picked = seen[:k]
    ids = np.full(k, PAD_ID, dtype=np.int64)
    for i, ev in enumerate(picked):
        ids[i] = ev.label_id + 1
    return ids


def long_range_vector(events, cutoff_s: float, n_labels: int) -> np.ndarray:
    """Binary indicator per label: has the activity started before cutoff_s?"""
    out = np.zeros(n_labels)
    for ev in events:
        if ev.start_s < cutoff_s:
            out[ev.label_id] = 1.0
    return out


def label_vector(events, minute: int, n_labels: int) -> np.ndarray:
    """Bit i set iff some event of label i overlaps [60*minute, 60*(minute+1)).

    Event intervals are closed [start_s, end_s]; the minute window is
    half-open, so an event ending exactly on a boundary still labels the
    minute that starts there.
    """
    lo, hi = 60 * minute, 60 * (minute + 1)
    out = np.zeros(n_labels)
    for ev in events:
        if ev.start_s < hi and ev.end_s >= lo:
            out[ev.label_id] = 1.0
    return out


@dataclass(frozen=True)
class Sample:
    """One per-minute training/inference point."""

    case_id: str
    minute_index: int
    static_vec: np.ndarray
    dynamic_vec: np.ndarray
    last_k_ids: np.ndarray
    long_range_vec: np.ndarray
    timestamp_scalar: float
    label: np.ndarray


def case_rng_key(case_id: str) -> int:
    return zlib.crc32(case_id.encode("utf-8"))


def minute_rng(seed: int, case_id: str, minute: int) -> np.random.Generator:
    """The subsampling generator for one (case, minute); stable across runs."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, case_rng_key(case_id), minute])
    )


def minute_features(
    case_id: str,
    static: StaticContext,
    vitals,
    context_events,
    minute: int,
    manifest: Manifest,
    stats: NormalizerStats,
    k: int,
    seed: int,
) -> dict:
    """Assemble the feature blocks visible at cutoff 60*minute.

    context_events is the process context (the runtime service passes a view
    with injections/suppressions applied); labels are computed separately.
    """
    cutoff = 60 * minute
    return {
        "static_vec": static_vector(static, manifest, stats),
        "dynamic_vec": dynamic_vector(
            carry_forward_vitals(vitals, cutoff), manifest, stats
        ),
        "last_k_ids": select_last_k(
            context_events, cutoff, k, minute_rng(seed, case_id, minute)
        ),
        "long_range_vec": long_range_vector(context_events, cutoff, manifest.catalog.n),
        "timestamp_scalar": stats.scale("timestamp", float(minute)),
    }


def sample_case(
    case: CaseLog, manifest: Manifest, stats: NormalizerStats, k: int, seed: int
) -> list[Sample]:
    """One Sample per minute of the case; labels cover the same minute."""
    samples = []
    for t in range(case.n_minutes):
        blocks = minute_features(
            case.case_id, case.static, case.vitals, case.events, t, manifest, stats, k, seed
        )
        samples.append(
            Sample(
                case_id=case.case_id,
                minute_index=t,
                label=label_vector(case.events, t, manifest.catalog.n),
                **blocks,
            )
        )
    return samples


def sample_corpus(cases, manifest, stats, k: int, seed: int) -> list[Sample]:
    out = []
    for case in cases:
        out.extend(sample_case(case, manifest, stats, k, seed))
    return out


@dataclass
class FeatureBatch:
    """Stacked model inputs: dense blocks before/after the pooled embedding."""

    pre: np.ndarray  # (b, static_width + dynamic_width as masked)
    ids: np.ndarray | None  # (b, k) embedding ids, or None when masked off
    post: np.ndarray  # (b, all_occurred + timestamp as masked)

    @property
    def size(self) -> int:
        return self.pre.shape[0]

    def row(self, i: int) -> "FeatureBatch":
        return FeatureBatch(
            self.pre[i : i + 1],
            None if self.ids is None else self.ids[i : i + 1],
            self.post[i : i + 1],
        )


def assemble_features(samples, mask: ContextMask) -> FeatureBatch:
    """Stack samples into model inputs honoring the block order
    static, dynamic, [pooled embedding], all-occurred, timestamp."""
    if not samples:
        raise ValueError("no samples to assemble")
    b = len(samples)
    pre_parts, post_parts = [], []
    if mask.use_static:
        pre_parts.append(np.stack([s.static_vec for s in samples]))
    if mask.use_dynamic:
        pre_parts.append(np.stack([s.dynamic_vec for s in samples]))
    ids = np.stack([s.last_k_ids for s in samples]) if mask.use_last_k else None
    if mask.use_all_occurred:
        post_parts.append(np.stack([s.long_range_vec for s in samples]))
    if mask.use_timestamp:
        post_parts.append(np.array([[s.timestamp_scalar] for s in samples]))
    empty = np.zeros((b, 0))
    return FeatureBatch(
        pre=np.concatenate(pre_parts, axis=1) if pre_parts else empty,
        ids=ids,
        post=np.concatenate(post_parts, axis=1) if post_parts else empty,
    )


def stack_labels(samples) -> np.ndarray:
    return np.stack([s.label for s in samples])


def block_widths(manifest: Manifest, mask: ContextMask, embed_dim: int, k: int) -> dict:
    """Width bookkeeping for model construction under a mask."""
    pre = (manifest.static_width if mask.use_static else 0) + (
        manifest.dynamic_width if mask.use_dynamic else 0
    )
    post = (manifest.catalog.n if mask.use_all_occurred else 0) + (
        1 if mask.use_timestamp else 0
    )
    pooled = embed_dim if mask.use_last_k else 0
    return {"pre": pre, "post": post, "pooled": pooled, "total": pre + pooled + post}


def save_sample_cache(path, samples, manifest, stats, k: int, seed: int, mask: ContextMask = FULL_MASK) -> None:
    """Persist preprocessed samples; re-running with identical inputs writes
    byte-identical files."""
    case_ids = []
    case_index = {}
    idx = np.empty(len(samples), dtype=np.int64)
    minutes = np.empty(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        if s.case_id not in case_index:
            case_index[s.case_id] = len(case_ids)
            case_ids.append(s.case_id)
        idx[i] = case_index[s.case_id]
        minutes[i] = s.minute_index
    meta = {
        "schema_version": CACHE_SCHEMA_VERSION,
        "kind": "sample-cache",
        "k": k,
        "seed": seed,
        "mask": mask.describe(),
        "stats": stats.to_dict(),
        "catalog_hash": manifest.catalog.content_hash(),
        "case_ids": case_ids,
    }
    arrays = {
        "static": np.stack([s.static_vec for s in samples]),
        "dynamic": np.stack([s.dynamic_vec for s in samples]),
        "last_k": np.stack([s.last_k_ids for s in samples]),
        "long_range": np.stack([s.long_range_vec for s in samples]),
        "timestamp": np.array([[s.timestamp_scalar] for s in samples]),
        "labels": np.stack([s.label for s in samples]),
        "case_index": idx,
        "minute": minutes,
    }
    save_blob(path, meta, arrays)


def load_sample_cache(path) -> tuple[list[Sample], dict]:
    meta, arrays = load_blob(path)
    if meta.get("kind") != "sample-cache":
        raise ValueError(f"{path} is not a sample cache")
    if meta.get("schema_version") != CACHE_SCHEMA_VERSION:
        raise ValueError(f"unsupported cache schema_version {meta.get('schema_version')}")
    samples = []
    case_ids = meta["case_ids"]
    for i in range(arrays["labels"].shape[0]):
        samples.append(
            Sample(
                case_id=case_ids[int(arrays["case_index"][i])],
                minute_index=int(arrays["minute"][i]),
                static_vec=arrays["static"][i],
                dynamic_vec=arrays["dynamic"][i],
                last_k_ids=arrays["last_k"][i],
                long_range_vec=arrays["long_range"][i],
                timestamp_scalar=float(arrays["timestamp"][i, 0]),
                label=arrays["labels"][i],
            )
        )
    return samples, meta
