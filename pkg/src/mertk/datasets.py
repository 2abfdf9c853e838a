"""Corpus adapters: CSV manifests (or RAVDESS file names) to labelled datasets.

Manifest schemas (CSV, one header line, audio paths relative to the manifest):

* ``q4audio`` / ``bimodal``: ``clip_id,path,quadrant`` with quadrant in Q1..Q4
* ``emomusic``: ``clip_id,path,arousal,valence,scale_min,scale_max``; arousal
  and valence are either one number or a ``;``-separated time series
  (0.5 s frames) on the declared scale
* ``ravdess``: ``path[,clip_id]``, or a directory scanned for ``*.wav``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dsp import wav_duration
from .errors import (
    BadLabel,
    BadScale,
    EmptyDataset,
    MalformedFilename,
    MertkError,
    MissingAudio,
    OutOfScale,
)

QUADRANTS = ("Q1", "Q2", "Q3", "Q4")
RAVDESS_EMOTIONS = ("N", "C", "H", "S", "A", "F")
RAVDESS_CODES = {"01": "N", "02": "C", "03": "H", "04": "S", "05": "A", "06": "F"}
SCHEMES = {"quadrant4": QUADRANTS, "ravdess6": RAVDESS_EMOTIONS}
DATASET_KINDS = ("q4audio", "bimodal", "emomusic", "ravdess")

# clip counts per class in the four corpora
CORPUS_COUNTS = {
    "q4audio": {"Q1": 225, "Q2": 225, "Q3": 225, "Q4": 225},
    "bimodal": {"Q1": 52, "Q2": 45, "Q3": 31, "Q4": 34},
    "emomusic": {"Q1": 305, "Q2": 87, "Q3": 241, "Q4": 111},
    "ravdess": {"N": 92, "C": 184, "H": 184, "S": 184, "A": 184, "F": 20},
}
EXPECTED_DURATION = {"q4audio": (30.0, 0.5), "bimodal": (30.0, 0.5), "emomusic": (45.0, 0.5),
                     "ravdess": (5.0, 1.5)}


class BadDuration(MertkError):
    pass


@dataclass(frozen=True)
class EmotionLabel:
    scheme: str
    value: str

    def __post_init__(self):
        if self.scheme not in SCHEMES or self.value not in SCHEMES[self.scheme]:
            raise BadLabel(f"{self.value!r} is not a {self.scheme} label")


@dataclass(frozen=True)
class AvAnnotation:
    arousal: float
    valence: float
    scale: tuple[float, float] = (-1.0, 1.0)
    arousal_series: tuple[float, ...] = ()
    valence_series: tuple[float, ...] = ()

    def __post_init__(self):
        lo, hi = self.scale
        if not lo < hi:
            raise BadScale(f"scale {self.scale} is empty")
        for v in (self.arousal, self.valence, *self.arousal_series, *self.valence_series):
            if not lo <= v <= hi:
                raise OutOfScale(f"annotation {v} outside scale [{lo}, {hi}]")

    @classmethod
    def from_series(cls, arousal, valence, scale):
        a = tuple(float(v) for v in arousal)
        v = tuple(float(x) for x in valence)
        return cls(float(np.mean(a)), float(np.mean(v)), tuple(scale), a, v)

    def centred(self) -> tuple[float, float]:
        mid = (self.scale[0] + self.scale[1]) / 2.0
        return self.arousal - mid, self.valence - mid


def quadrant_from_av(a: AvAnnotation) -> EmotionLabel:
    """Russell quadrant of a (recentred) A-V point; exactly zero counts as negative."""
    ar, va = a.centred()
    if ar > 0:
        q = "Q1" if va > 0 else "Q2"
    else:
        q = "Q4" if va > 0 else "Q3"
    return EmotionLabel("quadrant4", q)


@dataclass
class LabeledDataset:
    """Clips (sorted by id) with class labels and/or continuous (arousal, valence) targets."""

    kind: str
    scheme: str
    clip_ids: list[str]
    labels: np.ndarray | None  # class indices into ``classes``
    paths: list[Path | None] = field(default_factory=list)
    targets: np.ndarray | None = None  # [n, 2] (arousal, valence)
    features: np.ndarray | None = None  # [n, d] or [n, T, d]
    metadata: list[dict] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.clip_ids)
        for name in ("labels", "targets", "features"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has {len(v)} rows for {n} clips")

    @property
    def classes(self) -> tuple[str, ...]:
        return SCHEMES[self.scheme]

    def __len__(self):
        return len(self.clip_ids)

    def label_names(self) -> list[str]:
        return [self.classes[i] for i in self.labels]

    def counts(self) -> dict[str, int]:
        c = np.bincount(self.labels, minlength=len(self.classes))
        return {name: int(k) for name, k in zip(self.classes, c)}

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda seq: [seq[i] for i in idx] if seq else []  # noqa: E731
        return replace(
            self,
            clip_ids=[self.clip_ids[i] for i in idx],
            labels=None if self.labels is None else self.labels[idx],
            paths=pick(self.paths),
            targets=None if self.targets is None else self.targets[idx],
            features=None if self.features is None else self.features[idx],
            metadata=pick(self.metadata),
        )

    def with_features(self, features) -> "LabeledDataset":
        return replace(self, features=np.asarray(features, dtype=np.float64))


# --------------------------------------------------------------------------


def _read_manifest(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return path.parent, rows


def _resolve(base: Path, rel: str | None) -> Path | None:
    if not rel:
        return None
    p = Path(rel)
    return p if p.is_absolute() else base / p


def _finish(kind, scheme, records, *, require_audio, validate_durations, targets=None, info=None):
    """Sort by clip id, check uniqueness and (optionally) audio presence and durations."""
    if not records:
        raise EmptyDataset(f"{kind}: manifest has no usable rows")
    order = sorted(range(len(records)), key=lambda i: records[i]["clip_id"])
    records = [records[i] for i in order]
    ids = [r["clip_id"] for r in records]
    if len(set(ids)) != len(ids):
        raise BadLabel(f"{kind}: duplicate clip ids")
    paths = [r.get("path") for r in records]
    present = [p is not None and p.exists() for p in paths]
    if require_audio and not all(present):
        raise MissingAudio([i for i, ok in zip(ids, present) if not ok])
    if validate_durations:
        expected, tol = EXPECTED_DURATION[kind]
        for cid, p, ok in zip(ids, paths, present):
            if ok and abs(wav_duration(p) - expected) > tol:
                raise BadDuration(f"{cid}: duration {wav_duration(p):.2f} s, expected {expected} +/- {tol} s")
    classes = SCHEMES[scheme]
    labels = np.array([classes.index(r["label"]) for r in records], dtype=np.int64)
    meta = [r.get("meta", {}) for r in records]
    if targets is not None:
        targets = np.asarray(targets)[order]
    return LabeledDataset(kind, scheme, ids, labels, paths, targets, None, meta, dict(info or {}))


def _load_quadrant_manifest(kind, manifest, require_audio, validate_durations):
    base, rows = _read_manifest(manifest)
    records = []
    for row in rows:
        q = (row.get("quadrant") or "").strip().upper()
        if q not in QUADRANTS:
            raise BadLabel(f"{kind}: clip {row.get('clip_id')!r} has label {q!r}")
        records.append({"clip_id": row["clip_id"].strip(), "path": _resolve(base, row.get("path")),
                        "label": q})
    return _finish(kind, "quadrant4", records, require_audio=require_audio,
                   validate_durations=validate_durations)


def load_q4audio(manifest, *, require_audio=False, validate_durations=True) -> LabeledDataset:
    return _load_quadrant_manifest("q4audio", manifest, require_audio, validate_durations)


def load_bimodal(manifest, *, require_audio=False, validate_durations=True) -> LabeledDataset:
    return _load_quadrant_manifest("bimodal", manifest, require_audio, validate_durations)


def _series(text):
    return [float(v) for v in str(text).split(";") if v.strip()]


def load_emomusic(manifest, mode: str = "static_quadrant", *, require_audio=False,
                  validate_durations=True) -> LabeledDataset:
    """Quadrant labels from clip-mean A-V; ``dynamic_av`` also returns (arousal, valence) targets."""
    if mode not in ("static_quadrant", "dynamic_av"):
        raise ValueError(f"unknown mode {mode!r}")
    base, rows = _read_manifest(manifest)
    records, targets = [], []
    for row in rows:
        try:
            scale = (float(row["scale_min"]), float(row["scale_max"]))
        except (KeyError, TypeError, ValueError):
            raise BadScale(f"clip {row.get('clip_id')!r}: manifest must declare scale_min/scale_max")
        ann = AvAnnotation.from_series(_series(row["arousal"]), _series(row["valence"]), scale)
        records.append({"clip_id": row["clip_id"].strip(), "path": _resolve(base, row.get("path")),
                        "label": quadrant_from_av(ann).value})
        targets.append((ann.arousal, ann.valence))
    return _finish("emomusic", "quadrant4", records, require_audio=require_audio,
                   validate_durations=validate_durations,
                   targets=np.array(targets) if mode == "dynamic_av" else None, info={"mode": mode})


@dataclass(frozen=True)
class RavdessName:
    modality: str
    vocal_channel: str
    emotion: str
    intensity: str
    statement: str
    repetition: str
    actor: int

    @property
    def is_song(self):
        return self.vocal_channel == "02"

    @property
    def gender(self):
        return "male" if self.actor % 2 else "female"


def parse_ravdess_name(name: str) -> RavdessName:
    stem = Path(name).name
    if not stem.lower().endswith(".wav"):
        raise MalformedFilename(f"{name!r}: expected a .wav file")
    fields = stem[:-4].split("-")
    if len(fields) != 7 or not all(len(f) == 2 and f.isdigit() for f in fields):
        raise MalformedFilename(f"{name!r}: expected seven dash-separated 2-digit fields")
    return RavdessName(*fields[:6], actor=int(fields[6]))


def load_ravdess(source, *, require_audio=False, validate_durations=True) -> LabeledDataset:
    """Song clips with the six studied emotions; speech and other emotions are skipped."""
    source = Path(source)
    if source.is_dir():
        entries = [(p, p.stem) for p in sorted(source.rglob("*.wav"))]
    else:
        base, rows = _read_manifest(source)
        entries = [(_resolve(base, r["path"]), (r.get("clip_id") or Path(r["path"]).stem).strip()) for r in rows]
    records = []
    skipped_speech = skipped_emotion = 0
    for path, clip_id in entries:
        code = parse_ravdess_name(path.name)
        if not code.is_song:
            skipped_speech += 1
            continue
        if code.emotion not in RAVDESS_CODES:
            skipped_emotion += 1
            continue
        records.append({"clip_id": clip_id, "path": path, "label": RAVDESS_CODES[code.emotion],
                        "meta": {"actor": code.actor, "gender": code.gender,
                                 "intensity": int(code.intensity)}})
    return _finish("ravdess", "ravdess6", records, require_audio=require_audio,
                   validate_durations=validate_durations,
                   info={"skipped_non_song": skipped_speech, "skipped_emotion": skipped_emotion})


def load_dataset(kind: str, source, **kw) -> LabeledDataset:
    if kind == "q4audio":
        return load_q4audio(source, **kw)
    if kind == "bimodal":
        return load_bimodal(source, **kw)
    if kind == "emomusic":
        return load_emomusic(source, **kw)
    if kind == "ravdess":
        return load_ravdess(source, **kw)
    raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")


# --------------------------------------------------------------------------
# reference manifests with the published class counts (no audio)

_EMOMUSIC_POINTS = {"Q1": (7.0, 7.0), "Q2": (7.0, 3.0), "Q3": (3.0, 3.0), "Q4": (3.0, 7.0)}


def ravdess_reference_names() -> list[str]:
    """Song file names reproducing the per-emotion counts, plus a few files the loader skips."""
    names = []
    per_emotion = {code: [] for code in RAVDESS_CODES}
    actors = [a for a in range(1, 25) if a != 18]
    for code in RAVDESS_CODES:
        intensities = ("01",) if code == "01" else ("01", "02")
        for actor in actors:
            for inten in intensities:
                for stmt in ("01", "02"):
                    for rep in ("01", "02"):
                        per_emotion[code].append(f"03-02-{code}-{inten}-{stmt}-{rep}-{actor:02d}.wav")
    wanted = {c: CORPUS_COUNTS["ravdess"][RAVDESS_CODES[c]] for c in RAVDESS_CODES}
    for code, files in per_emotion.items():
        names += files[:wanted[code]]
    names += ["03-01-03-01-01-01-01.wav", "03-01-05-02-02-01-02.wav", "03-02-07-01-01-01-03.wav"]
    return names


def write_reference_manifest(kind: str, path) -> Path:
    """Write a manifest whose label counts match the published corpus statistics."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if kind in ("q4audio", "bimodal"):
            w.writerow(["clip_id", "path", "quadrant"])
            for q, count in CORPUS_COUNTS[kind].items():
                for i in range(count):
                    cid = f"{kind}_{q}_{i:03d}"
                    w.writerow([cid, f"audio/{cid}.wav", q])
        elif kind == "emomusic":
            w.writerow(["clip_id", "path", "arousal", "valence", "scale_min", "scale_max"])
            for q, count in CORPUS_COUNTS[kind].items():
                a, v = _EMOMUSIC_POINTS[q]
                for i in range(count):
                    cid = f"emo_{q}_{i:03d}"
                    jitter = (i % 5) * 0.1
                    w.writerow([cid, f"audio/{cid}.wav", f"{a + jitter:.1f};{a - jitter:.1f}",
                                f"{v:.1f}", 1, 9])
        elif kind == "ravdess":
            w.writerow(["path"])
            for name in ravdess_reference_names():
                w.writerow([f"audio/{name}"])
        else:
            raise ValueError(f"unknown dataset kind {kind!r}")
    return path
