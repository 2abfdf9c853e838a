"""Per-clip feature extraction and the on-disk feature cache."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import container
from .dsp import MFCC_FRONTEND, AudioClip, mfcc_features
from .embedding import BoundModel, build_network, embed_clip, load_weights
from .errors import MissingFeatures


class FeatureExtractor:
    """Turns an :class:`AudioClip` into a cached feature array for one feature kind.

    Embedding kinds yield a [T, d] sequence (one row per window); ``mfcc80``
    yields an 80-dimensional clip vector.
    """

    def __init__(self, feature_kind: str, weights: str = "random:0", hop_s: float = 0.1):
        self.feature_kind = feature_kind
        self.weights = weights
        self.hop_s = hop_s
        self._model: BoundModel | None = None

    @property
    def model(self) -> BoundModel:
        if self._model is None:
            definition = build_network(self.feature_kind)
            if self.weights.startswith("random:"):
                source = int(self.weights.split(":", 1)[1])
            else:
                source = self.weights
            self._model = load_weights(definition, source)
        return self._model

    def describe(self) -> dict:
        """Every setting that changes the extracted values."""
        if self.feature_kind == "mfcc80":
            return {"feature_kind": "mfcc80", "sample_rate": MFCC_FRONTEND.sample_rate,
                    "spectrogram": asdict(MFCC_FRONTEND.config), "summary": "mean_std_static_delta"}
        definition = build_network(self.feature_kind)
        fe = definition.frontend
        if self.weights.startswith("random:"):
            weights = self.weights
        else:
            weights = f"crc32:{container.container_crc(self.weights):08x}"
        return {"feature_kind": self.feature_kind, "network": definition.name,
                "input_shape": list(definition.input_shape), "sample_rate": fe.sample_rate,
                "spectrogram": asdict(fe.config), "window_s": fe.window_s, "hop_s": self.hop_s,
                "weights": weights}

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __call__(self, clip: AudioClip) -> np.ndarray:
        if self.feature_kind == "mfcc80":
            return mfcc_features(clip)
        return embed_clip(clip, self.model, hop_s=self.hop_s).frames


class FeatureCache:
    """One ``MERT`` container per feature kind; entries are named ``<clip_id>@<config hash>``."""

    def __init__(self, cache_dir):
        self.root = Path(cache_dir) / "features"

    def path(self, feature_kind: str) -> Path:
        return self.root / f"{feature_kind}.mert"

    def load(self, feature_kind: str) -> dict[str, np.ndarray]:
        p = self.path(feature_kind)
        return container.read_container(p) if p.exists() else {}

    def save(self, feature_kind: str, entries: dict[str, np.ndarray]) -> None:
        container.write_container(self.path(feature_kind), dict(sorted(entries.items())))

    @staticmethod
    def key(clip_id: str, config_hash: str) -> str:
        return f"{clip_id}@{config_hash}"

    def index(self) -> list[tuple[str, str, str, tuple]]:
        """(feature_kind, clip_id, config_hash, shape) for every cached entry."""
        rows = []
        if self.root.exists():
            for p in sorted(self.root.glob("*.mert")):
                for name, arr in container.read_container(p).items():
                    clip_id, _, h = name.rpartition("@")
                    rows.append((p.stem, clip_id, h, tuple(arr.shape)))
        return rows

    def remove(self, feature_kind: str | None = None) -> list[Path]:
        targets = [self.path(feature_kind)] if feature_kind else sorted(self.root.glob("*.mert"))
        removed = [p for p in targets if p.exists()]
        for p in removed:
            p.unlink()
        return removed

    def gather(self, feature_kind: str, config_hash: str, clip_ids, *, sequences: bool):
        """Feature array for ``clip_ids`` plus the ids that had no cached entry.

        With ``sequences`` the result is [n, T, d] (truncated to the shortest
        sequence); otherwise sequences are mean-pooled to [n, d].
        """
        entries = self.load(feature_kind)
        found, missing, arrays = [], [], []
        for cid in clip_ids:
            arr = entries.get(self.key(cid, config_hash))
            if arr is None:
                missing.append(cid)
                continue
            arr = np.asarray(arr, dtype=np.float64)
            arr = arr[None, :] if arr.ndim == 1 else arr
            found.append(cid)
            arrays.append(arr)
        if not arrays:
            raise MissingFeatures(f"no cached {feature_kind} features for this dataset; run `extract` first")
        if sequences:
            t = min(len(a) for a in arrays)
            X = np.stack([a[:t] for a in arrays])
        else:
            X = np.stack([a.mean(axis=0) for a in arrays])
        return found, X, missing
