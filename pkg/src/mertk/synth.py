"""Synthetic labelled corpora (WAV files + manifest) for demos and tests."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .datasets import QUADRANTS, RAVDESS_CODES
from .dsp import write_wav


def tone(label_index: int, duration: float, sample_rate: int, rng) -> np.ndarray:
    """A harmonic tone whose pitch and tremolo rate depend on the class, plus noise."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    f0 = 110.0 * 2 ** (label_index * 7 / 12) * (1 + 0.01 * rng.standard_normal())
    x = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3))
    x *= 1 + 0.5 * np.sin(2 * np.pi * (2 + 2 * label_index) * t)
    x += 0.05 * rng.standard_normal(len(t))
    return 0.3 * x / np.max(np.abs(x))


def make_corpus(root, kind: str = "q4audio", per_class: int = 10, duration: float = 2.0,
                sample_rate: int = 16000, seed: int = 0) -> Path:
    """Write ``per_class`` clips per label under ``root/audio`` and return the manifest path.

    ``kind`` is ``q4audio``/``bimodal`` (quadrant manifest) or ``ravdess``
    (canonical RAVDESS song file names, actors cycling 1..24).
    """
    root = Path(root)
    audio = root / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if kind in ("q4audio", "bimodal"):
            w.writerow(["clip_id", "path", "quadrant"])
            for k, q in enumerate(QUADRANTS):
                for i in range(per_class):
                    cid = f"{q}_{i:03d}"
                    write_wav(audio / f"{cid}.wav", tone(k, duration, sample_rate, rng), sample_rate)
                    w.writerow([cid, f"audio/{cid}.wav", q])
        elif kind == "ravdess":
            if per_class > 24:
                raise ValueError("at most 24 clips per emotion (one per actor)")
            w.writerow(["path"])
            actor = 0
            for k, code in enumerate(RAVDESS_CODES):
                for i in range(per_class):
                    actor = actor % 24 + 1
                    name = f"03-02-{code}-01-{i % 2 + 1:02d}-{i // 2 % 2 + 1:02d}-{actor:02d}.wav"
                    write_wav(audio / name, tone(k, duration, sample_rate, rng), sample_rate)
                    w.writerow([f"audio/{name}"])
        else:
            raise ValueError(f"unsupported synthetic corpus kind {kind!r}")
    return manifest
