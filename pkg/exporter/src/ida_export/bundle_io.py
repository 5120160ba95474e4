"""Writer for the on-disk bundle format consumed by the scoring engine.

The format is a directory holding a canonical ``manifest.json`` plus
headerless little-endian float32 arrays in row-major order, one file per
array.  Labels are class indices stored as float32 integers.  This
module produces the same canonical bytes as the engine's own writer
(sorted two-space-indented ASCII JSON with a trailing newline), so a
bundle survives an engine rewrite byte-identically.

The exporter never computes feature statistics; ``stats_*`` entries are
simply absent and the engine derives them from the demo features.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import IoError, SpecError

FORMAT_VERSION = 1

_FILENAMES = {
    "demo_features": "demo_features.f32",
    "query_features": "query_features.f32",
    "head_weights": "head_weights.f32",
    "head_biases": "head_biases.f32",
    "demo_labels": "demo_labels.f32",
    "query_labels": "query_labels.f32",
}


def write_bundle_dir(
    path: str,
    *,
    head_weights: np.ndarray,
    head_biases: np.ndarray,
    candidates: tuple[int, ...],
    label_names: tuple[str, ...],
    demo_features: np.ndarray,
    query_features: np.ndarray,
    demo_labels: np.ndarray | None = None,
    query_labels: np.ndarray | None = None,
) -> None:
    weights = np.asarray(head_weights, dtype=np.float64)
    biases = np.asarray(head_biases, dtype=np.float64)
    vocab, dim = weights.shape
    if biases.shape != (vocab,):
        raise SpecError(f"head biases shape {biases.shape} vs vocab size {vocab}")

    arrays: dict[str, np.ndarray] = {
        "demo_features": _feature_block(demo_features, dim, "demo features"),
        "query_features": _feature_block(query_features, dim, "query features"),
        "head_weights": weights,
        "head_biases": biases,
    }
    if demo_labels is not None:
        arrays["demo_labels"] = np.asarray(demo_labels, dtype=np.float64)
    if query_labels is not None:
        arrays["query_labels"] = np.asarray(query_labels, dtype=np.float64)

    files = {name: _FILENAMES[name] for name in arrays}
    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": int(dim),
        "vocab_size": int(vocab),
        "n_demos": int(arrays["demo_features"].shape[0]),
        "n_queries": int(arrays["query_features"].shape[0]),
        "num_classes": len(candidates),
        "candidates": [int(c) for c in candidates],
        "label_names": [str(s) for s in label_names],
        "files": files,
    }

    try:
        os.makedirs(path, exist_ok=True)
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            with open(os.path.join(path, files[name]), "wb") as f:
                f.write(data)
        text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=True) + "\n"
        with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"cannot write bundle at {path}: {e}") from e


def _feature_block(arr, dim: int, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != dim:
        raise SpecError(f"{name} must have shape (n, {dim}), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise SpecError(f"{name} contain NaN or infinity")
    return out
