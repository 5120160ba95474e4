"""On-disk bundle format: manifest.json plus raw float32 arrays.

A bundle directory is the interchange surface between feature exporters
and this engine.  Layout:

* ``manifest.json`` -- canonical JSON (sorted keys, 2-space indent,
  trailing newline) declaring dimensions, candidate tokens, label names,
  and a ``files`` map from logical array names to relative filenames.
* one binary file per array: little-endian IEEE-754 float32, row-major,
  no header, exactly rows * cols * 4 bytes.

Required arrays: ``demo_features`` (n_demos x dim, may be empty),
``query_features`` (n_queries x dim), ``head_weights`` (vocab x dim),
``head_biases`` (vocab).  Optional: ``demo_labels`` / ``query_labels``
(class indices stored as float32 integers) and ``stats_mean`` /
``stats_cov`` with the sample count in the manifest key ``stats_count``.

Write-read-write is byte-identical.  Unknown manifest keys are ignored
for forward compatibility; missing or malformed required fields raise
:class:`InvalidBundle` naming the offender.  Array sizes are always
cross-checked against the manifest before allocation.

Stored covariances must satisfy the DemoStats PSD tolerance when read
back at float64; the writer enforces this by adding a minimal ridge to
rank-deficient covariances whose float32 rounding would dip below the
tolerance (see :func:`_storable_cov`).  Readers load stats verbatim.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .core import ClassifierHead, DemoStats
from .errors import InvalidBundle, IoError, LengthMismatch, ValidationError

FORMAT_VERSION = 1

_REQUIRED_FILES = ("demo_features", "query_features", "head_weights", "head_biases")
_CANONICAL_FILENAMES = {
    "demo_features": "demo_features.f32",
    "query_features": "query_features.f32",
    "head_weights": "head_weights.f32",
    "head_biases": "head_biases.f32",
    "demo_labels": "demo_labels.f32",
    "query_labels": "query_labels.f32",
    "stats_mean": "stats_mean.f32",
    "stats_cov": "stats_cov.f32",
}


@dataclass(frozen=True)
class Bundle:
    """Validated in-memory view of a task bundle (float64 arrays)."""

    head: ClassifierHead
    label_names: tuple[str, ...]
    demo_features: np.ndarray
    query_features: np.ndarray
    demo_labels: np.ndarray | None = None
    query_labels: np.ndarray | None = None
    stats: DemoStats | None = None

    def __post_init__(self):
        names = tuple(str(s) for s in self.label_names)
        if len(names) != len(self.head.candidates):
            raise LengthMismatch(
                f"{len(names)} label names vs {len(self.head.candidates)} candidates"
            )
        d = self.head.dim
        demo = self._feature_block(self.demo_features, d, "demo_features")
        query = self._feature_block(self.query_features, d, "query_features")
        object.__setattr__(self, "label_names", names)
        object.__setattr__(self, "demo_features", demo)
        object.__setattr__(self, "query_features", query)
        object.__setattr__(
            self, "demo_labels", self._label_block(self.demo_labels, demo.shape[0], "demo_labels")
        )
        object.__setattr__(
            self,
            "query_labels",
            self._label_block(self.query_labels, query.shape[0], "query_labels"),
        )
        if self.stats is not None and self.stats.dim != d:
            raise ValidationError(f"stats dim {self.stats.dim} does not match head dim {d}")

    @staticmethod
    def _feature_block(arr, dim: int, name: str) -> np.ndarray:
        out = np.array(arr, dtype=np.float64, copy=True)
        if out.ndim != 2 or out.shape[1] != dim:
            raise ValidationError(f"{name} must have shape (n, {dim}), got {out.shape}")
        if not np.all(np.isfinite(out)):
            raise ValidationError(f"{name} contains NaN or infinity")
        out.setflags(write=False)
        return out

    def _label_block(self, arr, rows: int, name: str) -> np.ndarray | None:
        if arr is None:
            return None
        out = np.array(arr, dtype=np.int64, copy=True)
        if out.shape != (rows,):
            raise ValidationError(f"{name} must have shape ({rows},), got {out.shape}")
        if out.size and (out.min() < 0 or out.max() >= self.num_classes):
            raise ValidationError(f"{name} contains indices outside [0, {self.num_classes})")
        out.setflags(write=False)
        return out

    @property
    def dim(self) -> int:
        return self.head.dim

    @property
    def vocab_size(self) -> int:
        return self.head.vocab_size

    @property
    def num_classes(self) -> int:
        return len(self.head.candidates)

    @property
    def n_demos(self) -> int:
        return self.demo_features.shape[0]

    @property
    def n_queries(self) -> int:
        return self.query_features.shape[0]


def _write_array(path: str, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(data)


def _storable_cov(stats: DemoStats) -> np.ndarray:
    """Covariance whose float32 image still satisfies the PSD tolerance.

    Rounding a rank-deficient covariance to float32 can push its smallest
    eigenvalue to about -1e-7 relative, past the DemoStats tolerance, so
    a verbatim reload would be rejected.  The writer therefore adds the
    smallest ladder ridge whose float32 image passes; healthy covariances
    are stored untouched and reload bit-exactly.
    """
    def image(c):
        return c.astype(np.float32).astype(np.float64)

    cov = stats.cov
    candidate = image(cov)
    try:
        DemoStats(mean=stats.mean, cov=candidate, count=stats.count)
        return cov
    except ValidationError:
        pass
    d = cov.shape[0]
    scale = float(np.trace(cov)) / d
    for eps in (1e-9 * 10.0**k for k in range(7)):
        ridged = cov + (eps * scale) * np.eye(d)
        try:
            DemoStats(mean=stats.mean, cov=image(ridged), count=stats.count)
            return ridged
        except ValidationError:
            continue
    raise InvalidBundle("files.stats_cov", "covariance cannot be stored at float32")


def write_bundle(path: str, bundle: Bundle) -> None:
    """Write a bundle directory; deterministic bytes for equal content."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create bundle directory {path}: {e}") from e

    arrays: dict[str, np.ndarray] = {
        "demo_features": bundle.demo_features,
        "query_features": bundle.query_features,
        "head_weights": bundle.head.weights,
        "head_biases": bundle.head.biases,
    }
    if bundle.demo_labels is not None:
        arrays["demo_labels"] = bundle.demo_labels
    if bundle.query_labels is not None:
        arrays["query_labels"] = bundle.query_labels
    if bundle.stats is not None:
        arrays["stats_mean"] = bundle.stats.mean
        arrays["stats_cov"] = _storable_cov(bundle.stats)

    files = {name: _CANONICAL_FILENAMES[name] for name in arrays}
    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": bundle.dim,
        "vocab_size": bundle.vocab_size,
        "n_demos": bundle.n_demos,
        "n_queries": bundle.n_queries,
        "num_classes": bundle.num_classes,
        "candidates": list(bundle.head.candidates),
        "label_names": list(bundle.label_names),
        "files": files,
    }
    if bundle.stats is not None:
        manifest["stats_count"] = bundle.stats.count

    try:
        for name, arr in arrays.items():
            _write_array(os.path.join(path, files[name]), arr)
        text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=True) + "\n"
        with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise IoError(f"cannot write bundle at {path}: {e}") from e


def _require(manifest: dict, key: str, kind) -> object:
    if key not in manifest:
        raise InvalidBundle(key, "missing")
    value = manifest[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidBundle(key, f"expected integer, got {value!r}")
        if value < 0:
            raise InvalidBundle(key, f"must be >= 0, got {value}")
    elif not isinstance(value, kind):
        raise InvalidBundle(key, f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _load_stats(mean: np.ndarray, cov: np.ndarray, count: int) -> DemoStats:
    """Reconstruct stored statistics verbatim.

    The writer guarantees the stored float32 covariance satisfies the
    DemoStats PSD tolerance, so loading never modifies values; a foreign
    file that violates the invariant is rejected with the field named.
    """
    sym = (cov + cov.T) / 2.0  # bit-exact identity for stored-symmetric data
    try:
        return DemoStats(mean=mean, cov=sym, count=count)
    except ValidationError as e:
        raise InvalidBundle("files.stats_cov", str(e)) from e


def _read_array(dirname: str, files: dict, name: str, shape: tuple[int, ...]) -> np.ndarray:
    if name not in files:
        raise InvalidBundle(f"files.{name}", "missing entry")
    fname = files[name]
    if not isinstance(fname, str) or not fname or os.sep in fname or fname in (".", ".."):
        raise InvalidBundle(f"files.{name}", f"unsafe filename {fname!r}")
    full = os.path.join(dirname, fname)
    if not os.path.isfile(full):
        raise InvalidBundle(f"files.{name}", f"file {fname!r} not found")
    expected = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 0
    actual = os.path.getsize(full)
    if actual != expected:
        raise InvalidBundle(
            f"files.{name}", f"size {actual} bytes, expected {expected} for shape {shape}"
        )
    try:
        with open(full, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoError(f"cannot read {full}: {e}") from e
    arr = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidBundle(f"files.{name}", "contains non-finite values")
    return arr


def _read_labels(dirname, files, name, rows, num_classes) -> np.ndarray | None:
    if name not in files:
        return None
    arr = _read_array(dirname, files, name, (rows,))
    if rows and not np.all(arr == np.round(arr)):
        raise InvalidBundle(f"files.{name}", "labels must be integers")
    labels = arr.astype(np.int64)
    if rows and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidBundle(f"files.{name}", f"label outside [0, {num_classes})")
    return labels


def read_bundle(path: str) -> Bundle:
    """Read and validate a bundle directory."""
    if not os.path.isdir(path):
        raise IoError(f"bundle directory not found: {path}")
    manifest_path = os.path.join(path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise InvalidBundle("manifest.json", "missing")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise IoError(f"cannot read {manifest_path}: {e}") from e
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as e:
        raise InvalidBundle("manifest.json", f"not valid JSON: {e}") from e
    if not isinstance(manifest, dict):
        raise InvalidBundle("manifest.json", "top level must be an object")

    version = _require(manifest, "format_version", int)
    if version != FORMAT_VERSION:
        raise InvalidBundle("format_version", f"unsupported version {version}")
    dim = _require(manifest, "dim", int)
    vocab = _require(manifest, "vocab_size", int)
    n_demos = _require(manifest, "n_demos", int)
    n_queries = _require(manifest, "n_queries", int)
    num_classes = _require(manifest, "num_classes", int)
    candidates = _require(manifest, "candidates", list)
    label_names = _require(manifest, "label_names", list)
    files = _require(manifest, "files", dict)

    if len(candidates) != num_classes:
        raise InvalidBundle("candidates", f"expected {num_classes} entries, got {len(candidates)}")
    if not all(isinstance(c, int) and not isinstance(c, bool) for c in candidates):
        raise InvalidBundle("candidates", "entries must be integers")
    if len(label_names) != num_classes:
        raise InvalidBundle("label_names", f"expected {num_classes} entries, got {len(label_names)}")
    if not all(isinstance(s, str) for s in label_names):
        raise InvalidBundle("label_names", "entries must be strings")

    demo_features = _read_array(path, files, "demo_features", (n_demos, dim))
    query_features = _read_array(path, files, "query_features", (n_queries, dim))
    weights = _read_array(path, files, "head_weights", (vocab, dim))
    biases = _read_array(path, files, "head_biases", (vocab,))
    demo_labels = _read_labels(path, files, "demo_labels", n_demos, num_classes)
    query_labels = _read_labels(path, files, "query_labels", n_queries, num_classes)

    stats = None
    has_mean, has_cov = "stats_mean" in files, "stats_cov" in files
    if has_mean != has_cov:
        missing = "stats_cov" if has_mean else "stats_mean"
        raise InvalidBundle(f"files.{missing}", "stats_mean and stats_cov must appear together")
    if has_mean:
        count = _require(manifest, "stats_count", int)
        if count < 1:
            raise InvalidBundle("stats_count", f"must be >= 1, got {count}")
        mean = _read_array(path, files, "stats_mean", (dim,))
        cov = _read_array(path, files, "stats_cov", (dim, dim))
        stats = _load_stats(mean, cov, count)

    try:
        head = ClassifierHead(weights=weights, biases=biases, candidates=tuple(candidates))
    except ValidationError as e:
        raise InvalidBundle("candidates", str(e)) from e
    try:
        return Bundle(
            head=head,
            label_names=tuple(label_names),
            demo_features=demo_features,
            query_features=query_features,
            demo_labels=demo_labels,
            query_labels=query_labels,
            stats=stats,
        )
    except ValidationError as e:
        raise InvalidBundle("manifest.json", str(e)) from e
