import json
import os

import numpy as np
import pytest

from idaicl import (
    Bundle,
    ClassifierHead,
    estimate_stats,
    read_bundle,
    write_bundle,
)
from idaicl.errors import InvalidBundle, IoError, LengthMismatch


def make_bundle(seed=0, dim=3, vocab=5, n_classes=2, n_demos=6, n_queries=4,
                with_labels=True, with_stats=False):
    rng = np.random.default_rng(seed)
    head = ClassifierHead(
        weights=rng.standard_normal((vocab, dim)),
        biases=rng.standard_normal(vocab),
        candidates=tuple(range(n_classes)),
    )
    demo = rng.standard_normal((n_demos, dim))
    return Bundle(
        head=head,
        label_names=tuple(f"class_{i}" for i in range(n_classes)),
        demo_features=demo,
        query_features=rng.standard_normal((n_queries, dim)),
        demo_labels=rng.integers(0, n_classes, n_demos) if with_labels else None,
        query_labels=rng.integers(0, n_classes, n_queries) if with_labels else None,
        stats=estimate_stats(demo) if with_stats else None,
    )


def read_manifest(path):
    with open(os.path.join(path, "manifest.json")) as f:
        return json.load(f)


def rewrite_manifest(path, mutate):
    manifest = read_manifest(path)
    mutate(manifest)
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f)


def all_bytes(path):
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as f:
            out[name] = f.read()
    return out


def test_known_byte_encoding(tmp_path):
    head = ClassifierHead(weights=np.eye(2), biases=np.zeros(2), candidates=(0, 1))
    bundle = Bundle(
        head=head,
        label_names=("a", "b"),
        demo_features=np.array([[1.5, -2.0]]),
        query_features=np.zeros((0, 2)),
    )
    path = tmp_path / "b"
    write_bundle(path, bundle)
    data = (path / "demo_features.f32").read_bytes()
    assert data == bytes([0x00, 0x00, 0xC0, 0x3F, 0x00, 0x00, 0x00, 0xC0])


def test_round_trip_values(tmp_path):
    bundle = make_bundle(seed=1, with_stats=True)
    path = tmp_path / "b"
    write_bundle(path, bundle)
    back = read_bundle(path)
    # storage is 32-bit: loaded arrays equal the f32 cast of the originals
    np.testing.assert_array_equal(
        back.demo_features, bundle.demo_features.astype(np.float32).astype(np.float64)
    )
    np.testing.assert_array_equal(
        back.head.weights, bundle.head.weights.astype(np.float32).astype(np.float64)
    )
    np.testing.assert_array_equal(back.demo_labels, bundle.demo_labels)
    np.testing.assert_array_equal(back.query_labels, bundle.query_labels)
    assert back.head.candidates == bundle.head.candidates
    assert back.label_names == bundle.label_names
    assert back.stats is not None
    assert back.stats.count == bundle.stats.count
    np.testing.assert_array_equal(
        back.stats.mean, bundle.stats.mean.astype(np.float32).astype(np.float64)
    )


def test_write_read_write_byte_identical(tmp_path):
    for seed in range(5):
        bundle = make_bundle(seed=seed, with_labels=seed % 2 == 0, with_stats=seed % 3 == 0)
        first = tmp_path / f"a{seed}"
        second = tmp_path / f"b{seed}"
        write_bundle(first, bundle)
        write_bundle(second, read_bundle(first))
        assert all_bytes(first) == all_bytes(second)


def test_manifest_is_sorted_and_versioned(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    manifest = read_manifest(path)
    assert manifest["format_version"] == 1
    keys = list(manifest.keys())
    assert keys == sorted(keys)
    for k in ("dim", "vocab_size", "n_demos", "n_queries", "num_classes",
              "candidates", "label_names", "files"):
        assert k in manifest


def test_unknown_manifest_keys_ignored(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    rewrite_manifest(path, lambda m: m.update(extra_field="ignored", zzz=[1, 2]))
    read_bundle(path)  # must not raise


def test_format_version_2_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    rewrite_manifest(path, lambda m: m.update(format_version=2))
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "format_version"


def test_missing_weights_file(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    os.remove(path / "head_weights.f32")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.head_weights"


def test_file_size_mismatch(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    with open(path / "query_features.f32", "ab") as f:
        f.write(b"\x00\x00\x00\x00")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.query_features"


def test_manifest_missing(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    os.remove(path / "manifest.json")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "manifest.json"


def test_manifest_not_json(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    (path / "manifest.json").write_text("{not json")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "manifest.json"


def test_missing_required_key(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    rewrite_manifest(path, lambda m: m.pop("vocab_size"))
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "vocab_size"


def test_nonexistent_path_is_io_error(tmp_path):
    with pytest.raises(IoError):
        read_bundle(tmp_path / "nope")


def test_label_out_of_range_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle(n_classes=2))
    labels = np.fromfile(path / "demo_labels.f32", dtype="<f4")
    labels[0] = 7.0
    labels.tofile(path / "demo_labels.f32")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.demo_labels"


def test_non_integral_label_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle(n_classes=2))
    labels = np.fromfile(path / "demo_labels.f32", dtype="<f4")
    labels[0] = 0.5
    labels.tofile(path / "demo_labels.f32")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.demo_labels"


def test_non_finite_feature_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    arr = np.fromfile(path / "demo_features.f32", dtype="<f4")
    arr[0] = np.nan
    arr.tofile(path / "demo_features.f32")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.demo_features"


def test_stats_mean_without_cov_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle(with_stats=True))
    os.remove(path / "stats_cov.f32")

    def drop(m):
        del m["files"]["stats_cov"]

    rewrite_manifest(path, drop)
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field in ("files.stats_cov", "files.stats_mean")


def test_rank_deficient_stats_survive_f32_round_trip(tmp_path):
    # 2 samples in 6-dim: rank-1 covariance whose f32 image can dip below
    # the PSD tolerance; the reader must repair it, not crash.
    rng = np.random.default_rng(3)
    demo = rng.standard_normal((2, 6)) * 3.0
    bundle = make_bundle(seed=4, dim=6, n_demos=2, with_stats=True)
    assert bundle.stats is not None
    path = tmp_path / "b"
    write_bundle(path, bundle)
    back = read_bundle(path)
    assert back.stats is not None
    assert back.stats.count == bundle.stats.count
    # repair may only add a hair of ridge, never change the scale
    np.testing.assert_allclose(
        np.trace(back.stats.cov), np.trace(bundle.stats.cov), rtol=1e-5
    )


def test_foreign_indefinite_stats_cov_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle(dim=2, with_stats=True))
    bad = np.array([[1.0, 2.0], [2.0, 1.0]], dtype="<f4")  # eigenvalues -1, 3
    bad.tofile(path / "stats_cov.f32")
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.stats_cov"


def test_healthy_stats_load_bit_exact(tmp_path):
    bundle = make_bundle(seed=5, dim=3, n_demos=50, with_stats=True)
    path = tmp_path / "b"
    write_bundle(path, bundle)
    back = read_bundle(path)
    stored = np.fromfile(path / "stats_cov.f32", dtype="<f4").reshape(3, 3)
    np.testing.assert_array_equal(back.stats.cov, stored.astype(np.float64))


def test_bad_candidates_in_manifest(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    rewrite_manifest(path, lambda m: m.update(candidates=[0, 0]))
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "candidates"


def test_label_names_length_must_match(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())
    rewrite_manifest(path, lambda m: m.update(label_names=["only_one"]))
    with pytest.raises(InvalidBundle):
        read_bundle(path)


def test_bundle_constructor_validates_label_names():
    head = ClassifierHead(weights=np.eye(3), biases=np.zeros(3), candidates=(0, 1))
    with pytest.raises(LengthMismatch):
        Bundle(
            head=head,
            label_names=("a", "b", "c"),
            demo_features=np.zeros((1, 3)),
            query_features=np.zeros((1, 3)),
        )


def test_unsafe_filename_rejected(tmp_path):
    path = tmp_path / "b"
    write_bundle(path, make_bundle())

    def sneak(m):
        m["files"]["demo_features"] = "../outside.f32"

    rewrite_manifest(path, sneak)
    with pytest.raises(InvalidBundle) as exc:
        read_bundle(path)
    assert exc.value.field == "files.demo_features"
