import numpy as np
import pytest

from advise.bundles import (
    FORMAT_VERSION,
    Manifest,
    TensorBundle,
    read_bundle,
    validate_bundle,
    write_bundle,
)
from advise.errors import ValidationError
from advise.ioutil import dump_json, load_json
from conftest import make_bundle


def valid_bundle(rng, logits=False):
    bundle = make_bundle(rng, [1, 2, 1])
    if logits:
        lg = np.zeros(10, dtype=np.float32)
        lg[3] = bundle.manifest.class_score
        bundle.logits = lg
    return bundle


class TestValidate:
    def test_valid_passes_through(self, rng):
        b = valid_bundle(rng, logits=True)
        assert validate_bundle(b) is b

    def test_units_property(self, rng):
        assert valid_bundle(rng).units == 3

    def test_rank_rejected(self, rng):
        b = valid_bundle(rng)
        b.activation = b.activation[:, :, 0]
        with pytest.raises(ValidationError, match="rank-3"):
            validate_bundle(b)

    def test_shape_mismatch(self, rng):
        b = valid_bundle(rng)
        b.gradient = b.gradient[:, :-1, :]
        with pytest.raises(ValidationError, match="shape"):
            validate_bundle(b)

    def test_non_finite_reported_with_index(self, rng):
        b = valid_bundle(rng)
        b.gradient[2, 3, 1] = np.nan
        with pytest.raises(ValidationError, match=r"gradient.*\(2, 3, 1\)"):
            validate_bundle(b)

    def test_input_size(self, rng):
        b = valid_bundle(rng)
        b.manifest.input_size = [0, 40]
        with pytest.raises(ValidationError, match="input_size"):
            validate_bundle(b)

    def test_class_score_open_interval(self, rng):
        for bad in (0.0, 1.0, -0.2):
            b = valid_bundle(rng)
            b.manifest.class_score = bad
            with pytest.raises(ValidationError, match="class_score"):
                validate_bundle(b)

    def test_top5_length(self, rng):
        b = valid_bundle(rng)
        b.manifest.top5 = [1, 2, 3]
        with pytest.raises(ValidationError, match="top5"):
            validate_bundle(b)

    def test_logits_constraints(self, rng):
        b = valid_bundle(rng, logits=True)
        b.logits = b.logits.reshape(2, 5)
        with pytest.raises(ValidationError, match="rank-1"):
            validate_bundle(b)

        b = valid_bundle(rng, logits=True)
        b.logits[0] = 1.5
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            validate_bundle(b)

        b = valid_bundle(rng, logits=True)
        b.logits = b.logits[:2]  # class 3 now out of range
        with pytest.raises(ValidationError, match="class_index"):
            validate_bundle(b)

        b = valid_bundle(rng, logits=True)
        b.logits[3] += 1e-3
        with pytest.raises(ValidationError, match="disagrees"):
            validate_bundle(b)


class TestRoundTrip:
    def test_tensors_and_manifest_survive(self, rng, tmp_path):
        b = valid_bundle(rng, logits=True)
        path = write_bundle(b, tmp_path / "bundle")
        got = read_bundle(path)
        np.testing.assert_array_equal(got.activation,
                                      b.activation.astype("<f4"))
        np.testing.assert_array_equal(got.gradient,
                                      b.gradient.astype("<f4"))
        np.testing.assert_array_equal(got.logits, b.logits.astype("<f4"))
        man = got.manifest
        assert man.model == "test"
        assert man.layer == "conv"
        assert man.input_size == (40, 40)
        assert man.class_index == 3
        assert man.class_score == pytest.approx(0.62)
        assert man.top5 == [3, 1, 0, 7, 2]
        assert man.version == FORMAT_VERSION

    def test_logits_optional(self, rng, tmp_path):
        b = valid_bundle(rng)
        got = read_bundle(write_bundle(b, tmp_path / "b"))
        assert got.logits is None

    def test_write_is_deterministic(self, rng, tmp_path):
        b = valid_bundle(rng)
        p1 = write_bundle(b, tmp_path / "one")
        p2 = write_bundle(b, tmp_path / "two")
        for name in ("manifest.json", "activation.bin", "gradient.bin"):
            assert (tmp_path / "one" / name).read_bytes() == \
                (tmp_path / "two" / name).read_bytes()

    def test_write_validates_first(self, rng, tmp_path):
        b = valid_bundle(rng)
        b.gradient[0, 0, 0] = np.inf
        with pytest.raises(ValidationError):
            write_bundle(b, tmp_path / "bad")
        assert not (tmp_path / "bad" / "manifest.json").exists()

    def test_unknown_manifest_keys_ignored(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        doc = load_json(path / "manifest.json")
        doc["future_extension"] = {"nested": True}
        dump_json(doc, path / "manifest.json")
        read_bundle(path)  # should not raise


class TestReadErrors:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ValidationError, match="manifest"):
            read_bundle(tmp_path)

    def test_version_gate(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        doc = load_json(path / "manifest.json")
        doc["version"] = "advise-bundle/2"
        dump_json(doc, path / "manifest.json")
        with pytest.raises(ValidationError, match="version"):
            read_bundle(path)

    def test_missing_key(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        doc = load_json(path / "manifest.json")
        del doc["layer"]
        dump_json(doc, path / "manifest.json")
        with pytest.raises(ValidationError, match="layer"):
            read_bundle(path)

    def test_blob_size_mismatch(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        blob = path / "gradient.bin"
        blob.write_bytes(blob.read_bytes()[:-4])
        with pytest.raises(ValidationError, match="bytes"):
            read_bundle(path)

    def test_missing_blob(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        (path / "activation.bin").unlink()
        with pytest.raises(ValidationError, match="missing"):
            read_bundle(path)

    def test_unsupported_dtype(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        doc = load_json(path / "manifest.json")
        doc["tensors"][0]["dtype"] = "f64"
        dump_json(doc, path / "manifest.json")
        with pytest.raises(ValidationError, match="f32"):
            read_bundle(path)

    def test_required_tensor_missing(self, rng, tmp_path):
        path = write_bundle(valid_bundle(rng), tmp_path / "b")
        doc = load_json(path / "manifest.json")
        doc["tensors"] = [d for d in doc["tensors"]
                          if d["name"] != "gradient"]
        dump_json(doc, path / "manifest.json")
        with pytest.raises(ValidationError, match="gradient"):
            read_bundle(path)
