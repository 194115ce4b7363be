import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zsntta.errors import (
    BadMagic,
    BadSpec,
    FeatureFileError,
    InsufficientRecords,
    LabelOutOfRange,
    TruncatedPayload,
    ZeroVector,
)
from zsntta.features import (
    ClassifierBank,
    ClusterSpec,
    NOISY_LABEL,
    NoiseBank,
    StreamRecord,
    load_noise_bank,
    mix_streams,
    normalize,
    read_feature_file,
    synth_stream,
    synthetic_noise_bank,
    write_feature_file,
    write_noise_bank,
)
from zsntta.scoring import classify, cosine_similarities


class TestNormalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(normalize([3, 4]), [0.6, 0.8], atol=1e-15)

    def test_already_unit(self):
        np.testing.assert_allclose(normalize([1, 0, 0]), [1, 0, 0], atol=1e-15)

    def test_random_512_dim_unit_norm(self):
        rng = np.random.default_rng(0)
        v = normalize(rng.standard_normal(512) * 37.0)
        # independent norm recomputation
        norm = math.sqrt(sum(float(x) * float(x) for x in v))
        assert abs(norm - 1.0) < 1e-9

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([0.0, 0.0, 0.0])
        with pytest.raises(ZeroVector):
            normalize(np.full(4, 1e-13))

    def test_non_finite_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([1.0, np.nan])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=64))
    def test_direction_preserved(self, values):
        v = np.asarray(values, dtype=np.float64)
        if np.linalg.norm(v) < 1e-6:
            return
        u = normalize(v)
        np.testing.assert_allclose(u * np.linalg.norm(v), v, rtol=1e-9, atol=1e-9)


def _small_bank(k=2, d=4, seed=0):
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((k, d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    return ClassifierBank(protos.astype(np.float32), [f"name_{i}" for i in range(k)])


def _records(bank, n, seed=0, noisy_every=3):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        f = rng.standard_normal(bank.dim)
        f /= np.linalg.norm(f)
        label = NOISY_LABEL if i % noisy_every == 0 else i % bank.num_classes
        out.append(StreamRecord(f.astype(np.float32), label))
    return out


class TestFeatureFile:
    def test_round_trip_small(self, tmp_path):
        bank = _small_bank()
        records = _records(bank, 3)
        path = tmp_path / "small.bin"
        write_feature_file(bank, records, path)
        bank2, records2 = read_feature_file(path)
        assert bank2.class_names == bank.class_names
        assert np.array_equal(bank2.prototypes, bank.prototypes)
        assert len(records2) == 3
        for a, b in zip(records, records2):
            assert a.label == b.label
            assert np.array_equal(a.feature, b.feature)

    def test_round_trip_large(self, tmp_path):
        bank = _small_bank(k=10, d=512, seed=3)
        records = _records(bank, 100, seed=4)
        path = tmp_path / "large.bin"
        write_feature_file(bank, records, path)
        _, records2 = read_feature_file(path)
        assert all(
            np.array_equal(a.feature, b.feature) and a.label == b.label
            for a, b in zip(records, records2)
        )

    def test_two_writes_byte_identical(self, tmp_path):
        bank = _small_bank(seed=1)
        records = _records(bank, 7, seed=2)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_feature_file(bank, records, p1)
        write_feature_file(bank, records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_write_then_rewrite_parsed_is_identical(self, tmp_path):
        bank = _small_bank(seed=5)
        records = _records(bank, 9, seed=6)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_feature_file(bank, records, p1)
        parsed_bank, parsed_records = read_feature_file(p1)
        write_feature_file(parsed_bank, parsed_records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_file_bad_magic(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        with pytest.raises(BadMagic):
            read_feature_file(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(BadMagic):
            read_feature_file(path)

    def test_truncated_payload(self, tmp_path):
        bank = _small_bank()
        records = _records(bank, 3)
        path = tmp_path / "t.bin"
        write_feature_file(bank, records, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(TruncatedPayload):
            read_feature_file(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        bank = _small_bank()
        path = tmp_path / "t.bin"
        write_feature_file(bank, _records(bank, 3), path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(TruncatedPayload):
            read_feature_file(path)

    def test_label_out_of_range(self, tmp_path):
        bank = _small_bank(k=2)
        records = _records(bank, 3)
        path = tmp_path / "t.bin"
        write_feature_file(bank, records, path)
        raw = bytearray(path.read_bytes())
        # first record label sits right after header + classifier block
        offset = 24 + 2 * 4 * 4
        raw[offset : offset + 4] = (2).to_bytes(4, "little", signed=True)  # label == K
        path.write_bytes(bytes(raw))
        with pytest.raises(LabelOutOfRange):
            read_feature_file(path)

    def test_unsupported_version(self, tmp_path):
        bank = _small_bank()
        path = tmp_path / "t.bin"
        write_feature_file(bank, _records(bank, 1), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (9).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FeatureFileError):
            read_feature_file(path)

    def test_unwritable_path(self, tmp_path):
        bank = _small_bank()
        with pytest.raises(OSError):
            write_feature_file(bank, [], tmp_path / "missing_dir" / "x.bin")

    def test_write_rejects_bad_label(self, tmp_path):
        bank = _small_bank(k=2)
        rec = StreamRecord(np.zeros(4, dtype=np.float32), 5)
        with pytest.raises(LabelOutOfRange):
            write_feature_file(bank, [rec], tmp_path / "x.bin")

    def test_missing_sidecar_placeholder_names(self, tmp_path):
        bank = _small_bank()
        path = tmp_path / "t.bin"
        write_feature_file(bank, _records(bank, 2), path)
        (tmp_path / "t.bin.names").unlink()
        bank2, _ = read_feature_file(path)
        assert bank2.class_names == ["class_0000", "class_0001"]


class TestNoiseBank:
    def test_round_trip(self, tmp_path):
        bank = synthetic_noise_bank(16, 12, seed=0)
        path = tmp_path / "nb.bin"
        write_noise_bank(bank, path)
        loaded = load_noise_bank(path, "synthetic_gaussian_feature")
        assert np.array_equal(loaded.features, bank.features)
        assert loaded.noise_type == "synthetic_gaussian_feature"

    def test_unit_norm_and_determinism(self):
        a = synthetic_noise_bank(32, 50, seed=9)
        b = synthetic_noise_bank(32, 50, seed=9)
        assert np.array_equal(a.features, b.features)
        norms = np.linalg.norm(a.features.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1) < 1e-3)

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            NoiseBank("sparkle", np.zeros((1, 4), dtype=np.float32))

    def test_bad_spec(self):
        with pytest.raises(BadSpec):
            synthetic_noise_bank(8, 0, seed=0)


class TestSynthStream:
    def test_deterministic(self):
        spec = ClusterSpec(num_classes=3, dim=8, n_per_class=5, ood_clusters=2,
                           concentration=10.0, seed=7)
        bank1, id1, ood1 = synth_stream(spec)
        bank2, id2, ood2 = synth_stream(spec)
        assert np.array_equal(bank1.prototypes, bank2.prototypes)
        assert all(np.array_equal(a.feature, b.feature) for a, b in zip(id1, id2))
        assert all(np.array_equal(a.feature, b.feature) for a, b in zip(ood1, ood2))

    def test_different_seeds_differ(self):
        spec_a = ClusterSpec(3, 8, 5, 2, 10.0, seed=0)
        spec_b = ClusterSpec(3, 8, 5, 2, 10.0, seed=1)
        assert not np.array_equal(synth_stream(spec_a)[0].prototypes,
                                  synth_stream(spec_b)[0].prototypes)

    def test_infinite_concentration_equals_prototypes(self):
        spec = ClusterSpec(4, 16, 3, 2, float("inf"), seed=2)
        bank, id_records, _ = synth_stream(spec)
        protos = bank.prototypes.astype(np.float64)
        correct = 0
        for rec in id_records:
            assert np.allclose(rec.feature, protos[rec.label], atol=1e-6)
            sims = cosine_similarities(rec.feature, bank)
            correct += classify(sims) == rec.label
        assert correct == len(id_records)

    def test_moderate_concentration_classifies_well(self):
        # independent check: run the frozen classifier over the generated set
        spec = ClusterSpec(2, 8, 200, 2, 20.0, seed=11)
        bank, id_records, _ = synth_stream(spec)
        hits = sum(
            classify(cosine_similarities(r.feature, bank)) == r.label
            for r in id_records
        )
        assert hits / len(id_records) >= 0.95

    def test_labels_and_counts(self):
        spec = ClusterSpec(3, 8, 4, 2, 5.0, seed=0)
        bank, id_records, ood_records = synth_stream(spec)
        assert len(id_records) == 12 and len(ood_records) == 8
        assert sorted({r.label for r in id_records}) == [0, 1, 2]
        assert all(r.label == NOISY_LABEL for r in ood_records)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(num_classes=1, dim=8, n_per_class=1, ood_clusters=1, concentration=1.0),
            dict(num_classes=2, dim=1, n_per_class=1, ood_clusters=1, concentration=1.0),
            dict(num_classes=2, dim=8, n_per_class=0, ood_clusters=1, concentration=1.0),
            dict(num_classes=2, dim=8, n_per_class=1, ood_clusters=-1, concentration=1.0),
            dict(num_classes=2, dim=8, n_per_class=1, ood_clusters=1, concentration=0.0),
        ],
    )
    def test_bad_specs(self, kwargs):
        with pytest.raises(BadSpec):
            ClusterSpec(seed=0, **kwargs)


def _key(record):
    return (record.label, record.feature.tobytes())


class TestMixStreams:
    def _streams(self, n_id=30, n_ood=30, seed=0):
        spec = ClusterSpec(3, 8, n_id // 3, 3, 5.0, seed=seed)
        bank, id_records, ood_records = synth_stream(spec)
        return id_records, ood_records[:n_ood]

    def test_ratio_zero_id_only(self):
        id_records, ood_records = self._streams()
        mixed = mix_streams(id_records, ood_records, 0.0, seed=0)
        assert sorted(map(_key, mixed)) == sorted(map(_key, id_records))

    def test_ratio_half_exact_balance(self):
        spec = ClusterSpec(2, 8, 50, 2, 5.0, seed=3)
        _, id_records, ood_records = synth_stream(spec)
        mixed = mix_streams(id_records, ood_records, 0.5, seed=1)
        assert len(mixed) == 200
        assert sum(r.label == NOISY_LABEL for r in mixed) == 100

    def test_seeds_permute_identical_multisets(self):
        id_records, ood_records = self._streams()
        a = mix_streams(id_records, ood_records, 0.4, seed=0)
        b = mix_streams(id_records, ood_records, 0.4, seed=1)
        assert [_key(r) for r in a] != [_key(r) for r in b]
        assert sorted(map(_key, a)) == sorted(map(_key, b))

    def test_insufficient_records(self):
        id_records, ood_records = self._streams(n_ood=5)
        with pytest.raises(InsufficientRecords):
            mix_streams(id_records, ood_records, 0.75, seed=0)

    def test_ratio_one_returns_noisy_only(self):
        id_records, ood_records = self._streams()
        mixed = mix_streams(id_records, ood_records, 1.0, seed=0)
        assert sorted(map(_key, mixed)) == sorted(map(_key, ood_records))

    def test_ratio_out_of_range(self):
        with pytest.raises(ValueError):
            mix_streams([], [], 1.5, seed=0)

    @given(
        n_id=st.integers(1, 60),
        n_ood=st.integers(0, 240),
        ratio=st.floats(0.0, 0.8),
        seed=st.integers(0, 10),
    )
    @settings(max_examples=60, deadline=None)
    def test_ratio_within_rounding(self, n_id, n_ood, ratio, seed):
        rng = np.random.default_rng(0)
        ids = [StreamRecord(rng.random(4).astype(np.float32), 0) for _ in range(n_id)]
        oods = [StreamRecord(rng.random(4).astype(np.float32), NOISY_LABEL) for _ in range(n_ood)]
        try:
            mixed = mix_streams(ids, oods, ratio, seed)
        except InsufficientRecords:
            assert round(n_id * ratio / (1 - ratio)) > n_ood
            return
        got = sum(r.label == NOISY_LABEL for r in mixed) / len(mixed)
        assert abs(got - ratio) <= 1.0 / len(mixed) + 1e-12
