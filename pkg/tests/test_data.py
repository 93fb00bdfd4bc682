import hashlib

import numpy as np
import pytest

from unicon.components import DimConfig
from unicon.data import (Triplet, export_dataset, import_triplets,
                         shard_dataset, synth_generate)
from unicon.exceptions import DataError

DIMS = DimConfig()


def digest(dataset):
    h = hashlib.sha256()
    for t in dataset.triplets:
        h.update(t.x_i.tobytes())
        h.update(t.x_q.tobytes())
        h.update(t.answer.encode())
    return h.hexdigest()


class TestSynthGenerate:
    def test_deterministic(self):
        a = synth_generate(7, 100, 8, DIMS)
        b = synth_generate(7, 100, 8, DIMS)
        assert digest(a) == digest(b)

    def test_seed_changes_data(self):
        a = synth_generate(7, 100, 8, DIMS)
        b = synth_generate(8, 100, 8, DIMS)
        assert digest(a) != digest(b)

    def test_zero_noise_collapses_to_prototypes(self):
        ds = synth_generate(0, 200, 4, DIMS, noise=0.0)
        per_class = {}
        for t in ds.triplets:
            per_class.setdefault(t.class_id, []).append(t.x_i)
        for vs in per_class.values():
            for v in vs[1:]:
                np.testing.assert_array_equal(v, vs[0])

    def test_class_balance_within_4_sigma(self):
        n, C = 4000, 8
        ds = synth_generate(3, n, C, DIMS)
        counts = np.bincount([t.class_id for t in ds.triplets], minlength=C)
        p = 1.0 / C
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 4 * sigma)

    def test_answer_matches_class(self):
        ds = synth_generate(1, 50, 5, DIMS)
        for t in ds.triplets:
            assert t.answer == f"ans{t.class_id}"

    def test_vocab_overflow(self):
        with pytest.raises(DataError):
            synth_generate(0, 10, 100, DIMS)

    def test_question_tokens_padded(self):
        ds = synth_generate(2, 20, 4, DIMS)
        for t in ds.triplets:
            assert t.x_q.shape == (DIMS.Q,)
            # "what kind is <filler> thing<c>" = 5 words, rest pad
            assert (t.x_q[:5] > 0).all() and (t.x_q[5:] == 0).all()


class TestSharding:
    def test_sizes_near_equal(self):
        ds = synth_generate(0, 10, 4, DIMS)
        shards = shard_dataset(ds, 3, seed=0)
        assert sorted(s.n for s in shards) == [3, 3, 4]
        assert [s.client_id for s in shards] == [0, 1, 2]

    def test_disjoint_and_complete(self):
        ds = synth_generate(0, 50, 4, DIMS)
        shards = shard_dataset(ds, 4, seed=0)
        seen = [id(t) for s in shards for t in s.triplets]
        assert len(seen) == 50
        assert len(set(seen)) == 50
        assert set(seen) == {id(t) for t in ds.triplets}

    def test_deterministic(self):
        ds = synth_generate(0, 40, 4, DIMS)
        a = shard_dataset(ds, 3, seed=5)
        b = shard_dataset(ds, 3, seed=5)
        for sa, sb in zip(a, b):
            assert [id(t) for t in sa.triplets] == [id(t) for t in sb.triplets]

    def test_label_skew_bands_classes(self):
        ds = synth_generate(0, 400, 8, DIMS)
        shards = shard_dataset(ds, 4, seed=0, label_skew=True)
        # class ids are non-decreasing across the shard sequence
        flat = [t.class_id for s in shards for t in s.triplets]
        assert flat == sorted(flat)
        # each shard sees far fewer than all 8 classes
        for s in shards:
            assert len({t.class_id for t in s.triplets}) <= 4

    def test_too_many_shards(self):
        ds = synth_generate(0, 3, 2, DIMS)
        with pytest.raises(DataError):
            shard_dataset(ds, 4, seed=0)


class TestExportImport:
    def test_roundtrip_exact(self, tmp_path):
        ds = synth_generate(9, 30, 4, DIMS)
        path = tmp_path / "triplets.txt"
        export_dataset(ds, path)
        back = import_triplets(path)
        assert len(back) == 30
        for orig, t in zip(ds.triplets, back):
            np.testing.assert_array_equal(orig.x_i, t.x_i)
            np.testing.assert_array_equal(orig.x_q, t.x_q)
            assert orig.answer == t.answer
            assert orig.class_id == t.class_id


def test_linear_probe_separates_classes():
    """Sanity: with modest noise the image vectors are linearly separable
    enough that a nearest-prototype rule scores well above chance."""
    ds = synth_generate(4, 400, 8, DIMS, noise=0.1)
    protos = {}
    for t in ds.triplets[:200]:
        protos.setdefault(t.class_id, []).append(t.x_i)
    centers = np.stack([np.mean(protos[c], axis=0) for c in range(8)])
    correct = 0
    for t in ds.triplets[200:]:
        pred = int(np.argmin(((centers - t.x_i) ** 2).sum(axis=1)))
        correct += pred == t.class_id
    assert correct / 200 > 0.9
