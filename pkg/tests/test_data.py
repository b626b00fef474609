import struct
from collections import Counter, defaultdict

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from moab.data import (
    CSV_HEADER,
    GeneratorSpec,
    Mode,
    Sample,
    batches,
    check_labels,
    generate,
    load_csv,
    save_csv,
    sidecar_path,
    split,
    to_features,
)
from moab.exceptions import DataError, FormatError, ParameterError, SplitError


def lookup_accuracy(keys, labels):
    """Best accuracy of any classifier that only sees ``keys``: majority label per key."""
    table = defaultdict(Counter)
    for k, y in zip(keys, labels):
        table[k][y] += 1
    return sum(c.most_common(1)[0][1] for c in table.values()) / len(labels)


@pytest.fixture(scope="module")
def clean_xor():
    return generate(GeneratorSpec(class_counts=(10, 10, 10), noise=0.0, seed=5))


class TestGenerate:
    def test_counts(self):
        samples = generate(GeneratorSpec(class_counts=(10, 10, 10), seed=1))
        assert len(samples) == 30
        assert Counter(s.grade for s in samples) == {0: 10, 1: 10, 2: 10}

    @pytest.mark.parametrize("mode", list(Mode))
    def test_schema(self, mode):
        for s in generate(GeneratorSpec(class_counts=(7, 5, 9), mode=mode, seed=2)):
            assert s.genes.shape == (80,) and np.all(np.isfinite(s.genes))
            assert s.genes[79] in (0.0, 1.0)
            assert s.image.shape == (1, 32, 32)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0
            assert s.grade in (0, 1, 2)

    def test_deterministic(self):
        spec = GeneratorSpec(class_counts=(6, 4, 8), seed=9)
        assert generate(spec) == generate(spec)
        assert generate(spec) != generate(GeneratorSpec(class_counts=(6, 4, 8), seed=10))

    def test_groups_share_genes_and_grade(self):
        by_group = defaultdict(list)
        for s in generate(GeneratorSpec(class_counts=(20, 20, 20), seed=3)):
            by_group[s.group_id].append(s)
        assert any(len(v) > 1 for v in by_group.values())
        for members in by_group.values():
            assert len(members) <= 3
            assert len({m.grade for m in members}) == 1
            assert all(np.array_equal(m.genes, members[0].genes) for m in members)

    def test_genes_alone_cap_at_two_thirds(self, clean_xor):
        keys = [s.genes.tobytes() for s in clean_xor]
        labels = [s.grade for s in clean_xor]
        assert len(set(keys)) == 2
        assert lookup_accuracy(keys, labels) == pytest.approx(2 / 3)
        genes = np.stack([s.genes for s in clean_xor])
        probe = LogisticRegression(max_iter=2000).fit(genes, labels)
        assert probe.score(genes, labels) <= 2 / 3 + 1e-12

    def test_images_alone_cannot_separate(self, clean_xor):
        # the orientation is the only label-bearing image content
        keys = [bool(np.all(s.image[0] == s.image[0, :, :1])) for s in clean_xor]
        assert lookup_accuracy(keys, [s.grade for s in clean_xor]) <= 2 / 3

    def test_both_modalities_determine_grade(self, clean_xor):
        keys = [(s.genes.tobytes(), s.image.tobytes()) for s in clean_xor]
        assert lookup_accuracy(keys, [s.grade for s in clean_xor]) == 1.0
        orient = [(s.genes[79], bool(np.all(s.image[0] == s.image[0, :, :1]))) for s in clean_xor]
        assert lookup_accuracy(orient, [s.grade for s in clean_xor]) == 1.0

    def test_easy_mode_genes_suffice(self):
        samples = generate(GeneratorSpec(class_counts=(10, 10, 10), mode="easy", noise=0.0, seed=5))
        assert lookup_accuracy([s.genes.tobytes() for s in samples], [s.grade for s in samples]) == 1.0

    @pytest.mark.parametrize(
        "kwargs", [{"class_counts": (0, 1, 1)}, {"class_counts": (1, 1)}, {"noise": -0.1}, {"max_rois_per_group": 0}]
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ParameterError):
            GeneratorSpec(**kwargs)

    def test_scaled_counts(self):
        assert GeneratorSpec.scaled(1458).class_counts == (396, 408, 654)
        assert GeneratorSpec.scaled(750).class_counts == (204, 210, 336)
        assert sum(GeneratorSpec.scaled(101).class_counts) == 101


def grouped(n_groups, per_group):
    return [
        Sample(f"s{g}_{i}", f"g{g}", g % 3, np.zeros(80), np.zeros((1, 32, 32)))
        for g in range(n_groups)
        for i in range(per_group)
    ]


class TestSplit:
    def test_arithmetic(self):
        sp = split(grouped(10, 2), test_fraction=0.2, replicas=9, seed=0)
        assert len(sp.test_groups) == 2
        assert len(sp.test) == 2 * 2 * 9
        assert len(sp.train) == 8 * 2

    def test_replicas_copy_genes_and_grade(self, rng):
        base = [
            Sample(f"s{i}", f"g{i}", i % 3, rng.standard_normal(80), rng.uniform(size=(1, 32, 32))) for i in range(10)
        ]
        sp = split(base, replicas=9, seed=4)
        originals = {s.sample_id: s for s in base}
        for t in sp.test:
            src = originals[t.sample_id.rsplit("_p", 1)[0]]
            assert np.array_equal(t.genes, src.genes) and t.grade == src.grade and t.group_id == src.group_id
            assert t.image.min() >= 0.0 and t.image.max() <= 1.0
        assert len({t.image.tobytes() for t in sp.test}) == len(sp.test)

    def test_single_replica_is_unchanged(self):
        base = grouped(10, 1)
        sp = split(base, replicas=1, seed=0)
        assert len(sp.test) == 2
        assert all(t in base for t in sp.test)

    def test_no_group_overlap(self):
        samples = generate(GeneratorSpec(class_counts=(15, 15, 20), seed=0))
        for seed in range(100):
            sp = split(samples, test_fraction=0.3, replicas=2, seed=seed)
            assert not {s.group_id for s in sp.train} & {s.group_id for s in sp.test}
            assert {s.group_id for s in sp.test} == set(sp.test_groups)

    def test_deterministic(self):
        samples = grouped(12, 2)
        assert split(samples, seed=3).test == split(samples, seed=3).test

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(SplitError):
            split(grouped(10, 1), test_fraction=fraction)

    def test_too_few_groups(self):
        with pytest.raises(SplitError):
            split(grouped(2, 5), test_fraction=0.2)


class TestFiles:
    def test_round_trip(self, tmp_path):
        samples = generate(GeneratorSpec(class_counts=(1, 1, 1), seed=7))
        save_csv(samples, tmp_path / "d.csv")
        loaded = load_csv(tmp_path / "d.csv")
        assert len(loaded) == 3
        for a, b in zip(samples, loaded):
            assert (a.sample_id, a.group_id, a.grade) == (b.sample_id, b.group_id, b.grade)
            assert np.array_equal(a.genes, b.genes)
            assert np.array_equal(b.image, a.image.astype(np.float32).astype(np.float64))

    def test_sidecar_layout(self, tmp_path):
        samples = generate(GeneratorSpec(class_counts=(1, 1, 1), seed=7))
        save_csv(samples, tmp_path / "d.csv")
        blob = sidecar_path(tmp_path / "d.csv").read_bytes()
        assert blob[:4] == b"MOAB"
        assert struct.unpack("<III", blob[4:16]) == (3, 32, 32)
        assert len(blob) == 16 + 3 * 32 * 32 * 4
        first = np.frombuffer(blob[16 : 16 + 4096], dtype="<f4").reshape(32, 32)
        assert np.array_equal(first, samples[0].image[0].astype(np.float32))

    def test_empty(self, tmp_path):
        save_csv([], tmp_path / "e.csv")
        assert load_csv(tmp_path / "e.csv") == []
        assert (tmp_path / "e.csv").read_text().strip() == ",".join(CSV_HEADER)

    def test_79_gene_columns(self, tmp_path):
        save_csv(generate(GeneratorSpec(class_counts=(1, 1, 1), seed=0)), tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        trimmed = [",".join(line.split(",")[:-1]) for line in lines]
        (tmp_path / "d.csv").write_text("\n".join(trimmed) + "\n")
        with pytest.raises(FormatError, match="found 79") as info:
            load_csv(tmp_path / "d.csv")
        assert "line 1" in str(info.value)

    def test_bad_magic(self, tmp_path):
        save_csv(generate(GeneratorSpec(class_counts=(1, 1, 1), seed=0)), tmp_path / "d.csv")
        img = sidecar_path(tmp_path / "d.csv")
        img.write_bytes(b"BAOM" + img.read_bytes()[4:])
        with pytest.raises(FormatError, match="offset 0"):
            load_csv(tmp_path / "d.csv")

    def test_truncated_sidecar(self, tmp_path):
        save_csv(generate(GeneratorSpec(class_counts=(1, 1, 1), seed=0)), tmp_path / "d.csv")
        img = sidecar_path(tmp_path / "d.csv")
        img.write_bytes(img.read_bytes()[:-8])
        with pytest.raises(FormatError, match="offset 16"):
            load_csv(tmp_path / "d.csv")

    def test_bad_row(self, tmp_path):
        save_csv(generate(GeneratorSpec(class_counts=(1, 1, 1), seed=0)), tmp_path / "d.csv")
        text = (tmp_path / "d.csv").read_text().splitlines()
        fields = text[2].split(",")
        fields[2] = "II"
        text[2] = ",".join(fields)
        (tmp_path / "d.csv").write_text("\n".join(text) + "\n")
        with pytest.raises(FormatError, match="line 3"):
            load_csv(tmp_path / "d.csv")


class TestBatches:
    def test_sizes(self):
        assert [len(b.labels) for b in batches(grouped(20, 1), 8)] == [8, 8, 4]

    def test_order_preserved(self):
        samples = grouped(10, 2)
        ids = [i for b in batches(samples, 3) for i in b.sample_ids]
        assert ids == [s.sample_id for s in samples]

    def test_shuffle_covers_each_sample_once(self):
        samples = grouped(13, 3)
        for seed in range(5):
            ids = [i for b in batches(samples, 8, shuffle=True, seed=seed) for i in b.sample_ids]
            assert len(ids) == len(samples)
            assert set(ids) == {s.sample_id for s in samples}
        first = [i for b in batches(samples, 8, shuffle=True, seed=0) for i in b.sample_ids]
        again = [i for b in batches(samples, 8, shuffle=True, seed=0) for i in b.sample_ids]
        assert first == again

    def test_tensor_shapes(self):
        b = next(batches(grouped(5, 1), 4))
        assert b.images.shape == (4, 1, 32, 32) and b.genes.shape == (4, 80) and b.labels.shape == (4,)

    def test_bad_batch_size(self):
        with pytest.raises(ParameterError):
            list(batches(grouped(5, 1), 0))


def test_feature_layout():
    samples = generate(GeneratorSpec(class_counts=(1, 1, 1), seed=0))
    X, y = to_features(samples)
    assert X.shape == (3, 80 + 1024)
    assert np.array_equal(X[1, :80], samples[1].genes)
    assert np.array_equal(X[1, 80:].reshape(1, 32, 32), samples[1].image)
    assert y.tolist() == [s.grade for s in samples]


def test_check_labels():
    assert check_labels([0, 2.0, 1]).tolist() == [0, 2, 1]
    with pytest.raises(DataError):
        check_labels([0, 3])
    with pytest.raises(DataError):
        check_labels([0.5])
