import math

import numpy as np
import pytest

from philaex.data import (
    Dataset,
    DatasetFormatError,
    FeatureVector,
    fit_tfidf,
    load_dataset,
    save_numeric_csv,
    save_token_lists,
    train_test_split,
)


def make_dataset(rows, dim, names=None):
    vocab = names or {i: f"f{i}" for i in range(dim)}
    samples = [(FeatureVector(entries, dim), label) for entries, label in rows]
    return Dataset(samples, vocab)


class TestFeatureVector:
    def test_zero_values_are_dropped(self):
        fv = FeatureVector({0: 1.0, 1: 0.0}, 3)
        assert fv.support() == (0,)
        assert fv.value(1) == 0.0

    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            FeatureVector({0: -1.0}, 2)
        with pytest.raises(ValueError):
            FeatureVector({0: float("nan")}, 2)

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(ValueError):
            FeatureVector({5: 1.0}, 3)

    def test_restrict_without_adding(self):
        fv = FeatureVector({0: 2.0, 2: 3.0}, 4)
        assert fv.restrict([0]).support() == (0,)
        assert fv.without([0]).support() == (2,)
        assert fv.adding({1: 1.0}).support() == (0, 1, 2)


class TestLoadTokenLists:
    def test_minimal_two_line_file(self, tmp_path):
        path = tmp_path / "toy.txt"
        path.write_text("1 SEND_SMS INTERNET\n0 INTERNET\n")
        ds = load_dataset(path, format="token-lists")
        assert ds.dim == 2
        assert set(ds.vocabulary.values()) == {"SEND_SMS", "INTERNET"}
        assert ds.vocabulary[0] == "SEND_SMS"  # first-seen order
        assert len(ds) == 2
        assert ds.samples[1][0].support() == (1,)

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="no samples"):
            load_dataset(path, format="token-lists")

    def test_malformed_label_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 A B\nmalware A\n")
        with pytest.raises(DatasetFormatError, match=":2:"):
            load_dataset(path, format="token-lists")

    def test_crlf_accepted(self, tmp_path):
        path = tmp_path / "crlf.txt"
        path.write_bytes(b"1 A B\r\n0 B\r\n")
        ds = load_dataset(path, format="token-lists")
        assert len(ds) == 2 and ds.dim == 2

    def test_roundtrip_through_writer(self, tmp_path):
        ds = make_dataset([({0: 1.0, 2: 1.0}, 1), ({1: 1.0}, 0)], 3)
        path = tmp_path / "written.txt"
        save_token_lists(ds, path)
        back = load_dataset(path, format="token-lists")
        assert len(back) == 2
        assert back.samples[0][0].support() == (0, 1)  # first-seen ids reassigned


class TestLoadNumericCsv:
    def test_135_feature_columns_at_scale(self, tmp_path):
        rng = np.random.default_rng(0)
        dim = 135
        lines = ["label," + ",".join(f"c{i}" for i in range(dim))]
        for row in range(9999):
            label = row % 2
            bits = (rng.random(dim) < 0.1).astype(int)
            lines.append(f"{label}," + ",".join(map(str, bits)))
        path = tmp_path / "pdf.csv"
        path.write_text("\n".join(lines) + "\n")
        ds = load_dataset(path, format="numeric-csv")
        assert ds.dim == 135
        assert len(ds) == 9999

    def test_header_without_label_column(self, tmp_path):
        path = tmp_path / "short_header.csv"
        path.write_text("a,b\n1,0,1\n0,1,0\n")
        ds = load_dataset(path, format="numeric-csv")
        assert ds.dim == 2
        assert ds.vocabulary == {0: "a", 1: "b"}

    def test_inconsistent_column_count_errors(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("label,a,b\n1,0,1\n0,1\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            load_dataset(path, format="numeric-csv")

    def test_empty_csv_errors(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="no samples"):
            load_dataset(path, format="numeric-csv")

    def test_writer_roundtrip(self, tmp_path):
        ds = make_dataset([({0: 1.0, 1: 1.0}, 1), ({2: 1.0}, 0)], 3)
        path = tmp_path / "rt.csv"
        save_numeric_csv(ds, path)
        back = load_dataset(path, format="numeric-csv")
        assert back.dim == 3
        assert back.samples[0][0].support() == (0, 1)
        assert back.labels().tolist() == [1, 0]


class TestTfIdf:
    def test_feature_in_every_sample_has_idf_one(self):
        ds = make_dataset([({0: 1.0}, 1), ({0: 1.0}, 0)], 1)
        enc = fit_tfidf(ds)
        assert enc.idf[0] == pytest.approx(1.0)

    def test_idf_n2_df1(self):
        ds = make_dataset([({0: 1.0, 1: 1.0}, 1), ({0: 1.0}, 0)], 2)
        enc = fit_tfidf(ds)
        assert enc.idf[1] == pytest.approx(1.4054651081081644)

    def test_unseen_feature_smoothing(self):
        # feature 2 exists in the vocabulary but no training sample has it
        ds = make_dataset([({0: 1.0}, 1), ({1: 1.0}, 0)], 3)
        enc = fit_tfidf(ds)
        assert enc.idf[2] == pytest.approx(math.log(3.0) + 1.0)

    def test_zero_vector_stays_zero(self):
        ds = make_dataset([({0: 1.0}, 1), ({1: 1.0}, 0)], 2)
        enc = fit_tfidf(ds)
        assert enc.encode(FeatureVector({}, 2)).support() == ()

    def test_single_feature_unit_norm(self):
        ds = make_dataset([({0: 1.0}, 1), ({1: 1.0}, 0)], 2)
        enc = fit_tfidf(ds)
        out = enc.encode(FeatureVector({0: 1.0}, 2))
        assert out.value(0) == pytest.approx(1.0)

    def test_two_equal_idf_features(self):
        ds = make_dataset([({0: 1.0, 1: 1.0}, 1), ({}, 0)], 2)
        enc = fit_tfidf(ds)
        out = enc.encode(FeatureVector({0: 1.0, 1: 1.0}, 2))
        assert out.value(0) == pytest.approx(0.7071067811865475)
        assert out.value(1) == pytest.approx(0.7071067811865475)

    def test_unknown_id_errors(self):
        ds = make_dataset([({0: 1.0}, 1), ({0: 1.0}, 0)], 1)
        enc = fit_tfidf(ds)
        with pytest.raises(KeyError):
            enc.encode(FeatureVector({1: 1.0}, 2))

    def test_encoding_is_deterministic(self):
        rng = np.random.default_rng(3)
        rows = [({int(i): 1.0 for i in rng.choice(20, 5, replace=False)}, int(rng.integers(2))) for _ in range(30)]
        ds = make_dataset(rows, 20)
        enc = fit_tfidf(ds)
        for fv, _ in ds.samples:
            a = enc.encode(fv)
            b = enc.encode(fv)
            assert a.entries == b.entries

    def test_every_encoded_vector_unit_or_zero_norm(self):
        rng = np.random.default_rng(4)
        rows = [({int(i): 1.0 for i in rng.choice(15, int(rng.integers(0, 6)), replace=False)}, 0) for _ in range(40)]
        ds = make_dataset(rows, 15)
        enc = fit_tfidf(ds)
        for fv, _ in ds.samples:
            norm = enc.encode(fv).norm()
            assert norm == pytest.approx(1.0) or norm == 0.0

    def test_empty_train_errors(self):
        with pytest.raises(ValueError):
            fit_tfidf(Dataset([], {0: "a"}))


class TestSplit:
    def test_paper_scale_counts(self):
        rows = [({0: 1.0}, i % 2) for i in range(11110)]
        ds = make_dataset(rows, 1)
        train, test = train_test_split(ds, 0.67, seed=0)
        assert (len(train), len(test)) == (7442, 3668)

    def test_stratified_tiny_split(self):
        ds = make_dataset([({0: 1.0}, 0), ({0: 1.0}, 0), ({0: 1.0}, 1), ({0: 1.0}, 1)], 1)
        train, test = train_test_split(ds, 0.5, seed=9)
        assert len(train) == 2 and len(test) == 2
        assert sorted(train.labels().tolist()) == [0, 1]
        assert sorted(test.labels().tolist()) == [0, 1]

    def test_same_seed_reproduces(self):
        rows = [({i % 5: 1.0}, i % 2) for i in range(50)]
        ds = make_dataset(rows, 5)
        a = train_test_split(ds, 0.6, seed=42)
        b = train_test_split(ds, 0.6, seed=42)
        assert [fv.entries for fv, _ in a[0].samples] == [fv.entries for fv, _ in b[0].samples]
        assert a[0].labels().tolist() == b[0].labels().tolist()

    def test_partition_property(self):
        rows = [({i % 7: 1.0, (i * 3) % 7: 1.0}, i % 2) for i in range(83)]
        ds = make_dataset(rows, 7)
        train, test = train_test_split(ds, 0.7, seed=5)
        assert len(train) + len(test) == len(ds)
        seen = [(tuple(sorted(fv.entries.items())), label) for part in (train, test) for fv, label in part.samples]
        original = [(tuple(sorted(fv.entries.items())), label) for fv, label in ds.samples]
        assert sorted(seen) == sorted(original)

    def test_fraction_bounds(self):
        ds = make_dataset([({0: 1.0}, 0), ({0: 1.0}, 1)], 1)
        with pytest.raises(ValueError):
            train_test_split(ds, 0.0, seed=0)
        with pytest.raises(ValueError):
            train_test_split(ds, 1.0, seed=0)
