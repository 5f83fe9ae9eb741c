"""Tests for the dataset/truth/order file formats."""

import numpy as np
import pytest

from chainorder import DataFormatError, Dataset
from chainorder.data import (read_dataset_csv, read_order, read_truth,
                             write_dataset_csv, write_order, write_truth)


class TestDatasetCsv:
    def test_round_trip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(10, 3)) * 1e-7, "continuous")
        path = tmp_path / "d.csv"
        write_dataset_csv(path, ds)
        back = read_dataset_csv(path)
        assert np.array_equal(back.values, ds.values)
        assert back.kind == "continuous"

    def test_binary_round_trip(self, tmp_path):
        vals = (np.random.default_rng(1).random((6, 4)) < 0.5).astype(float)
        path = tmp_path / "b.csv"
        write_dataset_csv(path, Dataset(vals, "binary"))
        back = read_dataset_csv(path)
        assert back.kind == "binary"
        assert np.array_equal(back.values, vals)

    def test_headerless_file_rejected(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("0.1,0.2\n0.3,0.4\n")
        with pytest.raises(DataFormatError, match="header"):
            read_dataset_csv(path)

    def test_row_count_mismatch_rejected(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("dim=2,kind=continuous,n=3\n0.1,0.2\n")
        with pytest.raises(DataFormatError, match="n=3"):
            read_dataset_csv(path)

    def test_bad_value_reports_line_number(self, tmp_path):
        path = tmp_path / "v.csv"
        path.write_text("dim=2,kind=continuous,n=2\n0.1,0.2\n0.4,oops\n")
        with pytest.raises(DataFormatError, match=":3"):
            read_dataset_csv(path)

    def test_wrong_width_reports_line_number(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("dim=2,kind=continuous,n=1\n0.1,0.2,0.3\n")
        with pytest.raises(DataFormatError, match=":2"):
            read_dataset_csv(path)

    def test_nonbinary_values_with_binary_kind_rejected(self, tmp_path):
        path = tmp_path / "k.csv"
        path.write_text("dim=2,kind=binary,n=1\n0.5,1.0\n")
        with pytest.raises(DataFormatError, match="binary"):
            read_dataset_csv(path)

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "u.csv"
        path.write_text("dim=2,kind=weird,n=1\n0.5,1.0\n")
        with pytest.raises(DataFormatError, match="kind"):
            read_dataset_csv(path)


class TestTruthFile:
    def test_round_trip(self, tmp_path):
        order = np.random.default_rng(2).permutation(12)
        path = tmp_path / "t.txt"
        write_truth(path, order)
        assert np.array_equal(read_truth(path), order)

    def test_non_permutation_rejected(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("0\n1\n1\n")
        with pytest.raises(DataFormatError, match="permutation"):
            read_truth(path)

    def test_non_integer_rejected(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("0\nx\n")
        with pytest.raises(DataFormatError, match="integer"):
            read_truth(path)


class TestOrderFile:
    def test_round_trip_with_likelihood_header(self, tmp_path):
        order = np.random.default_rng(3).permutation(9)
        path = tmp_path / "o.txt"
        write_order(path, order, -123.456789)
        back, ll = read_order(path)
        assert np.array_equal(back, order)
        assert ll == -123.456789

    def test_header_comment_optional(self, tmp_path):
        path = tmp_path / "o.txt"
        path.write_text("2\n0\n1\n")
        back, ll = read_order(path)
        assert np.array_equal(back, [2, 0, 1])
        assert ll is None

    def test_non_permutation_rejected(self, tmp_path):
        path = tmp_path / "o.txt"
        path.write_text("# log_likelihood = -1.0\n0\n2\n")
        with pytest.raises(DataFormatError, match="permutation"):
            read_order(path)


class TestDatasetValidation:
    def test_non_finite_values_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            Dataset(np.array([[np.inf, 0.0]]), "continuous")

    def test_bad_true_order_rejected(self):
        with pytest.raises(ValueError, match="permutation"):
            Dataset(np.zeros((3, 1)), "continuous", true_order=np.array([0, 1, 1]))

    def test_binary_kind_requires_bits(self):
        with pytest.raises(ValueError, match="binary"):
            Dataset(np.array([[0.25]]), "binary")
