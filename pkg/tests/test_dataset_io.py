import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dataset_io import (format_value, latent_frame, load_dataset, read_record, save_dataset,
                        write_record)
from errors import InputError, ParseError
from measures import from_samples
from scenarios import Dataset, Group, default_config, generate


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDatasetCSV:
    def test_round_trip_keeps_values(self, tmp_path):
        ds = generate(default_config("2D-mean", n_train=4, samples_per_cloud=3), "train")
        path = save_dataset(ds, str(tmp_path / "nested" / "train.csv"))
        back = load_dataset(path)
        assert back.group_ids == ds.group_ids
        assert_array_equal(back.y, ds.y)
        for a, b in zip(back.clouds, ds.clouds):
            assert_array_equal(a.points, b.points)

    def test_header(self, tmp_path):
        ds = generate(default_config("1D-EIV", n_train=2, samples_per_cloud=2), "train")
        path = save_dataset(ds, str(tmp_path / "train.csv"))
        with open(path, encoding="utf-8") as f:
            assert f.readline().strip() == "group_id,y,x1"

    def test_weighted_cloud_rejected(self, tmp_path):
        ds = Dataset((Group(0, from_samples([[0.0], [1.0]], [1.0, 3.0]), 1.0),))
        with pytest.raises(InputError):
            save_dataset(ds, str(tmp_path / "w.csv"))

    def test_non_numeric_row(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "group_id,y,x1\n0,1.0,0.5\n0,1.0,0.6\n1,2.0,abc\n")
        with pytest.raises(ParseError) as info:
            load_dataset(path)
        assert info.value.row == 4

    def test_missing_value(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "group_id,y,x1\n0,1.0,\n")
        with pytest.raises(ParseError) as info:
            load_dataset(path)
        assert info.value.row == 2

    def test_fractional_group(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "group_id,y,x1\n0,1.0,0.5\n1.5,1.0,0.5\n")
        with pytest.raises(ParseError) as info:
            load_dataset(path)
        assert info.value.row == 3

    def test_inconsistent_response(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "group_id,y,x1\n0,1.0,0.5\n1,2.0,0.1\n0,1.5,0.7\n")
        with pytest.raises(ParseError) as info:
            load_dataset(path)
        assert info.value.row == 4

    def test_bad_header(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", "id,y,x1\n0,1.0,0.5\n")
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_groups_need_not_be_contiguous(self, tmp_path):
        path = write_csv(tmp_path / "ok.csv", "group_id,y,x1\n3,1.0,0.5\n7,2.0,0.1\n3,1.0,0.7\n")
        ds = load_dataset(path)
        assert ds.group_ids == [3, 7]
        assert ds.clouds[0].n_samples == 2


class TestRecords:
    def test_format_value(self):
        assert format_value(True) == "true"
        assert format_value(3) == "3"
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value((1.0, 0.5)) == "1,0.5"

    def test_write_and_read(self, tmp_path):
        path = write_record({"family": "PWA", "scale_1": 0.25, "n_train": 8}, str(tmp_path / "m.txt"))
        assert read_record(path) == {"family": "PWA", "scale_1": "0.25", "n_train": "8"}

    def test_latent_frame(self):
        ds = generate(default_config("1D-Var", n_train=3), "train")
        frame = latent_frame(ds)
        assert list(frame["group_id"]) == [0, 1, 2]
        assert np.allclose(frame["f"] + frame["eta"], ds.y)
