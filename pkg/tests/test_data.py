import numpy as np
import pytest

from bicure.data import BivariateDataset, CureTruthDataset, dataset_to_csv, read_csv, write_csv
from bicure.datagen import generate, setting
from bicure.errors import DataFormatError


@pytest.mark.parametrize("name", ["A", "S_A", "S1"])
def test_csv_round_trip_is_byte_exact(name, tmp_path):
    ds = generate(setting(name, n=300, seed=13))
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back = read_csv(path)
    assert back.equals(ds)
    assert dataset_to_csv(back) == path.read_text()


def test_inf_token_for_cured_times(tmp_path):
    ds = generate(setting("S1", n=200, seed=1))
    text = dataset_to_csv(ds)
    assert text.splitlines()[0] == "id,t1,t2"
    assert ",inf" in text
    assert "d1" not in text


def test_counts():
    ds = BivariateDataset([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1, 0, 1], [1, 1, 0])
    assert (ds.d1_total, ds.d2_total, ds.d12_total) == (2, 2, 1)
    assert ds.pattern_index((1, 1)).tolist() == [0]


@pytest.mark.parametrize("body,msg", [
    ("", "empty"),
    ("id,t1,t2,d1,d2\n", "no data"),
    ("id,t1,d1,d2\n1,2.0,1,0\n", "t2"),
    ("id,t1,t2,d1,d2\n1,2.0,x,1,0\n", "not a number"),
    ("id,t1,t2,d1,d2\n1,2.0,1.0,2,0\n", "0 or 1"),
    ("id,t1,t2,d1,d2\n1,2.0,1.0,1\n", "fields"),
    ("id,t1,t2,d1,d2\n1,nan,1.0,1,0\n", "finite"),
    ("id,t1,t2,d1,d2,z\n1,1.0,1.0,1,0,3\n", "unexpected"),
    ("id,t1,t2,d1\n1,1.0,1.0,1\n", "both"),
])
def test_parse_errors(body, msg, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DataFormatError, match=msg):
        read_csv(path)


def test_nonpositive_or_infinite_censored_times_rejected(tmp_path):
    for t in ("0.0", "-1", "inf"):
        path = tmp_path / "bad.csv"
        path.write_text(f"id,t1,t2,d1,d2\n1,{t},1.0,1,0\n")
        with pytest.raises(DataFormatError):
            read_csv(path)


def test_truth_dataset_validation():
    with pytest.raises(DataFormatError):
        CureTruthDataset([1.0, 0.0], [1.0, 2.0])
    ds = CureTruthDataset([1.0, np.inf], [np.inf, 2.0])
    c1, c2 = ds.cured()
    assert c1.tolist() == [False, True] and c2.tolist() == [True, False]


def test_retinopathy_loader(retinopathy):
    assert retinopathy.n == 197
    age = retinopathy.x1[:, 0]
    assert abs(age.mean()) < 1e-12 and abs(age.std(ddof=1) - 1.0) < 1e-12
    assert np.array_equal(retinopathy.x1[:, 0], retinopathy.x2[:, 0])
    assert retinopathy.covariate_names == (("age", "risk"), ("age", "risk"))
