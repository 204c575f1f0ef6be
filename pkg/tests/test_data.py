import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from immax.data import (
    CsvSchema,
    DataError,
    Dataset,
    ImbalanceProfile,
    InvalidProfileError,
    class_stats,
    default_generators,
    dumps_csv,
    generate_imbalanced,
    generate_split,
    load_csv,
    save_csv,
)


@pytest.mark.parametrize(
    "kind, ratio, c, top, expected",
    [
        ("long-tailed", 1, 2, 100, [100, 100]),
        ("long-tailed", 100, 3, 100, [100, 10, 1]),
        ("step", 10, 4, 100, [100, 100, 10, 10]),
    ],
)
def test_profile_counts(kind, ratio, c, top, expected):
    profile = ImbalanceProfile(kind, ratio, c, top)
    assert profile.counts() == expected
    ds = generate_imbalanced(profile, default_generators(c), seed=0)
    assert ds.counts.tolist() == expected


def test_profile_rejects_bad_ratio():
    with pytest.raises(InvalidProfileError, match="ratio must be"):
        ImbalanceProfile("long-tailed", 0.5, 2, 100)
    with pytest.raises(InvalidProfileError):
        ImbalanceProfile("long-tailed", 200, 2, 100)


def test_step_odd_classes_floor_minority():
    profile = ImbalanceProfile("step", 10, 5, 100)
    assert profile.counts() == [100, 100, 100, 10, 10]


@given(
    ratio=st.floats(1, 50),
    c=st.integers(2, 8),
    top=st.integers(50, 500),
)
def test_long_tailed_invariants(ratio, c, top):
    counts = ImbalanceProfile("long-tailed", ratio, c, top).counts()
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] == top
    # the smallest class is within one rounding step of top / ratio
    assert abs(counts[-1] - top / ratio) <= 0.5 + 1e-9
    assert all(k >= 1 for k in counts)


def test_generation_is_seeded():
    profile = ImbalanceProfile("long-tailed", 10, 3, 50)
    gens = default_generators(3)
    a = generate_imbalanced(profile, gens, seed=3)
    b = generate_imbalanced(profile, gens, seed=3)
    c = generate_imbalanced(profile, gens, seed=4)
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, c.X)


def test_split_keeps_proportions():
    profile = ImbalanceProfile("long-tailed", 100, 2, 1980)
    train, test = generate_split(profile, default_generators(2), 0, 19800)
    assert train.counts.tolist() == [1980, 20]
    assert test.counts.tolist() == [19800, 198]
    assert not np.array_equal(train.X[:5], test.X[:5])


def test_load_csv_two_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0.5,0.5\n-1,1,0\n")
    ds = load_csv(p)
    assert len(ds) == 2
    assert ds.counts.tolist() == [1, 1]
    np.testing.assert_allclose(ds.radii, [math.sqrt(0.5), 1.0], rtol=1e-15)
    np.testing.assert_array_equal(ds.signed_labels(), [1, -1])


def test_load_csv_empty(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(DataError, match="empty dataset"):
        load_csv(p)
    p.write_text("label,x1,x2\n")
    with pytest.raises(DataError, match="empty dataset"):
        load_csv(p, CsvSchema(skip_header=True))


@pytest.mark.parametrize(
    "text, msg",
    [
        ("1,0.5\n1,0.5,3\n", "expected 2 fields"),
        ("1,abc\n", "non-numeric"),
        ("1.5,0\n", "not an integer"),
        ("0,1\n", "unknown label"),
    ],
)
def test_load_csv_malformed(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=msg):
        load_csv(p)


def test_load_csv_multiclass_and_delimiter(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("# comment\n3\t1\t0\n1\t0\t0\n2\t0\t2\n")
    ds = load_csv(p, CsvSchema(delimiter="\t"))
    assert ds.num_classes == 3
    assert ds.y.tolist() == [2, 0, 1]


def test_class_stats():
    ds = Dataset(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0, 1]), 2)
    stats = class_stats(ds)
    np.testing.assert_allclose(stats.radii, [1.0, 2.0])
    assert stats.radius == 2.0
    assert stats.imbalance_ratio == 1.0
    X = np.zeros((110, 1))
    assert class_stats(Dataset(X, np.r_[np.zeros(100, int), np.ones(10, int)], 2)).imbalance_ratio == 10
    assert class_stats(Dataset(np.zeros((15, 1)), np.repeat([0, 1, 2], 5), 3)).imbalance_ratio == 1


def test_radii_track_subsets():
    ds = Dataset(np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 2.0]]), np.array([0, 0, 1]), 2)
    assert ds.radii.tolist() == [5.0, 2.0]
    assert ds.subset([1, 2]).radii.tolist() == [1.0, 2.0]


def test_csv_roundtrip(tmp_path):
    profile = ImbalanceProfile("long-tailed", 10, 3, 30)
    ds = generate_imbalanced(profile, default_generators(3, dim=3), seed=1)
    save_csv(ds, tmp_path / "r.csv", header_comment="note")
    back = load_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    assert dumps_csv(back) == dumps_csv(ds)
