import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matkernel.data import (
    Dataset,
    SplitSpec,
    dump_csv_matrices,
    encode_idx,
    encode_pgm,
    load_csv,
    load_idx,
    load_mnist,
    load_pgm_dir,
    normalize_unit,
    one_vs_rest,
    parse_csv_matrices,
    parse_idx,
    parse_pgm,
    regex_label_rule,
    select_classes,
    split_indices,
    split_random,
)


def idx_fixture(count=2, rows=28, cols=28, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, (count, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 10, count, dtype=np.uint8)
    return images, labels


# IDX -------------------------------------------------------------------------


def test_idx_two_images():
    images, labels = idx_fixture()
    # build the header by hand rather than through encode_idx
    img = bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28]) + images.tobytes()
    lab = bytes([0, 0, 8, 1, 0, 0, 0, 2]) + labels.tobytes()
    d = parse_idx(img, lab)
    assert len(d) == 2 and d.shape == (28, 28)
    np.testing.assert_array_equal(d.X, images)
    np.testing.assert_array_equal(d.y, labels)


def test_idx_round_trip():
    images, labels = idx_fixture(5, 4, 3, seed=1)
    d = parse_idx(*encode_idx(images, labels))
    np.testing.assert_array_equal(d.X.astype(np.uint8), images)
    np.testing.assert_array_equal(d.y, labels)


def test_idx_errors():
    images, labels = idx_fixture(2, 3, 3)
    img, lab = encode_idx(images, labels)
    with pytest.raises(ValueError, match="empty"):
        parse_idx(*encode_idx(np.zeros((0, 3, 3)), np.zeros(0)))
    with pytest.raises(ValueError, match="count mismatch"):
        parse_idx(img, encode_idx(images, labels[:1])[1])
    with pytest.raises(ValueError, match="image magic"):
        parse_idx(struct.pack(">I", 0x801) + img[4:], lab)
    with pytest.raises(ValueError, match="label magic"):
        parse_idx(img, struct.pack(">I", 0x803) + lab[4:])
    with pytest.raises(ValueError, match="truncated"):
        parse_idx(img[:-1], lab)
    with pytest.raises(ValueError, match="truncated"):
        parse_idx(img, lab[:-1])
    with pytest.raises(ValueError, match="truncated"):
        parse_idx(img[:10], lab)


def test_load_mnist_plain_and_gzip(tmp_path):
    images, labels = idx_fixture(3, 28, 28, seed=2)
    img, lab = encode_idx(images, labels)
    (tmp_path / "train-images-idx3-ubyte").write_bytes(img)
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(lab)
    (tmp_path / "t10k-images-idx3-ubyte.gz").write_bytes(gzip.compress(img))
    (tmp_path / "t10k-labels-idx1-ubyte.gz").write_bytes(gzip.compress(lab))
    for split in ("train", "test"):
        d = load_mnist(tmp_path, split)
        np.testing.assert_array_equal(d.y, labels)
    assert load_idx(tmp_path / "train-images-idx3-ubyte", tmp_path / "train-labels-idx1-ubyte").shape == (28, 28)
    with pytest.raises(FileNotFoundError):
        load_mnist(tmp_path / "missing")


# PGM -------------------------------------------------------------------------


def test_pgm_with_comment_header():
    raster = bytes(range(12))
    data = b"P5\n# made by hand\n4 3\n# depth\n255\n" + raster
    np.testing.assert_array_equal(parse_pgm(data), np.arange(12).reshape(3, 4))


def test_pgm_errors():
    with pytest.raises(ValueError, match="P5"):
        parse_pgm(b"P2\n2 2\n255\n1 2 3 4")
    with pytest.raises(ValueError, match="depth"):
        parse_pgm(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(ValueError, match="raster"):
        parse_pgm(b"P5\n2 2\n255\n" + bytes(3))
    with pytest.raises(ValueError, match="header"):
        parse_pgm(b"P5\n2 2")
    with pytest.raises(ValueError, match="header field"):
        parse_pgm(b"P5\n2 x\n255\n" + bytes(4))


def test_pgm_directory(tmp_path):
    rng = np.random.default_rng(3)
    a, b = rng.integers(0, 256, (2, 4, 4))
    (tmp_path / "subject01_a.pgm").write_bytes(encode_pgm(a))
    (tmp_path / "subject02_b.pgm").write_bytes(encode_pgm(b))
    d = load_pgm_dir(tmp_path, regex_label_rule(r"subject(\d+)"))
    assert len(d) == 2 and d.shape == (4, 4)
    np.testing.assert_array_equal(d.y, [1, 2])
    np.testing.assert_array_equal(d.X[0], a)


def test_pgm_directory_errors(tmp_path):
    (tmp_path / "s1.pgm").write_bytes(encode_pgm(np.zeros((4, 4))))
    (tmp_path / "s2.pgm").write_bytes(encode_pgm(np.zeros((8, 8))))
    with pytest.raises(ValueError, match="expected"):
        load_pgm_dir(tmp_path, regex_label_rule(r"s(\d+)"))
    (tmp_path / "s2.pgm").unlink()
    (tmp_path / "odd.pgm").write_bytes(encode_pgm(np.zeros((4, 4))))
    with pytest.raises(ValueError, match="label rule"):
        load_pgm_dir(tmp_path, regex_label_rule(r"s(\d+)"))
    (tmp_path / "none").mkdir()
    with pytest.raises(ValueError, match="no files"):
        load_pgm_dir(tmp_path / "none", regex_label_rule("(1)"))


# CSV -------------------------------------------------------------------------


def test_csv_parse():
    text = "2,3,1\n1,2,3\n4,5,6\n\n2,3,0\n0,0,0\n1,1,1.5\n"
    d = parse_csv_matrices(text)
    assert d.shape == (2, 3) and len(d) == 2
    np.testing.assert_array_equal(d.y, [1, 0])
    np.testing.assert_array_equal(d.X[1], [[0, 0, 0], [1, 1, 1.5]])


def test_csv_round_trip(tmp_path):
    X = np.random.default_rng(4).standard_normal((3, 2, 4))
    d = Dataset(X, [0, 2, 1])
    path = tmp_path / "set.csv"
    path.write_text(dump_csv_matrices(d))
    back = load_csv(path)
    np.testing.assert_array_equal(back.X, X)
    np.testing.assert_array_equal(back.y, d.y)
    assert back.name == "set"


@pytest.mark.parametrize(
    "text, msg",
    [
        ("", "empty"),
        ("2,2\n1,2\n3,4\n", "header"),
        ("2,2,0\n1,2\n", "truncated"),
        ("2,2,0\n1,2\n3,4,5\n", "not 2x2"),
        ("1,2,0\n1,2\n\n1,3,0\n1,2,3\n", "heterogeneous"),
    ],
)
def test_csv_errors(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_csv_matrices(text)


# datasets and transforms -------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError, match="stack"):
        Dataset(np.zeros((2, 2)), [0, 1])
    with pytest.raises(ValueError, match="empty"):
        Dataset(np.zeros((0, 2, 2)), [])
    with pytest.raises(ValueError, match="count"):
        Dataset(np.zeros((2, 2, 2)), [0])
    with pytest.raises(ValueError, match="nonnegative"):
        Dataset(np.zeros((1, 2, 2)), [-1])


def test_normalize_endpoints():
    X = np.array([[[0.0, 255.0], [10.0, 128.0]]])
    n = normalize_unit(Dataset(X, [0]))
    assert n.X[0, 0, 1] == 1.0 and n.X[0, 0, 0] == 0.0


def test_normalize_constant_dataset():
    n = normalize_unit(Dataset(np.full((2, 3, 3), 7.0), [0, 1]))
    assert not n.X.any()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-100, 100), st.floats(0.01, 1000))
def test_normalize_range_and_idempotence(seed, shift, scale):
    X = shift + scale * np.random.default_rng(seed).standard_normal((4, 3, 2))
    n = normalize_unit(Dataset(X, [0, 1, 0, 1]))
    assert abs(n.X.min()) <= 1e-12 and abs(n.X.max() - 1) <= 1e-12
    np.testing.assert_allclose(normalize_unit(n).X, n.X, atol=1e-12)


def test_select_and_one_vs_rest():
    d = Dataset(np.zeros((5, 2, 2)), [0, 1, 2, 1, 0])
    np.testing.assert_array_equal(select_classes(d, [0, 2]).y, [0, 2, 0])
    np.testing.assert_array_equal(one_vs_rest(d, 1).y, [0, 1, 0, 1, 0])


# splits ------------------------------------------------------------------------


def yale_like():
    return Dataset(np.zeros((15 * 11, 2, 2)), np.repeat(np.arange(15), 11), "yale")


def test_yale_style_split():
    tr, te = split_random(yale_like(), SplitSpec(train_per_class=6, seed=5))
    assert len(tr) == 90 and len(te) == 75
    assert np.all(np.bincount(tr.y) == 6) and np.all(np.bincount(te.y) == 5)


def test_split_balanced_and_deterministic():
    d = Dataset(np.zeros((20, 2, 2)), np.repeat([0, 1], 10))
    s = SplitSpec(train_per_class=3, test_per_class=4, seed=9)
    tr, te = split_indices(d, s, 2)
    assert len(tr) == 6 and np.all(np.bincount(d.y[tr]) == 3)
    assert len(te) == 8 and np.all(np.bincount(d.y[te]) == 4)
    tr2, te2 = split_indices(d, s, 2)
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
    tr3, _ = split_indices(d, s, 3)
    assert not np.array_equal(tr, tr3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(0, 30), st.integers(1, 9), st.sampled_from(["per_class", "total"]))
def test_split_disjoint_and_in_range(seed, rep, train, mode):
    d = Dataset(np.zeros((40, 1, 1)), np.repeat([0, 1, 2, 3], 10))
    if mode == "per_class":
        s = SplitSpec(train_per_class=train, test_total=4, seed=seed)
    else:
        s = SplitSpec(train_total=train * 4, seed=seed)
    tr, te = split_indices(d, s, rep)
    assert not np.intersect1d(tr, te).size
    assert tr.min() >= 0 and np.concatenate([tr, te]).max() < len(d)


def test_split_uses_seed_xor_rep():
    d = Dataset(np.zeros((30, 1, 1)), np.repeat([0, 1, 2], 10))
    # seed 6 at rep 3 and seed 5 at rep 0 share the generator state 6 ^ 3 == 5 ^ 0
    a = split_indices(d, SplitSpec(train_per_class=2, seed=6), 3)
    b = split_indices(d, SplitSpec(train_per_class=2, seed=5), 0)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_errors():
    d = Dataset(np.zeros((6, 1, 1)), [0, 0, 0, 1, 1, 1])
    with pytest.raises(ValueError, match="class"):
        split_indices(d, SplitSpec(train_per_class=4))
    with pytest.raises(ValueError, match="testing"):
        split_indices(d, SplitSpec(train_per_class=2, test_per_class=2))
    with pytest.raises(ValueError, match="left"):
        split_indices(d, SplitSpec(train_total=4, test_total=3))
    with pytest.raises(ValueError, match="training"):
        split_indices(d, SplitSpec(train_total=7))
    for bad in ({}, {"train_per_class": 1, "train_total": 2}, {"train_total": 0},
                {"train_total": 2, "test_total": 1, "test_per_class": 1}, {"train_total": 2, "repetitions": 0}):
        with pytest.raises(ValueError):
            SplitSpec(**bad)
