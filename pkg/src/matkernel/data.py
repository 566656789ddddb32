"""Dataset ingestion (IDX, binary PGM, CSV matrices), scaling and splits."""

from __future__ import annotations

import gzip
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

import numpy as np

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class MatrixSample(NamedTuple):
    matrix: np.ndarray
    label: int


@dataclass
class Dataset:
    """``X`` has shape (N, m, n); ``y`` holds nonnegative integer labels."""

    X: np.ndarray
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 3:
            raise ValueError(f"expected a stack of matrices, got shape {self.X.shape}")
        if len(self.X) == 0:
            raise ValueError("dataset is empty")
        if self.y.shape != (len(self.X),):
            raise ValueError("label count does not match sample count")
        if np.any(self.y < 0):
            raise ValueError("labels must be nonnegative")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape[1], self.X.shape[2]

    @property
    def classes(self) -> list[int]:
        return sorted(np.unique(self.y).tolist())

    def samples(self) -> Iterator[MatrixSample]:
        for X, y in zip(self.X, self.y):
            yield MatrixSample(X, int(y))

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.name if name is None else name)


# IDX ---------------------------------------------------------------------


def parse_idx(image_bytes: bytes, label_bytes: bytes, name: str = "idx") -> Dataset:
    """Decode an IDX image file (u8 pixels) and its label file."""
    if len(image_bytes) < 16:
        raise ValueError("image file is truncated")
    magic, count, rows, cols = struct.unpack(">IIII", image_bytes[:16])
    if magic != IDX_IMAGES:
        raise ValueError(f"bad image magic 0x{magic:08x}")
    if len(label_bytes) < 8:
        raise ValueError("label file is truncated")
    lmagic, lcount = struct.unpack(">II", label_bytes[:8])
    if lmagic != IDX_LABELS:
        raise ValueError(f"bad label magic 0x{lmagic:08x}")
    if count != lcount:
        raise ValueError(f"count mismatch: {count} images, {lcount} labels")
    if count == 0:
        raise ValueError("dataset is empty")
    need = count * rows * cols
    if len(image_bytes) - 16 < need:
        raise ValueError("image payload is truncated")
    if len(label_bytes) - 8 < count:
        raise ValueError("label payload is truncated")
    pixels = np.frombuffer(image_bytes, dtype=np.uint8, count=need, offset=16)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=count, offset=8)
    return Dataset(pixels.reshape(count, rows, cols).astype(float), labels.astype(int), name)


def encode_idx(images, labels) -> tuple[bytes, bytes]:
    images = np.asarray(images)
    labels = np.asarray(labels)
    count, rows, cols = images.shape
    img = struct.pack(">IIII", IDX_IMAGES, count, rows, cols) + images.astype(np.uint8).tobytes()
    lab = struct.pack(">II", IDX_LABELS, len(labels)) + labels.astype(np.uint8).tobytes()
    return img, lab


def _read(path) -> bytes:
    path = Path(path)
    data = path.read_bytes()
    return gzip.decompress(data) if path.suffix == ".gz" else data


def load_idx(images_path, labels_path, name: str | None = None) -> Dataset:
    return parse_idx(_read(images_path), _read(labels_path), name or Path(images_path).name)


def load_mnist(directory, split: str = "train") -> Dataset:
    """Load the standard MNIST file pair from ``directory`` (plain or ``.gz``)."""
    prefix = {"train": "train", "test": "t10k"}[split]
    d = Path(directory)
    for suffix in ("", ".gz"):
        img = d / f"{prefix}-images-idx3-ubyte{suffix}"
        lab = d / f"{prefix}-labels-idx1-ubyte{suffix}"
        if img.exists() and lab.exists():
            return load_idx(img, lab, name=f"mnist-{split}")
    raise FileNotFoundError(f"no MNIST {split} files in {d}")


# PGM ---------------------------------------------------------------------

def _pgm_header(data: bytes) -> tuple[list[int], int]:
    """Width, height and maxval, plus the offset of the raster."""
    fields, pos = [], 2
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            token = data[start:pos]
            if not token.isdigit():
                raise ValueError(f"bad PGM header field {token!r}")
            fields.append(int(token))
    if pos >= len(data):
        raise ValueError("truncated PGM header")
    # exactly one whitespace byte separates maxval from the raster
    return fields, pos + 1


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM with maxval <= 255."""
    if data[:2] != b"P5":
        raise ValueError("not a binary P5 PGM file")
    (width, height, maxval), pos = _pgm_header(data)
    if maxval > 255:
        raise ValueError(f"unsupported PGM depth (maxval {maxval})")
    raster = data[pos : pos + width * height]
    if len(raster) < width * height:
        raise ValueError("truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(float)


def encode_pgm(image) -> bytes:
    image = np.asarray(image)
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode() + image.astype(np.uint8).tobytes()


def regex_label_rule(pattern: str) -> Callable[[str], int | None]:
    """Label from the first integer group of ``pattern`` searched in the filename."""
    rx = re.compile(pattern)

    def rule(filename: str) -> int | None:
        m = rx.search(filename)
        return int(m.group(1)) if m else None

    return rule


def load_pgm_dir(path, label_rule: Callable[[str], int | None], pattern: str = "*.pgm") -> Dataset:
    files = sorted(Path(path).glob(pattern))
    if not files:
        raise ValueError(f"no files matching {pattern} in {path}")
    images, labels = [], []
    for f in files:
        label = label_rule(f.name)
        if label is None:
            raise ValueError(f"label rule does not match {f.name}")
        img = parse_pgm(f.read_bytes())
        if images and img.shape != images[0].shape:
            raise ValueError(f"{f.name} is {img.shape}, expected {images[0].shape}")
        images.append(img)
        labels.append(label)
    return Dataset(np.stack(images), np.asarray(labels), Path(path).name)


# CSV ---------------------------------------------------------------------


def parse_csv_matrices(text: str, name: str = "csv") -> Dataset:
    """Samples are a ``m,n,label`` header line followed by m rows of n values,
    separated by blank lines."""
    lines = text.splitlines()
    images, labels = [], []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split(",")
        if len(head) != 3:
            raise ValueError(f"line {i + 1}: expected header 'm,n,label'")
        m, n, label = (int(v) for v in head)
        rows = lines[i + 1 : i + 1 + m]
        if len(rows) < m:
            raise ValueError(f"line {i + 1}: sample is truncated")
        cells = [r.split(",") for r in rows]
        if any(len(c) != n for c in cells):
            raise ValueError(f"line {i + 1}: sample is not {m}x{n}")
        mat = np.array(cells, dtype=float)
        images.append(mat)
        labels.append(label)
        i += 1 + m
    if not images:
        raise ValueError("dataset is empty")
    if any(im.shape != images[0].shape for im in images):
        raise ValueError("samples have heterogeneous shapes")
    return Dataset(np.stack(images), np.asarray(labels), name)


def dump_csv_matrices(d: Dataset) -> str:
    blocks = []
    for X, y in d.samples():
        rows = [",".join(repr(float(v)) for v in row) for row in X]
        blocks.append("\n".join([f"{X.shape[0]},{X.shape[1]},{y}", *rows]))
    return "\n\n".join(blocks) + "\n"


def load_csv(path) -> Dataset:
    return parse_csv_matrices(Path(path).read_text(), Path(path).stem)


# transforms and splits ----------------------------------------------------


def normalize_unit(d: Dataset) -> Dataset:
    """Affine map onto [0, 1] with the dataset-wide min and max."""
    lo, hi = d.X.min(), d.X.max()
    X = np.zeros_like(d.X) if hi == lo else (d.X - lo) / (hi - lo)
    return Dataset(X, d.y.copy(), d.name)


def select_classes(d: Dataset, classes) -> Dataset:
    return d.subset(np.flatnonzero(np.isin(d.y, list(classes))))


def one_vs_rest(d: Dataset, positive: int) -> Dataset:
    """Relabel: ``positive`` becomes class 1, every other class 0."""
    return Dataset(d.X, (d.y == positive).astype(int), f"{d.name}-{positive}-vs-rest")


@dataclass(frozen=True)
class SplitSpec:
    """Either ``train_per_class`` or ``train_total``; test likewise, or
    everything not used for training when both test counts are None."""

    train_per_class: int | None = None
    train_total: int | None = None
    test_per_class: int | None = None
    test_total: int | None = None
    seed: int = 0
    repetitions: int = 1

    def __post_init__(self):
        if (self.train_per_class is None) == (self.train_total is None):
            raise ValueError("set exactly one of train_per_class / train_total")
        if self.test_per_class is not None and self.test_total is not None:
            raise ValueError("set at most one of test_per_class / test_total")
        for v in (self.train_per_class, self.train_total, self.test_per_class, self.test_total):
            if v is not None and v <= 0:
                raise ValueError("split counts must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def split_rng(seed: int, rep_index: int) -> np.random.Generator:
    """PCG64 seeded with ``seed XOR rep_index``."""
    return np.random.Generator(np.random.PCG64(int(seed) ^ int(rep_index)))


def split_indices(d: Dataset, s: SplitSpec, rep_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = split_rng(s.seed, rep_index)
    classes = d.classes
    pools = {c: rng.permutation(np.flatnonzero(d.y == c)) for c in classes}
    if s.train_per_class is not None:
        for c in classes:
            if len(pools[c]) < s.train_per_class:
                raise ValueError(f"class {c} has {len(pools[c])} samples, need {s.train_per_class} for training")
        train = np.concatenate([pools[c][: s.train_per_class] for c in classes])
        rest = {c: pools[c][s.train_per_class :] for c in classes}
    else:
        order = rng.permutation(len(d))
        if len(order) < s.train_total:
            raise ValueError(f"dataset has {len(order)} samples, need {s.train_total} for training")
        train = order[: s.train_total]
        taken = np.zeros(len(d), bool)
        taken[train] = True
        rest = {c: rng.permutation(np.flatnonzero((d.y == c) & ~taken)) for c in classes}
    if s.test_per_class is not None:
        for c in classes:
            if len(rest[c]) < s.test_per_class:
                raise ValueError(f"class {c} has too few samples left for testing")
        test = np.concatenate([rest[c][: s.test_per_class] for c in classes])
    else:
        pool = np.concatenate([rest[c] for c in classes])
        if s.test_total is None:
            test = pool
        else:
            if len(pool) < s.test_total:
                raise ValueError(f"only {len(pool)} samples left, need {s.test_total} for testing")
            test = rng.permutation(pool)[: s.test_total]
    return np.sort(train), np.sort(test)


def split_random(d: Dataset, s: SplitSpec, rep_index: int = 0) -> tuple[Dataset, Dataset]:
    train, test = split_indices(d, s, rep_index)
    return d.subset(train), d.subset(test)
