"""Dataset loading and preprocessing for MNIST, EMNIST (Balanced) and GTSRB."""

from __future__ import annotations

import gzip
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DATASETS = ("mnist", "emnist", "gtsrb")

# (train count, test count, image size, classes)
EXPECTED = {
    "mnist": (60000, 10000, 28, 10),
    "emnist": (112800, 18800, 28, 47),
    "gtsrb": (34799, 12630, 32, 43),
}

GTSRB_SIZE = 32


class DatasetError(Exception):
    pass


class IdxFormatError(DatasetError, ValueError):
    pass


@dataclass
class DatasetSplit:
    name: str
    split: str
    images: np.ndarray  # (n, m, m) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64
    class_count: int

    def __post_init__(self) -> None:
        if self.images.ndim != 3 or self.images.shape[1] != self.images.shape[2]:
            raise DatasetError(f"{self.name}/{self.split}: images must be (n, m, m), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DatasetError(f"{self.name}/{self.split}: {len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise DatasetError(f"{self.name}/{self.split}: pixels outside [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"{self.name}/{self.split}: labels outside 0..{self.class_count - 1}")

    @property
    def size(self) -> int:
        return self.images.shape[1]

    def __len__(self) -> int:
        return len(self.labels)


def _open(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_idx(path) -> np.ndarray:
    """Decode an IDX file (unsigned-byte payload) into a uint8 array.

    Images come back as ``(n, rows, cols)``, labels as ``(n,)``. Anything
    short, long or with a foreign magic number raises :class:`IdxFormatError`.
    """
    path = Path(path)
    with _open(path) as f:
        data = f.read()
    if len(data) < 4:
        raise IdxFormatError(f"{path}: file too short for IDX magic")
    magic = int.from_bytes(data[:4], "big")
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise IdxFormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError(f"{path}: truncated IDX header")
    dims = [int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    expected = math.prod(dims)
    if len(data) - header != expected:
        raise IdxFormatError(
            f"{path}: header declares {dims} ({expected} bytes) but payload has {len(data) - header}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims).copy()


def scale_255(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / 255.0


def normalize_minmax(raw: np.ndarray) -> np.ndarray:
    """Affine per-image map of min -> 0 and max -> 1; constant images become zeros."""
    img = np.asarray(raw, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        log.warning("constant image (value %s) normalised to zeros", lo)
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma, rounded half-up and clamped to 0..255."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB data, got {rgb.shape}")
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def _axis_weights(src: int, dst: int):
    # corner-aligned: output samples span exactly the first and last input pixels
    if src == 1 or dst == 1:
        pos = np.zeros(dst)
    else:
        pos = np.arange(dst) * ((src - 1) / (dst - 1))
    lo = np.minimum(np.floor(pos).astype(np.int64), src - 1)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_bilinear(raw: np.ndarray, size: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D image to ``size x size`` (float64)."""
    img = np.asarray(raw, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 1:
        raise ValueError(f"expected a non-empty 2-D image, got {img.shape}")
    r0, r1, fr = _axis_weights(img.shape[0], size)
    c0, c1, fc = _axis_weights(img.shape[1], size)
    wr, wc = fr[:, None], fc[None, :]
    a = img[np.ix_(r0, c0)] * ((1 - wr) * (1 - wc))
    b = img[np.ix_(r0, c1)] * ((1 - wr) * wc)
    c = img[np.ix_(r1, c0)] * (wr * (1 - wc))
    d = img[np.ix_(r1, c1)] * (wr * wc)
    # pairing keeps the sum exactly symmetric under transposition
    return (a + d) + (b + c)


def resize_32(raw: np.ndarray) -> np.ndarray:
    out = resize_bilinear(raw, GTSRB_SIZE)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _find(data_dir: Path, names: list[str]) -> Path:
    for name in names:
        for candidate in (data_dir / name, data_dir / (name + ".gz")):
            if candidate.exists():
                return candidate
    raise DatasetError(f"none of {names} (or .gz) found in {data_dir}")


def _dataset_dir(data_dir, name: str) -> Path:
    data_dir = Path(data_dir)
    sub = data_dir / name
    return sub if sub.is_dir() else data_dir


def _check_counts(name: str, train: DatasetSplit, test: DatasetSplit) -> None:
    n_train, n_test, m, _ = EXPECTED[name]
    got = (len(train), len(test), train.size, test.size)
    if got != (n_train, n_test, m, m):
        raise DatasetError(
            f"{name}: expected {n_train}/{n_test} images of {m}x{m}, "
            f"got {got[0]}/{got[1]} of {got[2]}x{got[2]}/{got[3]}x{got[3]}"
        )


def _idx_split(name, split, images_path, labels_path, classes, transpose=False) -> DatasetSplit:
    raw = load_idx(images_path)
    labels = load_idx(labels_path).astype(np.int64)
    if raw.ndim != 3 or labels.ndim != 1:
        raise DatasetError(f"{images_path}: expected 3-D images and 1-D labels")
    if len(raw) != len(labels):
        raise DatasetError(f"{name}/{split}: {len(raw)} images but {len(labels)} labels")
    if transpose:
        raw = raw.transpose(0, 2, 1)
    return DatasetSplit(name, split, scale_255(raw), labels, classes)


def load_mnist(data_dir, strict: bool = True) -> tuple[DatasetSplit, DatasetSplit]:
    root = _dataset_dir(data_dir, "mnist")
    splits = []
    for split, prefix in (("train", "train"), ("test", "t10k")):
        splits.append(
            _idx_split(
                "mnist",
                split,
                _find(root, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"]),
                _find(root, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"]),
                10,
            )
        )
    if strict:
        _check_counts("mnist", *splits)
    return splits[0], splits[1]


def load_emnist(data_dir, strict: bool = True) -> tuple[DatasetSplit, DatasetSplit]:
    """EMNIST Balanced. The raw files store images transposed; they are flipped upright here."""
    root = _dataset_dir(data_dir, "emnist")
    splits = []
    for split in ("train", "test"):
        splits.append(
            _idx_split(
                "emnist",
                split,
                _find(root, [f"emnist-balanced-{split}-images-idx3-ubyte"]),
                _find(root, [f"emnist-balanced-{split}-labels-idx1-ubyte"]),
                47,
                transpose=True,
            )
        )
    if strict:
        _check_counts("emnist", *splits)
    return splits[0], splits[1]


def read_manifest(path) -> list[tuple[str, int]]:
    """Parse a ``relative-path<TAB>label`` manifest (UTF-8, blank lines ignored)."""
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'path<TAB>label'")
        try:
            label = int(parts[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: label {parts[1]!r} is not an integer") from None
        entries.append((parts[0], label))
    return entries


def gtsrb_image(path) -> np.ndarray:
    """Read one traffic-sign image: grayscale, 32x32, per-image min-max normalised."""
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"))
    return normalize_minmax(resize_32(rgb_to_gray(rgb)))


def load_gtsrb(data_dir, strict: bool = True) -> tuple[DatasetSplit, DatasetSplit]:
    """GTSRB from pre-extracted images listed in ``train.tsv`` / ``test.tsv`` manifests."""
    root = _dataset_dir(data_dir, "gtsrb")
    splits = []
    for split in ("train", "test"):
        manifest = root / f"{split}.tsv"
        if not manifest.exists():
            raise DatasetError(f"GTSRB manifest {manifest} not found")
        entries = read_manifest(manifest)
        images = np.empty((len(entries), GTSRB_SIZE, GTSRB_SIZE))
        for i, (rel, _) in enumerate(entries):
            images[i] = gtsrb_image(manifest.parent / rel)
        labels = np.array([label for _, label in entries], dtype=np.int64)
        splits.append(DatasetSplit("gtsrb", split, images, labels, 43))
    if strict:
        _check_counts("gtsrb", *splits)
    return splits[0], splits[1]


LOADERS = {"mnist": load_mnist, "emnist": load_emnist, "gtsrb": load_gtsrb}


def load_dataset(name: str, data_dir, strict: bool = True) -> tuple[DatasetSplit, DatasetSplit]:
    if name not in LOADERS:
        raise DatasetError(f"unknown dataset {name!r}; expected one of {DATASETS}")
    return LOADERS[name](data_dir, strict=strict)
