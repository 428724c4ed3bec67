import os
from pathlib import Path

import numpy as np
import pytest

from qpf import dataset

_CANDIDATES = [os.environ.get("QPF_DATA_DIR"), "data", "/root/data"]


def find_data_dir(name: str):
    for raw in _CANDIDATES:
        if not raw:
            continue
        root = Path(raw)
        for cand in (root / name, root):
            if name == "gtsrb":
                if (cand / "train.tsv").exists() and (cand / "test.tsv").exists():
                    return root
            elif name == "emnist":
                if any(cand.glob("emnist-balanced-train-images-idx3-ubyte*")):
                    return root
            elif any(cand.glob("train-images-idx3-ubyte*")) or any(cand.glob("train-images.idx3-ubyte*")):
                return root
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    d = find_data_dir("mnist")
    if d is None:
        pytest.skip("MNIST IDX files not found (set QPF_DATA_DIR)")
    return d


def write_idx(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    header = magic.to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in array.shape)
    path.write_bytes(header + array.tobytes())


@pytest.fixture
def tiny_mnist(tmp_path, monkeypatch):
    """A 64/32-image MNIST look-alike: class k is a bright block at a k-dependent spot."""
    rng = np.random.default_rng(7)
    root = tmp_path / "data" / "mnist"
    root.mkdir(parents=True)

    def make(n):
        labels = np.arange(n) % 10
        images = rng.integers(0, 40, size=(n, 28, 28))
        for i, k in enumerate(labels):
            r, c = 2 * (k // 5) * 6 + 2, (k % 5) * 5 + 2
            images[i, r : r + 6, c : c + 4] = 255
        return images.astype(np.uint8), labels.astype(np.uint8)

    for prefix, n in (("train", 64), ("t10k", 32)):
        images, labels = make(n)
        write_idx(root / f"{prefix}-images-idx3-ubyte", images)
        write_idx(root / f"{prefix}-labels-idx1-ubyte", labels)
    monkeypatch.setitem(dataset.EXPECTED, "mnist", (64, 32, 28, 10))
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
