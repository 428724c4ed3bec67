"""Experiment orchestration: feature caches, training runs, sweeps and the summary table.

On-disk layout::

    <cache>/<dataset>/pixels-<split>.qpff          normalised pixels, channels=1
    <cache>/<dataset>/<variant>/<split>.qpff       filtered feature maps
    <cache>/<dataset>/<variant>/meta.json          digest guarding reuse
    <out>/<dataset>/<variant>/seed<k>/metrics.csv  accuracy trace
    <out>/<dataset>/<variant>/seed<k>/model.qpfm   checkpoint
    <out>/<dataset>/<variant>/seed<k>/result.json  final accuracy + metadata
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cachefile, dataset, filters, nn
from .filters import FilterVariant

log = logging.getLogger(__name__)

FEATURE_FORMAT = "qpff-v1"

TABLE_VARIANTS = (
    ("NN", FilterVariant.none()),
    ("Encoding only", FilterVariant.encoding_only()),
    ("One CNOT", FilterVariant.one_cnot(0, 3)),
    ("Two CNOT", FilterVariant.two_cnots((0, 3), (1, 2))),
)


class HarnessError(Exception):
    """Raised for missing inputs or inconsistent caches; carries a short error code."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


def _digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    variant: FilterVariant
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    data_dir: Path = Path("data")
    cache_dir: Path = Path("cache")
    out_dir: Path = Path("runs")

    def __post_init__(self) -> None:
        if self.dataset not in dataset.DATASETS:
            raise HarnessError("bad-config", f"unknown dataset {self.dataset!r}")
        for name in ("data_dir", "cache_dir", "out_dir"):
            object.__setattr__(self, name, Path(getattr(self, name)))

    def describe(self) -> dict:
        # paths are deliberately excluded so digests do not depend on where runs live
        return {
            "dataset": self.dataset,
            "variant": self.variant.kind,
            "arrangement": self.variant.label,
            "train": self.train.as_dict(),
        }

    @property
    def digest(self) -> str:
        return _digest(self.describe())

    @property
    def feature_digest(self) -> str:
        return _digest(
            {"format": FEATURE_FORMAT, "dataset": self.dataset, "variant": self.variant.kind, "arrangement": self.variant.label}
        )

    @property
    def feature_dir(self) -> Path:
        return self.cache_dir / self.dataset / self.variant.slug

    @property
    def run_dir(self) -> Path:
        return self.out_dir / self.dataset / self.variant.slug / f"seed{self.train.seed}"

    def with_variant(self, variant: FilterVariant) -> "RunConfig":
        return replace(self, variant=variant)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, train=replace(self.train, seed=seed))


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def load_pixels(config: RunConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Normalised pixels per split, read through a float32 QPFF cache (channels=1).

    Features are always computed from the float32-rounded pixels so that a
    rebuilt feature cache matches the original byte for byte.
    """
    base = config.cache_dir / config.dataset
    paths = {split: base / f"pixels-{split}.qpff" for split in ("train", "test")}
    if not all(p.exists() for p in paths.values()):
        try:
            splits = dataset.load_dataset(config.dataset, config.data_dir)
        except (FileNotFoundError, dataset.DatasetError) as exc:
            raise HarnessError("missing-dataset", str(exc)) from exc
        for s in splits:
            cachefile.write_features(paths[s.split], s.images[:, None].astype(np.float32), s.labels)
    out = {}
    for split, path in paths.items():
        pixels, labels = cachefile.read_features(path)
        out[split] = (pixels[:, 0].astype(np.float64), labels)
    return out


def feature_paths(config: RunConfig) -> dict[str, Path]:
    return {split: config.feature_dir / f"{split}.qpff" for split in ("train", "test")}


def cache_is_current(config: RunConfig) -> bool:
    meta = config.feature_dir / "meta.json"
    paths = feature_paths(config)
    if not meta.exists() or not all(p.exists() for p in paths.values()):
        return False
    recorded = json.loads(meta.read_text())
    if recorded.get("digest") != config.feature_digest:
        return False
    return all(recorded.get("sha256", {}).get(s) == _file_sha256(p) for s, p in paths.items())


def cmd_extract(config: RunConfig) -> dict[str, Path]:
    """Write the filtered train/test feature caches; a current cache is left untouched."""
    paths = feature_paths(config)
    if cache_is_current(config):
        log.info("feature cache %s is current, skipping", config.feature_dir)
        return paths
    pixels = load_pixels(config)
    hashes = {}
    for split, (images, labels) in pixels.items():
        log.info("filtering %s/%s (%d images) with %s", config.dataset, split, len(labels), config.variant.label)
        feats = filters.apply_filter_batch(images, config.variant)
        cachefile.write_features(paths[split], feats.astype(np.float32), labels)
        hashes[split] = _file_sha256(paths[split])
    _write_json(
        config.feature_dir / "meta.json",
        {"digest": config.feature_digest, "dataset": config.dataset, "variant": config.variant.label, "sha256": hashes},
    )
    return paths


def expected_param_count(m: int, hidden: int, classes: int) -> int:
    inputs = m * m
    return hidden * inputs + hidden + classes * hidden + classes


def load_features(config: RunConfig):
    paths = feature_paths(config)
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise HarnessError("missing-cache", f"feature cache not found: {', '.join(missing)}; run extract first")
    _, _, m, classes = dataset.EXPECTED[config.dataset]
    out = {}
    for split, path in paths.items():
        feats, labels = cachefile.read_features(path)
        if feats.shape[1:] != (filters.CHANNELS, m // 2, m // 2):
            raise HarnessError(
                "cache-mismatch", f"{path}: feature shape {feats.shape[1:]} does not match {config.dataset} (m={m})"
            )
        if labels.size and labels.max() >= classes:
            raise HarnessError("cache-mismatch", f"{path}: label {labels.max()} exceeds {classes} classes")
        out[split] = (feats, labels)
    return out


@dataclass
class RunResult:
    dataset: str
    label: str
    seed: int
    accuracy: float
    n_params: int
    digest: str
    run_dir: Path


def cmd_train(config: RunConfig) -> RunResult:
    """Train on the cached features and write checkpoint, metrics CSV and result JSON."""
    data = load_features(config)
    train_x, train_y = data["train"]
    test_x, test_y = data["test"]
    _, _, m, classes = dataset.EXPECTED[config.dataset]

    # every variant must feed exactly m*m values so the classifier size never changes
    n_inputs = int(np.prod(train_x.shape[1:]))
    expected = expected_param_count(m, config.train.hidden, classes)
    if n_inputs != m * m:
        raise HarnessError(
            "param-count", f"{config.variant.label}: {n_inputs} inputs, expected {m * m} ({expected} params)"
        )

    log.info("training %s/%s seed=%d", config.dataset, config.variant.label, config.train.seed)
    result = nn.train(train_x, train_y, classes, config.train, test_x, test_y)
    if result.params.n_params != expected:
        raise HarnessError("param-count", f"model has {result.params.n_params} params, expected {expected}")

    run_dir = config.run_dir
    digest = config.digest
    _write_csv(
        run_dir / "metrics.csv",
        ["iteration", "epoch", "train_loss", "test_accuracy", "config_digest"],
        [[r.iteration, r.epoch, repr(r.train_loss), repr(r.test_accuracy), digest] for r in result.metrics],
    )
    cachefile.write_model(run_dir / "model.qpfm", result.params)
    _write_json(
        run_dir / "result.json",
        {
            "accuracy": result.final_accuracy,
            "config": config.describe(),
            "config_digest": digest,
            "n_params": result.params.n_params,
        },
    )
    return RunResult(config.dataset, config.variant.label, config.train.seed, result.final_accuracy,
                     result.params.n_params, digest, run_dir)


def cmd_eval(config: RunConfig) -> float:
    """Re-evaluate a stored checkpoint on the cached test split."""
    model_path = config.run_dir / "model.qpfm"
    if not model_path.exists():
        raise HarnessError("missing-model", f"{model_path} not found; run train first")
    params = cachefile.read_model(model_path)
    test_x, test_y = load_features(config)["test"]
    if params.n_inputs != int(np.prod(test_x.shape[1:])):
        raise HarnessError("cache-mismatch", "checkpoint input size does not match the feature cache")
    acc = nn.evaluate(params, test_x.reshape(len(test_x), -1).astype(np.float64), test_y)
    _write_csv(
        config.run_dir / "eval.csv",
        ["dataset", "arrangement", "seed", "test_accuracy", "config_digest"],
        [[config.dataset, config.variant.label, config.train.seed, repr(acc), config.digest]],
    )
    return acc


def read_result(config: RunConfig) -> dict | None:
    path = config.run_dir / "result.json"
    if not path.exists():
        return None
    payload = json.loads(path.read_text())
    if payload.get("config_digest") != config.digest:
        return None
    return payload


def max_workers() -> int:
    raw = os.environ.get("QPF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise HarnessError("bad-config", f"QPF_THREADS must be an integer, got {raw!r}") from None


def _train_job(config: RunConfig) -> RunResult:
    return cmd_train(config)


def run_many(configs: list[RunConfig], reuse: bool = True) -> list[RunResult]:
    """Extract serially (caches are shared), then train, optionally in worker processes."""
    for cfg in configs:
        cmd_extract(cfg)
    results: dict[int, RunResult] = {}
    todo = []
    for i, cfg in enumerate(configs):
        prior = read_result(cfg) if reuse else None
        if prior is not None:
            results[i] = RunResult(cfg.dataset, cfg.variant.label, cfg.train.seed, prior["accuracy"],
                                   prior["n_params"], prior["config_digest"], cfg.run_dir)
        else:
            todo.append(i)
    workers = min(max_workers(), len(todo)) if todo else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in zip(todo, pool.map(_train_job, [configs[i] for i in todo])):
                results[i] = res
    else:
        for i in todo:
            results[i] = cmd_train(configs[i])
    return [results[i] for i in range(len(configs))]


@dataclass
class SweepResult:
    label: str
    accuracies: list[float]
    metrics_paths: list[Path]

    @property
    def accuracy(self) -> float:
        return statistics.fmean(self.accuracies)

    @property
    def std(self) -> float:
        return statistics.pstdev(self.accuracies) if len(self.accuracies) > 1 else 0.0


def _sweep(config: RunConfig, variants: list[FilterVariant], seeds: list[int], reuse: bool) -> list[SweepResult]:
    if config.dataset != "mnist":
        log.warning("arrangement sweeps are defined for mnist; running on %s", config.dataset)
    configs = [config.with_variant(v).with_seed(s) for v in variants for s in seeds]
    runs = run_many(configs, reuse=reuse)
    out = []
    for k, variant in enumerate(variants):
        chunk = runs[k * len(seeds) : (k + 1) * len(seeds)]
        out.append(SweepResult(variant.label, [r.accuracy for r in chunk], [r.run_dir / "metrics.csv" for r in chunk]))
    return out


def _sweep_rows(results: list[SweepResult], digest: str, seeds: list[int]):
    for r in results:
        yield [r.label, repr(r.accuracy), repr(r.std), len(seeds), " ".join(map(str, seeds)), digest,
               ";".join(p.as_posix() for p in r.metrics_paths)]


SWEEP_HEADER = ["arrangement", "accuracy", "accuracy_std", "n_seeds", "seeds", "config_digest", "metrics"]


def _sweep_digest(config: RunConfig, name: str, seeds: list[int]) -> str:
    d = config.describe()
    d.pop("variant")
    d.pop("arrangement")
    d["train"].pop("seed")
    return _digest({"sweep": name, "seeds": seeds, **d})


@dataclass
class SweepSummary:
    results: list[SweepResult]
    csv_path: Path
    spread: float = float("nan")
    spread_ok: bool | None = None
    diagonal_mean: float = float("nan")
    other_mean: float = float("nan")

    @property
    def diagonal_better(self) -> bool:
        return self.diagonal_mean > self.other_mean


def cmd_sweep_one_cnot(config: RunConfig, seeds: list[int] | None = None, max_spread: float = 0.015,
                       reuse: bool = True) -> SweepSummary:
    """All 12 single-CNOT arrangements; spread of final accuracy soft-checked against ``max_spread``."""
    seeds = seeds or [config.train.seed]
    results = _sweep(config, filters.enumerate_one_cnot_arrangements(), seeds, reuse)
    digest = _sweep_digest(config, "one-cnot", seeds)
    path = config.out_dir / config.dataset / "sweep-one-cnot.csv"
    _write_csv(path, SWEEP_HEADER, _sweep_rows(results, digest, seeds))
    accs = [r.accuracy for r in results]
    spread = max(accs) - min(accs)
    ok = spread < max_spread
    if not ok:
        log.warning("one-CNOT accuracy spread %.4f exceeds %.4f", spread, max_spread)
    _write_csv(
        config.out_dir / config.dataset / "sweep-one-cnot-summary.csv",
        ["n_arrangements", "min_accuracy", "max_accuracy", "spread", "max_spread", "spread_ok", "config_digest"],
        [[len(results), repr(min(accs)), repr(max(accs)), repr(spread), repr(max_spread), ok, digest]],
    )
    return SweepSummary(results, path, spread=spread, spread_ok=ok)


def cmd_sweep_two_cnot(config: RunConfig, seeds: list[int] | None = None, reuse: bool = True) -> SweepSummary:
    """All 24 disjoint two-CNOT arrangements; compares diagonal pairings against the rest."""
    seeds = seeds or [config.train.seed]
    variants = filters.enumerate_two_cnot_arrangements()
    results = _sweep(config, variants, seeds, reuse)
    digest = _sweep_digest(config, "two-cnot", seeds)
    path = config.out_dir / config.dataset / "sweep-two-cnot.csv"
    _write_csv(path, SWEEP_HEADER, _sweep_rows(results, digest, seeds))
    diag = [r.accuracy for v, r in zip(variants, results) if filters.is_diagonal_pairing(v)]
    other = [r.accuracy for v, r in zip(variants, results) if not filters.is_diagonal_pairing(v)]
    summary = SweepSummary(results, path, diagonal_mean=statistics.fmean(diag), other_mean=statistics.fmean(other))
    _write_csv(
        config.out_dir / config.dataset / "sweep-two-cnot-summary.csv",
        ["n_arrangements", "n_diagonal", "diagonal_mean", "other_mean", "diagonal_better", "config_digest"],
        [[len(results), len(diag), repr(summary.diagonal_mean), repr(summary.other_mean),
          summary.diagonal_better, digest]],
    )
    return summary


@dataclass
class TableResult:
    path: Path
    cells: dict[tuple[str, str], float | None]
    missing: list[str]


def cmd_table(config: RunConfig, datasets=dataset.DATASETS, run_missing: bool = False) -> TableResult:
    """Collect the dataset x variant grid into ``<out>/table.csv``.

    Missing runs are written as ``absent`` and listed in ``missing``. With
    ``run_missing`` any run whose dataset is available is trained first.
    """
    cells: dict[tuple[str, str], float | None] = {}
    missing = []
    for name in datasets:
        for row, variant in TABLE_VARIANTS:
            cfg = replace(config, dataset=name, variant=variant)
            payload = read_result(cfg)
            if payload is None and run_missing:
                try:
                    run_many([cfg])
                    payload = read_result(cfg)
                except HarnessError as exc:
                    log.warning("cannot run %s/%s: %s", name, row, exc)
            cells[(row, name)] = None if payload is None else payload["accuracy"]
            if payload is None:
                missing.append(f"{name}/{variant.label}")
    d = config.describe()
    for key in ("dataset", "variant", "arrangement"):
        d.pop(key)
    digest = _digest({"table": list(datasets), **d})
    rows = []
    for row, _ in TABLE_VARIANTS:
        values = ["absent" if cells[(row, n)] is None else repr(cells[(row, n)]) for n in datasets]
        rows.append([row, *values, config.train.seed, config.train.epochs, config.train.hidden, digest])
    path = config.out_dir / "table.csv"
    _write_csv(path, ["variant", *datasets, "seed", "epochs", "hidden", "config_digest"], rows)
    return TableResult(path, cells, missing)
