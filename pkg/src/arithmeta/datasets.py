"""Synthetic multi-domain datasets with controlled shift, sampling, CSV I/O.

The default classification suite is rotated two-moons: each domain is the
same moon cloud rigidly rotated about the origin, so domain difficulty is a
single smooth knob (the angle).  A shifted linear-regression generator is
provided for tests that need closed-form losses.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csvio import fmt, write_text_atomic
from .nn import Batch


class CsvFormatError(ValueError):
    """Malformed dataset file; carries the 1-based offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


@dataclass
class DomainDataset:
    """Samples for a single domain.

    ``labels`` is a 1-D integer array for classification or a 1-D float
    array for regression targets; the dtype is the source of truth.
    """

    inputs: np.ndarray
    labels: np.ndarray
    domain_id: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("dataset inputs must be a non-empty (n, d) matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must be 1-D with one entry per sample")
        if np.issubdtype(self.labels.dtype, np.integer):
            self.labels = self.labels.astype(np.int64)
        else:
            self.labels = self.labels.astype(np.float64)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def is_classification(self) -> bool:
        return np.issubdtype(self.labels.dtype, np.integer)

    def subset(self, indices: np.ndarray, split: str) -> "DomainDataset":
        desc = dict(self.descriptor)
        desc["split"] = split
        return DomainDataset(self.inputs[indices], self.labels[indices], self.domain_id, desc)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DomainDataset)
            and self.domain_id == other.domain_id
            and self.descriptor == other.descriptor
            and self.labels.dtype == other.labels.dtype
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )


def full_batch(dataset: DomainDataset) -> Batch:
    """The whole domain as one batch (regression targets become (n, 1))."""
    targets = dataset.labels if dataset.is_classification else dataset.labels.reshape(-1, 1)
    return Batch(dataset.inputs, targets, domain_id=dataset.domain_id)


def _rotation(angle_deg: float) -> np.ndarray:
    rad = np.deg2rad(angle_deg)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([[c, -s], [s, c]])


def make_rotated_moons(
    angle_deg: float,
    n: int,
    noise_sd: float,
    seed: int,
    domain_id: int = 0,
) -> DomainDataset:
    """Two interleaved moons rotated rigidly about the origin.

    Classes alternate sample by sample, so class counts differ by at most
    one for any n.  Noise is added before the rotation; domains built from
    the same seed are exact rotations of each other.
    """
    if n < 2:
        raise ValueError("need at least 2 samples")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % 2
    t = rng.uniform(0.0, np.pi, size=n)
    points = np.where(
        labels[:, None] == 0,
        np.column_stack([np.cos(t), np.sin(t)]),
        np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)]),
    )
    if noise_sd > 0:
        points = points + rng.normal(0.0, noise_sd, size=points.shape)
    points = points @ _rotation(angle_deg).T
    desc = {
        "generator": "rotated_moons",
        "angle_deg": float(angle_deg),
        "n": int(n),
        "noise_sd": float(noise_sd),
        "seed": int(seed),
        "classes": 2,
    }
    return DomainDataset(points, labels, domain_id, desc)


def make_shifted_regression(
    weights,
    bias_shift: float,
    n: int,
    noise_sd: float,
    seed: int,
    domain_id: int = 0,
) -> DomainDataset:
    """Linear targets y = w.x + bias_shift + noise; domains differ by the shift."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a non-empty vector")
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, size=(n, w.size))
    y = x @ w + bias_shift
    if noise_sd > 0:
        y = y + rng.normal(0.0, noise_sd, size=n)
    desc = {
        "generator": "shifted_regression",
        "weights": [float(v) for v in w],
        "bias_shift": float(bias_shift),
        "n": int(n),
        "noise_sd": float(noise_sd),
        "seed": int(seed),
    }
    return DomainDataset(x, y, domain_id, desc)


# ---------------------------------------------------------------------------
# batch sampling


class SamplerState:
    """Reproducible without-replacement batch sampler over a dataset collection.

    Single-owner mutable: one sampler drives one training run.  Within an
    epoch batches are disjoint; at epoch boundaries the domain is reshuffled
    (a partial leftover smaller than the batch is dropped).  ``copy`` takes
    a snapshot so a saved state replays the identical batch sequence.
    """

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)
        self._cursors: dict[int, tuple[np.ndarray, int]] = {}

    def copy(self) -> "SamplerState":
        return copy.deepcopy(self)

    def _next_indices(self, dataset: DomainDataset, count: int) -> np.ndarray:
        key = dataset.domain_id
        perm, pos = self._cursors.get(key, (None, 0))
        if perm is None or pos + count > perm.size:
            perm = self._rng.permutation(dataset.n)
            pos = 0
        self._cursors[key] = (perm, pos + count)
        return perm[pos : pos + count]


def sample_batch(state: SamplerState, dataset: DomainDataset, batch_size: int) -> Batch:
    """Next batch from a single domain, stamped with its domain_id."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if batch_size > dataset.n:
        raise ValueError(
            f"batch_size {batch_size} exceeds domain size {dataset.n} (domain {dataset.domain_id})"
        )
    idx = state._next_indices(dataset, batch_size)
    targets = dataset.labels[idx] if dataset.is_classification else dataset.labels[idx].reshape(-1, 1)
    return Batch(dataset.inputs[idx], targets, domain_id=dataset.domain_id)


def sample_mixture_batch(
    state: SamplerState, datasets: list[DomainDataset], batch_size: int
) -> Batch:
    """Pooled batch with each element's domain drawn uniformly at random."""
    if not datasets:
        raise ValueError("mixture sampler needs at least one domain")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    picks = state._rng.integers(0, len(datasets), size=batch_size)
    xs, ys = [], []
    for d, dataset in enumerate(datasets):
        count = int(np.sum(picks == d))
        if count == 0:
            continue
        idx = state._next_indices(dataset, count)
        xs.append(dataset.inputs[idx])
        ys.append(dataset.labels[idx])
    inputs = np.concatenate(xs)
    labels = np.concatenate(ys)
    targets = labels if datasets[0].is_classification else labels.reshape(-1, 1)
    return Batch(inputs, targets, domain_id=-1)


# ---------------------------------------------------------------------------
# suites


@dataclass
class DomainSuite:
    """Source domains with per-domain train/validation splits plus held-out targets."""

    sources: list[DomainDataset]
    targets: list[DomainDataset]
    val_fraction: float
    seed: int
    train_sets: list[DomainDataset] = field(default_factory=list)
    val_sets: list[DomainDataset] = field(default_factory=list)

    @property
    def n_sources(self) -> int:
        return len(self.sources)


def make_suite(
    sources: list[DomainDataset],
    targets: list[DomainDataset],
    val_fraction: float = 0.2,
    seed: int = 0,
) -> DomainSuite:
    """Split each source into disjoint train/validation parts, seed-deterministically."""
    if not sources:
        raise ValueError("suite needs at least one source domain")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    source_ids = {d.domain_id for d in sources}
    if len(source_ids) != len(sources):
        raise ValueError("source domain_ids must be unique")
    if source_ids & {d.domain_id for d in targets}:
        raise ValueError("source and target domain_ids must be disjoint")

    train_sets, val_sets = [], []
    for dataset in sources:
        rng = np.random.default_rng([seed, dataset.domain_id])
        perm = rng.permutation(dataset.n)
        n_val = int(round(val_fraction * dataset.n))
        if dataset.n - n_val < 1:
            raise ValueError("val_fraction leaves an empty training split")
        val_sets.append(dataset.subset(np.sort(perm[:n_val]), "val"))
        train_sets.append(dataset.subset(np.sort(perm[n_val:]), "train"))
    return DomainSuite(list(sources), list(targets), val_fraction, seed, train_sets, val_sets)


def rotated_moons_suite(
    source_angles=(0.0, 30.0, 60.0),
    target_angles=(90.0,),
    n_per_domain: int = 300,
    noise_sd: float = 0.15,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> DomainSuite:
    """The default desk-scale suite: moon clouds at several rotation angles."""
    angles = list(source_angles) + list(target_angles)
    child_seeds = np.random.SeedSequence(seed).generate_state(len(angles))
    domains = [
        make_rotated_moons(angle, n_per_domain, noise_sd, int(child_seeds[i]), domain_id=i)
        for i, angle in enumerate(angles)
    ]
    k = len(list(source_angles))
    return make_suite(domains[:k], domains[k:], val_fraction=val_fraction, seed=seed)


# ---------------------------------------------------------------------------
# CSV persistence


def save_csv(dataset: DomainDataset, path: str | Path) -> None:
    """Write `# {json metadata}` then x1,...,xd,label rows at 17 significant digits."""
    meta = {
        "domain_id": dataset.domain_id,
        "descriptor": dataset.descriptor,
        "label_kind": "int" if dataset.is_classification else "float",
        "dim": dataset.dim,
        "n": dataset.n,
    }
    lines = [f"# {json.dumps(meta, sort_keys=True)}"]
    for x, label in zip(dataset.inputs, dataset.labels):
        cells = [format(v, ".17g") for v in x]
        cells.append(str(int(label)) if dataset.is_classification else format(label, ".17g"))
        lines.append(",".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_csv(path: str | Path) -> DomainDataset:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise CsvFormatError(path, 1, "expected '# {json metadata}' header line")
    try:
        meta = json.loads(lines[0][2:])
    except json.JSONDecodeError as exc:
        raise CsvFormatError(path, 1, f"bad metadata JSON: {exc}") from exc
    for key in ("domain_id", "descriptor", "label_kind", "dim", "n"):
        if key not in meta:
            raise CsvFormatError(path, 1, f"metadata missing key {key!r}")
    dim = int(meta["dim"])
    classification = meta["label_kind"] == "int"

    rows, labels = [], []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise CsvFormatError(
                path, line_no, f"expected {dim + 1} columns, found {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells[:dim]])
            labels.append(int(cells[dim]) if classification else float(cells[dim]))
        except ValueError as exc:
            raise CsvFormatError(path, line_no, f"bad numeric value: {exc}") from exc
    if not rows:
        raise CsvFormatError(path, len(lines), "no data rows")
    if len(rows) != int(meta["n"]):
        raise CsvFormatError(
            path, len(lines), f"metadata declares n={meta['n']} but found {len(rows)} rows"
        )
    labels_arr = np.array(labels, dtype=np.int64 if classification else np.float64)
    return DomainDataset(np.array(rows), labels_arr, int(meta["domain_id"]), dict(meta["descriptor"]))
