"""Dataset ingestion, preprocessing, splitting, oversampling, augmentation.

A dataset is N univariate sequences of a shared length t with integer class
labels. Missing readings are carried as NaN until imputation; training
requires a fully imputed dataset.

On-disk format: a directory with ``data.csv`` (header ``id,label,v0..v{t-1}``,
empty cell = missing) and ``manifest.json`` (provenance, shape, class names,
content hash of the CSV).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DatasetFormatError(ValueError):
    """Malformed dataset file (parse errors carry file and line)."""


@dataclass
class Dataset:
    sequences: np.ndarray            # (N, t) float64, NaN marks missing
    labels: np.ndarray               # (N,) int64 in [0, L)
    class_names: list[str]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.sequences.ndim != 2:
            raise ValueError(f"sequences must be (N, t), got shape {self.sequences.shape}")
        if self.labels.shape != (self.sequences.shape[0],):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match N={self.sequences.shape[0]}"
            )
        n_classes = len(self.class_names)
        if self.n and (self.labels.min() < 0 or self.labels.max() >= n_classes):
            raise ValueError("labels outside [0, num_classes)")
        present = np.unique(self.labels)
        if len(present) != n_classes:
            missing = sorted(set(range(n_classes)) - set(present.tolist()))
            names = [self.class_names[i] for i in missing]
            raise ValueError(f"classes with no samples: {names}")

    @property
    def n(self) -> int:
        return self.sequences.shape[0]

    @property
    def seq_len(self) -> int:
        return self.sequences.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.sequences)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.sequences).any())

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            self.sequences[indices].copy(),
            self.labels[indices].copy(),
            list(self.class_names),
            dict(self.provenance),
        )


# ---------------------------------------------------------------------------
# CSV and manifest I/O
# ---------------------------------------------------------------------------


def _format_cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_csv(ds: Dataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    t = ds.seq_len
    writer.writerow(["id", "label"] + [f"v{i}" for i in range(t)])
    for i in range(ds.n):
        row = [str(i), ds.class_names[ds.labels[i]]]
        row.extend(_format_cell(v) for v in ds.sequences[i])
        writer.writerow(row)


def csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    write_csv(ds, buf)
    return buf.getvalue()


def dataset_hash(ds: Dataset) -> str:
    return hashlib.sha256(csv_text(ds).encode("utf-8")).hexdigest()


def load_csv(path, provenance: dict | None = None) -> Dataset:
    """Parse ``id,label,v0..v{t-1}`` rows; empty cells become NaN.

    Labels are free strings interned to integer ids in first-seen order.
    Ragged rows and non-numeric cells are rejected with file:line context.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}:1: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise DatasetFormatError(
                f"{path}:1: header must be 'id,label,v0,...', got {header[:3]}"
            )
        t = len(header) - 2
        names: list[str] = []
        ids: dict[str, int] = {}
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != t + 2:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {t} values, got {len(row) - 2}"
                )
            label = row[1]
            if label not in ids:
                ids[label] = len(names)
                names.append(label)
            labels.append(ids[label])
            values = np.empty(t)
            for j, cell in enumerate(row[2:]):
                if cell == "":
                    values[j] = np.nan
                else:
                    try:
                        values[j] = float(cell)
                    except ValueError:
                        raise DatasetFormatError(
                            f"{path}:{lineno}: column v{j}: not a number: {cell!r}"
                        ) from None
            rows.append(values)
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    prov = provenance or {"source": "csv", "path": str(path)}
    return Dataset(np.stack(rows), np.array(labels), names, prov)


def save_dataset(directory, ds: Dataset) -> Path:
    """Write data.csv + manifest.json; returns the directory path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text = csv_text(ds)
    (directory / "data.csv").write_text(text)
    manifest = {
        "format": "heteroiot-dataset-v1",
        "n": ds.n,
        "seq_len": ds.seq_len,
        "num_classes": ds.num_classes,
        "class_names": ds.class_names,
        "missing_cells": int(np.isnan(ds.sequences).sum()),
        "provenance": ds.provenance,
        "content_hash": hashlib.sha256(text.encode("utf-8")).hexdigest(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    csv_path = directory / "data.csv"
    if not manifest_path.exists() or not csv_path.exists():
        raise DatasetFormatError(f"{directory}: missing data.csv or manifest.json")
    manifest = json.loads(manifest_path.read_text())
    text = csv_path.read_text()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if digest != manifest.get("content_hash"):
        raise DatasetFormatError(f"{directory}: content hash mismatch (corrupt data.csv?)")
    ds = load_csv(csv_path, provenance=manifest.get("provenance"))
    if ds.class_names != manifest["class_names"]:
        raise DatasetFormatError(f"{directory}: class names disagree with manifest")
    return ds


# ---------------------------------------------------------------------------
# imputation
# ---------------------------------------------------------------------------


@dataclass
class ImputeStats:
    """Per-(class, timestamp) means with fallback chain to class mean, then 0."""

    class_names: list[str]
    slot_mean: np.ndarray   # (L, t), NaN where a slot had no observations
    class_mean: np.ndarray  # (L,),  NaN where a class was fully missing


def fit_impute_stats(ds: Dataset) -> ImputeStats:
    L, t = ds.num_classes, ds.seq_len
    slot = np.full((L, t), np.nan)
    cls = np.full(L, np.nan)
    for c in range(L):
        rows = ds.sequences[ds.labels == c]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # empty-slice means
            slot[c] = np.nanmean(rows, axis=0)
            cls[c] = np.nanmean(rows)
    return ImputeStats(list(ds.class_names), slot, cls)


def apply_impute(ds: Dataset, stats: ImputeStats) -> Dataset:
    if stats.class_names != ds.class_names:
        raise ValueError("impute stats were fit on a different class table")
    seq = ds.sequences.copy()
    fill = stats.slot_mean[ds.labels]                      # (N, t)
    cls_fill = stats.class_mean[ds.labels][:, None]        # (N, 1)
    fill = np.where(np.isnan(fill), cls_fill, fill)
    fill = np.where(np.isnan(fill), 0.0, fill)
    mask = np.isnan(seq)
    seq[mask] = fill[mask]
    prov = dict(ds.provenance)
    prov["imputed"] = prov.get("imputed", 0) + int(mask.sum())
    return Dataset(seq, ds.labels.copy(), list(ds.class_names), prov)


def impute_mean(ds: Dataset) -> Dataset:
    """Fill each missing cell with the mean of its (class, timestamp) slot,
    falling back to the class mean, then to 0. Non-missing cells untouched."""
    return apply_impute(ds, fit_impute_stats(ds))


# ---------------------------------------------------------------------------
# ragged-length alignment
# ---------------------------------------------------------------------------


def truncate_to_min(sequences: list[np.ndarray], labels, class_names,
                    provenance: dict | None = None) -> Dataset:
    """Cut every sequence to the shortest length, keeping the head."""
    if not sequences:
        raise ValueError("truncate_to_min: no sequences")
    lengths = [len(s) for s in sequences]
    if min(lengths) < 1:
        raise ValueError("truncate_to_min: empty sequence")
    t = min(lengths)
    mat = np.stack([np.asarray(s, dtype=np.float64)[:t] for s in sequences])
    prov = dict(provenance or {})
    prov["truncated_to"] = t
    return Dataset(mat, np.asarray(labels), list(class_names), prov)


# ---------------------------------------------------------------------------
# stratified split
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 100


def stratified_split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Deterministic per-class split.

    Per-class train count starts at floor(fraction * n_c); the remainder up
    to round(fraction * N) is assigned by largest fractional part (ties by
    class id). Every class keeps at least one sample on each side.
    """
    if not spec.stratified:
        raise ValueError("only stratified splitting is supported")
    counts = ds.class_counts()
    if (counts < 2).any():
        bad = [ds.class_names[i] for i in np.flatnonzero(counts < 2)]
        raise ValueError(f"stratified split needs >= 2 samples per class; too small: {bad}")
    frac = spec.train_fraction
    base = np.floor(frac * counts).astype(int)
    base = np.clip(base, 1, counts - 1)
    target = int(round(frac * ds.n))
    remainder = target - int(base.sum())
    fractions = frac * counts - np.floor(frac * counts)
    if remainder > 0:
        order = sorted(range(ds.num_classes), key=lambda c: (-fractions[c], c))
        for c in order:
            if remainder == 0:
                break
            if base[c] < counts[c] - 1:
                base[c] += 1
                remainder -= 1
    elif remainder < 0:
        order = sorted(range(ds.num_classes), key=lambda c: (fractions[c], c))
        for c in order:
            if remainder == 0:
                break
            if base[c] > 1:
                base[c] -= 1
                remainder += 1

    rng = np.random.default_rng(spec.seed)
    train_idx, test_idx = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        perm = rng.permutation(len(members))
        members = members[perm]
        train_idx.extend(members[: base[c]])
        test_idx.extend(members[base[c]:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))
    train, test = ds.subset(train_idx), ds.subset(test_idx)
    train.provenance["split"] = {"part": "train", "seed": spec.seed, "fraction": frac}
    test.provenance["split"] = {"part": "test", "seed": spec.seed, "fraction": frac}
    return train, test


# ---------------------------------------------------------------------------
# borderline SMOTE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoteConfig:
    k: int = 5          # same-class neighbors used for interpolation
    m: int = 5          # neighbors used for the danger-zone test
    seed: int = 0


@dataclass
class SmoteReport:
    """Which minority samples seeded synthesis, and the parents of each synthetic."""

    categories: dict[int, str]                 # sample index -> safe|danger|noise (minority only)
    parents: list[tuple[int, int]]             # (seed index, neighbor index) per synthetic
    fallbacks: list[str]                       # class names that used plain duplication


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    d = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def bsmote_oversample(ds: Dataset, cfg: SmoteConfig = SmoteConfig()) -> tuple[Dataset, SmoteReport]:
    """Borderline SMOTE (variant 1), equalizing every class to the majority count.

    For each minority sample, its ``m`` nearest neighbors over the whole set
    classify it as NOISE (all other-class), DANGER (at least half other-class)
    or SAFE. Danger samples seed synthesis: s = p + u * (q - p) with q drawn
    from p's ``k`` nearest same-class non-noise neighbors, u uniform in [0,1).
    Noise samples never act as a parent. Classes with no danger samples fall
    back to seeding from all non-noise members; classes smaller than k+1 fall
    back to plain duplication (with a warning).
    """
    if ds.has_missing():
        raise ValueError("bsmote: dataset still has missing values")
    rng = np.random.default_rng(cfg.seed)
    counts = ds.class_counts()
    majority = int(counts.max())
    x = ds.sequences
    d2 = _pairwise_sq_dists(x, x)
    np.fill_diagonal(d2, np.inf)

    new_rows, new_labels = [], []
    report = SmoteReport(categories={}, parents=[], fallbacks=[])

    for c in range(ds.num_classes):
        deficit = majority - int(counts[c])
        members = np.flatnonzero(ds.labels == c)
        if deficit <= 0:
            continue

        # danger-zone classification over the full training set
        m_eff = min(cfg.m, ds.n - 1)
        cats = {}
        for p in members:
            neigh = np.argpartition(d2[p], m_eff - 1)[: m_eff]
            other = int((ds.labels[neigh] != c).sum())
            if other == m_eff:
                cats[int(p)] = "noise"
            elif 2 * other >= m_eff:
                cats[int(p)] = "danger"
            else:
                cats[int(p)] = "safe"
        report.categories.update(cats)

        usable = np.array([i for i in members if cats[int(i)] != "noise"])
        if len(members) < cfg.k + 1 or len(usable) < 2:
            warnings.warn(
                f"bsmote: class '{ds.class_names[c]}' too small for interpolation "
                f"({len(members)} samples); duplicating instead"
            )
            report.fallbacks.append(ds.class_names[c])
            picks = rng.choice(members, size=deficit, replace=True)
            for p in picks:
                new_rows.append(x[p].copy())
                new_labels.append(c)
                report.parents.append((int(p), int(p)))
            continue

        seeds = np.array([i for i in usable if cats[int(i)] == "danger"])
        if len(seeds) == 0:
            warnings.warn(
                f"bsmote: class '{ds.class_names[c]}' has no danger-zone samples; "
                "seeding from all non-noise members"
            )
            seeds = usable

        # k nearest same-class non-noise neighbors per seed
        neighbor_table = {}
        for p in seeds:
            pool = usable[usable != p]
            order = pool[np.argsort(d2[p][pool], kind="stable")]
            neighbor_table[int(p)] = order[: cfg.k]

        for _ in range(deficit):
            p = int(seeds[rng.integers(len(seeds))])
            q = int(neighbor_table[p][rng.integers(len(neighbor_table[p]))])
            u = rng.uniform(0.0, 1.0)
            new_rows.append(x[p] + u * (x[q] - x[p]))
            new_labels.append(c)
            report.parents.append((p, q))

    if not new_rows:
        return ds, report
    seq = np.concatenate([x, np.stack(new_rows)])
    labels = np.concatenate([ds.labels, np.array(new_labels, dtype=np.int64)])
    prov = dict(ds.provenance)
    prov["bsmote"] = {"added": len(new_rows), "k": cfg.k, "m": cfg.m, "seed": cfg.seed}
    return Dataset(seq, labels, list(ds.class_names), prov), report


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentPolicy:
    jitter_sigma: float = 0.05   # fraction of each sequence's std dev
    scale_sigma: float = 0.1     # std dev of the global multiplicative factor
    seed: int = 0


def augment_timeseries(ds: Dataset, policy: AugmentPolicy | None) -> Dataset:
    """Append one jittered and one rescaled copy per sample (training split only).

    Jitter adds Gaussian noise with sigma = jitter_sigma * std(sequence);
    rescaling multiplies the whole sequence by one Normal(1, scale_sigma)
    draw. ``policy=None`` is the identity.
    """
    if policy is None:
        return ds
    if ds.has_missing():
        raise ValueError("augment: dataset still has missing values")
    rng = np.random.default_rng(policy.seed)
    x = ds.sequences
    stds = x.std(axis=1, keepdims=True)
    jitter = x + rng.standard_normal(x.shape) * (policy.jitter_sigma * stds)
    factors = rng.normal(1.0, policy.scale_sigma, size=(ds.n, 1))
    scaled = x * factors
    seq = np.concatenate([x, jitter, scaled])
    labels = np.concatenate([ds.labels] * 3)
    prov = dict(ds.provenance)
    prov["augmented"] = {"jitter_sigma": policy.jitter_sigma,
                         "scale_sigma": policy.scale_sigma, "seed": policy.seed}
    return Dataset(seq, labels, list(ds.class_names), prov)


def zscore_per_sequence(ds: Dataset, eps: float = 1e-8) -> Dataset:
    """Optional per-sequence standardization (off by default everywhere)."""
    x = ds.sequences
    mean = np.nanmean(x, axis=1, keepdims=True)
    std = np.nanstd(x, axis=1, keepdims=True)
    seq = (x - mean) / np.maximum(std, eps)
    prov = dict(ds.provenance)
    prov["normalized"] = "zscore-per-sequence"
    return Dataset(seq, ds.labels.copy(), list(ds.class_names), prov)


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------

SYNTH_FAMILIES = (
    "smooth_diurnal",    # mid-level slow sine, random phase
    "drift_plateau",     # high base, slow drift plus gentle wave
    "clipped_saw",       # sawtooth ramps at a negative base level
    "bounded_walk",      # random walk wrapped into [0, 40)
    "spiky_bursts",      # small positive floor with sparse spikes
    "regime_switch",     # two levels with random switch points
    "fast_oscillation",  # same level/amplitude family as smooth_diurnal, faster
    "slow_fast_mix",     # diurnal wave with a fast ripple on top
)


def _synth_sample(family: str, t: int, rng: np.random.Generator) -> np.ndarray:
    tau = np.arange(t, dtype=np.float64)
    two_pi = 2.0 * np.pi
    if family == "smooth_diurnal":
        base, amp, phase = rng.uniform(8, 12), rng.uniform(3, 6), rng.uniform(0, two_pi)
        return base + amp * np.sin(two_pi * tau / 24.0 + phase) + rng.normal(0, 0.3, t)
    if family == "drift_plateau":
        base, slope = rng.uniform(25, 30), rng.uniform(-0.02, 0.02)
        amp, period = rng.uniform(1, 3), rng.uniform(1.5, 3.0) * t
        phase = rng.uniform(0, two_pi)
        return base + slope * tau + amp * np.sin(two_pi * tau / period + phase) + rng.normal(0, 0.4, t)
    if family == "clipped_saw":
        base, amp = rng.uniform(-12, -8), rng.uniform(5, 8)
        period, phase = rng.uniform(18, 30), rng.uniform(0, 1)
        ramp = np.mod(tau / period + phase, 1.0) * 2.0 - 1.0
        return base + amp * ramp + rng.normal(0, 0.4, t)
    if family == "bounded_walk":
        step = rng.uniform(1.0, 2.5)
        walk = np.cumsum(rng.normal(0, step, t)) + rng.uniform(0, 40)
        return np.mod(walk, 40.0)
    if family == "spiky_bursts":
        calm = np.abs(rng.normal(1.5, 0.6, t))
        spikes = (rng.random(t) < 0.06) * rng.exponential(rng.uniform(6, 12), t)
        return calm + spikes
    if family == "regime_switch":
        low = rng.uniform(2, 8)
        high = low + rng.uniform(5, 10)
        p_switch = rng.uniform(0.03, 0.08)
        level = np.empty(t)
        state = rng.random() < 0.5
        for i in range(t):
            if rng.random() < p_switch:
                state = not state
            level[i] = high if state else low
        return level + rng.normal(0, 0.5, t)
    if family == "fast_oscillation":
        base, amp, phase = rng.uniform(8, 12), rng.uniform(3, 6), rng.uniform(0, two_pi)
        return base + amp * np.sin(two_pi * tau / 6.0 + phase) + rng.normal(0, 0.3, t)
    if family == "slow_fast_mix":
        base, phase = rng.uniform(8, 12), rng.uniform(0, two_pi)
        amp1, amp2 = rng.uniform(3, 6), rng.uniform(1.5, 2.5)
        phase2 = rng.uniform(0, two_pi)
        return (base + amp1 * np.sin(two_pi * tau / 24.0 + phase)
                + amp2 * np.sin(two_pi * tau / 6.0 + phase2) + rng.normal(0, 0.3, t))
    raise ValueError(f"unknown synthetic family {family!r}")


def synth_benchmark(classes: int = 8, n_per_class: int = 125, t: int = 168,
                    seed: int = 7) -> Dataset:
    """Seeded synthetic benchmark of heterogeneous sequence families.

    Families differ in base level, frequency content, trend, noise floor,
    and one family switches regimes; three families share their level and
    amplitude range and differ only in temporal structure.
    """
    if not 2 <= classes <= len(SYNTH_FAMILIES):
        raise ValueError(f"classes must be in [2, {len(SYNTH_FAMILIES)}]")
    if n_per_class < 4:
        raise ValueError("n_per_class must be >= 4")
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for c, family in enumerate(SYNTH_FAMILIES[:classes]):
        for _ in range(n_per_class):
            rows.append(_synth_sample(family, t, rng))
            labels.append(c)
    prov = {"source": "synth", "classes": classes, "n_per_class": n_per_class,
            "t": t, "seed": seed}
    return Dataset(np.stack(rows), np.array(labels), list(SYNTH_FAMILIES[:classes]), prov)
