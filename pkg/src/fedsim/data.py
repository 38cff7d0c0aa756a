"""Dataset loading, synthesis, and client partitioning.

Loaders parse the classic big-endian IDX image/label pair and the CIFAR-10
binary batch format, scaling pixels to [0, 1]. ``synth_mixture`` builds a
balanced Gaussian class mixture with controllable mean separation.

Partitions map client ids to sorted, disjoint sample-index arrays covering
the dataset:

- iid: a random permutation split into near-equal parts (sizes differ by
  at most one).
- shards: samples stably sorted by label, cut into m * shards_per_client
  contiguous shards, each client dealt shards_per_client of them uniformly
  at random without replacement. Few shards per client = few distinct
  labels per client.
- imbalanced: label-sorted samples cut into ``total_shards`` equal shards;
  clients are paired into m/2 groups, the pair in group k (1-based) gets k
  shards per member, and the last pair splits whatever remains.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError
from .objectives import Dataset

IDX_IMAGES_MAGIC = 0x00000803  # 2051
IDX_LABELS_MAGIC = 0x00000801  # 2049
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixels


def _read_file(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read '{path}': {exc}") from exc


def _idx_header(buf: bytes, path, expect_magic: int, n_dims: int) -> tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(buf) < header_len:
        raise DataFormatError(f"'{path}': truncated header at byte {len(buf)} (need {header_len})")
    magic = struct.unpack(">i", buf[:4])[0]
    if magic != expect_magic:
        raise DataFormatError(
            f"'{path}': bad magic {magic:#010x} at offset 0 (expected {expect_magic:#010x})"
        )
    return struct.unpack(f">{n_dims}i", buf[4:header_len])


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Dataset from an IDX image file plus its label file; pixels scaled to [0,1]."""
    img_buf = _read_file(images_path)
    n, rows, cols = _idx_header(img_buf, images_path, IDX_IMAGES_MAGIC, 3)
    expected = 16 + n * rows * cols
    if len(img_buf) < expected:
        raise DataFormatError(
            f"'{images_path}': truncated at byte {len(img_buf)} (expected {expected})"
        )
    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n * rows * cols, offset=16)
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0

    lab_buf = _read_file(labels_path)
    (n_labels,) = _idx_header(lab_buf, labels_path, IDX_LABELS_MAGIC, 1)
    if n_labels != n:
        raise DataFormatError(
            f"'{labels_path}': {n_labels} labels for {n} images (count mismatch)"
        )
    if len(lab_buf) < 8 + n:
        raise DataFormatError(f"'{labels_path}': truncated at byte {len(lab_buf)} (expected {8 + n})")
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1 if n else 1, name=name)


def load_cifar_bin(paths, name: str = "cifar") -> Dataset:
    """Dataset from one or more CIFAR-10 binary batch files (3073-byte records)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if not paths:
        raise ConfigError("need at least one CIFAR batch file")
    feature_parts, label_parts = [], []
    for path in paths:
        buf = _read_file(path)
        if len(buf) == 0 or len(buf) % CIFAR_RECORD_BYTES != 0:
            offset = (len(buf) // CIFAR_RECORD_BYTES) * CIFAR_RECORD_BYTES
            raise DataFormatError(
                f"'{path}': truncated record at byte {offset} "
                f"(file has {len(buf)} bytes, records are {CIFAR_RECORD_BYTES})"
            )
        records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        label_parts.append(records[:, 0].astype(np.int64))
        feature_parts.append(records[:, 1:].astype(np.float64) / 255.0)
    features = np.concatenate(feature_parts)
    labels = np.concatenate(label_parts)
    return Dataset(features, labels, 10, name=name)


def mixture_means(classes: int, dim: int, separation: float, rng) -> np.ndarray:
    """Class means with E||mu_a - mu_b||^2 = separation^2 (unit sample noise)."""
    if separation < 0:
        raise ConfigError("separation must be >= 0")
    scale = separation / np.sqrt(2.0 * dim)
    return rng.normal(0.0, scale, size=(classes, dim))


def synth_mixture(classes: int, per_class: int, dim: int, separation: float, rng,
                  name: str = "synthetic", means: np.ndarray | None = None) -> Dataset:
    """Balanced Gaussian mixture; pairwise class-mean distance ~= separation.

    Class means are drawn first (or passed in via ``means`` so that several
    splits share one mixture); samples add unit isotropic noise.
    separation = 0 makes all classes indistinguishable.
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise ConfigError("classes, per_class, and dim must all be >= 1")
    if means is None:
        means = mixture_means(classes, dim, separation, rng)
    elif means.shape != (classes, dim):
        raise ConfigError(f"means must have shape ({classes}, {dim})")
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((classes * per_class, dim))
    features = means[labels] + noise
    return Dataset(features, labels, classes, name=name)


def _check_clients(n: int, m: int):
    if m < 1:
        raise ConfigError("need at least one client")
    if n < m:
        raise ConfigError(f"cannot split {n} samples across {m} clients")


def partition_iid(n: int, m: int, rng) -> list[np.ndarray]:
    """Random near-equal split: client sizes differ by at most one."""
    _check_clients(n, m)
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, m)]


def partition_shards(labels: np.ndarray, m: int, shards_per_client: int, rng) -> list[np.ndarray]:
    """Label-sorted shards dealt uniformly without replacement."""
    n = labels.shape[0]
    _check_clients(n, m)
    if shards_per_client < 1:
        raise ConfigError("shards_per_client must be >= 1")
    n_shards = m * shards_per_client
    if n_shards > n:
        raise ConfigError(f"{n_shards} shards exceed {n} samples")
    by_label = np.argsort(labels, kind="stable")
    shards = np.array_split(by_label, n_shards)
    order = rng.permutation(n_shards)
    parts = []
    for i in range(m):
        mine = order[i * shards_per_client : (i + 1) * shards_per_client]
        parts.append(np.sort(np.concatenate([shards[s] for s in mine])))
    return parts


def imbalanced_shard_counts(m: int, total_shards: int) -> np.ndarray:
    """Shards per client under the paired-group imbalanced scheme."""
    if m < 2 or m % 2 != 0:
        raise ConfigError("imbalanced partition needs an even client count >= 2")
    groups = m // 2
    ramp = 2 * (groups * (groups - 1) // 2)  # groups 1..G-1 get k shards per member
    remaining = total_shards - ramp
    if remaining < 2:
        raise ConfigError(
            f"{total_shards} shards cannot cover {m} clients "
            f"(the group ramp alone needs {ramp + 2})"
        )
    counts = np.empty(m, dtype=np.int64)
    for k in range(1, groups):
        counts[2 * (k - 1)] = k
        counts[2 * (k - 1) + 1] = k
    counts[m - 2] = remaining // 2
    counts[m - 1] = remaining - remaining // 2
    return counts


def partition_imbalanced(labels: np.ndarray, m: int, total_shards: int, rng) -> list[np.ndarray]:
    """Label-sorted equal shards, heavily skewed client sizes (paired groups)."""
    n = labels.shape[0]
    _check_clients(n, m)
    if total_shards < 1 or n % total_shards != 0:
        raise ConfigError(
            f"total_shards={total_shards} must divide the dataset size {n} evenly"
        )
    counts = imbalanced_shard_counts(m, total_shards)
    by_label = np.argsort(labels, kind="stable")
    shards = np.split(by_label, total_shards)
    order = rng.permutation(total_shards)
    parts, pos = [], 0
    for count in counts:
        mine = order[pos : pos + count]
        pos += count
        parts.append(np.sort(np.concatenate([shards[s] for s in mine])))
    return parts


def partition_stats(parts: list[np.ndarray]) -> dict:
    """Client-size summary; std is the sample standard deviation (ddof=1)."""
    sizes = np.array([p.size for p in parts], dtype=np.float64)
    std = float(sizes.std(ddof=1)) if sizes.size > 1 else 0.0
    return {
        "clients": len(parts),
        "mean": float(sizes.mean()),
        "std": std,
        "min": int(sizes.min()),
        "max": int(sizes.max()),
    }
