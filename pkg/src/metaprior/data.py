"""Dataset generation and ingestion.

Covers the toy cubic-regression and half-moon tasks, MNIST IDX files
(big-endian, magic-checked, with an exact-inverse writer), permutation
transforms for multi-task runs, and a procedural digit-glyph generator
used as a desk-scale stand-in when the MNIST files are not on disk.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass
class Batch:
    """Inputs plus targets: float y of shape (n, out) for regression,
    integer labels of shape (n,) for classification."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[0] < 1:
            raise ValueError(f"x must be (n, d) with n >= 1, got {self.x.shape}")
        if np.issubdtype(np.asarray(self.y).dtype, np.integer):
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            self.y = np.asarray(self.y, dtype=np.float64)
        if self.y.shape[0] != self.x.shape[0]:
            raise ValueError("x and y row counts differ")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("non-finite entries in batch")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def classification(self) -> bool:
        return self.y.ndim == 1 and np.issubdtype(self.y.dtype, np.integer)

    def take(self, idx) -> "Batch":
        return Batch(self.x[idx], self.y[idx])


def _gen(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def train_test_split(batch: Batch, train_frac: float = 0.8, seed: int = 0):
    perm = _gen(seed).permutation(batch.n)
    k = int(round(train_frac * batch.n))
    return batch.take(perm[:k]), batch.take(perm[k:])


# ---------------------------------------------------------------------------
# toy generators

def gen_cubic(n: int, x_range=(-4.0, 4.0), noise_var: float = 3.0,
              seed: int = 0) -> Batch:
    """y = x^3 + eps with eps ~ N(0, noise_var); x uniform on x_range."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _gen(seed)
    x = rng.uniform(x_range[0], x_range[1], (n, 1))
    y = x ** 3 + np.sqrt(noise_var) * rng.standard_normal((n, 1))
    return Batch(x, y)


def gen_half_moons(n: int, noise_sd: float = 0.1, seed: int = 0) -> Batch:
    """Two interleaved half circles; class 0 is (cos t, sin t) and class 1 is
    (1 - cos t, 1/2 - sin t) for t uniform on [0, pi], with Gaussian jitter."""
    if n % 2 != 0:
        raise ValueError("n must be even")
    rng = _gen(seed)
    half = n // 2
    t0 = rng.uniform(0.0, np.pi, half)
    t1 = rng.uniform(0.0, np.pi, half)
    x = np.concatenate([
        np.stack([np.cos(t0), np.sin(t0)], axis=1),
        np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)])
    x += noise_sd * rng.standard_normal(x.shape)
    y = np.concatenate([np.zeros(half, dtype=np.int64),
                        np.ones(half, dtype=np.int64)])
    perm = rng.permutation(n)
    return Batch(x[perm], y[perm])


# ---------------------------------------------------------------------------
# MNIST IDX files

def _read_be32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise IdxTruncatedError(f"{path}: truncated header")
    return struct.unpack(">I", buf[offset:offset + 4])[0]


def load_mnist(images_path, labels_path) -> Batch:
    """Load an IDX image/label pair; pixels scaled to [0, 1] as value/255."""
    with open(images_path, "rb") as f:
        raw = f.read()
    magic = _read_be32(raw, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(f"{images_path}: magic 0x{magic:08x}, "
                            f"expected 0x{IDX_IMAGES_MAGIC:08x}")
    n = _read_be32(raw, 4, images_path)
    rows = _read_be32(raw, 8, images_path)
    cols = _read_be32(raw, 12, images_path)
    payload = raw[16:]
    if len(payload) != n * rows * cols:
        raise IdxTruncatedError(f"{images_path}: payload {len(payload)} bytes, "
                                f"expected {n * rows * cols}")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)

    with open(labels_path, "rb") as f:
        raw = f.read()
    magic = _read_be32(raw, 0, labels_path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxMagicError(f"{labels_path}: magic 0x{magic:08x}, "
                            f"expected 0x{IDX_LABELS_MAGIC:08x}")
    n_labels = _read_be32(raw, 4, labels_path)
    payload = raw[8:]
    if len(payload) != n_labels:
        raise IdxTruncatedError(f"{labels_path}: payload {len(payload)} bytes, "
                                f"expected {n_labels}")
    if n_labels != n:
        raise IdxCountMismatchError(f"{n} images but {n_labels} labels")
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    return Batch(images.astype(np.float64) / 255.0, labels)


def write_idx(batch: Batch, images_path, labels_path, image_shape=(28, 28)) -> None:
    """Exact inverse of load_mnist for pixel values on the /255 grid."""
    if batch.n < 1:
        raise ValueError("refusing to write an empty batch")
    rows, cols = image_shape
    if rows * cols != batch.x.shape[1]:
        raise ValueError(f"image shape {image_shape} != {batch.x.shape[1]} pixels")
    if not batch.classification:
        raise ValueError("IDX labels must be integers")
    pixels = np.clip(np.round(batch.x * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, batch.n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, batch.n))
        f.write(batch.y.astype(np.uint8).tobytes())


def find_mnist(data_dir) -> dict:
    """Locate train/test IDX files under a directory; returns {} if absent."""
    if not data_dir:
        return {}
    names = {
        "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
        "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
        "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
        "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
    }
    found = {}
    for key, candidates in names.items():
        for name in candidates:
            p = os.path.join(data_dir, name)
            if os.path.exists(p):
                found[key] = p
                break
        else:
            return {}
    return found


# ---------------------------------------------------------------------------
# permutation tasks

@dataclass
class PermutationTask:
    """Bijective reshuffles of input columns and class labels."""

    input_perm: np.ndarray
    class_perm: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.input_perm = np.asarray(self.input_perm, dtype=np.int64)
        self.class_perm = np.asarray(self.class_perm, dtype=np.int64)
        for name, p in (("input_perm", self.input_perm),
                        ("class_perm", self.class_perm)):
            if sorted(p.tolist()) != list(range(len(p))):
                raise ValueError(f"{name} is not a permutation")

    @classmethod
    def random(cls, n_inputs: int, n_classes: int, seed: int,
               permute_input: bool = True, permute_classes: bool = True):
        rng = _gen(seed)
        ip = rng.permutation(n_inputs) if permute_input else np.arange(n_inputs)
        cp = rng.permutation(n_classes) if permute_classes else np.arange(n_classes)
        return cls(ip, cp, seed)

    @classmethod
    def identity(cls, n_inputs: int, n_classes: int):
        return cls(np.arange(n_inputs), np.arange(n_classes), 0)

    def inverse(self) -> "PermutationTask":
        return PermutationTask(np.argsort(self.input_perm),
                               np.argsort(self.class_perm), self.seed)


def apply_permutation(batch: Batch, task: PermutationTask) -> Batch:
    if len(task.input_perm) != batch.x.shape[1]:
        raise ValueError(f"input_perm size {len(task.input_perm)} != "
                         f"{batch.x.shape[1]} input columns")
    x = batch.x[:, task.input_perm]
    if batch.classification:
        if batch.y.max() >= len(task.class_perm):
            raise ValueError("class_perm smaller than the label range")
        y = task.class_perm[batch.y]
    else:
        y = batch.y
    return Batch(x, y)


# ---------------------------------------------------------------------------
# procedural digit glyphs (MNIST stand-in)

def _ring(cx, cy, r, k=10):
    t = np.linspace(0.0, 2.0 * np.pi, k, endpoint=False)
    return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)


def _digit_strokes():
    """Per digit: list of (control points in [0,1]^2, closed flag)."""
    ellipse = _ring(0.0, 0.0, 1.0, 12) * np.array([0.30, 0.40]) + np.array([0.5, 0.5])
    s = {
        0: [(ellipse, True)],
        1: [(np.array([[0.38, 0.72], [0.55, 0.90], [0.55, 0.10]]), False)],
        2: [(np.array([[0.28, 0.70], [0.34, 0.85], [0.52, 0.92], [0.70, 0.84],
                       [0.73, 0.66], [0.60, 0.48], [0.30, 0.24], [0.26, 0.10],
                       [0.76, 0.10]]), False)],
        3: [(np.array([[0.30, 0.84], [0.50, 0.93], [0.69, 0.83], [0.69, 0.64],
                       [0.52, 0.54]]), False),
            (np.array([[0.52, 0.54], [0.72, 0.44], [0.72, 0.20], [0.52, 0.08],
                       [0.30, 0.17]]), False)],
        4: [(np.array([[0.64, 0.10], [0.64, 0.92], [0.24, 0.38], [0.82, 0.38]]),
             False)],
        5: [(np.array([[0.72, 0.90], [0.30, 0.90], [0.28, 0.56]]), False),
            (np.array([[0.28, 0.56], [0.52, 0.62], [0.70, 0.50], [0.70, 0.24],
                       [0.50, 0.09], [0.28, 0.16]]), False)],
        6: [(np.array([[0.62, 0.92], [0.44, 0.70], [0.34, 0.45], [0.33, 0.32]]),
             False),
            (_ring(0.50, 0.27, 0.185), True)],
        7: [(np.array([[0.24, 0.90], [0.76, 0.90], [0.44, 0.10]]), False)],
        8: [(_ring(0.5, 0.70, 0.175), True), (_ring(0.5, 0.29, 0.215), True)],
        9: [(_ring(0.5, 0.70, 0.19), True),
            (np.array([[0.69, 0.70], [0.66, 0.35], [0.54, 0.10]]), False)],
    }
    return s


_STROKES = _digit_strokes()
_GRID28 = np.stack(np.meshgrid(np.arange(28) + 0.5, np.arange(28) + 0.5,
                               indexing="ij"), axis=-1).reshape(-1, 2)  # (row, col)


def _render_glyph(digit, rng, deform):
    margin = 5.0
    span = 28.0 - 2.0 * margin
    theta = np.deg2rad(rng.normal() * 8.0 * deform)
    scale = 1.0 + rng.uniform(-0.12, 0.08) * deform
    shear = rng.normal() * 0.08 * deform
    shift = rng.uniform(-0.05, 0.05, 2) * deform
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    lin = rot @ np.array([[scale, shear * scale], [0.0, scale]])

    segs = []
    for pts, closed in _STROKES[digit]:
        p = pts + rng.normal(size=pts.shape) * 0.022 * deform
        p = (p - 0.5) @ lin.T + 0.5 + shift
        col = margin + p[:, 0] * span
        row = margin + (1.0 - p[:, 1]) * span
        q = np.stack([row, col], axis=1)
        a, b = q[:-1], q[1:]
        if closed:
            a = np.concatenate([a, q[-1:]])
            b = np.concatenate([b, q[:1]])
        segs.append(np.concatenate([a, b], axis=1))
    segs = np.concatenate(segs)  # (S, 4): row_a col_a row_b col_b

    a = segs[:, :2][None]                      # (1, S, 2)
    ab = (segs[:, 2:] - segs[:, :2])[None]     # (1, S, 2)
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip(((_GRID28[:, None] - a) * ab).sum(-1) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    d = np.sqrt(((_GRID28[:, None] - proj) ** 2).sum(-1)).min(axis=1)

    halfwidth = rng.uniform(0.55, 1.15)
    v = np.clip(1.0 - (d - halfwidth) / 0.9, 0.0, 1.0)
    # occasional stroke break: carve a gap at a random lit point
    if rng.uniform() < 0.12 * deform:
        lit = np.flatnonzero(v > 0.3)
        if lit.size:
            hole = _GRID28[lit[int(rng.integers(0, lit.size))]]
            hd = np.sqrt(((_GRID28 - hole) ** 2).sum(-1))
            v *= np.clip(hd / 2.2, 0.0, 1.0)
    v *= rng.uniform(0.78, 1.0)
    v += rng.normal(size=v.shape) * (0.015 + 0.02 * deform)
    img = np.clip(v, 0.0, 1.0).reshape(28, 28)
    img[:2, :] = 0.0
    img[-2:, :] = 0.0
    img[:, :2] = 0.0
    img[:, -2:] = 0.0
    return np.round(img * 255.0) / 255.0


def gen_digits(n: int, seed: int = 0, deform: float = 1.0) -> Batch:
    """Deterministic 28x28 digit glyphs with affine and stroke jitter.

    A stand-in for MNIST when the IDX files are unavailable: 10 balanced
    classes, values on the /255 grid, 2-pixel border always empty.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _gen(seed)
    labels = rng.integers(0, 10, n)
    x = np.empty((n, 784))
    for i in range(n):
        x[i] = _render_glyph(int(labels[i]), rng, deform).ravel()
    return Batch(x, labels.astype(np.int64))
