"""Vector primitives, similarity functions, and seeded random streams.

Model parameters ("params") are flat 1-D float64 arrays. All functions
here are pure; the only stateful object is :class:`RngStream`, which is
never shared between consumers.
"""

from __future__ import annotations

import hashlib

import numpy as np

NORM_FLOOR = 1e-12


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Backed by the counter-based Philox generator with the key derived
    from the pair, so each consumer (device, attacker, partitioner, ...)
    owns an independent stream whose output does not depend on draw
    interleaving by other consumers or on worker scheduling.
    """

    def __init__(self, seed: int, stream_id: str):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.stream_id = stream_id
        digest = hashlib.blake2b(stream_id.encode("utf-8"), digest_size=8).digest()
        key = int.from_bytes(digest, "big")
        self.gen = np.random.Generator(np.random.Philox(key=[self.seed, key]))

    def spawn(self, label: str) -> "RngStream":
        """Derive an independent child stream from this one."""
        return RngStream(self.seed, f"{self.stream_id}/{label}")

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


def as_params(values) -> np.ndarray:
    """Coerce to a 1-D float64 parameter vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"params must be 1-D, got shape {arr.shape}")
    return arr


def ensure_finite(name: str, values: np.ndarray) -> np.ndarray:
    """Raise if the array holds NaN or infinities."""
    if not np.isfinite(values).all():
        raise FloatingPointError(f"{name} contains non-finite entries")
    return values


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two parameter vectors."""
    a, b = as_params(a), as_params(b)
    _check_dims(a, b)
    return float(np.linalg.norm(a - b))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Vectors with norm below 1e-12 are treated as uncorrelated (returns
    0.0) so all-zero early-round models do not blow up.
    """
    a, b = as_params(a), as_params(b)
    _check_dims(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        return 0.0
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


class Projector:
    """Fixed linear projection into feature space.

    One projector is built per run and shared by every model so the
    projected vectors stay mutually comparable. Random mode draws i.i.d.
    +-1/sqrt(d_feat) entries, which preserves inner products in
    expectation; identity mode is available for d_feat == dim.
    """

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("projection matrix must be 2-D")

    @classmethod
    def random(cls, dim: int, d_feat: int, rng: RngStream) -> "Projector":
        if d_feat > dim:
            raise ValueError(f"d_feat {d_feat} exceeds model dim {dim}")
        if d_feat < 1:
            raise ValueError(f"d_feat must be positive, got {d_feat}")
        signs = rng.gen.integers(0, 2, size=(d_feat, dim)).astype(np.float64) * 2.0 - 1.0
        return cls(signs / np.sqrt(d_feat))

    @classmethod
    def identity(cls, dim: int) -> "Projector":
        return cls(np.eye(dim))

    @property
    def d_feat(self) -> int:
        return self.matrix.shape[0]

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    def project(self, w) -> np.ndarray:
        w = as_params(w)
        if w.shape[0] != self.input_dim:
            raise ValueError(
                f"dimension mismatch: projector expects {self.input_dim}, got {w.shape[0]}"
            )
        return self.matrix @ w


def random_projection(w, d_feat: int, rng: RngStream) -> np.ndarray:
    """Project w to d_feat dims through a fresh sign matrix drawn from rng.

    Run-level code builds one :class:`Projector` and reuses it; this
    convenience form draws the matrix and applies it in one step.
    """
    w = as_params(w)
    return Projector.random(w.shape[0], d_feat, rng).project(w)
