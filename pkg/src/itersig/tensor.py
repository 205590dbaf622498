"""Dense level-k tensors over R^d stored as flat row-major arrays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 4
MAX_LEVEL = 6


class ShapeError(ValueError):
    pass


def check_size(dim: int, level: int, allow_large: bool = False) -> None:
    """Reject (dim, level) pairs beyond the dense-storage defaults."""
    if dim < 1 or level < 0:
        raise ShapeError(f"invalid tensor shape dim={dim} level={level}")
    if not allow_large and (dim > MAX_DIM or level > MAX_LEVEL):
        raise ShapeError(
            f"dim={dim}, level={level} exceeds dense limits "
            f"(dim<={MAX_DIM}, level<={MAX_LEVEL}); pass allow_large=True to override"
        )


def flat_index(multi, dim: int) -> int:
    idx = 0
    for i in multi:
        if not 0 <= i < dim:
            raise IndexError(f"index {i} out of range for dim {dim}")
        idx = idx * dim + int(i)
    return idx


def multi_index(flat: int, dim: int, level: int) -> tuple[int, ...]:
    if not 0 <= flat < dim**level:
        raise IndexError(f"flat index {flat} out of range for dim={dim} level={level}")
    out = []
    for _ in range(level):
        flat, r = divmod(flat, dim)
        out.append(r)
    return tuple(reversed(out))


@dataclass(frozen=True)
class LevelTensor:
    dim: int
    level: int
    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        if data.size != self.dim**self.level:
            raise ShapeError(
                f"data length {data.size} != dim**level = {self.dim}**{self.level}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, dim: int, level: int) -> "LevelTensor":
        return cls(dim, level, np.zeros(dim**level))

    @classmethod
    def scalar(cls, value: float, dim: int) -> "LevelTensor":
        return cls(dim, 0, np.array([float(value)]))

    def __getitem__(self, multi) -> float:
        if isinstance(multi, (int, np.integer)):
            multi = (int(multi),)
        if len(multi) != self.level:
            raise IndexError(f"expected {self.level} indices, got {len(multi)}")
        return float(self.data[flat_index(multi, self.dim)])

    def as_array(self) -> np.ndarray:
        """View with shape (dim,)*level."""
        return self.data.reshape((self.dim,) * self.level)

    def to_json(self) -> dict:
        return {"dim": self.dim, "level": self.level, "data": self.data.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "LevelTensor":
        return cls(int(obj["dim"]), int(obj["level"]), np.asarray(obj["data"], dtype=float))


def tensor_product(a: LevelTensor, b: LevelTensor) -> LevelTensor:
    if a.dim != b.dim:
        raise ShapeError(f"dimension mismatch: left dim={a.dim}, right dim={b.dim}")
    return LevelTensor(a.dim, a.level + b.level, np.outer(a.data, b.data).reshape(-1))


def add_scaled(acc: LevelTensor, x: LevelTensor, c: float) -> LevelTensor:
    if acc.dim != x.dim or acc.level != x.level:
        raise ShapeError(
            f"shape mismatch: ({acc.dim}, {acc.level}) vs ({x.dim}, {x.level})"
        )
    return LevelTensor(acc.dim, acc.level, acc.data + c * x.data)


def sup_norm(a) -> float:
    data = a.data if isinstance(a, LevelTensor) else np.asarray(a)
    return float(np.max(np.abs(data))) if data.size else 0.0


def tensor_power(v: np.ndarray, k: int) -> np.ndarray:
    """Flat v^{⊗k}."""
    out = np.ones(1)
    for _ in range(k):
        out = np.outer(out, v).reshape(-1)
    return out
