"""Lipschitz-1 piecewise-linear paths and the rescaled partial-sum path."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOL_LIP = 1e-9
BOUND_TOL = 1e-12


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class SampledSequence:
    """Samples xi(0), ..., xi(n-1) in R^d with |xi(k)|_inf <= 1."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[1] < 1:
            raise PathError(f"samples must have shape (n, d), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise PathError("samples contain non-finite values")
        if s.size and np.max(np.abs(s)) > 1.0 + BOUND_TOL:
            raise PathError(f"bound violated: max |xi|_inf = {np.max(np.abs(s))!r} > 1")
        object.__setattr__(self, "samples", s)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def bound(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0


def read_sequence_csv(path) -> SampledSequence:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                if rows:
                    raise
                continue  # header line
    if not rows:
        raise PathError(f"{path}: no samples")
    return SampledSequence(np.array(rows))


def write_sequence_csv(seq: SampledSequence, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(seq.dim)])
        for row in seq.samples:
            w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class PiecewisePath:
    """A path in H: gamma(0) = 0, linear between knots, Lipschitz constant <= 1.

    ``values[i]`` is gamma(knots[i]); the sup norm on R^d is used throughout.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64).reshape(-1)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if k.size < 2 or v.shape[0] != k.size:
            raise PathError(f"need >= 2 knots with matching values, got {k.size} and {v.shape}")
        if k[0] != 0.0:
            raise PathError(f"first knot must be 0, got {k[0]!r}")
        dt = np.diff(k)
        if np.any(dt <= 0):
            raise PathError("knots must be strictly increasing")
        if np.any(v[0] != 0.0):
            raise PathError("gamma(0) must be exactly 0")
        if not np.all(np.isfinite(v)):
            raise PathError("non-finite path values")
        lip = np.max(np.abs(np.diff(v, axis=0)), axis=1) / dt
        if np.any(lip > 1.0 + TOL_LIP):
            i = int(np.argmax(lip))
            raise PathError(f"Lipschitz bound violated on segment {i}: slope {lip[i]!r}")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> float:
        return float(self.knots[-1])

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    @property
    def slopes(self) -> np.ndarray:
        return self.increments / self.durations[:, None]

    @classmethod
    def from_slopes(cls, slopes, durations) -> "PiecewisePath":
        slopes = np.asarray(slopes, dtype=float)
        if slopes.ndim == 1:
            slopes = slopes[:, None]
        durations = np.broadcast_to(np.asarray(durations, dtype=float), (slopes.shape[0],))
        knots = np.concatenate([[0.0], np.cumsum(durations)])
        values = np.vstack([np.zeros(slopes.shape[1]), np.cumsum(slopes * durations[:, None], axis=0)])
        return cls(knots, values)

    @classmethod
    def line(cls, slope, T: float) -> "PiecewisePath":
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        return cls(np.array([0.0, T]), np.vstack([np.zeros_like(slope), slope * T]))

    def __call__(self, t) -> np.ndarray:
        """Evaluate at time(s) t in [0, T]; returns shape (d,) or (len(t), d)."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < -1e-12) or np.any(t_arr > self.T * (1 + 1e-12) + 1e-12):
            raise PathError(f"time outside [0, {self.T}]")
        out = np.column_stack(
            [np.interp(t_arr, self.knots, self.values[:, i]) for i in range(self.dim)]
        )
        return out[0] if np.ndim(t) == 0 else out

    def with_knots(self, extra) -> "PiecewisePath":
        """The same path with additional knots inserted."""
        extra = np.asarray(extra, dtype=float).reshape(-1)
        extra = extra[(extra > 0) & (extra < self.T)]
        knots = np.union1d(self.knots, extra)
        # drop near-duplicates created by rounding
        keep = np.concatenate([[True], np.diff(knots) > 1e-14 * max(1.0, self.T)])
        knots = knots[keep]
        knots[-1] = self.T
        return PiecewisePath(knots, self(knots))

    def refine(self, factor: int) -> "PiecewisePath":
        if factor <= 1:
            return self
        frac = np.arange(1, factor) / factor
        extra = (self.knots[:-1, None] + self.durations[:, None] * frac[None, :]).reshape(-1)
        return self.with_knots(extra)

    def restrict(self, t: float) -> "PiecewisePath":
        """The path on [0, t]."""
        if not 0 < t <= self.T:
            raise PathError(f"restriction time {t} not in (0, {self.T}]")
        inner = self.knots[self.knots < t]
        knots = np.append(inner, t)
        return PiecewisePath(knots, self(knots))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "T": self.T,
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PiecewisePath":
        path = cls(np.asarray(obj["knots"], dtype=float), np.asarray(obj["values"], dtype=float))
        if "dim" in obj and int(obj["dim"]) != path.dim:
            raise PathError(f"declared dim {obj['dim']} != data dim {path.dim}")
        if "T" in obj and not math.isclose(float(obj["T"]), path.T, rel_tol=1e-12):
            raise PathError(f"declared T {obj['T']} != last knot {path.T}")
        return path


def phi_n_from_sequence(seq: SampledSequence, n: int, T: float) -> PiecewisePath:
    """phi_n(t) = n^{-1} sum_{k < tn} xi(k), linearly interpolated.

    Knots sit at j/n; the slope on [j/n, (j+1)/n] is xi(j).
    """
    if n < 1:
        raise PathError(f"n must be a positive integer, got {n}")
    if T <= 0:
        raise PathError(f"horizon must be positive, got {T}")
    need = math.ceil(T * n - 1e-9)
    if len(seq) < need:
        raise PathError(f"need {need} samples for T={T}, n={n}; have {len(seq)}")
    full = int(math.floor(T * n + 1e-9))
    knots = np.arange(full + 1) / n
    steps = seq.samples[:need]
    if need > full:
        knots = np.append(knots, T)
    else:
        knots[-1] = T
    durations = np.diff(knots)
    values = np.vstack([np.zeros(seq.dim), np.cumsum(steps * durations[:, None], axis=0)])
    return PiecewisePath(knots, values)


def sup_distance(a: PiecewisePath, b: PiecewisePath) -> float:
    """Exact sup_t |a(t) - b(t)|_inf (attained on the union of knots)."""
    if a.dim != b.dim:
        raise PathError(f"dim mismatch: {a.dim} vs {b.dim}")
    if not math.isclose(a.T, b.T, rel_tol=1e-12):
        raise PathError(f"horizon mismatch: {a.T} vs {b.T}")
    grid = np.union1d(a.knots, b.knots)
    grid = grid[grid <= min(a.T, b.T)]
    return float(np.max(np.abs(a(grid) - b(grid))))


def _triangle(t: np.ndarray, period: float, amplitude: float) -> np.ndarray:
    phase = np.mod(t, period) / period
    return amplitude * (1.0 - np.abs(1.0 - 2.0 * phase))


def perturb_in_H(
    gamma: PiecewisePath,
    eps2: float,
    seed=None,
    mode: str = "random",
    max_cells: int = 400_000,
) -> PiecewisePath:
    """A path in H within sup distance ``eps2`` of ``gamma``.

    The perturbation only spends the slope budget ``1 - |gamma'|`` left over
    per coordinate, so membership in H is preserved.  ``mode="random"`` adds
    a bounded random walk; ``mode="adversarial"`` adds triangle waves of full
    amplitude, phase-shifted by a quarter period between the first two
    coordinates so the perturbation winds loops with nonzero signed area.
    """
    if not 0 <= eps2 <= 1:
        raise PathError(f"eps2 must lie in [0, 1], got {eps2}")
    if eps2 == 0:
        return gamma
    rng = np.random.default_rng(seed)
    d = gamma.dim
    if mode == "random":
        n_cells = min(max_cells, max(1, math.ceil(gamma.T / eps2)))
        base = gamma.with_knots(np.linspace(0.0, gamma.T, n_cells + 1))
        budget = np.clip(1.0 - np.abs(base.slopes), 0.0, None) * (1 - 1e-12)
        step_cap = budget * base.durations[:, None]
        z = np.zeros_like(base.values)
        u = rng.random(step_cap.shape)
        for j in range(step_cap.shape[0]):
            lo = np.maximum(-eps2, z[j] - step_cap[j])
            hi = np.minimum(eps2, z[j] + step_cap[j])
            z[j + 1] = lo + u[j] * (hi - lo)
        return PiecewisePath(base.knots, base.values + z)
    if mode == "adversarial":
        slack = 1.0 - float(np.max(np.abs(gamma.slopes)))
        if slack <= 1e-6:
            raise PathError("adversarial perturbation needs a base path with slope < 1")
        b = slack * (1 - 1e-12)
        period = 2.0 * eps2 / b
        n_q = math.ceil(4 * gamma.T / period)
        if n_q > max_cells:
            raise PathError(f"eps2={eps2} needs {n_q} cells > max_cells={max_cells}")
        base = gamma.with_knots(np.arange(1, n_q) * period / 4)
        signs = rng.choice([-1.0, 1.0], size=d)
        t = base.knots
        z = np.zeros((t.size, d))
        z[:, 0] = signs[0] * _triangle(t, period, eps2)
        if d > 1:
            shifted = _triangle(t + period / 4, period, eps2) - eps2 / 2
            z[:, 1] = signs[1] * shifted
        return PiecewisePath(base.knots, base.values + z)
    raise PathError(f"unknown perturbation mode {mode!r}")


def random_h_path(dim: int, T: float, segments: int, rng, max_slope: float = 1.0) -> PiecewisePath:
    """A random element of H with ``segments`` pieces of random length."""
    rng = np.random.default_rng(rng)
    w = rng.random(segments) + 0.2
    durations = T * w / w.sum()
    slopes = rng.uniform(-max_slope, max_slope, size=(segments, dim))
    # push some slopes to the boundary of the unit box
    hit = rng.random((segments, dim)) < 0.25
    slopes[hit] = max_slope * np.sign(slopes[hit])
    path = PiecewisePath.from_slopes(slopes, durations)
    knots = path.knots.copy()
    knots[-1] = T
    return PiecewisePath(knots, path.values)
