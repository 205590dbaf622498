"""Iterated sums, iterated integrals and the signature map of a path.

Three independent routes are provided so they can check each other:

* ``iterated_sum_direct`` enumerates ordered index tuples,
* ``iterated_sum_stream`` updates all levels one sample at a time,
* ``phi_map_exact`` integrates piecewise-linear paths in closed form and
  glues segments with Chen's identity, while ``phi_map_quadrature`` uses
  left-endpoint Riemann sums of the level recursion.

Level k of a stack is stored flat (row-major) with length d**k; the slot of
the latest time is the last tensor factor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .path import PathError, PiecewisePath, SampledSequence, phi_n_from_sequence
from .tensor import LevelTensor, check_size, flat_index, tensor_power


class EnumerationTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class SignatureStack:
    """Levels 0..nu of a signature at time ``t``."""

    dim: int
    levels: tuple[LevelTensor, ...]
    t: float

    def __post_init__(self):
        if not self.levels or self.levels[0].level != 0:
            raise ValueError("a stack needs level 0 first")
        if abs(self.levels[0].data[0] - 1.0) > 0:
            raise ValueError("level 0 of a signature must equal 1")
        for k, lev in enumerate(self.levels):
            if lev.level != k or lev.dim != self.dim:
                raise ValueError(f"level {k} has shape ({lev.dim}, {lev.level})")

    @classmethod
    def from_arrays(cls, dim: int, arrays, t: float) -> "SignatureStack":
        levels = [LevelTensor(dim, 0, np.ones(1))]
        levels += [LevelTensor(dim, k, a) for k, a in enumerate(arrays) if k > 0]
        return cls(dim, tuple(levels), float(t))

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def top(self) -> LevelTensor:
        return self.levels[-1]

    def level(self, k: int) -> LevelTensor:
        return self.levels[k]

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "depth": self.depth,
            "t": self.t,
            "levels": [lev.to_json() for lev in self.levels],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SignatureStack":
        levels = tuple(LevelTensor.from_json(o) for o in obj["levels"])
        return cls(int(obj["dim"]), levels, float(obj["t"]))


@dataclass(frozen=True)
class StackPath:
    """Signature stacks on a time grid: ``levels[k]`` has shape (len(times), d**k)."""

    dim: int
    times: np.ndarray
    levels: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def __len__(self) -> int:
        return self.times.size

    def stack(self, j: int) -> SignatureStack:
        return SignatureStack.from_arrays(self.dim, [lev[j] for lev in self.levels], self.times[j])

    def final(self) -> SignatureStack:
        return self.stack(len(self) - 1)


# --- closed form on piecewise-linear paths -------------------------------------------


def segment_signature(increment: np.ndarray, depth: int) -> list[np.ndarray]:
    """Signature of a straight segment with the given increment: x^{⊗k}/k!."""
    return [tensor_power(increment, k) / math.factorial(k) for k in range(depth + 1)]


def chen(left: list[np.ndarray], right: list[np.ndarray]) -> list[np.ndarray]:
    """Concatenate two truncated signatures: (S*U)^k = sum_j S^j ⊗ U^{k-j}."""
    depth = min(len(left), len(right)) - 1
    out = []
    for k in range(depth + 1):
        acc = np.zeros(left[k].size)
        for j in range(k + 1):
            acc += np.outer(left[j], right[k - j]).reshape(-1)
        out.append(acc)
    return out


def _batch_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise outer product of (G, p) and (G, q) -> (G, p*q)."""
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _segment_powers(increments: np.ndarray, depth: int) -> list[np.ndarray]:
    """E[q][j] = increments[j]^{⊗q} / q! for each segment j."""
    m = increments.shape[0]
    powers = [np.ones((m, 1))]
    for q in range(1, depth + 1):
        powers.append(_batch_outer(powers[-1], increments) / q)
    return powers


def phi_map_exact(path: PiecewisePath, depth: int, allow_large: bool = False) -> StackPath:
    """Signature levels 0..depth of ``path`` at every knot, exact to roundoff."""
    check_size(path.dim, depth, allow_large)
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    G = path.knots.size
    powers = _segment_powers(path.increments, depth)
    levels = [np.ones((G, 1))]
    for k in range(1, depth + 1):
        incr = np.zeros((G - 1, path.dim**k))
        for q in range(1, k + 1):
            incr += _batch_outer(levels[k - q][:-1], powers[q])
        lev = np.zeros((G, path.dim**k))
        np.cumsum(incr, axis=0, out=lev[1:])
        levels.append(lev)
    return StackPath(path.dim, path.knots.copy(), tuple(levels))


def signature_at(path: PiecewisePath, depth: int, t: float | None = None) -> SignatureStack:
    """Exact signature of ``path`` restricted to [0, t]."""
    if t is None or t >= path.T:
        return phi_map_exact(path, depth).final()
    if t <= 0:
        if t < 0:
            raise PathError(f"negative time {t}")
        return SignatureStack.from_arrays(
            path.dim, [np.zeros(path.dim**k) for k in range(depth + 1)], 0.0
        )
    sub = path.restrict(t)
    return phi_map_exact(sub, depth).final()


def phi_map_on_grid(path: PiecewisePath, depth: int, grid) -> StackPath:
    """Exact stacks at arbitrary times in [0, T]."""
    grid = np.asarray(grid, dtype=float)
    fine = path.with_knots(grid)
    sp = phi_map_exact(fine, depth)
    idx = np.clip(np.searchsorted(fine.knots, grid), 0, fine.knots.size - 1)
    # searchsorted may land one past a knot equal up to rounding
    left = np.clip(idx - 1, 0, None)
    use_left = np.abs(fine.knots[left] - grid) < np.abs(fine.knots[idx] - grid)
    idx = np.where(use_left, left, idx)
    return StackPath(path.dim, grid.copy(), tuple(lev[idx] for lev in sp.levels))


def phi_map_quadrature(path: PiecewisePath, depth: int, h: float) -> StackPath:
    """Left-endpoint Riemann sums of Phi^{k+1}(t) = int_0^t Phi^k(u) ⊗ gamma'(u) du.

    The grid is the union of the uniform h-grid with the knots of ``path``,
    so the derivative is constant on every cell.  Global error is O(h).
    """
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    check_size(path.dim, depth)
    n_cells = math.ceil(path.T / h - 1e-9)
    fine = path.with_knots(np.arange(1, n_cells) * h)
    G = fine.knots.size
    dt = fine.durations
    v = fine.slopes
    levels = [np.ones((G, 1))]
    for k in range(1, depth + 1):
        incr = _batch_outer(levels[k - 1][:-1], v) * dt[:, None]
        lev = np.zeros((G, path.dim**k))
        np.cumsum(incr, axis=0, out=lev[1:])
        levels.append(lev)
    return StackPath(path.dim, fine.knots.copy(), tuple(levels))


# --- discrete iterated sums ------------------------------------------------------------


def _interp_weights(t: float, n: int) -> tuple[int, int, float]:
    x = t * n
    lo = int(math.floor(x + 1e-9))
    if abs(x - lo) <= 1e-9:
        return lo, lo, 0.0
    return lo, lo + 1, x - lo


def _direct_unnormalized(samples: np.ndarray, depth: int, m: int) -> list[np.ndarray]:
    d = samples.shape[1]
    out = [np.ones(1)]
    for k in range(1, depth + 1):
        acc = np.zeros(d**k)
        for combo in itertools.combinations(range(m), k):
            term = np.ones(1)
            for idx in combo:
                term = np.outer(term, samples[idx]).reshape(-1)
            acc += term
        out.append(acc)
    return out


def iterated_sum_direct(
    seq: SampledSequence,
    depth: int,
    n: int,
    t: float,
    max_terms: int = 2_000_000,
) -> SignatureStack:
    """n^{-k} sum over 0 <= k_1 < ... < k_k < tn of xi(k_1) ⊗ ... ⊗ xi(k_k), by enumeration.

    Non-integer tn interpolates linearly between the neighbouring integers.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    check_size(seq.dim, depth)
    lo, hi, w = _interp_weights(t, n)
    if hi > len(seq):
        raise PathError(f"need {hi} samples, have {len(seq)}")
    terms = sum(math.comb(hi, k) for k in range(1, depth + 1))
    if terms > max_terms:
        raise EnumerationTooLarge(
            f"enumeration over {terms} index tuples exceeds max_terms={max_terms}"
        )
    low = _direct_unnormalized(seq.samples, depth, lo)
    if w:
        high = _direct_unnormalized(seq.samples, depth, hi)
        low = [(1 - w) * a + w * b for a, b in zip(low, high)]
    arrays = [lev / float(n) ** k for k, lev in enumerate(low)]
    return SignatureStack.from_arrays(seq.dim, arrays, t)


def stream_update(levels: list[np.ndarray], x: np.ndarray) -> None:
    """Append one sample in place: S^k += S^{k-1} ⊗ x for k = top down to 1.

    ``levels[k]`` has shape (..., d**k) and ``x`` shape (..., d); level 0 stays 1.
    """
    for k in range(len(levels) - 1, 0, -1):
        prev = levels[k - 1]
        levels[k] += (prev[..., :, None] * x[..., None, :]).reshape(levels[k].shape)


def stream_prefixes(samples: np.ndarray, depth: int) -> list[np.ndarray]:
    """Unnormalized prefix sums S^k_{<m} for m = 0..M, shape (M+1, d**k)."""
    M, d = samples.shape
    out = [np.ones((M + 1, 1))] + [np.zeros((M + 1, d**k)) for k in range(1, depth + 1)]
    state = [np.ones(1)] + [np.zeros(d**k) for k in range(1, depth + 1)]
    for m in range(M):
        stream_update(state, samples[m])
        for k in range(1, depth + 1):
            out[k][m + 1] = state[k]
    return out


def iterated_sum_stream(seq: SampledSequence, depth: int, n: int, t_grid) -> list[SignatureStack]:
    """Streaming evaluation of the normalized iterated sums at every time in ``t_grid``."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    check_size(seq.dim, depth)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    plan = [_interp_weights(t, n) for t in t_grid]
    M = max((hi for _, hi, _ in plan), default=0)
    if M > len(seq):
        raise PathError(f"need {M} samples, have {len(seq)}")
    pref = stream_prefixes(seq.samples[:M], depth)
    scale = [float(n) ** -k for k in range(depth + 1)]
    out = []
    for t, (lo, hi, w) in zip(t_grid, plan):
        arrays = [scale[k] * ((1 - w) * pref[k][lo] + w * pref[k][hi]) for k in range(depth + 1)]
        arrays[0] = np.ones(1)
        out.append(SignatureStack.from_arrays(seq.dim, arrays, float(t)))
    return out


def signature_of_sequence(seq: SampledSequence, depth: int, n: int, t: float) -> SignatureStack:
    """Phi^{depth}(phi_n)(t): iterated integrals of the interpolated partial-sum path."""
    path = phi_n_from_sequence(seq, n, t)
    return phi_map_exact(path, depth).final()


def coordinate_extract(stack: SignatureStack, indices) -> float:
    indices = tuple(int(i) for i in indices)
    k = len(indices)
    if k > stack.depth:
        raise IndexError(f"level {k} exceeds stack depth {stack.depth}")
    if k == 0:
        return 1.0
    return float(stack.levels[k].data[flat_index(indices, stack.dim)])


# --- sensitivities for the rate solver -----------------------------------------------


def _power_jacobians(v: np.ndarray, depth: int) -> list[np.ndarray]:
    """d(v^{⊗q})/dv as arrays of shape (d, d**q)."""
    d = v.size
    eye = np.eye(d)
    pw = [np.ones(1)]
    jac = [np.zeros((d, 1))]
    for q in range(1, depth + 1):
        j = (jac[-1][:, :, None] * v[None, None, :]).reshape(d, -1)
        j += (pw[-1][None, :, None] * eye[:, None, :]).reshape(d, -1)
        jac.append(j)
        pw.append(np.outer(pw[-1], v).reshape(-1))
    return jac


def top_level_with_jacobian(
    slopes: np.ndarray, dt: float, depth: int, all_times: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Top level of the signature of the path with the given slope profile, and its
    Jacobian with respect to the slopes, by forward sensitivity through Chen's identity.

    Returns ``(value, jac)`` with shapes (d**depth,) and (m*d, d**depth), or with a
    leading time axis of length m (values after each segment) when ``all_times``.
    Parameters are ordered segment-major: index i*d + a is slope i, coordinate a.
    """
    slopes = np.asarray(slopes, dtype=float)
    m, d = slopes.shape
    P = m * d
    S = [np.ones(1)] + [np.zeros(d**k) for k in range(1, depth + 1)]
    J = [np.zeros((P, 1))] + [np.zeros((P, d**k)) for k in range(1, depth + 1)]
    vals, jacs = [], []
    for i in range(m):
        v = slopes[i]
        E = [tensor_power(v, q) * dt**q / math.factorial(q) for q in range(depth + 1)]
        dE = [j * dt**q / math.factorial(q) for q, j in enumerate(_power_jacobians(v, depth))]
        newS, newJ = [S[0]], [J[0]]
        for k in range(1, depth + 1):
            s = np.zeros(d**k)
            jk = np.zeros((P, d**k))
            for q in range(k + 1):
                s += np.outer(S[k - q], E[q]).reshape(-1)
                jk += (J[k - q][:, :, None] * E[q][None, None, :]).reshape(P, -1)
            own = np.zeros((d, d**k))
            for q in range(1, k + 1):
                own += (S[k - q][None, :, None] * dE[q][:, None, :]).reshape(d, -1)
            jk[i * d:(i + 1) * d] += own
            newS.append(s)
            newJ.append(jk)
        S, J = newS, newJ
        if all_times:
            vals.append(S[depth].copy())
            jacs.append(J[depth].copy())
    if all_times:
        return np.array(vals), np.array(jacs)
    return S[depth], J[depth]
