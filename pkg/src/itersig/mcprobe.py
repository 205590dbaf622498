"""Monte Carlo decay slopes of P(S_n(T) in a sup-norm ball around a target).

``estimate_naive`` samples the step law directly; ``estimate_tilted`` samples
exponentially tilted steps whose tilt follows the optimal slope profile of the
rate solver and reweights by the exact likelihood ratio.  Both share one
sampling routine, so a zero tilt reproduces the naive estimate exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .processes import StepLawModel, derive_seed, log_mgf, sample_iid
from .rate import (
    CramerTransform,
    RateProblem,
    RateSolution,
    contraction_rate,
    rate_lower_envelope,
)
from .signature import stream_update
from .tensor import check_size

BALL_TOL = 1e-12
CHUNK = 16384


class UnresolvedEstimate(RuntimeError):
    pass


@dataclass
class LDPEstimate:
    n_list: list[int]
    p_hat: list[float]
    stderr: list[float]
    slopes: list[float | None]
    resolved: list[bool]
    fitted_slope: float | None
    fitted_intercept: float | None
    method: str
    delta: float
    target: list[float]
    level: int
    T: float
    trials: int
    batches: int
    seed: int
    model: dict = field(default_factory=dict)

    @property
    def rel_stderr(self) -> list[float]:
        return [s / p if p > 0 else math.inf for p, s in zip(self.p_hat, self.stderr)]

    @property
    def is_resolved(self) -> bool:
        return self.fitted_slope is not None

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "model": self.model,
            "level": self.level,
            "T": self.T,
            "target": self.target,
            "delta": self.delta,
            "trials": self.trials,
            "batches": self.batches,
            "seed": self.seed,
            "n_list": self.n_list,
            "p_hat": self.p_hat,
            "stderr": self.stderr,
            "slopes": self.slopes,
            "resolved": self.resolved,
            "fitted_slope": self.fitted_slope,
            "fitted_intercept": self.fitted_intercept,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LDPEstimate":
        return cls(**{k: obj[k] for k in (
            "n_list", "p_hat", "stderr", "slopes", "resolved", "fitted_slope", "fitted_intercept",
            "method", "delta", "target", "level", "T", "trials", "batches", "seed", "model",
        )})

    def csv_rows(self) -> list[list]:
        rows = [["n", "p_hat", "stderr", "slope"]]
        for n, p, s, sl in zip(self.n_list, self.p_hat, self.stderr, self.slopes):
            rows.append([n, repr(p), repr(s), "" if sl is None else repr(sl)])
        return rows


def _tilt_schedule(n: int, T: float, tilts: np.ndarray) -> np.ndarray:
    """Per-step tilts, shape (J, M, d): step k lies in segment floor((k+1/2) m / (T n))."""
    J, m, d = tilts.shape
    M = math.ceil(T * n - 1e-9)
    seg = np.minimum(((np.arange(M) + 0.5) * m / (T * n)).astype(int), m - 1)
    return tilts[:, seg, :]


def _run_batch(model, level, n, T, target, deltas, per_step, log_norm, tilted, trials, seed):
    """Sum of weighted hit indicators for each radius over ``trials`` paths."""
    d = model.dim
    M = per_step.shape[1]
    full = int(math.floor(T * n + 1e-9))
    w_last = T * n - full if M > full else 0.0
    rng = np.random.default_rng(seed)
    J = per_step.shape[0]
    totals = np.zeros(len(deltas))
    done = 0
    while done < trials:
        b = min(CHUNK, trials - done)
        levels = [np.ones((b, 1))] + [np.zeros((b, d**k)) for k in range(1, level + 1)]
        comp = rng.integers(0, J, size=b) if J > 1 else np.zeros(b, dtype=int)
        loglr = np.zeros((J, b))
        before_last = None
        for k in range(M):
            lam = per_step[comp, k, :] if tilted else None
            x = sample_iid(model, (b,), rng, lam=lam)
            if tilted:
                loglr += per_step[:, k, :] @ x.T - log_norm[:, k][:, None]
            if k == M - 1 and w_last:
                before_last = levels[level].copy()
            stream_update(levels, x)
        top = levels[level]
        if before_last is not None:
            top = (1 - w_last) * before_last + w_last * top
        top = top / float(n) ** level
        dist = np.max(np.abs(top - target[None, :]), axis=1)
        if tilted:
            weight = np.exp(-(logsumexp(loglr, axis=0) - math.log(J)))
        else:
            weight = np.ones(b)
        for i, dl in enumerate(deltas):
            hits = dist <= dl + BALL_TOL
            totals[i] += float(np.sum(weight[hits]))
        done += b
    return totals


def _estimate(model, level, T, y, deltas, n_list, trials, seed, batches, tilts, method, threads):
    if not model.is_iid:
        raise ValueError(f"the probe samples i.i.d. laws only, got {model.kind!r}")
    check_size(model.dim, level)
    if batches < 8:
        raise ValueError("at least 8 independent batches are required for standard errors")
    y = np.asarray(y, dtype=float).reshape(model.dim**level)
    deltas = [float(x) for x in deltas]
    if any(not dl > 0 for dl in deltas):
        raise ValueError("delta must be positive")
    tilted = tilts is not None
    if tilted:
        tilts = np.asarray(tilts, dtype=float)
        if tilts.ndim == 2:
            tilts = tilts[None]
    per_batch = [trials // batches + (1 if i < trials % batches else 0) for i in range(batches)]
    results = {dl: ([], [], []) for dl in deltas}
    for ni, n in enumerate(n_list):
        if tilted:
            per_step = _tilt_schedule(n, T, tilts)
            log_norm = log_mgf(model, per_step)
        else:
            M = math.ceil(T * n - 1e-9)
            per_step = np.zeros((1, M, model.dim))
            log_norm = np.zeros((1, M))
        jobs = [
            (model, level, n, T, y, deltas, per_step, log_norm, tilted, per_batch[b], derive_seed(seed, n, b))
            for b in range(batches)
        ]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                sums = list(pool.map(lambda a: _run_batch(*a), jobs))
        else:
            sums = [_run_batch(*a) for a in jobs]
        sums = np.array(sums)  # (batches, n_deltas)
        means = sums / np.array(per_batch)[:, None]
        for i, dl in enumerate(deltas):
            p = float(np.sum(sums[:, i]) / trials)
            se = float(np.std(means[:, i], ddof=1) / math.sqrt(batches))
            ok = p > 0 and se / p < 0.5
            results[dl][0].append(p)
            results[dl][1].append(se)
            results[dl][2].append(ok)
    out = []
    for dl in deltas:
        p_hat, stderr, resolved = results[dl]
        slopes = [(-math.log(p) / n if ok else None) for p, n, ok in zip(p_hat, n_list, resolved)]
        fs, fi = _fit_slope(n_list, p_hat, stderr, resolved)
        out.append(
            LDPEstimate(
                n_list=list(n_list), p_hat=p_hat, stderr=stderr, slopes=slopes, resolved=resolved,
                fitted_slope=fs, fitted_intercept=fi, method=method, delta=dl, target=y.tolist(),
                level=level, T=T, trials=trials, batches=batches, seed=seed, model=model.to_json(),
            )
        )
    return out


def _fit_slope(n_list, p_hat, stderr, resolved):
    """Weighted least squares of -log p_n on n with free intercept."""
    pts = [(n, -math.log(p), s / p) for n, p, s, ok in zip(n_list, p_hat, stderr, resolved) if ok]
    if not pts:
        return None, None
    if len(pts) == 1:
        n, lp, _ = pts[0]
        return lp / n, 0.0
    n = np.array([q[0] for q in pts], dtype=float)
    lp = np.array([q[1] for q in pts])
    w = 1.0 / np.maximum(np.array([q[2] for q in pts]), 1e-12)
    slope, intercept = np.polyfit(n, lp, 1, w=w)
    return float(slope), float(intercept)


def estimate_naive(model: StepLawModel, level: int, T: float, y, delta, n_list, trials: int,
                   seed: int, batches: int = 32, threads: int = 1):
    """Plain Monte Carlo.  ``delta`` may be a list: all radii share the same samples."""
    deltas = delta if np.ndim(delta) else [delta]
    est = _estimate(model, level, T, y, deltas, n_list, trials, seed, batches, None, "naive", threads)
    return est if np.ndim(delta) else est[0]


def tilts_from_solution(model: StepLawModel, solution: RateSolution) -> np.ndarray:
    """Tilt parameters (J, m, d) solving grad Lambda(lam) = optimal slope, one row per optimum."""
    ct = CramerTransform(model)
    profiles = [solution.profile] + list(solution.alternates)
    return np.array([ct.tilt(p) for p in profiles])


def estimate_tilted(model: StepLawModel, level: int, T: float, y, delta, n_list, trials: int,
                    seed: int, solution: RateSolution | None = None, tilts=None,
                    batches: int = 32, threads: int = 1, grid: int = 16):
    """Importance sampling with block-constant exponential tilts.

    When the solver reports several optimal profiles (e.g. mirror images), the
    proposal is their equal-weight mixture and the weight is the exact mixture
    likelihood ratio.
    """
    if tilts is None:
        if solution is None:
            prob = RateProblem(model, level, T, np.asarray(y, dtype=float), grid=grid, seed=seed)
            solution = contraction_rate(prob)
        if not solution.converged:
            raise ValueError(f"tilted probe needs a converged rate solution: {solution.message}")
        tilts = tilts_from_solution(model, solution)
    deltas = delta if np.ndim(delta) else [delta]
    est = _estimate(model, level, T, y, deltas, n_list, trials, seed, batches, tilts, "tilted", threads)
    return est if np.ndim(delta) else est[0]


@dataclass
class Comparison:
    fitted_slope: float | None
    lower_envelope: float
    upper_envelope: float
    contraction_value: float | None
    verdict: str
    rel_tol: float
    abs_tol: float

    def to_json(self) -> dict:
        return {
            "fitted_slope": self.fitted_slope,
            "rate_lower_envelope": self.lower_envelope,
            "contraction_band": [self.lower_envelope, self.upper_envelope],
            "contraction_value": self.contraction_value,
            "verdict": self.verdict,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
        }


def slope_vs_rate_report(est: LDPEstimate, rp: RateProblem | None = None, *, lower: float | None = None,
                         upper: float | None = None, contraction_value: float | None = None,
                         rel_tol: float = 0.2, abs_tol: float = 5e-3,
                         interior: float = 0.99) -> Comparison:
    """Compare a fitted decay slope with the band [closed-ball inf, open-ball inf].

    The open-ball infimum is approximated by the closed ball of radius
    ``interior * delta``.  Envelope values may be supplied directly.
    """
    if lower is None or upper is None:
        if rp is None:
            raise ValueError("need a rate problem or explicit envelope values")
        lo_sol = rate_lower_envelope(rp, est.delta)
        hi_sol = rate_lower_envelope(rp, interior * est.delta)
        if not (lo_sol.converged and hi_sol.converged):
            raise UnresolvedEstimate("rate envelopes did not converge")
        lower = lo_sol.value if lower is None else lower
        upper = hi_sol.value if upper is None else upper
    if not est.is_resolved:
        verdict = "unresolved"
    else:
        s = est.fitted_slope
        ok = lower * (1 - rel_tol) - abs_tol <= s <= upper * (1 + rel_tol) + abs_tol
        verdict = "consistent" if ok else "inconsistent"
    return Comparison(est.fitted_slope, float(lower), float(upper), contraction_value, verdict, rel_tol, abs_tol)
