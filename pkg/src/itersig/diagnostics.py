"""Numerical property suites for the signature map.

* ``holder_suite``: signature distance against path distance for close pairs in H.
* ``regularity_suite``: the level bound t^k/k! and the time-Lipschitz bound.
* ``lln_suite``: convergence of the normalized iterated integrals to Q^{⊗nu} t^nu/nu!.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .path import PiecewisePath, perturb_in_H, phi_n_from_sequence, random_h_path, sup_distance
from .processes import StepLawModel, derive_seed, mean_vector, sample_sequence
from .rate import zero_cost_image
from .signature import iterated_sum_stream, phi_map_exact, phi_map_on_grid

SLACK_TOL = 1e-9


def _fit_loglog(x, y):
    """Least-squares slope of log y on log x with a 95% normal band."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if lx.size < 2 or np.ptp(lx) == 0:
        return math.nan, (math.nan, math.nan)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    if lx.size > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (lx.size - 2)
        se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    else:
        se = 0.0
    return float(coef[0]), (float(coef[0] - 1.96 * se), float(coef[0] + 1.96 * se))


def signature_distance(a: PiecewisePath, b: PiecewisePath, level: int, refine: int = 4) -> float:
    """sup_t |Phi^level(a)(t) - Phi^level(b)(t)|_inf on the refined union of knots."""
    grid = np.union1d(a.knots, b.knots)
    frac = np.arange(refine) / refine
    grid = np.append((grid[:-1, None] + np.diff(grid)[:, None] * frac[None, :]).reshape(-1), grid[-1])
    sa = phi_map_on_grid(a, level, grid).levels[level]
    sb = phi_map_on_grid(b, level, grid).levels[level]
    return float(np.max(np.abs(sa - sb)))


@dataclass
class HolderReport:
    level: int
    dim: int
    mode: str
    rows: list[tuple[float, float, float, float]]  # (eps2, s, D, D/sqrt(s))
    exponent: float
    exponent_band: tuple[float, float]
    max_ratio: float
    median_ratio: dict[float, float]

    @property
    def trials(self) -> int:
        return len(self.rows)

    def medians_non_increasing(self) -> bool:
        eps = sorted(self.median_ratio, reverse=True)
        vals = [self.median_ratio[e] for e in eps]
        return all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def to_json(self) -> dict:
        return {
            "suite": "holder",
            "level": self.level,
            "dim": self.dim,
            "mode": self.mode,
            "trials": self.trials,
            "exponent": self.exponent,
            "exponent_band": list(self.exponent_band),
            "max_ratio": self.max_ratio,
            "median_ratio": {repr(k): v for k, v in self.median_ratio.items()},
        }

    def csv_rows(self):
        return [["eps2", "path_distance", "signature_distance", "ratio"]] + [
            [repr(v) for v in r] for r in self.rows
        ]


def holder_pair(level: int, dim: int, T: float, eps2: float, mode: str, rng) -> tuple[PiecewisePath, PiecewisePath]:
    rng = np.random.default_rng(rng)
    if mode == "adversarial":
        # base slope scaled by 1/2 leaves half of the Lipschitz budget to the perturbation
        slope = 0.5 * rng.choice([-1.0, 1.0], size=dim)
        base = PiecewisePath.line(slope, T)
    else:
        base = random_h_path(dim, T, 8, rng, max_slope=float(rng.uniform(0.3, 1.0)))
    return base, perturb_in_H(base, eps2, rng, mode=mode)


def holder_suite(level: int, dim: int, T: float, eps2_list, trials: int, mode: str = "adversarial",
                 seed: int = 0) -> HolderReport:
    rows = []
    for ei, eps2 in enumerate(eps2_list):
        if not 0 < eps2 <= 1:
            raise ValueError(f"eps2 must lie in (0, 1], got {eps2}")
        for j in range(trials):
            a, b = holder_pair(level, dim, T, eps2, mode, derive_seed(seed, ei, j))
            s = sup_distance(a, b)
            if s > eps2 * (1 + 1e-9):
                raise AssertionError(f"pair at distance {s} > eps2 = {eps2}")
            if s == 0:
                continue
            D = signature_distance(a, b, level)
            rows.append((float(eps2), s, D, D / math.sqrt(s)))
    pos = [(s, D) for _, s, D, _ in rows if D > 0]
    exponent, band = _fit_loglog([p[0] for p in pos], [p[1] for p in pos])
    med = {}
    for eps2 in eps2_list:
        r = [row[3] for row in rows if row[0] == eps2]
        if r:
            med[float(eps2)] = float(np.median(r))
    return HolderReport(
        level=level, dim=dim, mode=mode, rows=rows, exponent=exponent, exponent_band=band,
        max_ratio=max((r[3] for r in rows), default=0.0), median_ratio=med,
    )


@dataclass
class RegularityReport:
    level: int
    dim: int
    trials: int
    worst_level_slack: float
    worst_lipschitz_slack: float
    violations: int
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # (trial, level slack, lip slack)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_json(self) -> dict:
        return {
            "suite": "regularity",
            "level": self.level,
            "dim": self.dim,
            "trials": self.trials,
            "worst_level_slack": self.worst_level_slack,
            "worst_lipschitz_slack": self.worst_lipschitz_slack,
            "violations": self.violations,
        }

    def csv_rows(self):
        return [["trial", "level_slack", "lipschitz_slack"]] + [
            [str(i), repr(a), repr(b)] for i, a, b in self.rows
        ]


def regularity_slacks(path: PiecewisePath, level: int) -> tuple[float, float]:
    """Smallest slack of the level bound and of the time-Lipschitz bound over all
    knots (and knot pairs) of a 4x refinement, for every level 1..level."""
    fine = path.refine(4)
    sp = phi_map_exact(fine, level)
    t = sp.times
    dt = np.abs(t[:, None] - t[None, :])
    level_slack = math.inf
    lip_slack = math.inf
    for k in range(1, level + 1):
        lev = sp.levels[k]
        norms = np.max(np.abs(lev), axis=1)
        level_slack = min(level_slack, float(np.min(t**k / math.factorial(k) - norms)))
        L = path.T ** (k - 1) / math.factorial(k - 1)
        diff = np.max(np.abs(lev[:, None, :] - lev[None, :, :]), axis=2)
        lip_slack = min(lip_slack, float(np.min(L * dt - diff)))
    return level_slack, lip_slack


def regularity_suite(level: int, dim: int, T: float, trials: int, seed: int = 0,
                     segments: int = 10) -> RegularityReport:
    rows = []
    for j in range(trials):
        rng = np.random.default_rng(derive_seed(seed, j))
        path = random_h_path(dim, T, segments, rng, max_slope=float(rng.choice([1.0, rng.uniform(0.1, 1.0)])))
        a, b = regularity_slacks(path, level)
        rows.append((j, a, b))
    worst_a = min((r[1] for r in rows), default=math.inf)
    worst_b = min((r[2] for r in rows), default=math.inf)
    bad = sum(1 for _, a, b in rows if a < -SLACK_TOL or b < -SLACK_TOL)
    return RegularityReport(level, dim, trials, worst_a, worst_b, bad, rows)


@dataclass
class LLNReport:
    level: int
    n_list: list[int]
    errors: list[list[float]]
    medians: list[float]
    exponent: float
    Q: list[float]
    provenance: str
    quantity: str

    def medians_non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.medians, self.medians[1:]))

    def to_json(self) -> dict:
        return {
            "suite": "lln",
            "level": self.level,
            "quantity": self.quantity,
            "Q": self.Q,
            "mean_provenance": self.provenance,
            "n_list": self.n_list,
            "median_error": self.medians,
            "max_error": [max(e) for e in self.errors],
            "exponent": self.exponent,
        }

    def csv_rows(self):
        out = [["n", "rep", "sup_error"]]
        for n, errs in zip(self.n_list, self.errors):
            out += [[str(n), str(r), repr(e)] for r, e in enumerate(errs)]
        return out


def lln_suite(model: StepLawModel, level: int, T: float, n_list, reps: int, seed: int = 0,
              t_points: int = 101, quantity: str = "integral") -> LLNReport:
    """Sup over a t-grid of |S_n(t) - Q^{⊗nu} t^nu / nu!|_inf, per n and replicate.

    ``quantity="integral"`` measures Phi^nu(phi_n) (iterated integrals of the
    interpolated path); ``"sum"`` measures the discrete iterated sums.
    """
    mv = mean_vector(model)
    grid = np.linspace(0.0, T, t_points)
    limit = zero_cost_image(mv.Q, level, grid)
    errors = []
    for n in n_list:
        errs = []
        for rep in range(reps):
            seq = sample_sequence(model, math.ceil(T * n - 1e-9), derive_seed(seed, n, rep))
            if quantity == "integral":
                top = phi_map_on_grid(phi_n_from_sequence(seq, n, T), level, grid).levels[level]
            elif quantity == "sum":
                top = np.array([s.top.data for s in iterated_sum_stream(seq, level, n, grid)])
            else:
                raise ValueError(f"unknown quantity {quantity!r}")
            errs.append(float(np.max(np.abs(top - limit))))
        errors.append(errs)
    medians = [float(np.median(e)) for e in errors]
    if all(m > 0 for m in medians) and len(n_list) > 1:
        slope, _ = _fit_loglog(n_list, medians)
        exponent = -slope
    else:
        exponent = math.nan
    return LLNReport(level, list(n_list), errors, medians, exponent, mv.Q.tolist(), mv.provenance, quantity)
