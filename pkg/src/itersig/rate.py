"""Cramér transforms, path rates and the contraction rate of the signature map.

For i.i.d. bounded steps the path rate is I(gamma) = int_0^T Lambda*(gamma'(u)) du.
The rate of the level-nu iterated integral at time T is the infimum of I over
paths whose signature hits the target; it is computed over piecewise-linear
paths with m equal segments by an augmented-Lagrangian method whose bound-
constrained subproblems are solved with L-BFGS-B.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from .path import PiecewisePath
from .processes import (
    ModelError,
    StepLawModel,
    grad_log_mgf,
    is_product_law,
    log_mgf,
    marginal,
    mean_vector,
    support_box,
)
from .signature import top_level_with_jacobian
from .tensor import check_size, tensor_power

LAMBDA_CAP = 40.0
UNIFORM_LAMBDA_BOUND = 1e16
INF = math.inf


class InfeasibleTarget(ValueError):
    pass


# --- one-dimensional transforms ---------------------------------------------------------


def _second_derivative_1d(model: StepLawModel, lam: np.ndarray) -> np.ndarray:
    r = model._r
    if model.kind == "iid_uniform":
        w = float((r["high"][0] - r["low"][0]) / 2)
        z = lam * w
        small = np.abs(z) < 1e-3
        zs = np.where(small, 1.0, z)
        e = np.exp(-2 * np.abs(zs))
        # 1/sinh^2 z = 4 e^{-2|z|} / (1 - e^{-2|z|})^2, no overflow
        big = 1.0 / zs**2 - 4 * e / (1 - e) ** 2
        return w**2 * np.where(small, 1 / 3 - z**2 / 15, big)
    pts = r["points"][:, 0]
    mean = grad_log_mgf(model, lam[:, None])[:, 0]
    logw = np.log(np.where(r["probs"] > 0, r["probs"], 1e-300))[None, :] + lam[:, None] * pts[None, :]
    logw = np.where(r["probs"][None, :] > 0, logw, -np.inf)
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return np.clip(w @ pts**2 - mean**2, 0, None)


def _tilt_1d(model: StepLawModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve Lambda'(lam) = x for interior x by safeguarded Newton; capped at +-LAMBDA_CAP.

    Returns (lam, capped) where ``capped`` flags roots beyond the cap.
    """
    # the uniform root is finite for every interior x, so only discrete laws are capped
    cap = UNIFORM_LAMBDA_BOUND if model.kind == "iid_uniform" else LAMBDA_CAP
    lo = np.full(x.shape, -cap)
    hi = np.full(x.shape, cap)
    f_lo = grad_log_mgf(model, lo[:, None])[:, 0] - x
    f_hi = grad_log_mgf(model, hi[:, None])[:, 0] - x
    capped = (f_lo > 0) | (f_hi < 0)
    lam = np.zeros_like(x)
    if model.kind == "iid_uniform":
        # inverse Langevin approximation as a starting point
        r = model._r
        c, w = float((r["low"][0] + r["high"][0]) / 2), float((r["high"][0] - r["low"][0]) / 2)
        u = np.clip((x - c) / w, -1 + 1e-16, 1 - 1e-16)
        lam = np.clip(u * (3 - u * u) / (1 - u * u) / w, lo, hi)
    prev = np.full(x.shape, np.inf)
    for _ in range(200):
        f = grad_log_mgf(model, lam[:, None])[:, 0] - x
        done = np.abs(f) <= 1e-15 * np.maximum(1.0, np.abs(x))
        stalled = np.abs(lam - prev) <= 4e-16 * np.maximum(1.0, np.abs(lam))
        if np.all(done | capped | stalled):
            break
        prev = lam
        hi = np.where(f > 0, lam, hi)
        lo = np.where(f <= 0, lam, lo)
        fp = _second_derivative_1d(model, lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = lam - f / fp
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        # converged points stay put; an exact root would otherwise look out of bracket
        lam = np.where(done | capped, lam, np.where(bad, (lo + hi) / 2, step))
        if np.all(hi - lo < 1e-15):
            break
    lam = np.where(capped & (f_hi < 0), cap, lam)
    lam = np.where(capped & (f_lo > 0), -cap, lam)
    return lam, capped


def _legendre_1d(model: StepLawModel, x: np.ndarray):
    """Lambda* of a one-dimensional i.i.d. law, vectorized.

    Returns (value, lam, flag); flag marks boundary points handled by the cap.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = (float(a[0]) for a in support_box(model))
    value = np.full(x.shape, INF)
    lam = np.zeros(x.shape)
    flag = np.zeros(x.shape, dtype=bool)
    eps = 1e-14
    inside = (x >= lo - eps) & (x <= hi + eps) & (np.abs(x) <= 1 + eps)
    if model.kind == "iid_rademacher":
        xc = np.clip(x, -1.0, 1.0)
        value = np.where(inside, (xlogy(1 + xc, 1 + xc) + xlogy(1 - xc, 1 - xc)) / 2, INF)
        with np.errstate(divide="ignore"):
            lam = np.clip(np.arctanh(xc), -LAMBDA_CAP, LAMBDA_CAP)
        flag = inside & (np.abs(xc) >= 1.0)
        return value, np.where(inside, lam, np.sign(x) * LAMBDA_CAP), flag
    if hi - lo < 1e-15:
        ok = np.abs(x - lo) <= eps
        return np.where(ok, 0.0, INF), lam, flag
    r = model._r
    at_lo = inside & (x <= lo + eps)
    at_hi = inside & (x >= hi - eps)
    interior = inside & ~at_lo & ~at_hi
    if np.any(interior):
        xi = x[interior]
        li, capped = _tilt_1d(model, xi)
        vi = li * xi - log_mgf(model, li[:, None])
        value[interior] = np.maximum(vi, 0.0)
        lam[interior] = li
        flag[interior] = capped
    for mask, edge, sign in ((at_lo, lo, -1.0), (at_hi, hi, 1.0)):
        if not np.any(mask):
            continue
        lam[mask] = sign * LAMBDA_CAP
        flag[mask] = True
        if model.kind == "iid_discrete":
            pts = r["points"][:, 0]
            mass = r["probs"][np.abs(pts - edge) <= eps].sum()
            value[mask] = -math.log(mass)
        else:
            value[mask] = INF
    lam[~inside] = np.sign(x[~inside] - (lo + hi) / 2) * LAMBDA_CAP
    return value, lam, flag


@dataclass
class CramerTransform:
    """Lambda and its convex conjugate Lambda* for an i.i.d. step law."""

    model: StepLawModel
    _marginals: list = field(init=False, repr=False)

    def __post_init__(self):
        if not self.model.is_iid:
            raise ModelError(f"Cramér transform needs an i.i.d. model, got {self.model.kind!r}")
        self._marginals = (
            [marginal(self.model, i) for i in range(self.model.dim)]
            if is_product_law(self.model)
            else []
        )

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def mean(self) -> np.ndarray:
        return mean_vector(self.model).Q

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return support_box(self.model)

    def log_mgf(self, lam) -> float:
        return log_mgf(self.model, lam)

    def evaluate(self, x):
        """(value, lam, flag) for points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        xf = x.reshape(-1, self.dim)
        if self._marginals:
            vals = np.zeros(xf.shape[0])
            lam = np.zeros_like(xf)
            flag = np.zeros(xf.shape[0], dtype=bool)
            for i, m in enumerate(self._marginals):
                v, l, f = _legendre_1d(m, xf[:, i])
                vals = vals + v
                lam[:, i] = l
                flag |= f
        else:
            vals, lam, flag = self._evaluate_general(xf)
        return vals.reshape(shape), lam.reshape(x.shape), flag.reshape(shape)

    def _evaluate_general(self, xf):
        vals = np.empty(xf.shape[0])
        lam = np.zeros_like(xf)
        flag = np.zeros(xf.shape[0], dtype=bool)
        lo, hi = self.box()
        for j, x in enumerate(xf):
            if np.any(x < lo - 1e-14) or np.any(x > hi + 1e-14) or np.max(np.abs(x)) > 1 + 1e-14:
                vals[j], lam[j] = INF, np.sign(x - (lo + hi) / 2) * LAMBDA_CAP
                flag[j] = True
                continue
            res = minimize(
                lambda l: (log_mgf(self.model, l) - l @ x, grad_log_mgf(self.model, l) - x),
                np.zeros(self.dim),
                jac=True,
                method="L-BFGS-B",
                bounds=[(-LAMBDA_CAP, LAMBDA_CAP)] * self.dim,
                options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000},
            )
            vals[j] = max(-res.fun, 0.0)
            lam[j] = res.x
            flag[j] = bool(np.any(np.abs(res.x) >= LAMBDA_CAP * (1 - 1e-9)))
        return vals, lam, flag

    def __call__(self, x) -> float | np.ndarray:
        v = self.evaluate(x)[0]
        return float(v) if np.ndim(v) == 0 else v

    def tilt(self, x) -> np.ndarray:
        """The lam with grad Lambda(lam) = x (capped at the domain boundary)."""
        return self.evaluate(x)[1]


def legendre(ct: CramerTransform, x) -> float:
    """Lambda*(x) = sup_lam <lam, x> - Lambda(lam); ``math.inf`` outside the domain."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("legendre needs a finite point")
    return float(ct.evaluate(x.reshape(ct.dim))[0])


def path_rate(gamma: PiecewisePath, ct: CramerTransform) -> float:
    """sum over segments of Lambda*(slope) * duration."""
    if gamma.dim != ct.dim:
        raise ValueError(f"path dim {gamma.dim} != model dim {ct.dim}")
    vals = ct.evaluate(gamma.slopes)[0]
    if np.any(~np.isfinite(vals)):
        return INF
    return float(np.sum(vals * gamma.durations))


# --- contraction rate ------------------------------------------------------------------


def zero_cost_image(Q: np.ndarray, level: int, t) -> np.ndarray:
    """Q^{⊗level} t^level / level!, the image of the mean path."""
    t = np.asarray(t, dtype=float)
    return np.multiply.outer(t**level, tensor_power(np.asarray(Q, dtype=float), level)) / math.factorial(level)


@dataclass
class RateProblem:
    """Minimize I(gamma) subject to the level-``level`` signature of gamma hitting ``target``.

    ``mode="endpoint"``: ``target`` has length d**level and is matched at time T.
    ``mode="path"``: ``target`` has shape (grid, d**level) and is matched at the
    grid times jT/grid, j = 1..grid.
    """

    model: StepLawModel
    level: int
    T: float
    target: np.ndarray
    mode: str = "endpoint"
    grid: int = 16
    multistart: int = 16
    tol_constraint: float = 1e-6
    tol_stationarity: float = 1e-8
    max_outer: int = 50
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        check_size(self.model.dim, self.level)
        self.target = np.asarray(self.target, dtype=float)
        width = self.model.dim**self.level
        if self.mode == "endpoint":
            self.target = self.target.reshape(width)
        elif self.mode == "path":
            self.target = self.target.reshape(self.grid, width)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.T <= 0 or self.level < 1 or self.grid < 1:
            raise ValueError("need T > 0, level >= 1 and grid >= 1")

    @property
    def times(self) -> np.ndarray:
        return self.T * np.arange(1, self.grid + 1) / self.grid

    def check_feasible(self) -> None:
        """Necessary condition |y| <= t^nu / nu! from the level bound."""
        k = self.level
        if self.mode == "endpoint":
            bound = self.T**k / math.factorial(k)
            worst = float(np.max(np.abs(self.target)))
            if worst > bound * (1 + 1e-12):
                raise InfeasibleTarget(
                    f"infeasible target: |y|_inf = {worst:.6g} exceeds T^nu/nu! = {bound:.6g}"
                )
        else:
            bound = self.times**k / math.factorial(k)
            worst = np.max(np.abs(self.target), axis=1)
            if np.any(worst > bound * (1 + 1e-12)):
                j = int(np.argmax(worst - bound))
                raise InfeasibleTarget(
                    f"infeasible target at t={self.times[j]:.6g}: |psi|_inf = {worst[j]:.6g} "
                    f"exceeds t^nu/nu! = {bound[j]:.6g}"
                )

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "level": self.level,
            "T": self.T,
            "target": self.target.tolist(),
            "mode": self.mode,
            "grid": self.grid,
            "multistart": self.multistart,
            "tol_constraint": self.tol_constraint,
            "tol_stationarity": self.tol_stationarity,
            "max_outer": self.max_outer,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RateProblem":
        keys = ("mode", "grid", "multistart", "tol_constraint", "tol_stationarity", "max_outer", "seed", "threads")
        return cls(
            model=StepLawModel.from_json(obj["model"]),
            level=int(obj["level"]),
            T=float(obj["T"]),
            target=np.asarray(obj["target"], dtype=float),
            **{k: obj[k] for k in keys if k in obj},
        )


@dataclass
class RateSolution:
    value: float
    profile: np.ndarray
    residual: float
    converged: bool
    outer_iterations: int
    start_values: list[float]
    alternates: list[np.ndarray]
    message: str = ""
    delta: float | None = None

    @property
    def dispersion(self) -> float:
        finite = [v for v in self.start_values if math.isfinite(v)]
        return float(max(finite) - min(finite)) if finite else INF

    def path(self, T: float) -> PiecewisePath:
        return PiecewisePath.from_slopes(self.profile, T / self.profile.shape[0])

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "profile": self.profile.tolist(),
            "residual": self.residual,
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "start_values": self.start_values,
            "dispersion": self.dispersion,
            "alternates": [a.tolist() for a in self.alternates],
            "message": self.message,
            "delta": self.delta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RateSolution":
        return cls(
            value=float(obj["value"]),
            profile=np.asarray(obj["profile"], dtype=float),
            residual=float(obj["residual"]),
            converged=bool(obj["converged"]),
            outer_iterations=int(obj["outer_iterations"]),
            start_values=[float(v) for v in obj["start_values"]],
            alternates=[np.asarray(a, dtype=float) for a in obj.get("alternates", [])],
            message=obj.get("message", ""),
            delta=obj.get("delta"),
        )


class _Objective:
    """Cost and constraint maps of a discretized rate problem in flat slope variables."""

    def __init__(self, prob: RateProblem, ct: CramerTransform):
        self.prob = prob
        self.ct = ct
        self.m = prob.grid
        self.d = prob.model.dim
        self.dt = prob.T / prob.grid
        lo, hi = ct.box()
        lo = np.maximum(lo, -1.0)
        hi = np.minimum(hi, 1.0)
        # continuous laws have infinite cost on the support boundary
        shrink = 0.0 if prob.model.kind in ("iid_rademacher", "iid_discrete") else 1e-9 * (hi - lo)
        self.lo = np.tile(lo + shrink, self.m)
        self.hi = np.tile(hi - shrink, self.m)

    def cost(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        v = x.reshape(self.m, self.d)
        vals, lam, _ = self.ct.evaluate(v)
        return float(np.sum(vals) * self.dt), lam.reshape(-1) * self.dt

    def constraint(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Residual c(x) and its Jacobian, shape (n_c,) and (n_c, n_x)."""
        v = x.reshape(self.m, self.d)
        if self.prob.mode == "endpoint":
            val, jac = top_level_with_jacobian(v, self.dt, self.prob.level)
            return val - self.prob.target, jac.T
        vals, jacs = top_level_with_jacobian(v, self.dt, self.prob.level, all_times=True)
        c = (vals - self.prob.target).reshape(-1)
        J = np.transpose(jacs, (0, 2, 1)).reshape(c.size, x.size)
        return c, J


def _restore_feasibility(obj: _Objective, x: np.ndarray, bounds, delta: float | None) -> np.ndarray:
    """Minimize the squared constraint excess from x inside the box.

    Constraints like x^3 have vanishing gradient at the mean path, where a weak
    penalty would otherwise park every start.
    """
    slack = 0.0 if delta is None else delta

    def excess(z):
        c, J = obj.constraint(z)
        e = np.sign(c) * np.maximum(np.abs(c) - slack, 0.0)
        return 0.5 * float(e @ e), J.T @ e

    res = minimize(excess, x, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-20, "gtol": 1e-14, "maxiter": 500})
    return np.clip(res.x, obj.lo, obj.hi)


def _auglag(obj: _Objective, x0: np.ndarray, delta: float | None, prob: RateProblem):
    """PHR augmented Lagrangian.

    delta is None: equality c(x) = 0.  Otherwise |c_i(x)| <= delta as the pair of
    inequalities c - delta <= 0, -c - delta <= 0.
    Returns (x, violation, outer_iterations, inner_ok).
    """
    bounds = list(zip(obj.lo, obj.hi))
    x = _restore_feasibility(obj, np.clip(x0, obj.lo, obj.hi), bounds, delta)
    c0, J0 = obj.constraint(x)
    n_c = c0.size
    mu = np.zeros(n_c if delta is None else 2 * n_c)
    if delta is None:
        # least-squares multiplier estimate at the restored point
        mu = -np.linalg.lstsq(J0.T, obj.cost(x)[1], rcond=None)[0]
    rho = 10.0
    prev_viol = INF
    inner_ok = False
    viol = INF
    it = 0

    def lagrangian(z):
        f, gf = obj.cost(z)
        c, J = obj.constraint(z)
        if delta is None:
            val = f + mu @ c + 0.5 * rho * c @ c
            grad = gf + J.T @ (mu + rho * c)
        else:
            g = np.concatenate([c - delta, -c - delta])
            Jg = np.vstack([J, -J])
            s = np.maximum(0.0, mu + rho * g)
            val = f + (s @ s - mu @ mu) / (2 * rho)
            grad = gf + Jg.T @ s
        return val, grad

    for it in range(1, prob.max_outer + 1):
        res = minimize(
            lagrangian,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"ftol": 1e-16, "gtol": prob.tol_stationarity, "maxiter": 2000, "maxcor": 20},
        )
        x = np.clip(res.x, obj.lo, obj.hi)
        c = obj.constraint(x)[0]
        if delta is None:
            viol = float(np.max(np.abs(c)))
            mu = mu + rho * c
        else:
            g = np.concatenate([c - delta, -c - delta])
            viol = float(max(0.0, np.max(g)))
            comp = float(np.max(np.abs(np.minimum(-g, mu / rho))))
            mu = np.maximum(0.0, mu + rho * g)
        _, gl = lagrangian(x)
        # projected gradient of the Lagrangian at the updated multipliers
        pg = np.where(
            (x <= obj.lo) & (gl > 0) | (x >= obj.hi) & (gl < 0), 0.0, gl
        )
        # Lambda* is steep near the support boundary; accept L-BFGS-B's own verdict there
        inner_ok = bool(res.success) or float(np.max(np.abs(pg))) <= max(1e-6, 100 * prob.tol_stationarity)
        done = viol <= prob.tol_constraint * 1e-2 if delta is None else viol <= prob.tol_constraint and comp <= 1e-8
        if done and inner_ok:
            break
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, 1e10)
        prev_viol = viol
    return x, viol, it, inner_ok


def _start_points(obj: _Objective, prob: RateProblem) -> list[np.ndarray]:
    rng = np.random.default_rng(prob.seed)
    m, d = obj.m, obj.d
    Q = np.clip(obj.ct.mean, obj.lo[:d], obj.hi[:d])
    starts = [np.tile(Q, m)]
    if prob.mode == "endpoint" and prob.level == 1:
        starts.append(np.clip(np.tile(prob.target / prob.T, m), obj.lo, obj.hi))
    while len(starts) < max(1, prob.multistart):
        kind = len(starts) % 3
        if kind == 0:
            x = rng.uniform(obj.lo, obj.hi)
        else:
            # constant profiles reach symmetric optima quickly
            x = np.tile(rng.uniform(obj.lo[:d], obj.hi[:d]), m)
            x = x + 0.05 * rng.standard_normal(x.size) * (obj.hi - obj.lo)
        starts.append(np.clip(x, obj.lo, obj.hi))
    return starts[: max(1, prob.multistart)]


def _solve(prob: RateProblem, delta: float | None) -> RateSolution:
    if not prob.model.is_iid:
        raise ModelError(f"rate functions are only defined for i.i.d. models, got {prob.model.kind!r}")
    if not is_product_law(prob.model):
        raise ModelError("the contraction solver needs a product law (independent coordinates)")
    prob.check_feasible()
    ct = CramerTransform(prob.model)
    obj = _Objective(prob, ct)
    starts = _start_points(obj, prob)

    def run(x0):
        return _auglag(obj, x0, delta, prob)

    if prob.threads > 1:
        with ThreadPoolExecutor(prob.threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(x0) for x0 in starts]

    records = []
    for x, viol, its, ok in results:
        f, _ = obj.cost(x)
        conv = viol <= prob.tol_constraint and ok
        records.append((not conv, f if conv else viol, tuple(np.round(x, 12)), x, viol, its, conv))
    records.sort(key=lambda r: r[:3])
    _, _, _, best_x, best_viol, best_its, best_conv = records[0]
    m, d = obj.m, obj.d
    profile = best_x.reshape(m, d)
    value = float(np.sum(ct.evaluate(profile)[0]) * obj.dt)
    alternates: list[np.ndarray] = []
    tol_v = max(1e-6, 1e-4 * abs(value))
    for nc, f, _, x, _, _, conv in records[1:]:
        if not conv or not best_conv or f > value + tol_v:
            continue
        cand = x.reshape(m, d)
        if np.max(np.abs(cand - profile)) <= 1e-3:
            continue
        if any(np.max(np.abs(cand - a)) <= 1e-3 for a in alternates):
            continue
        alternates.append(cand)
    msg = "converged" if best_conv else (
        f"not converged: residual {best_viol:.3g} > {prob.tol_constraint:g}; value is an upper bound only"
    )
    return RateSolution(
        value=value,
        profile=profile,
        residual=best_viol,
        converged=best_conv,
        outer_iterations=best_its,
        start_values=[float(r[1]) for r in sorted(records, key=lambda r: r[1]) if r[6]],
        alternates=alternates,
        message=msg,
        delta=delta,
    )


def contraction_rate(prob: RateProblem) -> RateSolution:
    """Discretized inf { I(gamma) : Phi^{nu}(gamma) = target }."""
    return _solve(prob, None)


def rate_lower_envelope(prob: RateProblem, delta: float) -> RateSolution:
    """inf of the rate over targets within sup distance ``delta`` (closed ball)."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    prob.check_feasible()
    ct = CramerTransform(prob.model)
    Q = ct.mean
    image = zero_cost_image(Q, prob.level, prob.times if prob.mode == "path" else prob.T)
    if float(np.max(np.abs(image - prob.target))) <= delta:
        m = prob.grid
        return RateSolution(0.0, np.tile(Q, (m, 1)), 0.0, True, 0, [0.0], [], "ball contains the mean image", delta)
    return _solve(prob, delta)


def envelope_curve(prob: RateProblem, deltas) -> list[RateSolution]:
    """Lower envelopes for several radii; values must be non-increasing in delta."""
    order = np.argsort(deltas)
    sols = [None] * len(deltas)
    for i in order:
        sols[i] = rate_lower_envelope(prob, float(deltas[i]))
    vals = [sols[i].value for i in order]
    for a, b in zip(vals, vals[1:]):
        if b > a + 1e-8 * max(1.0, abs(a)):
            raise AssertionError(f"lower envelope increased with delta: {a} -> {b}")
    return sols
