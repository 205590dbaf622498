"""Bounded stationary step processes: i.i.d. laws, Markov chains, circle maps.

Every model is seed-parameterized; ``sample_sequence(model, n, seed)`` is a
pure function of its arguments.  Independent streams for parallel workers
come from ``derive_seed(master, worker, ...)``, a thin wrapper over
``numpy.random.SeedSequence`` spawning by key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import logsumexp

from .path import SampledSequence

IID_KINDS = ("iid_rademacher", "iid_uniform", "iid_discrete")
KINDS = IID_KINDS + ("markov", "rotation", "doubling")
MAX_MARKOV_STATES = 64


class ModelError(ValueError):
    pass


def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
    """Disjoint seed stream for (master seed, worker index, ...)."""
    return np.random.SeedSequence([int(master), *(int(k) for k in keys)])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --- trigonometric observables on the circle -----------------------------------------


def _default_observable(dim: int) -> list[dict]:
    return [{"const": 0.0, "cos": [0.0] * i + [1.0], "sin": []} for i in range(dim)]


def _trig_eval(spec: dict, x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, float(spec.get("const", 0.0)))
    for k, a in enumerate(spec.get("cos", []), start=1):
        if a:
            out += a * np.cos(2 * np.pi * k * x)
    for k, b in enumerate(spec.get("sin", []), start=1):
        if b:
            out += b * np.sin(2 * np.pi * k * x)
    return out


def _trig_bound(spec: dict) -> float:
    return abs(float(spec.get("const", 0.0))) + sum(map(abs, spec.get("cos", []))) + sum(
        map(abs, spec.get("sin", []))
    )


@dataclass(frozen=True)
class MeanVector:
    Q: np.ndarray
    provenance: str  # "analytic" | "estimated"
    stderr: np.ndarray | None = None


@dataclass(frozen=True)
class StepLawModel:
    """A bounded stationary step law.

    ``params`` by kind:

    - ``iid_rademacher``: none; independent symmetric signs per coordinate.
    - ``iid_uniform``: ``low``, ``high`` (scalars or per-coordinate lists in [-1, 1]).
    - ``iid_discrete``: ``points`` (K x d), ``probs`` (K).
    - ``markov``: ``transition`` (K x K), ``observations`` (K x d).
    - ``rotation``: ``alpha`` and optional ``observable``; ``doubling``: ``observable``.
      An observable is a list of per-coordinate trig polynomials
      ``{"const": c, "cos": [a_1, ...], "sin": [b_1, ...]}`` in 2*pi*k*x, or a
      Python callable ``g(x) -> (len(x), d)`` given as ``params["g"]`` (its mean
      is then estimated).

    With ``centered=True`` the analytic mean is subtracted from every sample.
    """

    kind: str
    dim: int = 1
    params: dict = field(default_factory=dict)
    centered: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ModelError(f"dim must be positive, got {self.dim}")
        object.__setattr__(self, "_r", self._resolve())

    # resolved numeric parameters, centered if requested
    def _resolve(self) -> dict[str, Any]:
        p, d = self.params, self.dim
        r: dict[str, Any] = {}
        if self.kind == "iid_rademacher":
            r["Q"] = np.zeros(d)
        elif self.kind == "iid_uniform":
            low = np.broadcast_to(np.asarray(p.get("low", -1.0), dtype=float), (d,)).copy()
            high = np.broadcast_to(np.asarray(p.get("high", 1.0), dtype=float), (d,)).copy()
            if np.any(low > high):
                raise ModelError("iid_uniform needs low <= high")
            r["Q"] = (low + high) / 2
            if self.centered:
                low, high = low - r["Q"], high - r["Q"]
                r["Q"] = np.zeros(d)
            r["low"], r["high"] = low, high
            if max(np.max(np.abs(low)), np.max(np.abs(high))) > 1 + 1e-12:
                raise ModelError(f"uniform support [{low}, {high}] leaves [-1, 1]")
        elif self.kind == "iid_discrete":
            pts = np.asarray(p["points"], dtype=float).reshape(-1, d)
            probs = np.asarray(p["probs"], dtype=float).reshape(-1)
            if pts.shape[0] != probs.size or probs.size == 0:
                raise ModelError("points and probs must have the same length")
            if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
                raise ModelError(f"probs must be a probability vector, sum={probs.sum()!r}")
            Q = probs @ pts
            if self.centered:
                pts = pts - Q
                Q = np.zeros(d)
            if np.max(np.abs(pts)) > 1 + 1e-12:
                raise ModelError("support points violate |x|_inf <= 1")
            r.update(points=pts, probs=probs, Q=Q, cum=np.cumsum(probs))
        elif self.kind == "markov":
            P = np.asarray(p["transition"], dtype=float)
            K = P.shape[0]
            if P.shape != (K, K) or K > MAX_MARKOV_STATES:
                raise ModelError(f"transition must be square with <= {MAX_MARKOV_STATES} states")
            if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12:
                raise ModelError("transition rows must be probability vectors (sum 1 +- 1e-12)")
            obs = np.asarray(p["observations"], dtype=float).reshape(K, d)
            pi = stationary_distribution(P)
            Q = pi @ obs
            if self.centered:
                obs = obs - Q
                Q = np.zeros(d)
            if np.max(np.abs(obs)) > 1 + 1e-12:
                raise ModelError("observations violate |x|_inf <= 1")
            r.update(P=P, cumP=np.cumsum(P, axis=1), pi=pi, cumpi=np.cumsum(pi), obs=obs, Q=Q)
        else:
            if self.kind == "rotation":
                alpha = float(p.get("alpha", (math.sqrt(5) - 1) / 2))
                r["alpha"] = alpha
            g = p.get("g")
            if g is not None:
                if not callable(g):
                    raise ModelError("params['g'] must be callable")
                r["g"] = g
                r["Q"] = None
            else:
                specs = [dict(s) for s in p.get("observable", _default_observable(d))]
                if len(specs) != d:
                    raise ModelError(f"observable has {len(specs)} coordinates, dim is {d}")
                Q = np.array([float(s.get("const", 0.0)) for s in specs])
                if self.centered:
                    for s in specs:
                        s["const"] = 0.0
                    Q = np.zeros(d)
                if max(_trig_bound(s) for s in specs) > 1 + 1e-12:
                    raise ModelError("observable coefficients do not certify |g| <= 1")
                r.update(specs=specs, Q=Q)
        return r

    @property
    def is_iid(self) -> bool:
        return self.kind in IID_KINDS

    def to_json(self) -> dict:
        params = {k: v for k, v in self.params.items() if not callable(v)}
        return {"kind": self.kind, "dim": self.dim, "params": _jsonable(params), "centered": self.centered}

    @classmethod
    def from_json(cls, obj: dict) -> "StepLawModel":
        return cls(
            kind=obj["kind"],
            dim=int(obj.get("dim", 1)),
            params=dict(obj.get("params", {})),
            centered=bool(obj.get("centered", False)),
        )


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    K = P.shape[0]
    A = np.vstack([P.T - np.eye(K), np.ones((1, K))])
    b = np.zeros(K + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


# --- sampling --------------------------------------------------------------------------


def sample_iid(model: StepLawModel, shape: tuple[int, ...], rng, lam=None) -> np.ndarray:
    """Samples of shape ``shape + (d,)`` from an i.i.d. law, optionally exponentially
    tilted by ``lam`` (broadcastable to ``shape + (d,)``): density ∝ exp(<lam, x>).
    """
    if not model.is_iid:
        raise ModelError(f"{model.kind} is not an i.i.d. model")
    r = model._r
    d = model.dim
    rng = make_rng(rng)
    full = tuple(shape) + (d,)
    lam_arr = np.zeros(full) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), full)
    if model.kind == "iid_rademacher":
        u = rng.random(full)
        p_plus = 1.0 / (1.0 + np.exp(-2.0 * lam_arr))
        return np.where(u < p_plus, 1.0, -1.0)
    if model.kind == "iid_uniform":
        u = rng.random(full)
        low, high = r["low"], r["high"]
        width = high - low
        plain = low + u * width
        z = lam_arr * width
        small = np.abs(z) < 1e-12
        zs = np.where(small, 1.0, z)
        # inverse CDF of the density ∝ exp(lam x) on [low, high], anchored at the
        # heavy end so large tilts do not overflow
        za = np.abs(zs)
        with np.errstate(divide="ignore"):
            tail = np.log(u + (1 - u) * np.exp(-za)) / za
        tilted = np.where(zs > 0, high + width * tail, low - width * tail)
        tilted = np.where(za < 1.0, low + width * np.log1p(u * np.expm1(zs)) / zs, tilted)
        return np.where(small, plain, np.clip(tilted, low, high))
    # iid_discrete
    pts, probs = r["points"], r["probs"]
    u = rng.random(tuple(shape))
    if lam is None:
        idx = np.searchsorted(r["cum"], u * r["cum"][-1], side="right")
    else:
        lam_b = np.broadcast_to(np.asarray(lam, dtype=float), full)
        logw = np.log(np.where(probs > 0, probs, 1e-300)) + lam_b @ pts.T
        logw = np.where(probs > 0, logw, -np.inf)
        w = np.exp(logw - logw.max(axis=-1, keepdims=True))
        cum = np.cumsum(w, axis=-1)
        idx = (cum < (u * cum[..., -1])[..., None]).sum(axis=-1)
    idx = np.minimum(idx, pts.shape[0] - 1)
    return pts[idx]


def sample_sequence(model: StepLawModel, n: int, seed) -> SampledSequence:
    """n consecutive steps of the stationary process (stationary start)."""
    if n < 1:
        raise ModelError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    r = model._r
    if model.is_iid:
        return SampledSequence(sample_iid(model, (n,), rng))
    if model.kind == "markov":
        u = rng.random(n)
        states = np.empty(n, dtype=np.int64)
        s = int(np.searchsorted(r["cumpi"], u[0] * r["cumpi"][-1], side="right"))
        s = min(s, r["cumpi"].size - 1)
        states[0] = s
        cumP = r["cumP"]
        for k in range(1, n):
            s = min(int(np.searchsorted(cumP[s], u[k] * cumP[s, -1], side="right")), cumP.shape[1] - 1)
            states[k] = s
        return SampledSequence(r["obs"][states])
    if model.kind == "rotation":
        x0 = rng.random()
        x = np.mod(x0 + r["alpha"] * np.arange(n), 1.0)
    else:
        # backward orbit of the doubling map: x_k is a uniformly chosen preimage of x_{k+1}
        bits = rng.integers(0, 2, size=n - 1)
        x = np.empty(n)
        x[-1] = rng.random()
        for k in range(n - 2, -1, -1):
            x[k] = (x[k + 1] + bits[k]) / 2.0
    return SampledSequence(observe(model, x))


def observe(model: StepLawModel, x: np.ndarray) -> np.ndarray:
    """Apply the circle observable of a rotation/doubling model to points x."""
    r = model._r
    if "g" in r:
        out = np.asarray(r["g"](x), dtype=float).reshape(x.size, model.dim)
        if np.max(np.abs(out)) > 1 + 1e-12:
            raise ModelError("observable returned values with |g|_inf > 1")
        return out
    out = np.column_stack([_trig_eval(s, x) for s in r["specs"]])
    return np.clip(out, -1.0, 1.0)


def circle_mean(model: StepLawModel, nodes: int = 4096) -> np.ndarray:
    """Mean of the observable under Lebesgue measure on the circle (trapezoid rule)."""
    x = np.arange(nodes) / nodes
    return observe(model, x).mean(axis=0)


def mean_vector(model: StepLawModel, n_mc: int = 200_000, seed: int = 0) -> MeanVector:
    Q = model._r.get("Q")
    if Q is not None:
        return MeanVector(np.array(Q, dtype=float), "analytic")
    # custom observable: Monte Carlo over uniform initial points
    rng = make_rng(seed)
    vals = observe(model, rng.random(n_mc))
    return MeanVector(vals.mean(axis=0), "estimated", vals.std(axis=0, ddof=1) / math.sqrt(n_mc))


# --- log moment generating functions --------------------------------------------------


def _log_sinhc(x: np.ndarray) -> np.ndarray:
    """log(sinh(x)/x), stable for all x, with value 0 at x = 0."""
    ax = np.abs(np.asarray(x, dtype=float))
    small = ax < 1e-3
    xs = np.where(small, 1.0, ax)
    big = xs + np.log1p(-np.exp(-2 * xs)) - math.log(2.0) - np.log(xs)
    series = ax**2 / 6 - ax**4 / 180
    return np.where(small, series, big)


def _dlog_sinhc(x: np.ndarray) -> np.ndarray:
    """d/dx log(sinh(x)/x) = coth(x) - 1/x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = 1.0 / np.tanh(xs) - 1.0 / xs
    return np.where(small, x / 3 - x**3 / 45, big)


def _log_cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2 * ax)) - math.log(2.0)


def _require_iid(model: StepLawModel) -> None:
    if not model.is_iid:
        raise ModelError(
            f"log-MGF is only available for i.i.d. models, not {model.kind!r}"
        )


def log_mgf(model: StepLawModel, lam) -> np.ndarray | float:
    """Lambda(lam) = log E exp<lam, xi>; ``lam`` has trailing dimension d."""
    _require_iid(model)
    lam = np.asarray(lam, dtype=float)
    lam = lam.reshape(lam.shape[:-1] + (model.dim,)) if lam.ndim else np.full(model.dim, float(lam))
    r = model._r
    if model.kind == "iid_rademacher":
        out = _log_cosh(lam).sum(axis=-1)
    elif model.kind == "iid_uniform":
        c = (r["low"] + r["high"]) / 2
        w = (r["high"] - r["low"]) / 2
        out = (lam * c + _log_sinhc(lam * w)).sum(axis=-1)
    else:
        logp = np.log(np.where(r["probs"] > 0, r["probs"], 1e-300))
        logp = np.where(r["probs"] > 0, logp, -np.inf)
        out = logsumexp(logp + lam @ r["points"].T, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def grad_log_mgf(model: StepLawModel, lam) -> np.ndarray:
    """Gradient of Lambda: the mean of the tilted law."""
    _require_iid(model)
    lam = np.asarray(lam, dtype=float)
    lam = lam.reshape(lam.shape[:-1] + (model.dim,)) if lam.ndim else np.full(model.dim, float(lam))
    r = model._r
    if model.kind == "iid_rademacher":
        return np.tanh(lam)
    if model.kind == "iid_uniform":
        c = (r["low"] + r["high"]) / 2
        w = (r["high"] - r["low"]) / 2
        return c + w * _dlog_sinhc(lam * w)
    logp = np.log(np.where(r["probs"] > 0, r["probs"], 1e-300))
    logp = np.where(r["probs"] > 0, logp, -np.inf)
    logw = logp + lam @ r["points"].T
    w = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
    return w @ r["points"]


def support_box(model: StepLawModel) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate-wise [min, max] of the support of an i.i.d. law."""
    _require_iid(model)
    r = model._r
    if model.kind == "iid_rademacher":
        return -np.ones(model.dim), np.ones(model.dim)
    if model.kind == "iid_uniform":
        return r["low"].copy(), r["high"].copy()
    pts = r["points"][r["probs"] > 0]
    return pts.min(axis=0), pts.max(axis=0)


def is_product_law(model: StepLawModel) -> bool:
    return model.kind in ("iid_rademacher", "iid_uniform") or model.dim == 1


def marginal(model: StepLawModel, i: int) -> StepLawModel:
    """One-dimensional marginal of coordinate i of a product law."""
    r = model._r
    if model.kind == "iid_rademacher":
        return StepLawModel("iid_rademacher", 1)
    if model.kind == "iid_uniform":
        return StepLawModel("iid_uniform", 1, {"low": float(r["low"][i]), "high": float(r["high"][i])})
    if model.dim == 1:
        return model
    raise ModelError("marginals are only defined for product laws")


ObservableFn = Callable[[np.ndarray], np.ndarray]
