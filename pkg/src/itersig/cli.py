"""Batch command-line front end.

Every run writes its outputs plus ``manifest.json`` (command, config echo,
seed, version, timestamps, SHA-256 of each output).  ``itersig replay`` re-runs
a manifest into a new directory and compares digests.

Exit codes: 0 success, 2 config error, 3 rate solver did not converge,
4 unresolved probe, 5 replay digest mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import holder_suite, lln_suite, regularity_suite
from .mcprobe import LDPEstimate, estimate_naive, estimate_tilted, slope_vs_rate_report
from .path import PathError, PiecewisePath, read_sequence_csv, write_sequence_csv
from .plot import emit_plot
from .processes import ModelError, StepLawModel, sample_sequence
from .rate import InfeasibleTarget, RateProblem, RateSolution, contraction_rate, rate_lower_envelope
from .signature import (
    iterated_sum_direct,
    iterated_sum_stream,
    phi_map_exact,
    phi_map_quadrature,
    signature_of_sequence,
)
from .tensor import ShapeError

log = logging.getLogger("itersig")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_UNRESOLVED, EXIT_MISMATCH = 0, 2, 3, 4, 5
INTERIOR = 0.99
THREADS_ENV = "ITERSIG_THREADS"


class ConfigError(ValueError):
    pass


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_csv(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")


def _seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("config must set an integer 'seed' (no wall-clock seeding)")
    return int(cfg["seed"])


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    return int(os.environ.get(THREADS_ENV, "1"))


# --- subcommands: each returns (exit code, outputs, config echo, seed) ---------------------


def cmd_gen(args, out: Path):
    cfg = _load_config(args.config)
    _require(cfg, "model", "n")
    seed = _seed(cfg)
    model = StepLawModel.from_json(cfg["model"])
    seq = sample_sequence(model, int(cfg["n"]), seed)
    target = out / "sequence.csv"
    write_sequence_csv(seq, target)
    log.info("generated %d samples of %s", len(seq), model.kind)
    return EXIT_OK, [target], cfg, seed


def cmd_sig(args, out: Path):
    src = Path(args.input)
    level, t, method = args.level, args.time, args.method
    if src.suffix == ".json":
        try:
            path = PiecewisePath.from_json(json.loads(src.read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read path {src}: {exc}") from exc
        if method in ("direct", "stream"):
            raise ConfigError(f"method {method!r} needs a sampled sequence (.csv), not a path")
        t = path.T if t is None else t
        sub = path if t >= path.T else path.restrict(t)
        if method == "exact":
            stack = phi_map_exact(sub, level).final()
        else:
            stack = phi_map_quadrature(sub, level, args.step).final()
    else:
        seq = read_sequence_csv(src)
        n = args.n
        t = len(seq) / n if t is None else t
        if method == "direct":
            stack = iterated_sum_direct(seq, level, n, t)
        elif method == "stream":
            stack = iterated_sum_stream(seq, level, n, [t])[0]
        elif method == "exact":
            stack = signature_of_sequence(seq, level, n, t)
        else:
            from .path import phi_n_from_sequence

            stack = phi_map_quadrature(phi_n_from_sequence(seq, n, t), level, args.step).final()
    target = out / "signature.json"
    _dump({"method": method, "input_sha256": _digest(src), "stack": stack.to_json()}, target)
    cfg = {"input": str(src), "level": level, "time": t, "method": method, "step": args.step, "n": args.n}
    return EXIT_OK, [target], cfg, None


def _rate_problem(cfg: dict, args) -> RateProblem:
    _require(cfg, "model", "level", "T", "target")
    if args.multistart is not None:
        cfg["multistart"] = args.multistart
    if args.grid is not None:
        cfg["grid"] = args.grid
    if args.mode is not None:
        cfg["mode"] = args.mode
    if args.delta is not None:
        cfg["delta"] = args.delta
    prob = RateProblem.from_json({k: v for k, v in cfg.items() if k != "delta"})
    prob.threads = _threads(args)
    return prob


def cmd_rate(args, out: Path):
    cfg = _load_config(args.config)
    seed = _seed(cfg)
    prob = _rate_problem(cfg, args)
    sol = contraction_rate(prob)
    result = {"problem": prob.to_json(), "solution": sol.to_json()}
    code = EXIT_OK if sol.converged else EXIT_NONCONVERGED
    if "delta" in cfg:
        delta = float(cfg["delta"])
        lo = rate_lower_envelope(prob, delta)
        hi = rate_lower_envelope(prob, INTERIOR * delta)
        result["envelope"] = {
            "delta": delta,
            "lower": lo.value,
            "interior_delta": INTERIOR * delta,
            "upper": hi.value,
            "converged": lo.converged and hi.converged,
        }
        if not (lo.converged and hi.converged):
            code = EXIT_NONCONVERGED
    if code:
        log.warning("rate solver did not converge: %s", sol.message)
    target = out / "rate.json"
    _dump(result, target)
    return code, [target], cfg, seed


def cmd_probe(args, out: Path):
    cfg = _load_config(args.config)
    _require(cfg, "model", "level", "T", "target", "delta", "n_list", "trials")
    seed = _seed(cfg)
    model = StepLawModel.from_json(cfg["model"])
    method = args.method or cfg.get("method", "naive")
    common = dict(
        model=model, level=int(cfg["level"]), T=float(cfg["T"]), y=cfg["target"],
        delta=float(cfg["delta"]), n_list=[int(n) for n in cfg["n_list"]],
        trials=int(cfg["trials"]), seed=seed, batches=int(cfg.get("batches", 32)),
        threads=_threads(args),
    )
    if method == "naive":
        est = estimate_naive(**common)
    elif method == "tilted":
        est = estimate_tilted(**common, grid=int(cfg.get("grid", 16)))
    else:
        raise ConfigError(f"unknown probe method {method!r}")
    cfg["method"] = method
    j, c = out / "probe.json", out / "probe.csv"
    _dump(est.to_json(), j)
    _write_csv(est.csv_rows(), c)
    if not est.is_resolved:
        log.warning("probe unresolved: no sample size produced a usable estimate")
        return EXIT_UNRESOLVED, [j, c], cfg, seed
    return EXIT_OK, [j, c], cfg, seed


def cmd_report(args, out: Path):
    try:
        est = LDPEstimate.from_json(json.loads(Path(args.probe).read_text()))
        rate = json.loads(Path(args.rate).read_text())
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read report inputs: {exc}") from exc
    prob = RateProblem.from_json(rate["problem"])
    sol = RateSolution.from_json(rate["solution"])
    env = rate.get("envelope")
    if env is not None and math.isclose(env["delta"], est.delta):
        cmp = slope_vs_rate_report(est, lower=env["lower"], upper=env["upper"], contraction_value=sol.value)
    else:
        cmp = slope_vs_rate_report(est, prob, contraction_value=sol.value, interior=INTERIOR)
    j, svg = out / "report.json", out / "report.svg"
    _dump({"probe": str(args.probe), "rate": str(args.rate), "comparison": cmp.to_json()}, j)
    ns = [n for n, ok in zip(est.n_list, est.resolved) if ok]
    slopes = [s for s, ok in zip(est.slopes, est.resolved) if ok]
    ann = [f"fitted slope = {cmp.fitted_slope:.6g}" if cmp.fitted_slope is not None else "fitted slope = unresolved",
           f"verdict: {cmp.verdict}"]
    emit_plot(
        [{"x": ns, "y": slopes, "label": f"-(1/n) log p_n ({est.method})"}],
        svg, title="decay slope vs n", x_label="n", y_label="-(1/n) log p_n",
        bands=[(cmp.lower_envelope, cmp.upper_envelope, "rate band")], annotations=ann,
    )
    cfg = {"probe": str(args.probe), "rate": str(args.rate)}
    code = EXIT_UNRESOLVED if cmp.verdict == "unresolved" else EXIT_OK
    return code, [j, svg], cfg, est.seed


def cmd_check(args, out: Path):
    cfg = _load_config(args.config)
    seed = _seed(cfg)
    suite = args.suite
    if suite == "holder":
        _require(cfg, "level", "dim", "T", "eps2_list", "trials")
        rep = holder_suite(int(cfg["level"]), int(cfg["dim"]), float(cfg["T"]), [float(e) for e in cfg["eps2_list"]],
                           int(cfg["trials"]), cfg.get("mode", "adversarial"), seed)
    elif suite == "lln":
        _require(cfg, "model", "level", "T", "n_list", "reps")
        rep = lln_suite(StepLawModel.from_json(cfg["model"]), int(cfg["level"]), float(cfg["T"]),
                        [int(n) for n in cfg["n_list"]], int(cfg["reps"]), seed,
                        quantity=cfg.get("quantity", "integral"))
    elif suite == "regularity":
        _require(cfg, "level", "dim", "T", "trials")
        rep = regularity_suite(int(cfg["level"]), int(cfg["dim"]), float(cfg["T"]), int(cfg["trials"]), seed)
    else:
        raise ConfigError(f"unknown suite {suite!r}")
    j, c = out / f"{suite}.json", out / f"{suite}.csv"
    _dump(rep.to_json(), j)
    _write_csv(rep.csv_rows(), c)
    outputs = [j, c]
    if suite == "lln":
        svg = out / "lln.svg"
        emit_plot([{"x": rep.n_list, "y": rep.medians, "label": "median sup error"}], svg,
                  title="LLN error decay", x_label="n", y_label="median sup error", log_x=True, log_y=True,
                  annotations=[f"fitted exponent = {rep.exponent:.4g}"])
        outputs.append(svg)
    return EXIT_OK, outputs, cfg, seed


COMMANDS = {"gen": cmd_gen, "sig": cmd_sig, "rate": cmd_rate, "probe": cmd_probe, "report": cmd_report, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itersig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")

    sp = sub.add_parser("gen", help="sample a step sequence to CSV")
    common(sp)
    sp = sub.add_parser("sig", help="signature of a path (.json) or sequence (.csv)")
    common(sp, config=False)
    sp.add_argument("--input", required=True)
    sp.add_argument("--level", type=int, required=True)
    sp.add_argument("--time", type=float, default=None)
    sp.add_argument("--method", choices=["direct", "stream", "exact", "quad"], default="exact")
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--n", type=int, default=1, help="normalization n for sequences")
    sp = sub.add_parser("rate", help="contraction rate of an endpoint or path target")
    common(sp)
    sp.add_argument("--multistart", type=int, default=None)
    sp.add_argument("--grid", type=int, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--mode", choices=["endpoint", "path"], default=None)
    sp = sub.add_parser("probe", help="Monte Carlo decay-slope estimate")
    common(sp)
    sp.add_argument("--method", choices=["naive", "tilted"], default=None)
    sp = sub.add_parser("report", help="compare a probe with a rate solution")
    common(sp, config=False)
    sp.add_argument("--probe", required=True)
    sp.add_argument("--rate", required=True)
    sp = sub.add_parser("check", help="run a property suite")
    common(sp)
    sp.add_argument("--suite", choices=["holder", "lln", "regularity"], required=True)
    sp = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    return p


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging() -> None:
    if log.handlers:
        return
    h = _StderrHandler()
    h.setFormatter(logging.Formatter('level=%(levelname)s logger=%(name)s msg="%(message)s"'))
    log.addHandler(h)
    log.setLevel(logging.INFO)
    log.propagate = False


def _replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    with tempfile.TemporaryDirectory() as tmp:
        if manifest.get("config") is not None and "--config" in argv:
            cfg_path = Path(tmp) / "config.json"
            _dump(manifest["config"], cfg_path)
            argv[argv.index("--config") + 1] = str(cfg_path)
        argv[argv.index("--out") + 1] = args.out
        code = run(argv)
    new = json.loads((Path(args.out) / "manifest.json").read_text())
    same = new["outputs"] == manifest["outputs"]
    for name, dig in manifest["outputs"].items():
        status = "match" if new["outputs"].get(name) == dig else "MISMATCH"
        log.info("%s %s", status, name)
    if not same:
        return EXIT_MISMATCH
    return code


def run(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "replay":
        return _replay(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    try:
        code, outputs, cfg, seed = COMMANDS[args.command](args, out)
    except (ConfigError, InfeasibleTarget, ModelError, PathError, ShapeError, KeyError, TypeError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "exit_code": code,
        "outputs": {p.name: _digest(p) for p in outputs},
    }
    _dump(manifest, out / "manifest.json")
    log.info("%s finished with exit code %d; %d outputs", args.command, code, len(outputs))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
