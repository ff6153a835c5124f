"""Command-line front end.

Usage::

    kropina <command> --config run.json [--out path] [--seed N]

Commands: check-cc, geodesic, convert, moduli, hamel, indicatrix.

Exit codes: 0 success, 1 check failed or inadmissible input data,
2 configuration error, 3 sampling failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import classify
from .conic_kropina import KropinaMetric, hamel_residual, sample_admissible
from .exceptions import KropinaError, SamplingError
from .geodesics import integrate, samples_to_csv
from .navigation import (
    KropinaData,
    NavigationData,
    ScalarField,
    indicatrix_samples,
    kropina_to_nav,
    nav_F,
    nav_to_kropina,
)
from .riemannian import cylinder, cylinder_field, s3_chart, s3_field, torus, torus_field

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SAMPLING = 0, 1, 2, 3

COMMANDS = ("check-cc", "geodesic", "convert", "moduli", "hamel", "indicatrix")
TAGS = ("euclidean", "sphere_projective", "s3_chart", "cylinder", "torus")

TOP_KEYS = {"command", "model", "kropina", "sampling", "integration", "point", "output"}
MODEL_KEYS = {"tag", "n", "m", "K", "Q", "C", "k", "hemisphere"}
KROPINA_KEYS = {"a", "b"}
SAMPLING_KEYS = {"seed", "n_samples", "tolerances"}
INTEGRATION_KEYS = {"x0", "y0", "t_max", "dt"}
OUTPUT_KEYS = {"path"}
TOLERANCE_KEYS = {"killing", "sectional", "flag", "parallel", "hamel", "moduli", "unit"}

DEFAULT_TOLERANCES = {
    **classify.CC_TOLERANCES,
    **classify.PF_TOLERANCES,
    "moduli": 1e-9,
    "unit": 1e-9,
}


class ConfigError(Exception):
    """Raised for any malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _vector(value, name: str, size: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc
    if arr.ndim != 1 or (size is not None and arr.size != size) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite vector" + (f" of length {size}" if size else ""))
    return arr


def _number(value, name: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number")
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive")
    return float(value)


@dataclass
class RunConfig:
    command: Optional[str]
    model: Optional[dict]
    kropina: Optional[dict]
    seed: int = 0
    n_samples: int = 20
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    integration: Optional[dict] = None
    point: Optional[list] = None
    output_path: Optional[str] = None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from exc
        _reject_unknown(doc, TOP_KEYS, "config")

        command = doc.get("command")
        if command is not None and command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")

        model = doc.get("model")
        if model is not None:
            _reject_unknown(model, MODEL_KEYS, "model")
            if model.get("tag") not in TAGS:
                raise ConfigError(f"model.tag must be one of {', '.join(TAGS)}")
        kropina = doc.get("kropina")
        if kropina is not None:
            _reject_unknown(kropina, KROPINA_KEYS, "kropina")
            if "a" not in kropina or "b" not in kropina:
                raise ConfigError("kropina needs both 'a' and 'b'")
        if model is None and kropina is None:
            raise ConfigError("config needs a 'model' or a 'kropina' section")

        sampling = doc.get("sampling", {})
        _reject_unknown(sampling, SAMPLING_KEYS, "sampling")
        seed = sampling.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("sampling.seed must be an unsigned 64-bit integer")
        n_samples = sampling.get("n_samples", 20)
        if isinstance(n_samples, bool) or not isinstance(n_samples, int) or not 1 <= n_samples <= 10_000:
            raise ConfigError("sampling.n_samples must be an integer in [1, 10000]")
        tol_in = sampling.get("tolerances", {})
        _reject_unknown(tol_in, TOLERANCE_KEYS, "sampling.tolerances")
        tolerances = dict(DEFAULT_TOLERANCES)
        for key, val in tol_in.items():
            tolerances[key] = _number(val, f"tolerances.{key}", positive=True)

        integration = doc.get("integration")
        if integration is not None:
            _reject_unknown(integration, INTEGRATION_KEYS, "integration")
            missing = sorted(INTEGRATION_KEYS - set(integration))
            if missing:
                raise ConfigError(f"integration is missing {', '.join(missing)}")
            _number(integration["t_max"], "integration.t_max", positive=True)
            _number(integration["dt"], "integration.dt", positive=True)

        output = doc.get("output", {})
        _reject_unknown(output, OUTPUT_KEYS, "output")
        return cls(command, model, kropina, seed, n_samples, tolerances, integration,
                   doc.get("point"), output.get("path"))


def build_navigation(spec: dict) -> NavigationData:
    """Catalog navigation data from a model section."""
    tag = spec["tag"]
    k = _number(spec.get("k", 0.0), "model.k")
    try:
        if tag == "euclidean":
            n = int(spec.get("n", len(spec["C"]) if "C" in spec else 2))
            C = _vector(spec.get("C", np.eye(n)[0]), "model.C", n)
            return classify.euclidean_navigation(C, k)
        if tag == "sphere_projective":
            m = spec.get("m", 2)
            if isinstance(m, bool) or not isinstance(m, int):
                raise ConfigError("model.m must be an integer")
            K = _number(spec.get("K", 1.0), "model.K", positive=True)
            if ("Q" in spec) != ("C" in spec):
                raise ConfigError("model.Q and model.C must be given together")
            if "Q" in spec:
                params = classify.SphereKillingParams(m=m, K=K, Q=np.asarray(spec["Q"], dtype=float),
                                                      C=_vector(spec["C"], "model.C"))
            else:
                params = classify.SphereKillingParams.seed(m, K)
            return classify.sphere_navigation(params, spec.get("hemisphere", "east"), k)
        models = {"cylinder": (cylinder, cylinder_field), "torus": (torus, torus_field),
                  "s3_chart": (s3_chart, s3_field)}
        make_model, make_field = models[tag]
        model = make_model()
        return NavigationData(model, make_field(), ScalarField.constant(k, model.dim),
                              spec={"tag": tag, "k": k})
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def natural_curvature(spec: dict) -> float:
    """Sectional curvature the catalog model carries (used as the default CC target)."""
    if "K" in spec:
        return float(spec["K"])
    return 1.0 if spec["tag"] == "s3_chart" else 0.0


def build_kropina_data(cfg: RunConfig) -> KropinaData:
    try:
        if cfg.kropina is not None:
            return KropinaData.constant(np.asarray(cfg.kropina["a"], dtype=float),
                                        _vector(cfg.kropina["b"], "kropina.b"))
        return nav_to_kropina(build_navigation(cfg.model))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _navigation(cfg: RunConfig) -> NavigationData:
    if cfg.model is not None:
        return build_navigation(cfg.model)
    return kropina_to_nav(build_kropina_data(cfg))


def _point(cfg: RunConfig, dim: int, rng: np.random.Generator, sampler) -> np.ndarray:
    if cfg.point is not None:
        return _vector(cfg.point, "point", dim)
    return sampler(rng, 1)[0]


# ---------------------------------------------------------------------------
# Deterministic serialisation
# ---------------------------------------------------------------------------

def _encode(obj: Any) -> str:
    if isinstance(obj, dict):
        items = (json.dumps(str(k)) + ": " + _encode(v) for k, v in sorted(obj.items()))
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format(v, ".17g")
    return json.dumps(str(obj))


def dumps(obj: Any) -> str:
    """JSON with sorted keys and floats at 17 significant digits."""
    return _encode(obj) + "\n"


# ---------------------------------------------------------------------------
# Commands; each returns (exit code, primary artifact text, summary or None)
# ---------------------------------------------------------------------------

def cmd_check_cc(cfg: RunConfig):
    if cfg.model is None:
        raise ConfigError("check-cc needs a 'model' section")
    nav = build_navigation(cfg.model)
    K = natural_curvature(cfg.model)
    report = classify.cc_check(nav, K, n_samples=cfg.n_samples, seed=cfg.seed,
                               tolerances={k: cfg.tolerances[k] for k in classify.CC_TOLERANCES})
    doc = report.to_dict()
    doc["model"] = nav.spec
    return (EXIT_OK if report.confirmed else EXIT_CHECK_FAILED), dumps(doc), None


def cmd_geodesic(cfg: RunConfig):
    if cfg.integration is None:
        raise ConfigError("geodesic needs an 'integration' section")
    kd = build_kropina_data(cfg)
    metric = KropinaMetric(kd)
    it = cfg.integration
    x0 = _vector(it["x0"], "integration.x0", kd.dim)
    y0 = _vector(it["y0"], "integration.y0", kd.dim)
    if not (kd.is_valid(x0) and metric.contains(x0, y0)):
        summary = {"command": "geodesic", "status": "inadmissible_initial_data",
                   "x0": x0, "y0": y0}
        return EXIT_CHECK_FAILED, "", dumps(summary)
    res = integrate(metric, x0, y0, float(it["t_max"]), float(it["dt"]))
    summary = {
        "command": "geodesic",
        "status": res.status,
        "t_exit": res.t_exit,
        "f_length": res.f_length,
        "f_drift": res.f_drift,
        "n_samples": int(res.t.size),
        "t_final": float(res.t[-1]),
    }
    return EXIT_OK, res.to_csv(), dumps(summary)


def cmd_convert(cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    if cfg.kropina is not None:
        kd = build_kropina_data(cfg)
        nav = kropina_to_nav(kd)
        back = nav_to_kropina(nav)
        x = _point(cfg, kd.dim, rng, kd.sample_points)
        direction = "kropina_to_navigation"
    else:
        nav = build_navigation(cfg.model)
        kd = nav_to_kropina(nav)
        back = kd
        x = _point(cfg, kd.dim, rng, nav.model.sample_points)
        direction = "navigation_to_kropina"
    nav_back = kropina_to_nav(kd)
    a, b = kd.a(x), kd.b(x)
    h, W, k = nav_back.model.metric(x), nav_back.wind(x), nav_back.k.value(x)
    roundtrip = max(
        float(np.max(np.abs(back.a(x) - a))), float(np.max(np.abs(back.b(x) - b))),
        float(np.max(np.abs(nav.model.metric(x) - h))), float(np.max(np.abs(nav.wind(x) - W))),
    )
    doc = {
        "command": "convert",
        "direction": direction,
        "x": x,
        "a": a,
        "b": b,
        "b_squared": float(kd.b_squared(x)),
        "k": float(k),
        "h": h,
        "W": W,
        "roundtrip_residual": roundtrip,
        "seed": cfg.seed,
    }
    return EXIT_OK, dumps(doc), None


def cmd_moduli(cfg: RunConfig):
    spec = cfg.model
    if spec is None:
        raise ConfigError("moduli needs a 'model' section")
    tol = cfg.tolerances["moduli"]
    if spec["tag"] == "sphere_projective":
        nav = build_navigation(spec)
        params = classify.SphereKillingParams(m=nav.spec["m"], K=nav.spec["K"],
                                              Q=np.asarray(nav.spec["Q"]), C=np.asarray(nav.spec["C"]))
        nf = classify.moduli_normal_form(params)
        expected = math.sqrt(params.K)
        dev = float(np.max(np.abs(nf.blocks - expected)))
        doc = {"command": "moduli", "family": "sphere", "m": params.m, "K": params.K,
               "blocks": nf.blocks, "expected_block": expected, "max_deviation": dev,
               "decision": dev < tol, "tolerance": tol}
    elif spec["tag"] == "euclidean":
        nav = build_navigation(spec)
        C = np.asarray(nav.spec["C"])
        RC, R = classify.euclidean_moduli_normal_form(C)
        e1 = np.eye(C.size)[0]
        dev = float(np.max(np.abs(RC - e1)))
        doc = {"command": "moduli", "family": "euclidean", "n": int(C.size), "normal_form": RC,
               "rotation_det": float(np.linalg.det(R)), "max_deviation": dev,
               "decision": dev < tol, "tolerance": tol}
    else:
        raise ConfigError("moduli is defined for euclidean and sphere_projective models")
    doc["blocks_text"] = " ".join(format(float(v), ".17g") for v in
                                  (doc.get("blocks", doc.get("normal_form"))))
    return (EXIT_OK if doc["decision"] else EXIT_CHECK_FAILED), dumps(doc), None


def cmd_hamel(cfg: RunConfig):
    kd = build_kropina_data(cfg)
    metric = KropinaMetric(kd)
    rng = np.random.default_rng(cfg.seed)
    pts = kd.sample_points(rng, cfg.n_samples)
    values = np.array([hamel_residual(metric, x, sample_admissible(metric, x, rng)) for x in pts])
    tol = cfg.tolerances["hamel"]
    doc = {
        "check": "hamel",
        "residuals": {"max": float(values.max()), "mean": float(values.mean()),
                      "median": float(np.median(values)), "min": float(values.min())},
        "decision": bool(values.max() < tol),
        "seed": cfg.seed,
        "n_samples": cfg.n_samples,
        "tolerances": {"hamel": tol},
    }
    return EXIT_OK, dumps(doc), None


def cmd_indicatrix(cfg: RunConfig):
    nav = _navigation(cfg)
    rng = np.random.default_rng(cfg.seed)
    x = _point(cfg, nav.dim, rng, nav.model.sample_points)
    ys = indicatrix_samples(nav, x, cfg.n_samples, rng=rng)
    W = nav.wind(x)
    h = nav.model.metric(x)
    d = ys - W
    dist = np.sqrt(np.einsum("ki,ij,kj->k", d, h, d))
    F = np.array([nav_F(nav, x, y) for y in ys])
    n = nav.dim
    lines = [",".join([f"y{i + 1}" for i in range(n)] + ["F", "dist_h"])]
    for y, f, r in zip(ys, F, dist):
        lines.append(",".join(format(float(v), ".17g") for v in (*y, f, r)))
    csv_text = "\n".join(lines) + "\n"
    tol = cfg.tolerances["unit"]
    summary = {"command": "indicatrix", "x": x, "count": cfg.n_samples,
               "max_dist_deviation": float(np.max(np.abs(dist - 1.0))),
               "max_F_deviation": float(np.max(np.abs(F - 1.0))), "tolerance": tol}
    ok = summary["max_dist_deviation"] < tol
    return (EXIT_OK if ok else EXIT_CHECK_FAILED), csv_text, dumps(summary)


HANDLERS = {
    "check-cc": cmd_check_cc,
    "geodesic": cmd_geodesic,
    "convert": cmd_convert,
    "moduli": cmd_moduli,
    "hamel": cmd_hamel,
    "indicatrix": cmd_indicatrix,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kropina", description="Kropina geometry runs from a JSON config.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to the JSON run configuration")
    p.add_argument("--out", help="artifact path (JSON report or CSV); default stdout")
    p.add_argument("--seed", type=int, help="override sampling.seed")
    return p


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = RunConfig.from_json(fh.read())
        if cfg.command is not None and cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        out = args.out if args.out is not None else cfg.output_path
        code, artifact, summary = HANDLERS[args.command](cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingError as exc:
        print(f"sampling failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except KropinaError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED

    if artifact:
        _write(out, artifact)
    if summary is not None:
        # summary goes to stdout unless the artifact already went there
        stream = sys.stderr if (out is None and artifact) else sys.stdout
        stream.write(summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
