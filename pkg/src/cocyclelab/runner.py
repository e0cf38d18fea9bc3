"""Configuration-driven experiment runner with deterministic reports.

Config files are JSON with full-line // comments; the exact schema is
documented in the README.  Reports are JSON documents with fixed key order
(-infinity appears as the string token "-inf") followed by one trailing
`// timing:` comment line, so two runs of the same config produce
byte-identical report bodies.
"""

from __future__ import annotations

import hashlib
import json
import math
import time

import numpy as np

from . import __version__
from .cocycles import CocycleField
from .dynamics import BaseSystem, BernoulliPoint, PeriodicPoint, RotationPoint
from .errors import CapacityError, ConfigError, MissingSeriesError
from .operators import TruncatedOperator
from . import domination as dom
from . import lyapunov as lyap
from . import perturbation as pert

_REPORT_SERIES_ROWS = 128


# -- config parsing ----------------------------------------------------------


def strip_comments(text: str) -> str:
    lines = []
    for line in text.splitlines():
        if line.lstrip().startswith("//"):
            continue
        lines.append(line)
    return "\n".join(lines)


def parse_config_text(text: str) -> dict:
    try:
        cfg = json.loads(strip_comments(text))
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err.msg} at line {err.lineno}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    return cfg


def _canon(obj):
    """Make a report/config tree JSON-safe with deterministic float tokens."""
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if v == math.inf:
            return "inf"
        if v == -math.inf:
            return "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(_canon(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def parse_extended_float(value):
    """Accept numbers plus the tokens "-inf" / "inf" / "nan"."""
    if isinstance(value, str):
        if value == "-inf":
            return -math.inf
        if value == "inf":
            return math.inf
        if value == "nan":
            return math.nan
        raise ConfigError(f"unrecognized numeric token {value!r}")
    return float(value)


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing field {where}.{key}")
    return cfg[key]


def _operator_from(spec, dim: int, where: str) -> TruncatedOperator:
    try:
        arr = np.array(spec, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: matrix entries must be reals") from err
    if arr.shape == (dim * dim,):
        arr = arr.reshape(dim, dim)  # row-major flat form
    if arr.shape != (dim, dim):
        raise ConfigError(f"{where}: expected a {dim} x {dim} matrix, got shape {arr.shape}")
    return TruncatedOperator(arr)


def build_base(cfg: dict, seed: int) -> BaseSystem:
    kind = _require(cfg, "kind", "base")
    if kind == "bernoulli_shift":
        probs = _require(cfg, "probs", "base")
        return BaseSystem.bernoulli_shift(probs, seed=seed, window_radius=cfg.get("window_radius", 64))
    if kind == "circle_rotation":
        return BaseSystem.circle_rotation(_require(cfg, "alpha", "base"), seed=seed)
    if kind == "periodic_orbit":
        return BaseSystem.periodic_orbit(_require(cfg, "period", "base"), seed=seed)
    raise ConfigError(f"base.kind must be one of bernoulli_shift, circle_rotation, periodic_orbit; got {kind!r}")


def build_cocycle(cfg: dict, base: BaseSystem) -> CocycleField:
    dim = int(_require(cfg, "dim", "cocycle"))
    rule = _require(cfg, "rule", "cocycle")
    kind = _require(rule, "kind", "cocycle.rule")
    if kind == "constant":
        op = _operator_from(_require(rule, "matrix", "cocycle.rule"), dim, "cocycle.rule.matrix")
        return CocycleField.constant(base, op)
    if kind == "per_symbol":
        mats = _require(rule, "matrices", "cocycle.rule")
        table = [_operator_from(m, dim, f"cocycle.rule.matrices[{i}]") for i, m in enumerate(mats)]
        return CocycleField.per_symbol(base, table)
    if kind == "per_orbit_index":
        mats = _require(rule, "matrices", "cocycle.rule")
        table = [_operator_from(m, dim, f"cocycle.rule.matrices[{i}]") for i, m in enumerate(mats)]
        return CocycleField.per_orbit_index(base, table)
    if kind == "rotation_fourier":
        const = _operator_from(_require(rule, "constant", "cocycle.rule"), dim, "cocycle.rule.constant")
        cos_c = [_operator_from(m, dim, "cocycle.rule.cos") for m in rule.get("cos", [])]
        sin_c = [_operator_from(m, dim, "cocycle.rule.sin") for m in rule.get("sin", [])]
        return CocycleField.rotation_fourier(base, const, cos_c, sin_c)
    raise ConfigError(f"cocycle.rule.kind {kind!r} is not a supported rule family")


_STEP_NAMES = {"spectrum", "entropy", "subadditive", "classify", "certify", "perturb", "probe"}


def validate_pipeline(pipeline) -> list:
    if not isinstance(pipeline, list):
        raise ConfigError("pipeline must be an array of steps")
    seen_spectrum = False
    for i, step in enumerate(pipeline):
        if not isinstance(step, dict) or "step" not in step:
            raise ConfigError(f"pipeline[{i}] must be an object with a 'step' field")
        name = step["step"]
        if name not in _STEP_NAMES:
            raise ConfigError(f"pipeline[{i}].step {name!r} unknown (choose from {sorted(_STEP_NAMES)})")
        if name == "spectrum":
            seen_spectrum = True
        if name == "certify" and not seen_spectrum:
            raise ConfigError(
                f"pipeline[{i}]: certify consumes the splitting of a prior spectrum step; add one before it"
            )
        if name == "entropy" and "p" not in step:
            raise ConfigError(f"pipeline[{i}]: entropy requires p")
        if name == "subadditive" and ("p" not in step or "n_max" not in step):
            raise ConfigError(f"pipeline[{i}]: subadditive requires p and n_max")
        if name == "classify" and ("p" not in step or "m" not in step):
            raise ConfigError(f"pipeline[{i}]: classify requires p and m")
        if name == "certify" and ("p" not in step or ("ell" not in step and "scan_ell_max" not in step)):
            raise ConfigError(f"pipeline[{i}]: certify requires p and either ell or scan_ell_max")
        if name == "perturb" and any(key not in step for key in ("p", "m", "delta", "eps")):
            raise ConfigError(f"pipeline[{i}]: perturb requires p, m, delta, eps")
    return pipeline


# -- record builders ---------------------------------------------------------


def point_record(pt) -> dict:
    if isinstance(pt, PeriodicPoint):
        return {"kind": "periodic", "index": pt.index}
    if isinstance(pt, RotationPoint):
        return {"kind": "rotation", "angle0": pt.angle0, "steps": pt.steps}
    if isinstance(pt, BernoulliPoint):
        return {"kind": "bernoulli", "stream": pt.stream, "center": pt.center}
    raise ConfigError(f"unknown point type {type(pt).__name__}")


def spectrum_record(pt, spec: lyap.LyapunovSpectrum, with_series: bool = True) -> dict:
    rec = {
        "point": point_record(pt),
        "exponents": [[v, m] for v, m in spec.finite_exponents],
        "minus_infinity_dim": spec.minus_infinity_dim,
        "unresolved_dim": spec.unresolved_dim,
        "dim": spec.truncation_dim,
        "tail_bound": spec.tail_bound,
        "iterations": spec.iterations_used,
        "residual": spec.residual,
        "group_tol": spec.group_tol,
        "neg_inf_floor": spec.neg_inf_floor,
    }
    if with_series and spec.series is not None:
        stride = max(1, len(spec.series_iterations) // _REPORT_SERIES_ROWS)
        rec["series"] = {
            "iterations": spec.series_iterations[::stride],
            "estimates": spec.series[::stride],
        }
    return rec


def certificate_record(cert: dom.DominationCertificate) -> dict:
    rec = {
        "index_p": cert.index_p,
        "ell": cert.ell,
        "verdict": cert.verdict,
        "theta": cert.theta,
        "theta_ell_measured": cert.theta_ell_measured,
        "theta_ell_implied": cert.theta_ell_implied,
        "gamma": cert.gamma,
        "max_ratio": cert.max_ratio,
        "horizon": cert.horizon,
        "witness": None,
    }
    if cert.witness is not None:
        rec["witness"] = {
            "orbit_index": cert.witness.orbit_index,
            "value": cert.witness.value,
            "u": cert.witness.u,
            "v": cert.witness.v,
        }
    return rec


def perturbation_point_record(rec: pert.PointPerturbationRecord) -> dict:
    return {
        "point": point_record(rec.point),
        "status": rec.status,
        "mechanism": rec.mechanism,
        "before": rec.before,
        "after": rec.after,
        "drop": rec.drop,
        "distance": rec.distance,
        "error": rec.error,
    }


def global_perturbation_record(report: pert.GlobalPerturbationReport) -> dict:
    return {
        "p": report.order_p,
        "m": report.scale_m,
        "scheduled_m": report.scheduled_m,
        "delta": report.budget_delta,
        "eps": report.eps,
        "branch": report.branch,
        "lambda_p": report.lambda_p,
        "lambda_next": report.lambda_next,
        "leading_sum": report.leading_sum,
        "bound_rhs": report.bound_rhs,
        "bound_met": report.bound_met,
        "nothing_to_perturb": report.nothing_to_perturb,
        "distance_achieved": report.distance_achieved,
        "points": [perturbation_point_record(r) for r in report.records],
    }


def probe_record(report: pert.ProbeReport) -> dict:
    out = []
    for r in report.records:
        rec = {
            "point": point_record(r.point),
            "branch": r.branch,
            "p": r.order_p,
            "m": r.scale_m,
            "exponents": [[v, m] for v, m in r.exponents] if r.exponents is not None else None,
            "mechanism": r.mechanism,
            "before": r.before,
            "after": r.after,
            "drop": r.drop,
            "distance": r.distance,
            "decay_check": r.decay_check,
            "error": r.error,
        }
        if r.periodic_estimate is not None:
            rec["periodic_estimate"] = {
                "branch": r.periodic_estimate.branch,
                "n_steps": r.periodic_estimate.n_steps,
                "eps_used": r.periodic_estimate.eps_used,
                "certified_m": r.periodic_estimate.certified_m,
            }
        if r.certificate is not None:
            rec["certificate"] = certificate_record(r.certificate)
        out.append(rec)
    return {
        "gamma_frequency": report.gamma_frequency,
        "gamma_confidence": report.gamma_confidence,
        "points": out,
    }


# -- execution ---------------------------------------------------------------


class Experiment:
    """Parsed and validated experiment configuration."""

    def __init__(self, cfg: dict, seed_override: int = None):
        self.raw = cfg
        seed = int(cfg.get("seed", 0)) if seed_override is None else int(seed_override)
        self.seed = seed
        try:
            self.base = build_base(_require(cfg, "base", "config"), seed)
            self.field = build_cocycle(_require(cfg, "cocycle", "config"), self.base)
        except ConfigError:
            raise
        except Exception as err:
            raise ConfigError(f"config rejected: {err}") from err
        self.pipeline = validate_pipeline(cfg.get("pipeline", []))
        knobs = cfg.get("knobs", {})
        self.n = int(knobs.get("n", 2000))
        self.horizon = knobs.get("horizon")
        self.theta_floor = float(knobs.get("theta_floor", dom.DEFAULT_THETA_FLOOR))
        self.neg_inf_floor = parse_extended_float(knobs.get("neg_inf_floor", lyap.NEG_INF_FLOOR))
        self.point_count = int(cfg.get("points", {}).get("count", 4))

    def points(self):
        if self.base.is_periodic:
            return self.base.full_orbit_points()
        return self.base.sample_measure(self.point_count)


def execute(exp: Experiment) -> list:
    """Run the pipeline; returns the list of step blocks for the report."""
    points = exp.points()
    steps_out = []
    last_spectrum_k = None
    for step in exp.pipeline:
        name = step["step"]
        block = {"step": name, "records": []}
        if name == "spectrum":
            last_spectrum_k = step.get("k")
            for pt in points:
                spec = lyap.spectrum(
                    exp.field, pt, step.get("n", exp.n),
                    k=step.get("k"), neg_inf_floor=exp.neg_inf_floor,
                )
                block["records"].append(spectrum_record(pt, spec))
        elif name == "entropy":
            for pt in points:
                val = lyap.entropy(exp.field, step["p"], pt, step.get("n", exp.n), k=last_spectrum_k)
                block["records"].append(
                    {"point": point_record(pt), "p": step["p"], "value": val}
                )
        elif name == "subadditive":
            seq = lyap.subadditive_sequence(exp.field, step["p"], step["n_max"], points)
            block["records"].append(
                {
                    "p": step["p"],
                    "n_max": step["n_max"],
                    "sample_size": len(points),
                    "a": seq.values,
                    "a_over_n": seq.ratios,
                    "running_inf": seq.running_inf,
                }
            )
        elif name == "classify":
            for pt in points:
                cls = dom.classify_point(
                    exp.field, pt, step["p"], step["m"], step.get("n", exp.n),
                    horizon=exp.horizon, theta_floor=exp.theta_floor,
                )
                rec = {"point": point_record(pt), "p": step["p"], "m": step["m"], "label": cls.label}
                if cls.certificate is not None:
                    rec["certificate"] = certificate_record(cls.certificate)
                block["records"].append(rec)
        elif name == "certify":
            for pt in points:
                try:
                    split = lyap.oseledets_splitting(exp.field, pt, step["p"], step.get("n", exp.n))
                except Exception as err:
                    block["records"].append(
                        {"point": point_record(pt), "p": step["p"], "error": str(err)}
                    )
                    continue
                if "ell" in step:
                    cert = dom.check_ell_domination(
                        exp.field, pt, split, step["ell"],
                        horizon=exp.horizon, theta_floor=exp.theta_floor,
                    )
                    found = step["ell"] if cert.dominated else None
                else:
                    found, cert = dom.find_min_ell(
                        exp.field, pt, split, step["scan_ell_max"],
                        horizon=exp.horizon, theta_floor=exp.theta_floor,
                    )
                block["records"].append(
                    {
                        "point": point_record(pt),
                        "p": step["p"],
                        "ell_star": found,
                        "certificate": certificate_record(cert),
                    }
                )
        elif name == "perturb":
            _, report = pert.global_perturbation(
                exp.field, step["p"], step["m"], step["delta"], step["eps"],
                sample=points, n_spectrum=step.get("n", exp.n),
                horizon=exp.horizon, theta_floor=exp.theta_floor,
            )
            block["records"].append(global_perturbation_record(report))
        elif name == "probe":
            cfg = pert.ProbeConfig(
                sample_count=len(points),
                n_spectrum=step.get("n", exp.n),
                horizon=exp.horizon,
                pinned_p=step.get("p"),
                pinned_m=step.get("m"),
                delta=step.get("delta", 0.2),
                eps=step.get("eps", 1e-3),
                ell_max=step.get("ell_max", 64),
                theta_floor=exp.theta_floor,
                neg_inf_floor=exp.neg_inf_floor,
            )
            report = pert.dichotomy_probe(exp.field, cfg)
            block["records"].append(probe_record(report))
        steps_out.append(block)
    return steps_out


def run_config(cfg: dict, seed_override: int = None) -> dict:
    """Execute a parsed config; returns the deterministic report body."""
    exp = Experiment(cfg, seed_override=seed_override)
    echo = dict(cfg)
    if seed_override is not None:
        echo["seed"] = int(seed_override)
    report = {
        "tool": "cocyclelab",
        "version": __version__,
        "config_hash": config_hash(echo),
        "config": _canon(echo),
        "steps": _canon(execute(exp)),
    }
    return report


def report_to_text(report: dict, timing_seconds: float = None) -> str:
    body = json.dumps(_canon(report), indent=2)
    if timing_seconds is None:
        return body + "\n"
    return body + "\n" + f'// timing: {{"seconds": {timing_seconds:.6f}}}' + "\n"


def parse_report_text(text: str) -> dict:
    return parse_config_text(text)


def run(config_path: str, out_path: str = None, seed: int = None, quiet: bool = False) -> dict:
    """Load, execute, and optionally write a report file.

    The written file is the deterministic report body plus one trailing
    timing comment line (stripped on parse).
    """
    with open(config_path, "r", encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    t0 = time.perf_counter()
    report = run_config(cfg, seed_override=seed)
    elapsed = time.perf_counter() - t0
    text = report_to_text(report, timing_seconds=elapsed)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    if not quiet:
        print(text, end="")
    return report


# -- plot data ----------------------------------------------------------------

PLOT_SERIES = ("exponent_convergence", "a_n_over_n", "entropy_before_after")


def emit_plot_data(report: dict, which: str) -> str:
    """Columnar (tab-separated, header row) data for plotting."""
    if which == "exponent_convergence":
        for block in report.get("steps", []):
            if block["step"] != "spectrum":
                continue
            for rec in block["records"]:
                series = rec.get("series")
                if not series:
                    continue
                k = len(series["estimates"][0])
                header = "iteration\t" + "\t".join(f"lambda_{i + 1}" for i in range(k))
                lines = [header]
                for it, est in zip(series["iterations"], series["estimates"]):
                    lines.append(str(it) + "\t" + "\t".join(str(v) for v in est))
                return "\n".join(lines) + "\n"
        raise MissingSeriesError("no spectrum step with a recorded series in this report")
    if which == "a_n_over_n":
        for block in report.get("steps", []):
            if block["step"] != "subadditive":
                continue
            rec = block["records"][0]
            lines = ["n\ta_n\ta_n_over_n\trunning_inf"]
            for i, (a, r, ri) in enumerate(zip(rec["a"], rec["a_over_n"], rec["running_inf"]), start=1):
                lines.append(f"{i}\t{a}\t{r}\t{ri}")
            return "\n".join(lines) + "\n"
        raise MissingSeriesError("no subadditive step in this report")
    if which == "entropy_before_after":
        for block in report.get("steps", []):
            if block["step"] == "perturb":
                for point in block["records"][0]["points"]:
                    if point.get("before") is not None:
                        return (
                            "label\tvalue\n"
                            f"before\t{point['before']}\n"
                            f"after\t{point['after']}\n"
                        )
            if block["step"] == "probe":
                for point in block["records"][0]["points"]:
                    if point.get("before") is not None:
                        return (
                            "label\tvalue\n"
                            f"before\t{point['before']}\n"
                            f"after\t{point['after']}\n"
                        )
        raise MissingSeriesError("no perturbation record with before/after entropies in this report")
    raise MissingSeriesError(f"unknown plot series {which!r} (choose from {PLOT_SERIES})")
