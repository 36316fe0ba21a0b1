"""Experiment configuration, orchestration, and result persistence.

A single JSON document describes one experiment: the offspring law, the
driving Lévy process, the parameter ladder, the functionals (named presets
only), replica budget, and seed.  run() executes the ladder and pairs every
Monte Carlo estimate with its deterministic target; emit() writes the rows
as CSV or JSON plus optional plot series.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import presets as preset_lib
from .estimators import (
    estimate_conditional,
    estimate_m_tail,
    estimate_thm1_lhs,
    estimate_thm2_lhs,
)
from .levy import LevyError, llt_error, make_driver
from .offspring import (
    BranchingConfig,
    OffspringError,
    cee_alpha,
    make_slack_offspring,
    make_vector_offspring,
    survival_ode,
)
from .pde import solve_scaled_field, thm1_rhs, thm2_rhs, thm3_targets

EXPERIMENTS = (
    "thm1", "thm2", "thm3-vague", "thm3-weak", "survival",
    "m-tail", "llt", "pde-only", "scaled-vs-limit",
)

CSV_HEADER = ("experiment,param,estimate,stderr,target,gap,gap_sigmas,"
              "runtime_s,exploded,seed")


class ConfigError(ValueError):
    pass


_INDICATOR_RE = re.compile(r"^indicator\(\s*([-\d.eE+]+)\s*,\s*([-\d.eE+]+)\s*\)$")
_CONSTANT_RE = re.compile(r"^constant\(\s*([-\d.eE+]+)\s*\)$")


def resolve_preset(desc: Optional[str]):
    """Named functional descriptor -> (callable, integral over the line)."""
    if desc is None or desc == "":
        return None, 0.0
    if desc == "triangle":
        return preset_lib.triangle, 1.0
    m = _INDICATOR_RE.match(desc)
    if m:
        a, b = float(m.group(1)), float(m.group(2))
        if not b > a:
            raise ConfigError(f"indicator needs a < b, got {desc!r}")
        return preset_lib.indicator(a, b), b - a
    m = _CONSTANT_RE.match(desc)
    if m:
        theta = float(m.group(1))
        if theta < 0:
            raise ConfigError(f"constant preset must be nonnegative: {desc!r}")
        return preset_lib.constant(theta), math.inf
    raise ConfigError(f"unknown preset {desc!r}; see the presets subcommand")


@dataclass
class ExperimentConfig:
    experiment: str
    law: BranchingConfig
    driver: object
    t_ladder: tuple
    replicas: int
    master_seed: int
    y: float = 0.0
    A: Optional[tuple] = None
    g: Optional[str] = None
    h: Optional[str] = None
    out: Optional[str] = None
    workers: int = 1
    pde: dict = field(default_factory=dict)


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")

    law_doc = doc.get("law", {})
    beta = float(doc.get("beta", 1.0))
    try:
        family = law_doc.get("family", "slack")
        if family == "slack":
            law = make_slack_offspring(float(law_doc.get("alpha", 2.0)),
                                       float(law_doc.get("c", 0.5)))
        elif family == "vector":
            law = make_vector_offspring(law_doc["probs"])
        else:
            raise ConfigError(f"unknown offspring family {family!r}")
        config = BranchingConfig(law, beta,
                                 event_cap=int(doc.get("event_cap", 10 ** 8)))
    except (OffspringError, KeyError, TypeError) as e:
        raise ConfigError(f"bad law block: {e}") from e

    drv_doc = doc.get("driver", {})
    try:
        driver = make_driver(drv_doc.get("kind", "brownian"),
                             sigma=drv_doc.get("sigma"),
                             jump_rate=drv_doc.get("jump_rate"),
                             jump_half_width=drv_doc.get("jump_half_width"))
    except LevyError as e:
        raise ConfigError(f"bad driver block: {e}") from e

    ladder = tuple(float(v) for v in doc.get("t_ladder", ()))
    if len(ladder) == 0:
        raise ConfigError("t_ladder must be a nonempty increasing list")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("t_ladder must be strictly increasing")

    replicas = int(doc.get("replicas", 0))
    if replicas < 1 and exp not in ("pde-only", "llt", "scaled-vs-limit"):
        raise ConfigError("replicas must be >= 1")

    A = doc.get("A")
    if A is not None:
        A = (float(A[0]), float(A[1]))
        if not A[1] > A[0]:
            raise ConfigError("A must be a nondegenerate interval")

    # resolve now so bad descriptors fail at validation time
    for key in ("g", "h"):
        resolve_preset(doc.get(key))
    if doc.get("h") is not None:
        _, mass = resolve_preset(doc.get("h"))
        if not math.isfinite(mass):
            raise ConfigError("h must be integrable (constant presets are not)")

    return ExperimentConfig(
        experiment=exp, law=config, driver=driver, t_ladder=ladder,
        replicas=max(replicas, 0), master_seed=int(doc.get("master_seed", 0)),
        y=float(doc.get("y", 0.0)), A=A, g=doc.get("g"), h=doc.get("h"),
        out=doc.get("out"), workers=int(doc.get("workers", 1)),
        pde=doc.get("pde", {}),
    )


def config_from_json(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(doc)


@dataclass
class ResultRow:
    experiment: str
    param: float | str
    estimate: float
    stderr: float
    target: Optional[float]
    gap: Optional[float]
    gap_sigmas: Optional[float]
    runtime_s: float
    exploded: int
    seed: int


def _row(exp, param, estimate, stderr, target, t0, exploded, seed):
    gap = None if target is None else estimate - target
    sigmas = gap / stderr if (gap is not None and stderr > 0) else None
    return ResultRow(exp, param, estimate, stderr, target, gap, sigmas,
                     time.perf_counter() - t0, exploded, seed)


def run(cfg: ExperimentConfig) -> list:
    """Execute one experiment over its ladder; deterministic given the seed."""
    law = cfg.law.offspring
    alpha = law.alpha
    beta = cfg.law.branching_rate
    cee = cee_alpha(law, beta)
    expo = 1.0 / (alpha - 1.0)
    g_fn, g_mass = resolve_preset(cfg.g)
    h_fn, h_mass = resolve_preset(cfg.h)
    A = cfg.A if cfg.A is not None else (-1.0, 1.0)
    rows = []

    if cfg.experiment == "survival":
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            rec = estimate_thm2_lhs(cfg.law, cfg.driver, cfg.y, t,
                                    (-1e9, 1e9), cfg.replicas,
                                    cfg.master_seed, cfg.workers)
            scale = t ** expo
            target = float(survival_ode(law, beta, t))
            rows.append(_row("survival", t, rec.value / scale,
                             rec.stderr / scale, target, t0, rec.exploded,
                             cfg.master_seed))

    elif cfg.experiment == "thm1":
        target = thm1_rhs(alpha, cee, g_fn, h_mass, cfg.y)
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            rec = estimate_thm1_lhs(cfg.law, cfg.driver, cfg.y, t, h_fn, g_fn,
                                    cfg.replicas, cfg.master_seed, cfg.workers)
            rows.append(_row("thm1", t, rec.value, rec.stderr, target, t0,
                             rec.exploded, cfg.master_seed))

    elif cfg.experiment == "thm2":
        target = thm2_rhs(alpha, cee, cfg.y)
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            rec = estimate_thm2_lhs(cfg.law, cfg.driver, cfg.y, t, A,
                                    cfg.replicas, cfg.master_seed, cfg.workers)
            rows.append(_row("thm2", t, rec.value, rec.stderr, target, t0,
                             rec.exploded, cfg.master_seed))

    elif cfg.experiment in ("thm3-vague", "thm3-weak"):
        mode = cfg.experiment.split("-")[1]
        A1, A2, A3 = thm3_targets(alpha, cee, g_fn if mode == "weak" else None,
                                  g_mass if mode == "vague" else 0.0, cfg.y)
        if mode == "vague":
            target = 1.0 - A2 / A1
        else:
            B = thm1_rhs(alpha, cee, g_fn, 0.0, cfg.y) if g_fn else 0.0
            target = (A3 - B) / A1
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            rec = estimate_conditional(cfg.law, cfg.driver, cfg.y, t, A, g_fn,
                                       mode, cfg.replicas, cfg.master_seed,
                                       cfg.workers)
            rows.append(_row(cfg.experiment, t, rec.value, rec.stderr, target,
                             t0, rec.exploded, cfg.master_seed))

    elif cfg.experiment == "m-tail":
        t0 = time.perf_counter()
        slope, records = estimate_m_tail(cfg.law, cfg.driver, cfg.t_ladder,
                                         cfg.replicas, cfg.master_seed,
                                         cfg.workers)
        for x, rec in zip(cfg.t_ladder, records):
            rows.append(_row("m-tail", x, rec.value, rec.stderr, None, t0,
                             rec.exploded, cfg.master_seed))
        rows.append(_row("m-tail", "slope", slope, 0.0, -2.0 * expo, t0,
                         records[0].exploded, cfg.master_seed))

    elif cfg.experiment == "llt":
        if h_fn is None:
            raise ConfigError("llt experiment needs an h preset")
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            eps = llt_error(cfg.driver, t, h_fn)
            rows.append(_row("llt", t, eps, 0.0, None, t0, 0,
                             cfg.master_seed))

    elif cfg.experiment == "pde-only":
        t0 = time.perf_counter()
        value = thm1_rhs(alpha, cee, g_fn, h_mass, cfg.y)
        target = None
        m = _CONSTANT_RE.match(cfg.g or "")
        if m and h_fn is None:
            theta = float(m.group(1))
            # flat data evolves by the absorption ODE alone
            target = (theta ** (1.0 - alpha)
                      + (alpha - 1.0) * cee) ** (-expo) if theta > 0 else 0.0
        rows.append(_row("pde-only", cfg.y, value, 0.0, target, t0, 0,
                         cfg.master_seed))

    else:  # scaled-vs-limit
        target = thm1_rhs(alpha, cee, g_fn, h_mass, cfg.y)
        for t in cfg.t_ladder:
            t0 = time.perf_counter()
            f = solve_scaled_field(t, cfg.driver, law, beta, g_fn, h_fn)
            rows.append(_row("scaled-vs-limit", t, f.at(1.0, cfg.y), 0.0,
                             target, t0, 0, cfg.master_seed))

    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER.split(","))
    for r in rows:
        w.writerow([r.experiment, _fmt(r.param), _fmt(r.estimate),
                    _fmt(r.stderr), _fmt(r.target), _fmt(r.gap),
                    _fmt(r.gap_sigmas), _fmt(round(r.runtime_s, 3)),
                    r.exploded, r.seed])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)


def rows_from_json(text: str) -> list:
    return [ResultRow(**d) for d in json.loads(text)]


def emit(rows, out_path: str, fmt: str = "csv", plot_data: bool = False):
    """Write rows to out_path; returns the list of files written."""
    if not rows:
        raise ConfigError("no rows to emit")
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    written = []
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    with open(out_path, "w") as fh:
        fh.write(text)
    written.append(out_path)
    if plot_data:
        stem = out_path.rsplit(".", 1)[0]
        labels = []
        for r in rows:
            if r.experiment not in labels:
                labels.append(r.experiment)
        for label in labels:
            series = stem + f".{label}.series.csv"
            with open(series, "w") as fh:
                fh.write("param,estimate,stderr,target\n")
                for r in rows:
                    if r.experiment == label:
                        fh.write(",".join([_fmt(r.param), _fmt(r.estimate),
                                           _fmt(r.stderr),
                                           _fmt(r.target)]) + "\n")
            written.append(series)
    return written


def check_rows(rows) -> list:
    """Rows breaching |gap| > max(3 stderr, 10% of |target|)."""
    bad = []
    for r in rows:
        if r.target is None or r.gap is None:
            continue
        tol = max(3.0 * r.stderr, 0.1 * abs(r.target))
        if abs(r.gap) > tol:
            bad.append(r)
    return bad
