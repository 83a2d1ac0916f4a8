"""Parameter sweeps, rate fits and CSV persistence.

Configuration files are flat ``key = value`` lines; list-valued keys are
repeated, one value per line::

    dimension = 1
    coefficient = paper_1d
    m_init = helix
    epsilon = 1/20
    epsilon = 1/40
    mu = 0.03
    eta = 1.5e-4
    alpha = 0.1
    kernel = 5,7,5,7        # px,qx,pt,qt

A sweep runs the Cartesian product of alpha x kernel x mu x eta x epsilon,
one micro solve per point, and reports every requested model.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import itertools
import logging
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigInvalid, Degenerate, LLHMMError
from .upscaling import MODELS, AveragingWindow, MicroSpec, UpscalingReport, upscale_all

log = logging.getLogger(__name__)

ERROR_FLOOR = 1e-14
MAX_COMPONENTS = 6
HEADER = (["model", "epsilon", "mu", "eta", "alpha", "px", "qx", "pt", "qt", "N", "dt", "error"]
          + [f"F_{i}" for i in range(MAX_COMPONENTS)]
          + [f"ref_{i}" for i in range(MAX_COMPONENTS)]
          + ["dim", "status"])

_LIST_KEYS = {"epsilon", "mu", "eta", "alpha", "kernel", "models"}
_SCALAR_KEYS = {"dimension", "coefficient", "m_init", "points_per_period", "scheme", "cfl",
                "length", "restriction", "reference", "output", "jobs", "description"}


@dataclass(frozen=True)
class SweepConfig:
    epsilons: tuple = ()
    mus: tuple = ()
    etas: tuple = ()
    alphas: tuple = ()
    kernels: tuple = ((5, 7, 5, 7),)
    dimension: int = 1
    coefficient: str = "paper_1d"
    m_init: str = "helix"
    models: tuple = MODELS
    points_per_period: int = 8
    scheme: str = "rk4_project"
    cfl: float = 0.25
    length: float = 1.0
    restriction: str = "sample"
    reference: str = "consistent"
    output: str | None = None
    jobs: int = 1
    description: str = ""

    def validate(self) -> "SweepConfig":
        problems = []
        for name in ("epsilons", "mus", "etas", "alphas", "kernels"):
            if not getattr(self, name):
                problems.append(f"{name[:-1]}: at least one value required")
        if self.dimension not in (1, 2):
            problems.append(f"dimension: must be 1 or 2, got {self.dimension}")
        for e in self.epsilons:
            n = self.length / e if e > 0 else math.inf
            if not (e > 0 and abs(n - round(n)) <= 1e-6 * n):
                problems.append(f"epsilon: {e!r} is not length/n for an integer n")
        for a in self.alphas:
            if not 0 < a <= 1:
                problems.append(f"alpha: {a!r} outside (0, 1]")
        for v in self.mus + self.etas:
            if not v > 0:
                problems.append(f"mu/eta: {v!r} must be positive")
        for k in self.kernels:
            if len(k) != 4 or any(int(x) != x or x < 0 for x in k):
                problems.append(f"kernel: {k!r} must be four non-negative integers px,qx,pt,qt")
        bad = set(self.models) - set(MODELS)
        if bad or not self.models:
            problems.append(f"models: unknown or empty {sorted(bad)}")
        if self.points_per_period < 4:
            problems.append("points_per_period: must be at least 4")
        if self.jobs < 1:
            problems.append("jobs: must be at least 1")
        if self.scheme not in ("rk4_project", "imex_midpoint"):
            problems.append(f"scheme: unknown {self.scheme!r}")
        if self.reference not in ("consistent", "continuum"):
            problems.append(f"reference: unknown {self.reference!r}")
        if problems:
            raise ConfigInvalid(problems)
        return self

    def points(self):
        for alpha, k, mu, eta, eps in itertools.product(
                self.alphas, self.kernels, self.mus, self.etas, self.epsilons):
            spec = MicroSpec(eps, alpha, self.dimension, self.coefficient, self.m_init,
                             self.points_per_period, self.scheme, self.cfl, self.length,
                             self.restriction, self.reference)
            yield spec, AveragingWindow(mu, eta, *k)


def parse_number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def parse_config(text: str) -> SweepConfig:
    """Parse the flat key/value format into a validated :class:`SweepConfig`."""
    values: dict[str, list[str]] = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _LIST_KEYS | _SCALAR_KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in _SCALAR_KEYS and key in values:
            problems.append(f"line {lineno}: {key!r} given more than once")
        values.setdefault(key, []).append(value)
    if problems:
        raise ConfigInvalid(problems)

    kw = {}
    try:
        if "epsilon" in values:
            kw["epsilons"] = tuple(parse_number(v) for v in values["epsilon"])
        for key in ("mu", "eta", "alpha"):
            if key in values:
                kw[key + "s"] = tuple(parse_number(v) for v in values[key])
        if "kernel" in values:
            kw["kernels"] = tuple(tuple(int(x) for x in v.split(",")) for v in values["kernel"])
        if "models" in values:
            kw["models"] = tuple(m.strip() for v in values["models"] for m in v.split(","))
        for key, conv in (("dimension", int), ("points_per_period", int), ("jobs", int),
                          ("cfl", float), ("length", float)):
            if key in values:
                kw[key] = conv(values[key][0])
        for key in ("coefficient", "m_init", "scheme", "restriction", "reference", "output",
                    "description"):
            if key in values:
                kw[key] = values[key][0]
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigInvalid([f"bad value: {exc}"]) from None
    return SweepConfig(**kw).validate()


def load_config(path) -> SweepConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SweepConfig) -> str:
    lines = [f"description = {cfg.description}"] if cfg.description else []
    lines += [f"dimension = {cfg.dimension}", f"coefficient = {cfg.coefficient}",
              f"m_init = {cfg.m_init}"]
    lines += [f"epsilon = {e!r}" for e in cfg.epsilons]
    lines += [f"mu = {v!r}" for v in cfg.mus]
    lines += [f"eta = {v!r}" for v in cfg.etas]
    lines += [f"alpha = {v!r}" for v in cfg.alphas]
    lines += ["kernel = " + ",".join(map(str, k)) for k in cfg.kernels]
    lines += [f"models = {','.join(cfg.models)}", f"points_per_period = {cfg.points_per_period}",
              f"scheme = {cfg.scheme}", f"cfl = {cfg.cfl!r}", f"length = {cfg.length!r}",
              f"restriction = {cfg.restriction}", f"reference = {cfg.reference}",
              f"jobs = {cfg.jobs}"]
    if cfg.output:
        lines.append(f"output = {cfg.output}")
    return "\n".join(lines) + "\n"


def _failed_reports(spec: MicroSpec, window: AveragingWindow, models, exc) -> list[UpscalingReport]:
    status = f"error:{type(exc).__name__}:{exc}".replace("\n", " ").replace(",", ";")
    out = []
    for model in models:
        shape = (spec.dim, 3) if model == "M1" else (3,)
        nan = np.full(shape, np.nan)
        n = spec.n if spec.length / spec.epsilon == round(spec.length / spec.epsilon) else 0
        out.append(UpscalingReport(model, nan, nan, math.nan, spec.epsilon, window.mu, window.eta,
                                   spec.alpha, window.px, window.qx, window.pt, window.qt, n,
                                   math.nan, spec.dim, status))
    return out


def run_point(args) -> list[UpscalingReport]:
    spec, window, models = args
    try:
        return upscale_all(spec, window, models)
    except (LLHMMError, ValueError, FloatingPointError, ArithmeticError) as exc:
        log.warning("point eps=%g mu=%g eta=%g failed: %s", spec.epsilon, window.mu, window.eta, exc)
        return _failed_reports(spec, window, models, exc)


def run_sweep(cfg: SweepConfig | list, jobs: int | None = None) -> list[UpscalingReport]:
    """Run every point of one or more configs; output sorted by parameter tuple."""
    cfgs = cfg if isinstance(cfg, (list, tuple)) else [cfg]
    tasks = []
    for c in cfgs:
        c.validate()
        tasks += [(spec, window, c.models) for spec, window in c.points()]
    jobs = jobs or max(c.jobs for c in cfgs)
    if jobs > 1 and len(tasks) > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_point, tasks))
    else:
        results = [run_point(t) for t in tasks]
    reports = [r for batch in results for r in batch]
    return sorted(reports, key=UpscalingReport.key)


# ---------------------------------------------------------------------------
# rate fitting


class RateFit(NamedTuple):
    abscissa: str
    slope: float
    intercept: float
    r2: float
    points: int
    clamped: int = 0


def fit_rate(points, window: tuple | None = None, abscissa: str = "x") -> RateFit:
    """Least-squares line through ``(log x, log E)``, optionally on ``window=(lo, hi)`` in x."""
    pts = [(float(x), float(e)) for x, e in points]
    if window is not None:
        lo, hi = window
        pts = [(x, e) for x, e in pts if lo <= x <= hi]
    if len(pts) < 3:
        raise Degenerate(f"need at least 3 points for a rate fit, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(~np.isfinite(e)) or np.any(e <= 0) or np.any(x <= 0):
        raise Degenerate("rate fit needs positive, finite values")
    clamped = int(np.sum(e < ERROR_FLOOR))
    e = np.maximum(e, ERROR_FLOOR)
    lx, le = np.log(x), np.log(e)
    slope, intercept = np.polyfit(lx, le, 1)
    resid = le - (slope * lx + intercept)
    ss = np.sum((le - le.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return RateFit(abscissa, float(slope), float(intercept), float(r2), len(pts), clamped)


# ---------------------------------------------------------------------------
# CSV persistence


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else format(v, ".17g")


def report_row(r: UpscalingReport) -> list[str]:
    F = np.ravel(r.F)
    ref = np.ravel(r.reference)
    pad = [""] * (MAX_COMPONENTS - len(F))
    return ([r.model] + [_fmt(v) for v in (r.epsilon, r.mu, r.eta, r.alpha)]
            + [str(v) for v in (r.px, r.qx, r.pt, r.qt, r.N)]
            + [_fmt(r.dt), _fmt(r.error)]
            + [_fmt(v) for v in F] + pad + [_fmt(v) for v in ref] + pad
            + [str(r.dim), r.status])


def emit(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        write_csv(reports, fh)


def write_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for r in reports:
        w.writerow(report_row(r))


def load(path) -> list[UpscalingReport]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADER:
        raise ValueError(f"{path}: unexpected header")
    out = []
    for row in rows[1:]:
        rec = dict(zip(HEADER, row))
        dim = int(rec["dim"])
        count = 3 * dim if rec["model"] == "M1" else 3
        shape = (dim, 3) if rec["model"] == "M1" else (3,)
        F = np.array([float(rec[f"F_{i}"]) for i in range(count)]).reshape(shape)
        ref = np.array([float(rec[f"ref_{i}"]) for i in range(count)]).reshape(shape)
        out.append(UpscalingReport(
            rec["model"], F, ref, float(rec["error"]), float(rec["epsilon"]), float(rec["mu"]),
            float(rec["eta"]), float(rec["alpha"]), int(rec["px"]), int(rec["qx"]), int(rec["pt"]),
            int(rec["qt"]), int(rec["N"]), float(rec["dt"]), dim, rec["status"]))
    return out


def select(reports, **match) -> list[UpscalingReport]:
    """Reports whose attributes equal every keyword given (floats compared closely)."""
    out = []
    for r in reports:
        ok = True
        for k, v in match.items():
            have = getattr(r, k)
            if isinstance(v, float):
                ok &= math.isclose(have, v, rel_tol=1e-9)
            else:
                ok &= have == v
        if ok:
            out.append(r)
    return out


# ---------------------------------------------------------------------------
# presets

EPS_1D = tuple(1 / n for n in (20, 40, 60, 80, 100, 120, 140))
EPS_1D_FINE = tuple(1 / n for n in (250, 300, 400, 500))
EPS_2D = tuple(1 / n for n in (20, 30, 40, 50, 60, 70))
EPS_2D_LARGE = tuple(1 / n for n in (20, 40, 60, 80, 100, 120, 140))
ETA_1D = (2.5e-5, 3.5e-5, 5e-5, 7e-5, 1e-4, 1.5e-4, 2e-4, 3e-4, 4.5e-4, 6e-4, 8e-4)
ETA_1D_LONG = (1.2e-3, 2e-3, 3e-3, 4e-3)
MU_1D = (0.01, 0.015, 0.02, 0.03, 0.05, 0.08, 0.12, 0.18)


@dataclass(frozen=True)
class Preset:
    name: str
    checks: str  # qualitative feature the preset verifies
    configs: tuple
    large_configs: tuple = field(default=())

    def resolve(self, large: bool = False) -> list[SweepConfig]:
        return list(self.large_configs if large and self.large_configs else self.configs)


def _c(**kw) -> SweepConfig:
    return SweepConfig(**kw)


def _presets() -> dict[str, Preset]:
    p = {}
    p["fig2"] = Preset(
        "fig2", "ordering E1 <= E2, E2/E3 within [0.5, 2], and small-epsilon slope of E1",
        (_c(epsilons=EPS_1D, mus=(0.03,), etas=(1.5e-4,), alphas=(0.01, 0.1),
            description="1D errors of M1-M3 versus epsilon"),),
        (_c(epsilons=EPS_1D + EPS_1D_FINE, mus=(0.03,), etas=(1.5e-4,), alphas=(0.01, 0.1),
            description="1D errors of M1-M3 versus epsilon, extended into the eps^2 regime"),))
    p["fig3"] = Preset(
        "fig3", "slope: q_t sets the initial decay, q_x leaves E1 unchanged",
        (_c(epsilons=EPS_1D + EPS_1D_FINE[:2], mus=(0.03,), etas=(1.5e-4,), alphas=(0.1,),
            kernels=((5, 7, 5, 7), (5, 3, 5, 7), (5, 7, 5, 3), (5, 7, 5, 5)), models=("M1",),
            description="1D M1 error for several q_x, q_t"),))
    p["fig4"] = Preset(
        "fig4", "plateau: low p_x or p_t gives an epsilon-independent error floor",
        (_c(epsilons=EPS_1D + EPS_1D_FINE[:2], mus=(0.03,), etas=(1.5e-4,), alphas=(0.1,),
            kernels=((5, 7, 5, 7), (1, 7, 5, 7), (5, 7, 1, 7)), models=("M2",),
            description="1D M2 error for several p_x, p_t"),))
    p["fig5"] = Preset(
        "fig5", "plateau: E1 falls with eta then levels off; rises again for p_t = 1",
        (_c(epsilons=(1 / 140,), mus=(0.03,), etas=ETA_1D, alphas=(0.01,),
            kernels=((5, 7, 5, 7),), models=("M1",),
            description="1D M1 error versus eta at epsilon = 1/140"),
         # the O(eta^2) bias of a p_t = 1 kernel overtakes the plateau only for eta of a few 1e-3
         _c(epsilons=(1 / 140,), mus=(0.03,), etas=ETA_1D + ETA_1D_LONG, alphas=(0.01,),
            kernels=((5, 7, 1, 7),), models=("M1",),
            description="1D M1 error versus eta at epsilon = 1/140, first-order time kernel"),
         _c(epsilons=(1 / 140,), mus=MU_1D, etas=(1.5e-4,), alphas=(0.01,),
            kernels=((5, 7, 5, 7), (1, 7, 5, 7)), models=("M1",),
            description="1D M1 error versus mu at epsilon = 1/140")))
    two_d = dict(dimension=2, coefficient="paper_2d", m_init="helix2d")
    p["fig6"] = Preset(
        "fig6", "ordering: E1 below E2 and E3 in 2D",
        (_c(epsilons=EPS_2D, mus=(0.06,), etas=(3e-4,), alphas=(0.01, 0.1),
            kernels=((5, 7, 3, 7),), description="2D errors versus epsilon", **two_d),),
        (_c(epsilons=EPS_2D_LARGE, mus=(0.06,), etas=(3e-4,), alphas=(0.01, 0.1),
            kernels=((5, 7, 3, 7),), description="2D errors versus epsilon", **two_d),))
    p["fig7"] = Preset(
        "fig7", "plateau: low p_x or p_t gives an error floor in 2D",
        (_c(epsilons=EPS_2D, mus=(0.06,), etas=(3e-4,), alphas=(0.1,),
            kernels=((5, 7, 3, 7), (1, 7, 3, 7), (5, 7, 1, 7), (5, 7, 3, 3)), models=("M1", "M2"),
            description="2D M1/M2 error for several kernels", **two_d),),
        (_c(epsilons=EPS_2D_LARGE, mus=(0.06,), etas=(3e-4,), alphas=(0.1,),
            kernels=((5, 7, 3, 7), (1, 7, 3, 7), (5, 7, 1, 7), (5, 7, 3, 3)), models=("M1", "M2"),
            description="2D M1/M2 error for several kernels", **two_d),))
    eta_2d = (5e-5, 1e-4, 2e-4, 3e-4, 4.5e-4, 6e-4)
    p["fig8"] = Preset(
        "fig8", "plateau: errors level off once eta exceeds about 2 epsilon^2",
        (_c(epsilons=(1 / 40, 1 / 60), mus=(0.06,), etas=eta_2d, alphas=(0.01,),
            kernels=((5, 7, 3, 7),), models=("M1", "M2"),
            description="2D M1/M2 error versus eta", **two_d),),
        (_c(epsilons=(1 / 70, 1 / 120), mus=(0.06,), etas=eta_2d, alphas=(0.01,),
            kernels=((5, 7, 3, 7),), models=("M1", "M2"),
            description="2D M1/M2 error versus eta", **two_d),))
    mu_2d = (0.02, 0.03, 0.045, 0.06, 0.09, 0.12)
    p["fig9"] = Preset(
        "fig9", "plateau: errors level off once mu exceeds about 3 epsilon",
        (_c(epsilons=(1 / 70,), mus=mu_2d, etas=(4.5e-4,), alphas=(0.01,),
            kernels=((5, 7, 3, 7),), models=("M1", "M2"),
            description="2D M1/M2 error versus mu", **two_d),),
        (_c(epsilons=(1 / 70,), mus=mu_2d, etas=(4.5e-4,), alphas=(0.01,),
            kernels=((5, 7, 3, 7),), models=("M1", "M2"),
            description="2D M1/M2 error versus mu", **two_d),
         _c(epsilons=(1 / 120,), mus=mu_2d, etas=(2e-4,), alphas=(0.01,),
            kernels=((5, 7, 3, 7),), models=("M1", "M2"),
            description="2D M1/M2 error versus mu", **two_d)))
    return p


PRESETS = _presets()


def get_preset(name: str, large: bool = False) -> list[SweepConfig]:
    if name not in PRESETS:
        raise ConfigInvalid([f"preset: unknown {name!r}; available {sorted(PRESETS)}"])
    return PRESETS[name].resolve(large)


# ---------------------------------------------------------------------------
# qualitative checks on sweep output


class Check(NamedTuple):
    label: str
    passed: bool
    detail: str


def _series(reports, model, x="epsilon", **match):
    rs = [r for r in select(reports, model=model, **match) if r.status == "ok"]
    return sorted(((getattr(r, x), r.error) for r in rs))


def eta_profile_checks(series, decrease_orders=2.0, plateau_rtol=0.2) -> list[Check]:
    """Initial drop by ``decrease_orders`` decades, then a flat tail (top two etas)."""
    errs = [e for _, e in series]
    drop = math.log10(errs[0] / min(errs))
    top = abs(errs[-1] - errs[-2]) / errs[-2]
    return [Check("initial decrease", drop >= decrease_orders, f"{drop:.2f} decades"),
            Check("plateau", top < plateau_rtol, f"relative change {top:.3f} over top two eta")]


def rise_after_plateau(series) -> Check:
    errs = [e for _, e in series]
    k = int(np.argmin(errs))
    ok = k < len(errs) - 1 and errs[-1] > 2 * errs[k]
    return Check("rises after minimum", ok, f"min at index {k}, last/min = {errs[-1] / errs[k]:.3g}")


def check_preset(name: str, reports) -> list[Check]:
    out = []
    if name in ("fig2", "fig6"):
        for alpha in sorted({r.alpha for r in reports}):
            s1 = dict(_series(reports, "M1", alpha=alpha))
            s2 = dict(_series(reports, "M2", alpha=alpha))
            s3 = dict(_series(reports, "M3", alpha=alpha))
            order = all(s1[e] <= s2[e] for e in s1 if e in s2)
            out.append(Check(f"alpha={alpha}: E1 <= E2", order, ""))
            ratios = [s2[e] / s3[e] for e in s2 if e in s3]
            out.append(Check(f"alpha={alpha}: E2/E3 in [0.5, 2]",
                             all(0.5 <= q <= 2 for q in ratios),
                             f"range [{min(ratios):.3g}, {max(ratios):.3g}]"))
            if len(s1) >= 3:
                fit = fit_rate(sorted(s1.items())[:3], abscissa="epsilon")
                out.append(Check(f"alpha={alpha}: small-eps slope of E1 in [1.7, 2.3]",
                                 1.7 <= fit.slope <= 2.3, f"slope {fit.slope:.3f}"))
    elif name == "fig5":
        for pt in (5, 1):
            s = _series(reports, "M1", x="eta", pt=pt, mu=0.03)
            if s and pt == 5:
                out += eta_profile_checks(s)
            elif s:
                out.append(rise_after_plateau(s))
    elif name in ("fig3", "fig4", "fig7"):
        model = {"fig3": "M1", "fig4": "M2", "fig7": "M1"}[name]
        kernels_seen = sorted({(r.px, r.qx, r.pt, r.qt) for r in reports})
        finals = {}
        for k in kernels_seen:
            s = _series(reports, model, px=k[0], qx=k[1], pt=k[2], qt=k[3])
            if s:
                finals[k] = s[0][1]
        base = finals.get((5, 7, 5, 7)) or finals.get((5, 7, 3, 7))
        for k, v in finals.items():
            out.append(Check(f"kernel {k}: error at smallest epsilon", True,
                             f"{v:.3e} (baseline {base:.3e})" if base else f"{v:.3e}"))
    elif name in ("fig8", "fig9"):
        x = "eta" if name == "fig8" else "mu"
        for eps in sorted({r.epsilon for r in reports}):
            for model in ("M1", "M2"):
                s = _series(reports, model, x=x, epsilon=eps)
                if len(s) >= 2:
                    errs = [e for _, e in s]
                    out.append(Check(f"{model} eps={eps:.4g}: error decreases along {x}",
                                     errs[-1] < errs[0], f"{errs[0]:.3e} -> {errs[-1]:.3e}"))
    return out
