"""Flat key = value configuration files and CSV/text writers.

A run configuration looks like::

    p = 0.5
    L = auto                 # or a number; auto sizes the domain from the tail bound
    dx = 0.05                # or nx = <odd count>
    dt = 0.01
    t_end = 100
    output_times = 1, 2, 5, 10, 20, 50, 100
    datum = tent             # or datum_knots / datum_values lists
    boundary_mode = homogeneous_state
    domain_tol = 1e-12

Sweep files add ``p_values`` (which replaces ``p``), ``rate_window``,
``slope_tol``, ``band`` and optionally ``rate_samples``.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import BoundaryMode, ConfigError, InitialDatum, ProblemParams, SimConfig, make_tent_datum
from .solver import RunResult, choose_domain

RUN_KEYS = {"p", "l", "nx", "dx", "dt", "t_end", "output_times", "datum", "datum_knots",
            "datum_values", "boundary_mode", "domain_tol"}
SWEEP_KEYS = RUN_KEYS | {"p_values", "rate_window", "slope_tol", "band", "rate_samples"}


def fmt(v: float) -> str:
    """Full double precision, locale independent."""
    return format(float(v), ".17g")


def _number(key: str, text: str) -> float:
    try:
        return float(Fraction(text.strip())) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"not a number: {text!r}") from None


def _numbers(key: str, text: str) -> list[float]:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    if not items:
        raise ConfigError(key, "empty list")
    return [_number(key, s) for s in items]


def read_flat(path) -> dict[str, str]:
    """Parse a section-less ``key = value`` file (``#`` comments allowed)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    text = Path(path).read_text()
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    return dict(parser["config"])


@dataclass(frozen=True)
class RunSpec:
    datum: InitialDatum
    params: ProblemParams
    config: SimConfig
    domain_tol: float


def parse_datum(raw: dict[str, str]) -> InitialDatum:
    if "datum_knots" in raw or "datum_values" in raw:
        if "datum_knots" not in raw or "datum_values" not in raw:
            raise ConfigError("datum", "inline datum needs both datum_knots and datum_values")
        return InitialDatum(tuple(_numbers("datum_knots", raw["datum_knots"])),
                            tuple(_numbers("datum_values", raw["datum_values"])))
    name = raw.get("datum", "tent").strip().lower()
    if name != "tent":
        raise ConfigError("datum", f"unknown preset {name!r} (only 'tent' is built in)")
    return make_tent_datum()


def build_config(raw: dict[str, str], datum: InitialDatum, output_times=None) -> tuple[SimConfig, float]:
    for key in ("dt", "t_end"):
        if key not in raw:
            raise ConfigError(key, "missing")
    t_end = _number("t_end", raw["t_end"])
    dt = _number("dt", raw["dt"])
    if not t_end > 0:
        raise ConfigError("t_end", "must be positive")
    if not dt > 0:
        raise ConfigError("dt", "must be positive")
    domain_tol = _number("domain_tol", raw.get("domain_tol", "1e-12"))
    if not 0 < domain_tol < 1:
        raise ConfigError("domain_tol", "must lie in (0, 1)")
    required = choose_domain(t_end, domain_tol, datum.mass)
    l_text = raw.get("l", "auto").strip().lower()
    half_width = required if l_text == "auto" else _number("L", l_text)
    if half_width < required * (1 - 1e-12):
        raise ConfigError("L", f"{half_width:g} is below {required:.6g}, the half width needed for "
                               f"t_end={t_end:g} at tail tolerance {domain_tol:g}")
    if output_times is None:
        output_times = _numbers("output_times", raw.get("output_times", fmt(t_end)))
    mode = raw.get("boundary_mode", BoundaryMode.HOMOGENEOUS_STATE.value).strip()
    try:
        mode = BoundaryMode(mode)
    except ValueError:
        raise ConfigError("boundary_mode", f"unknown mode {mode!r}") from None
    common = dict(t_end=t_end, dt=dt, output_times=tuple(output_times), boundary_mode=mode)
    if "nx" in raw:
        nx = _number("nx", raw["nx"])
        # a given nx fixes the grid; widen L only through the explicit key
        return SimConfig(half_width=half_width, nx=int(nx) if nx == int(nx) else -1, **common), domain_tol
    dx = _number("dx", raw.get("dx", "0.05"))
    if not dx > 0:
        raise ConfigError("dx", "must be positive")
    return SimConfig.from_spacing(half_width, dx, **common), domain_tol


def load_run_spec(path) -> RunSpec:
    raw = read_flat(path)
    unknown = set(raw) - RUN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if "p" not in raw:
        raise ConfigError("p", "missing")
    params = ProblemParams(_number("p", raw["p"]))
    datum = parse_datum(raw)
    config, tol = build_config(raw, datum)
    return RunSpec(datum, params, config, tol)


@dataclass(frozen=True)
class SweepSpec:
    p_values: tuple[float, ...]
    datum: InitialDatum
    config: SimConfig
    domain_tol: float
    rate_window: tuple[float, float]
    slope_tol: float
    band: float


def log_spaced_times(t_lo: float, t_hi: float, n: int, dt: float) -> tuple[float, ...]:
    """About ``n`` log-spaced times in [t_lo, t_hi], snapped to multiples of ``dt``."""
    ks = np.unique(np.round(np.geomspace(t_lo, t_hi, n) / dt).astype(np.int64))
    return tuple(float(k * dt) for k in ks if k > 0)


def load_sweep_spec(path) -> SweepSpec:
    raw = read_flat(path)
    unknown = set(raw) - SWEEP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if "p_values" not in raw:
        raise ConfigError("p_values", "missing")
    p_values = tuple(_numbers("p_values", raw["p_values"]))
    for p in p_values:
        ProblemParams(p)
    if len(set(p_values)) != len(p_values):
        raise ConfigError("p_values", "values must be distinct")
    datum = parse_datum(raw)
    t_end = _number("t_end", raw.get("t_end", "200"))
    window = tuple(_numbers("rate_window", raw.get("rate_window", f"{fmt(t_end / 10)},{fmt(t_end)}")))
    if len(window) != 2 or not 1.0 <= window[0] < window[1] <= t_end:
        raise ConfigError("rate_window", "need two increasing times within [1, t_end]")
    dt = _number("dt", raw.get("dt", "0.01"))
    times = None
    if "output_times" not in raw:
        n = int(_number("rate_samples", raw.get("rate_samples", "40")))
        times = log_spaced_times(1.0, t_end, n, dt)
    config, tol = build_config(raw, datum, output_times=times)
    return SweepSpec(p_values, datum, config, tol, (window[0], window[1]),
                     _number("slope_tol", raw.get("slope_tol", "0.05")),
                     _number("band", raw.get("band", "1e-9")))


# -- writers -----------------------------------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def frame_filename(t: float) -> str:
    return f"frame_t{float(t):.10g}.csv"


def write_frames(result: RunResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fr in result.frames:
        path = out / frame_filename(fr.t)
        with open(path, "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(("x", "u"))
            w.writerows((fmt(x), fmt(u)) for x, u in zip(result.grid, fr.values))
        paths.append(path)
    return paths


def write_deviation(result: RunResult, path: Path) -> None:
    from .core import u_h

    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(("t", "sup_deviation", "u_h"))
        for t, dev in result.deviation:
            w.writerow((fmt(t), fmt(dev), fmt(u_h(t, result.params.p))))


def write_diagnostics(diag: dict, path: Path) -> None:
    lines = []
    for k, v in diag.items():
        lines.append(f"{k} = {fmt(v) if isinstance(v, float) else v}")
    path.write_text("\n".join(lines) + "\n")


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
