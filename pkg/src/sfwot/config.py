"""
Scenario configuration files.

INI-style text with four sections, ``scenario``, ``solver``, ``congestion``
and ``marginals``. Every key is optional and falls back to the defaults
below; unknown sections or keys are errors, so a mistyped ``gama`` cannot
silently leave the congestion strength at its default.

Lists are comma-separated (``departure_times = 0.0``); point lists use
semicolons between points (``source_centers = 0.25 0.5; 0.5 0.25``), and
``none`` marks a mixture component without a half-plane cut.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

from .flow import SfwConfig
from .inner import SCHEDULES, InnerSettings
from .uav import MARGINAL_KINDS, MarginalSpec, ScenarioConfig


class ConfigError(ValueError):
    pass


def _float(v):
    x = float(v)
    if math.isnan(x):
        raise ValueError("nan is not allowed")
    return x


def _int(v):
    return int(v)


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _floats(v):
    return tuple(_float(x) for x in v.split(",") if x.strip())


def _ints(v):
    return tuple(int(x) for x in v.split(",") if x.strip())


def _points(v):
    out = []
    for chunk in v.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk.lower() == "none":
            out.append(None)
        else:
            out.append(tuple(_float(x) for x in chunk.replace(",", " ").split()))
    return tuple(out)


def _kind(v):
    v = v.strip()
    if v not in MARGINAL_KINDS:
        raise ValueError(f"must be one of {', '.join(MARGINAL_KINDS)}")
    return v


def _schedule(v):
    v = v.strip()
    if v not in SCHEDULES:
        raise ValueError(f"must be one of {', '.join(SCHEDULES)}")
    return v


def _speed(v):
    v = v.strip()
    if v not in ("optimal", "arrival"):
        raise ValueError("must be 'optimal' or 'arrival'")
    return v


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 < x <= 1


def _all_nonneg(xs):
    return len(xs) > 0 and all(x >= 0 for x in xs)


def _cells(xs):
    return len(xs) == 3 and all(x >= 1 for x in xs)


# section -> key -> (parser, check or None, message, default text)
SCHEMA = {
    "scenario": {
        "horizon": (_float, _pos, "must be positive", "0.5"),
        "nx": (_int, _pos, "must be a positive integer", "60"),
        "ny": (_int, _pos, "must be a positive integer", "41"),
        "departure_times": (_floats, _all_nonneg, "must be a nonempty list of times >= 0", "0.0"),
        "arrival_times": (_floats, _all_nonneg, "must be a nonempty list of times >= 0", "0.5"),
        "lam": (_float, _pos, "must be positive", "1.0"),
        "beta": (_float, _pos, "must be positive", "0.001"),
        "epsilon": (_float, _pos, "must be positive", "0.1"),
        "speed": (_speed, None, "", "optimal"),
        "sample_count": (_int, lambda k: k >= 2, "must be at least 2", "32"),
    },
    "congestion": {
        "gamma": (_float, _nonneg, "must be nonnegative", "20.0"),
        "cells": (_ints, _cells, "must be three positive integers ct, cx, cy", "1, 4, 4"),
    },
    "solver": {
        "alpha": (_float, _unit, "must lie in (0, 1]", "0.02"),
        "max_outer": (_int, _pos, "must be a positive integer", "40"),
        "outer_tol": (_float, _nonneg, "must be nonnegative", "1e-4"),
        "inner_tol": (_float, _pos, "must be positive", "1e-4"),
        "inner_max_iters": (_int, _pos, "must be a positive integer", "30"),
        "schedule": (_schedule, None, "", "gauss_seidel"),
        "warm_start": (_bool, None, "", "true"),
        "reference_alpha": (_float, _unit, "must lie in (0, 1]", "0.04"),
        "reference_max_outer": (_int, _pos, "must be a positive integer", "400"),
        "reference_inner_tol": (_float, _pos, "must be positive", "1e-8"),
        "sweep_horizon": (_float, _pos, "must be positive", "2.0"),
    },
    "marginals": {
        "source_kind": (_kind, None, "", "half_gaussian_mixture"),
        "source_centers": (_points, None, "", "0.25 0.5; 0.5 0.25"),
        "source_scales": (_floats, None, "", "0.1, 0.1"),
        "source_weights": (_floats, None, "", "0.5, 0.5"),
        "source_normals": (_points, None, "", "-1 0; 0 -1"),
        "source_points": (_points, None, "", ""),
        "target_kind": (_kind, None, "", "point_masses"),
        "target_centers": (_points, None, "", ""),
        "target_scales": (_floats, None, "", ""),
        "target_weights": (_floats, None, "", "0.5, 0.5"),
        "target_normals": (_points, None, "", ""),
        "target_points": (_points, None, "", "0.9 0.2; 0.2 0.9"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; ``raw`` keeps the text values for echoing."""

    scenario: ScenarioConfig
    sfw: SfwConfig
    reference_alpha: float
    reference_max_outer: int
    reference_inner_tol: float
    sweep_horizon: float
    raw: dict = field(repr=False, default_factory=dict)

    def echo(self) -> str:
        """Complete config text; loading it reproduces this configuration."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {self.raw[section][key]}")
            lines.append("")
        return "\n".join(lines)


def _line_index(text):
    """``(section, key) -> line number`` by a plain scan of the file."""
    where = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), n)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), n)
    return where


def _loc(origin, where, section, key):
    n = where.get((section, key))
    return f"{origin}, line {n}" if n else origin


def parse_config(text: str, origin: str = "<config>", overrides=()) -> RunConfig:
    """Parse config text plus ``key=value`` overrides into a :class:`RunConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    where = _line_index(text)
    values = {sec: {k: spec[3] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    source = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_loc(origin, where, section, None)}: unknown section [{section}]")
        for key, val in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{_loc(origin, where, section, key)}: unknown key '{key}' in [{section}]")
            values[section][key] = val.strip()
            source[(section, key)] = _loc(origin, where, section, key)

    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        name, val = (s.strip() for s in item.split("=", 1))
        if "." in name:
            section, key = name.split(".", 1)
        else:
            owners = [sec for sec, keys in SCHEMA.items() if name in keys]
            if len(owners) != 1:
                raise ConfigError(f"--set {item!r}: unknown key '{name}'")
            section, key = owners[0], name
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"--set {item!r}: unknown key '{name}'")
        values[section][key] = val
        source[(section, key)] = f"--set {item}"

    parsed = {}
    for section, keys in SCHEMA.items():
        for key, (conv, check, msg, _) in keys.items():
            loc = source.get((section, key), "default")
            try:
                v = conv(values[section][key])
            except ValueError as exc:
                raise ConfigError(f"{loc}: {section}.{key} = {values[section][key]!r}: {exc}") from None
            if check is not None and not check(v):
                raise ConfigError(f"{loc}: {section}.{key} = {values[section][key]!r}: {msg}")
            parsed[key] = v

    def marginal(prefix):
        try:
            return MarginalSpec(
                parsed[f"{prefix}_kind"],
                centers=parsed[f"{prefix}_centers"],
                scales=parsed[f"{prefix}_scales"],
                weights=parsed[f"{prefix}_weights"],
                normals=tuple(() if n is None else n for n in parsed[f"{prefix}_normals"]),
                points=parsed[f"{prefix}_points"],
            )
        except ValueError as exc:
            raise ConfigError(f"marginals.{prefix}_kind: {exc}") from None

    try:
        scenario = ScenarioConfig(
            horizon=parsed["horizon"], nx=parsed["nx"], ny=parsed["ny"],
            departure_times=parsed["departure_times"], arrival_times=parsed["arrival_times"],
            lam=parsed["lam"], beta=parsed["beta"], epsilon=parsed["epsilon"],
            gamma=parsed["gamma"], cells=parsed["cells"], sample_count=parsed["sample_count"],
            speed=parsed["speed"], source=marginal("source"), target=marginal("target"),
        )
        sfw = SfwConfig(
            alpha=parsed["alpha"], max_outer=parsed["max_outer"], outer_tol=parsed["outer_tol"],
            inner=InnerSettings(parsed["inner_tol"], parsed["inner_max_iters"], parsed["schedule"]),
            warm_start=parsed["warm_start"],
        )
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return RunConfig(
        scenario, sfw,
        reference_alpha=parsed["reference_alpha"],
        reference_max_outer=parsed["reference_max_outer"],
        reference_inner_tol=parsed["reference_inner_tol"],
        sweep_horizon=parsed["sweep_horizon"],
        raw=values,
    )


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, origin=str(path), overrides=overrides)
