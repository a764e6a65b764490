"""Simulation configuration files.

The format is INI-like (``configparser``): a ``[simulation]`` section with the
scenario, a ``[gain]`` section with the correction law, and optional
``[schedule]`` / ``[compare]`` sections. Matrices are written as nine numbers
in row-major order; commas and semicolons are accepted as separators.

Example::

    [simulation]
    reference_image = data/texture_256x254.pgm
    h0 = 1.031 0.051 0.087; -0.051 1.031 -0.144; 0 0 0.939
    u = 0 0 -0.1; 0 0 0.1; 0 0 0
    dt = 0.01
    duration = 3

    [gain]
    variant = scalar
    k = 0.01
"""

from __future__ import annotations

import configparser
import logging
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import sl3
from .observer import DualGain, GainConfig, InverseHessianGain, ScalarGain, gain_label

log = logging.getLogger(__name__)

QUADRATURES = ("solid_angle", "uniform")
DEFAULT_SNAPSHOTS = (0.0, 0.15, 1.0)


class ConfigError(ValueError):
    """Missing, malformed or inconsistent configuration entry."""


@dataclass
class SimulationConfig:
    reference_image: str
    h0: np.ndarray
    u: np.ndarray
    gain: GainConfig
    dt: float
    duration: float
    h_hat0: np.ndarray = field(default_factory=lambda: np.eye(3))
    schedule: list = field(default_factory=list)
    quadrature: str = "solid_angle"
    snapshot_times: tuple = DEFAULT_SNAPSHOTS
    output_dir: str = "out"
    deterministic: bool = False
    variants: list = field(default_factory=list)

    def velocity(self):
        """Constant velocity, or the piecewise schedule when one is given."""
        from .observer import constant_velocity, piecewise_velocity
        if self.schedule:
            return piecewise_velocity(self.schedule)
        return constant_velocity(self.u)


def parse_matrix(text: str, name: str = "matrix") -> np.ndarray:
    parts = [p for p in re.split(r"[\s,;]+", text.strip().strip("[]")) if p]
    try:
        vals = [float(p.strip("[]")) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    if len(vals) != 9:
        raise ConfigError(f"{name}: expected 9 numbers, got {len(vals)}")
    return np.array(vals).reshape(3, 3)


def format_matrix(m) -> str:
    return "; ".join(" ".join(repr(float(v)) for v in row) for row in np.asarray(m))


def parse_gain(spec: str) -> GainConfig:
    """Parse ``scalar:K``, ``inverse_hessian:K[:RIDGE]`` or ``dual_gain:KS:KA``."""
    name, *args = [s.strip() for s in spec.split(":")]
    try:
        nums = [float(a) for a in args]
    except ValueError as exc:
        raise ConfigError(f"bad gain specification {spec!r}") from exc
    try:
        if name == "scalar" and len(nums) == 1:
            return ScalarGain(*nums)
        if name == "inverse_hessian" and len(nums) in (1, 2):
            return InverseHessianGain(*nums)
        if name == "dual_gain" and len(nums) == 2:
            return DualGain(*nums)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"bad gain specification {spec!r}")


def format_gain(gain: GainConfig) -> str:
    if isinstance(gain, ScalarGain):
        return f"scalar:{gain.k!r}"
    if isinstance(gain, InverseHessianGain):
        return f"inverse_hessian:{gain.k!r}:{gain.ridge!r}"
    return f"dual_gain:{gain.k_s!r}:{gain.k_a!r}"


def _gain_from_section(sec) -> GainConfig:
    variant = sec.get("variant", "scalar").strip()
    try:
        if variant == "scalar":
            return ScalarGain(float(sec.get("k", "0.01")))
        if variant == "inverse_hessian":
            return InverseHessianGain(float(sec.get("k", "0.01")), float(sec.get("ridge", "1e-8")))
        if variant == "dual_gain":
            return DualGain(float(sec["k_s"]), float(sec["k_a"]))
    except KeyError as exc:
        raise ConfigError(f"[gain] is missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"[gain]: {exc}") from exc
    raise ConfigError(f"unknown gain variant {variant!r}")


def _project(m, name):
    try:
        p = sl3.project_sl3(m)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    adjust = float(np.abs(p - m).max())
    if adjust > 0:
        log.info("%s projected onto SL(3): det %.9f, max entry change %.3e",
                 name, np.linalg.det(m), adjust)
    return p


def parse_config(text: str, base_dir: str = ".") -> SimulationConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "simulation" not in cp:
        raise ConfigError("missing [simulation] section")
    sim = cp["simulation"]
    try:
        ref = sim["reference_image"]
        h0 = parse_matrix(sim["h0"], "h0")
        u = parse_matrix(sim.get("u", "0 0 0 0 0 0 0 0 0"), "u")
        h_hat0 = parse_matrix(sim.get("h_hat0", "1 0 0 0 1 0 0 0 1"), "h_hat0")
        dt = float(sim["dt"])
        duration = float(sim["duration"])
        snaps = tuple(float(s) for s in re.split(r"[\s,]+", sim.get("snapshot_times", "").strip()) if s)
        deterministic = sim.getboolean("deterministic", False)
    except KeyError as exc:
        raise ConfigError(f"[simulation] is missing {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from exc
    if not dt > 0 or not duration >= dt:
        raise ConfigError("need dt > 0 and duration >= dt")
    quadrature = sim.get("quadrature", "solid_angle").strip()
    if quadrature not in QUADRATURES:
        raise ConfigError(f"quadrature must be one of {QUADRATURES}")
    try:
        u = sl3.as_algebra(u, tol=1e-9)
    except ValueError as exc:
        raise ConfigError(f"u: {exc}") from exc

    schedule = []
    if "schedule" in cp:
        for key, val in cp["schedule"].items():
            try:
                t0 = float(key)
                schedule.append((t0, sl3.as_algebra(parse_matrix(val, f"schedule {key}"), tol=1e-9)))
            except ValueError as exc:
                raise ConfigError(f"[schedule] {key}: {exc}") from exc
        schedule.sort(key=lambda s: s[0])

    gain = _gain_from_section(cp["gain"]) if "gain" in cp else ScalarGain(0.01)
    variants = []
    if "compare" in cp:
        variants = [parse_gain(s) for s in cp["compare"].get("variants", "").split(",") if s.strip()]

    if not os.path.isabs(ref):
        ref = os.path.normpath(os.path.join(base_dir, ref))
    return SimulationConfig(
        reference_image=ref,
        h0=_project(h0, "h0"),
        u=u,
        gain=gain,
        dt=dt,
        duration=duration,
        h_hat0=_project(h_hat0, "h_hat0"),
        schedule=schedule,
        quadrature=quadrature,
        snapshot_times=snaps if "snapshot_times" in sim else DEFAULT_SNAPSHOTS,
        output_dir=sim.get("output_dir", "out"),
        deterministic=deterministic,
        variants=variants,
    )


def load_config(path) -> SimulationConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: SimulationConfig) -> str:
    """Serialise ``cfg``; floats use repr so a re-parse is exact."""
    lines = [
        "[simulation]",
        f"reference_image = {cfg.reference_image}",
        f"h0 = {format_matrix(cfg.h0)}",
        f"u = {format_matrix(cfg.u)}",
        f"h_hat0 = {format_matrix(cfg.h_hat0)}",
        f"dt = {cfg.dt!r}",
        f"duration = {cfg.duration!r}",
        f"quadrature = {cfg.quadrature}",
        "snapshot_times = " + ", ".join(repr(float(t)) for t in cfg.snapshot_times),
        f"output_dir = {cfg.output_dir}",
        f"deterministic = {'true' if cfg.deterministic else 'false'}",
        "",
        "[gain]",
        f"variant = {gain_label(cfg.gain)}",
    ]
    g = cfg.gain
    if isinstance(g, ScalarGain):
        lines.append(f"k = {g.k!r}")
    elif isinstance(g, InverseHessianGain):
        lines += [f"k = {g.k!r}", f"ridge = {g.ridge!r}"]
    else:
        lines += [f"k_s = {g.k_s!r}", f"k_a = {g.k_a!r}"]
    if cfg.schedule:
        lines += ["", "[schedule]"]
        lines += [f"{t0!r} = {format_matrix(u)}" for t0, u in cfg.schedule]
    if cfg.variants:
        lines += ["", "[compare]", "variants = " + ", ".join(format_gain(v) for v in cfg.variants)]
    return "\n".join(lines) + "\n"


def with_overrides(cfg: SimulationConfig, **kw) -> SimulationConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
