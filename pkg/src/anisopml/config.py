"""Scenario files: parsing, validation, derived quantities and presets.

Scenarios are INI files (``configparser``). All quantities are SI::

    [material]
    kind = isotropic            ; or voigt
    density = 2500              ; kg/m^3
    lambda = 2.7e10             ; Pa      (isotropic)
    mu = 2.9e10                 ; Pa      (isotropic)
    voigt = c11, c12, ..., c66  ; Pa, 21 upper-triangle entries (voigt)
    viscosity_voigt = ...       ; Pa s, 21 entries, optional

    [grid]
    nodes_per_wavelength = 10   ; h = c_min / (N f0); or give spacing (m)
    physical_half_width = 0.01  ; m

    [pml]
    cells = 4
    order = 2
    reflection_target = 1e-3    ; scalar or three per-axis values
    ; beta0 = ...               ; 1/s, overrides reflection_target

    [source]
    kind = dirichlet_shell      ; or body_force_point
    f0 = 1e6                    ; Hz
    t0 = 1e-6                   ; s
    center = 0, 0, 0            ; m
    radius = 1e-3               ; m
    direction = 1, 0, 0         ; body force only
    amplitude = 1

    [time]
    t_end = 5e-6                ; s; or traversals = 2 (slowest wave crosses 2x0 that often after 2 t0)
    cfl_safety = 0.5

    [output]
    directory = out
    energy_every = 8
    snapshot_every = 0

    [run]
    mode = elastic              ; or viscoelastic
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import GridSpec, mesh_size
from .materials import (
    MBAR,
    OLIVINE_CONSTANTS_MBAR,
    OLIVINE_DEFAULT_DENSITY,
    Material,
    MaterialError,
    StiffnessTensor,
    ViscosityTensor,
    isotropic_stiffness,
    orthorhombic_stiffness,
    speed_bounds,
)
from .pml import DEFAULT_CELLS, DEFAULT_ORDER, DEFAULT_REFLECTION, beta0_from_reflection
from .solver import DEFAULT_CFL_SAFETY, cfl_time_step, viscous_time_step
from .sources import SHELL_MIN_CELLS, SourceSpec

OUTPUT_ENV = "ANISOPML_OUT"
DIRECTION_SAMPLES = 2000


class ConfigError(ValueError):
    """A named validation check failed."""

    def __init__(self, check: str, message: str):
        self.check = check
        super().__init__(f"[{check}] {message}")


@dataclass(frozen=True)
class SimulationConfig:
    material: Material
    physical_half_width: float
    source: SourceSpec
    nodes_per_wavelength: float | None = 10.0
    spacing_override: float | None = None
    pml_cells: int = DEFAULT_CELLS
    pml_order: int = DEFAULT_ORDER
    reflection_target: tuple[float, float, float] = (DEFAULT_REFLECTION,) * 3
    beta0_override: tuple[float, float, float] | None = None
    t_end_override: float | None = None
    traversals: float | None = None
    cfl_safety: float = DEFAULT_CFL_SAFETY
    mode: str = "elastic"
    output_directory: str | None = None
    energy_every: int = 8
    snapshot_every: int = 0
    direction_samples: int = DIRECTION_SAMPLES
    # derived
    c_min: float = field(default=math.nan, compare=False)
    c_max: float = field(default=math.nan, compare=False)
    spacing: float = field(default=math.nan, compare=False)
    dt: float = field(default=math.nan, compare=False)
    t_end: float = field(default=math.nan, compare=False)
    beta0: tuple[float, float, float] = field(default=(math.nan,) * 3, compare=False)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.spacing, self.physical_half_width, self.pml_cells)

    @property
    def n_steps(self) -> int:
        if self.t_end <= 0:
            return 0
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def output_dir(self) -> Path | None:
        d = self.output_directory or os.environ.get(OUTPUT_ENV)
        return Path(d) if d else None

    def material_for_mode(self) -> Material:
        if self.mode == "elastic" and self.material.viscosity is not None:
            return Material(self.material.density, self.material.stiffness, None)
        return self.material

    def derived(self) -> dict:
        g = self.grid
        return {
            "c_min": self.c_min,
            "c_max": self.c_max,
            "h0": self.spacing,
            "grid_nodes": g.n,
            "physical_half_width": g.physical_half_width,
            "pml_thickness": g.pml_thickness,
            "dt": self.dt,
            "t_end": self.t_end,
            "steps": self.n_steps,
            "beta0_1": self.beta0[0],
            "beta0_2": self.beta0[1],
            "beta0_3": self.beta0[2],
        }


def _floats(text: str, n: int | None, key: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError("parse", f"{key}: cannot read numbers from {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError("parse", f"{key}: expected {n} values, got {len(vals)}")
    return vals


def _per_axis(text: str, key: str) -> tuple[float, float, float]:
    vals = _floats(text, None, key)
    if len(vals) == 1:
        return vals * 3
    if len(vals) != 3:
        raise ConfigError("parse", f"{key}: expected 1 or 3 values, got {len(vals)}")
    return vals


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.sec = parser[name] if parser.has_section(name) else {}

    def get(self, key, default=None, required=False):
        if key in self.sec:
            return self.sec[key]
        if required:
            raise ConfigError("parse", f"missing key {self.name}.{key}")
        return default

    def num(self, key, default=None, required=False, kind=float):
        raw = self.get(key, None, required)
        if raw is None:
            return default
        try:
            return kind(raw) if kind is float else kind(float(raw))
        except ValueError:
            raise ConfigError("parse", f"{self.name}.{key}: not a number: {raw!r}") from None


def _parse_material(sec: _Section) -> Material:
    kind = sec.get("kind", "isotropic").strip().lower()
    density = sec.num("density", required=True)
    if not (math.isfinite(density) and density > 0):
        raise ConfigError("material.density", f"density must be positive, got {density}")
    try:
        if kind == "isotropic":
            stiff = isotropic_stiffness(sec.num("lambda", required=True), sec.num("mu", required=True))
            StiffnessTensor(stiff.voigt)  # the zero tensor is no medium
        elif kind == "voigt":
            stiff = StiffnessTensor.from_upper_triangle(_floats(sec.get("voigt", required=True), 21, "material.voigt"))
        else:
            raise ConfigError("material.kind", f"unknown material kind {kind!r}")
        visc = None
        raw = sec.get("viscosity_voigt")
        if raw is not None:
            visc = ViscosityTensor.from_upper_triangle(_floats(raw, 21, "material.viscosity_voigt"))
    except MaterialError as exc:
        raise ConfigError("material.stiffness", str(exc)) from None
    return Material(density, stiff, visc)


def parse_config(text: str, source_name: str = "<string>") -> SimulationConfig:
    """Parse scenario text into an unresolved :class:`SimulationConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source_name)
    except configparser.Error as exc:
        raise ConfigError("parse", str(exc)) from None

    material = _parse_material(_Section(parser, "material"))
    g = _Section(parser, "grid")
    p = _Section(parser, "pml")
    s = _Section(parser, "source")
    t = _Section(parser, "time")
    o = _Section(parser, "output")
    r = _Section(parser, "run")

    src_kind = s.get("kind", "dirichlet_shell").strip()
    try:
        source = SourceSpec(
            kind=src_kind,
            f0=s.num("f0", required=True),
            t0=s.num("t0", 0.0),
            center=_floats(s.get("center", "0 0 0"), 3, "source.center"),
            radius=s.num("radius", 0.0),
            direction=_floats(s.get("direction", "1 0 0"), 3, "source.direction"),
            amplitude=s.num("amplitude", 1.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("source", str(exc)) from None

    beta0 = p.get("beta0")
    return SimulationConfig(
        material=material,
        physical_half_width=g.num("physical_half_width", required=True),
        source=source,
        nodes_per_wavelength=g.num("nodes_per_wavelength", None if g.get("spacing") else 10.0),
        spacing_override=g.num("spacing", None),
        pml_cells=p.num("cells", DEFAULT_CELLS, kind=int),
        pml_order=p.num("order", DEFAULT_ORDER, kind=int),
        reflection_target=_per_axis(p.get("reflection_target", repr(DEFAULT_REFLECTION)), "pml.reflection_target"),
        beta0_override=None if beta0 is None else _per_axis(beta0, "pml.beta0"),
        t_end_override=t.num("t_end", None),
        traversals=t.num("traversals", None),
        cfl_safety=t.num("cfl_safety", DEFAULT_CFL_SAFETY),
        mode=r.get("mode", "elastic").strip(),
        output_directory=o.get("directory"),
        energy_every=o.num("energy_every", 8, kind=int),
        snapshot_every=o.num("snapshot_every", 0, kind=int),
        direction_samples=g.num("direction_samples", DIRECTION_SAMPLES, kind=int),
    )


def resolve(cfg: SimulationConfig) -> SimulationConfig:
    """Compute derived quantities and run every named check."""
    if cfg.mode not in ("elastic", "viscoelastic"):
        raise ConfigError("run.mode", f"mode must be 'elastic' or 'viscoelastic', got {cfg.mode!r}")
    if cfg.mode == "viscoelastic" and cfg.material.viscosity is None:
        raise ConfigError("run.mode", "viscoelastic mode requires material.viscosity_voigt")
    if not (cfg.physical_half_width > 0):
        raise ConfigError("grid.physical_half_width", f"must be positive, got {cfg.physical_half_width}")
    if cfg.direction_samples < 26:
        raise ConfigError("grid.direction_samples", "at least 26 directions are required")
    try:
        c_min, c_max = speed_bounds(cfg.material, cfg.direction_samples)
    except MaterialError as exc:
        raise ConfigError("material.stiffness", str(exc)) from None

    if cfg.spacing_override is not None:
        h = cfg.spacing_override
        if not h > 0:
            raise ConfigError("grid.spacing", f"spacing must be positive, got {h}")
    else:
        if not (cfg.nodes_per_wavelength and cfg.nodes_per_wavelength > 0):
            raise ConfigError("grid.nodes_per_wavelength", "must be positive")
        h = mesh_size(c_min, cfg.nodes_per_wavelength, cfg.source.f0)
    if round(cfg.physical_half_width / h) < 1:
        raise ConfigError("grid.physical_half_width", "physical domain is smaller than one cell")

    if cfg.pml_cells < 1:
        raise ConfigError("pml.cells", f"need at least one PML cell, got {cfg.pml_cells}")
    if cfg.pml_order < 1:
        raise ConfigError("pml.order", f"polynomial order must be >= 1, got {cfg.pml_order}")
    grid = GridSpec(h, cfg.physical_half_width, cfg.pml_cells)
    if cfg.beta0_override is not None:
        beta0 = tuple(float(b) for b in cfg.beta0_override)
        if any(not (math.isfinite(b) and b >= 0) for b in beta0):
            raise ConfigError("pml.beta0", f"beta0 must be non-negative, got {beta0}")
    else:
        for R in cfg.reflection_target:
            if not (0 < R <= 1):
                raise ConfigError("pml.reflection_target", f"reflection target must lie in (0, 1], got {R}")
        beta0 = tuple(beta0_from_reflection(R, cfg.pml_order, grid.pml_thickness, c_max)
                      for R in cfg.reflection_target)

    src = cfg.source
    if src.extent() >= grid.physical_half_width:
        raise ConfigError(
            "source.geometry",
            f"source reaches |x| = {src.extent():g} m but the physical domain ends at "
            f"{grid.physical_half_width:g} m (PML beyond)",
        )
    if src.kind == "dirichlet_shell" and src.radius < SHELL_MIN_CELLS * h * (1 - 1e-9):
        raise ConfigError(
            "source.radius",
            f"shell radius {src.radius:g} m spans fewer than {SHELL_MIN_CELLS} cells of {h:g} m",
        )

    if not 0 < cfg.cfl_safety < 1:
        raise ConfigError("time.cfl_safety", f"must lie in (0, 1), got {cfg.cfl_safety}")
    # the step is derived, so both bounds hold by construction
    dt = cfl_time_step(h, c_max, cfg.cfl_safety)
    if cfg.mode == "viscoelastic":
        eta_max = float(np.max(np.abs(cfg.material.viscosity.voigt)))
        dt = min(dt, viscous_time_step(h, cfg.material.density, eta_max))

    if cfg.t_end_override is not None:
        t_end = cfg.t_end_override
    elif cfg.traversals is not None:
        t_end = 2 * src.t0 + cfg.traversals * 2 * grid.physical_half_width / c_min
    else:
        raise ConfigError("time.t_end", "give time.t_end or time.traversals")
    if not (math.isfinite(t_end) and t_end >= 0):
        raise ConfigError("time.t_end", f"t_end must be non-negative, got {t_end}")
    if cfg.energy_every < 0 or cfg.snapshot_every < 0:
        raise ConfigError("output", "cadences must be non-negative")

    return replace(cfg, c_min=c_min, c_max=c_max, spacing=h, dt=dt, t_end=t_end, beta0=beta0)


def load_and_validate(path: str | os.PathLike | None = None, text: str | None = None) -> SimulationConfig:
    """Read a scenario file (or a preset name, or raw text) and resolve it."""
    if text is None:
        if path is None:
            raise ValueError("give a path or text")
        name = str(path)
        if name in PRESETS and not Path(name).exists():
            text = PRESETS[name]
        else:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError("parse", f"cannot read {path}: {exc}") from None
    return resolve(parse_config(text, str(path or "<string>")))


def _fmt(vals) -> str:
    return ", ".join(repr(float(v)) for v in vals)


def to_ini(cfg: SimulationConfig) -> str:
    """Serialise the user-facing fields; derived quantities are recomputed on load."""
    m = cfg.material
    parser = configparser.ConfigParser()
    mat = {"kind": "voigt", "density": repr(float(m.density)), "voigt": _fmt(m.stiffness.upper_triangle())}
    if m.viscosity is not None:
        mat["viscosity_voigt"] = _fmt(m.viscosity.upper_triangle())
    parser["material"] = mat
    grid = {"physical_half_width": repr(float(cfg.physical_half_width)),
            "direction_samples": str(cfg.direction_samples)}
    if cfg.spacing_override is not None:
        grid["spacing"] = repr(float(cfg.spacing_override))
    else:
        grid["nodes_per_wavelength"] = repr(float(cfg.nodes_per_wavelength))
    parser["grid"] = grid
    pml = {"cells": str(cfg.pml_cells), "order": str(cfg.pml_order),
           "reflection_target": _fmt(cfg.reflection_target)}
    if cfg.beta0_override is not None:
        pml["beta0"] = _fmt(cfg.beta0_override)
    parser["pml"] = pml
    s = cfg.source
    parser["source"] = {"kind": s.kind, "f0": repr(float(s.f0)), "t0": repr(float(s.t0)), "center": _fmt(s.center),
                        "radius": repr(float(s.radius)), "direction": _fmt(s.direction),
                        "amplitude": repr(float(s.amplitude))}
    time_ = {"cfl_safety": repr(float(cfg.cfl_safety))}
    if cfg.t_end_override is not None:
        time_["t_end"] = repr(float(cfg.t_end_override))
    if cfg.traversals is not None:
        time_["traversals"] = repr(float(cfg.traversals))
    parser["time"] = time_
    out = {"energy_every": str(cfg.energy_every), "snapshot_every": str(cfg.snapshot_every)}
    if cfg.output_directory:
        out["directory"] = cfg.output_directory
    parser["output"] = out
    parser["run"] = {"mode": cfg.mode}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _olivine_voigt_line() -> str:
    c = {k: v * MBAR for k, v in OLIVINE_CONSTANTS_MBAR.items()}
    return _fmt(orthorhombic_stiffness(**c).upper_triangle())


PRESETS: dict[str, str] = {
    # the olivine experiment with the domain shrunk to 26 cells per half width
    "olivine-desk": f"""
[material]
kind = voigt
density = {OLIVINE_DEFAULT_DENSITY!r}
voigt = {_olivine_voigt_line()}

[grid]
nodes_per_wavelength = 16
physical_half_width = 6e-3

[pml]
cells = 4
order = 2
reflection_target = 1e-3

[source]
kind = dirichlet_shell
f0 = 1e6
t0 = 1e-6
center = 0, 0, 0
radius = 1e-3
amplitude = 1e-9

[time]
traversals = 2
cfl_safety = 0.5

[output]
energy_every = 8
snapshot_every = 0

[run]
mode = elastic
""",
    # glass-like isotropic solid, tapered body force, 16-cell half width
    "isotropic-reflection": """
[material]
kind = isotropic
density = 2500
lambda = 2.7e10
mu = 2.9e10

[grid]
nodes_per_wavelength = 10
physical_half_width = 5.45e-3

[pml]
cells = 4
order = 2
reflection_target = 1e-3

[source]
kind = body_force_point
f0 = 1e6
t0 = 1e-6
center = 0, 0, 0
radius = 1.0e-3
direction = 1, 1, 0
amplitude = 1e-3

[time]
t_end = 4.5e-6
cfl_safety = 0.5

[output]
energy_every = 8

[run]
mode = elastic
""",
    "kelvin-voigt-demo": f"""
[material]
kind = isotropic
density = 1000
lambda = 2e9
mu = 1e9
viscosity_voigt = {_fmt(20.0 * np.eye(6)[np.triu_indices(6)])}

[grid]
nodes_per_wavelength = 10
physical_half_width = 2e-3

[pml]
cells = 4
order = 2
reflection_target = 1e-3

[source]
kind = body_force_point
f0 = 1e6
t0 = 1e-6
radius = 3e-4
direction = 0, 0, 1
amplitude = 1e-3

[time]
t_end = 6e-6
cfl_safety = 0.5

[output]
energy_every = 8

[run]
mode = viscoelastic
""",
}


def scenario_presets() -> dict[str, SimulationConfig]:
    """Bundled scenarios, resolved."""
    return {name: load_and_validate(text=text) for name, text in PRESETS.items()}
