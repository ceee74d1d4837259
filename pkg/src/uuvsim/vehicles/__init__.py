"""Vehicle configuration schema, payload composition, and the built-in fleet.

Configs are YAML documents (``schema_version: 1``) with units spelled out in
field names.  Five vehicles ship with the package:

* ``bluerov``        — open-frame ROV, 6 fixed thrusters (4 vectored + 2 vertical)
* ``bluerov_heavy``  — open-frame ROV, 8 fixed thrusters (4 vectored + 4 vertical)
* ``lauv``           — torpedo AUV, 1 main thruster + 4 cruciform fins
* ``iauv``           — intervention AUV, 1 main thruster + 4 cruciform fins
* ``hauv``           — hovering AUV, 8 tiltable rotors

The BlueROV-family coefficients follow the published open-source BlueROV2
model; the AUV coefficients are documented order-of-magnitude estimates.
Loaded configs are immutable by convention: every transform here returns a
new object.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..actuation import (
    DATA_DRIVEN,
    FIRST_ORDER,
    PROPELLER,
    RUDDER,
    TILTROTOR,
    ZERO_ORDER,
    ActuatorSpec,
    MLPWeights,
    RudderGeometry,
)
from ..hydrodynamics import HydroCoeffs, ParameterError, RigidBodyParams

SCHEMA_VERSION = 1

BUILTIN_VEHICLES = ("bluerov", "bluerov_heavy", "lauv", "iauv", "hauv")

# Overlay keys that scale a base value multiplicatively (must be > 0),
# mirroring the starred rows of the randomization presets.
RATIO_KEYS = (
    "mass*",
    "volume*",
    "inertia*",
    "added_mass*",
    "damping*",
    "time_constant*",
    "thrust_coeff*",
)
# Keys consumed here with their own semantics.
SPECIAL_KEYS = ("cobm", "payload_mass*", "payload_position", "mount_position_jitter")
# Keys that belong to the environment, not the vehicle; accepted and ignored
# so one sampled overlay map can flow through unchanged.
ENVIRONMENT_KEYS = ("current_velocity", "current_direction")

OVERLAY_KEYS = RATIO_KEYS + SPECIAL_KEYS + ENVIRONMENT_KEYS


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


@dataclass
class Payload:
    """A rigidly attached point mass."""

    mass: float  # kg
    attach_position: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body m

    def __post_init__(self):
        self.attach_position = np.asarray(self.attach_position, dtype=float)
        if self.mass < 0:
            raise ConfigError(f"payload.mass: must be >= 0, got {self.mass}")


@dataclass
class VehicleConfig:
    name: str
    rb: RigidBodyParams
    coeffs: HydroCoeffs
    actuators: list[ActuatorSpec]
    bounding_radius: float  # m, coarse hull extent for task workspace sizing
    schema_version: int = SCHEMA_VERSION

    @property
    def action_dim(self) -> int:
        return len(self.actuators)


def _get(doc: dict, path: str, key: str, kind, required=True, default=None):
    full = f"{path}.{key}" if path else key
    if key not in doc:
        if required:
            raise ConfigError(f"{full}: missing required field")
        return default
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{full}: expected a number, got {type(value).__name__}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{full}: expected an integer, got {type(value).__name__}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{full}: expected a string, got {type(value).__name__}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{full}: expected a list, got {type(value).__name__}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{full}: expected a mapping, got {type(value).__name__}")
        return value
    raise AssertionError(kind)


def _vector(doc: dict, path: str, key: str, length: int, required=True, default=None):
    raw = _get(doc, path, key, list, required=required, default=None)
    if raw is None:
        return default
    full = f"{path}.{key}" if path else key
    try:
        vec = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{full}: expected {length} numbers") from None
    if vec.shape != (length,):
        raise ConfigError(f"{full}: expected {length} numbers, got shape {vec.shape}")
    return vec


def _matrix(doc: dict, path: str, key: str, size: int) -> np.ndarray:
    """A square matrix given either as ``diag: [...]`` or ``matrix: [[...]]``."""
    block = _get(doc, path, key, dict)
    full = f"{path}.{key}"
    if "diag" in block:
        return np.diag(_vector(block, full, "diag", size))
    if "matrix" in block:
        raw = _get(block, full, "matrix", list)
        try:
            mat = np.asarray(raw, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{full}.matrix: expected a {size}x{size} matrix") from None
        if mat.shape != (size, size):
            raise ConfigError(f"{full}.matrix: expected shape ({size}, {size}), got {mat.shape}")
        return mat
    raise ConfigError(f"{full}: expected 'diag' or 'matrix'")


def load_mlp_weights(path: Path | str) -> MLPWeights:
    """Read a rotor-network weights document (layer sizes, row-major matrices)."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"weights file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"weights file {path}: invalid document ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"weights file {path}: expected a mapping at top level")
    sizes = _get(doc, "", "layer_sizes", list)
    weights = _get(doc, "", "weights", list)
    biases = _get(doc, "", "biases", list)
    activation = _get(doc, "", "activation", str, required=False, default="tanh")
    try:
        return MLPWeights(
            layer_sizes=[int(s) for s in sizes],
            weights=[np.asarray(w, dtype=float) for w in weights],
            biases=[np.asarray(b, dtype=float) for b in biases],
            activation=activation,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"weights file {path}: {exc}") from exc


def _parse_actuator(doc: dict, path: str, base_dir: Path | None) -> ActuatorSpec:
    index = _get(doc, path, "index", int)
    kind = _get(doc, path, "kind", str)
    if kind not in (PROPELLER, RUDDER, TILTROTOR):
        raise ConfigError(f"{path}.kind: unknown actuator kind '{kind}'")
    mount = _vector(doc, path, "mount_position_m", 3)
    axis = _vector(doc, path, "mount_axis", 3)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-6:
        raise ConfigError(f"{path}.mount_axis: must be a unit vector")
    model = _get(doc, path, "rotor_model", str)
    if model not in (ZERO_ORDER, FIRST_ORDER, DATA_DRIVEN):
        raise ConfigError(f"{path}.rotor_model: unknown model '{model}'")
    kwargs = dict(
        index=index,
        kind=kind,
        mount_position=mount,
        mount_axis=axis,
        rotor_model=model,
    )
    if model == FIRST_ORDER:
        kwargs["time_constant"] = _get(doc, path, "time_constant_s", float)
        if kwargs["time_constant"] <= 0:
            raise ConfigError(f"{path}.time_constant_s: must be > 0")
    elif model == DATA_DRIVEN:
        ref = _get(doc, path, "weights_ref", str)
        wpath = Path(ref)
        if not wpath.is_absolute():
            if base_dir is None:
                raise ConfigError(f"{path}.weights_ref: relative path with no base directory")
            wpath = base_dir / wpath
        if not wpath.exists():
            raise ConfigError(f"{path}.weights_ref: file not found: {wpath}")
        kwargs["mlp"] = load_mlp_weights(wpath)
        kwargs["weights_ref"] = ref

    if kind == RUDDER:
        rdoc = _get(doc, path, "rudder", dict)
        rpath = f"{path}.rudder"
        geom = RudderGeometry(
            area=_get(rdoc, rpath, "area_m2", float),
            c_l_alpha=_get(rdoc, rpath, "lift_slope_per_rad", float),
            c_d0=_get(rdoc, rpath, "drag_coeff_zero", float, required=False, default=0.02),
            k_d=_get(rdoc, rpath, "drag_coeff_induced", float, required=False, default=1.0),
            stall_angle=_get(rdoc, rpath, "stall_angle_rad", float, required=False, default=0.52),
            max_angle=_get(rdoc, rpath, "max_angle_rad", float, required=False, default=0.35),
            fluid_density=_get(rdoc, rpath, "fluid_density_kgm3", float,
                               required=False, default=1000.0),
        )
        if geom.area <= 0:
            raise ConfigError(f"{rpath}.area_m2: must be > 0")
        if geom.max_angle <= 0 or geom.stall_angle <= 0:
            raise ConfigError(f"{rpath}: angle limits must be > 0")
        kwargs["rudder"] = geom
    else:
        kwargs["thrust_coeff"] = _get(doc, path, "thrust_coeff_ns2_per_rad2", float)
        kwargs["deadzone"] = _get(doc, path, "deadzone_rad_s", float, required=False, default=0.0)
        kwargs["max_speed"] = _get(doc, path, "max_speed_rad_s", float)
        kwargs["reaction_coeff"] = _get(doc, path, "reaction_coeff_nms2_per_rad2", float,
                                        required=False, default=0.0)
        if kwargs["max_speed"] <= 0:
            raise ConfigError(f"{path}.max_speed_rad_s: must be > 0")
        if kwargs["deadzone"] < 0:
            raise ConfigError(f"{path}.deadzone_rad_s: must be >= 0")

    if kind == TILTROTOR:
        kwargs["tilt_range"] = _get(doc, path, "tilt_range_rad", float)
        kwargs["tilt_axis"] = _vector(doc, path, "tilt_axis", 3,
                                      required=False, default=np.array([0.0, -1.0, 0.0]))
        kwargs["tilt_angle_default"] = _get(doc, path, "tilt_angle_default_rad", float,
                                            required=False, default=0.0)
        if kwargs["tilt_range"] < 0:
            raise ConfigError(f"{path}.tilt_range_rad: must be >= 0")
        if abs(kwargs["tilt_angle_default"]) > kwargs["tilt_range"] + 1e-12:
            raise ConfigError(f"{path}.tilt_angle_default_rad: exceeds tilt_range_rad")
    return ActuatorSpec(**kwargs)


def parse_vehicle(doc: dict, base_dir: Path | None = None,
                  name_hint: str | None = None) -> VehicleConfig:
    """Validate a parsed config document and build a VehicleConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected a mapping")
    version = _get(doc, "", "schema_version", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version}")
    name = _get(doc, "", "name", str)
    if not name:
        raise ConfigError("name: must be non-empty")
    bounding = _get(doc, "", "bounding_radius_m", float)
    if bounding <= 0:
        raise ConfigError("bounding_radius_m: must be > 0")

    rdoc = _get(doc, "", "rigid_body", dict)
    mass = _get(rdoc, "rigid_body", "mass_kg", float)
    volume = _get(rdoc, "rigid_body", "displaced_volume_m3", float)
    r_g = _vector(rdoc, "rigid_body", "center_of_gravity_m", 3)
    r_b = _vector(rdoc, "rigid_body", "center_of_buoyancy_m", 3)
    inertia = _matrix(rdoc, "rigid_body", "inertia_kgm2", 3)
    try:
        rb = RigidBodyParams(mass=mass, inertia=inertia, r_g=r_g, r_b=r_b,
                             displaced_volume=volume)
    except ParameterError as exc:
        raise ConfigError(f"rigid_body.{exc}") from exc

    hdoc = _get(doc, "", "hydrodynamics", dict)
    try:
        coeffs = HydroCoeffs(
            M_A=_matrix(hdoc, "hydrodynamics", "added_mass", 6),
            D_lin=_matrix(hdoc, "hydrodynamics", "linear_damping", 6),
            D_quad=_matrix(hdoc, "hydrodynamics", "quadratic_damping", 6),
            fluid_density=_get(hdoc, "hydrodynamics", "fluid_density_kgm3", float,
                               required=False, default=1000.0),
            gravity=_get(hdoc, "hydrodynamics", "gravity_ms2", float,
                         required=False, default=9.81),
        )
    except ParameterError as exc:
        raise ConfigError(f"hydrodynamics.{exc}") from exc

    adocs = _get(doc, "", "actuators", list)
    if not adocs:
        raise ConfigError("actuators: at least one actuator required")
    actuators = []
    for i, adoc in enumerate(adocs):
        path = f"actuators[{i}]"
        if not isinstance(adoc, dict):
            raise ConfigError(f"{path}: expected a mapping")
        try:
            actuators.append(_parse_actuator(adoc, path, base_dir))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    indices = sorted(a.index for a in actuators)
    if len(set(indices)) != len(indices):
        raise ConfigError("actuators: duplicate actuator index")
    if indices != list(range(len(actuators))):
        raise ConfigError("actuators: indices must be contiguous from 0")
    actuators.sort(key=lambda a: a.index)
    return VehicleConfig(name=name, rb=rb, coeffs=coeffs, actuators=actuators,
                         bounding_radius=bounding, schema_version=version)


def _builtin_path(name: str) -> Path:
    return Path(resources.files(__package__) / "data" / f"{name}.yaml")


def vehicle_names() -> list[str]:
    return list(BUILTIN_VEHICLES)


def load_vehicle(name_or_path: str | Path) -> VehicleConfig:
    """Load a built-in vehicle by name, or any config document by path."""
    text = str(name_or_path)
    if text in BUILTIN_VEHICLES:
        path = _builtin_path(text)
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ConfigError(
                f"vehicle '{text}': not a built-in {BUILTIN_VEHICLES} and no such file"
            )
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid document ({exc})") from exc
    return parse_vehicle(doc, base_dir=path.parent)


def serialize_vehicle(config: VehicleConfig) -> str:
    """Render a config back to its document form (load -> serialize -> load is exact)."""
    doc = {
        "schema_version": config.schema_version,
        "name": config.name,
        "bounding_radius_m": config.bounding_radius,
        "rigid_body": {
            "mass_kg": config.rb.mass,
            "displaced_volume_m3": config.rb.displaced_volume,
            "center_of_gravity_m": config.rb.r_g.tolist(),
            "center_of_buoyancy_m": config.rb.r_b.tolist(),
            "inertia_kgm2": {"matrix": config.rb.inertia.tolist()},
        },
        "hydrodynamics": {
            "fluid_density_kgm3": config.coeffs.fluid_density,
            "gravity_ms2": config.coeffs.gravity,
            "added_mass": {"matrix": config.coeffs.M_A.tolist()},
            "linear_damping": {"matrix": config.coeffs.D_lin.tolist()},
            "quadratic_damping": {"matrix": config.coeffs.D_quad.tolist()},
        },
        "actuators": [_serialize_actuator(a) for a in config.actuators],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _serialize_actuator(a: ActuatorSpec) -> dict:
    out = {
        "index": a.index,
        "kind": a.kind,
        "mount_position_m": a.mount_position.tolist(),
        "mount_axis": a.mount_axis.tolist(),
        "rotor_model": a.rotor_model,
    }
    if a.rotor_model == FIRST_ORDER:
        out["time_constant_s"] = a.time_constant
    elif a.rotor_model == DATA_DRIVEN:
        out["weights_ref"] = a.weights_ref
    if a.kind == RUDDER:
        g = a.rudder
        out["rudder"] = {
            "area_m2": g.area,
            "lift_slope_per_rad": g.c_l_alpha,
            "drag_coeff_zero": g.c_d0,
            "drag_coeff_induced": g.k_d,
            "stall_angle_rad": g.stall_angle,
            "max_angle_rad": g.max_angle,
            "fluid_density_kgm3": g.fluid_density,
        }
    else:
        out["thrust_coeff_ns2_per_rad2"] = a.thrust_coeff
        out["deadzone_rad_s"] = a.deadzone
        out["max_speed_rad_s"] = a.max_speed
        out["reaction_coeff_nms2_per_rad2"] = a.reaction_coeff
    if a.kind == TILTROTOR:
        out["tilt_range_rad"] = a.tilt_range
        out["tilt_axis"] = a.tilt_axis.tolist()
        out["tilt_angle_default_rad"] = a.tilt_angle_default
    return out


def config_equal(a: VehicleConfig, b: VehicleConfig) -> bool:
    """Exact (bitwise) equality of two configs."""
    return serialize_vehicle(a) == serialize_vehicle(b)


def compose_with_payload(config: VehicleConfig, payload: Payload) -> RigidBodyParams:
    """Composite rigid-body parameters with a point-mass payload attached.

    Total mass and first mass moment are conserved; the inertia moves to the
    composite CoG via the parallel-axis theorem.  Displaced volume and the
    center of buoyancy are unchanged (the payload is treated as dense).
    """
    rb = config.rb
    m, mp = rb.mass, payload.mass
    if mp == 0.0:
        return RigidBodyParams(mass=m, inertia=rb.inertia.copy(), r_g=rb.r_g.copy(),
                               r_b=rb.r_b.copy(), displaced_volume=rb.displaced_volume)
    total = m + mp
    cog = (m * rb.r_g + mp * payload.attach_position) / total

    def point_shift(mass, offset):
        d2 = float(offset @ offset)
        return mass * (d2 * np.eye(3) - np.outer(offset, offset))

    inertia = (rb.inertia + point_shift(m, rb.r_g - cog)
               + point_shift(mp, payload.attach_position - cog))
    return RigidBodyParams(mass=total, inertia=inertia, r_g=cog, r_b=rb.r_b.copy(),
                           displaced_volume=rb.displaced_volume)


def apply_overlay(config: VehicleConfig, overlay: dict) -> VehicleConfig:
    """Return a new config with randomization overlay values applied.

    Starred keys scale their base values; ``cobm`` scales the vertical
    CoB-CoG offset; payload keys compose a point mass; current keys are
    passed through untouched for the environment layer.  The input config
    is never mutated.
    """
    for key in overlay:
        if key not in OVERLAY_KEYS:
            raise ConfigError(f"overlay: unknown key '{key}'")
    for key in RATIO_KEYS:
        if key in overlay and not overlay[key] > 0:
            raise ConfigError(f"overlay[{key}]: ratio must be > 0, got {overlay[key]}")
    if "cobm" in overlay and not overlay["cobm"] > 0:
        raise ConfigError(f"overlay[cobm]: scale must be > 0, got {overlay['cobm']}")
    if "payload_mass*" in overlay and overlay["payload_mass*"] < 0:
        raise ConfigError(f"overlay[payload_mass*]: ratio must be >= 0")

    rb = config.rb
    mass = rb.mass * overlay.get("mass*", 1.0)
    volume = rb.displaced_volume * overlay.get("volume*", 1.0)
    inertia = rb.inertia * overlay.get("inertia*", 1.0)
    r_b = rb.r_b.copy()
    if "cobm" in overlay:
        r_b[2] = rb.r_g[2] + overlay["cobm"] * (rb.r_b[2] - rb.r_g[2])
    new_rb = RigidBodyParams(mass=mass, inertia=inertia, r_g=rb.r_g.copy(), r_b=r_b,
                             displaced_volume=volume)

    coeffs = config.coeffs
    new_coeffs = HydroCoeffs(
        M_A=coeffs.M_A * overlay.get("added_mass*", 1.0),
        D_lin=coeffs.D_lin * overlay.get("damping*", 1.0),
        D_quad=coeffs.D_quad * overlay.get("damping*", 1.0),
        fluid_density=coeffs.fluid_density,
        gravity=coeffs.gravity,
    )

    jitter = overlay.get("mount_position_jitter")
    if jitter is not None:
        jitter = np.asarray(jitter, dtype=float)
        if jitter.shape not in ((3,), (len(config.actuators), 3)):
            raise ConfigError(
                "overlay[mount_position_jitter]: expected shape (3,) or (A, 3)"
            )
    actuators = []
    for i, a in enumerate(config.actuators):
        new_a = copy.deepcopy(a)
        new_a.time_constant = a.time_constant * overlay.get("time_constant*", 1.0)
        new_a.thrust_coeff = a.thrust_coeff * overlay.get("thrust_coeff*", 1.0)
        if jitter is not None:
            new_a.mount_position = a.mount_position + (jitter if jitter.ndim == 1 else jitter[i])
        actuators.append(new_a)

    out = VehicleConfig(name=config.name, rb=new_rb, coeffs=new_coeffs,
                        actuators=actuators, bounding_radius=config.bounding_radius,
                        schema_version=config.schema_version)
    ratio = overlay.get("payload_mass*", 0.0)
    if ratio > 0.0:
        position = np.asarray(overlay.get("payload_position", np.zeros(3)), dtype=float)
        out.rb = compose_with_payload(out, Payload(mass=ratio * out.rb.mass,
                                                   attach_position=position))
    return out
