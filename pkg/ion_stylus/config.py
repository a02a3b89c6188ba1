"""
Run configuration for the command-line front-end.

A run is described by a JSON file. Every physical quantity carries its unit
in the key name; lengths are micrometres, voltages volts, frequencies hertz.
Omitted keys take the defaults below, unknown keys are rejected. The resolved
configuration (defaults filled in) is what reports embed, so re-running from
an embedded config reproduces the report.

Example:
    {
      "units": {"length": "um", "voltage": "V", "frequency": "Hz"},
      "geometry": {"preset": 3},
      "drive": {"rf_amplitude_V": 400, "rf_frequency_Hz": 11.85e6},
      "raycast": {"rays": 1000000, "seed": 0}
    }
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ion_stylus.errors import ConfigError
from ion_stylus.model import DriveConfig, Electrode, ElectrodeRole, IonSpecies, Plane, Rod, TrapGeometry, Tube, make_ion
from ion_stylus.optics import DEFAULT_EXCLUDED, CollectionPath, MirrorSpec
from ion_stylus.presets import TABLE1, preset_geometry
from ion_stylus.sensing import BOHR_SLOPE_HZ_PER_T, OscillatorSpec, RamseySpec
from ion_stylus.solver import DEFAULT_RESOLUTION

UNITS = {"length": "um", "voltage": "V", "frequency": "Hz"}

_NUM = (int, float)

# key -> (accepted types, default); nested dicts are sub-sections
SCHEMA: dict[str, Any] = {
    "units": {
        "length": (str, "um"),
        "voltage": (str, "V"),
        "frequency": (str, "Hz"),
    },
    "geometry": {
        "preset": ((int, type(None)), 3),
        "electrodes": ((list, type(None)), None),
        "delta_h_um": ((*_NUM, type(None)), None),
        "h_rf_um": ((*_NUM, type(None)), None),
        "comp_circle_radius_um": (_NUM, 800.0),
        "comp_top_um": (_NUM, 900.0),
        "ground_plane_radius_um": (_NUM, 5000.0),
        "ground_plane_hole_radius_um": (_NUM, 455.0),
        "tube_bottom_um": (_NUM, -1500.0),
    },
    "ion": {
        "mass_number": (int, 24),
        "charge_number": (int, 1),
        "label": (str, "24Mg+"),
    },
    "drive": {
        "rf_amplitude_V": ((*_NUM, type(None)), None),
        "rf_frequency_Hz": ((*_NUM, type(None)), None),
        "dc_voltages_V": (dict, {}),
    },
    "solver": {
        "resolution": (int, DEFAULT_RESOLUTION),
        "use_cache": (bool, True),
    },
    "raycast": {
        "rays": (int, 1_000_000),
        "seed": (int, 0),
    },
    "analysis": {
        "hint_um": ((list, type(None)), None),
        "with_depth": (bool, True),
    },
    "contour": {
        "plane": (str, "xz"),
        "extent_um": (list, [[-400.0, 400.0], [1100.0, 2200.0]]),
        "shape": (list, [161, 221]),
        "isoline_step_eV": (_NUM, 0.025),
        "max_level_eV": ((*_NUM, type(None)), 0.5),
        "offset_um": (_NUM, 0.0),
    },
    "solid_angle": {
        "ion_height_um": ((*_NUM, type(None)), None),
        "method": (str, "both"),
        "exclude": (list, sorted(DEFAULT_EXCLUDED)),
        "hit_map_bins": (list, [90, 180]),
    },
    "mirror": {
        "focal_length_um": (_NUM, 1000.0),
        "depth_to_f": (_NUM, 6.0),
        "hole_half_angle_deg": ((*_NUM, type(None)), None),
        "target_fraction": ((*_NUM, type(None)), 0.81),
        "mode_coupling": (_NUM, 1.0),
        "cooperativity": (_NUM, 4.5),
        "baseline_solid_angle": (_NUM, 0.0002),
        "baseline_mode_coupling": (_NUM, 0.2),
    },
    "compensation": {
        "stray_field_V_per_m": (list, [0.0, 0.0, 0.0]),
        "rf_amplitudes_V": ((list, type(None)), None),
        "threshold_um": (_NUM, 1.0),
    },
    "sensing": {
        "mode_frequency_Hz": (_NUM, 1e6),
        "heating_rate_per_s": (_NUM, 1000.0),
        "slope_Hz_per_T": (_NUM, BOHR_SLOPE_HZ_PER_T),
        "precession_time_s": (_NUM, 1.0),
        "averaging_times_s": (list, [1.0, 10.0, 100.0]),
    },
    "proximity": {
        "heights_um": (list, [1000.0, 600.0, 400.0, 300.0, 250.0, 200.0, 150.0, 100.0, 75.0, 50.0]),
        "plane_radius_um": (_NUM, 5000.0),
        "min_depth_meV": (_NUM, 0.01),
        "max_null_shift": (_NUM, 0.25),
    },
    "output": {
        "dir": (str, "."),
        "format": (str, "json"),
    },
}

_TUBE_KEYS = ("inner_radius_um", "outer_radius_um", "z_bottom_um", "z_top_um")
_PLANE_KEYS = ("z_um", "outer_radius_um", "inner_radius_um")
_ROD_KEYS = ("radius_um", "x_um", "y_um", "z_top_um", "z_bottom_um")


def _resolve(section: dict, schema: dict, path: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"'{path or 'config'}' must be an object, got {type(section).__name__}")
    unknown = sorted(set(section) - set(schema))
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in '{path or 'config'}'; allowed: {sorted(schema)}")
    out = {}
    for key, spec in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = _resolve(section.get(key, {}), spec, where)
            continue
        types, default = spec
        value = section.get(key, copy.deepcopy(default))
        # bools are ints in Python; only accept them where bool is asked for
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"'{where}' must not be a boolean")
        if not isinstance(value, types):
            raise ConfigError(f"'{where}' has type {type(value).__name__}; expected {_type_names(types)}")
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"'{where}' must be finite, got {value}")
        out[key] = float(value) if isinstance(value, int) and float in _as_tuple(types) else value
    return out


def _as_tuple(types) -> tuple:
    return types if isinstance(types, tuple) else (types,)


def _type_names(types) -> str:
    return " or ".join(sorted({"number" if t in _NUM else ("null" if t is type(None) else t.__name__)
                               for t in _as_tuple(types)}))


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration; ``data`` is the fully resolved dict."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        data = _resolve(raw, SCHEMA, "")
        if data["units"] != UNITS:
            raise ConfigError(f"Unsupported units {data['units']}; only {UNITS} is accepted")
        cfg = cls(data)
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """Read and validate a JSON config file.

        Raises:
            ConfigError: If the file is not valid JSON or violates the schema
            OSError: If the file cannot be read
        """
        text = Path(path).read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        return cls.from_dict(raw)

    def override(self, section: str, key: str, value) -> "RunConfig":
        """Copy with one value replaced (CLI flags), validated again."""
        data = copy.deepcopy(self.data)
        data[section][key] = value
        return RunConfig.from_dict(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def _check(self) -> None:
        g = self.data["geometry"]
        if g["electrodes"] is None and g["preset"] not in TABLE1:
            raise ConfigError(f"geometry.preset must be 1, 2 or 3, got {g['preset']}")
        if g["electrodes"] is not None and (g["delta_h_um"] is None or g["h_rf_um"] is None):
            raise ConfigError("An inline electrode list needs geometry.delta_h_um and geometry.h_rf_um")
        roles = {str(r) for r in ElectrodeRole}
        for role in self.data["drive"]["dc_voltages_V"]:
            if role not in roles:
                raise ConfigError(f"drive.dc_voltages_V has unknown role '{role}'; expected one of {sorted(roles)}")
        if self.data["output"]["format"] not in ("json", "csv"):
            raise ConfigError(f"output.format must be 'json' or 'csv', got {self.data['output']['format']!r}")
        if self.data["solid_angle"]["method"] not in ("raycast", "analytic", "both"):
            raise ConfigError("solid_angle.method must be 'raycast', 'analytic' or 'both'")
        if self.data["raycast"]["rays"] <= 0:
            raise ConfigError("raycast.rays must be positive")
        if self.data["proximity"]["max_null_shift"] <= 0:
            raise ConfigError("proximity.max_null_shift must be positive")
        max_level = self.data["contour"]["max_level_eV"]
        if max_level is not None and max_level <= 0:
            raise ConfigError("contour.max_level_eV must be positive or null")
        if not 0 <= self.data["raycast"]["seed"] < 2 ** 64:
            raise ConfigError("raycast.seed must be in [0, 2^64)")
        if len(self.data["compensation"]["stray_field_V_per_m"]) != 3:
            raise ConfigError("compensation.stray_field_V_per_m must have 3 components")
        # Build the physics objects once so bad values fail here with exit status 2
        for build in (self.geometry, self.ion, self.mirror):
            try:
                build()
            except ConfigError:
                raise
            except (ValueError, KeyError, TypeError) as e:
                raise ConfigError(f"{build.__name__}: {e}") from e

    @property
    def preset_id(self) -> int | None:
        g = self.data["geometry"]
        return g["preset"] if g["electrodes"] is None else None

    def geometry(self) -> TrapGeometry:
        g = self.data["geometry"]
        if g["electrodes"] is None:
            return preset_geometry(
                g["preset"],
                comp_circle_radius=g["comp_circle_radius_um"],
                comp_top=g["comp_top_um"],
                ground_plane_radius=g["ground_plane_radius_um"],
                ground_plane_hole_radius=g["ground_plane_hole_radius_um"],
                tube_bottom=g["tube_bottom_um"],
            )
        return TrapGeometry(tuple(_electrode(e) for e in g["electrodes"]), g["delta_h_um"], g["h_rf_um"])

    def ion(self) -> IonSpecies:
        i = self.data["ion"]
        return make_ion(i["mass_number"], i["charge_number"], i["label"])

    def drive(self) -> DriveConfig:
        """rf drive; missing values come from the preset's published operating point."""
        d = self.data["drive"]
        row = TABLE1.get(self.preset_id) if self.preset_id is not None else None
        u, f = d["rf_amplitude_V"], d["rf_frequency_Hz"]
        if row is not None:
            u = row["rf_voltage_V"] if u is None else u
            f = row["rf_frequency_MHz"] * 1e6 if f is None else f
        if u is None or f is None:
            raise ConfigError("drive.rf_amplitude_V and drive.rf_frequency_Hz are required for inline geometries")
        try:
            return DriveConfig.from_hz(u, f, d["dc_voltages_V"])
        except ValueError as e:
            raise ConfigError(f"drive: {e}") from e

    def mirror(self) -> MirrorSpec:
        m = self.data["mirror"]
        hole = m["hole_half_angle_deg"]
        return MirrorSpec(m["focal_length_um"] * 1e-6, m["depth_to_f"], math.radians(hole or 0.0))

    def collection_paths(self) -> tuple[CollectionPath, float]:
        """(baseline path, mode coupling of the mirror path)."""
        m = self.data["mirror"]
        try:
            return CollectionPath(m["baseline_solid_angle"], m["baseline_mode_coupling"]), m["mode_coupling"]
        except ValueError as e:
            raise ConfigError(f"mirror: {e}") from e

    def oscillator(self) -> OscillatorSpec:
        s = self.data["sensing"]
        try:
            return OscillatorSpec.from_hz(self.ion(), s["mode_frequency_Hz"], s["heating_rate_per_s"])
        except ValueError as e:
            raise ConfigError(f"sensing: {e}") from e

    def ramsey(self) -> RamseySpec:
        s = self.data["sensing"]
        try:
            return RamseySpec(s["slope_Hz_per_T"], s["precession_time_s"])
        except ValueError as e:
            raise ConfigError(f"sensing: {e}") from e


def _electrode(entry: dict) -> Electrode:
    if not isinstance(entry, dict) or "role" not in entry:
        raise ConfigError(f"Electrode entries need a 'role' and one shape, got {entry!r}")
    try:
        role = ElectrodeRole(entry["role"])
    except ValueError as e:
        raise ConfigError(f"Unknown electrode role {entry['role']!r}") from e
    shapes = {k: v for k, v in entry.items() if k != "role"}
    if len(shapes) != 1:
        raise ConfigError(f"Electrode '{role}' needs exactly one of 'tube', 'plane', 'rod'")
    kind, params = next(iter(shapes.items()))
    table = {"tube": (Tube, _TUBE_KEYS, 4), "plane": (Plane, _PLANE_KEYS, 2), "rod": (Rod, _ROD_KEYS, 4)}
    if kind not in table:
        raise ConfigError(f"Electrode '{role}': unknown shape '{kind}'")
    cls, keys, n_required = table[kind]
    if not isinstance(params, dict):
        raise ConfigError(f"Electrode '{role}': '{kind}' must be an object")
    unknown = sorted(set(params) - set(keys))
    missing = [k for k in keys[:n_required] if k not in params]
    if unknown or missing:
        raise ConfigError(f"Electrode '{role}' {kind}: unknown {unknown}, missing {missing}; keys are {list(keys)}")
    return Electrode(role, cls(*(float(params[k]) for k in keys if k in params)))
