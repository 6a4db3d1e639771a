"""Run configuration: figure presets, JSON (de)serialization, validation."""

import json
from dataclasses import dataclass, replace

import numpy as np

from .model import SlabParams

NAMED_STATES = {
    "state1": (1.0, 0.0, 0.0),
    "state2": (0.0, 1.0, 0.0),
    "super12": (2**-0.5, 2**-0.5, 0.0),
}
FORMATS = ("csv", "jsonl")
THETA_LIMIT = 89.9

SLAB_KEYS = {
    "omega1": "omega1",
    "omega2": "omega2",
    "delta0": "delta0",
    "gamma": "gamma",
    "slab_length": "slab_length",
    "k_l1": "kL1",
    "k_l2": "kL2",
}


class UnknownPreset(KeyError):
    pass


class ConfigError(ValueError):
    """Aggregated configuration problems; ``errors`` lists every one."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    """Everything a sweep needs.  Angles are in degrees."""

    slab: SlabParams
    k0: float
    incident_state: object = "state1"
    theta_min: float = 0.0
    theta_max: float = THETA_LIMIT
    steps: int = 1000
    out_path: str = "sweep.csv"
    fmt: str = "csv"

    @property
    def amplitudes(self):
        if isinstance(self.incident_state, str):
            return np.array(NAMED_STATES[self.incident_state], dtype=complex)
        return np.array(self.incident_state, dtype=complex)

    @property
    def thetas_deg(self):
        return np.linspace(self.theta_min, self.theta_max, self.steps)


_FIG2 = SlabParams(omega1=2.5, omega2=3.5, delta0=100.0, gamma=0.1, slab_length=30.0, kL1=0.1, kL2=0.1)
_PRESETS = {
    "fig2": RunConfig(slab=_FIG2, k0=0.8, incident_state="state1"),
    "fig3": RunConfig(slab=replace(_FIG2, omega1=3.5, omega2=3.5), k0=0.8, incident_state="state1"),
    "fig4": RunConfig(slab=replace(_FIG2, omega1=3.5, omega2=3.5), k0=0.8, incident_state="super12"),
    "fig5": RunConfig(
        slab=SlabParams(omega1=2.0, omega2=2.0, delta0=-25.0, gamma=0.1, slab_length=4.0, kL1=0.1, kL2=0.1),
        k0=0.8,
        incident_state="state1",
    ),
}

PRESET_NOTES = {
    "fig2": "blue detuned, unequal Rabi frequencies, incident |1>",
    "fig3": "blue detuned, equal Rabi frequencies, incident |1>",
    "fig4": "blue detuned, equal Rabi frequencies, incident (|1>+|2>)/sqrt(2)",
    "fig5": "red detuned, thin slab, equal Rabi frequencies, incident |1>",
}


def preset_names():
    return sorted(_PRESETS)


def figure_preset(name):
    try:
        return _PRESETS[name]
    except KeyError:
        raise UnknownPreset(
            f"unknown preset {name!r}; choose one of {', '.join(preset_names())}"
        ) from None


def _encode_state(state):
    if isinstance(state, str):
        return state
    return [[c.real, c.imag] for c in (complex(a) for a in state)]


def to_dict(config):
    slab = config.slab
    return {
        "slab": {key: getattr(slab, attr) for key, attr in SLAB_KEYS.items()},
        "k0": config.k0,
        "incident_state": _encode_state(config.incident_state),
        "sweep": {
            "theta_min": config.theta_min,
            "theta_max": config.theta_max,
            "steps": config.steps,
        },
        "outputs": {"path": config.out_path, "format": config.fmt},
    }


def serialize(config):
    return json.dumps(to_dict(config), indent=2, sort_keys=True)


def _number(raw, where, errors):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        errors.append(f"{where}: expected a number, got {raw!r}")
        return None
    if not np.isfinite(raw):
        errors.append(f"{where}: must be finite")
        return None
    return float(raw)


def _complex(raw, where, errors):
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        re = _number(raw[0], where + ".re", errors)
        im = _number(raw[1], where + ".im", errors)
        return None if re is None or im is None else complex(re, im)
    value = _number(raw, where, errors)
    return None if value is None else complex(value)


def _parse_state(raw, errors, notices):
    if isinstance(raw, str):
        if raw not in NAMED_STATES:
            errors.append(
                f"incident_state: unknown name {raw!r}; use one of "
                f"{', '.join(sorted(NAMED_STATES))} or an explicit 3-vector"
            )
            return None
        return raw
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        errors.append("incident_state: expected a preset name or a 3-vector")
        return None
    amps = [_complex(a, f"incident_state[{i}]", errors) for i, a in enumerate(raw)]
    if any(a is None for a in amps):
        return None
    n = np.linalg.norm(amps)
    if n == 0:
        errors.append("incident_state: amplitudes must not all vanish")
        return None
    if abs(n - 1) > 1e-12:
        notices.append(f"incident_state normalized (norm was {n:.6g})")
        amps = [a / n for a in amps]
    return tuple(amps)


def _unknown(section, allowed, where, errors):
    for key in sorted(set(section) - set(allowed)):
        errors.append(f"{where}: unknown key {key!r}")


def from_dict(data):
    """Build a :class:`RunConfig`, collecting every problem before failing.

    Returns ``(config, notices)``; raises :class:`ConfigError` otherwise.
    """
    errors, notices = [], []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a JSON object"])
    _unknown(data, ("slab", "k0", "incident_state", "sweep", "outputs", "preset"), "top level", errors)

    base = None
    if "preset" in data:
        try:
            base = figure_preset(data["preset"])
        except UnknownPreset as err:
            errors.append(str(err.args[0]))

    slab_raw = data.get("slab", {})
    if not isinstance(slab_raw, dict):
        errors.append("slab: expected an object")
        slab_raw = {}
    _unknown(slab_raw, SLAB_KEYS, "slab", errors)
    slab_vals = {}
    for key, attr in SLAB_KEYS.items():
        if key in slab_raw:
            slab_vals[attr] = _number(slab_raw[key], f"slab.{key}", errors)
        elif base is not None:
            slab_vals[attr] = getattr(base.slab, attr)
        elif attr in ("kL1", "kL2"):
            slab_vals[attr] = 0.0
        else:
            errors.append(f"slab.{key}: missing")
            slab_vals[attr] = None
    checks = [
        ("omega1", lambda v: v >= 0, "must be >= 0"),
        ("omega2", lambda v: v >= 0, "must be >= 0"),
        ("gamma", lambda v: v >= 0, "must be >= 0"),
        ("slab_length", lambda v: v > 0, "must be > 0"),
    ]
    for attr, ok, msg in checks:
        v = slab_vals.get(attr)
        if v is not None and not ok(v):
            key = next(k for k, a in SLAB_KEYS.items() if a == attr)
            errors.append(f"slab.{key}: {msg}, got {v}")

    k0 = _number(data["k0"], "k0", errors) if "k0" in data else (base.k0 if base else None)
    if k0 is None and "k0" not in data and base is None:
        errors.append("k0: missing")
    elif k0 is not None and k0 <= 0:
        errors.append(f"k0: must be > 0, got {k0}")

    state = _parse_state(
        data.get("incident_state", base.incident_state if base else "state1"), errors, notices
    )

    sweep_raw = data.get("sweep", {})
    if not isinstance(sweep_raw, dict):
        errors.append("sweep: expected an object")
        sweep_raw = {}
    _unknown(sweep_raw, ("theta_min", "theta_max", "steps"), "sweep", errors)
    defaults = base or RunConfig(slab=None, k0=1.0)
    tmin = _number(sweep_raw.get("theta_min", defaults.theta_min), "sweep.theta_min", errors)
    tmax = _number(sweep_raw.get("theta_max", defaults.theta_max), "sweep.theta_max", errors)
    for name, v in (("theta_min", tmin), ("theta_max", tmax)):
        if v is not None and not 0 <= v <= THETA_LIMIT:
            errors.append(f"sweep.{name}: {v} outside [0, {THETA_LIMIT}] degrees")
    if tmin is not None and tmax is not None and tmin >= tmax:
        errors.append(f"sweep: theta_min ({tmin}) must be below theta_max ({tmax})")
    steps = sweep_raw.get("steps", defaults.steps)
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 2:
        errors.append(f"sweep.steps: expected an integer >= 2, got {steps!r}")

    out_raw = data.get("outputs", {})
    if not isinstance(out_raw, dict):
        errors.append("outputs: expected an object")
        out_raw = {}
    _unknown(out_raw, ("path", "format"), "outputs", errors)
    path = out_raw.get("path", defaults.out_path)
    if not isinstance(path, str) or not path:
        errors.append(f"outputs.path: expected a non-empty string, got {path!r}")
    fmt = out_raw.get("format", defaults.fmt)
    if fmt not in FORMATS:
        errors.append(f"outputs.format: expected one of {FORMATS}, got {fmt!r}")

    if errors:
        raise ConfigError(errors)
    config = RunConfig(
        slab=SlabParams(**slab_vals),
        k0=k0,
        incident_state=state,
        theta_min=tmin,
        theta_max=tmax,
        steps=steps,
        out_path=path,
        fmt=fmt,
    )
    return config, notices


def validate_config(text):
    """Parse JSON text into ``(RunConfig, notices)``.

    Every violation is reported in one :class:`ConfigError`.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError([f"invalid JSON: {err}"]) from None
    return from_dict(data)
