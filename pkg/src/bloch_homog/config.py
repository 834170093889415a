"""Run configuration: TOML parsing, defaulting, strict key checking and model construction."""

from __future__ import annotations

import copy
import itertools
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

import tomli_w

from . import gallery
from .fields import PeriodicMatrixField
from .lattice import Lattice
from .model import MatrixSymbol, OperatorModel

log = logging.getLogger(__name__)

TASKS = ("validate", "effective", "germ-sweep", "bands", "error-sweep", "sharpness", "cauchy", "gallery")
EPS_DEFAULT = [2.0**-j for j in range(3, 9)]

TASK_DEFAULTS: dict[str, dict] = {
    "validate": {"n_theta": 2048},
    "effective": {"K": 8},
    "germ-sweep": {"K": 8, "n_theta": 256, "weighted": "auto", "cluster_tol": 1e-8, "zero_tol": 1e-10},
    "bands": {"K": 8, "n_k": 16, "count": 4},
    "error-sweep": {"K": 8, "n_k": 16, "eps": EPS_DEFAULT, "tau": 1.0, "s": 3.0, "sandwiched": "auto",
                    "n_dirs": 16, "radial_points": 32, "refine": True},
    "sharpness": {"K": 8, "theta0": [], "eps": [], "tau": 1.0, "s": 2.0, "sandwiched": "auto"},
    "cauchy": {"K": 8, "eps": EPS_DEFAULT, "tau": 1.0, "s": 3.0, "sigma": 0.5, "n_xi": 64,
               "sandwiched": False},
    "gallery": {"K": 8, "entry": "", "params": {}},
}
OUTPUT_DEFAULTS = {"dir": "out", "svg": False, "workers": 1}
TOLERANCE_DEFAULTS = {"residual": 1e-8, "condition": 1e12}
MODEL_KEYS = {"name", "lattice", "symbol", "grid_shape", "g", "f", "gallery", "params"}
FIELD_KEYS = {"fourier", "constant", "grid_shape"}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    model: dict
    task: dict
    output: dict
    tolerances: dict

    @property
    def kind(self) -> str:
        return self.task["name"]

    def to_dict(self) -> dict:
        return {"model": self.model, "task": self.task, "output": self.output,
                "tolerances": self.tolerances}


def _line_context(text: str, err: Exception) -> str:
    lineno = getattr(err, "lineno", None)
    if lineno is None:
        import re

        m = re.search(r"line (\d+)", str(err))
        lineno = int(m.group(1)) if m else None
    if lineno is None:
        return str(err)
    lines = text.splitlines()
    src = lines[lineno - 1] if 0 < lineno <= len(lines) else ""
    return f"{err}\n  line {lineno}: {src}"


def parse_text(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("config parse error: " + _line_context(text, err)) from None


def load_raw(path: Path | str) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_text(text)


def _parse_scalar(s: str):
    try:
        return tomllib.loads(f"v = {s}")["v"]
    except tomllib.TOMLDecodeError:
        return s


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``--key value`` pairs; ``task`` selects the task, other keys address task parameters
    (or dotted paths such as ``output.dir``)."""
    raw = copy.deepcopy(raw)
    it = iter(overrides)
    for flag in it:
        if not flag.startswith("--"):
            raise ConfigError(f"unexpected argument {flag!r}")
        key = flag[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"flag {flag} needs a value") from None
        value = _parse_scalar(val)
        if key == "task":
            task = raw.setdefault("task", {})
            if task.get("name") != value and value in TASK_DEFAULTS:
                dropped = sorted(k for k in task if k != "name" and k not in TASK_DEFAULTS[value])
                if dropped:
                    log.warning("task switched to %s; ignoring file keys %s", value, dropped)
                for k in dropped:
                    del task[k]
            task["name"] = value
            continue
        if key == "name" and raw.get("task", {}).get("name") == "gallery":
            key = "entry"
        path = key.split(".") if "." in key else ["task", key.replace("-", "_")]
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = value
    return raw


def resolve(raw: dict) -> RunConfig:
    unknown = set(raw) - {"model", "task", "output", "tolerances"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    task = dict(raw.get("task", {}))
    name = task.pop("name", None)
    if name not in TASKS:
        raise ConfigError(f"task.name must be one of {TASKS}, got {name!r}")
    defaults = TASK_DEFAULTS[name]
    bad = set(task) - set(defaults)
    if bad:
        raise ConfigError(f"unknown keys for task {name!r}: {sorted(bad)}")
    full = {"name": name, **copy.deepcopy(defaults), **task}
    if name == "gallery" and not full["entry"]:
        raise ConfigError("task gallery needs an entry name (task.entry or --name)")
    out = dict(raw.get("output", {}))
    bad = set(out) - set(OUTPUT_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown output keys: {sorted(bad)}")
    tol = dict(raw.get("tolerances", {}))
    bad = set(tol) - set(TOLERANCE_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown tolerance keys: {sorted(bad)}")
    model = copy.deepcopy(raw.get("model", {}))
    bad = set(model) - MODEL_KEYS
    if bad:
        raise ConfigError(f"unknown model keys: {sorted(bad)}")
    for key in ("g", "f"):
        if key in model:
            extra = set(model[key]) - FIELD_KEYS
            if extra:
                raise ConfigError(f"unknown keys in model.{key}: {sorted(extra)}")
    if name != "gallery" and not model:
        raise ConfigError("a [model] section is required for this task")
    return RunConfig(model, full, {**OUTPUT_DEFAULTS, **out}, {**TOLERANCE_DEFAULTS, **tol})


def load(path: Path | str, overrides: list[str] | None = None) -> RunConfig:
    return resolve(apply_overrides(load_raw(path), overrides or []))


# ------------------------------------------------------------------ model I/O
def _cnum(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex entries are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _cmat(rows) -> np.ndarray:
    try:
        return np.array([[_cnum(z) for z in row] for row in rows], dtype=complex)
    except TypeError:
        raise ConfigError(f"expected a matrix (list of rows), got {rows!r}") from None


def _enc(z: complex):
    z = complex(z)
    return float(z.real) if z.imag == 0 else [float(z.real), float(z.imag)]


def _enc_mat(M) -> list:
    return [[_enc(z) for z in row] for row in np.atleast_2d(M)]


def _field(cfg: dict, lat: Lattice, grid_shape, name: str) -> PeriodicMatrixField:
    gs = cfg.get("grid_shape", grid_shape)
    if "constant" in cfg:
        return PeriodicMatrixField.constant(_cmat(cfg["constant"]), lat, gs, name=name)
    if "fourier" not in cfg:
        raise ConfigError(f"model.{name} needs either 'fourier' records or 'constant'")
    coeffs = {}
    for rec in cfg["fourier"]:
        if set(rec) != {"kappa", "value"}:
            raise ConfigError(f"fourier records need exactly the keys kappa and value, got {sorted(rec)}")
        kap = tuple(int(k) for k in rec["kappa"])
        if len(kap) != lat.dim:
            raise ConfigError(f"kappa {kap} does not match lattice dimension {lat.dim}")
        coeffs[kap] = coeffs.get(kap, 0) + _cmat(rec["value"])
    try:
        return PeriodicMatrixField.from_fourier(coeffs, lat, gs, name=name)
    except ValueError as err:
        raise ConfigError(f"model.{name}: {err}") from None


def build_model(cfg: dict) -> tuple[OperatorModel, gallery.GalleryEntry | None]:
    if "gallery" in cfg:
        params = cfg.get("params", {})
        try:
            entry = gallery.get(cfg["gallery"], **params)
        except (KeyError, TypeError) as err:
            raise ConfigError(f"gallery model: {err}") from None
        return entry.model, entry
    for key in ("lattice", "symbol", "g"):
        if key not in cfg:
            raise ConfigError(f"model.{key} is required")
    try:
        lat = Lattice(np.asarray(cfg["lattice"], dtype=float))
    except Exception as err:  # noqa: BLE001 - reported as a config problem
        raise ConfigError(f"model.lattice: {err}") from None
    mats = np.array([_cmat(M) for M in cfg["symbol"]])
    if mats.ndim != 3:
        raise ConfigError("model.symbol must be a list of d matrices of equal shape m x n")
    gs = cfg.get("grid_shape")
    g = _field(cfg["g"], lat, gs, "g")
    f = _field(cfg["f"], lat, gs, "f") if "f" in cfg else None
    return OperatorModel(lat, MatrixSymbol(mats), g, f, name=cfg.get("name", "")), None


def field_records(field: PeriodicMatrixField, rel_tol: float = 1e-15) -> list[dict]:
    """Fourier records of a field: exact for trigonometric polynomials, otherwise the
    grid interpolant with coefficients below ``rel_tol`` (relative) and at Nyquist dropped."""
    if field.bandwidth is not None:
        rng = range(-field.bandwidth, field.bandwidth + 1)
        kaps = list(itertools.product(rng, repeat=field.lattice.dim))
        vals = [field.coefficient(np.array(k)) for k in kaps]
    else:
        F = field.fourier
        gs = field.grid_shape
        kaps, vals = [], []
        for idx in itertools.product(*[range(n) for n in gs]):
            kap = tuple(int(i if i < n // 2 else i - n) for i, n in zip(idx, gs))
            if any(2 * abs(k) >= n for k, n in zip(kap, gs)):
                continue
            kaps.append(kap)
            vals.append(F[idx])
    scale = max(max(np.abs(v).max() for v in vals), 1e-300)
    vals = [np.where(np.abs(v.real) > rel_tol * scale, v.real, 0.0)
            + 1j * np.where(np.abs(v.imag) > rel_tol * scale, v.imag, 0.0) for v in vals]
    order = sorted(range(len(kaps)), key=lambda i: kaps[i])
    return [{"kappa": list(kaps[i]), "value": _enc_mat(vals[i])} for i in order
            if np.abs(vals[i]).max() > rel_tol * scale]


def model_config(model: OperatorModel) -> dict:
    out = {"name": model.name, "lattice": model.lattice.basis.tolist(),
           "symbol": [_enc_mat(M) for M in model.symbol.mats],
           "g": {"fourier": field_records(model.g)}}
    if model.f is not None:
        out["f"] = {"fourier": field_records(model.f)}
    return out


def emit_gallery_config(name: str, task: str = "effective", **params) -> str:
    """Standalone TOML for a gallery entry with explicit Fourier records."""
    entry = gallery.get(name, **params)
    doc = {"model": model_config(entry.model), "task": {"name": task, **TASK_DEFAULTS[task]},
           "output": dict(OUTPUT_DEFAULTS)}
    if task == "gallery":
        doc["task"]["entry"] = name
        doc["task"]["params"] = dict(params)
    head = (f"# {name}: {gallery.DESCRIPTIONS.get(name, '')}\n"
            "# Fourier records are exact for trigonometric polynomials and otherwise the\n"
            "# coefficients of the grid interpolant above a relative 1e-15 cut.\n")
    return head + tomli_w.dumps(doc)
