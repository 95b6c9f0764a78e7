"""Run configuration: JSON schema, validation and typed accessors."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .mapping import ReferenceConfig
from .normalization import Normalization
from .sampling import ParamBox
from .solver import PARAMS_1D, PARAMS_2D, Grid, IgnitionSpec, PhysicalParams

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lx", "dx", "dt", "t_final"],
    "properties": {"lx": _POS, "dx": _POS, "ly": _POS, "dy": _POS, "dt": _POS, "t_final": _POS},
}

_PHYS_KEYS = [f for f in PhysicalParams.__dataclass_fields__]
_PHYS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: ({"type": "boolean"} if k == "radiation_enabled" else _NUM) for k in _PHYS_KEYS},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["case", "lf_grid", "hf_grid", "box", "M", "m"],
    "properties": {
        "case": {"enum": ["1d", "2d"]},
        "lf_grid": _GRID,
        "hf_grid": _GRID,
        "physics": _PHYS,
        "lf_physics": _PHYS,
        "hf_physics": _PHYS,
        "ignition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": _NUM,
                "width": _POS,
                "center": {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2},
            },
        },
        "box": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "lower", "upper"],
                "properties": {"name": {"type": "string"}, "lower": _NUM, "upper": _NUM},
            },
        },
        "M": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "beta": {"type": "number", "minimum": 0},
        "lambda": {"type": "number", "minimum": 0},
        "indicator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"omega": _NUM, "p": _POS, "q": _POS, "edge_band": _POS},
        },
        "normalization": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T_scale"],
            "properties": {"T_scale": _NUM, "S_e_scale": _POS},
        },
        "seeds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lhs": {"type": "integer"}, "uq": {"type": "integer"}},
        },
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated experiment configuration; ``raw`` is the canonical JSON dict."""

    raw: dict

    @classmethod
    def from_dict(cls, d):
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        cfg = cls(json.loads(json.dumps(d)))
        cfg._check()
        return cfg

    def _check(self):
        r = self.raw
        if r["m"] > r["M"]:
            raise ConfigError(f"m ({r['m']}) must not exceed M ({r['M']})")
        lf, hf = self.lf_grid, self.hf_grid  # grid validation
        same_y = self.dim == 1 or abs(lf.ly - hf.ly) <= 1e-9 * lf.ly
        if abs(lf.lx - hf.lx) > 1e-9 * lf.lx or not same_y:
            raise ConfigError("LF and HF grids must cover the same domain")
        if abs(lf.t_final - hf.t_final) > 1e-12 * lf.t_final:
            raise ConfigError("LF and HF grids must share t_final")
        expected = PARAMS_1D if self.dim == 1 else PARAMS_2D
        if self.box.names != expected:
            raise ConfigError(f"box for case {r['case']} must list {expected}, got {self.box.names}")
        self.lf_params, self.hf_params  # physics validation
        self.normalization
        self.reference_template()

    # ---- accessors -------------------------------------------------------
    @property
    def dim(self):
        return 1 if self.raw["case"] == "1d" else 2

    def _grid(self, g):
        if self.dim == 1:
            return Grid.from_extent(g["lx"], g["dx"], g["dt"], g["t_final"])
        return Grid.from_extent(g["lx"], g["dx"], g["dt"], g["t_final"],
                                ly=g.get("ly", g["lx"]), dy=g.get("dy", g["dx"]))

    @property
    def lf_grid(self):
        return self._grid(self.raw["lf_grid"])

    @property
    def hf_grid(self):
        return self._grid(self.raw["hf_grid"])

    def _params(self, key):
        base = PhysicalParams().replace(**self.raw.get("physics", {}))
        return base.replace(**self.raw.get(key, {}))

    @property
    def lf_params(self):
        return self._params("lf_physics")

    @property
    def hf_params(self):
        return self._params("hf_physics")

    @property
    def ignition(self):
        return IgnitionSpec(**self.raw.get("ignition", {}))

    @property
    def box(self):
        return ParamBox(tuple((b["name"], b["lower"], b["upper"]) for b in self.raw["box"]))

    @property
    def M(self):
        return self.raw["M"]

    @property
    def m(self):
        return self.raw["m"]

    @property
    def beta(self):
        return float(self.raw.get("beta", 1.0))

    @property
    def lam(self):
        return float(self.raw.get("lambda", 1e-6))

    @property
    def seeds(self):
        s = {"lhs": 0, "uq": 1}
        s.update(self.raw.get("seeds", {}))
        return s

    @property
    def workers(self):
        env = os.environ.get("BIFIRE_WORKERS")
        return int(env) if env else int(self.raw.get("workers", 1))

    @property
    def output_dir(self):
        return Path(os.environ.get("BIFIRE_OUTPUT_DIR") or self.raw.get("output_dir", "bifire_out"))

    @property
    def normalization(self):
        n = self.raw.get("normalization", {"T_scale": 2000.0})
        box = self.box
        S_e_scale = n.get("S_e_scale", float(box.upper[box.names.index("S_e0")]))
        return Normalization(self.hf_params.T_a, float(n["T_scale"]), S_e_scale, self.hf_params.S_x0)

    @property
    def indicator(self):
        return {"omega": 0.85, "p": 2.0, "q": 1.0, "edge_band": 0.05, **self.raw.get("indicator", {})}

    def reference_template(self):
        """Reference config carrying only grid and indicator constants."""
        return ReferenceConfig(self.hf_grid, **self.indicator)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return RunConfig.from_dict(d)
