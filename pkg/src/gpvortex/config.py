"""Run configuration: a flat key = value text format, validation,
derived grid rules, and the config hash stamped on every output."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field, fields, replace

import numpy as np

from .field_core import Grid
from .tw_solver import default_grid_rule


def _parse_scalar(text: str):
    text = text.strip()
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


@dataclass
class RunConfig:
    """Knobs for the full pipeline; see the README for the meaning of the
    two grid rules (spectral-scale vs diagnostics-scale boxes)."""

    speeds: tuple = (0.1, 0.05, 0.03)
    # derivative entries sit at c (1 +- neighbor_quad * c^2): the speed
    # derivatives of the branch grow like 1/c^2 per order, so a c^2-scaled
    # offset keeps the centered-difference error uniform over the branch
    neighbor_quad: float = 0.5
    box_factor: float = 3.0
    diag_box_factor: float = 5.5
    h_target: float = 0.4
    max_nx: int = 401
    diag_max_nx: int = 735
    kernel_speed: float = 0.05
    kernel_box_factor: float = 3.5
    newton_tol: float = 1e-11
    max_newton_steps: int = 40
    r_ball: float = 10.0
    constraint_sets: tuple = ("none", "three", "four", "phase4", "sym3")
    eta_shape: str = "quintic"
    basis_size: int = 160
    seed: int = 1234
    jobs: int = 1
    stability_T: float = 100.0
    stability_dt: float = 0.2
    stability_samples: int = 5
    stability_speed: float = 0.05
    uniqueness_delta: float = 1e-3
    uniqueness_speed: float = 0.1
    out_dir: str = "runs/gpvortex"

    def __post_init__(self):
        if not self.speeds or any(not (0.0 < c <= 0.2) for c in self.speeds):
            raise ValueError("speeds must lie in (0, 0.2]")
        if sorted(self.speeds, reverse=True) != list(self.speeds):
            raise ValueError("speeds must be strictly decreasing")
        if self.r_ball <= 5.0:
            raise ValueError("orthogonality ball radius must exceed 5")
        if self.max_nx % 2 == 0 or self.diag_max_nx % 2 == 0:
            raise ValueError("node-count caps must be odd")
        if self.uniqueness_delta > 1e-2:
            raise ValueError("uniqueness perturbation must stay at or below 1e-2")

    # -- grid rules ----------------------------------------------------
    def _anchor(self, c: float) -> float:
        return min(self.speeds, key=lambda m: abs(np.log(c / m)))

    def grid_rule(self, c: float) -> Grid:
        return default_grid_rule(self._anchor(c), box_factor=self.box_factor,
                                 h_target=self.h_target, max_nx=self.max_nx)

    def diag_grid_rule(self, c: float) -> Grid:
        return default_grid_rule(self._anchor(c), box_factor=self.diag_box_factor,
                                 h_target=self.h_target, max_nx=self.diag_max_nx)

    def speeds_with_neighbors(self):
        """Strictly decreasing speed list with the two derivative
        neighbours per main speed, plus the anchor map."""
        out, anchors = [], {}
        for c in self.speeds:
            frac = min(self.neighbor_quad * c * c, 0.05)
            for f in (1.0 + frac, 1.0, 1.0 - frac):
                out.append(c * f)
                anchors[c * f] = c
        return out, anchors

    # -- text round trip ----------------------------------------------
    def canonical_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ", ".join(str(v) for v in val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# gpvortex run configuration\n" + self.canonical_text())


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a key = value config file; later ``overrides`` win."""
    data = {}
    tuple_fields = {"speeds", "constraint_sets"}
    if path is not None:
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, val = line.partition("=")
                if not sep:
                    raise ValueError(f"{path}:{ln}: expected 'key = value'")
                data[key.strip()] = val.strip()
    data.update(overrides or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    kwargs = {}
    for key, val in data.items():
        if isinstance(val, str):
            if key in tuple_fields:
                parts = [p for p in val.replace(",", " ").split() if p]
                kwargs[key] = tuple(_parse_scalar(p) for p in parts)
            else:
                kwargs[key] = _parse_scalar(val)
        else:
            kwargs[key] = val
    return RunConfig(**kwargs)
