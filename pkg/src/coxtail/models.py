"""Model files: a uniform survival/quantile interface and JSON round-trips."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .aggregation import AggregateModel
from .cox import CoxFit
from .tail import SemiParamModel, step_quantile

__all__ = ["NelsonAalenModel", "model_from_dict", "load_model", "save_model", "curve_table"]


@dataclass(frozen=True, eq=False)
class NelsonAalenModel:
    """Plain Breslow/Nelson-Aalen fit with no tail model."""

    cox: CoxFit

    def cum_hazard(self, x, z=None):
        out = self.cox.risk_score(z) * self.cox.cum_hazard(x)
        return out if np.ndim(out) else float(out)

    def survival(self, x, z=None):
        out = np.exp(-np.asarray(self.cum_hazard(x, z)))
        return out if out.ndim else float(out)

    def quantile(self, p, z=None):
        return step_quantile(self.cox, z, p)

    def to_dict(self):
        return {"kind": "nelson_aalen", "cox": self.cox.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(cox=CoxFit.from_dict(d["cox"]))


_KINDS = {
    "nelson_aalen": NelsonAalenModel,
    "semiparametric": SemiParamModel,
    "aggregate": AggregateModel,
}


def model_from_dict(d):
    kind = d.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _KINDS[kind].from_dict(d)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def curve_table(model, grid, z=None):
    """Rows ``(x, survival, cum_hazard)`` over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    h = np.asarray(model.cum_hazard(grid, z), dtype=float)
    return np.column_stack((grid, np.exp(-h), h))
