"""Pipeline settings that reproduce the three benchmark studies."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..narx import NarxDictionary, boucwen_dictionary, duffing_dictionary, quarter_car_dictionary
from ..surrogate import NarxSettings, PceSettings
from .campaign import SYSTEMS


@dataclass(frozen=True)
class BenchmarkPreset:
    system: str
    dictionary: Callable[[], NarxDictionary]
    narx: NarxSettings
    pce: PceSettings
    n_ed: int
    # extra series compared after integrating the prediction (velocity models)
    derived_channel: str | None = None


# The coefficients of the ground-motion systems are poorly identified on
# weak records, so their PCEs are weighted by the inverse OLS variance and
# share one degree chosen on the ED free-run error.
_WEIGHTED = PceSettings(degree_selection="ed_reconstruction", weighting="inverse_variance")

PRESETS = {
    "quarter_car": BenchmarkPreset("quarter_car", quarter_car_dictionary, NarxSettings(threshold=1.2), PceSettings(), 100),
    "duffing": BenchmarkPreset("duffing", duffing_dictionary, NarxSettings(threshold=0.07), _WEIGHTED, 200),
    "boucwen": BenchmarkPreset(
        "boucwen", boucwen_dictionary, NarxSettings(threshold=0.25), _WEIGHTED, 200, "displacement"
    ),
}


def preset(system: str) -> BenchmarkPreset:
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    return PRESETS[system]
