"""Published per-dataset bank hyperparameters: order, scale count, scale caps,
tightness and operator threshold (``None`` where no threshold is used)."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Preset:
    name: str
    rho: int
    J: int
    s_bar: tuple[float, ...]
    tight: bool
    threshold: float | None


PRESETS: dict[str, Preset] = {
    p.name: p for p in [
        Preset("CS", 3, 3, (0.5, 0.5, 0.5), True, 0.1),
        Preset("Photo", 3, 3, (1.0, 1.0, 1.0), True, 0.1),
        Preset("Computer", 7, 3, (10.0, 10.0, 10.0), True, 0.1),
        Preset("CoraFull", 3, 3, (2.0, 2.0, 2.0), True, 0.1),
        Preset("ogbn-arxiv", 3, 3, (5.0, 5.0, 5.0), False, None),
        Preset("PascalVOC-SP", 5, 3, (0.5, 1.0, 10.0), True, None),
        Preset("PCQM-Contact", 5, 3, (0.5, 1.0, 5.0), True, None),
        Preset("COCO-SP", 3, 3, (0.5, 1.0, 10.0), True, None),
        Preset("Peptides-func", 5, 3, (10.0, 10.0, 10.0), True, None),
        Preset("Peptides-struct", 3, 3, (10.0, 10.0, 10.0), False, None),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
