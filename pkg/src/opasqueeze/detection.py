"""Itemized detection-loss budget.

Every impairment between the squeezer and the recorded photocurrent is
expressed as an equivalent optical loss; independent losses compose
multiplicatively in transmission.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ._io import atomic_write_text
from .errors import InvalidArgumentError, ParseError
from .squeezer import module_internal_loss

# h c / e in eV nm
HC_OVER_E_EV_NM = 1239.841984

PROVENANCES = ("measured-transmittance", "excess-loss", "responsivity", "electronic", "assumed")


@dataclass(frozen=True)
class LossElement:
    name: str
    loss: float
    provenance: str = "assumed"

    def __post_init__(self):
        if not (0.0 <= self.loss <= 1.0):
            raise InvalidArgumentError(f"loss element {self.name!r}: loss must lie in [0, 1], got {self.loss!r}")
        if self.provenance not in PROVENANCES:
            raise InvalidArgumentError(
                f"loss element {self.name!r}: provenance must be one of {PROVENANCES}, got {self.provenance!r}"
            )

    @property
    def transmittance(self) -> float:
        return 1.0 - self.loss


@dataclass(frozen=True)
class LossBudget:
    elements: tuple[LossElement, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def total(self) -> float:
        return compose(self)

    def without(self, *names: str) -> "LossBudget":
        return LossBudget(tuple(e for e in self.elements if e.name not in names))

    def to_json(self) -> str:
        return json.dumps([asdict(e) for e in self.elements], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LossBudget":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(raw, list):
            raise ParseError("budget must be a JSON array of {name, loss, provenance}")
        elements = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict) or "name" not in item or "loss" not in item:
                raise ParseError(f"budget entry {i} must have 'name' and 'loss'")
            elements.append(
                LossElement(str(item["name"]), float(item["loss"]), item.get("provenance", "assumed"))
            )
        return cls(tuple(elements))

    def save(self, path) -> None:
        atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "LossBudget":
        return cls.from_json(Path(path).read_text())


def compose(budget) -> float:
    """Total loss ``1 - prod(1 - loss_i)``.

    Accepts a :class:`LossBudget`, or any iterable of elements or bare floats.
    """
    items = budget.elements if isinstance(budget, LossBudget) else budget
    transmission = 1.0
    for item in items:
        loss = item.loss if isinstance(item, LossElement) else float(item)
        if not (0.0 <= loss <= 1.0):
            raise InvalidArgumentError(f"loss must lie in [0, 1], got {loss!r}")
        transmission *= 1.0 - loss
    return 1.0 - transmission


def excess_loss_of_coupler(measured_transmittance: float, nominal_split: float) -> float:
    """Loss beyond the ideal split ratio, ``1 - measured / nominal``."""
    if not (0.0 < nominal_split <= 1.0):
        raise InvalidArgumentError(f"nominal split must lie in (0, 1], got {nominal_split!r}")
    if measured_transmittance < 0:
        raise InvalidArgumentError("measured transmittance must be >= 0")
    if measured_transmittance > nominal_split:
        raise InvalidArgumentError(
            f"measured transmittance {measured_transmittance} exceeds nominal split {nominal_split}"
        )
    return 1.0 - measured_transmittance / nominal_split


def quantum_efficiency(responsivity: float, wavelength_nm: float) -> float:
    """Photodiode quantum efficiency from responsivity (A/W) at a wavelength (nm)."""
    if not (responsivity > 0 and wavelength_nm > 0):
        raise InvalidArgumentError("responsivity and wavelength must be positive")
    qe = responsivity * HC_OVER_E_EV_NM / wavelength_nm
    if qe > 1.0:
        raise InvalidArgumentError(
            f"responsivity {responsivity} A/W at {wavelength_nm} nm implies QE {qe:.4f} > 1"
        )
    return qe


def qe_from_responsivity(responsivity: float, wavelength_nm: float) -> float:
    """Equivalent loss ``1 - QE`` of a detector with the given responsivity."""
    return 1.0 - quantum_efficiency(responsivity, wavelength_nm)


def electronic_noise_loss(clearance_db: float) -> float:
    """Equivalent loss of an electronic noise floor ``clearance_db`` below shot noise."""
    if not clearance_db >= 0:
        raise InvalidArgumentError(f"clearance must be >= 0 dB, got {clearance_db!r}")
    if math.isinf(clearance_db):
        return 0.0
    return 10.0 ** (-clearance_db / 10.0)


def clearance_from_loss(loss: float) -> float:
    """Shot-noise clearance (dB) whose equivalent loss is ``loss``."""
    if not (0.0 < loss <= 1.0):
        raise InvalidArgumentError(f"loss must lie in (0, 1], got {loss!r}")
    return -10.0 * math.log10(loss)


# element constructors

def module_element(transmittance_1550: float, name: str = "module") -> LossElement:
    return LossElement(name, module_internal_loss(transmittance_1550), "measured-transmittance")


def coupler_element(measured: float, nominal: float = 0.5, name: str = "coupler") -> LossElement:
    return LossElement(name, excess_loss_of_coupler(measured, nominal), "excess-loss")


def detector_element(responsivity: float, wavelength_nm: float, name: str = "detector") -> LossElement:
    return LossElement(name, qe_from_responsivity(responsivity, wavelength_nm), "responsivity")


def electronic_element(loss: float | None = None, clearance_db: float | None = None,
                       name: str = "electronics") -> LossElement:
    if (loss is None) == (clearance_db is None):
        raise InvalidArgumentError("give exactly one of loss or clearance_db")
    if loss is None:
        loss = electronic_noise_loss(clearance_db)
    return LossElement(name, loss, "electronic")


def fiber_setup_budget() -> LossBudget:
    """The four-element budget of the fiber-coupled setup (1553.3 nm)."""
    return LossBudget((
        module_element(0.56),
        coupler_element(0.45, 0.50),
        detector_element(1.16, 1553.3),
        electronic_element(0.02),
    ))
