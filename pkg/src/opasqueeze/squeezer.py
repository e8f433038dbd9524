"""Single-pass OPA module: pump power to noise levels.

The squeezing parameter of a single-pass degenerate parametric amplifier
is ``r = sqrt(a p)`` with ``a`` the SHG efficiency (W^-1) and ``p`` the
incident pump power (W). After a total detection loss ``L`` the squeezed
and anti-squeezed noise levels relative to shot noise are::

    R_minus = L + (1 - L) exp(-2 sqrt(a p))
    R_plus  = L + (1 - L) exp(+2 sqrt(a p))
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


def pct_per_w_to_si(a_pct_per_w: float) -> float:
    """Convert an SHG efficiency in % W^-1 to W^-1."""
    return a_pct_per_w / 100.0


def si_to_pct_per_w(a: float) -> float:
    return a * 100.0


@dataclass(frozen=True)
class OpaParams:
    """OPA module parameters.

    Attributes:
        a: SHG efficiency in W^-1 (1034 % W^-1 is ``a=10.34``).
        transmittance_1550: module transmittance for the squeezed light.
        transmittance_780: module transmittance for the pump.
    """

    a: float
    transmittance_1550: float = 1.0
    transmittance_780: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a >= 0):
            raise InvalidArgumentError(f"SHG efficiency must be >= 0, got {self.a!r}")
        for name in ("transmittance_1550", "transmittance_780"):
            t = getattr(self, name)
            if not (0.0 < t <= 1.0):
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {t!r}")

    @classmethod
    def from_pct_per_w(cls, a_pct_per_w: float, **kwargs) -> "OpaParams":
        return cls(a=pct_per_w_to_si(a_pct_per_w), **kwargs)

    @property
    def a_pct_per_w(self) -> float:
        return si_to_pct_per_w(self.a)

    def squeezing_parameter(self, pump_power: float) -> float:
        return squeezing_parameter(self.a, pump_power)

    def internal_loss(self) -> float:
        return module_internal_loss(self.transmittance_1550)


@dataclass(frozen=True)
class PumpPoint:
    """Incident pump power, optionally with the monitor reading it came from."""

    incident_power: float
    monitored_power: float | None = None

    def __post_init__(self):
        if self.incident_power < 0 or (self.monitored_power is not None and self.monitored_power < 0):
            raise InvalidArgumentError("pump powers must be >= 0")

    @classmethod
    def from_monitor(cls, monitored_power: float, transmittance_780: float) -> "PumpPoint":
        return cls(incident_pump_from_monitor(monitored_power, transmittance_780), monitored_power)


def incident_pump_from_monitor(monitored_power: float, transmittance_780: float) -> float:
    """Incident pump power inferred from the power transmitted through the module."""
    if not (0.0 < transmittance_780 <= 1.0):
        raise InvalidArgumentError(f"pump transmittance must lie in (0, 1], got {transmittance_780!r}")
    if monitored_power < 0:
        raise InvalidArgumentError("monitored power must be >= 0")
    return monitored_power / transmittance_780


def squeezing_parameter(a: float, pump_power: float) -> float:
    if a < 0 or pump_power < 0:
        raise InvalidArgumentError("SHG efficiency and pump power must be >= 0")
    return math.sqrt(a * pump_power)


def _check_model_args(a, p, loss):
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a < 0):
        raise InvalidArgumentError("SHG efficiency must be finite and >= 0")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise InvalidArgumentError("pump power must be finite and >= 0")
    if np.any(~(loss >= 0)) or np.any(~(loss <= 1)):
        raise InvalidArgumentError("loss must lie in [0, 1]")
    return a, p, loss


def noise_levels(a, p, loss):
    """Squeezed and anti-squeezed noise powers relative to shot noise.

    Broadcasts over array arguments.

    Returns:
        tuple: ``(R_minus, R_plus)``, linear (not dB).
    """
    a, p, loss = _check_model_args(a, p, loss)
    two_r = 2.0 * np.sqrt(a * p)
    r_minus = loss + (1.0 - loss) * np.exp(-two_r)
    r_plus = loss + (1.0 - loss) * np.exp(two_r)
    if r_minus.ndim == 0:
        return float(r_minus), float(r_plus)
    return r_minus, r_plus


def noise_levels_db(a, p, loss):
    """:func:`noise_levels` in dB."""
    r_minus, r_plus = noise_levels(a, p, loss)
    return 10.0 * np.log10(r_minus), 10.0 * np.log10(r_plus)


def module_internal_loss(transmittance_1550: float) -> float:
    """Effective loss seen by light generated halfway along the waveguide.

    Half of the module's total loss (in the multiplicative sense) lies
    after the generation point, giving ``1 - sqrt(T)``.
    """
    if not (0.0 < transmittance_1550 <= 1.0):
        raise InvalidArgumentError(f"transmittance must lie in (0, 1], got {transmittance_1550!r}")
    return 1.0 - math.sqrt(transmittance_1550)
