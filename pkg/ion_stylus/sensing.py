"""
Quantum-limited sensing budget of a single trapped ion.

A weak resonant force F displaces the motional ground state into a coherent
state of amplitude alpha = F z0 t / (2 hbar), while heating adds
<n_n> = ndot t quanta. Setting <n_c> = <n_n> (signal-to-noise one) gives the
force sensitivity sqrt(ndot) 2 hbar / z0 per root hertz. Magnetic fields are
read out by Ramsey interrogation with projection-noise-limited resolution
1 / (2 pi slope sqrt(T_R tau)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import polars as pl

from ion_stylus.errors import ZeroHeatingRateError
from ion_stylus.model import CONSTANTS, IonSpecies

logger = logging.getLogger(__name__)

BOHR_SLOPE_HZ_PER_T = 14e6 / 1e-3  # 14 MHz/mT

MIN_MODE_FREQUENCY = 2 * math.pi * 1e4  # rad/s
MAX_MODE_FREQUENCY = 2 * math.pi * 1e8
TUNING_BAND_HZ = (1e5, 1e7)


@dataclass(frozen=True)
class OscillatorSpec:
    """One motional mode: angular frequency in rad/s, heating rate in quanta/s."""

    ion: IonSpecies
    mode_frequency: float
    heating_rate: float

    def __post_init__(self):
        if not MIN_MODE_FREQUENCY <= self.mode_frequency <= MAX_MODE_FREQUENCY:
            raise ValueError(
                f"Mode frequency {self.mode_frequency / (2 * math.pi):.4g} Hz outside the supported "
                f"10 kHz - 100 MHz band"
            )
        if self.heating_rate < 0:
            raise ValueError(f"Heating rate must be >= 0 quanta/s, got {self.heating_rate}")
        f_hz = self.mode_frequency_hz
        if not TUNING_BAND_HZ[0] <= f_hz <= TUNING_BAND_HZ[1]:
            logger.warning("Mode frequency %.4g Hz is outside the 100 kHz - 10 MHz tuning range", f_hz)

    @classmethod
    def from_hz(cls, ion: IonSpecies, mode_frequency_hz: float, heating_rate: float) -> "OscillatorSpec":
        return cls(ion, 2 * math.pi * mode_frequency_hz, heating_rate)

    @property
    def mode_frequency_hz(self) -> float:
        return self.mode_frequency / (2 * math.pi)


@dataclass(frozen=True)
class RamseySpec:
    """Ramsey interrogation: slope in Hz/T, precession and averaging times in s."""

    slope: float = BOHR_SLOPE_HZ_PER_T
    precession_time: float = 1.0
    averaging_time: float = 1.0

    def __post_init__(self):
        for name in ("slope", "precession_time", "averaging_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RamseySpec.{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class CoherentDrive:
    """Coherent amplitude after a drive, and the competing heating quanta."""

    alpha: float
    coherent_quanta: float
    heating_quanta: float

    @property
    def snr(self) -> float:
        """<n_c> / <n_n>; inf without heating."""
        if self.heating_quanta == 0:
            return math.inf if self.coherent_quanta > 0 else 0.0
        return self.coherent_quanta / self.heating_quanta


def ground_state_size(os: OscillatorSpec) -> float:
    """z0 = sqrt(hbar / (2 m omega)) in m."""
    return math.sqrt(CONSTANTS.hbar / (2.0 * os.ion.mass * os.mode_frequency))


def coherent_amplitude(force: float, os: OscillatorSpec, duration: float) -> CoherentDrive:
    """alpha = F z0 t / (2 hbar) for a resonant force F (N) applied for t (s)."""
    if duration < 0:
        raise ValueError(f"Drive duration must be >= 0 s, got {duration}")
    alpha = force * ground_state_size(os) * duration / (2.0 * CONSTANTS.hbar)
    return CoherentDrive(alpha, alpha * alpha, os.heating_rate * duration)


def _require_heating(os: OscillatorSpec) -> None:
    if os.heating_rate == 0:
        raise ZeroHeatingRateError(
            "Heating rate is zero: the sensitivity would be limited only by integration time. "
            "Pass the measured heating rate in quanta/s."
        )


def force_sensitivity(os: OscillatorSpec) -> float:
    """sqrt(ndot) 2 hbar / z0 in N/sqrt(Hz).

    Raises:
        ZeroHeatingRateError: If the heating rate is zero
    """
    _require_heating(os)
    return math.sqrt(os.heating_rate) * 2.0 * CONSTANTS.hbar / ground_state_size(os)


def efield_sensitivity(os: OscillatorSpec) -> float:
    """Force sensitivity divided by the ion charge, in (V/m)/sqrt(Hz)."""
    return force_sensitivity(os) / os.ion.charge


def bfield_resolution(rs: RamseySpec) -> float:
    """Delta B at the averaging time of ``rs``, in T."""
    return 1.0 / (2.0 * math.pi * rs.slope * math.sqrt(rs.precession_time * rs.averaging_time))


@dataclass(frozen=True)
class SensitivityBudget:
    oscillator: OscillatorSpec
    ramsey: RamseySpec
    z0: float
    force: float
    efield: float
    bfield: dict[float, float]  # averaging time (s) -> Delta B (T)

    def to_dict(self) -> dict:
        return {
            "inputs": {
                "ion": self.oscillator.ion.label,
                "ion_mass_kg": self.oscillator.ion.mass,
                "ion_charge_C": self.oscillator.ion.charge,
                "mode_frequency_Hz": self.oscillator.mode_frequency_hz,
                "heating_rate_per_s": self.oscillator.heating_rate,
                "slope_Hz_per_T": self.ramsey.slope,
                "precession_time_s": self.ramsey.precession_time,
            },
            "z0_m": self.z0,
            "force_N_per_rtHz": self.force,
            "efield_Vpm_per_rtHz": self.efield,
            "deltaB_T": [{"tau_s": tau, "deltaB_T": b} for tau, b in self.bfield.items()],
        }


def sensitivity_budget(
    os: OscillatorSpec,
    ramsey: RamseySpec | None = None,
    taus: Sequence[float] = (1.0,),
) -> SensitivityBudget:
    """Force, field and magnetic-field figures for one mode and one Ramsey scheme."""
    ramsey = RamseySpec() if ramsey is None else ramsey
    bfield = {}
    for tau in taus:
        rs = RamseySpec(ramsey.slope, ramsey.precession_time, float(tau))
        bfield[float(tau)] = bfield_resolution(rs)
    return SensitivityBudget(
        oscillator=os,
        ramsey=ramsey,
        z0=ground_state_size(os),
        force=force_sensitivity(os),
        efield=efield_sensitivity(os),
        bfield=bfield,
    )


def oscillator_from_report(report, mode: str, heating_rate: float, ion: IonSpecies) -> OscillatorSpec:
    """OscillatorSpec for one labelled mode of a TrapReport."""
    return OscillatorSpec.from_hz(ion, report.mode(mode).frequency_hz, heating_rate)


def sensitivity_table(
    ion: IonSpecies,
    frequencies_hz: Sequence[float] = (1e5, 1e6, 1e7),
    heating_rates: Sequence[float] = (200.0, 1000.0, 2000.0),
) -> pl.DataFrame:
    """Force and field sensitivity over a grid of mode frequencies and heating rates."""
    rows = []
    for f in frequencies_hz:
        for ndot in heating_rates:
            os = OscillatorSpec.from_hz(ion, f, ndot)
            rows.append({
                "mode_frequency_Hz": float(f),
                "heating_rate_per_s": float(ndot),
                "z0_nm": ground_state_size(os) * 1e9,
                "force_yN_per_rtHz": force_sensitivity(os) * 1e24,
                "efield_uV_per_m_per_rtHz": efield_sensitivity(os) * 1e6,
            })
    return pl.DataFrame(rows)
