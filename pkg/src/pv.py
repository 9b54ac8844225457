"""
Single-diode PV array model, maximum-power oracle and Incremental Conductance MPPT.
"""

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from src.models import PvArrayParams
from src.numerics import TWO_PI

logger = logging.getLogger(__name__)

BOLTZMANN = 1.380649e-23
ELECTRON_CHARGE = 1.602176634e-19
BANDGAP_EV = 1.12
T_REF_K = 298.15
G_REF = 1000.0
MAX_EXPONENT = 700.0

DEFAULT_ARRAY_POWER = 35000.0


def _thermal_voltage(params: PvArrayParams, temperature: float) -> float:
    """Modified ideality voltage n * Ns * kT/q of one string"""
    t_k = temperature + 273.15
    return params.diode_ideality * params.series_cells * BOLTZMANN * t_k / ELECTRON_CHARGE


def _photo_current(params: PvArrayParams, irradiance: float, temperature: float) -> float:
    return (params.I_sc_stc + params.temp_coeff_isc * (temperature - 25.0)) * irradiance / G_REF


def _saturation_current(params: PvArrayParams, temperature: float) -> float:
    a_ref = _thermal_voltage(params, 25.0)
    i0_ref = (params.I_sc_stc - params.V_oc_stc / params.R_sh) / math.expm1(params.V_oc_stc / a_ref)
    t_k = temperature + 273.15
    exponent = ELECTRON_CHARGE * BANDGAP_EV / (params.diode_ideality * BOLTZMANN) * (1.0 / T_REF_K - 1.0 / t_k)
    return i0_ref * (t_k / T_REF_K) ** 3 * math.exp(exponent)


def _string_current(v: float, iph: float, i0: float, a: float, params: PvArrayParams) -> float:
    def residual(i: float) -> float:
        vd = v + i * params.R_s
        return iph - i0 * math.expm1(min(vd / a, MAX_EXPONENT)) - vd / params.R_sh - i

    lo = -v / params.R_s - 1e-9
    hi = iph + 1e-9
    return brentq(residual, lo, hi, xtol=1e-12, maxiter=200)


def pv_array_current(v: float, irradiance: float, temperature: float, params: PvArrayParams) -> float:
    """Array terminal current at voltage v (amps); negative above the open-circuit voltage"""
    if v < 0:
        raise ValueError(f"PV voltage must be non-negative, got {v}")
    if irradiance < 0:
        raise ValueError(f"irradiance must be non-negative, got {irradiance}")
    iph = _photo_current(params, irradiance, temperature)
    i0 = _saturation_current(params, temperature)
    a = _thermal_voltage(params, temperature)
    return params.parallel_strings * _string_current(v, iph, i0, a, params)


def open_circuit_voltage(irradiance: float, temperature: float, params: PvArrayParams) -> float:
    if irradiance <= 0:
        return 0.0
    hi = params.V_oc_stc
    while pv_array_current(hi, irradiance, temperature, params) > 0:
        hi *= 1.5
    return brentq(lambda v: pv_array_current(v, irradiance, temperature, params), 0.0, hi, xtol=1e-9)


def mpp_oracle(irradiance: float, temperature: float, params: PvArrayParams) -> Tuple[float, float]:
    """Maximum power point (V_mpp, P_mpp) by a grid bracket refined with a bounded Brent search"""
    if irradiance <= 0:
        raise ValueError(f"irradiance must be positive, got {irradiance}")
    v_oc = open_circuit_voltage(irradiance, temperature, params)
    power = lambda v: v * pv_array_current(v, irradiance, temperature, params)

    grid = np.linspace(0.0, v_oc, 201)
    k = int(np.argmax([power(v) for v in grid]))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    result = minimize_scalar(lambda v: -power(v), bounds=(lo, hi), method="bounded",
                             options={"xatol": 0.01})
    v_mpp = float(result.x)
    return v_mpp, power(v_mpp)


@lru_cache(maxsize=16)
def calibrated_array_params(target_power: float = DEFAULT_ARRAY_POWER,
                            base: Optional[PvArrayParams] = None) -> PvArrayParams:
    """Array parameters whose STC maximum power equals target_power (solves the string I_sc)"""
    base = base or PvArrayParams()

    def excess(isc: float) -> float:
        return mpp_oracle(G_REF, 25.0, base.model_copy(update={"I_sc_stc": isc}))[1] - target_power

    guess = target_power / (0.8 * base.V_oc_stc * base.parallel_strings)
    isc = brentq(excess, 0.5 * guess, 2.0 * guess, xtol=1e-9)
    logger.debug(f"Calibrated PV string I_sc={isc:.6f} A for {target_power:.0f} W at STC")
    return base.model_copy(update={"I_sc_stc": isc})


@lru_cache(maxsize=64)
def irradiance_for_power(target_power: float, temperature: float = 25.0,
                         params: Optional[PvArrayParams] = None) -> float:
    """Irradiance at which the array's maximum power equals target_power"""
    params = params or calibrated_array_params()
    g = brentq(lambda g: mpp_oracle(g, temperature, params)[1] - target_power, 1.0, 2.0 * G_REF, xtol=1e-6)
    logger.debug(f"Irradiance {g:.3f} W/m2 yields {target_power:.0f} W")
    return g


class IvCurveTable:
    """Tabulated I-V curve for fixed weather, interpolated in the plant's inner loop"""

    def __init__(self, irradiance: float, temperature: float, params: PvArrayParams, points: int = 2001):
        self.irradiance = irradiance
        self.temperature = temperature
        self.v_oc = open_circuit_voltage(irradiance, temperature, params)
        v_max = max(1.05 * self.v_oc, 1.0)
        self.voltages = np.linspace(0.0, v_max, points)
        self.currents = np.array(
            [pv_array_current(v, irradiance, temperature, params) for v in self.voltages]
        )
        self._end_slope = (self.currents[-1] - self.currents[-2]) / (self.voltages[-1] - self.voltages[-2])

    def current(self, v: float) -> float:
        if v <= self.voltages[-1]:
            return float(np.interp(v, self.voltages, self.currents))
        return float(self.currents[-1] + self._end_slope * (v - self.voltages[-1]))

    @staticmethod
    @lru_cache(maxsize=32)
    def for_conditions(irradiance: float, temperature: float, params: PvArrayParams) -> "IvCurveTable":
        return IvCurveTable(irradiance, temperature, params)


@dataclass(frozen=True)
class MpptState:
    """Incremental Conductance tracker state.

    p_filtered is the smoothed measured power; p_mpp_estimate extrapolates it
    to v_target. The controller is driven by v_target through pv_power_reference.
    """
    v_prev: float
    i_prev: float
    p_mpp_estimate: float
    v_target: float
    p_filtered: float = 0.0
    v_limit: float = math.inf

    def __post_init__(self):
        if not 0.0 <= self.v_target <= self.v_limit:
            raise ValueError(f"v_target {self.v_target} outside [0, {self.v_limit}]")

    @staticmethod
    def start(v: float, i: float, v_limit: float) -> "MpptState":
        """Tracker seeded at the present operating point"""
        p = v * i
        return MpptState(v_prev=0.0, i_prev=0.0, p_mpp_estimate=p,
                         v_target=min(max(v, 0.0), v_limit), p_filtered=p, v_limit=v_limit)


def _direction(dv: float, di: float, v: float, i: float, epsilon: float) -> int:
    if abs(dv) < epsilon:
        if di == 0.0:
            return 0
        return 1 if di > 0 else -1
    if v <= 0.0:
        return 1
    slope, conductance = di / dv, -i / v
    if math.isclose(slope, conductance, rel_tol=1e-12, abs_tol=1e-15):
        return 0
    return 1 if slope > conductance else -1


def mppt_step(state: MpptState, v: float, i: float, step: float,
              epsilon: float = 0.01, smoothing: float = 0.2) -> MpptState:
    """One Incremental Conductance iteration on the measured (v, i)"""
    if step <= 0:
        raise ValueError(f"MPPT step must be positive, got {step}")
    direction = _direction(v - state.v_prev, i - state.i_prev, v, i, epsilon)
    v_target = min(max(state.v_target + direction * step, 0.0), state.v_limit)
    p_filtered = state.p_filtered + smoothing * (v * i - state.p_filtered)
    logger.debug(f"MPPT v={v:.3f} i={i:.3f} direction={direction:+d} target={v_target:.2f}")
    return replace(
        state,
        v_prev=v,
        i_prev=i,
        v_target=v_target,
        p_filtered=p_filtered,
        p_mpp_estimate=p_filtered + i * (v - v_target),
    )


def pv_power_reference(v_pv: float, v_pv_prev: float, i_array: float, v_target: float,
                       C_PV: float, bandwidth_hz: float) -> float:
    """Power reference that steers the PV terminal voltage to the tracker's v_target.

    The measured array current is fed forward and the voltage error is
    removed through the terminal capacitor at `bandwidth_hz`. The resulting
    inductor current is expressed as power at the extrapolated next-sample
    voltage, so the PV controller's power cost reduces to current tracking.
    """
    i_ref = max(i_array + C_PV * TWO_PI * bandwidth_hz * (v_pv - v_target), 0.0)
    return i_ref * (2.0 * v_pv - v_pv_prev)
