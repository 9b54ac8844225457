"""
Continuous-time circuit models of the islanded hybrid microgrid.

The DC side (PV boost stage, battery half-bridge, DC bus) and the AC side
(m inverters, each with an LC filter and a line inductor to the common PCC
load) are integrated with RK4 at the fine plant step while switch commands
are held constant.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import NumericalBlowup
from src.models import DcSideParams, VsiParams
from src.numerics import LowPassFilter, ThreePhase, TwoAxis, clarke_forward, clarke_inverse, integrate_step

logger = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e9

BatteryPair = Tuple[int, int]
BAT_10: BatteryPair = (1, 0)
BAT_01: BatteryPair = (0, 1)

# Upper-switch states (a, b, c) of a two-level bridge, index n = 0..7; 0 and 7 are the zero vectors.
LEG_STATES = (
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 1, 1), (0, 0, 1), (1, 0, 1), (1, 1, 1),
)


def _unit_vector(legs: Tuple[int, int, int]) -> List[float]:
    """Stationary-frame bridge voltage per 2/3 V_in for one set of leg states"""
    v = clarke_forward(ThreePhase(*(1.5 * s for s in legs)))
    return [v.alpha, v.beta]


VECTOR_UNITS = np.array([_unit_vector(legs) for legs in LEG_STATES])


def switching_voltages(indices: Sequence[int], v_in: Sequence[float]) -> np.ndarray:
    """Output voltage vectors, shape (m, 2), for one vector index per inverter"""
    scale = (2.0 / 3.0) * np.asarray(v_in, dtype=float)
    return VECTOR_UNITS[np.asarray(indices, dtype=int)] * scale[:, None]


def load_impedance_for_power(power: float, v_peak: float) -> float:
    """Resistive PCC load drawing `power` at phase peak voltage v_peak"""
    if power <= 0:
        raise ValueError(f"load power must be positive, got {power}")
    return 1.5 * v_peak * v_peak / power


@dataclass(frozen=True)
class DcSideState:
    v_PV: float
    i_PV: float
    i_bat: float
    v_DC: float
    i_o: float = 0.0

    def __post_init__(self):
        if self.v_PV < 0 or self.v_DC < 0:
            raise ValueError(f"DC-side voltages must be non-negative: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.v_PV, self.i_PV, self.i_bat, self.v_DC], dtype=float)

    @staticmethod
    def from_array(x: np.ndarray, i_o: float = 0.0) -> "DcSideState":
        return DcSideState(max(float(x[0]), 0.0), float(x[1]), float(x[2]), max(float(x[3]), 0.0), i_o)


@dataclass(frozen=True)
class VsiState:
    i_F: TwoAxis
    v_Bus: TwoAxis
    i_T: TwoAxis

    def to_array(self) -> np.ndarray:
        return np.array([[self.i_F.alpha, self.i_F.beta],
                         [self.v_Bus.alpha, self.v_Bus.beta],
                         [self.i_T.alpha, self.i_T.beta]], dtype=float)

    @staticmethod
    def from_array(x: np.ndarray) -> "VsiState":
        return VsiState(TwoAxis.from_array(x[0]), TwoAxis.from_array(x[1]), TwoAxis.from_array(x[2]))

    @staticmethod
    def zero() -> "VsiState":
        return VsiState(TwoAxis.zero(), TwoAxis.zero(), TwoAxis.zero())


def stack_vsi_states(states: Sequence[VsiState]) -> np.ndarray:
    return np.stack([s.to_array() for s in states])


def unstack_vsi_states(x: np.ndarray) -> List[VsiState]:
    return [VsiState.from_array(row) for row in x]


@dataclass
class NetworkState:
    dc: DcSideState
    vsis: List[VsiState]
    Z_AC: float
    P_dcload: float
    irradiance: float = 1000.0
    temperature: float = 25.0

    def __post_init__(self):
        if self.Z_AC <= 0:
            raise ValueError(f"Z_AC must be positive, got {self.Z_AC}")
        if not self.vsis:
            raise ValueError("at least one VSI is required")


def _check_finite(x: np.ndarray, what: str):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > BLOWUP_LIMIT):
        raise NumericalBlowup(f"{what} state diverged: {np.array2string(np.asarray(x).ravel(), precision=3)}")


class DcSide:
    """PV boost stage, battery half-bridge and DC bus capacitor.

    State vector: [v_PV, i_PV, i_bat, v_DC].
    """

    def __init__(self, params: DcSideParams):
        self.params = params

    def derivative(self, x: np.ndarray, s_pv: int, s_bat1: int, i_o: float,
                   p_dcload: float, i_array: float) -> np.ndarray:
        p = self.params
        v_pv, i_pv, i_bat, v_dc = x
        i_load = p_dcload / v_dc if v_dc > 0 else 0.0
        return np.array([
            (i_array - i_pv) / p.C_PV,
            (v_pv - (1 - s_pv) * v_dc - p.R_parasitic * i_pv) / p.L_PV,
            (p.V_bat - i_bat * p.R_bat - s_bat1 * v_dc) / p.L_bat,
            ((1 - s_pv) * i_pv + s_bat1 * i_bat - i_load - i_o) / p.C_bat,
        ])

    def step(self, x: np.ndarray, s_pv: int, s_bat1: int, i_o: float,
             p_dcload: float, i_array: float, dt: float) -> np.ndarray:
        x_next = integrate_step(
            x, lambda y: self.derivative(y, s_pv, s_bat1, i_o, p_dcload, i_array), dt
        )
        _check_finite(x_next, "DC-side")
        # the boost diode blocks reverse inductor current
        if x_next[1] < 0.0:
            x_next[1] = 0.0
        if x_next[0] < 0.0:
            x_next[0] = 0.0
        return x_next


def step_dc_side(state: DcSideState, params: DcSideParams, pv_switch: bool, bat_pair: BatteryPair,
                 i_o: float, p_dcload: float, pv_current_source: float, dt: float) -> DcSideState:
    """Advance the DC side by one RK4 step of dt with switches and sources held"""
    if bat_pair not in (BAT_10, BAT_01):
        raise ValueError(f"battery switches must be complementary, got {bat_pair}")
    x = DcSide(params).step(state.to_array(), int(bool(pv_switch)), bat_pair[0], i_o,
                            p_dcload, pv_current_source, dt)
    return DcSideState.from_array(x, i_o)


class AcNetwork:
    """m inverters with LC filters and line inductors feeding one resistive PCC load.

    State array shape (m, 3, 2): per inverter [i_F, v_Bus, i_T] on the alpha/beta axes.
    """

    def __init__(self, params: Sequence[VsiParams]):
        self.params = list(params)
        col = lambda name: np.array([getattr(p, name) for p in self.params], dtype=float)[:, None]
        self.R_F, self.L_F, self.C_f = col("R_F"), col("L_F"), col("C_f")
        self.R_T, self.L_T = col("R_T"), col("L_T")
        self.g_local = np.array(
            [0.0 if p.local_load_ohms is None else 1.0 / p.local_load_ohms for p in self.params]
        )[:, None]

    @property
    def size(self) -> int:
        return len(self.params)

    def derivative(self, x: np.ndarray, v_n: np.ndarray, z_ac: float) -> np.ndarray:
        i_f, v_bus, i_t = x[:, 0, :], x[:, 1, :], x[:, 2, :]
        v_pcc = z_ac * i_t.sum(axis=0)
        di_f = (v_n - self.R_F * i_f - v_bus) / self.L_F
        dv_bus = (i_f - i_t - self.g_local * v_bus) / self.C_f
        di_t = (v_bus - self.R_T * i_t - v_pcc) / self.L_T
        return np.stack((di_f, dv_bus, di_t), axis=1)

    def step(self, x: np.ndarray, v_n: np.ndarray, z_ac: float, dt: float) -> np.ndarray:
        x_next = integrate_step(x, lambda y: self.derivative(y, v_n, z_ac), dt)
        _check_finite(x_next, "AC-side")
        return x_next


def step_ac_side(states: Sequence[VsiState], params: Sequence[VsiParams], vectors: Sequence[int],
                 Z_AC: float, dt: float, v_in: Optional[Sequence[float]] = None) -> List[VsiState]:
    """Advance all inverters by one RK4 step of dt with their switching vectors held.

    v_in overrides each inverter's DC input voltage (VSI 1 runs from the DC bus).
    """
    if not (len(states) == len(params) == len(vectors)):
        raise ValueError("states, params and vectors must have the same length")
    if v_in is None:
        v_in = [p.V_in for p in params]
    v_n = switching_voltages(vectors, v_in)
    x = AcNetwork(params).step(stack_vsi_states(states), v_n, Z_AC, dt)
    return unstack_vsi_states(x)


def pcc_voltage(states: Sequence[VsiState], Z_AC: float) -> TwoAxis:
    alpha = sum(s.i_T.alpha for s in states)
    beta = sum(s.i_T.beta for s in states)
    return TwoAxis(Z_AC * alpha, Z_AC * beta)


def vsi_output_powers(x: np.ndarray) -> np.ndarray:
    """Active power delivered by each inverter's local bus into its line, shape (m,)"""
    return 1.5 * np.sum(x[:, 1, :] * x[:, 2, :], axis=-1)


def vsi_reactive_powers(x: np.ndarray) -> np.ndarray:
    v, i = x[:, 1, :], x[:, 2, :]
    return 1.5 * (v[:, 1] * i[:, 0] - v[:, 0] * i[:, 1])


@dataclass
class PowerReport:
    """Power flows in watts; battery power is negative while charging"""
    p_pv: float
    p_bat: float
    p_dcload: float
    p_vsi: List[float]
    p_pcc_load: float


def bridge_input_current(n: int, i_f: np.ndarray) -> float:
    """DC current drawn by a lossless bridge applying vector n while carrying filter current i_f.

    Each phase whose upper switch conducts draws its current from the DC rail.
    """
    phases = clarke_inverse(TwoAxis(float(i_f[0]), float(i_f[1])))
    s_a, s_b, s_c = LEG_STATES[n]
    return s_a * phases.a + s_b * phases.b + s_c * phases.c


def battery_current_for_power(p_bat: float, params: DcSideParams) -> float:
    """Battery current delivering p_bat at the converter terminal (negative when charging)"""
    if params.R_bat == 0:
        return p_bat / params.V_bat
    disc = params.V_bat ** 2 - 4.0 * params.R_bat * p_bat
    if disc < 0:
        raise ValueError(f"battery cannot deliver {p_bat:.0f} W")
    return (params.V_bat - math.sqrt(disc)) / (2.0 * params.R_bat)


def power_report(x_dc: np.ndarray, x_ac: np.ndarray, z_ac: float, p_dcload: float,
                 params: DcSideParams) -> PowerReport:
    v_pv, i_pv, i_bat = x_dc[0], x_dc[1], x_dc[2]
    v_pcc = z_ac * x_ac[:, 2, :].sum(axis=0)
    return PowerReport(
        p_pv=float(v_pv * i_pv),
        p_bat=float((params.V_bat - params.R_bat * i_bat) * i_bat),
        p_dcload=float(p_dcload),
        p_vsi=[float(p) for p in vsi_output_powers(x_ac)],
        p_pcc_load=float(1.5 * (v_pcc @ v_pcc) / z_ac),
    )


def power_flows(state: NetworkState, params: DcSideParams) -> PowerReport:
    """Instantaneous power flows of the network (unfiltered)"""
    return power_report(state.dc.to_array(), stack_vsi_states(state.vsis), state.Z_AC, state.P_dcload, params)


@dataclass
class PowerMeter:
    """Low-pass filters the reported power flows, one filter per channel"""
    cutoff_hz: float
    dt: float
    _filters: dict = field(default_factory=dict, init=False, repr=False)

    def _filter(self, key: str, x: float) -> float:
        filt = self._filters.get(key)
        if filt is None:
            filt = self._filters[key] = LowPassFilter(self.cutoff_hz, self.dt, initial=x)
            return x
        return filt.update(x)

    def update(self, report: PowerReport) -> PowerReport:
        return PowerReport(
            p_pv=self._filter("p_pv", report.p_pv),
            p_bat=self._filter("p_bat", report.p_bat),
            p_dcload=self._filter("p_dcload", report.p_dcload),
            p_vsi=[self._filter(f"p_vsi{k + 1}", p) for k, p in enumerate(report.p_vsi)],
            p_pcc_load=self._filter("p_pcc_load", report.p_pcc_load),
        )
