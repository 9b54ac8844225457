"""
Finite-control-set model predictive controllers.

Each controller predicts the next sample for every admissible switch state,
scores the predictions with its cost and applies the argmin. Ties resolve
deterministically: PV to OFF, battery to (0,1), VSI group to the
lexicographically smallest vector tuple.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ControlSetTooLarge
from src.models import ControlConfig, DcSideParams, DroopConfig, VsiParams
from src.numerics import TWO_PI, LowPassFilter, TwoAxis
from src.plant import (
    BAT_01,
    BAT_10,
    VECTOR_UNITS,
    BatteryPair,
    VsiState,
    battery_current_for_power,
    stack_vsi_states,
    unstack_vsi_states,
)

MAX_JOINT_CANDIDATES = 10 ** 6
TRIM_BOUNDS = (0.5, 2.0)


@dataclass(frozen=True)
class PvMeasurement:
    v_pv_k: float
    v_pv_km1: float
    i_pv_k: float
    p_mpp: float


@dataclass(frozen=True)
class DcMeasurement:
    v_dc_k: float
    i_bat_k: float
    i_o_k: float


@dataclass(frozen=True)
class VsiPrediction:
    states: List[VsiState]
    v_pcc_next: TwoAxis


# ---------------------------------------------------------------- PV boost stage

def predict_pv(meas: PvMeasurement, cfg: ControlConfig, L_PV: float, switch: bool) -> Tuple[float, float, float]:
    """Next-sample inductor current, terminal voltage and power for one switch state"""
    if switch:
        i_next = meas.i_pv_k + (cfg.T_S / L_PV) * meas.v_pv_k
    else:
        i_next = meas.i_pv_k
    v_next = 2.0 * meas.v_pv_k - meas.v_pv_km1
    return i_next, v_next, i_next * v_next


def select_pv_switch(meas: PvMeasurement, cfg: ControlConfig, L_PV: float) -> bool:
    """Switch state whose predicted power lies closest to P_MPP"""
    j_on = abs(predict_pv(meas, cfg, L_PV, True)[2] - meas.p_mpp)
    j_off = abs(predict_pv(meas, cfg, L_PV, False)[2] - meas.p_mpp)
    return bool(j_on < j_off)


# ---------------------------------------------------------------- battery converter

def predict_dc_bus(meas: DcMeasurement, cfg: ControlConfig, C_bat: float) -> Tuple[float, float]:
    """Next-sample DC bus voltage for S=(1,0) and S=(0,1)"""
    if C_bat <= 0:
        raise ValueError(f"C_bat must be positive, got {C_bat}")
    gain = cfg.T_S / C_bat
    v_10 = meas.v_dc_k + gain * (meas.i_bat_k - meas.i_o_k)
    v_01 = meas.v_dc_k - gain * meas.i_o_k
    return v_10, v_01


def select_battery_switches(meas: DcMeasurement, cfg: ControlConfig, C_bat: float) -> BatteryPair:
    v_10, v_01 = predict_dc_bus(meas, cfg, C_bat)
    if abs(cfg.V_DC_ref - v_10) < abs(cfg.V_DC_ref - v_01):
        return BAT_10
    return BAT_01


def predict_battery_current(meas: DcMeasurement, cfg: ControlConfig, dc: DcSideParams) -> Tuple[float, float]:
    """Next-sample battery inductor current for S=(1,0) and S=(0,1)"""
    i_01 = meas.i_bat_k + (cfg.T_S / dc.L_bat) * (dc.V_bat - dc.R_bat * meas.i_bat_k)
    i_10 = i_01 - (cfg.T_S / dc.L_bat) * meas.v_dc_k
    return i_10, i_01


def select_battery_current(meas: DcMeasurement, i_ref: float, cfg: ControlConfig,
                           dc: DcSideParams) -> BatteryPair:
    """Switch pair whose predicted inductor current lies closest to i_ref; ties go to (0,1)"""
    i_10, i_01 = predict_battery_current(meas, cfg, dc)
    if abs(i_ref - i_10) < abs(i_ref - i_01):
        return BAT_10
    return BAT_01


class BusEnergyRegulator:
    """Battery current reference that holds the DC bus at its set-point.

    The bus demand (DC load plus inverter draw minus PV infeed, in watts) is
    low-pass filtered and fed forward; the stored-energy error C (V_ref^2 - v^2) / 2
    is corrected at `bus_bandwidth_hz`. The power is converted to a battery
    current at the converter terminal and bounded by `battery_current_limit`.
    """

    def __init__(self, cfg: ControlConfig, dc: DcSideParams):
        self.dc = dc
        self.omega = TWO_PI * cfg.bus_bandwidth_hz
        self.limit = cfg.battery_current_limit
        self.cutoff_hz, self.T_S = cfg.demand_filter_hz, cfg.T_S
        self._demand: Optional[LowPassFilter] = None
        self.p_ref = 0.0

    def current_reference(self, v_dc: float, demand: float, v_ref: float) -> float:
        if self._demand is None:
            self._demand = LowPassFilter(self.cutoff_hz, self.T_S, initial=demand)
        p = self._demand.update(demand) + 0.5 * self.dc.C_bat * self.omega * (v_ref * v_ref - v_dc * v_dc)
        p_max = (self.dc.V_bat - self.dc.R_bat * self.limit) * self.limit
        self.p_ref = min(p, p_max)
        return min(max(battery_current_for_power(self.p_ref, self.dc), -self.limit), self.limit)


# ---------------------------------------------------------------- VSI group

def vsi_voltage_vector(n: int, V_in: float) -> TwoAxis:
    """Bridge output voltage for switching state n (0 and 7 are the zero vectors)"""
    if n not in range(8):
        raise ValueError(f"vector index must be in 0..7, got {n}")
    unit = VECTOR_UNITS[n]
    return TwoAxis((2.0 / 3.0) * V_in * unit[0], (2.0 / 3.0) * V_in * unit[1])


@dataclass(frozen=True)
class _VsiCoefficients:
    """Per-VSI one-step prediction coefficients, each shaped (m, 1)"""
    a11: np.ndarray
    b: np.ndarray
    c: np.ndarray
    g: np.ndarray
    a33: np.ndarray
    d: np.ndarray


@lru_cache(maxsize=32)
def _coefficients(params: Tuple[VsiParams, ...], T_S: float) -> _VsiCoefficients:
    col = lambda values: np.array(values, dtype=float)[:, None]
    return _VsiCoefficients(
        a11=col([1.0 - T_S * p.R_F / p.L_F for p in params]),
        b=col([T_S / p.L_F for p in params]),
        c=col([T_S / p.C_f for p in params]),
        g=col([_local_conductance(p) for p in params]),
        a33=col([1.0 - T_S * p.R_T / p.L_T for p in params]),
        d=col([T_S / p.L_T for p in params]),
    )


def _local_conductance(p: VsiParams) -> float:
    return 0.0 if p.local_load_ohms is None else 1.0 / p.local_load_ohms


def _vsi_step_arrays(x: np.ndarray, v_n: np.ndarray, z_ac: float, coef: _VsiCoefficients) -> np.ndarray:
    """One prediction step for state arrays shaped (..., m, 3, 2) and inputs (..., m, 2)"""
    i_f, v_bus, i_t = x[..., 0, :], x[..., 1, :], x[..., 2, :]
    coupling = z_ac * np.sum(i_t, axis=-2, keepdims=True)
    i_f_next = coef.a11 * i_f - coef.b * v_bus + coef.b * v_n
    v_bus_next = v_bus + coef.c * i_f - coef.c * i_t - coef.c * (coef.g * v_bus)
    i_t_next = coef.d * v_bus + coef.a33 * i_t - coef.d * coupling
    return np.stack((i_f_next, v_bus_next, i_t_next), axis=-2)


def _pcc_arrays(x: np.ndarray, z_ac: float) -> np.ndarray:
    return z_ac * np.sum(x[..., 2, :], axis=-2)


def _cost_arrays(i_f: np.ndarray, v_pcc: np.ndarray, v_ref: np.ndarray, lam: float, betas: np.ndarray,
                 i_f_ref: Optional[np.ndarray] = None) -> np.ndarray:
    """Cost for batches of filter currents (..., m, 2) and PCC voltages (..., 2).

    With filter-current references (m, 2) the tracking term is their squared
    error instead of the PCC voltage error.
    """
    if i_f_ref is None:
        tracking = np.sum((v_ref - v_pcc) ** 2, axis=-1)
    else:
        tracking = np.sum((i_f_ref - i_f) ** 2, axis=(-2, -1))
    mismatch = i_f[..., :-1, :] - betas[:, None] * i_f[..., 1:, :]
    sharing = np.sum(mismatch ** 2, axis=(-2, -1))
    return lam * tracking + (1.0 - lam) * sharing


def _input_voltages(params: Sequence[VsiParams], v_in: Optional[Sequence[float]]) -> np.ndarray:
    if v_in is None:
        return np.array([p.V_in for p in params], dtype=float)
    return np.asarray(v_in, dtype=float)


def _vector_voltages(choices: np.ndarray, v_in: np.ndarray) -> np.ndarray:
    return VECTOR_UNITS[choices] * ((2.0 / 3.0) * v_in)[:, None]


def predict_vsi_group(states: Sequence[VsiState], params: Sequence[VsiParams], choice: Sequence[int],
                      z_ac: float, cfg: ControlConfig, v_in: Optional[Sequence[float]] = None) -> VsiPrediction:
    """One-step prediction of every VSI state and of the PCC voltage"""
    if len(choice) != len(states) or len(params) != len(states):
        raise ValueError("choice, params and states must have one entry per VSI")
    coef = _coefficients(tuple(params), cfg.T_S)
    v_n = _vector_voltages(np.asarray(choice, dtype=int), _input_voltages(params, v_in))
    x = _vsi_step_arrays(stack_vsi_states(states), v_n, z_ac, coef)
    return VsiPrediction(unstack_vsi_states(x), TwoAxis.from_array(_pcc_arrays(x, z_ac)))


def vsi_cost(pred: VsiPrediction, v_ref: TwoAxis, cfg: ControlConfig,
             i_f_ref: Optional[np.ndarray] = None) -> float:
    """Weighted tracking error plus chained filter-current sharing error"""
    i_f = np.array([[s.i_F.alpha, s.i_F.beta] for s in pred.states])[None]
    return float(_cost_arrays(i_f, pred.v_pcc_next.to_array()[None], v_ref.to_array(),
                              cfg.lam, np.asarray(cfg.betas, dtype=float), i_f_ref)[0])


@lru_cache(maxsize=8)
def joint_candidates(m: int) -> np.ndarray:
    """All 8**m vector tuples in lexicographic order, shape (8**m, m)"""
    if 8 ** m > MAX_JOINT_CANDIDATES:
        raise ControlSetTooLarge(f"joint search over 8^{m} = {8 ** m} candidates exceeds {MAX_JOINT_CANDIDATES}")
    return np.array(list(itertools.product(range(8), repeat=m)), dtype=int)


def _score(x0: np.ndarray, candidates: np.ndarray, v_in: np.ndarray, z_ac: float, coef: _VsiCoefficients,
           v_ref: np.ndarray, cfg: ControlConfig, i_f_ref: Optional[np.ndarray]) -> np.ndarray:
    x = np.broadcast_to(x0, (candidates.shape[0],) + x0.shape)
    x = _vsi_step_arrays(x, _vector_voltages(candidates, v_in), z_ac, coef)
    return _cost_arrays(x[..., 0, :], _pcc_arrays(x, z_ac), v_ref, cfg.lam,
                        np.asarray(cfg.betas, dtype=float), i_f_ref)


def select_vsi_vectors(states: Sequence[VsiState], params: Sequence[VsiParams], z_ac: float, v_ref: TwoAxis,
                       cfg: ControlConfig, v_in: Optional[Sequence[float]] = None,
                       previous: Optional[Sequence[int]] = None,
                       i_f_ref: Optional[np.ndarray] = None) -> List[int]:
    """Vector tuple minimising the one-step VSI cost.

    Joint mode scores all 8**m tuples; sequential mode sweeps the VSIs in
    order, each picking its best vector with the others held at their latest
    choice. i_f_ref, when given, replaces PCC voltage tracking by filter-current
    tracking (see FilterCurrentReference).
    """
    if not states:
        raise ValueError("at least one VSI is required")
    return select_vectors_from_array(stack_vsi_states(states), params, z_ac, v_ref.to_array(), cfg, v_in,
                                     previous, i_f_ref)


def select_vectors_from_array(x0: np.ndarray, params: Sequence[VsiParams], z_ac: float, ref: np.ndarray,
                              cfg: ControlConfig, v_in: Optional[Sequence[float]] = None,
                              previous: Optional[Sequence[int]] = None,
                              i_f_ref: Optional[np.ndarray] = None) -> List[int]:
    """select_vsi_vectors on a stacked (m, 3, 2) state array and a (2,) reference"""
    m = x0.shape[0]
    coef = _coefficients(tuple(params), cfg.T_S)
    inputs = _input_voltages(params, v_in)

    if cfg.vsi_search == "joint":
        candidates = joint_candidates(m)
        costs = _score(x0, candidates, inputs, z_ac, coef, ref, cfg, i_f_ref)
        return [int(n) for n in candidates[int(np.argmin(costs))]]

    chosen = np.array(previous if previous is not None else [0] * m, dtype=int)
    for j in range(m):
        candidates = np.repeat(chosen[None], 8, axis=0)
        candidates[:, j] = np.arange(8)
        costs = _score(x0, candidates, inputs, z_ac, coef, ref, cfg, i_f_ref)
        chosen[j] = int(np.argmin(costs))
    return [int(n) for n in chosen]


@lru_cache(maxsize=32)
def line_current_split(params: Tuple[VsiParams, ...], betas: Tuple[float, ...],
                       omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """Sinusoidal steady-state line currents as a * I_total + b * v_pcc (complex, one entry per VSI).

    The currents add up to I_total and make the filter currents obey
    i_F,j = beta_j i_F,j+1, where i_F = i_T + Y (v_pcc + Z_T i_T) with Y the
    filter-capacitor (and local load) admittance and Z_T the line impedance.
    """
    if len(betas) != len(params) - 1:
        raise ValueError(f"expected {len(params) - 1} sharing ratio(s), got {len(betas)}")
    y = np.array([1j * omega * p.C_f + _local_conductance(p) for p in params])
    z = np.array([p.R_T + 1j * omega * p.L_T for p in params])
    d = 1.0 + y * z
    m = len(params)
    matrix = np.zeros((m, m), dtype=complex)
    rhs = np.zeros((m, 2), dtype=complex)
    matrix[0, :] = 1.0
    rhs[0, 0] = 1.0
    for j, beta in enumerate(betas):
        matrix[j + 1, j] = d[j]
        matrix[j + 1, j + 1] = -beta * d[j + 1]
        rhs[j + 1, 1] = beta * y[j + 1] - y[j]
    solution = np.linalg.solve(matrix, rhs)
    return solution[:, 0], solution[:, 1]


def _as_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0] + 1j * x[..., 1]


class FilterCurrentReference:
    """Filter-current references that put v_ref on the PCC and split the load by the ratio chain.

    The vector choice moves only the filter currents within one sample, so PCC
    tracking is expressed through them: the steady-state line currents from
    line_current_split give the local-bus voltages and filter currents at the
    next sample, the local-bus voltage error is fed back with gain
    `vsi_damping` and a slow integrator trims the total load current until the
    PCC amplitude sits on `v_ref_peak`.
    """

    def __init__(self, params: Sequence[VsiParams], cfg: ControlConfig):
        self.params = tuple(params)
        self.omega = TWO_PI * cfg.v_ref_freq
        self.admittance = np.array([1j * self.omega * p.C_f + _local_conductance(p) for p in self.params])
        self.line_impedance = np.array([p.R_T + 1j * self.omega * p.L_T for p in self.params])
        self.trim = 1.0

    def update(self, x: np.ndarray, v_ref_next: np.ndarray, z_ac: float, cfg: ControlConfig) -> np.ndarray:
        """References shaped (m, 2) for the filter currents one sample ahead of the stacked state x"""
        error = 1.0 - math.hypot(*_pcc_arrays(x, z_ac)) / cfg.v_ref_peak
        self.trim = min(max(self.trim + cfg.voltage_trim_gain * cfg.T_S * error, TRIM_BOUNDS[0]), TRIM_BOUNDS[1])

        a, b = line_current_split(self.params, tuple(cfg.betas), self.omega)
        v = complex(v_ref_next[0], v_ref_next[1])
        i_t = a * (self.trim * v / z_ac) + b * v
        v_bus = v + self.line_impedance * i_t
        i_f = i_t + self.admittance * v_bus

        coef = _coefficients(self.params, cfg.T_S)
        v_bus_next = x[:, 1, :] + coef.c * (x[:, 0, :] - x[:, 2, :] - coef.g * x[:, 1, :])
        i_f = i_f + cfg.vsi_damping * (v_bus - _as_complex(v_bus_next))
        return np.stack((i_f.real, i_f.imag), axis=-1)


# ---------------------------------------------------------------- droop baseline

def droop_vsi_update(p_filtered: float, q_filtered: float, cfg: DroopConfig, dt: float,
                     phase: float = 0.0) -> Tuple[float, float, float]:
    """P-f and Q-E droop law; returns (frequency, amplitude, phase advanced by dt)"""
    frequency = cfg.f0 - cfg.m_p * p_filtered
    amplitude = cfg.E0 - cfg.n_q * q_filtered
    return frequency, amplitude, math.fmod(phase + TWO_PI * frequency * dt, TWO_PI)
