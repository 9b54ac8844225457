"""
Closed-loop simulation engine.

The plant is integrated at the fine step dt, the FCS-MPC controllers run every
T_S, the MPPT every `mppt_every` control periods, and scenario events are
applied at the control instant nearest to their timestamp.
"""

import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import Settings
from src.controllers import (
    BusEnergyRegulator,
    DcMeasurement,
    FilterCurrentReference,
    PvMeasurement,
    droop_vsi_update,
    select_battery_current,
    select_battery_switches,
    select_pv_switch,
    select_vectors_from_array,
)
from src.errors import NumericalBlowup
from src.models import ControlConfig, DroopConfig, ScenarioEvent, SimulationConfig
from src.numerics import FrequencyTracker, LowPassFilter, ReferenceOscillator, oscillator_reference
from src.plant import (
    BAT_01,
    VECTOR_UNITS,
    AcNetwork,
    BatteryPair,
    DcSide,
    PowerMeter,
    battery_current_for_power,
    bridge_input_current,
    load_impedance_for_power,
    power_report,
    vsi_output_powers,
    vsi_reactive_powers,
)
from src.pv import IvCurveTable, MpptState, calibrated_array_params, mppt_step, pv_power_reference

FREQUENCY_WINDOW_CYCLES = 5
NO_SWITCH = -1


@dataclass(frozen=True)
class OperatingPoint:
    """Quantities that scenario events may change during a run"""
    p_dcload: float
    z_ac: float
    irradiance: float
    temperature: float
    betas: Tuple[float, ...]
    v_dc_ref: float


def initial_operating_point(config: SimulationConfig) -> OperatingPoint:
    initial = config.initial
    return OperatingPoint(
        p_dcload=initial.p_dcload,
        z_ac=load_impedance_for_power(initial.pcc_load, config.control.v_ref_peak),
        irradiance=initial.irradiance,
        temperature=initial.temperature,
        betas=tuple(config.control.betas),
        v_dc_ref=config.control.V_DC_ref,
    )


def apply_event(point: OperatingPoint, event: ScenarioEvent, v_peak: float) -> OperatingPoint:
    """Operating point after `event`; PCC load steps are converted to Z_AC at v_peak"""
    if event.kind == "DcLoadStep":
        return replace(point, p_dcload=event.value)
    if event.kind == "PccLoadStep":
        return replace(point, z_ac=load_impedance_for_power(event.value, v_peak))
    if event.kind == "IrradianceStep":
        return replace(point, irradiance=event.value)
    if event.kind == "TemperatureStep":
        return replace(point, temperature=event.value)
    if event.kind == "BetaChange":
        betas = list(point.betas)
        if not 1 <= event.index <= len(betas):
            raise ValueError(f"beta index {event.index} out of range 1..{len(betas)}")
        betas[event.index - 1] = event.value
        return replace(point, betas=tuple(betas))
    if event.kind == "VdcRefChange":
        return replace(point, v_dc_ref=event.value)
    raise ValueError(f"unknown event kind {event.kind}")


def sharing_weights(betas: Tuple[float, ...]) -> List[float]:
    """Relative output of each VSI implied by the ratio chain (last VSI = 1)"""
    weights = [1.0]
    for beta in reversed(betas):
        weights.insert(0, beta * weights[0])
    return weights

def event_schedule(events: List[ScenarioEvent], T_S: float) -> Dict[int, List[ScenarioEvent]]:
    """Events keyed by the control index nearest to their timestamp"""
    schedule: Dict[int, List[ScenarioEvent]] = {}
    for event in events:
        schedule.setdefault(int(round(event.time / T_S)), []).append(event)
    return schedule


@dataclass
class TraceRow:
    t: float
    v_dc: float
    v_pv: float
    i_pv: float
    p_pv: float
    p_bat: float
    p_dcload: float
    p_vsi: List[float]
    v_pcc_rms: float
    f_pcc: float
    f_bus: List[float]
    chosen_vectors: List[int]
    pv_switch: int
    bat_switch: int

    def as_record(self) -> Dict[str, float]:
        """Flat mapping in trace column order"""
        record = {
            "t": self.t, "v_dc": self.v_dc, "v_pv": self.v_pv, "i_pv": self.i_pv,
            "p_pv": self.p_pv, "p_bat": self.p_bat, "p_dcload": self.p_dcload,
        }
        record.update({f"p_vsi{j}": p for j, p in enumerate(self.p_vsi, start=1)})
        record["v_pcc_rms"] = self.v_pcc_rms
        record["f_pcc"] = self.f_pcc
        record.update({f"f_bus{j}": f for j, f in enumerate(self.f_bus, start=1)})
        record.update({f"chosen_vectors{j}": n for j, n in enumerate(self.chosen_vectors, start=1)})
        record["pv_switch"] = self.pv_switch
        record["bat_switch"] = self.bat_switch
        return record


@dataclass
class SimulationResult:
    config: SimulationConfig
    trace: List[TraceRow] = field(default_factory=list)
    summary: Dict[str, float] = field(default_factory=dict)
    controller_calls: int = 0

    @property
    def vsi_count(self) -> int:
        return len(self.config.vsis)


@dataclass
class _Decision:
    pv_switch: bool
    bat_pair: BatteryPair
    vectors: List[int]


class Simulation:
    """One deterministic closed-loop run of a SimulationConfig"""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.logger = self._setup_logger()
        self.pv_params = config.pv or calibrated_array_params()
        self.dc_side = DcSide(config.dc)
        self.ac_network = AcNetwork(config.vsis)
        self.m = len(config.vsis)
        self.T_S = config.control.T_S
        self.steps = int(round(config.duration / self.T_S))
        self.schedule = event_schedule(config.events, self.T_S)
        late = [e for k, es in self.schedule.items() if k >= self.steps for e in es]
        for event in late:
            self.logger.warning(f"Event {event.kind} at t={event.time} s lies beyond the run and is ignored")

    def _setup_logger(self) -> logging.Logger:
        """Setup logging for the simulation"""
        logger = logging.getLogger("Simulation")
        logger.setLevel(getattr(logging, Settings.LOG_LEVEL, logging.INFO))
        if not logger.handlers:
            formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(formatter)
            logger.addHandler(console_handler)
            try:
                log_dir = Path(os.environ.get('LOG_DIR', Settings.LOG_DIR))
                log_dir.mkdir(parents=True, exist_ok=True)
                file_handler = logging.FileHandler(log_dir / 'simulation.log')
                file_handler.setFormatter(formatter)
                logger.addHandler(file_handler)
            except OSError as e:
                logger.warning(f"File logging disabled: {e}")
            logger.propagate = False
        return logger

    def run(self) -> SimulationResult:
        mode = "droop" if self.config.droop.enabled else "fcs-mpc"
        self.logger.info(
            f"Starting '{self.config.name}' ({mode}): {self.config.duration} s, "
            f"T_S={self.T_S:g} s, dt={self.config.dt:g} s, {self.m} VSI(s)"
        )
        if self.config.droop.enabled:
            result = self._run_droop()
        else:
            result = self._run_mpc()
        self.logger.info(
            f"Finished '{self.config.name}': {len(result.trace)} trace rows, "
            f"{result.controller_calls} controller calls"
        )
        return result

    # ------------------------------------------------------------------ helpers

    def _apply_events(self, k: int, point: OperatingPoint) -> OperatingPoint:
        for event in self.schedule.get(k, []):
            point = apply_event(point, event, self.config.control.v_ref_peak)
            self.logger.info(f"t={k * self.T_S:.4f} s: applied {event.kind}={event.value:g}"
                             + (f" (index {event.index})" if event.index else ""))
        return point

    def _control_config(self, point: OperatingPoint) -> ControlConfig:
        return self.config.control.model_copy(update={"betas": list(point.betas), "V_DC_ref": point.v_dc_ref})

    def _trackers(self) -> List[FrequencyTracker]:
        window = FREQUENCY_WINDOW_CYCLES / self.config.control.v_ref_freq
        return [FrequencyTracker(window, self.T_S) for _ in range(self.m + 1)]

    @staticmethod
    def _push_frequencies(trackers: List[FrequencyTracker], t: float, x_ac: np.ndarray, z_ac: float):
        trackers[0].push(t, z_ac * float(x_ac[:, 2, 0].sum()))
        for j, tracker in enumerate(trackers[1:]):
            tracker.push(t, float(x_ac[j, 1, 0]))

    @staticmethod
    def _pcc_rms(x_ac: np.ndarray, z_ac: float) -> float:
        v_pcc = z_ac * x_ac[:, 2, :].sum(axis=0)
        return math.hypot(v_pcc[0], v_pcc[1]) / math.sqrt(2.0)

    def _blowup(self, exc: NumericalBlowup, t: float) -> NumericalBlowup:
        self.logger.error(f"Numerical blow-up at t={t:.6f} s: {exc}")
        return NumericalBlowup(str(exc), time=t)

    # ------------------------------------------------------------------ FCS-MPC

    def _initial_state(self, point: OperatingPoint, table: IvCurveTable) -> Tuple[np.ndarray, np.ndarray]:
        dc = self.config.dc
        v_pv = 0.8 * table.v_oc
        i_pv = max(table.current(v_pv), 0.0)
        weights = sharing_weights(point.betas)
        p_ic = weights[0] / sum(weights) * self.config.initial.pcc_load
        p_bat = point.p_dcload + p_ic - v_pv * i_pv
        i_bat = battery_current_for_power(p_bat, dc)
        self.logger.debug(f"Start-up: v_pv={v_pv:.1f} V, i_pv={i_pv:.2f} A, i_bat={i_bat:.2f} A")
        x_dc = np.array([v_pv, i_pv, i_bat, point.v_dc_ref], dtype=float)
        x_ac = np.zeros((self.m, 3, 2))
        return x_dc, x_ac

    def _run_mpc(self) -> SimulationResult:
        config, control = self.config, self.config.control
        T, dt, substeps = self.T_S, config.dt, config.substeps
        dc_params = config.dc
        stiff_inputs = [p.V_in for p in config.vsis[1:]]

        point = initial_operating_point(config)
        cfg = self._control_config(point)
        table = IvCurveTable.for_conditions(point.irradiance, point.temperature, self.pv_params)
        x_dc, x_ac = self._initial_state(point, table)
        mppt = MpptState.start(x_dc[0], table.current(x_dc[0]), table.v_oc)
        oscillator = ReferenceOscillator(control.v_ref_freq, control.v_ref_peak)
        references = FilterCurrentReference(config.vsis, control)
        bus = BusEnergyRegulator(control, dc_params)
        meter = PowerMeter(control.power_filter_hz, T)
        trackers = self._trackers()

        result = SimulationResult(config)
        pending = _Decision(False, BAT_01, [0] * self.m)
        v_pv_prev = x_dc[0]
        i_o = 0.0
        mppt_v, mppt_i, mppt_count = 0.0, 0.0, 0

        for k in range(self.steps):
            t = k * T
            if k in self.schedule:
                previous = point
                point = self._apply_events(k, point)
                cfg = self._control_config(point)
                if (point.irradiance, point.temperature) != (previous.irradiance, previous.temperature):
                    table = IvCurveTable.for_conditions(point.irradiance, point.temperature, self.pv_params)
                    mppt = replace(mppt, v_limit=table.v_oc, v_target=min(mppt.v_target, table.v_oc))

            v_pv, i_pv, i_bat, v_dc = (float(x) for x in x_dc)

            i_array = table.current(v_pv)
            mppt_v += v_pv
            mppt_i += i_array
            mppt_count += 1
            if mppt_count == control.mppt_every:
                mppt = mppt_step(mppt, mppt_v / mppt_count, mppt_i / mppt_count,
                                 control.mppt_step, control.mppt_epsilon)
                mppt_v, mppt_i, mppt_count = 0.0, 0.0, 0

            p_ref = pv_power_reference(v_pv, v_pv_prev, i_array, mppt.v_target, dc_params.C_PV,
                                       control.pv_voltage_bandwidth_hz)
            pv_switch = select_pv_switch(PvMeasurement(v_pv, v_pv_prev, i_pv, p_ref), cfg, dc_params.L_PV)

            i_net = i_o + (point.p_dcload / v_dc if v_dc > 0 else 0.0) - (0.0 if pv_switch else i_pv)
            meas = DcMeasurement(v_dc, i_bat, i_net)
            if control.battery_control == "cascaded":
                demand = point.p_dcload + 1.5 * float(x_ac[0, 1] @ x_ac[0, 0]) - v_pv * i_pv
                i_ref = bus.current_reference(v_dc, demand, cfg.V_DC_ref)
                bat_pair = select_battery_current(meas, i_ref, cfg, dc_params)
            else:
                bat_pair = select_battery_switches(meas, cfg, dc_params.C_bat)

            upcoming = oscillator.advance(T)
            v_ref = oscillator_reference(upcoming, 0.0).to_array()
            i_f_ref = references.update(x_ac, v_ref, point.z_ac, cfg)
            vectors = select_vectors_from_array(x_ac, config.vsis, point.z_ac, v_ref, cfg,
                                                [v_dc] + stiff_inputs, pending.vectors, i_f_ref)
            result.controller_calls += 1
            oscillator = upcoming
            v_pv_prev = v_pv

            decision = _Decision(pv_switch, bat_pair, vectors)
            applied = pending if control.actuation_delay else decision
            pending = decision

            s_pv, s_bat1 = int(applied.pv_switch), applied.bat_pair[0]
            units = VECTOR_UNITS[np.asarray(applied.vectors, dtype=int)]
            stiff = (2.0 / 3.0) * np.asarray(stiff_inputs, dtype=float)
            try:
                for s in range(substeps):
                    scale = np.concatenate(([(2.0 / 3.0) * x_dc[3]], stiff))
                    i_o = bridge_input_current(applied.vectors[0], x_ac[0, 0])
                    i_array = table.current(x_dc[0])
                    x_dc = self.dc_side.step(x_dc, s_pv, s_bat1, i_o, point.p_dcload, i_array, dt)
                    x_ac = self.ac_network.step(x_ac, units * scale[:, None], point.z_ac, dt)
            except NumericalBlowup as exc:
                raise self._blowup(exc, t + (s + 1) * dt) from exc
            i_o = bridge_input_current(applied.vectors[0], x_ac[0, 0])

            t_next = (k + 1) * T
            powers = meter.update(power_report(x_dc, x_ac, point.z_ac, point.p_dcload, dc_params))
            self._push_frequencies(trackers, t_next, x_ac, point.z_ac)

            if (k + 1) % config.trace_decimation == 0:
                result.trace.append(TraceRow(
                    t=t_next,
                    v_dc=float(x_dc[3]),
                    v_pv=float(x_dc[0]),
                    i_pv=float(x_dc[1]),
                    p_pv=powers.p_pv,
                    p_bat=powers.p_bat,
                    p_dcload=powers.p_dcload,
                    p_vsi=list(powers.p_vsi),
                    v_pcc_rms=self._pcc_rms(x_ac, point.z_ac),
                    f_pcc=trackers[0].frequency(),
                    f_bus=[tracker.frequency() for tracker in trackers[1:]],
                    chosen_vectors=list(applied.vectors),
                    pv_switch=s_pv,
                    bat_switch=s_bat1,
                ))

        result.summary = self._summary(x_dc, x_ac, point, mppt)
        return result

    def _summary(self, x_dc: np.ndarray, x_ac: np.ndarray, point: OperatingPoint,
                 mppt: Optional[MpptState]) -> Dict[str, float]:
        report = power_report(x_dc, x_ac, point.z_ac, point.p_dcload, self.config.dc)
        summary = {
            "duration": self.config.duration,
            "v_dc": float(x_dc[3]),
            "v_pv": float(x_dc[0]),
            "i_pv": float(x_dc[1]),
            "i_bat": float(x_dc[2]),
            "v_pcc_rms": self._pcc_rms(x_ac, point.z_ac),
            "p_pcc_load": report.p_pcc_load,
            "z_ac": point.z_ac,
            "p_dcload": point.p_dcload,
            "irradiance": point.irradiance,
        }
        summary.update({f"p_vsi{j}": p for j, p in enumerate(report.p_vsi, start=1)})
        if mppt is not None:
            summary["mppt_v_target"] = mppt.v_target
            summary["p_mpp_estimate"] = mppt.p_mpp_estimate
        return summary

    # ------------------------------------------------------------------ droop baseline

    def _droop_configs(self, betas: Tuple[float, ...]) -> List[DroopConfig]:
        """Per-VSI droop gains scaled so equal frequency yields the configured power split"""
        base = self.config.droop
        weights = sharing_weights(betas)
        top = max(weights)
        return [base.model_copy(update={"m_p": base.m_p * top / w, "n_q": base.n_q * top / w})
                for w in weights]

    def _run_droop(self) -> SimulationResult:
        config, control = self.config, self.config.control
        T, dt, substeps = self.T_S, config.dt, config.substeps
        droop = config.droop

        point = initial_operating_point(config)
        gains = self._droop_configs(point.betas)
        x_ac = np.zeros((self.m, 3, 2))
        x_dc = np.array([0.0, 0.0, 0.0, point.v_dc_ref])
        p_filters = [LowPassFilter(droop.filter_hz, T) for _ in range(self.m)]
        q_filters = [LowPassFilter(droop.filter_hz, T) for _ in range(self.m)]
        phases = [0.0] * self.m
        meter = PowerMeter(control.power_filter_hz, T)
        trackers = self._trackers()
        result = SimulationResult(config)

        for k in range(self.steps):
            t = k * T
            if k in self.schedule:
                previous = point
                point = self._apply_events(k, point)
                if point.betas != previous.betas:
                    gains = self._droop_configs(point.betas)

            p_now, q_now = vsi_output_powers(x_ac), vsi_reactive_powers(x_ac)
            sources = np.empty((self.m, 2))
            for j in range(self.m):
                p_f = p_filters[j].update(float(p_now[j]))
                q_f = q_filters[j].update(float(q_now[j]))
                _, amplitude, phases[j] = droop_vsi_update(p_f, q_f, gains[j], T, phases[j])
                sources[j] = (amplitude * math.cos(phases[j]), amplitude * math.sin(phases[j]))
            result.controller_calls += 1

            try:
                for s in range(substeps):
                    x_ac = self.ac_network.step(x_ac, sources, point.z_ac, dt)
            except NumericalBlowup as exc:
                raise self._blowup(exc, t + (s + 1) * dt) from exc

            t_next = (k + 1) * T
            powers = meter.update(power_report(x_dc, x_ac, point.z_ac, point.p_dcload, config.dc))
            self._push_frequencies(trackers, t_next, x_ac, point.z_ac)

            if (k + 1) % config.trace_decimation == 0:
                result.trace.append(TraceRow(
                    t=t_next,
                    v_dc=point.v_dc_ref,
                    v_pv=math.nan,
                    i_pv=math.nan,
                    p_pv=math.nan,
                    p_bat=math.nan,
                    p_dcload=point.p_dcload,
                    p_vsi=list(powers.p_vsi),
                    v_pcc_rms=self._pcc_rms(x_ac, point.z_ac),
                    f_pcc=trackers[0].frequency(),
                    f_bus=[tracker.frequency() for tracker in trackers[1:]],
                    chosen_vectors=[NO_SWITCH] * self.m,
                    pv_switch=NO_SWITCH,
                    bat_switch=NO_SWITCH,
                ))

        result.summary = self._summary(x_dc, x_ac, point, None)
        return result


def run(config: SimulationConfig) -> SimulationResult:
    """Run one simulation of `config`"""
    return Simulation(config).run()
