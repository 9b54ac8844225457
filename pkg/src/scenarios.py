"""
Built-in scenario configurations and the references they are judged against.
"""

import math
from typing import Callable, Dict, List, Optional, Tuple

from config.settings import Settings
from src.metrics import ACCEPTANCE_THRESHOLDS, MetricReferences
from src.models import ControlConfig, DroopConfig, ScenarioEvent, SimulationConfig
from src.pv import G_REF, calibrated_array_params, irradiance_for_power, mpp_oracle

CASE1_REDUCED_PV_POWER = 32000.0
SCENARIOS = ("case1", "case2", "case3", "droop-compare")


def default_config(name: str = "custom", duration: float = 1.0, substeps: Optional[int] = None,
                   **updates) -> SimulationConfig:
    """Default two-VSI configuration with dt = T_S / substeps"""
    substeps = substeps or Settings.PLANT_SUBSTEPS
    control = ControlConfig()
    data = {"name": name, "duration": duration, "dt": control.T_S / substeps, "control": control}
    data.update(updates)
    return SimulationConfig(**data)


def case1_config(substeps: Optional[int] = None) -> SimulationConfig:
    """DC load 21.5 -> 13 kW at 0.5 s, irradiance drop to the 32 kW level at 0.7 s"""
    g_low = irradiance_for_power(CASE1_REDUCED_PV_POWER)
    return default_config(
        "case1", 1.0, substeps,
        events=[
            ScenarioEvent(time=0.5, kind="DcLoadStep", value=13000.0),
            ScenarioEvent(time=0.7, kind="IrradianceStep", value=g_low),
        ],
    )


def case2_config(substeps: Optional[int] = None) -> SimulationConfig:
    """PCC load 22.5 -> 33 kW at 0.5 s and -> 26.4 kW at 0.8 s with beta_1 = 1/2"""
    return default_config(
        "case2", 1.0, substeps,
        events=[
            ScenarioEvent(time=0.5, kind="PccLoadStep", value=33000.0),
            ScenarioEvent(time=0.8, kind="PccLoadStep", value=26400.0),
        ],
    )


def case3_config(substeps: Optional[int] = None) -> SimulationConfig:
    """beta_1 changes from 1/2 to 8/7 at 0.4 s"""
    return default_config(
        "case3", 0.8, substeps,
        events=[ScenarioEvent(time=0.4, kind="BetaChange", value=8.0 / 7.0, index=1)],
    )


def droop_compare_configs(substeps: Optional[int] = None) -> Tuple[SimulationConfig, SimulationConfig]:
    """(FCS-MPC, droop) pair running the case2 event list"""
    mpc = case2_config(substeps).model_copy(update={"name": "droop-compare-mpc"})
    droop = mpc.model_copy(update={"name": "droop-compare-droop", "droop": DroopConfig(enabled=True)})
    return mpc, droop


def _oracle_power(irradiance: float) -> float:
    return mpp_oracle(irradiance, 25.0, calibrated_array_params())[1]


def references_for(config: SimulationConfig) -> MetricReferences:
    """References used to judge a run of one of the built-in scenarios (or a custom config)"""
    control = config.control
    base = dict(
        v_dc_ref=control.V_DC_ref,
        v_pcc_rms_ref=control.v_ref_peak / math.sqrt(2.0),
        f0=control.v_ref_freq,
        check_buses=not config.droop.enabled,
        check_frequency=not config.droop.enabled,
    )
    name = config.name
    if name == "case1":
        g_low = config.events[1].value
        return MetricReferences(
            **base,
            betas=[[0.5]] * 3,
            window_powers=[{"p_pv": 35000.0}, {"p_pv": 35000.0}, {"p_pv": CASE1_REDUCED_PV_POWER}],
            pv_oracle=[_oracle_power(G_REF), _oracle_power(G_REF), _oracle_power(g_low)],
            check_balance=True,
            check_settling=True,
        )
    if name in ("case2", "droop-compare-mpc", "droop-compare-droop"):
        return MetricReferences(
            **base,
            betas=[[0.5]] * 3,
            window_powers=[
                {"p_vsi1": 7500.0, "p_vsi2": 15000.0},
                {"p_vsi1": 11000.0, "p_vsi2": 22000.0},
                {"p_vsi1": 8800.0, "p_vsi2": 17600.0},
            ],
            settle_columns=["p_vsi1", "p_vsi2", "p_bat"],
        )
    if name == "case3":
        return MetricReferences(
            **base,
            betas=[[0.5], [8.0 / 7.0]],
            window_powers=[{"p_vsi1": 7500.0, "p_vsi2": 15000.0}, {"p_vsi1": 12000.0, "p_vsi2": 10500.0}],
            total_pcc=[22500.0, 22500.0],
            settle_columns=["p_vsi1", "p_vsi2", "p_bat"],
        )
    return MetricReferences(**base, betas=_custom_betas(config))


def _custom_betas(config: SimulationConfig) -> List[List[float]]:
    """Expected ratio chain per steady window, following BetaChange events"""
    if not config.control.betas:
        return []
    startup = ACCEPTANCE_THRESHOLDS["startup_s"]
    betas = list(config.control.betas)
    windows = [list(betas)]
    for time in sorted({e.time for e in config.events if startup < e.time < config.duration}):
        for event in config.events:
            if event.time == time and event.kind == "BetaChange":
                betas[event.index - 1] = event.value
        windows.append(list(betas))
    return windows


def builtin_config(name: str, substeps: Optional[int] = None) -> SimulationConfig:
    builders: Dict[str, Callable[[Optional[int]], SimulationConfig]] = {
        "case1": case1_config, "case2": case2_config, "case3": case3_config,
    }
    if name not in builders:
        raise ValueError(f"unknown scenario {name}; choose from {', '.join(builders)}")
    return builders[name](substeps)
