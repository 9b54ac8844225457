from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

EventKind = Literal[
    "DcLoadStep", "PccLoadStep", "IrradianceStep", "TemperatureStep", "BetaChange", "VdcRefChange"
]


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class DcSideParams(_Frozen):
    """DC-side circuit constants (PV boost stage, battery leg, DC bus)"""
    L_PV: float = Field(1e-3, gt=0, description="PV boost inductance (H)")
    C_PV: float = Field(100e-6, gt=0, description="PV terminal capacitance (F)")
    L_bat: float = Field(10e-3, gt=0, description="Battery converter inductance (H)")
    C_bat: float = Field(5e-3, gt=0, description="DC bus capacitance (F)")
    R_parasitic: float = Field(0.01, ge=0, description="Boost inductor series resistance (ohm)")
    V_bat: float = Field(600.0, gt=0, description="Battery open-circuit voltage (V)")
    R_bat: float = Field(0.05, ge=0, description="Battery series resistance (ohm)")
    V_DC_ref: float = Field(800.0, gt=0, description="Nominal DC bus voltage (V)")


class VsiParams(_Frozen):
    """One voltage source inverter with its LC filter and line to the PCC"""
    R_F: float = Field(0.1, ge=0)
    L_F: float = Field(2e-3, gt=0)
    C_f: float = Field(50e-6, gt=0)
    R_T: float = Field(0.05, ge=0)
    L_T: float = Field(1e-3, gt=0)
    V_in: float = Field(800.0, gt=0, description="DC input voltage; VSI 1 uses the simulated DC bus")
    local_load_ohms: Optional[float] = Field(None, gt=0)


class PvArrayParams(_Frozen):
    """Single-diode PV string model; strings are identical and in parallel.

    I_sc_stc, R_s and R_sh are per string, V_oc_stc is the string (array) voltage.
    """
    I_sc_stc: float = Field(6.5, gt=0)
    V_oc_stc: float = Field(700.0, gt=0)
    diode_ideality: float = Field(1.3, gt=0)
    series_cells: int = Field(1000, gt=0)
    parallel_strings: int = Field(10, gt=0)
    temp_coeff_isc: float = Field(0.003, ge=0)
    R_s: float = Field(0.5, gt=0)
    R_sh: float = Field(5000.0, gt=0)

    @model_validator(mode="after")
    def _shunt_dominates(self):
        if self.R_sh <= 100.0 * self.R_s:
            raise ValueError("R_sh must be much larger than R_s (at least 100x)")
        return self


class ControlConfig(_Frozen):
    """Sampling, weighting and reference settings shared by the FCS-MPC controllers"""
    T_S: float = Field(20e-6, gt=0)
    lam: float = Field(0.5, ge=0, le=1, alias="lambda")
    betas: List[float] = Field(default_factory=lambda: [0.5])
    v_ref_peak: float = Field(311.0, gt=0)
    v_ref_freq: float = Field(60.0, gt=0)
    V_DC_ref: float = Field(800.0, gt=0)
    vsi_search: Literal["joint", "sequential"] = "joint"
    vsi_damping: float = Field(0.2, ge=0, description="Local-bus voltage feedback gain (S)")
    voltage_trim_gain: float = Field(20.0, ge=0, description="PCC amplitude integrator gain (1/s)")
    battery_control: Literal["cascaded", "voltage"] = "cascaded"
    bus_bandwidth_hz: float = Field(20.0, gt=0, description="DC bus energy loop bandwidth")
    demand_filter_hz: float = Field(500.0, gt=0, description="Low-pass on the fed-forward bus demand")
    battery_current_limit: float = Field(150.0, gt=0, description="Battery current reference bound (A)")
    pv_voltage_bandwidth_hz: float = Field(300.0, gt=0, description="PV terminal voltage loop bandwidth")
    mppt_every: int = Field(100, ge=1)
    mppt_step: float = Field(0.5, gt=0)
    mppt_epsilon: float = Field(0.01, gt=0)
    actuation_delay: int = Field(0, ge=0, le=1)
    power_filter_hz: float = Field(100.0, gt=0)

    @model_validator(mode="after")
    def _positive_betas(self):
        for j, beta in enumerate(self.betas, start=1):
            if beta <= 0:
                raise ValueError(f"betas[{j}] must be positive, got {beta}")
        return self


class DroopConfig(_Frozen):
    """Conventional P-f / Q-E droop baseline"""
    enabled: bool = False
    f0: float = Field(60.0, gt=0)
    E0: float = Field(311.0, gt=0)
    m_p: float = Field(1e-5, ge=0, description="Hz per W")
    n_q: float = Field(1e-3, ge=0, description="V per var")
    filter_hz: float = Field(10.0, gt=0)


class OperatingConditions(_Frozen):
    """Initial loads and weather"""
    p_dcload: float = Field(21500.0, ge=0)
    pcc_load: float = Field(22500.0, gt=0)
    irradiance: float = Field(1000.0, ge=0)
    temperature: float = 25.0


class ScenarioEvent(_Frozen):
    """Timed parameter change; `index` is the 1-based beta index for BetaChange"""
    time: float = Field(..., ge=0)
    kind: EventKind
    value: float
    index: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _physical_value(self):
        if self.kind == "BetaChange" and self.index is None:
            raise ValueError("BetaChange requires an index")
        if self.kind in ("PccLoadStep", "BetaChange", "VdcRefChange") and self.value <= 0:
            raise ValueError(f"{self.kind} value must be positive")
        if self.kind in ("DcLoadStep", "IrradianceStep") and self.value < 0:
            raise ValueError(f"{self.kind} value must not be negative")
        return self


class SimulationConfig(_Frozen):
    """Everything one closed-loop run needs"""
    name: str = "custom"
    duration: float = Field(1.0, ge=0)
    dt: float = Field(2e-6, gt=0)
    control: ControlConfig = Field(default_factory=ControlConfig)
    dc: DcSideParams = Field(default_factory=DcSideParams)
    vsis: List[VsiParams] = Field(default_factory=lambda: [VsiParams(), VsiParams()], min_length=1)
    pv: Optional[PvArrayParams] = None
    droop: DroopConfig = Field(default_factory=DroopConfig)
    initial: OperatingConditions = Field(default_factory=OperatingConditions)
    events: List[ScenarioEvent] = Field(default_factory=list)
    seed: int = 0
    trace_decimation: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _structure(self):
        problems = structural_problems(self)
        if problems:
            key, message = problems[0]
            raise ValueError(f"{key}: {message}")
        return self

    @property
    def substeps(self) -> int:
        return int(round(self.control.T_S / self.dt))


def structural_problems(config: SimulationConfig) -> List[Tuple[str, str]]:
    """Cross-field checks that single-field constraints cannot express"""
    problems = []
    ratio = config.control.T_S / config.dt
    if ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
        problems.append(("dt", f"dt={config.dt} must divide control.T_S={config.control.T_S} exactly"))
    times = [e.time for e in config.events]
    if times != sorted(times):
        problems.append(("events", "events must be sorted by time"))
    m = len(config.vsis)
    if len(config.control.betas) != m - 1:
        problems.append(("control.betas", f"expected {m - 1} sharing ratio(s) for {m} VSIs, got {len(config.control.betas)}"))
    for k, event in enumerate(config.events):
        if event.kind == "BetaChange" and event.index is not None and event.index > m - 1:
            problems.append((f"events.{k}.index", f"beta index {event.index} out of range 1..{m - 1}"))
    if abs(config.dc.V_DC_ref - config.control.V_DC_ref) > 1e-9:
        problems.append(("control.V_DC_ref", "must equal dc.V_DC_ref"))
    return problems
