import pytest
from pydantic import ValidationError

from src.models import (
    ControlConfig,
    DcSideParams,
    DroopConfig,
    OperatingConditions,
    ScenarioEvent,
    SimulationConfig,
    VsiParams,
    structural_problems,
)


class TestParameterModels:
    def test_defaults(self):
        """Default plant and control parameters"""
        control, dc, vsi = ControlConfig(), DcSideParams(), VsiParams()
        assert control.T_S == 20e-6
        assert control.lam == 0.5
        assert control.betas == [0.5]
        assert control.battery_control == "cascaded"
        assert control.vsi_damping == 0.2
        assert dc.V_DC_ref == 800.0
        assert dc.L_bat == 10e-3
        assert vsi.L_F == 2e-3
        assert vsi.local_load_ohms is None

    def test_negative_inductance_rejected(self):
        """Inductances must be positive"""
        with pytest.raises(ValidationError) as excinfo:
            VsiParams(L_F=-1e-3)
        assert "L_F" in str(excinfo.value)

    def test_lambda_range(self):
        """lambda lies in [0, 1]"""
        with pytest.raises(ValidationError):
            ControlConfig(lam=1.5)

    def test_betas_positive(self):
        """Sharing ratios must be positive"""
        with pytest.raises(ValidationError) as excinfo:
            ControlConfig(betas=[0.5, -1.0])
        assert "betas[2]" in str(excinfo.value)

    def test_unknown_keys_rejected(self):
        """Typos in parameter names are errors"""
        with pytest.raises(ValidationError):
            DcSideParams(L_pv=1e-3)

    def test_models_are_frozen(self):
        """Parameters cannot be mutated after validation"""
        params = DroopConfig()
        with pytest.raises(ValidationError):
            params.m_p = 1.0

    def test_operating_conditions(self):
        """PCC load must be positive"""
        assert OperatingConditions().pcc_load == 22500.0
        with pytest.raises(ValidationError):
            OperatingConditions(pcc_load=0.0)


class TestScenarioEvent:
    def test_beta_change_requires_index(self):
        """BetaChange names the ratio it changes"""
        with pytest.raises(ValidationError):
            ScenarioEvent(time=0.4, kind="BetaChange", value=8.0 / 7.0)

    def test_pcc_load_must_be_positive(self):
        """A PCC load step to zero is not physical"""
        with pytest.raises(ValidationError):
            ScenarioEvent(time=0.5, kind="PccLoadStep", value=0.0)

    def test_unknown_kind(self):
        """Only the listed event kinds exist"""
        with pytest.raises(ValidationError):
            ScenarioEvent(time=0.5, kind="GridTrip", value=1.0)

    def test_dc_load_may_drop_to_zero(self):
        """A DC load can be switched off"""
        assert ScenarioEvent(time=0.5, kind="DcLoadStep", value=0.0).value == 0.0


class TestSimulationConfig:
    def test_default_is_valid(self):
        """Default configuration passes every structural check"""
        config = SimulationConfig()
        assert structural_problems(config) == []
        assert config.substeps == 10

    def test_dt_must_divide_sampling_period(self):
        """dt that does not divide T_S is rejected"""
        with pytest.raises(ValidationError) as excinfo:
            SimulationConfig(dt=3e-6)
        assert "dt" in str(excinfo.value)

    def test_events_must_be_sorted(self):
        """Events are ordered by time"""
        events = [
            ScenarioEvent(time=0.8, kind="DcLoadStep", value=1.0),
            ScenarioEvent(time=0.5, kind="DcLoadStep", value=2.0),
        ]
        with pytest.raises(ValidationError) as excinfo:
            SimulationConfig(events=events)
        assert "events" in str(excinfo.value)

    def test_one_beta_per_adjacent_pair(self):
        """m VSIs need m - 1 sharing ratios"""
        with pytest.raises(ValidationError) as excinfo:
            SimulationConfig(vsis=[VsiParams()] * 3)
        assert "control.betas" in str(excinfo.value)
        config = SimulationConfig(vsis=[VsiParams()] * 3, control=ControlConfig(betas=[0.5, 2.0]))
        assert len(config.vsis) == 3

    def test_beta_index_in_range(self):
        """BetaChange index must address an existing ratio"""
        with pytest.raises(ValidationError):
            SimulationConfig(events=[ScenarioEvent(time=0.4, kind="BetaChange", value=1.0, index=2)])

    def test_dc_reference_consistency(self):
        """The controller and plant agree on V_DC_ref"""
        with pytest.raises(ValidationError):
            SimulationConfig(dc=DcSideParams(V_DC_ref=750.0))

    def test_structural_problems_lists_every_issue(self):
        """structural_problems reports all cross-field violations"""
        config = SimulationConfig.model_construct(
            dt=3e-6, control=ControlConfig(), dc=DcSideParams(), vsis=[VsiParams()],
            events=[ScenarioEvent(time=0.5, kind="DcLoadStep", value=1.0),
                    ScenarioEvent(time=0.1, kind="DcLoadStep", value=1.0)],
        )
        keys = [key for key, _ in structural_problems(config)]
        assert keys == ["dt", "events", "control.betas"]
