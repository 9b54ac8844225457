import os
from unittest.mock import patch

import pytest

from src.models import ControlConfig, DcSideParams, SimulationConfig, VsiParams
from src.numerics import TwoAxis
from src.plant import VsiState


# Keep logs and results of the test run out of the working tree
@pytest.fixture(autouse=True)
def set_test_env(tmp_path):
    with patch.dict(os.environ, {
        "LOG_LEVEL": "WARNING",
        "LOG_DIR": str(tmp_path / "logs"),
        "RESULTS_DIR": str(tmp_path / "results"),
    }):
        yield


@pytest.fixture
def control_config():
    return ControlConfig()


@pytest.fixture
def dc_params():
    return DcSideParams()


@pytest.fixture
def vsi_params():
    return [VsiParams(), VsiParams()]


@pytest.fixture
def zero_vsi_states():
    return [VsiState.zero(), VsiState.zero()]


@pytest.fixture
def loaded_vsi_states():
    """Two inverters part-way through a start-up transient"""
    return [
        VsiState(TwoAxis(12.0, -3.0), TwoAxis(250.0, 40.0), TwoAxis(10.0, -2.5)),
        VsiState(TwoAxis(25.0, -5.0), TwoAxis(255.0, 35.0), TwoAxis(21.0, -4.0)),
    ]


@pytest.fixture
def short_config():
    """A few milliseconds of the default system with a coarse plant step"""
    control = ControlConfig()
    return SimulationConfig(name="short", duration=0.004, dt=control.T_S / 2, control=control,
                            trace_decimation=5)
