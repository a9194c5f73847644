import math

import pytest

from nphgsd import simple_model


@pytest.fixture(scope="session")
def delayed_model():
    """Four-analysis benchmark: delayed effect, 643.5 subjects over 12 months."""
    return simple_model(
        enroll_rate=643.5 / 12.0,
        control_hazard=math.log(2) / 15.0,
        hazard_ratio=((0.0, 4.0), (1.0, 0.6)),
        dropout=0.001,
        enroll_duration=12.0,
        total_duration=36.0,
    )


@pytest.fixture(scope="session")
def analysis_times():
    return [12.0, 20.0, 28.0, 36.0]
