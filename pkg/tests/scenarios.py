"""
Scenario fragments shared by the closed-loop tests
"""

from config.scenario import ScenarioConfig, scenario_from_dict

# Quarter-size camera keeps frames small in closed-loop tests
SMALL_CAMERA = {"focal_px": 200.0, "width": 320, "height": 240, "min_area_px": 16}


def small_scenario(**overrides) -> ScenarioConfig:
    """Default scenario with the small camera and the given top-level overrides"""
    data = {"camera": SMALL_CAMERA}
    data.update(overrides)
    return scenario_from_dict(data)
