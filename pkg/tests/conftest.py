import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mobility_sdi.geo import ZoneIndex  # noqa: E402
from mobility_sdi.pipeline import PipelineConfig, run_pipeline  # noqa: E402
from mobility_sdi.cases import parse_cases  # noqa: E402
from mobility_sdi.synth import CaseCurve, Phase, Scenario, generate, grid_zones, paper_shape_scenario  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def small_scenario(**kw) -> Scenario:
    """Four zones in two states, four weeks around the February benchmark."""
    base = dict(
        seed=7,
        zones=grid_zones(rows=1, cols=4, zones_per_state=2, populations=[100_000, 150_000, 120_000, 80_000]),
        n_devices=80,
        start_date="2020-01-27",
        end_date="2020-02-21",
        phases=(Phase("2020-01-27", 0.05, 1.5, 3.0, 12.0, 0.3),
                Phase("2020-02-17", 0.25, 0.8, 2.0, 9.0, 0.2, transition_days=2)),
        case_curve=CaseCurve("2020-01-27", "2020-02-21", attack_rate=0.002, midpoint="2020-02-14"),
        name="small",
    )
    base.update(kw)
    return Scenario(**base)


@pytest.fixture(scope="session")
def small_out():
    return generate(small_scenario())


@pytest.fixture(scope="session")
def small_run(small_out):
    cfg = PipelineConfig(target_rates=small_out.target_rates)
    zones = ZoneIndex(small_out.scenario.zones)
    return run_pipeline(small_out.sightings, zones, cfg)


class PaperRun:
    def __init__(self):
        t0 = time.perf_counter()
        self.out = generate(paper_shape_scenario())
        sc = self.out.scenario
        self.zones = ZoneIndex(sc.zones)
        self.cfg = PipelineConfig(target_rates=self.out.target_rates, pivot_date=sc.fatigue_date)
        self.res = run_pipeline(self.out.sightings, self.zones, self.cfg)
        self.seconds = time.perf_counter() - t0
        cases = self.out.cases.reset_index().to_csv(index=False, lineterminator="\n")
        self.cases = parse_cases(cases.encode())


@pytest.fixture(scope="session")
def paper_run():
    return PaperRun()
