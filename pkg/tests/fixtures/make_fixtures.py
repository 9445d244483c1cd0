"""Regenerate the CLI fixtures in this directory.

Run from the repository root: ``python3 tests/fixtures/make_fixtures.py``.
The golden field is the downscaler output for the flat map and uniform
profile; a uniform field over flat ground is already mass consistent, so it
must equal the initial interpolation.
"""

import json
from pathlib import Path

from windnav.bench import flat_terrain, make_scenario
from windnav.downscaler import downscale
from windnav.terrain import save_dem
from windnav.wind_grid import save_field, save_profiles, uniform_profile

HERE = Path(__file__).parent


def main():
    flat = flat_terrain(400.0, 300.0, 50.0, height=100.0)
    save_dem(flat, HERE / "flat.asc")
    profiles = [uniform_profile(200.0, 150.0, (3.0, -1.0, 0.0))]
    save_profiles(profiles, HERE / "uniform_profile.json")
    res = downscale(flat, profiles, n_z=5, top=400.0)
    save_field(res.field, HERE / "flat_field_golden.csv")

    empty = make_scenario("empty")
    save_dem(empty.terrain, HERE / "empty.asc")
    problem = {"start": list(empty.start), "goal": list(empty.goal), "objective": "shortest",
               "budget": {"max_iterations": 300}, "seed": 1, "map": "empty.asc",
               "bounds": [list(b) for b in empty.bounds]}
    (HERE / "empty_problem.json").write_text(json.dumps(problem, indent=1) + "\n")

    w2 = make_scenario("w2")
    save_dem(w2.terrain, HERE / "w2.asc")
    save_field(w2.field, HERE / "w2_field.bin")
    problem = {"start": list(w2.start), "goal": list(w2.goal), "objective": "shortest",
               "budget": {"max_iterations": 150}, "seed": 0, "map": "w2.asc",
               "field": "w2_field.bin", "bounds": [list(b) for b in w2.bounds]}
    (HERE / "w2_shortest_problem.json").write_text(json.dumps(problem, indent=1) + "\n")


if __name__ == "__main__":
    main()
