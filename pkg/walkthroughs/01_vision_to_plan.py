"""From a camera image of a Y crack to an exploration plan.

Run: python walkthroughs/01_vision_to_plan.py
"""
from crackprobe import cli, fixtures, imaging, pipeline, planner
from crackprobe.config import Config

cfg = Config()
img = imaging.load_image(fixtures.fixture_dir() / "y_1.png")
an = pipeline.analyze(img, cfg)
print("graph counts:", an.graph.counts())

# each branch becomes one midpoint node; the planner orders the visits
plan = planner.optimal_path(an.mids)
print("visit order:", plan.visit_order, f"travel {plan.travel_cost_mm:.1f} mm")

print()
print(cli.ratio_table(cli.bundled_comparison(cfg)))
