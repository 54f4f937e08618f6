"""Full loop on every bundled surface, scored against its ground truth.

Run: python walkthroughs/03_characterize.py
"""
from crackprobe import fixtures, imaging, pipeline
from crackprobe.config import Config

cfg = Config()
model = pipeline.default_model(cfg)
print(f"{'surface':<10} {'branches':>8} {'length':>7} {'width':>7} {'orient':>7}")
for fx in fixtures.bundled_fixtures():
    img = imaging.load_image(fixtures.fixture_dir() / f"{fx.surface_id}.png")
    r = pipeline.characterize(img, cfg, fx, model)
    m = r.mre
    print(f"{fx.surface_id:<10} {r.report.n_branches:>8} {m.mre_length:7.2f} "
          f"{m.mre_width:7.2f} {m.mre_orientation:7.2f}")
