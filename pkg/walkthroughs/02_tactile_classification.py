"""Simulated tactile traces, features, and the random forest.

Run: python walkthroughs/02_tactile_classification.py
"""
from crackprobe import classifier, dsp, pipeline
from crackprobe.config import Config

cfg = Config()
_, ds = pipeline.build_dataset(cfg)
print(f"{len(ds.y)} traces, {ds.X.shape[1]} features")

for sel in ("D2,D3,P", "D1,D2,D3", "P"):
    sub = ds.select(dsp.feature_names(dsp.parse_selection(sel)))
    res = classifier.evaluate(sub, runs=5, seed=cfg.seed, n_trees=cfg.n_trees)
    print(f"{sel:<10} F1 {res.mean('f1'):6.2f} +/- {res.std('f1'):.2f}")
