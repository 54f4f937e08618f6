"""End-to-end loop: image -> graph -> plan -> per-node scan -> classify -> measure."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import classifier, dsp, fixtures, geometry, imaging, planner, skelgraph, synthetic, tactile
from .config import Config
from .errors import InvalidInputError, NoCrackCandidateError, WidthUndefinedError


@dataclass
class Analysis:
    segmentation: imaging.Segmentation
    skeleton: imaging.BinaryMask
    pruned: imaging.BinaryMask
    graph: skelgraph.CrackGraph
    mids: skelgraph.MidpointGraph


def analyze(img, cfg: Config) -> Analysis:
    seg = imaging.segment(img, cfg.pad_px, cfg.blur_sigma, cfg.canny_sigma, cfg.contour_cutoff,
                          cfg.dark_foreground, cfg.sample_width_mm)
    if seg.mask.is_empty():
        raise NoCrackCandidateError("no crack candidate in image")
    skel, pruned, graph, mids = skelgraph.extract(seg.mask, cfg.prune_px, cfg.shift_mm)
    if mids is None:
        raise NoCrackCandidateError("skeleton has no branches")
    return Analysis(seg, skel, pruned, graph, mids)


def plan(mids: skelgraph.MidpointGraph, cfg: Config) -> planner.ExplorationPlan:
    return planner.optimal_path(mids, cfg.exact_max_nodes)


def node_seed(seed: int, node_id: int) -> int:
    return int(np.random.SeedSequence([seed, node_id]).generate_state(1)[0])


def featurize(trace, selection, cfg: Config) -> dsp.FeatureVector:
    return dsp.featurize(trace, selection, cfg.dwt_family, cfg.dwt_levels, cfg.peak_prominence,
                         cfg.cutoff_hz, cfg.filter_order)


def build_dataset(cfg: Config, n_per_class: int | None = None, fixture_list=None):
    """(samples, all-channel Dataset) of synthetic traces for this config."""
    bank = synthetic.SurfaceBank(fixture_list, cfg.physical_scale_mm)
    samples = synthetic.generate(n_per_class or cfg.n_per_class, cfg.seed, cfg.sim_params(),
                                 cfg.speed_mm_s, cfg.sampling_rate_hz, cfg.shift_mm, bank)
    vecs = [featurize(s.trace, dsp.CHANNELS, cfg) for s in samples]
    ds = classifier.Dataset.from_vectors(vecs, [s.trace.label for s in samples],
                                         [s.trace_id for s in samples])
    return samples, ds


def train_model(ds: classifier.Dataset, selection, cfg: Config) -> classifier.ForestModel:
    sel = dsp.parse_selection(selection)
    sub = ds.select(dsp.feature_names(sel)) if ds.names else ds
    m = classifier.train(sub, cfg.n_trees, cfg.seed)
    m.config["channels"] = ",".join(sel)
    return m


def default_model(cfg: Config, selection=None) -> classifier.ForestModel:
    """Forest trained on the full synthetic dataset for this config."""
    _, ds = build_dataset(cfg)
    return train_model(ds, selection or cfg.channels, cfg)


def model_selection(m: classifier.ForestModel) -> tuple:
    if "channels" in m.config:
        return dsp.parse_selection(m.config["channels"])
    if m.feature_names:
        return dsp.parse_selection(sorted({n.split("_")[0] for n in m.feature_names}))
    raise InvalidInputError("model does not record its channel selection")


def physical_surface(cfg: Config, analysis: Analysis, truth: fixtures.Fixture | None,
                     mode: str | None):
    if mode == "painted":
        # marker line only: the surface has no void
        size = analysis.segmentation.mask.width * analysis.segmentation.mask.scale
        n = int(round(size / cfg.physical_scale_mm))
        return imaging.BinaryMask(np.zeros((n, n), dtype=bool), cfg.physical_scale_mm)
    if truth is not None:
        return fixtures.physical_mask(truth, scale=cfg.physical_scale_mm)
    return analysis.segmentation.mask


@dataclass
class Characterization:
    report: geometry.CrackReport
    mre: geometry.MreReport | None
    plan: planner.ExplorationPlan
    analysis: Analysis
    traces: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def document(self, cfg: Config, extra: dict | None = None) -> dict:
        doc = {"config_sha256": cfg.digest(), "seed": cfg.seed,
               "visit_order": [int(i) for i in self.plan.visit_order],
               "planned_length_mm": round(self.plan.total_length_mm(), 9),
               "report": self.report.to_dict()}
        if self.mre is not None:
            doc["mre"] = self.mre.to_dict()
        doc.update(extra or {})
        return doc

    def dumps(self, cfg: Config, extra: dict | None = None) -> str:
        return json.dumps(self.document(cfg, extra), indent=1, sort_keys=True)


def characterize(img, cfg: Config, truth: fixtures.Fixture | None = None,
                 model: classifier.ForestModel | None = None, mode: str | None = None,
                 on_node=None) -> Characterization:
    """Run the whole loop; ``on_node(dict)`` is called as each node completes."""
    if mode is not None:
        mode = tactile.Perturbation(mode).value
    timings = {}
    t0 = time.perf_counter()
    analysis = analyze(img, cfg)
    timings["analyze_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    route = plan(analysis.mids, cfg)
    timings["plan_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    if model is None:
        model = default_model(cfg, "D1,D2,D3" if mode == "painted" else None)
    timings["model_s"] = time.perf_counter() - t0
    selection = model_selection(model)
    surface = physical_surface(cfg, analysis, truth, mode)
    by_id = {n.id: n for n in analysis.mids.nodes}
    t0 = time.perf_counter()
    measurements, traces = [], []
    for seg in route.segments:
        node = by_id[seg.node_id]
        params = cfg.sim_params(seed=node_seed(cfg.seed, seg.node_id))
        trace = tactile.simulate_scan(surface, seg, cfg.speed_mm_s, cfg.sampling_rate_hz, params,
                                      cfg.speed_back, surface_id=truth.surface_id if truth else "",
                                      node_id=seg.node_id)
        if mode is not None:
            trace = tactile.perturb(trace, mode, node_seed(cfg.seed + 1, seg.node_id), params)
        label, prob = classifier.predict(model, featurize(trace, selection, cfg))
        try:
            m = geometry.measure_branch(node, trace, analysis.graph, label == "crack", prob,
                                        cfg.cutoff_hz, cfg.filter_order)
        except WidthUndefinedError:
            # flat proximity channel: treat the vote as a false positive
            m = geometry.measure_branch(node, trace, analysis.graph, False, prob)
            m.note = "width-undefined: flat proximity channel, reclassified no_crack"
        measurements.append(m)
        traces.append(trace)
        if on_node is not None:
            on_node(m.to_dict())
    timings["scan_s"] = time.perf_counter() - t0
    report = geometry.CrackReport(sorted(measurements, key=lambda b: b.node_id))
    mre = geometry.score(report, truth.ground_truth()) if truth is not None else None
    return Characterization(report, mre, route, analysis, traces, timings)
