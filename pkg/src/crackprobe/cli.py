"""Command-line entry point.

Exit codes: 0 success, 1 no crack candidate, 2 invalid input, 3 internal error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
import time
import warnings
from pathlib import Path

from . import __version__, classifier, dsp, fixtures, imaging, planner, skelgraph, synthetic, tactile
from . import pipeline
from .config import Config, add_flags, load_config
from .errors import CrackProbeError, NoCrackCandidateError

EXIT_OK, EXIT_NO_CANDIDATE, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except (CrackProbeError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


class Run:
    """Output directory bookkeeping and the run manifest."""

    def __init__(self, args, cfg: Config, command: str):
        self.out = Path(args.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.manifest = {"tool": "crackprobe", "version": __version__, "command": command,
                         "inputs": {}, "config_sha256": cfg.digest(), "config": cfg.to_dict(),
                         "outputs": {}, "timings_s": {}}
        self._t0 = time.perf_counter()

    def path(self, key: str, name: str) -> Path:
        p = self.out / name
        self.manifest["outputs"][key] = str(p)
        return p

    def write_json(self, key: str, name: str, doc) -> Path:
        p = self.path(key, name)
        p.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return p

    def finish(self, **extra) -> None:
        self.manifest["timings_s"]["total"] = round(time.perf_counter() - self._t0, 6)
        self.manifest.update(extra)
        missing = [p for p in self.manifest["outputs"].values() if not Path(p).exists()]
        if missing:
            raise RuntimeError(f"manifest references missing outputs: {missing}")
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")


def _say(msg: str) -> None:
    print(msg, flush=True)


# ------------------------------------------------------------------ commands

def cmd_analyze(args, cfg: Config) -> int:
    run = Run(args, cfg, "analyze")
    run.manifest["inputs"]["image"] = str(args.image)
    with stage("load"):
        img = imaging.load_image(args.image)
    t0 = time.perf_counter()
    with stage("segment"):
        seg = imaging.segment(img, cfg.pad_px, cfg.blur_sigma, cfg.canny_sigma, cfg.contour_cutoff,
                              cfg.dark_foreground, cfg.sample_width_mm)
    imaging.save_pgm(seg.gray, run.path("gray", "gray.pgm"))
    imaging.save_pgm(seg.binary.pixels, run.path("binary", "binary.pgm"))
    imaging.save_pgm(seg.edges.pixels, run.path("edges", "edges.pgm"))
    imaging.save_pgm(seg.filled.pixels, run.path("filled", "filled.pgm"))
    imaging.save_pgm(seg.mask.pixels, run.path("mask", "mask.pgm"))
    run.manifest["timings_s"]["segment"] = round(time.perf_counter() - t0, 6)
    if seg.mask.is_empty():
        run.finish(warnings=seg.warnings)
        _say("no crack candidate found")
        return EXIT_NO_CANDIDATE
    t0 = time.perf_counter()
    with stage("skeleton"):
        skel, pruned, graph, mids = skelgraph.extract(seg.mask, cfg.prune_px, cfg.shift_mm)
    imaging.save_pgm(skel.pixels, run.path("skeleton", "skeleton.pgm"))
    imaging.save_pgm(pruned.pixels, run.path("pruned", "pruned.pgm"))
    run.write_json("graph", "graph.json", graph.to_dict())
    run.manifest["timings_s"]["graph"] = round(time.perf_counter() - t0, 6)
    if mids is None:
        run.finish(warnings=seg.warnings)
        _say("no crack candidate found (empty skeleton)")
        return EXIT_NO_CANDIDATE
    run.write_json("midpoints", "midpoints.json", mids.to_dict())
    run.finish(warnings=seg.warnings)
    c = graph.counts()
    _say(f"endpoints={c['endpoints']} junctions={c['junctions']} edges={c['edges']} "
         f"midpoint_nodes={len(mids)} scale={seg.mask.scale:.6g} mm/px")
    return EXIT_OK


def _read_midpoints(path, cfg: Config) -> skelgraph.MidpointGraph:
    doc = json.loads(Path(path).read_text())
    if "weights" in doc:
        return skelgraph.MidpointGraph.from_dict(doc)
    graph = skelgraph.CrackGraph.from_dict(doc)
    return skelgraph.midpoints(graph, cfg.shift_mm)


def cmd_plan(args, cfg: Config) -> int:
    run = Run(args, cfg, "plan")
    run.manifest["inputs"]["graph"] = str(args.graph)
    with stage("load"):
        mids = _read_midpoints(args.graph, cfg)
    t0 = time.perf_counter()
    with stage("plan"):
        plan = pipeline.plan(mids, cfg)
    run.manifest["timings_s"]["plan"] = round(time.perf_counter() - t0, 6)
    doc = plan.to_dict()
    doc["total_length_mm"] = plan.total_length_mm()
    run.write_json("plan", "plan.json", doc)
    run.finish()
    _say(f"visit_order={plan.visit_order} travel_mm={plan.travel_cost_mm:.3f} "
         f"total_mm={plan.total_length_mm():.3f} heuristic={plan.heuristic}")
    return EXIT_OK


def _surface_size(mask_path, cfg: Config) -> tuple[float, float]:
    img = imaging.load_image(mask_path)
    h, w = img.shape[:2]
    scale = cfg.sample_width_mm / w
    return w * scale, h * scale


def compare_row(name: str, plan: planner.ExplorationPlan, width_mm: float, height_mm: float,
                cfg: Config) -> dict:
    full = planner.full_scan_plan(width_mm, height_mm, cfg.rows)
    rep = planner.compare(plan, full, cfg.speed_mm_s)
    return {"surface": name, "planner_mm": rep["length_a_mm"], "full_scan_mm": rep["length_b_mm"],
            "ratio": rep["ratio"], "planner_s": rep["time_a_s"], "full_scan_s": rep["time_b_s"],
            "nodes": len(plan.segments), "rows": cfg.rows}


def ratio_table(rows: list[dict]) -> str:
    head = f"{'surface':<12}{'nodes':>6}{'planner mm':>12}{'full mm':>10}{'ratio':>8}{'planner s':>11}{'full s':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['surface']:<12}{r['nodes']:>6}{r['planner_mm']:>12.1f}{r['full_scan_mm']:>10.1f}"
                     f"{r['ratio']:>8.3f}{r['planner_s']:>11.1f}{r['full_scan_s']:>9.1f}")
    return "\n".join(lines)


def bundled_comparison(cfg: Config) -> list[dict]:
    rows = []
    for fx in fixtures.bundled_fixtures():
        img = imaging.load_image(fixtures.fixture_dir() / f"{fx.surface_id}.png")
        analysis = pipeline.analyze(img, cfg)
        mask = analysis.segmentation.mask
        rows.append(compare_row(fx.surface_id, pipeline.plan(analysis.mids, cfg),
                                mask.width * mask.scale, mask.height * mask.scale, cfg))
    return rows


def cmd_compare(args, cfg: Config) -> int:
    run = Run(args, cfg, "compare")
    if args.plan is None:
        with stage("compare"):
            rows = bundled_comparison(cfg)
    else:
        if args.mask is None:
            raise StageError("load", ValueError("--mask is required with a plan file"))
        run.manifest["inputs"].update(plan=str(args.plan), mask=str(args.mask))
        with stage("load"):
            plan = planner.ExplorationPlan.from_dict(json.loads(Path(args.plan).read_text()))
            w, h = _surface_size(args.mask, cfg)
        with stage("compare"):
            rows = [compare_row(Path(args.plan).stem, plan, w, h, cfg)]
    run.write_json("compare", "compare.json", {"rows": rows, "rows_setting": cfg.rows,
                                                "speed_mm_s": cfg.speed_mm_s})
    table = ratio_table(rows)
    run.path("table", "compare.txt").write_text(table + "\n")
    run.finish()
    _say(table)
    return EXIT_OK


def cmd_dataset(args, cfg: Config) -> int:
    run = Run(args, cfg, "dataset")
    src = Path(args.fixtures) if args.fixtures else fixtures.fixture_dir()
    run.manifest["inputs"]["fixtures"] = str(src)
    with stage("fixtures"):
        fx_list = [fixtures.load_fixture(p) for p in sorted(src.glob("*.json"))]
        if not fx_list:
            raise CrackProbeError(f"no fixture JSON files in {src}")
    t0 = time.perf_counter()
    with stage("simulate"):
        bank = synthetic.SurfaceBank(fx_list, cfg.physical_scale_mm)
        if args.mode == "painted":
            samples = synthetic.painted_traces(cfg.n_per_class, cfg.seed,
                                               cfg.sim_params(), cfg.speed_mm_s,
                                               cfg.sampling_rate_hz, cfg.shift_mm, bank)
        else:
            samples = synthetic.generate(cfg.n_per_class, cfg.seed, cfg.sim_params(),
                                         cfg.speed_mm_s, cfg.sampling_rate_hz, cfg.shift_mm, bank)
            if args.mode == "occlusion":
                samples = [synthetic.Sample(tactile.perturb(s.trace, "occlusion", i, cfg.sim_params()),
                                            s.trace_id, s.surface_id, s.pose_deg, s.texture)
                           for i, s in enumerate(samples)]
    run.manifest["timings_s"]["simulate"] = round(time.perf_counter() - t0, 6)
    traces_dir = run.out / "traces"
    traces_dir.mkdir(exist_ok=True)
    run.manifest["outputs"]["traces"] = str(traces_dir)
    for s in samples:
        tactile.save_trace(s.trace, traces_dir / f"{s.trace_id}.csv")
    t0 = time.perf_counter()
    with stage("features"):
        vecs = [pipeline.featurize(s.trace, dsp.CHANNELS, cfg) for s in samples]
        ds = classifier.Dataset.from_vectors(vecs, [s.trace.label for s in samples],
                                             [s.trace_id for s in samples])
    run.manifest["timings_s"]["features"] = round(time.perf_counter() - t0, 6)
    ds.to_csv(run.path("features", "features.csv"))
    poses = [{"trace_id": s.trace_id, "surface_id": s.surface_id, "pose_deg": round(s.pose_deg, 9),
              "texture": s.texture, "label": s.trace.label} for s in samples]
    run.finish(poses=poses, mode=args.mode or "clean")
    counts = {lab: sum(s.trace.label == lab for s in samples) for lab in tactile.LABELS}
    _say(f"{len(samples)} traces ({counts}) written to {traces_dir}")
    return EXIT_OK


def _load_features(path, selection) -> classifier.Dataset:
    ds = classifier.Dataset.from_csv(path)
    return ds.select(dsp.feature_names(selection))


def cmd_train(args, cfg: Config) -> int:
    run = Run(args, cfg, "train")
    run.manifest["inputs"]["features"] = str(args.features)
    with stage("load"):
        ds = classifier.Dataset.from_csv(args.features)
    t0 = time.perf_counter()
    with stage("train"):
        sel = dsp.parse_selection(cfg.channels)
        if args.split:
            ds = classifier.split(ds, cfg.seed)["train"]
        model = pipeline.train_model(ds, sel, cfg)
    run.manifest["timings_s"]["train"] = round(time.perf_counter() - t0, 6)
    classifier.save_model(model, run.path("model", "model.json"))
    run.finish()
    _say(f"trained {model.n_trees} trees on {len(ds)} samples, channels {','.join(sel)}")
    return EXIT_OK


def _write_metrics(run: Run, rows: list, stem: str) -> str:
    table = classifier.metrics_table(rows)
    run.write_json(stem, f"{stem}.json", {"rows": [m.to_dict() for m in rows]})
    run.path(f"{stem}_table", f"{stem}.txt").write_text(table + "\n")
    return table


def cmd_eval(args, cfg: Config) -> int:
    run = Run(args, cfg, "eval")
    run.manifest["inputs"]["features"] = str(args.features)
    with stage("load"):
        if args.model:
            run.manifest["inputs"]["model"] = str(args.model)
            model = classifier.load_model(args.model)
            sel = pipeline.model_selection(model)
        else:
            sel = dsp.parse_selection(cfg.channels)
        ds = _load_features(args.features, sel)
    with stage("evaluate"):
        label = classifier.format_selection(sel)
        if args.model:
            rows = [classifier.evaluate_model(model, ds, label)]
        else:
            rows = [classifier.evaluate(ds, cfg.runs, cfg.seed, cfg.n_trees, label=label)]
    table = _write_metrics(run, rows, "metrics")
    run.finish()
    if rows[0].single_class:
        _say(f"single-class test set: accuracy {rows[0].mean('accuracy'):.2f}%")
    _say(table)
    return EXIT_OK


def cmd_ablate(args, cfg: Config) -> int:
    run = Run(args, cfg, "ablate")
    run.manifest["inputs"]["features"] = str(args.features)
    with stage("load"):
        ds = classifier.Dataset.from_csv(args.features)
    selections = args.selections.split(";") if args.selections else classifier.TABLE_SELECTIONS
    with stage("ablate"):
        rows = classifier.ablate(ds, selections, cfg.runs, cfg.seed, cfg.n_trees)
    table = _write_metrics(run, rows, "ablation")
    run.finish()
    _say(table)
    return EXIT_OK


def cmd_characterize(args, cfg: Config) -> int:
    run = Run(args, cfg, "characterize")
    run.manifest["inputs"]["image"] = str(args.image)
    with stage("load"):
        img = imaging.load_image(args.image)
        truth = None
        if args.ground_truth:
            run.manifest["inputs"]["ground_truth"] = str(args.ground_truth)
            truth = fixtures.load_fixture(args.ground_truth)
        model = None
        if args.model:
            run.manifest["inputs"]["model"] = str(args.model)
            model = classifier.load_model(args.model)
    stream_path = run.path("nodes", "nodes.jsonl")
    with open(stream_path, "w") as stream:
        def on_node(doc):
            line = json.dumps(doc, sort_keys=True)
            stream.write(line + "\n")
            stream.flush()
            _say(line)

        with stage("characterize"):
            result = pipeline.characterize(img, cfg, truth, model, args.mode, on_node)
    extra = {"mode": args.mode or "clean"}
    if truth is not None:
        extra.update(surface_id=truth.surface_id, pose_deg=truth.pose_deg)
    run.path("report", "report.json").write_text(result.dumps(cfg, extra) + "\n")
    run.manifest["timings_s"].update({k: round(v, 6) for k, v in result.timings.items()})
    run.finish(pose_deg=truth.pose_deg if truth else None)
    rep = result.report
    _say(f"branches classified as crack: {rep.n_branches} of {len(rep.branches)}")
    if result.mre is not None:
        m = result.mre
        _say(f"MRE %: length {m.mre_length:.2f} width {m.mre_width:.2f} "
             f"orientation {m.mre_orientation:.2f} branches {m.mre_branches:.2f}")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [imaging], [graph], ... sections")
    common.add_argument("--out-dir", default="crackprobe-out", help="output directory")
    add_flags(common)

    p = argparse.ArgumentParser(prog="crackprobe",
                                description="Vision-guided tactile crack exploration on synthetic surfaces.")
    p.add_argument("--version", action="version", version=f"crackprobe {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="image -> mask, skeleton, graphs")
    a.add_argument("image")
    a.set_defaults(func=cmd_analyze)

    a = sub.add_parser("plan", parents=[common], help="graph JSON -> exploration plan")
    a.add_argument("graph", help="midpoints.json or graph.json from analyze")
    a.set_defaults(func=cmd_plan)

    a = sub.add_parser("compare", parents=[common],
                       help="planner vs boustrophedon full scan (all bundled fixtures by default)")
    a.add_argument("plan", nargs="?", help="plan.json; omit to compare every bundled fixture")
    a.add_argument("--mask", help="mask image giving the surface size")
    a.set_defaults(func=cmd_compare)

    a = sub.add_parser("dataset", parents=[common], help="simulate a labelled trace dataset")
    a.add_argument("--fixtures", help="directory of fixture JSON (default: bundled)")
    a.add_argument("--mode", choices=[m.value for m in tactile.Perturbation], default=None)
    a.set_defaults(func=cmd_dataset)

    a = sub.add_parser("train", parents=[common], help="train a forest on features.csv")
    a.add_argument("features")
    a.add_argument("--split", action="store_true", help="train on the 60%% training split only")
    a.set_defaults(func=cmd_train)

    a = sub.add_parser("eval", parents=[common], help="repeated split/train/test metrics")
    a.add_argument("features")
    a.add_argument("--model", help="evaluate this model on the whole file instead")
    a.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", parents=[common], help="metrics table over channel selections")
    a.add_argument("features")
    a.add_argument("--selections", help="';'-separated selections, e.g. 'P;D1,D2,D3;D2,D3,P'")
    a.set_defaults(func=cmd_ablate)

    a = sub.add_parser("characterize", parents=[common], help="full loop on one image")
    a.add_argument("image")
    a.add_argument("--ground-truth", help="fixture JSON for MRE scoring")
    a.add_argument("--model", help="forest model JSON (default: train on synthetic data)")
    a.add_argument("--mode", choices=[m.value for m in tactile.Perturbation], default=None,
                   help="perturb every scan")
    a.set_defaults(func=cmd_characterize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k) for k in Config.__dataclass_fields__ if hasattr(args, k)}
    try:
        cfg = load_config(args.config, overrides)
        with warnings.catch_warnings():
            # segmentation notes are kept in the manifest instead
            warnings.simplefilter("ignore", UserWarning)
            return args.func(args, cfg)
    except NoCrackCandidateError as exc:
        print(f"no crack candidate: {exc}", file=sys.stderr)
        return EXIT_NO_CANDIDATE
    except StageError as exc:
        if isinstance(exc.cause, NoCrackCandidateError):
            print(f"no crack candidate: {exc}", file=sys.stderr)
            return EXIT_NO_CANDIDATE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CrackProbeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
