"""
Benchmark commands: ground-truth prep, planner runs, trace export, theory sweeps and the
bundled mesh suite.

Commands return their results together with an exit code: 0 on success, 1 when some items
failed. Configuration problems raise ConfigError, which the CLI maps to 2.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import repeat
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .camera import capture, pose_from_lookat, unproject
from .env import NBVEnv
from .exceptions import ConfigError, MeshLoadError, VoxelNBVError
from .export import write_pfm, write_pgm, write_ply_points
from .meshes import write_suite
from .metrics import IncrementalCoverage, summarize, to_cm
from .models import (
    OBJECT_CENTERS,
    BenchSpec,
    CurvePoint,
    EnvConfig,
    EpisodeSummary,
    MetricRow,
    PrepEntry,
    PrepManifest,
    SceneConfig,
    StepRecord,
    SummaryRow,
    TheoryRow,
    TimingRow,
    TraceHeader,
)
from .planners import PlannerContext, make_planner
from .scene import PreparedScene, load_mesh, load_scene, prepare_scene, save_scene
from .theory import run_theory_sweep
from .utils import format_center, read_jsonl, sanitize_filename, write_csv, write_jsonl
from .voxel_grid import GridFrame

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MESH_SUFFIXES = (".obj", ".ply")
CACHE_SUFFIX = ".vnbv"
EXPORT_FORMATS = ("ply", "csv", "pgm", "pfm")


def cache_name(scene_id: str, center_index: int) -> str:
    return f"{sanitize_filename(scene_id)}_c{center_index}{CACHE_SUFFIX}"


def find_meshes(input_path: PathLike) -> List[Path]:
    """Mesh files of a directory (sorted) or the single given file."""
    path = Path(input_path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in MESH_SUFFIXES)
    if path.is_file():
        return [path]
    raise ConfigError(f"Input not found: {path}")


# Prep
@dataclass
class PrepResult:
    manifest: PrepManifest
    manifest_path: Path

    @property
    def failures(self) -> List[PrepEntry]:
        return [e for e in self.manifest.entries if e.status == "error"]

    @property
    def cache_files(self) -> List[Path]:
        return [Path(e.cache_file) for e in self.manifest.entries if e.cache_file]

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def cmd_prep(
    input_path: PathLike,
    output_dir: PathLike,
    scene_cfg: Optional[SceneConfig] = None,
    env_cfg: Optional[EnvConfig] = None,
    centers: Optional[Sequence[int]] = None,
) -> PrepResult:
    """
    Build one ground-truth cache per (mesh, object center) plus ``manifest.json``.

    Unreadable or degenerate meshes are logged and recorded as error entries.

    Raises:
        ConfigError: If there is nothing to prepare or the configs disagree
    """
    scene_cfg = scene_cfg or SceneConfig()
    env_cfg = env_cfg or EnvConfig()
    if scene_cfg.scene_size != env_cfg.scene_size:
        raise ConfigError(
            "Scene and environment disagree on the scene size",
            {"scene": scene_cfg.scene_size, "env": env_cfg.scene_size},
        )
    centers = list(range(len(OBJECT_CENTERS))) if centers is None else list(centers)
    meshes = find_meshes(input_path)
    if not meshes:
        raise ConfigError(f"No mesh files in {input_path}")

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = GridFrame.from_config(env_cfg)
    manifest = PrepManifest(g=env_cfg.g, scene_size=env_cfg.scene_size)

    for path in meshes:
        scene_id = path.stem
        try:
            mesh = load_mesh(path)
        except MeshLoadError as e:
            logger.error(f"Skipping {path}: {e}")
            manifest.entries.append(
                PrepEntry(scene_id=scene_id, source=str(path), status="error", error=str(e))
            )
            continue
        for idx in centers:
            cfg = scene_cfg.model_copy(update={"object_center": OBJECT_CENTERS[idx]})
            try:
                scene = prepare_scene(mesh, scene_id, frame, cfg, source=str(path))
            except VoxelNBVError as e:
                logger.error(f"Cannot place {path} at center {idx}: {e}")
                manifest.entries.append(
                    PrepEntry(
                        scene_id=scene_id,
                        source=str(path),
                        object_center=idx,
                        status="error",
                        error=str(e),
                    )
                )
                continue
            target = out / cache_name(scene_id, idx)
            save_scene(scene, target)
            manifest.entries.append(
                PrepEntry(
                    scene_id=scene_id,
                    source=str(path),
                    object_center=idx,
                    cache_file=str(target),
                    occupied_voxels=int(scene.gt.occupied.sum()),
                    visible_faces=scene.gt.total_faces,
                    surface_points=len(scene.gt.surface_points),
                )
            )
            logger.info(f"Prepared {target.name}: {scene.gt.total_faces} visible faces")

    manifest_path = out / "manifest.json"
    manifest_path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    result = PrepResult(manifest=manifest, manifest_path=manifest_path)
    logger.info(
        f"Prep finished: {len(result.cache_files)} caches, {len(result.failures)} failures"
    )
    return result


@lru_cache(maxsize=32)
def _load_cached(path: str) -> PreparedScene:
    return load_scene(path)


def _center_index(center: Sequence[float]) -> int:
    key = (float(center[0]), float(center[1]))
    return OBJECT_CENTERS.index(key) if key in OBJECT_CENTERS else -1


def load_scene_set(paths: Sequence[PathLike]) -> Dict[str, PreparedScene]:
    """Caches from files or directories, keyed by cache file stem."""
    scenes: Dict[str, PreparedScene] = {}
    for entry in paths:
        p = Path(entry)
        files = sorted(p.glob(f"*{CACHE_SUFFIX}")) if p.is_dir() else [p]
        for f in files:
            scenes[f.stem] = load_scene(f)
    if not scenes:
        raise ConfigError(f"No ground-truth caches in {list(map(str, paths))}")
    return scenes


def resolve_caches(spec: BenchSpec) -> List[Path]:
    """
    Cache files for the benchmark's scenes, restricted to the requested object centers.

    Raw meshes (or directories holding only meshes) are prepared into ``<output_dir>/cache``.
    """
    found: List[Path] = []
    for entry in spec.scenes:
        p = Path(entry)
        if p.is_dir() and any(p.glob(f"*{CACHE_SUFFIX}")):
            found.extend(sorted(p.glob(f"*{CACHE_SUFFIX}")))
        elif p.is_file() and p.suffix == CACHE_SUFFIX:
            found.append(p)
        elif p.exists():
            prep = cmd_prep(p, Path(spec.output_dir) / "cache", spec.scene, spec.env, spec.object_centers)
            found.extend(prep.cache_files)
        else:
            raise ConfigError(f"Scene not found: {p}")

    selected = []
    for path in found:
        scene = _load_cached(str(path))
        if _center_index(scene.object_center) in spec.object_centers:
            selected.append(path)
    return selected


# Run
@dataclass(frozen=True)
class EpisodeJob:
    ordinal: int
    cache_path: str
    planner: str
    seed: int

    @property
    def trace_name(self) -> str:
        return f"{Path(self.cache_path).stem}_{sanitize_filename(self.planner)}_s{self.seed}.jsonl"


@dataclass
class EpisodeOutcome:
    job: EpisodeJob
    summary: EpisodeSummary
    metrics: List[MetricRow] = field(default_factory=list)
    timing: Optional[TimingRow] = None
    trace: List[Dict[str, Any]] = field(default_factory=list)
    candidates: List[Dict[str, Any]] = field(default_factory=list)


def run_episode(job: EpisodeJob, spec: BenchSpec) -> EpisodeOutcome:
    """
    Run one episode for views_budget captures (the reset counts as the first view).

    Planner or environment failures end the episode with an error summary.
    """
    scene = _load_cached(job.cache_path)
    env_cfg = spec.env.model_copy(update={"terminate_on_target": False})
    center = format_center(scene.object_center)
    tau = env_cfg.effective_tau
    labels = {
        "scene_id": scene.scene_id,
        "planner": job.planner,
        "object_center": center,
        "seed": job.seed,
    }
    config = {"tau": tau, "fov": math.degrees(env_cfg.intrinsics.vertical_fov), "g": env_cfg.g}
    header = TraceHeader(
        scene_id=scene.scene_id,
        cache_path=job.cache_path,
        planner=job.planner,
        seed=job.seed,
        object_center=scene.object_center,
        env=env_cfg,
    )
    outcome = EpisodeOutcome(job=job, summary=EpisodeSummary(views=0, **labels, **config))
    outcome.trace.append(header.model_dump(mode="json"))
    tracker = IncrementalCoverage(scene.gt.surface_points, tau)
    env: Optional[NBVEnv] = None
    planner = None
    error: Optional[str] = None

    def record(step: int, rec: StepRecord, face_coverage: float) -> None:
        outcome.trace.append(rec.model_dump(mode="json"))
        outcome.metrics.append(
            MetricRow(
                step=step,
                CR=tracker.coverage_ratio,
                CD_cm=to_cm(tracker.chamfer) if tracker.recon_count else math.inf,
                AUC=tracker.auc,
                face_coverage=face_coverage,
                **labels,
                **config,
            )
        )

    start = time.perf_counter()
    try:
        planner = make_planner(job.planner)
        env = NBVEnv(scene, env_cfg)
        rng = np.random.default_rng(job.seed)
        obs = env.reset(seed=job.seed)
        cr = tracker.add(obs.points)
        record(0, env.reset_record(cr), env.face_coverage)
        for step in range(1, spec.views_budget):
            decision = planner.plan(PlannerContext.from_env(env, rng))
            result = env.step(decision.action, decision.lookat)
            if result.termination_reason == "error":
                outcome.trace.append(result.to_record(step).model_dump(mode="json"))
                error = f"{result.diagnostics.get('error')} at step {step}"
                break
            cr = tracker.add(result.obs.points)
            record(step, result.to_record(step, cr), result.face_coverage)
            if spec.debug_candidates and "candidates" in decision.debug:
                outcome.candidates.append({"step": step, **decision.debug})
            if result.terminated:
                break
    except VoxelNBVError as e:
        error = f"{e.error_code}: {e}"
    finally:
        if planner is not None:
            planner.close()
    seconds = time.perf_counter() - start

    views = tracker.curve.budget
    if error is not None:
        logger.error(f"Episode {job.trace_name} failed: {error}")
    summary = {"views": views, "status": "ok" if error is None else "error", "error": error}
    if views:
        summary.update(
            CR=tracker.coverage_ratio,
            CD_cm=to_cm(tracker.chamfer) if tracker.recon_count else math.inf,
            AUC=tracker.auc,
            face_coverage=env.face_coverage if env is not None else None,
        )
        outcome.timing = TimingRow(
            steps=views,
            seconds=seconds,
            fps=views / seconds if seconds > 0 else math.inf,
            **labels,
        )
    outcome.summary = EpisodeSummary(**summary, **labels, **config)
    return outcome


def _run_job(args: Tuple[EpisodeJob, BenchSpec]) -> EpisodeOutcome:
    return run_episode(*args)


def aggregate(episodes: Sequence[EpisodeSummary]) -> List[SummaryRow]:
    """
    Mean over object centers of the per-center means over seeds, per (scene, planner).

    Failed episodes are left out; groups keep first-appearance order.
    """
    groups: Dict[Tuple[str, str], Dict[str, List[EpisodeSummary]]] = {}
    for ep in episodes:
        if ep.status != "ok":
            continue
        groups.setdefault((ep.scene_id, ep.planner), {}).setdefault(ep.object_center, []).append(ep)

    rows = []
    for (scene_id, planner), by_center in groups.items():
        first = next(iter(by_center.values()))[0]

        def over_centers(metric: str) -> float:
            return summarize([summarize([getattr(e, metric) for e in eps]) for eps in by_center.values()])

        rows.append(
            SummaryRow(
                scene_id=scene_id,
                planner=planner,
                centers=len(by_center),
                episodes=sum(len(eps) for eps in by_center.values()),
                CR=over_centers("CR"),
                CD_cm=over_centers("CD_cm"),
                AUC=over_centers("AUC"),
                tau=first.tau,
                fov=first.fov,
                g=first.g,
            )
        )
    return rows


@dataclass
class RunResult:
    outcomes: List[EpisodeOutcome]
    summary: List[SummaryRow]
    output_dir: Path

    @property
    def episodes(self) -> List[EpisodeSummary]:
        return [o.summary for o in self.outcomes]

    @property
    def failures(self) -> List[EpisodeSummary]:
        return [e for e in self.episodes if e.status == "error"]

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def build_jobs(spec: BenchSpec, caches: Sequence[Path]) -> List[EpisodeJob]:
    jobs = []
    for cache in caches:
        for planner in spec.planners:
            for seed in spec.seeds:
                jobs.append(EpisodeJob(len(jobs), str(cache), planner, seed))
    return jobs


def cmd_run(spec: BenchSpec) -> RunResult:
    """
    Run every (scene, center, planner, seed) episode and write the result tables.

    Writes ``steps.csv``, ``episodes.csv``, ``summary.csv``, ``timing.csv`` and one trace per
    episode under ``traces/``; with ``debug_candidates`` also greedy candidate dumps.

    Raises:
        ConfigError: If no scene matches the requested object centers
    """
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = build_jobs(spec, resolve_caches(spec))
    if not jobs:
        raise ConfigError("No scene caches match the requested object centers")
    logger.info(f"Running {len(jobs)} episodes with {spec.workers} worker(s)")

    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(_run_job, zip(jobs, repeat(spec))))
    else:
        outcomes = [run_episode(job, spec) for job in jobs]
    outcomes.sort(key=lambda o: o.job.ordinal)

    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for outcome in outcomes:
        write_jsonl(traces / outcome.job.trace_name, outcome.trace)
        if outcome.candidates:
            candidates = out / "candidates"
            candidates.mkdir(exist_ok=True)
            write_jsonl(candidates / outcome.job.trace_name, outcome.candidates)

    summary = aggregate([o.summary for o in outcomes])
    write_csv(out / "steps.csv", [row for o in outcomes for row in o.metrics])
    write_csv(out / "episodes.csv", [o.summary for o in outcomes])
    write_csv(out / "summary.csv", summary)
    write_csv(out / "timing.csv", [o.timing for o in outcomes if o.timing is not None])

    result = RunResult(outcomes=outcomes, summary=summary, output_dir=out)
    for row in summary:
        logger.info(
            f"{row.scene_id} / {row.planner}: CR={row.CR:.4f} CD={row.CD_cm:.2f}cm AUC={row.AUC:.4f}"
        )
    return result


# Export
def read_trace(path: PathLike) -> Tuple[TraceHeader, List[StepRecord]]:
    """
    Raises:
        ConfigError: If the file is not an episode trace
    """
    lines = list(read_jsonl(path))
    if not lines or lines[0].get("kind") != "header":
        raise ConfigError(f"{path} is not an episode trace")
    return TraceHeader.model_validate(lines[0]), [StepRecord.model_validate(r) for r in lines[1:]]


def cmd_export(
    trace_path: PathLike, output_dir: PathLike, formats: Sequence[str] = ("ply", "csv")
) -> List[Path]:
    """
    Re-render an episode from its trace and write the requested artifacts.

    ply: accumulated reconstruction cloud; csv: coverage curve; pgm/pfm: per-view frames.

    Raises:
        ConfigError: For unknown formats or a malformed trace
    """
    unknown = sorted(set(formats) - set(EXPORT_FORMATS))
    if unknown:
        raise ConfigError(f"Unknown export format(s): {', '.join(unknown)}", {"allowed": list(EXPORT_FORMATS)})
    header, records = read_trace(trace_path)
    views = [r for r in records if r.termination_reason != "error"]
    scene = _load_cached(header.cache_path)
    cfg = header.env
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(trace_path).stem
    written: List[Path] = []

    clouds = []
    for rec in views:
        pose = pose_from_lookat(np.array(rec.position), np.array(rec.lookat))
        depth, gray = capture(scene.bvh, pose, cfg.intrinsics, cfg.effective_max_range)
        clouds.append(unproject(depth, pose, cfg.intrinsics))
        if "pgm" in formats:
            path = out / f"{stem}_view{rec.step:03d}.pgm"
            write_pgm(path, gray)
            written.append(path)
        if "pfm" in formats:
            path = out / f"{stem}_view{rec.step:03d}.pfm"
            write_pfm(path, depth)
            written.append(path)

    if "ply" in formats:
        path = out / f"{stem}.ply"
        cloud = np.concatenate(clouds) if clouds else np.empty((0, 3))
        count = write_ply_points(path, cloud)
        written.append(path)
        logger.info(f"Wrote {count} points to {path}")
    if "csv" in formats:
        path = out / f"{stem}_curve.csv"
        write_csv(path, [CurvePoint(step=r.step, CR=r.cr, face_coverage=r.face_coverage) for r in views])
        written.append(path)
    return written


# Theory and suite
def cmd_theory(
    ks: Sequence[int], trials: int, seed: int, output_dir: PathLike
) -> List[TheoryRow]:
    """Run the coupon-collector sweep; writes ``theory.csv`` and a whitespace ``theory.dat``."""
    rows = run_theory_sweep(ks, trials, seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "theory.csv", rows)
    lines = ["# k closed_form stop_all_cubes stop_all_cubes_std k_ln_k_budget k_ln_k_budget_std"]
    for r in rows:
        closed = "nan" if r.closed_form is None else repr(r.closed_form)
        lines.append(
            f"{r.k} {closed} {r.empirical_mean!r} {r.empirical_std!r} "
            f"{r.fixed_budget_mean!r} {r.fixed_budget_std!r}"
        )
    (out / "theory.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


def cmd_suite(output_dir: PathLike) -> List[Path]:
    return write_suite(output_dir)
