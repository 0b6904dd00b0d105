"""Subcommand front end for the full pipeline.

Every run resolves its configuration (defaults < JSON config file < flags),
writes its outputs under <out>/<subcommand>/, and emits a run_manifest.json
recording the resolved configuration and its hash. Re-running a subcommand
with --config pointed at that manifest reproduces the outputs byte for byte;
--out and --threads are runtime-only and never enter the manifest.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .autolabel import RefineConfig, autolabel_dataset
from .core.geometry import ANCHOR_DIMS_LWH, RangeBucket, VehicleDims
from .core.io import (
    DatasetManifest,
    FrameRecord,
    load_manifest,
    load_predictions,
    load_trajectory,
    save_manifest,
    save_point_cloud,
    save_predictions,
)
from .detector import DetectorConfig, detect
from .effects import (
    DownsampleConfig,
    NoiseConfig,
    apply_range_noise,
    compute_keep_table,
    downsample_matched,
    downsample_random,
    load_keep_table,
    save_keep_table,
)
from .errors import (
    ConfigurationError,
    FormatError,
    PairingError,
    ToolkitError,
    ValidationError,
)
from .evaluation import evaluate
from .seeding import derive_seed
from .similarity import DistanceConfig, dataset_distance
from .simulator import SensorConfig, SensorRig, build_scene, load_obj, load_stl, simulate_dataset
from .stats import compare_stats, frames_in_split, location_histogram
from .targets import aggregate, export_aggregate, export_ply

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


# ---------------------------------------------------------------- config ---

def _cast_path(v):
    return os.fspath(Path(v).resolve())


def _cast_opt_path(v):
    return None if v is None else _cast_path(v)


def _cast_float3(v):
    vals = [float(x) for x in v]
    if len(vals) != 3:
        raise ValueError("expected 3 numbers")
    return vals


def _cast_floats(v):
    return [float(x) for x in v]


def _cast_rig(v):
    if v is None:
        return None
    if not isinstance(v, dict) or set(v) != {"sensors"}:
        raise ValueError("rig must be an object with a 'sensors' list")
    sensors = []
    allowed = {
        "horizontal_fov",
        "yaw_offset",
        "channels",
        "vertical_fov",
        "horizontal_resolution",
        "max_range",
        "mount_offset",
    }
    for i, s in enumerate(v["sensors"]):
        unknown = set(s) - allowed
        if unknown:
            raise ValueError(f"sensor {i}: unknown key '{sorted(unknown)[0]}'")
        sensors.append(
            {
                "horizontal_fov": float(s.get("horizontal_fov", 120.0)),
                "yaw_offset": float(s.get("yaw_offset", 0.0)),
                "channels": int(s.get("channels", 32)),
                "vertical_fov": [float(x) for x in s.get("vertical_fov", [-15.0, 15.0])],
                "horizontal_resolution": float(s.get("horizontal_resolution", 0.2)),
                "max_range": float(s.get("max_range", 250.0)),
                "mount_offset": [float(x) for x in s.get("mount_offset", [0.0, 0.0, 0.0])],
            }
        )
    return {"sensors": sensors}


def _rig_from_config(rig_cfg) -> SensorRig:
    if rig_cfg is None:
        return SensorRig()
    return SensorRig(
        tuple(
            SensorConfig(
                horizontal_fov=s["horizontal_fov"],
                yaw_offset=s["yaw_offset"],
                channels=s["channels"],
                vertical_fov=tuple(s["vertical_fov"]),
                horizontal_resolution=s["horizontal_resolution"],
                max_range=s["max_range"],
                mount_offset=tuple(s["mount_offset"]),
            )
            for s in rig_cfg["sensors"]
        )
    )


# Per-subcommand schema: key -> (caster, default). None defaults stay None
# unless required (checked by the command itself).
SCHEMAS: dict[str, dict] = {
    "sim": {
        "static_mesh": (_cast_path, None),
        "vehicle_mesh": (_cast_path, None),
        "trajectory_dir": (_cast_path, None),
        "ego_id": (str, None),
        "stride": (int, 5),
        "name": (str, "sim"),
        "rig": (_cast_rig, None),
        "seed": (int, 0),
    },
    "augment": {
        "dataset": (_cast_path, None),
        "mode": (str, None),
        "sigma": (float, 0.02),
        "keep_ratio": (float, 0.8),
        "noise_origin": (_cast_float3, [0.0, 0.0, 0.0]),
        "table": (_cast_opt_path, None),
        "real": (_cast_opt_path, None),
        "bin_width": (float, 2.0),
        "seed": (int, 0),
    },
    "label": {
        "dataset": (_cast_path, None),
        "trajectory_dir": (_cast_path, None),
        "ego_id": (str, None),
        "dims": (_cast_float3, list(ANCHOR_DIMS_LWH)),
        "search_radius_xy": (float, 1.0),
        "step": (float, 0.1),
        "shell_margin": (float, 0.3),
        "shell_penalty": (float, 0.5),
        "min_points": (int, 5),
        "time_shift": (float, 0.0),
        "seed": (int, 0),
    },
    "stats": {
        "dataset_a": (_cast_path, None),
        "dataset_b": (_cast_path, None),
        "split": (str, "train"),
        "cell_size": (float, 2.0),
        "seed": (int, 0),
    },
    "eval": {
        "dataset": (_cast_path, None),
        "predictions": (_cast_path, None),
        "thresholds": (_cast_floats, [0.5, 0.7]),
        "seed": (int, 0),
    },
    "distance": {
        "dataset_a": (_cast_path, None),
        "dataset_b": (_cast_path, None),
        "emd_subsample": (int, 1024),
        "seed": (int, 0),
    },
    "targets": {
        "dataset": (_cast_path, None),
        "bucket": (str, "full"),
        "cap": (int, 20000),
        "projection": (str, "top"),
        "seed": (int, 0),
    },
    "detect": {
        "dataset": (_cast_path, None),
        "ground_z": (float, -0.3),
        "cluster_eps": (float, 0.7),
        "min_cluster": (int, 10),
        "anchor": (_cast_float3, list(ANCHOR_DIMS_LWH)),
        "yaw_steps": (int, 36),
        "seed": (int, 0),
    },
}


def _load_config_file(path: str, subcommand: str) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as e:
        raise ConfigurationError(f"cannot read config {p}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{p}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{p}: config must be a JSON object")
    if "subcommand" in doc and "config" in doc:
        if doc["subcommand"] != subcommand:
            raise ConfigurationError(
                f"{p}: manifest is for subcommand '{doc['subcommand']}', "
                f"not '{subcommand}'"
            )
        doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{p}: manifest 'config' must be an object")
    return doc


def resolve_config(subcommand: str, config_path: str | None, overrides: dict) -> dict:
    """defaults < config file < explicitly passed flags; unknown keys are
    rejected by name."""
    schema = SCHEMAS[subcommand]
    file_cfg = _load_config_file(config_path, subcommand) if config_path else {}
    for key in file_cfg:
        if key not in schema:
            raise ConfigurationError(
                f"unknown config key '{key}' for subcommand '{subcommand}'"
            )
    resolved = {}
    for key, (cast, default) in schema.items():
        if key in overrides and overrides[key] is not None:
            raw = overrides[key]
        elif key in file_cfg:
            raw = file_cfg[key]
        else:
            resolved[key] = default
            continue
        if raw is None:
            resolved[key] = None
            continue
        try:
            resolved[key] = cast(raw)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"config key '{key}': {e}") from e
    return resolved


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigurationError(f"missing required option(s): {', '.join(missing)}")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_run_manifest(out_sub: Path, subcommand: str, cfg: dict) -> None:
    doc = {"subcommand": subcommand, "config": cfg, "config_hash": config_hash(cfg)}
    out_sub.mkdir(parents=True, exist_ok=True)
    (out_sub / "run_manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )


# --------------------------------------------------------------- helpers ---

def _load_mesh(path: str):
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".stl":
        return load_stl(path)
    raise ConfigurationError(f"unsupported mesh format '{suffix}' (use .obj or .stl)")


def _load_trajectory_dir(path: str) -> dict:
    files = sorted(Path(path).glob("*.csv"))
    if not files:
        raise ConfigurationError(f"no trajectory CSVs in {path}")
    return {f.stem: load_trajectory(f) for f in files}


def _parallel_map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -------------------------------------------------------------- commands ---

def cmd_sim(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "static_mesh", "vehicle_mesh", "trajectory_dir", "ego_id")
    scene = build_scene(_load_mesh(cfg["static_mesh"]), _load_mesh(cfg["vehicle_mesh"]))
    trajs = _load_trajectory_dir(cfg["trajectory_dir"])
    rig = _rig_from_config(cfg["rig"])
    simulate_dataset(
        scene,
        trajs,
        cfg["ego_id"],
        rig,
        out_sub,
        stride=cfg["stride"],
        name=cfg["name"],
        threads=threads,
    )


def cmd_augment(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset", "mode")
    man = load_manifest(cfg["dataset"])
    mode = cfg["mode"]
    if mode not in ("noise", "downsample", "matched"):
        raise ConfigurationError(
            f"mode must be noise, downsample, or matched, got '{mode}'"
        )
    table = None
    if mode == "matched":
        if cfg["table"]:
            table = load_keep_table(cfg["table"])
        elif cfg["real"]:
            table = compute_keep_table(load_manifest(cfg["real"]), man, cfg["bin_width"])
        else:
            raise ConfigurationError("matched mode needs --table or --real")
        save_keep_table(table, out_sub / "keep_table.csv")

    (out_sub / "clouds").mkdir(parents=True, exist_ok=True)
    (out_sub / "labels").mkdir(parents=True, exist_ok=True)

    def run(fr: FrameRecord) -> FrameRecord:
        cloud = man.load_cloud(fr)
        frame_seed = derive_seed(cfg["seed"], fr.frame_id)
        if mode == "noise":
            out = apply_range_noise(
                cloud, NoiseConfig(cfg["sigma"], frame_seed), cfg["noise_origin"]
            )
        elif mode == "downsample":
            out = downsample_random(cloud, DownsampleConfig(cfg["keep_ratio"], frame_seed))
        else:
            out = downsample_matched(cloud, table, frame_seed)
        cloud_rel = f"clouds/{fr.frame_id}.bin"
        save_point_cloud(out, out_sub / cloud_rel)
        label_rel = None
        src = man.labels_path(fr)
        if src is not None:
            label_rel = f"labels/{fr.frame_id}.txt"
            shutil.copyfile(src, out_sub / label_rel)
        return FrameRecord(fr.frame_id, fr.timestamp, cloud_rel, label_rel)

    frames = _parallel_map(run, man.frames, threads)
    new_man = DatasetManifest(
        frames, name=f"{man.name}-{mode}", root=out_sub, split=man.split
    )
    save_manifest(new_man, out_sub / "manifest.json")


def cmd_label(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset", "trajectory_dir", "ego_id")
    man = load_manifest(cfg["dataset"])
    trajs = _load_trajectory_dir(cfg["trajectory_dir"])
    rc = RefineConfig(
        search_radius_xy=cfg["search_radius_xy"],
        step=cfg["step"],
        shell_margin=cfg["shell_margin"],
        shell_penalty=cfg["shell_penalty"],
        min_points=cfg["min_points"],
    )
    result = autolabel_dataset(
        man,
        trajs,
        cfg["ego_id"],
        VehicleDims(*cfg["dims"]),
        rc,
        out_sub,
        time_shift=cfg["time_shift"],
        threads=threads,
    )
    (out_sub / "errors.json").write_text(json.dumps(result.errors, indent=2) + "\n")


def cmd_stats(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset_a", "dataset_b")
    man_a = load_manifest(cfg["dataset_a"])
    man_b = load_manifest(cfg["dataset_b"])
    split = None if cfg["split"] == "all" else cfg["split"]
    report = compare_stats(man_a, man_b, split)
    out_sub.mkdir(parents=True, exist_ok=True)
    report.save_json(out_sub / "stats.json")
    (out_sub / "stats.txt").write_text(report.to_text() + "\n")
    for tag, man in (("a", man_a), ("b", man_b)):
        labels = [man.load_labels(fr) for fr in frames_in_split(man, split)]
        hist = location_histogram(labels, cfg["cell_size"])
        hist.save_csv(out_sub / f"histogram_{tag}.csv")


def cmd_eval(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset", "predictions")
    man = load_manifest(cfg["dataset"])
    preds_dir = Path(cfg["predictions"])
    frame_ids = set(man.frame_ids())
    pred_ids = {p.stem for p in preds_dir.glob("*.txt")}
    if frame_ids != pred_ids:
        raise ValidationError(
            "prediction files do not align with dataset frames; "
            f"missing {sorted(frame_ids - pred_ids)[:10]}, "
            f"extra {sorted(pred_ids - frame_ids)[:10]}"
        )
    labels = {fr.frame_id: man.load_labels(fr) for fr in man.frames}
    preds = {
        fid: load_predictions(preds_dir / f"{fid}.txt", fid) for fid in frame_ids
    }
    report = evaluate(preds, labels, tuple(cfg["thresholds"]))
    report.save_json(out_sub / "report.json")
    report.save_csv(out_sub / "report.csv")


def cmd_distance(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset_a", "dataset_b")
    report = dataset_distance(
        load_manifest(cfg["dataset_a"]),
        load_manifest(cfg["dataset_b"]),
        DistanceConfig(cfg["emd_subsample"], cfg["seed"]),
        threads=threads,
    )
    report.save_csv(out_sub / "distances.csv")
    report.save_json(out_sub / "summary.json")


def cmd_targets(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset")
    try:
        bucket = RangeBucket(cfg["bucket"])
    except ValueError:
        raise ConfigurationError(
            f"bucket must be one of close/mid/long/full, got '{cfg['bucket']}'"
        ) from None
    man = load_manifest(cfg["dataset"])
    agg = aggregate(man, bucket, cap=cfg["cap"], seed=cfg["seed"])
    export_aggregate(agg, out_sub / "aggregate.csv", projection=cfg["projection"])
    export_ply(agg, out_sub / "aggregate.ply")
    meta = {
        "bucket": bucket.value,
        "n_frames": agg.n_frames,
        "n_targets": agg.n_targets,
        "n_source_points": agg.n_source_points,
        "n_points": int(agg.points.shape[0]),
    }
    (out_sub / "aggregate.json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_detect(cfg: dict, out_sub: Path, threads: int) -> None:
    _require(cfg, "dataset")
    man = load_manifest(cfg["dataset"])
    dc = DetectorConfig(
        ground_z=cfg["ground_z"],
        cluster_eps=cfg["cluster_eps"],
        min_cluster=cfg["min_cluster"],
        anchor=VehicleDims(*cfg["anchor"]),
        yaw_steps=cfg["yaw_steps"],
    )
    (out_sub / "preds").mkdir(parents=True, exist_ok=True)

    def run(fr: FrameRecord) -> None:
        cloud = man.load_cloud(fr)
        preds = detect(cloud, dc, frame_id=fr.frame_id)
        save_predictions(preds, out_sub / "preds" / f"{fr.frame_id}.txt")

    _parallel_map(run, man.frames, threads)


COMMANDS = {
    "sim": (cmd_sim, "simulate a dataset by replaying trajectories in a mesh scene"),
    "augment": (cmd_augment, "apply noise or downsampling effects to a dataset"),
    "label": (cmd_label, "auto-label a dataset from trajectories with box refinement"),
    "stats": (cmd_stats, "compare two datasets statistically"),
    "eval": (cmd_eval, "evaluate predictions against labels (AP40, recall)"),
    "distance": (cmd_distance, "Chamfer/EMD distances over paired frames"),
    "targets": (cmd_targets, "aggregate canonical in-box points per range bucket"),
    "detect": (cmd_detect, "run the baseline detector over a dataset"),
}


# ------------------------------------------------------------- arguments ---

class _Parser(argparse.ArgumentParser):
    """argparse that reports flag errors through the exit-code contract."""

    def error(self, message):
        raise ConfigurationError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file or a previous run_manifest.json")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="root random seed (default 0)")
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: all cores); never changes results",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lidargap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("sim", help=COMMANDS["sim"][1])
    _add_common(p)
    p.add_argument("--static-mesh", dest="static_mesh", help="track mesh (.obj/.stl)")
    p.add_argument("--vehicle-mesh", dest="vehicle_mesh", help="canonical vehicle mesh")
    p.add_argument("--trajectory-dir", dest="trajectory_dir", help="dir of <vehicle_id>.csv")
    p.add_argument("--ego-id", dest="ego_id", help="which trajectory is the ego vehicle")
    p.add_argument("--stride", type=int, help="keep every stride-th frame (default 5)")
    p.add_argument("--name", help="dataset name (default sim)")

    p = sub.add_parser("augment", help=COMMANDS["augment"][1])
    _add_common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--noise", dest="mode", action="store_const", const="noise",
                   help="Gaussian range noise")
    g.add_argument("--downsample", dest="mode", action="store_const", const="downsample",
                   help="random downsampling")
    g.add_argument("--matched", dest="mode", action="store_const", const="matched",
                   help="distribution-matched downsampling")
    p.add_argument("--dataset", help="input dataset manifest")
    p.add_argument("--sigma", type=float, help="noise sigma in meters (default 0.02)")
    p.add_argument("--keep-ratio", dest="keep_ratio", type=float,
                   help="random keep ratio (default 0.8)")
    p.add_argument("--table", help="keep-probability table CSV (matched mode)")
    p.add_argument("--real", help="real dataset manifest to fit the table (matched mode)")
    p.add_argument("--bin-width", dest="bin_width", type=float,
                   help="table bin width in meters (default 2.0)")

    p = sub.add_parser("label", help=COMMANDS["label"][1])
    _add_common(p)
    p.add_argument("--dataset", help="cloud dataset manifest to label")
    p.add_argument("--trajectory-dir", dest="trajectory_dir", help="dir of <vehicle_id>.csv")
    p.add_argument("--ego-id", dest="ego_id", help="which trajectory is the ego vehicle")
    p.add_argument("--dims", nargs=3, type=float, metavar=("L", "W", "H"),
                   help="target dimensions (default anchor dims)")
    p.add_argument("--search-radius-xy", dest="search_radius_xy", type=float,
                   help="refinement search radius (default 1.0)")
    p.add_argument("--step", type=float, help="refinement grid step (default 0.1)")
    p.add_argument("--shell-margin", dest="shell_margin", type=float,
                   help="shell margin (default 0.3)")
    p.add_argument("--shell-penalty", dest="shell_penalty", type=float,
                   help="shell penalty weight (default 0.5)")
    p.add_argument("--min-points", dest="min_points", type=int,
                   help="low-confidence threshold (default 5)")
    p.add_argument("--time-shift", dest="time_shift", type=float,
                   help="added to cloud timestamps before trajectory lookup (default 0)")

    p = sub.add_parser("stats", help=COMMANDS["stats"][1])
    _add_common(p)
    p.add_argument("--dataset-a", dest="dataset_a", help="first dataset manifest")
    p.add_argument("--dataset-b", dest="dataset_b", help="second dataset manifest")
    p.add_argument("--split", choices=["train", "val", "test", "all"],
                   help="which split to measure (default train)")
    p.add_argument("--cell-size", dest="cell_size", type=float,
                   help="location histogram cell size (default 2.0)")

    p = sub.add_parser("eval", help=COMMANDS["eval"][1])
    _add_common(p)
    p.add_argument("--dataset", help="labeled dataset manifest (ground truth)")
    p.add_argument("--predictions", help="directory of per-frame prediction files")
    p.add_argument("--thresholds", nargs="+", type=float,
                   help="IoU thresholds (default 0.5 0.7)")

    p = sub.add_parser("distance", help=COMMANDS["distance"][1])
    _add_common(p)
    p.add_argument("--dataset-a", dest="dataset_a", help="first dataset manifest")
    p.add_argument("--dataset-b", dest="dataset_b", help="second dataset manifest")
    p.add_argument("--emd-subsample", dest="emd_subsample", type=int,
                   help="EMD subsample size (default 1024)")

    p = sub.add_parser("targets", help=COMMANDS["targets"][1])
    _add_common(p)
    p.add_argument("--dataset", help="labeled dataset manifest")
    p.add_argument("--bucket", choices=["close", "mid", "long", "full"],
                   help="range bucket (default full)")
    p.add_argument("--cap", type=int, help="max aggregated points (default 20000)")
    p.add_argument("--projection", choices=["side", "top", "front", "back"],
                   help="2D projection columns (default top)")

    p = sub.add_parser("detect", help=COMMANDS["detect"][1])
    _add_common(p)
    p.add_argument("--dataset", help="dataset manifest to run the detector on")
    p.add_argument("--ground-z", dest="ground_z", type=float,
                   help="fallback ground height (default -0.3)")
    p.add_argument("--cluster-eps", dest="cluster_eps", type=float,
                   help="clustering distance (default 0.7)")
    p.add_argument("--min-cluster", dest="min_cluster", type=int,
                   help="minimum cluster size (default 10)")
    p.add_argument("--anchor", nargs=3, type=float, metavar=("L", "W", "H"),
                   help="anchor box dims (default ground-truth dims)")
    p.add_argument("--yaw-steps", dest="yaw_steps", type=int,
                   help="yaw hypotheses in [0, pi) (default 36)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        sub = args.subcommand
        overrides = {
            k: v
            for k, v in vars(args).items()
            if k not in ("subcommand", "config", "out", "threads") and v is not None
        }
        cfg = resolve_config(sub, args.config, overrides)
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        if threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        out_sub = Path(args.out) / sub
        write_run_manifest(out_sub, sub, cfg)
        COMMANDS[sub][0](cfg, out_sub, threads)
        return EXIT_OK
    except (ConfigurationError, ValidationError, FormatError, PairingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ToolkitError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
