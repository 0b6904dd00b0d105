"""
The whole toolchain end to end through the command line
=======================================================

Simulate a short drive, degrade it, label it, detect, and score,
all through the same entry point the installed console script uses.
Every run writes a run_manifest.json next to its outputs; feeding that
manifest back in reproduces the run byte for byte, which is the
property that makes gap numbers comparable across machines and weeks.
"""

import tempfile
from pathlib import Path

import numpy as np

from lidargap.cli import main
from lidargap.core.geometry import Trajectory
from lidargap.core.io import save_trajectory
from lidargap.simulator import make_box_mesh, make_plane_mesh, save_obj

root = Path(tempfile.mkdtemp(prefix="pipeline_demo_"))


def straight(vid, xy0, heading, speed, z):
    t = np.arange(0.0, 1.0 + 0.05, 0.1)
    x = xy0[0] + speed * np.cos(heading) * t
    y = xy0[1] + speed * np.sin(heading) * t
    pos = np.stack([x, y, np.full_like(t, z)], axis=1)
    return Trajectory(vid, t, pos, np.full_like(t, heading))


# --- inputs: two meshes and three trajectories --------------------------------
static_mesh = root / "ground.obj"
vehicle_mesh = root / "car.obj"
save_obj(make_plane_mesh((-20.0, 60.0), (-30.0, 30.0), 0.0), static_mesh)
save_obj(make_box_mesh(4.88, 1.90, 1.18), vehicle_mesh)

traj_dir = root / "trajectories"
traj_dir.mkdir()
for traj in (
    straight("ego", (0.0, 0.0), 0.0, 5.0, 2.0),
    straight("v2", (18.0, 2.0), 0.0, 0.0, 0.59),
    straight("v3", (12.0, -3.0), 0.0, 5.0, 0.59),
):
    save_trajectory(traj, traj_dir / f"{traj.vehicle_id}.csv")

# --- the eight stages ----------------------------------------------------------
out = root / "out"
steps = [
    ("sim", ["--static-mesh", str(static_mesh), "--vehicle-mesh", str(vehicle_mesh),
             "--trajectory-dir", str(traj_dir), "--ego-id", "ego",
             "--stride", "5", "--name", "sim"]),
    ("augment", ["--noise", "--dataset", str(out / "sim" / "manifest.json"),
                 "--sigma", "0.02"]),
    ("label", ["--dataset", str(out / "sim" / "manifest.json"),
               "--trajectory-dir", str(traj_dir), "--ego-id", "ego",
               "--dims", "4.88", "1.9", "1.18"]),
    ("detect", ["--dataset", str(out / "sim" / "manifest.json")]),
    ("eval", ["--dataset", str(out / "sim" / "manifest.json"),
              "--predictions", str(out / "detect" / "preds"),
              "--thresholds", "0.5", "0.7"]),
    ("stats", ["--dataset-a", str(out / "sim" / "manifest.json"),
               "--dataset-b", str(out / "augment" / "manifest.json"),
               "--split", "all"]),
    ("distance", ["--dataset-a", str(out / "sim" / "manifest.json"),
                  "--dataset-b", str(out / "augment" / "manifest.json"),
                  "--emd-subsample", "128"]),
    ("targets", ["--dataset", str(out / "sim" / "manifest.json"),
                 "--bucket", "full", "--cap", "2000"]),
]
for sub, args in steps:
    code = main([sub, *args, "--out", str(out), "--seed", "0"])
    files = sorted(p.name for p in (out / sub).iterdir())
    print(f"{sub:9s} exit {code}  ->  {', '.join(files)}")

# --- replay from the recorded manifests ----------------------------------------
# every subcommand accepts --config pointing at a previous run_manifest.json;
# rerunning into a fresh directory must reproduce each file exactly
out2 = root / "replay"
identical = 0
for sub, _ in steps:
    main([sub, "--config", str(out / sub / "run_manifest.json"), "--out", str(out2)])
    originals = sorted((out / sub).rglob("*"))
    same = all(
        (out2 / sub / p.relative_to(out / sub)).read_bytes() == p.read_bytes()
        for p in originals if p.is_file()
    )
    identical += same
print(f"\nreplayed {len(steps)} stages from their run manifests: "
      f"{identical} of {len(steps)} byte-identical")
