"""Command-line driver for the sparse-ground-truth pipeline.

    fisheyedepth pipeline                       # simulate -> project -> occlude -> depthmap
    fisheyedepth simulate | project | occlude | depthmap
    fisheyedepth eval --pred P.pgm --gt G.pgm
    fisheyedepth loss --pred P.pgm --gt G.pgm
    fisheyedepth train-toy [--input depth.pgm]
    fisheyedepth verify-arch [--arch spec.json]

Every command takes ``--config`` (JSON, defaults to the bundled demo),
``--seed``, ``--out`` and repeatable ``--set key.path=value`` overrides. Input
files named in the config resolve relative to the config file; ``out`` resolves
relative to the working directory. ``FISHEYEDEPTH_LOG`` sets the log level.

Exit status: 0 success, 1 bad configuration (the message names the key),
2 unreadable or unwritable files.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import depthmap, metrics, occlusion, scansim, sivloss
from .geometry import Calibration, load_calibration
from .nnkit import arch as nnarch
from .nnkit.optim import AdamConfig
from .nnkit.toy import ToyModel, pixel_features, train_toy

logger = logging.getLogger("fisheyedepth")

LOG_ENV = "FISHEYEDEPTH_LOG"
CONFIG_KEYS = {"scene", "calibration", "lidar", "simulate", "layers", "depthmap", "cap", "adam", "toy",
               "seed", "out", "architecture"}
ARTIFACTS = {
    "cloud": "cloud.csv",
    "projected": "projected.csv",
    "occluded": "occluded.csv",
    "layers": "layers",
    "full": "depth_full.pgm",
    "depth": "depth.pgm",
    "sidecar": "depth.json",
    "valid": "depth_valid.csv",
    "metrics": "metrics.json",
    "history": "history.csv",
    "toy_pred": "toy_pred.pgm",
    "toy_params": "toy_params.json",
}


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class IOFailure(Exception):
    pass


# -- configuration -----------------------------------------------------------------------------

def _bundled_config():
    return resources.files("fisheyedepth").joinpath("data/demo_config.json")


def load_config(path=None):
    """Read a config file; returns ``(dict, directory that relative inputs resolve against)``."""
    src = _bundled_config() if path is None else Path(path)
    try:
        text = src.read_text()
    except OSError as e:
        raise IOFailure(f"cannot read config {src}: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("<config>", f"not valid JSON ({e})") from e
    if not isinstance(cfg, dict):
        raise ConfigError("<config>", "top level must be an object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown config key")
    return cfg, Path(str(src)).parent


def apply_override(cfg, assignment):
    """``a.b.c=value``; the value is parsed as JSON when possible, else kept as a string."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(assignment, "override must look like key.path=value")
    parts = key.split(".")
    if parts[0] not in CONFIG_KEYS:
        raise ConfigError(key, "unknown config key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    for i, p in enumerate(parts[:-1]):
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(".".join(parts[:i + 1]), "is not a section")
    node[parts[-1]] = value


def _section(cfg, key, build):
    if key not in cfg:
        raise ConfigError(key, "missing")
    try:
        return build(cfg[key])
    except KeyError as e:
        raise ConfigError(f"{key}.{e.args[0]}", "missing") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(key, str(e)) from e


def _input_file(cfg, base, key):
    if not isinstance(cfg.get(key), str):
        raise ConfigError(key, "expected a file path")
    path = base / cfg[key]
    if not path.is_file():
        raise ConfigError(key, f"file not found: {path}")
    return path


def _read(loader, path, what):
    try:
        return loader(path)
    except (OSError, ValueError, KeyError) as e:
        raise IOFailure(f"cannot read {what} {path}: {e}") from e


def _write(writer, path, *args, **kwargs):
    try:
        writer(*args, **kwargs)
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e
    logger.info("wrote %s", path)


def _write_text(path, text):
    _write(Path(path).write_text, path, text)


class Settings:
    """Validated view of a config dict plus seed and output directory."""

    def __init__(self, cfg, base, seed, out):
        self.cfg, self.base = cfg, base
        self.seed = _section(cfg, "seed", _parse_seed) if seed is None else _parse_seed(seed)
        out = cfg.get("out", "out") if out is None else out
        if not isinstance(out, str):
            raise ConfigError("out", "expected a directory path")
        self.out = Path(out)

    def path(self, name):
        return self.out / ARTIFACTS[name]

    def ensure_out(self):
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IOFailure(f"cannot create output directory {self.out}: {e}") from e

    def scene(self):
        return _read(scansim.load_scene, _input_file(self.cfg, self.base, "scene"), "scene")

    def calibration(self):
        path = _input_file(self.cfg, self.base, "calibration")
        try:
            return load_calibration(path)
        except OSError as e:
            raise IOFailure(f"cannot read calibration {path}: {e}") from e
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError("calibration", f"{path}: {e}") from e

    def lidar(self):
        return _section(self.cfg, "lidar", scansim.LidarConfig.from_dict)

    def simulate(self):
        def build(d):
            t, noise = float(d.get("timestamp", 0.0)), float(d.get("noise_std", 0.0))
            if noise < 0:
                raise ValueError("noise_std must be >= 0")
            return t, noise
        return _section(self.cfg, "simulate", build)

    def layers(self):
        return _section(self.cfg, "layers", occlusion.LayerConfig.from_dict)

    def depthmap(self):
        def build(d):
            out = {"factor": int(d.get("factor", 1)), "scale": float(d.get("pgm_scale", depthmap.DEFAULT_SCALE))}
            if out["factor"] < 1 or not out["scale"] > 0:
                raise ValueError("factor must be >= 1 and pgm_scale positive")
            roi = d.get("roi")
            out["roi"] = None if roi is None else depthmap.CropRegion(*(int(v) for v in roi))
            auto = d.get("auto_roi")
            out["auto_roi"] = None if auto is None else tuple(int(v) for v in auto)
            target = d.get("target")
            out["target"] = None if target is None else tuple(int(v) for v in target)
            return out
        return _section(self.cfg, "depthmap", build)

    def cap(self):
        return _section(self.cfg, "cap", lambda d: metrics.CapPolicy(**d))

    def adam(self):
        return _section(self.cfg, "adam", AdamConfig.from_dict)

    def toy(self):
        def build(d):
            steps, hidden = int(d.get("steps", 300)), int(d.get("hidden", 8))
            if steps < 0 or hidden < 1:
                raise ValueError("steps must be >= 0 and hidden >= 1")
            return steps, hidden
        return _section(self.cfg, "toy", build)


def _parse_seed(v):
    try:
        s = int(v)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"not an integer: {v!r}") from None
    if not 0 <= s < 2 ** 64 or (isinstance(v, float) and v != s):
        raise ConfigError("seed", "must be an integer in [0, 2^64)")
    return s


# -- stages ------------------------------------------------------------------------------------

def stage_simulate(st: Settings):
    scene, lidar = st.scene(), st.lidar()
    t, noise = st.simulate()
    frame = scansim.simulate_scan(scene, lidar, t=t, noise_std=noise, rng=np.random.default_rng(st.seed))
    st.ensure_out()
    _write(scansim.write_cloud_csv, st.path("cloud"), frame, st.path("cloud"))
    print(f"simulate: {len(frame)} returns -> {st.path('cloud')}")
    return frame


def stage_project(st: Settings, frame=None, source=None):
    calib: Calibration = st.calibration()
    if frame is None:
        frame = _read(scansim.read_cloud_csv, Path(source or st.path("cloud")), "point cloud")
    cam = calib.camera_from_lidar.apply(frame.points)
    pts = occlusion.ProjectedPoints.from_camera_points(cam, calib.intrinsics)
    st.ensure_out()
    _write(occlusion.write_projected_csv, st.path("projected"), pts, st.path("projected"))
    print(f"project: {len(pts)} of {len(frame)} points in view -> {st.path('projected')}")
    return pts


def stage_occlude(st: Settings, pts=None, source=None, debug_layers=False):
    layers, size = st.layers(), st.calibration().intrinsics.size
    if pts is None:
        pts = _read(occlusion.read_projected_csv, Path(source or st.path("projected")), "projected points")
    try:
        stack = occlusion.build_layer_stack(pts, layers, size)
    except ValueError as e:
        raise IOFailure(f"projected points do not fit the calibrated image: {e}") from e
    kept, removed = occlusion.filter_occluded(pts, stack)
    st.ensure_out()
    _write(occlusion.write_projected_csv, st.path("occluded"), kept, st.path("occluded"))
    if debug_layers:
        _write(occlusion.write_layer_images, st.path("layers"), stack, st.path("layers"))
    print(f"occlude: removed {int(removed.sum())}, kept {len(kept)} -> {st.path('occluded')}")
    return kept


def stage_depthmap(st: Settings, kept=None, source=None):
    dm, size = st.depthmap(), st.calibration().intrinsics.size
    if kept is None:
        kept = _read(occlusion.read_projected_csv, Path(source or st.path("occluded")), "projected points")
    try:
        full = depthmap.rasterize(kept.pixels, kept.ranges, size)
    except ValueError as e:
        raise IOFailure(f"projected points do not fit the calibrated image: {e}") from e
    roi = dm["roi"]
    if roi is None and dm["auto_roi"] is not None:
        roi = depthmap.auto_roi([full], dm["auto_roi"])
    try:
        cropped = full if roi is None else depthmap.crop(full, roi)
        final = depthmap.downsample(cropped, dm["factor"], dm["target"])
    except ValueError as e:
        raise ConfigError("depthmap", str(e)) from e
    st.ensure_out()
    for name, m in (("full", full), ("depth", final)):
        try:
            data = depthmap.encode_pgm16(m, dm["scale"])
        except ValueError as e:
            raise ConfigError("depthmap.pgm_scale", str(e)) from e
        _write(st.path(name).write_bytes, st.path(name), data)
    _write(depthmap.write_sidecar, st.path("sidecar"), st.path("sidecar"),
           source_size=list(size), roi=None if roi is None else [roi.x, roi.y, roi.width, roi.height],
           factor=dm["factor"], target=None if dm["target"] is None else list(dm["target"]),
           scale=dm["scale"], valid_full=full.n, valid=final.n)
    _write(depthmap.write_valid_csv, st.path("valid"), final, st.path("valid"))
    print(f"depthmap: {full.n} valid at {full.width}x{full.height}, {final.n} valid at "
          f"{final.width}x{final.height} -> {st.path('depth')}")
    return final


def _load_pair(pred_path, gt_path):
    pred = _read(depthmap.load_pgm16, pred_path, "prediction")
    gt = _read(depthmap.load_pgm16, gt_path, "ground truth")
    if pred.size != gt.size:
        raise IOFailure(f"size mismatch: prediction {pred.size} vs ground truth {gt.size}")
    return pred, gt


def stage_eval(st: Settings, pred_path, gt_path):
    pred, gt = _load_pair(pred_path, gt_path)
    policy = st.cap()
    try:
        report = metrics.evaluate(pred, gt, policy)
    except metrics.EmptyEvaluationError as e:
        raise ConfigError("cap", str(e)) from e
    st.ensure_out()
    _write_text(st.path("metrics"), report.to_json())
    sys.stdout.write(report.to_text())
    return report


def stage_loss(pred_path, gt_path):
    pred, gt = _load_pair(pred_path, gt_path)
    pair = sivloss.DepthPair.from_arrays(np.where(gt.valid, pred.depth, 0.0), gt)
    if pair.n == 0:
        raise IOFailure(f"{gt_path} has no valid pixels")
    loss = sivloss.loss_linear(pair)
    print(f"loss: {loss!r}\nvalid: {pair.n}\nclamped: {pair.clamped}")
    return loss


def stage_train_toy(st: Settings, source=None):
    gt = _read(depthmap.load_pgm16, Path(source or st.path("depth")), "ground truth")
    steps, hidden = st.toy()
    adam, scale = st.adam(), st.depthmap()["scale"]
    feats = pixel_features((gt.height, gt.width))
    try:
        result = train_toy([(feats, gt)], ToyModel(feats.shape[-1], hidden), steps=steps, seed=st.seed, adam=adam)
    except ValueError as e:
        raise IOFailure(f"cannot train on {source or st.path('depth')}: {e}") from e
    log_pred = result.model.forward(result.params, feats.reshape(-1, feats.shape[-1])).reshape(gt.valid.shape)
    # the loss ignores global scale, so align it to the ground truth before saving
    log_pred = log_pred + np.mean(np.log(gt.depth[gt.valid]) - log_pred[gt.valid])
    pred = np.clip(np.exp(log_pred), scale, 65535 * scale)
    st.ensure_out()
    _write_text(st.path("history"), result.history_csv())
    _write_text(st.path("toy_params"), json.dumps(
        {"n_features": result.model.n_features, "hidden": result.model.hidden,
         "params": [float(v) for v in result.params]}, indent=2) + "\n")
    pm = depthmap.SparseDepthMap(pred, np.ones_like(gt.valid))
    _write(st.path("toy_pred").write_bytes, st.path("toy_pred"), depthmap.encode_pgm16(pm, scale))
    print(f"train-toy: loss {float(result.losses[0])!r} -> {float(result.losses[-1])!r} in {steps} steps -> {st.path('history')}")
    return result


def stage_verify_arch(st: Settings, arch_path=None):
    if arch_path is None and "architecture" in st.cfg:
        arch_path = _input_file(st.cfg, st.base, "architecture")
    try:
        spec = nnarch.load_architecture(arch_path)
    except OSError as e:
        raise IOFailure(f"cannot read architecture {arch_path}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("architecture", str(e)) from e
    try:
        report = nnarch.verify_architecture(spec)
    except nnarch.ArchitectureError as e:
        raise ConfigError("architecture", str(e)) from e
    sys.stdout.write(report.to_text())
    return report


# -- entry point -------------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: bundled demo)")
    common.add_argument("--seed", help="random seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. layers.margin=0.3")

    p = argparse.ArgumentParser(prog="fisheyedepth", description="LIDAR-supervised fisheye depth pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="ray-cast one LIDAR revolution")
    for name, helptext in (("project", "project a point cloud into the fisheye image"),
                           ("depthmap", "rasterize, crop and downsample filtered points")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--input")
    sp = sub.add_parser("occlude", parents=[common], help="remove occluded projected points")
    sp.add_argument("--input")
    sp.add_argument("--debug-layers", action="store_true", help="also write per-layer PGM images")
    sp = sub.add_parser("pipeline", parents=[common], help="simulate, project, occlude and depthmap")
    sp.add_argument("--debug-layers", action="store_true", help="also write per-layer PGM images")
    for name, what in (("eval", "capped metrics"), ("loss", "scale-invariant loss")):
        sp = sub.add_parser(name, parents=[common], help=f"{what} of a predicted vs ground-truth PGM")
        sp.add_argument("--pred", required=True)
        sp.add_argument("--gt", required=True)
        if name == "eval":
            sp.add_argument("--min-cap", type=float)
            sp.add_argument("--max-cap", type=float)
    sp = sub.add_parser("train-toy", parents=[common], help="fit the per-pixel toy model to a depth map")
    sp.add_argument("--input")
    sp.add_argument("--steps", type=int)
    sp = sub.add_parser("verify-arch", parents=[common], help="propagate shapes through the network spec")
    sp.add_argument("--arch")
    return p


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(args) -> int:
    cfg, base = load_config(args.config)
    cfg = copy.deepcopy(cfg)
    for s in args.set:
        apply_override(cfg, s)
    if getattr(args, "min_cap", None) is not None:
        cfg.setdefault("cap", {})["min_cap"] = args.min_cap
    if getattr(args, "max_cap", None) is not None:
        cfg.setdefault("cap", {})["max_cap"] = args.max_cap
    if getattr(args, "steps", None) is not None:
        cfg.setdefault("toy", {})["steps"] = args.steps
    st = Settings(cfg, base, args.seed, args.out)
    cmd = args.command
    if cmd == "simulate":
        stage_simulate(st)
    elif cmd == "project":
        stage_project(st, source=args.input)
    elif cmd == "occlude":
        stage_occlude(st, source=args.input, debug_layers=args.debug_layers)
    elif cmd == "depthmap":
        stage_depthmap(st, source=args.input)
    elif cmd == "pipeline":
        frame = stage_simulate(st)
        kept = stage_occlude(st, stage_project(st, frame), debug_layers=args.debug_layers)
        stage_depthmap(st, kept)
    elif cmd == "eval":
        stage_eval(st, args.pred, args.gt)
    elif cmd == "loss":
        stage_loss(args.pred, args.gt)
    elif cmd == "train-toy":
        stage_train_toy(st, source=args.input)
    elif cmd == "verify-arch":
        return 0 if stage_verify_arch(st, args.arch).passed else 1
    return 0


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        print(f"fisheyedepth: config error: {e}", file=sys.stderr)
        return 1
    except IOFailure as e:
        print(f"fisheyedepth: I/O error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
