"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .bodymodel.dataset import DatasetConfig, load_dataset, make_dataset, random_outfits, save_dataset
from .bodymodel.sampling import body_point_cloud
from .bodymodel.skinning import pose_body
from .bodymodel.template import default_template
from .draping import (FitConfig, FitError, ModelConfig, DrapingModel, TrainConfig, deform,
                      fit_outfit_code, glo_train, init_codes, load_checkpoint, load_model, read_codes,
                      save_checkpoint, save_model, write_codes)
from .io.textfmt import load_body, load_camera
from .metrics.chamfer import DegenerateFitError, chamfer3
from .metrics.emd import emd_approx
from .numcore import parameter

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

EPILOG = """\
Checkpoints: `train` writes OUT/model_epochNNNN.pcm every train.checkpoint_every
epochs (one epoch = one pass over the samples, NNNN zero-padded to 4 digits),
then OUT/model.pcm, OUT/codes.txt and OUT/train_log.tsv.

Seeds: --seed, else the GC_SEED environment variable, else 0.
Exit codes: 0 ok, 1 usage, 2 I/O or parse error, 3 numeric failure.
"""

log = logging.getLogger("pointcloth")


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GC_SEED")
    if env is None or not env.strip():
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GC_SEED must be an integer, got {env!r}") from None


def _config(args) -> pio.Config:
    return pio.load_config(args.config) if args.config else pio.Config()


def _model_config(cfg) -> ModelConfig:
    return ModelConfig(cfg["model.code_dim"], cfg["model.encoder_width"], cfg["model.encoder_layers"],
                       cfg.int_list("model.trunk_widths"), cfg.int_list("model.head_widths"))


def _code_for(args, extra):
    """Code vector of outfit ``args.outfit`` from --codes or the checkpoint's code table."""
    if args.codes:
        ids, codes = read_codes(args.codes)
    elif "codes" in extra:
        codes = extra["codes"]
        ids = [int(i) for i in extra.get("code_ids", np.arange(len(codes)))]
    else:
        raise UsageError("no --codes given and the checkpoint carries no code table")
    ids = list(ids)
    if args.outfit not in ids:
        raise UsageError(f"outfit {args.outfit} not in code table (ids {ids[:10]}...)")
    return np.asarray(codes[ids.index(args.outfit)], dtype=np.float64)


def _drape(args, cfg):
    model, _, extra = load_model(args.checkpoint)
    z = _code_for(args, extra)
    body = pose_body(default_template(), load_body(args.body))
    n = args.points or cfg["render.points"]
    with model.frozen():
        pts = deform(model, body_point_cloud(body), z, seed=_seed(args), n_points=n).data
    return pts, body


# ------------------------------------------------------------------ commands

def cmd_synth(args, cfg):
    seed = _seed(args) if args.seed is not None or "GC_SEED" in os.environ else cfg["data.seed"]
    n_out = args.outfits or cfg["data.outfits"]
    dc = DatasetConfig(random_outfits(n_out, seed), n_frames=args.frames or cfg["data.frames"],
                       stride=args.stride or cfg["data.stride"], key_every=cfg["data.key_every"],
                       n_points=args.points or cfg["data.points"], seed=seed)
    ts = make_dataset(dc, jobs=args.jobs)
    save_dataset(ts, args.out)
    print(f"wrote {len(ts)} frames of {n_out} outfits to {args.out}")


def cmd_train(args, cfg):
    seed = _seed(args)
    data = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = DrapingModel(_model_config(cfg), seed=seed)
    ids = [oid for oid, _ in data.outfits]
    codes = parameter(init_codes(len(ids), model.config.code_dim, seed), "codes")
    tc = TrainConfig(steps=args.steps or cfg["train.steps"], batch=cfg["train.batch"],
                     lr_code=cfg["train.lr_code"], lr_net=cfg["train.lr_net"],
                     sample_points=cfg["train.sample_points"], seed=seed,
                     checkpoint_every=cfg["train.checkpoint_every"])
    id_block = ("code_ids", np.asarray(ids, dtype=np.float64))

    def checkpoint(epoch, result):
        save_model(out / f"model_epoch{epoch:04d}.pcm", model, [("codes", codes.data), id_block],
                   {"epoch": epoch})

    result = glo_train(model, codes, data, tc, callback=checkpoint)
    save_model(out / "model.pcm", model, [("codes", codes.data), id_block],
               {"epoch": len(result.epoch_losses), "steps": tc.steps})
    write_codes(out / "codes.txt", ids, codes.data)
    rows = ["epoch\tmean_loss"] + [f"{e + 1}\t{v!r}" for e, v in enumerate(result.epoch_losses)]
    (out / "train_log.tsv").write_text("\n".join(rows) + "\n")
    print(f"trained {tc.steps} steps; final epoch loss {result.epoch_losses[-1]:.6f}")


def cmd_fit(args, cfg):
    model, _, _ = load_model(args.checkpoint)
    body = pose_body(default_template(), load_body(args.body))
    views = [(pio.load_mask(m), load_camera(c)) for m, c in args.view]
    for k, (mask, cam) in enumerate(views):
        if mask.shape != (cam.height, cam.width):
            raise ValueError(f"view {k}: mask is {mask.shape[1]}x{mask.shape[0]}, camera is "
                             f"{cam.width}x{cam.height}")
    fc = FitConfig(T=args.T or cfg["fit.T"], warmup_steps=cfg["fit.warmup_steps"],
                   refine_min=cfg["fit.refine_min"], refine_max=cfg["fit.refine_max"],
                   tol=cfg["fit.tol"], window=cfg["fit.window"], lr=cfg["fit.lr"],
                   points=cfg["fit.points"], init_radius=cfg["fit.init_radius"], seed=_seed(args))
    res = fit_outfit_code(model, body, views, fc, jobs=args.jobs)
    write_codes(args.out, [args.outfit], res.code[None])
    print(f"fitted code written to {args.out}; silhouette loss {res.loss:.6g}"
          + (f" ({res.failed} of {fc.T} hypotheses dropped)" if res.failed else ""))


def cmd_drape(args, cfg):
    pts, _ = _drape(args, cfg)
    pio.save_ply(args.out, pts)
    print(f"wrote {len(pts)} points to {args.out}")


def _load_appearance(path):
    from .pointrender.head import RendererHead

    meta, blocks = load_checkpoint(path)
    if meta.get("kind") != "appearance":
        raise pio.ConfigError(f"{path}: not an appearance checkpoint")
    head = RendererHead(int(meta["p"]))
    head.load_blocks(blocks)
    return blocks["descriptors"], head


def cmd_render(args, cfg):
    from .pointrender.appearance import render_plan
    from .pointrender.raster import body_depth_map, plan_splats

    cam = load_camera(args.camera)
    if args.appearance:
        desc, head = _load_appearance(args.appearance)
        if args.points and args.points != len(desc):
            raise UsageError(f"--points {args.points} disagrees with {len(desc)} stored descriptors")
        args.points = len(desc)
    pts, body = _drape(args, cfg)
    plan = plan_splats(pts, body, cam, body_depth_map(body, cam))
    if args.appearance:
        out = render_plan(plan, desc, head).data
        rgb = np.clip(out[..., :3], 0.0, 1.0)
        mask = out[..., 3] > 0.5
    else:
        mask = plan.coverage > 0
        rgb = np.repeat(mask[..., None].astype(np.float64), 3, axis=2)
    pio.save_ppm(args.out_rgb, rgb)
    pio.save_mask(args.out_mask, mask)
    print(f"rendered {cam.width}x{cam.height}: {int(mask.sum())} foreground pixels")


def _read_frames(path):
    from .pointrender.appearance import AppearanceFrame

    path = Path(path)
    frames = []
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise pio.ConfigError(f"{path}:{n}: expected 5 tab-separated paths "
                                  f"(rgb, mask, camera, points, body), got {len(cols)}")
        rgb, mask, cam, pts, body = (path.parent / c for c in cols)
        posed = pose_body(default_template(), load_body(body))
        frames.append(AppearanceFrame(pio.load_ppm(rgb) / 255.0, pio.load_mask(mask), load_camera(cam),
                                      pio.load_ply(pts).vertices, posed))
    if not frames:
        raise pio.ConfigError(f"{path}: no frames listed")
    return frames


def cmd_appearance(args, cfg):
    from .pointrender.appearance import AppearanceConfig, fit_appearance

    frames = _read_frames(args.frames)
    ac = AppearanceConfig(steps=args.steps or cfg["appearance.steps"],
                          lr_descriptors=cfg["appearance.lr_descriptors"],
                          lr_head=cfg["appearance.lr_head"], seed=_seed(args), p=cfg["appearance.p"])
    res = fit_appearance(frames, ac)
    save_checkpoint(args.out, [("descriptors", res.descriptors.data)] + res.head.named_blocks(),
                    {"kind": "appearance", "p": ac.p, "points": len(frames[0].points)})
    print(f"appearance fitted on {len(frames)} frames; final loss {res.log[-1]:.6f}")


def cmd_eval(args, cfg):
    a = pio.load_ply(args.a).vertices
    b = pio.load_ply(args.b).vertices
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot compare an empty cloud")
    rows = [("chamfer3", chamfer3(a, b))]
    n = args.emd_points or cfg["eval.emd_points"]
    m = min(len(a), len(b), n)
    rng = np.random.default_rng(_seed(args))
    if len(a) == len(b):
        # same indices on both sides so identical inputs stay identical
        idx = rng.choice(len(a), m, replace=False) if m < len(a) else np.arange(len(a))
        sa, sb = a[idx], b[idx]
    else:
        sa = a[rng.choice(len(a), m, replace=False)]
        sb = b[rng.choice(len(b), m, replace=False)]
    rows.append((f"emd@{m}", float(emd_approx(sa, sb).data)))
    print("metric\tvalue")
    for name, v in rows:
        print(f"{name}\t{v:.8g}")


def cmd_gradcheck(args, cfg):
    from .gradsuite import run_suite

    results = run_suite(_seed(args), args.tolerance)
    print("check\tmax_rel_error\tresult")
    for name, rep in results:
        print(f"{name}\t{rep.max_error:.3e}\t{'ok' if rep.passed else 'FAIL'}")
    bad = [n for n, r in results if not r.passed]
    if bad:
        raise NumericFailure(f"{len(bad)} gradient checks failed: {', '.join(bad)}")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: $GC_SEED or 0)")
    common.add_argument("--jobs", type=int, default=1, help="maximum worker threads")
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="pointcloth", description="Point-cloud garment draping, fitting and rendering.",
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_, epilog=EPILOG,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth", cmd_synth, "synthesize a training set (manifest + PLY clouds)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--outfits", type=int, help="number of outfits (data.outfits)")
    sp.add_argument("--frames", type=int, help="frames per sequence before striding (data.frames)")
    sp.add_argument("--stride", type=int, help="keep every N-th frame (data.stride)")
    sp.add_argument("--points", type=int, help="points per cloud (data.points)")

    sp = add("train", cmd_train, "jointly train the draping network and outfit codes")
    sp.add_argument("--data", required=True, help="dataset directory written by synth")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--steps", type=int, help="optimizer steps (train.steps)")

    sp = add("fit", cmd_fit, "estimate an outfit code from silhouettes")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--body", required=True, help="body parameter file")
    sp.add_argument("--view", nargs=2, action="append", required=True, metavar=("MASK", "CAMERA"),
                    help="P5 mask and camera file; repeat for more views")
    sp.add_argument("--out", required=True, help="code table to write")
    sp.add_argument("--outfit", type=int, default=0, help="id written next to the code")
    sp.add_argument("--T", type=int, help="number of random starts (fit.T)")

    for name, fn, help_ in (("drape", cmd_drape, "drape an outfit on a body and write a PLY cloud"),
                            ("render", cmd_render, "render a draped outfit to P6 colour + P5 mask")):
        sp = add(name, fn, help_)
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--codes", help="code table (default: the table stored in the checkpoint)")
        sp.add_argument("--outfit", type=int, default=0, help="outfit id in the code table")
        sp.add_argument("--body", required=True, help="body parameter file")
        sp.add_argument("--points", type=int, help="garment points (render.points)")
        if name == "drape":
            sp.add_argument("--out", required=True, help="output PLY")
        else:
            sp.add_argument("--camera", required=True)
            sp.add_argument("--out-rgb", required=True)
            sp.add_argument("--out-mask", required=True)
            sp.add_argument("--appearance", help="appearance checkpoint; without it a silhouette is drawn")

    sp = add("appearance", cmd_appearance, "fit point descriptors and the renderer head to video frames")
    sp.add_argument("--frames", required=True, help="frame list (TSV: rgb mask camera points body)")
    sp.add_argument("--out", required=True, help="appearance checkpoint to write")
    sp.add_argument("--steps", type=int, help="optimizer steps (appearance.steps)")

    sp = add("eval", cmd_eval, "compare two point clouds (Chamfer and EMD)")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--emd-points", type=int, help="subsample size for EMD (eval.emd_points)")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of every differentiable op")
    sp.add_argument("--tolerance", type=float, default=1e-5)
    return p


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
        cfg = _config(args)
        args.func(args, cfg)
        return EXIT_OK
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:          # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    except (NumericFailure, FloatingPointError, FitError, DegenerateFitError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
