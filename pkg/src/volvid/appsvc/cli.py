"""Command line front end.

Subcommands: train, render, build-occ, bench, serve, export. Every command
echoes its flags into a JSON sidecar next to its outputs so runs can be
reproduced later. Render goes through the same RenderService as the HTTP
endpoint, so file bytes match service bytes for equal requests.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .. import backend, occupancy
from ..config import NAMED_CONFIGS, ModelConfig
from ..model import VolvidModel
from ..renderer import psnr
from ..scenekit import load_dataset, load_checkpoint, build_model, save_checkpoint
from ..trainer import TrainConfig, train
from .service import FrameNotFound, RenderRequest, RenderService, RequestError, make_server


def _echo_args(args, path):
    rec = {k: v for k, v in vars(args).items() if k != "func"}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(rec, f, indent=1, sort_keys=True)
        f.write("\n")


def _load_service(args) -> RenderService:
    ckpt = load_checkpoint(args.ckpt)
    model = build_model(ckpt)
    with open(args.ckpt, "rb") as f:
        digest = hashlib.sha1(f.read()).hexdigest()[:16]
    return RenderService(
        model=model,
        model_id=digest,
        max_resolution=getattr(args, "max_resolution", 1024),
        occ_dir=getattr(args, "occ", "") or "",
    )


def _config_from_arg(name_or_path: str) -> ModelConfig:
    if name_or_path in NAMED_CONFIGS:
        return NAMED_CONFIGS[name_or_path]()
    if os.path.exists(name_or_path):
        with open(name_or_path) as f:
            return ModelConfig.from_json(f.read())
    raise SystemExit(
        f"unknown config {name_or_path!r}: expected one of "
        f"{sorted(NAMED_CONFIGS)} or a JSON file path"
    )


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = _config_from_arg(args.config)
    model = VolvidModel(cfg, ds.bounds, ds.n_frames, seed=args.seed)
    tcfg = TrainConfig(
        epochs=args.epochs,
        steps_per_epoch=args.steps_per_epoch,
        batch_images=args.batch_images,
        rays_per_image=args.rays,
        seed=args.seed,
        lr_base=args.lr_base,
        lr_hash=args.lr_hash,
        out_dir=args.out,
        checkpoint_every=args.checkpoint_every,
    )
    _echo_args(args, os.path.join(args.out, "train_meta.json"))
    t0 = time.perf_counter()
    history = train(ds, model, tcfg)
    wall = time.perf_counter() - t0
    last = history[-1]
    print(f"trained {len(history)} steps in {wall:.1f}s, "
          f"final total={last.total:.5f} l_c={last.l_c:.5f}")
    print(f"checkpoint: {os.path.join(args.out, 'model.ckpt')}")
    return 0


def _add_pose_flags(p):
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--fov", type=float, default=45.0, help="vertical fov, degrees")
    p.add_argument("--azimuth", type=float, default=0.0)
    p.add_argument("--elevation", type=float, default=15.0)
    p.add_argument("--radius", type=float, default=0.0,
                   help="orbit radius; 0 picks the default from model bounds")
    p.add_argument("--position", type=str, default=None, help="x,y,z camera position")
    p.add_argument("--look-at", dest="look_at", type=str, default=None, help="x,y,z target")
    p.add_argument("--up", type=str, default=None, help="x,y,z up vector")
    p.add_argument("--no-ess", action="store_true", help="disable empty-space skipping")
    p.add_argument("--single-stage", action="store_true",
                   help="evaluate color at every sample instead of two-stage")


def _request_from_args(args) -> RenderRequest:
    d = {
        "frame": args.frame,
        "width": args.width,
        "height": args.height,
        "fov_deg": args.fov,
        "azimuth": args.azimuth,
        "elevation": args.elevation,
        "radius": args.radius,
        "use_ess": not args.no_ess,
        "two_stage": not args.single_stage,
    }
    if args.position is not None:
        d["position"] = args.position
        if args.look_at is not None:
            d["look_at"] = args.look_at
        if args.up is not None:
            d["up"] = args.up
    return RenderRequest.from_dict(d)


def cmd_render(args) -> int:
    svc = _load_service(args)
    try:
        req = _request_from_args(args)
        png, millis = svc.render_png(req)
    except (FrameNotFound, RequestError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "wb") as f:
        f.write(png)
    _echo_args(args, args.out + ".json")
    print(f"wrote {args.out} ({len(png)} bytes) in {millis:.1f} ms")
    return 0


def cmd_build_occ(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = build_model(ckpt)
    frames = range(model.n_frames) if args.frames == "all" else \
        [int(x) for x in args.frames.split(",")]
    os.makedirs(args.out, exist_ok=True)
    tau = args.tau1 if args.tau1 is not None else model.cfg.tau1
    if args.conservative:
        tau = tau / 2.0
    for f in frames:
        if not 0 <= f < model.n_frames:
            print(f"error: frame {f} out of range [0, {model.n_frames})", file=sys.stderr)
            return 1
        vol = occupancy.build(model, f, tau1=tau)
        path = os.path.join(args.out, f"frame{f:04d}.occ")
        occupancy.save(vol, path)
        print(f"{path}: {vol.occupied_count()}/{np.prod(vol.resolution)} voxels occupied")
    _echo_args(args, os.path.join(args.out, "build_occ_meta.json"))
    return 0


def bench_backends(n_points: int = 200_000, repeats: int = 3, seed: int = 0) -> dict:
    """Time the compiled kernels against the pure numpy twins."""
    from .. import _kernels_py
    rng = np.random.default_rng(seed)
    uvt = rng.random((n_points, 3), dtype=np.float32)
    res = np.unique(np.geomspace(16, 512, 19).astype(np.int64))
    res = np.stack([res[:12]] * 3, axis=1)
    table = rng.standard_normal((res.shape[0] * 4096, 2), dtype=np.float32)
    n_rays = 4096
    counts = rng.integers(8, 64, n_rays)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    sig = rng.random(offsets[-1]).astype(np.float32)
    dlt = np.full(offsets[-1], 0.01, dtype=np.float32)

    impls = {"python": _kernels_py}
    if "native" in backend.available_backends():
        from .. import _native
        impls["native"] = _native

    out = {"n_points": n_points, "n_rays": n_rays, "repeats": repeats, "kernels": {}}
    for kname, call in {
        "hash_gather": lambda m: m.hash_gather_fwd(table, uvt, res, 4096),
        "composite_scan": lambda m: m.composite_scan(sig, dlt, offsets),
    }.items():
        out["kernels"][kname] = {}
        for bname, mod in impls.items():
            call(mod)  # warm up
            best = min(_timed(call, mod) for _ in range(repeats))
            out["kernels"][kname][bname] = best * 1000.0
        if "native" in impls:
            k = out["kernels"][kname]
            k["speedup"] = k["python"] / max(k["native"], 1e-9)
    return out


def _timed(fn, arg):
    t0 = time.perf_counter()
    fn(arg)
    return time.perf_counter() - t0


def cmd_bench(args) -> int:
    report = {"argv": {k: v for k, v in vars(args).items() if k != "func"},
              "backend": backend.backend_name()}
    if args.ckpt:
        svc = _load_service(args)
        frames = [int(x) for x in args.frames.split(",")]
        per_frame = []
        for f in frames:
            if not 0 <= f < svc.model.n_frames:
                print(f"error: frame {f} out of range [0, {svc.model.n_frames})",
                      file=sys.stderr)
                return 1
            row = {"frame": f}
            for label, use_ess in (("ess_on", True), ("ess_off", False)):
                req = RenderRequest.from_dict(
                    {"frame": f, "width": args.width, "height": args.height,
                     "use_ess": use_ess})
                svc.render_png(req)  # warm caches
                t0 = time.perf_counter()
                for _ in range(args.repeats):
                    png, _ = svc.render_png(req)
                row[label] = (time.perf_counter() - t0) * 1000.0 / args.repeats
            row["ess_speedup"] = row["ess_off"] / max(row["ess_on"], 1e-9)
            per_frame.append(row)
            print(f"frame {f}: {row['ess_on']:.1f} ms with skipping, "
                  f"{row['ess_off']:.1f} ms without ({row['ess_speedup']:.2f}x)")
        report["render"] = per_frame
    if args.kernels:
        report["backends"] = bench_backends(repeats=args.repeats)
        for kname, row in report["backends"]["kernels"].items():
            line = ", ".join(f"{b}: {v:.2f} ms" for b, v in row.items() if b != "speedup")
            sp = f" ({row['speedup']:.1f}x)" if "speedup" in row else ""
            print(f"{kname}: {line}{sp}")
    if args.report:
        os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
        with open(args.report, "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
            f.write("\n")
        print(f"wrote {args.report}")
    return 0


def cmd_serve(args) -> int:
    svc = _load_service(args)
    addr = os.environ.get("VOLVID_ADDR", args.addr)
    host, _, port = addr.rpartition(":")
    server = make_server(svc, host or "127.0.0.1", int(port))
    print(f"serving model {svc.model_id} on http://{server.server_address[0]}"
          f":{server.server_address[1]} (frames: {svc.model.n_frames})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_export(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = build_model(ckpt)
    os.makedirs(args.out, exist_ok=True)
    if args.what == "latents":
        z = model.latents.z.data
        np.save(os.path.join(args.out, "latents.npy"), z)
        print(f"wrote latents.npy {z.shape}")
    elif args.what == "occ":
        for f in range(model.n_frames):
            vol = occupancy.build(model, f, tau1=model.cfg.tau1)
            occupancy.save(vol, os.path.join(args.out, f"frame{f:04d}.occ"))
        print(f"wrote {model.n_frames} occupancy volumes")
    elif args.what == "maps":
        f = args.frame
        if not 0 <= f < model.n_frames:
            print(f"error: frame {f} out of range [0, {model.n_frames})", file=sys.stderr)
            return 1
        mset = model.decode_frame(f)
        arrs = {"triplane": mset.triplane.planes.data}
        for tag in model.cfg.planes:
            arrs[f"density_{tag}"] = mset.density[tag].grid.data
            arrs[f"color_{tag}"] = mset.color[tag].grid.data
        np.savez(os.path.join(args.out, f"maps_frame{f:04d}.npz"), **arrs)
        print(f"wrote maps_frame{f:04d}.npz: " +
              ", ".join(f"{k} {v.shape}" for k, v in arrs.items()))
    _echo_args(args, os.path.join(args.out, "export_meta.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="volvid",
                                 description="volumetric video with decoded MLP maps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model to a dataset")
    p.add_argument("--data", required=True, help="dataset directory with manifest.json")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default="default",
                   help="named config (default, shrunk) or JSON file")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--steps-per-epoch", type=int, default=50)
    p.add_argument("--batch-images", type=int, default=8)
    p.add_argument("--rays", type=int, default=512, help="rays per image per step")
    p.add_argument("--lr-base", type=float, default=5e-4)
    p.add_argument("--lr-hash", type=float, default=5e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="epochs between checkpoints (0: final only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render one frame to a PNG")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--occ", default=None, help="directory of prebuilt .occ volumes")
    p.add_argument("--max-resolution", dest="max_resolution", type=int, default=1024)
    _add_pose_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("build-occ", help="bake occupancy volumes")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", default="all", help="comma list or 'all'")
    p.add_argument("--tau1", type=float, default=None)
    p.add_argument("--conservative", action="store_true", help="halve the threshold")
    p.set_defaults(func=cmd_build_occ)

    p = sub.add_parser("bench", help="time rendering and kernel backends")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--frames", default="0")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--kernels", action="store_true",
                   help="also compare compiled vs numpy kernels")
    p.add_argument("--report", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="start the HTTP render service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--addr", default="127.0.0.1:8694",
                   help="host:port (env VOLVID_ADDR overrides)")
    p.add_argument("--occ", default=None, help="directory of prebuilt .occ volumes")
    p.add_argument("--max-resolution", dest="max_resolution", type=int, default=1024)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="dump model internals for inspection")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--what", choices=("latents", "occ", "maps"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame", type=int, default=0, help="frame for --what maps")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
