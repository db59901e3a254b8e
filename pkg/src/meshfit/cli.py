"""Command line entry point: ``meshfit <subcommand> ...``.

Every subcommand writes OBJ meshes and/or CSV files with a header row.
Any library error exits with status 1, bad arguments with status 2.
"""
import argparse
import logging
import os
import sys
from dataclasses import replace

from .errors import MeshFitError

log = logging.getLogger("meshfit")


def _int_list(text):
    """'1-100', '5' or '1,2,10' -> list of ints."""
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _load_mesh(spec):
    """Mesh from an OBJ path, or a built-in primitive written as ``name`` or ``name:arg``."""
    from .io import load_obj
    from .mesh import primitive

    if os.path.exists(spec) or spec.lower().endswith(".obj"):
        return load_obj(spec)
    name, _, arg = spec.partition(":")
    kwargs = {"subdiv": int(arg)} if arg else {}
    return primitive(name, **kwargs)


def cmd_fit(args):
    from .driver import FitConfig, default_init, fit_mesh
    from .graphnet import load_encoder
    from .io import save_obj, write_csv
    from .losses import LossWeights
    from .refine import SplitConfig

    init = _load_mesh(args.init) if args.init else default_init()
    target = _load_mesh(args.target)
    cfg = FitConfig()
    cfg = replace(
        cfg,
        stages=args.stages if args.stages is not None else cfg.stages,
        iters_per_stage=args.iters if args.iters is not None else cfg.iters_per_stage,
        lr=args.lr if args.lr is not None else cfg.lr,
        split=SplitConfig(args.alpha) if args.alpha is not None else cfg.split,
        weights=LossWeights.parse(args.gammas) if args.gammas else cfg.weights,
        n_samples=args.samples if args.samples is not None else cfg.n_samples,
        seed=args.seed,
        surface_mode=args.mode,
        switch_iter=args.switch_iter if args.switch_iter is not None else cfg.switch_iter,
        split_mode=args.split_mode,
    )
    encoder = load_encoder(args.encoder) if args.encoder else None
    trace = fit_mesh(init, target, cfg, encoder=encoder)
    os.makedirs(args.out_dir, exist_ok=True)
    save_obj(trace.mesh, os.path.join(args.out_dir, "final.obj"))
    trace.to_csv(os.path.join(args.out_dir, "trace.csv"))
    rows = [(k, j, repr(c), s) for k, rep in enumerate(trace.split_reports) for j, c, s in rep.rows()]
    write_csv(os.path.join(args.out_dir, "splits.csv"), ["stage", "face_idx", "curvature", "split"], rows)
    write_csv(os.path.join(args.out_dir, "summary.csv"), ["metric", "value"], [
        ("f1", repr(trace.final_f1)),
        ("n_vertices", trace.mesh.n_vertices),
        ("n_faces", trace.mesh.n_faces),
        ("final_loss", repr(trace.rows[-1][3])),
    ])
    print(f"F1 {trace.final_f1:.2f}  vertices {trace.mesh.n_vertices}  faces {trace.mesh.n_faces}")


def cmd_toy2d(args):
    from .driver import toy_square_triangle, write_toy_csv

    res = toy_square_triangle(args.loss, _int_list(args.points), iters=args.iters,
                              seeds=range(args.seeds))
    write_toy_csv(args.out, {args.loss: res})
    for n, m in zip(res.n_points, res.mean_iou()):
        print(f"{args.loss} n={n} mean IoU {m:.4f}")


def cmd_split(args):
    from .io import load_obj, save_obj
    from .refine import SplitConfig, split_adaptive, split_uniform

    mesh = load_obj(args.input)
    if args.uniform:
        out, report = split_uniform(mesh)
    else:
        out, report = split_adaptive(mesh, SplitConfig(args.alpha))
    save_obj(out, args.out)
    if args.report:
        report.to_csv(args.report)
    print(f"split {report.n_split} faces: {report.vertices_before}->{report.vertices_after} vertices, "
          f"{report.faces_before}->{report.faces_after} faces")


def cmd_metrics(args):
    from .metrics import MetricConfig, mesh_f1, polygon_iou_2d, write_metric_csv

    pred, target = _load_mesh(args.pred), _load_mesh(args.target)
    cfg = MetricConfig(tau=args.tau, n_eval=args.samples)
    rows = [("f1", repr(mesh_f1(pred, target, cfg, args.seed)), f"tau={args.tau};samples={args.samples}")]
    if args.iou:
        rows.append(("iou2d", repr(polygon_iou_2d(pred, target, cfg.raster_resolution)),
                     f"raster={cfg.raster_resolution}"))
    for name, value, _ in rows:
        print(f"{name} {float(value):.4f}")
    if args.out:
        write_metric_csv(args.out, rows)


def cmd_gradcheck(args):
    from .gradsuite import GRAD_LOSSES, gradient_trials
    from .io import write_csv

    kinds = GRAD_LOSSES if args.loss == "all" else [args.loss]
    rows, worst = [], 0.0
    for kind in kinds:
        reports, redrawn = gradient_trials(kind, args.trials, args.seed)
        errs = [r.max_rel_error for r in reports]
        worst = max(worst, max(errs))
        rows.extend((kind, i, repr(e)) for i, e in enumerate(errs))
        print(f"{kind}: {len(reports)} trials, max relative error {max(errs):.2e}, {redrawn} redrawn")
    if args.out:
        write_csv(args.out, ["loss", "trial", "max_rel_error"], rows)
    if worst >= args.tolerance:
        raise MeshFitError(f"gradient check failed: max relative error {worst:.2e} >= {args.tolerance}")


def cmd_train_encoder(args):
    from .graphnet import labeled_families, save_encoder, train_toy_encoder

    train = labeled_families(args.per_family, args.seed)
    held = labeled_families(args.per_family, args.seed + 1000)
    enc, metrics = train_toy_encoder(train, steps=args.steps, lr=args.lr, seed=args.seed, held_out=held)
    save_encoder(enc, args.out)
    for k, v in metrics.items():
        print(f"{k} {v:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="meshfit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="deform an initial mesh onto a target in deform/split stages")
    f.add_argument("--init", help="OBJ path or primitive (default: ico_sphere:2 of radius 0.5)")
    f.add_argument("--target", required=True, help="OBJ path or primitive such as cube")
    f.add_argument("--stages", type=int)
    f.add_argument("--iters", type=int, help="optimizer steps per stage")
    f.add_argument("--lr", type=float)
    f.add_argument("--alpha", type=float, help="split threshold in degrees")
    f.add_argument("--gammas", help="latent,surface,edge,laplacian weights")
    f.add_argument("--samples", type=int)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--mode", choices=["schedule", "ptp", "pts", "vtp"], default="schedule",
                   help="surface term; 'schedule' uses ptp before --switch-iter and pts after")
    f.add_argument("--switch-iter", type=int)
    f.add_argument("--split-mode", choices=["adaptive", "uniform", "none"], default="adaptive")
    f.add_argument("--encoder", help="encoder .npz from train-encoder")
    f.add_argument("--out-dir", default="fit_out")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("toy2d", help="2D square-to-triangle loss study")
    t.add_argument("--loss", choices=["vtp", "ptp", "pts"], required=True)
    t.add_argument("--points", default="1-100", help="sample counts, e.g. 1-100 or 10,50")
    t.add_argument("--iters", type=int, default=2000)
    t.add_argument("--seeds", type=int, default=20, help="number of seeds 0..k-1")
    t.add_argument("--out", default="toy2d.csv")
    t.set_defaults(func=cmd_toy2d)

    s = sub.add_parser("split", help="split high-curvature faces of an OBJ mesh")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--alpha", type=float, default=70.0)
    s.add_argument("--uniform", action="store_true", help="split every face")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_split)

    m = sub.add_parser("metrics", help="F1 between two meshes")
    m.add_argument("--pred", required=True)
    m.add_argument("--target", required=True)
    m.add_argument("--tau", type=float, default=1e-4)
    m.add_argument("--samples", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--iou", action="store_true", help="also report raster IoU of planar meshes")
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    g = sub.add_parser("gradcheck", help="finite-difference check of loss gradients")
    g.add_argument("--loss", choices=["vtp", "ptp", "pts", "edge", "laplacian", "latent", "all"],
                   default="all")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gradcheck)

    e = sub.add_parser("train-encoder", help="train the mesh encoder on cube/sphere families")
    e.add_argument("--out", required=True)
    e.add_argument("--steps", type=int, default=500)
    e.add_argument("--lr", type=float, default=1e-2)
    e.add_argument("--per-family", type=int, default=8)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_train_encoder)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (MeshFitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
