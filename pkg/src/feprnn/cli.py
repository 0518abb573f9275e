"""Command-line front end: ``feprnn <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 file error.
"""

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io
from .errors import ContractError, DomainError, EvaluationError, SolverError
from .macrosolver import (
    build_mesh,
    field_statistics,
    initial_compliance,
    oblique_angle,
    run,
)
from .micromodel import Rve, RveMesh, VoigtMixture, generate_dataset
from .pathgen import sample_paths
from .prnn import (
    Prnn,
    PrnnLayout,
    PrnnParams,
    error_metrics,
    mode_sweep,
    train,
    transfer_properties,
)
from .singlescale import SinglePointProblem, solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
log = logging.getLogger("feprnn")


class Context:
    """Loaded config plus its provenance stamp."""

    def __init__(self, args):
        self.path = Path(args.config)
        self.cfg = cfgmod.apply_overrides(cfgmod.load(self.path), args.set)
        self.sha = io.config_hash(self.cfg)
        self.seed = getattr(args, "seed", None)

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.path.parent / p


# ---------------------------------------------------------------- builders


def make_generator(cfg):
    g = cfgmod.generator_spec(cfg)
    fp, mp = cfgmod.fiber(cfg), cfgmod.matrix(cfg)
    if g.kind == "voigt":
        return VoigtMixture([(fp, g.fiber_fraction), (mp, 1.0 - g.fiber_fraction)])
    return Rve(RveMesh.build(g.rve_divisions, g.fiber_fraction), fp, mp)


def make_model(ctx):
    spec = cfgmod.model_spec(ctx.cfg)
    if spec.kind == "file":
        params, layout, _ = io.load_model(ctx.resolve(spec.file))
        return Prnn(params, layout)
    fp, mp = cfgmod.fiber(ctx.cfg), cfgmod.matrix(ctx.cfg)
    w = cfgmod.mixture_weights(ctx.cfg)
    if spec.kind == "voigt-oracle":
        return VoigtMixture([(fp, w[0]), (mp, w[1])])
    return Prnn(PrnnParams.voigt_equivalent(w), PrnnLayout(2, 1, fp, mp))


def coupon_for(ctx, model, **changes):
    spec = cfgmod.coupon(ctx.cfg)
    opts = cfgmod.run_options(ctx.cfg)
    spec = dataclasses.replace(spec, **changes)
    if spec.tabs == "oblique" and opts.oblique_auto:
        beta = oblique_angle(initial_compliance(model, spec.theta0))
        spec = dataclasses.replace(spec, beta=beta)
    return spec


def _require_seed(args):
    if args.seed is None:
        raise cfgmod.ConfigError(f"{args.command} is stochastic and needs --seed")


# ---------------------------------------------------------------- commands


def cmd_gen_data(args):
    _require_seed(args)
    ctx = Context(args)
    gen = make_generator(ctx.cfg)
    ps = sample_paths(cfgmod.paths(ctx.cfg, args.seed))
    ds = generate_dataset(gen, ps, seed=args.seed)
    io.save_dataset(args.out, ds, ctx.sha)
    log.info("wrote %d samples (%d skipped) to %s", len(ds), ds.skipped, args.out)
    return EXIT_OK


def cmd_train(args):
    _require_seed(args)
    ctx = Context(args)
    ds, _ = io.load_dataset(args.data)
    n = cfgmod.build(cfgmod.ModelSpec, ctx.cfg, "model", required=False).n_points
    layout = PrnnLayout.from_split(n, cfgmod.fiber(ctx.cfg), cfgmod.matrix(ctx.cfg))
    params, report = train(ds, layout, cfgmod.train_spec(ctx.cfg, args.seed))
    meta = {
        "config_sha256": ctx.sha,
        "seed": args.seed,
        "dataset_properties_hash": ds.properties_hash,
        "best_epoch": report.best_epoch,
        "best_val": report.best_val,
        "epochs_run": len(report.train_loss),
    }
    io.save_model(args.out, params, layout, meta)
    log.info("best validation loss %.3e at epoch %d", report.best_val, report.best_epoch)
    return EXIT_OK


def cmd_transfer(args):
    ctx = Context(args)
    params, layout, meta = io.load_model(args.model)
    fp = cfgmod.fiber(ctx.cfg) if "fiber" in ctx.cfg else None
    mp = cfgmod.matrix(ctx.cfg) if "matrix" in ctx.cfg else None
    new = transfer_properties(params, layout, fp, mp, args.modes)
    io.save_model(args.out, params, new, {**meta, "transfer_config_sha256": ctx.sha})
    return EXIT_OK


def _write_run(out, curve, ctx):
    out.mkdir(parents=True, exist_ok=True)
    io.write_curve(out / "curve.csv", curve, ctx.sha, ctx.seed)


def cmd_run_macro(args):
    ctx = Context(args)
    model = make_model(ctx)
    opts = cfgmod.run_options(ctx.cfg)
    spec = coupon_for(ctx, model)
    mesh = build_mesh(spec)
    res = run(mesh, cfgmod.protocol(ctx.cfg), model, cfgmod.stepping(ctx.cfg), opts.lateral_free, opts.rotation)
    out = Path(args.out)
    _write_run(out, res.curve(), ctx)
    s = field_statistics(res)
    io.write_table(
        out / "fields.csv",
        ("time_s", "eps_yy_eng", "phi_mean", "phi_min", "phi_max", "eps_mean", "eps_min", "eps_max", "eps_cov"),
        zip(*(a.tolist() for a in (s.time, s.global_eps, s.phi_mean, s.phi_min, s.phi_max, s.eps_mean, s.eps_min, s.eps_max, s.eps_cov))),
        ctx.sha,
        ctx.seed,
    )
    if opts.vtk_every > 0:
        for k in range(0, len(res.frames), opts.vtk_every):
            io.write_vtk(out / f"field_{k:05d}.vtk", mesh, res.frames[k], ctx.sha)
    if res.log.failed:
        log.error("run aborted: %s (partial output written)", res.log.message)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_run_single(args):
    ctx = Context(args)
    model = make_model(ctx)
    opts = cfgmod.run_options(ctx.cfg)
    theta0 = cfgmod.coupon(ctx.cfg).theta0
    c = solve(SinglePointProblem(theta0, model, cfgmod.protocol(ctx.cfg), opts.rotation, cfgmod.stepping(ctx.cfg)))
    a = c.arrays()
    _write_run(Path(args.out), {"time_s": a["time"], "eps_yy_eng": a["eps_yy"], "sig_yy_eng": a["sig_yy"], "sig_xy_eng": a["sig_xy"]}, ctx)
    if c.log.failed:
        log.error("run aborted: %s (partial output written)", c.log.message)
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------- studies


def _macro_job(job):
    ctx, changes, lateral_free = job
    model = make_model(ctx)
    spec = coupon_for(ctx, model, **changes)
    opts = cfgmod.run_options(ctx.cfg)
    res = run(build_mesh(spec), cfgmod.protocol(ctx.cfg), model, cfgmod.stepping(ctx.cfg), lateral_free, opts.rotation)
    return spec, res


def _map(fn, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _test_data(ctx, matrix_props=None, fiber_props=None):
    g = cfgmod.generator_spec(ctx.cfg)
    fp = fiber_props or cfgmod.fiber(ctx.cfg)
    mp = matrix_props or cfgmod.matrix(ctx.cfg)
    gen = VoigtMixture([(fp, g.fiber_fraction), (mp, 1.0 - g.fiber_fraction)])
    return generate_dataset(gen, sample_paths(cfgmod.paths(ctx.cfg, ctx.seed)), seed=ctx.seed)


def cmd_study(args):
    _require_seed(args)
    ctx = Context(args)
    st = cfgmod.study_spec(ctx.cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, header = [], None
    if st.kind == "mode-sweep":
        model = make_model(ctx)
        mp = cfgmod.matrix(ctx.cfg)
        ds = _test_data(ctx, matrix_props=mp)
        header = ("n_modes", "mae_mpa", "mae_pct_std")
        rows = mode_sweep(model.params, model.layout, mp, ds)
    elif st.kind == "transfer-grid":
        model = make_model(ctx)
        header = ("g12", "mae_mpa", "mae_pct_std")
        for g12 in st.shear_moduli:
            fp = model.layout.fiber_props.with_shear_modulus_12(g12)
            lay = transfer_properties(model.params, model.layout, fiber_props=fp)
            mae, rel = error_metrics(model.params, lay, _test_data(ctx, fiber_props=fp))
            rows.append((float(g12), mae, rel))
    elif st.kind == "model-selection":
        header = ("n_points", "n_curves", "mae_min_mpa", "mae_max_mpa", "pct_min", "pct_max")
        fp, mp = cfgmod.fiber(ctx.cfg), cfgmod.matrix(ctx.cfg)
        pool = _test_data(ctx)
        test = pool.subset(range(len(pool) // 2, len(pool)))
        for n in st.points:
            for m in st.curves:
                errs = []
                for r in range(st.restarts):
                    train_ds = pool.subset(range(min(m, len(pool) // 2)))
                    params, _ = train(train_ds, PrnnLayout.from_split(n, fp, mp), cfgmod.train_spec(ctx.cfg, ctx.seed + r))
                    errs.append(error_metrics(params, PrnnLayout.from_split(n, fp, mp), test))
                e = np.array(errs)
                rows.append((n, m, e[:, 0].min(), e[:, 0].max(), e[:, 1].min(), e[:, 1].max()))
    else:
        if st.kind == "endtab-compare":
            jobs = [(ctx, {"tabs": t}, lf) for t in ("straight", "oblique") for lf in (False, True)]
        elif st.kind == "bc-compare":
            jobs = [(ctx, {"tabs": "straight"}, lf) for lf in (False, True)]
        else:  # angle-sweep
            jobs = [(ctx, {"theta0": float(a)}, False) for a in st.angles]
        header = ("theta0", "tabs", "beta", "lateral_free", "final_eps", "final_sig_yy", "peak_abs_sig_xy_grip", "final_eps_cov", "failed")
        for (spec, res), (_, _, lf) in zip(_map(_macro_job, jobs, args.workers), jobs):
            name = f"theta{spec.theta0:g}_{spec.tabs}_{'free' if lf else 'fixed'}"
            _write_run(out / name, res.curve(), ctx)
            s = field_statistics(res)
            f = res.frames[-1]
            rows.append((spec.theta0, spec.tabs, spec.beta, lf, f.global_eps, f.global_sig_yy, grip_shear_peak(res), float(s.eps_cov[-1]), res.log.failed))
    io.write_table(out / "table.csv", header, rows, ctx.sha, ctx.seed)
    return EXIT_OK


def grip_shear_peak(res):
    """Peak |P_xy| over time in the elements touching the loaded grip face."""
    mesh = res.mesh
    grip = np.isin(mesh.elements, mesh.top).any(axis=1)
    return float(max(np.max(np.abs(f.sig_xy[grip])) for f in res.frames))


def cmd_export(args):
    """Dataset to a CSV-per-sample bundle, or model parameters to CSV."""
    src, out = Path(args.input), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    head = src.read_bytes()[:8]
    if head == io.DATASET_MAGIC:
        ds, header = io.load_dataset(src)
        cols = ["time_s"] + [f"U_{i}{j}" for i in "xyz" for j in "xyz"] + [f"s_{c}" for c in ("xx", "yy", "zz", "xy", "yz", "zx")]
        for k, (p, s) in enumerate(zip(ds.paths, ds.stress)):
            data = np.column_stack([p.time, p.U.reshape(-1, 9), s])
            io.write_table(out / f"sample_{k:04d}.csv", cols, (tuple(float(v) for v in r) for r in data), header.get("config_sha256", ""), ds.seed)
    else:
        params, layout, meta = io.load_model(src)
        rows = [(i, "fiber" if i < layout.n_fiber else "matrix", *map(float, params.W[i]), *map(float, params.d[i])) for i in range(layout.n_points)]
        cols = ["point", "kind"] + [f"W{k}" for k in range(6)] + [f"d{k}" for k in range(6)]
        io.write_table(out / "params.csv", cols, rows, meta.get("config_sha256", ""), meta.get("seed"))
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def parser():
    p = argparse.ArgumentParser(prog="feprnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, config=True, seed=False, out=True):
        s = sub.add_parser(name)
        if config:
            s.add_argument("--config", required=True)
            s.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE")
        if seed:
            s.add_argument("--seed", type=int, default=None)
        if out:
            s.add_argument("--out", required=True)
        s.set_defaults(func=fn)
        return s

    add("gen-data", cmd_gen_data, seed=True)
    add("train", cmd_train, seed=True).add_argument("--data", required=True)
    t = add("transfer", cmd_transfer)
    t.add_argument("--model", required=True)
    t.add_argument("--modes", type=int, default=None)
    add("run-macro", cmd_run_macro)
    add("run-single", cmd_run_single)
    add("study", cmd_study, seed=True).add_argument("--workers", type=int, default=1)
    add("export", cmd_export, config=False).add_argument("--input", required=True)
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except io.FormatError as exc:
        log.error("file error: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("file error: %s", exc)
        return EXIT_IO
    except (SolverError, EvaluationError) as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    except (DomainError, ContractError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
