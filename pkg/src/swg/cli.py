"""Command-line surface: simulate -> fit -> predict -> score.

Every command takes a config file plus overriding flags, honours --seed, and
writes a run manifest capturing the config snapshot and input digests, so
any artifact can be regenerated from its manifest alone.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .analogue import AnalogueGraph, FieldStack, build_analogue_inputs, \
    load_field_stacks, save_eof_basis, save_field_stacks
from .intensity import IntensityChain, IntensityConfig, IntensityData
from .io import RunManifest, build_tensors, cfg_get, cfg_ints, cfg_strs, \
    file_digest, load_gauge_csv, parse_config, save_gauge_csv, split_holdout
from .mcmc import PosteriorDraws
from .occurrence import OccurrenceChain, OccurrenceConfig, OccurrenceData
from .predict import ForecastSet, PredictionGrid, basin_aggregate, \
    forecast_outsample, krige_insample
from .sampling import RngStream
from .scoring import EnsembleForecast, IndicatorWeight, SmoothWeight, score_table, \
    twcrps
from .simulate import SimDesign, save_truth, simulate_dataset
from .spatial import SpatialDomain, project_latlon


def _overrides(args):
    out = []
    if args.iters is not None:
        out += [("occurrence.iterations", args.iters), ("intensity.iterations", args.iters)]
    if args.burnin is not None:
        out += [("occurrence.burnin", args.burnin), ("intensity.burnin", args.burnin)]
    if args.thin is not None:
        out += [("occurrence.thin", args.thin), ("intensity.thin", args.thin)]
    return out


def _load_training(cfg):
    """Gauge table, tensors, domain, and analogue inputs for the fit period."""
    gauge_path = cfg_get(cfg, "data", "gauge_csv")
    months = cfg_ints(cfg, "data", "months") or None
    train_range = (cfg_get(cfg, "data", "train_start"), cfg_get(cfg, "data", "train_end"))
    table = load_gauge_csv(gauge_path, date_range=train_range, months=months)
    holdout_ids = cfg_strs(cfg, "data", "holdout_stations")
    fit_table, holdout_table = split_holdout(table, holdout_ids)
    wet_thresh = cfg_get(cfg, "data", "wet_threshold_mm", 0.1, float)
    occ_data, int_data = build_tensors(fit_table, wet_thresh)

    xy, origin = project_latlon(fit_table.lat, fit_table.lon)
    nx = cfg_get(cfg, "domain", "knots_x", 5, int)
    ny = cfg_get(cfg, "domain", "knots_y", 5, int)
    bandwidth = cfg_get(cfg, "domain", "bandwidth_km", None, float)
    domain = SpatialDomain.from_locations(xy, nx=nx, ny=ny, bandwidth=bandwidth)
    domain.origin = origin

    stacks = load_field_stacks(cfg_get(cfg, "data", "fieldstack"))
    day_pos = {d: i for i, d in enumerate(stacks[0].days)}
    missing = [d for d in fit_table.dates if d not in day_pos]
    if missing:
        raise ValueError(f"field stack lacks {len(missing)} training days "
                         f"(first: {missing[0]})")
    rows = [day_pos[d] for d in fit_table.dates]
    train_stacks = [FieldStack(s.variable, s.values[rows], list(fit_table.dates))
                    for s in stacks]
    inputs = build_analogue_inputs(
        train_stacks,
        q=cfg_get(cfg, "analogue", "components", 10, int),
        lags=cfg_get(cfg, "analogue", "lags", 3, int),
        m=cfg_get(cfg, "analogue", "target_analogues", 25, int))
    if cfg_get(cfg, "analogue", "independence", False, bool):
        graph = AnalogueGraph.independence(fit_table.n_days,
                                           theta_bounds=inputs.graph.theta_bounds)
        inputs = __import__("dataclasses").replace(inputs, graph=graph)
    return table, fit_table, holdout_table, occ_data, int_data, domain, inputs, stacks


def cmd_simulate(args):
    cfg = parse_config(args.config)
    seed = args.seed if args.seed is not None else 0
    sim_keys = dict(
        n_stations=cfg_get(cfg, "simulate", "stations", 15, int),
        train_days=cfg_get(cfg, "simulate", "train_days", 120, int),
        test_days=cfg_get(cfg, "simulate", "test_days", 45, int),
        signal_strength=cfg_get(cfg, "simulate", "signal_strength", 0.8, float),
        n_classes=cfg_get(cfg, "simulate", "n_classes", 2, int),
        components=cfg_get(cfg, "simulate", "components", 3, int),
        lags=cfg_get(cfg, "simulate", "lags", 2, int),
        target_analogues=cfg_get(cfg, "simulate", "target_analogues", 10, int),
        domain_km=cfg_get(cfg, "simulate", "domain_km", 100.0, float),
    )
    design = SimDesign(seed=seed, **sim_keys)
    t0 = time.time()
    sim = simulate_dataset(design)
    os.makedirs(args.out, exist_ok=True)
    gauge_path = os.path.join(args.out, "gauges.csv")
    fields_dir = os.path.join(args.out, "fields")
    truth_path = os.path.join(args.out, "truth.txt")
    save_gauge_csv(sim.table, gauge_path)
    save_field_stacks(fields_dir, sim.stacks)
    save_truth(sim.truth, truth_path)
    manifest = RunManifest("simulate", seed, cfg,
                           inputs={args.config: file_digest(args.config)},
                           outputs=[gauge_path, fields_dir, truth_path],
                           timings={"simulate": time.time() - t0},
                           code_version=__version__)
    manifest.save(os.path.join(args.out, "manifest.txt"))
    print(f"simulated {design.n_stations} stations x {design.n_days} days -> {args.out}")
    return 0


def _occ_config(cfg, seed):
    return OccurrenceConfig(
        iterations=cfg_get(cfg, "occurrence", "iterations", 100_000, int),
        burnin=cfg_get(cfg, "occurrence", "burnin", 50_000, int),
        thin=cfg_get(cfg, "occurrence", "thin", 10, int),
        latent_sweeps=cfg_get(cfg, "occurrence", "latent_sweeps", 1, int),
        a_gamma=cfg_get(cfg, "occurrence", "a_gamma", 1.0, float),
        b_gamma=cfg_get(cfg, "occurrence", "b_gamma", 1.0, float),
        a_beta=cfg_get(cfg, "occurrence", "a_beta", 1.0, float),
        b_beta=cfg_get(cfg, "occurrence", "b_beta", 1.0, float),
        save_latent=cfg_get(cfg, "occurrence", "save_latent", True, bool),
        seed=seed)


def _int_config(cfg, seed):
    return IntensityConfig(
        n_classes=cfg_get(cfg, "intensity", "n_classes", 3, int),
        iterations=cfg_get(cfg, "intensity", "iterations", 100_000, int),
        burnin=cfg_get(cfg, "intensity", "burnin", 50_000, int),
        thin=cfg_get(cfg, "intensity", "thin", 10, int),
        a_gamma=cfg_get(cfg, "intensity", "a_gamma", 1.0, float),
        b_gamma=cfg_get(cfg, "intensity", "b_gamma", 1.0, float),
        a_beta=cfg_get(cfg, "intensity", "a_beta", 1.0, float),
        b_beta=cfg_get(cfg, "intensity", "b_beta", 1.0, float),
        sigma2_alpha=cfg_get(cfg, "intensity", "sigma2_alpha", 25.0, float),
        seed=seed)


def cmd_fit(args):
    cfg = parse_config(args.config, _overrides(args))
    seed = args.seed if args.seed is not None else 0
    (table, fit_table, _holdout, occ_data, int_data,
     domain, inputs, _stacks) = _load_training(cfg)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    timings = {}
    models = ("occurrence", "intensity") if args.model == "both" else (args.model,)
    for chain_id in range(args.chains):
        if "occurrence" in models:
            t0 = time.time()
            occ_cfg = _occ_config(cfg, seed)
            chain = OccurrenceChain(occ_data, domain, inputs.graph, occ_cfg,
                                    rng=RngStream(seed, 100 + chain_id).generator())
            draws = chain.run()
            path = os.path.join(args.out, f"occurrence_chain{chain_id}.draws")
            draws.save(path)
            outputs.append(path)
            timings[f"occurrence_chain{chain_id}"] = time.time() - t0
        if "intensity" in models:
            t0 = time.time()
            int_cfg = _int_config(cfg, seed)
            chain = IntensityChain(int_data, domain, inputs.graph, inputs.covariates,
                                   int_cfg,
                                   rng=RngStream(seed, 200 + chain_id).generator())
            draws = chain.run()
            path = os.path.join(args.out, f"intensity_chain{chain_id}.draws")
            draws.save(path)
            outputs.append(path)
            timings[f"intensity_chain{chain_id}"] = time.time() - t0
    basis_path = os.path.join(args.out, "eof_basis.swg")
    save_eof_basis(basis_path, inputs.bases)
    outputs.append(basis_path)
    manifest = RunManifest("fit", seed, cfg,
                           inputs={args.config: file_digest(args.config),
                                   cfg_get(cfg, "data", "gauge_csv"):
                                       file_digest(cfg_get(cfg, "data", "gauge_csv"))},
                           outputs=outputs, timings=timings,
                           code_version=__version__)
    manifest.save(os.path.join(args.out, "manifest.txt"))
    print(f"fit complete -> {args.out} ({', '.join(models)}; {args.chains} chain(s))")
    return 0


def _pool_chains(fit_dir, model):
    paths = sorted(p for p in os.listdir(fit_dir)
                   if p.startswith(f"{model}_chain") and p.endswith(".draws"))
    if not paths:
        raise FileNotFoundError(
            f"no {model} draws found in {fit_dir}: run `swg fit` first")
    pools = [PosteriorDraws.load(os.path.join(fit_dir, p)) for p in paths]
    fields = {k: np.concatenate([d.fields[k] for d in pools], axis=0)
              for k in pools[0].fields}
    return PosteriorDraws(model, pools[0].meta, fields)


def cmd_predict(args):
    cfg = parse_config(args.config, _overrides(args))
    seed = args.seed if args.seed is not None else 0
    (table, fit_table, holdout_table, _occ, int_data,
     domain, inputs, stacks) = _load_training(cfg)
    occ_draws = _pool_chains(args.fit, "occurrence")
    int_draws = _pool_chains(args.fit, "intensity")
    os.makedirs(args.out, exist_ok=True)
    mode = cfg_get(cfg, "predict", "mode", "both")
    rng = RngStream(seed, 300).generator()
    outputs = []
    timings = {}

    if mode in ("insample", "both") and holdout_table is not None:
        t0 = time.time()
        xy, _ = project_latlon(holdout_table.lat, holdout_table.lon,
                               origin=domain.origin)
        days = np.arange(fit_table.n_days)
        fc = krige_insample(occ_draws, int_draws, domain, int_data, xy, days, rng,
                            day_ids=fit_table.dates)
        path = os.path.join(args.out, "insample.fc")
        fc.save(path)
        outputs.append(path)
        timings["insample"] = time.time() - t0

    if mode in ("outsample", "both"):
        t0 = time.time()
        test_range = (cfg_get(cfg, "data", "test_start"),
                      cfg_get(cfg, "data", "test_end"))
        if test_range[0] is None:
            raise ValueError("outsample prediction needs data.test_start/test_end")
        lags = cfg_get(cfg, "analogue", "lags", 3, int)
        day_pos = {d: i for i, d in enumerate(stacks[0].days)}
        months = cfg_ints(cfg, "data", "months") or None
        test_table = load_gauge_csv(cfg_get(cfg, "data", "gauge_csv"),
                                    date_range=test_range, months=months)
        warm = fit_table.dates[-lags:] if lags else []
        future_days = list(warm) + list(test_table.dates)
        rows = [day_pos[d] for d in future_days]
        future = [FieldStack(s.variable, s.values[rows], future_days) for s in stacks]
        xy_all, _ = project_latlon(table.lat, table.lon, origin=domain.origin)
        fc = forecast_outsample(occ_draws, int_draws, inputs, future, domain,
                                xy_all, rng, day_ids=test_table.dates,
                                n_warmup=len(warm))
        path = os.path.join(args.out, "outsample.fc")
        fc.save(path)
        outputs.append(path)
        timings["outsample"] = time.time() - t0

    if mode == "grid":
        t0 = time.time()
        spacing = cfg_get(cfg, "predict", "grid_spacing_km", 10.0, float)
        xy_all, _ = project_latlon(table.lat, table.lon, origin=domain.origin)
        lo = xy_all.min(axis=0) - spacing
        hi = xy_all.max(axis=0) + spacing
        splits = cfg_get(cfg, "predict", "basins_x_splits", "", str)
        cuts = [float(v) for v in splits.split(",") if v.strip()] if splits else []
        grid = PredictionGrid.regular(
            lo, hi, spacing,
            basin_fn=(lambda c: int(np.searchsorted(cuts, c[0]))) if cuts else None)
        test_range = (cfg_get(cfg, "data", "test_start"),
                      cfg_get(cfg, "data", "test_end"))
        months = cfg_ints(cfg, "data", "months") or None
        test_table = load_gauge_csv(cfg_get(cfg, "data", "gauge_csv"),
                                    date_range=test_range, months=months)
        lags = cfg_get(cfg, "analogue", "lags", 3, int)
        day_pos = {d: i for i, d in enumerate(stacks[0].days)}
        warm = fit_table.dates[-lags:] if lags else []
        future_days = list(warm) + list(test_table.dates)
        rows = [day_pos[d] for d in future_days]
        future = [FieldStack(s.variable, s.values[rows], future_days) for s in stacks]
        fc = forecast_outsample(occ_draws, int_draws, inputs, future, domain,
                                grid.cells, rng, day_ids=test_table.dates,
                                n_warmup=len(warm))
        path = os.path.join(args.out, "grid.fc")
        fc.save(path)
        agg = basin_aggregate(fc, grid, np.arange(len(test_table.dates)))
        agg_path = os.path.join(args.out, "basin_maxima.csv")
        with open(agg_path, "w") as fh:
            fh.write("basin,mean,q2.5,q25,q50,q75,q97.5\n")
            for bid in agg["basin_ids"]:
                s = agg["summary"][bid]
                q = s["quantiles"]
                fh.write(f"{bid},{s['mean']:.6g},{q[2.5]:.6g},{q[25]:.6g},"
                         f"{q[50]:.6g},{q[75]:.6g},{q[97.5]:.6g}\n")
        outputs += [path, agg_path]
        timings["grid"] = time.time() - t0

    manifest = RunManifest("predict", seed, cfg,
                           inputs={args.config: file_digest(args.config)},
                           outputs=outputs, timings=timings,
                           code_version=__version__)
    manifest.save(os.path.join(args.out, "manifest.txt"))
    print(f"predictions -> {args.out} ({mode})")
    return 0


def cmd_score(args):
    cfg = parse_config(args.config, _overrides(args))
    seed = args.seed if args.seed is not None else 0
    months = cfg_ints(cfg, "data", "months") or None
    n_boot = cfg_get(cfg, "score", "n_boot", 1000, int)
    label = "independence" if cfg_get(cfg, "analogue", "independence", False, bool) \
        else "analogue"
    rows = {}
    outputs = []

    for mode, fname in (("in-sample", "insample.fc"), ("out-of-sample", "outsample.fc")):
        path = os.path.join(args.forecasts, fname)
        if not os.path.exists(path):
            continue
        fc = ForecastSet.load(path)
        if mode == "in-sample":
            rng_tbl = load_gauge_csv(
                cfg_get(cfg, "data", "gauge_csv"),
                date_range=(cfg_get(cfg, "data", "train_start"),
                            cfg_get(cfg, "data", "train_end")),
                months=months)
            holdout_ids = cfg_strs(cfg, "data", "holdout_stations")
            obs_table = rng_tbl.subset_stations(list(holdout_ids))
        else:
            obs_table = load_gauge_csv(
                cfg_get(cfg, "data", "gauge_csv"),
                date_range=(cfg_get(cfg, "data", "test_start"),
                            cfg_get(cfg, "data", "test_end")),
                months=months)
        if list(obs_table.dates) != list(fc.day_ids):
            raise ValueError(f"{fname}: forecast days do not match observations")
        obs = np.nanmax(obs_table.amounts, axis=1)
        members = fc.amounts.max(axis=2).T           # (days, draws)
        ens = EnsembleForecast(members, obs)
        med = float(np.median(obs))
        sd = float(np.std(obs)) * cfg_get(cfg, "score", "weight_scale_factor", 1.0, float)
        for wname, weight in (("w1", IndicatorWeight(med)),
                              ("w2", SmoothWeight(med, max(sd, 1e-6)))):
            score, ci = twcrps(ens, weight, n_boot=n_boot, seed=seed)
            rows[(mode, wname)] = {label: (score, ci)}

    if not rows:
        raise FileNotFoundError(f"no forecast files found under {args.forecasts}")
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "scores.csv")
    with open(table_path, "w") as fh:
        fh.write(score_table(rows, [label]))
    outputs.append(table_path)
    manifest = RunManifest("score", seed, cfg,
                           inputs={args.config: file_digest(args.config)},
                           outputs=outputs, timings={},
                           code_version=__version__)
    manifest.save(os.path.join(args.out, "manifest.txt"))
    print(open(table_path).read().strip())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="swg",
        description="Bayesian stochastic weather generator: analogue-prior "
                    "occurrence/intensity models with fit, predict, and "
                    "verification pipelines.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="INI-style config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=None)
        p.add_argument("--burnin", type=int, default=None)
        p.add_argument("--thin", type=int, default=None)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the MCMC samplers")
    common(p)
    p.add_argument("--model", choices=("occurrence", "intensity", "both"),
                   default="both")
    p.add_argument("--chains", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior-predictive draws")
    common(p)
    p.add_argument("--fit", required=True, help="directory with draws files")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="verification score table")
    common(p)
    p.add_argument("--fit", default=None, help="unused; kept for symmetry")
    p.add_argument("--forecasts", required=True, help="directory with .fc files")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
