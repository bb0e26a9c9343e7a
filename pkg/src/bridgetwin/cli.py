"""Command line front end.

Subcommands cover the whole loop: model construction and inspection,
prior simulation, synthetic recordings, gauge calibration, hyperparameter
inference, posterior extraction and held-out prediction. Every successful
run writes a JSON manifest naming its inputs, seeds, versions and output
files; failures exit 2 (configuration), 3 (numerics) or 4 (file system)
with a single-line error on stderr. Set TWIN_LOG=debug for diagnostics.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__, dataio
from .fem import FactorizationError, GaussianBelief
from .inference import McmcConfig, chain_diagnostics, point_estimate, sample_hyperposterior
from .model import ConfigError, load_model_config, validate_model
from .pipeline import TwinContext
from .statfem import (
    Hyperparameters,
    SensorLayout,
    mismatch_covariance,
    noise_covariance,
    displacement_posterior,
    strain_predictive,
    true_strain_posterior,
)
from .synth import DiscrepancySpec, generate_observations, generate_truth

log = logging.getLogger(__name__)

_BAND = 1.959963984540054  # two-sided 95% normal quantile


def fbg_mechanical_strain(
    rel_shift_s: float,
    rel_shift_t: float = 0.0,
    k_eps: float = 0.78,
    k_t: float = 0.0,
    k_tt: float = 1.0,
    alpha_sub: float = 12e-6,
) -> float:
    """Temperature-compensated mechanical strain from FBG wavelength shifts.

    ``rel_shift_s`` and ``rel_shift_t`` are the relative wavelength shifts
    of the strain and temperature gratings; the temperature reading is
    removed through the temperature sensitivity ratio and the substrate
    expansion term:

        strain = (rel_shift_s - k_t * rel_shift_t / k_tt) / k_eps
                 - alpha_sub * rel_shift_t / k_tt
    """
    if k_eps == 0.0:
        raise ValueError("strain sensitivity k_eps must be nonzero")
    if k_tt == 0.0:
        raise ValueError("temperature sensitivity k_tt must be nonzero")
    temperature = rel_shift_t / k_tt
    return (rel_shift_s - k_t * temperature) / k_eps - alpha_sub * temperature


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # single-line errors, uniform exit code
        raise ConfigError(message)


def _setup_logging() -> None:
    level_name = os.environ.get("TWIN_LOG")
    if level_name:
        level = getattr(logging, level_name.upper(), logging.INFO)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(category: str, exc: BaseException) -> None:
    message = " ".join(str(exc).split())
    print(f"error: {category}: {message}", file=sys.stderr)


def _write_manifest(path: Path, command: str, args: argparse.Namespace, outputs, seed=None) -> None:
    arguments = {
        k: v
        for k, v in sorted(vars(args).items())
        if k != "func" and v is not None and not callable(v)
    }
    doc = {
        "command": command,
        "arguments": arguments,
        "seed": seed,
        "outputs": [str(p) for p in outputs],
        "versions": {
            "bridgetwin": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _context(args) -> TwinContext:
    return TwinContext.from_files(args.model, args.scenario, args.sensors)


def _resolve_w_star(spec: str) -> Hyperparameters:
    if os.path.exists(spec):
        return dataio.read_estimate(spec)
    return dataio.parse_hyperparameters(spec)


def _observations(ctx: TwinContext, args):
    sigma_e = None if args.sigma_e is None else args.sigma_e * dataio.MICROSTRAIN
    return ctx.observations_from_csv(args.obs, sigma_e=sigma_e)


def _band_row(mean: float, std: float) -> tuple[str, str, str]:
    return (
        dataio.format_microstrain(mean),
        dataio.format_microstrain(mean - _BAND * std),
        dataio.format_microstrain(mean + _BAND * std),
    )


# -- subcommand bodies --------------------------------------------------------


def _cmd_model(args) -> int:
    model = load_model_config(args.config)
    report = validate_model(model)
    from .fem import assemble

    stiffness, dof_map = assemble(model)
    print(f"model: {model.n_nodes} nodes, {len(model.elements)} elements, "
          f"{len(model.supports)} supported nodes, {dof_map.n_free} free dofs")
    print(f"validation: {report}")
    if args.action == "info":
        print(f"span: {dataio.format_si(model.span())} m")
        for name, path in model.lines.items():
            print(f"line {name}: {len(path)} nodes")
        if model.deck_spacing is not None:
            print(f"deck spacing: {dataio.format_si(model.deck_spacing)} m")
        diag = np.diagonal(stiffness.matrix)
        print(f"stiffness diagonal range: [{diag.min():.6g}, {diag.max():.6g}] N/m")
    out = _out_dir(args)
    _write_manifest(out / "manifest.json", f"model {args.action}", args, [])
    return 0


def _cmd_simulate(args) -> int:
    ctx = _context(args)
    out = _out_dir(args)
    priors = ctx.prior_series()
    means_s, strain_cov = priors.projected(ctx.strain_op)
    std_s = np.sqrt(np.clip(np.diagonal(strain_cov), 0.0, None))

    strain_path = out / "prior_strains.csv"
    with open(strain_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "sensor", "mean", "lo95", "hi95"])
        for k in range(len(ctx.series)):
            t_text = dataio.format_si(ctx.series.timestamps[k])
            for i, sid in enumerate(ctx.layout.ids):
                writer.writerow([t_text, sid, *_band_row(means_s[i, k], std_s[i])])

    loads_path = out / "loads.csv"
    dataio.write_load_series(str(loads_path), ctx.series)
    print(f"wrote {strain_path} and {loads_path}: {len(ctx.series)} instants, "
          f"{len(ctx.layout)} sensors, crossing time "
          f"{ctx.scenario.crossing_time(ctx.model.span()):.3f} s")
    _write_manifest(out / "manifest.json", "simulate", args, [strain_path, loads_path])
    return 0


def _cmd_synth(args) -> int:
    ctx = _context(args)
    spec = DiscrepancySpec(
        rho=args.rho,
        sigma=args.sigma_d * dataio.MICROSTRAIN,
        length_scale=args.ell_d,
        seed=args.seed,
    )
    truth = generate_truth(ctx.strain_means(), ctx.series.gamma, ctx.layout, spec)
    obs = generate_observations(
        truth, ctx.series.timestamps, ctx.series.gamma, ctx.layout,
        args.sigma_e * dataio.MICROSTRAIN, args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_observations(str(out), obs)
    print(f"wrote {out}: {obs.n_sensors} sensors x {obs.n_instants} instants "
          f"(rho {args.rho}, sigma_d {args.sigma_d} ue, ell_d {args.ell_d} m, "
          f"sigma_e {args.sigma_e} ue, seed {args.seed})")
    _write_manifest(Path(str(out) + ".manifest.json"), "synth", args, [out], seed=args.seed)
    return 0


def _cmd_calibrate(args) -> int:
    with open(args.input, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "rel_shift_s" not in reader.fieldnames:
            raise ConfigError(f"{args.input} must have a rel_shift_s column")
        has_t = "t" in reader.fieldnames
        has_temp = "rel_shift_t" in reader.fieldnames
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{args.input} holds no data rows")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow((["t"] if has_t else []) + ["strain"])
        for row in rows:
            strain = fbg_mechanical_strain(
                float(row["rel_shift_s"]),
                float(row["rel_shift_t"]) if has_temp else 0.0,
                k_eps=args.k_eps,
                k_t=args.k_t,
                k_tt=args.k_tt,
                alpha_sub=args.alpha_sub,
            )
            prefix = [row["t"]] if has_t else []
            writer.writerow(prefix + [dataio.format_microstrain(strain)])
    print(f"wrote {out}: {len(rows)} rows (k_eps {args.k_eps})")
    _write_manifest(Path(str(out) + ".manifest.json"), "calibrate", args, [out])
    return 0


def _mcmc_config(args) -> McmcConfig:
    kwargs = {"iterations": args.iters, "seed": args.seed}
    if args.burn_in is not None:
        kwargs["burn_in_fraction"] = args.burn_in
    return McmcConfig(**kwargs)


def _cmd_infer(args) -> int:
    ctx = _context(args)
    obs_full = _observations(ctx, args)
    t0, t1 = (args.window if args.window else (None, None))
    obs = obs_full.window(t0, t1, stride=args.stride, gamma_min=args.gamma_min)
    indices = ctx.match_instants(obs.timestamps)
    priors = ctx.prior_series(indices)

    config = _mcmc_config(args)
    chain = sample_hyperposterior(obs, priors, ctx.strain_op, config)
    w_star = point_estimate(chain)
    diag = chain_diagnostics(chain)

    out = _out_dir(args)
    chain_path = out / "chain.csv"
    estimate_path = out / "estimate.json"
    dataio.write_chain(str(chain_path), chain)
    dataio.write_estimate(str(estimate_path), w_star, diag)
    print(f"kept {len(chain)} of {config.iterations} iterations on {obs.n_instants} instants, "
          f"acceptance {chain.acceptance_rate:.3f}")
    print(f"w*: rho {w_star.rho:.6g}, sigma_d {w_star.sigma_d / dataio.MICROSTRAIN:.6g} ue, "
          f"ell_d {w_star.ell_d:.6g} m")
    print(diag.render())
    _write_manifest(out / "manifest.json", "infer", args, [chain_path, estimate_path], seed=args.seed)
    return 0


def _posterior_pieces(ctx: TwinContext, obs, w: Hyperparameters, time: float):
    """Windowed instant nearest the requested time plus its conditioned dofs."""
    k = int(np.argmin(np.abs(obs.timestamps - time)))
    t_k = float(obs.timestamps[k])
    gamma_k = float(obs.gamma[k])
    series_idx = ctx.match_instants(np.array([t_k]))
    prior_k = ctx.prior_series(series_idx).instant(0)
    c_d = mismatch_covariance(ctx.layout, w, gamma_k)
    c_e = noise_covariance(obs.n_sensors, obs.sigma_e)
    post_u = displacement_posterior(obs.strains[:, k], w, prior_k, ctx.strain_op, c_d, c_e)
    return k, t_k, gamma_k, prior_k, post_u


def _cmd_posterior(args) -> int:
    ctx = _context(args)
    obs_full = _observations(ctx, args)
    t0, t1 = (args.window if args.window else (None, None))
    obs = obs_full.window(t0, t1, stride=args.stride, gamma_min=args.gamma_min)
    w = _resolve_w_star(args.w_star)
    k, t_k, gamma_k, prior_k, post_u = _posterior_pieces(ctx, obs, w, args.time)

    p = ctx.strain_op.matrix
    prior_strain = GaussianBelief(p @ prior_k.mean, p @ prior_k.cov @ p.T)
    fe_strain = GaussianBelief(p @ post_u.mean, p @ post_u.cov @ p.T)
    c_d = mismatch_covariance(ctx.layout, w, gamma_k)
    z = true_strain_posterior(post_u, w, ctx.strain_op, c_d)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        fh.write(f"# instant t={dataio.format_si(t_k)} gamma={dataio.format_si(gamma_k)}; "
                 "strains in microstrain; lo95/hi95 = mean -/+ 1.96 std\n")
        writer.writerow([
            "sensor", "x", "y", "fiber",
            "prior_mean", "prior_lo95", "prior_hi95",
            "fe_mean", "fe_lo95", "fe_hi95",
            "z_mean", "z_lo95", "z_hi95",
            "observed",
        ])
        pr_std, fe_std, z_std = prior_strain.std(), fe_strain.std(), z.std()
        for i, s in enumerate(ctx.layout.sensors):
            writer.writerow([
                s.id, dataio.format_si(s.x), dataio.format_si(s.y), s.fiber,
                *_band_row(prior_strain.mean[i], pr_std[i]),
                *_band_row(fe_strain.mean[i], fe_std[i]),
                *_band_row(z.mean[i], z_std[i]),
                dataio.format_microstrain(obs.strains[i, k]),
            ])
    print(f"wrote {out}: instant t={t_k:.6g} s (gamma {gamma_k:.3f}), "
          f"{len(ctx.layout)} sensors, jitter {post_u.jitter:.3e}")
    _write_manifest(Path(str(out) + ".manifest.json"), "posterior", args, [out])
    return 0


def _cmd_predict(args) -> int:
    ctx = _context(args)
    obs_full = _observations(ctx, args)
    t0, t1 = (args.window if args.window else (None, None))
    obs = obs_full.window(t0, t1, stride=args.stride, gamma_min=args.gamma_min)
    w = _resolve_w_star(args.w_star)
    k, t_k, gamma_k, _, post_u = _posterior_pieces(ctx, obs, w, args.time)

    held_out = SensorLayout.resolve(ctx.model, dataio.read_layout_entries(args.locations))
    op = ctx.operator_for(held_out)
    c_d_hat = mismatch_covariance(held_out, w, gamma_k)
    c_e_hat = noise_covariance(len(held_out), obs.sigma_e)
    pred = strain_predictive(post_u, w, op, c_d_hat, c_e_hat)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        fh.write(f"# instant t={dataio.format_si(t_k)} gamma={dataio.format_si(gamma_k)}; "
                 "strains in microstrain; lo95/hi95 = mean -/+ 1.96 std\n")
        writer.writerow(["sensor", "x", "y", "fiber", "mean", "lo95", "hi95"])
        std = pred.std()
        for i, s in enumerate(held_out.sensors):
            writer.writerow([
                s.id, dataio.format_si(s.x), dataio.format_si(s.y), s.fiber,
                *_band_row(pred.mean[i], std[i]),
            ])
    print(f"wrote {out}: {len(held_out)} held-out sensors at t={t_k:.6g} s")
    _write_manifest(Path(str(out) + ".manifest.json"), "predict", args, [out])
    return 0


# -- parser -------------------------------------------------------------------


def _add_context_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model YAML")
    p.add_argument("--scenario", required=True, help="crossing scenario YAML")
    p.add_argument("--sensors", required=True, help="sensor layout CSV")


def _add_obs_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--obs", required=True, help="recording CSV (microstrain)")
    p.add_argument("--sigma-e", type=float, default=None,
                   help="gauge noise in microstrain (default: estimated from the quiet start)")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"), default=None,
                   help="restrict inference to [T0, T1] seconds")
    p.add_argument("--stride", type=int, default=1, help="keep every k-th instant")
    p.add_argument("--gamma-min", type=float, default=0.05,
                   help="drop instants below this relative load level")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="bridgetwin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="build or inspect a bridge model")
    p.add_argument("action", choices=("build", "info"))
    p.add_argument("--config", required=True, help="model YAML")
    p.add_argument("--out", default=".", help="manifest directory")
    p.set_defaults(func=_cmd_model)

    p = sub.add_parser("simulate", help="prior strain bands and load series for a crossing")
    _add_context_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("synth", help="generate a synthetic noisy recording")
    _add_context_args(p)
    p.add_argument("--rho", type=float, required=True, help="true scaling factor")
    p.add_argument("--sigma-d", type=float, required=True, help="true mismatch amplitude (microstrain)")
    p.add_argument("--ell-d", type=float, required=True, help="true mismatch length (m)")
    p.add_argument("--sigma-e", type=float, required=True, help="gauge noise (microstrain)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="recording CSV to write")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="FBG wavelength shifts to mechanical strain")
    p.add_argument("--in", dest="input", required=True, help="CSV with rel_shift_s[,rel_shift_t][,t]")
    p.add_argument("--out", required=True, help="strain CSV to write (microstrain)")
    p.add_argument("--k-eps", type=float, default=0.78, help="strain sensitivity")
    p.add_argument("--k-t", type=float, default=0.0, help="cross sensitivity of the strain grating")
    p.add_argument("--k-tt", type=float, default=1.0, help="temperature grating sensitivity")
    p.add_argument("--alpha-sub", type=float, default=12e-6, help="substrate expansion per K")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("infer", help="sample the mismatch hyperposterior from a recording")
    _add_context_args(p)
    _add_obs_args(p)
    p.add_argument("--iters", type=int, default=20000, help="MCMC iterations")
    p.add_argument("--burn-in", type=float, default=None, help="burn-in fraction (default 0.25)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("posterior", help="condition the model on one instant of a recording")
    _add_context_args(p)
    _add_obs_args(p)
    p.add_argument("--w-star", required=True,
                   help="estimate.json path or inline rho,sigma_d,ell_d (sigma_d in microstrain)")
    p.add_argument("--time", type=float, required=True, help="instant of interest (s)")
    p.add_argument("--out", required=True, help="band CSV to write")
    p.set_defaults(func=_cmd_posterior)

    p = sub.add_parser("predict", help="predictive bands at held-out gauge locations")
    _add_context_args(p)
    _add_obs_args(p)
    p.add_argument("--w-star", required=True,
                   help="estimate.json path or inline rho,sigma_d,ell_d (sigma_d in microstrain)")
    p.add_argument("--time", type=float, required=True, help="instant of interest (s)")
    p.add_argument("--locations", required=True, help="held-out sensor layout CSV")
    p.add_argument("--out", required=True, help="band CSV to write")
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except FactorizationError as exc:
        _fail("numeric", exc)
        return 3
    except np.linalg.LinAlgError as exc:
        _fail("numeric", exc)
        return 3
    except (ConfigError, ValueError, KeyError) as exc:
        _fail("config", exc)
        return 2
    except OSError as exc:
        _fail("io", exc)
        return 4


def entry() -> None:
    raise SystemExit(main())
