"""Command-line interface: reproducible runs that emit CSV artifacts.

Exit status: 0 on success, 2 on configuration errors (the message names the
offending key), 3 on numerical aborts.  Every run writes a manifest
recording the resolved configuration, seed and versions; feeding the
manifest back as the config reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_grid, build_scenario, load_config
from .ehrenfest import Microstate, integrate_trajectory
from .ensemble import (estimate_moment_field, exact_moment_field,
                       exact_third_moment, propagate, sample_initial,
                       trace_chain_residuals)
from .evolution import compare_to_ensemble, evolve_effective
from .hierarchy import fig1_scan, first_moment_rhs, kth_moment_rhs, marginal_rhs
from .io import (write_csv, write_ensemble_csv, write_fig1_csv,
                 write_manifest, write_moment_field_csv, write_trajectory_csv)
from .maxent import check_constraints, closure_closed_form, closure_numeric
from .pauli import partial_trace_first

__all__ = ["main"]


class NumericalAbort(Exception):
    pass


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    directory = Path(override or cfg.block("output")["directory"])
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _sample_times(cfg: RunConfig) -> list[float]:
    t_end = cfg.block("integrator")["t_end"]
    return [f * t_end for f in cfg.block("output")["sample_fractions"]]


def _cmd_trajectory(cfg: RunConfig, out: Path) -> None:
    ham, _ = build_scenario(cfg)
    block = cfg.block("trajectory")
    integ = cfg.block("integrator")
    state = Microstate(r=block["r0"], p=block["p0"],
                       n=np.asarray(block["bloch0"], dtype=float))
    traj = integrate_trajectory(state, ham, t_end=integ["t_end"],
                                dt=integ["dt"], stride=block["stride"])
    write_trajectory_csv(out / "trajectory.csv", traj)
    if traj.aborted:
        raise NumericalAbort("; ".join(traj.warnings))


def _cmd_ensemble(cfg: RunConfig, out: Path, seed: int) -> None:
    ham, density = build_scenario(cfg)
    grid = build_grid(cfg)
    ens_cfg = cfg.block("ensemble")
    integ = cfg.block("integrator")
    ens = sample_initial(density, ens_cfg["n_samples"], seed)
    current = 0.0
    for target in _sample_times(cfg):
        if target > current:
            ens = propagate(ens, ham, target - current, integ["dt"])
            current = target
        tag = f"t{target:.6g}".replace(".", "p").replace("-", "m")
        write_ensemble_csv(out / f"ensemble_{tag}.csv", ens)
        field = estimate_moment_field(ens, grid, k=2,
                                      bandwidth=ens_cfg["bandwidth"])
        write_moment_field_csv(out / f"moments_{tag}.csv", field)


def _cmd_fig1(cfg: RunConfig, out: Path) -> None:
    ham, density = build_scenario(cfg)
    f = cfg.block("fig1")
    r_values = np.linspace(f["r_min"], f["r_max"], f["n_r"])
    theta_values = np.linspace(f["theta_min"], f["theta_max"], f["n_theta"])
    table = fig1_scan(ham, density, r_values, theta_values,
                      p_fixed=f["p_fixed"], fd_step=f["fd_step"])
    write_fig1_csv(out / "fig1.csv", table)


def _cmd_maxent_check(cfg: RunConfig, out: Path, seed: int) -> None:
    block = cfg.block("maxent_check")
    closure_cfg = cfg.block("closure")
    if block["inputs"] is not None:
        inputs = [np.asarray(row, dtype=float) for row in block["inputs"]]
    else:
        rng = np.random.default_rng(seed)
        direction = rng.standard_normal((block["count"], 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = 0.5 * rng.random(block["count"]) ** (1.0 / 3.0)
        inputs = [np.concatenate(([0.5], radius[i] * direction[i]))
                  for i in range(block["count"])]
    header = (["mu0", "mu1", "mu2", "mu3", "method", "entropy", "converged"]
              + ["out_" + c for c in ("mu00", "mu01", "mu02", "mu03", "mu11",
                                      "mu12", "mu13", "mu22", "mu23", "mu33")])
    residual_names = None
    rows = []
    for mu in inputs:
        if closure_cfg["method"] == "numeric":
            res = closure_numeric(mu, entropy_order=closure_cfg["entropy_order"],
                                  tol=closure_cfg["tol"],
                                  max_iter=closure_cfg["max_iter"])
        else:
            res = closure_closed_form(mu)
        report = check_constraints(mu, res.second).as_dict()
        if residual_names is None:
            residual_names = sorted(report)
            header = header + residual_names
        row = ([float(v) for v in mu] + [res.method, res.entropy_value,
                                         int(res.converged)]
               + [float(v) for v in res.second]
               + [report[name] for name in residual_names])
        rows.append(row)
    write_csv(out / "closure_report.csv", header, rows)


def _cmd_evolve_effective(cfg: RunConfig, out: Path) -> None:
    ham, density = build_scenario(cfg)
    grid = build_grid(cfg)
    integ = cfg.block("integrator")
    closure_cfg = cfg.block("closure")
    initial = exact_moment_field(density, grid, k=1)
    result = evolve_effective(initial, ham, t_end=integ["t_end"],
                              dt=integ["dt"], closure=closure_cfg["method"],
                              sample_times=_sample_times(cfg))
    for t, field in zip(result.times, result.fields):
        tag = f"t{t:.6g}".replace(".", "p").replace("-", "m")
        write_moment_field_csv(out / f"effective_{tag}.csv", field)
    write_csv(out / "conservation.csv",
              ["t", "probability", "purity_violation_fraction"],
              [(float(t), float(p), float(v)) for t, p, v in
               zip(result.times, result.probability, result.purity_violations)])
    for message in result.warnings:
        print(f"warning: {message}", file=sys.stderr)
    if result.aborted:
        raise NumericalAbort("; ".join(result.warnings))


def _cmd_compare(cfg: RunConfig, out: Path, seed: int) -> None:
    ham, density = build_scenario(cfg)
    grid = build_grid(cfg)
    integ = cfg.block("integrator")
    ens_cfg = cfg.block("ensemble")
    closure_cfg = cfg.block("closure")
    report = compare_to_ensemble(ham, density, grid,
                                 n_samples=ens_cfg["n_samples"],
                                 t_end=integ["t_end"], dt=integ["dt"],
                                 seed=seed, sample_times=_sample_times(cfg),
                                 bandwidth=ens_cfg["bandwidth"],
                                 closure=closure_cfg["method"])
    with open(out / "comparison.json", "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, indent=2, default=float)
    rows = []
    for i, t in enumerate(report.times):
        for name, stats in report.observables[i].items():
            rows.append((float(t), name, stats["mc"], stats["mc_se"],
                         stats["effective"],
                         abs(stats["mc"] - stats["effective"])))
    write_csv(out / "comparison_observables.csv",
              ["t", "observable", "mc", "mc_se", "effective", "abs_diff"], rows)
    rows = [(float(t), report.field_l2[i]["f_c"], report.field_linf[i]["f_c"],
             report.closure_control[i]) for i, t in enumerate(report.times)]
    write_csv(out / "comparison_fields.csv",
              ["t", "f_c_l2", "f_c_linf", "closure_control_l2"], rows)


def _cmd_hierarchy_check(cfg: RunConfig, out: Path, seed: int) -> None:
    """Residual suite: trace identities of the coupled moment equations."""
    ham, density = build_scenario(cfg)
    grid = build_grid(cfg)
    first = exact_moment_field(density, grid, k=1)
    second = exact_moment_field(density, grid, k=2)
    third = exact_third_moment(density, grid)

    rhs1 = first_moment_rhs(first, second, ham)
    d_f_c, _ = marginal_rhs(first, ham)
    rhs2 = kth_moment_rhs(2, second, third, ham)
    traced = partial_trace_first(rhs2.d_second)

    chain = trace_chain_residuals(second)
    rows = [
        ("trace_rhs1_vs_marginal",
         float(np.max(np.abs(2.0 * rhs1.d_first[..., 0] - d_f_c)))),
        ("trace_rhs2_vs_rhs1", float(np.max(np.abs(traced - rhs1.d_first)))),
        ("trace_second_vs_first", chain["trace_second_vs_first"]),
        ("trace_first_vs_fc", chain["trace_first_vs_fc"]),
        ("marginal_probability_rate", float(abs(grid.integrate(d_f_c)))),
    ]
    write_csv(out / "hierarchy_residuals.csv", ["check", "max_abs_residual"],
              rows)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qcmoments",
        description="Hybrid quantum-classical moment dynamics simulator")
    parser.add_argument("subcommand",
                        choices=["trajectory", "ensemble", "fig1",
                                 "maxent-check", "evolve-effective",
                                 "compare", "hierarchy-check"])
    parser.add_argument("--config", required=True,
                        help="YAML/JSON config file (a run manifest also works)")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured ensemble seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap; the numpy kernels are already "
                             "vectorized, so this is a ceiling, not a demand")
    parser.add_argument("--reproducible", action="store_true",
                        help="force the bitwise-reproducible execution path "
                             "(the default path already is)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.subcommand)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed
    if seed is None:
        for block in ("ensemble", "maxent_check"):
            if block in cfg.blocks:
                seed = cfg.block(block)["seed"]
                break
    out = _out_dir(cfg, args.out)

    try:
        if args.subcommand == "trajectory":
            _cmd_trajectory(cfg, out)
        elif args.subcommand == "ensemble":
            _cmd_ensemble(cfg, out, seed)
        elif args.subcommand == "fig1":
            _cmd_fig1(cfg, out)
        elif args.subcommand == "maxent-check":
            _cmd_maxent_check(cfg, out, seed)
        elif args.subcommand == "evolve-effective":
            _cmd_evolve_effective(cfg, out)
        elif args.subcommand == "compare":
            _cmd_compare(cfg, out, seed)
        elif args.subcommand == "hierarchy-check":
            _cmd_hierarchy_check(cfg, out, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalAbort, FloatingPointError) as exc:
        write_manifest(out, args.subcommand, cfg.blocks, seed,
                       args.config if isinstance(args.config, str) else None)
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3

    write_manifest(out, args.subcommand, cfg.blocks, seed,
                   args.config if isinstance(args.config, str) else None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
