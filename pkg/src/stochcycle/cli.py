"""Command-line pipeline.

Commands: simulate, periodogram, fit, summarize, decompose, clock, forecast.
Each reads a single JSON run-configuration file, writes deterministic
artifacts (CSV / JSON / static SVG) into the output directory, and exits
nonzero on failure: 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .analysis import clock, decompose, derived_summary, forecast, summarize
from .mcmc import (
    ChainOutput,
    SamplerConfig,
    chain_from_npz,
    chain_to_csv,
    chain_to_npz,
    default_blocks,
    initial_parameters,
    run_chains,
    single_block,
    split_rhat,
)
from .model import (
    TimeSeries,
    params_from_record,
    params_to_record,
    simulate,
)
from .moments import cycle_length_years, periodogram, pick_peaks
from .priors import (
    BetaInterval,
    GammaPrior,
    NormalPrior,
    default_prior_spec,
    frequency_supports_from_peaks,
)

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# Data ingestion
# ---------------------------------------------------------------------------


def ingest(path, column: str, periods_per_year: int = 4) -> TimeSeries:
    """Parse one numeric column of a headered CSV file.

    Any non-numeric cell is a hard error naming the offending row; missing
    files or columns fail loudly. No silent imputation.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file (expected a CSV header row)")
        if column not in reader.fieldnames:
            raise DataError(
                f"{path}: column {column!r} not found (columns: {reader.fieldnames})"
            )
        for row_number, row in enumerate(reader, start=2):
            cell = row[column]
            try:
                value = float(cell)
            except (TypeError, ValueError):
                raise DataError(
                    f"{path}: non-numeric value {cell!r} in column {column!r} "
                    f"at row {row_number}"
                ) from None
            if not math.isfinite(value):
                raise DataError(
                    f"{path}: non-finite value {cell!r} in column {column!r} "
                    f"at row {row_number}"
                )
            values.append(value)
    if not values:
        raise DataError(f"{path}: no data rows")
    return TimeSeries(np.array(values), periods_per_year)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_ANALYSIS_DEFAULTS = {
    "ci_level": 0.95,
    "ellipsoid_levels": [0.30, 0.60, 0.90],
    "forecast_horizon": 8,
    "paths_per_draw": 20,
    "max_decompose_draws": 1000,
    "clock_window_years": 4.0,
}

_SAMPLER_DEFAULTS = {
    "n_iterations": 300_000,
    "n_burnin": 200_000,
    "thin": 10,
    "n_chains": 2,
    "proposal_dof": 5.0,
    "target_acceptance": None,
    "adapt_window": 1000,
    "blocks": "default",
}


@dataclass
class RunConfig:
    raw: dict
    data_path: str
    data_column: str
    periods_per_year: int
    k: int
    p: int
    r: int
    prior_overrides: dict
    sampler: dict
    analysis: dict
    simulate_section: dict
    output_dir: Path
    seed: int
    config_hash: str

    @property
    def ci_level(self) -> float:
        return self.analysis["ci_level"]


def _hash_config(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path, out_override=None, seed_override=None,
                chains_override=None) -> RunConfig:
    """Read and validate the run configuration, reporting every violation."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    problems = []
    data = raw.get("data", {})
    model = raw.get("model", {})
    if not isinstance(data, dict) or "path" not in data:
        problems.append("data.path is required")
    if not isinstance(data, dict) or "column" not in data:
        problems.append("data.column is required")
    ppy = data.get("periods_per_year", 4) if isinstance(data, dict) else 4
    if not (isinstance(ppy, int) and ppy >= 1):
        problems.append("data.periods_per_year must be a positive integer")

    k = model.get("k", 1)
    p = model.get("p", 1)
    r = model.get("r", 0)
    if not (isinstance(k, int) and k >= 1):
        problems.append("model.k must be an integer >= 1")
    if not (isinstance(p, int) and p >= 1):
        problems.append("model.p must be an integer >= 1")
    if not (isinstance(r, int) and r >= 0):
        problems.append("model.r must be an integer >= 0")

    sampler = dict(_SAMPLER_DEFAULTS)
    sampler.update(raw.get("sampler", {}))
    if chains_override is not None:
        sampler["n_chains"] = chains_override
    blocks = sampler.get("blocks")
    if not (blocks in ("default", "single") or isinstance(blocks, list)):
        problems.append("sampler.blocks must be 'default', 'single', or a list of name lists")

    analysis = dict(_ANALYSIS_DEFAULTS)
    analysis.update(raw.get("analysis", {}))
    if not (0.0 < analysis["ci_level"] < 1.0):
        problems.append("analysis.ci_level must lie in (0, 1)")
    if analysis["forecast_horizon"] < 1:
        problems.append("analysis.forecast_horizon must be >= 1")
    for lv in analysis["ellipsoid_levels"]:
        if not (0.0 < lv < 1.0):
            problems.append(f"analysis.ellipsoid_levels entry {lv} must lie in (0, 1)")

    seed = raw.get("seed", 0)
    if seed_override is not None:
        seed = seed_override
    if not isinstance(seed, int):
        problems.append("seed must be an integer")

    out_dir = Path(out_override) if out_override else Path(raw.get("output_dir", "out"))

    # sampler bookkeeping constraints, checked here so errors surface together
    probe = SamplerConfig(
        n_iterations=sampler["n_iterations"], n_burnin=sampler["n_burnin"],
        thin=sampler["thin"], n_chains=sampler["n_chains"],
        proposal_dof=sampler["proposal_dof"],
        target_acceptance=sampler["target_acceptance"],
        adapt_window=sampler["adapt_window"], rng_seed=0,
    )
    problems.extend(probe.validate())

    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))

    resolved = {
        "data": {"path": str(data.get("path")), "column": data.get("column"),
                 "periods_per_year": ppy},
        "model": {"k": k, "p": p, "r": r},
        "prior": raw.get("prior", {}),
        "sampler": sampler,
        "analysis": analysis,
        "simulate": raw.get("simulate", {}),
        "seed": seed,
    }
    return RunConfig(
        raw=raw,
        data_path=str(data.get("path")),
        data_column=data.get("column"),
        periods_per_year=ppy,
        k=k, p=p, r=r,
        prior_overrides=raw.get("prior", {}),
        sampler=sampler,
        analysis=analysis,
        simulate_section=raw.get("simulate", {}),
        output_dir=out_dir,
        seed=seed,
        config_hash=_hash_config(resolved),
    )


def build_prior(cfg: RunConfig, y: TimeSeries):
    """Prior spec from config overrides, with frequency supports built from
    the demeaned-data periodogram peaks when not given explicitly."""
    ov = cfg.prior_overrides
    if "lambda_supports" in ov:
        supports = [tuple(map(float, s)) for s in ov["lambda_supports"]]
        if len(supports) != cfg.k:
            raise ConfigError(
                f"prior.lambda_supports must list {cfg.k} intervals, got {len(supports)}"
            )
    else:
        half_width = float(ov.get("lambda_half_width", 0.25))
        pg = periodogram(y, demean=True)
        peaks = pick_peaks(pg, cfg.k)
        supports = frequency_supports_from_peaks(peaks, half_width)
    spec = default_prior_spec(cfg.k, cfg.p, cfg.r, supports)
    if "p_supports" in ov:
        bounds = ov["p_supports"]
        if len(bounds) != cfg.k:
            raise ConfigError(f"prior.p_supports must list {cfg.k} intervals")
        spec.p_priors = [BetaInterval(1.0, 1.0, float(lo), float(hi))
                         for lo, hi in bounds]
    for name, attr in (("a", "a_prior"), ("q", "q_prior"), ("beta", "beta_prior"),
                       ("a_init", "A_init_prior")):
        if name in ov:
            setattr(spec, attr, NormalPrior(float(ov[name]["mean"]), float(ov[name]["var"])))
    for name, attr in (("alphaA", "alphaA_prior"), ("alphaP", "alphaP_prior"),
                       ("rho", "rho_prior")):
        if name in ov:
            d = ov[name]
            setattr(spec, attr, BetaInterval(float(d.get("b", 1.0)), float(d.get("c", 1.0)),
                                             float(d["lo"]), float(d["hi"])))
    if "omega" in ov:
        spec.omega_prior = GammaPrior(float(ov["omega"]["shape"]),
                                      float(ov["omega"]["scale"]))
    problems = spec.validate()
    if problems:
        raise ConfigError("invalid prior specification:\n  - " + "\n  - ".join(problems))
    return spec


def _sampler_config(cfg: RunConfig) -> SamplerConfig:
    blocks = cfg.sampler["blocks"]
    if blocks == "default":
        block_spec = default_blocks(cfg.k, cfg.p, cfg.r)
    elif blocks == "single":
        block_spec = single_block(cfg.k, cfg.p, cfg.r)
    else:
        block_spec = [list(map(str, blk)) for blk in blocks]
    return SamplerConfig(
        n_iterations=cfg.sampler["n_iterations"],
        n_burnin=cfg.sampler["n_burnin"],
        thin=cfg.sampler["thin"],
        n_chains=cfg.sampler["n_chains"],
        proposal_dof=cfg.sampler["proposal_dof"],
        target_acceptance=cfg.sampler["target_acceptance"],
        adapt_window=cfg.sampler["adapt_window"],
        rng_seed=cfg.seed,
        block_spec=block_spec,
    )


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\r\n")


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_json(path, payload, cfg: RunConfig):
    doc = {"schema_version": SCHEMA_VERSION, "config_hash": cfg.config_hash}
    doc.update(payload)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _new_figure(cfg: RunConfig, **kwargs):
    plt.rcParams["svg.hashsalt"] = cfg.config_hash
    return plt.subplots(**kwargs)


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _chain_paths(cfg: RunConfig):
    chain_dir = cfg.output_dir / "chains"
    return sorted(chain_dir.glob("chain_*.npz"))


def _load_chains(cfg: RunConfig):
    paths = _chain_paths(cfg)
    if not paths:
        raise ConfigError(
            f"no fitted chains found under {cfg.output_dir}/chains; run `fit` first"
        )
    chains = []
    for p in paths:
        data = np.load(p, allow_pickle=False)
        stored_hash = str(data["config_hash"])
        if stored_hash != cfg.config_hash:
            raise ConfigError(
                f"{p} was produced by a different configuration "
                f"(hash {stored_hash[:12]}… != {cfg.config_hash[:12]}…); re-run `fit`"
            )
        chains.append(chain_from_npz(p))
    return chains


def _pool_chains(chains) -> ChainOutput:
    first = chains[0]
    return ChainOutput(
        param_names=first.param_names,
        draws=np.concatenate([c.draws for c in chains]),
        draws_sampling=np.concatenate([c.draws_sampling for c in chains]),
        log_posterior_trace=np.concatenate([c.log_posterior_trace for c in chains]),
        acceptance_rates=first.acceptance_rates,
        diagnostics={},
        rng_seed=first.rng_seed,
        k=first.k, p=first.p, r=first.r,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    sim = cfg.simulate_section
    if "params" in sim:
        record = sim["params"]
    elif "params_path" in sim:
        record = json.loads(Path(sim["params_path"]).read_text(encoding="utf-8"))
    else:
        raise ConfigError("simulate requires simulate.params or simulate.params_path")
    try:
        params = params_from_record(record)
    except KeyError as exc:
        raise ConfigError(f"invalid parameter record: {exc}") from None
    n = int(sim.get("n", 120))
    y, path = simulate(params, n, rng=cfg.seed, periods_per_year=cfg.periods_per_year)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.output_dir / "simulated_series.csv", ["t", "value"],
               [(t + 1, y.values[t]) for t in range(n)])
    _write_csv(cfg.output_dir / "simulated_latents.csv",
               ["t", "A", "P", "eps", "m"],
               [(t + 1, path.A[t], path.P[t], path.eps[t], path.m[t])
                for t in range(n)])
    _write_json(cfg.output_dir / "simulated_params.json",
                {"params": params_to_record(params), "n": n, "seed": cfg.seed}, cfg)
    print(f"simulated {n} observations -> {cfg.output_dir}/simulated_series.csv")
    return 0


def cmd_periodogram(cfg: RunConfig) -> int:
    y = ingest(cfg.data_path, cfg.data_column, cfg.periods_per_year)
    pg = periodogram(y, demean=True)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    pg.to_csv(cfg.output_dir / "periodogram.csv")
    peaks = pick_peaks(pg, cfg.k)
    rows = []
    for j, lam in enumerate(np.sort(peaks)[::-1], start=1):
        pos = int(np.argmin(np.abs(pg.frequencies - lam)))
        rows.append((j, lam, pg.power[pos],
                     cycle_length_years(lam, cfg.periods_per_year)))
    _write_csv(cfg.output_dir / "periodogram_peaks.csv",
               ["rank", "frequency", "power", "cycle_length_years"], rows)
    for j, lam, power, years in rows:
        print(f"peak {j}: frequency {lam:.5f}  power {power:.4f}  "
              f"length {years:.3f} years")
    return 0


def cmd_fit(cfg: RunConfig, verbose: bool = False) -> int:
    y = ingest(cfg.data_path, cfg.data_column, cfg.periods_per_year)
    prior = build_prior(cfg, y)
    config = _sampler_config(cfg)
    init = initial_parameters(y, prior, cfg.k, cfg.p, cfg.r)
    chains = run_chains(y, prior, config, init)
    chain_dir = cfg.output_dir / "chains"
    chain_dir.mkdir(parents=True, exist_ok=True)
    for i, chain in enumerate(chains, start=1):
        chain_to_csv(chain, chain_dir / f"chain_{i:02d}.csv")
        chain_to_npz(chain, chain_dir / f"chain_{i:02d}.npz",
                     config_hash=cfg.config_hash)
    names = chains[0].param_names
    cross_rhat = {
        nm: split_rhat([c.column(nm) for c in chains]) if len(chains) > 1 else None
        for nm in names
    }
    _write_json(cfg.output_dir / "diagnostics.json", {
        "per_chain": [
            {"acceptance_rates": c.acceptance_rates,
             "ess": c.diagnostics["ess"],
             "split_rhat": c.diagnostics["split_rhat"]}
            for c in chains
        ],
        "cross_chain_split_rhat": cross_rhat,
        "kept_draws_per_chain": int(chains[0].draws.shape[0]),
    }, cfg)
    _write_json(cfg.output_dir / "manifest.json", {
        "data_path": str(cfg.data_path),
        "data_column": cfg.data_column,
        "periods_per_year": cfg.periods_per_year,
        "n_observations": y.n,
        "model": {"k": cfg.k, "p": cfg.p, "r": cfg.r},
        "seed": cfg.seed,
        "n_chains": len(chains),
        "lambda_supports": [list(bp.support) for bp in prior.lambda_priors],
        "p_supports": [list(bp.support) for bp in prior.p_priors],
        "initial_parameters": params_to_record(init),
    }, cfg)
    if verbose:
        for i, c in enumerate(chains, start=1):
            print(f"chain {i}: acceptance {c.acceptance_rates}")
    print(f"fit complete: {len(chains)} chain(s), "
          f"{chains[0].draws.shape[0]} kept draws each -> {cfg.output_dir}")
    return 0


def _summary_rows(pooled: ChainOutput, cfg: RunConfig):
    level = cfg.ci_level
    rows = []
    for i, nm in enumerate(pooled.param_names):
        s = summarize(pooled.draws[:, i], level)
        rows.append((nm, s))
    for j in range(1, pooled.k + 1):
        draws = pooled.column(f"lambda{j}")
        s = derived_summary(draws, lambda lam: cycle_length_years(lam, cfg.periods_per_year),
                            level)
        rows.append((f"T(lambda{j})", s))
    return rows


def cmd_summarize(cfg: RunConfig) -> int:
    pooled = _pool_chains(_load_chains(cfg))
    rows = _summary_rows(pooled, cfg)
    out_rows = []
    payload = {}
    for nm, s in rows:
        out_rows.append((nm, s.mean, s.median, ";".join(repr(m) for m in s.modes),
                         s.std_dev, s.quantile_ci[0], s.quantile_ci[1],
                         s.hpd[0], s.hpd[1]))
        payload[nm] = {
            "mean": s.mean, "median": s.median, "modes": s.modes,
            "std_dev": s.std_dev, "ci": list(s.quantile_ci), "hpd": list(s.hpd),
            "level": s.level,
        }
    _write_csv(cfg.output_dir / "summary.csv",
               ["parameter", "mean", "median", "modes", "std_dev",
                "ci_lower", "ci_upper", "hpd_lower", "hpd_upper"], out_rows)
    _write_json(cfg.output_dir / "summary.json", {"parameters": payload}, cfg)
    width = max(len(nm) for nm, _ in rows)
    level_pct = round(cfg.ci_level * 100)
    print(f"{'parameter':<{width}}  {'mean':>9} {'median':>9} {'sd':>8} "
          f"CI{level_pct}%{'':<15} HPD{level_pct}%")
    for nm, s in rows:
        ci = f"({s.quantile_ci[0]:.3f}; {s.quantile_ci[1]:.3f})"
        hpd = f"({s.hpd[0]:.3f}; {s.hpd[1]:.3f})"
        print(f"{nm:<{width}}  {s.mean:>9.3f} {s.median:>9.3f} {s.std_dev:>8.3f} "
              f"{ci:<21} {hpd}")
    return 0


def cmd_decompose(cfg: RunConfig) -> int:
    y = ingest(cfg.data_path, cfg.data_column, cfg.periods_per_year)
    pooled = _pool_chains(_load_chains(cfg))
    decomp = decompose(pooled, y, level=cfg.ci_level,
                       max_draws=cfg.analysis["max_decompose_draws"])
    out = cfg.output_dir
    long_rows = []
    for m in range(decomp.n_draws):
        for j in range(decomp.k):
            for t in range(decomp.n):
                long_rows.append((int(decomp.draw_indices[m]), j + 1, t + 1,
                                  decomp.components[m, j, t]))
    _write_csv(out / "components_draws.csv",
               ["draw", "frequency", "t", "value"], long_rows)
    band_rows = []
    for j in range(decomp.k):
        for t in range(decomp.n):
            band_rows.append((j + 1, t + 1, decomp.component_median[j, t],
                              decomp.component_lower[j, t],
                              decomp.component_upper[j, t]))
    _write_csv(out / "components_bands.csv",
               ["frequency", "t", "median", "lower", "upper"], band_rows)
    state_rows = [
        (t + 1,
         decomp.amplitude_median[t], decomp.amplitude_lower[t], decomp.amplitude_upper[t],
         decomp.phase_median[t], decomp.phase_lower[t], decomp.phase_upper[t])
        for t in range(decomp.n)
    ]
    _write_csv(out / "amplitude_phase_bands.csv",
               ["t", "amplitude_median", "amplitude_lower", "amplitude_upper",
                "phase_median", "phase_lower", "phase_upper"], state_rows)

    t_axis = np.arange(1, decomp.n + 1)
    for j in range(decomp.k):
        fig, ax = _new_figure(cfg, figsize=(8, 3))
        ax.fill_between(t_axis, decomp.component_lower[j], decomp.component_upper[j],
                        alpha=0.3, color="tab:blue", linewidth=0)
        ax.plot(t_axis, decomp.component_median[j], color="tab:blue")
        ax.set_xlabel("t")
        ax.set_title(f"cycle component {j + 1} (median, {round(cfg.ci_level*100)}% band)")
        _save_svg(fig, out / f"component_{j + 1}.svg")
    for label, med, lo, hi in (
        ("amplitude", decomp.amplitude_median, decomp.amplitude_lower, decomp.amplitude_upper),
        ("phase", decomp.phase_median, decomp.phase_lower, decomp.phase_upper),
    ):
        fig, ax = _new_figure(cfg, figsize=(8, 3))
        ax.fill_between(t_axis, lo, hi, alpha=0.3, color="tab:green", linewidth=0)
        ax.plot(t_axis, med, color="tab:green")
        ax.set_xlabel("t")
        ax.set_title(f"{label} path (median, {round(cfg.ci_level*100)}% band)")
        _save_svg(fig, out / f"{label}.svg")
    print(f"decomposition written for {decomp.n_draws} draws, {decomp.k} components "
          f"-> {out}")
    return 0


def cmd_clock(cfg: RunConfig) -> int:
    y = ingest(cfg.data_path, cfg.data_column, cfg.periods_per_year)
    pooled = _pool_chains(_load_chains(cfg))
    decomp = decompose(pooled, y, level=cfg.ci_level,
                       max_draws=cfg.analysis["max_decompose_draws"])
    out = cfg.output_dir
    levels = tuple(cfg.analysis["ellipsoid_levels"])
    window = max(2, int(round(cfg.analysis["clock_window_years"] * cfg.periods_per_year)))
    for j in range(decomp.k):
        cs = clock(decomp, j, ellipse_levels=levels)
        rows = [
            (int(cs.time_index[i]), cs.clock_x[i], cs.clock_y[i],
             cs.quadrant_probs[i, 0], cs.quadrant_probs[i, 1],
             cs.quadrant_probs[i, 2], cs.quadrant_probs[i, 3], cs.tie_mass[i])
            for i in range(cs.time_index.size)
        ]
        _write_csv(out / f"clock_{j + 1}.csv",
                   ["t", "delta_median", "level_median", "quad1_expansion",
                    "quad2_downturn", "quad3_contraction", "quad4_recovery",
                    "tie_mass"], rows)
        ellipse_doc = {
            str(lv): [e.to_dict() if e is not None else None for e in per_t]
            for lv, per_t in cs.ellipses.items()
        }
        _write_json(out / f"clock_{j + 1}_ellipses.json",
                    {"frequency_index": j + 1,
                     "time_index": [int(t) for t in cs.time_index],
                     "ellipses": ellipse_doc}, cfg)
        _plot_clock_panels(cfg, cs, window, out / f"clock_{j + 1}.svg")
    print(f"clock artifacts for {decomp.k} components -> {out}")
    return 0


def _plot_clock_panels(cfg: RunConfig, cs, window: int, path):
    n_pts = cs.time_index.size
    ends = list(range(min(window, n_pts) - 1, n_pts))[-16:]
    n_panels = len(ends)
    cols = 4
    rows = (n_panels + cols - 1) // cols
    fig, axes = _new_figure(cfg, figsize=(3 * cols, 2.4 * rows), nrows=rows,
                            ncols=cols, squeeze=False)
    theta = np.linspace(0, 2 * math.pi, 100)
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    for panel, end in enumerate(ends):
        ax = axes[panel // cols][panel % cols]
        start = max(0, end - window + 1)
        ax.plot(cs.clock_x[start:end + 1], cs.clock_y[start:end + 1],
                color="tab:blue", linewidth=1.0)
        ax.plot(cs.clock_x[end], cs.clock_y[end], "o", color="tab:red",
                markersize=3)
        for lv, per_t in sorted(cs.ellipses.items()):
            ell = per_t[end]
            if ell is None:
                continue
            chol = np.linalg.cholesky(ell.shape)
            ring = ell.center + ell.radius * (circle @ chol.T)
            ax.plot(ring[:, 0], ring[:, 1], linewidth=0.7, color="tab:gray")
        ax.axhline(0.0, color="black", linewidth=0.5)
        ax.axvline(0.0, color="black", linewidth=0.5)
        ax.set_title(f"t={int(cs.time_index[end])}", fontsize=8)
        ax.tick_params(labelsize=6)
    for panel in range(n_panels, rows * cols):
        axes[panel // cols][panel % cols].axis("off")
    fig.tight_layout()
    _save_svg(fig, path)


def cmd_forecast(cfg: RunConfig) -> int:
    y = ingest(cfg.data_path, cfg.data_column, cfg.periods_per_year)
    pooled = _pool_chains(_load_chains(cfg))
    horizon = int(cfg.analysis["forecast_horizon"])
    fc = forecast(pooled, y, horizon=horizon,
                  paths_per_draw=int(cfg.analysis["paths_per_draw"]),
                  rng=cfg.seed, ci_level=cfg.ci_level,
                  max_draws=cfg.analysis["max_decompose_draws"])
    out = cfg.output_dir
    rows = [
        (int(fc.time_index[h]), fc.mean[h], fc.median[h], fc.lower[h],
         fc.upper[h], fc.variance[h], fc.point_median[h])
        for h in range(horizon)
    ]
    _write_csv(out / "forecast.csv",
               ["t", "mean", "median", "lower", "upper", "variance",
                "point_median"], rows)
    fig, ax = _new_figure(cfg, figsize=(8, 3))
    hist_t = np.arange(1, y.n + 1)
    ax.plot(hist_t, y.values, color="black", linewidth=0.8, label="observed")
    ax.fill_between(fc.time_index, fc.lower, fc.upper, alpha=0.3,
                    color="tab:orange", linewidth=0,
                    label=f"{round(cfg.ci_level*100)}% predictive")
    ax.plot(fc.time_index, fc.median, color="tab:orange", label="median")
    ax.plot(fc.time_index, fc.point_median, color="tab:red", linewidth=0.8,
            linestyle="--", label="point (zero-innovation)")
    ax.legend(fontsize=7)
    ax.set_xlabel("t")
    _save_svg(fig, out / "forecast.svg")
    print(f"forecast horizon {horizon} -> {out}/forecast.csv")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochcycle",
        description="Multi-frequency stochastic cycle model: simulation, "
                    "Bayesian estimation, and posterior cycle analysis.",
    )
    parser.add_argument("command",
                        choices=["simulate", "periodogram", "fit", "summarize",
                                 "decompose", "clock", "forecast"])
    parser.add_argument("--config", required=True, help="run configuration JSON")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    parser.add_argument("--chains", type=int, help="number of chains (overrides config)")
    parser.add_argument("--verbose", action="store_true")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "periodogram": cmd_periodogram,
    "summarize": cmd_summarize,
    "decompose": cmd_decompose,
    "clock": cmd_clock,
    "forecast": cmd_forecast,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out_override=args.out,
                          seed_override=args.seed, chains_override=args.chains)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "fit":
            return cmd_fit(cfg, verbose=args.verbose)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
