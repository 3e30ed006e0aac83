use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::{json, Value};

use selfcons::cost::{mc_cost, Baseline, BaselinePolicy, McEstimate, McSettings, McStart};
use selfcons::hjb::{
    read_checkpoint, solve as solve_hjb, write_checkpoint, ExtractedPolicy, SolveOptions,
    SolverGrid, ValueField,
};
use selfcons::model::ModelConfig;
use selfcons::stochastic::{
    fit_harmonic, fit_ou, fit_ou_segments, fit_pv_seasonal, SeriesSample, TimeGrid,
    PV_NIGHT_THRESHOLD_MW,
};
use selfcons::Error;

use crate::bundle::{fmt17, Bundle};
use crate::settings::{GridSpec, RunConfig};
use crate::times::{label, parse_time};

pub const CHECKPOINT: &str = "value_field.bin";
const SHAPE_RELATIVE_TOLERANCE: f64 = 1e-6;
const HULL_TOLERANCE: f64 = 1e-9;

fn run_metadata(command: &str, started: Instant) -> Value {
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "finished_unix_s": unix,
        "threads": threads(),
    })
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn grid_json(g: &SolverGrid<f64>) -> Value {
    json!({
        "time_step_h": g.time_step,
        "p_min": g.p_min,
        "p_max": g.p_max,
        "p_step": g.p_step,
        "s_step_mwh": g.s_step,
        "s_min_mwh": g.s_min,
        "s_max_mwh": g.s_max,
        "horizon_h": g.horizon,
        "nodes": [g.n_t, g.n_p, g.n_s],
    })
}

fn grid_summary(g: &SolverGrid<f64>, cfl: f64) -> String {
    format!(
        "grid {}x{}x{} (tau {} h, p step {}, s step {} MWh), CFL {cfl:.3}",
        g.n_t, g.n_p, g.n_s, g.time_step, g.p_step, g.s_step
    )
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, Default)]
pub struct CalibrateArgs {
    pub price: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub pv: Option<PathBuf>,
}

fn read_series(path: &Path) -> Result<SeriesSample<f64>> {
    if !path.exists() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(SeriesSample::read_csv(path)?)
}

fn list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| fmt17(*v)).collect();
    format!("[{}]", items.join(", "))
}

/// Harmonic regression plus OU fit for a price or demand series.
fn calibrate_seasonal(
    name: &str,
    path: &Path,
    frequencies: &[f64],
    toml: &mut String,
) -> Result<Value> {
    let sample = read_series(path)?;
    let fit = fit_harmonic(&sample, frequencies)
        .with_context(|| format!("{}: harmonic regression", path.display()))?;
    let ou = fit_ou(&fit.residuals, sample.spacing())
        .with_context(|| format!("{}: OU fit", path.display()))?;
    let spec = &fit.spec;
    let sine: Vec<f64> = spec.harmonics.iter().map(|h| h.sine_amp).collect();
    let cosine: Vec<f64> = spec.harmonics.iter().map(|h| h.cosine_amp).collect();

    writeln!(toml, "[{name}]")?;
    writeln!(toml, "# se {}", fmt17(fit.intercept_se))?;
    writeln!(toml, "intercept = {}", fmt17(spec.intercept))?;
    writeln!(toml, "frequencies = {}", list(frequencies))?;
    writeln!(toml, "# se {}", list(&fit.sine_se))?;
    writeln!(toml, "sine = {}", list(&sine))?;
    writeln!(toml, "# se {}", list(&fit.cosine_se))?;
    writeln!(toml, "cosine = {}", list(&cosine))?;
    writeln!(toml, "# se {}", fmt17(ou.mean_reversion_se))?;
    writeln!(toml, "mean_reversion_per_h = {}", fmt17(ou.params.mean_reversion))?;
    writeln!(toml, "# se {}", fmt17(ou.volatility_se))?;
    writeln!(toml, "volatility_per_sqrt_h = {}", fmt17(ou.params.volatility))?;
    writeln!(toml)?;

    Ok(json!({
        "input": path.display().to_string(),
        "samples": sample.len(),
        "spacing_h": sample.spacing(),
        "intercept": {"estimate": spec.intercept, "se": fit.intercept_se},
        "harmonics": spec.harmonics.iter().enumerate().map(|(i, h)| json!({
            "frequency_per_h": h.frequency,
            "sine": {"estimate": h.sine_amp, "se": fit.sine_se[i]},
            "cosine": {"estimate": h.cosine_amp, "se": fit.cosine_se[i]},
        })).collect::<Vec<_>>(),
        "mean_reversion_per_h": {"estimate": ou.params.mean_reversion, "se": ou.mean_reversion_se},
        "volatility_per_sqrt_h": {"estimate": ou.params.volatility, "se": ou.volatility_se},
        "lag_coefficient": ou.lag_coefficient,
    }))
}

fn calibrate_pv(path: &Path, frequency: f64, toml: &mut String) -> Result<Value> {
    let sample = read_series(path)?;
    let fit = fit_pv_seasonal(&sample, frequency, PV_NIGHT_THRESHOLD_MW)
        .with_context(|| format!("{}: pv seasonal fit", path.display()))?;
    let ou = fit_ou_segments(&fit.segments, sample.spacing())
        .with_context(|| format!("{}: OU fit", path.display()))?;
    let spec = &fit.spec;

    writeln!(toml, "[pv]")?;
    writeln!(toml, "# se {}", fmt17(fit.amplitude_se))?;
    writeln!(toml, "amplitude_mw = {}", fmt17(spec.amplitude))?;
    writeln!(toml, "frequency_per_h = {}", fmt17(spec.frequency))?;
    writeln!(toml, "# se {}", fmt17(fit.phase_se))?;
    writeln!(toml, "phase_h = {}", fmt17(spec.phase))?;
    writeln!(toml, "# se {}", fmt17(ou.mean_reversion_se))?;
    writeln!(toml, "mean_reversion_per_h = {}", fmt17(ou.params.mean_reversion))?;
    writeln!(toml, "# se {}", fmt17(ou.volatility_se))?;
    writeln!(toml, "volatility_per_sqrt_h = {}", fmt17(ou.params.volatility))?;
    writeln!(toml)?;

    Ok(json!({
        "input": path.display().to_string(),
        "samples": sample.len(),
        "spacing_h": sample.spacing(),
        "daylight_runs": fit.segments.len(),
        "amplitude_mw": {"estimate": spec.amplitude, "se": fit.amplitude_se},
        "frequency_per_h": spec.frequency,
        "phase_h": {"estimate": spec.phase, "se": fit.phase_se},
        "mean_reversion_per_h": {"estimate": ou.params.mean_reversion, "se": ou.mean_reversion_se},
        "volatility_per_sqrt_h": {"estimate": ou.params.volatility, "se": ou.volatility_se},
        "lag_coefficient": ou.lag_coefficient,
    }))
}

pub fn calibrate(rc: &RunConfig, args: &CalibrateArgs) -> Result<()> {
    let started = Instant::now();
    let c = &rc.calibration;
    let price = args.price.clone().or_else(|| c.price_csv.clone());
    let demand = args.demand.clone().or_else(|| c.demand_csv.clone());
    let pv = args.pv.clone().or_else(|| c.pv_csv.clone());
    if price.is_none() && demand.is_none() && pv.is_none() {
        bail!("nothing to calibrate: give --price, --demand or --pv (or calibrate.*_csv keys)");
    }

    let mut toml = String::from("# Estimates with standard errors in the preceding comment.\n\n");
    let mut report = serde_json::Map::new();
    if let Some(p) = &price {
        let v = calibrate_seasonal("price", p, &c.price_frequencies, &mut toml)?;
        report.insert("price".into(), v);
    }
    if let Some(p) = &demand {
        let v = calibrate_seasonal("demand", p, &c.demand_frequencies, &mut toml)?;
        report.insert("demand".into(), v);
    }
    if let Some(p) = &pv {
        let v = calibrate_pv(p, c.pv_frequency, &mut toml)?;
        report.insert("pv".into(), v);
    }

    let mut bundle = Bundle::create(&rc.out)?;
    bundle.write("calibrated.toml", toml.as_bytes())?;
    bundle.write_json("calibration.json", &report)?;
    bundle.write_json("run_metadata.json", &run_metadata("calibrate", started))?;
    let manifest = bundle.finish()?;
    print!("{toml}");
    info!("manifest written to {}", manifest.display());
    Ok(())
}

// ---------------------------------------------------------------- solve

fn slice_times(rc: &RunConfig) -> Result<Vec<f64>> {
    let mut times = Vec::with_capacity(rc.slice_times.len());
    for s in &rc.slice_times {
        let t = parse_time(s).context("slice time")?;
        if t > rc.model.horizon + HULL_TOLERANCE {
            bail!("slice time {s} lies beyond the horizon {} h", rc.model.horizon);
        }
        times.push(t);
    }
    Ok(times)
}

fn slice_csv(field: &ValueField<f64>, policy: &selfcons::hjb::PolicyField<f64>, i: usize) -> String {
    let g = &field.grid;
    let mut out = String::from("p,s,value_eur,a_star,c_star_mw,regime\n");
    for n in 0..g.n_p {
        for k in 0..g.n_s {
            let (action, regime) = policy.at(i, n, k);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(g.p(n)),
                fmt17(g.s(k)),
                fmt17(field.at(i, n, k)),
                fmt17(action.charge_fraction),
                fmt17(action.discharge_power),
                regime
            );
        }
    }
    out
}

/// Value differences between two solutions at the nodes of `coarse` that
/// both fields cover, one entry per requested time.
fn convergence(coarse: &ValueField<f64>, fine: &ValueField<f64>, times: &[f64]) -> Vec<Value> {
    let g = &coarse.grid;
    times
        .iter()
        .map(|&t| {
            let (mut max_abs, mut sum_sq, mut count) = (0.0f64, 0.0, 0usize);
            for n in 0..g.n_p {
                for k in 0..g.n_s {
                    let (p, s) = (g.p(n), g.s(k));
                    if let (Ok(a), Ok(b)) = (coarse.value_at(t, p, s), fine.value_at(t, p, s)) {
                        let d = a - b;
                        max_abs = max_abs.max(d.abs());
                        sum_sq += d * d;
                        count += 1;
                    }
                }
            }
            json!({
                "time_h": t,
                "nodes": count,
                "max_abs_delta_eur": max_abs,
                "rms_delta_eur": if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 },
            })
        })
        .collect()
}

pub fn solve(rc: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let model = &rc.model;
    let grid = rc.solver_grid()?;
    let times = slice_times(rc)?;
    let options = SolveOptions {
        dense_controls: rc.dense_controls,
        paper_verbatim_stencil: rc.paper_verbatim_stencil,
    };
    let cfl = selfcons::hjb::cfl_number(model, &grid);
    info!("solving on {}", grid_summary(&grid, cfl));
    let solution = solve_hjb(model, &grid, &options)
        .with_context(|| format!("solver failed on {}", grid_summary(&grid, cfl)))?;
    let hash = model.config_hash();

    let mut bundle = Bundle::create(&rc.out)?;
    bundle.write_with(CHECKPOINT, |path| {
        Ok(write_checkpoint(path, &solution.value, &hash)?)
    })?;

    let mut slices = Vec::new();
    for (&t, text) in times.iter().zip(&rc.slice_times) {
        let i = grid
            .nearest_slice(t)
            .with_context(|| format!("no slice near {t} h"))?;
        let name = format!("slice_{}.csv", label(t));
        bundle.write(&name, slice_csv(&solution.value, &solution.policy, i).as_bytes())?;
        slices.push(json!({
            "requested": text,
            "requested_h": t,
            "slice": i,
            "time_h": grid.time(i),
            "file": name,
        }));
    }

    let shape = solution.value.check_shape(0.0);
    let relative = shape.relative_failures(SHAPE_RELATIVE_TOLERANCE).len();
    let diagnostics = json!({
        "config_hash": hash,
        "grid": grid_json(&grid),
        "cfl": cfl,
        "dense_controls": rc.dense_controls,
        "paper_verbatim_stencil": rc.paper_verbatim_stencil,
        "value_at_start_eur": {
            "p": model.initial_log_pv,
            "s_max": solution.value.value_at(0.0, model.initial_log_pv.clamp(grid.p_min, grid.p_max), grid.s_max).ok(),
            "s_min": solution.value.value_at(0.0, model.initial_log_pv.clamp(grid.p_min, grid.p_max), grid.s_min).ok(),
        },
        "shape": {
            "relative_tolerance": SHAPE_RELATIVE_TOLERANCE,
            "slices_over_relative_tolerance": relative,
            "worst": shape.worst(),
        },
        "slices": slices,
    });
    bundle.write_json("diagnostics.json", &diagnostics)?;

    let mut grids = json!({ "solved": grid_json(&grid) });
    if rc.grid != GridSpec::default() {
        let reference_grid = GridSpec::default().build(model)?;
        info!("solving the reference grid for the convergence report");
        let reference = solve_hjb(model, &reference_grid, &options).with_context(|| {
            format!(
                "reference solve failed on {}",
                grid_summary(&reference_grid, selfcons::hjb::cfl_number(model, &reference_grid))
            )
        })?;
        let (coarse, fine) = if grid.time_step >= reference_grid.time_step {
            (&solution.value, &reference.value)
        } else {
            (&reference.value, &solution.value)
        };
        let report = json!({
            "solved": grid_json(&grid),
            "reference": grid_json(&reference_grid),
            "deltas": convergence(coarse, fine, &times),
        });
        bundle.write_json("convergence.json", &report)?;
        grids["reference"] = grid_json(&reference_grid);
    }
    bundle.section("grids", &grids)?;
    bundle.section("config_hash", &hash)?;
    bundle.write_json("run_metadata.json", &run_metadata("solve", started))?;
    bundle.finish()?;

    if relative > 0 {
        warn!("{relative} slices violate the shape checks beyond relative tolerance {SHAPE_RELATIVE_TOLERANCE}");
    }
    println!(
        "solved {} in {:.2} s; {} slices written to {}",
        grid_summary(&grid, cfl),
        started.elapsed().as_secs_f64(),
        times.len(),
        rc.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- simulate

fn load_field(rc: &RunConfig, explicit: Option<&Path>) -> Result<ValueField<f64>> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| rc.checkpoint.clone())
        .unwrap_or_else(|| rc.out.join(CHECKPOINT));
    let (header, field) =
        read_checkpoint(&path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    header
        .verify_hash(&rc.model.config_hash())
        .with_context(|| format!("{} does not belong to this config", path.display()))?;
    Ok(field)
}

fn estimate_json(name: &str, e: &McEstimate<f64>) -> Value {
    json!({
        "policy": name,
        "mean_eur": e.mean,
        "standard_error_eur": e.standard_error,
        "paths": e.n_paths,
    })
}

pub fn simulate(rc: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let seed = rc.require_seed()?;
    let model = &rc.model;
    let field = load_field(rc, checkpoint)?;
    let g = field.grid;
    let start = McStart {
        t0: rc.start_time,
        x0: model.fixed_log_price,
        d0: model.fixed_log_demand,
        p0: rc.start_log_pv.unwrap_or(model.initial_log_pv),
        s0: rc.start_soc.unwrap_or(model.battery.soc_max),
    };
    if !(start.t0 < model.horizon) {
        bail!("simulation start {} h must precede the horizon {} h", start.t0, model.horizon);
    }
    let step = rc.simulation_step.unwrap_or(g.time_step);
    let time_grid = TimeGrid::spanning(start.t0, model.horizon, step)?;
    let settings = McSettings::default();

    let extracted = ExtractedPolicy::new(model, &field).with_market_grid(&time_grid);
    let mut rows = vec![(
        "extracted".to_string(),
        mc_cost(&start, &extracted, model, &time_grid, rc.paths, seed, &settings)?,
    )];
    for kind in [Baseline::Idle, Baseline::AlwaysDischarge, Baseline::NoBattery] {
        let policy = BaselinePolicy::new(kind, model);
        let e = mc_cost(&start, &policy, model, &time_grid, rc.paths, seed, &settings)?;
        rows.push((kind.name().to_string(), e));
    }

    let mut csv = String::from("policy,mean_eur,standard_error_eur,paths\n");
    for (name, e) in &rows {
        writeln!(
            csv,
            "{name},{},{},{}",
            fmt17(e.mean),
            fmt17(e.standard_error),
            e.n_paths
        )?;
    }
    let hjb_value = field.value_at(start.t0, start.p0.clamp(g.p_min, g.p_max), start.s0).ok();
    let best = &rows[0].1;
    let dominated: Vec<&str> = rows[1..]
        .iter()
        .filter(|(_, e)| best.mean > e.mean + 2.0 * (best.standard_error.hypot(e.standard_error)))
        .map(|(n, _)| n.as_str())
        .collect();
    let summary = json!({
        "seed": seed,
        "start": {"t0_h": start.t0, "p0": start.p0, "s0_mwh": start.s0},
        "time_grid": {"start_h": time_grid.start, "step_h": time_grid.step, "nodes": time_grid.count},
        "estimates": rows.iter().map(|(n, e)| estimate_json(n, e)).collect::<Vec<_>>(),
        "hjb_value_eur": hjb_value,
        "mc_minus_hjb_eur": hjb_value.map(|v| best.mean - v),
        "baselines_beating_extracted": dominated,
    });

    let mut bundle = Bundle::create(&rc.out)?;
    bundle.write("comparison.csv", csv.as_bytes())?;
    bundle.write_json("simulation.json", &summary)?;
    bundle.write_json("run_metadata.json", &run_metadata("simulate", started))?;
    bundle.finish()?;
    if !dominated.is_empty() {
        warn!("baselines beating the extracted policy by more than 2 SE: {dominated:?}");
    }
    print!("{csv}");
    Ok(())
}

// ---------------------------------------------------------------- policy

fn in_hull(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !(v >= lo - HULL_TOLERANCE && v <= hi + HULL_TOLERANCE) {
        return Err(Error::ExtrapolationRefused(format!("{name} = {v} outside [{lo}, {hi}]")).into());
    }
    Ok(())
}

pub fn policy(rc: &RunConfig, checkpoint: Option<&Path>) -> Result<Value> {
    let q = rc.query;
    let t = q.time.context("a time is required: pass --time or set policy.t")?;
    let s = q.soc.context("a state of charge is required: pass --soc or set policy.s_mwh")?;
    let p = q.log_pv.unwrap_or(rc.model.initial_log_pv);
    let field = load_field(rc, checkpoint)?;
    let g = field.grid;
    in_hull("t", t, 0.0, g.horizon)?;
    in_hull("p", p, g.p_min, g.p_max)?;
    in_hull("s", s, g.s_min, g.s_max)?;
    let (t, p, s) = (t.clamp(0.0, g.horizon), p.clamp(g.p_min, g.p_max), s.clamp(g.s_min, g.s_max));

    let extracted = ExtractedPolicy::new(&rc.model, &field);
    let d = extracted.decide(t, p, s)?;
    let value = field.value_at(t, p, s)?;
    Ok(json!({
        "time_h": t,
        "log_pv": p,
        "soc_mwh": s,
        "charge_fraction": d.decision.action.charge_fraction,
        "discharge_mw": d.decision.action.discharge_power,
        "regime": d.decision.regime.as_str(),
        "case": d.decision.case.to_string(),
        "capped": d.decision.capped,
        "gauges": {
            "q_c": d.gauges.charge,
            "q_cz": d.gauges.charge_incent,
            "q_d": d.gauges.discharge,
            "q_dz": d.gauges.discharge_incent,
        },
        "slopes": {"charge": d.slopes.charge, "discharge": d.slopes.discharge},
        "production_mw": d.production,
        "demand_mw": d.demand,
        "price_eur_per_mwh": d.price,
        "value_eur": value,
    }))
}

// ---------------------------------------------------------------- report

fn read_json(bundle: &Bundle, name: &str) -> Result<Option<Value>> {
    if !bundle.manifest.files.contains_key(name) {
        return Ok(None);
    }
    let text = std::fs::read_to_string(bundle.path(name))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("malformed {name}"))?))
}

pub fn report(rc: &RunConfig) -> Result<()> {
    let mut bundle = Bundle::open(&rc.out)?;
    bundle.verify()?;
    let mut text = String::new();
    writeln!(text, "bundle {}", rc.out.display())?;
    writeln!(text, "files verified: {}", bundle.manifest.files.len())?;

    if let Some(d) = read_json(&bundle, "diagnostics.json")? {
        let nodes = &d["grid"]["nodes"];
        writeln!(text, "\nsolve")?;
        writeln!(text, "  grid nodes {nodes}, CFL {:.4}", d["cfl"].as_f64().unwrap_or(f64::NAN))?;
        writeln!(
            text,
            "  slices over shape tolerance: {}",
            d["shape"]["slices_over_relative_tolerance"]
        )?;
        if let Some(w) = d["shape"]["worst"].as_object() {
            writeln!(
                text,
                "  worst shape violation at t = {} h: s-monotone {:.3e}, s-convex {:.3e}, p-monotone {:.3e}",
                w["time"], w["s_monotonicity"].as_f64().unwrap_or(0.0),
                w["s_convexity"].as_f64().unwrap_or(0.0),
                w["p_monotonicity"].as_f64().unwrap_or(0.0)
            )?;
        }
        for s in d["slices"].as_array().into_iter().flatten() {
            writeln!(
                text,
                "  slice {} -> {}",
                s["requested"].as_str().unwrap_or("?"),
                s["file"].as_str().unwrap_or("?")
            )?;
        }
    }
    if let Some(c) = read_json(&bundle, "convergence.json")? {
        writeln!(text, "\nconvergence against the reference grid")?;
        for d in c["deltas"].as_array().into_iter().flatten() {
            writeln!(
                text,
                "  t = {:>7.3} h: max |dV| {:.4e} EUR, rms {:.4e} EUR",
                d["time_h"].as_f64().unwrap_or(f64::NAN),
                d["max_abs_delta_eur"].as_f64().unwrap_or(f64::NAN),
                d["rms_delta_eur"].as_f64().unwrap_or(f64::NAN)
            )?;
        }
    }
    if let Some(s) = read_json(&bundle, "simulation.json")? {
        writeln!(text, "\nsimulation (seed {})", s["seed"])?;
        for e in s["estimates"].as_array().into_iter().flatten() {
            writeln!(
                text,
                "  {:<18} {:>12.4} EUR  +- {:.4}",
                e["policy"].as_str().unwrap_or("?"),
                e["mean_eur"].as_f64().unwrap_or(f64::NAN),
                e["standard_error_eur"].as_f64().unwrap_or(f64::NAN)
            )?;
        }
        if let Some(v) = s["hjb_value_eur"].as_f64() {
            writeln!(text, "  HJB value at start {v:.4} EUR, MC - HJB {:.4} EUR", s["mc_minus_hjb_eur"].as_f64().unwrap_or(f64::NAN))?;
        }
    }
    if let Some(c) = read_json(&bundle, "calibration.json")? {
        writeln!(text, "\ncalibration")?;
        for (series, v) in c.as_object().into_iter().flatten() {
            writeln!(
                text,
                "  {series}: xi {:.5} +- {:.5} /h, sigma {:.5} +- {:.5}",
                v["mean_reversion_per_h"]["estimate"].as_f64().unwrap_or(f64::NAN),
                v["mean_reversion_per_h"]["se"].as_f64().unwrap_or(f64::NAN),
                v["volatility_per_sqrt_h"]["estimate"].as_f64().unwrap_or(f64::NAN),
                v["volatility_per_sqrt_h"]["se"].as_f64().unwrap_or(f64::NAN)
            )?;
        }
    }

    bundle.write("report.txt", text.as_bytes())?;
    bundle.finish()?;
    print!("{text}");
    Ok(())
}

/// One-line summary of a model config.
pub fn describe(model: &ModelConfig<f64>) -> String {
    format!(
        "config {} (horizon {} h, incentive {} EUR/MWh, {} MWh usable)",
        &model.config_hash()[..12],
        model.horizon,
        model.incentive,
        model.battery.capacity()
    )
}
