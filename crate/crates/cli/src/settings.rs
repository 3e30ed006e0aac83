//! Run configuration: a TOML file with flat dotted keys layered over the
//! built-in daily experiment, then command-line flags layered over that.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use selfcons::hjb::SolverGrid;
use selfcons::model::{defaults, Harmonic, ModelConfig, OuParams, SeasonalSpec};

use crate::times::parse_time;

pub const DEFAULT_PRICE_LEVEL: f64 = 150.0;
pub const DEFAULT_INCENTIVE: f64 = 110.0;
pub const DEFAULT_SLICE_TIMES: [&str; 5] = ["03:43", "07:26", "12:00", "16:08", "19:01"];
pub const DEFAULT_PATHS: usize = 10_000;

/// Grid spacing and p-range; counts follow from the battery and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub time_step: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub p_step: f64,
    pub s_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            time_step: defaults::TIME_STEP_H,
            p_min: -0.6,
            p_max: 0.6,
            p_step: defaults::LOG_PV_STEP,
            s_step: defaults::SOC_STEP_MWH,
        }
    }
}

impl GridSpec {
    pub fn build(&self, config: &ModelConfig<f64>) -> Result<SolverGrid<f64>> {
        SolverGrid::new(
            self.time_step,
            self.p_min,
            self.p_max,
            self.p_step,
            self.s_step,
            &config.battery,
            config.horizon,
        )
        .context("invalid solver grid")
    }
}

#[derive(Debug, Clone, Default)]
pub struct CalibrationInputs {
    pub price_csv: Option<PathBuf>,
    pub demand_csv: Option<PathBuf>,
    pub pv_csv: Option<PathBuf>,
    pub price_frequencies: Vec<f64>,
    pub demand_frequencies: Vec<f64>,
    pub pv_frequency: f64,
}

/// State queried by the `policy` command.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyQuery {
    pub time: Option<f64>,
    pub log_pv: Option<f64>,
    pub soc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig<f64>,
    pub grid: GridSpec,
    pub seed: Option<u64>,
    pub paths: usize,
    pub out: PathBuf,
    pub slice_times: Vec<String>,
    pub dense_controls: Option<usize>,
    pub paper_verbatim_stencil: bool,
    pub checkpoint: Option<PathBuf>,
    pub start_time: f64,
    pub start_log_pv: Option<f64>,
    pub start_soc: Option<f64>,
    /// Monte Carlo step; defaults to the solver time step.
    pub simulation_step: Option<f64>,
    pub query: PolicyQuery,
    pub calibration: CalibrationInputs,
}

impl RunConfig {
    pub fn defaults() -> Self {
        let harmonic_freqs = |table: &[(f64, f64, f64)]| table.iter().map(|h| h.0).collect();
        Self {
            model: defaults::config(DEFAULT_PRICE_LEVEL.ln(), DEFAULT_INCENTIVE),
            grid: GridSpec::default(),
            seed: None,
            paths: DEFAULT_PATHS,
            out: PathBuf::from("out"),
            slice_times: DEFAULT_SLICE_TIMES.iter().map(|s| s.to_string()).collect(),
            dense_controls: None,
            paper_verbatim_stencil: false,
            checkpoint: None,
            start_time: 0.0,
            start_log_pv: None,
            start_soc: None,
            simulation_step: None,
            query: PolicyQuery::default(),
            calibration: CalibrationInputs {
                price_frequencies: harmonic_freqs(&defaults::PRICE_HARMONICS),
                demand_frequencies: harmonic_freqs(&defaults::DEMAND_HARMONICS),
                pv_frequency: 1.0 / 24.0,
                ..Default::default()
            },
        }
    }

    /// Defaults overridden by the file at `path`. Relative paths inside the
    /// file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().context("malformed TOML")?;
        let mut keys = Keys::new(&table);
        let mut rc = Self::defaults();
        rc.apply(&mut keys, base)?;
        keys.finish()?;
        rc.model.validate()?;
        Ok(rc)
    }

    fn apply(&mut self, k: &mut Keys, base: &Path) -> Result<()> {
        let m = &mut self.model;
        set(&mut m.horizon, k.f64("model.horizon_h")?);
        set(&mut m.incentive, k.f64("model.incentive_eur_per_mwh")?);
        set(&mut m.discount_rate, k.f64("model.discount_rate_per_h")?);

        m.price_seasonal = seasonal(k, "price", &m.price_seasonal)?;
        if let Some(level) = k.f64("price.level_eur_per_mwh")? {
            if k.seen("price.intercept") {
                bail!("price.level_eur_per_mwh and price.intercept are exclusive");
            }
            if !(level > 0.0) {
                bail!("price.level_eur_per_mwh must be > 0");
            }
            m.price_seasonal.intercept = level.ln();
        }
        m.demand_seasonal = seasonal(k, "demand", &m.demand_seasonal)?;
        if let Some(min) = k.f64("demand.minimum_mw")? {
            if k.seen("demand.intercept") {
                bail!("demand.minimum_mw and demand.intercept are exclusive");
            }
            if !(min > 0.0) {
                bail!("demand.minimum_mw must be > 0");
            }
            m.demand_seasonal = SeasonalSpec::with_minimum(m.demand_seasonal.harmonics.clone(), min)?;
        }
        m.price_ou = ou(k, "price", m.price_ou)?;
        m.demand_ou = ou(k, "demand", m.demand_ou)?;
        m.pv_ou = ou(k, "pv", m.pv_ou)?;
        set(&mut m.fixed_log_price, k.f64("price.initial_log")?);
        set(&mut m.fixed_log_demand, k.f64("demand.initial_log")?);
        set(&mut m.initial_log_pv, k.f64("pv.initial_log")?);

        set(&mut m.pv_seasonal.amplitude, k.f64("pv.amplitude_mw")?);
        set(&mut m.pv_seasonal.frequency, k.f64("pv.frequency_per_h")?);
        set(&mut m.pv_seasonal.phase, k.f64("pv.phase_h")?);

        if let Some(rows) = k.matrix("noise.factor")? {
            m.noise_correlation = rows;
        }

        let mut unit = defaults::battery::<f64>();
        set(&mut unit.charge_eff, k.f64("battery.eta_c")?);
        set(&mut unit.discharge_eff, k.f64("battery.eta_d")?);
        set(&mut unit.max_charge_power, k.f64("battery.alpha_max_mw")?);
        set(&mut unit.max_discharge_power, k.f64("battery.gamma_mw")?);
        set(&mut unit.soc_min, k.f64("battery.s_min_mwh")?);
        set(&mut unit.soc_max, k.f64("battery.s_max_mwh")?);
        let count = k.usize("battery.count")?.unwrap_or(defaults::BATTERIES_IN_PARALLEL);
        if count == 0 {
            bail!("battery.count must be >= 1");
        }
        m.battery = unit.parallel(count);

        let g = &mut self.grid;
        set(&mut g.time_step, k.f64("grid.time_step_h")?);
        set(&mut g.p_min, k.f64("grid.p_min")?);
        set(&mut g.p_max, k.f64("grid.p_max")?);
        set(&mut g.p_step, k.f64("grid.p_step")?);
        set(&mut g.s_step, k.f64("grid.s_step_mwh")?);

        if let Some(seed) = k.usize("run.seed")? {
            self.seed = Some(seed as u64);
        }
        set(&mut self.paths, k.usize("run.paths")?);
        if let Some(out) = k.str("run.out")? {
            self.out = base.join(out);
        }
        if let Some(times) = k.str_list("run.slice_times")? {
            self.slice_times = times;
        }
        if let Some(n) = k.usize("run.dense_controls")? {
            self.dense_controls = Some(n);
        }
        set(&mut self.paper_verbatim_stencil, k.bool("run.paper_verbatim_stencil")?);
        if let Some(p) = k.str("run.checkpoint")? {
            self.checkpoint = Some(base.join(p));
        }

        if let Some(t) = k.time("simulate.t0")? {
            self.start_time = t;
        }
        if let Some(p) = k.f64("simulate.p0")? {
            self.start_log_pv = Some(p);
        }
        if let Some(s) = k.f64("simulate.s0_mwh")? {
            self.start_soc = Some(s);
        }
        if let Some(dt) = k.f64("simulate.step_h")? {
            self.simulation_step = Some(dt);
        }

        self.query.time = k.time("policy.t")?.or(self.query.time);
        self.query.log_pv = k.f64("policy.p")?.or(self.query.log_pv);
        self.query.soc = k.f64("policy.s_mwh")?.or(self.query.soc);

        let c = &mut self.calibration;
        c.price_csv = k.str("calibrate.price_csv")?.map(|p| base.join(p)).or(c.price_csv.take());
        c.demand_csv = k.str("calibrate.demand_csv")?.map(|p| base.join(p)).or(c.demand_csv.take());
        c.pv_csv = k.str("calibrate.pv_csv")?.map(|p| base.join(p)).or(c.pv_csv.take());
        if let Some(f) = k.f64_list("calibrate.price_frequencies")? {
            c.price_frequencies = f;
        }
        if let Some(f) = k.f64_list("calibrate.demand_frequencies")? {
            c.demand_frequencies = f;
        }
        set(&mut c.pv_frequency, k.f64("calibrate.pv_frequency_per_h")?);
        Ok(())
    }

    pub fn solver_grid(&self) -> Result<SolverGrid<f64>> {
        self.grid.build(&self.model)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| anyhow!("a seed is required: pass --seed N or set run.seed"))
    }
}

fn set<V>(slot: &mut V, value: Option<V>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn seasonal(k: &mut Keys, prefix: &str, current: &SeasonalSpec<f64>) -> Result<SeasonalSpec<f64>> {
    let intercept = k.f64(&format!("{prefix}.intercept"))?.unwrap_or(current.intercept);
    let freqs = k.f64_list(&format!("{prefix}.frequencies"))?;
    let sine = k.f64_list(&format!("{prefix}.sine"))?;
    let cosine = k.f64_list(&format!("{prefix}.cosine"))?;
    let harmonics = match (freqs, sine, cosine) {
        (None, None, None) => current.harmonics.clone(),
        (Some(f), Some(a), Some(b)) => {
            if f.len() != a.len() || f.len() != b.len() {
                bail!("{prefix}.frequencies, .sine and .cosine must have equal lengths");
            }
            f.iter()
                .zip(&a)
                .zip(&b)
                .map(|((&f, &a), &b)| Harmonic::new(f, a, b))
                .collect()
        }
        _ => bail!("{prefix}.frequencies, .sine and .cosine must be given together"),
    };
    Ok(SeasonalSpec::new(intercept, harmonics)?)
}

fn ou(k: &mut Keys, prefix: &str, current: OuParams<f64>) -> Result<OuParams<f64>> {
    Ok(OuParams::new(
        k.f64(&format!("{prefix}.mean_reversion_per_h"))?.unwrap_or(current.mean_reversion),
        k.f64(&format!("{prefix}.volatility_per_sqrt_h"))?.unwrap_or(current.volatility),
    ))
}

/// Flattened `a.b.c -> value` view of a TOML table that remembers which keys
/// were read, so that misspelt keys are reported instead of ignored.
struct Keys {
    values: BTreeMap<String, toml::Value>,
    used: Vec<String>,
}

impl Keys {
    fn new(table: &toml::Table) -> Self {
        let mut values = BTreeMap::new();
        flatten("", table, &mut values);
        Self {
            values,
            used: Vec::new(),
        }
    }

    fn seen(&self, key: &str) -> bool {
        self.used.iter().any(|k| k == key)
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        let v = self.values.get(key).cloned();
        if v.is_some() {
            self.used.push(key.to_string());
        }
        v
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key).map(|v| number(key, &v)).transpose()
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(v) => bail!("{key}: expected a non-negative integer, got {v}"),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => bail!("{key}: expected true or false, got {v}"),
        }
    }

    fn str(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => bail!("{key}: expected a string, got {v}"),
        }
    }

    fn str_or_number(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v @ (toml::Value::Float(_) | toml::Value::Integer(_))) => Ok(Some(v.to_string())),
            Some(v) => bail!("{key}: expected a time, got {v}"),
        }
    }

    fn time(&mut self, key: &str) -> Result<Option<f64>> {
        self.str_or_number(key)?
            .map(|s| parse_time(&s).with_context(|| key.to_string()))
            .transpose()
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<toml::Value>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => Ok(Some(a)),
            Some(v) => bail!("{key}: expected an array, got {v}"),
        }
    }

    fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.list(key)?
            .map(|a| a.iter().map(|v| number(key, v)).collect())
            .transpose()
    }

    fn str_list(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        self.list(key)?
            .map(|a| {
                a.into_iter()
                    .map(|v| match v {
                        toml::Value::String(s) => Ok(s),
                        toml::Value::Float(_) | toml::Value::Integer(_) => Ok(v.to_string()),
                        other => bail!("{key}: expected strings, got {other}"),
                    })
                    .collect()
            })
            .transpose()
    }

    fn matrix(&mut self, key: &str) -> Result<Option<[[f64; 3]; 3]>> {
        let Some(rows) = self.list(key)? else {
            return Ok(None);
        };
        if rows.len() != 3 {
            bail!("{key}: expected 3 rows");
        }
        let mut out = [[0.0; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            let cells = row
                .as_array()
                .filter(|r| r.len() == 3)
                .ok_or_else(|| anyhow!("{key}: row {i} must have 3 entries"))?;
            for (j, c) in cells.iter().enumerate() {
                out[i][j] = number(key, c)?;
            }
        }
        Ok(Some(out))
    }

    fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.values.keys().filter(|k| !self.seen(k)).collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            bail!("unknown config keys: {}", list.join(", "));
        }
        Ok(())
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => bail!("{key}: expected a number, got {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml(text, Path::new("/cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let rc = parse("").unwrap();
        assert_eq!(rc.model, RunConfig::defaults().model);
        assert_eq!(rc.slice_times.len(), 5);
        assert!(rc.seed.is_none());
    }

    #[test]
    fn shipped_daily_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/daily.toml");
        let rc = RunConfig::load(&path).unwrap();
        let d = RunConfig::defaults();
        assert_eq!(rc.model.price_seasonal, d.model.price_seasonal);
        assert_eq!(rc.model.demand_seasonal, d.model.demand_seasonal);
        assert_eq!(rc.model.pv_seasonal, d.model.pv_seasonal);
        assert_eq!(rc.model.pv_ou, d.model.pv_ou);
        assert_eq!(rc.model, d.model);
        assert_eq!(rc.model.config_hash(), d.model.config_hash());
        assert_eq!(rc.grid, d.grid);
    }

    #[test]
    fn dotted_and_sectioned_keys_agree() {
        let a = parse("battery.eta_c = 0.95\nbattery.count = 1\n").unwrap();
        let b = parse("[battery]\neta_c = 0.95\ncount = 1\n").unwrap();
        assert_eq!(a.model.battery, b.model.battery);
        assert_eq!(a.model.battery.charge_eff, 0.95);
        assert_eq!(a.model.battery.max_discharge_power, defaults::MAX_DISCHARGE_MW);
    }

    #[test]
    fn battery_count_scales_limits() {
        let rc = parse("battery.count = 3").unwrap();
        assert!((rc.model.battery.soc_max - 0.09).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_reported() {
        let err = parse("battery.eta_x = 0.9").unwrap_err();
        assert!(format!("{err:#}").contains("battery.eta_x"), "{err:#}");
    }

    #[test]
    fn price_level_sets_intercept() {
        let rc = parse("price.level_eur_per_mwh = 80").unwrap();
        assert!((rc.model.price_seasonal.intercept - 80f64.ln()).abs() < 1e-15);
        assert!(parse("price.level_eur_per_mwh = 80\nprice.intercept = 4.0").is_err());
    }

    #[test]
    fn harmonics_must_come_together() {
        assert!(parse("price.frequencies = [0.1]").is_err());
        let rc = parse("price.frequencies = [0.1]\nprice.sine = [0.2]\nprice.cosine = [0]").unwrap();
        assert_eq!(rc.model.price_seasonal.harmonics, vec![Harmonic::new(0.1, 0.2, 0.0)]);
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let rc = parse("run.out = \"res\"\ncalibrate.price_csv = \"p.csv\"").unwrap();
        assert_eq!(rc.out, PathBuf::from("/cfg/res"));
        assert_eq!(rc.calibration.price_csv, Some(PathBuf::from("/cfg/p.csv")));
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(parse("run.seed = -1").is_err());
        assert!(parse("run.paper_verbatim_stencil = 1").is_err());
        assert!(parse("model.incentive_eur_per_mwh = \"x\"").is_err());
        assert!(parse("noise.factor = [[1, 0], [0, 1]]").is_err());
    }

    #[test]
    fn simulate_start_accepts_clock_time() {
        let rc = parse("simulate.t0 = \"06:30\"").unwrap();
        assert_eq!(rc.start_time, 6.5);
    }
}
