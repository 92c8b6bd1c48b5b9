//! Monte Carlo sweeps over transmit power, configuration handling and
//! result files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{block_rates, fit_sdof, leakage_mi, leakage_slope, GaussianBlockModel, LeakageRecord, RatePoint, SdofFit, SecrecyPair};
use crate::channel::{sample_channel, tx_view, ChannelRealization, CsitSchedule, CsitState, ScheduleLayout};
use crate::precoding::{allocate_powers, BlockPrecoder, PowerPolicy};
use crate::scheme::{effective_gains, GainTable, SchemeVariant};
use crate::seed::{derive_seed, domain};

/// Reference pre-log values.
pub struct ReferenceTable;

impl ReferenceTable {
    /// Sum secure degrees of freedom with `users` receivers.
    pub fn theorem2(users: usize) -> f64 {
        (2.0 * users as f64 - 1.0) / 2.0
    }

    /// The three-user value.
    pub const COROLLARY1: f64 = 2.5;
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub users: usize,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub variant: SchemeVariant,
    pub layout: ScheduleLayout,
    pub power_policy: PowerPolicy,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            users: 3,
            snr_start_db: 60.0,
            snr_stop_db: 140.0,
            snr_step_db: 10.0,
            trials: 200,
            seed: 0,
            variant: SchemeVariant::SecureAlternating,
            layout: ScheduleLayout::Interleaved,
            power_policy: PowerPolicy::HalfToNoise,
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

impl ExperimentConfig {
    /// `start, start + step, ...` up to and including `stop`.
    pub fn snr_grid_db(&self) -> Vec<f64> {
        let n = ((self.snr_stop_db - self.snr_start_db) / self.snr_step_db + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.snr_start_db + i as f64 * self.snr_step_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("simulation failed: {0}")]
    Simulation(String),
}

pub const CONFIG_KEYS: [&str; 11] = [
    "users",
    "snr_start_db",
    "snr_stop_db",
    "snr_step_db",
    "trials",
    "seed",
    "variant",
    "layout",
    "power_policy",
    "format",
    "out",
];

fn parse_enum<T: serde::de::DeserializeOwned>(v: &Value) -> Option<T> {
    serde_json::from_value(v.clone()).ok()
}

/// Builds a config from flat key/value input, applying defaults for
/// missing keys and reporting every invalid field at once.
pub fn validate_config(raw: &Map<String, Value>) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let mut cfg = ExperimentConfig::default();
    let mut errors = Vec::new();

    for key in raw.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            errors.push(ConfigError::new(key, "unknown field"));
        }
    }
    let number = |key: &str, errors: &mut Vec<ConfigError>| -> Option<f64> {
        let v = raw.get(key)?;
        match v.as_f64().filter(|x| x.is_finite()) {
            Some(x) => Some(x),
            None => {
                errors.push(ConfigError::new(key, format!("expected a finite number, got {v}")));
                None
            }
        }
    };
    let count = |key: &str, errors: &mut Vec<ConfigError>| -> Option<i64> {
        let v = raw.get(key)?;
        match v.as_i64() {
            Some(x) => Some(x),
            None => {
                errors.push(ConfigError::new(key, format!("expected an integer, got {v}")));
                None
            }
        }
    };

    if let Some(k) = count("users", &mut errors) {
        if k < 2 {
            errors.push(ConfigError::new("users", "users must be ≥ 2"));
        } else {
            cfg.users = k as usize;
        }
    }
    if let Some(x) = number("snr_start_db", &mut errors) {
        cfg.snr_start_db = x;
    }
    if let Some(x) = number("snr_stop_db", &mut errors) {
        cfg.snr_stop_db = x;
    }
    if let Some(x) = number("snr_step_db", &mut errors) {
        cfg.snr_step_db = x;
    }
    if (raw.contains_key("snr_start_db") || raw.contains_key("snr_stop_db")) && cfg.snr_stop_db <= cfg.snr_start_db {
        errors.push(ConfigError::new("snr_stop_db", "snr_stop_db must be greater than snr_start_db"));
    }
    if cfg.snr_step_db <= 0.0 {
        errors.push(ConfigError::new("snr_step_db", "snr_step_db must be positive"));
    }
    if let Some(t) = count("trials", &mut errors) {
        if t < 1 {
            errors.push(ConfigError::new("trials", "trials must be ≥ 1"));
        } else {
            cfg.trials = t as usize;
        }
    }
    if let Some(v) = raw.get("seed") {
        match v.as_u64() {
            Some(s) => cfg.seed = s,
            None => errors.push(ConfigError::new("seed", format!("expected an unsigned 64-bit integer, got {v}"))),
        }
    }
    if let Some(v) = raw.get("variant") {
        match parse_enum(v) {
            Some(x) => cfg.variant = x,
            None => errors.push(ConfigError::new("variant", format!("expected SECURE_ALTERNATING or NO_NOISE_BASELINE, got {v}"))),
        }
    }
    if let Some(v) = raw.get("layout") {
        match parse_enum(v) {
            Some(x) => cfg.layout = x,
            None => errors.push(ConfigError::new("layout", format!("expected interleaved or contiguous, got {v}"))),
        }
    }
    if let Some(v) = raw.get("power_policy") {
        match parse_enum(v) {
            Some(x) => cfg.power_policy = x,
            None => errors.push(ConfigError::new("power_policy", format!("expected half_to_noise or equal_per_stream, got {v}"))),
        }
    }
    if let Some(v) = raw.get("format") {
        match parse_enum(v) {
            Some(x) => cfg.format = x,
            None => errors.push(ConfigError::new("format", format!("expected csv or json, got {v}"))),
        }
    }
    if let Some(v) = raw.get("out") {
        match v.as_str() {
            Some(s) if !s.is_empty() => cfg.out = Some(PathBuf::from(s)),
            _ => errors.push(ConfigError::new("out", format!("expected a non-empty path, got {v}"))),
        }
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Channels and beams of one block; independent of the transmit power.
#[derive(Debug, Clone)]
pub struct DrawnBlock {
    pub h_p: ChannelRealization,
    pub h_d: ChannelRealization,
    pub precoder: BlockPrecoder,
    pub gains: GainTable,
}

/// Samples block `index` of `schedule` and builds its beams from the
/// transmitter's views. The precoder carries a unit power budget.
pub fn draw_block(
    users: usize,
    channel_seed: u64,
    schedule: &CsitSchedule,
    index: usize,
    policy: PowerPolicy,
) -> Result<DrawnBlock, ExperimentError> {
    let sim = |e: &dyn fmt::Display| ExperimentError::Simulation(e.to_string());
    let (t_p, t_d) = schedule.block_slots(index);
    let h_p = sample_channel(users, channel_seed, t_p).map_err(|e| sim(&e))?;
    let h_d = sample_channel(users, channel_seed, t_d).map_err(|e| sim(&e))?;
    let p_view = tx_view(&h_p, CsitState::PAll, &[]);
    let d_view = tx_view(&h_d, CsitState::DFirst, std::slice::from_ref(&h_p));
    let powers = allocate_powers(users, 1.0, policy).map_err(|e| sim(&e))?;
    let precoder = BlockPrecoder::build(&p_view, &d_view, powers).map_err(|e| sim(&e))?;
    let gains = effective_gains(&precoder, &h_p, &h_d);
    Ok(DrawnBlock { h_p, h_d, precoder, gains })
}

/// Seed of the channel stream of a run.
pub fn channel_seed(master: u64) -> u64 {
    derive_seed(master, &[domain::CHANNEL])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub rates: RatePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub fit: Option<SdofFit>,
    pub fit_error: Option<String>,
    pub leakage_slopes: Vec<(SecrecyPair, Option<f64>)>,
    pub reference: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub points: Vec<SweepPoint>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn pairs(&self) -> Vec<SecrecyPair> {
        SecrecyPair::all(self.config.users)
    }

    pub fn leakage_slope(&self, pair: &SecrecyPair) -> Option<f64> {
        self.summary.leakage_slopes.iter().find(|(p, _)| p == pair).and_then(|(_, s)| *s)
    }
}

fn block_records(
    block: &DrawnBlock,
    cfg: &ExperimentConfig,
    grid: &[f64],
    pairs: &[SecrecyPair],
) -> Result<Vec<RatePoint>, ExperimentError> {
    let sim = |e: &dyn fmt::Display| ExperimentError::Simulation(e.to_string());
    grid.iter()
        .map(|&db| {
            let powers = allocate_powers(cfg.users, db_to_linear(db), cfg.power_policy).map_err(|e| sim(&e))?;
            let mut point = block_rates(&block.gains, &powers, cfg.variant).map_err(|e| sim(&e))?;
            let model = GaussianBlockModel::from_gains(&block.gains, &powers, cfg.variant);
            for pair in pairs {
                let bits = leakage_mi(&model, pair.target, &pair.observers).map_err(|e| sim(&e))?;
                point.leakage.push(LeakageRecord { pair: pair.clone(), bits });
            }
            Ok(point)
        })
        .collect()
}

/// Runs the configured sweep.
///
/// Trial `i` is block `i` of the schedule; its channels depend only on the
/// master seed and its slot indices, and the same channels are reused at
/// every power point. Trials run in parallel; averaging folds them in
/// trial order, so the result is bit-identical for any thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, ExperimentError> {
    let grid = cfg.snr_grid_db();
    let pairs = SecrecyPair::all(cfg.users);
    let schedule = crate::channel::make_schedule_with_layout(cfg.trials, cfg.layout);
    let seed = channel_seed(cfg.seed);

    let per_trial: Vec<Vec<RatePoint>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let block = draw_block(cfg.users, seed, &schedule, i, cfg.power_policy)?;
            block_records(&block, cfg, &grid, &pairs)
        })
        .collect::<Result<_, _>>()?;

    let points: Vec<SweepPoint> = grid
        .iter()
        .enumerate()
        .map(|(pi, &snr_db)| {
            let column: Vec<RatePoint> = per_trial.iter().map(|t| t[pi].clone()).collect();
            let mut rates = RatePoint::mean(&column).expect("at least one trial");
            rates.power = db_to_linear(snr_db);
            SweepPoint { snr_db, rates }
        })
        .collect();

    Ok(SweepResult { summary: summarize(cfg.users, &points), config: cfg.clone(), points })
}

fn summarize(users: usize, points: &[SweepPoint]) -> SweepSummary {
    let rates: Vec<RatePoint> = points.iter().map(|p| p.rates.clone()).collect();
    let reference = ReferenceTable::theorem2(users);
    let (fit, fit_error) = match fit_sdof(&rates) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let leakage_slopes = SecrecyPair::all(users)
        .into_iter()
        .map(|pair| {
            let slope = leakage_slope(&rates, &pair).ok().map(|f| f.slope);
            (pair, slope)
        })
        .collect();
    SweepSummary { delta: fit.map(|f| f.slope - reference), fit, fit_error, leakage_slopes, reference }
}

/// Column names of the CSV output.
pub fn csv_header(users: usize) -> Vec<String> {
    let mut cols = vec!["snr_db".to_string(), "power_linear".into(), "sum_rate_bits".into()];
    cols.extend((1..=users).map(|k| format!("rate_user_{k}")));
    cols.extend(SecrecyPair::all(users).iter().map(|p| format!("leakage_pair_{}", p.label())));
    cols.push("trials".into());
    cols
}

/// Seventeen significant digits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn point_fields(p: &SweepPoint, pairs: &[SecrecyPair]) -> Vec<(String, Value, String)> {
    let r = &p.rates;
    let mut out = vec![
        ("snr_db".to_string(), json!(p.snr_db), fmt_f64(p.snr_db)),
        ("power_linear".into(), json!(r.power), fmt_f64(r.power)),
        ("sum_rate_bits".into(), json!(r.sum_rate), fmt_f64(r.sum_rate)),
    ];
    for (k, rate) in r.per_user_rate.iter().enumerate() {
        out.push((format!("rate_user_{}", k + 1), json!(rate), fmt_f64(*rate)));
    }
    for pair in pairs {
        let bits = r.leakage_for(pair).unwrap_or(f64::NAN);
        out.push((format!("leakage_pair_{}", pair.label()), json!(bits), fmt_f64(bits)));
    }
    out.push(("trials".into(), json!(r.trials), r.trials.to_string()));
    out
}

pub fn write_csv<W: Write>(result: &SweepResult, w: W) -> std::io::Result<()> {
    let pairs = result.pairs();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(csv_header(result.config.users))?;
    for p in &result.points {
        wtr.write_record(point_fields(p, &pairs).into_iter().map(|(_, _, s)| s))?;
    }
    wtr.flush()
}

pub fn to_json(result: &SweepResult) -> Value {
    let pairs = result.pairs();
    let points: Vec<Value> = result
        .points
        .iter()
        .map(|p| Value::Object(point_fields(p, &pairs).into_iter().map(|(k, v, _)| (k, v)).collect()))
        .collect();
    let s = &result.summary;
    let leakage_slopes: BTreeMap<String, Option<f64>> =
        s.leakage_slopes.iter().map(|(p, v)| (format!("leakage_pair_{}", p.label()), *v)).collect();
    json!({
        "config": result.config,
        "points": points,
        "summary": {
            "slope": s.fit.map(|f| f.slope),
            "intercept": s.fit.map(|f| f.intercept),
            "r2": s.fit.map(|f| f.r_squared),
            "points_used": s.fit.map(|f| f.points_used),
            "reference": s.reference,
            "delta": s.delta,
            "fit_error": s.fit_error,
            "leakage_slopes": leakage_slopes,
        }
    })
}

pub fn write_json<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, &to_json(result))?;
    writeln!(w)
}

/// Writes `result` to `path`, or to stdout when `path` is `None`.
pub fn emit_results(result: &SweepResult, format: OutputFormat, path: Option<&Path>) -> Result<(), ExperimentError> {
    let label = path.map_or("<stdout>".to_string(), |p| p.display().to_string());
    let io = |source| ExperimentError::Io { path: label.clone(), source };
    let write = |w: &mut dyn Write| match format {
        OutputFormat::Csv => write_csv(result, w),
        OutputFormat::Json => write_json(result, w),
    };
    match path {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p).map_err(io)?);
            write(&mut f).map_err(io)?;
            f.flush().map_err(io)
        }
        None => write(&mut std::io::stdout().lock()).map_err(io),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn defaults_apply_to_missing_fields() {
        let cfg = validate_config(&Map::new()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.snr_grid_db(), vec![60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0]);
    }

    #[test]
    fn single_user_is_rejected() {
        let errs = validate_config(&raw(json!({"users": 1}))).unwrap_err();
        assert_eq!(errs, vec![ConfigError::new("users", "users must be ≥ 2")]);
    }

    #[test]
    fn zero_step_is_rejected() {
        let errs = validate_config(&raw(json!({"snr_step_db": 0}))).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "snr_step_db");
    }

    #[test]
    fn all_errors_reported_together() {
        let errs = validate_config(&raw(json!({
            "users": 0, "trials": 0, "snr_start_db": 50, "snr_stop_db": 10,
            "variant": "LOUD", "format": "xml", "bogus": 1
        })))
        .unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        for f in ["bogus", "users", "snr_stop_db", "trials", "variant", "format"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn enum_spellings() {
        let cfg = validate_config(&raw(json!({
            "variant": "NO_NOISE_BASELINE", "layout": "contiguous", "format": "json",
            "power_policy": "equal_per_stream", "seed": 18446744073709551615u64
        })))
        .unwrap();
        assert_eq!(cfg.variant, SchemeVariant::NoNoiseBaseline);
        assert_eq!(cfg.layout, ScheduleLayout::Contiguous);
        assert_eq!(cfg.format, OutputFormat::Json);
        assert_eq!(cfg.power_policy, PowerPolicy::EqualPerStream);
        assert_eq!(cfg.seed, u64::MAX);
    }

    #[test]
    fn grid_includes_stop() {
        let cfg = ExperimentConfig { snr_start_db: 0.0, snr_stop_db: 1.0, snr_step_db: 0.1, ..Default::default() };
        assert_eq!(cfg.snr_grid_db().len(), 11);
    }

    #[test]
    fn header_names() {
        assert_eq!(
            csv_header(3),
            vec![
                "snr_db", "power_linear", "sum_rate_bits", "rate_user_1", "rate_user_2", "rate_user_3",
                "leakage_pair_2_1", "leakage_pair_3_3", "trials"
            ]
        );
    }

    #[test]
    fn reference_table() {
        assert_eq!(ReferenceTable::theorem2(3), ReferenceTable::COROLLARY1);
        assert_eq!(ReferenceTable::theorem2(2), 1.5);
        assert_eq!(ReferenceTable::theorem2(6), 5.5);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let cfg = ExperimentConfig::default();
        let result = SweepResult { summary: summarize(3, &[]), config: cfg, points: vec![] };
        let mut buf = Vec::new();
        write_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("snr_db,power_linear,sum_rate_bits,"));
    }
}
