//! Sweep runner.
//!
//! Exit codes: 0 success, 1 simulation failure, 2 configuration error,
//! 3 I/O error. Errors go to stderr as a JSON object `{"errors": [...]}`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Map, Value};

use secure_bc::experiment::{emit_results, run_sweep, validate_config, ConfigError, ExperimentError};

#[derive(Debug, Parser)]
#[command(name = "securebc", about = "Secure ZF + artificial-noise sweep for the K-user MISO broadcast channel")]
struct Args {
    /// Number of receivers (= transmit antennas).
    #[arg(long)]
    users: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_start_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_stop_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_step_db: Option<f64>,
    /// Channel draws (blocks) per SNR point.
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    /// SECURE_ALTERNATING or NO_NOISE_BASELINE.
    #[arg(long)]
    variant: Option<String>,
    /// interleaved or contiguous.
    #[arg(long)]
    layout: Option<String>,
    /// half_to_noise or equal_per_stream.
    #[arg(long)]
    power_policy: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Args {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("users", self.users.map(Value::from));
        put("snr_start_db", self.snr_start_db.map(Value::from));
        put("snr_stop_db", self.snr_stop_db.map(Value::from));
        put("snr_step_db", self.snr_step_db.map(Value::from));
        put("trials", self.trials.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("variant", self.variant.clone().map(Value::from));
        put("layout", self.layout.clone().map(Value::from));
        put("power_policy", self.power_policy.clone().map(Value::from));
        put("format", self.format.clone().map(Value::from));
        put("out", self.out.as_ref().map(|p| Value::from(p.display().to_string())));
        m
    }
}

fn report(kind: &str, errors: Vec<Value>, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "kind": kind, "errors": errors }));
    ExitCode::from(code)
}

fn config_errors(errors: &[ConfigError]) -> ExitCode {
    report("config", errors.iter().map(|e| json!(e)).collect(), 2)
}

fn main() -> ExitCode {
    let args = Args::parse();

    let mut raw = Map::new();
    if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                return report("io", vec![json!({ "path": path.display().to_string(), "message": e.to_string() })], 3)
            }
        };
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(m)) => raw = m,
            Ok(_) => return config_errors(&[ConfigError { field: "config".into(), message: "expected a JSON object".into() }]),
            Err(e) => return config_errors(&[ConfigError { field: "config".into(), message: e.to_string() }]),
        }
    }
    raw.extend(args.overrides());

    let cfg = match validate_config(&raw) {
        Ok(c) => c,
        Err(errors) => return config_errors(&errors),
    };

    let result = match run_sweep(&cfg) {
        Ok(r) => r,
        Err(ExperimentError::Config(errors)) => return config_errors(&errors),
        Err(e) => return report("simulation", vec![json!({ "message": e.to_string() })], 1),
    };

    match emit_results(&result, cfg.format, cfg.out.as_deref()) {
        Ok(()) => {}
        Err(ExperimentError::Io { path, source }) => {
            return report("io", vec![json!({ "path": path, "message": source.to_string() })], 3)
        }
        Err(e) => return report("simulation", vec![json!({ "message": e.to_string() })], 1),
    }

    if cfg.out.is_some() {
        let s = &result.summary;
        match s.fit {
            Some(f) => println!(
                "users={} slope={:.4} r2={:.6} reference={} delta={:+.4}",
                cfg.users, f.slope, f.r_squared, s.reference, f.slope - s.reference
            ),
            None => println!("users={} no slope fit: {}", cfg.users, s.fit_error.as_deref().unwrap_or("")),
        }
    }
    ExitCode::SUCCESS
}
