//! Command-line front end: scenario files, parameter reports, Monte Carlo runs
//! and capacity sweeps.
//!
//! Scenario files are flat `key = value` text; `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{
    ap_capacity_bounds, delta, p_capacity_bounds, scheme_rate, upper95, AnalysisError,
    AnalyticSetting,
};
use crate::field::{Field, FieldSpec};
use crate::protocols::{
    derive_params, run_trials, DeriveOptions, EveSpec, ProtocolError, Scheme, Simulation,
};
use crate::setting::MultipathConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Degenerate(_) => CliError::Degenerate(e.to_string()),
            other => CliError::Infeasible(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

/// A parsed scenario file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub multipath: MultipathConfig,
    pub scheme: Scheme,
    pub psi: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub trials: u64,
    pub seed: u64,
    pub eve: EveSpec,
    /// Width of the simulation field; must divide λ.
    pub lambda_field: u32,
    pub reduction_poly_hex: Option<String>,
    pub rate_tightness: bool,
    pub q1: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn derive_options(&self) -> DeriveOptions {
        DeriveOptions {
            psi: self.psi,
            delta: self.delta,
            epsilon: self.epsilon,
            q1_override: self.q1,
            rate_tightness: self.rate_tightness,
        }
    }

    pub fn field(&self) -> Result<Field, CliError> {
        let spec = match &self.reduction_poly_hex {
            Some(hex) => FieldSpec::from_hex(self.lambda_field, hex),
            None => FieldSpec::builtin(self.lambda_field),
        };
        spec.map(Field::new)
            .map_err(|e| CliError::Infeasible(format!("lambda_field: {e}")))
    }
}

/// Largest table-backed width dividing λ, or λ itself when nothing smaller fits.
fn default_lambda_field(lambda: u32) -> u32 {
    if lambda <= 16 {
        return lambda;
    }
    [16, 8, 4, 2]
        .into_iter()
        .find(|w| lambda.is_multiple_of(*w))
        .unwrap_or(lambda)
}

const KEYS: [&str; 17] = [
    "n",
    "t_a",
    "t_b",
    "t_e",
    "lambda",
    "scheme",
    "psi",
    "delta",
    "epsilon",
    "trials",
    "seed",
    "eve",
    "lambda_field",
    "reduction_poly_hex",
    "rate_tightness",
    "q1",
    "output",
];

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let bad = |msg: String| CliError::Infeasible(format!("config: {msg}"));
    let mut map = std::collections::BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(bad(format!("line {}: unknown key '{k}'", no + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(bad(format!("line {}: duplicate key '{k}'", no + 1)));
        }
    }
    fn get<T: std::str::FromStr>(
        map: &std::collections::BTreeMap<String, String>,
        key: &str,
    ) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        map.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Infeasible(format!("config: {key} = '{v}': {e}")))
            })
            .transpose()
    }
    let need = |key: &str| -> Result<usize, CliError> {
        get::<usize>(&map, key)?.ok_or_else(|| bad(format!("missing required key '{key}'")))
    };
    let lambda =
        get::<u32>(&map, "lambda")?.ok_or_else(|| bad("missing required key 'lambda'".into()))?;
    let multipath =
        MultipathConfig::new(need("n")?, need("t_a")?, need("t_b")?, need("t_e")?, lambda)
            .map_err(|e| bad(e.to_string()))?;
    let scheme = match map.get("scheme") {
        Some(s) => s.parse::<Scheme>().map_err(bad)?,
        None => return Err(bad("missing required key 'scheme'".into())),
    };
    let eve = match map.get("eve") {
        Some(s) => s.parse::<EveSpec>().map_err(bad)?,
        None => EveSpec::Uniform,
    };
    Ok(ScenarioConfig {
        multipath,
        scheme,
        psi: get(&map, "psi")?.unwrap_or(0.1),
        delta: get(&map, "delta")?.unwrap_or(0.05),
        epsilon: get(&map, "epsilon")?.unwrap_or(0.05),
        trials: get(&map, "trials")?.unwrap_or(1000),
        seed: get(&map, "seed")?.unwrap_or(0),
        eve,
        lambda_field: get(&map, "lambda_field")?.unwrap_or_else(|| default_lambda_field(lambda)),
        reduction_poly_hex: map.get("reduction_poly_hex").cloned(),
        rate_tightness: get(&map, "rate_tightness")?.unwrap_or(true),
        q1: get(&map, "q1")?,
        output: map.get("output").map(PathBuf::from),
    })
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Nine significant digits in scientific notation. Rust formats the exact
/// binary value, so ties round to even and output is platform independent.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Parameter and rate report: `key = value` lines followed by one JSON line.
pub fn cmd_params(cfg: &ScenarioConfig, analytic_lambda: Option<u32>) -> Result<String, CliError> {
    let params = derive_params(&cfg.multipath, cfg.scheme, &cfg.derive_options())?;
    let mut s = AnalyticSetting::from(&cfg.multipath);
    if let Some(l) = analytic_lambda {
        s.lambda = l as f64;
    }
    let rate = scheme_rate(&s, cfg.scheme)?;
    let (p_lower, p_upper) = p_capacity_bounds(&s)?;
    let one = ap_capacity_bounds(&s, false)?;
    let two = ap_capacity_bounds(&s, true)?;
    let gap = delta(s.lambda)?;

    let mut out = String::new();
    let c = cfg.multipath;
    let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
    kv("scheme", cfg.scheme.to_string());
    kv("n", c.n.to_string());
    kv("t_a", c.t_a.to_string());
    kv("t_b", c.t_b.to_string());
    kv("t_e", c.t_e.to_string());
    kv("lambda", c.lambda.to_string());
    kv("analytic_lambda", s.lambda.to_string());
    kv("psi", fmt_float(cfg.psi));
    kv("delta_target", fmt_float(cfg.delta));
    kv("epsilon_target", fmt_float(cfg.epsilon));
    kv("rate_tightness", cfg.rate_tightness.to_string());
    for (k, v) in [
        ("q1", params.q1),
        ("q2", params.q2),
        ("g1", params.g1),
        ("g2", params.g2),
        ("r1", params.r1),
        ("r2", params.r2),
        ("k1", params.k1),
        ("m1", params.m1),
        ("k2", params.k2),
        ("m2", params.m2),
    ] {
        kv(k, fmt_count(v));
    }
    kv("w", params.w.to_string());
    kv("w1", params.w1.to_string());
    kv("w2", params.w2.to_string());
    kv("n_prime", params.n_prime.to_string());
    for (k, v) in [
        ("t_prime_a1", params.t_prime_a1),
        ("t_prime_b1", params.t_prime_b1),
        ("t_prime_e1", params.t_prime_e1),
        ("t_prime_e2", params.t_prime_e2),
    ] {
        kv(k, fmt_float(v));
    }
    kv("bits_communicated", fmt_count(params.bits));
    kv(
        "message_bits",
        fmt_count(params.message_elements * c.lambda as f64),
    );
    kv("derived_rate", fmt_float(params.rate));
    kv("scheme_rate", fmt_float(rate));
    kv("gap_loss", fmt_float(gap));
    kv("p_capacity_lower", fmt_float(p_lower));
    kv("p_capacity_upper", fmt_float(p_upper));
    kv("ap_lower_oneway", fmt_float(one.lower));
    kv("ap_upper_oneway", fmt_float(one.upper));
    kv("ap_lower_twoway", fmt_float(two.lower));
    kv("ap_upper_twoway", fmt_float(two.upper));
    let json = serde_json::json!({
        "params": params,
        "scheme_rate": rate,
        "gap_loss": gap,
        "p_capacity": [p_lower, p_upper],
        "ap_oneway": one,
        "ap_twoway": two,
    });
    writeln!(out, "{json}").expect("write to string");
    Ok(out)
}

/// Integral counts print exactly while they fit, in scientific notation after.
fn fmt_count(x: f64) -> String {
    if x.abs() < 9.007_199_254_740_992e15 {
        format!("{}", x as i64)
    } else {
        fmt_float(x)
    }
}

/// Runs the Monte Carlo harness and returns the CSV. With `transcript`, the
/// first trial's transcript is written there.
pub fn cmd_simulate(
    cfg: &ScenarioConfig,
    trials: Option<u64>,
    seed: Option<u64>,
    transcript: Option<&std::path::Path>,
) -> Result<String, CliError> {
    let trials = trials.unwrap_or(cfg.trials);
    let seed = seed.unwrap_or(cfg.seed);
    let params = derive_params(&cfg.multipath, cfg.scheme, &cfg.derive_options())?;
    let sim = Simulation::new(&params, cfg.field()?)?;
    let (outcomes, record) = run_trials(&sim, &cfg.eve, seed, trials, transcript.is_some())?;
    if let (Some(path), Some(t)) = (transcript, record) {
        let file =
            fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        t.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let b = |x: bool| if x { "1" } else { "0" };
    let mut out =
        String::from("trial,aborted,failed,bad_event_stage1,bad_event_stage2,bits_communicated\n");
    let (mut failures, mut bad) = (0u64, 0u64);
    for o in &outcomes {
        failures += o.failed as u64;
        bad += (o.bad_event_stage1 || o.bad_event_stage2) as u64;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            o.trial,
            b(o.aborted),
            b(o.failed),
            b(o.bad_event_stage1),
            b(o.bad_event_stage2),
            o.bits_communicated
        )
        .expect("write to string");
    }
    let rate = |x: u64| {
        if trials == 0 {
            0.0
        } else {
            x as f64 / trials as f64
        }
    };
    out.push_str("summary,trials,failures,delta_hat,delta_upper95,delta_target,bad_events,epsilon_hat,epsilon_upper95,epsilon_target\n");
    writeln!(
        out,
        "summary,{trials},{failures},{},{},{},{bad},{},{},{}",
        fmt_float(rate(failures)),
        fmt_float(upper95(failures, trials)),
        fmt_float(cfg.delta),
        fmt_float(rate(bad)),
        fmt_float(upper95(bad, trials)),
        fmt_float(cfg.epsilon)
    )
    .expect("write to string");
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// t_e = β·n for β from 0 to 1, t_a = t_b fixed.
    Beta,
    /// t_a = t_b = α·n for α in (0, 1], t_e fixed.
    Alpha,
}

/// Capacity bounds along a sweep, as CSV.
pub fn cmd_capacity(
    sweep: Sweep,
    lambda: f64,
    n: f64,
    points: usize,
    t_ab_frac: f64,
    t_e_frac: f64,
) -> Result<String, CliError> {
    if points < 2 {
        return Err(CliError::Infeasible(
            "capacity: --points must be at least 2".into(),
        ));
    }
    if n.is_nan()
        || n <= 0.0
        || !(0.0..=1.0).contains(&t_ab_frac)
        || !(0.0..=1.0).contains(&t_e_frac)
    {
        return Err(CliError::Infeasible(
            "capacity: need n > 0 and fractions in [0, 1]".into(),
        ));
    }
    delta(lambda)?;
    let mut out =
        String::from("sweep_value,c0,ap_lower_oneway,ap_lower_twoway,ap_upper,active_scheme\n");
    for i in 0..points {
        let (x, s) = match sweep {
            Sweep::Beta => {
                let beta = i as f64 / (points - 1) as f64;
                let t = t_ab_frac * n;
                (
                    beta,
                    AnalyticSetting {
                        n,
                        t_a: t,
                        t_b: t,
                        t_e: beta * n,
                        lambda,
                    },
                )
            }
            Sweep::Alpha => {
                let alpha = (i + 1) as f64 / points as f64;
                let t = alpha * n;
                (
                    alpha,
                    AnalyticSetting {
                        n,
                        t_a: t,
                        t_b: t,
                        t_e: t_e_frac * n,
                        lambda,
                    },
                )
            }
        };
        let (_, c0) = p_capacity_bounds(&s)?;
        let one = ap_capacity_bounds(&s, false)?;
        let two = ap_capacity_bounds(&s, true)?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(x),
            fmt_float(c0),
            fmt_float(one.lower),
            fmt_float(two.lower),
            fmt_float(two.upper),
            two.active.map(|a| a.to_string()).unwrap_or_default()
        )
        .expect("write to string");
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "pmtlab",
    version,
    about = "Private message transmission over multipath channels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive protocol parameters and report rates and capacity bounds.
    Params {
        config: PathBuf,
        /// λ for the closed-form rates, instead of the config's.
        #[arg(long)]
        analytic_lambda: Option<u32>,
    },
    /// Run seeded Monte Carlo trials and print per-trial CSV plus a summary.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript of trial 0 to this CSV file.
        #[arg(long)]
        dump_transcript: Option<PathBuf>,
    },
    /// Capacity bounds along a β or α sweep.
    Capacity {
        #[arg(long, value_enum)]
        sweep: Sweep,
        #[arg(long, default_value_t = 100.0)]
        lambda: f64,
        #[arg(long, default_value_t = 100.0)]
        n: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// t_a = t_b as a fraction of n (β sweep).
        #[arg(long, default_value_t = 0.2)]
        t_ab_frac: f64,
        /// t_e as a fraction of n (α sweep).
        #[arg(long, default_value_t = 0.2)]
        t_e_frac: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, path: Option<&std::path::Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Params {
            config,
            analytic_lambda,
        } => {
            let cfg = load_config(&config)?;
            emit(&cmd_params(&cfg, analytic_lambda)?, None)
        }
        Command::Simulate {
            config,
            trials,
            seed,
            dump_transcript,
        } => {
            let cfg = load_config(&config)?;
            let csv = cmd_simulate(&cfg, trials, seed, dump_transcript.as_deref())?;
            emit(&csv, cfg.output.as_deref())
        }
        Command::Capacity {
            sweep,
            lambda,
            n,
            points,
            t_ab_frac,
            t_e_frac,
            output,
        } => {
            let csv = cmd_capacity(sweep, lambda, n, points, t_ab_frac, t_e_frac)?;
            emit(&csv, output.as_deref())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIGIG: &str = "n = 70\nt_a = 4\nt_b = 4\nt_e = 35\nlambda = 104 # bits\nscheme = F3\n";

    #[test]
    fn parses_defaults_and_comments() {
        let c = parse_config(WIGIG).unwrap();
        assert_eq!(
            c.multipath,
            MultipathConfig::new(70, 4, 4, 35, 104).unwrap()
        );
        assert_eq!((c.psi, c.trials, c.lambda_field), (0.1, 1000, 8));
        assert_eq!(c.eve, EveSpec::Uniform);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_config("n = 3").is_err());
        assert!(parse_config(&format!("{WIGIG}colour = red\n")).is_err());
        assert!(parse_config(&format!("{WIGIG}n = 4\n")).is_err());
        assert!(parse_config(&format!("{WIGIG}psi = much\n")).is_err());
        let e = parse_config("n = 3\nt_a = 4\nt_b = 1\nt_e = 0\nlambda = 8\nscheme = F1\n")
            .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(0.2), "2.00000000e-1");
        assert_eq!(fmt_float(1.0), "1.00000000e0");
        assert_eq!(fmt_float(0.0), "0.00000000e0");
    }

    #[test]
    fn infeasible_exit_code() {
        let c =
            parse_config("n = 12\nt_a = 4\nt_b = 4\nt_e = 4\nlambda = 16\nscheme = F1\n").unwrap();
        let e = cmd_params(&c, None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("t_e < t_ab"));
    }

    #[test]
    fn capacity_endpoints() {
        let csv = cmd_capacity(Sweep::Beta, 100.0, 100.0, 11, 0.2, 0.2).unwrap();
        let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(first[..2], ["0.00000000e0", "1.00000000e0"]);
        assert_eq!(first[4], "1.00000000e0");
        assert!(cmd_capacity(Sweep::Alpha, 100.0, 100.0, 1, 0.2, 0.2).is_err());
    }
}
