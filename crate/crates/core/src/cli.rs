//! Command-line front end: a flat TOML configuration with environment
//! overrides, and the experiment commands writing CSV/JSON tables.
//!
//! Every output file starts with a `# config_hash=<hex> seed=<seed>` line
//! (CSV) or carries `config_hash` and `seed` fields (JSON).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{
    approx_calibrate, exact_curve, learning_curve, one_step_calibrate, theta_grid, two_step_calibrate,
    write_learning_curve, CurveSettings,
};
use crate::compare::{comparison_sweep, write_comparison, ThetaSource};
use crate::contract::{write_payout_trace, ClampModel, PayoffFamily, ThetaBox, UpperStat, VariablePart};
use crate::dists::{fit_mle, simulate_uniform_covariates, LossSample, TailKind, TailLinkModel, ThresholdPolicy};
use crate::ingest::{build_sample, parse_tornado_csv, scale_losses, write_rejects, write_sample_csv};
use crate::objective::{
    write_objective_curve, ApproxObjective, CurvePoint, EmpiricalObjective, MetricConfig, Phi1Form, PriceAversion,
    Utility,
};
use crate::stats::{empirical_quantile, median};
use crate::{Error, Result};

/// Prefix of the environment variables overriding configuration keys.
pub const ENV_PREFIX: &str = "HYBRID_";

/// The shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Sim,
    Tornado,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossUnit {
    Native,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Exp,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AversionKind {
    Rational,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi1Kind {
    Prefactor,
    Plain,
}

/// All experiment settings. See `config/default.toml` for the meaning of
/// each key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    pub tornado_path: String,
    pub year_min: i32,
    pub year_max: i32,
    pub loss_unit: LossUnit,
    pub sim_a: f64,
    pub sim_b: f64,
    pub m: usize,
    pub seed: u64,
    pub replications: usize,
    pub n_start: usize,
    pub increment: usize,
    pub grid_points: usize,
    pub utility: UtilityKind,
    pub mu: f64,
    pub aversion: AversionKind,
    pub kappa: f64,
    pub beta: f64,
    pub tau: f64,
    pub phi1_form: Phi1Kind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_plus: Option<f64>,
    pub s_quantile: f64,
    pub tau_trad: f64,
    pub tau_index: Vec<f64>,
    pub compare_quantiles: Vec<f64>,
    pub recalibrate_per_s: bool,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Sim,
            tornado_path: String::new(),
            year_min: 2016,
            year_max: 2023,
            loss_unit: LossUnit::Median,
            sim_a: -(0.7f64.ln()),
            sim_b: 3.5f64.ln(),
            m: 5000,
            seed: 20240,
            replications: 1,
            n_start: 250,
            increment: 250,
            grid_points: 256,
            utility: UtilityKind::Exp,
            mu: 1.5,
            aversion: AversionKind::Rational,
            kappa: 1.415,
            beta: 1.65,
            tau: 0.10,
            phi1_form: Phi1Kind::Prefactor,
            pi_plus: None,
            s_quantile: 0.85,
            tau_trad: 0.40,
            tau_index: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            compare_quantiles: vec![0.80, 0.85, 0.90, 0.95],
            recalibrate_per_s: false,
            theta_lower: Vec::new(),
            theta_upper: Vec::new(),
            out: "out".into(),
        }
    }
}

fn config_error(msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(msg.to_string())
}

/// Reads an environment value as a TOML value, falling back to a plain
/// string for bare words.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Defaults, then the file at `path`, then `HYBRID_*` variables from
    /// `env`.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = toml::Table::try_from(Self::default()).map_err(config_error)?;
        let mut keys: Vec<String> = table.keys().cloned().collect();
        keys.push("pi_plus".into());
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
            let file: toml::Table = text.parse().map_err(config_error)?;
            table.extend(file);
        }
        for (name, raw) in env {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if !keys.contains(&key) {
                return Err(config_error(format!("unknown environment override {name}")));
            }
            table.insert(key, env_value(&raw));
        }
        let config: Self = table.try_into().map_err(config_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let quantile = |name: &str, q: f64| {
            if q > 0.0 && q < 1.0 {
                Ok(())
            } else {
                Err(config_error(format!("{name} = {q} must lie in (0, 1)")))
            }
        };
        quantile("s_quantile", self.s_quantile)?;
        for &q in &self.compare_quantiles {
            quantile("compare_quantiles", q)?;
        }
        if self.m == 0 || self.replications == 0 || self.grid_points == 0 {
            return Err(config_error("m, replications and grid_points must be positive"));
        }
        if self.n_start == 0 || self.increment == 0 {
            return Err(config_error("n_start and increment must be positive"));
        }
        if self.year_min > self.year_max {
            return Err(config_error("year_min exceeds year_max"));
        }
        if self.theta_lower.len() != self.theta_upper.len() {
            return Err(config_error("theta_lower and theta_upper differ in length"));
        }
        if [self.tau, self.tau_trad]
            .iter()
            .chain(&self.tau_index)
            .any(|t| !(*t >= 0.0))
        {
            return Err(config_error("loadings must be non-negative"));
        }
        self.metric()?;
        Ok(())
    }

    pub fn metric(&self) -> Result<MetricConfig> {
        let config = MetricConfig {
            utility: match self.utility {
                UtilityKind::Exp => Utility::ExpUtility { mu: self.mu },
                UtilityKind::Identity => Utility::Identity,
            },
            aversion: match self.aversion {
                AversionKind::Rational => PriceAversion::Rational {
                    kappa: self.kappa,
                    beta: self.beta,
                },
                AversionKind::Logistic => PriceAversion::Logistic {
                    kappa: self.kappa,
                    beta: self.beta,
                },
            },
            pi_plus: self.pi_plus,
            tau: self.tau,
            phi1_form: match self.phi1_form {
                Phi1Kind::Prefactor => Phi1Form::WithPrefactor,
                Phi1Kind::Plain => Phi1Form::NoPrefactor,
            },
        };
        config.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form, in hex. The output directory is
    /// left out so that reruns into another directory match byte for byte.
    pub fn hash(&self) -> String {
        let keyed = Self {
            out: String::new(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&keyed).expect("configuration serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn sim_model(&self) -> Result<TailLinkModel> {
        TailLinkModel::pareto_unit(vec![self.sim_a, self.sim_b]).map_err(|e| config_error(e.to_string()))
    }

    fn theta_box(&self) -> Result<Option<ThetaBox>> {
        if self.theta_lower.is_empty() {
            return Ok(None);
        }
        ThetaBox::new(self.theta_lower.clone(), self.theta_upper.clone())
            .map(Some)
            .map_err(|e| config_error(e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-cover",
    version,
    about = "Calibrate and compare hybrid insurance contracts"
)]
pub struct Cli {
    /// Flat TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub dataset: Option<Dataset>,
    /// Tornado file for `--dataset tornado`.
    #[arg(long, global = true)]
    pub tornado: Option<PathBuf>,
    #[arg(long, global = true)]
    pub s_quantile: Option<f64>,
    /// Comma-separated index loadings for the comparison sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau_index: Option<Vec<f64>>,
    /// Recalibrate theta at every threshold of the comparison sweep.
    #[arg(long, global = true)]
    pub recalibrate_per_s: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the covariate-linked Pareto sample.
    Simulate,
    /// One-step and two-step calibration, objective curves and payouts.
    Calibrate,
    /// Learning curve of both estimators against the full-sample objective.
    Curve,
    /// Equal-price comparison with capped indemnity contracts.
    Compare,
    /// Parse a tornado file into a sample and a rejects report.
    Ingest {
        /// Tornado file; defaults to `--tornado` or the configured path.
        path: Option<PathBuf>,
    },
    /// Print the default configuration.
    DefaultConfig,
}

impl Cli {
    /// Final configuration: defaults, file, environment, then flags.
    pub fn resolve<I>(&self, env: I) -> Result<ExperimentConfig>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut config = ExperimentConfig::load(self.config.as_deref(), env)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.display().to_string();
        }
        if let Some(d) = self.dataset {
            config.dataset = d;
        }
        if let Some(p) = &self.tornado {
            config.tornado_path = p.display().to_string();
        }
        if let Some(q) = self.s_quantile {
            config.s_quantile = q;
        }
        if let Some(t) = &self.tau_index {
            config.tau_index = t.clone();
        }
        if self.recalibrate_per_s {
            config.recalibrate_per_s = true;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Writes output files tagged with the configuration hash and seed.
struct Output {
    dir: PathBuf,
    tag: String,
    hash: String,
    seed: u64,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let dir = PathBuf::from(&config.out);
        std::fs::create_dir_all(&dir)?;
        let hash = config.hash();
        Ok(Self {
            tag: format!("# config_hash={hash} seed={}\n", config.seed),
            dir,
            hash,
            seed: config.seed,
            written: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        file.write_all(self.tag.as_bytes())?;
        body(&mut file)?;
        file.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let doc = serde_json::json!({
            "config_hash": self.hash,
            "seed": self.seed,
            "result": value,
        });
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

struct Data {
    sample: LossSample,
    /// Divisor applied to the raw losses.
    unit: f64,
}

fn tornado_path(config: &ExperimentConfig) -> Result<PathBuf> {
    if config.tornado_path.is_empty() {
        return Err(config_error("dataset tornado needs tornado_path or --tornado"));
    }
    let path = PathBuf::from(&config.tornado_path);
    if !path.exists() {
        return Err(config_error(format!("tornado file {} does not exist", path.display())));
    }
    Ok(path)
}

fn load_data(config: &ExperimentConfig, rep: u64) -> Result<Data> {
    match config.dataset {
        Dataset::Sim => Ok(Data {
            sample: simulate_uniform_covariates(&config.sim_model()?, config.m, config.seed.wrapping_add(rep), 0),
            unit: 1.0,
        }),
        Dataset::Tornado => {
            let parsed = parse_tornado_csv(tornado_path(config)?)?;
            let built = build_sample(&parsed.records, config.year_min, config.year_max)?;
            let unit = match config.loss_unit {
                LossUnit::Native => 1.0,
                LossUnit::Median => median(built.sample.losses())?,
            };
            Ok(Data {
                sample: scale_losses(&built.sample, unit)?,
                unit,
            })
        }
    }
}

fn tail_kind(config: &ExperimentConfig) -> TailKind {
    match config.dataset {
        Dataset::Sim => TailKind::ParetoUnit,
        Dataset::Tornado => TailKind::Gpd,
    }
}

/// Payoff family at `s_quantile`: the true model with an exponential link for
/// simulated data, a fitted GPD with a linear link for tornado data.
fn family_for(config: &ExperimentConfig, sample: &LossSample) -> Result<PayoffFamily> {
    let s = empirical_quantile(sample.losses(), config.s_quantile)?;
    let family = match config.dataset {
        Dataset::Sim => PayoffFamily::new(
            VariablePart::ExpLink1D,
            UpperStat::MeanExcess,
            s,
            config.sim_model()?,
            ClampModel::True,
            ThetaBox::new(vec![0.0], vec![5.0])?,
        )?,
        Dataset::Tornado => {
            let fit = fit_mle(sample, TailKind::Gpd, ThresholdPolicy::FullSample)?;
            PayoffFamily::linear_scaled(sample.covariates(), fit.model, ClampModel::Fitted, s)?
        }
    };
    match config.theta_box()? {
        Some(b) if b.dim() != family.theta_domain.dim() => Err(config_error(format!(
            "theta box has {} axes, the payoff family {}",
            b.dim(),
            family.theta_domain.dim()
        ))),
        Some(b) => Ok(PayoffFamily {
            theta_domain: b,
            ..family
        }),
        None => Ok(family),
    }
}

#[derive(Serialize)]
struct SimulationParams {
    model: TailLinkModel,
    m: usize,
    gamma_min: f64,
    gamma_max: f64,
}

fn cmd_simulate(config: &ExperimentConfig, out: &mut Output) -> Result<()> {
    if config.dataset != Dataset::Sim {
        return Err(config_error("simulate needs dataset = \"sim\""));
    }
    let model = config.sim_model()?;
    let data = load_data(config, 0)?;
    let gammas: Vec<f64> = data
        .sample
        .covariates()
        .rows()
        .map(|w| model.tail_index(w))
        .collect::<Result<_>>()?;
    out.csv("sample.csv", |f| write_sample_csv(f, &data.sample, &[]))?;
    out.json(
        "params.json",
        &SimulationParams {
            m: data.sample.len(),
            gamma_min: gammas.iter().copied().fold(f64::INFINITY, f64::min),
            gamma_max: gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            model,
        },
    )
}

fn cmd_calibrate(config: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let metric = config.metric()?;
    let data = load_data(config, 0)?;
    let family = family_for(config, &data.sample)?;
    let cov = data.sample.covariates();
    let one = one_step_calibrate(&data.sample, &family, &metric)?;
    let two = two_step_calibrate(&data.sample, cov, &family, &metric, ThresholdPolicy::FullSample)?;
    let fitted = two.fitted_model.clone().expect("two-step result carries its fit");

    let grid = theta_grid(&family.theta_domain, config.grid_points);
    let exact = EmpiricalObjective::new(&data.sample, &family, metric)?;
    let (l_hat, premiums) = exact_curve(&exact, &grid)?;
    let approx = ApproxObjective::new(&fitted, cov, &family, metric)?;
    let mut points = Vec::with_capacity(grid.len());
    for ((theta, l), p) in grid.into_iter().zip(l_hat).zip(premiums) {
        points.push(CurvePoint {
            l_star_hat: approx.evaluate(&theta, p)?,
            theta,
            l_hat: l,
            premium: p,
        });
    }
    out.csv("objective_curve.csv", |f| write_objective_curve(f, &points))?;
    out.csv("payouts_one_step.csv", |f| {
        write_payout_trace(f, &data.sample, &family, &one.theta_hat)
    })?;
    out.csv("payouts_two_step.csv", |f| {
        write_payout_trace(f, &data.sample, &family, &two.theta_hat)
    })?;
    out.json(
        "calibration.json",
        &serde_json::json!({
            "s": family.s,
            "loss_unit": data.unit,
            "theta_domain": family.theta_domain,
            "one_step": one,
            "two_step": two,
        }),
    )
}

fn cmd_curve(config: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let metric = config.metric()?;
    let settings = CurveSettings {
        n_start: config.n_start,
        increment: config.increment,
        grid_points: config.grid_points,
        fit_kind: tail_kind(config),
        policy: ThresholdPolicy::FullSample,
    };
    // the tornado sample is fixed, so it has a single replication
    let reps = match config.dataset {
        Dataset::Sim => config.replications,
        Dataset::Tornado => 1,
    };
    for rep in 0..reps {
        let data = load_data(config, rep as u64)?;
        let family = family_for(config, &data.sample)?;
        let curve = learning_curve(&data.sample, &family, &metric, &settings)?;
        let name = if reps == 1 {
            "learning_curve.csv".to_string()
        } else {
            format!("learning_curve_rep{rep}.csv")
        };
        let with_sigma = settings.fit_kind == TailKind::Gpd;
        out.csv(&name, |f| {
            write_learning_curve(f, &curve.rows, data.sample.dim(), with_sigma)
        })?;
    }
    Ok(())
}

fn cmd_compare(config: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let metric = config.metric()?;
    let data = load_data(config, 0)?;
    let family = family_for(config, &data.sample)?;
    let source = if config.recalibrate_per_s {
        ThetaSource::Recalibrate(metric)
    } else {
        let theta = match config.dataset {
            Dataset::Sim => one_step_calibrate(&data.sample, &family, &metric)?.theta_hat,
            Dataset::Tornado => {
                approx_calibrate(&data.sample, data.sample.covariates(), &family.model, &family, &metric)?.theta_hat
            }
        };
        ThetaSource::Fixed(theta)
    };
    let s_grid = config
        .compare_quantiles
        .iter()
        .map(|&q| empirical_quantile(data.sample.losses(), q))
        .collect::<Result<Vec<_>>>()?;
    let rows = comparison_sweep(
        &data.sample,
        &family,
        &source,
        &s_grid,
        &config.tau_index,
        config.tau_trad,
    )?;
    out.csv("comparison.csv", |f| write_comparison(f, &rows))
}

#[derive(Serialize)]
struct IngestSummary {
    parsed_rows: usize,
    rejected_rows: usize,
    removed: crate::ingest::FilterCounts,
    kept_rows: usize,
    median_loss: f64,
}

fn cmd_ingest(config: &ExperimentConfig, path: Option<&Path>, out: &mut Output) -> Result<()> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => tornado_path(config)?,
    };
    let parsed = parse_tornado_csv(&path)?;
    let built = build_sample(&parsed.records, config.year_min, config.year_max)?;
    out.csv("tornado_sample.csv", |f| {
        write_sample_csv(f, &built.sample, &built.years)
    })?;
    out.csv("rejects.csv", |f| write_rejects(f, &parsed.rejects))?;
    out.json(
        "ingest_summary.json",
        &IngestSummary {
            parsed_rows: parsed.records.len(),
            rejected_rows: parsed.rejects.len(),
            removed: built.removed,
            kept_rows: built.sample.len(),
            median_loss: median(built.sample.losses())?,
        },
    )
}

/// Runs the command and returns the files written.
pub fn run<I>(cli: &Cli, env: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = (String, String)>,
{
    if let Command::DefaultConfig = cli.command {
        print!("{DEFAULT_CONFIG}");
        return Ok(Vec::new());
    }
    let config = cli.resolve(env)?;
    let mut out = Output::new(&config)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&config, &mut out)?,
        Command::Calibrate => cmd_calibrate(&config, &mut out)?,
        Command::Curve => cmd_curve(&config, &mut out)?,
        Command::Compare => cmd_compare(&config, &mut out)?,
        Command::Ingest { path } => {
            let path = path.as_deref().or(cli.tornado.as_deref());
            cmd_ingest(&config, path, &mut out)?
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(out.written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn shipped_defaults_match() {
        let table: toml::Table = DEFAULT_CONFIG.parse().unwrap();
        let parsed: ExperimentConfig = table.try_into().unwrap();
        assert_eq!(parsed, ExperimentConfig::default());
        assert_eq!(ExperimentConfig::load(None, no_env()).unwrap(), parsed);
    }

    #[test]
    fn environment_overrides() {
        let env = vec![
            ("HYBRID_S_QUANTILE".to_string(), "0.9".to_string()),
            ("HYBRID_DATASET".to_string(), "tornado".to_string()),
            ("HYBRID_TAU_INDEX".to_string(), "[0.0, 0.2]".to_string()),
            ("HYBRID_PI_PLUS".to_string(), "2".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = ExperimentConfig::load(None, env).unwrap();
        assert_eq!(c.s_quantile, 0.9);
        assert_eq!(c.dataset, Dataset::Tornado);
        assert_eq!(c.tau_index, vec![0.0, 0.2]);
        assert_eq!(c.pi_plus, Some(2.0));

        let bad = vec![("HYBRID_NOPE".to_string(), "1".to_string())];
        assert!(matches!(
            ExperimentConfig::load(None, bad),
            Err(Error::InvalidConfig(_))
        ));
        let bad = vec![("HYBRID_S_QUANTILE".to_string(), "1.5".to_string())];
        assert!(matches!(
            ExperimentConfig::load(None, bad),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn file_then_env_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 7\ns_quantile = 0.8\nmu = 2.0\n").unwrap();
        let env = vec![("HYBRID_SEED".to_string(), "8".to_string())];
        let c = ExperimentConfig::load(Some(&path), env.clone()).unwrap();
        assert_eq!((c.seed, c.s_quantile, c.mu), (8, 0.8, 2.0));

        let cli = Cli::try_parse_from([
            "hybrid-cover",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "simulate",
        ])
        .unwrap();
        let c = cli.resolve(env).unwrap();
        assert_eq!(c.seed, 9);

        std::fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(matches!(
            ExperimentConfig::load(Some(&path), no_env()),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            ExperimentConfig::load(Some(&dir.path().join("missing.toml")), no_env()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.tau = 0.2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn metric_mapping() {
        let c = ExperimentConfig {
            utility: UtilityKind::Identity,
            aversion: AversionKind::Logistic,
            phi1_form: Phi1Kind::Plain,
            kappa: 0.5,
            ..ExperimentConfig::default()
        };
        let m = c.metric().unwrap();
        assert_eq!(m.utility, Utility::Identity);
        assert_eq!(m.aversion, PriceAversion::Logistic { kappa: 0.5, beta: 1.65 });
        assert_eq!(m.phi1_form, Phi1Form::NoPrefactor);
        assert_eq!(ExperimentConfig::default().metric().unwrap(), MetricConfig::default());
    }
}
