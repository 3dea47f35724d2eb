//! Monte Carlo rate-energy tradeoff sweeps.
//!
//! A sweep draws `n_realizations` Rician channels once and reuses them for
//! every curve and every energy threshold, so curves can be compared
//! realization by realization. Per-realization system parameters follow the
//! reference simulation rules: `P_s = 0.4·h̄·P`, `P_c = 0.3·P_s`,
//! `σ_A² = σ_cov² = h̄·P/SNR` and `M_max = ⌈ζ·h·P/P_s⌉`.
//!
//! Results are written as a CSV table plus a JSON sidecar holding the full
//! configuration; feeding the sidecar back to [`load_config`] reproduces the
//! CSV byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{self, db_to_linear, RicianModel, GENERATOR_NAME};
use crate::eh_model::SystemParams;
use crate::error::{Error, Result};
use crate::solver::{self, PolicySolution, Scheme, SolverOptions};

pub const CSV_HEADER: &str = "scheme,q_joules,mean_rate_bpcu,feasible_fraction,mean_m";
pub const SIDECAR_FORMAT: &str = "swipt-sweep-sidecar";
pub const SIDECAR_VERSION: u32 = 1;

/// Power level with an explicit unit tag, e.g. `{ dbw = -30 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Linear(f64),
    Dbw(f64),
}

impl Level {
    pub fn linear(self) -> f64 {
        match self {
            Level::Linear(v) => v,
            Level::Dbw(db) => db_to_linear(db),
        }
    }
}

/// Dimensionless ratio with an explicit unit tag, e.g. `{ db = 20 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ratio {
    Linear(f64),
    Db(f64),
}

impl Ratio {
    pub fn linear(self) -> f64 {
        match self {
            Ratio::Linear(v) => v,
            Ratio::Db(db) => db_to_linear(db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchemeKind {
    JointAdaptiveM,
    JointFixedM { m: u32 },
    TimeSwitchingAdaptiveM,
    TimeSwitchingFixedM { m: u32 },
}

impl SchemeKind {
    pub fn scheme(self) -> Scheme {
        match self {
            SchemeKind::JointAdaptiveM | SchemeKind::JointFixedM { .. } => Scheme::Joint,
            SchemeKind::TimeSwitchingAdaptiveM | SchemeKind::TimeSwitchingFixedM { .. } => {
                Scheme::TimeSwitching
            }
        }
    }

    pub fn fixed_m(self) -> Option<u32> {
        match self {
            SchemeKind::JointFixedM { m } | SchemeKind::TimeSwitchingFixedM { m } => Some(m),
            _ => None,
        }
    }

    pub fn id(self) -> String {
        match self {
            SchemeKind::JointAdaptiveM => "joint-adaptive-m".into(),
            SchemeKind::JointFixedM { m } => format!("joint-m{m}"),
            SchemeKind::TimeSwitchingAdaptiveM => "ts-adaptive-m".into(),
            SchemeKind::TimeSwitchingFixedM { m } => format!("ts-m{m}"),
        }
    }

    /// Solves one instance; `Ok(None)` when it is infeasible.
    pub fn solve(self, params: &SystemParams, opts: &SolverOptions) -> Result<Option<PolicySolution>> {
        let out = match self.fixed_m() {
            Some(m) => self.scheme().solve(params, m, opts),
            None => solver::choose_circuit_count_for(self.scheme(), params, opts).map(|(_, s)| s),
        };
        match out {
            Ok(sol) => Ok(Some(sol)),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Energy thresholds of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QGrid {
    /// Fractions of the mean linear capacity `ζ·h̄·P·T` of each curve.
    CapacityFractions { fractions: Vec<f64> },
    /// Absolute thresholds shared by all curves.
    Joules { values: Vec<f64> },
}

impl QGrid {
    pub fn default_fractions() -> Self {
        let mut fractions: Vec<f64> = (0..10).map(|i| f64::from(i) / 10.0).collect();
        fractions.push(0.95);
        QGrid::CapacityFractions { fractions }
    }

    fn values(&self) -> &[f64] {
        match self {
            QGrid::CapacityFractions { fractions } => fractions,
            QGrid::Joules { values } => values,
        }
    }

    /// Thresholds in joules for a curve with the given template.
    pub fn resolve(&self, template: &ParamsTemplate) -> Vec<f64> {
        match self {
            QGrid::CapacityFractions { fractions } => {
                let cap = template.zeta * template.h_bar * template.p_avg * template.t_sym;
                fractions.iter().map(|f| f * cap).collect()
            }
            QGrid::Joules { values } => values.clone(),
        }
    }
}

/// Which channel gain enters `M_max = ⌈ζ·g·P/P_s⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxCircuitsRule {
    RealizedGain,
    MeanGain,
}

/// How infeasible realizations enter the mean rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasiblePolicy {
    /// Count them with rate 0.
    Zero,
    /// Leave them out of the mean.
    Exclude,
}

/// Rules binding the circuit and noise parameters to `h̄` and `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DerivedParams {
    pub t_sym_s: f64,
    pub zeta: f64,
    /// `P_s / (h̄·P)`.
    pub p_sat_per_mean_rx_power: f64,
    /// `P_c / P_s`.
    pub p_circuit_per_p_sat: f64,
    /// `h̄·P / σ²`.
    pub mean_snr: Ratio,
    pub m_max_rule: MaxCircuitsRule,
}

impl Default for DerivedParams {
    fn default() -> Self {
        Self {
            t_sym_s: 1.0,
            zeta: 1.0,
            p_sat_per_mean_rx_power: 0.4,
            p_circuit_per_p_sat: 0.3,
            mean_snr: Ratio::Db(20.0),
            m_max_rule: MaxCircuitsRule::RealizedGain,
        }
    }
}

impl DerivedParams {
    pub fn template(&self, p_avg: f64, h_bar: f64) -> ParamsTemplate {
        let p_sat = self.p_sat_per_mean_rx_power * h_bar * p_avg;
        ParamsTemplate {
            p_avg,
            h_bar,
            t_sym: self.t_sym_s,
            zeta: self.zeta,
            p_sat,
            p_circuit: self.p_circuit_per_p_sat * p_sat,
            noise_var: h_bar * p_avg / self.mean_snr.linear(),
            m_max_rule: self.m_max_rule,
        }
    }
}

/// Everything but the channel gain and the energy demand of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsTemplate {
    pub p_avg: f64,
    pub h_bar: f64,
    pub t_sym: f64,
    pub zeta: f64,
    pub p_sat: f64,
    pub p_circuit: f64,
    /// `σ_A² = σ_cov²`.
    pub noise_var: f64,
    pub m_max_rule: MaxCircuitsRule,
}

impl ParamsTemplate {
    pub fn m_max_for(&self, h: f64) -> u32 {
        let g = match self.m_max_rule {
            MaxCircuitsRule::RealizedGain => h,
            MaxCircuitsRule::MeanGain => self.h_bar,
        };
        let m = (self.zeta * g * self.p_avg / self.p_sat).ceil();
        if m.is_finite() && m >= 1.0 {
            m.min(f64::from(u32::MAX)) as u32
        } else {
            1
        }
    }

    pub fn instantiate(&self, h: f64, q_req: f64) -> SystemParams {
        SystemParams {
            h,
            p_avg: self.p_avg,
            q_req,
            t_sym: self.t_sym,
            zeta: self.zeta,
            p_sat: self.p_sat,
            p_circuit: self.p_circuit,
            var_antenna: self.noise_var,
            var_conv: self.noise_var,
            m_max: self.m_max_for(h),
        }
    }
}

/// Reference parameter rules at budget `p_avg` and mean gain `h_bar`.
pub fn reference_params(p_avg: f64, h_bar: f64) -> ParamsTemplate {
    DerivedParams::default().template(p_avg, h_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub r_factor: f64,
    pub g_los_power: Level,
    pub var_scatter: Level,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            r_factor: 2.0,
            g_los_power: Level::Dbw(-30.0),
            var_scatter: Level::Dbw(-30.0),
        }
    }
}

impl ChannelConfig {
    pub fn model(&self) -> Result<RicianModel> {
        RicianModel::new(self.r_factor, self.g_los_power.linear(), self.var_scatter.linear())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub p_avg_w: f64,
    pub scheme: SchemeKind,
}

impl CurveSpec {
    pub fn new(p_avg_w: f64, scheme: SchemeKind) -> Self {
        Self {
            label: None,
            p_avg_w,
            scheme,
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}@P={}W", self.scheme.id(), self.p_avg_w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_realizations: usize,
    pub seed: u64,
    pub q_grid: QGrid,
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub derived: DerivedParams,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_infeasible")]
    pub infeasible: InfeasiblePolicy,
}

fn default_infeasible() -> InfeasiblePolicy {
    InfeasiblePolicy::Zero
}

impl SweepConfig {
    /// The four curves of the reference figure: adaptive `M` at 1.5 W and
    /// 3 W, and both `M = 1` and adaptive `M` at 2 W.
    pub fn reference_layout(n_realizations: usize, seed: u64) -> Self {
        Self {
            n_realizations,
            seed,
            q_grid: QGrid::default_fractions(),
            curves: vec![
                CurveSpec::new(1.5, SchemeKind::JointAdaptiveM),
                CurveSpec::new(3.0, SchemeKind::JointAdaptiveM),
                CurveSpec::new(2.0, SchemeKind::JointFixedM { m: 1 }),
                CurveSpec::new(2.0, SchemeKind::JointAdaptiveM),
            ],
            channel: ChannelConfig::default(),
            derived: DerivedParams::default(),
            solver: SolverOptions::default(),
            infeasible: InfeasiblePolicy::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_realizations < 1 {
            return bad("n_realizations must be at least 1".into());
        }
        if self.curves.is_empty() {
            return bad("at least one curve is required".into());
        }
        let qs = self.q_grid.values();
        if qs.is_empty() {
            return bad("q_grid must not be empty".into());
        }
        if qs.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return bad("q_grid entries must be finite and nonnegative".into());
        }
        if qs.windows(2).any(|w| w[1] < w[0]) {
            return bad("q_grid entries must be in ascending order".into());
        }
        let d = &self.derived;
        if !(d.p_circuit_per_p_sat > 0.0 && d.p_circuit_per_p_sat < 1.0) {
            return bad("p_circuit_per_p_sat must lie in (0, 1) so that 0 < P_c < P_s".into());
        }
        if !(d.p_sat_per_mean_rx_power > 0.0 && d.p_sat_per_mean_rx_power.is_finite()) {
            return bad("p_sat_per_mean_rx_power must be positive".into());
        }
        if !(d.mean_snr.linear() > 0.0 && d.mean_snr.linear().is_finite()) {
            return bad("mean_snr must be positive".into());
        }
        for c in &self.curves {
            if !(c.p_avg_w.is_finite() && c.p_avg_w > 0.0) {
                return bad(format!("curve {}: p_avg_w must be positive", c.label()));
            }
            if c.scheme.fixed_m() == Some(0) {
                return bad(format!("curve {}: fixed circuit count must be at least 1", c.label()));
            }
            if c.label().contains([',', '\n', '"']) {
                return bad(format!("curve label {:?} must not contain commas, quotes or newlines", c.label()));
            }
        }
        let model = self.channel.model().map_err(|e| Error::Config(e.to_string()))?;
        let h_bar = model.mean_gain();
        for c in &self.curves {
            let probe = self.derived.template(c.p_avg_w, h_bar).instantiate(h_bar, 0.0);
            probe
                .validate()
                .map_err(|e| Error::Config(format!("curve {}: {e}", c.label())))?;
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Short content hash of the configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct REPoint {
    /// Energy threshold (J).
    pub q: f64,
    pub mean_rate: f64,
    pub feasible_fraction: f64,
    /// Average circuit count over feasible realizations (0 if none).
    pub mean_m: f64,
    /// Standard error of `mean_rate`.
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RECurve {
    pub label: String,
    pub scheme: SchemeKind,
    pub p_avg_w: f64,
    pub points: Vec<REPoint>,
    pub config_fingerprint: String,
}

/// Outcome of one realization at one threshold: `(rate, circuit count)`, or
/// `None` when infeasible.
pub type Outcome = Option<(f64, u32)>;

/// Per-realization results of one curve, indexed `[realization][threshold]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTrace {
    pub label: String,
    pub q_values: Vec<f64>,
    pub outcomes: Vec<Vec<Outcome>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub gains: Vec<f64>,
    pub curves: Vec<RECurve>,
    pub traces: Vec<CurveTrace>,
}

fn run_curve(
    config: &SweepConfig,
    spec: &CurveSpec,
    template: &ParamsTemplate,
    q_values: &[f64],
    gains: &[f64],
) -> Result<Vec<Vec<Outcome>>> {
    gains
        .par_iter()
        .map(|&h| {
            q_values
                .iter()
                .map(|&q| {
                    let params = template.instantiate(h, q);
                    let sol = spec.scheme.solve(&params, &config.solver)?;
                    Ok(sol.map(|s| (s.rate, s.m)))
                })
                .collect::<Result<Vec<Outcome>>>()
        })
        .collect()
}

fn aggregate(q_values: &[f64], outcomes: &[Vec<Outcome>], policy: InfeasiblePolicy) -> Vec<REPoint> {
    let n = outcomes.len();
    q_values
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let mut feasible = 0usize;
            let mut m_sum = 0.0;
            let mut rates = Vec::with_capacity(n);
            for row in outcomes {
                match row[k] {
                    Some((rate, m)) => {
                        feasible += 1;
                        m_sum += f64::from(m);
                        rates.push(rate);
                    }
                    None if policy == InfeasiblePolicy::Zero => rates.push(0.0),
                    None => {}
                }
            }
            let (mean_rate, std_err) = mean_and_std_err(&rates);
            REPoint {
                q,
                mean_rate,
                feasible_fraction: feasible as f64 / n as f64,
                mean_m: if feasible > 0 { m_sum / feasible as f64 } else { 0.0 },
                std_err,
            }
        })
        .collect()
}

/// Mean and standard error, summed in index order.
pub fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every curve of the sweep and keeps the per-realization outcomes.
pub fn run_sweep_detailed(config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let model = config.channel.model()?;
    let h_bar = model.mean_gain();
    let gains: Vec<f64> = (0..config.n_realizations as u64)
        .map(|i| channel::draw_for(&model, config.seed, i).h)
        .collect();
    let fingerprint = config.fingerprint();

    let mut curves = Vec::with_capacity(config.curves.len());
    let mut traces = Vec::with_capacity(config.curves.len());
    for spec in &config.curves {
        let template = config.derived.template(spec.p_avg_w, h_bar);
        let q_values = config.q_grid.resolve(&template);
        let outcomes = run_curve(config, spec, &template, &q_values, &gains)?;
        curves.push(RECurve {
            label: spec.label(),
            scheme: spec.scheme,
            p_avg_w: spec.p_avg_w,
            points: aggregate(&q_values, &outcomes, config.infeasible),
            config_fingerprint: fingerprint.clone(),
        });
        traces.push(CurveTrace {
            label: spec.label(),
            q_values,
            outcomes,
        });
    }
    Ok(SweepOutcome {
        gains,
        curves,
        traces,
    })
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<RECurve>> {
    run_sweep_detailed(config).map(|o| o.curves)
}

/// CSV body for a set of curves.
pub fn curves_to_csv(curves: &[RECurve]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            // `{}` on f64 is the shortest representation that round-trips.
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.label, p.q, p.mean_rate, p.feasible_fraction, p.mean_m
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub format_version: u32,
    pub software: String,
    pub generator: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub config: SweepConfig,
}

impl Sidecar {
    pub fn new(config: &SweepConfig) -> Self {
        Self {
            format: SIDECAR_FORMAT.into(),
            format_version: SIDECAR_VERSION,
            software: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            generator: GENERATOR_NAME.into(),
            seed: config.seed,
            config_fingerprint: config.fingerprint(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn export_curves(
    curves: &[RECurve],
    config: &SweepConfig,
    dir: &Path,
    stem: &str,
) -> Result<ExportPaths> {
    if curves.is_empty() {
        return Err(Error::Config("nothing to export: curve list is empty".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ExportPaths {
        csv: dir.join(format!("{stem}.csv")),
        sidecar: dir.join(format!("{stem}.json")),
    };
    fs::write(&paths.csv, curves_to_csv(curves)).map_err(|e| Error::io(&paths.csv, e))?;
    let mut json = serde_json::to_string_pretty(&Sidecar::new(config))
        .map_err(|e| Error::Config(format!("cannot serialize sidecar: {e}")))?;
    json.push('\n');
    fs::write(&paths.sidecar, json).map_err(|e| Error::io(&paths.sidecar, e))?;
    Ok(paths)
}

/// Parses a sweep configuration from TOML text.
pub fn config_from_toml(text: &str) -> Result<SweepConfig> {
    let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses either a sidecar or a bare configuration from JSON text.
pub fn config_from_json(text: &str) -> Result<SweepConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let cfg: SweepConfig = if value.get("format").and_then(|f| f.as_str()) == Some(SIDECAR_FORMAT) {
        let sidecar: Sidecar =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        if sidecar.format_version != SIDECAR_VERSION {
            return Err(Error::Config(format!(
                "unsupported sidecar version {}",
                sidecar.format_version
            )));
        }
        sidecar.config
    } else {
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a configuration file: `.json` files may be sidecars, anything else
/// is read as TOML.
pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        config_from_json(&text)
    } else {
        config_from_toml(&text)
    }
}
