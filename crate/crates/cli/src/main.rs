use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use swipt_core::experiments::{self, SweepConfig};
use swipt_core::oracle::OracleConfig;
use swipt_core::solver::{self, PolicySolution, Scheme, SolverOptions};
use swipt_core::verify::{self, VerifyConfig, VerifyReport, REFERENCE_MEAN_GAIN};
use swipt_core::{Error, SystemParams};

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_VERIFY_FAILED: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_INTERNAL: u8 = 1;

const SOLVE_SCHEMA: &str = "swipt-solve";
const VERIFY_SCHEMA: &str = "swipt-verify";
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "swipt", version, about = "Rate-optimal SWIPT policies with saturating energy harvesters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance.
    Solve(SolveArgs),
    /// Compare the solver against the brute-force oracle.
    Verify(VerifyArgs),
    /// Run a Monte Carlo rate-energy sweep and write CSV plus sidecar.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Joint,
    TimeSwitching,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Joint => Scheme::Joint,
            SchemeArg::TimeSwitching => Scheme::TimeSwitching,
        }
    }
}

/// Instance parameters; every field may come from a file, the reference
/// defaults or a flag, with flags taking precedence.
#[derive(Args, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFlags {
    /// Channel power gain (linear).
    #[arg(long)]
    #[serde(default)]
    h: Option<f64>,
    /// Average transmit power budget (W).
    #[arg(long = "p-avg-w")]
    #[serde(default)]
    p_avg_w: Option<f64>,
    /// Required net harvested energy per block (J).
    #[arg(long = "q-req-j")]
    #[serde(default)]
    q_req_j: Option<f64>,
    /// Block duration (s).
    #[arg(long = "t-sym-s")]
    #[serde(default)]
    t_sym_s: Option<f64>,
    /// Energy conversion efficiency.
    #[arg(long)]
    #[serde(default)]
    zeta: Option<f64>,
    /// Saturation power of one EH circuit (W).
    #[arg(long = "p-sat-w")]
    #[serde(default)]
    p_sat_w: Option<f64>,
    /// Power drawn by the ID circuitry (W).
    #[arg(long = "p-circuit-w")]
    #[serde(default)]
    p_circuit_w: Option<f64>,
    /// Antenna noise variance (W).
    #[arg(long = "var-antenna-w")]
    #[serde(default)]
    var_antenna_w: Option<f64>,
    /// Conversion noise variance (W).
    #[arg(long = "var-conv-w")]
    #[serde(default)]
    var_conv_w: Option<f64>,
    /// Largest number of EH circuits.
    #[arg(long = "m-max")]
    #[serde(default)]
    m_max: Option<u32>,
}

impl ParamFlags {
    fn overlay(self, top: ParamFlags) -> ParamFlags {
        ParamFlags {
            h: top.h.or(self.h),
            p_avg_w: top.p_avg_w.or(self.p_avg_w),
            q_req_j: top.q_req_j.or(self.q_req_j),
            t_sym_s: top.t_sym_s.or(self.t_sym_s),
            zeta: top.zeta.or(self.zeta),
            p_sat_w: top.p_sat_w.or(self.p_sat_w),
            p_circuit_w: top.p_circuit_w.or(self.p_circuit_w),
            var_antenna_w: top.var_antenna_w.or(self.var_antenna_w),
            var_conv_w: top.var_conv_w.or(self.var_conv_w),
            m_max: top.m_max.or(self.m_max),
        }
    }

    fn reference(p_avg: f64, q_req: f64) -> ParamFlags {
        let t = experiments::reference_params(p_avg, REFERENCE_MEAN_GAIN);
        let h = REFERENCE_MEAN_GAIN;
        ParamFlags {
            h: Some(h),
            p_avg_w: Some(p_avg),
            q_req_j: Some(q_req),
            t_sym_s: Some(t.t_sym),
            zeta: Some(t.zeta),
            p_sat_w: Some(t.p_sat),
            p_circuit_w: Some(t.p_circuit),
            var_antenna_w: Some(t.noise_var),
            var_conv_w: Some(t.noise_var),
            m_max: Some(t.m_max_for(h)),
        }
    }

    fn build(&self) -> Result<SystemParams, Failure> {
        let mut missing = Vec::new();
        let mut need = |name: &str, v: Option<f64>| {
            if v.is_none() {
                missing.push(format!("--{name}"));
            }
            v.unwrap_or(f64::NAN)
        };
        let p = SystemParams {
            h: need("h", self.h),
            p_avg: need("p-avg-w", self.p_avg_w),
            q_req: need("q-req-j", self.q_req_j),
            t_sym: need("t-sym-s", self.t_sym_s),
            zeta: need("zeta", self.zeta),
            p_sat: need("p-sat-w", self.p_sat_w),
            p_circuit: need("p-circuit-w", self.p_circuit_w),
            var_antenna: need("var-antenna-w", self.var_antenna_w),
            var_conv: need("var-conv-w", self.var_conv_w),
            m_max: 0,
        };
        if self.m_max.is_none() {
            missing.push("--m-max".into());
        }
        if !missing.is_empty() {
            return Err(Failure::usage(format!(
                "missing parameters: {} (give them as flags, in --params, or use --reference-defaults)",
                missing.join(", ")
            )));
        }
        let p = SystemParams {
            m_max: self.m_max.unwrap_or(1),
            ..p
        };
        p.validate().map_err(Failure::from)?;
        Ok(p)
    }
}

#[derive(Args)]
struct SolveArgs {
    /// TOML file with instance parameters (keys as the long flags, with `_`).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Start from the reference setup: h = h̄ = 1e-3, P_s = 0.4·h̄·P,
    /// P_c = 0.3·P_s, h̄P/σ² = 20 dB, T = 1 s, ζ = 1. Needs --p-avg-w and --q-req-j.
    #[arg(long)]
    reference_defaults: bool,
    #[command(flatten)]
    flags: ParamFlags,
    /// Number of EH circuits.
    #[arg(long, conflicts_with = "adaptive", required_unless_present = "adaptive")]
    m: Option<u32>,
    /// Choose the circuit count automatically.
    #[arg(long)]
    adaptive: bool,
    #[arg(long, value_enum, default_value = "joint")]
    scheme: SchemeArg,
    #[command(flatten)]
    solver: SolverFlags,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SolverFlags {
    /// Points of the solver's α grid.
    #[arg(long = "solver-alpha-points")]
    alpha_points: Option<usize>,
    /// Refinement steps after the α grid search.
    #[arg(long = "refine-iterations")]
    refine_iterations: Option<usize>,
}

impl SolverFlags {
    fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            alpha_grid_points: self.alpha_points.unwrap_or(d.alpha_grid_points),
            refine_iterations: self.refine_iterations.unwrap_or(d.refine_iterations),
            ..d
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Intervals of each oracle axis.
    #[arg(long = "oracle-steps", default_value_t = 400)]
    oracle_steps: usize,
    /// Also search the joint-phase power on its own grid.
    #[arg(long)]
    full_grid: bool,
    /// Check this instance instead of random ones.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Circuit count for --params.
    #[arg(long, default_value_t = 1, requires = "params")]
    m: u32,
    #[command(flatten)]
    solver: SolverFlags,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration (TOML, or a JSON sidecar from an earlier run).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of realizations.
    #[arg(long)]
    realizations: Option<usize>,
    /// File name stem of the outputs (defaults to the config file stem).
    #[arg(long)]
    stem: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Io { .. } => EXIT_IO,
            Error::InvalidParams { .. } | Error::Domain(_) | Error::Config(_) => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn read_param_file(path: &Path) -> Result<ParamFlags, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))?;
    toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    schema: &'static str,
    schema_version: u32,
    scheme: Scheme,
    params: &'a SystemParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<&'a PolicySolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasible: Option<String>,
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let mut base = ParamFlags::default();
    if let Some(path) = &args.params {
        base = base.overlay(read_param_file(path)?);
    }
    if args.reference_defaults {
        let merged = base.clone().overlay(args.flags.clone());
        let (Some(p_avg), Some(q)) = (merged.p_avg_w, merged.q_req_j) else {
            return Err(Failure::usage("--reference-defaults needs --p-avg-w and --q-req-j"));
        };
        base = ParamFlags::reference(p_avg, q).overlay(base);
    }
    let params = base.overlay(args.flags).build()?;
    let opts = args.solver.options();
    opts.validate().map_err(Failure::from)?;
    let scheme = Scheme::from(args.scheme);

    let result = match args.m {
        Some(m) => scheme.solve(&params, m, &opts),
        None => solver::choose_circuit_count_for(scheme, &params, &opts).map(|(_, s)| s),
    };
    let (solution, infeasible) = match result {
        Ok(sol) => (Some(sol), None),
        Err(Error::Infeasible(reason)) => (None, Some(reason.to_string())),
        Err(e) => return Err(e.into()),
    };

    if args.json {
        print_json(&SolveOutput {
            schema: SOLVE_SCHEMA,
            schema_version: SCHEMA_VERSION,
            scheme,
            params: &params,
            solution: solution.as_ref(),
            infeasible: infeasible.clone(),
        });
    } else if let Some(s) = &solution {
        println!("alpha   {}", s.alpha);
        println!("rho     {}", s.rho);
        println!("P_EH    {} W", s.p_eh);
        println!("P_ID    {} W", s.p_id);
        println!("M       {}", s.m);
        println!("rate    {} bit/channel use", s.rate);
        println!("energy  {} J", s.energy);
    }
    match infeasible {
        Some(reason) => Err(Failure {
            code: EXIT_INFEASIBLE,
            message: format!("infeasible: {reason}"),
        }),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    schema: &'static str,
    schema_version: u32,
    max_abs_gap: f64,
    mean_abs_gap: f64,
    violations: usize,
    report: &'a VerifyReport,
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    if args.instances == 0 {
        return Err(Failure::usage("--instances must be at least 1"));
    }
    let steps = args.oracle_steps;
    let cfg = VerifyConfig {
        instances: args.instances,
        seed: args.seed,
        oracle: OracleConfig {
            alpha_steps: steps,
            rho_steps: steps,
            peh_steps: steps,
            pid_steps: steps,
            full_grid: args.full_grid,
        },
        solver: args.solver.options(),
    };
    cfg.oracle.validate().map_err(Failure::from)?;
    cfg.solver.validate().map_err(Failure::from)?;

    let report = match &args.params {
        Some(path) => {
            let params = ParamFlags::default().overlay(read_param_file(path)?).build()?;
            let one = verify::check_instance(0, &params, args.m, &cfg).map_err(Failure::from)?;
            VerifyReport {
                config: VerifyConfig { instances: 1, ..cfg },
                instances: vec![one],
            }
        }
        None => verify::run_verification(&cfg).map_err(Failure::from)?,
    };

    if args.json {
        print_json(&VerifyOutput {
            schema: VERIFY_SCHEMA,
            schema_version: SCHEMA_VERSION,
            max_abs_gap: report.max_abs_gap(),
            mean_abs_gap: report.mean_abs_gap(),
            violations: report.violations(),
            report: &report,
        });
    } else {
        println!(
            "{:>5} {:>2} {:>14} {:>14} {:>11} {:>11}  ok",
            "#", "M", "solver", "oracle", "gap", "eps_grid"
        );
        for r in &report.instances {
            println!(
                "{:>5} {:>2} {:>14.9} {:>14.9} {:>11.3e} {:>11.3e}  {}",
                r.index,
                r.m,
                r.solver.rate,
                r.oracle.rate,
                r.gap,
                r.epsilon,
                if r.passed() { "yes" } else { "NO" }
            );
        }
        println!("max |gap|  {:.3e}", report.max_abs_gap());
        println!("mean |gap| {:.3e}", report.mean_abs_gap());
        println!("violations {} of {}", report.violations(), report.instances.len());
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY_FAILED,
            message: format!(
                "{} instance(s) outside the grid bound",
                report.violations()
            ),
        })
    }
}

/// Fails early if `dir` cannot hold the outputs.
fn check_writable(dir: &Path) -> Result<(), Failure> {
    let io = |source| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source,
        })
    };
    fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".swipt-write-probe");
    fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b""))
        .map_err(io)?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut cfg: SweepConfig = experiments::load_config(&args.config).map_err(Failure::from)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.realizations {
        cfg.n_realizations = n;
    }
    cfg.validate().map_err(Failure::from)?;
    let stem = match args.stem {
        Some(s) => s,
        None => args
            .config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into()),
    };
    check_writable(&args.out)?;

    let curves = experiments::run_sweep(&cfg).map_err(Failure::from)?;
    let paths = experiments::export_curves(&curves, &cfg, &args.out, &stem).map_err(Failure::from)?;

    println!(
        "{:<28} {:>11} {:>10} {:>9} {:>9} {:>6}",
        "curve", "Q (J)", "rate", "std err", "feasible", "M"
    );
    for c in &curves {
        for p in &c.points {
            println!(
                "{:<28} {:>11.4e} {:>10.5} {:>9.2e} {:>9.4} {:>6.3}",
                c.label, p.q, p.mean_rate, p.std_err, p.feasible_fraction, p.mean_m
            );
        }
    }
    println!("wrote {}", paths.csv.display());
    println!("wrote {}", paths.sidecar.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("swipt: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
