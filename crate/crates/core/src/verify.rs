//! Randomized comparison of the closed-form solver against the brute-force
//! oracle.
//!
//! Each instance is drawn log-uniformly around the reference simulation
//! setup (`h̄ = 10⁻³`, `P_s = 0.4·h̄·P`, `P_c = 0.3·P_s`, `h̄P/σ² = 20 dB`)
//! with an energy demand somewhere inside the feasible range. The oracle can
//! only reach grid points, so the two objectives are compared against a
//! per-instance bound on how much the grid can lose near the optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::eh_model::SystemParams;
use crate::error::Result;
use crate::oracle::{self, OracleConfig};
use crate::solver::{self, PolicySolution, SolverOptions};

/// Mean channel gain the random instances are centred on.
pub const REFERENCE_MEAN_GAIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub instances: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
    pub solver: SolverOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 1,
            oracle: OracleConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    pub params: SystemParams,
    pub m: u32,
    pub solver: PolicySolution,
    pub oracle: PolicySolution,
    /// `rate(solver) − rate(oracle)`.
    pub gap: f64,
    /// Grid-resolution bound on `|gap|`.
    pub epsilon: f64,
    /// The solver's policy meets both constraints when re-evaluated by the
    /// oracle's own model code.
    pub solver_feasible: bool,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.solver_feasible && self.gap.abs() <= self.epsilon
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub instances: Vec<InstanceReport>,
}

impl VerifyReport {
    pub fn max_abs_gap(&self) -> f64 {
        self.instances.iter().map(|r| r.gap.abs()).fold(0.0, f64::max)
    }

    pub fn mean_abs_gap(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        self.instances.iter().map(|r| r.gap.abs()).sum::<f64>() / self.instances.len() as f64
    }

    pub fn violations(&self) -> usize {
        self.instances.iter().filter(|r| !r.passed()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.violations() == 0
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// A random feasible instance and the circuit count to solve it with.
pub fn random_instance<R: Rng>(rng: &mut R) -> (SystemParams, u32) {
    let h_bar = REFERENCE_MEAN_GAIN;
    let p_avg = log_uniform(rng, 1.0, 4.0);
    let h = h_bar * log_uniform(rng, 0.3, 3.0);
    let p_sat = 0.4 * h_bar * p_avg * log_uniform(rng, 0.5, 2.0);
    let p_circuit = 0.3 * p_sat * log_uniform(rng, 0.5, 2.0);
    let noise = h_bar * p_avg / 100.0 * log_uniform(rng, 0.1, 10.0);
    let zeta = log_uniform(rng, 0.5, 1.0);
    let m = rng.random_range(1..=4u32);
    let mut params = SystemParams {
        h,
        p_avg,
        q_req: 0.0,
        t_sym: 1.0,
        zeta,
        p_sat,
        p_circuit,
        var_antenna: noise,
        var_conv: noise,
        m_max: 8,
    };
    let ceiling = params.linear_capacity().min(f64::from(m) * p_sat * params.t_sym);
    params.q_req = ceiling * rng.random_range(0.0..0.98);
    (params, m)
}

/// First-order bound on how far the best oracle grid point can fall below
/// the continuous optimum `sol`.
///
/// Starting from `sol`, round `α` to the nearest grid point and `P_EH` up to
/// the next one, then raise `ρ` until the energy lost to the `α` move is
/// recovered and round it up as well. The objective change of each move is
/// estimated from the partial derivatives at `sol`, with the joint-phase
/// power tied to the budget as in the oracle. The sum is doubled to cover
/// curvature over one grid cell.
pub fn epsilon_grid(params: &SystemParams, sol: &PolicySolution, cfg: &OracleConfig) -> f64 {
    let p = params;
    let (alpha, rho, p_eh, p_id) = (sol.alpha, sol.rho, sol.p_eh, sol.p_id);
    let d_alpha = 1.0 / cfg.alpha_steps as f64;
    let d_rho = 1.0 / cfg.rho_steps as f64;
    let d_peh = cfg.peh_span(p.p_avg, alpha) / cfg.peh_steps as f64;
    let ln2 = std::f64::consts::LN_2;

    let split = 1.0 - rho;
    let noise = split * p.var_antenna + p.var_conv;
    let snr = split * p.h * p_id / noise;
    let rate = snr.ln_1p() / ln2;
    // ∂R/∂P_ID and ∂R/∂ρ at fixed power.
    let r_p = split * p.h / (noise * (1.0 + snr) * ln2);
    let r_rho = -p.h * p_id * p.var_conv / (noise * noise * (1.0 + snr) * ln2);

    let idle = 1.0 - alpha;
    let f_alpha = -rate + r_p * (p_id - p_eh);
    let f_peh = alpha * r_p;
    let f_rho = idle * r_rho;

    let zht = p.zeta * p.h * p.t_sym;
    let e_alpha = zht * p_eh * split + p.p_circuit * p.t_sym;
    let e_rho = zht * idle * p_id;
    let rho_shift = if e_rho > 0.0 {
        (d_rho + e_alpha * 0.5 * d_alpha / e_rho).min(1.0)
    } else {
        1.0
    };

    let first_order =
        f_alpha.abs() * 0.5 * d_alpha + f_peh.abs() * d_peh + f_rho.abs() * rho_shift;
    2.0 * first_order + 1e-12
}

/// Solves one instance both ways and records the comparison.
pub fn check_instance(
    index: usize,
    params: &SystemParams,
    m: u32,
    cfg: &VerifyConfig,
) -> Result<InstanceReport> {
    let sol = solver::solve_joint(params, m, &cfg.solver)?;
    let orc = oracle::brute_force(params, m, &cfg.oracle)?;
    let (_, energy) = oracle::evaluate(params, m, sol.alpha, sol.rho, sol.p_eh, sol.p_id);
    let tol = cfg.solver.feasibility_tol;
    let energy_ok = energy >= params.q_req - tol * params.q_req.max(params.p_circuit * params.t_sym);
    let power_ok = sol.average_power() <= params.p_avg * (1.0 + tol);
    Ok(InstanceReport {
        index,
        params: *params,
        m,
        solver: sol,
        oracle: orc,
        gap: sol.rate - orc.rate,
        epsilon: epsilon_grid(params, &sol, &cfg.oracle),
        solver_feasible: energy_ok && power_ok,
    })
}

/// Runs `cfg.instances` random instances in order.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.instances);
    for index in 0..cfg.instances {
        let (params, m) = random_instance(&mut rng);
        instances.push(check_instance(index, &params, m, cfg)?);
    }
    Ok(VerifyReport {
        config: *cfg,
        instances,
    })
}
