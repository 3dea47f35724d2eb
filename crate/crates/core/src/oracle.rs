//! Brute-force grid search over the reduced four-variable problem.
//!
//! Nothing here uses the closed-form solution, and the rate and
//! harvested-energy expressions are written out again rather than borrowed
//! from [`crate::eh_model`], so that a slip in either place shows up as a
//! disagreement instead of cancelling out.
//!
//! By default the power constraint is taken with equality, which leaves a
//! three-dimensional grid over `(α, ρ, P_EH)`. Transmitting less than the
//! budget in the joint phase can only lower the rate and the harvested
//! energy, so nothing is lost; [`OracleConfig::full_grid`] drops the
//! shortcut and adds a `P_ID` axis for auditing that claim.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eh_model::SystemParams;
use crate::error::{Error, InfeasibleReason, Result};
use crate::solver::PolicySolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Intervals of the `α` grid over `[0, 1]` (both ends included).
    pub alpha_steps: usize,
    /// Intervals of the `ρ` grid over `[0, 1)`; the last point is `1 − 1/rho_steps`.
    pub rho_steps: usize,
    /// Intervals of the `P_EH` grid over `[0, P/α]`.
    pub peh_steps: usize,
    /// Search `P_ID` on its own grid instead of spending the remaining budget.
    pub full_grid: bool,
    /// Intervals of the `P_ID` grid over `[0, P/(1 − α)]` when `full_grid` is set.
    pub pid_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            alpha_steps: 400,
            rho_steps: 400,
            peh_steps: 400,
            full_grid: false,
            pid_steps: 400,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_steps", self.alpha_steps),
            ("rho_steps", self.rho_steps),
            ("peh_steps", self.peh_steps),
            ("pid_steps", self.pid_steps),
        ] {
            if v < 2 {
                return Err(Error::invalid(name, "grid needs at least 2 steps"));
            }
        }
        Ok(())
    }

    /// Same grids with every step count doubled; each old point stays on the
    /// new grid.
    pub fn refined(&self) -> Self {
        Self {
            alpha_steps: self.alpha_steps * 2,
            rho_steps: self.rho_steps * 2,
            peh_steps: self.peh_steps * 2,
            pid_steps: self.pid_steps * 2,
            ..*self
        }
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        i as f64 / self.alpha_steps as f64
    }

    pub fn rho_at(&self, j: usize) -> f64 {
        j as f64 / self.rho_steps as f64
    }

    /// Upper end of the `P_EH` axis at a given `α`.
    pub fn peh_span(&self, p_avg: f64, alpha: f64) -> f64 {
        p_avg / alpha.max(1.0 / self.alpha_steps as f64)
    }
}

/// Harvested energy of one circuit whose input is the share `share` of the
/// received power `h·power`.
fn circuit_energy(p: &SystemParams, power: f64, share: f64) -> f64 {
    let dc = p.zeta * power * share * p.h;
    if dc > p.p_sat {
        p.p_sat * p.t_sym
    } else {
        dc * p.t_sym
    }
}

/// `(rate, net energy)` of an on-off policy, evaluated from scratch.
pub fn evaluate(p: &SystemParams, m: u32, alpha: f64, rho: f64, p_eh: f64, p_id: f64) -> (f64, f64) {
    let circuits = m as f64;
    let eh_only = circuits * circuit_energy(p, p_eh, 1.0 / circuits);
    let joint = circuits * circuit_energy(p, p_id, rho / circuits) - p.p_circuit * p.t_sym;
    let energy = alpha * eh_only + (1.0 - alpha) * joint;
    let rate = if alpha >= 1.0 {
        0.0
    } else {
        let signal = (1.0 - rho) * p.h * p_id;
        let noise = (1.0 - rho) * p.var_antenna + p.var_conv;
        (1.0 - alpha) * (1.0 + signal / noise).log2()
    };
    (rate, energy)
}

#[derive(Debug, Clone, Copy)]
struct Best {
    rate: f64,
    alpha: f64,
    rho: f64,
    p_eh: f64,
    p_id: f64,
    energy: f64,
}

/// Points are visited in lexicographic `(α, ρ, P_EH)` order and only a
/// strictly better rate replaces the incumbent.
fn better(cand: &Best, inc: &Option<Best>) -> bool {
    inc.as_ref().is_none_or(|b| cand.rate > b.rate)
}

fn search_alpha(p: &SystemParams, m: u32, cfg: &OracleConfig, i: usize) -> Option<Best> {
    let alpha = cfg.alpha_at(i);
    let span = cfg.peh_span(p.p_avg, alpha);
    let mut best: Option<Best> = None;
    for j in 0..cfg.rho_steps {
        let rho = cfg.rho_at(j);
        // Within one (α, ρ) row every feasible point is scored; the row
        // winner is the feasible point with the most joint-phase power.
        let mut row: Option<Best> = None;
        for k in 0..=cfg.peh_steps {
            let p_eh = span * k as f64 / cfg.peh_steps as f64;
            let mut visit = |p_id: f64| {
                if p_id < 0.0 || alpha * p_eh + (1.0 - alpha) * p_id > p.p_avg * (1.0 + 1e-12) {
                    return;
                }
                let (rate, energy) = evaluate(p, m, alpha, rho, p_eh, p_id);
                if energy < p.q_req {
                    return;
                }
                let cand = Best {
                    rate,
                    alpha,
                    rho,
                    p_eh,
                    p_id,
                    energy,
                };
                if better(&cand, &row) {
                    row = Some(cand);
                }
            };
            if alpha >= 1.0 {
                visit(0.0);
            } else if cfg.full_grid {
                let top = p.p_avg / (1.0 - alpha);
                for l in 0..=cfg.pid_steps {
                    visit(top * l as f64 / cfg.pid_steps as f64);
                }
            } else {
                visit((p.p_avg - alpha * p_eh) / (1.0 - alpha));
            }
        }
        if let Some(r) = row {
            if better(&r, &best) {
                best = Some(r);
            }
        }
    }
    best
}

/// Exhaustive maximization of `(1 − α)·R(P_ID, ρ)` over the configured grid,
/// keeping only points whose net harvested energy reaches `Q`.
///
/// Ties resolve to the lexicographically smallest `(α, ρ, P_EH)`, independent
/// of how the `α` slices are scheduled across threads.
pub fn brute_force(params: &SystemParams, m: u32, cfg: &OracleConfig) -> Result<PolicySolution> {
    params.validate()?;
    cfg.validate()?;
    if m < 1 {
        return Err(Error::Domain("circuit count must be at least 1".into()));
    }
    let slices: Vec<Option<Best>> = (0..=cfg.alpha_steps)
        .into_par_iter()
        .map(|i| search_alpha(params, m, cfg, i))
        .collect();
    let mut best: Option<Best> = None;
    for b in slices.into_iter().flatten() {
        if better(&b, &best) {
            best = Some(b);
        }
    }
    let b = best.ok_or(Error::Infeasible(InfeasibleReason::NoValidAlpha))?;
    Ok(PolicySolution {
        alpha: b.alpha,
        rho: b.rho,
        p_eh: b.p_eh,
        p_id: b.p_id,
        m,
        rate: b.rate,
        energy: b.energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eh_model::testing::reference_like;
    use approx::assert_relative_eq;

    fn small() -> OracleConfig {
        OracleConfig {
            alpha_steps: 40,
            rho_steps: 40,
            peh_steps: 40,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn no_demand_picks_plain_link() {
        let p = SystemParams {
            p_circuit: 1e-15,
            ..reference_like().with_q(0.0)
        };
        let cfg = small();
        let sol = brute_force(&p, 1, &cfg).unwrap();
        // ρ = 0 would leave the vanishing circuit draw unpaid, so the first
        // nonzero grid split wins.
        assert_eq!(sol.alpha, 0.0);
        assert_eq!(sol.rho, cfg.rho_at(1));
        assert_eq!(sol.p_eh, 0.0);
        assert_relative_eq!(sol.p_id, p.p_avg);
    }

    #[test]
    fn two_point_alpha_grid_still_feasible() {
        let p = reference_like().with_q(0.0);
        let cfg = OracleConfig {
            alpha_steps: 2,
            ..small()
        };
        let sol = brute_force(&p, 1, &cfg).unwrap();
        assert!(sol.energy >= 0.0);
        assert!(sol.average_power() <= p.p_avg * (1.0 + 1e-12));
    }

    #[test]
    fn returned_point_satisfies_constraints() {
        let p = reference_like().with_q(1.2e-3);
        let sol = brute_force(&p, 2, &small()).unwrap();
        let (rate, energy) = evaluate(&p, 2, sol.alpha, sol.rho, sol.p_eh, sol.p_id);
        assert_eq!(rate, sol.rate);
        assert!(energy >= p.q_req);
        assert!(sol.average_power() <= p.p_avg * (1.0 + 1e-12));
    }

    #[test]
    fn infeasible_demand() {
        let p = reference_like().with_q(reference_like().linear_capacity() * 1.05);
        assert!(brute_force(&p, 4, &small()).unwrap_err().is_infeasible());
    }

    #[test]
    fn refining_never_hurts() {
        let p = reference_like().with_q(9e-4);
        let coarse = brute_force(&p, 2, &small()).unwrap();
        let fine = brute_force(&p, 2, &small().refined()).unwrap();
        assert!(fine.rate >= coarse.rate);
    }

    #[test]
    fn unsaturated_instances_ignore_extra_circuits() {
        // P_s large enough that no grid point can saturate one circuit.
        let cfg = small();
        let base = reference_like();
        let p = SystemParams {
            p_sat: base.zeta * base.h * base.p_avg * cfg.alpha_steps as f64 * 2.0,
            ..base.with_q(1e-3)
        };
        let a = brute_force(&p, 1, &cfg).unwrap();
        let b = brute_force(&p, 2, &cfg).unwrap();
        assert_eq!(a.rate, b.rate);
        assert_eq!((a.alpha, a.rho, a.p_eh), (b.alpha, b.rho, b.p_eh));
    }

    #[test]
    fn full_grid_never_beats_budget_equality() {
        let cfg = OracleConfig {
            alpha_steps: 16,
            rho_steps: 16,
            peh_steps: 16,
            pid_steps: 16,
            full_grid: false,
        };
        let p = reference_like().with_q(6e-4);
        let eq = brute_force(&p, 2, &cfg).unwrap();
        let full = brute_force(&p, 2, &OracleConfig { full_grid: true, ..cfg }).unwrap();
        assert!(full.rate <= eq.rate);
    }

    #[test]
    fn rejects_degenerate_grid() {
        let cfg = OracleConfig {
            rho_steps: 1,
            ..small()
        };
        assert!(brute_force(&reference_like(), 1, &cfg).is_err());
    }
}
