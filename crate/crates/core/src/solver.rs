//! Jointly optimal transmit power allocation and receive power splitting.
//!
//! The optimal dynamic policy has an on-off structure: for a fraction `α` of
//! the block the receiver only harvests (split ratio 1) while the transmitter
//! radiates `P_EH`; for the remaining `1 − α` it radiates `P_ID` and splits the
//! received power with ratio `ρ < 1`. For a fixed `α` the best `ρ` and both
//! powers are available in closed form, which leaves a one-dimensional search
//! over `α ∈ [α_low, 1]`.
//!
//! The search is a uniform grid followed by interval halving around the best
//! grid point. The objective is not known to be unimodal, so the grid decides
//! which basin wins and the halving only polishes inside it.

use serde::{Deserialize, Serialize};

use crate::eh_model::{net_harvest_unchecked, rate_unchecked, SystemParams};
use crate::error::{Error, InfeasibleReason, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Number of samples of the uniform grid over `[α_low, 1]`.
    pub alpha_grid_points: usize,
    /// Interval-halving steps around the best grid point.
    pub refine_iterations: usize,
    /// Relative tolerance for constraint checks and power clamping.
    pub feasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            alpha_grid_points: 10_001,
            refine_iterations: 40,
            feasibility_tol: 1e-9,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid_points < 2 {
            return Err(Error::invalid("alpha_grid_points", "need at least 2 grid points"));
        }
        if !(self.feasibility_tol.is_finite() && self.feasibility_tol > 0.0) {
            return Err(Error::invalid("feasibility_tol", "must be positive and finite"));
        }
        Ok(())
    }
}

/// An on-off power-splitting policy together with what it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySolution {
    /// Fraction of the block spent harvesting only.
    pub alpha: f64,
    /// Split ratio during the joint phase.
    pub rho: f64,
    /// Transmit power during the EH-only phase (W).
    pub p_eh: f64,
    /// Transmit power during the joint phase (W).
    pub p_id: f64,
    /// Number of EH circuits switched on.
    pub m: u32,
    /// `(1 − α)·R(P_ID, ρ)` in bits per channel use.
    pub rate: f64,
    /// Net harvested energy per block (J).
    pub energy: f64,
}

impl PolicySolution {
    /// Average transmit power `α·P_EH + (1 − α)·P_ID`.
    pub fn average_power(&self) -> f64 {
        self.alpha * self.p_eh + (1.0 - self.alpha) * self.p_id
    }
}

/// Which reduced problem a solve call addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Joint power allocation and power splitting.
    Joint,
    /// Power allocation with time switching only (`ρ = 0` in the joint phase).
    TimeSwitching,
}

impl Scheme {
    pub fn solve(self, params: &SystemParams, m: u32, opts: &SolverOptions) -> Result<PolicySolution> {
        match self {
            Scheme::Joint => solve_joint(params, m, opts),
            Scheme::TimeSwitching => solve_time_switching(params, m, opts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub m: u32,
    pub feasible: bool,
    pub reason: Option<InfeasibleReason>,
}

/// Counters collected while searching over `α`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct JointDiagnostics {
    pub grid_points: usize,
    pub valid_points: usize,
    /// Grid points where `min{ρ₁, ρ₂}` falls below the lower bound on `ρ`
    /// imposed by keeping the EH-only phase out of saturation.
    pub lower_bound_conflicts: usize,
}

/// Smallest EH-only fraction for which the joint phase can still pay for its
/// own circuit power: `max{1 − (ζhPT − Q)/(P_c·T), 0}`.
pub fn alpha_low(params: &SystemParams) -> Result<f64> {
    let cap = params.linear_capacity();
    if params.q_req > cap {
        return Err(Error::Infeasible(InfeasibleReason::LinearCapacity {
            q_req: params.q_req,
            capacity: cap,
        }));
    }
    let v = 1.0 - (cap - params.q_req) / (params.p_circuit * params.t_sym);
    Ok(v.clamp(0.0, 1.0))
}

/// The two upper bounds on the joint-phase split ratio at a given `α`:
/// `ρ₁` keeps `P_EH ≥ 0`, `ρ₂` keeps the joint phase out of saturation.
pub fn rho_candidates(params: &SystemParams, m: u32, alpha: f64) -> Result<(f64, f64)> {
    check_m(m)?;
    let low = alpha_low(params)?;
    if !(alpha.is_finite() && alpha <= 1.0) || alpha < low {
        return Err(Error::Infeasible(InfeasibleReason::AlphaBelowLow {
            alpha,
            alpha_low: low,
        }));
    }
    Ok(rho_pair(params, m, alpha))
}

#[inline]
fn rho_pair(params: &SystemParams, m: u32, alpha: f64) -> (f64, f64) {
    let cap = params.linear_capacity();
    let t = params.t_sym;
    let idle = 1.0 - alpha;
    let rho1 = (params.q_req + idle * params.p_circuit * t) / cap;
    let sat = idle * f64::from(m) * params.p_sat * t;
    let rho2 = if sat == 0.0 {
        0.0
    } else {
        sat / (sat + cap - params.q_req - idle * params.p_circuit * t)
    };
    (rho1, rho2)
}

/// Lower bound on `ρ` that keeps each circuit in the EH-only phase out of
/// saturation when both constraints hold with equality.
pub fn rho_lower_bound(params: &SystemParams, m: u32, alpha: f64) -> f64 {
    let t = params.t_sym;
    let sat = alpha * f64::from(m) * params.p_sat * t;
    let den = params.linear_capacity() - sat;
    if den <= 0.0 {
        return 0.0;
    }
    ((params.q_req + (1.0 - alpha) * params.p_circuit * t - sat) / den).max(0.0)
}

/// Transmit powers `(P_EH, P_ID)` for a given `α` and `ρ` with both
/// constraints met with equality. `P_EH = 0` at `α = 0` and `P_ID = 0` at
/// `α = 1`.
pub fn powers_for(params: &SystemParams, alpha: f64, rho: f64) -> Result<(f64, f64)> {
    let low = alpha_low(params)?;
    if !(alpha.is_finite() && alpha <= 1.0) || alpha < low {
        return Err(Error::Infeasible(InfeasibleReason::AlphaBelowLow {
            alpha,
            alpha_low: low,
        }));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("split ratio must lie in [0, 1), got {rho}")));
    }
    match raw_powers(params, alpha, rho) {
        Some((p_eh, p_id)) => {
            let tol = SolverOptions::default().feasibility_tol * params.p_avg;
            let p_eh = clamp_power(p_eh, tol)
                .ok_or_else(|| Error::NumericalDomain(format!("P_EH = {p_eh} is negative")))?;
            let p_id = clamp_power(p_id, tol)
                .ok_or_else(|| Error::NumericalDomain(format!("P_ID = {p_id} is negative")))?;
            Ok((p_eh, p_id))
        }
        None => Err(Error::NumericalDomain(format!(
            "power denominators vanish at alpha = {alpha}, rho = {rho}"
        ))),
    }
}

/// Unclamped closed-form powers, `None` when a denominator that the branch
/// needs is zero or the result is not finite.
#[inline]
fn raw_powers(params: &SystemParams, alpha: f64, rho: f64) -> Option<(f64, f64)> {
    let cap = params.linear_capacity();
    let t = params.t_sym;
    let zh = params.zeta * params.h * t;
    let split = 1.0 - rho;
    let idle = 1.0 - alpha;
    let p_eh = if alpha > 0.0 {
        // Q + (1−α)P_cT − ζρhPT written as ζhPT·(ρ₁ − ρ), which is exactly 0
        // whenever ρ = ρ₁.
        let rho1 = (params.q_req + idle * params.p_circuit * t) / cap;
        let num = if rho == rho1 { 0.0 } else { cap * (rho1 - rho) };
        num / (alpha * zh * split)
    } else {
        0.0
    };
    let p_id = if alpha < 1.0 {
        (cap - params.q_req - idle * params.p_circuit * t) / (idle * zh * split)
    } else {
        0.0
    };
    (p_eh.is_finite() && p_id.is_finite()).then_some((p_eh, p_id))
}

#[inline]
fn clamp_power(p: f64, tol: f64) -> Option<f64> {
    if p >= 0.0 {
        Some(p)
    } else if p >= -tol {
        Some(0.0)
    } else {
        None
    }
}

fn check_m(m: u32) -> Result<()> {
    if m < 1 {
        Err(Error::Domain("circuit count must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Shared per-instance constants for the point evaluators.
struct Instance<'a> {
    params: &'a SystemParams,
    m: u32,
    power_tol: f64,
    energy_tol: f64,
    sat_limit: f64,
}

impl<'a> Instance<'a> {
    fn new(params: &'a SystemParams, m: u32, tol: f64) -> Self {
        let scale = params.q_req.max(params.p_circuit * params.t_sym);
        Self {
            params,
            m,
            power_tol: tol * params.p_avg,
            energy_tol: tol * scale,
            sat_limit: f64::from(m) * params.p_sat * (1.0 + tol),
        }
    }

    /// Validates powers against both constraints and packages the point.
    fn finish(&self, alpha: f64, rho: f64, p_eh: f64, p_id: f64) -> Option<PolicySolution> {
        let p = self.params;
        let p_eh = clamp_power(p_eh, self.power_tol)?;
        let p_id = clamp_power(p_id, self.power_tol)?;
        if alpha * p_eh + (1.0 - alpha) * p_id > p.p_avg + self.power_tol {
            return None;
        }
        let energy = net_harvest_unchecked(p, self.m, alpha, p_eh, p_id, rho);
        if energy < p.q_req - self.energy_tol {
            return None;
        }
        let rate = if alpha < 1.0 {
            (1.0 - alpha) * rate_unchecked(p, p_id, rho)
        } else {
            0.0
        };
        Some(PolicySolution {
            alpha,
            rho,
            p_eh,
            p_id,
            m: self.m,
            rate,
            energy,
        })
    }

    fn joint_point(&self, alpha: f64) -> Option<PolicySolution> {
        let (rho1, rho2) = rho_pair(self.params, self.m, alpha);
        let rho = rho1.min(rho2);
        // ρ reaches 1 only at α = α_low > 0, where the rate tends to 0.
        if !(0.0..1.0).contains(&rho) {
            return None;
        }
        // Below the lower bound the EH-only phase saturates. The energy check
        // would catch it too, but only up to its tolerance, and the search
        // would then settle just past the boundary.
        if self.below_lower_bound(alpha, rho) {
            return None;
        }
        let (p_eh, p_id) = raw_powers(self.params, alpha, rho)?;
        self.finish(alpha, rho, p_eh, p_id)
    }

    fn below_lower_bound(&self, alpha: f64, rho: f64) -> bool {
        alpha > 0.0 && rho < rho_lower_bound(self.params, self.m, alpha) - LOWER_BOUND_SLACK
    }

    fn lower_bound_conflict(&self, alpha: f64) -> bool {
        let (rho1, rho2) = rho_pair(self.params, self.m, alpha);
        let rho = rho1.min(rho2);
        rho < 1.0 && self.below_lower_bound(alpha, rho)
    }

    fn time_switching_point(&self, alpha: f64) -> Option<PolicySolution> {
        let p = self.params;
        let t = p.t_sym;
        let zh = p.zeta * p.h * t;
        let demand = p.q_req + (1.0 - alpha) * p.p_circuit * t;
        let p_eh = if alpha > 0.0 { demand / (alpha * zh) } else { 0.0 };
        if p.zeta * p.h * p_eh > self.sat_limit {
            return None;
        }
        let p_id = if alpha < 1.0 {
            (p.p_avg - alpha * p_eh) / (1.0 - alpha)
        } else {
            0.0
        };
        if !(p_eh.is_finite() && p_id.is_finite()) {
            return None;
        }
        self.finish(alpha, 0.0, p_eh, p_id)
    }
}

/// Grid search over `[lo, hi]` followed by interval halving around the best
/// grid point. Ties keep the smallest `α`.
/// Rounding allowance on the split-ratio lower bound.
const LOWER_BOUND_SLACK: f64 = 1e-14;

fn line_search<F>(lo: f64, hi: f64, opts: &SolverOptions, mut eval: F) -> Option<PolicySolution>
where
    F: FnMut(f64) -> Option<PolicySolution>,
{
    let n = opts.alpha_grid_points;
    if hi <= lo {
        return eval(hi);
    }
    let at = |i: usize| {
        if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
        }
    };

    let mut best: Option<(usize, PolicySolution)> = None;
    for i in 0..n {
        if let Some(sol) = eval(at(i)) {
            if best.as_ref().is_none_or(|(_, b)| sol.rate > b.rate) {
                best = Some((i, sol));
            }
        }
    }
    let (idx, mut incumbent) = best?;
    // Refinement only moves on a gain above rounding noise so that flat
    // stretches keep the smaller α.
    let gain = |cand: &PolicySolution, inc: &PolicySolution| {
        cand.rate > inc.rate + 4.0 * f64::EPSILON * inc.rate.abs()
    };

    let mut left = at(idx.saturating_sub(1));
    let mut right = at((idx + 1).min(n - 1));
    for _ in 0..opts.refine_iterations {
        let x = incumbent.alpha;
        let mid_left = 0.5 * (left + x);
        let mid_right = 0.5 * (x + right);
        match (eval(mid_left), eval(mid_right)) {
            (Some(a), _) if gain(&a, &incumbent) => {
                right = x;
                incumbent = a;
            }
            (_, Some(b)) if gain(&b, &incumbent) => {
                left = x;
                incumbent = b;
            }
            _ => {
                left = mid_left;
                right = mid_right;
            }
        }
    }
    Some(incumbent)
}

/// Feasibility of the reduced problem with `m` circuits.
///
/// The largest net energy any policy can deliver is `min{ζhP, m·P_s}·T`
/// (all power in the EH-only phase), so the instance is feasible exactly when
/// `Q` does not exceed it. The `α = 1` policy is then checked explicitly.
pub fn solve_feasibility(params: &SystemParams, m: u32) -> FeasibilityReport {
    let report = |reason: Option<InfeasibleReason>| FeasibilityReport {
        m,
        feasible: reason.is_none(),
        reason,
    };
    let cap = params.linear_capacity();
    if params.q_req > cap {
        return report(Some(InfeasibleReason::LinearCapacity {
            q_req: params.q_req,
            capacity: cap,
        }));
    }
    let ceiling = f64::from(m) * params.p_sat * params.t_sym;
    if params.q_req > ceiling {
        return report(Some(InfeasibleReason::SaturationCeiling {
            q_req: params.q_req,
            ceiling,
            m,
        }));
    }
    let inst = Instance::new(params, m.max(1), SolverOptions::default().feasibility_tol);
    if inst.joint_point(1.0).is_none() {
        return report(Some(InfeasibleReason::NoValidAlpha));
    }
    report(None)
}

fn preflight(params: &SystemParams, m: u32, opts: &SolverOptions) -> Result<()> {
    params.validate()?;
    opts.validate()?;
    check_m(m)?;
    let report = solve_feasibility(params, m);
    match report.reason {
        Some(reason) => Err(Error::Infeasible(reason)),
        None => Ok(()),
    }
}

/// The policy at a single `α`, with `ρ = min{ρ₁, ρ₂}` and closed-form
/// powers, or `None` if that point violates a constraint.
pub fn evaluate_joint_at(
    params: &SystemParams,
    m: u32,
    alpha: f64,
    opts: &SolverOptions,
) -> Option<PolicySolution> {
    Instance::new(params, m, opts.feasibility_tol).joint_point(alpha)
}

/// The time-switching policy at a single `α`, or `None` if invalid.
pub fn evaluate_time_switching_at(
    params: &SystemParams,
    m: u32,
    alpha: f64,
    opts: &SolverOptions,
) -> Option<PolicySolution> {
    Instance::new(params, m, opts.feasibility_tol).time_switching_point(alpha)
}

/// The grid over `α` the joint search samples, in ascending order.
pub fn joint_alpha_grid(params: &SystemParams, opts: &SolverOptions) -> Result<Vec<f64>> {
    let lo = alpha_low(params)?;
    let n = opts.alpha_grid_points;
    if lo >= 1.0 {
        return Ok(vec![1.0]);
    }
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                1.0
            } else {
                lo + (1.0 - lo) * (i as f64) / ((n - 1) as f64)
            }
        })
        .collect())
}

/// Jointly optimal policy for a fixed number of circuits.
pub fn solve_joint(params: &SystemParams, m: u32, opts: &SolverOptions) -> Result<PolicySolution> {
    solve_joint_with_diagnostics(params, m, opts).map(|(sol, _)| sol)
}

pub fn solve_joint_with_diagnostics(
    params: &SystemParams,
    m: u32,
    opts: &SolverOptions,
) -> Result<(PolicySolution, JointDiagnostics)> {
    preflight(params, m, opts)?;
    let lo = alpha_low(params)?;
    let inst = Instance::new(params, m, opts.feasibility_tol);
    let mut diag = JointDiagnostics::default();
    let mut on_grid = true;
    let grid_len = if lo >= 1.0 { 1 } else { opts.alpha_grid_points };
    let sol = line_search(lo, 1.0, opts, |alpha| {
        let point = inst.joint_point(alpha);
        if on_grid {
            diag.grid_points += 1;
            diag.valid_points += usize::from(point.is_some());
            diag.lower_bound_conflicts += usize::from(inst.lower_bound_conflict(alpha));
            on_grid = diag.grid_points < grid_len;
        }
        point
    })
    .ok_or(Error::Infeasible(InfeasibleReason::NoValidAlpha))?;
    Ok((sol, diag))
}

/// Best policy of the time-switching baseline: the joint phase does not
/// harvest (`ρ = 0`), so the EH-only phase must collect `Q + (1 − α)·P_c·T`.
pub fn solve_time_switching(
    params: &SystemParams,
    m: u32,
    opts: &SolverOptions,
) -> Result<PolicySolution> {
    preflight(params, m, opts)?;
    let t = params.t_sym;
    let pct = params.p_circuit * t;
    // α·m·P_s·T ≥ Q + (1 − α)·P_c·T keeps the EH-only phase unsaturated.
    let sat_low = (params.q_req + pct) / (f64::from(m) * params.p_sat * t + pct);
    let lo = alpha_low(params)?.max(sat_low).min(1.0);
    let inst = Instance::new(params, m, opts.feasibility_tol);
    line_search(lo, 1.0, opts, |alpha| inst.time_switching_point(alpha))
        .ok_or(Error::Infeasible(InfeasibleReason::NoValidAlpha))
}

/// Effective input power seen by the `m`-th circuit,
/// `max{h·P_EH, h·P_ID} − (m − 1)·P_s/ζ`.
pub fn effective_input_power(params: &SystemParams, sol: &PolicySolution) -> f64 {
    params.h * sol.p_eh.max(sol.p_id) - f64::from(sol.m - 1) * params.p_sat / params.zeta
}

/// Adds circuits one at a time, starting from one, until the last circuit is
/// no longer driven past saturation or `M_max` is reached. Circuit counts
/// that are infeasible are skipped.
pub fn choose_circuit_count(
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<(u32, PolicySolution)> {
    choose_circuit_count_for(Scheme::Joint, params, opts)
}

/// Circuit count for either scheme.
///
/// The joint scheme uses the saturation rule of [`choose_circuit_count`].
/// That rule can stop the time-switching baseline at a count whose only
/// feasible policy spends the whole block harvesting, so the baseline instead
/// takes the smallest count that reaches the best rate over `1..=M_max`.
pub fn choose_circuit_count_for(
    scheme: Scheme,
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<(u32, PolicySolution)> {
    params.validate()?;
    opts.validate()?;
    match scheme {
        Scheme::Joint => saturation_rule(params, opts),
        Scheme::TimeSwitching => best_rate_count(scheme, params, opts),
    }
}

fn no_count(params: &SystemParams) -> Error {
    Error::Infeasible(InfeasibleReason::NoCircuitCount {
        m_max: params.m_max,
    })
}

fn saturation_rule(params: &SystemParams, opts: &SolverOptions) -> Result<(u32, PolicySolution)> {
    let threshold = params.p_sat / params.zeta;
    let mut m = 1;
    loop {
        match solve_joint(params, m, opts) {
            Ok(sol) => {
                if effective_input_power(params, &sol) > threshold && m < params.m_max {
                    m += 1;
                } else {
                    return Ok((m, sol));
                }
            }
            Err(Error::Infeasible(_)) if m < params.m_max => m += 1,
            Err(Error::Infeasible(_)) => return Err(no_count(params)),
            Err(e) => return Err(e),
        }
    }
}

fn best_rate_count(
    scheme: Scheme,
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<(u32, PolicySolution)> {
    let mut feasible = Vec::new();
    for m in 1..=params.m_max {
        match scheme.solve(params, m, opts) {
            Ok(sol) => feasible.push(sol),
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let top = feasible
        .iter()
        .map(|s| s.rate)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * top.abs();
    feasible
        .into_iter()
        .find(|s| s.rate >= top - slack)
        .map(|s| (s.m, s))
        .ok_or_else(|| no_count(params))
}
