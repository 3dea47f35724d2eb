//! Achievable rate and harvested-energy models.
//!
//! All quantities are in SI units: powers in watts, energies in joules,
//! times in seconds. Rates are in bits per channel use.
//!
//! The nonlinear harvester is the piecewise-linear saturating model: a single
//! circuit fed with RF power `p_in` delivers `ζ·p_in` up to the ceiling `P_s`.
//! With `M` identical circuits the EH stream is split evenly across them, so
//! each one sees `1/M` of the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Channel power gain `h` (linear).
    pub h: f64,
    /// Average transmit power budget `P` (W).
    pub p_avg: f64,
    /// Required net harvested energy per block `Q` (J).
    pub q_req: f64,
    /// Block duration `T` (s).
    pub t_sym: f64,
    /// Energy conversion efficiency `ζ` in `(0, 1]`.
    pub zeta: f64,
    /// Saturation power of one EH circuit `P_s` (W).
    pub p_sat: f64,
    /// Power drawn by the ID circuitry `P_c` (W).
    pub p_circuit: f64,
    /// Antenna noise variance `σ_A²` (W).
    pub var_antenna: f64,
    /// RF-to-baseband conversion noise variance `σ_cov²` (W).
    pub var_conv: f64,
    /// Largest number of EH circuits that may be switched on.
    pub m_max: u32,
}

impl SystemParams {
    /// Checks every field invariant.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("h", self.h),
            ("p_avg", self.p_avg),
            ("q_req", self.q_req),
            ("t_sym", self.t_sym),
            ("zeta", self.zeta),
            ("p_sat", self.p_sat),
            ("p_circuit", self.p_circuit),
            ("var_antenna", self.var_antenna),
            ("var_conv", self.var_conv),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.h <= 0.0 {
            return Err(Error::invalid("h", "channel gain must be positive"));
        }
        if self.p_avg <= 0.0 {
            return Err(Error::invalid("p_avg", "power budget must be positive"));
        }
        if self.q_req < 0.0 {
            return Err(Error::invalid("q_req", "energy demand must be nonnegative"));
        }
        if self.t_sym <= 0.0 {
            return Err(Error::invalid("t_sym", "block time must be positive"));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::invalid("zeta", "efficiency must lie in (0, 1]"));
        }
        if !(self.p_circuit > 0.0 && self.p_circuit < self.p_sat) {
            return Err(Error::invalid(
                "p_circuit",
                format!(
                    "need 0 < p_circuit < p_sat, got p_circuit = {} and p_sat = {}",
                    self.p_circuit, self.p_sat
                ),
            ));
        }
        if self.var_antenna < 0.0 {
            return Err(Error::invalid("var_antenna", "variance must be nonnegative"));
        }
        if self.var_conv <= 0.0 {
            return Err(Error::invalid("var_conv", "variance must be positive"));
        }
        if self.m_max < 1 {
            return Err(Error::invalid("m_max", "need at least one EH circuit"));
        }
        Ok(())
    }

    /// Saturation power of a single diode rectifier, `v_b² / (4·r_l)`, from
    /// the reverse breakdown voltage and the load resistance.
    pub fn diode_saturation_power(v_breakdown: f64, r_load: f64) -> Result<f64> {
        if !(v_breakdown.is_finite() && v_breakdown > 0.0) {
            return Err(Error::invalid("v_breakdown", "must be positive and finite"));
        }
        if !(r_load.is_finite() && r_load > 0.0) {
            return Err(Error::invalid("r_load", "must be positive and finite"));
        }
        Ok(v_breakdown * v_breakdown / (4.0 * r_load))
    }

    /// Copy of `self` with a different energy demand.
    pub fn with_q(mut self, q_req: f64) -> Self {
        self.q_req = q_req;
        self
    }

    /// `ζ·h·P·T`: the energy harvested when the whole budget feeds unsaturated
    /// circuits for the entire block.
    pub fn linear_capacity(&self) -> f64 {
        self.zeta * self.h * self.p_avg * self.t_sym
    }
}

/// Which harvester model maps input RF power to harvested energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EHModelKind {
    /// `ζ·P_in·T`, unbounded.
    Linear,
    /// `ζ·P_in·T` up to the ceiling `P_s·T`.
    NonlinearSaturating,
}

impl EHModelKind {
    /// Energy harvested by one circuit fed with `p_in` watts for a block.
    pub fn harvest(self, params: &SystemParams, p_in: f64) -> Result<f64> {
        match self {
            EHModelKind::Linear => harvest_linear(params, p_in),
            EHModelKind::NonlinearSaturating => {
                check_nonneg("p_in", p_in)?;
                let p = params.zeta * p_in;
                Ok(if p <= params.p_sat {
                    p * params.t_sym
                } else {
                    params.p_sat * params.t_sym
                })
            }
        }
    }
}

fn check_nonneg(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be finite and nonnegative, got {v}")))
    }
}

fn check_split(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain(format!("split ratio must lie in [0, 1), got {rho}")))
    }
}

fn check_fraction(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must lie in [0, 1], got {v}")))
    }
}

/// Achievable rate in bits per channel use when transmitting `p_tx` and
/// diverting the fraction `rho` of the received power to harvesting.
pub fn rate(params: &SystemParams, p_tx: f64, rho: f64) -> Result<f64> {
    check_nonneg("p_tx", p_tx)?;
    check_split(rho)?;
    Ok(rate_unchecked(params, p_tx, rho))
}

#[inline]
pub(crate) fn rate_unchecked(params: &SystemParams, p_tx: f64, rho: f64) -> f64 {
    let id = 1.0 - rho;
    let snr = id * params.h * p_tx / (id * params.var_antenna + params.var_conv);
    snr.ln_1p() / std::f64::consts::LN_2
}

/// Per-circuit harvested energy when the circuit receives the fraction `y`
/// of the power radiated at `p_tx`.
pub fn harvest_per_circuit(params: &SystemParams, p_tx: f64, y: f64) -> Result<f64> {
    check_nonneg("p_tx", p_tx)?;
    check_fraction("per-circuit fraction", y)?;
    Ok(harvest_per_circuit_unchecked(params, p_tx, y))
}

#[inline]
pub(crate) fn harvest_per_circuit_unchecked(params: &SystemParams, p_tx: f64, y: f64) -> f64 {
    let p = params.zeta * p_tx * y * params.h;
    if p <= params.p_sat {
        p * params.t_sym
    } else {
        params.p_sat * params.t_sym
    }
}

/// Linear-model harvested energy `ζ·p_in·T`.
pub fn harvest_linear(params: &SystemParams, p_in: f64) -> Result<f64> {
    check_nonneg("p_in", p_in)?;
    Ok(params.zeta * p_in * params.t_sym)
}

/// Net harvested energy of an on-off power-splitting policy with `m` circuits:
/// an EH-only phase of fraction `alpha` at power `p_eh`, then a joint phase at
/// power `p_id` with split ratio `rho`, during which the ID circuitry draws
/// `P_c`. The result can be negative.
pub fn net_harvest(
    params: &SystemParams,
    m: u32,
    alpha: f64,
    p_eh: f64,
    p_id: f64,
    rho: f64,
) -> Result<f64> {
    if m < 1 {
        return Err(Error::Domain("circuit count must be at least 1".into()));
    }
    check_fraction("alpha", alpha)?;
    check_nonneg("p_eh", p_eh)?;
    check_nonneg("p_id", p_id)?;
    check_split(rho)?;
    Ok(net_harvest_unchecked(params, m, alpha, p_eh, p_id, rho))
}

#[inline]
pub(crate) fn net_harvest_unchecked(
    params: &SystemParams,
    m: u32,
    alpha: f64,
    p_eh: f64,
    p_id: f64,
    rho: f64,
) -> f64 {
    let mf = f64::from(m);
    let eh_phase = mf * harvest_per_circuit_unchecked(params, p_eh, 1.0 / mf);
    let id_phase = mf * harvest_per_circuit_unchecked(params, p_id, rho / mf)
        - params.p_circuit * params.t_sym;
    alpha * eh_phase + (1.0 - alpha) * id_phase
}
