//! Rician block fading.
//!
//! `g = √(r/(r+1))·g_LOS + √(1/(r+1))·g_scatter`, with `g_LOS` a fixed
//! zero-phase complex number of power `|g_LOS|²` and `g_scatter` circularly
//! symmetric complex Gaussian with total variance `σ_scatter²`. The channel
//! power gain is `h = |g|²`.
//!
//! Draws for Monte Carlo runs come from one ChaCha20 stream per realization
//! index, so realization `i` sees the same channel whatever order or thread
//! it is evaluated on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator recorded next to experiment outputs.
pub const GENERATOR_NAME: &str = "rand_chacha::ChaCha20Rng (seed_from_u64(seed), set_stream(realization index))";

/// Converts a level in dB (or dBW) to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianModel {
    /// Rician factor `r` (ratio of LOS to scattered power).
    pub r_factor: f64,
    /// `|g_LOS|²`.
    pub g_los_power: f64,
    /// `σ_scatter²`.
    pub var_scatter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDraw {
    pub h: f64,
}

impl RicianModel {
    pub fn new(r_factor: f64, g_los_power: f64, var_scatter: f64) -> Result<Self> {
        let model = Self {
            r_factor,
            g_los_power,
            var_scatter,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_factor.is_finite() && self.r_factor >= 0.0) {
            return Err(Error::invalid("r_factor", "must be finite and nonnegative"));
        }
        if !(self.g_los_power.is_finite() && self.g_los_power >= 0.0) {
            return Err(Error::invalid("g_los_power", "must be finite and nonnegative"));
        }
        if !(self.var_scatter.is_finite() && self.var_scatter > 0.0) {
            return Err(Error::invalid("var_scatter", "must be finite and positive"));
        }
        Ok(())
    }

    /// `h̄ = r/(r+1)·|g_LOS|² + 1/(r+1)·σ_scatter²`.
    pub fn mean_gain(&self) -> f64 {
        let r = self.r_factor;
        r / (r + 1.0) * self.g_los_power + self.var_scatter / (r + 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelDraw {
        let r = self.r_factor;
        let los = (r / (r + 1.0)).sqrt() * self.g_los_power.sqrt();
        let scale = (self.var_scatter / (2.0 * (r + 1.0))).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let g_re = los + scale * re;
        let g_im = scale * im;
        ChannelDraw {
            h: g_re * g_re + g_im * g_im,
        }
    }
}

/// Independent generator for realization `index` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Channel draw of realization `index`.
pub fn draw_for(model: &RicianModel, seed: u64, index: u64) -> ChannelDraw {
    model.sample(&mut stream_rng(seed, index))
}
