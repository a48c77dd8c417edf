use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::data::{ReactionFeatures, REACTION_CHANNELS, REACTION_STEPS};

/// Generator of abstract seven-channel reaction sequences. Channel 1
/// (0-based) plays the neutral role; a mistake moves mass toward the
/// channels of `mistake_profile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactionConfig {
    pub baseline: [f64; REACTION_CHANNELS],
    pub mistake_profile: [f64; REACTION_CHANNELS],
    /// Share of the mean moved to `mistake_profile` at intensity 1.
    pub max_shift: f64,
    /// Dirichlet concentration of each frame's draw.
    pub concentration: f64,
    /// AR(1) smoothing coefficient between consecutive frames.
    pub rho: f64,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        ReactionConfig {
            baseline: [0.08, 0.40, 0.10, 0.10, 0.10, 0.12, 0.10],
            mistake_profile: [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
            max_shift: 0.3,
            concentration: 20.0,
            rho: 0.8,
        }
    }
}

impl ReactionConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, dist) in [("baseline", &self.baseline), ("mistake_profile", &self.mistake_profile)] {
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::Config(format!("{name} must be a distribution")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_shift) || !(0.0..1.0).contains(&self.rho) || !(self.concentration > 0.0) {
            return Err(SynthError::Config("reaction shift, rho or concentration out of range".into()));
        }
        Ok(())
    }

    /// Expected row for a throw.
    pub fn mean(&self, congruence: bool, intensity: f64) -> [f64; REACTION_CHANNELS] {
        let s = if congruence { 0.0 } else { self.max_shift * intensity };
        std::array::from_fn(|c| (1.0 - s) * self.baseline[c] + s * self.mistake_profile[c])
    }
}

/// Thirty rows on the simplex: Dirichlet draws around the mean, smoothed by
/// `r_t = rho r_{t-1} + (1 - rho) d_t`. At intensity 0 congruent and
/// incongruent throws share one distribution.
pub fn synth_reaction<R: Rng + ?Sized>(
    congruence: bool,
    intensity: f64,
    config: &ReactionConfig,
    rng: &mut R,
) -> Result<ReactionFeatures, SynthError> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(SynthError::Config(format!("intensity {intensity} outside [0, 1]")));
    }
    let mean = config.mean(congruence, intensity);
    // Dirichlet needs strictly positive parameters.
    let alpha = mean.map(|m| (m * config.concentration).max(1e-3));
    let dirichlet = Dirichlet::new(alpha).map_err(|e| SynthError::Config(format!("dirichlet: {e}")))?;
    let mut rows = Vec::with_capacity(REACTION_STEPS);
    let mut row: [f64; REACTION_CHANNELS] = dirichlet.sample(rng);
    rows.push(row);
    for _ in 1..REACTION_STEPS {
        let d: [f64; REACTION_CHANNELS] = dirichlet.sample(rng);
        for c in 0..REACTION_CHANNELS {
            row[c] = config.rho * row[c] + (1.0 - config.rho) * d[c];
        }
        rows.push(row);
    }
    Ok(ReactionFeatures::new(rows).expect("simplex rows are finite"))
}
