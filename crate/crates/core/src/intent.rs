//! Intent inference: the mistake-conditioned prior over intended zones and
//! its composition with the outcome and congruence classifiers.

use std::fmt;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{OutcomeFeatures, ReactionFeatures, ThrowRecord, Zone};
use crate::models::{predict_congruence, predict_outcome, CongruenceModel, OutcomeModel};
use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum IntentError {
    #[error("record {0} is congruent; the prior is built from mistakes only")]
    CongruentRecord(String),
    #[error("prior has no row for outcome {0}")]
    RowMissing(Zone),
    #[error("malformed prior: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Which mistakes feed the prior.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScope {
    Dataset,
    Subject(String),
}

impl fmt::Display for PriorScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorScope::Dataset => f.write_str("dataset"),
            PriorScope::Subject(s) => write!(f, "subject {s}"),
        }
    }
}

/// Mistake counts indexed `[outcome][intent]`; row 9 holds complete misses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MistakeCounts {
    pub hits: [[u32; 9]; 9],
    pub misses: [u32; 9],
}

impl MistakeCounts {
    pub fn add(&mut self, outcome: Zone, intent: Zone) {
        if outcome.is_miss() {
            self.misses[intent.index().expect("hit zone")] += 1;
        } else {
            self.hits[outcome.index().expect("hit zone")][intent.index().expect("hit zone")] += 1;
        }
    }

    pub fn total(&self) -> u32 {
        self.hits.iter().flatten().sum::<u32>() + self.misses.iter().sum::<u32>()
    }
}

/// `P(intent | outcome, mistake)`. Rows are outcomes 1..9 plus an optional
/// MISS row; columns are intents 1..9.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMatrix {
    rows: Vec<[f64; 9]>,
    miss_row: Option<[f64; 9]>,
    pub smoothed: bool,
    /// Set when the requested scope had no mistakes and the matrix is the
    /// uniform fallback.
    pub fallback: bool,
    pub counts: MistakeCounts,
}

impl PriorMatrix {
    /// Normalizes counts row by row. With smoothing, every admissible cell
    /// gets one extra count (off-diagonal cells for hit rows, all cells for
    /// the MISS row). An empty unsmoothed row becomes uniform.
    pub fn from_counts(counts: MistakeCounts, smoothing: bool, include_miss: bool) -> Self {
        let pseudo = if smoothing { 1.0 } else { 0.0 };
        let normalize = |cells: [f64; 9], admissible: &dyn Fn(usize) -> bool| {
            let mut row = [0.0; 9];
            let mut sum = 0.0;
            for j in 0..9 {
                if admissible(j) {
                    row[j] = cells[j] + pseudo;
                    sum += row[j];
                }
            }
            if sum == 0.0 {
                let n = (0..9).filter(|j| admissible(*j)).count() as f64;
                for (j, r) in row.iter_mut().enumerate() {
                    *r = if admissible(j) { 1.0 / n } else { 0.0 };
                }
            } else {
                row.iter_mut().for_each(|r| *r /= sum);
            }
            row
        };
        let rows = (0..9)
            .map(|o| normalize(counts.hits[o].map(f64::from), &|j| j != o))
            .collect();
        let miss_row = include_miss.then(|| normalize(counts.misses.map(f64::from), &|_| true));
        PriorMatrix {
            rows,
            miss_row,
            smoothed: smoothing,
            fallback: false,
            counts,
        }
    }

    /// Uniform over the eight other zones (all nine for MISS).
    pub fn uniform(include_miss: bool) -> Self {
        PriorMatrix::from_counts(MistakeCounts::default(), true, include_miss)
    }

    pub fn row(&self, outcome: Zone) -> Result<&[f64; 9], IntentError> {
        if outcome.is_miss() {
            self.miss_row.as_ref().ok_or(IntentError::RowMissing(outcome))
        } else {
            Ok(&self.rows[outcome.index().expect("hit zone")])
        }
    }

    pub fn has_miss_row(&self) -> bool {
        self.miss_row.is_some()
    }

    pub fn prob(&self, outcome: Zone, intent: Zone) -> Result<f64, IntentError> {
        Ok(self.row(outcome)?[intent.index().expect("hit zone")])
    }

    pub fn validate(&self) -> Result<(), IntentError> {
        if self.rows.len() != 9 {
            return Err(IntentError::Malformed(format!("expected 9 rows, found {}", self.rows.len())));
        }
        for (o, row) in self.rows.iter().enumerate() {
            if row[o] != 0.0 {
                return Err(IntentError::Malformed(format!("diagonal entry for zone {} is not zero", o + 1)));
            }
        }
        for row in self.rows.iter().chain(&self.miss_row) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(IntentError::Malformed("rows must be distributions".into()));
            }
        }
        Ok(())
    }
}

/// Counts mistakes in `records` restricted to `scope` and builds the
/// add-one smoothed prior. A scope without mistakes yields the uniform
/// prior with `fallback` set.
pub fn build_prior_matrix<'a, I>(records: I, scope: &PriorScope, include_miss: bool) -> Result<PriorMatrix, IntentError>
where
    I: IntoIterator<Item = &'a ThrowRecord>,
{
    let mut counts = MistakeCounts::default();
    for r in records {
        if r.congruence {
            return Err(IntentError::CongruentRecord(r.throw_id.clone()));
        }
        if let PriorScope::Subject(s) = scope {
            if &r.subject_id != s {
                continue;
            }
        }
        if r.outcome.is_miss() && !include_miss {
            continue;
        }
        counts.add(r.outcome, r.intent);
    }
    if counts.total() == 0 {
        warn!("no mistakes for {scope}; using the uniform prior");
        let mut prior = PriorMatrix::uniform(include_miss);
        prior.fallback = true;
        return Ok(prior);
    }
    Ok(PriorMatrix::from_counts(counts, true, include_miss))
}

/// Most probable intent for `outcome`; exact ties are broken uniformly at
/// random. Never returns `outcome` itself.
pub fn predict_intent_from_prior<R: Rng + ?Sized>(
    prior: &PriorMatrix,
    outcome: Zone,
    rng: &mut R,
) -> Result<Zone, IntentError> {
    let row = prior.row(outcome)?;
    let candidates: Vec<usize> = (0..9).filter(|&j| outcome.is_miss() || Some(j) != outcome.index()).collect();
    let max = candidates.iter().map(|&j| row[j]).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = candidates.into_iter().filter(|&j| row[j] == max).collect();
    let pick = if ties.len() == 1 { ties[0] } else { ties[rng.random_range(0..ties.len())] };
    Ok(Zone::from_index(pick))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Via {
    CongruentPassThrough,
    PriorArgmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub intent: Zone,
    pub via: Via,
    pub outcome_used: Zone,
    pub congruence_prob: f64,
}

/// If the throw looks congruent the intent is the outcome; otherwise it is
/// the prior's best guess given the outcome.
pub fn compose_intent<R: Rng + ?Sized>(
    outcome: Zone,
    congruent: bool,
    congruence_prob: f64,
    prior: &PriorMatrix,
    rng: &mut R,
) -> Result<IntentPrediction, IntentError> {
    let (intent, via) = if congruent {
        (outcome, Via::CongruentPassThrough)
    } else {
        (predict_intent_from_prior(prior, outcome, rng)?, Via::PriorArgmax)
    };
    Ok(IntentPrediction {
        intent,
        via,
        outcome_used: outcome,
        congruence_prob,
    })
}

pub fn end_to_end_predict<R: Rng + ?Sized>(
    outcome_model: &OutcomeModel,
    congruence_model: &CongruenceModel,
    prior: &PriorMatrix,
    outcome_features: &OutcomeFeatures,
    reaction_features: &ReactionFeatures,
    rng: &mut R,
) -> Result<IntentPrediction, IntentError> {
    let (outcome, _) = predict_outcome(outcome_model, outcome_features)?;
    let (congruent, p) = predict_congruence(congruence_model, reaction_features)?;
    compose_intent(outcome, congruent, p, prior, rng)
}
