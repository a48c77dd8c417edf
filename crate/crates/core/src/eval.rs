//! Cross-validation protocol, class weighting and classification metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{ModelWeights, OutcomeFeatures, ReactionFeatures, ThrowRecord};
use crate::intent::{build_prior_matrix, compose_intent, predict_intent_from_prior, IntentError, PriorMatrix, PriorScope};
use crate::models::{
    predict_congruence, predict_outcome, CongruenceModel, OutcomeModel, DEFAULT_HIDDEN,
};
use crate::seeding::{derived_rng, derived_seed};
use crate::nn::{fit, Network, NnError, Sample, Tensor, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("subject {subject} has {count} samples, fewer than the {k} folds")]
    InsufficientData { subject: String, count: usize, k: usize },
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("invalid evaluation setup: {0}")]
    Invalid(String),
    #[error("sample {0} lacks the features this task needs")]
    MissingFeatures(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Training(#[from] NnError),
    #[error(transparent)]
    Intent(#[from] IntentError),
}

/// `K x K` counts indexed `[truth][prediction]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn from_pairs(k: usize, truth: &[usize], predicted: &[usize]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "truth and prediction lengths differ");
        let mut cm = ConfusionMatrix::new(k);
        for (t, p) in truth.iter().zip(predicted) {
            cm.add(*t, *p);
        }
        cm
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), k * k, "need k*k counts");
        ConfusionMatrix { k, counts }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.k && predicted < self.k, "class out of range");
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn truth_count(&self, class: usize) -> u64 {
        (0..self.k).map(|j| self.get(class, j)).sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, class)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Binary problems only.
    pub mcc: Option<f64>,
}

/// Accuracy, macro-averaged F1 over all `K` classes, and for `K = 2` the phi
/// coefficient with class 1 as positive. Undefined ratios count as 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let f1_sum: f64 = (0..cm.k)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let denom = (cm.predicted_count(c) + cm.truth_count(c)) as f64;
            if tp == 0.0 { 0.0 } else { 2.0 * tp / denom }
        })
        .sum();
    let mcc = (cm.k == 2).then(|| {
        let tp = cm.get(1, 1) as f64;
        let tn = cm.get(0, 0) as f64;
        let fp = cm.get(0, 1) as f64;
        let fn_ = cm.get(1, 0) as f64;
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / denom }
    });
    Ok(Metrics {
        accuracy,
        macro_f1: f1_sum / cm.k as f64,
        mcc,
    })
}

/// `w_c = N / (K * N_c)`.
pub fn class_weights(labels: &[usize], k: usize) -> Result<Vec<f64>, EvalError> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(EvalError::Invalid(format!("label {l} out of range for {k} classes")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|n| *n == 0) {
        return Err(EvalError::MissingClass(c));
    }
    let n = labels.len() as f64;
    Ok(counts.iter().map(|c| n / (k as f64 * *c as f64)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratKey {
    Outcome,
    Congruence,
    Intent,
}

impl StratKey {
    pub fn stratum(self, record: &ThrowRecord) -> usize {
        match self {
            StratKey::Outcome => record.outcome.number().map_or(0, usize::from),
            StratKey::Congruence => usize::from(record.congruence),
            StratKey::Intent => record.intent.number().map_or(0, usize::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    /// Training plus validation ids: everything the fold may learn from.
    pub fn training_pool(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub key: StratKey,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

const STREAM_OUTER: u64 = 1;
const STREAM_INNER: u64 = 2;
const STREAM_OUTCOME_MODEL: u64 = 3;
const STREAM_CONGRUENCE_MODEL: u64 = 4;
const STREAM_PREDICT: u64 = 5;

/// Ids grouped by subject, then by stratum, both in sorted order.
fn cells<'a>(records: &[&'a ThrowRecord], key: StratKey) -> BTreeMap<&'a str, BTreeMap<usize, Vec<&'a str>>> {
    let mut out: BTreeMap<&str, BTreeMap<usize, Vec<&str>>> = BTreeMap::new();
    for r in records {
        out.entry(&r.subject_id)
            .or_default()
            .entry(key.stratum(r))
            .or_default()
            .push(&r.throw_id);
    }
    out
}

/// Shuffles each stratum and deals its members round-robin into `k` groups,
/// continuing the deal across strata so every group gets a near-equal
/// share of each stratum and of the subject.
fn deal<'a, R: Rng>(strata: &BTreeMap<usize, Vec<&'a str>>, k: usize, rng: &mut R) -> Vec<Vec<&'a str>> {
    let mut groups = vec![Vec::new(); k];
    let mut slot = rng.random_range(0..k);
    for ids in strata.values() {
        let mut ids = ids.clone();
        ids.shuffle(rng);
        for id in ids {
            groups[slot].push(id);
            slot = (slot + 1) % k;
        }
    }
    groups
}

fn check_unique(records: &[&ThrowRecord]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.throw_id.as_str()) {
            return Err(EvalError::Invalid(format!("duplicate throw id {}", r.throw_id)));
        }
    }
    Ok(())
}

/// Per-subject stratified k-fold plan. Each subject's throws are dealt into
/// `k` disjoint test groups (a 1/k test share per fold); the rest of the
/// fold is split 80:20 into training and validation with the same
/// stratification.
pub fn make_fold_plan(records: &[&ThrowRecord], key: StratKey, k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 {
        return Err(EvalError::Invalid("at least two folds are needed".into()));
    }
    check_unique(records)?;
    let by_subject = cells(records, key);
    let mut rng = derived_rng(seed, STREAM_OUTER, 0);
    let mut tests: Vec<Vec<String>> = vec![Vec::new(); k];
    for (subject, strata) in &by_subject {
        let count: usize = strata.values().map(Vec::len).sum();
        if count < k {
            return Err(EvalError::InsufficientData {
                subject: subject.to_string(),
                count,
                k,
            });
        }
        if strata.values().any(|ids| ids.len() < k) {
            warn!("subject {subject}: some strata have fewer than {k} samples; they are pooled across folds");
        }
        for (f, group) in deal(strata, k, &mut rng).into_iter().enumerate() {
            tests[f].extend(group.into_iter().map(String::from));
        }
    }
    let mut plan = FoldPlan {
        k,
        key,
        seed,
        folds: tests
            .into_iter()
            .map(|test| Fold {
                train: Vec::new(),
                val: Vec::new(),
                test,
            })
            .collect(),
    };
    plan = plan.restratified(records, key)?;
    Ok(plan)
}

impl FoldPlan {
    /// Recomputes every fold's train/validation split stratified by `key`,
    /// keeping the test sets unchanged.
    pub fn restratified(&self, records: &[&ThrowRecord], key: StratKey) -> Result<FoldPlan, EvalError> {
        let mut folds = Vec::with_capacity(self.folds.len());
        for (f, fold) in self.folds.iter().enumerate() {
            let test: HashSet<&str> = fold.test.iter().map(String::as_str).collect();
            let pool: Vec<&ThrowRecord> = records
                .iter()
                .copied()
                .filter(|r| !test.contains(r.throw_id.as_str()))
                .collect();
            let mut rng = derived_rng(self.seed, STREAM_INNER, ((key as u64) << 16) | f as u64);
            let mut train = Vec::new();
            let mut val = Vec::new();
            for strata in cells(&pool, key).values() {
                for (g, group) in deal(strata, 5, &mut rng).into_iter().enumerate() {
                    let dest = if g == 0 { &mut val } else { &mut train };
                    dest.extend(group.into_iter().map(String::from));
                }
            }
            if train.is_empty() || val.is_empty() {
                return Err(EvalError::Invalid(format!("fold {f} has an empty training or validation split")));
            }
            folds.push(Fold {
                train,
                val,
                test: fold.test.clone(),
            });
        }
        Ok(FoldPlan {
            k: self.k,
            key: self.key,
            seed: self.seed,
            folds,
        })
    }
}

/// Share of each stratum value among `ids`.
pub fn stratum_proportions(records: &[&ThrowRecord], ids: &[String], key: StratKey, strata: &[usize]) -> Vec<f64> {
    let by_id: HashMap<&str, &ThrowRecord> = records.iter().map(|r| (r.throw_id.as_str(), *r)).collect();
    let mut counts = vec![0usize; strata.len()];
    for id in ids {
        let s = key.stratum(by_id[id.as_str()]);
        if let Some(i) = strata.iter().position(|v| *v == s) {
            counts[i] += 1;
        }
    }
    counts.iter().map(|c| *c as f64 / ids.len().max(1) as f64).collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One throw with whatever features have been extracted for it.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub record: ThrowRecord,
    pub outcome: Option<OutcomeFeatures>,
    pub reaction: Option<ReactionFeatures>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Outcome,
    Congruence,
    Intent,
    EndToEnd,
}

impl Task {
    pub fn default_key(self) -> StratKey {
        match self {
            Task::Outcome => StratKey::Outcome,
            Task::Congruence => StratKey::Congruence,
            Task::Intent | Task::EndToEnd => StratKey::Intent,
        }
    }
}

/// Where a stage's predictions come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Learned,
    /// Ground truth; isolates the other stages.
    Oracle,
    /// Fair coin; a chance baseline.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScopeKind {
    Dataset,
    Subject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub strat_key: Option<StratKey>,
    pub outcome_training: TrainConfig,
    pub congruence_training: TrainConfig,
    pub outcome_hidden: usize,
    pub class_weighted_congruence: bool,
    pub prior_scope: PriorScopeKind,
    pub include_miss: bool,
    pub outcome_predictor: Predictor,
    pub congruence_predictor: Predictor,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            strat_key: None,
            outcome_training: TrainConfig::default(),
            congruence_training: TrainConfig::default(),
            outcome_hidden: DEFAULT_HIDDEN,
            class_weighted_congruence: true,
            prior_scope: PriorScopeKind::Dataset,
            include_miss: false,
            outcome_predictor: Predictor::Learned,
            congruence_predictor: Predictor::Learned,
        }
    }
}

impl EvalConfig {
    pub fn key_for(&self, task: Task) -> StratKey {
        self.strat_key.unwrap_or(task.default_key())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

/// Records that take part in `task`: hits for the model stages; mistakes
/// and hits for the prior (misses only with `include_miss`).
pub fn task_samples<'a>(samples: &'a [EvalSample], task: Task, include_miss: bool) -> Vec<&'a EvalSample> {
    samples
        .iter()
        .filter(|s| match task {
            Task::Intent => s.record.is_hit() || include_miss,
            _ => s.record.is_hit(),
        })
        .collect()
}

/// Everything a fold learned: the state the leakage check compares.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldArtifacts {
    pub outcome_weights: Option<ModelWeights>,
    pub congruence_weights: Option<ModelWeights>,
    pub prior: Option<PriorMatrix>,
    pub outcome_log: Option<TrainLog>,
    pub congruence_log: Option<TrainLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_best_epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub congruence_best_epoch: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub folds: Vec<FoldReport>,
    pub summary: BTreeMap<String, Summary>,
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
}

fn outcome_sample(s: &EvalSample) -> Result<Sample, EvalError> {
    let f = s
        .outcome
        .as_ref()
        .ok_or_else(|| EvalError::MissingFeatures(s.record.throw_id.clone()))?;
    let label = s
        .record
        .outcome
        .index()
        .ok_or_else(|| EvalError::Invalid(format!("{} is a miss", s.record.throw_id)))?;
    Ok(Sample {
        input: Tensor::from_rows(f.rows())?,
        label,
    })
}

fn congruence_sample(s: &EvalSample) -> Result<Sample, EvalError> {
    let f = s
        .reaction
        .as_ref()
        .ok_or_else(|| EvalError::MissingFeatures(s.record.throw_id.clone()))?;
    Ok(Sample {
        input: Tensor::from_rows(f.rows())?,
        label: usize::from(s.record.congruence),
    })
}

fn build<F>(ids: &[String], index: &HashMap<&str, &EvalSample>, f: F) -> Result<Vec<Sample>, EvalError>
where
    F: Fn(&EvalSample) -> Result<Sample, EvalError>,
{
    ids.iter()
        .map(|id| {
            let s = index
                .get(id.as_str())
                .ok_or_else(|| EvalError::Invalid(format!("plan refers to unknown throw {id}")))?;
            f(s)
        })
        .collect()
}

/// Fitted components of one fold.
pub struct TrainedFold {
    pub outcome: Option<OutcomeModel>,
    pub congruence: Option<CongruenceModel>,
    pub prior: Option<PriorMatrix>,
    pub artifacts: FoldArtifacts,
}

fn needs_outcome(task: Task, config: &EvalConfig) -> bool {
    task == Task::Outcome || (task == Task::EndToEnd && config.outcome_predictor == Predictor::Learned)
}

fn needs_congruence(task: Task, config: &EvalConfig) -> bool {
    task == Task::Congruence || (task == Task::EndToEnd && config.congruence_predictor == Predictor::Learned)
}

/// Trains whatever `task` needs from the fold's training and validation
/// ids only. Test ids are never read.
pub fn train_fold(
    samples: &[&EvalSample],
    plan: &FoldPlan,
    fold: usize,
    task: Task,
    config: &EvalConfig,
) -> Result<TrainedFold, EvalError> {
    let index: HashMap<&str, &EvalSample> = samples.iter().map(|s| (s.record.throw_id.as_str(), *s)).collect();
    let records: Vec<&ThrowRecord> = samples.iter().map(|s| &s.record).collect();
    let f = &plan.folds[fold];
    let mut artifacts = FoldArtifacts {
        outcome_weights: None,
        congruence_weights: None,
        prior: None,
        outcome_log: None,
        congruence_log: None,
    };

    let outcome = if needs_outcome(task, config) {
        let split = if plan.key == StratKey::Outcome { f.clone() } else { plan.restratified(&records, StratKey::Outcome)?.folds[fold].clone() };
        let train = build(&split.train, &index, outcome_sample)?;
        let val = build(&split.val, &index, outcome_sample)?;
        let mut model = OutcomeModel::new(
            config.outcome_hidden,
            &mut derived_rng(plan.seed, STREAM_OUTCOME_MODEL, fold as u64),
        );
        let mut tc = config.outcome_training.clone();
        tc.seed = derived_seed(plan.seed, STREAM_OUTCOME_MODEL, 1000 + fold as u64);
        let log = fit(&mut model, &train, &val, &tc)?;
        artifacts.outcome_weights = Some(model.to_weights());
        artifacts.outcome_log = Some(log);
        Some(model)
    } else {
        None
    };

    let congruence = if needs_congruence(task, config) {
        let split = if plan.key == StratKey::Congruence { f.clone() } else { plan.restratified(&records, StratKey::Congruence)?.folds[fold].clone() };
        let train = build(&split.train, &index, congruence_sample)?;
        let val = build(&split.val, &index, congruence_sample)?;
        let mut model = CongruenceModel::new(&mut derived_rng(plan.seed, STREAM_CONGRUENCE_MODEL, fold as u64));
        let mut tc = config.congruence_training.clone();
        tc.seed = derived_seed(plan.seed, STREAM_CONGRUENCE_MODEL, 1000 + fold as u64);
        if config.class_weighted_congruence {
            let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
            tc.class_weights = Some(class_weights(&labels, 2)?);
        }
        let log = fit(&mut model, &train, &val, &tc)?;
        artifacts.congruence_weights = Some(model.to_weights());
        artifacts.congruence_log = Some(log);
        Some(model)
    } else {
        None
    };

    let prior = if matches!(task, Task::Intent | Task::EndToEnd) {
        // The prior sees every mistake in the fold's training pool,
        // including misses when they are modelled.
        let pool: HashSet<&str> = f.training_pool().map(String::as_str).collect();
        let mistakes = samples
            .iter()
            .filter(|s| pool.contains(s.record.throw_id.as_str()) && !s.record.congruence)
            .map(|s| &s.record);
        Some(build_prior_matrix(mistakes, &PriorScope::Dataset, config.include_miss)?)
    } else {
        None
    };
    artifacts.prior = prior.clone();

    Ok(TrainedFold {
        outcome,
        congruence,
        prior,
        artifacts,
    })
}

/// Trains `task`'s models on every sample: one stratified 80:20
/// train/validation split, no test set. The prior uses all mistakes.
pub fn train_on_all(samples: &[&EvalSample], task: Task, config: &EvalConfig, seed: u64) -> Result<TrainedFold, EvalError> {
    let records: Vec<&ThrowRecord> = samples.iter().map(|s| &s.record).collect();
    check_unique(&records)?;
    let key = config.key_for(task);
    let empty = FoldPlan {
        k: 1,
        key,
        seed,
        folds: vec![Fold {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        }],
    };
    let plan = empty.restratified(&records, key)?;
    train_fold(samples, &plan, 0, task, config)
}

fn subject_prior(
    samples: &[&EvalSample],
    fold: &Fold,
    subject: &str,
    include_miss: bool,
    cache: &mut HashMap<String, PriorMatrix>,
) -> Result<PriorMatrix, EvalError> {
    if let Some(p) = cache.get(subject) {
        return Ok(p.clone());
    }
    let pool: HashSet<&str> = fold.training_pool().map(String::as_str).collect();
    let mistakes = samples
        .iter()
        .filter(|s| pool.contains(s.record.throw_id.as_str()) && !s.record.congruence)
        .map(|s| &s.record);
    let p = build_prior_matrix(mistakes, &PriorScope::Subject(subject.to_string()), include_miss)?;
    cache.insert(subject.to_string(), p.clone());
    Ok(p)
}

/// Trains on one fold and scores its test set.
pub fn evaluate_fold(
    samples: &[&EvalSample],
    plan: &FoldPlan,
    fold: usize,
    task: Task,
    config: &EvalConfig,
) -> Result<(FoldReport, FoldArtifacts), EvalError> {
    let trained = train_fold(samples, plan, fold, task, config)?;
    let index: HashMap<&str, &EvalSample> = samples.iter().map(|s| (s.record.throw_id.as_str(), *s)).collect();
    let f = &plan.folds[fold];
    let test: Vec<&EvalSample> = f
        .test
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| EvalError::Invalid(format!("plan refers to unknown throw {id}")))
        })
        .collect::<Result<_, _>>()?;
    if test.is_empty() {
        return Err(EvalError::Invalid(format!("fold {fold} has an empty test set")));
    }
    let mut rng = derived_rng(plan.seed, STREAM_PREDICT, fold as u64);
    let mut metrics = BTreeMap::new();

    let hits: Vec<&EvalSample> = test.iter().copied().filter(|s| s.record.is_hit()).collect();

    let mut predicted_outcome = Vec::new();
    if let Some(model) = &trained.outcome {
        let mut cm = ConfusionMatrix::new(9);
        for s in &hits {
            let feats = s
                .outcome
                .as_ref()
                .ok_or_else(|| EvalError::MissingFeatures(s.record.throw_id.clone()))?;
            let (zone, _) = predict_outcome(model, feats)?;
            cm.add(s.record.outcome.index().expect("hit"), zone.index().expect("zone"));
            predicted_outcome.push(zone);
        }
        metrics.insert("outcome_accuracy".into(), compute_metrics(&cm)?.accuracy);
    } else {
        predicted_outcome = hits.iter().map(|s| s.record.outcome).collect();
    }

    let mut predicted_congruence = Vec::new();
    if matches!(task, Task::Congruence | Task::EndToEnd) {
        let mut cm = ConfusionMatrix::new(2);
        for s in &hits {
            let (c, p) = match (config.congruence_predictor, &trained.congruence) {
                (Predictor::Learned, Some(model)) => {
                    let feats = s
                        .reaction
                        .as_ref()
                        .ok_or_else(|| EvalError::MissingFeatures(s.record.throw_id.clone()))?;
                    predict_congruence(model, feats)?
                }
                (Predictor::Random, _) => {
                    let c = rng.random::<bool>();
                    (c, if c { 1.0 } else { 0.0 })
                }
                _ => (s.record.congruence, if s.record.congruence { 1.0 } else { 0.0 }),
            };
            cm.add(usize::from(s.record.congruence), usize::from(c));
            predicted_congruence.push((c, p));
        }
        let m = compute_metrics(&cm)?;
        metrics.insert("congruence_accuracy".into(), m.accuracy);
        metrics.insert("congruence_f1".into(), m.macro_f1);
        metrics.insert("congruence_mcc".into(), m.mcc.expect("binary"));
    }

    if let Some(prior) = &trained.prior {
        let mut cache = HashMap::new();
        let prior_for = |s: &EvalSample, cache: &mut HashMap<String, PriorMatrix>| -> Result<PriorMatrix, EvalError> {
            match config.prior_scope {
                PriorScopeKind::Dataset => Ok(prior.clone()),
                PriorScopeKind::Subject => subject_prior(samples, f, &s.record.subject_id, config.include_miss, cache),
            }
        };
        // Prior alone: true outcome of every test mistake.
        let mut correct = 0usize;
        let mut total = 0usize;
        for s in test.iter().filter(|s| !s.record.congruence) {
            if s.record.outcome.is_miss() && !config.include_miss {
                continue;
            }
            let p = prior_for(s, &mut cache)?;
            let guess = predict_intent_from_prior(&p, s.record.outcome, &mut rng)?;
            correct += usize::from(guess == s.record.intent);
            total += 1;
        }
        if total > 0 {
            metrics.insert("intent_accuracy".into(), correct as f64 / total as f64);
        }

        if task == Task::EndToEnd {
            let mut correct = 0usize;
            for (i, s) in hits.iter().enumerate() {
                let p = prior_for(s, &mut cache)?;
                let (c, prob) = predicted_congruence[i];
                let pred = compose_intent(predicted_outcome[i], c, prob, &p, &mut rng)?;
                correct += usize::from(pred.intent == s.record.intent);
            }
            metrics.insert("end_to_end_accuracy".into(), correct as f64 / hits.len() as f64);
            let congruent = hits.iter().filter(|s| s.record.congruence).count();
            metrics.insert("congruent_fraction".into(), congruent as f64 / hits.len() as f64);
        }
    }

    let report = FoldReport {
        fold,
        n_train: f.train.len(),
        n_val: f.val.len(),
        n_test: f.test.len(),
        metrics,
        outcome_best_epoch: trained.artifacts.outcome_log.as_ref().map(|l| l.best_epoch),
        congruence_best_epoch: trained.artifacts.congruence_log.as_ref().map(|l| l.best_epoch),
    };
    Ok((report, trained.artifacts))
}

/// Runs every fold (up to `jobs` at a time) and summarizes. Results do not
/// depend on `jobs`; any failed fold fails the whole report.
pub fn evaluate_pipeline(
    samples: &[&EvalSample],
    plan: &FoldPlan,
    task: Task,
    config: &EvalConfig,
    jobs: usize,
) -> Result<Report, EvalError> {
    let k = plan.folds.len();
    let results: Mutex<Vec<Option<Result<FoldReport, EvalError>>>> = Mutex::new((0..k).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let fold = next.fetch_add(1, Ordering::SeqCst);
        if fold >= k {
            break;
        }
        let r = evaluate_fold(samples, plan, fold, task, config).map(|(report, _)| report);
        results.lock().expect("results lock")[fold] = Some(r);
    };
    let jobs = jobs.clamp(1, k.max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut folds = Vec::with_capacity(k);
    for (fold, r) in results.into_inner().expect("results lock").into_iter().enumerate() {
        match r.expect("every fold ran") {
            Ok(report) => folds.push(report),
            Err(e) => {
                return Err(EvalError::Fold {
                    fold,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(Report {
        task,
        summary: summarize(&folds),
        folds,
        seed: plan.seed,
        config_hash: config.hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

pub fn summarize(folds: &[FoldReport]) -> BTreeMap<String, Summary> {
    let mut names: Vec<&String> = folds.iter().flat_map(|f| f.metrics.keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = folds.iter().filter_map(|f| f.metrics.get(name).copied()).collect();
            let (mean, std) = mean_std(&values);
            (name.clone(), Summary { mean, std })
        })
        .collect()
}

/// Plans folds for `task` and evaluates them.
pub fn run_evaluation(samples: &[EvalSample], task: Task, config: &EvalConfig, seed: u64, jobs: usize) -> Result<Report, EvalError> {
    let selected = task_samples(samples, task, config.include_miss);
    if selected.is_empty() {
        return Err(EvalError::Invalid("no samples for this task".into()));
    }
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, config.key_for(task), config.folds, seed)?;
    evaluate_pipeline(&selected, &plan, task, config, jobs)
}
