//! Acceptance suite. Runs every criterion at full tolerance and prints one
//! PASS/FAIL line each; exits nonzero if any fails.
//!
//! `cargo test --release -p throwintent-cli --test acceptance -- 3 7` runs a
//! subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use throwintent::data::{ModelWeights, ThrowRecord, View, Zone};
use throwintent::detect::{detect_throw_frame, frontal_scores, relative_speed_scores, trimmed_window};
use throwintent::eval::{
    compute_metrics, evaluate_fold, evaluate_pipeline, make_fold_plan, mean_std, stratum_proportions, task_samples, train_fold,
    ConfusionMatrix, EvalConfig, EvalSample, Predictor, StratKey, Task,
};
use throwintent::intent::{predict_intent_from_prior, MistakeCounts, PriorMatrix};
use throwintent::models::{CongruenceModel, OutcomeModel, DEFAULT_HIDDEN};
use throwintent::nn::{gradient_check, Network, Tensor};
use throwintent::pipeline::{extract_outcome, samples_from_throws, PipelineConfig};
use throwintent::signal::{butterworth_lowpass, savgol_derivative, Series};
use throwintent::synth::{generate_throws, SynthConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Label-only records from a large calibrated dataset, generated in chunks
/// so the poses and scenes can be dropped as soon as possible.
fn label_records() -> &'static [ThrowRecord] {
    static RECORDS: OnceLock<Vec<ThrowRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| {
        let config = SynthConfig {
            subjects: 16,
            rounds_per_subject: 14,
            ..SynthConfig::default()
        };
        let mut out = Vec::new();
        for chunk in 0..10u64 {
            for t in generate_throws(&config, 1000 + chunk).expect("synth") {
                let mut r = t.record(View::Deg0);
                r.throw_id = format!("c{chunk}-{}", r.throw_id);
                r.subject_id = format!("c{chunk}-{}", r.subject_id);
                out.push(r);
            }
        }
        out
    })
}

fn label_samples() -> Vec<EvalSample> {
    label_records()
        .iter()
        .map(|r| EvalSample {
            record: r.clone(),
            outcome: None,
            reaction: None,
        })
        .collect()
}

fn expect_shapes<N: Network>(model: &N, expected: &[(&str, &[usize])]) -> Result<(), String> {
    let got: Vec<(&str, Vec<usize>)> = model.params().iter().map(|(n, t)| (*n, t.shape().to_vec())).collect();
    ensure(got.len() == expected.len(), || format!("{} parameters, expected {}", got.len(), expected.len()))?;
    for ((name, shape), (en, es)) in got.iter().zip(expected) {
        ensure(name == en && shape.as_slice() == *es, || format!("{name} {shape:?}, expected {en} {es:?}"))?;
    }
    Ok(())
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cnn = CongruenceModel::new(&mut rng);
    let x = Tensor::zeros(&[30, 7]);
    let concat = cnn.concat_features(&x).map_err(err)?;
    ensure(concat.len() == 320 && cnn.concat_width() == 320, || {
        format!("concat width {} (layer input {})", concat.len(), cnn.concat_width())
    })?;
    expect_shapes(
        &cnn,
        &[
            ("a.conv1.kernel", &[3, 7, 8]),
            ("a.conv1.bias", &[8]),
            ("a.conv2.kernel", &[3, 8, 16]),
            ("a.conv2.bias", &[16]),
            ("b.conv1.kernel", &[9, 7, 8]),
            ("b.conv1.bias", &[8]),
            ("b.conv2.kernel", &[9, 8, 16]),
            ("b.conv2.bias", &[16]),
            ("c.hidden.weight", &[320, 20]),
            ("c.hidden.bias", &[20]),
            ("c.output.weight", &[20, 2]),
            ("c.output.bias", &[2]),
        ],
    )?;
    let lstm = OutcomeModel::new(DEFAULT_HIDDEN, &mut rng);
    expect_shapes(
        &lstm,
        &[
            ("lstm.w_input", &[2, 128]),
            ("lstm.w_hidden", &[32, 128]),
            ("lstm.bias", &[128]),
            ("head.weight", &[32, 9]),
            ("head.bias", &[9]),
        ],
    )?;
    Ok(format!(
        "concat width 320, branch lengths {} and {}, {} + {} parameters",
        cnn.branch_a.output_len(30),
        cnn.branch_b.output_len(30),
        cnn.param_count(),
        lstm.param_count()
    ))
}

fn random_tensor(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape")
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cnn_err = 0.0f64;
    let mut lstm_err = 0.0f64;
    let mut lstm_small_eps = 0.0f64;
    for trial in 0..3 {
        let cnn = CongruenceModel::new(&mut rng);
        let x = random_tensor(30, 7, -1.0, 1.0, &mut rng);
        cnn_err = cnn_err.max(gradient_check(&cnn, &x, trial % 2, 1e-5).map_err(err)?);
        let lstm = OutcomeModel::new(DEFAULT_HIDDEN, &mut rng);
        let x = random_tensor(11, 2, 0.0, 1.0, &mut rng);
        lstm_err = lstm_err.max(gradient_check(&lstm, &x, (3 * trial) % 9, 1e-3).map_err(err)?);
        lstm_small_eps = lstm_small_eps.max(gradient_check(&lstm, &x, (3 * trial) % 9, 1e-5).map_err(err)?);
    }
    ensure(cnn_err < 1e-4 && lstm_err < 1e-4, || {
        format!("max relative error: cnn {cnn_err:.2e}, lstm {lstm_err:.2e}")
    })?;
    Ok(format!(
        "max relative error cnn {cnn_err:.2e} (eps 1e-5), lstm {lstm_err:.2e} (eps 1e-3; {lstm_small_eps:.2e} at eps 1e-5)"
    ))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut dc = 0.0f64;
    for &c in &[1.0, -3.5, 250.0, 1e-3] {
        for &n in &[60usize, 90, 301] {
            let y = butterworth_lowpass(&Series::from_fps(vec![c; n], 30.0), 2.0, 4).map_err(err)?;
            dc = dc.max(y.values.iter().map(|v| ((v - c) / c).abs()).fold(0.0, f64::max));
        }
    }
    ensure(dc <= 1e-6, || format!("DC gain off by {dc:.2e}"))?;

    let mut lin = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(60..240);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let f = |v: Vec<f64>| butterworth_lowpass(&Series::from_fps(v, 30.0), 2.0, 4).map(|s| s.values);
        let (fm, fx, fy) = (f(mix).map_err(err)?, f(x).map_err(err)?, f(y).map_err(err)?);
        for i in 0..n {
            lin = lin.max((fm[i] - (a * fx[i] + b * fy[i])).abs());
        }
    }
    ensure(lin <= 1e-9, || format!("linearity error {lin:.2e}"))?;

    let mut sg = 0.0f64;
    for &(window, polyorder) in &[(5usize, 2usize), (7, 2), (11, 2), (15, 3), (9, 4)] {
        for _ in 0..20 {
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let dt = 1.0 / 30.0;
            let n = rng.random_range(window..120);
            let values: Vec<f64> = (0..n).map(|i| {
                let t = i as f64 * dt;
                c[0] + c[1] * t + c[2] * t * t
            }).collect();
            let d = savgol_derivative(&Series::new(values, dt), window, polyorder).map_err(err)?;
            // Derivative per sample.
            for (i, v) in d.values.iter().enumerate() {
                let t = i as f64 * dt;
                sg = sg.max((v - (c[1] + 2.0 * c[2] * t) * dt).abs());
            }
        }
    }
    ensure(sg <= 1e-9, || format!("Savitzky-Golay derivative error {sg:.2e}"))?;
    Ok(format!("DC {dc:.1e}, linearity {lin:.1e}, SG derivative {sg:.1e}"))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let n = rng.random_range(30..200);
        let speeds: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
        let scores = relative_speed_scores(&speeds).map_err(err)?;
        let top = (0..n).fold(0, |b, i| if speeds[i] > speeds[b] { i } else { b });
        ensure(scores[top] == 0.0, || format!("case {case}: score at maximum is {}", scores[top]))?;
        ensure(scores.iter().all(|s| *s <= 0.0), || format!("case {case}: positive score"))?;

        let base = frontal_scores(&Series::from_fps(speeds.clone(), 30.0)).map_err(err)?;
        let (lo, hi) = trimmed_window(n);
        ensure(base.search_window == (lo, hi), || format!("case {case}: window {:?}", base.search_window))?;
        ensure(lo == n.div_ceil(10) && hi == 9 * n / 10, || format!("case {case}: trim ({lo}, {hi}) for n = {n}"))?;
        ensure((lo..=hi).contains(&base.throw_frame), || format!("case {case}: frame {} outside window", base.throw_frame))?;
        let inside = speeds[lo..=hi].iter().copied().fold(f64::MIN, f64::max);
        ensure(speeds[base.throw_frame] == inside, || format!("case {case}: frame is not the windowed maximum"))?;
        for &k in &[1e-3, 0.5, 7.0, 1e4] {
            let scaled: Vec<f64> = speeds.iter().map(|s| s * k).collect();
            let r = frontal_scores(&Series::from_fps(scaled, 30.0)).map_err(err)?;
            ensure(r.throw_frame == base.throw_frame, || format!("case {case}: scaling by {k} moved the frame"))?;
        }
    }
    Ok("500 random speed profiles, 4 scale factors each".into())
}

/// Textbook definitions over the expanded (truth, prediction) pairs.
fn oracle_metrics(cm: &ConfusionMatrix) -> (f64, f64, Option<f64>) {
    let k = cm.classes();
    let mut pairs = Vec::new();
    for t in 0..k {
        for p in 0..k {
            pairs.extend(std::iter::repeat_n((t, p), cm.get(t, p) as usize));
        }
    }
    let n = pairs.len() as f64;
    let acc = pairs.iter().filter(|(t, p)| t == p).count() as f64 / n;
    let mut f1 = 0.0;
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let pred = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
        let real = pairs.iter().filter(|&&(t, _)| t == c).count() as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if real > 0.0 { tp / real } else { 0.0 };
        f1 += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    let mcc = (k == 2).then(|| {
        let xs: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        if vx == 0.0 || vy == 0.0 { 0.0 } else { cov / (vx * vy).sqrt() }
    });
    (acc, f1 / k as f64, mcc)
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let k = if i % 2 == 0 { 2 } else { rng.random_range(3..=9) };
        let mut counts: Vec<u64> = (0..k * k).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..25) }).collect();
        counts[rng.random_range(0..k * k)] += 1;
        let cm = ConfusionMatrix::from_counts(k, counts);
        let m = compute_metrics(&cm).map_err(err)?;
        let (acc, f1, mcc) = oracle_metrics(&cm);
        worst = worst.max((m.accuracy - acc).abs()).max((m.macro_f1 - f1).abs());
        if let (Some(a), Some(b)) = (m.mcc, mcc) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("largest deviation from the oracle {worst:.2e}"))?;

    // 630 positive, 370 negative.
    let pos = compute_metrics(&ConfusionMatrix::from_counts(2, vec![0, 370, 0, 630])).map_err(err)?;
    let neg = compute_metrics(&ConfusionMatrix::from_counts(2, vec![370, 0, 630, 0])).map_err(err)?;
    ensure(pos.mcc == Some(0.0) && (pos.macro_f1 - 0.386).abs() <= 0.01, || {
        format!("always-positive MCC {:?}, macro-F1 {:.4}", pos.mcc, pos.macro_f1)
    })?;
    ensure((neg.macro_f1 - 0.27).abs() <= 0.01, || format!("always-negative macro-F1 {:.4}", neg.macro_f1))?;

    let samples = label_samples();
    let config = EvalConfig {
        outcome_predictor: Predictor::Oracle,
        congruence_predictor: Predictor::Random,
        ..EvalConfig::default()
    };
    let selected = task_samples(&samples, Task::EndToEnd, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Intent, 5, 5).map_err(err)?;
    let report = evaluate_pipeline(&selected, &plan, Task::EndToEnd, &config, 1).map_err(err)?;
    let mcc = report.summary["congruence_mcc"].mean;
    ensure(mcc.abs() <= 0.05, || format!("random predictor MCC {mcc:.4}"))?;
    Ok(format!(
        "oracle deviation {worst:.1e}; always-positive F1 {:.3} MCC 0; always-negative F1 {:.3}; random MCC {mcc:+.4} over {} throws",
        pos.macro_f1,
        neg.macro_f1,
        selected.len()
    ))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..200 {
        let mut counts = MistakeCounts::default();
        let empty = rng.random_range(0..9);
        for _ in 0..rng.random_range(0..60) {
            let o = Zone::from_index(rng.random_range(0..9));
            let i = Zone::from_index(rng.random_range(0..9));
            if o != i && o.index() != Some(empty) {
                counts.add(o, i);
            }
        }
        let include_miss = case % 2 == 0;
        let prior = PriorMatrix::from_counts(counts, true, include_miss);
        for o in Zone::all() {
            let row = prior.row(o).map_err(err)?;
            let sum: f64 = row.iter().sum();
            ensure((sum - 1.0).abs() <= 1e-9, || format!("case {case}: row {o:?} sums to {sum}"))?;
            ensure(row[o.index().unwrap()] == 0.0, || format!("case {case}: nonzero diagonal"))?;
        }
        let row = prior.row(Zone::from_index(empty)).map_err(err)?;
        for (j, p) in row.iter().enumerate() {
            let want = if j == empty { 0.0 } else { 0.125 };
            ensure((p - want).abs() <= 1e-12, || format!("case {case}: empty row entry {p}"))?;
        }
    }

    let uniform = PriorMatrix::uniform(false);
    let mistakes: Vec<&ThrowRecord> = label_records().iter().filter(|r| r.is_hit() && !r.congruence).collect();
    ensure(mistakes.len() >= 2000, || format!("only {} mistakes", mistakes.len()))?;
    let mut correct = 0usize;
    for r in &mistakes {
        correct += usize::from(predict_intent_from_prior(&uniform, r.outcome, &mut rng).map_err(err)? == r.intent);
    }
    let acc = correct as f64 / mistakes.len() as f64;
    ensure((acc - 1.0 / 9.0).abs() <= 0.03, || format!("uniform-prior accuracy {acc:.4}"))?;
    Ok(format!("200 random count matrices; uniform-prior accuracy {acc:.4} over {} mistakes", mistakes.len()))
}

fn criterion_7() -> Check {
    let config = SynthConfig {
        subjects: 16,
        rounds_per_subject: 14,
        views: View::ALL.to_vec(),
        ..SynthConfig::default()
    }
    .noiseless();
    let throws = generate_throws(&config, 7).map_err(err)?;
    let pipeline = PipelineConfig::default();
    let mut samples = Vec::with_capacity(throws.len());
    let mut off = BTreeMap::new();
    for t in &throws {
        for view in [View::Deg45, View::Deg90] {
            let d = detect_throw_frame(&t.poses[&view], view, &pipeline.detect).map_err(err)?;
            if d.throw_frame != t.truth.release_frame {
                *off.entry(view).or_insert(0usize) += 1;
            }
        }
        let ex = extract_outcome(&t.poses[&View::Deg0], View::Deg0, &t.scenes[&View::Deg0], &pipeline).map_err(err)?;
        if ex.detection.throw_frame != t.truth.release_frame {
            *off.entry(View::Deg0).or_insert(0usize) += 1;
        }
        samples.push(EvalSample {
            record: t.record(View::Deg0),
            outcome: Some(ex.features),
            reaction: None,
        });
    }
    drop(throws);
    ensure(off.is_empty(), || format!("inexact throw frames per view: {off:?}"))?;
    let selected = task_samples(&samples, Task::Outcome, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Outcome, 5, 7).map_err(err)?;
    let (report, _) = evaluate_fold(&selected, &plan, 0, Task::Outcome, &EvalConfig::default()).map_err(err)?;
    let acc = report.metrics["outcome_accuracy"];
    ensure(acc >= 0.95, || format!("held-out outcome accuracy {acc:.4}"))?;
    Ok(format!(
        "{} throws, exact frames in all 3 views; held-out accuracy {acc:.4} on {} test hits",
        samples.len(),
        report.n_test
    ))
}

fn congruence_mcc(intensity: f64) -> Result<f64, String> {
    let mut config = SynthConfig {
        subjects: 16,
        rounds_per_subject: 14,
        ..SynthConfig::default()
    };
    config.population.reaction_intensity = [intensity, intensity];
    let samples: Vec<EvalSample> = generate_throws(&config, 8)
        .map_err(err)?
        .iter()
        .map(|t| EvalSample {
            record: t.record(View::Deg0),
            outcome: None,
            reaction: Some(t.reaction.clone()),
        })
        .collect();
    let selected = task_samples(&samples, Task::Congruence, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Congruence, 5, 8).map_err(err)?;
    let (report, _) = evaluate_fold(&selected, &plan, 0, Task::Congruence, &EvalConfig::default()).map_err(err)?;
    Ok(report.metrics["congruence_mcc"])
}

fn criterion_8() -> Check {
    let full = congruence_mcc(1.0)?;
    let none = congruence_mcc(0.0)?;
    ensure(full >= 0.5 && none.abs() <= 0.1, || format!("MCC {full:.4} at intensity 1, {none:.4} at intensity 0"))?;
    Ok(format!("held-out MCC {full:.4} at intensity 1, {none:+.4} at intensity 0"))
}

fn criterion_9() -> Check {
    let samples = label_samples();
    let config = EvalConfig {
        outcome_predictor: Predictor::Oracle,
        congruence_predictor: Predictor::Oracle,
        ..EvalConfig::default()
    };
    let selected = task_samples(&samples, Task::EndToEnd, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Intent, 5, 9).map_err(err)?;
    let report = evaluate_pipeline(&selected, &plan, Task::EndToEnd, &config, 1).map_err(err)?;
    let mut worst = 0.0f64;
    for f in &report.folds {
        let e2e = f.metrics["end_to_end_accuracy"];
        let cf = f.metrics["congruent_fraction"];
        let prior = f.metrics["intent_accuracy"];
        worst = worst.max((e2e - (cf + (1.0 - cf) * prior)).abs());
    }
    ensure(worst <= 0.01, || format!("decomposition off by {worst:.4}"))?;
    let oracle_hits = selected.len();

    let config = SynthConfig {
        subjects: 16,
        rounds_per_subject: 14,
        ..SynthConfig::default()
    };
    let throws = generate_throws(&config, 9).map_err(err)?;
    let samples = samples_from_throws(&throws, View::Deg0, &PipelineConfig::default()).map_err(err)?;
    drop(throws);
    let selected = task_samples(&samples, Task::EndToEnd, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Intent, 5, 9).map_err(err)?;
    let (fold, _) = evaluate_fold(&selected, &plan, 0, Task::EndToEnd, &EvalConfig::default()).map_err(err)?;
    let learned = fold.metrics["end_to_end_accuracy"];
    ensure(learned >= 0.11 + 0.10, || format!("learned end-to-end accuracy {learned:.4}"))?;
    Ok(format!(
        "oracle decomposition within {worst:.1e} on 5 folds of {oracle_hits} hits; learned end-to-end {learned:.4} on {} test hits (outcome {:.3}, congruence MCC {:.3})",
        fold.n_test,
        fold.metrics["outcome_accuracy"],
        fold.metrics["congruence_mcc"]
    ))
}

fn weight_bytes(w: &Option<ModelWeights>) -> Option<Vec<u8>> {
    w.as_ref().map(|w| w.to_bytes().expect("consistent weights"))
}

fn criterion_10() -> Check {
    let config = SynthConfig {
        subjects: 4,
        rounds_per_subject: 6,
        ..SynthConfig::default()
    };
    let throws = generate_throws(&config, 10).map_err(err)?;
    let samples = samples_from_throws(&throws, View::Deg0, &PipelineConfig::default()).map_err(err)?;
    let mut eval = EvalConfig::default();
    eval.outcome_training.max_epochs = 6;
    eval.congruence_training.max_epochs = 6;
    let selected = task_samples(&samples, Task::EndToEnd, false);
    let records: Vec<&ThrowRecord> = selected.iter().map(|s| &s.record).collect();
    let plan = make_fold_plan(&records, StratKey::Intent, 5, 10).map_err(err)?;

    let test: Vec<&String> = plan.folds[0].test.iter().collect();
    let mutated: Vec<EvalSample> = selected
        .iter()
        .map(|s| {
            let mut s = (*s).clone();
            if test.contains(&&s.record.throw_id) {
                let r = &mut s.record;
                r.intent = Zone::from_index((r.intent.index().unwrap() + 4) % 9);
                r.outcome = Zone::from_index((r.outcome.index().unwrap() + 2) % 9);
                r.congruence = r.intent == r.outcome;
            }
            s
        })
        .collect();
    let mutated_refs: Vec<&EvalSample> = mutated.iter().collect();
    ensure(mutated.iter().zip(&selected).any(|(a, b)| a.record != b.record), || "no labels changed".into())?;

    let a = train_fold(&selected, &plan, 0, Task::EndToEnd, &eval).map_err(err)?.artifacts;
    let b = train_fold(&mutated_refs, &plan, 0, Task::EndToEnd, &eval).map_err(err)?.artifacts;
    ensure(a.outcome_weights.is_some() && a.congruence_weights.is_some() && a.prior.is_some(), || "fold trained nothing".into())?;
    ensure(weight_bytes(&a.outcome_weights) == weight_bytes(&b.outcome_weights), || "outcome weights changed".into())?;
    ensure(weight_bytes(&a.congruence_weights) == weight_bytes(&b.congruence_weights), || "congruence weights changed".into())?;
    let (pa, pb) = (a.prior.as_ref().unwrap(), b.prior.as_ref().unwrap());
    let bits = |p: &PriorMatrix| -> Vec<u64> { Zone::all().flat_map(|o| p.row(o).unwrap().map(f64::to_bits)).collect() };
    ensure(bits(pa) == bits(pb) && pa.counts == pb.counts, || "prior changed".into())?;

    let hits: Vec<&ThrowRecord> = label_records().iter().filter(|r| r.is_hit()).collect();
    let plan = make_fold_plan(&hits, StratKey::Intent, 5, 10).map_err(err)?;
    let strata: Vec<usize> = (1..=9).collect();
    let mut summary = Vec::new();
    for (i, f) in plan.folds.iter().enumerate() {
        let props = stratum_proportions(&hits, &f.test, StratKey::Intent, &strata);
        let (mean, std) = mean_std(&props);
        ensure((mean - 1.0 / 9.0).abs() <= 0.01 && std <= 0.03, || format!("fold {i}: mean {mean:.4}, std {std:.4}"))?;
        summary.push(format!("{mean:.3}/{std:.3}"));
    }
    Ok(format!(
        "{} test labels mutated, weights and prior bit-identical; per-fold mean/std {}",
        test.len(),
        summary.join(" ")
    ))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_throwintent"))
        .current_dir(dir)
        .args(args)
        .env_remove("THROW_INTENT_SEED")
        .output()
        .map_err(err)?;
    ensure(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn tree(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).expect("readable dir") {
        let path = entry.expect("entry").path();
        if path.is_dir() {
            tree(&path, base, out);
        } else {
            let rel = path.strip_prefix(base).unwrap().display().to_string();
            out.insert(rel, fs::read(&path).expect("readable file"));
        }
    }
}

fn criterion_11() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let fast = r#"{"eval": {"outcome_training": {"max_epochs": 4}, "congruence_training": {"max_epochs": 4}}}"#;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        fs::create_dir_all(&dir).map_err(err)?;
        fs::write(dir.join("fast.json"), fast).map_err(err)?;
        let steps: [&[&str]; 6] = [
            &["--seed", "11", "synth", "generate", "--out", "ds", "--subjects", "4", "--rounds", "2"],
            &["--seed", "11", "train", "--manifest", "ds/manifest.json", "--config", "fast.json", "--model", "outcome", "--out", "m/outcome.bin"],
            &["--seed", "11", "train", "--manifest", "ds/manifest.json", "--config", "fast.json", "--model", "congruence", "--out", "m/congruence.bin"],
            &["--seed", "11", "train", "--manifest", "ds/manifest.json", "--model", "prior", "--out", "m/prior.json"],
            &["--seed", "11", "evaluate", "--manifest", "ds/manifest.json", "--config", "fast.json", "--task", "end-to-end", "--folds", "3", "--report", "r/e2e.json"],
            &["--seed", "11", "detect-throw", "--pose", "ds/throws/s00-r00-k0/pose_deg0.json", "--report", "r/detect.json"],
        ];
        for step in steps {
            run_cli(&dir, step)?;
        }
        let mut files = BTreeMap::new();
        tree(&dir, &dir, &mut files);
        trees.push(files);
    }
    let (a, b) = (&trees[0], &trees[1]);
    ensure(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("files differ between runs: {differing:?}"))?;
    Ok(format!("{} files byte-identical across two runs (synth, train x3, evaluate, detect-throw)", a.len()))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Check); 11] = [
        (1, "architecture arithmetic", criterion_1),
        (2, "gradient fidelity", criterion_2),
        (3, "filter identities", criterion_3),
        (4, "relative speed score contract", criterion_4),
        (5, "metric oracle and baselines", criterion_5),
        (6, "prior correctness", criterion_6),
        (7, "noiseless round trip", criterion_7),
        (8, "congruence signal ablation", criterion_8),
        (9, "end-to-end decomposition", criterion_9),
        (10, "protocol hygiene", criterion_10),
        (11, "CLI determinism", criterion_11),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS [{name}] {detail} ({secs:.1}s)"),
            Err(detail) => {
                println!("criterion {n:>2} FAIL [{name}] {detail} ({secs:.1}s)");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
