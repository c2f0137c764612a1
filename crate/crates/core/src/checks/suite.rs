//! Property checks behind the `oracle` command. Each compares an
//! implementation path against an independent computation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{nearest_neighbors, smote_oversample, SmoteConfig};
use crate::checks::{gradient, CheckOutcome};
use crate::data::Dataset;
use crate::diffcore::{Graph, Tensor};
use crate::evalor::{acsa, gm, optimal_classifier, theorem1_sum, ConfusionMatrix, DiscreteDistributionSet};
use crate::gamo::{
    classifier_loss, discriminator_loss, generator_loss, ConvexGenerator, LossVariant, Role,
};
use crate::trainer::{assign_fake_labels, assign_uniform_labels, frequencies};
use crate::Result;

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
pub const NEGATIVE_WEIGHT_TOLERANCE: f64 = 1e-12;
pub const LOSS_TOLERANCE: f64 = 1e-12;
pub const OPTIMUM_TOLERANCE: f64 = 1e-6;
pub const THEOREM_VARIANCE_TOLERANCE: f64 = 1e-10;
pub const SEGMENT_TOLERANCE: f64 = 1e-9;
pub const FREQUENCY_TOLERANCE: f64 = 0.02;

fn or_error(name: &str, r: Result<Vec<CheckOutcome>>) -> Vec<CheckOutcome> {
    r.unwrap_or_else(|e| vec![CheckOutcome::error(name, e.to_string())])
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Random labelled data with strictly increasing class sizes.
fn random_dataset(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> Result<Dataset> {
    let mut labels = Vec::new();
    for c in 0..classes {
        let n = 3 + 4 * c + rng.random_range(0..3);
        labels.extend(std::iter::repeat_n(c as i64, n));
    }
    let x = gaussian_rows(rng, labels.len(), dim);
    // Reverse so that the largest class carries the smallest label.
    let labels: Vec<i64> = labels.iter().map(|&y| classes as i64 - 1 - y).collect();
    Dataset::from_original(x, &labels)
}

/// Generated points lie in the convex hull of their class: weights on the
/// simplex and the output equal to the weighted sum of class points.
pub fn convexity(samples: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("convexity", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, 4, 3)?;
        let generator = ConvexGenerator::init(6, 8, 12, &data, rng.random())?;
        let (mut neg, mut sum_err, mut rec_err) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..samples {
            let z: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
            let class = rng.random_range(0..3);
            let (out, w) = generator.generate_with_weights(&z, class)?;
            let x = data.class_matrix(class);
            neg = neg.max(w.data().iter().fold(0.0, |m, &v| m.max(-v)));
            sum_err = sum_err.max((w.data().iter().sum::<f64>() - 1.0).abs());
            for col in 0..x.cols() {
                let mut acc = 0.0;
                for r in 0..x.rows() {
                    acc += w.data()[r] * x.get(r, col);
                }
                rec_err = rec_err.max((acc - out.data()[col]).abs());
            }
        }
        Ok(vec![
            CheckOutcome::at_most("convexity/negative_weight", neg, NEGATIVE_WEIGHT_TOLERANCE),
            CheckOutcome::at_most("convexity/simplex_sum", sum_err, SIMPLEX_TOLERANCE),
            CheckOutcome::at_most("convexity/reconstruction", rec_err, SIMPLEX_TOLERANCE),
        ])
    })())
}

fn clamped_ln(x: f64) -> f64 {
    x.max(crate::diffcore::LOG_FLOOR).ln()
}

/// Vectorized losses against per-term scalar loops.
pub fn losses(batches: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("losses", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = [0.0f64; 2];
        for _ in 0..batches {
            let c = rng.random_range(2..8);
            let n = rng.random_range(1..20);
            let m = Tensor::matrix(n, c, (0..n * c).map(|_| rng.random_range(1e-3..1.0 - 1e-3)).collect())?;
            let d = Tensor::matrix(n, 1, (0..n).map(|_| rng.random_range(1e-3..1.0 - 1e-3)).collect())?;
            let real: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let fake: Vec<usize> = (0..n).map(|_| rng.random_range(0..c - 1)).collect();
            for (k, variant) in LossVariant::ALL.into_iter().enumerate() {
                let ce = variant == LossVariant::CrossEntropy;
                let (mut lc, mut lg, mut lr, mut lf) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..n {
                    for i in 0..c {
                        let p = m.get(r, i);
                        lc += match (ce, i == real[r]) {
                            (true, true) => -clamped_ln(p),
                            (true, false) => -clamped_ln(1.0 - p),
                            (false, true) => (1.0 - p).powi(2),
                            (false, false) => p * p,
                        };
                        if i + 1 < c {
                            let own = i == fake[r];
                            lg += match (ce, own) {
                                (true, true) => -clamped_ln(1.0 - p),
                                (true, false) => -clamped_ln(p),
                                (false, true) => p * p,
                                (false, false) => (1.0 - p).powi(2),
                            };
                        }
                    }
                    let dv = d.get(r, 0);
                    let fool = if ce { -clamped_ln(dv) } else { (1.0 - dv).powi(2) };
                    lg += fool;
                    lr += fool;
                    lf += if ce { -clamped_ln(1.0 - dv) } else { dv * dv };
                }
                let nf = n as f64;
                let mut g = Graph::new();
                let mv = g.constant(m.clone());
                let dvar = g.constant(d.clone());
                let vc = classifier_loss(&mut g, variant, mv, &real, Role::Real)?;
                let vg = generator_loss(&mut g, variant, mv, dvar, &fake)?;
                let vr = discriminator_loss(&mut g, variant, dvar, true)?;
                let vf = discriminator_loss(&mut g, variant, dvar, false)?;
                for (v, s) in [(vc, lc), (vg, lg), (vr, lr), (vf, lf)] {
                    worst[k] = worst[k].max((g.value(v).item()? - s / nf).abs());
                }
            }
        }
        Ok(vec![
            CheckOutcome::at_most("losses/CE", worst[0], LOSS_TOLERANCE),
            CheckOutcome::at_most("losses/LS", worst[1], LOSS_TOLERANCE),
        ])
    })())
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-9..1.0f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random priors in ascending order (majority last).
fn random_priors(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let mut p = random_simplex(rng, c);
    p.sort_by(f64::total_cmp);
    p
}

/// `argmax_m a ln m + b ln(1 − m)` on `[0, 1]` by golden-section search.
pub fn golden_section_max(a: f64, b: f64) -> f64 {
    let f = |m: f64| {
        let t1 = if a > 0.0 { a * m.ln() } else { 0.0 };
        let t2 = if b > 0.0 { b * (1.0 - m).ln() } else { 0.0 };
        t1 + t2
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    (lo + hi) / 2.0
}

fn random_set(rng: &mut ChaCha8Rng, classes: usize, support: usize) -> Result<DiscreteDistributionSet> {
    let real = (0..classes).map(|_| random_simplex(rng, support)).collect();
    let generated = (0..classes).map(|_| random_simplex(rng, support)).collect();
    DiscreteDistributionSet::new(real, generated, random_priors(rng, classes))
}

/// Closed-form optimal classifier against per-point numeric maximization,
/// and against random classifiers.
pub fn optimal_classifier_check(instances: usize, candidates: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("optimal_m", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut err, mut excess) = (0.0f64, f64::NEG_INFINITY);
        for _ in 0..instances {
            let set = random_set(&mut rng, 3, 5)?;
            let star = optimal_classifier(&set)?;
            for (i, (a, b)) in set.own_and_rest().iter().enumerate() {
                for x in 0..set.support() {
                    err = err.max((golden_section_max(a[x], b[x]) - star[i][x]).abs());
                }
            }
            let best = set.objective(&star)?;
            for _ in 0..candidates {
                let m: Vec<Vec<f64>> = (0..3)
                    .map(|_| (0..5).map(|_| rng.random_range(1e-6..1.0 - 1e-6)).collect())
                    .collect();
                excess = excess.max(set.objective(&m)? - best);
            }
        }
        Ok(vec![
            CheckOutcome::at_most("optimal_m/numeric_maximum", err, OPTIMUM_TOLERANCE),
            CheckOutcome::at_most("optimal_m/dominance", excess.max(0.0), 0.0)
                .with_detail(format!("largest J(random) - J(M*) = {excess:.3e}")),
        ])
    })())
}

/// `J(M*) − Σ_i (A_i + B_i) JS_i` does not move when only the generated
/// distributions change.
pub fn theorem1_consistency(draws: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("theorem1", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (classes, support) = (3, 5);
        let real: Vec<Vec<f64>> = (0..classes).map(|_| random_simplex(&mut rng, support)).collect();
        let priors = random_priors(&mut rng, classes);
        let mut gaps = Vec::with_capacity(draws);
        let mut offset_err = 0.0f64;
        for _ in 0..draws {
            let generated = (0..classes).map(|_| random_simplex(&mut rng, support)).collect();
            let set = DiscreteDistributionSet::new(real.clone(), generated, priors.clone())?;
            let j = set.objective(&optimal_classifier(&set)?)?;
            let t = theorem1_sum(&set)?;
            let gap = j - t.mass_weighted();
            offset_err = offset_err.max((gap - t.offset()).abs());
            gaps.push(gap);
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
        Ok(vec![
            CheckOutcome::at_most("theorem1/constant_gap_variance", var, THEOREM_VARIANCE_TOLERANCE)
                .with_detail(format!("gap = {mean:.12}")),
            CheckOutcome::at_most("theorem1/closed_form_offset", offset_err, OPTIMUM_TOLERANCE),
        ])
    })())
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (p.iter().zip(a).zip(&ab).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.iter()
        .zip(a)
        .zip(&ab)
        .map(|((p, a), d)| (p - (a + t * d)).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Every SMOTE point lies on a segment between a class point and one of its
/// `k` nearest same-class neighbours.
pub fn smote_segments(seed: u64) -> Vec<CheckOutcome> {
    or_error("smote", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<i64> = vec![0; 400];
        labels.extend(vec![1; 40]);
        labels.extend(vec![2; 25]);
        let data = Dataset::from_original(gaussian_rows(&mut rng, labels.len(), 3), &labels)?;
        let cfg = SmoteConfig::default();
        let out = smote_oversample(&data, &cfg, &mut rng)?;
        let mut worst = 0.0f64;
        for row in data.len()..out.len() {
            let class = out.labels()[row];
            let x = data.class_matrix(class);
            let p = out.features().row(row);
            let best = (0..x.rows())
                .flat_map(|i| nearest_neighbors(&x, i, cfg.neighbors).into_iter().map(move |j| (i, j)))
                .map(|(i, j)| segment_distance(p, x.row(i), x.row(j)))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        Ok(vec![CheckOutcome::at_most("smote/segment_distance", worst, SEGMENT_TOLERANCE)])
    })())
}

/// Empirical label frequencies of the two samplers.
pub fn label_frequencies(draws: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("labels", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = frequencies(&assign_fake_labels(&[0.2, 0.3, 0.5], draws, &mut rng)?, 3);
        let fake = (f[0] - 0.6).abs().max((f[1] - 0.4).abs()).max(f[2]);
        let u = frequencies(&assign_uniform_labels(3, draws, &mut rng)?, 3);
        let uniform = (u[0] - 0.5).abs().max((u[1] - 0.5).abs()).max(u[2]);
        Ok(vec![
            CheckOutcome::at_most("labels/fake_frequencies", fake, FREQUENCY_TOLERANCE),
            CheckOutcome::at_most("labels/uniform_frequencies", uniform, FREQUENCY_TOLERANCE),
        ])
    })())
}

/// ACSA and GM against plain loops, plus `GM ≤ ACSA`.
pub fn metrics(matrices: usize, seed: u64) -> Vec<CheckOutcome> {
    or_error("metrics", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut err, mut violation) = (0.0f64, 0.0f64);
        for _ in 0..matrices {
            let c = rng.random_range(2..8);
            let counts: Vec<Vec<u64>> = (0..c)
                .map(|_| {
                    let mut row: Vec<u64> = (0..c).map(|_| rng.random_range(0..20)).collect();
                    row[rng.random_range(0..c)] += 1;
                    row
                })
                .collect();
            let cm = ConfusionMatrix::from_counts(counts.clone())?;
            let recalls: Vec<f64> = counts
                .iter()
                .enumerate()
                .map(|(i, r)| r[i] as f64 / r.iter().sum::<u64>() as f64)
                .collect();
            let mut mean = 0.0;
            for r in &recalls {
                mean += r;
            }
            mean /= c as f64;
            let mut prod = 1.0;
            for r in &recalls {
                prod *= r;
            }
            let geo = if recalls.contains(&0.0) { 0.0 } else { prod.powf(1.0 / c as f64) };
            let (a, g) = (acsa(&cm)?, gm(&cm)?);
            err = err.max((a - mean).abs()).max((g - geo).abs());
            violation = violation.max(g - a);
        }
        Ok(vec![
            CheckOutcome::at_most("metrics/naive_loop", err, 0.0),
            CheckOutcome::at_most("metrics/gm_below_acsa", violation.max(0.0), 0.0),
        ])
    })())
}

/// The whole suite. `gradient_fault` scales sigmoid backward contributions
/// for negative-control runs.
pub fn run_all(seed: u64, gradient_fault: Option<f64>) -> Vec<CheckOutcome> {
    let mut out = gradient::run(100, seed, gradient_fault);
    out.extend(convexity(1000, seed));
    out.extend(losses(100, seed));
    out.extend(optimal_classifier_check(50, 1000, seed));
    out.extend(theorem1_consistency(100, seed));
    out.extend(smote_segments(seed));
    out.extend(label_frequencies(100_000, seed));
    out.extend(metrics(1000, seed));
    out
}
