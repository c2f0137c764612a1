//! Discrete-distribution view of the classifier/generator game.
//!
//! For class `i` and support point `x` the classifier objective collects
//! `a_i(x) log M_i(x) + b_i(x) log(1 - M_i(x))` with
//!
//! ```text
//! a_i = P_i p_i^d + (P_c - P_i) p_i^g
//! b_i = Σ_{j≠i} [P_j p_j^d + (P_c - P_j) p_j^g]
//! ```
//!
//! Maximizing pointwise in `M` gives `M_i* = a_i / (a_i + b_i)`. The masses
//! `A_i = Σ_x a_i = P_c` and `B_i = Σ_x b_i = (c - 1) P_c` do not depend on
//! the generated distributions, and substituting `M*` yields
//!
//! ```text
//! J(M*) = Σ_i (A_i + B_i) [JS_π(a_i/A_i ‖ b_i/B_i) - H(π)],  π = (A_i, B_i) / (A_i + B_i)
//! ```
//!
//! where `JS_π` is the π-weighted Jensen-Shannon divergence and `H(π)` the
//! binary entropy of the weights. For two classes `π = (½, ½)` and the
//! divergence is the ordinary one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-12;

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Distribution(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Distribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Kullback-Leibler divergence `KL(p ‖ q)` in nats with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi == 0.0 { 0.0 } else { pi * (pi / qi).ln() })
        .sum()
}

/// Jensen-Shannon divergence in nats. `weights` (default `(½, ½)`) are the
/// mixture weights of `p` and `q`; they are normalized to sum to one.
pub fn js_divergence(p: &[f64], q: &[f64], weights: Option<(f64, f64)>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Distribution(format!("support sizes {} and {} differ", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let (w1, w2) = weights.unwrap_or((0.5, 0.5));
    if !(w1 > 0.0 && w2 > 0.0) {
        return Err(Error::Distribution(format!("JS weights ({w1}, {w2}) must be positive")));
    }
    let (w1, w2) = (w1 / (w1 + w2), w2 / (w1 + w2));
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| w1 * a + w2 * b).collect();
    Ok((w1 * kl_divergence(p, &m) + w2 * kl_divergence(q, &m)).max(0.0))
}

/// Real and generated class-conditional distributions on a common finite
/// support, with class priors. The last class is the majority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistributionSet {
    pub real: Vec<Vec<f64>>,
    pub generated: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
}

impl DiscreteDistributionSet {
    pub fn new(real: Vec<Vec<f64>>, generated: Vec<Vec<f64>>, priors: Vec<f64>) -> Result<Self> {
        let set = Self { real, generated, priors };
        set.validate()?;
        Ok(set)
    }

    pub fn classes(&self) -> usize {
        self.priors.len()
    }

    pub fn support(&self) -> usize {
        self.real.first().map_or(0, Vec::len)
    }

    pub fn majority_prior(&self) -> f64 {
        *self.priors.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.priors.len();
        if c < 2 || self.real.len() != c || self.generated.len() != c {
            return Err(Error::Distribution(format!(
                "need ≥2 classes with one real and one generated distribution each (priors {c}, real {}, generated {})",
                self.real.len(),
                self.generated.len()
            )));
        }
        let s = self.support();
        for i in 0..c {
            if self.real[i].len() != s || self.generated[i].len() != s {
                return Err(Error::Distribution(format!("class {i}: support size mismatch")));
            }
            check_distribution(&self.real[i], &format!("real distribution {i}"))?;
            check_distribution(&self.generated[i], &format!("generated distribution {i}"))?;
        }
        check_distribution(&self.priors, "priors")?;
        let pc = self.majority_prior();
        if self.priors.iter().any(|&p| p > pc) {
            return Err(Error::Distribution("the last class must have the largest prior".into()));
        }
        Ok(())
    }

    /// `P_i p_i^d(x) + (P_c − P_i) p_i^g(x)` for every class and point.
    pub fn class_measures(&self) -> Vec<Vec<f64>> {
        let pc = self.majority_prior();
        (0..self.classes())
            .map(|i| {
                let (p, w) = (self.priors[i], pc - self.priors[i]);
                self.real[i]
                    .iter()
                    .zip(&self.generated[i])
                    .map(|(d, g)| p * d + w * g)
                    .collect()
            })
            .collect()
    }

    /// `(a_i, b_i)` for every class: own measure and the sum of the others.
    pub fn own_and_rest(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let measures = self.class_measures();
        let total: Vec<f64> = (0..self.support())
            .map(|x| measures.iter().map(|m| m[x]).sum())
            .collect();
        measures
            .into_iter()
            .map(|a| {
                let b = total.iter().zip(&a).map(|(t, a)| (t - a).max(0.0)).collect();
                (a, b)
            })
            .collect()
    }

    /// Classifier objective `J(G, M)` for `m[i][x] = M_i(x)`.
    pub fn objective(&self, m: &[Vec<f64>]) -> Result<f64> {
        if m.len() != self.classes() || m.iter().any(|r| r.len() != self.support()) {
            return Err(Error::Distribution("classifier table has the wrong shape".into()));
        }
        Ok(self
            .own_and_rest()
            .iter()
            .zip(m)
            .map(|((a, b), mi)| {
                a.iter()
                    .zip(b)
                    .zip(mi)
                    .map(|((&a, &b), &mv)| xlogy(a, mv) + xlogy(b, 1.0 - mv))
                    .sum::<f64>()
            })
            .sum())
    }
}

/// Pointwise maximizer `M_i*(x) = a / (a + b)`; `½` where both vanish.
pub fn optimal_classifier(set: &DiscreteDistributionSet) -> Result<Vec<Vec<f64>>> {
    set.validate()?;
    Ok(set
        .own_and_rest()
        .into_iter()
        .map(|(a, b)| {
            a.iter()
                .zip(&b)
                .map(|(&a, &b)| if a + b > 0.0 { a / (a + b) } else { 0.5 })
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsTerm {
    /// Weighted divergence between the normalized own and rest measures.
    pub js: f64,
    /// Total mass `A_i` of the class's own measure.
    pub own_mass: f64,
    /// Total mass `B_i` of the other classes' measures.
    pub rest_mass: f64,
}

impl JsTerm {
    pub fn weight_entropy(&self) -> f64 {
        let t = self.own_mass + self.rest_mass;
        let (p, q) = (self.own_mass / t, self.rest_mass / t);
        -(xlogy(p, p) + xlogy(q, q))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Sum {
    pub terms: Vec<JsTerm>,
}

impl Theorem1Sum {
    /// `Σ_i JS_i`.
    pub fn sum(&self) -> f64 {
        self.terms.iter().map(|t| t.js).sum()
    }

    /// `Σ_i (A_i + B_i) JS_i`: the part of `J(M*)` that depends on the
    /// generated distributions.
    pub fn mass_weighted(&self) -> f64 {
        self.terms.iter().map(|t| (t.own_mass + t.rest_mass) * t.js).sum()
    }

    /// `J(M*) − mass_weighted() = −Σ_i (A_i + B_i) H(π_i)`, fixed by the priors.
    pub fn offset(&self) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| (t.own_mass + t.rest_mass) * t.weight_entropy())
            .sum::<f64>()
    }
}

/// Per-class Jensen-Shannon divergences between each class's own measure and
/// the sum of the other classes' measures, each normalized to a probability
/// distribution and compared with weights proportional to their masses.
pub fn theorem1_sum(set: &DiscreteDistributionSet) -> Result<Theorem1Sum> {
    set.validate()?;
    let terms = set
        .own_and_rest()
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let (ma, mb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            if ma <= 0.0 || mb <= 0.0 {
                return Err(Error::Distribution(format!("class {i}: zero-mass mixture")));
            }
            let pa: Vec<f64> = a.iter().map(|v| v / ma).collect();
            let pb: Vec<f64> = b.iter().map(|v| v / mb).collect();
            Ok(JsTerm {
                js: js_divergence(&renormalize(pa), &renormalize(pb), Some((ma, mb)))?,
                own_mass: ma,
                rest_mass: mb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Theorem1Sum { terms })
}

/// Absorbs the last-ulp drift left by dividing by a floating-point sum.
fn renormalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn js_identities() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(js_divergence(&p, &p, None).unwrap(), 0.0);
        let d = js_divergence(&[1.0, 0.0], &[0.0, 1.0], None).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);
        assert!(js_divergence(&[1.0], &[0.5, 0.5], None).is_err());
    }

    #[test]
    fn js_hand_summation() {
        // m = (0.7, 0.3)
        let expected = 0.5 * (0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln())
            + 0.5 * (0.9 * (0.9f64 / 0.7).ln() + 0.1 * (0.1f64 / 0.3).ln());
        let d = js_divergence(&[0.5, 0.5], &[0.9, 0.1], None).unwrap();
        assert!((d - expected).abs() < 1e-15);
        // scipy.spatial.distance.jensenshannon(p, q)**2
        assert!((d - 0.101_749_225_079_196_76).abs() < 1e-12);
    }

    #[test]
    fn symmetric_two_class_optimum_is_half() {
        let set = DiscreteDistributionSet::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap();
        for row in optimal_classifier(&set).unwrap() {
            assert!(row.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn exclusive_support_point_gives_certainty() {
        let set = DiscreteDistributionSet::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
            vec![0.3, 0.7],
        )
        .unwrap();
        let m = optimal_classifier(&set).unwrap();
        assert_eq!(m[0][0], 1.0);
        assert_eq!(m[1][1], 1.0);
        assert_eq!(m[0][1], 0.0);
    }

    #[test]
    fn empty_support_point_defaults_to_half() {
        let set = DiscreteDistributionSet::new(
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(optimal_classifier(&set).unwrap()[0][1], 0.5);
    }

    #[test]
    fn js_sum_identical_mixtures_vanish() {
        // c = 2: p_0^g = p_1^d makes the two mixtures equal when P_0 p_0^d + (P_1-P_0) p_0^g = P_1 p_1^d
        let pd1 = vec![0.25, 0.75];
        let set = DiscreteDistributionSet::new(
            vec![pd1.clone(), pd1.clone()],
            vec![pd1.clone(), vec![0.5, 0.5]],
            vec![0.4, 0.6],
        )
        .unwrap();
        let t = theorem1_sum(&set).unwrap();
        assert!(t.sum().abs() < 1e-15);
    }

    #[test]
    fn js_sum_disjoint_two_class_terms_are_ln2() {
        let set = DiscreteDistributionSet::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.3, 0.7],
        )
        .unwrap();
        let t = theorem1_sum(&set).unwrap();
        for term in &t.terms {
            assert!((term.js - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn masses_depend_only_on_priors() {
        let set = DiscreteDistributionSet::new(
            vec![vec![0.1, 0.9], vec![0.6, 0.4], vec![0.3, 0.7]],
            vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0, 0.0]],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        for t in theorem1_sum(&set).unwrap().terms {
            assert!((t.own_mass - 0.5).abs() < 1e-15);
            assert!((t.rest_mass - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(DiscreteDistributionSet::new(vec![vec![1.0]], vec![vec![1.0]], vec![1.0]).is_err());
        assert!(DiscreteDistributionSet::new(
            vec![vec![0.5, 0.6], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5]
        )
        .is_err());
        // majority must be last
        assert!(DiscreteDistributionSet::new(
            vec![vec![1.0], vec![1.0]],
            vec![vec![1.0], vec![1.0]],
            vec![0.7, 0.3]
        )
        .is_err());
    }
}
