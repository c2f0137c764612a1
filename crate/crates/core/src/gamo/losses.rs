//! Loss terms of the three-player game, in cross-entropy and least-squares
//! flavours. Every function averages over the batch rows; class priors enter
//! through how batches are sampled, never as per-sample multipliers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    #[default]
    #[serde(rename = "CE")]
    CrossEntropy,
    #[serde(rename = "LS")]
    LeastSquares,
}

impl LossVariant {
    pub const ALL: [LossVariant; 2] = [LossVariant::CrossEntropy, LossVariant::LeastSquares];

    pub fn tag(self) -> &'static str {
        match self {
            Self::CrossEntropy => "CE",
            Self::LeastSquares => "LS",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(Self::CrossEntropy),
            "LS" => Ok(Self::LeastSquares),
            other => Err(Error::Config(format!("unknown loss variant {other:?} (expected CE or LS)"))),
        }
    }
}

/// Whether a classifier batch holds real points or generated ones. Both use
/// the same per-sample target; the role only matters for bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Real,
    Generated,
}

fn check_rows(g: &Graph, out: Var, labels: &[usize], op: &'static str) -> Result<(usize, usize)> {
    let t = g.value(out);
    if t.rank() != 2 || t.rows() != labels.len() {
        return Err(Error::Shape {
            op,
            detail: format!("outputs {:?} for {} labels", t.shape(), labels.len()),
        });
    }
    if labels.is_empty() {
        return Err(Error::Shape {
            op,
            detail: "empty batch".into(),
        });
    }
    Ok((t.rows(), t.cols()))
}

/// `Σ mask ⊙ [T log M + (1−T) log(1−M)]` negated and batch-averaged (CE), or
/// `Σ mask ⊙ (M − T)²` batch-averaged (LS).
fn masked_line_loss(g: &mut Graph, variant: LossVariant, out: Var, target: Tensor, mask: Tensor) -> Result<Var> {
    let rows = target.rows() as f64;
    let per_entry = match variant {
        LossVariant::CrossEntropy => {
            let pos = g.constant(target.clone());
            let neg = g.constant(target.map(|t| 1.0 - t));
            let log_m = g.log(out)?;
            let comp = g.one_minus(out)?;
            let log_comp = g.log(comp)?;
            let a = g.mul(pos, log_m)?;
            let b = g.mul(neg, log_comp)?;
            let ll = g.add(a, b)?;
            g.affine(ll, -1.0, 0.0)?
        }
        LossVariant::LeastSquares => {
            let t = g.constant(target);
            let diff = g.sub(out, t)?;
            g.square(diff)?
        }
    };
    let m = g.constant(mask);
    let masked = g.mul(per_entry, m)?;
    let total = g.sum(masked)?;
    g.affine(total, 1.0 / rows, 0.0)
}

/// Classifier objective for one batch: every line is pushed toward the one-hot
/// target of the sample's label.
pub fn classifier_loss(g: &mut Graph, variant: LossVariant, outputs: Var, labels: &[usize], _role: Role) -> Result<Var> {
    let (rows, classes) = check_rows(g, outputs, labels, "classifier_loss")?;
    let mut target = vec![0.0; rows * classes];
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        target[r * classes + y] = 1.0;
    }
    let target = Tensor::matrix(rows, classes, target)?;
    masked_line_loss(g, variant, outputs, target, Tensor::filled(&[rows, classes], 1.0))
}

/// Generator objective against the classifier: for a sample meant for class
/// `i` the target is the ones' complement of `onehot(i)` over the minority
/// lines; the majority line carries no term.
pub fn generator_classifier_loss(g: &mut Graph, variant: LossVariant, outputs: Var, labels: &[usize]) -> Result<Var> {
    let (rows, classes) = check_rows(g, outputs, labels, "generator_classifier_loss")?;
    let mut target = vec![0.0; rows * classes];
    let mut mask = vec![0.0; rows * classes];
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        if y == classes - 1 {
            return Err(Error::MajorityClass { class: y });
        }
        for j in 0..classes - 1 {
            mask[r * classes + j] = 1.0;
            if j != y {
                target[r * classes + j] = 1.0;
            }
        }
    }
    masked_line_loss(
        g,
        variant,
        outputs,
        Tensor::matrix(rows, classes, target)?,
        Tensor::matrix(rows, classes, mask)?,
    )
}

fn discriminator_term(g: &mut Graph, variant: LossVariant, d: Var, target_real: bool) -> Result<Var> {
    let t = g.value(d);
    if t.rank() != 2 || t.cols() != 1 || t.rows() == 0 {
        return Err(Error::Shape {
            op: "discriminator_loss",
            detail: format!("expected a non-empty n x 1 output, got {:?}", t.shape()),
        });
    }
    let rows = t.rows();
    let target = Tensor::filled(&[rows, 1], if target_real { 1.0 } else { 0.0 });
    masked_line_loss(g, variant, d, target, Tensor::filled(&[rows, 1], 1.0))
}

/// Discriminator objective: real points toward 1, generated points toward 0.
pub fn discriminator_loss(g: &mut Graph, variant: LossVariant, d: Var, real: bool) -> Result<Var> {
    discriminator_term(g, variant, d, real)
}

/// Generator objective against the discriminator: generated points toward 1.
pub fn generator_discriminator_loss(g: &mut Graph, variant: LossVariant, d: Var) -> Result<Var> {
    discriminator_term(g, variant, d, true)
}

/// Full generator objective: complement term against `M` plus the
/// discriminator-fooling term.
pub fn generator_loss(g: &mut Graph, variant: LossVariant, m_outputs: Var, d_outputs: Var, labels: &[usize]) -> Result<Var> {
    let vs_m = generator_classifier_loss(g, variant, m_outputs, labels)?;
    let vs_d = generator_discriminator_loss(g, variant, d_outputs)?;
    g.add(vs_m, vs_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eval(f: impl FnOnce(&mut Graph, Var) -> Result<Var>, out: Tensor) -> f64 {
        let mut g = Graph::new();
        let v = g.constant(out);
        let l = f(&mut g, v).unwrap();
        g.value(l).item().unwrap()
    }

    fn ln(x: f64) -> f64 {
        x.max(crate::diffcore::LOG_FLOOR).ln()
    }

    fn random_outputs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.01..0.99)).collect()).unwrap()
    }

    // Scalar transcriptions, one term at a time.
    fn naive_classifier(variant: LossVariant, m: &Tensor, labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..m.cols() {
                let p = m.get(r, i);
                s += match (variant, i == y) {
                    (LossVariant::CrossEntropy, true) => -ln(p),
                    (LossVariant::CrossEntropy, false) => -ln(1.0 - p),
                    (LossVariant::LeastSquares, true) => (1.0 - p) * (1.0 - p),
                    (LossVariant::LeastSquares, false) => p * p,
                };
            }
            total += s;
        }
        total / labels.len() as f64
    }

    fn naive_generator(variant: LossVariant, m: &Tensor, d: &Tensor, labels: &[usize]) -> f64 {
        let c = m.cols();
        let mut total = 0.0;
        for (r, &i) in labels.iter().enumerate() {
            let mi = m.get(r, i);
            let dv = d.get(r, 0);
            let mut s = match variant {
                LossVariant::CrossEntropy => -ln(1.0 - mi) - ln(dv),
                LossVariant::LeastSquares => mi * mi + (1.0 - dv) * (1.0 - dv),
            };
            for j in (0..c - 1).filter(|&j| j != i) {
                let mj = m.get(r, j);
                s += match variant {
                    LossVariant::CrossEntropy => -ln(mj),
                    LossVariant::LeastSquares => (1.0 - mj) * (1.0 - mj),
                };
            }
            total += s;
        }
        total / labels.len() as f64
    }

    fn naive_discriminator(variant: LossVariant, d: &Tensor, real: bool) -> f64 {
        let n = d.rows();
        (0..n)
            .map(|r| {
                let v = d.get(r, 0);
                match (variant, real) {
                    (LossVariant::CrossEntropy, true) => -ln(v),
                    (LossVariant::CrossEntropy, false) => -ln(1.0 - v),
                    (LossVariant::LeastSquares, true) => (1.0 - v) * (1.0 - v),
                    (LossVariant::LeastSquares, false) => v * v,
                }
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn perfect_classification_is_free() {
        let m = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        for v in LossVariant::ALL {
            let l = eval(|g, o| classifier_loss(g, v, o, &[0, 2], Role::Real), m.clone());
            assert!(l.abs() < 1e-10, "{v}: {l}");
        }
    }

    #[test]
    fn half_outputs_two_classes() {
        let m = Tensor::filled(&[4, 2], 0.5);
        let l = eval(|g, o| classifier_loss(g, LossVariant::CrossEntropy, o, &[0, 1, 1, 0], Role::Real), m);
        assert!((l - 1.3862943611198906).abs() < 1e-12);
    }

    #[test]
    fn generator_ideal_is_free() {
        // class 1 of 4: M_1 = 0, other minority lines 1, majority line arbitrary
        let m = Tensor::from_rows(&[[1.0, 0.0, 1.0, 0.3]]).unwrap();
        let d = Tensor::from_rows(&[[1.0]]).unwrap();
        for v in LossVariant::ALL {
            let mut g = Graph::new();
            let mv = g.constant(m.clone());
            let dv = g.constant(d.clone());
            let l = generator_loss(&mut g, v, mv, dv, &[1]).unwrap();
            assert!(g.value(l).item().unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn two_class_generator_has_no_complement_terms() {
        let m = Tensor::from_rows(&[[0.3, 0.8]]).unwrap();
        let d = Tensor::from_rows(&[[0.6]]).unwrap();
        let mut g = Graph::new();
        let mv = g.constant(m);
        let dv = g.constant(d);
        let l = generator_loss(&mut g, LossVariant::CrossEntropy, mv, dv, &[0]).unwrap();
        let expected = -(0.7f64).ln() - (0.6f64).ln();
        assert!((g.value(l).item().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn discriminator_trivial_values() {
        let ones = Tensor::filled(&[3, 1], 1.0);
        let half = Tensor::filled(&[3, 1], 0.5);
        for v in LossVariant::ALL {
            assert!(eval(|g, o| discriminator_loss(g, v, o, true), ones.clone()).abs() < 1e-12);
        }
        let l = eval(|g, o| discriminator_loss(g, LossVariant::CrossEntropy, o, false), half);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn vectorized_losses_match_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let c = rng.random_range(2..7);
            let n = rng.random_range(1..12);
            let m = random_outputs(&mut rng, n, c);
            let d = random_outputs(&mut rng, n, 1);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let fake: Vec<usize> = (0..n).map(|_| rng.random_range(0..c - 1)).collect();
            for v in LossVariant::ALL {
                let got = eval(|g, o| classifier_loss(g, v, o, &labels, Role::Generated), m.clone());
                assert!((got - naive_classifier(v, &m, &labels)).abs() < 1e-12);

                let mut g = Graph::new();
                let mv = g.constant(m.clone());
                let dv = g.constant(d.clone());
                let l = generator_loss(&mut g, v, mv, dv, &fake).unwrap();
                assert!((g.value(l).item().unwrap() - naive_generator(v, &m, &d, &fake)).abs() < 1e-12);

                for real in [true, false] {
                    let got = eval(|g, o| discriminator_loss(g, v, o, real), d.clone());
                    assert!((got - naive_discriminator(v, &d, real)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bad_labels_rejected() {
        let m = Tensor::filled(&[1, 3], 0.5);
        let mut g = Graph::new();
        let v = g.constant(m);
        assert!(matches!(
            classifier_loss(&mut g, LossVariant::CrossEntropy, v, &[3], Role::Real),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(matches!(
            generator_classifier_loss(&mut g, LossVariant::LeastSquares, v, &[2]),
            Err(Error::MajorityClass { class: 2 })
        ));
    }

    #[test]
    fn variant_tags_parse() {
        assert_eq!("ls".parse::<LossVariant>().unwrap(), LossVariant::LeastSquares);
        assert_eq!(LossVariant::CrossEntropy.to_string(), "CE");
        assert!("hinge".parse::<LossVariant>().is_err());
    }
}
