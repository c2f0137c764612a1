use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Metric("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Metric(format!("{} labels vs {} predictions", truth.len(), predicted.len())));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    classes,
                });
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Per-class recall; every class needs at least one test point.
    pub fn recalls(&self) -> Result<Vec<f64>> {
        (0..self.classes())
            .map(|i| match self.row_sum(i) {
                0 => Err(Error::Metric(format!("class {i} has no test points"))),
                n => Ok(self.counts[i][i] as f64 / n as f64),
            })
            .collect()
    }
}

/// Average class-specific accuracy: the mean of per-class recalls.
pub fn acsa(cm: &ConfusionMatrix) -> Result<f64> {
    let r = cm.recalls()?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Geometric mean of per-class recalls; zero as soon as one recall is zero.
pub fn gm(cm: &ConfusionMatrix) -> Result<f64> {
    let r = cm.recalls()?;
    if r.contains(&0.0) {
        return Ok(0.0);
    }
    let product: f64 = r.iter().product();
    Ok(product.powf(1.0 / r.len() as f64))
}

/// Evaluation of one trained classifier on a test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub loss: String,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub recalls: Vec<f64>,
    pub acsa: f64,
    pub gm: f64,
}

impl EvalReport {
    pub fn new(variant: impl Into<String>, loss: impl Into<String>, seed: u64, confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Self {
            variant: variant.into(),
            loss: loss.into(),
            seed,
            recalls: confusion.recalls()?,
            acsa: acsa(&confusion)?,
            gm: gm(&confusion)?,
            confusion,
        })
    }

    /// Header matching [`EvalReport::csv_row`]; recall columns are named by
    /// the original class labels.
    pub fn csv_header(class_labels: &[i64]) -> Vec<String> {
        let mut h: Vec<String> = ["variant", "loss", "seed", "acsa", "gm"].iter().map(|s| s.to_string()).collect();
        h.extend(class_labels.iter().map(|l| format!("recall_{l}")));
        h
    }

    /// `variant, loss, seed, ACSA, GM, recall_0 .. recall_{c-1}`.
    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![
            self.variant.clone(),
            self.loss.clone(),
            self.seed.to_string(),
            self.acsa.to_string(),
            self.gm.to_string(),
        ];
        row.extend(self.recalls.iter().map(f64::to_string));
        row
    }
}
