//! Gaussian naive Bayes with a variance floor.
//!
//! Features are standardized first so the 1e-9 floor has a scale-independent
//! meaning; constant features then contribute nothing to either class.

use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::features::FEATURE_COUNT;

const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    pub log_prior: f64,
    pub mean: [f64; FEATURE_COUNT],
    pub var: [f64; FEATURE_COUNT],
}

impl ClassDensity {
    fn fit(rows: &[[f64; FEATURE_COUNT]], prior: f64) -> ClassDensity {
        let n = rows.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; FEATURE_COUNT];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        for v in &mut var {
            *v = (*v / n).max(VARIANCE_FLOOR);
        }
        ClassDensity {
            log_prior: prior.ln(),
            mean,
            var,
        }
    }

    fn log_likelihood(&self, row: &[f64; FEATURE_COUNT]) -> f64 {
        let mut ll = self.log_prior;
        for ((x, m), v) in row.iter().zip(&self.mean).zip(&self.var) {
            let d = x - m;
            ll += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - d * d / (2.0 * v);
        }
        ll
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub standardizer: Standardizer,
    pub positive: ClassDensity,
    pub negative: ClassDensity,
}

impl NaiveBayesModel {
    pub fn fit(rows: &[[f64; FEATURE_COUNT]], is_positive: &[bool]) -> NaiveBayesModel {
        let standardizer = Standardizer::fit(rows);
        let standardized: Vec<[f64; FEATURE_COUNT]> =
            rows.iter().map(|r| standardizer.apply(r)).collect();
        let pos_rows: Vec<[f64; FEATURE_COUNT]> = standardized
            .iter()
            .zip(is_positive)
            .filter(|&(_, &p)| p)
            .map(|(r, _)| *r)
            .collect();
        let neg_rows: Vec<[f64; FEATURE_COUNT]> = standardized
            .iter()
            .zip(is_positive)
            .filter(|&(_, &p)| !p)
            .map(|(r, _)| *r)
            .collect();
        let n = standardized.len() as f64;
        NaiveBayesModel {
            positive: ClassDensity::fit(&pos_rows, pos_rows.len() as f64 / n),
            negative: ClassDensity::fit(&neg_rows, neg_rows.len() as f64 / n),
            standardizer,
        }
    }

    /// Posterior probability of the positive class; the two posteriors sum
    /// to one by construction.
    pub fn score_positive(&self, raw: &[f64; FEATURE_COUNT]) -> f64 {
        let row = self.standardizer.apply(raw);
        let lp = self.positive.log_likelihood(&row);
        let ln = self.negative.log_likelihood(&row);
        // logsumexp normalization keeps extreme likelihood gaps finite
        let max = lp.max(ln);
        let denom = (lp - max).exp() + (ln - max).exp();
        (lp - max).exp() / denom
    }
}
