//! k-nearest-neighbors on z-score-standardized features.

use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::features::FEATURE_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub standardizer: Standardizer,
    pub rows: Vec<[f64; FEATURE_COUNT]>,
    pub is_positive: Vec<bool>,
    pub k: usize,
}

impl KnnModel {
    pub fn fit(rows: &[[f64; FEATURE_COUNT]], is_positive: &[bool], k: usize) -> KnnModel {
        let standardizer = Standardizer::fit(rows);
        let rows = rows.iter().map(|r| standardizer.apply(r)).collect();
        KnnModel {
            standardizer,
            rows,
            is_positive: is_positive.to_vec(),
            k,
        }
    }

    /// Fraction of the k nearest training points (Euclidean distance on
    /// standardized features, distance ties broken by training index) that
    /// carry the positive label.
    pub fn score_positive(&self, raw: &[f64; FEATURE_COUNT]) -> f64 {
        let query = self.standardizer.apply(raw);
        let mut dists: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row
                    .iter()
                    .zip(&query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        let k = self.k.min(dists.len());
        let positives = dists[..k]
            .iter()
            .filter(|&&(_, i)| self.is_positive[i])
            .count();
        positives as f64 / k as f64
    }
}
