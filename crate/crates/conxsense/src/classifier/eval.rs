//! ROC curves, AUC, operating points, and stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{train, ClassifierError, ModelSpec};
use crate::features::{Label, LabeledFeatureVector};

/// One point of a ROC sweep: classify positive iff score >= threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Threshold sweep over the distinct scores, descending, ties grouped. The
/// curve starts at (0,0) with an infinite threshold and ends at (1,1); AUC is
/// the trapezoidal area, which equals the normalized Mann-Whitney statistic.
pub fn roc_curve(scores: &[(f64, bool)]) -> Result<(Vec<RocPoint>, f64), ClassifierError> {
    let positives = scores.iter().filter(|&&(_, pos)| pos).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(ClassifierError::OneClassOnly);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are finite"));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0;
    let mut fp = 0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok((points, auc))
}

/// The sweep point with the highest TPR whose FPR stays at or below
/// `max_fpr`; (0,0) when even the first real threshold overshoots. Class
/// counts turn the rates back into a confusion table.
pub fn operating_point(
    points: &[RocPoint],
    max_fpr: f64,
    positives: usize,
    negatives: usize,
) -> OperatingPoint {
    let chosen = points
        .iter()
        .rev()
        .find(|p| p.fpr <= max_fpr)
        .copied()
        .unwrap_or(points[0]);
    let tp = (chosen.tpr * positives as f64).round() as usize;
    let fp = (chosen.fpr * negatives as f64).round() as usize;
    OperatingPoint {
        max_fpr,
        threshold: chosen.threshold,
        fpr: chosen.fpr,
        tpr: chosen.tpr,
        confusion: Confusion {
            tp,
            fp,
            tn: negatives - fp,
            fn_: positives - tp,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub max_fpr: f64,
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub confusion: Confusion,
}

/// Confidence threshold achieving at most `max_fpr` on held-out scores; the
/// conservative fallback is an infinite threshold (never relax).
pub fn threshold_for_max_fpr(
    scores: &[(f64, bool)],
    max_fpr: f64,
) -> Result<f64, ClassifierError> {
    let (points, _) = roc_curve(scores)?;
    let positives = scores.iter().filter(|s| s.1).count();
    Ok(operating_point(&points, max_fpr, positives, scores.len() - positives).threshold)
}

/// Vertical averaging of several ROC curves: mean TPR at each FPR grid
/// point, interpolating each curve as a step function.
pub fn vertical_average(curves: &[Vec<RocPoint>], grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&fpr| {
            let mean_tpr = curves
                .iter()
                .map(|curve| {
                    curve
                        .iter()
                        .filter(|p| p.fpr <= fpr)
                        .map(|p| p.tpr)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / curves.len().max(1) as f64;
            (fpr, mean_tpr)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldEval {
    pub confusion: Confusion,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub folds: Vec<FoldEval>,
    pub pooled: FoldEval,
    pub folds_used: usize,
    pub warnings: Vec<String>,
}

/// Stratified k-fold cross-validation with a seeded shuffle. Each fold
/// refits from scratch (standardization included). Folds shrink to the
/// minority class count when a class has fewer members than `folds`.
pub fn cross_validate(
    spec: &ModelSpec,
    data: &[LabeledFeatureVector],
    folds: usize,
) -> Result<EvalResult, ClassifierError> {
    let Some(first) = data.first() else {
        return Err(ClassifierError::InvalidDataset);
    };
    let task = first.task;
    if data.iter().any(|d| d.task != task) || folds < 2 {
        return Err(ClassifierError::InvalidDataset);
    }
    let positive = task.relax_label();
    let data = super::normalize_order(data);

    let mut by_class: Vec<(Label, Vec<usize>)> = vec![
        (positive, Vec::new()),
        (task.restrict_label(), Vec::new()),
    ];
    for (i, d) in data.iter().enumerate() {
        let slot = if d.label == positive { 0 } else { 1 };
        by_class[slot].1.push(i);
    }
    let min_class = by_class.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    if min_class < 2 {
        return Err(ClassifierError::TooFewExamples);
    }
    let folds_used = folds.min(min_class);
    let mut warnings = Vec::new();
    if folds_used < folds {
        warnings.push(format!(
            "reduced folds from {folds} to {folds_used}: minority class has {min_class} examples"
        ));
    }

    // stratified assignment: shuffle within each class, deal round-robin
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut fold_of = vec![0usize; data.len()];
    for (_, indices) in &mut by_class {
        indices.shuffle(&mut rng);
        for (j, &idx) in indices.iter().enumerate() {
            fold_of[idx] = j % folds_used;
        }
    }

    let mut fold_evals = Vec::with_capacity(folds_used);
    let mut pooled_scores: Vec<(f64, bool)> = Vec::new();
    let mut pooled_confusion = Confusion::default();
    for fold in 0..folds_used {
        let train_set: Vec<LabeledFeatureVector> = data
            .iter()
            .enumerate()
            .filter(|&(i, _)| fold_of[i] != fold)
            .map(|(_, d)| d.clone())
            .collect();
        let test_set: Vec<&LabeledFeatureVector> = data
            .iter()
            .enumerate()
            .filter(|&(i, _)| fold_of[i] == fold)
            .map(|(_, d)| d)
            .collect();
        let model = train(spec, &train_set)?;
        let mut confusion = Confusion::default();
        let mut scores = Vec::with_capacity(test_set.len());
        for d in &test_set {
            let score = model.score_positive(&d.fv);
            let actually_positive = d.label == positive;
            confusion.add(score > 0.5, actually_positive);
            scores.push((score, actually_positive));
        }
        let (roc, auc) = roc_curve(&scores)?;
        pooled_scores.extend(&scores);
        pooled_confusion.merge(&confusion);
        fold_evals.push(FoldEval { confusion, roc, auc });
    }
    let (pooled_roc, pooled_auc) = roc_curve(&pooled_scores)?;
    Ok(EvalResult {
        folds: fold_evals,
        pooled: FoldEval {
            confusion: pooled_confusion,
            roc: pooled_roc,
            auc: pooled_auc,
        },
        folds_used,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{test_data, ModelKind};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfectly_ordered_scores_have_auc_one() {
        let scores = vec![(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let (points, auc) = roc_curve(&scores).unwrap();
        assert_eq!(auc, 1.0);
        assert_eq!(points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn identical_scores_give_the_diagonal() {
        let scores = vec![(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
        let (points, auc) = roc_curve(&scores).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!((points[1].fpr, points[1].tpr), (1.0, 1.0));
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn interleaved_scores_match_hand_count() {
        // concordant pairs: (0.9,0.8), (0.9,0.6), (0.7,0.6) of 4 total
        let scores = vec![(0.9, true), (0.8, false), (0.7, true), (0.6, false)];
        let (_, auc) = roc_curve(&scores).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn one_class_only_is_rejected() {
        assert_eq!(
            roc_curve(&[(0.5, true), (0.9, true)]).unwrap_err(),
            ClassifierError::OneClassOnly
        );
    }

    /// Independent AUC oracle: concordant-pair counting with half credit
    /// for ties.
    fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for &(sp, p) in scores.iter().filter(|&&(_, pos)| pos) {
            let _ = p;
            for &(sn, _) in scores.iter().filter(|&&(_, pos)| !pos) {
                pairs += 1.0;
                if sp > sn {
                    concordant += 1.0;
                } else if sp == sn {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auc_equals_pair_counting_on_random_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(4..200);
            let scores: Vec<(f64, bool)> = (0..n)
                .map(|_| {
                    // quantized scores produce plenty of ties
                    let s = (rng.random_range(0.0_f64..1.0) * 8.0).round() / 8.0;
                    (s, rng.random_bool(0.5))
                })
                .collect();
            let has_both = scores.iter().any(|s| s.1) && scores.iter().any(|s| !s.1);
            if !has_both {
                continue;
            }
            let (_, auc) = roc_curve(&scores).unwrap();
            assert!((auc - pairwise_auc(&scores)).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_points_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let scores: Vec<(f64, bool)> = (0..101)
            .map(|_| (rng.random_range(0.0..1.0), rng.random_bool(0.4)))
            .collect();
        let (points, _) = roc_curve(&scores).unwrap();
        for w in points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn separable_data_cross_validates_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = test_data::separable(50, &mut rng);
        for kind in [ModelKind::Knn, ModelKind::NaiveBayes, ModelKind::RandomForest] {
            let spec = ModelSpec {
                kind,
                rf_trees: 25,
                ..ModelSpec::default()
            };
            let result = cross_validate(&spec, &data, 10).unwrap();
            assert_eq!(result.folds_used, 10);
            assert!(
                result.pooled.auc >= 0.99,
                "kind {kind:?} auc {}",
                result.pooled.auc
            );
        }
    }

    #[test]
    fn permuted_labels_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = test_data::separable(50, &mut rng);
        let spec = ModelSpec {
            rf_trees: 25,
            ..ModelSpec::default()
        };
        // mean over several permutation seeds concentrates near 0.5
        let mut total = 0.0;
        let runs = 10;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<Label> = data.iter().map(|d| d.label).collect();
            labels.shuffle(&mut rng);
            let permuted: Vec<LabeledFeatureVector> = data
                .iter()
                .zip(&labels)
                .map(|(d, &label)| LabeledFeatureVector { label, ..d.clone() })
                .collect();
            total += cross_validate(&spec, &permuted, 10).unwrap().pooled.auc;
        }
        let mean = total / runs as f64;
        assert!((0.4..=0.6).contains(&mean), "mean permuted auc {mean}");
    }

    #[test]
    fn ten_per_class_stratifies_one_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = test_data::separable(10, &mut rng);
        let spec = ModelSpec {
            rf_trees: 10,
            ..ModelSpec::default()
        };
        let result = cross_validate(&spec, &data, 10).unwrap();
        assert_eq!(result.folds_used, 10);
        for fold in &result.folds {
            let c = fold.confusion;
            assert_eq!(c.tp + c.fn_, 1, "one positive per fold");
            assert_eq!(c.tn + c.fp, 1, "one negative per fold");
        }
    }

    #[test]
    fn folds_shrink_to_minority_count_with_warning() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut data = test_data::separable(20, &mut rng);
        // drop positives down to 4
        let mut kept = 0;
        data.retain(|d| {
            if d.label == Label::LowRisk {
                kept += 1;
                kept <= 4
            } else {
                true
            }
        });
        let spec = ModelSpec {
            rf_trees: 10,
            ..ModelSpec::default()
        };
        let result = cross_validate(&spec, &data, 10).unwrap();
        assert_eq!(result.folds_used, 4);
        assert_eq!(result.warnings.len(), 1);
    }

    #[test]
    fn under_two_per_class_is_too_few() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut data = test_data::separable(10, &mut rng);
        let mut kept = 0;
        data.retain(|d| {
            if d.label == Label::LowRisk {
                kept += 1;
                kept <= 1
            } else {
                true
            }
        });
        assert_eq!(
            cross_validate(&ModelSpec::default(), &data, 10).unwrap_err(),
            ClassifierError::TooFewExamples
        );
    }

    #[test]
    fn operating_point_maximizes_tpr_within_budget() {
        let scores = vec![
            (0.9, true),
            (0.8, true),
            (0.7, false),
            (0.6, true),
            (0.5, false),
            (0.4, false),
        ];
        let (points, _) = roc_curve(&scores).unwrap();
        let op = operating_point(&points, 0.34, 3, 3);
        assert_eq!(op.tpr, 1.0);
        assert!(op.fpr <= 0.34);
        assert_eq!((op.confusion.tp, op.confusion.fp), (3, 1));
        let strict = operating_point(&points, 0.0, 3, 3);
        assert_eq!(strict.fpr, 0.0);
        assert_eq!(strict.tpr, 2.0 / 3.0);
        assert_eq!((strict.confusion.tp, strict.confusion.fp, strict.confusion.tn, strict.confusion.fn_), (2, 0, 3, 1));
    }

    #[test]
    fn vertical_average_of_identical_curves_is_identity() {
        let scores = vec![(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        let (points, _) = roc_curve(&scores).unwrap();
        let avg = vertical_average(&[points.clone(), points], &[0.0, 0.5, 1.0]);
        assert_eq!(avg, vec![(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    }
}
