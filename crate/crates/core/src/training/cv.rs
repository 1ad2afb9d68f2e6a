use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wilcoxon::{wilcoxon_signed_rank, Alternative};
use super::{train, Metric, Sample, TrainConfig, TrainError};
use crate::metrics;
use crate::sealnet::{PreparedGraph, SealConfig};

pub const DEFAULT_LAMBDA_GRID: [f64; 8] = [2.0, 1.0, 0.5, 1e-1, 1e-2, 1e-3, 1e-4, 0.0];

/// Held-out metric of every (λ, fold) pair. All candidates share folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub metric: Metric,
    pub lambdas: Vec<f64>,
    pub n_folds: usize,
    /// `fold_metrics[c][f]`: candidate `c` evaluated on fold `f`.
    pub fold_metrics: Vec<Vec<f64>>,
    pub mean_metrics: Vec<f64>,
    pub alpha: f64,
    pub selected_lambda: f64,
}

impl CvReport {
    /// Builds a report from raw fold metrics and runs the selection.
    pub fn new(
        metric: Metric,
        lambdas: Vec<f64>,
        fold_metrics: Vec<Vec<f64>>,
        alpha: f64,
    ) -> Result<Self, TrainError> {
        if lambdas.is_empty() || lambdas.len() != fold_metrics.len() {
            return Err(TrainError::EmptyReport);
        }
        let n_folds = fold_metrics[0].len();
        if n_folds == 0 {
            return Err(TrainError::EmptyReport);
        }
        if let Some(bad) = fold_metrics.iter().find(|f| f.len() != n_folds) {
            return Err(TrainError::LengthMismatch(bad.len(), n_folds));
        }
        let mean_metrics = fold_metrics
            .iter()
            .map(|f| f.iter().sum::<f64>() / n_folds as f64)
            .collect();
        let mut report = Self {
            metric,
            lambdas,
            n_folds,
            fold_metrics,
            mean_metrics,
            alpha,
            selected_lambda: f64::NAN,
        };
        report.selected_lambda = select_lambda(&report, alpha)?;
        Ok(report)
    }
}

/// The largest λ whose fold metrics are not significantly worse than the
/// candidate with the best mean (one-sided signed-rank test at `alpha`).
/// With a single fold the best-mean candidate is returned.
pub fn select_lambda(report: &CvReport, alpha: f64) -> Result<f64, TrainError> {
    if report.lambdas.is_empty() {
        return Err(TrainError::EmptyReport);
    }
    let metric = report.metric;
    let mean = |c: usize| {
        let f = &report.fold_metrics[c];
        metric.oriented(f.iter().sum::<f64>() / f.len() as f64)
    };
    let mut by_lambda: Vec<usize> = (0..report.lambdas.len()).collect();
    by_lambda.sort_by(|&a, &b| report.lambdas[b].total_cmp(&report.lambdas[a]));
    // first maximum in descending-λ order, so ties favor the larger λ
    let best = by_lambda
        .iter()
        .copied()
        .fold(None::<usize>, |acc, c| match acc {
            Some(b) if mean(b) >= mean(c) => Some(b),
            _ => Some(c),
        })
        .expect("nonempty");
    if report.n_folds < 2 {
        return Ok(report.lambdas[best]);
    }
    // d = best − candidate on the higher-is-better scale; "worse" means d > 0
    let oriented = |c: usize| -> Vec<f64> {
        report.fold_metrics[c].iter().map(|&v| metric.oriented(v)).collect()
    };
    let best_scores = oriented(best);
    for &c in &by_lambda {
        if c == best {
            return Ok(report.lambdas[c]);
        }
        let p = wilcoxon_signed_rank(&best_scores, &oriented(c), Alternative::Greater)?;
        if p >= alpha {
            return Ok(report.lambdas[c]);
        }
    }
    Ok(report.lambdas[best])
}

fn fold_metric(
    model: &crate::sealnet::SealModel,
    val: &[&Sample],
    metric: Metric,
    batch_size: usize,
) -> Result<f64, TrainError> {
    let graphs: Vec<&PreparedGraph> = val.iter().map(|s| &s.graph).collect();
    let targets: Vec<f64> = val.iter().map(|s| s.target).collect();
    let preds = model.predict(&graphs, batch_size)?;
    Ok(match metric {
        Metric::Auroc => metrics::auroc(&preds, &targets)?,
        Metric::Mae => metrics::mae(&preds, &targets)?,
    })
}

/// Trains one model per (λ, fold) pair, in parallel on the current rayon
/// pool. The held-out fold serves both for early stopping and as the
/// reported metric. Every λ uses the same per-fold seed.
pub fn cross_validate(
    model_config: &SealConfig,
    samples: &[Sample],
    folds: &[Vec<usize>],
    lambdas: &[f64],
    cfg: &TrainConfig,
    alpha: f64,
) -> Result<CvReport, TrainError> {
    if lambdas.is_empty() || folds.is_empty() {
        return Err(TrainError::EmptyReport);
    }
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let results: Vec<((usize, usize), f64)> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let held_out = &folds[f];
            let mut in_val = vec![false; samples.len()];
            for &i in held_out {
                in_val[i] = true;
            }
            let train_set: Vec<Sample> = samples
                .iter()
                .zip(&in_val)
                .filter(|(_, &v)| !v)
                .map(|(s, _)| s.clone())
                .collect();
            let val: Vec<Sample> = held_out.iter().map(|&i| samples[i].clone()).collect();
            let fold_cfg = TrainConfig {
                lambda: lambdas[c],
                seed: cfg.seed.wrapping_add(f as u64),
                ..cfg.clone()
            };
            let (model, _) = train(model_config, &train_set, &val, &fold_cfg)?;
            let refs: Vec<&Sample> = val.iter().collect();
            let m = fold_metric(&model, &refs, cfg.metric, cfg.batch_size)?;
            log::info!("lambda {} fold {f}: {m:.4}", lambdas[c]);
            Ok(((c, f), m))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut fold_metrics = vec![vec![f64::NAN; folds.len()]; lambdas.len()];
    for ((c, f), m) in results {
        fold_metrics[c][f] = m;
    }
    CvReport::new(cfg.metric, lambdas.to_vec(), fold_metrics, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate() {
        let r = CvReport::new(Metric::Auroc, vec![0.5], vec![vec![0.7, 0.8, 0.9]], 0.05).unwrap();
        assert_eq!(r.selected_lambda, 0.5);
    }

    #[test]
    fn identical_candidates_pick_largest() {
        let folds = vec![0.8, 0.85, 0.9, 0.7];
        let lambdas = DEFAULT_LAMBDA_GRID.to_vec();
        let metrics = vec![folds; lambdas.len()];
        let r = CvReport::new(Metric::Auroc, lambdas, metrics, 0.05).unwrap();
        assert_eq!(r.selected_lambda, 2.0);
    }

    #[test]
    fn consistently_worse_lambda_rejected() {
        let best: Vec<f64> = (0..10).map(|i| 0.8 + 0.01 * i as f64).collect();
        let worse: Vec<f64> = best.iter().map(|v| v - 0.1).collect();
        let r = CvReport::new(
            Metric::Auroc,
            vec![2.0, 1e-4],
            vec![worse, best.clone()],
            0.05,
        )
        .unwrap();
        assert_eq!(r.selected_lambda, 1e-4);
    }

    #[test]
    fn lower_is_better_direction() {
        let best = vec![1.0, 1.1, 0.9, 1.0, 1.2, 0.8];
        let worse: Vec<f64> = best.iter().map(|v| v + 0.5).collect();
        let r = CvReport::new(Metric::Mae, vec![1.0, 0.0], vec![worse, best], 0.05).unwrap();
        assert_eq!(r.selected_lambda, 0.0);
    }

    #[test]
    fn single_fold_uses_best_mean() {
        let r = CvReport::new(Metric::Auroc, vec![1.0, 0.1], vec![vec![0.7], vec![0.71]], 0.05).unwrap();
        assert_eq!(r.selected_lambda, 0.1);
    }

    #[test]
    fn empty_report_rejected() {
        assert!(matches!(
            CvReport::new(Metric::Auroc, vec![], vec![], 0.05),
            Err(TrainError::EmptyReport)
        ));
    }

    #[test]
    fn never_below_best_mean_lambda() {
        // small, noisy differences: the larger λ qualifies
        let best = vec![0.90, 0.80, 0.85, 0.95];
        let near = vec![0.89, 0.81, 0.84, 0.95];
        let r = CvReport::new(Metric::Auroc, vec![0.0, 1.0], vec![best, near], 0.05).unwrap();
        assert_eq!(r.selected_lambda, 1.0);
    }
}
