//! Evaluation metrics, the permutation test, and cross-validated sweeps
//! over summary granularity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregation::{summarize_blocks, summarize_targets, AggregateSummary, SummaryScheme};
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::glm::{fit_glm_from, predict_means, DesignMatrix};
use crate::scalar::Scalar;
use crate::solver::{alternate_fit, FitOptions};

/// Relative tolerance under which a null statistic counts as tied with the
/// observed one. Refits on permuted data reproduce a permutation-invariant
/// statistic only up to summation order.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Mean per-sample divergence between true and recovered targets.
pub fn evaluate_error<F: Scalar>(z_true: &[F], z_rec: &[F], family: &GlmFamily<F>) -> Result<F> {
    if z_true.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate error on an empty sample".into(),
        ));
    }
    family.check_targets(z_true)?;
    family.check_targets(z_rec)?;
    Ok(family.bregman_divergence(z_true, z_rec)? / F::from_usize_lossy(z_true.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTestResult<F> {
    pub observed_error: F,
    pub null_errors: Vec<F>,
    pub p_value: F,
    /// Null refits that exhausted the Newton budget; their last iterate is
    /// still used.
    pub null_failures: usize,
}

/// `(1 + #{null <= observed}) / (1 + #null)`, counting near-ties as ties.
pub fn permutation_p_value<F: Scalar>(observed: F, nulls: &[F]) -> F {
    let slack = observed.abs() * F::lit(TIE_RELATIVE_TOLERANCE);
    let hits = nulls.iter().filter(|&&e| e <= observed + slack).count();
    F::from_usize_lossy(1 + hits) / F::from_usize_lossy(1 + nulls.len())
}

/// Uniform random permutation of `0..n` for replicate `replicate` under
/// `seed`. Each replicate has its own stream, so results do not depend on
/// evaluation order.
pub fn replicate_permutation(n: usize, seed: u64, replicate: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Compares the fitted model's error against GLM fits on permuted targets.
///
/// The observed statistic is the mean divergence between the true targets
/// and the fitted means, where the coefficients come from the aggregated
/// fit when `summary` is given and from a direct GLM fit otherwise. Each
/// null statistic is the training error of a direct fit on a uniformly
/// permuted copy of the true targets.
pub fn permutation_test<F: Scalar>(
    x: &DesignMatrix<F>,
    z_true: &[F],
    summary: Option<&AggregateSummary<F>>,
    family: &GlmFamily<F>,
    options: &FitOptions<F>,
    n_perms: usize,
    seed: u64,
) -> Result<PermutationTestResult<F>> {
    if n_perms == 0 {
        return Err(Error::InvalidArgument("n_perms must be >= 1".into()));
    }
    if z_true.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "target length",
            expected: x.nrows(),
            found: z_true.len(),
        });
    }
    let zero = ndarray::Array1::<F>::zeros(x.ncols());
    let beta = match summary {
        Some(s) => alternate_fit(x, s, family, options)?.coefficients.beta,
        None => {
            fit_glm_from(x, z_true, family, &options.glm, zero.view())?
                .coefficients
                .beta
        }
    };
    let mu = predict_means(x, beta.view(), family)?;
    let observed_error = evaluate_error(z_true, mu.as_slice().expect("contiguous"), family)?;

    let nulls = (0..n_perms as u64)
        .into_par_iter()
        .map(|r| -> Result<(F, bool)> {
            let perm = replicate_permutation(z_true.len(), seed, r);
            let zp: Vec<F> = perm.iter().map(|&i| z_true[i]).collect();
            let fit = fit_glm_from(x, &zp, family, &options.glm, zero.view())?;
            let mu = predict_means(x, fit.coefficients.beta.view(), family)?;
            Ok((
                evaluate_error(&zp, mu.as_slice().expect("contiguous"), family)?,
                fit.converged,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let null_failures = nulls.iter().filter(|(_, ok)| !ok).count();
    let null_errors: Vec<F> = nulls.into_iter().map(|(e, _)| e).collect();
    Ok(PermutationTestResult {
        p_value: permutation_p_value(observed_error, &null_errors),
        observed_error,
        null_errors,
        null_failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub bins: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    pub drop_extremes: bool,
    /// Optional row blocks. A block is never split across folds and is
    /// summarized on its own.
    pub blocks: Option<Vec<Vec<usize>>>,
}

impl SweepConfig {
    pub fn new(bins: Vec<usize>, folds: usize, seed: u64) -> Self {
        Self {
            bins,
            folds,
            seed,
            drop_extremes: false,
            blocks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord<F> {
    pub bins: usize,
    pub fold: usize,
    pub train_error: F,
    pub test_error: F,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRecord<F> {
    pub fold: usize,
    pub train_error: F,
    pub test_error: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult<F> {
    /// Ordered by bin count (as configured), then fold.
    pub records: Vec<SweepRecord<F>>,
    /// Fully observed GLM on each training fold.
    pub baseline: Vec<BaselineRecord<F>>,
}

impl<F: Scalar> SweepResult<F> {
    /// Fold-averaged `(train, test)` error for a bin count.
    pub fn mean_errors(&self, bins: usize) -> Option<(F, F)> {
        let rows: Vec<_> = self.records.iter().filter(|r| r.bins == bins).collect();
        if rows.is_empty() {
            return None;
        }
        let k = F::from_usize_lossy(rows.len());
        Some((
            rows.iter().map(|r| r.train_error).sum::<F>() / k,
            rows.iter().map(|r| r.test_error).sum::<F>() / k,
        ))
    }

    pub fn mean_baseline(&self) -> (F, F) {
        let k = F::from_usize_lossy(self.baseline.len().max(1));
        (
            self.baseline.iter().map(|r| r.train_error).sum::<F>() / k,
            self.baseline.iter().map(|r| r.test_error).sum::<F>() / k,
        )
    }
}

/// Assigns every row a fold in `0..folds`. Units (blocks, or single rows
/// outside all blocks) are shuffled by `seed` and dealt round-robin.
pub fn fold_assignment(
    n: usize,
    folds: usize,
    seed: u64,
    blocks: Option<&[Vec<usize>]>,
) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be >= 2".into()));
    }
    let mut units: Vec<Vec<usize>> = Vec::new();
    let mut covered = vec![false; n];
    if let Some(blocks) = blocks {
        for b in blocks {
            for &r in b {
                if r >= n || covered[r] {
                    return Err(Error::InvalidArgument(format!(
                        "block row {r} out of range or repeated"
                    )));
                }
                covered[r] = true;
            }
            units.push(b.clone());
        }
    }
    units.extend((0..n).filter(|&r| !covered[r]).map(|r| vec![r]));
    if units.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} units cannot fill {folds} folds",
            units.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let mut fold = vec![0; n];
    for (i, unit) in units.iter().enumerate() {
        for &r in unit {
            fold[r] = i % folds;
        }
    }
    Ok(fold)
}

/// Cross-validated training and test error as a function of the number of
/// quantile bins in the summary, alongside the fully observed baseline.
pub fn granularity_sweep<F: Scalar>(
    x: &DesignMatrix<F>,
    z_true: &[F],
    family: &GlmFamily<F>,
    config: &SweepConfig,
    options: &FitOptions<F>,
) -> Result<SweepResult<F>> {
    let n = x.nrows();
    if z_true.len() != n {
        return Err(Error::DimensionMismatch {
            what: "target length",
            expected: n,
            found: z_true.len(),
        });
    }
    family.check_targets(z_true)?;
    if config.bins.contains(&0) {
        return Err(Error::InvalidArgument(
            "every bin count must be >= 1".into(),
        ));
    }
    let assignment = fold_assignment(n, config.folds, config.seed, config.blocks.as_deref())?;

    struct Split<F> {
        train_rows: Vec<usize>,
        test_rows: Vec<usize>,
        x_train: DesignMatrix<F>,
        x_test: DesignMatrix<F>,
        z_train: Vec<F>,
        z_test: Vec<F>,
        local_blocks: Option<Vec<Vec<usize>>>,
    }

    let splits: Vec<Split<F>> = (0..config.folds)
        .map(|f| {
            let train_rows: Vec<usize> = (0..n).filter(|&r| assignment[r] != f).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&r| assignment[r] == f).collect();
            let local_blocks = config.blocks.as_ref().map(|blocks| {
                let mut local = vec![usize::MAX; n];
                for (i, &r) in train_rows.iter().enumerate() {
                    local[r] = i;
                }
                blocks
                    .iter()
                    .filter(|b| b.first().is_some_and(|&r| assignment[r] != f))
                    .map(|b| b.iter().map(|&r| local[r]).collect())
                    .collect()
            });
            Split {
                x_train: x.select_rows(&train_rows),
                x_test: x.select_rows(&test_rows),
                z_train: train_rows.iter().map(|&r| z_true[r]).collect(),
                z_test: test_rows.iter().map(|&r| z_true[r]).collect(),
                train_rows,
                test_rows,
                local_blocks,
            }
        })
        .collect();

    let zero = ndarray::Array1::<F>::zeros(x.ncols());
    let baseline = splits
        .par_iter()
        .enumerate()
        .map(|(fold, s)| -> Result<BaselineRecord<F>> {
            let fit = fit_glm_from(&s.x_train, &s.z_train, family, &options.glm, zero.view())?;
            let beta = fit.coefficients.beta.view();
            let mu_train = predict_means(&s.x_train, beta, family)?;
            let mu_test = predict_means(&s.x_test, beta, family)?;
            Ok(BaselineRecord {
                fold,
                train_error: evaluate_error(&s.z_train, mu_train.as_slice().unwrap(), family)?,
                test_error: evaluate_error(&s.z_test, mu_test.as_slice().unwrap(), family)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = config
        .bins
        .iter()
        .flat_map(|&b| (0..config.folds).map(move |f| (b, f)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(bins, fold)| -> Result<SweepRecord<F>> {
            let s = &splits[fold];
            debug_assert_eq!(s.train_rows.len() + s.test_rows.len(), n);
            let scheme = SummaryScheme::QuantileCuts {
                bins,
                drop_extremes: config.drop_extremes,
            };
            let summary = match &s.local_blocks {
                Some(blocks) => summarize_blocks(&s.z_train, blocks, &scheme)?,
                None => summarize_targets(&s.z_train, &scheme)?,
            };
            let state = alternate_fit(&s.x_train, &summary, family, options)?;
            let mu_test = predict_means(&s.x_test, state.coefficients.beta.view(), family)?;
            Ok(SweepRecord {
                bins,
                fold,
                train_error: evaluate_error(&s.z_train, &state.z_hat, family)?,
                test_error: evaluate_error(&s.z_test, mu_test.as_slice().unwrap(), family)?,
                iterations: state.iterations,
                converged: state.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult { records, baseline })
}
