//! Divergence-minimizing target imputation under order-statistic constraints.
//!
//! For an identically separable divergence the optimal assignment of a
//! sorted target vector to rows is the one isotonic with the predicted
//! means, and in sorted coordinates the optimum is a coordinatewise clip of
//! the sorted means into the interval between neighbouring constraints. The
//! clip does not depend on which divergence is used.

use crate::aggregation::{AggregateSummary, OrderStatisticConstraint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A vector factored as a permutation and a nondecreasing value vector.
///
/// `order[j]` is the original index of the `j`-th smallest value, so
/// `v[order[j]] == sorted_values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedView<F> {
    pub order: Vec<usize>,
    pub sorted_values: Vec<F>,
}

impl<F: Scalar> SortedView<F> {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Places `sorted[j]` at original position `order[j]`.
    pub fn scatter(&self, sorted: &[F]) -> Vec<F> {
        debug_assert_eq!(sorted.len(), self.order.len());
        let mut out = vec![F::zero(); self.order.len()];
        for (&idx, &v) in self.order.iter().zip(sorted) {
            out[idx] = v;
        }
        out
    }

    /// Reconstructs the original vector.
    pub fn restore(&self) -> Vec<F> {
        self.scatter(&self.sorted_values)
    }
}

/// Stable ascending sort; ties keep ascending original index.
pub fn sorted_view<F: Scalar>(v: &[F]) -> SortedView<F> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        v[a].partial_cmp(&v[b])
            .expect("sorted_view requires finite entries")
    });
    let sorted_values = order.iter().map(|&i| v[i]).collect();
    SortedView {
        order,
        sorted_values,
    }
}

/// Clips sorted means so the result passes through every `(rank, value)`.
///
/// Positions below the first constrained rank are capped at its value,
/// positions above the last are floored at its value, and positions between
/// two constrained ranks are clamped into their value interval. Constrained
/// positions receive the constraint value exactly. The output is the
/// minimizer of any identically separable Bregman divergence to
/// `gamma_sorted` over nondecreasing vectors meeting the constraints.
pub fn impute_sorted<F: Scalar>(
    gamma_sorted: &[F],
    constraints: &[OrderStatisticConstraint<F>],
) -> Result<Vec<F>> {
    let m = gamma_sorted.len();
    for c in constraints {
        if c.rank == 0 || c.rank > m {
            return Err(Error::InvalidArgument(format!(
                "rank {} outside [1, {m}]",
                c.rank
            )));
        }
    }
    if constraints
        .windows(2)
        .any(|w| w[1].rank <= w[0].rank || w[1].value < w[0].value)
    {
        return Err(Error::InvalidArgument(
            "constraints must have increasing ranks and nondecreasing values".into(),
        ));
    }
    debug_assert!(gamma_sorted.windows(2).all(|w| w[0] <= w[1]));

    let mut out = gamma_sorted.to_vec();
    let (Some(first), Some(last)) = (constraints.first(), constraints.last()) else {
        return Ok(out);
    };
    for v in &mut out[..first.rank - 1] {
        *v = v.min(first.value);
    }
    for pair in constraints.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        for v in &mut out[lo.rank..hi.rank - 1] {
            *v = v.max(lo.value).min(hi.value);
        }
    }
    for v in &mut out[last.rank..] {
        *v = v.max(last.value);
    }
    for c in constraints {
        out[c.rank - 1] = c.value;
    }
    Ok(out)
}

/// Blockwise imputation: within each block the block's means are sorted,
/// clipped by [`impute_sorted`] and scattered back, so the result is
/// isotonic with `gamma` inside every block. Rows outside all blocks keep
/// their mean.
pub fn impute_targets<F: Scalar>(gamma: &[F], summary: &AggregateSummary<F>) -> Result<Vec<F>> {
    let mut out = gamma.to_vec();
    for block in &summary.blocks {
        if let Some(&row) = block.rows.iter().find(|&&r| r >= gamma.len()) {
            return Err(Error::DimensionMismatch {
                what: "summary row id vs. number of means",
                expected: gamma.len(),
                found: row + 1,
            });
        }
        let local: Vec<F> = block.rows.iter().map(|&r| gamma[r]).collect();
        let view = sorted_view(&local);
        let imputed = impute_sorted(&view.sorted_values, &block.constraints)?;
        for (&pos, &v) in view.order.iter().zip(&imputed) {
            out[block.rows[pos]] = v;
        }
    }
    Ok(out)
}
