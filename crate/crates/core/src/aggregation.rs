//! Order-statistic summaries of the response, optionally per block of rows.
//!
//! A histogram over a sample is equivalent to a set of order statistics:
//! an interior bin edge with cumulative count `c` pins the `c`-th smallest
//! value. Row ids are 0-based indices into the dataset; ranks are 1-based
//! within their block.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SummaryIssue};
use crate::family::GlmFamily;
use crate::scalar::Scalar;

/// The `rank`-th smallest value of a block equals `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStatisticConstraint<F> {
    pub rank: usize,
    pub value: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<F> {
    pub rows: Vec<usize>,
    pub constraints: Vec<OrderStatisticConstraint<F>>,
}

impl<F> Block<F> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// The only observation of the response: per-block order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary<F> {
    pub blocks: Vec<Block<F>>,
}

impl<F: Scalar> AggregateSummary<F> {
    /// A single block covering rows `0..n`.
    pub fn single_block(n: usize, constraints: Vec<OrderStatisticConstraint<F>>) -> Self {
        Self {
            blocks: vec![Block {
                rows: (0..n).collect(),
                constraints,
            }],
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.blocks.iter().map(|b| b.constraints.len()).sum()
    }

    /// Checks every structural invariant against a sample of size `n` and
    /// the family's target domain. Errors name the offending block.
    pub fn validate(&self, n: usize, family: &GlmFamily<F>) -> Result<()> {
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let fail = |reason| Err(Error::InvalidSummary { block: b, reason });
            if block.rows.is_empty() {
                return fail(SummaryIssue::EmptyBlock);
            }
            if block.constraints.is_empty() {
                return fail(SummaryIssue::NoConstraints);
            }
            for &row in &block.rows {
                if row >= n {
                    return fail(SummaryIssue::RowOutOfRange { row, n });
                }
                if let Some(&other) = owner.get(&row) {
                    return if other == b {
                        fail(SummaryIssue::DuplicateRow(row))
                    } else {
                        fail(SummaryIssue::OverlappingRow {
                            row,
                            other_block: other,
                        })
                    };
                }
                owner.insert(row, b);
            }
            let size = block.rows.len();
            let mut prev: Option<&OrderStatisticConstraint<F>> = None;
            for c in &block.constraints {
                if c.rank == 0 || c.rank > size {
                    return fail(SummaryIssue::RankOutOfRange {
                        rank: c.rank,
                        block_size: size,
                    });
                }
                if !family.contains(c.value) {
                    return fail(SummaryIssue::ValueOutOfDomain {
                        rank: c.rank,
                        value: c.value.to_f64().unwrap_or(f64::NAN),
                    });
                }
                if let Some(p) = prev {
                    if c.rank == p.rank {
                        return fail(SummaryIssue::DuplicateRank(c.rank));
                    }
                    if c.rank < p.rank {
                        return fail(SummaryIssue::RanksNotIncreasing {
                            previous: p.rank,
                            next: c.rank,
                        });
                    }
                    if c.value < p.value {
                        return fail(SummaryIssue::ValuesDecreasing {
                            rank: c.rank,
                            value: c.value.to_f64().unwrap_or(f64::NAN),
                            previous: p.value.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                }
                prev = Some(c);
            }
        }
        Ok(())
    }

    /// Consuming form of [`validate`](Self::validate).
    pub fn validated(self, n: usize, family: &GlmFamily<F>) -> Result<Self> {
        self.validate(n, family)?;
        Ok(self)
    }
}

/// How a sample is reduced to order statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum SummaryScheme<F> {
    /// Equal-frequency cuts: ranks `round(k n / bins)` for `k = 1..bins-1`,
    /// plus the sample minimum and maximum unless `drop_extremes` is set.
    QuantileCuts { bins: usize, drop_extremes: bool },
    /// A histogram with the given bin edges. Each interior edge whose
    /// cumulative count `c` (values strictly below the edge) satisfies
    /// `0 < c < n` becomes the constraint `(c, edge)`. This treats the edge
    /// as the `c`-th order statistic, which is exact only when a sample value
    /// sits on the edge.
    EdgeHistogram { edges: Vec<F> },
}

impl<F> SummaryScheme<F> {
    pub fn quantile(bins: usize) -> Self {
        SummaryScheme::QuantileCuts {
            bins,
            drop_extremes: false,
        }
    }
}

/// Ranks produced by equal-frequency cuts of a sample of size `n`.
///
/// With `bins == 1` and extremes dropped there are no interior cuts; the
/// median rank `round(n / 2)` (at least 1) is used so the summary is never
/// empty.
pub fn quantile_ranks(n: usize, bins: usize, drop_extremes: bool) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    if bins > n {
        return Err(Error::InvalidArgument(format!(
            "bins ({bins}) exceeds sample size ({n})"
        )));
    }
    let mut ranks: Vec<usize> = (1..bins)
        // round(k n / bins), halves rounded up, in exact integer arithmetic
        .map(|k| (2 * k * n + bins) / (2 * bins))
        .collect();
    if !drop_extremes {
        ranks.push(1);
        ranks.push(n);
    }
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.is_empty() {
        ranks.push(n.div_ceil(2).max(1));
    }
    Ok(ranks)
}

/// Summarizes one sample (a single block over all rows of `z`).
pub fn summarize_targets<F: Scalar>(
    z: &[F],
    scheme: &SummaryScheme<F>,
) -> Result<AggregateSummary<F>> {
    let rows: Vec<usize> = (0..z.len()).collect();
    Ok(AggregateSummary {
        blocks: vec![summarize_block(z, rows, scheme)?],
    })
}

/// Summarizes each block separately. `blocks` lists row ids into `z`.
pub fn summarize_blocks<F: Scalar>(
    z: &[F],
    blocks: &[Vec<usize>],
    scheme: &SummaryScheme<F>,
) -> Result<AggregateSummary<F>> {
    let blocks = blocks
        .iter()
        .map(|rows| {
            if let Some(&r) = rows.iter().find(|&&r| r >= z.len()) {
                return Err(Error::InvalidArgument(format!(
                    "row id {r} out of range for {} targets",
                    z.len()
                )));
            }
            let values: Vec<F> = rows.iter().map(|&r| z[r]).collect();
            let mut block = summarize_block(&values, (0..values.len()).collect(), scheme)?;
            block.rows = rows.clone();
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateSummary { blocks })
}

fn summarize_block<F: Scalar>(
    values: &[F],
    rows: Vec<usize>,
    scheme: &SummaryScheme<F>,
) -> Result<Block<F>> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let constraints = match scheme {
        SummaryScheme::QuantileCuts {
            bins,
            drop_extremes,
        } => quantile_ranks(n, *bins, *drop_extremes)?
            .into_iter()
            .map(|rank| OrderStatisticConstraint {
                rank,
                value: sorted[rank - 1],
            })
            .collect(),
        SummaryScheme::EdgeHistogram { edges } => {
            check_edges(edges)?;
            let mut out: Vec<OrderStatisticConstraint<F>> = Vec::new();
            for &edge in edges {
                let count = sorted.partition_point(|&v| v < edge);
                if count == 0 || count >= n {
                    continue;
                }
                // Several edges with the same cumulative count pin the same
                // rank; the smallest edge is the tightest bound and is kept.
                if out.last().is_some_and(|c| c.rank == count) {
                    continue;
                }
                out.push(OrderStatisticConstraint {
                    rank: count,
                    value: edge,
                });
            }
            out
        }
    };
    Ok(Block { rows, constraints })
}

fn check_edges<F: Scalar>(edges: &[F]) -> Result<()> {
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument("bin edges must be finite".into()));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "bin edges must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Bin counts over half-open bins `[e_i, e_{i+1})`, plus the number of
/// values below the first edge and at or above the last one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramCounts {
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl HistogramCounts {
    pub fn out_of_range(&self) -> usize {
        self.below + self.above
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.out_of_range()
    }
}

pub fn recovered_histogram<F: Scalar>(values: &[F], edges: &[F]) -> Result<HistogramCounts> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument(
            "a histogram needs at least two edges".into(),
        ));
    }
    check_edges(edges)?;
    let mut counts = vec![0usize; edges.len() - 1];
    let (mut below, mut above) = (0, 0);
    let last = edges[edges.len() - 1];
    for &v in values {
        if v < edges[0] {
            below += 1;
        } else if !(v < last) {
            above += 1;
        } else {
            // first edge strictly greater than v, minus one
            let i = edges.partition_point(|&e| e <= v) - 1;
            counts[i] += 1;
        }
    }
    Ok(HistogramCounts {
        counts,
        below,
        above,
    })
}
