//! Alternating minimization over coefficients and imputed targets.
//!
//! Each outer iteration refits the GLM to the current imputed targets
//! (warm-started from the previous coefficients), recomputes the means and
//! re-imputes the targets under the summary. Both half-steps are exact or
//! monotone minimizations of the same objective, so the recorded loss
//! never increases.

use ndarray::Array1;

use crate::aggregation::AggregateSummary;
use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::glm::{fit_glm_from, predict_means, Coefficients, DesignMatrix, GlmOptions};
use crate::imputation::impute_targets;
use crate::scalar::Scalar;

/// How the first target vector is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Piecewise-linear interpolation between constraint values within each
    /// block, laid out over the block's rows in ascending row-id order.
    #[default]
    Interpolate,
    /// Impute from the means at `beta = 0`.
    ZeroBeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<F> {
    /// Settings for the coefficient step (ridge weight, penalty exemptions,
    /// Newton budget and tolerance).
    pub glm: GlmOptions<F>,
    pub max_outer_iterations: usize,
    pub relative_loss_tolerance: F,
    /// Reserved for randomized initialization; both current schemes are
    /// deterministic.
    pub seed: u64,
    pub init: InitScheme,
}

impl<F: Scalar> Default for FitOptions<F> {
    fn default() -> Self {
        Self {
            glm: GlmOptions::default(),
            max_outer_iterations: 500,
            relative_loss_tolerance: F::lit(1e-6),
            seed: 0,
            init: InitScheme::Interpolate,
        }
    }
}

impl<F: Scalar> FitOptions<F> {
    pub fn with_lambda(lambda: F) -> Self {
        Self {
            glm: GlmOptions::with_lambda(lambda),
            ..Self::default()
        }
    }

    pub fn lambda(&self) -> F {
        self.glm.lambda
    }

    fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_outer_iterations must be >= 1".into(),
            ));
        }
        if !(self.relative_loss_tolerance > F::zero()) {
            return Err(Error::InvalidArgument(
                "relative_loss_tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of [`alternate_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitState<F> {
    pub coefficients: Coefficients<F>,
    pub z_hat: Vec<F>,
    /// Objective after each outer iteration.
    pub loss_trajectory: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
    /// Outer iterations whose coefficient step hit the Newton budget.
    pub glm_failures: usize,
    pub rank_deficient: bool,
}

impl<F: Scalar> FitState<F> {
    pub fn final_loss(&self) -> Option<F> {
        self.loss_trajectory.last().copied()
    }

    /// Means at the fitted coefficients.
    pub fn means(&self, x: &DesignMatrix<F>, family: &GlmFamily<F>) -> Result<Array1<F>> {
        predict_means(x, self.coefficients.beta.view(), family)
    }
}

/// A feasible starting target vector for the given summary.
pub fn initialize_targets<F: Scalar>(
    x: &DesignMatrix<F>,
    summary: &AggregateSummary<F>,
    family: &GlmFamily<F>,
    scheme: InitScheme,
) -> Result<Vec<F>> {
    let n = x.nrows();
    summary.validate(n, family)?;
    match scheme {
        InitScheme::ZeroBeta => {
            let gamma = predict_means(x, Array1::zeros(x.ncols()).view(), family)?;
            impute_targets(gamma.as_slice().expect("contiguous"), summary)
        }
        InitScheme::Interpolate => {
            // Unconstrained rows start at the mean for a zero predictor.
            let mut z = vec![family.link_inverse(F::zero()); n];
            for block in &summary.blocks {
                let mut rows = block.rows.clone();
                rows.sort_unstable();
                let cons = &block.constraints;
                let mut seg = 0;
                for (p0, &row) in rows.iter().enumerate() {
                    let p = p0 + 1;
                    while seg + 1 < cons.len() && cons[seg + 1].rank <= p {
                        seg += 1;
                    }
                    let lo = cons[seg];
                    z[row] = if p <= cons[0].rank {
                        cons[0].value
                    } else if p == lo.rank || seg + 1 == cons.len() {
                        lo.value
                    } else {
                        let hi = cons[seg + 1];
                        let t = F::from_usize_lossy(p - lo.rank)
                            / F::from_usize_lossy(hi.rank - lo.rank);
                        (lo.value + (hi.value - lo.value) * t)
                            .max(lo.value)
                            .min(hi.value)
                    };
                }
            }
            Ok(z)
        }
    }
}

/// Fits coefficients and imputed targets from an aggregate summary.
pub fn alternate_fit<F: Scalar>(
    x: &DesignMatrix<F>,
    summary: &AggregateSummary<F>,
    family: &GlmFamily<F>,
    options: &FitOptions<F>,
) -> Result<FitState<F>> {
    let z0 = initialize_targets(x, summary, family, options.init)?;
    alternate_fit_from(x, summary, family, options, z0)
}

/// [`alternate_fit`] starting from caller-supplied targets.
pub fn alternate_fit_from<F: Scalar>(
    x: &DesignMatrix<F>,
    summary: &AggregateSummary<F>,
    family: &GlmFamily<F>,
    options: &FitOptions<F>,
    initial_targets: Vec<F>,
) -> Result<FitState<F>> {
    options.validate()?;
    let n = x.nrows();
    summary.validate(n, family)?;
    if initial_targets.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial targets",
            expected: n,
            found: initial_targets.len(),
        });
    }
    family.check_targets(&initial_targets)?;

    let mut z = initial_targets;
    let mut beta = Array1::<F>::zeros(x.ncols());
    let mut losses: Vec<F> = Vec::new();
    let mut glm_failures = 0;
    let mut rank_deficient = false;
    let mut converged = false;
    let floor = F::lit(1e-12);

    while losses.len() < options.max_outer_iterations {
        let fit = fit_glm_from(x, &z, family, &options.glm, beta.view())?;
        if !fit.converged {
            glm_failures += 1;
        }
        rank_deficient |= fit.rank_deficient;
        beta = fit.coefficients.beta;

        let gamma = predict_means(x, beta.view(), family)?;
        z = impute_targets(gamma.as_slice().expect("contiguous"), summary)?;
        let loss = family.bregman_divergence(&z, gamma.as_slice().expect("contiguous"))?
            + options.glm.penalty(beta.view());

        let previous = losses.last().copied();
        losses.push(loss);
        if let Some(prev) = previous {
            if (loss - prev).abs() / prev.max(floor) < options.relative_loss_tolerance {
                converged = true;
                break;
            }
        }
    }

    Ok(FitState {
        coefficients: Coefficients {
            beta,
            lambda: options.glm.lambda,
        },
        z_hat: z,
        iterations: losses.len(),
        loss_trajectory: losses,
        converged,
        glm_failures,
        rank_deficient,
    })
}
