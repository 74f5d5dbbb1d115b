//! Ridge-penalized GLM estimation by damped Newton (IRLS) iterations.
//!
//! The objective is `D(z || mean(X beta)) + lambda * |beta|^2` with every
//! coefficient penalized unless listed in [`GlmOptions::unpenalized`]. There
//! is no implicit intercept; append a constant column to get one.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::linalg::{cholesky_solve, pseudo_inverse_solve};
use crate::scalar::Scalar;

/// Covariates, one row per individual. Always non-empty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<F>(Array2<F>);

impl<F: Scalar> DesignMatrix<F> {
    pub fn new(values: Array2<F>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "design matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self(values))
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "design matrix row length",
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, F> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<F> {
        self.0
    }

    /// The sub-design formed by the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self(self.0.select(Axis(0), rows))
    }

    /// Linear predictor `X beta`.
    pub fn linear_predictor(&self, beta: ArrayView1<'_, F>) -> Result<Array1<F>> {
        if beta.len() != self.ncols() {
            return Err(Error::DimensionMismatch {
                what: "coefficient length",
                expected: self.ncols(),
                found: beta.len(),
            });
        }
        Ok(self.0.dot(&beta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients<F> {
    pub beta: Array1<F>,
    pub lambda: F,
}

impl<F: Scalar> Coefficients<F> {
    pub fn zeros(d: usize, lambda: F) -> Self {
        Self {
            beta: Array1::zeros(d),
            lambda,
        }
    }
}

/// Componentwise link inverse of `X beta`.
pub fn predict_means<F: Scalar>(
    x: &DesignMatrix<F>,
    beta: ArrayView1<'_, F>,
    family: &GlmFamily<F>,
) -> Result<Array1<F>> {
    Ok(x.linear_predictor(beta)?
        .mapv(|eta| family.link_inverse(eta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmOptions<F> {
    pub lambda: F,
    /// Column indices exempt from the ridge penalty.
    pub unpenalized: Vec<usize>,
    pub max_iterations: usize,
    /// Absolute tolerance on the infinity norm of the objective gradient.
    pub gradient_tolerance: F,
}

impl<F: Scalar> Default for GlmOptions<F> {
    fn default() -> Self {
        Self {
            lambda: F::zero(),
            unpenalized: Vec::new(),
            max_iterations: 100,
            gradient_tolerance: F::default_gradient_tolerance(),
        }
    }
}

impl<F: Scalar> GlmOptions<F> {
    pub fn with_lambda(lambda: F) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(self.lambda >= F::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if let Some(&j) = self.unpenalized.iter().find(|&&j| j >= d) {
            return Err(Error::InvalidArgument(format!(
                "unpenalized column {j} out of range for {d} columns"
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }

    fn penalty_weights(&self, d: usize) -> Array1<F> {
        let mut w = Array1::from_elem(d, self.lambda);
        for &j in &self.unpenalized {
            w[j] = F::zero();
        }
        w
    }

    /// `lambda * sum beta_j^2` over penalized columns.
    pub fn penalty(&self, beta: ArrayView1<'_, F>) -> F {
        let w = self.penalty_weights(beta.len());
        beta.iter().zip(w.iter()).map(|(&b, &l)| l * b * b).sum()
    }
}

/// Result of a Newton fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit<F> {
    pub coefficients: Coefficients<F>,
    pub iterations: usize,
    pub objective: F,
    pub gradient_norm: F,
    pub converged: bool,
    /// The Hessian was singular and minimum-norm steps were used.
    pub rank_deficient: bool,
}

/// Penalized objective `D(z || mean(X beta)) + lambda |beta|^2`.
pub fn glm_objective<F: Scalar>(
    x: &DesignMatrix<F>,
    z: &[F],
    family: &GlmFamily<F>,
    options: &GlmOptions<F>,
    beta: ArrayView1<'_, F>,
) -> Result<F> {
    let mu = predict_means(x, beta, family)?;
    let div = family.bregman_divergence(z, mu.as_slice().expect("contiguous"))?;
    Ok(div + options.penalty(beta))
}

/// Gradient of [`glm_objective`] in `beta`: `X^T (mu - z) + 2 lambda beta`.
pub fn glm_gradient<F: Scalar>(
    x: &DesignMatrix<F>,
    z: &[F],
    family: &GlmFamily<F>,
    options: &GlmOptions<F>,
    beta: ArrayView1<'_, F>,
) -> Result<Array1<F>> {
    check_targets_len(x, z)?;
    let mu = predict_means(x, beta, family)?;
    Ok(gradient_at(x, z, family, options, beta, &mu))
}

fn gradient_at<F: Scalar>(
    x: &DesignMatrix<F>,
    z: &[F],
    family: &GlmFamily<F>,
    options: &GlmOptions<F>,
    beta: ArrayView1<'_, F>,
    mu: &Array1<F>,
) -> Array1<F> {
    let resid = Array1::from_iter(mu.iter().zip(z).map(|(&m, &y)| m - family.clip(y)));
    let two = F::lit(2.0);
    let pen = options.penalty_weights(beta.len());
    x.view().t().dot(&resid) + &(pen * beta * two)
}

fn check_targets_len<F: Scalar>(x: &DesignMatrix<F>, z: &[F]) -> Result<()> {
    if z.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "target length",
            expected: x.nrows(),
            found: z.len(),
        });
    }
    Ok(())
}

/// Fits coefficients from `beta = 0`. A run that exhausts the iteration
/// budget is reported as [`Error::NotConverged`] carrying the last iterate.
pub fn fit_glm<F: Scalar>(
    x: &DesignMatrix<F>,
    z: &[F],
    family: &GlmFamily<F>,
    options: &GlmOptions<F>,
) -> Result<GlmFit<F>> {
    let fit = fit_glm_from(x, z, family, options, Array1::zeros(x.ncols()).view())?;
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::NotConverged {
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm.to_f64().unwrap_or(f64::NAN),
            last_beta: fit
                .coefficients
                .beta
                .iter()
                .map(|b| b.to_f64().unwrap_or(f64::NAN))
                .collect(),
        })
    }
}

/// Newton iterations from a given start. Never increases the objective
/// relative to the start beyond rounding in its evaluation, and reports non-convergence through
/// [`GlmFit::converged`] instead of an error.
pub fn fit_glm_from<F: Scalar>(
    x: &DesignMatrix<F>,
    z: &[F],
    family: &GlmFamily<F>,
    options: &GlmOptions<F>,
    start: ArrayView1<'_, F>,
) -> Result<GlmFit<F>> {
    check_targets_len(x, z)?;
    options.validate(x.ncols())?;
    family.check_targets(z)?;
    if start.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "starting coefficients",
            expected: x.ncols(),
            found: start.len(),
        });
    }

    let d = x.ncols();
    let xv = x.view();
    let pen2 = options.penalty_weights(d) * F::lit(2.0);
    let mut beta = start.to_owned();
    let mut mu = predict_means(x, beta.view(), family)?;
    let mut objective = glm_objective(x, z, family, options, beta.view())?;
    let mut rank_deficient = false;
    let mut grad = gradient_at(x, z, family, options, beta.view(), &mu);
    let mut grad_norm = inf_norm(&grad);
    let mut iterations = 0;

    while grad_norm > options.gradient_tolerance && iterations < options.max_iterations {
        iterations += 1;

        let w = mu.mapv(|m| family.mean_derivative(m));
        let weighted = &xv * &w.view().insert_axis(Axis(1));
        let mut hessian = xv.t().dot(&weighted);
        for j in 0..d {
            hessian[[j, j]] = hessian[[j, j]] + pen2[j];
        }
        let step = match cholesky_solve(&hessian, &grad) {
            Some(s) => s,
            None => {
                rank_deficient = true;
                pseudo_inverse_solve(&hessian, &grad)
            }
        };

        let mut t = F::one();
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &beta - &(&step * t);
            if candidate == beta {
                break;
            }
            let cand_obj = glm_objective(x, z, family, options, candidate.view())?;
            if cand_obj <= objective {
                accepted = Some((candidate, cand_obj));
                break;
            }
            t = t * F::lit(0.5);
        }
        let (candidate, cand_obj, cand_mu, cand_grad) = match accepted {
            Some((c, o)) => {
                let m = predict_means(x, c.view(), family)?;
                let g = gradient_at(x, z, family, options, c.view(), &m);
                (c, o, m, g)
            }
            None => {
                // Near the optimum the true decrease can fall below the
                // rounding error of the objective. A full step that ties
                // within a few ulps and shrinks the gradient is taken.
                let c = &beta - &step;
                let o = glm_objective(x, z, family, options, c.view())?;
                let m = predict_means(x, c.view(), family)?;
                let g = gradient_at(x, z, family, options, c.view(), &m);
                let slack = F::epsilon() * F::lit(8.0) * objective.abs();
                if !(o <= objective + slack && inf_norm(&g) < grad_norm) {
                    break;
                }
                (c, o, m, g)
            }
        };
        let moved = candidate != beta;
        beta = candidate;
        objective = cand_obj;
        mu = cand_mu;
        grad = cand_grad;
        grad_norm = inf_norm(&grad);
        if !moved {
            break;
        }
    }

    Ok(GlmFit {
        coefficients: Coefficients {
            beta,
            lambda: options.lambda,
        },
        iterations,
        objective,
        gradient_norm: grad_norm,
        converged: grad_norm <= options.gradient_tolerance,
        rank_deficient,
    })
}

fn inf_norm<F: Scalar>(v: &Array1<F>) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
}
