//! Synthetic GLM data for experiments and tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::family::{FamilyKind, GlmFamily};
use crate::glm::{Coefficients, DesignMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relationship {
    #[default]
    Linear,
    /// Coefficients are zero and targets are drawn at the mean for a zero
    /// predictor, independent of the covariates.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub family: FamilyKind,
    pub n: usize,
    pub d: usize,
    pub coefficient_scale: f64,
    pub covariate_scale: f64,
    pub seed: u64,
    pub relationship: Relationship,
}

impl SimulationConfig {
    /// n = 1000, d = 10, unit covariate scale; coefficient scale 1 except
    /// Poisson, which uses 0.3 to keep `exp(X beta)` moderate.
    pub fn new(family: FamilyKind, seed: u64) -> Self {
        Self {
            family,
            n: 1000,
            d: 10,
            coefficient_scale: if family == FamilyKind::Poisson {
                0.3
            } else {
                1.0
            },
            covariate_scale: 1.0,
            seed,
            relationship: Relationship::Linear,
        }
    }

    pub fn with_size(mut self, n: usize, d: usize) -> Self {
        self.n = n;
        self.d = d;
        self
    }

    pub fn with_relationship(mut self, relationship: Relationship) -> Self {
        self.relationship = relationship;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("n and d must be >= 1".into()));
        }
        if !(self.coefficient_scale > 0.0 && self.covariate_scale > 0.0)
            || !self.coefficient_scale.is_finite()
            || !self.covariate_scale.is_finite()
        {
            return Err(Error::InvalidArgument(
                "scales must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData<F> {
    pub x: DesignMatrix<F>,
    pub z: Vec<F>,
    pub coefficients: Coefficients<F>,
}

/// Draws `X` (i.i.d. normal), `beta` (i.i.d. normal, or zero) and targets
/// from the family at mean `link_inverse(X beta)`. Gaussian noise has unit
/// variance; Bernoulli draws are softened to `{eps, 1 - eps}`.
pub fn simulate_glm<F: Scalar>(config: &SimulationConfig) -> Result<SimulatedData<F>> {
    config.validate()?;
    let family = GlmFamily::<F>::new(config.family);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, d) = (config.n, config.d);

    let mut normal = |scale: f64| -> F {
        let v: f64 = StandardNormal.sample(&mut rng);
        F::lit(v * scale)
    };
    let x = Array2::from_shape_simple_fn((n, d), || normal(config.covariate_scale));
    let beta = ndarray::Array1::from_shape_simple_fn(d, || normal(config.coefficient_scale));
    let beta = match config.relationship {
        Relationship::Linear => beta,
        Relationship::None => beta.mapv(|_| F::zero()),
    };
    let x = DesignMatrix::new(x)?;
    let mu = x
        .linear_predictor(beta.view())?
        .mapv(|eta| family.link_inverse(eta));

    let eps = family.epsilon();
    let z = mu
        .iter()
        .map(|&m| {
            let m64 = m.to_f64().expect("finite mean");
            Ok(match config.family {
                FamilyKind::Gaussian => {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    F::lit(m64 + e)
                }
                FamilyKind::Poisson => {
                    let dist = Poisson::new(m64)
                        .map_err(|e| Error::InvalidArgument(format!("poisson mean {m64}: {e}")))?;
                    F::lit(dist.sample(&mut rng))
                }
                FamilyKind::Bernoulli => {
                    if rng.random::<f64>() < m64 {
                        F::one() - eps
                    } else {
                        eps
                    }
                }
            })
        })
        .collect::<Result<Vec<F>>>()?;

    Ok(SimulatedData {
        x,
        z,
        coefficients: Coefficients {
            beta,
            lambda: F::zero(),
        },
    })
}
