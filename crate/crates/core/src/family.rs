//! Exponential families and their Bregman divergences.
//!
//! Each family is described by a strictly convex generator `phi` acting on a
//! single coordinate. The divergence of a vector is the sum of the scalar
//! divergences, so every function here is permutation equivariant.
//!
//! | family    | phi(x)                          | divergence D(y, mu)                                  |
//! |-----------|---------------------------------|------------------------------------------------------|
//! | Gaussian  | x^2 / 2                         | (y - mu)^2 / 2                                       |
//! | Poisson   | x ln x - x                      | y ln(y / mu) - y + mu  (generalized I-divergence)    |
//! | Bernoulli | x ln x + (1 - x) ln(1 - x)      | y ln(y / mu) + (1 - y) ln((1 - y) / (1 - mu))        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Poisson,
    Bernoulli,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 3] = [
        FamilyKind::Gaussian,
        FamilyKind::Poisson,
        FamilyKind::Bernoulli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Bernoulli => "bernoulli",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(FamilyKind::Gaussian),
            "poisson" => Ok(FamilyKind::Poisson),
            "bernoulli" | "binomial" | "logistic" => Ok(FamilyKind::Bernoulli),
            other => Err(Error::InvalidArgument(format!("unknown family '{other}'"))),
        }
    }
}

/// An exponential-family GLM: link inverse, divergence and target domain.
///
/// `epsilon` keeps targets and means away from the singular points of the
/// Poisson and Bernoulli divergences. Both arguments of the divergence are
/// clipped to `[epsilon, inf)` (Poisson) or `[epsilon, 1 - epsilon]`
/// (Bernoulli) before evaluation, and the Newton solver fits the clipped
/// targets so the objective it minimizes is the one that gets reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmFamily<F> {
    kind: FamilyKind,
    epsilon: F,
}

impl<F: Scalar> GlmFamily<F> {
    pub fn new(kind: FamilyKind) -> Self {
        Self {
            kind,
            epsilon: F::default_clip_epsilon(),
        }
    }

    pub fn gaussian() -> Self {
        Self::new(FamilyKind::Gaussian)
    }

    pub fn poisson() -> Self {
        Self::new(FamilyKind::Poisson)
    }

    pub fn bernoulli() -> Self {
        Self::new(FamilyKind::Bernoulli)
    }

    /// `epsilon` must lie in `(0, 1e-3)`.
    pub fn with_epsilon(kind: FamilyKind, epsilon: F) -> Result<Self> {
        if !(epsilon > F::zero() && epsilon < F::lit(1e-3)) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1e-3), got {epsilon}"
            )));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    pub fn domain_min(&self) -> F {
        match self.kind {
            FamilyKind::Gaussian => F::neg_infinity(),
            FamilyKind::Poisson | FamilyKind::Bernoulli => F::zero(),
        }
    }

    pub fn domain_max(&self) -> F {
        match self.kind {
            FamilyKind::Gaussian | FamilyKind::Poisson => F::infinity(),
            FamilyKind::Bernoulli => F::one(),
        }
    }

    /// Whether `y` is a finite value inside the closed target domain.
    pub fn contains(&self, y: F) -> bool {
        y.is_finite() && y >= self.domain_min() && y <= self.domain_max()
    }

    pub fn check_targets(&self, targets: &[F]) -> Result<()> {
        for (index, &y) in targets.iter().enumerate() {
            if !self.contains(y) {
                return Err(Error::OutOfDomain {
                    family: self.kind.name(),
                    index,
                    value: y.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Mean parameter for a linear predictor. Saturates instead of
    /// overflowing; the result always lies in the open mean domain.
    pub fn link_inverse(&self, eta: F) -> F {
        let eps = self.epsilon;
        match self.kind {
            FamilyKind::Gaussian => eta,
            FamilyKind::Poisson => {
                let mu = eta.exp();
                if mu.is_infinite() {
                    F::max_value()
                } else {
                    mu.max(eps)
                }
            }
            FamilyKind::Bernoulli => {
                let mu = if eta >= F::zero() {
                    F::one() / (F::one() + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (F::one() + e)
                };
                mu.max(eps).min(F::one() - eps)
            }
        }
    }

    /// Derivative of the mean with respect to the linear predictor, which is
    /// also the IRLS working weight under the canonical link.
    pub fn mean_derivative(&self, mu: F) -> F {
        match self.kind {
            FamilyKind::Gaussian => F::one(),
            FamilyKind::Poisson => mu,
            FamilyKind::Bernoulli => mu * (F::one() - mu),
        }
    }

    /// Moves a value off the divergence singularities.
    pub fn clip(&self, y: F) -> F {
        let eps = self.epsilon;
        match self.kind {
            FamilyKind::Gaussian => y,
            FamilyKind::Poisson => y.max(eps),
            FamilyKind::Bernoulli => y.max(eps).min(F::one() - eps),
        }
    }

    /// The convex generator, without clipping.
    pub fn phi(&self, x: F) -> F {
        match self.kind {
            FamilyKind::Gaussian => F::lit(0.5) * x * x,
            FamilyKind::Poisson => x * x.ln() - x,
            FamilyKind::Bernoulli => x * x.ln() + (F::one() - x) * (F::one() - x).ln(),
        }
    }

    /// Scalar divergence `D(y || mu)` after clipping both arguments.
    pub fn divergence(&self, y: F, mu: F) -> F {
        let y = self.clip(y);
        let mu = self.clip(mu);
        match self.kind {
            FamilyKind::Gaussian => {
                let r = y - mu;
                F::lit(0.5) * r * r
            }
            FamilyKind::Poisson => y * (y / mu).ln() - y + mu,
            FamilyKind::Bernoulli => {
                let one = F::one();
                y * (y / mu).ln() + (one - y) * ((one - y) / (one - mu)).ln()
            }
        }
    }

    /// Sum of scalar divergences over paired entries.
    pub fn bregman_divergence(&self, y: &[F], mu: &[F]) -> Result<F> {
        if y.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                what: "divergence arguments",
                expected: y.len(),
                found: mu.len(),
            });
        }
        Ok(y.iter().zip(mu).map(|(&a, &b)| self.divergence(a, b)).sum())
    }
}
