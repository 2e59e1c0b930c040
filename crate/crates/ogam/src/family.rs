//! Quasilikelihood families: canonical link, variance function and the first
//! three derivatives of `beta -> Q(g^{-1}(beta), y)`.
//!
//! Every statistic and solver computation consumes the family only through
//! `quasi_derivatives`, so `Q` itself is defined up to an additive constant
//! in `y`.

use serde::{Deserialize, Serialize};

use crate::error::{OgamError, Result};

/// Supported quasilikelihood families (canonical links only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    GaussianIdentity,
    PoissonLog,
    BernoulliLogit,
}

impl Family {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "gaussian-identity" | "gaussian" => Ok(Family::GaussianIdentity),
            "poisson-log" | "poisson" => Ok(Family::PoissonLog),
            "bernoulli-logit" | "bernoulli" | "binomial" => Ok(Family::BernoulliLogit),
            other => Err(OgamError::UnsupportedFamily(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::GaussianIdentity => "gaussian-identity",
            Family::PoissonLog => "poisson-log",
            Family::BernoulliLogit => "bernoulli-logit",
        }
    }

    /// Link g(mu).
    pub fn link(&self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => mu,
            Family::PoissonLog => mu.ln(),
            Family::BernoulliLogit => (mu / (1.0 - mu)).ln(),
        }
    }

    /// Inverse link g^{-1}(eta).
    pub fn inverse_link(&self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::PoissonLog => eta.exp(),
            Family::BernoulliLogit => sigmoid(eta),
        }
    }

    /// Variance function V(mu).
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => 1.0,
            Family::PoissonLog => mu,
            Family::BernoulliLogit => mu * (1.0 - mu),
        }
    }

    /// Derivative g'(mu) of the link.
    pub fn link_derivative(&self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => 1.0,
            Family::PoissonLog => 1.0 / mu,
            Family::BernoulliLogit => 1.0 / (mu * (1.0 - mu)),
        }
    }

    /// First three derivatives of `beta -> Q(g^{-1}(beta), y)` at `beta = eta`.
    ///
    /// For canonical links these have closed forms; `q2 < 0` for all finite
    /// arguments in the response range.
    pub fn quasi_derivatives(&self, eta: f64, y: f64) -> Result<(f64, f64, f64)> {
        if !eta.is_finite() || !y.is_finite() {
            return Err(OgamError::InvalidInput(format!(
                "non-finite quasilikelihood arguments: eta={eta}, y={y}"
            )));
        }
        Ok(match self {
            Family::GaussianIdentity => (y - eta, -1.0, 0.0),
            Family::PoissonLog => {
                let mu = eta.exp();
                (y - mu, -mu, -mu)
            }
            Family::BernoulliLogit => {
                let mu = sigmoid(eta);
                let v = mu * (1.0 - mu);
                (y - mu, -v, -v * (1.0 - 2.0 * mu))
            }
        })
    }

    /// Quasilikelihood `Q(g^{-1}(eta), y)` up to an additive constant in `y`.
    ///
    /// Used by diagnostics and by the finite-difference checks; the solver
    /// itself only consumes `quasi_derivatives`.
    pub fn quasi_loglik(&self, eta: f64, y: f64) -> f64 {
        match self {
            Family::GaussianIdentity => -0.5 * (y - eta) * (y - eta),
            Family::PoissonLog => y * eta - eta.exp(),
            Family::BernoulliLogit => y * eta - softplus(eta),
        }
    }

    /// Validate one response value for this family.
    ///
    /// Violations are hard errors: silently coercing a bad response would
    /// corrupt the aggregated statistics irrecoverably.
    pub fn validate_response(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(OgamError::InvalidInput(format!("non-finite response {y}")));
        }
        match self {
            Family::GaussianIdentity => Ok(()),
            Family::PoissonLog => {
                if y < 0.0 || y.fract() != 0.0 {
                    Err(OgamError::InvalidInput(format!(
                        "poisson-log response must be a non-negative integer, got {y}"
                    )))
                } else {
                    Ok(())
                }
            }
            Family::BernoulliLogit => {
                if y == 0.0 || y == 1.0 {
                    Ok(())
                } else {
                    Err(OgamError::InvalidInput(format!(
                        "bernoulli-logit response must be 0 or 1, got {y}"
                    )))
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
