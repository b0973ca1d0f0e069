//! Scalar functions applied to spectra, with their domains.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, TraceError};

/// Where a spectral function is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    NonNegative,
    Positive,
}

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum SpectralFn {
    Identity,
    Square,
    Exp,
    Sqrt,
    Log,
    /// `lambda - ln(lambda) - 1`, the Gaussian KL integrand.
    KlLoss,
    /// `sum_k c[k] lambda^k`
    Polynomial(Vec<f64>),
    Custom {
        name: String,
        domain: Domain,
        f: Arc<ScalarFn>,
    },
}

impl fmt::Debug for SpectralFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralFn::Identity => write!(f, "Identity"),
            SpectralFn::Square => write!(f, "Square"),
            SpectralFn::Exp => write!(f, "Exp"),
            SpectralFn::Sqrt => write!(f, "Sqrt"),
            SpectralFn::Log => write!(f, "Log"),
            SpectralFn::KlLoss => write!(f, "KlLoss"),
            SpectralFn::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            SpectralFn::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl SpectralFn {
    pub fn custom(
        name: impl Into<String>,
        domain: Domain,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SpectralFn::Custom {
            name: name.into(),
            domain,
            f: Arc::new(f),
        }
    }

    /// Parses the names used by the CLI and the Python bindings.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "id" | "identity" => SpectralFn::Identity,
            "square" => SpectralFn::Square,
            "exp" => SpectralFn::Exp,
            "sqrt" => SpectralFn::Sqrt,
            "log" => SpectralFn::Log,
            "kl" => SpectralFn::KlLoss,
            _ => return None,
        })
    }

    pub fn domain(&self) -> Domain {
        match self {
            SpectralFn::Identity
            | SpectralFn::Square
            | SpectralFn::Exp
            | SpectralFn::Polynomial(_) => Domain::Real,
            SpectralFn::Sqrt => Domain::NonNegative,
            SpectralFn::Log | SpectralFn::KlLoss => Domain::Positive,
            SpectralFn::Custom { domain, .. } => *domain,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SpectralFn::Identity => x,
            SpectralFn::Square => x * x,
            SpectralFn::Exp => x.exp(),
            SpectralFn::Sqrt => x.sqrt(),
            SpectralFn::Log => x.ln(),
            SpectralFn::KlLoss => x - x.ln() - 1.0,
            SpectralFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
            SpectralFn::Custom { f, .. } => f(x),
        }
    }

    /// Evaluates `f` on Ritz values, clamping round-off excursions below the domain.
    ///
    /// For `Positive` domains, nodes in `(0, 1e-12 * max]` are raised to
    /// `1e-12 * max`; non-positive nodes are an error. For `NonNegative`
    /// domains, nodes in `[-1e-8 * max, 0)` are raised to zero. Returns the
    /// values and whether any node was clamped.
    pub fn eval_nodes(&self, nodes: &[f64]) -> Result<(Vec<f64>, bool)> {
        let scale = nodes.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let mut clamped = false;
        let mut out = Vec::with_capacity(nodes.len());
        for &x in nodes {
            let x = match self.domain() {
                Domain::Real => x,
                Domain::Positive => {
                    if !(x > 0.0) {
                        return Err(TraceError::Domain {
                            min_node: min_of(nodes),
                        });
                    }
                    let floor = 1e-12 * scale;
                    if x <= floor {
                        clamped = true;
                        floor
                    } else {
                        x
                    }
                }
                Domain::NonNegative => {
                    if x < -1e-8 * scale || x.is_nan() {
                        return Err(TraceError::Domain {
                            min_node: min_of(nodes),
                        });
                    }
                    if x < 0.0 {
                        clamped = true;
                        0.0
                    } else {
                        x
                    }
                }
            };
            out.push(self.eval(x));
        }
        Ok((out, clamped))
    }

    /// `sum_i f(lambda_i)` over a symmetric matrix's eigenvalues.
    pub fn trace_of_dense(&self, a: &DMatrix<f64>) -> Result<f64> {
        let eig = SymmetricEigen::new(a.clone());
        let (vals, _) = self.eval_nodes(eig.eigenvalues.as_slice())?;
        Ok(vals.iter().sum())
    }

    /// `f(A) = U f(Lambda) U^T` for symmetric `A`.
    pub fn apply_dense(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(a.clone());
        let (vals, _) = self.eval_nodes(eig.eigenvalues.as_slice())?;
        let u = &eig.eigenvectors;
        let mut scaled = u.clone();
        for (c, v) in vals.iter().enumerate() {
            scaled.column_mut(c).scale_mut(*v);
        }
        Ok(scaled * u.transpose())
    }
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_loss_vanishes_at_one() {
        assert_eq!(SpectralFn::KlLoss.eval(1.0), 0.0);
        assert!((SpectralFn::KlLoss.eval(2.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn polynomial_horner() {
        let p = SpectralFn::Polynomial(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
    }

    #[test]
    fn log_clamp_and_error() {
        let (v, clamped) = SpectralFn::Log.eval_nodes(&[1e-20, 1.0]).unwrap();
        assert!(clamped);
        assert!((v[0] - (1e-12f64).ln()).abs() < 1e-9);
        assert!(matches!(
            SpectralFn::KlLoss.eval_nodes(&[-1e-14, 1.0]),
            Err(TraceError::Domain { .. })
        ));
    }

    #[test]
    fn sqrt_clamps_roundoff() {
        let (v, clamped) = SpectralFn::Sqrt.eval_nodes(&[-1e-14, 4.0]).unwrap();
        assert!(clamped);
        assert_eq!(v, vec![0.0, 2.0]);
        assert!(SpectralFn::Sqrt.eval_nodes(&[-1.0, 4.0]).is_err());
    }
}
