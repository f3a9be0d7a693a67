use serde::{Deserialize, Serialize};

use crate::error::{IfsError, Result};
use crate::problems::{require_lt, violation};

/// Problem/optimizer pair with a closed-form dimension bound and the
/// constants it needs. `m_low`/`m_high` are the preconditioner's eigenvalue
/// bounds; `r` is the largest feature norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundFamily {
    LeastSquares { lambda: f64, r: f64 },
    Logistic { lambda: f64, r: f64 },
    Robust { lambda_r: f64, t0: f64, r: f64 },
    OneHiddenLayer { lambda: f64, c: f64 },
    Svm { lambda: f64, sigma: f64, r: f64 },
    PrecondLeastSquares { lambda: f64, r: f64, m_low: f64, m_high: f64 },
    PrecondLogistic { lambda: f64, r: f64, m_low: f64, m_high: f64 },
    PrecondRobust { lambda_r: f64, t0: f64, r: f64, m_low: f64, m_high: f64 },
    PrecondSvm { lambda: f64, sigma: f64, r: f64, m_low: f64, m_high: f64 },
    PrecondOneHiddenLayer { lambda: f64, c: f64, m_low: f64, m_high: f64 },
    Newton,
}

/// Step size and number of batches for one bound evaluation. `num_batches`
/// is `n / b` for partitions; for the without-replacement scheme pass
/// `C(n, b)` as a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub family: BoundFamily,
    pub eta: f64,
    pub num_batches: f64,
}

impl BoundSpec {
    pub fn from_n_b(family: BoundFamily, eta: f64, n: usize, b: usize) -> Result<Self> {
        if b == 0 || !n.is_multiple_of(b) {
            return Err(IfsError::IndivisibleBatch { n, b });
        }
        Ok(Self { family, eta, num_batches: (n / b) as f64 })
    }

    /// Contraction factor `Gamma` of the family after its conditions are checked.
    pub fn contraction(&self) -> Result<f64> {
        let eta = self.eta;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(IfsError::InvalidArgument("step size must be > 0".into()));
        }
        let gamma = match self.family {
            BoundFamily::LeastSquares { lambda, r } => {
                positive(&[("lambda", lambda)])?;
                require_lt(eta, 1.0 / (r * r + lambda), "eta < 1/(R^2 + lambda)")?;
                1.0 - eta * lambda
            }
            BoundFamily::Logistic { lambda, r } => {
                positive(&[("lambda", lambda)])?;
                require_lt(eta, 1.0 / lambda, "eta < 1/lambda")?;
                require_lt(r, 2.0 * lambda.sqrt(), "R < 2 sqrt(lambda)")?;
                1.0 - eta * lambda + 0.25 * eta * r * r
            }
            BoundFamily::Robust { lambda_r, t0, r } => {
                positive(&[("lambda_r", lambda_r), ("t0", t0)])?;
                require_lt(eta, 1.0 / (lambda_r + 2.0 * r * r / t0), "eta < 1/(lambda_r + 2R^2/t0)")?;
                require_lt(r, (lambda_r * t0 / 2.0).sqrt(), "R < sqrt(lambda_r t0 / 2)")?;
                1.0 - eta * lambda_r + 2.0 * eta * r * r / t0
            }
            BoundFamily::OneHiddenLayer { lambda, c } => {
                positive(&[("lambda", lambda)])?;
                require_lt(eta, 1.0 / (2.0 * lambda), "eta < 1/(2 lambda)")?;
                require_lt(c, lambda, "C < lambda")?;
                1.0 - eta * (lambda - c)
            }
            BoundFamily::Svm { lambda, sigma, r } => {
                positive(&[("lambda", lambda), ("sigma", sigma)])?;
                require_lt(eta, 1.0 / (lambda + r * r / (4.0 * sigma)), "eta < 1/(lambda + R^2/(4 sigma))")?;
                1.0 - eta * lambda
            }
            BoundFamily::PrecondLeastSquares { lambda, r, m_low, m_high } => {
                positive(&[("lambda", lambda)])?;
                eig_bounds(m_low, m_high)?;
                require_lt(eta, m_low / (r * r + lambda), "eta < m/(R^2 + lambda)")?;
                1.0 - eta * lambda / m_high
            }
            BoundFamily::PrecondLogistic { lambda, r, m_low, m_high } => {
                positive(&[("lambda", lambda)])?;
                eig_bounds(m_low, m_high)?;
                require_lt(eta, m_low / lambda, "eta < m/lambda")?;
                require_lt(r, 2.0 * (m_low * lambda / m_high).sqrt(), "R < 2 sqrt(m lambda / M)")?;
                1.0 - eta * lambda / m_high + 0.25 * eta * r * r / m_low
            }
            BoundFamily::PrecondRobust { lambda_r, t0, r, m_low, m_high } => {
                positive(&[("lambda_r", lambda_r), ("t0", t0)])?;
                eig_bounds(m_low, m_high)?;
                require_lt(eta, m_low / (lambda_r + 2.0 * r * r / t0), "eta < m/(lambda_r + 2R^2/t0)")?;
                require_lt(r, (lambda_r * t0 * m_low / (2.0 * m_high)).sqrt(), "R < sqrt(lambda_r t0 m / (2M))")?;
                1.0 - eta * lambda_r / m_high + eta * r * r * (2.0 / t0) / m_low
            }
            BoundFamily::PrecondSvm { lambda, sigma, r, m_low, m_high } => {
                positive(&[("lambda", lambda), ("sigma", sigma)])?;
                eig_bounds(m_low, m_high)?;
                require_lt(eta, m_low / (lambda + r * r / (4.0 * sigma)), "eta < m/(lambda + R^2/(4 sigma))")?;
                1.0 - eta * lambda / m_high
            }
            BoundFamily::PrecondOneHiddenLayer { lambda, c, m_low, m_high } => {
                positive(&[("lambda", lambda)])?;
                eig_bounds(m_low, m_high)?;
                require_lt(eta, m_low / (c + lambda), "eta < m/(C + lambda)")?;
                require_lt(m_high / m_low * c, lambda, "lambda > (M/m) C")?;
                1.0 - eta * (lambda / m_high - c / m_low)
            }
            BoundFamily::Newton => {
                require_lt(eta, 1.0, "eta < 1")?;
                1.0 - eta
            }
        };
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(violation("0 < Gamma < 1", gamma.min(1.0 - gamma)));
        }
        Ok(gamma)
    }
}

fn positive(params: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in params {
        if !(v > 0.0 && v.is_finite()) {
            return Err(IfsError::InvalidArgument(format!("{name} must be > 0")));
        }
    }
    Ok(())
}

fn eig_bounds(m_low: f64, m_high: f64) -> Result<()> {
    if !(m_low > 0.0 && m_low <= m_high) {
        return Err(IfsError::InvalidArgument("need 0 < m <= M".into()));
    }
    Ok(())
}

/// Closed-form upper bound `log(m_b) / log(1/Gamma)` on the Hausdorff
/// dimension of the invariant measure, after checking the family's step-size
/// and data conditions.
pub fn analytic_bound(spec: &BoundSpec) -> Result<f64> {
    if !(spec.num_batches >= 1.0) {
        return Err(IfsError::InvalidArgument("num_batches must be >= 1".into()));
    }
    let gamma = spec.contraction()?;
    Ok(spec.num_batches.ln() / (1.0 / gamma).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(eta: f64) -> BoundSpec {
        BoundSpec { family: BoundFamily::LeastSquares { lambda: 1.0, r: 1.0 }, eta, num_batches: 100.0 }
    }

    #[test]
    fn least_squares_boundary() {
        assert!(analytic_bound(&ls(0.499)).is_ok());
        match analytic_bound(&ls(0.5)) {
            Err(IfsError::PreconditionViolation { margin, .. }) => assert_eq!(margin, 0.0),
            other => panic!("{other:?}"),
        }
        match analytic_bound(&ls(0.6)) {
            Err(IfsError::PreconditionViolation { condition, margin }) => {
                assert!(condition.contains("eta"));
                assert!((margin + 0.1).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn newton_interval() {
        let s = |eta| BoundSpec { family: BoundFamily::Newton, eta, num_batches: 100.0 };
        assert!((analytic_bound(&s(0.5)).unwrap() - 100f64.log2()).abs() < 1e-12);
        assert!(analytic_bound(&s(1.0)).is_err());
        assert!(analytic_bound(&s(0.0)).is_err());
    }

    #[test]
    fn single_batch_is_zero() {
        let s = BoundSpec { num_batches: 1.0, ..ls(0.1) };
        assert_eq!(analytic_bound(&s).unwrap(), 0.0);
    }

    #[test]
    fn logistic_radius_condition() {
        let s = BoundSpec { family: BoundFamily::Logistic { lambda: 1.0, r: 2.0 }, eta: 0.1, num_batches: 10.0 };
        assert!(matches!(analytic_bound(&s), Err(IfsError::PreconditionViolation { .. })));
    }

    #[test]
    fn one_hidden_layer_needs_c_below_lambda() {
        let fam = |c| BoundFamily::OneHiddenLayer { lambda: 1.0, c };
        assert!(analytic_bound(&BoundSpec { family: fam(0.5), eta: 0.1, num_batches: 10.0 }).is_ok());
        assert!(analytic_bound(&BoundSpec { family: fam(1.0), eta: 0.1, num_batches: 10.0 }).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = ls(0.1);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"kind\":\"least_squares\""));
        assert_eq!(serde_json::from_str::<BoundSpec>(&j).unwrap(), s);
    }
}
