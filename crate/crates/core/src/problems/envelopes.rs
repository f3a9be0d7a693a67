//! Uniform lower/upper bounds `gamma_i <= ||J_{h_i}(w)|| <= Gamma_i` on the
//! Jacobians of SGD maps, and the one-hidden-layer constant `C`.

use nalgebra::DVector;

use super::batch::BatchScheme;
use super::dataset::Dataset;
use super::loss::{OneHiddenLayer, Problem};
use crate::error::{IfsError, Result};
use crate::ifs::SampleCloud;

/// Bi-Lipschitz envelope of one SGD map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvelopeOptions {
    /// `C` for the one-hidden-layer network (see [`compute_one_layer_c`]).
    pub one_layer_c: Option<f64>,
    /// Use the exact `sup |rho''|` for robust regression instead of `2/t0`.
    pub exact_rho_bound: bool,
}

pub(crate) fn violation(condition: impl Into<String>, margin: f64) -> IfsError {
    IfsError::PreconditionViolation { condition: condition.into(), margin }
}

/// Fails with a [`IfsError::PreconditionViolation`] unless `lhs < rhs`.
pub(crate) fn require_lt(lhs: f64, rhs: f64, what: &str) -> Result<()> {
    if lhs < rhs {
        Ok(())
    } else {
        Err(violation(format!("{what}: {lhs} < {rhs} fails"), rhs - lhs))
    }
}

/// Per-batch envelopes `(gamma_i, Gamma_i)` for SGD with step `eta`.
///
/// Least squares uses per-batch radii `R_i`; robust regression and the SVM use
/// the global radius `R`. The logistic lower bound is clipped at zero.
pub fn norm_envelopes(
    problem: &Problem,
    data: &Dataset,
    scheme: &BatchScheme,
    eta: f64,
    opts: EnvelopeOptions,
) -> Result<Vec<Envelope>> {
    problem.validate()?;
    if scheme.batches().is_empty() {
        return Err(IfsError::InvalidArgument("envelopes need an explicit partition".into()));
    }
    if !(eta > 0.0) {
        return Err(violation("eta > 0", eta));
    }
    let r = data.radius();
    let r2 = r * r;
    let radii: Vec<f64> = scheme.batches().iter().map(|s| data.batch_radius(s)).collect();
    let env = |lower: f64, upper: f64| Envelope { lower, upper };

    let out = match problem {
        Problem::LeastSquares { lambda } => {
            require_lt(eta, 1.0 / (r2 + lambda), "eta < 1/(R^2 + lambda)")?;
            radii
                .iter()
                .map(|ri| env(1.0 - eta * lambda - eta * ri * ri, 1.0 - eta * lambda))
                .collect()
        }
        Problem::Logistic { lambda } => {
            require_lt(eta, 1.0 / lambda, "eta < 1/lambda")?;
            require_lt(r, 2.0 * lambda.sqrt(), "R < 2 sqrt(lambda)")?;
            radii
                .iter()
                .map(|ri| {
                    let q = 0.25 * eta * ri * ri;
                    env((1.0 - eta * lambda - q).max(0.0), 1.0 - eta * lambda + q)
                })
                .collect()
        }
        Problem::RobustRegression { lambda_r, t0, rho } => {
            let k = if opts.exact_rho_bound { rho.sup_d2(*t0) } else { 2.0 / t0 };
            require_lt(eta, 1.0 / (lambda_r + r2 * k), "eta < 1/(lambda_r + R^2 ||rho''||)")?;
            require_lt(r2 * k, *lambda_r, "R^2 ||rho''|| < lambda_r")?;
            let base = 1.0 - eta * lambda_r;
            vec![env(base - eta * r2 * k, base + eta * r2 * k); radii.len()]
        }
        Problem::SmoothHingeSvm { lambda, sigma } => {
            let q = r2 / (4.0 * sigma);
            require_lt(eta, 1.0 / (lambda + q), "eta < 1/(lambda + R^2/(4 sigma))")?;
            vec![env(1.0 - eta * lambda - eta * q, 1.0 - eta * lambda); radii.len()]
        }
        Problem::OneHiddenLayer(net) => {
            let c = opts.one_layer_c.ok_or_else(|| {
                IfsError::InvalidArgument("one-hidden-layer envelopes need the constant C".into())
            })?;
            require_lt(eta, 1.0 / (2.0 * net.lambda), "eta < 1/(2 lambda)")?;
            require_lt(c, net.lambda, "C < lambda")?;
            vec![env(1.0 - eta * (c + net.lambda), 1.0 - eta * (net.lambda - c)); radii.len()]
        }
    };
    Ok(out)
}

/// `C = M_y ||b||_inf ||sigma''|| R^2 + (max_j ||v_j||_inf)^2`, with the
/// suprema taken over the cloud points and the data.
pub fn compute_one_layer_c(net: &OneHiddenLayer, data: &Dataset, cloud: &SampleCloud) -> Result<f64> {
    let p = data.d() * net.hidden();
    if cloud.dim() != p {
        return Err(IfsError::DimensionMismatch { expected: p, got: cloud.dim() });
    }
    if cloud.is_empty() {
        return Err(IfsError::InvalidArgument("empty cloud".into()));
    }
    let b_inf = net.output_weights.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let r = data.radius();
    let mut m_y = 0.0f64;
    let mut v_inf = 0.0f64;
    for k in 0..cloud.len() {
        let w = DVector::from_column_slice(cloud.point(k));
        for i in 0..data.n() {
            let a = data.features(i);
            m_y = m_y.max((data.target(i) - net.predict(&w, a)).abs());
            v_inf = v_inf.max(net.feature_vector(&w, a).amax());
        }
    }
    Ok(m_y * b_inf * net.activation.sup_d2() * r * r + v_inf * v_inf)
}
