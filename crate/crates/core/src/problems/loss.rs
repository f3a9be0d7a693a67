use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{IfsError, Result};

/// Robust loss `rho` used by [`Problem::RobustRegression`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoKind {
    /// `1 - (1 - (t/t0)^2)^3` for `|t| < t0`, else 1.
    Tukey,
    /// `1 - exp(-t^2 / t0)`.
    ExpSquared,
}

impl RhoKind {
    pub fn value(self, t: f64, t0: f64) -> f64 {
        match self {
            RhoKind::Tukey => {
                if t.abs() >= t0 {
                    1.0
                } else {
                    let u = 1.0 - (t / t0).powi(2);
                    1.0 - u * u * u
                }
            }
            RhoKind::ExpSquared => 1.0 - (-t * t / t0).exp(),
        }
    }

    pub fn d1(self, t: f64, t0: f64) -> f64 {
        match self {
            RhoKind::Tukey => {
                if t.abs() >= t0 {
                    0.0
                } else {
                    let u = 1.0 - (t / t0).powi(2);
                    6.0 * t / (t0 * t0) * u * u
                }
            }
            RhoKind::ExpSquared => 2.0 * t / t0 * (-t * t / t0).exp(),
        }
    }

    pub fn d2(self, t: f64, t0: f64) -> f64 {
        match self {
            RhoKind::Tukey => {
                if t.abs() >= t0 {
                    0.0
                } else {
                    let s = (t / t0).powi(2);
                    6.0 / (t0 * t0) * (1.0 - s) * (1.0 - 5.0 * s)
                }
            }
            RhoKind::ExpSquared => 2.0 / t0 * (1.0 - 2.0 * t * t / t0) * (-t * t / t0).exp(),
        }
    }

    /// Exact `sup |rho''|`.
    pub fn sup_d2(self, t0: f64) -> f64 {
        match self {
            RhoKind::Tukey => 6.0 / (t0 * t0),
            RhoKind::ExpSquared => 2.0 / t0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn d1(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn d2(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// `(sigma, sigma', sigma'')` at `x` from a single transcendental call.
    pub fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
        }
    }

    /// `sup |sigma''|` over the real line.
    pub fn sup_d2(self) -> f64 {
        let r3 = 3f64.sqrt();
        match self {
            Activation::Sigmoid => 1.0 / (6.0 * r3),
            Activation::Tanh => 4.0 / (3.0 * r3),
        }
    }
}

/// One-hidden-layer network with fixed output weights; only the hidden
/// weights `w = [w_1; ..; w_m]` (each in R^d) are optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHiddenLayer {
    pub lambda: f64,
    pub output_weights: Vec<f64>,
    pub activation: Activation,
}

impl OneHiddenLayer {
    pub fn hidden(&self) -> usize {
        self.output_weights.len()
    }

    /// Prediction `sum_r b_r sigma(w_r^T a)` along with pre-activations.
    fn forward(&self, w: &DVector<f64>, a: &DVector<f64>) -> (f64, Vec<f64>) {
        let d = a.len();
        let pre: Vec<f64> = (0..self.hidden())
            .map(|r| w.rows(r * d, d).dot(a))
            .collect();
        let yhat = pre
            .iter()
            .zip(&self.output_weights)
            .map(|(&u, &b)| b * self.activation.value(u))
            .sum();
        (yhat, pre)
    }

    pub fn predict(&self, w: &DVector<f64>, a: &DVector<f64>) -> f64 {
        self.forward(w, a).0
    }

    /// `out += scale * grad_w (y - yhat)^2 / 2`.
    fn add_grad(&self, w: &[f64], a: &[f64], y: f64, scale: f64, out: &mut [f64]) {
        let d = a.len();
        let mut yhat = 0.0;
        let mut slope = [0.0; 64];
        let mut heap = Vec::new();
        let slope: &mut [f64] = if self.hidden() <= 64 {
            &mut slope[..self.hidden()]
        } else {
            heap.resize(self.hidden(), 0.0);
            &mut heap
        };
        for (r, &b) in self.output_weights.iter().enumerate() {
            let u = dot(&w[r * d..(r + 1) * d], a);
            let (s, s1, _) = self.activation.eval(u);
            yhat += b * s;
            slope[r] = b * s1;
        }
        let c = -scale * (y - yhat);
        for (r, &g) in slope.iter().enumerate() {
            axpy(c * g, a, &mut out[r * d..(r + 1) * d]);
        }
    }

    /// The gradient of `yhat` with respect to `w`:
    /// blocks `b_r sigma'(w_r^T a) a`.
    pub fn feature_vector(&self, w: &DVector<f64>, a: &DVector<f64>) -> DVector<f64> {
        let d = a.len();
        let (_, pre) = self.forward(w, a);
        let mut v = DVector::zeros(d * self.hidden());
        for (r, (&u, &b)) in pre.iter().zip(&self.output_weights).enumerate() {
            v.rows_mut(r * d, d).axpy(b * self.activation.d1(u), a, 0.0);
        }
        v
    }
}

/// Loss families with exact gradients and Hessian-vector products. Every
/// per-sample loss carries the ridge term `lambda/2 ||w||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Problem {
    /// `(a^T w - y)^2 / 2`. `lambda = 0` is allowed here (unregularized
    /// regression), unlike the other families.
    LeastSquares { lambda: f64 },
    /// `log(1 + exp(-y a^T w))`, labels ±1.
    Logistic { lambda: f64 },
    /// `rho(y - <w, a>)`.
    RobustRegression { lambda_r: f64, t0: f64, rho: RhoKind },
    /// `l_s(y a^T w)` with `l_s(z) = 1 - z + s log(1 + exp(-(1 - z)/s))`, labels ±1.
    SmoothHingeSvm { lambda: f64, sigma: f64 },
    /// `(y - yhat)^2 / 2`.
    OneHiddenLayer(OneHiddenLayer),
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IfsError::InvalidArgument(m.to_string()));
        match self {
            Problem::LeastSquares { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => {
                bad("least squares lambda must be >= 0")
            }
            Problem::Logistic { lambda } | Problem::SmoothHingeSvm { lambda, .. } if !(*lambda > 0.0) => {
                bad("lambda must be > 0")
            }
            Problem::SmoothHingeSvm { sigma, .. } if !(*sigma > 0.0) => bad("sigma must be > 0"),
            Problem::RobustRegression { lambda_r, t0, .. } if !(*lambda_r > 0.0 && *t0 > 0.0) => {
                bad("lambda_r and t0 must be > 0")
            }
            Problem::OneHiddenLayer(net) if !(net.lambda > 0.0) || net.hidden() == 0 => {
                bad("one-hidden-layer needs lambda > 0 and at least one hidden unit")
            }
            _ => Ok(()),
        }
    }

    /// Checks problem parameters and dataset labels together.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        if self.is_classification() {
            data.validate_labels()?;
        }
        Ok(())
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Problem::Logistic { .. } | Problem::SmoothHingeSvm { .. })
    }

    /// Ridge coefficient.
    pub fn lambda(&self) -> f64 {
        match self {
            Problem::LeastSquares { lambda }
            | Problem::Logistic { lambda }
            | Problem::SmoothHingeSvm { lambda, .. } => *lambda,
            Problem::RobustRegression { lambda_r, .. } => *lambda_r,
            Problem::OneHiddenLayer(net) => net.lambda,
        }
    }

    /// Dimension of the parameter vector for `d` input features.
    pub fn param_dim(&self, d: usize) -> usize {
        match self {
            Problem::OneHiddenLayer(net) => d * net.hidden(),
            _ => d,
        }
    }

    /// `l(w, z_i)`.
    pub fn loss(&self, w: &DVector<f64>, data: &Dataset, i: usize) -> f64 {
        let a = data.features(i);
        let y = data.target(i);
        let ridge = 0.5 * self.lambda() * w.norm_squared();
        let data_term = match self {
            Problem::LeastSquares { .. } => 0.5 * (a.dot(w) - y).powi(2),
            Problem::Logistic { .. } => softplus(-y * a.dot(w)),
            Problem::RobustRegression { t0, rho, .. } => rho.value(y - a.dot(w), *t0),
            Problem::SmoothHingeSvm { sigma, .. } => smooth_hinge(y * a.dot(w), *sigma),
            Problem::OneHiddenLayer(net) => 0.5 * (y - net.predict(w, a)).powi(2),
        };
        data_term + ridge
    }

    /// Mean loss over `batch`.
    pub fn batch_loss(&self, w: &DVector<f64>, data: &Dataset, batch: &[usize]) -> f64 {
        batch.iter().map(|&i| self.loss(w, data, i)).sum::<f64>() / batch.len() as f64
    }

    /// Mean loss over the whole dataset.
    pub fn mean_loss(&self, w: &DVector<f64>, data: &Dataset) -> f64 {
        (0..data.n()).map(|i| self.loss(w, data, i)).sum::<f64>() / data.n() as f64
    }

    /// Mini-batch gradient `(1/b) sum_{j in batch} grad l(w, z_j)`.
    pub fn grad(&self, w: &DVector<f64>, data: &Dataset, batch: &[usize]) -> DVector<f64> {
        let mut g = DVector::zeros(w.len());
        self.grad_into(w, data, batch, &mut g);
        g
    }

    /// [`Problem::grad`] writing into `out`.
    pub fn grad_into(&self, w: &DVector<f64>, data: &Dataset, batch: &[usize], out: &mut DVector<f64>) {
        assert!(!batch.is_empty(), "empty batch");
        out.fill(0.0);
        let inv_b = 1.0 / batch.len() as f64;
        for &j in batch {
            let a = data.features(j);
            let y = data.target(j);
            match self {
                Problem::LeastSquares { .. } => out.axpy(inv_b * (a.dot(w) - y), a, 1.0),
                Problem::Logistic { .. } => out.axpy(-inv_b * y * sigmoid(-y * a.dot(w)), a, 1.0),
                Problem::RobustRegression { t0, rho, .. } => {
                    out.axpy(-inv_b * rho.d1(y - a.dot(w), *t0), a, 1.0)
                }
                Problem::SmoothHingeSvm { sigma, .. } => {
                    out.axpy(inv_b * y * smooth_hinge_d1(y * a.dot(w), *sigma), a, 1.0)
                }
                Problem::OneHiddenLayer(net) => net.add_grad(w.as_slice(), a.as_slice(), y, inv_b, out.as_mut_slice()),
            }
        }
        out.axpy(self.lambda(), w, 1.0);
    }

    /// Mini-batch Hessian-vector product `(1/b) sum_j hess l(w, z_j) v`.
    pub fn hvp(&self, w: &DVector<f64>, data: &Dataset, batch: &[usize], v: &DVector<f64>) -> DVector<f64> {
        self.batch_hessian(w, data, batch).apply(v)
    }

    /// The mini-batch Hessian at `w` as a reusable operator: every nonlinear
    /// term is evaluated once, so repeated products (power iteration) cost
    /// only dot products.
    pub fn batch_hessian<'a>(&self, w: &DVector<f64>, data: &'a Dataset, batch: &'a [usize]) -> BatchHessian<'a> {
        assert!(!batch.is_empty(), "empty batch");
        let inv_b = 1.0 / batch.len() as f64;
        let glm = |c: &dyn Fn(f64, f64) -> f64| {
            batch.iter().map(|&j| inv_b * c(data.features(j).dot(w), data.target(j))).collect()
        };
        let terms = match self {
            Problem::LeastSquares { .. } => HessianTerms::Rank1(vec![inv_b; batch.len()]),
            Problem::Logistic { .. } => HessianTerms::Rank1(glm(&|z, y| {
                let s = sigmoid(y * z);
                y * y * s * (1.0 - s)
            })),
            Problem::RobustRegression { t0, rho, .. } => HessianTerms::Rank1(glm(&|z, y| rho.d2(y - z, *t0))),
            Problem::SmoothHingeSvm { sigma, .. } => {
                HessianTerms::Rank1(glm(&|z, y| y * y * smooth_hinge_d2(y * z, *sigma)))
            }
            Problem::OneHiddenLayer(net) => {
                let m = net.hidden();
                let d = data.d();
                let ws = w.as_slice();
                let mut slope = Vec::with_capacity(batch.len() * m);
                let mut curv = Vec::with_capacity(batch.len() * m);
                for &j in batch {
                    let a = data.features(j).as_slice();
                    let mut yhat = 0.0;
                    let first = curv.len();
                    for (r, &b) in net.output_weights.iter().enumerate() {
                        let (s, s1, s2) = net.activation.eval(dot(&ws[r * d..(r + 1) * d], a));
                        yhat += b * s;
                        slope.push(b * s1);
                        curv.push(b * s2);
                    }
                    let resid = data.target(j) - yhat;
                    for c in &mut curv[first..] {
                        *c *= -resid;
                    }
                }
                HessianTerms::Network { hidden: m, inv_b, slope, curv }
            }
        };
        BatchHessian { data, batch, lambda: self.lambda(), terms }
    }

    /// `J_h(w) v = v - eta * hess(w) v` for the SGD map `h(w) = w - eta grad(w)`.
    pub fn jacobian_apply(
        &self,
        w: &DVector<f64>,
        data: &Dataset,
        batch: &[usize],
        eta: f64,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        if eta == 0.0 {
            return v.clone();
        }
        let hv = self.hvp(w, data, batch, v);
        v - hv * eta
    }
}

enum HessianTerms {
    /// `sum_j c_j a_j a_j^T` with `c_j` already divided by the batch size.
    Rank1(Vec<f64>),
    /// Per sample and hidden unit: `slope = b_r sigma'(u_r)` (the Gauss-Newton
    /// feature) and `curv = -(y - yhat) b_r sigma''(u_r)`.
    Network { hidden: usize, inv_b: f64, slope: Vec<f64>, curv: Vec<f64> },
}

/// Mini-batch Hessian frozen at one parameter vector; see [`Problem::batch_hessian`].
pub struct BatchHessian<'a> {
    data: &'a Dataset,
    batch: &'a [usize],
    lambda: f64,
    terms: HessianTerms,
}

impl BatchHessian<'_> {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v * self.lambda;
        let o = out.as_mut_slice();
        let vs = v.as_slice();
        match &self.terms {
            HessianTerms::Rank1(c) => {
                for (&j, &cj) in self.batch.iter().zip(c) {
                    let a = self.data.features(j).as_slice();
                    axpy(cj * dot(a, vs), a, o);
                }
            }
            HessianTerms::Network { hidden, inv_b, slope, curv } => {
                let (m, d) = (*hidden, self.data.d());
                let mut av = vec![0.0; m];
                for (k, &j) in self.batch.iter().enumerate() {
                    let a = self.data.features(j).as_slice();
                    let (g, h) = (&slope[k * m..(k + 1) * m], &curv[k * m..(k + 1) * m]);
                    let mut fv = 0.0;
                    for r in 0..m {
                        av[r] = dot(&vs[r * d..(r + 1) * d], a);
                        fv += g[r] * av[r];
                    }
                    for r in 0..m {
                        axpy(inv_b * (fv * g[r] + h[r] * av[r]), a, &mut o[r * d..(r + 1) * d]);
                    }
                }
            }
        }
        out
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn smooth_hinge(z: f64, sigma: f64) -> f64 {
    1.0 - z + sigma * softplus(-(1.0 - z) / sigma)
}

pub fn smooth_hinge_d1(z: f64, sigma: f64) -> f64 {
    -sigmoid((1.0 - z) / sigma)
}

pub fn smooth_hinge_d2(z: f64, sigma: f64) -> f64 {
    let s = sigmoid((z - 1.0) / sigma);
    s * (1.0 - s) / sigma
}
