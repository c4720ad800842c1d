//! GP interpolation over a fixed set of base points.
//!
//! Every prediction is linear in the stored means:
//!
//! ```text
//! J(x)  = k(x, X)^T K^-1           V(x)      = J(x) mu_v
//! J'(x) = dk(x, X)/dx K^-1         grad V(x) = J'(x) mu_v
//!                                  u*(x)     = J(x) mu_u
//! ```
//!
//! `K = K(X, X) + jitter * I` is factorized once at build time; learning only
//! moves the means.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub variance: f64,
    pub jitter: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self { lengthscale: 1.0, variance: 1.0, jitter: 1e-6 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.lengthscale) && ok(self.variance) && ok(self.jitter) {
            Ok(())
        } else {
            Err(Error::Config(format!("kernel parameters must be positive: {self:?}")))
        }
    }
}

/// RBF kernel `variance * exp(-|a - b|^2 / (2 l^2))`.
pub fn kernel_eval(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    p.variance * (-d2 / (2.0 * p.lengthscale * p.lengthscale)).exp()
}

/// Gradient of [`kernel_eval`] with respect to its first argument.
pub fn kernel_grad(a: &[f64], b: &[f64], p: &KernelParams) -> Vec<f64> {
    let k = kernel_eval(a, b, p);
    let l2 = p.lengthscale * p.lengthscale;
    a.iter().zip(b).map(|(x, y)| -(x - y) / l2 * k).collect()
}

/// Square lattice clipped to a disc of `radius` around the origin.
pub fn lattice_in_disc(radius: f64, spacing: f64) -> Vec<[f64; 2]> {
    let n = (radius / spacing).floor() as i64;
    let mut pts = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let p = [i as f64 * spacing, j as f64 * spacing];
            if p[0].hypot(p[1]) <= radius + 1e-9 {
                pts.push(p);
            }
        }
    }
    pts
}

/// Prediction weights at one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// Value/policy weights, length N.
    pub j: DVector<f64>,
    /// Gradient weights, m x N.
    pub jprime: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    base_points: DMatrix<f64>,
    pub mu_v: DVector<f64>,
    pub mu_u: DMatrix<f64>,
    kernel: KernelParams,
    gram_factor: Cholesky<f64, Dyn>,
    gram_inverse: DMatrix<f64>,
}

impl GpModel {
    /// Factorize the Gram matrix over `base_points` (N x m); means start at zero
    /// with `control_dim` policy columns.
    pub fn build(base_points: DMatrix<f64>, control_dim: usize, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        let n = base_points.nrows();
        if n == 0 {
            return Err(Error::Config("at least one base point is required".into()));
        }
        if base_points.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("base points"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (base_points.row(i) - base_points.row(j)).norm() == 0.0 {
                    return Err(Error::Config(format!("duplicate base points at rows {i} and {j}")));
                }
            }
        }
        let gram = gram_matrix(&base_points, &kernel);
        let gram_factor = Cholesky::new(gram).ok_or(Error::Factorization { n, jitter: kernel.jitter })?;
        let gram_inverse = gram_factor.inverse();
        Ok(Self {
            mu_v: DVector::zeros(n),
            mu_u: DMatrix::zeros(n, control_dim),
            base_points,
            kernel,
            gram_factor,
            gram_inverse,
        })
    }

    pub fn from_points(points: &[[f64; 2]], control_dim: usize, kernel: KernelParams) -> Result<Self> {
        let bp = DMatrix::from_fn(points.len(), 2, |i, j| points[i][j]);
        Self::build(bp, control_dim, kernel)
    }

    pub fn num_points(&self) -> usize {
        self.base_points.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.base_points.ncols()
    }

    pub fn control_dim(&self) -> usize {
        self.mu_u.ncols()
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn base_points(&self) -> &DMatrix<f64> {
        &self.base_points
    }

    /// Lower Cholesky factor of `K + jitter I`.
    pub fn gram_factor(&self) -> &Cholesky<f64, Dyn> {
        &self.gram_factor
    }

    /// `K + jitter I`, reassembled.
    pub fn gram(&self) -> DMatrix<f64> {
        gram_matrix(&self.base_points, &self.kernel)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension { expected: self.state_dim(), got: x.len() });
        }
        Ok(())
    }

    fn kernel_row(&self, x: &[f64]) -> DVector<f64> {
        let bp = &self.base_points;
        let inv2l2 = 1.0 / (2.0 * self.kernel.lengthscale * self.kernel.lengthscale);
        DVector::from_fn(bp.nrows(), |i, _| {
            let d2: f64 = x.iter().enumerate().map(|(d, xd)| (xd - bp[(i, d)]).powi(2)).sum();
            self.kernel.variance * (-d2 * inv2l2).exp()
        })
    }

    /// Value/policy weights only.
    pub fn value_weights(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.gram_inverse * self.kernel_row(x))
    }

    pub fn weights(&self, x: &[f64]) -> Result<Weights> {
        self.check_dim(x)?;
        let n = self.num_points();
        let m = self.state_dim();
        let k = self.kernel_row(x);
        let l2 = self.kernel.lengthscale * self.kernel.lengthscale;
        // columns: k, dk/dx_1, ..., dk/dx_m
        let mut rhs = DMatrix::zeros(n, m + 1);
        rhs.set_column(0, &k);
        for i in 0..n {
            for d in 0..m {
                rhs[(i, d + 1)] = -(x[d] - self.base_points[(i, d)]) / l2 * k[i];
            }
        }
        let sol = &self.gram_inverse * rhs;
        Ok(Weights {
            j: sol.column(0).into_owned(),
            jprime: sol.columns(1, m).transpose(),
        })
    }

    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_weights(x)?.dot(&self.mu_v))
    }

    pub fn predict_policy(&self, x: &[f64]) -> Result<DVector<f64>> {
        let j = self.value_weights(x)?;
        Ok(self.mu_u.tr_mul(&j))
    }

    pub fn predict_value_grad(&self, x: &[f64]) -> Result<DVector<f64>> {
        let w = self.weights(x)?;
        Ok(&w.jprime * &self.mu_v)
    }

    /// Value and policy from one set of weights.
    pub fn predict_value_policy(&self, x: &[f64]) -> Result<(f64, DVector<f64>)> {
        let j = self.value_weights(x)?;
        Ok((j.dot(&self.mu_v), self.mu_u.tr_mul(&j)))
    }

    /// One descent step on the means. Base points and the Gram factor are untouched.
    pub fn apply_gradients(&mut self, d_v: &DVector<f64>, d_u: &DMatrix<f64>, eta: f64) -> Result<()> {
        if d_v.len() != self.mu_v.len() {
            return Err(Error::Dimension { expected: self.mu_v.len(), got: d_v.len() });
        }
        if d_u.shape() != self.mu_u.shape() {
            return Err(Error::Dimension { expected: self.mu_u.len(), got: d_u.len() });
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Config(format!("learning rate must be non-negative, got {eta}")));
        }
        if d_v.iter().chain(d_u.iter()).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.mu_v.axpy(-eta, d_v, 1.0);
        self.mu_u.zip_apply(d_u, |m, g| *m -= eta * g);
        Ok(())
    }

    /// Only the value means.
    pub fn apply_value_gradient(&mut self, d_v: &DVector<f64>, eta: f64) -> Result<()> {
        let zeros = DMatrix::zeros(self.mu_u.nrows(), self.mu_u.ncols());
        self.apply_gradients(d_v, &zeros, eta)
    }
}

fn gram_matrix(bp: &DMatrix<f64>, kernel: &KernelParams) -> DMatrix<f64> {
    let n = bp.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| bp.row(i).iter().copied().collect()).collect();
    let mut g = DMatrix::from_fn(n, n, |i, j| kernel_eval(&rows[i], &rows[j], kernel));
    for i in 0..n {
        g[(i, i)] += kernel.jitter;
    }
    g
}
