use serde::{Deserialize, Serialize};

use crate::sparse::SparseMatrix;
use crate::{Error, Scalar};

/// Penalty family for [`fit_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularization {
    /// `lambda * sum(beta_j^2)` on standardized coefficients.
    Ridge,
    /// `lambda * sum(|beta_j|)` on standardized coefficients.
    Lasso,
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            memory: 10,
        }
    }
}

/// A fitted penalized linear regression.
///
/// Coefficients are stored in both scales: the standardized scale the
/// optimizer worked in, and the original feature scale used for prediction
/// and reason codes. Constant feature columns are dropped (coefficient zero,
/// `dropped` flag set). The intercept is never penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: serde::de::DeserializeOwned"))]
pub struct LinearModel<F> {
    pub regularization: Regularization,
    pub lambda: F,
    pub intercept_std: F,
    pub coefficients_std: Vec<F>,
    pub means: Vec<F>,
    pub stds: Vec<F>,
    pub dropped: Vec<bool>,
    /// Original-scale intercept: the model value when every feature is zero.
    pub intercept: F,
    /// Original-scale coefficients aligned with the feature matrix.
    pub coefficients: Vec<F>,
    pub converged: bool,
    pub iterations: usize,
}

impl<F: Scalar> LinearModel<F> {
    /// Model-space prediction for one sparse row.
    pub fn predict_row(&self, entries: &[(u32, F)]) -> F {
        let mut acc = self.intercept;
        for &(j, x) in entries {
            acc += self.coefficients[j as usize] * x;
        }
        acc
    }

    /// Per-feature original-scale contributions `beta_j * x_j` (non-zero only).
    pub fn contributions(&self, entries: &[(u32, F)]) -> Vec<(usize, F)> {
        entries
            .iter()
            .filter_map(|&(j, x)| {
                let c = self.coefficients[j as usize] * x;
                (c != F::zero()).then_some((j as usize, c))
            })
            .collect()
    }

    pub fn l2_norm(&self) -> F {
        self.coefficients_std
            .iter()
            .map(|b| *b * *b)
            .sum::<F>()
            .sqrt()
    }
}

/// Workspace for the penalized least-squares objective on a standardized
/// sparse design. Parameter layout: `x[0]` intercept, `x[1 + j]` coefficient
/// of feature `j` (standardized scale).
struct Objective<'a, F> {
    matrix: &'a SparseMatrix<F>,
    y: &'a [F],
    means: &'a [F],
    stds: &'a [F],
    active: &'a [bool],
    ridge_lambda: F, // zero for lasso (L1 handled outside the smooth part)
    n_inv: F,
}

impl<F: Scalar> Objective<'_, F> {
    fn residuals(&self, x: &[F]) -> (Vec<F>, F) {
        let p = self.means.len();
        let mut shift = F::zero();
        let mut scaled = vec![F::zero(); p];
        for j in 0..p {
            if self.active[j] {
                let c = x[1 + j] / self.stds[j];
                scaled[j] = c;
                shift += c * self.means[j];
            }
        }
        let base = x[0] - shift;
        let mut r = Vec::with_capacity(self.y.len());
        let mut loss = F::zero();
        for (i, yi) in self.y.iter().enumerate() {
            let mut pred = base;
            for &(j, v) in self.matrix.row(i) {
                pred += v * scaled[j as usize];
            }
            let e = pred - *yi;
            loss += e * e;
            r.push(e);
        }
        let two = F::from_f64(2.0).unwrap();
        let mut f = loss * self.n_inv / two;
        if self.ridge_lambda > F::zero() {
            let mut pen = F::zero();
            for j in 0..p {
                pen += x[1 + j] * x[1 + j];
            }
            f += self.ridge_lambda * pen;
        }
        (r, f)
    }

    fn value_grad(&self, x: &[F]) -> (F, Vec<F>) {
        let p = self.means.len();
        let (r, f) = self.residuals(x);
        let r_sum: F = r.iter().copied().sum();
        let mut xr = vec![F::zero(); p];
        for (i, ri) in r.iter().enumerate() {
            for &(j, v) in self.matrix.row(i) {
                xr[j as usize] += *ri * v;
            }
        }
        let mut g = vec![F::zero(); p + 1];
        g[0] = r_sum * self.n_inv;
        let two = F::from_f64(2.0).unwrap();
        for j in 0..p {
            if self.active[j] {
                let gz = (xr[j] - self.means[j] * r_sum) / self.stds[j];
                g[1 + j] = gz * self.n_inv + two * self.ridge_lambda * x[1 + j];
            }
        }
        (f, g)
    }
}

fn l2<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|x| *x * *x).sum::<F>().sqrt()
}

/// Orthant-wise pseudo-gradient of `f + lambda*||x||_1` (intercept exempt).
fn pseudo_gradient<F: Scalar>(x: &[F], g: &[F], lambda: F, active: &[bool]) -> Vec<F> {
    let mut pg = g.to_vec();
    for (j, live) in active.iter().enumerate() {
        let k = 1 + j;
        if !live {
            pg[k] = F::zero();
            continue;
        }
        if x[k] > F::zero() {
            pg[k] = g[k] + lambda;
        } else if x[k] < F::zero() {
            pg[k] = g[k] - lambda;
        } else if g[k] + lambda < F::zero() {
            pg[k] = g[k] + lambda;
        } else if g[k] - lambda > F::zero() {
            pg[k] = g[k] - lambda;
        } else {
            pg[k] = F::zero();
        }
    }
    pg
}

fn l1_norm_penalized<F: Scalar>(x: &[F]) -> F {
    x[1..].iter().map(|v| v.abs()).sum()
}

struct LbfgsState<F> {
    s: Vec<Vec<F>>,
    y: Vec<Vec<F>>,
    memory: usize,
}

impl<F: Scalar> LbfgsState<F> {
    fn new(memory: usize) -> Self {
        LbfgsState {
            s: Vec::new(),
            y: Vec::new(),
            memory,
        }
    }

    fn push(&mut self, s: Vec<F>, y: Vec<F>) {
        let sy: F = s.iter().zip(&y).map(|(a, b)| *a * *b).sum();
        if sy <= F::from_f64(1e-12).unwrap() {
            return; // skip non-positive curvature pairs
        }
        if self.s.len() == self.memory {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
    }

    /// Two-loop recursion: returns `H * g` (approximate inverse Hessian times g).
    fn apply(&self, g: &[F]) -> Vec<F> {
        let mut q = g.to_vec();
        let k = self.s.len();
        if k == 0 {
            return q;
        }
        let mut alpha = vec![F::zero(); k];
        let mut rho = vec![F::zero(); k];
        for i in (0..k).rev() {
            let sy: F = self.s[i].iter().zip(&self.y[i]).map(|(a, b)| *a * *b).sum();
            rho[i] = F::one() / sy;
            let sq: F = self.s[i].iter().zip(&q).map(|(a, b)| *a * *b).sum();
            alpha[i] = rho[i] * sq;
            for (qv, yv) in q.iter_mut().zip(&self.y[i]) {
                *qv -= alpha[i] * *yv;
            }
        }
        let last = k - 1;
        let sy: F = self.s[last]
            .iter()
            .zip(&self.y[last])
            .map(|(a, b)| *a * *b)
            .sum();
        let yy: F = self.y[last].iter().map(|v| *v * *v).sum();
        let gamma = sy / yy;
        for qv in q.iter_mut() {
            *qv *= gamma;
        }
        for i in 0..k {
            let yq: F = self.y[i].iter().zip(&q).map(|(a, b)| *a * *b).sum();
            let beta = rho[i] * yq;
            for (qv, sv) in q.iter_mut().zip(&self.s[i]) {
                *qv += (alpha[i] - beta) * *sv;
            }
        }
        q
    }
}

/// Fits a penalized linear regression on the standardized feature matrix.
///
/// Features are standardized to mean 0 / standard deviation 1 (constant
/// columns dropped); the optimizer is L-BFGS, switching to its orthant-wise
/// variant for the lasso penalty. Convergence is declared when the gradient
/// norm falls below the tolerance; otherwise the model is returned with
/// `converged == false` after the iteration cap.
///
/// Fills the mean/std metadata of `matrix` as a side effect.
pub fn fit_linear<F: Scalar>(
    matrix: &mut SparseMatrix<F>,
    y: &[F],
    regularization: Regularization,
    lambda: F,
    opts: &FitOptions,
) -> Result<LinearModel<F>, Error> {
    let n = matrix.rows();
    if n == 0 {
        return Err(Error::TooFewRows { min: 1, got: 0 });
    }
    if y.len() != n {
        return Err(Error::RowTargetMismatch {
            rows: n,
            targets: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "targets" });
    }
    if !lambda.is_finite() || lambda < F::zero() {
        return Err(Error::InvalidParam(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }

    matrix.compute_stats();
    let p = matrix.width();
    let means: Vec<F> = matrix.meta().iter().map(|m| m.mean).collect();
    let stds: Vec<F> = matrix.meta().iter().map(|m| m.std).collect();
    let tiny = F::from_f64(1e-12).unwrap();
    let active: Vec<bool> = stds.iter().map(|s| *s > tiny).collect();

    let nf = F::from_usize(n).unwrap();
    let obj = Objective {
        matrix,
        y,
        means: &means,
        stds: &stds,
        active: &active,
        ridge_lambda: match regularization {
            Regularization::Ridge => lambda,
            Regularization::Lasso => F::zero(),
        },
        n_inv: F::one() / nf,
    };
    let l1 = match regularization {
        Regularization::Lasso => lambda,
        Regularization::Ridge => F::zero(),
    };

    let mut x = vec![F::zero(); p + 1];
    x[0] = y.iter().copied().sum::<F>() / nf;

    let tol = F::from_f64(opts.gradient_tolerance).unwrap();
    let c1 = F::from_f64(1e-4).unwrap();
    let half = F::from_f64(0.5).unwrap();
    let mut state = LbfgsState::new(opts.memory.max(1));
    let mut converged = false;
    let mut iterations = 0;

    let (mut f, mut g) = obj.value_grad(&x);
    let full = |f_smooth: F, xv: &[F]| -> F {
        if l1 > F::zero() {
            f_smooth + l1 * l1_norm_penalized(xv)
        } else {
            f_smooth
        }
    };
    let mut f_total = full(f, &x);

    for iter in 0..opts.max_iterations {
        iterations = iter;
        let pg = if l1 > F::zero() {
            pseudo_gradient(&x, &g, l1, &active)
        } else {
            g.clone()
        };
        if l2(&pg) < tol {
            converged = true;
            break;
        }

        // Search direction from the two-loop recursion.
        let mut d: Vec<F> = state.apply(&pg).iter().map(|v| -*v).collect();
        if l1 > F::zero() {
            // Orthant-wise alignment: keep only components that oppose the
            // pseudo-gradient; the rest would leave the current orthant.
            for k in 0..d.len() {
                if d[k] * (-pg[k]) <= F::zero() {
                    d[k] = F::zero();
                }
            }
            if d.iter().all(|v| *v == F::zero()) {
                d = pg.iter().map(|v| -*v).collect();
            }
        } else {
            let descent: F = d.iter().zip(&pg).map(|(a, b)| *a * *b).sum();
            if descent >= F::zero() {
                d = pg.iter().map(|v| -*v).collect();
            }
        }

        // Orthant each coordinate must stay in during the lasso line search.
        let xi: Vec<F> = if l1 > F::zero() {
            x.iter()
                .zip(&pg)
                .enumerate()
                .map(|(k, (xv, pgv))| {
                    if k == 0 {
                        F::zero() // intercept: unconstrained
                    } else if *xv != F::zero() {
                        xv.signum()
                    } else {
                        -pgv.signum()
                    }
                })
                .collect()
        } else {
            Vec::new()
        };

        let mut alpha = if iter == 0 {
            F::one() / (F::one() + l2(&pg))
        } else {
            F::one()
        };
        let dir_deriv: F = d.iter().zip(&pg).map(|(a, b)| *a * *b).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let mut x_new: Vec<F> = x.iter().zip(&d).map(|(xv, dv)| *xv + alpha * *dv).collect();
            if l1 > F::zero() {
                for k in 1..x_new.len() {
                    if xi[k] != F::zero() && x_new[k] * xi[k] < F::zero() {
                        x_new[k] = F::zero();
                    }
                }
            }
            let (f_new, g_new) = obj.value_grad(&x_new);
            let f_new_total = full(f_new, &x_new);
            let decrease: F = if l1 > F::zero() {
                pg.iter()
                    .zip(x_new.iter().zip(&x))
                    .map(|(pgv, (xn, xo))| *pgv * (*xn - *xo))
                    .sum()
            } else {
                alpha * dir_deriv
            };
            if f_new_total <= f_total + c1 * decrease {
                let s: Vec<F> = x_new.iter().zip(&x).map(|(a, b)| *a - *b).collect();
                let yv: Vec<F> = g_new.iter().zip(&g).map(|(a, b)| *a - *b).collect();
                state.push(s, yv);
                x = x_new;
                f = f_new;
                g = g_new;
                f_total = f_new_total;
                accepted = true;
                break;
            }
            alpha *= half;
        }
        if !accepted {
            // Line search stalled: gradient is numerically flat.
            let pg_now = if l1 > F::zero() {
                pseudo_gradient(&x, &g, l1, &active)
            } else {
                g.clone()
            };
            converged = l2(&pg_now) < tol * F::from_f64(1e3).unwrap();
            break;
        }
    }
    if !converged {
        let pg = if l1 > F::zero() {
            pseudo_gradient(&x, &g, l1, &active)
        } else {
            g.clone()
        };
        converged = l2(&pg) < tol;
    }
    let _ = f;

    // Convert to original scale.
    let mut coefficients_std = vec![F::zero(); p];
    let mut coefficients = vec![F::zero(); p];
    let mut intercept = x[0];
    for j in 0..p {
        if active[j] {
            coefficients_std[j] = x[1 + j];
            coefficients[j] = x[1 + j] / stds[j];
            intercept -= x[1 + j] * means[j] / stds[j];
        }
    }
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            context: "fitted coefficients",
        });
    }

    Ok(LinearModel {
        regularization,
        lambda,
        intercept_std: x[0],
        coefficients_std,
        means,
        stds,
        dropped: active.iter().map(|a| !a).collect(),
        intercept,
        coefficients,
        converged,
        iterations: iterations + 1,
    })
}
