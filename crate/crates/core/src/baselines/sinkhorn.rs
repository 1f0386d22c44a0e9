//! Log-domain Sinkhorn iterations.
//!
//! Potentials follow the same convention as the dual solver:
//! `π_ij = a_i b_j exp((u_i + v_j − C_ij) / ε)`.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::measures::{check_simplex, CostFn, DiscreteMeasure};
use crate::plan::TransportPlan;
use crate::{OtError, Result};

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub iterations: usize,
    /// Row-marginal L1 residual after the last update (columns are exact).
    pub marginal_residual: f64,
}

#[inline]
fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic OT between weights `a`, `b` with cost matrix `c`.
///
/// Stops once the row-marginal L1 residual is at most `tol`; exhausting
/// `max_iters` is an error carrying the last residual.
pub fn sinkhorn(a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, eps: f64, max_iters: usize, tol: f64) -> Result<SinkhornResult> {
    sinkhorn_from(a, b, c, eps, &Array1::zeros(b.len()), max_iters, tol)
}

/// [`sinkhorn`] started from column potential `v0`, e.g. the solution at a
/// larger `ε` when sweeping towards small regularisation.
pub fn sinkhorn_from(
    a: &Array1<f64>,
    b: &Array1<f64>,
    c: &Array2<f64>,
    eps: f64,
    v0: &Array1<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    check_simplex(a.view(), "a")?;
    check_simplex(b.view(), "b")?;
    if c.dim() != (a.len(), b.len()) {
        return Err(OtError::DimensionMismatch {
            expected: a.len(),
            found: c.nrows(),
        });
    }
    if !(eps > 0.0) {
        return Err(OtError::InvalidInput("eps must be positive".into()));
    }
    let (n, m) = c.dim();
    if v0.len() != m {
        return Err(OtError::DimensionMismatch { expected: m, found: v0.len() });
    }
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut u = Array1::<f64>::zeros(n);
    let mut v = v0.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for i in 0..n {
            let row = (0..m).map(|j| log_b[j] + (v[j] - c[[i, j]]) / eps);
            u[i] = -eps * log_sum_exp(row);
        }
        for j in 0..m {
            let col = (0..n).map(|i| log_a[i] + (u[i] - c[[i, j]]) / eps);
            v[j] = -eps * log_sum_exp(col);
        }
        residual = (0..n)
            .map(|i| {
                let s: f64 = (0..m)
                    .map(|j| (log_a[i] + log_b[j] + (u[i] + v[j] - c[[i, j]]) / eps).exp())
                    .sum();
                (s - a[i]).abs()
            })
            .sum();
        if !residual.is_finite() {
            return Err(OtError::NonFinite("Sinkhorn residual became non-finite".into()));
        }
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(OtError::NotConverged {
            iterations,
            residual,
        });
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| {
        (log_a[i] + log_b[j] + (u[i] + v[j] - c[[i, j]]) / eps).exp()
    });
    Ok(SinkhornResult {
        plan: TransportPlan::new(plan, a.clone(), b.clone())?,
        u,
        v,
        iterations,
        marginal_residual: residual,
    })
}

#[derive(Debug, Clone)]
pub struct SinkhornPotentials {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub iterations: usize,
    pub marginal_residual: f64,
}

#[inline]
fn point_cost(cost: &CostFn, p: &[f64], q: &[f64]) -> f64 {
    match cost {
        CostFn::SquaredEuclidean => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
        CostFn::Euclidean => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        CostFn::Custom(_) => cost.eval(ArrayView1::from(p), ArrayView1::from(q)),
    }
}

/// Sinkhorn between two point clouds without materialising the cost matrix.
/// Costs are recomputed on the fly, so memory stays `O(n + m)`.
pub fn sinkhorn_points(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFn,
    eps: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornPotentials> {
    if !(eps > 0.0) {
        return Err(OtError::InvalidInput("eps must be positive".into()));
    }
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let d = mu.dim();
    let xs = mu.points().as_standard_layout().into_owned();
    let ys = nu.points().as_standard_layout().into_owned();
    let (xs, ys) = (xs.as_slice().expect("owned"), ys.as_slice().expect("owned"));
    let log_a = mu.weights().mapv(f64::ln);
    let log_b = nu.weights().mapv(f64::ln);
    let (n, m) = (mu.len(), nu.len());
    let mut u = Array1::<f64>::zeros(n);
    let mut v = Array1::<f64>::zeros(m);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    // soft-min of `log_w_k + (pot_k − c(p, q_k)) / ε` over the rows `q_k` of `qs`
    let soft = |p: &[f64], qs: &[f64], pot: &[f64], log_w: &[f64], buf: &mut Vec<f64>| -> f64 {
        buf.clear();
        buf.extend(qs.chunks_exact(d).zip(pot).zip(log_w).map(|((q, &pk), &lw)| {
            let c = point_cost(cost, p, q);
            lw + (pk - c) / eps
        }));
        let mx = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return mx;
        }
        mx + buf.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
    };
    let (la, lb) = (log_a.as_slice().expect("owned"), log_b.as_slice().expect("owned"));
    while iterations < max_iters {
        iterations += 1;
        let vs = v.as_slice().expect("owned");
        let new_u: Vec<f64> = xs
            .par_chunks_exact(d)
            .map_init(Vec::new, |buf, x| -eps * soft(x, ys, vs, lb, buf))
            .collect();
        u = Array1::from(new_u);
        let us = u.as_slice().expect("owned");
        let (new_v, col_mass): (Vec<f64>, Vec<f64>) = ys
            .par_chunks_exact(d)
            .map_init(Vec::new, |buf, y| {
                let lse = soft(y, xs, us, la, buf);
                (-eps * lse, lse)
            })
            .unzip();
        // column residual of the plan before the v update
        residual = (0..m)
            .map(|j| {
                let before = (log_b[j] + v[j] / eps + col_mass[j]).exp();
                (before - nu.weights()[j]).abs()
            })
            .sum();
        v = Array1::from(new_v);
        if !residual.is_finite() {
            return Err(OtError::NonFinite("Sinkhorn residual became non-finite".into()));
        }
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(OtError::NotConverged {
            iterations,
            residual,
        });
    }
    Ok(SinkhornPotentials {
        u,
        v,
        iterations,
        marginal_residual: residual,
    })
}
