//! Primal recovery from dual potentials and plan diagnostics.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::dual::{clamped_exp, DualPotential, RegKind, Regularization};
use crate::measures::{check_simplex, cost_matrix, CostFn, DiscreteMeasure};
use crate::{OtError, Result};

/// Density of the regularized plan with respect to `μ × ν` at a pair with
/// potentials `u_val`, `v_val` and cost `c_val`.
#[inline]
pub fn h_eps(reg: &Regularization, u_val: f64, v_val: f64, c_val: f64) -> f64 {
    let eps = reg.epsilon;
    let s = u_val + v_val - c_val;
    match reg.kind {
        RegKind::Entropy => clamped_exp(s, eps),
        RegKind::L2 => s.max(0.0) / (2.0 * eps),
    }
}

/// Dense coupling together with the marginals it should match.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: Array2<f64>,
    pub row_target: Array1<f64>,
    pub col_target: Array1<f64>,
}

impl TransportPlan {
    pub fn new(matrix: Array2<f64>, row_target: Array1<f64>, col_target: Array1<f64>) -> Result<Self> {
        if matrix.nrows() != row_target.len() || matrix.ncols() != col_target.len() {
            return Err(OtError::DimensionMismatch {
                expected: row_target.len(),
                found: matrix.nrows(),
            });
        }
        if matrix.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(OtError::InvalidInput("plan entries must be finite and nonnegative".into()));
        }
        check_simplex(row_target.view(), "row marginal")?;
        check_simplex(col_target.view(), "column marginal")?;
        Ok(Self {
            matrix,
            row_target,
            col_target,
        })
    }

    /// The independent coupling `a bᵀ`.
    pub fn product(a: &Array1<f64>, b: &Array1<f64>) -> Result<Self> {
        let m = a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)));
        Self::new(m, a.clone(), b.clone())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.dim()
    }

    pub fn total_mass(&self) -> f64 {
        self.matrix.sum()
    }

    pub fn nonzeros(&self, tol: f64) -> usize {
        self.matrix.iter().filter(|v| **v > tol).count()
    }

    /// `Σ |π_ij − other_ij|`.
    pub fn l1_distance(&self, other: &TransportPlan) -> f64 {
        (&self.matrix - &other.matrix).mapv(f64::abs).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.matrix.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Regularized plan density `H_ε(x, y)` as a function of arbitrary points.
pub struct PlanDensity<'a> {
    pub u: &'a DualPotential,
    pub v: &'a DualPotential,
    pub cost: &'a CostFn,
    pub reg: Regularization,
}

impl PlanDensity<'_> {
    /// Densities for every pair of rows of `xb` and `yb`. Vector potentials
    /// need the support indices of the rows.
    pub fn matrix(
        &self,
        xb: ArrayView2<f64>,
        x_idx: Option<&[usize]>,
        yb: ArrayView2<f64>,
        y_idx: Option<&[usize]>,
    ) -> Result<Array2<f64>> {
        let uv = self.u.eval(xb, x_idx)?;
        let vv = self.v.eval(yb, y_idx)?;
        let c = cost_matrix(self.cost, xb, yb)?;
        Ok(density_matrix(&self.reg, &uv, &vv, &c))
    }
}

pub(crate) fn density_matrix(reg: &Regularization, u: &Array1<f64>, v: &Array1<f64>, c: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn(c.dim(), |(i, j)| h_eps(reg, u[i], v[j], c[[i, j]]))
}

/// `π_ij = H_ε(x_i, y_j) a_i b_j` on the product of two discrete supports.
pub fn recover_discrete_plan(
    u: &DualPotential,
    v: &DualPotential,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFn,
    reg: &Regularization,
) -> Result<TransportPlan> {
    let uv = u.on_support(mu)?;
    let vv = v.on_support(nu)?;
    let c = cost_matrix(cost, mu.points().view(), nu.points().view())?;
    plan_from_potentials(&uv, &vv, mu.weights(), nu.weights(), &c, reg)
}

/// Plan from potential values and a precomputed cost matrix.
pub fn plan_from_potentials(
    u: &Array1<f64>,
    v: &Array1<f64>,
    a: &Array1<f64>,
    b: &Array1<f64>,
    c: &Array2<f64>,
    reg: &Regularization,
) -> Result<TransportPlan> {
    if c.dim() != (a.len(), b.len()) || u.len() != a.len() || v.len() != b.len() {
        return Err(OtError::DimensionMismatch {
            expected: a.len(),
            found: u.len(),
        });
    }
    let mut m = density_matrix(reg, u, v, c);
    for ((i, j), p) in m.indexed_iter_mut() {
        *p *= a[i] * b[j];
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(OtError::NonFinite("recovered plan has non-finite entries".into()));
    }
    TransportPlan::new(m, a.clone(), b.clone())
}

/// L1 distances between realised and target row / column marginals.
pub fn marginal_residuals(plan: &TransportPlan) -> (f64, f64) {
    let rows = plan.matrix.sum_axis(Axis(1));
    let cols = plan.matrix.sum_axis(Axis(0));
    let r = (&rows - &plan.row_target).mapv(f64::abs).sum();
    let c = (&cols - &plan.col_target).mapv(f64::abs).sum();
    (r, c)
}

/// Transport cost `Σ π_ij C_ij` and regularizer value `R(π)` with respect to
/// the plan's own target marginals (`0 · ln 0 = 0`).
pub fn regularized_objective(plan: &TransportPlan, cost: &Array2<f64>, reg: &Regularization) -> Result<(f64, f64)> {
    if cost.dim() != plan.matrix.dim() {
        return Err(OtError::DimensionMismatch {
            expected: plan.matrix.nrows(),
            found: cost.nrows(),
        });
    }
    let (a, b) = (&plan.row_target, &plan.col_target);
    let mut transport = 0.0;
    let mut r = 0.0;
    for ((i, j), &p) in plan.matrix.indexed_iter() {
        transport += p * cost[[i, j]];
        let ab = a[i] * b[j];
        match reg.kind {
            RegKind::Entropy => {
                if p > 0.0 {
                    r += p * ((p / ab).ln() - 1.0);
                }
            }
            RegKind::L2 => {
                if p > 0.0 {
                    r += p * p / ab;
                }
            }
        }
    }
    Ok((transport, r))
}

/// Conditional mean of the targets under each plan row (squared-Euclidean
/// barycentric projection).
pub fn barycentric_projection_discrete(plan: &TransportPlan, target_points: ArrayView2<f64>) -> Result<Array2<f64>> {
    if target_points.nrows() != plan.matrix.ncols() {
        return Err(OtError::DimensionMismatch {
            expected: plan.matrix.ncols(),
            found: target_points.nrows(),
        });
    }
    let mass = plan.matrix.sum_axis(Axis(1));
    if let Some(i) = mass.iter().position(|m| !(*m > 0.0)) {
        return Err(OtError::ZeroMassRow(i));
    }
    let mut out = plan.matrix.dot(&target_points);
    for (mut row, m) in out.rows_mut().into_iter().zip(mass.iter()) {
        row /= *m;
    }
    Ok(out)
}

/// Barycentric image of one source atom given its plan row.
pub fn barycenter_of_row(row: ArrayView1<f64>, target_points: ArrayView2<f64>) -> Option<Array1<f64>> {
    let m = row.sum();
    (m > 0.0).then(|| row.dot(&target_points) / m)
}
