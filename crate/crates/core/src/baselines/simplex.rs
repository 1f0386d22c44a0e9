//! Exact discrete OT with the transportation simplex.
//!
//! Northwest-corner start, MODI duals on the basis spanning tree, Dantzig
//! pricing with a switch to Bland's rule after a run of degenerate pivots,
//! lowest-index leaving cell. The basis always holds `n + m − 1` cells,
//! degenerate ones included.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};

use crate::measures::check_simplex;
use crate::plan::TransportPlan;
use crate::{OtError, Result};

/// Largest `n · m` accepted.
pub const MAX_CELLS: usize = 1_000_000;

const REDUCED_COST_TOL: f64 = 1e-12;
/// Consecutive zero-step pivots before pricing switches to Bland's rule.
const DEGENERATE_STALL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    Simplex,
    AssignmentBruteForce,
}

#[derive(Debug, Clone)]
pub struct ExactOtResult {
    pub plan: TransportPlan,
    pub cost: f64,
    pub method: ExactMethod,
    pub pivots: usize,
}

struct Basis {
    n: usize,
    m: usize,
    flow: Array2<f64>,
    basic: Vec<bool>,
    cells: Vec<(usize, usize)>,
}

impl Basis {
    fn northwest(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut supply = a.to_vec();
        let mut demand = b.to_vec();
        let mut flow = Array2::zeros((n, m));
        let mut basic = vec![false; n * m];
        let mut cells = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]);
            flow[[i, j]] = x;
            basic[i * m + j] = true;
            cells.push((i, j));
            supply[i] -= x;
            demand[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            // advance exactly one index so the basis stays a spanning tree
            if (supply[i] <= demand[j] && i < n - 1) || j == m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            n,
            m,
            flow,
            basic,
            cells,
        }
    }

    /// Row and column duals with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn duals(&self, c: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let adj = self.adjacency();
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; m];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &other in &adj[node] {
                if node < n {
                    let j = other - n;
                    if v[j].is_nan() {
                        v[j] = c[[node, j]] - u[node];
                        queue.push_back(other);
                    }
                } else {
                    let j = node - n;
                    if u[other].is_nan() {
                        u[other] = c[[other, j]] - v[j];
                        queue.push_back(other);
                    }
                }
            }
        }
        (u, v)
    }

    /// Bipartite adjacency: rows are nodes `0..n`, columns `n..n+m`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for &(i, j) in &self.cells {
            adj[i].push(self.n + j);
            adj[self.n + j].push(i);
        }
        adj
    }

    /// Basic cells on the tree path from row `i` to column `j`.
    fn tree_path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let n = self.n;
        let adj = self.adjacency();
        let mut parent = vec![usize::MAX; n + self.m];
        let start = i;
        let goal = n + j;
        parent[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = goal;
        while node != start {
            let prev = parent[node];
            let cell = if prev < n { (prev, node - n) } else { (node, prev - n) };
            path.push(cell);
            node = prev;
        }
        path.reverse();
        path
    }
}

/// Optimal plan for marginals `a`, `b` and cost `c`.
pub fn exact_ot_simplex(a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>) -> Result<ExactOtResult> {
    check_simplex(a.view(), "a")?;
    check_simplex(b.view(), "b")?;
    let (n, m) = (a.len(), b.len());
    if c.dim() != (n, m) {
        return Err(OtError::DimensionMismatch {
            expected: n,
            found: c.nrows(),
        });
    }
    if n * m > MAX_CELLS {
        return Err(OtError::InvalidInput(format!(
            "{n}×{m} problem exceeds the exact solver bound of {MAX_CELLS} cells"
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(OtError::InvalidInput("non-finite cost".into()));
    }
    let max_pivots = 50 * (n + m) * (n + m) + 1000;
    match run(a, b, c, max_pivots) {
        Some((basis, pivots)) => finish(basis, a, b, c, pivots),
        None => {
            // cycling guard: perturb supplies so no basic flow is ever zero
            let k = (n + m) as f64;
            let delta = 1e-10 / k;
            let mut pa = a.mapv(|x| x + delta);
            let mut pb = b.clone();
            pb[m - 1] += delta * n as f64;
            let total = pa.sum();
            pa /= total;
            pb /= total;
            let (basis, pivots) = run(&pa, &pb, c, max_pivots).ok_or(OtError::NotConverged {
                iterations: max_pivots,
                residual: f64::NAN,
            })?;
            finish(basis, a, b, c, pivots)
        }
    }
}

fn run(a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, max_pivots: usize) -> Option<(Basis, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut basis = Basis::northwest(a, b);
    let scale = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    // Dantzig pricing, falling back to Bland's rule during degenerate stalls
    let mut degenerate_run = 0usize;
    for pivots in 0..max_pivots {
        let (u, v) = basis.duals(c);
        let bland = degenerate_run >= DEGENERATE_STALL;
        let mut entering = None;
        let mut best = -REDUCED_COST_TOL * scale;
        'scan: for i in 0..n {
            let crow = c.row(i);
            for j in 0..m {
                let r = crow[j] - u[i] - v[j];
                if r < best && !basis.basic[i * m + j] {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Some((basis, pivots));
        };

        // cycle: entering cell (+), then the tree path from column ej back to row ei
        let path = basis.tree_path(ei, ej);
        let minus: Vec<(usize, usize)> = path.iter().rev().step_by(2).copied().collect();
        let plus: Vec<(usize, usize)> = path.iter().rev().skip(1).step_by(2).copied().collect();
        let theta = minus
            .iter()
            .map(|&(i, j)| basis.flow[[i, j]])
            .fold(f64::INFINITY, f64::min);
        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        // lowest-index blocking cell leaves
        let leaving = *minus
            .iter()
            .filter(|&&(i, j)| basis.flow[[i, j]] <= theta)
            .min_by_key(|&&(i, j)| i * m + j)
            .expect("cycle has a minus cell");

        basis.flow[[ei, ej]] += theta;
        for &(i, j) in &plus {
            basis.flow[[i, j]] += theta;
        }
        for &(i, j) in &minus {
            basis.flow[[i, j]] = (basis.flow[[i, j]] - theta).max(0.0);
        }
        basis.flow[[leaving.0, leaving.1]] = 0.0;
        basis.basic[leaving.0 * m + leaving.1] = false;
        basis.basic[ei * m + ej] = true;
        let pos = basis.cells.iter().position(|&cell| cell == leaving).unwrap();
        basis.cells[pos] = (ei, ej);
    }
    None
}

fn finish(basis: Basis, a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, pivots: usize) -> Result<ExactOtResult> {
    let flow = basis.flow;
    let cost = flow.iter().zip(c.iter()).map(|(f, c)| f * c).sum();
    Ok(ExactOtResult {
        plan: TransportPlan::new(flow, a.clone(), b.clone())?,
        cost,
        method: ExactMethod::Simplex,
        pivots,
    })
}
