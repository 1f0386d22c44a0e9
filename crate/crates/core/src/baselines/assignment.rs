//! Exhaustive optimal assignment for tiny problems.

use ndarray::{Array1, Array2};

use crate::plan::TransportPlan;
use crate::{OtError, Result};

pub const MAX_BRUTE_FORCE: usize = 8;

/// Minimum of `(1/n) Σ_i C[i, σ(i)]` over all permutations `σ`.
///
/// Ties keep the first permutation found in lexicographic order, so the
/// identity wins whenever it is optimal.
pub fn exact_assignment_bruteforce(c: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(OtError::DimensionMismatch {
            expected: n,
            found: c.ncols(),
        });
    }
    if n == 0 {
        return Err(OtError::InsufficientData { needed: 1, found: 0 });
    }
    if n > MAX_BRUTE_FORCE {
        return Err(OtError::InvalidInput(format!(
            "brute-force assignment is limited to n <= {MAX_BRUTE_FORCE}, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (perm.clone(), f64::INFINITY);
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        if total < best.1 {
            best = (perm.clone(), total);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((best.0, best.1 / n as f64))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Uniform plan `π = (1/n) P_σ` of a permutation.
pub fn assignment_plan(perm: &[usize]) -> Result<TransportPlan> {
    let n = perm.len();
    let w = Array1::from_elem(n, 1.0 / n as f64);
    let mut m = Array2::zeros((n, n));
    for (i, &j) in perm.iter().enumerate() {
        m[[i, j]] = 1.0 / n as f64;
    }
    TransportPlan::new(m, w.clone(), w)
}
