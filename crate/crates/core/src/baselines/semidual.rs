//! Stochastic ascent on the entropic semi-dual
//!
//! `max_v E_{X∼μ}[ Σ_j b_j v_j − ε log Σ_j b_j exp((v_j − c(X, y_j))/ε) − ε ]`,
//!
//! obtained from the full dual by maximising out `u` in closed form. Every
//! sampled `X` touches all `m` target atoms, so an iteration costs `O(p·m)`.

use std::time::Instant;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{TrainTrace, EXACT_PAIR_LIMIT};
use crate::measures::{sample_batch, CostFn, DiscreteMeasure, MeasureSource};
use crate::{OtError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemiDualConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub log_every: usize,
    /// Source points used to estimate the objective when the exact sum is
    /// unavailable.
    pub eval_points: usize,
    /// Fraction of final iterations whose iterates are averaged; 0 disables.
    pub average_tail: f64,
}

impl Default for SemiDualConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            learning_rate: 1.0,
            iterations: 10_000,
            seed: 0,
            log_every: 1000,
            eval_points: 10_000,
            average_tail: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemiDualSolution {
    pub v: Array1<f64>,
    pub trace: TrainTrace,
}

/// Soft c-transform `u(x) = −ε log Σ_j b_j exp((v_j − c(x, y_j))/ε)`;
/// also fills `weights` with the softmax `χ_j(x)` when given.
fn soft_min(
    x: ArrayView1<f64>,
    v: &Array1<f64>,
    log_b: &Array1<f64>,
    ys: ArrayView2<f64>,
    cost: &CostFn,
    eps: f64,
    weights: Option<&mut [f64]>,
) -> f64 {
    let m = v.len();
    let mut buf_owned;
    let buf: &mut [f64] = match weights {
        Some(w) => w,
        None => {
            buf_owned = vec![0.0; m];
            &mut buf_owned
        }
    };
    let mut mx = f64::NEG_INFINITY;
    for j in 0..m {
        let t = log_b[j] + (v[j] - cost.eval(x, ys.row(j))) / eps;
        buf[j] = t;
        mx = mx.max(t);
    }
    let mut z = 0.0;
    for t in buf.iter_mut() {
        *t = (*t - mx).exp();
        z += *t;
    }
    for t in buf.iter_mut() {
        *t /= z;
    }
    -eps * (mx + z.ln())
}

/// `u = c-transform(v)` on the rows of `points`.
pub fn c_transform(points: ArrayView2<f64>, v: &Array1<f64>, nu: &DiscreteMeasure, cost: &CostFn, eps: f64) -> Array1<f64> {
    let log_b = nu.weights().mapv(f64::ln);
    let ys = nu.points().view();
    let vals: Vec<f64> = (0..points.nrows())
        .into_par_iter()
        .map(|i| soft_min(points.row(i), v, &log_b, ys, cost, eps, None))
        .collect();
    Array1::from(vals)
}

/// Semi-dual objective averaged over the rows of `points` with `weights`.
pub fn semi_dual_objective(
    points: ArrayView2<f64>,
    weights: ArrayView1<f64>,
    v: &Array1<f64>,
    nu: &DiscreteMeasure,
    cost: &CostFn,
    eps: f64,
) -> f64 {
    let u = c_transform(points, v, nu, cost, eps);
    weights.dot(&u) + nu.weights().dot(v) - eps
}

/// One ascent step on `v` from a batch of source points.
pub fn semi_dual_step(
    v: &mut Array1<f64>,
    batch: ArrayView2<f64>,
    nu: &DiscreteMeasure,
    log_b: &Array1<f64>,
    cost: &CostFn,
    eps: f64,
    lr: f64,
) -> Result<()> {
    let m = v.len();
    let p = batch.nrows();
    let mut chi = vec![0.0; m];
    let mut mean_chi = vec![0.0; m];
    for x in batch.rows() {
        soft_min(x, v, log_b, nu.points().view(), cost, eps, Some(&mut chi));
        for (acc, c) in mean_chi.iter_mut().zip(&chi) {
            *acc += c;
        }
    }
    let b = nu.weights();
    let scale = 1.0 / p as f64;
    for j in 0..m {
        let g = b[j] - mean_chi[j] * scale;
        if !g.is_finite() {
            return Err(OtError::NonFinite("non-finite semi-dual gradient".into()));
        }
        v[j] += lr * g;
    }
    Ok(())
}

/// SGD on the semi-dual with entropic regularization `eps`.
pub fn semi_dual_sgd(
    mu: &MeasureSource,
    nu: &DiscreteMeasure,
    cost: &CostFn,
    eps: f64,
    cfg: &SemiDualConfig,
) -> Result<SemiDualSolution> {
    if !(eps > 0.0) {
        return Err(OtError::InvalidInput("eps must be positive".into()));
    }
    if cfg.batch_size == 0 || cfg.eval_points == 0 {
        return Err(OtError::InvalidInput("batch size and evaluation size must be positive".into()));
    }
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch {
            expected: nu.dim(),
            found: mu.dim(),
        });
    }
    if !(0.0..=1.0).contains(&cfg.average_tail) {
        return Err(OtError::InvalidInput("average_tail must lie in [0, 1]".into()));
    }
    let log_b = nu.weights().mapv(f64::ln);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // fixed evaluation sample: the whole support when small enough
    let (eval_pts, eval_w) = match mu {
        MeasureSource::Discrete(m) if m.len().saturating_mul(nu.len()) <= EXACT_PAIR_LIMIT => {
            (m.points().clone(), m.weights().clone())
        }
        other => {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0b1e);
            let b = sample_batch(other, cfg.eval_points, &mut eval_rng)?;
            let k = b.len();
            (b.points, Array1::from_elem(k, 1.0 / k as f64))
        }
    };

    let tail_start = if cfg.average_tail > 0.0 {
        ((1.0 - cfg.average_tail) * cfg.iterations as f64).floor() as usize
    } else {
        usize::MAX
    };
    let mut v = Array1::<f64>::zeros(nu.len());
    let mut avg: Option<(Array1<f64>, usize)> = None;
    let mut trace = TrainTrace::default();
    let mut elapsed = 0.0;
    for it in 1..=cfg.iterations {
        let t0 = Instant::now();
        let batch = sample_batch(mu, cfg.batch_size, &mut rng)?;
        semi_dual_step(&mut v, batch.points.view(), nu, &log_b, cost, eps, cfg.learning_rate)?;
        if it > tail_start {
            match &mut avg {
                None => avg = Some((v.clone(), 1)),
                Some((a, k)) => {
                    *k += 1;
                    let w = 1.0 / *k as f64;
                    a.zip_mut_with(&v, |a, &x| *a += w * (x - *a));
                }
            }
        }
        elapsed += t0.elapsed().as_secs_f64() * 1e3;
        if it == cfg.iterations || (cfg.log_every > 0 && it % cfg.log_every == 0) {
            let current = avg.as_ref().map_or(&v, |(a, _)| a);
            let obj = semi_dual_objective(eval_pts.view(), eval_w.view(), current, nu, cost, eps);
            trace.push(it, elapsed, obj);
        }
    }
    let v = avg.map_or(v, |(a, _)| a);
    Ok(SemiDualSolution { v, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::sinkhorn;
    use crate::dual::{dual_objective_exact, Regularization};
    use crate::measures::cost_matrix;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn single_target_atom() {
        let mu = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]).unwrap();
        let nu = DiscreteMeasure::uniform(array![[1.0, 0.0]]).unwrap();
        let eps = 0.3;
        let mean_cost = (1.0 + 1.0 + 1.0) / 3.0;
        for v0 in [-2.0, 0.0, 5.0] {
            let v = array![v0];
            let obj = semi_dual_objective(mu.points().view(), mu.weights().view(), &v, &nu, &CostFn::SquaredEuclidean, eps);
            assert_abs_diff_eq!(obj, mean_cost - eps, epsilon = 1e-12);
        }
        let mut v = array![0.7];
        let log_b = nu.weights().mapv(f64::ln);
        semi_dual_step(&mut v, mu.points().view(), &nu, &log_b, &CostFn::SquaredEuclidean, eps, 10.0).unwrap();
        assert_abs_diff_eq!(v[0], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn matches_full_dual_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = Array2::from_shape_simple_fn((16, 2), || rng.random::<f64>());
        let ys = Array2::from_shape_simple_fn((16, 2), || rng.random::<f64>());
        let mu = DiscreteMeasure::uniform(xs).unwrap();
        let nu = DiscreteMeasure::uniform(ys).unwrap();
        let eps = 0.1;
        let cost = CostFn::SquaredEuclidean;
        let c = cost_matrix(&cost, mu.points().view(), nu.points().view()).unwrap();
        let sk = sinkhorn(mu.weights(), nu.weights(), &c, eps, 100_000, 1e-12).unwrap();
        let reg = Regularization::entropy(eps).unwrap();
        let target = dual_objective_exact(&sk.u, &sk.v, &mu, &nu, &cost, &reg).unwrap();

        let cfg = SemiDualConfig {
            batch_size: 16,
            learning_rate: 0.3,
            iterations: 20_000,
            log_every: 0,
            average_tail: 0.5,
            ..Default::default()
        };
        let sol = semi_dual_sgd(&mu.clone().into(), &nu, &cost, eps, &cfg).unwrap();
        let got = sol.trace.last().unwrap().objective;
        assert!((got - target).abs() < 1e-3, "semi-dual {got} vs {target}");

        // the semi-dual value at Sinkhorn's v is the optimum itself
        let at_opt = semi_dual_objective(mu.points().view(), mu.weights().view(), &sk.v, &nu, &cost, eps);
        assert_abs_diff_eq!(at_opt, target, epsilon = 1e-9);
    }
}
