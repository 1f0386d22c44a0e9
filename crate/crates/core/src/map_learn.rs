//! Neural Monge maps fitted by barycentric projection.
//!
//! With frozen dual potentials `(u, v)`, a map `f` minimises
//! `E_{μ×ν}[d(Y, f(X)) H_ε(X, Y)]`; the reverse map `g` minimises
//! `E_{μ×ν}[d(X, g(Y)) H_ε(X, Y)]`.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{DualPotential, Regularization, TrainTrace};
use crate::measures::{sample_batch, Batch, CostFn, MeasureSource};
use crate::nn::{adam_step, nested, Activation, AdamState, ForwardCache, Mlp, MlpParams, MlpSpec};
use crate::plan::PlanDensity;
use crate::{OtError, Result};

/// Distance used in the projection loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionCost {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

/// Affine pre- and post-processing around the network:
/// `f(x) = out_mean + out_scale ⊙ net((x − in_mean) / in_scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNormalization {
    #[serde(with = "nested::vector")]
    pub in_mean: Array1<f64>,
    #[serde(with = "nested::vector")]
    pub in_scale: Array1<f64>,
    #[serde(with = "nested::vector")]
    pub out_mean: Array1<f64>,
    #[serde(with = "nested::vector")]
    pub out_scale: Array1<f64>,
}

impl MapNormalization {
    /// Standardise inputs by their moments. Outputs are standardised too,
    /// except under a tanh head where the target's bounding box is used
    /// so the image of the map covers the data.
    pub fn fit(inputs: ArrayView2<f64>, targets: ArrayView2<f64>, output: Activation) -> Result<Self> {
        if inputs.nrows() == 0 || targets.nrows() == 0 {
            return Err(OtError::InsufficientData { needed: 1, found: 0 });
        }
        let (in_mean, in_scale) = mean_std(inputs);
        let (out_mean, out_scale) = match output {
            Activation::Tanh => {
                let lo = targets.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
                let hi = targets.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
                let mid = (&lo + &hi) / 2.0;
                let half = ((&hi - &lo) / 2.0).mapv(floor_scale);
                (mid, half)
            }
            _ => mean_std(targets),
        };
        Ok(Self {
            in_mean,
            in_scale,
            out_mean,
            out_scale,
        })
    }
}

fn floor_scale(s: f64) -> f64 {
    if s > 1e-12 {
        s
    } else {
        1.0
    }
}

fn mean_std(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let var = x.var_axis(Axis(0), 0.0);
    (mean, var.mapv(|v| floor_scale(v.sqrt())))
}

/// A learned map `R^d → R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MongeMap {
    pub mlp: Mlp,
    pub normalization: Option<MapNormalization>,
}

impl MongeMap {
    pub fn new(mlp: Mlp, normalization: Option<MapNormalization>) -> Result<Self> {
        let d = mlp.input_dim();
        if mlp.output_dim() != d {
            return Err(OtError::DimensionMismatch {
                expected: d,
                found: mlp.output_dim(),
            });
        }
        if let Some(n) = &normalization {
            let lens = [n.in_mean.len(), n.in_scale.len(), n.out_mean.len(), n.out_scale.len()];
            if let Some(&bad) = lens.iter().find(|&&l| l != d) {
                return Err(OtError::DimensionMismatch { expected: d, found: bad });
            }
            if n.in_scale.iter().chain(n.out_scale.iter()).any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(OtError::InvalidInput("normalization scales must be positive".into()));
            }
        }
        if !mlp.params.is_finite() {
            return Err(OtError::InvalidInput("non-finite map parameters".into()));
        }
        Ok(Self { mlp, normalization })
    }

    pub fn dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn normalize_input(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(OtError::DimensionMismatch {
                expected: self.dim(),
                found: points.ncols(),
            });
        }
        Ok(match &self.normalization {
            Some(n) => (&points - &n.in_mean) / &n.in_scale,
            None => points.to_owned(),
        })
    }

    fn denormalize_output(&self, mut out: Array2<f64>) -> Array2<f64> {
        if let Some(n) = &self.normalization {
            out *= &n.out_scale;
            out += &n.out_mean;
        }
        out
    }

    /// Map every row of `points`.
    pub fn apply(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.normalize_input(points)?;
        Ok(self.denormalize_output(self.mlp.predict(z.view())?))
    }

    fn forward(&self, points: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let z = self.normalize_input(points)?;
        let (out, cache) = self.mlp.forward(z.view())?;
        Ok((self.denormalize_output(out), cache))
    }

    /// Parameter gradient from the gradient w.r.t. mapped outputs.
    fn backward(&self, cache: &ForwardCache, mut out_grad: Array2<f64>) -> Result<MlpParams> {
        if let Some(n) = &self.normalization {
            out_grad *= &n.out_scale;
        }
        Ok(self.mlp.backward(cache, out_grad.view())?.0)
    }
}

/// Row-wise application of `f`.
pub fn apply_map(f: &MongeMap, points: ArrayView2<f64>) -> Result<Array2<f64>> {
    f.apply(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapTrainConfig {
    pub batch_size: usize,
    /// Adam step size.
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub projection_cost: ProjectionCost,
    pub hidden: Vec<usize>,
    pub output_activation: Activation,
    pub normalize: bool,
    pub log_every: usize,
    /// Fraction of the final iterations over which parameters are averaged;
    /// 0 returns the last iterate.
    pub average_tail: f64,
    /// After training, shift the output so that the mean of `f#μ` equals the
    /// mean of `ν`, as it does for every barycentric projection. Identity
    /// head only.
    pub recenter: bool,
}

impl Default for MapTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-3,
            iterations: 5000,
            seed: 0,
            projection_cost: ProjectionCost::SquaredEuclidean,
            hidden: vec![200, 500],
            output_activation: Activation::Identity,
            normalize: true,
            log_every: 500,
            average_tail: 0.0,
            recenter: false,
        }
    }
}

impl MapTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(OtError::InvalidInput("batch_size and iterations must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(OtError::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.average_tail) {
            return Err(OtError::InvalidInput(format!(
                "average_tail must lie in [0, 1), got {}",
                self.average_tail
            )));
        }
        if matches!(self.output_activation, Activation::Relu) {
            return Err(OtError::InvalidInput("map output activation must be identity or tanh".into()));
        }
        if self.recenter && self.output_activation != Activation::Identity {
            return Err(OtError::InvalidInput("recentering needs an identity output head".into()));
        }
        Ok(())
    }
}

/// `(1/(p q)) Σ_ij w_ij d(t_j, f(s_i))` and its parameter gradient, where
/// `s` are the map inputs and `t` the targets.
pub fn weighted_projection_loss(
    f: &MongeMap,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    weights: ArrayView2<f64>,
    cost: ProjectionCost,
) -> Result<(f64, MlpParams)> {
    let (p, q) = weights.dim();
    if inputs.nrows() != p || targets.nrows() != q {
        return Err(OtError::DimensionMismatch {
            expected: p,
            found: inputs.nrows(),
        });
    }
    if targets.ncols() != f.dim() {
        return Err(OtError::DimensionMismatch {
            expected: f.dim(),
            found: targets.ncols(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(OtError::NonFinite("non-finite plan density in the projection loss".into()));
    }
    let scale = 1.0 / (p * q) as f64;
    let (fx, cache) = f.forward(inputs)?;
    let (loss, grad) = match cost {
        ProjectionCost::SquaredEuclidean => {
            // Σ_j w_ij ‖t_j − f_i‖² = W_i ‖f_i‖² − 2 f_i·(w t)_i + Σ_j w_ij ‖t_j‖²
            let row_mass = weights.sum_axis(Axis(1));
            let wt = weights.dot(&targets);
            let t_sq = targets.map_axis(Axis(1), |r| r.dot(&r));
            let mut loss = weights.dot(&t_sq).sum();
            let mut grad = Array2::zeros(fx.dim());
            for i in 0..p {
                let fi = fx.row(i);
                loss += row_mass[i] * fi.dot(&fi) - 2.0 * fi.dot(&wt.row(i));
                let g = (&fi * row_mass[i] - &wt.row(i)) * (2.0 * scale);
                grad.row_mut(i).assign(&g);
            }
            (loss.max(0.0) * scale, grad)
        }
        ProjectionCost::Euclidean => {
            let mut loss = 0.0;
            let mut grad = Array2::zeros(fx.dim());
            for i in 0..p {
                let fi = fx.row(i);
                let mut gi = Array1::zeros(fi.len());
                for j in 0..q {
                    let w = weights[[i, j]];
                    if w == 0.0 {
                        continue;
                    }
                    let diff = &fi - &targets.row(j);
                    let norm = diff.dot(&diff).sqrt();
                    loss += w * norm;
                    if norm > 0.0 {
                        gi.scaled_add(w / norm, &diff);
                    }
                }
                grad.row_mut(i).assign(&(gi * scale));
            }
            (loss * scale, grad)
        }
    };
    if !loss.is_finite() {
        return Err(OtError::NonFinite("projection loss is non-finite".into()));
    }
    let params_grad = f.backward(&cache, grad)?;
    Ok((loss, params_grad))
}

/// Projection loss on one pair of batches with `H_ε` from frozen potentials.
#[allow(clippy::too_many_arguments)]
pub fn map_loss_batch(
    f: &MongeMap,
    bx: &Batch,
    by: &Batch,
    u: &DualPotential,
    v: &DualPotential,
    cost: &CostFn,
    reg: &Regularization,
    projection: ProjectionCost,
) -> Result<(f64, MlpParams)> {
    let h = batch_density(bx, by, u, v, cost, reg)?;
    weighted_projection_loss(f, bx.points.view(), by.points.view(), h.view(), projection)
}

fn batch_density(
    bx: &Batch,
    by: &Batch,
    u: &DualPotential,
    v: &DualPotential,
    cost: &CostFn,
    reg: &Regularization,
) -> Result<Array2<f64>> {
    let density = PlanDensity { u, v, cost, reg: *reg };
    let h = density.matrix(
        bx.points.view(),
        bx.indices.as_deref(),
        by.points.view(),
        by.indices.as_deref(),
    )?;
    if h.iter().any(|w| !w.is_finite()) {
        return Err(OtError::NonFinite("non-finite plan density on a batch".into()));
    }
    Ok(h)
}

/// Fit `f: μ → ν`.
pub fn train_map(
    mu: &MeasureSource,
    nu: &MeasureSource,
    u: &DualPotential,
    v: &DualPotential,
    cost: &CostFn,
    reg: &Regularization,
    cfg: &MapTrainConfig,
) -> Result<(MongeMap, TrainTrace)> {
    train(mu, nu, u, v, cost, reg, cfg, false)
}

/// Fit the reverse map `g: ν → μ`.
pub fn train_reverse_map(
    mu: &MeasureSource,
    nu: &MeasureSource,
    u: &DualPotential,
    v: &DualPotential,
    cost: &CostFn,
    reg: &Regularization,
    cfg: &MapTrainConfig,
) -> Result<(MongeMap, TrainTrace)> {
    train(mu, nu, u, v, cost, reg, cfg, true)
}

/// Sample used to fit the normalization.
const NORMALIZATION_SAMPLE: usize = 4096;
/// Monte-Carlo sample for means of non-discrete measures.
const MEAN_SAMPLE: usize = 65_536;

/// Mean of `f#src` (or of `src` itself), exact on discrete supports.
fn pushforward_mean<R: Rng + ?Sized>(src: &MeasureSource, f: Option<&MongeMap>, rng: &mut R) -> Result<Array1<f64>> {
    let (points, weights) = match src.as_discrete() {
        Some(m) => (m.points().clone(), m.weights().clone()),
        None => (sample_batch(src, MEAN_SAMPLE, rng)?.points, Array1::from_elem(MEAN_SAMPLE, 1.0 / MEAN_SAMPLE as f64)),
    };
    let mapped = match f {
        Some(f) => f.apply(points.view())?,
        None => points,
    };
    Ok(mapped.t().dot(&weights))
}

#[allow(clippy::too_many_arguments)]
fn train(
    mu: &MeasureSource,
    nu: &MeasureSource,
    u: &DualPotential,
    v: &DualPotential,
    cost: &CostFn,
    reg: &Regularization,
    cfg: &MapTrainConfig,
    reverse: bool,
) -> Result<(MongeMap, TrainTrace)> {
    cfg.validate()?;
    let d = mu.dim();
    if nu.dim() != d {
        return Err(OtError::DimensionMismatch {
            expected: d,
            found: nu.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (from, to) = if reverse { (nu, mu) } else { (mu, nu) };
    let normalization = if cfg.normalize {
        let xs = sample_batch(from, NORMALIZATION_SAMPLE, &mut rng)?;
        let ys = sample_batch(to, NORMALIZATION_SAMPLE, &mut rng)?;
        Some(MapNormalization::fit(xs.points.view(), ys.points.view(), cfg.output_activation)?)
    } else {
        None
    };
    let spec = MlpSpec::with_hidden(d, &cfg.hidden, d, cfg.output_activation)?;
    let mut map = MongeMap::new(Mlp::new(spec, cfg.seed.wrapping_add(17))?, normalization)?;
    let mut adam = AdamState::new(&map.mlp.params);

    let tail_start = ((1.0 - cfg.average_tail) * cfg.iterations as f64).floor() as usize;
    let mut average = (cfg.average_tail > 0.0).then(|| map.mlp.params.zeros_like());
    let mut averaged = 0usize;

    let mut trace = TrainTrace::default();
    let mut elapsed = 0.0f64;
    let mut window = (0.0f64, 0usize);
    for it in 1..=cfg.iterations {
        let t0 = Instant::now();
        let bx = sample_batch(mu, cfg.batch_size, &mut rng)?;
        let by = sample_batch(nu, cfg.batch_size, &mut rng)?;
        let h = batch_density(&bx, &by, u, v, cost, reg)?;
        let (loss, grads) = if reverse {
            let ht = h.t();
            weighted_projection_loss(&map, by.points.view(), bx.points.view(), ht, cfg.projection_cost)?
        } else {
            weighted_projection_loss(&map, bx.points.view(), by.points.view(), h.view(), cfg.projection_cost)?
        };
        adam_step(&mut map.mlp.params, &grads, &mut adam, cfg.learning_rate)?;
        if let Some(avg) = average.as_mut().filter(|_| it > tail_start) {
            averaged += 1;
            let w = 1.0 / averaged as f64;
            for (a, p) in avg.values_mut().zip(map.mlp.params.values()) {
                *a += w * (p - *a);
            }
        }
        elapsed += t0.elapsed().as_secs_f64() * 1e3;

        window.0 += loss;
        window.1 += 1;
        if it == cfg.iterations || (cfg.log_every > 0 && it % cfg.log_every == 0) {
            trace.push(it, elapsed, window.0 / window.1 as f64);
            window = (0.0, 0);
        }
    }
    if let Some(avg) = average.filter(|_| averaged > 0) {
        map.mlp.params = avg;
    }
    if cfg.recenter {
        let shift = pushforward_mean(to, None, &mut rng)? - pushforward_mean(from, Some(&map), &mut rng)?;
        match map.normalization.as_mut() {
            Some(n) => n.out_mean += &shift,
            None => {
                let last = map.mlp.params.layers.last_mut().expect("at least one layer");
                last.bias += &shift;
            }
        }
    }
    if !map.mlp.params.is_finite() {
        return Err(OtError::NonFinite("map parameters diverged".into()));
    }
    Ok((map, trace))
}
