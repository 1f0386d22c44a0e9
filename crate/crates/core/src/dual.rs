//! Stochastic ascent on the regularized OT dual
//!
//! `sup_{u,v} E_{μ×ν}[u(X) + v(Y) + F_ε(u(X), v(Y))]`
//!
//! for any pairing of discrete and continuous marginals. A potential on a
//! discrete support is a plain vector updated by SGD; a potential on a
//! continuous measure is a small ReLU network trained with Adam.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measures::{cost_matrix, sample_batch, Batch, CostFn, DiscreteMeasure, MeasureSource};
use crate::nn::{adam_step, Activation, AdamState, Mlp, MlpSpec};
use crate::{OtError, Result};

/// Exponents `s/ε` above this are clamped in the entropic penalty.
pub const EXP_CLAMP: f64 = 30.0;

/// Above this many support pairs the dual objective is estimated by sampling.
pub const EXACT_PAIR_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    Entropy,
    L2,
}

impl std::fmt::Display for RegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegKind::Entropy => "entropy",
            RegKind::L2 => "l2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub kind: RegKind,
    pub epsilon: f64,
}

impl Regularization {
    pub fn new(kind: RegKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(OtError::InvalidInput(format!(
                "regularization strength must be positive, got {epsilon}"
            )));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn entropy(epsilon: f64) -> Result<Self> {
        Self::new(RegKind::Entropy, epsilon)
    }

    pub fn l2(epsilon: f64) -> Result<Self> {
        Self::new(RegKind::L2, epsilon)
    }

    /// Whether evaluating the penalty at `s` hits the exponent clamp.
    #[inline]
    pub fn clamps(&self, s: f64) -> bool {
        self.kind == RegKind::Entropy && s / self.epsilon > EXP_CLAMP
    }
}

#[inline]
pub(crate) fn clamped_exp(s: f64, eps: f64) -> f64 {
    (s / eps).min(EXP_CLAMP).exp()
}

/// Smooth penalty replacing the constraint `u + v ≤ c`, at `s = u + v − c`.
#[inline]
pub fn f_eps(reg: &Regularization, s: f64) -> f64 {
    let eps = reg.epsilon;
    match reg.kind {
        RegKind::Entropy => -eps * clamped_exp(s, eps),
        RegKind::L2 => {
            let sp = s.max(0.0);
            -sp * sp / (4.0 * eps)
        }
    }
}

/// Derivative of [`f_eps`] in `s` (equivalently in `u` or in `v`).
#[inline]
pub fn f_eps_partial(reg: &Regularization, s: f64) -> f64 {
    let eps = reg.epsilon;
    match reg.kind {
        RegKind::Entropy => -clamped_exp(s, eps),
        RegKind::L2 => -s.max(0.0) / (2.0 * eps),
    }
}

/// A dual variable: a vector over a discrete support or a scalar network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualPotential {
    Vector(Array1<f64>),
    Network(Mlp),
}

impl DualPotential {
    /// Network potential `d → hidden… → 1` whose output starts at zero.
    pub fn network(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let spec = MlpSpec::with_hidden(dim, hidden, 1, Activation::Identity)?;
        let mut net = Mlp::new(spec, seed)?;
        let last = net.params.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        Ok(DualPotential::Network(net))
    }

    /// Zero vector on a discrete support, zero-output network otherwise.
    pub fn initial_for(src: &MeasureSource, hidden: &[usize], seed: u64) -> Result<Self> {
        match src {
            MeasureSource::Discrete(m) => Ok(DualPotential::Vector(Array1::zeros(m.len()))),
            other => Self::network(other.dim(), hidden, seed),
        }
    }

    pub fn eval(&self, xb: ArrayView2<f64>, indices: Option<&[usize]>) -> Result<Array1<f64>> {
        match self {
            DualPotential::Vector(values) => {
                let idx = indices.ok_or_else(|| {
                    OtError::InvalidInput("vector potentials need support indices".into())
                })?;
                if idx.len() != xb.nrows() {
                    return Err(OtError::DimensionMismatch {
                        expected: xb.nrows(),
                        found: idx.len(),
                    });
                }
                idx.iter()
                    .map(|&i| {
                        values.get(i).copied().ok_or_else(|| {
                            OtError::InvalidInput(format!(
                                "support index {i} out of range for potential of length {}",
                                values.len()
                            ))
                        })
                    })
                    .collect()
            }
            DualPotential::Network(net) => Ok(net.predict(xb)?.column(0).to_owned()),
        }
    }

    /// Values at every atom of a discrete support.
    pub fn on_support(&self, m: &DiscreteMeasure) -> Result<Array1<f64>> {
        match self {
            DualPotential::Vector(values) => {
                if values.len() != m.len() {
                    return Err(OtError::DimensionMismatch {
                        expected: m.len(),
                        found: values.len(),
                    });
                }
                Ok(values.clone())
            }
            DualPotential::Network(net) => Ok(net.predict(m.points().view())?.column(0).to_owned()),
        }
    }

    /// Values at the rows of `batch`, using indices for vector potentials.
    pub fn on_batch(&self, batch: &Batch) -> Result<Array1<f64>> {
        self.eval(batch.points.view(), batch.indices.as_deref())
    }

    pub fn as_vector(&self) -> Option<&Array1<f64>> {
        match self {
            DualPotential::Vector(v) => Some(v),
            DualPotential::Network(_) => None,
        }
    }
}

/// Evaluate `u` row-wise on `xb`.
pub fn potential_eval(u: &DualPotential, xb: ArrayView2<f64>, indices: Option<&[usize]>) -> Result<Array1<f64>> {
    u.eval(xb, indices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualSolverConfig {
    pub batch_size: usize,
    /// Plain SGD step for vector potentials.
    pub learning_rate: f64,
    /// Adam step for network potentials.
    pub network_learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Objective evaluation period in iterations; 0 records only the end.
    pub log_every: usize,
    /// Hidden widths of network potentials.
    pub network_hidden: Vec<usize>,
    /// Monte-Carlo evaluation budget when the exact sum is unavailable.
    pub eval_batches: usize,
    pub eval_batch_size: usize,
    /// Fraction of the final iterations over which vector iterates are
    /// averaged; 0 returns the last iterate.
    pub average_tail: f64,
}

impl Default for DualSolverConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1.0,
            network_learning_rate: 1e-3,
            iterations: 10_000,
            seed: 0,
            log_every: 1000,
            network_hidden: vec![1024, 1024],
            eval_batches: 20,
            eval_batch_size: 500,
            average_tail: 0.0,
        }
    }
}

impl DualSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(OtError::InvalidInput("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.network_learning_rate >= 0.0) {
            return Err(OtError::InvalidInput("learning rates must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.average_tail) {
            return Err(OtError::InvalidInput("average_tail must lie in [0, 1)".into()));
        }
        if self.eval_batches == 0 || self.eval_batch_size == 0 {
            return Err(OtError::InvalidInput("evaluation budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub wall_ms: f64,
    pub objective: f64,
}

/// Objective estimates along a run. `wall_ms` counts optimisation time only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn push(&mut self, iteration: usize, wall_ms: f64, objective: f64) {
        if let Some(last) = self.records.last() {
            assert!(iteration > last.iteration, "trace iterations must increase");
        }
        self.records.push(TraceRecord {
            iteration,
            wall_ms,
            objective,
        });
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First wall-clock time at which the objective reaches `level`.
    pub fn time_to_reach(&self, level: f64) -> Option<f64> {
        self.records.iter().find(|r| r.objective >= level).map(|r| r.wall_ms)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,wall_ms,objective")?;
        for r in &self.records {
            writeln!(w, "{},{},{}", r.iteration, r.wall_ms, r.objective)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut trace = TrainTrace::default();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let bad = || OtError::Parse {
                line: k + 1,
                msg: format!("malformed trace row `{line}`"),
            };
            if cells.len() != 3 {
                return Err(bad());
            }
            let it: usize = cells[0].trim().parse().map_err(|_| bad())?;
            let ms: f64 = cells[1].trim().parse().map_err(|_| bad())?;
            let obj: f64 = cells[2].trim().parse().map_err(|_| bad())?;
            if trace.last().is_some_and(|l| l.iteration >= it) {
                return Err(bad());
            }
            trace.push(it, ms, obj);
        }
        Ok(trace)
    }
}

/// Potentials together with their optimiser state.
#[derive(Debug, Clone)]
pub struct DualState {
    pub u: DualPotential,
    pub v: DualPotential,
    u_adam: Option<AdamState>,
    v_adam: Option<AdamState>,
    /// Number of penalty evaluations that hit [`EXP_CLAMP`].
    pub clamp_count: u64,
}

impl DualState {
    pub fn new(u: DualPotential, v: DualPotential) -> Self {
        let adam = |p: &DualPotential| match p {
            DualPotential::Network(net) => Some(AdamState::new(&net.params)),
            DualPotential::Vector(_) => None,
        };
        Self {
            u_adam: adam(&u),
            v_adam: adam(&v),
            u,
            v,
            clamp_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub vector: f64,
    pub network: f64,
}

impl StepSizes {
    pub fn uniform(lr: f64) -> Self {
        Self { vector: lr, network: lr }
    }
}

/// One ascent step on the batch objective
/// `(1/(p_x p_y)) Σ_ij [u(x_i) + v(y_j) + F_ε(u(x_i) + v(y_j) − c(x_i, y_j))]`.
pub fn sgd_step(
    state: &mut DualState,
    bx: &Batch,
    by: &Batch,
    cost: &CostFn,
    reg: &Regularization,
    lr: StepSizes,
) -> Result<()> {
    let c = cost_matrix(cost, bx.points.view(), by.points.view())?;
    let (u_cache, u_vals) = eval_for_grad(&state.u, bx)?;
    let (v_cache, v_vals) = eval_for_grad(&state.v, by)?;

    let (px, py) = (bx.len(), by.len());
    let norm = 1.0 / (px as f64 * py as f64);
    let mut gu = Array1::<f64>::zeros(px);
    let mut gv = Array1::<f64>::zeros(py);
    let mut max_s = 0.0f64;
    let mut clamps = 0u64;
    let vv = v_vals.as_slice().expect("contiguous");
    let gvs = gv.as_slice_mut().expect("contiguous");
    for (i, crow) in c.rows().into_iter().enumerate() {
        let crow = crow.to_slice().expect("contiguous");
        let ui = u_vals[i];
        let mut acc = 0.0;
        for ((&cij, &vj), gj) in crow.iter().zip(vv).zip(gvs.iter_mut()) {
            let s = ui + vj - cij;
            if reg.clamps(s) {
                clamps += 1;
            }
            max_s = max_s.max(s.abs());
            let d = 1.0 + f_eps_partial(reg, s);
            acc += d;
            *gj += d;
        }
        gu[i] = acc;
    }
    gu *= norm;
    gv *= norm;
    state.clamp_count += clamps;
    if gu.iter().chain(gv.iter()).any(|g| !g.is_finite()) {
        return Err(OtError::NonFinite(format!(
            "non-finite dual gradient (max |u + v - c| = {max_s:e})"
        )));
    }

    ascend(&mut state.u, state.u_adam.as_mut(), u_cache, bx, &gu, lr)?;
    ascend(&mut state.v, state.v_adam.as_mut(), v_cache, by, &gv, lr)?;
    Ok(())
}

fn eval_for_grad(p: &DualPotential, batch: &Batch) -> Result<(Option<crate::nn::ForwardCache>, Array1<f64>)> {
    match p {
        DualPotential::Vector(_) => Ok((None, p.on_batch(batch)?)),
        DualPotential::Network(net) => {
            let (out, cache) = net.forward(batch.points.view())?;
            Ok((Some(cache), out.column(0).to_owned()))
        }
    }
}

fn ascend(
    p: &mut DualPotential,
    adam: Option<&mut AdamState>,
    cache: Option<crate::nn::ForwardCache>,
    batch: &Batch,
    grad: &Array1<f64>,
    lr: StepSizes,
) -> Result<()> {
    match p {
        DualPotential::Vector(values) => {
            let idx = batch.indices.as_ref().expect("checked by eval");
            for (&i, g) in idx.iter().zip(grad.iter()) {
                values[i] += lr.vector * g;
            }
            Ok(())
        }
        DualPotential::Network(net) => {
            let cache = cache.expect("network forward cache");
            // Adam descends, so feed the negated ascent direction.
            let out_grad = grad.mapv(|g| -g).insert_axis(ndarray::Axis(1));
            let (grads, _) = net.backward(&cache, out_grad.view())?;
            let state = adam.expect("Adam state for network potential");
            adam_step(&mut net.params, &grads, state, lr.network)
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub u: DualPotential,
    pub v: DualPotential,
    pub trace: TrainTrace,
    pub clamp_count: u64,
}

/// Run stochastic dual ascent from zero potentials.
pub fn solve_dual(
    mu: &MeasureSource,
    nu: &MeasureSource,
    cost: &CostFn,
    reg: &Regularization,
    cfg: &DualSolverConfig,
) -> Result<DualSolution> {
    let u = DualPotential::initial_for(mu, &cfg.network_hidden, cfg.seed.wrapping_add(1))?;
    let v = DualPotential::initial_for(nu, &cfg.network_hidden, cfg.seed.wrapping_add(2))?;
    solve_dual_from(DualState::new(u, v), mu, nu, cost, reg, cfg)
}

/// Run stochastic dual ascent from given potentials.
pub fn solve_dual_from(
    mut state: DualState,
    mu: &MeasureSource,
    nu: &MeasureSource,
    cost: &CostFn,
    reg: &Regularization,
    cfg: &DualSolverConfig,
) -> Result<DualSolution> {
    cfg.validate()?;
    if mu.dim() != nu.dim() && matches!(cost, CostFn::SquaredEuclidean | CostFn::Euclidean) {
        return Err(OtError::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    check_potential(&state.u, mu)?;
    check_potential(&state.v, nu)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr = StepSizes {
        vector: cfg.learning_rate,
        network: cfg.network_learning_rate,
    };
    let eval_seed = cfg.seed ^ 0x5eed_0b1e;
    let tail_start = if cfg.average_tail > 0.0 {
        ((1.0 - cfg.average_tail) * cfg.iterations as f64).floor() as usize
    } else {
        usize::MAX
    };
    let mut avg: Option<(Array1<f64>, Array1<f64>, usize)> = None;

    let mut trace = TrainTrace::default();
    let mut elapsed = 0.0f64;
    for it in 1..=cfg.iterations {
        let t0 = Instant::now();
        let bx = sample_batch(mu, cfg.batch_size, &mut rng)?;
        let by = sample_batch(nu, cfg.batch_size, &mut rng)?;
        sgd_step(&mut state, &bx, &by, cost, reg, lr)?;
        if it > tail_start {
            accumulate_average(&mut avg, &state);
        }
        elapsed += t0.elapsed().as_secs_f64() * 1e3;

        let log_now = it == cfg.iterations || (cfg.log_every > 0 && it % cfg.log_every == 0);
        if log_now {
            let (u, v) = averaged_or_current(&state, &avg);
            let obj = dual_objective_estimate(
                &u,
                &v,
                mu,
                nu,
                cost,
                reg,
                cfg.eval_batches,
                cfg.eval_batch_size,
                eval_seed,
            )?;
            if !obj.is_finite() {
                return Err(OtError::NonFinite(format!(
                    "dual objective became non-finite at iteration {it}"
                )));
            }
            trace.push(it, elapsed, obj);
        }
    }
    let (u, v) = averaged_or_current(&state, &avg);
    Ok(DualSolution {
        u,
        v,
        trace,
        clamp_count: state.clamp_count,
    })
}

fn check_potential(p: &DualPotential, src: &MeasureSource) -> Result<()> {
    match (p, src) {
        (DualPotential::Vector(v), MeasureSource::Discrete(m)) if v.len() == m.len() => Ok(()),
        (DualPotential::Vector(v), MeasureSource::Discrete(m)) => Err(OtError::DimensionMismatch {
            expected: m.len(),
            found: v.len(),
        }),
        (DualPotential::Vector(_), _) => Err(OtError::InvalidInput(
            "vector potentials need a discrete measure".into(),
        )),
        (DualPotential::Network(net), s) if net.input_dim() == s.dim() && net.output_dim() == 1 => Ok(()),
        (DualPotential::Network(net), s) => Err(OtError::DimensionMismatch {
            expected: s.dim(),
            found: net.input_dim(),
        }),
    }
}

fn accumulate_average(avg: &mut Option<(Array1<f64>, Array1<f64>, usize)>, state: &DualState) {
    let (DualPotential::Vector(u), DualPotential::Vector(v)) = (&state.u, &state.v) else {
        return;
    };
    match avg {
        None => *avg = Some((u.clone(), v.clone(), 1)),
        Some((au, av, k)) => {
            *k += 1;
            let w = 1.0 / *k as f64;
            au.zip_mut_with(u, |a, &x| *a += w * (x - *a));
            av.zip_mut_with(v, |a, &x| *a += w * (x - *a));
        }
    }
}

fn averaged_or_current(
    state: &DualState,
    avg: &Option<(Array1<f64>, Array1<f64>, usize)>,
) -> (DualPotential, DualPotential) {
    match avg {
        Some((u, v, _)) => (DualPotential::Vector(u.clone()), DualPotential::Vector(v.clone())),
        None => (state.u.clone(), state.v.clone()),
    }
}

/// Exact value of the dual objective for two discrete measures:
/// `Σ a_i u_i + Σ b_j v_j + Σ_ij a_i b_j F_ε(u_i + v_j − c_ij)`.
pub fn dual_objective_exact(
    u: &Array1<f64>,
    v: &Array1<f64>,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostFn,
    reg: &Regularization,
) -> Result<f64> {
    if u.len() != mu.len() || v.len() != nu.len() {
        return Err(OtError::DimensionMismatch {
            expected: mu.len(),
            found: u.len(),
        });
    }
    let (a, b) = (mu.weights(), nu.weights());
    let linear = a.dot(u) + b.dot(v);
    let (xs, ys) = (mu.points(), nu.points());
    let rows: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let x = xs.row(i);
            let mut acc = 0.0;
            for j in 0..nu.len() {
                let s = u[i] + v[j] - cost.eval(x, ys.row(j));
                acc += b[j] * f_eps(reg, s);
            }
            a[i] * acc
        })
        .collect();
    Ok(linear + rows.iter().sum::<f64>())
}

/// Monte-Carlo estimate of the dual objective with its standard error,
/// computed from `batches` independent `p × p` pair blocks.
#[allow(clippy::too_many_arguments)]
pub fn dual_objective_monte_carlo(
    u: &DualPotential,
    v: &DualPotential,
    mu: &MeasureSource,
    nu: &MeasureSource,
    cost: &CostFn,
    reg: &Regularization,
    batches: usize,
    p: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if batches == 0 || p == 0 {
        return Err(OtError::InvalidInput("empty evaluation budget".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let bx = sample_batch(mu, p, &mut rng)?;
        let by = sample_batch(nu, p, &mut rng)?;
        let uv = u.on_batch(&bx)?;
        let vv = v.on_batch(&by)?;
        let c = cost_matrix(cost, bx.points.view(), by.points.view())?;
        let mut acc = 0.0;
        for i in 0..p {
            for j in 0..p {
                acc += uv[i] + vv[j] + f_eps(reg, uv[i] + vv[j] - c[[i, j]]);
            }
        }
        means.push(acc / (p * p) as f64);
    }
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let stderr = if means.len() > 1 {
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        f64::INFINITY
    };
    Ok((mean, stderr))
}

/// Dual objective: exact for small discrete–discrete problems, otherwise a
/// Monte-Carlo average over `eval_batches × p²` pairs. Deterministic in `seed`.
#[allow(clippy::too_many_arguments)]
pub fn dual_objective_estimate(
    u: &DualPotential,
    v: &DualPotential,
    mu: &MeasureSource,
    nu: &MeasureSource,
    cost: &CostFn,
    reg: &Regularization,
    eval_batches: usize,
    p: usize,
    seed: u64,
) -> Result<f64> {
    if let (MeasureSource::Discrete(m), MeasureSource::Discrete(n)) = (mu, nu) {
        if m.len().saturating_mul(n.len()) <= EXACT_PAIR_LIMIT {
            let uv = u.on_support(m)?;
            let vv = v.on_support(n)?;
            return dual_objective_exact(&uv, &vv, m, n, cost, reg);
        }
    }
    dual_objective_monte_carlo(u, v, mu, nu, cost, reg, eval_batches, p, seed).map(|(m, _)| m)
}

/// Dense cost matrix between two discrete supports.
pub fn support_costs(cost: &CostFn, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Array2<f64>> {
    cost_matrix(cost, mu.points().view(), nu.points().view())
}
