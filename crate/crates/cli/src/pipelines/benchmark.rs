use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochot::baselines::{semi_dual_objective, semi_dual_step};
use stochot::dual::{dual_objective_exact, sgd_step, DualPotential, DualState, Regularization, StepSizes, TrainTrace};
use stochot::measures::{sample_batch, CostFn, DiscreteMeasure, MeasureSource};

use super::solve::sinkhorn_reference;
use super::{prepare_out, resolve, write_table, RunOptions};
use crate::config::{uniform_points, BenchmarkConfig};
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;

const WARMUP: usize = 3;

fn instance(n: usize, cfg: &BenchmarkConfig, seed: u64) -> CliResult<(DiscreteMeasure, DiscreteMeasure)> {
    let (dim, off) = (cfg.dim, cfg.target_offset);
    let mu = DiscreteMeasure::uniform(uniform_points(n, dim, 0.0, 1.0, seed.wrapping_add(1)))?;
    let nu = DiscreteMeasure::uniform(uniform_points(n, dim, off, 1.0 + off, seed.wrapping_add(2)))?;
    Ok((mu, nu))
}

/// Mean wall time in milliseconds of one dual SGD iteration, sampling included.
fn dual_iteration_ms(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &BenchmarkConfig, reg: &Regularization) -> CliResult<f64> {
    let (ms, ns) = (MeasureSource::from(mu.clone()), MeasureSource::from(nu.clone()));
    let mut state = DualState::new(
        DualPotential::Vector(Array1::zeros(mu.len())),
        DualPotential::Vector(Array1::zeros(nu.len())),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr = StepSizes::uniform(cfg.dual_learning_rate);
    let step = |state: &mut DualState, rng: &mut ChaCha8Rng| -> CliResult<()> {
        let bx = sample_batch(&ms, cfg.batch_size, rng)?;
        let by = sample_batch(&ns, cfg.batch_size, rng)?;
        sgd_step(state, &bx, &by, &CostFn::SquaredEuclidean, reg, lr)?;
        Ok(())
    };
    for _ in 0..WARMUP {
        step(&mut state, &mut rng)?;
    }
    let t0 = Instant::now();
    for _ in 0..cfg.timing_iterations {
        step(&mut state, &mut rng)?;
    }
    Ok(t0.elapsed().as_secs_f64() * 1e3 / cfg.timing_iterations as f64)
}

fn semi_dual_iteration_ms(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &BenchmarkConfig) -> CliResult<f64> {
    let ms = MeasureSource::from(mu.clone());
    let mut v = Array1::zeros(nu.len());
    let log_b = nu.weights().mapv(f64::ln);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cost = CostFn::SquaredEuclidean;
    let step = |v: &mut Array1<f64>, rng: &mut ChaCha8Rng| -> CliResult<()> {
        let b = sample_batch(&ms, cfg.batch_size, rng)?;
        semi_dual_step(v, b.points.view(), nu, &log_b, &cost, cfg.epsilon, cfg.semi_dual_learning_rate)?;
        Ok(())
    };
    for _ in 0..WARMUP {
        step(&mut v, &mut rng)?;
    }
    let t0 = Instant::now();
    for _ in 0..cfg.timing_iterations {
        step(&mut v, &mut rng)?;
    }
    Ok(t0.elapsed().as_secs_f64() * 1e3 / cfg.timing_iterations as f64)
}

/// Objective of the current iterate against optimisation wall time, starting
/// from the zero initialisation; the exact objective evaluation is excluded
/// from the clock.
fn dual_curve(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &BenchmarkConfig, reg: &Regularization) -> CliResult<TrainTrace> {
    let (ms, ns) = (MeasureSource::from(mu.clone()), MeasureSource::from(nu.clone()));
    let cost = CostFn::SquaredEuclidean;
    let mut state = DualState::new(
        DualPotential::Vector(Array1::zeros(mu.len())),
        DualPotential::Vector(Array1::zeros(nu.len())),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lr = StepSizes::uniform(cfg.dual_learning_rate);
    let mut trace = TrainTrace::default();
    trace.push(0, 0.0, dual_objective_exact(&Array1::zeros(mu.len()), &Array1::zeros(nu.len()), mu, nu, &cost, reg)?);
    let mut elapsed = 0.0;
    for it in 1..=cfg.curve_iterations_dual {
        let t0 = Instant::now();
        let bx = sample_batch(&ms, cfg.curve_batch_size, &mut rng)?;
        let by = sample_batch(&ns, cfg.curve_batch_size, &mut rng)?;
        sgd_step(&mut state, &bx, &by, &cost, reg, lr)?;
        elapsed += t0.elapsed().as_secs_f64() * 1e3;
        if it % cfg.curve_log_every_dual == 0 || it == cfg.curve_iterations_dual {
            let (DualPotential::Vector(u), DualPotential::Vector(v)) = (&state.u, &state.v) else {
                unreachable!("vector potentials")
            };
            trace.push(it, elapsed, dual_objective_exact(u, v, mu, nu, &cost, reg)?);
        }
    }
    Ok(trace)
}

fn semi_dual_curve(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &BenchmarkConfig) -> CliResult<TrainTrace> {
    let ms = MeasureSource::from(mu.clone());
    let cost = CostFn::SquaredEuclidean;
    let log_b = nu.weights().mapv(f64::ln);
    let mut v = Array1::zeros(nu.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = TrainTrace::default();
    trace.push(0, 0.0, semi_dual_objective(mu.points().view(), mu.weights().view(), &v, nu, &cost, cfg.epsilon));
    let mut elapsed = 0.0;
    for it in 1..=cfg.curve_iterations_semi_dual {
        let t0 = Instant::now();
        let b = sample_batch(&ms, cfg.curve_batch_size, &mut rng)?;
        semi_dual_step(&mut v, b.points.view(), nu, &log_b, &cost, cfg.epsilon, cfg.semi_dual_learning_rate)?;
        elapsed += t0.elapsed().as_secs_f64() * 1e3;
        if it % cfg.curve_log_every_semi_dual == 0 || it == cfg.curve_iterations_semi_dual {
            let obj = semi_dual_objective(mu.points().view(), mu.weights().view(), &v, nu, &cost, cfg.epsilon);
            trace.push(it, elapsed, obj);
        }
    }
    Ok(trace)
}

fn validate(cfg: &BenchmarkConfig) -> CliResult<()> {
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(CliError::config("sizes must be a nonempty list of positive sizes"));
    }
    let positive = [
        cfg.dim,
        cfg.batch_size,
        cfg.timing_iterations,
        cfg.curve_size,
        cfg.curve_batch_size,
        cfg.curve_iterations_dual,
        cfg.curve_iterations_semi_dual,
        cfg.curve_log_every_dual,
        cfg.curve_log_every_semi_dual,
    ];
    if positive.contains(&0) {
        return Err(CliError::config("benchmark sizes, batch sizes and iteration counts must be positive"));
    }
    if !(cfg.dual_learning_rate > 0.0 && cfg.semi_dual_learning_rate > 0.0 && cfg.gap >= 0.0) {
        return Err(CliError::config("learning rates must be positive and the gap nonnegative"));
    }
    if !cfg.target_offset.is_finite() {
        return Err(CliError::config("target_offset must be finite"));
    }
    Ok(())
}

/// Per-iteration timings over a size grid and objective-versus-time curves
/// of dual and semi-dual SGD on one instance. Wall-clock figures vary from
/// run to run by nature.
pub fn cmd_benchmark(cfg: &BenchmarkConfig, base: &Path, _opts: &RunOptions) -> CliResult<ExperimentReport> {
    validate(cfg)?;
    let reg = Regularization::entropy(cfg.epsilon)?;

    let mut timing = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let (mu, nu) = instance(n, cfg, cfg.seed)?;
        let dual = dual_iteration_ms(&mu, &nu, cfg, &reg)?;
        let semi = semi_dual_iteration_ms(&mu, &nu, cfg)?;
        timing.push((n, dual, semi));
    }

    let (mu, nu) = instance(cfg.curve_size, cfg, cfg.seed.wrapping_add(100))?;
    let reference = sinkhorn_reference(&mu, &nu, &CostFn::SquaredEuclidean, cfg.epsilon)?;
    let dual = dual_curve(&mu, &nu, cfg, &reg)?;
    let semi = semi_dual_curve(&mu, &nu, cfg)?;

    let out = resolve(base, &cfg.out_dir);
    prepare_out(&out)?;
    let mut report = ExperimentReport::new("benchmark", cfg);
    let rows: Vec<Vec<String>> = timing
        .iter()
        .map(|(n, d, s)| vec![n.to_string(), d.to_string(), s.to_string()])
        .collect();
    let timing_path = out.join("timing.csv");
    write_table(&timing_path, &["n", "dual_ms_per_iter", "semi_dual_ms_per_iter"], &rows)?;
    let dual_path = out.join("curve_dual.csv");
    let semi_path = out.join("curve_semi_dual.csv");
    dual.save_csv(&dual_path)?;
    semi.save_csv(&semi_path)?;
    report.files.extend([timing_path, dual_path, semi_path]);

    for (n, d, s) in &timing {
        report.metric(format!("dual_ms_per_iter[n={n}]"), *d);
        report.metric(format!("semi_dual_ms_per_iter[n={n}]"), *s);
    }
    let dual_times: Vec<f64> = timing.iter().map(|t| t.1).collect();
    let max = dual_times.iter().copied().fold(0.0, f64::max);
    let min = dual_times.iter().copied().fold(f64::INFINITY, f64::min);
    report.metric("dual_time_spread", max / min);
    let smallest = timing.iter().min_by_key(|t| t.0).expect("nonempty");
    let largest = timing.iter().max_by_key(|t| t.0).expect("nonempty");
    report.metric("semi_dual_time_ratio", largest.2 / smallest.2);

    let level = reference - cfg.gap;
    report.metric("sinkhorn_objective", reference);
    report.metric("dual_final_objective", dual.last().map_or(f64::NAN, |r| r.objective));
    report.metric("semi_dual_final_objective", semi.last().map_or(f64::NAN, |r| r.objective));
    match dual.time_to_reach(level) {
        Some(t) => report.metric("dual_ms_to_gap", t),
        None => report.notes.push("dual SGD never reached the Sinkhorn objective minus the gap".into()),
    }
    match semi.time_to_reach(level) {
        Some(t) => report.metric("semi_dual_ms_to_gap", t),
        None => report.notes.push("semi-dual SGD never reached the Sinkhorn objective minus the gap".into()),
    }
    report.save(&out)?;
    Ok(report)
}
