//! End-to-end acceptance run: one `[PASS]` / `[FAIL]` line per criterion,
//! then a single assertion over all of them.
//!
//! Reference values are recomputed here from first principles (closed forms,
//! brute force, a Hungarian solver, direct sums) rather than read back from
//! the pipelines under test.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{array, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochot::baselines::{exact_ot_simplex, sinkhorn};
use stochot::dual::{
    dual_objective_exact, f_eps, f_eps_partial, DualPotential, DualSolverConfig, RegKind, Regularization,
};
use stochot::map_learn::{MapTrainConfig, MongeMap};
use stochot::measures::{sample_batch, BlobConfig, CostFn, DiscreteMeasure, GaussianMeasure, MeasureSource};
use stochot::nn::{grad_check, Activation, Mlp, MlpSpec};
use stochot::plan::h_eps;
use stochot_cli::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Payload};
use stochot_cli::config::{
    uniform_points, BenchmarkConfig, ConvergeConfig, CostKind, DaConfig, GaussianStudy, GenerateConfig, HistogramSpec,
    MapCmdConfig, MeasureSpec, RegSpec, SolveConfig, Sweep, SweepStage,
};
use stochot_cli::pipelines::{
    cmd_benchmark, cmd_converge, cmd_da, cmd_generate, cmd_map_train, cmd_solve, gaussian_case, gaussian_epsilon_sweep,
    RunOptions,
};
use stochot_cli::CliResult;

type Verdict = (bool, String);

// ---------------------------------------------------------------- oracles

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn costs(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| {
        sq_dist(x.row(i).as_slice().unwrap(), y.row(j).as_slice().unwrap())
    })
}

/// `⟨π, C⟩ + ε Σ π (ln(π / ab) − 1)`.
fn entropic_primal(pi: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, eps: f64) -> f64 {
    let mut total = 0.0;
    for ((i, j), &p) in pi.indexed_iter() {
        total += p * c[[i, j]];
        if p > 0.0 {
            total += eps * p * ((p / (a[i] * b[j])).ln() - 1.0);
        }
    }
    total
}

fn entropic_dual(u: &Array1<f64>, v: &Array1<f64>, a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, eps: f64) -> f64 {
    let mut total = a.dot(u) + b.dot(v);
    for ((i, j), &cij) in c.indexed_iter() {
        total -= eps * a[i] * b[j] * ((u[i] + v[j] - cij) / eps).exp();
    }
    total
}

/// All permutations by Heap's algorithm; minimum of `Σ c[i, σ(i)] / n`.
fn brute_force_assignment(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut p: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / n as f64;
    let mut best = eval(&p);
    let mut ctr = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if ctr[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(ctr[i], i);
            }
            best = best.min(eval(&p));
            ctr[i] += 1;
            i = 0;
        } else {
            ctr[i] = 0;
            i += 1;
        }
    }
    best
}

/// O(n³) Hungarian algorithm with potentials; returns the optimal column of
/// every row.
fn hungarian(c: &Array2<f64>) -> Vec<usize> {
    let n = c.nrows();
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Square root of a 2×2 SPD matrix: `(M + √det I) / √(tr + 2√det)`.
fn sqrt2(m: &Array2<f64>) -> Array2<f64> {
    let s = (m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]]).sqrt();
    let t = (m[[0, 0]] + m[[1, 1]] + 2.0 * s).sqrt();
    (m + &(Array2::<f64>::eye(2) * s)) / t
}

fn inv2(m: &Array2<f64>) -> Array2<f64> {
    let det = m[[0, 0]] * m[[1, 1]] - m[[0, 1]] * m[[1, 0]];
    array![[m[[1, 1]], -m[[0, 1]]], [-m[[1, 0]], m[[0, 0]]]] / det
}

/// Monge map between centred 2-D Gaussians: `x ↦ A x + m`.
fn gaussian_map_2d(s1: &Array2<f64>, s2: &Array2<f64>) -> Array2<f64> {
    let r = sqrt2(s1);
    let ri = inv2(&r);
    let mid = sqrt2(&r.dot(s2).dot(&r));
    ri.dot(&mid).dot(&ri)
}

fn nearest_label(train: &Array2<f64>, labels: &[usize], q: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, row) in train.rows().into_iter().enumerate() {
        let d = sq_dist(row.as_slice().unwrap(), q);
        if d < best.0 {
            best = (d, labels[k]);
        }
    }
    best.1
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_table(path);
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse::<f64>().unwrap()).collect()
}

fn gaussian_spec(mean: &[f64], cov: [[f64; 2]; 2], samples: Option<usize>, seed: u64) -> MeasureSpec {
    MeasureSpec::Gaussian {
        mean: mean.to_vec(),
        cov: cov.iter().map(|r| r.to_vec()).collect(),
        samples,
        seed,
    }
}

fn draw(spec: &MeasureSpec) -> Array2<f64> {
    spec.build(Path::new(".")).unwrap().as_discrete().unwrap().points().clone()
}

fn opts() -> RunOptions {
    RunOptions::default()
}

// ---------------------------------------------------------------- criteria

/// Dual SGD against Sinkhorn on a 64×64 instance.
fn criterion_1(dir: &Path) -> CliResult<Verdict> {
    let eps = 0.1;
    let source = gaussian_spec(&[0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], Some(64), 1);
    let target = gaussian_spec(&[1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], Some(64), 2);
    let cfg = SolveConfig {
        source: source.clone(),
        target: target.clone(),
        regularization: RegSpec {
            kind: RegKind::Entropy,
            epsilon: Sweep::One(eps),
        },
        cost: CostKind::SquaredEuclidean,
        solver: DualSolverConfig {
            batch_size: 64,
            learning_rate: 0.3,
            iterations: 20_000,
            log_every: 5_000,
            average_tail: 0.5,
            ..Default::default()
        },
        reference_pairs: 0,
        out_dir: dir.join("c1"),
    };
    let t0 = Instant::now();
    cmd_solve(&cfg, dir, &opts())?;
    let secs = t0.elapsed().as_secs_f64();

    let (x, y) = (draw(&source), draw(&target));
    let c = costs(&x, &y);
    let w = Array1::from_elem(64, 1.0 / 64.0);
    let sk = sinkhorn(&w, &w, &c, eps, 200_000, 1e-12)?;
    let reference = entropic_primal(&sk.plan.matrix, &w, &w, &c, eps);

    let ckpt = load_checkpoint(&dir.join("c1/dual.json"))?;
    let Payload::DualPotentials {
        u: DualPotential::Vector(u),
        v: DualPotential::Vector(v),
    } = ckpt.payload
    else {
        return Ok((false, "checkpoint does not hold vector potentials".into()));
    };
    let objective = entropic_dual(&u, &v, &w, &w, &c, eps);
    let gap = (objective - reference).abs() / reference.abs();
    let pi = Array2::from_shape_fn((64, 64), |(i, j)| w[i] * w[j] * ((u[i] + v[j] - c[[i, j]]) / eps).exp());
    let row = pi.sum_axis(Axis(1)).iter().map(|r| (r - 1.0 / 64.0).abs()).sum::<f64>();
    let col = pi.sum_axis(Axis(0)).iter().map(|r| (r - 1.0 / 64.0).abs()).sum::<f64>();
    let pass = gap <= 1e-2 && row <= 5e-2 && col <= 5e-2 && secs <= 120.0;
    Ok((
        pass,
        format!("relative gap {gap:.2e}, marginal L1 ({row:.2e}, {col:.2e}), {secs:.1} s"),
    ))
}

/// Exact dual from Sinkhorn potentials equals the regularized primal.
fn criterion_2() -> CliResult<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..5 {
        let x = Array2::from_shape_simple_fn((16, 2), || rng.random::<f64>());
        let y = Array2::from_shape_simple_fn((16, 2), || rng.random::<f64>() + 0.5);
        let ra = Array1::from_shape_simple_fn(16, || rng.random::<f64>() + 0.1);
        let rb = Array1::from_shape_simple_fn(16, || rng.random::<f64>() + 0.1);
        let (a, b) = (&ra / ra.sum(), &rb / rb.sum());
        let eps = [0.05, 0.1, 0.3, 1.0, 2.0][k];
        let c = costs(&x, &y);
        let sk = sinkhorn(&a, &b, &c, eps, 1_000_000, 1e-13)?;
        let mu = DiscreteMeasure::new(x, a.clone())?;
        let nu = DiscreteMeasure::new(y, b.clone())?;
        let dual = dual_objective_exact(&sk.u, &sk.v, &mu, &nu, &CostFn::SquaredEuclidean, &Regularization::entropy(eps)?)?;
        let primal = entropic_primal(&sk.plan.matrix, &a, &b, &c, eps);
        worst = worst.max((dual - primal).abs());
    }
    Ok((worst <= 1e-6, format!("max |dual - primal| = {worst:.2e} over 5 instances")))
}

/// Entropic plans approach the unique exact plan as ε decreases.
fn criterion_3(dir: &Path) -> CliResult<Verdict> {
    let cfg = ConvergeConfig {
        plan_size: 16,
        plan_scale: 8.0,
        epsilons: vec![1.0, 0.3, 0.1, 0.03, 0.01],
        assignment_size: 6,
        assignment_epsilon: 0.01,
        gaussian: None,
        seed: 1,
        out_dir: dir.join("c3"),
    };
    let report = cmd_converge(&cfg, dir, &opts())?;

    // the exact plan against an independent Hungarian solve of the same instance
    let x = uniform_points(16, 2, 0.0, 8.0, 2);
    let y = uniform_points(16, 2, 0.0, 8.0, 3);
    let c = costs(&x, &y);
    let w = Array1::from_elem(16, 1.0 / 16.0);
    let exact = exact_ot_simplex(&w, &w, &c)?;
    let assign = hungarian(&c);
    let hungarian_cost = assign.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / 16.0;
    let cost_match = (exact.cost - hungarian_cost).abs() <= 1e-10;

    let path = dir.join("c3/plan_sweep.csv");
    let eps = column(&path, "epsilon");
    let gaps = column(&path, "plan_l1");
    let monotone = gaps.windows(2).all(|g| g[1] <= 1.1 * g[0]);
    let last = *gaps.last().unwrap();
    let unique = report.get("exact_plan_unique") == Some(1.0);

    let mut brute = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for n in 2..=7 {
        let cn = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
        let wn = Array1::from_elem(n, 1.0 / n as f64);
        brute = brute.max((exact_ot_simplex(&wn, &wn, &cn)?.cost - brute_force_assignment(&cn)).abs());
    }
    let pass = cost_match && monotone && last <= 1e-2 && unique && brute <= 1e-10 && eps.last() == Some(&0.01);
    let table: Vec<String> = eps.iter().zip(&gaps).map(|(e, g)| format!("{e}:{g:.1e}")).collect();
    Ok((
        pass,
        format!(
            "L1 gaps [{}], unique {unique}, simplex = Hungarian {cost_match}, simplex vs brute force {brute:.1e}",
            table.join(" ")
        ),
    ))
}

fn gaussian_study() -> GaussianStudy {
    GaussianStudy {
        mean: vec![2.0, 1.0],
        source_cov: vec![vec![1.0, 0.4], vec![0.4, 0.7]],
        target_cov: vec![vec![0.6, -0.3], vec![-0.3, 1.5]],
        sizes: vec![2048],
        epsilon: 0.05,
        sweep: vec![],
        held_out: 1000,
        moment_samples: 1_000_000,
        dual: DualSolverConfig {
            batch_size: 256,
            learning_rate: 1.0,
            iterations: 100_000,
            log_every: 0,
            average_tail: 0.5,
            ..Default::default()
        },
        map: MapTrainConfig {
            batch_size: 256,
            learning_rate: 1e-3,
            iterations: 10_000,
            hidden: vec![64, 64],
            log_every: 0,
            average_tail: 0.5,
            recenter: true,
            ..Default::default()
        },
    }
}

struct MapScore {
    rel_mse: f64,
    mean_err: f64,
    cov_err: f64,
}

/// Scores a learned map against the closed form on fresh draws.
fn score_gaussian_map(map: &MongeMap, study: &GaussianStudy) -> CliResult<MapScore> {
    let s1 = array![[1.0, 0.4], [0.4, 0.7]];
    let s2 = array![[0.6, -0.3], [-0.3, 1.5]];
    let m = array![2.0, 1.0];
    let a = gaussian_map_2d(&s1, &s2);
    let law = MeasureSource::from(GaussianMeasure::new(Array1::zeros(2), s1)?);
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let held = sample_batch(&law, study.held_out, &mut rng)?.points;
    let ideal = held.dot(&a.t()) + &m;
    let learned = map.apply(held.view())?;
    let k = held.nrows() as f64;
    let mse = (&learned - &ideal).mapv(|v| v * v).sum() / k;
    let disp = (&ideal - &held).mapv(|v| v * v).sum() / k;
    let fresh = sample_batch(&law, study.moment_samples, &mut rng)?.points;
    let push = map.apply(fresh.view())?;
    let pm = push.mean_axis(Axis(0)).unwrap();
    let centred = &push - &pm;
    let pc = centred.t().dot(&centred) / push.nrows() as f64;
    let fro = |x: &Array2<f64>| x.mapv(|v| v * v).sum().sqrt();
    Ok(MapScore {
        rel_mse: mse / disp,
        mean_err: (&pm - &m).mapv(|v| v * v).sum().sqrt() / m.dot(&m).sqrt(),
        cov_err: fro(&(&pc - &s2)) / fro(&s2),
    })
}

/// Learned map against the Gaussian closed form at ε = 0.05.
fn criterion_4() -> CliResult<Verdict> {
    let study = gaussian_study();
    let t0 = Instant::now();
    let case = gaussian_case(&study, 2048, 0.05, 0)?;
    let secs = t0.elapsed().as_secs_f64();
    let s = score_gaussian_map(&case.map, &study)?;
    let pass = s.rel_mse <= 0.05 && s.mean_err <= 0.10 && s.cov_err <= 0.15 && secs <= 600.0 && case.clamp_count == 0;
    Ok((
        pass,
        format!(
            "map MSE / displacement {:.4}, mean error {:.4}, covariance error {:.4}, {secs:.0} s",
            s.rel_mse, s.mean_err, s.cov_err
        ),
    ))
}

/// Pushforward moment errors along ε ∈ {1, 0.1, 0.01}.
fn criterion_5() -> CliResult<Verdict> {
    let stage = |epsilon, learning_rate, iterations| SweepStage {
        epsilon,
        learning_rate,
        iterations: Some(iterations),
    };
    let study = GaussianStudy {
        sweep: vec![stage(1.0, 20.0, 100_000), stage(0.1, 2.0, 100_000), stage(0.01, 0.05, 200_000)],
        ..gaussian_study()
    };
    let cases = gaussian_epsilon_sweep(&study, 2048, 0)?;
    let mut mean = Vec::new();
    let mut cov = Vec::new();
    for c in &cases {
        let s = score_gaussian_map(&c.map, &study)?;
        mean.push(s.mean_err);
        cov.push(s.cov_err);
    }
    let ok = |v: &[f64]| v.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let clamps: u64 = cases.iter().map(|c| c.clamp_count).sum();
    Ok((
        ok(&mean) && ok(&cov) && clamps == 0,
        format!("mean errors {mean:.4?}, covariance errors {cov:.4?}, clamps {clamps}"),
    ))
}

/// Per-iteration cost scaling and time-to-accuracy on n = 10⁴.
fn criterion_6(dir: &Path) -> CliResult<Verdict> {
    let cfg = BenchmarkConfig {
        sizes: vec![1_000, 10_000, 100_000],
        dim: 3,
        target_offset: 1.0,
        batch_size: 100,
        timing_iterations: 50,
        epsilon: 0.1,
        curve_size: 10_000,
        curve_batch_size: 100,
        dual_learning_rate: 10.0,
        semi_dual_learning_rate: 500.0,
        curve_iterations_dual: 5_000,
        curve_iterations_semi_dual: 200,
        curve_log_every_dual: 100,
        curve_log_every_semi_dual: 5,
        average_tail: 0.0,
        gap: 1e-2,
        seed: 6,
        out_dir: dir.join("c6"),
    };
    let report = cmd_benchmark(&cfg, dir, &opts())?;
    let timing = dir.join("c6/timing.csv");
    let dual = column(&timing, "dual_ms_per_iter");
    let semi = column(&timing, "semi_dual_ms_per_iter");
    let spread = dual.iter().copied().fold(0.0, f64::max) / dual.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = semi[2] / semi[0];
    let level = report.get("sinkhorn_objective").unwrap() - cfg.gap;
    let reach = |file: &str| {
        let p = dir.join("c6").join(file);
        let (t, o) = (column(&p, "wall_ms"), column(&p, "objective"));
        t.iter().zip(&o).find(|(_, o)| **o >= level).map(|(t, _)| *t)
    };
    let (td, ts) = (reach("curve_dual.csv"), reach("curve_semi_dual.csv"));
    let faster = match (td, ts) {
        (Some(d), Some(s)) => d < s,
        (Some(_), None) => true,
        _ => false,
    };
    Ok((
        spread < 2.0 && ratio >= 20.0 && faster,
        format!("dual time spread {spread:.2}, semi-dual ratio {ratio:.1}, time to gap: dual {td:?} ms, semi-dual {ts:?} ms"),
    ))
}

/// Domain adaptation on rotated and shifted blobs.
fn criterion_7(dir: &Path) -> CliResult<Verdict> {
    let blobs = BlobConfig {
        shift: vec![3.0, -2.0],
        rotation: std::f64::consts::FRAC_PI_6,
        ..BlobConfig::new(3, 100, 2)
    };
    let cfg = DaConfig {
        blobs: Some(blobs.clone()),
        source: None,
        target: None,
        seed: 11,
        entropy_epsilons: vec![1.0, 5.0],
        l2_epsilons: vec![10.0, 50.0],
        sinkhorn_epsilons: vec![1.0, 5.0],
        map_learning_rates: vec![1e-3, 1e-2],
        dual: DualSolverConfig {
            batch_size: 100,
            learning_rate: 5.0,
            iterations: 20_000,
            log_every: 0,
            average_tail: 0.5,
            ..Default::default()
        },
        map: MapTrainConfig {
            batch_size: 100,
            iterations: 3000,
            hidden: vec![64, 64],
            log_every: 0,
            ..Default::default()
        },
        out_dir: dir.join("c7"),
    };
    cmd_da(&cfg, dir, &opts())?;

    // source-only accuracy recomputed by brute-force 1-NN
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (src, tgt) = stochot::measures::make_blobs(&blobs, &mut rng)?;
    let (sl, tl) = (src.labels().unwrap(), tgt.labels().unwrap());
    let hits = tgt
        .points()
        .rows()
        .into_iter()
        .zip(tl)
        .filter(|(q, l)| nearest_label(src.points(), sl, q.as_slice().unwrap()) == **l)
        .count();
    let source_only = hits as f64 / tl.len() as f64;

    let (_, rows) = read_table(&dir.join("c7/grid.csv"));
    let best = |method: &str, reg: &str| {
        rows.iter()
            .filter(|r| r[0] == method && (reg.is_empty() || r[1] == reg))
            .filter_map(|r| r[4].parse::<f64>().ok().filter(|a| a.is_finite()))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let reported_source = best("source_only", "");
    let exact = best("bary_exact", "");
    // barycentric projections under the same regularization as each map
    let bary_e = best("bary_sinkhorn", "entropy").max(best("bary_dual", "entropy"));
    let bary_l = best("bary_dual", "l2");
    let (me, ml) = (best("monge_map", "entropy"), best("monge_map", "l2"));
    let pass = reported_source == source_only
        && me >= source_only + 0.15
        && ml >= source_only + 0.15
        && me >= bary_e - 0.02
        && ml >= bary_l - 0.02
        && bary_e.min(bary_l).min(exact) >= source_only;
    Ok((
        pass,
        format!(
            "source only {source_only:.3}, barycentric exact {exact:.3} / entropy {bary_e:.3} / L2 {bary_l:.3}, map entropy {me:.3} / L2 {ml:.3} (oracle selection)"
        ),
    ))
}

/// Gaussian to eight atoms with L2 regularization, then 10⁵ generated samples.
fn criterion_8(dir: &Path) -> CliResult<Verdict> {
    let source = gaussian_spec(&[0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], None, 0);
    let target = MeasureSpec::Circle {
        atoms: 8,
        radius: 4.0,
        center: None,
    };
    let reg = RegSpec {
        kind: RegKind::L2,
        epsilon: Sweep::One(1.0),
    };
    let solve = SolveConfig {
        source: source.clone(),
        target: target.clone(),
        regularization: reg.clone(),
        cost: CostKind::SquaredEuclidean,
        solver: DualSolverConfig {
            batch_size: 256,
            learning_rate: 0.5,
            network_learning_rate: 1e-3,
            iterations: 5000,
            network_hidden: vec![64, 64],
            log_every: 1000,
            ..Default::default()
        },
        reference_pairs: 0,
        out_dir: dir.join("c8/dual"),
    };
    cmd_solve(&solve, dir, &opts())?;
    let map = MapCmdConfig {
        source: source.clone(),
        target,
        regularization: reg,
        cost: CostKind::SquaredEuclidean,
        dual_checkpoint: dir.join("c8/dual/dual.json"),
        reverse: false,
        map: MapTrainConfig {
            batch_size: 256,
            iterations: 5000,
            hidden: vec![64, 64],
            log_every: 500,
            ..Default::default()
        },
        out_dir: dir.join("c8/map"),
    };
    cmd_map_train(&map, dir, &opts())?;
    let generate = GenerateConfig {
        map_checkpoint: dir.join("c8/map/map.json"),
        source,
        samples: 100_000,
        seed: 7,
        histogram: Some(HistogramSpec {
            bins: 64,
            range: Some([-6.0, 6.0, -6.0, 6.0]),
        }),
        atoms: None,
        out_dir: dir.join("c8/gen"),
    };
    cmd_generate(&generate, dir, &opts())?;

    let atoms: Vec<[f64; 2]> = (0..8)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 8.0;
            [4.0 * t.cos(), 4.0 * t.sin()]
        })
        .collect();
    let xs = column(&dir.join("c8/gen/samples.csv"), "x0");
    let ys = column(&dir.join("c8/gen/samples.csv"), "x1");
    let mut counts = [0usize; 8];
    for (x, y) in xs.iter().zip(&ys) {
        let mut best = (f64::INFINITY, 0);
        for (k, a) in atoms.iter().enumerate() {
            let d = sq_dist(a, &[*x, *y]);
            if d < best.0 {
                best = (d, k);
            }
        }
        counts[best.1] += 1;
    }
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / xs.len() as f64).collect();
    let mass: f64 = column(&dir.join("c8/gen/histogram.csv"), "mass").iter().sum();
    let in_band = shares.iter().all(|s| (1.0 / 16.0..=0.25).contains(s));
    Ok((
        xs.len() == 100_000 && in_band && (mass - 1.0).abs() <= 1e-9,
        format!("atom shares {shares:.4?}, histogram mass {mass:.12}"),
    ))
}

/// Property suites.
fn criterion_9(dir: &Path) -> CliResult<Verdict> {
    let mut notes = Vec::new();
    let mut pass = true;

    // backpropagation against central differences
    let mut worst_grad = 0.0f64;
    for seed in 0..5u64 {
        let spec = MlpSpec::with_hidden(3, &[7, 5], 2, Activation::Identity)?;
        let mlp = Mlp::new(spec, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Array2::from_shape_simple_fn((6, 3), || rng.random::<f64>() * 2.0 - 1.0);
        let r = Array2::from_shape_simple_fn((6, 2), || rng.random::<f64>() * 2.0 - 1.0);
        let loss = |m: &Mlp| (m.predict(x.view()).unwrap() * &r).sum();
        let (_, cache) = mlp.forward(x.view())?;
        let (grads, _) = mlp.backward(&cache, r.view())?;
        let rep = grad_check(&mlp, loss, &grads, 1e-5, 1e-5, usize::MAX, seed);
        worst_grad = worst_grad.max(rep.max_rel_error);
    }
    pass &= worst_grad <= 1e-5;
    notes.push(format!("grad check {worst_grad:.1e}"));

    // ∂F/∂u = −H and concavity of F
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_h = 0.0f64;
    let mut concave = true;
    for _ in 0..10_000 {
        let eps = 10f64.powf(rng.random_range(-2.0..1.0));
        let reg = if rng.random::<bool>() {
            Regularization::entropy(eps)?
        } else {
            Regularization::l2(eps)?
        };
        let (u, v, c) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..4.0));
        let s = u + v - c;
        if s / eps < 25.0 {
            let h = h_eps(&reg, u, v, c);
            worst_h = worst_h.max((f_eps_partial(&reg, s) + h).abs() / h.abs().max(1.0));
        }
        let (s1, s2, t) = (eps * rng.random_range(-20.0..20.0), eps * rng.random_range(-20.0..20.0), rng.random::<f64>());
        let mid = f_eps(&reg, t * s1 + (1.0 - t) * s2);
        let chord = t * f_eps(&reg, s1) + (1.0 - t) * f_eps(&reg, s2);
        concave &= mid >= chord - 1e-12 * chord.abs().max(1.0);
    }
    pass &= worst_h <= 1e-12 && concave;
    notes.push(format!("|dF + H| {worst_h:.1e}, concave {concave}"));

    // Sinkhorn marginals
    let mut worst_marg = 0.0f64;
    for k in 0..5 {
        let n = 8 + 4 * k;
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let y = Array2::from_shape_simple_fn((n + 3, 2), || rng.random::<f64>());
        let a = Array1::from_elem(n, 1.0 / n as f64);
        let b = Array1::from_elem(n + 3, 1.0 / (n + 3) as f64);
        let sk = sinkhorn(&a, &b, &costs(&x, &y), 0.05, 100_000, 1e-9)?;
        let rows = (&sk.plan.matrix.sum_axis(Axis(1)) - &a).mapv(f64::abs).sum();
        let cols = (&sk.plan.matrix.sum_axis(Axis(0)) - &b).mapv(f64::abs).sum();
        worst_marg = worst_marg.max(rows).max(cols);
    }
    pass &= worst_marg <= 1e-6;
    notes.push(format!("Sinkhorn marginals {worst_marg:.1e}"));

    // simplex against brute force on 20 instances
    let mut worst_lp = 0.0f64;
    for k in 0..20 {
        let n = 2 + k % 6;
        let c = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>() * 10.0);
        let w = Array1::from_elem(n, 1.0 / n as f64);
        worst_lp = worst_lp.max((exact_ot_simplex(&w, &w, &c)?.cost - brute_force_assignment(&c)).abs());
    }
    pass &= worst_lp <= 1e-10;
    notes.push(format!("simplex vs brute force {worst_lp:.1e}"));

    // checkpoint round trips
    let u = Array1::from_shape_simple_fn(50, || rng.random::<f64>() * 1e3 - 500.0);
    let v = Array1::from_shape_simple_fn(40, || rng.random::<f64>().powi(7));
    let meta = CheckpointMeta {
        regularization: Regularization::entropy(0.1)?,
        cost: CostKind::SquaredEuclidean,
        source_dim: 2,
        target_dim: 2,
        seed: 0,
        config: serde_json::Value::Null,
    };
    let path = dir.join("c9_dual.json");
    save_checkpoint(
        &path,
        &Checkpoint::new(
            meta.clone(),
            Payload::DualPotentials {
                u: DualPotential::Vector(u.clone()),
                v: DualPotential::Vector(v.clone()),
            },
        ),
    )?;
    let bitwise = match load_checkpoint(&path)?.payload {
        Payload::DualPotentials {
            u: DualPotential::Vector(bu),
            v: DualPotential::Vector(bv),
        } => bu.iter().chain(bv.iter()).zip(u.iter().chain(v.iter())).all(|(p, q)| p.to_bits() == q.to_bits()),
        _ => false,
    };
    let spec = MlpSpec::with_hidden(2, &[16, 16], 2, Activation::Tanh)?;
    let map = MongeMap::new(Mlp::new(spec, 3)?, None)?;
    let map_path = dir.join("c9_map.json");
    save_checkpoint(&map_path, &Checkpoint::new(meta, Payload::MongeMap { map: map.clone(), reverse: false }))?;
    let probe = Array2::from_shape_simple_fn((100, 2), || rng.random::<f64>() * 4.0 - 2.0);
    let same_map = match load_checkpoint(&map_path)?.payload {
        Payload::MongeMap { map: back, .. } => back.apply(probe.view())? == map.apply(probe.view())?,
        _ => false,
    };
    pass &= bitwise && same_map;
    notes.push(format!("checkpoints bitwise {bitwise}, map outputs identical {same_map}"));
    Ok((pass, notes.join(", ")))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let dir: PathBuf = tmp.path().to_path_buf();
    type Check<'a> = Box<dyn Fn() -> CliResult<Verdict> + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("dual SGD vs Sinkhorn, 64x64", Box::new(|| criterion_1(&dir))),
        ("strong duality from Sinkhorn potentials", Box::new(criterion_2)),
        ("entropic plans converge to the exact plan", Box::new(|| criterion_3(&dir))),
        ("Gaussian Monge map vs closed form", Box::new(criterion_4)),
        ("pushforward moments along decreasing epsilon", Box::new(criterion_5)),
        ("per-iteration cost and time to accuracy", Box::new(|| criterion_6(&dir))),
        ("domain adaptation on shifted blobs", Box::new(|| criterion_7(&dir))),
        ("generative demo, Gaussian to eight atoms", Box::new(|| criterion_8(&dir))),
        ("property suites", Box::new(|| criterion_9(&dir))),
    ];
    // `ACCEPTANCE_ONLY=1,4` restricts the run to the listed criteria
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    println!();
    for (k, (name, check)) in checks.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            println!("[SKIP] criterion {}: {name}", k + 1);
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let tag = if pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] criterion {}: {name}: {detail} ({:.0} s)",
            k + 1,
            t0.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
