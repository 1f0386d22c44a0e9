use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochot::baselines::{
    exact_assignment_bruteforce, exact_ot_simplex, gaussian_monge_closed_form, sinkhorn_from, AffineMap, MAX_BRUTE_FORCE,
};
use stochot::dual::{
    solve_dual, solve_dual_from, support_costs, DualPotential, DualSolution, DualSolverConfig, DualState, Regularization,
};
use stochot::map_learn::{train_map, MongeMap};
use stochot::measures::{cost_matrix, sample_batch, CostFn, DiscreteMeasure, GaussianMeasure, MeasureSource};
use stochot::plan::{barycentric_projection_discrete, TransportPlan};

use super::{prepare_out, resolve, write_table, RunOptions};
use crate::config::{uniform_points, ConvergeConfig, GaussianStudy};
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;

const SINKHORN_MAX_ITERS: usize = 1_000_000;
const SINKHORN_TOL: f64 = 1e-6;
const MONOTONE_SLACK: f64 = 1.1;
const BRUTE_FORCE_INSTANCES: usize = 20;

/// Map quality of the learned Monge map against the Gaussian closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCase {
    pub n: usize,
    pub epsilon: f64,
    /// Mean squared deviation from the closed-form map on held-out points.
    pub map_mse: f64,
    /// Mean squared closed-form displacement on the same points.
    pub displacement: f64,
    /// `‖mean(f#μ) − m‖ / ‖m‖`.
    pub mean_error: f64,
    /// `‖cov(f#μ) − S2‖_F / ‖S2‖_F`.
    pub cov_error: f64,
    pub clamp_count: u64,
    pub map: MongeMap,
}

impl GaussianCase {
    pub fn relative_mse(&self) -> f64 {
        self.map_mse / self.displacement
    }
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn to_matrix(rows: &[Vec<f64>]) -> CliResult<Array2<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(CliError::config("covariances must be square"));
    }
    Ok(Array2::from_shape_fn((d, d), |(i, j)| rows[i][j]))
}

struct GaussianProblem {
    mu: MeasureSource,
    nu: MeasureSource,
    costs: Array2<f64>,
    truth: AffineMap,
    mean: Array1<f64>,
    target_cov: Array2<f64>,
    held: Array2<f64>,
    fresh: Array2<f64>,
}

impl GaussianProblem {
    fn new(study: &GaussianStudy, n: usize, seed: u64) -> CliResult<Self> {
        let m = Array1::from(study.mean.clone());
        let s1 = to_matrix(&study.source_cov)?;
        let s2 = to_matrix(&study.target_cov)?;
        let zero = Array1::zeros(m.len());
        let src_law = MeasureSource::from(GaussianMeasure::new(zero.clone(), s1.clone())?);
        let tgt_law = MeasureSource::from(GaussianMeasure::new(m.clone(), s2.clone())?);
        let draw = |law: &MeasureSource, k: usize, s: u64| -> CliResult<Array2<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            Ok(sample_batch(law, k, &mut rng)?.points)
        };
        let mu = DiscreteMeasure::uniform(draw(&src_law, n, seed.wrapping_add(1))?)?;
        let nu = DiscreteMeasure::uniform(draw(&tgt_law, n, seed.wrapping_add(2))?)?;
        Ok(Self {
            costs: support_costs(&CostFn::SquaredEuclidean, &mu, &nu)?,
            mu: mu.into(),
            nu: nu.into(),
            truth: gaussian_monge_closed_form(&zero, &s1, &m, &s2)?,
            held: draw(&src_law, study.held_out, seed.wrapping_add(99))?,
            fresh: draw(&src_law, study.moment_samples, seed.wrapping_add(98))?,
            mean: m,
            target_cov: s2,
        })
    }

    /// `u_i = min_j (c_ij − v_j)`.
    fn hard_c_transform(&self, v: &Array1<f64>) -> Array1<f64> {
        self.costs
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(v).map(|(c, v)| c - v).fold(f64::INFINITY, f64::min))
            .collect()
    }

    fn fit(&self, study: &GaussianStudy, epsilon: f64, sol: &DualSolution) -> CliResult<GaussianCase> {
        let reg = Regularization::entropy(epsilon)?;
        let (map, _) = train_map(&self.mu, &self.nu, &sol.u, &sol.v, &CostFn::SquaredEuclidean, &reg, &study.map)?;
        let ideal = self.truth.apply(self.held.view())?;
        let learned = map.apply(self.held.view())?;
        let k = self.held.nrows() as f64;
        let map_mse = (&learned - &ideal).mapv(|v| v * v).sum() / k;
        let displacement = (&ideal - &self.held).mapv(|v| v * v).sum() / k;

        let push = map.apply(self.fresh.view())?;
        let pm = push.mean_axis(Axis(0)).expect("nonempty");
        let centered = &push - &pm;
        let pc = centered.t().dot(&centered) / push.nrows() as f64;
        let norm = |v: &Array1<f64>| v.dot(v).sqrt();
        Ok(GaussianCase {
            n: self.mu.as_discrete().map_or(0, DiscreteMeasure::len),
            epsilon,
            map_mse,
            displacement,
            mean_error: norm(&(&pm - &self.mean)) / norm(&self.mean),
            cov_error: frobenius(&(&pc - &self.target_cov)) / frobenius(&self.target_cov),
            clamp_count: sol.clamp_count,
            map,
        })
    }
}

/// Source `N(0, S1)`, target `N(m, S2)`: `n` samples per side, stochastic
/// dual at `epsilon`, then a learned map scored against the closed form.
pub fn gaussian_case(study: &GaussianStudy, n: usize, epsilon: f64, seed: u64) -> CliResult<GaussianCase> {
    let problem = GaussianProblem::new(study, n, seed)?;
    let reg = Regularization::entropy(epsilon)?;
    let sol = solve_dual(&problem.mu, &problem.nu, &CostFn::SquaredEuclidean, &reg, &study.dual)?;
    problem.fit(study, epsilon, &sol)
}

/// [`gaussian_case`] along the continuation stages of `study.sweep` on one
/// sample pair. The first stage starts from zero; every later one from the
/// previous `v` and its hard c-transform.
pub fn gaussian_epsilon_sweep(study: &GaussianStudy, n: usize, seed: u64) -> CliResult<Vec<GaussianCase>> {
    let problem = GaussianProblem::new(study, n, seed)?;
    let mut prev: Option<Array1<f64>> = None;
    let mut cases = Vec::with_capacity(study.sweep.len());
    for stage in &study.sweep {
        let reg = Regularization::entropy(stage.epsilon)?;
        let cfg = DualSolverConfig {
            learning_rate: stage.learning_rate,
            iterations: stage.iterations.unwrap_or(study.dual.iterations),
            ..study.dual.clone()
        };
        let state = match &prev {
            Some(v) => DualState::new(DualPotential::Vector(problem.hard_c_transform(v)), DualPotential::Vector(v.clone())),
            None => DualState::new(DualPotential::Vector(Array1::zeros(n)), DualPotential::Vector(Array1::zeros(n))),
        };
        let sol = solve_dual_from(state, &problem.mu, &problem.nu, &CostFn::SquaredEuclidean, &reg, &cfg)?;
        prev = sol.v.as_vector().cloned();
        cases.push(problem.fit(study, stage.epsilon, &sol)?);
    }
    Ok(cases)
}

/// Whether each value is at most `MONOTONE_SLACK` times its predecessor.
pub fn nonincreasing_with_slack(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= MONOTONE_SLACK * w[0])
}

/// Permutation of a plan whose rows each put all mass on one column.
fn as_permutation(plan: &TransportPlan) -> Option<Vec<usize>> {
    let n = plan.matrix.nrows();
    let mut perm = Vec::with_capacity(n);
    for row in plan.matrix.rows() {
        let total = row.sum();
        let (j, &top) = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        if (top - total).abs() > 1e-12 * total.max(1.0) {
            return None;
        }
        perm.push(j);
    }
    let mut seen = vec![false; n];
    for &j in &perm {
        if std::mem::replace(&mut seen[j], true) {
            return None;
        }
    }
    Some(perm)
}

/// An optimal permutation is the unique optimal plan iff forbidding any of
/// its edges strictly increases the optimal cost (Birkhoff vertices are
/// permutations).
fn certify_unique(a: &Array1<f64>, b: &Array1<f64>, c: &Array2<f64>, perm: &[usize], opt: f64) -> CliResult<bool> {
    let penalty = c.sum().abs() + 1.0;
    for (i, &j) in perm.iter().enumerate() {
        let mut forbidden = c.clone();
        forbidden[[i, j]] += penalty;
        let alt = exact_ot_simplex(a, b, &forbidden)?;
        if alt.cost <= opt + 1e-9 * opt.abs().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn validate(cfg: &ConvergeConfig) -> CliResult<()> {
    if !(2..=128).contains(&cfg.plan_size) {
        return Err(CliError::config("plan_size must lie in 2..=128"));
    }
    if !(1..=MAX_BRUTE_FORCE).contains(&cfg.assignment_size) {
        return Err(CliError::config(format!("assignment_size must lie in 1..={MAX_BRUTE_FORCE}")));
    }
    if cfg.epsilons.is_empty() || cfg.epsilons.iter().any(|e| !(*e > 0.0)) || !(cfg.assignment_epsilon > 0.0) {
        return Err(CliError::config("epsilons must be a nonempty list of positive values"));
    }
    if !(cfg.plan_scale > 0.0) {
        return Err(CliError::config("plan_scale must be positive"));
    }
    if let Some(g) = &cfg.gaussian {
        if g.sizes.is_empty() || g.held_out == 0 || g.moment_samples < 2 || !(g.epsilon > 0.0) {
            return Err(CliError::config("gaussian study needs sizes, held-out and moment samples, and epsilon > 0"));
        }
        if g.sweep.iter().any(|s| !(s.epsilon > 0.0 && s.learning_rate > 0.0) || s.iterations == Some(0)) {
            return Err(CliError::config("sweep stages need positive epsilon, learning rate and iterations"));
        }
        g.dual.validate()?;
        g.map.validate()?;
    }
    Ok(())
}

/// Convergence studies in ε (plans and assignment maps) and in n (Gaussian
/// map error against the closed form).
pub fn cmd_converge(cfg: &ConvergeConfig, base: &Path, _opts: &RunOptions) -> CliResult<ExperimentReport> {
    validate(cfg)?;
    let cost = CostFn::SquaredEuclidean;

    // plan convergence against the exact simplex plan
    let n = cfg.plan_size;
    let xs = uniform_points(n, 2, 0.0, cfg.plan_scale, cfg.seed.wrapping_add(1));
    let ys = uniform_points(n, 2, 0.0, cfg.plan_scale, cfg.seed.wrapping_add(2));
    let c = cost_matrix(&cost, xs.view(), ys.view())?;
    let w = Array1::from_elem(n, 1.0 / n as f64);
    let exact = exact_ot_simplex(&w, &w, &c)?;
    let unique = match as_permutation(&exact.plan) {
        Some(perm) => certify_unique(&w, &w, &c, &perm, exact.cost)?,
        None => false,
    };
    let mut epsilons = cfg.epsilons.clone();
    epsilons.sort_by(|a, b| b.total_cmp(a));
    let mut v0 = Array1::zeros(n);
    let mut sweep = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let r = sinkhorn_from(&w, &w, &c, eps, &v0, SINKHORN_MAX_ITERS, SINKHORN_TOL)?;
        sweep.push((eps, r.plan.l1_distance(&exact.plan), r.iterations));
        v0 = r.v;
    }
    let gaps: Vec<f64> = sweep.iter().map(|s| s.1).collect();

    // simplex against permutation brute force
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let mut brute_rows = Vec::with_capacity(BRUTE_FORCE_INSTANCES);
    for k in 0..BRUTE_FORCE_INSTANCES {
        let size = 2 + k % 6;
        let ck = Array2::from_shape_simple_fn((size, size), || rng.random::<f64>());
        let wk = Array1::from_elem(size, 1.0 / size as f64);
        let simplex = exact_ot_simplex(&wk, &wk, &ck)?.cost;
        let (_, brute) = exact_assignment_bruteforce(&ck)?;
        brute_rows.push((size, simplex, brute));
    }
    let brute_diff = brute_rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);

    // barycentric map against the optimal assignment
    let k = cfg.assignment_size;
    let ax = uniform_points(k, 2, 0.0, cfg.plan_scale, cfg.seed.wrapping_add(4));
    let ay = uniform_points(k, 2, 0.0, cfg.plan_scale, cfg.seed.wrapping_add(5));
    let ac = cost_matrix(&cost, ax.view(), ay.view())?;
    let (perm, _) = exact_assignment_bruteforce(&ac)?;
    let wk = Array1::from_elem(k, 1.0 / k as f64);
    let sk = sinkhorn_from(&wk, &wk, &ac, cfg.assignment_epsilon, &Array1::zeros(k), SINKHORN_MAX_ITERS, SINKHORN_TOL)?;
    let bary = barycentric_projection_discrete(&sk.plan, ay.view())?;
    let deviation = (0..k)
        .map(|i| {
            let d = &bary.row(i) - &ay.row(perm[i]);
            d.dot(&d).sqrt()
        })
        .sum::<f64>()
        / k as f64;
    let centroid = ay.mean_axis(Axis(0)).expect("nonempty");
    let scale = ((&ay - &centroid).mapv(|v| v * v).sum() / k as f64).sqrt();

    let mut cases = Vec::new();
    let mut eps_cases = Vec::new();
    if let Some(g) = &cfg.gaussian {
        for &size in &g.sizes {
            cases.push(gaussian_case(g, size, g.epsilon, cfg.seed)?);
        }
        if !g.sweep.is_empty() {
            let largest = g.sizes.iter().copied().max().expect("validated");
            eps_cases = gaussian_epsilon_sweep(g, largest, cfg.seed)?;
        }
    }

    let out = resolve(base, &cfg.out_dir);
    prepare_out(&out)?;
    let mut report = ExperimentReport::new("converge", cfg);
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|(e, l1, it)| vec![e.to_string(), l1.to_string(), it.to_string()])
        .collect();
    let plan_path = out.join("plan_sweep.csv");
    write_table(&plan_path, &["epsilon", "plan_l1", "sinkhorn_iterations"], &rows)?;
    report.files.push(plan_path);
    for (e, l1, _) in &sweep {
        report.metric(format!("plan_l1[eps={e}]"), *l1);
    }
    report.metric("plan_l1_smallest_eps", *gaps.last().expect("nonempty"));
    report.metric("plan_l1_nonincreasing", f64::from(u8::from(nonincreasing_with_slack(&gaps))));
    report.metric("exact_plan_unique", f64::from(u8::from(unique)));
    if !unique {
        report.notes.push("the exact plan is not certified unique; plan limits may differ".into());
    }

    let rows: Vec<Vec<String>> = brute_rows
        .iter()
        .map(|(s, a, b)| vec![s.to_string(), a.to_string(), b.to_string()])
        .collect();
    let brute_path = out.join("simplex_vs_bruteforce.csv");
    write_table(&brute_path, &["n", "simplex_cost", "bruteforce_cost"], &rows)?;
    report.files.push(brute_path);
    report.metric("simplex_bruteforce_max_diff", brute_diff);

    let rows: Vec<Vec<String>> = (0..k)
        .map(|i| {
            let t = ay.row(perm[i]);
            vec![
                i.to_string(),
                bary[[i, 0]].to_string(),
                bary[[i, 1]].to_string(),
                t[0].to_string(),
                t[1].to_string(),
            ]
        })
        .collect();
    let assign_path = out.join("assignment.csv");
    write_table(&assign_path, &["i", "bary_x0", "bary_x1", "target_x0", "target_x1"], &rows)?;
    report.files.push(assign_path);
    report.metric("assignment_mean_deviation", deviation);
    report.metric("assignment_scale", scale);
    report.metric("assignment_relative_deviation", deviation / scale);

    if !cases.is_empty() {
        let rows: Vec<Vec<String>> = cases
            .iter()
            .map(|c| {
                vec![
                    c.n.to_string(),
                    c.map_mse.to_string(),
                    c.relative_mse().to_string(),
                    c.mean_error.to_string(),
                    c.cov_error.to_string(),
                    c.clamp_count.to_string(),
                ]
            })
            .collect();
        let g_path = out.join("gaussian.csv");
        write_table(&g_path, &["n", "map_mse", "relative_mse", "mean_error", "cov_error", "clamp_count"], &rows)?;
        report.files.push(g_path);
        for c in &cases {
            report.metric(format!("gaussian_relative_mse[n={}]", c.n), c.relative_mse());
        }
        let errs: Vec<f64> = cases.iter().map(|c| c.map_mse).collect();
        report.metric("gaussian_error_nonincreasing", f64::from(u8::from(nonincreasing_with_slack(&errs))));
    }
    if !eps_cases.is_empty() {
        let rows: Vec<Vec<String>> = eps_cases
            .iter()
            .map(|c| {
                vec![
                    c.epsilon.to_string(),
                    c.relative_mse().to_string(),
                    c.mean_error.to_string(),
                    c.cov_error.to_string(),
                    c.clamp_count.to_string(),
                ]
            })
            .collect();
        let e_path = out.join("gaussian_epsilon.csv");
        write_table(&e_path, &["epsilon", "relative_mse", "mean_error", "cov_error", "clamp_count"], &rows)?;
        report.files.push(e_path);
        for c in &eps_cases {
            report.metric(format!("gaussian_mean_error[eps={}]", c.epsilon), c.mean_error);
            report.metric(format!("gaussian_cov_error[eps={}]", c.epsilon), c.cov_error);
        }
        let means: Vec<f64> = eps_cases.iter().map(|c| c.mean_error).collect();
        let covs: Vec<f64> = eps_cases.iter().map(|c| c.cov_error).collect();
        report.metric("gaussian_mean_error_nonincreasing", f64::from(u8::from(nonincreasing_with_slack(&means))));
        report.metric("gaussian_cov_error_nonincreasing", f64::from(u8::from(nonincreasing_with_slack(&covs))));
    }
    report.save(&out)?;
    Ok(report)
}
