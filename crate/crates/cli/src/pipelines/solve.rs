use std::path::Path;

use stochot::baselines::{sinkhorn, sinkhorn_points};
use stochot::dual::{dual_objective_exact, solve_dual, support_costs, DualPotential, DualSolution, RegKind, Regularization};
use stochot::measures::{CostFn, DiscreteMeasure, MeasureSource};
use stochot::plan::{marginal_residuals, recover_discrete_plan};
use stochot::OtError;

use super::{file_suffix, prepare_out, reg_label, resolve, scrub, tagged, RunOptions};
use crate::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta, Payload};
use crate::config::SolveConfig;
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;

const DENSE_SINKHORN_PAIRS: usize = 1 << 22;
const SINKHORN_MAX_ITERS: usize = 50_000;
const SINKHORN_TOL: f64 = 1e-8;

struct Run {
    reg: Regularization,
    sol: DualSolution,
    reference: Result<f64, String>,
    residuals: Option<(f64, f64)>,
}

/// Entropic reference objective from converged Sinkhorn potentials.
pub(crate) fn sinkhorn_reference(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostFn, eps: f64) -> stochot::Result<f64> {
    let reg = Regularization::entropy(eps)?;
    let (u, v) = if mu.len() * nu.len() <= DENSE_SINKHORN_PAIRS {
        let c = support_costs(cost, mu, nu)?;
        let r = sinkhorn(mu.weights(), nu.weights(), &c, eps, SINKHORN_MAX_ITERS, SINKHORN_TOL)?;
        (r.u, r.v)
    } else {
        let r = sinkhorn_points(mu, nu, cost, eps, SINKHORN_MAX_ITERS, SINKHORN_TOL)?;
        (r.u, r.v)
    };
    dual_objective_exact(&u, &v, mu, nu, cost, &reg)
}

/// Stochastic dual ascent, one run per ε of the sweep. Writes a potentials
/// checkpoint and an objective trace per run.
pub fn cmd_solve(cfg: &SolveConfig, base: &Path, opts: &RunOptions) -> CliResult<ExperimentReport> {
    let regs = cfg.regularization.resolve()?;
    cfg.solver.validate()?;
    let mu = cfg.source.build(base)?;
    let nu = cfg.target.build(base)?;
    if mu.dim() != nu.dim() {
        return Err(CliError::config(format!(
            "source dimension {} differs from target dimension {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let cost = cfg.cost.cost_fn();
    let sweep = regs.len() > 1;

    let mut runs = Vec::with_capacity(regs.len());
    for reg in regs {
        let mut sol = solve_dual(&mu, &nu, &cost, &reg, &cfg.solver)?;
        scrub(&mut sol.trace, opts);
        let (reference, residuals) = match (&mu, &nu) {
            (MeasureSource::Discrete(m), MeasureSource::Discrete(n)) => {
                let reference = if reg.kind != RegKind::Entropy {
                    Err("no Sinkhorn reference for l2 regularization".to_string())
                } else if m.len().saturating_mul(n.len()) > cfg.reference_pairs {
                    Err(format!("Sinkhorn reference skipped above {} pairs", cfg.reference_pairs))
                } else {
                    match sinkhorn_reference(m, n, &cost, reg.epsilon) {
                        Ok(v) => Ok(v),
                        Err(e @ OtError::NotConverged { .. }) => Err(format!("Sinkhorn reference failed: {e}")),
                        Err(e) => return Err(e.into()),
                    }
                };
                let plan = recover_discrete_plan(&sol.u, &sol.v, m, n, &cost, &reg)?;
                (reference, Some(marginal_residuals(&plan)))
            }
            _ if reg.kind != RegKind::Entropy => (Err("no Sinkhorn reference for l2 regularization".to_string()), None),
            _ => (Err("Sinkhorn reference needs two discrete measures".to_string()), None),
        };
        runs.push(Run {
            reg,
            sol,
            reference,
            residuals,
        });
    }

    let out = resolve(base, &cfg.out_dir);
    prepare_out(&out)?;
    let mut report = ExperimentReport::new("solve", cfg);
    for run in &runs {
        let suffix = file_suffix(&run.reg, sweep);
        let key = |name: &str| tagged(name, &run.reg, sweep);
        let meta = CheckpointMeta {
            regularization: run.reg,
            cost: cfg.cost,
            source_dim: mu.dim(),
            target_dim: nu.dim(),
            seed: cfg.solver.seed,
            config: report.config.clone(),
        };
        let ckpt_path = out.join(format!("dual{suffix}.json"));
        save_checkpoint(
            &ckpt_path,
            &Checkpoint::new(
                meta,
                Payload::DualPotentials {
                    u: run.sol.u.clone(),
                    v: run.sol.v.clone(),
                },
            ),
        )?;
        let trace_path = out.join(format!("trace{suffix}.csv"));
        run.sol.trace.save_csv(&trace_path)?;
        report.files.push(ckpt_path);
        report.files.push(trace_path);

        let objective = run.sol.trace.last().map_or(f64::NAN, |r| r.objective);
        report.metric(key("objective"), objective);
        report.metric(key("clamp_count"), run.sol.clamp_count as f64);
        if run.sol.clamp_count > 0 {
            report.notes.push(format!(
                "{}: {} penalty evaluations hit the exponent clamp; treat this run as invalid",
                reg_label(&run.reg),
                run.sol.clamp_count
            ));
        }
        match &run.reference {
            Ok(r) => {
                report.metric(key("sinkhorn_objective"), *r);
                report.metric(key("relative_gap"), (objective - r).abs() / r.abs().max(f64::MIN_POSITIVE));
            }
            Err(msg) => report.notes.push(format!("{}: {msg}", reg_label(&run.reg))),
        }
        if let Some((r, c)) = run.residuals {
            report.metric(key("row_marginal_l1"), r);
            report.metric(key("col_marginal_l1"), c);
        }
        if matches!(run.sol.u, DualPotential::Network(_)) || matches!(run.sol.v, DualPotential::Network(_)) {
            report.notes.push(format!(
                "{}: objective estimated by sampling for network potentials",
                reg_label(&run.reg)
            ));
        }
    }
    report.save(&out)?;
    Ok(report)
}
