use std::path::Path;

use stochot::map_learn::{train_map, train_reverse_map};

use super::{prepare_out, reg_label, resolve, scrub, RunOptions};
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Payload};
use crate::config::MapCmdConfig;
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;

/// Fit a Monge map (or the reverse map) to the plan of a dual checkpoint.
pub fn cmd_map_train(cfg: &MapCmdConfig, base: &Path, opts: &RunOptions) -> CliResult<ExperimentReport> {
    let reg = cfg.regularization.single()?;
    cfg.map.validate()?;
    let ckpt_path = resolve(base, &cfg.dual_checkpoint);
    let ckpt = load_checkpoint(&ckpt_path)?;
    let Payload::DualPotentials { u, v } = &ckpt.payload else {
        return Err(CliError::config(format!(
            "{} holds a {} checkpoint, expected dual potentials",
            ckpt_path.display(),
            ckpt.kind()
        )));
    };
    let meta = &ckpt.metadata;
    if meta.regularization != reg {
        return Err(CliError::config(format!(
            "checkpoint was solved with {}, configuration asks for {}",
            reg_label(&meta.regularization),
            reg_label(&reg)
        )));
    }
    if meta.cost != cfg.cost {
        return Err(CliError::config(format!(
            "checkpoint cost {:?} differs from configured cost {:?}",
            meta.cost, cfg.cost
        )));
    }
    let mu = cfg.source.build(base)?;
    let nu = cfg.target.build(base)?;
    if mu.dim() != meta.source_dim || nu.dim() != meta.target_dim {
        return Err(CliError::config(format!(
            "measures have dimensions ({}, {}), checkpoint expects ({}, {})",
            mu.dim(),
            nu.dim(),
            meta.source_dim,
            meta.target_dim
        )));
    }

    let cost = cfg.cost.cost_fn();
    let train = if cfg.reverse { train_reverse_map } else { train_map };
    let (map, mut trace) = train(&mu, &nu, u, v, &cost, &reg, &cfg.map)?;
    scrub(&mut trace, opts);

    let out = resolve(base, &cfg.out_dir);
    prepare_out(&out)?;
    let mut report = ExperimentReport::new("map-train", cfg);
    let meta = CheckpointMeta {
        regularization: reg,
        cost: cfg.cost,
        source_dim: meta.source_dim,
        target_dim: meta.target_dim,
        seed: cfg.map.seed,
        config: report.config.clone(),
    };
    let map_path = out.join("map.json");
    save_checkpoint(
        &map_path,
        &Checkpoint::new(
            meta,
            Payload::MongeMap {
                map,
                reverse: cfg.reverse,
            },
        ),
    )?;
    let trace_path = out.join("map_trace.csv");
    trace.save_csv(&trace_path)?;
    report.files.push(map_path);
    report.files.push(trace_path);
    report.metric("final_loss", trace.last().map_or(f64::NAN, |r| r.objective));
    report.metric("reverse", if cfg.reverse { 1.0 } else { 0.0 });
    report.save(&out)?;
    Ok(report)
}
