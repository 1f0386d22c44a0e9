//! The six experiment pipelines behind the `stochot` subcommands.
//!
//! Every pipeline builds and validates all of its inputs before the output
//! directory is touched, so a configuration or input error leaves nothing
//! behind. Relative paths in a configuration resolve against the directory
//! of the configuration file.

mod benchmark;
mod converge;
mod da;
mod generate;
mod map_train;
mod solve;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use stochot::dual::{Regularization, TrainTrace};

use crate::error::CliResult;

pub use benchmark::cmd_benchmark;
pub use converge::{cmd_converge, gaussian_case, gaussian_epsilon_sweep, GaussianCase};
pub use da::cmd_da;
pub use generate::cmd_generate;
pub use map_train::cmd_map_train;
pub use solve::cmd_solve;

/// Options shared by every command.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Zero all wall-clock columns and drop timing metrics so that repeated
    /// runs write byte-identical files.
    pub deterministic: bool,
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub(crate) fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub(crate) fn scrub(trace: &mut TrainTrace, opts: &RunOptions) {
    if opts.deterministic {
        for r in &mut trace.records {
            r.wall_ms = 0.0;
        }
    }
}

/// `name` for single runs, `name[eps=…]` inside an ε sweep.
pub(crate) fn tagged(name: &str, reg: &Regularization, sweep: bool) -> String {
    if sweep {
        format!("{name}[eps={}]", reg.epsilon)
    } else {
        name.to_string()
    }
}

/// File stem suffix for sweep members.
pub(crate) fn file_suffix(reg: &Regularization, sweep: bool) -> String {
    if sweep {
        format!("_eps{}", reg.epsilon)
    } else {
        String::new()
    }
}

pub(crate) fn reg_label(reg: &Regularization) -> String {
    format!("{} (epsilon = {})", reg.kind, reg.epsilon)
}

/// Plain CSV with a header row.
pub(crate) fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Points with header `x0,…,x{d-1}`.
pub(crate) fn write_points(path: &Path, points: ArrayView2<f64>) -> CliResult<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (0..points.ncols()).map(|k| format!("x{k}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in points.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
