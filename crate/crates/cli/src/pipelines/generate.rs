use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochot::measures::sample_batch;

use super::{prepare_out, resolve, write_points, write_table, RunOptions};
use crate::checkpoint::{load_checkpoint, Payload};
use crate::config::{GenerateConfig, HistogramSpec};
use crate::error::{CliError, CliResult};
use crate::knn::knn_classify;
use crate::report::ExperimentReport;

const CHUNK: usize = 1 << 15;

/// Mass of each cell of a `bins × bins` grid over `[x0, x1] × [y0, y1]`;
/// points outside the range are dropped and the rest normalised. Returns
/// row-major masses and the fraction of points inside.
pub fn histogram_2d(points: &Array2<f64>, bins: usize, range: [f64; 4]) -> (Vec<f64>, f64) {
    let [x0, x1, y0, y1] = range;
    let mut counts = vec![0usize; bins * bins];
    let mut inside = 0usize;
    let cell = |v: f64, lo: f64, hi: f64| -> Option<usize> {
        if !(v >= lo && v <= hi) {
            return None;
        }
        Some((((v - lo) / (hi - lo)) * bins as f64).floor().min(bins as f64 - 1.0) as usize)
    };
    for p in points.rows() {
        if let (Some(i), Some(j)) = (cell(p[0], x0, x1), cell(p[1], y0, y1)) {
            counts[i * bins + j] += 1;
            inside += 1;
        }
    }
    let total = inside.max(1) as f64;
    let mass = counts.iter().map(|&c| c as f64 / total).collect();
    (mass, inside as f64 / points.nrows().max(1) as f64)
}

fn bounding_box(points: &Array2<f64>) -> [f64; 4] {
    let lo = points.fold_axis(Axis(0), f64::INFINITY, |a, b| a.min(*b));
    let hi = points.fold_axis(Axis(0), f64::NEG_INFINITY, |a, b| a.max(*b));
    let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
    let (x0, x1) = widen(lo[0], hi[0]);
    let (y0, y1) = widen(lo[1], hi[1]);
    [x0, x1, y0, y1]
}

/// Push `samples` source draws through a trained map.
pub fn cmd_generate(cfg: &GenerateConfig, base: &Path, _opts: &RunOptions) -> CliResult<ExperimentReport> {
    let ckpt_path = resolve(base, &cfg.map_checkpoint);
    let ckpt = load_checkpoint(&ckpt_path)?;
    let Payload::MongeMap { map, .. } = &ckpt.payload else {
        return Err(CliError::config(format!(
            "{} holds a {} checkpoint, expected a Monge map",
            ckpt_path.display(),
            ckpt.kind()
        )));
    };
    if cfg.samples == 0 {
        return Err(CliError::config("samples must be positive"));
    }
    let src = cfg.source.build(base)?;
    if src.dim() != map.mlp.input_dim() {
        return Err(CliError::config(format!(
            "source dimension {} does not match map input dimension {}",
            src.dim(),
            map.mlp.input_dim()
        )));
    }
    if let Some(h) = &cfg.histogram {
        validate_histogram(h, map.dim())?;
    }
    let atoms = match &cfg.atoms {
        Some(spec) => {
            let m = spec.build(base)?;
            let d = m
                .as_discrete()
                .ok_or_else(|| CliError::config("atoms must be a discrete measure"))?
                .clone();
            if d.dim() != map.dim() {
                return Err(CliError::config("atom dimension does not match map output"));
            }
            Some(d)
        }
        None => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut generated = Array2::<f64>::zeros((cfg.samples, map.dim()));
    let mut start = 0;
    while start < cfg.samples {
        let k = CHUNK.min(cfg.samples - start);
        let batch = sample_batch(&src, k, &mut rng)?;
        let mapped = map.apply(batch.points.view())?;
        generated.slice_mut(ndarray::s![start..start + k, ..]).assign(&mapped);
        start += k;
    }

    let out = resolve(base, &cfg.out_dir);
    prepare_out(&out)?;
    let mut report = ExperimentReport::new("generate", cfg);
    let samples_path = out.join("samples.csv");
    write_points(&samples_path, generated.view())?;
    report.files.push(samples_path);
    report.metric("samples", cfg.samples as f64);

    if let Some(h) = &cfg.histogram {
        let range = h.range.unwrap_or_else(|| bounding_box(&generated));
        let (mass, coverage) = histogram_2d(&generated, h.bins, range);
        let [x0, x1, y0, y1] = range;
        let (dx, dy) = ((x1 - x0) / h.bins as f64, (y1 - y0) / h.bins as f64);
        let rows: Vec<Vec<String>> = mass
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let (i, j) = (k / h.bins, k % h.bins);
                vec![
                    (x0 + i as f64 * dx).to_string(),
                    (x0 + (i + 1) as f64 * dx).to_string(),
                    (y0 + j as f64 * dy).to_string(),
                    (y0 + (j + 1) as f64 * dy).to_string(),
                    m.to_string(),
                ]
            })
            .collect();
        let hist_path = out.join("histogram.csv");
        write_table(&hist_path, &["x_lo", "x_hi", "y_lo", "y_hi", "mass"], &rows)?;
        report.files.push(hist_path);
        report.metric("histogram_mass", mass.iter().sum());
        report.metric("histogram_coverage", coverage);
    }

    if let Some(atoms) = atoms {
        let ids: Vec<usize> = (0..atoms.len()).collect();
        let nearest = knn_classify(atoms.points().view(), &ids, generated.view())?;
        let mut counts = vec![0usize; atoms.len()];
        for k in nearest {
            counts[k] += 1;
        }
        let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / cfg.samples as f64).collect();
        let rows: Vec<Vec<String>> = shares
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut r: Vec<String> = atoms.points().row(k).iter().map(|v| v.to_string()).collect();
                r.push(s.to_string());
                r
            })
            .collect();
        let mut header: Vec<String> = (0..atoms.dim()).map(|k| format!("x{k}")).collect();
        header.push("share".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let share_path = out.join("atom_shares.csv");
        write_table(&share_path, &header, &rows)?;
        report.files.push(share_path);
        for (k, s) in shares.iter().enumerate() {
            report.metric(format!("atom_share[{k}]"), *s);
        }
        report.metric("atom_share_min", shares.iter().copied().fold(f64::INFINITY, f64::min));
        report.metric("atom_share_max", shares.iter().copied().fold(0.0, f64::max));
    }
    report.save(&out)?;
    Ok(report)
}

fn validate_histogram(h: &HistogramSpec, dim: usize) -> CliResult<()> {
    if dim != 2 {
        return Err(CliError::config("histograms need two-dimensional samples"));
    }
    if h.bins == 0 {
        return Err(CliError::config("histogram needs at least one bin"));
    }
    if let Some([x0, x1, y0, y1]) = h.range {
        if !(x1 > x0 && y1 > y0) {
            return Err(CliError::config("histogram range must be increasing"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn histogram_counts_and_drops() {
        let pts = array![[0.1, 0.1], [0.9, 0.9], [1.0, 1.0], [2.0, 0.5]];
        let (mass, coverage) = histogram_2d(&pts, 2, [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(mass, vec![1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0]);
        assert_eq!(coverage, 0.75);
    }
}
