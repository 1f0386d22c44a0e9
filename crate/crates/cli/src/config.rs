//! TOML configuration with `key.path=value` overrides.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stochot::dual::{DualSolverConfig, RegKind, Regularization};
use stochot::map_learn::MapTrainConfig;
use stochot::measures::{
    load_csv, sample_batch, BlobConfig, CostFn, DiscreteMeasure, GaussianMeasure, GaussianMixture, MeasureSource,
};

use crate::error::{CliError, CliResult};

/// Read a TOML file, apply overrides and deserialize. Relative paths inside
/// the configuration are later resolved against the file's directory.
pub fn load_config<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> CliResult<(T, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_config(&text, overrides)?, base))
}

pub fn parse_config<T: DeserializeOwned>(text: &str, overrides: &[String]) -> CliResult<T> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::config(format!("{e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    T::deserialize(table).map_err(|e| CliError::config(format!("{e}")))
}

/// `a.b.c=value`, where the value is parsed as TOML and falls back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{spec}` is not of the form key=value")))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::config("empty override key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override path `{key}` crosses non-table `{p}`")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Ground costs available from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

impl CostKind {
    pub fn cost_fn(self) -> CostFn {
        match self {
            CostKind::SquaredEuclidean => CostFn::SquaredEuclidean,
            CostKind::Euclidean => CostFn::Euclidean,
        }
    }
}

/// One value or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    One(f64),
    Many(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::One(v) => vec![*v],
            Sweep::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegSpec {
    pub kind: RegKind,
    pub epsilon: Sweep,
}

impl RegSpec {
    pub fn resolve(&self) -> CliResult<Vec<Regularization>> {
        let eps = self.epsilon.values();
        if eps.is_empty() {
            return Err(CliError::config("epsilon sweep is empty"));
        }
        eps.into_iter()
            .map(|e| Regularization::new(self.kind, e).map_err(|err| CliError::config(err.to_string())))
            .collect()
    }

    pub fn single(&self) -> CliResult<Regularization> {
        let mut all = self.resolve()?;
        if all.len() != 1 {
            return Err(CliError::config("a single epsilon is required here"));
        }
        Ok(all.remove(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Where a measure comes from. Sampled kinds with `samples` set become
/// empirical (discrete) measures; without it they stay continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Csv {
        path: PathBuf,
        #[serde(default)]
        weights: bool,
        #[serde(default)]
        labels: bool,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    Mixture {
        components: Vec<ComponentSpec>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
    /// Uniform atoms evenly spaced on a circle in the plane.
    Circle {
        atoms: usize,
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Uniform empirical measure of `n` points drawn in `[low, high]^dim`.
    Uniform {
        n: usize,
        dim: usize,
        low: f64,
        high: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn matrix(rows: &[Vec<f64>]) -> CliResult<Array2<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(CliError::config("covariance must be a square matrix"));
    }
    Ok(Array2::from_shape_fn((d, d), |(i, j)| rows[i][j]))
}

fn gaussian(mean: &[f64], cov: &[Vec<f64>]) -> CliResult<GaussianMeasure> {
    Ok(GaussianMeasure::new(Array1::from(mean.to_vec()), matrix(cov)?)?)
}

fn empirical(src: MeasureSource, samples: Option<usize>, seed: u64) -> CliResult<MeasureSource> {
    match samples {
        None => Ok(src),
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = sample_batch(&src, n, &mut rng)?;
            Ok(DiscreteMeasure::uniform(b.points)?.into())
        }
    }
}

impl MeasureSpec {
    pub fn build(&self, base: &Path) -> CliResult<MeasureSource> {
        match self {
            MeasureSpec::Csv { path, weights, labels } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                if !full.exists() {
                    return Err(CliError::Input {
                        path: full,
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                    });
                }
                Ok(load_csv(&full, *weights, *labels)?.into())
            }
            MeasureSpec::Gaussian { mean, cov, samples, seed } => empirical(gaussian(mean, cov)?.into(), *samples, *seed),
            MeasureSpec::Mixture { components, samples, seed } => {
                let comps = components
                    .iter()
                    .map(|c| Ok((c.weight, gaussian(&c.mean, &c.cov)?)))
                    .collect::<CliResult<Vec<_>>>()?;
                empirical(GaussianMixture::new(comps)?.into(), *samples, *seed)
            }
            MeasureSpec::Circle { atoms, radius, center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0, 0.0]);
                if c.len() != 2 {
                    return Err(CliError::config("circle center must have two coordinates"));
                }
                let pts = Array2::from_shape_fn((*atoms, 2), |(i, k)| {
                    let t = std::f64::consts::TAU * i as f64 / *atoms as f64;
                    c[k] + radius * if k == 0 { t.cos() } else { t.sin() }
                });
                Ok(DiscreteMeasure::uniform(pts)?.into())
            }
            MeasureSpec::Uniform { n, dim, low, high, seed } => {
                if !(high > low) {
                    return Err(CliError::config("uniform measure needs high > low"));
                }
                Ok(DiscreteMeasure::uniform(uniform_points(*n, *dim, *low, *high, *seed))?.into())
            }
        }
    }
}

pub fn uniform_points(n: usize, dim: usize, low: f64, high: f64, seed: u64) -> Array2<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, dim), || rng.random_range(low..high))
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub source: MeasureSpec,
    pub target: MeasureSpec,
    pub regularization: RegSpec,
    #[serde(default)]
    pub cost: CostKind,
    #[serde(default)]
    pub solver: DualSolverConfig,
    /// Also run Sinkhorn on discrete problems up to this many pairs and
    /// report the gap.
    #[serde(default = "default_reference_pairs")]
    pub reference_pairs: usize,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_reference_pairs() -> usize {
    1 << 22
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCmdConfig {
    pub source: MeasureSpec,
    pub target: MeasureSpec,
    pub regularization: RegSpec,
    #[serde(default)]
    pub cost: CostKind,
    pub dual_checkpoint: PathBuf,
    #[serde(default)]
    pub reverse: bool,
    #[serde(default)]
    pub map: MapTrainConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    /// `[x_min, x_max, y_min, y_max]`; the sample bounding box when absent.
    #[serde(default)]
    pub range: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub map_checkpoint: PathBuf,
    pub source: MeasureSpec,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub histogram: Option<HistogramSpec>,
    /// Discrete reference whose atoms receive nearest-sample shares.
    #[serde(default)]
    pub atoms: Option<MeasureSpec>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaConfig {
    /// Synthetic blobs; alternatively `source` and `target` CSVs with labels.
    #[serde(default)]
    pub blobs: Option<BlobConfig>,
    #[serde(default)]
    pub source: Option<MeasureSpec>,
    /// Target labels are used for scoring only.
    #[serde(default)]
    pub target: Option<MeasureSpec>,
    #[serde(default)]
    pub seed: u64,
    pub entropy_epsilons: Vec<f64>,
    pub l2_epsilons: Vec<f64>,
    pub sinkhorn_epsilons: Vec<f64>,
    /// Adam steps tried for the learned maps.
    pub map_learning_rates: Vec<f64>,
    #[serde(default)]
    pub dual: DualSolverConfig,
    #[serde(default)]
    pub map: MapTrainConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Support sizes for the per-iteration timing study.
    pub sizes: Vec<usize>,
    pub dim: usize,
    /// The target cube is [offset, 1 + offset]^dim; the source is [0, 1]^dim.
    #[serde(default)]
    pub target_offset: f64,
    pub batch_size: usize,
    pub timing_iterations: usize,
    pub epsilon: f64,
    /// Size of the objective-versus-time comparison instance.
    pub curve_size: usize,
    pub curve_batch_size: usize,
    pub dual_learning_rate: f64,
    pub semi_dual_learning_rate: f64,
    pub curve_iterations_dual: usize,
    pub curve_iterations_semi_dual: usize,
    pub curve_log_every_dual: usize,
    pub curve_log_every_semi_dual: usize,
    #[serde(default)]
    pub average_tail: f64,
    /// Gap below the Sinkhorn objective that counts as reached.
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_gap() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStudy {
    pub mean: Vec<f64>,
    pub source_cov: Vec<Vec<f64>>,
    pub target_cov: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub epsilon: f64,
    /// Continuation sweep in ε on the largest size; skipped when empty.
    #[serde(default)]
    pub sweep: Vec<SweepStage>,
    pub held_out: usize,
    /// Pushforward samples used for the moment errors.
    #[serde(default = "default_moment_samples")]
    pub moment_samples: usize,
    #[serde(default)]
    pub dual: DualSolverConfig,
    #[serde(default)]
    pub map: MapTrainConfig,
}

/// One ε of a continuation sweep. Stages run in order, each starting from
/// the previous stage's potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStage {
    pub epsilon: f64,
    pub learning_rate: f64,
    /// Falls back to the study's dual iteration count.
    #[serde(default)]
    pub iterations: Option<usize>,
}

fn default_moment_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeConfig {
    pub plan_size: usize,
    pub plan_scale: f64,
    pub epsilons: Vec<f64>,
    pub assignment_size: usize,
    pub assignment_epsilon: f64,
    #[serde(default)]
    pub gaussian: Option<GaussianStudy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}
