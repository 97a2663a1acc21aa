//! Fixed-point particle transport `x ← x + η · V_{p,q}(x)` toward toy targets.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ParticleSet;
use crate::error::{check_dims, Error, Result};
use crate::fields::{FieldKind, FieldSpec};
use crate::kernels::RadialKernel;
use crate::losses::{log_kde_loss, mmd_sq};

/// Mean particle norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

const WEIGHT_SUM_TOL: f64 = 1e-9;

// RNG streams derived from the run seed.
const DATA_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDistribution {
    /// Mixture of Gaussians with full covariance matrices.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
    /// 2-D annulus: uniform angle, radius `radius + width · N(0, 1)`.
    Ring { radius: f64, width: f64 },
    /// 2-D checkerboard of `cells × cells` squares centered at the origin;
    /// samples are uniform over the squares with even `i + j`.
    Checkerboard { cell_size: f64, cells: usize },
}

impl ToyDistribution {
    /// Mixture whose components all have covariance `std² I`.
    pub fn isotropic_mixture(weights: Vec<f64>, means: Vec<Vec<f64>>, std: f64) -> Self {
        let covs = means
            .iter()
            .map(|m| {
                let n = m.len();
                (0..n)
                    .map(|i| (0..n).map(|j| if i == j { std * std } else { 0.0 }).collect())
                    .collect()
            })
            .collect();
        ToyDistribution::GaussianMixture {
            weights,
            means,
            covs,
        }
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::isotropic_mixture(vec![1.0], vec![vec![0.0; dim]], 1.0)
    }

    pub fn dim(&self) -> usize {
        match self {
            ToyDistribution::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        match self {
            ToyDistribution::GaussianMixture {
                weights,
                means,
                covs,
            } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len()
                {
                    return bad("weights, means and covs must be nonempty and equally long".into());
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return bad("mixture weights must be finite and non-negative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return bad(format!("mixture weights sum to {total}, not 1"));
                }
                let dim = means[0].len();
                if dim == 0 {
                    return bad("zero-dimensional mixture".into());
                }
                for (m, c) in means.iter().zip(covs) {
                    check_dims(dim, m.len())?;
                    cholesky(c, dim)?;
                }
                Ok(())
            }
            ToyDistribution::Ring { radius, width } => {
                if !(radius.is_finite() && *radius > 0.0 && width.is_finite() && *width >= 0.0) {
                    return bad("ring needs radius > 0 and width >= 0".into());
                }
                Ok(())
            }
            ToyDistribution::Checkerboard { cell_size, cells } => {
                if !(cell_size.is_finite() && *cell_size > 0.0) || *cells == 0 {
                    return bad("checkerboard needs cell_size > 0 and cells >= 1".into());
                }
                Ok(())
            }
        }
    }

    /// Draws `n` points from `rng`.
    pub fn sample_with<R: Rng>(&self, n: usize, rng: &mut R) -> Result<ParticleSet> {
        self.validate()?;
        if n == 0 {
            return Err(Error::EmptySet);
        }
        let points = match self {
            ToyDistribution::GaussianMixture {
                weights,
                means,
                covs,
            } => {
                let dim = means[0].len();
                let factors = covs
                    .iter()
                    .map(|c| cholesky(c, dim))
                    .collect::<Result<Vec<_>>>()?;
                let pick = WeightedIndex::new(weights)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
                (0..n)
                    .map(|_| {
                        let c = pick.sample(rng);
                        let z = DVector::from_iterator(
                            dim,
                            (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
                        );
                        let x = &factors[c] * z;
                        means[c].iter().zip(x.iter()).map(|(m, v)| m + v).collect()
                    })
                    .collect()
            }
            ToyDistribution::Ring { radius, width } => (0..n)
                .map(|_| {
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let r = radius + width * rng.sample::<f64, _>(StandardNormal);
                    vec![r * theta.cos(), r * theta.sin()]
                })
                .collect(),
            ToyDistribution::Checkerboard { cell_size, cells } => {
                let k = *cells;
                let dark: Vec<(usize, usize)> = (0..k)
                    .flat_map(|i| (0..k).map(move |j| (i, j)))
                    .filter(|(i, j)| (i + j) % 2 == 0)
                    .collect();
                let origin = -0.5 * cell_size * k as f64;
                (0..n)
                    .map(|_| {
                        let (i, j) = dark[rng.random_range(0..dark.len())];
                        let u: f64 = rng.random();
                        let v: f64 = rng.random();
                        vec![
                            origin + (i as f64 + u) * cell_size,
                            origin + (j as f64 + v) * cell_size,
                        ]
                    })
                    .collect()
            }
        };
        ParticleSet::new(points)
    }
}

fn cholesky(cov: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if cov.len() != dim || cov.iter().any(|row| row.len() != dim) {
        return Err(Error::InvalidDistribution(format!("covariance must be {dim}x{dim}")));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| cov[i][j]);
    if (0..dim).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs())))
    {
        return Err(Error::InvalidDistribution("covariance is not symmetric".into()));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidDistribution("covariance is not positive definite".into()))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` samples from `dist`, deterministic in `seed`.
pub fn sample_toy(dist: &ToyDistribution, n: usize, seed: u64) -> Result<ParticleSet> {
    dist.sample_with(n, &mut rng_for(seed, DATA_STREAM))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleData {
    #[default]
    Fixed,
    PerStep,
}

fn default_step_size() -> f64 {
    1.0
}

fn default_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_metric_kernel() -> RadialKernel {
    RadialKernel::gaussian(1.0).expect("unit bandwidth is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub field: FieldKind,
    pub kernel: RadialKernel,
    pub target: ToyDistribution,
    /// Initial particle distribution; standard normal when absent.
    #[serde(default)]
    pub init: Option<ToyDistribution>,
    pub n_particles: usize,
    pub n_data: usize,
    pub steps: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    pub seed: u64,
    #[serde(default)]
    pub resample_data: ResampleData,
    #[serde(default = "default_every")]
    pub metrics_every: usize,
    /// Particle snapshots every this many steps; initial and final only when
    /// absent.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    /// Kernel of the MMD² metric.
    #[serde(default = "default_metric_kernel")]
    pub metric_kernel: RadialKernel,
    /// Leave each particle out of the repulsive set at its own position.
    #[serde(default = "default_true")]
    pub leave_one_out: bool,
}

impl TransportConfig {
    pub fn new(
        field: FieldKind,
        kernel: RadialKernel,
        target: ToyDistribution,
        n_particles: usize,
        steps: usize,
        seed: u64,
    ) -> Self {
        TransportConfig {
            field,
            kernel,
            target,
            init: None,
            n_particles,
            n_data: n_particles,
            steps,
            step_size: default_step_size(),
            seed,
            resample_data: ResampleData::Fixed,
            metrics_every: default_every(),
            snapshot_every: None,
            metric_kernel: default_metric_kernel(),
            leave_one_out: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if self.n_particles == 0 || self.n_data == 0 {
            return bad("n_particles and n_data must be positive");
        }
        if self.metrics_every == 0 || self.snapshot_every == Some(0) {
            return bad("metrics_every and snapshot_every must be positive");
        }
        if self.leave_one_out && self.n_particles < 2 {
            return bad("leave_one_out needs at least 2 particles");
        }
        if !self.kernel.is_base() {
            return Err(Error::NotBaseLevel(self.kernel.level()));
        }
        if self.field == FieldKind::BuggyBar && self.n_particles != self.n_data {
            return Err(Error::UnequalSetSizes {
                pos: self.n_data,
                neg: self.n_particles,
            });
        }
        self.target.validate()?;
        if let Some(init) = &self.init {
            init.validate()?;
            check_dims(self.target.dim(), init.dim())?;
        }
        Ok(())
    }

    fn init_distribution(&self) -> ToyDistribution {
        self.init
            .clone()
            .unwrap_or_else(|| ToyDistribution::standard_normal(self.target.dim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub mmd_sq: f64,
    pub log_kde_loss: f64,
    pub mean_field_norm: f64,
    pub max_field_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub particles: ParticleSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportTrace {
    pub snapshots: Vec<Snapshot>,
    pub metrics: Vec<MetricRecord>,
    /// Data set in use at the end of the run.
    pub data: ParticleSet,
}

impl TransportTrace {
    pub fn final_particles(&self) -> &ParticleSet {
        &self.snapshots.last().expect("trace holds the initial snapshot").particles
    }

    /// Metrics as CSV with an
    /// `iteration,mmd_sq,log_kde_loss,mean_field_norm,max_field_norm` header.
    pub fn write_metrics_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "iteration",
            "mmd_sq",
            "log_kde_loss",
            "mean_field_norm",
            "max_field_norm",
        ])?;
        for m in &self.metrics {
            w.write_record([
                m.iteration.to_string(),
                format!("{:?}", m.mmd_sq),
                format!("{:?}", m.log_kde_loss),
                format!("{:?}", m.mean_field_norm),
                format!("{:?}", m.max_field_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Field at every particle, with `particles` as the negative set.
pub fn field_at_particles(
    data: &ParticleSet,
    particles: &ParticleSet,
    kind: FieldKind,
    kernel: &RadialKernel,
    leave_one_out: bool,
) -> Result<Vec<Vec<f64>>> {
    let spec = FieldSpec::new(kind, *kernel, data, particles)?;
    particles
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, x)| spec.eval_excluding(x, leave_one_out.then_some(i)))
        .collect()
}

/// One synchronous update: every particle moves by `step_size · V(x)` with
/// the pre-step particle set as the negative set.
pub fn transport_step(
    data: &ParticleSet,
    particles: &ParticleSet,
    kind: FieldKind,
    kernel: &RadialKernel,
    step_size: f64,
    leave_one_out: bool,
) -> Result<ParticleSet> {
    let v = field_at_particles(data, particles, kind, kernel, leave_one_out)?;
    let moved = particles
        .points()
        .iter()
        .zip(&v)
        .map(|(x, d)| x.iter().zip(d).map(|(a, b)| a + step_size * b).collect())
        .collect();
    Ok(ParticleSet::new(moved)?.labeled(particles.label()))
}

/// Mean Euclidean distance between corresponding particles.
pub fn mean_displacement(before: &ParticleSet, after: &ParticleSet) -> f64 {
    let total: f64 = before
        .points()
        .iter()
        .zip(after.points())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
        .sum();
    total / before.len() as f64
}

fn record(
    config: &TransportConfig,
    iteration: usize,
    data: &ParticleSet,
    particles: &ParticleSet,
) -> Result<MetricRecord> {
    let v = field_at_particles(data, particles, config.field, &config.kernel, config.leave_one_out)?;
    let norms: Vec<f64> = v.iter().map(|d| norm(d)).collect();
    Ok(MetricRecord {
        iteration,
        mmd_sq: mmd_sq(&config.metric_kernel, data, particles)?,
        log_kde_loss: log_kde_loss(&config.kernel, data, particles, config.leave_one_out)?,
        mean_field_norm: norms.iter().sum::<f64>() / norms.len() as f64,
        max_field_norm: norms.iter().copied().fold(0.0, f64::max),
    })
}

/// Runs `config.steps` transport steps from a seeded initial cloud.
pub fn run_transport(config: &TransportConfig) -> Result<TransportTrace> {
    config.validate()?;
    let mut data_rng = rng_for(config.seed, DATA_STREAM);
    let mut init_rng = rng_for(config.seed, INIT_STREAM);
    let mut data = config
        .target
        .sample_with(config.n_data, &mut data_rng)?
        .labeled("data");
    let mut particles = config
        .init_distribution()
        .sample_with(config.n_particles, &mut init_rng)?
        .labeled("generated");

    let mut metrics = vec![record(config, 0, &data, &particles)?];
    let mut snapshots = vec![Snapshot {
        iteration: 0,
        particles: particles.clone(),
    }];

    for t in 1..=config.steps {
        if config.resample_data == ResampleData::PerStep {
            data = config
                .target
                .sample_with(config.n_data, &mut data_rng)?
                .labeled("data");
        }
        particles = transport_step(
            &data,
            &particles,
            config.field,
            &config.kernel,
            config.step_size,
            config.leave_one_out,
        )?;
        let mean_norm =
            particles.points().iter().map(|p| norm(p)).sum::<f64>() / particles.len() as f64;
        if mean_norm.is_nan() || mean_norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                iteration: t,
                mean_norm,
            });
        }
        let last = t == config.steps;
        if t % config.metrics_every == 0 || last {
            metrics.push(record(config, t, &data, &particles)?);
        }
        if last || config.snapshot_every.is_some_and(|s| t % s == 0) {
            snapshots.push(Snapshot {
                iteration: t,
                particles: particles.clone(),
            });
        }
    }
    Ok(TransportTrace {
        snapshots,
        metrics,
        data,
    })
}
