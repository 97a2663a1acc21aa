use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use driftlab::calculus::uniform_grid;
use driftlab::fields::FieldKind;
use driftlab::kernels::KernelFamily;
use driftlab::transport::sample_toy;
use driftlab::{ParticleSet, ToyDistribution};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Flags shared by every subcommand. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON config file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (must not exist unless --force)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Replace an existing output directory
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// gaussian, laplacian or rq
    #[arg(long, value_name = "FAMILY")]
    pub kernel: Option<KernelFamily>,
    #[arg(long, value_name = "F")]
    pub sigma: Option<f64>,
    /// unnorm, drift, sharp, mmd or buggy
    #[arg(long, value_name = "KIND")]
    pub field: Option<FieldKind>,
    /// Fixed finite-difference step
    #[arg(long = "fd-step", value_name = "F")]
    pub fd_step: Option<f64>,
    /// Conservatism tolerance on the Jacobian asymmetry
    #[arg(long, value_name = "F")]
    pub tol: Option<f64>,
}

/// Which of the common keys a command understands.
pub struct Accepts {
    pub kernel: bool,
    pub field: bool,
    pub fd_step: bool,
    pub tol: bool,
}

impl Common {
    fn reject_unused(&self, command: &str, accepts: &Accepts) -> Result<()> {
        let unused = [
            ("--kernel", self.kernel.is_some() && !accepts.kernel),
            ("--sigma", self.sigma.is_some() && !accepts.kernel),
            ("--field", self.field.is_some() && !accepts.field),
            ("--fd-step", self.fd_step.is_some() && !accepts.fd_step),
            ("--tol", self.tol.is_some() && !accepts.tol),
        ];
        if let Some((flag, _)) = unused.iter().find(|(_, bad)| *bad) {
            bail!("{flag} does not apply to `{command}`");
        }
        Ok(())
    }

    /// Directory that relative paths in the config are resolved against.
    pub fn base_dir(&self) -> PathBuf {
        self.config
            .as_deref()
            .and_then(Path::parent)
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Merges `defaults`, the config file and the flags, in increasing
    /// precedence, and deserializes the result.
    pub fn resolve<T: DeserializeOwned>(&self, command: &str, defaults: Value, accepts: Accepts) -> Result<T> {
        self.reject_unused(command, &accepts)?;
        let mut doc = match defaults {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let Value::Object(file) = file else {
                bail!("{} must hold a JSON object", path.display());
            };
            for (k, v) in file {
                match (k.as_str(), doc.get_mut(&k), v) {
                    ("kernel", Some(Value::Object(base)), Value::Object(over)) => base.extend(over),
                    (_, _, v) => {
                        doc.insert(k, v);
                    }
                }
            }
        }
        if let Some(seed) = self.seed {
            doc.insert("seed".into(), json!(seed));
        }
        if self.kernel.is_some() || self.sigma.is_some() {
            let k = doc
                .entry("kernel")
                .or_insert_with(|| json!({"family": "gaussian", "sigma": 1.0}));
            let Value::Object(k) = k else {
                bail!("`kernel` must be an object");
            };
            if let Some(f) = self.kernel {
                k.insert("family".into(), serde_json::to_value(f)?);
            }
            if let Some(s) = self.sigma {
                k.insert("sigma".into(), json!(s));
            }
        }
        if let Some(f) = self.field {
            doc.insert("field".into(), serde_json::to_value(f)?);
        }
        if let Some(h) = self.fd_step {
            doc.insert("fd_step".into(), json!({ "fixed": h }));
        }
        if let Some(t) = self.tol {
            doc.insert("tol".into(), json!(t));
        }
        serde_json::from_value(Value::Object(doc)).map_err(|e| anyhow!("invalid {command} config: {e}"))
    }
}

/// Where a particle set comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParticleSource {
    Csv {
        csv: PathBuf,
    },
    Toy {
        toy: ToyDistribution,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Inline {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Points(Vec<Vec<f64>>),
}

impl ParticleSource {
    pub fn points(points: &[&[f64]]) -> Value {
        json!({ "points": points })
    }

    /// Loads the set. A toy source without its own seed draws from
    /// `seed + stream`; the returned source records the paths and seeds
    /// actually used.
    pub fn load(&self, role: &str, base: &Path, seed: Option<u64>, stream: u64) -> Result<(ParticleSet, ParticleSource)> {
        let ctx = || format!("loading the `{role}` particles");
        match self {
            ParticleSource::Csv { csv } => {
                let path = if csv.is_absolute() { csv.clone() } else { base.join(csv) };
                let set = ParticleSet::from_csv_path(&path)
                    .with_context(|| format!("{}: {}", ctx(), path.display()))?;
                let resolved = fs::canonicalize(&path).unwrap_or(path);
                Ok((set, ParticleSource::Csv { csv: resolved }))
            }
            ParticleSource::Toy { toy, n, seed: own } => {
                let s = own
                    .or_else(|| seed.map(|s| s.wrapping_add(stream)))
                    .ok_or_else(|| anyhow!("`{role}` samples a toy distribution: a seed is required (--seed or config)"))?;
                let set = sample_toy(toy, *n, s).with_context(ctx)?;
                Ok((
                    set,
                    ParticleSource::Toy {
                        toy: toy.clone(),
                        n: *n,
                        seed: Some(s),
                    },
                ))
            }
            ParticleSource::Inline { points, weights } => {
                let set = match weights {
                    Some(w) => ParticleSet::with_weights(points.clone(), w.clone()),
                    None => ParticleSet::new(points.clone()),
                }
                .with_context(ctx)?;
                Ok((set, self.clone()))
            }
            ParticleSource::Points(points) => Ok((ParticleSet::new(points.clone()).with_context(ctx)?, self.clone())),
        }
    }
}

/// A tensor-product grid `[lo, hi]` with `res` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
}

impl GridSpec {
    /// `[−3, 3]ⁿ` with a resolution that keeps the point count modest.
    pub fn default_for(dim: usize, res_2d: usize) -> Result<Self> {
        let res = match dim {
            1 => res_2d * res_2d,
            2 => res_2d,
            3 => res_2d.div_ceil(2),
            _ => bail!("no default grid in {dim} dimensions; give `grid` explicitly"),
        };
        Ok(GridSpec {
            lo: vec![-3.0; dim],
            hi: vec![3.0; dim],
            res: vec![res; dim],
        })
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        Ok(uniform_grid(&self.lo, &self.hi, &self.res)?)
    }
}

pub fn default_kernel(family: KernelFamily) -> Value {
    json!({ "family": family, "sigma": 1.0 })
}
