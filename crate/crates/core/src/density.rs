//! Particle sets and kernel density estimates.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::kernels::{sq_dist, RadialKernel};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// An empirical distribution: equally-dimensioned points with optional
/// weights (uniform when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParticleSet")]
pub struct ParticleSet {
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    label: String,
}

#[derive(Deserialize)]
struct RawParticleSet {
    points: Vec<Vec<f64>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    label: String,
}

impl TryFrom<RawParticleSet> for ParticleSet {
    type Error = Error;

    fn try_from(raw: RawParticleSet) -> Result<Self> {
        let set = match raw.weights {
            Some(w) => ParticleSet::with_weights(raw.points, w)?,
            None => ParticleSet::new(raw.points)?,
        };
        Ok(set.labeled(raw.label))
    }
}

impl ParticleSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySet)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch(0, 1));
        }
        for p in &points {
            check_dims(dim, p.len())?;
        }
        Ok(ParticleSet {
            points,
            weights: None,
            label: String::new(),
        })
    }

    pub fn with_weights(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut set = Self::new(points)?;
        if weights.len() != set.points.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} points",
                weights.len(),
                set.points.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        set.weights = Some(weights);
        Ok(set)
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.points.len() as f64,
        }
    }

    /// Returns a copy with every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        check_dims(self.dim(), offset.len())?;
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(offset).map(|(a, b)| a + b).collect())
            .collect();
        Ok(ParticleSet {
            points,
            weights: self.weights.clone(),
            label: self.label.clone(),
        })
    }

    /// Returns a copy with a zero coordinate appended to every point.
    pub fn zero_padded(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.push(0.0);
                q
            })
            .collect();
        ParticleSet {
            points,
            weights: self.weights.clone(),
            label: self.label.clone(),
        }
    }

    /// `(log weight, index)` for every point that takes part in an
    /// expectation, with `exclude` removed and the rest renormalized.
    pub(crate) fn retained_log_weights(&self, exclude: Option<usize>) -> Result<Vec<(usize, f64)>> {
        let n = self.points.len();
        match exclude {
            None => Ok((0..n).map(|i| (i, self.weight(i).ln())).collect()),
            Some(index) => {
                if index >= n || n < 2 {
                    return Err(Error::InvalidExclusion { index, len: n });
                }
                if !self.is_uniform() {
                    return Err(Error::ExclusionWithWeights);
                }
                let lw = -((n - 1) as f64).ln();
                Ok((0..n).filter(|&i| i != index).map(|i| (i, lw)).collect())
            }
        }
    }

    /// Reads one point per row. A first row that does not parse as numbers
    /// is taken as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(p) => points.push(p),
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Csv(format!("row {}: {e}", row + 1))),
            }
        }
        Self::new(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    /// Writes the points with an `x1..xn` header. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        w.write_record(&header)?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Max-shifted `ln Σ exp(tᵢ)`. Errors when every term is `−∞`.
pub fn logsumexp(terms: impl IntoIterator<Item = f64> + Clone) -> Result<f64> {
    let m = terms.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateLogSumExp);
    }
    let s: f64 = terms.into_iter().map(|t| (t - m).exp()).sum();
    Ok(m + s.ln())
}

/// Kernel density estimate `E_{y∼p}[k(x, y)]`.
///
/// With a base-level kernel this is the drift normalizer `Z_p(x)`; with a
/// sharp kernel it is `Z#_p(x)`.
pub fn kde(kernel: &RadialKernel, particles: &ParticleSet, x: &[f64]) -> Result<f64> {
    check_dims(particles.dim(), x.len())?;
    let mut acc = 0.0;
    for (i, y) in particles.points().iter().enumerate() {
        acc += particles.weight(i) * kernel.profile(sq_dist(x, y)?)?;
    }
    Ok(acc)
}

/// `ln kde(x)` computed as a log-sum-exp over kernel logits, so it stays
/// finite where the direct sum underflows.
///
/// `exclude` drops one particle and averages over the remaining `N − 1`
/// (requires uniform weights and at least two particles).
pub fn log_kde(
    kernel: &RadialKernel,
    particles: &ParticleSet,
    x: &[f64],
    exclude: Option<usize>,
) -> Result<f64> {
    check_dims(particles.dim(), x.len())?;
    let retained = particles.retained_log_weights(exclude)?;
    let pts = particles.points();
    let terms = retained
        .iter()
        .map(|&(i, lw)| Ok(lw + kernel.log_profile(sq_dist(x, &pts[i])?)?))
        .collect::<Result<Vec<f64>>>()?;
    logsumexp(terms.iter().copied())
}
