//! Finite-difference Jacobians, the generalized curl and conservatism tests.
//!
//! A field on ℝⁿ is conservative iff its Jacobian is symmetric. The curl
//! collects the `h = n(n−1)/2` antisymmetric differences
//! `(−1)^{i+j} (∂Vᵢ/∂xⱼ − ∂Vⱼ/∂xᵢ)` for `i < j`, stored at [`curl_index`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::fields::subfield;
use crate::fields::FieldKind;
use crate::density::ParticleSet;
use crate::kernels::RadialKernel;

/// Denominator floor for relative field errors.
pub const REL_ERROR_FLOOR: f64 = 1e-12;

/// Default conservatism threshold on the Jacobian asymmetry.
pub const DEFAULT_TOL: f64 = 1e-5;

/// How the central-difference step is chosen at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// The same `h` everywhere.
    Fixed(f64),
    /// `h = c · (1 + ‖x‖)`.
    Scaled(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Scaled(1e-4)
    }
}

impl StepRule {
    pub fn at(&self, x: &[f64]) -> f64 {
        match *self {
            StepRule::Fixed(h) => h,
            StepRule::Scaled(c) => c * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (StepRule::Fixed(h) | StepRule::Scaled(h)) = *self;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidStep(h));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Conservative,
    NonConservative,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Conservative => "conservative",
            Verdict::NonConservative => "non-conservative",
        }
    }
}

/// Curl and Jacobian asymmetry over a grid of query points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurlReport {
    pub grid: Vec<Vec<f64>>,
    /// One curl vector of length `n(n−1)/2` per grid point (NaN where the
    /// field could not be evaluated).
    pub curl_values: Vec<Vec<f64>>,
    /// Per-point `max_{i<j} |J_ij − J_ji|`.
    pub asymmetry: Vec<f64>,
    pub max_abs_curl: f64,
    pub max_jacobian_asymmetry: f64,
    pub fd_step: StepRule,
    /// Grid points skipped because evaluation failed inside the stencil.
    pub singular_points: usize,
}

impl CurlReport {
    pub fn verdict(&self, tol: f64) -> Verdict {
        if self.max_jacobian_asymmetry <= tol {
            Verdict::Conservative
        } else {
            Verdict::NonConservative
        }
    }
}

/// Central-difference Jacobian `J[i, j] ≈ ∂Vᵢ/∂xⱼ`.
pub fn jacobian_fd<F>(field: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidStep(h));
    }
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = field(&xp)?;
        xp[j] = x[j] - h;
        let fm = field(&xp)?;
        xp[j] = x[j];
        check_dims(n, fp.len())?;
        check_dims(n, fm.len())?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// 1-based position of the pair `i < j` (1-based) in the curl vector of a
/// field on ℝⁿ: pairs in reverse lexicographic order, so `(n−1, n)` maps to
/// 1 and `(1, 2)` to `n(n−1)/2`.
pub fn curl_index(n: usize, i: usize, j: usize) -> usize {
    assert!(1 <= i && i < j && j <= n, "curl_index needs 1 <= i < j <= n");
    let h = n * (n - 1) / 2;
    let lex = (i - 1) * (2 * n - i) / 2 + (j - i);
    h + 1 - lex
}

pub fn curl_from_jacobian(jac: &DMatrix<f64>) -> Vec<f64> {
    let n = jac.nrows();
    let mut curl = vec![0.0; n * (n - 1) / 2];
    for i in 1..=n {
        for j in (i + 1)..=n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            curl[curl_index(n, i, j) - 1] = sign * (jac[(i - 1, j - 1)] - jac[(j - 1, i - 1)]);
        }
    }
    curl
}

pub fn jacobian_asymmetry(jac: &DMatrix<f64>) -> f64 {
    let n = jac.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.max((jac[(i, j)] - jac[(j, i)]).abs());
        }
    }
    m
}

pub fn curl_fd<F>(field: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    Ok(curl_from_jacobian(&jacobian_fd(field, x, h)?))
}

fn point_curl<F>(field: &F, x: &[f64], step: StepRule) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let jac = jacobian_fd(field, x, step.at(x))?;
    Ok((curl_from_jacobian(&jac), jacobian_asymmetry(&jac)))
}

fn assemble(grid: &[Vec<f64>], rows: Vec<Option<(Vec<f64>, f64)>>, step: StepRule) -> CurlReport {
    let n = grid[0].len();
    let h = n * (n - 1) / 2;
    let mut report = CurlReport {
        grid: grid.to_vec(),
        curl_values: Vec::with_capacity(rows.len()),
        asymmetry: Vec::with_capacity(rows.len()),
        max_abs_curl: 0.0,
        max_jacobian_asymmetry: 0.0,
        fd_step: step,
        singular_points: 0,
    };
    for row in rows {
        match row {
            Some((curl, asym)) => {
                let c = curl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                report.max_abs_curl = report.max_abs_curl.max(c);
                report.max_jacobian_asymmetry = report.max_jacobian_asymmetry.max(asym);
                report.curl_values.push(curl);
                report.asymmetry.push(asym);
            }
            None => {
                report.singular_points += 1;
                report.curl_values.push(vec![f64::NAN; h]);
                report.asymmetry.push(f64::NAN);
            }
        }
    }
    report
}

fn check_grid(grid: &[Vec<f64>], step: StepRule) -> Result<()> {
    step.validate()?;
    let first = grid.first().ok_or(Error::EmptyGrid)?;
    for p in grid {
        check_dims(first.len(), p.len())?;
    }
    Ok(())
}

/// Curl over a grid; any evaluation failure aborts.
pub fn curl_report<F>(field: F, grid: &[Vec<f64>], step: StepRule) -> Result<CurlReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_grid(grid, step)?;
    let rows = grid
        .par_iter()
        .map(|x| point_curl(&field, x, step).map(Some))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(grid, rows, step))
}

/// Curl over a grid; points where the field cannot be evaluated become NaN
/// rows and are counted in [`CurlReport::singular_points`].
pub fn curl_report_lenient<F>(field: F, grid: &[Vec<f64>], step: StepRule) -> Result<CurlReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_grid(grid, step)?;
    let rows = grid
        .par_iter()
        .map(|x| point_curl(&field, x, step).ok())
        .collect::<Vec<_>>();
    Ok(assemble(grid, rows, step))
}

/// Conservative iff the largest Jacobian asymmetry on the grid is `≤ tol`.
pub fn conservatism_test<F>(
    field: F,
    grid: &[Vec<f64>],
    step: StepRule,
    tol: f64,
) -> Result<(CurlReport, Verdict)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let report = curl_report(field, grid, step)?;
    let verdict = report.verdict(tol);
    Ok((report, verdict))
}

/// Tensor-product grid with `res[d]` points per axis spanning `[lo[d], hi[d]]`.
/// The first axis varies slowest.
pub fn uniform_grid(lo: &[f64], hi: &[f64], res: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_dims(lo.len(), hi.len())?;
    check_dims(lo.len(), res.len())?;
    if lo.is_empty() || res.contains(&0) {
        return Err(Error::EmptyGrid);
    }
    let axes: Vec<Vec<f64>> = (0..lo.len())
        .map(|d| {
            let r = res[d];
            (0..r)
                .map(|i| {
                    if r == 1 {
                        lo[d]
                    } else {
                        lo[d] + (hi[d] - lo[d]) * i as f64 / (r - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(grid)
}

/// Central-difference gradient of a scalar field.
pub fn gradient_fd<L>(potential: L, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    L: Fn(&[f64]) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidStep(h));
    }
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let up = potential(&xp)?;
        xp[j] = x[j] - h;
        let down = potential(&xp)?;
        xp[j] = x[j];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// `‖a − b‖ / max(‖b‖, REL_ERROR_FLOOR)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCheck {
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Compares `−∇L` (central differences) with the field at every point and
/// reports the largest relative error.
pub fn potential_consistency<L, F>(
    potential: L,
    field: F,
    points: &[Vec<f64>],
    step: StepRule,
    tol: f64,
) -> Result<PotentialCheck>
where
    L: Fn(&[f64]) -> Result<f64> + Sync,
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_grid(points, step)?;
    let errors = points
        .par_iter()
        .map(|x| {
            let g = gradient_fd(&potential, x, step.at(x))?;
            let neg_grad: Vec<f64> = g.iter().map(|v| -v).collect();
            let v = field(x)?;
            check_dims(v.len(), neg_grad.len())?;
            Ok(relative_error(&neg_grad, &v))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_rel_error = errors.into_iter().fold(0.0, f64::max);
    Ok(PotentialCheck {
        max_rel_error,
        passed: max_rel_error <= tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialityReport {
    /// Asymmetry of `k(x, 0)(0 − x)` at `x = (1, 1)` for the anisotropic
    /// kernel `exp(−(x₁−y₁)² − 2(x₂−y₂)²)`.
    pub anisotropic_asymmetry: f64,
    /// Same configuration with the radial kernel `exp(−‖x − y‖²)`.
    pub radial_asymmetry: f64,
    /// Anisotropic kernel evaluated at the particle itself.
    pub coincident_asymmetry: f64,
}

fn anisotropic_kernel(x: &[f64], y: &[f64]) -> f64 {
    let a = x[0] - y[0];
    let b = x[1] - y[1];
    (-a * a - 2.0 * b * b).exp()
}

/// Single-particle unnormalized field `k(x, y)(y − x)` with a non-radial
/// kernel: its Jacobian is asymmetric away from the particle, which shows
/// radiality is needed for the unnormalized field to be conservative.
pub fn radiality_counterexample_check() -> Result<RadialityReport> {
    let y = [0.0, 0.0];
    let aniso = |x: &[f64]| -> Result<Vec<f64>> {
        let k = anisotropic_kernel(x, &y);
        Ok(vec![k * (y[0] - x[0]), k * (y[1] - x[1])])
    };
    let radial_kernel = RadialKernel::gaussian(std::f64::consts::FRAC_1_SQRT_2)?;
    let particle = ParticleSet::new(vec![y.to_vec()])?;
    let radial = |x: &[f64]| subfield(FieldKind::Unnormalized, &radial_kernel, &particle, x, None);

    let h = 1e-5;
    let at = [1.0, 1.0];
    Ok(RadialityReport {
        anisotropic_asymmetry: jacobian_asymmetry(&jacobian_fd(aniso, &at, h)?),
        radial_asymmetry: jacobian_asymmetry(&jacobian_fd(radial, &at, h)?),
        coincident_asymmetry: jacobian_asymmetry(&jacobian_fd(aniso, &y, h)?),
    })
}
