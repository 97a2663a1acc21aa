//! Radial kernels and their sharp/flat transforms.
//!
//! A radial kernel depends on its arguments only through the squared distance,
//! `k(x, y) = φ(‖x − y‖²)`. Two derived kernels are defined by how their
//! spatial gradients relate to the base kernel:
//!
//! * the **sharp** `k#` satisfies `∇ₓ k#(x, y) = k(x, y) (y − x)`, i.e.
//!   `φ#(r) = ½ ∫_r^∞ φ(s) ds`;
//! * the **flat** `k♭` satisfies `∇ₓ k(x, y) = k♭(x, y) (y − x)`, i.e.
//!   `φ♭(r) = −2 φ′(r)`.
//!
//! Closed forms for the three supported families (σ is the bandwidth, `d` the
//! distance):
//!
//! | family | base `k` | sharp `k#` | flat `k♭` |
//! |--------|----------|------------|-----------|
//! | Gaussian | `exp(−d²/2σ²)` | `σ² k` | `σ⁻² k` |
//! | Laplacian | `exp(−d/σ)` | `σ (d + σ) k` | `k / (σ d)` |
//! | rational quadratic | `(1 + d²/σ²)⁻²` | `(σ²/2) k^{1/2}` | `(4/σ²) k^{3/2}` |
//!
//! All evaluation goes through the squared distance `r = d²`; `d` is derived
//! from it with a square root, never the other way round.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Laplacian,
    #[serde(rename = "rq", alias = "rational_quadratic")]
    RationalQuadratic,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [
        KernelFamily::Gaussian,
        KernelFamily::Laplacian,
        KernelFamily::RationalQuadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::RationalQuadratic => "rq",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "rq" | "rational_quadratic" | "rational-quadratic" => {
                Ok(KernelFamily::RationalQuadratic)
            }
            other => Err(Error::InvalidConfig(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Which member of the `k♭ ← k → k#` ladder a kernel record evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelLevel {
    #[default]
    Base,
    Sharp,
    Flat,
}

/// A radial kernel: family, bandwidth and derivation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct RadialKernel {
    family: KernelFamily,
    sigma: f64,
    #[serde(default, skip_serializing_if = "is_base")]
    level: KernelLevel,
}

fn is_base(level: &KernelLevel) -> bool {
    *level == KernelLevel::Base
}

#[derive(Deserialize)]
struct RawKernel {
    family: KernelFamily,
    sigma: f64,
    #[serde(default)]
    level: KernelLevel,
}

impl TryFrom<RawKernel> for RadialKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        let mut k = RadialKernel::new(raw.family, raw.sigma)?;
        k.level = raw.level;
        Ok(k)
    }
}

/// Squared Euclidean distance between two points of equal dimension.
pub fn sq_dist(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

impl RadialKernel {
    /// A base-level kernel. `sigma` must be finite and strictly positive.
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidBandwidth(sigma));
        }
        Ok(RadialKernel {
            family,
            sigma,
            level: KernelLevel::Base,
        })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, sigma)
    }

    pub fn laplacian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, sigma)
    }

    pub fn rational_quadratic(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::RationalQuadratic, sigma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn level(&self) -> KernelLevel {
        self.level
    }

    pub fn is_base(&self) -> bool {
        self.level == KernelLevel::Base
    }

    /// The same kernel at base level.
    pub fn base(&self) -> RadialKernel {
        RadialKernel {
            level: KernelLevel::Base,
            ..*self
        }
    }

    /// Raises the kernel one step. The sharp of a flat kernel is the base
    /// kernel again; the sharp of a sharp kernel has no tabulated closed form.
    pub fn sharp(&self) -> Result<RadialKernel> {
        let level = match self.level {
            KernelLevel::Base => KernelLevel::Sharp,
            KernelLevel::Flat => KernelLevel::Base,
            KernelLevel::Sharp => {
                return Err(Error::InvalidTransform {
                    transform: "sharp",
                    level: self.level,
                })
            }
        };
        Ok(RadialKernel { level, ..*self })
    }

    /// Lowers the kernel one step; inverse of [`RadialKernel::sharp`].
    pub fn flat(&self) -> Result<RadialKernel> {
        let level = match self.level {
            KernelLevel::Base => KernelLevel::Flat,
            KernelLevel::Sharp => KernelLevel::Base,
            KernelLevel::Flat => {
                return Err(Error::InvalidTransform {
                    transform: "flat",
                    level: self.level,
                })
            }
        };
        Ok(RadialKernel { level, ..*self })
    }

    fn singular(&self) -> Error {
        Error::SingularKernel {
            family: self.family,
            level: self.level,
        }
    }

    /// Radial profile `φ_level(r)` at squared distance `r ≥ 0`.
    pub fn profile(&self, r: f64) -> Result<f64> {
        let s = self.sigma;
        let s2 = s * s;
        let v = match (self.family, self.level) {
            (KernelFamily::Gaussian, level) => {
                let k = (-r / (2.0 * s2)).exp();
                match level {
                    KernelLevel::Base => k,
                    KernelLevel::Sharp => s2 * k,
                    KernelLevel::Flat => k / s2,
                }
            }
            (KernelFamily::Laplacian, level) => {
                let d = r.sqrt();
                let k = (-d / s).exp();
                match level {
                    KernelLevel::Base => k,
                    KernelLevel::Sharp => s * (d + s) * k,
                    KernelLevel::Flat => {
                        if d == 0.0 {
                            return Err(self.singular());
                        }
                        k / (s * d)
                    }
                }
            }
            (KernelFamily::RationalQuadratic, level) => {
                let t = 1.0 + r / s2;
                match level {
                    KernelLevel::Base => 1.0 / (t * t),
                    KernelLevel::Sharp => 0.5 * s2 / t,
                    KernelLevel::Flat => 4.0 / (s2 * t * t * t),
                }
            }
        };
        Ok(v)
    }

    /// `ln φ_level(r)`, finite wherever the profile is positive even when the
    /// profile itself underflows.
    pub fn log_profile(&self, r: f64) -> Result<f64> {
        let s = self.sigma;
        let s2 = s * s;
        let v = match (self.family, self.level) {
            (KernelFamily::Gaussian, level) => {
                let logk = -r / (2.0 * s2);
                match level {
                    KernelLevel::Base => logk,
                    KernelLevel::Sharp => logk + s2.ln(),
                    KernelLevel::Flat => logk - s2.ln(),
                }
            }
            (KernelFamily::Laplacian, level) => {
                let d = r.sqrt();
                let logk = -d / s;
                match level {
                    KernelLevel::Base => logk,
                    KernelLevel::Sharp => logk + s.ln() + (d + s).ln(),
                    KernelLevel::Flat => {
                        if d == 0.0 {
                            return Err(self.singular());
                        }
                        logk - s.ln() - d.ln()
                    }
                }
            }
            (KernelFamily::RationalQuadratic, level) => {
                let lt = (r / s2).ln_1p();
                match level {
                    KernelLevel::Base => -2.0 * lt,
                    KernelLevel::Sharp => (0.5 * s2).ln() - lt,
                    KernelLevel::Flat => (4.0 / s2).ln() - 3.0 * lt,
                }
            }
        };
        Ok(v)
    }

    /// Derivative `φ′_level(r)` of the radial profile with respect to the
    /// squared distance.
    ///
    /// For every level, `−2 φ′_level` is the profile one level down, so
    /// `−2 · profile_derivative(base)` equals the flat profile and
    /// `−2 · profile_derivative(sharp)` equals the base profile.
    pub fn profile_derivative(&self, r: f64) -> Result<f64> {
        let s = self.sigma;
        let s2 = s * s;
        let v = match (self.family, self.level) {
            (KernelFamily::Gaussian, level) => {
                let k = (-r / (2.0 * s2)).exp();
                match level {
                    KernelLevel::Base => -k / (2.0 * s2),
                    KernelLevel::Sharp => -0.5 * k,
                    KernelLevel::Flat => -k / (2.0 * s2 * s2),
                }
            }
            (KernelFamily::Laplacian, level) => {
                let d = r.sqrt();
                let k = (-d / s).exp();
                match level {
                    // d/dr [σ(√r + σ) e^{−√r/σ}] = (1/2√r)(σ − (√r + σ)) e^{−√r/σ}
                    KernelLevel::Sharp => -0.5 * k,
                    _ if d == 0.0 => return Err(self.singular()),
                    KernelLevel::Base => -k / (2.0 * s * d),
                    KernelLevel::Flat => -k * (d + s) / (2.0 * s2 * d * d * d),
                }
            }
            (KernelFamily::RationalQuadratic, level) => {
                let t = 1.0 + r / s2;
                match level {
                    KernelLevel::Base => -2.0 / (s2 * t * t * t),
                    KernelLevel::Sharp => -0.5 / (t * t),
                    KernelLevel::Flat => -12.0 / (s2 * s2 * t * t * t * t),
                }
            }
        };
        Ok(v)
    }

    /// `k_level(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.profile(sq_dist(x, y)?)
    }

    /// `ln k_level(x, y)`.
    pub fn log_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.log_profile(sq_dist(x, y)?)
    }

    /// Analytic gradient `∇ₓ k_level(x, y) = −2 φ′(‖x−y‖²) (y − x)`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let c = -2.0 * self.profile_derivative(sq_dist(x, y)?)?;
        Ok(x.iter().zip(y).map(|(a, b)| c * (b - a)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gaussian_base_at_coincident_points_is_one() {
        let k = RadialKernel::gaussian(1.0).unwrap();
        assert_eq!(k.eval(&[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
    }

    #[test]
    fn laplacian_sharp_table_value() {
        let k = RadialKernel::laplacian(1.0).unwrap().sharp().unwrap();
        let v = k.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.735759, epsilon = 1e-6);
    }

    #[test]
    fn rq_flat_table_value() {
        let k = RadialKernel::rational_quadratic(1.0).unwrap().flat().unwrap();
        let v = k.eval(&[0.0], &[1.0]).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn gaussian_sharp_at_coincident_points_is_sigma_squared() {
        let k = RadialKernel::gaussian(2.0).unwrap().sharp().unwrap();
        assert_eq!(k.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn profile_derivative_examples() {
        let g = RadialKernel::gaussian(1.0).unwrap();
        assert_eq!(g.profile_derivative(0.0).unwrap(), -0.5);

        let rq = RadialKernel::rational_quadratic(1.0).unwrap();
        assert_relative_eq!(rq.profile_derivative(1.0).unwrap(), -0.25, max_relative = 1e-15);

        let lap = RadialKernel::laplacian(1.0).unwrap();
        assert_relative_eq!(
            lap.profile_derivative(4.0).unwrap(),
            -0.25 * (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert!(matches!(
            lap.profile_derivative(0.0),
            Err(Error::SingularKernel { .. })
        ));
    }

    #[test]
    fn profile_derivative_matches_central_difference() {
        // symbolic derivatives checked against FD of the profile itself
        for family in KernelFamily::ALL {
            for level in [KernelLevel::Base, KernelLevel::Sharp, KernelLevel::Flat] {
                let mut k = RadialKernel::new(family, 0.8).unwrap();
                k.level = level;
                for &r in &[0.3, 1.0, 4.0, 9.5] {
                    let h = 1e-5;
                    let fd = (k.profile(r + h).unwrap() - k.profile(r - h).unwrap()) / (2.0 * h);
                    let an = k.profile_derivative(r).unwrap();
                    assert_relative_eq!(an, fd, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn flat_laplacian_is_singular_at_coincident_points() {
        let k = RadialKernel::laplacian(1.0).unwrap().flat().unwrap();
        assert!(matches!(
            k.eval(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::SingularKernel { .. })
        ));
        assert!(k.log_eval(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = RadialKernel::gaussian(1.0).unwrap();
        assert_eq!(
            k.eval(&[0.0, 1.0], &[0.0]),
            Err(Error::DimensionMismatch(2, 1))
        );
    }

    #[test]
    fn bandwidth_must_be_positive() {
        assert!(RadialKernel::gaussian(0.0).is_err());
        assert!(RadialKernel::laplacian(-1.0).is_err());
        assert!(RadialKernel::rational_quadratic(f64::NAN).is_err());
    }

    #[test]
    fn level_transitions() {
        let k = RadialKernel::laplacian(1.5).unwrap();
        assert_eq!(k.sharp().unwrap().flat().unwrap(), k);
        assert_eq!(k.flat().unwrap().sharp().unwrap(), k);
        assert!(k.sharp().unwrap().sharp().is_err());
        assert!(k.flat().unwrap().flat().is_err());
    }

    #[test]
    fn log_profile_matches_ln_of_profile() {
        for family in KernelFamily::ALL {
            for level in [KernelLevel::Base, KernelLevel::Sharp, KernelLevel::Flat] {
                let mut k = RadialKernel::new(family, 1.3).unwrap();
                k.level = level;
                for &r in &[0.01, 0.5, 2.0, 30.0] {
                    assert_relative_eq!(
                        k.log_profile(r).unwrap(),
                        k.profile(r).unwrap().ln(),
                        epsilon = 1e-13,
                        max_relative = 1e-13
                    );
                }
            }
        }
    }

    #[test]
    fn defining_odes_hold_by_finite_differences() {
        let x = [0.4, -0.7, 1.1];
        let y = [-0.2, 0.5, 0.9];
        for family in KernelFamily::ALL {
            let k = RadialKernel::new(family, 0.9).unwrap();
            let ks = k.sharp().unwrap();
            let kf = k.flat().unwrap();
            let base = k.eval(&x, &y).unwrap();
            let flat = kf.eval(&x, &y).unwrap();
            let g_sharp = fd_grad(|p| ks.eval(p, &y).unwrap(), &x, 1e-5);
            let g_base = fd_grad(|p| k.eval(p, &y).unwrap(), &x, 1e-5);
            for i in 0..3 {
                assert_relative_eq!(g_sharp[i], base * (y[i] - x[i]), max_relative = 1e-6);
                assert_relative_eq!(g_base[i], flat * (y[i] - x[i]), max_relative = 1e-6);
            }
        }
    }
}
