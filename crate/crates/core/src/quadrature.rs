//! Adaptive Simpson quadrature, used to check the sharp-kernel closed forms
//! against their defining tail integral `φ#(r) = ½ ∫_r^∞ φ(s) ds`.

use crate::error::Result;
use crate::kernels::RadialKernel;

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    adapt(&f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// `∫_a^∞ f`, via the substitution `s = a + t / (1 − t)` on `t ∈ [0, 1)`.
/// `f` must decay fast enough that the transformed integrand vanishes at 1.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t;
        let v = f(a + t / u) / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// `½ ∫_r^∞ φ(s) ds` for a base kernel, by quadrature.
pub fn sharp_profile_by_quadrature(kernel: &RadialKernel, r: f64) -> Result<f64> {
    let base = kernel.base();
    // profile errors only arise for the flat Laplacian, never for base
    let phi = |s: f64| base.profile(s).unwrap_or(f64::NAN);
    Ok(0.5 * integrate_to_infinity(phi, r, 1e-12))
}
