//! Vector fields built from a data set `p` (positive particles) and a
//! generated set `q` (negative particles).
//!
//! Every field except [`FieldKind::BuggyBar`] is an attractive subfield minus
//! a repulsive subfield, both sharing the numerator `E[k(x, y)(y − x)]` and
//! differing only in the normalizer:
//!
//! * `Unnormalized`: none;
//! * `Drift`: the base KDE `Z(x) = E[k(x, y)]`;
//! * `SharpNormalized`: the sharp KDE `Z#(x) = E[k#(x, y)]`;
//! * `MmdGradient`: none, with the flat kernel in the numerator, which makes it
//!   `−∇ₓ (E_q[k(x, y⁻)] − E_p[k(x, y⁺)])`.
//!
//! `BuggyBar` is the field produced by normalizing positive and negative
//! logits with one concatenated softmax:
//! `E_{p,q}[k(x,y⁺) k(x,y⁻) (y⁺ − y⁻)] / (Z_p + Z_q)²`.
//!
//! Numerators and normalizers are accumulated in the log domain with a max
//! shift, so normalized fields stay finite far from the data where the kernel
//! values themselves underflow.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{log_kde, logsumexp, ParticleSet};
use crate::error::{check_dims, Error, Result};
use crate::kernels::{sq_dist, RadialKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "unnorm")]
    Unnormalized,
    #[serde(rename = "drift")]
    Drift,
    #[serde(rename = "sharp")]
    SharpNormalized,
    #[serde(rename = "mmd")]
    MmdGradient,
    #[serde(rename = "buggy")]
    BuggyBar,
}

impl FieldKind {
    pub const ALL: [FieldKind; 5] = [
        FieldKind::Unnormalized,
        FieldKind::Drift,
        FieldKind::SharpNormalized,
        FieldKind::MmdGradient,
        FieldKind::BuggyBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Unnormalized => "unnorm",
            FieldKind::Drift => "drift",
            FieldKind::SharpNormalized => "sharp",
            FieldKind::MmdGradient => "mmd",
            FieldKind::BuggyBar => "buggy",
        }
    }

    /// Kinds that decompose as attractive minus repulsive subfield and are
    /// anti-symmetric in `(p, q)`.
    pub fn is_split(self) -> bool {
        self != FieldKind::BuggyBar
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unnorm" | "unnormalized" => Ok(FieldKind::Unnormalized),
            "drift" => Ok(FieldKind::Drift),
            "sharp" | "sharp-normalized" | "sharpnormalized" => Ok(FieldKind::SharpNormalized),
            "mmd" | "mmd-gradient" => Ok(FieldKind::MmdGradient),
            "buggy" | "buggy-bar" => Ok(FieldKind::BuggyBar),
            other => Err(Error::InvalidConfig(format!("unknown field kind '{other}'"))),
        }
    }
}

/// A field kind bound to a base kernel and the two particle sets.
#[derive(Debug, Clone, Copy)]
pub struct FieldSpec<'a> {
    kind: FieldKind,
    kernel: RadialKernel,
    pos: &'a ParticleSet,
    neg: &'a ParticleSet,
}

/// `Σ wᵢ k(x, yᵢ)(yᵢ − x) = exp(log_scale) · vec`.
struct Moment {
    log_scale: f64,
    vec: Vec<f64>,
}

impl Moment {
    fn scaled(&self, log_factor: f64) -> Vec<f64> {
        let c = (self.log_scale + log_factor).exp();
        self.vec.iter().map(|v| c * v).collect()
    }
}

fn moment(
    kernel: &RadialKernel,
    set: &ParticleSet,
    x: &[f64],
    exclude: Option<usize>,
) -> Result<Moment> {
    let retained = set.retained_log_weights(exclude)?;
    let pts = set.points();
    let logits = retained
        .iter()
        .map(|&(i, lw)| Ok(lw + kernel.log_profile(sq_dist(x, &pts[i])?)?))
        .collect::<Result<Vec<f64>>>()?;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateLogSumExp);
    }
    let mut vec = vec![0.0; x.len()];
    for (&(i, _), &l) in retained.iter().zip(&logits) {
        let w = (l - m).exp();
        for (v, (yj, xj)) in vec.iter_mut().zip(pts[i].iter().zip(x)) {
            *v += w * (yj - xj);
        }
    }
    Ok(Moment { log_scale: m, vec })
}

/// One subfield (`V⁺` when `set` is the data, `V⁻` when it is the generated
/// set) of a split field kind.
pub fn subfield(
    kind: FieldKind,
    kernel: &RadialKernel,
    set: &ParticleSet,
    x: &[f64],
    exclude: Option<usize>,
) -> Result<Vec<f64>> {
    check_dims(set.dim(), x.len())?;
    match kind {
        FieldKind::Unnormalized => Ok(moment(kernel, set, x, exclude)?.scaled(0.0)),
        FieldKind::MmdGradient => Ok(moment(&kernel.flat()?, set, x, exclude)?.scaled(0.0)),
        FieldKind::Drift => {
            let num = moment(kernel, set, x, exclude)?;
            let log_z = log_kde(kernel, set, x, exclude)?;
            Ok(num.scaled(-log_z))
        }
        FieldKind::SharpNormalized => {
            let num = moment(kernel, set, x, exclude)?;
            let log_z = log_kde(&kernel.sharp()?, set, x, exclude)?;
            Ok(num.scaled(-log_z))
        }
        FieldKind::BuggyBar => Err(Error::InvalidConfig(
            "the concatenated-softmax field has no subfield split".into(),
        )),
    }
}

/// Magnitudes of the attractive subfields at one query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub x: f64,
    pub unnorm: f64,
    pub drift: f64,
    pub sharp: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `‖V⁺‖` for the unnormalized, drift and sharp-normalized fields of a 1-D
/// data set, at each of `xs`.
pub fn tail_profile(kernel: &RadialKernel, data: &ParticleSet, xs: &[f64]) -> Result<Vec<TailRow>> {
    check_dims(data.dim(), 1)?;
    if !kernel.is_base() {
        return Err(Error::NotBaseLevel(kernel.level()));
    }
    xs.par_iter()
        .map(|&x| {
            let q = [x];
            let num = moment(kernel, data, &q, None)?;
            let log_z = log_kde(kernel, data, &q, None)?;
            let log_zs = log_kde(&kernel.sharp()?, data, &q, None)?;
            Ok(TailRow {
                x,
                unnorm: norm(&num.scaled(0.0)),
                drift: norm(&num.scaled(-log_z)),
                sharp: norm(&num.scaled(-log_zs)),
            })
        })
        .collect()
}

fn sub(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.into_iter().zip(b).map(|(u, v)| u - v).collect()
}

impl<'a> FieldSpec<'a> {
    pub fn new(
        kind: FieldKind,
        kernel: RadialKernel,
        pos: &'a ParticleSet,
        neg: &'a ParticleSet,
    ) -> Result<Self> {
        check_dims(pos.dim(), neg.dim())?;
        if !kernel.is_base() {
            return Err(Error::NotBaseLevel(kernel.level()));
        }
        if kind == FieldKind::BuggyBar && pos.len() != neg.len() {
            return Err(Error::UnequalSetSizes {
                pos: pos.len(),
                neg: neg.len(),
            });
        }
        Ok(FieldSpec {
            kind,
            kernel,
            pos,
            neg,
        })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    pub fn pos(&self) -> &'a ParticleSet {
        self.pos
    }

    pub fn neg(&self) -> &'a ParticleSet {
        self.neg
    }

    pub fn dim(&self) -> usize {
        self.pos.dim()
    }

    /// The same field with `p` and `q` swapped.
    pub fn swapped(&self) -> FieldSpec<'a> {
        FieldSpec {
            pos: self.neg,
            neg: self.pos,
            ..*self
        }
    }

    pub fn with_kind(&self, kind: FieldKind) -> Result<FieldSpec<'a>> {
        FieldSpec::new(kind, self.kernel, self.pos, self.neg)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval_excluding(x, None)
    }

    /// Evaluates the field with one negative particle left out, so a
    /// generated particle queried at its own position does not interact
    /// with itself.
    pub fn eval_excluding(&self, x: &[f64], neg_exclude: Option<usize>) -> Result<Vec<f64>> {
        check_dims(self.dim(), x.len())?;
        match self.kind {
            FieldKind::BuggyBar => self.buggy_closed_form(x, neg_exclude),
            kind => {
                let attract = subfield(kind, &self.kernel, self.pos, x, None)?;
                let repel = subfield(kind, &self.kernel, self.neg, x, neg_exclude)?;
                Ok(sub(attract, repel))
            }
        }
    }

    pub fn attractive(&self, x: &[f64]) -> Result<Vec<f64>> {
        subfield(self.kind, &self.kernel, self.pos, x, None)
    }

    pub fn repulsive(&self, x: &[f64], neg_exclude: Option<usize>) -> Result<Vec<f64>> {
        subfield(self.kind, &self.kernel, self.neg, x, neg_exclude)
    }

    /// Evaluates at many query points. Each point is computed independently
    /// with a fixed summation order, so results do not depend on threading.
    pub fn eval_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.eval(x)).collect()
    }

    fn buggy_closed_form(&self, x: &[f64], neg_exclude: Option<usize>) -> Result<Vec<f64>> {
        let k = &self.kernel;
        let mp = moment(k, self.pos, x, None)?;
        let mq = moment(k, self.neg, x, neg_exclude)?;
        let lzp = log_kde(k, self.pos, x, None)?;
        let lzq = log_kde(k, self.neg, x, neg_exclude)?;
        let ls = logsumexp([lzp, lzq])?;
        // (Z_q · M_p − Z_p · M_q) / (Z_p + Z_q)²
        Ok(sub(mp.scaled(lzq - 2.0 * ls), mq.scaled(lzp - 2.0 * ls)))
    }
}

/// Evaluates `spec` at `x`.
pub fn eval_field(spec: &FieldSpec<'_>, x: &[f64]) -> Result<Vec<f64>> {
    spec.eval(x)
}

fn batch_logits(
    kernel: &RadialKernel,
    set: &ParticleSet,
    x: &[f64],
    masked: Option<usize>,
) -> Result<Vec<f64>> {
    set.points()
        .iter()
        .enumerate()
        .map(|(j, y)| {
            if Some(j) == masked {
                Ok(f64::NEG_INFINITY)
            } else {
                Ok(set.weight(j).ln() + kernel.log_profile(sq_dist(x, y)?)?)
            }
        })
        .collect()
}

fn softmax_in_place(logits: &mut [f64]) -> Result<()> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::DegenerateLogSumExp);
    }
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - m).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
    Ok(())
}

fn weighted_positions(weights: &[f64], set: &ParticleSet) -> Vec<f64> {
    let mut out = vec![0.0; set.dim()];
    for (w, y) in weights.iter().zip(set.points()) {
        for (o, v) in out.iter_mut().zip(y) {
            *o += w * v;
        }
    }
    out
}

fn check_batch(
    kernel: &RadialKernel,
    pos: &ParticleSet,
    neg: &ParticleSet,
    xs: &[Vec<f64>],
    exclude_diagonal: bool,
) -> Result<()> {
    check_dims(pos.dim(), neg.dim())?;
    if !kernel.is_base() {
        return Err(Error::NotBaseLevel(kernel.level()));
    }
    for x in xs {
        check_dims(pos.dim(), x.len())?;
    }
    if exclude_diagonal {
        if xs.len() != neg.len() {
            return Err(Error::InvalidConfig(format!(
                "diagonal exclusion needs one query per negative particle ({} vs {})",
                xs.len(),
                neg.len()
            )));
        }
        if !neg.is_uniform() {
            return Err(Error::ExclusionWithWeights);
        }
    }
    Ok(())
}

/// The concatenated-softmax weighting, step by step: logits against the
/// positive and negative sets are joined and normalized by a single softmax,
/// split back into `A_pos`/`A_neg`, cross-weighted by each other's row sums,
/// and applied to the particle positions.
///
/// Logits are `ln k(x, y)` (for the Laplacian kernel `−‖x − y‖/σ`), plus the
/// log particle weight. With `exclude_diagonal`, query `i` does not see
/// negative particle `i`.
pub fn eval_buggy_softmax(
    kernel: &RadialKernel,
    pos: &ParticleSet,
    neg: &ParticleSet,
    xs: &[Vec<f64>],
    exclude_diagonal: bool,
) -> Result<Vec<Vec<f64>>> {
    check_batch(kernel, pos, neg, xs, exclude_diagonal)?;
    if pos.len() != neg.len() {
        return Err(Error::UnequalSetSizes {
            pos: pos.len(),
            neg: neg.len(),
        });
    }
    let n_pos = pos.len();
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mask = exclude_diagonal.then_some(i);
            let mut logit = batch_logits(kernel, pos, x, None)?;
            logit.extend(batch_logits(kernel, neg, x, mask)?);
            softmax_in_place(&mut logit)?;
            let (a_pos, a_neg) = logit.split_at(n_pos);
            let sum_pos: f64 = a_pos.iter().sum();
            let sum_neg: f64 = a_neg.iter().sum();
            let w_pos: Vec<f64> = a_pos.iter().map(|a| a * sum_neg).collect();
            let w_neg: Vec<f64> = a_neg.iter().map(|a| a * sum_pos).collect();
            Ok(sub(
                weighted_positions(&w_pos, pos),
                weighted_positions(&w_neg, neg),
            ))
        })
        .collect()
}

/// The drift field computed with separate softmaxes over the positive and
/// negative logits, combined through their outer product. With
/// `exclude_diagonal`, query `i` does not see negative particle `i`.
pub fn eval_naive_drift(
    kernel: &RadialKernel,
    pos: &ParticleSet,
    neg: &ParticleSet,
    xs: &[Vec<f64>],
    exclude_diagonal: bool,
) -> Result<Vec<Vec<f64>>> {
    check_batch(kernel, pos, neg, xs, exclude_diagonal)?;
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mask = exclude_diagonal.then_some(i);
            let mut a_pos = batch_logits(kernel, pos, x, None)?;
            let mut a_neg = batch_logits(kernel, neg, x, mask)?;
            softmax_in_place(&mut a_pos)?;
            softmax_in_place(&mut a_neg)?;
            // A[j, l] = a_pos[j] a_neg[l]; W_pos sums over l, W_neg over j
            let sum_pos: f64 = a_pos.iter().sum();
            let sum_neg: f64 = a_neg.iter().sum();
            let w_pos: Vec<f64> = a_pos.iter().map(|a| a * sum_neg).collect();
            let w_neg: Vec<f64> = a_neg.iter().map(|a| a * sum_pos).collect();
            Ok(sub(
                weighted_positions(&w_pos, pos),
                weighted_positions(&w_neg, neg),
            ))
        })
        .collect()
}
