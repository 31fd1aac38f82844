//! Growth-function counts, annealed-entropy estimates, shattering search and
//! the Rademacher type inequality.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::gap_feasible;
use crate::error::{Error, Result};
use crate::featuregen::Generator;
use crate::norm::{lp_norm, NormSpec};
use crate::rng::RngStream;

/// Largest point set whose labelings are enumerated exactly.
pub const MAX_ENUMERATION: usize = 20;
/// Largest point set accepted by [`check_submultiplicative`].
pub const MAX_SUBMULTIPLICATIVE: usize = 16;
/// Largest point set accepted by [`rademacher_type_check`].
pub const MAX_TYPE_CHECK: usize = 12;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const BOOTSTRAP_SEED: u64 = 0x5EED_B007;

/// Which labelings count towards `N^Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Every feasible labeling counts. With a free offset the two constant
    /// labelings are always feasible, so `N^Λ ≥ 2` for nonempty samples.
    #[default]
    Strict,
    /// Only labelings using both classes count; a margin too wide for any
    /// split gives `N^Λ = 0`.
    Separating,
}

fn check_size(n: usize, max: usize) -> Result<()> {
    if n > max {
        return Err(Error::Budget(format!(
            "{n} points exceed the exact enumeration limit of {max}; use the Monte-Carlo estimator"
        )));
    }
    Ok(())
}

fn is_feasible<P: AsRef<[f64]>>(
    points: &[P],
    labels: &[i8],
    delta: f64,
    norm: NormSpec,
) -> Result<bool> {
    if labels.iter().all(|&y| y == labels[0]) {
        return Ok(true);
    }
    Ok(gap_feasible(points, labels, delta, norm)?.feasible)
}

pub fn count_dichotomies<P: AsRef<[f64]> + Sync>(
    points: &[P],
    delta: f64,
    norm: NormSpec,
) -> Result<u64> {
    count_dichotomies_with(points, delta, norm, Convention::Strict)
}

/// Number of labelings realisable with margin `delta`.
///
/// Feasibility is inherited by sub-labelings, so labelings are grown one point
/// at a time and infeasible prefixes are pruned. The first label is fixed to
/// +1 and the result doubled, since negating a labeling preserves feasibility.
pub fn count_dichotomies_with<P: AsRef<[f64]> + Sync>(
    points: &[P],
    delta: f64,
    norm: NormSpec,
    convention: Convention,
) -> Result<u64> {
    check_size(points.len(), MAX_ENUMERATION)?;
    if !(delta >= 0.0) {
        return Err(Error::domain(format!("margin must be >= 0, got {delta}")));
    }
    if points.is_empty() {
        return Ok(1);
    }
    fn walk<P: AsRef<[f64]>>(
        points: &[P],
        labels: &mut Vec<i8>,
        delta: f64,
        norm: NormSpec,
        convention: Convention,
    ) -> Result<u64> {
        let k = labels.len();
        if k == points.len() {
            let constant = labels.iter().all(|&y| y == labels[0]);
            return Ok(if constant && convention == Convention::Separating {
                0
            } else {
                1
            });
        }
        let mut total = 0;
        for y in [1, -1] {
            labels.push(y);
            if is_feasible(&points[..=k], labels, delta, norm)? {
                total += walk(points, labels, delta, norm, convention)?;
            }
            labels.pop();
        }
        Ok(total)
    }
    let mut labels = vec![1i8];
    Ok(2 * walk(points, &mut labels, delta, norm, convention)?)
}

/// True iff all `2^ℓ` labelings are feasible. Balanced labelings are tried
/// first since they are the hardest to realise.
pub fn shattered<P: AsRef<[f64]>>(points: &[P], delta: f64, norm: NormSpec) -> Result<bool> {
    check_size(points.len(), MAX_ENUMERATION)?;
    let n = points.len();
    if n <= 1 {
        return Ok(true);
    }
    let mut masks: Vec<u32> = (0..1u32 << (n - 1)).collect();
    let imbalance = |m: u32| (2 * (m.count_ones() as i32 + 1) - n as i32).abs();
    masks.sort_by_key(|&m| (imbalance(m), m));
    let mut labels = vec![1i8; n];
    for m in masks {
        for (i, y) in labels.iter_mut().enumerate().skip(1) {
            *y = if m >> (i - 1) & 1 == 1 { 1 } else { -1 };
        }
        if !is_feasible(points, &labels, delta, norm)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `N^Λ(S) ≤ N^Λ(S₁)·N^Λ(S₂)` for the split given by `in_first`.
pub fn check_submultiplicative<P: AsRef<[f64]> + Sync + Clone>(
    points: &[P],
    in_first: &[bool],
    delta: f64,
    norm: NormSpec,
) -> Result<bool> {
    check_size(points.len(), MAX_SUBMULTIPLICATIVE)?;
    if in_first.len() != points.len() {
        return Err(Error::domain(
            "partition length differs from the number of points",
        ));
    }
    let (a, b): (Vec<P>, Vec<P>) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, &f) in points.iter().zip(in_first) {
            if f {
                a.push(x.clone())
            } else {
                b.push(x.clone())
            }
        }
        (a, b)
    };
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain(
            "both parts of the partition must be nonempty",
        ));
    }
    let all = count_dichotomies(points, delta, norm)?;
    let na = count_dichotomies(&a, delta, norm)?;
    let nb = count_dichotomies(&b, delta, norm)?;
    Ok(all <= na * nb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub ell: usize,
    pub trials: usize,
    /// `ln` of the trial mean of `N^Λ`.
    #[serde(rename = "mean_lnN")]
    pub mean_ln_n: f64,
    /// Half-width of the 95% bootstrap interval of `mean_lnN`.
    pub ci_halfwidth: f64,
    pub delta: f64,
    pub norm: NormSpec,
    pub convention: Convention,
    pub counts: Vec<u64>,
}

fn ln_mean(counts: impl Iterator<Item = u64>, n: usize) -> f64 {
    let mean = counts.map(|c| c as f64).sum::<f64>() / n as f64;
    if mean > 0.0 {
        mean.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Percentile bootstrap half-width of `ln(mean)` with a fixed resampling seed.
pub fn bootstrap_halfwidth(counts: &[u64]) -> f64 {
    let n = counts.len();
    if n == 0 {
        return 0.0;
    }
    let mut rng = RngStream::new(BOOTSTRAP_SEED, 0);
    let mut stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| ln_mean((0..n).map(|_| counts[rng.random_range(0..n)]), n))
        .collect();
    if stats.iter().any(|s| !s.is_finite()) {
        return if stats.iter().all(|s| !s.is_finite()) {
            0.0
        } else {
            f64::INFINITY
        };
    }
    stats.sort_by(f64::total_cmp);
    let at = |q: f64| stats[(q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize];
    0.5 * (at(0.975) - at(0.025))
}

pub fn annealed_entropy_mc(
    gen: &Generator,
    ell: usize,
    delta: f64,
    norm: NormSpec,
    trials: usize,
    rng: &RngStream,
) -> Result<EntropyEstimate> {
    annealed_entropy_mc_with(gen, ell, delta, norm, trials, rng, Convention::Strict)
}

/// Monte-Carlo estimate of the annealed entropy `ln E N^Λ` at sample size
/// `ell`. Trial `t` draws its sample from `rng.fork(t)`, so the result does
/// not depend on the thread count.
pub fn annealed_entropy_mc_with(
    gen: &Generator,
    ell: usize,
    delta: f64,
    norm: NormSpec,
    trials: usize,
    rng: &RngStream,
    convention: Convention,
) -> Result<EntropyEstimate> {
    check_size(ell, MAX_ENUMERATION)?;
    if trials < 30 {
        return Err(Error::domain(format!(
            "need at least 30 trials, got {trials}"
        )));
    }
    gen.validate()?;
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.fork(t as u64);
            let pts = gen.sample_n(ell, norm, &mut r)?;
            count_dichotomies_with(&pts, delta, norm, convention)
        })
        .collect::<Result<Vec<u64>>>()?;
    let mean_ln_n = ln_mean(counts.iter().copied(), trials);
    Ok(EntropyEstimate {
        ell,
        trials,
        mean_ln_n,
        ci_halfwidth: bootstrap_halfwidth(&counts),
        delta,
        norm,
        convention,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcSearchResult {
    /// Size of the largest shattered set found.
    pub m: usize,
    pub witness: Vec<Vec<f64>>,
    pub candidates_tried: usize,
}

/// `m` vertices of a regular simplex centred at the origin, in `dim ≥ m - 1`
/// coordinates, scaled so the largest vertex has norm `radius`.
pub fn regular_simplex(m: usize, dim: usize, radius: f64, norm: NormSpec) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m > dim + 1 {
        return Err(Error::domain(format!(
            "a {m}-vertex simplex does not fit in {dim} dimensions"
        )));
    }
    if m == 1 {
        let mut v = vec![0.0; dim];
        v[0] = radius;
        return Ok(vec![v]);
    }
    // Helmert basis of the hyperplane orthogonal to (1, ..., 1)
    let mut pts = vec![vec![0.0; dim]; m];
    for k in 1..m {
        let s = ((k * (k + 1)) as f64).sqrt();
        for (i, p) in pts.iter_mut().enumerate() {
            p[k - 1] = match i.cmp(&k) {
                std::cmp::Ordering::Less => 1.0 / s,
                std::cmp::Ordering::Equal => -(k as f64) / s,
                std::cmp::Ordering::Greater => 0.0,
            };
        }
    }
    scale_to_radius(pts, radius, norm.p)
}

fn scale_to_radius(mut pts: Vec<Vec<f64>>, radius: f64, p: f64) -> Result<Vec<Vec<f64>>> {
    let r = pts.iter().map(|x| lp_norm(x, p)).fold(0.0, f64::max);
    if r == 0.0 {
        return Err(Error::domain("cannot scale a set of zero vectors"));
    }
    for x in &mut pts {
        for v in x.iter_mut() {
            *v *= radius / r;
        }
    }
    Ok(pts)
}

fn sphere_point(dim: usize, radius: f64, p: f64, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = lp_norm(&g, p);
        if n > 1e-12 {
            return g.into_iter().map(|v| v * radius / n).collect();
        }
    }
}

/// Searches the radius-`radius` ball for large shattered sets.
///
/// Regular simplices and scaled basis vectors are tried first, then the
/// current witness is grown by random sphere points, perturbed, or replaced by
/// a fresh random set one larger. `budget` caps the number of candidate sets.
pub fn vc_search(
    dim: usize,
    radius: f64,
    delta: f64,
    norm: NormSpec,
    budget: usize,
    rng: &mut RngStream,
) -> Result<VcSearchResult> {
    if dim == 0 || !(radius > 0.0) || !(delta >= 0.0) {
        return Err(Error::domain(
            "vc_search needs dim ≥ 1, radius > 0 and delta ≥ 0",
        ));
    }
    let p = norm.p;
    let mut best = VcSearchResult {
        m: 0,
        witness: Vec::new(),
        candidates_tried: 0,
    };
    let mut tried = 0usize;
    let accept =
        |set: Vec<Vec<f64>>, best: &mut VcSearchResult, tried: &mut usize| -> Result<bool> {
            *tried += 1;
            if set.len() > best.m && set.len() <= MAX_ENUMERATION && shattered(&set, delta, norm)? {
                best.m = set.len();
                best.witness = set;
                return Ok(true);
            }
            Ok(false)
        };

    for m in 1..=(dim + 1).min(MAX_ENUMERATION) {
        if tried >= budget {
            break;
        }
        if m > best.m + 1 {
            break;
        }
        let mut grew = accept(
            regular_simplex(m, dim, radius, norm)?,
            &mut best,
            &mut tried,
        )?;
        if !grew && m <= dim && tried < budget {
            let basis = (0..m)
                .map(|i| {
                    (0..dim)
                        .map(|j| if i == j { radius } else { 0.0 })
                        .collect()
                })
                .collect();
            grew = accept(basis, &mut best, &mut tried)?;
        }
        if !grew {
            break;
        }
    }

    let mut round = 0usize;
    while tried < budget && best.m < MAX_ENUMERATION {
        let candidate = match round % 3 {
            0 => {
                let mut s = best.witness.clone();
                s.push(sphere_point(dim, radius, p, rng));
                s
            }
            1 => {
                let scale = 0.3 * radius;
                let mut s: Vec<Vec<f64>> = best
                    .witness
                    .iter()
                    .map(|x| {
                        let y: Vec<f64> = x
                            .iter()
                            .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        let n = lp_norm(&y, p);
                        if n > radius {
                            y.into_iter().map(|v| v * radius / n).collect()
                        } else {
                            y
                        }
                    })
                    .collect();
                s.push(sphere_point(dim, radius, p, rng));
                s
            }
            _ => (0..=best.m)
                .map(|_| sphere_point(dim, radius, p, rng))
                .collect(),
        };
        accept(candidate, &mut best, &mut tried)?;
        round += 1;
    }
    best.candidates_tried = tried;
    Ok(best)
}

/// The first `n` standard basis vectors and the margin `n^{(1-p)/p}` at which
/// they are shattered in `ℓ_p`.
pub fn lp_shatter_construction(n: usize, p: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::domain(format!(
            "construction needs p in (1, 2], got {p}"
        )));
    }
    if n == 0 {
        return Err(Error::domain("construction needs n ≥ 1"));
    }
    let pts = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok((pts, (n as f64).powf((1.0 - p) / p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeCheck {
    /// `E_ε ‖Σ ε_i x_i‖_p^p` over all sign vectors.
    pub lhs: f64,
    /// `Σ ‖x_i‖_p^p` (type constant 1).
    pub rhs: f64,
    pub holds: bool,
}

/// Exact check of the type-`p` Rademacher inequality with constant 1.
pub fn rademacher_type_check<P: AsRef<[f64]>>(points: &[P], p: f64) -> Result<TypeCheck> {
    check_size(points.len(), MAX_TYPE_CHECK)?;
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::domain(format!(
            "type check needs p in (1, 2], got {p}"
        )));
    }
    let n = points.len();
    if n == 0 {
        return Ok(TypeCheck {
            lhs: 0.0,
            rhs: 0.0,
            holds: true,
        });
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::domain("points differ in dimension"));
    }
    let rhs: f64 = points.iter().map(|x| lp_norm(x.as_ref(), p).powf(p)).sum();
    // ε and -ε give the same norm, so fix ε_0 = +1
    let half = 1u32 << (n - 1);
    let mut sum = vec![0.0; dim];
    let mut total = 0.0;
    for mask in 0..half {
        sum.iter_mut().for_each(|v| *v = 0.0);
        for (i, x) in points.iter().enumerate() {
            let s = if i == 0 || mask >> (i - 1) & 1 == 1 {
                1.0
            } else {
                -1.0
            };
            for (a, b) in sum.iter_mut().zip(x.as_ref()) {
                *a += s * b;
            }
        }
        total += lp_norm(&sum, p).powf(p);
    }
    let lhs = total / half as f64;
    Ok(TypeCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9 * rhs.max(1.0),
    })
}
