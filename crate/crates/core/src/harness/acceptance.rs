//! The acceptance suite: nine checks, each reporting measured against required
//! values. The CLI `verify` command and the `acceptance` test target both run
//! these functions.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{default_sufficiency_grid, AppendixSparse, Generalization};
use super::run::generalization_trial;
use crate::bounds::{self, AppendixForm};
use crate::capacity;
use crate::classify::{self, gap_feasible};
use crate::error::Result;
use crate::featuregen::{Envelope, Generator, HeavyTailSpec, LabeledDataset};
use crate::norm::{dot, lp_norm, NormSpec};
use crate::rng::RngStream;
use crate::spectral::{self, Matrix};
use crate::tol;

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Replaces the numerics tolerance with an unattainable one so that the
    /// failure path can be exercised.
    pub corrupt_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub required: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {} | measured: {} | required: {} | {:.1}s",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.required,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub all_passed: bool,
}

fn timed(
    id: u32,
    name: &str,
    required: &str,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionResult {
    let start = Instant::now();
    let (passed, measured) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        measured,
        required: required.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Shattering search in the unit ball never beats the `⌊R²/Δ²⌋ + 1` bound.
pub fn vc_upper_bound(seed: u64) -> CriterionResult {
    let start = Instant::now();
    let mut r = timed(
        1,
        "vc_upper_bound",
        "m ≤ ⌊1/Δ²⌋+1 for Δ ∈ {0.45,0.5,0.7,1.0}, dims ≤ 8, budget 10⁴, ≤ 300 s",
        || {
            let deltas = [0.45, 0.5, 0.7, 1.0];
            let dims = [4usize, 8];
            let grid: Vec<(usize, f64)> = dims
                .iter()
                .flat_map(|&d| deltas.iter().map(move |&x| (d, x)))
                .collect();
            let found = grid
                .par_iter()
                .enumerate()
                .map(|(i, &(dim, delta))| {
                    let res = capacity::vc_search(
                        dim,
                        1.0,
                        delta,
                        NormSpec::l2(),
                        10_000,
                        &mut RngStream::new(seed, 100 + i as u64),
                    )?;
                    let verified = capacity::shattered(&res.witness, delta, NormSpec::l2())?;
                    Ok((
                        dim,
                        delta,
                        res.m,
                        verified,
                        bounds::vc_bound_hilbert(1.0, delta)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let ok = found.iter().all(|&(_, _, m, v, b)| v && m as u64 <= b);
            let text = found
                .iter()
                .map(|(d, x, m, _, b)| format!("dim {d} Δ={x}: {m} (bound {b})"))
                .collect::<Vec<_>>()
                .join("; ");
            Ok((ok, text))
        },
    );
    if r.passed && start.elapsed().as_secs_f64() > 300.0 {
        r.passed = false;
        r.measured.push_str("; over the time limit");
    }
    r
}

/// The basis construction is shattered at `Δ = n^{(1-p)/p}`, every labeling
/// carrying a checked witness.
pub fn lp_construction() -> CriterionResult {
    let start = Instant::now();
    let mut r = timed(
        2,
        "lp_construction",
        "all 2^n labelings feasible with a witness, ≤ 600 s",
        || {
            let mut parts = Vec::new();
            let mut ok = true;
            for (n, p) in [(2usize, 2.0), (4, 2.0), (4, 1.5), (8, 4.0 / 3.0)] {
                let (pts, delta) = capacity::lp_shatter_construction(n, p)?;
                let norm = NormSpec::lp(p)?;
                let mut witnessed = 0u32;
                for mask in 0u32..(1 << n) {
                    let labels: Vec<i8> = (0..n)
                        .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                        .collect();
                    let res = gap_feasible(&pts, &labels, delta, norm)?;
                    let good = res.feasible
                        && res.witness.as_ref().is_some_and(|w| {
                            w.dual_norm_deviation() <= tol::NORM_INVARIANT
                                && pts.iter().zip(&labels).all(|(x, &y)| {
                                    y as f64 * (dot(&w.w, x) - w.b) >= delta - tol::FEASIBILITY
                                })
                        });
                    witnessed += u32::from(good);
                }
                let shattered = capacity::shattered(&pts, delta, norm)?;
                ok &= shattered && witnessed == 1 << n;
                parts.push(format!(
                    "n={n} p={p:.4} Δ={delta:.6}: {witnessed}/{}",
                    1u32 << n
                ));
            }
            Ok((ok, parts.join("; ")))
        },
    );
    if r.passed && start.elapsed().as_secs_f64() > 600.0 {
        r.passed = false;
        r.measured.push_str("; over the time limit");
    }
    r
}

/// Monte-Carlo annealed entropy stays under the Hilbert-space bound.
pub fn entropy_domination(seed: u64) -> CriterionResult {
    timed(
        3,
        "entropy_domination",
        "mean_lnN ≤ bound + CI at all 30 grid points (200 trials)",
        || {
            let mut grid = Vec::new();
            for alpha in [1.5, 2.0] {
                for ell in [4usize, 6, 8, 10, 12] {
                    for delta in [0.25, 0.5, 1.0] {
                        grid.push((alpha, ell, delta));
                    }
                }
            }
            let mut worst = f64::NEG_INFINITY;
            let mut fails = 0;
            for (i, &(alpha, ell, delta)) in grid.iter().enumerate() {
                let gen =
                    Generator::HeavyTail(HeavyTailSpec::magnitude(16, 1.0, alpha, Envelope::Exact));
                let est = capacity::annealed_entropy_mc(
                    &gen,
                    ell,
                    delta,
                    NormSpec::l2(),
                    200,
                    &RngStream::new(seed, 300 + i as u64),
                )?;
                let bound = bounds::hann_bound_hilbert(
                    ell as f64,
                    bounds::heavytail_moment_root(1.0, alpha)?,
                    delta,
                )?;
                let excess = est.mean_ln_n - bound - est.ci_halfwidth;
                worst = worst.max(excess);
                fails += usize::from(excess > 0.0);
            }
            Ok((
                fails == 0,
                format!("{fails} violations; max(mean_lnN - bound - ci) = {worst:.4}"),
            ))
        },
    )
}

/// Growth-function counts are submultiplicative over random splits.
pub fn submultiplicativity(seed: u64) -> CriterionResult {
    timed(
        4,
        "submultiplicativity",
        "0 violations over 500 instances with ≤ 12 points",
        || {
            let base = RngStream::new(seed, 400);
            let violations = (0..500u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = base.fork(i);
                    let m = rng.random_range(2..=12usize);
                    let dim = rng.random_range(1..=4usize);
                    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(m);
                    for _ in 0..m {
                        // occasional repeats exercise coincident points
                        if !pts.is_empty() && rng.random_bool(0.1) {
                            let j = rng.random_range(0..pts.len());
                            pts.push(pts[j].clone());
                        } else {
                            pts.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
                        }
                    }
                    let mut split: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
                    split[0] = true;
                    split[m - 1] = false;
                    let delta = rng.random_range(0.0..0.5);
                    capacity::check_submultiplicative(&pts, &split, delta, NormSpec::l2())
                        .map(|ok| usize::from(!ok))
                })
                .sum::<Result<usize>>()?;
            Ok((
                violations == 0,
                format!("{violations} violations in 500 instances"),
            ))
        },
    )
}

/// Diffusion-map features have mean squared norm `Σλ^{2k}/n ≤ 1`.
pub fn diffusion_moment(seed: u64) -> CriterionResult {
    timed(
        5,
        "diffusion_moment",
        "mean_squared_norm ≤ 1 + 1e-8 and |msn - Σλ^{2k}/n| ≤ 1e-8",
        || {
            let mut max_msn = f64::NEG_INFINITY;
            let mut max_diff: f64 = 0.0;
            let mut ok = true;
            let mut gi = 0u64;
            for n in [8usize, 16, 32, 64] {
                for p in [0.25, 0.5] {
                    let g = spectral::erdos_renyi(n, p, &mut RngStream::new(seed, 500 + gi))?;
                    gi += 1;
                    for k in [0u32, 1, 2, 4] {
                        let emb = spectral::diffusion_map(&g, k)?;
                        let msn = spectral::mean_squared_norm(&emb);
                        let diff = (msn - spectral::eigenvalue_moment(&emb)).abs();
                        max_msn = max_msn.max(msn);
                        max_diff = max_diff.max(diff);
                        ok &= msn <= 1.0 + 1e-8 && diff <= 1e-8;
                    }
                }
            }
            Ok((
                ok,
                format!("max msn = {max_msn:.12}; max |msn - moment| = {max_diff:.2e}"),
            ))
        },
    )
}

/// Exact sign enumeration confirms type `p` with constant 1.
pub fn rademacher_type(seed: u64) -> CriterionResult {
    timed(
        6,
        "rademacher_type",
        "0 violations over 200 sets for each p ∈ {1.25, 1.5, 2}",
        || {
            let mut violations = 0;
            let mut worst: f64 = 0.0;
            for (pi, p) in [1.25, 1.5, 2.0].into_iter().enumerate() {
                let mut rng = RngStream::new(seed, 600 + pi as u64);
                for _ in 0..200 {
                    let m = rng.random_range(1..=10usize);
                    let dim = rng.random_range(1..=6usize);
                    let pts: Vec<Vec<f64>> = (0..m)
                        .map(|_| {
                            (0..dim)
                                .map(|_| rng.sample::<f64, _>(StandardNormal))
                                .collect()
                        })
                        .collect();
                    let r = capacity::rademacher_type_check(&pts, p)?;
                    violations += usize::from(!r.holds);
                    if r.rhs > 0.0 {
                        worst = worst.max(r.lhs / r.rhs);
                    }
                }
            }
            Ok((
                violations == 0,
                format!("{violations} violations; max lhs/rhs = {worst:.6}"),
            ))
        },
    )
}

/// Max-margin training on planted data generalizes within the risk bound.
pub fn generalization_soundness(seed: u64) -> CriterionResult {
    timed(
        7,
        "generalization_soundness",
        "held-out risk ≤ min(1, bound) in ≥ 95% of 50 runs; training risk 0 in all",
        || {
            let g = Generalization::default();
            let trials = (0..g.datasets as u64)
                .into_par_iter()
                .map(|i| generalization_trial(&g, &mut RngStream::new(seed, 700 + i)))
                .collect::<Result<Vec<_>>>()?;
            let within = trials
                .iter()
                .filter(|t| t.test_risk_gap_tolerant <= t.bound.min(1.0))
                .count();
            let train_zero = trials.iter().all(|t| t.train_risk == 0.0);
            let frac = within as f64 / trials.len() as f64;
            let max_test = trials
                .iter()
                .map(|t| t.test_risk_gap_tolerant)
                .fold(0.0, f64::max);
            let bound = trials.first().map_or(f64::NAN, |t| t.bound);
            Ok((
            frac >= 0.95 && train_zero,
            format!("{within}/{} within bound {bound:.4}; max held-out risk {max_test:.4}; training risk all zero: {train_zero}", trials.len()),
        ))
        },
    )
}

/// The sparse-model sample size meets its sufficiency inequality, and the
/// sparse-model entropy estimate stays under its bound.
pub fn appendix_formulas(seed: u64) -> CriterionResult {
    timed(
        8,
        "appendix_formulas",
        "sufficiency slack ≥ 0 at all 10 grid points; mean_lnN ≤ bound + CI for ℓ ≤ 12",
        || {
            let mut satisfied = 0;
            let mut worst = f64::INFINITY;
            let grid = default_sufficiency_grid();
            for pt in &grid {
                let ell = bounds::appendix_sample_complexity(
                    pt.epsilon,
                    pt.delta,
                    1.0,
                    pt.alpha,
                    AppendixForm::Statement,
                )?;
                let slack =
                    bounds::appendix_sufficiency_slack(ell, pt.epsilon, pt.delta, 1.0, pt.alpha)?;
                worst = worst.min(slack);
                satisfied += usize::from(slack >= 0.0);
            }
            let a = AppendixSparse::default();
            let gen = Generator::HeavyTail(HeavyTailSpec::sparse(a.n, a.c, a.alpha));
            let mut entropy_ok = true;
            let mut entropy_worst = f64::NEG_INFINITY;
            for (i, &ell) in a.ells.iter().enumerate() {
                let est = capacity::annealed_entropy_mc(
                    &gen,
                    ell,
                    0.0,
                    NormSpec::l2(),
                    a.trials,
                    &RngStream::new(seed, 800 + i as u64),
                )?;
                let excess = est.mean_ln_n
                    - bounds::appendix_hann(ell as f64, a.c, a.alpha)?
                    - est.ci_halfwidth;
                entropy_worst = entropy_worst.max(excess);
                entropy_ok &= excess <= 0.0;
            }
            Ok((
            satisfied == grid.len() && entropy_ok,
            format!(
                "sufficiency {satisfied}/{} (min slack {worst:.4}); entropy max(mean_lnN - bound - ci) = {entropy_worst:.4}",
                grid.len()
            ),
        ))
        },
    )
}

/// Best margin over random unit directions, refined by a shrinking random
/// local search. Never exceeds the true optimum.
pub fn direction_sampling_margin(
    points: &[Vec<f64>],
    labels: &[i8],
    directions: usize,
    rng: &mut RngStream,
) -> f64 {
    let margin = |w: &[f64]| {
        let n = lp_norm(w, 2.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, &y) in points.iter().zip(labels) {
            let s = dot(w, x) / n;
            if y > 0 {
                lo = lo.min(s);
            } else {
                hi = hi.max(s);
            }
        }
        0.5 * (lo - hi)
    };
    let dim = points[0].len();
    let mut best = f64::NEG_INFINITY;
    let mut best_w = vec![0.0; dim];
    for _ in 0..directions {
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let m = margin(&w);
        if m > best {
            best = m;
            best_w = w;
        }
    }
    let mut radius = 0.05 * lp_norm(&best_w, 2.0);
    while radius > 1e-10 * lp_norm(&best_w, 2.0) {
        let mut improved = false;
        for _ in 0..200 {
            let w: Vec<f64> = best_w
                .iter()
                .map(|v| v + radius * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let m = margin(&w);
            if m > best {
                best = m;
                best_w = w;
                improved = true;
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    best
}

/// Zeta values, eigendecomposition residuals and trained margins.
pub fn numerics(seed: u64, opts: &VerifyOptions) -> CriterionResult {
    timed(
        9,
        "numerics",
        "zeta error ≤ 1e-9; eigen residual ≤ 1e-8; margin within 1e-3 relative of the oracle",
        || {
            let zeta_tol = if opts.corrupt_tolerance { -1.0 } else { 1e-9 };
            let pi = std::f64::consts::PI;
            let z2 = (bounds::zeta(2.0)? - pi.powi(2) / 6.0).abs();
            let z4 = (bounds::zeta(4.0)? - pi.powi(4) / 90.0).abs();
            let zeta_ok = z2 <= zeta_tol && z4 <= zeta_tol;

            let eig_residuals = (0..100u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, 900).fork(i);
                    let n = 1 + (i as usize * 37) % 64;
                    let mut m = Matrix::zeros(n);
                    for r in 0..n {
                        for c in r..n {
                            let v: f64 = rng.random_range(-1.0..1.0);
                            m.set(r, c, v);
                            m.set(c, r, v);
                        }
                    }
                    let e = spectral::eigendecompose(&m)?;
                    let mut worst: f64 = 0.0;
                    for r in 0..n {
                        for c in 0..n {
                            let rec: f64 = (0..n)
                                .map(|j| e.vectors.get(r, j) * e.values[j] * e.vectors.get(c, j))
                                .sum();
                            worst = worst.max((rec - m.get(r, c)).abs());
                        }
                    }
                    Ok(worst)
                })
                .collect::<Result<Vec<f64>>>()?;
            let eig_worst = eig_residuals.iter().cloned().fold(0.0, f64::max);

            let rel_errors = (0..50u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, 950).fork(i);
                    let dim = 2 + (i as usize % 2);
                    let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let b: f64 = rng.random_range(-0.2..0.2);
                    let wn = lp_norm(&w, 2.0);
                    let mut pts = Vec::new();
                    let mut labels = Vec::new();
                    while pts.len() < 20 {
                        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let s = dot(&w, &x) / wn - b;
                        if s.abs() < 0.02 {
                            continue;
                        }
                        labels.push(if s > 0.0 { 1i8 } else { -1 });
                        pts.push(x);
                    }
                    if !labels.contains(&1) {
                        labels[0] = 1;
                    }
                    if !labels.contains(&-1) {
                        labels[1] = -1;
                    }
                    let data = LabeledDataset::from_parts(pts.clone(), &labels, NormSpec::l2())?;
                    let trained = match classify::max_margin_train(&data) {
                        Ok(t) => t.margin,
                        Err(crate::Error::NotSeparable(_)) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let oracle = direction_sampling_margin(&pts, &labels, 50_000, &mut rng);
                    Ok(Some((trained - oracle).abs() / trained))
                })
                .collect::<Result<Vec<Option<f64>>>>()?;
            let compared: Vec<f64> = rel_errors.into_iter().flatten().collect();
            let margin_worst = compared.iter().cloned().fold(0.0, f64::max);
            let margin_ok = compared.len() == 50 && margin_worst <= 1e-3;
            Ok((
            zeta_ok && eig_worst <= 1e-8 && margin_ok,
            format!(
                "{}zeta(2) err {z2:.1e}, zeta(4) err {z4:.1e}; eigen residual {eig_worst:.1e}; margin rel err {margin_worst:.1e} over {} instances",
                if opts.corrupt_tolerance { "tolerance corrupted; " } else { "" },
                compared.len()
            ),
        ))
        },
    )
}

/// Runs every criterion in order.
pub fn verify_all(seed: u64, opts: &VerifyOptions) -> VerifySummary {
    let criteria = vec![
        vc_upper_bound(seed),
        lp_construction(),
        entropy_domination(seed),
        submultiplicativity(seed),
        diffusion_moment(seed),
        rademacher_type(seed),
        generalization_soundness(seed),
        appendix_formulas(seed),
        numerics(seed, opts),
    ];
    let all_passed = criteria.iter().all(|c| c.passed);
    VerifySummary {
        seed,
        criteria,
        all_passed,
    }
}
