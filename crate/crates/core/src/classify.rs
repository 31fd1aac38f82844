//! Maximum-margin training and margin feasibility.
//!
//! Both problems reduce to the nearest-point problem between the convex hulls
//! of the two classes: the best achievable margin is half the ℓ_p distance
//! between `conv(P)` and `conv(N)`. The solver runs pairwise Frank-Wolfe steps
//! on the convex weights of each class. Every iterate yields an upper bound
//! `‖d‖_p / 2` (from the current difference vector `d`) and a lower bound from
//! the hyperplane whose normal is the dual map of `d`, so feasibility answers
//! are certified from both sides.

use serde::{Deserialize, Serialize};

use crate::error::{Error, HullCertificate, Result};
use crate::featuregen::LabeledDataset;
use crate::norm::{dot, lp_norm, GapClassifier, NormSpec};
use crate::tol;

/// Iteration cap shared by feasibility queries and training, so that a
/// trained margin is always reproducible by a feasibility query.
pub const MAX_ITER: usize = 100_000;
/// Relative duality gap at which training stops.
pub const TRAIN_REL_GAP: f64 = 1e-9;
/// Largest relative duality gap accepted from training.
pub const TRAIN_MAX_REL_GAP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub feasible: bool,
    /// Best margin attained by a witness; infinite for one-class labelings.
    pub achieved_margin: f64,
    /// Upper bound on the best possible margin.
    pub upper_bound: f64,
    pub witness: Option<GapClassifier>,
    pub iterations: usize,
    /// False when the iteration cap was hit before either bound decided the query.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub classifier: GapClassifier,
    /// Margin `Δ*` attained by `classifier`.
    pub margin: f64,
    /// Upper bound minus attained margin at termination.
    pub duality_gap: f64,
    pub iterations: usize,
}

enum Verdict {
    Continue,
    Stop,
}

struct HullState {
    weights: Vec<f64>,
    d: Vec<f64>,
    lower: f64,
    upper: f64,
    best: Option<(Vec<f64>, f64)>,
    iterations: usize,
}

fn data_scale<P: AsRef<[f64]>>(points: &[P], p: f64) -> f64 {
    let m = points
        .iter()
        .map(|x| lp_norm(x.as_ref(), p))
        .fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// `sign(d)|d|^{p-1} / ‖d‖_p^{p-1}`, which has unit dual norm and `<w, d> = ‖d‖_p`.
fn dual_map(d: &[f64], p: f64, norm_d: f64) -> Vec<f64> {
    if p == 2.0 {
        return d.iter().map(|x| x / norm_d).collect();
    }
    d.iter()
        .map(|x| x.signum() * (x.abs() / norm_d).powf(p - 1.0))
        .collect()
}

/// Minimises `‖d + t u‖_p` over `t ∈ [0, t_max]`.
fn line_search(d: &[f64], u: &[f64], p: f64, t_max: f64) -> f64 {
    if p == 2.0 {
        let uu = dot(u, u);
        if uu == 0.0 {
            return 0.0;
        }
        return (-dot(d, u) / uu).clamp(0.0, t_max);
    }
    let slope = |t: f64| -> f64 {
        d.iter()
            .zip(u)
            .map(|(a, b)| {
                let z = a + t * b;
                z.signum() * z.abs().powf(p - 1.0) * b
            })
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(t_max) <= 0.0 {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn recompute_d<P: AsRef<[f64]>>(
    points: &[P],
    labels: &[i8],
    weights: &[f64],
    dim: usize,
) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    for ((x, &y), &a) in points.iter().zip(labels).zip(weights) {
        if a != 0.0 {
            let s = a * y as f64;
            for (dk, xk) in d.iter_mut().zip(x.as_ref()) {
                *dk += s * xk;
            }
        }
    }
    d
}

/// Pairwise Frank-Wolfe on the hull weights, starting from the class centroids.
/// Both classes must be nonempty. `verdict` sees `(lower, upper)` after every
/// bound update and may stop early.
fn nearest_points<P, F>(
    points: &[P],
    labels: &[i8],
    p: f64,
    max_iter: usize,
    mut verdict: F,
) -> HullState
where
    P: AsRef<[f64]>,
    F: FnMut(f64, f64) -> Verdict,
{
    let dim = points[0].as_ref().len();
    let n_pos = labels.iter().filter(|&&y| y > 0).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0 { 1.0 / n_pos } else { 1.0 / n_neg })
        .collect();
    let d = recompute_d(points, labels, &weights, dim);
    let mut st = HullState {
        weights,
        d,
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        best: None,
        iterations: 0,
    };
    let mut scores = vec![0.0; points.len()];
    let mut u = vec![0.0; dim];
    loop {
        let norm_d = lp_norm(&st.d, p);
        st.upper = st.upper.min(0.5 * norm_d);
        if norm_d == 0.0 {
            verdict(st.lower, st.upper);
            break;
        }
        let w = dual_map(&st.d, p, norm_d);
        for (s, x) in scores.iter_mut().zip(points) {
            *s = dot(&w, x.as_ref());
        }
        // FW vertices (most violating) and away vertices (worst active) per class
        let (mut pi, mut pj, mut ni, mut nj) = (usize::MAX, usize::MAX, usize::MAX, usize::MAX);
        for (k, (&s, &y)) in scores.iter().zip(labels).enumerate() {
            let active = st.weights[k] > 0.0;
            if y > 0 {
                if pi == usize::MAX || s < scores[pi] {
                    pi = k;
                }
                if active && (pj == usize::MAX || s > scores[pj]) {
                    pj = k;
                }
            } else {
                if ni == usize::MAX || s > scores[ni] {
                    ni = k;
                }
                if active && (nj == usize::MAX || s < scores[nj]) {
                    nj = k;
                }
            }
        }
        let lower = 0.5 * (scores[pi] - scores[ni]);
        if lower > st.lower {
            st.lower = lower;
            st.best = Some((w, 0.5 * (scores[pi] + scores[ni])));
        }
        if matches!(verdict(st.lower, st.upper), Verdict::Stop) || st.iterations >= max_iter {
            break;
        }
        let gap_pos = scores[pj] - scores[pi];
        let gap_neg = scores[ni] - scores[nj];
        if gap_pos.max(gap_neg) <= 0.0 {
            break;
        }
        // moving weight t from j to i changes d by ±t(x_i - x_j)
        let (i, j, sign) = if gap_pos >= gap_neg {
            (pi, pj, 1.0)
        } else {
            (ni, nj, -1.0)
        };
        for ((uk, a), b) in u.iter_mut().zip(points[i].as_ref()).zip(points[j].as_ref()) {
            *uk = sign * (a - b);
        }
        let t = line_search(&st.d, &u, p, st.weights[j]);
        st.iterations += 1;
        if t <= 0.0 {
            break;
        }
        if t >= st.weights[j] {
            st.weights[i] += st.weights[j];
            st.weights[j] = 0.0;
        } else {
            st.weights[i] += t;
            st.weights[j] -= t;
        }
        if st.iterations.is_multiple_of(64) {
            st.d = recompute_d(points, labels, &st.weights, dim);
        } else {
            for (dk, uk) in st.d.iter_mut().zip(&u) {
                *dk += t * uk;
            }
        }
    }
    st
}

fn check_inputs<P: AsRef<[f64]>>(points: &[P], labels: &[i8], norm: NormSpec) -> Result<usize> {
    if points.len() != labels.len() {
        return Err(Error::domain("points and labels differ in length"));
    }
    if !(norm.p > 1.0 && norm.p.is_finite()) {
        return Err(Error::domain(format!(
            "margin solver needs p in (1, inf), got {}",
            norm.p
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::domain(format!("labels must be ±1, got {y}")));
    }
    let dim = points.first().map_or(0, |x| x.as_ref().len());
    if points.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::domain("points differ in dimension"));
    }
    Ok(dim)
}

/// A plane that puts every point at least `delta + 1` on the side of `sign`.
fn far_plane<P: AsRef<[f64]>>(
    points: &[P],
    dim: usize,
    sign: f64,
    delta: f64,
    norm: NormSpec,
) -> Result<GapClassifier> {
    let mut w = vec![0.0; dim.max(1)];
    w[0] = 1.0;
    let first = |x: &P| x.as_ref().first().copied().unwrap_or(0.0);
    let b = if sign > 0.0 {
        points.iter().map(first).fold(f64::INFINITY, f64::min) - delta - 1.0
    } else {
        points.iter().map(first).fold(f64::NEG_INFINITY, f64::max) + delta + 1.0
    };
    let b = if b.is_finite() { b } else { 0.0 };
    GapClassifier::new(w, b, delta, norm)
}

/// Decides whether some unit-dual-norm `(w, b)` has `y_i(<w, x_i> - b) ≥ Δ`
/// for every sample, up to [`tol::FEASIBILITY`].
///
/// One-class labelings are always feasible (a distant plane). For two classes
/// a witness is feasible iff its margin is at least `Δ - 1e-6` and exceeds the
/// separation floor; the query is certified infeasible once the hull distance
/// bound drops below either threshold.
pub fn gap_feasible<P: AsRef<[f64]>>(
    points: &[P],
    labels: &[i8],
    delta: f64,
    norm: NormSpec,
) -> Result<FeasibilityResult> {
    let dim = check_inputs(points, labels, norm)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!(
            "margin must be finite and >= 0, got {delta}"
        )));
    }
    let has_pos = labels.iter().any(|&y| y > 0);
    let has_neg = labels.iter().any(|&y| y < 0);
    if !(has_pos && has_neg) {
        let sign = if has_neg { -1.0 } else { 1.0 };
        return Ok(FeasibilityResult {
            feasible: true,
            achieved_margin: f64::INFINITY,
            upper_bound: f64::INFINITY,
            witness: Some(far_plane(points, dim, sign, delta, norm)?),
            iterations: 0,
            certified: true,
        });
    }
    let sep = tol::SEPARATION * data_scale(points, norm.p);
    let target = delta - tol::FEASIBILITY;
    let st = nearest_points(points, labels, norm.p, MAX_ITER, |lo, hi| {
        if (lo >= target && lo > sep) || hi < target || hi <= sep {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    });
    let feasible = st.lower >= target && st.lower > sep;
    let certified = feasible || st.upper < target || st.upper <= sep;
    let witness = match (&st.best, feasible) {
        (Some((w, b)), true) => Some(GapClassifier::normalized(w.clone(), *b, delta, norm)?),
        _ => None,
    };
    Ok(FeasibilityResult {
        feasible,
        achieved_margin: st.lower.max(0.0),
        upper_bound: st.upper,
        witness,
        iterations: st.iterations,
        certified,
    })
}

/// Finds the unit-dual-norm hyperplane maximising the minimum signed margin.
pub fn max_margin_train(data: &LabeledDataset) -> Result<TrainResult> {
    let points = data.points();
    let labels = data.labels();
    let norm = data.norm();
    check_inputs(&points, &labels, norm)?;
    if !(labels.contains(&1) && labels.contains(&-1)) {
        return Err(Error::domain("training needs samples of both labels"));
    }
    let sep = tol::SEPARATION * data_scale(&points, norm.p);
    let st = nearest_points(&points, &labels, norm.p, MAX_ITER, |lo, hi| {
        if hi <= sep || hi - lo <= TRAIN_REL_GAP * hi {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    });
    if st.upper <= sep || st.lower <= sep {
        if st.upper > sep && st.upper - st.lower.max(0.0) > TRAIN_MAX_REL_GAP * st.upper {
            return Err(Error::Numerical {
                what: "margin solver did not decide separability".into(),
                residual: st.upper - st.lower,
            });
        }
        let split = |sign: i8| -> Vec<(usize, f64)> {
            labels
                .iter()
                .enumerate()
                .filter(|&(k, &y)| y == sign && st.weights[k] > 0.0)
                .map(|(k, _)| (k, st.weights[k]))
                .collect()
        };
        return Err(Error::NotSeparable(Box::new(HullCertificate {
            positive: split(1),
            negative: split(-1),
            residual: 2.0 * st.upper,
        })));
    }
    let gap = st.upper - st.lower;
    if gap > TRAIN_MAX_REL_GAP * st.upper {
        return Err(Error::Numerical {
            what: "margin solver hit its iteration cap".into(),
            residual: gap,
        });
    }
    let (w, b) = st.best.expect("positive lower bound implies a witness");
    let classifier = GapClassifier::normalized(w, b, st.lower, norm)?;
    let margin = points
        .iter()
        .zip(&labels)
        .map(|(x, &y)| y as f64 * classifier.raw_margin(x))
        .fold(f64::INFINITY, f64::min);
    Ok(TrainResult {
        classifier: classifier.with_delta(margin),
        margin,
        duality_gap: st.upper - margin,
        iterations: st.iterations,
    })
}

/// Fraction of samples with a negative signed margin. In gap-tolerant mode,
/// samples strictly inside the margin are never counted as errors.
pub fn empirical_risk(c: &GapClassifier, data: &LabeledDataset, gap_tolerant: bool) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("empirical risk of an empty dataset"));
    }
    if c.w.len() != data.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: classifier {} vs data {}",
            c.w.len(),
            data.dim()
        )));
    }
    let errors = data
        .samples
        .iter()
        .filter(|s| {
            let m = c.raw_margin(&s.x.coords);
            if gap_tolerant && m.abs() < c.delta {
                return false;
            }
            s.y as f64 * m < 0.0
        })
        .count();
    Ok(errors as f64 / data.len() as f64)
}

/// Index of the candidate with the lowest empirical risk (lowest index on ties).
pub fn erm_select(candidates: &[GapClassifier], data: &LabeledDataset) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::domain("no candidate classifiers"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let r = empirical_risk(c, data, false)?;
        if r < best.1 {
            best = (i, r);
        }
    }
    Ok(best.0)
}

pub fn classifier_to_json(c: &GapClassifier) -> Result<String> {
    Ok(serde_json::to_string_pretty(c)?)
}

pub fn classifier_from_json(text: &str) -> Result<GapClassifier> {
    let c: GapClassifier = serde_json::from_str(text)?;
    GapClassifier::new(c.w, c.b, c.delta, c.norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuregen::{
        plant_labeled_dataset, Envelope, Generator, HeavyTailSpec, PlantOptions,
    };
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn l2() -> NormSpec {
        NormSpec::l2()
    }

    fn dataset(points: Vec<Vec<f64>>, labels: &[i8], norm: NormSpec) -> LabeledDataset {
        LabeledDataset::from_parts(points, labels, norm).unwrap()
    }

    /// Best margin over `dirs` random unit directions, then a shrinking local search.
    fn direction_oracle(
        points: &[Vec<f64>],
        labels: &[i8],
        dirs: usize,
        rng: &mut RngStream,
    ) -> f64 {
        let margin = |w: &[f64]| {
            let n = lp_norm(w, 2.0);
            let (mut lo_p, mut hi_n) = (f64::INFINITY, f64::NEG_INFINITY);
            for (x, &y) in points.iter().zip(labels) {
                let s = dot(w, x) / n;
                if y > 0 {
                    lo_p = lo_p.min(s);
                } else {
                    hi_n = hi_n.max(s);
                }
            }
            0.5 * (lo_p - hi_n)
        };
        let dim = points[0].len();
        let mut best_w = vec![0.0; dim];
        let mut best = f64::NEG_INFINITY;
        for _ in 0..dirs {
            let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let m = margin(&w);
            if m > best {
                best = m;
                best_w = w.iter().map(|v| v / lp_norm(&w, 2.0)).collect();
            }
        }
        let mut radius = 0.05;
        while radius > 1e-9 {
            let mut improved = false;
            for _ in 0..200 {
                let w: Vec<f64> = best_w
                    .iter()
                    .map(|v| v + radius * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let m = margin(&w);
                if m > best {
                    best = m;
                    best_w = w.iter().map(|v| v / lp_norm(&w, 2.0)).collect();
                    improved = true;
                }
            }
            if !improved {
                radius *= 0.5;
            }
        }
        best
    }

    /// Exhaustive hull-intersection test: the hulls meet iff the system
    /// `Σλ_i x_i = Σμ_j x_j, Σλ = Σμ = 1, λ, μ ≥ 0` has a basic solution,
    /// i.e. one supported on at most `dim + 2` linearly independent columns.
    fn hulls_intersect(points: &[Vec<f64>], labels: &[i8]) -> bool {
        let dim = points[0].len();
        let rows = dim + 2;
        let column = |k: usize| -> Vec<f64> {
            let s = labels[k] as f64;
            let mut c: Vec<f64> = points[k].iter().map(|v| s * v).collect();
            c.push(if labels[k] > 0 { 1.0 } else { 0.0 });
            c.push(if labels[k] < 0 { 1.0 } else { 0.0 });
            c
        };
        let mut rhs = vec![0.0; dim];
        rhs.extend([1.0, 1.0]);
        let n = points.len();
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
            if support.len() > rows {
                continue;
            }
            let cols: Vec<Vec<f64>> = support.iter().map(|&k| column(k)).collect();
            let m = cols.len();
            // normal equations solved by Gaussian elimination with pivoting
            let mut a = vec![vec![0.0; m + 1]; m];
            for i in 0..m {
                for j in 0..m {
                    a[i][j] = dot(&cols[i], &cols[j]);
                }
                a[i][m] = dot(&cols[i], &rhs);
            }
            let mut singular = false;
            for c in 0..m {
                let piv = (c..m)
                    .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                    .unwrap();
                if a[piv][c].abs() < 1e-10 {
                    singular = true;
                    break;
                }
                a.swap(c, piv);
                for r in 0..m {
                    if r != c {
                        let f = a[r][c] / a[c][c];
                        let (pivot, row) = if r < c {
                            let (lo, hi) = a.split_at_mut(c);
                            (&hi[0], &mut lo[r])
                        } else {
                            let (lo, hi) = a.split_at_mut(r);
                            (&lo[c], &mut hi[0])
                        };
                        for (x, y) in row[c..=m].iter_mut().zip(&pivot[c..=m]) {
                            *x -= f * y;
                        }
                    }
                }
            }
            if singular {
                continue;
            }
            let z: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
            if z.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let resid: f64 = (0..rows)
                .map(|r| {
                    let lhs: f64 = cols.iter().zip(&z).map(|(c, zi)| c[r] * zi).sum();
                    (lhs - rhs[r]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if resid < 1e-9 {
                return true;
            }
        }
        false
    }

    #[test]
    fn symmetric_pair() {
        let d = dataset(vec![vec![-1.0], vec![1.0]], &[-1, 1], l2());
        let r = max_margin_train(&d).unwrap();
        assert_relative_eq!(r.margin, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.classifier.w[0], 1.0, epsilon = 1e-12);
        assert!(r.classifier.b.abs() < 1e-12);
    }

    #[test]
    fn basis_dichotomies_reach_half() {
        for mask in 1u32..15 {
            let points: Vec<Vec<f64>> = (0..4)
                .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            let labels: Vec<i8> = (0..4)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            let r = max_margin_train(&dataset(points, &labels, l2())).unwrap();
            assert!(r.margin >= 0.5 - 1e-12, "mask {mask}: {}", r.margin);
        }
    }

    #[test]
    fn lp_basis_balanced_split_is_exact() {
        let p = 4.0 / 3.0;
        let norm = NormSpec::lp(p).unwrap();
        let points: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..8).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let labels = [1, 1, 1, 1, -1, -1, -1, -1];
        let delta = 8f64.powf((1.0 - p) / p);
        let r = gap_feasible(&points, &labels, delta, norm).unwrap();
        assert!(r.feasible && r.certified);
        assert_relative_eq!(r.achieved_margin, delta, max_relative = 1e-12);
        assert_relative_eq!(r.upper_bound, delta, max_relative = 1e-12);
        let w = r.witness.unwrap();
        for (x, &y) in points.iter().zip(&labels) {
            assert!(y as f64 * w.raw_margin(x) >= delta - 1e-9);
        }
    }

    #[test]
    fn direction_oracle_agreement_3d() {
        let mut rng = RngStream::new(11, 0);
        let mut checked = 0;
        while checked < 10 {
            let pts: Vec<Vec<f64>> = (0..20)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let w: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let labels: Vec<i8> = pts
                .iter()
                .map(|x| if dot(&w, x) > 0.1 { 1 } else { -1 })
                .collect();
            if !labels.contains(&1) || !labels.contains(&-1) {
                continue;
            }
            let r = max_margin_train(&dataset(pts.clone(), &labels, l2())).unwrap();
            let oracle = direction_oracle(&pts, &labels, 20_000, &mut rng);
            assert!(
                r.margin >= oracle - 1e-9,
                "solver {} below oracle {}",
                r.margin,
                oracle
            );
            assert!(
                (r.margin - oracle).abs() <= 1e-3 * r.margin,
                "solver {} oracle {}",
                r.margin,
                oracle
            );
            checked += 1;
        }
    }

    #[test]
    fn training_certifies_its_margin() {
        let gen = Generator::HeavyTail(HeavyTailSpec::magnitude(16, 1.0, 1.5, Envelope::Exact));
        for p in [2.0, 1.5, 3.0] {
            let opts = PlantOptions {
                random_offset: false,
                norm: NormSpec::lp(p).unwrap(),
            };
            let d =
                plant_labeled_dataset(&gen, 40, 0.2, opts, &mut RngStream::new(12, p.to_bits()))
                    .unwrap();
            let r = max_margin_train(&d).unwrap();
            assert!(
                r.margin >= 0.2 - 1e-9,
                "p={p}: planted margin is attainable"
            );
            assert!(r.duality_gap <= TRAIN_MAX_REL_GAP * r.margin);
            let again =
                gap_feasible(&d.points(), &d.labels(), r.margin * (1.0 - 1e-4), d.norm()).unwrap();
            assert!(again.feasible, "p={p}: {again:?} vs {}", r.margin);
            assert!(empirical_risk(&r.classifier, &d, false).unwrap() == 0.0);
        }
    }

    #[test]
    fn coincident_opposite_points() {
        let pts = vec![vec![0.3, 0.3], vec![0.3, 0.3]];
        let r = gap_feasible(&pts, &[1, -1], 0.1, l2()).unwrap();
        assert!(!r.feasible && r.certified);
        match max_margin_train(&dataset(pts, &[1, -1], l2())) {
            Err(Error::NotSeparable(cert)) => {
                assert_eq!(cert.positive, vec![(0, 1.0)]);
                assert_eq!(cert.negative, vec![(1, 1.0)]);
                assert_eq!(cert.residual, 0.0);
            }
            other => panic!("expected a separability error, got {other:?}"),
        }
    }

    #[test]
    fn collinear_alternating_labels() {
        let pts = vec![vec![-1.0], vec![0.0], vec![1.0]];
        for delta in [0.0, 0.1, 1.0] {
            assert!(
                !gap_feasible(&pts, &[1, -1, 1], delta, l2())
                    .unwrap()
                    .feasible
            );
        }
        assert!(matches!(
            max_margin_train(&dataset(pts, &[1, -1, 1], l2())),
            Err(Error::NotSeparable(_))
        ));
    }

    #[test]
    fn single_point_far_plane() {
        let r = gap_feasible(&[vec![2.0, 0.0]], &[1], 1.0, l2()).unwrap();
        assert!(r.feasible);
        let w = r.witness.unwrap();
        assert!(w.raw_margin(&[2.0, 0.0]) >= 1.0);
    }

    #[test]
    fn one_class_training_is_rejected() {
        assert!(matches!(
            max_margin_train(&dataset(vec![vec![1.0]], &[1], l2())),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn extreme_exponents_are_rejected() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(gap_feasible(&pts, &[1, -1], 0.1, NormSpec::lp(1.0).unwrap()).is_err());
        assert!(gap_feasible(&pts, &[1, -1], 0.1, NormSpec::lp(f64::INFINITY).unwrap()).is_err());
    }

    #[test]
    fn zero_margin_matches_hull_oracle() {
        let mut rng = RngStream::new(13, 0);
        let mut disagreements = Vec::new();
        for case in 0..400 {
            let n = rng.random_range(2..=8);
            let dim = rng.random_range(1..=3);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.random_range(-2i32..=2) as f64)
                        .collect()
                })
                .collect();
            let labels: Vec<i8> = (0..n)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect();
            if !labels.contains(&1) || !labels.contains(&-1) {
                continue;
            }
            let solver = gap_feasible(&pts, &labels, 0.0, l2()).unwrap();
            assert!(solver.certified, "case {case} undecided");
            if solver.feasible == hulls_intersect(&pts, &labels) {
                disagreements.push(case);
            }
        }
        assert!(disagreements.is_empty(), "{disagreements:?}");
    }

    #[test]
    fn risk_modes() {
        let pts = vec![vec![2.0], vec![3.0], vec![-2.0], vec![0.05]];
        let d = dataset(pts, &[1, 1, -1, -1], l2());
        let c = GapClassifier::new(vec![1.0], 0.0, 0.1, l2()).unwrap();
        assert_eq!(empirical_risk(&c, &d, true).unwrap(), 0.0);
        assert_eq!(empirical_risk(&c, &d, false).unwrap(), 0.25);
    }

    #[test]
    fn planted_and_negated_risk() {
        let gen = Generator::HeavyTail(HeavyTailSpec::magnitude(6, 1.0, 2.0, Envelope::Uniform));
        let d = plant_labeled_dataset(
            &gen,
            100,
            0.0,
            PlantOptions::default(),
            &mut RngStream::new(14, 0),
        )
        .unwrap();
        let c = d.planted_classifier().unwrap().clone();
        assert_eq!(empirical_risk(&c, &d, false).unwrap(), 0.0);
        let neg = c.negated();
        // only points exactly on the plane could escape; none occur with continuous data
        assert_eq!(empirical_risk(&neg, &d, false).unwrap(), 1.0);
        assert_eq!(erm_select(&[neg.clone(), c.clone()], &d).unwrap(), 1);
        assert_eq!(erm_select(std::slice::from_ref(&c), &d).unwrap(), 0);
        assert!(erm_select(&[], &d).is_err());
    }

    #[test]
    fn erm_picks_minimum_with_lowest_index() {
        let gen = Generator::HeavyTail(HeavyTailSpec::magnitude(2, 1.0, 1.5, Envelope::Uniform));
        let d = plant_labeled_dataset(
            &gen,
            60,
            0.0,
            PlantOptions::default(),
            &mut RngStream::new(15, 0),
        )
        .unwrap();
        let mut rng = RngStream::new(15, 1);
        let cands: Vec<GapClassifier> = (0..100)
            .map(|_| {
                let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                GapClassifier::normalized(w, 0.0, 0.0, l2()).unwrap()
            })
            .collect();
        let risks: Vec<f64> = cands
            .iter()
            .map(|c| empirical_risk(c, &d, false).unwrap())
            .collect();
        let i = erm_select(&cands, &d).unwrap();
        assert!(risks.iter().all(|&r| risks[i] <= r));
        assert_eq!(risks.iter().position(|&r| r == risks[i]), Some(i));
    }

    #[test]
    fn classifier_json_round_trip() {
        let c = GapClassifier::normalized(
            vec![0.1, -0.7, 1.0 / 3.0],
            0.123456789,
            0.25,
            NormSpec::lp(1.5).unwrap(),
        )
        .unwrap();
        let text = classifier_to_json(&c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["b", "delta", "p", "w"]);
        let back = classifier_from_json(&text).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn feasibility_is_monotone_in_delta(
            pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..7),
            signs in prop::collection::vec(any::<bool>(), 7),
            d1 in 0.0f64..0.6,
            d2 in 0.0f64..0.6,
        ) {
            let labels: Vec<i8> = pts.iter().zip(&signs).map(|(_, &s)| if s { 1 } else { -1 }).collect();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let at_hi = gap_feasible(&pts, &labels, hi, l2()).unwrap();
            let at_lo = gap_feasible(&pts, &labels, lo, l2()).unwrap();
            prop_assert!(!at_hi.feasible || at_lo.feasible);
        }

        #[test]
        fn margin_scales_with_data(
            pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 4..10),
            s in 0.1f64..10.0,
        ) {
            let labels: Vec<i8> = pts.iter().map(|x| if x[0] + 0.3 * x[1] > 0.0 { 1 } else { -1 }).collect();
            prop_assume!(labels.contains(&1) && labels.contains(&-1));
            let base = max_margin_train(&dataset(pts.clone(), &labels, l2()));
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            prop_assume!(base.margin > 1e-6);
            let scaled: Vec<Vec<f64>> = pts.iter().map(|x| x.iter().map(|v| v * s).collect()).collect();
            let r = max_margin_train(&dataset(scaled, &labels, l2())).unwrap();
            prop_assert!((r.margin - s * base.margin).abs() <= 1e-6 * s * base.margin);
        }

        #[test]
        fn witnesses_meet_their_margin(
            pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..9),
            signs in prop::collection::vec(any::<bool>(), 9),
            delta in 0.0f64..0.5,
            p in 1.2f64..4.0,
        ) {
            let labels: Vec<i8> = pts.iter().zip(&signs).map(|(_, &s)| if s { 1 } else { -1 }).collect();
            let norm = NormSpec::lp(p).unwrap();
            let r = gap_feasible(&pts, &labels, delta, norm).unwrap();
            if r.feasible {
                let w = r.witness.unwrap();
                prop_assert!(w.dual_norm_deviation() <= tol::NORM_INVARIANT);
                for (x, &y) in pts.iter().zip(&labels) {
                    prop_assert!(y as f64 * w.raw_margin(x) >= delta - tol::FEASIBILITY);
                }
            }
            prop_assert!(r.achieved_margin <= r.upper_bound + 1e-12);
        }
    }
}
