//! Norm arithmetic and the shared vector / classifier types.
//!
//! Margins are measured in an ℓ_p norm. The distance from `x` to the
//! hyperplane `{z : <w, z> = b}` is `|<w, x> - b| / ‖w‖_q` with `q` the Hölder
//! conjugate of `p`, so a classifier whose weights have unit dual norm turns
//! the raw slack `<w, x> - b` directly into a signed ℓ_p distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// An ℓ_p norm together with the Rademacher type data of the space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormSpecRepr", into = "NormSpecRepr")]
pub struct NormSpec {
    /// Exponent in `[1, ∞]`.
    pub p: f64,
    /// Rademacher type, `min(2, p)` for finite `p`; ℓ_∞ only has trivial type 1.
    pub type_p: f64,
    /// Type constant `T`; equal to 1 for every ℓ_p.
    pub type_const: f64,
}

#[derive(Serialize, Deserialize)]
struct NormSpecRepr {
    #[serde(with = "exponent")]
    p: f64,
}

impl TryFrom<NormSpecRepr> for NormSpec {
    type Error = Error;
    fn try_from(r: NormSpecRepr) -> Result<Self> {
        NormSpec::lp(r.p)
    }
}

impl From<NormSpec> for NormSpecRepr {
    fn from(n: NormSpec) -> Self {
        NormSpecRepr { p: n.p }
    }
}

impl NormSpec {
    pub fn lp(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::domain(format!(
                "norm exponent must be in [1, inf], got {p}"
            )));
        }
        let type_p = if p.is_infinite() { 1.0 } else { p.min(2.0) };
        Ok(NormSpec {
            p,
            type_p,
            type_const: 1.0,
        })
    }

    /// The Euclidean norm.
    pub fn l2() -> Self {
        NormSpec {
            p: 2.0,
            type_p: 2.0,
            type_const: 1.0,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        self.p == 2.0
    }

    /// Hölder conjugate of `p`.
    pub fn dual(&self) -> f64 {
        dual_exponent(self.p).expect("validated at construction")
    }

    /// Rejects spaces without a usable type (`p = ∞` or trivial type).
    pub fn require_nontrivial_type(&self) -> Result<()> {
        if self.p.is_infinite() || self.type_p <= 1.0 {
            return Err(Error::domain(format!(
                "type-based bounds need Rademacher type in (1, 2], got p = {}",
                self.p
            )));
        }
        Ok(())
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        NormSpec::l2()
    }
}

/// Returns `q` with `1/p + 1/q = 1`.
pub fn dual_exponent(p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::domain(format!("exponent must be >= 1, got {p}")));
    }
    Ok(if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else if p == 2.0 {
        2.0
    } else {
        p / (p - 1.0)
    })
}

/// ‖v‖_p on a raw slice.
pub fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    } else if p == 2.0 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        // scale by the largest entry so |x|^p neither overflows nor underflows
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        scale
            * v.iter()
                .map(|x| (x.abs() / scale).powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A dense feature vector living in an ℓ_p space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub coords: Vec<f64>,
    pub norm: NormSpec,
}

impl FeatureVector {
    pub fn new(coords: Vec<f64>, norm: NormSpec) -> Result<Self> {
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!("coordinate {i} is not finite")));
        }
        Ok(FeatureVector { coords, norm })
    }

    pub fn euclidean(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords, NormSpec::l2())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }
}

/// ‖v‖_p in the vector's own norm.
pub fn norm(v: &FeatureVector) -> f64 {
    lp_norm(&v.coords, v.norm.p)
}

/// An oriented hyperplane `<w, x> = b` with a margin of half-width `delta`.
///
/// `w` has unit dual norm, so `<w, x> - b` is the signed ℓ_p distance of `x`
/// to the hyperplane. A point is outside the margin iff that distance has
/// magnitude at least `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapClassifier {
    pub w: Vec<f64>,
    pub b: f64,
    pub delta: f64,
    #[serde(flatten)]
    pub norm: NormSpec,
}

impl GapClassifier {
    /// Builds a classifier, requiring `‖w‖_q = 1` within the hard tolerance.
    pub fn new(w: Vec<f64>, b: f64, delta: f64, norm: NormSpec) -> Result<Self> {
        let c = GapClassifier { w, b, delta, norm };
        c.validate()?;
        Ok(c)
    }

    /// Rescales `(w, b)` so that `w` has unit dual norm.
    pub fn normalized(w: Vec<f64>, b: f64, delta: f64, norm: NormSpec) -> Result<Self> {
        let q = norm.dual();
        let s = lp_norm(&w, q);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::domain("weight vector must be nonzero and finite"));
        }
        let w = w.into_iter().map(|x| x / s).collect();
        Self::new(w, b / s, delta, norm)
    }

    pub fn dual_norm_deviation(&self) -> f64 {
        (lp_norm(&self.w, self.norm.dual()) - 1.0).abs()
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::domain(format!(
                "margin must be >= 0, got {}",
                self.delta
            )));
        }
        if !self.b.is_finite() || self.w.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("classifier parameters must be finite"));
        }
        let dev = self.dual_norm_deviation();
        if dev > tol::NORM_INVARIANT_HARD {
            return Err(Error::Invariant(format!(
                "‖w‖_q deviates from 1 by {dev:e}"
            )));
        }
        Ok(())
    }

    /// The same hyperplane with the orientation flipped.
    pub fn negated(&self) -> Self {
        GapClassifier {
            w: self.w.iter().map(|x| -x).collect(),
            b: -self.b,
            delta: self.delta,
            norm: self.norm,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub(crate) fn raw_margin(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) - self.b
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// Signed ℓ_p distance `<w, x> - b` of `x` to the classifier's hyperplane.
pub fn signed_margin(c: &GapClassifier, x: &FeatureVector) -> Result<f64> {
    if c.w.len() != x.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: classifier {} vs point {}",
            c.w.len(),
            x.dim()
        )));
    }
    let dev = c.dual_norm_deviation();
    if dev > tol::NORM_INVARIANT_HARD {
        return Err(Error::Invariant(format!(
            "‖w‖_q deviates from 1 by {dev:e}"
        )));
    }
    Ok(c.raw_margin(&x.coords))
}

/// Serde helper writing an exponent as a number, or `"inf"` for ℓ_∞.
pub mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad exponent {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dual_exponents() {
        assert_eq!(dual_exponent(2.0).unwrap(), 2.0);
        assert_eq!(dual_exponent(1.0).unwrap(), f64::INFINITY);
        assert_eq!(dual_exponent(f64::INFINITY).unwrap(), 1.0);
        assert_relative_eq!(dual_exponent(4.0 / 3.0).unwrap(), 4.0, epsilon = 1e-12);
        assert!(matches!(dual_exponent(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn norms_of_small_vectors() {
        let v = |c: Vec<f64>, p| FeatureVector::new(c, NormSpec::lp(p).unwrap()).unwrap();
        assert_eq!(norm(&v(vec![3.0, 4.0], 2.0)), 5.0);
        assert_eq!(norm(&v(vec![1.0, 1.0, 1.0, 1.0], 1.0)), 4.0);
        assert_eq!(norm(&v(vec![1.0, -2.0, 2.0], f64::INFINITY)), 2.0);
        assert_relative_eq!(
            norm(&v(vec![1.0, 1.0], 3.0)),
            2f64.powf(1.0 / 3.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_nonfinite_coordinates() {
        assert!(FeatureVector::euclidean(vec![1.0, f64::NAN]).is_err());
        assert!(NormSpec::lp(0.9).is_err());
    }

    #[test]
    fn margins_of_simple_planes() {
        let x = FeatureVector::euclidean(vec![0.7, 5.0]).unwrap();
        let c = GapClassifier::new(vec![1.0, 0.0], 0.0, 0.0, NormSpec::l2()).unwrap();
        assert_relative_eq!(signed_margin(&c, &x).unwrap(), 0.7);
        let c = GapClassifier::new(vec![1.0, 0.0], 0.7, 0.0, NormSpec::l2()).unwrap();
        assert_eq!(signed_margin(&c, &x).unwrap(), 0.0);
    }

    #[test]
    fn margin_matches_projection_distance() {
        // oracle: minimise ‖x - z‖₂ over z on the plane by walking along the
        // plane from its closest-to-origin point
        let c = GapClassifier::new(vec![0.6, 0.8], 0.0, 0.0, NormSpec::l2()).unwrap();
        let x = FeatureVector::euclidean(vec![3.0, 4.0]).unwrap();
        let along = [-0.8, 0.6];
        let best = (0..=200_000)
            .map(|i| -10.0 + i as f64 * 1e-4)
            .map(|t| {
                let z = [t * along[0], t * along[1]];
                ((x.coords[0] - z[0]).powi(2) + (x.coords[1] - z[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let m = signed_margin(&c, &x).unwrap();
        assert_relative_eq!(m, 5.0, epsilon = 1e-12);
        assert_relative_eq!(m, best, epsilon = 1e-6);
    }

    #[test]
    fn unnormalised_weights_are_rejected() {
        assert!(matches!(
            GapClassifier::new(vec![1.0, 1.0], 0.0, 0.0, NormSpec::l2()),
            Err(Error::Invariant(_))
        ));
        let mut c = GapClassifier::normalized(vec![1.0, 1.0], 0.0, 0.1, NormSpec::l2()).unwrap();
        c.w[0] *= 1.01;
        let x = FeatureVector::euclidean(vec![1.0, 0.0]).unwrap();
        assert!(matches!(signed_margin(&c, &x), Err(Error::Invariant(_))));
    }

    #[test]
    fn classifier_json_round_trip() {
        let c = GapClassifier::normalized(
            vec![0.1, -3.0, 1.0 / 3.0],
            0.2,
            0.5,
            NormSpec::lp(1.5).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"p\":1.5"));
        let back: GapClassifier = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let inf = NormSpec::lp(f64::INFINITY).unwrap();
        let back: NormSpec = serde_json::from_str(&serde_json::to_string(&inf).unwrap()).unwrap();
        assert!(back.p.is_infinite());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 3)
    }

    proptest! {
        #[test]
        fn norm_is_a_norm(a in vec3(), b in vec3(), s in -5.0..5.0f64, p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY])) {
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(lp_norm(&sum, p) <= lp_norm(&a, p) + lp_norm(&b, p) + 1e-10);
            let scaled: Vec<f64> = a.iter().map(|x| s * x).collect();
            prop_assert!((lp_norm(&scaled, p) - s.abs() * lp_norm(&a, p)).abs() <= 1e-10 * (1.0 + lp_norm(&a, p)));
        }

        #[test]
        fn euclidean_margin_is_projection_distance(w in vec3(), x in vec3(), b in -3.0..3.0f64) {
            prop_assume!(lp_norm(&w, 2.0) > 1e-3);
            let c = GapClassifier::normalized(w, b, 0.0, NormSpec::l2()).unwrap();
            let m = signed_margin(&c, &FeatureVector::euclidean(x.clone()).unwrap()).unwrap();
            // projection oracle: z = x - (⟨w,x⟩ - b) w lies on the plane
            let t = dot(&c.w, &x) - c.b;
            let z: Vec<f64> = x.iter().zip(&c.w).map(|(xi, wi)| xi - t * wi).collect();
            prop_assert!((dot(&c.w, &z) - c.b).abs() < 1e-8);
            let d: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
            prop_assert!((m.abs() - lp_norm(&d, 2.0)).abs() < 1e-8);
        }
    }
}
