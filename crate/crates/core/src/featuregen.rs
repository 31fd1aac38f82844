//! Synthetic heavy-tailed data and planted margin-separable labelings.
//!
//! Two power-law models are provided. In the magnitude model coordinate `i`
//! (1-indexed) has `|x_i| ≤ C i^{-α}`; in the sparse-indicator model `x_i` is
//! 1 with probability `min(1, C i^{-α})` and 0 otherwise.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::norm::{lp_norm, FeatureVector, GapClassifier, NormSpec};
use crate::rng::RngStream;

/// Number of draws used to probe whether a planted margin is attainable.
pub const PLANT_PROBE_DRAWS: usize = 100_000;
/// Minimum acceptance rate of the probe.
pub const PLANT_MIN_RATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    MagnitudeDecay,
    SparseIndicator,
}

/// How the magnitude model fills the envelope `C i^{-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// `|x_i| = C i^{-α}` with a random sign.
    #[default]
    Exact,
    /// `|x_i| = U · C i^{-α}` with `U ~ Uniform[0, 1]` and a random sign.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTailSpec {
    pub n: usize,
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub mode: TailMode,
    #[serde(default)]
    pub envelope: Envelope,
}

impl HeavyTailSpec {
    pub fn magnitude(n: usize, c: f64, alpha: f64, envelope: Envelope) -> Self {
        HeavyTailSpec {
            n,
            c,
            alpha,
            mode: TailMode::MagnitudeDecay,
            envelope,
        }
    }

    pub fn sparse(n: usize, c: f64, alpha: f64) -> Self {
        HeavyTailSpec {
            n,
            c,
            alpha,
            mode: TailMode::SparseIndicator,
            envelope: Envelope::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::domain(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::domain(format!("C must be positive, got {}", self.c)));
        }
        if self.n == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(())
    }

    /// `C i^{-α}` for 1-indexed `i`.
    pub fn envelope_at(&self, i: usize) -> f64 {
        self.c * (i as f64).powf(-self.alpha)
    }
}

pub fn gen_heavy_magnitude(
    spec: &HeavyTailSpec,
    norm: NormSpec,
    rng: &mut RngStream,
) -> Result<FeatureVector> {
    spec.validate()?;
    if spec.mode != TailMode::MagnitudeDecay {
        return Err(Error::domain("spec is not a magnitude-decay model"));
    }
    let coords = (1..=spec.n)
        .map(|i| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let scale = match spec.envelope {
                Envelope::Exact => 1.0,
                Envelope::Uniform => rng.random::<f64>(),
            };
            sign * scale * spec.envelope_at(i)
        })
        .collect();
    FeatureVector::new(coords, norm)
}

pub fn gen_sparse_indicator(
    spec: &HeavyTailSpec,
    norm: NormSpec,
    rng: &mut RngStream,
) -> Result<FeatureVector> {
    spec.validate()?;
    if spec.mode != TailMode::SparseIndicator {
        return Err(Error::domain("spec is not a sparse-indicator model"));
    }
    let coords = (1..=spec.n)
        .map(|i| {
            if rng.random_bool(spec.envelope_at(i).min(1.0)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    FeatureVector::new(coords, norm)
}

/// A source of i.i.d. feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    HeavyTail(HeavyTailSpec),
    /// Always returns the same point.
    PointMass {
        coords: Vec<f64>,
    },
    /// Uniform over a finite list of points (e.g. the vertices of an embedded graph).
    Empirical {
        points: Vec<Vec<f64>>,
    },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Generator::HeavyTail(s) => s.validate(),
            Generator::PointMass { coords } => {
                FeatureVector::euclidean(coords.clone()).map(|_| ())?;
                if coords.is_empty() {
                    return Err(Error::domain("point mass needs a nonempty point"));
                }
                Ok(())
            }
            Generator::Empirical { points } => {
                let d = points
                    .first()
                    .map(Vec::len)
                    .ok_or_else(|| Error::domain("empirical generator needs points"))?;
                if d == 0
                    || points
                        .iter()
                        .any(|p| p.len() != d || p.iter().any(|x| !x.is_finite()))
                {
                    return Err(Error::domain(
                        "empirical points must share a positive dimension and be finite",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::HeavyTail(s) => s.n,
            Generator::PointMass { coords } => coords.len(),
            Generator::Empirical { points } => points.first().map_or(0, Vec::len),
        }
    }

    pub fn sample(&self, norm: NormSpec, rng: &mut RngStream) -> Result<FeatureVector> {
        match self {
            Generator::HeavyTail(s) => match s.mode {
                TailMode::MagnitudeDecay => gen_heavy_magnitude(s, norm, rng),
                TailMode::SparseIndicator => gen_sparse_indicator(s, norm, rng),
            },
            Generator::PointMass { coords } => FeatureVector::new(coords.clone(), norm),
            Generator::Empirical { points } => {
                if points.is_empty() {
                    return Err(Error::domain("empirical generator needs points"));
                }
                let i = rng.random_range(0..points.len());
                FeatureVector::new(points[i].clone(), norm)
            }
        }
    }

    pub fn sample_n(
        &self,
        count: usize,
        norm: NormSpec,
        rng: &mut RngStream,
    ) -> Result<Vec<FeatureVector>> {
        (0..count).map(|_| self.sample(norm, rng)).collect()
    }

    /// An upper bound on `E‖x‖₂²`: `C²ζ(2α)` for the magnitude model, exact
    /// values for the others.
    pub fn second_moment_bound(&self) -> Result<f64> {
        Ok(match self {
            Generator::HeavyTail(s) => match s.mode {
                TailMode::MagnitudeDecay => s.c * s.c * bounds::zeta(2.0 * s.alpha)?,
                TailMode::SparseIndicator => (1..=s.n).map(|i| s.envelope_at(i).min(1.0)).sum(),
            },
            Generator::PointMass { coords } => coords.iter().map(|x| x * x).sum(),
            Generator::Empirical { points } => {
                points
                    .iter()
                    .map(|p| p.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    / points.len() as f64
            }
        })
    }

    /// An upper bound on `(E‖x‖_p^p)^{1/p}`: `C ζ(pα)^{1/p}` for the
    /// magnitude model, exact values for the others.
    pub fn moment_root(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::domain(format!(
                "moment exponent must be finite and >= 1, got {p}"
            )));
        }
        Ok(match self {
            Generator::HeavyTail(s) => match s.mode {
                TailMode::MagnitudeDecay => s.c * bounds::zeta(p * s.alpha)?.powf(1.0 / p),
                TailMode::SparseIndicator => (1..=s.n)
                    .map(|i| s.envelope_at(i).min(1.0))
                    .sum::<f64>()
                    .powf(1.0 / p),
            },
            Generator::PointMass { coords } => lp_norm(coords, p),
            Generator::Empirical { points } => {
                let m =
                    points.iter().map(|x| lp_norm(x, p).powf(p)).sum::<f64>() / points.len() as f64;
                m.powf(1.0 / p)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: FeatureVector,
    pub y: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Planted {
        generator: Generator,
        planted: GapClassifier,
        delta: f64,
        stream_id: u64,
    },
    Imported {
        source: String,
    },
    Manual,
}

/// Labelled samples sharing one dimension and one norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>, seed: u64, provenance: Provenance) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (d, norm) = (first.x.dim(), first.x.norm);
            for (i, s) in samples.iter().enumerate() {
                if s.x.dim() != d || s.x.norm != norm {
                    return Err(Error::domain(format!(
                        "sample {i} differs in dimension or norm"
                    )));
                }
                if s.y != 1 && s.y != -1 {
                    return Err(Error::domain(format!(
                        "sample {i} has label {} (must be ±1)",
                        s.y
                    )));
                }
            }
        }
        Ok(LabeledDataset {
            samples,
            seed,
            provenance,
        })
    }

    /// Builds a dataset from raw coordinates and labels.
    pub fn from_parts(points: Vec<Vec<f64>>, labels: &[i8], norm: NormSpec) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::domain("points and labels differ in length"));
        }
        let samples = points
            .into_iter()
            .zip(labels)
            .map(|(c, &y)| {
                Ok(Sample {
                    x: FeatureVector::new(c, norm)?,
                    y,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(samples, 0, Provenance::Manual)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.dim())
    }

    pub fn norm(&self) -> NormSpec {
        self.samples.first().map_or_else(NormSpec::l2, |s| s.x.norm)
    }

    pub fn points(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.x.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<i8> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// Writes `x_1..x_n,label` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.x.coords.iter().map(|x| format!("{x:.16e}")).collect();
            row.push(s.y.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, norm: NormSpec, source: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 2 || header.get(n - 1) != Some("label") {
            return Err(Error::Parse("header must be x_1..x_n,label".into()));
        }
        for (i, h) in header.iter().take(n - 1).enumerate() {
            if h != format!("x_{}", i + 1) {
                return Err(Error::Parse(format!("unexpected column {h:?}")));
            }
        }
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", row + 1));
            let coords = (0..n - 1)
                .map(|i| {
                    rec.get(i)
                        .and_then(|s| s.trim().parse::<f64>().ok())
                        .ok_or_else(|| bad("coordinate"))
                })
                .collect::<Result<Vec<f64>>>()?;
            let y = rec
                .get(n - 1)
                .and_then(|s| s.trim().parse::<i8>().ok())
                .ok_or_else(|| bad("label"))?;
            samples.push(Sample {
                x: FeatureVector::new(coords, norm)?,
                y,
            });
        }
        Self::new(
            samples,
            0,
            Provenance::Imported {
                source: source.to_string(),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantOptions {
    /// Draw the hidden offset uniformly from `[-0.5, 0.5]` instead of 0.
    pub random_offset: bool,
    pub norm: NormSpec,
}

/// Draws a hidden unit-dual-norm hyperplane and labels `ell` generated points
/// by its side, rejecting points that fall within `delta` of it.
pub fn plant_labeled_dataset(
    gen: &Generator,
    ell: usize,
    delta: f64,
    opts: PlantOptions,
    rng: &mut RngStream,
) -> Result<LabeledDataset> {
    gen.validate()?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!("margin must be >= 0, got {delta}")));
    }
    if ell == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let stream_id = rng.stream_id();
    let norm = opts.norm;
    let dim = gen.dim();
    let planted = loop {
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if lp_norm(&w, 2.0) > 1e-12 {
            let b = if opts.random_offset {
                rng.random_range(-0.5..=0.5)
            } else {
                0.0
            };
            // normalise to unit dual norm, then put the offset in distance units
            let q = norm.dual();
            let s = lp_norm(&w, q);
            let w: Vec<f64> = w.into_iter().map(|x| x / s).collect();
            break GapClassifier::new(w, b, delta, norm)?;
        }
    };

    if delta > 0.0 {
        let mut probe = rng.fork(u64::MAX);
        let mut hits = 0usize;
        for _ in 0..PLANT_PROBE_DRAWS {
            let x = gen.sample(norm, &mut probe)?;
            if planted.raw_margin(&x.coords).abs() >= delta {
                hits += 1;
            }
        }
        let rate = hits as f64 / PLANT_PROBE_DRAWS as f64;
        if rate < PLANT_MIN_RATE {
            return Err(Error::InfeasibleMargin {
                delta,
                rate,
                probes: PLANT_PROBE_DRAWS,
            });
        }
    }

    let cap = ell.saturating_mul(PLANT_PROBE_DRAWS).max(PLANT_PROBE_DRAWS);
    let mut samples = Vec::with_capacity(ell);
    let mut draws = 0usize;
    while samples.len() < ell {
        if draws >= cap {
            return Err(Error::InfeasibleMargin {
                delta,
                rate: samples.len() as f64 / draws as f64,
                probes: draws,
            });
        }
        draws += 1;
        let x = gen.sample(norm, rng)?;
        let m = planted.raw_margin(&x.coords);
        if m.abs() < delta {
            continue;
        }
        samples.push(Sample {
            x,
            y: if m >= 0.0 { 1 } else { -1 },
        });
    }
    LabeledDataset::new(
        samples,
        rng.seed(),
        Provenance::Planted {
            generator: gen.clone(),
            planted,
            delta,
            stream_id,
        },
    )
}

impl LabeledDataset {
    /// The hidden classifier of a planted dataset.
    pub fn planted_classifier(&self) -> Option<&GapClassifier> {
        match &self.provenance {
            Provenance::Planted { planted, .. } => Some(planted),
            _ => None,
        }
    }
}
