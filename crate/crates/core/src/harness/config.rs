//! Versioned experiment configuration.
//!
//! A config is one JSON document. Unknown keys are rejected everywhere and
//! errors carry a JSON pointer to the offending value.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{AppendixForm, SurrogateParams};
use crate::capacity::Convention;
use crate::error::{Error, Result};
use crate::featuregen::{Envelope, Generator, HeavyTailSpec};
use crate::norm::{exponent, NormSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    EntropySweep(EntropySweep),
    VcSearch(VcSearchGrid),
    Generalization(Generalization),
    SpectralPipeline(SpectralPipeline),
    AppendixSparse(AppendixSparse),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::EntropySweep(_) => "entropy_sweep",
            Experiment::VcSearch(_) => "vc_search",
            Experiment::Generalization(_) => "generalization",
            Experiment::SpectralPipeline(_) => "spectral_pipeline",
            Experiment::AppendixSparse(_) => "appendix_sparse",
        }
    }

    /// The experiment with every field at its default.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind {
            "entropy_sweep" => Experiment::EntropySweep(EntropySweep::default()),
            "vc_search" => Experiment::VcSearch(VcSearchGrid::default()),
            "generalization" => Experiment::Generalization(Generalization::default()),
            "spectral_pipeline" => Experiment::SpectralPipeline(SpectralPipeline::default()),
            "appendix_sparse" => Experiment::AppendixSparse(AppendixSparse::default()),
            other => return Err(Error::domain(format!("unknown experiment kind {other:?}"))),
        })
    }
}

fn default_heavy_tail() -> Generator {
    Generator::HeavyTail(HeavyTailSpec::magnitude(16, 1.0, 1.5, Envelope::Exact))
}

/// Scale at which a margin of 0.5 can be planted along a random direction.
fn planted_heavy_tail() -> Generator {
    Generator::HeavyTail(HeavyTailSpec::magnitude(16, 4.0, 1.5, Envelope::Exact))
}

fn l2_exponent() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySweep {
    pub generator: Generator,
    pub ells: Vec<usize>,
    pub deltas: Vec<f64>,
    pub trials: usize,
    #[serde(with = "exponent")]
    pub p: f64,
    pub convention: Convention,
}

impl Default for EntropySweep {
    fn default() -> Self {
        EntropySweep {
            generator: default_heavy_tail(),
            ells: vec![4, 6, 8, 10, 12],
            deltas: vec![0.25, 0.5, 1.0],
            trials: 200,
            p: l2_exponent(),
            convention: Convention::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VcSearchGrid {
    pub dims: Vec<usize>,
    pub radius: f64,
    pub deltas: Vec<f64>,
    #[serde(with = "exponent")]
    pub p: f64,
    pub budget: usize,
}

impl Default for VcSearchGrid {
    fn default() -> Self {
        VcSearchGrid {
            dims: vec![2, 4, 8],
            radius: 1.0,
            deltas: vec![0.45, 0.5, 0.7, 1.0],
            p: 2.0,
            budget: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Planted {
        generator: Generator,
    },
    /// Vertices of a seeded `G(n, p)` graph embedded by a diffusion map.
    DiffusionMap {
        vertices: usize,
        edge_probability: f64,
        k: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Generalization {
    pub data: DataSource,
    pub datasets: usize,
    pub train: usize,
    pub test: usize,
    pub delta: f64,
    pub confidence: f64,
    pub random_offset: bool,
    pub surrogate: SurrogateParams,
}

impl Default for Generalization {
    fn default() -> Self {
        Generalization {
            data: DataSource::Planted {
                generator: planted_heavy_tail(),
            },
            datasets: 50,
            train: 64,
            test: 512,
            delta: 0.5,
            confidence: 0.05,
            random_offset: false,
            surrogate: SurrogateParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralPipeline {
    pub vertices: Vec<usize>,
    pub edge_probabilities: Vec<f64>,
    pub ks: Vec<u32>,
    pub drop_top: bool,
}

impl Default for SpectralPipeline {
    fn default() -> Self {
        SpectralPipeline {
            vertices: vec![8, 16, 32, 64],
            edge_probabilities: vec![0.25, 0.5],
            ks: vec![0, 1, 2, 4],
            drop_top: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SufficiencyPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixSparse {
    pub n: usize,
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    pub ells: Vec<usize>,
    pub trials: usize,
    pub sufficiency_grid: Vec<SufficiencyPoint>,
    pub form: AppendixForm,
}

/// Three accuracies crossed with three tail exponents at `δ = 0.05`, plus one
/// off-grid point.
pub fn default_sufficiency_grid() -> Vec<SufficiencyPoint> {
    let mut grid = Vec::new();
    for alpha in [1.5, 2.0, 3.0] {
        for epsilon in [0.1, 0.2, 0.5] {
            grid.push(SufficiencyPoint {
                epsilon,
                delta: 0.05,
                alpha,
            });
        }
    }
    grid.push(SufficiencyPoint {
        epsilon: 0.3,
        delta: 0.01,
        alpha: 2.5,
    });
    grid
}

impl Default for AppendixSparse {
    fn default() -> Self {
        AppendixSparse {
            n: 100,
            c: 1.0,
            alpha: 2.0,
            ells: vec![2, 4, 6, 8, 10, 12],
            trials: 200,
            sufficiency_grid: default_sufficiency_grid(),
            form: AppendixForm::Statement,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    seed: u64,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    output: Option<PathBuf>,
    experiment: serde_json::Map<String, serde_json::Value>,
}

fn at<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut pointer = prefix.to_string();
        for seg in e.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => {
                    pointer.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1")))
                }
                Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                Segment::Unknown => {}
            }
        }
        if pointer.is_empty() {
            pointer.push('/');
        }
        Error::Config {
            pointer,
            message: e.into_inner().to_string(),
        }
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config {
            pointer: "/".into(),
            message: e.to_string(),
        })?;
        let raw: RawConfig = at(value, "")?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                pointer: "/schema_version".into(),
                message: format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    raw.schema_version
                ),
            });
        }
        let mut body = raw.experiment;
        let kind = match body.remove("kind") {
            Some(serde_json::Value::String(k)) => k,
            Some(_) => {
                return Err(Error::Config {
                    pointer: "/experiment/kind".into(),
                    message: "kind must be a string".into(),
                })
            }
            None => {
                return Err(Error::Config {
                    pointer: "/experiment".into(),
                    message: "missing field `kind`".into(),
                })
            }
        };
        let body = serde_json::Value::Object(body);
        let experiment = match kind.as_str() {
            "entropy_sweep" => Experiment::EntropySweep(at(body, "/experiment")?),
            "vc_search" => Experiment::VcSearch(at(body, "/experiment")?),
            "generalization" => Experiment::Generalization(at(body, "/experiment")?),
            "spectral_pipeline" => Experiment::SpectralPipeline(at(body, "/experiment")?),
            "appendix_sparse" => Experiment::AppendixSparse(at(body, "/experiment")?),
            other => {
                return Err(Error::Config {
                    pointer: "/experiment/kind".into(),
                    message: format!("unknown experiment kind {other:?}"),
                })
            }
        };
        let cfg = ExperimentConfig {
            schema_version: raw.schema_version,
            seed: raw.seed,
            workers: raw.workers,
            output: raw.output,
            experiment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn validate(&self) -> Result<()> {
        let bad = |pointer: &str, message: String| {
            Err(Error::Config {
                pointer: pointer.into(),
                message,
            })
        };
        if self.workers == Some(0) {
            return bad("/workers", "workers must be at least 1".into());
        }
        let nonempty = |name: &str, len: usize| -> Result<()> {
            if len == 0 {
                return Err(Error::Config {
                    pointer: format!("/experiment/{name}"),
                    message: "grid must be nonempty".into(),
                });
            }
            Ok(())
        };
        let exponent_ok = |p: f64| {
            NormSpec::lp(p)
                .map(|_| ())
                .or_else(|e| bad("/experiment/p", e.to_string()))
        };
        match &self.experiment {
            Experiment::EntropySweep(e) => {
                nonempty("ells", e.ells.len())?;
                nonempty("deltas", e.deltas.len())?;
                exponent_ok(e.p)?;
                if let Err(err) = e.generator.validate() {
                    return bad("/experiment/generator", err.to_string());
                }
                if e.trials < 30 {
                    return bad("/experiment/trials", "need at least 30 trials".into());
                }
                if let Some(i) = e
                    .ells
                    .iter()
                    .position(|&l| l == 0 || l > crate::capacity::MAX_ENUMERATION)
                {
                    return bad(
                        &format!("/experiment/ells/{i}"),
                        "ell must lie in 1..=20".into(),
                    );
                }
                if let Some(i) = e.deltas.iter().position(|&d| !(d >= 0.0 && d.is_finite())) {
                    return bad(
                        &format!("/experiment/deltas/{i}"),
                        "margin must be finite and >= 0".into(),
                    );
                }
            }
            Experiment::VcSearch(v) => {
                nonempty("dims", v.dims.len())?;
                nonempty("deltas", v.deltas.len())?;
                exponent_ok(v.p)?;
                if !(v.radius > 0.0) {
                    return bad("/experiment/radius", "radius must be positive".into());
                }
                if let Some(i) = v.dims.iter().position(|&d| d == 0) {
                    return bad(
                        &format!("/experiment/dims/{i}"),
                        "dimension must be at least 1".into(),
                    );
                }
                if let Some(i) = v.deltas.iter().position(|&d| !(d >= 0.0 && d.is_finite())) {
                    return bad(
                        &format!("/experiment/deltas/{i}"),
                        "margin must be finite and >= 0".into(),
                    );
                }
            }
            Experiment::Generalization(g) => {
                if g.datasets == 0 || g.train == 0 || g.test == 0 {
                    return bad(
                        "/experiment",
                        "datasets, train and test must be positive".into(),
                    );
                }
                if !(g.delta > 0.0) {
                    return bad("/experiment/delta", "margin must be positive".into());
                }
                if !(g.confidence > 0.0 && g.confidence < 1.0) {
                    return bad(
                        "/experiment/confidence",
                        "confidence must lie in (0, 1)".into(),
                    );
                }
                match &g.data {
                    DataSource::Planted { generator } => {
                        if let Err(err) = generator.validate() {
                            return bad("/experiment/data/generator", err.to_string());
                        }
                    }
                    DataSource::DiffusionMap {
                        vertices,
                        edge_probability,
                        ..
                    } => {
                        if *vertices < 2 {
                            return bad(
                                "/experiment/data/vertices",
                                "need at least 2 vertices".into(),
                            );
                        }
                        if !(*edge_probability > 0.0 && *edge_probability <= 1.0) {
                            return bad(
                                "/experiment/data/edge_probability",
                                "must lie in (0, 1]".into(),
                            );
                        }
                    }
                }
            }
            Experiment::SpectralPipeline(s) => {
                nonempty("vertices", s.vertices.len())?;
                nonempty("edge_probabilities", s.edge_probabilities.len())?;
                nonempty("ks", s.ks.len())?;
                if let Some(i) = s.vertices.iter().position(|&n| n < 2) {
                    return bad(
                        &format!("/experiment/vertices/{i}"),
                        "need at least 2 vertices".into(),
                    );
                }
                if let Some(i) = s
                    .edge_probabilities
                    .iter()
                    .position(|&p| !(p > 0.0 && p <= 1.0))
                {
                    return bad(
                        &format!("/experiment/edge_probabilities/{i}"),
                        "must lie in (0, 1]".into(),
                    );
                }
            }
            Experiment::AppendixSparse(a) => {
                nonempty("ells", a.ells.len())?;
                nonempty("sufficiency_grid", a.sufficiency_grid.len())?;
                if !(a.alpha > 1.0) {
                    return bad("/experiment/alpha", "alpha must exceed 1".into());
                }
                if !(a.c > 0.0) {
                    return bad("/experiment/C", "C must be positive".into());
                }
                if a.trials < 30 {
                    return bad("/experiment/trials", "need at least 30 trials".into());
                }
                if let Some(i) = a
                    .ells
                    .iter()
                    .position(|&l| !(2..=crate::capacity::MAX_ENUMERATION).contains(&l))
                {
                    return bad(
                        &format!("/experiment/ells/{i}"),
                        "ell must lie in 2..=20".into(),
                    );
                }
            }
        }
        Ok(())
    }
}
