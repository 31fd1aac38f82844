//! Executes experiment configs and persists their results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{
    AppendixSparse, DataSource, EntropySweep, Experiment, ExperimentConfig, Generalization,
    SpectralPipeline, VcSearchGrid,
};
use crate::bounds;
use crate::capacity;
use crate::classify;
use crate::error::{Error, Result};
use crate::featuregen::{
    plant_labeled_dataset, Generator, HeavyTailSpec, LabeledDataset, PlantOptions,
};
use crate::norm::NormSpec;
use crate::rng::RngStream;
use crate::spectral;

/// One grid point of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub cells: Vec<String>,
    pub pass: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub kind: String,
    pub version: String,
    pub header: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Row>,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    /// Experiment-level checks (for instance a pass fraction across datasets).
    pub aggregate: BTreeMap<String, serde_json::Value>,
    pub all_passed: bool,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// The results table with trailing `pass` and `status` columns.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.write_table(out, true)
    }

    pub fn write_table<W: std::io::Write>(&self, out: W, with_status: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.header.clone();
        if with_status {
            header.extend(["pass".to_string(), "status".to_string()]);
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut cells = r.cells.clone();
            if with_status {
                cells.push(r.pass.to_string());
                cells.push(r.status.clone());
            }
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Header, rows and experiment-level aggregates.
type Table = (Vec<String>, Vec<Row>, BTreeMap<String, serde_json::Value>);

/// Grid point outcome before the row is assembled.
struct Point {
    cells: Vec<String>,
    outcome: Result<(Vec<String>, bool, String)>,
}

fn finish(points: Vec<Point>, blanks: usize) -> Vec<Row> {
    points
        .into_iter()
        .map(|p| match p.outcome {
            Ok((mut tail, pass, status)) => {
                let mut cells = p.cells;
                cells.append(&mut tail);
                Row {
                    cells,
                    pass,
                    status,
                }
            }
            Err(e) => {
                let mut cells = p.cells;
                cells.extend(std::iter::repeat_n(String::new(), blanks));
                Row {
                    cells,
                    pass: false,
                    status: format!("error: {e}"),
                }
            }
        })
        .collect()
}

fn entropy_sweep(e: &EntropySweep, seed: u64) -> Result<Table> {
    let norm = NormSpec::lp(e.p)?;
    let grid: Vec<(usize, f64)> = e
        .ells
        .iter()
        .flat_map(|&l| e.deltas.iter().map(move |&d| (l, d)))
        .collect();
    let points: Vec<Point> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(ell, delta))| {
            let outcome = (|| {
                let est = capacity::annealed_entropy_mc_with(
                    &e.generator,
                    ell,
                    delta,
                    norm,
                    e.trials,
                    &RngStream::new(seed, i as u64),
                    e.convention,
                )?;
                let hilbert = if norm.is_euclidean() {
                    bounds::hann_bound_hilbert(ell as f64, e.generator.moment_root(2.0)?, delta)
                        .unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                let banach = if norm.p > 1.0 && norm.p <= 2.0 {
                    bounds::hann_bound_banach(
                        ell as f64,
                        e.generator.moment_root(norm.p)?,
                        delta,
                        norm.p,
                        1.0,
                        norm.p,
                    )
                    .unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                let bound = if norm.is_euclidean() { hilbert } else { banach };
                let (pass, status) = if bound.is_nan() {
                    (true, "no bound applies".to_string())
                } else if est.mean_ln_n <= bound + est.ci_halfwidth {
                    (true, "ok".into())
                } else {
                    (false, "estimate exceeds bound".into())
                };
                Ok((
                    vec![
                        e.trials.to_string(),
                        num(est.mean_ln_n),
                        num(est.ci_halfwidth),
                        num(hilbert),
                        num(banach),
                    ],
                    pass,
                    status,
                ))
            })();
            Point {
                cells: vec![ell.to_string(), num(delta)],
                outcome,
            }
        })
        .collect();
    let header = [
        "ell",
        "delta",
        "trials",
        "mean_lnN",
        "ci",
        "bound_hilbert",
        "bound_banach",
    ];
    Ok((
        header.map(String::from).to_vec(),
        finish(points, 5),
        BTreeMap::new(),
    ))
}

fn vc_grid(v: &VcSearchGrid, seed: u64) -> Result<Table> {
    let norm = NormSpec::lp(v.p)?;
    let grid: Vec<(usize, f64)> = v
        .dims
        .iter()
        .flat_map(|&d| v.deltas.iter().map(move |&x| (d, x)))
        .collect();
    let points: Vec<Point> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(dim, delta))| {
            let outcome = (|| {
                let r = capacity::vc_search(
                    dim,
                    v.radius,
                    delta,
                    norm,
                    v.budget,
                    &mut RngStream::new(seed, i as u64),
                )?;
                let bound = if norm.is_euclidean() {
                    bounds::vc_bound_hilbert(v.radius, delta)
                        .map(|b| b as f64)
                        .unwrap_or(f64::NAN)
                } else if norm.p > 1.0 && norm.p <= 2.0 {
                    bounds::vc_bound_banach(v.radius, delta, norm.p, 1.0).unwrap_or(f64::NAN)
                } else {
                    f64::NAN
                };
                let pass = bound.is_nan() || r.m as f64 <= bound;
                let status = if bound.is_nan() {
                    "no bound applies"
                } else if pass {
                    "ok"
                } else {
                    "shattered set exceeds bound"
                };
                Ok((
                    vec![r.m.to_string(), num(bound), r.candidates_tried.to_string()],
                    pass,
                    status.to_string(),
                ))
            })();
            Point {
                cells: vec![
                    dim.to_string(),
                    num(delta),
                    num(v.p),
                    num(v.radius),
                    v.budget.to_string(),
                ],
                outcome,
            }
        })
        .collect();
    let header = [
        "dim",
        "delta",
        "p",
        "radius",
        "budget",
        "m",
        "bound",
        "candidates",
    ];
    Ok((
        header.map(String::from).to_vec(),
        finish(points, 3),
        BTreeMap::new(),
    ))
}

fn split(d: &LabeledDataset, at: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = LabeledDataset::new(d.samples[..at].to_vec(), d.seed, d.provenance.clone())?;
    let test = LabeledDataset::new(d.samples[at..].to_vec(), d.seed, d.provenance.clone())?;
    Ok((train, test))
}

/// Normative risk bound for a generalization run: the Hilbert entropy bound
/// with the generator's second-moment root, inverted through the deviation
/// inequality and clamped to 1.
pub fn generalization_bound(
    gen: &Generator,
    ell: usize,
    delta: f64,
    confidence: f64,
) -> Result<f64> {
    if let Generator::HeavyTail(HeavyTailSpec {
        c,
        alpha,
        mode: crate::featuregen::TailMode::MagnitudeDecay,
        ..
    }) = gen
    {
        return Ok(bounds::risk_bound_heavytail(
            ell as f64,
            delta,
            confidence,
            *c,
            *alpha,
            Default::default(),
        )?
        .value);
    }
    let h = bounds::hann_bound_hilbert(ell as f64, gen.moment_root(2.0)?, delta)?;
    bounds::vapnik_risk_deviation(h, ell as f64, confidence)
}

/// Outcome of training on one planted dataset and testing on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizationTrial {
    pub margin: f64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub test_risk_gap_tolerant: f64,
    pub bound: f64,
}

pub fn generalization_trial(
    g: &Generalization,
    rng: &mut RngStream,
) -> Result<GeneralizationTrial> {
    let gen = match &g.data {
        DataSource::Planted { generator } => generator.clone(),
        DataSource::DiffusionMap {
            vertices,
            edge_probability,
            k,
        } => {
            let graph = spectral::erdos_renyi(*vertices, *edge_probability, &mut rng.fork(0))?;
            let emb = spectral::diffusion_map(&graph, *k)?;
            Generator::Empirical {
                points: emb.features.into_iter().map(|f| f.coords).collect(),
            }
        }
    };
    let opts = PlantOptions {
        random_offset: g.random_offset,
        norm: NormSpec::l2(),
    };
    let data = plant_labeled_dataset(&gen, g.train + g.test, g.delta, opts, rng)?;
    let (train, test) = split(&data, g.train)?;
    let trained = classify::max_margin_train(&train)?;
    let c = trained.classifier.clone().with_delta(g.delta);
    Ok(GeneralizationTrial {
        margin: trained.margin,
        train_risk: classify::empirical_risk(&c, &train, false)?,
        test_risk: classify::empirical_risk(&c, &test, false)?,
        test_risk_gap_tolerant: classify::empirical_risk(&c, &test, true)?,
        bound: generalization_bound(&gen, g.train, g.delta, g.confidence)?,
    })
}

fn generalization(g: &Generalization, seed: u64) -> Result<Table> {
    let trials: Vec<Result<GeneralizationTrial>> = (0..g.datasets)
        .into_par_iter()
        .map(|i| generalization_trial(g, &mut RngStream::new(seed, i as u64)))
        .collect();
    let ok: Vec<&GeneralizationTrial> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let within = ok
        .iter()
        .filter(|t| t.test_risk_gap_tolerant <= t.bound.min(1.0))
        .count() as f64
        / g.datasets as f64;
    let train_zero = ok.len() == g.datasets && ok.iter().all(|t| t.train_risk == 0.0);
    let points = trials
        .into_iter()
        .enumerate()
        .map(|(i, t)| Point {
            cells: vec![i.to_string()],
            outcome: t.map(|t| {
                let pass = t.train_risk == 0.0 && t.test_risk_gap_tolerant <= t.bound.min(1.0);
                let status = if pass {
                    "ok"
                } else if t.train_risk != 0.0 {
                    "nonzero training risk"
                } else {
                    "held-out risk exceeds bound"
                };
                (
                    vec![
                        num(t.margin),
                        num(t.train_risk),
                        num(t.test_risk),
                        num(t.test_risk_gap_tolerant),
                        num(t.bound),
                    ],
                    pass,
                    status.to_string(),
                )
            }),
        })
        .collect();
    let mut agg = BTreeMap::new();
    agg.insert("fraction_within_bound".into(), json!(within));
    agg.insert("train_risk_all_zero".into(), json!(train_zero));
    agg.insert("passed".into(), json!(within >= 0.95 && train_zero));
    let header = [
        "dataset",
        "margin",
        "train_risk",
        "test_risk",
        "test_risk_gap_tolerant",
        "bound",
    ];
    Ok((header.map(String::from).to_vec(), finish(points, 5), agg))
}

fn spectral_pipeline(s: &SpectralPipeline, seed: u64) -> Result<Table> {
    let graphs: Vec<(usize, f64)> = s
        .vertices
        .iter()
        .flat_map(|&n| s.edge_probabilities.iter().map(move |&p| (n, p)))
        .collect();
    let grid: Vec<(usize, usize, u32)> = (0..graphs.len())
        .flat_map(|gi| {
            let n = graphs[gi].0;
            s.ks.iter().map(move |&k| (gi, n, k))
        })
        .collect();
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&(gi, n, k)| {
            let p = graphs[gi].1;
            let outcome = (|| {
                let g = spectral::erdos_renyi(n, p, &mut RngStream::new(seed, gi as u64))?;
                let emb = spectral::diffusion_map_with(&g, k, s.drop_top)?;
                let msn = spectral::mean_squared_norm(&emb);
                let moment = spectral::eigenvalue_moment(&emb);
                let diff = (msn - moment).abs();
                let pass = msn <= 1.0 + 1e-8 && diff <= 1e-8;
                let status = if pass {
                    "ok"
                } else {
                    "moment identity violated"
                };
                Ok((
                    vec![num(msn), num(moment), num(diff)],
                    pass,
                    status.to_string(),
                ))
            })();
            Point {
                cells: vec![n.to_string(), num(p), k.to_string()],
                outcome,
            }
        })
        .collect();
    let header = [
        "n",
        "edge_probability",
        "k",
        "mean_squared_norm",
        "eigen_moment",
        "abs_diff",
    ];
    Ok((
        header.map(String::from).to_vec(),
        finish(points, 3),
        BTreeMap::new(),
    ))
}

fn appendix_sparse(a: &AppendixSparse, seed: u64) -> Result<Table> {
    let mut points: Vec<Point> = a
        .sufficiency_grid
        .iter()
        .map(|pt| {
            let outcome = (|| {
                let ell = bounds::appendix_sample_complexity(
                    pt.epsilon, pt.delta, a.c, pt.alpha, a.form,
                )?;
                let slack =
                    bounds::appendix_sufficiency_slack(ell, pt.epsilon, pt.delta, a.c, pt.alpha)?;
                let pass = slack >= 0.0;
                let status = if pass {
                    "ok"
                } else {
                    "sample size fails the sufficiency inequality"
                };
                Ok((
                    vec![
                        num(ell),
                        num(pt.epsilon),
                        num(pt.delta),
                        num(pt.alpha),
                        num(slack),
                        num(f64::NAN),
                        num(0.0),
                    ],
                    pass,
                    status.to_string(),
                ))
            })();
            Point {
                cells: vec!["sufficiency".into()],
                outcome,
            }
        })
        .collect();
    let gen = Generator::HeavyTail(HeavyTailSpec::sparse(a.n, a.c, a.alpha));
    let entropy: Vec<Point> = a
        .ells
        .par_iter()
        .enumerate()
        .map(|(i, &ell)| {
            let outcome = (|| {
                let est = capacity::annealed_entropy_mc(
                    &gen,
                    ell,
                    0.0,
                    NormSpec::l2(),
                    a.trials,
                    &RngStream::new(seed, i as u64),
                )?;
                let bound = bounds::appendix_hann(ell as f64, a.c, a.alpha)?;
                let pass = est.mean_ln_n <= bound + est.ci_halfwidth;
                let status = if pass { "ok" } else { "estimate exceeds bound" };
                Ok((
                    vec![
                        ell.to_string(),
                        String::new(),
                        String::new(),
                        num(a.alpha),
                        num(est.mean_ln_n),
                        num(est.ci_halfwidth),
                        num(bound),
                    ],
                    pass,
                    status.to_string(),
                ))
            })();
            Point {
                cells: vec!["entropy".into()],
                outcome,
            }
        })
        .collect();
    points.extend(entropy);
    let header = [
        "check", "ell", "epsilon", "delta", "alpha", "value", "ci", "bound",
    ];
    Ok((
        header.map(String::from).to_vec(),
        finish(points, 7),
        BTreeMap::new(),
    ))
}

/// Runs every grid point of `config` on a pool of `workers` threads (the
/// config's value, else rayon's default). Rows come out in grid order and do
/// not depend on the worker count.
pub fn run(config: &ExperimentConfig, workers: Option<usize>) -> Result<RunRecord> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers.or(config.workers) {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
    let seed = config.seed;
    let (header, rows, mut aggregate) = pool.install(|| match &config.experiment {
        Experiment::EntropySweep(e) => entropy_sweep(e, seed),
        Experiment::VcSearch(v) => vc_grid(v, seed),
        Experiment::Generalization(g) => generalization(g, seed),
        Experiment::SpectralPipeline(s) => spectral_pipeline(s, seed),
        Experiment::AppendixSparse(a) => appendix_sparse(a, seed),
    })?;
    let errors = rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .count();
    let passed = rows.iter().filter(|r| r.pass).count();
    let all_passed = match aggregate.get("passed") {
        Some(v) => v.as_bool().unwrap_or(false),
        None => passed == rows.len(),
    };
    aggregate.insert("rows".into(), json!(rows.len()));
    Ok(RunRecord {
        config_hash: config.hash()?,
        kind: config.experiment.kind().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        header,
        failed: rows.len() - passed,
        passed,
        errors,
        rows,
        aggregate,
        all_passed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Writes `config.json`, `results.csv` and `summary.json` into
/// `<root>/<kind>-<hash prefix>/` and returns that directory.
pub fn write_run(config: &ExperimentConfig, record: &RunRecord, root: &Path) -> Result<PathBuf> {
    let dir = root.join(format!("{}-{}", record.kind, &record.config_hash[..12]));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), config.to_json()? + "\n")?;
    record.write_csv(fs::File::create(dir.join("results.csv"))?)?;
    let failures: Vec<serde_json::Value> = record
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.pass)
        .map(|(i, r)| json!({"row": i, "status": r.status}))
        .collect();
    let mut summary = serde_json::to_value(record)?;
    summary["failures"] = json!(failures);
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuregen::Envelope;
    use crate::harness::config::SCHEMA_VERSION;

    fn cfg(experiment: Experiment) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 5,
            workers: None,
            output: None,
            experiment,
        }
    }

    fn csv_of(r: &RunRecord) -> String {
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn entropy_rows_stay_below_bound() {
        let e = EntropySweep {
            generator: Generator::HeavyTail(HeavyTailSpec::magnitude(8, 1.0, 1.5, Envelope::Exact)),
            ells: vec![4, 6],
            deltas: vec![0.5, 1.0],
            trials: 40,
            ..Default::default()
        };
        let r = run(&cfg(Experiment::EntropySweep(e)), Some(2)).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.all_passed, "{:?}", r.rows);
        let text = csv_of(&r);
        assert!(text
            .starts_with("ell,delta,trials,mean_lnN,ci,bound_hilbert,bound_banach,pass,status\n"));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = SpectralPipeline {
            vertices: vec![8, 16],
            edge_probabilities: vec![0.5],
            ks: vec![0, 2],
            drop_top: false,
        };
        let c = cfg(Experiment::SpectralPipeline(s));
        let a = run(&c, Some(1)).unwrap();
        let b = run(&c, Some(3)).unwrap();
        assert_eq!(csv_of(&a), csv_of(&b));
        assert!(a.all_passed);
    }

    #[test]
    fn failing_points_are_recorded_not_fatal() {
        let g = Generalization {
            data: DataSource::Planted {
                generator: Generator::HeavyTail(HeavyTailSpec::magnitude(
                    4,
                    1.0,
                    2.0,
                    Envelope::Exact,
                )),
            },
            datasets: 3,
            train: 10,
            test: 10,
            delta: 100.0,
            ..Default::default()
        };
        let r = run(&cfg(Experiment::Generalization(g)), Some(2)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.errors, 3);
        assert!(!r.all_passed);
        assert!(r.rows[0].status.contains("infeasible"));
    }

    #[test]
    fn spectral_generalization_runs() {
        let g = Generalization {
            data: DataSource::DiffusionMap {
                vertices: 32,
                edge_probability: 0.25,
                k: 0,
            },
            datasets: 4,
            train: 16,
            test: 32,
            delta: 0.05,
            ..Default::default()
        };
        let r = run(&cfg(Experiment::Generalization(g)), None).unwrap();
        assert_eq!(r.errors, 0, "{:?}", r.rows);
        assert!(r.rows.iter().all(|row| row.cells[2] == num(0.0)));
    }

    #[test]
    fn written_layout() {
        let dir = tempfile::tempdir().unwrap();
        let s = SpectralPipeline {
            vertices: vec![8],
            edge_probabilities: vec![0.25],
            ks: vec![1],
            drop_top: true,
        };
        let c = cfg(Experiment::SpectralPipeline(s));
        let r = run(&c, None).unwrap();
        let out = write_run(&c, &r, dir.path()).unwrap();
        for f in ["config.json", "results.csv", "summary.json"] {
            assert!(out.join(f).is_file(), "{f}");
        }
        let back =
            ExperimentConfig::from_json(&fs::read_to_string(out.join("config.json")).unwrap())
                .unwrap();
        assert_eq!(back, c);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["config_hash"], json!(c.hash().unwrap()));
        assert_eq!(summary["failures"], json!([]));
    }
}
