//! Cascade and baseline inference, plus the experiment grid runner.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{
    build_examples, train_classifier_from, ClassifierConfig, ClassifierError, ClassifierModel,
    FilterConfig, Representation,
};
use crate::corpus::{
    read_column_corpus, read_column_text, read_standoff_mentions, write_predictions,
    AnnotationMode, CorpusError, Document,
};
use crate::evaluation::{evaluate, seed_stats, EvalError, EvalReport, SeedSummary};
use crate::tagger::{train_tagger, Inventory, TaggerConfig, TaggerError, TaggerModel};
use crate::taxonomy::{load_taxonomy, CoarseType, Taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(
        "incompatible models: tagger taxonomy {tagger} vs classifier taxonomy {classifier}: {reason}"
    )]
    Incompatible {
        tagger: String,
        classifier: String,
        reason: String,
    },
    #[error("expected a {expected} tagger, got a {found} one")]
    WrongInventory { expected: &'static str, found: &'static str },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn inventory_name(i: Inventory) -> &'static str {
    match i {
        Inventory::Coarse => "coarse",
        Inventory::Fine => "fine",
    }
}

/// Checks that a coarse tagger and a classifier can be chained.
pub fn check_compatible(tagger: &TaggerModel, classifier: &ClassifierModel) -> Result<(), PipelineError> {
    if tagger.inventory != Inventory::Coarse {
        return Err(PipelineError::WrongInventory {
            expected: "coarse",
            found: inventory_name(tagger.inventory),
        });
    }
    let tagger_set: BTreeSet<&CoarseType> = tagger.coarse_types.iter().collect();
    let classifier_set: BTreeSet<&CoarseType> = classifier.taxonomy.coarse_types().iter().collect();
    let labels: BTreeSet<&str> = tagger.alphabet.labels().iter().map(String::as_str).collect();
    let producible = labels
        .iter()
        .all(|l| classifier_set.iter().any(|c| c.as_str() == *l));
    if tagger_set != classifier_set || !producible {
        return Err(PipelineError::Incompatible {
            tagger: tagger.taxonomy_fingerprint.clone(),
            classifier: classifier.taxonomy_fingerprint(),
            reason: "coarse inventories differ".into(),
        });
    }
    Ok(())
}

/// Stage one tags spans with coarse types; stage two relabels each span.
///
/// Spans are exactly the stage-one spans. Each output mention keeps the
/// stage-one coarse type in `coarse` and carries the decoded fine label with
/// its renormalized confidence.
pub fn run_cascade(
    tagger: &TaggerModel,
    classifier: &ClassifierModel,
    filter: &FilterConfig,
    docs: &[Document],
) -> Result<Vec<Document>, PipelineError> {
    check_compatible(tagger, classifier)?;
    filter.validate()?;
    docs.par_iter()
        .map(|doc| {
            let stage_one = tagger.predict_document(doc)?;
            relabel(classifier, filter, &stage_one)
        })
        .collect()
}

fn relabel(
    classifier: &ClassifierModel,
    filter: &FilterConfig,
    doc: &Document,
) -> Result<Document, PipelineError> {
    let mut out = Vec::with_capacity(doc.mentions().len());
    for m in doc.mentions() {
        let coarse = m.coarse_type().expect("tagger mentions carry a coarse type");
        let decoded = classifier.label_mention(&doc.sentences[m.sentence], m, &coarse, filter)?;
        let mut labeled = m.clone();
        labeled.coarse = Some(coarse);
        labeled.fine = Some(decoded.label);
        labeled.confidence = Some(decoded.confidence);
        labeled.fallback = decoded.fallback;
        out.push(labeled);
    }
    Ok(doc.with_mentions(out, AnnotationMode::Full)?)
}

/// Stage two alone on gold spans with gold coarse types.
pub fn run_gold_spans(
    classifier: &ClassifierModel,
    filter: &FilterConfig,
    gold: &[Document],
) -> Result<Vec<Document>, PipelineError> {
    filter.validate()?;
    gold.par_iter().map(|d| relabel(classifier, filter, d)).collect()
}

/// Single-pass tagging over the fine inventory.
pub fn run_baseline(model: &TaggerModel, docs: &[Document]) -> Result<Vec<Document>, PipelineError> {
    if model.inventory != Inventory::Fine {
        return Err(PipelineError::WrongInventory {
            expected: "fine",
            found: inventory_name(model.inventory),
        });
    }
    Ok(model.predict_corpus(docs)?)
}

/// Corpora consumed by a grid run.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub taxonomy: Taxonomy,
    pub coarse_train: Vec<Document>,
    pub coarse_dev: Vec<Document>,
    pub fine_train: Vec<Document>,
    pub fine_dev: Vec<Document>,
    pub test: Vec<Document>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub seeds: Vec<u64>,
    pub representations: Vec<Representation>,
    pub filters: Vec<FilterConfig>,
    /// Also train and score the end-to-end baseline for every seed.
    pub baseline: bool,
    /// Start each classifier from its seed's coarse tagger encoder.
    pub warm_start: bool,
    pub tagger: TaggerConfig,
    pub classifier: ClassifierConfig,
    pub baseline_tagger: TaggerConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            seeds: vec![0],
            representations: vec![Representation::Masked],
            filters: vec![FilterConfig::PassThrough],
            baseline: false,
            warm_start: false,
            tagger: TaggerConfig::default(),
            classifier: ClassifierConfig::default(),
            baseline_tagger: TaggerConfig {
                inventory: Inventory::Fine,
                ..TaggerConfig::default()
            },
        }
    }
}

impl GridSpec {
    /// Schedules that train the built-in encoder well on the synthetic
    /// corpora at their default sizes, with warm-started classifiers.
    pub fn desk() -> GridSpec {
        let tagger = TaggerConfig {
            learning_rate: 2e-3,
            batch_size: 32,
            epochs: 6,
            ..TaggerConfig::default()
        };
        GridSpec {
            representations: vec![Representation::Masked, Representation::EntityBounded],
            filters: vec![FilterConfig::PassThrough, FilterConfig::CoarseType],
            baseline: true,
            warm_start: true,
            classifier: ClassifierConfig {
                learning_rate: 1e-3,
                batch_size: 8,
                epochs: 100,
                weight_decay: 0.5,
                ..ClassifierConfig::default()
            },
            baseline_tagger: TaggerConfig {
                epochs: 30,
                inventory: Inventory::Fine,
                ..tagger.clone()
            },
            tagger,
            ..GridSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.seeds.is_empty() || self.representations.is_empty() || self.filters.is_empty() {
            return Err(PipelineError::Manifest(
                "seeds, representations and filters must be non-empty".into(),
            ));
        }
        for f in &self.filters {
            f.validate()?;
        }
        self.tagger.validate()?;
        self.classifier.validate()?;
        if self.baseline {
            self.baseline_tagger.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub name: String,
    pub representation: Option<Representation>,
    pub filter: Option<FilterConfig>,
    pub runs: Vec<CellRun>,
    /// Mean and deviation over the successful runs.
    pub summary: Option<SeedSummary>,
}

impl GridRow {
    fn finish(mut self) -> Self {
        let reports: Vec<EvalReport> = self.runs.iter().filter_map(|r| r.report.clone()).collect();
        self.summary = seed_stats(&reports).ok();
        self
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<GridRow>,
    pub baseline: Option<GridRow>,
}

impl ExperimentReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<34} {:>16} {:>16} {:>16} {:>6}",
            "cell", "F1", "type F1", "boundary F1", "fail"
        );
        let cell = |sum: &Option<SeedSummary>, metric: &str| match sum.as_ref().and_then(|x| x.metric(metric)) {
            Some(m) => format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std),
            None => "-".to_string(),
        };
        for row in self.rows.iter().chain(&self.baseline) {
            let _ = writeln!(
                s,
                "{:<34} {:>16} {:>16} {:>16} {:>6}",
                row.name,
                cell(&row.summary, "full.f1"),
                cell(&row.summary, "type.f1"),
                cell(&row.summary, "boundary.f1"),
                row.failures()
            );
        }
        s
    }

    /// One JSON record per row.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for row in self.rows.iter().chain(&self.baseline) {
            serde_json::to_writer(&mut sink, row)?;
            writeln!(sink)?;
        }
        Ok(())
    }
}

fn cell_name(repr: Representation, filter: &FilterConfig) -> String {
    format!("{repr}/{filter}")
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn persist(out_dir: Option<&Path>, name: &str, seed: u64, docs: &[Document]) -> Result<Option<PathBuf>, PipelineError> {
    let Some(dir) = out_dir else { return Ok(None) };
    let dir = dir.join("predictions");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let path = dir.join(format!("{}.seed{seed}.tsv", file_stem(name)));
    let f = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(f);
    write_predictions(docs, &mut w)?;
    w.flush().map_err(io_err(&path))?;
    Ok(Some(path))
}

fn score_cell(
    test: &[Document],
    predicted: Result<Vec<Document>, PipelineError>,
    out_dir: Option<&Path>,
    name: &str,
    seed: u64,
) -> CellRun {
    let scored = predicted.and_then(|p| {
        let report = evaluate(test, &p)?;
        let path = persist(out_dir, name, seed, &p)?;
        Ok((report, path))
    });
    match scored {
        Ok((report, predictions)) => CellRun {
            seed,
            report: Some(report),
            error: None,
            predictions,
        },
        Err(e) => CellRun {
            seed,
            report: None,
            error: Some(e.to_string()),
            predictions: None,
        },
    }
}

/// Trains and scores every (representation × filter) cell for every seed.
///
/// A failing cell is recorded and the grid carries on. One coarse tagger is
/// trained per seed and one classifier per (seed, representation).
pub fn run_grid(
    data: &ExperimentData,
    spec: &GridSpec,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, PipelineError> {
    spec.validate()?;
    let mut rows: Vec<GridRow> = spec
        .representations
        .iter()
        .flat_map(|&r| {
            spec.filters.iter().map(move |f| GridRow {
                name: cell_name(r, f),
                representation: Some(r),
                filter: Some(*f),
                runs: Vec::new(),
                summary: None,
            })
        })
        .collect();
    let mut baseline = spec.baseline.then(|| GridRow {
        name: "baseline".into(),
        representation: None,
        filter: None,
        runs: Vec::new(),
        summary: None,
    });
    for &seed in &spec.seeds {
        let tagger_cfg = TaggerConfig {
            seed,
            inventory: Inventory::Coarse,
            ..spec.tagger.clone()
        };
        let tagger = train_tagger(&data.coarse_train, &data.coarse_dev, &data.taxonomy, &tagger_cfg)
            .map(|t| t.model)
            .map_err(|e| e.to_string());
        for &repr in &spec.representations {
            let classifier = tagger.as_ref().map_err(Clone::clone).and_then(|t| {
                let cfg = ClassifierConfig {
                    seed,
                    representation: repr,
                    ..spec.classifier.clone()
                };
                let train = build_examples(&data.fine_train, repr).map_err(|e| e.to_string())?;
                let dev = build_examples(&data.fine_dev, repr).map_err(|e| e.to_string())?;
                let init = spec.warm_start.then(|| t.pretrained_encoder());
                train_classifier_from(&train, &dev, &data.taxonomy, &cfg, init.as_ref())
                    .map(|t| t.model)
                    .map_err(|e| e.to_string())
            });
            for row in rows.iter_mut().filter(|r| r.representation == Some(repr)) {
                let filter = row.filter.expect("cascade rows carry a filter");
                let run = match (&tagger, &classifier) {
                    (Ok(t), Ok(c)) => {
                        score_cell(&data.test, run_cascade(t, c, &filter, &data.test), out_dir, &row.name, seed)
                    }
                    (Err(e), _) | (_, Err(e)) => CellRun {
                        seed,
                        report: None,
                        error: Some(e.clone()),
                        predictions: None,
                    },
                };
                row.runs.push(run);
            }
        }
        if let Some(row) = baseline.as_mut() {
            let cfg = TaggerConfig {
                seed,
                inventory: Inventory::Fine,
                ..spec.baseline_tagger.clone()
            };
            let predicted = train_tagger(&data.fine_train, &data.fine_dev, &data.taxonomy, &cfg)
                .map_err(PipelineError::from)
                .and_then(|t| run_baseline(&t.model, &data.test));
            row.runs.push(score_cell(&data.test, predicted, out_dir, "baseline", seed));
        }
    }
    Ok(ExperimentReport {
        rows: rows.into_iter().map(GridRow::finish).collect(),
        baseline: baseline.map(GridRow::finish),
    })
}

/// Experiment manifest. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub output_dir: PathBuf,
    pub taxonomy: PathBuf,
    pub coarse_train: PathBuf,
    pub coarse_dev: PathBuf,
    pub fine_train: PathBuf,
    /// When set, `fine_train` is read for its text only and mentions come
    /// from this standoff file (partial annotation allowed).
    #[serde(default)]
    pub fine_train_standoff: Option<PathBuf>,
    pub fine_dev: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Manifest, PathBuf), PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Input paths that must exist before anything runs.
    pub fn inputs(&self, base: &Path) -> Vec<PathBuf> {
        let mut out = vec![
            &self.taxonomy,
            &self.coarse_train,
            &self.coarse_dev,
            &self.fine_train,
            &self.fine_dev,
            &self.test,
        ];
        out.extend(self.fine_train_standoff.iter());
        out.into_iter().map(|p| Self::resolve(base, p)).collect()
    }

    pub fn output_dir(&self, base: &Path) -> PathBuf {
        Self::resolve(base, &self.output_dir)
    }

    pub fn load_data(&self, base: &Path) -> Result<ExperimentData, PipelineError> {
        let open = |p: &Path| -> Result<BufReader<File>, PipelineError> {
            let p = Self::resolve(base, p);
            Ok(BufReader::new(File::open(&p).map_err(io_err(&p))?))
        };
        let taxonomy = load_taxonomy(open(&self.taxonomy)?, None)?;
        let fine_train = match &self.fine_train_standoff {
            Some(standoff) => {
                let text = read_column_text(open(&self.fine_train)?)?;
                read_standoff_mentions(&text, open(standoff)?)?
            }
            None => read_column_corpus(open(&self.fine_train)?)?,
        };
        Ok(ExperimentData {
            taxonomy,
            coarse_train: read_column_corpus(open(&self.coarse_train)?)?,
            coarse_dev: read_column_corpus(open(&self.coarse_dev)?)?,
            fine_train,
            fine_dev: read_column_corpus(open(&self.fine_dev)?)?,
            test: read_column_corpus(open(&self.test)?)?,
        })
    }
}

impl Manifest {
    /// Validates the grid, checks that every input exists, and loads the data.
    /// Writes nothing.
    pub fn prepare(&self, base: &Path) -> Result<ExperimentData, PipelineError> {
        self.grid.validate()?;
        for p in self.inputs(base) {
            if !p.exists() {
                return Err(PipelineError::Manifest(format!("input {} does not exist", p.display())));
            }
        }
        self.load_data(base)
    }

    /// Runs the grid and writes `manifest.resolved.toml`, `report.jsonl`,
    /// `report.txt` and per-cell predictions under `out`.
    pub fn execute(&self, data: &ExperimentData, out: &Path) -> Result<ExperimentReport, PipelineError> {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let resolved = out.join("manifest.resolved.toml");
        let text = toml::to_string(self).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        fs::write(&resolved, text).map_err(io_err(&resolved))?;
        let report = run_grid(data, &self.grid, Some(out))?;
        let jsonl = out.join("report.jsonl");
        let f = File::create(&jsonl).map_err(io_err(&jsonl))?;
        let mut w = BufWriter::new(f);
        report.write_jsonl(&mut w).map_err(io_err(&jsonl))?;
        w.flush().map_err(io_err(&jsonl))?;
        let txt = out.join("report.txt");
        fs::write(&txt, report.table()).map_err(io_err(&txt))?;
        Ok(report)
    }
}

/// Loads and validates a manifest, then runs it.
pub fn run_experiment(path: &Path) -> Result<ExperimentReport, PipelineError> {
    let (manifest, base) = Manifest::load(path)?;
    let data = manifest.prepare(&base)?;
    manifest.execute(&data, &manifest.output_dir(&base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train_classifier;
    use crate::encoder::EncoderShape;
    use crate::synthetic::{LabelView, SynthConfig, SyntheticWorld};

    fn tiny_shape() -> EncoderShape {
        EncoderShape {
            d_model: 16,
            heads: 2,
            ffn: 16,
            layers: 1,
            max_len: 32,
        }
    }

    fn data() -> ExperimentData {
        let w = SyntheticWorld::new(SynthConfig {
            names_per_type: 4,
            nouns: 10,
            ..SynthConfig::default()
        });
        ExperimentData {
            taxonomy: w.taxonomy().clone(),
            coarse_train: w.corpus(40, LabelView::Coarse, 1, "ct"),
            coarse_dev: w.corpus(10, LabelView::Coarse, 2, "cd"),
            fine_train: w.corpus(20, LabelView::Fine, 3, "ft"),
            fine_dev: w.corpus(10, LabelView::Fine, 4, "fd"),
            test: w.corpus(10, LabelView::Fine, 5, "te"),
        }
    }

    fn spec() -> GridSpec {
        GridSpec {
            seeds: vec![1],
            tagger: TaggerConfig {
                learning_rate: 3e-3,
                batch_size: 8,
                epochs: 2,
                encoder: tiny_shape(),
                ..TaggerConfig::default()
            },
            classifier: ClassifierConfig {
                learning_rate: 3e-3,
                batch_size: 8,
                epochs: 2,
                encoder: tiny_shape(),
                ..ClassifierConfig::default()
            },
            baseline_tagger: TaggerConfig {
                learning_rate: 3e-3,
                batch_size: 8,
                epochs: 2,
                encoder: tiny_shape(),
                inventory: Inventory::Fine,
                ..TaggerConfig::default()
            },
            ..GridSpec::default()
        }
    }

    fn models(d: &ExperimentData, s: &GridSpec) -> (TaggerModel, ClassifierModel) {
        let t = train_tagger(&d.coarse_train, &d.coarse_dev, &d.taxonomy, &TaggerConfig { seed: 1, ..s.tagger.clone() })
            .unwrap()
            .model;
        let ex = build_examples(&d.fine_train, Representation::Masked).unwrap();
        let dev = build_examples(&d.fine_dev, Representation::Masked).unwrap();
        let c = train_classifier(&ex, &dev, &d.taxonomy, &ClassifierConfig { seed: 1, ..s.classifier.clone() })
            .unwrap()
            .model;
        (t, c)
    }

    #[test]
    fn cascade_keeps_stage_one_spans() {
        let d = data();
        let (t, c) = models(&d, &spec());
        let stage_one = t.predict_corpus(&d.test).unwrap();
        for f in [FilterConfig::PassThrough, FilterConfig::CoarseType, FilterConfig::Threshold { theta: 0.9 }] {
            let out = run_cascade(&t, &c, &f, &d.test).unwrap();
            for (a, b) in stage_one.iter().zip(&out) {
                assert_eq!(a.mentions().len(), b.mentions().len());
                for (x, y) in a.mentions().iter().zip(b.mentions()) {
                    assert_eq!((x.sentence, x.start, x.end), (y.sentence, y.start, y.end));
                    assert_eq!(x.coarse, y.coarse);
                    assert!(y.fine.is_some() && y.confidence.is_some());
                }
            }
            assert_eq!(out, run_cascade(&t, &c, &f, &d.test).unwrap());
        }
    }

    #[test]
    fn no_mentions_means_no_classifier_calls() {
        let d = data();
        let (t, c) = models(&d, &spec());
        let w = SyntheticWorld::new(SynthConfig::default());
        let empty = w.cue_free_corpus(3, 1, "q");
        let stage_one = t.predict_corpus(&empty).unwrap();
        let calls: usize = stage_one.iter().map(|d| d.mentions().len()).sum();
        let out = run_cascade(&t, &c, &FilterConfig::PassThrough, &empty).unwrap();
        assert_eq!(out.iter().map(|d| d.mentions().len()).sum::<usize>(), calls);
    }

    #[test]
    fn incompatible_models_are_rejected() {
        let d = data();
        let (t, c) = models(&d, &spec());
        let mut other = c.clone();
        other.taxonomy = Taxonomy::from_strs(&["per", "org"], None).unwrap();
        assert!(matches!(
            run_cascade(&t, &other, &FilterConfig::PassThrough, &d.test),
            Err(PipelineError::Incompatible { .. })
        ));
        assert!(matches!(run_baseline(&t, &d.test), Err(PipelineError::WrongInventory { .. })));
    }

    #[test]
    fn grid_cardinality_and_single_cell_consistency() {
        let d = data();
        let s = GridSpec {
            representations: vec![Representation::Masked, Representation::EntityBounded],
            filters: vec![
                FilterConfig::PassThrough,
                FilterConfig::CoarseType,
                FilterConfig::Threshold { theta: 0.9 },
            ],
            ..spec()
        };
        let r = run_grid(&d, &s, None).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.baseline.is_none());
        assert!(r.rows.iter().all(|row| row.failures() == 0 && row.summary.is_some()));

        let single = run_grid(&d, &spec(), None).unwrap();
        assert_eq!(single.rows.len(), 1);
        let (t, c) = models(&d, &spec());
        let direct = evaluate(&d.test, &run_cascade(&t, &c, &FilterConfig::PassThrough, &d.test).unwrap()).unwrap();
        assert_eq!(single.rows[0].runs[0].report.as_ref().unwrap(), &direct);
    }

    #[test]
    fn failing_cells_are_recorded() {
        let mut d = data();
        // Partial fine data is fine for the classifier but rejected by the baseline.
        d.fine_train = crate::synthetic::withhold_mentions(&d.fine_train, 0.5, 9);
        let s = GridSpec {
            baseline: true,
            ..spec()
        };
        let r = run_grid(&d, &s, None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].failures(), 0);
        let b = r.baseline.as_ref().unwrap();
        assert_eq!(b.failures(), 1);
        assert!(b.summary.is_none());
        assert!(b.runs[0].error.as_ref().unwrap().contains("partial"));
        assert!(r.table().contains("baseline"));
    }

    #[test]
    fn warm_start_matches_direct_training() {
        let d = data();
        let s = GridSpec {
            warm_start: true,
            ..spec()
        };
        let r = run_grid(&d, &s, None).unwrap();
        let t = train_tagger(&d.coarse_train, &d.coarse_dev, &d.taxonomy, &TaggerConfig { seed: 1, ..s.tagger.clone() })
            .unwrap()
            .model;
        let ex = build_examples(&d.fine_train, Representation::Masked).unwrap();
        let dev = build_examples(&d.fine_dev, Representation::Masked).unwrap();
        let init = t.pretrained_encoder();
        let cfg = ClassifierConfig { seed: 1, ..s.classifier.clone() };
        let c = train_classifier_from(&ex, &dev, &d.taxonomy, &cfg, Some(&init)).unwrap().model;
        assert_eq!(c.tokenizer, t.tokenizer);
        let direct = evaluate(&d.test, &run_cascade(&t, &c, &FilterConfig::PassThrough, &d.test).unwrap()).unwrap();
        assert_eq!(r.rows[0].runs[0].report.as_ref().unwrap(), &direct);
    }
}
