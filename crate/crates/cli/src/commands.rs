//! Subcommand implementations. Every command checks its inputs and loads all
//! data before it creates any output.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cascade_ner::classifier::{
    build_examples, train_classifier_from, write_rendered, ClassifierConfig, ClassifierModel, FilterConfig,
    Representation,
};
use cascade_ner::corpus::{
    merge_silver, read_column_corpus, read_column_text, read_standoff_mentions, write_column_corpus,
    write_predictions, Document, MergeReport,
};
use cascade_ner::evaluation::{self, evaluate_gold_spans, seed_stats, EvalReport, Granularity};
use cascade_ner::pipeline::{check_compatible, run_baseline, run_cascade, run_gold_spans, GridSpec, Manifest};
use cascade_ner::synthetic::{LabelView, SynthConfig, SyntheticWorld};
use cascade_ner::tagger::{train_tagger, Inventory, TaggerConfig, TaggerModel};
use cascade_ner::taxonomy::{load_taxonomy, CoarseType, Taxonomy};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{
    AugmentArgs, EvaluateArgs, ExperimentArgs, FilterArg, GranularityArg, PredictArgs, ReprArg, SynthArgs,
    TrainFineArgs, TrainOverrides, TrainTaggerArgs,
};

pub const OUTPUT_ROOT_VAR: &str = "CASCADE_NER_OUTPUT_ROOT";

/// A problem with flags, config or inputs; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Turns any error into a usage error, keeping its message.
fn invalid<E: fmt::Display>(what: &str) -> impl FnOnce(E) -> anyhow::Error + '_ {
    move |e| usage(format!("{what}: {e}"))
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn default_out(out: Option<PathBuf>, command: &str, file: &str) -> PathBuf {
    out.unwrap_or_else(|| output_root().join(command).join(file))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    require_file(path)?;
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_gold(path: &Path) -> Result<Vec<Document>> {
    read_column_corpus(open(path)?).map_err(invalid(&path.display().to_string()))
}

fn read_text(path: &Path) -> Result<Vec<Document>> {
    read_column_text(open(path)?).map_err(invalid(&path.display().to_string()))
}

fn read_taxonomy(path: &Path) -> Result<Taxonomy> {
    load_taxonomy(open(path)?, None).map_err(invalid(&path.display().to_string()))
}

fn prepare_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    prepare_parent(path)?;
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// `model.ckpt` + `suffix` → `model.ckpt.suffix`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}.seed{seed}{ext}"))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(invalid(&p.display().to_string()))
        }
    }
}

fn echo_config<T: Serialize>(config: &T, path: &Path) -> Result<()> {
    let text = toml::to_string(config).context("serializing the resolved config")?;
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn resolve_tagger(o: &TrainOverrides, inventory: Inventory) -> Result<TaggerConfig> {
    let mut cfg: TaggerConfig = load_config(o.config.as_deref())?;
    if let Some(v) = o.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    cfg.inventory = inventory;
    cfg.validate().map_err(invalid("config"))?;
    Ok(cfg)
}

fn resolve_classifier(o: &TrainOverrides, repr: Option<ReprArg>) -> Result<ClassifierConfig> {
    let mut cfg: ClassifierConfig = load_config(o.config.as_deref())?;
    if let Some(v) = o.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(r) = repr {
        cfg.representation = representation(r);
    }
    cfg.validate().map_err(invalid("config"))?;
    Ok(cfg)
}

fn representation(r: ReprArg) -> Representation {
    match r {
        ReprArg::Masked => Representation::Masked,
        ReprArg::EntityMasked => Representation::EntityMasked,
        ReprArg::EntityBounded => Representation::EntityBounded,
    }
}

pub fn train_tagger_cmd(args: TrainTaggerArgs, baseline: bool) -> Result<()> {
    let (command, inventory) = if baseline {
        ("train-baseline", Inventory::Fine)
    } else {
        ("train-coarse", Inventory::Coarse)
    };
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    for p in [&args.train, &args.dev, &args.taxonomy] {
        require_file(p)?;
    }
    let cfg = resolve_tagger(&args.overrides, inventory)?;
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let train = read_gold(&args.train)?;
    let dev = read_gold(&args.dev)?;
    let out = default_out(args.out, command, "model.ckpt");

    echo_config(&cfg, &sibling(&out, "config.toml"))?;
    let mut reports = Vec::new();
    for k in 0..args.seeds as u64 {
        let run_cfg = TaggerConfig {
            seed: cfg.seed + k,
            ..cfg.clone()
        };
        let path = if args.seeds > 1 { seeded_path(&out, run_cfg.seed) } else { out.clone() };
        let trained = train_tagger(&train, &dev, &taxonomy, &run_cfg)?;
        prepare_parent(&path)?;
        trained.model.save(&path)?;
        write_jsonl(&trained.log, &sibling(&path, "log.jsonl"))?;
        let report = evaluation::evaluate(&dev, &trained.model.predict_corpus(&dev)?)?;
        println!(
            "seed {}: epoch {} selected, dev F1 {:.2}, checkpoint {}",
            run_cfg.seed,
            trained.model.selected_epoch,
            100.0 * report.full.f1,
            path.display()
        );
        reports.push(report);
    }
    if args.seeds > 1 {
        let summary = seed_stats(&reports)?;
        let path = sibling(&out, "seeds.json");
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        w.flush()?;
        for name in ["full.f1", "type.f1", "boundary.f1"] {
            let m = summary.metric(name).expect("metric present in every report");
            println!("{name}: {:.2} ± {:.2} over {} seeds", 100.0 * m.mean, 100.0 * m.std, m.n);
        }
    }
    Ok(())
}

pub fn train_fine(args: TrainFineArgs) -> Result<()> {
    let inputs: Vec<&PathBuf> = [&args.train, &args.text, &args.standoff]
        .into_iter()
        .flatten()
        .chain([&args.dev, &args.taxonomy])
        .collect();
    for p in &inputs {
        require_file(p)?;
    }
    let cfg = resolve_classifier(&args.overrides, args.repr)?;
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let init = match &args.init_from {
        Some(path) => {
            let pre = load_tagger(path)?.pretrained_encoder();
            let markers: Vec<String> = taxonomy.coarse_types().iter().map(CoarseType::marker).collect();
            if !pre.reserves(&markers) {
                return Err(usage(format!(
                    "{}: tagger vocabulary lacks the coarse markers of {}",
                    path.display(),
                    args.taxonomy.display()
                )));
            }
            Some(pre)
        }
        None => None,
    };
    let train = match (&args.train, &args.text, &args.standoff) {
        (Some(t), None, None) => read_gold(t)?,
        (None, Some(text), Some(standoff)) => {
            let docs = read_text(text)?;
            read_standoff_mentions(&docs, open(standoff)?).map_err(invalid(&standoff.display().to_string()))?
        }
        _ => return Err(usage("give either --train or both --text and --standoff")),
    };
    let dev = read_gold(&args.dev)?;
    let train_examples = build_examples(&train, cfg.representation).map_err(invalid("training data"))?;
    let dev_examples = build_examples(&dev, cfg.representation).map_err(invalid("dev data"))?;
    let out = default_out(args.out, "train-fine", "model.ckpt");

    echo_config(&cfg, &sibling(&out, "config.toml"))?;
    if let Some(path) = &args.dump_examples {
        let rendered: Vec<_> = train_examples.iter().map(|e| e.example.clone()).collect();
        let mut w = create(path)?;
        write_rendered(&rendered, &mut w)?;
        w.flush()?;
    }
    let trained = train_classifier_from(&train_examples, &dev_examples, &taxonomy, &cfg, init.as_ref())?;
    prepare_parent(&out)?;
    trained.model.save(&out)?;
    write_jsonl(&trained.log, &sibling(&out, "log.jsonl"))?;
    let best = &trained.log[trained.model.selected_epoch - 1];
    println!(
        "{} examples, representation {}, epoch {} selected, dev Acc-T/ST/SST {:.2} / {:.2} / {:.2}, checkpoint {}",
        train_examples.len(),
        cfg.representation,
        trained.model.selected_epoch,
        100.0 * best.dev_acc_t,
        100.0 * best.dev_acc_st,
        100.0 * best.dev_acc_sst,
        out.display()
    );
    Ok(())
}

fn filter_config(filter: FilterArg, theta: f64) -> Result<FilterConfig> {
    let theta_filter = FilterConfig::threshold(theta).map_err(invalid("--theta"))?;
    Ok(match filter {
        FilterArg::Pass => FilterConfig::PassThrough,
        FilterArg::Coarse => FilterConfig::CoarseType,
        FilterArg::Threshold => theta_filter,
    })
}

fn load_tagger(path: &Path) -> Result<TaggerModel> {
    require_file(path)?;
    TaggerModel::load(path).map_err(invalid(&path.display().to_string()))
}

fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    require_file(path)?;
    ClassifierModel::load(path).map_err(invalid(&path.display().to_string()))
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let filter = filter_config(args.filter, args.theta)?;
    require_file(&args.input)?;
    let out = default_out(args.out, "predict", "predictions.tsv");
    let predicted = if let Some(b) = &args.baseline {
        let model = load_tagger(b)?;
        if model.inventory != Inventory::Fine {
            return Err(usage(format!("{} is not a baseline (fine inventory) checkpoint", b.display())));
        }
        let docs = read_text(&args.input)?;
        run_baseline(&model, &docs)?
    } else if args.gold_spans {
        let classifier = load_classifier(args.classifier.as_deref().expect("clap requires --classifier"))?;
        let docs = read_gold(&args.input)?;
        run_gold_spans(&classifier, &filter, &docs).map_err(invalid("gold spans"))?
    } else {
        let (Some(t), Some(c)) = (&args.tagger, &args.classifier) else {
            return Err(usage("give --tagger and --classifier, or --baseline"));
        };
        let tagger = load_tagger(t)?;
        let classifier = load_classifier(c)?;
        check_compatible(&tagger, &classifier).map_err(invalid("checkpoints"))?;
        let docs = read_text(&args.input)?;
        run_cascade(&tagger, &classifier, &filter, &docs)?
    };
    let mut w = create(&out)?;
    write_predictions(&predicted, &mut w)?;
    w.flush()?;
    let n: usize = predicted.iter().map(|d| d.mentions().len()).sum();
    println!("{n} mentions written to {}", out.display());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gold = read_gold(&args.gold)?;
    let pred = read_standoff_mentions(&gold, open(&args.pred)?).map_err(invalid(&args.pred.display().to_string()))?;
    let report: EvalReport = if args.hier {
        evaluate_gold_spans(&gold, &pred).map_err(invalid("gold-span scoring"))?
    } else {
        evaluation::evaluate(&gold, &pred).map_err(invalid("scoring"))?
    };
    let records: Vec<_> = report
        .records()
        .into_iter()
        .filter(|r| match (args.hier, args.granularity) {
            (true, _) | (false, GranularityArg::All) => true,
            (false, g) => r.granularity == granularity(g).name(),
        })
        .collect();
    if args.hier {
        let h = report.hier.expect("gold-span report carries accuracies");
        println!("Acc-T {:.2}  Acc-ST {:.2}  Acc-SST {:.2}  ({} mentions)", 100.0 * h.acc_t, 100.0 * h.acc_st, 100.0 * h.acc_sst, h.count);
    } else if args.granularity == GranularityArg::All {
        print!("{}", report.table());
    } else {
        let g = granularity(args.granularity);
        let p = report.prf(g);
        println!(
            "{}: P {:.2}  R {:.2}  F1 {:.2}  (gold {}, predicted {}, matched {})",
            g.name(),
            100.0 * p.precision,
            100.0 * p.recall,
            100.0 * p.f1,
            p.gold,
            p.predicted,
            p.matched
        );
    }
    let out = default_out(args.out, "evaluate", "report.jsonl");
    write_jsonl(&records, &out)?;
    Ok(())
}

fn granularity(g: GranularityArg) -> Granularity {
    match g {
        GranularityArg::Full | GranularityArg::All => Granularity::Full,
        GranularityArg::Type => Granularity::Type,
        GranularityArg::Boundary => Granularity::Boundary,
    }
}

pub fn augment(args: AugmentArgs) -> Result<()> {
    let allowed: BTreeSet<CoarseType> = args
        .allow
        .iter()
        .map(|t| CoarseType::new(&t.trim().to_lowercase()).map_err(invalid("--allow")))
        .collect::<Result<_>>()?;
    let gold = read_gold(&args.gold)?;
    let silver = read_standoff_mentions(&gold, open(&args.silver)?).map_err(invalid(&args.silver.display().to_string()))?;
    let mut report = MergeReport::default();
    let mut merged = Vec::with_capacity(gold.len());
    for (g, s) in gold.iter().zip(&silver) {
        let (doc, r) = merge_silver(g, s.mentions(), &allowed).map_err(invalid("merge"))?;
        report.absorb(r);
        merged.push(doc);
    }
    let out = default_out(args.out, "augment", "merged.conll");
    let mut w = create(&out)?;
    write_column_corpus(&merged, &mut w)?;
    w.flush()?;
    let mut r = create(&sibling(&out, "merge.json"))?;
    serde_json::to_writer_pretty(&mut r, &report)?;
    r.flush()?;
    println!(
        "added {}, dropped (type) {}, dropped (overlap) {}; merged corpus {}",
        report.added,
        report.dropped_type,
        report.dropped_overlap,
        out.display()
    );
    Ok(())
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    require_file(&args.manifest)?;
    let (manifest, base) = Manifest::load(&args.manifest).map_err(invalid("manifest"))?;
    let data = manifest.prepare(&base).map_err(invalid("manifest"))?;
    let out = manifest.output_dir(&base);
    let report = manifest.execute(&data, &out)?;
    print!("{}", report.table());
    println!("reports written to {}", out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    if args.coarse == 0 || args.fine == 0 || args.dev == 0 || args.test == 0 {
        return Err(usage("sentence counts must be positive"));
    }
    let dir = args.out_dir.unwrap_or_else(|| output_root().join("synth"));
    let world = SyntheticWorld::new(SynthConfig {
        seed: args.seed,
        ..SynthConfig::default()
    });
    let corpora = [
        ("coarse_train.conll", world.corpus(args.coarse, LabelView::Coarse, args.seed + 1, "ct")),
        ("coarse_dev.conll", world.corpus(args.dev, LabelView::Coarse, args.seed + 2, "cd")),
        ("fine_train.conll", world.corpus(args.fine, LabelView::Fine, args.seed + 3, "ft")),
        ("fine_dev.conll", world.corpus(args.dev, LabelView::Fine, args.seed + 4, "fd")),
        ("test.conll", world.corpus(args.test, LabelView::Fine, args.seed + 5, "te")),
    ];
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tax = create(&dir.join("taxonomy.txt"))?;
    for label in world.taxonomy().labels() {
        writeln!(tax, "{label}")?;
    }
    tax.flush()?;
    for (name, docs) in &corpora {
        let mut w = create(&dir.join(name))?;
        write_column_corpus(docs, &mut w)?;
        w.flush()?;
    }
    let manifest = Manifest {
        output_dir: "experiment".into(),
        taxonomy: "taxonomy.txt".into(),
        coarse_train: "coarse_train.conll".into(),
        coarse_dev: "coarse_dev.conll".into(),
        fine_train: "fine_train.conll".into(),
        fine_train_standoff: None,
        fine_dev: "fine_dev.conll".into(),
        test: "test.conll".into(),
        grid: GridSpec::desk(),
    };
    echo_config(&manifest, &dir.join("manifest.toml"))?;
    println!("synthetic corpora written to {}", dir.display());
    Ok(())
}
