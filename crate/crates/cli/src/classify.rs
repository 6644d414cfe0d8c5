use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use democratic_pooling::classify::{accuracy, train_ovr_linear, Accuracy, LabeledDescriptorSet, TrainConfig};
use democratic_pooling::pipeline::Pipeline;
use democratic_pooling::{Error, FeatureSet};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::{load_input, PoolArgs};
use crate::output::emit_report;
use crate::GlobalArgs;

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// CSV with header `path,label,split`; split is `train` or `test`.
    pub labels: PathBuf,
    /// Loss weight of the squared hinge term.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[command(flatten)]
    pub pool: PoolArgs,
}

#[derive(Debug, PartialEq)]
pub struct Entry {
    pub path: PathBuf,
    pub label: usize,
    pub train: bool,
}

pub fn parse_labels(text: &str, base: &Path) -> Result<Vec<Entry>, Error> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "path,label,split" => {}
        _ => return Err(Error::Parse { line: 1, message: "expected header `path,label,split`".into() }),
    }
    lines
        .map(|(i, line)| {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [path, label, split] = fields[..] else {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            };
            let label = label.parse().map_err(|_| bad(format!("bad label `{label}`")))?;
            let train = match split {
                "train" => true,
                "test" => false,
                other => return Err(bad(format!("unknown split `{other}`"))),
            };
            Ok(Entry { path: base.join(path), label, train })
        })
        .collect()
}

#[derive(Serialize)]
struct ClassifyReport {
    num_classes: usize,
    train_images: usize,
    test_images: usize,
    descriptor_len: usize,
    train_accuracy: Accuracy,
    test_accuracy: Option<Accuracy>,
    solver_iterations: Vec<usize>,
}

fn select(descriptors: &Array2<f64>, entries: &[Entry], train: bool) -> (Array2<f64>, Vec<usize>) {
    let idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].train == train).collect();
    (descriptors.select(Axis(0), &idx), idx.iter().map(|&i| entries[i].label).collect())
}

pub fn run(global: &GlobalArgs, args: ClassifyArgs) -> anyhow::Result<()> {
    let cfg = args.pool.config(global.seed)?;
    let text = fs::read_to_string(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    let entries = parse_labels(&text, args.labels.parent().unwrap_or(Path::new(".")))
        .with_context(|| format!("parsing {}", args.labels.display()))?;
    if entries.is_empty() {
        return Err(Error::EmptyFeatureSet.into());
    }
    let policy = args.pool.row_policy();
    let sets = entries
        .par_iter()
        .map(|e| load_input(&e.path, policy))
        .collect::<anyhow::Result<Vec<FeatureSet<f64>>>>()?;
    let pipeline = Pipeline::new(cfg, sets[0].d())?;
    let descriptors = pipeline.describe_all(&sets)?;

    let (train_x, train_y) = select(&descriptors, &entries, true);
    let (test_x, test_y) = select(&descriptors, &entries, false);
    let train = LabeledDescriptorSet::new(train_x, train_y)?;
    let tc = TrainConfig { reg_c: args.c, seed: global.seed, ..TrainConfig::default() };
    let model = train_ovr_linear(&train, &tc)?;
    let k = train.num_classes();
    let train_accuracy = accuracy(&model.predict(train.descriptors())?, train.labels(), k)?;
    let test_accuracy = if test_y.is_empty() {
        None
    } else {
        Some(accuracy(&model.predict(&test_x)?, &test_y, k)?)
    };
    emit_report(
        global,
        &ClassifyReport {
            num_classes: k,
            train_images: train.labels().len(),
            test_images: test_y.len(),
            descriptor_len: descriptors.ncols(),
            train_accuracy,
            test_accuracy,
            solver_iterations: model.iterations,
        },
    )
}
