use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use democratic_pooling::io::write_matrix;
use democratic_pooling::{generate_synthetic, Error, FeatureSet, SyntheticSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit_report, ensure_dir, extension, matrix_format, write_atomic};
use crate::GlobalArgs;

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Features per image.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub burst_fraction: f64,
    #[arg(long, default_value_t = 0.25)]
    pub signal_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_scale: f64,
    /// Class of a single generated set.
    #[arg(long, default_value_t = 0)]
    pub class: usize,

    /// Generate a labelled dataset with this many classes instead of one set.
    #[arg(long, requires_all = ["per_class", "out_dir"])]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Share of each class assigned to the test split.
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Per-image seed; adjacent indices give unrelated streams.
pub fn image_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Serialize)]
struct DatasetReport {
    classes: usize,
    per_class: usize,
    train: usize,
    test: usize,
    labels: PathBuf,
}

pub fn run(global: &GlobalArgs, args: GenArgs) -> anyhow::Result<()> {
    let format = matrix_format(global.format)?;
    let spec = |seed, class_id| SyntheticSpec {
        n: args.n,
        d: args.d,
        burst_fraction: args.burst_fraction,
        signal_fraction: args.signal_fraction,
        noise_scale: args.noise_scale,
        seed,
        class_id,
    };

    let (Some(classes), Some(per_class), Some(dir)) = (args.classes, args.per_class, &args.out_dir) else {
        let out = global
            .out
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("gen needs --out, or --classes/--per-class/--out-dir".into()))?;
        let fs: FeatureSet<f64> = generate_synthetic(&spec(global.seed, args.class))?;
        return write_atomic(out, |w| Ok(write_matrix(w, fs.data(), format)?));
    };

    if classes < 2 || per_class == 0 {
        return Err(Error::InvalidConfig("a dataset needs at least 2 classes and 1 image per class".into()).into());
    }
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(Error::InvalidConfig("--test-fraction must lie in [0, 1)".into()).into());
    }
    ensure_dir(dir)?;
    let n_test = (args.test_fraction * per_class as f64).round() as usize;
    let ext = extension(global.format);
    let entries: Vec<(String, usize, &str)> = (0..classes * per_class)
        .map(|idx| {
            let (class, k) = (idx / per_class, idx % per_class);
            let split = if k < per_class - n_test { "train" } else { "test" };
            (format!("c{class}_{k:04}.{ext}"), class, split)
        })
        .collect();

    entries.par_iter().enumerate().try_for_each(|(idx, (name, class, _))| -> anyhow::Result<()> {
        let fs: FeatureSet<f64> = generate_synthetic(&spec(image_seed(global.seed, idx as u64), *class))?;
        write_atomic(&dir.join(name), |w| Ok(write_matrix(w, fs.data(), format)?))
            .with_context(|| format!("writing {name}"))
    })?;

    let labels = dir.join("labels.csv");
    write_atomic(&labels, |w| {
        writeln!(w, "path,label,split")?;
        for (name, class, split) in &entries {
            writeln!(w, "{name},{class},{split}")?;
        }
        Ok(())
    })?;
    let test = classes * n_test;
    emit_report(
        &GlobalArgs { out: None, ..global.clone() },
        &DatasetReport { classes, per_class, train: classes * per_class - test, test, labels },
    )
}
