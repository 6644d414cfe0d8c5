use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{ArgGroup, Args, ValueEnum};
use democratic_pooling::pipeline::{EncoderKind, Pipeline, PipelineConfig, Pooling, SqrtMethod};
use democratic_pooling::sketch::DEFAULT_SKETCH_DIM;
use democratic_pooling::{
    clamp_negatives, load_features, raw_kernel, second_order_kernel, Error, FeatureSet, MatrixFormat, Order,
    RowPolicy, SinkhornConfig, SketchConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit_report, ensure_dir, extension, write_atomic, write_descriptor};
use crate::GlobalArgs;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderArg {
    Explicit,
    Sketch,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SqrtArg {
    Eig,
    Newton,
}

/// Pipeline flags shared by `aggregate` and `classify`.
#[derive(Args, Debug, Clone)]
#[command(group(ArgGroup::new("pooling").args(["sum", "gamma", "power"])))]
pub struct PoolArgs {
    /// 1 for first-order features, 2 for outer products.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
    #[arg(long, value_enum, default_value_t = EncoderArg::Explicit)]
    pub encoder: EncoderArg,
    /// Plain sum pooling (the default when no pooling flag is given).
    #[arg(long)]
    pub sum: bool,
    /// Gamma-democratic pooling: 1 is sum pooling, 0 fully democratic.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Matrix power normalization of the sum-pooled aggregate.
    #[arg(long)]
    pub power: Option<f64>,
    /// Sinkhorn damping.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Sinkhorn iterations.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_SKETCH_DIM)]
    pub sketch_dim: usize,
    /// Hash seed of the Tensor Sketch (default: --seed).
    #[arg(long)]
    pub sketch_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = SqrtArg::Eig)]
    pub sqrt_method: SqrtArg,
    #[arg(long, default_value_t = 20)]
    pub newton_iters: usize,
    /// Skip the signed square root and l2 normalization.
    #[arg(long)]
    pub no_postprocess: bool,
    /// Drop near-zero feature rows instead of rejecting the file.
    #[arg(long)]
    pub drop_zero_rows: bool,
}

impl PoolArgs {
    pub fn config(&self, seed: u64) -> anyhow::Result<PipelineConfig<f64>> {
        let order = if self.order == 1 { Order::First } else { Order::Second };
        let encoder = match self.encoder {
            EncoderArg::Explicit => EncoderKind::Explicit,
            EncoderArg::Sketch => {
                EncoderKind::Sketch(SketchConfig { k: self.sketch_dim, seed: self.sketch_seed.unwrap_or(seed) })
            }
        };
        let pooling = match (self.gamma, self.power) {
            (Some(g), _) => Pooling::Gamma(g),
            (_, Some(p)) => Pooling::Power {
                p,
                method: match self.sqrt_method {
                    SqrtArg::Eig => SqrtMethod::Eig,
                    SqrtArg::Newton => SqrtMethod::Newton,
                },
                newton_iters: self.newton_iters,
            },
            _ => Pooling::Sum,
        };
        let sinkhorn = SinkhornConfig::default().tau(self.tau).iterations(self.iters);
        let cfg = PipelineConfig { order, encoder, pooling, sinkhorn, postprocess: !self.no_postprocess };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn row_policy(&self) -> RowPolicy {
        if self.drop_zero_rows {
            RowPolicy::dropping()
        } else {
            RowPolicy::default()
        }
    }
}

pub fn load_input(path: &Path, policy: RowPolicy) -> anyhow::Result<FeatureSet<f64>> {
    let format = MatrixFormat::detect_file(path).with_context(|| format!("reading {}", path.display()))?;
    load_features(path, format, policy).with_context(|| format!("loading {}", path.display()))
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// Feature files (csv or raw-f32, detected from content).
    pub inputs: Vec<PathBuf>,
    /// File listing one input path per line, relative to the list's directory.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Directory for batch outputs, one descriptor per input.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the kernel matrix as csv (single input only).
    #[arg(long)]
    pub dump_kernel: Option<PathBuf>,
    #[command(flatten)]
    pub pool: PoolArgs,
}

#[derive(Serialize)]
struct AggregateReport {
    input: PathBuf,
    output: PathBuf,
    n: usize,
    d: usize,
    descriptor_len: usize,
    /// Sinkhorn constraint residual, when the solver ran.
    residual: Option<f64>,
    iterations: Option<usize>,
    elapsed_secs: f64,
}

fn read_list(list: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let text = fs::read_to_string(list).with_context(|| format!("reading {}", list.display()))?;
    let base = list.parent().unwrap_or(Path::new("."));
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(|l| base.join(l)).collect())
}

fn pool_one(
    pipeline: &Pipeline<f64>,
    input: &Path,
    output: &Path,
    args: &AggregateArgs,
    global: &GlobalArgs,
) -> anyhow::Result<AggregateReport> {
    let features = load_input(input, args.pool.row_policy())?;
    if let Some(kpath) = &args.dump_kernel {
        let k = match pipeline.config().order {
            Order::First => clamp_negatives(&raw_kernel(&features)),
            Order::Second => second_order_kernel(&features),
        };
        write_atomic(kpath, |w| Ok(k.write_csv(w)?))?;
    }
    let start = Instant::now();
    let out = pipeline.describe(&features).with_context(|| format!("pooling {}", input.display()))?;
    let elapsed_secs = start.elapsed().as_secs_f64();
    write_descriptor(output, &out.descriptor, global.format)?;
    Ok(AggregateReport {
        input: input.to_path_buf(),
        output: output.to_path_buf(),
        n: features.n(),
        d: features.d(),
        descriptor_len: out.descriptor.len(),
        residual: out.weights.as_ref().map(|w| w.residual),
        iterations: out.weights.as_ref().map(|w| w.iterations_run),
        elapsed_secs,
    })
}

fn output_name(input: &Path, ext: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_os_string()).unwrap_or_else(|| "descriptor".into());
    PathBuf::from(stem).with_extension(ext)
}

pub fn run(global: &GlobalArgs, args: AggregateArgs) -> anyhow::Result<()> {
    let cfg = args.pool.config(global.seed)?;
    let mut inputs = args.inputs.clone();
    if let Some(list) = &args.list {
        inputs.extend(read_list(list)?);
    }
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("no input files".into()).into());
    }
    if args.dump_kernel.is_some() && inputs.len() > 1 {
        return Err(Error::InvalidConfig("--dump-kernel takes a single input".into()).into());
    }

    // All inputs must share d for one sketch to serve them; the first file fixes it.
    let d = load_input(&inputs[0], args.pool.row_policy())?.d();
    let pipeline = Pipeline::new(cfg, d)?;
    let report_to_stdout = GlobalArgs { out: None, ..global.clone() };

    match (&global.out, &args.out_dir) {
        (Some(out), None) if inputs.len() == 1 => {
            let report = pool_one(&pipeline, &inputs[0], out, &args, global)?;
            emit_report(&report_to_stdout, &report)
        }
        (None, Some(dir)) => {
            ensure_dir(dir)?;
            let ext = extension(global.format);
            let reports = inputs
                .par_iter()
                .map(|input| pool_one(&pipeline, input, &dir.join(output_name(input, ext)), &args, global))
                .collect::<anyhow::Result<Vec<_>>>()?;
            emit_report(&report_to_stdout, &reports)
        }
        _ => Err(Error::InvalidConfig("use --out with one input, or --out-dir for a batch".into()).into()),
    }
}
