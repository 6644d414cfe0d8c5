use clap::Args;
use democratic_pooling::bench::{newton_scaling, sinkhorn_scaling, time_phases, BenchConfig, PhaseTimings, ScalingFit};
use democratic_pooling::Error;
use serde::Serialize;

use crate::output::emit_report;
use crate::GlobalArgs;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 784)]
    pub n: usize,
    #[arg(long, default_value_t = 512)]
    pub d: usize,
    /// Sinkhorn iterations.
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 20)]
    pub newton_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Kernel sizes for the Sinkhorn per-iteration scaling fit.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub sweep_n: Vec<usize>,
    /// Covariance sizes for the Newton-Schulz per-iteration scaling fit.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512")]
    pub sweep_d: Vec<usize>,
    /// Skip the scaling sweeps.
    #[arg(long)]
    pub no_sweep: bool,
}

#[derive(Serialize)]
struct BenchReport {
    config: BenchConfig,
    phases: PhaseTimings,
    sinkhorn_iterations_faster: bool,
    sinkhorn_scaling: Option<ScalingFit>,
    newton_scaling: Option<ScalingFit>,
}

pub fn run(global: &GlobalArgs, args: BenchArgs) -> anyhow::Result<()> {
    if args.n < 2 || args.d < 2 {
        return Err(Error::InvalidConfig("bench needs n >= 2 and d >= 2".into()).into());
    }
    let config = BenchConfig {
        n: args.n,
        d: args.d,
        sinkhorn_iters: args.iters,
        newton_iters: args.newton_iters,
        repeats: args.repeats,
        seed: global.seed,
    };
    // Both solvers run on one thread so neither gets extra cores.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let report = pool.install(|| -> anyhow::Result<BenchReport> {
        let phases = time_phases(&config)?;
        let (sinkhorn, newton) = if args.no_sweep {
            (None, None)
        } else {
            (
                Some(sinkhorn_scaling(&args.sweep_n, args.d.min(64), args.repeats, global.seed)?),
                Some(newton_scaling(&args.sweep_d, args.n, args.repeats, global.seed)?),
            )
        };
        Ok(BenchReport {
            config,
            sinkhorn_iterations_faster: phases.sinkhorn_iterations_secs < phases.newton_iterations_secs,
            phases,
            sinkhorn_scaling: sinkhorn,
            newton_scaling: newton,
        })
    })?;
    emit_report(global, &report)
}
