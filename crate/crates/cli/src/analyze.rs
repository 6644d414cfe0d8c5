use std::path::PathBuf;

use clap::Args;
use democratic_pooling::analysis::{spectrum_report_with, BoundCheck, ContributionReport, SpectrumReport};
use democratic_pooling::{contributions_vs_power, verify_bounds, SinkhornConfig, SpectrumMethod};
use serde::Serialize;

use crate::aggregate::load_input;
use crate::output::{emit_report, write_atomic};
use crate::GlobalArgs;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub input: PathBuf,
    /// Matrix power exponent p in (0, 1].
    #[arg(long, conflicts_with = "gamma")]
    pub power: Option<f64>,
    /// Report the normalized spectrum instead of contributions.
    #[arg(long)]
    pub spectrum: bool,
    /// With --spectrum: spectrum of the gamma-democratic aggregate.
    #[arg(long, requires = "spectrum")]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Also write per-feature contributions, one per line.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub drop_zero_rows: bool,
}

#[derive(Serialize)]
struct ContributionOutput {
    report: ContributionReport<f64>,
    checks: Vec<BoundCheck>,
    all_hold: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Output {
    Contributions(Box<ContributionOutput>),
    Spectrum(SpectrumReport<f64>),
}

pub fn run(global: &GlobalArgs, args: AnalyzeArgs) -> anyhow::Result<()> {
    let policy = if args.drop_zero_rows {
        democratic_pooling::RowPolicy::dropping()
    } else {
        Default::default()
    };
    let features = load_input(&args.input, policy)?;

    let output = if args.spectrum {
        let method = match (args.power, args.gamma) {
            (Some(p), _) => SpectrumMethod::Power(p),
            (_, Some(g)) => SpectrumMethod::GammaDemocratic(g),
            _ => SpectrumMethod::Sum,
        };
        let cfg = SinkhornConfig::default().iterations(args.iters);
        Output::Spectrum(spectrum_report_with(&features, method, &cfg)?)
    } else {
        let report = contributions_vs_power(&features, args.power.unwrap_or(1.0))?;
        if let Some(path) = &args.csv {
            write_atomic(path, |w| {
                for c in &report.contributions {
                    writeln!(w, "{c}")?;
                }
                Ok(())
            })?;
        }
        let checks = verify_bounds(&report);
        let all_hold = checks.iter().all(|c| c.holds);
        Output::Contributions(Box::new(ContributionOutput { report, checks, all_hold }))
    };
    emit_report(global, &output)
}
