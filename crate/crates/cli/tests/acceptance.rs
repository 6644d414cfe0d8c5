//! Acceptance checks, one line per criterion. Exits non-zero if any fails.
//!
//! Runs without the libtest harness so that the timing criteria execute
//! sequentially on an otherwise idle process.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use democratic_pooling::aggregate::{contribution, weighted_outer_sum, Encoder, Weights};
use democratic_pooling::bench::{newton_scaling, sinkhorn_scaling, time_phases, BenchConfig};
use democratic_pooling::classify::{accuracy, train_ovr_linear, LabeledDescriptorSet, TrainConfig};
use democratic_pooling::pipeline::{Pipeline, PipelineConfig, Pooling};
use democratic_pooling::{
    aggregate_second_order, aggregate_second_order_sketched, clamp_negatives, eig_sym, generate_synthetic,
    in_span_of_outer_products, matrix_power, newton_schulz_sqrt, raw_kernel, second_order_kernel,
    solve_gamma_democratic, spectrum_report, FeatureSet, SinkhornConfig, SketchConfig, SpectrumMethod,
    SyntheticSpec, TensorSketch,
};
use ndarray::{array, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn gaussian_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureSet<f64> {
    FeatureSet::new(Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))).unwrap()
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("took {:.2?}, limit {limit:?}", t))
}

fn bursty(seed: u64, class_id: usize) -> FeatureSet<f64> {
    generate_synthetic(&SyntheticSpec {
        n: 64,
        d: 32,
        burst_fraction: 0.5,
        signal_fraction: 0.25,
        noise_scale: 0.1,
        seed,
        class_id,
    })
    .unwrap()
}

fn c1_golden_square_root() -> Check {
    let start = Instant::now();
    let fs = FeatureSet::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let a = weighted_outer_sum(&fs, Weights::Uniform).unwrap();
    ensure(a == array![[2.0, 1.0], [1.0, 1.0]], || format!("A = {a:?}"))?;
    let root = matrix_power(a.view(), 0.5).unwrap();
    let golden: Array2<f64> = array![[1.3416, 0.4472], [0.4472, 0.8944]];
    let err = (&root - &golden).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(err <= 1e-3, || format!("max entry error {err:e}"))?;
    let span = in_span_of_outer_products(root.view(), &fs, 1e-8).unwrap();
    ensure(!span.in_span, || format!("A^1/2 reported in span (residual {:e})", span.residual))?;
    within(Duration::from_secs(1), start)?;
    Ok(format!("max entry error {err:.1e}, span residual {:.3}", span.residual))
}

fn c2_kernel_squaring() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, d) = (rng.random_range(1..=20), rng.random_range(1..=8));
        let fs = gaussian_set(&mut rng, n, d);
        let k = second_order_kernel(&fs);
        // Oracle: Gram matrix of the explicit d^2 vectors vec(x x^T).
        let lifted: Vec<Vec<f64>> = fs
            .data()
            .rows()
            .into_iter()
            .map(|x| x.iter().flat_map(|&a| x.iter().map(move |&b| a * b)).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                let g: f64 = lifted[i].iter().zip(&lifted[j]).map(|(a, b)| a * b).sum();
                let kij = k.values()[[i, j]];
                ensure(kij >= 0.0, || format!("negative kernel entry {kij}"))?;
                // Relative to the Cauchy-Schwarz scale |x_i|^2 |x_j|^2.
                let scale = (lifted[i].iter().map(|v| v * v).sum::<f64>()
                    * lifted[j].iter().map(|v| v * v).sum::<f64>())
                .sqrt();
                worst = worst.max((kij - g).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-10, || format!("relative deviation {worst:e}"))?;
    within(Duration::from_secs(10), start)?;
    Ok(format!("max relative deviation {worst:.1e}, all entries >= 0"))
}

fn c3_gamma_endpoints() -> Check {
    let start = Instant::now();
    let mut worst_spread = 0.0f64;
    let mut worst_residual = 0.0f64;
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (n, d) = (rng.random_range(2..=50), rng.random_range(2..=16));
        let fs = gaussian_set(&mut rng, n, d);
        let k2 = second_order_kernel(&fs);
        let k1 = clamp_negatives(&raw_kernel(&FeatureSet::new(fs.data().mapv(f64::abs)).unwrap()));
        for k in [&k2, &k1] {
            for t in [1, 3, 10] {
                let w = solve_gamma_democratic(k, &SinkhornConfig::with_gamma(1.0).iterations(t)).unwrap();
                ensure(w.alpha.iter().all(|&a| a == 1.0), || format!("gamma=1 seed {seed}: alpha != 1"))?;
            }
        }

        let w = solve_gamma_democratic(&k2, &SinkhornConfig::with_gamma(0.0).iterations(50)).unwrap();
        let xi = aggregate_second_order(&fs, (&w).into()).unwrap();
        let c: Vec<f64> = (0..n)
            .map(|i| contribution(i, &fs, (&w).into(), &xi, Encoder::SecondExplicit).unwrap())
            .collect();
        let mean = c.iter().sum::<f64>() / n as f64;
        let spread = (c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min)) / mean;
        worst_spread = worst_spread.max(spread);
        worst_residual = worst_residual.max(w.residual);
    }
    ensure(worst_spread <= 0.01, || format!("contribution spread {worst_spread:.3e}"))?;
    ensure(worst_residual <= 1e-3, || format!("residual {worst_residual:.3e}"))?;
    within(Duration::from_secs(30), start)?;
    Ok(format!("gamma=1 exact; gamma=0 spread {worst_spread:.1e}, residual {worst_residual:.1e}"))
}

/// Random instances for the power-normalization criteria.
fn power_instances() -> Vec<FeatureSet<f64>> {
    (0..100)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let d = rng.random_range(2..=12);
            let n = rng.random_range(1..=3 * d);
            gaussian_set(&mut rng, n, d)
        })
        .collect()
}

const POWERS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

struct PowerCase {
    lambdas: Vec<f64>,
    rho: f64,
    contributions: Vec<f64>,
    norms: Vec<f64>,
}

/// Contributions `<x x^T, A^p> / ||A^p||_F` computed elementwise from the matrix power.
fn power_case(fs: &FeatureSet<f64>, p: f64) -> PowerCase {
    let a = weighted_outer_sum(fs, Weights::Uniform).unwrap();
    let ap = matrix_power(a.view(), p).unwrap();
    let rho = frob(&ap);
    let contributions = fs
        .data()
        .rows()
        .into_iter()
        .map(|x| {
            let outer = x.view().insert_axis(Axis(1)).dot(&x.view().insert_axis(Axis(0)));
            (&outer * &ap).sum() / rho
        })
        .collect();
    PowerCase { lambdas: eig_sym(a.view()).unwrap().eigenvalues, rho, contributions, norms: fs.squared_norms() }
}

fn c4_power_identities() -> Check {
    let start = Instant::now();
    let (mut worst_rho, mut worst_sum) = (0.0f64, 0.0f64);
    for fs in power_instances() {
        for p in POWERS {
            let case = power_case(&fs, p);
            let rho_spec = case.lambdas.iter().map(|l| l.powf(2.0 * p)).sum::<f64>().sqrt();
            let sum_spec = case.lambdas.iter().map(|l| l.powf(1.0 + p)).sum::<f64>() / case.rho;
            worst_rho = worst_rho.max(rel(case.rho, rho_spec));
            worst_sum = worst_sum.max(rel(case.contributions.iter().sum(), sum_spec));
        }
    }
    ensure(worst_rho <= 1e-8, || format!("rho identity off by {worst_rho:e}"))?;
    ensure(worst_sum <= 1e-8, || format!("sum identity off by {worst_sum:e}"))?;
    within(Duration::from_secs(60), start)?;
    Ok(format!("rho rel {worst_rho:.1e}, sum rel {worst_sum:.1e} over 1000 cases"))
}

fn c5_power_inequalities() -> Check {
    let start = Instant::now();
    let slack = -1e-9;
    let mut min_slack = f64::INFINITY;
    for (idx, fs) in power_instances().iter().enumerate() {
        for p in POWERS {
            let case = power_case(fs, p);
            let c = &case.contributions;
            let m = c.len() as f64;
            let mu = c.iter().sum::<f64>() / m;
            let var = c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m;
            let big_m = c.iter().cloned().fold(f64::MIN, f64::max);
            let small_m = c.iter().cloned().fold(f64::MAX, f64::min);
            let r_max = case.norms.iter().cloned().fold(f64::MIN, f64::max);
            let r_min = case.norms.iter().cloned().fold(f64::MAX, f64::min);
            let l1 = case.lambdas[0];
            let ld = *case.lambdas.last().unwrap();
            let bd = (big_m - mu) * (mu - small_m);
            let pop = (big_m - small_m).powi(2) / 4.0;
            let spectral = r_max.powi(2) * l1.powf(2.0 * p) / (4.0 * case.rho.powi(2));
            let checks = [
                ("max <= r_max l1^p / rho", r_max * l1.powf(p) / case.rho - big_m),
                ("min >= r_min ld^p / rho", small_m - r_min * ld.powf(p) / case.rho),
                ("var <= bhatia-davis", bd - var),
                ("bhatia-davis <= popoviciu", pop - bd),
                ("popoviciu <= spectral", spectral - pop),
            ];
            for (name, s) in checks {
                min_slack = min_slack.min(s);
                ensure(s >= slack, || format!("instance {idx}, p={p}: {name} slack {s:e}"))?;
            }
        }
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("all 5000 inequalities hold, min slack {min_slack:.1e}"))
}

fn c6_spectrum_flattening() -> Check {
    for (idx, fs) in power_instances().iter().enumerate() {
        let entropies: Vec<f64> =
            POWERS.iter().map(|&p| spectrum_report(fs, SpectrumMethod::Power(p)).unwrap().entropy).collect();
        for w in entropies.windows(2) {
            ensure(w[1] <= w[0] + 1e-12, || format!("instance {idx}: entropy rises {:?}", w))?;
        }
    }
    let seeds = 50;
    let wins = (0..seeds)
        .filter(|&seed| {
            let fs = bursty(600 + seed, seed as usize % 4);
            let sum = spectrum_report(&fs, SpectrumMethod::Sum).unwrap().top_mass;
            let dem = spectrum_report(&fs, SpectrumMethod::GammaDemocratic(0.0)).unwrap().top_mass;
            dem < sum
        })
        .count();
    ensure(wins * 10 >= seeds as usize * 9, || format!("democratic top mass lower in {wins}/{seeds}"))?;
    Ok(format!("entropy monotone on 100 instances; democratic flatter in {wins}/{seeds}"))
}

fn c7_sketch_fidelity() -> Check {
    let start = Instant::now();
    let d = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let exact = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().powi(2);
    let samples: Vec<f64> = (0..200)
        .map(|seed| {
            let ts = TensorSketch::<f64>::new(d, SketchConfig { k: 4096, seed }).unwrap();
            let (tx, ty) = (ts.sketch_feature(&x).unwrap(), ts.sketch_feature(&y).unwrap());
            tx.iter().zip(&ty).map(|(a, b)| a * b).sum()
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / 200.0;
    let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    let se = sd / 200f64.sqrt();
    let z = (mean - exact).abs() / se;
    ensure(z <= 3.0, || format!("mean {mean:.4} vs {exact:.4}: {z:.2} standard errors"))?;

    let f = gaussian_set(&mut rng, 20, d);
    let g = gaussian_set(&mut rng, 25, d);
    let explicit =
        aggregate_second_order(&f, Weights::Uniform).unwrap().dot(&aggregate_second_order(&g, Weights::Uniform).unwrap()).unwrap();
    let sketched = (0..20)
        .map(|seed| {
            let ts = TensorSketch::<f64>::new(d, SketchConfig { k: 4096, seed: 1000 + seed }).unwrap();
            let a = aggregate_second_order_sketched(&f, Weights::Uniform, &ts).unwrap();
            let b = aggregate_second_order_sketched(&g, Weights::Uniform, &ts).unwrap();
            a.dot(&b).unwrap()
        })
        .sum::<f64>()
        / 20.0;
    let agg_rel = rel(sketched, explicit);
    ensure(agg_rel <= 0.10, || format!("aggregate dot relative error {agg_rel:.3}"))?;
    within(Duration::from_secs(60), start)?;
    Ok(format!("pairwise {z:.2} SE from (x.y)^2; aggregate dot rel err {agg_rel:.3}"))
}

fn c8_square_root_oracles() -> Check {
    let (mut worst_diff, mut worst_res) = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        // Wishart with 2d samples: positive definite with a moderate condition number.
        let b = Array2::<f64>::from_shape_fn((128, 64), |_| rng.sample(StandardNormal));
        let a = b.t().dot(&b);
        let z = newton_schulz_sqrt(a.view(), 20).unwrap();
        let e = matrix_power(a.view(), 0.5).unwrap();
        worst_diff = worst_diff.max(frob(&(&z - &e)));
        worst_res = worst_res.max(frob(&(z.dot(&z) - &a)) / frob(&a));
    }
    ensure(worst_diff <= 1e-5, || format!("Newton vs eig {worst_diff:e}"))?;
    ensure(worst_res <= 1e-4, || format!("||ZZ - A|| / ||A|| = {worst_res:e}"))?;
    Ok(format!("||Z - A^1/2||_F {worst_diff:.1e}, ||ZZ - A||/||A|| {worst_res:.1e}"))
}

fn c9_complexity_scaling() -> Check {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let sink = sinkhorn_scaling(&[500, 1000, 2000], 64, 5, 9).unwrap();
        let newton = newton_scaling(&[128, 256, 512], 784, 3, 9).unwrap();
        let phases = time_phases(&BenchConfig { seed: 9, ..BenchConfig::default() }).unwrap();
        let mut problems = Vec::new();
        if (sink.exponent - 2.0).abs() > 0.4 {
            problems.push(format!("Sinkhorn exponent {:.2} {:?}", sink.exponent, sink.points));
        }
        if (newton.exponent - 3.0).abs() > 0.5 {
            problems.push(format!("Newton exponent {:.2} {:?}", newton.exponent, newton.points));
        }
        if phases.sinkhorn_iterations_secs >= phases.newton_iterations_secs {
            problems.push(format!(
                "Sinkhorn iterations {:.4}s not faster than Newton {:.4}s",
                phases.sinkhorn_iterations_secs, phases.newton_iterations_secs
            ));
        }
        if let Err(e) = within(Duration::from_secs(300), start) {
            problems.push(e);
        }
        let summary = format!(
            "exponents {:.2} (n) / {:.2} (d); at 784x512 iterations {:.2} ms vs {:.1} ms, phases {:.1} ms vs {:.1} ms (ratio {:.1}x)",
            sink.exponent,
            newton.exponent,
            phases.sinkhorn_iterations_secs * 1e3,
            phases.newton_iterations_secs * 1e3,
            phases.sinkhorn_phase_secs * 1e3,
            phases.newton_phase_secs * 1e3,
            phases.speedup
        );
        if problems.is_empty() {
            Ok(summary)
        } else {
            Err(format!("{}; {summary}", problems.join("; ")))
        }
    })
}

fn synthetic_accuracy(pooling: Pooling<f64>, seed: u64) -> f64 {
    let (classes, per_class, train_per_class) = (4, 100, 50);
    let sets: Vec<FeatureSet<f64>> =
        (0..classes * per_class).map(|i| bursty(seed * 10_000 + i as u64, i / per_class)).collect();
    let labels: Vec<usize> = (0..classes * per_class).map(|i| i / per_class).collect();
    let pipeline = Pipeline::new(PipelineConfig::second_order(pooling), 32).unwrap();
    let x = pipeline.describe_all(&sets).unwrap();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..sets.len()).partition(|i| i % per_class < train_per_class);
    let pick = |idx: &[usize]| (x.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (tx, ty) = pick(&train);
    let (vx, vy) = pick(&test);
    let model = train_ovr_linear(&LabeledDescriptorSet::new(tx, ty).unwrap(), &TrainConfig { seed, ..Default::default() })
        .unwrap();
    accuracy(&model.predict(&vx).unwrap(), &vy, classes).unwrap().mean
}

fn c10_synthetic_classification() -> Check {
    let start = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];
    let dem: Vec<f64> = seeds.iter().map(|&s| synthetic_accuracy(Pooling::Gamma(0.5), s)).collect();
    let sum: Vec<f64> = seeds.iter().map(|&s| synthetic_accuracy(Pooling::Sum, s)).collect();
    let (md, ms) = (dem.iter().sum::<f64>() / 5.0, sum.iter().sum::<f64>() / 5.0);
    ensure(md >= ms, || format!("gamma=0.5 {md:.3} < sum {ms:.3}"))?;
    within(Duration::from_secs(300), start)?;
    Ok(format!("mean test accuracy gamma=0.5 {md:.3} vs sum {ms:.3}"))
}

fn dpool(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dpool")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("dpool {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c11_cli_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs: &[(&str, &[&str])] = &[
        ("sum", &["--sum"]),
        ("gamma0", &["--gamma", "0"]),
        ("gamma05", &["--gamma", "0.5", "--iters", "20", "--tau", "0.7"]),
        ("first", &["--order", "1", "--gamma", "0.3"]),
        ("eig", &["--power", "0.4"]),
        ("newton", &["--power", "0.5", "--sqrt-method", "newton"]),
        ("sketch", &["--encoder", "sketch", "--sketch-dim", "512", "--gamma", "0.5"]),
    ];
    let mut compared = 0;
    for run in ["a", "b"] {
        let root = tmp.path().join(run);
        let data = root.join("data");
        let data_s = data.to_str().unwrap();
        dpool(&["--seed", "11", "gen", "--classes", "3", "--per-class", "4", "--n", "24", "--d", "10", "--out-dir", data_s])?;
        let list = data.join("labels.csv");
        let names: Vec<String> = std::fs::read_to_string(&list)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| data.join(l.split(',').next().unwrap()).to_string_lossy().into_owned())
            .collect();
        for (name, flags) in configs {
            for format in ["csv", "raw-f32", "json"] {
                let out = root.join(format!("{name}-{format}"));
                let mut args = vec!["--seed", "11", "--format", format, "aggregate", "--out-dir", out.to_str().unwrap()];
                args.extend(names.iter().map(String::as_str));
                args.extend(flags.iter().copied());
                dpool(&args)?;
            }
        }
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let (x, y) = (dir_bytes(&a.join(&name)), dir_bytes(&b.join(&name)));
        ensure(!x.is_empty() && x == y, || format!("{} differs between runs", name.to_string_lossy()))?;
        compared += x.len();
    }
    Ok(format!("{compared} files byte-identical across two runs"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("golden square root and span test", c1_golden_square_root),
        ("second-order kernel equals explicit Gram", c2_kernel_squaring),
        ("gamma endpoints", c3_gamma_endpoints),
        ("power-normalization identities", c4_power_identities),
        ("contribution and variance bounds", c5_power_inequalities),
        ("spectrum flattening", c6_spectrum_flattening),
        ("Tensor Sketch fidelity", c7_sketch_fidelity),
        ("square-root oracles", c8_square_root_oracles),
        ("complexity scaling", c9_complexity_scaling),
        ("synthetic classification", c10_synthetic_classification),
        ("CLI determinism", c11_cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
