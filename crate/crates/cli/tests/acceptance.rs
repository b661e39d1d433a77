//! The twelve acceptance criteria, run in sequence so that the runtime
//! limits are measured without other tests competing for the CPU.
//!
//! Prints one `criterion N: PASS|FAIL` line each, then fails if any did.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kerf::experiment::{convergence_curve, ConvergenceSpec, Estimator, ExperimentSpec};
use kerf::kernel::{centred_kernel, multinomial_mix_naive, uniform_kernel_exact_1d};
use kerf::theory::{centred_integral_identity, monte_carlo_connections, rate_envelope_check, RateCheckConfig};
use kerf::verify::{bias_checks, lemma_checks, strategy_checks};
use kerf::{
    run_experiment, split_train_test, Dataset, Forest, ForestConfig, KernelFamily, RandomSource, Strategy,
    SyntheticModel, TreeSpec,
};
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(limit: Duration, start: Instant, pass: bool, detail: String) -> Outcome {
    let took = start.elapsed();
    Outcome {
        pass: pass && took < limit,
        detail: format!("{detail}; {:.2?} (limit {:?})", took, limit),
    }
}

fn random_point(rng: &mut RandomSource, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random()).collect()
}

fn random_data(n: usize, d: usize, seed: u64, nonnegative: bool) -> Dataset {
    let mut rng = RandomSource::new(seed, 0);
    let pts: Vec<f64> = (0..n * d).map(|_| rng.random()).collect();
    let ys: Vec<f64> = (0..n)
        .map(|_| {
            let y: f64 = rng.random::<f64>() * 3.0;
            if nonnegative {
                y
            } else {
                y - 1.5
            }
        })
        .collect();
    Dataset::new(d, pts, ys).unwrap()
}

fn kernel_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = RandomSource::new(1, 0);
    let mut bad = 0;
    for _ in 0..100 {
        let x: f64 = rng.random();
        for k in 0..=10 {
            if centred_integral_identity(x, k) != 0.5f64.powi(k as i32) {
                bad += 1;
            }
        }
    }
    within(Duration::from_secs(1), start, bad == 0, format!("{bad} of 1100 cases inexact"))
}

fn uniform_one_dimension() -> Outcome {
    let start = Instant::now();
    let mut rng = RandomSource::new(2, 0);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20).map(|_| (random_point(&mut rng, 1), random_point(&mut rng, 1))).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, trees, tol) in [(1u32, 100_000usize, 0.01), (2, 1_000_000, 0.005)] {
        let freq = monte_carlo_connections(&TreeSpec::Uniform { level: k }, &pairs, trees, 20 + u64::from(k)).unwrap();
        let worst = pairs
            .iter()
            .zip(&freq)
            .map(|((x, z), p)| (uniform_kernel_exact_1d(x[0], z[0], k).unwrap() - p).abs())
            .fold(0.0, f64::max);
        pass &= worst <= tol;
        detail.push(format!("k={k}: max err {worst:.5} (tol {tol})"));
    }
    within(Duration::from_secs(60), start, pass, detail.join(", "))
}

fn centred_connection_convergence() -> Outcome {
    let start = Instant::now();
    let (d, k, m) = (3, 5, 10_000);
    let data = random_data(10, d, 3, false);
    let forest = Forest::fit(&ForestConfig::new(TreeSpec::Centred { level: k }, m, 3), &data).unwrap();
    let mut rng = RandomSource::new(3, 1);
    let worst = (0..50)
        .map(|_| {
            let x = random_point(&mut rng, d);
            let z = random_point(&mut rng, d);
            (forest.empirical_connection(&x, &z) - centred_kernel(&x, &z, k, Strategy::DpConvolution)).abs()
        })
        .fold(0.0, f64::max);
    let bound = 4.0 / (m as f64).sqrt();
    within(Duration::from_secs(60), start, worst <= bound, format!("sup gap {worst:.5} vs {bound}"))
}

fn two_path_equality() -> Outcome {
    let data = random_data(200, 3, 4, false);
    let mut rng = RandomSource::new(4, 1);
    let queries: Vec<Vec<f64>> = (0..1000).map(|_| random_point(&mut rng, 3)).collect();
    let specs = [
        TreeSpec::Centred { level: 5 },
        TreeSpec::Uniform { level: 5 },
        TreeSpec::Median { level: 5 },
        TreeSpec::breiman_default(),
    ];
    let mut worst = 0.0f64;
    for spec in specs {
        for boot in [false, true] {
            let f = Forest::fit(&ForestConfig::new(spec, 25, 4).with_bootstrap(boot), &data).unwrap();
            for q in &queries {
                worst = worst.max((f.kerf_predict(q) - f.kerf_predict_via_kernel(q)).abs());
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max difference {worst:e} over 4 kinds, with and without bootstrap"),
    }
}

fn proximity() -> Outcome {
    let model = SyntheticModel::with_size(2, 400, 10).unwrap();
    let data = model.generate(&mut RandomSource::new(5, 0)).unwrap();
    let (train, test) = split_train_test(&data, 0.8, &mut RandomSource::new(5, 1)).unwrap();
    let grown = Forest::fit(&ForestConfig::new(TreeSpec::breiman_default(), 100, 5), &train).unwrap();
    let equal_gap = test
        .points()
        .map(|q| (grown.predict(q) - grown.kerf_predict(q)).abs())
        .fold(0.0, f64::max);

    let data = random_data(300, 3, 6, true);
    let spec = TreeSpec::Breiman {
        min_samples_split: 6,
        max_features: 0.333,
        min_leaf: 1,
    };
    let forest = Forest::fit(&ForestConfig::new(spec, 100, 6), &data).unwrap();
    let sizes_ok = forest.trees.iter().all(|t| t.leaves.iter().all(|l| (1..=5).contains(&l.count)));
    let mut rng = RandomSource::new(6, 1);
    let mut worst = 0.0f64;
    let mut bound_ok = true;
    for _ in 0..1000 {
        let r = forest.proximity_report(&random_point(&mut rng, 3));
        worst = worst.max(r.observed);
        bound_ok &= r.satisfied;
    }
    Outcome {
        pass: equal_gap <= 1e-12 && sizes_ok && bound_ok && worst <= 4.0,
        detail: format!(
            "fully grown gap {equal_gap:e}; leaf sizes in [1,5]: {sizes_ok}; ratio gap max {worst:.4}, within (b-a)/a everywhere: {bound_ok}"
        ),
    }
}

fn bias_bounds() -> Outcome {
    let start = Instant::now();
    let reports = bias_checks(50).unwrap();
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.satisfied)
        .map(|r| format!("{} d={} k={}", r.claim_id, r.context["d"], r.context["k"]))
        .collect();
    let tightest = reports.iter().map(|r| r.observed / r.bound).fold(0.0, f64::max);
    within(
        Duration::from_secs(300),
        start,
        failed.is_empty() && reports.len() == 24,
        format!("{} checks, largest gap/bound {tightest:.3}, violations {failed:?}", reports.len()),
    )
}

fn kernel_integral_bounds() -> Outcome {
    let start = Instant::now();
    let reports = lemma_checks();
    let failed = reports.iter().filter(|r| !r.satisfied).count();
    within(
        Duration::from_secs(60),
        start,
        failed == 0,
        format!("{} checks on x in {{0,0.1,..,1}}, k in 1..=6, {failed} violated", reports.len()),
    )
}

fn dp_equivalence() -> Outcome {
    let reports = strategy_checks(8, 1000);
    let worst = reports.iter().map(|r| r.observed).fold(0.0, f64::max);
    let mut rng = RandomSource::new(8, 1);
    let x = random_point(&mut rng, 10);
    let z = random_point(&mut rng, 10);
    let reps = 100u32;
    let start = Instant::now();
    let mut v = 0.0;
    for _ in 0..reps {
        v += centred_kernel(&x, &z, 12, Strategy::DpConvolution);
    }
    let dp = start.elapsed() / reps;
    let start = Instant::now();
    let naive = multinomial_mix_naive(12, 10, |_, t| f64::from(t));
    let naive_time = start.elapsed();
    std::hint::black_box((v, naive));
    Outcome {
        pass: worst <= 1e-10 && reports.iter().all(|r| r.satisfied) && dp < Duration::from_millis(10),
        detail: format!(
            "max DP/enumeration gap {worst:e}; d=10 k=12 DP {dp:.2?} per kernel vs enumeration {naive_time:.2?}"
        ),
    }
}

fn desk_scale() -> Outcome {
    let start = Instant::now();
    let mut spec = ExperimentSpec::new(
        1,
        200,
        50,
        vec![Estimator::BreimanRf, Estimator::BreimanKerf, Estimator::CentredRf, Estimator::CentredKerf],
    );
    spec.trees = 100;
    spec.repetitions = 10;
    spec.seed = 9;
    let r = run_experiment(&spec).unwrap();
    let mean = |e| r.result(e).unwrap().mean;
    let (brf, bkerf) = (mean(Estimator::BreimanRf), mean(Estimator::BreimanKerf));
    let (crf, ckerf) = (mean(Estimator::CentredRf), mean(Estimator::CentredKerf));
    let gap = (bkerf - brf).abs() / brf;
    within(
        Duration::from_secs(600),
        start,
        gap <= 0.20 && ckerf <= 1.05 * crf,
        format!("breiman rf {brf:.4} kerf {bkerf:.4} (gap {:.1}%); centred rf {crf:.4} kerf {ckerf:.4}", gap * 100.0),
    )
}

fn finite_to_infinite() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    for seed in 0..10 {
        let t = convergence_curve(&ConvergenceSpec {
            model: 1,
            n: 100,
            d: 10,
            family: KernelFamily::Centred,
            m_grid: vec![1, 1000],
            level: Some(100f64.log2().floor() as u32),
            seed: 100 + seed,
            train_fraction: 0.8,
        })
        .unwrap();
        let gap = |i: usize| (t.rows[i].risk - t.infinite_risk).abs();
        if gap(1) < gap(0) {
            wins += 1;
        }
    }
    within(Duration::from_secs(600), start, wins >= 9, format!("M=1000 closer than M=1 in {wins}/10"))
}

fn sum_fn(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn rate_trend() -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for rep in 0..10 {
        let cfg = RateCheckConfig {
            family: KernelFamily::Centred,
            d: 2,
            n_grid: vec![1 << 7, 1 << 12],
            trials: 10,
            sigma: 0.1,
            queries: vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.8, 0.2], vec![0.15, 0.4], vec![0.65, 0.9]],
            seed: 1000 + rep,
        };
        let r = rate_envelope_check(&cfg, &sum_fn).unwrap();
        if r.rows[1].risk < r.rows[0].risk {
            wins += 1;
        }
        rows.push((r.rows[0].risk, r.rows[1].risk));
    }
    let (a, b) = rows[0];
    Outcome {
        pass: wins >= 9,
        detail: format!("risk(2^12) < risk(2^7) in {wins}/10 (first repetition {a:.4} -> {b:.4})"),
    }
}

fn run(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kerf"))
        .args(args)
        .env("KERF_THREADS", threads)
        .output()
        .unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let mut rng = RandomSource::new(12, 0);
    let mut csv = String::from("a,b,c,y\n");
    for _ in 0..120 {
        let v = random_point(&mut rng, 4);
        csv.push_str(&format!("{},{},{},{}\n", v[0], v[1], v[2], v[3] * 2.0 - 1.0));
    }
    std::fs::write(p("train.csv"), &csv).unwrap();
    std::fs::write(
        p("exp.toml"),
        "model = 3\nn = 80\nd = 5\nestimators = [\"breiman-rf\", \"uniform-kerf\", \"centred-kerf-infinite\"]\ntrees = 10\nrepetitions = 3\nbootstrap = true\nseed = 4\n",
    )
    .unwrap();

    // (name, arguments, output file) for every subcommand.
    let mut jobs: Vec<(String, Vec<String>, String)> = Vec::new();
    for kind in ["centred", "uniform", "median", "breiman"] {
        jobs.push((
            format!("fit {kind}"),
            ["fit", "--data", &p("train.csv"), "--response", "y", "--kind", kind, "--trees", "15", "--auto-level", "--bootstrap", "--seed", "7", "--out"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            format!("model_{kind}.json"),
        ));
    }
    for (kind, mode) in [("centred", "forest"), ("uniform", "kerf-infinite"), ("median", "kerf"), ("breiman", "kerf")] {
        jobs.push((
            format!("predict {kind} {mode}"),
            vec!["predict".into(), "--model".into(), p(&format!("model_{kind}.json")), "--data".into(), p("train.csv"), "--mode".into(), mode.into(), "--out".into()],
            format!("pred_{kind}.csv"),
        ));
    }
    jobs.push(("kernel-eval".into(), ["kernel-eval", "--family", "uniform", "--k", "4", "--d", "2", "--grid", "20", "--out"].iter().map(|s| s.to_string()).collect(), "kernel.csv".into()));
    jobs.push(("verify".into(), ["verify", "--suite", "all", "--bias-grid", "6", "--seed", "3", "--out"].iter().map(|s| s.to_string()).collect(), "verify.json".into()));
    jobs.push(("experiment".into(), vec!["experiment".into(), "--config".into(), p("exp.toml"), "--csv".into(), p("exp.csv"), "--out".into()], "exp.json".into()));
    jobs.push(("convergence".into(), ["convergence", "--n", "60", "--d", "3", "--m-grid", "1,5,50", "--seed", "2", "--out"].iter().map(|s| s.to_string()).collect(), "conv.csv".into()));

    let mut mismatches = Vec::new();
    let mut failures = Vec::new();
    for (name, args, file) in &jobs {
        let mut outputs = Vec::new();
        for (i, threads) in ["1", "4", "1"].iter().enumerate() {
            let out_path = p(&format!("{i}_{file}"));
            let mut full = args.clone();
            full.push(out_path.clone());
            let status = run(&full.iter().map(String::as_str).collect::<Vec<_>>(), threads);
            if !status.status.success() {
                failures.push(format!("{name}: {}", String::from_utf8_lossy(&status.stderr).trim()));
            }
            outputs.push(std::fs::read(&out_path).unwrap_or_default());
            // Later subcommands read the first run's model files.
            if i == 0 && name.starts_with("fit") {
                std::fs::copy(&out_path, p(file)).unwrap();
            }
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) || outputs[0].is_empty() {
            mismatches.push(name.clone());
        }
    }
    let csv_written = Path::new(&p("exp.csv")).exists();
    Outcome {
        pass: mismatches.is_empty() && failures.is_empty() && csv_written,
        detail: format!(
            "{} subcommand runs at 1 and 4 threads; differing outputs {mismatches:?}; failures {failures:?}",
            jobs.len()
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 12] = [
        ("centred kernel integral identity", kernel_identity),
        ("one- and two-cut uniform kernels against simulation", uniform_one_dimension),
        ("centred forest connection converges to the kernel", centred_connection_convergence),
        ("KeRF cell path equals kernel path", two_path_equality),
        ("forest versus KeRF proximity", proximity),
        ("bias bounds", bias_bounds),
        ("uniform kernel integral and moment bounds", kernel_integral_bounds),
        ("DP kernel equals enumeration and is fast", dp_equivalence),
        ("desk-scale model 1 comparison", desk_scale),
        ("finite KeRF approaches infinite KeRF", finite_to_infinite),
        ("risk decreases with n", rate_trend),
        ("CLI determinism across thread counts", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("criterion {:>2}: {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
