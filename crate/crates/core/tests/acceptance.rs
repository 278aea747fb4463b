//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use mcmarg::baselines::{em_fit, grid_kl_2d, holdout_loglik, model_marginal_kl, sliced_kl_eval, sliced_kl_models, Box2D};
use mcmarg::gmm::marginal_density_on_grid;
use mcmarg::mcmarg::{
    direction_grids, draw_directions, fit_gmm, fit_samples, grad_wrt_model, grad_wrt_samples, kl_1d, loss_on_grids,
    Objective,
};
use mcmarg::projection::project;
use mcmarg::rng::{purpose, substream};
use mcmarg::{
    gmm_density, marginalize, sample_gmm, FitConfig, FitReport, GmmModel, GridSpec, Marginal1DGmm, SampleBatch, UnitVector,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient oracle", gradient_oracle),
        ("mixture recovery", mixture_recovery),
        ("EM parity", em_parity),
        ("marginalization exactness", marginalization_exactness),
        ("random directions separate equal axis marginals", axis_counterexample),
        ("closed-form KL", closed_form_kl),
        ("sample-update direction", sample_update),
        ("determinism across thread counts", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}; {secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}; {secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut entries = 0;
    for seed in 0..20u64 {
        let mut rng = common::rng(5000 + seed);
        let dim = rng.random_range(1..=4);
        let components = rng.random_range(1..=3);
        let model = common::random_model(&mut rng, dim, components);
        let source = common::random_model(&mut rng, dim, 2);
        let samples = sample_gmm(&source, 50, &mut rng).unwrap();
        let directions = draw_directions(&mut rng, 4, dim).unwrap();
        let objective = Objective::for_samples(&FitConfig::default(), &samples).unwrap();
        let grids = direction_grids(&samples, &model, &directions, &objective).unwrap();

        let model_loss = |p: &[f64]| {
            let mut m = model.clone();
            m.set_params(p).unwrap();
            loss_on_grids(&samples, &m, &directions, &grids, &objective).unwrap()
        };
        let sample_loss = |d: &[f64]| {
            let s = SampleBatch::new(d.to_vec(), 50, dim).unwrap();
            loss_on_grids(&s, &model, &directions, &grids, &objective).unwrap()
        };
        let pairs = [
            (
                grad_wrt_model(&samples, &model, &directions, &objective).unwrap().to_flat(),
                model.to_params(),
                &model_loss as &dyn Fn(&[f64]) -> f64,
            ),
            (
                grad_wrt_samples(&samples, &model, &directions, &objective).unwrap(),
                samples.as_slice().to_vec(),
                &sample_loss as &dyn Fn(&[f64]) -> f64,
            ),
        ];
        for (analytic, x, f) in pairs {
            for (i, a) in analytic.iter().enumerate() {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[i] += h;
                minus[i] -= h;
                let b = (f(&plus) - f(&minus)) / (2.0 * h);
                let excess = (a - b).abs() / (1e-6 + 1e-4 * b.abs());
                worst = worst.max(excess);
                entries += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1.0 && secs < 60.0,
        format!("{entries} entries, worst error {worst:.1e} of tolerance, {secs:.1} s < 60 s"),
    )
}

struct Benchmark {
    truth: GmmModel,
    train: SampleBatch,
    test: SampleBatch,
}

fn benchmark() -> Benchmark {
    let truth = common::benchmark_truth();
    assert!(common::min_separation(&truth) >= 3.0);
    let train = common::draw(&truth, 10_000, 100);
    let test = common::draw(&truth, 10_000, 101);
    Benchmark { truth, train, test }
}

fn recovery_config() -> FitConfig {
    FitConfig { components: 3, steps: 3000, vectors_per_step: 16, ..FitConfig::default() }
}

fn density(model: &GmmModel) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |z| gmm_density(model, z).unwrap()
}

/// The recovery fit is shared by the recovery and EM-parity checks.
fn recovered() -> &'static (Benchmark, Result<FitReport, String>) {
    static FIT: OnceLock<(Benchmark, Result<FitReport, String>)> = OnceLock::new();
    FIT.get_or_init(|| {
        let b = benchmark();
        let report = fit_gmm(&b.train, &recovery_config()).map_err(|e| e.to_string());
        (b, report)
    })
}

fn mixture_recovery() -> Outcome {
    let (b, report) = recovered();
    let report = report.as_ref()?;
    let bounds = Box2D::around_model(&b.truth, 6.0).unwrap().union(&Box2D::around_model(&report.model, 6.0).unwrap());
    let grid_kl = grid_kl_2d(density(&b.truth), density(&report.model), &bounds, 400).unwrap();
    let (sliced, stderr) = sliced_kl_eval(&b.train, &report.model, 64, 0.1, 0).unwrap();
    let traj = &report.loss_trajectory;
    let lead = traj[..100].iter().sum::<f64>() / 100.0;
    let trail = traj[traj.len() - 100..].iter().sum::<f64>() / 100.0;
    check(
        grid_kl < 0.05 && sliced < 0.02 && report.wall_time < 300.0 && trail < lead,
        format!(
            "separation {:.1} sd, grid KL {grid_kl:.4} < 0.05, sliced KL {sliced:.4} ± {stderr:.4} < 0.02, \
             loss {lead:.3} -> {trail:.3}, fit {:.1} s < 300 s",
            common::min_separation(&b.truth),
            report.wall_time
        ),
    )
}

fn em_parity() -> Outcome {
    let (b, report) = recovered();
    let fitted = &report.as_ref()?.model;
    let config = recovery_config();
    let (em, trace) = em_fit(&b.train, 3, 200, &mut substream(config.seed, purpose::EM, 0, 0)).unwrap();
    let ll_mc = holdout_loglik(fitted, &b.test).unwrap();
    let ll_em = holdout_loglik(&em, &b.test).unwrap();
    let worst_drop = trace.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let gap = (ll_em - ll_mc).abs();
    check(
        gap < 0.05 && worst_drop <= 1e-9,
        format!("holdout loglik EM {ll_em:.4}, fit {ll_mc:.4}, gap {gap:.4} < 0.05, largest EM decrease {worst_drop:.2e}"),
    )
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn bin_average(marginal: &Marginal1DGmm, lo: f64, hi: f64) -> f64 {
    let mass: f64 = marginal
        .weights()
        .iter()
        .zip(marginal.means())
        .zip(marginal.variances())
        .map(|((w, m), v)| {
            let s = v.sqrt();
            w * (normal_cdf((hi - m) / s) - normal_cdf((lo - m) / s))
        })
        .sum();
    mass / (hi - lo)
}

/// Mixture with covariances `B Bᵀ + I/2`, so every projected standard
/// deviation is at least `1/√2`.
fn moderate_model<R: Rng>(rng: &mut R) -> GmmModel {
    let dim = rng.random_range(2..=4);
    let k = rng.random_range(1..=4);
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let means: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut covs = Vec::with_capacity(k * dim * dim);
    for _ in 0..k {
        let b: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-0.7..0.7)).collect();
        for i in 0..dim {
            for j in 0..dim {
                let mut c: f64 = (0..dim).map(|l| b[i * dim + l] * b[j * dim + l]).sum();
                if i == j {
                    c += 0.5;
                }
                covs.push(c);
            }
        }
    }
    GmmModel::from_moments(&weights, &means, &covs).unwrap()
}

fn marginalization_exactness() -> Outcome {
    const DRAWS: usize = 1_000_000;
    const WIDTH: f64 = 0.25;
    let mut worst = 0.0f64;
    for i in 0..10u64 {
        let mut rng = common::rng(7000 + i);
        let model = moderate_model(&mut rng);
        let u = mcmarg::projection::sample_unit_vector(&mut rng, model.dim()).unwrap();
        let samples = sample_gmm(&model, DRAWS, &mut rng).unwrap();
        let s = project(&samples, &u).unwrap();
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bins = ((hi - lo) / WIDTH).ceil() as usize + 1;
        let mut counts = vec![0usize; bins];
        for x in &s {
            counts[((x - lo) / WIDTH) as usize] += 1;
        }
        let marginal = marginalize(&model, &u).unwrap();
        for (b, c) in counts.iter().enumerate() {
            let a = lo + b as f64 * WIDTH;
            let empirical = *c as f64 / (DRAWS as f64 * WIDTH);
            worst = worst.max((empirical - bin_average(&marginal, a, a + WIDTH)).abs());
        }
    }
    check(worst < 0.01, format!("10 models, max density error {worst:.4} < 0.01"))
}

fn axis_counterexample() -> Outcome {
    let (a, var) = (2.0, 0.09);
    let covs = [var, 0.0, 0.0, var, var, 0.0, 0.0, var];
    let diagonal = GmmModel::from_moments(&[0.5, 0.5], &[a, a, -a, -a], &covs).unwrap();
    let anti = GmmModel::from_moments(&[0.5, 0.5], &[a, -a, -a, a], &covs).unwrap();
    let axis_kl: Vec<f64> = (0..2)
        .map(|i| model_marginal_kl(&diagonal, &anti, &UnitVector::axis(2, i).unwrap(), 1024).unwrap())
        .collect();
    let (sliced, stderr) = sliced_kl_models(&diagonal, &anti, 64, 0, 1024).unwrap();
    check(
        axis_kl.iter().all(|&k| k < 1e-3) && sliced > 0.01,
        format!("axis KL {:.2e}, {:.2e} < 1e-3; sliced KL {sliced:.3} ± {stderr:.3} > 0.01", axis_kl[0], axis_kl[1]),
    )
}

fn closed_form_kl() -> Outcome {
    let grid = GridSpec::new(-8.0, 9.0, 2048).unwrap();
    let normal = |m: f64, v: f64| {
        marginal_density_on_grid(&Marginal1DGmm::new(vec![1.0], vec![m], vec![v]).unwrap(), &grid).unwrap()
    };
    let shift = kl_1d(&normal(0.0, 1.0), &normal(1.0, 1.0)).unwrap();
    let scale = kl_1d(&normal(0.0, 1.0), &normal(0.0, 4.0)).unwrap();
    let expected = 2f64.ln() + 0.125 - 0.5;
    check(
        (shift - 0.5).abs() <= 0.01 && (scale - 0.3181).abs() <= 0.01 && (expected - 0.3181).abs() < 1e-4,
        format!("KL shift {shift:.4} vs 0.5, KL scale {scale:.4} vs 0.3181"),
    )
}

fn sample_update() -> Outcome {
    let model = common::standard_normal(2);
    let config = FitConfig { steps: 1000, ..FitConfig::default() };
    let mut initial = None;
    let (last, _) = mcmarg::mcmarg::fit_samples_with(&model, 2000, &config, |step, s| {
        if step == 0 {
            initial = Some(s.clone());
        }
    })
    .map_err(|e| e.to_string())?;
    let before = holdout_loglik(&model, &initial.unwrap()).unwrap();
    let after = holdout_loglik(&model, &last).unwrap();
    let (sliced, stderr) = sliced_kl_eval(&last, &model, 64, 0.1, 0).unwrap();
    check(
        after - before > 1.0 && sliced < 0.05,
        format!("loglik {before:.3} -> {after:.3} (gain > 1), sliced KL {sliced:.4} ± {stderr:.4} < 0.05"),
    )
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mcmarg"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("mcmarg {} exited with {status}", args.join(" ")))
    }
}

fn cli_outputs(dir: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let t = threads.to_string();
    run_cli(&["--threads", &t, "synth", "--target", "two_moons", "--n", "2000", "--seed", "3", "--out", &p("s.csv")])?;
    run_cli(&[
        "--threads", &t, "fit", "--samples", &p("s.csv"), "--k", "4", "--steps", "150", "--seed", "3", "--out",
        &p("m.json"), "--trace", &p("fit.csv"),
    ])?;
    run_cli(&[
        "--threads", &t, "em", "--samples", &p("s.csv"), "--k", "4", "--iters", "30", "--seed", "3", "--out",
        &p("em.json"), "--trace", &p("em.csv"),
    ])?;
    run_cli(&["--threads", &t, "sample", "--model", &p("m.json"), "--n", "500", "--seed", "3", "--out", &p("draw.csv")])?;
    run_cli(&[
        "--threads", &t, "eval", "--samples", &p("s.csv"), "--model", &p("m.json"), "--seed", "3", "--out",
        &p("report.json"),
    ])?;
    run_cli(&[
        "--threads", &t, "fit-samples", "--model", &p("m.json"), "--n", "300", "--steps", "50", "--seed", "3",
        "--out", &p("moved.csv"), "--snapshots", &p("snaps"), "--trace", &p("moved_trace.csv"),
    ])?;
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let samples = common::draw(&common::benchmark_truth(), 3000, 200);
    let config = FitConfig { steps: 200, seed: 11, ..FitConfig::default() };
    let fits: Vec<_> = [1, 8].iter().map(|&t| with_threads(t, || fit_gmm(&samples, &config).unwrap())).collect();
    let fits_equal = fits[0].loss_trajectory.iter().map(|v| v.to_bits()).eq(fits[1].loss_trajectory.iter().map(|v| v.to_bits()))
        && fits[0].model == fits[1].model;
    let moved: Vec<_> = [1, 8]
        .iter()
        .map(|&t| with_threads(t, || fit_samples(&common::benchmark_truth(), 500, &config).unwrap()))
        .collect();
    let moved_equal = moved[0].0 == moved[1].0
        && moved[0].1.iter().map(|v| v.to_bits()).eq(moved[1].1.iter().map(|v| v.to_bits()));

    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for t in [1, 8] {
        let dir = root.path().join(format!("threads_{t}"));
        std::fs::create_dir(&dir).map_err(|e| e.to_string())?;
        outputs.push(cli_outputs(&dir, t)?);
    }
    let files_equal = outputs[0] == outputs[1];
    check(
        fits_equal && moved_equal && files_equal,
        format!(
            "fit trajectories equal: {fits_equal}, sample-fit trajectories equal: {moved_equal}, \
             {} CLI output files identical: {files_equal}",
            outputs[0].len()
        ),
    )
}
