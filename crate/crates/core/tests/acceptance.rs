//! Acceptance checks 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use gainid::analysis::{permutation_test, svd_gains, GainMatrix, GainUnit, StatisticKind};
use gainid::features::{group_distributions, normalize_with, CarId, Control, Region, Site};
use gainid::gp::{
    fit, log_marginal_likelihood, optimize_hyperparams, Bounds, Dataset, Hyperparams, KernelSpec, PROBE_STEPS,
};
use gainid::nominal::{solve_nominal, standard_left_turn, straight_problem, ScvxOptions, UnicycleState, LANE_WIDTH, POCKET};
use gainid::pipeline::{
    cmd_analyze, cmd_fit, cmd_ingest, cmd_simulate, featurize, fit_distribution, AnalysisReport, DistributionFit,
    RunConfig,
};
use gainid::seed::{derive_seed, rng_from_seed};
use gainid::synthetic::{CorpusConfig, REFERENCE_GAIN};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const CORPUS_SEED: u64 = 1;
const ETAS: [f64; 3] = [0.0, 4.0, 8.0];
const LEADS: [CarId; 2] = [CarId::A, CarId::B];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Simulates, ingests, fits and analyzes one corpus into `root/run`.
fn end_to_end(root: &std::path::Path, cfg: &RunConfig) -> AnalysisReport {
    let sim = root.join("sim");
    cmd_simulate(&simulate_config(CorpusConfig::default()), CORPUS_SEED, &sim).unwrap();
    let run = root.join("run");
    cmd_ingest(&[sim.join("trials.csv")], cfg, &run).unwrap();
    cmd_fit(&run, cfg).unwrap();
    cmd_analyze(&run, cfg).unwrap()
}

fn criterion_1(report: &AnalysisReport, seconds: f64) -> Outcome {
    let mut pass = seconds <= 120.0;
    let mut detail = format!("runtime {seconds:.1} s");
    for lead in LEADS {
        let Some(entry) = report.gain(Site::Isr, lead, Region::Intersection) else {
            return outcome(false, format!("no intersection gain for lead {lead}"));
        };
        let est = entry.raw.entries;
        let err = rel_frobenius(&REFERENCE_GAIN, &est);
        let mut signs = 0;
        let mut significant = 0;
        for r in 0..2 {
            for c in 0..4 {
                let g = REFERENCE_GAIN[r][c];
                if g.abs() >= 0.05 {
                    significant += 1;
                    signs += usize::from(g * est[r][c] > 0.0);
                }
            }
        }
        pass &= err <= 0.10 && signs == significant;
        detail += &format!("; lead {lead}: rel. Frobenius {err:.4}, signs {signs}/{significant}");
    }
    outcome(pass, detail)
}

/// Intersection acceleration fits of one corpus, with kernel comparison and
/// cross-validation enabled.
fn eta_fits(eta: f64, cfg: &RunConfig) -> (BTreeMap<CarId, DistributionFit>, BTreeMap<CarId, Dataset>) {
    let library = gainid::pipeline::corpus_library(&corpus_with_eta(eta), ScvxOptions::default()).unwrap();
    let corpus = gainid::synthetic::generate_corpus(&corpus_with_eta(eta), CORPUS_SEED, &library).unwrap();
    let (features, _) = featurize(&corpus.trials, cfg).unwrap();
    let datasets = group_distributions(&features).unwrap();
    let mut fit_cfg = cfg.fit.clone();
    fit_cfg.compare_max_samples = 300;
    fit_cfg.cross_validate = eta == 0.0;
    let mut fits = BTreeMap::new();
    let mut data = BTreeMap::new();
    for lead in LEADS {
        let key = intersection_key(lead, Control::Accel);
        let ds = &datasets[&key];
        let seed = derive_seed(cfg.seed, &key.label());
        fits.insert(lead, fit_distribution(key, ds, &fit_cfg, cfg.features.normalization, seed).unwrap());
        data.insert(lead, normalize_with(ds, cfg.features.normalization).0);
    }
    (fits, data)
}

fn criterion_2(fits: &[BTreeMap<CarId, DistributionFit>]) -> Outcome {
    let floor = Bounds::default().beta.lo;
    let mut pass = true;
    let mut detail = String::new();
    for lead in LEADS {
        let betas: Vec<f64> = fits.iter().map(|f| f[&lead].theta.beta).collect();
        let pinned = (betas[0] - floor).abs() <= 1e-9 * floor;
        let increasing = betas.windows(2).all(|w| w[1] > w[0]);
        pass &= pinned && increasing;
        detail += &format!(
            "lead {lead}: beta at eta {:?} = [{:.4}, {:.4}, {:.4}]; ",
            ETAS, betas[0], betas[1], betas[2]
        );
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn criterion_3(null: &BTreeMap<CarId, DistributionFit>, large: &BTreeMap<CarId, DistributionFit>) -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    for lead in LEADS {
        let c0 = null[&lead].comparison.as_ref().unwrap();
        let c2 = large[&lead].comparison.as_ref().unwrap();
        pass &= c2.combined.mse <= c2.linear.mse && c0.combined.mse <= 1.1 * c0.linear.mse;
        detail += &format!(
            "lead {lead}: eta large combined {:.3e} vs linear {:.3e}, eta 0 combined {:.3e} vs linear {:.3e}; ",
            c2.combined.mse, c2.linear.mse, c0.combined.mse, c0.linear.mse
        );
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn random_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn se(x: &[f64], y: &[f64], l: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    (-d2 / (2.0 * l * l)).exp()
}

fn criterion_4() -> Outcome {
    let mut interp = 0.0_f64;
    let mut decomp = 0.0_f64;
    let mut reduction = 0.0_f64;
    for seed in 0..20 {
        let rows = random_rows(25, seed);
        let mut rng = rng_from_seed(1000 + seed);
        let y: Vec<f64> = (0..rows.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = Dataset::from_rows(&rows, &y).unwrap();
        let theta = Hyperparams::new(0.7, 0.6, 0.0).unwrap();
        let m = fit(&ds, KernelSpec::Combined, &theta).unwrap();
        assert_eq!(m.jitter(), 0.0, "well-conditioned design needs no jitter");
        for (x, yi) in rows.iter().zip(&y) {
            interp = interp.max((m.predict_mean(x) - yi).abs());
        }
        // Gain plus SE correction, recomputed from alpha and the rows.
        let alpha = m.alpha();
        let g: Vec<f64> = (0..4).map(|j| rows.iter().zip(alpha.iter()).map(|(r, a)| a * r[j]).sum()).collect();
        for x in random_rows(10, 2000 + seed) {
            let lin: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            let nl: f64 = rows.iter().zip(alpha.iter()).map(|(r, a)| a * se(r, &x, 0.6)).sum();
            let oracle = lin + 0.7 * nl;
            decomp = decomp.max((m.predict_mean(&x) - oracle).abs()).max((m.predict_decomposed(&x) - oracle).abs());
        }
        let noisy = Hyperparams::new(0.0, 0.6, 0.05).unwrap();
        let a = fit(&ds, KernelSpec::Combined, &noisy).unwrap();
        let b = fit(&ds, KernelSpec::Linear, &noisy).unwrap();
        for x in random_rows(10, 3000 + seed) {
            reduction = reduction.max((a.predict_mean(&x) - b.predict_mean(&x)).abs());
        }
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let theta = Hyperparams::new(0.0, 1.0, 0.0).unwrap();
    let one = |y: f64| {
        let ds = Dataset::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]], &[y]).unwrap();
        log_marginal_likelihood(&ds, KernelSpec::Linear, &theta).unwrap()
    };
    let lml = [(one(1.0), -0.5 - half_ln_2pi), (one(0.0), -half_ln_2pi), (one(2.0), -2.0 - half_ln_2pi)]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pass = interp <= 1e-8 && decomp <= 1e-10 && lml <= 1e-12 && reduction <= 1e-10;
    outcome(
        pass,
        format!(
            "interpolation {interp:.1e}, decomposition {decomp:.1e}, N=1 log-marginal {lml:.1e}, beta=0 vs linear {reduction:.1e}"
        ),
    )
}

/// Largest gain in log-marginal over coordinate probes around `theta`.
fn probe_gain(ds: &Dataset, theta: &Hyperparams, bounds: &Bounds) -> f64 {
    let l0 = log_marginal_likelihood(ds, KernelSpec::Combined, theta).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for coord in 0..3 {
        for step in PROBE_STEPS {
            for dir in [-1.0, 1.0] {
                let mut p = *theta;
                let (v, iv) = match coord {
                    0 => (&mut p.beta, bounds.beta),
                    1 => (&mut p.lengthscale, bounds.lengthscale),
                    _ => (&mut p.noise_var, bounds.noise_var),
                };
                let moved = *v * (dir * step).exp();
                if moved < iv.lo || moved > iv.hi {
                    continue;
                }
                *v = moved;
                let l = log_marginal_likelihood(ds, KernelSpec::Combined, &p).unwrap();
                worst = worst.max(l - l0);
            }
        }
    }
    worst
}

fn criterion_5(corpus_sets: &[Dataset]) -> Outcome {
    let bounds = Bounds::default();
    let mut sets: Vec<(String, Dataset)> = Vec::new();
    let rows = random_rows(80, 7);
    let mut rng = rng_from_seed(8);
    let y: Vec<f64> = rows
        .iter()
        .map(|r| 0.5 * r[0] - 0.3 * r[2] + 0.05 * { let n: f64 = StandardNormal.sample(&mut rng); n })
        .collect::<Vec<f64>>();
    sets.push(("linear".into(), Dataset::from_rows(&rows, &y).unwrap()));
    let grid: Vec<Vec<f64>> = (0..40).map(|i| vec![-1.0 + 2.0 * i as f64 / 39.0, 0.0, 0.0, 0.0]).collect();
    let y: Vec<f64> = grid.iter().map(|r| (4.0 * r[0]).sin()).collect();
    sets.push(("sinusoid".into(), Dataset::from_rows(&grid, &y).unwrap()));
    for (i, ds) in corpus_sets.iter().enumerate() {
        let idx: Vec<usize> = (0..ds.len().min(150)).collect();
        sets.push((format!("corpus{i}"), ds.select(&idx).unwrap()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for (name, ds) in &sets {
        let opt = optimize_hyperparams(ds, KernelSpec::Combined, &bounds, 8, 11).unwrap();
        let g = probe_gain(ds, &opt.theta, &bounds);
        worst = worst.max(g);
        detail.push(format!("{name} {g:.1e}"));
    }
    outcome(worst <= 1e-6, format!("largest probe increase {worst:.2e} ({})", detail.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut recon = 0.0_f64;
    let mut ortho = 0.0_f64;
    let mut action = 0.0_f64;
    let mut oracle = 0.0_f64;
    let mut scaling = 0.0_f64;
    let mut ordered = true;
    for _ in 0..1000 {
        let mag = 10f64.powf(rng.random_range(-3.0..1.0));
        let e: [[f64; 4]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| mag * rng.random_range(-1.0..1.0)));
        let d = svd_gains(&GainMatrix::new(e, GainUnit::Raw).unwrap());
        let tol = mag;
        ordered &= d.sigma[0] >= d.sigma[1] && d.sigma[1] >= 0.0;
        for r in 0..2 {
            for c in 0..4 {
                let v: f64 = (0..2).map(|j| d.u[r][j] * d.sigma[j] * d.v_rows[j][c]).sum();
                recon = recon.max((v - e[r][c]).abs() / tol);
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let id = f64::from(u8::from(i == j));
                let uu: f64 = (0..2).map(|k| d.u[k][i] * d.u[k][j]).sum();
                let vv: f64 = (0..4).map(|k| d.v_rows[i][k] * d.v_rows[j][k]).sum();
                ortho = ortho.max((uu - id).abs()).max((vv - id).abs());
            }
        }
        for j in 0..2 {
            for r in 0..2 {
                let gv: f64 = (0..4).map(|k| e[r][k] * d.v_rows[j][k]).sum();
                action = action.max((gv - d.sigma[j] * d.u[r][j]).abs() / tol);
            }
        }
        // Singular values are the square roots of the eigenvalues of G Gᵀ.
        let dot = |a: &[f64; 4], b: &[f64; 4]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let (p, q, s) = (dot(&e[0], &e[0]), dot(&e[1], &e[1]), dot(&e[0], &e[1]));
        let mean = 0.5 * (p + q);
        let rad = (0.25 * (p - q).powi(2) + s * s).sqrt();
        let eig = [(mean + rad).sqrt(), (mean - rad).max(0.0).sqrt()];
        for j in 0..2 {
            oracle = oracle.max((d.sigma[j] - eig[j]).abs() / tol);
        }
        let c = 10f64.powf(rng.random_range(-2.0..2.0));
        let ds = svd_gains(&GainMatrix::new(e, GainUnit::Raw).unwrap().scaled(c).unwrap());
        for j in 0..2 {
            scaling = scaling.max((ds.sigma[j] - c * d.sigma[j]).abs() / (c * tol));
        }
        // Directions are unique when the singular values are separated.
        if d.sigma[0] - d.sigma[1] > 1e-3 * tol && d.sigma[1] > 1e-3 * tol {
            for j in 0..2 {
                for k in 0..4 {
                    scaling = scaling.max((ds.v_rows[j][k] - d.v_rows[j][k]).abs());
                }
                for r in 0..2 {
                    scaling = scaling.max((ds.u[r][j] - d.u[r][j]).abs());
                }
            }
        }
    }
    let pass = ordered && recon <= 1e-10 && ortho <= 1e-10 && action <= 1e-10 && oracle <= 1e-10 && scaling <= 1e-10;
    outcome(
        pass,
        format!(
            "1000 matrices: reconstruction {recon:.1e}, orthogonality {ortho:.1e}, G V = sigma U {action:.1e}, eigen oracle {oracle:.1e}, scaling {scaling:.1e}, ordered {ordered}"
        ),
    )
}

fn normal_group(rng: &mut impl Rng, n: usize, mean: f64) -> Vec<f64> {
    (0..n).map(|_| { let n: f64 = StandardNormal.sample(rng); mean + n }).collect::<Vec<f64>>()
}

fn criterion_7() -> Outcome {
    let reps = 200;
    let mut rejected = 0;
    for rep in 0..reps {
        let mut rng = rng_from_seed(derive_seed(70, &format!("null/{rep}")));
        let a = normal_group(&mut rng, 15, 0.0);
        let b = normal_group(&mut rng, 15, 0.0);
        let r = permutation_test(&a, &b, StatisticKind::MeanDiff, 500, rep).unwrap();
        rejected += usize::from(r.p_value < 0.05);
    }
    let null_rate = rejected as f64 / reps as f64;
    // With within-group SD 1, a shift of 2/sqrt(3) is one SD of the pooled sample.
    let shift = 2.0 / 3f64.sqrt();
    let mut detected = 0;
    for rep in 0..reps {
        let mut rng = rng_from_seed(derive_seed(71, &format!("shift/{rep}")));
        let a = normal_group(&mut rng, 15, 0.0);
        let b = normal_group(&mut rng, 15, shift);
        let r = permutation_test(&a, &b, StatisticKind::MeanDiff, 1000, rep).unwrap();
        detected += usize::from(r.p_value <= 0.05);
    }
    let power = detected as f64 / reps as f64;
    // Shown for reference only: a shift of one within-group SD.
    let mut within = 0;
    for rep in 0..reps {
        let mut rng = rng_from_seed(derive_seed(72, &format!("within/{rep}")));
        let a = normal_group(&mut rng, 15, 0.0);
        let b = normal_group(&mut rng, 15, 1.0);
        within += usize::from(permutation_test(&a, &b, StatisticKind::MeanDiff, 1000, rep).unwrap().p_value <= 0.05);
    }
    let pass = (0.02..=0.09).contains(&null_rate) && power >= 0.80;
    outcome(
        pass,
        format!(
            "null rejection rate {null_rate:.3}, power at shift {shift:.3} within-group SD (one pooled SD) {power:.3}; at one within-group SD {:.3} (not graded)",
            within as f64 / reps as f64
        ),
    )
}

/// Position after `dt` under held `u`, by 2000 small RK4 substeps.
fn fine_step(s: &UnicycleState, u: [f64; 2], dt: f64) -> [f64; 2] {
    let f = |x: [f64; 4]| [x[3] * x[2].sin(), x[3] * x[2].cos(), u[1], u[0]];
    let mut x = [s.pos[0], s.pos[1], s.heading, s.speed];
    let n = 2000;
    let h = dt / n as f64;
    let add = |a: [f64; 4], k: [f64; 4], c: f64| std::array::from_fn::<f64, 4, _>(|i| a[i] + c * k[i]);
    for _ in 0..n {
        let k1 = f(x);
        let k2 = f(add(x, k1, h / 2.0));
        let k3 = f(add(x, k2, h / 2.0));
        let k4 = f(add(x, k3, h));
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    [x[0], x[1]]
}

fn in_left_turn_corridor(p: [f64; 2], tol: f64) -> bool {
    let within = |v: f64, lo: f64, hi: f64| v >= lo - tol && v <= hi + tol;
    let w = LANE_WIDTH;
    within(p[0], 0.0, w) || within(p[1], 0.0, w) || (within(p[0], -POCKET, w) && within(p[1], -POCKET, w))
}

fn criterion_8() -> Outcome {
    let problem = standard_left_turn(5.0).unwrap();
    let sol = solve_nominal(&problem, &ScvxOptions::default()).unwrap();
    let traj = &sol.trajectory;
    let residual = traj
        .states
        .windows(2)
        .zip(&traj.controls)
        .map(|(w, u)| {
            let p = fine_step(&w[0], *u, traj.dt);
            (p[0] - w[1].pos[0]).hypot(p[1] - w[1].pos[1])
        })
        .fold(0.0, f64::max);
    let outside = traj.states.iter().filter(|s| !in_left_turn_corridor(s.pos, 1e-6)).count();
    let straight = solve_nominal(&straight_problem(5.0).unwrap(), &ScvxOptions::default()).unwrap();
    let omega = straight.trajectory.controls.iter().map(|u| u[1].abs()).fold(0.0, f64::max);
    let pass = sol.converged && sol.iterations <= 30 && residual <= 1e-3 && outside == 0 && straight.converged && omega <= 1e-4;
    outcome(
        pass,
        format!(
            "left turn converged {} in {} iterations, residual {residual:.1e} m, {outside} nodes outside corridor; straight max |omega| {omega:.1e}",
            sol.converged, sol.iterations
        ),
    )
}

fn criterion_9(fits: &BTreeMap<CarId, DistributionFit>) -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    for lead in LEADS {
        let cv = fits[&lead].cv.as_ref().unwrap();
        let spread = cv.max - cv.min;
        pass &= cv.per_fold_mse.len() == 5 && spread <= 5.0 * cv.avg;
        detail += &format!("lead {lead}: spread {spread:.3e} vs mean {:.3e}; ", cv.avg);
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn criterion_10(first: &std::path::Path, second: &std::path::Path) -> Outcome {
    let a = files_below(first);
    let b = files_below(second);
    if a != b {
        return outcome(false, format!("file sets differ: {a:?} vs {b:?}"));
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|f| std::fs::read(first.join(f)).unwrap() != std::fs::read(second.join(f)).unwrap())
        .map(|f| f.display().to_string())
        .collect();
    outcome(differing.is_empty(), format!("{} files compared, differing: {differing:?}", a.len()))
}

fn run(n: u8, f: impl FnOnce() -> Outcome) -> bool {
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    println!("criterion {n:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

fn main() {
    let cfg = synthetic_config();
    let dir = tempfile::tempdir().unwrap();
    let (one, two) = (dir.path().join("first"), dir.path().join("second"));
    let mut results = Vec::new();

    let start = Instant::now();
    let report = catch_unwind(AssertUnwindSafe(|| end_to_end(&one, &cfg))).ok();
    let seconds = start.elapsed().as_secs_f64();
    results.push(run(1, || criterion_1(report.as_ref().expect("end-to-end run failed"), seconds)));

    let eta: Vec<_> = ETAS.iter().map(|&e| catch_unwind(AssertUnwindSafe(|| eta_fits(e, &cfg))).ok()).collect();
    let fits: Option<Vec<_>> = eta.iter().map(|e| e.as_ref().map(|(f, _)| f.clone())).collect();
    results.push(run(2, || criterion_2(fits.as_ref().expect("corpus fits failed"))));
    results.push(run(3, || {
        let f = fits.as_ref().expect("corpus fits failed");
        criterion_3(&f[0], &f[2])
    }));
    results.push(run(4, criterion_4));
    results.push(run(5, || {
        let sets: Vec<Dataset> =
            eta.iter().flatten().flat_map(|(_, d)| d.values().cloned()).collect();
        criterion_5(&sets)
    }));
    results.push(run(6, criterion_6));
    results.push(run(7, criterion_7));
    results.push(run(8, criterion_8));
    results.push(run(9, || criterion_9(&fits.as_ref().expect("corpus fits failed")[0])));
    results.push(run(10, || {
        end_to_end(&two, &cfg);
        criterion_10(&one, &two)
    }));

    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
