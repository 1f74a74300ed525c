use gainid::analysis::{permutation_test, svd_gains, GainMatrix, GainUnit, StatisticKind};
use gainid::features::{
    determine_lead, normalize_with, read_trials, segment_regions, wrap_angle, write_trials, CarId, DyadTrial, Frame,
    NormalizationMode, Region, RegionRadii, Site,
};
use gainid::gp::{
    denormalize_gain, fit, gram_matrix, log_marginal_likelihood, optimize_hyperparams, Bounds, Dataset, Hyperparams,
    KernelSpec,
};
use gainid::pipeline::round_sig;
use gainid::synthetic::{nonlinear_term, NONLINEAR_SCALE, Z_FLOOR};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn rows(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), n)
}

fn spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![Just(KernelSpec::Linear), Just(KernelSpec::SquaredExp), Just(KernelSpec::Combined)]
}

fn theta() -> impl Strategy<Value = Hyperparams> {
    (1e-2..1e2f64, 1e-2..10.0f64, 1e-4..1.0f64).prop_map(|(b, l, s)| Hyperparams::new(b, l, s).unwrap())
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn gain_matrix() -> impl Strategy<Value = [[f64; 4]; 2]> {
    prop::array::uniform2(prop::array::uniform4(-10.0..10.0f64))
}

/// Straight pass along a line at `offset` from the origin with bearing
/// `heading`, sampled every `dt` seconds starting at `t0`.
fn pass(heading: f64, offset: f64, t0: f64, dt: f64, speed: f64) -> Vec<Frame> {
    let dir = [heading.sin(), heading.cos()];
    let normal = [dir[1], -dir[0]];
    let n = (80.0 / (speed * dt)) as usize;
    (0..=n)
        .map(|k| {
            let s = -40.0 + speed * dt * k as f64;
            Frame {
                t: t0 + dt * k as f64,
                pos: [offset * normal[0] + s * dir[0], offset * normal[1] + s * dir[1]],
                heading: wrap_angle(heading),
                speed,
                accel: None,
                ang_vel: None,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_and_psd(x in rows(1..=20), spec in spec(), theta in theta()) {
        let k = gram_matrix(spec, &theta, &matrix(&x)).unwrap();
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        let eig = SymmetricEigen::new(k.clone());
        let scale = k.diagonal().max().max(1.0);
        prop_assert!(eig.eigenvalues.min() >= -1e-10 * scale, "min eigenvalue {}", eig.eigenvalues.min());
    }

    #[test]
    fn log_marginal_matches_dense_inverse(
        x in rows(2..=50),
        ys in prop::collection::vec(-2.0..2.0f64, 50),
        spec in spec(),
        theta in theta(),
    ) {
        let y = DVector::from_column_slice(&ys[..x.len()]);
        let ds = Dataset::new(matrix(&x), y.clone()).unwrap();
        let l = log_marginal_likelihood(&ds, spec, &theta).unwrap();
        let mut k = gram_matrix(spec, &theta, ds.inputs()).unwrap();
        for i in 0..x.len() {
            k[(i, i)] += theta.noise_var;
        }
        let inv = k.clone().try_inverse().unwrap();
        let det = k.lu().determinant();
        let n = x.len() as f64;
        let oracle = -0.5 * (y.transpose() * inv * &y)[0] - 0.5 * det.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        prop_assert!((l - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "{l} vs {oracle}");
    }

    #[test]
    fn noiseless_fit_interpolates(x in rows(2..=15), ys in prop::collection::vec(-2.0..2.0f64, 15)) {
        // Inputs closer than 0.05 make the Gram too ill-conditioned to interpolate.
        for i in 0..x.len() {
            for j in 0..i {
                let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
                prop_assume!(d.sqrt() > 0.05);
            }
        }
        let ds = Dataset::from_rows(&x, &ys[..x.len()]).unwrap();
        let m = fit(&ds, KernelSpec::Combined, &Hyperparams::new(1.0, 0.3, 0.0).unwrap()).unwrap();
        prop_assume!(m.jitter() == 0.0);
        for (xi, yi) in x.iter().zip(&ys) {
            prop_assert!((m.predict_mean(xi) - yi).abs() <= 1e-8);
        }
    }

    #[test]
    fn prediction_splits_into_gain_and_correction(
        x in rows(2..=20),
        ys in prop::collection::vec(-2.0..2.0f64, 20),
        probe in prop::collection::vec(-1.0..1.0f64, 4),
        theta in theta(),
    ) {
        let ds = Dataset::from_rows(&x, &ys[..x.len()]).unwrap();
        let m = fit(&ds, KernelSpec::Combined, &theta).unwrap();
        let lin: f64 = m.gain().iter().zip(&probe).map(|(g, z)| g * z).sum();
        let correction: f64 = x
            .iter()
            .zip(m.alpha().iter())
            .map(|(r, a)| {
                let d2: f64 = r.iter().zip(&probe).map(|(u, v)| (u - v).powi(2)).sum();
                a * (-d2 / (2.0 * theta.lengthscale.powi(2))).exp()
            })
            .sum();
        let mean = m.predict_mean(&probe);
        let tol = 1e-10 * (1.0 + mean.abs() + m.alpha().amax() * x.len() as f64);
        prop_assert!((mean - theta.beta * correction - lin).abs() <= tol);
        prop_assert!((m.predict_decomposed(&probe) - mean).abs() <= tol);
    }

    #[test]
    fn zero_beta_reduces_to_linear(
        x in rows(2..=20),
        ys in prop::collection::vec(-2.0..2.0f64, 20),
        probe in prop::collection::vec(-1.0..1.0f64, 4),
        l in 1e-2..10.0f64,
        s in 1e-4..1.0f64,
    ) {
        let ds = Dataset::from_rows(&x, &ys[..x.len()]).unwrap();
        let theta = Hyperparams::new(0.0, l, s).unwrap();
        let a = fit(&ds, KernelSpec::Combined, &theta).unwrap();
        let b = fit(&ds, KernelSpec::Linear, &theta).unwrap();
        prop_assert!((a.predict_mean(&probe) - b.predict_mean(&probe)).abs() <= 1e-10 * (1.0 + b.predict_mean(&probe).abs()));
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(e in gain_matrix()) {
        let d = svd_gains(&GainMatrix::new(e, GainUnit::Normalized).unwrap());
        let tol = 1e-10 * d.sigma[0].max(1.0);
        prop_assert!(d.sigma[0] >= d.sigma[1] && d.sigma[1] >= 0.0);
        for r in 0..2 {
            for c in 0..4 {
                let v: f64 = (0..2).map(|j| d.u[r][j] * d.sigma[j] * d.v_rows[j][c]).sum();
                prop_assert!((v - e[r][c]).abs() <= tol);
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                let uu: f64 = (0..2).map(|k| d.u[k][i] * d.u[k][j]).sum();
                let vv: f64 = (0..4).map(|k| d.v_rows[i][k] * d.v_rows[j][k]).sum();
                prop_assert!((uu - id).abs() <= 1e-10 && (vv - id).abs() <= 1e-10);
            }
        }
        for j in 0..2 {
            let first = d.v_rows[j].iter().find(|v| v.abs() > 1e-12);
            prop_assert!(first.is_none_or(|v| *v > 0.0));
        }
    }

    #[test]
    fn singular_values_scale_with_the_matrix(e in gain_matrix(), c in 1e-3..1e3f64) {
        let g = GainMatrix::new(e, GainUnit::Raw).unwrap();
        let (a, b) = (svd_gains(&g), svd_gains(&g.scaled(c).unwrap()));
        for j in 0..2 {
            prop_assert!((b.sigma[j] - c * a.sigma[j]).abs() <= 1e-10 * c * a.sigma[0].max(1.0));
        }
    }

    #[test]
    fn p_value_follows_add_one_formula(
        a in prop::collection::vec(-5.0..5.0f64, 2..12),
        b in prop::collection::vec(-5.0..5.0f64, 2..12),
        var in any::<bool>(),
        n in 1usize..200,
        seed in any::<u64>(),
    ) {
        let kind = if var { StatisticKind::VarDiff } else { StatisticKind::MeanDiff };
        let r = permutation_test(&a, &b, kind, n, seed).unwrap();
        prop_assert_eq!(r.n_permutations, n);
        prop_assert!(r.statistic_observed >= 0.0);
        let count = r.p_value * (n + 1) as f64 - 1.0;
        prop_assert!((count - count.round()).abs() < 1e-9 && count >= -1e-9 && count <= n as f64 + 1e-9);
        prop_assert_eq!(r, permutation_test(&a, &b, kind, n, seed).unwrap());
    }

    #[test]
    fn normalization_round_trips(x in rows(2..=30), max_abs in any::<bool>(), stretch in 0.1..100.0f64) {
        let raw: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| stretch * v + 3.0).collect()).collect();
        let ds = Dataset::from_rows(&raw, &vec![0.0; raw.len()]).unwrap();
        let mode = if max_abs { NormalizationMode::MaxAbs } else { NormalizationMode::MinMax };
        let (norm, scaling) = normalize_with(&ds, mode);
        prop_assert!(norm.inputs().iter().all(|v| (-1.0..=1.0).contains(v)));
        for i in 0..raw.len() {
            let back = scaling.invert(&norm.row(i));
            for (u, v) in back.iter().zip(&raw[i]) {
                prop_assert!((u - v).abs() <= 1e-10 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn denormalized_gain_reproduces_control(
        g in prop::collection::vec(-5.0..5.0f64, 4),
        scale in prop::collection::vec(0.1..10.0f64, 4),
        offset in prop::collection::vec(-5.0..5.0f64, 4),
        z in prop::collection::vec(-20.0..20.0f64, 4),
    ) {
        let mut s = gainid::gp::Scaling::identity(4);
        s.scale = scale;
        s.offset = offset;
        let (raw, constant) = denormalize_gain(&g, &s).unwrap();
        let lhs: f64 = raw.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + constant;
        let rhs: f64 = g.iter().zip(s.apply(&z)).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn regions_follow_approach_intersection_exit(
        heading in -3.1..3.1f64,
        offset in -9.0..9.0f64,
        dt in 0.02..0.2f64,
    ) {
        let traj = pass(heading, offset, 0.0, dt, 5.0);
        let order = |r: Region| match r {
            Region::Approach => 0,
            Region::Intersection => 1,
            Region::Exit => 2,
        };
        let labels: Vec<u8> = segment_regions(&traj, &RegionRadii::default()).into_iter().flatten().map(order).collect();
        prop_assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(labels.contains(&1));
    }

    #[test]
    fn lead_is_invariant_to_time_shift(
        ha in -3.1..3.1f64,
        hb in -3.1..3.1f64,
        delay in -3.0..3.0f64,
        shift in -100.0..100.0f64,
    ) {
        let trial = |s: f64| DyadTrial {
            trial_id: "p".into(),
            site: Site::Isr,
            traj_a: pass(ha, 1.0, s, 0.05, 5.0),
            traj_b: pass(hb, 1.0, s + delay, 0.05, 5.0),
            exclusion: None,
        };
        prop_assert_eq!(determine_lead(&trial(0.0), 10.0).unwrap(), determine_lead(&trial(shift), 10.0).unwrap());
    }

    #[test]
    fn trial_csv_round_trips(
        frames in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -3.14..3.14f64, 0.0..20.0f64, prop::option::of(-5.0..5.0f64)), 2..20),
    ) {
        let traj: Vec<Frame> = frames
            .iter()
            .enumerate()
            .map(|(k, &(x, y, h, v, a))| Frame { t: k as f64 / 18.0, pos: [x, y], heading: h, speed: v, accel: a, ang_vel: None })
            .collect();
        let trial = DyadTrial { trial_id: "rt".into(), site: Site::Nyc, traj_a: traj.clone(), traj_b: traj, exclusion: None };
        let mut buf = Vec::new();
        write_trials(&mut buf, std::slice::from_ref(&trial)).unwrap();
        let back = read_trials(buf.as_slice(), "rt.csv").unwrap();
        prop_assert_eq!(back, vec![trial]);
    }

    #[test]
    fn nonlinear_term_is_bounded_inverse_distance(z in prop::array::uniform4(-100.0..100.0f64)) {
        let [a, w] = nonlinear_term(&z);
        prop_assert_eq!(w, 0.0);
        prop_assert!(a <= 0.0 && a.abs() <= NONLINEAR_SCALE / Z_FLOOR);
        let d = z[0].hypot(z[1]);
        prop_assert!((a.abs() * (d + Z_FLOOR) - NONLINEAR_SCALE).abs() <= 1e-12);
    }

    #[test]
    fn wrapped_angles_stay_in_half_open_range(a in -1e3..1e3f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let turns = (a - w) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn rounding_is_idempotent(v in prop::num::f64::NORMAL) {
        let r = round_sig(v);
        prop_assert_eq!(round_sig(r), r);
        prop_assert!((r - v).abs() <= 1e-9 * v.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimizer_is_deterministic(x in rows(10..=30), ys in prop::collection::vec(-1.0..1.0f64, 30), seed in any::<u64>()) {
        let ds = Dataset::from_rows(&x, &ys[..x.len()]).unwrap();
        let a = optimize_hyperparams(&ds, KernelSpec::Combined, &Bounds::default(), 3, seed).unwrap();
        let b = optimize_hyperparams(&ds, KernelSpec::Combined, &Bounds::default(), 3, seed).unwrap();
        prop_assert_eq!(a.theta.beta.to_bits(), b.theta.beta.to_bits());
        prop_assert_eq!(a.theta.lengthscale.to_bits(), b.theta.lengthscale.to_bits());
        prop_assert_eq!(a.theta.noise_var.to_bits(), b.theta.noise_var.to_bits());
    }
}

#[test]
fn lead_follows_first_entry() {
    let trial = DyadTrial {
        trial_id: "l".into(),
        site: Site::Isr,
        traj_a: pass(0.0, 1.0, 1.0, 0.05, 5.0),
        traj_b: pass(1.5, 1.0, 0.0, 0.05, 5.0),
        exclusion: None,
    };
    assert_eq!(determine_lead(&trial, 10.0).unwrap(), CarId::B);
}

fn fuzz_seed(target: &str, file: &str) -> Vec<u8> {
    std::fs::read(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target).join(file))
        .unwrap()
}

/// Overwrites bytes of `seed` at the given positions, as a mutational fuzzer would.
fn mutate(mut seed: Vec<u8>, edits: &[(usize, u8)]) -> Vec<u8> {
    for &(at, byte) in edits {
        if !seed.is_empty() {
            let i = at % seed.len();
            seed[i] = byte;
        }
    }
    seed
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parsers_reject_mutated_input_without_panicking(
        edits in prop::collection::vec((any::<usize>(), prop_oneof![any::<u8>(), Just(b','), Just(b'\n'), Just(b'-'), Just(b'e')]), 1..6),
    ) {
        let trials = mutate(fuzz_seed("trial_csv", "simulated.csv"), &edits);
        if let Ok(parsed) = read_trials(trials.as_slice(), "m.csv") {
            let mut buf = Vec::new();
            write_trials(&mut buf, &parsed).unwrap();
            prop_assert_eq!(read_trials(buf.as_slice(), "m2.csv").unwrap(), parsed);
        }
        let nominal = mutate(fuzz_seed("nominal_csv", "left_turn.csv"), &edits);
        let _ = gainid::nominal::NominalTrajectory::read_csv(nominal.as_slice(), "m.csv");
        let cfg = mutate(fuzz_seed("run_config", "synthetic.toml"), &edits);
        if let Ok(text) = std::str::from_utf8(&cfg) {
            if let Ok(c) = gainid::pipeline::RunConfig::from_toml(text) {
                prop_assert_eq!(gainid::pipeline::RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
            }
        }
        let report = mutate(fuzz_seed("report_json", "report.json"), &edits);
        if let Ok(text) = std::str::from_utf8(&report) {
            if let Ok(r) = gainid::pipeline::AnalysisReport::from_json(text) {
                let _ = gainid::pipeline::render_table(&r);
            }
        }
    }

    #[test]
    fn parsers_reject_arbitrary_bytes_without_panicking(data in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = read_trials(data.as_slice(), "a.csv");
        let _ = gainid::nominal::NominalTrajectory::read_csv(data.as_slice(), "a.csv");
        if let Ok(text) = std::str::from_utf8(&data) {
            let _ = gainid::pipeline::RunConfig::from_toml(text);
            let _ = gainid::pipeline::SimulateConfig::from_toml(text);
            let _ = gainid::pipeline::NominalCommandConfig::from_toml(text);
            let _ = gainid::pipeline::AnalysisReport::from_json(text);
        }
    }
}
