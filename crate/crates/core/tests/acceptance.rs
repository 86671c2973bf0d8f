//! Acceptance suite: nine criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always printed;
//! the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use reactodiff::deterministic::{
    cascade_rate_fit, mild_solve, mild_solve_k, verify_estimates, ForcingPath, MildOptions, Problem, SlackPolicy,
    SolveMode, TimeGrid,
};
use reactodiff::discretization::{
    build_grid, BoundaryCondition, Coefficient, CoefficientForm, CoefficientSet, Field, OperatorFamily, ProductForm,
    SpatialGrid,
};
use reactodiff::evolution::{evolution_matrix, PropagatorScheme, Stepper};
use reactodiff::harness::{run_experiment, ExperimentConfig};
use reactodiff::stats::{loglog_slope, mean_variance};
use reactodiff::stochastic::{
    chs_estimate, chs_sweep, chs_time_grid, convolve_direct, convolve_direct_final, convolve_factorized,
    relative_sup_distance_h, sample_wiener, NoiseModel, NoiseOperator, PathEnsemble,
};
use reactodiff::yosida::{eval_reaction, resolvent_J, yosida_F, Nemytskii, ReactionPolynomial};

const SEED: u64 = 20240611;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Check = fn() -> reactodiff::Result<Outcome>;

fn main() -> ExitCode {
    // libtest flags (e.g. --nocapture, filters) are accepted and ignored
    let criteria: [(&str, f64, Check); 9] = [
        ("yosida suite", 5.0, yosida_suite),
        ("propagator contraction", 30.0, propagator_contraction),
        ("deterministic envelopes", 60.0, deterministic_envelopes),
        ("k-cascade rate", 60.0, cascade_rate),
        ("ito isometry", 60.0, ito_isometry),
        ("factorization identity", 120.0, factorization_identity),
        ("regularity threshold", 60.0, regularity_threshold),
        ("pathwise envelopes", 180.0, pathwise_envelopes),
        ("determinism", 120.0, determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let result = check();
        let secs = clock.elapsed().as_secs_f64();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && secs < *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "criterion {} {} {name}: {detail} [{secs:.1} s of {budget} s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn interval(n: usize) -> Arc<SpatialGrid> {
    Arc::new(build_grid(0.0, PI, n, 1).unwrap())
}

fn laplacian_family(n: usize) -> OperatorFamily {
    OperatorFamily::new(CoefficientSet::laplacian(1, 1.0), interval(n), BoundaryCondition::Dirichlet, 0.0, 1.0).unwrap()
}

fn chafee_infante(n: usize) -> Problem {
    Problem::new(
        CoefficientSet::laplacian(1, 1.0),
        interval(n),
        BoundaryCondition::Dirichlet,
        ReactionPolynomial::from_constants(&[0.0, 1.0, 0.0, 1.0]).unwrap(),
        0.0,
        1.0,
    )
    .unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Regularity sum at `K` and at `2K` modes, or `K/2` when the grid is too coarse for `2K`.
fn mode_sensitivity(family: &OperatorFamily, op: NoiseOperator, modes: usize, alpha: f64) -> String {
    let other = if 2 * modes <= family.grid().len() { 2 * modes } else { modes / 2 };
    let tg = chs_time_grid(0.0, 1.0).unwrap();
    let value = |k: usize| {
        let m = NoiseModel::new(family.grid().clone(), k, op.clone(), alpha).unwrap();
        chs_estimate(family, &m, 0.0, 1.0, alpha, &tg).unwrap().value
    };
    let (a, b) = (value(modes), value(other));
    format!("regularity sum K={modes}: {a:.4}, K={other}: {b:.4} ({:+.1}%)", 100.0 * (b - a) / a)
}

fn yosida_suite() -> reactodiff::Result<Outcome> {
    const SLACK: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let poly = ReactionPolynomial::from_constants(&[0.0, 1.0, 0.0, 1.0])?;
    let mut worst = [f64::NEG_INFINITY; 4];
    let mut failed = 0;
    for _ in 0..1000 {
        // grid spacing h through the node count, index k log-uniform in [zeta + 1, 1e4]
        let n = rng.random_range(3..40);
        let grid = interval(n);
        let f = Nemytskii::new(poly.clone(), grid.clone(), 0.0, 1.0)?;
        let zeta = f.zeta().working;
        let k = ((zeta + 1.0).ln() + rng.random::<f64>() * (1e4f64.ln() - (zeta + 1.0).ln())).exp();
        let t = rng.random::<f64>();
        let scale = rng.random_range(0.1..5.0);
        let x = Field::from_fn(&grid, |_| scale * (2.0 * rng.random::<f64>() - 1.0));
        let y = Field::from_fn(&grid, |_| scale * (2.0 * rng.random::<f64>() - 1.0));
        let jx = resolvent_J(&f, k, t, &x)?.value;
        let jy = resolvent_J(&f, k, t, &y)?.value;
        let fx = eval_reaction(&f, t, &x);
        let fkx = yosida_F(&f, k, t, &x)?;
        let fky = yosida_F(&f, k, t, &y)?;
        for norm in [Field::norm_sup as fn(&Field) -> f64, Field::norm_h] {
            // each entry is lhs - rhs
            let excess = [
                norm(&(&jx - &x)) - (norm(&fx) + zeta.max(0.0) * norm(&x)) / k,
                norm(&fkx) - 3.0 * (norm(&fx) + zeta.max(0.0) * norm(&x)),
                norm(&(&fkx - &fky)) - 3.0 * k * norm(&(&x - &y)),
                norm(&(&jx - &jy)) - norm(&(&x - &y)),
            ];
            for (w, e) in worst.iter_mut().zip(excess) {
                *w = w.max(e);
                if e > SLACK {
                    failed += 1;
                }
            }
        }
    }
    let f = Nemytskii::new(poly, interval(8), 0.0, 1.0)?;
    let x = Field::constant(f.grid(), 2.0);
    let ks = [10.0, 100.0, 1000.0, 10000.0];
    let d: Vec<f64> = ks
        .iter()
        .map(|&k| Ok((&resolvent_J(&f, k, 0.0, &x)?.value - &x).norm_sup()))
        .collect::<reactodiff::Result<_>>()?;
    let slope = loglog_slope(&ks, &d);
    Ok(outcome(
        failed == 0 && (-1.2..=-0.8).contains(&slope),
        format!(
            "1000 samples, {failed} violations; worst excess (resolvent-x, growth, lipschitz F_k, nonexpansive J) = {:.1e} {:.1e} {:.1e} {:.1e}; |J_k x - x| slope {slope:.4}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn propagator_contraction() -> reactodiff::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    // a11(t, xi) = 1 + t/2 + xi/4
    let varying = CoefficientForm::Sum(vec![
        CoefficientForm::Constant(1.0),
        CoefficientForm::Product(ProductForm {
            poly_t: vec![0.0, 0.5],
            poly_xi: vec![],
        }),
        CoefficientForm::Product(ProductForm {
            poly_t: vec![],
            poly_xi: vec![vec![0.0, 0.25]],
        }),
    ]);
    let families = [
        ("dirichlet laplacian", laplacian_family(31)),
        (
            "a11 = 1 + t/2 + xi/4, drift, neumann",
            OperatorFamily::new(
                CoefficientSet::isotropic(1, Coefficient::Form(varying), 0.5).with_drift(vec![Coefficient::constant(0.5)]),
                interval(31),
                BoundaryCondition::Neumann,
                0.0,
                1.0,
            )?,
        ),
        (
            "2d time-dependent, potential, robin",
            OperatorFamily::new(
                CoefficientSet::isotropic(2, Coefficient::poly_t(&[1.0, 0.5]), 0.5).with_potential(Coefficient::constant(2.0)),
                Arc::new(SpatialGrid::new(&[0.0, 0.0], &[1.0, 2.0], &[8, 9])?),
                BoundaryCondition::Robin(Coefficient::constant(1.0)),
                0.0,
                1.0,
            )?,
        ),
    ];
    let scheme = PropagatorScheme::implicit_euler(0.01);
    let mut worst: f64 = 0.0;
    for (_, fam) in &families {
        for (s, t) in [(0.0, 1.0), (0.25, 0.75)] {
            let u = evolution_matrix(fam, &scheme, s, t)?.matrix;
            let dim = u.nrows();
            for _ in 0..1000 {
                let x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                // uniform cell volume: the H-norm ratio is the Euclidean ratio
                worst = worst.max((&u * &x).norm() / x.norm());
            }
        }
    }

    // autonomous case: exp(tau A_n) against the spectral exp(tau A)
    let fam = laplacian_family(31);
    let a = fam.at(0.0)?.to_dense();
    let eig = SymmetricEigen::new(a);
    let tau = 1.0;
    let exact = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (tau * l).exp()))
        * eig.eigenvectors.transpose();
    let ns = [10.0, 100.0, 1000.0, 10000.0];
    let dists: Vec<f64> = ns
        .iter()
        .map(|&n| Ok((evolution_matrix(&fam, &PropagatorScheme::yosida_product(0.1, n), 0.0, tau)?.matrix - &exact).norm()))
        .collect::<reactodiff::Result<_>>()?;
    let monotone = dists.windows(2).all(|w| w[1] < w[0]);
    Ok(outcome(
        worst <= 1.0 + 1e-12 && monotone,
        format!(
            "3 families x 2 intervals x 1000 data, max |Ux|/|x| = {worst:.15}; |U_n - exp| over n = 1e1..1e4: {}",
            dists.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn deterministic_envelopes() -> reactodiff::Result<Outcome> {
    let p = chafee_infante(64);
    let dt = 1e-3;
    let tg = TimeGrid::uniform(0.0, 1.0, 1000)?;
    let f = ForcingPath::zero(&tg, p.grid());
    let scheme = PropagatorScheme::implicit_euler(dt);
    let slack = SlackPolicy::for_grids(&tg, p.grid());
    let x = Field::from_fn(p.grid(), |q| 0.5 * q[0].sin());
    let z = Field::from_fn(p.grid(), |q| -0.3 * q[0].sin() + 0.2 * (2.0 * q[0]).sin());
    let mut audits = 0;
    let mut failed = Vec::new();
    let mut worst = f64::INFINITY;
    for mode in [SolveMode::YosidaCascade, SolveMode::SemiImplicit] {
        let opts = MildOptions {
            mode,
            ..MildOptions::default()
        };
        let a = mild_solve(&p, &x, &f, &tg, &scheme, &opts)?;
        let b = mild_solve(&p, &z, &f, &tg, &scheme, &opts)?;
        for audit in verify_estimates(&[(&a, &b)], &p, &f, &slack)?.audits {
            audits += 1;
            worst = worst.min(audit.rows.iter().skip(1).map(|r| r.margin / r.envelope).fold(f64::INFINITY, f64::min));
            if !audit.passed() {
                failed.push(format!("{mode:?}/{}", audit.name));
            }
        }
    }

    // y' = -y^3, y(0) = 1 on a single node with negligible diffusion
    let g = Arc::new(build_grid(0.0, 1.0, 1, 1)?);
    let scalar = Problem::new(
        CoefficientSet::isotropic(1, Coefficient::constant(1e-300), 1e-300),
        g,
        BoundaryCondition::Neumann,
        ReactionPolynomial::from_constants(&[0.0, 0.0, 0.0, 1.0])?,
        0.0,
        1.0,
    )?;
    let opts = MildOptions::default();
    let y = mild_solve(
        &scalar,
        &Field::constant(scalar.grid(), 1.0),
        &ForcingPath::zero(&tg, scalar.grid()),
        &tg,
        &scheme,
        &opts,
    )?;
    let err = tg
        .nodes()
        .iter()
        .zip(&y.states)
        .map(|(t, s)| (s.values()[0] - (1.0 + 2.0 * t).powf(-0.5)).abs())
        .fold(0.0, f64::max);
    // |y''| = 3 y^5 <= 3; the cascade tolerance adds to the time-stepping error
    let bound = 2.0 * dt * 3.0 + opts.tol;
    Ok(outcome(
        failed.is_empty() && err <= bound,
        format!(
            "{audits} audits in both modes, failing {failed:?}, worst relative margin after t = s {worst:.3e} (slack {:.0e}); scalar cubic max error {err:.3e} <= {bound:.3e}",
            slack.relative
        ),
    ))
}

fn cascade_rate() -> reactodiff::Result<Outcome> {
    let p = Problem::new(
        CoefficientSet::laplacian(1, 1.0),
        interval(64),
        BoundaryCondition::Dirichlet,
        ReactionPolynomial::from_constants(&[0.0, 0.0, 0.0, 1.0])?,
        0.0,
        1.0,
    )?;
    let tg = TimeGrid::uniform(0.0, 1.0, 1000)?;
    let f = ForcingPath::zero(&tg, p.grid());
    let scheme = PropagatorScheme::implicit_euler(1e-3);
    let ks = [4.0, 8.0, 16.0, 32.0, 64.0];
    let slope = |x: &Field| -> reactodiff::Result<(f64, Vec<f64>)> {
        let trajs = ks
            .iter()
            .map(|&k| mild_solve_k(&p, k, x, &f, &tg, &scheme, 1e-12))
            .collect::<reactodiff::Result<Vec<_>>>()?;
        let levels: Vec<_> = ks.iter().copied().zip(trajs.iter()).collect();
        let fit = cascade_rate_fit(&levels)?;
        Ok((fit.slope, fit.squared_distances))
    };
    let (s, d2) = slope(&Field::constant(p.grid(), 2.0))?;
    let (smooth, _) = slope(&Field::from_fn(p.grid(), |q| 0.5 * q[0].sin()))?;
    Ok(outcome(
        (-1.4..=-0.6).contains(&s),
        format!(
            "b = -s^3, x = 2: slope {s:.4} (squared distances {}); smooth datum 0.5 sin: slope {smooth:.4} (information)",
            d2.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn ito_isometry() -> reactodiff::Result<Outcome> {
    const MODES: usize = 8;
    let fam = laplacian_family(31);
    let model = NoiseModel::new(fam.grid().clone(), MODES, NoiseOperator::Identity, 0.2)?;
    let steps = 2048;
    let dt = 1.0 / steps as f64;
    let tg = TimeGrid::uniform(0.0, 1.0, steps)?;
    let stepper = Stepper::for_grid(&fam, &PropagatorScheme::implicit_euler(dt), &tg)?;
    let vol = fam.grid().cell_volume();
    let ensemble = PathEnsemble::new(SEED, 10_000);
    let coords = ensemble.map(|_, seed| {
        let z = convolve_direct_final(&stepper, &model, &sample_wiener(&model, &tg, seed))?;
        Ok((model.basis().transpose() * z) * vol)
    })?;
    let mut worst_mode: f64 = 0.0;
    let mut e1 = 0.0;
    for j in 0..MODES {
        let (_, var) = mean_variance(&coords.iter().map(|c| c[j]).collect::<Vec<_>>());
        // implicit Euler adds the increment, then damps by rho per step
        let rho = 1.0 / (1.0 - dt * model.eigenvalues()[j]);
        let discrete: f64 = (1..=steps).map(|m| dt * rho.powi(2 * m as i32)).sum();
        worst_mode = worst_mode.max((var / discrete - 1.0).abs());
        if j == 0 {
            e1 = var;
        }
    }
    let oracle = (1.0 - (-2.0f64).exp()) / 2.0;
    let rel = e1 / oracle - 1.0;
    Ok(outcome(
        rel.abs() <= 0.05 && worst_mode <= 0.05,
        format!(
            "Var<Z(1), e1> = {e1:.5} vs {oracle:.5} ({:+.2}%); modes 1..8 vs step-corrected oracles: worst {:.2}%; {}",
            100.0 * rel,
            100.0 * worst_mode,
            mode_sensitivity(&fam, NoiseOperator::Identity, MODES, 0.2)
        ),
    ))
}

fn factorization_identity() -> reactodiff::Result<Outcome> {
    let fam = laplacian_family(63);
    let model = NoiseModel::new(fam.grid().clone(), 32, NoiseOperator::Identity, 0.2)?;
    let fine_grid = TimeGrid::uniform(0.0, 1.0, 2048)?;
    let fine = sample_wiener(&model, &fine_grid, PathEnsemble::new(SEED, 1).seed(0));
    let mut errs = Vec::new();
    for factor in [4, 1] {
        let path = fine.coarsen(factor)?;
        let scheme = PropagatorScheme::implicit_euler(path.time_grid.max_dt());
        let d = convolve_direct(&fam, &model, &path, &scheme)?;
        let f = convolve_factorized(&fam, &model, &path, &scheme)?;
        errs.push(relative_sup_distance_h(&f, &d)?);
    }
    let ratio = errs[0] / errs[1];
    Ok(outcome(
        errs[1] <= 0.05 && ratio >= 1.4,
        format!(
            "relative error {:.4e} at dt = 2^-9, {:.4e} at dt = 2^-11, ratio {ratio:.3}; {}",
            errs[0],
            errs[1],
            mode_sensitivity(&fam, NoiseOperator::Identity, 32, 0.2)
        ),
    ))
}

fn regularity_threshold() -> reactodiff::Result<Outcome> {
    let fam = laplacian_family(255);
    let model = NoiseModel::new(fam.grid().clone(), 32, NoiseOperator::Identity, 0.2)?;
    let tg = chs_time_grid(0.0, 1.0)?;
    let alphas = [0.15, 0.2, 0.23, 0.27, 0.3];
    let rows = chs_sweep(&fam, &model, 0.0, 1.0, &alphas, &tg)?;
    let flags: Vec<bool> = rows.iter().map(|r| r.diverging).collect();
    let alpha_ok = flags == [false, false, false, true, true];
    let gammas = [0.0, 0.1, 0.25, 0.5, 1.0];
    let mut gamma_flags = Vec::new();
    for g in gammas {
        let m = NoiseModel::new(fam.grid().clone(), 32, NoiseOperator::Fractional { gamma: g }, 0.2)?;
        gamma_flags.push(chs_estimate(&fam, &m, 0.0, 1.0, 0.2, &tg)?.diverging);
    }
    let gamma_ok = gamma_flags.iter().all(|d| !d);
    Ok(outcome(
        alpha_ok && gamma_ok,
        format!(
            "alpha {alphas:?} -> diverging {flags:?} (tail exponents {}); gamma {gammas:?} at alpha 0.2 -> diverging {gamma_flags:?}",
            rows.iter().map(|r| format!("{:+.3}", r.growth_exponent)).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn pathwise_envelopes() -> reactodiff::Result<Outcome> {
    let mut parts = Vec::new();
    let mut passed = true;
    for name in ["spde_ensemble.json", "transitions.json"] {
        let cfg = ExperimentConfig::load(&configs_dir().join(name))?;
        let bundle = run_experiment(&cfg)?;
        let failing: Vec<&str> = bundle.audits.iter().filter(|a| !a.passed).map(|a| a.name.as_str()).collect();
        passed &= failing.is_empty();
        parts.push(format!("{name}: {} audits, failing {failing:?}", bundle.audits.len()));
        if name == "spde_ensemble.json" {
            let doubling = &bundle.summary["mode_doubling"];
            parts.push(format!("mode doubling {}", doubling["relative_change"]));
        }
    }
    Ok(outcome(passed, format!("100 paths each, common noise for differences; {}", parts.join("; "))))
}

fn determinism() -> reactodiff::Result<Outcome> {
    let exe = env!("CARGO_BIN_EXE_reactodiff");
    let config = configs_dir().join("transitions.json");
    let dir = tempfile::tempdir().map_err(|e| reactodiff::Error::IoFailure {
        path: std::env::temp_dir(),
        source: e,
    })?;
    let runs = [("a", "1"), ("b", "1"), ("c", "3")];
    for (sub, threads) in runs {
        let status = Command::new(exe)
            .args(["run", "--threads", threads, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(sub))
            .env_remove("REACTODIFF_THREADS")
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return Ok(outcome(false, format!("run {sub} exited with {}", status.status)));
        }
    }
    let csvs = |sub: &str| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = std::fs::read_dir(dir.path().join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let (a, b, c) = (csvs("a"), csvs("b"), csvs("c"));
    let bytes: usize = a.iter().map(|(_, d)| d.len()).sum();
    Ok(outcome(
        !a.is_empty() && a == b && a == c,
        format!(
            "{} CSVs ({bytes} bytes) byte-identical across two reference runs and a 3-thread run: {}",
            a.len(),
            a == b && a == c
        ),
    ))
}
