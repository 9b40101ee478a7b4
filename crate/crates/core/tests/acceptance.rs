//! Acceptance criteria 1–10. Runs as a plain binary and prints one PASS or
//! FAIL line per criterion. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 2 9`.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pcox::conditionals::{
    cond_g_logpdf_grad, frailty_slice, CurveTarget, GammaPrior, ModelData, ModelState, PriorConfig,
    RegressionSlice, Sym2,
};
use pcox::data::PanelDataset;
use pcox::engine::{correlation_factor, Acceptance, ChainOutput, FitConfig, GibbsSampler};
use pcox::grid::{integral_exp, GridSpec, Process};
use pcox::kernels::{matern_corr, GramFactor, Smoothness};
use pcox::predict::{predictive_counts, PredictionRequest};
use pcox::rng::rng_from_seed;
use pcox::samplers::ars::{ars_sample, Target1D};
use pcox::samplers::conjugate::draw_inv_wishart;
use pcox::samplers::ess::ess_step;
use pcox::samplers::hmc::{hmc_step, DualAveraging, HmcSettings};
use pcox::simulate::{replicate_study, GibbsEstimator, ScenarioSpec};
use pcox::stats::{effective_sample_size, ks_distance, mean, normal_cdf, variance};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "kernel exactness", criterion_1),
        (2, "gradient fidelity", criterion_2),
        (3, "log-concavity certificates", criterion_3),
        (4, "sampler oracles", criterion_4),
        (5, "prior recovery", criterion_5),
        (6, "setting 2 study", criterion_6),
        (7, "setting 3 study", criterion_7),
        (8, "prediction closed form", criterion_8),
        (9, "discretization convergence", criterion_9),
        (10, "CLI determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2} {verdict} ({name}, {secs:.1} s): {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn criterion_1() -> Outcome {
    let mut rng = rng_from_seed(101);
    let mut exp_err: f64 = 0.0;
    let mut bessel_err: f64 = 0.0;
    for _ in 0..1000 {
        let h = rng.random::<f64>() * 5.0;
        let theta = 0.01 + rng.random::<f64>() * 2.0;
        let v = matern_corr(h, Smoothness::Half, theta).unwrap();
        exp_err = exp_err.max((v - (-h / theta).exp()).abs());
    }
    for _ in 0..200 {
        let h = 1e-3 + rng.random::<f64>() * 5.0;
        let theta = 0.05 + rng.random::<f64>() * 2.0;
        for nu in [Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let v = matern_corr(h, nu, theta).unwrap();
            let o = common::matern_bessel(h, nu.value(), theta);
            bessel_err = bessel_err.max((v - o).abs());
        }
    }
    outcome(
        exp_err <= 1e-14 && bessel_err <= 1e-8,
        format!("max |ν=0.5 − exp| = {exp_err:.1e}, max |closed form − Bessel| = {bessel_err:.1e}"),
    )
}

fn criterion_2() -> Outcome {
    let data = common::setting_data(2, 5, 202);
    let grid = GridSpec::new(40).unwrap();
    let md = ModelData::new(&data, grid);
    let centers = grid.cell_centers();
    let mut rng = rng_from_seed(203);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let state = common::random_state(1, 5, 40, &mut rng);
        for which in [Process::Observation, Process::Event] {
            let k = which.index();
            let cov = correlation_factor(&centers, Smoothness::FiveHalves, state.theta[k], md.time_scale)
                .unwrap()
                .scaled(state.sigma2[k]);
            let g = state.curve(which).to_vec();
            let (_, grad) = cond_g_logpdf_grad(which, &g, &state, &md, &cov);
            let fd = common::fd_gradient(|v| cond_g_logpdf_grad(which, v, &state, &md, &cov).0, &g, 1e-5);
            let num: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
    }
    outcome(worst <= 1e-6, format!("max relative gradient error {worst:.1e} over 10 states × 2 curves"))
}

fn criterion_3() -> Outcome {
    let data = common::setting_data(2, 30, 302);
    let grid = GridSpec::new(50).unwrap();
    let md = ModelData::new(&data, grid);
    let mut rng = rng_from_seed(303);
    let mut worst = [f64::NEG_INFINITY; 3];
    let h = 1e-4;
    for _ in 0..100 {
        let state = common::random_state(1, 30, 50, &mut rng);
        let obs = md.obs_integrals(&state.g1);
        let ev = md.event_exposures(&state.g2);
        for (slot, which, integrals) in [(0, Process::Observation, &obs), (1, Process::Event, &ev)] {
            let coef = state.coefficients(which).to_vec();
            let slice = RegressionSlice::new(which, 0, &coef, &state, &md, integrals, None);
            let c = 3.0 * (2.0 * rng.random::<f64>() - 1.0);
            let d2 = (slice.derivative(c + h) - slice.derivative(c - h)) / (2.0 * h);
            worst[slot] = worst[slot].max(d2 / (1.0 + slice.derivative(c).abs()));
        }
        let i = rng.random_range(0..30);
        let fs = frailty_slice(i, &state, &md, obs[i], ev[i]).unwrap();
        let z = [2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0];
        for k in 0..2 {
            let (mut up, mut down) = (z, z);
            up[k] += h;
            down[k] -= h;
            let d2 = (fs.derivative(up, k) - fs.derivative(down, k)) / (2.0 * h);
            worst[2] = worst[2].max(d2 / (1.0 + fs.derivative(z, k).abs()));
        }
    }
    let tol = 1e-8;
    outcome(
        worst.iter().all(|w| *w <= tol),
        format!(
            "max scaled second derivative: gamma {:.1e}, beta {:.1e}, z {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // ARS on N(0, 1).
    let mut rng = rng_from_seed(401);
    let f = |x: f64| -0.5 * x * x;
    let target = Target1D::new(&f);
    let xs: Vec<f64> = (0..100_000).map(|_| ars_sample(&target, 0.3, &mut rng).unwrap()).collect();
    let ks = ks_distance(&xs, normal_cdf);
    pass &= ks < 0.006;
    notes.push(format!("ARS KS {ks:.4}"));

    // HMC on N(0, Σ) with inverse mass Σ.
    let sigma = [4.0, 1.2, 0.3, 1.2, 1.0, -0.2, 0.3, -0.2, 0.25];
    let factor = GramFactor::from_covariance(3, sigma.to_vec(), 0.0).unwrap();
    let target = |q: &[f64]| {
        let prec_q = factor.solve(q);
        (-0.5 * q.iter().zip(&prec_q).map(|(a, b)| a * b).sum::<f64>(), prec_q.iter().map(|v| -v).collect())
    };
    // With inverse mass Σ the whitened dynamics have unit frequency; an
    // integration time near π/2 gives nearly independent draws, whereas a
    // time near π maps q to about −q and leaves |q| almost unchanged.
    let settings = HmcSettings { n_leapfrog: 8, ..HmcSettings::default() };
    let mut q = vec![0.0; 3];
    let mut draws = vec![Vec::new(); 3];
    for it in 0..21_000 {
        q = hmc_step(&q, &target, &settings, 0.2, &factor, &mut rng).position;
        if it >= 1000 {
            for k in 0..3 {
                draws[k].push(q[k]);
            }
        }
    }
    let ratios: Vec<f64> = (0..3).map(|k| variance(&draws[k]) / sigma[4 * k]).collect();
    pass &= ratios.iter().all(|r| (r - 1.0).abs() <= 0.05);
    notes.push(format!("HMC variance ratios {:.3}/{:.3}/{:.3}", ratios[0], ratios[1], ratios[2]));

    // Inverse-Wishart mean.
    let scale = Sym2::new(2.0, 0.5, 1.0);
    let df = 10.0;
    let n = 100_000;
    let ds: Vec<Sym2> = (0..n).map(|_| draw_inv_wishart(df, &scale, &mut rng)).collect();
    let mut iw_ok = true;
    let mut worst_z: f64 = 0.0;
    for (get, truth) in [
        (Box::new(|d: &Sym2| d.d11) as Box<dyn Fn(&Sym2) -> f64>, scale.d11 / (df - 3.0)),
        (Box::new(|d: &Sym2| d.d12), scale.d12 / (df - 3.0)),
        (Box::new(|d: &Sym2| d.d22), scale.d22 / (df - 3.0)),
    ] {
        let v: Vec<f64> = ds.iter().map(|d| get(d)).collect();
        let z = (mean(&v) - truth) / (variance(&v) / n as f64).sqrt();
        worst_z = worst_z.max(z.abs());
        iw_ok &= z.abs() <= 3.0;
    }
    pass &= iw_ok;
    notes.push(format!("IW mean max |z| {worst_z:.2}"));

    // Elliptical slice versus HMC on the same curve conditional.
    let (ok, worst) = ess_vs_hmc();
    pass &= ok;
    notes.push(format!("ESS vs HMC max |z| {worst:.2} over 20 cells"));
    outcome(pass, notes.join(", "))
}

/// Posterior cell means of `g2` from HMC and elliptical slice chains on the
/// same fixed conditional, compared in units of the combined MC error.
fn ess_vs_hmc() -> (bool, f64) {
    let data = common::setting_data(2, 20, 404);
    let cfg = FitConfig {
        n_iter: 300,
        burn_in: 100,
        grid_cells: 20,
        fixed_theta: Some([4.0, 10.0]),
        ..FitConfig::default()
    };
    let mut sampler = GibbsSampler::new(&data, &cfg, 405).unwrap();
    for _ in 0..200 {
        sampler.step().unwrap();
    }
    let state = sampler.state().clone();
    let md = sampler.data().clone();
    let centers = md.grid.cell_centers();
    let cov = correlation_factor(&centers, Smoothness::FiveHalves, state.theta[1], md.time_scale)
        .unwrap()
        .scaled(state.sigma2[1]);
    let target = CurveTarget::new(Process::Event, &state, &md, &cov);
    let l = target.dim();
    let mut rng = rng_from_seed(406);

    let settings = HmcSettings::default();
    let f = |g: &[f64]| target.logpdf_grad(g);
    let mut g = state.g2.clone();
    let mut da = DualAveraging::new(0.1, settings.target_accept);
    for _ in 0..1000 {
        let out = hmc_step(&g, &f, &settings, da.current(), &cov, &mut rng);
        da.update(out.accept_prob);
        g = out.position;
    }
    let eps = da.final_step();
    let mut hmc = vec![Vec::new(); l];
    for _ in 0..10_000 {
        g = hmc_step(&g, &f, &settings, eps, &cov, &mut rng).position;
        for (k, v) in g.iter().enumerate() {
            hmc[k].push(*v);
        }
    }

    let mean_level = vec![state.beta0; l];
    let ll = |g: &[f64]| target.data_loglik(g);
    let mut g = state.g2.clone();
    let mut cur = ll(&g);
    for _ in 0..2000 {
        let out = ess_step(&g, cur, ll, &mean_level, &cov, &mut rng);
        g = out.position;
        cur = out.loglik;
    }
    let mut ess = vec![Vec::new(); l];
    for _ in 0..40_000 {
        let out = ess_step(&g, cur, ll, &mean_level, &cov, &mut rng);
        g = out.position;
        cur = out.loglik;
        for (k, v) in g.iter().enumerate() {
            ess[k].push(*v);
        }
    }
    let se2 = |xs: &[f64]| variance(xs) / effective_sample_size(xs).unwrap_or(1.0);
    let mut worst: f64 = 0.0;
    for k in 0..l {
        let z = (mean(&hmc[k]) - mean(&ess[k])) / (se2(&hmc[k]) + se2(&ess[k])).sqrt();
        worst = worst.max(z.abs());
    }
    (worst <= 3.0, worst)
}

fn criterion_5() -> Outcome {
    let priors = PriorConfig {
        k0: 12.0,
        v0: Sym2::new(9.0, 0.0, 9.0),
        a0: 10.0,
        b0: 9.0,
        theta_prior: [GammaPrior { shape: 4.0, rate: 4.0 }; 2],
        coef_prior_var: Some(1.0),
        intercept_prior_var: Some(1.0),
    };
    let cfg = FitConfig {
        n_iter: 11_000,
        burn_in: 1_000,
        grid_cells: 4,
        priors: priors.clone(),
        ..FitConfig::default()
    };
    let data = PanelDataset::empty(vec!["x1".to_string()], 1.0).unwrap();
    let chain = match GibbsSampler::new(&data, &cfg, 501).and_then(|s| s.run()) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("sampler failed: {e}")),
    };
    let iw_mean = priors.v0.scale(1.0 / (priors.k0 - 3.0));
    let iw_var = common::inv_wishart_variances(priors.k0, &priors.v0);
    let ig_mean = priors.b0 / (priors.a0 - 1.0);
    let ig_var = ig_mean * ig_mean / (priors.a0 - 2.0);
    let th = priors.theta_prior[0];
    let (th_mean, th_var) = (th.shape / th.rate, th.shape / (th.rate * th.rate));
    let g_second = 1.0 + ig_mean;

    // (name, trace, prior mean, prior second moment)
    let mut checks: Vec<(String, Vec<f64>, f64, f64)> = Vec::new();
    let mut add = |name: &str, f: &dyn Fn(&ModelState) -> f64, m: f64, v: f64| {
        let xs: Vec<f64> = chain.draws.iter().map(f).collect();
        checks.push((name.to_string(), xs, m, v + m * m));
    };
    add("gamma", &|s| s.gamma[0], 0.0, 1.0);
    add("beta", &|s| s.beta[0], 0.0, 1.0);
    add("gamma0", &|s| s.gamma0, 0.0, 1.0);
    add("beta0", &|s| s.beta0, 0.0, 1.0);
    add("D11", &|s| s.d.d11, iw_mean.d11, iw_var[0]);
    add("D12", &|s| s.d.d12, iw_mean.d12, iw_var[1]);
    add("D22", &|s| s.d.d22, iw_mean.d22, iw_var[2]);
    add("sigma2_1", &|s| s.sigma2[0], ig_mean, ig_var);
    add("sigma2_2", &|s| s.sigma2[1], ig_mean, ig_var);
    add("theta_1", &|s| s.theta[0], th_mean, th_var);
    add("theta_2", &|s| s.theta[1], th_mean, th_var);
    for l in 0..4 {
        add(&format!("g1[{l}]"), &|s| s.g1[l], 0.0, g_second);
        add(&format!("g2[{l}]"), &|s| s.g2[l], 0.0, g_second);
    }

    let z = |xs: &[f64], target: f64| {
        let ess = effective_sample_size(xs).unwrap_or(1.0);
        (mean(xs) - target) / (variance(xs) / ess).sqrt()
    };
    let mut worst = (0.0, String::new());
    for (name, xs, m1, m2) in &checks {
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        for (label, v) in [("mean", z(xs, *m1)), ("second moment", z(&sq, *m2))] {
            if v.abs() > worst.0 {
                worst = (v.abs(), format!("{name} {label}"));
            }
        }
    }
    outcome(
        worst.0 <= 3.0,
        format!(
            "{} draws, {} moments checked, max |z| {:.2} ({})",
            chain.n_draws(),
            2 * checks.len(),
            worst.0,
            worst.1
        ),
    )
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Replicates whose simulated data contain a subject without visits are
/// rejected by the fitter and excluded from the summary; any other failure
/// fails the criterion.
fn only_missing_visit_failures(failures: &[(usize, String)]) -> bool {
    failures.iter().all(|(_, e)| e.contains("has no visits"))
}

fn criterion_6() -> Outcome {
    let spec = ScenarioSpec::setting(2, 100).unwrap();
    let config = FitConfig { n_iter: 4000, burn_in: 1000, ..spec.default_fit_config() };
    let est = GibbsEstimator { config };
    let eval = spec.default_eval_times();
    let res = match replicate_study(&spec, 50, &est, &eval, 6, jobs()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    let b = res.get("beta[x1]").unwrap();
    outcome(
        only_missing_visit_failures(&res.failures) && b.bias.abs() <= 0.1 && (0.85..=1.0).contains(&b.cp),
        format!(
            "beta bias {:+.3}, RMSE {:.3}, CP {:.2} over {} fits ({} failed)",
            b.bias,
            b.rmse,
            b.cp,
            b.n,
            res.failures.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = ScenarioSpec::setting(3, 100).unwrap();
    let config = FitConfig { n_iter: 20_000, burn_in: 5_000, ..spec.default_fit_config() };
    let est = GibbsEstimator { config };
    let eval = [20.0, 40.0, 60.0, 80.0];
    let res = match replicate_study(&spec, 30, &est, &eval, 7, jobs()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("study failed: {e}")),
    };
    let mut pass = only_missing_visit_failures(&res.failures);
    let mut parts = Vec::new();
    for t in eval {
        let r = res.get(&format!("Lambda0({t})")).unwrap();
        pass &= r.bias.abs() <= 0.08 && (0.8..=1.0).contains(&r.cp);
        parts.push(format!("t={t}: bias {:+.3} CP {:.2}", r.bias, r.cp));
    }
    outcome(pass, format!("{} ({} failed)", parts.join("; "), res.failures.len()))
}

fn criterion_8() -> Outcome {
    let l = 10;
    let state = ModelState {
        gamma: vec![0.0],
        beta: vec![0.0],
        gamma0: 0.0,
        beta0: 0.0,
        z: Vec::new(),
        d: Sym2::new(1.0, 0.0, 0.0),
        g1: vec![0.0; l],
        g2: vec![0.0; l],
        sigma2: [1.0, 1.0],
        theta: [1.0, 1.0],
    };
    let chain = ChainOutput {
        draws: vec![state; 10],
        deviance: vec![0.0; 10],
        iterations: (0..10).collect(),
        acceptance: Acceptance { curve: [1.0, 1.0], theta: None, step_size: [0.1, 0.1] },
        runtime_secs: 0.0,
        seed: 0,
        config: FitConfig { grid_cells: l, ..FitConfig::default() },
        time_scale: 1.0,
        covariate_names: vec!["x1".to_string()],
        subject_ids: Vec::new(),
    };
    let req = PredictionRequest { n_draws_per_sample: 10_000, ..PredictionRequest::new(vec![0.7], (0.0, 1.0)) };
    let pred = predictive_counts(&chain, &req, 801).unwrap();
    let target = (-1.0f64).exp();
    let df = pred.disease_free;
    outcome(
        (df.probability - target).abs() <= 0.005 && (df.empirical - target).abs() <= 0.005,
        format!(
            "P(y=0) Rao-Blackwell {:.5}, empirical {:.5}, e^-1 = {target:.5}",
            df.probability, df.empirical
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = rng_from_seed(901);
    let (l1, l2) = (100, 200);
    let (g1, g2) = (GridSpec::new(l1).unwrap(), GridSpec::new(l2).unwrap());
    let mut ratios = Vec::new();
    for _ in 0..20 {
        let c0 = rng.random::<f64>() - 0.5;
        let amp = 0.5 + rng.random::<f64>();
        let freq = 1.0 + 2.0 * rng.random::<f64>();
        let phase = std::f64::consts::TAU * rng.random::<f64>();
        let curve = move |s: f64| c0 + amp * (std::f64::consts::TAU * freq * s + phase).sin();
        let on = |grid: &GridSpec| grid.cell_centers().iter().map(|&s| curve(s)).collect::<Vec<f64>>();
        let (v1, v2) = (on(&g1), on(&g2));
        let (mut e1, mut e2) = (0.0, 0.0);
        for _ in 0..400 {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            let (a, b) = if x < y { (x, y) } else { (y, x) };
            let exact = common::quad(|s| curve(s).exp(), a, b, 64);
            e1 += (integral_exp(&v1, &g1, a, b) - exact).abs();
            e2 += (integral_exp(&v2, &g2, a, b) - exact).abs();
        }
        ratios.push(e1 / e2);
    }
    let r = mean(&ratios);
    outcome(
        (1.8..=2.2).contains(&r),
        format!("mean error ratio L={l1} vs L={l2}: {r:.3} over 20 curves"),
    )
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = cli_pipeline(a.path()).and_then(|_| cli_pipeline(b.path())) {
        return outcome(false, e);
    }
    let fa = collect_files(a.path());
    let fb = collect_files(b.path());
    let differing: Vec<&PathBuf> = fa
        .iter()
        .filter(|(k, v)| fb.get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    outcome(
        fa.len() == fb.len() && differing.is_empty() && fa.len() >= 15,
        format!("{} files compared, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn cli_pipeline(root: &Path) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let run = |args: Vec<String>| -> Result<(), String> {
        let mut full = vec!["pcox".to_string()];
        full.extend(args.iter().cloned());
        match pcox::cli::run(full) {
            0 => Ok(()),
            code => Err(format!("`pcox {}` exited with {code}", args.join(" "))),
        }
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    run(s(&["simulate", "--setting", "2", "--n", "30", "--seed", "5", "--out", &p("sim")]))?;
    run(s(&[
        "fit", "--events", &p("sim/events.csv"), "--covars", &p("sim/covariates.csv"),
        "--n-iter", "300", "--burn-in", "100", "--grid-cells", "20", "--seed", "9", "--out", &p("fit"),
    ]))?;
    run(s(&[
        "fit", "--events", &p("sim/events.csv"), "--covars", &p("sim/covariates.csv"),
        "--n-iter", "150", "--burn-in", "50", "--grid-cells", "10", "--n-chains", "2",
        "--curve-sampler", "ess", "--seed", "9", "--out", &p("fit2"),
    ]))?;
    run(s(&["predict", "--chain", &p("fit"), "--x", "0.5", "--window", "10,40", "--seed", "3", "--out", &p("pred")]))?;
    run(s(&["diagnose", "--chain", &p("fit"), "--out", &p("diag")]))?;
    run(s(&[
        "study", "--setting", "2", "--n", "20", "--replicates", "2", "--n-iter", "120", "--burn-in", "40",
        "--grid-cells", "10", "--jobs", "2", "--seed", "4", "--out", &p("study"),
    ]))?;
    run(s(&["bench-samplers", "--setting", "2", "--n", "20", "--iters", "20", "--grid-cells", "10", "--out", &p("bench")]))?;
    Ok(())
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
