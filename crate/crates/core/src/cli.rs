//! The `pcox` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::conditionals::{ModelData, ModelState};
use crate::data::{load_dataset, write_dataset};
use crate::engine::{
    config_hash, diagnostics, dic, pool_chains, read_chains, run_chains, summarize, write_chains,
    write_curves, CurveSampler, FitConfig, ScalarDiagnostics,
};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Process};
use crate::kernels::GramFactor;
use crate::predict::{predictive_counts, write_prediction, PredictionRequest};
use crate::rng::{derive_seed, rng_from_seed};
use crate::samplers::ess::ess_step;
use crate::samplers::hmc::{hmc_step, DualAveraging};
use crate::simulate::{replicate_study, simulate_dataset, write_study, GammaParam, GibbsEstimator, ScenarioSpec};

const FIT_CONFIG_KEYS: &str = "\
Config file (JSON, unknown keys rejected; every key optional):
  n_iter, burn_in, thin          sweep counts (burn_in < n_iter, thin >= 1)
  grid_cells                     number of grid cells L (>= 2)
  nu                             [nu1, nu2], each 0.5, 1.5 or 2.5
  priors.k0, priors.v0           inverse-Wishart prior of D (v0 = {d11, d12, d22})
  priors.a0, priors.b0           inverse-gamma prior of sigma^2
  priors.theta_prior             [{shape, rate}, {shape, rate}] in study time units
  priors.coef_prior_var          optional N(0, v) prior on gamma, beta
  priors.intercept_prior_var     optional N(0, v) prior on gamma0, beta0
  hmc.step_size, hmc.n_leapfrog, hmc.target_accept, hmc.adapt_iters, hmc.step_jitter
  curve_sampler                  \"hmc\" or \"ess\"
  n_chains, seed, random_init
  fixed_theta                    [theta1, theta2] in study time units, or null
  theta_lower, theta_tail        length-scale support for ARMS";

#[derive(Debug, Parser)]
#[command(name = "pcox", version, about = "Panel count data with an informative observation process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from a built-in setting or a scenario file.
    Simulate(SimulateArgs),
    /// Fit the model by MCMC and write the chain, summary and curves.
    #[command(after_help = FIT_CONFIG_KEYS)]
    Fit(FitArgs),
    /// Posterior predictive recurrence counts for a new subject.
    Predict(PredictArgs),
    /// Convergence diagnostics of a stored chain.
    Diagnose(DiagnoseArgs),
    /// Replication study: simulate, fit and aggregate bias, RMSE and coverage.
    #[command(after_help = FIT_CONFIG_KEYS)]
    Study(StudyArgs),
    /// Compare HMC and elliptical slice sampling on the event-curve conditional.
    BenchSamplers(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GammaParamArg {
    ShapeRate,
    ShapeScale,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Built-in simulation setting.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), conflicts_with = "scenario")]
    setting: Option<u8>,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of subjects (overrides the scenario).
    #[arg(long)]
    n: Option<usize>,
    /// Gamma parameterization of the setting 1 frailties.
    #[arg(long, value_enum)]
    gamma_param: Option<GammaParamArg>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioSpec> {
        let mut spec = match (&self.setting, &self.scenario) {
            (Some(k), None) => ScenarioSpec::setting(*k, 100)?,
            (None, Some(p)) => serde_json::from_str(&read(p)?)?,
            _ => return Err(Error::validation("one of --setting or --scenario is required")),
        };
        if let Some(n) = self.n {
            spec.n = n;
        }
        if let Some(gp) = self.gamma_param {
            if let crate::simulate::FrailtyModel::LinkedGamma { param, .. } = &mut spec.frailty {
                *param = match gp {
                    GammaParamArg::ShapeRate => GammaParam::ShapeRate,
                    GammaParamArg::ShapeScale => GammaParam::ShapeScale,
                };
            } else {
                return Err(Error::validation("--gamma-param applies only to linked gamma frailties"));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitOverrides {
    /// FitConfig JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    grid_cells: Option<usize>,
    #[arg(long)]
    n_chains: Option<usize>,
    /// Fixed length-scales "theta1,theta2" in study time units.
    #[arg(long)]
    fixed_theta: Option<String>,
    #[arg(long, value_enum)]
    curve_sampler: Option<SamplerArg>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    Hmc,
    Ess,
}

impl FitOverrides {
    fn resolve(&self, base: FitConfig) -> Result<FitConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => base,
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.n_iter {
            cfg.n_iter = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = self.thin {
            cfg.thin = v;
        }
        if let Some(v) = self.grid_cells {
            cfg.grid_cells = v;
        }
        if let Some(v) = self.n_chains {
            cfg.n_chains = v;
        }
        if let Some(s) = &self.fixed_theta {
            let v = parse_list(s, "fixed_theta")?;
            if v.len() != 2 {
                return Err(Error::validation("fixed_theta needs two values"));
            }
            cfg.fixed_theta = Some([v[0], v[1]]);
        }
        if let Some(s) = self.curve_sampler {
            cfg.curve_sampler = match s {
                SamplerArg::Hmc => CurveSampler::Hmc,
                SamplerArg::Ess => CurveSampler::Ess,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Long-format events CSV (id, time, count).
    #[arg(long, required_unless_present = "print_config")]
    events: Option<PathBuf>,
    /// Covariates CSV (id, covariates...).
    #[arg(long, required_unless_present = "print_config")]
    covars: Option<PathBuf>,
    #[command(flatten)]
    overrides: FitOverrides,
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    chain: PathBuf,
    /// Covariates of the new subject, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Window "a,b" in original time units.
    #[arg(long)]
    window: String,
    #[arg(long, default_value_t = 1)]
    draws_per_sample: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Evaluation times of the rescaled cumulative baseline, comma separated.
    #[arg(long)]
    eval_times: Option<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    overrides: FitOverrides,
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// HMC iterations; elliptical slice gets the same number of likelihood evaluations.
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    grid_cells: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::validation(format!("cannot read {}: {e}", p.display())))
}

fn parse_list(s: &str, field: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("{field}: cannot parse '{v}' as a number")))
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 for invalid input, 2 for runtime
/// or numerical failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Study(a) => cmd_study(a),
        Command::BenchSamplers(a) => cmd_bench(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.scenario.load()?;
    let mut rng = rng_from_seed(a.seed);
    let (data, truth) = simulate_dataset(&spec, &mut rng)?;
    fs::create_dir_all(&a.out)?;
    write_dataset(&data, &a.out.join("events.csv"), &a.out.join("covariates.csv"))?;
    write_json(&a.out.join("truth.json"), &truth)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    seed: u64,
    config_hash: String,
    #[serde(flatten)]
    summary: &'a crate::engine::PosteriorSummary,
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = a.overrides.resolve(FitConfig::default())?;
    if a.overrides.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let (events, covars, out) = (a.events.unwrap(), a.covars.unwrap(), a.out.unwrap());
    let data = load_dataset(&events, &covars)?;
    let start = Instant::now();
    let chains = run_chains(&data, &cfg)?;
    eprintln!("fit: {} chain(s) in {:.1} s", chains.len(), start.elapsed().as_secs_f64());
    write_chains(&out, &chains)?;
    let pooled = pool_chains(&chains)?;
    let mut summary = summarize(&pooled)?;
    let md = ModelData::new(&data, GridSpec::new(cfg.grid_cells)?);
    summary.dic = Some(dic(&pooled, &md));
    write_curves(&out, &summary)?;
    let report = FitReport { seed: cfg.seed, config_hash: config_hash(&cfg), summary: &summary };
    write_json(&out.join("summary.json"), &report)?;
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let chains = read_chains(&a.chain)?;
    let chain = pool_chains(&chains)?;
    let x = parse_list(&a.x, "x")?;
    let w = parse_list(&a.window, "window")?;
    if w.len() != 2 {
        return Err(Error::validation("window needs two values a,b"));
    }
    let req = PredictionRequest { x_new: x, window: (w[0], w[1]), n_draws_per_sample: a.draws_per_sample };
    let pred = predictive_counts(&chain, &req, a.seed)?;
    write_prediction(&a.out, &pred)
}

#[derive(Serialize)]
struct DiagnosticsReport {
    chains: Vec<Vec<ScalarDiagnostics>>,
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let chains = read_chains(&a.chain)?;
    if let Some(c) = chains.iter().find(|c| c.n_draws() < 100) {
        return Err(Error::validation(format!(
            "diagnostics need at least 100 stored draws, chain has {}",
            c.n_draws()
        )));
    }
    fs::create_dir_all(&a.out)?;
    let report = DiagnosticsReport { chains: chains.iter().map(diagnostics).collect() };
    write_json(&a.out.join("diagnostics.json"), &report)
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let spec = a.scenario.load()?;
    let cfg = a.overrides.resolve(spec.default_fit_config())?;
    if a.overrides.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let out = a.out.unwrap();
    let eval_times = match &a.eval_times {
        Some(s) => parse_list(s, "eval_times")?,
        None => spec.default_eval_times(),
    };
    let est = GibbsEstimator { config: cfg.clone() };
    let start = Instant::now();
    let result = replicate_study(&spec, a.replicates, &est, &eval_times, cfg.seed, a.jobs)?;
    eprintln!(
        "study: {} replicates ({} failed) in {:.1} s",
        a.replicates,
        result.failures.len(),
        start.elapsed().as_secs_f64()
    );
    write_study(&out, &result)
}

/// Blocks other than the event curve are held at the simulation truth.
fn bench_state(data: &ModelData, spec: &ScenarioSpec, truth: &crate::simulate::Truth) -> ModelState {
    let l = data.grid.len();
    let level = spec.lambda0.integral(0.0, data.time_scale).ln();
    let obs_level = spec.mu0.integral(0.0, data.time_scale).ln();
    ModelState {
        gamma: truth.gamma.clone(),
        beta: truth.beta.clone(),
        gamma0: obs_level,
        beta0: level,
        z: truth.frailties.iter().map(|u| [u[0].ln(), u[1].ln()]).collect(),
        d: crate::conditionals::Sym2::identity(),
        g1: vec![obs_level; l],
        g2: vec![level; l],
        sigma2: [1.0, 1.0],
        theta: spec.default_fit_config().fixed_theta.unwrap_or([4.0, 4.0]),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let spec = a.scenario.load()?;
    let (data, truth) = simulate_dataset(&spec, &mut rng_from_seed(derive_seed(a.seed, 1, 0)))?;
    let cfg = spec.default_fit_config();
    let md = ModelData::new(&data, GridSpec::new(a.grid_cells)?);
    let state = bench_state(&md, &spec, &truth);
    let corr = crate::engine::correlation_factor(
        &md.grid.cell_centers(),
        cfg.nu[1],
        state.theta[1],
        md.time_scale,
    )?;
    let cov: GramFactor = corr.scaled(state.sigma2[1]);
    let target = crate::conditionals::CurveTarget::new(Process::Event, &state, &md, &cov);
    let mut rows: Vec<(String, usize, usize, f64)> = Vec::new();

    let mut rng = rng_from_seed(derive_seed(a.seed, 2, 0));
    let mut g = state.g2.clone();
    let mut da = DualAveraging::new(cfg.hmc.step_size, cfg.hmc.target_accept);
    let adapt = a.iters / 10;
    let mut evals = 0;
    let f = |x: &[f64]| target.logpdf_grad(x);
    rows.push(("hmc".into(), 0, 0, target.logpdf_grad(&g).0));
    for it in 1..=a.iters {
        let eps = if it <= adapt { da.current() } else { da.final_step() };
        let outc = hmc_step(&g, &f, &cfg.hmc, eps, &cov, &mut rng);
        if it <= adapt {
            da.update(outc.accept_prob);
        }
        evals += outc.evals;
        g = outc.position;
        rows.push(("hmc".into(), it, evals, outc.logpdf));
    }
    let budget = evals;

    let mut rng = rng_from_seed(derive_seed(a.seed, 3, 0));
    let mut g = state.g2.clone();
    let mean = vec![state.beta0; g.len()];
    let mut ll = target.data_loglik(&g);
    let mut used = 0;
    let mut it = 0;
    rows.push(("ess".into(), 0, 0, target.logpdf_grad(&g).0));
    while used < budget {
        it += 1;
        let outc = ess_step(&g, ll, |x: &[f64]| target.data_loglik(x), &mean, &cov, &mut rng);
        used += outc.evals;
        g = outc.position;
        ll = outc.loglik;
        rows.push(("ess".into(), it, used, target.logpdf_grad(&g).0));
    }

    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("bench.csv"))?;
    w.write_record(["sampler", "iter", "evals", "log_posterior"])?;
    for (s, i, e, lp) in rows {
        w.write_record([s, i.to_string(), e.to_string(), lp.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
