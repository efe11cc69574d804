use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use penreg::compat::{compatibility_factor, re_constant, ConeSpec, SearchBudget};
use penreg::harness::{
    emit_report, report_csv, report_json, run_certify, run_coverage, run_event_probability, with_threads, ExperimentConfig,
    ExperimentReport, LambdaChoice, OutputFormat,
};
use penreg::model::{generate_instance, load_design, load_vector, save_vector, DesignOperator, Instance, Shape};
use penreg::numeric::RngStream;
use penreg::penalties::{PenaltyKind, PenaltySpec, SupportProjector};
use penreg::smallball::{
    estimate_small_ball, mean_width, min_sample_size, moment_ratio_l, smallball_params_from_l, ConeSection, SampleDims,
    Sampler, WidthSet,
};
use penreg::solver::{solve_penalized_ls, SolveOptions};
use penreg::tuning::{tune, LambdaRule};
use penreg::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "penreg", version, about = "Penalized least squares, tuning and oracle-inequality experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Experiment configuration (JSON, kebab-case keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Absolute constant override, e.g. `C=2`; repeatable.
    #[arg(long = "override-constant", global = true, value_name = "NAME=VALUE")]
    override_constant: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Law {
    Gaussian,
    Rademacher,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum WidthKind {
    Ball2,
    Section,
    PenaltyBall,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Pen {
    L1,
    Nuclear,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one instance: a design CSV plus response CSV, or a config draw.
    Solve {
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        response: Option<PathBuf>,
        /// Explicit λ; otherwise 10·τ′ with --sigma.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// τ′ and λ for a design.
    Tune {
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Use the random-design rule with this `a`.
        #[arg(long)]
        random_design: Option<f64>,
    },
    /// Compatibility factor and restricted eigenvalue for a support.
    Compat {
        #[arg(long)]
        design: Option<PathBuf>,
        /// Active coordinates (L1) or active groups, comma separated.
        #[arg(long, value_delimiter = ',')]
        support: Vec<usize>,
        #[arg(long, default_value_t = 4.0)]
        c0: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Small-ball constants, moment ratio and the sample-size condition.
    Smallball {
        #[arg(long, value_enum, default_value_t = Law::Gaussian)]
        law: Law,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        directions: usize,
        #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
        beta0: f64,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 4.0)]
        c0: f64,
    },
    /// Gaussian mean width of a ball or cone section.
    Width {
        #[arg(long, value_enum, default_value_t = WidthKind::Ball2)]
        set: WidthKind,
        #[arg(long, value_enum, default_value_t = Pen::L1)]
        penalty: Pen,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 0.0)]
        c0: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Coverage of the oracle inequalities (needs --config).
    Coverage,
    /// Probability of the noise event {statistic ≤ τ′} (needs --config).
    EventProb,
    /// Certificate gaps over trials and probes (needs --config).
    Certify,
}

fn parse_overrides(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in items {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--override-constant expects NAME=VALUE, got {item:?}")))?;
        let v: f64 = value.trim().parse().map_err(|_| Error::Usage(format!("bad constant value in {item:?}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Usage(format!("constant {name} must be positive")));
        }
        out.insert(name.trim().to_string(), v);
    }
    Ok(out)
}

fn load_config(g: &Global) -> Result<Option<ExperimentConfig>> {
    let Some(path) = &g.config else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.threads = Some(t);
    }
    if let Some(f) = g.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if let Some(o) = &g.out {
        cfg.output = Some(o.clone());
    }
    cfg.constants.extend(parse_overrides(&g.override_constant)?);
    cfg.validate()?;
    Ok(Some(cfg))
}

fn require_config(g: &Global) -> Result<ExperimentConfig> {
    load_config(g)?.ok_or_else(|| Error::Usage("this subcommand needs --config <path.json>".into()))
}

fn write_json<S: Serialize>(value: &S, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit(report: &ExperimentReport) -> Result<()> {
    let cfg = &report.config;
    match &cfg.output {
        Some(path) => {
            emit_report(report, path, cfg.format)?;
            // both sides of every inequality, for the terminal
            eprintln!("{}", serde_json::to_string_pretty(&report.aggregates)?);
            eprintln!("wall time: {:.3}s", report.wall_time_secs);
        }
        None => {
            let bytes = match cfg.format {
                OutputFormat::Csv => report_csv(report)?,
                OutputFormat::Json => report_json(report)?,
            };
            print!("{}", String::from_utf8_lossy(&bytes));
            if cfg.format == OutputFormat::Csv {
                eprintln!("{}", serde_json::to_string_pretty(&report.aggregates)?);
            }
        }
    }
    Ok(())
}

/// Design from a CSV (with sidecar) or drawn from the config.
fn obtain_instance(g: &Global, design: &Option<PathBuf>, response: &Option<PathBuf>) -> Result<(Instance<f64>, Option<ExperimentConfig>)> {
    if let Some(path) = design {
        let d = load_design(path)?;
        let inst = match response {
            Some(r) => Instance::from_observations(d, load_vector(r)?)?,
            None => Instance::from_observations(d.clone(), vec![0.0; d.n()])?,
        };
        return Ok((inst, load_config(g)?));
    }
    let cfg = require_config(g)?;
    let spec_cfg = cfg.clone();
    let inst = instance_from_config(&spec_cfg)?;
    Ok((inst, Some(cfg)))
}

fn instance_from_config(cfg: &ExperimentConfig) -> Result<Instance<f64>> {
    use penreg::harness::DesignChoice;
    use penreg::model::{DesignLaw, InstanceSpec};
    let spec = InstanceSpec {
        law: match cfg.design {
            DesignChoice::OrthonormalGaussian => DesignLaw::OrthonormalGaussian,
            DesignChoice::Gaussian => DesignLaw::Gaussian,
        },
        n: cfg.n,
        shape: cfg.shape()?,
        sparsity: cfg.sparsity,
        amplitude: cfg.amplitude,
        sigma: cfg.sigma,
    };
    generate_instance(&RngStream::new(cfg.seed, 0), &spec)
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct SolveSummary {
    penalty: &'static str,
    lambda: f64,
    objective: f64,
    iters: usize,
    converged: bool,
    certificate_slack: f64,
    fixed_point_residual: f64,
    beta_hat: Vec<f64>,
}

fn cmd_solve(g: &Global, design: &Option<PathBuf>, response: &Option<PathBuf>, lambda: Option<f64>, sigma: f64, max_iters: Option<usize>) -> Result<()> {
    if design.is_some() && response.is_none() {
        return Err(Error::Usage("--design needs --response".into()));
    }
    let (inst, cfg) = obtain_instance(g, design, response)?;
    let kind = inst.design.shape().natural_penalty();
    let sigma = cfg.as_ref().filter(|_| design.is_none()).map_or(sigma, |c| c.sigma);
    let lambda = match (lambda, cfg.as_ref().map(|c| c.lambda_rule)) {
        (Some(l), _) => l,
        (None, Some(LambdaChoice::Explicit(v))) => v,
        _ => tune(&inst.design, &kind, sigma, LambdaRule::Deterministic, &RngStream::new(g.seed.unwrap_or(0), 3))?.lambda,
    };
    let penalty = PenaltySpec::new(kind.clone(), lambda)?;
    let mut opts = SolveOptions::default();
    if let Some(m) = max_iters.or(cfg.as_ref().and_then(|c| c.max_iters)) {
        opts.max_iters = m;
    }
    let sol = solve_penalized_ls(&inst, &penalty, &opts)?;
    let summary = SolveSummary {
        penalty: kind.name(),
        lambda,
        objective: sol.objective,
        iters: sol.iters,
        converged: sol.converged,
        certificate_slack: sol.certificate_slack,
        fixed_point_residual: sol.fixed_point_residual,
        beta_hat: sol.beta_hat.clone(),
    };
    match (&g.out, g.format) {
        (Some(path), Some(Format::Csv)) => save_vector(&sol.beta_hat, path)?,
        (out, _) => write_json(&summary, out.as_deref())?,
    }
    if !sol.converged {
        return Err(Error::Numerical(format!("solver stopped after {} iterations without converging", sol.iters)));
    }
    Ok(())
}

fn cmd_tune(g: &Global, design: &Option<PathBuf>, sigma: f64, random_design: Option<f64>) -> Result<()> {
    let (inst, _) = obtain_instance(g, design, &None)?;
    let kind = inst.design.shape().natural_penalty();
    let rule = random_design.map_or(LambdaRule::Deterministic, LambdaRule::RandomDesign);
    let report = tune(&inst.design, &kind, sigma, rule, &RngStream::new(g.seed.unwrap_or(0), 3))?;
    write_json(&report, g.out.as_deref())
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct CompatSummary {
    mu_lower: f64,
    mu_exact: Option<f64>,
    infinite: bool,
    method: penreg::compat::CompatMethod,
    kappa_squared: Option<f64>,
    re_route: Option<f64>,
    re_route_note: &'static str,
}

fn cmd_compat(g: &Global, design: &Option<PathBuf>, support: &[usize], c0: f64, samples: usize) -> Result<()> {
    let (inst, _) = obtain_instance(g, design, &None)?;
    let d: &DesignOperator<f64> = &inst.design;
    let (kind, proj) = match d.shape() {
        Shape::Vector { p } => (PenaltyKind::L1, SupportProjector::coordinates(*p, support)?),
        Shape::Grouped(gr) => (PenaltyKind::Group(gr.clone()), SupportProjector::blocks(gr.clone(), support)?),
        Shape::Matrix { .. } => return Err(Error::Unsupported("compat from the CLI takes vector or grouped designs".into())),
    };
    let cone = ConeSpec::new(kind, proj, c0)?;
    let budget = SearchBudget { samples, ..Default::default() };
    let stream = RngStream::new(g.seed.unwrap_or(0), 4);
    let est = with_threads(g.threads, || compatibility_factor(d, &cone, &budget, &stream))??;
    let kappa = if support.is_empty() { None } else { Some(re_constant(d, &cone, &budget, &stream.child(9))?) };
    write_json(
        &CompatSummary {
            mu_lower: est.lower,
            mu_exact: est.upper,
            infinite: est.infinite,
            method: est.method,
            kappa_squared: kappa,
            re_route: est.re_route,
            re_route_note: "sqrt(s)/kappa is indicative only, not an upper bound",
        },
        g.out.as_deref(),
    )
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct SmallballSummary {
    small_ball_frequency: f64,
    beta0: f64,
    moment_ratio_l: f64,
    isotropy_deviation: f64,
    derived_beta0: f64,
    derived_kappa0: f64,
    paley_zygmund_floor: f64,
    min_sample_size: usize,
    constant: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_smallball(g: &Global, law: Law, dim: usize, samples: usize, directions: usize, beta0: f64, s: usize, c0: f64) -> Result<()> {
    if dim == 0 || samples == 0 {
        return Err(Error::Usage("--dim and --samples must be positive".into()));
    }
    let constants = parse_overrides(&g.override_constant)?;
    let constant = constants.get("C").copied().unwrap_or(1.0);
    let sampler = match law {
        Law::Gaussian => Sampler::gaussian(dim),
        Law::Rademacher => Sampler::rademacher(dim),
    };
    let seed = g.seed.unwrap_or(0);
    let freq = estimate_small_ball(&sampler, beta0, directions, samples, &RngStream::new(seed, 5))?;
    let mr = moment_ratio_l(&sampler, directions, samples, &RngStream::new(seed, 6))?;
    let params = smallball_params_from_l(mr.l)?;
    let n = min_sample_size(SampleDims::L1 { p: dim as f64 }, s, c0, &params, constant)?;
    write_json(
        &SmallballSummary {
            small_ball_frequency: freq,
            beta0,
            moment_ratio_l: mr.l,
            isotropy_deviation: mr.isotropy_deviation,
            derived_beta0: params.beta0,
            derived_kappa0: params.kappa0,
            paley_zygmund_floor: (1.0 - beta0 * beta0).powi(2) / (16.0 * mr.l.powi(4)),
            min_sample_size: n,
            constant,
        },
        g.out.as_deref(),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_width(g: &Global, set: WidthKind, penalty: Pen, dim: usize, k: Option<usize>, m: Option<usize>, s: usize, c0: f64, trials: usize) -> Result<()> {
    let (kind, dim) = match (penalty, k, m) {
        (Pen::Nuclear, Some(k), Some(m)) => (PenaltyKind::Nuclear { k, m }, k * m),
        (Pen::Nuclear, _, _) => return Err(Error::Usage("the nuclear penalty needs --k and --m".into())),
        (Pen::L1, _, _) => (PenaltyKind::L1, dim),
    };
    let ws = match set {
        WidthKind::Ball2 => WidthSet::Ball2 { dim },
        WidthKind::PenaltyBall => WidthSet::PenaltyBall { kind, dim },
        WidthKind::Section => WidthSet::Section(ConeSection::new(kind, dim, s, c0)?),
    };
    let stream = RngStream::new(g.seed.unwrap_or(0), 7);
    let est = with_threads(g.threads, || mean_width(&stream, &ws, trials))??;
    write_json(&est, g.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    parse_overrides(&g.override_constant)?;
    match &cli.command {
        Command::Solve { design, response, lambda, sigma, max_iters } => cmd_solve(g, design, response, *lambda, *sigma, *max_iters),
        Command::Tune { design, sigma, random_design } => cmd_tune(g, design, *sigma, *random_design),
        Command::Compat { design, support, c0, samples } => cmd_compat(g, design, support, *c0, *samples),
        Command::Smallball { law, dim, samples, directions, beta0, s, c0 } => {
            cmd_smallball(g, *law, *dim, *samples, *directions, *beta0, *s, *c0)
        }
        Command::Width { set, penalty, dim, k, m, s, c0, trials } => cmd_width(g, *set, *penalty, *dim, *k, *m, *s, *c0, *trials),
        Command::Coverage => emit(&run_coverage(&require_config(g)?)?),
        Command::EventProb => emit(&run_event_probability(&require_config(g)?)?),
        Command::Certify => {
            let cfg = require_config(g)?;
            let report = run_certify(&cfg)?;
            emit(&report)?;
            let gap = report.aggregates.min_cert_gap.unwrap_or(0.0);
            if gap < -1e-6 && cfg.max_iters.is_none() {
                return Err(Error::Numerical(format!("certificate violated: min gap {gap:e}")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("penreg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
