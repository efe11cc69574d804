//! Monte Carlo experiments: coverage of the oracle inequalities, the
//! probability of the noise event, and certificate checks, with CSV/JSON
//! reports that are a pure function of (config, seed).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimation_rhs_deviation, oracle_rhs_deviation, oracle_rhs_expectation, BoundInputs, MuSource};
use crate::compat::{analytic_orthonormal_mu, compatibility_factor, mu_upper_bound_smallball, ConeSpec, SearchBudget};
use crate::error::{Error, Result};
use crate::model::{dual_norm_statistic, empirical_norm, format_real, generate_instance, DesignLaw, Groups, Instance, InstanceSpec, Shape};
use crate::numeric::{gauss_sample, sub, RngStream};
use crate::penalties::{default_zero_tol, support_of, PenaltyKind, PenaltySpec};
use crate::solver::{certificate_gap, solve_penalized_ls, SolveOptions};
use crate::tuning::{max_column_norm, tune, LambdaRule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyChoice {
    #[default]
    L1,
    Group,
    Nuclear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignChoice {
    /// Gaussian columns orthonormalised so that 𝕏ᵀ𝕏 = n·I.
    #[default]
    OrthonormalGaussian,
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaChoice {
    /// λ = 10·τ′.
    #[default]
    #[serde(rename = "deterministic-10tau")]
    Deterministic10Tau,
    RandomDesign(f64),
    Explicit(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_trials() -> usize {
    100
}
fn default_c0() -> f64 {
    4.0
}
fn default_amplitude() -> f64 {
    10.0
}
fn default_probes() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub penalty: PenaltyChoice,
    pub n: usize,
    /// Vector dimension (L1).
    #[serde(default)]
    pub p: Option<usize>,
    /// Number of groups M and group size T (group penalty).
    #[serde(default)]
    pub groups: Option<usize>,
    #[serde(default)]
    pub group_size: Option<usize>,
    /// Matrix shape (nuclear penalty).
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    /// Active coordinates, active groups or rank.
    pub sparsity: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub lambda_rule: LambdaChoice,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu_source: MuSource,
    #[serde(default)]
    pub design: DesignChoice,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Cone constant of the compatibility factor μ_{c₀} entering the bounds.
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// β-probes per trial in certificate runs.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Solver iteration cap; small values give the truncated-solver control.
    #[serde(default)]
    pub max_iters: Option<usize>,
    // Run-local settings below are not written into reports.
    #[serde(default, skip_serializing)]
    pub output: Option<std::path::PathBuf>,
    #[serde(default, skip_serializing)]
    pub format: OutputFormat,
    /// Worker threads; `None` uses the global pool.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    /// Values of the unnamed absolute constants, all defaulting to 1.
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    /// A config with defaults for everything except shape and sparsity.
    pub fn new(penalty: PenaltyChoice, n: usize, sparsity: usize) -> Self {
        ExperimentConfig {
            penalty,
            n,
            p: None,
            groups: None,
            group_size: None,
            k: None,
            m: None,
            sparsity,
            sigma: default_sigma(),
            delta: default_delta(),
            lambda_rule: LambdaChoice::default(),
            trials: default_trials(),
            seed: 0,
            mu_source: MuSource::default(),
            design: DesignChoice::default(),
            amplitude: default_amplitude(),
            c0: default_c0(),
            probes: default_probes(),
            max_iters: None,
            output: None,
            format: OutputFormat::default(),
            threads: None,
            constants: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn constant(&self, name: &str) -> f64 {
        self.constants.get(name).copied().unwrap_or(1.0)
    }

    pub fn shape(&self) -> Result<Shape> {
        let need = |v: Option<usize>, name: &str| {
            v.filter(|&x| x > 0).ok_or_else(|| Error::Config(format!("{name} must be given and positive for this penalty")))
        };
        Ok(match self.penalty {
            PenaltyChoice::L1 => Shape::Vector { p: need(self.p, "p")? },
            PenaltyChoice::Group => {
                Shape::Grouped(Groups::equal(need(self.groups, "groups")?, need(self.group_size, "group-size")?)?)
            }
            PenaltyChoice::Nuclear => Shape::Matrix { k: need(self.k, "k")?, m: need(self.m, "m")? },
        })
    }

    pub fn kind(&self) -> Result<PenaltyKind> {
        Ok(self.shape()?.natural_penalty())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !self.amplitude.is_finite() {
            return bad("sigma must be finite and nonnegative and amplitude finite".into());
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return bad(format!("c0 must be positive, got {}", self.c0));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.constants.values().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("override constants must be positive".into());
        }
        match self.lambda_rule {
            LambdaChoice::Explicit(v) if !(v >= 0.0 && v.is_finite()) => return bad(format!("explicit lambda {v} is invalid")),
            LambdaChoice::RandomDesign(a) if !(a > 0.0 && a.is_finite()) => return bad(format!("random-design a = {a} is invalid")),
            _ => {}
        }
        let shape = self.shape()?;
        let max_s = match &shape {
            Shape::Vector { p } => *p,
            Shape::Grouped(g) => g.len(),
            Shape::Matrix { k, m } => (*k).min(*m),
        };
        if self.sparsity > max_s {
            return bad(format!("sparsity {} exceeds {max_s}", self.sparsity));
        }
        if self.design == DesignChoice::OrthonormalGaussian && self.n < shape.dim() {
            return bad(format!("an orthonormal design needs n >= {}", shape.dim()));
        }
        Ok(())
    }

    // Only coverage runs use μ, so this is not part of `validate`.
    fn validate_mu_source(&self) -> Result<()> {
        if self.mu_source == MuSource::AnalyticOrthonormal && self.design != DesignChoice::OrthonormalGaussian {
            return Err(Error::Config("analytic-orthonormal mu needs the orthonormal-gaussian design".into()));
        }
        Ok(())
    }

    fn instance_spec(&self) -> Result<InstanceSpec<f64>> {
        Ok(InstanceSpec {
            law: match self.design {
                DesignChoice::OrthonormalGaussian => DesignLaw::OrthonormalGaussian,
                DesignChoice::Gaussian => DesignLaw::Gaussian,
            },
            n: self.n,
            shape: self.shape()?,
            sparsity: self.sparsity,
            amplitude: self.amplitude,
            sigma: self.sigma,
        })
    }

    fn solve_options(&self) -> SolveOptions<f64> {
        let mut o = SolveOptions::default();
        if let Some(m) = self.max_iters {
            o.max_iters = m;
        }
        o
    }
}

/// One Monte Carlo trial. Columns that do not apply to a run are empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrialRow {
    pub trial: usize,
    pub converged: bool,
    pub lambda: Option<f64>,
    pub pred_lhs: Option<f64>,
    pub pred_rhs: Option<f64>,
    pub estim_lhs: Option<f64>,
    pub estim_rhs: Option<f64>,
    pub cert_min_gap: Option<f64>,
    /// Dual-norm noise statistic and whether it is ≤ τ′.
    pub statistic: Option<f64>,
    pub event: Option<bool>,
    /// max_j ‖𝕏e_j‖ₙ ≤ 2 (L1 designs).
    pub column_event: Option<bool>,
}

pub const CSV_HEADER: [&str; 11] = [
    "trial",
    "converged",
    "lambda",
    "pred_lhs",
    "pred_rhs",
    "estim_lhs",
    "estim_rhs",
    "cert_min_gap",
    "statistic",
    "event",
    "column_event",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Coverage,
    EventProbability,
    Certify,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Aggregates {
    pub trials: usize,
    /// Non-converged trials, excluded from rates.
    pub flagged: usize,
    pub pred_violation_rate: Option<f64>,
    pub estim_violation_rate: Option<f64>,
    /// δ + 3·√(δ(1−δ)/m) for m counted trials.
    pub violation_limit: Option<f64>,
    pub mean_pred_lhs: Option<f64>,
    pub pred_lhs_stderr: Option<f64>,
    pub expected_pred_rhs: Option<f64>,
    pub mean_estim_lhs: Option<f64>,
    pub estim_lhs_stderr: Option<f64>,
    pub expected_estim_rhs: Option<f64>,
    pub mu4: Option<f64>,
    pub mu_source: Option<MuSource>,
    /// False only when μ₄ is exact, i.e. the run is a true check.
    pub indicative: Option<bool>,
    /// τ′ (mean over trials when the design varies).
    pub tau_prime: Option<f64>,
    pub event_frequency: Option<f64>,
    pub event_stderr: Option<f64>,
    /// 1 − 2e^{−(2−log 5)(k+m)} for nuclear event runs.
    pub event_floor: Option<f64>,
    pub column_event_rate: Option<f64>,
    pub min_cert_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentReport {
    pub run: RunKind,
    pub config: ExperimentConfig,
    pub aggregates: Aggregates,
    pub rows: Vec<TrialRow>,
    /// Kept out of the files so identical seeds give identical bytes.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    pub fn pred_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.converged && lhs_exceeds(r.pred_lhs, r.pred_rhs)).count()
    }

    pub fn estim_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.converged && lhs_exceeds(r.estim_lhs, r.estim_rhs)).count()
    }
}

/// Relative slack absorbing solver tolerance and rounding when comparing a
/// left-hand side with its bound.
pub const VIOLATION_SLACK: f64 = 1e-9;

fn lhs_exceeds(lhs: Option<f64>, rhs: Option<f64>) -> bool {
    matches!((lhs, rhs), (Some(l), Some(r)) if l > r + VIOLATION_SLACK * r.abs().max(1.0))
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let e = crate::smallball::Estimate::from_values(values);
    (e.mean, e.stderr)
}

/// Runs `f` in a pool with `threads` workers, or the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn trial_stream(cfg: &ExperimentConfig, trial: usize) -> RngStream {
    RngStream::new(cfg.seed, 0).child(trial as u64)
}

fn choose_lambda(cfg: &ExperimentConfig, inst: &Instance<f64>, kind: &PenaltyKind, stream: &RngStream) -> Result<(f64, f64)> {
    let rule = match cfg.lambda_rule {
        LambdaChoice::RandomDesign(a) => LambdaRule::RandomDesign(a),
        _ => LambdaRule::Deterministic,
    };
    let report = tune(&inst.design, kind, cfg.sigma, rule, stream)?;
    let lambda = match cfg.lambda_rule {
        LambdaChoice::Explicit(v) => v,
        _ => report.lambda,
    };
    Ok((lambda, report.tau_prime))
}

/// μ₄(β*) from the configured source; `None` means infinite.
fn mu4_for(cfg: &ExperimentConfig, inst: &Instance<f64>, kind: &PenaltyKind, stream: &RngStream) -> Result<Option<f64>> {
    let beta_star = inst.beta_star.as_ref().expect("generated instances know beta*");
    let tol = default_zero_tol(kind, beta_star, 1e-8)?;
    let proj = support_of(kind, beta_star, tol)?;
    let s = proj.size();
    let cone = ConeSpec::new(kind.clone(), proj, cfg.c0)?;
    Ok(match cfg.mu_source {
        MuSource::AnalyticOrthonormal => Some(analytic_orthonormal_mu(&cone)),
        MuSource::Estimated => {
            let e = compatibility_factor(&inst.design, &cone, &SearchBudget { re_route: false, ..Default::default() }, stream)?;
            (!e.infinite).then_some(e.lower)
        }
        // Gaussian small-ball constants β₀ = 1/√2, κ₀ = 1/12.
        MuSource::SmallballBound => {
            if s == 0 {
                Some(0.0)
            } else {
                Some(mu_upper_bound_smallball(std::f64::consts::FRAC_1_SQRT_2, 1.0 / 12.0, s)?)
            }
        }
    })
}

struct CoverageTrial {
    row: TrialRow,
    exp_pred: f64,
    exp_estim: Option<f64>,
    tau_prime: f64,
}

fn coverage_trial(cfg: &ExperimentConfig, spec: &InstanceSpec<f64>, kind: &PenaltyKind, trial: usize) -> Result<CoverageTrial> {
    let stream = trial_stream(cfg, trial);
    let inst = generate_instance(&stream, spec)?;
    let (lambda, tau_prime) = choose_lambda(cfg, &inst, kind, &stream.child(3))?;
    let mu4 = mu4_for(cfg, &inst, kind, &stream.child(4))?;
    let penalty = PenaltySpec::new(kind.clone(), lambda)?;
    let sol = solve_penalized_ls(&inst, &penalty, &cfg.solve_options())?;

    let beta_star = inst.beta_star.as_ref().expect("generated");
    let pred = empirical_norm(&sub(&inst.design.apply(&sol.beta_hat)?, &inst.f))?;
    let estim = kind.norm(&sub(&sol.beta_hat, beta_star))?;
    let inputs = BoundInputs { lambda, mu4, mu_source: cfg.mu_source, sigma: cfg.sigma, n: cfg.n, delta: cfg.delta, bias: 0.0 };
    let pred_rhs = oracle_rhs_deviation(&inputs)?;
    let estim_rhs = if lambda > 0.0 { Some(estimation_rhs_deviation(&inputs)?) } else { None };
    let exp = oracle_rhs_expectation(&inputs)?;
    let statistic = dual_norm_statistic(&inst.design, &inst.noise, &penalty)?;
    let column_event = matches!(kind, PenaltyKind::L1).then(|| max_column_norm(&inst.design) <= 2.0);
    Ok(CoverageTrial {
        row: TrialRow {
            trial,
            converged: sol.converged,
            lambda: Some(lambda),
            pred_lhs: Some(pred * pred),
            pred_rhs: Some(pred_rhs),
            estim_lhs: Some(estim),
            estim_rhs,
            cert_min_gap: Some(sol.certificate_slack),
            statistic: Some(statistic),
            event: Some(statistic <= tau_prime),
            column_event,
        },
        exp_pred: exp.prediction,
        exp_estim: exp.estimation,
        tau_prime,
    })
}

fn check_flagged(flagged: usize, trials: usize) -> Result<()> {
    // more than 1% non-converged trials invalidates the run
    if flagged * 100 > trials {
        return Err(Error::Numerical(format!("{flagged} of {trials} trials did not converge")));
    }
    Ok(())
}

/// Coverage of the deviation and expectation inequalities at β = β*.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    cfg.validate_mu_source()?;
    let start = Instant::now();
    let spec = cfg.instance_spec()?;
    let kind = cfg.kind()?;
    let results: Vec<CoverageTrial> =
        with_threads(cfg.threads, || (0..cfg.trials).into_par_iter().map(|t| coverage_trial(cfg, &spec, &kind, t)).collect::<Result<Vec<_>>>())??;

    let ok: Vec<&CoverageTrial> = results.iter().filter(|r| r.row.converged).collect();
    let flagged = results.len() - ok.len();
    check_flagged(flagged, cfg.trials)?;
    let m = ok.len().max(1) as f64;
    let pred_lhs: Vec<f64> = ok.iter().map(|r| r.row.pred_lhs.unwrap()).collect();
    let estim_lhs: Vec<f64> = ok.iter().map(|r| r.row.estim_lhs.unwrap()).collect();
    let exp_pred: Vec<f64> = ok.iter().map(|r| r.exp_pred).collect();
    let exp_estim: Option<Vec<f64>> = ok.iter().map(|r| r.exp_estim).collect();
    let events: Vec<f64> = ok.iter().map(|r| if r.row.event == Some(true) { 1.0 } else { 0.0 }).collect();
    let col_events: Option<Vec<f64>> = ok.iter().map(|r| r.row.column_event.map(|b| if b { 1.0 } else { 0.0 })).collect();
    let (mp, sp) = mean_stderr(&pred_lhs);
    let (me, se) = mean_stderr(&estim_lhs);
    let (ev, evs) = mean_stderr(&events);
    let min_gap = ok.iter().map(|r| r.row.cert_min_gap.unwrap()).reduce(f64::min);
    let tau_mean = mean_stderr(&ok.iter().map(|r| r.tau_prime).collect::<Vec<_>>()).0;
    let rows: Vec<TrialRow> = results.into_iter().map(|r| r.row).collect();
    let mut report = ExperimentReport {
        run: RunKind::Coverage,
        config: cfg.clone(),
        aggregates: Aggregates::default(),
        rows,
        wall_time_secs: 0.0,
    };
    let mu4 = {
        let stream = trial_stream(cfg, 0);
        let inst = generate_instance(&stream, &spec)?;
        mu4_for(cfg, &inst, &kind, &stream.child(4))?
    };
    let a = &mut report.aggregates;
    a.trials = cfg.trials;
    a.flagged = flagged;
    a.violation_limit = Some(cfg.delta + 3.0 * (cfg.delta * (1.0 - cfg.delta) / m).sqrt());
    a.mean_pred_lhs = Some(mp);
    a.pred_lhs_stderr = Some(sp);
    a.expected_pred_rhs = Some(mean_stderr(&exp_pred).0);
    a.mean_estim_lhs = Some(me);
    a.estim_lhs_stderr = Some(se);
    a.expected_estim_rhs = exp_estim.map(|v| mean_stderr(&v).0);
    a.mu4 = Some(mu4.unwrap_or(f64::INFINITY));
    a.mu_source = Some(cfg.mu_source);
    a.indicative = Some(cfg.mu_source != MuSource::AnalyticOrthonormal);
    a.tau_prime = Some(tau_mean);
    a.event_frequency = Some(ev);
    a.event_stderr = Some(evs);
    a.column_event_rate = col_events.map(|v| mean_stderr(&v).0);
    a.min_cert_gap = min_gap;
    let pv = report.pred_violations() as f64 / m;
    let ev_rate = report.estim_violations() as f64 / m;
    report.aggregates.pred_violation_rate = Some(pv);
    report.aggregates.estim_violation_rate = Some(ev_rate);
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Frequency of {dual_norm_statistic ≤ τ′} over fresh noise on one design.
pub fn run_event_probability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.instance_spec()?;
    let kind = cfg.kind()?;
    let base = RngStream::new(cfg.seed, 1);
    let inst = generate_instance(&base, &spec)?;
    let report = tune(&inst.design, &kind, cfg.sigma, LambdaRule::Deterministic, &base.child(3))?;
    let tau_prime = report.tau_prime;
    let penalty = PenaltySpec::new(kind.clone(), 0.0)?;
    let design = &inst.design;
    let rows: Vec<TrialRow> = with_threads(cfg.threads, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let xi: Vec<f64> =
                    gauss_sample::<f64>(&trial_stream(cfg, t), cfg.n).into_iter().map(|z| z * cfg.sigma).collect();
                let stat = dual_norm_statistic(design, &xi, &penalty)?;
                Ok(TrialRow { trial: t, converged: true, statistic: Some(stat), event: Some(stat <= tau_prime), ..Default::default() })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let events: Vec<f64> = rows.iter().map(|r| if r.event == Some(true) { 1.0 } else { 0.0 }).collect();
    let (freq, se) = mean_stderr(&events);
    let floor = match kind {
        PenaltyKind::Nuclear { k, m } => Some(1.0 - 2.0 * (-(2.0 - 5f64.ln()) * (k + m) as f64).exp()),
        _ => None,
    };
    Ok(ExperimentReport {
        run: RunKind::EventProbability,
        config: cfg.clone(),
        aggregates: Aggregates {
            trials: cfg.trials,
            tau_prime: Some(tau_prime),
            event_frequency: Some(freq),
            event_stderr: Some(se),
            event_floor: floor,
            ..Default::default()
        },
        rows,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn certify_trial(cfg: &ExperimentConfig, spec: &InstanceSpec<f64>, kind: &PenaltyKind, trial: usize) -> Result<TrialRow> {
    let stream = trial_stream(cfg, trial);
    let inst = generate_instance(&stream, spec)?;
    let (lambda, _) = choose_lambda(cfg, &inst, kind, &stream.child(3))?;
    let penalty = PenaltySpec::new(kind.clone(), lambda)?;
    let sol = solve_penalized_ls(&inst, &penalty, &cfg.solve_options())?;
    let beta_star = inst.beta_star.clone().expect("generated");
    let d = beta_star.len();
    // probes: 0, β*, then β* plus Gaussian perturbations of decreasing size
    let mut probes = vec![vec![0.0; d], beta_star.clone()];
    let g: Vec<f64> = gauss_sample(&stream.child(5), d * cfg.probes.saturating_sub(2));
    for (j, chunk) in g.chunks(d.max(1)).enumerate().take(cfg.probes.saturating_sub(2)) {
        let scale = 10f64.powi(-(j as i32));
        probes.push(beta_star.iter().zip(chunk).map(|(b, z)| b + scale * z).collect());
    }
    probes.truncate(cfg.probes.max(1));
    let mut gap = f64::INFINITY;
    for b in &probes {
        gap = gap.min(certificate_gap(&inst, &penalty, &sol.beta_hat, b)?);
    }
    Ok(TrialRow { trial, converged: sol.converged, lambda: Some(lambda), cert_min_gap: Some(gap), ..Default::default() })
}

/// Minimum certificate gap over trials and probes. Non-converged trials are
/// kept in the minimum, which is what the truncated-solver control relies on.
pub fn run_certify(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.instance_spec()?;
    let kind = cfg.kind()?;
    let rows: Vec<TrialRow> =
        with_threads(cfg.threads, || (0..cfg.trials).into_par_iter().map(|t| certify_trial(cfg, &spec, &kind, t)).collect::<Result<Vec<_>>>())??;
    let min_gap = rows.iter().filter_map(|r| r.cert_min_gap).fold(f64::INFINITY, f64::min);
    Ok(ExperimentReport {
        run: RunKind::Certify,
        config: cfg.clone(),
        aggregates: Aggregates {
            trials: cfg.trials,
            flagged: rows.iter().filter(|r| !r.converged).count(),
            min_cert_gap: Some(min_gap),
            ..Default::default()
        },
        rows,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn opt_real(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default()
}

/// Rows as RFC-4180 CSV with the fixed header.
pub fn report_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.trial.to_string(),
            opt_bool(Some(r.converged)),
            opt_real(r.lambda),
            opt_real(r.pred_lhs),
            opt_real(r.pred_rhs),
            opt_real(r.estim_lhs),
            opt_real(r.estim_rhs),
            opt_real(r.cert_min_gap),
            opt_real(r.statistic),
            opt_bool(r.event),
            opt_bool(r.column_event),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn report_json(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

pub fn emit_report(report: &ExperimentReport, path: &Path, format: OutputFormat) -> Result<()> {
    let bytes = match format {
        OutputFormat::Csv => report_csv(report)?,
        OutputFormat::Json => report_json(report)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}
