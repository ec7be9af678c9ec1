//! Experiment runner behind the `ampa` command-line tool.
//!
//! Every experiment is described by an [`ExperimentConfig`] (schema-versioned
//! JSON). Trials are independent: trial `k` of a run draws its instance from
//! `mix_seed(master_seed, k)`, so any single trial can be replayed alone, and
//! results are collected in trial order regardless of scheduling.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ampa::{self, AmpConfig, Init, Variant};
use crate::error::{param, Error, Result};
use crate::metrics::{self, fmt17, Outcome, TrialRecord, TrialRow, SUCCESS_THRESHOLD};
use crate::model::{self, mix_seed, NoiseModel, ProblemInstance, SignalModel};
use crate::scalar::{norm_sqr, C};
use crate::se::{self, SeClass, SeConfig, SePoint, SeQuadrature};
use crate::spectral::{self, EigenConfig};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// How the solver is started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `x0 = ρ v`, `p0 = (1 - 2τT(y)) ∘ A x0`.
    DecoupledSpectral,
    /// `x0 = ρ v`, `p0 = A x0`.
    BlindSpectral,
    /// `x0 = 1`.
    Ones,
    /// `x0 = x*`.
    Truth,
    /// iid `CN(0, 1)` entries from the trial seed.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Ampa,
    /// Plain gradient descent on the amplitude loss.
    Baseline,
}

/// Solver settings shared by the simulation commands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub variant: Variant,
    pub epsilon: f64,
    pub max_iter: usize,
    pub stop_mse: f64,
    pub success_threshold: f64,
    /// Baseline step is `step_scale / max_a y_a`.
    pub baseline_step_scale: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            variant: Variant::Simplified,
            epsilon: 0.0,
            max_iter: 1000,
            stop_mse: 1e-13,
            success_threshold: SUCCESS_THRESHOLD,
            baseline_step_scale: 0.2,
        }
    }
}

impl SolverParams {
    fn amp(&self) -> AmpConfig {
        AmpConfig {
            variant: self.variant,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            stop_mse: self.stop_mse,
            success_threshold: self.success_threshold,
            ..AmpConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeRunParams {
    pub delta: f64,
    pub sigma_w2: f64,
    pub alpha0: f64,
    pub sigma2_0: f64,
    pub se: SeConfig,
}

impl Default for SeRunParams {
    fn default() -> Self {
        Self { delta: 4.0, sigma_w2: 0.0, alpha0: 0.1, sigma2_0: 0.99, se: SeConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinParams {
    pub deltas: Vec<f64>,
    pub grid: usize,
    pub se: SeConfig,
}

impl Default for BasinParams {
    fn default() -> Self {
        Self { deltas: vec![2.45, 2.40, 2.35], grid: 100, se: SeConfig::basin() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub n: usize,
    pub delta: f64,
    pub sigma_w2: f64,
    pub trials: usize,
    pub signal: SignalModel,
    pub noise_model: NoiseModel,
    pub init: InitKind,
    pub solver: SolverParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n: 2000,
            delta: 4.0,
            sigma_w2: 0.0,
            trials: 10,
            signal: SignalModel::ComplexGaussian,
            noise_model: NoiseModel::Real,
            init: InitKind::DecoupledSpectral,
            solver: SolverParams { max_iter: 30, ..SolverParams::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseTransitionParams {
    pub n: usize,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub signal: SignalModel,
    pub init: InitKind,
    pub solvers: Vec<Solver>,
    pub solver: SolverParams,
}

impl Default for PhaseTransitionParams {
    fn default() -> Self {
        Self {
            n: 1000,
            deltas: (0..9).map(|k| 2.2 + 0.1 * k as f64).collect(),
            trials: 100,
            signal: SignalModel::ComplexGaussian,
            init: InitKind::DecoupledSpectral,
            solvers: vec![Solver::Ampa],
            solver: SolverParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseCurveParams {
    pub n: usize,
    pub delta: f64,
    /// SNR grid in dB; `σ_w² = 1/(δ · 10^{snr/10})`.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub noise_model: NoiseModel,
    pub solver: SolverParams,
}

impl Default for NoiseCurveParams {
    fn default() -> Self {
        Self {
            n: 2000,
            delta: 4.0,
            snr_db: vec![15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            trials: 10,
            noise_model: NoiseModel::Real,
            solver: SolverParams { max_iter: 100, ..SolverParams::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub n: usize,
    pub deltas: Vec<f64>,
    pub sigma_w2: f64,
    pub trials: usize,
    pub signal: SignalModel,
    pub init: InitKind,
    pub solver: SolverParams,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            n: 1000,
            deltas: vec![2.5, 3.0, 4.0],
            sigma_w2: 0.0,
            trials: 20,
            signal: SignalModel::ComplexGaussian,
            init: InitKind::Random,
            solver: SolverParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralPredictParams {
    pub deltas: Vec<f64>,
    pub sigma_w2: f64,
    /// Monte Carlo overlap trials per δ (0 skips the simulation).
    pub trials: usize,
    pub n: usize,
}

impl Default for SpectralPredictParams {
    fn default() -> Self {
        Self { deltas: vec![2.5, 3.0, 4.0, 6.0], sigma_w2: 0.0, trials: 0, n: 2000 }
    }
}

/// Per-command parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Command {
    SeRun(SeRunParams),
    Basin(BasinParams),
    Sim(SimParams),
    PhaseTransition(PhaseTransitionParams),
    NoiseCurve(NoiseCurveParams),
    Baseline(BaselineParams),
    SpectralPredict(SpectralPredictParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SeRun(_) => "se-run",
            Command::Basin(_) => "basin",
            Command::Sim(_) => "sim",
            Command::PhaseTransition(_) => "phase-transition",
            Command::NoiseCurve(_) => "noise-curve",
            Command::Baseline(_) => "baseline",
            Command::SpectralPredict(_) => "spectral-predict",
        }
    }

    /// Default parameters for a subcommand name.
    pub fn default_for(name: &str) -> Option<Command> {
        Some(match name {
            "se-run" => Command::SeRun(Default::default()),
            "basin" => Command::Basin(Default::default()),
            "sim" => Command::Sim(Default::default()),
            "phase-transition" => Command::PhaseTransition(Default::default()),
            "noise-curve" => Command::NoiseCurve(Default::default()),
            "baseline" => Command::Baseline(Default::default()),
            "spectral-predict" => Command::SpectralPredict(Default::default()),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    #[serde(flatten)]
    pub command: Command,
}

impl ExperimentConfig {
    pub fn new(command: Command, master_seed: u64) -> Self {
        Self { schema_version: CONFIG_SCHEMA_VERSION, master_seed, command }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return param(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical form: compact JSON with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], lowercase hex.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                param(format!("{name} must be positive, got {v}"))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                param(format!("{name} must be nonnegative, got {v}"))
            }
        };
        let count = |name: &str, v: usize| if v > 0 { Ok(()) } else { param(format!("{name} must be at least 1")) };
        match &self.command {
            Command::SeRun(p) => {
                positive("delta", p.delta)?;
                nonneg("sigma_w2", p.sigma_w2)?;
                nonneg("sigma2_0", p.sigma2_0)?;
                if p.alpha0 == 0.0 && p.sigma2_0 == 0.0 {
                    return param("SE initial point (0, 0) is excluded");
                }
            }
            Command::Basin(p) => {
                count("grid", p.grid)?;
                p.deltas.iter().try_for_each(|d| positive("delta", *d))?;
            }
            Command::Sim(p) => {
                count("n", p.n)?;
                count("trials", p.trials)?;
                positive("delta", p.delta)?;
                nonneg("sigma_w2", p.sigma_w2)?;
            }
            Command::PhaseTransition(p) => {
                count("n", p.n)?;
                count("trials", p.trials)?;
                p.deltas.iter().try_for_each(|d| positive("delta", *d))?;
            }
            Command::NoiseCurve(p) => {
                count("n", p.n)?;
                count("trials", p.trials)?;
                positive("delta", p.delta)?;
            }
            Command::Baseline(p) => {
                count("n", p.n)?;
                count("trials", p.trials)?;
                nonneg("sigma_w2", p.sigma_w2)?;
                p.deltas.iter().try_for_each(|d| positive("delta", *d))?;
            }
            Command::SpectralPredict(p) => {
                nonneg("sigma_w2", p.sigma_w2)?;
                p.deltas.iter().try_for_each(|d| positive("delta", *d))?;
            }
        }
        Ok(())
    }
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix_seed(master, index)
}

// (tau, predicted |alpha0|^2) per (delta, sigma_w2, noise model), shared by trials
#[derive(Default)]
struct TauCache {
    map: HashMap<(u64, u64), (f64, f64, f64)>,
}

impl TauCache {
    fn get(&mut self, delta: f64, sigma_w2: f64) -> Result<(f64, f64, f64)> {
        let key = (delta.to_bits(), sigma_w2.to_bits());
        if let Some(v) = self.map.get(&key) {
            return Ok(*v);
        }
        let (tau, tau_star) = spectral::solve_tau(delta, sigma_w2)?;
        let (a2, _) = spectral::predict_finding1(delta, sigma_w2)?;
        self.map.insert(key, (tau, tau_star, a2));
        Ok((tau, tau_star, a2))
    }
}

fn random_vector(n: usize, seed: u64) -> Vec<C<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, 5));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C::new(s * re, s * im)
        })
        .collect()
}

/// Builds the starting point for `kind`. `tau` is only used by
/// [`InitKind::DecoupledSpectral`].
pub fn make_init(inst: &ProblemInstance<f64>, kind: InitKind, tau: f64, seed: u64) -> Result<Init<f64>> {
    Ok(match kind {
        InitKind::DecoupledSpectral => {
            let s = spectral::decoupled_init_at(inst, None, tau, &EigenConfig::default())?;
            Init { x0: s.x0, p0: Some(s.p0) }
        }
        InitKind::BlindSpectral => {
            let s = spectral::decoupled_init_at(inst, None, 0.0, &EigenConfig::default())?;
            Init::plain(s.x0)
        }
        InitKind::Ones => Init::plain(vec![C::new(1.0, 0.0); inst.n]),
        InitKind::Truth => Init::plain(inst.signal.clone()),
        InitKind::Random => Init::plain(random_vector(inst.n, seed)),
    })
}

/// Gradient descent on `(1/2) sum_a (y_a - |(Ax)_a|)^2`:
/// `x <- x + step A^H g(Ax, y)` with `step = step_scale / max_a y_a`.
/// Returns the trial record and the per-iteration loss.
pub fn baseline_run(
    inst: &ProblemInstance<f64>,
    x0: Vec<C<f64>>,
    step_scale: f64,
    params: &SolverParams,
) -> Result<(TrialRecord, Vec<f64>)> {
    if x0.len() != inst.n {
        return Err(Error::Dimension { expected: inst.n, got: x0.len() });
    }
    let ymax = inst.observations.iter().copied().fold(0.0f64, f64::max);
    if !(ymax > 0.0) {
        return param("baseline needs a positive observation");
    }
    let step = step_scale / ymax;
    let zero = C::new(0.0, 0.0);
    let mut x = x0;
    let mut rows = vec![TrialRow::measure(0, &x, &inst.signal, None)?];
    let mut losses = Vec::new();
    let mut reason = None;
    let mut done = rows[0].mse < params.stop_mse;
    let mut t = 0;
    while t < params.max_iter {
        let mut loss = 0.0;
        let grad = inst.matrix.fused(&x, |a, z| {
            let r = inst.observations[a] - z.norm();
            loss += 0.5 * r * r;
            ampa::g_amp(z, inst.observations[a], zero)
        });
        losses.push(loss);
        if done {
            break;
        }
        x.iter_mut().zip(&grad).for_each(|(xi, gi)| *xi += gi * step);
        t += 1;
        if !crate::scalar::all_finite(&x) {
            reason = Some(format!("non_finite: {}", Error::NonFinite { iter: t }));
            break;
        }
        let row = TrialRow::measure(t, &x, &inst.signal, None)?;
        done = row.mse < params.stop_mse;
        rows.push(row);
    }
    let outcome = if reason.is_some() {
        Outcome::Diverged
    } else if rows.last().is_some_and(|r| r.mse < params.success_threshold) {
        Outcome::Success
    } else {
        Outcome::Fail
    };
    Ok((TrialRecord { seed: 0, config_hash: String::new(), rows, outcome, reason }, losses))
}

/// One simulated trial.
#[allow(clippy::too_many_arguments)]
fn run_trial(
    n: usize,
    delta: f64,
    sigma_w2: f64,
    signal: SignalModel,
    noise_model: NoiseModel,
    init: InitKind,
    tau: f64,
    solver: Solver,
    params: &SolverParams,
    seed: u64,
    config_hash: &str,
) -> Result<TrialRecord> {
    let inst = model::gen_instance_with::<f64>(signal, noise_model, n, delta, sigma_w2, seed)?;
    let start = match make_init(&inst, init, tau, seed) {
        Ok(s) => s,
        Err(e @ (Error::Eigen { .. } | Error::NonFinite { .. })) => {
            let rows = vec![];
            return Ok(TrialRecord {
                seed,
                config_hash: config_hash.to_string(),
                rows,
                outcome: Outcome::Diverged,
                reason: Some(format!("init: {e}")),
            });
        }
        Err(e) => return Err(e),
    };
    let mut record = match solver {
        Solver::Ampa => ampa::run(&inst, start, &params.amp())?.record,
        Solver::Baseline => baseline_run(&inst, start.x0, params.baseline_step_scale, params)?.0,
    };
    record.seed = seed;
    record.config_hash = config_hash.to_string();
    Ok(record)
}

/// SE iterated exactly `iters` times (no early exit), starting at `init`.
pub fn se_trajectory(init: SePoint<f64>, delta: f64, sigma_w2: f64, iters: usize) -> Result<Vec<SePoint<f64>>> {
    let quad = SeQuadrature::<f64>::new(SeConfig::default().quad_nodes);
    let mut pts = vec![init];
    let mut cur = init;
    for _ in 0..iters {
        cur = quad.map(cur, delta, sigma_w2)?;
        pts.push(cur);
    }
    Ok(pts)
}

/// Per-iteration averages over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub t: usize,
    /// Trials contributing at this `t` (trials stop early once converged).
    pub count: usize,
    pub abs_alpha_hat: f64,
    pub sigma2_hat: f64,
    pub mse: f64,
    pub se_abs_alpha: f64,
    pub se_sigma2: f64,
    pub se_amse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub records: Vec<TrialRecord>,
    pub means: Vec<MeanRow>,
    /// `(|α0|, σ0²)` the SE prediction starts from.
    pub se_init: (f64, f64),
}

/// Simulation of AMP.A against its SE prediction.
pub fn cmd_sim(p: &SimParams, master_seed: u64, config_hash: &str) -> Result<SimResult> {
    let mut cache = TauCache::default();
    let delta_eff = (p.delta * p.n as f64).round() / p.n as f64;
    let needs_tau = p.init == InitKind::DecoupledSpectral || p.init == InitKind::BlindSpectral;
    let (tau, _, a2) = if needs_tau {
        cache.get(delta_eff, p.sigma_w2)?
    } else {
        (0.0, 0.0, f64::NAN)
    };
    let records: Vec<TrialRecord> = (0..p.trials as u64)
        .into_par_iter()
        .map(|k| {
            run_trial(
                p.n,
                p.delta,
                p.sigma_w2,
                p.signal,
                p.noise_model,
                p.init,
                tau,
                Solver::Ampa,
                &p.solver,
                trial_seed(master_seed, k),
                config_hash,
            )
        })
        .collect::<Result<_>>()?;
    let se_init = if needs_tau {
        (a2.sqrt(), 1.0 - a2)
    } else {
        // measured alignment of the starting points, averaged
        let rows0: Vec<&TrialRow> = records.iter().filter_map(|r| r.rows.first()).collect();
        let k = rows0.len().max(1) as f64;
        (
            rows0.iter().map(|r| r.abs_alpha_hat).sum::<f64>() / k,
            rows0.iter().map(|r| r.sigma2_hat).sum::<f64>() / k,
        )
    };
    let len = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    let traj = se_trajectory(SePoint::real(se_init.0, se_init.1), delta_eff, p.sigma_w2, len.saturating_sub(1))?;
    let means = (0..len)
        .map(|t| {
            let rows: Vec<&TrialRow> = records.iter().filter_map(|r| r.rows.get(t)).collect();
            let k = rows.len() as f64;
            let mean = |f: fn(&TrialRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            let sp = traj[t];
            MeanRow {
                t,
                count: rows.len(),
                abs_alpha_hat: mean(|r| r.abs_alpha_hat),
                sigma2_hat: mean(|r| r.sigma2_hat),
                mse: mean(|r| r.mse),
                se_abs_alpha: sp.alpha.norm(),
                se_sigma2: sp.sigma2,
                se_amse: sp.amse(),
            }
        })
        .collect();
    Ok(SimResult { records, means, se_init })
}

/// Success fraction at one `(δ, solver)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub delta: f64,
    pub solver: Solver,
    pub trials: usize,
    pub successes: usize,
    pub diverged: usize,
    pub rate: f64,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    n: usize,
    deltas: &[f64],
    sigma_w2: f64,
    trials: usize,
    signal: SignalModel,
    init: InitKind,
    solvers: &[Solver],
    params: &SolverParams,
    master_seed: u64,
    config_hash: &str,
) -> Result<Vec<RateRow>> {
    let mut cache = TauCache::default();
    let mut out = Vec::new();
    for &delta in deltas {
        let delta_eff = (delta * n as f64).round() / n as f64;
        let tau = if init == InitKind::DecoupledSpectral { cache.get(delta_eff, sigma_w2)?.0 } else { 0.0 };
        for &solver in solvers {
            let records: Vec<TrialRecord> = (0..trials as u64)
                .into_par_iter()
                .map(|k| {
                    run_trial(
                        n,
                        delta,
                        sigma_w2,
                        signal,
                        NoiseModel::Real,
                        init,
                        tau,
                        solver,
                        params,
                        trial_seed(master_seed, k),
                        config_hash,
                    )
                })
                .collect::<Result<_>>()?;
            let successes = records.iter().filter(|r| metrics::success(r, params.success_threshold)).count();
            let diverged = records.iter().filter(|r| r.outcome == Outcome::Diverged).count();
            log::info!("delta {delta}: {successes}/{trials} successes ({solver:?})");
            out.push(RateRow { delta, solver, trials, successes, diverged, rate: successes as f64 / trials as f64 });
        }
    }
    Ok(out)
}

/// Success rate against `δ`.
pub fn cmd_phase_transition(p: &PhaseTransitionParams, master_seed: u64, config_hash: &str) -> Result<Vec<RateRow>> {
    sweep(p.n, &p.deltas, 0.0, p.trials, p.signal, p.init, &p.solvers, &p.solver, master_seed, config_hash)
}

/// Success rate of the gradient-descent baseline against `δ`.
pub fn cmd_baseline(p: &BaselineParams, master_seed: u64, config_hash: &str) -> Result<Vec<RateRow>> {
    sweep(p.n, &p.deltas, p.sigma_w2, p.trials, p.signal, p.init, &[Solver::Baseline], &p.solver, master_seed, config_hash)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub snr_db: f64,
    pub sigma_w2: f64,
    pub sim_mse_mean: f64,
    pub sim_mse_std: f64,
    pub se_amse: f64,
    /// `10 log10(sim / SE)`.
    pub gap_db: f64,
}

/// `1 / (δ · 10^{snr_db/10})`.
pub fn sigma_w2_for_snr_db(delta: f64, snr_db: f64) -> f64 {
    model::sigma_w2_for_snr(delta, 10f64.powf(snr_db / 10.0))
}

/// Final MSE against SNR for decoupled-spectral AMP.A and its SE prediction
/// after the same number of iterations.
pub fn cmd_noise_curve(p: &NoiseCurveParams, master_seed: u64, config_hash: &str) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::new();
    let delta_eff = (p.delta * p.n as f64).round() / p.n as f64;
    let solver = SolverParams { stop_mse: 0.0, ..p.solver };
    for &snr_db in &p.snr_db {
        let sigma_w2 = sigma_w2_for_snr_db(p.delta, snr_db);
        let (tau, _) = spectral::solve_tau(delta_eff, sigma_w2)?;
        let (a2, s2) = spectral::predict_finding1(delta_eff, sigma_w2)?;
        let records: Vec<TrialRecord> = (0..p.trials as u64)
            .into_par_iter()
            .map(|k| {
                run_trial(
                    p.n,
                    p.delta,
                    sigma_w2,
                    SignalModel::ComplexGaussian,
                    p.noise_model,
                    InitKind::DecoupledSpectral,
                    tau,
                    Solver::Ampa,
                    &solver,
                    trial_seed(master_seed, k),
                    config_hash,
                )
            })
            .collect::<Result<_>>()?;
        let finals: Vec<f64> = records.iter().filter_map(|r| r.final_mse()).collect();
        let k = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / k;
        let std = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
        let iters = records.iter().map(|r| r.rows.len()).max().unwrap_or(1) - 1;
        let se_amse = se_trajectory(SePoint::real(a2.sqrt(), s2), delta_eff, sigma_w2, iters)?
            .last()
            .map(|p| p.amse())
            .unwrap_or(f64::NAN);
        rows.push(NoiseRow {
            snr_db,
            sigma_w2,
            sim_mse_mean: mean,
            sim_mse_std: std,
            se_amse,
            gap_db: 10.0 * (mean / se_amse).log10(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub delta: f64,
    pub sigma_w2: f64,
    pub tau: f64,
    pub tau_star: f64,
    pub alpha0_sq: f64,
    pub sigma2_0: f64,
    /// Mean of `|<v, x*>|^2 / (||v||^2 ||x*||^2)` over simulated trials.
    pub mc_overlap: Option<f64>,
    pub mc_trials: usize,
}

/// `|<v, x*>|^2 / (||v||^2 ||x*||^2)`.
pub fn overlap(v: &[C<f64>], x_star: &[C<f64>]) -> f64 {
    crate::scalar::dotc(v, x_star).norm_sqr() / (norm_sqr(v) * norm_sqr(x_star))
}

/// Finding-1 predictions, optionally against simulated eigenvector overlap.
pub fn cmd_spectral_predict(p: &SpectralPredictParams, master_seed: u64) -> Result<Vec<SpectralRow>> {
    let mut rows = Vec::new();
    for &delta in &p.deltas {
        let (tau, tau_star) = spectral::solve_tau(delta, p.sigma_w2)?;
        let (a2, s2) = spectral::predict_finding1(delta, p.sigma_w2)?;
        let mc_overlap = if p.trials > 0 {
            let vals: Vec<f64> = (0..p.trials as u64)
                .into_par_iter()
                .map(|k| {
                    let inst = model::gen_instance::<f64>(
                        SignalModel::ComplexGaussian,
                        p.n,
                        delta,
                        p.sigma_w2,
                        trial_seed(master_seed, k),
                    )?;
                    let d = inst.delta;
                    let pair = spectral::principal_eigvec(&inst, |y| spectral::t_opt(y, d), &EigenConfig::default())?;
                    Ok(overlap(&pair.vector, &inst.signal))
                })
                .collect::<Result<_>>()?;
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        } else {
            None
        };
        rows.push(SpectralRow {
            delta,
            sigma_w2: p.sigma_w2,
            tau,
            tau_star,
            alpha0_sq: a2,
            sigma2_0: s2,
            mc_overlap,
            mc_trials: p.trials,
        });
    }
    Ok(rows)
}

/// SE trajectory from the configured start.
pub fn cmd_se_run(p: &SeRunParams) -> Result<se::SeRun<f64>> {
    se::se_run(SePoint::real(p.alpha0, p.sigma2_0), p.delta, p.sigma_w2, &p.se)
}

/// Basin grids for each configured `δ`.
pub fn cmd_basin(p: &BasinParams) -> Result<Vec<se::BasinGrid>> {
    p.deltas.iter().map(|d| se::basin_grid(*d, (p.grid, p.grid), &p.se)).collect()
}

/// Column name and type of one CSV column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
}

/// Sidecar descriptor written next to every CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub schema_version: u32,
    pub file: String,
    pub columns: Vec<Column>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Run summary; the only output that is not byte-reproducible (timings).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub timings: Vec<StageTiming>,
    pub outputs: Vec<String>,
    pub result: serde_json::Value,
}

/// Output format of the main table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

struct Table {
    name: String,
    columns: Vec<(&'static str, &'static str)>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: Vec<(&'static str, &'static str)>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    fn write(&self, dir: &Path, format: Format) -> Result<Vec<String>> {
        match format {
            Format::Csv => {
                let file = format!("{}.csv", self.name);
                let mut w = csv::Writer::from_path(dir.join(&file))?;
                w.write_record(self.columns.iter().map(|c| c.0))?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                w.flush()?;
                let schema = CsvSchema {
                    schema_version: 1,
                    file: file.clone(),
                    columns: self.columns.iter().map(|(n, k)| Column { name: n.to_string(), kind: k.to_string() }).collect(),
                };
                let sfile = format!("{}.schema.json", self.name);
                fs::write(dir.join(&sfile), serde_json::to_string_pretty(&schema)? + "\n")?;
                Ok(vec![file, sfile])
            }
            Format::Json => {
                let file = format!("{}.json", self.name);
                let objs: Vec<serde_json::Map<String, serde_json::Value>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        self.columns
                            .iter()
                            .zip(r)
                            .map(|((n, _), v)| (n.to_string(), serde_json::Value::String(v.clone())))
                            .collect()
                    })
                    .collect();
                fs::write(dir.join(&file), serde_json::to_string_pretty(&objs)? + "\n")?;
                Ok(vec![file])
            }
        }
    }
}

fn trial_table(name: &str, records: &[TrialRecord]) -> Table {
    let mut t = Table::new(
        name,
        vec![
            ("seed", "u64"),
            ("t", "usize"),
            ("abs_alpha_hat", "f64"),
            ("sigma2_hat", "f64"),
            ("mse", "f64"),
            ("div_value", "f64?"),
            ("mse_per_n", "f64"),
        ],
    );
    for rec in records {
        for r in &rec.rows {
            t.rows.push(vec![
                rec.seed.to_string(),
                r.t.to_string(),
                fmt17(r.abs_alpha_hat),
                fmt17(r.sigma2_hat),
                fmt17(r.mse),
                r.div_value.map(fmt17).unwrap_or_default(),
                fmt17(r.mse_per_n),
            ]);
        }
    }
    t
}

fn rate_table(name: &str, rows: &[RateRow]) -> Table {
    let mut t = Table::new(
        name,
        vec![("delta", "f64"), ("solver", "string"), ("trials", "usize"), ("successes", "usize"), ("diverged", "usize"), ("rate", "f64")],
    );
    for r in rows {
        let solver = match r.solver {
            Solver::Ampa => "ampa",
            Solver::Baseline => "baseline",
        };
        t.rows.push(vec![
            fmt17(r.delta),
            solver.into(),
            r.trials.to_string(),
            r.successes.to_string(),
            r.diverged.to_string(),
            fmt17(r.rate),
        ]);
    }
    t
}

/// Runs one experiment, writing its tables, sidecar schemas and
/// `summary.json` under `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path, format: Format, version: &str) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let hash = cfg.config_hash();
    let seed = cfg.master_seed;
    let mut timings = Vec::new();
    let mut tables = Vec::new();
    let clock = Instant::now();
    let result = match &cfg.command {
        Command::SeRun(p) => {
            let run = cmd_se_run(p)?;
            let mut t = Table::new("se_trajectory", vec![("t", "usize"), ("abs_alpha", "f64"), ("sigma2", "f64"), ("amse", "f64")]);
            for (k, pt) in run.points.iter().enumerate() {
                t.rows.push(vec![k.to_string(), fmt17(pt.alpha.norm()), fmt17(pt.sigma2), fmt17(pt.amse())]);
            }
            tables.push(t);
            serde_json::json!({
                "classification": run.class,
                "iterations": run.iterations(),
                "final_amse": run.last().amse(),
            })
        }
        Command::Basin(p) => {
            let grids = cmd_basin(p)?;
            let mut counts = Vec::new();
            for g in &grids {
                let mut t = Table::new(format!("basin_delta_{}", g.delta), vec![("alpha0", "f64"), ("sigma2_0", "f64"), ("converged", "bool")]);
                for (i, a) in g.alpha0.iter().enumerate() {
                    for (j, s) in g.sigma2_0.iter().enumerate() {
                        t.rows.push(vec![fmt17(*a), fmt17(*s), g.get(i, j).to_string()]);
                    }
                }
                tables.push(t);
                counts.push(serde_json::json!({ "delta": g.delta, "converged_cells": g.count() }));
            }
            let nested = grids.windows(2).all(|w| w[1].is_subset_of(&w[0]) || w[0].is_subset_of(&w[1]));
            serde_json::json!({ "grids": counts, "nested": nested })
        }
        Command::Sim(p) => {
            let res = cmd_sim(p, seed, &hash)?;
            tables.push(trial_table("trials", &res.records));
            let mut t = Table::new(
                "sim_means",
                vec![
                    ("t", "usize"),
                    ("count", "usize"),
                    ("abs_alpha_hat", "f64"),
                    ("sigma2_hat", "f64"),
                    ("mse", "f64"),
                    ("se_abs_alpha", "f64"),
                    ("se_sigma2", "f64"),
                    ("se_amse", "f64"),
                ],
            );
            for m in &res.means {
                t.rows.push(vec![
                    m.t.to_string(),
                    m.count.to_string(),
                    fmt17(m.abs_alpha_hat),
                    fmt17(m.sigma2_hat),
                    fmt17(m.mse),
                    fmt17(m.se_abs_alpha),
                    fmt17(m.se_sigma2),
                    fmt17(m.se_amse),
                ]);
            }
            tables.push(t);
            let outcomes: Vec<_> = res.records.iter().map(|r| serde_json::json!({ "seed": r.seed, "outcome": r.outcome, "reason": r.reason })).collect();
            serde_json::json!({ "se_init": res.se_init, "trials": outcomes })
        }
        Command::PhaseTransition(p) => {
            let rows = cmd_phase_transition(p, seed, &hash)?;
            tables.push(rate_table("phase_transition", &rows));
            serde_json::to_value(&rows)?
        }
        Command::Baseline(p) => {
            let rows = cmd_baseline(p, seed, &hash)?;
            tables.push(rate_table("baseline", &rows));
            serde_json::to_value(&rows)?
        }
        Command::NoiseCurve(p) => {
            let rows = cmd_noise_curve(p, seed, &hash)?;
            let mut t = Table::new(
                "noise_curve",
                vec![
                    ("snr_db", "f64"),
                    ("sigma_w2", "f64"),
                    ("sim_mse_mean", "f64"),
                    ("sim_mse_std", "f64"),
                    ("se_amse", "f64"),
                    ("gap_db", "f64"),
                ],
            );
            for r in &rows {
                t.rows.push(vec![
                    fmt17(r.snr_db),
                    fmt17(r.sigma_w2),
                    fmt17(r.sim_mse_mean),
                    fmt17(r.sim_mse_std),
                    fmt17(r.se_amse),
                    fmt17(r.gap_db),
                ]);
            }
            tables.push(t);
            serde_json::to_value(&rows)?
        }
        Command::SpectralPredict(p) => {
            let rows = cmd_spectral_predict(p, seed)?;
            let mut t = Table::new(
                "spectral_predict",
                vec![
                    ("delta", "f64"),
                    ("sigma_w2", "f64"),
                    ("tau", "f64"),
                    ("tau_star", "f64"),
                    ("alpha0_sq", "f64"),
                    ("sigma2_0", "f64"),
                    ("mc_overlap", "f64?"),
                    ("mc_trials", "usize"),
                ],
            );
            for r in &rows {
                t.rows.push(vec![
                    fmt17(r.delta),
                    fmt17(r.sigma_w2),
                    fmt17(r.tau),
                    fmt17(r.tau_star),
                    fmt17(r.alpha0_sq),
                    fmt17(r.sigma2_0),
                    r.mc_overlap.map(fmt17).unwrap_or_default(),
                    r.mc_trials.to_string(),
                ]);
            }
            tables.push(t);
            serde_json::to_value(&rows)?
        }
    };
    timings.push(StageTiming { stage: "compute".into(), seconds: clock.elapsed().as_secs_f64() });
    let clock = Instant::now();
    let mut outputs = Vec::new();
    for t in &tables {
        outputs.extend(t.write(out_dir, format)?);
    }
    timings.push(StageTiming { stage: "write".into(), seconds: clock.elapsed().as_secs_f64() });
    let summary = Summary {
        command: cfg.command.name().into(),
        config_hash: hash,
        version: version.into(),
        config: cfg.clone(),
        timings,
        outputs,
        result,
    };
    let mut f = fs::File::create(summary_path(out_dir))?;
    f.write_all(serde_json::to_string_pretty(&summary)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(summary)
}

pub fn summary_path(out_dir: &Path) -> PathBuf {
    out_dir.join("summary.json")
}

/// Convenience for callers that want the classification only.
pub fn se_converges(delta: f64, alpha0: f64, sigma2_0: f64, config: &SeConfig) -> Result<bool> {
    let run = se::se_run(SePoint::real(alpha0, sigma2_0), delta, 0.0, config)?;
    Ok(run.class == SeClass::ConvergedToOne)
}
