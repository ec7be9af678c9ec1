//! AMP.A: approximate message passing for the amplitude-based least-squares
//! objective `sum_a (y_a - |(Ax)_a|)^2 + (mu/2) ||x||^2`.
//!
//! Three recursions are provided:
//!
//! * the simplified form,
//!   `p^t = A x^t - (2/delta) g(p^{t-1}, y)`,
//!   `x^{t+1} = 2 [ -div_p(g_t) x^t + A^H g(p^t, y) ]`;
//! * the regularized form with fixed `mu`, tracking `lambda_t` and `tau_t`;
//! * the regularized form with the per-iteration continuation
//!   `mu^t = (1 + 2 div_p(g_t)) / (1 + 2 tau_t)`, algebraically identical to
//!   the simplified form.
//!
//! Here `g(p, y) = y p/|p| - p` and `div_p(g) = (1/m) sum_a y_a / (2|p_a|) - 1`.
//! With `epsilon > 0` the smoothed `g_eps(p, y) = y p / sqrt(|p|^2 + eps) - p`
//! and its divergence are used throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Outcome, TrialRecord, TrialRow, SUCCESS_THRESHOLD};
use crate::model::ProblemInstance;
use crate::scalar::{all_finite, unit_phase, Real, C};

/// Which recursion to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Variant {
    Simplified,
    Regularized { mu: f64 },
    AutoContinuation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpConfig {
    pub variant: Variant,
    /// 0 selects the exact nonlinearity; positive values select `g_eps`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Value used for `p/|p|` at `p = 0`, as `(re, im)`.
    pub zero_p_convention: (f64, f64),
    /// Stop once the phase-aligned MSE drops below this.
    pub stop_mse: f64,
    /// Final-MSE threshold separating success from failure.
    pub success_threshold: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Simplified,
            epsilon: 0.0,
            max_iter: 1000,
            zero_p_convention: (0.0, 0.0),
            stop_mse: 1e-13,
            success_threshold: SUCCESS_THRESHOLD,
        }
    }
}

impl AmpConfig {
    fn zero_p<T: Real>(&self) -> C<T> {
        C::new(T::of(self.zero_p_convention.0), T::of(self.zero_p_convention.1))
    }
}

/// Iteration state after `iter` steps.
///
/// `x` is the current estimate `x^t`; `p` and `g_prev` are the last
/// residual-domain vector and `g` evaluated there; `lambda` and `div_prev`
/// belong to the previous step and `tau` is the value used by the next
/// step of the regularized recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpState<T> {
    pub x: Vec<C<T>>,
    pub p: Vec<C<T>>,
    pub g_prev: Vec<C<T>>,
    pub lambda: T,
    pub tau: T,
    pub div_prev: T,
    pub iter: usize,
}

impl<T: Real> AmpState<T> {
    /// Fresh state with `g(p^{-1}, y) = 0` and `tau_0 = 1/2`.
    pub fn new(x0: Vec<C<T>>, m: usize) -> Self {
        let zero = C::new(T::zero(), T::zero());
        Self {
            x: x0,
            p: vec![zero; m],
            g_prev: vec![zero; m],
            lambda: T::one(),
            tau: T::of(0.5),
            div_prev: T::of(-0.5),
            iter: 0,
        }
    }

    /// Multiplies every vector by `e^{i phi}`.
    pub fn rotated(&self, phi: T) -> Self {
        let r = C::from_polar(T::one(), phi);
        let rot = |v: &[C<T>]| v.iter().map(|z| z * r).collect::<Vec<_>>();
        Self { x: rot(&self.x), p: rot(&self.p), g_prev: rot(&self.g_prev), ..self.clone() }
    }
}

/// `y p/|p| - p`, with `p/|p|` replaced by `zero_p` at the origin.
#[inline]
pub fn g_amp<T: Real>(p: C<T>, y: T, zero_p: C<T>) -> C<T> {
    unit_phase(p, zero_p) * y - p
}

/// `y p / sqrt(|p|^2 + eps) - p`.
#[inline]
pub fn g_smooth<T: Real>(p: C<T>, y: T, eps: T) -> C<T> {
    p * (y / (p.norm_sqr() + eps).sqrt()) - p
}

/// `(1/m) sum_a y_a / (2|p_a|) - 1`. Singular if any `p_a = 0`.
pub fn divergence<T: Real>(p: &[C<T>], y: &[T]) -> Result<T> {
    if p.len() != y.len() {
        return Err(Error::Dimension { expected: y.len(), got: p.len() });
    }
    let mut s = T::zero();
    for (index, (pa, ya)) in p.iter().zip(y).enumerate() {
        let r = pa.norm();
        if r == T::zero() {
            return Err(Error::Singular { index });
        }
        s = s + *ya / (r + r);
    }
    Ok(s / T::of(p.len() as f64) - T::one())
}

#[inline]
fn div_term_smooth<T: Real>(p: C<T>, y: T, eps: T) -> T {
    let s = p.norm_sqr();
    let d = s + eps;
    y * (s * T::of(0.5) + eps) / (d * d.sqrt())
}

/// Wirtinger divergence of `g_eps`:
/// `(1/m) sum_a y_a (|p_a|^2/2 + eps) / (|p_a|^2 + eps)^{3/2} - 1`.
pub fn divergence_smooth<T: Real>(p: &[C<T>], y: &[T], eps: T) -> T {
    assert_eq!(p.len(), y.len(), "divergence_smooth dimension");
    let s: T = p.iter().zip(y).map(|(pa, ya)| div_term_smooth(*pa, *ya, eps)).sum();
    s / T::of(p.len() as f64) - T::one()
}

/// `(1 + 2 div) / (1 + 2 tau)`.
pub fn continuation_mu<T: Real>(div: T, tau: T) -> T {
    (T::one() + div + div) / (T::one() + tau + tau)
}

// p, g = g(p, y), A^H g and div_p(g) for one residual-domain vector
struct Residual<T> {
    p: Vec<C<T>>,
    g: Vec<C<T>>,
    back: Vec<C<T>>,
    div: T,
}

fn nonlinearity<T: Real>(cfg: &AmpConfig) -> impl Fn(C<T>, T) -> (C<T>, T) {
    let eps = T::of(cfg.epsilon);
    let zero_p = cfg.zero_p::<T>();
    move |p, y| {
        if eps > T::zero() {
            (g_smooth(p, y, eps), div_term_smooth(p, y, eps))
        } else {
            let r = p.norm();
            let d = if r > T::zero() { y / (r + r) } else { T::infinity() };
            (g_amp(p, y, zero_p), d)
        }
    }
}

fn finish_div<T: Real>(sum: T, m: usize, first_zero: Option<usize>) -> Result<T> {
    match first_zero {
        Some(index) => Err(Error::Singular { index }),
        None => Ok(sum / T::of(m as f64) - T::one()),
    }
}

// p = A x - onsager * g_prev, fused with A^H g(p, y)
fn residual_from_x<T: Real>(
    x: &[C<T>],
    g_prev: &[C<T>],
    onsager: T,
    inst: &ProblemInstance<T>,
    cfg: &AmpConfig,
) -> Result<Residual<T>> {
    let m = inst.m;
    let f = nonlinearity::<T>(cfg);
    let zero = C::new(T::zero(), T::zero());
    let mut p = vec![zero; m];
    let mut g = vec![zero; m];
    let mut sum = T::zero();
    let mut first_zero = None;
    let use_prev = onsager != T::zero();
    let back = inst.matrix.fused(x, |a, ax| {
        let pa = if use_prev { ax - g_prev[a] * onsager } else { ax };
        let (ga, da) = f(pa, inst.observations[a]);
        if !da.is_finite() && first_zero.is_none() {
            first_zero = Some(a);
        }
        sum = sum + da;
        p[a] = pa;
        g[a] = ga;
        ga
    });
    let div = finish_div(sum, m, first_zero)?;
    Ok(Residual { p, g, back, div })
}

fn residual_from_p<T: Real>(p: Vec<C<T>>, inst: &ProblemInstance<T>, cfg: &AmpConfig) -> Result<Residual<T>> {
    if p.len() != inst.m {
        return Err(Error::Dimension { expected: inst.m, got: p.len() });
    }
    let f = nonlinearity::<T>(cfg);
    let mut sum = T::zero();
    let mut first_zero = None;
    let g: Vec<C<T>> = p
        .iter()
        .zip(&inst.observations)
        .enumerate()
        .map(|(a, (pa, ya))| {
            let (ga, da) = f(*pa, *ya);
            if !da.is_finite() && first_zero.is_none() {
                first_zero = Some(a);
            }
            sum = sum + da;
            ga
        })
        .collect();
    let div = finish_div(sum, inst.m, first_zero)?;
    let back = inst.matrix.adjoint_matvec(&g);
    Ok(Residual { p, g, back, div })
}

#[derive(Clone, Copy)]
enum MuRule {
    Fixed(f64),
    Continuation,
}

fn onsager_coefficient<T: Real>(state: &AmpState<T>, variant: Variant, delta: T) -> T {
    if state.iter == 0 {
        return T::zero();
    }
    match variant {
        Variant::Simplified => T::of(2.0) / delta,
        _ => state.lambda / (delta * -state.div_prev),
    }
}

fn update<T: Real>(state: &AmpState<T>, r: Residual<T>, variant: Variant, delta: T) -> Result<AmpState<T>> {
    let iter = state.iter;
    let two = T::of(2.0);
    let half = T::of(0.5);
    let (x, lambda, tau) = match variant {
        Variant::Simplified => {
            let x: Vec<C<T>> = state
                .x
                .iter()
                .zip(&r.back)
                .map(|(xi, bi)| (xi * (-r.div) + bi) * two)
                .collect();
            (x, state.lambda, state.tau)
        }
        Variant::Regularized { .. } | Variant::AutoContinuation => {
            let rule = match variant {
                Variant::Regularized { mu } => MuRule::Fixed(mu),
                _ => MuRule::Continuation,
            };
            let nd = -r.div;
            if !(nd > T::zero()) {
                return Err(Error::Stability { iter, value: nd.as_f64() });
            }
            let mu = match rule {
                MuRule::Fixed(mu) => T::of(mu),
                MuRule::Continuation => continuation_mu(r.div, state.tau),
            };
            let lambda = nd / (nd + mu * (state.tau + half));
            let x: Vec<C<T>> = state
                .x
                .iter()
                .zip(&r.back)
                .map(|(xi, bi)| (xi + bi / nd) * lambda)
                .collect();
            let tau_next = (state.tau + half) / (delta * nd) * lambda;
            (x, lambda, tau_next)
        }
    };
    if !all_finite(&x) || !r.div.is_finite() {
        return Err(Error::NonFinite { iter });
    }
    Ok(AmpState { x, p: r.p, g_prev: r.g, lambda, tau, div_prev: r.div, iter: iter + 1 })
}

fn check_dims<T: Real>(state: &AmpState<T>, inst: &ProblemInstance<T>) -> Result<()> {
    if state.x.len() != inst.n {
        return Err(Error::Dimension { expected: inst.n, got: state.x.len() });
    }
    if state.g_prev.len() != inst.m {
        return Err(Error::Dimension { expected: inst.m, got: state.g_prev.len() });
    }
    Ok(())
}

/// One step of the simplified recursion.
pub fn step_simplified<T: Real>(state: &AmpState<T>, inst: &ProblemInstance<T>, cfg: &AmpConfig) -> Result<AmpState<T>> {
    step_variant(state, inst, cfg, Variant::Simplified)
}

/// One step of the regularized recursion with a fixed `mu >= 0`.
pub fn step_regularized<T: Real>(
    state: &AmpState<T>,
    inst: &ProblemInstance<T>,
    mu: f64,
    cfg: &AmpConfig,
) -> Result<AmpState<T>> {
    step_variant(state, inst, cfg, Variant::Regularized { mu })
}

/// One step of the regularized recursion with `mu^t` from
/// [`continuation_mu`].
pub fn step_continuation<T: Real>(state: &AmpState<T>, inst: &ProblemInstance<T>, cfg: &AmpConfig) -> Result<AmpState<T>> {
    step_variant(state, inst, cfg, Variant::AutoContinuation)
}

/// One step of whichever recursion `cfg.variant` selects.
pub fn step<T: Real>(state: &AmpState<T>, inst: &ProblemInstance<T>, cfg: &AmpConfig) -> Result<AmpState<T>> {
    step_variant(state, inst, cfg, cfg.variant)
}

fn step_variant<T: Real>(
    state: &AmpState<T>,
    inst: &ProblemInstance<T>,
    cfg: &AmpConfig,
    variant: Variant,
) -> Result<AmpState<T>> {
    check_dims(state, inst)?;
    let onsager = onsager_coefficient(state, variant, inst.delta);
    let r = residual_from_x(&state.x, &state.g_prev, onsager, inst, cfg)?;
    update(state, r, variant, inst.delta)
}

/// First step from a supplied `p^0` instead of `A x^0 - (...) g(p^{-1})`.
pub fn step_from_p0<T: Real>(
    state: &AmpState<T>,
    p0: Vec<C<T>>,
    inst: &ProblemInstance<T>,
    cfg: &AmpConfig,
) -> Result<AmpState<T>> {
    check_dims(state, inst)?;
    let r = residual_from_p(p0, inst, cfg)?;
    update(state, r, cfg.variant, inst.delta)
}

/// Initial point: `x^0` and optionally `p^0`. Without `p^0` the run starts
/// from `g(p^{-1}, y) = 0`, i.e. `p^0 = A x^0`.
#[derive(Clone, Debug)]
pub struct Init<T> {
    pub x0: Vec<C<T>>,
    pub p0: Option<Vec<C<T>>>,
}

impl<T: Real> Init<T> {
    pub fn plain(x0: Vec<C<T>>) -> Self {
        Self { x0, p0: None }
    }
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub state: AmpState<T>,
    pub record: TrialRecord,
}

fn reason_code(e: &Error) -> String {
    match e {
        Error::Singular { .. } => format!("singular: {e}"),
        Error::Stability { .. } => format!("stability: {e}"),
        Error::NonFinite { .. } => format!("non_finite: {e}"),
        other => format!("error: {other}"),
    }
}

/// Runs up to `max_iter` steps, stopping early once the phase-aligned MSE
/// falls below `stop_mse`. Numeric failures end the trial as
/// [`Outcome::Diverged`] with a reason; only dimension errors are returned.
pub fn run<T: Real>(inst: &ProblemInstance<T>, init: Init<T>, cfg: &AmpConfig) -> Result<RunOutput<T>> {
    run_with(inst, init, cfg, |_| {})
}

/// [`run`] with a callback observing every state, including the initial one.
pub fn run_with<T: Real>(
    inst: &ProblemInstance<T>,
    init: Init<T>,
    cfg: &AmpConfig,
    mut observe: impl FnMut(&AmpState<T>),
) -> Result<RunOutput<T>> {
    if init.x0.len() != inst.n {
        return Err(Error::Dimension { expected: inst.n, got: init.x0.len() });
    }
    let mut state = AmpState::new(init.x0, inst.m);
    let mut p0 = init.p0;
    observe(&state);
    let mut rows = vec![TrialRow::measure(0, &state.x, &inst.signal, None)?];
    let mut reason = None;
    let mut done = rows[0].mse < cfg.stop_mse;
    let mut t = 0;
    while !done && t < cfg.max_iter {
        let next = match p0.take() {
            Some(p) => step_from_p0(&state, p, inst, cfg),
            None => step(&state, inst, cfg),
        };
        match next {
            Ok(s) => {
                state = s;
                observe(&state);
                t += 1;
                let row = TrialRow::measure(t, &state.x, &inst.signal, Some(state.div_prev.as_f64()))?;
                done = row.mse < cfg.stop_mse;
                rows.push(row);
            }
            Err(e @ Error::Dimension { .. }) => return Err(e),
            Err(e) => {
                reason = Some(reason_code(&e));
                break;
            }
        }
    }
    let outcome = if reason.is_some() {
        Outcome::Diverged
    } else if rows.last().is_some_and(|r| r.mse < cfg.success_threshold) {
        Outcome::Success
    } else {
        Outcome::Fail
    };
    let record = TrialRecord { seed: 0, config_hash: String::new(), rows, outcome, reason };
    Ok(RunOutput { state, record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_instance, SignalModel};

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn g_examples() {
        let z = c(0.0, 0.0);
        assert_eq!(g_amp(c(1.0, 0.0), 2.0, z), c(1.0, 0.0));
        assert!((g_amp(c(0.0, 3.0), 6.0, z) - c(0.0, 3.0)).norm() < 1e-15);
        let p = c(0.3, -1.2);
        assert!(g_amp(p, p.norm(), z).norm() < 1e-15);
        assert_eq!(g_amp(z, 2.0, z), z);
        assert_eq!(g_amp(z, 2.0, c(1.0, 0.0)), c(2.0, 0.0));
    }

    #[test]
    fn g_smooth_examples() {
        assert_eq!(g_smooth(c(0.0, 0.0), 3.0, 0.1), c(0.0, 0.0));
        assert!(g_smooth(c(1.0, 0.0), 2.0, 3.0).norm() < 1e-15);
        let p = c(0.7, 0.2);
        let exact = g_amp(p, 1.3, c(0.0, 0.0));
        let e1 = (g_smooth(p, 1.3, 1e-4) - exact).norm();
        let e2 = (g_smooth(p, 1.3, 1e-5) - exact).norm();
        assert!(e1 < 1e-3 && e2 < e1 / 5.0);
    }

    #[test]
    fn divergence_examples() {
        let p = vec![c(1.0, 0.0), c(0.0, 2.0)];
        let d = divergence(&p, &[1.0, 1.0]).unwrap();
        assert!((d + 5.0 / 8.0).abs() < 1e-15);
        let y2: Vec<f64> = p.iter().map(|z| 2.0 * z.norm()).collect();
        assert!(divergence(&p, &y2).unwrap().abs() < 1e-15);
        let y1: Vec<f64> = p.iter().map(|z| z.norm()).collect();
        assert!((divergence(&p, &y1).unwrap() + 0.5).abs() < 1e-15);
        let bad = vec![c(1.0, 0.0), c(0.0, 0.0)];
        assert_eq!(divergence(&bad, &[1.0, 1.0]), Err(Error::Singular { index: 1 }));
    }

    #[test]
    fn divergence_smooth_limits() {
        let p = vec![c(0.0, 0.0); 3];
        let y = [1.0, 2.0, 3.0];
        let eps: f64 = 0.04;
        assert!((divergence_smooth(&p, &y, eps) - (2.0 / eps.sqrt() - 1.0)).abs() < 1e-12);
        let p = vec![c(1.0, 0.5), c(-0.3, 0.2), c(0.0, -2.0)];
        let exact = divergence(&p, &y).unwrap();
        let a = (divergence_smooth(&p, &y, 1e-6) - exact).abs();
        let b = (divergence_smooth(&p, &y, 1e-7) - exact).abs();
        assert!(a < 1e-4 && b < a / 5.0);
    }

    #[test]
    fn continuation_examples() {
        assert_eq!(continuation_mu(-0.5, 3.0), 0.0);
        assert_eq!(continuation_mu(0.0, 0.0), 1.0);
        assert!((continuation_mu(-0.25f64, 0.5) - 0.25).abs() < 1e-15);
    }

    fn instance() -> ProblemInstance<f64> {
        gen_instance(SignalModel::ComplexGaussian, 60, 4.0, 0.0, 21).unwrap()
    }

    #[test]
    fn truth_is_fixed_point() {
        let inst = instance();
        let s0 = AmpState::new(inst.signal.clone(), inst.m);
        let cfg = AmpConfig::default();
        let s1 = step_simplified(&s0, &inst, &cfg).unwrap();
        assert!((s1.div_prev + 0.5).abs() < 1e-12);
        assert!(s1.g_prev.iter().all(|g| g.norm() < 1e-12));
        for (a, b) in s1.x.iter().zip(&inst.signal) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_start_smoothed_stays_zero() {
        let inst = instance();
        let s0 = AmpState::new(vec![c(0.0, 0.0); inst.n], inst.m);
        let cfg = AmpConfig { epsilon: 1e-3, ..Default::default() };
        let s1 = step_simplified(&s0, &inst, &cfg).unwrap();
        assert!(s1.x.iter().all(|z| z.norm() == 0.0));
        let mean_y: f64 = inst.observations.iter().sum::<f64>() / inst.m as f64;
        assert!((s1.div_prev - (mean_y / 1e-3f64.sqrt() - 1.0)).abs() < 1e-9);
        // exact nonlinearity is singular there
        let exact = AmpConfig::default();
        assert!(matches!(step_simplified(&s0, &inst, &exact), Err(Error::Singular { .. })));
    }

    #[test]
    fn mu_zero_gives_unit_lambda() {
        let inst = instance();
        let x0: Vec<_> = inst.signal.iter().map(|z| z * 0.5 + c(0.1, 0.0)).collect();
        let mut s = AmpState::new(x0, inst.m);
        let cfg = AmpConfig::default();
        for _ in 0..5 {
            s = match step_regularized(&s, &inst, 0.0, &cfg) {
                Ok(n) => n,
                Err(Error::Stability { .. }) => break,
                Err(e) => panic!("{e}"),
            };
            assert_eq!(s.lambda, 1.0);
        }
    }

    #[test]
    fn huge_mu_shrinks_to_zero() {
        let inst = instance();
        let x0: Vec<_> = inst.signal.iter().map(|z| z * 0.8).collect();
        let s = AmpState::new(x0, inst.m);
        let s1 = step_regularized(&s, &inst, 1e12, &AmpConfig::default()).unwrap();
        assert!(s1.lambda < 1e-10);
        assert!(s1.x.iter().all(|z| z.norm() < 1e-8));
    }

    #[test]
    fn stability_reported() {
        let inst = instance();
        // y = 4|p| everywhere pushes the divergence to +1
        let x0: Vec<_> = inst.signal.iter().map(|z| z * 0.25).collect();
        let s = AmpState::new(x0, inst.m);
        let err = step_regularized(&s, &inst, 0.1, &AmpConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Stability { iter: 0, .. }));
        let out = run(&inst, Init::plain(s.x.clone()), &AmpConfig { variant: Variant::Regularized { mu: 0.1 }, ..Default::default() }).unwrap();
        assert_eq!(out.record.outcome, Outcome::Diverged);
        assert!(out.record.reason.unwrap().starts_with("stability"));
    }

    #[test]
    fn run_from_truth_stays_exact() {
        let inst = instance();
        let cfg = AmpConfig { stop_mse: 0.0, max_iter: 10, ..Default::default() };
        let out = run(&inst, Init::plain(inst.signal.clone()), &cfg).unwrap();
        assert_eq!(out.record.rows.len(), 11);
        assert!(out.record.rows.iter().all(|r| r.mse < 1e-20));
        assert_eq!(out.record.outcome, Outcome::Success);
    }

    #[test]
    fn smoothing_converges_to_exact_trajectory() {
        let inst = instance();
        let x0: Vec<_> = inst.signal.iter().map(|z| z * 0.8 + c(0.05, -0.02)).collect();
        let traj = |eps: f64| {
            let cfg = AmpConfig { epsilon: eps, ..Default::default() };
            let mut s = AmpState::new(x0.clone(), inst.m);
            for _ in 0..5 {
                s = step_simplified(&s, &inst, &cfg).unwrap();
            }
            s.x
        };
        let exact = traj(0.0);
        let gaps: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|e| traj(*e).iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.1 * gaps[0], "{gaps:?}");
    }

    #[test]
    fn run_rejects_bad_dimension() {
        let inst = instance();
        assert!(matches!(
            run(&inst, Init::plain(vec![c(1.0, 0.0); 3]), &AmpConfig::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn p0_override_matches_equivalent_memory() {
        // supplying p0 = A x0 is the same as starting with g_prev = 0
        let inst = instance();
        let x0: Vec<_> = inst.signal.iter().enumerate().map(|(i, z)| z * 0.6 + c(0.01 * i as f64, 0.0)).collect();
        let cfg = AmpConfig::default();
        let s = AmpState::new(x0.clone(), inst.m);
        let a = step_simplified(&s, &inst, &cfg).unwrap();
        let b = step_from_p0(&s, inst.matrix.matvec(&x0), &inst, &cfg).unwrap();
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
