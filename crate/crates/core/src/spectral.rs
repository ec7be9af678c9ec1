//! Decoupled spectral initialization.
//!
//! The direction estimate is the principal eigenvector of
//! `D = A^H diag(T(y)) A` with the processing function
//! `T(y) = (δy² - 1)/(δy² + √δ - 1)`. The starting point handed to AMP.A is
//! `x0 = ρ v` together with `p0 = (1 - 2τ T(y)) ∘ A x0`, where `τ` solves
//! `φ1(δ, τ) = 1/δ` on `(0, τ*)` and `τ*` solves `φ2(δ, τ*) = 1/δ`.
//!
//! With `f = 2τT(Y)/(1 - 2τT(Y))`, `Z ~ CN(0, 1/δ)` and `Y = |Z| + W`:
//!
//! ```text
//! φ1 = E[(δ|Z|² - 1) f],   φ2 = E[f²],   φ3 = E[(δ|Z|² - 1) f²]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::model::{mix_seed, NoiseModel, ProblemInstance};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::scalar::{norm_sqr, Real, C};

/// `sup_y T(y) = 1`, so `1 - 2τT(y) > 0` for every `τ < 1/2`.
pub const TAU_MAX: f64 = 0.5;

/// `(δy² - 1)/(δy² + √δ - 1)`.
pub fn t_opt<T: Real>(y: T, delta: T) -> T {
    let dy2 = delta * y * y;
    (dy2 - T::one()) / (dy2 + delta.sqrt() - T::one())
}

/// Principal eigenpair of `D`.
#[derive(Clone, Debug)]
pub struct EigenPair<T> {
    /// Normalized to `||v||^2 = n`, largest-modulus entry real positive.
    pub vector: Vec<C<T>>,
    pub value: T,
    pub iterations: usize,
    /// `||D v - λ v|| / (|λ| ||v||)`.
    pub residual: f64,
}

/// How the principal eigenpair is computed. Both are matrix-free and apply
/// `D` with one fused sweep over the rows of `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Power iteration on `D + sI` with `s` large enough to make it
    /// positive semidefinite.
    ShiftedPower,
    /// Restarted Lanczos with full reorthogonalization.
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub method: EigenMethod,
    /// Budget in applications of `D`.
    pub max_iter: usize,
    pub tol: f64,
    /// Krylov dimension per Lanczos cycle.
    pub krylov_dim: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { method: EigenMethod::Lanczos, max_iter: 5000, tol: 1e-8, krylov_dim: 64 }
    }
}

impl EigenConfig {
    pub fn power() -> Self {
        Self { method: EigenMethod::ShiftedPower, ..Self::default() }
    }
}

fn rescale<T: Real>(v: &mut [C<T>], target_norm: T) {
    let nrm = norm_sqr(v).sqrt();
    let k = target_norm / nrm;
    for z in v.iter_mut() {
        *z = *z * k;
    }
}

fn fix_phase<T: Real>(v: &mut [C<T>]) {
    let mut best = 0;
    let mut best_mod = T::zero();
    for (i, z) in v.iter().enumerate() {
        let r = z.norm_sqr();
        if r > best_mod {
            best_mod = r;
            best = i;
        }
    }
    if best_mod > T::zero() {
        let u = v[best].conj() / v[best].norm();
        for z in v.iter_mut() {
            *z = *z * u;
        }
        v[best].im = T::zero();
    }
}

// Rayleigh quotient and relative residual of a unit vector given D v
fn rayleigh<T: Real>(v: &[C<T>], dv: &[C<T>]) -> (T, f64) {
    let value: T = v.iter().zip(dv).map(|(a, b)| (a.conj() * b).re).sum();
    let r2: T = dv.iter().zip(v).map(|(d, x)| (d - x * value).norm_sqr()).sum();
    (value, (r2.sqrt() / value.abs()).as_f64())
}

fn finish<T: Real>(mut v: Vec<C<T>>, value: T, iterations: usize, residual: f64) -> EigenPair<T> {
    let n = v.len();
    fix_phase(&mut v);
    rescale(&mut v, T::of(n as f64).sqrt());
    EigenPair { vector: v, value, iterations, residual }
}

/// Largest algebraic eigenpair of `A^H diag(w) A`, started from `A^H y`.
pub fn principal_eigvec_weights<T: Real>(
    inst: &ProblemInstance<T>,
    weights: &[T],
    config: &EigenConfig,
) -> Result<EigenPair<T>> {
    if weights.len() != inst.m {
        return Err(Error::Dimension { expected: inst.m, got: weights.len() });
    }
    let y: Vec<C<T>> = inst.observations.iter().map(|y| C::new(*y, T::zero())).collect();
    let mut v = inst.matrix.adjoint_matvec(&y);
    if !(norm_sqr(&v) > T::zero()) {
        v = vec![C::new(T::one(), T::zero()); inst.n];
    }
    rescale(&mut v, T::one());
    let apply = |v: &[C<T>]| inst.matrix.fused(v, |a, z| z * weights[a]);
    match config.method {
        EigenMethod::ShiftedPower => {
            let min_w = weights.iter().copied().fold(T::infinity(), T::min);
            let edge = T::one() + T::one() / inst.delta.sqrt();
            let shift = (-min_w).max(T::zero()) * edge * edge * T::of(1.1);
            power(v, apply, shift, config)
        }
        EigenMethod::Lanczos => lanczos(v, apply, config),
    }
}

fn power<T: Real>(
    mut v: Vec<C<T>>,
    apply: impl Fn(&[C<T>]) -> Vec<C<T>>,
    shift: T,
    config: &EigenConfig,
) -> Result<EigenPair<T>> {
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iter {
        let dv = apply(&v);
        let (value, res) = rayleigh(&v, &dv);
        residual = res;
        if residual < config.tol {
            return Ok(finish(v, value, it, residual));
        }
        let mut next: Vec<C<T>> = dv.iter().zip(&v).map(|(d, x)| d + x * shift).collect();
        let nn = norm_sqr(&next).sqrt();
        if !(nn > T::zero() && nn.is_finite()) {
            return Err(Error::NonFinite { iter: it });
        }
        rescale(&mut next, T::one());
        v = next;
    }
    Err(Error::Eigen { iters: config.max_iter, residual })
}

// Subtracts the projections of w on every column of q, twice.
fn orthogonalize<T: Real>(w: &mut [C<T>], q: &[Vec<C<T>>]) {
    for _ in 0..2 {
        for qj in q {
            let c = crate::scalar::dotc(qj, w);
            for (wi, qi) in w.iter_mut().zip(qj) {
                *wi = *wi - qi * c;
            }
        }
    }
}

fn lanczos<T: Real>(
    mut v: Vec<C<T>>,
    apply: impl Fn(&[C<T>]) -> Vec<C<T>>,
    config: &EigenConfig,
) -> Result<EigenPair<T>> {
    let kmax = config.krylov_dim.max(2);
    let mut applications = 0;
    let mut residual = f64::INFINITY;
    while applications < config.max_iter {
        let mut q: Vec<Vec<C<T>>> = vec![v.clone()];
        let mut alpha: Vec<f64> = Vec::with_capacity(kmax);
        let mut beta: Vec<f64> = Vec::with_capacity(kmax);
        loop {
            let j = q.len() - 1;
            let mut w = apply(&q[j]);
            applications += 1;
            if j == 0 {
                let (value, res) = rayleigh(&q[0], &w);
                residual = res;
                if residual < config.tol {
                    return Ok(finish(q.swap_remove(0), value, applications, residual));
                }
            }
            alpha.push(crate::scalar::dotc(&q[j], &w).re.as_f64());
            orthogonalize(&mut w, &q);
            let b = norm_sqr(&w).sqrt();
            let k = alpha.len();
            let done = k >= kmax || applications >= config.max_iter || b.as_f64() <= 1e-14 * alpha[0].abs().max(1.0);
            if done || k.is_multiple_of(8) {
                let (theta, coeffs) = top_ritz(&alpha, &beta);
                let est = (b.as_f64() * coeffs[k - 1]).abs() / theta.abs();
                if done || est < 0.1 * config.tol {
                    v = combine(&q[..k], &coeffs);
                    rescale(&mut v, T::one());
                    break;
                }
            }
            beta.push(b.as_f64());
            for wi in w.iter_mut() {
                *wi = *wi / b;
            }
            q.push(w);
        }
    }
    Err(Error::Eigen { iters: config.max_iter, residual })
}

fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = nalgebra::DMatrix::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let (best, theta) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
    (theta, eig.eigenvectors.column(best).iter().copied().collect())
}

fn combine<T: Real>(q: &[Vec<C<T>>], coeffs: &[f64]) -> Vec<C<T>> {
    let n = q[0].len();
    let mut v = vec![C::new(T::zero(), T::zero()); n];
    for (qj, c) in q.iter().zip(coeffs) {
        let c = T::of(*c);
        for (vi, qi) in v.iter_mut().zip(qj) {
            *vi = *vi + qi * c;
        }
    }
    v
}

/// Principal eigenvector of `D = A^H diag(T(y)) A` for a processing function `t`.
pub fn principal_eigvec<T: Real>(
    inst: &ProblemInstance<T>,
    t: impl Fn(T) -> T,
    config: &EigenConfig,
) -> Result<EigenPair<T>> {
    let w: Vec<T> = inst.observations.iter().map(|y| t(*y)).collect();
    principal_eigvec_weights(inst, &w, config)
}

/// `(φ1, φ2, φ3)` at one `(δ, τ, σ_w²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiMoments {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

/// Quadrature settings for the φ expectations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiConfig {
    /// Gauss–Legendre nodes over the truncated `|Z|` range.
    pub radial_nodes: usize,
    /// Truncation of `δ|Z|² ~ Exp(1)`.
    pub u_max: f64,
    /// Gauss–Hermite nodes per noise coordinate.
    pub noise_nodes: usize,
    pub noise_model: NoiseModel,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self { radial_nodes: 256, u_max: 60.0, noise_nodes: 48, noise_model: NoiseModel::Real }
    }
}

struct PhiAcc {
    p1: f64,
    p2: f64,
    p3: f64,
}

impl PhiAcc {
    fn add(&mut self, w: f64, u: f64, f: f64) {
        let f2 = f * f;
        self.p1 += w * (u - 1.0) * f;
        self.p2 += w * f2;
        self.p3 += w * (u - 1.0) * f2;
    }
}

fn f_of(delta: f64, tau: f64, y: f64) -> f64 {
    let t = t_opt(y, delta);
    2.0 * tau * t / (1.0 - 2.0 * tau * t)
}

// Evaluates on the closed interval [0, TAU_MAX]; the endpoint is finite for δ > 1.
fn phi_raw(delta: f64, tau: f64, sigma_w2: f64, cfg: &PhiConfig) -> PhiMoments {
    let mut acc = PhiAcc { p1: 0.0, p2: 0.0, p3: 0.0 };
    if sigma_w2 == 0.0 {
        // u = δ|Z|² ~ Exp(1), Y = sqrt(u/δ)
        let gl = GaussLegendre::new(cfg.radial_nodes);
        for (u, w) in gl.mapped(0.0, cfg.u_max) {
            let y = (u / delta).sqrt();
            acc.add(w * (-u).exp(), u, f_of(delta, tau, y));
        }
    } else {
        // r = |Z| with density 2δ r e^{-δ r²}, smooth in r
        let gl = GaussLegendre::new(cfg.radial_nodes);
        let gh = GaussHermite::new(cfg.noise_nodes);
        let r_max = (cfg.u_max / delta).sqrt();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        for (r, wr) in gl.mapped(0.0, r_max) {
            let u = delta * r * r;
            let dens = wr * 2.0 * delta * r * (-u).exp();
            match cfg.noise_model {
                NoiseModel::Real => {
                    let s = (2.0 * sigma_w2).sqrt();
                    for (x, wx) in gh.pairs() {
                        let y = r + s * x;
                        acc.add(dens * wx * inv_sqrt_pi, u, f_of(delta, tau, y));
                    }
                }
                NoiseModel::CircularComplex => {
                    // each coordinate of W has variance σ_w²/2
                    let s = sigma_w2.sqrt();
                    for (x1, w1) in gh.pairs() {
                        for (x2, w2) in gh.pairs() {
                            let y = ((r + s * x1).powi(2) + (s * x2).powi(2)).sqrt();
                            acc.add(dens * w1 * w2 / std::f64::consts::PI, u, f_of(delta, tau, y));
                        }
                    }
                }
            }
        }
    }
    PhiMoments { phi1: acc.p1, phi2: acc.p2.max(0.0), phi3: acc.p3 }
}

fn check_delta(delta: f64, min: f64) -> Result<()> {
    if !(delta > min && delta.is_finite()) {
        return param(format!("delta must exceed {min}, got {delta}"));
    }
    Ok(())
}

fn check_sigma(sigma_w2: f64) -> Result<()> {
    if !(sigma_w2 >= 0.0 && sigma_w2.is_finite()) {
        return param(format!("sigma_w2 must be nonnegative, got {sigma_w2}"));
    }
    Ok(())
}

/// `(φ1, φ2, φ3)` for `0 <= τ < TAU_MAX`.
pub fn phi_moments(delta: f64, tau: f64, sigma_w2: f64) -> Result<PhiMoments> {
    phi_moments_with(delta, tau, sigma_w2, &PhiConfig::default())
}

pub fn phi_moments_with(delta: f64, tau: f64, sigma_w2: f64, cfg: &PhiConfig) -> Result<PhiMoments> {
    check_delta(delta, 1.0)?;
    check_sigma(sigma_w2)?;
    if !(0.0..TAU_MAX).contains(&tau) {
        return param(format!("tau = {tau} must lie in [0, tau_max = {TAU_MAX})"));
    }
    Ok(phi_raw(delta, tau, sigma_w2, cfg))
}

const BISECT_TOL: f64 = 1e-10;
// φ2(δ, τ_max) - 1/δ at or below this is treated as having no interior root
const BOUNDARY_TOL: f64 = 1e-12;

fn bisect(mut lo: f64, mut hi: f64, what: &'static str, mut g: impl FnMut(f64) -> f64) -> Result<f64> {
    let (glo, ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::Bracket { what, lo, hi });
    }
    let neg_lo = glo < 0.0;
    while hi - lo > BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(τ, τ*)`. When `φ2(δ, ·)` stays at or below `1/δ` all the way to
/// `TAU_MAX` (the noiseless case, where `φ2(δ, 1/2) = 1/δ` exactly), `τ*` is
/// reported as `TAU_MAX`.
pub fn solve_tau(delta: f64, sigma_w2: f64) -> Result<(f64, f64)> {
    solve_tau_with(delta, sigma_w2, &PhiConfig::default())
}

pub fn solve_tau_with(delta: f64, sigma_w2: f64, cfg: &PhiConfig) -> Result<(f64, f64)> {
    check_delta(delta, 2.0)?;
    check_sigma(sigma_w2)?;
    let target = 1.0 / delta;
    let g2 = |t: f64| phi_raw(delta, t, sigma_w2, cfg).phi2 - target;
    let tau_star = if g2(TAU_MAX) <= BOUNDARY_TOL {
        TAU_MAX
    } else {
        bisect(0.0, TAU_MAX, "phi2(delta, tau*) = 1/delta", g2)?
    };
    let g1 = |t: f64| phi_raw(delta, t, sigma_w2, cfg).phi1 - target;
    let tau = bisect(0.0, tau_star, "phi1(delta, tau) = 1/delta", g1)?;
    Ok((tau, tau_star))
}

/// `|α0|² = (1 - δφ2)/(1 + δφ3)` at the `τ` of [`solve_tau`], and
/// `σ0² = 1 - |α0|²`.
pub fn predict_finding1(delta: f64, sigma_w2: f64) -> Result<(f64, f64)> {
    let (tau, _) = solve_tau(delta, sigma_w2)?;
    predict_at_tau(delta, tau, sigma_w2)
}

fn predict_at_tau(delta: f64, tau: f64, sigma_w2: f64) -> Result<(f64, f64)> {
    let phi = phi_moments(delta, tau, sigma_w2)?;
    let a2 = (1.0 - delta * phi.phi2) / (1.0 + delta * phi.phi3);
    if !(0.0..=1.0).contains(&a2) {
        return Err(Error::Inconsistent(format!("|alpha0|^2 = {a2} outside [0, 1] at delta = {delta}")));
    }
    Ok((a2, 1.0 - a2))
}

/// Output of [`decoupled_init`].
#[derive(Clone, Debug)]
pub struct SpectralInit<T> {
    pub x0: Vec<C<T>>,
    pub p0: Vec<C<T>>,
    pub tau: f64,
    pub tau_star: f64,
    pub rho: f64,
    pub predicted_alpha0_sq: f64,
    pub predicted_sigma2_0: f64,
    pub eigenvalue: f64,
    pub eigen_iterations: usize,
}

/// `||y|| / sqrt(n)`.
pub fn default_rho<T: Real>(inst: &ProblemInstance<T>) -> f64 {
    let s: f64 = inst.observations.iter().map(|y| y.as_f64().powi(2)).sum();
    (s / inst.n as f64).sqrt()
}

/// Decoupled spectral initialization with `ρ` defaulting to `||y||/√n`.
pub fn decoupled_init<T: Real>(inst: &ProblemInstance<T>, rho: Option<f64>) -> Result<SpectralInit<T>> {
    let delta = inst.delta.as_f64();
    let sigma_w2 = inst.sigma_w2.as_f64();
    let (tau, tau_star) = solve_tau(delta, sigma_w2)?;
    let (a2, s2) = predict_at_tau(delta, tau, sigma_w2)?;
    let mut init = decoupled_init_at(inst, rho, tau, &EigenConfig::default())?;
    init.tau_star = tau_star;
    init.predicted_alpha0_sq = a2;
    init.predicted_sigma2_0 = s2;
    Ok(init)
}

/// Same construction with an explicit `τ`; predictions are left as NaN.
pub fn decoupled_init_at<T: Real>(
    inst: &ProblemInstance<T>,
    rho: Option<f64>,
    tau: f64,
    eig: &EigenConfig,
) -> Result<SpectralInit<T>> {
    check_delta(inst.delta.as_f64(), 1.0)?;
    let delta = inst.delta;
    let weights: Vec<T> = inst.observations.iter().map(|y| t_opt(*y, delta)).collect();
    let pair = principal_eigvec_weights(inst, &weights, eig)?;
    let rho = rho.unwrap_or_else(|| default_rho(inst));
    let x0: Vec<C<T>> = pair.vector.iter().map(|z| z * T::of(rho)).collect();
    let ax = inst.matrix.matvec(&x0);
    let two_tau = T::of(2.0 * tau);
    let p0 = ax.iter().zip(&weights).map(|(z, w)| z * (T::one() - two_tau * *w)).collect();
    Ok(SpectralInit {
        x0,
        p0,
        tau,
        tau_star: f64::NAN,
        rho,
        predicted_alpha0_sq: f64::NAN,
        predicted_sigma2_0: f64::NAN,
        eigenvalue: pair.value.as_f64(),
        eigen_iterations: pair.iterations,
    })
}

/// Result of [`amps_run`].
#[derive(Clone, Debug)]
pub struct AmpsOutput<T> {
    /// Estimate with `||x||^2 = n`.
    pub x: Vec<C<T>>,
    pub p: Vec<C<T>>,
    pub tau_hat: f64,
    /// `||p - (A x - τ h(p, τ))|| / ||p||` at exit.
    pub fixed_point_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpsConfig {
    pub max_iter: usize,
    /// Exit once the fixed-point residual drops below this.
    pub tol: f64,
    /// Weight `γ` of the new value in `τ^t = (1 - γ) τ^{t-1} + γ c/(δ d)`.
    pub damping: f64,
    pub seed: u64,
}

impl Default for AmpsConfig {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-10, damping: 0.5, seed: 0 }
    }
}

/// Message passing form of the spectral method.
///
/// With `h(p, y, τ) = 2T(y)/(1 - 2τT(y)) p`, `d_t = -div_p(h_t) > 0` and
/// `c_t = √n/||r^t||`:
///
/// ```text
/// τ^t     = (1 - γ) τ^{t-1} + γ c_{t-1} / (δ d_{t-1})
/// p^t     = A x^t - τ^t h(p^{t-1}, y, τ^{t-1})
/// r^t     = x^t + A^H h(p^t, y, τ^t) / d_t
/// x^{t+1} = c_t r^t
/// ```
///
/// so that a fixed point satisfies `p = A x - τ h(p, y, τ)` with
/// `τ = c/(δ d)`. With `γ = 1` the first steps overshoot `τ` past the range
/// where `1 - 2τT(y) > 0`; damping only changes the transient.
///
/// Starts from a seeded random `x^0` with `||x^0||^2 = n`, `τ^0 = 0` and
/// `p^0 = A x^0`.
pub fn amps_run<T: Real>(inst: &ProblemInstance<T>, t: impl Fn(T) -> T, config: &AmpsConfig) -> Result<AmpsOutput<T>> {
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return param(format!("damping must lie in (0, 1], got {}", config.damping));
    }
    let (iters, tol, seed) = (config.max_iter, config.tol, config.seed);
    let gamma = T::of(config.damping);
    let (n, m) = (inst.n, inst.m);
    let delta = inst.delta;
    let tv: Vec<T> = inst.observations.iter().map(|y| t(*y)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 4));
    let mut x: Vec<C<T>> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C::new(T::of(re), T::of(im))
        })
        .collect();
    let sqrt_n = T::of(n as f64).sqrt();
    rescale(&mut x, sqrt_n);

    let zero = C::new(T::zero(), T::zero());
    let mut h_prev = vec![zero; m];
    let mut tau = T::zero();
    let mut p = vec![zero; m];
    let mut residual = f64::INFINITY;
    let two = T::of(2.0);
    for it in 0..iters {
        if let Some(a) = tv.iter().position(|w| !(T::one() - two * tau * *w > T::zero())) {
            // 1 - 2τT(y_a) must stay positive on the observed data
            return Err(Error::Stability { iter: it, value: (T::one() - two * tau * tv[a]).as_f64() });
        }
        let coef: Vec<T> = tv.iter().map(|w| two * *w / (T::one() - two * tau * *w)).collect();
        let d = -(coef.iter().copied().sum::<T>() / T::of(m as f64));
        if !(d > T::zero()) {
            return Err(Error::Stability { iter: it, value: d.as_f64() });
        }
        let mut h = vec![zero; m];
        let mut r2 = T::zero();
        let mut p2 = T::zero();
        let back = inst.matrix.fused(&x, |a, ax| {
            let pa = ax - h_prev[a] * tau;
            let ha = pa * coef[a];
            let e = pa - (ax - ha * tau);
            r2 = r2 + e.norm_sqr();
            p2 = p2 + pa.norm_sqr();
            p[a] = pa;
            h[a] = ha;
            ha
        });
        residual = (r2 / p2).sqrt().as_f64();
        if residual < tol && it > 0 {
            return Ok(AmpsOutput { x, p, tau_hat: tau.as_f64(), fixed_point_residual: residual, iterations: it });
        }
        let r: Vec<C<T>> = x.iter().zip(&back).map(|(xi, bi)| xi + bi / d).collect();
        let c = sqrt_n / norm_sqr(&r).sqrt();
        x = r.iter().map(|z| z * c).collect();
        if !crate::scalar::all_finite(&x) {
            return Err(Error::NonFinite { iter: it });
        }
        tau = (T::one() - gamma) * tau + gamma * c / (delta * d);
        h_prev = h;
    }
    Ok(AmpsOutput { x, p, tau_hat: tau.as_f64(), fixed_point_residual: residual, iterations: iters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_instance, SignalModel};

    fn inst(n: usize, delta: f64, sw2: f64, seed: u64) -> ProblemInstance<f64> {
        gen_instance(SignalModel::ComplexGaussian, n, delta, sw2, seed).unwrap()
    }

    #[test]
    fn t_opt_values() {
        assert!(t_opt(0.5f64, 4.0).abs() < 1e-15);
        assert!((t_opt(0.0f64, 4.0) + 1.0).abs() < 1e-15);
        assert!((t_opt(1e6f64, 4.0) - 1.0).abs() < 1e-9);
        for y in [0.0, 0.3, 1.0, 3.0, 50.0] {
            assert!(t_opt(y, 2.5f64) < 1.0);
        }
    }

    #[test]
    fn phi_reference_point() {
        let p = phi_moments(4.0, 0.2, 0.0).unwrap();
        assert!((p.phi1 - 0.152_147_848_05).abs() < 1e-9);
        assert!((p.phi2 - 0.028_185_152_55).abs() < 1e-9);
        assert!((p.phi3 - 0.007_481_390_19).abs() < 1e-9);
    }

    #[test]
    fn phi_vanishes_at_zero_tau() {
        let p = phi_moments(3.0, 0.0, 0.01).unwrap();
        assert_eq!((p.phi1, p.phi2, p.phi3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn phi_rejects_bad_arguments() {
        assert!(phi_moments(4.0, 0.5, 0.0).is_err());
        assert!(phi_moments(4.0, -0.1, 0.0).is_err());
        assert!(phi_moments(0.9, 0.2, 0.0).is_err());
        assert!(phi_moments(4.0, 0.2, -1.0).is_err());
    }

    #[test]
    fn solve_tau_table() {
        let table = [
            (2.2, 0.403_248_647_315_194_83, 0.347_540_718_265_787_4),
            (2.5, 0.383_809_184_859_273_96, 0.408_283_112_749_100_1),
            (3.0, 0.355_818_431_446_095_93, 0.490_011_192_615_653_46),
            (4.0, 0.312_674_599_903_402_85, 0.602_327_308_792_177_9),
            (6.0, 0.257_081_977_237_248_8, 0.722_960_336_760_548_4),
        ];
        for (delta, tau, a2) in table {
            let (t, ts) = solve_tau(delta, 0.0).unwrap();
            assert_eq!(ts, TAU_MAX);
            assert!((t - tau).abs() < 1e-9, "tau at {delta}");
            let phi = phi_moments(delta, t, 0.0).unwrap();
            assert!((delta * phi.phi1 - 1.0).abs() < 1e-8);
            let (p, s) = predict_finding1(delta, 0.0).unwrap();
            assert!((p - a2).abs() < 1e-8 && (p + s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn noisy_tau_star_is_interior() {
        let (tau, tau_star) = solve_tau(4.0, 0.01).unwrap();
        assert!(tau_star < TAU_MAX && tau < tau_star);
        assert!((tau - 0.31874).abs() < 1e-4 && (tau_star - 0.48155).abs() < 1e-4);
        let phi = phi_moments(4.0, tau_star, 0.01).unwrap();
        assert!((phi.phi2 - 0.25).abs() < 1e-8);
    }

    #[test]
    fn lanczos_matches_power() {
        let ins = inst(200, 4.0, 0.0, 3);
        let w: Vec<f64> = ins.observations.iter().map(|y| t_opt(*y, ins.delta)).collect();
        let a = principal_eigvec_weights(&ins, &w, &EigenConfig::default()).unwrap();
        let b = principal_eigvec_weights(&ins, &w, &EigenConfig { tol: 1e-10, ..EigenConfig::power() }).unwrap();
        assert!((a.value - b.value).abs() < 1e-6 * a.value.abs());
        let ov = crate::scalar::dotc(&a.vector, &b.vector).norm() / 200.0;
        assert!(ov > 1.0 - 1e-6, "overlap {ov}");
        assert!((norm_sqr(&a.vector) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn unit_weights_give_top_singular_vector() {
        // compare with a dense Hermitian eigensolve of A^H A
        let ins = inst(30, 4.0, 0.0, 9);
        let n = ins.n;
        let cols: Vec<Vec<C<f64>>> = (0..n)
            .map(|j| {
                let mut e = vec![C::new(0.0, 0.0); n];
                e[j] = C::new(1.0, 0.0);
                ins.matrix.adjoint_matvec(&ins.matrix.matvec(&e))
            })
            .collect();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| cols[j][i]);
        let top = dense.symmetric_eigen().eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        let pair = principal_eigvec(&ins, |_| 1.0, &EigenConfig::default()).unwrap();
        assert!((pair.value - top).abs() < 1e-8 * top);
    }

    #[test]
    fn decoupled_init_shapes() {
        let ins = inst(300, 4.0, 0.0, 5);
        let s = decoupled_init(&ins, Some(2.0)).unwrap();
        assert!((norm_sqr(&s.x0) - 4.0 * 300.0).abs() < 1e-8);
        let ax = ins.matrix.matvec(&s.x0);
        for (a, ((p, z), y)) in s.p0.iter().zip(&ax).zip(&ins.observations).enumerate().take(20) {
            let expect = z * (1.0 - 2.0 * s.tau * t_opt(*y, ins.delta));
            assert!((p - expect).norm() < 1e-12, "row {a}");
        }
        assert!((s.predicted_alpha0_sq - 0.602_327_308_8).abs() < 1e-8);
    }

    #[test]
    fn amps_reaches_its_fixed_point() {
        let ins = inst(800, 4.0, 0.0, 1);
        let d = ins.delta;
        let out = amps_run(&ins, |y| t_opt(y, d), &AmpsConfig::default()).unwrap();
        assert!(out.fixed_point_residual < 1e-10);
        let (tau, _) = solve_tau(d, 0.0).unwrap();
        assert!((out.tau_hat - tau).abs() < 5e-2, "tau_hat {}", out.tau_hat);
        let pair = principal_eigvec(&ins, |y| t_opt(y, d), &EigenConfig::default()).unwrap();
        let ov = crate::scalar::dotc(&out.x, &pair.vector).norm() / 800.0;
        assert!(ov > 0.999, "alignment {ov}");
    }
}
