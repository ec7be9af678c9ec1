//! State evolution for complex AMP.A.
//!
//! With `a = |alpha|` the maps are
//!
//! ```text
//! psi1 = e^{i arg alpha} ∫_0^{π/2} a sin²θ / sqrt(a² sin²θ + σ²) dθ
//! psi2 = (4/δ)(a² + σ² + 1) - (4/δ) ∫_0^{π/2} (2a² sin²θ + σ²) / sqrt(a² sin²θ + σ²) dθ + 4σ_w²
//! ```
//!
//! Near `(1, 0)` the integrands vary on the scale `θ ~ σ/a`, which a single
//! fixed-order rule does not resolve once `σ/a` is much smaller than the node
//! spacing at the origin. When that ratio is small the integral is split into
//! panels graded geometrically toward zero.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::metrics::fmt17;
use crate::quadrature::GaussLegendre;
use crate::scalar::{Real, C};

/// One SE state `(alpha, sigma2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SePoint<T> {
    pub alpha: C<T>,
    pub sigma2: T,
}

impl<T: Real> SePoint<T> {
    pub fn new(alpha: C<T>, sigma2: T) -> Self {
        Self { alpha, sigma2 }
    }

    /// Real nonnegative `alpha`.
    pub fn real(alpha: T, sigma2: T) -> Self {
        Self { alpha: C::new(alpha, T::zero()), sigma2 }
    }

    /// `(1 - |alpha|)^2 + sigma2`.
    pub fn amse(&self) -> T {
        let d = T::one() - self.alpha.norm();
        d * d + self.sigma2
    }
}

/// `(1 - |alpha|)^2 + sigma2`.
pub fn amse<T: Real>(point: &SePoint<T>) -> T {
    point.amse()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub quad_nodes: usize,
    pub max_iter: usize,
    pub conv_tol_alpha: f64,
    pub conv_tol_sigma2: f64,
    /// Successive-change threshold for declaring some other fixed point.
    pub fixed_point_tol: f64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            quad_nodes: 256,
            max_iter: 1000,
            conv_tol_alpha: 1e-6,
            conv_tol_sigma2: 1e-9,
            fixed_point_tol: 1e-12,
        }
    }
}

impl SeConfig {
    /// Budget used for basin rasterization.
    pub fn basin() -> Self {
        Self { max_iter: 10_000, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.quad_nodes < 64 {
            return param(format!("quad_nodes must be at least 64, got {}", self.quad_nodes));
        }
        Ok(())
    }
}

/// `(64/π² - 4, 2)`.
pub fn thresholds() -> (f64, f64) {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    (64.0 / pi2 - 4.0, 2.0)
}

// below this sigma/|alpha| the integrand is resolved with graded panels
const GRADE_BELOW: f64 = 0.05;
const GRADE_RATIO: f64 = 4.0;

/// Precomputed quadrature for the SE integrals.
#[derive(Clone, Debug)]
pub struct SeQuadrature<T> {
    // (sin² θ_k, w_k) of the single-panel rule on [0, π/2]
    single: Vec<(T, T)>,
    panel: GaussLegendre,
}

impl<T: Real> SeQuadrature<T> {
    pub fn new(quad_nodes: usize) -> Self {
        let rule = GaussLegendre::new(quad_nodes);
        let single = rule
            .mapped(T::zero(), T::FRAC_PI_2())
            .map(|(t, w)| {
                let s = t.sin();
                (s * s, w)
            })
            .collect();
        Self { single, panel: GaussLegendre::new((quad_nodes / 8).max(16)) }
    }

    /// `(∫ a s²/r, ∫ (2a²s² + σ²)/r)` with `r = sqrt(a²s² + σ²)`.
    pub fn integrals(&self, a: T, sigma2: T) -> (T, T) {
        let a2 = a * a;
        let term = |s2: T| {
            let r = (a2 * s2 + sigma2).sqrt();
            (a * s2 / r, (a2 * s2 * T::of(2.0) + sigma2) / r)
        };
        let b = sigma2.sqrt() / a;
        if b < T::of(GRADE_BELOW) {
            let graded = |k: usize| {
                self.panel.integrate_graded(T::FRAC_PI_2(), b, T::of(GRADE_RATIO), |t| {
                    let s = t.sin();
                    let (u, v) = term(s * s);
                    if k == 0 {
                        u
                    } else {
                        v
                    }
                })
            };
            (graded(0), graded(1))
        } else {
            self.single.iter().fold((T::zero(), T::zero()), |(u, v), &(s2, w)| {
                let (p, q) = term(s2);
                (u + w * p, v + w * q)
            })
        }
    }

    /// `(psi1, psi2)` at `point`.
    pub fn map(&self, point: SePoint<T>, delta: T, sigma_w2: T) -> Result<SePoint<T>> {
        let a = point.alpha.norm();
        let s2 = point.sigma2;
        let four_d = T::of(4.0) / delta;
        let noise = T::of(4.0) * sigma_w2;
        if a == T::zero() && s2 == T::zero() {
            return Ok(SePoint::new(C::new(T::zero(), T::zero()), four_d + noise));
        }
        let (j1, j2) = if a == T::zero() {
            // integrands reduce to 0 and σ
            (T::zero(), s2.sqrt() * T::FRAC_PI_2())
        } else {
            self.integrals(a, s2)
        };
        let phase = if a > T::zero() { point.alpha / a } else { C::new(T::zero(), T::zero()) };
        let alpha = phase * j1;
        let base = four_d * (a * a + s2 + T::one()) - four_d * j2;
        let mut sigma2 = base + noise;
        if sigma2 < T::zero() {
            if sigma2 > T::of(-1e-12) {
                log::warn!("clamping sigma2 = {sigma2:e} to zero");
                sigma2 = T::zero();
            } else {
                return Err(Error::Inconsistent(format!("SE map produced sigma2 = {sigma2:e}")));
            }
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite() && sigma2.is_finite()) {
            return Err(Error::NonFinite { iter: 0 });
        }
        Ok(SePoint::new(alpha, sigma2))
    }
}

/// One application of `(psi1, psi2)`.
pub fn se_map<T: Real>(point: SePoint<T>, delta: T, sigma_w2: T, config: &SeConfig) -> Result<SePoint<T>> {
    config.validate()?;
    check_params(delta, sigma_w2)?;
    SeQuadrature::new(config.quad_nodes).map(point, delta, sigma_w2)
}

fn check_params<T: Real>(delta: T, sigma_w2: T) -> Result<()> {
    if !(delta > T::zero() && delta.is_finite()) {
        return param(format!("delta must be positive, got {delta}"));
    }
    if !(sigma_w2 >= T::zero() && sigma_w2.is_finite()) {
        return param(format!("sigma_w2 must be nonnegative, got {sigma_w2}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeClass {
    /// Reached `(1, 0)` within tolerance.
    ConvergedToOne,
    /// Stalled at some other fixed point.
    ConvergedToOther,
    NotConverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeRun<T> {
    /// Iterates, starting with the initial point.
    pub points: Vec<SePoint<T>>,
    pub class: SeClass,
}

impl<T: Real> SeRun<T> {
    pub fn last(&self) -> SePoint<T> {
        *self.points.last().expect("an SE run holds its initial point")
    }

    pub fn iterations(&self) -> usize {
        self.points.len() - 1
    }
}

fn near_one<T: Real>(p: &SePoint<T>, c: &SeConfig) -> bool {
    (T::one() - p.alpha.norm()).abs() < T::of(c.conv_tol_alpha) && p.sigma2 < T::of(c.conv_tol_sigma2)
}

/// Iterates the SE from `init` and classifies where it ends up.
pub fn se_run<T: Real>(init: SePoint<T>, delta: T, sigma_w2: T, config: &SeConfig) -> Result<SeRun<T>> {
    config.validate()?;
    check_params(delta, sigma_w2)?;
    let quad = SeQuadrature::new(config.quad_nodes);
    se_run_with(&quad, init, delta, sigma_w2, config)
}

/// [`se_run`] reusing a precomputed rule.
pub fn se_run_with<T: Real>(
    quad: &SeQuadrature<T>,
    init: SePoint<T>,
    delta: T,
    sigma_w2: T,
    config: &SeConfig,
) -> Result<SeRun<T>> {
    if init.alpha.norm() == T::zero() && init.sigma2 == T::zero() {
        return param("SE initial point (0, 0) is excluded");
    }
    if !(init.sigma2 >= T::zero()) {
        return param(format!("initial sigma2 must be nonnegative, got {}", init.sigma2));
    }
    let mut points = vec![init];
    let mut cur = init;
    let tol = T::of(config.fixed_point_tol);
    for _ in 0..config.max_iter {
        let next = quad.map(cur, delta, sigma_w2)?;
        points.push(next);
        if near_one(&next, config) {
            return Ok(SeRun { points, class: SeClass::ConvergedToOne });
        }
        let change = (next.alpha - cur.alpha).norm().max((next.sigma2 - cur.sigma2).abs());
        if change < tol {
            return Ok(SeRun { points, class: SeClass::ConvergedToOther });
        }
        cur = next;
    }
    let class = if config.max_iter == 0 && near_one(&init, config) {
        SeClass::ConvergedToOne
    } else {
        SeClass::NotConverged
    };
    Ok(SeRun { points, class })
}

/// Basin of attraction of `(1, 0)` on an equispaced grid over `[0, 1]^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub delta: f64,
    pub alpha0: Vec<f64>,
    pub sigma2_0: Vec<f64>,
    /// Row-major over `(alpha0, sigma2_0)`.
    pub converged: Vec<bool>,
}

impl BasinGrid {
    pub fn get(&self, i_alpha: usize, j_sigma: usize) -> bool {
        self.converged[i_alpha * self.sigma2_0.len() + j_sigma]
    }

    /// True iff every converged cell of `self` also converges in `other`.
    pub fn is_subset_of(&self, other: &BasinGrid) -> bool {
        self.converged.len() == other.converged.len()
            && self.converged.iter().zip(&other.converged).all(|(a, b)| !*a || *b)
    }

    pub fn count(&self) -> usize {
        self.converged.iter().filter(|c| **c).count()
    }
}

fn linspace(k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..k).map(|i| i as f64 / (k - 1) as f64).collect(),
    }
}

/// Runs the noiseless SE from every cell of a `grid.0 x grid.1` lattice.
/// Cells with `alpha0 = 0` never leave the `alpha = 0` axis and are false.
pub fn basin_grid(delta: f64, grid: (usize, usize), config: &SeConfig) -> Result<BasinGrid> {
    config.validate()?;
    check_params(delta, 0.0)?;
    let alpha0 = linspace(grid.0);
    let sigma2_0 = linspace(grid.1);
    let quad = SeQuadrature::<f64>::new(config.quad_nodes);
    let cells: Vec<(f64, f64)> = alpha0.iter().flat_map(|a| sigma2_0.iter().map(move |s| (*a, *s))).collect();
    let converged = cells
        .par_iter()
        .map(|&(a, s)| {
            if a == 0.0 {
                return Ok(false);
            }
            let run = se_run_with(&quad, SePoint::real(a, s), delta, 0.0, config)?;
            Ok(run.class == SeClass::ConvergedToOne)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(BasinGrid { delta, alpha0, sigma2_0, converged })
}

/// High-SNR slope of AMSE against the noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSlope {
    /// Extrapolated `lim AMSE/σ_w²`.
    pub estimate: f64,
    /// `4 / (1 - 2/δ)`.
    pub closed_form: f64,
    /// `(σ_w², AMSE at the noisy fixed point)`.
    pub levels: Vec<(f64, f64)>,
}

pub const NOISE_LEVELS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// `4 / (1 - 2/δ)`.
pub fn noise_slope_closed_form(delta: f64) -> f64 {
    4.0 / (1.0 - 2.0 / delta)
}

/// Runs the SE to its noisy fixed point at each of [`NOISE_LEVELS`], starting
/// from `(1, 0)`, and extrapolates `AMSE/σ_w²` linearly to `σ_w² = 0` from
/// the two smallest levels.
pub fn noise_slope(delta: f64, config: &SeConfig) -> Result<NoiseSlope> {
    config.validate()?;
    check_params(delta, 0.0)?;
    let quad = SeQuadrature::<f64>::new(config.quad_nodes);
    let mut levels = Vec::with_capacity(NOISE_LEVELS.len());
    for &s in &NOISE_LEVELS {
        let run = se_run_with(&quad, SePoint::real(1.0, 0.0), delta, s, config)?;
        if run.class != SeClass::ConvergedToOther {
            return Err(Error::SeNotConverged { sigma_w2: s });
        }
        levels.push((s, run.last().amse()));
    }
    let (s1, e1) = levels[1];
    let (s2, e2) = levels[2];
    let (r1, r2) = (e1 / s1, e2 / s2);
    let estimate = (s1 * r2 - s2 * r1) / (s1 - s2);
    Ok(NoiseSlope { estimate, closed_form: noise_slope_closed_form(delta), levels })
}

/// CSV with columns `t, abs_alpha, sigma2, amse`.
pub fn write_trajectory_csv<W: Write, T: Real>(out: W, points: &[SePoint<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "abs_alpha", "sigma2", "amse"])?;
    for (t, p) in points.iter().enumerate() {
        w.write_record([
            t.to_string(),
            fmt17(p.alpha.norm().as_f64()),
            fmt17(p.sigma2.as_f64()),
            fmt17(p.amse().as_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `alpha0, sigma2_0, converged`.
pub fn write_basin_csv<W: Write>(out: W, grid: &BasinGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha0", "sigma2_0", "converged"])?;
    for (i, a) in grid.alpha0.iter().enumerate() {
        for (j, s) in grid.sigma2_0.iter().enumerate() {
            w.write_record([fmt17(*a), fmt17(*s), grid.get(i, j).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    // complete elliptic integrals K(k), E(k) by the arithmetic-geometric mean
    fn elliptic(k2: f64) -> (f64, f64) {
        let (mut a, mut b) = (1.0f64, (1.0 - k2).sqrt());
        let mut sum = 0.5 * k2;
        let mut pow = 0.5;
        for _ in 0..40 {
            let c = 0.5 * (a - b);
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            pow *= 2.0;
            sum += pow * c * c;
            a = an;
            b = bn;
            if c.abs() < 1e-17 {
                break;
            }
        }
        let k = std::f64::consts::PI / (2.0 * a);
        (k, k * (1.0 - sum))
    }

    fn closed_form(a: f64, s2: f64, delta: f64, sw2: f64) -> (f64, f64) {
        let c = (a * a + s2).sqrt();
        let (k, e) = elliptic(a * a / (c * c));
        let i1 = (e - k * s2 / (c * c)) * c / (a * a);
        let psi1 = a * i1;
        let psi2 = 4.0 / delta * (a * a + s2 + 1.0 - c * e - a * a * i1) + 4.0 * sw2;
        (psi1, psi2)
    }

    fn quad() -> SeQuadrature<f64> {
        SeQuadrature::new(256)
    }

    #[test]
    fn elliptic_reference_values() {
        let (k, e) = elliptic(0.5);
        assert!((k - 1.854_074_677_301_372).abs() < 1e-14);
        assert!((e - 1.350_643_881_047_675_5).abs() < 1e-14);
    }

    #[test]
    fn map_matches_elliptic_closed_form() {
        let q = quad();
        for &(a, s2) in &[(0.1, 0.99), (0.5, 0.5), (1.0, 0.2), (0.9, 1e-3), (1.0, 1e-8), (0.3, 1e-12), (2.0, 3.0)] {
            for &delta in &[2.5, 4.0] {
                let p = q.map(SePoint::real(a, s2), delta, 0.0).unwrap();
                let (r1, r2) = closed_form(a, s2, delta, 0.0);
                assert!((p.alpha.re - r1).abs() < 1e-12 * r1.abs().max(1.0), "psi1 at ({a}, {s2})");
                assert!(p.alpha.im.abs() < 1e-15);
                assert!((p.sigma2 - r2).abs() < 1e-12, "psi2 at ({a}, {s2}): {} vs {r2}", p.sigma2);
            }
        }
    }

    #[test]
    fn perfect_recovery_is_fixed() {
        let p = quad().map(SePoint::real(1.0, 0.0), 3.0, 0.0).unwrap();
        assert!((p.alpha.re - 1.0).abs() < 1e-14 && p.sigma2.abs() < 1e-14);
    }

    #[test]
    fn origin_maps_to_pure_noise() {
        let p = quad().map(SePoint::real(0.0, 0.0), 4.0, 0.01).unwrap();
        assert_eq!(p.alpha, C::new(0.0, 0.0));
        assert!((p.sigma2 - 1.04).abs() < 1e-15);
    }

    #[test]
    fn zero_alpha_stays_zero() {
        let p = quad().map(SePoint::real(0.0, 0.5), 4.0, 0.0).unwrap();
        assert_eq!(p.alpha.norm(), 0.0);
        let expect = (0.5 + 1.0 - 0.5f64.sqrt() * std::f64::consts::FRAC_PI_2) * 1.0;
        assert!((p.sigma2 - expect).abs() < 1e-14);
    }

    #[test]
    fn phase_equivariance() {
        let q = quad();
        let base = q.map(SePoint::real(0.6, 0.3), 3.0, 0.0).unwrap();
        for phi in [0.4, 2.0, -1.1] {
            let r = C::from_polar(1.0, phi);
            let p = q.map(SePoint::new(r * 0.6, 0.3), 3.0, 0.0).unwrap();
            assert!((p.alpha - base.alpha * r).norm() < 1e-14);
            assert!((p.sigma2 - base.sigma2).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_enters_additively() {
        let q = quad();
        let p0 = q.map(SePoint::real(0.7, 0.2), 3.0, 0.0).unwrap();
        let p1 = q.map(SePoint::real(0.7, 0.2), 3.0, 0.025).unwrap();
        assert_eq!(p0.alpha, p1.alpha);
        assert!((p1.sigma2 - p0.sigma2 - 0.1).abs() < 1e-14);
    }

    #[test]
    fn doubling_nodes_changes_little() {
        let (a, b) = (SeQuadrature::<f64>::new(256), SeQuadrature::<f64>::new(512));
        for &(al, s2) in &[(0.2, 0.9), (1.0, 1e-6), (0.8, 0.04)] {
            let p = a.map(SePoint::real(al, s2), 2.5, 0.0).unwrap();
            let r = b.map(SePoint::real(al, s2), 2.5, 0.0).unwrap();
            assert!((p.alpha - r.alpha).norm() < 1e-13 && (p.sigma2 - r.sigma2).abs() < 1e-13);
        }
    }

    #[test]
    fn f32_agrees_with_f64() {
        let p = SeQuadrature::<f32>::new(256).map(SePoint::real(0.5f32, 0.4), 3.0, 0.0).unwrap();
        let r = quad().map(SePoint::real(0.5, 0.4), 3.0, 0.0).unwrap();
        assert!((p.alpha.re as f64 - r.alpha.re).abs() < 1e-5);
        assert!((p.sigma2 as f64 - r.sigma2).abs() < 1e-5);
    }

    #[test]
    fn threshold_values() {
        let (lo, hi) = thresholds();
        assert!((lo - 2.484_555_753_1).abs() < 1e-8);
        assert_eq!(hi, 2.0);
    }

    #[test]
    fn recovery_above_threshold() {
        let run = se_run(SePoint::real(0.1, 0.99), 4.0, 0.0, &SeConfig::default()).unwrap();
        assert_eq!(run.class, SeClass::ConvergedToOne);
        assert!(run.last().amse() < 1e-5);
        let run = se_run(SePoint::real(0.1, 0.99), 2.49, 0.0, &SeConfig::basin()).unwrap();
        assert_eq!(run.class, SeClass::ConvergedToOne);
    }

    #[test]
    fn no_recovery_below_two() {
        let run = se_run(SePoint::real(0.1, 0.99), 1.9, 0.0, &SeConfig::default()).unwrap();
        assert_ne!(run.class, SeClass::ConvergedToOne);
        let run = se_run(SePoint::real(0.1, 0.99), 2.0, 0.0, &SeConfig::default()).unwrap();
        assert_eq!(run.class, SeClass::ConvergedToOther);
    }

    #[test]
    fn origin_start_rejected() {
        assert!(matches!(
            se_run(SePoint::real(0.0, 0.0), 4.0, 0.0, &SeConfig::default()),
            Err(Error::Parameter(_))
        ));
        assert!(se_map(SePoint::real(0.5, 0.5), -1.0, 0.0, &SeConfig::default()).is_err());
        assert!(SeConfig { quad_nodes: 8, ..SeConfig::default() }.validate().is_err());
    }

    #[test]
    fn noise_slope_matches_closed_form() {
        let s = noise_slope(4.0, &SeConfig::default()).unwrap();
        assert!((s.estimate / s.closed_form - 1.0).abs() < 1e-2);
        assert_eq!(noise_slope_closed_form(4.0), 8.0);
    }

    #[test]
    fn trajectory_csv_header() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[SePoint::real(1.0, 0.0)]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,abs_alpha,sigma2,amse\n"));
    }
}
