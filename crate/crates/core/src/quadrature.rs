//! Gauss–Legendre and Gauss–Hermite rules.
//!
//! Nodes come from `gauss-quad` in `f64` and are converted to the working
//! scalar on use.

use crate::scalar::Real;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let rule = gauss_quad::GaussLegendre::new(n).expect("Gauss-Legendre needs at least two nodes");
        let (nodes, weights) = rule.into_node_weight_pairs().into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(node, weight)` pairs mapped onto `[lo, hi]`.
    pub fn mapped<T: Real>(&self, lo: T, hi: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (hi - lo) * T::of(0.5);
        let mid = lo + half;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * T::of(*x), half * T::of(*w)))
    }

    pub fn integrate<T: Real>(&self, lo: T, hi: T, mut f: impl FnMut(T) -> T) -> T {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule on `[0, hi]` with panel edges at `scale * ratio^k`,
    /// resolving integrands whose structure sits at width `scale` near the
    /// origin. Falls back to a single panel when `scale` is not small.
    pub fn integrate_graded<T: Real>(&self, hi: T, scale: T, ratio: T, mut f: impl FnMut(T) -> T) -> T {
        let mut total = T::zero();
        let mut lo = T::zero();
        let mut edge = scale;
        let cutoff = hi * T::of(0.5);
        while edge.is_finite() && edge > T::zero() && edge < cutoff {
            total = total + self.integrate(lo, edge, &mut f);
            lo = edge;
            edge = edge * ratio;
        }
        total + self.integrate(lo, hi, &mut f)
    }
}

/// Gauss–Hermite rule for `∫ e^{-x^2} f(x) dx`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        let rule = gauss_quad::GaussHermite::new(n).expect("Gauss-Hermite needs at least two nodes");
        let (nodes, weights) = rule.into_node_weight_pairs().into_iter().unzip();
        Self { nodes, weights }
    }

    /// Expectation of `f(W)` for `W ~ N(0, sigma^2)`.
    pub fn expect_normal<T: Real>(&self, sigma: T, mut f: impl FnMut(T) -> T) -> T {
        let scale = sigma * T::SQRT_2();
        let norm = T::one() / T::PI().sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| T::of(*w) * norm * f(scale * T::of(*x)))
            .sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let q = GaussLegendre::new(8);
        // degree 15 is exact for 8 nodes
        let v = q.integrate(0.0f64, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = q.mapped(-1.0f64, 1.0).map(|(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_large_order_weights_sum() {
        for n in [64, 256, 512] {
            let q = GaussLegendre::new(n);
            let v = q.integrate(0.0f64, std::f64::consts::FRAC_PI_2, |t| t.sin());
            assert!((v - 1.0).abs() < 1e-14, "n={n} v={v}");
        }
    }

    #[test]
    fn graded_rule_resolves_narrow_feature() {
        // ∫_0^{π/2} sin^2 t / sqrt(sin^2 t + s^2) -> 1 as s -> 0
        let q = GaussLegendre::new(32);
        let s2 = 1e-16f64;
        let g = q.integrate_graded(std::f64::consts::FRAC_PI_2, s2.sqrt(), 4.0, |t| {
            let st = t.sin();
            st * st / (st * st + s2).sqrt()
        });
        assert!((g - 1.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_moments() {
        let q = GaussHermite::new(20);
        let m0 = q.expect_normal(1.5f64, |_| 1.0);
        let m2 = q.expect_normal(1.5f64, |w| w * w);
        let m4 = q.expect_normal(1.5f64, |w| w.powi(4));
        assert!((m0 - 1.0).abs() < 1e-13);
        assert!((m2 - 2.25).abs() < 1e-12);
        assert!((m4 - 3.0 * 2.25f64.powi(2)).abs() < 1e-11);
    }
}
