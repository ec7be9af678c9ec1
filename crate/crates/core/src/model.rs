//! Reproducible problem instances: signal, Gaussian sensing matrix with
//! entry variance `1/m`, and noisy amplitude observations
//! `y_a = |(A x)_a| + w_a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{norm_sqr, Real, C};

/// How the true signal is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalModel {
    /// iid `CN(0, 1)` entries.
    ComplexGaussian,
    /// `round(sparsity * n)` equal positive entries, the rest zero.
    NonnegSparse { sparsity: f64 },
}

/// Additive noise convention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `y = |Ax| + w`, `w ~ N(0, sigma_w2)`.
    #[default]
    Real,
    /// `y = |Ax + w|`, `w ~ CN(0, sigma_w2)`; the stored noise is `y - |Ax|`.
    CircularComplex,
}

/// SplitMix64 finalizer. Used to fan a master seed out to sub-streams and
/// trials: `mix_seed(master, k)` is a pure function of its inputs.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SIGNAL: u64 = 1;
const STREAM_MATRIX: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One draw of the measurement model.
#[derive(Clone, Debug)]
pub struct ProblemInstance<T> {
    pub n: usize,
    pub m: usize,
    /// `m / n`, exactly.
    pub delta: T,
    pub sigma_w2: T,
    pub noise_model: NoiseModel,
    pub signal: Vec<C<T>>,
    pub matrix: CMatrix<T>,
    pub noise: Vec<T>,
    pub observations: Vec<T>,
}

/// Draws a signal with `(1/n) ||x||^2 = 1`.
pub fn gen_signal<T: Real>(model: SignalModel, n: usize, seed: u64) -> Result<Vec<C<T>>> {
    if n == 0 {
        return param("signal dimension n must be at least 1");
    }
    let mut rng = rng_for(seed, STREAM_SIGNAL);
    let raw: Vec<(f64, f64)> = match model {
        SignalModel::ComplexGaussian => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            (0..n).map(|_| (s * normal(&mut rng), s * normal(&mut rng))).collect()
        }
        SignalModel::NonnegSparse { sparsity } => {
            if !(sparsity > 0.0 && sparsity <= 1.0) {
                return param(format!("sparsity must lie in (0, 1], got {sparsity}"));
            }
            let k = (sparsity * n as f64).round() as usize;
            if k == 0 {
                return param(format!("sparsity {sparsity} leaves no nonzero entry at n = {n}"));
            }
            let support = rand::seq::index::sample(&mut rng, n, k);
            let mut v = vec![(0.0, 0.0); n];
            for i in support.iter() {
                v[i] = (1.0, 0.0);
            }
            v
        }
    };
    let power: f64 = raw.iter().map(|(r, i)| r * r + i * i).sum::<f64>() / n as f64;
    let scale = 1.0 / power.sqrt();
    Ok(raw
        .into_iter()
        .map(|(r, i)| C::new(T::of(r * scale), T::of(i * scale)))
        .collect())
}

/// Draws `A` with iid `CN(0, 1/m)` entries (real and imaginary parts each of
/// variance `1/(2m)`), row by row.
pub fn gen_matrix<T: Real>(m: usize, n: usize, seed: u64) -> CMatrix<T> {
    let mut rng = rng_for(seed, STREAM_MATRIX);
    let s = (0.5 / m as f64).sqrt();
    CMatrix::from_fn(m, n, |_, _| {
        let re = s * normal(&mut rng);
        let im = s * normal(&mut rng);
        C::new(T::of(re), T::of(im))
    })
}

/// Builds a full instance. `m = round(delta * n)` and the stored `delta` is
/// recomputed as `m / n`.
pub fn gen_instance<T: Real>(
    model: SignalModel,
    n: usize,
    delta: f64,
    sigma_w2: f64,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    gen_instance_with(model, NoiseModel::Real, n, delta, sigma_w2, seed)
}

pub fn gen_instance_with<T: Real>(
    model: SignalModel,
    noise_model: NoiseModel,
    n: usize,
    delta: f64,
    sigma_w2: f64,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return param(format!("delta must be positive, got {delta}"));
    }
    if !(sigma_w2 >= 0.0 && sigma_w2.is_finite()) {
        return param(format!("sigma_w2 must be nonnegative, got {sigma_w2}"));
    }
    let m = (delta * n as f64).round() as usize;
    if m == 0 {
        return param("m = round(delta * n) must be at least 1");
    }
    let signal = gen_signal::<T>(model, n, seed)?;
    let matrix = gen_matrix::<T>(m, n, seed);
    let clean: Vec<C<T>> = matrix.matvec(&signal);
    let mut rng = rng_for(seed, STREAM_NOISE);
    let sd = sigma_w2.sqrt();
    let noise: Vec<T> = match noise_model {
        NoiseModel::Real => (0..m).map(|_| T::of(sd * normal(&mut rng))).collect(),
        NoiseModel::CircularComplex => {
            let s = sd * std::f64::consts::FRAC_1_SQRT_2;
            clean
                .iter()
                .map(|z| {
                    let w = C::new(T::of(s * normal(&mut rng)), T::of(s * normal(&mut rng)));
                    (z + w).norm() - z.norm()
                })
                .collect()
        }
    };
    let observations = clean.iter().zip(&noise).map(|(z, w)| z.norm() + *w).collect();
    Ok(ProblemInstance {
        n,
        m,
        delta: T::of(m as f64 / n as f64),
        sigma_w2: T::of(sigma_w2),
        noise_model,
        signal,
        matrix,
        noise,
        observations,
    })
}

impl<T: Real> ProblemInstance<T> {
    /// Assembles an instance from explicit parts; observations are
    /// `|A x| + noise`.
    pub fn from_parts(signal: Vec<C<T>>, matrix: CMatrix<T>, noise: Vec<T>, sigma_w2: T) -> Result<Self> {
        if matrix.cols() != signal.len() {
            return Err(Error::Dimension { expected: matrix.cols(), got: signal.len() });
        }
        if matrix.rows() != noise.len() {
            return Err(Error::Dimension { expected: matrix.rows(), got: noise.len() });
        }
        let (m, n) = (matrix.rows(), matrix.cols());
        let observations = matrix
            .matvec(&signal)
            .iter()
            .zip(&noise)
            .map(|(z, w)| z.norm() + *w)
            .collect();
        Ok(Self {
            n,
            m,
            delta: T::of(m as f64 / n as f64),
            sigma_w2,
            noise_model: NoiseModel::Real,
            signal,
            matrix,
            noise,
            observations,
        })
    }

    /// `(1/n) ||x*||^2`.
    pub fn signal_power(&self) -> T {
        norm_sqr(&self.signal) / T::of(self.n as f64)
    }

    pub fn clean_amplitudes(&self) -> Vec<T> {
        self.matrix.matvec(&self.signal).iter().map(|z| z.norm()).collect()
    }
}

/// `||A x||^2 / (m sigma_w2)`; `f64::INFINITY` when `sigma_w2 = 0`.
pub fn snr<T: Real>(instance: &ProblemInstance<T>) -> f64 {
    let s = instance.sigma_w2.as_f64();
    if s <= 0.0 {
        return f64::INFINITY;
    }
    let energy: f64 = instance.matrix.matvec(&instance.signal).iter().map(|z| z.norm_sqr().as_f64()).sum();
    energy / (instance.m as f64 * s)
}

/// Noise variance giving a nominal SNR (linear) for a unit-power signal:
/// `E||Ax||^2 = n`, so `sigma_w2 = 1 / (delta * snr)`.
pub fn sigma_w2_for_snr(delta: f64, snr_linear: f64) -> f64 {
    1.0 / (delta * snr_linear)
}

pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

/// Flat JSON dump. Complex arrays are interleaved `(re, im)` pairs; the
/// matrix is row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InstanceDump {
    pub schema_version: u32,
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub sigma_w2: f64,
    pub noise_model: NoiseModel,
    pub signal: Vec<f64>,
    pub matrix: Vec<f64>,
    pub noise: Vec<f64>,
    pub observations: Vec<f64>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn to_dump(&self) -> InstanceDump {
        let mut matrix = Vec::with_capacity(2 * self.m * self.n);
        for a in 0..self.m {
            for i in 0..self.n {
                let z = self.matrix.get(a, i);
                matrix.push(z.re.as_f64());
                matrix.push(z.im.as_f64());
            }
        }
        InstanceDump {
            schema_version: INSTANCE_SCHEMA_VERSION,
            n: self.n,
            m: self.m,
            delta: self.delta.as_f64(),
            sigma_w2: self.sigma_w2.as_f64(),
            noise_model: self.noise_model,
            signal: self.signal.iter().flat_map(|z| [z.re.as_f64(), z.im.as_f64()]).collect(),
            matrix,
            noise: self.noise.iter().map(|w| w.as_f64()).collect(),
            observations: self.observations.iter().map(|y| y.as_f64()).collect(),
        }
    }

    pub fn from_dump(d: &InstanceDump) -> Result<Self> {
        if d.schema_version != INSTANCE_SCHEMA_VERSION {
            return param(format!("unsupported instance schema version {}", d.schema_version));
        }
        if d.signal.len() != 2 * d.n || d.matrix.len() != 2 * d.n * d.m || d.noise.len() != d.m || d.observations.len() != d.m {
            return param("instance dump arrays do not match (n, m)");
        }
        let pair = |v: &[f64], k: usize| C::new(T::of(v[2 * k]), T::of(v[2 * k + 1]));
        Ok(Self {
            n: d.n,
            m: d.m,
            delta: T::of(d.delta),
            sigma_w2: T::of(d.sigma_w2),
            noise_model: d.noise_model,
            signal: (0..d.n).map(|k| pair(&d.signal, k)).collect(),
            matrix: CMatrix::from_fn(d.m, d.n, |a, i| pair(&d.matrix, a * d.n + i)),
            noise: d.noise.iter().map(|w| T::of(*w)).collect(),
            observations: d.observations.iter().map(|y| T::of(*y)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_signal_single_entry() {
        let x = gen_signal::<f64>(SignalModel::NonnegSparse { sparsity: 0.1 }, 10, 7).unwrap();
        let nz: Vec<_> = x.iter().filter(|z| z.norm() > 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert!((nz[0].re - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(nz[0].im, 0.0);
    }

    #[test]
    fn sparse_signal_count_and_power() {
        let x = gen_signal::<f64>(SignalModel::NonnegSparse { sparsity: 0.1 }, 1000, 3).unwrap();
        let nz = x.iter().filter(|z| z.re > 0.0).count();
        assert_eq!(nz, 100);
        assert!(x.iter().all(|z| z.im == 0.0 && z.re >= 0.0));
        assert!((norm_sqr(&x) / 1000.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_sparsity_rejected() {
        for s in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                gen_signal::<f64>(SignalModel::NonnegSparse { sparsity: s }, 10, 0),
                Err(Error::Parameter(_))
            ));
        }
        assert!(gen_signal::<f64>(SignalModel::ComplexGaussian, 0, 0).is_err());
    }

    #[test]
    fn gaussian_signal_power() {
        let n = 5000;
        // the raw draw, before rescaling, has power close to one
        let mut rng = rng_for(11, STREAM_SIGNAL);
        let raw: f64 = (0..2 * n).map(|_| 0.5 * normal(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((0.95..=1.05).contains(&raw));
        let x = gen_signal::<f64>(SignalModel::ComplexGaussian, n, 11).unwrap();
        assert!((norm_sqr(&x) / n as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_signal::<f64>(SignalModel::ComplexGaussian, 50, 9).unwrap();
        let b = gen_signal::<f64>(SignalModel::ComplexGaussian, 50, 9).unwrap();
        let c = gen_signal::<f64>(SignalModel::ComplexGaussian, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dimensions_and_delta() {
        let inst = gen_instance::<f64>(SignalModel::ComplexGaussian, 1000, 2.5, 0.0, 1).unwrap();
        assert_eq!(inst.m, 2500);
        assert_eq!(inst.delta, 2.5);
        assert!(inst.observations.iter().all(|y| *y >= 0.0));
        let inst = gen_instance::<f64>(SignalModel::ComplexGaussian, 7, 2.3, 0.0, 1).unwrap();
        assert_eq!(inst.m, 16);
        assert_eq!(inst.delta, 16.0 / 7.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_instance::<f64>(SignalModel::ComplexGaussian, 10, 0.0, 0.0, 1).is_err());
        assert!(gen_instance::<f64>(SignalModel::ComplexGaussian, 10, 1.0, -1.0, 1).is_err());
        assert!(gen_instance::<f64>(SignalModel::ComplexGaussian, 10, 0.01, 0.0, 1).is_err());
    }

    #[test]
    fn snr_sentinel_and_scaling() {
        let base = gen_instance::<f64>(SignalModel::ComplexGaussian, 200, 2.0, 0.0, 4).unwrap();
        assert_eq!(snr(&base), f64::INFINITY);
        let mut a = base.clone();
        a.sigma_w2 = 1e-3;
        let mut b = base.clone();
        b.sigma_w2 = 2e-3;
        assert_eq!(snr(&a), 2.0 * snr(&b));
    }

    #[test]
    fn mix_seed_spreads() {
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_ne!(mix_seed(0, 1), mix_seed(1, 0));
        assert_eq!(mix_seed(42, 3), mix_seed(42, 3));
    }

    #[test]
    fn circular_noise_keeps_invariant() {
        let inst = gen_instance_with::<f64>(SignalModel::ComplexGaussian, NoiseModel::CircularComplex, 50, 3.0, 0.01, 2).unwrap();
        for ((y, w), c) in inst.observations.iter().zip(&inst.noise).zip(inst.clean_amplitudes()) {
            assert!(*y >= 0.0);
            assert!((y - w - c).abs() < 1e-12 * (1.0 + c));
        }
    }

    #[test]
    fn dump_roundtrip() {
        let inst = gen_instance::<f64>(SignalModel::ComplexGaussian, 6, 2.0, 0.1, 5).unwrap();
        let d = inst.to_dump();
        let text = serde_json::to_string(&d).unwrap();
        let back: InstanceDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let re = ProblemInstance::<f64>::from_dump(&back).unwrap();
        assert_eq!(re.signal, inst.signal);
        assert_eq!(re.matrix, inst.matrix);
        assert_eq!(re.observations, inst.observations);
    }
}
