//! Fractional Brownian motion on a uniform grid.
//!
//! Fractional Gaussian noise is synthesized by circulant embedding
//! (Davies–Harte). One complex FFT yields two independent paths: the real and
//! imaginary parts. A dense Cholesky factor is the fallback when the embedding
//! has a negative eigenvalue.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Relative size below which a negative embedding eigenvalue is treated as
/// rounding noise and clamped to zero.
const EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbmMethod {
    CirculantEmbedding,
    Cholesky,
}

/// `Cov(W^H(s), W^H(t)) = ½(|s|^{2H} + |t|^{2H} − |s−t|^{2H})`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (s.abs().powf(p) + t.abs().powf(p) - (s - t).abs().powf(p))
}

/// Autocovariance of fractional Gaussian noise with step `du` at lag `k`.
fn fgn_autocov(hurst: f64, du: f64, k: usize) -> f64 {
    let p = 2.0 * hurst;
    let k = k as f64;
    0.5 * du.powf(p) * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// `W^H(i·du)` for `i = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub hurst: f64,
    pub du: f64,
    values: Vec<f64>,
}

impl FbmPath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `W(u) = B(u + k·du) − B(k·du)`, which is again an fBm; used to place
    /// the origin inside a path synthesized on `[−k·du, U]`.
    pub fn shifted(&self, k: usize) -> FbmPath {
        let origin = self.values[k];
        FbmPath {
            hurst: self.hurst,
            du: self.du,
            values: self.values[k..].iter().map(|v| v - origin).collect(),
        }
    }
}

enum Factor {
    /// `sqrt(λ_k / m)` of the circulant embedding of size `m = 2N`.
    Embedding {
        scale: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    /// Row-major lower-triangular Cholesky factor of the `N × N` fGn covariance.
    Cholesky(Vec<f64>),
}

/// Precomputed synthesis plan for one `(H, n_steps, du)`.
pub struct FbmSynthesizer {
    hurst: f64,
    du: f64,
    n_steps: usize,
    factor: Factor,
}

impl std::fmt::Debug for FbmSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSynthesizer")
            .field("hurst", &self.hurst)
            .field("du", &self.du)
            .field("n_steps", &self.n_steps)
            .field("method", &self.method())
            .finish()
    }
}

impl FbmSynthesizer {
    /// Circulant embedding, falling back to Cholesky if it is not
    /// nonnegative definite.
    pub fn new(hurst: f64, n_steps: usize, du: f64) -> Result<Self> {
        match Self::with_method(hurst, n_steps, du, FbmMethod::CirculantEmbedding) {
            Err(Error::Synthesis(msg)) => {
                log::warn!("{msg}; falling back to Cholesky synthesis");
                Self::with_method(hurst, n_steps, du, FbmMethod::Cholesky)
            }
            other => other,
        }
    }

    pub fn with_method(hurst: f64, n_steps: usize, du: f64, method: FbmMethod) -> Result<Self> {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::InvalidParameter(format!("Hurst exponent {hurst} must lie in (1/2, 1)")));
        }
        if n_steps == 0 || !(du > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need at least one step of positive size, got n_steps = {n_steps}, du = {du}"
            )));
        }
        let factor = match method {
            FbmMethod::CirculantEmbedding => embedding(hurst, n_steps, du)?,
            FbmMethod::Cholesky => cholesky(hurst, n_steps, du)?,
        };
        Ok(FbmSynthesizer {
            hurst,
            du,
            n_steps,
            factor,
        })
    }

    pub fn method(&self) -> FbmMethod {
        match self.factor {
            Factor::Embedding { .. } => FbmMethod::CirculantEmbedding,
            Factor::Cholesky(_) => FbmMethod::Cholesky,
        }
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }
    pub fn du(&self) -> f64 {
        self.du
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn cumulate(&self, noise: impl Iterator<Item = f64>) -> FbmPath {
        let mut values = Vec::with_capacity(self.n_steps + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for x in noise.take(self.n_steps) {
            acc += x;
            values.push(acc);
        }
        FbmPath {
            hurst: self.hurst,
            du: self.du,
            values,
        }
    }

    /// Two independent paths.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (FbmPath, FbmPath) {
        match &self.factor {
            Factor::Embedding { scale, fft } => {
                let mut buf: Vec<Complex<f64>> = scale
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let a = self.cumulate(buf.iter().map(|c| c.re));
                let b = self.cumulate(buf.iter().map(|c| c.im));
                (a, b)
            }
            Factor::Cholesky(_) => (self.sample(rng), self.sample(rng)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath {
        match &self.factor {
            Factor::Embedding { .. } => self.sample_pair(rng).0,
            Factor::Cholesky(l) => {
                let n = self.n_steps;
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let noise = (0..n).map(|i| {
                    let row = &l[i * n..i * n + i + 1];
                    row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                });
                self.cumulate(noise)
            }
        }
    }
}

fn embedding(hurst: f64, n: usize, du: f64) -> Result<Factor> {
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    for (j, cj) in c.iter_mut().enumerate() {
        let lag = if j <= n { j } else { m - j };
        *cj = Complex::new(fgn_autocov(hurst, du, lag), 0.0);
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut c);
    let top = c.iter().map(|z| z.re).fold(0.0, f64::max);
    let low = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if low < -EIGEN_TOLERANCE * top {
        return Err(Error::Synthesis(format!(
            "circulant embedding of size {m} has eigenvalue {low:e} < 0"
        )));
    }
    let scale = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
    Ok(Factor::Embedding { scale, fft })
}

fn cholesky(hurst: f64, n: usize, du: f64) -> Result<Factor> {
    let acov: Vec<f64> = (0..n).map(|k| fgn_autocov(hurst, du, k)).collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = acov[i - j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Synthesis(format!(
                        "fGn covariance (H = {hurst}, {n} steps) not positive definite at pivot {i}: {s:e}"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(Factor::Cholesky(l))
}

/// A single path on `[0, u_max]`.
pub fn sample_fbm(hurst: f64, u_max: f64, du: f64, seed: u64) -> Result<FbmPath> {
    let n_steps = (u_max / du).round() as usize;
    let synth = FbmSynthesizer::new(hurst, n_steps, du)?;
    Ok(synth.sample(&mut substream(seed, Purpose::Fbm, 0)))
}
