//! Closed-form laws behind the thresholds and powers:
//!
//! * the tail of `sup_{t>0}[Π(t) − t]` for a Poisson process `Π` of rate `γ < 1` (Pyke),
//! * the law of `argmax_{t≥0}[Π(t) − t]`, a geometric sum of i.i.d. `η_k` (Pflug),
//! * the Neyman–Pearson test of the cusp limit (Gaussian) and of the jump
//!   limit (randomized Poisson).
//!
//! With `γ = ln ρ/(ρ−1)` the jump limit is `ln Z(u) = ln ρ [Π(u/γ) − u/γ]`,
//! so `ln sup Z = ln ρ · sup[Π(t) − t]` and `û = γ · t̂`.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }
    fn value(&self) -> f64 {
        self.s + self.c
    }
}

fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `γ = ln ρ/(ρ−1)`, the rate of `Π` after the change of time.
pub fn gamma_of_rho(rho: f64) -> f64 {
    rho.ln() / (rho - 1.0)
}

// ---------------------------------------------------------------- normal

/// `P(ζ > x)` for standard normal `ζ`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `z_ε` with `P(ζ > z_ε) = ε`.
pub fn normal_upper_quantile(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let mut z = statrs::distribution::ContinuousCDF::inverse_cdf(
        &statrs::distribution::Normal::standard(),
        1.0 - eps,
    );
    if !z.is_finite() {
        z = 0.0;
    }
    // Newton on the complementary error function for full relative accuracy
    for _ in 0..50 {
        let step = (normal_sf(z) - eps) / normal_pdf(z);
        z += step;
        if step.abs() < 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    Ok(z)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level eps = {eps} must lie in (0, 1)")))
    }
}

// ---------------------------------------------------------------- Poisson

/// `P(X = k)` for `X ~ Poisson(mu)`.
pub fn poisson_pmf(mu: f64, k: u64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mu.ln() - mu - ln_factorial(k)).exp()
}

/// `P(X ≤ k)`.
pub fn poisson_cdf(mu: f64, k: u64) -> f64 {
    let mut s = Sum::default();
    for j in 0..=k {
        s.add(poisson_pmf(mu, j));
    }
    s.value().min(1.0)
}

/// `P(X > k)`, summed upward so small tails keep their relative accuracy.
pub fn poisson_sf(mu: f64, k: u64) -> f64 {
    if (k as f64) < mu {
        return (1.0 - poisson_cdf(mu, k)).max(0.0);
    }
    let mut s = Sum::default();
    let mut j = k + 1;
    loop {
        let term = poisson_pmf(mu, j);
        s.add(term);
        if term <= 1e-18 * s.value() || term == 0.0 {
            return s.value();
        }
        j += 1;
    }
}

// ---------------------------------------------------------------- Pyke

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Poisson rate gamma = {gamma} must lie in (0, 1)")))
    }
}

/// `P{sup_{t>0}[Π(t) − t] ≥ x}` for `x > 0`; at `x = 0` the series gives
/// `P{sup > 0} = γ`.
///
/// The series `Σ_{m>x} (m−x)^m/m! (γe^{−γ})^m e^{γx}(1−γ)` is summed in log
/// space. Successive term ratios are bounded by `γe^{−γ} exp(m/(m−x))`, which
/// decreases in `m`; summation stops once that bound makes the remainder
/// negligible.
pub fn pyke_tail(gamma: f64, x: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x = {x} must be nonnegative")));
    }
    let ln_z = gamma.ln() - gamma;
    let ln_const = gamma * x + (1.0 - gamma).ln();
    let mut m = x.floor() as u64 + 1;
    let mut s = Sum::default();
    for _ in 0..10_000_000 {
        let mf = m as f64;
        let d = mf - x;
        let ln_term = mf * d.ln() - ln_factorial(m) + mf * ln_z + ln_const;
        let term = ln_term.exp();
        s.add(term);
        let ratio = (ln_z + mf / d).exp();
        if ratio < 1.0 {
            let remainder = term * ratio / (1.0 - ratio);
            if remainder <= 1e-17 * s.value() || remainder < 1e-300 {
                return Ok(s.value().min(1.0));
            }
        }
        m += 1;
    }
    Err(Error::Domain(format!("Pyke series did not converge at gamma = {gamma}, x = {x}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PykeQuantile {
    pub x: f64,
    /// `ε ≥ γ`: every `x > 0` has tail below `ε`, the quantile is 0.
    pub saturated: bool,
}

/// Smallest `x` with `pyke_tail(γ, x) ≤ ε`, to `1e−9`.
pub fn pyke_quantile(gamma: f64, eps: f64) -> Result<PykeQuantile> {
    check_gamma(gamma)?;
    check_eps(eps)?;
    if eps >= gamma {
        return Ok(PykeQuantile { x: 0.0, saturated: true });
    }
    let mut hi = 1.0;
    while pyke_tail(gamma, hi)? > eps {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if pyke_tail(gamma, mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PykeQuantile { x: hi, saturated: false })
}

// ---------------------------------------------------------------- Pflug

/// Step of the tabulated `η` CDF and of the renewal grid.
const PFLUG_STEP: f64 = 0.005;
/// The renewal grid stops once `P(t̂ > z)` drops below this.
const RENEWAL_TAIL: f64 = 1e-9;

/// Law of `t̂ = argmax_{t≥0}[Π(t) − t] = Σ_{k=1}^{ν} η_k` with
/// `P(ν = i) = (1−γ)γ^i`.
#[derive(Debug, Clone)]
pub struct PflugLaw {
    gamma: f64,
    /// `F_η(k·h)` for the table.
    eta_table: Vec<f64>,
    /// `P(t̂ ≤ k·h)` by renewal convolution.
    renewal: Vec<f64>,
}

impl PflugLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let h = PFLUG_STEP;
        let mut eta_table = vec![0.0];
        let mut k = 0usize;
        loop {
            k += 1;
            let v = eta_cdf_closed(gamma, k as f64 * h);
            eta_table.push(v);
            if 1.0 - v < 1e-13 || k > 20_000_000 {
                break;
            }
        }
        let renewal = renewal_cdf(gamma, &eta_table);
        Ok(PflugLaw {
            gamma,
            eta_table,
            renewal,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `P(t̂ = 0) = P(ν = 0)`.
    pub fn mass_at_zero(&self) -> f64 {
        1.0 - self.gamma
    }

    /// `P(η ≤ x)` from the closed form.
    pub fn eta_cdf(&self, x: f64) -> f64 {
        eta_cdf_closed(self.gamma, x)
    }

    /// `P(t̂ ≤ z)` by the numeric renewal convolution, linearly interpolated.
    pub fn cdf(&self, z: f64) -> f64 {
        if z < 0.0 {
            return 0.0;
        }
        let x = z / PFLUG_STEP;
        let i = x.floor() as usize;
        if i + 1 >= self.renewal.len() {
            return 1.0;
        }
        let f = x - i as f64;
        self.renewal[i] + f * (self.renewal[i + 1] - self.renewal[i])
    }

    /// `P(t̂ ≤ z)` at each `z`, estimated from one set of `samples` draws.
    pub fn cdf_mc(&self, zs: &[f64], samples: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, Purpose::Pflug, 0);
        let mut hits = vec![0usize; zs.len()];
        for _ in 0..samples {
            let t = self.sample(&mut rng);
            for (h, &z) in hits.iter_mut().zip(zs) {
                if t <= z {
                    *h += 1;
                }
            }
        }
        hits.into_iter().map(|h| h as f64 / samples as f64).collect()
    }

    /// One `η` by inverting the closed-form CDF: table bracket, then bisection.
    pub fn sample_eta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let t = &self.eta_table;
        let i = t.partition_point(|&v| v < u);
        if i >= t.len() {
            // beyond the table; 1 − F < 1e−13 there
            let mut lo = (t.len() - 1) as f64 * PFLUG_STEP;
            let mut hi = 2.0 * lo;
            while eta_cdf_closed(self.gamma, hi) < u {
                lo = hi;
                hi *= 2.0;
            }
            return bisect_cdf(self.gamma, u, lo, hi);
        }
        if i == 0 {
            return 0.0;
        }
        bisect_cdf(self.gamma, u, (i - 1) as f64 * PFLUG_STEP, i as f64 * PFLUG_STEP)
    }

    /// One draw of `t̂`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // rand_distr's Geometric(p) counts failures before a success with probability p
        let nu = Geometric::new(1.0 - self.gamma).expect("valid probability").sample(rng);
        (0..nu).map(|_| self.sample_eta(rng)).sum()
    }

    /// `z` with `P(t̂ > z) = ε`; `0` when `ε ≥ γ`.
    pub fn upper_quantile(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        if eps >= self.gamma {
            return Ok(0.0);
        }
        let target = 1.0 - eps;
        let i = self.renewal.partition_point(|&v| v < target);
        if i >= self.renewal.len() {
            return Err(Error::Domain(format!("eps = {eps} is below the tabulated range")));
        }
        let (g0, g1) = (self.renewal[i - 1], self.renewal[i]);
        Ok(((i - 1) as f64 + (target - g0) / (g1 - g0)) * PFLUG_STEP)
    }
}

fn bisect_cdf(gamma: f64, u: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eta_cdf_closed(gamma, mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `P(η ≤ x) = (1/γ)[1 − (1−γ)e^{−γx} Σ_{j<[x]} (γx)^j/j! − e^{−γx}(γx)^{[x]}/[x]!]`.
fn eta_cdf_closed(gamma: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = x.floor() as u64;
    let mu = gamma * x;
    let below = if k == 0 { 0.0 } else { poisson_cdf(mu, k - 1) };
    let v = (1.0 - (1.0 - gamma) * below - poisson_pmf(mu, k)) / gamma;
    v.clamp(0.0, 1.0)
}

/// Solves `G(z) = (1−γ) + γ ∫ G(z − x) dF_η(x)` on the grid of `eta_table`.
///
/// Each cell `[kh, (k+1)h)` carries mass `F_η((k+1)h) − F_η(kh)`, and `G` is
/// averaged over the cell end points (second order). The `k = 0` cell refers
/// to the unknown itself and is solved for.
fn renewal_cdf(gamma: f64, eta_table: &[f64]) -> Vec<f64> {
    let cells: Vec<f64> = eta_table.windows(2).map(|w| w[1] - w[0]).collect();
    let mut g: Vec<f64> = vec![1.0 - gamma];
    let n_max = eta_table.len() * 2;
    let f0 = cells[0];
    for n in 1..n_max {
        let mut s = 0.5 * f0 * g[n - 1];
        for (k, &fk) in cells.iter().enumerate().take(n).skip(1) {
            s += 0.5 * fk * (g[n - k] + g[n - k - 1]);
        }
        let v = ((1.0 - gamma) + gamma * s) / (1.0 - 0.5 * gamma * f0);
        g.push(v.min(1.0));
        if 1.0 - v < RENEWAL_TAIL {
            break;
        }
    }
    g
}

// ---------------------------------------------------------------- N-P tests

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspNpt {
    pub z_eps: f64,
    /// `ln d_ε = z_ε u*^H − u*^{2H}/2`.
    pub ln_d_eps: f64,
    pub d_eps: f64,
    /// `P(ζ > z_ε − u*^H)`.
    pub limit_power: f64,
}

pub fn cusp_npt(eps: f64, u_star: f64, hurst: f64) -> Result<CuspNpt> {
    if !(u_star >= 0.0) {
        return Err(Error::InvalidParameter(format!("u* = {u_star} must be nonnegative")));
    }
    let z = normal_upper_quantile(eps)?;
    let uh = u_star.powf(hurst);
    let ln_d = z * uh - uh * uh / 2.0;
    Ok(CuspNpt {
        z_eps: z,
        ln_d_eps: ln_d,
        d_eps: ln_d.exp(),
        limit_power: normal_sf(z - uh),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpNpt {
    /// Critical event count `D_ε`.
    pub d_count: u64,
    pub q_eps: f64,
    /// `ln d_ε = D_ε ln ρ − (ρ−1)u*`.
    pub ln_d_eps: f64,
    pub limit_power: f64,
    /// `P(x > D) + q P(x = D)` under the null; equals `ε` up to rounding.
    pub null_size: f64,
}

pub fn jump_npt(eps: f64, u_star: f64, rho: f64) -> Result<JumpNpt> {
    check_eps(eps)?;
    if !(u_star > 0.0) {
        return Err(Error::InvalidParameter(format!("u* = {u_star} must be positive")));
    }
    if !(rho > 1.0) {
        return Err(Error::Domain(format!("the Poisson N-P formulas need rho > 1, got {rho}")));
    }
    let mut d = 0u64;
    while poisson_sf(u_star, d) > eps {
        d += 1;
    }
    let sf = poisson_sf(u_star, d);
    let pmf = poisson_pmf(u_star, d);
    let q = (eps - sf) / pmf;
    let alt = rho * u_star;
    Ok(JumpNpt {
        d_count: d,
        q_eps: q,
        ln_d_eps: d as f64 * rho.ln() - (rho - 1.0) * u_star,
        limit_power: poisson_sf(alt, d) + q * poisson_pmf(alt, d),
        null_size: sf + q * pmf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const G3: f64 = 0.549_306_144_334_054_8; // ln 3 / 2

    #[test]
    fn gamma_of_three() {
        assert_relative_eq!(gamma_of_rho(3.0), G3, epsilon = 1e-15);
    }

    #[test]
    fn normal_quantile_precision() {
        let z = normal_upper_quantile(0.05).unwrap();
        assert_relative_eq!(z, 1.644_853_626_951_472_2, epsilon = 1e-13);
        assert!((normal_sf(z) - 0.05).abs() < 1e-15);
        assert!((normal_sf(normal_upper_quantile(1e-6).unwrap()) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn poisson_helpers_by_summation() {
        // direct products, no logs
        let mu: f64 = 1.0;
        let mut fact = 1.0;
        let mut acc = 0.0;
        for k in 0..10u64 {
            if k > 0 {
                fact *= k as f64;
            }
            let p = (-mu).exp() * mu.powi(k as i32) / fact;
            assert_relative_eq!(poisson_pmf(mu, k), p, max_relative = 1e-13);
            acc += p;
            assert_relative_eq!(poisson_cdf(mu, k), acc, max_relative = 1e-13);
        }
        assert_relative_eq!(poisson_sf(1.0, 2), 1.0 - 2.5 * (-1f64).exp(), max_relative = 1e-13);
        assert!(poisson_sf(2.0, 60) > 0.0 && poisson_sf(2.0, 60) < 1e-50);
    }

    #[test]
    fn pyke_at_zero_is_gamma() {
        for &g in &[0.1, 0.3, G3, 0.8, 0.95] {
            let tree_identity = g;
            assert!((pyke_tail(g, 0.0).unwrap() - tree_identity).abs() < 1e-9, "gamma {g}");
        }
    }

    #[test]
    fn pyke_large_x_and_domain() {
        let t = pyke_tail(0.5, 40.0).unwrap();
        assert!(t > 0.0 && t < 1e-10);
        assert!(pyke_tail(1.0, 1.0).is_err());
        assert!(pyke_tail(0.5, -1.0).is_err());
    }

    #[test]
    fn pyke_quantiles_near_table_values() {
        let ln3 = 3f64.ln();
        let t = pyke_tail(G3, 2.607 / ln3).unwrap();
        assert!((t - 0.05).abs() < 0.005, "{t}");
        let q01 = pyke_quantile(G3, 0.01).unwrap();
        assert!((q01.x * ln3 - 4.242).abs() < 0.1);
        let q05 = pyke_quantile(G3, 0.05).unwrap();
        assert!((q05.x * ln3 - 2.607).abs() < 0.1);
        let s = pyke_quantile(G3, 0.6).unwrap();
        assert!(s.saturated && s.x == 0.0);
        let near = pyke_quantile(G3, G3 - 1e-4).unwrap();
        assert!(!near.saturated && near.x < 1e-2);
    }

    #[test]
    fn pflug_closed_form_basics() {
        let law = PflugLaw::new(G3).unwrap();
        assert_eq!(law.mass_at_zero(), 1.0 - G3);
        assert_eq!(law.eta_cdf(0.0), 0.0);
        assert!(law.eta_cdf(300.0) > 1.0 - 1e-12);
        let mut prev = 0.0;
        for i in 0..4000 {
            let v = law.eta_cdf(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        // continuity across the integer kinks of the floor
        for k in 1..6 {
            let x = k as f64;
            assert!((law.eta_cdf(x - 1e-10) - law.eta_cdf(x)).abs() < 1e-8);
        }
        assert!((law.cdf(0.0) - (1.0 - G3)).abs() < 1e-15);
        assert!(law.cdf(1e-6) >= 1.0 - G3);
    }

    #[test]
    fn pflug_two_routes_agree() {
        let law = PflugLaw::new(G3).unwrap();
        let zs = [0.5, 1.0, 2.5, 4.0, 7.0];
        let mc = law.cdf_mc(&zs, 1_000_000, 31);
        for (&z, &b) in zs.iter().zip(&mc) {
            let a = law.cdf(z);
            assert!((a - b).abs() < 1e-3, "z = {z}: numeric {a}, Monte Carlo {b}");
        }
    }

    #[test]
    fn pflug_sampler_ks() {
        let law = PflugLaw::new(G3).unwrap();
        let mut rng = substream(4, Purpose::Pflug, 1);
        let mut xs: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < xs.len() {
            let mut j = i;
            while j < xs.len() && xs[j] == xs[i] {
                j += 1;
            }
            // F is continuous except for the atom at 0
            let f = law.cdf(xs[i]);
            let f_left = if xs[i] == 0.0 { 0.0 } else { f };
            d = d.max((j as f64 / n - f).abs()).max((i as f64 / n - f_left).abs());
            i = j;
        }
        assert!(d < 0.005, "KS distance {d}");
    }

    #[test]
    fn pflug_g_against_table_at_five_percent() {
        let law = PflugLaw::new(G3).unwrap();
        let g = G3 * law.upper_quantile(0.05).unwrap();
        assert!((g - 3.556).abs() < 0.2, "{g}");
        assert_eq!(law.upper_quantile(0.7).unwrap(), 0.0);
    }

    #[test]
    fn cusp_npt_values() {
        let r = cusp_npt(0.05, 0.0, 0.9).unwrap();
        assert!((r.limit_power - 0.05).abs() < 1e-12);
        let r = cusp_npt(0.05, 1.0, 0.9).unwrap();
        let z = 1.644_853_626_951_472_2;
        assert_relative_eq!(r.limit_power, 0.5 * erfc((z - 1.0) / SQRT_2), epsilon = 1e-14);
        assert!((r.limit_power - 0.2596).abs() < 5e-4);
        assert_relative_eq!(r.ln_d_eps, z - 0.5, epsilon = 1e-12);
        let mut prev = 0.0;
        for i in 0..30 {
            let p = cusp_npt(0.05, i as f64 * 0.2, 0.9).unwrap().limit_power;
            assert!(p > prev);
            prev = p;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn jump_npt_values() {
        let r = jump_npt(0.05, 1.0, 3.0).unwrap();
        assert_eq!(r.d_count, 3);
        let e = (-1f64).exp();
        let sf3 = 1.0 - e * (1.0 + 1.0 + 0.5 + 1.0 / 6.0);
        let q = (0.05 - sf3) / (e / 6.0);
        assert_relative_eq!(r.q_eps, q, epsilon = 1e-12);
        assert!((r.q_eps - 0.506).abs() < 1e-3);
        let e3 = (-3f64).exp();
        let sf_alt = 1.0 - e3 * (1.0 + 3.0 + 4.5 + 4.5);
        assert_relative_eq!(r.limit_power, sf_alt + q * e3 * 4.5, epsilon = 1e-12);
        assert!((r.limit_power - 0.466).abs() < 1e-3);
        assert!((r.null_size - 0.05).abs() < 1e-12);
        let tiny = jump_npt(0.05, 1e-6, 3.0).unwrap();
        assert!((tiny.limit_power - 0.05).abs() < 1e-4);
        assert!(jump_npt(0.05, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn pyke_monotone(x in 0.0f64..10.0, dx in 0.0f64..2.0, g in 0.05f64..0.95) {
            prop_assert!(pyke_tail(g, x + dx).unwrap() <= pyke_tail(g, x).unwrap() + 1e-14);
        }

        #[test]
        fn pyke_quantile_inverts_tail(eps in 0.005f64..0.5) {
            let q = pyke_quantile(G3, eps).unwrap();
            prop_assume!(!q.saturated);
            prop_assert!((pyke_tail(G3, q.x).unwrap() - eps).abs() < 1e-6);
        }

        #[test]
        fn jump_npt_size_and_dominance(eps in 0.01f64..0.6, u in 0.05f64..12.0, rho in 1.1f64..6.0) {
            let r = jump_npt(eps, u, rho).unwrap();
            prop_assert!((r.null_size - eps).abs() < 1e-12);
            prop_assert!(r.limit_power >= eps - 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.q_eps));
        }
    }
}
