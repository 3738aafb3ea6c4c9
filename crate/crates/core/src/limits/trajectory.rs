//! Limit likelihood-ratio processes.
//!
//! Cusp: `ln Z(u, u*) = W^H(u) − |u−u*|^{2H}/2 + |u*|^{2H}/2`, which reduces to
//! `W^H(u) − |u|^{2H}/2` at `u* = 0`.
//!
//! Jump: `ln Z(u) = ln ρ · x(u) − (ρ−1)u` where `x` counts events of a Poisson
//! process whose intensity is `ρ` on `[0, u*)` and `1` afterwards. These are
//! stored exactly as event lists.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::limits::fbm::{FbmPath, FbmSynthesizer};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitKind {
    CuspNull,
    CuspAlt { u_star: f64 },
    JumpNull,
    JumpAlt { u_star: f64 },
    JumpTwoSided { u_star: f64 },
}

impl std::fmt::Display for LimitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitKind::CuspNull => write!(f, "cusp_null"),
            LimitKind::CuspAlt { u_star } => write!(f, "cusp_alt({u_star})"),
            LimitKind::JumpNull => write!(f, "jump_null"),
            LimitKind::JumpAlt { u_star } => write!(f, "jump_alt({u_star})"),
            LimitKind::JumpTwoSided { u_star } => write!(f, "jump_twosided({u_star})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitTrajectory {
    /// `ln Z(i·du)` for `i = 0..`.
    Grid { kind: LimitKind, du: f64, ln_z: Vec<f64> },
    /// `ln Z` starts at `ln_z_start` at `u_start`, decreases with slope
    /// `ρ−1` and jumps up by `ln ρ` at each point (right-continuous).
    Events {
        kind: LimitKind,
        rho: f64,
        u_start: f64,
        ln_z_start: f64,
        points: Vec<f64>,
        u_max: f64,
    },
}

impl LimitTrajectory {
    pub fn kind(&self) -> LimitKind {
        match self {
            LimitTrajectory::Grid { kind, .. } | LimitTrajectory::Events { kind, .. } => *kind,
        }
    }

    pub fn u_max(&self) -> f64 {
        match self {
            LimitTrajectory::Grid { du, ln_z, .. } => du * (ln_z.len() - 1) as f64,
            LimitTrajectory::Events { u_max, .. } => *u_max,
        }
    }

    /// `ln Z(u)`; linear interpolation on a grid, exact for events.
    pub fn ln_z_at(&self, u: f64) -> f64 {
        match self {
            LimitTrajectory::Grid { du, ln_z, .. } => {
                let x = (u / du).clamp(0.0, (ln_z.len() - 1) as f64);
                let i = x.floor() as usize;
                if i + 1 >= ln_z.len() {
                    return ln_z[ln_z.len() - 1];
                }
                let f = x - i as f64;
                if f == 0.0 {
                    ln_z[i]
                } else {
                    ln_z[i] + f * (ln_z[i + 1] - ln_z[i])
                }
            }
            LimitTrajectory::Events {
                rho,
                u_start,
                ln_z_start,
                points,
                ..
            } => {
                let k = points.partition_point(|&p| p <= u);
                ln_z_start + rho.ln() * k as f64 - (rho - 1.0) * (u - u_start)
            }
        }
    }
}

/// `(k·du)^{2H}/2` for `k = 0..=n`, shared by every alternative built on the same grid.
#[derive(Debug, Clone)]
pub struct CuspDrift {
    hurst: f64,
    du: f64,
    half_pow: Vec<f64>,
}

impl CuspDrift {
    pub fn new(hurst: f64, du: f64, n: usize) -> Self {
        let p = 2.0 * hurst;
        CuspDrift {
            hurst,
            du,
            half_pow: (0..=n).map(|k| 0.5 * (k as f64 * du).powf(p)).collect(),
        }
    }

    fn half(&self, x: f64) -> f64 {
        let k = x.abs() / self.du;
        let r = k.round();
        if (k - r).abs() < 1e-9 && (r as usize) < self.half_pow.len() {
            self.half_pow[r as usize]
        } else {
            0.5 * x.abs().powf(2.0 * self.hurst)
        }
    }

    /// `ln Z(·, u*)` driven by `w`.
    pub fn alternative(&self, w: &FbmPath, u_star: f64) -> LimitTrajectory {
        let shift = self.half(u_star);
        let ln_z = w
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| x - self.half(i as f64 * self.du - u_star) + shift)
            .collect();
        let kind = if u_star == 0.0 {
            LimitKind::CuspNull
        } else {
            LimitKind::CuspAlt { u_star }
        };
        LimitTrajectory::Grid { kind, du: self.du, ln_z }
    }
}

fn check_u_star(u_star: f64) -> Result<()> {
    if u_star >= 0.0 && u_star.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("u* = {u_star} must be finite and nonnegative")))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho != 1.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho = {rho} must be positive and different from 1")))
    }
}

/// `ln Z(u, u*)` on `[0, u_max]`; `u* = 0` is the null process.
pub fn cusp_limit(hurst: f64, u_star: f64, u_max: f64, du: f64, seed: u64) -> Result<LimitTrajectory> {
    check_u_star(u_star)?;
    let n = (u_max / du).round() as usize;
    let synth = FbmSynthesizer::new(hurst, n, du)?;
    let w = synth.sample(&mut substream(seed, Purpose::Fbm, 0));
    Ok(CuspDrift::new(hurst, du, n).alternative(&w, u_star))
}

/// Ordered points of a homogeneous Poisson process of rate `rate` on `[a, b)`.
pub fn poisson_points<R: Rng + ?Sized>(rng: &mut R, rate: f64, a: f64, b: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = a;
    loop {
        let e: f64 = Exp1.sample(rng);
        t += e / rate;
        if t >= b {
            return out;
        }
        out.push(t);
    }
}

/// Jump-limit events `(A, marks, B)` shared by every `u*` of a power study:
/// `A` is a unit-rate process on `[0, u_max]`, `B` a rate-`(ρ−1)` process on
/// `[0, u*_max)` when `ρ > 1`. For `ρ < 1`, `A`-points before `u*` are kept
/// with probability `ρ` using the uniform `marks`.
#[derive(Debug, Clone)]
pub struct JumpCrnSample {
    rho: f64,
    u_max: f64,
    a: Vec<f64>,
    marks: Vec<f64>,
    b: Vec<f64>,
}

impl JumpCrnSample {
    pub fn draw(rho: f64, u_star_max: f64, u_max: f64, seed: u64, replicate: u64) -> Self {
        let mut rng = substream(seed, Purpose::JumpBase, replicate);
        let a = poisson_points(&mut rng, 1.0, 0.0, u_max);
        let (marks, b) = if rho > 1.0 {
            let mut r2 = substream(seed, Purpose::JumpSwitch, replicate);
            (Vec::new(), poisson_points(&mut r2, rho - 1.0, 0.0, u_star_max.min(u_max)))
        } else {
            let mut r2 = substream(seed, Purpose::JumpSwitch, replicate);
            (a.iter().map(|_| r2.random::<f64>()).collect(), Vec::new())
        };
        JumpCrnSample {
            rho,
            u_max,
            a,
            marks,
            b,
        }
    }

    /// Events of `x(·, u*)`.
    pub fn points(&self, u_star: f64) -> Vec<f64> {
        if self.rho > 1.0 {
            let mut pts: Vec<f64> = self.a.clone();
            pts.extend(self.b.iter().copied().filter(|&p| p < u_star));
            pts.sort_by(f64::total_cmp);
            pts
        } else {
            self.a
                .iter()
                .zip(&self.marks)
                .filter(|&(&p, &m)| p >= u_star || m < self.rho)
                .map(|(&p, _)| p)
                .collect()
        }
    }

    pub fn trajectory(&self, u_star: f64) -> LimitTrajectory {
        let kind = if u_star == 0.0 {
            LimitKind::JumpNull
        } else {
            LimitKind::JumpAlt { u_star }
        };
        LimitTrajectory::Events {
            kind,
            rho: self.rho,
            u_start: 0.0,
            ln_z_start: 0.0,
            points: self.points(u_star),
            u_max: self.u_max,
        }
    }
}

/// `ln Z(u, u*)` for the jump case on `[0, u_max]`; `u* = 0` is the null process.
pub fn jump_limit(rho: f64, u_star: f64, u_max: f64, seed: u64) -> Result<LimitTrajectory> {
    check_rho(rho)?;
    check_u_star(u_star)?;
    let mut rng = substream(seed, Purpose::JumpBase, 0);
    let mut points = poisson_points(&mut rng, rho, 0.0, u_star.min(u_max));
    points.extend(poisson_points(&mut rng, 1.0, u_star.min(u_max), u_max));
    let kind = if u_star == 0.0 {
        LimitKind::JumpNull
    } else {
        LimitKind::JumpAlt { u_star }
    };
    Ok(LimitTrajectory::Events {
        kind,
        rho,
        u_start: 0.0,
        ln_z_start: 0.0,
        points,
        u_max,
    })
}

/// Two-sided `Z⋆` on `[−u*, u_max]`: unit-rate events on the positive axis and
/// an independent rate-`ρ` process `x_ρ` on the reflected negative axis, with
/// `ln Z⋆(u) = −ln ρ · x_ρ((−u)−) − (ρ−1)u` for `u ≤ 0`.
pub fn jump_twosided(rho: f64, u_star: f64, u_max: f64, seed: u64) -> Result<LimitTrajectory> {
    check_rho(rho)?;
    check_u_star(u_star)?;
    let mut pos_rng = substream(seed, Purpose::JumpBase, 0);
    let mut neg_rng = substream(seed, Purpose::JumpNegative, 0);
    let positive = poisson_points(&mut pos_rng, 1.0, 0.0, u_max);
    let distances = poisson_points(&mut neg_rng, rho, 0.0, u_star);
    let ln_z_start = -rho.ln() * distances.len() as f64 + (rho - 1.0) * u_star;
    let mut points: Vec<f64> = distances.iter().rev().map(|d| -d).collect();
    points.extend(positive);
    Ok(LimitTrajectory::Events {
        kind: LimitKind::JumpTwoSided { u_star },
        rho,
        u_start: -u_star,
        ln_z_start,
        points,
        u_max,
    })
}
