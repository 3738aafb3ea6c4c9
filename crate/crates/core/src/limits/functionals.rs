//! Supremum, argmax and integrals of a limit trajectory.
//!
//! Grid trajectories use the trapezoid rule. Jump trajectories are
//! piecewise exponential, so their integrals are exact; when `ρ > 1` the last
//! piece is integrated to infinity, i.e. as if no event followed `u_max`.

use crate::limits::trajectory::LimitTrajectory;

/// Share of the integral allowed in the last 5% of the range before
/// [`Functionals::truncated`] is set.
pub const TRUNCATION_SHARE: f64 = 1e-3;
const TAIL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    /// `ln sup Z`.
    pub ln_sup: f64,
    /// Smallest maximizer `û`.
    pub argmax: f64,
    /// `ln ∫ Z(v) dv`.
    pub ln_integral: f64,
    /// `ũ = ∫ v Z(v) dv / ∫ Z(v) dv`.
    pub posterior_mean: f64,
    /// More than [`TRUNCATION_SHARE`] of `∫Z` sits near the end of the range.
    pub truncated: bool,
}

impl Functionals {
    pub fn sup(&self) -> f64 {
        self.ln_sup.exp()
    }
    pub fn integral(&self) -> f64 {
        self.ln_integral.exp()
    }
    pub fn weighted_integral(&self) -> f64 {
        self.posterior_mean * self.integral()
    }
}

/// `∫_lo^hi e^{l0 − s(u − a)} (1, u) du`; `hi` may be infinite when `s > 0`.
fn exp_piece(l0: f64, s: f64, a: f64, lo: f64, hi: f64) -> (f64, f64) {
    let big_a = (l0 - s * (lo - a)).exp();
    if hi.is_infinite() {
        let m0 = big_a / s;
        return (m0, lo * big_a / s + m0 / s);
    }
    let big_b = (l0 - s * (hi - a)).exp();
    let m0 = if s == 0.0 {
        big_a * (hi - lo)
    } else {
        -big_a * (-s * (hi - lo)).exp_m1() / s
    };
    let m1 = if s == 0.0 {
        big_a * 0.5 * (hi * hi - lo * lo)
    } else {
        (lo * big_a - hi * big_b) / s + m0 / s
    };
    (m0, m1)
}

fn grid_functionals(du: f64, ln_z: &[f64]) -> Functionals {
    let (mut top, mut arg) = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in ln_z.iter().enumerate() {
        if v > top {
            top = v;
            arg = i;
        }
    }
    let n = ln_z.len();
    let cut = ((1.0 - TAIL_FRACTION) * (n - 1) as f64).floor() as usize;
    let (mut m0, mut m1, mut tail) = (0.0, 0.0, 0.0);
    let mut prev = (ln_z[0] - top).exp();
    for i in 1..n {
        let g = (ln_z[i] - top).exp();
        let piece = 0.5 * du * (g + prev);
        m0 += piece;
        m1 += 0.5 * du * du * (g * i as f64 + prev * (i - 1) as f64);
        if i > cut {
            tail += piece;
        }
        prev = g;
    }
    Functionals {
        ln_sup: top,
        argmax: arg as f64 * du,
        ln_integral: m0.ln() + top,
        posterior_mean: m1 / m0,
        truncated: tail > TRUNCATION_SHARE * m0,
    }
}

fn event_functionals(rho: f64, u_start: f64, ln_z_start: f64, points: &[f64], u_max: f64) -> Functionals {
    let s = rho - 1.0;
    let jump = rho.ln();
    let points: Vec<f64> = points.iter().copied().filter(|&p| p > u_start && p < u_max).collect();

    // Piece k starts at bounds[k] with value levels[k].
    let mut bounds = Vec::with_capacity(points.len() + 1);
    let mut levels = Vec::with_capacity(points.len() + 1);
    bounds.push(u_start);
    levels.push(ln_z_start);
    for (k, &p) in points.iter().enumerate() {
        let before = levels[k] - s * (p - bounds[k]);
        bounds.push(p);
        levels.push(before + jump);
    }

    let (mut top, mut arg) = (f64::NEG_INFINITY, u_start);
    let mut consider = |v: f64, u: f64| {
        if v > top {
            top = v;
            arg = u;
        }
    };
    for k in 0..bounds.len() {
        let end = bounds.get(k + 1).copied().unwrap_or(u_max);
        // left end is the right limit at an event, right end the left limit at the next
        consider(levels[k], bounds[k]);
        consider(levels[k] - s * (end - bounds[k]), end);
    }

    let extend = s > 0.0;
    let cut = u_max - TAIL_FRACTION * (u_max - u_start);
    let (mut m0, mut m1, mut tail) = (0.0, 0.0, 0.0);
    for k in 0..bounds.len() {
        let last = k + 1 == bounds.len();
        let hi = if last {
            if extend {
                f64::INFINITY
            } else {
                u_max
            }
        } else {
            bounds[k + 1]
        };
        let l0 = levels[k] - top;
        let (a0, a1) = exp_piece(l0, s, bounds[k], bounds[k], hi);
        m0 += a0;
        m1 += a1;
        if hi > cut {
            tail += exp_piece(l0, s, bounds[k], bounds[k].max(cut), hi).0;
        }
    }
    Functionals {
        ln_sup: top,
        argmax: arg,
        ln_integral: m0.ln() + top,
        posterior_mean: m1 / m0,
        truncated: tail > TRUNCATION_SHARE * m0,
    }
}

/// Sup, argmax (ties to the smallest `u`), `∫Z` and `ũ` over the whole range
/// of the trajectory.
pub fn functional_suite(trajectory: &LimitTrajectory) -> Functionals {
    match trajectory {
        LimitTrajectory::Grid { du, ln_z, .. } => grid_functionals(*du, ln_z),
        LimitTrajectory::Events {
            rho,
            u_start,
            ln_z_start,
            points,
            u_max,
            ..
        } => event_functionals(*rho, *u_start, *ln_z_start, points, *u_max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::trajectory::{jump_limit, LimitKind};
    use crate::quad;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn events(rho: f64, points: Vec<f64>, u_max: f64) -> LimitTrajectory {
        LimitTrajectory::Events {
            kind: LimitKind::JumpNull,
            rho,
            u_start: 0.0,
            ln_z_start: 0.0,
            points,
            u_max,
        }
    }

    #[test]
    fn constant_grid() {
        let t = LimitTrajectory::Grid {
            kind: LimitKind::CuspNull,
            du: 0.01,
            ln_z: vec![0.0; 501],
        };
        let f = functional_suite(&t);
        assert_eq!(f.sup(), 1.0);
        assert_eq!(f.argmax, 0.0);
        assert_relative_eq!(f.integral(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(f.posterior_mean, 2.5, epsilon = 1e-12);
        assert!(f.truncated);
    }

    #[test]
    fn jump_without_events() {
        let f = functional_suite(&events(3.0, vec![], 30.0));
        assert_eq!(f.ln_sup, 0.0);
        assert_eq!(f.argmax, 0.0);
        assert_relative_eq!(f.integral(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(f.posterior_mean, 0.5, epsilon = 1e-14);
        assert!(!f.truncated);
    }

    #[test]
    fn jump_functionals_match_quadrature() {
        for seed in 0..10 {
            let t = jump_limit(3.0, 0.0, 15.0, seed).unwrap();
            let f = functional_suite(&t);
            let LimitTrajectory::Events { points, .. } = &t else { unreachable!() };
            let m0 = quad::integrate_split(|u| t.ln_z_at(u).exp(), 0.0, 15.0, points, 1e-12)
                + t.ln_z_at(15.0).exp() / 2.0;
            let m1 = quad::integrate_split(|u| u * t.ln_z_at(u).exp(), 0.0, 15.0, points, 1e-12)
                + t.ln_z_at(15.0).exp() * (15.0 / 2.0 + 0.25);
            assert_relative_eq!(f.integral(), m0, max_relative = 1e-9);
            assert_relative_eq!(f.posterior_mean, m1 / m0, max_relative = 1e-9);
            let best = std::iter::once(0.0)
                .chain(points.iter().copied())
                .map(|u| t.ln_z_at(u))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(f.ln_sup, best, epsilon = 1e-12);
            assert_relative_eq!(t.ln_z_at(f.argmax), f.ln_sup, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_below_one_uses_left_limits() {
        // ln Z rises with slope 0.5 until the event at 2, then drops by ln 2
        let t = events(0.5, vec![2.0], 3.0);
        let f = functional_suite(&t);
        assert_eq!(f.argmax, 2.0);
        assert_relative_eq!(f.ln_sup, 1.0, epsilon = 1e-15);
        let m0 = quad::integrate_split(|u| t.ln_z_at(u).exp(), 0.0, 3.0, &[2.0], 1e-13);
        assert_relative_eq!(f.integral(), m0, max_relative = 1e-10);
    }

    #[test]
    fn argmax_ties_go_left() {
        // ln 3 jump exactly offsets the drift over (0, ln3/2]
        let p = 3f64.ln() / 2.0;
        let f = functional_suite(&events(3.0, vec![p], 20.0));
        assert_eq!(f.argmax, 0.0);
    }

    proptest! {
        #[test]
        fn grid_shift_invariance(vals in prop::collection::vec(-5.0f64..5.0, 2..60), c in -50.0f64..50.0) {
            let a = LimitTrajectory::Grid { kind: LimitKind::CuspNull, du: 0.1, ln_z: vals.clone() };
            let b = LimitTrajectory::Grid {
                kind: LimitKind::CuspNull,
                du: 0.1,
                ln_z: vals.iter().map(|v| v + c).collect(),
            };
            let (fa, fb) = (functional_suite(&a), functional_suite(&b));
            prop_assert_eq!(fa.argmax, fb.argmax);
            prop_assert!((fa.ln_sup + c - fb.ln_sup).abs() < 1e-9);
            prop_assert!((fa.ln_integral + c - fb.ln_integral).abs() < 1e-9);
            prop_assert!((fa.posterior_mean - fb.posterior_mean).abs() < 1e-9);
            prop_assert!(fa.ln_integral <= fa.ln_sup + ((vals.len() - 1) as f64 * 0.1).ln() + 1e-12);
        }

        #[test]
        fn event_sup_bounds_every_value(seed in 0u64..500, u in 0.0f64..25.0) {
            let t = jump_limit(3.0, 0.0, 25.0, seed).unwrap();
            let f = functional_suite(&t);
            prop_assert!(t.ln_z_at(u) <= f.ln_sup + 1e-12);
            prop_assert!(f.posterior_mean >= 0.0);
        }
    }
}
