//! Closed forms for the mean-field limit on the random 3-regular graph.
//!
//! The one-step density map is `h = g ∘ f` with the growth map
//! `f(p) = 1 - exp(-βp)` and the survival map `g(p) = p - θ_T(p)`, where
//! `θ_T` is the site percolation probability of the 3-tree. All functions are
//! generic over the scalar type; the certification numerics in
//! [`crate::dynsys::certify`] are `f64` only.

use serde::Serialize;

use crate::dynsys::IntervalMap;
use crate::error::{check_density, Error, Result};
use crate::Real;

/// One-sided selector for derivatives at the kink `a₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// `2 log 2`: below it the epidemic never acts on the limiting map.
pub fn beta_c<T: Real>() -> T {
    T::lit(2.0) * T::LN_2()
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta > T::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must be positive, got {beta}")))
    }
}

fn require_chaotic_range<T: Real>(beta: T) -> Result<()> {
    check_beta(beta)?;
    if beta > beta_c::<T>() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "beta must exceed 2 log 2 = {:.6}, got {beta}",
            beta_c::<f64>()
        )))
    }
}

#[inline]
pub(crate) fn growth_raw<T: Real>(p: T, beta: T) -> T {
    -(-beta * p).exp_m1()
}

#[inline]
pub(crate) fn g_tree_raw<T: Real>(p: T) -> T {
    let half = T::lit(0.5);
    if p <= half {
        p
    } else {
        let q = T::one() - p;
        q * q * q / (p * p)
    }
}

#[inline]
pub(crate) fn h_tree_raw<T: Real>(p: T, beta: T) -> T {
    g_tree_raw(growth_raw(p, beta))
}

/// Mean offspring density after the growth step, `1 - exp(-βp)`.
pub fn growth_map<T: Real>(p: T, beta: T) -> Result<T> {
    check_density(p, "p")?;
    check_beta(beta)?;
    Ok(growth_raw(p, beta))
}

/// Percolation probability of the rooted binary tree.
pub fn theta_binary<T: Real>(p: T) -> Result<T> {
    check_density(p, "p")?;
    Ok(if p <= T::lit(0.5) {
        T::zero()
    } else {
        T::lit(2.0) - p.recip()
    })
}

/// Percolation probability of the origin on the 3-tree.
pub fn theta_tree<T: Real>(p: T) -> Result<T> {
    let tb = theta_binary(p)?;
    let q = T::one() - tb;
    Ok(p * (T::one() - q * q * q))
}

/// Probability that the origin is occupied and its cluster is finite.
pub fn g_tree<T: Real>(p: T) -> Result<T> {
    check_density(p, "p")?;
    Ok(g_tree_raw(p))
}

/// The limiting one-step map `h_T = g_T ∘ f`.
pub fn h_tree<T: Real>(p: T, beta: T) -> Result<T> {
    check_density(p, "p")?;
    check_beta(beta)?;
    Ok(h_tree_raw(p, beta))
}

/// Survival density on the 3-tree when every site independently receives an
/// infection with probability `alpha` and infected clusters are removed.
///
/// With `alpha = 0` this is [`g_tree`]. For `alpha > 0` finite clusters are
/// also hit, which is the fixed-`alpha` limit of the process on `R_N`.
pub fn g_tree_infected<T: Real>(p: T, alpha: T) -> Result<T> {
    check_density(p, "p")?;
    check_density(alpha, "alpha")?;
    if p == T::zero() {
        return Ok(T::zero());
    }
    let keep = T::one() - alpha;
    let q = p * keep;
    if q == T::zero() {
        return Ok(T::zero());
    }
    // Probability generating function of a binary branch evaluated at `keep`:
    // smallest root of B = (1 - p) + q B².
    let disc = (T::one() - T::lit(4.0) * q * (T::one() - p)).max(T::zero());
    let branch = (T::lit(2.0) * (T::one() - p)) / (T::one() + disc.sqrt());
    Ok(q * branch * branch * branch)
}

/// Derivative of `h_T`, one-sided at the kink `a₀ = log 2 / β`.
pub fn d_h_tree<T: Real>(p: T, beta: T, side: Side) -> Result<T> {
    check_density(p, "p")?;
    check_beta(beta)?;
    Ok(d_h_tree_raw(p, beta, side))
}

#[inline]
pub(crate) fn d_h_tree_raw<T: Real>(p: T, beta: T, side: Side) -> T {
    let a0 = T::LN_2() / beta;
    let left_piece = p < a0 || (p == a0 && side == Side::Left);
    let e = (-beta * p).exp();
    if left_piece {
        beta * e
    } else {
        let one_minus = -(-beta * p).exp_m1();
        let e3 = e * e * e;
        e3 / (one_minus * one_minus * one_minus) * (beta * e - T::lit(3.0) * beta)
    }
}

/// The special points of `h_T` for a given `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeMapLandmarks<T> {
    /// Density whose growth image is the threshold `1/2`.
    pub a0: T,
    /// `h_T(1/2)`, lower edge of the trapping interval.
    pub a1: T,
    /// `f⁻¹(a₀)`, first point of the period-three witness chain.
    pub c: T,
    pub beta_c: T,
}

/// Closed-form landmarks. Requires `β ≥ 2 log 2`; at equality all three
/// collapse to `1/2`.
pub fn landmarks<T: Real>(beta: T) -> Result<TreeMapLandmarks<T>> {
    check_beta(beta)?;
    let bc = beta_c::<T>();
    if beta < bc * (T::one() - T::epsilon()) {
        return Err(Error::Parameter(format!(
            "landmarks a1 and c need beta >= 2 log 2, got {beta}"
        )));
    }
    let ln2 = T::LN_2();
    let half = T::lit(0.5);
    let a0 = ln2 / beta;
    let eh = (-beta * half).exp();
    let one_minus = T::one() - eh;
    let a1 = eh * eh * eh / (one_minus * one_minus);
    let c = (beta / (beta - ln2)).ln() / beta;
    Ok(TreeMapLandmarks {
        a0,
        a1,
        c,
        beta_c: bc,
    })
}

/// Bisection for the preimage of `a₀` under `f`, used to cross-check the
/// closed form of `c`.
pub fn c_by_bisection<T: Real>(beta: T) -> Result<T> {
    check_beta(beta)?;
    let a0 = T::LN_2() / beta;
    crate::dynsys::bisect(|p| growth_raw(p, beta) - a0, T::zero(), a0, T::solve_tol())
}

/// Values of the period-three chain `c → h(c) → h²(c) → h³(c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiYorkeWitness<T> {
    pub c: T,
    pub h1: T,
    pub h2: T,
    pub h3: T,
    /// `h³(c) ≤ c < h(c) < h²(c)`.
    pub holds: bool,
}

pub fn check_li_yorke_witness<T: Real>(beta: T) -> Result<LiYorkeWitness<T>> {
    require_chaotic_range(beta)?;
    let lm = landmarks(beta)?;
    let c = lm.c;
    let h1 = h_tree_raw(c, beta);
    let h2 = h_tree_raw(h1, beta);
    let h3 = h_tree_raw(h2, beta);
    Ok(LiYorkeWitness {
        c,
        h1,
        h2,
        h3,
        holds: h3 <= c && c < h1 && h1 < h2,
    })
}

/// Outcome of the inequality `φ₁(β) ≤ φ₂(β)` that orders `a₁ ≤ c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiCheck<T> {
    pub phi1: T,
    pub phi2: T,
    pub holds: bool,
    /// `β² e^{-3β/2} / (1 - e^{-β/2})²`, reported for `β ≥ 1.75`.
    pub tail_lhs: Option<T>,
    /// `tail_lhs ≤ log 2` when reported.
    pub tail_holds: Option<bool>,
}

/// `σ(β) = β e^{-3β/2} / (1 - e^{-β/2})²`.
pub fn sigma<T: Real>(beta: T) -> T {
    let eh = (-beta * T::lit(0.5)).exp();
    let one_minus = T::one() - eh;
    beta * eh * eh * eh / (one_minus * one_minus)
}

/// Evaluate `φ₁ = exp σ(β)` and `φ₂ = β / (β - log 2)`. Accepts the closed
/// endpoint `β = 2 log 2`, where both equal 2.
pub fn verify_phi_inequality<T: Real>(beta: T) -> Result<PhiCheck<T>> {
    check_beta(beta)?;
    if beta < beta_c::<T>() * (T::one() - T::epsilon()) {
        return Err(Error::Parameter(format!(
            "phi inequality is stated for beta >= 2 log 2, got {beta}"
        )));
    }
    let s = sigma(beta);
    let phi1 = s.exp();
    let phi2 = beta / (beta - T::LN_2());
    let slack = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
    let (tail_lhs, tail_holds) = if beta >= T::lit(1.75) {
        let lhs = beta * s;
        (Some(lhs), Some(lhs <= T::LN_2()))
    } else {
        (None, None)
    };
    Ok(PhiCheck {
        phi1,
        phi2,
        holds: phi1 <= phi2 + slack,
        tail_lhs,
        tail_holds,
    })
}

/// The map `h_T` at a fixed `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeMap<T> {
    pub beta: T,
}

impl<T: Real> TreeMap<T> {
    pub fn new(beta: T) -> Result<Self> {
        check_beta(beta)?;
        Ok(TreeMap { beta })
    }

    pub fn landmarks(&self) -> Result<TreeMapLandmarks<T>> {
        landmarks(self.beta)
    }

    pub fn derivative(&self, p: T, side: Side) -> Result<T> {
        d_h_tree(p, self.beta, side)
    }
}

impl<T: Real> IntervalMap<T> for TreeMap<T> {
    fn apply(&self, p: T) -> Result<T> {
        h_tree(p, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(x: f64) -> f64 {
        x.ln()
    }

    #[test]
    fn growth_map_examples() {
        assert_eq!(growth_map(0.0, 3.0).unwrap(), 0.0);
        let bc = 2.0 * ln(2.0);
        assert!((growth_map(0.5, bc).unwrap() - 0.5).abs() < 1e-15);
        let b = 2.0 * ln(3.0);
        assert!((growth_map(0.315464, b).unwrap() - 0.5).abs() < 1e-6);
        assert!(growth_map(1.5, 1.0).is_err());
        assert!(growth_map(0.5, 0.0).is_err());
        assert!(growth_map(-0.1, 1.0).is_err());
    }

    #[test]
    fn theta_binary_examples() {
        assert_eq!(theta_binary(0.5).unwrap(), 0.0);
        assert_eq!(theta_binary(1.0).unwrap(), 1.0);
        // fixed-point iteration from θ = 1
        let p = 0.75;
        let mut th = 1.0f64;
        for _ in 0..200 {
            th = p * (1.0 - (1.0 - th).powi(2));
        }
        assert!((theta_binary(p).unwrap() - th).abs() < 1e-12);
        assert!((theta_binary(p).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(theta_binary(1.01f64).is_err());
    }

    #[test]
    fn theta_tree_and_g_examples() {
        assert_eq!(theta_tree(0.5).unwrap(), 0.0);
        assert_eq!(theta_tree(1.0).unwrap(), 1.0);
        assert!((theta_tree(0.75f64).unwrap() - 0.75 * (1.0 - 1.0 / 27.0)).abs() < 1e-15);
        assert!((theta_tree(0.75f64).unwrap() - 0.722222).abs() < 1e-6);
        assert_eq!(g_tree(0.3).unwrap(), 0.3);
        assert!((g_tree(0.75f64).unwrap() - 0.0277778).abs() < 1e-6);
        assert_eq!(g_tree(1.0).unwrap(), 0.0);
    }

    #[test]
    fn h_tree_examples() {
        let b = 2.0 * ln(3.0);
        let lm = landmarks(b).unwrap();
        assert!((h_tree(lm.c, b).unwrap() - lm.a0).abs() < 1e-9);
        assert!((lm.a0 - 0.315464).abs() < 1e-6);
        let via = g_tree(growth_map(0.5, b).unwrap()).unwrap();
        assert!((h_tree(0.5, b).unwrap() - via).abs() < 1e-15);
        assert!((h_tree(0.5, b).unwrap() - 1.0 / 12.0).abs() < 1e-9);
        assert_eq!(h_tree(0.0, 1.7).unwrap(), 0.0);
    }

    #[test]
    fn h_tree_matches_displayed_piecewise_form() {
        for &b in &[1.2, 1.5, 2.0, 2.5, 3.0] {
            let a0 = ln(2.0) / b;
            for i in 0..=1000 {
                let p = i as f64 / 1000.0;
                let want = if p <= a0 {
                    1.0 - (-b * p).exp()
                } else {
                    (-3.0 * b * p).exp() / (1.0 - (-b * p).exp()).powi(2)
                };
                assert!((h_tree(p, b).unwrap() - want).abs() < 1e-12, "b={b} p={p}");
            }
        }
    }

    #[test]
    fn landmark_examples() {
        let lm = landmarks(2.0 * ln(2.0)).unwrap();
        assert!((lm.a0 - 0.5).abs() < 1e-12);
        assert!((lm.a1 - 0.5).abs() < 1e-12);
        let b = 2.0 * ln(3.0);
        let lm = landmarks(b).unwrap();
        assert!((lm.a1 - 1.0 / 12.0).abs() < 1e-9);
        assert!((lm.c - 0.17255).abs() < 1e-4);
        let bis = c_by_bisection(b).unwrap();
        assert!((bis - lm.c).abs() < 1e-12);
        assert!(landmarks(1.2).is_err());
        // a1 < c < a0 < 1/2
        assert!(lm.a1 < lm.c && lm.c < lm.a0 && lm.a0 < 0.5);
        assert!((growth_map(lm.a0, b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        let at_bc = verify_phi_inequality(2.0 * ln(2.0)).unwrap();
        assert!((at_bc.phi1 - 2.0).abs() < 1e-9);
        assert!((at_bc.phi2 - 2.0).abs() < 1e-9);
        assert!(at_bc.holds);
        let at = verify_phi_inequality(1.75f64).unwrap();
        assert!((at.phi1 - 1.4518).abs() < 5e-4, "{}", at.phi1);
        assert!(at.phi1 < at.phi2);
        assert!(((4.0 - 1.75 / ln(2.0)) - 1.4753).abs() < 5e-4);
        let at = verify_phi_inequality(1.75f64).unwrap();
        assert!((at.tail_lhs.unwrap() - 0.6523).abs() < 5e-4);
        let big = verify_phi_inequality(10.0).unwrap();
        assert!(big.holds && big.phi1 > 1.0 && big.phi2 > 1.0 && big.phi1 < big.phi2);
        assert!(big.tail_holds.unwrap());
        assert!(verify_phi_inequality(1.2).is_err());
    }

    #[test]
    fn li_yorke_examples() {
        let w = check_li_yorke_witness(2.0 * ln(2.0) + 0.01).unwrap();
        assert!(w.holds);
        let w = check_li_yorke_witness(2.0 * ln(3.0)).unwrap();
        assert!(w.holds);
        assert!((w.h3 - 1.0 / 12.0).abs() < 1e-9);
        assert!((w.c - 0.17255).abs() < 1e-4);
        assert!((w.h1 - 0.315464).abs() < 1e-6);
        assert!((w.h2 - 0.5).abs() < 1e-10);
        assert!(matches!(check_li_yorke_witness(1.2), Err(Error::Parameter(_))));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(d_h_tree(0.0, 2.0, Side::Left).unwrap(), 2.0);
        assert_eq!(d_h_tree(0.0, 2.0, Side::Right).unwrap(), 2.0);
        let bc = 2.0 * ln(2.0);
        let a0 = ln(2.0) / bc;
        let right = d_h_tree(a0, bc, Side::Right).unwrap();
        assert!((right + 3.4657).abs() < 1e-3);
        let fd = (h_tree(a0 + 1e-7, bc).unwrap() - h_tree(a0, bc).unwrap()) / 1e-7;
        assert!((right - fd).abs() < 1e-3);
        assert!((d_h_tree(a0, bc, Side::Left).unwrap() - bc * 0.5).abs() < 1e-12);
        assert!(d_h_tree(0.5f64, 2.48, Side::Right).unwrap().abs() <= 1.923);
        assert!(d_h_tree(1.2, 2.0, Side::Left).is_err());
    }

    #[test]
    fn infected_survival_reduces_to_g_tree() {
        for i in 0..=200 {
            let p = i as f64 / 200.0;
            let a = g_tree_infected(p, 0.0).unwrap();
            assert!((a - g_tree(p).unwrap()).abs() < 1e-12, "p={p}");
            let b = g_tree_infected(p, 0.05).unwrap();
            assert!(b <= a + 1e-15);
        }
        assert_eq!(g_tree_infected(0.7, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn works_in_f32() {
        let b = 2.0f32 * 3.0f32.ln();
        let w = check_li_yorke_witness(b).unwrap();
        assert!(w.holds);
        assert!((w.h2 - 0.5).abs() < 1e-5);
        assert!((h_tree(0.5f32, b).unwrap() - 1.0 / 12.0).abs() < 1e-6);
    }
}
