//! Numerical certificate that `|(h_T³)'|` stays above 1 on `[a₁, 1/2]`.
//!
//! For one `β` the infimum is exact up to rounding: `h_T'` is monotone on
//! each side of `a₀`, so `(h_T³)'` is monotone between consecutive points of
//! the kink set (preimages of `a₀`) and the infimum is attained at one-sided
//! limits there or at the endpoints. A grid over `β` plus a Lipschitz bound in
//! `β` extends the statement to the whole parameter interval.

use rayon::prelude::*;
use serde::Serialize;

use super::bisect;
use super::tree::{beta_c, d_h_tree_raw, h_tree_raw, landmarks, Side};
use crate::error::{Error, Result};

/// Largest `β` for which the expansion bound is certified.
pub const CERTIFIED_BETA_MAX: f64 = 2.48;
/// Largest `β` accepted in scan-only mode.
pub const SCAN_BETA_MAX: f64 = 2.6;
/// Bound on `|∂h_T/∂p|` over the certified range.
pub const M1: f64 = 2.48;
/// Bound on `|∂²h_T/∂β∂p|` over the certified range.
pub const M2: f64 = 49.73;
/// `3 M1² M2`, rounded up as published.
pub const LIPSCHITZ_BOUND: f64 = 917.6;
/// Rounding slack absorbed into the pass threshold.
pub const CERT_SLACK: f64 = 1e-9;

const PREIMAGE_TOL: f64 = 1e-13;
const SNAP_TOL: f64 = 1e-10;

/// The derivative bounds recomputed from their closed-form estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeBounds {
    /// `β e^{-βp} ≤ β` on the increasing piece.
    pub m1_increasing: f64,
    /// `|h_T'(1/2)|` bounded at `β = 2.48` on the decreasing piece.
    pub m1_decreasing: f64,
    pub m2_increasing: f64,
    pub m2_decreasing: f64,
    pub m1: f64,
    pub m2: f64,
    pub lipschitz: f64,
}

pub fn derivative_bounds() -> DerivativeBounds {
    let b = CERTIFIED_BETA_MAX;
    let m1_increasing = b;
    let m1_decreasing = (-3.0 * b / 2.0).exp() / 2f64.powi(-3) * 4.0 * b;
    let m2_increasing: f64 = 1.0;
    let m2_decreasing = 0.5 / (1.0 - (-b / 2.0).exp()).powi(4) * (14.0 * b / 2.0 + 8.0);
    let m1 = m1_increasing.max(m1_decreasing);
    let m2 = m2_increasing.max(m2_decreasing);
    DerivativeBounds {
        m1_increasing,
        m1_decreasing,
        m2_increasing,
        m2_decreasing,
        m1,
        m2,
        lipschitz: 3.0 * m1 * m1 * m2,
    }
}

/// Minimum of `|(h_T³)'|` over `[a₁, 1/2] \ {a₀}` for one `β`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct D3Infimum {
    pub beta: f64,
    pub infimum: f64,
    pub argmin: f64,
    pub argmin_side: Side,
    /// Kink set: points of `[a₁, 1/2]` mapped onto `a₀` by `h`, `h²` or
    /// `h³` (including `a₀`), sorted.
    pub breakpoints: Vec<f64>,
}

/// Preimages of `y` under `h_T` restricted to `[a₁, 1/2]`, one per monotone
/// piece when it exists.
pub fn preimages_in_trap(y: f64, beta: f64) -> Result<Vec<f64>> {
    let lm = landmarks(beta)?;
    let (a0, a1) = (lm.a0, lm.a1);
    let h = |p: f64| h_tree_raw(p, beta);
    let mut out = Vec::with_capacity(2);
    // increasing on [a1, a0]
    let (lo_val, hi_val) = (h(a1), h(a0));
    if y >= lo_val && y <= hi_val {
        out.push(bisect(|p| h(p) - y, a1, a0, PREIMAGE_TOL)?);
    }
    // decreasing on [a0, 1/2]
    let (hi_val, lo_val) = (h(a0), h(0.5));
    if y >= lo_val && y <= hi_val {
        out.push(bisect(|p| h(p) - y, a0, 0.5, PREIMAGE_TOL)?);
    }
    Ok(out)
}

/// Kink set of `h³` (plus the level-three preimages) inside `[a₁, 1/2]`.
pub fn kink_set(beta: f64) -> Result<Vec<f64>> {
    let lm = landmarks(beta)?;
    let mut all = vec![lm.a0];
    let mut level = vec![lm.a0];
    for _ in 0..3 {
        let mut next = Vec::with_capacity(level.len() * 2);
        for &y in &level {
            next.extend(preimages_in_trap(y, beta)?);
        }
        all.extend_from_slice(&next);
        level = next;
    }
    all.sort_by(|a, b| a.total_cmp(b));
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(all)
}

/// One-sided derivative of `h³` at `p` by the chain rule.
///
/// Intermediate images that land within rounding of `a₀` are snapped onto it
/// so the side propagated through the chain picks the right branch.
pub fn d_h3_one_sided(p: f64, beta: f64, side: Side) -> f64 {
    let a0 = std::f64::consts::LN_2 / beta;
    let mut x = p;
    let mut s = side;
    let mut prod = 1.0;
    for _ in 0..3 {
        if (x - a0).abs() < SNAP_TOL {
            x = a0;
        }
        let d = d_h_tree_raw(x, beta, s);
        prod *= d;
        if d < 0.0 {
            s = s.flip();
        }
        x = if x == a0 { 0.5 } else { h_tree_raw(x, beta) };
    }
    prod
}

fn d3_infimum_unchecked(beta: f64) -> Result<D3Infimum> {
    let lm = landmarks(beta)?;
    let breakpoints = kink_set(beta)?;
    let mut best = (f64::INFINITY, lm.a1, Side::Right);
    let mut consider = |p: f64, side: Side| {
        let v = d_h3_one_sided(p, beta, side).abs();
        if v < best.0 {
            best = (v, p, side);
        }
    };
    consider(lm.a1, Side::Right);
    consider(0.5, Side::Left);
    for &p in &breakpoints {
        consider(p, Side::Left);
        consider(p, Side::Right);
    }
    if !best.0.is_finite() {
        return Err(Error::Numerical(format!("non-finite infimum at beta={beta}")));
    }
    Ok(D3Infimum {
        beta,
        infimum: best.0,
        argmin: best.1,
        argmin_side: best.2,
        breakpoints,
    })
}

fn check_range(beta: f64, max: f64) -> Result<()> {
    if beta > beta_c::<f64>() && beta <= max {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "beta must lie in (2 log 2, {max}], got {beta}"
        )))
    }
}

/// Infimum of `|(h_T³)'|` for `β ∈ (2 log 2, 2.48]`.
pub fn d3_infimum(beta: f64) -> Result<D3Infimum> {
    check_range(beta, CERTIFIED_BETA_MAX)?;
    d3_infimum_unchecked(beta)
}

/// Same as [`d3_infimum`] but accepts the scan range up to `β = 2.6`.
pub fn d3_infimum_scan(beta: f64) -> Result<D3Infimum> {
    check_range(beta, SCAN_BETA_MAX)?;
    d3_infimum_unchecked(beta)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaInfimum {
    pub beta: f64,
    pub infimum: f64,
    pub argmin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificationReport {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub grid_step: f64,
    pub lipschitz_bound: f64,
    /// Absent for scan-only reports that reach past the certified range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
    pub min_infimum: f64,
    /// `min_infimum - lipschitz_bound * grid_step` (zero step for a single point).
    pub margin: f64,
    pub per_beta: Vec<BetaInfimum>,
}

impl CertificationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Grid `β_lo, β_lo + step, …` up to `β_hi`, closed at `β_hi`.
pub fn beta_grid(beta_lo: f64, beta_hi: f64, step: f64) -> Vec<f64> {
    if beta_hi <= beta_lo {
        return vec![beta_lo];
    }
    let n = ((beta_hi - beta_lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| beta_lo + step * i as f64).collect();
    if let Some(&last) = grid.last() {
        if last > beta_hi {
            grid.pop();
        }
    }
    if grid.last().map_or(true, |&last| beta_hi - last > 1e-12) {
        grid.push(beta_hi);
    }
    grid
}

fn sweep(
    beta_lo: f64,
    beta_hi: f64,
    grid_step: f64,
    max: f64,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<(Vec<BetaInfimum>, f64)> {
    if !(grid_step > 0.0) || !grid_step.is_finite() {
        return Err(Error::Parameter(format!(
            "grid_step must be positive, got {grid_step}"
        )));
    }
    if beta_hi < beta_lo {
        return Err(Error::Parameter(format!(
            "beta_lo ({beta_lo}) must not exceed beta_hi ({beta_hi})"
        )));
    }
    check_range(beta_lo, max)?;
    check_range(beta_hi, max)?;
    let grid = beta_grid(beta_lo, beta_hi, grid_step);
    let total = grid.len();
    let chunk = 4096;
    let mut per_beta = Vec::with_capacity(total);
    for (ci, betas) in grid.chunks(chunk).enumerate() {
        let part: Vec<Result<BetaInfimum>> = betas
            .par_iter()
            .map(|&b| {
                d3_infimum_unchecked(b).map(|r| BetaInfimum {
                    beta: b,
                    infimum: r.infimum,
                    argmin: r.argmin,
                })
            })
            .collect();
        for r in part {
            per_beta.push(r?);
        }
        if let Some(cb) = progress {
            cb(((ci + 1) * chunk).min(total), total);
        }
    }
    let effective_step = if total > 1 { grid_step } else { 0.0 };
    Ok((per_beta, effective_step))
}

fn report(
    beta_lo: f64,
    beta_hi: f64,
    grid_step: f64,
    per_beta: Vec<BetaInfimum>,
    effective_step: f64,
    certify: bool,
) -> CertificationReport {
    let min_infimum = per_beta.iter().map(|r| r.infimum).fold(f64::INFINITY, f64::min);
    let margin = min_infimum - LIPSCHITZ_BOUND * effective_step;
    CertificationReport {
        beta_lo,
        beta_hi,
        grid_step,
        lipschitz_bound: LIPSCHITZ_BOUND,
        certified: certify.then_some(margin > 1.0 + CERT_SLACK),
        min_infimum,
        margin,
        per_beta,
    }
}

/// Evaluate the infimum on the grid and apply the Lipschitz argument.
pub fn certify_expansion(beta_lo: f64, beta_hi: f64, grid_step: f64) -> Result<CertificationReport> {
    certify_expansion_with_progress(beta_lo, beta_hi, grid_step, None)
}

pub fn certify_expansion_with_progress(
    beta_lo: f64,
    beta_hi: f64,
    grid_step: f64,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<CertificationReport> {
    let (per_beta, eff) = sweep(beta_lo, beta_hi, grid_step, CERTIFIED_BETA_MAX, progress)?;
    Ok(report(beta_lo, beta_hi, grid_step, per_beta, eff, true))
}

/// Scan-only sweep up to `β = 2.6`; the report carries no `certified` field.
pub fn scan_expansion(beta_lo: f64, beta_hi: f64, grid_step: f64) -> Result<CertificationReport> {
    let (per_beta, eff) = sweep(beta_lo, beta_hi, grid_step, SCAN_BETA_MAX, None)?;
    Ok(report(beta_lo, beta_hi, grid_step, per_beta, eff, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    /// `(h³)'` from the displayed piecewise derivative, written out
    /// independently of the library path.
    fn oracle_d3(p: f64, b: f64) -> f64 {
        let a0 = LN2 / b;
        let h = |x: f64| {
            if x <= a0 {
                1.0 - (-b * x).exp()
            } else {
                (-3.0 * b * x).exp() / (1.0 - (-b * x).exp()).powi(2)
            }
        };
        let dh = |x: f64| {
            if x < a0 {
                b * (-b * x).exp()
            } else {
                (-3.0 * b * x).exp() / (1.0 - (-b * x).exp()).powi(3) * (-3.0 * b + b * (-b * x).exp())
            }
        };
        let x1 = h(p);
        let x2 = h(x1);
        dh(x2) * dh(x1) * dh(p)
    }

    #[test]
    fn bounds_reproduce_published_constants() {
        let b = derivative_bounds();
        assert!((b.m1_decreasing - 1.923).abs() < 1e-3);
        assert!((b.m2 - M2).abs() < 5e-3, "{}", b.m2);
        assert_eq!(b.m1, M1);
        assert!(b.lipschitz <= LIPSCHITZ_BOUND, "{}", b.lipschitz);
        let published = 3.0 * M1 * M1 * M2;
        assert!(published <= LIPSCHITZ_BOUND && LIPSCHITZ_BOUND - published < 0.05);
    }

    #[test]
    fn kink_set_maps_to_a0() {
        let b = 2.0;
        let a0 = LN2 / b;
        let ks = kink_set(b).unwrap();
        assert!(ks.contains(&a0));
        for &p in &ks {
            let mut x = p;
            let mut hit = (x - a0).abs() < 1e-9;
            for _ in 0..3 {
                x = h_tree_raw(x, b);
                hit |= (x - a0).abs() < 1e-9;
            }
            assert!(hit, "{p} never reaches a0");
        }
    }

    #[test]
    fn one_sided_matches_finite_differences_at_kinks() {
        let b = 2.2;
        for &p in &kink_set(b).unwrap() {
            let h3 = |x: f64| h_tree_raw(h_tree_raw(h_tree_raw(x, b), b), b);
            let eps = 1e-7;
            let left = (h3(p) - h3(p - eps)) / eps;
            let right = (h3(p + eps) - h3(p)) / eps;
            let dl = d_h3_one_sided(p, b, Side::Left);
            let dr = d_h3_one_sided(p, b, Side::Right);
            assert!(
                (dl - left).abs() < 1e-3 * dl.abs().max(1.0),
                "p={p} {dl} vs {left}"
            );
            assert!(
                (dr - right).abs() < 1e-3 * dr.abs().max(1.0),
                "p={p} {dr} vs {right}"
            );
        }
    }

    #[test]
    fn infimum_examples() {
        assert!(d3_infimum(1.40).unwrap().infimum > 1.002);
        assert!(d3_infimum(2.48).unwrap().infimum > 1.002);
        assert!(d3_infimum(1.3).is_err());
        assert!(d3_infimum(2.5).is_err());
        assert!(d3_infimum_scan(2.55).is_ok());
    }

    #[test]
    fn infimum_against_dense_samples() {
        let b = 2.0;
        let r = d3_infimum(b).unwrap();
        let lm = landmarks(b).unwrap();
        let n = 10_000;
        let mut min = f64::INFINITY;
        for i in 0..=n {
            let p = lm.a1 + (0.5 - lm.a1) * i as f64 / n as f64;
            if r.breakpoints.iter().any(|&k| (k - p).abs() < 1e-12) {
                continue;
            }
            let v = oracle_d3(p, b).abs();
            assert!(v >= r.infimum - 1e-9, "p={p}: {v} < {}", r.infimum);
            min = min.min(v);
        }
        assert!(r.infimum <= min + 1e-9);
    }

    #[test]
    fn grid_is_closed_at_top() {
        let g = beta_grid(1.0, 1.25, 0.1);
        assert_eq!(g.len(), 4);
        assert_eq!(*g.last().unwrap(), 1.25);
        assert_eq!(beta_grid(1.5, 1.5, 0.1), vec![1.5]);
        let g = beta_grid(1.0, 1.3, 0.1);
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn coarse_certificate_fails_on_margin_only() {
        let lo = 2.0 * LN2 + 1e-3;
        let rep = certify_expansion(lo, 2.48, 1e-2).unwrap();
        assert_eq!(rep.certified, Some(false));
        assert!(rep.per_beta.iter().all(|r| r.infimum > 1.002));
        assert!((rep.margin - (rep.min_infimum - 917.6 * 1e-2)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval() {
        let rep = certify_expansion(2.0, 2.0, 1e-3).unwrap();
        assert_eq!(rep.per_beta.len(), 1);
        assert_eq!(rep.margin, rep.min_infimum);
        assert_eq!(rep.certified, Some(rep.min_infimum > 1.0 + CERT_SLACK));
        assert!(certify_expansion(2.0, 2.5, 1e-3).is_err());
        assert!(certify_expansion(2.0, 2.1, 0.0).is_err());
    }

    #[test]
    fn scan_report_omits_certified() {
        let rep = scan_expansion(2.4, 2.6, 0.05).unwrap();
        assert!(rep.certified.is_none());
        let json = rep.to_json().unwrap();
        assert!(!json.contains("certified"));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["beta_lo", "beta_hi", "grid_step", "lipschitz_bound", "per_beta"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["per_beta"][0].get("argmin").is_some());
    }
}
