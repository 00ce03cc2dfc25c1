//! Limiting interval maps and tools for iterating them.

pub mod certify;
pub mod lattice;
pub mod tree;

use rayon::prelude::*;

use crate::error::{check_density, Error, Result};
use crate::Real;

/// A self-map of `[0, 1]` describing one growth-plus-epidemic update of the
/// limiting density.
pub trait IntervalMap<T: Real> {
    fn apply(&self, p: T) -> Result<T>;
}

impl<T: Real, M: IntervalMap<T> + ?Sized> IntervalMap<T> for &M {
    fn apply(&self, p: T) -> Result<T> {
        (**self).apply(p)
    }
}

/// `(p0, h(p0), …, h^k_max(p0))`.
pub fn orbit<T: Real, M: IntervalMap<T>>(map: &M, p0: T, k_max: usize) -> Result<Vec<T>> {
    check_density(p0, "p0")?;
    let mut out = Vec::with_capacity(k_max + 1);
    let mut p = p0;
    out.push(p);
    for _ in 0..k_max {
        p = map.apply(p)?;
        out.push(p);
    }
    Ok(out)
}

/// Kept tail of the orbit from `p0` for every `β` of the grid, in grid order.
///
/// `make_map` builds the map for one `β`; grid points are evaluated in
/// parallel.
pub fn bifurcation_scan<T, M, F>(
    beta_grid: &[T],
    p0: T,
    burn_in: usize,
    keep: usize,
    make_map: F,
) -> Result<Vec<(T, T)>>
where
    T: Real,
    M: IntervalMap<T>,
    F: Fn(T) -> Result<M> + Sync,
{
    if keep == 0 {
        return Err(Error::Parameter("keep must be at least 1".into()));
    }
    check_density(p0, "p0")?;
    let columns: Vec<Result<Vec<(T, T)>>> = beta_grid
        .par_iter()
        .map(|&beta| {
            let map = make_map(beta)?;
            let mut p = p0;
            for _ in 0..burn_in {
                p = map.apply(p)?;
            }
            let mut col = Vec::with_capacity(keep);
            for _ in 0..keep {
                p = map.apply(p)?;
                col.push((beta, p));
            }
            Ok(col)
        })
        .collect();
    let mut out = Vec::with_capacity(beta_grid.len() * keep);
    for col in columns {
        out.extend(col?);
    }
    Ok(out)
}

/// Evenly spaced grid of `n` points on `[lo, hi]` (a single point if `n == 1`).
pub fn linear_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize(n - 1).unwrap();
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        lo + step * T::from_usize(i).unwrap()
                    }
                })
                .collect()
        }
    }
}

/// Bisection on a sign change of `g` over `[lo, hi]` to absolute tolerance
/// `tol`.
pub fn bisect<T: Real>(g: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> Result<T> {
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == T::zero() {
        return Ok(lo);
    }
    if g_hi == T::zero() {
        return Ok(hi);
    }
    if (g_lo > T::zero()) == (g_hi > T::zero()) || g_lo.is_nan() || g_hi.is_nan() {
        return Err(Error::Numerical(format!(
            "bisection does not bracket a root on [{lo}, {hi}]"
        )));
    }
    let two = T::lit(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let g_mid = g(mid);
        if g_mid == T::zero() {
            return Ok(mid);
        }
        if (g_mid > T::zero()) == (g_lo > T::zero()) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / two)
}

/// Nonzero fixed point of the growth map `p = 1 - exp(-βp)` for `β > 1`
/// (zero otherwise), by bisection.
pub fn growth_fixed_point<T: Real>(beta: T) -> Result<T> {
    if beta <= T::one() {
        return Ok(T::zero());
    }
    bisect(
        |p| tree::growth_raw(p, beta) - p,
        T::lit(1e-3).min(T::one() - T::one() / beta),
        T::one(),
        T::solve_tol(),
    )
}
