//! Geometry of the discrete torus `(Z mod N)^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `d`-dimensional torus of side `N`; site `x` has index `Σ x_a N^a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Torus {
    dim: usize,
    side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 || side < 2 {
            return Err(Error::Parameter(format!(
                "torus needs dim >= 1 and side >= 2, got dim={dim} side={side}"
            )));
        }
        let n = side
            .checked_pow(dim as u32)
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| Error::Parameter(format!("torus {side}^{dim} is too large")))?;
        let _ = n;
        Ok(Torus { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow(axis as u32)
    }

    #[inline]
    pub fn coord(&self, i: usize, axis: usize) -> usize {
        (i / self.stride(axis)) % self.side
    }

    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            out.push(i % self.side);
            i /= self.side;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &x| acc * self.side + (x % self.side))
    }

    /// Neighbor one step along `axis`, forward (`+1`) or backward, with wrap.
    #[inline]
    pub fn step(&self, i: usize, axis: usize, forward: bool) -> usize {
        let s = self.stride(axis);
        let x = (i / s) % self.side;
        if forward {
            if x + 1 == self.side {
                i - (self.side - 1) * s
            } else {
                i + s
            }
        } else if x == 0 {
            i + (self.side - 1) * s
        } else {
            i - s
        }
    }

    /// The `2d` nearest neighbors (`‖x - y‖₁ = 1`).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).flat_map(move |a| [self.step(i, a, true), self.step(i, a, false)])
    }
}
