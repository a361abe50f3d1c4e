//! Periodic worldvolume grids and the finite-difference stencils used on them.
//!
//! Spatial directions are periodic with coordinate period 2π and use
//! fourth-order centred differences. The τ direction, when present, is
//! sampled on a stack of slices with second-order centred differences.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub const MAX_SPATIAL_DIM: usize = 3;
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldvolumeGrid {
    sizes: Vec<usize>,
    strides: Vec<usize>,
}

impl WorldvolumeGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > MAX_SPATIAL_DIM {
            return Err(Error::InvalidGrid(format!(
                "spatial dimension must be in 1..={MAX_SPATIAL_DIM}, got {}",
                sizes.len()
            )));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < MIN_POINTS) {
            return Err(Error::InvalidGrid(format!(
                "every direction needs at least {MIN_POINTS} points, got {n}"
            )));
        }
        let mut strides = Vec::with_capacity(sizes.len());
        let mut s = 1;
        for &n in sizes {
            strides.push(s);
            s *= n;
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            strides,
        })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn spatial_dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, dim: usize) -> f64 {
        TAU / self.sizes[dim] as f64
    }

    /// Product of spacings, the measure of one cell.
    pub fn cell_measure(&self) -> f64 {
        (0..self.spatial_dim()).map(|d| self.spacing(d)).product()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_SPATIAL_DIM] {
        let mut out = [0; MAX_SPATIAL_DIM];
        for (d, (&n, &s)) in self.sizes.iter().zip(&self.strides).enumerate() {
            out[d] = (idx / s) % n;
        }
        out
    }

    /// Coordinates ξ of a gridpoint.
    pub fn coords(&self, idx: usize) -> [f64; MAX_SPATIAL_DIM] {
        let m = self.multi_index(idx);
        let mut out = [0.0; MAX_SPATIAL_DIM];
        for d in 0..self.spatial_dim() {
            out[d] = m[d] as f64 * self.spacing(d);
        }
        out
    }

    /// Shift `idx` by `delta` points along `dim`; returns the wrapped index and
    /// the number of periods crossed.
    pub fn shift(&self, idx: usize, dim: usize, delta: i32) -> (usize, i32) {
        let n = self.sizes[dim] as i64;
        let s = self.strides[dim];
        let i = ((idx / s) % self.sizes[dim]) as i64;
        let j = i + delta as i64;
        let wraps = j.div_euclid(n);
        let jw = j.rem_euclid(n);
        let base = idx - (i as usize) * s;
        (base + jw as usize * s, wraps as i32)
    }
}

/// Displacement of a stencil point relative to its centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Offset {
    pub dslice: i32,
    pub dspace: [i32; MAX_SPATIAL_DIM],
}

impl Offset {
    pub const ZERO: Offset = Offset {
        dslice: 0,
        dspace: [0; MAX_SPATIAL_DIM],
    };

    fn add(self, other: Offset) -> Offset {
        let mut dspace = self.dspace;
        for (a, b) in dspace.iter_mut().zip(other.dspace) {
            *a += b;
        }
        Offset {
            dslice: self.dslice + other.dslice,
            dspace,
        }
    }

    /// Largest |dslice| the stencil reaches.
    pub fn slice_reach(&self) -> usize {
        self.dslice.unsigned_abs() as usize
    }
}

pub type Stencil = Vec<(Offset, f64)>;

const D1_OFFSETS: [i32; 4] = [-2, -1, 1, 2];
const D1_WEIGHTS: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];
const D2_OFFSETS: [i32; 5] = [-2, -1, 0, 1, 2];
const D2_WEIGHTS: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// How worldvolume indices map onto the sampled directions.
///
/// With a timelike worldvolume `a = 0` is τ and `a = 1..=d` are the spatial
/// directions; in the Riemannian analysis mode `a` indexes the spatial
/// directions directly.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub grid: WorldvolumeGrid,
    pub timelike: bool,
    pub dt: f64,
}

impl Layout {
    pub fn timelike(grid: WorldvolumeGrid, dt: f64) -> Self {
        Self {
            grid,
            timelike: true,
            dt,
        }
    }

    pub fn riemannian(grid: WorldvolumeGrid) -> Self {
        Self {
            grid,
            timelike: false,
            dt: 0.0,
        }
    }

    /// Worldvolume dimension (d+1 timelike, d Riemannian).
    pub fn wv_dim(&self) -> usize {
        self.grid.spatial_dim() + usize::from(self.timelike)
    }

    /// Spatial direction of worldvolume index `a`, `None` for τ.
    pub fn spatial_dir(&self, a: usize) -> Option<usize> {
        if self.timelike {
            a.checked_sub(1)
        } else {
            Some(a)
        }
    }

    fn unit(&self, a: usize, k: i32) -> Offset {
        let mut o = Offset::ZERO;
        match self.spatial_dir(a) {
            None => o.dslice = k,
            Some(d) => o.dspace[d] = k,
        }
        o
    }

    /// First derivative along `a`.
    pub fn d1(&self, a: usize) -> Stencil {
        match self.spatial_dir(a) {
            None => vec![
                (self.unit(a, -1), -0.5 / self.dt),
                (self.unit(a, 1), 0.5 / self.dt),
            ],
            Some(d) => {
                let h = self.grid.spacing(d);
                D1_OFFSETS
                    .iter()
                    .zip(D1_WEIGHTS)
                    .map(|(&k, w)| (self.unit(a, k), w / h))
                    .collect()
            }
        }
    }

    /// Second derivative ∂_a ∂_b.
    pub fn d2(&self, a: usize, b: usize) -> Stencil {
        if a != b {
            let sa = self.d1(a);
            let sb = self.d1(b);
            let mut out = Vec::with_capacity(sa.len() * sb.len());
            for &(oa, wa) in &sa {
                for &(ob, wb) in &sb {
                    out.push((oa.add(ob), wa * wb));
                }
            }
            return out;
        }
        match self.spatial_dir(a) {
            None => {
                let w = 1.0 / (self.dt * self.dt);
                vec![
                    (self.unit(a, -1), w),
                    (Offset::ZERO, -2.0 * w),
                    (self.unit(a, 1), w),
                ]
            }
            Some(d) => {
                let h = self.grid.spacing(d);
                D2_OFFSETS
                    .iter()
                    .zip(D2_WEIGHTS)
                    .map(|(&k, w)| (self.unit(a, k), w / (h * h)))
                    .collect()
            }
        }
    }

    /// Resolve a stencil offset at `(slice, idx)`: the target slice and point
    /// plus the number of periods crossed along each spatial direction.
    pub fn resolve(&self, slice: usize, idx: usize, off: Offset) -> (usize, usize, [i32; MAX_SPATIAL_DIM]) {
        let s = slice as i64 + off.dslice as i64;
        debug_assert!(s >= 0);
        let mut j = idx;
        let mut wraps = [0; MAX_SPATIAL_DIM];
        for d in 0..self.grid.spatial_dim() {
            if off.dspace[d] != 0 {
                let (jj, w) = self.grid.shift(j, d, off.dspace[d]);
                j = jj;
                wraps[d] = w;
            }
        }
        (s as usize, j, wraps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(WorldvolumeGrid::line(7).is_err());
        assert!(WorldvolumeGrid::new(&[8, 4]).is_err());
        assert!(WorldvolumeGrid::new(&[]).is_err());
    }

    #[test]
    fn shift_wraps_periodically() {
        let g = WorldvolumeGrid::new(&[8, 10]).unwrap();
        assert_eq!(g.shift(0, 0, -1), (7, -1));
        assert_eq!(g.shift(7, 0, 2), (1, 1));
        // second direction has stride 8
        let (j, w) = g.shift(3 + 8 * 9, 1, 1);
        assert_eq!((j, w), (3, 1));
    }

    #[test]
    fn fourth_order_derivative_of_sine() {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = WorldvolumeGrid::line(n).unwrap();
            let lay = Layout::riemannian(g.clone());
            let f: Vec<f64> = (0..n).map(|i| g.coords(i)[0].sin()).collect();
            let st = lay.d1(0);
            let mut e: f64 = 0.0;
            for i in 0..n {
                let d: f64 = st.iter().map(|&(o, w)| w * f[lay.resolve(0, i, o).1]).sum();
                e = e.max((d - g.coords(i)[0].cos()).abs());
            }
            errs.push(e);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.8, "order {order}");
    }
}
