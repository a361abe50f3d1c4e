//! Sampled extended embeddings X^μ̄ = (X^μ, φ).

use std::f64::consts::TAU;

use crate::background::KKBackground;
use crate::error::{Error, Result};
use crate::grid::{Layout, Offset, WorldvolumeGrid, MAX_SPATIAL_DIM};

/// One spatial slice of an extended embedding.
///
/// Values are stored point-major with `total_dim` components per point; the
/// last component is φ. `winding` holds the per-period increment of each
/// component along each spatial direction, so that non-periodic but
/// linearly growing coordinates (an infinite straight string, a winding φ)
/// can live on the periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedEmbedding {
    n_comp: usize,
    values: Vec<f64>,
    winding: Vec<Vec<f64>>,
}

impl ExtendedEmbedding {
    /// Build from base coordinates (`npts × base_dim`) and φ values.
    pub fn from_parts(grid: &WorldvolumeGrid, base: &[f64], phi: &[f64]) -> Result<Self> {
        let npts = grid.len();
        if phi.len() != npts || base.len() % npts != 0 {
            return Err(Error::ShapeMismatch(format!(
                "base has {} values and phi {} for a {npts}-point grid",
                base.len(),
                phi.len()
            )));
        }
        let base_dim = base.len() / npts;
        let n_comp = base_dim + 1;
        let mut values = Vec::with_capacity(npts * n_comp);
        for p in 0..npts {
            values.extend_from_slice(&base[p * base_dim..(p + 1) * base_dim]);
            values.push(phi[p]);
        }
        Self::from_values(grid, n_comp, values, None)
    }

    /// Build from interleaved values (`npts × total_dim`).
    pub fn from_values(
        grid: &WorldvolumeGrid,
        n_comp: usize,
        values: Vec<f64>,
        winding: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if values.len() != grid.len() * n_comp {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len() * n_comp,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: bad / n_comp,
                component: bad % n_comp,
            });
        }
        let winding = winding.unwrap_or_else(|| vec![vec![0.0; n_comp]; grid.spatial_dim()]);
        if winding.len() != grid.spatial_dim() || winding.iter().any(|w| w.len() != n_comp) {
            return Err(Error::ShapeMismatch("winding shape".into()));
        }
        Ok(Self {
            n_comp,
            values,
            winding,
        })
    }

    /// Sample a function of the gridpoint coordinates.
    pub fn from_fn(
        grid: &WorldvolumeGrid,
        n_comp: usize,
        winding: Option<Vec<Vec<f64>>>,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * n_comp);
        for p in 0..grid.len() {
            let xi = grid.coords(p);
            let v = f(&xi[..grid.spatial_dim()]);
            if v.len() != n_comp {
                return Err(Error::ShapeMismatch(format!(
                    "embedding function returned {} components, expected {n_comp}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::from_values(grid, n_comp, values, winding)
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn winding(&self) -> &[Vec<f64>] {
        &self.winding
    }

    pub fn point(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_comp..(p + 1) * self.n_comp]
    }

    pub fn phi(&self, p: usize) -> f64 {
        self.values[p * self.n_comp + self.n_comp - 1]
    }

    /// Value at `p` continued across `wraps` periods.
    pub fn unwrapped(&self, p: usize, wraps: &[i32; MAX_SPATIAL_DIM], out: &mut [f64]) {
        out.copy_from_slice(self.point(p));
        for (d, w) in self.winding.iter().enumerate() {
            if wraps[d] != 0 {
                for (o, wc) in out.iter_mut().zip(w) {
                    *o += wraps[d] as f64 * wc;
                }
            }
        }
    }

    /// X + s·dX (winding of dX is added too).
    pub fn axpy(&self, s: f64, dx: &ExtendedEmbedding) -> ExtendedEmbedding {
        let values = self
            .values
            .iter()
            .zip(&dx.values)
            .map(|(a, b)| a + s * b)
            .collect();
        let winding = self
            .winding
            .iter()
            .zip(&dx.winding)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        ExtendedEmbedding {
            n_comp: self.n_comp,
            values,
            winding,
        }
    }
}

/// A stack of slices sampling the worldvolume near a reference time.
///
/// Riemannian analysis patches carry exactly one slice. Timelike patches carry
/// an odd number of slices spaced `dt` apart; the middle one is the centre.
///
/// A patch may carry a pending shift s·δX. It is kept apart from the slices
/// and only added after stencils are applied, so small shifts of large
/// coordinates keep their precision.
#[derive(Clone, Debug)]
pub struct WorldvolumePatch {
    pub layout: Layout,
    pub slices: Vec<ExtendedEmbedding>,
    shift: Option<(f64, Vec<ExtendedEmbedding>)>,
}

impl WorldvolumePatch {
    pub fn new(layout: Layout, slices: Vec<ExtendedEmbedding>) -> Self {
        Self {
            layout,
            slices,
            shift: None,
        }
    }

    pub fn riemannian(grid: WorldvolumeGrid, slice: ExtendedEmbedding) -> Self {
        Self::new(Layout::riemannian(grid), vec![slice])
    }

    pub fn timelike(grid: WorldvolumeGrid, dt: f64, slices: Vec<ExtendedEmbedding>) -> Result<Self> {
        if slices.len() < 3 || slices.len() % 2 == 0 {
            return Err(Error::InsufficientHistory(format!(
                "timelike patches need an odd number (>= 3) of slices, got {}",
                slices.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "slice spacing must be positive, got {dt}"
            )));
        }
        Ok(Self::new(Layout::timelike(grid, dt), slices))
    }

    /// Sample `f(τ, ξ)` at `2 * half + 1` slices centred on `tau0`.
    pub fn from_fn(
        grid: WorldvolumeGrid,
        bg: &KKBackground,
        tau0: f64,
        dt: f64,
        half: usize,
        winding: Option<Vec<Vec<f64>>>,
        f: impl Fn(f64, &[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut slices = Vec::with_capacity(2 * half + 1);
        for j in 0..=2 * half {
            let tau = tau0 + (j as f64 - half as f64) * dt;
            slices.push(ExtendedEmbedding::from_fn(
                &grid,
                bg.total_dim(),
                winding.clone(),
                |xi| f(tau, xi),
            )?);
        }
        Self::timelike(grid, dt, slices)
    }

    pub fn grid(&self) -> &WorldvolumeGrid {
        &self.layout.grid
    }

    pub fn centre(&self) -> usize {
        self.slices.len() / 2
    }

    pub fn n_comp(&self) -> usize {
        self.slices[0].n_comp()
    }

    /// X at a stencil point relative to `(slice, p)`, continued across periods.
    pub fn sample(&self, slice: usize, p: usize, off: Offset, out: &mut [f64]) {
        let (s, q, wraps) = self.layout.resolve(slice, p, off);
        self.slices[s].unwrapped(q, &wraps, out);
        if let Some((eps, delta)) = &self.shift {
            let mut buf = vec![0.0; out.len()];
            delta[s].unwrapped(q, &wraps, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += eps * b;
            }
        }
    }

    /// Apply a stencil to X at `(slice, p)`.
    pub fn apply(&self, slice: usize, p: usize, stencil: &[(Offset, f64)], out: &mut [f64]) {
        let mut buf = vec![0.0; self.n_comp()];
        let stencil_sum = |slices: &[ExtendedEmbedding], out: &mut [f64], buf: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for &(off, w) in stencil {
                let (s, q, wraps) = self.layout.resolve(slice, p, off);
                slices[s].unwrapped(q, &wraps, buf);
                for (o, b) in out.iter_mut().zip(buf.iter()) {
                    *o += w * b;
                }
            }
        };
        stencil_sum(&self.slices, out, &mut buf);
        if let Some((eps, delta)) = &self.shift {
            let mut d = vec![0.0; out.len()];
            stencil_sum(delta, &mut d, &mut buf);
            for (o, v) in out.iter_mut().zip(&d) {
                *o += eps * v;
            }
        }
    }

    /// Same slices with the pending shift s·δX (replacing any earlier one).
    pub fn shifted(&self, s: f64, delta: Vec<ExtendedEmbedding>) -> Result<Self> {
        if delta.len() != self.slices.len() {
            return Err(Error::ShapeMismatch(format!(
                "shift has {} slices, patch has {}",
                delta.len(),
                self.slices.len()
            )));
        }
        Ok(Self {
            layout: self.layout.clone(),
            slices: self.slices.clone(),
            shift: Some((s, delta)),
        })
    }

    /// Patch deformed to X + s·δX slice by slice.
    pub fn deformed(&self, s: f64, delta: &[ExtendedEmbedding]) -> Result<Self> {
        if delta.len() != self.slices.len() {
            return Err(Error::ShapeMismatch(format!(
                "deformation has {} slices, patch has {}",
                delta.len(),
                self.slices.len()
            )));
        }
        Ok(Self {
            layout: self.layout.clone(),
            slices: self.slices.iter().zip(delta).map(|(x, d)| x.axpy(s, d)).collect(),
            shift: None,
        })
    }

    /// Period of the grid in each spatial direction, for convenience in tests.
    pub fn period() -> f64 {
        TAU
    }
}
