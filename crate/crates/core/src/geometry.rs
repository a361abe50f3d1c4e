//! Induced worldvolume geometry of an extended embedding.
//!
//! Quantities are computed slice by slice. On a timelike patch with `S`
//! slices, per-point frames (tangents, metric, normals, extrinsic curvature)
//! exist on slices `1..S-1` and the connection (Christoffels, normal
//! derivatives, twist) on slices `2..S-2`. A Riemannian patch has a single
//! slice carrying everything.
//!
//! Normal frames are built pointwise and are only fixed up to a rotation.
//! Derivatives of normal-indexed objects are taken after rotating each
//! stencil neighbour's frame onto the centre frame (orthogonal Procrustes),
//! which gives a locally smooth gauge around every point.

use nalgebra::{DMatrix, DVector};

use crate::background::KKBackground;
use crate::embedding::WorldvolumePatch;
use crate::error::{Error, Result};
use crate::grid::{Layout, Offset};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub frame: f64,
    pub degenerate: f64,
    pub pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            frame: 1e-10,
            degenerate: 1e-12,
            pivot: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            frame: self.frame * s,
            degenerate: self.degenerate * s,
            pivot: self.pivot * s,
        }
    }
}

/// Tangents and induced metric at one point.
#[derive(Clone, Debug)]
pub struct PointMetric {
    /// Row `a` holds e_a^μ̄.
    pub tangents: DMatrix<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub det: f64,
    /// Induced metric of the base embedding alone.
    pub base_metric: DMatrix<f64>,
    pub base_det: f64,
    /// Chirality scalar γ^ab φ,_a φ,_b.
    pub varpi: f64,
    /// ϖ recovered from det Γ = det γ (1 + g44 ϖ).
    pub varpi_from_det: f64,
}

impl PointMetric {
    pub fn sqrt_det(&self) -> f64 {
        self.det.abs().sqrt()
    }

    /// Gradient φ,_a.
    pub fn phi_gradient(&self) -> DVector<f64> {
        let kk = self.tangents.ncols() - 1;
        self.tangents.column(kk).into_owned()
    }

    /// e^{aμ̄} = Γ^{ab} e_b^μ̄.
    pub fn dual_tangents(&self) -> DMatrix<f64> {
        &self.metric_inv * &self.tangents
    }
}

/// Full pointwise frame.
#[derive(Clone, Debug)]
pub struct PointFrame {
    pub metric: PointMetric,
    /// Row `I` holds n^{Iμ̄}.
    pub normals: DMatrix<f64>,
    /// ∂_a ∂_b X^μ̄ stored at `a * m + b` (symmetric).
    pub hessian: Vec<DVector<f64>>,
    /// K_ab^I, one symmetric matrix per normal.
    pub curvature: Vec<DMatrix<f64>>,
}

impl PointFrame {
    pub fn wv_dim(&self) -> usize {
        self.metric.metric.nrows()
    }

    pub fn codim(&self) -> usize {
        self.normals.nrows()
    }

    pub fn hess(&self, a: usize, b: usize) -> &DVector<f64> {
        &self.hessian[a * self.wv_dim() + b]
    }

    /// Γ^{ab} K_ab^I.
    pub fn mean_curvature(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.codim(),
            self.curvature
                .iter()
                .map(|k| self.metric.metric_inv.component_mul(k).sum()),
        )
    }

    /// K^{ab I} with both worldvolume indices raised.
    pub fn curvature_raised(&self, i: usize) -> DMatrix<f64> {
        let gi = &self.metric.metric_inv;
        gi * &self.curvature[i] * gi
    }
}

/// Connection data at one point.
#[derive(Clone, Debug)]
pub struct PointConnection {
    /// Γ_ab^c stored as one m×m matrix per upper index c.
    pub christoffel: Vec<DMatrix<f64>>,
    /// ∂_a n^{Iμ̄} in the centre-aligned gauge, one k×N matrix per a.
    pub normal_derivative: Vec<DMatrix<f64>>,
    /// ω_a^{IJ}, one antisymmetric k×k matrix per a.
    pub twist: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct SliceGeometry {
    pub frames: Vec<PointFrame>,
    pub connection: Option<Vec<PointConnection>>,
}

/// Tangent vectors e_a^μ̄ on `slice`, one m×N matrix per point.
///
/// Spatial directions use fourth-order centred differences; on a timelike
/// patch e_τ is the centred difference across the neighbouring slices.
pub fn tangent_basis(patch: &WorldvolumePatch, slice: usize) -> Result<Vec<DMatrix<f64>>> {
    let lay = &patch.layout;
    if lay.timelike && (slice == 0 || slice + 1 >= patch.slices.len()) {
        return Err(Error::InsufficientHistory(format!(
            "tangents on slice {slice} need both neighbouring slices"
        )));
    }
    let m = lay.wv_dim();
    let n = patch.n_comp();
    let stencils: Vec<_> = (0..m).map(|a| lay.d1(a)).collect();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(lay.grid.len());
    for p in 0..lay.grid.len() {
        let mut e = DMatrix::zeros(m, n);
        for (a, st) in stencils.iter().enumerate() {
            patch.apply(slice, p, st, &mut buf);
            for mu in 0..n {
                e[(a, mu)] = buf[mu];
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Tangents on a single slice with e_τ supplied as a velocity field.
pub fn tangents_with_velocity(patch_slice: &WorldvolumePatch, velocity: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let grid = patch_slice.grid();
    let n = patch_slice.n_comp();
    if velocity.len() != grid.len() * n {
        return Err(Error::ShapeMismatch("velocity field size".into()));
    }
    let spatial = Layout::riemannian(grid.clone());
    let d = grid.spatial_dim();
    let stencils: Vec<_> = (0..d).map(|a| spatial.d1(a)).collect();
    let mut buf = vec![0.0; n];
    let mut out = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let mut e = DMatrix::zeros(d + 1, n);
        for mu in 0..n {
            e[(0, mu)] = velocity[p * n + mu];
        }
        for (a, st) in stencils.iter().enumerate() {
            let mut acc = vec![0.0; n];
            for &(off, w) in st {
                let (_, q, wraps) = spatial.resolve(0, p, off);
                patch_slice.slices[0].unwrapped(q, &wraps, &mut buf);
                for (o, b) in acc.iter_mut().zip(&buf) {
                    *o += w * b;
                }
            }
            for mu in 0..n {
                e[(a + 1, mu)] = acc[mu];
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Induced metric Γ_ab, its inverse and determinant, the base metric γ_ab and ϖ.
pub fn induced_metric(
    tangents: &DMatrix<f64>,
    bg: &KKBackground,
    timelike: bool,
    tol: &Tolerances,
    point: usize,
) -> Result<PointMetric> {
    let m = tangents.nrows();
    let n = tangents.ncols();
    if n != bg.total_dim() {
        return Err(Error::ShapeMismatch(format!(
            "tangents have {n} components, background has {}",
            bg.total_dim()
        )));
    }
    let mut metric = DMatrix::zeros(m, m);
    let mut base_metric = DMatrix::zeros(m, m);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|a| tangents.row(a).iter().copied().collect())
        .collect();
    for a in 0..m {
        for b in a..m {
            let g = bg.dot(&rows[a], &rows[b]);
            let gb = bg.base_dot(&rows[a], &rows[b]);
            metric[(a, b)] = g;
            metric[(b, a)] = g;
            base_metric[(a, b)] = gb;
            base_metric[(b, a)] = gb;
        }
    }
    let det = metric.determinant();
    if det.abs() < tol.degenerate || !det.is_finite() {
        return Err(Error::DegenerateMetric { point, det });
    }
    if timelike && det > 0.0 {
        return Err(Error::NotTimelike { point, det });
    }
    if !timelike && det < 0.0 {
        return Err(Error::DegenerateMetric { point, det });
    }
    let metric_inv = metric
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateMetric { point, det })?;
    let base_det = base_metric.determinant();
    if base_det.abs() < tol.degenerate {
        return Err(Error::DegenerateBaseMetric { point });
    }
    let base_inv = base_metric
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateBaseMetric { point })?;
    let dphi = tangents.column(n - 1);
    let varpi = (dphi.transpose() * &base_inv * dphi)[(0, 0)];
    let varpi_from_det = (det / base_det - 1.0) / bg.g44();
    Ok(PointMetric {
        tangents: tangents.clone(),
        metric,
        metric_inv,
        det,
        base_metric,
        base_det,
        varpi,
        varpi_from_det,
    })
}

/// The Kaluza-Klein normal ansatz √g44 (e^μ_a γ^{ab} φ,_b, −g^{44}).
///
/// Its self-norm is 1 + g44 ϖ, so it is a unit normal exactly when ϖ = 0.
pub fn kk_normal_ansatz(pm: &PointMetric, bg: &KKBackground) -> Option<DVector<f64>> {
    let base_inv = pm.base_metric.clone().try_inverse()?;
    let n = bg.total_dim();
    let dphi = pm.phi_gradient();
    let up = base_inv * dphi; // γ^{ab} φ,_b
    let mut v = DVector::zeros(n);
    for mu in 0..bg.base_dim() {
        v[mu] = (0..up.len()).map(|a| pm.tangents[(a, mu)] * up[a]).sum();
    }
    v[bg.kk_index()] = -1.0 / bg.g44();
    Some(v * bg.g44().sqrt())
}

fn gdot(bg: &KKBackground, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    bg.dot(u.as_slice(), v.as_slice())
}

fn project_out(
    bg: &KKBackground,
    v: &DVector<f64>,
    tangents: &[DVector<f64>],
    duals: &[DVector<f64>],
    accepted: &[DVector<f64>],
) -> DVector<f64> {
    let mut r = v.clone();
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for (e, ed) in tangents.iter().zip(duals) {
            let c = gdot(bg, &r, e);
            r -= ed * c;
        }
        for nn in accepted {
            let c = gdot(bg, &r, nn);
            r -= nn * c;
        }
    }
    r
}

/// Deterministic unit normals satisfying g(n^I, e_a) = 0 and g(n^I, n^J) = δ^{IJ}.
///
/// The Kaluza-Klein ansatz seeds the frame (renormalised when ϖ ≠ 0). The
/// remaining normals come from the background coordinate axes: at every step
/// the candidate whose projection orthogonal to the tangents and the accepted
/// normals is longest wins, ties going to the lowest axis index.
pub fn normal_frame(
    pm: &PointMetric,
    bg: &KKBackground,
    tol: &Tolerances,
    point: usize,
) -> Result<DMatrix<f64>> {
    let m = pm.tangents.nrows();
    let n = bg.total_dim();
    if n <= m {
        return Err(Error::FrameConstruction {
            point,
            found: 0,
            needed: 0,
        });
    }
    let k = n - m;
    let tangents: Vec<DVector<f64>> = (0..m)
        .map(|a| pm.tangents.row(a).transpose().into_owned())
        .collect();
    let dual = pm.dual_tangents();
    let duals: Vec<DVector<f64>> = (0..m).map(|a| dual.row(a).transpose().into_owned()).collect();

    let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(k);
    if let Some(seed) = kk_normal_ansatz(pm, bg) {
        let r = project_out(bg, &seed, &tangents, &duals, &accepted);
        let nrm2 = gdot(bg, &r, &r);
        if nrm2 > tol.pivot * tol.pivot {
            accepted.push(r / nrm2.sqrt());
        }
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    while accepted.len() < k {
        let mut best: Option<(usize, f64, DVector<f64>)> = None;
        for (slot, &axis) in remaining.iter().enumerate() {
            let mut v = DVector::zeros(n);
            v[axis] = 1.0 / bg.metric(axis).abs().sqrt();
            let r = project_out(bg, &v, &tangents, &duals, &accepted);
            let nrm = gdot(bg, &r, &r).max(0.0).sqrt();
            if best.as_ref().is_none_or(|b| nrm > b.1) {
                best = Some((slot, nrm, r));
            }
        }
        match best {
            Some((slot, nrm, r)) if nrm > tol.pivot => {
                remaining.remove(slot);
                accepted.push(r / nrm);
            }
            _ => {
                return Err(Error::FrameConstruction {
                    point,
                    found: accepted.len(),
                    needed: k,
                })
            }
        }
    }
    let mut out = DMatrix::zeros(k, n);
    for (i, v) in accepted.iter().enumerate() {
        out.row_mut(i).copy_from(&v.transpose());
    }
    Ok(out)
}

/// K_ab^I = −g(∂_a e_b, n^I), symmetrised over (a, b).
pub fn extrinsic_curvature(
    hessian: &[DVector<f64>],
    normals: &DMatrix<f64>,
    m: usize,
    bg: &KKBackground,
) -> Vec<DMatrix<f64>> {
    let k = normals.nrows();
    (0..k)
        .map(|i| {
            let nrow: Vec<f64> = normals.row(i).iter().copied().collect();
            let mut kk = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    let v = -bg.dot(hessian[a * m + b].as_slice(), &nrow);
                    kk[(a, b)] += 0.5 * v;
                    kk[(b, a)] += 0.5 * v;
                }
            }
            kk
        })
        .collect()
}

/// Rotation R (k×k) such that the rows of Rᵀ·`other` best match `centre`.
///
/// Components of a normal-indexed object sampled in the `other` frame become
/// φ'^J = Σ_I φ^I R_IJ in the aligned gauge.
pub fn alignment(centre: &DMatrix<f64>, other: &DMatrix<f64>, bg: &KKBackground) -> DMatrix<f64> {
    let k = centre.nrows();
    let mut overlap = DMatrix::zeros(k, k);
    for i in 0..k {
        let oi: Vec<f64> = other.row(i).iter().copied().collect();
        for j in 0..k {
            let cj: Vec<f64> = centre.row(j).iter().copied().collect();
            overlap[(i, j)] = bg.dot(&oi, &cj);
        }
    }
    polar_factor(overlap)
}

/// Orthogonal factor of the polar decomposition, by scaled Newton iteration
/// R ← ½(ζR + R^{-T}/ζ).
///
/// Overlap matrices are close to orthogonal with nearly equal singular
/// values, where SVD-based polar factors lose accuracy.
pub fn polar_factor(a: DMatrix<f64>) -> DMatrix<f64> {
    let mut r = a;
    for _ in 0..100 {
        let Some(inv) = r.clone().try_inverse() else {
            break;
        };
        let zeta = (inv.norm() / r.norm()).sqrt();
        let next = (&r * zeta + inv.transpose() / zeta) * 0.5;
        let delta = (&next - &r).amax();
        r = next;
        if delta < 1e-15 {
            break;
        }
    }
    r
}

/// Twist potential of an arbitrary (smooth) normal-frame field on a
/// Riemannian patch, by direct differencing without realignment.
///
/// This is the raw-gauge form ω_a^{IJ} = (∂_a n^I)·n^J, antisymmetrised.
pub fn twist_potential(
    layout: &Layout,
    normals: &[DMatrix<f64>],
    bg: &KKBackground,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    if layout.timelike {
        return Err(Error::ContractViolation(
            "raw twist differencing is only defined on single-slice patches".into(),
        ));
    }
    let m = layout.wv_dim();
    let npts = layout.grid.len();
    if normals.len() != npts {
        return Err(Error::ShapeMismatch("one normal frame per point expected".into()));
    }
    let k = normals[0].nrows();
    if k < 2 {
        return Ok(vec![vec![DMatrix::zeros(k, k); m]; npts]);
    }
    let mut out = Vec::with_capacity(npts);
    for p in 0..npts {
        let mut per_a = Vec::with_capacity(m);
        for a in 0..m {
            let mut dn = DMatrix::zeros(k, normals[p].ncols());
            for (off, w) in layout.d1(a) {
                let (_, q, _) = layout.resolve(0, p, off);
                dn += &normals[q] * w;
            }
            per_a.push(twist_from_derivative(&dn, &normals[p], bg));
        }
        out.push(per_a);
    }
    Ok(out)
}

fn twist_from_derivative(dn: &DMatrix<f64>, n: &DMatrix<f64>, bg: &KKBackground) -> DMatrix<f64> {
    let k = n.nrows();
    let mut w = DMatrix::zeros(k, k);
    for i in 0..k {
        let di: Vec<f64> = dn.row(i).iter().copied().collect();
        for j in 0..k {
            let nj: Vec<f64> = n.row(j).iter().copied().collect();
            w[(i, j)] = bg.dot(&di, &nj);
        }
    }
    (&w - w.transpose()) * 0.5
}

/// All geometry of a patch.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub layout: Layout,
    pub bg: KKBackground,
    pub tol: Tolerances,
    slices: Vec<Option<SliceGeometry>>,
}

impl FrameField {
    pub fn build(patch: &WorldvolumePatch, bg: &KKBackground, tol: Tolerances) -> Result<Self> {
        if patch.n_comp() != bg.total_dim() {
            return Err(Error::ShapeMismatch(format!(
                "embedding has {} components, background {}",
                patch.n_comp(),
                bg.total_dim()
            )));
        }
        if patch.layout.timelike != bg.is_lorentzian() {
            return Err(Error::ContractViolation(
                "timelike patches need a Lorentzian background and vice versa".into(),
            ));
        }
        let lay = patch.layout.clone();
        let ns = patch.slices.len();
        let mut slices: Vec<Option<SliceGeometry>> = vec![None; ns];
        let frame_range = if lay.timelike { 1..ns - 1 } else { 0..1 };
        for s in frame_range {
            let frames = build_slice_frames(patch, s, bg, &tol)?;
            slices[s] = Some(SliceGeometry {
                frames,
                connection: None,
            });
        }
        let mut field = Self {
            layout: lay,
            bg: bg.clone(),
            tol,
            slices,
        };
        let conn_range = if field.layout.timelike {
            2..ns.saturating_sub(2)
        } else {
            0..1
        };
        for s in conn_range {
            let conn = field.build_connection(s)?;
            field.slices[s].as_mut().unwrap().connection = Some(conn);
        }
        Ok(field)
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn centre(&self) -> usize {
        self.slices.len() / 2
    }

    pub fn npts(&self) -> usize {
        self.layout.grid.len()
    }

    pub fn wv_dim(&self) -> usize {
        self.layout.wv_dim()
    }

    pub fn codim(&self) -> usize {
        self.bg.total_dim() - self.wv_dim()
    }

    pub fn has_frames(&self, s: usize) -> bool {
        self.slices.get(s).is_some_and(|x| x.is_some())
    }

    pub fn has_connection(&self, s: usize) -> bool {
        self.slices
            .get(s)
            .and_then(|x| x.as_ref())
            .is_some_and(|g| g.connection.is_some())
    }

    pub fn frames(&self, s: usize) -> Result<&[PointFrame]> {
        self.slices
            .get(s)
            .and_then(|x| x.as_ref())
            .map(|g| g.frames.as_slice())
            .ok_or_else(|| Error::InsufficientHistory(format!("no frames on slice {s}")))
    }

    pub fn connection(&self, s: usize) -> Result<&[PointConnection]> {
        self.slices
            .get(s)
            .and_then(|x| x.as_ref())
            .and_then(|g| g.connection.as_deref())
            .ok_or_else(|| Error::InsufficientHistory(format!("no connection on slice {s}")))
    }

    pub fn frame(&self, s: usize, p: usize) -> Result<&PointFrame> {
        Ok(&self.frames(s)?[p])
    }

    /// Frame at a stencil point relative to `(s, p)`.
    pub fn frame_at(&self, s: usize, p: usize, off: Offset) -> Result<&PointFrame> {
        let target = s as i64 + off.dslice as i64;
        if target < 0 {
            return Err(Error::InsufficientHistory("stencil leaves the patch".into()));
        }
        let (s2, q, _) = self.layout.resolve(s, p, off);
        self.frame(s2, q)
    }

    /// Rotation taking normal components at a stencil point into the gauge
    /// aligned with the frame at `(s, p)`.
    pub fn rotation_at(&self, s: usize, p: usize, off: Offset) -> Result<DMatrix<f64>> {
        let k = self.codim();
        if off == Offset::ZERO {
            return Ok(DMatrix::identity(k, k));
        }
        let c = self.frame(s, p)?;
        let o = self.frame_at(s, p, off)?;
        Ok(alignment(&c.normals, &o.normals, &self.bg))
    }

    fn build_connection(&self, s: usize) -> Result<Vec<PointConnection>> {
        let m = self.wv_dim();
        let k = self.codim();
        let n = self.bg.total_dim();
        let d1: Vec<_> = (0..m).map(|a| self.layout.d1(a)).collect();
        let mut out = Vec::with_capacity(self.npts());
        for p in 0..self.npts() {
            let centre = self.frame(s, p)?;
            // ∂_c Γ_ab
            let mut dmetric = Vec::with_capacity(m);
            let mut dnormal = Vec::with_capacity(m);
            for st in &d1 {
                let mut dg = DMatrix::zeros(m, m);
                let mut dn = DMatrix::zeros(k, n);
                for &(off, w) in st {
                    let f = self.frame_at(s, p, off)?;
                    dg += &f.metric.metric * w;
                    let r = alignment(&centre.normals, &f.normals, &self.bg);
                    dn += r.transpose() * &f.normals * w;
                }
                dmetric.push(dg);
                dnormal.push(dn);
            }
            let gi = &centre.metric.metric_inv;
            let mut lower = vec![DMatrix::zeros(m, m); m]; // Γ_{ab d} at [d]
            for a in 0..m {
                for b in 0..m {
                    for d in 0..m {
                        lower[d][(a, b)] =
                            0.5 * (dmetric[a][(b, d)] + dmetric[b][(a, d)] - dmetric[d][(a, b)]);
                    }
                }
            }
            let mut christoffel = vec![DMatrix::zeros(m, m); m];
            for c in 0..m {
                for d in 0..m {
                    christoffel[c] += &lower[d] * gi[(c, d)];
                }
            }
            let twist = dnormal
                .iter()
                .map(|dn| twist_from_derivative(dn, &centre.normals, &self.bg))
                .collect();
            out.push(PointConnection {
                christoffel,
                normal_derivative: dnormal,
                twist,
            });
        }
        Ok(out)
    }

    /// Max residuals of g(n,e) = 0 and g(n^I,n^J) = δ^{IJ} over a slice.
    pub fn frame_axiom_residual(&self, s: usize) -> Result<(f64, f64)> {
        let mut orth: f64 = 0.0;
        let mut unit: f64 = 0.0;
        for f in self.frames(s)? {
            let (o, u) = frame_axioms(f, &self.bg);
            orth = orth.max(o);
            unit = unit.max(u);
        }
        Ok((orth, unit))
    }

    /// Max-norm residuals of both Gauss-Weingarten identities over a slice.
    pub fn gauss_weingarten_residual(&self, s: usize) -> Result<(f64, f64)> {
        let frames = self.frames(s)?;
        let conn = self.connection(s)?;
        let m = self.wv_dim();
        let k = self.codim();
        let mut rt: f64 = 0.0;
        let mut rn: f64 = 0.0;
        for (f, c) in frames.iter().zip(conn) {
            let e = &f.metric.tangents;
            for a in 0..m {
                for b in 0..m {
                    let mut r = f.hess(a, b).transpose();
                    for cc in 0..m {
                        r -= e.row(cc) * c.christoffel[cc][(a, b)];
                    }
                    for i in 0..k {
                        r += f.normals.row(i) * f.curvature[i][(a, b)];
                    }
                    rt = rt.max(r.amax());
                }
            }
            let gi = &f.metric.metric_inv;
            for a in 0..m {
                for i in 0..k {
                    let mut r = c.normal_derivative[a].row(i).into_owned();
                    for b in 0..m {
                        let kab: f64 = (0..m).map(|cc| gi[(b, cc)] * f.curvature[i][(a, cc)]).sum();
                        r -= e.row(b) * kab;
                    }
                    for j in 0..k {
                        r -= f.normals.row(j) * c.twist[a][(i, j)];
                    }
                    rn = rn.max(r.amax());
                }
            }
        }
        Ok((rt, rn))
    }

    /// ∇̃_a of a normal-indexed tensor given in the raw frame at every point.
    ///
    /// `rank` is 1 (vector φ^I, a k×1 matrix) or 2 (φ^I_J, a k×k matrix):
    /// ∇̃_a φ^I_J = ∂_a φ^I_J − ω_a^I_K φ^K_J − ω_{aJ}^K φ^I_K.
    pub fn tilde_covariant_derivative(
        &self,
        s: usize,
        p: usize,
        a: usize,
        rank: usize,
        field: impl Fn(usize, usize) -> DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let k = self.codim();
        let expected_cols = match rank {
            1 => 1,
            2 => k,
            _ => {
                return Err(Error::ContractViolation(format!(
                    "normal tensors of rank {rank} are not supported"
                )))
            }
        };
        if a >= self.wv_dim() {
            return Err(Error::ContractViolation(format!(
                "worldvolume index {a} out of range"
            )));
        }
        let conn = &self.connection(s)?[p];
        let mut d = DMatrix::zeros(k, expected_cols);
        for (off, w) in self.layout.d1(a) {
            let (s2, q, _) = self.layout.resolve(s, p, off);
            let v = field(s2, q);
            if v.nrows() != k || v.ncols() != expected_cols {
                return Err(Error::ContractViolation(format!(
                    "normal tensor has shape {}x{}, expected {k}x{expected_cols}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            let r = self.rotation_at(s, p, off)?;
            let aligned = if rank == 1 {
                r.transpose() * v
            } else {
                r.transpose() * v * &r
            };
            d += aligned * w;
        }
        let here = field(s, p);
        let om = &conn.twist[a];
        Ok(if rank == 1 {
            d - om * here
        } else {
            d - om * &here + here * om
        })
    }

    /// Symmetrised ∇̃_(a ∇̃_b) φ^I of a normal vector field given in the raw
    /// frame at every point; one m×m matrix per normal index.
    ///
    /// In the centre-aligned gauge the symmetrised derivative of ω vanishes,
    /// so only first-order twist terms survive.
    pub fn tilde_hessian(
        &self,
        s: usize,
        p: usize,
        field: impl Fn(usize, usize) -> DVector<f64>,
    ) -> Result<Vec<DMatrix<f64>>> {
        let m = self.wv_dim();
        let k = self.codim();
        let conn = &self.connection(s)?[p];
        let aligned = |st: &[(Offset, f64)]| -> Result<DVector<f64>> {
            let mut acc = DVector::zeros(k);
            for &(off, w) in st {
                let (s2, q, _) = self.layout.resolve(s, p, off);
                let v = field(s2, q);
                if v.len() != k {
                    return Err(Error::ShapeMismatch(format!(
                        "normal field has {} components, expected {k}",
                        v.len()
                    )));
                }
                acc += self.rotation_at(s, p, off)?.transpose() * v * w;
            }
            Ok(acc)
        };
        let here = field(s, p);
        let d1: Vec<DVector<f64>> = (0..m)
            .map(|a| aligned(&self.layout.d1(a)))
            .collect::<Result<_>>()?;
        let grad: Vec<DVector<f64>> = (0..m).map(|c| &d1[c] - &conn.twist[c] * &here).collect();
        let mut out = vec![DMatrix::zeros(m, m); k];
        for a in 0..m {
            for b in a..m {
                let oa = &conn.twist[a];
                let ob = &conn.twist[b];
                let mut t = aligned(&self.layout.d2(a, b))? - oa * &d1[b] - ob * &d1[a]
                    + (oa * ob + ob * oa) * &here * 0.5;
                for (c, g) in grad.iter().enumerate() {
                    t -= g * conn.christoffel[c][(a, b)];
                }
                for i in 0..k {
                    out[i][(a, b)] = t[i];
                    out[i][(b, a)] = t[i];
                }
            }
        }
        Ok(out)
    }

    /// Mean curvature vector H^μ̄ = Γ^{ab} K_ab^I n_I^μ̄ at every point of a slice.
    pub fn mean_curvature_vectors(&self, s: usize) -> Result<Vec<DVector<f64>>> {
        Ok(self
            .frames(s)?
            .iter()
            .map(|f| {
                let h = f.mean_curvature();
                (f.normals.transpose() * h).into_owned()
            })
            .collect())
    }
}

/// Orthogonality and orthonormality residuals of one frame.
pub fn frame_axioms(f: &PointFrame, bg: &KKBackground) -> (f64, f64) {
    let k = f.codim();
    let m = f.wv_dim();
    let mut orth: f64 = 0.0;
    let mut unit: f64 = 0.0;
    for i in 0..k {
        let ni: Vec<f64> = f.normals.row(i).iter().copied().collect();
        for a in 0..m {
            let ea: Vec<f64> = f.metric.tangents.row(a).iter().copied().collect();
            orth = orth.max(bg.dot(&ni, &ea).abs());
        }
        for j in 0..k {
            let nj: Vec<f64> = f.normals.row(j).iter().copied().collect();
            let target = if i == j { 1.0 } else { 0.0 };
            unit = unit.max((bg.dot(&ni, &nj) - target).abs());
        }
    }
    (orth, unit)
}

fn build_slice_frames(
    patch: &WorldvolumePatch,
    s: usize,
    bg: &KKBackground,
    tol: &Tolerances,
) -> Result<Vec<PointFrame>> {
    let lay = &patch.layout;
    let m = lay.wv_dim();
    let n = bg.total_dim();
    let tangents = tangent_basis(patch, s)?;
    let hess_stencils: Vec<Vec<_>> = (0..m).map(|a| (0..m).map(|b| lay.d2(a, b)).collect()).collect();
    let mut out = Vec::with_capacity(tangents.len());
    let mut buf = vec![0.0; n];
    for (p, e) in tangents.iter().enumerate() {
        let metric = induced_metric(e, bg, lay.timelike, tol, p)?;
        let normals = normal_frame(&metric, bg, tol, p)?;
        let mut hessian = vec![DVector::zeros(n); m * m];
        for a in 0..m {
            for b in a..m {
                patch.apply(s, p, &hess_stencils[a][b], &mut buf);
                let v = DVector::from_column_slice(&buf);
                hessian[a * m + b] = v.clone();
                hessian[b * m + a] = v;
            }
        }
        let curvature = extrinsic_curvature(&hessian, &normals, m, bg);
        out.push(PointFrame {
            metric,
            normals,
            hessian,
            curvature,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
