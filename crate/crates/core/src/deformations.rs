//! First-order deformations of the worldvolume geometry.
//!
//! A deformation δX is decomposed as φ^a e_a + φ^I n_I on every slice that
//! carries frames. Closed-form first-order changes of Γ_ab, Γ^ab, √|Γ|, e_a
//! and K_ab^I are evaluated from the decomposition; an independent oracle
//! rebuilds the geometry at X ± εδX and differences it.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{ExtendedEmbedding, WorldvolumePatch};
use crate::error::{Error, Result};
use crate::geometry::{alignment, FrameField, PointFrame};

/// Curvature of the background entering the extrinsic deformation and the
/// linearized equation through R((e_a, n_J), e_b, n^I).
pub trait BackgroundCurvature {
    fn riemann_term(&self, frame: &PointFrame, a: usize, b: usize, i: usize, j: usize) -> f64;
}

/// Flat background: the Riemann term vanishes.
#[derive(Clone, Copy, Debug, Default)]
pub struct Flat;

impl BackgroundCurvature for Flat {
    fn riemann_term(&self, _: &PointFrame, _: usize, _: usize, _: usize, _: usize) -> f64 {
        0.0
    }
}

/// δX together with its tangential and normal parts.
#[derive(Clone, Debug)]
pub struct DeformationField {
    delta: Vec<Option<ExtendedEmbedding>>,
    /// φ^a (contravariant) per point.
    tangential: Vec<Option<Vec<DVector<f64>>>>,
    /// φ^I per point, in the raw frame of that point.
    normal: Vec<Option<Vec<DVector<f64>>>>,
}

impl DeformationField {
    /// Decompose a displacement given on every slice of the patch.
    pub fn from_displacement(ff: &FrameField, delta: Vec<ExtendedEmbedding>) -> Result<Self> {
        if delta.len() != ff.n_slices() {
            return Err(Error::ShapeMismatch(format!(
                "displacement has {} slices, frames have {}",
                delta.len(),
                ff.n_slices()
            )));
        }
        let n = ff.bg.total_dim();
        for d in &delta {
            if d.n_comp() != n || d.values().len() != ff.npts() * n {
                return Err(Error::ShapeMismatch("displacement size".into()));
            }
        }
        let mut tangential = vec![None; delta.len()];
        let mut normal = vec![None; delta.len()];
        for s in 0..delta.len() {
            if !ff.has_frames(s) {
                continue;
            }
            let (t, nn) = project(ff, s, &delta[s])?;
            tangential[s] = Some(t);
            normal[s] = Some(nn);
        }
        Ok(Self {
            delta: delta.into_iter().map(Some).collect(),
            tangential,
            normal,
        })
    }

    /// Assemble δX = φ^a e_a + φ^I n_I on slices where both parts and frames exist.
    pub fn from_parts(
        ff: &FrameField,
        tangential: Vec<Option<Vec<DVector<f64>>>>,
        normal: Vec<Option<Vec<DVector<f64>>>>,
    ) -> Result<Self> {
        let ns = ff.n_slices();
        if tangential.len() != ns || normal.len() != ns {
            return Err(Error::ShapeMismatch("one entry per slice expected".into()));
        }
        let m = ff.wv_dim();
        let k = ff.codim();
        let n = ff.bg.total_dim();
        let mut delta = vec![None; ns];
        for s in 0..ns {
            let (Some(t), Some(nn)) = (&tangential[s], &normal[s]) else {
                continue;
            };
            let frames = ff.frames(s)?;
            if t.len() != ff.npts() || nn.len() != ff.npts() {
                return Err(Error::ShapeMismatch("one value per point expected".into()));
            }
            let mut values = Vec::with_capacity(ff.npts() * n);
            for (p, f) in frames.iter().enumerate() {
                if t[p].len() != m || nn[p].len() != k {
                    return Err(Error::ShapeMismatch(format!(
                        "parts must have {m} tangential and {k} normal components"
                    )));
                }
                let v = f.metric.tangents.transpose() * &t[p] + f.normals.transpose() * &nn[p];
                values.extend(v.iter());
            }
            delta[s] = Some(ExtendedEmbedding::from_values(&ff.layout.grid, n, values, None)?);
        }
        Ok(Self {
            delta,
            tangential,
            normal,
        })
    }

    /// Normal deformation δX = Σ_I (W·n^I) n_I built from a background vector field W.
    pub fn normal_projection(ff: &FrameField, w: &[ExtendedEmbedding]) -> Result<Self> {
        let ns = ff.n_slices();
        if w.len() != ns {
            return Err(Error::ShapeMismatch("one field per slice expected".into()));
        }
        let m = ff.wv_dim();
        let mut tangential = vec![None; ns];
        let mut normal = vec![None; ns];
        for s in 0..ns {
            if !ff.has_frames(s) {
                continue;
            }
            let (_, nn) = project(ff, s, &w[s])?;
            tangential[s] = Some(vec![DVector::zeros(m); ff.npts()]);
            normal[s] = Some(nn);
        }
        Self::from_parts(ff, tangential, normal)
    }

    pub fn zero(ff: &FrameField) -> Result<Self> {
        let n = ff.bg.total_dim();
        let zero = ExtendedEmbedding::from_values(&ff.layout.grid, n, vec![0.0; ff.npts() * n], None)?;
        Self::from_displacement(ff, vec![zero; ff.n_slices()])
    }

    pub fn delta(&self, s: usize) -> Option<&ExtendedEmbedding> {
        self.delta.get(s).and_then(|d| d.as_ref())
    }

    pub fn tangential(&self, s: usize) -> Option<&[DVector<f64>]> {
        self.tangential.get(s).and_then(|d| d.as_deref())
    }

    pub fn normal(&self, s: usize) -> Option<&[DVector<f64>]> {
        self.normal.get(s).and_then(|d| d.as_deref())
    }

    /// Largest |φ^a| over the slices that carry parts.
    pub fn max_tangential(&self) -> f64 {
        self.tangential
            .iter()
            .flatten()
            .flatten()
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    /// Largest |δX| component.
    pub fn max_displacement(&self) -> f64 {
        self.delta
            .iter()
            .flatten()
            .flat_map(|d| d.values().iter())
            .fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    /// Max difference between the stored parts and a fresh projection of δX.
    pub fn reconstruction_residual(&self, ff: &FrameField) -> Result<f64> {
        let mut r: f64 = 0.0;
        for s in 0..self.delta.len() {
            let (Some(d), Some(t), Some(nn)) = (self.delta(s), self.tangential(s), self.normal(s)) else {
                continue;
            };
            let (t2, n2) = project(ff, s, d)?;
            for p in 0..ff.npts() {
                r = r.max((&t[p] - &t2[p]).amax()).max((&nn[p] - &n2[p]).amax());
            }
        }
        Ok(r)
    }

    fn require(&self, ff: &FrameField, s: usize, reach: usize, normal_only: bool) -> Result<()> {
        let lo = s.checked_sub(reach).ok_or_else(|| {
            Error::InsufficientHistory(format!("deformation needed {reach} slices before {s}"))
        })?;
        for s2 in lo..=s + reach {
            let ok = self.normal(s2).is_some() && (normal_only || self.tangential(s2).is_some());
            if !ok || !ff.has_frames(s2) {
                return Err(Error::InsufficientHistory(format!(
                    "deformation parts missing on slice {s2}"
                )));
            }
        }
        Ok(())
    }
}

fn project(
    ff: &FrameField,
    s: usize,
    d: &ExtendedEmbedding,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let frames = ff.frames(s)?;
    let n = ff.bg.total_dim();
    if d.n_comp() != n {
        return Err(Error::ShapeMismatch("displacement components".into()));
    }
    let mut t = Vec::with_capacity(frames.len());
    let mut nn = Vec::with_capacity(frames.len());
    for (p, f) in frames.iter().enumerate() {
        let low = DVector::from_vec(ff.bg.lower(d.point(p)));
        let phi_low = &f.metric.tangents * &low;
        t.push(&f.metric.metric_inv * phi_low);
        nn.push(&f.normals * &low);
    }
    Ok((t, nn))
}

/// First-order changes of the intrinsic geometry at one point.
#[derive(Clone, Debug)]
pub struct IntrinsicDeformation {
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub sqrt_det: f64,
    /// Row `a` holds De_a^μ̄.
    pub tangents: DMatrix<f64>,
}

/// DΓ_ab, DΓ^ab, D√|Γ| and De_a on slice `s` from the decomposed deformation.
pub fn deform_intrinsic(
    ff: &FrameField,
    def: &DeformationField,
    s: usize,
) -> Result<Vec<IntrinsicDeformation>> {
    let reach = usize::from(ff.layout.timelike);
    def.require(ff, s, reach, false)?;
    let frames = ff.frames(s)?;
    let conn = ff.connection(s)?;
    let m = ff.wv_dim();
    let k = ff.codim();
    let tang = |s2: usize, q: usize| -> DVector<f64> {
        let f = ff.frame(s2, q).expect("frames checked");
        &f.metric.metric * &def.tangential(s2).expect("checked")[q]
    };
    let normal = |s2: usize, q: usize| -> DMatrix<f64> {
        let v = &def.normal(s2).expect("checked")[q];
        DMatrix::from_column_slice(k, 1, v.as_slice())
    };
    let mut out = Vec::with_capacity(frames.len());
    for (p, f) in frames.iter().enumerate() {
        let phi_up = &def.tangential(s).expect("checked")[p];
        let phi_low = tang(s, p);
        let phi_n = &def.normal(s).expect("checked")[p];
        // ∇_a φ_b = ∂_a φ_b − Γ_ab^c φ_c
        let mut nabla = DMatrix::zeros(m, m);
        for a in 0..m {
            let mut d = DVector::zeros(m);
            for (off, w) in ff.layout.d1(a) {
                let (s2, q, _) = ff.layout.resolve(s, p, off);
                d += tang(s2, q) * w;
            }
            for b in 0..m {
                let gam: f64 = (0..m).map(|c| conn[p].christoffel[c][(a, b)] * phi_low[c]).sum();
                nabla[(a, b)] = d[b] - gam;
            }
        }
        let mut kphi = DMatrix::zeros(m, m);
        for i in 0..k {
            kphi += &f.curvature[i] * phi_n[i];
        }
        let dmetric = &kphi * 2.0 + &nabla + nabla.transpose();
        let gi = &f.metric.metric_inv;
        let dmetric_inv = -(gi * &dmetric * gi);
        let div = gi.component_mul(&nabla).sum();
        let kn = f.mean_curvature().dot(phi_n);
        let sqrt_det = f.metric.sqrt_det() * (div + kn);

        // De_a = (K_ab^I φ_I) e^b + (∇̃_a φ_I) n^I + (∇_a φ^b) e_b − K_ab^I φ^b n_I
        let dual = f.metric.dual_tangents();
        let nabla_up = &nabla * gi; // ∇_a φ^b
        let mut de = &kphi * &dual + &nabla_up * &f.metric.tangents;
        for a in 0..m {
            let dn = ff.tilde_covariant_derivative(s, p, a, 1, normal)?;
            for i in 0..k {
                let kphi_up: f64 = (0..m).map(|b| f.curvature[i][(a, b)] * phi_up[b]).sum();
                let coef = dn[(i, 0)] - kphi_up;
                let row = f.normals.row(i) * coef;
                let mut r = de.row_mut(a);
                r += row;
            }
        }
        out.push(IntrinsicDeformation {
            metric: dmetric,
            metric_inv: dmetric_inv,
            sqrt_det,
            tangents: de,
        });
    }
    Ok(out)
}

/// DK_ab^I on slice `s` for a normal deformation.
///
/// DK_ab^I = −∇̃_(a ∇̃_b) φ^I + K_ac^I K^c_{bJ} φ^J + R((e_a, n_J), e_b, n^I) φ^J
/// with K_ab^I = −g(∂_a e_b, n^I).
pub fn deform_extrinsic(
    ff: &FrameField,
    def: &DeformationField,
    s: usize,
    curvature: &dyn BackgroundCurvature,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let reach = usize::from(ff.layout.timelike);
    def.require(ff, s, reach, true)?;
    let scale = def.max_displacement().max(1.0);
    for s2 in s - reach..=s + reach {
        if let Some(t) = def.tangential(s2) {
            let mx = t.iter().map(|v| v.amax()).fold(0.0, f64::max);
            if mx > 1e-8 * scale {
                return Err(Error::ContractViolation(format!(
                    "extrinsic deformation needs a normal deformation, |φ^a| = {mx:e} on slice {s2}"
                )));
            }
        }
    }
    let frames = ff.frames(s)?;
    let m = ff.wv_dim();
    let k = ff.codim();
    let field = |s2: usize, q: usize| def.normal(s2).expect("checked")[q].clone();
    let mut out = Vec::with_capacity(frames.len());
    for (p, f) in frames.iter().enumerate() {
        let hess = ff.tilde_hessian(s, p, field)?;
        let phi = &def.normal(s).expect("checked")[p];
        let gi = &f.metric.metric_inv;
        let mut dk = Vec::with_capacity(k);
        for i in 0..k {
            let mut d = -&hess[i];
            // the antisymmetric parts of ∇̃∇̃φ and K K φ cancel; keep the symmetric ones
            for j in 0..k {
                let kk = &f.curvature[i] * gi * &f.curvature[j];
                d += (&kk + kk.transpose()) * (0.5 * phi[j]);
            }
            for a in 0..m {
                for b in 0..m {
                    let r: f64 = (0..k)
                        .map(|j| curvature.riemann_term(f, a, b, i, j) * phi[j])
                        .sum();
                    d[(a, b)] += r;
                }
            }
            dk.push(d);
        }
        out.push(dk);
    }
    Ok(out)
}

/// Δ̃φ^I + K_ac^I K^{ac}_J φ^J + R((e_a, n_J), e^a, n^I) φ^J on slice `s`.
pub fn linearized_eom_apply(
    ff: &FrameField,
    s: usize,
    normal: &dyn Fn(usize, usize) -> DVector<f64>,
    curvature: &dyn BackgroundCurvature,
) -> Result<Vec<DVector<f64>>> {
    let frames = ff.frames(s)?;
    let m = ff.wv_dim();
    let k = ff.codim();
    let mut out = Vec::with_capacity(frames.len());
    for (p, f) in frames.iter().enumerate() {
        let hess = ff.tilde_hessian(s, p, normal)?;
        let phi = normal(s, p);
        let gi = &f.metric.metric_inv;
        let mut r = DVector::zeros(k);
        for i in 0..k {
            let mut v = gi.component_mul(&hess[i]).sum();
            let ki_up = f.curvature_raised(i);
            for j in 0..k {
                v += ki_up.component_mul(&f.curvature[j]).sum() * phi[j];
                let mut riem = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        riem += gi[(a, b)] * curvature.riemann_term(f, a, b, i, j);
                    }
                }
                v += riem * phi[j];
            }
            r[i] = v;
        }
        out.push(r);
    }
    Ok(out)
}

/// Finite-difference changes of the geometry at one point.
#[derive(Clone, Debug)]
pub struct OracleDeformation {
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    pub sqrt_det: f64,
    pub tangents: DMatrix<f64>,
    /// DK_ab^I with the deformed normals aligned to the undeformed frame.
    pub curvature: Vec<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Differencing {
    Forward,
    Central,
}

pub const ORACLE_EPS_RANGE: (f64, f64) = (1e-7, 1e-3);

/// Rebuild the geometry of X + εδX (and X − εδX when central) and difference
/// it against the undeformed frames. Results are indexed by patch slice;
/// entries are `None` where the deformed geometry has no frames.
pub fn deformation_oracle(
    patch: &WorldvolumePatch,
    ff: &FrameField,
    def: &DeformationField,
    eps: f64,
    mode: Differencing,
) -> Result<Vec<Option<Vec<OracleDeformation>>>> {
    if !(ORACLE_EPS_RANGE.0..=ORACLE_EPS_RANGE.1).contains(&eps) {
        return Err(Error::ContractViolation(format!(
            "oracle step {eps:e} outside [{:e}, {:e}]",
            ORACLE_EPS_RANGE.0, ORACLE_EPS_RANGE.1
        )));
    }
    if patch.slices.len() != ff.n_slices() {
        return Err(Error::ShapeMismatch("patch and frames disagree".into()));
    }
    // contiguous run of slices carrying δX around the centre
    let c = patch.centre();
    if def.delta(c).is_none() {
        return Err(Error::InsufficientHistory(
            "no displacement on the centre slice".into(),
        ));
    }
    let mut lo = c;
    while lo > 0 && def.delta(lo - 1).is_some() {
        lo -= 1;
    }
    let mut hi = c;
    while hi + 1 < patch.slices.len() && def.delta(hi + 1).is_some() {
        hi += 1;
    }
    let run = WorldvolumePatch::new(patch.layout.clone(), patch.slices[lo..=hi].to_vec());
    let delta: Vec<_> = (lo..=hi)
        .map(|s| def.delta(s).expect("contiguous").clone())
        .collect();
    let sub = |sign: f64| run.shifted(sign * eps, delta.clone());
    let plus = FrameField::build(&sub(1.0)?, &ff.bg, ff.tol)?;
    let minus = match mode {
        Differencing::Central => Some(FrameField::build(&sub(-1.0)?, &ff.bg, ff.tol)?),
        Differencing::Forward => None,
    };
    let mut out = vec![None; patch.slices.len()];
    for (j, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let js = j - lo;
        if !plus.has_frames(js) || !ff.has_frames(j) {
            continue;
        }
        let base = ff.frames(j)?;
        let fp = plus.frames(js)?;
        let fm = match &minus {
            Some(mf) => Some(mf.frames(js)?),
            None => None,
        };
        let mut pts = Vec::with_capacity(base.len());
        for (p, f0) in base.iter().enumerate() {
            let a = &fp[p];
            let (b, denom) = match fm {
                Some(fm) => (&fm[p], 2.0 * eps),
                None => (f0, eps),
            };
            let ka = aligned_curvature(a, f0, ff);
            let kb = aligned_curvature(b, f0, ff);
            pts.push(OracleDeformation {
                metric: (&a.metric.metric - &b.metric.metric) / denom,
                metric_inv: (&a.metric.metric_inv - &b.metric.metric_inv) / denom,
                sqrt_det: (a.metric.sqrt_det() - b.metric.sqrt_det()) / denom,
                tangents: (&a.metric.tangents - &b.metric.tangents) / denom,
                curvature: ka.iter().zip(&kb).map(|(x, y)| (x - y) / denom).collect(),
            });
        }
        *slot = Some(pts);
    }
    Ok(out)
}

fn aligned_curvature(f: &PointFrame, reference: &PointFrame, ff: &FrameField) -> Vec<DMatrix<f64>> {
    let r = alignment(&reference.normals, &f.normals, &ff.bg);
    let k = f.codim();
    (0..k)
        .map(|j| {
            let mut acc = DMatrix::zeros(f.wv_dim(), f.wv_dim());
            for i in 0..k {
                acc += &f.curvature[i] * r[(i, j)];
            }
            acc
        })
        .collect()
}

/// Relative max-norm mismatch per quantity, max|formula − oracle| / max|oracle|.
/// D√|Γ| is measured against the larger of its own and the DΓ scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeformationMismatch {
    pub metric: f64,
    pub metric_inv: f64,
    pub sqrt_det: f64,
    pub tangents: f64,
    pub curvature: f64,
}

impl DeformationMismatch {
    pub fn max(&self) -> f64 {
        [
            self.metric,
            self.metric_inv,
            self.sqrt_det,
            self.tangents,
            self.curvature,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Compare formula and oracle on one slice. `extrinsic` may be omitted for
/// deformations with a tangential part.
pub fn compare(
    intrinsic: &[IntrinsicDeformation],
    extrinsic: Option<&[Vec<DMatrix<f64>>]>,
    oracle: &[OracleDeformation],
) -> DeformationMismatch {
    let mut err = [0.0f64; 5];
    let mut mag = [0.0f64; 5];
    for (f, o) in intrinsic.iter().zip(oracle) {
        err[0] = err[0].max((&f.metric - &o.metric).amax());
        mag[0] = mag[0].max(o.metric.amax());
        err[1] = err[1].max((&f.metric_inv - &o.metric_inv).amax());
        mag[1] = mag[1].max(o.metric_inv.amax());
        err[2] = err[2].max((f.sqrt_det - o.sqrt_det).abs());
        mag[2] = mag[2].max(o.sqrt_det.abs());
        err[3] = err[3].max((&f.tangents - &o.tangents).amax());
        mag[3] = mag[3].max(o.tangents.amax());
    }
    if let Some(ext) = extrinsic {
        for (f, o) in ext.iter().zip(oracle) {
            for (a, b) in f.iter().zip(&o.curvature) {
                err[4] = err[4].max((a - b).amax());
                mag[4] = mag[4].max(b.amax());
            }
        }
    }
    DeformationMismatch {
        metric: rel(err[0], mag[0]),
        metric_inv: rel(err[1], mag[1]),
        // δ√|Γ| ∝ Γ^{ab}K_ab vanishes for normal deformations of solutions
        sqrt_det: rel(err[2], mag[2].max(mag[0])),
        tangents: rel(err[3], mag[3]),
        curvature: if extrinsic.is_some() {
            rel(err[4], mag[4])
        } else {
            0.0
        },
    }
}

/// Smooth seeded random vector field on every slice of a patch.
///
/// Each component is a sum of `modes` travelling waves with integer spatial
/// wavenumbers in [−max_k, max_k], frequencies in [−1, 1] and amplitudes up
/// to `amplitude`.
pub fn random_smooth_field(
    patch: &WorldvolumePatch,
    seed: u64,
    modes: usize,
    max_k: i32,
    amplitude: f64,
) -> Result<Vec<ExtendedEmbedding>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = patch.grid();
    let n = patch.n_comp();
    let d = grid.spatial_dim();
    let waves: Vec<Vec<(f64, [f64; 3], f64, f64)>> = (0..n)
        .map(|_| {
            (0..modes)
                .map(|_| {
                    let mut kv = [0.0; 3];
                    for kk in kv.iter_mut().take(d) {
                        *kk = rng.gen_range(-max_k..=max_k) as f64;
                    }
                    (
                        amplitude * rng.gen_range(-1.0..1.0),
                        kv,
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    let c = patch.centre() as f64;
    let dt = patch.layout.dt;
    (0..patch.slices.len())
        .map(|j| {
            let tau = (j as f64 - c) * dt;
            ExtendedEmbedding::from_fn(grid, n, None, |xi| {
                waves
                    .iter()
                    .map(|ws| {
                        ws.iter()
                            .map(|(amp, kv, nu, ph)| {
                                let arg: f64 = (0..d).map(|i| kv[i] * xi[i]).sum::<f64>() + nu * tau + ph;
                                amp * arg.cos()
                            })
                            .sum()
                    })
                    .collect()
            })
        })
        .collect()
}

/// Write an oracle sweep as CSV: ε followed by the mismatch per quantity.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[(f64, DeformationMismatch)]) -> Result<()> {
    writeln!(w, "eps,metric,metric_inv,sqrt_det,tangents,curvature")?;
    for (eps, m) in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            eps, m.metric, m.metric_inv, m.sqrt_det, m.tangents, m.curvature
        )?;
    }
    Ok(())
}
