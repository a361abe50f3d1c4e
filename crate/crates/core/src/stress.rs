//! Auxiliary-variable treatment of reparametrization invariant densities
//! H(Γ_ab, K_ab^I): Lagrange multipliers, the stress tensor f^a and the
//! equations of motion it encodes.
//!
//! Multipliers are solved for the energy density −H, so that H = −μ₀ yields
//! f^a = −μ₀ Γ^{ab} e_b and √(−Γ) f^a is the momentum flux P^{aμ̄}.

use nalgebra::{DMatrix, DVector};

use crate::charges::{flux_divergence, momentum_flux};
use crate::error::{Error, Result};
use crate::geometry::{FrameField, PointFrame};

/// Central-difference step for the generic partials.
pub const PARTIAL_STEP: f64 = 1e-6;

/// A density H(Γ_ab, K_ab^I). Partials are formal symmetric derivatives:
/// entry (a, b) is the response to Γ_ab and Γ_ba each moving by ½.
pub trait HamiltonianDensity {
    fn id(&self) -> &str;

    fn value(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> f64;

    fn d_metric(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> DMatrix<f64> {
        numeric_metric_partial(self, metric, curvature)
    }

    fn d_curvature(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        numeric_curvature_partial(self, metric, curvature)
    }

    /// μ₀ when the density reduces to −μ₀ on flat configurations.
    fn tension(&self) -> Option<f64> {
        None
    }

    /// Whether H depends on K at all (Λ ≡ 0 otherwise).
    fn uses_curvature(&self) -> bool {
        true
    }
}

fn sym_unit(m: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(m, m);
    e[(a, b)] += 0.5;
    e[(b, a)] += 0.5;
    e
}

pub fn numeric_metric_partial<H: HamiltonianDensity + ?Sized>(
    h: &H,
    metric: &DMatrix<f64>,
    curvature: &[DMatrix<f64>],
) -> DMatrix<f64> {
    let m = metric.nrows();
    let mut out = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let e = sym_unit(m, a, b) * PARTIAL_STEP;
            let d = (h.value(&(metric + &e), curvature) - h.value(&(metric - &e), curvature))
                / (2.0 * PARTIAL_STEP);
            out[(a, b)] = d;
            out[(b, a)] = d;
        }
    }
    out
}

pub fn numeric_curvature_partial<H: HamiltonianDensity + ?Sized>(
    h: &H,
    metric: &DMatrix<f64>,
    curvature: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let m = metric.nrows();
    let mut out = vec![DMatrix::zeros(m, m); curvature.len()];
    let mut work = curvature.to_vec();
    for i in 0..curvature.len() {
        for a in 0..m {
            for b in a..m {
                let e = sym_unit(m, a, b) * PARTIAL_STEP;
                work[i] = &curvature[i] + &e;
                let plus = h.value(metric, &work);
                work[i] = &curvature[i] - &e;
                let minus = h.value(metric, &work);
                work[i] = curvature[i].clone();
                let d = (plus - minus) / (2.0 * PARTIAL_STEP);
                out[i][(a, b)] = d;
                out[i][(b, a)] = d;
            }
        }
    }
    out
}

fn inverse(metric: &DMatrix<f64>) -> DMatrix<f64> {
    metric
        .clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(metric.nrows(), metric.ncols(), f64::NAN))
}

/// H = −μ₀.
#[derive(Clone, Copy, Debug)]
pub struct Dng {
    pub mu0: f64,
}

impl HamiltonianDensity for Dng {
    fn id(&self) -> &str {
        "dng"
    }

    fn value(&self, _: &DMatrix<f64>, _: &[DMatrix<f64>]) -> f64 {
        -self.mu0
    }

    fn d_metric(&self, metric: &DMatrix<f64>, _: &[DMatrix<f64>]) -> DMatrix<f64> {
        DMatrix::zeros(metric.nrows(), metric.ncols())
    }

    fn d_curvature(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(metric.nrows(), metric.ncols()); curvature.len()]
    }

    fn tension(&self) -> Option<f64> {
        Some(self.mu0)
    }

    fn uses_curvature(&self) -> bool {
        false
    }
}

/// H = −μ₀ + α Σ_I (K^I)², K^I = Γ^{ab} K_ab^I.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureQuadratic {
    pub mu0: f64,
    pub alpha: f64,
}

impl CurvatureQuadratic {
    fn traces(metric_inv: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> Vec<f64> {
        curvature
            .iter()
            .map(|k| metric_inv.component_mul(k).sum())
            .collect()
    }
}

impl HamiltonianDensity for CurvatureQuadratic {
    fn id(&self) -> &str {
        "curvature_quadratic"
    }

    fn value(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> f64 {
        let t = Self::traces(&inverse(metric), curvature);
        -self.mu0 + self.alpha * t.iter().map(|x| x * x).sum::<f64>()
    }

    fn d_metric(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> DMatrix<f64> {
        let gi = inverse(metric);
        let t = Self::traces(&gi, curvature);
        let mut out = DMatrix::zeros(metric.nrows(), metric.ncols());
        for (k, ti) in curvature.iter().zip(&t) {
            out -= &gi * k * &gi * (2.0 * self.alpha * ti);
        }
        out
    }

    fn d_curvature(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let gi = inverse(metric);
        Self::traces(&gi, curvature)
            .iter()
            .map(|ti| &gi * (2.0 * self.alpha * ti))
            .collect()
    }

    fn tension(&self) -> Option<f64> {
        Some(self.mu0)
    }
}

/// Wraps a density and hides its analytic partials.
pub struct NumericPartials<H>(pub H);

impl<H: HamiltonianDensity> HamiltonianDensity for NumericPartials<H> {
    fn id(&self) -> &str {
        self.0.id()
    }

    fn value(&self, metric: &DMatrix<f64>, curvature: &[DMatrix<f64>]) -> f64 {
        self.0.value(metric, curvature)
    }

    fn tension(&self) -> Option<f64> {
        self.0.tension()
    }

    fn uses_curvature(&self) -> bool {
        self.0.uses_curvature()
    }
}

/// Max relative disagreement between a density's partials and central
/// differences of its value.
pub fn partials_consistency(h: &dyn HamiltonianDensity, f: &PointFrame) -> f64 {
    let (g, k) = (&f.metric.metric, &f.curvature);
    let dg = h.d_metric(g, k);
    let dk = h.d_curvature(g, k);
    let ng = numeric_metric_partial(h, g, k);
    let nk = numeric_curvature_partial(h, g, k);
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(1.0);
    dk.iter()
        .zip(&nk)
        .map(|(a, b)| rel(a, b))
        .fold(rel(&dg, &ng), f64::max)
}

/// Multipliers at one point. Normal indices are frame indices; worldvolume
/// indices are up.
#[derive(Clone, Debug)]
pub struct PointMultipliers {
    /// Λ^{ab}_I, one m×m matrix per I.
    pub big_lambda: Vec<DMatrix<f64>>,
    /// λ^{ab}.
    pub lambda: DMatrix<f64>,
    /// λ^a_⊥I as an m×k matrix.
    pub lambda_perp: DMatrix<f64>,
    /// λ_I^J.
    pub lambda_nn: DMatrix<f64>,
    /// φ^a_IJ, one k×k antisymmetric matrix per a.
    pub phi: Vec<DMatrix<f64>>,
    /// T^{ab}.
    pub t: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct MultiplierSet {
    pub slice: usize,
    pub points: Vec<PointMultipliers>,
    pub tension: Option<f64>,
}

/// Λ, λ, T, λ_IJ and φ at one point; λ_⊥ is left zero.
fn local_multipliers(
    h: &dyn HamiltonianDensity,
    f: &PointFrame,
    bg: &crate::KKBackground,
) -> PointMultipliers {
    let m = f.wv_dim();
    let k = f.codim();
    let g = &f.metric.metric;
    let gi = &f.metric.metric_inv;
    let curv = &f.curvature;
    let hv = h.value(g, curv);
    // T^{ab} = −2 (√−Γ)⁻¹ ∂(√−Γ (−H))/∂Γ_ab = H Γ^{ab} + 2 ∂H/∂Γ_ab
    let t = gi * hv + h.d_metric(g, curv) * 2.0;
    // Λ^{ab}_I = −∂(−H)/∂K_ab^I
    let big_lambda = h.d_curvature(g, curv);
    let mut lambda_nn = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            lambda_nn[(i, j)] = 0.5 * big_lambda[i].component_mul(&curv[j]).sum();
        }
    }
    // φ^a_IJ = −Λ^{ab}_I n_J·e_b, antisymmetrised
    let mut ne = DMatrix::zeros(k, m);
    for j in 0..k {
        let nj: Vec<f64> = f.normals.row(j).iter().copied().collect();
        for b in 0..m {
            let eb: Vec<f64> = f.metric.tangents.row(b).iter().copied().collect();
            ne[(j, b)] = bg.dot(&nj, &eb);
        }
    }
    let phi = (0..m)
        .map(|a| {
            let raw = DMatrix::from_fn(k, k, |i, j| {
                -(0..m).map(|b| big_lambda[i][(a, b)] * ne[(j, b)]).sum::<f64>()
            });
            (&raw - raw.transpose()) * 0.5
        })
        .collect();
    PointMultipliers {
        big_lambda,
        lambda: &t * 0.5,
        lambda_perp: DMatrix::zeros(m, k),
        lambda_nn,
        phi,
        t,
    }
}

/// ∇̃_a Λ^{ab}_I at every point of slice `s`, as m×k matrices ([b, I]).
fn lambda_divergence(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<Vec<DMatrix<f64>>> {
    let m = ff.wv_dim();
    let k = ff.codim();
    let conn = ff.connection(s)?;
    let mut out = Vec::with_capacity(ff.npts());
    for p in 0..ff.npts() {
        let here = local_multipliers(h, ff.frame(s, p)?, &ff.bg).big_lambda;
        let mut div = DMatrix::zeros(m, k);
        for b in 0..m {
            for a in 0..m {
                let d = ff.tilde_covariant_derivative(s, p, a, 1, |s2, q| {
                    let f = ff.frame(s2, q).expect("stencil frames exist");
                    let bl = h.d_curvature(&f.metric.metric, &f.curvature);
                    DMatrix::from_fn(k, 1, |i, _| bl[i][(a, b)])
                })?;
                for i in 0..k {
                    div[(b, i)] += d[(i, 0)];
                }
            }
            let chr = &conn[p].christoffel;
            for i in 0..k {
                let mut acc = 0.0;
                for a in 0..m {
                    for c in 0..m {
                        acc += chr[a][(a, c)] * here[i][(c, b)] + chr[b][(a, c)] * here[i][(a, c)];
                    }
                }
                div[(b, i)] += acc;
            }
        }
        out.push(div);
    }
    Ok(out)
}

/// Solve for all multipliers on slice `s`. Curvature-dependent densities
/// need the connection on `s` for λ_⊥ = −∇̃_a Λ^{ab}.
pub fn solve_multipliers(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<MultiplierSet> {
    let frames = ff.frames(s)?;
    let sample = &frames[0];
    let consistency = partials_consistency(h, sample);
    if !(consistency < 1e-5) {
        return Err(Error::Config(format!(
            "density '{}' has partials inconsistent with its value (relative error {consistency:e})",
            h.id()
        )));
    }
    let mut points: Vec<PointMultipliers> = frames.iter().map(|f| local_multipliers(h, f, &ff.bg)).collect();
    if h.uses_curvature() {
        let div = lambda_divergence(ff, s, h)?;
        for (pm, d) in points.iter_mut().zip(div) {
            pm.lambda_perp = -d;
        }
    }
    Ok(MultiplierSet {
        slice: s,
        points,
        tension: h.tension(),
    })
}

/// f^a at one point with its decomposition f^a = F^{ab} e_b + F^{aI} n_I.
#[derive(Clone, Debug)]
pub struct StressPoint {
    /// Rows are f^a (m×N).
    pub f: DMatrix<f64>,
    pub tangential: DMatrix<f64>,
    pub normal: DMatrix<f64>,
}

/// f^a = (Λ^{ab}_I K_b^{cI} + 2λ^{ac}) e_c − λ^a_⊥I n^I on the multipliers' slice.
pub fn stress_tensor(ff: &FrameField, ms: &MultiplierSet) -> Result<Vec<StressPoint>> {
    let frames = ff.frames(ms.slice)?;
    if frames.len() != ms.points.len() {
        return Err(Error::ShapeMismatch("multipliers and frames disagree".into()));
    }
    Ok(frames
        .iter()
        .zip(&ms.points)
        .map(|(f, mp)| {
            let gi = &f.metric.metric_inv;
            let mut tangential = &mp.lambda * 2.0;
            for (bl, k) in mp.big_lambda.iter().zip(&f.curvature) {
                tangential += bl * k * gi;
            }
            let normal = -&mp.lambda_perp;
            let f_vec = &tangential * &f.metric.tangents + &normal * &f.normals;
            StressPoint {
                f: f_vec,
                tangential,
                normal,
            }
        })
        .collect())
}

/// Multipliers and stress on slice `s` in one call.
pub fn stress_field(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<Vec<StressPoint>> {
    stress_tensor(ff, &solve_multipliers(ff, s, h)?)
}

/// Slices whose stress a divergence on `s` reads.
fn neighbour_stress(
    ff: &FrameField,
    s: usize,
    h: &dyn HamiltonianDensity,
) -> Result<Vec<Option<Vec<StressPoint>>>> {
    let mut cache: Vec<Option<Vec<StressPoint>>> = vec![None; ff.n_slices()];
    let range = if ff.layout.timelike {
        if s == 0 {
            return Err(Error::InsufficientHistory("no slice below".into()));
        }
        s - 1..=s + 1
    } else {
        s..=s
    };
    for j in range {
        cache[j] = Some(stress_field(ff, j, h)?);
    }
    Ok(cache)
}

/// √(−Γ) f^{aμ̄} at every point of slice `s`.
pub fn stress_flux(ff: &FrameField, s: usize, stress: &[StressPoint]) -> Result<Vec<DMatrix<f64>>> {
    Ok(ff
        .frames(s)?
        .iter()
        .zip(stress)
        .map(|(f, st)| &st.f * f.metric.sqrt_det())
        .collect())
}

/// Max-norm of ∂_a(√(−Γ) f^{aμ̄}) on slice `s`.
pub fn stress_conservation_residual(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<f64> {
    let cache = neighbour_stress(ff, s, h)?;
    let div = flux_divergence(ff, s, |s2, q| {
        let st = cache[s2]
            .as_ref()
            .ok_or_else(|| Error::InsufficientHistory("stress stencil".into()))?;
        Ok(&st[q].f * ff.frame(s2, q)?.metric.sqrt_det())
    })?;
    Ok(div.iter().map(|v| v.amax()).fold(0.0, f64::max))
}

/// Max |√(−Γ) f^{aμ̄} − P^{aμ̄}| on slice `s` for a DNG-form density.
pub fn stress_momentum_mismatch(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<f64> {
    let mu0 = h
        .tension()
        .ok_or_else(|| Error::ContractViolation("density has no tension".into()))?;
    let stress = stress_field(ff, s, h)?;
    let flux = stress_flux(ff, s, &stress)?;
    let mut r: f64 = 0.0;
    for (f, sf) in ff.frames(s)?.iter().zip(flux) {
        r = r.max((sf - momentum_flux(&f.metric, mu0)).amax());
    }
    Ok(r)
}

/// Both rows of the stress equations of motion and the chiral split.
#[derive(Clone, Debug)]
pub struct StressEom {
    /// ∇_a F^{ab} + K^{bI}_a F_I^a per point.
    pub tangential: Vec<DVector<f64>>,
    /// ∇̃_a F^{aI} − F^{ab} K_ab^I per point.
    pub normal: Vec<DVector<f64>>,
    /// The normal row divided by μ₀: Γ^{ab} K_ab^I for DNG.
    pub mean_curvature: Vec<DVector<f64>>,
    /// (γ^{ab} − g44 ∇^aφ ∇^bφ) K_ab^I per point.
    pub base_form: Vec<DVector<f64>>,
    /// ∇_a ∇^a φ per point.
    pub phi_wave: Vec<f64>,
}

impl StressEom {
    pub fn max_tangential(&self) -> f64 {
        self.tangential.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn max_normal(&self) -> f64 {
        self.normal.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn max_base_form(&self) -> f64 {
        self.base_form.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn max_phi_wave(&self) -> f64 {
        self.phi_wave.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Evaluate the stress equations of motion on slice `s`.
pub fn eom_from_stress(ff: &FrameField, s: usize, h: &dyn HamiltonianDensity) -> Result<StressEom> {
    let m = ff.wv_dim();
    let k = ff.codim();
    let cache = neighbour_stress(ff, s, h)?;
    let here = cache[s].as_ref().expect("centre stress");
    let conn = ff.connection(s)?;
    let frames = ff.frames(s)?;
    let stress_at = |s2: usize, q: usize| -> &StressPoint { &cache[s2].as_ref().expect("stencil stress")[q] };
    let mut tangential = Vec::with_capacity(ff.npts());
    let mut normal = Vec::with_capacity(ff.npts());
    for p in 0..ff.npts() {
        let f = &frames[p];
        let st = &here[p];
        let chr = &conn[p].christoffel;
        // ∂_a F^{ab} + Γ^a_{ac} F^{cb} + Γ^b_{ac} F^{ac}
        let mut t = DVector::zeros(m);
        for a in 0..m {
            for (off, w) in ff.layout.d1(a) {
                let (s2, q, _) = ff.layout.resolve(s, p, off);
                let fn_ = &stress_at(s2, q).tangential;
                for b in 0..m {
                    t[b] += w * fn_[(a, b)];
                }
            }
        }
        for b in 0..m {
            for a in 0..m {
                for c in 0..m {
                    t[b] += chr[a][(a, c)] * st.tangential[(c, b)] + chr[b][(a, c)] * st.tangential[(a, c)];
                }
            }
        }
        // K^{bI}_a F_I^a
        for i in 0..k {
            let kr = &f.metric.metric_inv * &f.curvature[i];
            for b in 0..m {
                for a in 0..m {
                    t[b] += kr[(b, a)] * st.normal[(a, i)];
                }
            }
        }
        // ∇̃_a F^{aI} − F^{ab} K_ab^I
        let mut nrow = DVector::zeros(k);
        for a in 0..m {
            let d = ff.tilde_covariant_derivative(s, p, a, 1, |s2, q| {
                DMatrix::from_fn(k, 1, |i, _| stress_at(s2, q).normal[(a, i)])
            })?;
            for i in 0..k {
                nrow[i] += d[(i, 0)];
            }
        }
        for i in 0..k {
            for a in 0..m {
                for c in 0..m {
                    nrow[i] += chr[a][(a, c)] * st.normal[(c, i)];
                }
            }
            nrow[i] -= st.tangential.component_mul(&f.curvature[i]).sum();
        }
        tangential.push(t);
        normal.push(nrow);
    }
    let scale = h.tension().unwrap_or(1.0);
    let mean_curvature = normal.iter().map(|v| v / scale).collect();
    let bg = &ff.bg;
    let base_form = frames
        .iter()
        .map(|f| {
            let gi = f
                .metric
                .base_metric
                .clone()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
            let dphi = &gi * f.metric.phi_gradient();
            let tensor = &gi - &dphi * dphi.transpose() * bg.g44();
            DVector::from_iterator(k, f.curvature.iter().map(|kk| tensor.component_mul(kk).sum()))
        })
        .collect();
    let kk = bg.kk_index();
    let wave = flux_divergence(ff, s, |s2, q| Ok(momentum_flux(&ff.frame(s2, q)?.metric, -1.0)))?;
    let phi_wave = wave
        .iter()
        .zip(frames)
        .map(|(w, f)| w[kk] / f.metric.sqrt_det())
        .collect();
    Ok(StressEom {
        tangential,
        normal,
        mean_curvature,
        base_form,
        phi_wave,
    })
}

/// Residuals of substituting solved multipliers back into the Euler-Lagrange
/// equations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MultiplierConsistency {
    /// The normal-frame equation with constraints enforced, as a spacetime vector.
    pub normal_equation: f64,
    /// Antisymmetry defect of φ^a_IJ.
    pub phi_antisymmetry: f64,
    /// |φ^a_IJ| itself, zero when the frame satisfies its axioms.
    pub phi_magnitude: f64,
    /// Symmetry defect of λ_IJ.
    pub lambda_nn_symmetry: f64,
    /// The tangent-vector equation, which also uses the Weingarten relation
    /// and so carries discretization error.
    pub tangent_equation: f64,
}

pub fn multiplier_consistency(
    ff: &FrameField,
    ms: &MultiplierSet,
    h: &dyn HamiltonianDensity,
) -> Result<MultiplierConsistency> {
    let s = ms.slice;
    let m = ff.wv_dim();
    let k = ff.codim();
    let frames = ff.frames(s)?;
    let stress = stress_tensor(ff, ms)?;
    let div = if h.uses_curvature() {
        Some(lambda_divergence(ff, s, h)?)
    } else {
        None
    };
    let conn = ff.connection(s).ok();
    let mut out = MultiplierConsistency::default();
    for (p, (f, mp)) in frames.iter().zip(&ms.points).enumerate() {
        let e = &f.metric.tangents;
        let n = &f.normals;
        for i in 0..k {
            let mut v = DVector::zeros(ff.bg.total_dim());
            for b in 0..m {
                let dl = div.as_ref().map_or(0.0, |d| d[p][(b, i)]);
                v += e.row(b).transpose() * (dl + mp.lambda_perp[(b, i)]);
            }
            for j in 0..k {
                let c = 2.0 * mp.lambda_nn[(i, j)] - mp.big_lambda[i].component_mul(&f.curvature[j]).sum();
                v += n.row(j).transpose() * c;
            }
            out.normal_equation = out.normal_equation.max(v.amax());
        }
        for phi in &mp.phi {
            out.phi_antisymmetry = out.phi_antisymmetry.max((phi + phi.transpose()).amax());
            out.phi_magnitude = out.phi_magnitude.max(phi.amax());
        }
        out.lambda_nn_symmetry = out
            .lambda_nn_symmetry
            .max((&mp.lambda_nn - mp.lambda_nn.transpose()).amax());
        // f^a + λ^a_⊥I n^I − Λ^{ab}_I ∂_b n^I − 2λ^{ab} e_b (ω = 0 at the centre)
        if let Some(conn) = &conn {
            for a in 0..m {
                let mut v =
                    stress[p].f.row(a).transpose() - (e.transpose() * mp.lambda.row(a).transpose()) * 2.0;
                for i in 0..k {
                    v += n.row(i).transpose() * mp.lambda_perp[(a, i)];
                    for b in 0..m {
                        v -= conn[p].normal_derivative[b].row(i).transpose() * mp.big_lambda[i][(a, b)];
                    }
                }
                out.tangent_equation = out.tangent_equation.max(v.amax());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
