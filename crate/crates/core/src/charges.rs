//! Canonical structure on Cauchy slices: momenta, the symplectic form, a
//! bracket engine for (bi)linear functionals and the Poincaré charges.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::background::KKBackground;
use crate::embedding::ExtendedEmbedding;
use crate::error::{Error, Result};
use crate::geometry::{induced_metric, FrameField, PointMetric, Tolerances};
use crate::grid::WorldvolumeGrid;

/// Momentum flux density P^{aμ̄} = −μ₀ √|Γ| Γ^{ab} e_b^μ̄ at one point (m×N).
pub fn momentum_flux(pm: &PointMetric, mu0: f64) -> DMatrix<f64> {
    &pm.metric_inv * &pm.tangents * (-mu0 * pm.sqrt_det())
}

/// π^μ̄ = P^{τμ̄} on a slice of a timelike frame field.
pub fn canonical_momentum(ff: &FrameField, s: usize, mu0: f64) -> Result<Vec<DVector<f64>>> {
    if !ff.layout.timelike {
        return Err(Error::ContractViolation(
            "canonical momenta need a timelike worldvolume".into(),
        ));
    }
    Ok(ff
        .frames(s)?
        .iter()
        .map(|f| momentum_flux(&f.metric, mu0).row(0).transpose())
        .collect())
}

/// π^μ̄ from per-point tangents whose first row is e_τ.
pub fn canonical_momentum_from_tangents(
    tangents: &[DMatrix<f64>],
    bg: &KKBackground,
    tol: &Tolerances,
    mu0: f64,
) -> Result<Vec<DVector<f64>>> {
    tangents
        .iter()
        .enumerate()
        .map(|(p, e)| {
            let pm = induced_metric(e, bg, true, tol, p)?;
            Ok(momentum_flux(&pm, mu0).row(0).transpose())
        })
        .collect()
}

/// The canonical pair split into the base block p_μ (lowered) and the KK
/// momentum p′ = g44 π^φ conjugate to φ.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumSplit {
    pub base: Vec<DVector<f64>>,
    pub kk: Vec<f64>,
}

pub fn momentum_split(pi: &[DVector<f64>], bg: &KKBackground) -> MomentumSplit {
    let nb = bg.base_dim();
    let base = pi
        .iter()
        .map(|v| DVector::from_fn(nb, |mu, _| bg.metric(mu) * v[mu]))
        .collect();
    let kk = pi.iter().map(|v| bg.g44() * v[bg.kk_index()]).collect();
    MomentumSplit { base, kk }
}

/// Momentum density per unit proper slice volume, P̂^μ̄ = π^μ̄ / √(−Γ^{ττ}),
/// paired with the measure √(−Γ^{ττ}) so that Σ P̂ · measure · dσ = Σ π dσ.
pub fn unit_momentum(ff: &FrameField, s: usize, mu0: f64) -> Result<Vec<(DVector<f64>, f64)>> {
    let pi = canonical_momentum(ff, s, mu0)?;
    ff.frames(s)?
        .iter()
        .zip(pi)
        .enumerate()
        .map(|(p, (f, v))| {
            let gtt = f.metric.metric_inv[(0, 0)];
            if gtt >= 0.0 {
                return Err(Error::NotTimelike {
                    point: p,
                    det: f.metric.det,
                });
            }
            let w = (-gtt).sqrt();
            Ok((v / w, w))
        })
        .collect()
}

/// Canonical data on a fixed-τ slice. `pi` holds π^μ̄ with the index up.
#[derive(Clone, Debug)]
pub struct PhaseSlice {
    pub grid: WorldvolumeGrid,
    pub bg: KKBackground,
    pub x: ExtendedEmbedding,
    pub pi: Vec<DVector<f64>>,
    pub dsigma: f64,
}

impl PhaseSlice {
    pub fn new(
        grid: WorldvolumeGrid,
        bg: KKBackground,
        x: ExtendedEmbedding,
        pi: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = bg.total_dim();
        if x.n_comp() != n || x.values().len() != grid.len() * n || pi.len() != grid.len() {
            return Err(Error::ShapeMismatch("phase slice shapes".into()));
        }
        for (p, v) in pi.iter().enumerate() {
            if v.len() != n {
                return Err(Error::ShapeMismatch("momentum components".into()));
            }
            if let Some(c) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    point: p,
                    component: c,
                });
            }
        }
        let dsigma = grid.cell_measure();
        Ok(Self {
            grid,
            bg,
            x,
            pi,
            dsigma,
        })
    }

    /// Slice `s` of a timelike frame field with its embedding values.
    pub fn from_frames(ff: &FrameField, s: usize, x: &ExtendedEmbedding, mu0: f64) -> Result<Self> {
        let pi = canonical_momentum(ff, s, mu0)?;
        Self::new(ff.layout.grid.clone(), ff.bg.clone(), x.clone(), pi)
    }

    pub fn npts(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.bg.total_dim()
    }

    pub fn x_at(&self, p: usize) -> DVector<f64> {
        DVector::from_column_slice(self.x.point(p))
    }

    /// π_μ̄ at a point.
    pub fn pi_lower(&self, p: usize) -> DVector<f64> {
        DVector::from_vec(self.bg.lower(self.pi[p].as_slice()))
    }
}

/// A first-order change (δX^μ̄, δπ^μ̄) of slice data, both indices up.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub dx: Vec<DVector<f64>>,
    pub dpi: Vec<DVector<f64>>,
}

/// ω(δ₁, δ₂) = Σ [δ₁π_μ̄ δ₂X^μ̄ − δ₂π_μ̄ δ₁X^μ̄] dσ.
pub fn symplectic_eval(slice: &PhaseSlice, d1: &Perturbation, d2: &Perturbation) -> Result<f64> {
    let n = slice.npts();
    for d in [d1, d2] {
        if d.dx.len() != n || d.dpi.len() != n {
            return Err(Error::ShapeMismatch("perturbation size".into()));
        }
        if d.dx.iter().chain(&d.dpi).any(|v| v.len() != slice.dim()) {
            return Err(Error::ShapeMismatch("perturbation components".into()));
        }
    }
    let bg = &slice.bg;
    let mut acc = 0.0;
    for p in 0..n {
        acc += bg.dot(d1.dpi[p].as_slice(), d2.dx[p].as_slice())
            - bg.dot(d2.dpi[p].as_slice(), d1.dx[p].as_slice());
    }
    Ok(acc * slice.dsigma)
}

/// Totals of the Poincaré charges on a slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeSet {
    pub p: DVector<f64>,
    /// Antisymmetric by construction.
    pub m: DMatrix<f64>,
}

impl ChargeSet {
    /// Components in CSV order: P^0.., then M^{μν} for μ < ν.
    pub fn components(&self) -> Vec<f64> {
        let n = self.p.len();
        let mut out: Vec<f64> = self.p.iter().copied().collect();
        for mu in 0..n {
            for nu in mu + 1..n {
                out.push(self.m[(mu, nu)]);
            }
        }
        out
    }

    pub fn component_names(n: usize) -> Vec<String> {
        let mut out: Vec<String> = (0..n).map(|mu| format!("P{mu}")).collect();
        for mu in 0..n {
            for nu in mu + 1..n {
                out.push(format!("M{mu}{nu}"));
            }
        }
        out
    }

    /// Per-component drift |c − c₀| / max(1, |c₀|).
    pub fn drift_from(&self, reference: &ChargeSet) -> Vec<f64> {
        self.components()
            .iter()
            .zip(reference.components())
            .map(|(c, r)| (c - r).abs() / r.abs().max(1.0))
            .collect()
    }
}

/// P^μ̄ = Σ π^μ̄ dσ and M^μ̄ν̄ = Σ (π^ν̄ X^μ̄ − π^μ̄ X^ν̄) dσ.
pub fn total_charges(slice: &PhaseSlice) -> ChargeSet {
    let n = slice.dim();
    let mut p = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    for q in 0..slice.npts() {
        let x = slice.x.point(q);
        let pi = &slice.pi[q];
        p += pi;
        for mu in 0..n {
            for nu in mu + 1..n {
                let v = pi[nu] * x[mu] - pi[mu] * x[nu];
                m[(mu, nu)] += v;
            }
        }
    }
    p *= slice.dsigma;
    m *= slice.dsigma;
    for mu in 0..n {
        for nu in mu + 1..n {
            m[(nu, mu)] = -m[(mu, nu)];
        }
    }
    ChargeSet { p, m }
}

/// A functional of the slice data that is at most quadratic,
///
/// F = c + Σ_i dσ [α_i·X_i + β_i·π_i + ½ X_iᵀA_iX_i + X_iᵀB_iπ_i + ½ π_iᵀC_iπ_i],
///
/// with π lowered. Brackets of such functionals stay in the class, so the
/// engine is exact up to roundoff.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCharge {
    dim: usize,
    dsigma: f64,
    pub constant: f64,
    pub alpha: Vec<DVector<f64>>,
    pub beta: Vec<DVector<f64>>,
    pub xx: Vec<DMatrix<f64>>,
    pub xp: Vec<DMatrix<f64>>,
    pub pp: Vec<DMatrix<f64>>,
}

impl LinearCharge {
    pub fn zero(npts: usize, dim: usize, dsigma: f64) -> Self {
        Self {
            dim,
            dsigma,
            constant: 0.0,
            alpha: vec![DVector::zeros(dim); npts],
            beta: vec![DVector::zeros(dim); npts],
            xx: vec![DMatrix::zeros(dim, dim); npts],
            xp: vec![DMatrix::zeros(dim, dim); npts],
            pp: vec![DMatrix::zeros(dim, dim); npts],
        }
    }

    pub fn for_slice(slice: &PhaseSlice) -> Self {
        Self::zero(slice.npts(), slice.dim(), slice.dsigma)
    }

    pub fn npts(&self) -> usize {
        self.alpha.len()
    }

    /// X^μ̄ at point i.
    pub fn position(npts: usize, dim: usize, dsigma: f64, i: usize, mu: usize) -> Self {
        let mut f = Self::zero(npts, dim, dsigma);
        f.alpha[i][mu] = 1.0 / dsigma;
        f
    }

    /// π_μ̄ at point i.
    pub fn momentum(npts: usize, dim: usize, dsigma: f64, i: usize, mu: usize) -> Self {
        let mut f = Self::zero(npts, dim, dsigma);
        f.beta[i][mu] = 1.0 / dsigma;
        f
    }

    /// Total momentum P^α = Σ g^{αλ} π_λ dσ.
    pub fn total_momentum(npts: usize, bg: &KKBackground, dsigma: f64, alpha: usize) -> Self {
        let n = bg.total_dim();
        let mut f = Self::zero(npts, n, dsigma);
        for b in &mut f.beta {
            b[alpha] = bg.inverse_metric(alpha);
        }
        f
    }

    /// Total angular momentum M^{μν} = Σ (X^μ π^ν − X^ν π^μ) dσ.
    pub fn angular_momentum(npts: usize, bg: &KKBackground, dsigma: f64, mu: usize, nu: usize) -> Self {
        let n = bg.total_dim();
        let mut f = Self::zero(npts, n, dsigma);
        for b in &mut f.xp {
            b[(mu, nu)] += bg.inverse_metric(nu);
            b[(nu, mu)] -= bg.inverse_metric(mu);
        }
        f
    }

    /// Highest polynomial degree present.
    pub fn degree(&self) -> usize {
        let nz = |v: &[DMatrix<f64>]| v.iter().any(|m| m.iter().any(|x| *x != 0.0));
        let nzv = |v: &[DVector<f64>]| v.iter().any(|m| m.iter().any(|x| *x != 0.0));
        if nz(&self.xx) || nz(&self.xp) || nz(&self.pp) {
            2
        } else if nzv(&self.alpha) || nzv(&self.beta) {
            1
        } else {
            0
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.npts() != other.npts() || self.dsigma != other.dsigma {
            return Err(Error::ShapeMismatch(
                "functionals live on different slices".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise product of two linear densities, Σ_i dσ f_i g_i. Degrees
    /// above two are outside the engine.
    pub fn local_product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.degree() + other.degree() > 2 || self.constant != 0.0 || other.constant != 0.0 {
            return Err(Error::ContractViolation(
                "only products of linear densities are supported".into(),
            ));
        }
        let mut out = Self::zero(self.npts(), self.dim, self.dsigma);
        for i in 0..self.npts() {
            let (a1, b1, a2, b2) = (&self.alpha[i], &self.beta[i], &other.alpha[i], &other.beta[i]);
            out.xx[i] = a1 * a2.transpose() + a2 * a1.transpose();
            out.pp[i] = b1 * b2.transpose() + b2 * b1.transpose();
            out.xp[i] = a1 * b2.transpose() + a2 * b1.transpose();
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self, s: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.constant += s * other.constant;
        for i in 0..self.npts() {
            out.alpha[i] += &other.alpha[i] * s;
            out.beta[i] += &other.beta[i] * s;
            out.xx[i] += &other.xx[i] * s;
            out.xp[i] += &other.xp[i] * s;
            out.pp[i] += &other.pp[i] * s;
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.constant *= s;
        out.alpha.iter_mut().for_each(|v| *v *= s);
        out.beta.iter_mut().for_each(|v| *v *= s);
        out.xx.iter_mut().for_each(|v| *v *= s);
        out.xp.iter_mut().for_each(|v| *v *= s);
        out.pp.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest coefficient difference, scaled to the functional value per
    /// unit density (coefficients times dσ).
    pub fn max_coefficient_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut r = (self.constant - other.constant).abs();
        let ds = self.dsigma;
        for i in 0..self.npts() {
            r = r
                .max((&self.alpha[i] - &other.alpha[i]).amax() * ds)
                .max((&self.beta[i] - &other.beta[i]).amax() * ds)
                .max((&self.xx[i] - &other.xx[i]).amax() * ds)
                .max((&self.xp[i] - &other.xp[i]).amax() * ds)
                .max((&self.pp[i] - &other.pp[i]).amax() * ds);
        }
        Ok(r)
    }

    /// Per-unit-measure gradients (∂F/∂X_i, ∂F/∂π_i) / dσ.
    pub fn gradients(&self, slice: &PhaseSlice, i: usize) -> (DVector<f64>, DVector<f64>) {
        let x = slice.x_at(i);
        let p = slice.pi_lower(i);
        let gx = &self.alpha[i] + &self.xx[i] * &x + &self.xp[i] * &p;
        let gp = &self.beta[i] + self.xp[i].transpose() * &x + &self.pp[i] * &p;
        (gx, gp)
    }

    pub fn evaluate(&self, slice: &PhaseSlice) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.npts() {
            let x = slice.x_at(i);
            let p = slice.pi_lower(i);
            acc += self.alpha[i].dot(&x)
                + self.beta[i].dot(&p)
                + 0.5 * x.dot(&(&self.xx[i] * &x))
                + x.dot(&(&self.xp[i] * &p))
                + 0.5 * p.dot(&(&self.pp[i] * &p));
        }
        self.constant + acc * self.dsigma
    }

    /// Hamiltonian vector field V_F = ∂_X F ∂_π − ∂_π F ∂_X at each point,
    /// returned as (δX^μ̄, δπ_μ̄) per unit measure.
    pub fn vector_field(&self, slice: &PhaseSlice) -> Vec<(DVector<f64>, DVector<f64>)> {
        (0..self.npts())
            .map(|i| {
                let (gx, gp) = self.gradients(slice, i);
                (-gp, gx)
            })
            .collect()
    }
}

/// Σ_i dσ ∂_X F · ∂_π G, the half of the bracket that is not antisymmetrised.
fn half_bracket(f: &LinearCharge, g: &LinearCharge) -> LinearCharge {
    let mut out = LinearCharge::zero(f.npts(), f.dim, f.dsigma);
    let mut c = 0.0;
    for i in 0..f.npts() {
        c += f.alpha[i].dot(&g.beta[i]);
        out.alpha[i] = &g.xp[i] * &f.alpha[i] + &f.xx[i] * &g.beta[i];
        out.beta[i] = &g.pp[i] * &f.alpha[i] + f.xp[i].transpose() * &g.beta[i];
        let m = &f.xx[i] * g.xp[i].transpose();
        out.xx[i] = &m + m.transpose();
        let n = f.xp[i].transpose() * &g.pp[i];
        out.pp[i] = &n + n.transpose();
        out.xp[i] = &f.xx[i] * &g.pp[i] + &g.xp[i] * &f.xp[i];
    }
    out.constant = c * f.dsigma;
    out
}

/// [F, G] with the discrete canonical bracket [X^μ̄_i, π_ν̄j] = δ^μ̄_ν̄ δ_ij / dσ.
pub fn poisson_bracket(f: &LinearCharge, g: &LinearCharge) -> Result<LinearCharge> {
    f.check_compatible(g)?;
    half_bracket(f, g).add(&half_bracket(g, f), -1.0)
}

/// Max deviation of [X_i, X_j], [π_i, π_j] and [X_i, π_j] from their canonical
/// values over the first `sample` points of a grid with `npts` points.
pub fn fundamental_bracket_residual(npts: usize, dim: usize, dsigma: f64, sample: usize) -> Result<f64> {
    let m = sample.min(npts);
    let mut r: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            for mu in 0..dim {
                for nu in 0..dim {
                    let xi = LinearCharge::position(npts, dim, dsigma, i, mu);
                    let xj = LinearCharge::position(npts, dim, dsigma, j, nu);
                    let pi = LinearCharge::momentum(npts, dim, dsigma, i, mu);
                    let pj = LinearCharge::momentum(npts, dim, dsigma, j, nu);
                    let expected = if i == j && mu == nu { 1.0 / dsigma } else { 0.0 };
                    for (b, e) in [
                        (poisson_bracket(&xi, &xj)?, 0.0),
                        (poisson_bracket(&pi, &pj)?, 0.0),
                        (poisson_bracket(&xi, &pj)?, expected),
                    ] {
                        let mut want = LinearCharge::zero(npts, dim, dsigma);
                        want.constant = e;
                        r = r.max(b.max_coefficient_diff(&want)? * dsigma);
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Closure residuals of the Poincaré algebra.
///
/// `mm` uses [M^{μν}, M^{αβ}] = −(g^{να}M^{μβ} + g^{μα}M^{βν} + g^{νβ}M^{αμ} + g^{μβ}M^{να}),
/// the sign fixed by the Jacobi identity with the [M, P] row and the
/// canonical bracket. `mm_printed` is the residual against the opposite
/// sign and is reported only for comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlgebraResidual {
    pub mm: f64,
    pub mp: f64,
    pub pp: f64,
    pub mm_printed: f64,
}

impl AlgebraResidual {
    pub fn max(&self) -> f64 {
        self.mm.max(self.mp).max(self.pp)
    }
}

/// Check [M,M], [M,P] and [P,P] against the Poincaré structure constants
/// for every index tuple, both as functionals and evaluated on `slice`.
pub fn poincare_algebra_check(slice: &PhaseSlice) -> Result<AlgebraResidual> {
    let bg = &slice.bg;
    let n = bg.total_dim();
    let (np, ds) = (slice.npts(), slice.dsigma);
    let g = |a: usize, b: usize| if a == b { bg.inverse_metric(a) } else { 0.0 };
    let p: Vec<_> = (0..n)
        .map(|a| LinearCharge::total_momentum(np, bg, ds, a))
        .collect();
    let m: Vec<Vec<_>> = (0..n)
        .map(|mu| {
            (0..n)
                .map(|nu| LinearCharge::angular_momentum(np, bg, ds, mu, nu))
                .collect()
        })
        .collect();
    let diff = |lhs: &LinearCharge, rhs: &LinearCharge| -> Result<f64> {
        let c = lhs.max_coefficient_diff(rhs)?;
        let v = (lhs.evaluate(slice) - rhs.evaluate(slice)).abs();
        Ok(c.max(v))
    };
    let zero = LinearCharge::zero(np, n, ds);
    let mut res = AlgebraResidual::default();
    for a in 0..n {
        for b in 0..n {
            res.pp = res.pp.max(diff(&poisson_bracket(&p[a], &p[b])?, &zero)?);
        }
    }
    for mu in 0..n {
        for nu in 0..n {
            for al in 0..n {
                let rhs = p[nu].scaled(g(mu, al)).add(&p[mu], -g(al, nu))?;
                res.mp = res.mp.max(diff(&poisson_bracket(&m[mu][nu], &p[al])?, &rhs)?);
                for be in 0..n {
                    let printed = m[mu][be]
                        .scaled(g(nu, al))
                        .add(&m[be][nu], g(mu, al))?
                        .add(&m[al][mu], g(nu, be))?
                        .add(&m[nu][al], g(mu, be))?;
                    let lhs = poisson_bracket(&m[mu][nu], &m[al][be])?;
                    res.mm = res.mm.max(diff(&lhs, &printed.scaled(-1.0))?);
                    res.mm_printed = res.mm_printed.max(diff(&lhs, &printed)?);
                }
            }
        }
    }
    Ok(res)
}

/// Max difference between the vector field generated by each M^{μ̄ν̄} and the
/// infinitesimal Lorentz rotation δX^ρ = g^{ρμ}X^ν − g^{ρν}X^μ (and the same
/// for π) on `slice`.
pub fn lorentz_generator_residual(slice: &PhaseSlice) -> f64 {
    let bg = &slice.bg;
    let n = bg.total_dim();
    let mut r: f64 = 0.0;
    for mu in 0..n {
        for nu in mu + 1..n {
            let f = LinearCharge::angular_momentum(slice.npts(), bg, slice.dsigma, mu, nu);
            for (i, (dx, dp)) in f.vector_field(slice).into_iter().enumerate() {
                let x = slice.x.point(i);
                let pi = &slice.pi[i];
                let mut rx = DVector::zeros(n);
                rx[mu] += bg.inverse_metric(mu) * x[nu];
                rx[nu] -= bg.inverse_metric(nu) * x[mu];
                let mut rp = DVector::zeros(n);
                rp[mu] += pi[nu];
                rp[nu] -= pi[mu];
                r = r.max((dx - rx).amax()).max((dp - rp).amax());
            }
        }
    }
    r
}

/// Divergence ∂_a F^{aμ̄} at every point of slice `s` of a flux field given
/// on the slices of `ff` (m×N per point).
pub fn flux_divergence(
    ff: &FrameField,
    s: usize,
    flux: impl Fn(usize, usize) -> Result<DMatrix<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let m = ff.wv_dim();
    let n = ff.bg.total_dim();
    let stencils: Vec<_> = (0..m).map(|a| ff.layout.d1(a)).collect();
    if ff.layout.timelike && (s < 2 || s + 2 >= ff.n_slices()) {
        return Err(Error::InsufficientHistory(format!(
            "divergence on slice {s} needs fluxes on both neighbouring slices"
        )));
    }
    let mut out = Vec::with_capacity(ff.npts());
    for p in 0..ff.npts() {
        let mut d = DVector::zeros(n);
        for (a, st) in stencils.iter().enumerate() {
            for &(off, w) in st {
                let (s2, q, _) = ff.layout.resolve(s, p, off);
                d += flux(s2, q)?.row(a).transpose() * w;
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// P^{aμ̄} on slice `s` and the max-norm of ∂_a P^{aμ̄} there.
pub fn momentum_density_and_divergence(
    ff: &FrameField,
    s: usize,
    mu0: f64,
) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let density = ff
        .frames(s)?
        .iter()
        .map(|f| momentum_flux(&f.metric, mu0))
        .collect();
    let div = flux_divergence(ff, s, |s2, q| Ok(momentum_flux(&ff.frame(s2, q)?.metric, mu0)))?;
    let r = div.iter().map(|v| v.amax()).fold(0.0, f64::max);
    Ok((density, r))
}

/// Charge time series: τ, charges, then the drift of each from `rows[0]`.
pub fn write_charge_csv(w: &mut impl Write, rows: &[(f64, ChargeSet)]) -> Result<()> {
    let Some((_, first)) = rows.first() else {
        return Ok(());
    };
    let names = ChargeSet::component_names(first.p.len());
    let mut header = vec!["tau".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("drift_{n}")));
    writeln!(w, "{}", header.join(","))?;
    for (tau, c) in rows {
        let mut cols = vec![format!("{tau:.16e}")];
        cols.extend(c.components().iter().map(|v| format!("{v:.16e}")));
        cols.extend(c.drift_from(first).iter().map(|v| format!("{v:.16e}")));
        writeln!(w, "{}", cols.join(","))?;
    }
    Ok(())
}
