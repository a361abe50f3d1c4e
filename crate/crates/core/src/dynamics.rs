//! Conformal-gauge evolution of strings in the flat extended background,
//! exact mover initial data and run diagnostics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::background::KKBackground;
use crate::charges::{
    canonical_momentum_from_tangents, momentum_density_and_divergence, total_charges, ChargeSet, PhaseSlice,
};
use crate::embedding::{ExtendedEmbedding, WorldvolumePatch};
use crate::error::{Error, Result};
use crate::geometry::{induced_metric, tangents_with_velocity, FrameField, Tolerances};
use crate::grid::{Layout, WorldvolumeGrid};
use crate::stress::{eom_from_stress, stress_conservation_residual, stress_momentum_mismatch, Dng};

mod movers;

pub use movers::{HarmonicComponent, HarmonicMover, MoverCurve, MOVER_TOL};

/// Largest stable step as a fraction of the smallest spacing.
pub const CFL: f64 = 0.5;

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_8; // 1 / (2 − 2^{1/3})
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3; // −2^{1/3} w1

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Position Verlet, second order.
    Verlet,
    /// Three Verlet substeps with Yoshida weights, fourth order.
    #[default]
    Yoshida4,
}

/// Neighbour table of the periodic Laplacian at one point.
#[derive(Clone, Debug)]
struct LaplacianTerm {
    q: usize,
    weight: f64,
    wraps: Vec<i32>,
}

/// Slice values X^μ̄ and velocities V^μ̄ = ∂_τ X^μ̄.
#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub grid: WorldvolumeGrid,
    pub bg: KKBackground,
    pub tau: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub winding: Vec<Vec<f64>>,
    pub steps: u64,
    stencil: Vec<Vec<LaplacianTerm>>,
}

impl EvolutionState {
    pub fn new(
        grid: WorldvolumeGrid,
        bg: KKBackground,
        tau: f64,
        x: Vec<f64>,
        v: Vec<f64>,
        winding: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = bg.total_dim();
        // validates shapes and winding
        let emb = ExtendedEmbedding::from_values(&grid, n, x, winding)?;
        if v.len() != emb.values().len() {
            return Err(Error::ShapeMismatch("velocity field size".into()));
        }
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                point: bad / n,
                component: bad % n,
            });
        }
        let layout = Layout::riemannian(grid.clone());
        let d = grid.spatial_dim();
        let stencil = (0..grid.len())
            .map(|p| {
                let mut terms = Vec::new();
                for a in 0..d {
                    for (off, w) in layout.d2(a, a) {
                        let (_, q, wraps) = layout.resolve(0, p, off);
                        terms.push(LaplacianTerm {
                            q,
                            weight: w,
                            wraps: wraps[..d].to_vec(),
                        });
                    }
                }
                terms
            })
            .collect();
        Ok(Self {
            grid,
            bg,
            tau,
            winding: emb.winding().to_vec(),
            x: emb.values().to_vec(),
            v,
            steps: 0,
            stencil,
        })
    }

    /// State sampled from `f(ξ) -> (X, V)`.
    pub fn from_fn(
        grid: WorldvolumeGrid,
        bg: KKBackground,
        tau: f64,
        winding: Option<Vec<Vec<f64>>>,
        f: impl Fn(&[f64]) -> (Vec<f64>, Vec<f64>),
    ) -> Result<Self> {
        let n = bg.total_dim();
        let mut x = Vec::with_capacity(grid.len() * n);
        let mut v = Vec::with_capacity(grid.len() * n);
        for p in 0..grid.len() {
            let xi = grid.coords(p);
            let (xp, vp) = f(&xi[..grid.spatial_dim()]);
            if xp.len() != n || vp.len() != n {
                return Err(Error::ShapeMismatch("state function output size".into()));
            }
            x.extend(xp);
            v.extend(vp);
        }
        Self::new(grid, bg, tau, x, v, winding)
    }

    pub fn npts(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.bg.total_dim()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.grid.spatial_dim())
            .map(|d| self.grid.spacing(d))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cfl_limit(&self) -> f64 {
        CFL * self.min_spacing()
    }

    pub fn embedding(&self) -> Result<ExtendedEmbedding> {
        ExtendedEmbedding::from_values(&self.grid, self.dim(), self.x.clone(), Some(self.winding.clone()))
    }

    /// The current slice as a single-slice patch.
    pub fn slice_patch(&self) -> Result<WorldvolumePatch> {
        Ok(WorldvolumePatch::riemannian(self.grid.clone(), self.embedding()?))
    }

    fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (p, terms) in self.stencil.iter().enumerate() {
            let o = &mut out[p * n..(p + 1) * n];
            o.iter_mut().for_each(|v| *v = 0.0);
            for t in terms {
                for mu in 0..n {
                    let mut val = x[t.q * n + mu];
                    for (d, &w) in t.wraps.iter().enumerate() {
                        if w != 0 {
                            val += w as f64 * self.winding[d][mu];
                        }
                    }
                    o[mu] += t.weight * val;
                }
            }
        }
    }

    fn verlet_substep(&mut self, h: f64, acc: &mut [f64]) {
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x += 0.5 * h * v;
        }
        let x = std::mem::take(&mut self.x);
        self.laplacian(&x, acc);
        self.x = x;
        for (v, a) in self.v.iter_mut().zip(acc.iter()) {
            *v += h * a;
        }
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x += 0.5 * h * v;
        }
    }

    /// Advance in place by `dt` (negative steps run backwards).
    pub fn advance(&mut self, dt: f64, integrator: Integrator) -> Result<()> {
        let limit = self.cfl_limit();
        if !(dt.is_finite() && dt.abs() <= limit * (1.0 + 1e-12)) {
            return Err(Error::Cfl { dtau: dt, limit });
        }
        let mut acc = vec![0.0; self.x.len()];
        match integrator {
            Integrator::Verlet => self.verlet_substep(dt, &mut acc),
            Integrator::Yoshida4 => {
                for w in [YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1] {
                    self.verlet_substep(w * dt, &mut acc);
                }
            }
        }
        self.tau += dt;
        self.steps += 1;
        if let Some(bad) = self.x.iter().chain(&self.v).position(|v| !v.is_finite()) {
            let n = self.dim();
            return Err(Error::NonFinite {
                point: (bad % self.x.len()) / n,
                component: bad % n,
            });
        }
        Ok(())
    }

    /// Slices τ + j·dt for j = −half..=half, stepped from copies of this state.
    pub fn patch(&self, half: usize, dt: f64, integrator: Integrator) -> Result<WorldvolumePatch> {
        let mut slices = vec![self.embedding()?];
        let mut fwd = self.clone();
        let mut back = self.clone();
        for _ in 0..half {
            fwd.advance(dt, integrator)?;
            back.advance(-dt, integrator)?;
            slices.push(fwd.embedding()?);
            slices.insert(0, back.embedding()?);
        }
        WorldvolumePatch::timelike(self.grid.clone(), dt, slices)
    }

    /// Tangents (V, ∂_σ X) of the current slice.
    pub fn tangents(&self) -> Result<Vec<nalgebra::DMatrix<f64>>> {
        tangents_with_velocity(&self.slice_patch()?, &self.v)
    }

    /// ½ Σ [g(V,V) + g(X′,X′)] dσ.
    pub fn energy(&self) -> Result<f64> {
        let ds = self.grid.cell_measure();
        let mut e = 0.0;
        for t in self.tangents()? {
            for a in 0..t.nrows() {
                let row: Vec<f64> = t.row(a).iter().copied().collect();
                e += 0.5 * self.bg.dot(&row, &row) * ds;
            }
        }
        Ok(e)
    }

    /// Max |g(V ± X′, V ± X′)| over the slice (strings only).
    pub fn constraints(&self) -> Result<(f64, f64)> {
        let (mut cp, mut cm): (f64, f64) = (0.0, 0.0);
        for t in self.tangents()? {
            let v: Vec<f64> = t.row(0).iter().copied().collect();
            let xs: Vec<f64> = t.row(1).iter().copied().collect();
            let plus: Vec<f64> = v.iter().zip(&xs).map(|(a, b)| a + b).collect();
            let minus: Vec<f64> = v.iter().zip(&xs).map(|(a, b)| a - b).collect();
            cp = cp.max(self.bg.dot(&plus, &plus).abs());
            cm = cm.max(self.bg.dot(&minus, &minus).abs());
        }
        Ok((cp, cm))
    }

    /// Canonical pair on the current slice with π built from (V, ∂_σ X).
    pub fn phase_slice(&self, mu0: f64, tol: &Tolerances) -> Result<PhaseSlice> {
        let pi = canonical_momentum_from_tangents(&self.tangents()?, &self.bg, tol, mu0)?;
        PhaseSlice::new(self.grid.clone(), self.bg.clone(), self.embedding()?, pi)
    }

    /// Max |ϖ| over the slice.
    pub fn varpi_max(&self, tol: &Tolerances) -> Result<f64> {
        let mut w: f64 = 0.0;
        for (p, t) in self.tangents()?.iter().enumerate() {
            w = w.max(induced_metric(t, &self.bg, true, tol, p)?.varpi.abs());
        }
        Ok(w)
    }
}

/// Return a copy advanced by one position-Verlet step.
pub fn leapfrog_step(state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    let mut s = state.clone();
    s.advance(dt, Integrator::Verlet)?;
    Ok(s)
}

/// Return a copy advanced by one fourth-order Yoshida step.
pub fn yoshida4_step(state: &EvolutionState, dt: f64) -> Result<EvolutionState> {
    let mut s = state.clone();
    s.advance(dt, Integrator::Yoshida4)?;
    Ok(s)
}

/// Exact quantities of mover initial data, evaluated from the movers'
/// analytic tangents rather than finite differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialCheck {
    pub constraint_plus: f64,
    pub constraint_minus: f64,
    pub varpi: f64,
    pub mover_deviation: f64,
}

/// X = ½[a(σ+τ) + b(σ−τ)] and V = ½[a′ − b′] at τ = `tau0`, with X^0 = τ.
pub fn initial_data_from_movers(
    grid: WorldvolumeGrid,
    bg: KKBackground,
    a: &HarmonicMover,
    b: &HarmonicMover,
    tau0: f64,
) -> Result<(EvolutionState, InitialCheck)> {
    if grid.spatial_dim() != 1 {
        return Err(Error::Config("mover initial data exists for strings only".into()));
    }
    let ca = MoverCurve::build(a, &bg)?;
    let cb = MoverCurve::build(b, &bg)?;
    for (name, c) in [("a", &ca), ("b", &cb)] {
        if !(c.deviation() <= MOVER_TOL) {
            return Err(Error::MoverNotNormalized {
                name,
                deviation: c.deviation(),
            });
        }
    }
    let n = bg.total_dim();
    let wa = ca.winding();
    let wb = cb.winding();
    let mut winding = vec![0.0];
    winding.extend(wa.iter().zip(&wb).map(|(x, y)| 0.5 * (x + y)));
    let mut x = Vec::with_capacity(grid.len() * n);
    let mut v = Vec::with_capacity(grid.len() * n);
    let mut check = InitialCheck {
        constraint_plus: 0.0,
        constraint_minus: 0.0,
        varpi: 0.0,
        mover_deviation: ca.deviation().max(cb.deviation()),
    };
    let kk = bg.kk_index();
    for p in 0..grid.len() {
        let s = grid.coords(p)[0];
        let (pa, da) = ca.eval(s + tau0)?;
        let (pb, db) = cb.eval(s - tau0)?;
        x.push(tau0);
        v.push(1.0);
        let mut xs = vec![0.0];
        for i in 0..n - 1 {
            x.push(0.5 * (pa[i] + pb[i]));
            v.push(0.5 * (da[i] - db[i]));
            xs.push(0.5 * (da[i] + db[i]));
        }
        let vp = &v[p * n..];
        let plus: Vec<f64> = vp.iter().zip(&xs).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = vp.iter().zip(&xs).map(|(a, b)| a - b).collect();
        check.constraint_plus = check.constraint_plus.max(bg.dot(&plus, &plus).abs());
        check.constraint_minus = check.constraint_minus.max(bg.dot(&minus, &minus).abs());
        let e = nalgebra::DMatrix::from_fn(2, n, |r, c| if r == 0 { vp[c] } else { xs[c] });
        if e.column(kk).amax() > 0.0 {
            let pm = induced_metric(&e, &bg, true, &Tolerances::default(), p)?;
            check.varpi = check.varpi.max(pm.varpi.abs());
        }
    }
    let state = EvolutionState::new(grid, bg, tau0, x, v, Some(vec![winding]))?;
    Ok((state, check))
}

/// Max over points of |Γ^{ab} K_ab^I|, one entry per normal.
pub fn eom_residual(ff: &FrameField, s: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0_f64; ff.codim()];
    for f in ff.frames(s)? {
        for (o, h) in out.iter_mut().zip(f.mean_curvature().iter()) {
            *o = o.max(h.abs());
        }
    }
    Ok(out)
}

/// Diagnostics of one output row.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tau: f64,
    pub step: u64,
    pub charges: ChargeSet,
    pub energy: f64,
    pub varpi: f64,
    pub constraint_plus: f64,
    pub constraint_minus: f64,
    /// Frame orthonormality and orthogonality, worst of the two.
    pub frame_axioms: f64,
    /// Max |Γ^{ab}K_ab^I| per normal.
    pub eom: Vec<f64>,
    /// Pointwise gap between the mean curvature and the stress normal row over μ₀.
    pub eom_stress_gap: f64,
    pub base_form: f64,
    pub phi_wave: f64,
    pub stress_momentum: f64,
    pub momentum_divergence: f64,
    pub stress_divergence: f64,
}

impl Snapshot {
    pub fn csv_header(codim: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "tau",
            "step",
            "energy",
            "varpi",
            "constraint_plus",
            "constraint_minus",
            "frame_axioms",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..codim).map(|i| format!("eom_{i}")));
        h.extend(
            [
                "eom_stress_gap",
                "base_form",
                "phi_wave",
                "stress_momentum",
                "momentum_divergence",
                "stress_divergence",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        h
    }

    pub fn csv_values(&self) -> Vec<f64> {
        let mut v = vec![
            self.tau,
            self.step as f64,
            self.energy,
            self.varpi,
            self.constraint_plus,
            self.constraint_minus,
            self.frame_axioms,
        ];
        v.extend(&self.eom);
        v.extend([
            self.eom_stress_gap,
            self.base_form,
            self.phi_wave,
            self.stress_momentum,
            self.momentum_divergence,
            self.stress_divergence,
        ]);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParams {
    pub dtau: f64,
    pub steps: u64,
    pub cadence: u64,
    pub mu0: f64,
    pub integrator: Integrator,
    pub tol: Tolerances,
}

/// Diagnostics of the current state. Frames come from a five-slice patch
/// stepped from copies of the state.
pub fn snapshot(state: &EvolutionState, params: &RunParams) -> Result<Snapshot> {
    let tol = &params.tol;
    let charges = total_charges(&state.phase_slice(params.mu0, tol)?);
    let (constraint_plus, constraint_minus) = state.constraints()?;
    let patch = state.patch(2, params.dtau, params.integrator)?;
    let ff = FrameField::build(&patch, &state.bg, *tol)?;
    let c = 2;
    let dng = Dng { mu0: params.mu0 };
    let (orth, unit) = ff.frame_axiom_residual(c)?;
    let eom = eom_residual(&ff, c)?;
    let stress_eom = eom_from_stress(&ff, c, &dng)?;
    let mut gap: f64 = 0.0;
    for (mc, f) in stress_eom.mean_curvature.iter().zip(ff.frames(c)?) {
        gap = gap.max((mc - f.mean_curvature()).amax());
    }
    Ok(Snapshot {
        tau: state.tau,
        step: state.steps,
        charges,
        energy: state.energy()?,
        varpi: state.varpi_max(tol)?,
        constraint_plus,
        constraint_minus,
        frame_axioms: orth.max(unit),
        eom,
        eom_stress_gap: gap,
        base_form: stress_eom.max_base_form(),
        phi_wave: stress_eom.max_phi_wave(),
        stress_momentum: stress_momentum_mismatch(&ff, c, &dng)?,
        momentum_divergence: momentum_density_and_divergence(&ff, c, params.mu0)?.1,
        stress_divergence: stress_conservation_residual(&ff, c, &dng)?,
    })
}

/// Step `state` and record a snapshot every `cadence` steps and at the end.
pub fn run(mut state: EvolutionState, params: &RunParams) -> Result<(EvolutionState, Vec<Snapshot>)> {
    let abort = |tau: f64, e: Error| Error::Aborted {
        tau,
        source: Box::new(e),
    };
    let cadence = params.cadence.max(1);
    let mut rows = vec![snapshot(&state, params).map_err(|e| abort(state.tau, e))?];
    for k in 1..=params.steps {
        state
            .advance(params.dtau, params.integrator)
            .map_err(|e| abort(state.tau, e))?;
        if k % cadence == 0 || k == params.steps {
            rows.push(snapshot(&state, params).map_err(|e| abort(state.tau, e))?);
        }
    }
    Ok((state, rows))
}

/// Worst relative drift of every charge component over a run.
pub fn max_charge_drift(rows: &[Snapshot]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let mut worst = vec![0.0_f64; first.charges.components().len()];
    for r in rows {
        for (w, d) in worst.iter_mut().zip(r.charges.drift_from(&first.charges)) {
            *w = w.max(d);
        }
    }
    worst
}

/// Total momentum Σ μ₀ V dσ, the conformal-gauge value of P.
pub fn velocity_momentum(state: &EvolutionState, mu0: f64) -> DVector<f64> {
    let n = state.dim();
    let mut p = DVector::zeros(n);
    for (i, v) in state.v.iter().enumerate() {
        p[i % n] += v;
    }
    p * (mu0 * state.grid.cell_measure())
}
