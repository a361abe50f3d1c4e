//! Checks, reports and the run/verify/sweep orchestration behind the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::charges::momentum_density_and_divergence;
use crate::charges::{
    fundamental_bracket_residual, lorentz_generator_residual, poincare_algebra_check, write_charge_csv,
};
use crate::config::{ScenarioConfig, ScenarioKind};
use crate::deformations::{
    compare, deform_extrinsic, deform_intrinsic, deformation_oracle, random_smooth_field, DeformationField,
    Differencing, Flat,
};
use crate::dynamics::{eom_residual, max_charge_drift, run, EvolutionState, RunParams, Snapshot};
use crate::error::{Error, Result};
use crate::geometry::{FrameField, Tolerances};
use crate::stress::{
    eom_from_stress, multiplier_consistency, partials_consistency, solve_multipliers,
    stress_conservation_residual, stress_momentum_mismatch, CurvatureQuadratic, Dng,
};

/// Oracle step of the deformation check.
pub const ORACLE_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    Above,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, relation: Relation, threshold: f64) -> Self {
        let passed = match relation {
            Relation::AtMost => value <= threshold,
            Relation::Above => value > threshold,
            Relation::AtLeast => value >= threshold,
        };
        Self {
            name: name.to_string(),
            value,
            threshold,
            relation,
            passed,
        }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::AtMost, threshold)
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::Above, threshold)
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, Relation::AtLeast, threshold)
    }
}

/// One resolution series of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub config: ScenarioConfig,
    pub tol_scale: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunReport {
    fn new(command: &str, cfg: &ScenarioConfig, tol_scale: f64, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            command: command.to_string(),
            scenario: cfg.scenario.id().to_string(),
            config: cfg.clone(),
            tol_scale,
            grids: Vec::new(),
            series: Vec::new(),
            checks,
            passed,
        }
    }

    /// The overall status must be the conjunction of the checks, each named once.
    pub fn is_consistent(&self) -> bool {
        let mut names: Vec<&str> = self.checks.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        let unique = names.windows(2).all(|w| w[0] != w[1]);
        unique && self.passed == self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "{} {}", self.command, self.scenario);
        let _ = writeln!(
            s,
            "n = {}  dtau = {:e}  steps = {}  mu0 = {}  g44 = {}  tol_scale = {}",
            c.n,
            c.dtau(),
            c.steps(),
            c.mu0,
            c.g44,
            self.tol_scale
        );
        if !self.grids.is_empty() {
            let g: Vec<String> = self.grids.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "grids: {}", g.join(", "));
            for ser in &self.series {
                let v: Vec<String> = ser.values.iter().map(|v| format!("{v:.3e}")).collect();
                let _ = writeln!(
                    s,
                    "  {:<22} order {:>6.3}   {}",
                    ser.name,
                    ser.order,
                    v.join("  ")
                );
            }
        }
        for ch in &self.checks {
            let rel = match ch.relation {
                Relation::AtMost => "<=",
                Relation::Above => ">",
                Relation::AtLeast => ">=",
            };
            let _ = writeln!(
                s,
                "{} {:<28} {:.6e} {} {:.1e}",
                if ch.passed { "PASS" } else { "FAIL" },
                ch.name,
                ch.value,
                rel,
                ch.threshold
            );
        }
        let _ = writeln!(s, "{}", if self.passed { "ALL PASS" } else { "FAILED" });
        s
    }
}

/// Residuals of the static checks on the initial data of a scenario.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StaticMeasures {
    pub frame_axioms: f64,
    pub gauss_weingarten: f64,
    pub deformation_general: f64,
    pub deformation_normal: f64,
    pub fundamental_brackets: f64,
    pub poincare_algebra: f64,
    pub lorentz_generators: f64,
    pub stress_momentum: f64,
    pub eom_stress_gap: f64,
    pub partials: f64,
    pub multiplier_normal: f64,
    pub eom: f64,
    pub base_form: f64,
    pub phi_wave: f64,
    pub momentum_divergence: f64,
    pub stress_divergence: f64,
    pub varpi: f64,
    pub constraints: f64,
    pub initial_constraints: f64,
    pub mover_deviation: f64,
    pub initial_varpi: f64,
}

const HALF: usize = 3;

/// Evaluate every static check on a seven-slice patch around the initial data.
pub fn static_measures(cfg: &ScenarioConfig, tol_scale: f64) -> Result<StaticMeasures> {
    let tol = Tolerances::default().scaled(tol_scale);
    let (state, init) = cfg.initial_state()?;
    let dt = cfg.dtau();
    let patch = state.patch(HALF, dt, cfg.integrator)?;
    let ff = FrameField::build(&patch, &state.bg, tol)?;
    let c = HALF;
    let mut m = StaticMeasures::default();

    for s in 1..patch.slices.len() - 1 {
        let (o, u) = ff.frame_axiom_residual(s)?;
        m.frame_axioms = m.frame_axioms.max(o).max(u);
    }
    let (gt, gn) = ff.gauss_weingarten_residual(c)?;
    m.gauss_weingarten = gt.max(gn);

    let (dm, dn) = deformation_measures(cfg, &state, &tol)?;
    m.deformation_general = dm;
    m.deformation_normal = dn;

    let slice = state.phase_slice(cfg.mu0, &tol)?;
    m.fundamental_brackets = fundamental_bracket_residual(slice.npts(), slice.dim(), slice.dsigma, 4)?;
    m.poincare_algebra = poincare_algebra_check(&slice)?.max();
    m.lorentz_generators = lorentz_generator_residual(&slice);

    let dng = Dng { mu0: cfg.mu0 };
    for s in 1..patch.slices.len() - 1 {
        m.stress_momentum = m.stress_momentum.max(stress_momentum_mismatch(&ff, s, &dng)?);
    }
    let se = eom_from_stress(&ff, c, &dng)?;
    for (mc, f) in se.mean_curvature.iter().zip(ff.frames(c)?) {
        m.eom_stress_gap = m.eom_stress_gap.max((mc - f.mean_curvature()).amax());
    }
    m.eom = eom_residual(&ff, c)?.into_iter().fold(0.0, f64::max);
    m.base_form = se.max_base_form();
    m.phi_wave = se.max_phi_wave();
    m.momentum_divergence = momentum_density_and_divergence(&ff, c, cfg.mu0)?.1;
    m.stress_divergence = stress_conservation_residual(&ff, c, &dng)?;

    let cq = CurvatureQuadratic {
        mu0: cfg.mu0,
        alpha: cfg.alpha,
    };
    for f in ff.frames(c)? {
        m.partials = m.partials.max(partials_consistency(&cq, f));
    }
    let ms = solve_multipliers(&ff, c, &cq)?;
    m.multiplier_normal = multiplier_consistency(&ff, &ms, &cq)?.normal_equation;

    m.varpi = state.varpi_max(&tol)?;
    let (cp, cm) = state.constraints()?;
    m.constraints = cp.max(cm);
    if let Some(chk) = init {
        m.mover_deviation = chk.mover_deviation;
        m.initial_varpi = chk.varpi;
        m.initial_constraints = chk.constraint_plus.max(chk.constraint_minus);
    }
    Ok(m)
}

/// Oracle mismatch of a general and a normal random deformation. The patch
/// uses Δτ = h/16 so that time truncation stays below the tolerance.
fn deformation_measures(
    cfg: &ScenarioConfig,
    state: &EvolutionState,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let dt = cfg.dtau().min(state.min_spacing() / DEFORMATION_DT_DIVISOR);
    let patch = state.patch(HALF, dt, cfg.integrator)?;
    let ff = FrameField::build(&patch, &state.bg, *tol)?;
    let c = HALF;
    let centre = |o: Vec<Option<Vec<_>>>| {
        o.into_iter()
            .nth(c)
            .flatten()
            .ok_or_else(|| Error::InsufficientHistory("oracle has no centre frames".into()))
    };
    let w = random_smooth_field(&patch, cfg.seed, 3, 1, 0.2)?;
    let def = DeformationField::from_displacement(&ff, w)?;
    let o = centre(deformation_oracle(
        &patch,
        &ff,
        &def,
        ORACLE_EPS,
        Differencing::Central,
    )?)?;
    let general = compare(&deform_intrinsic(&ff, &def, c)?, None, &o).max();
    let w = random_smooth_field(&patch, cfg.seed.wrapping_add(1), 3, 0, 0.2)?;
    let ndef = DeformationField::normal_projection(&ff, &w)?;
    let o = centre(deformation_oracle(
        &patch,
        &ff,
        &ndef,
        ORACLE_EPS,
        Differencing::Central,
    )?)?;
    let ext = deform_extrinsic(&ff, &ndef, c, &Flat)?;
    let normal = compare(&deform_intrinsic(&ff, &ndef, c)?, Some(&ext), &o).max();
    Ok((general, normal))
}

const DEFORMATION_DT_DIVISOR: f64 = 16.0;

/// Expected sign of the chirality monitor, when the scenario fixes one.
fn expects_chiral(kind: ScenarioKind) -> Option<bool> {
    match kind {
        ScenarioKind::FlatSheet | ScenarioKind::CircularLoop | ScenarioKind::ChiralLoop => Some(true),
        ScenarioKind::NonchiralLoop => Some(false),
        ScenarioKind::Random | ScenarioKind::Custom => None,
    }
}

/// Threshold of truncation-level residuals at n = 256; it grows as (256/n)².
pub const DISCRETIZATION_TOL: f64 = 1e-3;

pub fn discretization_tol(n: usize) -> f64 {
    DISCRETIZATION_TOL * (256.0 / n as f64).powi(2)
}

/// Floor below which the chirality monitor counts as violated.
pub const VARPI_CONTROL: f64 = 1e-2;
/// Floor of the equation-of-motion residuals on off-shell data.
pub const OFF_SHELL_FLOOR: f64 = 1e-2;

pub fn static_checks(cfg: &ScenarioConfig, m: &StaticMeasures, ts: f64) -> Vec<Check> {
    let disc = discretization_tol(cfg.n) * ts;
    let mut v = vec![
        Check::at_most("frame_axioms", m.frame_axioms, 1e-10 * ts),
        Check::at_most("gauss_weingarten", m.gauss_weingarten, disc),
        Check::at_most("deformation_general", m.deformation_general, disc),
        Check::at_most("deformation_normal", m.deformation_normal, disc),
        Check::at_most("fundamental_brackets", m.fundamental_brackets, 1e-12 * ts),
        Check::at_most("poincare_algebra", m.poincare_algebra, 1e-10 * ts),
        Check::at_most("lorentz_generators", m.lorentz_generators, 1e-10 * ts),
        Check::at_most("stress_momentum", m.stress_momentum, 1e-12 * ts),
        Check::at_most("eom_stress_gap", m.eom_stress_gap, 1e-12 * ts),
        Check::at_most("density_partials", m.partials, 1e-7 * ts),
        Check::at_most("multiplier_normal", m.multiplier_normal, 1e-10 * ts),
    ];
    if cfg.scenario.on_shell() {
        v.extend([
            Check::at_most("mover_deviation", m.mover_deviation, 1e-10 * ts),
            Check::at_most("initial_constraints", m.initial_constraints, 1e-10 * ts),
            Check::at_most("constraints", m.constraints, disc),
            Check::at_most("eom", m.eom, disc),
            Check::at_most("phi_wave", m.phi_wave, disc),
            Check::at_most("momentum_divergence", m.momentum_divergence, disc),
            Check::at_most("stress_divergence", m.stress_divergence, disc),
        ]);
    } else {
        v.extend([
            Check::above("eom_off_shell", m.eom, OFF_SHELL_FLOOR),
            Check::above(
                "stress_divergence_off_shell",
                m.stress_divergence,
                OFF_SHELL_FLOOR,
            ),
        ]);
    }
    match expects_chiral(cfg.scenario) {
        Some(true) => v.extend([
            Check::at_most("base_form", m.base_form, disc),
            Check::at_most("initial_varpi", m.initial_varpi, 1e-12 * ts),
            Check::at_most("varpi", m.varpi, 1e-8 * ts),
        ]),
        Some(false) => v.push(Check::above("varpi_control", m.varpi, VARPI_CONTROL)),
        None => {}
    }
    v
}

/// Static checks only, no evolution.
pub fn verify(cfg: &ScenarioConfig, tol_scale: f64) -> Result<RunReport> {
    let m = static_measures(cfg, tol_scale)?;
    Ok(RunReport::new(
        "verify",
        cfg,
        tol_scale,
        static_checks(cfg, &m, tol_scale),
    ))
}

pub fn run_params(cfg: &ScenarioConfig, tol_scale: f64) -> RunParams {
    RunParams {
        dtau: cfg.dtau(),
        steps: cfg.steps(),
        cadence: cfg.cadence,
        mu0: cfg.mu0,
        integrator: cfg.integrator,
        tol: Tolerances::default().scaled(tol_scale),
    }
}

/// Checks over the rows of a run.
pub fn run_checks(cfg: &ScenarioConfig, rows: &[Snapshot], ts: f64) -> Vec<Check> {
    let worst = |f: fn(&Snapshot) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let disc = discretization_tol(cfg.n) * ts;
    let mut v = vec![
        Check::at_most("frame_axioms", worst(|r| r.frame_axioms), 1e-10 * ts),
        Check::at_most("stress_momentum", worst(|r| r.stress_momentum), 1e-12 * ts),
        Check::at_most("eom_stress_gap", worst(|r| r.eom_stress_gap), 1e-12 * ts),
    ];
    if cfg.scenario.on_shell() {
        let drift = max_charge_drift(rows);
        let n = cfg.base_dim + 1;
        let p = drift[..n].iter().copied().fold(0.0, f64::max);
        let mm = drift[n..].iter().copied().fold(0.0, f64::max);
        v.extend([
            Check::at_most("momentum_drift", p, 1e-6 * ts),
            Check::at_most("angular_momentum_drift", mm, 1e-6 * ts),
            Check::at_most(
                "constraints",
                worst(|r| r.constraint_plus.max(r.constraint_minus)),
                disc,
            ),
            Check::at_most("eom", worst(|r| r.eom.iter().copied().fold(0.0, f64::max)), disc),
            Check::at_most("phi_wave", worst(|r| r.phi_wave), disc),
            Check::at_most("momentum_divergence", worst(|r| r.momentum_divergence), disc),
            Check::at_most("stress_divergence", worst(|r| r.stress_divergence), disc),
        ]);
    }
    if !cfg.scenario.on_shell() {
        v.push(Check::above(
            "constraints_off_shell",
            worst(|r| r.constraint_plus.max(r.constraint_minus)),
            OFF_SHELL_FLOOR,
        ));
    }
    match expects_chiral(cfg.scenario) {
        Some(true) => v.extend([
            Check::at_most("varpi", worst(|r| r.varpi), 1e-8 * ts),
            Check::at_most("base_form", worst(|r| r.base_form), disc),
        ]),
        Some(false) => v.push(Check::above("varpi_control", worst(|r| r.varpi), VARPI_CONTROL)),
        None => {}
    }
    v
}

/// Evolve a scenario and return its report with the output rows.
pub fn run_scenario(cfg: &ScenarioConfig, tol_scale: f64) -> Result<(RunReport, Vec<Snapshot>)> {
    let (state, init) = cfg.initial_state()?;
    let codim_ok = state.grid.spatial_dim() == 1;
    if !codim_ok {
        return Err(Error::Config("evolution is implemented for strings only".into()));
    }
    let (_, rows) = run(state, &run_params(cfg, tol_scale))?;
    let mut checks = Vec::new();
    if let Some(chk) = init {
        checks.push(Check::at_most(
            "mover_deviation",
            chk.mover_deviation,
            1e-10 * tol_scale,
        ));
        checks.push(Check::at_most(
            "initial_constraints",
            chk.constraint_plus.max(chk.constraint_minus),
            1e-10 * tol_scale,
        ));
    }
    checks.extend(run_checks(cfg, &rows, tol_scale));
    Ok((RunReport::new("run", cfg, tol_scale, checks), rows))
}

/// Write charges.csv, diagnostics.csv, report.json and report.txt.
pub fn write_run_outputs(dir: &Path, report: &RunReport, rows: &[Snapshot]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut charges = Vec::new();
    let series: Vec<_> = rows.iter().map(|r| (r.tau, r.charges.clone())).collect();
    write_charge_csv(&mut charges, &series)?;
    fs::write(dir.join("charges.csv"), charges)?;
    fs::write(dir.join("diagnostics.csv"), diagnostics_csv(rows))?;
    write_report(dir, report)
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    Ok(())
}

pub fn diagnostics_csv(rows: &[Snapshot]) -> String {
    let mut s = String::new();
    let Some(first) = rows.first() else {
        return s;
    };
    s.push_str(&Snapshot::csv_header(first.eom.len()).join(","));
    s.push('\n');
    for r in rows {
        let cols: Vec<String> = r.csv_values().iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

/// Read a run directory's report.json.
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(dir.join("report.json"))?;
    let r = RunReport::from_json(&text)?;
    if !r.is_consistent() {
        return Err(Error::Config(
            "report.json status disagrees with its checks".into(),
        ));
    }
    Ok(r)
}

/// Least-squares slope of −log e against log n.
pub fn fit_order(grids: &[usize], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = grids
        .iter()
        .zip(values)
        .map(|(&n, &e)| ((n as f64).ln(), e.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    -sxy / sxx
}

/// Minimum convergence order of the fitted series.
pub const MIN_ORDER: f64 = 1.8;
/// Series whose finest value is below this are at roundoff and not fitted.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

/// Static measures over several grids; dtau keeps its ratio to the spacing.
pub fn sweep(cfg: &ScenarioConfig, grids: &[usize], tol_scale: f64) -> Result<RunReport> {
    if grids.len() < 2 {
        return Err(Error::Config("sweep needs at least two grids".into()));
    }
    let ratio = cfg.dtau() / cfg.spacing();
    let mut per_grid = Vec::new();
    for &n in grids {
        let c = ScenarioConfig {
            n,
            dtau: None,
            steps: Some(0),
            ..cfg.clone()
        };
        let c = ScenarioConfig {
            dtau: Some(ratio * c.spacing()),
            ..c
        }
        .resolved()?;
        per_grid.push(static_measures(&c, tol_scale)?);
    }
    let pick: [(&str, fn(&StaticMeasures) -> f64); 6] = [
        ("gauss_weingarten", |m| m.gauss_weingarten),
        ("eom", |m| m.eom),
        ("phi_wave", |m| m.phi_wave),
        ("base_form", |m| m.base_form),
        ("momentum_divergence", |m| m.momentum_divergence),
        ("stress_divergence", |m| m.stress_divergence),
    ];
    let mut series = Vec::new();
    let mut checks = Vec::new();
    for (name, f) in pick {
        let values: Vec<f64> = per_grid.iter().map(f).collect();
        let finest = *values.last().expect("two grids");
        if finest <= ROUNDOFF_FLOOR * tol_scale {
            checks.push(Check::at_most(
                &format!("{name}_roundoff"),
                finest,
                ROUNDOFF_FLOOR * tol_scale,
            ));
            series.push(Series {
                name: name.to_string(),
                values,
                order: 0.0,
            });
            continue;
        }
        let order = fit_order(grids, &values);
        // Gauss-Weingarten is an identity and converges off shell as well
        if cfg.scenario.on_shell() || name == "gauss_weingarten" {
            checks.push(Check::at_least(&format!("{name}_order"), order, MIN_ORDER));
        }
        series.push(Series {
            name: name.to_string(),
            values,
            order,
        });
    }
    if !cfg.scenario.on_shell() {
        let finest = per_grid.last().expect("two grids");
        checks.push(Check::above("eom_off_shell", finest.eom, OFF_SHELL_FLOOR));
    }
    let mut r = RunReport::new("sweep", cfg, tol_scale, checks);
    r.grids = grids.to_vec();
    r.series = series;
    Ok(r)
}
