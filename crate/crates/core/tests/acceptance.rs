//! Acceptance gate: one PASS/FAIL line per criterion.

use std::f64::consts::TAU;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use kkbrane::charges::{fundamental_bracket_residual, poincare_algebra_check};
use kkbrane::config::{ScenarioConfig, ScenarioKind};
use kkbrane::deformations::{
    compare, deform_extrinsic, deform_intrinsic, deformation_oracle, random_smooth_field, DeformationField,
    DeformationMismatch, Differencing, Flat, OracleDeformation,
};
use kkbrane::dynamics::{max_charge_drift, run, Snapshot};
use kkbrane::report::{fit_order, run_params, static_measures, write_run_outputs, RunReport, StaticMeasures};
use kkbrane::{FrameField, KKBackground, Tolerances, WorldvolumeGrid, WorldvolumePatch};

const ALL: [ScenarioKind; 5] = [
    ScenarioKind::FlatSheet,
    ScenarioKind::CircularLoop,
    ScenarioKind::ChiralLoop,
    ScenarioKind::NonchiralLoop,
    ScenarioKind::Random,
];

fn verdict(criterion: u32, title: &str, ok: bool, detail: &str) {
    // written to the raw handle so the line survives output capture
    let mut out = std::io::stdout().lock();
    let tag = if ok { "PASS" } else { "FAIL" };
    writeln!(out, "{tag} criterion {criterion}: {title}: {detail}").unwrap();
    out.flush().unwrap();
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn config(kind: ScenarioKind, n: usize) -> ScenarioConfig {
    let c = ScenarioConfig::new(kind).unwrap();
    ScenarioConfig {
        n,
        dtau: None,
        steps: None,
        ..c
    }
    .resolved()
    .unwrap()
}

fn frames(cfg: &ScenarioConfig) -> FrameField {
    let (state, _) = cfg.initial_state().unwrap();
    let patch = state.patch(3, cfg.dtau(), cfg.integrator).unwrap();
    FrameField::build(&patch, &state.bg, Tolerances::default()).unwrap()
}

/// Static measures of every scenario at n = 256.
fn measures() -> &'static Vec<(ScenarioKind, StaticMeasures)> {
    static M: OnceLock<Vec<(ScenarioKind, StaticMeasures)>> = OnceLock::new();
    M.get_or_init(|| {
        ALL.iter()
            .map(|&k| (k, static_measures(&config(k, 256), 1.0).unwrap()))
            .collect()
    })
}

/// Ten periods of a loop at n = 256, Δτ = h/4.
fn ten_periods(kind: ScenarioKind) -> Vec<Snapshot> {
    let mut cfg = config(kind, 256);
    cfg.steps = Some((10.0 * TAU / cfg.dtau()).round() as u64);
    cfg.cadence = 256;
    let (state, _) = cfg.initial_state().unwrap();
    run(state, &run_params(&cfg, 1.0)).unwrap().1
}

fn chiral_run() -> &'static Vec<Snapshot> {
    static R: OnceLock<Vec<Snapshot>> = OnceLock::new();
    R.get_or_init(|| ten_periods(ScenarioKind::ChiralLoop))
}

fn worst(rows: &[Snapshot], f: impl Fn(&Snapshot) -> f64) -> f64 {
    rows.iter().map(f).fold(0.0, f64::max)
}

#[test]
fn criterion_1_frame_axioms() {
    let mut res: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for kind in ALL {
        let cfg = config(kind, 256);
        let (state, _) = cfg.initial_state().unwrap();
        let patch = state.patch(3, cfg.dtau(), cfg.integrator).unwrap();
        let t = Instant::now();
        let ff = FrameField::build(&patch, &state.bg, Tolerances::default()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        for s in 1..6 {
            let (o, u) = ff.frame_axiom_residual(s).unwrap();
            res = res.max(o).max(u);
        }
    }
    verdict(
        1,
        "frame axioms on every scenario",
        res <= 1e-10 && slowest < 1.0,
        &format!("max residual {res:.3e} <= 1e-10, slowest frame build {slowest:.3} s < 1 s at n = 256"),
    );
}

#[test]
fn criterion_2_gauss_weingarten_order() {
    let grids = [64, 128, 256];
    let e: Vec<f64> = grids
        .iter()
        .map(|&n| {
            let (t, nn) = frames(&config(ScenarioKind::CircularLoop, n))
                .gauss_weingarten_residual(3)
                .unwrap();
            t.max(nn)
        })
        .collect();
    let order = fit_order(&grids, &e);
    let e: Vec<String> = e.iter().map(|v| format!("{v:.3e}")).collect();
    verdict(
        2,
        "Gauss-Weingarten convergence on the circular loop",
        order >= 1.8,
        &format!(
            "order {order:.3} >= 1.8 over n = 64, 128, 256 (residuals {})",
            e.join(", ")
        ),
    );
}

fn bg() -> KKBackground {
    KKBackground::new(4, 1.0).unwrap()
}

/// A straight string along x¹ with a smooth random wiggle.
fn wiggly_string(n: usize, seed: u64) -> WorldvolumePatch {
    let base = WorldvolumePatch::from_fn(
        WorldvolumeGrid::line(n).unwrap(),
        &bg(),
        0.0,
        5e-3,
        2,
        Some(vec![vec![0.0, TAU, 0.0, 0.0, 0.0]]),
        |t, xi| vec![t, xi[0], 0.0, 0.0, 0.0],
    )
    .unwrap();
    let wig = random_smooth_field(&base, 1000 + seed, 2, 1, 0.1).unwrap();
    base.deformed(1.0, &wig).unwrap()
}

/// General and normal-deformation mismatch against the central oracle.
fn oracle_mismatch(
    patch: &WorldvolumePatch,
    seed: u64,
    eps: f64,
) -> (DeformationMismatch, DeformationMismatch) {
    let ff = FrameField::build(patch, &bg(), Tolerances::default()).unwrap();
    let c = patch.centre();
    let w = random_smooth_field(patch, seed, 3, 1, 0.2).unwrap();
    let def = DeformationField::from_displacement(&ff, w).unwrap();
    let o = deformation_oracle(patch, &ff, &def, eps, Differencing::Central).unwrap();
    let general = compare(
        &deform_intrinsic(&ff, &def, c).unwrap(),
        None,
        o[c].as_ref().unwrap(),
    );
    let w = random_smooth_field(patch, seed, 3, 0, 0.2).unwrap();
    let ndef = DeformationField::normal_projection(&ff, &w).unwrap();
    let o = deformation_oracle(patch, &ff, &ndef, eps, Differencing::Central).unwrap();
    let ext = deform_extrinsic(&ff, &ndef, c, &Flat).unwrap();
    let normal = compare(
        &deform_intrinsic(&ff, &ndef, c).unwrap(),
        Some(&ext),
        o[c].as_ref().unwrap(),
    );
    (general, normal)
}

fn worst_mismatch(patch: &WorldvolumePatch, seed: u64, eps: f64) -> f64 {
    let (g, n) = oracle_mismatch(patch, seed, eps);
    g.max().max(n.max())
}

/// Order in ε of the central oracle, from differences at ε, ε/2, ε/4.
fn oracle_eps_order(patch: &WorldvolumePatch, seed: u64) -> f64 {
    let ff = FrameField::build(patch, &bg(), Tolerances::default()).unwrap();
    let c = patch.centre();
    let w = random_smooth_field(patch, seed, 3, 0, 0.2).unwrap();
    let def = DeformationField::normal_projection(&ff, &w).unwrap();
    let at = |eps: f64| {
        deformation_oracle(patch, &ff, &def, eps, Differencing::Central).unwrap()[c]
            .clone()
            .unwrap()
    };
    let diff = |a: &[OracleDeformation], b: &[OracleDeformation]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let k = x
                    .curvature
                    .iter()
                    .zip(&y.curvature)
                    .map(|(u, v)| (u - v).amax())
                    .fold(0.0, f64::max);
                k.max((&x.metric - &y.metric).amax())
            })
            .fold(0.0, f64::max)
    };
    let (k1, k2, k3) = (at(1e-3), at(5e-4), at(2.5e-4));
    (diff(&k1, &k2) / diff(&k2, &k3)).log2()
}

#[test]
fn criterion_3_deformation_calculus() {
    let mut worst_64: f64 = 0.0;
    for seed in 0..4 {
        worst_64 = worst_64.max(worst_mismatch(&wiggly_string(64, seed), seed, 1e-5));
    }
    // h-scaling at fixed small ε
    let coarse = worst_mismatch(&wiggly_string(32, 7), 7, 1e-5);
    let fine = worst_mismatch(&wiggly_string(64, 7), 7, 1e-5);
    let h_order = (coarse / fine).log2();
    // ε-scaling of the central oracle by Richardson differences
    let patch = wiggly_string(64, 3);
    let eps_order = oracle_eps_order(&patch, 3);
    verdict(
        3,
        "deformation formulas against the oracle",
        worst_64 <= 1e-4 && h_order >= 1.8 && eps_order >= 1.8,
        &format!(
            "max relative mismatch {worst_64:.3e} <= 1e-4 at n = 64, eps = 1e-5; h order {h_order:.2} >= 1.8; eps order {eps_order:.2} >= 1.8"
        ),
    );
}

#[test]
fn criterion_4_eom_equivalence() {
    let static_gap = measures()
        .iter()
        .map(|(_, m)| m.eom_stress_gap)
        .fold(0.0, f64::max);
    let run_gap = worst(chiral_run(), |r| r.eom_stress_gap);
    let gap = static_gap.max(run_gap);
    verdict(
        4,
        "equation of motion from dynamics equals the stress normal row",
        gap <= 1e-12,
        &format!("max pointwise gap {gap:.3e} <= 1e-12 on all scenarios and the chiral run"),
    );
}

#[test]
fn criterion_5_brackets_and_algebra() {
    let ds = TAU / 16.0;
    let fundamental = fundamental_bracket_residual(16, 5, ds, 16)
        .unwrap()
        .max(fundamental_bracket_residual(16, 6, ds, 16).unwrap());
    let mut closure: f64 = 0.0;
    for base_dim in [3, 4, 5] {
        for kind in [ScenarioKind::FlatSheet, ScenarioKind::Random] {
            let mut c = ScenarioConfig::new(kind).unwrap();
            c.base_dim = base_dim;
            c.n = 32;
            c.dtau = None;
            c.movers = None;
            c.seed = 11;
            let c = c.resolved().unwrap();
            let (state, _) = c.initial_state().unwrap();
            let slice = state.phase_slice(1.0, &Tolerances::default()).unwrap();
            closure = closure.max(poincare_algebra_check(&slice).unwrap().max());
        }
    }
    for (_, m) in measures() {
        closure = closure.max(m.poincare_algebra);
    }
    verdict(
        5,
        "canonical brackets and Poincare closure",
        fundamental <= 1e-14 && closure <= 1e-10,
        &format!("fundamental bracket residual {fundamental:.3e} (exact); closure {closure:.3e} <= 1e-10 for total_dim 4..6"),
    );
}

#[test]
fn criterion_6_conservation() {
    let rows = chiral_run();
    let drift = max_charge_drift(rows).into_iter().fold(0.0, f64::max);
    let tau_end = rows.last().unwrap().tau;
    let grids = [64, 128, 256];
    let series: Vec<(f64, f64)> = grids
        .iter()
        .map(|&n| {
            let m = static_measures(&config(ScenarioKind::ChiralLoop, n), 1.0).unwrap();
            (m.momentum_divergence, m.stress_divergence)
        })
        .collect();
    let pd: Vec<f64> = series.iter().map(|s| s.0).collect();
    let sd: Vec<f64> = series.iter().map(|s| s.1).collect();
    let (op, os) = (fit_order(&grids, &pd), fit_order(&grids, &sd));
    verdict(
        6,
        "conservation on the chiral loop",
        drift <= 1e-6 && op >= 1.8 && os >= 1.8 && tau_end >= 10.0 * TAU - 1e-9,
        &format!(
            "max relative drift of P and M {drift:.3e} <= 1e-6 over tau = {tau_end:.4}; divergence orders {op:.3} and {os:.3} >= 1.8"
        ),
    );
}

#[test]
fn criterion_7_stress_momentum_identity() {
    let static_gap = measures()
        .iter()
        .map(|(_, m)| m.stress_momentum)
        .fold(0.0, f64::max);
    let gap = static_gap.max(worst(chiral_run(), |r| r.stress_momentum));
    verdict(
        7,
        "stress flux equals canonical momentum flux for H = -mu0",
        gap <= 1e-12,
        &format!("max pointwise mismatch {gap:.3e} <= 1e-12 on all scenarios and the chiral run"),
    );
}

#[test]
fn criterion_8_chirality() {
    let varpi = worst(chiral_run(), |r| r.varpi);
    let grids = [64, 128, 256];
    let pw: Vec<f64> = grids
        .iter()
        .map(|&n| {
            static_measures(&config(ScenarioKind::ChiralLoop, n), 1.0)
                .unwrap()
                .phi_wave
        })
        .collect();
    let order = fit_order(&grids, &pw);
    let control = ten_periods(ScenarioKind::NonchiralLoop)
        .iter()
        .map(|r| r.varpi)
        .fold(f64::INFINITY, f64::min);
    verdict(
        8,
        "chirality monitor",
        varpi <= 1e-8 && order >= 1.8 && control > 1e-2,
        &format!(
            "chiral max |varpi| {varpi:.3e} <= 1e-8 over 10 periods; phi wave order {order:.3} >= 1.8; nonchiral control min max|varpi| {control:.3e} > 1e-2"
        ),
    );
}

fn run_into(dir: &std::path::Path, kind: ScenarioKind) {
    let mut cfg = config(kind, 128);
    cfg.steps = Some(cfg.steps().min(600));
    cfg.cadence = 100;
    let (state, _) = cfg.initial_state().unwrap();
    let (_, rows) = run(state, &run_params(&cfg, 1.0)).unwrap();
    let checks = kkbrane::report::run_checks(&cfg, &rows, 1.0);
    let passed = checks.iter().all(|c| c.passed);
    let report = RunReport {
        command: "run".into(),
        scenario: cfg.scenario.id().into(),
        config: cfg,
        tol_scale: 1.0,
        grids: Vec::new(),
        series: Vec::new(),
        checks,
        passed,
    };
    write_run_outputs(dir, &report, &rows).unwrap();
}

#[test]
fn criterion_9_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut files = 0;
    for kind in [ScenarioKind::ChiralLoop, ScenarioKind::Random] {
        let (a, b) = (
            tmp.path().join(format!("{kind:?}-a")),
            tmp.path().join(format!("{kind:?}-b")),
        );
        run_into(&a, kind);
        run_into(&b, kind);
        for f in ["charges.csv", "diagnostics.csv", "report.json", "report.txt"] {
            identical &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
            files += 1;
        }
    }
    // the same through the binary, including the sweep report
    let cfg = tmp.path().join("sweep.json");
    std::fs::write(&cfg, r#"{"scenario": "chiral_loop", "seed": 4}"#).unwrap();
    let mut reports = Vec::new();
    for tag in ["x", "y"] {
        let out = tmp.path().join(tag);
        let st = std::process::Command::new(env!("CARGO_BIN_EXE_kkbrane"))
            .args([
                "sweep",
                cfg.to_str().unwrap(),
                "--grids",
                "32,64",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        identical &= st.status.success();
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    identical &= reports[0] == reports[1];
    files += 1;
    verdict(
        9,
        "determinism",
        identical,
        &format!("{files} output pairs byte-identical across repeated runs"),
    );
}
