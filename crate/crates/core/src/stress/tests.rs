use super::*;
use crate::embedding::{ExtendedEmbedding, WorldvolumePatch};
use crate::{KKBackground, Tolerances, WorldvolumeGrid};
use std::f64::consts::{PI, TAU};

fn bg() -> KKBackground {
    KKBackground::new(4, 1.0).unwrap()
}

/// Exact conformal-gauge loop; `alpha` tilts the left mover into the KK circle.
fn chiral_loop(n: usize, dt: f64, half: usize, alpha: f64) -> WorldvolumePatch {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    WorldvolumePatch::from_fn(
        WorldvolumeGrid::line(n).unwrap(),
        &bg(),
        0.4,
        dt,
        half,
        Some(vec![vec![0.0, 0.0, 0.0, 0.0, PI * sa]]),
        |t, xi| {
            let (u, v) = (xi[0] + t, xi[0] - t);
            vec![
                t,
                0.5 * (ca * u.cos() + v.cos()),
                0.5 * (ca * u.sin() + v.sin()),
                0.0,
                0.5 * sa * u,
            ]
        },
    )
    .unwrap()
}

/// A loop that is not a solution: static ellipse with a φ ripple.
fn off_shell(n: usize) -> WorldvolumePatch {
    WorldvolumePatch::from_fn(
        WorldvolumeGrid::line(n).unwrap(),
        &bg(),
        0.0,
        0.02,
        3,
        None,
        |t, xi| {
            let s = xi[0];
            vec![
                t,
                1.3 * s.cos(),
                0.8 * s.sin(),
                0.2 * (2.0 * s).sin(),
                0.1 * (3.0 * s).cos(),
            ]
        },
    )
    .unwrap()
}

fn frames(patch: &WorldvolumePatch) -> FrameField {
    FrameField::build(patch, &bg(), Tolerances::default()).unwrap()
}

#[test]
fn dng_stress_is_momentum_flux() {
    let patch = chiral_loop(64, 0.01, 2, 0.7);
    let ff = frames(&patch);
    for s in 1..=3 {
        assert!(stress_momentum_mismatch(&ff, s, &Dng { mu0: 1.7 }).unwrap() <= 1e-12);
    }
    let st = stress_field(&ff, 2, &Dng { mu0: 1.0 }).unwrap();
    for sp in &st {
        assert!(sp.normal.amax() == 0.0);
    }
}

#[test]
fn dng_multipliers() {
    let ff = frames(&chiral_loop(32, 0.01, 1, 0.3));
    let ms = solve_multipliers(&ff, 1, &Dng { mu0: 2.0 }).unwrap();
    let f = ff.frame(1, 0).unwrap();
    let p = &ms.points[0];
    assert!((&p.t + &f.metric.metric_inv * 2.0).amax() < 1e-14);
    assert!((&p.lambda - &p.t * 0.5).amax() == 0.0);
    assert!(p.big_lambda.iter().all(|l| l.amax() == 0.0));
    assert!(p.lambda_nn.amax() == 0.0 && p.lambda_perp.amax() == 0.0);
    assert_eq!(ms.tension, Some(2.0));
}

#[test]
fn analytic_partials_match_finite_differences() {
    let ff = frames(&off_shell(48));
    let h = CurvatureQuadratic { mu0: 1.0, alpha: 0.3 };
    for p in [0, 7, 20, 33] {
        let f = ff.frame(3, p).unwrap();
        assert!(f.curvature.iter().any(|k| k.amax() > 0.1));
        assert!(partials_consistency(&h, f) < 1e-7);
        let dg = h.d_metric(&f.metric.metric, &f.curvature);
        assert!((&dg - dg.transpose()).amax() < 1e-14);
    }
}

#[test]
fn inconsistent_density_is_rejected() {
    struct Liar;
    impl HamiltonianDensity for Liar {
        fn id(&self) -> &str {
            "liar"
        }
        fn value(&self, g: &DMatrix<f64>, _: &[DMatrix<f64>]) -> f64 {
            g.trace()
        }
        fn d_metric(&self, g: &DMatrix<f64>, _: &[DMatrix<f64>]) -> DMatrix<f64> {
            DMatrix::zeros(g.nrows(), g.ncols())
        }
    }
    let ff = frames(&off_shell(32));
    assert!(matches!(solve_multipliers(&ff, 3, &Liar), Err(Error::Config(_))));
}

#[test]
fn numeric_wrapper_reproduces_analytic_stress() {
    let ff = frames(&off_shell(32));
    let h = CurvatureQuadratic {
        mu0: 1.0,
        alpha: 0.25,
    };
    let a = stress_field(&ff, 3, &h).unwrap();
    let b = stress_field(&ff, 3, &NumericPartials(h)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((&x.f - &y.f).amax() < 1e-7);
    }
}

#[test]
fn multiplier_equations_hold() {
    let ff = frames(&off_shell(64));
    let h = CurvatureQuadratic { mu0: 1.0, alpha: 0.4 };
    let ms = solve_multipliers(&ff, 3, &h).unwrap();
    let c = multiplier_consistency(&ff, &ms, &h).unwrap();
    assert!(c.normal_equation <= 1e-10, "{c:?}");
    assert!(c.phi_antisymmetry == 0.0);
    assert!(c.phi_magnitude < 1e-12);
    assert!(c.lambda_nn_symmetry <= 1e-10);
    assert!(c.tangent_equation < 5e-3, "{c:?}");
}

#[test]
fn tangent_equation_converges() {
    let h = CurvatureQuadratic { mu0: 1.0, alpha: 0.4 };
    let err = |n| {
        let ff = frames(&off_shell(n));
        let ms = solve_multipliers(&ff, 3, &h).unwrap();
        multiplier_consistency(&ff, &ms, &h).unwrap().tangent_equation
    };
    let (e1, e2) = (err(32), err(64));
    assert!((e1 / e2).log2() > 3.0, "{e1:e} {e2:e}");
}

#[test]
fn solution_satisfies_stress_equations() {
    let ff = frames(&chiral_loop(128, 2e-3, 3, 0.7));
    let eom = eom_from_stress(&ff, 3, &Dng { mu0: 1.0 }).unwrap();
    assert!(eom.max_tangential() < 1e-4, "{}", eom.max_tangential());
    assert!(eom.max_normal() < 1e-4, "{}", eom.max_normal());
    assert!(eom.max_base_form() < 1e-4, "{}", eom.max_base_form());
    assert!(eom.max_phi_wave() < 1e-4, "{}", eom.max_phi_wave());
}

#[test]
fn off_shell_configuration_violates_equations() {
    let ff = frames(&off_shell(64));
    let eom = eom_from_stress(&ff, 3, &Dng { mu0: 1.0 }).unwrap();
    assert!(eom.max_normal() > 0.1);
    assert!(eom.max_base_form() > 0.1);
    // the normal row over μ₀ is Γ^{ab} K_ab^I
    for (mc, f) in eom.mean_curvature.iter().zip(ff.frames(3).unwrap()) {
        assert!((mc - f.mean_curvature()).amax() <= 1e-12);
    }
    // the tangential row is a discrete identity and stays at truncation level
    assert!(eom.max_tangential() < 1e-2 * eom.max_normal());
    let h = CurvatureQuadratic { mu0: 1.0, alpha: 0.2 };
    let eom = eom_from_stress(&ff, 3, &h).unwrap();
    assert!(eom.max_tangential() < 1e-1 * eom.max_normal());
}

#[test]
fn stress_is_conserved_on_solutions_only() {
    let ff = frames(&chiral_loop(128, 2e-3, 3, 0.5));
    assert!(stress_conservation_residual(&ff, 3, &Dng { mu0: 1.0 }).unwrap() < 1e-4);
    let ff = frames(&off_shell(64));
    assert!(stress_conservation_residual(&ff, 3, &Dng { mu0: 1.0 }).unwrap() > 0.1);
}

#[test]
fn edge_slices_are_rejected() {
    let ff = frames(&chiral_loop(32, 0.01, 2, 0.3));
    assert!(eom_from_stress(&ff, 1, &Dng { mu0: 1.0 }).is_err());
    assert!(stress_field(&ff, 0, &Dng { mu0: 1.0 }).is_err());
    let h = CurvatureQuadratic { mu0: 1.0, alpha: 0.1 };
    assert!(solve_multipliers(&ff, 1, &h).is_err());
}

/// Periodic graph z = ε sin x cos y in a Euclidean base with φ = 0.
fn ripple(n: usize, eps: f64) -> (WorldvolumePatch, KKBackground) {
    let bg = KKBackground::euclidean(3, 1.0).unwrap();
    let grid = WorldvolumeGrid::new(&[n, n]).unwrap();
    let x = ExtendedEmbedding::from_fn(
        &grid,
        4,
        Some(vec![vec![TAU, 0.0, 0.0, 0.0], vec![0.0, TAU, 0.0, 0.0]]),
        |xi| vec![xi[0], xi[1], eps * xi[0].sin() * xi[1].cos(), 0.0],
    )
    .unwrap();
    (WorldvolumePatch::riemannian(grid, x), bg)
}

/// Max deviation from f^a = (HΓ^{ab} − 2αK K^{ab}) e_b + 2α∇^a K n.
fn hypersurface_stress_error(n_grid: usize) -> f64 {
    let (patch, bg) = ripple(n_grid, 0.2);
    let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
    let (alpha, mu0) = (0.3, 1.1);
    let h = CurvatureQuadratic { mu0, alpha };
    let st = stress_field(&ff, 0, &h).unwrap();
    let frames = ff.frames(0).unwrap();
    let kk = bg.kk_index();
    // the base normal and its mean curvature vector K n^μ at every point
    let base_normal = |f: &PointFrame| (0..2).find(|&i| f.normals[(i, kk)].abs() < 1e-12).unwrap();
    let kvec: Vec<DVector<f64>> = frames
        .iter()
        .map(|f| {
            let i = base_normal(f);
            f.normals.row(i).transpose() * f.mean_curvature()[i]
        })
        .collect();
    let mut err: f64 = 0.0;
    for (p, (f, sp)) in frames.iter().zip(&st).enumerate() {
        let i = base_normal(f);
        assert!(f.curvature[1 - i].amax() < 1e-12);
        let n = f.normals.row(i).transpose();
        let kt = f.mean_curvature()[i];
        let kr = f.curvature_raised(i);
        let hv = -mu0 + alpha * kt * kt;
        let tang = &f.metric.metric_inv * hv - &kr * (2.0 * alpha * kt);
        // ∂_b K = n·∂_b(K n)
        let grad = DVector::from_fn(2, |b, _| {
            let mut d = DVector::zeros(4);
            for (off, w) in ff.layout.d1(b) {
                let (_, q, _) = ff.layout.resolve(0, p, off);
                d += &kvec[q] * w;
            }
            bg.dot(n.as_slice(), d.as_slice())
        });
        let up = &f.metric.metric_inv * grad * (2.0 * alpha);
        let expect = &tang * &f.metric.tangents + &up * n.transpose();
        err = err.max((&sp.f - &expect).amax());
        assert!(sp.f.column(kk).amax() < 1e-12);
    }
    err
}

#[test]
fn single_base_normal_reduces_to_hypersurface_stress() {
    let (e1, e2) = (hypersurface_stress_error(32), hypersurface_stress_error(64));
    assert!(e2 < 5e-6, "{e2:e}");
    assert!((e1 / e2).log2() > 3.5, "{e1:e} {e2:e}");
}
