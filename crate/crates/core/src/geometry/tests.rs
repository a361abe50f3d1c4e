use super::*;
use crate::embedding::ExtendedEmbedding;
use crate::grid::WorldvolumeGrid;

fn sphere_patch(n: usize, r: f64) -> (WorldvolumePatch, KKBackground) {
    let bg = KKBackground::euclidean(3, 1.0).unwrap();
    let grid = WorldvolumeGrid::new(&[n, n]).unwrap();
    let emb = ExtendedEmbedding::from_fn(&grid, 4, None, |xi| {
        let th = xi[0] + 0.1;
        let ph = xi[1];
        vec![
            r * th.sin() * ph.cos(),
            r * th.sin() * ph.sin(),
            r * th.cos(),
            0.0,
        ]
    })
    .unwrap();
    (WorldvolumePatch::riemannian(grid, emb), bg)
}

#[test]
fn sphere_mean_curvature() {
    let r = 1.7;
    let (patch, bg) = sphere_patch(64, r);
    let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
    let mut checked = 0;
    for (p, f) in ff.frames(0).unwrap().iter().enumerate() {
        let th = patch.grid().coords(p)[0] + 0.1;
        if th.sin().abs() < 0.3 {
            continue;
        }
        let x = patch.slices[0].point(p);
        let xhat: Vec<f64> = x.iter().map(|v| v / r).collect();
        let (best, align) = (0..f.codim())
            .map(|i| {
                (
                    i,
                    bg.dot(
                        f.normals.row(i).iter().copied().collect::<Vec<_>>().as_slice(),
                        &xhat,
                    ),
                )
            })
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let tr = f.mean_curvature();
        assert!((tr[best] * align.signum() - 2.0 / r).abs() < 1e-4, "{}", tr[best]);
        for i in (0..f.codim()).filter(|&i| i != best) {
            assert!(tr[i].abs() < 1e-8);
        }
        checked += 1;
    }
    assert!(checked > 1000);
}

fn torus_patch(n: usize, bg: &KKBackground) -> WorldvolumePatch {
    let grid = WorldvolumeGrid::new(&[n, n]).unwrap();
    let emb = ExtendedEmbedding::from_fn(&grid, bg.total_dim(), None, |xi| {
        let (u, v) = (xi[0], xi[1]);
        let rr = 2.0 + 0.7 * v.cos();
        let mut x = vec![rr * u.cos(), rr * u.sin(), 0.7 * v.sin()];
        x.resize(bg.total_dim() - 1, 0.0);
        x.push(0.3 * (u + 2.0 * v).sin());
        x
    })
    .unwrap();
    WorldvolumePatch::riemannian(grid, emb)
}

#[test]
fn torus_frame_axioms_and_curvature() {
    let bg = KKBackground::euclidean(3, 1.0).unwrap();
    let grid = WorldvolumeGrid::new(&[64, 64]).unwrap();
    let emb = ExtendedEmbedding::from_fn(&grid, 4, None, |xi| {
        let (u, v) = (xi[0], xi[1]);
        let rr = 2.0 + 0.7 * v.cos();
        vec![rr * u.cos(), rr * u.sin(), 0.7 * v.sin(), 0.0]
    })
    .unwrap();
    let patch = WorldvolumePatch::riemannian(grid.clone(), emb);
    let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
    let (o, u) = ff.frame_axiom_residual(0).unwrap();
    assert!(o < 1e-10 && u < 1e-10);
    for (p, f) in ff.frames(0).unwrap().iter().enumerate() {
        let c = grid.coords(p);
        let v = c[1];
        let expect = (2.0 + 2.0 * 0.7 * v.cos()) / (0.7 * (2.0 + 0.7 * v.cos()));
        let tr = f.mean_curvature();
        let best = (0..2)
            .max_by(|&a, &b| tr[a].abs().total_cmp(&tr[b].abs()))
            .unwrap();
        assert!((tr[best].abs() - expect.abs()).abs() < 1e-4);
    }
}

#[test]
fn gauss_weingarten_converges() {
    let bg = KKBackground::euclidean(4, 1.3).unwrap();
    let mut errs = Vec::new();
    for n in [32, 64, 128] {
        let ff = FrameField::build(&torus_patch(n, &bg), &bg, Tolerances::default()).unwrap();
        let (rt, rn) = ff.gauss_weingarten_residual(0).unwrap();
        errs.push(rt.max(rn));
    }
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
    }
}

#[test]
fn helix_twist_rate() {
    let bg = KKBackground::euclidean(4, 1.0).unwrap();
    let n = 256;
    let grid = WorldvolumeGrid::line(n).unwrap();
    let q = 3.0;
    let frames: Vec<DMatrix<f64>> = (0..n)
        .map(|p| {
            let s = grid.coords(p)[0];
            DMatrix::from_row_slice(
                4,
                5,
                &[
                    s.cos(),
                    s.sin(),
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    (q * s).cos(),
                    (q * s).sin(),
                    0.0,
                    0.0,
                    0.0,
                    -(q * s).sin(),
                    (q * s).cos(),
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                ],
            )
        })
        .collect();
    let lay = Layout::riemannian(grid);
    let w = twist_potential(&lay, &frames, &bg).unwrap();
    for per_point in &w {
        let om = &per_point[0];
        assert!((om[(1, 2)] - q).abs() < 1e-5);
        assert!((om[(2, 1)] + q).abs() < 1e-5);
        assert!(om[(0, 1)].abs() < 1e-12 && om[(0, 3)].abs() < 1e-12);
    }
}

#[test]
fn aligned_twist_vanishes_at_centre_for_flat_normal_bundle() {
    // a plane curve has a flat normal bundle; in the aligned gauge ω ≈ 0
    let bg = KKBackground::euclidean(3, 1.0).unwrap();
    let grid = WorldvolumeGrid::line(64).unwrap();
    let emb = ExtendedEmbedding::from_fn(&grid, 4, None, |xi| {
        vec![xi[0].cos(), 2.0 * xi[0].sin(), 0.0, 0.0]
    })
    .unwrap();
    let ff = FrameField::build(
        &WorldvolumePatch::riemannian(grid, emb),
        &bg,
        Tolerances::default(),
    )
    .unwrap();
    for c in ff.connection(0).unwrap() {
        assert!(c.twist[0].amax() < 1e-6);
    }
}

#[test]
fn flat_timelike_string() {
    let bg = KKBackground::new(4, 1.0).unwrap();
    let grid = WorldvolumeGrid::line(16).unwrap();
    let tau = std::f64::consts::TAU;
    let patch = WorldvolumePatch::from_fn(
        grid,
        &bg,
        0.0,
        0.1,
        2,
        Some(vec![vec![0.0, tau, 0.0, 0.0, 0.0]]),
        |t, xi| vec![t, xi[0], 0.0, 0.0, 0.0],
    )
    .unwrap();
    let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
    assert!(!ff.has_frames(0) && ff.has_frames(1) && ff.has_connection(2));
    assert!(!ff.has_connection(1));
    let f = ff.frame(2, 3).unwrap();
    assert!((f.metric.det + 1.0).abs() < 1e-12);
    assert!(f.curvature.iter().all(|k| k.amax() < 1e-12));
    // ϖ = 0 so the ansatz is the first unit normal: (0, 0, 0, 0, -1)
    assert!((f.normals[(0, 4)] + 1.0).abs() < 1e-12);
    assert!(matches!(ff.connection(1), Err(Error::InsufficientHistory(_))));
}

#[test]
fn spacelike_direction_is_rejected() {
    let bg = KKBackground::new(4, 1.0).unwrap();
    let grid = WorldvolumeGrid::line(16).unwrap();
    // τ moves along x: both tangents spacelike
    let patch = WorldvolumePatch::from_fn(grid, &bg, 0.0, 0.1, 1, None, |t, xi| {
        vec![0.0, t, xi[0].sin(), xi[0].cos(), 0.0]
    })
    .unwrap();
    let err = FrameField::build(&patch, &bg, Tolerances::default()).unwrap_err();
    assert!(matches!(err, Error::NotTimelike { .. }));
}

#[test]
fn determinant_identity_for_varpi() {
    let bg = KKBackground::new(4, 2.0).unwrap();
    let grid = WorldvolumeGrid::line(32).unwrap();
    let patch = WorldvolumePatch::from_fn(grid, &bg, 0.0, 0.05, 1, None, |t, xi| {
        let s = xi[0];
        vec![t, 3.0 * s.cos(), 3.0 * s.sin(), 0.2 * t, 0.4 * (s + t).sin()]
    })
    .unwrap();
    let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
    for f in ff.frames(1).unwrap() {
        let m = &f.metric;
        assert!((m.varpi - m.varpi_from_det).abs() < 1e-10 * (1.0 + m.varpi.abs()));
    }
}

#[test]
fn tilde_derivative_matches_weingarten() {
    // ∇̃_a (V·n^I) = K_a^{bI} V·e_b for a constant background vector V
    let mut errs = Vec::new();
    let bg = KKBackground::euclidean(4, 1.0).unwrap();
    for n in [48, 96] {
        let patch = torus_patch(n, &bg);
        let ff = FrameField::build(&patch, &bg, Tolerances::default()).unwrap();
        let frames = ff.frames(0).unwrap().to_vec();
        let v = [0.3, -0.2, 0.5, 0.1, 0.0];
        let field = |_s: usize, q: usize| {
            DMatrix::from_iterator(
                3,
                1,
                (0..3).map(|i| {
                    let ni: Vec<f64> = frames[q].normals.row(i).iter().copied().collect();
                    bg.dot(&ni, &v)
                }),
            )
        };
        let mut worst: f64 = 0.0;
        for p in 0..ff.npts() {
            for a in 0..2 {
                let d = ff.tilde_covariant_derivative(0, p, a, 1, field).unwrap();
                let f = &frames[p];
                for i in 0..3 {
                    let mut expect = 0.0;
                    for b in 0..2 {
                        let kab: f64 = (0..2)
                            .map(|c| f.metric.metric_inv[(b, c)] * f.curvature[i][(a, c)])
                            .sum();
                        let eb: Vec<f64> = f.metric.tangents.row(b).iter().copied().collect();
                        expect += kab * bg.dot(&eb, &v);
                    }
                    worst = worst.max((d[(i, 0)] - expect).abs());
                }
            }
        }
        errs.push(worst);
    }
    assert!(errs[1] < 1e-3 && (errs[0] / errs[1]).log2() > 3.0, "{errs:?}");
}

#[test]
fn polar_factor_is_accurate_near_identity() {
    // nearly equal singular values
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 1e-3, 2e-6, -1e-3, 1.0, 3e-7, 1e-6, 0.0, 0.999_999]);
    let r = polar_factor(a.clone());
    assert!((r.transpose() * &r - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    let p = r.transpose() * &a;
    assert!((&p - p.transpose()).amax() < 1e-14);
    // reflections survive
    let refl = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((polar_factor(refl.clone()) - refl).amax() < 1e-15);
}
