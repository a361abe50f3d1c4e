//! Unit-speed closed curves a(u), b(v) for conformal-gauge string solutions.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::background::KKBackground;
use crate::error::{Error, Result};

/// Largest tolerated deviation of a mover from unit speed.
pub const MOVER_TOL: f64 = 1e-10;

const PANELS: usize = 256;

// 8-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// One component of a mover: slope·t + Σ_k (cos_k cos kt + sin_k sin kt).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicComponent {
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl HarmonicComponent {
    pub fn harmonic(k: usize, cos: f64, sin: f64) -> Self {
        let mut c = vec![0.0; k];
        let mut s = vec![0.0; k];
        c[k - 1] = cos;
        s[k - 1] = sin;
        Self {
            slope: 0.0,
            cos: c,
            sin: s,
        }
    }

    pub fn linear(slope: f64) -> Self {
        Self {
            slope,
            ..Self::default()
        }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let mut x = self.slope * t;
        let mut dx = self.slope;
        for (k, (c, s)) in self.cos.iter().zip(pad(&self.sin, self.cos.len())).enumerate() {
            let kf = (k + 1) as f64;
            let (sn, cs) = (kf * t).sin_cos();
            x += c * cs + s * sn;
            dx += kf * (s * cs - c * sn);
        }
        for (k, s) in self.sin.iter().enumerate().skip(self.cos.len()) {
            let kf = (k + 1) as f64;
            let (sn, cs) = (kf * t).sin_cos();
            x += s * sn;
            dx += kf * s * cs;
        }
        (x, dx)
    }
}

fn pad(v: &[f64], n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |i| v.get(i).copied().unwrap_or(0.0))
}

/// A mover for every spatial and KK component (the time component is implied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicMover {
    pub components: Vec<HarmonicComponent>,
    /// Reparametrize by arc length so that |a′| = 1.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

impl HarmonicMover {
    pub fn new(components: Vec<HarmonicComponent>) -> Self {
        Self {
            components,
            normalize: true,
        }
    }
}

/// A mover ready for evaluation at any u.
#[derive(Clone, Debug)]
pub struct MoverCurve {
    raw: HarmonicMover,
    weights: Vec<f64>,
    /// 2π / L, the rescaling that makes the period 2π.
    scale: f64,
    /// Arc length at panel starts, one entry per panel plus the total.
    cumulative: Vec<f64>,
    deviation: f64,
}

impl MoverCurve {
    pub fn build(mover: &HarmonicMover, bg: &KKBackground) -> Result<Self> {
        let nc = bg.total_dim() - 1;
        if mover.components.len() != nc {
            return Err(Error::Config(format!(
                "mover has {} components, background needs {nc}",
                mover.components.len()
            )));
        }
        let weights: Vec<f64> = (1..=nc).map(|mu| bg.metric(mu)).collect();
        let mut curve = Self {
            raw: mover.clone(),
            weights,
            scale: 1.0,
            cumulative: Vec::new(),
            deviation: 0.0,
        };
        if mover.normalize {
            let width = TAU / PANELS as f64;
            let mut acc = vec![0.0];
            for j in 0..PANELS {
                let a = j as f64 * width;
                let l = curve.raw_length(a, a + width);
                acc.push(acc[j] + l);
            }
            let total = acc[PANELS];
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::Config("mover has zero length".into()));
            }
            curve.cumulative = acc;
            curve.scale = TAU / total;
            // the inversion must be accurate for positions to match the unit tangent
            let mut dev: f64 = 0.0;
            for j in 0..64 {
                let u = TAU * j as f64 / 64.0;
                let t = curve.invert(u)?;
                dev = dev.max((curve.scale * curve.arc_length(t) - u).abs());
            }
            curve.deviation = dev;
        } else {
            let mut dev: f64 = 0.0;
            for j in 0..1024 {
                let t = TAU * j as f64 / 1024.0;
                dev = dev.max((curve.speed(t) - 1.0).abs());
            }
            curve.deviation = dev;
        }
        Ok(curve)
    }

    /// Max deviation from unit speed (or from exact arc-length inversion).
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn raw_eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        self.raw.components.iter().map(|c| c.eval(t)).unzip()
    }

    fn speed(&self, t: f64) -> f64 {
        let (_, d) = self.raw_eval(t);
        d.iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn raw_length(&self, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W) {
            s += w * (self.speed(mid + half * x) + self.speed(mid - half * x));
        }
        s * half
    }

    /// Raw arc length from 0 to t ∈ [0, 2π].
    fn arc_length(&self, t: f64) -> f64 {
        let width = TAU / PANELS as f64;
        let j = ((t / width).floor() as usize).min(PANELS - 1);
        let a = j as f64 * width;
        self.cumulative[j] + self.raw_length(a, t)
    }

    /// Raw parameter t with scale·s(t) = u, for u ∈ [0, 2π).
    fn invert(&self, u: f64) -> Result<f64> {
        let target = u / self.scale;
        let mut t = u;
        for _ in 0..60 {
            let f = self.arc_length(t) - target;
            let step = f / self.speed(t);
            t = (t - step).clamp(0.0, TAU);
            if step.abs() < 1e-15 {
                return Ok(t);
            }
        }
        if (self.arc_length(t) - target).abs() * self.scale < 1e-13 {
            return Ok(t);
        }
        Err(Error::MoverNotNormalized {
            name: "arc-length inversion",
            deviation: (self.arc_length(t) - target).abs() * self.scale,
        })
    }

    /// Position and unit tangent at u.
    pub fn eval(&self, u: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.raw.normalize {
            return Ok(self.raw_eval(u));
        }
        let turns = (u / TAU).floor();
        let r = u - turns * TAU;
        let t = self.invert(r)?;
        let (mut x, d) = self.raw_eval(t);
        let speed = self.speed(t);
        for (xi, c) in x.iter_mut().zip(&self.raw.components) {
            *xi = self.scale * (*xi + c.slope * turns * TAU);
        }
        Ok((x, d.iter().map(|v| v / speed).collect()))
    }

    /// Per-period increment of every component.
    pub fn winding(&self) -> Vec<f64> {
        self.raw
            .components
            .iter()
            .map(|c| self.scale * c.slope * TAU)
            .collect()
    }
}
