//! Scenario configuration and the scenario catalog.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::background::KKBackground;
use crate::dynamics::{
    initial_data_from_movers, EvolutionState, HarmonicComponent, HarmonicMover, InitialCheck, Integrator,
};
use crate::error::{Error, Result};
use crate::grid::WorldvolumeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Static straight string along x¹.
    FlatSheet,
    /// a = b = unit circle; collapses at τ = π/2.
    CircularLoop,
    /// φ carried by the left mover only.
    ChiralLoop,
    /// φ in both movers, the control for the chirality monitor.
    NonchiralLoop,
    /// Static random loop with zero velocity; violates the equations of motion.
    Random,
    /// Movers taken from the config.
    Custom,
}

impl ScenarioKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::FlatSheet => "flat_sheet",
            Self::CircularLoop => "circular_loop",
            Self::ChiralLoop => "chiral_loop",
            Self::NonchiralLoop => "nonchiral_loop",
            Self::Random => "random",
            Self::Custom => "custom",
        }
    }

    /// Default evolution time: one period, or less for loops released from
    /// rest, which collapse near τ = π/2.
    pub fn default_duration(self) -> f64 {
        match self {
            Self::CircularLoop => 1.0,
            Self::Random => 0.5,
            _ => TAU,
        }
    }

    /// Whether the initial data solve the equations of motion.
    pub fn on_shell(self) -> bool {
        self != Self::Random
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoverPair {
    pub a: HarmonicMover,
    pub b: HarmonicMover,
}

fn default_n() -> usize {
    256
}

fn one() -> f64 {
    1.0
}

fn default_base_dim() -> usize {
    4
}

fn default_cadence() -> u64 {
    256
}

fn default_alpha() -> f64 {
    0.1
}

/// A scenario as read from JSON. `parse_config` fills every optional field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Defaults to a quarter of the grid spacing.
    #[serde(default)]
    pub dtau: Option<f64>,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(default = "one")]
    pub g44: f64,
    /// Base spacetime dimension including time.
    #[serde(default = "default_base_dim")]
    pub base_dim: usize,
    #[serde(default)]
    pub tau0: f64,
    /// Defaults to the scenario's duration over Δτ, rounded.
    #[serde(default)]
    pub steps: Option<u64>,
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub seed: u64,
    /// Coupling of the curvature-quadratic density used by the multiplier checks.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub movers: Option<MoverPair>,
}

impl ScenarioConfig {
    /// A config with every default applied.
    pub fn new(scenario: ScenarioKind) -> Result<Self> {
        let raw = serde_json::json!({ "scenario": scenario });
        Self::from_value(raw)
    }

    fn from_value(v: serde_json::Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolved()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn background(&self) -> Result<KKBackground> {
        KKBackground::new(self.base_dim, self.g44)
    }

    pub fn grid(&self) -> Result<WorldvolumeGrid> {
        WorldvolumeGrid::line(self.n)
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn dtau(&self) -> f64 {
        self.dtau.unwrap_or(0.25 * self.spacing())
    }

    pub fn steps(&self) -> u64 {
        self.steps
            .unwrap_or_else(|| (self.scenario.default_duration() / self.dtau()).round() as u64)
    }

    /// Validate and fill defaults.
    pub fn resolved(mut self) -> Result<Self> {
        let bg = self.background()?;
        self.grid()?;
        if !(self.mu0.is_finite() && self.mu0 > 0.0) {
            return Err(Error::Config(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be finite".into()));
        }
        let dt = self.dtau();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dtau must be positive, got {dt}")));
        }
        if dt > 0.5 * self.spacing() * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                dtau: dt,
                limit: 0.5 * self.spacing(),
            });
        }
        self.dtau = Some(dt);
        self.steps = Some(self.steps());
        if self.movers.is_none() {
            self.movers = catalog_movers(self.scenario, &bg)?;
        }
        if self.scenario == ScenarioKind::Custom && self.movers.is_none() {
            return Err(Error::Config("scenario 'custom' needs movers".into()));
        }
        if self.scenario == ScenarioKind::Random && self.movers.is_some() {
            return Err(Error::Config("scenario 'random' takes no movers".into()));
        }
        Ok(self)
    }

    /// Initial state, plus the analytic checks for mover scenarios.
    pub fn initial_state(&self) -> Result<(EvolutionState, Option<InitialCheck>)> {
        let bg = self.background()?;
        let grid = self.grid()?;
        match &self.movers {
            Some(m) => {
                let (s, chk) = initial_data_from_movers(grid, bg, &m.a, &m.b, self.tau0)?;
                Ok((s, Some(chk)))
            }
            None => Ok((random_state(grid, bg, self.tau0, self.seed)?, None)),
        }
    }
}

/// Read, validate and default a JSON scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

fn circle(nc: usize, i: usize, j: usize, tilt: Option<(usize, f64)>) -> HarmonicMover {
    let mut comps = vec![HarmonicComponent::default(); nc];
    comps[i] = HarmonicComponent::harmonic(1, 1.0, 0.0);
    match tilt {
        None => comps[j] = HarmonicComponent::harmonic(1, 0.0, 1.0),
        Some((k, s)) => {
            comps[j] = HarmonicComponent::harmonic(1, 0.0, (1.0 - s * s).sqrt());
            comps[k] = HarmonicComponent::harmonic(1, 0.0, s);
        }
    }
    HarmonicMover::new(comps)
}

/// Movers of the catalog scenarios. Component `i` of a mover is spacetime
/// index `i + 1`; the last one is φ.
pub fn catalog_movers(kind: ScenarioKind, bg: &KKBackground) -> Result<Option<MoverPair>> {
    let nc = bg.total_dim() - 1;
    let phi = nc - 1;
    let need = |spatial: usize| {
        if bg.base_dim() - 1 < spatial {
            Err(Error::Config(format!(
                "scenario '{}' needs {spatial} spatial dimensions",
                kind.id()
            )))
        } else {
            Ok(())
        }
    };
    Ok(match kind {
        ScenarioKind::FlatSheet => {
            need(1)?;
            let mut comps = vec![HarmonicComponent::default(); nc];
            comps[0] = HarmonicComponent::linear(1.0);
            let a = HarmonicMover::new(comps);
            Some(MoverPair { a: a.clone(), b: a })
        }
        ScenarioKind::CircularLoop => {
            need(2)?;
            let a = circle(nc, 0, 1, None);
            Some(MoverPair { a: a.clone(), b: a })
        }
        ScenarioKind::ChiralLoop => {
            need(3)?;
            Some(MoverPair {
                a: circle(nc, 0, phi, None),
                b: circle(nc, 1, 2, None),
            })
        }
        ScenarioKind::NonchiralLoop => {
            need(3)?;
            Some(MoverPair {
                a: circle(nc, 0, phi, None),
                b: circle(nc, 1, 2, Some((phi, 0.5))),
            })
        }
        ScenarioKind::Random | ScenarioKind::Custom => None,
    })
}

/// A smooth random loop at rest: X = (τ, cos σ + δ¹, sin σ + δ², δ³, …).
pub fn random_state(grid: WorldvolumeGrid, bg: KKBackground, tau0: f64, seed: u64) -> Result<EvolutionState> {
    if grid.spatial_dim() != 1 || bg.base_dim() < 3 {
        return Err(Error::Config(
            "random loops need a string in at least 2+1 dimensions".into(),
        ));
    }
    let n = bg.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<Vec<(f64, f64)>> = (1..n)
        .map(|_| {
            (1..=3)
                .map(|_| (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
                .collect()
        })
        .collect();
    EvolutionState::from_fn(grid, bg, tau0, None, |xi| {
        let s = xi[0];
        let mut x = vec![tau0, s.cos(), s.sin()];
        x.resize(n, 0.0);
        for (mu, m) in modes.iter().enumerate() {
            for (k, (c, d)) in m.iter().enumerate() {
                let kf = (k + 1) as f64;
                x[mu + 1] += c * (kf * s).cos() + d * (kf * s).sin();
            }
        }
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        (x, v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let cfg = ScenarioConfig::from_json(r#"{"scenario": "chiral_loop"}"#).unwrap();
        assert_eq!(cfg.n, 256);
        assert_eq!(cfg.mu0, 1.0);
        assert_eq!(cfg.g44, 1.0);
        assert_eq!(cfg.dtau, Some(0.25 * TAU / 256.0));
        assert_eq!(cfg.steps, Some(1024));
        assert!(cfg.movers.is_some());
        assert_eq!(cfg.integrator, Integrator::Yoshida4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let err = ScenarioConfig::from_json(r#"{"scenario": "chiral_loop", "g44": -1.0}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidBackground(_)), "{err}");
        let err = ScenarioConfig::from_json(r#"{"scenario": "chiral_loop", "nn": 3}"#).unwrap_err();
        assert!(err.to_string().contains("nn"), "{err}");
        assert!(ScenarioConfig::from_json(r#"{"scenario": "torus"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scenario": "custom"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scenario": "flat_sheet", "dtau": 0.1, "n": 64}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scenario": "chiral_loop", "base_dim": 3}"#).is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{
            "scenario": "custom", "n": 64, "seed": 3,
            "movers": {
                "a": {"components": [{"cos": [1.0, 0.2]}, {"sin": [1.0]}, {}, {"cos": [0.0, 0.3]}]},
                "b": {"components": [{"sin": [0.5]}, {"cos": [1.0]}, {"slope": 0.2}, {}]}
            }
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        let again = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let (_, chk) = cfg.initial_state().unwrap();
        assert!(chk.unwrap().mover_deviation <= 1e-10);
    }

    #[test]
    fn unnormalized_config_movers_are_rejected() {
        let text = r#"{"scenario": "custom", "n": 32, "movers": {
            "a": {"components": [{"cos": [2.0]}, {"sin": [2.0]}, {}, {}], "normalize": false},
            "b": {"components": [{"cos": [1.0]}, {"sin": [1.0]}, {}, {}], "normalize": false}
        }}"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert!(matches!(
            cfg.initial_state(),
            Err(Error::MoverNotNormalized { .. })
        ));
    }

    #[test]
    fn catalog_scenarios_build() {
        for kind in [
            ScenarioKind::FlatSheet,
            ScenarioKind::CircularLoop,
            ScenarioKind::ChiralLoop,
            ScenarioKind::NonchiralLoop,
            ScenarioKind::Random,
        ] {
            let mut cfg = ScenarioConfig::new(kind).unwrap();
            cfg.n = 32;
            let cfg = ScenarioConfig {
                dtau: None,
                steps: None,
                ..cfg
            }
            .resolved()
            .unwrap();
            let (s, chk) = cfg.initial_state().unwrap();
            assert_eq!(s.npts(), 32);
            assert_eq!(chk.is_some(), kind != ScenarioKind::Random);
        }
    }

    #[test]
    fn random_state_depends_on_seed_only() {
        let bg = KKBackground::new(4, 1.0).unwrap();
        let g = WorldvolumeGrid::line(16).unwrap();
        let a = random_state(g.clone(), bg.clone(), 0.0, 7).unwrap();
        let b = random_state(g.clone(), bg.clone(), 0.0, 7).unwrap();
        let c = random_state(g, bg, 0.0, 8).unwrap();
        assert_eq!(a.x, b.x);
        assert_ne!(a.x, c.x);
    }
}
