use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::presets;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown preset {0:?} (known: {known})", known = presets::NAMES.join(", "))]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// `c · cos(2π⟨k, x⟩ + phase)` as a displacement mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub k: Vec<i64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// `amplitude · cos(2π⟨k, x⟩ + phase)` as a term of ψ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiTerm {
    pub k: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `(x, y) ↦ (Aⁿx, Bᵐy + ε·ψ(x)·e_u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewConfig {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<Vec<i64>>,
    pub n: u32,
    pub m: u32,
    pub psi: Vec<PsiTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// `L` for a generic perturbation; ignored when `skew` is set.
    #[serde(default)]
    pub matrix: Vec<Vec<i64>>,
    pub epsilon: f64,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
    pub skew: Option<SkewConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stages {
    pub linear: bool,
    pub field: bool,
    pub periodic: bool,
    pub livsic: bool,
    pub conjugacy: bool,
    pub regularity: bool,
    pub entropy: bool,
}

impl Stages {
    pub fn all() -> Self {
        Self {
            linear: true,
            field: true,
            periodic: true,
            livsic: true,
            conjugacy: true,
            regularity: true,
            entropy: true,
        }
    }

    /// Only `name`, without prerequisites (the runner gates on those).
    pub fn only(name: &str) -> Option<Self> {
        let mut s = Self {
            linear: false,
            field: false,
            periodic: false,
            livsic: false,
            conjugacy: false,
            regularity: false,
            entropy: false,
        };
        match name {
            "linear" => s.linear = true,
            "field" => s.field = true,
            "periodic" => s.periodic = true,
            "livsic" => s.livsic = true,
            "conjugacy" => s.conjugacy = true,
            "regularity" => s.regularity = true,
            "entropy" => s.entropy = true,
            _ => return None,
        }
        Some(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub tau_reg: f64,
    pub tau_pd: f64,
    pub tau_obs: f64,
    /// Tail rule of the conjugacy series.
    pub series_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    /// QR horizon N of the exponent field.
    pub field_n: usize,
    /// Largest period T_max of continued orbits.
    pub t_max: u32,
    /// Fourier cutoff K; 0 picks the dimension default.
    pub cutoff: usize,
    /// Steps of the orbit propagation check of the transfer function.
    pub propagation_steps: usize,
    /// Horizon of the telescoping identity.
    pub telescoping_n: usize,
    /// Horizons of the uniform convergence check.
    pub uniform: Vec<usize>,
    /// Iterates of the volume growth curve.
    pub n_max: usize,
    /// Horizon of the separated-set count; 0 skips it.
    pub separated_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Points per axis of the exponent field (two axes when d > 2).
    pub field: usize,
    /// Points per axis of the conjugacy grid; 0 skips the grid.
    pub conjugacy: usize,
    /// log2 of the sample count along the regularity line.
    pub regularity_log2: u32,
    /// Random points for the telescoping and convergence checks.
    pub check_points: usize,
    /// Leaf pairs of the multiplicativity check.
    pub leaf_pairs: usize,
    /// Half-length δ of the entropy segment.
    pub segment_delta: f64,
    pub separated_eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Output directory; the command line may override it.
    pub out: PathBuf,
    pub map: MapConfig,
    pub stages: Stages,
    pub tolerances: Tolerances,
    pub horizons: Horizons,
    pub grids: Grids,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Parses a config file. A top-level `preset` key starts from that preset
    /// and overlays the remaining keys; without it `cat-linear` is the base.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut over: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let preset = match over.remove("preset") {
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err(ConfigError::Parse("`preset` must be a string".into())),
            None => "cat-linear".into(),
        };
        Self::overlay(&preset, toml::Value::Table(over))
    }

    fn overlay(preset: &str, over: toml::Value) -> Result<Self, ConfigError> {
        let base = presets::preset(preset)?;
        let mut value = toml::Value::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut value, over);
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The fully materialized config, as written next to the outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let t = &self.tolerances;
        for (name, v) in [
            ("tau_reg", t.tau_reg),
            ("tau_pd", t.tau_pd),
            ("tau_obs", t.tau_obs),
            ("series_tail", t.series_tail),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if !(self.map.epsilon >= 0.0 && self.map.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.map.epsilon));
        }
        match &self.map.skew {
            Some(s) => {
                for (name, m) in [("a", &s.a), ("b", &s.b)] {
                    square(name, m)?;
                }
                if s.n == 0 || s.m == 0 {
                    return bad("skew powers n and m must be at least 1".into());
                }
                if s.psi.iter().any(|p| p.k.len() != s.a.len()) {
                    return bad("psi wave vectors must match the dimension of a".into());
                }
            }
            None => {
                square("matrix", &self.map.matrix)?;
                let d = self.map.matrix.len();
                if self.map.modes.iter().any(|m| m.k.len() != d || m.c.len() != d) {
                    return bad(format!("every mode needs k and c of length {d}"));
                }
            }
        }
        let h = &self.horizons;
        if h.field_n < 10 {
            return bad(format!("field_n must be at least 10, got {}", h.field_n));
        }
        if h.t_max == 0 || h.n_max == 0 || h.telescoping_n == 0 {
            return bad("t_max, n_max and telescoping_n must be positive".into());
        }
        let g = &self.grids;
        if g.field == 0 || g.check_points == 0 {
            return bad("grid sizes must be positive".into());
        }
        if !(10..=24).contains(&g.regularity_log2) {
            return bad(format!("regularity_log2 must be in 10..=24, got {}", g.regularity_log2));
        }
        if !(g.segment_delta > 0.0) || g.separated_eps.iter().any(|&e| !(e > 0.0)) {
            return bad("segment_delta and separated_eps must be positive".into());
        }
        Ok(())
    }
}

fn square(name: &str, m: &[Vec<i64>]) -> Result<(), ConfigError> {
    if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
        return Err(ConfigError::Invalid(format!("{name} must be a non-empty square matrix")));
    }
    toral_rigidity::IntMatrix::from_i64(m)
        .map(|_| ())
        .map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))
}
