//! Shipped experiment configurations.

use std::path::PathBuf;

use crate::config::{
    ConfigError, ExperimentConfig, Grids, Horizons, MapConfig, ModeConfig, PsiTerm, SkewConfig,
    Stages, Tolerances,
};

pub const NAMES: [&str; 6] = [
    "cat-linear",
    "cat-perturbed-generic",
    "theoremB-desk",
    "dim2",
    "dim3-companion",
    "skew-slow-fiber",
];

const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

fn rows<const N: usize>(m: [[i64; N]; N]) -> Vec<Vec<i64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

fn base(name: &str, matrix: Vec<Vec<i64>>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 7,
        out: PathBuf::from("out").join(name),
        map: MapConfig {
            matrix,
            epsilon: 0.0,
            modes: Vec::new(),
            skew: None,
        },
        stages: Stages::all(),
        tolerances: Tolerances {
            tau_reg: 5e-3,
            tau_pd: 1e-4,
            tau_obs: 1e-6,
            series_tail: 1e-10,
        },
        horizons: Horizons {
            field_n: 200,
            t_max: 5,
            cutoff: 0,
            propagation_steps: 200,
            telescoping_n: 50,
            uniform: vec![10, 100, 1000],
            n_max: 8,
            separated_n: 10,
        },
        grids: Grids {
            field: 24,
            conjugacy: 64,
            regularity_log2: 16,
            check_points: 10,
            leaf_pairs: 20,
            segment_delta: 0.01,
            separated_eps: vec![0.1, 0.05],
        },
    }
}

fn skew_preset(name: &str, n: u32, m: u32, epsilon: f64) -> ExperimentConfig {
    let mut c = base(name, Vec::new());
    c.map.epsilon = epsilon;
    c.map.skew = Some(SkewConfig {
        a: rows(CAT),
        b: rows(CAT),
        n,
        m,
        psi: vec![PsiTerm {
            k: vec![1, 0],
            amplitude: 1.0,
            phase: 0.0,
        }],
    });
    c.tolerances.tau_pd = 1e-6;
    c.horizons.t_max = 2;
    c.horizons.propagation_steps = 100;
    c.horizons.n_max = 6;
    c.horizons.separated_n = 0;
    c.grids.field = 12;
    c.grids.segment_delta = 0.05;
    c
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = match name {
        "cat-linear" => {
            let mut c = base(name, rows(CAT));
            c.horizons.n_max = 12;
            c.horizons.separated_n = 12;
            c
        }
        "cat-perturbed-generic" => {
            let mut c = base(name, rows(CAT));
            c.map.epsilon = 0.05;
            c.map.modes = vec![ModeConfig {
                k: vec![1, 0],
                c: vec![0.0, 1.0],
                phase: 0.0,
            }];
            c
        }
        // The (n, m) = (1, 2) instance as stated for the non-Lipschitz family.
        "theoremB-desk" => skew_preset(name, 1, 2, 0.01),
        // n > m, where η is measurably rough (exponent 1/3).
        "skew-slow-fiber" => skew_preset(name, 3, 1, 0.005),
        "dim2" => {
            let mut c = base(name, rows([[3, 1], [2, 1]]));
            c.map.epsilon = 0.01;
            c.map.modes = vec![ModeConfig {
                k: vec![1, 1],
                c: vec![1.0, -0.5],
                phase: 0.3,
            }];
            // Expansion 3.73 makes long leaf iterations costly.
            c.horizons.n_max = 6;
            c.horizons.separated_n = 6;
            c
        }
        "dim3-companion" => {
            // Companion of x³ − 3x² + 1.
            let mut c = base(name, rows([[0, 1, 0], [0, 0, 1], [-1, 0, 3]]));
            c.map.epsilon = 0.005;
            c.map.modes = vec![ModeConfig {
                k: vec![1, 0, 0],
                c: vec![0.0, 0.0, 1.0],
                phase: 0.0,
            }];
            c.horizons.t_max = 4;
            c.horizons.n_max = 6;
            c.horizons.separated_n = 0;
            c.grids.field = 16;
            c.grids.conjugacy = 32;
            c
        }
        _ => return Err(ConfigError::UnknownPreset(name.into())),
    };
    Ok(cfg)
}
