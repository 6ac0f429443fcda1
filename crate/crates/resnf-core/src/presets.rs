//! Shipped model configurations, one per worked example: desk scale
//! (n = 21 or 22 sites, I* = 0.6, γ = 1).

use crate::model::{ModelKind, ModelSpec};

pub const PRESET_NAMES: [&str; 7] =
    ["two_site", "three_site", "zigzag", "railway", "quartic", "res_211", "res_212"];

pub const ISTAR: f64 = 0.6;

pub fn preset(name: &str) -> Option<ModelSpec> {
    let std_spec = |excited: Vec<i64>, istar: Vec<f64>, resonance: Vec<u32>| ModelSpec {
        kind: ModelKind::Standard,
        n_sites: 21,
        kappa: vec![1.0],
        gamma: 1.0,
        excited,
        istar,
        resonance,
        chart_rows: None,
    };
    let i = ISTAR;
    Some(match name {
        "two_site" => std_spec(vec![-1, 1], vec![i; 2], vec![1; 2]),
        "three_site" => std_spec(vec![-2, -1, 1], vec![i; 3], vec![1; 3]),
        "zigzag" => ModelSpec {
            kind: ModelKind::Zigzag,
            kappa: vec![1.0, 1.0],
            ..std_spec(vec![0, 1, 2, 3], vec![i; 4], vec![1; 4])
        },
        "railway" => ModelSpec {
            kind: ModelKind::Railway,
            n_sites: 22,
            kappa: vec![],
            ..std_spec(vec![-1, 0, 1, 2], vec![i; 4], vec![1; 4])
        },
        "quartic" => ModelSpec {
            kind: ModelKind::QuarticCoupling,
            kappa: vec![],
            ..std_spec(vec![-1, 0, 1], vec![i; 3], vec![1; 3])
        },
        "res_211" => std_spec(
            vec![-1, 0, 1],
            vec![i, 1.0 + 2.0 * i, 1.0 + 2.0 * i],
            vec![1, 2, 2],
        ),
        "res_212" => ModelSpec {
            chart_rows: Some(vec![vec![1, 0, 0], vec![-2, 1, 0], vec![-1, 0, 1]]),
            ..std_spec(vec![-1, 0, 1], vec![i, 1.0 + 2.0 * i, i], vec![1, 2, 1])
        },
        _ => return None,
    })
}
