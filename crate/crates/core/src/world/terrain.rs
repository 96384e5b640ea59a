use serde::{Deserialize, Serialize};

use super::{TerrainParams, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    RampUp,
    RampDown,
    Rough,
    StairDescent,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 5] = [
        TerrainKind::Flat,
        TerrainKind::RampUp,
        TerrainKind::RampDown,
        TerrainKind::Rough,
        TerrainKind::StairDescent,
    ];

    /// Row of this kind in per-terrain reports.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Flat => "flat",
            TerrainKind::RampUp => "ramp_up",
            TerrainKind::RampDown => "ramp_down",
            TerrainKind::Rough => "rough",
            TerrainKind::StairDescent => "stair_descent",
        }
    }
}

/// Physical parameters of one zone at a given difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainZone {
    pub kind: TerrainKind,
    pub x_min: f64,
    pub x_max: f64,
    /// Gravity-induced ball acceleration (m/s^2).
    pub slope: [f64; 2],
    /// Velocity noise intensity (m/s per sqrt(s)).
    pub roughness: f64,
    /// Linear ball friction (1/s).
    pub friction: f64,
    pub stair_period: f64,
    /// Stair height (m); zero outside stair zones.
    pub stair_drop: f64,
}

impl TerrainZone {
    pub fn new(kind: TerrainKind, x_min: f64, x_max: f64, p: &TerrainParams, difficulty: usize) -> Self {
        let t = difficulty as f64;
        let mut z = TerrainZone {
            kind,
            x_min,
            x_max,
            slope: [0.0, 0.0],
            roughness: 0.0,
            friction: p.base_friction,
            stair_period: p.stair_period,
            stair_drop: 0.0,
        };
        match kind {
            TerrainKind::Flat => {}
            TerrainKind::RampUp => z.slope = [-p.ramp_accel * t, 0.0],
            TerrainKind::RampDown => z.slope = [p.ramp_accel * t, 0.0],
            TerrainKind::Rough => {
                z.roughness = p.rough_sigma * t;
                z.friction += p.rough_friction * t;
            }
            TerrainKind::StairDescent => z.stair_drop = p.stair_drop * t,
        }
        z
    }

    /// Index of the stair tread containing `x`.
    pub fn stair_index(&self, x: f64) -> i64 {
        ((x - self.x_min) / self.stair_period).floor() as i64
    }
}

/// Zone index containing `x`, clamped to the layout.
pub fn zone_index(config: &WorldConfig, x: f64) -> usize {
    let i = (x / config.zone_length).floor();
    (i.max(0.0) as usize).min(config.layout.len() - 1)
}

pub fn zone_at(config: &WorldConfig, difficulty: usize, x: f64) -> TerrainZone {
    zone_by_index(config, difficulty, zone_index(config, x))
}

pub fn zone_by_index(config: &WorldConfig, difficulty: usize, i: usize) -> TerrainZone {
    let x_min = i as f64 * config.zone_length;
    TerrainZone::new(
        config.layout[i],
        x_min,
        x_min + config.zone_length,
        &config.terrain,
        difficulty,
    )
}
