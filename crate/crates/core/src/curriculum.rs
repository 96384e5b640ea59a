//! Box-adaptive curriculum over the user command c^H and terrain
//! difficulty, kept as two independent binary-weight grids.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurriculumError {
    #[error("cell size {cell} does not divide the command range [-{range}, {range}]")]
    CellSize { cell: f64, range: f64 },
    #[error("initial box and difficulty set must be non-empty and inside the grid")]
    EmptyInitialSupport,
    #[error("outcome refers to cell {cell:?} at difficulty {difficulty}, which is not unlocked")]
    LockedSource { cell: [usize; 2], difficulty: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Commands span `[-command_range, command_range]` on both axes.
    pub command_range: f64,
    pub cell_size: f64,
    /// Half-width of the initially unlocked command box.
    pub initial_box: f64,
    pub max_difficulty: usize,
    pub initial_difficulties: Vec<usize>,
    /// Mean ball-velocity-error kernel must exceed this for command success.
    pub velocity_gate: f64,
    /// Minimum ball displacement along the command direction (m).
    pub displacement_threshold: f64,
    /// Maximum final robot-ball distance (m).
    pub distance_threshold: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            command_range: 1.5,
            cell_size: 0.1,
            initial_box: 0.5,
            max_difficulty: 5,
            initial_difficulties: vec![0, 1],
            velocity_gate: 0.5,
            displacement_threshold: 3.0,
            distance_threshold: 1.0,
        }
    }
}

/// One curriculum draw for an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSample {
    pub command: [f64; 2],
    pub cell: [usize; 2],
    pub difficulty: usize,
}

/// What the curriculum gates need from a finished episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub command: [f64; 2],
    pub cell: [usize; 2],
    pub difficulty: usize,
    /// Per-step ball-velocity-error kernel values.
    pub velocity_kernels: Vec<f64>,
    pub ball_start: [f64; 2],
    pub ball_end: [f64; 2],
    pub robot_end: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub command_success: bool,
    pub terrain_success: bool,
    pub cell: [usize; 2],
    pub difficulty: usize,
}

/// Ball displacement projected on the unit command direction; zero for a
/// zero command.
pub fn displacement_along_command(trace: &EpisodeTrace) -> f64 {
    let [cx, cy] = trace.command;
    let norm = cx.hypot(cy);
    if norm < 1e-12 {
        return 0.0;
    }
    let dx = trace.ball_end[0] - trace.ball_start[0];
    let dy = trace.ball_end[1] - trace.ball_start[1];
    (dx * cx + dy * cy) / norm
}

pub fn evaluate_gates(trace: &EpisodeTrace, config: &CurriculumConfig) -> EpisodeOutcome {
    let n = trace.velocity_kernels.len();
    let mean = if n == 0 {
        0.0
    } else {
        trace.velocity_kernels.iter().sum::<f64>() / n as f64
    };
    let dist = (trace.ball_end[0] - trace.robot_end[0]).hypot(trace.ball_end[1] - trace.robot_end[1]);
    EpisodeOutcome {
        command_success: mean > config.velocity_gate,
        terrain_success: displacement_along_command(trace) > config.displacement_threshold
            && dist < config.distance_threshold,
        cell: trace.cell,
        difficulty: trace.difficulty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumGrid {
    config: CurriculumConfig,
    cells_per_axis: usize,
    /// Row-major `[ix * cells_per_axis + iy]`, x along rows.
    command: Vec<bool>,
    difficulty: Vec<bool>,
}

impl CurriculumGrid {
    pub fn new(config: CurriculumConfig) -> Result<Self, CurriculumError> {
        let span = 2.0 * config.command_range / config.cell_size;
        let n = span.round();
        if !(config.cell_size > 0.0) || (span - n).abs() > 1e-9 || n < 1.0 {
            return Err(CurriculumError::CellSize {
                cell: config.cell_size,
                range: config.command_range,
            });
        }
        let n = n as usize;
        let mut grid = Self {
            cells_per_axis: n,
            command: vec![false; n * n],
            difficulty: vec![false; config.max_difficulty + 1],
            config,
        };
        for ix in 0..n {
            for iy in 0..n {
                let [x, y] = grid.cell_center([ix, iy]);
                let b = grid.config.initial_box + 1e-9;
                if x.abs() <= b && y.abs() <= b {
                    grid.command[ix * n + iy] = true;
                }
            }
        }
        for &t in &grid.config.initial_difficulties {
            if t < grid.difficulty.len() {
                grid.difficulty[t] = true;
            }
        }
        if !grid.command.iter().any(|&w| w) || !grid.difficulty.iter().any(|&w| w) {
            return Err(CurriculumError::EmptyInitialSupport);
        }
        Ok(grid)
    }

    pub fn config(&self) -> &CurriculumConfig {
        &self.config
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn cell_center(&self, cell: [usize; 2]) -> [f64; 2] {
        let c = |i: usize| -self.config.command_range + (i as f64 + 0.5) * self.config.cell_size;
        [c(cell[0]), c(cell[1])]
    }

    pub fn cell_weight(&self, cell: [usize; 2]) -> bool {
        self.command[cell[0] * self.cells_per_axis + cell[1]]
    }

    pub fn difficulty_weight(&self, t: usize) -> bool {
        self.difficulty.get(t).copied().unwrap_or(false)
    }

    pub fn unlocked_cells(&self) -> Vec<[usize; 2]> {
        let n = self.cells_per_axis;
        (0..n * n)
            .filter(|&i| self.command[i])
            .map(|i| [i / n, i % n])
            .collect()
    }

    pub fn unlocked_difficulties(&self) -> Vec<usize> {
        (0..self.difficulty.len())
            .filter(|&t| self.difficulty[t])
            .collect()
    }

    /// Unlocked fractions of the command grid and of the difficulty levels.
    pub fn unlocked_fraction(&self) -> (f64, f64) {
        let c = self.command.iter().filter(|&&w| w).count() as f64 / self.command.len() as f64;
        let d =
            self.difficulty.iter().filter(|&&w| w).count() as f64 / self.difficulty.len() as f64;
        (c, d)
    }

    /// Cell uniformly among unlocked cells, command uniformly within it,
    /// difficulty uniformly among unlocked levels; the two draws are
    /// independent.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CurriculumSample {
        let cells = self.unlocked_cells();
        let cell = cells[rng.random_range(0..cells.len())];
        let [cx, cy] = self.cell_center(cell);
        let h = 0.5 * self.config.cell_size;
        let command = [
            cx + rng.random_range(-h..h),
            cy + rng.random_range(-h..h),
        ];
        let levels = self.unlocked_difficulties();
        let difficulty = levels[rng.random_range(0..levels.len())];
        CurriculumSample {
            command,
            cell,
            difficulty,
        }
    }

    /// Success on the command gate unlocks the four axis neighbours of the
    /// source cell; success on the terrain gate unlocks the next level.
    pub fn update(&mut self, outcome: &EpisodeOutcome) -> Result<(), CurriculumError> {
        let n = self.cells_per_axis;
        let [ix, iy] = outcome.cell;
        if ix >= n || iy >= n || !self.cell_weight(outcome.cell) || !self.difficulty_weight(outcome.difficulty) {
            return Err(CurriculumError::LockedSource {
                cell: outcome.cell,
                difficulty: outcome.difficulty,
            });
        }
        if outcome.command_success {
            if ix > 0 {
                self.command[(ix - 1) * n + iy] = true;
            }
            if ix + 1 < n {
                self.command[(ix + 1) * n + iy] = true;
            }
            if iy > 0 {
                self.command[ix * n + iy - 1] = true;
            }
            if iy + 1 < n {
                self.command[ix * n + iy + 1] = true;
            }
        }
        if outcome.terrain_success && outcome.difficulty < self.config.max_difficulty {
            self.difficulty[outcome.difficulty + 1] = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> CurriculumGrid {
        CurriculumGrid::new(CurriculumConfig::default()).unwrap()
    }

    #[test]
    fn initial_support() {
        let g = grid();
        assert_eq!(g.cells_per_axis(), 30);
        assert_eq!(g.unlocked_cells().len(), 100);
        assert_eq!(g.unlocked_difficulties(), vec![0, 1]);
        // (1.0, 1.0) lies in the cell centred at (1.05, 1.05) - its lower corner.
        assert!(!g.cell_weight([25, 25]));
        assert!(!g.difficulty_weight(2));
    }

    #[test]
    fn bad_cell_size_is_rejected() {
        let cfg = CurriculumConfig {
            cell_size: 0.7,
            ..CurriculumConfig::default()
        };
        assert!(matches!(
            CurriculumGrid::new(cfg),
            Err(CurriculumError::CellSize { .. })
        ));
    }

    #[test]
    fn failure_leaves_grid_unchanged() {
        let mut g = grid();
        let before = g.clone();
        g.update(&EpisodeOutcome {
            command_success: false,
            terrain_success: false,
            cell: [10, 10],
            difficulty: 1,
        })
        .unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn locked_source_is_an_error() {
        let mut g = grid();
        let r = g.update(&EpisodeOutcome {
            command_success: true,
            terrain_success: false,
            cell: [0, 0],
            difficulty: 0,
        });
        assert!(r.is_err());
    }

    #[test]
    fn zero_command_has_zero_projection() {
        let t = EpisodeTrace {
            ball_end: [5.0, 0.0],
            ..EpisodeTrace::default()
        };
        assert_eq!(displacement_along_command(&t), 0.0);
    }
}
