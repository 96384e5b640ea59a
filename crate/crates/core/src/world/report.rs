use serde::{Deserialize, Serialize};

use crate::policy::HierAction;

use super::{RewardTerms, StepOutcome, TerrainKind, WorldState};

/// One line of a trajectory dump. `skill` is zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub zone: TerrainKind,
    pub p: [f64; 2],
    pub psi: f64,
    pub b: [f64; 2],
    pub vb: [f64; 2],
    pub skill: usize,
    pub c: Vec<f64>,
    pub reward: f64,
    pub terms: RewardTerms,
}

impl StepRecord {
    pub fn new(state: &WorldState, action: &HierAction, outcome: &StepOutcome) -> Self {
        Self {
            t: state.step,
            zone: outcome.zone,
            p: state.robot_pos,
            psi: state.heading,
            b: state.ball_pos,
            vb: state.ball_vel,
            skill: action.skill,
            c: state.prev_command.to_vec(),
            reward: outcome.reward.total,
            terms: outcome.reward.terms,
        }
    }
}

/// Per-terrain skill frequencies; rows follow [`TerrainKind::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillUsage {
    pub counts: Vec<Vec<u64>>,
    /// `None` for terrains with no recorded steps.
    pub rows: Vec<Option<Vec<f64>>>,
}

impl SkillUsage {
    /// Builds frequencies from a `[terrain][skill]` count table.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let rows = counts
            .iter()
            .map(|c| {
                let n: u64 = c.iter().sum();
                (n > 0).then(|| c.iter().map(|&k| k as f64 / n as f64).collect())
            })
            .collect();
        SkillUsage { counts, rows }
    }

    pub fn row(&self, kind: TerrainKind) -> Option<&[f64]> {
        self.rows[kind.index()].as_deref()
    }
}

/// Frequencies of each skill per terrain over `(terrain, skill)` samples.
pub fn skill_usage_report(
    samples: impl IntoIterator<Item = (TerrainKind, usize)>,
    num_skills: usize,
) -> SkillUsage {
    let mut counts = vec![vec![0u64; num_skills]; TerrainKind::ALL.len()];
    for (zone, skill) in samples {
        if skill < num_skills {
            counts[zone.index()][skill] += 1;
        }
    }
    SkillUsage::from_counts(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_skill_rows() {
        let samples = TerrainKind::ALL.iter().flat_map(|&k| std::iter::repeat_n((k, 1), 7));
        let u = skill_usage_report(samples, 4);
        for k in TerrainKind::ALL {
            assert_eq!(u.row(k).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn empty_terrain_is_absent() {
        let u = skill_usage_report([(TerrainKind::Flat, 0), (TerrainKind::Flat, 3)], 4);
        assert!(u.row(TerrainKind::Rough).is_none());
        let s: f64 = u.row(TerrainKind::Flat).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
