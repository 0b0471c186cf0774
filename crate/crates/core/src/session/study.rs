use serde::{Deserialize, Serialize};

use crate::adapt::{StrategyKind, DEFAULT_DELTA};
use crate::model::TrainConfig;

use super::Leg;

/// Two-song, two-strategy within-subject study.
///
/// For study id `n` the song order is `n % 2` and the strategy order
/// `(n / 2) % 2`, so any four consecutive ids cover every ordering once.
/// The second leg always gets the song and strategy the first leg did not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub songs: [String; 2],
    #[serde(default = "default_strategies")]
    pub strategies: [StrategyKind; 2],
    #[serde(default = "default_delta")]
    pub delta: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_strategies() -> [StrategyKind; 2] {
    [StrategyKind::Naive, StrategyKind::Threshold]
}

fn default_delta() -> usize {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub song_id: String,
    pub strategy: StrategyKind,
}

impl StudyConfig {
    pub fn new(song_a: impl Into<String>, song_b: impl Into<String>) -> Self {
        StudyConfig {
            songs: [song_a.into(), song_b.into()],
            strategies: default_strategies(),
            delta: DEFAULT_DELTA,
            train: TrainConfig::default(),
        }
    }

    /// (song order, strategy order) for a study id.
    pub fn orders(study_id: u64) -> (usize, usize) {
        ((study_id % 2) as usize, ((study_id / 2) % 2) as usize)
    }

    pub fn assign(&self, study_id: u64, leg: Leg) -> Condition {
        let (song, strategy) = Self::orders(study_id);
        let flip = usize::from(leg == Leg::Second);
        Condition {
            song_id: self.songs[song ^ flip].clone(),
            strategy: self.strategies[strategy ^ flip],
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use proptest::prelude::*;

    #[test]
    fn study_zero() {
        let cfg = StudyConfig::new("A", "B");
        let first = cfg.assign(0, Leg::First);
        let second = cfg.assign(0, Leg::Second);
        assert_eq!(
            first,
            Condition {
                song_id: "A".into(),
                strategy: StrategyKind::Naive
            }
        );
        assert_eq!(
            second,
            Condition {
                song_id: "B".into(),
                strategy: StrategyKind::Threshold
            }
        );
        assert_eq!(cfg.assign(0, Leg::First), first);
    }

    #[test]
    fn ids_zero_to_three_cover_all_orderings() {
        let all: HashSet<_> = (0..4).map(StudyConfig::orders).collect();
        assert_eq!(all.len(), 4);
    }

    proptest! {
        #[test]
        fn any_four_consecutive_ids_are_balanced(start in 0u64..u64::MAX - 4) {
            let cfg = StudyConfig::new("A", "B");
            let combos: HashSet<_> = (start..start + 4)
                .map(|id| {
                    let c = cfg.assign(id, Leg::First);
                    (c.song_id, c.strategy)
                })
                .collect();
            prop_assert_eq!(combos.len(), 4);
        }

        #[test]
        fn legs_are_complementary(id in any::<u64>()) {
            let cfg = StudyConfig::new("A", "B");
            let a = cfg.assign(id, Leg::First);
            let b = cfg.assign(id, Leg::Second);
            prop_assert_ne!(a.song_id, b.song_id);
            prop_assert_ne!(a.strategy, b.strategy);
        }
    }
}
