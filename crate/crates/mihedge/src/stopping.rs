//! Stopping sets in functional state space.
//!
//! A stopping set defines claim maturity as the first time the tracked
//! functional enters it. Every set exposes both a predicate and a
//! signed-gap diagnostic, negative strictly outside the set.

use serde::{Deserialize, Serialize};

/// Which side the state approaches a level set from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    /// Set is `{x_i >= value}`; states start below (clocks, barriers above).
    FromBelow,
    /// Set is `{x_i <= value}`; states start above (barriers below).
    FromAbove,
}

/// Closed stopping set `B` in `R^n`, in canonical form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingSet {
    /// `{x_index = value}` reached from one side.
    LevelSet {
        index: usize,
        value: f64,
        approach: Approach,
    },
    /// Exit set of the open corridor `(lower, upper)` in coordinate `index`.
    CorridorExit {
        index: usize,
        lower: f64,
        upper: f64,
    },
    Union { members: Vec<StoppingSet> },
    /// The whole space; hits at time zero.
    Immediate,
    /// The empty set; never hit.
    Never,
}

impl StoppingSet {
    /// Distance-like diagnostic: `>= 0` inside the set, `< 0` outside.
    pub fn signed_gap(&self, x: &[f64]) -> f64 {
        match self {
            StoppingSet::LevelSet {
                index,
                value,
                approach,
            } => match approach {
                Approach::FromBelow => x[*index] - value,
                Approach::FromAbove => value - x[*index],
            },
            StoppingSet::CorridorExit {
                index,
                lower,
                upper,
            } => (lower - x[*index]).max(x[*index] - upper),
            StoppingSet::Union { members } => members
                .iter()
                .map(|m| m.signed_gap(x))
                .fold(f64::NEG_INFINITY, f64::max),
            StoppingSet::Immediate => 0.0,
            StoppingSet::Never => f64::NEG_INFINITY,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_gap(x) >= 0.0
    }

    /// The coordinate driving a single level set, if the set is one.
    pub fn level_coordinate(&self) -> Option<(usize, f64)> {
        match self {
            StoppingSet::LevelSet { index, value, .. } => Some((*index, *value)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicate_iff_gap_nonnegative() {
        let sets = [
            StoppingSet::LevelSet {
                index: 1,
                value: 0.04,
                approach: Approach::FromBelow,
            },
            StoppingSet::CorridorExit {
                index: 0,
                lower: 0.5,
                upper: 2.0,
            },
            StoppingSet::Union {
                members: vec![
                    StoppingSet::LevelSet {
                        index: 0,
                        value: 2.0,
                        approach: Approach::FromBelow,
                    },
                    StoppingSet::LevelSet {
                        index: 0,
                        value: 0.5,
                        approach: Approach::FromAbove,
                    },
                ],
            },
        ];
        let points = [[1.0, 0.0], [1.0, 0.04], [0.4, 0.01], [2.5, 0.1], [1.0, 0.1]];
        for set in &sets {
            for p in &points {
                assert_eq!(set.contains(p), set.signed_gap(p) >= 0.0);
            }
        }
    }

    #[test]
    fn corridor_exit_gap_signs() {
        let b = StoppingSet::CorridorExit {
            index: 0,
            lower: 0.5,
            upper: 2.0,
        };
        assert!(b.signed_gap(&[1.0]) < 0.0);
        assert!(b.contains(&[0.5]));
        assert!(b.contains(&[2.3]));
    }

    #[test]
    fn immediate_and_never() {
        assert!(StoppingSet::Immediate.contains(&[0.0]));
        assert!(!StoppingSet::Never.contains(&[0.0]));
    }
}
