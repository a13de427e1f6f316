//! Comparison policies: action-space restrictions trained with the same
//! agent (HTT, BM, RA) and the fixed transmit-whenever-possible rule (WD).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSet, EnvParams, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Full action space.
    #[default]
    Proposed,
    /// Harvest-then-transmit: no backscatter.
    Htt,
    /// Backscatter mode: no jamming-energy harvesting.
    Bm,
    /// Rate adaptation only: neither harvesting nor backscatter.
    Ra,
    /// Transmit whenever data and energy allow; never learns.
    Wd,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [Self::Proposed, Self::Htt, Self::Bm, Self::Ra, Self::Wd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Htt => "htt",
            Self::Bm => "bm",
            Self::Ra => "ra",
            Self::Wd => "wd",
        }
    }

    pub fn learns(self) -> bool {
        self != Self::Wd
    }

    /// Actions the scheme may ever take, out of `action_count` encodings.
    pub fn allowed(self, action_count: usize) -> ActionSet {
        let all = ActionSet::all(action_count);
        let without = |drop: &[Action]| {
            let mut set = all;
            for &a in drop {
                set.remove(a);
            }
            set
        };
        match self {
            Self::Proposed => all,
            Self::Htt => without(&[Action::Backscatter]),
            Self::Bm => without(&[Action::Harvest]),
            Self::Ra => without(&[Action::Harvest, Action::Backscatter]),
            Self::Wd => ActionSet::from_codes([Action::Idle.code(), Action::Transmit.code()]),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy `{s}` (expected proposed, htt, bm, ra or wd)"))
    }
}

/// Feasible actions the scheme keeps. Idle always survives.
pub fn restrict(mask: ActionSet, kind: PolicyKind) -> ActionSet {
    let mut out = mask.intersect(kind.allowed(ActionSet::CAPACITY));
    out.insert(Action::Idle);
    out
}

/// Transmit if there is data and more than one packet's worth of energy.
pub fn wd_policy(s: &SystemState, params: &EnvParams) -> Action {
    if s.data > 0 && s.energy > params.energy_per_packet {
        Action::Transmit
    } else {
        Action::Idle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{feasible_actions, Epoch};

    fn codes(set: ActionSet) -> Vec<usize> {
        set.codes().collect()
    }

    fn second_epoch_mask(d: u32, e: u32) -> ActionSet {
        let p = EnvParams::default();
        feasible_actions(&p, &SystemState::new(true, true, d, e), Epoch::Second).unwrap()
    }

    #[test]
    fn allowed_sets() {
        assert_eq!(codes(PolicyKind::Proposed.allowed(8)), (0..8).collect::<Vec<_>>());
        assert_eq!(codes(PolicyKind::Htt.allowed(8)), vec![0, 1, 2, 3, 5, 6, 7]);
        assert_eq!(codes(PolicyKind::Bm.allowed(8)), vec![0, 1, 2, 4, 5, 6, 7]);
        assert_eq!(codes(PolicyKind::Ra.allowed(8)), vec![0, 1, 2, 5, 6, 7]);
    }

    #[test]
    fn ra_drops_backscatter_and_harvest() {
        let mask = second_epoch_mask(5, 5);
        assert!(mask.contains(Action::Harvest) && mask.contains(Action::Backscatter));
        let out = restrict(mask, PolicyKind::Ra);
        assert!(!out.contains(Action::Harvest) && !out.contains(Action::Backscatter));
        assert!(out.contains(Action::Idle));
    }

    #[test]
    fn proposed_is_identity() {
        let mask = second_epoch_mask(5, 5);
        assert_eq!(restrict(mask, PolicyKind::Proposed), mask);
    }

    #[test]
    fn htt_keeps_harvest() {
        let out = restrict(second_epoch_mask(3, 4), PolicyKind::Htt);
        assert!(out.contains(Action::Harvest));
        assert!(!out.contains(Action::Backscatter));
    }

    #[test]
    fn idle_survives_everything() {
        for kind in PolicyKind::ALL {
            assert!(restrict(ActionSet::empty(), kind).contains(Action::Idle));
        }
    }

    #[test]
    fn wd_rule() {
        let p = EnvParams::default();
        assert_eq!(wd_policy(&SystemState::slot_start(5, 5), &p), Action::Transmit);
        assert_eq!(wd_policy(&SystemState::slot_start(0, 5), &p), Action::Idle);
        assert_eq!(wd_policy(&SystemState::slot_start(5, 1), &p), Action::Idle);
    }

    #[test]
    fn names_round_trip() {
        for kind in PolicyKind::ALL {
            assert_eq!(kind.to_string().parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("nope".parse::<PolicyKind>().is_err());
    }
}
