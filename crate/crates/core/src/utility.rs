//! Jammer utility accounting.
//!
//! A slot falls into exactly one of three cases: an actual transmission
//! (`u1`), a deception the jammer answered (`u2`), or a deception it ignored
//! (`u3`). Utilities are in packet equivalents; energy converts through
//! `e_r`.

use crate::env::{Action, Diagnostics, EnvParams};

/// What happened in one slot: the first-epoch action and, after a deception,
/// the second-epoch action, each with its step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTrace {
    pub first: (Action, Diagnostics),
    pub second: Option<(Action, Diagnostics)>,
}

impl SlotTrace {
    pub fn single(action: Action, diag: Diagnostics) -> Self {
        Self { first: (action, diag), second: None }
    }

    pub fn deception(first: Diagnostics, action: Action, diag: Diagnostics) -> Self {
        Self { first: (Action::Deceive, first), second: Some((action, diag)) }
    }

    /// Both epochs' diagnostics summed.
    pub fn totals(&self) -> Diagnostics {
        match &self.second {
            Some((_, d)) => self.first.1.merge(d),
            None => self.first.1,
        }
    }

    pub fn delivered(&self) -> u32 {
        self.totals().delivered
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotUtility {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub total: f64,
}

/// The jammer's utility for one slot.
pub fn slot_utility(trace: &SlotTrace, params: &EnvParams) -> SlotUtility {
    let e_r = f64::from(params.energy_per_packet);
    let (first, diag) = trace.first;
    let mut u = SlotUtility::default();
    match first {
        Action::Transmit => {
            u.u1 = if diag.jammer_level > 0 {
                f64::from(diag.dropped_jamming)
            } else {
                -f64::from(diag.delivered)
            };
        }
        Action::Deceive => {
            let lure = f64::from(params.deception_cost) / e_r;
            let (action, second) = trace.second.unwrap_or((Action::Idle, Diagnostics::default()));
            let gained = match action {
                Action::Harvest => f64::from(second.harvested_jammer) / e_r,
                Action::Backscatter | Action::RateAdapt(_) | Action::Transmit => f64::from(second.delivered),
                _ => 0.0,
            };
            if diag.jammer_level > 0 {
                u.u2 = lure - gained;
            } else {
                u.u3 = lure - gained;
            }
        }
        _ => {}
    }
    u.total = u.u1 + u.u2 + u.u3;
    u
}

/// Mean jammer utility and mean transmitter throughput per slot.
pub fn average_utilities(slots: &[SlotTrace], params: &EnvParams) -> (f64, f64) {
    if slots.is_empty() {
        return (0.0, 0.0);
    }
    let n = slots.len() as f64;
    let jammer: f64 = slots.iter().map(|t| slot_utility(t, params).total).sum();
    let delivered: f64 = slots.iter().map(|t| f64::from(t.delivered())).sum();
    (jammer / n, delivered / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(level: usize) -> Diagnostics {
        Diagnostics { jammer_level: level, ..Diagnostics::default() }
    }

    #[test]
    fn jammed_transmission_scores_for_jammer() {
        let t = SlotTrace::single(Action::Transmit, Diagnostics { dropped_jamming: 4, ..diag(2) });
        let u = slot_utility(&t, &EnvParams::default());
        assert_eq!(u.u1, 4.0);
        assert_eq!(u.total, 4.0);
        assert_eq!(average_utilities(&[t], &EnvParams::default()), (4.0, 0.0));
    }

    #[test]
    fn harvest_after_deception_costs_jammer() {
        let second = Diagnostics { harvested_jammer: 3, ..diag(2) };
        let t = SlotTrace::deception(diag(2), Action::Harvest, second);
        let u = slot_utility(&t, &EnvParams::default());
        assert_eq!((u.u1, u.u2, u.u3), (0.0, -2.0, 0.0));
    }

    #[test]
    fn ignored_deception_then_transmit() {
        let t = SlotTrace::deception(diag(0), Action::Transmit, Diagnostics { delivered: 3, ..diag(0) });
        let u = slot_utility(&t, &EnvParams::default());
        assert_eq!((u.u1, u.u2, u.u3), (0.0, 0.0, -2.0));
    }

    #[test]
    fn idle_after_answered_deception_is_lure_value() {
        let params = EnvParams { deception_cost: 3, energy_per_packet: 2, ..EnvParams::default() };
        let t = SlotTrace::deception(diag(1), Action::Idle, diag(1));
        assert_eq!(slot_utility(&t, &params).u2, 1.5);
    }

    #[test]
    fn idle_transmitter_gives_jammer_nothing() {
        let slots = vec![SlotTrace::single(Action::Idle, diag(0)); 10];
        assert_eq!(average_utilities(&slots, &EnvParams::default()), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn flipping_attack_negates_u1(n in 1u32..10, level in 1usize..4) {
            let params = EnvParams::default();
            let hit = SlotTrace::single(Action::Transmit, Diagnostics { dropped_jamming: n, ..diag(level) });
            let miss = SlotTrace::single(Action::Transmit, Diagnostics { delivered: n, ..diag(0) });
            prop_assert_eq!(slot_utility(&hit, &params).u1, -slot_utility(&miss, &params).u1);
        }

        #[test]
        fn common_energy_scale_leaves_utilities_unchanged(
            scale in 1u32..6,
            harvest in 0u32..5,
            delivered in 0u32..4,
            attacked in any::<bool>(),
            second in 0usize..4,
        ) {
            let base = EnvParams::default();
            let scaled = EnvParams {
                deception_cost: base.deception_cost * scale,
                energy_per_packet: base.energy_per_packet * scale,
                ..base.clone()
            };
            let level = if attacked { 2 } else { 0 };
            let action = [Action::Idle, Action::Harvest, Action::Backscatter, Action::Transmit][second];
            let trace = |h: u32| SlotTrace::deception(
                diag(level),
                action,
                Diagnostics { harvested_jammer: h, delivered, ..diag(level) },
            );
            let a = slot_utility(&trace(harvest), &base);
            let b = slot_utility(&trace(harvest * scale), &scaled);
            prop_assert!((a.total - b.total).abs() < 1e-12);
        }
    }
}
