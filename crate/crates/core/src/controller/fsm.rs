use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GaitPhase {
    Standing,
    StanceLoading,
    StanceUnloading,
    Swing,
}

impl GaitPhase {
    pub fn is_stance(self) -> bool {
        matches!(self, GaitPhase::StanceLoading | GaitPhase::StanceUnloading)
    }

    pub fn code(self) -> u8 {
        match self {
            GaitPhase::Standing => 0,
            GaitPhase::StanceLoading => 1,
            GaitPhase::StanceUnloading => 2,
            GaitPhase::Swing => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GaitPhase::Standing,
            1 => GaitPhase::StanceLoading,
            2 => GaitPhase::StanceUnloading,
            3 => GaitPhase::Swing,
            _ => return None,
        })
    }
}

/// Whether `from -> to` is an edge of the gait cycle.
pub fn is_legal_transition(from: GaitPhase, to: GaitPhase) -> bool {
    use GaitPhase::*;
    matches!(
        (from, to),
        (Standing, StanceLoading)
            | (StanceLoading, Standing)
            | (StanceLoading, StanceUnloading)
            | (StanceUnloading, Swing)
            | (Swing, StanceLoading)
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub phase: GaitPhase,
    pub entry_time: f64,
    /// Loading has seen the ankle dorsiflexing; the velocity reversal is armed.
    pub dorsiflexion_seen: bool,
}

impl PhaseState {
    pub fn new(phase: GaitPhase, time: f64) -> Self {
        Self {
            phase,
            entry_time: time,
            dorsiflexion_seen: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FsmEvents {
    pub heel_strike: bool,
    pub toe_off: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmRules {
    /// |theta_dot| below this counts as neither direction.
    pub velocity_deadband: f64,
    /// No phase is left sooner than this after entry.
    pub min_dwell: f64,
    /// Loading without a reversal for this long means the wearer stopped.
    pub standing_timeout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmOutcome {
    pub state: PhaseState,
    /// Events that have no edge from the current phase.
    pub illegal: u32,
    /// Legal events dropped because the phase was still in its dwell window.
    pub ignored: u32,
}

/// One FSM tick. `theta_dot_filtered` is plantar-positive, so the loading to
/// unloading switch fires when it goes from below `-deadband` to above `+deadband`.
pub fn update_fsm(
    state: PhaseState,
    events: FsmEvents,
    theta_dot_filtered: f64,
    time: f64,
    rules: &FsmRules,
) -> FsmOutcome {
    use GaitPhase::*;
    let mut out = FsmOutcome {
        state,
        illegal: 0,
        ignored: 0,
    };
    let legal_heel = matches!(state.phase, Standing | Swing);
    let legal_toe = state.phase == StanceUnloading;
    if events.heel_strike && !legal_heel {
        out.illegal += 1;
    }
    if events.toe_off && !legal_toe {
        out.illegal += 1;
    }
    if state.phase == StanceLoading && theta_dot_filtered < -rules.velocity_deadband {
        out.state.dorsiflexion_seen = true;
    }

    let next = match state.phase {
        Standing | Swing if events.heel_strike => Some(StanceLoading),
        StanceUnloading if events.toe_off => Some(Swing),
        StanceLoading if out.state.dorsiflexion_seen && theta_dot_filtered > rules.velocity_deadband => {
            Some(StanceUnloading)
        }
        StanceLoading if time - state.entry_time >= rules.standing_timeout => Some(Standing),
        _ => None,
    };
    if let Some(phase) = next {
        if time - state.entry_time < rules.min_dwell {
            if events.heel_strike || events.toe_off {
                out.ignored += 1;
            }
        } else {
            out.state = PhaseState::new(phase, time);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: FsmRules = FsmRules {
        velocity_deadband: 0.05,
        min_dwell: 0.02,
        standing_timeout: 2.0,
    };

    #[test]
    fn velocity_reversal_unloads() {
        let s = PhaseState::new(GaitPhase::StanceLoading, 0.0);
        let s = update_fsm(s, FsmEvents::default(), -0.1, 0.1, &RULES).state;
        assert_eq!(s.phase, GaitPhase::StanceLoading);
        let s = update_fsm(s, FsmEvents::default(), 0.1, 0.2, &RULES).state;
        assert_eq!(s.phase, GaitPhase::StanceUnloading);
        assert_eq!(s.entry_time, 0.2);
    }

    #[test]
    fn swing_heel_strike_loads() {
        let s = PhaseState::new(GaitPhase::Swing, 0.0);
        let ev = FsmEvents {
            heel_strike: true,
            toe_off: false,
        };
        assert_eq!(update_fsm(s, ev, 0.0, 0.5, &RULES).state.phase, GaitPhase::StanceLoading);
    }

    #[test]
    fn standing_stays_without_events() {
        let s = PhaseState::new(GaitPhase::Standing, 0.0);
        for i in 0..100 {
            let out = update_fsm(s, FsmEvents::default(), 1.0, i as f64, &RULES);
            assert_eq!(out.state, s);
        }
    }

    #[test]
    fn illegal_pairs_counted() {
        let s = PhaseState::new(GaitPhase::StanceLoading, 0.0);
        let ev = FsmEvents {
            heel_strike: true,
            toe_off: true,
        };
        let out = update_fsm(s, ev, 0.0, 0.5, &RULES);
        assert_eq!(out.illegal, 2);
        assert_eq!(out.state.phase, GaitPhase::StanceLoading);
    }

    #[test]
    fn dwell_blocks_exit() {
        let s = PhaseState::new(GaitPhase::StanceUnloading, 1.0);
        let ev = FsmEvents {
            heel_strike: false,
            toe_off: true,
        };
        let out = update_fsm(s, ev, 0.0, 1.01, &RULES);
        assert_eq!(out.state.phase, GaitPhase::StanceUnloading);
        assert_eq!(out.ignored, 1);
    }

    #[test]
    fn loading_times_out_to_standing() {
        let s = PhaseState::new(GaitPhase::StanceLoading, 0.0);
        assert_eq!(update_fsm(s, FsmEvents::default(), 0.0, 2.5, &RULES).state.phase, GaitPhase::Standing);
    }
}
