use super::{ControlMode, ControllerConfig, GaitPhase};

/// What the plantarflexion loop tracks in a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PfTarget {
    /// Torque loop on the loading spring.
    Loading,
    /// Torque loop on the unloading spring.
    Unloading,
    /// Position loop: cable just taut at this flexion angle.
    Angle(f64),
    /// Motor holds its captured position.
    Hold,
}

/// What the translation loop tracks in a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransTarget {
    At(f64),
    /// From `from` to `to` over the unloading phase.
    Ramp { from: f64, to: f64 },
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTargets {
    pub pf: PfTarget,
    pub trans: TransTarget,
}

pub fn phase_targets(phase: GaitPhase, mode: ControlMode, cfg: &ControllerConfig) -> PhaseTargets {
    use GaitPhase::*;
    let hold = PhaseTargets {
        pf: PfTarget::Hold,
        trans: TransTarget::Hold,
    };
    match (mode, phase) {
        (ControlMode::StaticPosition, _) | (_, Standing) => hold,
        (ControlMode::Revolute1DoF, p) => PhaseTargets {
            pf: pf_for(p, cfg),
            trans: TransTarget::At(0.0),
        },
        (ControlMode::TwoDoF, p) => PhaseTargets {
            pf: pf_for(p, cfg),
            trans: match p {
                StanceLoading => TransTarget::At(cfg.trans_anterior_target),
                StanceUnloading => TransTarget::Ramp {
                    from: cfg.trans_anterior_target,
                    to: cfg.trans_posterior_target,
                },
                _ => TransTarget::At(cfg.swing_translation_center),
            },
        },
    }
}

fn pf_for(phase: GaitPhase, cfg: &ControllerConfig) -> PfTarget {
    match phase {
        GaitPhase::StanceLoading => PfTarget::Loading,
        GaitPhase::StanceUnloading => PfTarget::Unloading,
        GaitPhase::Swing => PfTarget::Angle(cfg.swing_toe_lift_angle),
        GaitPhase::Standing => PfTarget::Hold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dof_loading_goes_anterior() {
        let cfg = ControllerConfig::default();
        let t = phase_targets(GaitPhase::StanceLoading, ControlMode::TwoDoF, &cfg);
        assert_eq!(t.trans, TransTarget::At(0.05));
        assert_eq!(t.pf, PfTarget::Loading);
    }

    #[test]
    fn revolute_stance_centres_stage() {
        let cfg = ControllerConfig::default();
        for p in [GaitPhase::StanceLoading, GaitPhase::StanceUnloading] {
            assert_eq!(phase_targets(p, ControlMode::Revolute1DoF, &cfg).trans, TransTarget::At(0.0));
        }
    }

    #[test]
    fn swing_lifts_toe() {
        let cfg = ControllerConfig::default();
        let t = phase_targets(GaitPhase::Swing, ControlMode::TwoDoF, &cfg);
        assert_eq!(t.pf, PfTarget::Angle(cfg.swing_toe_lift_angle));
        assert!(cfg.swing_toe_lift_angle < 0.0);
    }

    #[test]
    fn unloading_ramps_posterior() {
        let cfg = ControllerConfig::default();
        let t = phase_targets(GaitPhase::StanceUnloading, ControlMode::TwoDoF, &cfg);
        assert_eq!(
            t.trans,
            TransTarget::Ramp {
                from: cfg.trans_anterior_target,
                to: cfg.trans_posterior_target
            }
        );
    }
}
