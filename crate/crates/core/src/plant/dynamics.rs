//! Fixed-step integration of the two output coordinates.
//!
//! Each coordinate is advanced with an implicit midpoint step in which every
//! elastic element contributes its discrete gradient `(V(q1) - V(q0)) / (q1 - q0)`.
//! With that choice the work done by each force over a step equals the change
//! of its potential exactly, so the energy ledger closes to rounding error.
//! Motors are velocity sources (ideal inner velocity loop up to saturation),
//! so their work is the change in cable energy caused by the motor motion.
//! Bowden friction is set-valued Coulomb friction whose normal load is the
//! cable tension, resolved by the sign of the end-of-step velocity.

use crate::error::{Error, Result};

use super::motor::saturate_motor;
use super::transmission::{
    band_potential, band_torque, bowden_attenuation, pf_potential, pf_tension_at, trans_forces_at,
    trans_potential, CableMotion,
};
use super::{Coupling, ExternalLoad, MotorVelocityCommand, PlantConfig, PlantState};

struct Axis<'a> {
    mass: f64,
    q0: f64,
    v0: f64,
    dt: f64,
    potential: &'a dyn Fn(f64) -> f64,
    gradient: &'a dyn Fn(f64) -> f64,
    damping: f64,
    ext_force: f64,
    coupling: Coupling,
    /// Friction magnitude opposing positive / negative motion.
    friction_pos: f64,
    friction_neg: f64,
    limits: [f64; 2],
}

struct AxisOutcome {
    q1: f64,
    v1: f64,
    external_work: f64,
    dissipation: f64,
    constraint_loss: f64,
}

impl Axis<'_> {
    fn delta(&self, v1: f64) -> f64 {
        0.5 * (self.v0 + v1) * self.dt
    }

    fn discrete_gradient(&self, delta: f64) -> f64 {
        if delta.abs() > 1e-12 * (1.0 + self.q0.abs()) {
            ((self.potential)(self.q0 + delta) - (self.potential)(self.q0)) / delta
        } else {
            (self.gradient)(self.q0 + 0.5 * delta)
        }
    }

    fn coupling_force(&self, delta: f64) -> f64 {
        match self.coupling {
            Coupling::Spring {
                rate,
                anchor,
                damping,
                anchor_velocity,
            } => {
                -rate * (self.q0 + 0.5 * delta - anchor)
                    - damping * (delta / self.dt - anchor_velocity)
            }
            _ => 0.0,
        }
    }

    /// Momentum residual without friction; increasing in `v1`.
    fn residual(&self, v1: f64) -> f64 {
        let delta = self.delta(v1);
        self.mass * (v1 - self.v0) / self.dt + self.discrete_gradient(delta) + self.damping * delta / self.dt
            - self.ext_force
            - self.coupling_force(delta)
    }

    /// Root of `residual(v) = target` on the half-line selected by `positive`.
    fn solve(&self, target: f64, positive: bool) -> f64 {
        let dir = if positive { 1.0 } else { -1.0 };
        let h = |v: f64| self.residual(v) - target;
        let mut lo = 0.0;
        let mut hi = dir * (1.0 + self.v0.abs());
        let mut guard = 0;
        while h(hi) * dir < 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if h(mid) * dir < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (hl, hh) = (h(lo).abs(), h(hi).abs());
        if hl <= hh {
            lo
        } else {
            hi
        }
    }

    fn advance(&self) -> AxisOutcome {
        if matches!(self.coupling, Coupling::Locked) {
            return AxisOutcome {
                q1: self.q0,
                v1: 0.0,
                external_work: 0.0,
                dissipation: 0.0,
                constraint_loss: 0.5 * self.mass * self.v0 * self.v0,
            };
        }
        let g0 = self.residual(0.0);
        let (v1, friction) = if g0 < -self.friction_pos {
            (self.solve(-self.friction_pos, true), -self.friction_pos)
        } else if g0 > self.friction_neg {
            (self.solve(self.friction_neg, false), self.friction_neg)
        } else {
            (0.0, g0)
        };

        let mut q1 = self.q0 + self.delta(v1);
        let mut v1 = v1;
        let mut clamped = false;
        let [lo, hi] = self.limits;
        if q1 > hi {
            q1 = hi;
            v1 = 0.0;
            clamped = true;
        } else if q1 < lo {
            q1 = lo;
            v1 = 0.0;
            clamped = true;
        }

        let delta = q1 - self.q0;
        let mut external_work = self.ext_force * delta;
        if let Coupling::Spring {
            rate,
            anchor,
            damping,
            anchor_velocity,
        } = self.coupling
        {
            let e0 = self.q0 - anchor;
            let e1 = q1 - anchor;
            external_work += -0.5 * rate * (e1 * e1 - e0 * e0)
                - damping * (delta / self.dt - anchor_velocity) * delta;
        }
        let dissipation = self.damping * delta * delta / self.dt - friction * delta;
        let constraint_loss = if clamped {
            let d_kinetic = 0.5 * self.mass * (v1 * v1 - self.v0 * self.v0);
            let d_potential = (self.potential)(q1) - (self.potential)(self.q0);
            external_work - dissipation - d_kinetic - d_potential
        } else {
            0.0
        };
        AxisOutcome {
            q1,
            v1,
            external_work,
            dissipation,
            constraint_loss,
        }
    }
}

/// Advances the plant by one `cfg.timestep`.
pub fn step_dynamics(
    state: &PlantState,
    cmd: &MotorVelocityCommand,
    ext: &ExternalLoad,
    cfg: &PlantConfig,
) -> Result<PlantState> {
    if !(cfg.timestep > 0.0) {
        return Err(Error::Config(format!(
            "timestep_s must be positive (got {})",
            cfg.timestep
        )));
    }
    if !cmd.pf_vel.is_finite() || !cmd.trans_vel.is_finite() {
        return Err(Error::NonFinite("motor velocity command"));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state"));
    }
    if !ext.is_finite() {
        return Err(Error::NonFinite("external load"));
    }
    let dt = cfg.timestep;
    let coeff = cfg.bowden_friction_coeff;

    // Motors: ideal velocity sources inside their envelope.
    let pf_load = pf_tension_at(state.theta, state.motor_pf_pos, cfg) * cfg.pf_gear_ratio;
    let pf_vel = saturate_motor(cmd.pf_vel, pf_load, &cfg.pf_motor);
    let m_pf = state.motor_pf_pos + pf_vel * dt;
    let tr_load = trans_forces_at(state.s, state.motor_trans_pos, cfg).net() * cfg.trans_gear_ratio;
    let tr_vel = saturate_motor(cmd.trans_vel, tr_load, &cfg.trans_motor);
    let m_tr = state.motor_trans_pos + tr_vel * dt;

    let motor_work = pf_potential(state.theta, m_pf, cfg) - pf_potential(state.theta, state.motor_pf_pos, cfg)
        + trans_potential(state.s, m_tr, cfg)
        - trans_potential(state.s, state.motor_trans_pos, cfg);

    // Flexion axis.
    let tension = pf_tension_at(state.theta, m_pf, cfg);
    let arm = cfg.pf_lever_geometry.arm(state.theta);
    let toward = bowden_attenuation(tension, CableMotion::TowardLoad, coeff)?;
    let back = bowden_attenuation(tension, CableMotion::BackDriven, coeff)?;
    let ankle_potential = |theta: f64| pf_potential(theta, m_pf, cfg) + band_potential(theta, cfg);
    let ankle_gradient = |theta: f64| {
        -pf_tension_at(theta, m_pf, cfg) * cfg.pf_lever_geometry.arm(theta) - band_torque(theta, cfg)
    };
    let ankle = Axis {
        mass: cfg.ankle_inertia,
        q0: state.theta,
        v0: state.theta_dot,
        dt,
        potential: &ankle_potential,
        gradient: &ankle_gradient,
        damping: cfg.ankle_damping,
        ext_force: ext.ankle_torque_ext,
        coupling: ext.ankle_coupling,
        // Plantarflexion pulls cable toward the motor: the load side sees the
        // attenuated tension. Dorsiflexion back-drives it.
        friction_pos: (tension - toward) * arm,
        friction_neg: (back - tension) * arm,
        limits: cfg.flexion_limits,
    }
    .advance();

    // Translation axis.
    let pair = trans_forces_at(state.s, m_tr, cfg);
    let (ta, tp) = (pair.anterior, pair.posterior);
    let ta_toward = bowden_attenuation(ta, CableMotion::TowardLoad, coeff)?;
    let ta_back = bowden_attenuation(ta, CableMotion::BackDriven, coeff)?;
    let tp_toward = bowden_attenuation(tp, CableMotion::TowardLoad, coeff)?;
    let tp_back = bowden_attenuation(tp, CableMotion::BackDriven, coeff)?;
    let stage_potential = |s: f64| trans_potential(s, m_tr, cfg);
    let stage_gradient = |s: f64| -trans_forces_at(s, m_tr, cfg).net();
    let stage = Axis {
        mass: cfg.stage_mass,
        q0: state.s,
        v0: state.s_dot,
        dt,
        potential: &stage_potential,
        gradient: &stage_gradient,
        damping: cfg.stage_damping,
        ext_force: ext.ap_force_ext,
        coupling: ext.stage_coupling,
        // Moving anteriorly reels the anterior cable in and drags the
        // posterior one out; the reverse for posterior motion.
        friction_pos: (ta - ta_toward) + (tp_back - tp),
        friction_neg: (ta_back - ta) + (tp - tp_toward),
        limits: cfg.translation_limits,
    }
    .advance();

    let mut energy = state.energy;
    energy.motor_work += motor_work;
    energy.external_work += ankle.external_work + stage.external_work;
    energy.friction_loss += ankle.dissipation + stage.dissipation;
    energy.hard_stop_loss += ankle.constraint_loss + stage.constraint_loss;

    let next = PlantState {
        theta: ankle.q1,
        theta_dot: ankle.v1,
        s: stage.q1,
        s_dot: stage.v1,
        motor_pf_pos: m_pf,
        motor_trans_pos: m_tr,
        motor_pf_vel: pf_vel,
        motor_trans_vel: tr_vel,
        time: state.time + dt,
        energy,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("integrated plant state"));
    }
    Ok(next)
}

/// Kinetic plus stored elastic energy of the plant (external fixtures excluded).
pub fn stored_energy(state: &PlantState, cfg: &PlantConfig) -> f64 {
    0.5 * cfg.ankle_inertia * state.theta_dot * state.theta_dot
        + 0.5 * cfg.stage_mass * state.s_dot * state.s_dot
        + pf_potential(state.theta, state.motor_pf_pos, cfg)
        + band_potential(state.theta, cfg)
        + trans_potential(state.s, state.motor_trans_pos, cfg)
}
