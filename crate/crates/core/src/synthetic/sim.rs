use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{nonlinear_term, PolicySpec, SPEED_LIMIT};
use crate::error::{Error, Result};
use crate::features::{
    determine_lead, feature_vector, rotate_quarter, wrap_angle, CarId, DyadTrial, Frame, RegionRadii,
};
use crate::nominal::{propagate_unicycle, NominalTrajectory, UnicycleState, KNOT_TOL};
use crate::seed::{derive_seed, rng_from_seed};

use super::corpus::ScenarioConfig;

/// Feedback features and the feedback part of the control applied at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineSample {
    pub k: i64,
    pub agent: CarId,
    pub z: [f64; 4],
    /// `u - u_nominal`, noise included.
    pub feedback: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trial: DyadTrial,
    pub lead: CarId,
    pub online: Vec<OnlineSample>,
}

/// Quarter turns from a car's own approach frame to the world frame: A
/// approaches from the south, B from the north.
fn own_to_world(car: CarId) -> u8 {
    match car {
        CarId::A => 0,
        CarId::B => 2,
    }
}

struct Car<'a> {
    policy: &'a PolicySpec,
    nominal: &'a NominalTrajectory,
    spawn: i64,
    last: i64,
    state: UnicycleState,
    frames: Vec<Frame>,
    rng: ChaCha8Rng,
}

impl Car<'_> {
    fn active(&self, k: i64) -> bool {
        (self.spawn..=self.last).contains(&k)
    }
}

/// Spawn state in the car's own frame: the nominal start shifted laterally and
/// slid along the approach so it stays on the nominal's starting circle.
fn spawn_state(nominal: &NominalTrajectory, lateral_offset: f64, speed: f64) -> Result<UnicycleState> {
    let s0 = nominal.states[0];
    let r = s0.pos[0].hypot(s0.pos[1]);
    let lat = s0.pos[0] + lateral_offset;
    if lat.abs() >= r {
        return Err(Error::invalid(format!("lateral offset {lateral_offset} leaves the boundary circle")));
    }
    let lon = (r * r - lat * lat).sqrt().copysign(s0.pos[1]);
    Ok(UnicycleState::new(lat, lon, s0.heading, speed))
}

/// Advances one frame. The nominal control switches at its own knots, so the
/// step is split there; the feedback part is held for the whole frame.
fn advance(state: &UnicycleState, nominal: &NominalTrajectory, tau: f64, dt: f64, feedback: [f64; 2]) -> UnicycleState {
    let end = tau + dt;
    let mut t = tau;
    let mut s = *state;
    while t < end - KNOT_TOL * dt {
        let next_knot = ((t / nominal.dt + KNOT_TOL).floor() + 1.0) * nominal.dt;
        let seg_end = next_knot.min(end);
        let ub = nominal.control_at(t);
        s = propagate_unicycle(&s, [ub[0] + feedback[0], ub[1] + feedback[1]], seg_end - t);
        t = seg_end;
    }
    s
}

/// Simulates with `lead` fixed in advance for the online features.
pub fn simulate_assuming(
    config: &ScenarioConfig,
    policies: [&PolicySpec; 2],
    nominals: [&NominalTrajectory; 2],
    lead: CarId,
) -> Result<Simulation> {
    config.validate()?;
    for p in policies {
        p.validate()?;
    }
    let rate = config.frame_rate;
    let dt = 1.0 / rate;
    let delay = (config.entry_offset.abs() * rate).round() as i64;
    let spawns = if config.entry_offset >= 0.0 { [0, delay] } else { [delay, 0] };
    let mut cars = Vec::with_capacity(2);
    for car in CarId::ALL {
        let i = car as usize;
        let own = spawn_state(nominals[i], config.lateral_offsets[i], config.entry_speeds[i])?;
        let q = (4 - own_to_world(car)) % 4;
        let state = UnicycleState {
            pos: rotate_quarter(own.pos, q),
            heading: wrap_angle(own.heading + f64::from(own_to_world(car)) * std::f64::consts::FRAC_PI_2),
            ..own
        };
        let steps = (nominals[i].duration() * rate + KNOT_TOL).floor() as i64;
        cars.push(Car {
            policy: policies[i],
            nominal: nominals[i],
            spawn: spawns[i],
            last: spawns[i] + steps,
            state,
            frames: Vec::with_capacity(steps as usize + 1),
            rng: rng_from_seed(derive_seed(config.seed, &format!("noise/{car}"))),
        });
    }
    let q_lead = own_to_world(lead);
    let lead_idx = lead as usize;
    let end = cars.iter().map(|c| c.last).max().unwrap_or(0);
    let mut online = Vec::new();
    for k in 0..=end {
        let both = cars.iter().all(|c| c.active(k));
        let tau_lead = (k - cars[lead_idx].spawn) as f64 * dt;
        let z = (both && tau_lead <= cars[lead_idx].nominal.duration() + KNOT_TOL).then(|| {
            let nominal_pos = cars[lead_idx].nominal.state_at(tau_lead).pos;
            feature_vector(cars[0].state.pos, cars[1].state.pos, lead, nominal_pos, q_lead)
        });
        for (i, car) in cars.iter_mut().enumerate() {
            if !car.active(k) {
                continue;
            }
            let agent = CarId::ALL[i];
            let tau = (k - car.spawn) as f64 * dt;
            let nominal_u = car.nominal.control_at(tau);
            let noise: [f64; 2] = [0, 1].map(|j| {
                let e: f64 = car.rng.sample(StandardNormal);
                car.policy.noise_std[j] * e
            });
            let mut feedback = noise;
            if let Some(z) = z {
                let n = nonlinear_term(&z);
                for (j, f) in feedback.iter_mut().enumerate() {
                    let linear: f64 = car.policy.gain[j].iter().zip(&z).map(|(g, x)| g * x).sum();
                    *f += linear + car.policy.nonlin_amp * n[j];
                }
                online.push(OnlineSample { k, agent, z, feedback });
            }
            let u = [nominal_u[0] + feedback[0], nominal_u[1] + feedback[1]];
            if !(car.state.speed <= SPEED_LIMIT) {
                return Err(Error::UnstablePolicy {
                    trial: config.trial_id.clone(),
                    car: agent.to_string(),
                    speed: car.state.speed,
                });
            }
            car.frames.push(Frame {
                t: k as f64 * dt,
                pos: car.state.pos,
                heading: wrap_angle(car.state.heading),
                speed: car.state.speed,
                accel: Some(u[0]),
                ang_vel: Some(u[1]),
            });
            car.state = advance(&car.state, car.nominal, tau, dt, feedback);
        }
    }
    let [a, b]: [Car; 2] = cars.try_into().unwrap_or_else(|_| unreachable!("exactly two cars"));
    let trial = DyadTrial {
        trial_id: config.trial_id.clone(),
        site: config.site,
        traj_a: a.frames,
        traj_b: b.frames,
        exclusion: None,
    };
    Ok(Simulation { trial, lead, online })
}

/// Simulates one dyad. The online features need the lead before anyone has
/// reached the intersection, so the first car to spawn is assumed to lead; if
/// the outcome disagrees the run is repeated with the other assumption.
pub fn simulate_dyad(
    config: &ScenarioConfig,
    policy_a: &PolicySpec,
    policy_b: &PolicySpec,
    nominal_a: &NominalTrajectory,
    nominal_b: &NominalTrajectory,
) -> Result<Simulation> {
    let first = if config.entry_offset >= 0.0 { CarId::A } else { CarId::B };
    let policies = [policy_a, policy_b];
    let nominals = [nominal_a, nominal_b];
    let inner = RegionRadii::default().inner;
    for assumed in [first, first.other()] {
        let sim = simulate_assuming(config, policies, nominals, assumed)?;
        match determine_lead(&sim.trial, inner) {
            Ok(actual) if actual == assumed => return Ok(sim),
            // Nobody reaches the intersection; downstream screening drops it.
            Err(Error::NoIntersectionCrossing) => return Ok(sim),
            Err(e) => return Err(e),
            Ok(_) => continue,
        }
    }
    Err(Error::InconsistentLead(config.trial_id.clone()))
}
