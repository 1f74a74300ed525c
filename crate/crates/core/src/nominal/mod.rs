//! Nominal left-turn reference trajectories for a unicycle vehicle.
//!
//! Positions are `[lateral, longitudinal]` in meters. Heading is a bearing
//! measured clockwise from the +longitudinal axis, so heading 0 drives along
//! +longitudinal, positive turn rate turns right, and a left turn has `omega < 0`.

mod analytic;
mod corridor;
mod library;
mod scvx;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analytic::{analytic_nominal, ArcLine};
pub use corridor::{Corridor, HalfPlane, Region as CorridorRegion};
pub use library::NominalLibrary;
pub use scvx::{
    solve_nominal, standard_left_turn, straight_problem, NominalProblem, NominalSolution, ScvxOptions, BOUNDARY_RADIUS,
    LANE_WIDTH, POCKET,
};

/// Tolerance used when a time lands on a knot of the control grid.
pub(crate) const KNOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleState {
    pub pos: [f64; 2],
    pub heading: f64,
    pub speed: f64,
}

impl UnicycleState {
    pub fn new(lat: f64, lon: f64, heading: f64, speed: f64) -> Self {
        Self { pos: [lat, lon], heading, speed }
    }

    pub(crate) fn to_array(&self) -> [f64; 4] {
        [self.pos[0], self.pos[1], self.heading, self.speed]
    }

    pub(crate) fn from_array(s: [f64; 4]) -> Self {
        Self { pos: [s[0], s[1]], heading: s[2], speed: s[3] }
    }
}

/// Unit vector of a bearing in `[lateral, longitudinal]` coordinates.
pub fn bearing_dir(heading: f64) -> [f64; 2] {
    [heading.sin(), heading.cos()]
}

#[inline]
fn deriv(s: &[f64; 4], u: [f64; 2]) -> [f64; 4] {
    let [_, _, th, v] = *s;
    [v * th.sin(), v * th.cos(), u[1], u[0]]
}

#[inline]
fn axpy(s: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

/// RK4 step on the raw state `[lat, lon, heading, speed]`, without clamping.
pub(crate) fn rk4(s: &[f64; 4], control: [f64; 2], dt: f64) -> [f64; 4] {
    let k1 = deriv(s, control);
    let k2 = deriv(&axpy(s, 0.5 * dt, &k1), control);
    let k3 = deriv(&axpy(s, 0.5 * dt, &k2), control);
    let k4 = deriv(&axpy(s, dt, &k3), control);
    let mut n = [0.0; 4];
    for i in 0..4 {
        n[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    n
}

/// One RK4 step of the unicycle under a constant control `[accel, omega]`.
/// Speed is clamped at zero after the step; heading is not wrapped.
pub fn propagate_unicycle(state: &UnicycleState, control: [f64; 2], dt: f64) -> UnicycleState {
    let n = rk4(&state.to_array(), control, dt);
    UnicycleState { pos: [n[0], n[1]], heading: n[2], speed: n[3].max(0.0) }
}

/// States on a uniform time grid with zero-order-hold controls between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalTrajectory {
    pub states: Vec<UnicycleState>,
    /// `controls[k]` is held on `[k dt, (k + 1) dt)`; one fewer than `states`.
    pub controls: Vec<[f64; 2]>,
    pub dt: f64,
}

impl NominalTrajectory {
    pub fn new(states: Vec<UnicycleState>, controls: Vec<[f64; 2]>, dt: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::invalid("nominal trajectory needs at least two states"));
        }
        if controls.len() + 1 != states.len() {
            return Err(Error::invalid(format!(
                "{} states need {} controls, got {}",
                states.len(),
                states.len() - 1,
                controls.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let finite = states
            .iter()
            .all(|s| s.pos.iter().chain([&s.heading, &s.speed]).all(|v| v.is_finite()))
            && controls.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("nominal trajectory contains non-finite values"));
        }
        Ok(Self { states, controls, dt })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.dt
    }

    /// Index of the control interval containing `tau`, snapping times within
    /// a relative tolerance of a knot onto that knot.
    pub fn interval_index(&self, tau: f64) -> Option<usize> {
        if tau < -KNOT_TOL * self.dt {
            return None;
        }
        let x = (tau / self.dt).max(0.0);
        let mut k = x.floor();
        if (k + 1.0 - x) < KNOT_TOL {
            k += 1.0;
        }
        let k = k as usize;
        (k < self.controls.len()).then_some(k)
    }

    /// Zero-order-hold control at elapsed time `tau`; zero outside `[0, duration)`.
    pub fn control_at(&self, tau: f64) -> [f64; 2] {
        self.interval_index(tau).map_or([0.0, 0.0], |k| self.controls[k])
    }

    /// State at elapsed time `tau`, integrated from the preceding node under
    /// its held control. Clamped to the first and last states outside the span.
    pub fn state_at(&self, tau: f64) -> UnicycleState {
        match self.interval_index(tau) {
            None if tau <= 0.0 => self.states[0],
            None => *self.states.last().expect("nonempty"),
            Some(k) => {
                let s = tau - k as f64 * self.dt;
                if s <= KNOT_TOL * self.dt {
                    self.states[k]
                } else {
                    propagate_unicycle(&self.states[k], self.controls[k], s)
                }
            }
        }
    }

    /// Largest position mismatch between each node and the RK4 step from its predecessor.
    pub fn max_step_residual(&self) -> f64 {
        self.states
            .windows(2)
            .zip(&self.controls)
            .map(|(w, u)| {
                let p = propagate_unicycle(&w[0], *u, self.dt);
                (p.pos[0] - w[1].pos[0]).hypot(p.pos[1] - w[1].pos[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (k, s) in self.states.iter().enumerate() {
            let u = self.controls.get(k);
            w.serialize(NominalRow {
                k,
                t_s: k as f64 * self.dt,
                pos_lat_m: s.pos[0],
                pos_lon_m: s.pos[1],
                heading_rad: s.heading,
                speed_mps: s.speed,
                a_mps2: u.map(|u| u[0]),
                omega_radps: u.map(|u| u[1]),
            })?;
        }
        w.flush().map_err(|e| Error::io("<nominal csv>", e))?;
        Ok(())
    }

    /// Parses the nominal CSV format. The final row's controls may be empty.
    pub fn read_csv<R: Read>(reader: R, file: &str) -> Result<Self> {
        let schema = |line: u64, message: String| Error::Schema { file: file.to_string(), line, message };
        let mut r = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in r.deserialize::<NominalRow>().enumerate() {
            let line = i as u64 + 2;
            let row = rec.map_err(|e| schema(line, e.to_string()))?;
            if row.k != i {
                return Err(schema(line, format!("expected k = {i}, got {}", row.k)));
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(schema(1, format!("need at least two rows, got {}", rows.len())));
        }
        let dt = rows[1].t_s - rows[0].t_s;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(schema(3, "time column must be strictly increasing".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            let expect = rows[0].t_s + k as f64 * dt;
            if !((row.t_s - expect).abs() <= 1e-6) {
                return Err(schema(k as u64 + 2, format!("t_s = {} is off the uniform grid", row.t_s)));
            }
        }
        let n = rows.len();
        let mut controls = Vec::with_capacity(n - 1);
        for (k, row) in rows[..n - 1].iter().enumerate() {
            match (row.a_mps2, row.omega_radps) {
                (Some(a), Some(w)) => controls.push([a, w]),
                _ => return Err(schema(k as u64 + 2, "missing control value".into())),
            }
        }
        let states = rows
            .iter()
            .map(|r| UnicycleState::new(r.pos_lat_m, r.pos_lon_m, r.heading_rad, r.speed_mps))
            .collect();
        Self::new(states, controls, dt).map_err(|e| schema(1, e.to_string()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NominalRow {
    k: usize,
    t_s: f64,
    pos_lat_m: f64,
    pos_lon_m: f64,
    heading_rad: f64,
    speed_mps: f64,
    a_mps2: Option<f64>,
    omega_radps: Option<f64>,
}
