use std::f64::consts::PI;

use super::{bearing_dir, NominalTrajectory, UnicycleState};
use crate::error::{Error, Result};

/// Straight approach, circular arc through the heading change, straight exit,
/// driven at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcLine {
    pub entry: UnicycleState,
    pub exit_heading: f64,
    pub turn_radius: f64,
    pub approach_length: f64,
    pub exit_length: f64,
    pub speed: f64,
    pub nodes: usize,
}

/// Signed heading change in `(-pi, pi]`.
fn heading_change(from: f64, to: f64) -> f64 {
    let mut d = (to - from).rem_euclid(2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    }
    d
}

/// Rightward unit normal of a bearing.
fn right(heading: f64) -> [f64; 2] {
    [heading.cos(), -heading.sin()]
}

impl ArcLine {
    pub fn turn_angle(&self) -> f64 {
        heading_change(self.entry.heading, self.exit_heading)
    }

    pub fn arc_length(&self) -> f64 {
        self.turn_radius * self.turn_angle().abs()
    }

    pub fn path_length(&self) -> f64 {
        self.approach_length + self.arc_length() + self.exit_length
    }

    /// Position and heading after travelling `s` meters along the path.
    pub fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        let th0 = self.entry.heading;
        let d0 = bearing_dir(th0);
        let p0 = self.entry.pos;
        let s = s.clamp(0.0, self.path_length());
        let l1 = self.approach_length;
        let p1 = [p0[0] + l1 * d0[0], p0[1] + l1 * d0[1]];
        if s <= l1 {
            return ([p0[0] + s * d0[0], p0[1] + s * d0[1]], th0);
        }
        let dth = self.turn_angle();
        let r = self.turn_radius;
        let arc = self.arc_length();
        if dth == 0.0 {
            let t = s - l1;
            return ([p1[0] + t * d0[0], p1[1] + t * d0[1]], th0);
        }
        let sigma = dth.signum();
        let r0 = right(th0);
        let c = [p1[0] + sigma * r * r0[0], p1[1] + sigma * r * r0[1]];
        let on_arc = |phi: f64| {
            let th = th0 + phi;
            let rt = right(th);
            ([c[0] - sigma * r * rt[0], c[1] - sigma * r * rt[1]], th)
        };
        if s <= l1 + arc {
            return on_arc(sigma * (s - l1) / r);
        }
        let (p2, th2) = on_arc(dth);
        let d2 = bearing_dir(th2);
        let t = s - l1 - arc;
        ([p2[0] + t * d2[0], p2[1] + t * d2[1]], th2)
    }
}

/// Samples an arc-line path on a uniform time grid. Controls hold zero
/// acceleration and the turn rate that reproduces each interval's exact
/// heading change.
pub fn analytic_nominal(path: &ArcLine) -> Result<NominalTrajectory> {
    if !(path.turn_radius.is_finite() && path.turn_radius > 0.0) {
        return Err(Error::invalid(format!("turn radius must be positive, got {}", path.turn_radius)));
    }
    if !(path.speed.is_finite() && path.speed > 0.0) {
        return Err(Error::invalid(format!("speed must be positive, got {}", path.speed)));
    }
    if !(path.approach_length >= 0.0 && path.exit_length >= 0.0) {
        return Err(Error::invalid("straight segment lengths must be non-negative"));
    }
    if path.nodes < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    let length = path.path_length();
    if length <= 0.0 {
        return Err(Error::invalid("path has zero length"));
    }
    let dt = length / path.speed / (path.nodes - 1) as f64;
    let states: Vec<UnicycleState> = (0..path.nodes)
        .map(|k| {
            let (pos, heading) = path.pose_at(k as f64 * dt * path.speed);
            UnicycleState { pos, heading, speed: path.speed }
        })
        .collect();
    let controls = states.windows(2).map(|w| [0.0, (w[1].heading - w[0].heading) / dt]).collect();
    NominalTrajectory::new(states, controls, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nominal::propagate_unicycle;
    use approx::assert_abs_diff_eq;

    fn left(radius: f64, speed: f64, nodes: usize) -> ArcLine {
        ArcLine {
            entry: UnicycleState::new(1.75, -20.0, 0.0, speed),
            exit_heading: -PI / 2.0,
            turn_radius: radius,
            approach_length: 10.0,
            exit_length: 10.0,
            speed,
            nodes,
        }
    }

    #[test]
    fn quarter_arc_length() {
        let p = left(5.0, 5.0, 50);
        assert_abs_diff_eq!(p.arc_length(), 5.0 * PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.arc_length(), 7.854, epsilon = 1e-3);
        // Arc ends 5 m left of and 5 m beyond the arc start, facing -lateral.
        let (pos, th) = p.pose_at(10.0 + p.arc_length());
        assert_abs_diff_eq!(pos[0], 1.75 - 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[1], -10.0 + 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th, -PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_turn_is_straight() {
        let mut p = left(5.0, 2.0, 11);
        p.exit_heading = 0.0;
        let nom = analytic_nominal(&p).unwrap();
        for s in &nom.states {
            assert_abs_diff_eq!(s.pos[0], 1.75, epsilon = 1e-12);
            assert_eq!(s.heading, 0.0);
        }
        assert!(nom.controls.iter().all(|u| *u == [0.0, 0.0]));
        assert_abs_diff_eq!(nom.states.last().unwrap().pos[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn arc_turn_rate_is_speed_over_radius() {
        // Pure arc: every interval turns at -v / r.
        let mut p = left(5.0, 5.0, 41);
        p.approach_length = 0.0;
        p.exit_length = 0.0;
        let nom = analytic_nominal(&p).unwrap();
        for u in &nom.controls {
            assert_abs_diff_eq!(u[1], -1.0, epsilon = 1e-12);
        }
        // Independent check: integrating the unicycle under those controls
        // lands on the sampled arc.
        let mut s = nom.states[0];
        for (k, u) in nom.controls.iter().enumerate() {
            for _ in 0..20 {
                s = propagate_unicycle(&s, *u, nom.dt / 20.0);
            }
            let want = nom.states[k + 1];
            assert_abs_diff_eq!(s.pos[0], want.pos[0], epsilon = 1e-9);
            assert_abs_diff_eq!(s.pos[1], want.pos[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(analytic_nominal(&left(0.0, 5.0, 10)).is_err());
        assert!(analytic_nominal(&left(-1.0, 5.0, 10)).is_err());
    }
}
