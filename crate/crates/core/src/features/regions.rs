use serde::{Deserialize, Serialize};

use super::signal::unwrap_angles;
use super::{CarId, DyadTrial, Exclusion, Frame, Region};
use crate::error::{Error, Result};

/// Slack on the outer boundary so a car spawned exactly on it counts as inside.
const BOUNDARY_TOL: f64 = 1e-9;

/// Accepted net bearing change through the intersection, in degrees. Bearings
/// grow clockwise, so a left turn is negative.
pub const LEFT_TURN_RANGE_DEG: (f64, f64) = (-120.0, -60.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRadii {
    /// Intersection circle; a frame is inside when strictly closer than this.
    pub inner: f64,
    /// Analysis boundary; frames farther than this are outside the regions.
    pub outer: f64,
}

impl Default for RegionRadii {
    fn default() -> Self {
        Self { inner: 10.0, outer: 25.0 }
    }
}

/// First frame strictly inside the circle of `radius`.
pub fn circle_entry(traj: &[Frame], radius: f64) -> Option<usize> {
    traj.iter().position(|f| f.dist() < radius)
}

/// First frame on or inside the boundary of `radius`.
pub fn boundary_entry(traj: &[Frame], radius: f64) -> Option<usize> {
    traj.iter().position(|f| f.dist() <= radius + BOUNDARY_TOL)
}

fn position_at(traj: &[Frame], t: f64) -> Option<[f64; 2]> {
    let (first, last) = (traj.first()?, traj.last()?);
    if t < first.t || t > last.t {
        return None;
    }
    let i = traj.partition_point(|f| f.t < t);
    if traj[i].t == t {
        return Some(traj[i].pos);
    }
    let (f0, f1) = (&traj[i - 1], &traj[i]);
    let s = (t - f0.t) / (f1.t - f0.t);
    Some([f0.pos[0] + s * (f1.pos[0] - f0.pos[0]), f0.pos[1] + s * (f1.pos[1] - f0.pos[1])])
}

fn inside(p: [f64; 2], radius: f64) -> bool {
    p[0].hypot(p[1]) <= radius + BOUNDARY_TOL
}

/// Interval during which the dyad interacts: from the first time both cars are
/// within `radius` until the later of the two leaves it for the last time,
/// clipped to the span where both are logged. Positions between logged frames
/// are linearly interpolated.
pub fn interaction_window(trial: &DyadTrial, radius: f64) -> Option<(f64, f64)> {
    let (a, b) = (&trial.traj_a, &trial.traj_b);
    let lo = a.first()?.t.max(b.first()?.t);
    let hi = a.last()?.t.min(b.last()?.t);
    if lo > hi {
        return None;
    }
    let mut times: Vec<f64> =
        a.iter().chain(b.iter()).map(|f| f.t).filter(|t| (lo..=hi).contains(t)).collect();
    times.push(lo);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let start = times.into_iter().find(|&t| {
        let both = position_at(a, t).zip(position_at(b, t));
        both.is_some_and(|(pa, pb)| inside(pa, radius) && inside(pb, radius))
    })?;
    let last_inside = |traj: &[Frame]| traj.iter().rev().find(|f| inside(f.pos, radius)).map(|f| f.t);
    let end = last_inside(a).into_iter().chain(last_inside(b)).fold(f64::NEG_INFINITY, f64::max).min(hi);
    (end >= start).then_some((start, end))
}

/// The car entering the intersection circle first leads. Exact ties go to A.
pub fn determine_lead(trial: &DyadTrial, radius: f64) -> Result<CarId> {
    let entry = |traj: &[Frame]| circle_entry(traj, radius).map(|i| traj[i].t);
    match (entry(&trial.traj_a), entry(&trial.traj_b)) {
        (None, None) => Err(Error::NoIntersectionCrossing),
        (Some(_), None) => Ok(CarId::A),
        (None, Some(_)) => Ok(CarId::B),
        (Some(ta), Some(tb)) if ta < tb => Ok(CarId::A),
        (Some(ta), Some(tb)) if tb < ta => Ok(CarId::B),
        (Some(_), Some(_)) => {
            log::warn!("trial {}: both cars enter the intersection together; A leads", trial.trial_id);
            Ok(CarId::A)
        }
    }
}

/// Region label per frame from the car's own distance to the origin. Frames
/// outside the outer radius before entry are unlabelled, as is everything
/// after the car leaves the outer radius following its exit.
pub fn segment_regions(traj: &[Frame], radii: &RegionRadii) -> Vec<Option<Region>> {
    let mut entered = false;
    let mut departed = false;
    traj.iter()
        .map(|f| {
            let d = f.dist();
            if departed {
                return None;
            }
            if d < radii.inner {
                entered = true;
                return Some(Region::Intersection);
            }
            let within = d <= radii.outer + BOUNDARY_TOL;
            match (entered, within) {
                (false, true) => Some(Region::Approach),
                (true, true) => Some(Region::Exit),
                (false, false) => None,
                (true, false) => {
                    departed = true;
                    None
                }
            }
        })
        .collect()
}

/// Net bearing change in radians from the first to the last labelled frame,
/// along the unwrapped heading. A minimum-effort turn starts bending before
/// the intersection circle, so the whole labelled span is measured. `None`
/// when the car never enters the intersection.
pub fn turn_angle(traj: &[Frame], radii: &RegionRadii) -> Option<f64> {
    let labels = segment_regions(traj, radii);
    if !labels.contains(&Some(Region::Intersection)) {
        return None;
    }
    let first = labels.iter().position(Option::is_some)?;
    let last = labels.iter().rposition(Option::is_some)?;
    let h = unwrap_angles(&traj[first..=last].iter().map(|f| f.heading).collect::<Vec<_>>());
    Some(h[h.len() - 1] - h[0])
}

pub fn is_left_turn(traj: &[Frame], radii: &RegionRadii) -> bool {
    let (lo, hi) = LEFT_TURN_RANGE_DEG;
    turn_angle(traj, radii)
        .is_some_and(|d| (lo.to_radians()..=hi.to_radians()).contains(&d))
}

/// Screens a trial: someone must cross the intersection, both cars must turn
/// left, and both must be inside the analysis boundary at some common time.
pub fn classify_trial(trial: &DyadTrial, radii: &RegionRadii) -> Option<Exclusion> {
    if determine_lead(trial, radii.inner).is_err() {
        return Some(Exclusion::NoIntersectionCrossing);
    }
    for car in CarId::ALL {
        if !is_left_turn(trial.traj(car), radii) {
            return Some(Exclusion::NotLeftTurn { car });
        }
    }
    if interaction_window(trial, radii.outer).is_none() {
        return Some(Exclusion::NoInteraction);
    }
    None
}
