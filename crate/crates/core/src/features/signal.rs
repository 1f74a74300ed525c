use std::f64::consts::PI;

use super::Frame;
use crate::error::{Error, Result};

/// Time slack when deciding whether a grid point lies inside a trajectory's span.
const GRID_TOL: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned
/// unchanged.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Removes `2 pi` jumps so consecutive differences lie in `(-pi, pi]`.
pub fn unwrap_angles(h: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(h.len());
    let mut prev: Option<f64> = None;
    for &a in h {
        let v = match prev {
            None => a,
            Some(p) => p + wrap_angle(a - p),
        };
        out.push(v);
        prev = Some(v);
    }
    out
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

fn interpolate(f0: &Frame, f1: &Frame, t: f64) -> Frame {
    let s = (t - f0.t) / (f1.t - f0.t);
    let both = |a: Option<f64>, b: Option<f64>| Some(lerp(a?, b?, s));
    Frame {
        t,
        pos: [lerp(f0.pos[0], f1.pos[0], s), lerp(f0.pos[1], f1.pos[1], s)],
        heading: wrap_angle(f0.heading + s * wrap_angle(f1.heading - f0.heading)),
        speed: lerp(f0.speed, f1.speed, s),
        accel: both(f0.accel, f1.accel),
        ang_vel: both(f0.ang_vel, f1.ang_vel),
    }
}

/// Resamples onto the grid `t = k / rate` covering the trajectory's span.
/// Returns the first grid index and the resampled frames. A frame whose time
/// equals a grid time exactly is passed through unchanged.
pub fn resample(traj: &[Frame], rate: f64) -> Result<(i64, Vec<Frame>)> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::invalid(format!("frame rate must be positive, got {rate}")));
    }
    if traj.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: traj.len() });
    }
    if traj.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::invalid("frame times must be strictly increasing"));
    }
    let t0 = traj[0].t;
    let tn = traj[traj.len() - 1].t;
    let k0 = ((t0 - GRID_TOL) * rate).ceil() as i64;
    let k1 = ((tn + GRID_TOL) * rate).floor() as i64;
    let mut out = Vec::with_capacity((k1 - k0 + 1).max(0) as usize);
    for k in k0..=k1 {
        let t = k as f64 / rate;
        let tc = t.clamp(t0, tn);
        let i = traj.partition_point(|f| f.t < tc);
        let frame = if i < traj.len() && traj[i].t == tc {
            Frame { t, ..traj[i] }
        } else {
            Frame { t, ..interpolate(&traj[i - 1], &traj[i], tc) }
        };
        out.push(frame);
    }
    Ok((k0, out))
}

fn central_diff(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (v[b] - v[a]) / (t[b] - t[a])
        })
        .collect()
}

fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Fills in controls. Logged values are kept when every frame has them;
/// otherwise turn rate is the moving-average-smoothed central difference of
/// the unwrapped heading, and acceleration the central difference of speed.
pub fn derive_controls(traj: &[Frame], window: usize) -> Result<Vec<Frame>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("smoothing window must be odd, got {window}")));
    }
    let needed = window.max(2);
    if traj.len() < needed {
        return Err(Error::TooShort { needed, got: traj.len() });
    }
    let t: Vec<f64> = traj.iter().map(|f| f.t).collect();
    let ang_vel: Vec<f64> = if traj.iter().all(|f| f.ang_vel.is_some()) {
        traj.iter().map(|f| f.ang_vel.unwrap_or_default()).collect()
    } else {
        let h = unwrap_angles(&traj.iter().map(|f| f.heading).collect::<Vec<_>>());
        moving_average(&central_diff(&t, &h), window)
    };
    let accel: Vec<f64> = if traj.iter().all(|f| f.accel.is_some()) {
        traj.iter().map(|f| f.accel.unwrap_or_default()).collect()
    } else {
        central_diff(&t, &traj.iter().map(|f| f.speed).collect::<Vec<_>>())
    };
    Ok(traj
        .iter()
        .zip(accel.into_iter().zip(ang_vel))
        .map(|(f, (a, w))| Frame { accel: Some(a), ang_vel: Some(w), ..*f })
        .collect())
}
