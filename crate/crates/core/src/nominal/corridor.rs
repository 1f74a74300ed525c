use serde::{Deserialize, Serialize};

/// `normal . p <= offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfPlane {
    pub fn violation(&self, p: [f64; 2]) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] - self.offset).max(0.0)
    }
}

/// Convex polygon (possibly unbounded) given as an intersection of half-planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub planes: Vec<HalfPlane>,
}

impl Region {
    /// Axis-aligned box; infinite limits are omitted.
    pub fn rect(name: &str, lat: (f64, f64), lon: (f64, f64)) -> Self {
        let mut planes = Vec::new();
        let mut push = |normal: [f64; 2], offset: f64| {
            if offset.is_finite() {
                planes.push(HalfPlane { normal, offset });
            }
        };
        push([-1.0, 0.0], -lat.0);
        push([1.0, 0.0], lat.1);
        push([0.0, -1.0], -lon.0);
        push([0.0, 1.0], lon.1);
        Self { name: name.to_string(), planes }
    }

    pub fn violation(&self, p: [f64; 2]) -> f64 {
        self.planes.iter().map(|h| h.violation(p)).fold(0.0, f64::max)
    }
}

/// Lane-keeping corridor as an ordered union of convex regions. A node is
/// constrained to the first region that contains its current position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub regions: Vec<Region>,
}

impl Corridor {
    /// Right-hand-traffic left turn: approach northbound in `0 <= lat <= w`,
    /// exit westbound in `0 <= lon <= w`, with a turning pocket covering the
    /// near-side quadrant of the box out to `pocket` meters.
    pub fn left_turn(lane_width: f64, pocket: f64) -> Self {
        let w = lane_width;
        let inf = f64::INFINITY;
        Self {
            regions: vec![
                Region::rect("pocket", (-pocket, w), (-pocket, w)),
                Region::rect("approach", (0.0, w), (-inf, inf)),
                Region::rect("exit", (-inf, inf), (0.0, w)),
            ],
        }
    }

    pub fn straight(lat_lo: f64, lat_hi: f64) -> Self {
        let inf = f64::INFINITY;
        Self { regions: vec![Region::rect("lane", (lat_lo, lat_hi), (-inf, inf))] }
    }

    pub fn unbounded() -> Self {
        Self { regions: vec![Region { name: "plane".into(), planes: Vec::new() }] }
    }

    pub fn violation(&self, p: [f64; 2]) -> f64 {
        self.regions.iter().map(|r| r.violation(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        self.violation(p) <= tol
    }

    /// First region containing `p`, or the least violated one.
    pub fn assign(&self, p: [f64; 2], tol: f64) -> usize {
        if let Some(i) = self.regions.iter().position(|r| r.violation(p) <= tol) {
            return i;
        }
        let mut best = 0;
        for (i, r) in self.regions.iter().enumerate() {
            if r.violation(p) < self.regions[best].violation(p) {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_turn_membership() {
        let c = Corridor::left_turn(3.5, 10.0);
        assert_eq!(c.assign([1.75, -20.0], 0.0), 1);
        assert_eq!(c.assign([1.75, -5.0], 0.0), 0);
        assert_eq!(c.assign([-20.0, 1.75], 0.0), 2);
        assert!(!c.contains([-20.0, -20.0], 1e-9));
        assert!(!c.contains([5.0, -20.0], 1e-9));
        assert!((c.violation([5.0, -20.0]) - 1.5).abs() < 1e-12);
    }
}
