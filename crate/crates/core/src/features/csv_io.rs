use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::signal::wrap_angle;
use super::{CarId, DyadTrial, Frame, Site};
use crate::error::{Error, Result};

const REQUIRED: [&str; 8] =
    ["trial_id", "site", "car_id", "t_s", "pos_lat_m", "pos_lon_m", "heading_rad", "speed_mps"];
const OPTIONAL: [&str; 2] = ["accel_mps2", "ang_vel_radps"];

struct Columns {
    required: [usize; 8],
    optional: [Option<usize>; 2],
}

impl Columns {
    fn locate(headers: &csv::StringRecord, file: &str) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let mut required = [0; 8];
        for (slot, name) in required.iter_mut().zip(REQUIRED) {
            *slot = find(name).ok_or_else(|| Error::Schema {
                file: file.to_string(),
                line: 1,
                message: format!("missing required column `{name}`"),
            })?;
        }
        Ok(Self { required, optional: OPTIONAL.map(find) })
    }
}

struct PartialTrial {
    site: Site,
    first_line: u64,
    frames: [Vec<Frame>; 2],
}

/// Reads a trial CSV with one row per frame. Rows may interleave trials and
/// cars but each car's times must increase. Trials are returned ordered by id;
/// headings are wrapped into `(-pi, pi]`.
pub fn read_trials<R: Read>(reader: R, file: &str) -> Result<Vec<DyadTrial>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let cols = Columns::locate(rdr.headers()?, file)?;
    let mut trials: BTreeMap<String, PartialTrial> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let schema = |message: String| Error::Schema { file: file.to_string(), line, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col);
            let v: f64 = raw.parse().map_err(|_| schema(format!("column `{name}`: `{raw}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(schema(format!("column `{name}`: value is not finite")))
            }
        };
        let optional = |slot: usize| -> Result<Option<f64>> {
            match cols.optional[slot] {
                Some(col) if !field(col).is_empty() => number(col, OPTIONAL[slot]).map(Some),
                _ => Ok(None),
            }
        };
        let [c_id, c_site, c_car, c_t, c_lat, c_lon, c_h, c_v] = cols.required;
        let trial_id = field(c_id);
        if trial_id.is_empty() {
            return Err(schema("column `trial_id`: empty".into()));
        }
        let site = Site::parse(field(c_site))
            .ok_or_else(|| schema(format!("column `site`: `{}` is not ISR or NYC", field(c_site))))?;
        let car = CarId::parse(field(c_car))
            .ok_or_else(|| schema(format!("column `car_id`: `{}` is not A or B", field(c_car))))?;
        let frame = Frame {
            t: number(c_t, "t_s")?,
            pos: [number(c_lat, "pos_lat_m")?, number(c_lon, "pos_lon_m")?],
            heading: wrap_angle(number(c_h, "heading_rad")?),
            speed: number(c_v, "speed_mps")?,
            accel: optional(0)?,
            ang_vel: optional(1)?,
        };
        let entry = trials
            .entry(trial_id.to_string())
            .or_insert_with(|| PartialTrial { site, first_line: line, frames: [Vec::new(), Vec::new()] });
        if entry.site != site {
            return Err(schema(format!("trial `{trial_id}` changes site from {} to {site}", entry.site)));
        }
        let frames = &mut entry.frames[car as usize];
        if let Some(prev) = frames.last() {
            if !(frame.t > prev.t) {
                return Err(schema(format!("column `t_s`: time {} does not increase for car {car}", frame.t)));
            }
        }
        frames.push(frame);
    }
    if trials.is_empty() {
        return Err(Error::EmptyInput(format!("{file} contains no frames")));
    }
    trials
        .into_iter()
        .map(|(trial_id, p)| {
            let [traj_a, traj_b] = p.frames;
            if let Some(car) = [(CarId::A, &traj_a), (CarId::B, &traj_b)]
                .iter()
                .find(|(_, f)| f.len() < 2)
                .map(|(c, _)| *c)
            {
                return Err(Error::Schema {
                    file: file.to_string(),
                    line: p.first_line,
                    message: format!("trial `{trial_id}` has fewer than 2 frames for car {car}"),
                });
            }
            Ok(DyadTrial { trial_id, site: p.site, traj_a, traj_b, exclusion: None })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes trials in the schema `read_trials` accepts. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_trials<W: Write>(writer: W, trials: &[DyadTrial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REQUIRED.iter().chain(OPTIONAL.iter()))?;
    for trial in trials {
        for car in CarId::ALL {
            for f in trial.traj(car) {
                w.write_record([
                    trial.trial_id.clone(),
                    trial.site.to_string(),
                    car.to_string(),
                    f.t.to_string(),
                    f.pos[0].to_string(),
                    f.pos[1].to_string(),
                    f.heading.to_string(),
                    f.speed.to_string(),
                    opt(f.accel),
                    opt(f.ang_vel),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<trial csv>", e))?;
    Ok(())
}
