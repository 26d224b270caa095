//! T-Drive trajectory ingestion.
//!
//! Rows are `taxi_id,datetime,longitude,latitude` with `YYYY-MM-DD HH:MM:SS`
//! timestamps. Coordinates are mapped onto the simulation square with an
//! affine fit of the data's bounding box, then resampled to the slot length
//! by linear interpolation.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDateTime;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Point;
use crate::scalar::Scalar;

const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub longitude: f64,
    pub latitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    /// Strictly increasing timestamps, at least two samples.
    pub samples: Vec<TrajectorySample>,
}

/// Bounding box of every retained sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl GeoBox {
    fn of(trajectories: &[Trajectory]) -> Option<Self> {
        let mut it = trajectories.iter().flat_map(|t| t.samples.iter());
        let first = it.next()?;
        let init = GeoBox {
            lon_min: first.longitude,
            lon_max: first.longitude,
            lat_min: first.latitude,
            lat_max: first.latitude,
        };
        Some(it.fold(init, |b, s| GeoBox {
            lon_min: b.lon_min.min(s.longitude),
            lon_max: b.lon_max.max(s.longitude),
            lat_min: b.lat_min.min(s.latitude),
            lat_max: b.lat_max.max(s.latitude),
        }))
    }

    /// Maps (lon, lat) into `[0, side]²`. A zero-width axis maps to the centre.
    pub fn map(&self, lon: f64, lat: f64, side_km: f64) -> (f64, f64) {
        let axis = |v: f64, lo: f64, hi: f64| {
            if hi > lo {
                (v - lo) / (hi - lo) * side_km
            } else {
                side_km / 2.0
            }
        };
        (
            axis(lon, self.lon_min, self.lon_max),
            axis(lat, self.lat_min, self.lat_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdriveData {
    pub trajectories: Vec<Trajectory>,
    pub bbox: GeoBox,
    /// Rows that could not be parsed.
    pub malformed_rows: usize,
    /// Rows whose timestamp did not advance past the previous kept row.
    pub dropped_rows: usize,
}

pub fn load_tdrive(path: impl AsRef<Path>) -> Result<TdriveData> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))?;
    parse_tdrive(file)
}

pub fn parse_tdrive<R: Read>(reader: R) -> Result<TdriveData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut order: Vec<String> = Vec::new();
    let mut by_id: std::collections::HashMap<String, Vec<TrajectorySample>> = Default::default();
    let (mut malformed, mut dropped) = (0usize, 0usize);

    for (line, row) in rdr.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                malformed += 1;
                continue;
            }
        };
        if line == 0 && row.get(0).is_some_and(|f| f.eq_ignore_ascii_case("taxi_id")) {
            continue;
        }
        let Some(sample) = parse_row(&row) else {
            malformed += 1;
            continue;
        };
        let id = row[0].to_string();
        let samples = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        if samples.last().is_some_and(|prev| sample.timestamp <= prev.timestamp) {
            dropped += 1;
            continue;
        }
        samples.push(sample);
    }
    if malformed > 0 {
        warn!("t-drive: skipped {malformed} malformed rows");
    }
    if dropped > 0 {
        warn!("t-drive: dropped {dropped} rows with non-increasing timestamps");
    }

    let trajectories: Vec<Trajectory> = order
        .into_iter()
        .filter_map(|id| {
            let samples = by_id.remove(&id)?;
            (samples.len() >= 2).then_some(Trajectory { user_id: id, samples })
        })
        .collect();
    let bbox = GeoBox::of(&trajectories)
        .ok_or_else(|| Error::Data("no usable trajectories (need >= 2 samples each)".into()))?;
    Ok(TdriveData {
        trajectories,
        bbox,
        malformed_rows: malformed,
        dropped_rows: dropped,
    })
}

fn parse_row(row: &csv::StringRecord) -> Option<TrajectorySample> {
    if row.len() != 4 {
        return None;
    }
    let ts = NaiveDateTime::parse_from_str(&row[1], DATETIME_FORMAT).ok()?;
    let longitude: f64 = row[2].parse().ok()?;
    let latitude: f64 = row[3].parse().ok()?;
    if !longitude.is_finite() || !latitude.is_finite() {
        return None;
    }
    Some(TrajectorySample {
        timestamp: ts.and_utc().timestamp(),
        longitude,
        latitude,
    })
}

impl TdriveData {
    /// Every trajectory mapped into the square and resampled every `slot_s`
    /// seconds from its first timestamp.
    pub fn to_paths<T: Scalar>(&self, side_km: f64, slot_s: f64) -> Vec<Vec<Point<T>>> {
        self.trajectories
            .iter()
            .map(|t| resample(t, &self.bbox, side_km, slot_s))
            .collect()
    }
}

/// Linear interpolation of a trajectory at `t0 + k·slot_s`, `k = 0, 1, ...`
/// up to the last timestamp.
pub fn resample<T: Scalar>(traj: &Trajectory, bbox: &GeoBox, side_km: f64, slot_s: f64) -> Vec<Point<T>> {
    let pts: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .map(|s| {
            let (x, y) = bbox.map(s.longitude, s.latitude, side_km);
            (s.timestamp as f64, x, y)
        })
        .collect();
    let Some(&(t0, _, _)) = pts.first() else {
        return Vec::new();
    };
    let t_end = pts[pts.len() - 1].0;
    let n = ((t_end - t0) / slot_s).floor() as usize + 1;
    let mut seg = 0usize;
    (0..n)
        .map(|k| {
            let t = t0 + k as f64 * slot_s;
            while seg + 2 < pts.len() && pts[seg + 1].0 <= t {
                seg += 1;
            }
            let (ta, xa, ya) = pts[seg];
            let (tb, xb, yb) = pts[(seg + 1).min(pts.len() - 1)];
            let w = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
            Point::new(T::lit(xa + (xb - xa) * w), T::lit(ya + (yb - ya) * w))
        })
        .collect()
}
