//! Nowcast archives: parsing, writing and projection onto the planning plane.
//!
//! A nowcast is a `;`-delimited text file with one header line and one row
//! per storm cell. Blank fields are absent values. The issue time is carried
//! by the file name, `nowcast_YYYYMMDD_HHMM.csv`.

mod projection;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub use projection::{wrap_degrees, GeoPoint, PlanarFrame, EARTH_RADIUS_KM};

/// Forecast horizons carried by a nowcast row (10..60 min).
pub const FORECAST_SLOTS: usize = 6;

/// Minutes between two consecutive nowcasts and between forecast horizons.
pub const HORIZON_MINUTES: i64 = 10;

pub const HEADER: [&str; 23] = [
    "NUM", "NUPIX", "LONCEN", "LATCEN", "RADIOE", "LONOES", "LONEST", "LATSUR", "LATNOR", "DIRN",
    "VKMH", "LON10", "LAT10", "LON20", "LAT20", "LON30", "LAT30", "LON40", "LAT40", "LON50",
    "LAT50", "LON60", "LAT60",
];

const FILE_NAME_FORMAT: &str = "nowcast_%Y%m%d_%H%M.csv";

/// One row of a nowcast file.
#[derive(Debug, Clone, PartialEq)]
pub struct StormCellObservation {
    pub id: u32,
    /// Surface area in radar pixels.
    pub pixels: u32,
    pub center: GeoPoint,
    /// Effective radius, km.
    pub radius_km: f64,
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
    /// Forecast center positions at 10, 20, ..., 60 minutes.
    pub center_forecasts: [Option<GeoPoint>; FORECAST_SLOTS],
    /// Direction of displacement, degrees clockwise from North.
    pub heading_deg: f64,
    pub speed_kmh: f64,
}

impl StormCellObservation {
    /// Number of forecast horizons present.
    pub fn forecast_count(&self) -> usize {
        self.center_forecasts.iter().flatten().count()
    }

    /// Forecast at horizon `tau` (1-based).
    pub fn forecast(&self, tau: usize) -> Option<GeoPoint> {
        tau.checked_sub(1)
            .and_then(|i| self.center_forecasts.get(i).copied().flatten())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let c = self.center;
        if !(self.south <= c.lat && c.lat <= self.north) {
            return Err(format!(
                "cell {}: latitudes must satisfy LATSUR <= LATCEN <= LATNOR, got {} / {} / {}",
                self.id, self.south, c.lat, self.north
            ));
        }
        if !(self.west <= c.lon && c.lon <= self.east) {
            return Err(format!(
                "cell {}: longitudes must satisfy LONOES <= LONCEN <= LONEST, got {} / {} / {}",
                self.id, self.west, c.lon, self.east
            ));
        }
        if self.pixels < 1 {
            return Err(format!("cell {}: NUPIX must be >= 1", self.id));
        }
        if !(self.speed_kmh >= 0.0) {
            return Err(format!("cell {}: negative speed {}", self.id, self.speed_kmh));
        }
        if !(0.0..360.0).contains(&self.heading_deg) {
            return Err(format!(
                "cell {}: DIRN {} outside [0, 360)",
                self.id, self.heading_deg
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NowcastFile {
    pub issue_time: NaiveDateTime,
    pub cells: Vec<StormCellObservation>,
}

impl NowcastFile {
    pub fn file_name(&self) -> String {
        file_name_for(self.issue_time)
    }

    pub fn cell(&self, id: u32) -> Option<&StormCellObservation> {
        self.cells.iter().find(|c| c.id == id)
    }
}

pub fn file_name_for(issue_time: NaiveDateTime) -> String {
    issue_time.format(FILE_NAME_FORMAT).to_string()
}

/// Parses the issue time out of a `nowcast_YYYYMMDD_HHMM.csv` file name.
pub fn issue_time_from_name(name: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(name, FILE_NAME_FORMAT).ok()
}

pub fn parse_nowcast(path: &Path) -> Result<NowcastFile> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let issue_time = issue_time_from_name(name).ok_or_else(|| {
        Error::Schema(format!(
            "{}: file name does not match nowcast_YYYYMMDD_HHMM.csv",
            path.display()
        ))
    })?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nowcast_str(&text, issue_time, &path.display().to_string())
}

/// Parses nowcast text; `source` names the input in error messages.
pub fn parse_nowcast_str(text: &str, issue_time: NaiveDateTime, source: &str) -> Result<NowcastFile> {
    let parse_err = |line: u64, column: &str, message: String| Error::Parse {
        file: source.to_string(),
        line,
        column: column.to_string(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| parse_err(1, "header", e.to_string()))?
        .clone();
    if header.len() != HEADER.len() || header.iter().zip(HEADER).any(|(h, e)| h.trim() != e) {
        return Err(parse_err(
            1,
            "header",
            format!("expected header `{}`", HEADER.join(";")),
        ));
    }

    let mut cells = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, "row", e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let required_f64 = |i: usize| -> Result<f64> {
            let raw = field(i);
            if raw.is_empty() {
                return Err(parse_err(line, HEADER[i], "missing value".into()));
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, HEADER[i], format!("invalid number `{raw}`")))
        };
        let required_u32 = |i: usize| -> Result<u32> {
            let raw = field(i);
            raw.parse::<u32>()
                .map_err(|_| parse_err(line, HEADER[i], format!("invalid integer `{raw}`")))
        };

        let mut center_forecasts = [None; FORECAST_SLOTS];
        for (slot, forecast) in center_forecasts.iter_mut().enumerate() {
            let (lon_col, lat_col) = (11 + 2 * slot, 12 + 2 * slot);
            match (field(lon_col).is_empty(), field(lat_col).is_empty()) {
                (true, true) => {}
                (false, false) => {
                    *forecast = Some(GeoPoint::new(required_f64(lon_col)?, required_f64(lat_col)?));
                }
                (true, false) => {
                    return Err(parse_err(line, HEADER[lon_col], "longitude missing for forecast latitude".into()))
                }
                (false, true) => {
                    return Err(parse_err(line, HEADER[lat_col], "latitude missing for forecast longitude".into()))
                }
            }
        }

        let obs = StormCellObservation {
            id: required_u32(0)?,
            pixels: required_u32(1)?,
            center: GeoPoint::new(required_f64(2)?, required_f64(3)?),
            radius_km: required_f64(4)?,
            west: required_f64(5)?,
            east: required_f64(6)?,
            south: required_f64(7)?,
            north: required_f64(8)?,
            heading_deg: required_f64(9)?,
            speed_kmh: required_f64(10)?,
            center_forecasts,
        };
        obs.validate()
            .map_err(|m| Error::Schema(format!("{source}: line {line}: {m}")))?;
        if !seen.insert(obs.id) {
            return Err(Error::Schema(format!(
                "{source}: line {line}: duplicate cell ID {}",
                obs.id
            )));
        }
        cells.push(obs);
    }

    Ok(NowcastFile { issue_time, cells })
}

/// Serializes a nowcast in the same format `parse_nowcast_str` reads.
pub fn nowcast_to_string(file: &NowcastFile) -> String {
    let mut out = HEADER.join(";");
    out.push('\n');
    for c in &file.cells {
        let _ = write!(
            out,
            "{};{};{};{};{};{};{};{};{};{};{}",
            c.id,
            c.pixels,
            c.center.lon,
            c.center.lat,
            c.radius_km,
            c.west,
            c.east,
            c.south,
            c.north,
            c.heading_deg,
            c.speed_kmh
        );
        for f in &c.center_forecasts {
            match f {
                Some(p) => {
                    let _ = write!(out, ";{};{}", p.lon, p.lat);
                }
                None => out.push_str(";;"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the nowcast into `dir` under its canonical file name.
pub fn write_nowcast(file: &NowcastFile, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(file.file_name());
    fs::write(&path, nowcast_to_string(file)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads every `nowcast_*.csv` in `dir`, sorted by issue time.
pub fn read_archive(dir: &Path) -> Result<Vec<NowcastFile>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        if name.to_str().and_then(issue_time_from_name).is_some() {
            paths.push(entry.path());
        }
    }
    let mut files = paths
        .iter()
        .map(|p| parse_nowcast(p))
        .collect::<Result<Vec<_>>>()?;
    files.sort_by_key(|f| f.issue_time);
    Ok(files)
}

/// Axis-aligned storm extent on the plane, km.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlanarBox {
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl PlanarBox {
    pub fn width(&self) -> f64 {
        self.east - self.west
    }

    pub fn height(&self) -> f64 {
        self.north - self.south
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.west <= x && x <= self.east && self.south <= y && y <= self.north
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.west, self.south],
            [self.east, self.south],
            [self.east, self.north],
            [self.west, self.north],
        ]
    }

    /// Componentwise linear blend, `t = 0` gives `self`.
    pub fn lerp(&self, other: &PlanarBox, t: f64) -> PlanarBox {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        PlanarBox {
            west: mix(self.west, other.west),
            east: mix(self.east, other.east),
            south: mix(self.south, other.south),
            north: mix(self.north, other.north),
        }
    }
}

/// Center and extremities of an observed cell on the plane.
///
/// Extremities are projected along the cell's central parallel and meridian,
/// so the box is the planar image of the four extreme points.
pub fn project_extent(obs: &StormCellObservation, frame: &PlanarFrame) -> Result<([f64; 2], PlanarBox)> {
    let c = obs.center;
    let center = frame.project(c)?;
    let west = frame.project(GeoPoint::new(obs.west, c.lat))?[0];
    let east = frame.project(GeoPoint::new(obs.east, c.lat))?[0];
    let south = frame.project(GeoPoint::new(c.lon, obs.south))?[1];
    let north = frame.project(GeoPoint::new(c.lon, obs.north))?[1];
    Ok((
        center,
        PlanarBox {
            west: west.min(center[0]),
            east: east.max(center[0]),
            south: south.min(center[1]),
            north: north.max(center[1]),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 12, 19)
            .unwrap()
            .and_hms_opt(10, 30, 0)
            .unwrap()
    }

    const ROW: &str = "1;120;0.5;39.0;6.2;0.3;0.7;38.8;39.2;45;30;0.6;39.1;0.7;39.2;0.8;39.3;0.9;39.4;1.0;39.5;1.1;39.6";

    fn text(rows: &[&str]) -> String {
        let mut s = HEADER.join(";");
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    #[test]
    fn full_row_maps_every_field() {
        let file = parse_nowcast_str(&text(&[ROW]), t0(), "mem").unwrap();
        assert_eq!(file.cells.len(), 1);
        let c = &file.cells[0];
        assert_eq!(c.id, 1);
        assert_eq!(c.pixels, 120);
        assert_eq!(c.center, GeoPoint::new(0.5, 39.0));
        assert_eq!((c.west, c.east, c.south, c.north), (0.3, 0.7, 38.8, 39.2));
        assert_eq!((c.heading_deg, c.speed_kmh), (45.0, 30.0));
        assert_eq!(c.forecast_count(), 6);
        assert_eq!(c.forecast(6), Some(GeoPoint::new(1.1, 39.6)));
    }

    #[test]
    fn blank_late_forecasts_are_absent() {
        let row = "1;120;0.5;39.0;6.2;0.3;0.7;38.8;39.2;45;30;0.6;39.1;0.7;39.2;0.8;39.3;0.9;39.4;;;;";
        let file = parse_nowcast_str(&text(&[row]), t0(), "mem").unwrap();
        let c = &file.cells[0];
        assert_eq!(c.forecast_count(), 4);
        assert_eq!(c.forecast(5), None);
        assert_eq!(c.forecast(6), None);
    }

    #[test]
    fn inverted_latitudes_are_rejected() {
        let row = "1;120;0.5;39.0;6.2;0.3;0.7;39.2;38.8;45;30;;;;;;;;;;;;";
        let err = parse_nowcast_str(&text(&[row]), t0(), "mem").unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = parse_nowcast_str(&text(&[ROW, ROW]), t0(), "mem").unwrap_err();
        assert!(err.to_string().contains("duplicate cell ID 1"), "{err}");
    }

    #[test]
    fn malformed_number_names_line_and_column() {
        let row = ROW.replacen("120", "12x", 1);
        let err = parse_nowcast_str(&text(&[&row]), t0(), "mem").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "NUPIX");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn half_forecast_pair_is_a_parse_error() {
        let row = "1;120;0.5;39.0;6.2;0.3;0.7;38.8;39.2;45;30;0.6;;;;;;;;;;;";
        let err = parse_nowcast_str(&text(&[row]), t0(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { ref column, .. } if column == "LAT10"), "{err}");
    }

    #[test]
    fn wrong_field_count_is_a_parse_error() {
        let err = parse_nowcast_str(&text(&["1;2;3"]), t0(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_header_is_rejected() {
        let err = parse_nowcast_str("NUM;PIX\n", t0(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn file_name_carries_issue_time() {
        assert_eq!(file_name_for(t0()), "nowcast_20161219_1030.csv");
        assert_eq!(issue_time_from_name("nowcast_20161219_1030.csv"), Some(t0()));
        assert_eq!(issue_time_from_name("nowcast.csv"), None);
    }

    #[test]
    fn projected_extent_orders_extremities() {
        let file = parse_nowcast_str(&text(&[ROW]), t0(), "mem").unwrap();
        let frame = PlanarFrame::new(39.5, 2.5);
        let (center, bx) = project_extent(&file.cells[0], &frame).unwrap();
        assert!(bx.contains(center[0], center[1]));
        // 0.4° of longitude at 39° is about 34.6 km; 0.4° of latitude about 44.5 km.
        assert!((bx.width() - 34.6).abs() < 0.5, "{}", bx.width());
        assert!((bx.height() - 44.5).abs() < 0.5, "{}", bx.height());
    }
}
