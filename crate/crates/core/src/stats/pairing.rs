use chrono::Duration;

use crate::error::{Error, Result};
use crate::nowcast::{project_extent, NowcastFile, PlanarFrame, FORECAST_SLOTS, HORIZON_MINUTES};

/// Observed minus forecast cell center at one horizon, km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastErrorSample {
    pub horizon: usize,
    pub dx: f64,
    pub dy: f64,
}

/// Change in planar width/height over one 10-minute step, km.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSample {
    /// Pixel count at the start of the step.
    pub pixels: u32,
    pub dw: f64,
    pub dh: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairedErrors {
    pub center: Vec<ForecastErrorSample>,
    pub growth: Vec<GrowthSample>,
}

impl PairedErrors {
    pub fn at_horizon(&self, tau: usize) -> impl Iterator<Item = &ForecastErrorSample> {
        self.center.iter().filter(move |s| s.horizon == tau)
    }

    pub fn max_horizon(&self) -> usize {
        self.center.iter().map(|s| s.horizon).max().unwrap_or(0)
    }
}

/// Pairs each file's center forecasts with the observations made `10·τ`
/// minutes later, and consecutive observations of the same cell ID into size
/// increments.
pub fn pair_errors(archive: &[NowcastFile], frame: &PlanarFrame) -> Result<PairedErrors> {
    let step = Duration::minutes(HORIZON_MINUTES);
    for pair in archive.windows(2) {
        if pair[1].issue_time - pair[0].issue_time != step {
            return Err(Error::Structure(format!(
                "nowcasts {} and {} are not {HORIZON_MINUTES} minutes apart",
                pair[0].file_name(),
                pair[1].file_name()
            )));
        }
    }

    let mut out = PairedErrors::default();
    for (i, file) in archive.iter().enumerate() {
        for cell in &file.cells {
            for tau in 1..=FORECAST_SLOTS {
                let (Some(forecast), Some(later)) = (cell.forecast(tau), archive.get(i + tau)) else {
                    continue;
                };
                let Some(observed) = later.cell(cell.id) else {
                    continue;
                };
                let f = frame.project(forecast)?;
                let o = frame.project(observed.center)?;
                out.center.push(ForecastErrorSample {
                    horizon: tau,
                    dx: o[0] - f[0],
                    dy: o[1] - f[1],
                });
            }

            if let Some(next) = archive.get(i + 1).and_then(|f| f.cell(cell.id)) {
                let (_, before) = project_extent(cell, frame)?;
                let (_, after) = project_extent(next, frame)?;
                out.growth.push(GrowthSample {
                    pixels: cell.pixels,
                    dw: after.width() - before.width(),
                    dh: after.height() - before.height(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nowcast::StormCellObservation;
    use chrono::{NaiveDate, NaiveDateTime};

    fn time(min: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 12, 19)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap()
            + Duration::minutes(min)
    }

    fn frame() -> PlanarFrame {
        PlanarFrame::new(39.5, 2.5)
    }

    /// Cell at planar `center` with a 10 km square box and forecasts at
    /// the given planar points.
    fn cell(id: u32, center: [f64; 2], forecasts: &[[f64; 2]]) -> StormCellObservation {
        let f = frame();
        let geo = |p: [f64; 2]| f.unproject(p).unwrap();
        let c = geo(center);
        let mut center_forecasts = [None; FORECAST_SLOTS];
        for (slot, p) in forecasts.iter().enumerate() {
            center_forecasts[slot] = Some(geo(*p));
        }
        StormCellObservation {
            id,
            pixels: 80,
            center: c,
            radius_km: 5.0,
            west: geo([center[0] - 5.0, center[1]]).lon,
            east: geo([center[0] + 5.0, center[1]]).lon,
            south: geo([center[0], center[1] - 5.0]).lat,
            north: geo([center[0], center[1] + 5.0]).lat,
            center_forecasts,
            heading_deg: 90.0,
            speed_kmh: 30.0,
        }
    }

    #[test]
    fn empty_archive_gives_no_samples() {
        assert_eq!(pair_errors(&[], &frame()).unwrap(), PairedErrors::default());
    }

    #[test]
    fn irregular_spacing_is_structural_error() {
        let a = NowcastFile { issue_time: time(0), cells: vec![] };
        let b = NowcastFile { issue_time: time(20), cells: vec![] };
        assert!(matches!(pair_errors(&[a, b], &frame()), Err(Error::Structure(_))));
    }

    #[test]
    fn exact_forecast_gives_zero_error() {
        let a = NowcastFile { issue_time: time(0), cells: vec![cell(1, [0.0, 0.0], &[[5.0, 0.0]])] };
        let b = NowcastFile { issue_time: time(10), cells: vec![cell(1, [5.0, 0.0], &[])] };
        let paired = pair_errors(&[a, b], &frame()).unwrap();
        assert_eq!(paired.center.len(), 1);
        let s = paired.center[0];
        assert_eq!(s.horizon, 1);
        assert!(s.dx.abs() < 1e-6 && s.dy.abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn constant_offset_is_recovered_for_every_cell() {
        // every observation lands (2, -1) km from the previous file's
        // 10-minute forecast
        let mut files = Vec::new();
        for k in 0..4 {
            let cells = (0..3)
                .map(|id| {
                    let c = [-100.0 + 50.0 * id as f64 + 7.0 * k as f64, -60.0 - 4.0 * k as f64];
                    cell(id, c, &[[c[0] + 5.0, c[1] - 3.0]])
                })
                .collect();
            files.push(NowcastFile { issue_time: time(10 * k), cells });
        }
        let paired = pair_errors(&files, &frame()).unwrap();
        let tau1: Vec<_> = paired.at_horizon(1).collect();
        assert_eq!(tau1.len(), 9);
        for s in tau1 {
            assert!((s.dx - 2.0).abs() < 1e-6 && (s.dy + 1.0).abs() < 1e-6, "{s:?}");
        }
    }

    #[test]
    fn sample_count_matches_hand_count() {
        // file 0: cells 1, 2 (forecasts at 10 and 20 min)
        // file 1: cells 1, 3 (forecasts at 10 min)
        // file 2: cells 2, 3
        let f2 = [[0.0, 0.0], [1.0, 1.0]];
        let f1 = [[0.0, 0.0]];
        let files = vec![
            NowcastFile { issue_time: time(0), cells: vec![cell(1, [0.0, 0.0], &f2), cell(2, [50.0, 0.0], &f2)] },
            NowcastFile { issue_time: time(10), cells: vec![cell(1, [0.0, 10.0], &f1), cell(3, [90.0, 0.0], &f1)] },
            NowcastFile { issue_time: time(20), cells: vec![cell(2, [50.0, 10.0], &[]), cell(3, [90.0, 5.0], &[])] },
        ];
        let paired = pair_errors(&files, &frame()).unwrap();
        // τ=1: 0→1 cell 1; 1→2 cell 3.  τ=2: 0→2 cell 2.
        assert_eq!(paired.at_horizon(1).count(), 2);
        assert_eq!(paired.at_horizon(2).count(), 1);
        assert_eq!(paired.center.len(), 3);
        // growth: cell 1 (0→1), cell 3 (1→2)
        assert_eq!(paired.growth.len(), 2);
    }

    #[test]
    fn vanished_cell_yields_no_sample() {
        let a = NowcastFile { issue_time: time(0), cells: vec![cell(1, [0.0, 0.0], &[[1.0, 0.0]])] };
        let b = NowcastFile { issue_time: time(10), cells: vec![cell(2, [1.0, 0.0], &[])] };
        let paired = pair_errors(&[a, b], &frame()).unwrap();
        assert!(paired.center.is_empty() && paired.growth.is_empty());
    }

    #[test]
    fn growth_measures_width_change() {
        let mut grown = cell(1, [0.0, 0.0], &[]);
        let g = frame().unproject([8.0, 0.0]).unwrap();
        grown.east = g.lon;
        let a = NowcastFile { issue_time: time(0), cells: vec![cell(1, [0.0, 0.0], &[])] };
        let b = NowcastFile { issue_time: time(10), cells: vec![grown] };
        let paired = pair_errors(&[a, b], &frame()).unwrap();
        let s = paired.growth[0];
        assert!((s.dw - 3.0).abs() < 0.05, "{s:?}");
        assert!(s.dh.abs() < 1e-6);
        assert_eq!(s.pixels, 80);
    }
}
