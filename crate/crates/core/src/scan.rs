//! Phase-1 coverage: one vertical strip per UAV, each split into cells small
//! enough that a UAV over the center hears the whole cell, swept in a
//! serpentine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Area, Vec2};

/// Radius of the ground disc within `comm_range` of a UAV at altitude `h`.
pub fn ground_coverage_radius(comm_range: f64, h: f64) -> Result<f64> {
    if !(comm_range > h) {
        return Err(Error::InvalidArgument(format!(
            "no ground coverage: comm_range {comm_range} must exceed altitude {h}"
        )));
    }
    Ok((comm_range * comm_range - h * h).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub origin: Vec2,
    pub cell_width: f64,
    pub cell_height: f64,
    pub columns: usize,
    pub rows: usize,
}

impl ScanGrid {
    pub fn center(&self, column: usize, row: usize) -> Vec2 {
        self.origin
            + Vec2::new(
                (column as f64 + 0.5) * self.cell_width,
                (row as f64 + 0.5) * self.cell_height,
            )
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.cell_width.hypot(self.cell_height)
    }

    pub fn cell_count(&self) -> usize {
        self.columns * self.rows
    }
}

/// Largest equal cells whose half-diagonal stays within `g`.
pub fn build_grid(sub_area: &Area, g: f64) -> ScanGrid {
    let side = g * std::f64::consts::SQRT_2;
    // guard against 1120/(g*sqrt2) landing a hair above an integer
    let count = |len: f64| ((len / side) - 1e-9).ceil().max(1.0) as usize;
    let columns = count(sub_area.length);
    let rows = count(sub_area.width);
    ScanGrid {
        origin: sub_area.origin,
        cell_width: sub_area.length / columns as f64,
        cell_height: sub_area.width / rows as f64,
        columns,
        rows,
    }
}

/// Equal-width vertical strips, left to right.
pub fn partition_area(area: &Area, m: usize) -> Result<Vec<Area>> {
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one UAV".into()));
    }
    let w = area.length / m as f64;
    Ok((0..m)
        .map(|i| Area {
            origin: area.origin + Vec2::new(i as f64 * w, 0.0),
            // the last strip ends exactly on the area edge
            length: if i + 1 == m {
                area.length - i as f64 * w
            } else {
                w
            },
            width: area.width,
        })
        .collect())
}

/// Cell centers in visiting order, flown from `start` and back to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPath {
    pub start: Vec2,
    pub waypoints: Vec<Vec2>,
    pub length: f64,
}

impl ScanPath {
    /// `start`, every waypoint, `start`.
    pub fn polyline(&self) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.waypoints.len() + 2);
        out.push(self.start);
        out.extend_from_slice(&self.waypoints);
        out.push(self.start);
        out
    }
}

/// Serpentine over the cell centers, sweeping along whichever axis needs fewer
/// lanes (columns on a tie), beginning at the corner cell nearest `start`.
pub fn boustrophedon_path(grid: &ScanGrid, start: Vec2) -> ScanPath {
    let column_major = grid.columns <= grid.rows;
    let corners = [
        (0, 0),
        (grid.columns - 1, 0),
        (0, grid.rows - 1),
        (grid.columns - 1, grid.rows - 1),
    ];
    let (c0, r0) = corners
        .iter()
        .copied()
        .min_by(|a, b| {
            grid.center(a.0, a.1)
                .distance(start)
                .total_cmp(&grid.center(b.0, b.1).distance(start))
        })
        .expect("four corners");
    let cols: Vec<usize> = if c0 == 0 {
        (0..grid.columns).collect()
    } else {
        (0..grid.columns).rev().collect()
    };
    let rows: Vec<usize> = if r0 == 0 {
        (0..grid.rows).collect()
    } else {
        (0..grid.rows).rev().collect()
    };

    let mut waypoints = Vec::with_capacity(grid.cell_count());
    if column_major {
        for (k, &c) in cols.iter().enumerate() {
            let lane: Box<dyn Iterator<Item = &usize>> = if k % 2 == 0 {
                Box::new(rows.iter())
            } else {
                Box::new(rows.iter().rev())
            };
            waypoints.extend(lane.map(|&r| grid.center(c, r)));
        }
    } else {
        for (k, &r) in rows.iter().enumerate() {
            let lane: Box<dyn Iterator<Item = &usize>> = if k % 2 == 0 {
                Box::new(cols.iter())
            } else {
                Box::new(cols.iter().rev())
            };
            waypoints.extend(lane.map(|&c| grid.center(c, r)));
        }
    }
    let mut path = ScanPath {
        start,
        waypoints,
        length: 0.0,
    };
    path.length = polyline_length(&path.polyline());
    path
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Splits a polyline into maximal straight runs. Returns, for every lane, the
/// index of its first and last vertex.
pub fn lanes(points: &[Vec2]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut prev_dir: Option<Vec2> = None;
    for i in 1..points.len() {
        let Some(dir) = (points[i] - points[i - 1]).normalized() else {
            continue;
        };
        let straight = prev_dir.is_some_and(|p| p.cross(dir).abs() < 1e-9 && p.dot(dir) > 0.0);
        match out.last_mut() {
            Some(last) if straight => last.1 = i,
            _ => out.push((i - 1, i)),
        }
        prev_dir = Some(dir);
    }
    out
}

/// Per-UAV scan: strip `i` is swept from its bottom-left corner.
pub fn plan_scan(area: &Area, uav_count: usize, g: f64) -> Result<Vec<ScanPath>> {
    Ok(partition_area(area, uav_count)?
        .iter()
        .map(|strip| boustrophedon_path(&build_grid(strip, g), strip.origin))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: f64 = 111.803_398_874_989_48;

    #[test]
    fn coverage_radius() {
        assert!((ground_coverage_radius(150.0, 100.0).unwrap() - 12_500f64.sqrt()).abs() < 1e-12);
        assert!(ground_coverage_radius(100.0, 100.0).is_err());
        assert_eq!(ground_coverage_radius(200.0, 0.0).unwrap(), 200.0);
    }

    #[test]
    fn whole_area_grid() {
        let g = build_grid(&Area::new(1120.0, 640.0), G);
        assert_eq!((g.columns, g.rows), (8, 5));
        assert!((g.cell_width - 140.0).abs() < 1e-12);
        assert!((g.cell_height - 128.0).abs() < 1e-12);
        assert!((g.half_diagonal() - 94.847_245_6).abs() < 1e-6);
        assert!(g.half_diagonal() <= G);
    }

    #[test]
    fn small_and_exact_grids() {
        let tiny = build_grid(&Area::new(10.0, 10.0), G);
        assert_eq!((tiny.columns, tiny.rows), (1, 1));
        let side = G * std::f64::consts::SQRT_2;
        let exact = build_grid(&Area::new(3.0 * side, 2.0 * side), G);
        assert_eq!((exact.columns, exact.rows), (3, 2));
        assert!((exact.cell_width - side).abs() < 1e-9);
        assert!((exact.half_diagonal() - G).abs() < 1e-9);
    }

    #[test]
    fn strips() {
        let area = Area::new(1120.0, 640.0);
        let parts = partition_area(&area, 4).unwrap();
        assert_eq!(parts.len(), 4);
        for (i, p) in parts.iter().enumerate() {
            assert_eq!(p.length, 280.0);
            assert_eq!(p.width, 640.0);
            assert_eq!(p.origin.x, 280.0 * i as f64);
        }
        assert_eq!(partition_area(&area, 1).unwrap(), vec![area]);
        let odd = partition_area(&area, 3).unwrap();
        for w in odd.windows(2) {
            assert_eq!(w[0].origin.x + w[0].length, w[1].origin.x);
        }
        let last = odd.last().unwrap();
        assert_eq!(last.origin.x + last.length, 1120.0);
        assert!(partition_area(&area, 0).is_err());
    }

    #[test]
    fn two_by_two_serpentine() {
        let grid = build_grid(&Area::new(200.0, 200.0), 80.0);
        assert_eq!((grid.columns, grid.rows), (2, 2));
        let p = boustrophedon_path(&grid, Vec2::ZERO);
        assert_eq!(
            p.waypoints,
            vec![
                Vec2::new(50.0, 50.0),
                Vec2::new(50.0, 150.0),
                Vec2::new(150.0, 150.0),
                Vec2::new(150.0, 50.0)
            ]
        );
        for w in p.waypoints.windows(2) {
            assert!((w[0].distance(w[1]) - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_row_is_a_straight_sweep() {
        let grid = ScanGrid {
            origin: Vec2::ZERO,
            cell_width: 10.0,
            cell_height: 10.0,
            columns: 6,
            rows: 1,
        };
        let p = boustrophedon_path(&grid, Vec2::ZERO);
        assert!(p.waypoints.iter().all(|w| w.y == 5.0));
        assert!(p.waypoints.windows(2).all(|w| w[1].x > w[0].x));
    }

    #[test]
    fn full_area_path_length() {
        let grid = build_grid(&Area::new(1120.0, 640.0), G);
        let p = boustrophedon_path(&grid, Vec2::ZERO);
        assert_eq!(p.waypoints.len(), 40);
        // five rows are fewer lanes than eight columns
        assert_eq!(lanes(&p.waypoints).len(), 9);
        let inner = 5.0 * 7.0 * 140.0 + 4.0 * 128.0;
        let entry = 70f64.hypot(64.0);
        let exit = p.waypoints.last().unwrap().norm();
        assert!((p.length - (inner + entry + exit)).abs() < 1e-9);
        assert!((polyline_length(&p.waypoints) - inner).abs() < 1e-9);
    }

    #[test]
    fn row_major_when_fewer_lanes() {
        let grid = ScanGrid {
            origin: Vec2::ZERO,
            cell_width: 10.0,
            cell_height: 10.0,
            columns: 5,
            rows: 2,
        };
        let p = boustrophedon_path(&grid, Vec2::ZERO);
        assert_eq!(lanes(&p.waypoints).len(), 3);
        assert!(p.waypoints[..5].iter().all(|w| w.y == 5.0));
    }

    #[test]
    fn lanes_merge_straight_runs() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 10.0),
            Vec2::new(0.0, 20.0),
            Vec2::new(10.0, 20.0),
            Vec2::new(10.0, 10.0),
        ];
        assert_eq!(lanes(&pts), vec![(0, 2), (2, 3), (3, 4)]);
    }

    fn covered(paths: &[ScanPath], p: Vec2, g: f64) -> bool {
        paths.iter().any(|path| {
            path.polyline()
                .windows(2)
                .any(|w| segment_distance(p, w[0], w[1]) <= g)
        })
    }

    fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
        let ab = b - a;
        let t = if ab.norm_sq() == 0.0 {
            0.0
        } else {
            ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0)
        };
        p.distance(a + ab * t)
    }

    #[test]
    fn every_point_is_within_range_of_a_waypoint() {
        let area = Area::new(1120.0, 640.0);
        let paths = plan_scan(&area, 4, G).unwrap();
        let centers: Vec<Vec2> = paths.iter().flat_map(|p| p.waypoints.clone()).collect();
        assert_eq!(centers.len(), 40);
        for x in 0..=1120 {
            for y in 0..=640 {
                let p = Vec2::new(x as f64, y as f64);
                assert!(centers.iter().any(|c| c.distance(p) <= G), "{p:?}");
            }
        }
        assert!(covered(&paths, Vec2::new(1120.0, 640.0), G));
    }

    #[test]
    fn every_center_visited_once() {
        let area = Area::new(1120.0, 640.0);
        for m in 1..=5 {
            for (strip, path) in partition_area(&area, m)
                .unwrap()
                .iter()
                .zip(plan_scan(&area, m, G).unwrap())
            {
                let grid = build_grid(strip, G);
                assert_eq!(path.waypoints.len(), grid.cell_count());
                for c in 0..grid.columns {
                    for r in 0..grid.rows {
                        let hits = path
                            .waypoints
                            .iter()
                            .filter(|w| w.distance(grid.center(c, r)) < 1e-9)
                            .count();
                        assert_eq!(hits, 1);
                    }
                }
                // consecutive centers are grid neighbors
                for w in path.waypoints.windows(2) {
                    let d = w[1] - w[0];
                    let dx = (d.x / grid.cell_width).abs().round() as usize;
                    let dy = (d.y / grid.cell_height).abs().round() as usize;
                    assert_eq!(dx + dy, 1);
                }
                assert_eq!(path.polyline().first(), path.polyline().last());
            }
        }
    }
}
