//! Annulus-intersection error bound at the end of a reception window, and its
//! linear growth afterwards.
//!
//! Each selected slot `t` of a window contributes a ground annulus around the
//! UAV's ground position: the estimated ground range widened by the mean
//! ranging error and by how far the person can walk between `t` and the end
//! of the window. The person's end-of-window position must lie in every
//! annulus; the bound is the largest distance from the estimate to any point
//! of that intersection.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::RangeWindow;
use crate::model::Vec2;
use crate::ranging::RangingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub center: Vec2,
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn contains(&self, p: Vec2) -> bool {
        let r2 = (p - self.center).norm_sq();
        self.inner * self.inner <= r2 && r2 <= self.outer * self.outer
    }

    fn contains_with(&self, p: Vec2, tol: f64) -> bool {
        let r = (p - self.center).norm();
        r >= self.inner - tol && r <= self.outer + tol
    }
}

/// Where the per-slot ranges behind each annulus come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnulusSource {
    /// Ground range from the UAV to the fitted track at that slot, i.e. the
    /// distance sequence implied by the maximum-likelihood track.
    #[default]
    Track,
    /// Geometric mean of the slot's own samples, projected to the ground.
    SlotMean,
}

/// Builds one annulus from ground range `d_star`, widened by the mean ranging
/// error and by `v_max * dt_to_end` of possible walking.
pub fn build_annulus(
    d_star: f64,
    params: &RangingParams,
    v_max: f64,
    dt_to_end: f64,
    center: Vec2,
) -> Annulus {
    let spread = params.mean_range_error(d_star) + v_max * dt_to_end.max(0.0);
    Annulus {
        center,
        inner: (d_star - spread).max(0.0),
        outer: d_star + spread,
    }
}

/// True iff `p` lies in every annulus.
pub fn region_contains(annuli: &[Annulus], p: Vec2) -> bool {
    annuli.iter().all(|a| a.contains(p))
}

/// Closed half-plane `{p : (p - point) . normal >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.point).dot(self.normal) >= 0.0
    }

    fn contains_with(&self, p: Vec2, tol: f64) -> bool {
        (p - self.point).dot(self.normal) >= -tol
    }
}

/// Sampling density of [`farthest_point_error`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Samples per boundary circle.
    pub angular_steps: usize,
    /// Cells per side of the bounding-box grid.
    pub grid_cells: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            angular_steps: 2048,
            grid_cells: 256,
        }
    }
}

impl Resolution {
    pub fn refined(self) -> Self {
        Self {
            angular_steps: self.angular_steps * 2,
            grid_cells: self.grid_cells * 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub error: f64,
    /// No candidate point survived; `error` is the half-width fallback.
    pub empty_region: bool,
    pub candidates: usize,
}

/// Largest distance from `estimate` to the intersection of `annuli`.
pub fn farthest_point_error(annuli: &[Annulus], estimate: Vec2, res: Resolution) -> BoundResult {
    farthest_point_error_within(annuli, None, estimate, res)
}

/// As [`farthest_point_error`], with the region further cut by `side`.
///
/// Candidates are boundary circles sampled every `2 pi / angular_steps`, a grid
/// over the region's bounding box, the estimate itself, and the points where
/// the distance to the estimate can peak on the boundary: pairwise
/// circle/circle and circle/line intersections and the far point of every
/// circle. Only candidates inside the region count.
pub fn farthest_point_error_within(
    annuli: &[Annulus],
    side: Option<HalfPlane>,
    estimate: Vec2,
    res: Resolution,
) -> BoundResult {
    assert!(!annuli.is_empty(), "at least one annulus is required");
    let scale = annuli.iter().fold(1.0f64, |m, a| m.max(a.outer));
    let tol = 1e-9 * scale;
    let inside = |p: Vec2| {
        annuli.iter().all(|a| a.contains_with(p, tol))
            && side.is_none_or(|h| h.contains_with(p, tol))
    };

    let mut best: Option<f64> = None;
    let mut accepted = 0usize;
    let mut consider = |p: Vec2| {
        if inside(p) {
            accepted += 1;
            let d = p.distance(estimate);
            best = Some(best.map_or(d, |b: f64| b.max(d)));
        }
    };

    let circles: Vec<(Vec2, f64)> = annuli
        .iter()
        .flat_map(|a| {
            let inner = (a.inner > 0.0).then_some((a.center, a.inner));
            std::iter::once((a.center, a.outer)).chain(inner)
        })
        .collect();

    consider(estimate);

    let steps = res.angular_steps.max(1);
    for &(c, r) in &circles {
        for k in 0..steps {
            consider(c + Vec2::from_polar(r, TAU * k as f64 / steps as f64));
        }
        let away = (c - estimate).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        consider(c + away * r);
    }

    for (i, &(c1, r1)) in circles.iter().enumerate() {
        for &(c2, r2) in &circles[i + 1..] {
            for p in circle_intersections(c1, r1, c2, r2) {
                consider(p);
            }
        }
        if let Some(h) = side {
            for p in line_circle_intersections(h.point, h.normal.perp(), c1, r1) {
                consider(p);
            }
        }
    }

    // bounding box of the intersection of the outer discs
    let (mut lo, mut hi) = (
        Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        Vec2::new(f64::INFINITY, f64::INFINITY),
    );
    for a in annuli {
        lo.x = lo.x.max(a.center.x - a.outer);
        lo.y = lo.y.max(a.center.y - a.outer);
        hi.x = hi.x.min(a.center.x + a.outer);
        hi.y = hi.y.min(a.center.y + a.outer);
    }
    if lo.x <= hi.x && lo.y <= hi.y {
        let n = res.grid_cells.max(1);
        for i in 0..=n {
            let x = lo.x + (hi.x - lo.x) * i as f64 / n as f64;
            for j in 0..=n {
                consider(Vec2::new(x, lo.y + (hi.y - lo.y) * j as f64 / n as f64));
            }
        }
    }

    match best {
        Some(error) => BoundResult {
            error,
            empty_region: false,
            candidates: accepted,
        },
        None => BoundResult {
            error: annuli
                .iter()
                .map(|a| (a.outer - a.inner) / 2.0)
                .fold(0.0, f64::max),
            empty_region: true,
            candidates: 0,
        },
    }
}

fn circle_intersections(c1: Vec2, r1: f64, c2: Vec2, r2: f64) -> Vec<Vec2> {
    let delta = c2 - c1;
    let d = delta.norm();
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let u = delta * (1.0 / d);
    let base = c1 + u * a;
    vec![base + u.perp() * h, base - u.perp() * h]
}

fn line_circle_intersections(p: Vec2, dir: Vec2, c: Vec2, r: f64) -> Vec<Vec2> {
    let Some(u) = dir.normalized() else {
        return Vec::new();
    };
    let foot = p + u * (c - p).dot(u);
    let off2 = r * r - (foot - c).norm_sq();
    if off2 < 0.0 {
        return Vec::new();
    }
    let off = off2.sqrt();
    vec![foot + u * off, foot - u * off]
}

/// Annuli for `annuli_count` slots spread evenly over `window` (first and last
/// slot included), describing where the person can be at the window's last
/// slot. `track` is the fitted `(w0, v)` used by [`AnnulusSource::Track`].
pub fn window_annuli(
    window: &RangeWindow,
    track: (Vec2, Vec2),
    params: &RangingParams,
    v_max: f64,
    annuli_count: usize,
    source: AnnulusSource,
) -> Vec<Annulus> {
    let n = window.len();
    let (w0, v) = track;
    let slots = spread_indices(n, annuli_count);
    slots
        .into_iter()
        .map(|i| {
            let q = window.uav_positions[i];
            let center = q.ground();
            let d_star = match source {
                AnnulusSource::Track => {
                    let w = w0 + v * (i as f64 * window.slot_duration);
                    center.distance(w)
                }
                AnnulusSource::SlotMean => {
                    let slant = geometric_mean(&window.samples[i]);
                    (slant * slant - q.z * q.z).max(0.0).sqrt()
                }
            };
            let dt_to_end = (n - 1 - i) as f64 * window.slot_duration;
            build_annulus(d_star, params, v_max, dt_to_end, center)
        })
        .collect()
}

fn geometric_mean(samples: &[f64]) -> f64 {
    (samples.iter().map(|r| r.ln()).sum::<f64>() / samples.len() as f64).exp()
}

/// `count` indices spread evenly over `0..n`, always including both ends.
pub(crate) fn spread_indices(n: usize, count: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if count >= n {
        return (0..n).collect();
    }
    if count <= 1 {
        return vec![n - 1];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|k| ((k as f64) * (n - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Linear growth of the bound after the reference slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub e0: f64,
    /// Growth rate (1/s).
    pub alpha: f64,
    pub ref_slot: u64,
    pub slot_duration: f64,
}

impl ErrorModel {
    pub fn error_at(&self, slot: u64) -> Result<f64> {
        if slot < self.ref_slot {
            return Err(Error::SlotBeforeReference {
                requested: slot,
                reference: self.ref_slot,
            });
        }
        Ok(self.error_after((slot - self.ref_slot) as f64 * self.slot_duration))
    }

    /// Bound `seconds` after the reference slot; negative offsets clamp to 0.
    pub fn error_after(&self, seconds: f64) -> f64 {
        self.e0 * (1.0 + self.alpha * seconds.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_ranging() -> RangingParams {
        RangingParams::new(2.0, 4.0).unwrap()
    }

    #[test]
    fn annulus_from_range_and_walk() {
        let p = default_ranging();
        let m = p.mean_range_error(100.0);
        let a = build_annulus(100.0, &p, 1.5, 2.0, Vec2::ZERO);
        assert!((a.inner - (100.0 - m - 3.0)).abs() < 1e-12);
        assert!((a.outer - (100.0 + m + 3.0)).abs() < 1e-12);
        assert!((a.inner - 85.81).abs() < 0.01);
        assert!((a.outer - 114.19).abs() < 0.01);
    }

    #[test]
    fn noiseless_instant_annulus_is_a_circle() {
        let p = RangingParams::new(2.0, 0.0).unwrap();
        let a = build_annulus(100.0, &p, 1.5, 0.0, Vec2::ZERO);
        assert_eq!((a.inner, a.outer), (100.0, 100.0));
    }

    #[test]
    fn inner_radius_clamps_at_zero() {
        let a = build_annulus(5.0, &default_ranging(), 1.5, 10.0, Vec2::ZERO);
        assert_eq!(a.inner, 0.0);
        assert!(a.outer > 5.0);
    }

    #[test]
    fn containment() {
        let a = Annulus {
            center: Vec2::new(10.0, 10.0),
            inner: 20.0,
            outer: 40.0,
        };
        assert!(region_contains(&[a], Vec2::new(40.0, 10.0)));
        assert!(!region_contains(&[a], a.center));

        let far = Annulus {
            center: Vec2::new(500.0, 0.0),
            inner: 10.0,
            outer: 20.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Vec2::new(rng.random_range(-100.0..600.0), rng.random_range(-100.0..100.0));
            assert!(!region_contains(&[a, far], p));
        }
    }

    #[test]
    fn single_annulus_far_side() {
        let a = Annulus {
            center: Vec2::ZERO,
            inner: 85.81,
            outer: 114.19,
        };
        let est = Vec2::new(100.0, 0.0);
        let r = farthest_point_error(&[a], est, Resolution::default());
        assert!((r.error - 214.19).abs() < 1e-9, "{}", r.error);
        assert!(!r.empty_region);

        // brute-force polar grid at d_theta = 1e-3
        let mut brute = 0.0f64;
        let n = (TAU / 1e-3) as usize;
        for k in 0..n {
            let p = Vec2::from_polar(a.outer, k as f64 * 1e-3);
            brute = brute.max(p.distance(est));
        }
        assert!((r.error - brute).abs() / brute < 1e-6);
    }

    #[test]
    fn degenerate_point_region() {
        let p = Vec2::new(3.0, 4.0);
        let annuli = [
            Annulus { center: Vec2::ZERO, inner: 5.0, outer: 5.0 },
            Annulus { center: Vec2::new(6.0, 0.0), inner: 5.0, outer: 5.0 },
            Annulus { center: Vec2::new(3.0, 9.0), inner: 5.0, outer: 5.0 },
        ];
        let r = farthest_point_error(&annuli, p, Resolution::default());
        assert!(!r.empty_region);
        assert!(r.error < 1e-6, "{}", r.error);
    }

    #[test]
    fn empty_region_falls_back_to_half_width() {
        let annuli = [
            Annulus { center: Vec2::ZERO, inner: 0.0, outer: 10.0 },
            Annulus { center: Vec2::new(100.0, 0.0), inner: 4.0, outer: 30.0 },
        ];
        let r = farthest_point_error(&annuli, Vec2::ZERO, Resolution::default());
        assert!(r.empty_region);
        assert_eq!(r.error, 13.0);
    }

    #[test]
    fn half_plane_cuts_the_region() {
        let a = Annulus { center: Vec2::ZERO, inner: 50.0, outer: 60.0 };
        let est = Vec2::new(0.0, 55.0);
        let full = farthest_point_error(&[a], est, Resolution::default());
        let upper = HalfPlane { point: Vec2::ZERO, normal: Vec2::new(0.0, 1.0) };
        let cut = farthest_point_error_within(&[a], Some(upper), est, Resolution::default());
        assert!((full.error - 115.0).abs() < 1e-9);
        // farthest points of the upper half are (+-60, 0)
        assert!((cut.error - (60.0f64.powi(2) + 55.0f64.powi(2)).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn error_growth() {
        let m = ErrorModel { e0: 5.0, alpha: 0.1, ref_slot: 40, slot_duration: 0.025 };
        assert_eq!(m.error_at(40).unwrap(), 5.0);
        assert!((m.error_at(40 + 400).unwrap() - 10.0).abs() < 1e-12);
        assert!(m.error_at(39).is_err());
        let flat = ErrorModel { alpha: 0.0, ..m };
        for t in [40, 41, 1000, 100_000] {
            assert_eq!(flat.error_at(t).unwrap(), 5.0);
        }
    }

    #[test]
    fn spread_indices_cover_ends() {
        assert_eq!(spread_indices(10, 5), vec![0, 2, 5, 7, 9]);
        assert_eq!(spread_indices(3, 5), vec![0, 1, 2]);
        assert_eq!(spread_indices(7, 1), vec![6]);
        assert_eq!(spread_indices(7, 2), vec![0, 6]);
    }

    fn random_annuli(rng: &mut ChaCha8Rng, truth: Vec2, count: usize) -> Vec<Annulus> {
        (0..count)
            .map(|_| {
                let c = Vec2::new(rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0));
                let d = c.distance(truth);
                let w = rng.random_range(2.0..25.0);
                Annulus { center: c, inner: (d - w).max(0.0), outer: d + w }
            })
            .collect()
    }

    #[test]
    fn adding_an_annulus_never_increases_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let truth = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let annuli = random_annuli(&mut rng, truth, 5);
            let est = truth + Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let mut prev = f64::INFINITY;
            for k in 1..=annuli.len() {
                let r = farthest_point_error(&annuli[..k], est, Resolution::default());
                assert!(!r.empty_region);
                assert!(r.error <= prev + 1e-9, "{} > {prev}", r.error);
                prev = r.error;
            }
        }
    }

    #[test]
    fn refinement_changes_result_by_less_than_two_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let truth = Vec2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let annuli = random_annuli(&mut rng, truth, 4);
            let coarse = farthest_point_error(&annuli, truth, Resolution::default());
            let fine = farthest_point_error(&annuli, truth, Resolution::default().refined());
            assert!((coarse.error - fine.error).abs() <= 0.02 * fine.error);
        }
    }
}
