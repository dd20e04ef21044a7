//! Fixtures shared by the benchmarks.

use rand::Rng;

use uavloc_core::model::distance;
use uavloc_core::planner::{PlanContext, Target};
use uavloc_core::validate::{annulus_fixtures, desk_instance, AnnulusFixture};
use uavloc_core::{seed, RangeWindow, Scenario, Vec2};

/// One straight scan pass over a walking person `offset` meters off track,
/// holding every in-range slot.
pub fn pass_window(s: &Scenario, offset: f64, seed: u64) -> RangeWindow {
    let mut rng = seed::rng(seed, &[seed::tag("bench-window")]);
    let ranging = s.ranging();
    let v = Vec2::new(0.6, -0.4);
    let step = s.uav_vmax * s.slot_duration;
    let half = s.ground_radius();
    let mut positions = Vec::new();
    let mut samples = Vec::new();
    let mut t = 0;
    while -half + step * t as f64 <= half {
        let q = Vec2::new(-half + step * t as f64, 0.0).with_z(s.altitude);
        let w = Vec2::new(0.0, offset) + v * (t as f64 * s.slot_duration);
        let d = distance(q, w.with_z(0.0));
        if d <= s.comm_range {
            positions.push(q);
            samples.push(
                (0..s.samples_per_slot)
                    .map(|_| ranging.sample_range(d, &mut rng).expect("positive range"))
                    .collect(),
            );
        }
        t += 1;
    }
    RangeWindow::new(0, 0, 0, s.slot_duration, positions, samples).expect("non-empty pass")
}

pub fn annuli(s: &Scenario, count: usize) -> Vec<AnnulusFixture> {
    annulus_fixtures(s, count, 11)
}

pub fn planning(s: &Scenario, targets: usize, uavs: usize) -> (Vec<Target>, PlanContext) {
    desk_instance(s, targets, uavs, 5)
}

/// Seeds for repeated planner runs.
pub fn seeds(n: usize) -> Vec<u64> {
    let mut rng = seed::rng(3, &[]);
    (0..n).map(|_| rng.random()).collect()
}
