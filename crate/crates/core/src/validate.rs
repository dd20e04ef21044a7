//! Self-checks against independent oracles, and calibration of the planner's
//! error-prediction factor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{build_annulus, farthest_point_error, region_contains, Annulus, Resolution};
use crate::error::Result;
use crate::mle::{fit_track, RangeWindow};
use crate::model::{Scenario, Vec2};
use crate::planner::{exhaustive, predicted_error, solve, PlanContext, PlannerKind, Target};
use crate::ranging::RangingParams;
use crate::seed;
use crate::sim::phase1::fit_options;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl OracleReport {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Compares Monte-Carlo moments of [`RangingParams::sample_range`] with the
/// closed forms: the mean bias against `mean_error(d)` within 5% and the
/// variance of `ln r` against `log_std^2` within 5%.
///
/// `mean_error` is a parameter so that a wrong closed form can be caught.
pub fn ranging_moments(
    params: &RangingParams,
    d: f64,
    draws: usize,
    seed: u64,
    mean_error: impl Fn(f64) -> f64,
) -> Result<OracleReport> {
    let mut rng = seed::rng(seed, &[seed::tag("ranging")]);
    let (mut sum, mut log_sum, mut log_sq) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let r = params.sample_range(d, &mut rng)?;
        let l = r.ln();
        sum += r;
        log_sum += l;
        log_sq += l * l;
    }
    let n = draws as f64;
    let bias = sum / n - d;
    let log_mean = log_sum / n;
    let log_var = (log_sq - n * log_mean * log_mean) / (n - 1.0);
    let expected_bias = mean_error(d);
    let expected_var = params.log_std().powi(2);
    let bias_ok = (bias - expected_bias).abs() <= 0.05 * expected_bias.abs();
    let var_ok = (log_var - expected_var).abs() <= 0.05 * expected_var;
    Ok(OracleReport::new(
        "ranging moments",
        bias_ok && var_ok,
        format!(
            "E[r]-d = {bias:.4} (closed form {expected_bias:.4}), var ln r = {log_var:.5} (closed form {expected_var:.5}), {draws} draws"
        ),
    ))
}

/// A random planning instance over the scenario's area: `targets` moving
/// persons with bounds in 5..30 m, `uavs` UAVs leaving from and returning to
/// evenly spaced points on the `y = 0` edge.
pub fn desk_instance(scenario: &Scenario, targets: usize, uavs: usize, seed: u64) -> (Vec<Target>, PlanContext) {
    let mut rng = seed::rng(seed, &[seed::tag("desk"), targets as u64, uavs as u64]);
    let area = scenario.area();
    let list = (0..targets)
        .map(|id| {
            let speed = rng.random_range(0.0..=scenario.person_vmax);
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            Target {
                id,
                position: Vec2::new(rng.random_range(0.0..area.length), rng.random_range(0.0..area.width)),
                velocity: Vec2::from_polar(speed, heading),
                ref_time: 0.0,
                error_bound: rng.random_range(5.0..30.0),
            }
        })
        .collect();
    let starts: Vec<Vec2> = (0..uavs)
        .map(|k| Vec2::new(area.length * (k as f64 + 0.5) / uavs as f64, 0.0))
        .collect();
    let ctx = PlanContext::new(scenario, starts.clone(), starts, 0.0);
    (list, ctx)
}

/// EPSO against exhaustive enumeration on `instances` desk instances with six
/// targets, two UAVs and overhead access. Passes when at least 90% land
/// within 2% of the optimum.
pub fn mtsp_optimum(scenario: &Scenario, instances: usize, seed: u64) -> Result<OracleReport> {
    let mut s = scenario.clone();
    s.edge_access = false;
    let gaps = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let (targets, ctx) = desk_instance(&s, 6, 2, seed::derive(seed, &[i]));
            let best = exhaustive(&targets, &ctx, &s.swarm)?;
            let mut rng = seed::rng(seed, &[seed::tag("epso"), i]);
            let plan = solve(PlannerKind::Epso, &targets, &ctx, &s.swarm, &mut rng);
            Ok(plan.fitness / best.fitness - 1.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let hits = gaps.iter().filter(|&&g| g <= 0.02).count();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok(OracleReport::new(
        "planner optimum",
        hits * 10 >= instances * 9,
        format!("{hits}/{instances} within 2% of the exhaustive optimum, worst gap {:.2}%", worst * 100.0),
    ))
}

/// A non-empty annulus intersection around a person, and an estimate near it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusFixture {
    pub annuli: Vec<Annulus>,
    pub estimate: Vec2,
    pub truth: Vec2,
}

/// `count` fixtures with one to five annuli each. Centers sit within the
/// scenario's ground radius of the person and every range is off by less
/// than its spread, so the person is always inside.
pub fn annulus_fixtures(scenario: &Scenario, count: usize, seed: u64) -> Vec<AnnulusFixture> {
    let mut rng = seed::rng(seed, &[seed::tag("annuli")]);
    let ranging = scenario.ranging();
    let g = scenario.ground_radius();
    (0..count)
        .map(|_| {
            let truth = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let k = rng.random_range(1..=5);
            let annuli = (0..k)
                .map(|_| {
                    let center = truth + Vec2::from_polar(rng.random_range(5.0..g), rng.random_range(0.0..std::f64::consts::TAU));
                    let d = center.distance(truth);
                    let walk = rng.random_range(0.0..5.0);
                    let spread = ranging.mean_range_error(d) + scenario.person_vmax * walk;
                    let d_star = d + rng.random_range(-0.8..0.8) * spread;
                    build_annulus(d_star, &ranging, scenario.person_vmax, walk, center)
                })
                .collect();
            let estimate = truth + Vec2::from_polar(rng.random_range(0.0..10.0), rng.random_range(0.0..std::f64::consts::TAU));
            AnnulusFixture { annuli, estimate, truth }
        })
        .collect()
}

/// Farthest in-region distance from `estimate`, found by marching `rays`
/// rays outwards in steps of `step` meters.
pub fn polar_farthest(annuli: &[Annulus], estimate: Vec2, rays: usize, step: f64) -> Option<f64> {
    let reach = annuli
        .iter()
        .map(|a| a.center.distance(estimate) + a.outer)
        .fold(0.0, f64::max);
    let steps = (reach / step).ceil() as usize;
    let mut best: Option<f64> = None;
    for k in 0..rays {
        let dir = Vec2::from_polar(1.0, std::f64::consts::TAU * k as f64 / rays as f64);
        for i in (0..=steps).rev() {
            let r = i as f64 * step;
            if best.is_some_and(|b| r <= b) {
                break;
            }
            if region_contains(annuli, estimate + dir * r) {
                best = Some(r);
                break;
            }
        }
    }
    best
}

/// [`farthest_point_error`] against [`polar_farthest`] within 2%.
pub fn annulus_grid(fixtures: &[AnnulusFixture]) -> OracleReport {
    let results: Vec<(f64, Option<f64>)> = fixtures
        .par_iter()
        .map(|f| {
            let fast = farthest_point_error(&f.annuli, f.estimate, Resolution::default()).error;
            (fast, polar_farthest(&f.annuli, f.estimate, 4096, 0.02))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for (fast, slow) in &results {
        match slow {
            Some(slow) => {
                let rel = (fast - slow).abs() / slow.max(1.0);
                worst = worst.max(rel);
                passed &= rel <= 0.02;
            }
            None => passed = false,
        }
    }
    OracleReport::new(
        "annulus bound",
        passed,
        format!("{} fixtures, worst relative gap {:.3}%", fixtures.len(), worst * 100.0),
    )
}

/// Fitted calibration of the error-prediction factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaCalibration {
    pub kappa: f64,
    /// Quantile of error / mean ranging error that `kappa` is set to.
    pub quantile: f64,
    pub trials: usize,
    /// Ground offsets of the passes (m).
    pub offsets: Vec<f64>,
    /// Median ratio at each offset.
    pub median_ratio: Vec<f64>,
}

/// Localization error of one straight pass at ground offset `offset` from a
/// walking person, using every in-range slot. The hypothesis nearer the
/// truth is scored, as the mirror is resolved by the prior in practice.
fn pass_error(s: &Scenario, offset: f64, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let ranging = s.ranging();
    let dt = s.slot_duration;
    let g = s.ground_radius();
    let speed = rng.random_range(0.0..=s.person_vmax);
    let v = Vec2::from_polar(speed, rng.random_range(0.0..std::f64::consts::TAU));
    let w_mid = Vec2::new(rng.random_range(-20.0..20.0), offset);
    let half = g + 10.0;
    let slots = (2.0 * half / (s.uav_vmax * dt)).ceil() as u64;
    let mid = slots as f64 / 2.0;
    let mut positions = Vec::new();
    let mut samples = Vec::new();
    let mut first = None;
    let mut last = 0;
    for t in 0..=slots {
        let q = Vec2::new(-half + s.uav_vmax * dt * t as f64, 0.0).with_z(s.altitude);
        let w = w_mid + v * ((t as f64 - mid) * dt);
        let d = crate::model::distance(q, w.with_z(0.0));
        if d > s.comm_range {
            if first.is_some() {
                break;
            }
            continue;
        }
        first.get_or_insert(t);
        last = t;
        positions.push(q);
        samples.push(
            (0..s.samples_per_slot)
                .map(|_| ranging.sample_range(d, rng))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let Some(first) = first else { return Ok(None) };
    if positions.len() < 3 {
        return Ok(None);
    }
    let window = RangeWindow::new(0, 0, first, dt, positions, samples)?;
    let est = fit_track(&window, &ranging, &fit_options(s))?;
    let truth = w_mid + v * ((last as f64 - mid) * dt);
    let err = std::iter::once(est.position)
        .chain(est.mirror.map(|m| m.position))
        .map(|p| p.distance(truth))
        .fold(f64::INFINITY, f64::min);
    Ok(Some(err))
}

/// Sets kappa to the `quantile` of `error / mean_range_error(slant)` over
/// `trials` straight passes at each of six ground offsets from 0 to 100 m.
pub fn calibrate_kappa(scenario: &Scenario, trials: usize, quantile: f64, seed: u64) -> Result<KappaCalibration> {
    let offsets: Vec<f64> = (0..6).map(|k| 20.0 * k as f64).collect();
    let ranging = scenario.ranging();
    let per_offset = offsets
        .par_iter()
        .enumerate()
        .map(|(k, &offset)| {
            let mut rng = seed::rng(seed, &[seed::tag("kappa"), k as u64]);
            let scale = predicted_error(offset, &ranging, scenario.altitude, 1.0);
            let mut ratios = Vec::with_capacity(trials);
            for _ in 0..trials {
                if let Some(e) = pass_error(scenario, offset, &mut rng)? {
                    ratios.push(e / scale);
                }
            }
            ratios.sort_by(f64::total_cmp);
            Ok(ratios)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let median_ratio = per_offset
        .iter()
        .map(|r| r.get(r.len() / 2).copied().unwrap_or(f64::NAN))
        .collect();
    let mut all: Vec<f64> = per_offset.into_iter().flatten().collect();
    all.sort_by(f64::total_cmp);
    let kappa = if all.is_empty() {
        f64::NAN
    } else {
        all[((all.len() - 1) as f64 * quantile).round() as usize]
    };
    Ok(KappaCalibration {
        kappa,
        quantile,
        trials: all.len(),
        offsets,
        median_ratio,
    })
}

/// How hard the oracles work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effort {
    pub ranging_draws: usize,
    pub planner_instances: usize,
    pub annulus_fixtures: usize,
    pub kappa_trials: usize,
}

impl Default for Effort {
    fn default() -> Self {
        Self {
            ranging_draws: 1_000_000,
            planner_instances: 10,
            annulus_fixtures: 20,
            kappa_trials: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub oracles: Vec<OracleReport>,
    pub kappa: KappaCalibration,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.oracles.iter().all(|o| o.passed)
    }
}

/// Runs every oracle and the kappa calibration on `scenario`'s parameters.
pub fn run_all(scenario: &Scenario, effort: Effort, seed: u64) -> Result<ValidationReport> {
    let ranging = scenario.ranging();
    let mut oracles = vec![ranging_moments(&ranging, 100.0, effort.ranging_draws, seed, |d| {
        ranging.mean_range_error(d)
    })?];
    oracles.push(mtsp_optimum(scenario, effort.planner_instances, seed)?);
    oracles.push(annulus_grid(&annulus_fixtures(scenario, effort.annulus_fixtures, seed)));
    let kappa = calibrate_kappa(scenario, effort.kappa_trials, 0.9, seed)?;
    oracles.push(OracleReport::new(
        "kappa calibration",
        kappa.kappa > 0.0 && kappa.kappa < 10.0,
        format!("kappa = {:.3} from {} passes", kappa.kappa, kappa.trials),
    ));
    Ok(ValidationReport { oracles, kappa })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tampered_mean_error_is_caught() {
        let p = RangingParams::new(2.0, 4.0).unwrap();
        let good = ranging_moments(&p, 100.0, 200_000, 1, |d| p.mean_range_error(d)).unwrap();
        assert!(good.passed, "{}", good.detail);
        let bad = ranging_moments(&p, 100.0, 200_000, 1, |d| 1.1 * p.mean_range_error(d)).unwrap();
        assert!(!bad.passed, "{}", bad.detail);
    }

    #[test]
    fn fixtures_hold_their_truth() {
        for f in annulus_fixtures(&Scenario::default(), 50, 3) {
            assert!(region_contains(&f.annuli, f.truth));
        }
    }

    #[test]
    fn polar_oracle_on_a_disk() {
        let disk = [Annulus { center: Vec2::ZERO, inner: 0.0, outer: 10.0 }];
        let r = polar_farthest(&disk, Vec2::new(3.0, 0.0), 360, 0.01).unwrap();
        assert!((r - 13.0).abs() < 0.02);
    }

    #[test]
    fn desk_instances_are_reproducible() {
        let s = Scenario::default();
        assert_eq!(desk_instance(&s, 6, 2, 4), desk_instance(&s, 6, 2, 4));
        assert_ne!(desk_instance(&s, 6, 2, 4).0, desk_instance(&s, 6, 2, 5).0);
    }

    #[test]
    fn quick_calibration_is_positive() {
        let k = calibrate_kappa(&Scenario::default(), 4, 0.9, 0).unwrap();
        assert!(k.kappa > 0.0 && k.kappa < 10.0, "{k:?}");
    }
}
