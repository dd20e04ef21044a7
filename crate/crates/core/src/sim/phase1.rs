//! Initial scan: every UAV sweeps its strip once while ranging whoever is in
//! range, then each person gets a track from their last usable window.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mle::{fit_track, FitOptions, RangeWindow, TrackEstimate};
use crate::model::{distance, Area, Scenario, Vec3};
use crate::scan::{lanes, ScanPath};

use super::flight::Flight;
use super::mobility::World;

/// Windows closer than this to their mirror are treated as unambiguous.
const MIN_MIRROR_SEPARATION: f64 = 1.0;

/// Every closed reception window of the scan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceptionLog {
    pub windows: Vec<RangeWindow>,
}

impl ReceptionLog {
    pub fn for_person(&self, person: usize) -> impl Iterator<Item = &RangeWindow> {
        self.windows.iter().filter(move |w| w.person == person)
    }

    pub fn for_pair(&self, uav: usize, person: usize) -> impl Iterator<Item = &RangeWindow> {
        self.windows
            .iter()
            .filter(move |w| w.uav == uav && w.person == person)
    }
}

#[derive(Debug, Clone)]
pub struct Phase1Result {
    pub log: ReceptionLog,
    /// One estimate per person; `None` when never received.
    pub estimates: Vec<Option<TrackEstimate>>,
    /// Slot at which every UAV is back at its start.
    pub end_slot: u64,
    /// Slot at which each UAV got back.
    pub return_slots: Vec<u64>,
    /// UAV positions for slots `0..=end_slot`.
    pub uav_tracks: Vec<Vec<Vec3>>,
    pub energy: Vec<f64>,
}

pub fn fit_options(s: &Scenario) -> FitOptions {
    FitOptions {
        v_max: s.person_vmax,
        search_radius: s.ground_radius(),
        collinear_tol: s.collinear_tol,
        annuli_count: s.annuli_count,
        annulus_source: s.annulus_source,
        ..FitOptions::default()
    }
}

/// The latest window with at least `min_slots` slots, or else the longest.
pub fn select_window<'a>(
    windows: impl IntoIterator<Item = &'a RangeWindow>,
    min_slots: usize,
) -> Option<&'a RangeWindow> {
    let all: Vec<&RangeWindow> = windows.into_iter().filter(|w| w.len() >= 3).collect();
    let long_enough = all
        .iter()
        .filter(|w| w.len() >= min_slots)
        .max_by_key(|w| (w.end_slot(), w.len(), std::cmp::Reverse(w.uav)));
    long_enough.copied().or_else(|| {
        all.iter()
            .max_by_key(|w| (w.len(), w.end_slot(), std::cmp::Reverse(w.uav)))
            .copied()
    })
}

/// Drops a mirror that lies outside the area or on top of the primary.
pub fn prune_mirror(est: &mut TrackEstimate, area: &Area) {
    if let Some(m) = est.mirror {
        if !area.contains(m.position) || m.position.distance(est.position) < MIN_MIRROR_SEPARATION {
            est.mirror = None;
        }
    }
}

/// Open window of one (uav, person) pair and the lane it belongs to.
struct Open {
    window: RangeWindow,
    lane: usize,
}

pub fn simulate_phase1(
    scenario: &Scenario,
    paths: &[ScanPath],
    world: &mut World,
    rng: &mut ChaCha8Rng,
) -> Result<Phase1Result> {
    let ranging = scenario.ranging();
    let dt = scenario.slot_duration;
    let persons = world.persons.len();
    let m = paths.len();

    let mut flights = Vec::with_capacity(m);
    let mut segment_lane = Vec::with_capacity(m);
    for path in paths {
        let poly = path.polyline();
        let mut seg = vec![0usize; poly.len().saturating_sub(1)];
        for (lane, &(a, b)) in lanes(&poly).iter().enumerate() {
            for s in seg.iter_mut().take(b).skip(a) {
                *s = lane;
            }
        }
        segment_lane.push(seg);
        flights.push(Flight::new(
            path.start,
            poly[1..].to_vec(),
            scenario.uav_vmax,
            scenario.altitude,
        ));
    }

    let start = world.slot;
    let mut open: Vec<Option<Open>> = (0..m * persons).map(|_| None).collect();
    let mut log = ReceptionLog::default();
    let mut return_slots: Vec<Option<u64>> = vec![None; m];
    let mut energy = vec![0.0; m];
    let mut uav_tracks: Vec<Vec<Vec3>> = flights.iter().map(|f| vec![f.position3()]).collect();

    loop {
        let t = world.slot;
        for (u, flight) in flights.iter().enumerate() {
            if return_slots[u].is_some_and(|r| t > r) {
                continue;
            }
            let q = flight.position3();
            let seg = &segment_lane[u];
            let lane = seg[flight.next_index().min(seg.len().saturating_sub(1))];
            for p in 0..persons {
                let slot_key = u * persons + p;
                let w = world.persons[p].position;
                let d = distance(q, w);
                if d > scenario.comm_range {
                    if let Some(o) = open[slot_key].take() {
                        log.windows.push(o.window);
                    }
                    continue;
                }
                let samples = (0..scenario.samples_per_slot)
                    .map(|_| ranging.sample_range(d, rng))
                    .collect::<Result<Vec<f64>>>()?;
                match &mut open[slot_key] {
                    Some(o) if o.lane == lane && o.window.end_slot() + 1 == t => {
                        o.window.push_slot(q, samples);
                    }
                    other => {
                        if let Some(o) = other.take() {
                            log.windows.push(o.window);
                        }
                        *other = Some(Open {
                            window: RangeWindow::new(u, p, t, dt, vec![q], vec![samples])?,
                            lane,
                        });
                    }
                }
            }
        }
        if return_slots.iter().all(Option::is_some) {
            break;
        }
        world.step();
        for (u, flight) in flights.iter_mut().enumerate() {
            if !flight.done() {
                let step = flight.step(dt);
                energy[u] += scenario.power.propulsion_power(step.distance / dt)? * dt;
                if flight.done() {
                    return_slots[u] = Some(world.slot);
                }
            }
            uav_tracks[u].push(flight.position3());
        }
    }
    for o in open.into_iter().flatten() {
        log.windows.push(o.window);
    }
    log.windows
        .sort_by_key(|w| (w.person, w.start_slot, w.uav));

    let options = fit_options(scenario);
    let area = scenario.area();
    let estimates = (0..persons)
        .map(|p| {
            select_window(log.for_person(p), scenario.min_window_slots)
                .map(|w| {
                    let mut est = fit_track(w, &ranging, &options)?;
                    prune_mirror(&mut est, &area);
                    Ok(est)
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;

    let return_slots: Vec<u64> = return_slots.into_iter().map(|r| r.unwrap_or(start)).collect();
    Ok(Phase1Result {
        log,
        estimates,
        end_slot: world.slot,
        return_slots,
        uav_tracks,
        energy,
    })
}
