//! Accurate localization: fly planned tours, re-range each target on the way
//! past its waypoint, refit, and replan whenever a hypothesis turns out to be
//! the wrong side of an ambiguous scan.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::bound;
use crate::mle::{fit_track, FitOptions, RangeWindow, TrackEstimate};
use crate::ranging::RangingParams;
use crate::model::{distance, Area, Scenario, Vec2, Vec3};
use crate::planner::{self, Plan, PlanContext, PlannerKind, Target};
use crate::seed;

use super::flight::Flight;
use super::mobility::World;
use super::phase1::fit_options;

/// Hard stop for runaway missions (about 14 hours at 25 ms slots).
const MAX_PHASE2_SLOTS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Never received during the scan.
    Undetected,
    /// Waiting for its UAV to reach the waypoint.
    Pending,
    /// Waypoint reached; collecting samples for the refit.
    Refining,
    Located,
    /// Neither hypothesis produced a signal.
    Failed,
    /// Its UAV turned back on energy before the visit.
    Unvisited,
}

/// The estimate a person ends the mission with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub estimate: TrackEstimate,
    /// Bound at `estimate.ref_slot`.
    pub error_bound: f64,
    /// Whether the estimate comes from a phase-2 refit (otherwise it is the
    /// phase-1 track extrapolated).
    pub refit: bool,
}

#[derive(Debug, Clone)]
struct Task {
    hypothesis: TrackEstimate,
    swapped: bool,
    status: TaskStatus,
    uav: Option<usize>,
    arrival: u64,
    leg_start: u64,
    fix: Option<Fix>,
}

#[derive(Debug, Clone)]
pub struct Phase2Result {
    pub statuses: Vec<TaskStatus>,
    pub fixes: Vec<Option<Fix>>,
    /// Times each person's hypothesis was switched to its mirror.
    pub swaps: Vec<u32>,
    /// UAV positions from the first phase-2 slot after the start to the end.
    pub uav_tracks: Vec<Vec<Vec3>>,
    pub return_slots: Vec<u64>,
    /// Energy including the energy passed in.
    pub energy: Vec<f64>,
    /// Visit waypoints actually reached, in order.
    pub visits: Vec<Vec<Vec2>>,
    pub plans: Vec<Plan>,
    pub planner_wall_time: f64,
    pub replan_count: u32,
    pub infeasible_accuracy: bool,
    pub aborted: Vec<bool>,
    pub end_slot: u64,
}

/// Inputs of the second phase beyond the scenario and the estimates.
#[derive(Debug, Clone)]
pub struct Phase2Setup {
    pub homes: Vec<Vec2>,
    pub energy_used: Vec<f64>,
    pub planner: PlannerKind,
    /// Root of the planner's rng streams (one per replan).
    pub planner_seed: u64,
}

struct Mission<'a> {
    scenario: &'a Scenario,
    setup: &'a Phase2Setup,
    tasks: Vec<Task>,
    flights: Vec<Flight>,
    route_targets: Vec<Vec<Option<usize>>>,
    leg_start: Vec<u64>,
    aborted: Vec<bool>,
    energy: Vec<f64>,
    plans: Vec<Plan>,
    wall: f64,
    infeasible: bool,
}

impl Mission<'_> {
    fn replan(&mut self, t: u64) {
        let s = self.scenario;
        let active: Vec<usize> = (0..self.flights.len()).filter(|&u| !self.aborted[u]).collect();
        let pending: Vec<usize> = (0..self.tasks.len())
            .filter(|&p| self.tasks[p].status == TaskStatus::Pending)
            .collect();
        if active.is_empty() {
            for &p in &pending {
                self.tasks[p].status = TaskStatus::Unvisited;
            }
            return;
        }
        if pending.is_empty() {
            for &u in &active {
                let home = self.setup.homes[u];
                let route = if self.flights[u].position == home { Vec::new() } else { vec![home] };
                self.route_targets[u] = vec![None; route.len()];
                self.flights[u].replace_route(route);
                self.leg_start[u] = t;
            }
            return;
        }
        let targets: Vec<Target> = pending
            .iter()
            .map(|&p| Target::from_estimate(&self.tasks[p].hypothesis))
            .collect();
        let mut ctx = PlanContext::new(
            s,
            active.iter().map(|&u| self.flights[u].position).collect(),
            active.iter().map(|&u| self.setup.homes[u]).collect(),
            t as f64 * s.slot_duration,
        );
        ctx.energy_used = active.iter().map(|&u| self.energy[u]).collect();
        let mut rng = seed::rng(self.setup.planner_seed, &[self.plans.len() as u64]);
        let clock = Instant::now();
        let plan = planner::solve(self.setup.planner, &targets, &ctx, &s.swarm, &mut rng);
        self.wall += clock.elapsed().as_secs_f64();
        self.infeasible |= !plan.infeasible.is_empty();

        for (k, &u) in active.iter().enumerate() {
            let ids = &plan.tours[k];
            let home = self.setup.homes[u];
            if ids.is_empty() && self.flights[u].position == home {
                self.flights[u].replace_route(Vec::new());
                self.route_targets[u].clear();
            } else {
                self.flights[u].replace_route(plan.waypoints[k][1..].to_vec());
                self.route_targets[u] = ids.iter().map(|&id| Some(id)).chain([None]).collect();
            }
            self.leg_start[u] = t;
            for &id in ids {
                self.tasks[id].uav = Some(u);
            }
        }
        self.plans.push(plan);
    }
}

/// Runs phase 2 from `world.slot`. `estimates` already carry the hypothesis
/// chosen for the first plan.
pub fn simulate_phase2(
    scenario: &Scenario,
    estimates: &[Option<TrackEstimate>],
    setup: &Phase2Setup,
    world: &mut World,
    rng: &mut ChaCha8Rng,
) -> Result<Phase2Result> {
    let s = scenario;
    let dt = s.slot_duration;
    let m = setup.homes.len();
    let persons = estimates.len();
    let ranging = s.ranging();
    let options = fit_options(s);
    let cruise = s.power.propulsion_power(s.uav_vmax)?;

    let tasks = estimates
        .iter()
        .map(|e| match e {
            Some(est) => Task {
                hypothesis: est.clone(),
                swapped: false,
                status: TaskStatus::Pending,
                uav: None,
                arrival: 0,
                leg_start: 0,
                fix: None,
            },
            None => Task {
                hypothesis: placeholder(),
                swapped: false,
                status: TaskStatus::Undetected,
                uav: None,
                arrival: 0,
                leg_start: 0,
                fix: None,
            },
        })
        .collect();
    let mut mission = Mission {
        scenario: s,
        setup,
        tasks,
        flights: setup
            .homes
            .iter()
            .map(|h| Flight::new(*h, Vec::new(), s.uav_vmax, s.altitude))
            .collect(),
        route_targets: vec![Vec::new(); m],
        leg_start: vec![world.slot; m],
        aborted: vec![false; m],
        energy: setup.energy_used.clone(),
        plans: Vec::new(),
        wall: 0.0,
        infeasible: false,
    };
    let mut return_slots = vec![world.slot; m];
    let mut visits: Vec<Vec<Vec2>> = vec![Vec::new(); m];
    let mut uav_tracks: Vec<Vec<Vec3>> = vec![Vec::new(); m];
    let mut swaps = vec![0u32; persons];
    let mut replan_count = 0u32;
    // latest contiguous window and last reception slot per (uav, person)
    let mut windows: Vec<Option<RangeWindow>> = vec![None; m * persons];
    let mut last_rx: Vec<Option<u64>> = vec![None; m * persons];

    let start = world.slot;
    mission.replan(start);

    loop {
        let t = world.slot;
        for u in 0..m {
            let q = mission.flights[u].position3();
            for p in 0..persons {
                let task = &mission.tasks[p];
                let listening = task.uav == Some(u)
                    && matches!(task.status, TaskStatus::Pending | TaskStatus::Refining);
                if !listening {
                    continue;
                }
                let d = distance(q, world.persons[p].position);
                if d > s.comm_range {
                    continue;
                }
                let samples = (0..s.samples_per_slot)
                    .map(|_| ranging.sample_range(d, rng))
                    .collect::<Result<Vec<f64>>>()?;
                let key = u * persons + p;
                match &mut windows[key] {
                    Some(w) if w.end_slot() + 1 == t => w.push_slot(q, samples),
                    slot => *slot = Some(RangeWindow::new(u, p, t, dt, vec![q], vec![samples])?),
                }
                last_rx[key] = Some(t);
            }
        }

        let mut need_replan = false;
        for p in 0..persons {
            let task = &mission.tasks[p];
            if task.status != TaskStatus::Refining {
                continue;
            }
            let u = task.uav.expect("refining tasks have a UAV");
            let key = u * persons + p;
            let heard = last_rx[key].is_some_and(|r| r >= task.leg_start);
            if heard && t >= task.arrival + s.refine_slots {
                let window = windows[key].as_ref().expect("heard implies a window");
                let fix = refit(s, &task.hypothesis, window, &ranging, &options)?;
                let task = &mut mission.tasks[p];
                task.fix = Some(fix);
                task.status = TaskStatus::Located;
            } else if !heard && t >= task.arrival + s.hypothesis_timeout {
                let task = &mut mission.tasks[p];
                match (task.swapped, task.hypothesis.swapped()) {
                    (false, Some(mirror)) => {
                        task.hypothesis = mirror;
                        task.swapped = true;
                        task.status = TaskStatus::Pending;
                        swaps[p] += 1;
                        need_replan = true;
                    }
                    _ => task.status = TaskStatus::Failed,
                }
            }
        }
        if need_replan {
            replan_count += 1;
            mission.replan(t);
        }

        let waiting = mission.tasks.iter().any(|k| {
            k.status == TaskStatus::Refining
                || (k.status == TaskStatus::Pending && k.uav.is_some_and(|u| !mission.aborted[u]))
        });
        let flying = mission.flights.iter().any(|f| !f.done());
        if (!waiting && !flying) || t - start >= MAX_PHASE2_SLOTS {
            break;
        }

        world.step();
        let now = world.slot;
        for u in 0..m {
            if !mission.flights[u].done() && !mission.aborted[u] {
                let home = setup.homes[u];
                let reserve = cruise * (mission.flights[u].position.distance(home) / s.uav_vmax + dt);
                if mission.energy[u] + reserve > s.energy_budget {
                    mission.aborted[u] = true;
                    mission.flights[u].replace_route(vec![home]);
                    mission.route_targets[u] = vec![None];
                    for task in mission.tasks.iter_mut() {
                        if task.uav == Some(u) && task.status == TaskStatus::Pending {
                            task.status = TaskStatus::Unvisited;
                        }
                    }
                }
            }
            if !mission.flights[u].done() {
                let step = mission.flights[u].step(dt);
                mission.energy[u] += s.power.propulsion_power(step.distance / dt)? * dt;
                for idx in step.reached {
                    let wp = mission.flights[u].waypoints()[idx];
                    if let Some(Some(p)) = mission.route_targets[u].get(idx) {
                        let task = &mut mission.tasks[*p];
                        if task.status == TaskStatus::Pending {
                            task.status = TaskStatus::Refining;
                            task.arrival = now;
                            task.leg_start = mission.leg_start[u];
                        }
                        visits[u].push(wp);
                    }
                    mission.leg_start[u] = now;
                }
                if mission.flights[u].done() {
                    return_slots[u] = now;
                }
            }
            uav_tracks[u].push(mission.flights[u].position3());
        }
    }

    let end = world.slot;
    let alpha = s.alpha;
    let area = s.area();
    let mut fixes = Vec::with_capacity(persons);
    let mut statuses = Vec::with_capacity(persons);
    for task in mission.tasks.iter_mut() {
        if matches!(task.status, TaskStatus::Pending | TaskStatus::Refining) {
            task.status = TaskStatus::Unvisited;
        }
        let fix = match (&task.fix, task.status) {
            (_, TaskStatus::Undetected) => None,
            (Some(f), _) => Some(f.clone()),
            (None, _) => Some(extrapolated(&task.hypothesis, end.max(task.hypothesis.ref_slot), alpha, &area)),
        };
        fixes.push(fix);
        statuses.push(task.status);
    }

    Ok(Phase2Result {
        statuses,
        fixes,
        swaps,
        uav_tracks,
        return_slots,
        energy: mission.energy,
        visits,
        plans: mission.plans,
        planner_wall_time: mission.wall,
        replan_count,
        infeasible_accuracy: mission.infeasible,
        aborted: mission.aborted,
        end_slot: end,
    })
}

/// Refits a target from its phase-2 window.
///
/// A straight approach leaves its own mirror pair; the hypothesis nearer to
/// either side of the prior wins, and its bound is recomputed on its own side.
/// The refit is kept when that bound is no looser than the prior's grown
/// bound, or when the fresh annuli exclude the prior's prediction.
fn refit(
    s: &Scenario,
    prior: &TrackEstimate,
    window: &RangeWindow,
    ranging: &RangingParams,
    options: &FitOptions,
) -> Result<Fix> {
    let slot = window.end_slot().max(prior.ref_slot);
    let area = s.area();
    let prior_fix = extrapolated(prior, slot, s.alpha, &area);
    if window.len() < 3 {
        return Ok(prior_fix);
    }
    let fit = fit_track(window, ranging, options)?;
    let mut references = vec![prior_fix.estimate.position];
    if let Some(m) = prior.swapped() {
        references.push(extrapolated(&m, slot, s.alpha, &area).estimate.position);
    }
    let nearest = |p: Vec2| {
        references
            .iter()
            .copied()
            .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
            .expect("at least one reference")
    };
    let mut chosen = match fit.swapped() {
        Some(other) if nearest(other.position).distance(other.position) < nearest(fit.position).distance(fit.position) => other,
        _ => fit,
    };

    let w0 = chosen.position - chosen.velocity * window.span();
    let annuli = bound::window_annuli(
        window,
        (w0, chosen.velocity),
        ranging,
        options.v_max,
        options.annuli_count,
        options.annulus_source,
    );
    let side = chosen.line.map(|l| l.side_of(chosen.position));
    let b = bound::farthest_point_error_within(&annuli, side, chosen.position, options.resolution);
    chosen.error_bound = b.error;
    chosen.empty_region = b.empty_region;

    // the prior's own bound only holds while the fresh ranges agree with it
    let contradicted = !bound::region_contains(&annuli, prior_fix.estimate.position);
    if !b.empty_region && (contradicted || chosen.error_bound <= prior_fix.error_bound) {
        let error_bound = chosen.error_bound;
        Ok(Fix {
            estimate: chosen,
            error_bound,
            refit: true,
        })
    } else {
        Ok(prior_fix)
    }
}

/// `est` moved forward to `slot` with its bound grown accordingly. The
/// prediction bounces off the edges of `area` as persons do.
pub fn extrapolated(est: &TrackEstimate, slot: u64, alpha: f64, area: &Area) -> Fix {
    let slot = slot.max(est.ref_slot);
    let dt = (slot - est.ref_slot) as f64 * est.slot_duration;
    let bound = est.error_model(alpha).error_after(dt);
    let mut e = est.clone();
    (e.position, e.velocity) = area.walk(est.position, est.velocity, dt);
    e.mirror = est.mirror.map(|mut m| {
        (m.position, m.velocity) = area.walk(m.position, m.velocity, dt);
        m
    });
    e.ref_slot = slot;
    e.error_bound = bound;
    Fix {
        estimate: e,
        error_bound: bound,
        refit: false,
    }
}

fn placeholder() -> TrackEstimate {
    TrackEstimate {
        person: usize::MAX,
        uav: usize::MAX,
        ref_slot: 0,
        slot_duration: 1.0,
        position: Vec2::ZERO,
        velocity: Vec2::ZERO,
        error_bound: f64::INFINITY,
        empty_region: true,
        mirror: None,
        line: None,
        log_likelihood: f64::NEG_INFINITY,
        converged: false,
        window_slots: 0,
    }
}
