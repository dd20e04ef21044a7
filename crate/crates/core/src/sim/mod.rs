//! End-to-end missions: scan, fit, plan, refine, and the metrics they yield.

pub mod flight;
pub mod mobility;
pub mod phase1;
pub mod phase2;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mle::TrackEstimate;
use crate::model::{Scenario, Vec2, Vec3};
use crate::planner::{Plan, PlannerKind};
use crate::scan::{plan_scan, ScanPath};
use crate::seed;

use mobility::{MobilityParams, World};
use phase1::simulate_phase1;
use phase2::{simulate_phase2, Phase2Setup, TaskStatus};

/// What happened to one person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonOutcome {
    pub id: usize,
    pub status: TaskStatus,
    pub estimate: Option<TrackEstimate>,
    pub error_bound: Option<f64>,
    /// Distance from the final estimate to the true position at the
    /// estimate's reference slot.
    pub true_error: Option<f64>,
    pub located: bool,
    pub met_e_th: bool,
    pub refit: bool,
    pub swaps: u32,
    /// Slant range from the fixing UAV to the estimate at its reference slot.
    pub fix_range: Option<f64>,
    /// Mean ranging bias at `fix_range`, as a magnitude and with the
    /// never-positive sign convention.
    pub mean_range_error: Option<f64>,
    pub signed_mean_range_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub seed_index: u64,
    pub person_count: usize,
    pub planner: PlannerKind,
    pub slot_duration: f64,
    pub e_th: f64,
    pub persons: Vec<PersonOutcome>,
    pub scan_paths: Vec<ScanPath>,
    /// Slot at which the last UAV finished the scan.
    pub scan_end_slot: u64,
    /// Return time of each UAV (s).
    pub uav_makespans: Vec<f64>,
    pub makespan: f64,
    pub energy: Vec<f64>,
    pub within_budget: Vec<bool>,
    /// UAVs that turned back early on energy.
    pub aborted: Vec<bool>,
    pub plans: Vec<Plan>,
    pub planner_wall_time: f64,
    pub replan_count: u32,
    pub infeasible_accuracy: bool,
    /// UAV positions at every slot.
    #[serde(skip)]
    pub uav_tracks: Vec<Vec<Vec3>>,
    /// Person positions at every slot, indexed `[slot][person]`.
    #[serde(skip)]
    pub person_tracks: Vec<Vec<Vec2>>,
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub persons: usize,
    pub planner: PlannerKind,
    pub makespan: f64,
    pub max_error: f64,
    pub mean_error: f64,
    pub fraction_within_e_th: f64,
    pub total_energy: f64,
    pub planner_wall_time: f64,
    pub replans: u32,
}

impl MetricsRow {
    pub const HEADER: &'static str = "seed,persons,planner,makespan,max_error,mean_error,fraction_within_e_th,total_energy,planner_wall_time,replans";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{:.6},{}",
            self.seed,
            self.persons,
            self.planner,
            self.makespan,
            self.max_error,
            self.mean_error,
            self.fraction_within_e_th,
            self.total_energy,
            self.planner_wall_time,
            self.replans
        )
    }

    /// The row with wall time zeroed, for byte-level comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            planner_wall_time: 0.0,
            ..self.clone()
        }
    }
}

pub fn collect_metrics(report: &MissionReport) -> MetricsRow {
    let errors: Vec<f64> = report.persons.iter().filter_map(|p| p.true_error).collect();
    let n = report.persons.len();
    let (max_error, mean_error) = if errors.is_empty() {
        (0.0, 0.0)
    } else {
        (
            errors.iter().copied().fold(0.0, f64::max),
            errors.iter().sum::<f64>() / errors.len() as f64,
        )
    };
    let within = report.persons.iter().filter(|p| p.met_e_th).count();
    MetricsRow {
        seed: report.seed_index,
        persons: n,
        planner: report.planner,
        makespan: report.makespan,
        max_error,
        mean_error,
        fraction_within_e_th: if n == 0 { 1.0 } else { within as f64 / n as f64 },
        total_energy: report.energy.iter().sum(),
        planner_wall_time: report.planner_wall_time,
        replans: report.replan_count,
    }
}

/// Seed of the world (persons, noise, hypothesis choice) for one mission.
/// Planners share it so that their rows compare on the same ground truth.
pub fn world_seed(scenario: &Scenario, seed_index: u64) -> u64 {
    seed::derive(scenario.seed, &[scenario.person_count as u64, seed_index])
}

/// Runs both phases for `scenario.person_count` persons.
pub fn run_mission(scenario: &Scenario, planner: PlannerKind, seed_index: u64) -> Result<MissionReport> {
    let s = scenario;
    let ws = world_seed(s, seed_index);
    let mut world = World::spawn(
        MobilityParams::from_scenario(s),
        s.person_count,
        seed::rng(ws, &[seed::tag("mobility")]),
    );
    let mut sensing = seed::rng(ws, &[seed::tag("sensing")]);
    let mut choice = seed::rng(ws, &[seed::tag("choice")]);

    let paths = plan_scan(&s.area(), s.uav_count, s.ground_radius())?;
    let p1 = simulate_phase1(s, &paths, &mut world, &mut sensing)?;

    // the first plan picks either side of an ambiguous scan at random
    let estimates: Vec<Option<TrackEstimate>> = p1
        .estimates
        .iter()
        .map(|e| {
            e.as_ref().map(|est| match est.swapped() {
                Some(other) if choice.random_bool(0.5) => other,
                _ => est.clone(),
            })
        })
        .collect();

    let setup = Phase2Setup {
        homes: paths.iter().map(|p| p.start).collect(),
        energy_used: p1.energy.clone(),
        planner,
        planner_seed: seed::derive(ws, &[seed::tag("planner"), seed::tag(planner.name()), s.swarm.seed]),
    };
    let p2 = simulate_phase2(s, &estimates, &setup, &mut world, &mut sensing)?;

    let dt = s.slot_duration;
    let uav_tracks: Vec<Vec<Vec3>> = p1
        .uav_tracks
        .into_iter()
        .zip(p2.uav_tracks)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    let ranging = s.ranging();
    let persons = (0..s.person_count)
        .map(|p| {
            let fix = p2.fixes[p].as_ref();
            let true_error = fix.map(|f| {
                let slot = f.estimate.ref_slot.min(world.slot);
                f.estimate.position.distance(world.position(p, slot))
            });
            let fix_range = fix.and_then(|f| {
                let track = uav_tracks.get(f.estimate.uav)?;
                let q = track.get(f.estimate.ref_slot as usize).or(track.last())?;
                Some(crate::model::distance(*q, f.estimate.position.with_z(0.0)))
            });
            PersonOutcome {
                id: p,
                status: p2.statuses[p],
                estimate: fix.map(|f| f.estimate.clone()),
                error_bound: fix.map(|f| f.error_bound),
                true_error,
                located: p2.statuses[p] == TaskStatus::Located,
                met_e_th: true_error.is_some_and(|e| e <= s.e_th),
                refit: fix.is_some_and(|f| f.refit),
                swaps: p2.swaps[p],
                fix_range,
                mean_range_error: fix_range.map(|d| ranging.mean_range_error(d)),
                signed_mean_range_error: fix_range.map(|d| ranging.signed_mean_range_error(d)),
            }
        })
        .collect();

    // a UAV that never leaves home in phase 2 finished with the scan
    let uav_makespans: Vec<f64> = (0..s.uav_count)
        .map(|u| {
            let slot = if p2.return_slots[u] > p1.end_slot {
                p2.return_slots[u]
            } else {
                p1.return_slots[u]
            };
            slot as f64 * dt
        })
        .collect();
    let makespan = uav_makespans.iter().copied().fold(0.0, f64::max);
    let within_budget = p2.energy.iter().map(|&e| e <= s.energy_budget).collect();

    Ok(MissionReport {
        seed_index,
        person_count: s.person_count,
        planner,
        slot_duration: dt,
        e_th: s.e_th,
        persons,
        scan_paths: paths,
        scan_end_slot: p1.end_slot,
        uav_makespans,
        makespan,
        energy: p2.energy,
        within_budget,
        aborted: p2.aborted,
        plans: p2.plans,
        planner_wall_time: p2.planner_wall_time,
        replan_count: p2.replan_count,
        infeasible_accuracy: p2.infeasible_accuracy,
        uav_tracks,
        person_tracks: world.history,
    })
}

/// One line of the trajectory trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub entity: Entity,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Serialized as `uav<k>` or `person<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Entity {
    Uav(usize),
    Person(usize),
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::Uav(k) => write!(f, "uav{k}"),
            Entity::Person(k) => write!(f, "person{k}"),
        }
    }
}

impl From<Entity> for String {
    fn from(e: Entity) -> Self {
        e.to_string()
    }
}

impl TryFrom<String> for Entity {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let parse = |rest: &str| rest.parse::<usize>().map_err(|_| format!("bad entity id `{s}`"));
        if let Some(rest) = s.strip_prefix("uav") {
            Ok(Entity::Uav(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("person") {
            Ok(Entity::Person(parse(rest)?))
        } else {
            Err(format!("bad entity id `{s}`"))
        }
    }
}

/// Every entity at every slot; velocities are the displacement to the next
/// slot (zero at the last one).
pub fn trace_records(report: &MissionReport) -> impl Iterator<Item = TraceRecord> + '_ {
    let dt = report.slot_duration;
    let slots = report
        .uav_tracks
        .iter()
        .map(Vec::len)
        .chain([report.person_tracks.len()])
        .max()
        .unwrap_or(0);
    (0..slots).flat_map(move |t| {
        let uavs = report.uav_tracks.iter().enumerate().filter_map(move |(u, track)| {
            let q = *track.get(t)?;
            let next = track.get(t + 1).copied().unwrap_or(q);
            Some(TraceRecord {
                slot: t as u64,
                entity: Entity::Uav(u),
                x: q.x,
                y: q.y,
                z: q.z,
                vx: (next.x - q.x) / dt,
                vy: (next.y - q.y) / dt,
            })
        });
        let people = report.person_tracks.get(t).into_iter().flat_map(move |row| {
            row.iter().enumerate().map(move |(p, w)| {
                let next = report
                    .person_tracks
                    .get(t + 1)
                    .map_or(*w, |r| r[p]);
                TraceRecord {
                    slot: t as u64,
                    entity: Entity::Person(p),
                    x: w.x,
                    y: w.y,
                    z: 0.0,
                    vx: (next.x - w.x) / dt,
                    vy: (next.y - w.y) / dt,
                }
            })
        });
        uavs.chain(people)
    })
}

/// Writes the trace as JSON lines.
pub fn write_trace<W: Write>(report: &MissionReport, mut out: W) -> Result<()> {
    for r in trace_records(report) {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
