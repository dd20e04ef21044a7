//! Phase-2 tour planning: split the located persons among the UAVs and order
//! each tour so the latest return is as early as possible.
//!
//! A tour does not fly over each estimate. It stops at the edge of an
//! accuracy circle around the target's extrapolated position, whose radius is
//! the largest that still predicts a refit within `e_th` ([`access_radius`]).
//! Candidate plans are random-key vectors ([`decode`]) searched by particle
//! swarms ([`swarm`]) or by a permutation GA ([`ga`]).

pub mod ga;
pub mod swarm;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::PowerParams;
use crate::error::{Error, Result};
use crate::mle::TrackEstimate;
use crate::model::{Area, Scenario, Vec2};
use crate::ranging::RangingParams;

pub use swarm::adaptive_inertia;

/// Added to the fitness for every target that cannot meet `e_th` and for every
/// UAV over its energy budget.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmParams {
    pub population: usize,
    pub iterations: usize,
    /// Pull towards the particle's own best.
    pub c1: f64,
    /// Pull towards the swarm's best.
    pub c2: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Reference points per accuracy circle.
    pub reference_points: usize,
    /// Ratio of predicted localization error to the mean ranging error.
    pub kappa: f64,
    pub seed: u64,
    /// Draw the random factors of the velocity update per key instead of once
    /// per particle.
    pub rand_per_coordinate: bool,
    /// Largest key velocity, as a fraction of the key range `M`.
    pub velocity_limit: f64,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            population: 50,
            iterations: 200,
            c1: 2.0,
            c2: 2.0,
            eps_min: 0.4,
            eps_max: 0.9,
            reference_points: 8,
            kappa: 2.0,
            seed: 0,
            rand_per_coordinate: true,
            velocity_limit: 1.0,
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::scenario("swarm.population", "must be >= 2"));
        }
        if self.iterations == 0 {
            return Err(Error::scenario("swarm.iterations", "must be >= 1"));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= self.eps_max) {
            return Err(Error::scenario(
                "swarm.eps_min",
                format!("need 0 < eps_min <= eps_max, got {} and {}", self.eps_min, self.eps_max),
            ));
        }
        if self.reference_points < 3 {
            return Err(Error::scenario("swarm.reference_points", "must be >= 3"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::scenario("swarm.kappa", "must be positive"));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::scenario("swarm.c1", "acceleration weights must be >= 0"));
        }
        if !(self.velocity_limit > 0.0) {
            return Err(Error::scenario("swarm.velocity_limit", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Epso,
    Pso,
    Ga,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Epso, PlannerKind::Pso, PlannerKind::Ga];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Epso => "epso",
            PlannerKind::Pso => "pso",
            PlannerKind::Ga => "ga",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epso" => Ok(PlannerKind::Epso),
            "pso" => Ok(PlannerKind::Pso),
            "ga" => Ok(PlannerKind::Ga),
            _ => Err(Error::UnknownPlanner(s.to_string())),
        }
    }
}

/// A person as the planner sees it: a constant-velocity track with a bound
/// that grows after `ref_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Mission time (s) of `position`.
    pub ref_time: f64,
    pub error_bound: f64,
}

impl Target {
    pub fn from_estimate(est: &TrackEstimate) -> Self {
        Self {
            id: est.person,
            position: est.position,
            velocity: est.velocity,
            ref_time: est.ref_slot as f64 * est.slot_duration,
            error_bound: est.error_bound,
        }
    }

    pub fn position_at(&self, t: f64) -> Vec2 {
        self.position + self.velocity * (t - self.ref_time).max(0.0)
    }

    pub fn error_at(&self, t: f64, alpha: f64) -> f64 {
        self.error_bound * (1.0 + alpha * (t - self.ref_time).max(0.0))
    }
}

/// Everything about the fleet and the world that a plan depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub starts: Vec<Vec2>,
    pub ends: Vec<Vec2>,
    /// Mission time (s) at which the tours begin.
    pub start_time: f64,
    pub uav_speed: f64,
    pub altitude: f64,
    /// Ground radius within communication range.
    pub ground_radius: f64,
    pub e_th: f64,
    pub alpha: f64,
    pub ranging: RangingParams,
    pub edge_access: bool,
    pub power: PowerParams,
    pub energy_budget: f64,
    /// Energy already spent by each UAV (J).
    pub energy_used: Vec<f64>,
    /// Walls that persons bounce off; `None` predicts straight lines.
    #[serde(default)]
    pub area: Option<Area>,
}

impl PlanContext {
    /// Tours from `starts` back to `ends`, beginning at `start_time`.
    pub fn new(scenario: &Scenario, starts: Vec<Vec2>, ends: Vec<Vec2>, start_time: f64) -> Self {
        let m = starts.len();
        Self {
            starts,
            ends,
            start_time,
            uav_speed: scenario.uav_vmax,
            altitude: scenario.altitude,
            ground_radius: scenario.ground_radius(),
            e_th: scenario.e_th,
            alpha: scenario.alpha,
            ranging: scenario.ranging(),
            edge_access: scenario.edge_access,
            power: scenario.power,
            energy_budget: scenario.energy_budget,
            energy_used: vec![0.0; m],
            area: Some(scenario.area()),
        }
    }

    /// Predicted position of `target` at time `t`.
    pub fn position_of(&self, target: &Target, t: f64) -> Vec2 {
        match &self.area {
            Some(a) => a.walk(target.position, target.velocity, (t - target.ref_time).max(0.0)).0,
            None => target.position_at(t),
        }
    }

    pub fn uav_count(&self) -> usize {
        self.starts.len()
    }
}

/// Per-UAV visit orders plus the waypoints that realize them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Target ids in visiting order, one list per UAV.
    pub tours: Vec<Vec<usize>>,
    /// Start, one waypoint per visited target, end.
    pub waypoints: Vec<Vec<Vec2>>,
    /// Access radius used for each visit.
    pub radii: Vec<Vec<f64>>,
    /// Planned mission time (s) of each visit waypoint.
    pub arrival_times: Vec<Vec<f64>>,
    /// Seconds from the plan's start time to each UAV's return.
    pub tour_times: Vec<f64>,
    pub makespan: f64,
    /// Makespan plus penalties.
    pub fitness: f64,
    /// Targets for which even an overhead pass cannot meet `e_th`.
    pub infeasible: Vec<usize>,
    pub over_budget: Vec<usize>,
    /// Best fitness after initialization and after every iteration.
    pub history: Vec<f64>,
}

/// Random-key decoding: key `s` sends target `s` to UAV `floor(key)` (clamped
/// to `0..m`), and each UAV visits its targets by ascending fractional part,
/// ties by index.
pub fn decode(keys: &[f64], m: usize) -> Vec<Vec<usize>> {
    let mut tours: Vec<Vec<(f64, usize)>> = vec![Vec::new(); m.max(1)];
    for (s, &k) in keys.iter().enumerate() {
        let k = if k.is_finite() { k } else { 0.0 };
        let uav = (k.floor().max(0.0) as usize).min(m.max(1) - 1);
        tours[uav].push((k - k.floor(), s));
    }
    tours
        .into_iter()
        .map(|mut t| {
            t.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            t.into_iter().map(|(_, s)| s).collect()
        })
        .collect()
}

/// Seconds to fly the polyline at `v_max`.
pub fn tour_time(waypoints: &[Vec2], v_max: f64) -> f64 {
    waypoints.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>() / v_max
}

/// `count` points on the circle, equally spaced from angle 0.
pub fn reference_points(center: Vec2, radius: f64, count: usize) -> Vec<Vec2> {
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            center + Vec2::from_polar(radius, a)
        })
        .collect()
}

/// Predicted refit error when the person is `ground` meters from the UAV's
/// closest approach.
pub fn predicted_error(ground: f64, ranging: &RangingParams, altitude: f64, kappa: f64) -> f64 {
    kappa * ranging.mean_range_error(ground.hypot(altitude))
}

/// Largest access radius around a target with current bound `e_s` such that a
/// waypoint at that radius predicts an error within `e_th` for every reference
/// point, capped so that the whole uncertainty circle stays in communication
/// range (`rho + e_s <= g`). Bisection to 0.1 m.
///
/// Reference points are laid out from the approach bearing. Returns `None`
/// when even a waypoint on the estimate misses `e_th`.
pub fn access_radius(
    e_s: f64,
    e_th: f64,
    ranging: &RangingParams,
    altitude: f64,
    reference_count: usize,
    kappa: f64,
    g: f64,
) -> Option<f64> {
    let refs = reference_points(Vec2::ZERO, e_s, reference_count);
    let ok = |rho: f64| {
        let wp = Vec2::new(-rho, 0.0);
        let worst = refs.iter().map(|u| u.distance(wp)).fold(0.0, f64::max);
        predicted_error(worst, ranging, altitude, kappa) <= e_th
    };
    if !ok(0.0) {
        return None;
    }
    let cap = (g - e_s).max(0.0);
    if ok(cap) {
        return Some(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Where the segment `prev -> center` first meets the circle of radius `rho`
/// around `center`; `prev` itself when it is already inside.
pub fn edge_waypoint(prev: Vec2, center: Vec2, rho: f64) -> Vec2 {
    let d = prev.distance(center);
    if d <= rho {
        return prev;
    }
    center + (prev - center) * (rho / d)
}

/// One UAV's tour through `order` (indices into `targets`).
#[derive(Debug, Clone, PartialEq)]
pub struct TourEval {
    pub waypoints: Vec<Vec2>,
    pub radii: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub time: f64,
    pub infeasible: Vec<usize>,
    pub over_budget: bool,
}

impl TourEval {
    pub fn penalty_count(&self) -> usize {
        self.infeasible.len() + usize::from(self.over_budget)
    }
}

/// Walks one tour forward once: each target is extrapolated to the time the
/// UAV would reach it flying straight at full speed, then the waypoint is
/// pulled back to the edge of its access circle.
pub fn evaluate_tour(
    uav: usize,
    order: &[usize],
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
) -> TourEval {
    let v = ctx.uav_speed;
    let mut pos = ctx.starts[uav];
    let mut t = ctx.start_time;
    let mut waypoints = Vec::with_capacity(order.len() + 2);
    let mut radii = Vec::with_capacity(order.len());
    let mut arrivals = Vec::with_capacity(order.len());
    let mut infeasible = Vec::new();
    waypoints.push(pos);
    for &i in order {
        let target = &targets[i];
        let eta = t + pos.distance(ctx.position_of(target, t)) / v;
        let center = ctx.position_of(target, eta);
        let rho = if ctx.edge_access {
            let e_s = target.error_at(eta, ctx.alpha);
            match access_radius(
                e_s,
                ctx.e_th,
                &ctx.ranging,
                ctx.altitude,
                params.reference_points,
                params.kappa,
                ctx.ground_radius,
            ) {
                Some(r) => r,
                None => {
                    infeasible.push(target.id);
                    0.0
                }
            }
        } else {
            let e_s = target.error_at(eta, ctx.alpha);
            if predicted_error(e_s, &ctx.ranging, ctx.altitude, params.kappa) > ctx.e_th {
                infeasible.push(target.id);
            }
            0.0
        };
        let wp = edge_waypoint(pos, center, rho);
        t += pos.distance(wp) / v;
        pos = wp;
        waypoints.push(wp);
        radii.push(rho);
        arrivals.push(t);
    }
    waypoints.push(ctx.ends[uav]);
    let time = tour_time(&waypoints, v);
    let energy = ctx.energy_used[uav] + ctx.power.propulsion_power(v).unwrap_or(f64::INFINITY) * time;
    TourEval {
        waypoints,
        radii,
        arrivals,
        time,
        infeasible,
        over_budget: energy > ctx.energy_budget,
    }
}

/// Makespan of the decoded plan plus [`PENALTY`] per infeasible target and per
/// UAV over budget.
pub fn fitness(keys: &[f64], targets: &[Target], ctx: &PlanContext, params: &SwarmParams) -> f64 {
    tours_fitness(&decode(keys, ctx.uav_count()), targets, ctx, params)
}

pub fn tours_fitness(
    tours: &[Vec<usize>],
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
) -> f64 {
    let mut makespan: f64 = 0.0;
    let mut penalties = 0usize;
    for (m, order) in tours.iter().enumerate() {
        let e = evaluate_tour(m, order, targets, ctx, params);
        makespan = makespan.max(e.time);
        penalties += e.penalty_count();
    }
    makespan + PENALTY * penalties as f64
}

/// Materializes a plan from index tours.
pub fn build_plan(
    tours: &[Vec<usize>],
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    history: Vec<f64>,
) -> Plan {
    let mut plan = Plan {
        tours: Vec::new(),
        waypoints: Vec::new(),
        radii: Vec::new(),
        arrival_times: Vec::new(),
        tour_times: Vec::new(),
        makespan: 0.0,
        fitness: 0.0,
        infeasible: Vec::new(),
        over_budget: Vec::new(),
        history,
    };
    let mut penalties = 0usize;
    for (m, order) in tours.iter().enumerate() {
        let e = evaluate_tour(m, order, targets, ctx, params);
        plan.tours.push(order.iter().map(|&i| targets[i].id).collect());
        plan.makespan = plan.makespan.max(e.time);
        penalties += e.penalty_count();
        plan.infeasible.extend(&e.infeasible);
        if e.over_budget {
            plan.over_budget.push(m);
        }
        plan.waypoints.push(e.waypoints);
        plan.radii.push(e.radii);
        plan.arrival_times.push(e.arrivals);
        plan.tour_times.push(e.time);
    }
    plan.fitness = plan.makespan + PENALTY * penalties as f64;
    plan
}

/// Runs the chosen planner.
pub fn solve(
    kind: PlannerKind,
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    rng: &mut ChaCha8Rng,
) -> Plan {
    match kind {
        PlannerKind::Epso => swarm::epso_solve(targets, ctx, params, rng),
        PlannerKind::Pso => swarm::pso_solve(targets, ctx, params, rng),
        PlannerKind::Ga => ga::ga_solve(targets, ctx, params, rng),
    }
}

/// Largest target count [`exhaustive`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 8;

/// Optimal plan by enumerating every assignment and every visit order.
pub fn exhaustive(targets: &[Target], ctx: &PlanContext, params: &SwarmParams) -> Result<Plan> {
    let s = targets.len();
    let m = ctx.uav_count();
    if s > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search is limited to {EXHAUSTIVE_LIMIT} targets, got {s}"
        )));
    }
    // best (penalties, time, order) for every UAV and subset
    let subsets = 1usize << s;
    let mut best: Vec<Vec<(usize, f64, Vec<usize>)>> = Vec::with_capacity(m);
    for uav in 0..m {
        let mut row = Vec::with_capacity(subsets);
        for mask in 0..subsets {
            let members: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
            let mut found: Option<(usize, f64, Vec<usize>)> = None;
            for_each_permutation(&members, &mut |order| {
                let e = evaluate_tour(uav, order, targets, ctx, params);
                let key = (e.penalty_count(), e.time);
                if found.as_ref().is_none_or(|f| key.0 < f.0 || (key.0 == f.0 && key.1 < f.1)) {
                    found = Some((key.0, key.1, order.to_vec()));
                }
            });
            row.push(found.expect("at least the empty order"));
        }
        best.push(row);
    }

    let mut best_tours: Option<(f64, Vec<Vec<usize>>)> = None;
    let mut assign = vec![0usize; s];
    loop {
        let mut masks = vec![0usize; m];
        for (i, &a) in assign.iter().enumerate() {
            masks[a] |= 1 << i;
        }
        let mut makespan: f64 = 0.0;
        let mut penalties = 0;
        for (uav, &mask) in masks.iter().enumerate() {
            let (p, t, _) = &best[uav][mask];
            makespan = makespan.max(*t);
            penalties += p;
        }
        let f = makespan + PENALTY * penalties as f64;
        if best_tours.as_ref().is_none_or(|b| f < b.0) {
            let tours = masks.iter().enumerate().map(|(u, &k)| best[u][k].2.clone()).collect();
            best_tours = Some((f, tours));
        }
        // next assignment in base m
        let mut i = 0;
        while i < s {
            assign[i] += 1;
            if assign[i] < m {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
        if i == s {
            break;
        }
    }
    let (f, tours) = best_tours.expect("at least one assignment");
    Ok(build_plan(&tours, targets, ctx, params, vec![f]))
}

fn for_each_permutation(items: &[usize], visit: &mut dyn FnMut(&[usize])) {
    fn rec(buf: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == buf.len() {
            visit(buf);
            return;
        }
        for i in k..buf.len() {
            buf.swap(k, i);
            rec(buf, k + 1, visit);
            buf.swap(k, i);
        }
    }
    let mut buf = items.to_vec();
    rec(&mut buf, 0, visit);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranging() -> RangingParams {
        RangingParams::new(2.0, 4.0).unwrap()
    }

    pub(crate) fn still(id: usize, x: f64, y: f64) -> Target {
        Target {
            id,
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            ref_time: 0.0,
            error_bound: 0.0,
        }
    }

    pub(crate) fn overhead_context(starts: Vec<Vec2>) -> PlanContext {
        let mut s = Scenario::default();
        s.edge_access = false;
        s.alpha = 0.0;
        let ends = starts.clone();
        PlanContext::new(&s, starts, ends, 0.0)
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&[0.2, 1.7, 0.4], 2), vec![vec![0, 2], vec![1]]);
        assert_eq!(decode(&[0.9, 0.1, 0.5], 3), vec![vec![1, 2, 0], vec![], vec![]]);
        assert_eq!(decode(&[1.5, 0.5, 2.5], 3), vec![vec![1], vec![0], vec![2]]);
        // out-of-range keys clamp
        assert_eq!(decode(&[-0.5, 7.2], 2), vec![vec![0], vec![1]]);
    }

    #[test]
    fn planner_names() {
        for k in PlannerKind::ALL {
            assert_eq!(k.name().parse::<PlannerKind>().unwrap(), k);
        }
        assert!(matches!("foo".parse::<PlannerKind>(), Err(Error::UnknownPlanner(_))));
    }

    #[test]
    fn swarm_validation() {
        assert!(SwarmParams::default().validate().is_ok());
        let bad = [
            SwarmParams { population: 1, ..Default::default() },
            SwarmParams { eps_min: 0.95, ..Default::default() },
            SwarmParams { eps_min: 0.0, ..Default::default() },
            SwarmParams { reference_points: 2, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn tour_time_examples() {
        let pts = [Vec2::ZERO, Vec2::new(100.0, 0.0), Vec2::ZERO];
        assert_eq!(tour_time(&pts, 25.0), 8.0);
        assert_eq!(tour_time(&[Vec2::ZERO], 25.0), 0.0);
        let fwd = [Vec2::ZERO, Vec2::new(3.0, 4.0), Vec2::new(10.0, -2.0), Vec2::ZERO];
        let mut rev = fwd;
        rev.reverse();
        assert!((tour_time(&fwd, 25.0) - tour_time(&rev, 25.0)).abs() < 1e-12);
    }

    #[test]
    fn reference_point_layout() {
        let p = reference_points(Vec2::ZERO, 1.0, 4);
        let expected = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (a, (x, y)) in p.iter().zip(expected) {
            assert!(a.distance(Vec2::new(x, y)) < 1e-12);
        }
        let c = Vec2::new(3.0, 4.0);
        assert!(reference_points(c, 0.0, 5).iter().all(|p| *p == c));
        assert!(reference_points(c, 7.0, 11).iter().all(|p| (p.distance(c) - 7.0).abs() < 1e-12));
    }

    #[test]
    fn edge_waypoint_examples() {
        let c = Vec2::new(100.0, 0.0);
        assert_eq!(edge_waypoint(Vec2::ZERO, c, 20.0), Vec2::new(80.0, 0.0));
        assert_eq!(edge_waypoint(Vec2::ZERO, c, 0.0), c);
        let inside = Vec2::new(95.0, 3.0);
        assert_eq!(edge_waypoint(inside, c, 20.0), inside);
    }

    #[test]
    fn access_radius_noiseless_and_capped() {
        let g = 12_500f64.sqrt();
        let clean = RangingParams::new(2.0, 0.0).unwrap();
        assert_eq!(access_radius(0.0, 30.0, &clean, 100.0, 8, 2.0, g), Some(g));
        assert_eq!(access_radius(0.0, 1e12, &ranging(), 100.0, 8, 2.0, g), Some(g));
        assert_eq!(access_radius(5.0, 1e12, &ranging(), 100.0, 8, 2.0, g), Some(g - 5.0));
        // overhead already predicts 2 * 11.19 m
        assert_eq!(access_radius(0.0, 20.0, &ranging(), 100.0, 8, 2.0, g), None);
    }

    #[test]
    fn access_radius_matches_sweep_oracle() {
        let g = 12_500f64.sqrt();
        let (e_th, e_s) = (30.0, 5.0);
        let rho = access_radius(e_s, e_th, &ranging(), 100.0, 8, 2.0, g).unwrap();
        assert!(rho > 0.0);
        // worst reference point sits opposite the waypoint, rho + e_s away
        let satisfied = |r: f64| 2.0 * ranging().mean_range_error((r + e_s).hypot(100.0)) <= e_th;
        for i in 0..=1000 {
            assert!(satisfied(rho * i as f64 / 1000.0));
        }
        assert!(!satisfied(rho + 1.0));
        // closed form of the same condition
        let slant = e_th / (2.0 * ranging().mean_range_error(1.0));
        let exact = (slant * slant - 100.0 * 100.0).sqrt() - e_s;
        assert!(rho <= exact && exact - rho <= 0.1 + 1e-9, "{rho} vs {exact}");
    }

    #[test]
    fn hand_geometry_two_targets() {
        let targets = [still(0, 100.0, 0.0), still(1, 0.0, 100.0)];
        let ctx = overhead_context(vec![Vec2::ZERO]);
        let p = SwarmParams::default();
        let expected = (200.0 + 20_000f64.sqrt()) / 25.0;
        let a = tours_fitness(&[vec![0, 1]], &targets, &ctx, &p);
        let b = tours_fitness(&[vec![1, 0]], &targets, &ctx, &p);
        assert!((a.min(b) - expected).abs() < 1e-9);
        assert!((expected - 13.657).abs() < 1e-3);
        let best = exhaustive(&targets, &ctx, &p).unwrap();
        assert!((best.makespan - expected).abs() < 1e-9);
    }

    #[test]
    fn edge_access_never_lengthens_a_tour() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = Scenario::default();
        s.alpha = 0.01;
        let starts = vec![Vec2::ZERO, Vec2::new(280.0, 0.0), Vec2::new(560.0, 0.0), Vec2::new(840.0, 0.0)];
        let targets: Vec<Target> = (0..10)
            .map(|id| Target {
                id,
                position: Vec2::new(rng.random_range(0.0..1120.0), rng.random_range(0.0..640.0)),
                velocity: Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                ref_time: 50.0,
                error_bound: rng.random_range(2.0..20.0),
            })
            .collect();
        let edge = PlanContext::new(&s, starts.clone(), starts.clone(), 55.0);
        let mut flat = edge.clone();
        flat.edge_access = false;
        let p = SwarmParams::default();
        for _ in 0..1000 {
            let keys: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..4.0)).collect();
            let with = fitness(&keys, &targets, &edge, &p);
            let without = fitness(&keys, &targets, &flat, &p);
            assert!(with <= without + 1e-9, "{with} > {without}");
        }
    }

    #[test]
    fn decode_is_a_partition() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let s = rng.random_range(1..15);
            let m = rng.random_range(1..6);
            let keys: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..(m as f64 + 1.0))).collect();
            let mut seen: Vec<usize> = decode(&keys, m).into_iter().flatten().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..s).collect::<Vec<_>>());
        }
    }

    #[test]
    fn exhaustive_rejects_large_instances() {
        let targets: Vec<Target> = (0..9).map(|i| still(i, i as f64, 0.0)).collect();
        assert!(exhaustive(&targets, &overhead_context(vec![Vec2::ZERO]), &SwarmParams::default()).is_err());
    }

    #[test]
    fn energy_budget_penalty() {
        let targets = [still(0, 1000.0, 0.0)];
        let mut ctx = overhead_context(vec![Vec2::ZERO]);
        ctx.energy_budget = 1000.0;
        let f = tours_fitness(&[vec![0]], &targets, &ctx, &SwarmParams::default());
        assert!(f >= PENALTY);
    }
}
