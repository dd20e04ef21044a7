//! Single-anchor maximum-likelihood tracking of a ground person from one
//! continuous reception window.
//!
//! Within a window the person is assumed to walk at constant velocity, so the
//! track is four numbers: the ground position `w0` at the first slot and the
//! velocity `v`. Because `ln r` is normal around `ln d`, maximizing the window
//! likelihood is the same as minimizing the per-slot weighted squared log
//! residual `sum_t n_t (mean_i ln r_ti - ln d_t)^2`, which is what the optimizer
//! works on.
//!
//! A window flown along a straight line cannot tell the person from their
//! reflection across that line; such windows carry a mirror hypothesis.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::bound::{self, AnnulusSource, ErrorModel, HalfPlane, Resolution};
use crate::error::{Error, Result};
use crate::model::{Vec2, Vec3};
use crate::ranging::RangingParams;

/// One continuous reception episode of person `person` by UAV `uav`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeWindow {
    pub uav: usize,
    pub person: usize,
    pub start_slot: u64,
    pub slot_duration: f64,
    /// UAV position for every slot of the window.
    pub uav_positions: Vec<Vec3>,
    /// Range samples (m) for every slot of the window.
    pub samples: Vec<Vec<f64>>,
}

impl RangeWindow {
    pub fn new(
        uav: usize,
        person: usize,
        start_slot: u64,
        slot_duration: f64,
        uav_positions: Vec<Vec3>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let w = Self {
            uav,
            person,
            start_slot,
            slot_duration,
            uav_positions,
            samples,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.uav_positions.is_empty() {
            return Err(Error::InvalidWindow("window has no slots".into()));
        }
        if self.uav_positions.len() != self.samples.len() {
            return Err(Error::InvalidWindow(format!(
                "{} UAV positions but {} sample slots",
                self.uav_positions.len(),
                self.samples.len()
            )));
        }
        if !(self.slot_duration > 0.0) {
            return Err(Error::InvalidWindow("slot duration must be positive".into()));
        }
        for (i, slot) in self.samples.iter().enumerate() {
            if slot.is_empty() {
                return Err(Error::InvalidWindow(format!("slot {i} has no samples")));
            }
            if slot.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(Error::InvalidWindow(format!(
                    "slot {i} has a non-positive sample"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.uav_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uav_positions.is_empty()
    }

    pub fn end_slot(&self) -> u64 {
        self.start_slot + self.len() as u64 - 1
    }

    /// Seconds from the first to the last slot.
    pub fn span(&self) -> f64 {
        (self.len() - 1) as f64 * self.slot_duration
    }

    pub fn push_slot(&mut self, uav_position: Vec3, samples: Vec<f64>) {
        self.uav_positions.push(uav_position);
        self.samples.push(samples);
    }

    pub fn sample_count(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

/// Position at the reference slot and velocity of one track hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub position: Vec2,
    pub velocity: Vec2,
    pub log_likelihood: f64,
}

/// A straight line through `point` with unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: Vec2,
    pub direction: Vec2,
}

impl Line {
    pub fn reflect_point(&self, p: Vec2) -> Vec2 {
        let rel = p - self.point;
        let along = self.direction * rel.dot(self.direction);
        self.point + along * 2.0 - rel
    }

    pub fn reflect_vector(&self, v: Vec2) -> Vec2 {
        self.direction * (2.0 * v.dot(self.direction)) - v
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        (p - self.point).cross(self.direction).abs()
    }

    /// The closed side of the line containing `p`.
    pub fn side_of(&self, p: Vec2) -> HalfPlane {
        let n = self.direction.perp();
        let sign = if (p - self.point).dot(n) >= 0.0 { 1.0 } else { -1.0 };
        HalfPlane {
            point: self.point,
            normal: n * sign,
        }
    }
}

/// Result of fitting a track to a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEstimate {
    pub person: usize,
    pub uav: usize,
    /// Last slot of the window; `position` refers to this slot.
    pub ref_slot: u64,
    pub slot_duration: f64,
    pub position: Vec2,
    /// Velocity (m/s), clamped to the person speed bound.
    pub velocity: Vec2,
    /// Error bound at `ref_slot` (m).
    pub error_bound: f64,
    pub empty_region: bool,
    /// Reflection of the track across `line` when the window is collinear.
    pub mirror: Option<Hypothesis>,
    pub line: Option<Line>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub window_slots: usize,
}

impl TrackEstimate {
    pub fn hypothesis(&self) -> Hypothesis {
        Hypothesis {
            position: self.position,
            velocity: self.velocity,
            log_likelihood: self.log_likelihood,
        }
    }

    /// The same estimate with primary and mirror hypotheses exchanged.
    pub fn swapped(&self) -> Option<TrackEstimate> {
        let m = self.mirror?;
        let mut out = self.clone();
        out.position = m.position;
        out.velocity = m.velocity;
        out.log_likelihood = m.log_likelihood;
        out.mirror = Some(self.hypothesis());
        Some(out)
    }

    /// Extrapolated position at `slot >= ref_slot`.
    pub fn extrapolate(&self, slot: u64) -> Result<Vec2> {
        if slot < self.ref_slot {
            return Err(Error::SlotBeforeReference {
                requested: slot,
                reference: self.ref_slot,
            });
        }
        Ok(self.position_after((slot - self.ref_slot) as f64 * self.slot_duration))
    }

    /// Extrapolated position `seconds` after the reference slot.
    pub fn position_after(&self, seconds: f64) -> Vec2 {
        self.position + self.velocity * seconds
    }

    pub fn error_model(&self, alpha: f64) -> ErrorModel {
        ErrorModel {
            e0: self.error_bound,
            alpha,
            ref_slot: self.ref_slot,
            slot_duration: self.slot_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Person speed bound (m/s).
    pub v_max: f64,
    /// Radius of the coarse start grid around the UAV's mean ground position.
    pub search_radius: f64,
    pub collinear_tol: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub annuli_count: usize,
    pub annulus_source: AnnulusSource,
    pub resolution: Resolution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            search_radius: 111.803_398_874_989_5,
            collinear_tol: 0.5,
            max_iterations: 500,
            tolerance: 1e-10,
            annuli_count: 5,
            annulus_source: AnnulusSource::Track,
            resolution: Resolution::default(),
        }
    }
}

/// Log-likelihood of the window under track `(w0, v)`, summed over every
/// sample. Returns negative infinity if the track passes through a UAV.
///
/// With zero shadowing the density is degenerate; the negative squared log
/// residual is returned instead, which orders tracks the same way.
pub fn window_log_likelihood(
    window: &RangeWindow,
    w0: Vec2,
    v: Vec2,
    params: &RangingParams,
) -> f64 {
    let s = params.log_std();
    let norm = ((2.0 * std::f64::consts::PI).sqrt() * s).ln();
    let mut total = 0.0;
    for (i, (q, slot)) in window.uav_positions.iter().zip(&window.samples).enumerate() {
        let w = w0 + v * (i as f64 * window.slot_duration);
        let d = slant(*q, w);
        if !(d > 0.0) {
            return f64::NEG_INFINITY;
        }
        let ln_d = d.ln();
        for &r in slot {
            let z = r.ln() - ln_d;
            if s > 0.0 {
                total += -(r.ln() + norm) - z * z / (2.0 * s * s);
            } else {
                total -= z * z;
            }
        }
    }
    total
}

/// Closed-form maximum-likelihood distance for samples taken at one fixed
/// geometry: their geometric mean.
pub fn estimate_static_distance(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if samples.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    Ok((samples.iter().map(|r| r.ln()).sum::<f64>() / samples.len() as f64).exp())
}

/// Best-fit line through `positions` (ground projection) and whether every
/// position lies within `tol` of it.
pub fn detect_collinear(positions: &[Vec3], tol: f64) -> (bool, Line) {
    let pts: Vec<Vec2> = positions.iter().map(|p| p.ground()).collect();
    let n = pts.len().max(1) as f64;
    let centroid = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let d = *p - centroid;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // principal axis of the 2x2 scatter matrix
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let line = Line {
        point: centroid,
        direction: Vec2::new(angle.cos(), angle.sin()),
    };
    let worst = pts.iter().map(|p| line.distance(*p)).fold(0.0, f64::max);
    (worst < tol, line)
}

/// The reflection of `estimate`'s track across `line`.
pub fn mirror_hypothesis(estimate: &Hypothesis, line: &Line) -> Hypothesis {
    Hypothesis {
        position: line.reflect_point(estimate.position),
        velocity: line.reflect_vector(estimate.velocity),
        log_likelihood: estimate.log_likelihood,
    }
}

fn slant(q: Vec3, w: Vec2) -> f64 {
    let dx = q.x - w.x;
    let dy = q.y - w.y;
    (dx * dx + dy * dy + q.z * q.z).sqrt()
}

/// Per-slot sufficient statistics of a window.
struct Problem<'a> {
    window: &'a RangeWindow,
    counts: Vec<f64>,
    log_means: Vec<f64>,
    /// Seconds since the first slot.
    times: Vec<f64>,
    span: f64,
    v_max: f64,
    ridge: f64,
}

/// Weight of the squared speed excess over `v_max` in the fit objective.
const SPEED_PENALTY: f64 = 1e3;
/// Ridge on the displacement over the window (per m^2). Along a straight pass
/// it picks the slowest of the tracks that explain the ranges equally well; a
/// final ridge-free polish removes its bias on well-determined tracks.
const VELOCITY_RIDGE: f64 = 1e-6;

impl<'a> Problem<'a> {
    fn new(window: &'a RangeWindow, v_max: f64) -> Self {
        let counts = window.samples.iter().map(|s| s.len() as f64).collect();
        let log_means = window
            .samples
            .iter()
            .map(|s| s.iter().map(|r| r.ln()).sum::<f64>() / s.len() as f64)
            .collect();
        let times = (0..window.len())
            .map(|i| i as f64 * window.slot_duration)
            .collect();
        Self {
            window,
            counts,
            log_means,
            times,
            span: window.span().max(window.slot_duration),
            v_max,
            ridge: VELOCITY_RIDGE,
        }
    }

    /// Parameters are `(w0.x, w0.y, D.x, D.y)` with `D = v * span`, which keeps
    /// all four coordinates in meters.
    fn track(&self, p: &[f64; 4]) -> (Vec2, Vec2) {
        (Vec2::new(p[0], p[1]), Vec2::new(p[2], p[3]) * (1.0 / self.span))
    }

    fn cost(&self, p: &[f64; 4]) -> f64 {
        let (w0, v) = self.track(p);
        let mut acc = 0.0;
        for i in 0..self.counts.len() {
            let d = slant(self.window.uav_positions[i], w0 + v * self.times[i]);
            if !(d > 0.0) {
                return f64::INFINITY;
            }
            let r = self.log_means[i] - d.ln();
            acc += self.counts[i] * r * r;
        }
        let excess = (v.norm() - self.v_max).max(0.0);
        acc + SPEED_PENALTY * excess * excess + self.ridge * (p[2] * p[2] + p[3] * p[3])
    }

    /// Gauss-Newton normal equations `(J^T J, J^T r)` at `p`.
    fn normal_equations(&self, p: &[f64; 4]) -> (Matrix4<f64>, Vector4<f64>) {
        let (w0, v) = self.track(p);
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for i in 0..self.counts.len() {
            let q = self.window.uav_positions[i];
            let tau = self.times[i] / self.span;
            let w = w0 + v * self.times[i];
            let d = slant(q, w);
            let d2 = d * d;
            let sw = self.counts[i].sqrt();
            let r = sw * (self.log_means[i] - d.ln());
            // d(ln d)/d(w) = (w - q) / d^2, residual is -ln d
            let gx = -sw * (w.x - q.x) / d2;
            let gy = -sw * (w.y - q.y) / d2;
            let j = Vector4::new(gx, gy, gx * tau, gy * tau);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        for k in 2..4 {
            jtj[(k, k)] += self.ridge;
            jtr[k] += self.ridge * p[k];
        }
        let disp = Vector4::new(0.0, 0.0, p[2], p[3]);
        let norm = disp.norm();
        let excess = norm / self.span - self.v_max;
        if excess > 0.0 {
            let w = SPEED_PENALTY.sqrt();
            let j = disp * (w / (norm * self.span));
            jtj += j * j.transpose();
            jtr += j * (w * excess);
        }
        (jtj, jtr)
    }
}

/// Fits a constant-velocity track to `window` by maximum likelihood, with
/// speeds above `options.v_max` penalized.
///
/// A straight pass only pins down `d(t)^2` as a quadratic in `t`: a moving
/// person then has a one-parameter family of exactly fitting tracks besides
/// the mirror, and the speed limit is what keeps the pick plausible.
///
/// Starts come from pairwise circle intersections of static range estimates
/// on the window's thirds and from a coarse grid over the search disc. The
/// best few are refined by Nelder-Mead until the objective changes by less
/// than `options.tolerance` (or `max_iterations`), then polished with damped
/// Gauss-Newton steps.
pub fn fit_track(
    window: &RangeWindow,
    params: &RangingParams,
    options: &FitOptions,
) -> Result<TrackEstimate> {
    window.validate()?;
    if window.len() < 3 {
        return Err(Error::InvalidWindow(format!(
            "need at least 3 slots, got {}",
            window.len()
        )));
    }
    let problem = Problem::new(window, options.v_max);

    let mut starts = triangulation_starts(window);
    starts.extend(grid_starts(window, options.search_radius));
    let mut scored: Vec<([f64; 4], f64)> = starts
        .into_iter()
        .map(|p| (p, problem.cost(&p)))
        .filter(|(_, c)| c.is_finite())
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut chosen: Vec<[f64; 4]> = Vec::new();
    for (p, _) in &scored {
        let far = chosen
            .iter()
            .all(|c| Vec2::new(c[0] - p[0], c[1] - p[1]).norm() > 10.0);
        if far {
            chosen.push(*p);
        }
        if chosen.len() == 4 {
            break;
        }
    }

    let mut best: Option<([f64; 4], f64, bool)> = None;
    for start in chosen {
        let (p, _, nm_ok) = nelder_mead(
            |x| problem.cost(x),
            start,
            [15.0, 15.0, 5.0, 5.0],
            options.max_iterations,
            options.tolerance,
        );
        let (p, c, lm_ok) = polish(&problem, p);
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((p, c, nm_ok || lm_ok));
        }
    }
    let (p, _, converged) = best.ok_or_else(|| {
        Error::InvalidWindow("no finite starting point for the track fit".into())
    })?;
    let unbiased = Problem {
        ridge: 0.0,
        ..problem
    };
    let (p, _, _) = polish(&unbiased, p);
    let problem = unbiased;

    let (w0, v_raw) = problem.track(&p);
    let position = w0 + v_raw * window.span();
    let velocity = clamp_speed(v_raw, options.v_max);
    let log_likelihood = window_log_likelihood(window, w0, v_raw, params);

    let (collinear, line) = detect_collinear(&window.uav_positions, options.collinear_tol);
    let primary = Hypothesis {
        position,
        velocity,
        log_likelihood,
    };
    let mirror = collinear.then(|| {
        let mut m = mirror_hypothesis(&primary, &line);
        m.log_likelihood = window_log_likelihood(
            window,
            line.reflect_point(w0),
            line.reflect_vector(v_raw),
            params,
        );
        m
    });

    let annuli = bound::window_annuli(
        window,
        (w0, v_raw),
        params,
        options.v_max,
        options.annuli_count,
        options.annulus_source,
    );
    let side = collinear.then(|| line.side_of(position));
    let bound = bound::farthest_point_error_within(&annuli, side, position, options.resolution);

    Ok(TrackEstimate {
        person: window.person,
        uav: window.uav,
        ref_slot: window.end_slot(),
        slot_duration: window.slot_duration,
        position,
        velocity,
        error_bound: bound.error,
        empty_region: bound.empty_region,
        mirror,
        line: collinear.then_some(line),
        log_likelihood,
        converged,
        window_slots: window.len(),
    })
}

fn clamp_speed(v: Vec2, v_max: f64) -> Vec2 {
    let s = v.norm();
    if s > v_max && s > 0.0 {
        v * (v_max / s)
    } else {
        v
    }
}

fn triangulation_starts(window: &RangeWindow) -> Vec<[f64; 4]> {
    let n = window.len();
    let thirds = [(0, n / 3), (n / 3, 2 * n / 3), (2 * n / 3, n)];
    let discs: Vec<(Vec2, f64)> = thirds
        .iter()
        .filter(|(a, b)| b > a)
        .map(|&(a, b)| {
            let all: Vec<f64> = window.samples[a..b].iter().flatten().copied().collect();
            let d = estimate_static_distance(&all).unwrap_or(1.0);
            let k = (b - a) as f64;
            let mean = window.uav_positions[a..b]
                .iter()
                .fold(Vec3::ZERO, |acc, q| acc + *q)
                * (1.0 / k);
            (mean.ground(), (d * d - mean.z * mean.z).max(0.0).sqrt())
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..discs.len() {
        for j in i + 1..discs.len() {
            let (c1, r1) = discs[i];
            let (c2, r2) = discs[j];
            let delta = c2 - c1;
            let d = delta.norm();
            let Some(u) = delta.normalized() else {
                continue;
            };
            // intersect when possible, otherwise take the closest approach
            let a = ((r1 * r1 - r2 * r2 + d * d) / (2.0 * d)).clamp(-r1, r1);
            let h = (r1 * r1 - a * a).max(0.0).sqrt();
            for sign in [1.0, -1.0] {
                let p = c1 + u * a + u.perp() * (sign * h);
                out.push([p.x, p.y, 0.0, 0.0]);
            }
        }
    }
    out
}

fn grid_starts(window: &RangeWindow, radius: f64) -> Vec<[f64; 4]> {
    let n = window.len() as f64;
    let center = window
        .uav_positions
        .iter()
        .fold(Vec2::ZERO, |acc, q| acc + q.ground())
        * (1.0 / n);
    let k = 9;
    let mut out = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let off = Vec2::new(
                radius * (2.0 * i as f64 / (k - 1) as f64 - 1.0),
                radius * (2.0 * j as f64 / (k - 1) as f64 - 1.0),
            );
            if off.norm() <= radius {
                let p = center + off;
                out.push([p.x, p.y, 0.0, 0.0]);
            }
        }
    }
    out
}

/// Nelder-Mead minimization from `start` with per-axis initial `step`.
/// Returns the best point, its cost and whether the tolerance was reached.
fn nelder_mead<F: Fn(&[f64; 4]) -> f64>(
    f: F,
    start: [f64; 4],
    step: [f64; 4],
    max_iterations: usize,
    tolerance: f64,
) -> ([f64; 4], f64, bool) {
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    simplex.push((start, f(&start)));
    for k in 0..4 {
        let mut p = start;
        p[k] += step[k];
        simplex.push((p, f(&p)));
    }
    let combine = |a: &[f64; 4], b: &[f64; 4], t: f64| -> [f64; 4] {
        std::array::from_fn(|k| a[k] + t * (b[k] - a[k]))
    };

    let mut converged = false;
    for _ in 0..max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[4].1);
        if (hi - lo).abs() <= tolerance * (1.0 + lo.abs()) {
            converged = true;
            break;
        }
        let centroid: [f64; 4] =
            std::array::from_fn(|k| simplex[..4].iter().map(|s| s.0[k]).sum::<f64>() / 4.0);
        let worst = simplex[4].0;

        let reflected = combine(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            simplex[4] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[4].1 {
                combine(&centroid, &worst, -0.5)
            } else {
                combine(&centroid, &worst, 0.5)
            };
            let fc = f(&contracted);
            if fc < fr.min(simplex[4].1) {
                simplex[4] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = combine(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, converged)
}

/// Levenberg-Marquardt refinement of a Nelder-Mead result.
fn polish(problem: &Problem<'_>, start: [f64; 4]) -> ([f64; 4], f64, bool) {
    let mut p = start;
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let (jtj, jtr) = problem.normal_equations(&p);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            // residual is -ln d, so the update moves against J^T r
            let candidate: [f64; 4] = std::array::from_fn(|k| p[k] - step[k]);
            let c = problem.cost(&candidate);
            if c < cost {
                let tiny = step.norm() < 1e-10 * (1.0 + p.iter().map(|x| x.abs()).sum::<f64>());
                p = candidate;
                let gain = cost - c;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if tiny || gain <= 1e-15 * (1.0 + cost) {
                    return (p, cost, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            return (p, cost, true);
        }
    }
    (p, cost, false)
}
