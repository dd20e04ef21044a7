//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

use std::f64::consts::{LN_10, TAU};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use uavloc_core::bound::{farthest_point_error, region_contains, window_annuli, Annulus, Resolution};
use uavloc_core::mle::{estimate_static_distance, fit_track, window_log_likelihood, FitOptions};
use uavloc_core::model::distance;
use uavloc_core::planner::{solve, PlanContext, PlannerKind, Target};
use uavloc_core::sim::phase1::fit_options;
use uavloc_core::sim::{collect_metrics, run_mission, MissionReport};
use uavloc_core::validate::{annulus_fixtures, desk_instance};
use uavloc_core::{seed, PowerParams, RangeWindow, RangingParams, Scenario, Vec2, Vec3};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn rng(label: &str, k: u64) -> ChaCha8Rng {
    seed::rng(20_240_601, &[seed::tag(label), k])
}

/// Log-std of the ranging noise from first principles: shadowing in dB
/// divided by `10 / ln 10` and by the path-loss exponent.
fn log_std(eta: f64, sigma_db: f64) -> f64 {
    sigma_db * LN_10 / (10.0 * eta)
}

fn ranging_moments() -> Verdict {
    let p = RangingParams::new(2.0, 4.0).unwrap();
    let s = log_std(2.0, 4.0);
    let mut r = rng("moments", 0);
    let n = 1_000_000;
    let (mut sum, mut lsum, mut lsq) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = p.sample_range(100.0, &mut r).unwrap();
        sum += x;
        lsum += x.ln();
        lsq += x.ln() * x.ln();
    }
    let mean = sum / n as f64;
    let lmean = lsum / n as f64;
    let lvar = lsq / n as f64 - lmean * lmean;
    let closed = 100.0 * (s * s / 2.0).exp();
    let ok = (mean - 111.19).abs() <= 0.01 * 111.19
        && (closed - 111.19).abs() <= 0.01 * 111.19
        && (lvar - 0.4605f64.powi(2)).abs() <= 0.05 * 0.4605f64.powi(2);
    verdict(
        ok,
        format!("mean {mean:.3} m (closed form {closed:.3}), ln-variance {lvar:.5} vs {:.5}", 0.4605f64.powi(2)),
    )
}

fn static_consistency() -> Verdict {
    let p = RangingParams::new(2.0, 4.0).unwrap();
    let good = (0..200)
        .filter(|&k| {
            let mut r = rng("static", k);
            let samples: Vec<f64> = (0..1000).map(|_| p.sample_range(100.0, &mut r).unwrap()).collect();
            (estimate_static_distance(&samples).unwrap() - 100.0).abs() < 5.0
        })
        .count();
    verdict(good >= 190, format!("{good}/200 seeds within 5 m"))
}

/// UAV ground track flown at `speed` for `slots` slots of `dt`: a straight leg
/// of `first` slots along `heading`, then a turn by `turn` radians.
fn l_path(start: Vec2, heading: f64, turn: f64, first: usize, slots: usize, speed: f64, dt: f64, h: f64) -> Vec<Vec3> {
    let mut p = start;
    let mut out = Vec::with_capacity(slots);
    for t in 0..slots {
        out.push(p.with_z(h));
        let a = if t < first { heading } else { heading + turn };
        p = p + Vec2::from_polar(speed * dt, a);
    }
    out
}

fn window_for(positions: Vec<Vec3>, w0: Vec2, v: Vec2, dt: f64, samples: usize, p: &RangingParams, r: &mut ChaCha8Rng) -> RangeWindow {
    let ranges = positions
        .iter()
        .enumerate()
        .map(|(t, q)| {
            let d = distance(*q, (w0 + v * (t as f64 * dt)).with_z(0.0));
            (0..samples).map(|_| p.sample_range(d, r).unwrap()).collect()
        })
        .collect();
    RangeWindow::new(0, 0, 0, dt, positions, ranges).unwrap()
}

fn track_recovery() -> Verdict {
    let s = Scenario::default();
    let exact = RangingParams::new(2.0, 0.0).unwrap();
    let options = fit_options(&s);
    let dt = s.slot_duration;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for k in 0..50 {
        let mut r = rng("recovery", k);
        let heading = r.random_range(0.0..TAU);
        let turn = if r.random_bool(0.5) { 1.0 } else { -1.0 } * r.random_range(0.6..2.0);
        let path = l_path(Vec2::ZERO, heading, turn, 60, 120, s.uav_vmax, dt, s.altitude);
        let corner = path[60].ground();
        let w0 = corner + Vec2::from_polar(r.random_range(15.0..80.0), r.random_range(0.0..TAU));
        let v = Vec2::from_polar(r.random_range(0.0..1.4), r.random_range(0.0..TAU));
        let w = window_for(path, w0, v, dt, 1, &exact, &mut r);
        let est = fit_track(&w, &exact, &options).unwrap();
        let truth = w0 + v * w.span();
        let err = est.position.distance(truth).max(est.velocity.distance(v));
        worst = worst.max(err);
        if !(err < 1e-3) || est.mirror.is_some() {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{} / 50 recovered, worst error {worst:.2e}", 50 - failures))
}

fn mirror_symmetry() -> Verdict {
    let s = Scenario::default();
    let p = s.ranging();
    let options = fit_options(&s);
    let dt = s.slot_duration;
    let mut worst_pos: f64 = 0.0;
    let mut worst_ll: f64 = 0.0;
    let mut missing = 0;
    for k in 0..30 {
        let mut r = rng("mirror", k);
        let heading = r.random_range(0.0..TAU);
        let start = Vec2::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0));
        let path = l_path(start, heading, 0.0, 200, 200, s.uav_vmax, dt, s.altitude);
        let mid = path[100].ground();
        let side = Vec2::from_polar(1.0, heading).perp() * r.random_range(10.0..90.0);
        let v = Vec2::from_polar(r.random_range(0.0..1.4), r.random_range(0.0..TAU));
        let w = window_for(path, mid + side, v, dt, s.samples_per_slot, &p, &mut r);
        let est = fit_track(&w, &p, &options).unwrap();
        let (Some(m), Some(line)) = (est.mirror, est.line) else {
            missing += 1;
            continue;
        };
        worst_pos = worst_pos.max(line.reflect_point(m.position).distance(est.position));
        worst_pos = worst_pos.max(line.reflect_vector(m.velocity).distance(est.velocity));
        // both likelihoods recomputed from the window, not taken from the fit
        let span = w.span();
        let a = window_log_likelihood(&w, est.position - est.velocity * span, est.velocity, &p);
        let b = window_log_likelihood(&w, m.position - m.velocity * span, m.velocity, &p);
        worst_ll = worst_ll.max((a - b).abs() / a.abs().max(1.0));
    }
    verdict(
        missing == 0 && worst_pos <= 1e-6 && worst_ll <= 1e-9,
        format!("30 collinear windows, {missing} without a mirror, reflection gap {worst_pos:.1e} m, likelihood gap {worst_ll:.1e}"),
    )
}

fn bound_validity() -> Verdict {
    let s = Scenario::default();
    let p = s.ranging();
    let options: FitOptions = fit_options(&s);
    let dt = s.slot_duration;
    let (mut covered, mut violations) = (0, 0);
    let trials = 200;
    for k in 0..trials {
        let mut r = rng("bound", k);
        let heading = r.random_range(0.0..TAU);
        // half straight passes, half with a turn, as in a scan
        let turn = if k % 2 == 0 { 0.0 } else { r.random_range(0.8..1.6) };
        let path = l_path(Vec2::ZERO, heading, turn, 100, 200, s.uav_vmax, dt, s.altitude);
        let w0 = path[100].ground() + Vec2::from_polar(r.random_range(5.0..95.0), r.random_range(0.0..TAU));
        let v = Vec2::from_polar(r.random_range(0.0..s.person_vmax), r.random_range(0.0..TAU));
        let w = window_for(path, w0, v, dt, s.samples_per_slot, &p, &mut r);
        let est = fit_track(&w, &p, &options).unwrap();
        let truth = w0 + v * w.span();
        let track = (est.position - est.velocity * w.span(), est.velocity);
        let annuli = window_annuli(&w, track, &p, s.person_vmax, options.annuli_count, options.annulus_source);
        if region_contains(&annuli, truth) {
            covered += 1;
            let bound = farthest_point_error(&annuli, est.position, Resolution::default()).error;
            if bound < est.position.distance(truth) {
                violations += 1;
            }
        }
    }
    let coverage = covered as f64 / trials as f64;
    verdict(
        violations == 0 && coverage >= 0.6,
        format!("coverage {:.1}% ({covered}/{trials}), {violations} bounds below the true error", coverage * 100.0),
    )
}

/// Farthest in-region point by brute force: every ray from the estimate is
/// walked inwards from beyond the region until a point inside is hit.
fn brute_farthest(annuli: &[Annulus], estimate: Vec2) -> f64 {
    let inside = |q: Vec2| {
        annuli.iter().all(|a| {
            let r = ((q.x - a.center.x).powi(2) + (q.y - a.center.y).powi(2)).sqrt();
            r >= a.inner && r <= a.outer
        })
    };
    let reach: f64 = annuli.iter().map(|a| a.center.distance(estimate) + a.outer).fold(0.0, f64::max);
    let mut best: f64 = 0.0;
    let rays = 8192;
    let step = 0.01;
    for k in 0..rays {
        let a = TAU * k as f64 / rays as f64;
        let (dx, dy) = (a.cos(), a.sin());
        let mut rr = reach;
        while rr > best {
            if inside(Vec2::new(estimate.x + dx * rr, estimate.y + dy * rr)) {
                best = rr;
                break;
            }
            rr -= step;
        }
    }
    best
}

fn annulus_oracle() -> Verdict {
    let fixtures = annulus_fixtures(&Scenario::default(), 20, 77);
    let mut worst: f64 = 0.0;
    for f in &fixtures {
        let fast = farthest_point_error(&f.annuli, f.estimate, Resolution::default()).error;
        let slow = brute_farthest(&f.annuli, f.estimate);
        worst = worst.max((fast - slow).abs() / slow.max(1.0));
    }
    verdict(worst <= 0.02, format!("20 fixtures, worst relative gap {:.3}%", worst * 100.0))
}

/// Exact min-makespan of static targets by enumerating every assignment and
/// every visiting order.
fn brute_makespan(points: &[Vec2], homes: &[Vec2], speed: f64) -> f64 {
    fn best_order(home: Vec2, pts: &mut Vec<Vec2>, k: usize, best: &mut f64) {
        if k == pts.len() {
            let mut at = home;
            let mut len = 0.0;
            for p in pts.iter() {
                len += at.distance(*p);
                at = *p;
            }
            len += at.distance(home);
            *best = best.min(len);
            return;
        }
        for i in k..pts.len() {
            pts.swap(k, i);
            best_order(home, pts, k + 1, best);
            pts.swap(k, i);
        }
    }
    let m = homes.len();
    let s = points.len();
    let mut best = f64::INFINITY;
    for code in 0..m.pow(s as u32) {
        let mut c = code;
        let mut groups = vec![Vec::new(); m];
        for p in points {
            groups[c % m].push(*p);
            c /= m;
        }
        let mut span: f64 = 0.0;
        for (u, g) in groups.iter_mut().enumerate() {
            let mut len = f64::INFINITY;
            best_order(homes[u], g, 0, &mut len);
            span = span.max(len / speed);
        }
        best = best.min(span);
    }
    best
}

fn planner_optimality() -> Verdict {
    let mut s = Scenario::default();
    s.edge_access = false;
    let homes = vec![Vec2::new(280.0, 0.0), Vec2::new(840.0, 0.0)];
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let mut r = rng("mtsp", k);
        let targets: Vec<Target> = (0..6)
            .map(|id| Target {
                id,
                position: Vec2::new(r.random_range(0.0..1120.0), r.random_range(0.0..640.0)),
                velocity: Vec2::ZERO,
                ref_time: 0.0,
                error_bound: 10.0,
            })
            .collect();
        let ctx = PlanContext::new(&s, homes.clone(), homes.clone(), 0.0);
        let plan = solve(PlannerKind::Epso, &targets, &ctx, &s.swarm, &mut rng("epso", k));
        let points: Vec<Vec2> = targets.iter().map(|t| t.position).collect();
        let opt = brute_makespan(&points, &homes, s.uav_vmax);
        let gap = plan.fitness / opt - 1.0;
        worst = worst.max(gap);
        if gap <= 0.02 {
            hits += 1;
        }
    }
    verdict(hits >= 9, format!("{hits}/10 within 2% of the optimum, worst gap {:.2}%", worst * 100.0))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn planner_comparison() -> Verdict {
    let s = Scenario::default();
    let mut spans = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..20 {
        let (targets, ctx) = desk_instance(&s, 10, 4, 1000 + k);
        for (i, kind) in PlannerKind::ALL.into_iter().enumerate() {
            let plan = solve(kind, &targets, &ctx, &s.swarm, &mut rng(kind.name(), k));
            spans[i].push(plan.fitness);
        }
    }
    let [e, p, g] = spans.map(median);
    verdict(
        e <= p && e <= g,
        format!("median makespan epso {e:.2} s, pso {p:.2} s, ga {g:.2} s over 20 instances"),
    )
}

fn edge_access_benefit() -> Verdict {
    let base = Scenario::default();
    let overhead = Scenario {
        edge_access: false,
        ..base.clone()
    };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10 {
        let a = run_mission(&base, PlannerKind::Epso, seed).unwrap().makespan;
        let b = run_mission(&overhead, PlannerKind::Epso, seed).unwrap().makespan;
        if a < b {
            wins += 1;
        } else {
            lines.push(format!("seed {seed}: {a:.2} vs {b:.2}"));
        }
    }
    let nf = base.noise_free();
    let mut worst: f64 = 0.0;
    let mut missed = 0;
    for seed in 0..10 {
        let r = run_mission(&nf, PlannerKind::Epso, seed).unwrap();
        for p in &r.persons {
            let e = p.true_error.unwrap_or(f64::INFINITY);
            worst = worst.max(e);
            if !(e <= nf.e_th) {
                missed += 1;
            }
        }
    }
    verdict(
        wins == 10 && missed == 0,
        format!(
            "edge access shorter on {wins}/10 seeds{}; noise-free worst error {worst:.1} m vs e_th {} m, {missed} misses",
            if lines.is_empty() { String::new() } else { format!(" (lost: {})", lines.join(", ")) },
            nf.e_th
        ),
    )
}

/// Rotary-wing propulsion power evaluated with the induced term in its
/// rationalized form, which does not cancel at high speed.
fn power_oracle(p: &PowerParams, v: f64) -> f64 {
    let x = v * v / (2.0 * p.induced_velocity * p.induced_velocity);
    let induced = p.p1 / ((1.0 + x * x).sqrt() + x).sqrt();
    p.p0 * (1.0 + 3.0 * v * v / (p.tip_speed * p.tip_speed)) + induced + 0.5 * p.parasite * v.powi(3)
}

fn energy_model() -> Verdict {
    let p = PowerParams::default();
    let hover = p.propulsion_power(0.0).unwrap();
    let cruise = p.propulsion_power(25.0).unwrap();
    let oracle = power_oracle(&p, 25.0);
    verdict(
        hover == p.p0 + p.p1 && (cruise - oracle).abs() <= 0.01 * oracle,
        format!("P(0) = {hover:.4} W, P(25) = {cruise:.3} W vs oracle {oracle:.3} W"),
    )
}

fn trajectories_ok(s: &Scenario, r: &MissionReport) -> Result<(), String> {
    let step = s.uav_vmax * s.slot_duration;
    for (u, track) in r.uav_tracks.iter().enumerate() {
        let home = r.scan_paths[u].start;
        if track.first().map(|q| q.ground()) != Some(home) || track.last().map(|q| q.ground()) != Some(home) {
            return Err(format!("uav {u} does not start and end at home"));
        }
        let corners = r.scan_paths[u].waypoints.len()
            + 2
            + r.plans.iter().map(|p| p.waypoints.iter().map(Vec::len).sum::<usize>()).sum::<usize>();
        let mut partial = 0;
        for pair in track.windows(2) {
            let d = pair[0].ground().distance(pair[1].ground());
            if d > step + 1e-9 {
                return Err(format!("uav {u} moved {d} m in one slot"));
            }
            if d == 0.0 {
                if pair[0].ground() != home {
                    return Err(format!("uav {u} hovered away from home"));
                }
            } else if d < step - 1e-9 {
                partial += 1;
            }
        }
        if partial > corners {
            return Err(format!("uav {u} flew {partial} short slots for {corners} corners"));
        }
    }
    Ok(())
}

fn end_to_end() -> Verdict {
    let s = Scenario::default();
    let mut problems = Vec::new();
    let mut runs = 0;
    for kind in PlannerKind::ALL {
        for seed in 0..5 {
            let a = match run_mission(&s, kind, seed) {
                Ok(a) => a,
                Err(e) => {
                    problems.push(format!("{kind} seed {seed}: {e}"));
                    continue;
                }
            };
            runs += 1;
            if let Err(e) = trajectories_ok(&s, &a) {
                problems.push(format!("{kind} seed {seed}: {e}"));
            }
            if a.persons.iter().any(|p| p.estimate.is_none()) {
                problems.push(format!("{kind} seed {seed}: a person has no estimate"));
            }
            let b = run_mission(&s, kind, seed).unwrap();
            if collect_metrics(&a).without_timing().csv_line() != collect_metrics(&b).without_timing().csv_line() {
                problems.push(format!("{kind} seed {seed}: metrics differ on re-run"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        format!("{runs}/15 runs completed{}", if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Verdict); 11] = [
        ("ranging moments", Duration::from_secs(30), ranging_moments),
        ("static MLE consistency", Duration::from_secs(30), static_consistency),
        ("track recovery", Duration::from_secs(120), track_recovery),
        ("mirror symmetry", Duration::MAX, mirror_symmetry),
        ("annulus bound validity", Duration::from_secs(120), bound_validity),
        ("annulus oracle equivalence", Duration::MAX, annulus_oracle),
        ("planner optimality", Duration::from_secs(120), planner_optimality),
        ("EPSO vs PSO and GA", Duration::from_secs(300), planner_comparison),
        ("edge access benefit", Duration::MAX, edge_access_benefit),
        ("energy model", Duration::MAX, energy_model),
        ("end-to-end determinism", Duration::from_secs(600), end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let t0 = Instant::now();
        let v = run();
        let took = t0.elapsed();
        let ok = v.passed && took <= limit;
        if !ok {
            failed += 1;
        }
        let over = if took > limit { " (over time limit)" } else { "" };
        println!(
            "{} {:>2} {name}: {} [{:.1} s{over}]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
