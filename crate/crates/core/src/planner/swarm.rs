//! Particle swarms over random-key vectors.
//!
//! EPSO scales each particle's inertia by how its fitness compares with the
//! swarm: particles at or better than the average keep a small weight and
//! refine locally, worse ones keep the full weight. PSO uses the full weight
//! throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{build_plan, decode, fitness, PlanContext, Plan, SwarmParams, Target};

/// Inertia for fitness `f` (lower is better) given the swarm's minimum and
/// mean fitness.
pub fn adaptive_inertia(f: f64, f_min: f64, f_avg: f64, eps_min: f64, eps_max: f64) -> f64 {
    if f > f_avg {
        return eps_max;
    }
    if f_avg <= f_min {
        return eps_min;
    }
    let t = ((f - f_min) / (f_avg - f_min)).clamp(0.0, 1.0);
    eps_min + (eps_max - eps_min) * t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Inertia {
    Adaptive,
    Fixed,
}

pub fn epso_solve(
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    rng: &mut ChaCha8Rng,
) -> Plan {
    run(targets, ctx, params, rng, Inertia::Adaptive)
}

pub fn pso_solve(
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    rng: &mut ChaCha8Rng,
) -> Plan {
    run(targets, ctx, params, rng, Inertia::Fixed)
}

struct Particle {
    keys: Vec<f64>,
    velocity: Vec<f64>,
    fitness: f64,
    best_keys: Vec<f64>,
    best_fitness: f64,
    rng: ChaCha8Rng,
}

fn run(
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    rng: &mut ChaCha8Rng,
    inertia: Inertia,
) -> Plan {
    let s = targets.len();
    let m = ctx.uav_count();
    if s == 0 {
        return build_plan(&vec![Vec::new(); m], targets, ctx, params, vec![0.0]);
    }
    let span = m as f64;
    let v_lim = params.velocity_limit * span;

    // one stream per particle, split up front so evaluation order is irrelevant
    let mut swarm: Vec<Particle> = (0..params.population)
        .map(|_| {
            let mut prng = ChaCha8Rng::seed_from_u64(rng.random());
            let keys: Vec<f64> = (0..s).map(|_| prng.random_range(0.0..span)).collect();
            let velocity = (0..s).map(|_| prng.random_range(-v_lim..=v_lim)).collect();
            Particle {
                best_keys: keys.clone(),
                keys,
                velocity,
                fitness: f64::INFINITY,
                best_fitness: f64::INFINITY,
                rng: prng,
            }
        })
        .collect();

    let mut g_keys = swarm[0].keys.clone();
    let mut g_fit = f64::INFINITY;
    let mut history = Vec::with_capacity(params.iterations + 1);

    evaluate(&mut swarm, targets, ctx, params);
    update_bests(&swarm, &mut g_keys, &mut g_fit);
    history.push(g_fit);

    for _ in 0..params.iterations {
        let f_min = swarm.iter().map(|p| p.fitness).fold(f64::INFINITY, f64::min);
        let f_avg = swarm.iter().map(|p| p.fitness).sum::<f64>() / swarm.len() as f64;
        for p in swarm.iter_mut() {
            let eps = match inertia {
                Inertia::Adaptive => {
                    adaptive_inertia(p.fitness, f_min, f_avg, params.eps_min, params.eps_max)
                }
                Inertia::Fixed => params.eps_max,
            };
            let (mut r1, mut r2): (f64, f64) = (p.rng.random(), p.rng.random());
            for k in 0..s {
                if params.rand_per_coordinate && k > 0 {
                    r1 = p.rng.random();
                    r2 = p.rng.random();
                }
                let v = eps * p.velocity[k]
                    + params.c1 * r1 * (p.best_keys[k] - p.keys[k])
                    + params.c2 * r2 * (g_keys[k] - p.keys[k]);
                p.velocity[k] = v.clamp(-v_lim, v_lim);
                let (x, flipped) = reflect(p.keys[k] + p.velocity[k], span);
                p.keys[k] = x;
                if flipped {
                    p.velocity[k] = -p.velocity[k];
                }
            }
        }
        evaluate(&mut swarm, targets, ctx, params);
        update_bests(&swarm, &mut g_keys, &mut g_fit);
        history.push(g_fit);
    }

    build_plan(&decode(&g_keys, m), targets, ctx, params, history)
}

fn evaluate(swarm: &mut [Particle], targets: &[Target], ctx: &PlanContext, params: &SwarmParams) {
    swarm.par_iter_mut().for_each(|p| {
        p.fitness = fitness(&p.keys, targets, ctx, params);
        if p.fitness < p.best_fitness {
            p.best_fitness = p.fitness;
            p.best_keys.clone_from(&p.keys);
        }
    });
}

fn update_bests(swarm: &[Particle], g_keys: &mut Vec<f64>, g_fit: &mut f64) {
    // lowest index wins ties, independent of evaluation order
    for p in swarm {
        if p.best_fitness < *g_fit {
            *g_fit = p.best_fitness;
            g_keys.clone_from(&p.best_keys);
        }
    }
}

/// Reflects `x` into `[0, span)`; reports whether it bounced.
fn reflect(x: f64, span: f64) -> (f64, bool) {
    let top = span - 1e-9;
    if x < 0.0 {
        ((-x).min(top), true)
    } else if x > top {
        ((2.0 * top - x).max(0.0), true)
    } else {
        (x, false)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{overhead_context, still};
    use super::super::{exhaustive, solve, PlannerKind};
    use super::*;
    use crate::model::Vec2;
    use proptest::prelude::*;

    #[test]
    fn inertia_examples() {
        assert_eq!(adaptive_inertia(100.0, 100.0, 200.0, 0.4, 0.9), 0.4);
        assert!((adaptive_inertia(200.0, 100.0, 200.0, 0.4, 0.9) - 0.9).abs() < 1e-12);
        assert!((adaptive_inertia(150.0, 100.0, 200.0, 0.4, 0.9) - 0.65).abs() < 1e-12);
        assert_eq!(adaptive_inertia(250.0, 100.0, 200.0, 0.4, 0.9), 0.9);
        assert_eq!(adaptive_inertia(100.0, 100.0, 100.0, 0.4, 0.9), 0.4);
    }

    proptest! {
        #[test]
        fn inertia_stays_in_range(
            f in -1e6f64..1e6,
            a in -1e6f64..1e6,
            b in -1e6f64..1e6,
            lo in 0.01f64..1.0,
            extra in 0.0f64..1.0,
        ) {
            let (f_min, f_avg) = if a <= b { (a, b) } else { (b, a) };
            let e = adaptive_inertia(f, f_min, f_avg, lo, lo + extra);
            prop_assert!(e >= lo && e <= lo + extra);
        }

        #[test]
        fn reflection_stays_in_range(x in -10.0f64..10.0, span in 1.0f64..6.0) {
            let (y, _) = reflect(x, span);
            prop_assert!((0.0..span).contains(&y));
        }
    }

    fn small(population: usize, iterations: usize) -> SwarmParams {
        SwarmParams { population, iterations, ..Default::default() }
    }

    #[test]
    fn single_target_plan_is_forced() {
        let targets = [still(4, 100.0, 0.0)];
        let ctx = overhead_context(vec![Vec2::ZERO]);
        for kind in PlannerKind::ALL {
            let plan = solve(kind, &targets, &ctx, &small(10, 5), &mut ChaCha8Rng::seed_from_u64(1));
            assert_eq!(plan.tours, vec![vec![4]]);
            assert!((plan.makespan - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn history_is_non_increasing_and_deterministic() {
        let targets: Vec<Target> = (0..6)
            .map(|i| still(i, 50.0 + 90.0 * i as f64, 300.0 - 40.0 * i as f64))
            .collect();
        let ctx = overhead_context(vec![Vec2::ZERO, Vec2::new(500.0, 0.0)]);
        for kind in [PlannerKind::Epso, PlannerKind::Pso] {
            let a = solve(kind, &targets, &ctx, &small(20, 40), &mut ChaCha8Rng::seed_from_u64(9));
            let b = solve(kind, &targets, &ctx, &small(20, 40), &mut ChaCha8Rng::seed_from_u64(9));
            assert_eq!(a, b);
            assert_eq!(a.history.len(), 41);
            assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(a.history.last().unwrap() <= &a.history[0]);
            assert!((a.fitness - a.history.last().unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn epso_reaches_the_optimum_on_a_small_instance() {
        let targets: Vec<Target> = [(100.0, 50.0), (300.0, 400.0), (50.0, 500.0), (600.0, 100.0), (450.0, 600.0), (900.0, 300.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| still(i, x, y))
            .collect();
        let ctx = overhead_context(vec![Vec2::ZERO, Vec2::new(560.0, 0.0)]);
        let best = exhaustive(&targets, &ctx, &SwarmParams::default()).unwrap();
        let plan = epso_solve(&targets, &ctx, &SwarmParams::default(), &mut ChaCha8Rng::seed_from_u64(5));
        assert!(plan.makespan <= best.makespan * 1.02, "{} vs {}", plan.makespan, best.makespan);
    }
}
