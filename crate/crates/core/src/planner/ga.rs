//! Genetic-algorithm baseline: a visiting permutation plus one UAV per target.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{build_plan, tours_fitness, Plan, PlanContext, SwarmParams, Target};

const CROSSOVER_RATE: f64 = 0.9;
const MUTATION_RATE: f64 = 0.2;
const TOURNAMENT: usize = 3;
const ELITES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
struct Chromosome {
    order: Vec<usize>,
    assignment: Vec<usize>,
}

impl Chromosome {
    fn tours(&self, m: usize) -> Vec<Vec<usize>> {
        let mut tours = vec![Vec::new(); m];
        for &s in &self.order {
            tours[self.assignment[s]].push(s);
        }
        tours
    }
}

/// Same contract as the swarms: population and iteration budget come from
/// `params`, so equal settings mean equal fitness evaluations.
pub fn ga_solve(
    targets: &[Target],
    ctx: &PlanContext,
    params: &SwarmParams,
    rng: &mut ChaCha8Rng,
) -> Plan {
    let s = targets.len();
    let m = ctx.uav_count();
    if s == 0 {
        return build_plan(&vec![Vec::new(); m], targets, ctx, params, vec![0.0]);
    }
    let score = |c: &Chromosome| tours_fitness(&c.tours(m), targets, ctx, params);

    let mut pop: Vec<Chromosome> = (0..params.population)
        .map(|_| {
            let mut order: Vec<usize> = (0..s).collect();
            order.shuffle(rng);
            let assignment = (0..s).map(|_| rng.random_range(0..m)).collect();
            Chromosome { order, assignment }
        })
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(score).collect();
    let mut history = Vec::with_capacity(params.iterations + 1);
    history.push(fit.iter().copied().fold(f64::INFINITY, f64::min));

    for _ in 0..params.iterations {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));

        let mut next: Vec<Chromosome> = ranked
            .iter()
            .take(ELITES.min(pop.len()))
            .map(|&i| pop[i].clone())
            .collect();
        while next.len() < pop.len() {
            let a = &pop[tournament(&fit, rng)];
            let b = &pop[tournament(&fit, rng)];
            let mut child = if rng.random::<f64>() < CROSSOVER_RATE {
                crossover(a, b, rng)
            } else {
                a.clone()
            };
            mutate(&mut child, m, rng);
            next.push(child);
        }
        pop = next;
        fit = pop.par_iter().map(score).collect();
        let best = fit.iter().copied().fold(f64::INFINITY, f64::min);
        history.push(best.min(*history.last().expect("seeded above")));
    }

    let best = (0..pop.len())
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
        .expect("non-empty population");
    build_plan(&pop[best].tours(m), targets, ctx, params, history)
}

fn tournament(fit: &[f64], rng: &mut ChaCha8Rng) -> usize {
    (0..TOURNAMENT)
        .map(|_| rng.random_range(0..fit.len()))
        .min_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
        .expect("tournament size is positive")
}

/// Order crossover on the permutation, uniform crossover on the assignment.
fn crossover(a: &Chromosome, b: &Chromosome, rng: &mut ChaCha8Rng) -> Chromosome {
    let n = a.order.len();
    let (mut i, mut j) = (rng.random_range(0..n), rng.random_range(0..n));
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let mut order = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for k in i..=j {
        order[k] = a.order[k];
        used[a.order[k]] = true;
    }
    let mut fill = b.order.iter().cycle().skip(j + 1).filter(|g| !used[**g]);
    for k in (j + 1..n).chain(0..i) {
        order[k] = *fill.next().expect("missing genes come from the other parent");
    }
    let assignment = a
        .assignment
        .iter()
        .zip(&b.assignment)
        .map(|(&x, &y)| if rng.random::<bool>() { x } else { y })
        .collect();
    Chromosome { order, assignment }
}

fn mutate(c: &mut Chromosome, m: usize, rng: &mut ChaCha8Rng) {
    let n = c.order.len();
    if rng.random::<f64>() < MUTATION_RATE && n > 1 {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        c.order.swap(i, j);
    }
    if rng.random::<f64>() < MUTATION_RATE {
        let k = rng.random_range(0..n);
        c.assignment[k] = rng.random_range(0..m);
    }
}
