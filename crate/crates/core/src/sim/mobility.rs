//! Ground truth: persons walking with piecewise-constant velocity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Area, BoundaryMode, PersonState, Scenario, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    /// Slots between velocity redraws; 0 never redraws.
    pub resample_interval: u64,
    pub v_max: f64,
    pub slot_duration: f64,
    pub area: Area,
    pub boundary: BoundaryMode,
}

impl MobilityParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            resample_interval: s.resample_interval,
            v_max: s.person_vmax,
            slot_duration: s.slot_duration,
            area: s.area(),
            boundary: s.boundary_mode,
        }
    }
}

/// Heading uniform on `[0, 2pi)`, speed uniform on `[0, v_max]`.
pub fn draw_velocity(rng: &mut ChaCha8Rng, v_max: f64) -> Vec2 {
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = if v_max > 0.0 {
        rng.random_range(0.0..=v_max)
    } else {
        0.0
    };
    Vec2::from_polar(speed, heading)
}

/// Moves a person from `slot` to `slot + 1`, redrawing the velocity first when
/// `slot` is a positive multiple of the resample interval.
pub fn person_mobility_step(
    state: PersonState,
    slot: u64,
    rng: &mut ChaCha8Rng,
    params: &MobilityParams,
) -> PersonState {
    let mut state = state;
    if params.resample_interval > 0 && slot > 0 && slot % params.resample_interval == 0 {
        state.velocity = draw_velocity(rng, params.v_max).with_z(0.0);
    }
    state.advance(params.slot_duration, &params.area, params.boundary)
}

/// `count` persons uniform over the area.
pub fn spawn_persons(count: usize, params: &MobilityParams, rng: &mut ChaCha8Rng) -> Vec<PersonState> {
    let a = params.area;
    (0..count)
        .map(|_| {
            let p = a.origin
                + Vec2::new(rng.random_range(0.0..=a.length), rng.random_range(0.0..=a.width));
            PersonState::at(p, draw_velocity(rng, params.v_max))
        })
        .collect()
}

/// The persons and their full position history.
#[derive(Debug, Clone)]
pub struct World {
    pub params: MobilityParams,
    pub persons: Vec<PersonState>,
    pub slot: u64,
    /// Ground position of every person at every slot so far.
    pub history: Vec<Vec<Vec2>>,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(params: MobilityParams, persons: Vec<PersonState>, rng: ChaCha8Rng) -> Self {
        let history = vec![persons.iter().map(|p| p.ground()).collect()];
        Self {
            params,
            persons,
            slot: 0,
            history,
            rng,
        }
    }

    pub fn spawn(params: MobilityParams, count: usize, mut rng: ChaCha8Rng) -> Self {
        let persons = spawn_persons(count, &params, &mut rng);
        Self::new(params, persons, rng)
    }

    pub fn step(&mut self) {
        let slot = self.slot;
        for p in self.persons.iter_mut() {
            *p = person_mobility_step(*p, slot, &mut self.rng, &self.params);
        }
        self.slot += 1;
        self.history
            .push(self.persons.iter().map(|p| p.ground()).collect());
    }

    pub fn position(&self, person: usize, slot: u64) -> Vec2 {
        self.history[slot as usize][person]
    }
}
