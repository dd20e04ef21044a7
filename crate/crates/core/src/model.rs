//! Shared geometry, kinematic states and the validated scenario description.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::bound::AnnulusSource;
use crate::energy::PowerParams;
use crate::error::{Error, Result};
use crate::planner::SwarmParams;

/// A ground-plane point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self * (1.0 / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn from_polar(radius: f64, angle: f64) -> Vec2 {
        Vec2::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn with_z(self, z: f64) -> Vec3 {
        Vec3::new(self.x, self.y, z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A point in space in meters; `z` is height above ground.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn ground(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Euclidean distance between a UAV and a person (or any two points).
pub fn distance(q: Vec3, w: Vec3) -> f64 {
    (q - w).norm()
}

/// The rectangular search area `[0, length] x [0, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub origin: Vec2,
    pub length: f64,
    pub width: f64,
}

impl Area {
    pub fn new(length: f64, width: f64) -> Self {
        Self {
            origin: Vec2::ZERO,
            length,
            width,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.origin.x
            && p.x <= self.origin.x + self.length
            && p.y >= self.origin.y
            && p.y <= self.origin.y + self.width
    }

    pub fn center(&self) -> Vec2 {
        self.origin + Vec2::new(self.length / 2.0, self.width / 2.0)
    }

    /// Position and velocity of a walker `seconds` after leaving `start` at
    /// `velocity`, bouncing off the edges like [`PersonState::advance`].
    /// A start outside the area moves in a straight line.
    pub fn walk(&self, start: Vec2, velocity: Vec2, seconds: f64) -> (Vec2, Vec2) {
        let p = start + velocity * seconds;
        if !self.contains(start) {
            return (p, velocity);
        }
        let (x, vx) = reflect_axis(p.x, velocity.x, self.origin.x, self.origin.x + self.length);
        let (y, vy) = reflect_axis(p.y, velocity.y, self.origin.y, self.origin.y + self.width);
        (Vec2::new(x, y), Vec2::new(vx, vy))
    }
}

/// What a person does on reaching the area boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Specular reflection: the outward velocity component flips sign.
    #[default]
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl UavState {
    pub fn advance(self, dt: f64) -> Self {
        Self {
            position: self.position + self.velocity * dt,
            velocity: self.velocity,
        }
    }
}

/// A person on the ground; `z` of both fields stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl PersonState {
    pub fn at(position: Vec2, velocity: Vec2) -> Self {
        Self {
            position: position.with_z(0.0),
            velocity: velocity.with_z(0.0),
        }
    }

    pub fn ground(&self) -> Vec2 {
        self.position.ground()
    }

    pub fn ground_velocity(&self) -> Vec2 {
        self.velocity.ground()
    }

    /// Moves for `dt` seconds, reflecting off the edges of `area`.
    pub fn advance(self, dt: f64, area: &Area, mode: BoundaryMode) -> Self {
        let BoundaryMode::Reflect = mode;
        let (x, vx) = reflect_axis(
            self.position.x + self.velocity.x * dt,
            self.velocity.x,
            area.origin.x,
            area.origin.x + area.length,
        );
        let (y, vy) = reflect_axis(
            self.position.y + self.velocity.y * dt,
            self.velocity.y,
            area.origin.y,
            area.origin.y + area.width,
        );
        Self {
            position: Vec3::new(x, y, 0.0),
            velocity: Vec3::new(vx, vy, 0.0),
        }
    }
}

fn reflect_axis(mut p: f64, mut v: f64, lo: f64, hi: f64) -> (f64, f64) {
    // a step longer than the area folds more than once
    loop {
        if p > hi {
            p = 2.0 * hi - p;
            v = -v;
        } else if p < lo {
            p = 2.0 * lo - p;
            v = -v;
        } else {
            return (p, v);
        }
    }
}

/// Scenario file contents before validation. Every field is optional; missing
/// fields take the defaults of [`Scenario::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub area_length: Option<f64>,
    pub area_width: Option<f64>,
    pub altitude: Option<f64>,
    pub comm_range: Option<f64>,
    pub uav_count: Option<usize>,
    pub uav_vmax: Option<f64>,
    pub person_vmax: Option<f64>,
    pub slot_duration: Option<f64>,
    pub samples_per_slot: Option<usize>,
    pub eta: Option<f64>,
    pub sigma_psi: Option<f64>,
    pub alpha: Option<f64>,
    pub e_th: Option<f64>,
    pub energy_budget: Option<f64>,
    pub seed: Option<u64>,
    pub person_count: Option<usize>,
    pub resample_interval: Option<u64>,
    pub boundary_mode: Option<BoundaryMode>,
    pub refine_slots: Option<u64>,
    pub hypothesis_timeout: Option<u64>,
    pub annuli_count: Option<usize>,
    pub collinear_tol: Option<f64>,
    pub min_window_slots: Option<usize>,
    pub annulus_source: Option<AnnulusSource>,
    pub edge_access: Option<bool>,
    pub swarm: Option<SwarmParams>,
    pub power: Option<PowerParams>,
}

impl RawScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Immutable world description shared by every stage of a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub area_length: f64,
    pub area_width: f64,
    pub altitude: f64,
    pub comm_range: f64,
    pub uav_count: usize,
    pub uav_vmax: f64,
    pub person_vmax: f64,
    pub slot_duration: f64,
    pub samples_per_slot: usize,
    pub eta: f64,
    pub sigma_psi: f64,
    /// Relative growth rate of the error bound after the last fix (1/s).
    pub alpha: f64,
    pub e_th: f64,
    /// Per-UAV energy budget (J).
    pub energy_budget: f64,
    pub seed: u64,
    pub person_count: usize,
    /// Slots between person heading/speed redraws; 0 keeps the first draw.
    pub resample_interval: u64,
    pub boundary_mode: BoundaryMode,
    pub refine_slots: u64,
    pub hypothesis_timeout: u64,
    pub annuli_count: usize,
    pub collinear_tol: f64,
    pub min_window_slots: usize,
    pub annulus_source: AnnulusSource,
    pub edge_access: bool,
    pub swarm: SwarmParams,
    pub power: PowerParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            area_length: 1120.0,
            area_width: 640.0,
            altitude: 100.0,
            comm_range: 150.0,
            uav_count: 4,
            uav_vmax: 25.0,
            person_vmax: 1.5,
            slot_duration: 0.025,
            samples_per_slot: 10,
            eta: 2.0,
            sigma_psi: 4.0,
            alpha: 0.05,
            e_th: 80.0,
            energy_budget: 500_000.0,
            seed: 0,
            person_count: 10,
            resample_interval: 400,
            boundary_mode: BoundaryMode::Reflect,
            refine_slots: 20,
            hypothesis_timeout: 40,
            annuli_count: 5,
            collinear_tol: 0.5,
            min_window_slots: 40,
            annulus_source: AnnulusSource::default(),
            edge_access: true,
            swarm: SwarmParams::default(),
            power: PowerParams::default(),
        }
    }
}

impl Scenario {
    pub fn area(&self) -> Area {
        Area::new(self.area_length, self.area_width)
    }

    pub fn ranging(&self) -> crate::ranging::RangingParams {
        crate::ranging::RangingParams {
            eta: self.eta,
            sigma_psi: self.sigma_psi,
        }
    }

    /// Radius of the ground disc inside communication range.
    pub fn ground_radius(&self) -> f64 {
        (self.comm_range * self.comm_range - self.altitude * self.altitude).sqrt()
    }

    /// Validation mode: exact ranges and persons that never turn.
    pub fn noise_free(&self) -> Self {
        Self {
            sigma_psi: 0.0,
            resample_interval: 0,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        validate_scenario(RawScenario::from_json(text)?)
    }

    pub fn to_raw(&self) -> RawScenario {
        RawScenario {
            area_length: Some(self.area_length),
            area_width: Some(self.area_width),
            altitude: Some(self.altitude),
            comm_range: Some(self.comm_range),
            uav_count: Some(self.uav_count),
            uav_vmax: Some(self.uav_vmax),
            person_vmax: Some(self.person_vmax),
            slot_duration: Some(self.slot_duration),
            samples_per_slot: Some(self.samples_per_slot),
            eta: Some(self.eta),
            sigma_psi: Some(self.sigma_psi),
            alpha: Some(self.alpha),
            e_th: Some(self.e_th),
            energy_budget: Some(self.energy_budget),
            seed: Some(self.seed),
            person_count: Some(self.person_count),
            resample_interval: Some(self.resample_interval),
            boundary_mode: Some(self.boundary_mode),
            refine_slots: Some(self.refine_slots),
            hypothesis_timeout: Some(self.hypothesis_timeout),
            annuli_count: Some(self.annuli_count),
            collinear_tol: Some(self.collinear_tol),
            min_window_slots: Some(self.min_window_slots),
            annulus_source: Some(self.annulus_source),
            edge_access: Some(self.edge_access),
            swarm: Some(self.swarm.clone()),
            power: Some(self.power),
        }
    }
}

/// Fills defaults and checks every scenario invariant.
pub fn validate_scenario(raw: RawScenario) -> Result<Scenario> {
    let d = Scenario::default();
    let s = Scenario {
        area_length: raw.area_length.unwrap_or(d.area_length),
        area_width: raw.area_width.unwrap_or(d.area_width),
        altitude: raw.altitude.unwrap_or(d.altitude),
        comm_range: raw.comm_range.unwrap_or(d.comm_range),
        uav_count: raw.uav_count.unwrap_or(d.uav_count),
        uav_vmax: raw.uav_vmax.unwrap_or(d.uav_vmax),
        person_vmax: raw.person_vmax.unwrap_or(d.person_vmax),
        slot_duration: raw.slot_duration.unwrap_or(d.slot_duration),
        samples_per_slot: raw.samples_per_slot.unwrap_or(d.samples_per_slot),
        eta: raw.eta.unwrap_or(d.eta),
        sigma_psi: raw.sigma_psi.unwrap_or(d.sigma_psi),
        alpha: raw.alpha.unwrap_or(d.alpha),
        e_th: raw.e_th.unwrap_or(d.e_th),
        energy_budget: raw.energy_budget.unwrap_or(d.energy_budget),
        seed: raw.seed.unwrap_or(d.seed),
        person_count: raw.person_count.unwrap_or(d.person_count),
        resample_interval: raw.resample_interval.unwrap_or(d.resample_interval),
        boundary_mode: raw.boundary_mode.unwrap_or(d.boundary_mode),
        refine_slots: raw.refine_slots.unwrap_or(d.refine_slots),
        hypothesis_timeout: raw.hypothesis_timeout.unwrap_or(d.hypothesis_timeout),
        annuli_count: raw.annuli_count.unwrap_or(d.annuli_count),
        collinear_tol: raw.collinear_tol.unwrap_or(d.collinear_tol),
        min_window_slots: raw.min_window_slots.unwrap_or(d.min_window_slots),
        annulus_source: raw.annulus_source.unwrap_or(d.annulus_source),
        edge_access: raw.edge_access.unwrap_or(d.edge_access),
        swarm: raw.swarm.unwrap_or(d.swarm),
        power: raw.power.unwrap_or(d.power),
    };

    positive("area_length", s.area_length)?;
    positive("area_width", s.area_width)?;
    positive("altitude", s.altitude)?;
    positive("comm_range", s.comm_range)?;
    positive("uav_vmax", s.uav_vmax)?;
    positive("slot_duration", s.slot_duration)?;
    positive("eta", s.eta)?;
    positive("e_th", s.e_th)?;
    positive("energy_budget", s.energy_budget)?;
    positive("collinear_tol", s.collinear_tol)?;
    if s.comm_range <= s.altitude {
        return Err(Error::scenario(
            "comm_range",
            format!(
                "no ground coverage: comm_range {} must exceed altitude {}",
                s.comm_range, s.altitude
            ),
        ));
    }
    if !(s.person_vmax >= 0.0 && s.person_vmax < s.uav_vmax) {
        return Err(Error::scenario(
            "person_vmax",
            format!(
                "must satisfy 0 <= person_vmax < uav_vmax ({} vs {})",
                s.person_vmax, s.uav_vmax
            ),
        ));
    }
    if !(s.sigma_psi >= 0.0 && s.sigma_psi.is_finite()) {
        return Err(Error::scenario("sigma_psi", "must be finite and >= 0"));
    }
    if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
        return Err(Error::scenario("alpha", "must be finite and >= 0"));
    }
    if s.uav_count == 0 {
        return Err(Error::scenario("uav_count", "at least one UAV is required"));
    }
    if s.samples_per_slot == 0 {
        return Err(Error::scenario("samples_per_slot", "must be >= 1"));
    }
    if s.annuli_count == 0 {
        return Err(Error::scenario("annuli_count", "must be >= 1"));
    }
    if s.min_window_slots < 3 {
        return Err(Error::scenario("min_window_slots", "must be >= 3"));
    }
    s.swarm.validate()?;
    s.power.validate()?;
    Ok(s)
}

fn positive(field: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::scenario(field, format!("must be positive, got {value}")))
    }
}
