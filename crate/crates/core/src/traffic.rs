//! Vehicle dynamics: car following, the diverge transfer into the short lane,
//! and gap acceptance at stop-controlled movements.
//!
//! Positions are distances upstream of the stop bar and decrease as a vehicle
//! advances. A vehicle's position is the rear of its jam slot: the slot is
//! `jam_spacing` feet long (a 15 ft car plus the standstill gap), so a car
//! waiting first in line rests at `jam_spacing` and the `n`-th car of a
//! standing queue rests at `n * jam_spacing`. Gaps are measured between
//! these reference points, so a gap equal to `jam_spacing` is bumper to
//! bumper at standstill.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Control, Entrance, IntersectionDesign, LaneId, Movement, PhaseId, DEFAULT_JAM_SPACING_FT};
use crate::signal::LaneIndication;

pub const VEHICLE_LENGTH_FT: f64 = 15.0;
pub const DEFAULT_DETECTION_ZONE_FT: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VehicleState {
    Approaching,
    Queued,
    StoppedAtSign,
    Discharged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub entrance: Entrance,
    pub movement: Movement,
    /// Lane the vehicle discharges from.
    pub target_lane: LaneId,
    /// Lane currently occupied; differs from `target_lane` until a
    /// short- or diverge-bound vehicle transfers out of the middle lane.
    pub lane: LaneId,
    pub position: f64,
    pub speed: f64,
    pub arrival_time: f64,
    pub section_entry_time: Option<f64>,
    pub state: VehicleState,
    /// Stop/go choice made when the yellow was first seen; `Some(true)`
    /// means the vehicle is committed to clearing the stop bar.
    pub(crate) yellow_go: Option<bool>,
    /// Cleared to leave a stop-controlled stop line.
    pub(crate) cleared_stop: bool,
}

impl Vehicle {
    pub fn new(
        id: VehicleId,
        entrance: Entrance,
        movement: Movement,
        target_lane: LaneId,
        lane: LaneId,
        position: f64,
        speed: f64,
        arrival_time: f64,
    ) -> Self {
        Vehicle {
            id,
            entrance,
            movement,
            target_lane,
            lane,
            position,
            speed,
            arrival_time,
            section_entry_time: None,
            state: VehicleState::Approaching,
            yellow_go: None,
            cleared_stop: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarFollowingParams {
    /// Desired speed, ft/s.
    pub desired_speed: f64,
    /// ft/s²
    pub max_accel: f64,
    /// ft/s²
    pub comfortable_decel: f64,
    pub jam_spacing: f64,
    /// s
    pub time_headway: f64,
    /// Subtracted from the spacing to leader and from the jam spacing before
    /// the law is applied. Zero (the default) applies the law to spacing;
    /// 15 gives the usual bumper-gap form with the same equilibria.
    pub vehicle_length: f64,
}

impl Default for CarFollowingParams {
    fn default() -> Self {
        CarFollowingParams {
            desired_speed: 50.0,
            max_accel: 6.0,
            comfortable_decel: 9.0,
            jam_spacing: DEFAULT_JAM_SPACING_FT,
            time_headway: 1.2,
            vehicle_length: 0.0,
        }
    }
}

impl CarFollowingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("desired_speed", self.desired_speed),
            ("max_accel", self.max_accel),
            ("comfortable_decel", self.comfortable_decel),
            ("jam_spacing", self.jam_spacing),
            ("time_headway", self.time_headway),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.vehicle_length >= 0.0 && self.vehicle_length < self.jam_spacing) {
            return Err(Error::InvalidConfig(format!(
                "vehicle_length must lie in [0, jam_spacing), got {}",
                self.vehicle_length
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapAcceptanceParams {
    pub critical_gap: f64,
    pub require_full_stop: bool,
}

impl Default for GapAcceptanceParams {
    fn default() -> Self {
        GapAcceptanceParams {
            critical_gap: 6.0,
            require_full_stop: true,
        }
    }
}

/// The vehicle ahead, or anything that behaves like one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub speed: f64,
}

impl Leader {
    pub fn standing(gap: f64) -> Self {
        Leader { gap, speed: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalAhead {
    pub indication: LaneIndication,
    /// Distance to the stop bar.
    pub distance: f64,
}

/// Intelligent Driver Model acceleration, ft/s².
pub fn idm_acceleration(speed: f64, leader: Option<Leader>, p: &CarFollowingParams) -> f64 {
    let free = p.max_accel * (1.0 - (speed / p.desired_speed).powi(4));
    match leader {
        None => free,
        Some(l) if l.gap <= 0.0 => f64::NEG_INFINITY,
        Some(l) => {
            let approach = speed - l.speed;
            let dynamic =
                speed * p.time_headway + speed * approach / (2.0 * (p.max_accel * p.comfortable_decel).sqrt());
            let desired_gap = p.jam_spacing - p.vehicle_length + dynamic.max(0.0);
            let gap = l.gap - p.vehicle_length;
            if gap <= 0.0 {
                return f64::NEG_INFINITY;
            }
            free - p.max_accel * (desired_gap / gap).powi(2)
        }
    }
}

/// Whether a vehicle can halt at its stop point without braking harder
/// than the comfortable deceleration.
pub fn can_stop_comfortably(position: f64, speed: f64, p: &CarFollowingParams) -> bool {
    speed * speed / (2.0 * p.comfortable_decel) <= position - p.jam_spacing
}

/// The signal as an obstacle, if the vehicle has to respect it.
pub fn signal_obstacle(signal: SignalAhead, speed: f64, p: &CarFollowingParams) -> Option<Leader> {
    match signal.indication {
        LaneIndication::Green => None,
        LaneIndication::Red | LaneIndication::StopControlled => Some(Leader::standing(signal.distance)),
        LaneIndication::Yellow => {
            can_stop_comfortably(signal.distance, speed, p).then(|| Leader::standing(signal.distance))
        }
    }
}

/// Whichever of two leaders forces the lower acceleration.
pub fn binding_leader(a: Option<Leader>, b: Option<Leader>, speed: f64, p: &CarFollowingParams) -> Option<Leader> {
    match (a, b) {
        (Some(x), Some(y)) => {
            if idm_acceleration(speed, Some(y), p) < idm_acceleration(speed, Some(x), p) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

/// One car-following step. Returns `(speed, position)`.
///
/// Uses the ballistic update. The travel is clamped to the gap to the binding
/// leader treated as standing, so the gap can never become negative.
pub fn follow_update(
    speed: f64,
    position: f64,
    leader: Option<Leader>,
    signal: Option<SignalAhead>,
    p: &CarFollowingParams,
    dt: f64,
) -> (f64, f64) {
    let obstacle = signal.and_then(|s| signal_obstacle(s, speed, p));
    let binding = binding_leader(leader, obstacle, speed, p);
    let room = binding.map(|l| l.gap - p.vehicle_length);
    if room.is_some_and(|r| r <= 1e-9) {
        return (0.0, position);
    }
    let acc = idm_acceleration(speed, binding, p);

    let mut new_speed = speed + acc * dt;
    let mut travel = if new_speed < 0.0 {
        new_speed = 0.0;
        if acc < 0.0 {
            -speed * speed / (2.0 * acc)
        } else {
            0.0
        }
    } else {
        (speed + new_speed) / 2.0 * dt
    };
    new_speed = new_speed.min(p.desired_speed);

    if let (Some(l), Some(room)) = (binding, room) {
        if travel > room {
            travel = room;
            new_speed = new_speed.min(l.speed);
        }
    }
    (new_speed, position - travel)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DivergeOutcome {
    Transferred,
    Blocked,
}

/// Transfer decision for a vehicle at the diverge point.
pub fn diverge_attempt(occupancy: usize, capacity: usize) -> DivergeOutcome {
    if occupancy < capacity {
        DivergeOutcome::Transferred
    } else {
        DivergeOutcome::Blocked
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GapDecision {
    Proceed,
    Wait,
}

/// `conflicting_arrivals` are seconds from now until each conflicting
/// vehicle reaches the conflict area.
pub fn gap_accept(speed: f64, conflicting_arrivals: &[f64], params: &GapAcceptanceParams) -> Result<GapDecision> {
    if params.require_full_stop && speed != 0.0 {
        return Err(Error::Precondition(format!(
            "gap acceptance needs a full stop, vehicle moving at {speed} ft/s"
        )));
    }
    let nearest = conflicting_arrivals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if nearest >= params.critical_gap {
        GapDecision::Proceed
    } else {
        GapDecision::Wait
    })
}

/// Shortest time for a vehicle to cover `distance` accelerating at
/// `max_accel` up to the desired speed.
pub fn time_to_reach(distance: f64, speed: f64, p: &CarFollowingParams) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let v0 = p.desired_speed;
    let a = p.max_accel;
    let speed = speed.min(v0);
    let t_cruise = (v0 - speed) / a;
    let d_cruise = (speed + v0) / 2.0 * t_cruise;
    if distance <= d_cruise {
        (-speed + (speed * speed + 2.0 * a * distance).sqrt()) / a
    } else {
        t_cruise + (distance - d_cruise) / v0
    }
}

/// Phases whose detection zone (the stop bar to `zone_ft` upstream) holds a
/// vehicle making a movement the phase serves.
pub fn detector_scan<'a>(
    design: &IntersectionDesign,
    vehicles: impl IntoIterator<Item = &'a Vehicle>,
    zone_ft: f64,
) -> BTreeSet<PhaseId> {
    let mut actuated = BTreeSet::new();
    for v in vehicles {
        if !(0.0..=zone_ft).contains(&v.position) {
            continue;
        }
        if let Ok(Control::Signal { phase, .. }) = design.control_for(v.lane, v.movement) {
            actuated.insert(*phase);
        }
    }
    actuated
}
