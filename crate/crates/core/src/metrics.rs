//! Section delay and queue-length measurement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{LaneId, LaneRole};
use crate::traffic::{Vehicle, VehicleId};

/// Vehicles slower than this join a queue (about 5 km/h).
pub const QUEUE_ENTER_SPEED: f64 = 7.0;
/// Queued vehicles faster than this leave it (about 10 km/h).
pub const QUEUE_LEAVE_SPEED: f64 = 14.0;
/// Slack on top of the jam spacing within which a vehicle still counts as
/// part of the queue ahead of it.
pub const QUEUE_CONTIGUITY_SLACK_FT: f64 = 10.0;

/// Measurement section from the approach entry to the stop line (or the
/// stop sign for the diverge lane).
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySection {
    pub lane: LaneId,
    pub start_ft: f64,
    pub end_ft: f64,
    pub ideal_time: f64,
}

impl DelaySection {
    pub fn new(lane: LaneId, start_ft: f64, desired_speed: f64) -> Self {
        DelaySection {
            lane,
            start_ft,
            end_ft: 0.0,
            ideal_time: start_ft / desired_speed,
        }
    }
}

/// Delay of one completed traversal, floored at zero.
pub fn record_traversal(vehicle: &Vehicle, section: &DelaySection, exit_time: f64) -> Result<f64> {
    let entry = vehicle
        .section_entry_time
        .ok_or_else(|| Error::Measurement(format!("vehicle {} never entered the section", vehicle.id.0)))?;
    if exit_time < entry {
        return Err(Error::Measurement(format!(
            "vehicle {} exits at {exit_time} s before entering at {entry} s",
            vehicle.id.0
        )));
    }
    Ok(((exit_time - entry) - section.ideal_time).max(0.0))
}

/// Queue counter with speed hysteresis. The queue is the chain of slow
/// vehicles, each within `jam_spacing + 10 ft` of the one ahead, starting at
/// the counter position. Its length runs to the rear of the last member.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueCounter {
    pub lane: LaneId,
    /// Distance of the counter upstream of the stop bar.
    pub position_ft: f64,
    pub enter_speed_threshold: f64,
    pub leave_speed_threshold: f64,
    pub contiguity_ft: f64,
    pub current_ft: f64,
    pub max_observed: f64,
    queued: BTreeSet<VehicleId>,
}

impl QueueCounter {
    pub fn new(lane: LaneId, jam_spacing: f64) -> Self {
        QueueCounter {
            lane,
            position_ft: 0.0,
            enter_speed_threshold: QUEUE_ENTER_SPEED,
            leave_speed_threshold: QUEUE_LEAVE_SPEED,
            contiguity_ft: jam_spacing + QUEUE_CONTIGUITY_SLACK_FT,
            current_ft: 0.0,
            max_observed: 0.0,
            queued: BTreeSet::new(),
        }
    }

    pub fn with_offset(mut self, position_ft: f64) -> Self {
        self.position_ft = position_ft;
        self
    }

    /// `vehicles` must be ordered from the stop bar upstream.
    pub fn update(&mut self, vehicles: &[Vehicle]) {
        let mut queued = BTreeSet::new();
        let mut tail = self.position_ft;
        for v in vehicles.iter().filter(|v| v.position >= self.position_ft) {
            if v.position - tail > self.contiguity_ft {
                break;
            }
            let slow = v.speed < self.enter_speed_threshold
                || (self.queued.contains(&v.id) && v.speed <= self.leave_speed_threshold);
            if !slow {
                break;
            }
            queued.insert(v.id);
            tail = v.position;
        }
        self.queued = queued;
        self.current_ft = if self.queued.is_empty() {
            0.0
        } else {
            tail - self.position_ft
        };
        self.max_observed = self.max_observed.max(self.current_ft);
    }

    pub fn queued_count(&self) -> usize {
        self.queued.len()
    }
}

pub fn update_queue(mut counter: QueueCounter, vehicles: &[Vehicle]) -> QueueCounter {
    counter.update(vehicles);
    counter
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneMetrics {
    pub lane: String,
    pub role: LaneRole,
    pub n_vehicles: usize,
    pub mean_delay_s: f64,
    pub max_queue_ft: f64,
}

/// Delay samples for one lane.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelaySamples {
    pub samples: Vec<f64>,
}

impl DelaySamples {
    pub fn push(&mut self, delay: f64) {
        self.samples.push(delay);
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }
}

pub fn summarize(lane: &str, role: LaneRole, samples: &DelaySamples, counter: Option<&QueueCounter>) -> LaneMetrics {
    LaneMetrics {
        lane: lane.to_string(),
        role,
        n_vehicles: samples.samples.len(),
        mean_delay_s: samples.mean(),
        max_queue_ft: counter.map_or(0.0, |c| c.max_observed),
    }
}

/// Unweighted mean of per-run values.
pub fn mean_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Entrance, Movement};

    fn vehicle(id: u64, position: f64, speed: f64) -> Vehicle {
        Vehicle::new(
            VehicleId(id),
            Entrance::Nw,
            Movement::Through,
            LaneId(1),
            LaneId(1),
            position,
            speed,
            0.0,
        )
    }

    fn entered(entry: f64) -> Vehicle {
        let mut v = vehicle(0, 0.0, 0.0);
        v.section_entry_time = Some(entry);
        v
    }

    #[test]
    fn traversal_delay() {
        let s = DelaySection::new(LaneId(1), 500.0, 50.0);
        assert_eq!(s.ideal_time, 10.0);
        assert_eq!(record_traversal(&entered(100.0), &s, 110.0).unwrap(), 0.0);
        assert_eq!(record_traversal(&entered(100.0), &s, 135.0).unwrap(), 25.0);
        assert_eq!(record_traversal(&entered(100.0), &s, 105.0).unwrap(), 0.0);
        assert!(matches!(
            record_traversal(&entered(100.0), &s, 99.0),
            Err(Error::Measurement(_))
        ));
        assert!(matches!(
            record_traversal(&vehicle(1, 0.0, 0.0), &s, 99.0),
            Err(Error::Measurement(_))
        ));
    }

    #[test]
    fn empty_queue() {
        let c = update_queue(QueueCounter::new(LaneId(1), 22.4), &[]);
        assert_eq!(c.current_ft, 0.0);
        assert_eq!(c.max_observed, 0.0);
    }

    #[test]
    fn standing_queue_length() {
        let vs: Vec<_> = (1..=9).map(|k| vehicle(k, 22.4 * k as f64, 0.0)).collect();
        let c = update_queue(QueueCounter::new(LaneId(1), 22.4), &vs);
        assert!((c.current_ft - 201.6).abs() < 1e-9);
        assert_eq!(c.queued_count(), 9);
    }

    #[test]
    fn moving_vehicles_are_not_queued() {
        let vs: Vec<_> = (1..=9).map(|k| vehicle(k, 60.0 * k as f64, 50.0)).collect();
        let c = update_queue(QueueCounter::new(LaneId(1), 22.4), &vs);
        assert_eq!(c.current_ft, 0.0);
    }

    #[test]
    fn hysteresis_keeps_slowly_moving_members() {
        let mut vs: Vec<_> = (1..=3).map(|k| vehicle(k, 22.4 * k as f64, 0.0)).collect();
        let mut c = QueueCounter::new(LaneId(1), 22.4);
        c.update(&vs);
        for v in &mut vs {
            v.speed = 10.0;
        }
        c.update(&vs);
        assert_eq!(c.queued_count(), 3);
        for v in &mut vs {
            v.speed = 15.0;
        }
        c.update(&vs);
        assert_eq!(c.current_ft, 0.0);
        assert!((c.max_observed - 67.2).abs() < 1e-9);
        // a vehicle never queued does not join at 10 ft/s
        let fresh = [vehicle(9, 22.4, 10.0)];
        c.update(&fresh);
        assert_eq!(c.queued_count(), 0);
    }

    #[test]
    fn gap_breaks_the_chain() {
        let vs = [vehicle(1, 22.4, 0.0), vehicle(2, 44.8, 0.0), vehicle(3, 200.0, 0.0)];
        let c = update_queue(QueueCounter::new(LaneId(1), 22.4), &vs);
        assert!((c.current_ft - 44.8).abs() < 1e-9);
    }

    #[test]
    fn summary_means() {
        let mut s = DelaySamples::default();
        s.push(10.0);
        s.push(20.0);
        let m = summarize("nw_middle", LaneRole::Middle, &s, None);
        assert_eq!((m.mean_delay_s, m.n_vehicles), (15.0, 2));
        let m = summarize("nw_middle", LaneRole::Middle, &DelaySamples::default(), None);
        assert_eq!((m.mean_delay_s, m.n_vehicles), (0.0, 0));
    }

    #[test]
    fn unweighted_vs_weighted_mean() {
        // three runs with different vehicle counts
        let runs = [(10.0, 100usize), (20.0, 50), (30.0, 10)];
        let means: Vec<f64> = runs.iter().map(|r| r.0).collect();
        assert_eq!(mean_of(&means), 20.0);
        let weighted: f64 =
            runs.iter().map(|r| r.0 * r.1 as f64).sum::<f64>() / runs.iter().map(|r| r.1 as f64).sum::<f64>();
        assert!((weighted - 2300.0 / 160.0).abs() < 1e-12);
        assert!(weighted < mean_of(&means));
    }
}
