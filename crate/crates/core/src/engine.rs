//! Time-stepped orchestration of one simulation run.
//!
//! Each step runs, in order: detector scan and controller update; injection
//! of due arrivals; diverge transfers out of the middle lane; car following,
//! back to front in every lane, with discharge at the stop bar; gap
//! acceptance for vehicles waiting at stop-controlled stop lines; and queue
//! measurement.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::demand::{ArrivalProcess, ArrivalSchedule, DesignChoice, LaneIntent, Reassignment, ScenarioCode};
use crate::error::{Error, Result};
use crate::metrics::{
    record_traversal, summarize, DelaySamples, DelaySection, LaneMetrics, QueueCounter, QUEUE_ENTER_SPEED,
};
use crate::network::{
    right_turn_conflicts, Control, DesignVariant, Entrance, IntersectionDesign, LaneId, LaneRole, Movement,
};
use crate::signal::{
    indication_for_control, ControllerConfig, ControllerState, ControllerTrace, Indication, LaneIndication,
    SignalState, TraceSummary,
};
use crate::traffic::{
    binding_leader, detector_scan, diverge_attempt, follow_update, gap_accept, time_to_reach, CarFollowingParams,
    DivergeOutcome, GapAcceptanceParams, GapDecision, Leader, SignalAhead, Vehicle, VehicleId, VehicleState,
    DEFAULT_DETECTION_ZONE_FT,
};

/// Blocked branch-bound vehicles halt this far past the diverge line, so
/// that a stopped vehicle is unambiguously at the diverge point.
const DIVERGE_HOLD_FT: f64 = 0.5;
/// A stop-controlled vehicle counts as waiting at the line within this
/// distance of its stop point and below `STOPPED_SPEED`.
const STOP_LINE_SLACK_FT: f64 = 1.0;
const STOPPED_SPEED: f64 = 0.5;

/// Replaces the actuated controller, for tests that need a fixed signal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcedSignal {
    AllGreen,
    /// Every phase red until the given time, then every phase green.
    RedUntil(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub car_following: CarFollowingParams,
    pub gap_acceptance: GapAcceptanceParams,
    pub detection_zone_ft: f64,
    /// Start delay measurement at the scheduled arrival instead of the
    /// moment the vehicle gets onto the approach.
    pub count_pre_entry_delay: bool,
    pub queue_counter_offset_ft: f64,
    pub arrival_process: ArrivalProcess,
    pub trace_controller: bool,
    pub trace_vehicles: bool,
    pub forced_signal: Option<ForcedSignal>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.1,
            horizon: 3600.0,
            warmup: 0.0,
            car_following: CarFollowingParams::default(),
            gap_acceptance: GapAcceptanceParams::default(),
            detection_zone_ft: DEFAULT_DETECTION_ZONE_FT,
            count_pre_entry_delay: false,
            queue_counter_offset_ft: 0.0,
            arrival_process: ArrivalProcess::Poisson,
            trace_controller: false,
            trace_vehicles: false,
            forced_signal: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "warmup {} must lie in [0, horizon)",
                self.warmup
            )));
        }
        if !(self.detection_zone_ft > 0.0) {
            return Err(Error::InvalidConfig("detection zone must be positive".into()));
        }
        if !(self.gap_acceptance.critical_gap > 0.0) {
            return Err(Error::InvalidConfig("critical gap must be positive".into()));
        }
        self.car_following.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: DesignVariant,
    pub reassignment: Reassignment,
    pub code: Option<ScenarioCode>,
    pub seed: u64,
    /// Northwest-approach lanes in design order.
    pub lanes: Vec<LaneMetrics>,
    pub controller: TraceSummary,
    pub arrived: usize,
    pub injected: usize,
    pub discharged: usize,
    pub in_network: usize,
    pub deferred: usize,
    #[serde(skip)]
    pub controller_trace: Option<ControllerTrace>,
    #[serde(skip)]
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

impl RunResult {
    pub fn design(&self) -> DesignChoice {
        DesignChoice::new(self.variant, self.reassignment)
    }

    pub fn lane(&self, role: LaneRole) -> Option<&LaneMetrics> {
        self.lanes.iter().find(|l| l.role == role)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub vehicle: VehicleId,
    pub lane: LaneId,
    pub position: f64,
    pub speed: f64,
}

pub fn write_trajectory_csv<W: Write>(
    design: &IntersectionDesign,
    rows: &[TrajectoryRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "time_s,vehicle,lane,position_ft,speed_fps")?;
    for r in rows {
        let lane = design.lanes.get(r.lane.0).map_or("?", |l| l.name.as_str());
        writeln!(
            out,
            "{:.1},{},{},{:.3},{:.3}",
            r.time, r.vehicle.0, lane, r.position, r.speed
        )?;
    }
    Ok(())
}

/// Vehicle counts at one instant. `arrived` always equals
/// `discharged + in_network + deferred`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub arrived: usize,
    pub injected: usize,
    pub discharged: usize,
    pub in_network: usize,
    pub deferred: usize,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    entrance: Entrance,
    movement: Movement,
    target: LaneId,
    entry: LaneId,
}

/// Per-lane data fixed for a run.
struct LaneInfo {
    entry_offset: f64,
    /// Control by movement index, for movements the lane allows.
    controls: [Option<Control>; 3],
    /// Where branch-bound vehicles leave the middle lane for this lane.
    branch_offset: Option<f64>,
    capacity: usize,
    /// Conflicting (lane, movement) pairs for right turns from this lane.
    conflicts: Vec<(LaneId, Movement)>,
    section: DelaySection,
    measured: bool,
}

fn movement_index(m: Movement) -> usize {
    match m {
        Movement::LeftTurn => 0,
        Movement::Through => 1,
        Movement::RightTurn => 2,
    }
}

/// A single run, stepped explicitly. Use [`run_simulation`] for the whole
/// horizon in one call.
pub struct Simulation<'a> {
    design: &'a IntersectionDesign,
    controller: &'a ControllerConfig,
    config: &'a SimConfig,
    info: Vec<LaneInfo>,
    events: Vec<Pending>,
    next_event: usize,
    lanes: Vec<Vec<Vehicle>>,
    deferred: Vec<VecDeque<Pending>>,
    state: ControllerState,
    indication: Indication,
    step_index: u64,
    next_id: u64,
    counts: Counts,
    delays: Vec<DelaySamples>,
    counters: Vec<Option<QueueCounter>>,
    summary: TraceSummary,
    trace: Option<ControllerTrace>,
    trajectory: Option<Vec<TrajectoryRow>>,
    seed: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        design: &'a IntersectionDesign,
        controller: &'a ControllerConfig,
        schedule: &ArrivalSchedule,
        config: &'a SimConfig,
    ) -> Result<Self> {
        config.validate()?;
        controller.validate()?;
        if schedule.horizon > config.horizon + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "schedule horizon {} s exceeds simulation horizon {} s",
                schedule.horizon, config.horizon
            )));
        }
        let v0 = config.car_following.desired_speed;

        let mut info = Vec::with_capacity(design.lanes.len());
        for lane in &design.lanes {
            let mut controls: [Option<Control>; 3] = Default::default();
            for &m in &lane.allowed_movements {
                controls[movement_index(m)] = Some(design.control_for(lane.id, m)?.clone());
            }
            let mut conflicts = Vec::new();
            if lane.allows(Movement::RightTurn) {
                for &(e, m) in right_turn_conflicts(lane.entrance) {
                    for &c in &design.receiving_lane(e, m)?.lanes {
                        conflicts.push((c, m));
                    }
                }
            }
            let entry_offset = match lane.branches_from {
                Some(src) => design.lane(src)?.upstream_offset_ft,
                None => lane.upstream_offset_ft,
            };
            info.push(LaneInfo {
                entry_offset,
                controls,
                branch_offset: design.branch_offset(lane.id),
                capacity: lane.storage_capacity,
                conflicts,
                section: DelaySection::new(lane.id, entry_offset, v0),
                measured: lane.entrance == Entrance::Nw,
            });
        }

        let mut events = Vec::with_capacity(schedule.events.len());
        for e in &schedule.events {
            let target = resolve_target(design, e.entrance, e.movement, e.intent)?;
            let entry = design.lane(target)?.branches_from.unwrap_or(target);
            events.push(Pending {
                time: e.time,
                entrance: e.entrance,
                movement: e.movement,
                target,
                entry,
            });
        }

        let counters = design
            .lanes
            .iter()
            .map(|l| {
                (l.entrance == Entrance::Nw).then(|| {
                    QueueCounter::new(l.id, config.car_following.jam_spacing)
                        .with_offset(config.queue_counter_offset_ft)
                })
            })
            .collect();

        let state = ControllerState::initial(controller);
        let mut trace = config.trace_controller.then(ControllerTrace::default);
        if let Some(t) = &mut trace {
            t.observe(0.0, &state);
        }
        let n = design.lanes.len();
        Ok(Simulation {
            design,
            controller,
            config,
            info,
            events,
            next_event: 0,
            lanes: vec![Vec::new(); n],
            deferred: vec![VecDeque::new(); n],
            indication: state.indication(),
            state,
            step_index: 0,
            next_id: 0,
            counts: Counts::default(),
            delays: vec![DelaySamples::default(); n],
            counters,
            summary: TraceSummary::default(),
            trace,
            trajectory: config.trace_vehicles.then(Vec::new),
            seed: schedule.seed,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    pub fn counts(&self) -> Counts {
        self.counts
    }

    pub fn indication(&self) -> Indication {
        self.indication
    }

    pub fn controller_state(&self) -> &ControllerState {
        &self.state
    }

    /// Vehicles in a lane, ordered from the stop bar upstream.
    pub fn lane_vehicles(&self, lane: LaneId) -> &[Vehicle] {
        &self.lanes[lane.0]
    }

    pub fn queue_counter(&self, lane: LaneId) -> Option<&QueueCounter> {
        self.counters.get(lane.0).and_then(Option::as_ref)
    }

    pub fn step(&mut self) -> Result<()> {
        self.step_index += 1;
        let now = self.time();
        self.update_signal(now)?;
        self.inject(now);
        self.diverge();
        self.follow(now)?;
        self.accept_gaps()?;
        self.measure(now);
        Ok(())
    }

    fn update_signal(&mut self, now: f64) -> Result<()> {
        self.indication = match self.config.forced_signal {
            Some(ForcedSignal::AllGreen) => Indication::all(SignalState::Green),
            Some(ForcedSignal::RedUntil(until)) => {
                if now < until {
                    Indication::all(SignalState::Red)
                } else {
                    Indication::all(SignalState::Green)
                }
            }
            None => {
                let zone = self.config.detection_zone_ft;
                let near_bar = self
                    .lanes
                    .iter()
                    .flat_map(|l| l.iter().take_while(move |v| v.position <= zone));
                let actuated = detector_scan(self.design, near_bar, zone);
                let event = self.state.step(self.controller, self.config.dt, &actuated)?;
                self.summary.record(event);
                if let Some(trace) = &mut self.trace {
                    trace.observe(now, &self.state);
                }
                self.state.indication()
            }
        };
        Ok(())
    }

    fn inject(&mut self, now: f64) {
        let eps = self.config.dt * 1e-6;
        while let Some(e) = self.events.get(self.next_event) {
            if e.time > now + eps {
                break;
            }
            self.deferred[e.entry.0].push_back(*e);
            self.counts.arrived += 1;
            self.counts.deferred += 1;
            self.next_event += 1;
        }

        let p = &self.config.car_following;
        for lane_idx in 0..self.lanes.len() {
            let Some(front) = self.deferred[lane_idx].front().copied() else {
                continue;
            };
            let entry = self.info[lane_idx].entry_offset;
            let speed = match self.lanes[lane_idx].last() {
                None => p.desired_speed,
                Some(last) => {
                    let gap = entry - last.position;
                    if gap < p.jam_spacing {
                        continue;
                    }
                    if gap >= p.jam_spacing + p.desired_speed * p.time_headway {
                        p.desired_speed
                    } else {
                        last.speed.min(p.desired_speed)
                    }
                }
            };
            self.deferred[lane_idx].pop_front();
            let mut v = Vehicle::new(
                VehicleId(self.next_id),
                front.entrance,
                front.movement,
                front.target,
                front.entry,
                entry,
                speed,
                front.time,
            );
            v.section_entry_time = Some(if self.config.count_pre_entry_delay {
                front.time
            } else {
                now
            });
            self.next_id += 1;
            self.lanes[lane_idx].push(v);
            self.counts.deferred -= 1;
            self.counts.injected += 1;
            self.counts.in_network += 1;
        }
    }

    /// True when vehicles bound for `lane` must wait at the diverge point:
    /// the lane is at storage capacity or its last vehicle has not yet
    /// cleared one jam spacing past the diverge line.
    fn branch_blocked(&self, lane: usize) -> bool {
        let Some(offset) = self.info[lane].branch_offset else {
            return false;
        };
        let occupants = &self.lanes[lane];
        let full = diverge_attempt(occupants.len(), self.info[lane].capacity) == DivergeOutcome::Blocked;
        let tail_close = occupants
            .last()
            .is_some_and(|t| t.position > offset - self.config.car_following.jam_spacing);
        full || tail_close
    }

    fn diverge(&mut self) {
        for src in 0..self.lanes.len() {
            let mut i = 0;
            while i < self.lanes[src].len() {
                let v = &self.lanes[src][i];
                let target = v.target_lane.0;
                if target != src {
                    let offset = self.info[target].branch_offset.expect("branch-bound vehicle");
                    if v.position <= offset && !self.branch_blocked(target) {
                        let mut v = self.lanes[src].remove(i);
                        v.lane = v.target_lane;
                        self.lanes[target].push(v);
                        continue;
                    }
                }
                i += 1;
            }
        }
    }

    /// Signal a vehicle responds to, after applying its yellow decision and
    /// any stop-line clearance. Updates the yellow decision.
    fn resolve_signal(v: &mut Vehicle, indication: LaneIndication, p: &CarFollowingParams) -> LaneIndication {
        match indication {
            LaneIndication::Green => {
                v.yellow_go = None;
                LaneIndication::Green
            }
            LaneIndication::Yellow => {
                let go = *v
                    .yellow_go
                    .get_or_insert_with(|| !crate::traffic::can_stop_comfortably(v.position, v.speed, p));
                if go {
                    LaneIndication::Green
                } else {
                    LaneIndication::Red
                }
            }
            LaneIndication::Red => {
                if v.yellow_go == Some(true) {
                    LaneIndication::Green
                } else {
                    LaneIndication::Red
                }
            }
            LaneIndication::StopControlled => {
                if v.cleared_stop || v.yellow_go == Some(true) {
                    LaneIndication::Green
                } else {
                    LaneIndication::StopControlled
                }
            }
        }
    }

    fn lane_indication(&self, lane: usize, movement: Movement) -> LaneIndication {
        match &self.info[lane].controls[movement_index(movement)] {
            Some(c) => indication_for_control(c, &self.indication),
            None => LaneIndication::Red,
        }
    }

    fn follow(&mut self, now: f64) -> Result<()> {
        let dt = self.config.dt;
        let p = self.config.car_following.clone();
        let blocked: Vec<bool> = (0..self.lanes.len()).map(|l| self.branch_blocked(l)).collect();
        let warmup = self.config.warmup;

        for lane_idx in 0..self.lanes.len() {
            let signals: [LaneIndication; 3] = Movement::ALL.map(|m| self.lane_indication(lane_idx, m));
            let lane = &mut self.lanes[lane_idx];
            for i in (0..lane.len()).rev() {
                let (ahead, rest) = lane.split_at_mut(i);
                let v = &mut rest[0];
                let leader = ahead.last().map(|l| Leader {
                    gap: v.position - l.position,
                    speed: l.speed,
                });
                let target = v.target_lane.0;
                let (leader, signal) = if target != lane_idx {
                    let obstacle = blocked[target].then(|| {
                        let offset = self.info[target].branch_offset.expect("branch-bound vehicle");
                        let hold_at = offset - DIVERGE_HOLD_FT - p.jam_spacing;
                        Leader::standing((v.position - hold_at).max(0.0))
                    });
                    (binding_leader(leader, obstacle, v.speed, &p), None)
                } else {
                    let seen = Self::resolve_signal(v, signals[movement_index(v.movement)], &p);
                    (
                        leader,
                        Some(SignalAhead {
                            indication: seen,
                            distance: v.position,
                        }),
                    )
                };
                let (speed, position) = follow_update(v.speed, v.position, leader, signal, &p, dt);
                v.speed = speed;
                v.position = position;
                if v.state != VehicleState::StoppedAtSign || speed > 0.0 {
                    v.state = if speed < QUEUE_ENTER_SPEED {
                        VehicleState::Queued
                    } else {
                        VehicleState::Approaching
                    };
                }
            }

            let done = lane
                .iter()
                .take_while(|v| v.position <= 0.0 && v.target_lane.0 == lane_idx)
                .count();
            for mut v in lane.drain(..done) {
                v.state = VehicleState::Discharged;
                let info = &self.info[lane_idx];
                if info.measured && now >= warmup {
                    let delay = record_traversal(&v, &info.section, now)?;
                    self.delays[lane_idx].push(delay);
                }
                self.counts.discharged += 1;
                self.counts.in_network -= 1;
            }
        }
        Ok(())
    }

    fn conflicting_arrivals(&self, lane: usize) -> Vec<f64> {
        let p = &self.config.car_following;
        let horizon_ft = p.desired_speed * self.config.gap_acceptance.critical_gap;
        let mut times = Vec::new();
        for &(c, m) in &self.info[lane].conflicts {
            let green = matches!(
                self.lane_indication(c.0, m),
                LaneIndication::Green | LaneIndication::Yellow
            );
            for v in self.lanes[c.0].iter().take_while(|v| v.position < horizon_ft) {
                if v.target_lane != c {
                    continue;
                }
                if green || v.yellow_go == Some(true) || v.cleared_stop {
                    times.push(time_to_reach(v.position, v.speed, p));
                }
            }
        }
        times
    }

    fn accept_gaps(&mut self) -> Result<()> {
        let s0 = self.config.car_following.jam_spacing;
        for lane_idx in 0..self.lanes.len() {
            let Some(head) = self.lanes[lane_idx].first() else {
                continue;
            };
            if head.target_lane.0 != lane_idx || head.cleared_stop || head.yellow_go == Some(true) {
                continue;
            }
            if self.lane_indication(lane_idx, head.movement) != LaneIndication::StopControlled {
                continue;
            }
            if head.position > s0 + STOP_LINE_SLACK_FT || head.speed > STOPPED_SPEED {
                continue;
            }
            let conflicts = self.conflicting_arrivals(lane_idx);
            let head = &mut self.lanes[lane_idx][0];
            head.speed = 0.0;
            head.state = VehicleState::StoppedAtSign;
            if gap_accept(head.speed, &conflicts, &self.config.gap_acceptance)? == GapDecision::Proceed {
                head.cleared_stop = true;
            }
        }
        Ok(())
    }

    fn measure(&mut self, now: f64) {
        for (lane, counter) in self.counters.iter_mut().enumerate() {
            if let Some(c) = counter {
                c.update(&self.lanes[lane]);
            }
        }
        if let Some(rows) = &mut self.trajectory {
            for lane in &self.lanes {
                rows.extend(lane.iter().map(|v| TrajectoryRow {
                    time: now,
                    vehicle: v.id,
                    lane: v.lane,
                    position: v.position,
                    speed: v.speed,
                }));
            }
        }
    }

    /// Runs until the configured horizon.
    pub fn run_to_end(&mut self) -> Result<()> {
        let steps = (self.config.horizon / self.config.dt).round() as u64;
        while self.step_index < steps {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> RunResult {
        let lanes = self
            .design
            .lanes
            .iter()
            .filter(|l| self.info[l.id.0].measured)
            .map(|l| summarize(&l.name, l.role, &self.delays[l.id.0], self.counters[l.id.0].as_ref()))
            .collect();
        RunResult {
            variant: self.design.variant,
            reassignment: Reassignment::None,
            code: None,
            seed: self.seed,
            lanes,
            controller: self.summary,
            arrived: self.counts.arrived,
            injected: self.counts.injected,
            discharged: self.counts.discharged,
            in_network: self.counts.in_network,
            deferred: self.counts.deferred,
            controller_trace: self.trace,
            trajectory: self.trajectory,
        }
    }
}

/// Lane a scheduled arrival discharges from.
fn resolve_target(
    design: &IntersectionDesign,
    entrance: Entrance,
    movement: Movement,
    intent: LaneIntent,
) -> Result<LaneId> {
    let incompatible = || {
        Error::InvalidConfig(format!(
            "arrival {entrance} {movement} with lane intent {} does not fit design {}",
            intent.as_str(),
            design.variant
        ))
    };
    let route = design.receiving_lane(entrance, movement)?;
    let lane = match intent {
        LaneIntent::Auto => {
            if route.lanes.len() != 1 {
                return Err(incompatible());
            }
            route.lanes[0]
        }
        LaneIntent::Left | LaneIntent::Middle | LaneIntent::Short | LaneIntent::Diverge => {
            if entrance != Entrance::Nw {
                return Err(incompatible());
            }
            let role = match intent {
                LaneIntent::Left => LaneRole::Left,
                LaneIntent::Middle => LaneRole::Middle,
                LaneIntent::Short => LaneRole::Short,
                _ => LaneRole::Diverge,
            };
            let lane = design.nw_lane(role).ok_or_else(incompatible)?;
            if !route.lanes.contains(&lane.id) {
                return Err(incompatible());
            }
            lane.id
        }
    };
    Ok(lane)
}

pub fn run_simulation(
    design: &IntersectionDesign,
    controller: &ControllerConfig,
    schedule: &ArrivalSchedule,
    config: &SimConfig,
) -> Result<RunResult> {
    let mut sim = Simulation::new(design, controller, schedule, config)?;
    sim.run_to_end()?;
    Ok(sim.finish())
}
