//! Fully actuated, single-ring, five-phase signal controller.
//!
//! Phases are served in the fixed order 1 → 2 → 3 → 4 → 5 with split phasing,
//! so at most one phase shows a non-red indication at any instant. A green
//! holds for its minimum, is extended while actuations keep arriving within
//! the vehicle extension, and ends at the maximum regardless. Every green is
//! followed by the yellow and red clearance intervals.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{serving_phase, Control, Entrance, IntersectionDesign, LaneId, Movement, PhaseId};

pub const PHASE_COUNT: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase_id: PhaseId,
    pub min_green: f64,
    pub max_green: f64,
    pub yellow: f64,
    pub red_clearance: f64,
    pub vehicle_extension: f64,
    pub minimum_recall: bool,
    pub served_movements: Vec<(Entrance, Movement)>,
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("phase {}: {what}", self.phase_id)));
        if !(self.min_green > 0.0 && self.min_green <= self.max_green) {
            return bad("need 0 < min_green <= max_green");
        }
        if !(self.yellow > 0.0) {
            return bad("yellow must be positive");
        }
        if !(self.red_clearance >= 0.0) {
            return bad("red clearance must be non-negative");
        }
        if !(self.vehicle_extension > 0.0) {
            return bad("vehicle extension must be positive");
        }
        Ok(())
    }

    pub fn serves(&self, entrance: Entrance, movement: Movement) -> bool {
        self.served_movements.contains(&(entrance, movement))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// In cycle order.
    pub phases: Vec<PhaseConfig>,
}

/// Field-observed timing for the five phases: min/max green, 3 s yellow,
/// 1 s red clearance, minimum recall on every phase. Vehicle extension is
/// 2 s on the W Colvin Blvd phases (1, 2) and 3 s on the Twin City Hwy
/// phases (3, 4, 5).
pub fn default_controller() -> ControllerConfig {
    const MIN_GREEN: [f64; PHASE_COUNT] = [5.0, 5.0, 10.0, 20.0, 20.0];
    const MAX_GREEN: [f64; PHASE_COUNT] = [10.0, 10.0, 15.0, 30.0, 30.0];
    const EXTENSION: [f64; PHASE_COUNT] = [2.0, 2.0, 3.0, 3.0, 3.0];

    let phases = (0..PHASE_COUNT)
        .map(|i| {
            let phase_id = PhaseId(i as u8 + 1);
            let served_movements = Entrance::ALL
                .iter()
                .flat_map(|&e| Movement::ALL.iter().map(move |&m| (e, m)))
                .filter(|&(e, m)| serving_phase(e, m) == Some(phase_id))
                .collect();
            PhaseConfig {
                phase_id,
                min_green: MIN_GREEN[i],
                max_green: MAX_GREEN[i],
                yellow: 3.0,
                red_clearance: 1.0,
                vehicle_extension: EXTENSION[i],
                minimum_recall: true,
                served_movements,
            }
        })
        .collect();
    ControllerConfig { phases }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidConfig("controller has no phases".into()));
        }
        let mut seen = BTreeSet::new();
        for phase in &self.phases {
            phase.validate()?;
            if !(1..=PHASE_COUNT as u8).contains(&phase.phase_id.0) {
                return Err(Error::InvalidConfig(format!(
                    "phase id {} outside 1..={PHASE_COUNT}",
                    phase.phase_id
                )));
            }
            if !seen.insert(phase.phase_id) {
                return Err(Error::InvalidConfig(format!("phase {} listed twice", phase.phase_id)));
            }
        }
        let mut served = BTreeSet::new();
        for phase in &self.phases {
            for &mv in &phase.served_movements {
                if !served.insert(mv) {
                    return Err(Error::InvalidConfig(format!(
                        "{} {} served by more than one phase",
                        mv.0, mv.1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn phase(&self, id: PhaseId) -> Option<&PhaseConfig> {
        self.phases.iter().find(|p| p.phase_id == id)
    }

    fn index_of(&self, id: PhaseId) -> usize {
        self.phases
            .iter()
            .position(|p| p.phase_id == id)
            .expect("phase belongs to controller")
    }

    /// Longest possible cycle: every phase at max green plus change intervals.
    pub fn max_cycle(&self) -> f64 {
        self.phases
            .iter()
            .map(|p| p.max_green + p.yellow + p.red_clearance)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Interval {
    Green,
    Yellow,
    RedClear,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interval::Green => "GREEN",
            Interval::Yellow => "YELLOW",
            Interval::RedClear => "RED_CLEAR",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub active_phase: PhaseId,
    pub interval: Interval,
    pub interval_elapsed: f64,
    pub time_since_last_actuation: f64,
    pub pending_calls: BTreeSet<PhaseId>,
}

impl ControllerState {
    /// Start of a run: first phase in cycle order, beginning its green.
    pub fn initial(config: &ControllerConfig) -> Self {
        let mut state = ControllerState {
            active_phase: config.phases[0].phase_id,
            interval: Interval::Green,
            interval_elapsed: 0.0,
            time_since_last_actuation: 0.0,
            pending_calls: BTreeSet::new(),
        };
        state.refresh_recalls(config);
        state
    }

    pub fn indication(&self) -> Indication {
        let mut states = [SignalState::Red; PHASE_COUNT];
        let slot = self.active_phase.0 as usize - 1;
        match self.interval {
            Interval::Green => states[slot] = SignalState::Green,
            Interval::Yellow => states[slot] = SignalState::Yellow,
            Interval::RedClear => {}
        }
        Indication { states }
    }

    fn refresh_recalls(&mut self, config: &ControllerConfig) {
        for phase in &config.phases {
            let is_green = phase.phase_id == self.active_phase && self.interval == Interval::Green;
            if phase.minimum_recall && !is_green {
                self.pending_calls.insert(phase.phase_id);
            }
        }
    }

    /// Advances the controller by `dt` seconds. `actuations` are the phases
    /// whose detectors were occupied during the step.
    pub fn step(&mut self, config: &ControllerConfig, dt: f64, actuations: &BTreeSet<PhaseId>) -> Result<StepEvent> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
        }
        let tol = dt / 2.0;
        let phase = config
            .phase(self.active_phase)
            .ok_or_else(|| Error::InvalidStep(format!("unknown active phase {}", self.active_phase)))?;

        for &p in actuations {
            let is_green = p == self.active_phase && self.interval == Interval::Green;
            if !is_green && config.phase(p).is_some() {
                self.pending_calls.insert(p);
            }
        }

        self.interval_elapsed += dt;
        let mut event = StepEvent::None;
        match self.interval {
            Interval::Green => {
                if actuations.contains(&self.active_phase) {
                    self.time_since_last_actuation = 0.0;
                } else {
                    self.time_since_last_actuation += dt;
                }
                let max_out = self.interval_elapsed >= phase.max_green - tol;
                let gap_out = self.interval_elapsed >= phase.min_green - tol
                    && self.time_since_last_actuation >= phase.vehicle_extension - tol;
                if max_out || gap_out {
                    event = StepEvent::GreenEnded {
                        phase: self.active_phase,
                        duration: self.interval_elapsed,
                        max_out,
                    };
                    self.interval = Interval::Yellow;
                    self.interval_elapsed = 0.0;
                }
            }
            Interval::Yellow => {
                if self.interval_elapsed >= phase.yellow - tol {
                    self.interval = Interval::RedClear;
                    self.interval_elapsed = 0.0;
                    if phase.red_clearance <= tol {
                        event = self.advance(config);
                    }
                }
            }
            Interval::RedClear => {
                if self.interval_elapsed >= phase.red_clearance - tol {
                    event = self.advance(config);
                }
            }
        }
        self.refresh_recalls(config);
        Ok(event)
    }

    /// Moves to the next called phase after the active one in cycle order.
    /// With no calls at all the active phase is re-served.
    fn advance(&mut self, config: &ControllerConfig) -> StepEvent {
        let n = config.phases.len();
        let current = config.index_of(self.active_phase);
        let next = (1..=n)
            .map(|k| config.phases[(current + k) % n].phase_id)
            .find(|p| self.pending_calls.contains(p))
            .unwrap_or(self.active_phase);
        self.pending_calls.remove(&next);
        self.active_phase = next;
        self.interval = Interval::Green;
        self.interval_elapsed = 0.0;
        self.time_since_last_actuation = 0.0;
        StepEvent::GreenStarted { phase: next }
    }
}

/// Transition that happened during a controller step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepEvent {
    None,
    GreenStarted {
        phase: PhaseId,
    },
    GreenEnded {
        phase: PhaseId,
        duration: f64,
        max_out: bool,
    },
}

pub fn controller_step(
    config: &ControllerConfig,
    state: &ControllerState,
    dt: f64,
    actuations: &BTreeSet<PhaseId>,
) -> Result<(ControllerState, Indication)> {
    let mut next = state.clone();
    next.step(config, dt, actuations)?;
    let indication = next.indication();
    Ok((next, indication))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalState {
    Green,
    Yellow,
    Red,
}

/// Signal state of every phase at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Indication {
    states: [SignalState; PHASE_COUNT],
}

impl Indication {
    pub fn all(state: SignalState) -> Self {
        Indication {
            states: [state; PHASE_COUNT],
        }
    }

    pub fn phase_state(&self, phase: PhaseId) -> SignalState {
        self.states
            .get((phase.0 as usize).wrapping_sub(1))
            .copied()
            .unwrap_or(SignalState::Red)
    }

    pub fn non_red_phases(&self) -> impl Iterator<Item = PhaseId> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != SignalState::Red)
            .map(|(i, _)| PhaseId(i as u8 + 1))
    }
}

/// What a driver in a given lane sees for a given movement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LaneIndication {
    Green,
    Yellow,
    Red,
    StopControlled,
}

pub fn indication_for(
    design: &IntersectionDesign,
    lane: LaneId,
    movement: Movement,
    indication: &Indication,
) -> Result<LaneIndication> {
    let control = design.control_for(lane, movement)?;
    Ok(indication_for_control(control, indication))
}

pub(crate) fn indication_for_control(control: &Control, indication: &Indication) -> LaneIndication {
    match control {
        Control::StopSign { .. } => LaneIndication::StopControlled,
        Control::Signal { phase, right_on_red } => match indication.phase_state(*phase) {
            SignalState::Green => LaneIndication::Green,
            SignalState::Yellow => LaneIndication::Yellow,
            SignalState::Red if *right_on_red => LaneIndication::StopControlled,
            SignalState::Red => LaneIndication::Red,
        },
    }
}

/// Interval transitions of one run, for timing checks and CSV export.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ControllerTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub phase: PhaseId,
    pub interval: Interval,
}

impl ControllerTrace {
    /// Appends a row when the (phase, interval) pair differs from the last one.
    pub fn observe(&mut self, time: f64, state: &ControllerState) {
        let changed = self
            .rows
            .last()
            .is_none_or(|r| r.phase != state.active_phase || r.interval != state.interval);
        if changed {
            self.rows.push(TraceRow {
                time,
                phase: state.active_phase,
                interval: state.interval,
            });
        }
    }

    /// Green durations per occurrence, in order, for greens that ended.
    pub fn green_durations(&self) -> Vec<(PhaseId, f64)> {
        self.rows
            .windows(2)
            .filter(|w| w[0].interval == Interval::Green)
            .map(|w| (w[0].phase, w[1].time - w[0].time))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,phase,interval")?;
        for row in &self.rows {
            writeln!(out, "{:.3},{},{}", row.time, row.phase, row.interval)?;
        }
        Ok(())
    }
}

/// Per-phase counts kept in every run result.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub greens: [u32; PHASE_COUNT],
    pub max_outs: [u32; PHASE_COUNT],
    pub total_green_s: [f64; PHASE_COUNT],
}

impl TraceSummary {
    pub fn record(&mut self, event: StepEvent) {
        if let StepEvent::GreenEnded {
            phase,
            duration,
            max_out,
        } = event
        {
            let i = phase.0 as usize - 1;
            self.greens[i] += 1;
            self.total_green_s[i] += duration;
            if max_out {
                self.max_outs[i] += 1;
            }
        }
    }

    pub fn mean_green(&self, phase: PhaseId) -> f64 {
        let i = phase.0 as usize - 1;
        if self.greens[i] == 0 {
            0.0
        } else {
            self.total_green_s[i] / self.greens[i] as f64
        }
    }
}
