//! Intersection geometry as a lane graph, and the four design variants.
//!
//! Every length is in feet and every position is measured upstream from the
//! stop bar, so a lane segment covers `[upstream_offset - length, upstream_offset]`.
//! The northwest approach has two full-length lanes (left and middle). The
//! short lane, and in the diverge variant the diverge lane, branch off the
//! middle lane at the diverge offset and run to the stop line.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_JAM_SPACING_FT: f64 = 22.4;
pub const BASELINE_SHORT_LANE_FT: f64 = 212.24;
pub const EXTENDED_SHORT_LANE_FT: f64 = 313.71;
pub const DEFAULT_APPROACH_LENGTH_FT: f64 = 1500.0;

/// Name of the stop sign at the end of the added diverge lane.
pub const DIVERGE_STOP_SIGN: &str = "B";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Entrance {
    Nw,
    Ne,
    Sw,
    Se,
}

impl Entrance {
    pub const ALL: [Entrance; 4] = [Entrance::Nw, Entrance::Ne, Entrance::Sw, Entrance::Se];

    pub fn as_str(self) -> &'static str {
        match self {
            Entrance::Nw => "NW",
            Entrance::Ne => "NE",
            Entrance::Sw => "SW",
            Entrance::Se => "SE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NW" => Some(Entrance::Nw),
            "NE" => Some(Entrance::Ne),
            "SW" => Some(Entrance::Sw),
            "SE" => Some(Entrance::Se),
            _ => None,
        }
    }
}

impl fmt::Display for Entrance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Movement {
    LeftTurn,
    Through,
    RightTurn,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::LeftTurn, Movement::Through, Movement::RightTurn];

    pub fn as_str(self) -> &'static str {
        match self {
            Movement::LeftTurn => "LEFT_TURN",
            Movement::Through => "THROUGH",
            Movement::RightTurn => "RIGHT_TURN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LEFT_TURN" | "LEFT" => Some(Movement::LeftTurn),
            "THROUGH" => Some(Movement::Through),
            "RIGHT_TURN" | "RIGHT" => Some(Movement::RightTurn),
            _ => None,
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LaneRole {
    Left,
    Middle,
    Short,
    Diverge,
    Generic,
}

impl LaneRole {
    pub fn as_str(self) -> &'static str {
        match self {
            LaneRole::Left => "left",
            LaneRole::Middle => "middle",
            LaneRole::Short => "short",
            LaneRole::Diverge => "diverge",
            LaneRole::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Some(LaneRole::Left),
            "middle" | "mid" => Some(LaneRole::Middle),
            "short" => Some(LaneRole::Short),
            "diverge" => Some(LaneRole::Diverge),
            "generic" => Some(LaneRole::Generic),
            _ => None,
        }
    }
}

impl fmt::Display for LaneRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DesignVariant {
    Baseline,
    ExtendedShort,
    RightTurnOnly,
    AddedDiverge,
}

impl DesignVariant {
    pub const ALL: [DesignVariant; 4] = [
        DesignVariant::Baseline,
        DesignVariant::ExtendedShort,
        DesignVariant::RightTurnOnly,
        DesignVariant::AddedDiverge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignVariant::Baseline => "BASELINE",
            DesignVariant::ExtendedShort => "EXTENDED_SHORT",
            DesignVariant::RightTurnOnly => "RIGHT_TURN_ONLY",
            DesignVariant::AddedDiverge => "ADDED_DIVERGE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        DesignVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for DesignVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Signal phase number, 1 through 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseId(pub u8);

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a lane inside its [`IntersectionDesign`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub usize);

/// What governs a movement at the stop line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Control {
    /// Served by a signal phase; with `right_on_red` the movement may turn
    /// after a full stop while its phase is red.
    Signal {
        phase: PhaseId,
        right_on_red: bool,
    },
    StopSign {
        sign: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneSegment {
    pub id: LaneId,
    pub name: String,
    pub entrance: Entrance,
    pub role: LaneRole,
    pub length_ft: f64,
    pub upstream_offset_ft: f64,
    pub storage_capacity: usize,
    pub allowed_movements: Vec<Movement>,
    /// Lane that vehicles travel in before transferring into this one.
    pub branches_from: Option<LaneId>,
}

impl LaneSegment {
    pub fn allows(&self, movement: Movement) -> bool {
        self.allowed_movements.contains(&movement)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovementRoute {
    pub entrance: Entrance,
    pub movement: Movement,
    pub lanes: Vec<LaneId>,
    pub control: Control,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionDesign {
    pub variant: DesignVariant,
    pub jam_spacing_ft: f64,
    pub approach_length_ft: f64,
    /// Distance from the stop bar at which the short (and diverge) lane begins.
    pub diverge_offset_ft: f64,
    pub lanes: Vec<LaneSegment>,
    pub movement_map: Vec<MovementRoute>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryParams {
    pub approach_length_ft: f64,
    pub jam_spacing_ft: f64,
    pub short_lane_ft: f64,
    pub extended_short_lane_ft: f64,
    pub diverge_lane_ft: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            approach_length_ft: DEFAULT_APPROACH_LENGTH_FT,
            jam_spacing_ft: DEFAULT_JAM_SPACING_FT,
            short_lane_ft: BASELINE_SHORT_LANE_FT,
            extended_short_lane_ft: EXTENDED_SHORT_LANE_FT,
            diverge_lane_ft: BASELINE_SHORT_LANE_FT,
        }
    }
}

pub fn storage_capacity(length_ft: f64, jam_spacing_ft: f64) -> Result<usize> {
    if !(length_ft > 0.0 && length_ft.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "length must be positive, got {length_ft}"
        )));
    }
    if !(jam_spacing_ft > 0.0 && jam_spacing_ft.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "jam spacing must be positive, got {jam_spacing_ft}"
        )));
    }
    Ok((length_ft / jam_spacing_ft).floor() as usize)
}

/// Movements that cross the path of a right turn from `entrance`. These are
/// the streams entering the same outbound leg.
pub fn right_turn_conflicts(entrance: Entrance) -> &'static [(Entrance, Movement)] {
    match entrance {
        Entrance::Nw => &[(Entrance::Ne, Movement::Through), (Entrance::Se, Movement::LeftTurn)],
        Entrance::Ne => &[(Entrance::Se, Movement::Through), (Entrance::Sw, Movement::LeftTurn)],
        Entrance::Sw => &[(Entrance::Nw, Movement::Through), (Entrance::Ne, Movement::LeftTurn)],
        Entrance::Se => &[(Entrance::Sw, Movement::Through)],
    }
}

/// Phase serving a signal-controlled movement.
pub fn serving_phase(entrance: Entrance, movement: Movement) -> Option<PhaseId> {
    use Entrance::*;
    use Movement::*;
    let phase = match (entrance, movement) {
        (Ne, _) => 1,
        (Sw, _) => 2,
        (Se, LeftTurn) => 3,
        (Se, _) => 4,
        (Nw, LeftTurn) => return None,
        (Nw, _) => 5,
    };
    Some(PhaseId(phase))
}

pub fn build_design(variant: DesignVariant, params: &GeometryParams) -> Result<IntersectionDesign> {
    let jam = params.jam_spacing_ft;
    storage_capacity(params.approach_length_ft, jam)?;

    let short_len = match variant {
        DesignVariant::ExtendedShort => params.extended_short_lane_ft,
        _ => params.short_lane_ft,
    };
    storage_capacity(short_len, jam)?;
    if short_len > params.approach_length_ft {
        return Err(Error::InvalidGeometry(format!(
            "diverge offset {short_len} ft exceeds approach length {} ft",
            params.approach_length_ft
        )));
    }
    if variant == DesignVariant::AddedDiverge {
        storage_capacity(params.diverge_lane_ft, jam)?;
        if params.diverge_lane_ft > params.approach_length_ft {
            return Err(Error::InvalidGeometry(format!(
                "diverge lane {} ft exceeds approach length {} ft",
                params.diverge_lane_ft, params.approach_length_ft
            )));
        }
    }

    let mut lanes: Vec<LaneSegment> = Vec::new();
    let mut push = |name: &str,
                    entrance: Entrance,
                    role: LaneRole,
                    length: f64,
                    allowed: Vec<Movement>,
                    branches_from: Option<LaneId>|
     -> Result<LaneId> {
        let id = LaneId(lanes.len());
        lanes.push(LaneSegment {
            id,
            name: name.to_string(),
            entrance,
            role,
            length_ft: length,
            upstream_offset_ft: length,
            storage_capacity: storage_capacity(length, jam)?,
            allowed_movements: allowed,
            branches_from,
        });
        Ok(id)
    };

    use Movement::*;
    let approach = params.approach_length_ft;
    let nw_left = push("nw_left", Entrance::Nw, LaneRole::Left, approach, vec![Through], None)?;
    let nw_middle = push(
        "nw_middle",
        Entrance::Nw,
        LaneRole::Middle,
        approach,
        vec![Through],
        None,
    )?;
    let short_moves = match variant {
        DesignVariant::Baseline | DesignVariant::ExtendedShort => vec![Through, RightTurn],
        DesignVariant::RightTurnOnly => vec![RightTurn],
        DesignVariant::AddedDiverge => vec![Through],
    };
    let nw_short = push(
        "nw_short",
        Entrance::Nw,
        LaneRole::Short,
        short_len,
        short_moves,
        Some(nw_middle),
    )?;
    let nw_diverge = if variant == DesignVariant::AddedDiverge {
        Some(push(
            "nw_diverge",
            Entrance::Nw,
            LaneRole::Diverge,
            params.diverge_lane_ft,
            vec![RightTurn],
            Some(nw_middle),
        )?)
    } else {
        None
    };

    let mut cross_lanes = Vec::new();
    for entrance in [Entrance::Ne, Entrance::Sw, Entrance::Se] {
        for movement in Movement::ALL {
            let suffix = match movement {
                LeftTurn => "left",
                Through => "through",
                RightTurn => "right",
            };
            let name = format!("{}_{suffix}", entrance.as_str().to_ascii_lowercase());
            let id = push(&name, entrance, LaneRole::Generic, approach, vec![movement], None)?;
            cross_lanes.push((entrance, movement, id));
        }
    }

    let signal = |entrance, movement, right_on_red| Control::Signal {
        phase: serving_phase(entrance, movement).expect("signal-controlled movement"),
        right_on_red,
    };

    let mut movement_map = Vec::new();
    let nw_through_lanes = match variant {
        DesignVariant::RightTurnOnly => vec![nw_left, nw_middle],
        _ => vec![nw_left, nw_middle, nw_short],
    };
    movement_map.push(MovementRoute {
        entrance: Entrance::Nw,
        movement: Through,
        lanes: nw_through_lanes,
        control: signal(Entrance::Nw, Through, false),
    });
    movement_map.push(match nw_diverge {
        Some(diverge) => MovementRoute {
            entrance: Entrance::Nw,
            movement: RightTurn,
            lanes: vec![diverge],
            control: Control::StopSign {
                sign: DIVERGE_STOP_SIGN.to_string(),
            },
        },
        None => MovementRoute {
            entrance: Entrance::Nw,
            movement: RightTurn,
            lanes: vec![nw_short],
            control: signal(Entrance::Nw, RightTurn, true),
        },
    });
    for (entrance, movement, id) in cross_lanes {
        movement_map.push(MovementRoute {
            entrance,
            movement,
            lanes: vec![id],
            control: signal(entrance, movement, movement == RightTurn),
        });
    }

    let design = IntersectionDesign {
        variant,
        jam_spacing_ft: jam,
        approach_length_ft: approach,
        diverge_offset_ft: short_len,
        lanes,
        movement_map,
    };
    design.validate()?;
    Ok(design)
}

impl IntersectionDesign {
    pub fn lane(&self, id: LaneId) -> Result<&LaneSegment> {
        self.lanes
            .get(id.0)
            .ok_or_else(|| Error::UnknownLane(format!("#{}", id.0)))
    }

    pub fn lane_by_name(&self, name: &str) -> Result<&LaneSegment> {
        self.lanes
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLane(name.to_string()))
    }

    /// The northwest-approach lane with the given role, if this design has one.
    pub fn nw_lane(&self, role: LaneRole) -> Option<&LaneSegment> {
        self.lanes.iter().find(|l| l.entrance == Entrance::Nw && l.role == role)
    }

    /// Lane for a movement from a non-northwest entrance.
    pub fn cross_lane(&self, entrance: Entrance, movement: Movement) -> Option<&LaneSegment> {
        self.lanes
            .iter()
            .find(|l| l.entrance == entrance && l.role == LaneRole::Generic && l.allows(movement))
    }

    pub fn receiving_lane(&self, entrance: Entrance, movement: Movement) -> Result<&MovementRoute> {
        self.movement_map
            .iter()
            .find(|r| r.entrance == entrance && r.movement == movement)
            .ok_or(Error::IllegalMovement { entrance, movement })
    }

    /// Control for `movement` when made from `lane`.
    pub fn control_for(&self, lane: LaneId, movement: Movement) -> Result<&Control> {
        let seg = self.lane(lane)?;
        let route = self.receiving_lane(seg.entrance, movement)?;
        if !route.lanes.contains(&lane) {
            return Err(Error::IllegalMovement {
                entrance: seg.entrance,
                movement,
            });
        }
        Ok(&route.control)
    }

    /// Stop-bar distance at which vehicles bound for `lane` leave the
    /// middle lane, for lanes that branch off it.
    pub fn branch_offset(&self, lane: LaneId) -> Option<f64> {
        let seg = self.lanes.get(lane.0)?;
        seg.branches_from.map(|_| seg.upstream_offset_ft)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.id.0 != i {
                return Err(Error::InvalidGeometry(format!(
                    "lane {} stored at index {i}",
                    lane.name
                )));
            }
            let cap = storage_capacity(lane.length_ft, self.jam_spacing_ft)?;
            if cap != lane.storage_capacity {
                return Err(Error::InvalidGeometry(format!(
                    "lane {} capacity {} != floor(length / jam spacing) = {cap}",
                    lane.name, lane.storage_capacity
                )));
            }
            if lane.upstream_offset_ft > self.approach_length_ft {
                return Err(Error::InvalidGeometry(format!(
                    "lane {} starts {} ft upstream, beyond the {} ft approach",
                    lane.name, lane.upstream_offset_ft, self.approach_length_ft
                )));
            }
            if matches!(lane.role, LaneRole::Short | LaneRole::Diverge) && lane.upstream_offset_ft != lane.length_ft {
                return Err(Error::InvalidGeometry(format!(
                    "{} lane {} must end at the stop line",
                    lane.role, lane.name
                )));
            }
        }
        for route in &self.movement_map {
            if route.entrance == Entrance::Nw && route.movement == Movement::LeftTurn {
                return Err(Error::IllegalMovement {
                    entrance: route.entrance,
                    movement: route.movement,
                });
            }
            if route.lanes.is_empty() {
                return Err(Error::InvalidGeometry(format!(
                    "{} {} has no receiving lane",
                    route.entrance, route.movement
                )));
            }
            for id in &route.lanes {
                let lane = self.lane(*id)?;
                if !lane.allows(route.movement) {
                    return Err(Error::InvalidGeometry(format!(
                        "{} {} routed to lane {} which does not allow it",
                        route.entrance, route.movement, lane.name
                    )));
                }
            }
        }
        for entrance in Entrance::ALL {
            for movement in Movement::ALL {
                if entrance == Entrance::Nw && movement == Movement::LeftTurn {
                    continue;
                }
                self.receiving_lane(entrance, movement)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let design: IntersectionDesign = serde_json::from_str(s)?;
        design.validate()?;
        Ok(design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(variant: DesignVariant) -> IntersectionDesign {
        build_design(variant, &GeometryParams::default()).unwrap()
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(storage_capacity(212.24, 22.4).unwrap(), 9);
        assert_eq!(storage_capacity(313.71, 22.4).unwrap(), 14);
        assert_eq!(storage_capacity(22.4, 22.4).unwrap(), 1);
    }

    #[test]
    fn capacity_rejects_non_positive() {
        assert!(matches!(storage_capacity(0.0, 22.4), Err(Error::InvalidGeometry(_))));
        assert!(matches!(storage_capacity(100.0, -1.0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(
            storage_capacity(f64::NAN, 22.4),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn baseline_short_lane() {
        let d = design(DesignVariant::Baseline);
        let short = d.nw_lane(LaneRole::Short).unwrap();
        assert_eq!(short.length_ft, 212.24);
        assert_eq!(short.upstream_offset_ft, short.length_ft);
        assert_eq!(short.storage_capacity, 9);
        assert_eq!(short.allowed_movements, vec![Movement::Through, Movement::RightTurn]);
        assert_eq!(d.diverge_offset_ft, 212.24);
        assert!(d.nw_lane(LaneRole::Diverge).is_none());
    }

    #[test]
    fn extended_short_lane() {
        let d = design(DesignVariant::ExtendedShort);
        let short = d.nw_lane(LaneRole::Short).unwrap();
        assert_eq!(d.diverge_offset_ft, 313.71);
        assert_eq!(short.storage_capacity, 14);
    }

    #[test]
    fn right_turn_only_lane() {
        let d = design(DesignVariant::RightTurnOnly);
        let short = d.nw_lane(LaneRole::Short).unwrap();
        assert_eq!(short.allowed_movements, vec![Movement::RightTurn]);
        assert_eq!(d.diverge_offset_ft, 212.24);
        let through = d.receiving_lane(Entrance::Nw, Movement::Through).unwrap();
        assert!(!through.lanes.contains(&short.id));
    }

    #[test]
    fn added_diverge_routes_right_turns_to_stop_sign() {
        let d = design(DesignVariant::AddedDiverge);
        let diverge = d.nw_lane(LaneRole::Diverge).unwrap();
        let route = d.receiving_lane(Entrance::Nw, Movement::RightTurn).unwrap();
        assert_eq!(route.lanes, vec![diverge.id]);
        assert_eq!(route.control, Control::StopSign { sign: "B".to_string() });
        assert_eq!(diverge.upstream_offset_ft, 212.24);
        assert_eq!(diverge.branches_from, d.nw_lane(LaneRole::Middle).map(|l| l.id));
    }

    #[test]
    fn baseline_right_turn_is_phase_five_with_rtor() {
        let d = design(DesignVariant::Baseline);
        let route = d.receiving_lane(Entrance::Nw, Movement::RightTurn).unwrap();
        assert_eq!(route.lanes, vec![d.nw_lane(LaneRole::Short).unwrap().id]);
        assert_eq!(
            route.control,
            Control::Signal {
                phase: PhaseId(5),
                right_on_red: true
            }
        );
    }

    #[test]
    fn northwest_left_turn_is_illegal() {
        for variant in DesignVariant::ALL {
            let d = design(variant);
            assert!(matches!(
                d.receiving_lane(Entrance::Nw, Movement::LeftTurn),
                Err(Error::IllegalMovement { .. })
            ));
        }
    }

    #[test]
    fn diverge_offset_beyond_approach_is_rejected() {
        let params = GeometryParams {
            approach_length_ft: 200.0,
            ..GeometryParams::default()
        };
        assert!(matches!(
            build_design(DesignVariant::Baseline, &params),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn every_route_is_controlled() {
        for variant in DesignVariant::ALL {
            let d = design(variant);
            for route in &d.movement_map {
                for lane in &route.lanes {
                    assert!(d.control_for(*lane, route.movement).is_ok());
                }
            }
        }
    }

    #[test]
    fn build_is_pure() {
        for variant in DesignVariant::ALL {
            assert_eq!(design(variant).to_json().unwrap(), design(variant).to_json().unwrap());
        }
    }

    #[test]
    fn json_round_trip() {
        let d = design(DesignVariant::AddedDiverge);
        let back = IntersectionDesign::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
