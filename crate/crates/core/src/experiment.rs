//! Scenario sweeps over designs, codes and seeds, design comparison, and
//! CSV reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{
    generate_schedule, retarget_schedule, substream_seed, ArrivalSchedule, DemandSpec, DesignChoice, Reassignment,
    ScenarioCode,
};
use crate::engine::{run_simulation, RunResult, SimConfig};
use crate::error::{Error, Result};
use crate::network::{build_design, DesignVariant, GeometryParams, IntersectionDesign, LaneRole};
use crate::signal::{default_controller, ControllerConfig};

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

/// Sweep description, readable from JSON. Every field is optional.
///
/// ```json
/// {
///   "designs": ["baseline", "extended", "rto-i", "diverge"],
///   "codes": ["111", "112"],
///   "seeds": [1, 2, 3],
///   "controlled": true,
///   "geometry": { "approach_length_ft": 1500.0 },
///   "sim": { "dt": 0.1, "horizon": 3600.0, "count_pre_entry_delay": false }
/// }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(with = "design_names")]
    pub designs: Vec<DesignChoice>,
    pub codes: Vec<ScenarioCode>,
    pub seeds: Vec<u64>,
    /// Replay one arrival stream per (code, seed) on every design.
    pub controlled: bool,
    pub geometry: GeometryParams,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            designs: vec![
                DesignChoice::BASELINE,
                DesignChoice::EXTENDED,
                DesignChoice::RTO_I,
                DesignChoice::DIVERGE,
            ],
            codes: ScenarioCode::all(),
            seeds: DEFAULT_SEEDS.to_vec(),
            controlled: false,
            geometry: GeometryParams::default(),
            controller: default_controller(),
            sim: SimConfig::default(),
        }
    }
}

mod design_names {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::demand::DesignChoice;

    pub fn serialize<S: Serializer>(designs: &[DesignChoice], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(designs.iter().map(|d| d.cli_name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DesignChoice>, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names
            .iter()
            .map(|n| DesignChoice::from_cli_name(n).ok_or_else(|| D::Error::custom(format!("unknown design `{n}`"))))
            .collect()
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.designs.is_empty() || self.codes.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "designs, codes and seeds must be non-empty".into(),
            ));
        }
        for d in &self.designs {
            d.validate()?;
            build_design(d.variant, &self.geometry)?.validate()?;
        }
        self.controller.validate()?;
        self.sim.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn run_count(&self) -> usize {
        self.designs.len() * self.codes.len() * self.seeds.len()
    }
}

/// Seed for a design's own arrival stream when schedules are not shared.
fn design_seed(seed: u64, choice: DesignChoice) -> u64 {
    let variant = DesignVariant::ALL
        .iter()
        .position(|v| *v == choice.variant)
        .unwrap_or(0) as u64;
    let reassignment = match choice.reassignment {
        Reassignment::None => 0,
        Reassignment::ScenarioI => 1,
        Reassignment::ScenarioIi => 2,
    };
    substream_seed(seed, 1000 + 10 * variant + reassignment)
}

/// Arrival schedule for one run. Controlled schedules are the observed-split
/// schedule for (code, seed) retargeted to the design; uncontrolled ones
/// are drawn from the design's own demand with a design-specific seed.
pub fn schedule_for(
    choice: DesignChoice,
    code: ScenarioCode,
    seed: u64,
    controlled: bool,
    sim: &SimConfig,
) -> Result<ArrivalSchedule> {
    if controlled {
        let base = shared_schedule(code, seed, sim)?;
        retarget_schedule(&base, choice)
    } else {
        let spec = DemandSpec::for_design(choice, code)?;
        generate_schedule(&spec, design_seed(seed, choice), sim.horizon, sim.arrival_process)
    }
}

fn shared_schedule(code: ScenarioCode, seed: u64, sim: &SimConfig) -> Result<ArrivalSchedule> {
    let spec = DemandSpec::for_design(DesignChoice::BASELINE, code)?;
    generate_schedule(&spec, seed, sim.horizon, sim.arrival_process)
}

fn execute(
    design: &IntersectionDesign,
    choice: DesignChoice,
    code: ScenarioCode,
    seed: u64,
    schedule: &ArrivalSchedule,
    spec: &SweepSpec,
) -> Result<RunResult> {
    let mut r = run_simulation(design, &spec.controller, schedule, &spec.sim)?;
    r.reassignment = choice.reassignment;
    r.code = Some(code);
    r.seed = seed;
    Ok(r)
}

fn with_coordinates(e: Error, choice: DesignChoice, code: ScenarioCode, seed: u64) -> Error {
    Error::Run {
        design: choice.cli_name().to_string(),
        code: code.to_string(),
        seed,
        source: Box::new(e),
    }
}

/// One run with the spec's geometry, controller and simulation settings.
pub fn run_one(spec: &SweepSpec, choice: DesignChoice, code: ScenarioCode, seed: u64) -> Result<RunResult> {
    choice.validate()?;
    let design = build_design(choice.variant, &spec.geometry)?;
    let schedule = schedule_for(choice, code, seed, spec.controlled, &spec.sim)?;
    execute(&design, choice, code, seed, &schedule, spec).map_err(|e| with_coordinates(e, choice, code, seed))
}

/// Runs every (design, code, seed) combination, in parallel on `jobs`
/// threads (all cores when `None`). Results come back in canonical order.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| sweep_inner(spec))
}

fn sweep_inner(spec: &SweepSpec) -> Result<Vec<RunResult>> {
    let designs = spec
        .designs
        .iter()
        .map(|d| build_design(d.variant, &spec.geometry))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(ScenarioCode, u64)> = spec
        .codes
        .iter()
        .flat_map(|&c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let shared: BTreeMap<(ScenarioCode, u64), ArrivalSchedule> = if spec.controlled {
        pairs
            .par_iter()
            .map(|&(c, s)| shared_schedule(c, s, &spec.sim).map(|sch| ((c, s), sch)))
            .collect::<Result<_>>()?
    } else {
        BTreeMap::new()
    };

    let jobs: Vec<(usize, ScenarioCode, u64)> = (0..spec.designs.len())
        .flat_map(|d| pairs.iter().map(move |&(c, s)| (d, c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(d, code, seed)| {
            let choice = spec.designs[d];
            let schedule = match shared.get(&(code, seed)) {
                Some(base) => retarget_schedule(base, choice),
                None => schedule_for(choice, code, seed, false, &spec.sim),
            };
            schedule
                .and_then(|s| execute(&designs[d], choice, code, seed, &s, spec))
                .map_err(|e| with_coordinates(e, choice, code, seed))
        })
        .collect()
}

/// One CSV row: a northwest lane of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub design: DesignVariant,
    pub reassignment: Reassignment,
    pub code: ScenarioCode,
    pub seed: u64,
    pub lane: LaneRole,
    pub n_vehicles: usize,
    pub mean_delay_s: f64,
    pub max_queue_ft: f64,
}

impl ResultRecord {
    pub fn choice(&self) -> DesignChoice {
        DesignChoice::new(self.design, self.reassignment)
    }
}

pub fn records(results: &[RunResult]) -> Vec<ResultRecord> {
    results
        .iter()
        .flat_map(|r| {
            r.lanes.iter().map(move |l| ResultRecord {
                design: r.variant,
                reassignment: r.reassignment,
                code: r.code.unwrap_or_else(|| ScenarioCode::all()[0]),
                seed: r.seed,
                lane: l.role,
                n_vehicles: l.n_vehicles,
                mean_delay_s: l.mean_delay_s,
                max_queue_ft: l.max_queue_ft,
            })
        })
        .collect()
}

pub const RESULT_HEADER: &str = "design,reassignment,code,seed,lane,n_vehicles,mean_delay_s,max_queue_ft";

pub fn write_records<W: Write>(rows: &[ResultRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{:.3}",
            r.design, r.reassignment, r.code, r.seed, r.lane, r.n_vehicles, r.mean_delay_s, r.max_queue_ft
        )?;
    }
    out.flush()
}

pub fn emit_csv(rows: &[ResultRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_records(rows, BufWriter::new(file)).map_err(|e| Error::file(path, e))
}

#[derive(Deserialize)]
struct RawRecord {
    design: String,
    reassignment: String,
    code: ScenarioCode,
    seed: u64,
    lane: String,
    n_vehicles: usize,
    mean_delay_s: f64,
    max_queue_ft: f64,
}

pub fn parse_records<R: std::io::Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize::<RawRecord>() {
        let raw = row?;
        let bad = |what: &str, v: &str| Error::InvalidConfig(format!("unknown {what} `{v}` in results file"));
        out.push(ResultRecord {
            design: DesignVariant::parse(&raw.design).ok_or_else(|| bad("design", &raw.design))?,
            reassignment: Reassignment::parse(&raw.reassignment)
                .ok_or_else(|| bad("reassignment", &raw.reassignment))?,
            code: raw.code,
            seed: raw.seed,
            lane: LaneRole::parse(&raw.lane).ok_or_else(|| bad("lane", &raw.lane))?,
            n_vehicles: raw.n_vehicles,
            mean_delay_s: raw.mean_delay_s,
            max_queue_ft: raw.max_queue_ft,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_records(file)
}

/// Which baseline lane a variant lane is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LanePair {
    pub baseline: LaneRole,
    pub variant: LaneRole,
}

impl LanePair {
    pub const fn same(lane: LaneRole) -> Self {
        LanePair {
            baseline: lane,
            variant: lane,
        }
    }
}

/// Per-code comparison, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub code: ScenarioCode,
    pub baseline_lane: LaneRole,
    pub variant_lane: LaneRole,
    pub baseline_delay_s: f64,
    pub variant_delay_s: f64,
    /// Variant minus baseline.
    pub delta_s: f64,
    pub baseline_max_queue_ft: f64,
    pub variant_max_queue_ft: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignSummary {
    pub pair: LanePair,
    pub codes: usize,
    pub decreased: usize,
    pub increased: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<SignSummary>,
}

impl Comparison {
    pub fn rows_for(&self, pair: LanePair) -> impl Iterator<Item = &ComparisonRow> {
        self.rows
            .iter()
            .filter(move |r| r.baseline_lane == pair.baseline && r.variant_lane == pair.variant)
    }

    pub fn summary_for(&self, pair: LanePair) -> Option<&SignSummary> {
        self.summary.iter().find(|s| s.pair == pair)
    }
}

struct Aggregate {
    delay: f64,
    queue: f64,
}

/// Unweighted per-code means over seeds for one lane, keyed by code, with
/// the set of (code, seed) pairs seen.
fn per_code(
    rows: &[ResultRecord],
    lane: LaneRole,
) -> (BTreeMap<ScenarioCode, Aggregate>, BTreeSet<(ScenarioCode, u64)>) {
    let mut sums: BTreeMap<ScenarioCode, (f64, f64, usize)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in rows.iter().filter(|r| r.lane == lane) {
        seen.insert((r.code, r.seed));
        let e = sums.entry(r.code).or_insert((0.0, 0.0, 0));
        e.0 += r.mean_delay_s;
        e.1 += r.max_queue_ft;
        e.2 += 1;
    }
    let agg = sums
        .into_iter()
        .map(|(c, (d, q, n))| {
            (
                c,
                Aggregate {
                    delay: d / n as f64,
                    queue: q / n as f64,
                },
            )
        })
        .collect();
    (agg, seen)
}

fn single_design(rows: &[ResultRecord], side: &str) -> Result<()> {
    let designs: BTreeSet<DesignChoice> = rows.iter().map(ResultRecord::choice).collect();
    if designs.len() > 1 {
        return Err(Error::Comparison(format!(
            "{side} results mix {} designs",
            designs.len()
        )));
    }
    Ok(())
}

pub fn compare(baseline: &[ResultRecord], variant: &[ResultRecord], lanes: &[LanePair]) -> Result<Comparison> {
    single_design(baseline, "baseline")?;
    single_design(variant, "variant")?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &pair in lanes {
        let (b, b_seen) = per_code(baseline, pair.baseline);
        let (v, v_seen) = per_code(variant, pair.variant);
        if b_seen.is_empty() {
            return Err(Error::Comparison(format!(
                "no baseline results for lane {}",
                pair.baseline
            )));
        }
        if b_seen != v_seen {
            return Err(Error::Comparison(format!(
                "lane {} vs {}: baseline covers {} (code, seed) pairs, variant {}, and they differ",
                pair.baseline,
                pair.variant,
                b_seen.len(),
                v_seen.len()
            )));
        }
        let mut s = SignSummary {
            pair,
            codes: 0,
            decreased: 0,
            increased: 0,
        };
        for (code, base) in &b {
            let var = &v[code];
            let delta = var.delay - base.delay;
            s.codes += 1;
            if delta < 0.0 {
                s.decreased += 1;
            } else if delta > 0.0 {
                s.increased += 1;
            }
            rows.push(ComparisonRow {
                code: *code,
                baseline_lane: pair.baseline,
                variant_lane: pair.variant,
                baseline_delay_s: base.delay,
                variant_delay_s: var.delay,
                delta_s: delta,
                baseline_max_queue_ft: base.queue,
                variant_max_queue_ft: var.queue,
            });
        }
        summary.push(s);
    }
    Ok(Comparison { rows, summary })
}

/// Lane pairs compared by default for a variant.
pub fn default_lane_pairs(variant: DesignVariant) -> Vec<LanePair> {
    let mut pairs = vec![
        LanePair::same(LaneRole::Left),
        LanePair::same(LaneRole::Middle),
        LanePair::same(LaneRole::Short),
    ];
    if variant == DesignVariant::AddedDiverge {
        pairs.push(LanePair {
            baseline: LaneRole::Short,
            variant: LaneRole::Diverge,
        });
    }
    pairs
}

pub const COMPARISON_HEADER: &str =
    "code,baseline_lane,variant_lane,baseline_delay_s,variant_delay_s,delta_s,baseline_max_queue_ft,variant_max_queue_ft";

pub fn write_comparison<W: Write>(c: &Comparison, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# per-code values are unweighted means over seeds")?;
    writeln!(out, "{COMPARISON_HEADER}")?;
    for r in &c.rows {
        writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.code,
            r.baseline_lane,
            r.variant_lane,
            r.baseline_delay_s,
            r.variant_delay_s,
            r.delta_s,
            r.baseline_max_queue_ft,
            r.variant_max_queue_ft
        )?;
    }
    out.flush()
}

pub fn emit_comparison_csv(c: &Comparison, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_comparison(c, BufWriter::new(file)).map_err(|e| Error::file(path, e))
}
