//! Network data model and case-file ingestion.
//!
//! A case is a JSON document:
//!
//! ```text
//! { "base_mva": 100.0, "slack_bus": 31,
//!   "buses":      [{"id": 1, "load_mw": 97.6}, ...],
//!   "branches":   [{"from": 1, "to": 2, "x_pu": 0.0411, "rating_mw": 600.0}, ...],
//!   "generators": [{"id": 1, "bus": 30, "pmin_mw": 0.0, "pmax_mw": 1040.0, "cost_per_mwh": 1.0}, ...] }
//! ```
//!
//! Branch ordinals are 1-based positions in the `branches` array. A branch may
//! carry `"in_service": false`; the field is omitted when true.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub load_mw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    /// 1-based ordinal in case order.
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance_pu: f64,
    pub rating_mw: f64,
    pub in_service: bool,
}

impl Branch {
    /// Susceptance in MW per radian of angle difference.
    pub fn susceptance_mw(&self, base_mva: f64) -> f64 {
        base_mva / self.reactance_pu
    }

    pub fn touches(&self, bus: usize) -> bool {
        self.from_bus == bus || self.to_bus == bus
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub pmin_mw: f64,
    pub pmax_mw: f64,
    pub cost_per_mwh: f64,
}

/// On-disk branch record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub x_pu: f64,
    pub rating_mw: f64,
    #[serde(default = "in_service_default", skip_serializing_if = "is_true")]
    pub in_service: bool,
}

fn in_service_default() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

/// The case document exactly as it appears on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    pub base_mva: f64,
    pub slack_bus: usize,
    pub buses: Vec<Bus>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<Generator>,
}

/// Immutable bus/branch/generator snapshot.
///
/// Every modifying operation returns a new `Network`; instances can be shared
/// freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    base_mva: f64,
    slack_bus: usize,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    bus_index: HashMap<usize, usize>,
}

/// Parses and validates a case document.
pub fn load_case(json: &str) -> Result<Network> {
    let doc: CaseDocument = serde_json::from_str(json).map_err(|e| Error::Schema(e.to_string()))?;
    Network::from_document(doc)
}

pub fn load_case_file(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    load_case(&text)
}

/// Reads a `bus,load_mw` CSV into an override map.
pub fn read_load_profile<R: Read>(reader: R) -> Result<BTreeMap<usize, f64>> {
    #[derive(Deserialize)]
    struct Row {
        bus: usize,
        load_mw: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        if out.insert(row.bus, row.load_mw).is_some() {
            return Err(Error::DuplicateBus(row.bus));
        }
    }
    Ok(out)
}

pub fn read_load_profile_file(path: impl AsRef<Path>) -> Result<BTreeMap<usize, f64>> {
    read_load_profile(std::fs::File::open(path)?)
}

impl Network {
    pub fn from_document(doc: CaseDocument) -> Result<Network> {
        let branches = doc
            .branches
            .into_iter()
            .enumerate()
            .map(|(i, b)| Branch {
                id: i + 1,
                from_bus: b.from,
                to_bus: b.to,
                reactance_pu: b.x_pu,
                rating_mw: b.rating_mw,
                in_service: b.in_service,
            })
            .collect();
        let net = Network::assemble(doc.base_mva, doc.slack_bus, doc.buses, branches, doc.generators)?;
        net.check_connected()?;
        let capacity_mw: f64 = net.generators.iter().map(|g| g.pmax_mw).sum();
        let load_mw = net.total_load_mw();
        if capacity_mw < load_mw {
            return Err(Error::InsufficientCapacity { capacity_mw, load_mw });
        }
        Ok(net)
    }

    /// Element-level validation only; connectivity is the caller's concern.
    fn assemble(
        base_mva: f64,
        slack_bus: usize,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Network> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::BaseMva);
        }
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, i).is_some() {
                return Err(Error::DuplicateBus(bus.id));
            }
            if !(bus.load_mw.is_finite() && bus.load_mw >= 0.0) {
                return Err(Error::InvalidLoad { bus: bus.id, load_mw: bus.load_mw });
            }
        }
        if !bus_index.contains_key(&slack_bus) {
            return Err(Error::SlackMissing(slack_bus));
        }
        for br in &branches {
            for end in [br.from_bus, br.to_bus] {
                if !bus_index.contains_key(&end) {
                    return Err(Error::Schema(format!("branch {} references unknown bus {}", br.id, end)));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::SelfLoop(br.id));
            }
            if !(br.reactance_pu.is_finite() && br.reactance_pu > 0.0) {
                return Err(Error::NonpositiveReactance(br.id));
            }
            if !(br.rating_mw.is_finite() && br.rating_mw > 0.0) {
                return Err(Error::NonpositiveRating(br.id));
            }
        }
        let mut gen_ids = HashSet::new();
        for g in &generators {
            if !gen_ids.insert(g.id) {
                return Err(Error::DuplicateGenerator(g.id));
            }
            if !bus_index.contains_key(&g.bus) {
                return Err(Error::Schema(format!("generator {} references unknown bus {}", g.id, g.bus)));
            }
            if !(g.pmin_mw.is_finite() && g.pmax_mw.is_finite() && g.pmin_mw <= g.pmax_mw) {
                return Err(Error::GeneratorLimits(g.id));
            }
            if !(g.cost_per_mwh.is_finite() && g.cost_per_mwh >= 0.0) {
                return Err(Error::GeneratorCost(g.id));
            }
        }
        Ok(Network { base_mva, slack_bus, buses, branches, generators, bus_index })
    }

    pub fn to_document(&self) -> CaseDocument {
        CaseDocument {
            base_mva: self.base_mva,
            slack_bus: self.slack_bus,
            buses: self.buses.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchRecord {
                    from: b.from_bus,
                    to: b.to_bus,
                    x_pu: b.reactance_pu,
                    rating_mw: b.rating_mw,
                    in_service: b.in_service,
                })
                .collect(),
            generators: self.generators.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("case document serializes")
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn slack_bus(&self) -> usize {
        self.slack_bus
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    /// All branches in case order, including out-of-service ones.
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> + '_ {
        self.branches.iter().filter(|b| b.in_service)
    }

    pub fn in_service_count(&self) -> usize {
        self.in_service_branches().count()
    }

    /// Position of a bus in [`Network::buses`].
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.bus_index[&self.slack_bus]
    }

    pub fn branch(&self, id: usize) -> Option<&Branch> {
        id.checked_sub(1).and_then(|i| self.branches.get(i))
    }

    pub fn generator(&self, id: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    pub fn total_capacity_mw(&self) -> f64 {
        self.generators.iter().map(|g| g.pmax_mw).sum()
    }

    /// Per-bus load vector in bus order.
    pub fn loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load_mw).collect()
    }

    pub fn check_connected(&self) -> Result<()> {
        match topology::unreachable_bus(self) {
            Some(bus) => Err(Error::Disconnected(bus)),
            None => Ok(()),
        }
    }

    pub fn is_connected(&self) -> bool {
        topology::unreachable_bus(self).is_none()
    }

    /// Replaces the load of every listed bus; unlisted buses keep their load.
    pub fn apply_load_profile(&self, overrides: &BTreeMap<usize, f64>) -> Result<Network> {
        let mut net = self.clone();
        for (&bus, &load_mw) in overrides {
            let idx = self.bus_index(bus).ok_or(Error::UnknownBus(bus))?;
            if !(load_mw.is_finite() && load_mw >= 0.0) {
                return Err(Error::InvalidLoad { bus, load_mw });
            }
            net.buses[idx].load_mw = load_mw;
        }
        Ok(net)
    }

    /// Takes a branch out of service. The result may be disconnected.
    pub fn apply_branch_outage(&self, branch_id: usize) -> Result<Network> {
        let branch = self.branch(branch_id).ok_or(Error::UnknownBranch(branch_id))?;
        if !branch.in_service {
            return Err(Error::BranchOutOfService(branch_id));
        }
        let mut net = self.clone();
        net.branches[branch_id - 1].in_service = false;
        Ok(net)
    }

    /// Puts an out-of-service branch back.
    pub fn restore_branch(&self, branch_id: usize) -> Result<Network> {
        let branch = self.branch(branch_id).ok_or(Error::UnknownBranch(branch_id))?;
        if branch.in_service {
            return Err(Error::Config(format!("branch {branch_id} is already in service")));
        }
        let mut net = self.clone();
        net.branches[branch_id - 1].in_service = true;
        Ok(net)
    }

    pub fn apply_generator_outage(&self, gen_id: usize) -> Result<Network> {
        let pos = self.generators.iter().position(|g| g.id == gen_id).ok_or(Error::UnknownGenerator(gen_id))?;
        let mut net = self.clone();
        net.generators.remove(pos);
        Ok(net)
    }
}

/// Bundled IEEE 39-bus (New England) case and the modified load profile.
pub mod fixtures {
    use super::*;

    pub const IEEE39_JSON: &str = include_str!("../data/ieee39.json");
    pub const MODIFIED_LOADS_CSV: &str = include_str!("../data/ieee39_loads.csv");

    /// The 19 modified bus loads (MW) of the 39-bus study.
    pub const MODIFIED_LOADS: [(usize, f64); 19] = [
        (3, 342.88),
        (4, 546.57),
        (7, 238.9),
        (8, 550.76),
        (12, 7.1977),
        (15, 311.86),
        (16, 340.83),
        (18, 153.18),
        (20, 610.2),
        (21, 298.6),
        (23, 238.5),
        (24, 334.38),
        (25, 203.02),
        (26, 126.9),
        (27, 288.3),
        (28, 221.4),
        (29, 255.64),
        (31, 9.77),
        (39, 1150.9),
    ];

    /// The study's overloaded branches after the branch-35 outage.
    pub const REFERENCE_OVERLOADS: [usize; 3] = [29, 36, 38];

    /// The study's best switching candidates for the branch-35 outage.
    pub const REFERENCE_CANDIDATES: [usize; 5] = [4, 6, 7, 11, 12];

    pub const REFERENCE_CONTINGENCY: usize = 35;

    pub fn ieee39() -> Network {
        load_case(IEEE39_JSON).expect("bundled 39-bus case is valid")
    }

    /// The bundled load-override file: the 19 modified loads plus zeros at
    /// the two buses (1 and 9) whose loads the modified profile drops.
    pub fn modified_load_profile() -> BTreeMap<usize, f64> {
        read_load_profile(MODIFIED_LOADS_CSV.as_bytes()).expect("bundled load profile is valid")
    }

    pub fn ieee39_modified() -> Network {
        ieee39().apply_load_profile(&modified_load_profile()).expect("profile buses exist")
    }
}
