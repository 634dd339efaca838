//! N-1 contingencies, screening, and the A/B/C scenario runs.
//!
//! Scenario A keeps the pre-contingency generation fixed and only sheds load
//! (units at the slack bus stay free to pick up the imbalance). Scenario B
//! re-dispatches generation as well. Scenario C adds switching chosen by
//! complete enumeration on top of B.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::Network;
use crate::dispatch::{
    fixed_injections, solve_dispatch, violation_check, DispatchProblem, DispatchSolution, VIOLATION_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::report::ScenarioReport;
use crate::sensitivity::dc_power_flow;
use crate::switching::{
    baseline_cbce, baseline_cbve, best_of, complete_enumeration, run_bilevel, BilevelConfig, BilevelReport,
    CandidateEvaluation, EnumerationMode,
};
use crate::topology::bridges;

/// A single outaged element, written `branch:<id>` or `gen:<id>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ContingencySpec {
    Branch(usize),
    Generator(usize),
}

impl ContingencySpec {
    pub fn element_id(&self) -> usize {
        match *self {
            ContingencySpec::Branch(id) | ContingencySpec::Generator(id) => id,
        }
    }

    /// The network with this element out of service.
    pub fn apply(&self, net: &Network) -> Result<Network> {
        match *self {
            ContingencySpec::Branch(id) => net.apply_branch_outage(id),
            ContingencySpec::Generator(id) => net.apply_generator_outage(id),
        }
    }

    /// Every branch and generator of `net`, branches first.
    pub fn all_n1(net: &Network) -> Vec<ContingencySpec> {
        net.in_service_branches()
            .map(|b| ContingencySpec::Branch(b.id))
            .chain(net.generators().iter().map(|g| ContingencySpec::Generator(g.id)))
            .collect()
    }
}

impl fmt::Display for ContingencySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContingencySpec::Branch(id) => write!(f, "branch:{id}"),
            ContingencySpec::Generator(id) => write!(f, "gen:{id}"),
        }
    }
}

impl FromStr for ContingencySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("contingency `{s}` is not of the form branch:<id> or gen:<id>"));
        let (kind, id) = s.trim().split_once(':').ok_or_else(bad)?;
        let id: usize = id.trim().parse().map_err(|_| bad())?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "branch" => Ok(ContingencySpec::Branch(id)),
            "gen" | "generator" => Ok(ContingencySpec::Generator(id)),
            _ => Err(bad()),
        }
    }
}

impl From<ContingencySpec> for String {
    fn from(c: ContingencySpec) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ContingencySpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Pre-contingency re-dispatch; it fixes the operating point the
/// contingencies are applied to.
pub fn pre_contingency_dispatch(net: &Network, cfg: &BilevelConfig) -> Result<DispatchSolution> {
    let sol = solve_dispatch(&DispatchProblem::redispatch(net, cfg.shed_weight))?;
    if !sol.is_optimal() {
        return Err(crate::lp::LpError::Infeasible.into());
    }
    Ok(sol)
}

/// Flows after the contingency with generation held at `gen_mw` (a lost
/// unit's output is dropped) and the imbalance taken at the slack bus.
pub fn fixed_post_flows(post: &Network, gen_mw: &BTreeMap<usize, f64>) -> Result<crate::sensitivity::BranchFlows> {
    let kept: BTreeMap<usize, f64> =
        gen_mw.iter().filter(|(id, _)| post.generator(**id).is_some()).map(|(&id, &mw)| (id, mw)).collect();
    dc_power_flow(post, &fixed_injections(post, &kept))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub contingency: ContingencySpec,
    /// The outage splits the network; nothing was solved.
    pub islanded: bool,
    /// Shed after re-dispatch; `None` when islanded or infeasible.
    pub level1_shed_mw: Option<f64>,
    /// Violations with generation held at the pre-contingency dispatch.
    pub violation_count_fixed: Option<usize>,
    pub needs_level2: bool,
}

/// Runs the level-1 dispatch for every N-1 contingency in parallel.
/// Rows come back sorted by shed, largest first; islanded rows go last.
pub fn screen_n1(net: &Network, cfg: &BilevelConfig) -> Result<Vec<ScreeningRow>> {
    cfg.validate()?;
    let pre = pre_contingency_dispatch(net, cfg)?;
    let bridge_ids = bridges(net);
    let specs = ContingencySpec::all_n1(net);
    let mut rows: Vec<ScreeningRow> = specs
        .par_iter()
        .map(|&contingency| {
            if let ContingencySpec::Branch(id) = contingency {
                if bridge_ids.binary_search(&id).is_ok() {
                    return Ok(ScreeningRow {
                        contingency,
                        islanded: true,
                        level1_shed_mw: None,
                        violation_count_fixed: None,
                        needs_level2: false,
                    });
                }
            }
            let post = contingency.apply(net)?;
            let level1 = solve_dispatch(&DispatchProblem::redispatch(&post, cfg.shed_weight))?;
            let shed = level1.is_optimal().then_some(level1.total_shed_mw);
            let fixed = fixed_post_flows(&post, &pre.gen_mw)?;
            Ok(ScreeningRow {
                contingency,
                islanded: false,
                level1_shed_mw: shed,
                violation_count_fixed: Some(violation_check(&fixed, &post, VIOLATION_TOLERANCE).len()),
                needs_level2: shed.is_some_and(|s| s > cfg.shed_tol_mw),
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        let key = |r: &ScreeningRow| r.level1_shed_mw.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then(a.contingency.cmp(&b.contingency))
    });
    Ok(rows)
}

fn shed_or_none(sol: &DispatchSolution) -> Option<f64> {
    sol.is_optimal().then_some(sol.total_shed_mw)
}

/// Scenario A: pre-contingency generation held, load shedding only.
/// Infeasible when no amount of shedding clears the violations.
pub fn scenario_a(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<ScenarioReport> {
    let pre = pre_contingency_dispatch(net, cfg)?;
    let post = contingency.apply(net)?;
    let clock = cfg.clock();
    let kept: BTreeMap<usize, f64> =
        pre.gen_mw.iter().filter(|(id, _)| post.generator(**id).is_some()).map(|(&i, &m)| (i, m)).collect();
    let sol = solve_dispatch(&DispatchProblem::fixed(&post, kept, cfg.shed_weight))?;
    let violations = if sol.is_optimal() {
        violation_check(&sol.flows_mw, &post, VIOLATION_TOLERANCE).len()
    } else {
        violation_check(&fixed_post_flows(&post, &pre.gen_mw)?, &post, VIOLATION_TOLERANCE).len()
    };
    Ok(ScenarioReport {
        method: "A".into(),
        total_shed_mw: shed_or_none(&sol),
        violation_count: violations,
        wall_time_s: clock.elapsed(),
        best_candidates: Vec::new(),
    })
}

/// Scenario B: re-dispatch with load shedding.
pub fn scenario_b(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<ScenarioReport> {
    let post = contingency.apply(net)?;
    let clock = cfg.clock();
    let sol = solve_dispatch(&DispatchProblem::redispatch(&post, cfg.shed_weight))?;
    Ok(ScenarioReport {
        method: "B".into(),
        total_shed_mw: shed_or_none(&sol),
        violation_count: if sol.is_optimal() {
            violation_check(&sol.flows_mw, &post, VIOLATION_TOLERANCE).len()
        } else {
            0
        },
        wall_time_s: clock.elapsed(),
        best_candidates: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCDetail {
    pub row: ScenarioReport,
    pub no_switch_shed_mw: Option<f64>,
    pub evaluations: Vec<CandidateEvaluation>,
    /// Wall time of the enumeration loop alone.
    pub enumeration_time_s: f64,
}

/// Scenario C: re-dispatch plus the best single switching action found by
/// complete enumeration. Doing nothing is always an option, so C never sheds
/// more than B.
pub fn scenario_c_detail(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<ScenarioCDetail> {
    let post = contingency.apply(net)?;
    let clock = cfg.clock();
    let none = solve_dispatch(&DispatchProblem::redispatch(&post, cfg.shed_weight))?;
    let enum_clock = cfg.clock();
    let evaluations = complete_enumeration(&post, &EnumerationMode::Redispatch, cfg);
    let enumeration_time_s = enum_clock.elapsed();
    let no_switch = shed_or_none(&none);
    let (shed, best) = match (no_switch, best_of(&evaluations)) {
        (Some(a), Some((b, ids))) if b <= a + 1e-6 => (Some(a.min(b)), ids),
        (Some(a), _) => (Some(a), Vec::new()),
        (None, Some((b, ids))) => (Some(b), ids),
        (None, None) => (None, Vec::new()),
    };
    Ok(ScenarioCDetail {
        row: ScenarioReport {
            method: "C".into(),
            total_shed_mw: shed,
            violation_count: 0,
            wall_time_s: clock.elapsed(),
            best_candidates: best,
        },
        no_switch_shed_mw: no_switch,
        evaluations,
        enumeration_time_s,
    })
}

pub fn scenario_c(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<ScenarioReport> {
    Ok(scenario_c_detail(net, contingency, cfg)?.row)
}

/// The bi-level selector as a report row.
pub fn bilevel_row(report: &BilevelReport) -> ScenarioReport {
    ScenarioReport {
        method: "bilevel".into(),
        total_shed_mw: Some(report.best_shed_mw),
        violation_count: 0,
        wall_time_s: report.timings.total_s,
        best_candidates: report.best.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineDetail {
    pub method: String,
    pub candidates: Vec<usize>,
    pub evaluations: Vec<CandidateEvaluation>,
    /// Candidates that clear every violation without shedding. Non-empty
    /// means the DC model disagrees with an AC finding that switching alone
    /// cannot help.
    pub cleared_by: Vec<usize>,
    pub row: ScenarioReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub contingency: ContingencySpec,
    /// Violations with generation fixed and no switching.
    pub violations: Vec<usize>,
    pub methods: Vec<BaselineDetail>,
}

impl BaselineReport {
    pub fn rows(&self) -> Vec<ScenarioReport> {
        self.methods.iter().map(|m| m.row.clone()).collect()
    }

    /// True when some candidate of some method clears all violations.
    pub fn has_discrepancy(&self) -> bool {
        self.methods.iter().any(|m| !m.cleared_by.is_empty())
    }
}

fn baseline_detail(
    method: &str,
    candidates: Vec<usize>,
    evaluations: Vec<CandidateEvaluation>,
    unswitched: usize,
    elapsed: f64,
) -> BaselineDetail {
    let solved: Vec<&CandidateEvaluation> = evaluations.iter().filter(|e| e.total_shed_mw.is_some()).collect();
    let min_violations = solved.iter().map(|e| e.violation_count).min().unwrap_or(unswitched);
    let mut cleared_by: Vec<usize> = solved.iter().filter(|e| e.violation_count == 0).map(|e| e.branch_id).collect();
    cleared_by.sort_unstable();
    BaselineDetail {
        method: method.into(),
        candidates,
        row: ScenarioReport {
            method: method.into(),
            total_shed_mw: Some(0.0),
            violation_count: min_violations,
            wall_time_s: elapsed,
            best_candidates: cleared_by.clone(),
        },
        evaluations,
        cleared_by,
    }
}

/// Runs CBCE, CBVE (top `n` each) and complete enumeration with generation
/// held at the pre-contingency dispatch and no load shedding.
pub fn run_baselines(
    net: &Network,
    contingency: &ContingencySpec,
    n: usize,
    cfg: &BilevelConfig,
) -> Result<BaselineReport> {
    let pre = pre_contingency_dispatch(net, cfg)?;
    let post = contingency.apply(net)?;
    let gen: BTreeMap<usize, f64> =
        pre.gen_mw.iter().filter(|(id, _)| post.generator(**id).is_some()).map(|(&i, &m)| (i, m)).collect();
    let violations: Vec<usize> = violation_check(&fixed_post_flows(&post, &gen)?, &post, VIOLATION_TOLERANCE)
        .into_iter()
        .map(|v| v.branch)
        .collect();
    let mut methods = Vec::new();

    if matches!(contingency, ContingencySpec::Branch(_)) {
        let clock = cfg.clock();
        let cands = baseline_cbce(net, contingency, n)?;
        let evals = crate::switching::baseline_evaluate_fixed(&post, &cands, &gen, cfg);
        methods.push(baseline_detail("CBCE", cands, evals, violations.len(), clock.elapsed()));
    }
    if !violations.is_empty() {
        let clock = cfg.clock();
        let cands = baseline_cbve(&post, &violations, n)?;
        let evals = crate::switching::baseline_evaluate_fixed(&post, &cands, &gen, cfg);
        methods.push(baseline_detail("CBVE", cands, evals, violations.len(), clock.elapsed()));
    }
    let clock = cfg.clock();
    let evals = complete_enumeration(&post, &EnumerationMode::Fixed(gen), cfg);
    let cands: Vec<usize> = evals.iter().map(|e| e.branch_id).collect();
    methods.push(baseline_detail("CE", cands, evals, violations.len(), clock.elapsed()));

    Ok(BaselineReport { contingency: *contingency, violations, methods })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub contingency: ContingencySpec,
    pub rows: Vec<ScenarioReport>,
    pub bilevel: BilevelReport,
    /// Wall time of complete enumeration with re-dispatch (scenario C's loop).
    pub enumeration_time_s: f64,
}

/// Scenarios A, B, C and the bi-level selector for one contingency.
pub fn run_full_pipeline(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let a = scenario_a(net, contingency, cfg)?;
    let b = scenario_b(net, contingency, cfg)?;
    let c = scenario_c_detail(net, contingency, cfg)?;
    let bilevel = run_bilevel(net, contingency, cfg)?;
    Ok(PipelineReport {
        contingency: *contingency,
        rows: vec![a, b, c.row, bilevel_row(&bilevel)],
        enumeration_time_s: c.enumeration_time_s,
        bilevel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::load_case;

    #[test]
    fn parse_and_display() {
        assert_eq!("branch:35".parse::<ContingencySpec>().unwrap(), ContingencySpec::Branch(35));
        assert_eq!("gen:3".parse::<ContingencySpec>().unwrap(), ContingencySpec::Generator(3));
        assert_eq!(ContingencySpec::Generator(3).to_string(), "gen:3");
        for bad in ["branch", "line:3", "branch:x", "gen:-1", ""] {
            assert!(bad.parse::<ContingencySpec>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&ContingencySpec::Branch(7)).unwrap();
        assert_eq!(json, "\"branch:7\"");
        assert_eq!(serde_json::from_str::<ContingencySpec>(&json).unwrap(), ContingencySpec::Branch(7));
    }

    /// Generators at 1 (cheap) and 2 (dear), load at 3; (1,3) and (2,3) radial
    /// plus a weak tie (1,2).
    fn small() -> Network {
        load_case(
            r#"{"base_mva": 100, "slack_bus": 1,
                "buses": [{"id": 1, "load_mw": 0}, {"id": 2, "load_mw": 0}, {"id": 3, "load_mw": 150}],
                "branches": [{"from": 1, "to": 3, "x_pu": 0.1, "rating_mw": 100},
                             {"from": 2, "to": 3, "x_pu": 0.1, "rating_mw": 100},
                             {"from": 1, "to": 2, "x_pu": 0.1, "rating_mw": 100}],
                "generators": [{"id": 1, "bus": 1, "pmin_mw": 0, "pmax_mw": 200, "cost_per_mwh": 1},
                               {"id": 2, "bus": 2, "pmin_mw": 0, "pmax_mw": 200, "cost_per_mwh": 2}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn scenario_nesting_on_small_case() {
        let net = small();
        let cfg = BilevelConfig { timing: false, ..Default::default() };
        for c in ContingencySpec::all_n1(&net) {
            let r = run_full_pipeline(&net, &c, &cfg).unwrap();
            let shed: Vec<f64> = r.rows.iter().map(|x| x.total_shed_mw.unwrap_or(f64::INFINITY)).collect();
            assert!(shed[0] + 1e-6 >= shed[1], "{c}: {shed:?}");
            assert!(shed[1] + 1e-6 >= shed[2], "{c}: {shed:?}");
            assert!(shed[3] + 1e-6 >= shed[2], "{c}: {shed:?}");
            assert!(r.rows.iter().all(|x| x.wall_time_s == 0.0));
        }
    }

    #[test]
    fn screening_is_sorted_and_complete() {
        let net = small();
        let rows = screen_n1(&net, &BilevelConfig::default()).unwrap();
        assert_eq!(rows.len(), 5);
        for w in rows.windows(2) {
            let k = |r: &ScreeningRow| r.level1_shed_mw.unwrap_or(f64::NEG_INFINITY);
            assert!(k(&w[0]) >= k(&w[1]));
        }
        // losing the dear unit leaves 150 MW to come from bus 1 through two
        // paths of 100 MW each: no shedding needed
        let g2 = rows.iter().find(|r| r.contingency == ContingencySpec::Generator(2)).unwrap();
        assert_eq!(g2.level1_shed_mw.map(|s| s.abs() < 1e-6), Some(true));
    }

    #[test]
    fn unknown_elements_are_reported() {
        let net = small();
        let cfg = BilevelConfig::default();
        assert!(matches!(scenario_b(&net, &ContingencySpec::Branch(99), &cfg), Err(Error::UnknownBranch(99))));
        assert!(matches!(scenario_b(&net, &ContingencySpec::Generator(9), &cfg), Err(Error::UnknownGenerator(9))));
    }
}
