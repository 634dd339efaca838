//! Transmission-switching candidate selection.
//!
//! The bi-level selector works outward from the buses where the
//! post-contingency dispatch has to shed load:
//!
//! 1. solve the re-dispatch problem with the contingency applied;
//! 2. if nothing is shed, stop;
//! 3. collect the shedding buses and the heavily loaded branches incident to
//!    them (the limit branches);
//! 4. score every other branch by the most negative direction-adjusted LODF
//!    it has against a limit branch, i.e. by how much counter-flow its
//!    opening pushes onto the loaded direction;
//! 5. re-dispatch with each of the best-scored branches opened and rank them
//!    by the shedding that remains.
//!
//! The CBCE, CBVE and complete-enumeration baselines live here as well.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case::Network;
use crate::contingency::ContingencySpec;
use crate::dispatch::{
    fixed_injections, solve_dispatch, violation_check, DispatchProblem, DispatchSolution, DispatchStatus,
    DEFAULT_SHED_WEIGHT, VIOLATION_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::sensitivity::{compute_lodf, compute_ptdf, dc_power_flow, BranchFlows, LodfMatrix};
use crate::topology::{bridges, hop_distances};

/// Topology the LODF matrix is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LodfBasis {
    /// Intact network, before the contingency.
    Pre,
    /// Network with the contingency applied.
    #[default]
    Post,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelConfig {
    pub shed_tol_mw: f64,
    /// Loading (|flow| / rating) at which an incident branch counts as a limit branch.
    pub lbr_loading_frac: f64,
    /// Lowest loading fraction the limit-branch search relaxes to.
    pub lbr_floor: f64,
    /// Hop radius around shedding buses; 1 means directly incident branches.
    pub lbr_radius: usize,
    pub top_k: usize,
    pub lodf_basis: LodfBasis,
    pub stop_at_zero_shed: bool,
    pub shed_weight: f64,
    /// Record wall-clock timings; when false every timing is reported as zero.
    pub timing: bool,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        BilevelConfig {
            shed_tol_mw: 1e-3,
            lbr_loading_frac: 0.95,
            lbr_floor: 0.50,
            lbr_radius: 1,
            top_k: 10,
            lodf_basis: LodfBasis::Post,
            stop_at_zero_shed: false,
            shed_weight: DEFAULT_SHED_WEIGHT,
            timing: true,
        }
    }
}

pub const LBR_RELAX_STEP: f64 = 0.05;

impl BilevelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lbr_loading_frac > 0.0 && self.lbr_loading_frac <= 1.0) {
            return Err(Error::Config(format!("LBr threshold {} must lie in (0, 1]", self.lbr_loading_frac)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top-k must be at least 1".into()));
        }
        if self.lbr_radius == 0 {
            return Err(Error::Config("LBr radius must be at least 1".into()));
        }
        if self.shed_tol_mw.is_nan() || self.shed_tol_mw < 0.0 {
            return Err(Error::Config("shed tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn clock(&self) -> Clock {
        Clock { start: Instant::now(), enabled: self.timing }
    }
}

pub(crate) struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    /// Seconds since the clock started, at millisecond resolution.
    pub(crate) fn elapsed(&self) -> f64 {
        if self.enabled {
            (self.start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationStatus {
    /// Re-dispatch solved to optimality.
    Optimal,
    /// Re-dispatch infeasible.
    Infeasible,
    /// Opening the branch islands the network; nothing was solved.
    Islanding,
    /// Power flow under fixed injections (baseline evaluation).
    FixedInjection,
    /// Solver failure.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub branch_id: usize,
    /// Most negative direction-adjusted LODF against any limit branch.
    pub lodf_score: Option<f64>,
    /// `None` when nothing was solved or the solve was infeasible.
    pub total_shed_mw: Option<f64>,
    pub violation_count: usize,
    pub islanding: bool,
    pub solve_status: EvaluationStatus,
    pub eval_time_s: f64,
}

impl CandidateEvaluation {
    fn islanding(branch_id: usize, lodf_score: Option<f64>) -> Self {
        CandidateEvaluation {
            branch_id,
            lodf_score,
            total_shed_mw: None,
            violation_count: 0,
            islanding: true,
            solve_status: EvaluationStatus::Islanding,
            eval_time_s: 0.0,
        }
    }

    /// A usable switching action: solved and free of violations.
    pub fn is_clean(&self) -> bool {
        matches!(self.solve_status, EvaluationStatus::Optimal | EvaluationStatus::FixedInjection)
            && self.violation_count == 0
    }
}

/// Orders evaluations by (shed asc, violations asc, LODF score asc, branch id);
/// unsolved candidates go last.
pub fn sort_evaluations(evals: &mut [CandidateEvaluation]) {
    evals.sort_by(|a, b| {
        let shed = |e: &CandidateEvaluation| e.total_shed_mw.unwrap_or(f64::INFINITY);
        shed(a)
            .total_cmp(&shed(b))
            .then(a.violation_count.cmp(&b.violation_count))
            .then(a.lodf_score.unwrap_or(0.0).total_cmp(&b.lodf_score.unwrap_or(0.0)))
            .then(a.branch_id.cmp(&b.branch_id))
    });
}

/// Lowest shed among clean evaluations and the branches achieving it.
pub fn best_of(evals: &[CandidateEvaluation]) -> Option<(f64, Vec<usize>)> {
    let min = evals.iter().filter(|e| e.is_clean()).filter_map(|e| e.total_shed_mw).min_by(f64::total_cmp)?;
    let mut ids: Vec<usize> = evals
        .iter()
        .filter(|e| e.is_clean() && e.total_shed_mw.is_some_and(|s| s <= min + 1e-6))
        .map(|e| e.branch_id)
        .collect();
    ids.sort_unstable();
    Some((min, ids))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub level1_s: f64,
    pub lsb_lbr_s: f64,
    pub sensitivity_s: f64,
    pub ranking_s: f64,
    pub evaluation_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilevelReport {
    pub contingency: ContingencySpec,
    pub level1_shed_mw: f64,
    pub level1_violations: usize,
    /// Load-shedding buses.
    pub lsb: Vec<usize>,
    /// Limit branches, most loaded first.
    pub lbr: Vec<usize>,
    /// Loading threshold at which the limit branches were found.
    pub lbr_threshold: Option<f64>,
    pub candidates: Vec<CandidateEvaluation>,
    /// Candidates reaching the minimum shed without violations.
    pub best: Vec<usize>,
    /// Minimum shed over doing nothing and every evaluated candidate.
    pub best_shed_mw: f64,
    pub timings: PhaseTimings,
}

/// Buses shedding more than `shed_tol_mw`, ascending.
pub fn find_lsb(sol: &DispatchSolution, shed_tol_mw: f64) -> Vec<usize> {
    sol.shed_mw.iter().filter(|(_, &mw)| mw > shed_tol_mw).map(|(&bus, _)| bus).collect()
}

/// Branches incident to a shedding bus with loading at or above
/// `loading_frac`, most loaded first.
pub fn find_lbr(net: &Network, flows: &BranchFlows, lsb: &[usize], loading_frac: f64) -> Vec<usize> {
    find_lbr_within(net, flows, lsb, loading_frac, 1)
}

/// As [`find_lbr`], counting branches with an endpoint fewer than `radius`
/// hops from a shedding bus.
pub fn find_lbr_within(
    net: &Network,
    flows: &BranchFlows,
    lsb: &[usize],
    loading_frac: f64,
    radius: usize,
) -> Vec<usize> {
    let dist = hop_distances(net, lsb);
    let near = |bus: usize| net.bus_index(bus).is_some_and(|i| dist[i] < radius);
    let mut hits: Vec<(f64, usize)> = net
        .in_service_branches()
        .filter(|b| near(b.from_bus) || near(b.to_bus))
        .filter_map(|b| {
            let loading = flows.get(&b.id)?.abs() / b.rating_mw;
            (loading >= loading_frac).then_some((loading, b.id))
        })
        .collect();
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, id)| id).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub branch_id: usize,
    pub score: f64,
}

/// Scores every switchable branch of `net` against the limit branches and
/// returns the `top_k` lowest scores.
///
/// `score(c) = min over l in lbr of LODF(l, c) * sign(flow_l) * sign(flow_c)`.
/// Opening c changes the flow on l by `LODF(l, c) * flow_c`, so a negative
/// score means the opening pushes flow against the loaded direction of some
/// limit branch. Both signs are needed for the score not to depend on how
/// branches happen to be oriented in the case file. Limit branches, bridges
/// of `net` and branches missing from `lodf` are skipped.
pub fn rank_by_lodf(
    lodf: &LodfMatrix,
    lbr: &[usize],
    flows: &BranchFlows,
    net: &Network,
    top_k: usize,
) -> Result<Vec<RankedCandidate>> {
    if lbr.is_empty() {
        return Err(Error::Config("no limit branches to rank against".into()));
    }
    let rows: Vec<(usize, f64)> = lbr
        .iter()
        .map(|&l| {
            let row = lodf.index(l).ok_or(Error::UnknownBranch(l))?;
            let f = flows.get(&l).copied().unwrap_or(0.0);
            Ok((row, sign(f)))
        })
        .collect::<Result<_>>()?;
    let bridge_ids = bridges(net);
    let mut scored: Vec<RankedCandidate> = net
        .in_service_branches()
        .filter(|b| !lbr.contains(&b.id) && bridge_ids.binary_search(&b.id).is_err())
        .filter_map(|b| {
            let k = lodf.index(b.id)?;
            if lodf.bridge_mask[k] {
                return None;
            }
            let sc = sign(flows.get(&b.id).copied().unwrap_or(0.0));
            let score = rows.iter().map(|&(row, s)| lodf.values[(row, k)] * s * sc).fold(f64::INFINITY, f64::min);
            // + 0.0 folds -0.0 into 0.0 so ties sort by id
            Some(RankedCandidate { branch_id: b.id, score: score + 0.0 })
        })
        .collect();
    scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.branch_id.cmp(&b.branch_id)));
    scored.truncate(top_k);
    Ok(scored)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Re-dispatches `net` with each candidate opened in turn.
///
/// Candidates are evaluated in the order given; with `stop_at_zero_shed`
/// evaluation stops after the first candidate that sheds at most
/// `shed_tol_mw` without violations. The result is sorted.
pub fn evaluate_candidates(
    net: &Network,
    candidates: &[(usize, Option<f64>)],
    cfg: &BilevelConfig,
) -> Vec<CandidateEvaluation> {
    let bridge_ids = bridges(net);
    let mut out = Vec::with_capacity(candidates.len());
    for &(branch_id, lodf_score) in candidates {
        if bridge_ids.binary_search(&branch_id).is_ok() {
            out.push(CandidateEvaluation::islanding(branch_id, lodf_score));
            continue;
        }
        let clock = cfg.clock();
        let eval = match net.apply_branch_outage(branch_id) {
            Err(_) => CandidateEvaluation {
                branch_id,
                lodf_score,
                total_shed_mw: None,
                violation_count: 0,
                islanding: false,
                solve_status: EvaluationStatus::Failed,
                eval_time_s: 0.0,
            },
            Ok(switched) => {
                let solved = solve_dispatch(&DispatchProblem::redispatch(&switched, cfg.shed_weight));
                let (total_shed_mw, violation_count, solve_status) = match solved {
                    Ok(sol) if sol.status == DispatchStatus::Optimal => (
                        Some(sol.total_shed_mw),
                        violation_check(&sol.flows_mw, &switched, VIOLATION_TOLERANCE).len(),
                        EvaluationStatus::Optimal,
                    ),
                    Ok(_) => (None, 0, EvaluationStatus::Infeasible),
                    Err(_) => (None, 0, EvaluationStatus::Failed),
                };
                CandidateEvaluation {
                    branch_id,
                    lodf_score,
                    total_shed_mw,
                    violation_count,
                    islanding: false,
                    solve_status,
                    eval_time_s: clock.elapsed(),
                }
            }
        };
        let done = cfg.stop_at_zero_shed && eval.is_clean() && eval.total_shed_mw.is_some_and(|s| s <= cfg.shed_tol_mw);
        out.push(eval);
        if done {
            break;
        }
    }
    sort_evaluations(&mut out);
    out
}

/// Runs both levels of the selector for one contingency.
pub fn run_bilevel(net: &Network, contingency: &ContingencySpec, cfg: &BilevelConfig) -> Result<BilevelReport> {
    cfg.validate()?;
    let total = cfg.clock();
    let post = contingency.apply(net)?;

    let phase = cfg.clock();
    let level1 = solve_dispatch(&DispatchProblem::redispatch(&post, cfg.shed_weight))?;
    if !level1.is_optimal() {
        return Err(crate::lp::LpError::Infeasible.into());
    }
    let mut timings = PhaseTimings { level1_s: phase.elapsed(), ..Default::default() };
    let level1_violations = violation_check(&level1.flows_mw, &post, VIOLATION_TOLERANCE).len();

    let mut report = BilevelReport {
        contingency: *contingency,
        level1_shed_mw: level1.total_shed_mw,
        level1_violations,
        lsb: Vec::new(),
        lbr: Vec::new(),
        lbr_threshold: None,
        candidates: Vec::new(),
        best: Vec::new(),
        best_shed_mw: level1.total_shed_mw,
        timings: PhaseTimings::default(),
    };
    if level1.total_shed_mw <= cfg.shed_tol_mw {
        timings.total_s = total.elapsed();
        report.timings = timings;
        return Ok(report);
    }

    let phase = cfg.clock();
    report.lsb = find_lsb(&level1, cfg.shed_tol_mw);
    let mut step = 0;
    loop {
        let frac = cfg.lbr_loading_frac - LBR_RELAX_STEP * step as f64;
        if frac < cfg.lbr_floor - 1e-9 {
            break;
        }
        let lbr = find_lbr_within(&post, &level1.flows_mw, &report.lsb, frac, cfg.lbr_radius);
        if !lbr.is_empty() {
            report.lbr = lbr;
            report.lbr_threshold = Some((frac * 1e6).round() / 1e6);
            break;
        }
        step += 1;
    }
    timings.lsb_lbr_s = phase.elapsed();

    if !report.lbr.is_empty() {
        let phase = cfg.clock();
        let basis_net = match cfg.lodf_basis {
            LodfBasis::Pre => net,
            LodfBasis::Post => &post,
        };
        let lodf = compute_lodf(&compute_ptdf(basis_net)?, basis_net)?;
        timings.sensitivity_s = phase.elapsed();

        let phase = cfg.clock();
        let ranked = rank_by_lodf(&lodf, &report.lbr, &level1.flows_mw, &post, cfg.top_k)?;
        timings.ranking_s = phase.elapsed();

        let phase = cfg.clock();
        let list: Vec<(usize, Option<f64>)> = ranked.iter().map(|r| (r.branch_id, Some(r.score))).collect();
        report.candidates = evaluate_candidates(&post, &list, cfg);
        timings.evaluation_s = phase.elapsed();

        if let Some((shed, ids)) = best_of(&report.candidates) {
            if shed <= level1.total_shed_mw + 1e-6 {
                report.best = ids;
                report.best_shed_mw = shed.min(level1.total_shed_mw);
            }
        }
    }
    timings.total_s = total.elapsed();
    report.timings = timings;
    Ok(report)
}

fn branch_endpoints(net: &Network, ids: &[usize]) -> Result<Vec<usize>> {
    let mut buses = Vec::with_capacity(2 * ids.len());
    for &id in ids {
        let br = net.branch(id).ok_or(Error::UnknownBranch(id))?;
        buses.extend([br.from_bus, br.to_bus]);
    }
    Ok(buses)
}

/// In-service branches of `net` ordered by hop distance to `targets`'
/// endpoints, then by id; `targets` themselves are left out.
fn closest_branches(net: &Network, targets: &[usize], n: usize) -> Result<Vec<usize>> {
    let dist = hop_distances(net, &branch_endpoints(net, targets)?);
    let d = |bus: usize| dist[net.bus_index(bus).expect("validated")];
    let mut ranked: Vec<(usize, usize)> = net
        .in_service_branches()
        .filter(|b| !targets.contains(&b.id))
        .map(|b| (d(b.from_bus).min(d(b.to_bus)), b.id))
        .collect();
    ranked.sort_unstable();
    Ok(ranked.into_iter().take(n).map(|(_, id)| id).collect())
}

/// Closest branches to the contingency element: the `n` in-service branches
/// of the post-contingency network nearest to the outaged branch's buses.
pub fn baseline_cbce(net: &Network, contingency: &ContingencySpec, n: usize) -> Result<Vec<usize>> {
    let ContingencySpec::Branch(id) = *contingency else {
        return Err(Error::Config("CBCE needs a branch contingency".into()));
    };
    let post = contingency.apply(net)?;
    closest_branches(&post, &[id], n)
}

/// Closest branches to the violated elements of `net_post`, excluding the
/// violated branches themselves.
pub fn baseline_cbve(net_post: &Network, violations: &[usize], n: usize) -> Result<Vec<usize>> {
    if violations.is_empty() {
        return Err(Error::Config("CBVE needs at least one violated branch".into()));
    }
    closest_branches(net_post, violations, n)
}

/// Opens each candidate and runs a plain DC power flow with generation held
/// at `gen_mw` and loads unshed, counting the violations left.
pub fn baseline_evaluate_fixed(
    net_post: &Network,
    candidates: &[usize],
    gen_mw: &BTreeMap<usize, f64>,
    cfg: &BilevelConfig,
) -> Vec<CandidateEvaluation> {
    let bridge_ids = bridges(net_post);
    let mut out: Vec<CandidateEvaluation> = candidates
        .iter()
        .map(|&branch_id| {
            if bridge_ids.binary_search(&branch_id).is_ok() {
                return CandidateEvaluation::islanding(branch_id, None);
            }
            let clock = cfg.clock();
            let result = net_post.apply_branch_outage(branch_id).and_then(|switched| {
                let flows = dc_power_flow(&switched, &fixed_injections(&switched, gen_mw))?;
                Ok(violation_check(&flows, &switched, VIOLATION_TOLERANCE).len())
            });
            let (total_shed_mw, violation_count, solve_status) = match result {
                Ok(v) => (Some(0.0), v, EvaluationStatus::FixedInjection),
                Err(_) => (None, 0, EvaluationStatus::Failed),
            };
            CandidateEvaluation {
                branch_id,
                lodf_score: None,
                total_shed_mw,
                violation_count,
                islanding: false,
                solve_status,
                eval_time_s: clock.elapsed(),
            }
        })
        .collect();
    sort_evaluations(&mut out);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnumerationMode {
    /// Generation held at the given outputs, no shedding.
    Fixed(BTreeMap<usize, f64>),
    /// Full re-dispatch with shedding.
    Redispatch,
}

/// Evaluates every in-service, non-bridge branch of `net_post` as a candidate.
pub fn complete_enumeration(
    net_post: &Network,
    mode: &EnumerationMode,
    cfg: &BilevelConfig,
) -> Vec<CandidateEvaluation> {
    let bridge_ids = bridges(net_post);
    let ids: Vec<usize> =
        net_post.in_service_branches().map(|b| b.id).filter(|id| bridge_ids.binary_search(id).is_err()).collect();
    match mode {
        EnumerationMode::Fixed(gen_mw) => baseline_evaluate_fixed(net_post, &ids, gen_mw, cfg),
        EnumerationMode::Redispatch => {
            let all = BilevelConfig { stop_at_zero_shed: false, ..cfg.clone() };
            let list: Vec<(usize, Option<f64>)> = ids.into_iter().map(|id| (id, None)).collect();
            evaluate_candidates(net_post, &list, &all)
        }
    }
}
