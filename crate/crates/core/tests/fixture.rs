//! Behaviour of the bundled 39-bus case under the modified load profile.

use std::collections::VecDeque;

use gridswitch::case::fixtures::{self, REFERENCE_CANDIDATES, REFERENCE_CONTINGENCY, REFERENCE_OVERLOADS};
use gridswitch::contingency::{
    pre_contingency_dispatch, run_baselines, scenario_b, scenario_c_detail, screen_n1, ContingencySpec,
};
use gridswitch::dispatch::{violation_check, VIOLATION_TOLERANCE};
use gridswitch::switching::{baseline_cbce, baseline_cbve, best_of, find_lbr, find_lsb, run_bilevel, BilevelConfig};
use gridswitch::topology::bridges;
use gridswitch::Network;

fn quiet() -> BilevelConfig {
    BilevelConfig { timing: false, ..Default::default() }
}

fn branch35() -> ContingencySpec {
    ContingencySpec::Branch(REFERENCE_CONTINGENCY)
}

/// Plain BFS hop distance between two buses over in-service branches.
fn bfs(net: &Network, from: usize, to: usize) -> usize {
    let mut dist = std::collections::HashMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            return dist[&u];
        }
        for b in net.in_service_branches().filter(|b| b.touches(u)) {
            let v = if b.from_bus == u { b.to_bus } else { b.from_bus };
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                queue.push_back(v);
            }
        }
    }
    usize::MAX
}

/// Reference closest-branch list: distance from any endpoint of each
/// candidate to any endpoint of any target, ties by id.
fn closest_oracle(net: &Network, targets: &[usize], n: usize) -> Vec<usize> {
    let ends: Vec<usize> =
        targets.iter().flat_map(|&t| net.branch(t).map(|b| [b.from_bus, b.to_bus]).unwrap()).collect();
    let mut ranked: Vec<(usize, usize)> = net
        .in_service_branches()
        .filter(|b| !targets.contains(&b.id))
        .map(|b| {
            let d = ends.iter().flat_map(|&e| [bfs(net, b.from_bus, e), bfs(net, b.to_bus, e)]).min().unwrap();
            (d, b.id)
        })
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().take(n).map(|x| x.1).collect()
}

#[test]
fn pre_contingency_point_is_secure() {
    let net = fixtures::ieee39_modified();
    let pre = pre_contingency_dispatch(&net, &quiet()).unwrap();
    assert!(pre.total_shed_mw <= 1e-6);
    assert!(violation_check(&pre.flows_mw, &net, VIOLATION_TOLERANCE).is_empty());
    let gen: f64 = pre.gen_mw.values().sum();
    assert!((gen - 6229.7877).abs() < 1e-6);
}

#[test]
fn branch35_outage_makes_the_corridor_radial() {
    let net = fixtures::ieee39_modified();
    let post = branch35().apply(&net).unwrap();
    let b = bridges(&post);
    for id in REFERENCE_OVERLOADS {
        assert!(b.contains(&id), "branch {id} should be a bridge after the outage");
    }
    assert!(bridges(&net).iter().all(|id| !REFERENCE_OVERLOADS.contains(id)));
}

#[test]
fn branch35_level1_needs_no_shedding_in_dc() {
    // Re-dispatch lowers the units inside the radial pocket and the overloads
    // disappear; the second level has nothing to do.
    let net = fixtures::ieee39_modified();
    let post = branch35().apply(&net).unwrap();
    let level1 =
        gridswitch::dispatch::solve_dispatch(&gridswitch::dispatch::DispatchProblem::redispatch(&post, 1e4)).unwrap();
    assert!(level1.total_shed_mw <= 1e-3);
    assert!(find_lsb(&level1, 1e-3).is_empty());
    assert!(find_lbr(&post, &level1.flows_mw, &[], 0.95).is_empty());
    let report = run_bilevel(&net, &branch35(), &quiet()).unwrap();
    assert!(report.lsb.is_empty() && report.candidates.is_empty() && report.best.is_empty());
    assert_eq!(scenario_b(&net, &branch35(), &quiet()).unwrap().total_shed_mw, Some(report.level1_shed_mw));
}

#[test]
fn baseline_lists_match_bfs_oracle() {
    let net = fixtures::ieee39_modified();
    let post = branch35().apply(&net).unwrap();
    let cbce = baseline_cbce(&net, &branch35(), 10).unwrap();
    assert_eq!(cbce.len(), 10);
    assert_eq!(cbce, closest_oracle(&post, &[REFERENCE_CONTINGENCY], 10));
    let cbve = baseline_cbve(&post, &REFERENCE_OVERLOADS, 10).unwrap();
    assert_eq!(cbve, closest_oracle(&post, &REFERENCE_OVERLOADS, 10));
    assert!(cbve.iter().all(|id| !REFERENCE_OVERLOADS.contains(id)));
    // more than there are branches: everything, in distance order
    assert_eq!(baseline_cbce(&net, &branch35(), 100).unwrap().len(), post.in_service_count());
}

#[test]
fn baselines_leave_the_overloads_in_place() {
    let net = fixtures::ieee39_modified();
    let report = run_baselines(&net, &branch35(), 10, &quiet()).unwrap();
    let mut violated = report.violations.clone();
    violated.sort_unstable();
    assert_eq!(violated, REFERENCE_OVERLOADS);
    assert_eq!(report.methods.iter().map(|m| m.method.as_str()).collect::<Vec<_>>(), ["CBCE", "CBVE", "CE"]);
    for m in &report.methods {
        // the pocket export is fixed by the held generation, so no single
        // opening that keeps the network whole can relieve the corridor
        assert!(m.row.violation_count > 0, "{}", m.method);
        assert!(m.cleared_by.is_empty(), "{}", m.method);
        for e in &m.evaluations {
            assert!(e.islanding || e.violation_count > 0);
        }
    }
    assert!(!report.has_discrepancy());
}

#[test]
fn complete_enumeration_with_redispatch_finds_the_reference_candidates() {
    let net = fixtures::ieee39_modified();
    let c = scenario_c_detail(&net, &branch35(), &quiet()).unwrap();
    assert_eq!(c.row.total_shed_mw, Some(0.0));
    let (shed, best) = best_of(&c.evaluations).unwrap();
    assert!(shed <= 1e-3);
    for id in REFERENCE_CANDIDATES {
        assert!(best.contains(&id), "candidate {id} missing from {best:?}");
    }
    assert_eq!(c.row.best_candidates, best);
}

#[test]
fn generator_outages_reach_the_second_level() {
    let net = fixtures::ieee39_modified();
    // unit 4 sits at bus 33; losing it forces shedding behind branch 3 (2-3)
    let report = run_bilevel(&net, &ContingencySpec::Generator(4), &quiet()).unwrap();
    assert!(report.level1_shed_mw > 100.0);
    assert_eq!(report.lsb, vec![3]);
    assert_eq!(report.lbr, vec![3]);
    assert_eq!(report.lbr_threshold, Some(0.95));
    assert_eq!(report.candidates.len(), 10);
    assert_eq!(report.best, vec![4]);
    assert!(report.best_shed_mw <= 1e-3);
    let ce = scenario_c_detail(&net, &ContingencySpec::Generator(4), &quiet()).unwrap();
    assert!((ce.row.total_shed_mw.unwrap() - report.best_shed_mw).abs() <= 1e-3);
    assert!(report.candidates.len() < ce.evaluations.len());
}

#[test]
fn lodf_basis_is_irrelevant_for_generator_outages() {
    let net = fixtures::ieee39_modified();
    let g = ContingencySpec::Generator(5);
    let pre =
        run_bilevel(&net, &g, &BilevelConfig { lodf_basis: gridswitch::switching::LodfBasis::Pre, ..quiet() }).unwrap();
    let post = run_bilevel(&net, &g, &quiet()).unwrap();
    // a generator outage leaves the topology alone, so both bases agree
    assert_eq!(pre, post);
}

#[test]
fn stop_at_zero_shed_cuts_evaluation_short() {
    let net = fixtures::ieee39_modified();
    let g = ContingencySpec::Generator(5);
    let full = run_bilevel(&net, &g, &quiet()).unwrap();
    let short = run_bilevel(&net, &g, &BilevelConfig { stop_at_zero_shed: true, ..quiet() }).unwrap();
    assert_eq!(short.candidates.len(), 1);
    assert_eq!(short.best_shed_mw, full.best_shed_mw);
    assert!(full.best.contains(&short.best[0]));
}

#[test]
fn screening_agrees_with_bilevel_early_exit() {
    let net = fixtures::ieee39_modified();
    let rows = screen_n1(&net, &quiet()).unwrap();
    assert_eq!(rows.len(), net.in_service_count() + net.generators().len());
    let islanded: Vec<usize> = rows.iter().filter(|r| r.islanded).map(|r| r.contingency.element_id()).collect();
    assert_eq!(islanded, bridges(&net));
    for r in rows.iter().filter(|r| !r.islanded) {
        let report = run_bilevel(&net, &r.contingency, &quiet()).unwrap();
        assert_eq!(Some(report.level1_shed_mw), r.level1_shed_mw);
        if !r.needs_level2 {
            assert!(report.lsb.is_empty() && report.candidates.is_empty(), "{}", r.contingency);
        }
    }
    let b35 = rows.iter().find(|r| r.contingency == branch35()).unwrap();
    assert_eq!(b35.violation_count_fixed, Some(3));
    assert!(!b35.needs_level2);
}
