//! DC network linearization: susceptance matrix, DC power flow, PTDF and LODF.
//!
//! Angles are carried in radians and branch flows in MW, so a branch with
//! reactance `x` (p.u.) carries `base_mva / x * (theta_from - theta_to)`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::case::Network;
use crate::error::{Error, Result};

/// Per-branch MW flows keyed by branch ordinal; positive from `from_bus` to `to_bus`.
pub type BranchFlows = BTreeMap<usize, f64>;

/// Denominators `1 - PTDF(k, t_k)` below this mark branch k as a bridge.
pub const BRIDGE_TOLERANCE: f64 = 1e-6;

const BALANCE_TOLERANCE_MW: f64 = 1e-6;

/// Full nodal susceptance matrix over bus positions (MW/rad).
pub fn susceptance_matrix(net: &Network) -> DMatrix<f64> {
    let n = net.buses().len();
    let mut b = DMatrix::zeros(n, n);
    for br in net.in_service_branches() {
        let f = net.bus_index(br.from_bus).expect("validated");
        let t = net.bus_index(br.to_bus).expect("validated");
        let y = br.susceptance_mw(net.base_mva());
        b[(f, f)] += y;
        b[(t, t)] += y;
        b[(f, t)] -= y;
        b[(t, f)] -= y;
    }
    b
}

/// Inverse of the susceptance matrix with the reference row/column removed,
/// re-embedded with zeros at the reference position.
fn reduced_inverse(net: &Network, ref_idx: usize) -> Result<DMatrix<f64>> {
    net.check_connected()?;
    let n = net.buses().len();
    let keep: Vec<usize> = (0..n).filter(|&i| i != ref_idx).collect();
    let full = susceptance_matrix(net);
    let reduced = full.select_rows(&keep).select_columns(&keep);
    let inv = reduced.lu().try_inverse().ok_or(Error::Singular)?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let mut x = DMatrix::zeros(n, n);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            x[(i, j)] = inv[(a, b)];
        }
    }
    Ok(x)
}

fn check_balance(net: &Network, injections: &[f64]) -> Result<()> {
    if injections.len() != net.buses().len() {
        return Err(Error::Config(format!("expected {} bus injections, got {}", net.buses().len(), injections.len())));
    }
    let sum: f64 = injections.iter().sum();
    let scale: f64 = injections.iter().map(|p| p.abs()).sum();
    if sum.abs() > BALANCE_TOLERANCE_MW.max(1e-12 * scale) {
        return Err(Error::Unbalanced(sum));
    }
    Ok(())
}

/// Solves the DC power flow for balanced per-bus injections (MW, bus order)
/// with the slack angle fixed at zero.
pub fn dc_power_flow(net: &Network, injections: &[f64]) -> Result<BranchFlows> {
    check_balance(net, injections)?;
    net.check_connected()?;
    let n = net.buses().len();
    let slack = net.slack_index();
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let full = susceptance_matrix(net);
    let reduced = full.select_rows(&keep).select_columns(&keep);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&i| injections[i]));
    let solved = reduced.lu().solve(&rhs).ok_or(Error::Singular)?;
    let mut theta = vec![0.0; n];
    for (a, &i) in keep.iter().enumerate() {
        theta[i] = solved[a];
    }
    Ok(flows_from_angles(net, &theta))
}

pub(crate) fn flows_from_angles(net: &Network, theta: &[f64]) -> BranchFlows {
    net.in_service_branches()
        .map(|br| {
            let f = net.bus_index(br.from_bus).expect("validated");
            let t = net.bus_index(br.to_bus).expect("validated");
            (br.id, br.susceptance_mw(net.base_mva()) * (theta[f] - theta[t]))
        })
        .collect()
}

/// Branch-by-bus injection shift factors.
#[derive(Clone, Debug, PartialEq)]
pub struct PtdfMatrix {
    /// Rows follow `branch_ids`, columns follow `bus_ids`.
    pub values: DMatrix<f64>,
    pub branch_ids: Vec<usize>,
    pub bus_ids: Vec<usize>,
    pub ref_bus: usize,
}

impl PtdfMatrix {
    pub fn row(&self, branch_id: usize) -> Option<usize> {
        self.branch_ids.binary_search(&branch_id).ok()
    }

    pub fn get(&self, branch_id: usize, bus_id: usize) -> Option<f64> {
        let r = self.row(branch_id)?;
        let c = self.bus_ids.iter().position(|&b| b == bus_id)?;
        Some(self.values[(r, c)])
    }

    /// Flows for a balanced injection vector in bus order.
    pub fn flows(&self, injections: &[f64]) -> BranchFlows {
        let p = DVector::from_column_slice(injections);
        let f = &self.values * p;
        self.branch_ids.iter().copied().zip(f.iter().copied()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, &self.branch_ids, &self.bus_ids, &self.values)
    }
}

pub fn compute_ptdf(net: &Network) -> Result<PtdfMatrix> {
    compute_ptdf_with_ref(net, net.slack_bus())
}

/// PTDF with an explicit reference (withdrawal) bus.
pub fn compute_ptdf_with_ref(net: &Network, ref_bus: usize) -> Result<PtdfMatrix> {
    let ref_idx = net.bus_index(ref_bus).ok_or(Error::UnknownBus(ref_bus))?;
    let x = reduced_inverse(net, ref_idx)?;
    let branches: Vec<_> = net.in_service_branches().collect();
    let n = net.buses().len();
    let mut values = DMatrix::zeros(branches.len(), n);
    for (r, br) in branches.iter().enumerate() {
        let f = net.bus_index(br.from_bus).expect("validated");
        let t = net.bus_index(br.to_bus).expect("validated");
        let y = br.susceptance_mw(net.base_mva());
        for c in 0..n {
            values[(r, c)] = y * (x[(f, c)] - x[(t, c)]);
        }
    }
    Ok(PtdfMatrix {
        values,
        branch_ids: branches.iter().map(|b| b.id).collect(),
        bus_ids: net.buses().iter().map(|b| b.id).collect(),
        ref_bus,
    })
}

/// Branch-by-branch outage distribution factors.
///
/// Entry `(l, k)` is the share of branch k's pre-outage flow that appears on
/// branch l once k is opened. Columns of bridge branches hold NaN off the
/// diagonal and are flagged in `bridge_mask`.
#[derive(Clone, Debug)]
pub struct LodfMatrix {
    pub values: DMatrix<f64>,
    pub branch_ids: Vec<usize>,
    pub bridge_mask: Vec<bool>,
}

impl LodfMatrix {
    pub fn index(&self, branch_id: usize) -> Option<usize> {
        self.branch_ids.binary_search(&branch_id).ok()
    }

    /// `None` when either branch is unknown or `outaged` is a bridge.
    pub fn get(&self, monitored: usize, outaged: usize) -> Option<f64> {
        let l = self.index(monitored)?;
        let k = self.index(outaged)?;
        if self.bridge_mask[k] {
            return None;
        }
        Some(self.values[(l, k)])
    }

    pub fn is_bridge(&self, branch_id: usize) -> Option<bool> {
        self.index(branch_id).map(|k| self.bridge_mask[k])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(out, &self.branch_ids, &self.branch_ids, &self.values)
    }
}

pub fn compute_lodf(ptdf: &PtdfMatrix, net: &Network) -> Result<LodfMatrix> {
    let ids: Vec<usize> = net.in_service_branches().map(|b| b.id).collect();
    if ids != ptdf.branch_ids {
        return Err(Error::Config("PTDF was computed for a different topology".into()));
    }
    let nl = ids.len();
    let mut values = DMatrix::zeros(nl, nl);
    let mut bridge_mask = vec![false; nl];
    for (k, &kid) in ids.iter().enumerate() {
        let br = net.branch(kid).expect("in service");
        let f = net.bus_index(br.from_bus).expect("validated");
        let t = net.bus_index(br.to_bus).expect("validated");
        // flow response of every branch to a unit transfer from f to t
        let transfer: Vec<f64> = (0..nl).map(|l| ptdf.values[(l, f)] - ptdf.values[(l, t)]).collect();
        let denom = 1.0 - transfer[k];
        if denom.abs() < BRIDGE_TOLERANCE {
            bridge_mask[k] = true;
            for l in 0..nl {
                values[(l, k)] = f64::NAN;
            }
        } else {
            for l in 0..nl {
                values[(l, k)] = transfer[l] / denom;
            }
        }
        values[(k, k)] = -1.0;
    }
    Ok(LodfMatrix { values, branch_ids: ids, bridge_mask })
}

/// Post-outage flows predicted from pre-outage flows and the LODF column of `outaged`.
pub fn predict_outage_flows(flows: &BranchFlows, lodf: &LodfMatrix, outaged: usize) -> Result<BranchFlows> {
    let k = lodf.index(outaged).ok_or(Error::UnknownBranch(outaged))?;
    if lodf.bridge_mask[k] {
        return Err(Error::Bridge(outaged));
    }
    let fk = *flows.get(&outaged).ok_or(Error::UnknownBranch(outaged))?;
    let mut out = BranchFlows::new();
    for (l, &lid) in lodf.branch_ids.iter().enumerate() {
        let fl = *flows.get(&lid).ok_or(Error::UnknownBranch(lid))?;
        let v = if lid == outaged { 0.0 } else { fl + lodf.values[(l, k)] * fk };
        out.insert(lid, v);
    }
    Ok(out)
}

fn write_matrix_csv<W: Write>(out: W, rows: &[usize], cols: &[usize], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["branch".to_string()];
    header.extend(cols.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (r, id) in rows.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend((0..cols.len()).map(|c| format_value(values[(r, c)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    // avoid "-0.000000000"
    let v = if v.abs() < 5e-10 { 0.0 } else { v };
    format!("{v:.9}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{fixtures, load_case};
    use approx::assert_abs_diff_eq;

    fn case(nbus: usize, branches: &[(usize, usize, f64)]) -> Network {
        let buses: Vec<String> = (1..=nbus).map(|i| format!(r#"{{"id": {i}, "load_mw": 0}}"#)).collect();
        let brs: Vec<String> = branches
            .iter()
            .map(|(f, t, x)| format!(r#"{{"from": {f}, "to": {t}, "x_pu": {x}, "rating_mw": 100}}"#))
            .collect();
        load_case(&format!(
            r#"{{"base_mva": 100, "slack_bus": {nbus}, "buses": [{}], "branches": [{}], "generators": []}}"#,
            buses.join(","),
            brs.join(",")
        ))
        .unwrap()
    }

    /// Branches (1,2), (2,3), (1,3), equal reactance; reference bus 3.
    fn triangle() -> Network {
        case(3, &[(1, 2, 0.1), (2, 3, 0.1), (1, 3, 0.1)])
    }

    fn two_bus() -> Network {
        case(2, &[(1, 2, 0.2)])
    }

    // Hand solution of the reduced nodal system for +100 at bus 1, -100 at bus 3
    // (theta_3 = 0, b = 1000 MW/rad):
    //   2000 th1 - 1000 th2 = 100,  -1000 th1 + 2000 th2 = 0
    //   => th1 = 1/15, th2 = 1/30
    //   f13 = 1000/15 = 66.667, f12 = f23 = 1000/30 = 33.333
    #[test]
    fn triangle_power_flow() {
        let f = dc_power_flow(&triangle(), &[100.0, 0.0, -100.0]).unwrap();
        assert_abs_diff_eq!(f[&3], 200.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f[&1], 100.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f[&2], 100.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_injection_zero_flow() {
        let f = dc_power_flow(&triangle(), &[0.0; 3]).unwrap();
        assert!(f.values().all(|v| *v == 0.0));
    }

    #[test]
    fn radial_pair_carries_everything() {
        let f = dc_power_flow(&two_bus(), &[50.0, -50.0]).unwrap();
        assert_abs_diff_eq!(f[&1], 50.0, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_or_disconnected_is_rejected() {
        assert!(matches!(dc_power_flow(&triangle(), &[1.0, 0.0, 0.0]), Err(Error::Unbalanced(_))));
        let split = two_bus().apply_branch_outage(1).unwrap();
        assert!(matches!(dc_power_flow(&split, &[0.0, 0.0]), Err(Error::Disconnected(_))));
        assert!(matches!(compute_ptdf(&split), Err(Error::Disconnected(_))));
    }

    #[test]
    fn ptdf_entries() {
        let tri = triangle();
        let p = compute_ptdf(&tri).unwrap();
        assert_abs_diff_eq!(p.get(3, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        for r in 0..3 {
            assert_eq!(p.values[(r, 2)], 0.0);
        }
        let p2 = compute_ptdf(&two_bus()).unwrap();
        assert_abs_diff_eq!(p2.get(1, 1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ptdf_entries_bounded_on_ieee39() {
        let p = compute_ptdf(&fixtures::ieee39()).unwrap();
        assert!(p.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn triangle_lodf() {
        let tri = triangle();
        let lodf = compute_lodf(&compute_ptdf(&tri).unwrap(), &tri).unwrap();
        // all of (1,3)'s flow moves onto the 1-2-3 path
        assert_abs_diff_eq!(lodf.get(1, 3).unwrap(), 1.0, epsilon = 1e-12);
        for k in 1..=3 {
            assert_eq!(lodf.get(k, k), Some(-1.0));
        }
        assert!(lodf.bridge_mask.iter().all(|b| !b));
    }

    #[test]
    fn lone_branch_is_bridge_column() {
        let net = two_bus();
        let lodf = compute_lodf(&compute_ptdf(&net).unwrap(), &net).unwrap();
        assert_eq!(lodf.bridge_mask, vec![true]);
        assert_eq!(lodf.values[(0, 0)], -1.0);
        assert_eq!(lodf.get(1, 1), None);
    }

    #[test]
    fn lodf_bridges_agree_with_topology() {
        let post = fixtures::ieee39().apply_branch_outage(35).unwrap();
        let lodf = compute_lodf(&compute_ptdf(&post).unwrap(), &post).unwrap();
        let flagged: Vec<usize> =
            lodf.branch_ids.iter().zip(&lodf.bridge_mask).filter(|(_, b)| **b).map(|(id, _)| *id).collect();
        assert_eq!(flagged, crate::topology::bridges(&post));
    }

    #[test]
    fn lodf_rejects_mismatched_topology() {
        let net = fixtures::ieee39();
        let ptdf = compute_ptdf(&net).unwrap();
        let post = net.apply_branch_outage(35).unwrap();
        assert!(compute_lodf(&ptdf, &post).is_err());
    }

    #[test]
    fn triangle_outage_prediction_matches_resolve() {
        let tri = triangle();
        let inj = [100.0, 0.0, -100.0];
        let flows = dc_power_flow(&tri, &inj).unwrap();
        let lodf = compute_lodf(&compute_ptdf(&tri).unwrap(), &tri).unwrap();
        let pred = predict_outage_flows(&flows, &lodf, 3).unwrap();
        assert_abs_diff_eq!(pred[&1], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pred[&2], 100.0, epsilon = 1e-9);
        assert_eq!(pred[&3], 0.0);
        let resolved = dc_power_flow(&tri.apply_branch_outage(3).unwrap(), &inj).unwrap();
        for (id, v) in resolved {
            assert_abs_diff_eq!(pred[&id], v, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_flow_outage_changes_nothing() {
        let tri = triangle();
        let lodf = compute_lodf(&compute_ptdf(&tri).unwrap(), &tri).unwrap();
        let flows = BranchFlows::from([(1, 10.0), (2, 10.0), (3, 0.0)]);
        let pred = predict_outage_flows(&flows, &lodf, 3).unwrap();
        assert_eq!(pred, flows);
    }

    #[test]
    fn bridge_outage_prediction_errors() {
        let net = two_bus();
        let lodf = compute_lodf(&compute_ptdf(&net).unwrap(), &net).unwrap();
        let flows = BranchFlows::from([(1, 50.0)]);
        assert!(matches!(predict_outage_flows(&flows, &lodf, 1), Err(Error::Bridge(1))));
    }

    #[test]
    fn csv_dump_has_ordinal_headers() {
        let tri = triangle();
        let lodf = compute_lodf(&compute_ptdf(&tri).unwrap(), &tri).unwrap();
        let mut buf = Vec::new();
        lodf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("branch,1,2,3"));
        assert!(lines.next().unwrap().starts_with("1,-1.000000000,"));
    }
}
