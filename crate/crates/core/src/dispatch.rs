//! DC optimal dispatch with dispatchable (sheddable) loads.
//!
//! Variables are generator outputs, per-bus shed, branch flows and scaled
//! bus angles `phi = theta * base_mva`, so a branch with reactance `x` (p.u.)
//! carries `(phi_from - phi_to) / x` MW. Shedding is priced at `shed_weight`,
//! which must exceed every generator's marginal cost, so the optimum sheds
//! as little load as the network allows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::case::Network;
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpError};
use crate::sensitivity::BranchFlows;

pub const DEFAULT_SHED_WEIGHT: f64 = 1e4;

/// Relative overload ignored by the violation screen.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct DispatchProblem<'a> {
    pub net: &'a Network,
    pub allow_redispatch: bool,
    /// MW per generator id; required when `allow_redispatch` is false.
    pub fixed_gen_mw: Option<BTreeMap<usize, f64>>,
    pub shed_weight: f64,
    pub enforce_limits: bool,
}

impl<'a> DispatchProblem<'a> {
    /// Full re-dispatch with branch limits enforced.
    pub fn redispatch(net: &'a Network, shed_weight: f64) -> Self {
        DispatchProblem { net, allow_redispatch: true, fixed_gen_mw: None, shed_weight, enforce_limits: true }
    }

    /// Generators held at `gen_mw`, except units at the slack bus, which
    /// stay free within their limits to absorb the change in shed load.
    pub fn fixed(net: &'a Network, gen_mw: BTreeMap<usize, f64>, shed_weight: f64) -> Self {
        DispatchProblem { net, allow_redispatch: false, fixed_gen_mw: Some(gen_mw), shed_weight, enforce_limits: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shed_weight.is_finite() && self.shed_weight > 0.0) {
            return Err(Error::Config("shed weight must be positive".into()));
        }
        if let Some(g) = self.net.generators().iter().find(|g| g.cost_per_mwh >= self.shed_weight) {
            return Err(Error::Config(format!(
                "shed weight {} does not exceed the cost of generator {} ({})",
                self.shed_weight, g.id, g.cost_per_mwh
            )));
        }
        if !self.allow_redispatch {
            let fixed = self
                .fixed_gen_mw
                .as_ref()
                .ok_or_else(|| Error::Config("fixed generation required without re-dispatch".into()))?;
            for g in self.net.generators() {
                let mw = *fixed
                    .get(&g.id)
                    .ok_or_else(|| Error::Config(format!("no fixed output for generator {}", g.id)))?;
                if !(mw >= g.pmin_mw - 1e-6 && mw <= g.pmax_mw + 1e-6) {
                    return Err(Error::Config(format!(
                        "fixed output {mw} of generator {} is outside its limits",
                        g.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchStatus {
    Optimal,
    Infeasible,
}

/// For an infeasible problem the maps are empty and the objective and total
/// shed are `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispatchSolution {
    pub gen_mw: BTreeMap<usize, f64>,
    /// MW shed per bus id.
    pub shed_mw: BTreeMap<usize, f64>,
    pub flows_mw: BranchFlows,
    pub objective: f64,
    pub total_shed_mw: f64,
    pub status: DispatchStatus,
}

impl DispatchSolution {
    fn infeasible() -> Self {
        DispatchSolution {
            gen_mw: BTreeMap::new(),
            shed_mw: BTreeMap::new(),
            flows_mw: BranchFlows::new(),
            objective: f64::INFINITY,
            total_shed_mw: f64::INFINITY,
            status: DispatchStatus::Infeasible,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == DispatchStatus::Optimal
    }
}

/// Solves the load-shed minimizing DC dispatch.
pub fn solve_dispatch(p: &DispatchProblem) -> Result<DispatchSolution> {
    p.validate()?;
    let net = p.net;
    net.check_connected()?;

    let gens = net.generators();
    let buses = net.buses();
    let branches: Vec<_> = net.in_service_branches().collect();
    let (ng, nb, nl) = (gens.len(), buses.len(), branches.len());
    let shed0 = ng;
    let flow0 = ng + nb;
    let phi0 = ng + nb + nl;
    let nv = phi0 + nb;

    let flow_cap = net.total_capacity_mw() + net.total_load_mw() + 1.0;
    let angle_cap = branches.iter().map(|b| b.reactance_pu).sum::<f64>() * flow_cap + 1.0;
    let slack = net.slack_index();

    let mut c = vec![0.0; nv];
    let mut bounds = vec![(0.0, 0.0); nv];
    for (j, g) in gens.iter().enumerate() {
        c[j] = g.cost_per_mwh;
        bounds[j] = match (&p.fixed_gen_mw, p.allow_redispatch) {
            (Some(fixed), false) if g.bus != net.slack_bus() => {
                let v = fixed[&g.id].clamp(g.pmin_mw, g.pmax_mw);
                (v, v)
            }
            _ => (g.pmin_mw, g.pmax_mw),
        };
    }
    for (i, b) in buses.iter().enumerate() {
        c[shed0 + i] = p.shed_weight;
        bounds[shed0 + i] = (0.0, b.load_mw);
        bounds[phi0 + i] = if i == slack { (0.0, 0.0) } else { (-angle_cap, angle_cap) };
    }
    for (k, br) in branches.iter().enumerate() {
        let cap = if p.enforce_limits { br.rating_mw } else { flow_cap };
        bounds[flow0 + k] = (-cap, cap);
    }

    // rows: nodal balance per bus, then one flow definition per branch
    let mut a = DMatrix::zeros(nb + nl, nv);
    let mut rhs = vec![0.0; nb + nl];
    for (j, g) in gens.iter().enumerate() {
        a[(net.bus_index(g.bus).expect("validated"), j)] = 1.0;
    }
    for (i, b) in buses.iter().enumerate() {
        a[(i, shed0 + i)] = 1.0;
        rhs[i] = b.load_mw;
    }
    for (k, br) in branches.iter().enumerate() {
        let f = net.bus_index(br.from_bus).expect("validated");
        let t = net.bus_index(br.to_bus).expect("validated");
        a[(f, flow0 + k)] -= 1.0;
        a[(t, flow0 + k)] += 1.0;
        let row = nb + k;
        a[(row, flow0 + k)] = 1.0;
        a[(row, phi0 + f)] -= 1.0 / br.reactance_pu;
        a[(row, phi0 + t)] += 1.0 / br.reactance_pu;
    }

    let sol = match solve_lp(&c, &a, &rhs, &bounds) {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Ok(DispatchSolution::infeasible()),
        Err(e) => return Err(e.into()),
    };

    let gen_mw = gens.iter().enumerate().map(|(j, g)| (g.id, sol.x[j])).collect();
    let shed_mw: BTreeMap<usize, f64> = buses.iter().enumerate().map(|(i, b)| (b.id, sol.x[shed0 + i])).collect();
    let flows_mw = branches.iter().enumerate().map(|(k, br)| (br.id, sol.x[flow0 + k])).collect();
    Ok(DispatchSolution {
        gen_mw,
        total_shed_mw: shed_mw.values().sum(),
        shed_mw,
        flows_mw,
        objective: sol.objective,
        status: DispatchStatus::Optimal,
    })
}

/// Per-bus net injections (bus order) for fixed generator outputs and unshed
/// loads. Any imbalance, e.g. from a lost unit, is taken up at the slack bus.
pub fn fixed_injections(net: &Network, gen_mw: &BTreeMap<usize, f64>) -> Vec<f64> {
    let mut p: Vec<f64> = net.buses().iter().map(|b| -b.load_mw).collect();
    for g in net.generators() {
        if let Some(mw) = gen_mw.get(&g.id) {
            p[net.bus_index(g.bus).expect("validated")] += mw;
        }
    }
    let imbalance: f64 = p.iter().sum();
    p[net.slack_index()] -= imbalance;
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub branch: usize,
    pub flow_mw: f64,
    pub rating_mw: f64,
    pub overload_pct: f64,
}

/// Branches with `|flow| > rating * (1 + tolerance_frac)`, worst first.
pub fn violation_check(flows: &BranchFlows, net: &Network, tolerance_frac: f64) -> Vec<Violation> {
    let mut out: Vec<Violation> = flows
        .iter()
        .filter_map(|(&id, &flow_mw)| {
            let br = net.branch(id)?;
            (flow_mw.abs() > br.rating_mw * (1.0 + tolerance_frac)).then(|| Violation {
                branch: id,
                flow_mw,
                rating_mw: br.rating_mw,
                overload_pct: (flow_mw.abs() / br.rating_mw - 1.0) * 100.0,
            })
        })
        .collect();
    out.sort_by(|a, b| b.overload_pct.total_cmp(&a.overload_pct).then(a.branch.cmp(&b.branch)));
    out
}
