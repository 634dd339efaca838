//! Graph queries on the in-service branch graph: connectivity, bridges and
//! hop distances. Parallel branches are distinct edges, so a double circuit
//! is never a bridge.

use std::collections::VecDeque;

use crate::case::Network;
use crate::error::{Error, Result};

/// Adjacency lists over bus positions; each entry is (neighbor, branch id).
fn adjacency(net: &Network) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); net.buses().len()];
    for br in net.in_service_branches() {
        let f = net.bus_index(br.from_bus).expect("validated");
        let t = net.bus_index(br.to_bus).expect("validated");
        adj[f].push((t, br.id));
        adj[t].push((f, br.id));
    }
    adj
}

/// First bus (in bus order) not reachable from the slack bus, if any.
pub fn unreachable_bus(net: &Network) -> Option<usize> {
    let adj = adjacency(net);
    let mut seen = vec![false; adj.len()];
    let start = net.slack_index();
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.iter().position(|s| !s).map(|i| net.buses()[i].id)
}

/// Ids of all in-service bridge branches, ascending.
///
/// Iterative low-link DFS keyed on the entering edge, so parallel branches
/// between the same pair of buses are handled correctly.
pub fn bridges(net: &Network) -> Vec<usize> {
    let adj = adjacency(net);
    let n = adj.len();
    let mut order = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut out = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if order[root] != usize::MAX {
            continue;
        }
        // (vertex, edge used to enter it, next adjacency slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, 0, 0)];
        order[root] = counter;
        low[root] = counter;
        counter += 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (u, via, next) = stack[top];
            if next < adj[u].len() {
                let (v, edge) = adj[u][next];
                stack[top].2 += 1;
                if edge == via {
                    continue;
                }
                if order[v] == usize::MAX {
                    order[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push((v, edge, 0));
                } else {
                    low[u] = low[u].min(order[v]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[u]);
                    if low[u] > order[parent] {
                        out.push(via);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// True iff taking the branch out disconnects the in-service graph.
pub fn is_bridge(net: &Network, branch_id: usize) -> Result<bool> {
    let br = net.branch(branch_id).ok_or(Error::UnknownBranch(branch_id))?;
    if !br.in_service {
        return Err(Error::BranchOutOfService(branch_id));
    }
    Ok(bridges(net).binary_search(&branch_id).is_ok())
}

/// Bus-hop distance from the nearest of `sources` to every bus (in bus order).
/// Unreachable buses get `usize::MAX`.
pub fn hop_distances(net: &Network, sources: &[usize]) -> Vec<usize> {
    let adj = adjacency(net);
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &bus in sources {
        if let Some(i) = net.bus_index(bus) {
            if dist[i] != 0 {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
    }
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
