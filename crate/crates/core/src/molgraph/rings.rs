//! Ring perception.
//!
//! Ring bonds are exactly the non-bridge bonds. Within each ring system
//! (connected component of ring bonds) a minimum cycle basis is extracted
//! from Horton's candidate set with GF(2) elimination, giving the usual
//! smallest set of smallest rings.

use std::collections::{HashSet, VecDeque};

use super::MolecularGraph;

/// Fills atom and bond ring flags and the ring list.
pub fn perceive_rings(mut graph: MolecularGraph) -> MolecularGraph {
    let bond_in_ring = non_bridge_bonds(&graph);
    let rings = smallest_rings(&graph, &bond_in_ring);
    graph.set_ring_info(bond_in_ring, rings);
    graph
}

fn non_bridge_bonds(graph: &MolecularGraph) -> Vec<bool> {
    let n = graph.n_atoms();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; graph.n_bonds()];
    let mut time = 0;

    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (atom, bond used to enter, next incident index)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = time;
        low[root] = time;
        time += 1;
        while let Some(&mut (atom, via, ref mut next)) = stack.last_mut() {
            if let Some(&(nb, bond)) = graph.incident(atom).get(*next) {
                *next += 1;
                if bond == via {
                    continue;
                }
                if disc[nb] == usize::MAX {
                    disc[nb] = time;
                    low[nb] = time;
                    time += 1;
                    stack.push((nb, bond, 0));
                } else {
                    low[atom] = low[atom].min(disc[nb]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[atom]);
                    if low[atom] > disc[parent] {
                        is_bridge[via] = true;
                    }
                }
            }
        }
    }
    is_bridge.into_iter().map(|b| !b).collect()
}

type EdgeSet = Vec<u64>;

fn edge_set(words: usize, edges: &[usize]) -> EdgeSet {
    let mut set = vec![0u64; words];
    for &e in edges {
        set[e / 64] ^= 1 << (e % 64);
    }
    set
}

fn leading_bit(set: &EdgeSet) -> Option<usize> {
    set.iter()
        .enumerate()
        .rev()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
}

struct Candidate {
    atoms: Vec<usize>,
    edges: EdgeSet,
}

fn smallest_rings(graph: &MolecularGraph, bond_in_ring: &[bool]) -> Vec<Vec<usize>> {
    let n = graph.n_atoms();
    let ring_adj: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|a| {
            let mut v: Vec<(usize, usize)> = graph
                .incident(a)
                .iter()
                .copied()
                .filter(|&(_, b)| bond_in_ring[b])
                .collect();
            v.sort_unstable();
            v
        })
        .collect();

    let mut component = vec![usize::MAX; n];
    let mut systems: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX || ring_adj[start].is_empty() {
            continue;
        }
        let cid = systems.len();
        let mut members = vec![start];
        component[start] = cid;
        let mut i = 0;
        while i < members.len() {
            let a = members[i];
            i += 1;
            for &(nb, _) in &ring_adj[a] {
                if component[nb] == usize::MAX {
                    component[nb] = cid;
                    members.push(nb);
                }
            }
        }
        members.sort_unstable();
        systems.push(members);
    }

    let words = graph.n_bonds().div_ceil(64).max(1);
    let mut rings = Vec::new();
    for members in &systems {
        let edge_count: usize = members.iter().map(|&a| ring_adj[a].len()).sum::<usize>() / 2;
        let cyclomatic = edge_count + 1 - members.len();
        let mut candidates = horton_candidates(members, &ring_adj, n, words);
        candidates.sort_by(|a, b| {
            a.atoms.len().cmp(&b.atoms.len()).then_with(|| {
                let mut sa = a.atoms.clone();
                let mut sb = b.atoms.clone();
                sa.sort_unstable();
                sb.sort_unstable();
                sa.cmp(&sb)
            })
        });

        let mut basis: Vec<(usize, EdgeSet)> = Vec::new();
        let mut chosen = 0;
        for cand in candidates {
            if chosen == cyclomatic {
                break;
            }
            let mut v = cand.edges.clone();
            while let Some(lead) = leading_bit(&v) {
                match basis.iter().find(|(p, _)| *p == lead) {
                    Some((_, row)) => v.iter_mut().zip(row).for_each(|(a, b)| *a ^= b),
                    None => break,
                }
            }
            if let Some(lead) = leading_bit(&v) {
                basis.push((lead, v));
                rings.push(cand.atoms);
                chosen += 1;
            }
        }
    }
    rings
}

fn horton_candidates(
    members: &[usize],
    ring_adj: &[Vec<(usize, usize)>],
    n: usize,
    words: usize,
) -> Vec<Candidate> {
    let mut seen: HashSet<EdgeSet> = HashSet::new();
    let mut out = Vec::new();
    for &root in members {
        // BFS tree from root: parent atom and parent bond
        let mut parent = vec![(usize::MAX, usize::MAX); n];
        let mut dist = vec![usize::MAX; n];
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for &(nb, bond) in &ring_adj[a] {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[a] + 1;
                    parent[nb] = (a, bond);
                    queue.push_back(nb);
                }
            }
        }
        let path = |mut a: usize| {
            let mut atoms = vec![a];
            let mut bonds = Vec::new();
            while a != root {
                let (p, b) = parent[a];
                bonds.push(b);
                atoms.push(p);
                a = p;
            }
            (atoms, bonds)
        };
        for &x in members {
            for &(y, bond) in &ring_adj[x] {
                if x >= y {
                    continue;
                }
                let (px, bx) = path(x);
                let (py, by) = path(y);
                // paths must meet only at the root
                let sx: HashSet<usize> = px.iter().copied().collect();
                if py.iter().filter(|a| sx.contains(a)).count() != 1 {
                    continue;
                }
                if bx.contains(&bond) || by.contains(&bond) {
                    continue;
                }
                let mut edges: Vec<usize> = bx.iter().chain(&by).copied().collect();
                edges.push(bond);
                let set = edge_set(words, &edges);
                if !seen.insert(set.clone()) {
                    continue;
                }
                // cycle order: root .. x, y .. root(excluded)
                let mut atoms: Vec<usize> = px.iter().rev().copied().collect();
                atoms.extend(py.iter().take(py.len() - 1));
                out.push(Candidate { atoms, edges: set });
            }
        }
    }
    out
}
