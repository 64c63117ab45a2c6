//! Bus partitions, their induced line sets and the cut lines coupling them.
//!
//! Parts are numbered `0..K` internally. Partition documents and reports use
//! 1-based part numbers.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::case::NetworkCase;

/// Four consensus flows per cut line, in this order.
pub const FLOW_COMPONENTS: [&str; 4] = ["pf", "pt", "qf", "qt"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("invalid part count {k} for a network of {buses} buses")]
    InvalidK { k: usize, buses: usize },
    #[error("partition document does not assign bus {0}")]
    MissingBus(usize),
    #[error("partition document assigns unknown bus {0}")]
    UnknownBus(usize),
    #[error("partition document assigns bus {0} twice")]
    DuplicateBus(usize),
    #[error("part numbers must be 1..K with no empty part; part {0} is empty")]
    EmptyPart(usize),
    #[error("partition document line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// A cut line with its two parts. The part holding the from-bus carries sign +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CutLine {
    pub branch: usize,
    pub plus: usize,
    pub minus: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartitionFlags {
    /// Parts whose induced subgraph is disconnected.
    pub disconnected_parts: Vec<usize>,
    /// Part sizes violate the balance target.
    pub imbalanced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    num_parts: usize,
    assignment: BTreeMap<usize, usize>,
    part_lines: Vec<Vec<usize>>,
    cuts: Vec<CutLine>,
    pub flags: PartitionFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionStats {
    pub sizes: Vec<usize>,
    pub cut_count: usize,
    pub coupling_dimension: usize,
}

impl Partition {
    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    /// Bus id → part index.
    pub fn assignment(&self) -> &BTreeMap<usize, usize> {
        &self.assignment
    }

    pub fn part_of(&self, bus: usize) -> Option<usize> {
        self.assignment.get(&bus).copied()
    }

    /// Buses of part `k`, ascending.
    pub fn part_buses(&self, k: usize) -> Vec<usize> {
        self.assignment.iter().filter(|(_, &p)| p == k).map(|(&b, _)| b).collect()
    }

    /// Branch indices touching part `k`, ascending.
    pub fn part_lines(&self, k: usize) -> &[usize] {
        &self.part_lines[k]
    }

    /// Cut lines sorted by branch index.
    pub fn cut_lines(&self) -> &[CutLine] {
        &self.cuts
    }

    /// Cut lines touching part `k`, in global order.
    pub fn part_cuts(&self, k: usize) -> impl Iterator<Item = (usize, &CutLine)> {
        self.cuts.iter().enumerate().filter(move |(_, c)| c.plus == k || c.minus == k)
    }

    /// Length of the reduced multiplier vector.
    pub fn coupling_dimension(&self) -> usize {
        4 * self.cuts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_parts];
        for &p in self.assignment.values() {
            sizes[p] += 1;
        }
        sizes
    }

    /// Text document, one `bus part` record per line with 1-based parts.
    pub fn to_document(&self) -> String {
        let mut s = String::from("# bus part\n");
        for (b, p) in &self.assignment {
            s.push_str(&format!("{b} {}\n", p + 1));
        }
        s
    }
}

pub fn partition_stats(p: &Partition) -> PartitionStats {
    PartitionStats { sizes: p.sizes(), cut_count: p.cuts.len(), coupling_dimension: p.coupling_dimension() }
}

/// Index of component `comp` of cut line number `cut` in the reduced multiplier vector.
pub fn coupling_index(cut: usize, comp: usize) -> usize {
    4 * cut + comp
}

/// Derives line sets, cuts and ownership from a total bus assignment (0-based parts).
///
/// Panics if an active bus is unassigned.
pub fn compute_cuts(case: &NetworkCase, assignment: &BTreeMap<usize, usize>) -> Partition {
    let num_parts = assignment.values().max().map_or(0, |m| m + 1);
    let mut part_lines = vec![Vec::new(); num_parts];
    let mut cuts = Vec::new();
    for l in case.active_branches() {
        let br = &case.branches[l];
        let pf = assignment[&br.from_bus];
        let pt = assignment[&br.to_bus];
        part_lines[pf].push(l);
        if pt != pf {
            part_lines[pt].push(l);
            cuts.push(CutLine { branch: l, plus: pf, minus: pt });
        }
    }
    let mut p = Partition { num_parts, assignment: assignment.clone(), part_lines, cuts, flags: PartitionFlags::default() };
    p.flags.disconnected_parts = disconnected_parts(case, &p);
    p
}

fn adjacency(case: &NetworkCase) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> =
        case.active_bus_ids().into_iter().map(|b| (b, BTreeSet::new())).collect();
    for l in case.active_branches() {
        let br = &case.branches[l];
        if br.from_bus != br.to_bus {
            adj.get_mut(&br.from_bus).unwrap().insert(br.to_bus);
            adj.get_mut(&br.to_bus).unwrap().insert(br.from_bus);
        }
    }
    adj
}

fn connected_within(adj: &BTreeMap<usize, BTreeSet<usize>>, members: &BTreeSet<usize>) -> bool {
    let Some(&start) = members.iter().next() else {
        return true;
    };
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(b) = stack.pop() {
        for n in &adj[&b] {
            if members.contains(n) && seen.insert(*n) {
                stack.push(*n);
            }
        }
    }
    seen.len() == members.len()
}

fn disconnected_parts(case: &NetworkCase, p: &Partition) -> Vec<usize> {
    let adj = adjacency(case);
    (0..p.num_parts)
        .filter(|&k| {
            let members: BTreeSet<usize> = p.part_buses(k).into_iter().collect();
            !connected_within(&adj, &members)
        })
        .collect()
}

fn bfs_distances(adj: &BTreeMap<usize, BTreeSet<usize>>, root: usize) -> BTreeMap<usize, usize> {
    let mut dist = BTreeMap::from([(root, 0)]);
    let mut queue = VecDeque::from([root]);
    while let Some(b) = queue.pop_front() {
        let d = dist[&b];
        for &n in &adj[&b] {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(n) {
                e.insert(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Deterministic greedy BFS partitioner.
///
/// Roots are spread by farthest-first traversal starting from a seeded random
/// bus; parts then grow one bus per round, always extending the currently
/// smallest part that still has an unassigned neighbour. A final pass moves
/// boundary buses from oversized parts when that keeps the donor connected.
pub fn partition_greedy(case: &NetworkCase, k: usize, seed: u64) -> Result<Partition, PartitionError> {
    let buses = case.active_bus_ids();
    let n = buses.len();
    if k == 0 || k > n {
        return Err(PartitionError::InvalidK { k, buses: n });
    }
    let adj = adjacency(case);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roots = vec![buses[rng.gen_range(0..n)]];
    let mut min_dist: BTreeMap<usize, usize> = bfs_distances(&adj, roots[0]);
    while roots.len() < k {
        // unreachable buses count as infinitely far
        let next = buses
            .iter()
            .filter(|b| !roots.contains(b))
            .max_by(|a, b| {
                let da = min_dist.get(a).copied().unwrap_or(usize::MAX);
                let db = min_dist.get(b).copied().unwrap_or(usize::MAX);
                da.cmp(&db).then(b.cmp(a))
            })
            .copied()
            .expect("k <= n leaves a candidate root");
        roots.push(next);
        for (b, d) in bfs_distances(&adj, next) {
            let e = min_dist.entry(b).or_insert(d);
            *e = (*e).min(d);
        }
    }

    let mut assignment: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sizes = vec![0usize; k];
    let mut frontier: Vec<VecDeque<usize>> = vec![VecDeque::new(); k];
    for (p, &r) in roots.iter().enumerate() {
        assignment.insert(r, p);
        sizes[p] = 1;
        frontier[p].extend(adj[&r].iter().copied());
    }
    while assignment.len() < n {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&p| (sizes[p], p));
        let mut grown = false;
        for p in order {
            while let Some(b) = frontier[p].pop_front() {
                if assignment.contains_key(&b) {
                    continue;
                }
                assignment.insert(b, p);
                sizes[p] += 1;
                frontier[p].extend(adj[&b].iter().copied().filter(|x| !assignment.contains_key(x)));
                grown = true;
                break;
            }
            if grown {
                break;
            }
        }
        if !grown {
            // remaining buses are unreachable from every part
            let p = (0..k).min_by_key(|&p| (sizes[p], p)).unwrap();
            let b = *buses.iter().find(|b| !assignment.contains_key(b)).unwrap();
            assignment.insert(b, p);
            sizes[p] += 1;
            frontier[p].extend(adj[&b].iter().copied());
        }
    }

    rebalance(&adj, &mut assignment, k);
    let mut part = compute_cuts(case, &assignment);
    let sizes = part.sizes();
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    part.flags.imbalanced = spread > balance_tolerance(n, k);
    Ok(part)
}

/// Allowed max-min size spread: ⌈n/k⌉ − ⌊n/k⌋ + 1.
pub fn balance_tolerance(n: usize, k: usize) -> usize {
    n.div_ceil(k) - n / k + 1
}

fn rebalance(adj: &BTreeMap<usize, BTreeSet<usize>>, assignment: &mut BTreeMap<usize, usize>, k: usize) {
    let n = assignment.len();
    let target = n.div_ceil(k) - n / k;
    for _ in 0..n * k {
        let mut sizes = vec![0usize; k];
        for &p in assignment.values() {
            sizes[p] += 1;
        }
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        if spread <= target {
            return;
        }
        // best move: largest donor/receiver size difference, then lowest bus id
        let mut best: Option<(usize, usize, usize)> = None;
        for (&b, &from) in assignment.iter() {
            for nb in &adj[&b] {
                let to = assignment[nb];
                if to == from || sizes[from] < sizes[to] + 2 {
                    continue;
                }
                let gain = sizes[from] - sizes[to];
                if best.is_some_and(|(g, _, _)| g >= gain) {
                    continue;
                }
                let rest: BTreeSet<usize> =
                    assignment.iter().filter(|(&x, &p)| p == from && x != b).map(|(&x, _)| x).collect();
                if connected_within(adj, &rest) {
                    best = Some((gain, b, to));
                }
            }
        }
        match best {
            Some((_, b, to)) => {
                assignment.insert(b, to);
            }
            None => return,
        }
    }
}

/// Reads a `bus part` document (1-based parts, `#` comments) and derives the partition.
pub fn load_partition(document: &str, case: &NetworkCase) -> Result<Partition, PartitionError> {
    let active: BTreeSet<usize> = case.active_bus_ids().into_iter().collect();
    let mut raw: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, line) in document.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',' || c == ':').filter(|s| !s.is_empty()).collect();
        let malformed = |message: &str| PartitionError::Malformed { line: i + 1, message: message.into() };
        if fields.len() != 2 {
            return Err(malformed("expected `bus part`"));
        }
        let bus: usize = fields[0].parse().map_err(|_| malformed("bus id is not an integer"))?;
        let part: usize = fields[1].parse().map_err(|_| malformed("part is not an integer"))?;
        if part == 0 {
            return Err(malformed("parts are numbered from 1"));
        }
        if !active.contains(&bus) {
            return Err(PartitionError::UnknownBus(bus));
        }
        if raw.insert(bus, part - 1).is_some() {
            return Err(PartitionError::DuplicateBus(bus));
        }
    }
    if let Some(&missing) = active.iter().find(|b| !raw.contains_key(b)) {
        return Err(PartitionError::MissingBus(missing));
    }
    let k = raw.values().max().map_or(0, |m| m + 1);
    let used: BTreeSet<usize> = raw.values().copied().collect();
    if let Some(empty) = (0..k).find(|p| !used.contains(p)) {
        return Err(PartitionError::EmptyPart(empty + 1));
    }
    Ok(compute_cuts(case, &raw))
}

/// Every bus in one part.
pub fn trivial_partition(case: &NetworkCase) -> Partition {
    let assignment = case.active_bus_ids().into_iter().map(|b| (b, 0)).collect();
    compute_cuts(case, &assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Branch, Bus, BusType, NetworkCase};

    fn path3() -> NetworkCase {
        let bus = |id| Bus { id, bus_type: BusType::Pq, pd: 0.0, qd: 0.0, gs: 0.0, bs: 0.0, vmin: 0.9, vmax: 1.1 };
        let line = |f, t| Branch {
            from_bus: f,
            to_bus: t,
            r: 0.0,
            x: 0.1,
            b_charge: 0.0,
            tap: 0.0,
            shift: 0.0,
            s_max: 0.0,
            angmin: -0.5,
            angmax: 0.5,
            in_service: true,
        };
        NetworkCase {
            name: "path3".into(),
            base_mva: 100.0,
            buses: vec![bus(1), bus(2), bus(3)],
            generators: vec![],
            branches: vec![line(1, 2), line(2, 3)],
        }
    }

    #[test]
    fn path_cut_owned_by_from_part() {
        let case = path3();
        let a = BTreeMap::from([(1, 0), (2, 0), (3, 1)]);
        let p = compute_cuts(&case, &a);
        assert_eq!(p.cut_lines(), &[CutLine { branch: 1, plus: 0, minus: 1 }]);
        assert_eq!(p.part_lines(0), &[0, 1]);
        assert_eq!(p.part_lines(1), &[1]);
        assert_eq!(partition_stats(&p).coupling_dimension, 4);
    }

    #[test]
    fn reversed_line_changes_owner() {
        let mut case = path3();
        case.branches[1].from_bus = 3;
        case.branches[1].to_bus = 2;
        let p = compute_cuts(&case, &BTreeMap::from([(1, 0), (2, 0), (3, 1)]));
        assert_eq!(p.cut_lines()[0], CutLine { branch: 1, plus: 1, minus: 0 });
    }

    #[test]
    fn single_part_has_no_cuts() {
        let case = path3();
        let p = partition_greedy(&case, 1, 7).unwrap();
        assert_eq!(p.num_parts(), 1);
        assert!(p.cut_lines().is_empty());
        assert_eq!(partition_stats(&p).coupling_dimension, 0);
    }

    #[test]
    fn invalid_k() {
        let case = path3();
        assert_eq!(partition_greedy(&case, 0, 0), Err(PartitionError::InvalidK { k: 0, buses: 3 }));
        assert_eq!(partition_greedy(&case, 4, 0), Err(PartitionError::InvalidK { k: 4, buses: 3 }));
    }

    #[test]
    fn document_errors() {
        let case = path3();
        assert_eq!(load_partition("1 1\n2 1\n", &case), Err(PartitionError::MissingBus(3)));
        assert_eq!(load_partition("1 1\n2 1\n3 2\n9 1\n", &case), Err(PartitionError::UnknownBus(9)));
        assert_eq!(load_partition("1 1\n2 1\n3 3\n", &case), Err(PartitionError::EmptyPart(2)));
        assert!(matches!(load_partition("1 1 1\n", &case), Err(PartitionError::Malformed { line: 1, .. })));
        let p = load_partition("# comment\n1 1\n2 1\n3 2\n", &case).unwrap();
        assert_eq!(p.num_parts(), 2);
    }

    #[test]
    fn balance_tolerance_values() {
        assert_eq!(balance_tolerance(5, 2), 2);
        assert_eq!(balance_tolerance(30, 3), 1);
    }
}
