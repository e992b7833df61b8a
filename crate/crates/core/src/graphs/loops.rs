use super::lattice::LatticeGraph;

/// A simple cycle in canonical form.
///
/// `vertices` starts at the smallest vertex and runs in the direction whose
/// second vertex is smaller than the last; `edges[k]` joins `vertices[k]` and
/// `vertices[(k + 1) % len]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cycle {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Canonical form of a closed walk given by its vertices. Returns `None`
    /// if the walk is shorter than 3, repeats a vertex, or uses a non-edge.
    pub fn from_vertices(graph: &LatticeGraph, walk: &[usize]) -> Option<Self> {
        let n = walk.len();
        if n < 3 {
            return None;
        }
        let mut sorted = walk.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        let start = (0..n).min_by_key(|&k| walk[k])?;
        let forward: Vec<usize> = (0..n).map(|k| walk[(start + k) % n]).collect();
        let vertices = if forward[1] < forward[n - 1] {
            forward
        } else {
            (0..n).map(|k| walk[(start + n - k) % n]).collect()
        };
        let edges = (0..n)
            .map(|k| graph.edge_between(vertices[k], vertices[(k + 1) % n]))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { vertices, edges })
    }
}

/// All simple cycles of length `3..=l_max`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopSet {
    pub cycles: Vec<Cycle>,
    pub l_max: usize,
}

impl LoopSet {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Number of cycles of each length, indexed by length.
    pub fn census(&self) -> Vec<usize> {
        let mut out = vec![0; self.l_max + 1];
        for c in &self.cycles {
            out[c.len()] += 1;
        }
        out
    }

    pub fn contains(&self, cycle: &Cycle) -> bool {
        self.cycles.binary_search_by(|c| cmp_cycles(c, cycle)).is_ok()
    }
}

fn cmp_cycles(a: &Cycle, b: &Cycle) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.vertices.cmp(&b.vertices))
}

/// Enumerate every simple cycle with at most `l_max` edges.
///
/// Depth-first search from each root over vertices larger than the root; each
/// cycle is found once per orientation and kept in the orientation whose
/// second vertex is smaller than its last. Cycles are sorted by length, then
/// vertex sequence.
pub fn enumerate_loops(graph: &LatticeGraph, l_max: usize) -> LoopSet {
    let mut cycles = Vec::new();
    if l_max >= 3 {
        let mut path = Vec::with_capacity(l_max);
        let mut edges = Vec::with_capacity(l_max);
        let mut on_path = vec![false; graph.n_sites()];
        for root in 0..graph.n_sites() {
            path.push(root);
            on_path[root] = true;
            extend(graph, root, l_max, &mut path, &mut edges, &mut on_path, &mut cycles);
            on_path[root] = false;
            path.pop();
        }
    }
    cycles.sort_by(cmp_cycles);
    LoopSet { cycles, l_max }
}

fn extend(
    graph: &LatticeGraph,
    root: usize,
    l_max: usize,
    path: &mut Vec<usize>,
    edges: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Cycle>,
) {
    let here = *path.last().expect("path starts at the root");
    for &(next, edge) in graph.neighbors(here) {
        if next == root {
            if path.len() >= 3 && path[1] < here {
                let mut cycle_edges = edges.clone();
                cycle_edges.push(edge);
                out.push(Cycle {
                    vertices: path.clone(),
                    edges: cycle_edges,
                });
            }
            continue;
        }
        if next < root || on_path[next] || path.len() >= l_max {
            continue;
        }
        path.push(next);
        edges.push(edge);
        on_path[next] = true;
        extend(graph, root, l_max, path, edges, on_path, out);
        on_path[next] = false;
        edges.pop();
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::lattice::{build_cubic_dimer_lattice, build_square_lattice};

    #[test]
    fn zero_l_max_is_empty() {
        let g = build_cubic_dimer_lattice(3, true).unwrap();
        assert!(enumerate_loops(&g, 0).is_empty());
        assert!(enumerate_loops(&g, 2).is_empty());
    }

    #[test]
    fn single_plaquette() {
        let g = build_square_lattice(2, 2).unwrap();
        let loops = enumerate_loops(&g, 4);
        assert_eq!(loops.len(), 1);
        let c = &loops.cycles[0];
        assert_eq!(c.vertices, vec![0, 1, 3, 2]);
        assert_eq!(c.edges.len(), 4);
        assert!(enumerate_loops(&g, 3).is_empty());
    }

    #[test]
    fn empty_graph() {
        let g = LatticeGraph::from_edges(0, &[]).unwrap();
        assert!(enumerate_loops(&g, 7).is_empty());
    }

    #[test]
    fn canonical_form() {
        let g = build_square_lattice(2, 2).unwrap();
        let c = Cycle::from_vertices(&g, &[3, 1, 0, 2]).unwrap();
        assert_eq!(c.vertices, vec![0, 1, 3, 2]);
        assert!(enumerate_loops(&g, 4).contains(&c));
        assert!(Cycle::from_vertices(&g, &[0, 3, 1, 2]).is_none());
    }

    #[test]
    fn cube_census() {
        let g = build_cubic_dimer_lattice(2, false).unwrap();
        let census = enumerate_loops(&g, 8).census();
        // faces, 6-cycles around pairs of faces, and Hamiltonian cycles of Q3
        assert_eq!(census[3], 0);
        assert_eq!(census[4], 6);
        assert_eq!(census[6], 16);
        assert_eq!(census[8], 6);
    }
}
