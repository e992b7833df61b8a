use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry family of a [`LatticeGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    /// Simple cubic lattice whose sites are two-spin dimers.
    CubicDimer,
    /// Diamond cubic lattice, see [`build_diamond_lattice`].
    Diamond,
    /// Open square grid.
    Square,
    /// Arbitrary graph given as an edge list (trees, rings, test graphs).
    Custom,
}

impl LatticeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LatticeKind::CubicDimer => "cubic_dimer",
            LatticeKind::Diamond => "diamond",
            LatticeKind::Square => "square",
            LatticeKind::Custom => "custom",
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic_dimer" => Ok(LatticeKind::CubicDimer),
            "diamond" => Ok(LatticeKind::Diamond),
            "square" => Ok(LatticeKind::Square),
            "custom" => Ok(LatticeKind::Custom),
            other => Err(Error::Config(format!("unknown lattice kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(Error::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Undirected edge with `u < v` and a lattice-direction label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub dir: u8,
}

impl Edge {
    /// The endpoint opposite to `site`.
    pub fn other(&self, site: usize) -> usize {
        if site == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Simple undirected graph with integer site coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeGraph {
    kind: LatticeKind,
    dims: [usize; 3],
    boundary: [Boundary; 3],
    sites: Vec<[i32; 3]>,
    edges: Vec<Edge>,
    // per site: (neighbor, edge index), in edge insertion order
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl LatticeGraph {
    fn assemble(
        kind: LatticeKind,
        dims: [usize; 3],
        boundary: [Boundary; 3],
        sites: Vec<[i32; 3]>,
        raw_edges: impl IntoIterator<Item = (usize, usize, u8)>,
    ) -> Result<Self> {
        let n = sites.len();
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for (a, b, dir) in raw_edges {
            if a == b {
                return Err(Error::Topology(format!("self-edge on site {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) references a site outside 0..{n}"
                )));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if seen.insert((u, v)) {
                edges.push(Edge { u, v, dir });
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, k));
            adjacency[e.v].push((e.u, k));
        }
        Ok(Self {
            kind,
            dims,
            boundary,
            sites,
            edges,
            adjacency,
        })
    }

    /// Arbitrary graph on `n` sites. Duplicate edges are merged; self-edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let sites = (0..n).map(|i| [i as i32, 0, 0]).collect();
        Self::assemble(
            LatticeKind::Custom,
            [n, 0, 0],
            [Boundary::Open; 3],
            sites,
            edges.iter().map(|&(u, v)| (u, v, 0)),
        )
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn boundary(&self) -> [Boundary; 3] {
        self.boundary
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn coords(&self, site: usize) -> [i32; 3] {
        self.sites[site]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> Edge {
        self.edges[k]
    }

    /// `(neighbor, edge index)` pairs incident to `site`.
    pub fn neighbors(&self, site: usize) -> &[(usize, usize)] {
        &self.adjacency[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.adjacency[site].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, k)| k)
    }

    /// True when the graph has no cycles (a forest).
    pub fn is_forest(&self) -> bool {
        let n = self.n_sites();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }

    /// One-line description of the construction, written into instance headers.
    pub fn construction(&self) -> &'static str {
        match self.kind {
            LatticeKind::CubicDimer => {
                "simple cubic, site (x,y,z) index (x*L+y)*L+z, bonds along x,y,z (dir 0,1,2)"
            }
            LatticeKind::Diamond => {
                "diamond cubic in rotated quarter-cell coordinates: site (u,w,z) present iff \
                 (u mod 2, w mod 2) = [(0,0),(1,0),(1,1),(0,1)][z mod 4]; bonds z->z+1 along u \
                 for even z, along w for odd z; open boundaries"
            }
            LatticeKind::Square => "square grid, site (x,y) index x*h+y, bonds along x,y (dir 0,1)",
            LatticeKind::Custom => "explicit edge list",
        }
    }
}

/// Simple cubic lattice of `side³` dimer sites, open in x and y, z wrapping iff `z_periodic`.
pub fn build_cubic_dimer_lattice(side: usize, z_periodic: bool) -> Result<LatticeGraph> {
    let z = if z_periodic {
        Boundary::Periodic
    } else {
        Boundary::Open
    };
    build_cubic_dimer_lattice_with(side, [Boundary::Open, Boundary::Open, z])
}

/// Cubic dimer lattice with an explicit boundary flag per axis.
///
/// For `side == 2` a periodic wrap coincides with the open bond and is merged,
/// so the graph stays simple.
pub fn build_cubic_dimer_lattice_with(side: usize, boundary: [Boundary; 3]) -> Result<LatticeGraph> {
    if side < 2 {
        return Err(Error::InvalidSize(format!(
            "cubic dimer lattice needs L >= 2, got {side}"
        )));
    }
    let l = side;
    let index = |x: usize, y: usize, z: usize| (x * l + y) * l + z;
    let mut sites = Vec::with_capacity(l * l * l);
    for x in 0..l {
        for y in 0..l {
            for z in 0..l {
                sites.push([x as i32, y as i32, z as i32]);
            }
        }
    }
    let mut edges = Vec::new();
    for x in 0..l {
        for y in 0..l {
            for z in 0..l {
                let here = index(x, y, z);
                let c = [x, y, z];
                for axis in 0..3 {
                    let next = c[axis] + 1;
                    let target = if next < l {
                        next
                    } else if boundary[axis] == Boundary::Periodic {
                        0
                    } else {
                        continue;
                    };
                    let mut d = c;
                    d[axis] = target;
                    edges.push((here, index(d[0], d[1], d[2]), axis as u8));
                }
            }
        }
    }
    LatticeGraph::assemble(LatticeKind::CubicDimer, [l, l, l], boundary, sites, edges)
}

/// Parity offsets `(u mod 2, w mod 2)` of the diamond layer at height `z mod 4`.
const DIAMOND_LAYER_PARITY: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Diamond cubic lattice inside an `a × b × c` box.
///
/// Coordinates are quarter lattice constants with the in-plane axes rotated by
/// 45°. Layer `z` holds the points whose `(u, w)` parities match
/// `DIAMOND_LAYER_PARITY[z % 4]`; each site bonds to two sites in the layer
/// above (offset ±1 along `u` when `z` is even, along `w` when odd) and two in
/// the layer below. Boundaries are open.
pub fn build_diamond_lattice(a: usize, b: usize, c: usize) -> Result<LatticeGraph> {
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::InvalidSize(format!(
            "diamond dimensions must be positive, got ({a}, {b}, {c})"
        )));
    }
    let present = |u: usize, w: usize, z: usize| {
        let (pu, pw) = DIAMOND_LAYER_PARITY[z % 4];
        u % 2 == pu && w % 2 == pw
    };
    let mut sites = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    for u in 0..a {
        for w in 0..b {
            for z in 0..c {
                if present(u, w, z) {
                    lookup.insert((u, w, z), sites.len());
                    sites.push([u as i32, w as i32, z as i32]);
                }
            }
        }
    }
    let mut edges = Vec::new();
    for (&(u, w, z), &here) in &lookup {
        if z + 1 >= c {
            continue;
        }
        for sign in [-1i64, 1] {
            let (nu, nw) = if z % 2 == 0 {
                (u as i64 + sign, w as i64)
            } else {
                (u as i64, w as i64 + sign)
            };
            if nu < 0 || nw < 0 {
                continue;
            }
            if let Some(&there) = lookup.get(&(nu as usize, nw as usize, z + 1)) {
                let dir = ((z % 2) * 2 + usize::from(sign > 0)) as u8;
                edges.push((here, there, dir));
            }
        }
    }
    // HashMap iteration order is arbitrary; fix the edge order.
    edges.sort_unstable();
    LatticeGraph::assemble(
        LatticeKind::Diamond,
        [a, b, c],
        [Boundary::Open; 3],
        sites,
        edges,
    )
}

/// Open `w × h` square grid.
pub fn build_square_lattice(w: usize, h: usize) -> Result<LatticeGraph> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidSize(format!(
            "square dimensions must be positive, got ({w}, {h})"
        )));
    }
    let index = |x: usize, y: usize| x * h + y;
    let mut sites = Vec::with_capacity(w * h);
    let mut edges = Vec::new();
    for x in 0..w {
        for y in 0..h {
            sites.push([x as i32, y as i32, 0]);
            if x + 1 < w {
                edges.push((index(x, y), index(x + 1, y), 0));
            }
            if y + 1 < h {
                edges.push((index(x, y), index(x, y + 1), 1));
            }
        }
    }
    LatticeGraph::assemble(
        LatticeKind::Square,
        [w, h, 1],
        [Boundary::Open; 3],
        sites,
        edges,
    )
}

/// Rebuild a lattice from its kind, dimensions and boundary flags.
pub fn build_lattice(
    kind: LatticeKind,
    dims: [usize; 3],
    boundary: [Boundary; 3],
) -> Result<LatticeGraph> {
    match kind {
        LatticeKind::CubicDimer => build_cubic_dimer_lattice_with(dims[0], boundary),
        LatticeKind::Diamond => build_diamond_lattice(dims[0], dims[1], dims[2]),
        LatticeKind::Square => build_square_lattice(dims[0], dims[1]),
        LatticeKind::Custom => Err(Error::Config(
            "custom graphs are defined by their edge list".into(),
        )),
    }
}
