//! Directed road network with memoized shortest-path distances.
//!
//! Nodes are kept sorted by id, so dense indices follow id order and any
//! "lowest id wins" tie-break can be implemented as "lowest index wins".

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length_km: f64,
}

/// How `dist` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Directed shortest path along edges.
    #[default]
    Network,
    /// Haversine distance between node coordinates. Debugging aid only.
    GreatCircle,
}

const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
    /// Incoming edges per node: (origin, length).
    reverse: Vec<Vec<(usize, f64)>>,
    mode: DistanceMode,
    columns: Vec<OnceLock<Vec<f64>>>,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        Self::with_mode(nodes, edges, DistanceMode::Network)
    }

    pub fn with_mode(mut nodes: Vec<Node>, edges: Vec<Edge>, mode: DistanceMode) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::DuplicateNode(n.id));
            }
        }
        let mut reverse = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let from = *index.get(&e.from).ok_or(Error::DanglingEdge {
                from: e.from,
                to: e.to,
                missing: e.from,
            })?;
            let to = *index.get(&e.to).ok_or(Error::DanglingEdge {
                from: e.from,
                to: e.to,
                missing: e.to,
            })?;
            if !(e.length_km > 0.0) || !e.length_km.is_finite() {
                return Err(Error::NonPositiveLength {
                    from: e.from,
                    to: e.to,
                    length_km: e.length_km,
                });
            }
            reverse[to].push((from, e.length_km));
        }
        let columns = (0..nodes.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            nodes,
            edges,
            index,
            reverse,
            mode,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    pub fn index_of(&self, id: NodeId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn id_at(&self, idx: usize) -> NodeId {
        self.nodes[idx].id
    }

    /// Distance in km from `u` to `v`; `f64::INFINITY` when unreachable.
    pub fn dist(&self, u: NodeId, v: NodeId) -> Result<f64> {
        let ui = self.index_of(u)?;
        let vi = self.index_of(v)?;
        Ok(self.dist_idx(ui, vi))
    }

    #[inline]
    pub fn dist_idx(&self, from: usize, to: usize) -> f64 {
        self.column(to)[from]
    }

    /// All distances into `to`, indexed by dense node index of the origin.
    ///
    /// Every query goes through this per-target table (one reverse search per target,
    /// memoized), so repeated queries are bit-identical.
    pub fn column(&self, to: usize) -> &[f64] {
        self.columns[to].get_or_init(|| match self.mode {
            DistanceMode::Network => dijkstra(&self.reverse, to),
            DistanceMode::GreatCircle => {
                let b = &self.nodes[to];
                self.nodes.iter().map(|a| haversine_km(a, b)).collect()
            }
        })
    }
}

/// Label-setting shortest paths from `source` over `adjacency`.
fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adjacency.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier {
        cost: 0.0,
        node: source,
    });
    while let Some(Frontier { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, len) in &adjacency[node] {
            let cand = cost + len;
            if cand < dist[next] {
                dist[next] = cand;
                heap.push(Frontier {
                    cost: cand,
                    node: next,
                });
            }
        }
    }
    dist
}

fn haversine_km(a: &Node, b: &Node) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
