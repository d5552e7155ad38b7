//! Triangle-mesh shells: shared immutable connectivity plus per-shell vertex
//! positions.
//!
//! A [`Topology`] is fixed for a whole shape space; every [`Shell`] and
//! [`Displacement`] refers to one. All types are immutable after
//! construction and safe to share across threads.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One undirected mesh edge with its incident faces.
///
/// `vertices` is ordered as the edge appears (directed) in `faces[0]`;
/// for an interior edge `faces[1]` contains it in the opposite direction.
/// `opposite[k]` is the vertex of `faces[k]` not on the edge.
#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub faces: [Option<usize>; 2],
    pub opposite: [Option<usize>; 2],
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.faces[1].is_some()
    }
}

/// Immutable triangle-mesh connectivity with derived adjacency.
#[derive(Debug)]
pub struct Topology {
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    /// Map from directed edge (a, b) to the face that contains it.
    directed: HashMap<(usize, usize), usize>,
    /// Map from undirected edge (min, max) to its index in `edges`.
    edge_ids: HashMap<(usize, usize), usize>,
    /// Per-vertex one-ring neighbours. Counter-clockwise and cyclic for
    /// interior vertices; for boundary vertices the walk starts at a
    /// boundary edge.
    rings: Vec<Vec<usize>>,
    closed: bool,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.vertex_count == other.vertex_count && self.faces == other.faces
    }
}
impl Eq for Topology {}

impl Topology {
    /// Builds the topology and its adjacency, validating that every index is
    /// in range, every edge has at most two incident faces and the
    /// orientation is consistent.
    pub fn new(vertex_count: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidMesh("no vertices".into()));
        }
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                if v >= vertex_count {
                    return Err(Error::InvalidMesh(format!(
                        "face {f} references vertex {v}, but there are only {vertex_count} vertices"
                    )));
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[2] == face[0] {
                return Err(Error::InvalidMesh(format!(
                    "face {f} repeats a vertex: {face:?}"
                )));
            }
        }

        let mut directed = HashMap::new();
        let mut edge_ids = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (f, face) in faces.iter().enumerate() {
            for c in 0..3 {
                let a = face[c];
                let b = face[(c + 1) % 3];
                let opp = face[(c + 2) % 3];
                if directed.insert((a, b), f).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge ({a}, {b}) appears in two faces; orientation is inconsistent"
                    )));
                }
                let key = (a.min(b), a.max(b));
                match edge_ids.get(&key) {
                    None => {
                        edge_ids.insert(key, edges.len());
                        edges.push(Edge {
                            vertices: [a, b],
                            faces: [Some(f), None],
                            opposite: [Some(opp), None],
                        });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.faces[1].is_some() {
                            return Err(Error::InvalidMesh(format!(
                                "edge ({a}, {b}) is shared by more than two faces"
                            )));
                        }
                        edge.faces[1] = Some(f);
                        edge.opposite[1] = Some(opp);
                    }
                }
            }
        }

        let closed = edges.iter().all(Edge::is_interior);
        let rings = Self::build_rings(vertex_count, &faces, &directed, &edge_ids, &edges)?;

        Ok(Topology {
            vertex_count,
            faces,
            edges,
            directed,
            edge_ids,
            rings,
            closed,
        })
    }

    fn build_rings(
        vertex_count: usize,
        faces: &[[usize; 3]],
        directed: &HashMap<(usize, usize), usize>,
        edge_ids: &HashMap<(usize, usize), usize>,
        edges: &[Edge],
    ) -> Result<Vec<Vec<usize>>> {
        // Start vertex for the counter-clockwise walk around each vertex:
        // any neighbour for interior vertices, the outgoing boundary edge
        // for boundary ones.
        let mut start: Vec<Option<usize>> = vec![None; vertex_count];
        let mut degree = vec![0usize; vertex_count];
        for edge in edges {
            let [a, b] = edge.vertices;
            degree[a] += 1;
            degree[b] += 1;
            for (v, w) in [(a, b), (b, a)] {
                if start[v].is_none() {
                    start[v] = Some(w);
                }
                if !edge.is_interior() && directed.contains_key(&(v, w)) {
                    // (v, w) is a boundary directed edge: begin the walk there.
                    start[v] = Some(w);
                }
            }
        }

        let mut rings = Vec::with_capacity(vertex_count);
        for v in 0..vertex_count {
            let Some(first) = start[v] else {
                return Err(Error::InvalidMesh(format!("vertex {v} is isolated")));
            };
            let mut ring = Vec::with_capacity(degree[v]);
            let mut w = first;
            loop {
                ring.push(w);
                // Face containing directed edge (v, w) hands us the next
                // counter-clockwise neighbour.
                let Some(&f) = directed.get(&(v, w)) else {
                    break; // hit the boundary going counter-clockwise
                };
                let face = faces[f];
                let next = face[(face.iter().position(|&x| x == w).unwrap() + 1) % 3];
                debug_assert_ne!(next, w);
                if next == first {
                    break; // closed the interior cycle
                }
                w = next;
                if ring.len() > degree[v] {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {v} has a non-manifold neighbourhood"
                    )));
                }
            }
            if ring.len() != degree[v] {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} has a non-manifold neighbourhood (umbrella does not close)"
                )));
            }
            let _ = edge_ids;
            rings.push(ring);
        }
        Ok(rings)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True when every edge has two incident faces.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn valence(&self, v: usize) -> usize {
        self.rings[v].len()
    }

    /// One-ring neighbours of `v`, counter-clockwise.
    pub fn vertex_ring(&self, v: usize) -> &[usize] {
        &self.rings[v]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&(a.min(b), a.max(b))).copied()
    }

    /// The vertex opposite edge (a, b) in the incident face that does not
    /// contain `exclude`.
    pub fn across_edge(&self, a: usize, b: usize, exclude: usize) -> Option<usize> {
        let e = self.edge_id(a, b)?;
        let edge = &self.edges[e];
        for k in 0..2 {
            if let Some(opp) = edge.opposite[k] {
                if opp != exclude {
                    return Some(opp);
                }
            }
        }
        None
    }

    /// Face containing the directed edge (a, b), if any.
    pub fn face_of_directed_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.directed.get(&(a, b)).copied()
    }
}

/// A point of the shape space: one position per control vertex over a fixed
/// [`Topology`].
#[derive(Debug, Clone)]
pub struct Shell<R: Real> {
    topology: Arc<Topology>,
    positions: Vec<Vector3<R>>,
}

impl<R: Real> Shell<R> {
    /// Validates position count and that every face has strictly positive
    /// reference area.
    pub fn new(topology: Arc<Topology>, positions: Vec<Vector3<R>>) -> Result<Self> {
        if positions.len() != topology.vertex_count() {
            return Err(Error::InvalidMesh(format!(
                "expected {} positions, got {}",
                topology.vertex_count(),
                positions.len()
            )));
        }
        let shell = Shell {
            topology,
            positions,
        };
        for (f, face) in shell.topology.faces().iter().enumerate() {
            let e1 = shell.positions[face[1]] - shell.positions[face[0]];
            let e2 = shell.positions[face[2]] - shell.positions[face[0]];
            if e1.cross(&e2).norm_squared() <= R::zero() {
                return Err(Error::InvalidMesh(format!("face {f} is degenerate")));
            }
        }
        Ok(shell)
    }

    /// Skips the degeneracy check; used for solver iterates, where
    /// admissibility is enforced by the energy instead.
    pub(crate) fn from_positions_unchecked(
        topology: Arc<Topology>,
        positions: Vec<Vector3<R>>,
    ) -> Self {
        debug_assert_eq!(positions.len(), topology.vertex_count());
        Shell {
            topology,
            positions,
        }
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn positions(&self) -> &[Vector3<R>] {
        &self.positions
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Displacement `other - self`.
    pub fn displacement_to(&self, other: &Shell<R>) -> Result<Displacement<R>> {
        if !in_correspondence(self, other) {
            return Err(Error::TopologyMismatch);
        }
        let values = self
            .positions
            .iter()
            .zip(&other.positions)
            .map(|(a, b)| b - a)
            .collect();
        Ok(Displacement {
            topology: self.topology.clone(),
            values,
        })
    }

    /// `self + scale * displacement`.
    pub fn displaced(&self, displacement: &Displacement<R>, scale: R) -> Result<Shell<R>> {
        if !Arc::ptr_eq(&self.topology, &displacement.topology)
            && *self.topology != *displacement.topology
        {
            return Err(Error::TopologyMismatch);
        }
        let positions = self
            .positions
            .iter()
            .zip(&displacement.values)
            .map(|(p, d)| p + d * scale)
            .collect();
        Ok(Shell::from_positions_unchecked(
            self.topology.clone(),
            positions,
        ))
    }

    /// Root-mean-square distance to the barycentre; a convenient mesh scale.
    pub fn scale(&self) -> R {
        let n = R::of(self.positions.len() as f64);
        let mut mean = Vector3::zeros();
        for p in &self.positions {
            mean += p;
        }
        mean /= n;
        let mut sum = R::zero();
        for p in &self.positions {
            sum += (p - mean).norm_squared();
        }
        (sum / n).sqrt()
    }

    /// Hash of the topology pointer and exact position bits, used as a cache
    /// key for geodesic problems.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        (Arc::as_ptr(&self.topology) as usize).hash(&mut hasher);
        for p in &self.positions {
            for c in 0..3 {
                p[c].to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut hasher);
            }
        }
        hasher.finish()
    }
}

/// Difference object of two shells over the same topology; the discrete
/// stand-in for a tangent vector.
#[derive(Debug, Clone)]
pub struct Displacement<R: Real> {
    topology: Arc<Topology>,
    values: Vec<Vector3<R>>,
}

impl<R: Real> Displacement<R> {
    pub fn new(topology: Arc<Topology>, values: Vec<Vector3<R>>) -> Result<Self> {
        if values.len() != topology.vertex_count() {
            return Err(Error::InvalidMesh(format!(
                "expected {} values, got {}",
                topology.vertex_count(),
                values.len()
            )));
        }
        Ok(Displacement { topology, values })
    }

    pub fn zero(topology: Arc<Topology>) -> Self {
        let values = vec![Vector3::zeros(); topology.vertex_count()];
        Displacement { topology, values }
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn values(&self) -> &[Vector3<R>] {
        &self.values
    }

    pub fn scaled(&self, s: R) -> Displacement<R> {
        Displacement {
            topology: self.topology.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn norm(&self) -> R {
        self.values
            .iter()
            .map(|v| v.norm_squared())
            .fold(R::zero(), |a, b| a + b)
            .sqrt()
    }
}

/// Ordered sequence of `K + 1` shells on one topology.
#[derive(Debug, Clone)]
pub struct DiscretePath<R: Real> {
    shells: Vec<Shell<R>>,
}

impl<R: Real> DiscretePath<R> {
    pub fn new(shells: Vec<Shell<R>>) -> Result<Self> {
        if shells.len() < 2 {
            return Err(Error::InvalidArgument(
                "a discrete path needs at least two shells".into(),
            ));
        }
        for pair in shells.windows(2) {
            if !in_correspondence(&pair[0], &pair[1]) {
                return Err(Error::TopologyMismatch);
            }
        }
        Ok(DiscretePath { shells })
    }

    pub fn shells(&self) -> &[Shell<R>] {
        &self.shells
    }

    /// Number of segments K.
    pub fn step_count(&self) -> usize {
        self.shells.len() - 1
    }

    pub fn reversed(&self) -> DiscretePath<R> {
        let mut shells = self.shells.clone();
        shells.reverse();
        DiscretePath { shells }
    }
}

/// True iff both shells reference equal topologies (same vertex count and
/// identical face list).
pub fn in_correspondence<R: Real>(a: &Shell<R>, b: &Shell<R>) -> bool {
    Arc::ptr_eq(&a.topology, &b.topology) || *a.topology == *b.topology
}
