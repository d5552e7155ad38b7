//! Loop subdivision surface machinery: control-mesh refinement, exact
//! limit-surface jets (position, first and second parametric derivatives)
//! and the per-face mid-edge quadrature rule.
//!
//! Regular patches (all three corner valences 6) are quartic box-spline
//! polynomials in the 12-point control stencil. A patch with exactly one
//! extraordinary corner is evaluated by repeatedly applying the local
//! subdivision matrix until the parameter lands in one of the nested
//! regular sub-patches, then evaluating that sub-patch; the per-valence
//! matrices and pick tables are cached process-wide. Faces with two or more
//! extraordinary corners are rejected; refining any mesh once removes them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{Shell, Topology};
use crate::scalar::Real;

/// Valences accepted for extraordinary vertices.
pub const MIN_VALENCE: usize = 3;
pub const MAX_VALENCE: usize = 12;

/// Loop's even-vertex weight for valence `n`.
pub fn loop_beta(n: usize) -> f64 {
    let c = 0.375 + 0.25 * (2.0 * std::f64::consts::PI / n as f64).cos();
    (0.625 - c * c) / n as f64
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

/// Sparse linear map from coarse to refined control points.
pub struct SubdivisionMap {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SubdivisionMap {
    pub fn row(&self, refined_vertex: usize) -> &[(usize, f64)] {
        &self.rows[refined_vertex]
    }

    pub fn refined_count(&self) -> usize {
        self.rows.len()
    }

    pub fn apply<R: Real>(&self, positions: &[Vector3<R>]) -> Vec<Vector3<R>> {
        self.rows
            .iter()
            .map(|row| {
                let mut p = Vector3::zeros();
                for &(j, w) in row {
                    p += positions[j] * R::of(w);
                }
                p
            })
            .collect()
    }
}

/// One step of Loop refinement of the connectivity, with the linear mask map
/// from coarse to refined positions. Requires a closed mesh.
pub fn refine_topology(topology: &Topology) -> Result<(Arc<Topology>, SubdivisionMap)> {
    if !topology.is_closed() {
        return Err(Error::BoundaryMesh);
    }
    let nv = topology.vertex_count();
    let ne = topology.edge_count();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nv + ne);

    for v in 0..nv {
        let ring = topology.vertex_ring(v);
        let beta = loop_beta(ring.len());
        let mut row = Vec::with_capacity(ring.len() + 1);
        row.push((v, 1.0 - ring.len() as f64 * beta));
        for &w in ring {
            row.push((w, beta));
        }
        rows.push(row);
    }
    for edge in topology.edges() {
        let [a, b] = edge.vertices;
        let (Some(oa), Some(ob)) = (edge.opposite[0], edge.opposite[1]) else {
            return Err(Error::BoundaryMesh);
        };
        rows.push(vec![(a, 0.375), (b, 0.375), (oa, 0.125), (ob, 0.125)]);
    }

    let mut faces = Vec::with_capacity(4 * topology.face_count());
    for face in topology.faces() {
        let [i, j, k] = *face;
        let mij = nv + topology.edge_id(i, j).unwrap();
        let mjk = nv + topology.edge_id(j, k).unwrap();
        let mki = nv + topology.edge_id(k, i).unwrap();
        faces.push([i, mij, mki]);
        faces.push([j, mjk, mij]);
        faces.push([k, mki, mjk]);
        faces.push([mij, mjk, mki]);
    }

    let refined = Arc::new(Topology::new(nv + ne, faces)?);
    Ok((refined, SubdivisionMap { rows }))
}

/// Applies one Loop refinement step to a shell. The limit surface is
/// unchanged.
pub fn refine_once<R: Real>(
    topology: &Topology,
    shell: &Shell<R>,
) -> Result<(Arc<Topology>, Shell<R>)> {
    let (refined, map) = refine_topology(topology)?;
    let positions = map.apply(shell.positions());
    let refined_shell = Shell::new(refined.clone(), positions)?;
    Ok((refined, refined_shell))
}

// ---------------------------------------------------------------------------
// Regular quartic box-spline basis
// ---------------------------------------------------------------------------

/// Coefficients (x12) of the 12 box-spline basis functions over the degree-4
/// monomials in (u, v, w), u = 1 - v - w, in the order of `MONOMIALS`.
const MONOMIALS: [[i32; 3]; 15] = [
    [4, 0, 0],
    [3, 1, 0],
    [3, 0, 1],
    [2, 2, 0],
    [2, 1, 1],
    [2, 0, 2],
    [1, 3, 0],
    [1, 2, 1],
    [1, 1, 2],
    [1, 0, 3],
    [0, 4, 0],
    [0, 3, 1],
    [0, 2, 2],
    [0, 1, 3],
    [0, 0, 4],
];

const BASIS_COEFFS: [[i64; 15]; 12] = [
    [1, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1, 6, 2, 12, 6, 0, 6, 6, 0, 0, 1, 2, 0, 0, 0],
    [6, 24, 24, 24, 60, 24, 8, 36, 36, 8, 1, 6, 12, 6, 1],
    [1, 2, 6, 0, 6, 12, 0, 0, 6, 6, 0, 0, 0, 2, 1],
    [0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0],
    [1, 8, 6, 24, 36, 12, 24, 60, 36, 6, 6, 24, 24, 8, 1],
    [1, 6, 8, 12, 36, 24, 6, 36, 60, 24, 1, 8, 24, 24, 6],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 2, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 2, 6, 6, 2, 1, 6, 12, 6, 1],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 1],
];

/// Integer lattice coordinates of the 12 regular stencil points; the patch
/// corners sit at (0,0), (1,0) and (0,1). Used by affine-precision tests.
pub const REGULAR_LATTICE: [[i32; 2]; 12] = [
    [0, -1],
    [-1, 0],
    [1, -1],
    [0, 0],
    [-1, 1],
    [2, -1],
    [1, 0],
    [0, 1],
    [-1, 2],
    [2, 0],
    [1, 1],
    [0, 2],
];

#[derive(Clone, Copy)]
struct Term {
    c: f64,
    e: [i32; 3],
}

fn differentiate(terms: &[Term], dir: usize) -> Vec<Term> {
    // d/dv f(u,v,w) with u = 1 - v - w is (-d/du + d/dx_dir) on monomials.
    let mut out = Vec::new();
    for t in terms {
        if t.e[0] > 0 {
            out.push(Term {
                c: -t.c * t.e[0] as f64,
                e: [t.e[0] - 1, t.e[1], t.e[2]],
            });
        }
        let k = dir + 1;
        if t.e[k] > 0 {
            let mut e = t.e;
            e[k] -= 1;
            out.push(Term {
                c: t.c * t.e[k] as f64,
                e,
            });
        }
    }
    out
}

/// value, d1, d2, d11, d12, d22 term lists for each basis function.
fn basis_tables() -> &'static Vec<[Vec<Term>; 6]> {
    static TABLES: OnceLock<Vec<[Vec<Term>; 6]>> = OnceLock::new();
    TABLES.get_or_init(|| {
        (0..12)
            .map(|i| {
                let value: Vec<Term> = BASIS_COEFFS[i]
                    .iter()
                    .zip(MONOMIALS.iter())
                    .filter(|(&c, _)| c != 0)
                    .map(|(&c, &e)| Term {
                        c: c as f64 / 12.0,
                        e,
                    })
                    .collect();
                let d1 = differentiate(&value, 0);
                let d2 = differentiate(&value, 1);
                let d11 = differentiate(&d1, 0);
                let d12 = differentiate(&d1, 1);
                let d22 = differentiate(&d2, 1);
                [value, d1, d2, d11, d12, d22]
            })
            .collect()
    })
}

fn eval_terms<R: Real>(terms: &[Term], u: R, v: R, w: R) -> R {
    let mut sum = R::zero();
    for t in terms {
        let mut m = R::of(t.c);
        for _ in 0..t.e[0] {
            m *= u;
        }
        for _ in 0..t.e[1] {
            m *= v;
        }
        for _ in 0..t.e[2] {
            m *= w;
        }
        sum += m;
    }
    sum
}

/// The 12 basis functions and their parametric derivatives at (v, w).
/// Row order: value, d1, d2, d11, d12, d22.
pub fn box_spline_basis<R: Real>(v: R, w: R) -> [[R; 12]; 6] {
    let u = R::one() - v - w;
    let tables = basis_tables();
    let mut out = [[R::zero(); 12]; 6];
    for (i, rows) in tables.iter().enumerate() {
        for (k, terms) in rows.iter().enumerate() {
            out[k][i] = eval_terms(terms, u, v, w);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Patch descriptors
// ---------------------------------------------------------------------------

/// Control stencil of one surface patch.
///
/// For a regular patch `ring` holds 12 vertices in the canonical lattice
/// layout with the face corners at positions 3, 6 and 7. For an irregular
/// patch `ring` holds `N + 6` vertices with the extraordinary vertex first,
/// then its one-ring counter-clockwise starting at the two other corners.
///
/// The patch parameter domain is the triangle spanned by the canonical
/// corner order; `rotation` cyclic shifts map face-order barycentric
/// coordinates into it.
#[derive(Debug, Clone)]
pub struct PatchDescriptor {
    pub face: usize,
    pub ring: Vec<usize>,
    /// Local corner index (in face order) of the extraordinary vertex.
    pub irregular_corner: Option<usize>,
    /// Valence of the extraordinary corner (6 for regular patches).
    pub valence: usize,
    rotation: usize,
}

impl PatchDescriptor {
    pub fn is_regular(&self) -> bool {
        self.irregular_corner.is_none()
    }

    /// Maps barycentric coordinates in face order to the canonical corner
    /// order of this patch.
    pub fn canonical_bary<R: Real>(&self, bary: [R; 3]) -> [R; 3] {
        let r = self.rotation;
        [bary[r], bary[(r + 1) % 3], bary[(r + 2) % 3]]
    }

    /// Inverse of [`PatchDescriptor::canonical_bary`].
    pub fn face_bary_from_canonical<R: Real>(&self, canonical: [R; 3]) -> [R; 3] {
        let r = self.rotation;
        let mut bary = [R::zero(); 3];
        for i in 0..3 {
            bary[(r + i) % 3] = canonical[i];
        }
        bary
    }
}

fn across(topology: &Topology, a: usize, b: usize, exclude: usize) -> Result<usize> {
    topology
        .across_edge(a, b, exclude)
        .ok_or(Error::BoundaryMesh)
}

/// The 12-point stencil of a regular face (a, b, c), canonical layout.
fn regular_ring(topology: &Topology, a: usize, b: usize, c: usize) -> Result<Vec<usize>> {
    let r3 = across(topology, a, b, c)?;
    let r5 = across(topology, a, c, b)?;
    let r11 = across(topology, b, c, a)?;
    let r1 = across(topology, a, r3, b)?;
    let r2 = across(topology, a, r5, c)?;
    let r6 = across(topology, b, r3, a)?;
    let r10 = across(topology, b, r11, c)?;
    let r12 = across(topology, c, r11, b)?;
    let r9 = across(topology, c, r5, a)?;
    Ok(vec![r1, r2, r3, a, r5, r6, b, c, r9, r10, r11, r12])
}

/// Stencil of an irregular face (a, b, c) with the extraordinary vertex a:
/// `[a, ring of a ccw from b, q1, q2, q3, r1, r2]` where q/r complete the
/// one-rings of b and c.
fn irregular_ring(topology: &Topology, a: usize, b: usize, c: usize) -> Result<Vec<usize>> {
    let ring_a = topology.vertex_ring(a);
    let n = ring_a.len();
    let start = ring_a
        .iter()
        .position(|&x| x == b)
        .ok_or_else(|| Error::InvalidMesh(format!("face corner {b} not in ring of {a}")))?;
    let mut ring = Vec::with_capacity(n + 6);
    ring.push(a);
    for i in 0..n {
        ring.push(ring_a[(start + i) % n]);
    }
    debug_assert_eq!(ring[2], c, "counter-clockwise ring must visit c after b");
    let p_last = ring[n]; // ring member before b
    let q1 = across(topology, b, p_last, a)?;
    let q2 = across(topology, b, q1, p_last)?;
    let q3 = across(topology, b, c, a)?;
    let r1 = across(topology, c, q3, b)?;
    let r2 = across(topology, c, r1, q3)?;
    ring.extend_from_slice(&[q1, q2, q3, r1, r2]);
    Ok(ring)
}

/// Builds the patch descriptor for one face.
pub fn patch_for_face(topology: &Topology, face: usize) -> Result<PatchDescriptor> {
    if !topology.is_closed() {
        return Err(Error::BoundaryMesh);
    }
    let corners = topology.faces()[face];
    let extraordinary: Vec<usize> = (0..3)
        .filter(|&i| topology.valence(corners[i]) != 6)
        .collect();
    match extraordinary.len() {
        0 => {
            let ring = regular_ring(topology, corners[0], corners[1], corners[2])?;
            Ok(PatchDescriptor {
                face,
                ring,
                irregular_corner: None,
                valence: 6,
                rotation: 0,
            })
        }
        1 => {
            let c = extraordinary[0];
            let ev = corners[c];
            let valence = topology.valence(ev);
            if !(MIN_VALENCE..=MAX_VALENCE).contains(&valence) {
                return Err(Error::UnsupportedValence {
                    vertex: ev,
                    valence,
                });
            }
            let ring = irregular_ring(
                topology,
                corners[c],
                corners[(c + 1) % 3],
                corners[(c + 2) % 3],
            )?;
            Ok(PatchDescriptor {
                face,
                ring,
                irregular_corner: Some(c),
                valence,
                rotation: c,
            })
        }
        _ => Err(Error::MultipleExtraordinaryCorners { face }),
    }
}

/// Descriptors for every face of a closed mesh.
pub fn patches(topology: &Topology) -> Result<Vec<PatchDescriptor>> {
    (0..topology.face_count())
        .map(|f| patch_for_face(topology, f))
        .collect()
}

// ---------------------------------------------------------------------------
// Irregular patch tables
// ---------------------------------------------------------------------------

/// Subdivision matrices and sub-patch pick tables for one valence.
struct IrregularTables {
    /// (N+6) x (N+6): maps the stencil to the next-level stencil around the
    /// extraordinary vertex.
    sub: DMatrix<f64>,
    /// (N+12) x (N+6): `sub` plus the six further points needed by the
    /// regular sub-patches.
    ext: DMatrix<f64>,
    /// Regular 12-point stencils of the three regular sub-patches as
    /// indices into the extended vector: [central, corner-b, corner-c].
    picks: [[usize; 12]; 3],
}

fn build_tables(n: usize) -> IrregularTables {
    let m = n + 6;
    let beta = loop_beta(n);
    let b6 = 1.0 / 16.0;
    let mut sub = DMatrix::zeros(m, m);

    // Stencil layout: 0 = extraordinary vertex a; 1..=n its ring (1 = b,
    // 2 = c); n+1..n+5 = q1, q2, q3, r1, r2.
    let (q1, q2, q3, r1, r2) = (n + 1, n + 2, n + 3, n + 4, n + 5);

    // Even rule at the extraordinary vertex.
    sub[(0, 0)] = 1.0 - n as f64 * beta;
    for i in 1..=n {
        sub[(0, i)] = beta;
    }
    // Odd vertices on the spokes of a.
    for i in 1..=n {
        let prev = if i == 1 { n } else { i - 1 };
        let next = if i == n { 1 } else { i + 1 };
        sub[(i, 0)] += 0.375;
        sub[(i, i)] += 0.375;
        sub[(i, prev)] += 0.125;
        sub[(i, next)] += 0.125;
    }
    // m(p_n, b)
    sub[(n + 1, n)] = 0.375;
    sub[(n + 1, 1)] = 0.375;
    sub[(n + 1, 0)] = 0.125;
    sub[(n + 1, q1)] = 0.125;
    // even b (valence 6, ring a, p_n, q1, q2, q3, c)
    sub[(n + 2, 1)] = 1.0 - 6.0 * b6;
    for j in [0, n, q1, q2, q3, 2] {
        sub[(n + 2, j)] = b6;
    }
    // m(b, c)
    sub[(n + 3, 1)] = 0.375;
    sub[(n + 3, 2)] = 0.375;
    sub[(n + 3, 0)] = 0.125;
    sub[(n + 3, q3)] = 0.125;
    // even c (valence 6, ring b, q3, r1, r2, p3, a)
    sub[(n + 4, 2)] = 1.0 - 6.0 * b6;
    for j in [1, q3, r1, r2, 3, 0] {
        sub[(n + 4, j)] = b6;
    }
    // m(c, p3)
    sub[(n + 5, 2)] = 0.375;
    sub[(n + 5, 3)] = 0.375;
    sub[(n + 5, 0)] = 0.125;
    sub[(n + 5, r2)] = 0.125;

    let mut ext = DMatrix::zeros(m + 6, m);
    ext.rows_mut(0, m).copy_from(&sub);
    // m(b, q1), m(b, q2), m(b, q3), m(c, q3), m(c, r1), m(c, r2)
    let extra: [[(usize, f64); 4]; 6] = [
        [(1, 0.375), (q1, 0.375), (n, 0.125), (q2, 0.125)],
        [(1, 0.375), (q2, 0.375), (q1, 0.125), (q3, 0.125)],
        [(1, 0.375), (q3, 0.375), (q2, 0.125), (2, 0.125)],
        [(2, 0.375), (q3, 0.375), (1, 0.125), (r1, 0.125)],
        [(2, 0.375), (r1, 0.375), (q3, 0.125), (r2, 0.125)],
        [(2, 0.375), (r2, 0.375), (r1, 0.125), (3, 0.125)],
    ];
    for (k, row) in extra.iter().enumerate() {
        for &(j, wgt) in row {
            ext[(m + k, j)] = wgt;
        }
    }

    // Extended vector labels:
    //   0..=n   : refined a and its spokes s_i = m(a, p_i)
    //   n+1..n+5: t1 = m(p_n, b), t2 = b', t3 = m(b, c), t4 = c', t5 = m(c, p3)
    //   n+6..   : u1..u6 = m(b,q1), m(b,q2), m(b,q3), m(c,q3), m(c,r1), m(c,r2)
    let (s0, s1, s2, s3, sn) = (0, 1, 2, 3, n);
    let (t1, t2, t3, t4, t5) = (n + 1, n + 2, n + 3, n + 4, n + 5);
    let (u1, u2, u3, u4, u5, u6) = (n + 6, n + 7, n + 8, n + 9, n + 10, n + 11);
    let pick_central = [t1, sn, t2, s1, s0, u3, t3, s2, s3, u4, t4, t5];
    let pick_b = [u2, u1, u3, t2, t1, u4, t3, s1, sn, t4, s2, s0];
    let pick_c = [u6, u5, t5, t4, u4, s3, s2, t3, u3, s0, s1, t2];

    IrregularTables {
        sub,
        ext,
        picks: [pick_central, pick_b, pick_c],
    }
}

fn irregular_tables(valence: usize) -> Arc<IrregularTables> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<IrregularTables>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(valence)
        .or_insert_with(|| Arc::new(build_tables(valence)))
        .clone()
}

// ---------------------------------------------------------------------------
// Jet evaluation
// ---------------------------------------------------------------------------

/// Exact limit-surface data at one parameter point: position, the two first
/// parametric derivatives and the three second derivatives (d11, d12, d22).
#[derive(Debug, Clone)]
pub struct SurfaceJet<R: Real> {
    pub position: Vector3<R>,
    pub first: [Vector3<R>; 2],
    pub second: [Vector3<R>; 3],
}

/// Linear functionals producing a jet from the patch ring positions.
/// Row order: value, d1, d2, d11, d12, d22.
#[derive(Debug, Clone)]
pub struct JetOperator<R: Real> {
    pub ring: Vec<usize>,
    pub weights: [Vec<R>; 6],
}

impl<R: Real> JetOperator<R> {
    pub fn apply(&self, positions: &[Vector3<R>]) -> SurfaceJet<R> {
        let mut acc = [Vector3::zeros(); 6];
        for (k, row) in self.weights.iter().enumerate() {
            for (&v, &w) in self.ring.iter().zip(row) {
                acc[k] += positions[v] * w;
            }
        }
        SurfaceJet {
            position: acc[0],
            first: [acc[1], acc[2]],
            second: [acc[3], acc[4], acc[5]],
        }
    }
}

/// Applies the affine reparameterization with Jacobian `t` (child w.r.t.
/// parent) to jet weight rows expressed in child parameters.
fn chain_rows<R: Real>(t: [[R; 2]; 2], rows: &mut [Vec<R>; 6]) {
    let n = rows[0].len();
    for i in 0..n {
        let d1 = rows[1][i];
        let d2 = rows[2][i];
        let d11 = rows[3][i];
        let d12 = rows[4][i];
        let d22 = rows[5][i];
        let (t00, t01, t10, t11) = (t[0][0], t[0][1], t[1][0], t[1][1]);
        rows[1][i] = t00 * d1 + t10 * d2;
        rows[2][i] = t01 * d1 + t11 * d2;
        rows[3][i] = t00 * t00 * d11 + (t00 * t10 + t00 * t10) * d12 + t10 * t10 * d22;
        rows[4][i] = t00 * t01 * d11 + (t00 * t11 + t10 * t01) * d12 + t10 * t11 * d22;
        rows[5][i] = t01 * t01 * d11 + (t01 * t11 + t01 * t11) * d12 + t11 * t11 * d22;
    }
}

fn validate_bary<R: Real>(bary: [R; 3]) -> Result<()> {
    let sum = bary[0] + bary[1] + bary[2];
    if (sum - R::one()).abs() > R::of(1e-9) {
        return Err(Error::InvalidArgument(format!(
            "barycentric coordinates must sum to 1, got {sum:?}"
        )));
    }
    Ok(())
}

/// Builds the jet operator for one patch at barycentric coordinates given in
/// face corner order. Derivatives refer to the canonical patch parameters
/// (v, w) with canonical corner 0 at the origin.
pub fn jet_operator<R: Real>(
    patch: &PatchDescriptor,
    bary: [R; 3],
) -> Result<JetOperator<R>> {
    validate_bary(bary)?;
    let canonical = patch.canonical_bary(bary);
    let (mut v, mut w) = (canonical[1], canonical[2]);

    if patch.is_regular() {
        let basis = box_spline_basis(v, w);
        return Ok(JetOperator {
            ring: patch.ring.clone(),
            weights: basis.map(|row| row.to_vec()),
        });
    }

    if v + w <= R::zero() {
        return Err(Error::ExtraordinaryCorner);
    }
    let tables = irregular_tables(patch.valence);
    let n = patch.valence;
    let m = n + 6;
    let half = R::of(0.5);
    let two = R::of(2.0);

    let mut depth = 0usize;
    while v + w <= half {
        v *= two;
        w *= two;
        depth += 1;
        if depth > 64 {
            return Err(Error::ExtraordinaryCorner);
        }
    }

    // Select the regular sub-patch and map into its parameters.
    let one = R::one();
    let u = one - v - w;
    let (pick_idx, cv, cw, t): (usize, R, R, [[R; 2]; 2]) = if v >= half {
        (
            1,
            two * w,
            two * u,
            [[R::zero(), two], [-two, -two]],
        )
    } else if w >= half {
        (
            2,
            two * u,
            two * v,
            [[-two, -two], [two, R::zero()]],
        )
    } else {
        (
            0,
            two * (v + w) - one,
            one - two * v,
            [[two, two], [-two, R::zero()]],
        )
    };

    // Regular basis rows over the 12 picked control points.
    let basis = box_spline_basis(cv, cw);
    let pick = &tables.picks[pick_idx];

    // Compose: rows over extended vector, then back through ext and sub^depth.
    let mut rows: [Vec<R>; 6] = std::array::from_fn(|_| vec![R::zero(); m + 6]);
    for k in 0..6 {
        for j in 0..12 {
            rows[k][pick[j]] += basis[k][j];
        }
    }
    let mut reduced: [Vec<R>; 6] = std::array::from_fn(|_| vec![R::zero(); m]);
    for k in 0..6 {
        for i in 0..m + 6 {
            let c = rows[k][i];
            if c != R::zero() {
                for j in 0..m {
                    let a = tables.ext[(i, j)];
                    if a != 0.0 {
                        reduced[k][j] += c * R::of(a);
                    }
                }
            }
        }
    }
    for _ in 0..depth {
        let mut next: [Vec<R>; 6] = std::array::from_fn(|_| vec![R::zero(); m]);
        for k in 0..6 {
            for i in 0..m {
                let c = reduced[k][i];
                if c != R::zero() {
                    for j in 0..m {
                        let a = tables.sub[(i, j)];
                        if a != 0.0 {
                            next[k][j] += c * R::of(a);
                        }
                    }
                }
            }
        }
        reduced = next;
    }

    // Total parameter map: the sub-patch map (one doubling built in) after
    // `depth` recursive doublings into the extraordinary corner.
    let scale = two.powi(depth as i32);
    let t_total = [
        [t[0][0] * scale, t[0][1] * scale],
        [t[1][0] * scale, t[1][1] * scale],
    ];
    chain_rows(t_total, &mut reduced);

    Ok(JetOperator {
        ring: patch.ring.clone(),
        weights: reduced,
    })
}

/// Exact limit-surface jet of `shell` on `patch` at `bary` (face corner
/// order).
pub fn evaluate_jet<R: Real>(
    shell: &Shell<R>,
    patch: &PatchDescriptor,
    bary: [R; 3],
) -> Result<SurfaceJet<R>> {
    let op = jet_operator(patch, bary)?;
    Ok(op.apply(shell.positions()))
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// One mid-edge quadrature point. `bary` is in the canonical corner order of
/// `patch`; `weight` is the parametric area share (1/6 of the unit
/// triangle's area per point).
#[derive(Debug, Clone)]
pub struct QuadraturePoint<R: Real> {
    pub patch: PatchDescriptor,
    pub bary: [R; 3],
    pub weight: R,
}

/// Mid-edge quadrature: three points per patch at the parametric edge
/// midpoints, each with weight (parametric patch area) / 3 = 1/6.
pub fn quadrature<R: Real>(topology: &Topology) -> Result<Vec<QuadraturePoint<R>>> {
    let descriptors = patches(topology)?;
    let half = R::of(0.5);
    let zero = R::zero();
    let weight = R::of(1.0 / 6.0);
    let mut points = Vec::with_capacity(3 * descriptors.len());
    for patch in descriptors {
        for bary in [
            [half, half, zero],
            [zero, half, half],
            [half, zero, half],
        ] {
            points.push(QuadraturePoint {
                patch: patch.clone(),
                bary,
                weight,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen;
    use approx::assert_relative_eq;

    #[test]
    fn beta_at_valence_six() {
        assert_relative_eq!(loop_beta(6), 1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn icosahedron_refines_to_expected_counts() {
        let (topo, shell) = meshgen::icosahedron::<f64>();
        let (refined, _) = refine_once(&topo, &shell).unwrap();
        assert_eq!(refined.vertex_count(), 42);
        assert_eq!(refined.face_count(), 80);
    }

    #[test]
    fn refinement_is_deterministic() {
        let (topo, shell) = meshgen::icosahedron::<f64>();
        let (_, a) = refine_once(&topo, &shell).unwrap();
        let (_, b) = refine_once(&topo, &shell).unwrap();
        for (p, q) in a.positions().iter().zip(b.positions()) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn boundary_mesh_rejected() {
        let topo = Topology::new(3, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(refine_topology(&topo), Err(Error::BoundaryMesh)));
    }

    #[test]
    fn partition_of_unity_and_derivative_sums() {
        for &(v, w) in &[(0.1, 0.2), (0.3, 0.3), (0.0, 0.0), (0.5, 0.5), (0.25, 0.7)] {
            let basis = box_spline_basis::<f64>(v, w);
            let sums: Vec<f64> = basis.iter().map(|row| row.iter().sum()).collect();
            assert_relative_eq!(sums[0], 1.0, epsilon = 1e-13);
            for k in 1..6 {
                assert_relative_eq!(sums[k], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn affine_precision_on_the_lattice() {
        // Control values equal to the lattice coordinates reproduce the
        // parameter map: value (v, w), unit first derivatives, zero second.
        for &(v, w) in &[(0.17, 0.23), (0.4, 0.1), (0.05, 0.85)] {
            let basis = box_spline_basis::<f64>(v, w);
            for c in 0..2 {
                let val: f64 = (0..12)
                    .map(|i| basis[0][i] * REGULAR_LATTICE[i][c] as f64)
                    .sum();
                let d1: f64 = (0..12)
                    .map(|i| basis[1][i] * REGULAR_LATTICE[i][c] as f64)
                    .sum();
                let d2: f64 = (0..12)
                    .map(|i| basis[2][i] * REGULAR_LATTICE[i][c] as f64)
                    .sum();
                let expect = if c == 0 { v } else { w };
                assert_relative_eq!(val, expect, epsilon = 1e-13);
                assert_relative_eq!(d1, if c == 0 { 1.0 } else { 0.0 }, epsilon = 1e-12);
                assert_relative_eq!(d2, if c == 0 { 0.0 } else { 1.0 }, epsilon = 1e-12);
                for k in 3..6 {
                    let d: f64 = (0..12)
                        .map(|i| basis[k][i] * REGULAR_LATTICE[i][c] as f64)
                        .sum();
                    assert_relative_eq!(d, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn corner_value_is_the_limit_mask() {
        let basis = box_spline_basis::<f64>(0.0, 0.0);
        assert_relative_eq!(basis[0][3], 0.5, epsilon = 1e-14);
        for i in [0, 1, 2, 4, 6, 7] {
            assert_relative_eq!(basis[0][i], 1.0 / 12.0, epsilon = 1e-14);
        }
        for i in [5, 8, 9, 10, 11] {
            assert_relative_eq!(basis[0][i], 0.0, epsilon = 1e-14);
        }
    }

    /// The refined icosahedron has isolated valence-5 vertices, so it yields
    /// both regular and irregular patches.
    fn bumpy_icosphere() -> (Arc<Topology>, Shell<f64>) {
        let (topo, shell) = meshgen::icosphere::<f64>(1, 1.0);
        // Non-symmetric smooth bump so curvature varies over the surface.
        let positions = shell
            .positions()
            .iter()
            .map(|p| p * (1.0 + 0.15 * (3.0 * p.x + 1.0).sin() * (2.0 * p.y).cos()))
            .collect();
        let bumpy = Shell::new(topo.clone(), positions).unwrap();
        (topo, bumpy)
    }

    fn eval_canonical(
        shell: &Shell<f64>,
        patch: &PatchDescriptor,
        v: f64,
        w: f64,
    ) -> SurfaceJet<f64> {
        let bary = patch.face_bary_from_canonical([1.0 - v - w, v, w]);
        evaluate_jet(shell, patch, bary).unwrap()
    }

    #[test]
    fn jet_first_derivatives_match_finite_differences() {
        let (topo, shell) = bumpy_icosphere();
        let descriptors = patches(&topo).unwrap();
        let h = 1e-5;
        for patch in descriptors.iter().filter(|p| [0, 7, 40, 41].contains(&p.face)) {
            for &(v, w) in &[(0.31, 0.24), (0.12, 0.55), (0.45, 0.45)] {
                let jet = eval_canonical(&shell, patch, v, w);
                let pv = eval_canonical(&shell, patch, v + h, w).position;
                let mv = eval_canonical(&shell, patch, v - h, w).position;
                let pw = eval_canonical(&shell, patch, v, w + h).position;
                let mw = eval_canonical(&shell, patch, v, w - h).position;
                let fd1 = (pv - mv) / (2.0 * h);
                let fd2 = (pw - mw) / (2.0 * h);
                assert!((fd1 - jet.first[0]).norm() / jet.first[0].norm() < 1e-6);
                assert!((fd2 - jet.first[1]).norm() / jet.first[1].norm() < 1e-6);

                // Second derivatives against finite differences of firsts.
                let jv = eval_canonical(&shell, patch, v + h, w);
                let jv2 = eval_canonical(&shell, patch, v - h, w);
                let jw = eval_canonical(&shell, patch, v, w + h);
                let jw2 = eval_canonical(&shell, patch, v, w - h);
                let scale = jet.second.iter().map(|d| d.norm()).fold(1.0, f64::max);
                let fd11 = (jv.first[0] - jv2.first[0]) / (2.0 * h);
                let fd12 = (jw.first[0] - jw2.first[0]) / (2.0 * h);
                let fd22 = (jw.first[1] - jw2.first[1]) / (2.0 * h);
                assert!((fd11 - jet.second[0]).norm() / scale < 1e-5);
                assert!((fd12 - jet.second[1]).norm() / scale < 1e-5);
                assert!((fd22 - jet.second[2]).norm() / scale < 1e-5);
            }
        }
    }

    #[test]
    fn planar_regular_mesh_has_zero_second_derivatives() {
        // An affine image of the lattice: limit surface is the same plane.
        let mut positions = Vec::new();
        let mut index = HashMap::new();
        let n = 8usize;
        for r in 0..n {
            for c in 0..n {
                index.insert((r, c), positions.len());
                let x = c as f64 + 0.5 * r as f64;
                let y = r as f64 * 0.8;
                positions.push(Vector3::new(x, y, 0.0));
            }
        }
        let mut faces = Vec::new();
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                let a = index[&(r, c)];
                let b = index[&(r, c + 1)];
                let d = index[&(r + 1, c)];
                let e = index[&(r + 1, c + 1)];
                faces.push([a, b, e]);
                faces.push([a, e, d]);
            }
        }
        // Wrap into a torus? Simpler: evaluate only interior faces, so build
        // the descriptor by hand for a central face.
        let topo = Topology::new(positions.len(), faces).unwrap();
        let shell = Shell::new(Arc::new(topo), positions).unwrap();
        // Pick the face whose corners are all interior with valence 6.
        let topo = shell.topology().clone();
        let face = (0..topo.face_count())
            .find(|&f| {
                topo.faces()[f].iter().all(|&v| {
                    topo.valence(v) == 6
                        && topo
                            .vertex_ring(v)
                            .iter()
                            .all(|&w| topo.face_of_directed_edge(v, w).is_some())
                })
            })
            .expect("interior regular face");
        let ring = regular_ring(&topo, topo.faces()[face][0], topo.faces()[face][1], topo.faces()[face][2]).unwrap();
        let patch = PatchDescriptor {
            face,
            ring,
            irregular_corner: None,
            valence: 6,
            rotation: 0,
        };
        for &(v, w) in &[(0.2, 0.3), (0.6, 0.1), (1.0 / 3.0, 1.0 / 3.0)] {
            let jet = eval_canonical(&shell, &patch, v, w);
            assert!(jet.position.z.abs() < 1e-12);
            for d in &jet.second {
                assert!(d.norm() < 1e-12, "second derivative {d:?} not zero");
            }
        }
    }

    /// Barycentric coordinates (in face corner order) of the four child
    /// faces produced by `refine_topology`, for a parent point `b`.
    fn child_point(b: [f64; 3]) -> (usize, [f64; 3]) {
        if b[0] >= 0.5 {
            (0, [2.0 * b[0] - 1.0, 2.0 * b[1], 2.0 * b[2]])
        } else if b[1] >= 0.5 {
            (1, [2.0 * b[1] - 1.0, 2.0 * b[2], 2.0 * b[0]])
        } else if b[2] >= 0.5 {
            (2, [2.0 * b[2] - 1.0, 2.0 * b[0], 2.0 * b[1]])
        } else {
            (3, [1.0 - 2.0 * b[2], 1.0 - 2.0 * b[0], 1.0 - 2.0 * b[1]])
        }
    }

    #[test]
    fn jets_are_refinement_invariant() {
        let (topo, shell) = bumpy_icosphere();
        let (refined_topo, refined_shell) = refine_once(&topo, &shell).unwrap();
        // Faces 0..3 are the children of coarse face 0 and carry the
        // icosahedron's valence-5 vertices; also test a central child.
        for face in [0usize, 3, 17, 79] {
            let patch = patch_for_face(&topo, face).unwrap();
            for &b in &[[0.6, 0.25, 0.15], [0.1, 0.2, 0.7], [0.25, 0.35, 0.4]] {
                let (child, cb) = child_point(b);
                let child_patch = patch_for_face(&refined_topo, 4 * face + child).unwrap();
                let coarse = evaluate_jet(&shell, &patch, b).unwrap();
                let fine = evaluate_jet(&refined_shell, &child_patch, cb).unwrap();
                assert!(
                    (coarse.position - fine.position).norm() < 1e-10,
                    "face {face} at {b:?}: position mismatch"
                );
                // Parameterizations differ by an affine map, so compare
                // invariants: unit normal, mean and Gaussian curvature.
                let inv_a = curvature_invariants(&coarse);
                let inv_b = curvature_invariants(&fine);
                assert!((inv_a.0 - inv_b.0).norm() < 1e-9, "normal mismatch");
                assert!((inv_a.1 - inv_b.1).abs() < 1e-7 * (1.0 + inv_a.1.abs()));
                assert!((inv_a.2 - inv_b.2).abs() < 1e-7 * (1.0 + inv_a.2.abs()));
            }
        }
    }

    /// Unit normal, mean curvature, Gaussian curvature.
    fn curvature_invariants(jet: &SurfaceJet<f64>) -> (Vector3<f64>, f64, f64) {
        let n = jet.first[0].cross(&jet.first[1]);
        let n = n / n.norm();
        let e = jet.first[0].dot(&jet.first[0]);
        let f = jet.first[0].dot(&jet.first[1]);
        let g = jet.first[1].dot(&jet.first[1]);
        let l = n.dot(&jet.second[0]);
        let m = n.dot(&jet.second[1]);
        let q = n.dot(&jet.second[2]);
        let det_i = e * g - f * f;
        let mean = 0.5 * (e * q - 2.0 * f * m + g * l) / det_i;
        let gauss = (l * q - m * m) / det_i;
        (n, mean, gauss)
    }

    #[test]
    fn irregular_path_at_valence_six_matches_regular_basis() {
        let (topo, shell) = bumpy_icosphere();
        let face = (0..topo.face_count())
            .find(|&f| topo.faces()[f].iter().all(|&v| topo.valence(v) == 6))
            .unwrap();
        let regular = patch_for_face(&topo, face).unwrap();
        let [a, b, c] = topo.faces()[face];
        let forced = PatchDescriptor {
            face,
            ring: irregular_ring(&topo, a, b, c).unwrap(),
            irregular_corner: Some(0),
            valence: 6,
            rotation: 0,
        };
        for &(v, w) in &[(0.3, 0.3), (0.05, 0.1), (0.7, 0.2), (0.01, 0.02)] {
            let jr = eval_canonical(&shell, &regular, v, w);
            let ji = eval_canonical(&shell, &forced, v, w);
            assert!((jr.position - ji.position).norm() < 1e-12);
            for k in 0..2 {
                assert!((jr.first[k] - ji.first[k]).norm() < 1e-10);
            }
            for k in 0..3 {
                assert!((jr.second[k] - ji.second[k]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn extraordinary_corner_is_a_domain_error() {
        let (topo, shell) = bumpy_icosphere();
        let patch = (0..topo.face_count())
            .map(|f| patch_for_face(&topo, f).unwrap())
            .find(|p| !p.is_regular())
            .unwrap();
        let corner = patch.irregular_corner.unwrap();
        let mut bary = [0.0; 3];
        bary[corner] = 1.0;
        assert!(matches!(
            evaluate_jet(&shell, &patch, bary),
            Err(Error::ExtraordinaryCorner)
        ));
    }

    #[test]
    fn rigid_equivariance_of_jets() {
        let (topo, shell) = bumpy_icosphere();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.8, 1.2);
        let b = Vector3::new(0.4, -1.0, 2.0);
        let moved = Shell::new(
            topo.clone(),
            shell.positions().iter().map(|p| rot * p + b).collect(),
        )
        .unwrap();
        let patch = patch_for_face(&topo, 5).unwrap();
        let bary = [0.2, 0.5, 0.3];
        let j0 = evaluate_jet(&shell, &patch, bary).unwrap();
        let j1 = evaluate_jet(&moved, &patch, bary).unwrap();
        assert!((rot * j0.position + b - j1.position).norm() < 1e-12);
        for k in 0..2 {
            assert!((rot * j0.first[k] - j1.first[k]).norm() < 1e-12);
        }
        for k in 0..3 {
            assert!((rot * j0.second[k] - j1.second[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn quadrature_point_count_and_weights() {
        let (topo, _) = meshgen::icosphere::<f64>(1, 1.0);
        let points = quadrature::<f64>(&topo).unwrap();
        assert_eq!(points.len(), 3 * topo.face_count());
        // Per-patch weights sum to the parametric patch area 1/2.
        let per_patch: f64 = points[..3].iter().map(|q| q.weight).sum();
        assert_relative_eq!(per_patch, 0.5, epsilon = 1e-15);
    }

    /// Quadrature area of the limit surface (integrates sqrt(det I)).
    fn limit_area(topo: &Topology, shell: &Shell<f64>) -> f64 {
        let mut area = 0.0;
        for q in quadrature::<f64>(topo).unwrap() {
            let jet = evaluate_jet(shell, &q.patch, q.bary).unwrap();
            let e = jet.first[0].dot(&jet.first[0]);
            let f = jet.first[0].dot(&jet.first[1]);
            let g = jet.first[1].dot(&jet.first[1]);
            area += q.weight * (e * g - f * f).sqrt();
        }
        area
    }

    #[test]
    fn sphere_area_from_quadrature() {
        // The limit surface of a vertex-projected icosphere lies inside the
        // sphere by O(h^2); the deficit must shrink ~4x per sampling level
        // and reach the percent range on fine meshes.
        let radius = 1.3;
        let exact = 4.0 * std::f64::consts::PI * radius * radius;
        let mut errors = Vec::new();
        for level in [2usize, 3, 4] {
            let (topo, shell) = meshgen::icosphere::<f64>(level, radius);
            errors.push((limit_area(&topo, &shell) - exact).abs() / exact);
        }
        assert!(errors[0] < 0.05, "{errors:?}");
        assert!(errors[1] < 0.3 * errors[0], "{errors:?}");
        assert!(errors[2] < 0.3 * errors[1], "{errors:?}");
        assert!(errors[2] < 0.01, "{errors:?}");
    }

    #[test]
    fn sphere_curvature_converges_under_refinement() {
        // Compare II against -(1/r) I at a fixed surface location far from
        // the extraordinary vertices (middle of a base icosahedron face).
        let radius = 2.0;
        let (t0, s0) = meshgen::icosahedron::<f64>();
        let f0 = t0.faces()[0];
        let dir = ((s0.positions()[f0[0]] + s0.positions()[f0[1]] + s0.positions()[f0[2]])
            / 3.0)
            .normalize();
        let mut errors = Vec::new();
        for level in [1usize, 2, 3] {
            let (topo, shell) = meshgen::icosphere::<f64>(level, radius);
            let mut best = (f64::MIN, 0usize);
            for f in 0..topo.face_count() {
                let c: Vector3<f64> = topo.faces()[f]
                    .iter()
                    .map(|&v| shell.positions()[v])
                    .sum::<Vector3<f64>>()
                    / 3.0;
                let d = c.normalize().dot(&dir);
                if d > best.0 {
                    best = (d, f);
                }
            }
            let patch = patch_for_face(&topo, best.1).unwrap();
            assert!(patch.is_regular());
            let third = 1.0 / 3.0;
            let jet = evaluate_jet(&shell, &patch, [third, third, third]).unwrap();
            let n = jet.first[0].cross(&jet.first[1]);
            let n = n / n.norm();
            let e = jet.first[0].dot(&jet.first[0]);
            let f = jet.first[0].dot(&jet.first[1]);
            let g = jet.first[1].dot(&jet.first[1]);
            let l = n.dot(&jet.second[0]);
            let m = n.dot(&jet.second[1]);
            let q = n.dot(&jet.second[2]);
            // Outward orientation: II = -(1/r) I on the sphere.
            let err =
                ((l + e / radius).abs() + (m + f / radius).abs() + (q + g / radius).abs())
                    / e.max(g);
            errors.push(err);
        }
        assert!(errors[1] < 0.5 * errors[0], "{errors:?}");
        assert!(errors[2] < 0.5 * errors[1], "{errors:?}");
    }
}
