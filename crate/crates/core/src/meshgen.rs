//! Closed test and demo meshes: platonic solids, sphere samplings and a
//! capped tube ("bar") that can be bent into key-frame poses.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::mesh::{Shell, Topology};
use crate::scalar::Real;
use crate::surface;

/// Regular tetrahedron inscribed in the unit sphere.
pub fn tetrahedron<R: Real>() -> (Arc<Topology>, Shell<R>) {
    let s = R::of(1.0 / f64::sqrt(3.0));
    let positions = vec![
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ];
    let faces = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
    let topo = Arc::new(Topology::new(4, faces).unwrap());
    let shell = Shell::new(topo.clone(), positions).unwrap();
    (topo, shell)
}

/// Regular octahedron with unit vertices.
pub fn octahedron<R: Real>() -> (Arc<Topology>, Shell<R>) {
    let o = R::zero();
    let i = R::one();
    let positions = vec![
        Vector3::new(i, o, o),
        Vector3::new(-i, o, o),
        Vector3::new(o, i, o),
        Vector3::new(o, -i, o),
        Vector3::new(o, o, i),
        Vector3::new(o, o, -i),
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    let topo = Arc::new(Topology::new(6, faces).unwrap());
    let shell = Shell::new(topo.clone(), positions).unwrap();
    (topo, shell)
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron<R: Real>() -> (Arc<Topology>, Shell<R>) {
    let phi = (1.0 + f64::sqrt(5.0)) / 2.0;
    let norm = f64::sqrt(1.0 + phi * phi);
    let a = R::of(1.0 / norm);
    let b = R::of(phi / norm);
    let o = R::zero();
    let positions = vec![
        Vector3::new(-a, b, o),
        Vector3::new(a, b, o),
        Vector3::new(-a, -b, o),
        Vector3::new(a, -b, o),
        Vector3::new(o, -a, b),
        Vector3::new(o, a, b),
        Vector3::new(o, -a, -b),
        Vector3::new(o, a, -b),
        Vector3::new(b, o, -a),
        Vector3::new(b, o, a),
        Vector3::new(-b, o, -a),
        Vector3::new(-b, o, a),
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let topo = Arc::new(Topology::new(12, faces).unwrap());
    let shell = Shell::new(topo.clone(), positions).unwrap();
    (topo, shell)
}

/// Icosahedron refined `levels` times with every vertex projected onto the
/// sphere of radius `radius`.
pub fn icosphere<R: Real>(levels: usize, radius: R) -> (Arc<Topology>, Shell<R>) {
    let (mut topo, mut shell) = icosahedron::<R>();
    project_to_sphere(&mut shell, radius);
    for _ in 0..levels {
        let (t, s) = surface::refine_once(&topo, &shell).unwrap();
        topo = t;
        shell = s;
        project_to_sphere(&mut shell, radius);
    }
    (topo, shell)
}

fn project_to_sphere<R: Real>(shell: &mut Shell<R>, radius: R) {
    let topo = shell.topology().clone();
    let positions = shell
        .positions()
        .iter()
        .map(|p| p * (radius / p.norm()))
        .collect();
    *shell = Shell::new(topo, positions).unwrap();
}

/// Closed triangulated tube along the x axis with `rings` cross-sections of
/// `sides` vertices each, capped by apex vertices at both ends.
///
/// Vertex count: `rings * sides + 2`.
pub fn bar<R: Real>(rings: usize, sides: usize, length: f64, radius: f64) -> (Arc<Topology>, Shell<R>) {
    assert!(rings >= 2 && sides >= 3);
    let mut positions = Vec::with_capacity(rings * sides + 2);
    for r in 0..rings {
        let x = length * r as f64 / (rings - 1) as f64;
        for s in 0..sides {
            let t = 2.0 * std::f64::consts::PI * s as f64 / sides as f64;
            positions.push(Vector3::new(
                R::of(x),
                R::of(radius * t.cos()),
                R::of(radius * t.sin()),
            ));
        }
    }
    let cap0 = positions.len();
    positions.push(Vector3::new(R::of(-0.4 * radius), R::zero(), R::zero()));
    let cap1 = positions.len();
    positions.push(Vector3::new(
        R::of(length + 0.4 * radius),
        R::zero(),
        R::zero(),
    ));

    let idx = |r: usize, s: usize| r * sides + s % sides;
    let mut faces = Vec::new();
    for r in 0..rings - 1 {
        for s in 0..sides {
            let a = idx(r, s);
            let b = idx(r, s + 1);
            let c = idx(r + 1, s);
            let d = idx(r + 1, s + 1);
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    for s in 0..sides {
        faces.push([idx(0, s + 1), cap0, idx(0, s)]);
        faces.push([idx(rings - 1, s), cap1, idx(rings - 1, s + 1)]);
    }
    let topo = Arc::new(Topology::new(positions.len(), faces).unwrap());
    let shell = Shell::new(topo.clone(), positions).unwrap();
    (topo, shell)
}

/// Bends a shell around the z axis: points at x = `length` end up rotated by
/// `angle`. Near-isometric for thin bars, which makes good key-frame pairs.
pub fn bend<R: Real>(shell: &Shell<R>, length: f64, angle: f64) -> Shell<R> {
    if angle.abs() < 1e-12 {
        return shell.clone();
    }
    let r0 = R::of(length / angle);
    let positions = shell
        .positions()
        .iter()
        .map(|p| {
            let theta = p.x / r0;
            let rad = r0 - p.y;
            Vector3::new(
                rad * theta.sin(),
                r0 - rad * theta.cos(),
                p.z,
            )
        })
        .collect();
    Shell::new(shell.topology().clone(), positions).unwrap()
}
