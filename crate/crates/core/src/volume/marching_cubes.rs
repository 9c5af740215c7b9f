use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::VoxelGrid;

// Cube corner `c` sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Cube edge = (lower corner, axis), the upper corner being lower | (1 << axis).
const EDGES: [(u8, u8); 12] = [
    (0, 0),
    (2, 0),
    (4, 0),
    (6, 0),
    (0, 1),
    (1, 1),
    (4, 1),
    (5, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (3, 2),
];

fn edge_id(a: u8, b: u8) -> u8 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let axis = (lo ^ hi).trailing_zeros() as u8;
    EDGES.iter().position(|&e| e == (lo, axis)).expect("corners differ in one bit") as u8
}

fn corner_pos(c: u8) -> [f64; 3] {
    [f64::from(c & 1), f64::from((c >> 1) & 1), f64::from((c >> 2) & 1)]
}

fn edge_mid(e: u8) -> [f64; 3] {
    let (lo, axis) = EDGES[e as usize];
    let mut p = corner_pos(lo);
    p[axis as usize] += 0.5;
    p
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Triangles (as cube-edge triples) for one corner configuration.
///
/// Each cube face is cut independently: every maximal run of inside corners
/// along the face boundary is separated from the rest by one segment. Two
/// cubes sharing a face therefore cut it identically, which makes the output
/// watertight. Segments are directed so that fanning each closed loop gives
/// normals pointing from inside to outside.
fn cube_case(config: u8) -> Case {
    let inside = |c: u8| config >> c & 1 == 1;
    let mut next: [Option<u8>; 12] = [None; 12];
    for axis in 0..3u8 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2u8 {
            let base = side << axis;
            let ring = [base, base | 1 << b, base | 1 << b | 1 << c, base | 1 << c];
            let mut normal = [0.0; 3];
            normal[axis as usize] = if side == 1 { 1.0 } else { -1.0 };
            let Some(start) = (0..4).find(|&i| !inside(ring[i])) else {
                continue;
            };
            // Walk the ring from an outside corner, collecting inside runs.
            let mut k = 0;
            while k < 4 {
                let i = (start + k) % 4;
                if !inside(ring[i]) {
                    k += 1;
                    continue;
                }
                let mut run = vec![ring[i]];
                let mut m = k + 1;
                while m < 4 && inside(ring[(start + m) % 4]) {
                    run.push(ring[(start + m) % 4]);
                    m += 1;
                }
                let before = ring[(start + k + 3) % 4];
                let after = ring[(start + m) % 4];
                let mut p = edge_id(before, run[0]);
                let mut q = edge_id(run[run.len() - 1], after);
                let (pm, qm) = (edge_mid(p), edge_mid(q));
                let mid = [(pm[0] + qm[0]) / 2.0, (pm[1] + qm[1]) / 2.0, (pm[2] + qm[2]) / 2.0];
                let mut run_mean = [0.0; 3];
                for &r in &run {
                    let rp = corner_pos(r);
                    for t in 0..3 {
                        run_mean[t] += rp[t] / run.len() as f64;
                    }
                }
                let toward_outside = sub(mid, run_mean);
                if dot(sub(qm, pm), cross(toward_outside, normal)) < 0.0 {
                    std::mem::swap(&mut p, &mut q);
                }
                debug_assert!(next[p as usize].is_none());
                next[p as usize] = Some(q);
                k = m;
            }
        }
    }
    let mut case = Case::default();
    let mut seen = [false; 12];
    for s in 0..12u8 {
        if seen[s as usize] || next[s as usize].is_none() {
            continue;
        }
        let mut lp = vec![s];
        seen[s as usize] = true;
        let mut cur = next[s as usize].expect("checked");
        while cur != s {
            seen[cur as usize] = true;
            lp.push(cur);
            cur = next[cur as usize].expect("segments form closed loops");
        }
        case.add_loop(&lp);
    }
    case
}

/// Cube faces (axis, side) containing a cube edge.
fn edge_faces(e: u8) -> [(u8, u8); 2] {
    let (lo, axis) = EDGES[e as usize];
    let others = [(axis + 1) % 3, (axis + 2) % 3];
    others.map(|b| (b, lo >> b & 1))
}

fn share_face(a: u8, b: u8) -> bool {
    let fb = edge_faces(b);
    edge_faces(a).iter().any(|f| fb.contains(f))
}

/// Triangulation of one corner configuration. Vertex ids below 12 are cube
/// edges; id `12 + i` is the centroid of `centers[i]`.
#[derive(Debug, Default, Clone)]
struct Case {
    tris: Vec<[u8; 3]>,
    centers: Vec<Vec<u8>>,
}

impl Case {
    /// Fans a loop from a vertex whose diagonals all cross the cube interior.
    /// A diagonal lying in a cube face could coincide with one chosen by the
    /// neighboring cube, so when no such apex exists the loop is fanned from
    /// an added centroid vertex instead.
    fn add_loop(&mut self, lp: &[u8]) {
        let n = lp.len();
        let apex = (0..n).find(|&s| (2..n - 1).all(|i| !share_face(lp[s], lp[(s + i) % n])));
        match apex {
            Some(s) => {
                for i in 1..n - 1 {
                    self.tris.push([lp[s], lp[(s + i) % n], lp[(s + i + 1) % n]]);
                }
            }
            None => {
                let c = 12 + self.centers.len() as u8;
                self.centers.push(lp.to_vec());
                for i in 0..n {
                    self.tris.push([c, lp[i], lp[(i + 1) % n]]);
                }
            }
        }
    }
}

fn table() -> &'static [Case] {
    static TABLE: OnceLock<Vec<Case>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(cube_case).collect())
}

/// Extracts the `iso` level set of a grid as a triangle mesh.
///
/// Voxels with value `> iso` are inside. Vertices are placed by linear
/// interpolation along grid edges, in world mm, and faces are wound so normals
/// point outward. The surface is closed unless the inside region touches the
/// grid boundary, in which case a warning is logged.
pub fn marching_cubes<T: Real>(grid: &VoxelGrid<T>, iso: T) -> Result<TriMesh<T>> {
    let g = grid.geometry;
    let [nx, ny, nz] = g.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::InvalidVolume(format!("marching cubes needs dims >= 2, got {:?}", g.dims)));
    }
    if !iso.is_finite() {
        return Err(Error::InvalidParameter(format!("iso level {iso} is not finite")));
    }
    let table = table();
    let data = grid.data();
    let offset = |c: u8| {
        (c & 1) as usize + nx * (((c >> 1) & 1) as usize + ny * ((c >> 2) & 1) as usize)
    };
    let offsets: [usize; 8] = std::array::from_fn(|c| offset(c as u8));

    let mut vertex_of: HashMap<(usize, u8), usize> = HashMap::new();
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut touches = false;

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let base = g.index(i, j, k);
                let mut config = 0u8;
                for c in 0..8 {
                    if data[base + offsets[c]] > iso {
                        config |= 1 << c;
                    }
                }
                let case = &table[config as usize];
                if case.tris.is_empty() {
                    continue;
                }
                if i == 0 || j == 0 || k == 0 || i + 2 == nx || j + 2 == ny || k + 2 == nz {
                    touches = true;
                }
                let mut local = [usize::MAX; 12];
                let mut edge_vertex = |e: u8, vertices: &mut Vec<Vec3<T>>| {
                    if local[e as usize] == usize::MAX {
                        let (lo, axis) = EDGES[e as usize];
                        let a = base + offsets[lo as usize];
                        local[e as usize] = *vertex_of.entry((a, axis)).or_insert_with(|| {
                            let b = a + offsets[1 << axis];
                            let t = (iso - data[a]) / (data[b] - data[a]);
                            let [ai, aj, ak] = g.coords(a);
                            let step = Vec3::axis(axis as usize).component_mul(g.spacing);
                            vertices.push(g.world(ai, aj, ak) + step * t);
                            vertices.len() - 1
                        });
                    }
                    local[e as usize]
                };
                let mut center_ids = Vec::with_capacity(case.centers.len());
                for lp in &case.centers {
                    let ids: Vec<usize> = lp.iter().map(|&e| edge_vertex(e, &mut vertices)).collect();
                    let c = Vec3::mean(ids.iter().map(|&v| vertices[v])).expect("loops are non-empty");
                    vertices.push(c);
                    center_ids.push(vertices.len() - 1);
                }
                for tri in &case.tris {
                    let f = tri.map(|e| {
                        if e < 12 {
                            edge_vertex(e, &mut vertices)
                        } else {
                            center_ids[(e - 12) as usize]
                        }
                    });
                    faces.push(f);
                }
            }
        }
    }
    if faces.is_empty() {
        return Ok(TriMesh::empty());
    }
    if touches {
        log::warn!("isosurface reaches the grid boundary; the mesh may be open");
    }
    TriMesh::new(vertices, faces)
}
