//! Triangulations of mapped disks with curved-boundary-aware quadrature.
//!
//! The reference disk mesh is a deterministic concentric-ring layout with
//! exact sixfold rotational symmetry; mapped meshes move vertices through a
//! [`MapExpr`] while keeping connectivity fixed, so eigenvalue branches along
//! a perturbation family stay smooth. Boundary elements blend to the exact
//! unit-circle arc (isoparametric treatment), and all geometric factors come
//! from jet evaluation of the composite element map.

use crate::geometry::MapExpr;
use crate::jet::Jet2;
use crate::quadrature::{edge_rule, triangle_rule};
use crate::{Error, Result};
use std::io::Write;
use std::sync::Arc;

/// Ring count calibration: K = max(2, round(1.0233/h)) makes the vertex count
/// track c·π/h² with c ≈ 1.05 for h ≤ 0.3 (coarser meshes quantize).
const RING_FACTOR: f64 = 1.0233;

#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub verts: [usize; 2],
    /// reference-circle parameter angles of the two endpoints
    pub theta: [f64; 2],
}

/// Triangulation of the unit disk (or of a rectangle, for patch tests).
#[derive(Clone, Debug)]
pub struct RefMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// sorted vertex ids lying on the boundary
    pub boundary_vertices: Vec<usize>,
    pub h: f64,
    /// true for disk meshes: boundary edges blend to circular arcs
    pub curved_boundary: bool,
}

impl RefMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Area of the straight-sided (polygonal) triangulation.
    pub fn polygon_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            })
            .sum()
    }

    /// Deterministic list of all edges (first-seen order over triangles) with
    /// adjacent elements; `elems[1] == usize::MAX` marks boundary edges.
    pub fn edge_list(&self) -> Vec<MeshEdge> {
        let mut edges: Vec<MeshEdge> = Vec::new();
        let mut index: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for (ei, tri) in self.triangles.iter().enumerate() {
            for le in 0..3 {
                let a = tri[le];
                let b = tri[(le + 1) % 3];
                let key = (a.min(b), a.max(b));
                match index.get(&key) {
                    Some(&id) => {
                        edges[id].elems[1] = ei;
                        edges[id].local[1] = le;
                    }
                    None => {
                        index.insert(key, edges.len());
                        edges.push(MeshEdge {
                            verts: [a, b],
                            elems: [ei, usize::MAX],
                            local: [le, usize::MAX],
                        });
                    }
                }
            }
        }
        edges
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut best = 180.0_f64;
        for t in &self.triangles {
            let v = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            for i in 0..3 {
                let a = v[i];
                let b = v[(i + 1) % 3];
                let c = v[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let dot = u[0] * w[0] + u[1] * w[1];
                let cross = u[0] * w[1] - u[1] * w[0];
                best = best.min(cross.atan2(dot).abs().to_degrees());
            }
        }
        best
    }

    /// Plain-text dump, `MESH v1` format.
    pub fn dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "MESH v1")?;
        writeln!(out, "{}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(out, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        writeln!(out, "{}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(out, "{}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            writeln!(
                out,
                "{} {} {:.17e} {:.17e}",
                e.verts[0], e.verts[1], e.theta[0], e.theta[1]
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MeshEdge {
    pub verts: [usize; 2],
    pub elems: [usize; 2],
    /// local edge index within each adjacent element
    pub local: [usize; 2],
}

impl MeshEdge {
    pub fn is_boundary(&self) -> bool {
        self.elems[1] == usize::MAX
    }
}

/// Deterministic concentric-ring disk mesh.
///
/// Ring k carries 6k vertices; strips are triangulated sector-by-sector so the
/// connectivity (and hence the assembled operators) have exact C₆ symmetry.
pub fn build_disk_mesh(h: f64) -> Result<RefMesh> {
    if !(0.005..=0.5).contains(&h) {
        return Err(Error::Mesh(format!("target size h = {h} outside [0.005, 0.5]")));
    }
    let rings = ((RING_FACTOR / h).round() as usize).max(2);
    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize; rings + 1];
    for k in 1..=rings {
        ring_start[k] = vertices.len();
        let n = 6 * k;
        let r = k as f64 / rings as f64;
        for j in 0..n {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            vertices.push([r * th.cos(), r * th.sin()]);
        }
    }
    let mut triangles = Vec::new();
    // center fan
    for s in 0..6 {
        triangles.push([ring_start[1] + s, ring_start[1] + (s + 1) % 6, 0]);
    }
    // strips, replicated per sector for exact rotational symmetry
    for k in 2..=rings {
        let n_in = 6 * (k - 1);
        let n_out = 6 * k;
        for s in 0..6 {
            let inner = |i: usize| ring_start[k - 1] + (s * (k - 1) + i) % n_in;
            let outer = |i: usize| ring_start[k] + (s * k + i) % n_out;
            for i in 0..k - 1 {
                triangles.push([outer(i), outer(i + 1), inner(i)]);
                triangles.push([inner(i), outer(i + 1), inner(i + 1)]);
            }
            triangles.push([outer(k - 1), outer(k), inner(k - 1)]);
        }
    }
    let n_bnd = 6 * rings;
    let first = ring_start[rings];
    let mut boundary_edges = Vec::with_capacity(n_bnd);
    let ang = |j: usize| 2.0 * std::f64::consts::PI * j as f64 / n_bnd as f64;
    for j in 0..n_bnd {
        boundary_edges.push(BoundaryEdge {
            verts: [first + j, first + (j + 1) % n_bnd],
            theta: [ang(j), ang(j + 1)],
        });
    }
    let boundary_vertices: Vec<usize> = (first..first + n_bnd).collect();
    Ok(RefMesh {
        vertices,
        triangles,
        boundary_edges,
        boundary_vertices,
        h,
        curved_boundary: true,
    })
}

/// Uniform n×n triangulation of [0,1]² with straight boundary. Used by the
/// quadrature-exactness and patch tests; not part of the disk pipeline.
pub fn build_square_mesh(n: usize) -> RefMesh {
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::new();
    let idx = |i: usize, j: usize| j * np + i;
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
            triangles.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut boundary_vertices: Vec<usize> = Vec::new();
    for j in 0..np {
        for i in 0..np {
            if i == 0 || j == 0 || i == n || j == n {
                boundary_vertices.push(idx(i, j));
            }
        }
    }
    let mut boundary_edges = Vec::new();
    for i in 0..n {
        boundary_edges.push(BoundaryEdge { verts: [idx(i, 0), idx(i + 1, 0)], theta: [0.0; 2] });
        boundary_edges.push(BoundaryEdge { verts: [idx(i + 1, n), idx(i, n)], theta: [0.0; 2] });
        boundary_edges.push(BoundaryEdge { verts: [idx(0, i + 1), idx(0, i)], theta: [0.0; 2] });
        boundary_edges.push(BoundaryEdge { verts: [idx(n, i), idx(n, i + 1)], theta: [0.0; 2] });
    }
    RefMesh {
        vertices,
        triangles,
        boundary_edges,
        boundary_vertices,
        h: 1.0 / n as f64,
        curved_boundary: false,
    }
}

/// Geometric factors at one quadrature point of the composite element map.
#[derive(Clone, Debug)]
pub struct QpGeom {
    pub x: [f64; 2],
    /// J[a][i] = ∂x_a/∂ξ_i
    pub jac: [[f64; 2]; 2],
    /// K[i][a] = ∂ξ_i/∂x_a
    pub inv: [[f64; 2]; 2],
    pub det: f64,
    /// quadrature weight · |det J|
    pub w: f64,
    /// W[i][ab] = ∂²ξ_i/∂x_a∂x_b, packed (xx, xy, yy); transforms reference
    /// Hessians of basis functions to physical ones
    pub curl: [[f64; 3]; 2],
}

/// One side of an edge quadrature point: reference coordinates and inverse
/// geometric factors of the adjacent element at that point.
#[derive(Clone, Debug)]
pub struct EdgeSideGeom {
    pub elem: usize,
    pub xi: [f64; 2],
    pub inv: [[f64; 2]; 2],
    pub curl: [[f64; 3]; 2],
}

#[derive(Clone, Debug)]
pub struct EdgeQp {
    pub x: [f64; 2],
    /// arc-length weight
    pub w: f64,
    /// unit normal pointing out of `sides[0].elem`
    pub normal: [f64; 2],
    pub sides: Vec<EdgeSideGeom>,
}

#[derive(Clone, Debug)]
pub struct EdgeGeom {
    pub edge: MeshEdge,
    /// physical arc length
    pub length: f64,
    pub qp: Vec<EdgeQp>,
}

/// A reference mesh pushed through a catalog map, with per-element and
/// per-edge geometric factors precomputed at the quadrature points.
#[derive(Clone, Debug)]
pub struct MappedMesh {
    pub ref_mesh: Arc<RefMesh>,
    pub map: MapExpr,
    pub geo_degree: usize,
    pub elems: Vec<Vec<QpGeom>>,
    pub edges: Vec<EdgeGeom>,
    elem_maps: Vec<ElemMap>,
}

/// Element geometry map in reference-disk coordinates.
///
/// Interior elements are affine. Elements with an edge on the unit circle are
/// isoparametric of the requested degree: the affine map plus edge-bump
/// corrections that pull the curved-edge nodes onto the circular arc. Affine
/// functions of the physical coordinates stay inside the matching FE space.
#[derive(Clone, Debug)]
struct ElemMap {
    v: [[f64; 2]; 3],
    /// local indices of the curved edge endpoints (empty corrections if none)
    arc: Option<(usize, usize)>,
    /// per curved-edge node: (parameter t along a→b, displacement from chord)
    bumps: Vec<(f64, [f64; 2])>,
}

impl ElemMap {
    fn eval(&self, xi: [Jet2; 2]) -> [Jet2; 2] {
        let l1 = xi[0];
        let l2 = xi[1];
        let l0 = Jet2::constant(1.0) - l1 - l2;
        let lam = [l0, l1, l2];
        let mut x = Jet2::constant(0.0);
        let mut y = Jet2::constant(0.0);
        for k in 0..3 {
            x = x + lam[k] * self.v[k][0];
            y = y + lam[k] * self.v[k][1];
        }
        if let Some((a, b)) = self.arc {
            let la = lam[a];
            let lb = lam[b];
            let deg = self.bumps.len() + 1;
            for (t, d) in &self.bumps {
                // Lagrange bump for the edge node at parameter t: vanishes at
                // the vertices and the other edge nodes, 1 at its own node
                let n = match (deg, *t) {
                    (2, _) => la * lb * 4.0,
                    (3, t) if t < 0.5 => la * lb * (la * 3.0 - Jet2::constant(1.0)) * 4.5,
                    (3, _) => la * lb * (lb * 3.0 - Jet2::constant(1.0)) * 4.5,
                    _ => unreachable!("geometry degree 2 or 3"),
                };
                x = x + n * d[0];
                y = y + n * d[1];
            }
        }
        [x, y]
    }
}

fn elem_map(
    mesh: &RefMesh,
    tri: &[usize; 3],
    bverts: &std::collections::HashMap<usize, f64>,
    geo_degree: usize,
) -> ElemMap {
    let v = [
        mesh.vertices[tri[0]],
        mesh.vertices[tri[1]],
        mesh.vertices[tri[2]],
    ];
    if mesh.curved_boundary {
        let on: Vec<usize> = (0..3).filter(|&k| bverts.contains_key(&tri[k])).collect();
        if on.len() == 2 {
            // curve only when the two boundary vertices are adjacent on the
            // circle (share a boundary edge of this element)
            let (a, b) = (on[0], on[1]);
            let th_a = bverts[&tri[a]];
            let th_b = bverts[&tri[b]];
            let mut d = th_b - th_a;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            let gap = 1.5 * 2.0 * std::f64::consts::PI / (mesh.boundary_vertices.len() as f64);
            if d.abs() < gap {
                let params: &[f64] = match geo_degree {
                    2 => &[0.5],
                    _ => &[1.0 / 3.0, 2.0 / 3.0],
                };
                let bumps = params
                    .iter()
                    .map(|&t| {
                        let th = th_a + t * d;
                        let chord = [
                            (1.0 - t) * v[a][0] + t * v[b][0],
                            (1.0 - t) * v[a][1] + t * v[b][1],
                        ];
                        (t, [th.cos() - chord[0], th.sin() - chord[1]])
                    })
                    .collect();
                return ElemMap { v, arc: Some((a, b)), bumps };
            }
        }
    }
    ElemMap { v, arc: None, bumps: Vec::new() }
}

fn qp_geom_at(map: &MapExpr, em: &ElemMap, xi: [f64; 2], w_ref: f64) -> Result<QpGeom> {
    let jets = map.eval_jets(em.eval([Jet2::var_x(xi[0]), Jet2::var_y(xi[1])]));
    let x = [jets[0].value(), jets[1].value()];
    let jac = [jets[0].grad(), jets[1].grad()];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if det <= 0.0 {
        return Err(Error::Mesh(format!(
            "non-positive Jacobian determinant {det:.3e}"
        )));
    }
    let inv = [
        [jac[1][1] / det, -jac[0][1] / det],
        [-jac[1][0] / det, jac[0][0] / det],
    ];
    // W[i][ab] = −K[i][c]·H[c][jm]·K[j][a]·K[m][b]
    let h = [jets[0].hess(), jets[1].hess()];
    let hess_get = |c: usize, j: usize, m: usize| {
        // packed (xx, xy, yy)
        h[c][j + m]
    };
    let mut curl = [[0.0; 3]; 2];
    for i in 0..2 {
        for (slot, (a, b)) in [(0, 0), (0, 1), (1, 1)].iter().enumerate() {
            let mut s = 0.0;
            for c in 0..2 {
                for j in 0..2 {
                    for m in 0..2 {
                        s += inv[i][c] * hess_get(c, j, m) * inv[j][*a] * inv[m][*b];
                    }
                }
            }
            curl[i][slot] = -s;
        }
    }
    Ok(QpGeom {
        x,
        jac,
        inv,
        det,
        w: w_ref * det,
        curl,
    })
}

/// Reference coordinates of a point at parameter s along local edge `le`
/// (edge 0: v0→v1, edge 1: v1→v2, edge 2: v2→v0).
pub fn edge_point(le: usize, s: f64) -> [f64; 2] {
    match le {
        0 => [s, 0.0],
        1 => [1.0 - s, s],
        _ => [0.0, 1.0 - s],
    }
}

/// Push a reference mesh through a map, with isoparametric boundary geometry
/// of degree `geo_degree` (2 or 3, matching the FE space).
///
/// Keeps connectivity; rejects maps whose Jacobian degenerates at any
/// quadrature point, naming the offending element.
pub fn map_mesh(ref_mesh: Arc<RefMesh>, map: &MapExpr, geo_degree: usize) -> Result<MappedMesh> {
    if !(2..=3).contains(&geo_degree) {
        return Err(Error::Mesh(format!("geometry degree {geo_degree} not in {{2, 3}}")));
    }
    let (pts, w) = triangle_rule();
    let bverts: std::collections::HashMap<usize, f64> = ref_mesh
        .boundary_edges
        .iter()
        .flat_map(|e| [(e.verts[0], e.theta[0]), (e.verts[1], e.theta[1])])
        .collect();
    let mut elems = Vec::with_capacity(ref_mesh.triangles.len());
    let mut elem_maps = Vec::with_capacity(ref_mesh.triangles.len());
    for (ei, tri) in ref_mesh.triangles.iter().enumerate() {
        let em = elem_map(&ref_mesh, tri, &bverts, geo_degree);
        let mut qps = Vec::with_capacity(pts.len());
        for (p, wi) in pts.iter().zip(w.iter()) {
            let q = qp_geom_at(map, &em, *p, *wi)
                .map_err(|e| Error::Mesh(format!("element {ei}: {e}")))?;
            qps.push(q);
        }
        elems.push(qps);
        elem_maps.push(em);
    }

    // edge geometry for interior-penalty terms and boundary integrals
    let (gs, gw) = edge_rule();
    let mut edges = Vec::new();
    for edge in ref_mesh.edge_list() {
        let mut qps = Vec::with_capacity(gs.len());
        let mut length = 0.0;
        let e0 = edge.elems[0];
        let tri0 = &ref_mesh.triangles[e0];
        // centroid of elem 0 in physical coords fixes the normal sign
        let cent_ref: [f64; 2] = {
            let c = [
                (0..3).map(|k| ref_mesh.vertices[tri0[k]][0]).sum::<f64>() / 3.0,
                (0..3).map(|k| ref_mesh.vertices[tri0[k]][1]).sum::<f64>() / 3.0,
            ];
            map.value(c)
        };
        for (si, s) in gs.iter().enumerate() {
            // parameter along edge 0's local orientation
            let xi0 = edge_point(edge.local[0], *s);
            // seed a one-variable jet along the edge direction:
            // ξ(s+δ) = ξ0 + δ·dir, so the first grad slot is d/ds
            let dir = match edge.local[0] {
                0 => [1.0, 0.0],
                1 => [-1.0, 1.0],
                _ => [0.0, -1.0],
            };
            let seeded = [
                {
                    let mut j = Jet2::constant(xi0[0]);
                    j.c[1] = dir[0];
                    j
                },
                {
                    let mut j = Jet2::constant(xi0[1]);
                    j.c[1] = dir[1];
                    j
                },
            ];
            let curve = map.eval_jets(elem_maps[e0].eval(seeded));
            let x = [curve[0].value(), curve[1].value()];
            let tp = [curve[0].grad()[0], curve[1].grad()[0]];
            let speed = (tp[0] * tp[0] + tp[1] * tp[1]).sqrt();
            let mut normal = [tp[1] / speed, -tp[0] / speed];
            if si == 0 {
                // fix sign once per edge using the first point
                let to_mid = [x[0] - cent_ref[0], x[1] - cent_ref[1]];
                if normal[0] * to_mid[0] + normal[1] * to_mid[1] < 0.0 {
                    normal = [-normal[0], -normal[1]];
                }
            } else {
                // keep consistent with the previous point's normal
                let prev: &EdgeQp = qps.last().unwrap();
                if normal[0] * prev.normal[0] + normal[1] * prev.normal[1] < 0.0 {
                    normal = [-normal[0], -normal[1]];
                }
            }
            let mut sides = Vec::new();
            for side in 0..2 {
                let ei = edge.elems[side];
                if ei == usize::MAX {
                    break;
                }
                // parameter of this point along side's local edge: side 0 uses s,
                // side 1 traverses the shared edge in the opposite direction
                let s_side = if side == 0 { *s } else { 1.0 - *s };
                let xi = edge_point(edge.local[side], s_side);
                let q = qp_geom_at(map, &elem_maps[ei], xi, 0.0)
                    .map_err(|e| Error::Mesh(format!("element {ei} (edge trace): {e}")))?;
                sides.push(EdgeSideGeom {
                    elem: ei,
                    xi,
                    inv: q.inv,
                    curl: q.curl,
                });
            }
            length += gw[si] * speed;
            qps.push(EdgeQp {
                x,
                w: gw[si] * speed,
                normal,
                sides,
            });
        }
        edges.push(EdgeGeom { edge, length, qp: qps });
    }
    Ok(MappedMesh {
        ref_mesh,
        map: map.clone(),
        geo_degree,
        elems,
        edges,
        elem_maps,
    })
}

impl MappedMesh {
    /// Physical position of a reference point of an element.
    pub fn physical_point(&self, elem: usize, xi: [f64; 2]) -> [f64; 2] {
        let jets = self.map.eval_jets(self.elem_maps[elem].eval([
            Jet2::var_x(xi[0]),
            Jet2::var_y(xi[1]),
        ]));
        [jets[0].value(), jets[1].value()]
    }

    /// Area by curved-element quadrature.
    pub fn area(&self) -> f64 {
        self.elems
            .iter()
            .map(|qps| qps.iter().map(|q| q.w).sum::<f64>())
            .sum()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }
}
