//! Triangulations of the unit square cavity.
//!
//! The coarse mesh carries the pressure space; the fine mesh (one midpoint
//! refinement of the coarse mesh) carries velocity and the piecewise-constant
//! tensor fields. Adaptive refinement acts on the coarse mesh through a
//! conforming red-green closure; the fine mesh is always regenerated with
//! [`refine_midpoints`] so the element pairing is preserved.

use std::collections::{BTreeSet, HashMap};

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Absolute tolerance for boundary-coordinate tests.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Side of the unit square a boundary edge lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Bottom,
    Right,
    Top,
    Left,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] =
        [BoundaryTag::Bottom, BoundaryTag::Right, BoundaryTag::Top, BoundaryTag::Left];
}

/// A green pair: two triangles obtained by bisecting a parent triangle.
///
/// Green children are never refined directly; a refinement touching them
/// removes the pair and red-splits the recorded parent instead.
#[derive(Clone, Debug)]
pub struct GreenPair {
    pub children: [usize; 2],
    pub parent_vertices: [usize; 3],
}

/// Conforming triangulation of the unit square (pressure grid).
#[derive(Clone, Debug)]
pub struct CoarseMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    /// Number of refinement passes applied since construction.
    pub generation: u32,
    green_pairs: Vec<GreenPair>,
    stamp: u64,
}

/// Midpoint refinement of a coarse mesh (velocity / tensor grid).
#[derive(Clone, Debug)]
pub struct FineMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<([usize; 2], BoundaryTag)>,
    /// Fine triangle index -> coarse triangle index (exactly 4 children each).
    pub parent: Vec<usize>,
    /// Vertices `0..coarse_vertex_count` coincide with the coarse vertices.
    pub coarse_vertex_count: usize,
    /// For fine vertex `coarse_vertex_count + i`: the coarse vertex pair whose
    /// edge midpoint it is. Used for exact linear evaluation of coarse fields.
    pub midpoint_parents: Vec<[usize; 2]>,
    coarse_stamp: u64,
    stamp: u64,
}

fn fnv1a(words: impl Iterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn mesh_stamp(generation: u32, vertices: &[Point], triangles: &[[usize; 3]]) -> u64 {
    let verts = vertices.iter().flat_map(|p| [p[0].to_bits(), p[1].to_bits()]);
    let tris = triangles.iter().flat_map(|t| t.iter().map(|&v| v as u64));
    fnv1a(std::iter::once(generation as u64).chain(verts).chain(tris))
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn quantize(p: Point) -> (i64, i64) {
    const SCALE: f64 = (1u64 << 44) as f64;
    ((p[0] * SCALE).round() as i64, (p[1] * SCALE).round() as i64)
}

fn sorted_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn edges_of(t: [usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
}

fn tag_of_edge(a: Point, b: Point) -> Option<BoundaryTag> {
    let on = |v: f64, c: f64| (v - c).abs() <= BOUNDARY_TOL;
    if on(a[1], 0.0) && on(b[1], 0.0) {
        Some(BoundaryTag::Bottom)
    } else if on(a[0], 1.0) && on(b[0], 1.0) {
        Some(BoundaryTag::Right)
    } else if on(a[1], 1.0) && on(b[1], 1.0) {
        Some(BoundaryTag::Top)
    } else if on(a[0], 0.0) && on(b[0], 0.0) {
        Some(BoundaryTag::Left)
    } else {
        None
    }
}

/// Collects edges incident to exactly one triangle and tags them by side.
fn extract_boundary_edges(
    vertices: &[Point],
    triangles: &[[usize; 3]],
) -> Result<Vec<([usize; 2], BoundaryTag)>> {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for (a, b) in edges_of(*t) {
            *count.entry(sorted_edge(a, b)).or_insert(0) += 1;
        }
    }
    let mut out = Vec::new();
    // Deterministic order: re-scan triangles instead of iterating the map.
    for t in triangles {
        for (a, b) in edges_of(*t) {
            if count[&sorted_edge(a, b)] == 1 {
                let tag = tag_of_edge(vertices[a], vertices[b]).ok_or_else(|| {
                    Error::NotConforming(format!(
                        "boundary edge ({a}, {b}) does not lie on a side of the unit square"
                    ))
                })?;
                out.push(([a, b], tag));
            }
        }
    }
    Ok(out)
}

/// Checks conformity: positive areas, consistent orientation, each edge in at
/// most two triangles, boundary edges on the square's sides, and no vertex
/// sitting at the midpoint of an existing edge (hanging node).
pub fn validate_conformity(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
    for (i, t) in triangles.iter().enumerate() {
        let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if area <= 0.0 {
            return Err(Error::NotConforming(format!(
                "triangle {i} has nonpositive signed area {area:e}"
            )));
        }
        for (a, b) in edges_of(*t) {
            let c = directed.entry((a, b)).or_insert(0);
            *c += 1;
            if *c > 1 {
                return Err(Error::NotConforming(format!(
                    "directed edge ({a}, {b}) appears twice; inconsistent orientation"
                )));
            }
        }
    }
    let mut vertex_at: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, p) in vertices.iter().enumerate() {
        vertex_at.insert(quantize(*p), i);
    }
    for t in triangles {
        for (a, b) in edges_of(*t) {
            let undirected = directed.get(&(a, b)).copied().unwrap_or(0)
                + directed.get(&(b, a)).copied().unwrap_or(0);
            if undirected > 2 {
                return Err(Error::NotConforming(format!(
                    "edge ({a}, {b}) is shared by {undirected} triangles"
                )));
            }
            if undirected == 1 && tag_of_edge(vertices[a], vertices[b]).is_none() {
                return Err(Error::NotConforming(format!(
                    "interior edge ({a}, {b}) has only one incident triangle"
                )));
            }
            let mid = [(vertices[a][0] + vertices[b][0]) / 2.0, (vertices[a][1] + vertices[b][1]) / 2.0];
            if let Some(&v) = vertex_at.get(&quantize(mid)) {
                return Err(Error::NotConforming(format!(
                    "vertex {v} hangs at the midpoint of edge ({a}, {b})"
                )));
            }
        }
    }
    Ok(())
}

impl CoarseMesh {
    fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: u32,
        green_pairs: Vec<GreenPair>,
    ) -> Result<Self> {
        let boundary_edges = extract_boundary_edges(&vertices, &triangles)?;
        let stamp = mesh_stamp(generation, &vertices, &triangles);
        Ok(CoarseMesh { vertices, triangles, boundary_edges, generation, green_pairs, stamp })
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn green_pairs(&self) -> &[GreenPair] {
        &self.green_pairs
    }

    pub fn min_angle(&self) -> f64 {
        min_angle(&self.vertices, &self.triangles)
    }

    pub fn validate(&self) -> Result<()> {
        validate_conformity(&self.vertices, &self.triangles)
    }
}

impl FineMesh {
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn coarse_stamp(&self) -> u64 {
        self.coarse_stamp
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn centroid(&self, i: usize) -> Point {
        let [a, b, c] = self.triangles[i];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Fine vertices lying on the boundary, in ascending index order.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut on_boundary = vec![false; self.vertices.len()];
        for (e, _) in &self.boundary_edges {
            on_boundary[e[0]] = true;
            on_boundary[e[1]] = true;
        }
        (0..self.vertices.len()).filter(|&v| on_boundary[v]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_conformity(&self.vertices, &self.triangles)
    }
}

/// Smallest interior angle over all triangles, in radians.
pub fn min_angle(vertices: &[Point], triangles: &[[usize; 3]]) -> f64 {
    let mut min = f64::INFINITY;
    for t in triangles {
        for k in 0..3 {
            let o = vertices[t[k]];
            let p = vertices[t[(k + 1) % 3]];
            let q = vertices[t[(k + 2) % 3]];
            let u = [p[0] - o[0], p[1] - o[1]];
            let v = [q[0] - o[0], q[1] - o[1]];
            let dot = u[0] * v[0] + u[1] * v[1];
            let cross = u[0] * v[1] - u[1] * v[0];
            min = min.min(cross.atan2(dot).abs());
        }
    }
    min
}

/// Builds the structured cavity grid: `n x n` squares, each split by both
/// diagonals into four congruent triangles meeting at the square's centre.
pub fn build_structured_cavity(n: usize) -> Result<CoarseMesh> {
    if n == 0 {
        return Err(Error::InvalidScenario("mesh subdivision count n must be at least 1".into()));
    }
    let h = 1.0 / n as f64;
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    let centre = |i: usize, j: usize| (n + 1) * (n + 1) + j * n + i;

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }

    let mut triangles = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) =
                (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            let m = centre(i, j);
            triangles.push([a, b, m]);
            triangles.push([b, c, m]);
            triangles.push([c, d, m]);
            triangles.push([d, a, m]);
        }
    }
    CoarseMesh::new(vertices, triangles, 0, Vec::new())
}

/// Splits every coarse triangle into four congruent children by connecting the
/// edge midpoints.
pub fn refine_midpoints(coarse: &CoarseMesh) -> FineMesh {
    let nvc = coarse.vertices.len();
    let mut vertices = coarse.vertices.clone();
    let mut midpoint_parents = Vec::new();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = sorted_edge(a, b);
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let m = vertices.len();
        vertices.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
        midpoint_parents.push([key.0, key.1]);
        midpoint.insert(key, m);
        m
    };

    let mut triangles = Vec::with_capacity(4 * coarse.triangles.len());
    let mut parent = Vec::with_capacity(4 * coarse.triangles.len());
    for (p, &[v0, v1, v2]) in coarse.triangles.iter().enumerate() {
        let m01 = mid(v0, v1, &mut vertices);
        let m12 = mid(v1, v2, &mut vertices);
        let m20 = mid(v2, v0, &mut vertices);
        triangles.push([v0, m01, m20]);
        triangles.push([m01, v1, m12]);
        triangles.push([m20, m12, v2]);
        triangles.push([m01, m12, m20]);
        parent.extend_from_slice(&[p, p, p, p]);
    }

    let boundary_edges = extract_boundary_edges(&vertices, &triangles)
        .expect("midpoint refinement of a conforming mesh is conforming");
    let stamp = mesh_stamp(coarse.generation + 1, &vertices, &triangles);
    FineMesh {
        vertices,
        triangles,
        boundary_edges,
        parent,
        coarse_vertex_count: nvc,
        midpoint_parents,
        coarse_stamp: coarse.stamp,
        stamp,
    }
}

const GREEN_EDGE_TOL: f64 = 1e-9;

/// Conforming red-green refinement of the marked coarse triangles.
///
/// Marked triangles are split into four by their edge midpoints (red). The
/// closure keeps the mesh conforming: a triangle whose longest edge acquires
/// a single hanging midpoint is bisected (green); hanging midpoints on a
/// shorter edge, or two or more of them, promote the triangle to red. Green
/// children are never refined: any refinement touching one removes the pair
/// and red-splits its parent instead, which may cascade across levels. On the
/// diagonal cavity grids this keeps every triangle right-isosceles, so the
/// minimum angle never degrades.
pub fn refine_marked(coarse: &CoarseMesh, marks: &BTreeSet<usize>) -> Result<CoarseMesh> {
    for &m in marks {
        if m >= coarse.triangles.len() {
            return Err(Error::InvalidScenario(format!(
                "mark {m} out of range ({} triangles)",
                coarse.triangles.len()
            )));
        }
    }
    if marks.is_empty() {
        return Ok(coarse.clone());
    }

    let mut vertices = coarse.vertices.clone();
    let mut vertex_at: HashMap<(i64, i64), usize> = HashMap::new();
    for (i, p) in vertices.iter().enumerate() {
        vertex_at.insert(quantize(*p), i);
    }

    let mut tris: Vec<[usize; 3]> = coarse.triangles.clone();
    let mut live: Vec<bool> = vec![true; tris.len()];
    // triangle index -> (sibling, parent vertices)
    let mut green_link: HashMap<usize, (usize, [usize; 3])> = HashMap::new();
    for pair in &coarse.green_pairs {
        green_link.insert(pair.children[0], (pair.children[1], pair.parent_vertices));
        green_link.insert(pair.children[1], (pair.children[0], pair.parent_vertices));
    }

    let midpoint_of = |a: usize, b: usize, vertices: &[Point]| -> Point {
        let (pa, pb) = (vertices[a], vertices[b]);
        [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
    };

    // Materialises a red split at once: hanging-node detection is geometric
    // (a vertex existing at an edge midpoint), so splits cascade across
    // refinement levels until the soup stabilises.
    let split_red = |v: [usize; 3],
                     vertices: &mut Vec<Point>,
                     vertex_at: &mut HashMap<(i64, i64), usize>,
                     tris: &mut Vec<[usize; 3]>,
                     live: &mut Vec<bool>| {
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let m = midpoint_of(a, b, vertices);
            let key = quantize(m);
            if let Some(&v) = vertex_at.get(&key) {
                return v;
            }
            let idx = vertices.len();
            vertices.push(m);
            vertex_at.insert(key, idx);
            idx
        };
        let [v0, v1, v2] = v;
        let m01 = mid(v0, v1, vertices);
        let m12 = mid(v1, v2, vertices);
        let m20 = mid(v2, v0, vertices);
        tris.push([v0, m01, m20]);
        tris.push([m01, v1, m12]);
        tris.push([m20, m12, v2]);
        tris.push([m01, m12, m20]);
        live.extend_from_slice(&[true; 4]);
    };

    // Seed: marked greens are reverted (pair removed, parent re-split red),
    // everything else is split red directly.
    for &m in marks {
        if !live[m] {
            continue; // green sibling of an already-reverted pair
        }
        live[m] = false;
        let verts = match green_link.get(&m) {
            Some(&(sibling, parent)) => {
                live[sibling] = false;
                green_link.remove(&m);
                green_link.remove(&sibling);
                parent
            }
            None => tris[m],
        };
        split_red(verts, &mut vertices, &mut vertex_at, &mut tris, &mut live);
    }

    let edge_len = |a: usize, b: usize, vertices: &[Point]| -> f64 {
        let (pa, pb) = (vertices[a], vertices[b]);
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    };

    // Closure scans until a full pass takes no action. Newly created
    // triangles are appended and examined within the same pass.
    let mut passes = 0usize;
    loop {
        passes += 1;
        if passes > 10_000 {
            return Err(Error::NotConforming("red-green closure did not stabilise".into()));
        }
        let mut acted = false;
        let mut t = 0;
        while t < tris.len() {
            if !live[t] {
                t += 1;
                continue;
            }
            let hanging: Vec<usize> = edges_of(tris[t])
                .iter()
                .enumerate()
                .filter(|(_, &(a, b))| {
                    vertex_at.contains_key(&quantize(midpoint_of(a, b, &vertices)))
                })
                .map(|(k, _)| k)
                .collect();
            if hanging.is_empty() {
                t += 1;
                continue;
            }
            let split_now = if green_link.contains_key(&t) {
                // revert the pair, re-split the parent
                let (sibling, parent) = green_link[&t];
                live[t] = false;
                live[sibling] = false;
                green_link.remove(&t);
                green_link.remove(&sibling);
                Some(parent)
            } else if hanging.len() >= 2 {
                live[t] = false;
                Some(tris[t])
            } else {
                let (a, b) = edges_of(tris[t])[hanging[0]];
                let longest = edges_of(tris[t])
                    .iter()
                    .map(|&(x, y)| edge_len(x, y, &vertices))
                    .fold(0.0f64, f64::max);
                if edge_len(a, b, &vertices) < longest * (1.0 - GREEN_EDGE_TOL) {
                    live[t] = false;
                    Some(tris[t])
                } else {
                    None // single hanging midpoint on the longest edge: green, later
                }
            };
            if let Some(verts) = split_now {
                split_red(verts, &mut vertices, &mut vertex_at, &mut tris, &mut live);
                acted = true;
            }
            t += 1;
        }
        if !acted {
            break;
        }
    }

    // Emit: the remaining single-hanging triangles become green pairs.
    let mut out_tris: Vec<[usize; 3]> = Vec::new();
    let mut out_greens: Vec<GreenPair> = Vec::new();
    for t in 0..tris.len() {
        if !live[t] {
            continue;
        }
        let hanging: Vec<usize> = edges_of(tris[t])
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| vertex_at.contains_key(&quantize(midpoint_of(a, b, &vertices))))
            .map(|(k, _)| k)
            .collect();
        match hanging.len() {
            0 => out_tris.push(tris[t]),
            1 => {
                let k = hanging[0];
                let (a, b) = edges_of(tris[t])[k];
                let opp = tris[t][(k + 2) % 3];
                let m = vertex_at[&quantize(midpoint_of(a, b, &vertices))];
                let first = out_tris.len();
                out_tris.push([opp, a, m]);
                out_tris.push([opp, m, b]);
                out_greens.push(GreenPair { children: [first, first + 1], parent_vertices: tris[t] });
            }
            _ => unreachable!("closure left a triangle with multiple hanging midpoints"),
        }
    }

    let refined = CoarseMesh::new(vertices, out_tris, coarse.generation + 1, out_greens)?;
    refined.validate()?;
    Ok(refined)
}

/// Uniform-grid point locator over a triangulation of the unit square.
pub struct TriLocator {
    grid: usize,
    cells: Vec<Vec<u32>>,
}

impl TriLocator {
    pub fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let grid = ((triangles.len() as f64).sqrt() as usize).clamp(1, 512);
        let mut cells = vec![Vec::new(); grid * grid];
        let clamp_cell = |v: f64| ((v * grid as f64) as isize).clamp(0, grid as isize - 1) as usize;
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|v| vertices[v][0]);
            let ys = tri.map(|v| vertices[v][1]);
            let (x0, x1) = (clamp_cell(xs.iter().copied().fold(f64::MAX, f64::min) - 1e-12),
                clamp_cell(xs.iter().copied().fold(f64::MIN, f64::max) + 1e-12));
            let (y0, y1) = (clamp_cell(ys.iter().copied().fold(f64::MAX, f64::min) - 1e-12),
                clamp_cell(ys.iter().copied().fold(f64::MIN, f64::max) + 1e-12));
            for j in y0..=y1 {
                for i in x0..=x1 {
                    cells[j * grid + i].push(t as u32);
                }
            }
        }
        TriLocator { grid, cells }
    }

    /// Returns the containing triangle and barycentric coordinates, accepting
    /// points up to a small negative barycentric tolerance outside an element.
    pub fn locate(
        &self,
        vertices: &[Point],
        triangles: &[[usize; 3]],
        p: Point,
    ) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = -1e-10;
        let clamp_cell =
            |v: f64| ((v * self.grid as f64) as isize).clamp(0, self.grid as isize - 1) as usize;
        let cell = &self.cells[clamp_cell(p[1]) * self.grid + clamp_cell(p[0])];
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in cell {
            let [a, b, c] = triangles[t as usize];
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let area = signed_area(pa, pb, pc);
            let la = signed_area(p, pb, pc) / area;
            let lb = signed_area(pa, p, pc) / area;
            let lc = 1.0 - la - lb;
            let min = la.min(lb).min(lc);
            if best.as_ref().is_none_or(|&(_, _, m)| min > m) {
                best = Some((t as usize, [la, lb, lc], min));
            }
        }
        match best {
            Some((t, bary, min)) if min >= TOL => {
                let clamped = bary.map(|l| l.max(0.0));
                let sum: f64 = clamped.iter().sum();
                Some((t, clamped.map(|l| l / sum)))
            }
            _ => None,
        }
    }
}
