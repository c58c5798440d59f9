//! Conforming triangle meshes of the square-with-hole domain.
//!
//! The domain is `(-1,1)^2` with the closed square `[-1/2,1/2]^2` removed.
//! QoIs J2..J4 integrate over the L-shaped subdomain
//! `(0,1) x (-1,0) \ [0,1/2] x [-1/2,0]`; meshes are constructed so that no
//! element ever crosses the subdomain boundary.

use std::collections::HashMap;

use crate::{Error, Result};

/// Half-width of the outer square.
pub const OUTER: f64 = 1.0;
/// Half-width of the square hole.
pub const HOLE: f64 = 0.5;

const GEOM_TOL: f64 = 1e-12;

/// Membership of a triangle in the QoI subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    InSubdomain,
    Out,
}

/// Boundary condition tag carried by boundary edges. The whole boundary of
/// the model domain is Dirichlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
}

/// An edge of the mesh lying on the domain boundary.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Per-element target sizes driving adaptive refinement. Targets are
/// expressed as the desired longest-edge length of each element.
#[derive(Debug, Clone)]
pub struct SizeField {
    pub targets: Vec<f64>,
}

impl SizeField {
    /// Size field that requests no change: targets equal current sizes.
    pub fn current(mesh: &Mesh) -> Self {
        SizeField {
            targets: (0..mesh.n_triangles())
                .map(|t| mesh.element_size(t))
                .collect(),
        }
    }

    /// Uniform scaling of the current sizes, mainly useful in tests.
    pub fn scaled(mesh: &Mesh, ratio: f64) -> Self {
        SizeField {
            targets: (0..mesh.n_triangles())
                .map(|t| ratio * mesh.element_size(t))
                .collect(),
        }
    }
}

/// A conforming triangulation with boundary and subdomain tags.
///
/// Connectivity (unique edges in lexicographic vertex-pair order, edge to
/// triangle incidence, vertex stars) is derived once at construction; a mesh
/// is immutable afterwards.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    edges: Vec<[usize; 2]>,
    edge_ids: HashMap<[usize; 2], usize>,
    edge_tris: Vec<[Option<usize>; 2]>,
    boundary_edges: Vec<BoundaryEdge>,
    vertex_tris: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw vertices and (counterclockwise) triangles,
    /// deriving connectivity, boundary edges, and subdomain flags.
    pub fn from_parts(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let regions = triangles
            .iter()
            .map(|t| classify_region(&vertices, t))
            .collect();
        Self::from_tagged_parts(vertices, triangles, regions)
    }

    fn from_tagged_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
    ) -> Result<Self> {
        // Unique edges in lexicographic order make downstream dof numbering
        // reproducible across runs.
        let mut edges: Vec<[usize; 2]> = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| sorted_pair(t[k], t[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let edge_ids: HashMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();

        let mut edge_tris = vec![[None, None]; edges.len()];
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = edge_ids[&sorted_pair(t[k], t[(k + 1) % 3])];
                let slot = &mut edge_tris[e];
                if slot[0].is_none() {
                    slot[0] = Some(ti);
                } else if slot[1].is_none() {
                    slot[1] = Some(ti);
                } else {
                    return Err(Error::NonConforming(format!(
                        "edge {:?} has more than two incident triangles",
                        edges[e]
                    )));
                }
            }
        }

        let boundary_edges: Vec<BoundaryEdge> = edges
            .iter()
            .zip(&edge_tris)
            .filter(|(_, inc)| inc[1].is_none())
            .map(|(e, _)| BoundaryEdge {
                vertices: *e,
                tag: BoundaryTag::Dirichlet,
            })
            .collect();

        let mut vertex_tris = vec![Vec::new(); vertices.len()];
        for (ti, t) in triangles.iter().enumerate() {
            for &v in t {
                vertex_tris[v].push(ti);
            }
        }

        let mut boundary_vertex = vec![false; vertices.len()];
        for be in &boundary_edges {
            boundary_vertex[be.vertices[0]] = true;
            boundary_vertex[be.vertices[1]] = true;
        }

        let mesh = Mesh {
            vertices,
            triangles,
            regions,
            edges,
            edge_ids,
            edge_tris,
            boundary_edges,
            vertex_tris,
            boundary_vertex,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn region(&self, t: usize) -> Region {
        self.regions[t]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids.get(&sorted_pair(a, b)).copied()
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1].is_none()
    }

    /// Triangles incident to a vertex.
    pub fn vertex_star(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Characteristic element size: the longest edge length.
    pub fn element_size(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    pub fn subdomain_area(&self) -> f64 {
        (0..self.n_triangles())
            .filter(|&t| self.regions[t] == Region::InSubdomain)
            .map(|t| self.signed_area(t))
            .sum()
    }

    /// Conformity and orientation checks. Every interior edge must have
    /// exactly two incident triangles, boundary edges exactly one and their
    /// endpoints must lie on the domain boundary, all signed areas must be
    /// positive, and subdomain tags must agree with the geometry.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.n_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::NonConforming(format!(
                    "triangle {t} has non-positive area {}",
                    self.signed_area(t)
                )));
            }
        }
        for (e, inc) in self.edge_tris.iter().enumerate() {
            if inc[0].is_none() {
                return Err(Error::NonConforming(format!("edge {e} has no triangle")));
            }
            if inc[1].is_none() {
                let [a, b] = self.edges[e];
                if !on_domain_boundary(self.vertices[a]) || !on_domain_boundary(self.vertices[b]) {
                    return Err(Error::NonConforming(format!(
                        "edge {:?} has one incident triangle but does not lie on the boundary",
                        self.edges[e]
                    )));
                }
            }
        }
        for t in 0..self.n_triangles() {
            let geometric = classify_region(&self.vertices, &self.triangles[t]);
            if geometric != self.regions[t] {
                return Err(Error::NonConforming(format!(
                    "triangle {t} region tag {:?} disagrees with geometry {:?}",
                    self.regions[t], geometric
                )));
            }
        }
        Ok(())
    }

    /// Uniform red refinement: each triangle is split into four similar
    /// children through its edge midpoints. Tags are inherited.
    pub fn uniform_refine(&self) -> Result<Mesh> {
        let mut vertices = self.vertices.clone();
        // One new vertex per edge, in edge order.
        let midpoint_of: Vec<usize> = self
            .edges
            .iter()
            .map(|&[a, b]| {
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                vertices.len() - 1
            })
            .collect();

        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        let mut regions = Vec::with_capacity(4 * self.n_triangles());
        for (ti, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = *t;
            let mab = midpoint_of[self.edge_id(a, b).unwrap()];
            let mbc = midpoint_of[self.edge_id(b, c).unwrap()];
            let mca = midpoint_of[self.edge_id(c, a).unwrap()];
            for child in [[a, mab, mca], [b, mbc, mab], [c, mca, mbc], [mab, mbc, mca]] {
                triangles.push(child);
                regions.push(self.regions[ti]);
            }
        }
        Mesh::from_tagged_parts(vertices, triangles, regions)
    }

    /// Conforming refinement driven by a size field: every element whose
    /// current size exceeds its target is bisected along its longest edge,
    /// recursively and with closure propagation, until all element sizes are
    /// at or below their inherited targets. Refinement only; elements at or
    /// under target are left alone unless closure requires a split.
    pub fn adapt(&self, size: &SizeField) -> Result<Mesh> {
        assert_eq!(size.targets.len(), self.n_triangles());
        let mut refiner = refine::Refiner::new(self, &size.targets);
        refiner.run();
        let (vertices, triangles, regions) = refiner.into_parts();
        Mesh::from_tagged_parts(vertices, triangles, regions)
    }
}

/// Generates the initial 192-element mesh: a structured grid of 0.25 x 0.25
/// cells covering the square-with-hole domain, each cell split criss-cross
/// into four triangles around its center. All cell lines fall on multiples
/// of 1/4, so the subdomain boundary is resolved by mesh edges exactly.
pub fn generate_initial_mesh() -> Mesh {
    let n = 8; // cells per side over (-1,1)
    let h = 2.0 * OUTER / n as f64;
    let coord = |i: usize| -OUTER + h * i as f64;

    let mut vertices = Vec::new();
    let mut grid_id = HashMap::new();
    for j in 0..=n {
        for i in 0..=n {
            let p = [coord(i), coord(j)];
            // Skip grid vertices strictly inside the hole.
            if p[0].abs() < HOLE - GEOM_TOL && p[1].abs() < HOLE - GEOM_TOL {
                continue;
            }
            grid_id.insert((i, j), vertices.len());
            vertices.push(p);
        }
    }

    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let x0 = coord(i);
            let x1 = coord(i + 1);
            let y0 = coord(j);
            let y1 = coord(j + 1);
            // Skip cells inside the hole.
            if x0 >= -HOLE - GEOM_TOL
                && x1 <= HOLE + GEOM_TOL
                && y0 >= -HOLE - GEOM_TOL
                && y1 <= HOLE + GEOM_TOL
            {
                continue;
            }
            let center = vertices.len();
            vertices.push([0.5 * (x0 + x1), 0.5 * (y0 + y1)]);
            let v00 = grid_id[&(i, j)];
            let v10 = grid_id[&(i + 1, j)];
            let v11 = grid_id[&(i + 1, j + 1)];
            let v01 = grid_id[&(i, j + 1)];
            // Four counterclockwise triangles around the cell center.
            triangles.push([v00, v10, center]);
            triangles.push([v10, v11, center]);
            triangles.push([v11, v01, center]);
            triangles.push([v01, v00, center]);
        }
    }

    Mesh::from_parts(vertices, triangles).expect("initial mesh must be conforming")
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// True if a point lies on the boundary of the square-with-hole domain.
pub fn on_domain_boundary(p: [f64; 2]) -> bool {
    let (ax, ay) = (p[0].abs(), p[1].abs());
    let on_outer = (ax - OUTER).abs() <= GEOM_TOL || (ay - OUTER).abs() <= GEOM_TOL;
    let on_hole = ax <= HOLE + GEOM_TOL
        && ay <= HOLE + GEOM_TOL
        && ((ax - HOLE).abs() <= GEOM_TOL || (ay - HOLE).abs() <= GEOM_TOL);
    on_outer || on_hole
}

/// True if a point lies in the closure of the QoI subdomain, the L-shape
/// `[0,1] x [-1,0]` minus the open quarter `[0,1/2) x (-1/2,0]`.
pub fn in_subdomain_closure(p: [f64; 2]) -> bool {
    let (x, y) = (p[0], p[1]);
    let in_quadrant =
        (-GEOM_TOL..=OUTER + GEOM_TOL).contains(&x) && (-OUTER - GEOM_TOL..=GEOM_TOL).contains(&y);
    let in_removed_open = x < HOLE - GEOM_TOL && y > -HOLE + GEOM_TOL;
    in_quadrant && !in_removed_open
}

fn classify_region(vertices: &[[f64; 2]], t: &[usize; 3]) -> Region {
    let corners_in = t.iter().all(|&v| in_subdomain_closure(vertices[v]));
    let centroid = [
        (vertices[t[0]][0] + vertices[t[1]][0] + vertices[t[2]][0]) / 3.0,
        (vertices[t[0]][1] + vertices[t[1]][1] + vertices[t[2]][1]) / 3.0,
    ];
    if corners_in && in_subdomain_closure(centroid) {
        Region::InSubdomain
    } else {
        Region::Out
    }
}

mod refine {
    //! Longest-edge (Rivara) bisection with conformity closure.
    //!
    //! A split always happens at a terminal pair of the longest-edge
    //! propagation path, i.e. an edge that is longest for both incident
    //! triangles (or a boundary edge that is longest for its only triangle),
    //! which keeps the mesh conforming at every step. Ties in edge length
    //! are broken by the sorted vertex pair so propagation paths are
    //! strictly increasing and finite.

    use super::{midpoint, sorted_pair, Mesh, Region};
    use std::cmp::Ordering;
    use std::collections::{BinaryHeap, HashMap};

    struct Tri {
        v: [usize; 3],
        region: Region,
        target: f64,
        alive: bool,
    }

    /// Worklist entry ordered by element size so the largest oversized
    /// element is always processed first. Splitting big edges before small
    /// ones keeps longest-edge propagation paths short.
    struct Entry {
        len2: f64,
        tri: usize,
    }

    impl PartialEq for Entry {
        fn eq(&self, other: &Self) -> bool {
            self.len2 == other.len2 && self.tri == other.tri
        }
    }
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            self.len2
                .total_cmp(&other.len2)
                .then(self.tri.cmp(&other.tri))
        }
    }

    pub struct Refiner {
        vertices: Vec<[f64; 2]>,
        tris: Vec<Tri>,
        edge_tris: HashMap<[usize; 2], Vec<usize>>,
        queue: BinaryHeap<Entry>,
    }

    impl Refiner {
        pub fn new(mesh: &Mesh, targets: &[f64]) -> Self {
            let vertices = mesh.vertices().to_vec();
            let tris: Vec<Tri> = (0..mesh.n_triangles())
                .map(|t| Tri {
                    v: mesh.triangle(t),
                    region: mesh.region(t),
                    target: targets[t],
                    alive: true,
                })
                .collect();
            let mut edge_tris: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
            for (ti, tri) in tris.iter().enumerate() {
                for k in 0..3 {
                    edge_tris
                        .entry(sorted_pair(tri.v[k], tri.v[(k + 1) % 3]))
                        .or_default()
                        .push(ti);
                }
            }
            let mut refiner = Refiner {
                vertices,
                tris,
                edge_tris,
                queue: BinaryHeap::new(),
            };
            for t in 0..refiner.tris.len() {
                refiner.enqueue_if_oversized(t);
            }
            refiner
        }

        fn enqueue_if_oversized(&mut self, t: usize) {
            let (_, len2) = self.longest_edge(t);
            if len2.sqrt() > self.tris[t].target {
                self.queue.push(Entry { len2, tri: t });
            }
        }

        pub fn run(&mut self) {
            while let Some(Entry { tri: t, .. }) = self.queue.pop() {
                if !self.tris[t].alive {
                    continue;
                }
                while self.tris[t].alive && self.oversized(t) {
                    self.refine_step(t);
                }
            }
        }

        pub fn into_parts(self) -> (Vec<[f64; 2]>, Vec<[usize; 3]>, Vec<Region>) {
            let mut triangles = Vec::new();
            let mut regions = Vec::new();
            for tri in &self.tris {
                if tri.alive {
                    triangles.push(tri.v);
                    regions.push(tri.region);
                }
            }
            (self.vertices, triangles, regions)
        }

        fn oversized(&self, t: usize) -> bool {
            self.size(t) > self.tris[t].target
        }

        fn size(&self, t: usize) -> f64 {
            let (_, len2) = self.longest_edge(t);
            len2.sqrt()
        }

        /// Longest edge of a triangle with deterministic tie-breaking by the
        /// sorted vertex pair. Returns the edge key and its squared length.
        fn longest_edge(&self, t: usize) -> ([usize; 2], f64) {
            let v = self.tris[t].v;
            let mut best: Option<([usize; 2], f64)> = None;
            for k in 0..3 {
                let e = sorted_pair(v[k], v[(k + 1) % 3]);
                let d = [
                    self.vertices[e[1]][0] - self.vertices[e[0]][0],
                    self.vertices[e[1]][1] - self.vertices[e[0]][1],
                ];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let better = match best {
                    None => true,
                    Some((be, bl)) => len2 > bl || (len2 == bl && e > be),
                };
                if better {
                    best = Some((e, len2));
                }
            }
            best.unwrap()
        }

        fn neighbor_across(&self, t: usize, e: [usize; 2]) -> Option<usize> {
            self.edge_tris
                .get(&e)?
                .iter()
                .copied()
                .find(|&o| o != t && self.tris[o].alive)
        }

        /// Walks the longest-edge propagation path from `t0` and splits one
        /// terminal pair. Repeated calls eventually bisect `t0` itself.
        fn refine_step(&mut self, t0: usize) {
            let mut t = t0;
            loop {
                let (e, len2) = self.longest_edge(t);
                match self.neighbor_across(t, e) {
                    Some(n) => {
                        let (ne, nlen2) = self.longest_edge(n);
                        if ne == e {
                            self.split_edge(e, t, Some(n));
                            return;
                        }
                        debug_assert!(
                            (nlen2, ne) > (len2, e),
                            "propagation path must strictly increase"
                        );
                        t = n;
                    }
                    None => {
                        self.split_edge(e, t, None);
                        return;
                    }
                }
            }
        }

        fn split_edge(&mut self, e: [usize; 2], t: usize, n: Option<usize>) {
            let m = self.vertices.len();
            self.vertices
                .push(midpoint(self.vertices[e[0]], self.vertices[e[1]]));
            self.bisect(t, e, m);
            if let Some(n) = n {
                self.bisect(n, e, m);
            }
        }

        /// Replaces triangle `t` by its two children across edge `e`, whose
        /// midpoint vertex is `m`. Children inherit region and target.
        fn bisect(&mut self, t: usize, e: [usize; 2], m: usize) {
            let v = self.tris[t].v;
            let k = (0..3)
                .find(|&k| sorted_pair(v[k], v[(k + 1) % 3]) == e)
                .expect("edge must belong to triangle");
            let (a, b, c) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);

            self.tris[t].alive = false;
            for k in 0..3 {
                let key = sorted_pair(v[k], v[(k + 1) % 3]);
                if let Some(inc) = self.edge_tris.get_mut(&key) {
                    inc.retain(|&o| o != t);
                }
            }

            let region = self.tris[t].region;
            let target = self.tris[t].target;
            // Both children keep the parent's counterclockwise orientation.
            for child_v in [[a, m, c], [m, b, c]] {
                let id = self.tris.len();
                self.tris.push(Tri {
                    v: child_v,
                    region,
                    target,
                    alive: true,
                });
                for k in 0..3 {
                    self.edge_tris
                        .entry(sorted_pair(child_v[k], child_v[(k + 1) % 3]))
                        .or_default()
                        .push(id);
                }
                self.enqueue_if_oversized(id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_mesh_has_192_elements() {
        let mesh = generate_initial_mesh();
        assert_eq!(mesh.n_triangles(), 192);
    }

    #[test]
    fn initial_mesh_areas() {
        let mesh = generate_initial_mesh();
        assert!((mesh.total_area() - 3.0).abs() <= 1e-12);
        assert!((mesh.subdomain_area() - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn initial_mesh_is_conforming_and_oriented() {
        let mesh = generate_initial_mesh();
        mesh.validate().unwrap();
        for t in 0..mesh.n_triangles() {
            assert!(mesh.signed_area(t) > 0.0);
        }
    }

    #[test]
    fn uniform_refine_quadruples_elements() {
        let mesh = generate_initial_mesh();
        let fine = mesh.uniform_refine().unwrap();
        assert_eq!(fine.n_triangles(), 768);
        let finer = fine.uniform_refine().unwrap();
        assert_eq!(finer.n_triangles(), 3072);
    }

    #[test]
    fn uniform_refine_preserves_area_and_tags() {
        let mesh = generate_initial_mesh();
        let fine = mesh.uniform_refine().unwrap();
        assert!((fine.total_area() - mesh.total_area()).abs() <= 1e-12);
        assert!((fine.subdomain_area() - mesh.subdomain_area()).abs() <= 1e-12);
        fine.validate().unwrap();
    }

    #[test]
    fn adapt_with_current_sizes_is_identity() {
        let mesh = generate_initial_mesh();
        let adapted = mesh.adapt(&SizeField::current(&mesh)).unwrap();
        assert_eq!(adapted.n_triangles(), mesh.n_triangles());
    }

    #[test]
    fn adapt_with_halved_sizes_refines_everything() {
        let mesh = generate_initial_mesh();
        let adapted = mesh.adapt(&SizeField::scaled(&mesh, 0.5)).unwrap();
        assert!(adapted.n_triangles() >= 2 * mesh.n_triangles());
        adapted.validate().unwrap();
        // All elements must have reached their inherited targets.
        assert!((adapted.total_area() - mesh.total_area()).abs() <= 1e-12);
    }

    #[test]
    fn adapt_localizes_refinement_near_a_marked_vertex() {
        let mesh = generate_initial_mesh();
        // Mark only the star of one interior vertex for refinement.
        let v = (0..mesh.n_vertices())
            .find(|&v| !mesh.is_boundary_vertex(v))
            .unwrap();
        let mut targets: Vec<f64> = (0..mesh.n_triangles())
            .map(|t| mesh.element_size(t))
            .collect();
        for &t in mesh.vertex_star(v) {
            targets[t] = 0.5 * mesh.element_size(t);
        }
        let adapted = mesh.adapt(&SizeField { targets }).unwrap();
        assert!(adapted.n_triangles() > mesh.n_triangles());
        adapted.validate().unwrap();

        // Count the element growth within the 2-ring of the marked vertex:
        // the oracle is geometric distance from the vertex position.
        let p = mesh.vertex(v);
        let two_ring_radius = 2.0 * 0.25 * std::f64::consts::SQRT_2 + 1e-9;
        let near = |m: &Mesh| {
            (0..m.n_triangles())
                .filter(|&t| dist(m.centroid(t), p) <= two_ring_radius)
                .count() as i64
        };
        let new_elements = adapted.n_triangles() as i64 - mesh.n_triangles() as i64;
        let near_new = near(&adapted) - near(&mesh);
        // At least 80% of the growth happens near the marked vertex.
        assert!(
            5 * near_new >= 4 * new_elements,
            "localized refinement: {near_new} of {new_elements} new elements near vertex"
        );
    }

    #[test]
    fn subdomain_boundary_is_never_crossed() {
        let mesh = generate_initial_mesh();
        let adapted = mesh.adapt(&SizeField::scaled(&mesh, 0.5)).unwrap();
        for m in [&mesh, &adapted] {
            for t in 0..m.n_triangles() {
                // validate() already cross-checks tags against geometry; here
                // we additionally ensure no element straddles the subdomain
                // boundary lines x=0, x=1/2 (y<0) and y=-1/2, y=0 (x>0).
                let cs = m.triangle_coords(t);
                let cx = m.centroid(t);
                if m.region(t) == Region::InSubdomain {
                    assert!(in_subdomain_closure(cx));
                    for c in cs {
                        assert!(in_subdomain_closure(c));
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_edges_lie_on_gamma() {
        let mesh = generate_initial_mesh().uniform_refine().unwrap();
        for be in mesh.boundary_edges() {
            for &v in &be.vertices {
                assert!(on_domain_boundary(mesh.vertex(v)));
            }
            assert_eq!(be.tag, BoundaryTag::Dirichlet);
        }
    }

    #[test]
    fn construction_rejects_bad_input() {
        // Clockwise triangle: negative signed area.
        let clockwise = Mesh::from_parts(vec![[1.0, 0.5], [1.0, 1.0], [0.5, 1.0]], vec![[0, 2, 1]]);
        assert!(clockwise.is_err());

        // Three triangles sharing one edge cannot be conforming.
        let overshared = Mesh::from_parts(
            vec![[0.5, 0.5], [1.0, 0.5], [0.75, 1.0], [0.75, 0.0], [0.2, 0.8]],
            vec![[0, 1, 2], [0, 3, 1], [0, 1, 4]],
        );
        assert!(overshared.is_err());
    }
}
