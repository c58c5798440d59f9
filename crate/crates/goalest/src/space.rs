//! P1/P2 Lagrange scalar function spaces on triangles, a fixed degree-6
//! quadrature rule, and transfer operators between the two spaces.
//!
//! Dof ordering is vertices first (mesh order), then edge midpoints in
//! lexicographic vertex-pair order, which makes restriction a prefix copy
//! and keeps dof numbering reproducible across runs.

use std::sync::Arc;

use crate::mesh::Mesh;
use crate::{Error, Result};

/// Maximum number of local dofs per element (6 for scalar P2).
pub const MAX_LOCAL_DOFS: usize = 6;

/// Polynomial order of a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    P1,
    P2,
}

/// The 12-point, degree-6 symmetric triangle rule used for every integral
/// in the crate (assembly, QoIs, localization). Weights sum to one on the
/// reference triangle; multiply by the physical element area.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn degree6() -> Self {
        const A1: f64 = 0.063_089_014_491_502_23;
        const W1: f64 = 0.050_844_906_370_206_82;
        const A2: f64 = 0.249_286_745_170_910_42;
        const W2: f64 = 0.116_786_275_726_379_37;
        const A3: f64 = 0.053_145_049_844_816_95;
        const B3: f64 = 0.310_352_451_033_784_4;
        const W3: f64 = 0.082_851_075_618_373_57;

        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        for a in [A1, A2] {
            let w = if a == A1 { W1 } else { W2 };
            points.push([1.0 - 2.0 * a, a, a]);
            points.push([a, 1.0 - 2.0 * a, a]);
            points.push([a, a, 1.0 - 2.0 * a]);
            weights.extend_from_slice(&[w, w, w]);
        }
        let c3 = 1.0 - A3 - B3;
        for (l1, l2) in [(A3, B3), (B3, A3), (A3, c3), (c3, A3), (B3, c3), (c3, B3)] {
            points.push([l1, l2, 1.0 - l1 - l2]);
            weights.push(W3);
        }
        QuadratureRule { points, weights }
    }
}

/// Nodal coefficients of a finite element function, one value per global
/// dof of its space. Dirichlet entries hold the prescribed boundary value,
/// zero for this problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(space: &FunctionSpace) -> Self {
        CoefficientVector {
            values: vec![0.0; space.dof_count()],
        }
    }

    pub fn from_values(space: &FunctionSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.dof_count() {
            return Err(Error::SpaceMismatch {
                expected: space.dof_count(),
                got: values.len(),
            });
        }
        Ok(CoefficientVector { values })
    }

    /// Nodal interpolation of a function of physical coordinates.
    pub fn interpolate(space: &FunctionSpace, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = space
            .dof_positions()
            .iter()
            .map(|p| f(p[0], p[1]))
            .collect();
        CoefficientVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &CoefficientVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn axpy(&mut self, alpha: f64, other: &CoefficientVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }
}

/// A P1 or P2 Lagrange space on a shared mesh.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    order: Order,
    dof_count: usize,
    /// Per-triangle local-to-global dof map; P1 uses the first 3 slots.
    elem_dofs: Vec<[usize; MAX_LOCAL_DOFS]>,
    dirichlet: Vec<bool>,
    dof_positions: Vec<[f64; 2]>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, order: Order) -> Self {
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let dof_count = match order {
            Order::P1 => nv,
            Order::P2 => nv + ne,
        };

        let mut elem_dofs = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let [a, b, c] = mesh.triangle(t);
            let mut dofs = [usize::MAX; MAX_LOCAL_DOFS];
            dofs[0] = a;
            dofs[1] = b;
            dofs[2] = c;
            if order == Order::P2 {
                dofs[3] = nv + mesh.edge_id(a, b).unwrap();
                dofs[4] = nv + mesh.edge_id(b, c).unwrap();
                dofs[5] = nv + mesh.edge_id(c, a).unwrap();
            }
            elem_dofs.push(dofs);
        }

        let mut dirichlet = vec![false; dof_count];
        let mut dof_positions = Vec::with_capacity(dof_count);
        for (v, flag) in dirichlet.iter_mut().enumerate().take(nv) {
            *flag = mesh.is_boundary_vertex(v);
            dof_positions.push(mesh.vertex(v));
        }
        if order == Order::P2 {
            for (e, &[a, b]) in mesh.edges().iter().enumerate() {
                dirichlet[nv + e] = mesh.is_boundary_edge(e);
                let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
                dof_positions.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }

        FunctionSpace {
            mesh,
            order,
            dof_count,
            elem_dofs,
            dirichlet,
            dof_positions,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn local_dof_count(&self) -> usize {
        match self.order {
            Order::P1 => 3,
            Order::P2 => 6,
        }
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.elem_dofs[t][..self.local_dof_count()]
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet[dof]
    }

    pub fn dirichlet_dofs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dof_count).filter(|&d| self.dirichlet[d])
    }

    /// Physical coordinates of each dof's node.
    pub fn dof_positions(&self) -> &[[f64; 2]] {
        &self.dof_positions
    }

    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Shape function values at a barycentric point, in local dof order.
    pub fn shape_values(&self, bary: [f64; 3], out: &mut [f64; MAX_LOCAL_DOFS]) {
        let [l1, l2, l3] = bary;
        match self.order {
            Order::P1 => {
                out[0] = l1;
                out[1] = l2;
                out[2] = l3;
            }
            Order::P2 => {
                out[0] = l1 * (2.0 * l1 - 1.0);
                out[1] = l2 * (2.0 * l2 - 1.0);
                out[2] = l3 * (2.0 * l3 - 1.0);
                out[3] = 4.0 * l1 * l2;
                out[4] = 4.0 * l2 * l3;
                out[5] = 4.0 * l3 * l1;
            }
        }
    }

    /// Physical gradients of shape functions on a triangle at a barycentric
    /// point. P1 gradients are constant; P2 gradients use the chain rule
    /// through the barycentric gradients of the affine map.
    pub fn shape_gradients(&self, t: usize, bary: [f64; 3], out: &mut [[f64; 2]; MAX_LOCAL_DOFS]) {
        let grad_l = self.barycentric_gradients(t);
        let [l1, l2, l3] = bary;
        match self.order {
            Order::P1 => {
                out[..3].copy_from_slice(&grad_l);
            }
            Order::P2 => {
                for (k, l) in [l1, l2, l3].into_iter().enumerate() {
                    let s = 4.0 * l - 1.0;
                    out[k] = [s * grad_l[k][0], s * grad_l[k][1]];
                }
                for (slot, (i, j)) in [(0usize, 1usize), (1, 2), (2, 0)].into_iter().enumerate() {
                    let li = [l1, l2, l3][i];
                    let lj = [l1, l2, l3][j];
                    out[3 + slot] = [
                        4.0 * (lj * grad_l[i][0] + li * grad_l[j][0]),
                        4.0 * (lj * grad_l[i][1] + li * grad_l[j][1]),
                    ];
                }
            }
        }
    }

    /// Constant physical gradients of the barycentric coordinates.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.mesh.triangle_coords(t);
        let d = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        [
            [(b[1] - c[1]) / d, (c[0] - b[0]) / d],
            [(c[1] - a[1]) / d, (a[0] - c[0]) / d],
            [(a[1] - b[1]) / d, (b[0] - a[0]) / d],
        ]
    }

    /// Physical coordinates of a barycentric point on a triangle.
    pub fn physical_point(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.mesh.triangle_coords(t);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Evaluates the function and its gradient at a barycentric point of a
    /// triangle.
    pub fn evaluate(
        &self,
        coeffs: &CoefficientVector,
        t: usize,
        bary: [f64; 3],
    ) -> Result<(f64, [f64; 2])> {
        if t >= self.mesh.n_triangles() {
            return Err(Error::IndexOutOfRange(format!("triangle {t}")));
        }
        if coeffs.len() != self.dof_count {
            return Err(Error::SpaceMismatch {
                expected: self.dof_count,
                got: coeffs.len(),
            });
        }
        let mut n = [0.0; MAX_LOCAL_DOFS];
        let mut g = [[0.0; 2]; MAX_LOCAL_DOFS];
        self.shape_values(bary, &mut n);
        self.shape_gradients(t, bary, &mut g);
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for (k, &dof) in self.element_dofs(t).iter().enumerate() {
            let c = coeffs.values[dof];
            value += c * n[k];
            grad[0] += c * g[k][0];
            grad[1] += c * g[k][1];
        }
        Ok((value, grad))
    }
}

/// Interpolates a coarse P1 coefficient vector onto the P2 space of the
/// same mesh: vertex dofs are copied, each edge-midpoint dof is the average
/// of the edge's endpoint values.
pub fn prolong(
    coarse: &FunctionSpace,
    fine: &FunctionSpace,
    u: &CoefficientVector,
) -> Result<CoefficientVector> {
    check_pair(coarse, fine, u)?;
    let mesh = coarse.mesh();
    let nv = mesh.n_vertices();
    let mut values = Vec::with_capacity(fine.dof_count());
    values.extend_from_slice(&u.values);
    for &[a, b] in mesh.edges() {
        values.push(0.5 * (u.values[a] + u.values[b]));
    }
    debug_assert_eq!(values.len(), nv + mesh.n_edges());
    Ok(CoefficientVector { values })
}

/// Restricts a fine P2 coefficient vector onto the P1 space of the same
/// mesh by interpolation at the coarse nodes (vertex values are kept).
pub fn restrict(
    fine: &FunctionSpace,
    coarse: &FunctionSpace,
    u: &CoefficientVector,
) -> Result<CoefficientVector> {
    check_pair(coarse, fine, u)?;
    // Fine dof layout starts with the vertex block.
    Ok(CoefficientVector {
        values: u.values[..coarse.dof_count()].to_vec(),
    })
}

fn check_pair(coarse: &FunctionSpace, fine: &FunctionSpace, u: &CoefficientVector) -> Result<()> {
    if !coarse.same_mesh(fine) {
        return Err(Error::MeshMismatch);
    }
    if coarse.order() != Order::P1 || fine.order() != Order::P2 {
        return Err(Error::MeshMismatch);
    }
    let expected = if u.len() == coarse.dof_count() {
        coarse.dof_count()
    } else {
        fine.dof_count()
    };
    if u.len() != expected {
        return Err(Error::SpaceMismatch {
            expected,
            got: u.len(),
        });
    }
    Ok(())
}
