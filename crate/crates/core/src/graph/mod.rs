//! Thermal resistance network of the control volumes as a weighted undirected
//! graph, and the state-dependent matrices assembled from it.

mod detect;
mod lpv;

pub use detect::{check_detectability, gramian, DetectabilityReport};
pub use lpv::{assemble, capacitance_matrix, input_matrix, sensor_map, LpvSystem, Sensor, SensorMap};

use crate::error::{Error, Result};
use crate::grid::{CellRole, GridSpec};
use crate::material::FluidParams;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;

/// Edge between cells `a` and `b`, stored once. `r_a` is the half-resistance
/// on `a`'s side and `r_b` on `b`'s side [K/W].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<S> {
    pub a: usize,
    pub b: usize,
    pub r_a: S,
    pub r_b: S,
}

impl<S: Real> Edge<S> {
    /// Series resistance of the edge [K/W].
    pub fn total(&self) -> S {
        self.r_a + self.r_b
    }

    /// Half-resistance on the side of `cell`, if it is an endpoint.
    pub fn half_at(&self, cell: usize) -> Option<S> {
        if cell == self.a {
            Some(self.r_a)
        } else if cell == self.b {
            Some(self.r_b)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalGraph<S> {
    n: usize,
    edges: Vec<Edge<S>>,
    adjacency: Vec<Vec<usize>>,
}

impl<S: Real> ThermalGraph<S> {
    pub fn from_edges(n: usize, edges: Vec<Edge<S>>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::input(format!("edge ({}, {}) invalid for {n} vertices", e.a, e.b)));
            }
            let ok = |r: S| r > S::zero() && r.finite();
            if !ok(e.r_a) || !ok(e.r_b) {
                return Err(Error::input(format!("edge ({}, {}) has non-positive resistance", e.a, e.b)));
            }
            if adjacency[e.a].contains(&e.b) {
                return Err(Error::input(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push(e.b);
            adjacency[e.b].push(e.a);
        }
        Ok(Self { n, edges, adjacency })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn edges(&self) -> &[Edge<S>] {
        &self.edges
    }
    /// Adjacent vertices of `j`.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.adjacency[j]
    }

    /// Connected components as a vertex labelling, with the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.components().1 == 1
    }
}

/// Face geometry between two adjacent cells: `(area [m²], centre distance [m])`.
pub(crate) fn face_geometry<S: Real>(grid: &GridSpec<S>, i: usize, j: usize) -> (S, S) {
    let (ci, cj) = (grid.cell(i), grid.cell(j));
    let (li, _) = grid.position(i);
    let (lj, _) = grid.position(j);
    let half = S::lit(0.5);
    if li == lj {
        (ci.dy.min(cj.dy) * ci.dz.min(cj.dz), (ci.dx + cj.dx) * half)
    } else {
        (ci.dx.min(cj.dx) * ci.dz.min(cj.dz), (ci.dy + cj.dy) * half)
    }
}

/// Half-resistance `R_{j,i}` on cell `j`'s side of the face shared with `i`
/// [K/W]. Convective `1/(U a)` for a fluid cell facing the plate, conductive
/// `d / (2 kappa_j a)` otherwise, with `kappa_j` evaluated at `t_j`.
pub fn edge_resistance<S: Real>(grid: &GridSpec<S>, fluid: &FluidParams<S>, i: usize, j: usize, t_j: S) -> Result<S> {
    if !grid.adjacent(i, j) {
        return Err(Error::input(format!("cells {i} and {j} do not share a heat-transfer face")));
    }
    let (area, dist) = face_geometry(grid, i, j);
    let cell = grid.cell(j);
    Ok(match cell.role {
        CellRole::Fluid => S::one() / (fluid.u * area),
        CellRole::Plate | CellRole::Cpcm => dist / (S::lit(2.0) * cell.kappa.at(t_j) * area),
    })
}

/// Builds the resistance network at state `x`; edge weights reflect the
/// temperature-dependent conductivities.
pub fn build_graph<S: Real>(grid: &GridSpec<S>, fluid: &FluidParams<S>, x: &DVector<S>) -> Result<ThermalGraph<S>> {
    build_graph_on(grid, fluid, x, &grid.lattice_edges())
}

pub(crate) fn build_graph_on<S: Real>(
    grid: &GridSpec<S>,
    fluid: &FluidParams<S>,
    x: &DVector<S>,
    pairs: &[(usize, usize)],
) -> Result<ThermalGraph<S>> {
    if x.len() != grid.n() {
        return Err(Error::input(format!("state has {} entries, grid has {} cells", x.len(), grid.n())));
    }
    let mut edges = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        edges.push(Edge { a, b, r_a: edge_resistance(grid, fluid, b, a, x[a])?, r_b: edge_resistance(grid, fluid, a, b, x[b])? });
    }
    ThermalGraph::from_edges(grid.n(), edges)
}

/// Weighted graph Laplacian [W/K]: `-1/(R_ab + R_ba)` off the diagonal on
/// edges, diagonal set to the negated row sum so that `L 1 = 0`.
pub fn laplacian<S: Real>(g: &ThermalGraph<S>) -> DMatrix<S> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        let w = -S::one() / e.total();
        l[(e.a, e.b)] = w;
        l[(e.b, e.a)] = w;
    }
    for i in 0..n {
        let off: S = l.row(i).iter().fold(S::zero(), |acc, v| acc + *v);
        l[(i, i)] = -off;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, Conductivity, SolidMaterial, TesGeometry};
    use approx::assert_relative_eq;

    fn geometry() -> TesGeometry<f64> {
        TesGeometry {
            length: 0.3,
            width: 0.05,
            fluid_height: 0.002,
            plate_thickness: 0.003,
            cpcm_height: 0.02,
            fluid_density: 1000.0,
            plate: SolidMaterial { density: 2700.0, cp: 900.0, kappa: 200.0 },
            cpcm_density: 900.0,
            cpcm_kappa: Conductivity::Constant(10.0),
        }
    }

    fn fluid() -> FluidParams<f64> {
        FluidParams::new(4186.0, 500.0).unwrap()
    }

    /// Brute force: test every ordered pair of lattice positions for a shared face.
    fn brute_force_edge_count(nx: usize, ny: usize) -> usize {
        let mut count = 0;
        for a in 0..nx * ny {
            for b in (a + 1)..nx * ny {
                let (la, ca) = ((a / nx) as i64, (a % nx) as i64);
                let (lb, cb) = ((b / nx) as i64, (b % nx) as i64);
                let touching = (la - lb).abs() + (ca - cb).abs() == 1;
                let both_fluid = la == 0 && lb == 0;
                if touching && !both_fluid {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn plate_half_resistance() {
        // Horizontal plate neighbours: d = dx = 0.01, a = dy*dz = 0.1*0.01.
        let k = || Conductivity::Constant(100.0);
        let cells = vec![
            Cell::new(CellRole::Fluid, [0.01, 0.1, 0.01], 1.0, 0.0, k()),
            Cell::new(CellRole::Fluid, [0.01, 0.1, 0.01], 1.0, 0.0, k()),
            Cell::new(CellRole::Plate, [0.01, 0.1, 0.01], 1.0, 900.0, k()),
            Cell::new(CellRole::Plate, [0.01, 0.1, 0.01], 1.0, 900.0, k()),
        ];
        let g = GridSpec::from_cells(2, 2, cells).unwrap();
        let r = edge_resistance(&g, &fluid(), 2, 3, 300.0).unwrap();
        assert_relative_eq!(r, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn fluid_side_convective_resistance() {
        // Vertical fluid/plate face: a = dx*dz = 0.2*0.01 = 0.002.
        let k = || Conductivity::Constant(100.0);
        let cells = vec![
            Cell::new(CellRole::Fluid, [0.2, 0.01, 0.01], 1.0, 0.0, k()),
            Cell::new(CellRole::Plate, [0.2, 0.01, 0.01], 1.0, 900.0, k()),
        ];
        let g = GridSpec::from_cells(1, 2, cells).unwrap();
        let r_fluid = edge_resistance(&g, &fluid(), 1, 0, 300.0).unwrap();
        assert_relative_eq!(r_fluid, 1.0, max_relative = 1e-12);
        // Swapping the endpoints selects the conductive formula for the plate.
        let r_plate = edge_resistance(&g, &fluid(), 0, 1, 300.0).unwrap();
        assert_relative_eq!(r_plate, 0.01 / (2.0 * 100.0 * 0.002), max_relative = 1e-12);
        let graph = build_graph(&g, &fluid(), &DVector::from_element(2, 300.0)).unwrap();
        assert_eq!(graph.edges().len(), 1);
        assert_relative_eq!(graph.edges()[0].total(), r_fluid + r_plate, max_relative = 1e-15);
    }

    #[test]
    fn non_adjacent_pair_rejected() {
        let g = GridSpec::build(&geometry(), 3, 4).unwrap();
        assert!(edge_resistance(&g, &fluid(), 0, 1, 300.0).is_err());
        assert!(edge_resistance(&g, &fluid(), 0, 7, 300.0).is_err());
    }

    #[test]
    fn estimator_grid_edge_count() {
        let g = GridSpec::build(&geometry(), 3, 7).unwrap();
        let graph = build_graph(&g, &fluid(), &DVector::from_element(21, 290.0)).unwrap();
        assert_eq!(graph.n(), 21);
        assert_eq!(brute_force_edge_count(3, 7), 30);
        assert_eq!(graph.edges().len(), 30);
        assert!(graph.is_connected());
    }

    #[test]
    fn edge_count_matches_brute_force() {
        for nx in 1..=6 {
            for ny in 2..=8 {
                let g = GridSpec::build(&geometry(), nx, ny).unwrap();
                let graph = build_graph(&g, &fluid(), &DVector::from_element(nx * ny, 290.0)).unwrap();
                assert_eq!(graph.edges().len(), brute_force_edge_count(nx, ny), "{nx}x{ny}");
                assert!(graph.is_connected(), "{nx}x{ny}");
            }
        }
    }

    #[test]
    fn two_node_laplacian() {
        let g = ThermalGraph::from_edges(2, vec![Edge { a: 0, b: 1, r_a: 0.5, r_b: 1.5 }]).unwrap();
        let l = laplacian(&g);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(ThermalGraph::from_edges(2, vec![Edge { a: 0, b: 1, r_a: 0.0, r_b: 1.0 }]).is_err());
        assert!(ThermalGraph::from_edges(2, vec![Edge { a: 0, b: 2, r_a: 1.0, r_b: 1.0 }]).is_err());
        let e = Edge { a: 0, b: 1, r_a: 1.0, r_b: 1.0 };
        assert!(ThermalGraph::from_edges(2, vec![e, Edge { a: 1, b: 0, ..e }]).is_err());
    }

    #[test]
    fn components_of_split_graph() {
        let e = |a, b| Edge { a, b, r_a: 1.0, r_b: 1.0 };
        let g = ThermalGraph::from_edges(5, vec![e(0, 1), e(1, 2), e(3, 4)]).unwrap();
        let (label, count) = g.components();
        assert_eq!(count, 2);
        assert_eq!(label[0], label[2]);
        assert_ne!(label[0], label[3]);
        assert!(!g.is_connected());
    }

    #[test]
    fn temperature_dependent_cpcm_weights() {
        let mut geom = geometry();
        geom.cpcm_kappa = Conductivity::table(vec![(285.0, 5.0), (295.0, 10.0)]).unwrap();
        let g = GridSpec::build(&geom, 1, 4).unwrap();
        let cold = build_graph(&g, &fluid(), &DVector::from_element(4, 280.0)).unwrap();
        let warm = build_graph(&g, &fluid(), &DVector::from_element(4, 300.0)).unwrap();
        let top = |gr: &ThermalGraph<f64>| gr.edges().iter().find(|e| e.a == 2 && e.b == 3).unwrap().total();
        assert_relative_eq!(top(&cold), 2.0 * top(&warm), max_relative = 1e-12);
    }
}
