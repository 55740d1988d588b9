//! Control-volume lattice of the storage cross section.
//!
//! Cells are numbered row-major by layer: layer 0 is the fluid channel
//! (column 0 at the inlet), layer 1 the separator plate, layers 2.. the CPCM.
//! Index `j = layer * nx + col`.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellRole {
    Fluid,
    Plate,
    Cpcm,
}

/// Thermal conductivity of a cell, optionally temperature dependent.
#[derive(Debug, Clone, PartialEq)]
pub enum Conductivity<S> {
    Constant(S),
    /// Piecewise-linear table of `(T [K], kappa [W/(m·K)])`, clamped at the ends.
    Table(Vec<(S, S)>),
}

impl<S: Real> Conductivity<S> {
    pub fn table(points: Vec<(S, S)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("conductivity table is empty"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config("conductivity table temperatures must increase"));
        }
        if points.iter().any(|&(_, k)| !(k > S::zero() && k.finite())) {
            return Err(Error::config("conductivity values must be positive"));
        }
        Ok(Conductivity::Table(points))
    }

    pub fn at(&self, t: S) -> S {
        match self {
            Conductivity::Constant(k) => *k,
            Conductivity::Table(pts) => {
                let first = pts[0];
                let last = pts[pts.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = pts.partition_point(|p| p.0 <= t);
                let (t0, k0) = pts[i - 1];
                let (t1, k1) = pts[i];
                k0 + (k1 - k0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Conductivity::Constant(_))
    }

    fn valid(&self) -> bool {
        match self {
            Conductivity::Constant(k) => *k > S::zero() && k.finite(),
            Conductivity::Table(_) => true,
        }
    }
}

/// One control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<S> {
    pub role: CellRole,
    /// Length along the flow direction [m].
    pub dx: S,
    /// Height [m].
    pub dy: S,
    /// Width [m].
    pub dz: S,
    /// Mass [kg].
    pub mass: S,
    /// Specific heat of a plate cell [J/(kg·K)]. Fluid cells use the fluid
    /// specific heat and CPCM cells the effective specific heat instead.
    pub cp: S,
    pub kappa: Conductivity<S>,
}

impl<S: Real> Cell<S> {
    pub fn new(role: CellRole, dims: [S; 3], mass: S, cp: S, kappa: Conductivity<S>) -> Self {
        Self { role, dx: dims[0], dy: dims[1], dz: dims[2], mass, cp, kappa }
    }
}

/// Solid material with constant properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidMaterial<S> {
    pub density: S,
    pub cp: S,
    pub kappa: S,
}

/// Physical extent and materials of a storage module cross section.
#[derive(Debug, Clone, PartialEq)]
pub struct TesGeometry<S> {
    /// Module length along the flow [m].
    pub length: S,
    /// Module width, perpendicular to the modeled cross section [m].
    pub width: S,
    pub fluid_height: S,
    pub plate_thickness: S,
    pub cpcm_height: S,
    pub fluid_density: S,
    pub plate: SolidMaterial<S>,
    pub cpcm_density: S,
    pub cpcm_kappa: Conductivity<S>,
}

/// The `nx × ny` lattice of control volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<S> {
    nx: usize,
    ny: usize,
    cells: Vec<Cell<S>>,
}

impl<S: Real> GridSpec<S> {
    /// Discretizes `geom` uniformly: `nx` columns, one fluid layer, one plate
    /// layer and `ny - 2` equal CPCM layers.
    pub fn build(geom: &TesGeometry<S>, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny < 2 {
            return Err(Error::config(format!("grid {nx}x{ny}: need nx >= 1 and ny >= 2")));
        }
        let dx = geom.length / S::from_count(nx);
        let dz = geom.width;
        let n_cpcm = ny - 2;
        let mut cells = Vec::with_capacity(nx * ny);
        for layer in 0..ny {
            for _ in 0..nx {
                let cell = match layer {
                    0 => {
                        let dy = geom.fluid_height;
                        Cell::new(
                            CellRole::Fluid,
                            [dx, dy, dz],
                            geom.fluid_density * dx * dy * dz,
                            S::zero(),
                            Conductivity::Constant(S::one()),
                        )
                    }
                    1 => {
                        let dy = geom.plate_thickness;
                        Cell::new(
                            CellRole::Plate,
                            [dx, dy, dz],
                            geom.plate.density * dx * dy * dz,
                            geom.plate.cp,
                            Conductivity::Constant(geom.plate.kappa),
                        )
                    }
                    _ => {
                        let dy = geom.cpcm_height / S::from_count(n_cpcm);
                        Cell::new(CellRole::Cpcm, [dx, dy, dz], geom.cpcm_density * dx * dy * dz, S::zero(), geom.cpcm_kappa.clone())
                    }
                };
                cells.push(cell);
            }
        }
        Self::from_cells(nx, ny, cells)
    }

    /// Builds a grid from explicit cells, validating layer roles and positivity.
    pub fn from_cells(nx: usize, ny: usize, cells: Vec<Cell<S>>) -> Result<Self> {
        if nx == 0 || ny < 2 {
            return Err(Error::config(format!("grid {nx}x{ny}: need nx >= 1 and ny >= 2")));
        }
        if cells.len() != nx * ny {
            return Err(Error::config(format!("grid {nx}x{ny} needs {} cells, got {}", nx * ny, cells.len())));
        }
        for (j, c) in cells.iter().enumerate() {
            let expected = match j / nx {
                0 => CellRole::Fluid,
                1 => CellRole::Plate,
                _ => CellRole::Cpcm,
            };
            if c.role != expected {
                return Err(Error::config(format!("cell {j} has role {:?}, layer requires {expected:?}", c.role)));
            }
            let positive = [c.dx, c.dy, c.dz, c.mass].iter().all(|v| *v > S::zero() && v.finite());
            if !positive || !c.kappa.valid() {
                return Err(Error::config(format!("cell {j}: dimensions, mass and conductivity must be positive")));
            }
            if c.role == CellRole::Plate && !(c.cp > S::zero()) {
                return Err(Error::config(format!("plate cell {j}: specific heat must be positive")));
            }
        }
        Ok(Self { nx, ny, cells })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn n(&self) -> usize {
        self.cells.len()
    }
    pub fn cells(&self) -> &[Cell<S>] {
        &self.cells
    }
    pub fn cell(&self, j: usize) -> &Cell<S> {
        &self.cells[j]
    }
    pub fn index(&self, layer: usize, col: usize) -> usize {
        layer * self.nx + col
    }
    /// `(layer, column)` of cell `j`.
    pub fn position(&self, j: usize) -> (usize, usize) {
        (j / self.nx, j % self.nx)
    }

    /// True when `i` and `j` share a face and exchange heat (fluid cells do
    /// not conduct to each other).
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        if i >= self.n() || j >= self.n() || i == j {
            return false;
        }
        let (li, ci) = self.position(i);
        let (lj, cj) = self.position(j);
        let vertical = ci == cj && li.abs_diff(lj) == 1;
        let horizontal = li == lj && ci.abs_diff(cj) == 1 && li != 0;
        vertical || horizontal
    }

    /// Heat-exchanging lattice pairs `(i, j)` with `i < j`.
    pub fn lattice_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for j in 0..self.n() {
            let (layer, col) = self.position(j);
            if layer > 0 && col + 1 < self.nx {
                edges.push((j, j + 1));
            }
            if layer + 1 < self.ny {
                edges.push((j, j + self.nx));
            }
        }
        edges
    }

    /// Total mass of the cells with the given role [kg].
    pub fn role_mass(&self, role: CellRole) -> S {
        self.cells.iter().filter(|c| c.role == role).fold(S::zero(), |acc, c| acc + c.mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn geometry() -> TesGeometry<f64> {
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

    #[test]
    fn roles_follow_layers() {
        let g = GridSpec::build(&geometry(), 3, 7).unwrap();
        assert_eq!(g.n(), 21);
        assert!(g.cells()[..3].iter().all(|c| c.role == CellRole::Fluid));
        assert!(g.cells()[3..6].iter().all(|c| c.role == CellRole::Plate));
        assert!(g.cells()[6..].iter().all(|c| c.role == CellRole::Cpcm));
    }

    #[test]
    fn cpcm_mass_independent_of_resolution() {
        let coarse = GridSpec::build(&geometry(), 3, 7).unwrap();
        let fine = GridSpec::build(&geometry(), 21, 22).unwrap();
        let a = coarse.role_mass(CellRole::Cpcm);
        let b = fine.role_mass(CellRole::Cpcm);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn misassigned_role_rejected() {
        let g = GridSpec::build(&geometry(), 2, 3).unwrap();
        let mut cells = g.cells().to_vec();
        cells[0].role = CellRole::Plate;
        assert!(GridSpec::from_cells(2, 3, cells).is_err());
        assert!(GridSpec::build(&geometry(), 0, 3).is_err());
    }

    #[test]
    fn fluid_cells_not_adjacent() {
        let g = GridSpec::build(&geometry(), 3, 4).unwrap();
        assert!(!g.adjacent(0, 1));
        assert!(g.adjacent(3, 4));
        assert!(g.adjacent(0, 3));
        assert!(!g.adjacent(2, 3));
        assert!(!g.adjacent(0, 6));
    }

    #[test]
    fn conductivity_table_interpolates() {
        let k = Conductivity::table(vec![(280.0, 10.0), (300.0, 20.0)]).unwrap();
        assert_eq!(k.at(270.0), 10.0);
        assert_eq!(k.at(290.0), 15.0);
        assert_eq!(k.at(400.0), 20.0);
        assert!(Conductivity::table(vec![(300.0, 1.0), (290.0, 2.0)]).is_err());
    }
}
