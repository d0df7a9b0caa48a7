//! Analytic codebooks over the planar array: oversampled DFT (angular),
//! polar-domain (angle plus distance rings) and wavenumber-domain (plane-wave
//! lattice inside the propagating disk).

use std::f64::consts::PI;
use std::fmt;

use crate::channel::{planar_steering_toward, spherical_steering};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Point3};
use crate::linalg::{cis, CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DictionaryKind {
    Dft,
    Polar,
    Wavenumber,
    Learned,
}

impl DictionaryKind {
    pub fn code(self) -> u32 {
        match self {
            DictionaryKind::Dft => 0,
            DictionaryKind::Polar => 1,
            DictionaryKind::Wavenumber => 2,
            DictionaryKind::Learned => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => DictionaryKind::Dft,
            1 => DictionaryKind::Polar,
            2 => DictionaryKind::Wavenumber,
            3 => DictionaryKind::Learned,
            _ => return None,
        })
    }
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DictionaryKind::Dft => "dft",
            DictionaryKind::Polar => "polar",
            DictionaryKind::Wavenumber => "wavenumber",
            DictionaryKind::Learned => "learned",
        })
    }
}

/// Physical parameters behind one codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomParams {
    /// Direction cosines `(u_x, u_y)` and, for polar rings, the focal distance.
    /// `u_x² + u_y² > 1` marks a grid point outside the visible region.
    Angular { ux: f64, uy: f64, distance: Option<f64> },
    /// Integer lattice indices of the spatial frequency `(2πℓ_x/L_x, 2πℓ_y/L_y)`
    /// with `L = oversampling · rows · spacing` (resp. cols).
    Wavenumber { lx: i64, ly: i64, oversampling: usize },
    /// No physical meaning (learned or loaded from file).
    Index(usize),
}

impl AtomParams {
    /// Azimuth/elevation for a visible angular grid point.
    pub fn direction(&self) -> Option<(f64, f64)> {
        match *self {
            AtomParams::Angular { ux, uy, .. } if ux * ux + uy * uy <= 1.0 => {
                let el = uy.clamp(-1.0, 1.0).asin();
                let uz = (1.0 - ux * ux - uy * uy).max(0.0).sqrt();
                Some((ux.atan2(uz), el))
            }
            _ => None,
        }
    }
}

/// Codebook matrix `A` (`N × M`, unit-norm columns) with per-column metadata.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: CMatrix,
    kind: DictionaryKind,
    grid_meta: Vec<AtomParams>,
}

impl Dictionary {
    /// Wraps a matrix, normalizing every column. Zero columns are rejected.
    pub fn new(atoms: CMatrix, kind: DictionaryKind, grid_meta: Vec<AtomParams>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::InvalidParameter { name: "atoms", reason: "dictionary must be nonempty".into() });
        }
        if grid_meta.len() != atoms.ncols() {
            return Err(Error::DimensionMismatch { expected: atoms.ncols(), actual: grid_meta.len() });
        }
        let mut atoms = atoms;
        for (j, mut col) in atoms.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidParameter { name: "atoms", reason: format!("column {j} has norm {norm}") });
            }
            col.unscale_mut(norm);
        }
        Ok(Self { atoms, kind, grid_meta })
    }

    /// Learned or loaded codebook without physical grid metadata.
    pub fn from_matrix(atoms: CMatrix, kind: DictionaryKind) -> Result<Self> {
        let meta = (0..atoms.ncols()).map(AtomParams::Index).collect();
        Self::new(atoms, kind, meta)
    }

    pub fn atoms(&self) -> &CMatrix {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> CVector {
        self.atoms.column(j).into_owned()
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn grid_meta(&self) -> &[AtomParams] {
        &self.grid_meta
    }

    pub fn num_antennas(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    /// Largest absolute inner product between distinct columns.
    pub fn coherence(&self) -> f64 {
        coherence(&self.atoms)
    }
}

/// Mutual coherence of a matrix with unit-norm columns.
pub fn coherence(atoms: &CMatrix) -> f64 {
    let gram = atoms.adjoint() * atoms;
    let m = gram.nrows();
    let mut best: f64 = 0.0;
    for j in 0..m {
        for i in 0..m {
            if i != j {
                best = best.max(gram[(i, j)].norm());
            }
        }
    }
    best
}

/// Centered integer DFT indices `-⌊q/2⌋ .. q-1-⌊q/2⌋`.
fn centered_indices(q: usize) -> impl Iterator<Item = i64> {
    let half = (q / 2) as i64;
    (0..q as i64).map(move |i| i - half)
}

fn angular_grid(geom: &ArrayGeometry, oversampling: usize) -> Vec<(f64, f64)> {
    let qx = oversampling * geom.rows();
    let qy = oversampling * geom.cols();
    let lambda_over_d = geom.wavelength() / geom.spacing();
    let mut grid = Vec::with_capacity(qx * qy);
    for ix in centered_indices(qx) {
        for iy in centered_indices(qy) {
            grid.push((ix as f64 * lambda_over_d / qx as f64, iy as f64 * lambda_over_d / qy as f64));
        }
    }
    grid
}

/// Kronecker product of per-axis DFT grids in direction-cosine space. With
/// `oversampling = 1` the matrix is unitary.
pub fn dft_codebook(geom: &ArrayGeometry, oversampling: usize) -> Result<Dictionary> {
    if oversampling == 0 {
        return Err(Error::InvalidParameter { name: "oversampling", reason: "must be at least 1".into() });
    }
    let grid = angular_grid(geom, oversampling);
    let n = geom.num_elements();
    let mut atoms = CMatrix::zeros(n, grid.len());
    let mut meta = Vec::with_capacity(grid.len());
    for (j, &(ux, uy)) in grid.iter().enumerate() {
        atoms.set_column(j, &planar_steering_toward(geom, &Point3::new(ux, uy, 0.0)));
        meta.push(AtomParams::Angular { ux, uy, distance: None });
    }
    Dictionary::new(atoms, DictionaryKind::Dft, meta)
}

/// Polar-domain codebook: for each DFT grid direction, one plane-wave column
/// followed by `distance_rings` spherical columns focused at `d_R/s`,
/// `s = 1..=distance_rings`, never closer than `min_distance`.
///
/// Grid points outside the visible region keep their in-plane direction
/// cosines and a zero z-component for the focal point.
pub fn polar_codebook(geom: &ArrayGeometry, distance_rings: usize, min_distance: f64) -> Result<Dictionary> {
    let grid = angular_grid(geom, 1);
    let n = geom.num_elements();
    let dr = geom.rayleigh_distance();
    let per_point = distance_rings + 1;
    let mut atoms = CMatrix::zeros(n, grid.len() * per_point);
    let mut meta = Vec::with_capacity(grid.len() * per_point);
    for (g, &(ux, uy)) in grid.iter().enumerate() {
        let base = g * per_point;
        atoms.set_column(base, &planar_steering_toward(geom, &Point3::new(ux, uy, 0.0)));
        meta.push(AtomParams::Angular { ux, uy, distance: None });
        let uz = (1.0 - ux * ux - uy * uy).max(0.0).sqrt();
        let dir = Point3::new(ux, uy, uz);
        for s in 1..=distance_rings {
            let r = (dr / s as f64).max(min_distance);
            let focus = geom.origin() + dir * r;
            atoms.set_column(base + s, &spherical_steering(geom, &focus)?);
            meta.push(AtomParams::Angular { ux, uy, distance: Some(r) });
        }
    }
    Dictionary::new(atoms, DictionaryKind::Polar, meta)
}

/// Plane-wave lattice `exp(i(k_x x + k_y y))/√N` with `k = 2πℓ/L`, `L = rows·spacing`
/// (resp. cols), over the propagating disk. Lattice points that alias onto an
/// already emitted column on the element grid are skipped. With
/// `include_evanescent`, lattice points just outside the disk (those with a
/// 4-neighbour inside) are appended.
pub fn wavenumber_dictionary(geom: &ArrayGeometry, include_evanescent: bool) -> Result<Dictionary> {
    wavenumber_dictionary_oversampled(geom, 1, include_evanescent)
}

/// Same lattice with the period stretched to `oversampling · rows · spacing`,
/// giving `oversampling²` times the frequency density. Columns are mutually
/// orthogonal only for `oversampling = 1`.
pub fn wavenumber_dictionary_oversampled(
    geom: &ArrayGeometry,
    oversampling: usize,
    include_evanescent: bool,
) -> Result<Dictionary> {
    if oversampling == 0 {
        return Err(Error::InvalidParameter { name: "oversampling", reason: "must be at least 1".into() });
    }
    let lx = (oversampling * geom.rows()) as f64 * geom.spacing();
    let ly = (oversampling * geom.cols()) as f64 * geom.spacing();
    let lambda = geom.wavelength();
    let rho2 = |ix: i64, iy: i64| {
        let a = ix as f64 * lambda / lx;
        let b = iy as f64 * lambda / ly;
        a * a + b * b
    };
    let inside = |ix: i64, iy: i64| rho2(ix, iy) <= 1.0 + 1e-12;
    let mx = (lx / lambda).floor() as i64 + 1;
    let my = (ly / lambda).floor() as i64 + 1;

    let mut points = Vec::new();
    for ix in -mx..=mx {
        for iy in -my..=my {
            if inside(ix, iy) {
                points.push((ix, iy));
            }
        }
    }
    if include_evanescent {
        for ix in -mx..=mx {
            for iy in -my..=my {
                let touches = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| inside(ix + dx, iy + dy));
                if !inside(ix, iy) && touches {
                    points.push((ix, iy));
                }
            }
        }
    }

    let rows = (oversampling * geom.rows()) as i64;
    let cols = (oversampling * geom.cols()) as i64;
    let mut seen = std::collections::HashSet::new();
    points.retain(|&(ix, iy)| seen.insert((ix.rem_euclid(rows), iy.rem_euclid(cols))));

    let pos = geom.local_positions();
    let scale = 1.0 / (pos.len() as f64).sqrt();
    let mut atoms = CMatrix::zeros(pos.len(), points.len());
    let mut meta = Vec::with_capacity(points.len());
    for (j, &(ix, iy)) in points.iter().enumerate() {
        let kx = 2.0 * PI * ix as f64 / lx;
        let ky = 2.0 * PI * iy as f64 / ly;
        for (n, p) in pos.iter().enumerate() {
            atoms[(n, j)] = cis(kx * p.x + ky * p.y) * scale;
        }
        meta.push(AtomParams::Wavenumber { lx: ix, ly: iy, oversampling });
    }
    Dictionary::new(atoms, DictionaryKind::Wavenumber, meta)
}
