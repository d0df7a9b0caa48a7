//! Uniform planar array layout and the near-field/far-field boundary.
//!
//! The array lies in the x–y plane, centered on `origin`, with broadside
//! along +z. Row index maps to the x axis and varies slowest in the element
//! ordering; column index maps to y.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Which side of the Rayleigh distance a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    NearField,
    FarField,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::NearField => "near-field",
            RegionLabel::FarField => "far-field",
        }
    }
}

/// Uniform planar array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
    origin: Point3,
}

impl ArrayGeometry {
    /// Builds a `rows × cols` array centered at the coordinate origin.
    pub fn upa(rows: usize, cols: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        check_positive("rows", rows as f64)?;
        check_positive("cols", cols as f64)?;
        check_positive("spacing", spacing)?;
        check_positive("wavelength", wavelength)?;
        Ok(Self { rows, cols, spacing, wavelength, origin: Point3::zeros() })
    }

    /// Same array translated so that its center sits at `origin`.
    pub fn with_origin(mut self, origin: Point3) -> Self {
        self.origin = origin;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    /// Total element count `N`.
    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Diagonal of the element footprint.
    pub fn aperture(&self) -> f64 {
        let r = (self.rows - 1) as f64;
        let c = (self.cols - 1) as f64;
        (r * r + c * c).sqrt() * self.spacing
    }

    /// `2D²/λ`.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.aperture();
        2.0 * d * d / self.wavelength
    }

    /// Element positions relative to the array center, row-major.
    pub fn local_positions(&self) -> Vec<Point3> {
        let x0 = (self.rows - 1) as f64 / 2.0;
        let y0 = (self.cols - 1) as f64 / 2.0;
        let mut out = Vec::with_capacity(self.num_elements());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(Point3::new((r as f64 - x0) * self.spacing, (c as f64 - y0) * self.spacing, 0.0));
            }
        }
        out
    }

    /// Absolute element positions, row-major.
    pub fn element_positions(&self) -> Vec<Point3> {
        self.local_positions().into_iter().map(|p| p + self.origin).collect()
    }

    /// NearField strictly inside the Rayleigh distance; the boundary itself is far-field.
    pub fn classify_region(&self, point: &Point3) -> RegionLabel {
        if (point - self.origin).norm() < self.rayleigh_distance() {
            RegionLabel::NearField
        } else {
            RegionLabel::FarField
        }
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_element_degenerate() {
        let g = ArrayGeometry::upa(1, 1, 0.005, 0.01).unwrap();
        assert_eq!(g.num_elements(), 1);
        assert_eq!(g.aperture(), 0.0);
        assert_eq!(g.rayleigh_distance(), 0.0);
        assert_eq!(g.element_positions(), vec![Point3::zeros()]);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(ArrayGeometry::upa(0, 4, 0.005, 0.01), Err(Error::NonPositiveParameter { name: "rows", .. })));
        assert!(ArrayGeometry::upa(4, 4, 0.0, 0.01).is_err());
        assert!(ArrayGeometry::upa(4, 4, 0.005, -1.0).is_err());
        assert!(ArrayGeometry::upa(4, 4, f64::NAN, 0.01).is_err());
    }

    #[test]
    fn full_array_has_1024_elements() {
        let g = ArrayGeometry::upa(32, 32, 0.005, 0.01).unwrap();
        assert_eq!(g.num_elements(), 1024);
    }

    #[test]
    fn two_by_two_diagonal_and_corners() {
        let d = 0.005;
        let g = ArrayGeometry::upa(2, 2, d, 0.01).unwrap();
        assert!((g.aperture() - d * 2f64.sqrt()).abs() < 1e-15);
        let p = g.element_positions();
        let h = d / 2.0;
        let expected = [(-h, -h), (-h, h), (h, -h), (h, h)];
        for (pt, (x, y)) in p.iter().zip(expected) {
            assert!((pt.x - x).abs() < 1e-15 && (pt.y - y).abs() < 1e-15 && pt.z == 0.0);
        }
    }

    #[test]
    fn two_by_one_symmetric() {
        let d = 0.3;
        let g = ArrayGeometry::upa(2, 1, d, 1.0).unwrap();
        let p = g.element_positions();
        assert_eq!(p, vec![Point3::new(-d / 2.0, 0.0, 0.0), Point3::new(d / 2.0, 0.0, 0.0)]);
    }

    #[test]
    fn rayleigh_distance_full_geometry() {
        // D = 31·0.005·√2, d_R = 2D²/λ
        let g = ArrayGeometry::upa(32, 32, 0.005, 0.01).unwrap();
        let d = 31.0 * 0.005 * 2f64.sqrt();
        assert!((g.aperture() - 0.219203).abs() < 1e-6);
        assert!((g.rayleigh_distance() - 2.0 * d * d / 0.01).abs() < 1e-12);
        assert!((g.rayleigh_distance() - 9.61).abs() < 1e-2);
    }

    #[test]
    fn doubling_wavelength_halves_rayleigh_distance() {
        let a = ArrayGeometry::upa(8, 6, 0.004, 0.01).unwrap();
        let b = ArrayGeometry::upa(8, 6, 0.004, 0.02).unwrap();
        assert!((b.rayleigh_distance() / a.rayleigh_distance() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn region_boundary_is_far_field() {
        let g = ArrayGeometry::upa(8, 8, 0.005, 0.01).unwrap();
        let dr = g.rayleigh_distance();
        let dir = Point3::new(0.3, -0.4, 0.866).normalize();
        assert_eq!(g.classify_region(&(dir * 0.5 * dr)), RegionLabel::NearField);
        assert_eq!(g.classify_region(&(dir * 2.0 * dr)), RegionLabel::FarField);
        assert_eq!(g.classify_region(&Point3::new(0.0, 0.0, dr)), RegionLabel::FarField);
    }

    #[test]
    fn classification_respects_origin() {
        let g = ArrayGeometry::upa(8, 8, 0.005, 0.01).unwrap().with_origin(Point3::new(1.0, 2.0, 3.0));
        let dr = g.rayleigh_distance();
        let p = g.origin() + Point3::new(0.0, 0.0, 0.5 * dr);
        assert_eq!(g.classify_region(&p), RegionLabel::NearField);
        let c: Point3 = g.element_positions().iter().sum::<Point3>() / g.num_elements() as f64;
        assert!((c - g.origin()).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn centroid_is_origin(rows in 1usize..20, cols in 1usize..20, spacing in 1e-3f64..1.0) {
            let g = ArrayGeometry::upa(rows, cols, spacing, 0.01).unwrap();
            let sum: Point3 = g.element_positions().iter().sum();
            let scale = g.aperture().max(spacing);
            prop_assert!((sum / g.num_elements() as f64).norm() <= 1e-12 * scale);
            prop_assert_eq!(g.element_positions().len(), rows * cols);
        }

        #[test]
        fn rayleigh_monotone(rows in 2usize..16, cols in 2usize..16, spacing in 1e-3f64..0.1, wl in 1e-3f64..0.1) {
            let base = ArrayGeometry::upa(rows, cols, spacing, wl).unwrap().rayleigh_distance();
            let more_rows = ArrayGeometry::upa(rows + 1, cols, spacing, wl).unwrap().rayleigh_distance();
            let more_cols = ArrayGeometry::upa(rows, cols + 1, spacing, wl).unwrap().rayleigh_distance();
            let wider = ArrayGeometry::upa(rows, cols, spacing * 1.1, wl).unwrap().rayleigh_distance();
            let longer = ArrayGeometry::upa(rows, cols, spacing, wl * 1.1).unwrap().rayleigh_distance();
            prop_assert!(more_rows > base);
            prop_assert!(more_cols > base);
            prop_assert!(wider > base);
            prop_assert!(longer < base);
        }

        #[test]
        fn classify_matches_scalar_comparison(x in -20.0f64..20.0, y in -20.0f64..20.0, z in 0.0f64..20.0) {
            let g = ArrayGeometry::upa(32, 32, 0.005, 0.01).unwrap();
            let p = Point3::new(x, y, z);
            let expected = if p.norm() >= g.rayleigh_distance() { RegionLabel::FarField } else { RegionLabel::NearField };
            prop_assert_eq!(g.classify_region(&p), expected);
        }
    }
}
