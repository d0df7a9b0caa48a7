//! Clustered multi-user channels with spherical (near-field) and planar
//! (far-field) wavefronts.
//!
//! Downlink convention: UE `k` receives `h_kᴴ x`, so the multi-user channel
//! matrix stacks the rows `h_kᴴ`. Steering vectors carry the phase
//! `exp(−i·k·Δ)` where `Δ` is the path-length excess relative to the array
//! center (`−⟨p, u⟩` for a plane wave), are unit norm, and channels are
//! scaled so that `E[‖h‖²] = N`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Point3, RegionLabel};
use crate::linalg::{cis, complex_gaussian, CMatrix, CVector, C64};

/// Unit direction for azimuth `az` (rotation from +z toward +x) and elevation
/// `el` (toward +y). Broadside is `(0, 0)`.
pub fn direction_vector(az: f64, el: f64) -> Point3 {
    Point3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos())
}

/// Inverse of [`direction_vector`] for a nonzero vector.
pub fn direction_angles(v: &Point3) -> (f64, f64) {
    let u = v.normalize();
    let el = u.y.clamp(-1.0, 1.0).asin();
    let az = u.x.atan2(u.z);
    (az, el)
}

fn wrap_azimuth(az: f64) -> f64 {
    let mut a = az % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Far-field response to a plane wave arriving from `(az, el)`.
pub fn planar_steering(geom: &ArrayGeometry, az: f64, el: f64) -> CVector {
    let u = direction_vector(az, el);
    planar_steering_toward(geom, &u)
}

/// Plane-wave response for an arbitrary (not necessarily unit) direction vector.
/// Only the in-plane components matter since elements sit at `z = 0`.
pub(crate) fn planar_steering_toward(geom: &ArrayGeometry, u: &Point3) -> CVector {
    let k = geom.wavenumber();
    let scale = 1.0 / (geom.num_elements() as f64).sqrt();
    let pos = geom.local_positions();
    CVector::from_iterator(pos.len(), pos.iter().map(|p| cis(k * p.dot(u)) * scale))
}

/// Spherical-wavefront response to a point source, phase-referenced to the array center.
pub fn spherical_steering(geom: &ArrayGeometry, source: &Point3) -> Result<CVector> {
    let k = geom.wavenumber();
    let scale = 1.0 / (geom.num_elements() as f64).sqrt();
    let s = source - geom.origin();
    let s_norm = s.norm();
    let eps = 1e-9 * geom.wavelength();
    let pos = geom.local_positions();
    let mut out = CVector::zeros(pos.len());
    for (n, p) in pos.iter().enumerate() {
        let dist = (p - s).norm();
        if dist < eps {
            return Err(Error::SourceOnArray { element: n });
        }
        // ‖p − s‖ − ‖s‖ without cancellation at large range
        let excess = (p.norm_squared() - 2.0 * p.dot(&s)) / (dist + s_norm);
        out[n] = cis(-k * excess) * scale;
    }
    Ok(out)
}

/// Origin of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathSource {
    /// Plane wave from `(azimuth, elevation)` in radians.
    Direction { azimuth: f64, elevation: f64 },
    /// Spherical wave from a point, in meters relative to the array center.
    Point(Point3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    pub source: PathSource,
}

impl PathComponent {
    pub fn steering(&self, geom: &ArrayGeometry) -> Result<CVector> {
        match self.source {
            PathSource::Direction { azimuth, elevation } => Ok(planar_steering(geom, azimuth, elevation)),
            PathSource::Point(p) => spherical_steering(geom, &(p + geom.origin())),
        }
    }
}

/// Cluster layout shared by every UE of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    clusters: usize,
    rays_per_cluster: usize,
    angular_spread: f64,
    per_cluster_power: Vec<f64>,
}

impl ClusterConfig {
    pub fn new(
        clusters: usize,
        rays_per_cluster: usize,
        angular_spread: f64,
        per_cluster_power: Vec<f64>,
    ) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::InvalidParameter { name: "clusters", reason: "must be at least 1".into() });
        }
        if rays_per_cluster == 0 {
            return Err(Error::InvalidParameter { name: "rays_per_cluster", reason: "must be at least 1".into() });
        }
        if !(angular_spread >= 0.0 && angular_spread.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "angular_spread",
                reason: format!("must be a nonnegative finite angle, got {angular_spread}"),
            });
        }
        if per_cluster_power.len() != clusters {
            return Err(Error::InvalidParameter {
                name: "per_cluster_power",
                reason: format!("expected {clusters} weights, got {}", per_cluster_power.len()),
            });
        }
        let sum: f64 = per_cluster_power.iter().sum();
        if per_cluster_power.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "per_cluster_power",
                reason: format!("weights must be nonnegative and sum to 1, got sum {sum}"),
            });
        }
        Ok(Self { clusters, rays_per_cluster, angular_spread, per_cluster_power })
    }

    /// Cluster powers decaying by `decay_db` per cluster, normalized to unit sum.
    pub fn exponential(clusters: usize, rays_per_cluster: usize, angular_spread: f64, decay_db: f64) -> Result<Self> {
        let raw: Vec<f64> = (0..clusters).map(|c| 10f64.powf(-(c as f64) * decay_db / 10.0)).collect();
        let total: f64 = raw.iter().sum();
        Self::new(clusters, rays_per_cluster, angular_spread, raw.iter().map(|w| w / total).collect())
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn rays_per_cluster(&self) -> usize {
        self.rays_per_cluster
    }

    pub fn angular_spread(&self) -> f64 {
        self.angular_spread
    }

    pub fn per_cluster_power(&self) -> &[f64] {
        &self.per_cluster_power
    }

    pub fn total_paths(&self) -> usize {
        self.clusters * self.rays_per_cluster
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UePlacement {
    pub position: Point3,
    pub region: RegionLabel,
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CVector,
    pub paths: Vec<PathComponent>,
    pub ue: UePlacement,
}

/// Uniform direction over the front (`z ≥ 0`) hemisphere.
pub fn sample_front_direction<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    let cos_theta: f64 = rng.gen_range(0.0..=1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    Point3::new(sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta)
}

/// Draws a UE uniformly in solid angle over the front hemisphere and uniformly
/// in radius within `radial_bounds` (meters from the array center).
pub fn sample_ue_placement<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    region: RegionLabel,
    radial_bounds: (f64, f64),
    rng: &mut R,
) -> Result<UePlacement> {
    let (lo, hi) = radial_bounds;
    let dr = geom.rayleigh_distance();
    let consistent = lo > 0.0
        && lo <= hi
        && hi.is_finite()
        && match region {
            RegionLabel::NearField => hi <= dr,
            RegionLabel::FarField => lo >= dr,
        };
    if !consistent {
        return Err(Error::InconsistentBounds { lo, hi, region: region.as_str(), rayleigh: dr });
    }
    loop {
        let u = sample_front_direction(rng);
        let r = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let position = geom.origin() + u * r;
        // only the measure-zero draw r = d_R for a near-field request can fail
        if geom.classify_region(&position) == region {
            return Ok(UePlacement { position, region });
        }
    }
}

fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Draws one UE channel.
///
/// Cluster 0 is centered on the UE and its first ray is the line-of-sight path;
/// the remaining clusters have centers uniform over the front hemisphere. For a
/// near-field UE every cluster sits at a finite range (the UE range for cluster
/// 0, uniform in `[0.05, 1)·d_R` otherwise) and rays inside `d_R` use spherical
/// steering. Ray offsets are Laplacian with RMS equal to the angular spread.
pub fn generate_channel<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    ue: &UePlacement,
    cfg: &ClusterConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let n = geom.num_elements() as f64;
    let dr = geom.rayleigh_distance();
    let rel = ue.position - geom.origin();
    let (ue_az, ue_el) = direction_angles(&rel);
    let near = ue.region == RegionLabel::NearField;
    let laplace_scale = cfg.angular_spread / 2f64.sqrt();

    let mut paths = Vec::with_capacity(cfg.total_paths());
    for c in 0..cfg.clusters {
        let (center_az, center_el, range) = if c == 0 {
            (ue_az, ue_el, rel.norm())
        } else {
            let (az, el) = direction_angles(&sample_front_direction(rng));
            let range = if near { rng.gen_range(0.05..1.0) * dr } else { f64::INFINITY };
            (az, el, range)
        };
        let variance = n * cfg.per_cluster_power[c] / cfg.rays_per_cluster as f64;
        for ray in 0..cfg.rays_per_cluster {
            let (az, el) = if c == 0 && ray == 0 {
                (center_az, center_el)
            } else {
                let az = wrap_azimuth(center_az + sample_laplace(rng, laplace_scale));
                let el = (center_el + sample_laplace(rng, laplace_scale)).clamp(-PI / 2.0, PI / 2.0);
                (az, el)
            };
            let gain = complex_gaussian(rng, variance);
            let source = if range.is_finite() && range < dr {
                PathSource::Point(direction_vector(az, el) * range)
            } else {
                PathSource::Direction { azimuth: az, elevation: el }
            };
            paths.push(PathComponent { gain, source });
        }
    }

    let mut h = CVector::zeros(geom.num_elements());
    for p in &paths {
        h.axpy(p.gain, &p.steering(geom)?, C64::new(1.0, 0.0));
    }
    Ok(ChannelRealization { h, paths, ue: ue.clone() })
}

/// Multi-user channel: `matrix` is `K × N` with row `k` equal to `h_kᴴ`.
#[derive(Debug, Clone)]
pub struct MultiUserChannel {
    pub matrix: CMatrix,
    pub realizations: Vec<ChannelRealization>,
}

impl MultiUserChannel {
    pub fn num_ues(&self) -> usize {
        self.realizations.len()
    }

    /// Stacks per-UE channel vectors into the `K × N` downlink matrix.
    pub fn stack(channels: &[CVector]) -> CMatrix {
        let n = channels.first().map_or(0, |h| h.len());
        let mut m = CMatrix::zeros(channels.len(), n);
        for (k, h) in channels.iter().enumerate() {
            m.set_row(k, &h.adjoint());
        }
        m
    }
}

pub fn generate_multiuser_channels<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    placements: &[UePlacement],
    cfg: &ClusterConfig,
    rng: &mut R,
) -> Result<MultiUserChannel> {
    if placements.is_empty() {
        return Err(Error::InvalidParameter { name: "placements", reason: "need at least one UE".into() });
    }
    let realizations = placements.iter().map(|ue| generate_channel(geom, ue, cfg, rng)).collect::<Result<Vec<_>>>()?;
    let hs: Vec<CVector> = realizations.iter().map(|r| r.h.clone()).collect();
    Ok(MultiUserChannel { matrix: MultiUserChannel::stack(&hs), realizations })
}
