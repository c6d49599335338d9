//! Scene coordinate system, sensor placement and the pixel raster.
//!
//! The scene is two dimensional with its origin at the center of the imaged
//! patch. Transmitters and receivers are far-field: only their aspect angles
//! and origin-referenced propagation delays enter the model, never absolute
//! ranges.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Exact SI speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Plain 2D vector used for positions, velocities and direction vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn add(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x + other.x, self.y + other.y)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        Vec2::new(self.x - other.x, self.y - other.y).norm()
    }
}

/// Unit vector `[cos a, sin a]` pointing toward aspect angle `a` (radians).
pub fn unit_direction(angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c, s)
}

/// Bistatic range vector of a transmit/receive pair: the sum of the two unit
/// direction vectors. Its norm lies in `[0, 2]`; propagation delays are
/// projections onto it.
pub fn bistatic_vector(e_k: Vec2, e_l: Vec2) -> Vec2 {
    e_k.add(e_l)
}

/// How transmit and receive elements pair up into measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingMode {
    /// Every receiver hears every pulse (distributed multi-static array).
    AllPairs,
    /// Only the collocated receiver hears a pulse (monostatic aperture);
    /// receiver angles are tied one-to-one to transmitter angles.
    Monostatic,
}

/// Transmit/receive aspect angles, origin-referenced delays and the forward
/// cone that contains every element.
///
/// Origin delays default to zero: demodulation against the origin-referenced
/// transmit signal removes the common delay from the phase, and only the
/// transmitter-side delay survives inside the motion correction term. The
/// override exists so that sensitivity to that residual term can be tested.
#[derive(Debug, Clone)]
pub struct SensorGeometry {
    pub tx_angles: Vec<f64>,
    pub rx_angles: Vec<f64>,
    pub origin_delays_tx: Vec<f64>,
    pub origin_delays_rx: Vec<f64>,
    pub cone_center: f64,
    pub cone_width: f64,
    pub wave_speed: f64,
    pub pairing: PairingMode,
}

impl SensorGeometry {
    pub fn n_tx(&self) -> usize {
        self.tx_angles.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_angles.len()
    }

    /// Receiver indices that hear a pulse from transmitter `k`.
    pub fn rx_for_tx(&self, k: usize) -> std::ops::Range<usize> {
        match self.pairing {
            PairingMode::AllPairs => 0..self.rx_angles.len(),
            PairingMode::Monostatic => k..k + 1,
        }
    }

    /// Number of (tx, rx) measurement pairs.
    pub fn n_pairs(&self) -> usize {
        match self.pairing {
            PairingMode::AllPairs => self.tx_angles.len() * self.rx_angles.len(),
            PairingMode::Monostatic => self.tx_angles.len(),
        }
    }

    pub fn tx_direction(&self, k: usize) -> Vec2 {
        unit_direction(self.tx_angles[k])
    }

    pub fn rx_direction(&self, l: usize) -> Vec2 {
        unit_direction(self.rx_angles[l])
    }

    fn check_angles_in_cone(&self) -> Result<()> {
        let half = self.cone_width / 2.0;
        for (label, angles) in [("tx", &self.tx_angles), ("rx", &self.rx_angles)] {
            for (i, &a) in angles.iter().enumerate() {
                if !a.is_finite() || (a - self.cone_center).abs() > half + 1e-12 {
                    return Err(Error::config(format!(
                        "{label} angle {i} ({a} rad) lies outside the forward cone \
                         [{:.6}, {:.6}]",
                        self.cone_center - half,
                        self.cone_center + half
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_delays(&self) -> Result<()> {
        for (label, delays) in [
            ("tx", &self.origin_delays_tx),
            ("rx", &self.origin_delays_rx),
        ] {
            for (i, &d) in delays.iter().enumerate() {
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::config(format!(
                        "origin delay for {label} element {i} must be finite and nonnegative, got {d}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replace the origin-referenced delays (seconds). Lengths must match the
    /// element counts.
    pub fn with_origin_delays(mut self, tx: Vec<f64>, rx: Vec<f64>) -> Result<Self> {
        if tx.len() != self.tx_angles.len() || rx.len() != self.rx_angles.len() {
            return Err(Error::config(
                "origin delay lists must match the transmit/receive element counts".to_string(),
            ));
        }
        self.origin_delays_tx = tx;
        self.origin_delays_rx = rx;
        self.check_delays()?;
        Ok(self)
    }
}

/// Draw transmitter and receiver aspect angles i.i.d. uniform over the
/// forward cone. Transmit angles are drawn first, then receive angles, from a
/// single seeded stream, so a given seed always reproduces the same array.
///
/// With `PairingMode::Monostatic` the receiver angles are tied to the
/// transmitter angles (`n_rx` must equal `n_tx`).
pub fn make_sensor_geometry(
    n_tx: usize,
    n_rx: usize,
    cone_center: f64,
    cone_width: f64,
    pairing: PairingMode,
    rng_seed: u64,
) -> Result<SensorGeometry> {
    if n_tx == 0 || n_rx == 0 {
        return Err(Error::config("need at least one transmitter and one receiver"));
    }
    if !(cone_width > 0.0 && cone_width <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::config(format!(
            "cone width must lie in (0, pi/2], got {cone_width} rad"
        )));
    }
    if pairing == PairingMode::Monostatic && n_tx != n_rx {
        return Err(Error::config(format!(
            "monostatic pairing ties receivers to transmitters, so n_rx ({n_rx}) must equal n_tx ({n_tx})"
        )));
    }
    let half = cone_width / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| rng.random_range(cone_center - half..=cone_center + half))
            .collect()
    };
    let tx_angles = draw(n_tx, &mut rng);
    let rx_angles = match pairing {
        PairingMode::AllPairs => draw(n_rx, &mut rng),
        PairingMode::Monostatic => tx_angles.clone(),
    };
    let geom = SensorGeometry {
        origin_delays_tx: vec![0.0; n_tx],
        origin_delays_rx: vec![0.0; n_rx],
        tx_angles,
        rx_angles,
        cone_center,
        cone_width,
        wave_speed: SPEED_OF_LIGHT,
        pairing,
    };
    geom.check_angles_in_cone()?;
    geom.check_delays()?;
    Ok(geom)
}

/// Regular pixel raster centered on the scene origin.
///
/// Pixels are indexed row-major with x varying fastest:
/// `p = iy * nx + ix`, `ix in 0..nx`, `iy in 0..ny`. The center of pixel
/// `(ix, iy)` sits at `((ix - (nx-1)/2) * dx, (iy - (ny-1)/2) * dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Half-size of the scene: half the larger physical side length.
    pub extent: f64,
}

impl PixelGrid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config("pixel counts must be positive"));
        }
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::config("pixel sizes must be positive and finite"));
        }
        let extent = 0.5 * (nx as f64 * dx).max(ny as f64 * dy);
        Ok(PixelGrid { nx, ny, dx, dy, extent })
    }

    /// Total pixel count P.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index_of(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords_of(&self, p: usize) -> (usize, usize) {
        debug_assert!(p < self.len());
        (p % self.nx, p / self.nx)
    }

    /// Center position of pixel `p` in meters.
    #[inline]
    pub fn center(&self, p: usize) -> Vec2 {
        let (ix, iy) = self.coords_of(p);
        Vec2::new(
            (ix as f64 - (self.nx as f64 - 1.0) / 2.0) * self.dx,
            (iy as f64 - (self.ny as f64 - 1.0) / 2.0) * self.dy,
        )
    }

    /// Center of the pixel with raster coordinates (0, 0); the raster steps
    /// by `dx`/`dy` from here.
    pub fn base_center(&self) -> Vec2 {
        Vec2::new(
            -(self.nx as f64 - 1.0) / 2.0 * self.dx,
            -(self.ny as f64 - 1.0) / 2.0 * self.dy,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_direction_axes() {
        let e = unit_direction(0.0);
        assert_eq!(e, Vec2::new(1.0, 0.0));
        let e = unit_direction(std::f64::consts::FRAC_PI_2);
        assert!((e.x).abs() < 1e-16);
        assert!((e.y - 1.0).abs() < 1e-16);
    }

    #[test]
    fn unit_direction_thirty_degrees() {
        // cos(pi/6) = sqrt(3)/2, sin(pi/6) = 1/2
        let e = unit_direction(std::f64::consts::FRAC_PI_6);
        assert!((e.x - 0.8660254037844387).abs() < 1e-15);
        assert!((e.y - 0.5).abs() < 1e-15);
        assert!((e.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bistatic_vector_cases() {
        let ex = Vec2::new(1.0, 0.0);
        // monostatic coincidence doubles the direction vector
        assert_eq!(bistatic_vector(ex, ex), Vec2::new(2.0, 0.0));
        // antipodal directions cancel
        assert_eq!(bistatic_vector(ex, Vec2::new(-1.0, 0.0)), Vec2::ZERO);
        // orthogonal axes sum
        assert_eq!(
            bistatic_vector(ex, Vec2::new(0.0, 1.0)),
            Vec2::new(1.0, 1.0)
        );
        let e1 = unit_direction(0.3);
        let e2 = unit_direction(-0.2);
        let n = bistatic_vector(e1, e2).norm();
        assert!((0.0..=2.0 + 1e-15).contains(&n));
    }

    #[test]
    fn geometry_angles_stay_in_cone() {
        let cone = 45f64.to_radians();
        let g = make_sensor_geometry(10, 40, 0.0, cone, PairingMode::AllPairs, 7).unwrap();
        assert_eq!(g.tx_angles.len(), 10);
        assert_eq!(g.rx_angles.len(), 40);
        for &a in g.tx_angles.iter().chain(g.rx_angles.iter()) {
            assert!(a.abs() <= cone / 2.0 + 1e-12);
        }
    }

    #[test]
    fn geometry_bisector_stays_in_cone() {
        // the bistatic vector of two in-cone directions points inside the cone
        for seed in 0..20 {
            let center = 0.3;
            let cone = 40f64.to_radians();
            let g = make_sensor_geometry(4, 6, center, cone, PairingMode::AllPairs, seed).unwrap();
            for k in 0..g.n_tx() {
                for l in 0..g.n_rx() {
                    let e = bistatic_vector(g.tx_direction(k), g.rx_direction(l));
                    let ang = e.y.atan2(e.x);
                    assert!(
                        (ang - center).abs() <= cone / 2.0 + 1e-12,
                        "bisector {ang} outside cone at seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn geometry_is_deterministic() {
        let a = make_sensor_geometry(5, 9, 0.1, 0.7, PairingMode::AllPairs, 42).unwrap();
        let b = make_sensor_geometry(5, 9, 0.1, 0.7, PairingMode::AllPairs, 42).unwrap();
        assert_eq!(a.tx_angles, b.tx_angles);
        assert_eq!(a.rx_angles, b.rx_angles);
    }

    #[test]
    fn monostatic_ties_receivers() {
        let g = make_sensor_geometry(3, 3, 0.0, 0.5, PairingMode::Monostatic, 1).unwrap();
        assert_eq!(g.tx_angles, g.rx_angles);
        assert_eq!(g.n_pairs(), 3);
        assert_eq!(g.rx_for_tx(2), 2..3);
    }

    #[test]
    fn monostatic_rejects_mismatched_counts() {
        assert!(make_sensor_geometry(3, 4, 0.0, 0.5, PairingMode::Monostatic, 1).is_err());
    }

    #[test]
    fn invalid_cone_width_rejected() {
        assert!(make_sensor_geometry(1, 1, 0.0, 0.0, PairingMode::AllPairs, 0).is_err());
        assert!(make_sensor_geometry(1, 1, 0.0, 2.0, PairingMode::AllPairs, 0).is_err());
    }

    #[test]
    fn pixel_round_trip_is_exact() {
        let grid = PixelGrid::new(3, 4, 1.0, 0.25).unwrap();
        assert_eq!(grid.len(), 12);
        for p in 0..grid.len() {
            let (ix, iy) = grid.coords_of(p);
            assert_eq!(grid.index_of(ix, iy), p);
            let c = grid.center(p);
            assert!(c.x.abs() <= grid.extent && c.y.abs() <= grid.extent);
        }
        // x varies fastest
        assert_eq!(grid.coords_of(1), (1, 0));
        assert_eq!(grid.coords_of(3), (0, 1));
    }

    #[test]
    fn base_center_matches_pixel_zero() {
        let grid = PixelGrid::new(5, 2, 0.5, 2.0).unwrap();
        assert_eq!(grid.base_center(), grid.center(0));
    }
}
