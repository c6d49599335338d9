//! Ground-truth scenes: clustered point scatterers with per-object velocity.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{PixelGrid, Vec2};

/// One point reflector: a pixel, a complex reflection coefficient and a
/// constant velocity over the coherent processing interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub pixel: usize,
    pub reflectivity: Complex64,
    pub velocity: Vec2,
}

/// Ground truth used by the simulator and by the evaluation metrics.
///
/// In the baseline model each pixel holds at most one scatterer; the
/// multi-scatterer variant relaxes this and is flagged explicitly so that
/// downstream selection knows to retain more than one hypothesis per pixel.
#[derive(Debug, Clone, Default)]
pub struct SceneTruth {
    pub scatterers: Vec<Scatterer>,
    pub multi_scatterer: bool,
}

impl SceneTruth {
    /// Magnitude image over the full grid (zeros where no scatterer sits).
    /// In multi-scatterer mode magnitudes accumulate per pixel.
    pub fn magnitude_image(&self, grid: &PixelGrid) -> Vec<f64> {
        let mut img = vec![0.0; grid.len()];
        for s in &self.scatterers {
            img[s.pixel] += s.reflectivity.norm();
        }
        img
    }

    /// Pixels that contain at least one scatterer.
    pub fn occupied_pixels(&self) -> Vec<usize> {
        let mut px: Vec<usize> = self.scatterers.iter().map(|s| s.pixel).collect();
        px.sort_unstable();
        px.dedup();
        px
    }

    /// Largest velocity magnitude present in the scene (0 for empty scenes).
    pub fn max_speed(&self) -> f64 {
        self.scatterers
            .iter()
            .map(|s| s.velocity.norm())
            .fold(0.0, f64::max)
    }
}

/// A rigid object: a set of clustered pixels sharing one velocity. Every
/// member pixel gets a unit-amplitude scatterer with an independent random
/// phase.
#[derive(Debug, Clone)]
pub struct ObjectSpec {
    /// Raster coordinates (ix, iy) of the member pixels.
    pub pixels: Vec<(usize, usize)>,
    pub velocity: Vec2,
}

impl ObjectSpec {
    /// Convenience constructor for a w x h rectangular cluster anchored at
    /// (ix0, iy0).
    pub fn rect(ix0: usize, iy0: usize, w: usize, h: usize, velocity: Vec2) -> Self {
        let mut pixels = Vec::with_capacity(w * h);
        for iy in iy0..iy0 + h {
            for ix in ix0..ix0 + w {
                pixels.push((ix, iy));
            }
        }
        ObjectSpec { pixels, velocity }
    }
}

/// Build a scene from object specs. Reflectivities have unit amplitude and
/// i.i.d. uniform random phase in `[0, 2pi)`, drawn in object order from the
/// seeded stream, so a seed reproduces the scene bit for bit.
///
/// In baseline mode (`multi_scatterer = false`) objects must not overlap; an
/// overlap is a configuration error.
pub fn make_scene(
    grid: &PixelGrid,
    objects: &[ObjectSpec],
    rng_seed: u64,
    multi_scatterer: bool,
) -> Result<SceneTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = vec![false; grid.len()];
    let mut scatterers = Vec::new();
    for (oi, obj) in objects.iter().enumerate() {
        if !obj.velocity.x.is_finite() || !obj.velocity.y.is_finite() {
            return Err(Error::config(format!("object {oi}: velocity must be finite")));
        }
        for &(ix, iy) in &obj.pixels {
            if ix >= grid.nx || iy >= grid.ny {
                return Err(Error::config(format!(
                    "object {oi}: pixel ({ix}, {iy}) lies outside the {}x{} grid",
                    grid.nx, grid.ny
                )));
            }
            let p = grid.index_of(ix, iy);
            if seen[p] && !multi_scatterer {
                return Err(Error::config(format!(
                    "object {oi}: pixel ({ix}, {iy}) already occupied; \
                     overlapping objects need multi_scatterer mode"
                )));
            }
            seen[p] = true;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            scatterers.push(Scatterer {
                pixel: p,
                reflectivity: Complex64::from_polar(1.0, phase),
                velocity: obj.velocity,
            });
        }
    }
    Ok(SceneTruth {
        scatterers,
        multi_scatterer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PixelGrid {
        PixelGrid::new(8, 8, 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_object_list_gives_empty_scene() {
        let s = make_scene(&grid(), &[], 0, false).unwrap();
        assert!(s.scatterers.is_empty());
    }

    #[test]
    fn single_stationary_scatterer() {
        let obj = ObjectSpec {
            pixels: vec![(3, 4)],
            velocity: Vec2::ZERO,
        };
        let s = make_scene(&grid(), &[obj], 5, false).unwrap();
        assert_eq!(s.scatterers.len(), 1);
        assert_eq!(s.scatterers[0].velocity, Vec2::ZERO);
        assert!((s.scatterers[0].reflectivity.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scene_is_deterministic() {
        let objs = vec![
            ObjectSpec::rect(0, 0, 2, 2, Vec2::new(3.0, 1.0)),
            ObjectSpec::rect(4, 4, 2, 2, Vec2::ZERO),
        ];
        let a = make_scene(&grid(), &objs, 9, false).unwrap();
        let b = make_scene(&grid(), &objs, 9, false).unwrap();
        assert_eq!(a.scatterers.len(), b.scatterers.len());
        for (x, y) in a.scatterers.iter().zip(b.scatterers.iter()) {
            assert_eq!(x.pixel, y.pixel);
            assert_eq!(x.reflectivity, y.reflectivity);
        }
    }

    #[test]
    fn overlap_rejected_in_baseline_mode() {
        let objs = vec![
            ObjectSpec::rect(0, 0, 2, 2, Vec2::ZERO),
            ObjectSpec::rect(1, 1, 2, 2, Vec2::new(1.0, 0.0)),
        ];
        assert!(make_scene(&grid(), &objs, 0, false).is_err());
        // multi-scatterer mode allows it
        let s = make_scene(&grid(), &objs, 0, true).unwrap();
        assert_eq!(s.scatterers.len(), 8);
        assert!(s.multi_scatterer);
    }

    #[test]
    fn out_of_grid_pixel_rejected() {
        let obj = ObjectSpec {
            pixels: vec![(8, 0)],
            velocity: Vec2::ZERO,
        };
        assert!(make_scene(&grid(), &[obj], 0, false).is_err());
    }

    #[test]
    fn rect_cluster_has_expected_size() {
        let o = ObjectSpec::rect(2, 3, 4, 5, Vec2::ZERO);
        assert_eq!(o.pixels.len(), 20);
        assert_eq!(o.pixels[0], (2, 3));
        assert_eq!(*o.pixels.last().unwrap(), (5, 7));
    }

    #[test]
    fn magnitude_image_marks_scatterers() {
        let objs = vec![ObjectSpec::rect(1, 1, 2, 1, Vec2::ZERO)];
        let g = grid();
        let s = make_scene(&g, &objs, 3, false).unwrap();
        let img = s.magnitude_image(&g);
        assert_eq!(img.iter().filter(|&&m| m > 0.0).count(), 2);
        assert!((img[g.index_of(1, 1)] - 1.0).abs() < 1e-15);
    }
}
