//! The weighted matched-filter baseline: per-hypothesis adjoint images
//! stacked into a space-velocity cube, max-projection across hypotheses and
//! thresholded localization.

use num_complex::Complex64;

use crate::dictionary::VelocityGrid;
use crate::error::{Error, Result};
use crate::forward::{OperatorSpec, PhaseHistory};
use crate::geometry::{PixelGrid, Vec2};

/// Matched-filter magnitudes over all (pixel, hypothesis) pairs.
///
/// Values are stored hypothesis-major (`values[n * P + p]`) so max-projection
/// streams each slice once; the layout is internal and not observable through
/// the accessors.
#[derive(Debug, Clone)]
pub struct SpaceVelocityCube {
    values: Vec<Complex64>,
    pub grid: PixelGrid,
    pub vgrid: VelocityGrid,
    /// Scale applied to each (p, n) column, recorded so alternative weights
    /// can be swapped in. Every kernel entry has unit modulus, so the column
    /// energy is exactly M and the weight is 1/M for every column.
    pub normalization: Vec<f64>,
}

impl SpaceVelocityCube {
    #[inline]
    pub fn at(&self, p: usize, n: usize) -> Complex64 {
        self.values[n * self.grid.len() + p]
    }

    pub fn pixels(&self) -> usize {
        self.grid.len()
    }

    pub fn hypotheses(&self) -> usize {
        self.vgrid.len()
    }

    /// The image at one velocity hypothesis.
    pub fn slice(&self, n: usize) -> &[Complex64] {
        let pixels = self.grid.len();
        &self.values[n * pixels..(n + 1) * pixels]
    }

    /// Global magnitude argmax as (pixel, hypothesis); earlier indices win
    /// exact ties.
    pub fn argmax(&self) -> (usize, usize) {
        let pixels = self.grid.len();
        let mut best = (0usize, 0usize);
        let mut best_mag = -1.0;
        for n in 0..self.vgrid.len() {
            for p in 0..pixels {
                let mag = self.values[n * pixels + p].norm();
                if mag > best_mag {
                    best_mag = mag;
                    best = (p, n);
                }
            }
        }
        best
    }
}

/// Column-normalized matched filter: `cube[p, n] = Phi_p(v_n)^H r / M`.
/// For a noiseless unit scatterer whose velocity sits on the grid this
/// returns the reflectivity exactly at the true (pixel, hypothesis).
pub fn mf_cube(spec: &OperatorSpec, r: &PhaseHistory) -> Result<SpaceVelocityCube> {
    let adj = spec.apply_adjoint(r)?; // one adjoint slice per hypothesis
    let pixels = spec.grid.len();
    let n_hyp = spec.vgrid.len();
    let m = spec.measurement_count() as f64;
    let scale = 1.0 / m;
    let mut values = vec![Complex64::ZERO; pixels * n_hyp];
    for p in 0..pixels {
        for n in 0..n_hyp {
            values[n * pixels + p] = adj[p * n_hyp + n] * scale;
        }
    }
    Ok(SpaceVelocityCube {
        values,
        grid: spec.grid.clone(),
        vgrid: spec.vgrid.clone(),
        normalization: vec![scale; pixels * n_hyp],
    })
}

/// Max-projection of the cube: per pixel, the hypothesis of largest
/// magnitude (ties to the smallest index, favoring the stationary leading
/// hypothesis).
pub fn mf_max_project(cube: &SpaceVelocityCube) -> (Vec<Complex64>, Vec<Vec2>, Vec<usize>) {
    let pixels = cube.grid.len();
    let mut image = cube.slice(0).to_vec();
    let mut hypothesis = vec![0usize; pixels];
    for n in 1..cube.vgrid.len() {
        let slice = cube.slice(n);
        for p in 0..pixels {
            if slice[p].norm() > image[p].norm() {
                image[p] = slice[p];
                hypothesis[p] = n;
            }
        }
    }
    let velocity_map = hypothesis.iter().map(|&n| cube.vgrid.velocity(n)).collect();
    (image, velocity_map, hypothesis)
}

/// One thresholded detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub pixel: usize,
    pub magnitude: f64,
    pub velocity: Vec2,
}

/// Pixels whose magnitude strictly exceeds the threshold, sorted by
/// magnitude descending (ties by ascending pixel index).
pub fn threshold_detect(
    image: &[Complex64],
    velocity_map: &[Vec2],
    tau_det: f64,
) -> Result<Vec<Detection>> {
    if tau_det < 0.0 {
        return Err(Error::contract("detection threshold must be nonnegative".to_string()));
    }
    if image.len() != velocity_map.len() {
        return Err(Error::contract("image and velocity map lengths differ".to_string()));
    }
    let mut out: Vec<Detection> = image
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > tau_det)
        .map(|(p, z)| Detection {
            pixel: p,
            magnitude: z.norm(),
            velocity: velocity_map[p],
        })
        .collect();
    out.sort_by(|a, b| {
        b.magnitude
            .partial_cmp(&a.magnitude)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.pixel.cmp(&b.pixel))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_velocity_grid, MagnitudeBand};
    use crate::geometry::{make_sensor_geometry, PairingMode};
    use crate::scene::Scatterer;
    use crate::scene::SceneTruth;
    use crate::waveform::{assign_frequencies, build_schedule, FrequencyMode, TimeRefPolicy};

    fn spec(seed: u64) -> OperatorSpec {
        let geometry = make_sensor_geometry(3, 4, 0.0, 0.7, PairingMode::AllPairs, seed).unwrap();
        let grid = PixelGrid::new(3, 3, 1.5, 1.5).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(3, 1.5e9, 50e6, FrequencyMode::RandomTones, tau_c, seed).unwrap();
        let schedule = build_schedule(3, 2e-3, 1, tau_c, 3, TimeRefPolicy::Start).unwrap();
        let vgrid = build_velocity_grid(
            &[MagnitudeBand { min: 10.0, max: 20.0, step: 10.0 }],
            &[0.4, 1.9],
        )
        .unwrap();
        OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_cube() {
        let s = spec(1);
        let r = PhaseHistory {
            values: vec![Complex64::ZERO; s.measurement_count()],
            layout: s.layout(),
        };
        let cube = mf_cube(&s, &r).unwrap();
        for n in 0..cube.hypotheses() {
            assert!(cube.slice(n).iter().all(|z| *z == Complex64::ZERO));
        }
        let (img, vels, _) = mf_max_project(&cube);
        assert!(img.iter().all(|z| *z == Complex64::ZERO));
        assert!(vels.iter().all(|&v| v == Vec2::ZERO));
    }

    #[test]
    fn on_grid_scatterer_focuses_exactly() {
        let s = spec(2);
        let truth = Complex64::new(0.7, -0.4);
        let scene = SceneTruth {
            scatterers: vec![Scatterer {
                pixel: 4,
                reflectivity: truth,
                velocity: s.vgrid.velocity(3),
            }],
            multi_scatterer: false,
        };
        let r = s.simulate_scene(&scene).unwrap();
        let cube = mf_cube(&s, &r).unwrap();
        // perfect focus: the matched column recovers the coefficient exactly
        let got = cube.at(4, 3);
        assert!((got - truth).norm() < 1e-10, "got {got}");
        assert_eq!(cube.argmax(), (4, 3));
    }

    #[test]
    fn cube_matches_adjoint_reshape() {
        let s = spec(3);
        let mut coeffs = vec![Complex64::ZERO; s.extended_len()];
        coeffs[7] = Complex64::new(1.0, 0.2);
        let r = s.apply_forward(&coeffs).unwrap();
        let cube = mf_cube(&s, &r).unwrap();
        let adj = s.apply_adjoint(&r).unwrap();
        let m = s.measurement_count() as f64;
        for p in 0..s.grid.len() {
            for n in 0..s.vgrid.len() {
                let want = adj[p * s.vgrid.len() + n] / m;
                assert!((cube.at(p, n) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn static_slice_equals_static_adjoint() {
        // the zero-velocity slice of the cube is the conventional adjoint
        // image of the static dictionary
        let s = spec(4);
        let static_spec = OperatorSpec::new(
            s.geometry.clone(),
            s.grid.clone(),
            s.waveforms.clone(),
            s.schedule.clone(),
            VelocityGrid::static_only(),
        )
        .unwrap();
        let scene = SceneTruth {
            scatterers: vec![Scatterer {
                pixel: 0,
                reflectivity: Complex64::new(1.0, 0.0),
                velocity: Vec2::ZERO,
            }],
            multi_scatterer: false,
        };
        let r = s.simulate_scene(&scene).unwrap();
        let cube = mf_cube(&s, &r).unwrap();
        let static_cube = mf_cube(&static_spec, &r).unwrap();
        for p in 0..s.grid.len() {
            assert!((cube.at(p, 0) - static_cube.at(p, 0)).norm() < 1e-12);
        }
    }

    #[test]
    fn max_project_matches_exhaustive_argmax() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let s = spec(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let values: Vec<Complex64> = (0..s.measurement_count())
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let r = PhaseHistory {
            values,
            layout: s.layout(),
        };
        let cube = mf_cube(&s, &r).unwrap();
        let (img, _, hyp) = mf_max_project(&cube);
        for p in 0..cube.pixels() {
            let mut best = 0;
            for n in 1..cube.hypotheses() {
                if cube.at(p, n).norm() > cube.at(p, best).norm() {
                    best = n;
                }
            }
            assert_eq!(hyp[p], best);
            assert_eq!(img[p], cube.at(p, best));
        }
    }

    #[test]
    fn threshold_detect_rules() {
        let image = vec![
            Complex64::new(0.1, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(0.3, 0.0),
            Complex64::ZERO,
        ];
        let vels = vec![Vec2::ZERO; 4];
        let dets = threshold_detect(&image, &vels, 0.2).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].pixel, 1); // sorted by magnitude descending
        assert_eq!(dets[1].pixel, 2);

        // infinite threshold detects nothing
        assert!(threshold_detect(&image, &vels, f64::INFINITY).unwrap().is_empty());
        // strict inequality: zeros stay out even at threshold zero
        let zeros = vec![Complex64::ZERO; 3];
        let dets = threshold_detect(&zeros, &vec![Vec2::ZERO; 3], 0.0).unwrap();
        assert!(dets.is_empty());

        assert!(threshold_detect(&image, &vels, -1.0).is_err());
        assert!(threshold_detect(&image, &vels[..2], 0.1).is_err());
    }
}
