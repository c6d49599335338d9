#![allow(dead_code)] // shared module; each test binary uses a subset

//! Shared oracles and generators for the integration suites. Everything here
//! is written independently of the library's operator internals: the NUDFT
//! oracle evaluates plain Fourier sums from the k-space sample list, and the
//! dense reference multiplies explicit matrices.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sarvel::analysis::kspace_samples;
use sarvel::dictionary::{build_velocity_grid, MagnitudeBand, VelocityGrid};
use sarvel::forward::OperatorSpec;
use sarvel::geometry::{make_sensor_geometry, PairingMode, PixelGrid};
use sarvel::waveform::{assign_frequencies, build_schedule, FrequencyMode, TimeRefPolicy};

/// Direct nonuniform discrete Fourier sum over the pixel raster:
/// `y_m = sum_p coeffs[p] * exp(-j k_m . x_p)`. Independent of the operator
/// implementation; valid for static scenes with CW tones, where the
/// measurement model is exactly this transform.
pub fn nudft_forward(spec: &OperatorSpec, coeffs: &[Complex64]) -> Vec<Complex64> {
    let samples = kspace_samples(spec);
    let grid = &spec.grid;
    samples
        .samples
        .iter()
        .map(|s| {
            let mut acc = Complex64::ZERO;
            for p in 0..grid.len() {
                let x = grid.center(p);
                let phase = s.k.x * x.x + s.k.y * x.y;
                acc += Complex64::new(phase.cos(), -phase.sin()) * coeffs[p];
            }
            acc
        })
        .collect()
}

/// Independent dense reference: explicit kernel matrix from `phase_element`,
/// multiplied row by row.
pub struct DenseReference {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Complex64>,
}

impl DenseReference {
    pub fn build(spec: &OperatorSpec) -> Self {
        let rows = spec.measurement_count();
        let pixels = spec.grid.len();
        let n_hyp = spec.vgrid.len();
        let cols = pixels * n_hyp;
        let mut entries = Vec::with_capacity(rows * cols);
        for row in spec.rows() {
            for p in 0..pixels {
                let x = spec.grid.center(p);
                for n in 0..n_hyp {
                    let v = spec.vgrid.velocity(n);
                    entries.push(spec.phase_element(row.pulse, row.rx, row.t_sample, x, v));
                }
            }
        }
        DenseReference { rows, cols, entries }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows)
            .map(|i| {
                self.entries[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.entries[i * self.cols + j].conj() * y[i];
            }
        }
        out
    }
}

/// Randomized small operator covering multistatic/monostatic pairing, all
/// three waveform modes, one or two samples per pulse and optional nonzero
/// origin delays.
pub fn random_operator(seed: u64) -> OperatorSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let monostatic = rng.random_bool(0.3);
    let n_tx = rng.random_range(1..=3usize);
    let n_rx = if monostatic {
        n_tx
    } else {
        rng.random_range(1..=3usize)
    };
    let pairing = if monostatic {
        PairingMode::Monostatic
    } else {
        PairingMode::AllPairs
    };
    let cone_center = rng.random_range(-0.3..0.3);
    let cone_width = rng.random_range(0.3..std::f64::consts::FRAC_PI_2);
    let mut geometry =
        make_sensor_geometry(n_tx, n_rx, cone_center, cone_width, pairing, rng.random())
            .unwrap();
    if rng.random_bool(0.4) {
        let tx_delays: Vec<f64> = (0..n_tx).map(|_| rng.random_range(0.0..2e-6)).collect();
        let rx_delays: Vec<f64> = (0..n_rx).map(|_| rng.random_range(0.0..2e-6)).collect();
        geometry = geometry.with_origin_delays(tx_delays, rx_delays).unwrap();
    }
    let nx = rng.random_range(2..=3usize);
    let ny = rng.random_range(2..=3usize);
    let grid = PixelGrid::new(nx, ny, rng.random_range(0.8..2.5), rng.random_range(0.8..2.5))
        .unwrap();
    let tau_c = 1e-4;
    let mode = match rng.random_range(0..3u8) {
        0 => FrequencyMode::SingleToneCommon,
        1 => FrequencyMode::RandomTones,
        _ => FrequencyMode::Chirp,
    };
    let bandwidth = if mode == FrequencyMode::SingleToneCommon {
        0.0
    } else {
        rng.random_range(10e6..80e6)
    };
    let waveforms =
        assign_frequencies(n_tx, 1.5e9, bandwidth, mode, tau_c, rng.random()).unwrap();
    let n_f = rng.random_range(1..=2usize);
    let schedule =
        build_schedule(n_tx, 2e-3, n_f, tau_c, n_tx, TimeRefPolicy::Start).unwrap();
    let n_extra = rng.random_range(0..=2usize);
    let vgrid = if n_extra == 0 {
        VelocityGrid::static_only()
    } else {
        build_velocity_grid(
            &[MagnitudeBand {
                min: 9.0,
                max: 9.0 * n_extra as f64,
                step: 9.0,
            }],
            &[rng.random_range(0.0..1.5)],
        )
        .unwrap()
    };
    OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid).unwrap()
}

pub fn random_complex_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..len)
        .map(|_| {
            Complex64::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            )
        })
        .collect()
}

pub fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[allow(dead_code)]
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Second, independently written exhaustive l0 search used to cross-check
/// `oracle_l0` (recursion over index choices instead of nested loops,
/// residual by projection instead of normal equations).
#[allow(dead_code)]
pub fn exhaustive_l0_reference(
    dense: &sarvel::forward::DenseOperator,
    r: &[Complex64],
    delta: f64,
    budget: usize,
) -> Option<(Vec<usize>, f64)> {
    fn residual_via_projection(
        dense: &sarvel::forward::DenseOperator,
        r: &[Complex64],
        support: &[usize],
    ) -> Option<f64> {
        // Gram-Schmidt the support columns and subtract projections
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for &j in support {
            let mut col = dense.column(j);
            for q in &basis {
                let ip: Complex64 = q.iter().zip(&col).map(|(a, b)| a.conj() * b).sum();
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= ip * qv;
                }
            }
            let norm = l2(&col);
            if norm < 1e-9 {
                return None; // dependent columns
            }
            for c in col.iter_mut() {
                *c /= norm;
            }
            basis.push(col);
        }
        let mut resid: Vec<Complex64> = r.to_vec();
        for q in &basis {
            let ip: Complex64 = q.iter().zip(resid.iter()).map(|(a, b)| a.conj() * b).sum();
            for (rv, qv) in resid.iter_mut().zip(q) {
                *rv -= ip * qv;
            }
        }
        Some(resid.iter().map(|z| z.norm_sqr()).sum())
    }

    fn search(
        dense: &sarvel::forward::DenseOperator,
        r: &[Complex64],
        delta: f64,
        start: usize,
        chosen: &mut Vec<usize>,
        remaining: usize,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if let Some(res) = residual_via_projection(dense, r, chosen) {
            if res <= delta {
                let better = best
                    .as_ref()
                    .map_or(true, |(s, br)| chosen.len() < s.len()
                        || (chosen.len() == s.len() && res < *br));
                if better {
                    *best = Some((chosen.clone(), res));
                }
            }
        }
        if remaining == 0 {
            return;
        }
        for j in start..dense.cols {
            chosen.push(j);
            search(dense, r, delta, j + 1, chosen, remaining - 1, best);
            chosen.pop();
        }
    }

    let mut best = None;
    let mut chosen = Vec::new();
    search(dense, r, delta, 0, &mut chosen, budget, &mut best);
    // prefer the smallest feasible support size, then residual
    best
}
