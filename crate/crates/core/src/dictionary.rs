//! Velocity hypothesis grids, the extended (pixel, hypothesis) coefficient
//! layout and the anti-phase-wrap grid check.

use std::collections::HashSet;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{unit_direction, PixelGrid, Vec2};

/// Ordered set of velocity hypotheses. The first entry is always the zero
/// vector so stationary targets are representable, and all entries are
/// distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    velocities: Vec<Vec2>,
}

/// One magnitude band of the (possibly non-uniform) velocity grid:
/// `min, min+step, ..., <= max` meters per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeBand {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl VelocityGrid {
    /// Grid containing only the zero hypothesis (the static dictionary).
    pub fn static_only() -> Self {
        VelocityGrid {
            velocities: vec![Vec2::ZERO],
        }
    }

    /// Build a grid from explicit velocity vectors; the zero hypothesis is
    /// prepended if absent. Exact duplicates are rejected.
    pub fn from_velocities(vs: Vec<Vec2>) -> Result<Self> {
        let mut velocities = Vec::with_capacity(vs.len() + 1);
        velocities.push(Vec2::ZERO);
        let mut seen: HashSet<(u64, u64)> = HashSet::new();
        seen.insert((0f64.to_bits(), 0f64.to_bits()));
        for v in vs {
            if v == Vec2::ZERO {
                continue;
            }
            if !seen.insert((v.x.to_bits(), v.y.to_bits())) {
                return Err(Error::config(format!(
                    "duplicate velocity hypothesis ({}, {})",
                    v.x, v.y
                )));
            }
            velocities.push(v);
        }
        Ok(VelocityGrid { velocities })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    #[inline]
    pub fn velocity(&self, n: usize) -> Vec2 {
        self.velocities[n]
    }

    pub fn velocities(&self) -> &[Vec2] {
        &self.velocities
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Indices of the hypotheses nearest to `v` in Euclidean norm. Usually a
    /// single index; ties within a relative slack of 1e-9 are all returned
    /// (exact mid-gap truths do occur, e.g. a magnitude halfway between two
    /// grid magnitudes along the same direction).
    pub fn nearest_indices(&self, v: Vec2) -> Vec<usize> {
        let dists: Vec<f64> = self.velocities.iter().map(|g| g.distance(v)).collect();
        let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = 1e-9 * best.max(1e-300);
        dists
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= best + slack)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Build the dictionary grid `{0} U {magnitude x direction}` over the given
/// bands and angles (radians).
///
/// Duplicates are removed on exact equality of the generated (magnitude,
/// angle) pairs, not by comparing floating components; magnitude zero in a
/// band only re-creates the mandatory zero hypothesis and is dropped.
pub fn build_velocity_grid(bands: &[MagnitudeBand], angles: &[f64]) -> Result<VelocityGrid> {
    let mut velocities = vec![Vec2::ZERO];
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    for (bi, band) in bands.iter().enumerate() {
        if !(band.step > 0.0) {
            return Err(Error::config(format!(
                "band {bi}: magnitude step must be positive, got {}",
                band.step
            )));
        }
        if band.max < band.min || band.min < 0.0 {
            return Err(Error::config(format!(
                "band {bi}: need 0 <= min <= max, got [{}, {}]",
                band.min, band.max
            )));
        }
        let count = ((band.max - band.min) / band.step + 1e-9).floor() as usize + 1;
        for i in 0..count {
            let mag = band.min + band.step * i as f64;
            if mag == 0.0 {
                continue; // the zero hypothesis already leads the grid
            }
            for &angle in angles {
                if seen.insert((mag.to_bits(), angle.to_bits())) {
                    velocities.push(unit_direction(angle).scale(mag));
                }
            }
        }
    }
    if velocities.is_empty() {
        return Err(Error::config("velocity grid came out empty"));
    }
    // distinctness of the realized vectors (two different (mag, angle) pairs
    // can collide, e.g. angles differing by 2pi)
    let mut exact: HashSet<(u64, u64)> = HashSet::new();
    for v in &velocities {
        if !exact.insert((v.x.to_bits(), v.y.to_bits())) {
            return Err(Error::config(format!(
                "velocity hypotheses collide at ({}, {}); check the angle list",
                v.x, v.y
            )));
        }
    }
    Ok(VelocityGrid { velocities })
}

/// One-based flat index of the extended reflectivity vector: entry for
/// pixel `p` and hypothesis `n` (both 1-based) sits at `(p-1)*N + n`
/// (1-based).
pub fn flat_index(p: usize, n: usize, n_hyp: usize) -> Result<usize> {
    if p == 0 || n == 0 || n > n_hyp {
        return Err(Error::contract(format!(
            "flat_index needs 1 <= n <= N and p >= 1, got p={p}, n={n}, N={n_hyp}"
        )));
    }
    Ok((p - 1) * n_hyp + n)
}

/// Inverse of [`flat_index`]: 1-based flat position back to 1-based (p, n).
pub fn flat_index_inverse(idx: usize, n_hyp: usize) -> Result<(usize, usize)> {
    if idx == 0 || n_hyp == 0 {
        return Err(Error::contract(format!(
            "flat_index_inverse needs idx >= 1 and N >= 1, got idx={idx}, N={n_hyp}"
        )));
    }
    let p = (idx - 1) / n_hyp + 1;
    let n = (idx - 1) % n_hyp + 1;
    Ok((p, n))
}

/// Extended reflectivity vector over all (pixel, hypothesis) pairs, stored
/// pixel-major: the 0-based entry for (p, n) is `coeffs[p * N + n]`, matching
/// the one-based layout `(p-1)*N + n` shifted to 0-based indices.
#[derive(Debug, Clone)]
pub struct ExtendedImage {
    pub coeffs: Vec<Complex64>,
    pub grid: PixelGrid,
    pub vgrid: VelocityGrid,
}

impl ExtendedImage {
    pub fn zeros(grid: PixelGrid, vgrid: VelocityGrid) -> Self {
        let len = grid.len() * vgrid.len();
        ExtendedImage {
            coeffs: vec![Complex64::ZERO; len],
            grid,
            vgrid,
        }
    }

    pub fn from_coeffs(coeffs: Vec<Complex64>, grid: PixelGrid, vgrid: VelocityGrid) -> Result<Self> {
        if coeffs.len() != grid.len() * vgrid.len() {
            return Err(Error::contract(format!(
                "extended vector length {} does not match P*N = {}*{}",
                coeffs.len(),
                grid.len(),
                vgrid.len()
            )));
        }
        Ok(ExtendedImage { coeffs, grid, vgrid })
    }

    #[inline]
    pub fn at(&self, p: usize, n: usize) -> Complex64 {
        self.coeffs[p * self.vgrid.len() + n]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize, n: usize) -> &mut Complex64 {
        let n_hyp = self.vgrid.len();
        &mut self.coeffs[p * n_hyp + n]
    }
}

/// Outcome of the anti-wrap check for one hypothesis and its nearest
/// neighbour in the grid.
#[derive(Debug, Clone, Copy)]
pub struct WrapEntry {
    pub index: usize,
    /// Distance to the nearest other hypothesis, m/s.
    pub nearest_gap: f64,
    /// Worst-case phase spread `(2 pi f_max / c) * |e_kl|_max * gap * cpi`.
    pub phase_span: f64,
    pub ok: bool,
}

/// Advisory report from [`validate_grid_against_wrap`].
#[derive(Debug, Clone)]
pub struct WrapReport {
    pub entries: Vec<WrapEntry>,
    /// Largest phase span over all nearest-neighbour gaps.
    pub worst_phase_span: f64,
    pub passed: bool,
}

impl WrapReport {
    /// Margin to the pi limit (positive means safe).
    pub fn worst_margin(&self) -> f64 {
        std::f64::consts::PI - self.worst_phase_span
    }
}

/// Check that adjacent velocity hypotheses stay phase-unambiguous over the
/// CPI: the spread `(2 pi f_max / c) * |e_kl|_max * |dv| * cpi` must stay
/// below pi for each nearest-neighbour gap `dv`. This is advisory — the
/// criterion is qualitative — so violations are reported, never fatal.
pub fn validate_grid_against_wrap(
    vgrid: &VelocityGrid,
    cpi: f64,
    f_max_hz: f64,
    e_kl_max_norm: f64,
    wave_speed: f64,
) -> Result<WrapReport> {
    if !(cpi > 0.0) {
        return Err(Error::contract("cpi must be positive".to_string()));
    }
    let scale = std::f64::consts::TAU * f_max_hz / wave_speed * e_kl_max_norm * cpi;
    let n = vgrid.len();
    let mut entries = Vec::with_capacity(n);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut gap = f64::INFINITY;
        for j in 0..n {
            if i != j {
                gap = gap.min(vgrid.velocity(i).distance(vgrid.velocity(j)));
            }
        }
        if !gap.is_finite() {
            gap = 0.0; // single-hypothesis grid: nothing to disambiguate
        }
        let span = scale * gap;
        worst = worst.max(span);
        entries.push(WrapEntry {
            index: i,
            nearest_gap: gap,
            phase_span: span,
            ok: span < std::f64::consts::PI,
        });
    }
    Ok(WrapReport {
        entries,
        worst_phase_span: worst,
        passed: worst < std::f64::consts::PI,
    })
}
