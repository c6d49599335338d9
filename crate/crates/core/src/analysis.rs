//! Spatial-frequency coverage, resolution bounds and evaluation metrics.

use std::collections::HashSet;

use crate::dictionary::VelocityGrid;
use crate::error::{Error, Result};
use crate::forward::OperatorSpec;
use crate::geometry::Vec2;
use crate::matched_filter::Detection;
use crate::scene::SceneTruth;

/// One spatial-frequency sample with its measurement tag.
#[derive(Debug, Clone, Copy)]
pub struct KSpaceSample {
    pub m: usize,
    pub pulse: usize,
    pub rx: usize,
    pub t_sample: f64,
    /// rad/m.
    pub k: Vec2,
}

/// The spatial-frequency sampling pattern of a measurement configuration.
#[derive(Debug, Clone)]
pub struct KSpaceSampleSet {
    pub samples: Vec<KSpaceSample>,
}

/// Per-measurement spatial-frequency vectors `k = W_kl(t) (e_k + e_l)`.
pub fn kspace_samples(spec: &OperatorSpec) -> KSpaceSampleSet {
    let samples = spec
        .rows()
        .iter()
        .enumerate()
        .map(|(m, row)| KSpaceSample {
            m,
            pulse: row.pulse,
            rx: row.rx,
            t_sample: row.t_sample,
            k: row.e_kl.scale(row.omega),
        })
        .collect();
    KSpaceSampleSet { samples }
}

/// Range and cross-range resolution lower bounds of a forward-cone
/// configuration, from the bounding box of the sampled annulus:
///
/// ```text
/// rho_x = c / (2 B_eq),  B_eq = (f0 + B/2) - (f0 - B/2) cos(dtheta/2)
/// rho_y = c / (4 (f0 + B/2) sin(dtheta/2))
/// ```
pub fn resolution_bounds(
    f0_hz: f64,
    bandwidth_hz: f64,
    cone_width: f64,
    wave_speed: f64,
) -> Result<(f64, f64)> {
    if !(cone_width > 0.0 && cone_width < std::f64::consts::FRAC_PI_2) {
        return Err(Error::contract(format!(
            "cone width must lie in (0, pi/2), got {cone_width} rad"
        )));
    }
    if bandwidth_hz < 0.0 || !(f0_hz > 0.0) {
        return Err(Error::contract(
            "need f0 > 0 and bandwidth >= 0".to_string(),
        ));
    }
    let f_hi = f0_hz + bandwidth_hz / 2.0;
    let f_lo = f0_hz - bandwidth_hz / 2.0;
    let b_eq = f_hi - f_lo * (cone_width / 2.0).cos();
    let rho_x = wave_speed / (2.0 * b_eq);
    let rho_y = wave_speed / (4.0 * f_hi * (cone_width / 2.0).sin());
    Ok((rho_x, rho_y))
}

/// Per-pixel reflectivity magnitude error `|x - xhat|_2^2 / P`.
pub fn pixel_error(truth_magnitudes: &[f64], estimate_magnitudes: &[f64]) -> Result<f64> {
    if truth_magnitudes.len() != estimate_magnitudes.len() {
        return Err(Error::contract(format!(
            "magnitude images differ in length: {} vs {}",
            truth_magnitudes.len(),
            estimate_magnitudes.len()
        )));
    }
    if truth_magnitudes.is_empty() {
        return Err(Error::contract("empty images".to_string()));
    }
    let sum: f64 = truth_magnitudes
        .iter()
        .zip(estimate_magnitudes)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / truth_magnitudes.len() as f64)
}

/// Detection quality against exact-pixel ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Score detections against the set of truth-occupied pixels. A detection is
/// a true positive iff the truth holds a scatterer in that exact pixel. With
/// no detections the precision is vacuously 1.
pub fn detection_metrics(truth_pixels: &[usize], detections: &[Detection]) -> DetectionMetrics {
    let truth: HashSet<usize> = truth_pixels.iter().copied().collect();
    let detected: HashSet<usize> = detections.iter().map(|d| d.pixel).collect();
    let tp = detected.intersection(&truth).count();
    let fp = detected.len() - tp;
    let fn_ = truth.len() - tp;
    let precision = if detected.is_empty() {
        1.0
    } else {
        tp as f64 / detected.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        tp as f64 / truth.len() as f64
    };
    DetectionMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
    }
}

/// Velocity estimation quality over detected moving-object pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAccuracy {
    /// True-positive detections on pixels whose true velocity is nonzero.
    pub moving_true_positives: usize,
    /// How many of those carry a hypothesis nearest (in Euclidean norm) to
    /// the true velocity; exact mid-gap ties accept either neighbour.
    pub correct: usize,
}

impl VelocityAccuracy {
    pub fn fraction(&self) -> Option<f64> {
        if self.moving_true_positives == 0 {
            None
        } else {
            Some(self.correct as f64 / self.moving_true_positives as f64)
        }
    }
}

/// Count detected moving-object pixels whose estimated velocity equals a
/// grid point nearest the true velocity. `estimated_hypothesis[p]` is the
/// selected hypothesis index for pixel p.
pub fn velocity_accuracy(
    scene: &SceneTruth,
    vgrid: &VelocityGrid,
    detections: &[Detection],
    estimated_hypothesis: &[usize],
) -> VelocityAccuracy {
    let detected: HashSet<usize> = detections.iter().map(|d| d.pixel).collect();
    let mut moving_tp = 0;
    let mut correct = 0;
    let mut seen: HashSet<usize> = HashSet::new();
    for s in &scene.scatterers {
        if !seen.insert(s.pixel) {
            continue; // one vote per pixel
        }
        if s.velocity == Vec2::ZERO || !detected.contains(&s.pixel) {
            continue;
        }
        moving_tp += 1;
        let nearest = vgrid.nearest_indices(s.velocity);
        if nearest.contains(&estimated_hypothesis[s.pixel]) {
            correct += 1;
        }
    }
    VelocityAccuracy {
        moving_true_positives: moving_tp,
        correct,
    }
}

/// Evaluation summary of one reconstruction, written to the metrics report.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub method: String,
    pub pixel_error: f64,
    pub detection: DetectionMetrics,
    pub velocity: VelocityAccuracy,
    pub detection_threshold: f64,
    pub solver_converged: Option<bool>,
    pub solver_iterations: Option<usize>,
    pub residual_norm: Option<f64>,
}
