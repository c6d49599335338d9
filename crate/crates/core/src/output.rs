//! File emission: CSV tables, 16-bit graymaps, the phase-history binary
//! format and the metrics report. All writes go through a temp file in the
//! destination directory followed by a rename.
//!
//! CSV files are comma-separated with a header row, '.' decimal separator
//! and LF line endings. Floats print in shortest round-trip form.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::analysis::{KSpaceSampleSet, MetricsReport};
use crate::dictionary::VelocityGrid;
use crate::error::{Error, Result};
use crate::forward::{MeasurementLayout, OperatorSpec, PhaseHistory};
use crate::geometry::{PixelGrid, Vec2};
use crate::matched_filter::Detection;
use crate::solver::IterationStat;

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())
}

/// Phase history binary: four little-endian u64 header words
/// (M, n_pulses, rx_slots, n_f) followed by M interleaved re/im f64 values.
/// In one-pulse-per-transmitter multistatic configurations the middle words
/// are the transmitter and receiver counts.
pub fn write_phase_history_bin(path: &Path, ph: &PhaseHistory) -> Result<()> {
    let mut bytes = Vec::with_capacity(32 + 16 * ph.len());
    for word in [
        ph.len() as u64,
        ph.layout.n_pulses as u64,
        ph.layout.rx_slots as u64,
        ph.layout.n_f as u64,
    ] {
        bytes.extend_from_slice(&word.to_le_bytes());
    }
    for z in &ph.values {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_phase_history_bin(path: &Path) -> Result<PhaseHistory> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "file shorter than the 32-byte header".to_string(),
        });
    }
    let word = |i: usize| -> u64 {
        u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap())
    };
    let m = word(0) as usize;
    let layout = MeasurementLayout {
        n_pulses: word(1) as usize,
        rx_slots: word(2) as usize,
        n_f: word(3) as usize,
    };
    if layout.len() != m {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("header M = {m} does not factor as {:?}", layout),
        });
    }
    if bytes.len() != 32 + 16 * m {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected {} bytes of samples", 16 * m),
        });
    }
    let mut values = Vec::with_capacity(m);
    for i in 0..m {
        let at = 32 + 16 * i;
        let re = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[at + 8..at + 16].try_into().unwrap());
        values.push(Complex64::new(re, im));
    }
    Ok(PhaseHistory { values, layout })
}

/// CSV inspection dump of a phase history: m, pulse k, receiver l, sample
/// time t (intra-pulse, seconds), re, im.
pub fn write_phase_history_csv(path: &Path, spec: &OperatorSpec, ph: &PhaseHistory) -> Result<()> {
    let mut s = String::from("m,k,l,t,re,im\n");
    for (m, (row, z)) in spec.rows().iter().zip(&ph.values).enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m, row.pulse, row.rx, row.t_sample, z.re, z.im
        ));
    }
    write_text(path, &s)
}

/// Long-form magnitude image: ix, iy, x, y, value.
pub fn write_image_csv(path: &Path, grid: &PixelGrid, values: &[f64]) -> Result<()> {
    let mut s = String::from("ix,iy,x,y,value\n");
    for p in 0..grid.len() {
        let (ix, iy) = grid.coords_of(p);
        let c = grid.center(p);
        s.push_str(&format!("{},{},{},{},{}\n", ix, iy, c.x, c.y, values[p]));
    }
    write_text(path, &s)
}

/// Read back an image CSV written by [`write_image_csv`].
pub fn read_image_csv(path: &Path, grid: &PixelGrid) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = vec![0.0; grid.len()];
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {} has {} fields, expected 5", lineno + 1, fields.len()),
            });
        }
        let parse = |f: &str| -> Result<f64> {
            f.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: bad float {f:?}", lineno + 1),
            })
        };
        let ix: usize = fields[0].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: bad index", lineno + 1),
        })?;
        let iy: usize = fields[1].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: bad index", lineno + 1),
        })?;
        values[grid.index_of(ix, iy)] = parse(fields[4])?;
    }
    Ok(values)
}

/// Velocity map: p, x, y, v_x, v_y, |s|.
pub fn write_velocity_map_csv(
    path: &Path,
    grid: &PixelGrid,
    image: &[Complex64],
    velocity_map: &[Vec2],
) -> Result<()> {
    let mut s = String::from("p,x,y,v_x,v_y,magnitude\n");
    for p in 0..grid.len() {
        let c = grid.center(p);
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p,
            c.x,
            c.y,
            velocity_map[p].x,
            velocity_map[p].y,
            image[p].norm()
        ));
    }
    write_text(path, &s)
}

/// Velocity grid echo: n, v_x, v_y.
pub fn write_velocity_grid_csv(path: &Path, vgrid: &VelocityGrid) -> Result<()> {
    let mut s = String::from("n,v_x,v_y\n");
    for (n, v) in vgrid.velocities().iter().enumerate() {
        s.push_str(&format!("{},{},{}\n", n, v.x, v.y));
    }
    write_text(path, &s)
}

/// k-space samples: m, k (pulse), l, t, kx, ky.
pub fn write_kspace_csv(path: &Path, set: &KSpaceSampleSet) -> Result<()> {
    let mut s = String::from("m,k,l,t,kx,ky\n");
    for smp in &set.samples {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            smp.m, smp.pulse, smp.rx, smp.t_sample, smp.k.x, smp.k.y
        ));
    }
    write_text(path, &s)
}

/// Detections: pixel, x, y, magnitude, v_x, v_y.
pub fn write_detections_csv(path: &Path, grid: &PixelGrid, dets: &[Detection]) -> Result<()> {
    let mut s = String::from("pixel,x,y,magnitude,v_x,v_y\n");
    for d in dets {
        let c = grid.center(d.pixel);
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.pixel, c.x, c.y, d.magnitude, d.velocity.x, d.velocity.y
        ));
    }
    write_text(path, &s)
}

/// Solver trace: iteration, objective, residual_norm, l1_norm.
pub fn write_diagnostics_csv(path: &Path, trace: &[IterationStat]) -> Result<()> {
    let mut s = String::from("iteration,objective,residual_norm,l1_norm\n");
    for t in trace {
        s.push_str(&format!(
            "{},{},{},{}\n",
            t.iteration, t.objective, t.residual_norm, t.l1_norm
        ));
    }
    write_text(path, &s)
}

/// 16-bit binary portable graymap of a magnitude image, with a sidecar text
/// file recording the linear scale (gray 65535 = recorded maximum).
pub fn write_pgm16(path: &Path, grid: &PixelGrid, values: &[f64]) -> Result<()> {
    let maxv = values.iter().cloned().fold(0.0f64, f64::max);
    let mut bytes = format!("P5\n{} {}\n65535\n", grid.nx, grid.ny).into_bytes();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = values[grid.index_of(ix, iy)];
            let gray = if maxv > 0.0 {
                ((v / maxv) * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            // PGM stores 16-bit samples most significant byte first
            bytes.extend_from_slice(&gray.to_be_bytes());
        }
    }
    atomic_write(path, &bytes)?;
    let sidecar = path.with_extension("scale.txt");
    write_text(
        &sidecar,
        &format!("max_magnitude={}\ngray_levels=65535\nmapping=linear\n", maxv),
    )
}

/// Machine-parseable key/value metrics report. Wall-clock timings are kept
/// out of this file so identical runs produce identical bytes; they go to
/// the run log instead.
pub fn render_metrics(reports: &[MetricsReport], seeds: &[(String, u64)], config_echo: &str) -> String {
    let mut s = String::new();
    for (name, seed) in seeds {
        s.push_str(&format!("seed.{name}={seed}\n"));
    }
    for r in reports {
        let m = &r.method;
        s.push_str(&format!("{m}.pixel_error={}\n", r.pixel_error));
        s.push_str(&format!("{m}.detection_threshold={}\n", r.detection_threshold));
        s.push_str(&format!("{m}.true_positives={}\n", r.detection.true_positives));
        s.push_str(&format!("{m}.false_positives={}\n", r.detection.false_positives));
        s.push_str(&format!("{m}.false_negatives={}\n", r.detection.false_negatives));
        s.push_str(&format!("{m}.precision={}\n", r.detection.precision));
        s.push_str(&format!("{m}.recall={}\n", r.detection.recall));
        match r.velocity.fraction() {
            Some(f) => {
                s.push_str(&format!("{m}.velocity_accuracy={f}\n"));
                s.push_str(&format!(
                    "{m}.velocity_moving_true_positives={}\n",
                    r.velocity.moving_true_positives
                ));
            }
            None => s.push_str(&format!("{m}.velocity_accuracy=n/a\n")),
        }
        if let Some(c) = r.solver_converged {
            s.push_str(&format!("{m}.solver_converged={c}\n"));
        }
        if let Some(it) = r.solver_iterations {
            s.push_str(&format!("{m}.solver_iterations={it}\n"));
        }
        if let Some(res) = r.residual_norm {
            s.push_str(&format!("{m}.residual_norm={res}\n"));
        }
    }
    s.push_str("# --- config echo ---\n");
    for line in config_echo.lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}
