//! The measurement physics: demodulated phase kernels, the matrix-free
//! forward operator over (pixel, velocity-hypothesis) columns, its exact
//! adjoint, scene simulation and SNR-controlled noise injection.
//!
//! Every kernel entry is the unit-modulus phasor
//!
//! ```text
//! exp(-j W(t) x.e_kl) * exp(-j W(t) [t + t_k - t_ref + eps(x, v)] v.e_kl)
//! ```
//!
//! with `W(t) = (w_k - 2 a_k (t - tau_kl(origin))) / c` the demodulated
//! spatial frequency and `eps` the transmitter-side residual delay of the
//! moving-scatterer derivation. For `v = 0` the second factor is exactly one
//! and the kernel reduces to the stationary 2D Fourier kernel sampled at
//! `k = W(t) e_kl`.
//!
//! The operator is applied matrix-free: no M x (P*N) matrix is ever stored on
//! the apply paths. Because the phase is affine in the pixel raster indices,
//! full-image sweeps advance by incremental complex rotations (two rotator
//! products per pixel) instead of one `sin_cos` per matrix entry; sparse
//! coefficient vectors take a direct per-entry path. A dense materialization
//! exists solely as a test oracle and is capped in size.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dictionary::VelocityGrid;
use crate::error::{Error, Result};
use crate::geometry::{bistatic_vector, PixelGrid, SensorGeometry, Vec2};
use crate::scene::SceneTruth;
use crate::waveform::{PulseSchedule, Waveform};

/// Entry cap for [`OperatorSpec::materialize_dense`].
pub const MAX_DENSE_ENTRIES: usize = 10_000_000;

/// Velocity hypotheses must satisfy |v| < 1e-3 c for the first-order Doppler
/// expansion to hold.
pub const MAX_SPEED_FRACTION: f64 = 1e-3;

/// Stationary propagation delay `tau_kl(x) = -(1/c) x . e_kl`: the projection
/// of the scatterer position onto the bistatic range vector.
pub fn static_delay(x: Vec2, e_kl: Vec2, wave_speed: f64) -> f64 {
    -x.dot(e_kl) / wave_speed
}

/// Transmitter-side residual delay of the moving-scatterer phase:
/// `eps_kl(x, v) = -tau_k(origin) + [x + (t_k - t_ref) v] . e_l / c`.
pub fn motion_epsilon(
    x: Vec2,
    v: Vec2,
    e_l: Vec2,
    tk_minus_tref: f64,
    tau_k_origin: f64,
    wave_speed: f64,
) -> f64 {
    -tau_k_origin + x.add(v.scale(tk_minus_tref)).dot(e_l) / wave_speed
}

/// Geometry and timing of one measurement (one pulse, one receiver, one
/// sample instant). `m` runs pulse-major, then receiver, then sample.
#[derive(Debug, Clone, Copy)]
pub struct MeasurementRow {
    /// Pulse index k.
    pub pulse: usize,
    /// Receiver element index l.
    pub rx: usize,
    /// Intra-pulse sample index.
    pub sample: usize,
    /// Intra-pulse sample time t_s, seconds relative to the pulse center.
    pub t_sample: f64,
    /// Demodulated spatial frequency W_kl(t_s), rad/m.
    pub omega: f64,
    pub e_k: Vec2,
    pub e_l: Vec2,
    pub e_kl: Vec2,
    /// t_k - t_ref for this pulse.
    pub tk_minus_tref: f64,
    /// tau_k(origin) of the transmitter that fired the pulse.
    pub tau_k_origin: f64,
}

/// Total phase of the measurement kernel for a scatterer at `x` moving with
/// `v`; the kernel itself is `exp(-j phase)`.
#[inline]
fn kernel_phase(row: &MeasurementRow, x: Vec2, v: Vec2, wave_speed: f64) -> f64 {
    let spatial = row.omega * x.dot(row.e_kl);
    let v_ekl = v.dot(row.e_kl);
    let eps = motion_epsilon(x, v, row.e_l, row.tk_minus_tref, row.tau_k_origin, wave_speed);
    spatial + row.omega * v_ekl * (row.t_sample + row.tk_minus_tref + eps)
}

/// Structural shape of a phase history: pulse-major, receiver-slot middle,
/// sample innermost. `rx_slots` is the receiver count per pulse (1 in the
/// monostatic tie), so the length is always `n_pulses * rx_slots * n_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementLayout {
    pub n_pulses: usize,
    pub rx_slots: usize,
    pub n_f: usize,
}

impl MeasurementLayout {
    pub fn len(&self) -> usize {
        self.n_pulses * self.rx_slots * self.n_f
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// m -> (pulse, rx_slot, sample).
    #[inline]
    pub fn decode(&self, m: usize) -> (usize, usize, usize) {
        let per_pulse = self.rx_slots * self.n_f;
        let pulse = m / per_pulse;
        let rem = m % per_pulse;
        (pulse, rem / self.n_f, rem % self.n_f)
    }

    /// (pulse, rx_slot, sample) -> m.
    #[inline]
    pub fn encode(&self, pulse: usize, rx_slot: usize, sample: usize) -> usize {
        (pulse * self.rx_slots + rx_slot) * self.n_f + sample
    }
}

/// The complex measurement vector r with its index layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistory {
    pub values: Vec<Complex64>,
    pub layout: MeasurementLayout,
}

impl PhaseHistory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Everything needed to evaluate the overcomplete forward operator: sensors,
/// pixel raster, per-transmitter waveforms, pulse schedule and the velocity
/// hypothesis grid (one operator column per (pixel, hypothesis) pair).
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub geometry: SensorGeometry,
    pub grid: PixelGrid,
    pub waveforms: Vec<Waveform>,
    pub schedule: PulseSchedule,
    pub vgrid: VelocityGrid,
    rows: Vec<MeasurementRow>,
    layout: MeasurementLayout,
    // phase(m, p, n) = b1(m,p) + a3[m*N+n] + a2[m*N+n] * b2(m,p) with
    // b1 = omega x.e_kl, b2 = x.e_l; for raster sweeps the same phase is
    // affine in the pixel indices: c0[m*N+n] + ix*cx[..] + iy*cy[..].
    a2: Vec<f64>,
    a3: Vec<f64>,
    c0: Vec<f64>,
    cx: Vec<f64>,
    cy: Vec<f64>,
}

impl OperatorSpec {
    pub fn new(
        geometry: SensorGeometry,
        grid: PixelGrid,
        waveforms: Vec<Waveform>,
        schedule: PulseSchedule,
        vgrid: VelocityGrid,
    ) -> Result<Self> {
        if waveforms.len() != geometry.n_tx() {
            return Err(Error::config(format!(
                "got {} waveforms for {} transmitters",
                waveforms.len(),
                geometry.n_tx()
            )));
        }
        for (i, w) in waveforms.iter().enumerate() {
            if (w.duration - schedule.tau_c).abs() > 1e-15 * schedule.tau_c.max(1.0) {
                return Err(Error::config(format!(
                    "waveform {i} duration {} differs from the schedule sample window {}",
                    w.duration, schedule.tau_c
                )));
            }
        }
        if let Some(&bad) = schedule.pulse_tx.iter().find(|&&t| t >= geometry.n_tx()) {
            return Err(Error::config(format!(
                "schedule references transmitter {bad} but only {} exist",
                geometry.n_tx()
            )));
        }
        let c = geometry.wave_speed;
        let speed_cap = MAX_SPEED_FRACTION * c;
        for (n, v) in vgrid.velocities().iter().enumerate() {
            if v.norm() >= speed_cap {
                return Err(Error::config(format!(
                    "velocity hypothesis {n} has |v| = {} m/s, violating |v| < 1e-3 c",
                    v.norm()
                )));
            }
        }
        if grid.len() == 0 {
            return Err(Error::config("pixel grid is empty"));
        }

        let rx_slots = match geometry.pairing {
            crate::geometry::PairingMode::AllPairs => geometry.n_rx(),
            crate::geometry::PairingMode::Monostatic => 1,
        };
        let layout = MeasurementLayout {
            n_pulses: schedule.n_pulses(),
            rx_slots,
            n_f: schedule.samples_per_pulse,
        };

        let mut rows = Vec::with_capacity(layout.len());
        for pulse in 0..layout.n_pulses {
            let tx = schedule.pulse_tx[pulse];
            let wave = waveforms[tx];
            let e_k = geometry.tx_direction(tx);
            let tau_k_origin = geometry.origin_delays_tx[tx];
            let tk_minus_tref = schedule.pulse_times[pulse] - schedule.reference_time;
            for slot in 0..rx_slots {
                let rx = match geometry.pairing {
                    crate::geometry::PairingMode::AllPairs => slot,
                    crate::geometry::PairingMode::Monostatic => tx,
                };
                let e_l = geometry.rx_direction(rx);
                let e_kl = bistatic_vector(e_k, e_l);
                let tau_kl_origin = tau_k_origin + geometry.origin_delays_rx[rx];
                for sample in 0..layout.n_f {
                    let t_sample = schedule.sample_offsets[sample];
                    let omega =
                        (wave.carrier - 2.0 * wave.chirp_rate * (t_sample - tau_kl_origin)) / c;
                    rows.push(MeasurementRow {
                        pulse,
                        rx,
                        sample,
                        t_sample,
                        omega,
                        e_k,
                        e_l,
                        e_kl,
                        tk_minus_tref,
                        tau_k_origin,
                    });
                }
            }
        }

        let n_hyp = vgrid.len();
        let m_total = rows.len();
        let base = grid.base_center();
        let mut a2 = vec![0.0; m_total * n_hyp];
        let mut a3 = vec![0.0; m_total * n_hyp];
        let mut c0 = vec![0.0; m_total * n_hyp];
        let mut cx = vec![0.0; m_total * n_hyp];
        let mut cy = vec![0.0; m_total * n_hyp];
        for (m, row) in rows.iter().enumerate() {
            for (n, &v) in vgrid.velocities().iter().enumerate() {
                let a1 = row.omega * v.dot(row.e_kl);
                let a2mn = a1 / c;
                let a3mn = a1
                    * (row.t_sample + row.tk_minus_tref - row.tau_k_origin
                        + row.tk_minus_tref * v.dot(row.e_l) / c);
                let idx = m * n_hyp + n;
                a2[idx] = a2mn;
                a3[idx] = a3mn;
                c0[idx] = row.omega * base.dot(row.e_kl) + a2mn * base.dot(row.e_l) + a3mn;
                cx[idx] = grid.dx * (row.omega * row.e_kl.x + a2mn * row.e_l.x);
                cy[idx] = grid.dy * (row.omega * row.e_kl.y + a2mn * row.e_l.y);
            }
        }

        Ok(OperatorSpec {
            geometry,
            grid,
            waveforms,
            schedule,
            vgrid,
            rows,
            layout,
            a2,
            a3,
            c0,
            cx,
            cy,
        })
    }

    pub fn measurement_count(&self) -> usize {
        self.rows.len()
    }

    pub fn layout(&self) -> MeasurementLayout {
        self.layout
    }

    pub fn rows(&self) -> &[MeasurementRow] {
        &self.rows
    }

    /// Number of operator columns P*N.
    pub fn extended_len(&self) -> usize {
        self.grid.len() * self.vgrid.len()
    }

    /// The measurement kernel for pulse `k`, receiver element `l`, sample
    /// time `t` (seconds, within the receive window `[-tau_c/2, tau_c/2]`),
    /// scatterer position `x` and velocity `v`. Unit modulus by construction;
    /// exactly the stationary kernel when `v = 0`.
    pub fn phase_element(&self, k: usize, l: usize, t: f64, x: Vec2, v: Vec2) -> Complex64 {
        debug_assert!(t.abs() <= self.schedule.tau_c / 2.0 + 1e-12);
        let tx = self.schedule.pulse_tx[k];
        let wave = self.waveforms[tx];
        let e_k = self.geometry.tx_direction(tx);
        let e_l = self.geometry.rx_direction(l);
        let tau_k_origin = self.geometry.origin_delays_tx[tx];
        let tau_kl_origin = tau_k_origin + self.geometry.origin_delays_rx[l];
        let row = MeasurementRow {
            pulse: k,
            rx: l,
            sample: 0,
            t_sample: t,
            omega: (wave.carrier - 2.0 * wave.chirp_rate * (t - tau_kl_origin))
                / self.geometry.wave_speed,
            e_k,
            e_l,
            e_kl: bistatic_vector(e_k, e_l),
            tk_minus_tref: self.schedule.pulse_times[k] - self.schedule.reference_time,
            tau_k_origin,
        };
        Complex64::from_polar(1.0, -kernel_phase(&row, x, v, self.geometry.wave_speed))
    }

    /// High-fidelity variant of [`Self::phase_element`] for error studies:
    /// the Doppler ratio `(1 + v.e_k/c) / (1 - v.e_l/c)` is kept exact
    /// instead of expanded to first order in `|v|/c`. The operator apply
    /// paths always use the first-order kernel (the model the inversion is
    /// built on); this entry point quantifies what that expansion discards,
    /// which only becomes visible as `|v|` approaches the 1e-3 c cap.
    pub fn phase_element_exact_doppler(
        &self,
        k: usize,
        l: usize,
        t: f64,
        x: Vec2,
        v: Vec2,
    ) -> Complex64 {
        let c = self.geometry.wave_speed;
        let tx = self.schedule.pulse_tx[k];
        let wave = self.waveforms[tx];
        let e_k = self.geometry.tx_direction(tx);
        let e_l = self.geometry.rx_direction(l);
        let tau_k = self.geometry.origin_delays_tx[tx];
        let tau_l = self.geometry.origin_delays_rx[l];
        let tk_minus_tref = self.schedule.pulse_times[k] - self.schedule.reference_time;
        // scatterer position when this pulse reached the scene
        let x_k = x.add(v.scale(tk_minus_tref));
        // retarded-time solution: the delayed argument of the transmit
        // waveform, with the Doppler ratio unexpanded
        let doppler = (1.0 + v.dot(e_k) / c) / (1.0 - v.dot(e_l) / c);
        let arg = -tau_k + x_k.dot(e_k) / c + doppler * (t - tau_l + x_k.dot(e_l) / c);
        // demodulation against the origin-referenced carrier; the chirp's
        // quadratic phase error stays ignored, matching the baseband model
        let omega = wave.carrier - 2.0 * wave.chirp_rate * (t - (tau_k + tau_l));
        Complex64::from_polar(1.0, -omega * (arg - (t - (tau_k + tau_l))))
    }

    /// Single operator entry (measurement `m`, pixel `p`, hypothesis `n`) via
    /// the canonical kernel formula.
    pub fn entry(&self, m: usize, p: usize, n: usize) -> Complex64 {
        let row = &self.rows[m];
        let x = self.grid.center(p);
        let v = self.vgrid.velocity(n);
        Complex64::from_polar(1.0, -kernel_phase(row, x, v, self.geometry.wave_speed))
    }

    /// r = Phi s for an extended coefficient vector of length P*N. Linear,
    /// matrix-free; sparse coefficient vectors take a per-nonzero path.
    pub fn apply_forward(&self, coeffs: &[Complex64]) -> Result<PhaseHistory> {
        let values = self.apply_forward_values(coeffs)?;
        Ok(PhaseHistory {
            values,
            layout: self.layout,
        })
    }

    pub fn apply_forward_values(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        if coeffs.len() != self.extended_len() {
            return Err(Error::contract(format!(
                "coefficient vector has length {}, operator needs P*N = {}",
                coeffs.len(),
                self.extended_len()
            )));
        }
        let nnz = coeffs.iter().filter(|z| **z != Complex64::ZERO).count();
        if nnz * 8 <= self.extended_len() {
            Ok(self.forward_sparse(coeffs))
        } else {
            Ok(self.forward_dense(coeffs))
        }
    }

    fn forward_sparse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n_hyp = self.vgrid.len();
        // group nonzeros by pixel so the per-pixel dot products are shared
        let mut groups: Vec<(Vec2, Vec<(usize, Complex64)>)> = Vec::new();
        let mut last_p = usize::MAX;
        for (i, &z) in coeffs.iter().enumerate() {
            if z == Complex64::ZERO {
                continue;
            }
            let p = i / n_hyp;
            let n = i % n_hyp;
            if p != last_p {
                groups.push((self.grid.center(p), Vec::new()));
                last_p = p;
            }
            groups.last_mut().unwrap().1.push((n, z));
        }
        self.rows
            .par_iter()
            .enumerate()
            .map(|(m, row)| {
                let mut acc = Complex64::ZERO;
                for (x, items) in &groups {
                    let b1 = row.omega * x.dot(row.e_kl);
                    let b2 = x.dot(row.e_l);
                    for &(n, z) in items {
                        let idx = m * n_hyp + n;
                        let phase = b1 + self.a3[idx] + self.a2[idx] * b2;
                        acc += Complex64::from_polar(1.0, -phase) * z;
                    }
                }
                acc
            })
            .collect()
    }

    fn forward_dense(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n_hyp = self.vgrid.len();
        let nx = self.grid.nx;
        let ny = self.grid.ny;
        self.rows
            .par_iter()
            .enumerate()
            .map(|(m, _)| {
                let mut acc = Complex64::ZERO;
                for n in 0..n_hyp {
                    let idx = m * n_hyp + n;
                    let u0 = Complex64::from_polar(1.0, -self.c0[idx]);
                    let ux = Complex64::from_polar(1.0, -self.cx[idx]);
                    let uy = Complex64::from_polar(1.0, -self.cy[idx]);
                    let mut row_start = u0;
                    let mut p = 0usize;
                    for _iy in 0..ny {
                        let mut val = row_start;
                        for _ix in 0..nx {
                            acc += val * coeffs[p * n_hyp + n];
                            val *= ux;
                            p += 1;
                        }
                        row_start *= uy;
                    }
                }
                acc
            })
            .collect()
    }

    /// Exact conjugate-transpose of [`Self::apply_forward`]:
    /// `<Phi s, r> = <s, adjoint(r)>` for all s, r.
    pub fn apply_adjoint(&self, r: &PhaseHistory) -> Result<Vec<Complex64>> {
        if r.layout != self.layout {
            return Err(Error::contract(format!(
                "phase history layout {:?} does not match the operator layout {:?}",
                r.layout, self.layout
            )));
        }
        self.apply_adjoint_values(&r.values)
    }

    pub fn apply_adjoint_values(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        if r.len() != self.rows.len() {
            return Err(Error::contract(format!(
                "measurement vector has length {}, operator produces M = {}",
                r.len(),
                self.rows.len()
            )));
        }
        let n_hyp = self.vgrid.len();
        let pixels = self.grid.len();
        let m_total = self.rows.len();
        let nx = self.grid.nx;
        let ny = self.grid.ny;

        // One independent task per hypothesis: each sweeps the full raster
        // for every measurement with incremental rotators. Output slots are
        // written once, summation order over m is fixed, so results do not
        // depend on the thread schedule.
        let slices: Vec<Vec<Complex64>> = (0..n_hyp)
            .into_par_iter()
            .map(|n| {
                let mut acc = vec![Complex64::ZERO; pixels];
                for m in 0..m_total {
                    let idx = m * n_hyp + n;
                    // conj(exp(-j phase)) = exp(+j phase)
                    let v0 = Complex64::from_polar(1.0, self.c0[idx]) * r[m];
                    let vx = Complex64::from_polar(1.0, self.cx[idx]);
                    let vy = Complex64::from_polar(1.0, self.cy[idx]);
                    let mut row_start = v0;
                    let mut p = 0usize;
                    for _iy in 0..ny {
                        let mut val = row_start;
                        for _ix in 0..nx {
                            acc[p] += val;
                            val *= vx;
                            p += 1;
                        }
                        row_start *= vy;
                    }
                }
                acc
            })
            .collect();

        let mut out = vec![Complex64::ZERO; pixels * n_hyp];
        for (n, slice) in slices.iter().enumerate() {
            for (p, &z) in slice.iter().enumerate() {
                out[p * n_hyp + n] = z;
            }
        }
        Ok(out)
    }

    /// One operator column (all M kernel values for pixel `p`, hypothesis
    /// `n`), via the canonical kernel formula.
    pub fn column(&self, p: usize, n: usize) -> Vec<Complex64> {
        let x = self.grid.center(p);
        let v = self.vgrid.velocity(n);
        let c = self.geometry.wave_speed;
        self.rows
            .iter()
            .map(|row| Complex64::from_polar(1.0, -kernel_phase(row, x, v, c)))
            .collect()
    }

    /// Materialize the full M x (P*N) matrix. Test oracle only: entry count
    /// is capped, and nothing on the solve paths calls this.
    pub fn materialize_dense(&self) -> Result<DenseOperator> {
        let entries = self.rows.len() * self.extended_len();
        if entries > MAX_DENSE_ENTRIES {
            return Err(Error::contract(format!(
                "dense materialization of {entries} entries exceeds the cap of {MAX_DENSE_ENTRIES}"
            )));
        }
        let n_hyp = self.vgrid.len();
        let pixels = self.grid.len();
        let cols = self.extended_len();
        let c = self.geometry.wave_speed;
        let mut data = Vec::with_capacity(entries);
        for row in &self.rows {
            for p in 0..pixels {
                let x = self.grid.center(p);
                for n in 0..n_hyp {
                    let v = self.vgrid.velocity(n);
                    data.push(Complex64::from_polar(
                        1.0,
                        -kernel_phase(row, x, v, c),
                    ));
                }
            }
        }
        Ok(DenseOperator {
            rows: self.rows.len(),
            cols,
            data,
        })
    }

    /// Simulate the phase history of a ground-truth scene (arbitrary, not
    /// necessarily on-dictionary, velocities): the superposition of one
    /// kernel column per scatterer.
    pub fn simulate_scene(&self, scene: &SceneTruth) -> Result<PhaseHistory> {
        let c = self.geometry.wave_speed;
        let speed_cap = MAX_SPEED_FRACTION * c;
        for s in &scene.scatterers {
            if s.pixel >= self.grid.len() {
                return Err(Error::contract(format!(
                    "scatterer pixel {} outside the {}-pixel grid",
                    s.pixel,
                    self.grid.len()
                )));
            }
            if s.velocity.norm() >= speed_cap {
                return Err(Error::config(format!(
                    "scene velocity {} m/s violates |v| < 1e-3 c",
                    s.velocity.norm()
                )));
            }
        }
        let positions: Vec<Vec2> = scene.scatterers.iter().map(|s| self.grid.center(s.pixel)).collect();
        let values: Vec<Complex64> = self
            .rows
            .par_iter()
            .map(|row| {
                let mut acc = Complex64::ZERO;
                for (s, &x) in scene.scatterers.iter().zip(positions.iter()) {
                    let phase = kernel_phase(row, x, s.velocity, c);
                    acc += Complex64::from_polar(1.0, -phase) * s.reflectivity;
                }
                acc
            })
            .collect();
        Ok(PhaseHistory {
            values,
            layout: self.layout,
        })
    }
}

/// Dense matrix oracle produced by [`OperatorSpec::materialize_dense`].
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<Complex64>,
}

impl DenseOperator {
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn adjoint_vec(&self, y: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![Complex64::ZERO; self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (j, a) in row.iter().enumerate() {
                out[j] += a.conj() * y[i];
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.entry(i, j)).collect()
    }

    /// Largest normalized inner product between distinct columns.
    pub fn mutual_coherence(&self) -> f64 {
        let mut norms = vec![0.0; self.cols];
        for j in 0..self.cols {
            norms[j] = self.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        }
        let mut mu: f64 = 0.0;
        for j in 0..self.cols {
            let cj = self.column(j);
            for k in (j + 1)..self.cols {
                let ip: Complex64 = cj
                    .iter()
                    .zip(self.column(k).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                let denom = norms[j] * norms[k];
                if denom > 0.0 {
                    mu = mu.max(ip.norm() / denom);
                }
            }
        }
        mu
    }
}

/// A phase history with the noise realization that was added to it.
#[derive(Debug, Clone)]
pub struct NoisyPhaseHistory {
    pub phase_history: PhaseHistory,
    /// l2 norm of the injected noise vector (0 for infinite SNR).
    pub noise_l2: f64,
    pub snr_db: f64,
}

/// Add i.i.d. circular complex Gaussian noise rescaled so the realized SNR
/// `20 log10(|signal| / |noise|)` equals `snr_db` exactly. Infinite SNR
/// returns the input unchanged; a zero signal with finite SNR has no valid
/// scaling and is a contract error.
pub fn add_noise(r: &PhaseHistory, snr_db: f64, rng_seed: u64) -> Result<NoisyPhaseHistory> {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(NoisyPhaseHistory {
            phase_history: r.clone(),
            noise_l2: 0.0,
            snr_db,
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::contract(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let signal_norm = r.l2_norm();
    if signal_norm == 0.0 {
        return Err(Error::contract(
            "cannot set a finite SNR on an all-zero phase history".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut noise: Vec<Complex64> = (0..r.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let draw_norm = l2_norm(&noise);
    if draw_norm == 0.0 {
        return Err(Error::contract("degenerate all-zero noise draw".to_string()));
    }
    let target_norm = signal_norm * 10f64.powf(-snr_db / 20.0);
    let scale = target_norm / draw_norm;
    for z in noise.iter_mut() {
        *z *= scale;
    }
    let values: Vec<Complex64> = r
        .values
        .iter()
        .zip(noise.iter())
        .map(|(a, b)| a + b)
        .collect();
    Ok(NoisyPhaseHistory {
        phase_history: PhaseHistory {
            values,
            layout: r.layout,
        },
        noise_l2: target_norm,
        snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_velocity_grid, MagnitudeBand};
    use crate::geometry::{make_sensor_geometry, PairingMode};
    use crate::scene::{ObjectSpec, make_scene};
    use crate::waveform::{assign_frequencies, build_schedule, FrequencyMode, TimeRefPolicy};

    fn small_spec(seed: u64, n_hyp_bands: bool) -> OperatorSpec {
        let geometry =
            make_sensor_geometry(2, 3, 0.0, 0.6, PairingMode::AllPairs, seed).unwrap();
        let grid = PixelGrid::new(3, 2, 1.5, 1.0).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(2, 1.5e9, 40e6, FrequencyMode::RandomTones, tau_c, seed + 1)
                .unwrap();
        let schedule = build_schedule(2, 2e-3, 2, tau_c, 2, TimeRefPolicy::Start).unwrap();
        let vgrid = if n_hyp_bands {
            build_velocity_grid(
                &[MagnitudeBand { min: 8.0, max: 16.0, step: 8.0 }],
                &[0.4],
            )
            .unwrap()
        } else {
            VelocityGrid::static_only()
        };
        OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid).unwrap()
    }

    #[test]
    fn static_delay_examples() {
        let c = 3e8;
        assert_eq!(static_delay(Vec2::ZERO, Vec2::new(2.0, 0.0), c), 0.0);
        // orthogonal projection
        assert_eq!(static_delay(Vec2::new(0.0, 5.0), Vec2::new(2.0, 0.0), c), 0.0);
        // x = [3,4], e_kl = [2,0] -> -6/3e8 = -2e-8
        let d = static_delay(Vec2::new(3.0, 4.0), Vec2::new(2.0, 0.0), c);
        assert!((d + 2e-8).abs() < 1e-22);
    }

    #[test]
    fn motion_epsilon_examples() {
        let c = 3e8;
        assert_eq!(
            motion_epsilon(Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0), 0.0, 0.0, c),
            0.0
        );
        // only the transmitter delay survives
        assert_eq!(
            motion_epsilon(Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0), 0.0, 1e-6, c),
            -1e-6
        );
        // (1 + 0.02)/3e8
        let e = motion_epsilon(
            Vec2::new(1.0, 0.0),
            Vec2::new(10.0, 0.0),
            Vec2::new(1.0, 0.0),
            2e-3,
            0.0,
            c,
        );
        assert!((e - 1.02 / 3e8).abs() < 1e-22);
    }

    #[test]
    fn phase_element_identity_at_origin_static() {
        let spec = small_spec(3, true);
        let k = spec.phase_element(0, 0, 0.0, Vec2::ZERO, Vec2::ZERO);
        assert_eq!(k, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn phase_element_unit_modulus() {
        let spec = small_spec(4, true);
        for (x, v, t) in [
            (Vec2::new(1.2, -0.7), Vec2::new(9.0, 3.0), 2e-5),
            (Vec2::new(-2.0, 0.4), Vec2::ZERO, -4e-5),
            (Vec2::new(0.3, 0.9), Vec2::new(-20.0, 11.0), 0.0),
        ] {
            let k = spec.phase_element(1, 2, t, x, v);
            assert!((k.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_kernel_equals_static_kernel_exactly() {
        let spec = small_spec(5, true);
        for m in 0..spec.measurement_count() {
            let row = spec.rows()[m];
            for p in 0..spec.grid.len() {
                let x = spec.grid.center(p);
                let moving = spec.phase_element(row.pulse, row.rx, row.t_sample, x, Vec2::ZERO);
                // independently coded stationary Fourier kernel
                let spatial = row.omega * (x.x * row.e_kl.x + x.y * row.e_kl.y);
                let statick = Complex64::from_polar(1.0, -spatial);
                assert_eq!(moving, statick, "m={m} p={p}");
            }
        }
    }

    #[test]
    fn forward_linear_and_zero() {
        let spec = small_spec(6, true);
        let cols = spec.extended_len();
        let zero = vec![Complex64::ZERO; cols];
        let out = spec.apply_forward_values(&zero).unwrap();
        assert!(out.iter().all(|z| *z == Complex64::ZERO));

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s1: Vec<Complex64> = (0..cols)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let s2: Vec<Complex64> = (0..cols)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let a = Complex64::new(0.7, -0.3);
        let b = Complex64::new(-1.1, 0.2);
        let combo: Vec<Complex64> = s1.iter().zip(&s2).map(|(x, y)| a * x + b * y).collect();
        let f_combo = spec.apply_forward_values(&combo).unwrap();
        let f1 = spec.apply_forward_values(&s1).unwrap();
        let f2 = spec.apply_forward_values(&s2).unwrap();
        for m in 0..f_combo.len() {
            let expect = a * f1[m] + b * f2[m];
            assert!((f_combo[m] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn forward_canonical_basis_matches_column() {
        let spec = small_spec(7, true);
        let cols = spec.extended_len();
        let n_hyp = spec.vgrid.len();
        for j in [0usize, 3, cols - 1] {
            let mut e = vec![Complex64::ZERO; cols];
            e[j] = Complex64::new(1.0, 0.0);
            let out = spec.apply_forward_values(&e).unwrap();
            let col = spec.column(j / n_hyp, j % n_hyp);
            for m in 0..out.len() {
                assert!(
                    (out[m] - col[m]).norm() < 1e-10,
                    "column {j} row {m}: {} vs {}",
                    out[m],
                    col[m]
                );
            }
        }
    }

    #[test]
    fn sparse_and_dense_forward_agree() {
        let spec = small_spec(8, true);
        let cols = spec.extended_len();
        let mut coeffs = vec![Complex64::ZERO; cols];
        coeffs[1] = Complex64::new(1.0, 0.5);
        coeffs[cols / 2] = Complex64::new(-0.3, 0.8);
        let sparse = spec.forward_sparse(&coeffs);
        let dense = spec.forward_dense(&coeffs);
        for m in 0..sparse.len() {
            assert!((sparse[m] - dense[m]).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity_against_dense_oracle() {
        let spec = small_spec(9, true);
        let dense = spec.materialize_dense().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Complex64> {
            (0..n)
                .map(|_| {
                    Complex64::new(
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    )
                })
                .collect()
        };
        let s = draw(spec.extended_len(), &mut rng);
        let r = draw(spec.measurement_count(), &mut rng);
        let fwd = spec.apply_forward_values(&s).unwrap();
        let adj = spec.apply_adjoint_values(&r).unwrap();
        let lhs: Complex64 = fwd.iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
        let rhs: Complex64 = s.iter().zip(&adj).map(|(a, b)| a.conj() * b).sum();
        let scale = l2_norm(&s) * l2_norm(&r);
        assert!((lhs - rhs).norm() <= 1e-10 * scale);

        // and the dense oracle agrees with both paths
        let fwd_dense = dense.matvec(&s);
        for m in 0..fwd.len() {
            assert!((fwd[m] - fwd_dense[m]).norm() < 1e-9);
        }
        let adj_dense = dense.adjoint_vec(&r);
        for j in 0..adj.len() {
            assert!((adj[j] - adj_dense[j]).norm() < 1e-9);
        }
    }

    #[test]
    fn adjoint_zero_and_basis_rows() {
        let spec = small_spec(10, false);
        let m_total = spec.measurement_count();
        let zeros = vec![Complex64::ZERO; m_total];
        let adj = spec.apply_adjoint_values(&zeros).unwrap();
        assert!(adj.iter().all(|z| *z == Complex64::ZERO));

        // measurement basis vector returns the conjugated operator row
        let mut e = vec![Complex64::ZERO; m_total];
        e[2] = Complex64::new(1.0, 0.0);
        let adj = spec.apply_adjoint_values(&e).unwrap();
        for j in 0..spec.extended_len() {
            let n_hyp = spec.vgrid.len();
            let want = spec.entry(2, j / n_hyp, j % n_hyp).conj();
            assert!((adj[j] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn length_mismatches_are_contract_errors() {
        let spec = small_spec(11, true);
        assert!(spec.apply_forward_values(&[Complex64::ZERO]).is_err());
        assert!(spec.apply_adjoint_values(&[Complex64::ZERO]).is_err());
    }

    #[test]
    fn dense_cap_enforced() {
        let geometry =
            make_sensor_geometry(4, 40, 0.0, 0.7, PairingMode::AllPairs, 0).unwrap();
        let grid = PixelGrid::new(64, 64, 0.5, 0.5).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(4, 1.5e9, 0.0, FrequencyMode::SingleToneCommon, tau_c, 0).unwrap();
        let schedule = build_schedule(4, 2e-3, 5, tau_c, 4, TimeRefPolicy::Start).unwrap();
        let vgrid = build_velocity_grid(
            &[MagnitudeBand { min: 2.0, max: 20.0, step: 2.0 }],
            &[0.0, 1.0],
        )
        .unwrap();
        let spec = OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid).unwrap();
        assert!(spec.measurement_count() * spec.extended_len() > MAX_DENSE_ENTRIES);
        assert!(spec.materialize_dense().is_err());
    }

    #[test]
    fn hypothesis_speed_cap_enforced() {
        let geometry = make_sensor_geometry(1, 1, 0.0, 0.5, PairingMode::AllPairs, 0).unwrap();
        let grid = PixelGrid::new(2, 2, 1.0, 1.0).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(1, 1.5e9, 0.0, FrequencyMode::SingleToneCommon, tau_c, 0).unwrap();
        let schedule = build_schedule(1, 2e-3, 1, tau_c, 1, TimeRefPolicy::Start).unwrap();
        let vgrid = VelocityGrid::from_velocities(vec![Vec2::new(1e6, 0.0)]).unwrap();
        assert!(OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid).is_err());
    }

    #[test]
    fn simulate_on_grid_scatterer_matches_forward() {
        let spec = small_spec(12, true);
        let n_hyp = spec.vgrid.len();
        // a scatterer exactly on a dictionary hypothesis
        let scene = SceneTruth {
            scatterers: vec![crate::scene::Scatterer {
                pixel: 4,
                reflectivity: Complex64::new(0.8, -0.6),
                velocity: spec.vgrid.velocity(1),
            }],
            multi_scatterer: false,
        };
        let sim = spec.simulate_scene(&scene).unwrap();
        let mut coeffs = vec![Complex64::ZERO; spec.extended_len()];
        coeffs[4 * n_hyp + 1] = Complex64::new(0.8, -0.6);
        let fwd = spec.apply_forward_values(&coeffs).unwrap();
        for m in 0..fwd.len() {
            assert!((sim.values[m] - fwd[m]).norm() < 1e-10);
        }
    }

    #[test]
    fn layout_bijection() {
        let spec = small_spec(13, false);
        let layout = spec.layout();
        for m in 0..layout.len() {
            let (k, l, s) = layout.decode(m);
            assert_eq!(layout.encode(k, l, s), m);
            let row = spec.rows()[m];
            assert_eq!(row.pulse, k);
            assert_eq!(row.sample, s);
        }
    }

    #[test]
    fn monostatic_layout_uses_one_slot() {
        let geometry =
            make_sensor_geometry(3, 3, 0.0, 0.6, PairingMode::Monostatic, 2).unwrap();
        let grid = PixelGrid::new(2, 2, 1.0, 1.0).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(3, 1.5e9, 50e6, FrequencyMode::Chirp, tau_c, 0).unwrap();
        let schedule = build_schedule(3, 2e-3, 4, tau_c, 3, TimeRefPolicy::Start).unwrap();
        let spec = OperatorSpec::new(
            geometry,
            grid,
            waveforms,
            schedule,
            VelocityGrid::static_only(),
        )
        .unwrap();
        assert_eq!(spec.layout().rx_slots, 1);
        assert_eq!(spec.measurement_count(), 3 * 4);
        for row in spec.rows() {
            assert_eq!(row.rx, spec.schedule.pulse_tx[row.pulse]);
            // e_k == e_l in the monostatic tie
            assert_eq!(row.e_k, row.e_l);
        }
    }

    #[test]
    fn noise_hits_requested_snr_exactly() {
        let spec = small_spec(14, false);
        let scene = make_scene(
            &spec.grid,
            &[ObjectSpec { pixels: vec![(0, 0), (1, 1)], velocity: Vec2::ZERO }],
            3,
            false,
        )
        .unwrap();
        let r = spec.simulate_scene(&scene).unwrap();
        let noisy = add_noise(&r, 20.0, 77).unwrap();
        let noise: Vec<Complex64> = noisy
            .phase_history
            .values
            .iter()
            .zip(&r.values)
            .map(|(a, b)| a - b)
            .collect();
        let ratio = l2_norm(&noise) / r.l2_norm();
        assert!((ratio - 0.1).abs() < 1e-12, "noise ratio {ratio}");
        assert!((noisy.noise_l2 - l2_norm(&noise)).abs() < 1e-12);

        // determinism
        let again = add_noise(&r, 20.0, 77).unwrap();
        assert_eq!(noisy.phase_history.values, again.phase_history.values);

        // infinite SNR leaves the input untouched
        let clean = add_noise(&r, f64::INFINITY, 77).unwrap();
        assert_eq!(clean.phase_history.values, r.values);
        assert_eq!(clean.noise_l2, 0.0);
    }

    #[test]
    fn noise_on_zero_signal_rejected() {
        let layout = MeasurementLayout { n_pulses: 1, rx_slots: 2, n_f: 1 };
        let r = PhaseHistory {
            values: vec![Complex64::ZERO; 2],
            layout,
        };
        assert!(add_noise(&r, 20.0, 0).is_err());
    }

    #[test]
    fn cw_static_kernel_is_spatial_fourier() {
        // with a single tone and v = 0 the kernel is exp(-j (w/c) x.e_kl)
        let geometry = make_sensor_geometry(1, 1, 0.0, 0.5, PairingMode::AllPairs, 5).unwrap();
        let c = geometry.wave_speed;
        let grid = PixelGrid::new(2, 2, 1.0, 1.0).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(1, 1.5e9, 0.0, FrequencyMode::SingleToneCommon, tau_c, 0).unwrap();
        let schedule = build_schedule(1, 2e-3, 1, tau_c, 1, TimeRefPolicy::Start).unwrap();
        let spec = OperatorSpec::new(
            geometry,
            grid,
            waveforms,
            schedule,
            VelocityGrid::static_only(),
        )
        .unwrap();
        let row = spec.rows()[0];
        let x = Vec2::new(1.0, -0.5);
        let got = spec.phase_element(0, 0, 0.0, x, Vec2::ZERO);
        let w0 = std::f64::consts::TAU * 1.5e9;
        let want = Complex64::from_polar(1.0, -(w0 / c) * x.dot(row.e_kl));
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn exact_doppler_matches_first_order_at_radar_speeds() {
        let spec = small_spec(21, true);
        let x = Vec2::new(1.4, -0.8);
        for &speed in &[0.0, 12.0, 40.0] {
            let v = Vec2::new(speed * 0.8, speed * 0.6);
            let a = spec.phase_element(1, 2, 2e-5, x, v);
            let b = spec.phase_element_exact_doppler(1, 2, 2e-5, x, v);
            assert!(
                (a - b).norm() < 1e-6,
                "speed {speed}: first-order {a} vs exact {b}"
            );
        }
        // near the |v| < 1e-3 c cap the expansion error becomes visible
        let v = Vec2::new(2.0e5, 0.0);
        let a = spec.phase_element(1, 2, 2e-5, x, v);
        let b = spec.phase_element_exact_doppler(1, 2, 2e-5, x, v);
        assert!(
            (a - b).norm() > 1e-4,
            "expected a measurable divergence, got {}",
            (a - b).norm()
        );
    }

    #[test]
    fn exercise_origin_delays_in_epsilon() {
        // nonzero transmitter delay shifts the motion phase but not the
        // static one
        let geometry = make_sensor_geometry(1, 1, 0.0, 0.5, PairingMode::AllPairs, 6)
            .unwrap()
            .with_origin_delays(vec![1e-5], vec![0.0])
            .unwrap();
        let grid = PixelGrid::new(2, 2, 1.0, 1.0).unwrap();
        let tau_c = 1e-4;
        let waveforms =
            assign_frequencies(1, 1.5e9, 0.0, FrequencyMode::SingleToneCommon, tau_c, 0).unwrap();
        let schedule = build_schedule(1, 2e-3, 1, tau_c, 1, TimeRefPolicy::Start).unwrap();
        let spec = OperatorSpec::new(
            geometry,
            grid,
            waveforms,
            schedule,
            VelocityGrid::static_only(),
        )
        .unwrap();
        let x = Vec2::new(1.0, 0.0);
        let static_k = spec.phase_element(0, 0, 0.0, x, Vec2::ZERO);
        let moving_k = spec.phase_element(0, 0, 0.0, x, Vec2::new(10.0, 0.0));
        assert!((static_k.norm() - 1.0).abs() < 1e-12);
        assert!((moving_k / static_k).norm() > 0.0);
        // the delay enters via eps: compare against the explicit formula
        let row = spec.rows()[0];
        let v = Vec2::new(10.0, 0.0);
        let eps = motion_epsilon(x, v, row.e_l, row.tk_minus_tref, 1e-5, spec.geometry.wave_speed);
        let phase = row.omega * x.dot(row.e_kl)
            + row.omega * v.dot(row.e_kl) * (row.t_sample + row.tk_minus_tref + eps);
        let want = Complex64::from_polar(1.0, -phase);
        assert!((moving_k - want).norm() < 1e-12);
    }
}
