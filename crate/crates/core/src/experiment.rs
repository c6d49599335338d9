//! End-to-end runs: simulate -> invert -> evaluate -> emit, plus the
//! small-instance study comparing the convex pipeline against the exhaustive
//! l0 oracle.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    detection_metrics, kspace_samples, pixel_error, velocity_accuracy, MetricsReport,
};
use crate::config::{ExperimentConfig, ExperimentSetup};
use crate::dictionary::{
    build_velocity_grid, validate_grid_against_wrap, MagnitudeBand, WrapReport,
};
use crate::error::{Error, Result};
use crate::forward::{add_noise, NoisyPhaseHistory, OperatorSpec};
use crate::geometry::{make_sensor_geometry, PairingMode, PixelGrid, Vec2};
use crate::matched_filter::{mf_cube, mf_max_project, threshold_detect, Detection};
use crate::output;
use crate::solver::{
    oracle_l0, select_max, solve_l1, SolveDiagnostics, SolverConfig, SolverMode,
};

/// One reconstruction method's artifacts and scores.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub label: String,
    pub image: Vec<Complex64>,
    pub velocity_map: Vec<Vec2>,
    pub hypothesis: Vec<usize>,
    pub detections: Vec<Detection>,
    pub metrics: MetricsReport,
    pub diagnostics: Option<SolveDiagnostics>,
}

impl MethodResult {
    pub fn magnitude_image(&self) -> Vec<f64> {
        self.image.iter().map(|z| z.norm()).collect()
    }
}

/// In-memory outcome of one experiment.
#[derive(Debug)]
pub struct Execution {
    pub setup: ExperimentSetup,
    pub spec: OperatorSpec,
    pub noisy: NoisyPhaseHistory,
    pub truth_magnitudes: Vec<f64>,
    pub wrap_report: WrapReport,
    pub ocd: Option<MethodResult>,
    pub baseline: Option<MethodResult>,
    /// Zero-velocity slice of the baseline cube (the motion-ignored image).
    pub baseline_zero_slice: Option<Vec<f64>>,
    pub elapsed_seconds: f64,
}

impl Execution {
    /// False when any solve hit its iteration or bisection budget.
    pub fn solver_converged(&self) -> bool {
        self.ocd
            .as_ref()
            .and_then(|m| m.diagnostics.as_ref())
            .map_or(true, |d| d.converged)
    }
}

/// Largest instantaneous frequency any transmitter emits.
fn max_frequency_hz(setup: &ExperimentSetup) -> f64 {
    setup
        .waveforms
        .iter()
        .map(|w| w.carrier_hz() + w.bandwidth_hz() / 2.0)
        .fold(0.0, f64::max)
}

/// Run the configured experiment entirely in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<Execution> {
    let start = Instant::now();
    let setup = cfg.build()?;
    let spec = OperatorSpec::new(
        setup.geometry.clone(),
        setup.grid.clone(),
        setup.waveforms.clone(),
        setup.schedule.clone(),
        setup.vgrid.clone(),
    )?;

    let clean = spec.simulate_scene(&setup.scene)?;
    let noisy = add_noise(&clean, cfg.noise.snr_db, cfg.seeds.noise)?;
    let truth_magnitudes = setup.scene.magnitude_image(&setup.grid);
    let truth_pixels = setup.scene.occupied_pixels();

    let e_kl_max = spec
        .rows()
        .iter()
        .map(|r| r.e_kl.norm())
        .fold(0.0, f64::max);
    let wrap_report = validate_grid_against_wrap(
        &setup.vgrid,
        setup.schedule.cpi(),
        max_frequency_hz(&setup),
        e_kl_max,
        setup.geometry.wave_speed,
    )?;

    let tau_det = cfg.detect.threshold;
    let score = |label: &str,
                 image: &[Complex64],
                 velocity_map: &[Vec2],
                 hypothesis: &[usize],
                 diagnostics: Option<&SolveDiagnostics>|
     -> Result<MethodResult> {
        let detections = threshold_detect(image, velocity_map, tau_det)?;
        let mags: Vec<f64> = image.iter().map(|z| z.norm()).collect();
        let metrics = MetricsReport {
            method: label.to_string(),
            pixel_error: pixel_error(&truth_magnitudes, &mags)?,
            detection: detection_metrics(&truth_pixels, &detections),
            velocity: velocity_accuracy(&setup.scene, &setup.vgrid, &detections, hypothesis),
            detection_threshold: tau_det,
            solver_converged: diagnostics.map(|d| d.converged),
            solver_iterations: diagnostics.map(|d| d.iterations),
            residual_norm: diagnostics.map(|d| d.final_residual_norm),
        };
        Ok(MethodResult {
            label: label.to_string(),
            image: image.to_vec(),
            velocity_map: velocity_map.to_vec(),
            hypothesis: hypothesis.to_vec(),
            detections,
            metrics,
            diagnostics: diagnostics.cloned(),
        })
    };

    let ocd = if cfg.solver.enabled {
        let epsilon = match cfg.solver.epsilon_policy.as_str() {
            "noise_scaled" => (1.05 * noisy.noise_l2).powi(2),
            _ => cfg.solver.epsilon,
        };
        let solver_cfg = SolverConfig {
            mode: setup.solver_mode,
            epsilon,
            lambda: cfg.solver.lambda,
            max_iters: cfg.solver.max_iters,
            tol: cfg.solver.tol,
            backend: setup.backend,
        };
        let (extended, diagnostics) = solve_l1(&spec, &noisy.phase_history, &solver_cfg)?;
        let rec = select_max(extended, diagnostics);
        Some(score(
            "ocd",
            &rec.image,
            &rec.velocity_map,
            &rec.hypothesis,
            Some(&rec.diagnostics),
        )?)
    } else {
        None
    };

    let (baseline, baseline_zero_slice) = if cfg.baseline.enabled {
        let cube = mf_cube(&spec, &noisy.phase_history)?;
        let (image, velocity_map, hypothesis) = mf_max_project(&cube);
        let zero_slice: Vec<f64> = cube.slice(0).iter().map(|z| z.norm()).collect();
        (
            Some(score("mf", &image, &velocity_map, &hypothesis, None)?),
            Some(zero_slice),
        )
    } else {
        (None, None)
    };

    Ok(Execution {
        setup,
        spec,
        noisy,
        truth_magnitudes,
        wrap_report,
        ocd,
        baseline,
        baseline_zero_slice,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Summary of an emitted run.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub solver_converged: bool,
    pub execution: Execution,
}

/// Execute and write the full output file set. The directory is created;
/// every artifact is written atomically. Wall-clock timing goes to
/// `run_log.txt` only, so byte-identical reruns stay byte-identical.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let exec = execute(cfg)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    output::write_text(&out_dir.join("config.toml"), &cfg.to_toml_string())?;
    if cfg.output.emit_phase_history {
        output::write_phase_history_bin(
            &out_dir.join("phase_history.bin"),
            &exec.noisy.phase_history,
        )?;
    }
    if cfg.output.emit_phase_history_csv {
        output::write_phase_history_csv(
            &out_dir.join("phase_history.csv"),
            &exec.spec,
            &exec.noisy.phase_history,
        )?;
    }
    if cfg.output.emit_kspace {
        output::write_kspace_csv(&out_dir.join("kspace.csv"), &kspace_samples(&exec.spec))?;
    }
    output::write_velocity_grid_csv(&out_dir.join("velocity_grid.csv"), &exec.setup.vgrid)?;
    output::write_image_csv(
        &out_dir.join("truth_image.csv"),
        &exec.setup.grid,
        &exec.truth_magnitudes,
    )?;

    let mut reports = Vec::new();
    for method in [&exec.ocd, &exec.baseline].into_iter().flatten() {
        let label = &method.label;
        let mags = method.magnitude_image();
        output::write_image_csv(
            &out_dir.join(format!("{label}_image.csv")),
            &exec.setup.grid,
            &mags,
        )?;
        if cfg.output.emit_pgm {
            output::write_pgm16(
                &out_dir.join(format!("{label}_image.pgm")),
                &exec.setup.grid,
                &mags,
            )?;
        }
        output::write_velocity_map_csv(
            &out_dir.join(format!("{label}_velocity_map.csv")),
            &exec.setup.grid,
            &method.image,
            &method.velocity_map,
        )?;
        output::write_detections_csv(
            &out_dir.join(format!("{label}_detections.csv")),
            &exec.setup.grid,
            &method.detections,
        )?;
        if let Some(diag) = &method.diagnostics {
            output::write_diagnostics_csv(
                &out_dir.join(format!("{label}_diagnostics.csv")),
                &diag.objective_trace,
            )?;
        }
        reports.push(method.metrics.clone());
    }
    if let Some(zero) = &exec.baseline_zero_slice {
        output::write_image_csv(&out_dir.join("mf_zero_slice.csv"), &exec.setup.grid, zero)?;
    }

    let seeds = vec![
        ("geometry".to_string(), cfg.seeds.geometry),
        ("scene".to_string(), cfg.seeds.scene),
        ("frequencies".to_string(), cfg.seeds.frequencies),
        ("noise".to_string(), cfg.seeds.noise),
    ];
    output::write_text(
        &out_dir.join("metrics.txt"),
        &output::render_metrics(&reports, &seeds, &cfg.to_toml_string()),
    )?;

    let mut log = String::new();
    log.push_str(&format!("elapsed_seconds={}\n", exec.elapsed_seconds));
    log.push_str(&format!("measurements={}\n", exec.spec.measurement_count()));
    log.push_str(&format!("extended_columns={}\n", exec.spec.extended_len()));
    log.push_str(&format!(
        "wrap_check_passed={} worst_phase_span_rad={}\n",
        exec.wrap_report.passed, exec.wrap_report.worst_phase_span
    ));
    output::write_text(&out_dir.join("run_log.txt"), &log)?;

    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        solver_converged: exec.solver_converged(),
        execution: exec,
    })
}

/// Validation report for the `validate` CLI verb: field issues plus the
/// physics advisories, no side effects.
pub fn validation_report(cfg: &ExperimentConfig) -> Result<String> {
    let issues = cfg.issues();
    let mut s = String::new();
    if issues.is_empty() {
        s.push_str("config: ok\n");
    } else {
        for i in &issues {
            s.push_str(&format!("error: {i}\n"));
        }
        return Ok(s);
    }
    let setup = cfg.build()?;
    let spec = OperatorSpec::new(
        setup.geometry.clone(),
        setup.grid.clone(),
        setup.waveforms.clone(),
        setup.schedule.clone(),
        setup.vgrid.clone(),
    )?;
    let e_kl_max = spec
        .rows()
        .iter()
        .map(|r| r.e_kl.norm())
        .fold(0.0, f64::max);
    let wrap = validate_grid_against_wrap(
        &setup.vgrid,
        setup.schedule.cpi(),
        max_frequency_hz(&setup),
        e_kl_max,
        setup.geometry.wave_speed,
    )?;
    s.push_str(&format!(
        "measurements={} extended_columns={}\n",
        spec.measurement_count(),
        spec.extended_len()
    ));
    s.push_str(&format!("cpi_seconds={}\n", setup.schedule.cpi()));
    s.push_str(&format!(
        "speed_check: max scene speed {:.3} m/s, max hypothesis speed {:.3} m/s (cap {:.0} m/s)\n",
        setup.scene.max_speed(),
        setup.vgrid.max_speed(),
        crate::forward::MAX_SPEED_FRACTION * setup.geometry.wave_speed
    ));
    s.push_str(&format!(
        "wrap_check: worst phase span {:.4} rad over the CPI (limit pi), {}\n",
        wrap.worst_phase_span,
        if wrap.passed { "ok" } else { "WARNING: adjacent hypotheses may wrap" }
    ));
    Ok(s)
}

/// Per-instance outcome of the l0-oracle study.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub seed: u64,
    pub sparsity: usize,
    pub mutual_coherence: f64,
    pub oracle_support: Vec<usize>,
    pub recovered_support: Vec<usize>,
    pub matched: bool,
}

/// Aggregate of [`oracle_study`].
#[derive(Debug, Clone)]
pub struct OracleStudyReport {
    pub cases: Vec<OracleCase>,
    pub coherence_cutoff: f64,
    pub well_conditioned: usize,
    pub well_conditioned_recovered: usize,
    pub one_sparse_total: usize,
    pub one_sparse_recovered: usize,
}

impl OracleStudyReport {
    pub fn recovery_rate(&self) -> f64 {
        if self.well_conditioned == 0 {
            1.0
        } else {
            self.well_conditioned_recovered as f64 / self.well_conditioned as f64
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "instances={} coherence_cutoff={}\n",
            self.cases.len(),
            self.coherence_cutoff
        ));
        s.push_str(&format!(
            "well_conditioned={} recovered={} rate={:.3}\n",
            self.well_conditioned,
            self.well_conditioned_recovered,
            self.recovery_rate()
        ));
        s.push_str(&format!(
            "one_sparse={} one_sparse_recovered={}\n",
            self.one_sparse_total, self.one_sparse_recovered
        ));
        for c in &self.cases {
            s.push_str(&format!(
                "seed={} sparsity={} mu={:.3} oracle={:?} recovered={:?} match={}\n",
                c.seed, c.sparsity, c.mutual_coherence, c.oracle_support, c.recovered_support,
                c.matched
            ));
        }
        s
    }
}

/// A randomized test-scale operator: 2x2 pixel grid, two or three velocity
/// hypotheses, a handful of tone transmitters and receivers. Column count
/// stays at or below 12 so the exhaustive oracle applies.
pub fn random_small_spec(seed: u64) -> Result<OperatorSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tx = rng.random_range(2..=3usize);
    let n_rx = rng.random_range(3..=4usize);
    let n_extra_v = rng.random_range(1..=2usize);
    let geometry = make_sensor_geometry(
        n_tx,
        n_rx,
        0.0,
        45f64.to_radians(),
        PairingMode::AllPairs,
        rng.random(),
    )?;
    let grid = PixelGrid::new(2, 2, 2.0, 2.0)?;
    let tau_c = 1e-4;
    let waveforms = crate::waveform::assign_frequencies(
        n_tx,
        1.5e9,
        60e6,
        crate::waveform::FrequencyMode::RandomTones,
        tau_c,
        rng.random(),
    )?;
    let schedule = crate::waveform::build_schedule(
        n_tx,
        2e-3,
        1,
        tau_c,
        n_tx,
        crate::waveform::TimeRefPolicy::Start,
    )?;
    let vgrid = build_velocity_grid(
        &[MagnitudeBand {
            min: 11.0,
            max: 11.0 * n_extra_v as f64,
            step: 11.0,
        }],
        &[0.5],
    )?;
    OperatorSpec::new(geometry, grid, waveforms, schedule, vgrid)
}

/// Compare the convex l1 + selection pipeline against the exhaustive l0
/// oracle on randomized noiseless small instances. An instance counts as
/// well-conditioned when the dense operator's mutual coherence stays below
/// the recorded cutoff.
pub fn oracle_study(
    n_instances: usize,
    base_seed: u64,
    coherence_cutoff: f64,
) -> Result<OracleStudyReport> {
    let mut cases = Vec::with_capacity(n_instances);
    let mut well = 0;
    let mut well_rec = 0;
    let mut one_total = 0;
    let mut one_rec = 0;
    for i in 0..n_instances {
        let seed = base_seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0fac_1e55);
        let spec = random_small_spec(seed)?;
        let cols = spec.extended_len();
        let n_hyp = spec.vgrid.len();
        let dense = spec.materialize_dense()?;
        let mu = dense.mutual_coherence();

        let sparsity = rng.random_range(1..=2usize);
        // distinct pixels so the one-per-pixel oracle constraint matches
        let mut support: Vec<usize> = Vec::new();
        while support.len() < sparsity {
            let p = rng.random_range(0..spec.grid.len());
            let n = rng.random_range(0..n_hyp);
            let j = p * n_hyp + n;
            if !support.iter().any(|&k| k / n_hyp == p) {
                support.push(j);
            }
        }
        support.sort_unstable();
        let mut coeffs = vec![Complex64::ZERO; cols];
        for &j in &support {
            let mag = rng.random_range(0.7..1.3);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            coeffs[j] = Complex64::from_polar(mag, phase);
        }
        let r = spec.apply_forward(&coeffs)?;

        let delta = 1e-10 * r.l2_norm().powi(2);
        let oracle = oracle_l0(&dense, &r.values, delta, 2, Some(n_hyp))?;

        // pipeline: lightly-penalized l1, per-pixel selection, relative
        // magnitude gate
        let corr = spec.apply_adjoint_values(&r.values)?;
        let lambda = 1e-3 * 2.0 * corr.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let cfg = SolverConfig {
            mode: SolverMode::LambdaPenalized,
            epsilon: 0.0,
            lambda: lambda.max(1e-12),
            max_iters: 4000,
            tol: 1e-10,
            backend: crate::solver::Backend::ProximalGradient,
        };
        let (extended, diag) = solve_l1(&spec, &r, &cfg)?;
        let rec = select_max(extended, diag);
        let max_mag = rec.image.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut recovered: Vec<usize> = rec
            .image
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 0.2 * max_mag)
            .map(|(p, _)| p * n_hyp + rec.hypothesis[p])
            .collect();
        recovered.sort_unstable();

        let matched = recovered == oracle.support;
        if mu <= coherence_cutoff {
            well += 1;
            if matched {
                well_rec += 1;
            }
            if sparsity == 1 {
                one_total += 1;
                if matched {
                    one_rec += 1;
                }
            }
        }
        cases.push(OracleCase {
            seed,
            sparsity,
            mutual_coherence: mu,
            oracle_support: oracle.support,
            recovered_support: recovered,
            matched,
        });
    }
    Ok(OracleStudyReport {
        cases,
        coherence_cutoff,
        well_conditioned: well,
        well_conditioned_recovered: well_rec,
        one_sparse_total: one_total,
        one_sparse_recovered: one_rec,
    })
}
