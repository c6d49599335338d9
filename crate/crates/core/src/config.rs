//! Experiment configuration: a self-describing TOML file from which a run is
//! reproducible given its seeds alone. See `docs/CONFIG.md` in the repository
//! root for the schema reference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{build_velocity_grid, MagnitudeBand, VelocityGrid};
use crate::error::{Error, Result};
use crate::geometry::{
    make_sensor_geometry, unit_direction, PairingMode, PixelGrid, SensorGeometry,
};
use crate::scene::{make_scene, ObjectSpec, SceneTruth};
use crate::solver::{Backend, SolverMode};
use crate::waveform::{
    assign_frequencies, build_schedule, FrequencyMode, PulseSchedule, TimeRefPolicy, Waveform,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub title: String,
    pub geometry: GeometrySection,
    pub waveform: WaveformSection,
    pub schedule: ScheduleSection,
    pub grid: GridSection,
    pub scene: SceneSection,
    pub dictionary: DictionarySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub n_tx: usize,
    pub n_rx: usize,
    #[serde(default)]
    pub cone_center_deg: f64,
    pub cone_width_deg: f64,
    /// "multistatic" (all pairs) or "monostatic" (tied elements).
    #[serde(default = "default_pairing")]
    pub pairing: String,
}

fn default_pairing() -> String {
    "multistatic".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    pub f0_hz: f64,
    #[serde(default)]
    pub bandwidth_hz: f64,
    /// "single_tone_common", "random_tones" or "chirp".
    pub mode: String,
    #[serde(default = "default_pulse_duration")]
    pub pulse_duration_s: f64,
}

fn default_pulse_duration() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_pulses: usize,
    pub pri_s: f64,
    #[serde(default = "default_one")]
    pub samples_per_pulse: usize,
    /// "start", "center" or explicit seconds.
    #[serde(default = "default_tref")]
    pub t_ref: TRef,
}

fn default_one() -> usize {
    1
}

fn default_tref() -> TRef {
    TRef::Named("start".to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TRef {
    Named(String),
    Seconds(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub dx_m: f64,
    pub dy_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    #[serde(default)]
    pub multi_scatterer: bool,
    #[serde(default)]
    pub objects: Vec<ObjectSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSection {
    /// Explicit pixel list [[ix, iy], ...]; exactly one of `pixels`/`rect`.
    #[serde(default)]
    pub pixels: Option<Vec<[usize; 2]>>,
    /// Rectangular cluster [ix0, iy0, width, height].
    #[serde(default)]
    pub rect: Option<[usize; 4]>,
    pub velocity: VelocitySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub magnitude_mps: f64,
    #[serde(default)]
    pub angle_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySection {
    #[serde(default)]
    pub angles_rad: Vec<f64>,
    #[serde(default)]
    pub bands: Vec<BandSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub min_mps: f64,
    pub max_mps: f64,
    pub step_mps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// "epsilon_constrained" or "lambda_penalized".
    #[serde(default = "default_solver_mode")]
    pub mode: String,
    /// "noise_scaled" (eps = 1.05^2 |noise|^2 from the recorded realization)
    /// or "explicit".
    #[serde(default = "default_epsilon_policy")]
    pub epsilon_policy: String,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_backend")]
    pub backend: String,
}

fn default_true() -> bool {
    true
}
fn default_solver_mode() -> String {
    "epsilon_constrained".to_string()
}
fn default_epsilon_policy() -> String {
    "noise_scaled".to_string()
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_max_iters() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-5
}
fn default_backend() -> String {
    "proximal_gradient".to_string()
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            enabled: true,
            mode: default_solver_mode(),
            epsilon_policy: default_epsilon_policy(),
            epsilon: 0.0,
            lambda: default_lambda(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            backend: default_backend(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default)]
    pub enabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    #[serde(default = "default_detect_threshold")]
    pub threshold: f64,
}

fn default_detect_threshold() -> f64 {
    0.2
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            threshold: default_detect_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Omit (or set to "inf") for a noiseless run.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
}

fn default_snr() -> f64 {
    f64::INFINITY
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { snr_db: default_snr() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    #[serde(default = "default_seed")]
    pub geometry: u64,
    #[serde(default = "default_seed")]
    pub scene: u64,
    #[serde(default = "default_seed")]
    pub frequencies: u64,
    #[serde(default = "default_seed")]
    pub noise: u64,
}

fn default_seed() -> u64 {
    1
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection {
            geometry: 1,
            scene: 1,
            frequencies: 1,
            noise: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_true")]
    pub emit_phase_history: bool,
    #[serde(default)]
    pub emit_phase_history_csv: bool,
    #[serde(default = "default_true")]
    pub emit_kspace: bool,
    #[serde(default = "default_true")]
    pub emit_pgm: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            emit_phase_history: true,
            emit_phase_history_csv: false,
            emit_kspace: true,
            emit_pgm: true,
        }
    }
}

/// Everything materialized from a config, ready for simulation.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub geometry: SensorGeometry,
    pub grid: PixelGrid,
    pub scene: SceneTruth,
    pub waveforms: Vec<Waveform>,
    pub schedule: PulseSchedule,
    pub vgrid: VelocityGrid,
    pub solver_mode: SolverMode,
    pub backend: Backend,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    /// Replace all four seeds with a master seed (geometry = s, scene = s+1,
    /// frequencies = s+2, noise = s+3).
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds.geometry = seed;
        self.seeds.scene = seed.wrapping_add(1);
        self.seeds.frequencies = seed.wrapping_add(2);
        self.seeds.noise = seed.wrapping_add(3);
    }

    /// Every schema violation in the file, not just the first.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g = &self.geometry;
        if g.n_tx == 0 {
            out.push("geometry.n_tx: need at least one transmitter".into());
        }
        if g.n_rx == 0 {
            out.push("geometry.n_rx: need at least one receiver".into());
        }
        if !(g.cone_width_deg > 0.0 && g.cone_width_deg <= 90.0) {
            out.push(format!(
                "geometry.cone_width_deg: must lie in (0, 90], got {}",
                g.cone_width_deg
            ));
        }
        match g.pairing.as_str() {
            "multistatic" => {}
            "monostatic" => {
                if g.n_tx != g.n_rx {
                    out.push(format!(
                        "geometry.pairing: monostatic ties elements, so n_rx ({}) must equal n_tx ({})",
                        g.n_rx, g.n_tx
                    ));
                }
            }
            other => out.push(format!(
                "geometry.pairing: unknown mode {other:?} (multistatic | monostatic)"
            )),
        }

        let w = &self.waveform;
        if !(w.f0_hz > 0.0) {
            out.push(format!("waveform.f0_hz: must be positive, got {}", w.f0_hz));
        }
        if w.bandwidth_hz < 0.0 {
            out.push(format!(
                "waveform.bandwidth_hz: must be nonnegative, got {}",
                w.bandwidth_hz
            ));
        }
        if !matches!(
            w.mode.as_str(),
            "single_tone_common" | "random_tones" | "chirp"
        ) {
            out.push(format!(
                "waveform.mode: unknown mode {:?} (single_tone_common | random_tones | chirp)",
                w.mode
            ));
        }
        if !(w.pulse_duration_s > 0.0) {
            out.push("waveform.pulse_duration_s: must be positive".into());
        }

        let s = &self.schedule;
        if s.n_pulses == 0 {
            out.push("schedule.n_pulses: need at least one pulse".into());
        }
        if !(s.pri_s > 0.0) {
            out.push("schedule.pri_s: must be positive".into());
        }
        if s.samples_per_pulse == 0 {
            out.push("schedule.samples_per_pulse: need at least one sample".into());
        }
        if w.pulse_duration_s > s.pri_s {
            out.push(format!(
                "schedule: pulse duration {} s exceeds the repetition interval {} s",
                w.pulse_duration_s, s.pri_s
            ));
        }
        if let TRef::Named(name) = &s.t_ref {
            if !matches!(name.as_str(), "start" | "center") {
                out.push(format!(
                    "schedule.t_ref: unknown policy {name:?} (start | center | seconds)"
                ));
            }
        }
        if g.pairing == "multistatic" && s.n_pulses % g.n_tx.max(1) != 0 {
            out.push(format!(
                "schedule.n_pulses: {} is not a multiple of n_tx = {}; TDMA round-robin needs full sweeps",
                s.n_pulses, g.n_tx
            ));
        }

        let gr = &self.grid;
        if gr.nx == 0 || gr.ny == 0 {
            out.push("grid: pixel counts must be positive".into());
        }
        if !(gr.dx_m > 0.0 && gr.dy_m > 0.0) {
            out.push("grid: pixel sizes must be positive".into());
        }

        for (i, obj) in self.scene.objects.iter().enumerate() {
            match (&obj.pixels, &obj.rect) {
                (Some(_), Some(_)) => out.push(format!(
                    "scene.objects[{i}]: give either pixels or rect, not both"
                )),
                (None, None) => out.push(format!(
                    "scene.objects[{i}]: needs a pixel list or a rect"
                )),
                (Some(px), None) if px.is_empty() => {
                    out.push(format!("scene.objects[{i}]: pixel list is empty"))
                }
                (None, Some(r)) if r[2] == 0 || r[3] == 0 => {
                    out.push(format!("scene.objects[{i}]: rect has zero area"))
                }
                _ => {}
            }
            if obj.velocity.magnitude_mps < 0.0 {
                out.push(format!(
                    "scene.objects[{i}].velocity: magnitude must be nonnegative"
                ));
            }
            let speed = obj.velocity.magnitude_mps;
            if speed >= crate::forward::MAX_SPEED_FRACTION * crate::geometry::SPEED_OF_LIGHT {
                out.push(format!(
                    "scene.objects[{i}].velocity: |v| = {speed} m/s violates |v| < 1e-3 c"
                ));
            }
        }

        for (i, b) in self.dictionary.bands.iter().enumerate() {
            if !(b.step_mps > 0.0) {
                out.push(format!("dictionary.bands[{i}]: step must be positive"));
            }
            if b.max_mps < b.min_mps || b.min_mps < 0.0 {
                out.push(format!(
                    "dictionary.bands[{i}]: need 0 <= min <= max, got [{}, {}]",
                    b.min_mps, b.max_mps
                ));
            }
            if b.max_mps >= crate::forward::MAX_SPEED_FRACTION * crate::geometry::SPEED_OF_LIGHT {
                out.push(format!(
                    "dictionary.bands[{i}]: max speed {} m/s violates |v| < 1e-3 c",
                    b.max_mps
                ));
            }
        }
        if !self.dictionary.bands.is_empty() && self.dictionary.angles_rad.is_empty() {
            out.push("dictionary.angles_rad: bands given but no angles".into());
        }

        let sv = &self.solver;
        if !matches!(sv.mode.as_str(), "epsilon_constrained" | "lambda_penalized") {
            out.push(format!(
                "solver.mode: unknown mode {:?} (epsilon_constrained | lambda_penalized)",
                sv.mode
            ));
        }
        if !matches!(sv.epsilon_policy.as_str(), "noise_scaled" | "explicit") {
            out.push(format!(
                "solver.epsilon_policy: unknown policy {:?} (noise_scaled | explicit)",
                sv.epsilon_policy
            ));
        }
        if sv.epsilon_policy == "explicit" && sv.epsilon < 0.0 {
            out.push("solver.epsilon: must be nonnegative".into());
        }
        if sv.mode == "lambda_penalized" && !(sv.lambda > 0.0) {
            out.push("solver.lambda: must be positive in penalized mode".into());
        }
        if sv.max_iters == 0 {
            out.push("solver.max_iters: must be positive".into());
        }
        if !(sv.tol > 0.0) {
            out.push("solver.tol: must be positive".into());
        }
        if !matches!(sv.backend.as_str(), "proximal_gradient" | "interior_point") {
            out.push(format!(
                "solver.backend: unknown backend {:?} (proximal_gradient | interior_point)",
                sv.backend
            ));
        }
        if sv.epsilon_policy == "noise_scaled"
            && sv.mode == "epsilon_constrained"
            && self.noise.snr_db.is_infinite()
        {
            out.push(
                "solver.epsilon_policy: noise_scaled needs a finite noise.snr_db; \
                 use an explicit epsilon for noiseless runs"
                    .into(),
            );
        }

        if self.detect.threshold < 0.0 {
            out.push("detect.threshold: must be nonnegative".into());
        }
        if !self.noise.snr_db.is_finite() && !(self.noise.snr_db > 0.0) {
            out.push(format!("noise.snr_db: must be finite or +inf, got {}", self.noise.snr_db));
        }
        if !self.solver.enabled && !self.baseline.enabled {
            out.push("run: both the sparse solver and the baseline are disabled".into());
        }
        out
    }

    /// Materialize the geometry, scene, waveforms, schedule and dictionary.
    /// Fails with the full issue list when the file is invalid.
    pub fn build(&self) -> Result<ExperimentSetup> {
        let issues = self.issues();
        if !issues.is_empty() {
            return Err(Error::ConfigList(issues));
        }
        let pairing = match self.geometry.pairing.as_str() {
            "monostatic" => PairingMode::Monostatic,
            _ => PairingMode::AllPairs,
        };
        let geometry = make_sensor_geometry(
            self.geometry.n_tx,
            self.geometry.n_rx,
            self.geometry.cone_center_deg.to_radians(),
            self.geometry.cone_width_deg.to_radians(),
            pairing,
            self.seeds.geometry,
        )?;
        let grid = PixelGrid::new(self.grid.nx, self.grid.ny, self.grid.dx_m, self.grid.dy_m)?;
        let objects: Vec<ObjectSpec> = self
            .scene
            .objects
            .iter()
            .map(|o| {
                let velocity = unit_direction(o.velocity.angle_rad).scale(o.velocity.magnitude_mps);
                match (&o.pixels, &o.rect) {
                    (Some(px), None) => ObjectSpec {
                        pixels: px.iter().map(|&[ix, iy]| (ix, iy)).collect(),
                        velocity,
                    },
                    (None, Some([ix0, iy0, w, h])) => {
                        ObjectSpec::rect(*ix0, *iy0, *w, *h, velocity)
                    }
                    _ => unreachable!("validated above"),
                }
            })
            .collect();
        let scene = make_scene(&grid, &objects, self.seeds.scene, self.scene.multi_scatterer)?;
        let mode = match self.waveform.mode.as_str() {
            "single_tone_common" => FrequencyMode::SingleToneCommon,
            "random_tones" => FrequencyMode::RandomTones,
            _ => FrequencyMode::Chirp,
        };
        let waveforms = assign_frequencies(
            self.geometry.n_tx,
            self.waveform.f0_hz,
            self.waveform.bandwidth_hz,
            mode,
            self.waveform.pulse_duration_s,
            self.seeds.frequencies,
        )?;
        let t_ref = match &self.schedule.t_ref {
            TRef::Named(n) if n == "center" => TimeRefPolicy::Center,
            TRef::Named(_) => TimeRefPolicy::Start,
            TRef::Seconds(s) => TimeRefPolicy::Explicit(*s),
        };
        let schedule = build_schedule(
            self.schedule.n_pulses,
            self.schedule.pri_s,
            self.schedule.samples_per_pulse,
            self.waveform.pulse_duration_s,
            self.geometry.n_tx,
            t_ref,
        )?;
        let bands: Vec<MagnitudeBand> = self
            .dictionary
            .bands
            .iter()
            .map(|b| MagnitudeBand {
                min: b.min_mps,
                max: b.max_mps,
                step: b.step_mps,
            })
            .collect();
        let vgrid = build_velocity_grid(&bands, &self.dictionary.angles_rad)?;
        let solver_mode = match self.solver.mode.as_str() {
            "lambda_penalized" => SolverMode::LambdaPenalized,
            _ => SolverMode::EpsilonConstrained,
        };
        let backend = match self.solver.backend.as_str() {
            "interior_point" => Backend::InteriorPoint,
            _ => Backend::ProximalGradient,
        };
        Ok(ExperimentSetup {
            geometry,
            grid,
            scene,
            waveforms,
            schedule,
            vgrid,
            solver_mode,
            backend,
        })
    }
}

/// Names of the configurations shipped in `presets/`.
pub const PRESET_NAMES: &[&str] = &[
    "desk-small",
    "multistatic-ocd-static",
    "multistatic-ocd-ignored",
    "multistatic-ocd-dynamic",
    "monostatic-ocd-static",
    "monostatic-ocd-ignored",
    "monostatic-ocd-dynamic",
    "multistatic-mf-400",
    "multistatic-mf-12000",
];

/// The embedded TOML text of a shipped preset.
pub fn preset_toml(name: &str) -> Option<&'static str> {
    match name {
        "desk-small" => Some(include_str!("../presets/desk-small.toml")),
        "multistatic-ocd-static" => Some(include_str!("../presets/multistatic-ocd-static.toml")),
        "multistatic-ocd-ignored" => Some(include_str!("../presets/multistatic-ocd-ignored.toml")),
        "multistatic-ocd-dynamic" => Some(include_str!("../presets/multistatic-ocd-dynamic.toml")),
        "monostatic-ocd-static" => Some(include_str!("../presets/monostatic-ocd-static.toml")),
        "monostatic-ocd-ignored" => Some(include_str!("../presets/monostatic-ocd-ignored.toml")),
        "monostatic-ocd-dynamic" => Some(include_str!("../presets/monostatic-ocd-dynamic.toml")),
        "multistatic-mf-400" => Some(include_str!("../presets/multistatic-mf-400.toml")),
        "multistatic-mf-12000" => Some(include_str!("../presets/multistatic-mf-12000.toml")),
        _ => None,
    }
}

pub fn load_preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_toml(name).ok_or_else(|| {
        Error::config(format!(
            "unknown preset {name:?}; available: {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::from_toml_str(text)
}
