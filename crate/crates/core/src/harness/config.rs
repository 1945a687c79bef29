//! Run configuration: TOML with dotted keys, every section optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::grid::NuclearGrid;
use crate::models::{DiatomicParams, ModelKind, ModelSpec};
use crate::operators::DENSE_CAP;
use crate::propagation::{Backend, KrylovSettings};

/// Smallest `max κ / min κ` accepted for a sweep.
pub const MIN_SWEEP_SPAN: f64 = 8.0;
pub const MIN_SWEEP_POINTS: usize = 4;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    dynamics: RawDynamics,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    identities: RawIdentities,
    #[serde(default)]
    naip: RawNaip,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    delta_floor: Option<f64>,
    energies: Option<Vec<f64>>,
    amplitude: Option<f64>,
    coupling: Option<f64>,
    levels: Option<usize>,
    spacing: Option<f64>,
    electron_points: Option<usize>,
    electron_box: Option<f64>,
    charge: Option<f64>,
    soft_core: Option<f64>,
    form_radius: Option<f64>,
    bond_length: Option<f64>,
    bond_amplitude: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    m: Option<usize>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "L")]
    length: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    kappa: Option<Vec<f64>>,
    floor_check: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    t_final: Option<f64>,
    tau: Option<f64>,
    dt: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    center: Option<f64>,
    width: Option<f64>,
    momentum: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    backend: Option<Backend>,
    krylov_dim: Option<usize>,
    krylov_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    delta_min: Option<f64>,
    unitarity: Option<f64>,
    gauge: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    csv_wall_clock: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdentities {
    #[serde(rename = "N")]
    n: Option<usize>,
    kappa: Option<f64>,
    probes: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNaip {
    instances: Option<usize>,
    n: Option<usize>,
    times: Option<Vec<f64>>,
    quadrature: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<NuclearGrid> {
        NuclearGrid::new(self.m, self.n, self.length)
    }

    pub fn refined(&self) -> GridSpec {
        GridSpec {
            n: 2 * self.n,
            ..self.clone()
        }
    }

    pub fn with_points(&self, n: usize) -> GridSpec {
        GridSpec { n, ..self.clone() }
    }

    pub fn dense_dim(&self, d: usize) -> usize {
        self.n.pow(self.m as u32) * d
    }
}

/// Gaussian initial nuclear state; the momentum enters as `e^{i p₀ y / κ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub delta_min: f64,
    pub unitarity: f64,
    pub gauge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentitySettings {
    /// Grid size for the time-stepped checks.
    pub n: usize,
    pub kappa: f64,
    /// Random states per randomized check.
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NaipSettings {
    pub instances: usize,
    pub n: usize,
    pub times: Vec<f64>,
    pub quadrature: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    /// Descending.
    pub kappas: Vec<f64>,
    pub floor_check: bool,
    pub t_final: f64,
    pub tau: f64,
    pub dt: f64,
    pub initial: PacketSpec,
    pub backend: Backend,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub identities: IdentitySettings,
    pub naip: NaipSettings,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub csv_wall_clock: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

fn model_from_raw(raw: RawModel) -> Result<ModelSpec> {
    let kind = raw.kind.clone().unwrap_or_else(|| "avoided_crossing".into());
    let allowed: &[&str] = match kind.as_str() {
        "decoupled" => &["energies"],
        "avoided_crossing" => &["amplitude", "coupling"],
        "shifted_levels" => &["levels", "spacing", "amplitude", "coupling"],
        "smeared_diatomic" => &[
            "electron_points",
            "electron_box",
            "charge",
            "soft_core",
            "form_radius",
            "bond_length",
            "bond_amplitude",
        ],
        other => return Err(LabError::Config(format!("unknown model.kind {other:?}"))),
    };
    let present = [
        ("energies", raw.energies.is_some()),
        ("amplitude", raw.amplitude.is_some()),
        ("coupling", raw.coupling.is_some()),
        ("levels", raw.levels.is_some()),
        ("spacing", raw.spacing.is_some()),
        ("electron_points", raw.electron_points.is_some()),
        ("electron_box", raw.electron_box.is_some()),
        ("charge", raw.charge.is_some()),
        ("soft_core", raw.soft_core.is_some()),
        ("form_radius", raw.form_radius.is_some()),
        ("bond_length", raw.bond_length.is_some()),
        ("bond_amplitude", raw.bond_amplitude.is_some()),
    ];
    if let Some((key, _)) = present.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(LabError::Config(format!("model.{key} does not apply to model.kind = {kind:?}")));
    }
    let mut spec = match kind.as_str() {
        "decoupled" => ModelSpec::decoupled(raw.energies.unwrap_or_else(|| vec![0.0, 1.0])),
        "avoided_crossing" => ModelSpec::avoided_crossing(raw.amplitude.unwrap_or(1.0), raw.coupling.unwrap_or(0.5)),
        "shifted_levels" => {
            let mut s = ModelSpec::shifted_levels(raw.levels.unwrap_or(3));
            if let ModelKind::ShiftedLevels {
                spacing,
                amplitude,
                coupling,
                ..
            } = &mut s.kind
            {
                *spacing = raw.spacing.unwrap_or(*spacing);
                *amplitude = raw.amplitude.unwrap_or(*amplitude);
                *coupling = raw.coupling.unwrap_or(*coupling);
            }
            s
        }
        _ => {
            let d = DiatomicParams::default();
            ModelSpec::smeared_diatomic(DiatomicParams {
                electron_points: raw.electron_points.unwrap_or(d.electron_points),
                electron_box: raw.electron_box.unwrap_or(d.electron_box),
                charge: raw.charge.unwrap_or(d.charge),
                soft_core: raw.soft_core.unwrap_or(d.soft_core),
                form_radius: raw.form_radius.unwrap_or(d.form_radius),
                bond_length: raw.bond_length.unwrap_or(d.bond_length),
                bond_amplitude: raw.bond_amplitude.unwrap_or(d.bond_amplitude),
            })
        }
    };
    if let Some(floor) = raw.delta_floor {
        spec.delta_floor = floor;
    }
    spec.validate()?;
    Ok(spec)
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let model = model_from_raw(raw.model)?;
        let krylov = KrylovSettings::default();
        let cfg = SimConfig {
            tolerances: Tolerances {
                delta_min: raw.tolerances.delta_min.unwrap_or(model.delta_floor),
                unitarity: raw.tolerances.unitarity.unwrap_or(1e-10),
                gauge: raw.tolerances.gauge.unwrap_or(crate::bundle::CONNECTION_TOL),
            },
            model,
            grid: GridSpec {
                m: raw.grid.m.unwrap_or(1),
                n: raw.grid.n.unwrap_or(256),
                length: raw.grid.length.unwrap_or(12.0),
            },
            kappas: raw.sweep.kappa.unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]),
            floor_check: raw.sweep.floor_check.unwrap_or(true),
            t_final: raw.dynamics.t_final.unwrap_or(1.0),
            tau: raw.dynamics.tau.unwrap_or(1.0),
            dt: raw.dynamics.dt.unwrap_or(1.0 / 512.0),
            initial: PacketSpec {
                center: raw.initial.center.unwrap_or(-1.5),
                width: raw.initial.width.unwrap_or(0.8),
                momentum: raw.initial.momentum.unwrap_or(1.0),
            },
            backend: raw.solver.backend.unwrap_or_default(),
            krylov_dim: raw.solver.krylov_dim.unwrap_or(krylov.max_dim),
            krylov_tol: raw.solver.krylov_tol.unwrap_or(krylov.tol),
            seed: raw.seed.unwrap_or(0),
            identities: IdentitySettings {
                n: raw.identities.n.unwrap_or(128),
                kappa: raw.identities.kappa.unwrap_or(0.1),
                probes: raw.identities.probes.unwrap_or(3),
            },
            naip: NaipSettings {
                instances: raw.naip.instances.unwrap_or(100),
                n: raw.naip.n.unwrap_or(8),
                times: raw.naip.times.unwrap_or_else(|| vec![0.3, 1.0, 2.0]),
                quadrature: raw.naip.quadrature.unwrap_or(64),
            },
            output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            csv_wall_clock: raw.output.csv_wall_clock.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that need no model build.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        self.grid.build()?;
        self.grid.with_points(self.identities.n).build()?;
        let d = self.model.fiber_dim();
        for n in [self.grid.n, self.identities.n] {
            let dim = self.grid.with_points(n).dense_dim(d);
            if dim > DENSE_CAP {
                return Err(LabError::DenseCap { dim, cap: DENSE_CAP });
            }
        }
        let ks = &self.kappas;
        if ks.len() < MIN_SWEEP_POINTS {
            return bad(format!("sweep.kappa needs at least {MIN_SWEEP_POINTS} values (got {})", ks.len()));
        }
        if ks.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return bad("sweep.kappa values must lie in (0, 1)".into());
        }
        if ks.windows(2).any(|w| w[1] >= w[0]) {
            return bad("sweep.kappa must be strictly descending".into());
        }
        let span = ks[0] / ks[ks.len() - 1];
        if span < MIN_SWEEP_SPAN * (1.0 - 1e-12) {
            return bad(format!("sweep.kappa spans a factor {span:.3}; at least {MIN_SWEEP_SPAN} is required"));
        }
        if !(self.identities.kappa > 0.0 && self.identities.kappa < 1.0) {
            return bad("identities.kappa must lie in (0, 1)".into());
        }
        if !(self.t_final >= 0.0 && self.tau >= 0.0 && self.t_final.is_finite() && self.tau.is_finite()) {
            return bad("dynamics.t_final and dynamics.tau must be finite and non-negative".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dynamics.dt must be positive (got {})", self.dt));
        }
        let steps = (self.tau / self.dt).round();
        if (steps * self.dt - self.tau).abs() > 1e-12 * self.tau.max(1.0) {
            return bad(format!("dynamics.tau = {} is not a multiple of dynamics.dt = {}", self.tau, self.dt));
        }
        if !(self.initial.width > 0.0) {
            return bad("initial.width must be positive".into());
        }
        let t = &self.tolerances;
        if !(t.delta_min > 0.0 && t.unitarity > 0.0 && t.gauge > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.krylov_dim < 2 || !(self.krylov_tol > 0.0) {
            return bad("solver.krylov_dim must be at least 2 and solver.krylov_tol positive".into());
        }
        let n = &self.naip;
        if n.instances == 0 || n.n < 2 || n.times.is_empty() || n.quadrature < 64 {
            return bad("naip needs instances > 0, n >= 2, some times and quadrature >= 64".into());
        }
        if self.identities.probes == 0 {
            return bad("identities.probes must be positive".into());
        }
        Ok(())
    }

    pub fn krylov(&self) -> KrylovSettings {
        KrylovSettings {
            max_dim: self.krylov_dim,
            tol: self.krylov_tol,
        }
    }

    /// Hex SHA-256 of the canonical JSON form; output settings do not enter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
