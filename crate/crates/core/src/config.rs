//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`turbine.`, `controller.`, `scenario.`,
//! `analysis.`); `#` starts a comment. Relative file paths resolve against
//! the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::control::{
    uniform_grid, ControllerKind, ControllerSpec, MdcController, MdcOptions, SchedulingTables,
    DEFAULT_SPEED_CUTOFF,
};
use crate::freqdom::log_grid;
use crate::io::{read_tables_csv, read_wind_csv};
use crate::simulate::{ControllerSet, WindKind, WindScenario};
use crate::transfer::RationalTransferFunction;
use crate::turbine::{tower_tf, TurbineParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: `{key}`: {msg}")]
    Value {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot load {path}: {msg}")]
    File { path: PathBuf, msg: String },
}

const TURBINE_FIELDS: [&str; 20] = [
    "m",
    "d",
    "d_add",
    "k",
    "H",
    "s_f",
    "J_r",
    "G_box",
    "R",
    "rho_a",
    "lambda_star",
    "Cp_star",
    "K_opt",
    "omega_r_min",
    "omega_r_rated",
    "a_sd",
    "phi_sd",
    "Tg_rated",
    "gen_efficiency",
    "cp_shape",
];

/// Inline fields that fall back to the reference turbine when absent.
const TURBINE_OPTIONAL: [&str; 3] = ["Tg_rated", "gen_efficiency", "cp_shape"];

const OTHER_KEYS: [&str; 37] = [
    "turbine.preset",
    "controller.conventional",
    "controller.mdc",
    "controller.gain",
    "controller.omega_lpf",
    "controller.feedback_sign",
    "controller.use_offset",
    "controller.fixed_psi_deg",
    "controller.gain_schedule",
    "controller.schedule_factor",
    "controller.tables",
    "controller.speed_cutoff",
    "controller.table_start",
    "controller.table_stop",
    "controller.table_step",
    "scenario.kind",
    "scenario.v",
    "scenario.v_start",
    "scenario.v_end",
    "scenario.step_dv",
    "scenario.dwell_s",
    "scenario.file",
    "scenario.duration",
    "scenario.dt",
    "analysis.bode_targets",
    "analysis.omega_min",
    "analysis.omega_max",
    "analysis.omega_points",
    "analysis.spacing",
    "analysis.omega_r",
    "analysis.psi_off_deg",
    "analysis.rga_start",
    "analysis.rga_stop",
    "analysis.rga_step",
    "analysis.skip_s",
    "analysis.psd_input",
    "analysis.psd_segment_len",
];

const MORE_KEYS: [&str; 4] = [
    "analysis.psd_overlap",
    "analysis.psd_signals",
    "analysis.window_start",
    "analysis.window_end",
];

fn known_key(key: &str) -> bool {
    OTHER_KEYS.contains(&key)
        || MORE_KEYS.contains(&key)
        || key
            .strip_prefix("turbine.")
            .is_some_and(|f| TURBINE_FIELDS.contains(&f))
}

/// Parsed `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{body}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !known_key(k) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("unknown key `{k}`"),
                });
            }
            if v.is_empty() {
                return Err(ConfigError::Value {
                    line,
                    key: k.into(),
                    msg: "empty value".into(),
                });
            }
            if let Some((first, _)) = entries.insert(k.to_string(), (line, v.to_string())) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("duplicate key `{k}` (first set on line {first})"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn value_err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            line: self.entries.get(key).map_or(0, |e| e.0),
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.str(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        self.value_err(key, format!("expected a finite number, got `{v}`"))
                    })
            })
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?
            .ok_or_else(|| ConfigError::Missing(key.into()))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(v) => Err(self.value_err(key, format!("expected true/false, got `{v}`"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                self.value_err(key, format!("expected a non-negative integer, got `{v}`"))
            }),
        }
    }

    /// Comma-separated numbers.
    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<f64>()
                            .map_err(|_| self.value_err(key, format!("bad number `{}`", p.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.str(key).map(|v| {
            v.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
    }
}

/// Where the scheduling tables come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TablesSource {
    Computed { grid: Vec<f64> },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub conventional: bool,
    pub mdc: Option<ControllerSpec>,
    pub options: MdcOptions,
    pub tables: TablesSource,
    pub speed_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKindConfig {
    Constant(f64),
    Staircase {
        v_start: f64,
        v_end: f64,
        step_dv: f64,
        dwell_s: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKindConfig,
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodeKind {
    Plant,
    DemodPlant,
    ModulatedController,
    Loop,
}

impl BodeKind {
    pub fn name(self) -> &'static str {
        match self {
            BodeKind::Plant => "plant",
            BodeKind::DemodPlant => "demod_plant",
            BodeKind::ModulatedController => "modulated_controller",
            BodeKind::Loop => "loop",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Self::Plant,
            Self::DemodPlant,
            Self::ModulatedController,
            Self::Loop,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Phase offset used by frequency-domain analyses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiChoice {
    /// `psi*` at each analysed rotor speed.
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub bode_targets: Vec<BodeKind>,
    pub omega_grid: Vec<f64>,
    pub omega_r: Vec<f64>,
    pub psi_off: PsiChoice,
    pub rga_grid: Vec<f64>,
    pub skip_s: f64,
    /// Residual-amplitude window; defaults to the last 100 s of the run.
    pub window: Option<(f64, f64)>,
    pub psd_input: Option<PathBuf>,
    pub psd_segment_len: Option<usize>,
    pub psd_overlap: f64,
    pub psd_signals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub turbine: TurbineParams,
    /// Preset name, or `None` for an inline parameter set.
    pub turbine_preset: Option<String>,
    pub controller: ControllerConfig,
    pub scenario: Option<ScenarioConfig>,
    pub analysis: AnalysisConfig,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn parse_turbine(kv: &KeyValues) -> Result<(TurbineParams, Option<String>), ConfigError> {
    let inline: Vec<&str> = TURBINE_FIELDS
        .iter()
        .copied()
        .filter(|f| kv.contains(&format!("turbine.{f}")))
        .collect();
    let params = match (kv.str("turbine.preset"), inline.is_empty()) {
        (Some(_), false) => {
            return Err(ConfigError::Invalid(format!(
                "turbine.preset and inline turbine.{} are mutually exclusive",
                inline[0]
            )))
        }
        (Some(name), true) => {
            let p = TurbineParams::preset(name)
                .ok_or_else(|| kv.value_err("turbine.preset", "unknown preset"))?;
            return Ok((p, Some(name.to_string())));
        }
        (None, true) => {
            return Err(ConfigError::Missing(
                "turbine.preset (or the inline turbine.* set)".into(),
            ))
        }
        (None, false) => {
            let reference = TurbineParams::synthetic();
            let get = |f: &str| -> Result<f64, ConfigError> {
                let key = format!("turbine.{f}");
                match kv.f64(&key)? {
                    Some(v) => Ok(v),
                    None if TURBINE_OPTIONAL.contains(&f) => Ok(match f {
                        "Tg_rated" => reference.tg_rated,
                        "gen_efficiency" => reference.gen_efficiency,
                        _ => reference.cp_shape,
                    }),
                    None => Err(ConfigError::Missing(key)),
                }
            };
            TurbineParams {
                m: get("m")?,
                d: get("d")?,
                d_add: get("d_add")?,
                k: get("k")?,
                height: get("H")?,
                s_f: get("s_f")?,
                j_r: get("J_r")?,
                g_box: get("G_box")?,
                radius: get("R")?,
                rho_a: get("rho_a")?,
                lambda_star: get("lambda_star")?,
                cp_star: get("Cp_star")?,
                k_opt: get("K_opt")?,
                omega_r_min: get("omega_r_min")?,
                omega_r_rated: get("omega_r_rated")?,
                a_sd: get("a_sd")?,
                phi_sd: get("phi_sd")?,
                tg_rated: get("Tg_rated")?,
                gen_efficiency: get("gen_efficiency")?,
                cp_shape: get("cp_shape")?,
            }
        }
    };
    params
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok((params, None))
}

fn linear_grid(
    kv: &KeyValues,
    prefix: &str,
    defaults: (f64, f64, f64),
) -> Result<Vec<f64>, ConfigError> {
    let start = kv.f64_or(&format!("{prefix}_start"), defaults.0)?;
    let stop = kv.f64_or(&format!("{prefix}_stop"), defaults.1)?;
    let step = kv.f64_or(&format!("{prefix}_step"), defaults.2)?;
    if !(step > 0.0) || stop < start {
        return Err(ConfigError::Invalid(format!(
            "{prefix} grid needs start <= stop and a positive step"
        )));
    }
    Ok(uniform_grid(start, stop, step))
}

fn parse_controller(kv: &KeyValues, base: &Path) -> Result<ControllerConfig, ConfigError> {
    let gain = kv.f64_or("controller.gain", 0.0)?;
    let kind = match kv.str("controller.mdc").unwrap_or("none") {
        "none" => None,
        "proportional" => Some(ControllerKind::Proportional),
        "integrator" => Some(ControllerKind::Integrator),
        "lowpass" => Some(ControllerKind::FirstOrderLowPass {
            omega_lpf: kv.require_f64("controller.omega_lpf")?,
        }),
        other => {
            return Err(kv.value_err(
                "controller.mdc",
                format!("expected none/proportional/integrator/lowpass, got `{other}`"),
            ))
        }
    };
    let mdc = kind
        .map(|k| {
            let sign = kv.f64_or("controller.feedback_sign", -1.0)?;
            let spec = ControllerSpec::new(k, gain)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?
                .with_feedback_sign(sign);
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok::<_, ConfigError>(spec)
        })
        .transpose()?;
    let defaults = MdcOptions::default();
    let options = MdcOptions {
        use_offset: kv.bool_or("controller.use_offset", defaults.use_offset)?,
        fixed_psi: kv.f64_or("controller.fixed_psi_deg", 0.0)?.to_radians(),
        gain_schedule: kv.bool_or("controller.gain_schedule", defaults.gain_schedule)?,
        schedule_factor: kv.f64_or("controller.schedule_factor", defaults.schedule_factor)?,
    };
    let tables = match kv.str("controller.tables").unwrap_or("computed") {
        "computed" => TablesSource::Computed {
            grid: linear_grid(kv, "controller.table", (0.3, 1.5, 0.01))?,
        },
        path => TablesSource::File(resolve(base, path)),
    };
    let speed_cutoff = kv.f64_or("controller.speed_cutoff", DEFAULT_SPEED_CUTOFF)?;
    if !(speed_cutoff > 0.0) {
        return Err(kv.value_err("controller.speed_cutoff", "must be positive"));
    }
    Ok(ControllerConfig {
        conventional: kv.bool_or("controller.conventional", false)?,
        mdc,
        options,
        tables,
        speed_cutoff,
    })
}

fn parse_scenario(kv: &KeyValues, base: &Path) -> Result<Option<ScenarioConfig>, ConfigError> {
    let Some(kind) = kv.str("scenario.kind") else {
        return Ok(None);
    };
    let kind = match kind {
        "constant" => ScenarioKindConfig::Constant(kv.require_f64("scenario.v")?),
        "staircase" => ScenarioKindConfig::Staircase {
            v_start: kv.require_f64("scenario.v_start")?,
            v_end: kv.require_f64("scenario.v_end")?,
            step_dv: kv.require_f64("scenario.step_dv")?,
            dwell_s: kv.require_f64("scenario.dwell_s")?,
        },
        "file" => ScenarioKindConfig::File(resolve(
            base,
            kv.str("scenario.file")
                .ok_or_else(|| ConfigError::Missing("scenario.file".into()))?,
        )),
        other => {
            return Err(kv.value_err(
                "scenario.kind",
                format!("expected constant/staircase/file, got `{other}`"),
            ))
        }
    };
    Ok(Some(ScenarioConfig {
        kind,
        duration: kv.require_f64("scenario.duration")?,
        dt: kv.f64_or("scenario.dt", 0.01)?,
    }))
}

fn parse_analysis(kv: &KeyValues, base: &Path) -> Result<AnalysisConfig, ConfigError> {
    let bode_targets = kv
        .list("analysis.bode_targets")
        .unwrap_or_else(|| vec!["plant".into()])
        .iter()
        .map(|t| {
            BodeKind::parse(t).ok_or_else(|| {
                kv.value_err("analysis.bode_targets", format!("unknown target `{t}`"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lo = kv.f64_or("analysis.omega_min", 0.01)?;
    let hi = kv.f64_or("analysis.omega_max", 10.0)?;
    let n = kv.usize_or("analysis.omega_points", 2000)?;
    let omega_grid = match kv.str("analysis.spacing").unwrap_or("log") {
        "log" if lo > 0.0 && hi > lo && n > 0 => log_grid(lo, hi, n),
        "linear" if lo > 0.0 && hi > lo && n > 1 => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        "log" | "linear" => {
            return Err(ConfigError::Invalid(
                "analysis frequency grid is empty or invalid (need 0 < omega_min < omega_max, omega_points > 0)".into(),
            ))
        }
        other => return Err(kv.value_err("analysis.spacing", format!("expected log/linear, got `{other}`"))),
    };
    let psi_off = match kv.str("analysis.psi_off_deg") {
        None => PsiChoice::Fixed(0.0),
        Some("optimal") => PsiChoice::Optimal,
        Some(_) => PsiChoice::Fixed(kv.require_f64("analysis.psi_off_deg")?.to_radians()),
    };
    let window = match (
        kv.f64("analysis.window_start")?,
        kv.f64("analysis.window_end")?,
    ) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => {
            return Err(ConfigError::Invalid(
                "analysis.window_start and window_end go together".into(),
            ))
        }
    };
    let psd_overlap = kv.f64_or("analysis.psd_overlap", 0.5)?;
    if !(0.0..1.0).contains(&psd_overlap) {
        return Err(kv.value_err("analysis.psd_overlap", "must lie in [0, 1)"));
    }
    Ok(AnalysisConfig {
        bode_targets,
        omega_grid,
        omega_r: kv
            .f64_list("analysis.omega_r")?
            .unwrap_or_else(|| vec![0.5]),
        psi_off,
        rga_grid: linear_grid(kv, "analysis.rga", (0.1, 1.5, 0.01))?,
        skip_s: kv.f64_or("analysis.skip_s", 200.0)?,
        window,
        psd_input: kv.str("analysis.psd_input").map(|p| resolve(base, p)),
        psd_segment_len: kv
            .str("analysis.psd_segment_len")
            .map(|_| kv.usize_or("analysis.psd_segment_len", 0))
            .transpose()?,
        psd_overlap,
        psd_signals: kv
            .list("analysis.psd_signals")
            .unwrap_or_else(|| vec!["xdot".into(), "dtg_total".into()]),
    })
}

impl RunConfig {
    /// Parse config text; `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let kv = KeyValues::parse(text)?;
        let (turbine, turbine_preset) = parse_turbine(&kv)?;
        Ok(Self {
            turbine,
            turbine_preset,
            controller: parse_controller(&kv, base)?,
            scenario: parse_scenario(&kv, base)?,
            analysis: parse_analysis(&kv, base)?,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// `G'(s)`: tower with the conventional damper folded into the damping.
    pub fn g_prime(&self) -> RationalTransferFunction {
        tower_tf(&self.turbine, true)
    }

    /// Scheduling tables, computed or loaded.
    pub fn tables(&self) -> Result<SchedulingTables, ConfigError> {
        let c = &self.controller;
        match &c.tables {
            TablesSource::Computed { grid } => SchedulingTables::build(&self.g_prime(), grid)
                .map(|t| t.with_speed_cutoff(c.speed_cutoff))
                .map_err(|e| ConfigError::Invalid(e.to_string())),
            TablesSource::File(p) => {
                read_tables_csv(p, c.speed_cutoff).map_err(|e| ConfigError::File {
                    path: p.clone(),
                    msg: e.to_string(),
                })
            }
        }
    }

    pub fn controller_set(&self) -> Result<ControllerSet, ConfigError> {
        let mdc = match self.controller.mdc {
            Some(spec) => Some(MdcController::new(
                spec,
                Some(self.tables()?),
                self.controller.options,
            )),
            None => None,
        };
        Ok(ControllerSet {
            conventional: self.controller.conventional,
            mdc,
        })
    }

    pub fn scenario_config(&self) -> Result<&ScenarioConfig, ConfigError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("scenario.kind".into()))
    }

    /// Build the wind scenario, loading the wind file if there is one.
    pub fn wind_scenario(&self) -> Result<WindScenario, ConfigError> {
        let sc = self.scenario_config()?;
        let kind = match &sc.kind {
            ScenarioKindConfig::Constant(v) => WindKind::Constant(*v),
            ScenarioKindConfig::Staircase {
                v_start,
                v_end,
                step_dv,
                dwell_s,
            } => WindKind::Staircase {
                v_start: *v_start,
                v_end: *v_end,
                step_dv: *step_dv,
                dwell_s: *dwell_s,
            },
            ScenarioKindConfig::File(p) => {
                WindKind::FromFile(read_wind_csv(p).map_err(|e| ConfigError::File {
                    path: p.clone(),
                    msg: e.to_string(),
                })?)
            }
        };
        let scenario = WindScenario {
            kind,
            duration: sc.duration,
        };
        scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(scenario)
    }
}

/// Presets shipped with the binary, by name.
pub const BUNDLED: [(&str, &str); 7] = [
    (
        "paper-6a-cm2-offset",
        include_str!("../presets/paper-6a-cm2-offset.conf"),
    ),
    (
        "paper-6a-cm2-nooffset",
        include_str!("../presets/paper-6a-cm2-nooffset.conf"),
    ),
    (
        "paper-6a-cm3-offset",
        include_str!("../presets/paper-6a-cm3-offset.conf"),
    ),
    (
        "paper-6a-cm3-nooffset",
        include_str!("../presets/paper-6a-cm3-nooffset.conf"),
    ),
    (
        "paper-4c-bode",
        include_str!("../presets/paper-4c-bode.conf"),
    ),
    ("paper-5-rga", include_str!("../presets/paper-5-rga.conf")),
    ("scaled-gs", include_str!("../presets/scaled-gs.conf")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Load a config from a file path, falling back to a bundled preset name.
pub fn load(arg: &str) -> Result<RunConfig, ConfigError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(text) = bundled(arg) {
            return RunConfig::parse(text, Path::new("."));
        }
    }
    RunConfig::from_path(path)
}
