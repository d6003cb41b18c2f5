//! Seeded batch experiments and their reports.
//!
//! Every trial draws its cloud, scene and corruption from sub-seeds of
//! `(seed, trial, stage)`, so the same trial index sees the same scene in every
//! grid cell and reports are a pure function of the configuration. Trials run
//! in parallel; aggregation walks them in index order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, RigidMotion};
use crate::einit::{e_init, EInitParams};
use crate::error::{Error, Result};
use crate::group::GroupKind;
use crate::icp::{icp, IcpParams, Initialization, RegistrationResult};
use crate::io::{load_cloud, write_text, CloudFormat};
use crate::metrics::{evaluate, success_rate, StageTiming, TrialRecord, DEFAULT_SUCCESS_THRESHOLD};
use crate::perturb::{random_cloud, random_scene, CorruptionSpec, Rng};
use crate::shapes::BundledShape;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Batch,
    CompareNoInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSource {
    Bundled {
        name: BundledShape,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<CloudFormat>,
    },
    /// A fresh uniform cloud for every trial.
    Synthetic {
        n: usize,
        d: usize,
        half_width: f64,
    },
}

impl CloudSource {
    pub fn label(&self) -> String {
        match self {
            CloudSource::Bundled { name } => name.to_string(),
            CloudSource::File { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".into()),
            CloudSource::Synthetic { n, d, .. } => format!("uniform{d}d_{n}"),
        }
    }
}

/// The parameter grid. Superposition takes the cartesian product of its lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionGrid {
    #[default]
    None,
    Multiplicative {
        sigma: Vec<f64>,
    },
    Additive {
        sigma: Vec<f64>,
    },
    Occlusion {
        alpha: Vec<f64>,
    },
    Superposition {
        #[serde(default)]
        multiplicative: Vec<f64>,
        #[serde(default)]
        additive: Vec<f64>,
        #[serde(default)]
        occlusion: Vec<f64>,
    },
}

/// Corruption levels of one grid cell; zero means the corruption is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CellParams {
    pub sigma_mult: f64,
    pub sigma_add: f64,
    pub alpha: f64,
}

impl CellParams {
    pub fn specs(&self) -> Vec<CorruptionSpec> {
        let mut out = Vec::new();
        if self.sigma_mult > 0.0 {
            out.push(CorruptionSpec::Multiplicative {
                sigma: self.sigma_mult,
            });
        }
        if self.sigma_add > 0.0 {
            out.push(CorruptionSpec::Additive {
                sigma: self.sigma_add,
            });
        }
        if self.alpha > 0.0 {
            out.push(CorruptionSpec::Occlusion { alpha: self.alpha });
        }
        out
    }
}

impl CorruptionGrid {
    pub fn cells(&self) -> Vec<CellParams> {
        let one =
            |f: &dyn Fn(f64) -> CellParams, values: &[f64]| values.iter().map(|&v| f(v)).collect();
        match self {
            CorruptionGrid::None => vec![CellParams::default()],
            CorruptionGrid::Multiplicative { sigma } => one(
                &|v| CellParams {
                    sigma_mult: v,
                    ..CellParams::default()
                },
                sigma,
            ),
            CorruptionGrid::Additive { sigma } => one(
                &|v| CellParams {
                    sigma_add: v,
                    ..CellParams::default()
                },
                sigma,
            ),
            CorruptionGrid::Occlusion { alpha } => one(
                &|v| CellParams {
                    alpha: v,
                    ..CellParams::default()
                },
                alpha,
            ),
            CorruptionGrid::Superposition {
                multiplicative,
                additive,
                occlusion,
            } => {
                let or_zero = |v: &Vec<f64>| if v.is_empty() { vec![0.0] } else { v.clone() };
                let mut cells = Vec::new();
                for &alpha in &or_zero(occlusion) {
                    for &sigma_mult in &or_zero(multiplicative) {
                        for &sigma_add in &or_zero(additive) {
                            cells.push(CellParams {
                                sigma_mult,
                                sigma_add,
                                alpha,
                            });
                        }
                    }
                }
                cells
            }
        }
    }

    fn is_superposition(&self) -> bool {
        matches!(self, CorruptionGrid::Superposition { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Fill the per-stage wall-clock columns. Timings make reports non-reproducible.
    pub timing: bool,
    /// Write per-figure plot series next to the reports.
    pub plot_data: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            timing: false,
            plot_data: true,
        }
    }
}

fn default_trials() -> usize {
    100
}

fn default_threshold() -> f64 {
    DEFAULT_SUCCESS_THRESHOLD
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    pub cloud: CloudSource,
    #[serde(default)]
    pub corruption: CorruptionGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub group: GroupKind,
    #[serde(default)]
    pub icp: IcpParams,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSettings,
}

impl ExperimentConfig {
    pub fn new(cloud: CloudSource) -> Self {
        Self {
            name: default_name(),
            mode: Mode::Batch,
            cloud,
            corruption: CorruptionGrid::None,
            trials: default_trials(),
            group: GroupKind::Ref,
            icp: IcpParams::default(),
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            seed: 0,
            output: OutputSettings::default(),
        }
    }

    /// Reads a `.toml` or `.json` config. Relative cloud paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        let mut config: ExperimentConfig = match ext.to_ascii_lowercase().as_str() {
            "json" => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            "toml" => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => {
                return Err(Error::Config(format!(
                    "{}: config must be .toml or .json",
                    path.display()
                )))
            }
        };
        if let CloudSource::File { path: cloud, .. } = &mut config.cloud {
            if cloud.is_relative() {
                if let Some(dir) = path.parent() {
                    *cloud = dir.join(&*cloud);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let cells = self.corruption.cells();
        if cells.is_empty() {
            return Err(Error::Config("corruption grid is empty".into()));
        }
        for c in &cells {
            for v in [c.sigma_mult, c.sigma_add, c.alpha] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!(
                        "corruption level {v} must be finite and >= 0"
                    )));
                }
            }
        }
        if let CloudSource::Synthetic { n, d, half_width } = self.cloud {
            if n == 0 || d == 0 || !(half_width.is_finite() && half_width > 0.0) {
                return Err(Error::Config(
                    "synthetic cloud needs n, d >= 1 and half_width > 0".into(),
                ));
            }
        }
        if !(self.success_threshold.is_finite() && self.success_threshold >= 0.0) {
            return Err(Error::Config("success_threshold must be >= 0".into()));
        }
        self.icp
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(Self {
            mean: values.iter().sum::<f64>() / n as f64,
            median,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub e_init_seconds_mean: f64,
    pub icp_seconds_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub params: CellParams,
    pub n_trials: usize,
    pub tau: f64,
    pub nu: Summary,
    pub delta: Summary,
    pub delta_spec: Summary,
    pub delta_o: Summary,
    pub delta_h: Option<Summary>,
    pub delta_icp: Summary,
    pub delta_icp_o: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<TimingSummary>,
    pub trials: Vec<TrialRecord>,
}

impl CellReport {
    fn aggregate(params: CellParams, trials: Vec<TrialRecord>, timing: bool) -> Result<Self> {
        let col = |f: fn(&TrialRecord) -> f64| -> Summary {
            Summary::of(&trials.iter().map(f).collect::<Vec<_>>()).expect("nonempty batch")
        };
        let hamming: Vec<f64> = trials.iter().filter_map(|t| t.delta_h).collect();
        let timing = timing.then(|| {
            let n = trials.len() as f64;
            TimingSummary {
                e_init_seconds_mean: trials.iter().map(|t| t.timing.e_init_seconds).sum::<f64>()
                    / n,
                icp_seconds_mean: trials.iter().map(|t| t.timing.icp_seconds).sum::<f64>() / n,
            }
        });
        Ok(Self {
            params,
            n_trials: trials.len(),
            tau: success_rate(&trials)?,
            nu: col(|t| t.nu),
            delta: col(|t| t.delta),
            delta_spec: col(|t| t.delta_spec),
            delta_o: col(|t| t.delta_o),
            delta_h: Summary::of(&hamming),
            delta_icp: col(|t| t.delta_icp),
            delta_icp_o: col(|t| t.delta_icp_o),
            timing,
            trials,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema_version: u32,
    pub software_version: String,
    /// "e_init" or "identity".
    pub initialization: String,
    pub cloud: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub cells: Vec<CellReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub schema_version: u32,
    pub software_version: String,
    pub seed: u64,
    pub with_init: BatchReport,
    pub identity_init: BatchReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    EInit,
    Identity,
}

fn base_cloud(source: &CloudSource) -> Result<Option<PointCloud>> {
    match source {
        CloudSource::Bundled { name } => name.load().map(Some),
        CloudSource::File { path, format } => load_cloud(path, *format).map(Some),
        CloudSource::Synthetic { .. } => Ok(None),
    }
}

fn run_trial(
    config: &ExperimentConfig,
    base: Option<&PointCloud>,
    cell: &CellParams,
    trial: u64,
    arm: Arm,
) -> Result<TrialRecord> {
    let seed = config.seed;
    let owned;
    let source = match (base, &config.cloud) {
        (Some(p), _) => p,
        (None, CloudSource::Synthetic { n, d, half_width }) => {
            owned = random_cloud(*n, *d, *half_width, &mut Rng::derived(seed, trial, "cloud"))?;
            &owned
        }
        (None, _) => unreachable!("file and bundled sources are loaded up front"),
    };
    let truth = random_scene(source, &mut Rng::derived(seed, trial, "scene"))?
        .with_corruption(&cell.specs(), &mut Rng::derived(seed, trial, "corruption"))?;

    let target = &truth.corrupted_target;
    let started = Instant::now();
    let (e_init_result, initial_motion) = match arm {
        Arm::EInit => {
            let r = e_init(source, target, &EInitParams::with_group(config.group))?;
            let m = r.motion.clone();
            (Some(r), m)
        }
        Arm::Identity => (None, RigidMotion::identity(source.dim())),
    };
    let e_init_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let icp_result = icp(source, target, &initial_motion, &config.icp)?;
    let icp_seconds = started.elapsed().as_secs_f64();

    let result = RegistrationResult {
        e_init: e_init_result,
        initial_motion,
        icp: icp_result,
    };
    let mut record = evaluate(&truth, &result, config.success_threshold)?;
    record.timing = StageTiming {
        e_init_seconds,
        icp_seconds,
    };
    Ok(record)
}

fn run_arm(config: &ExperimentConfig, base: Option<&PointCloud>, arm: Arm) -> Result<BatchReport> {
    let cells = config
        .corruption
        .cells()
        .into_iter()
        .map(|cell| {
            let trials = (0..config.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(config, base, &cell, t, arm))
                .collect::<Result<Vec<_>>>()?;
            CellReport::aggregate(cell, trials, config.output.timing)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport {
        schema_version: SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        initialization: match arm {
            Arm::EInit => "e_init".into(),
            Arm::Identity => "identity".into(),
        },
        cloud: config.cloud.label(),
        seed: config.seed,
        config: config.clone(),
        cells,
    })
}

/// Runs every grid cell with ellipsoid initialization.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchReport> {
    config.validate()?;
    let base = base_cloud(&config.cloud)?;
    run_arm(config, base.as_ref(), Arm::EInit)
}

/// Runs every trial twice on identical scenes: ICP from the ellipsoid
/// initialization and ICP from the identity.
pub fn compare_no_init(config: &ExperimentConfig) -> Result<PairedReport> {
    config.validate()?;
    let base = base_cloud(&config.cloud)?;
    Ok(PairedReport {
        schema_version: SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        with_init: run_arm(config, base.as_ref(), Arm::EInit)?,
        identity_init: run_arm(config, base.as_ref(), Arm::Identity)?,
    })
}

/// Registration of a single pair as the CLI runs it.
pub fn initialization_for(group: GroupKind, no_init: bool) -> Initialization {
    if no_init {
        Initialization::Identity
    } else {
        Initialization::Ellipsoid(EInitParams::with_group(group))
    }
}

/// JSON form of a single registration as written by `eicp register`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub correspondences: Vec<usize>,
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub initial_rotation: Vec<Vec<f64>>,
    pub initial_translation: Vec<f64>,
    /// Chosen group element such as `[+0 -2 +1]`; absent for identity starts.
    pub chosen_element: Option<String>,
    pub candidate_scores: Vec<f64>,
    pub warnings: Vec<String>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl From<&RegistrationResult> for RegistrationSummary {
    fn from(r: &RegistrationResult) -> Self {
        let m = r.final_motion();
        Self {
            rotation: rows(&m.rotation),
            translation: m.translation.iter().copied().collect(),
            correspondences: r.icp.correspondences.assignment.clone(),
            cost_trace: r.icp.cost_trace.clone(),
            iterations: r.icp.iterations,
            converged: r.icp.converged,
            initial_rotation: rows(&r.initial_motion.rotation),
            initial_translation: r.initial_motion.translation.iter().copied().collect(),
            chosen_element: r.e_init.as_ref().map(|e| e.chosen_element.to_string()),
            candidate_scores: r
                .e_init
                .as_ref()
                .map(|e| e.candidate_scores.iter().map(|(_, s)| *s).collect())
                .unwrap_or_default(),
            warnings: r
                .e_init
                .as_ref()
                .map(|e| e.warnings.iter().map(|w| w.to_string()).collect())
                .unwrap_or_default(),
        }
    }
}

const METRIC_COLUMNS: [&str; 7] = [
    "nu",
    "delta",
    "delta_spec",
    "delta_o",
    "delta_h",
    "delta_icp",
    "delta_icp_o",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell. The wall-clock columns stay empty unless timing is enabled.
pub fn report_csv(report: &BatchReport) -> String {
    let mut out = String::from("sigma_mult,sigma_add,alpha,n_trials,tau");
    for m in METRIC_COLUMNS {
        write!(out, ",{m}_mean,{m}_median").unwrap();
    }
    out.push_str(",e_init_seconds_mean,icp_seconds_mean\n");
    for c in &report.cells {
        write!(
            out,
            "{},{},{},{},{}",
            c.params.sigma_mult, c.params.sigma_add, c.params.alpha, c.n_trials, c.tau
        )
        .unwrap();
        let summaries = [
            Some(c.nu),
            Some(c.delta),
            Some(c.delta_spec),
            Some(c.delta_o),
            c.delta_h,
            Some(c.delta_icp),
            Some(c.delta_icp_o),
        ];
        for s in summaries {
            write!(
                out,
                ",{},{}",
                fmt_opt(s.map(|s| s.mean)),
                fmt_opt(s.map(|s| s.median))
            )
            .unwrap();
        }
        write!(
            out,
            ",{},{}",
            fmt_opt(c.timing.map(|t| t.e_init_seconds_mean)),
            fmt_opt(c.timing.map(|t| t.icp_seconds_mean))
        )
        .unwrap();
        out.push('\n');
    }
    out
}

/// Per-figure series: mean `ν` on the horizontal axis against `τ`, median
/// `δ_spec` and median `δ_o`.
pub fn plot_data(report: &BatchReport) -> BTreeMap<&'static str, String> {
    let superposition = report.config.corruption.is_superposition();
    let mut files = BTreeMap::new();
    type Series = (&'static str, fn(&CellReport) -> f64);
    let series: [Series; 3] = [
        ("plot_tau_vs_nu.csv", |c| c.tau),
        ("plot_delta_spec_vs_nu.csv", |c| c.delta_spec.median),
        ("plot_delta_o_vs_nu.csv", |c| c.delta_o.median),
    ];
    for (name, value) in series {
        let mut out = String::from("series,sigma_mult,sigma_add,alpha,nu,value\n");
        for c in &report.cells {
            let label = if superposition {
                format!("{} alpha={}", report.cloud, c.params.alpha)
            } else {
                report.cloud.clone()
            };
            writeln!(
                out,
                "{label},{},{},{},{},{}",
                c.params.sigma_mult,
                c.params.sigma_add,
                c.params.alpha,
                c.nu.mean,
                value(c)
            )
            .unwrap();
        }
        files.insert(name, out);
    }
    files
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `report.csv`, `report.json` and the plot series. Returns the paths written.
pub fn save_batch(report: &BatchReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let path = out_dir.join(name);
        write_text(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("report.csv", &report_csv(report))?;
    put("report.json", &to_json(report)?)?;
    if report.config.output.plot_data {
        for (name, text) in plot_data(report) {
            put(name, &text)?;
        }
    }
    Ok(written)
}

/// Writes one csv per arm and a combined `report.json`.
pub fn save_paired(report: &PairedReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, text) in [
        ("with_init.csv", report_csv(&report.with_init)),
        ("identity_init.csv", report_csv(&report.identity_init)),
        ("report.json", to_json(report)?),
    ] {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs whichever experiment the config asks for and writes its outputs.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match config.mode {
        Mode::Batch => save_batch(&run_batch(config)?, out_dir),
        Mode::CompareNoInit => save_paired(&compare_no_init(config)?, out_dir),
    }
}
