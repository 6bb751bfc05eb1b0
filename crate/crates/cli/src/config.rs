//! Run configuration: one JSON file drives every subcommand; flags override it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rainq::dataset::{BuildConfig, Split};
use rainq::eval::{light_rain_edges, ScatterAxes, AxisScale, TimeBucketing, DEFAULT_COVERAGE_BINS};
use rainq::geo::LatLonBox;
use rainq::qunet::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// File name of the resolved-config receipt written into every output directory.
pub const RECEIPT_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// when set, replaces the generator, initialization and shuffling seeds
    pub seed: Option<u64>,
    /// land/ocean mask (MSK1) for building and for stratified scores
    pub mask: Option<PathBuf>,
    pub dataset_dir: PathBuf,
    pub train_dir: PathBuf,
    pub retrieve_dir: PathBuf,
    pub report_dir: PathBuf,
    pub grid_diff_dir: PathBuf,
    pub build: BuildConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// checkpoint to continue training from
    pub resume: Option<PathBuf>,
    pub retrieve: RetrieveConfig,
    pub sources: SourcesConfig,
    pub evaluate: EvaluateConfig,
    pub grid_diff: GridDiffConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            mask: None,
            dataset_dir: "dataset".into(),
            train_dir: "model".into(),
            retrieve_dir: "retrievals".into(),
            report_dir: "report".into(),
            grid_diff_dir: "grid-diff".into(),
            build: BuildConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            resume: None,
            retrieve: RetrieveConfig::default(),
            sources: SourcesConfig::default(),
            evaluate: EvaluateConfig::default(),
            grid_diff: GridDiffConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieveConfig {
    /// defaults to `<train_dir>/checkpoint.qnt`
    pub checkpoint: Option<PathBuf>,
    /// SWT1 TB files; empty means the dataset split below
    pub inputs: Vec<PathBuf>,
    pub split: Split,
    /// crop inputs to the model's tile factor instead of failing
    pub crop: bool,
}

impl Default for RetrieveConfig {
    fn default() -> Self {
        RetrieveConfig { checkpoint: None, inputs: Vec::new(), split: Split::Test, crop: false }
    }
}

/// A rain product to score next to the retrieval, one `<id>.swt` file per scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalEstimator {
    pub name: String,
    pub dir: PathBuf,
}

/// Which scenes, estimators and references evaluation and grid-diff read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourcesConfig {
    pub split: Split,
    /// label of the retrieval median in tables
    pub estimator: String,
    pub external: Vec<ExternalEstimator>,
    /// MOS1 frames; when given they act as a second reference
    pub mosaic: Vec<PathBuf>,
    pub quality_min: u8,
    pub colocation_radius_km: f64,
}

impl Default for SourcesConfig {
    fn default() -> Self {
        SourcesConfig {
            split: Split::Test,
            estimator: "UNET".into(),
            external: Vec::new(),
            mosaic: Vec::new(),
            quality_min: rainq::colocation::DEFAULT_QUALITY_MIN,
            colocation_radius_km: rainq::colocation::DEFAULT_RADIUS_KM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportTable {
    Contingency,
    PodFar,
    BiasRmse,
    ErrorStats,
    Coverage,
    F1,
    Histogram,
    DiffMap,
    Scatter,
    GridDiff,
    Mae,
}

impl ReportTable {
    pub const ALL: [ReportTable; 11] = [
        ReportTable::Contingency,
        ReportTable::PodFar,
        ReportTable::BiasRmse,
        ReportTable::ErrorStats,
        ReportTable::Coverage,
        ReportTable::F1,
        ReportTable::Histogram,
        ReportTable::DiffMap,
        ReportTable::Scatter,
        ReportTable::GridDiff,
        ReportTable::Mae,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// rain / no-rain threshold, mm/hr
    pub threshold: f64,
    /// cell size of the per-pixel difference maps
    pub cell_deg: f64,
    /// cell size of the grid-of-means products (scatter, grid difference)
    pub fine_cell_deg: f64,
    /// map extent; the whole globe when unset
    pub domain: Option<LatLonBox>,
    pub coverage_bins: Vec<f64>,
    pub histogram_edges: Vec<f64>,
    pub scatter: ScatterAxes,
    pub bucketing: TimeBucketing,
    pub tables: Vec<ReportTable>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            threshold: rainq::quantiles::RAIN_THRESHOLD,
            cell_deg: 1.0,
            fine_cell_deg: 0.2,
            domain: None,
            coverage_bins: DEFAULT_COVERAGE_BINS.to_vec(),
            histogram_edges: light_rain_edges(),
            scatter: ScatterAxes { min: 0.1, max: 100.0, bins: 30, scale: AxisScale::Log },
            bucketing: TimeBucketing::Month,
            tables: ReportTable::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridDiffConfig {
    pub cell_deg: f64,
    /// pixels count only where both sides exceed this, mm/hr
    pub threshold: f64,
    pub domain: Option<LatLonBox>,
}

impl Default for GridDiffConfig {
    fn default() -> Self {
        GridDiffConfig { cell_deg: 0.2, threshold: rainq::quantiles::RAIN_THRESHOLD, domain: None }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub cell_deg: Option<f64>,
    pub mask: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// Apply flag overrides; `out` lands on the output directory of `command`.
    pub fn resolve(mut self, o: &Overrides, out_of: impl FnOnce(&mut RunConfig) -> &mut PathBuf) -> anyhow::Result<Self> {
        if let Some(s) = o.seed.or(self.seed) {
            self.seed = Some(s);
            self.build.synth.seed = s;
            self.model.seed = s;
            self.train.seed = s;
        }
        if let Some(out) = &o.out {
            *out_of(&mut self) = out.clone();
        }
        if let Some(t) = o.threshold {
            self.evaluate.threshold = t;
            self.grid_diff.threshold = t;
        }
        if let Some(c) = o.cell_deg {
            self.evaluate.cell_deg = c;
            self.grid_diff.cell_deg = c;
        }
        if let Some(m) = &o.mask {
            self.mask = Some(m.clone());
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let field = |name: &str, e: rainq::Error| UsageError(format!("{name}: {e}"));
        self.build.synth.validate().map_err(|e| field("build.synth", e))?;
        self.build.rule.validate().map_err(|e| field("build.rule", e))?;
        self.model.validate().map_err(|e| field("model", e))?;
        self.train.validate().map_err(|e| field("train", e))?;
        let bad = |name: &str, why: &str| -> anyhow::Result<()> { Err(UsageError(format!("{name}: {why}")).into()) };
        if self.build.tile_multiple == 0 {
            bad("build.tile_multiple", "must be >= 1")?;
        }
        if !(self.build.mask_cell_deg > 0.0) {
            bad("build.mask_cell_deg", "must be > 0")?;
        }
        for (name, v) in [
            ("evaluate.cell_deg", self.evaluate.cell_deg),
            ("evaluate.fine_cell_deg", self.evaluate.fine_cell_deg),
            ("grid_diff.cell_deg", self.grid_diff.cell_deg),
            ("sources.colocation_radius_km", self.sources.colocation_radius_km),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, "must be a positive number")?;
            }
        }
        for (name, v) in [("evaluate.threshold", self.evaluate.threshold), ("grid_diff.threshold", self.grid_diff.threshold)] {
            if !(v >= 0.0 && v.is_finite()) {
                bad(name, "must be >= 0")?;
            }
        }
        if self.sources.estimator.is_empty() || self.sources.external.iter().any(|e| e.name.is_empty()) {
            bad("sources", "estimator names must be non-empty")?;
        }
        let increasing = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.evaluate.histogram_edges) {
            bad("evaluate.histogram_edges", "need at least two increasing edges")?;
        }
        if self.evaluate.coverage_bins.is_empty() || !self.evaluate.coverage_bins.windows(2).all(|w| w[1] > w[0]) {
            bad("evaluate.coverage_bins", "need increasing lower edges")?;
        }
        self.evaluate.scatter.edges().map_err(|e| field("evaluate.scatter", e))?;
        Ok(())
    }

    /// Write the resolved config as `run_config.json` in `dir`.
    pub fn write_receipt(&self, dir: &Path) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        let path = dir.join(RECEIPT_FILE);
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        assert_eq!(serde_json::from_str::<RunConfig>("{}").unwrap(), c);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"learning_rate": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { seed: Some(7), out: Some("x".into()), threshold: Some(0.1), cell_deg: Some(0.5), mask: None };
        let c = RunConfig::default().resolve(&o, |c| &mut c.report_dir).unwrap();
        assert_eq!((c.build.synth.seed, c.model.seed, c.train.seed), (7, 7, 7));
        assert_eq!(c.report_dir, PathBuf::from("x"));
        assert_eq!(c.dataset_dir, PathBuf::from("dataset"));
        assert_eq!((c.evaluate.threshold, c.grid_diff.cell_deg), (0.1, 0.5));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let mut c = RunConfig::default();
        c.train.lr = -1.0;
        let err = c.resolve(&Overrides::default(), |c| &mut c.train_dir).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(err.to_string().starts_with("train:"), "{err}");
    }
}
