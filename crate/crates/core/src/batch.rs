//! Config-driven workflow: one parameter set applied to one or many
//! replicate time-lapses, with every intermediate written to disk and the
//! growth rates aggregated across replicates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    classify_strains, fit_loglinear, full_cycle_filter, min_length_filter, per_strain_growth,
    population_series, read_igr_csv, strain_tsca_series, tca_series, tracklet_igrs, write_igr_csv,
    GrowthFit, IgrSeries, Measure, StrainAssignment,
};
use crate::error::{Error, Result};
use crate::features::{
    extract_detection_features, extract_tracklet_features, DetectionTable, TrackletTable,
};
use crate::imagestack::{load_stack, ImageStack, StackMetadata};
use crate::report::{render_growth, render_igr, render_lineage, render_rate_distribution, Phase};
use crate::segmentation::{ingest_label_masks, segment_threshold, size_filter, Overlay, Polarity};
use crate::synthdata::{write_json, Simulation};
use crate::tracking::{build_tracklets, track, Tracklet, TrackletGraph, TrackParams};
use crate::units::{Quantity, QuantitySeries, Unit};

/// Stage names in execution order, as they appear in failure statuses.
pub const STAGES: [&str; 7] = ["load", "segment", "filter", "track", "features", "analysis", "report"];

/// One time-lapse to analyze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateSpec {
    pub origin_id: String,
    pub stack: PathBuf,
    pub sidecar: PathBuf,
    /// Integer label stack used when segmentation source is `labels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_sidecar: Option<PathBuf>,
    /// Replaces the sidecar pixel size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size_um: Option<f64>,
    /// Replaces the sidecar frame interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_interval_min: Option<f64>,
}

impl ReplicateSpec {
    /// Make relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.stack);
        fix(&mut self.sidecar);
        self.labels.iter_mut().for_each(fix);
        self.labels_sidecar.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.origin_id;
        if id.is_empty()
            || id == "aggregate"
            || id.starts_with('.')
            || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::InvalidConfig(format!(
                "origin_id {id:?} must be non-empty, use [A-Za-z0-9._-], not start with '.' and not be \"aggregate\""
            )));
        }
        for (key, v) in [("pixel_size_um", self.pixel_size_um), ("frame_interval_min", self.frame_interval_min)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("{id}: {key} must be positive, got {v}")));
                }
            }
        }
        if self.labels.is_some() != self.labels_sidecar.is_some() {
            return Err(Error::InvalidConfig(format!("{id}: labels and labels_sidecar go together")));
        }
        Ok(())
    }
}

/// Where cell masks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SegmentationSource {
    Threshold {
        channel: String,
        threshold: f64,
        #[serde(default = "default_polarity")]
        polarity: Polarity,
    },
    /// Use the replicate's label stack.
    Labels,
}

fn default_polarity() -> Polarity {
    Polarity::Bright
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub max_link_distance_um: f64,
    pub area_weight: f64,
    pub division_area_tolerance: f64,
    pub enable_divisions: bool,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        let p = TrackParams::default();
        TrackingConfig {
            max_link_distance_um: p.max_link_distance.canonical(),
            area_weight: p.area_weight,
            division_area_tolerance: p.division_area_tolerance,
            enable_divisions: p.enable_divisions,
        }
    }
}

impl TrackingConfig {
    pub fn params(&self) -> Result<TrackParams> {
        TrackParams::new(
            Quantity::um(self.max_link_distance_um),
            self.area_weight,
            self.division_area_tolerance,
            self.enable_divisions,
        )
        .map_err(|e| Error::InvalidConfig(format!("tracking: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeFilterConfig {
    pub min_area_um2: f64,
    pub max_area_um2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analyses {
    /// CC, TCA and TSCA log-linear fits.
    pub growth_measures: bool,
    /// Two-strain split with per-strain TSCA fits.
    pub co_culture: bool,
    pub single_cell_igr: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            growth_measures: true,
            co_culture: false,
            single_cell_igr: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelRoles {
    /// The two strain marker channels for co-culture analysis.
    pub fluorescence: Vec<String>,
    /// Tracklets dimmer than this in every marker channel are not classified.
    pub nonfluor_threshold_au: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    /// Tracklets with fewer detections are dropped from the lineage.
    pub min_frames: usize,
    /// Restrict IGR analysis to cells observed from birth to division.
    pub full_cycle: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            min_frames: 3,
            full_cycle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IgrSettings {
    pub sigma_frames: f64,
    pub phases: Vec<Phase>,
}

impl Default for IgrSettings {
    fn default() -> Self {
        IgrSettings {
            sigma_frames: 4.0,
            phases: Vec::new(),
        }
    }
}

/// Every knob of the per-replicate workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowParams {
    pub segmentation: SegmentationSource,
    #[serde(default)]
    pub tracking: TrackingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_filter: Option<SizeFilterConfig>,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub channels: ChannelRoles,
    #[serde(default)]
    pub filters: FilterSettings,
    #[serde(default)]
    pub igr: IgrSettings,
}

impl WorkflowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let a = &self.analyses;
        if !(a.growth_measures || a.co_culture || a.single_cell_igr) {
            return bad("at least one analysis must be enabled".into());
        }
        if let SegmentationSource::Threshold { threshold, .. } = &self.segmentation {
            if !threshold.is_finite() {
                return bad("segmentation threshold must be finite".into());
            }
        }
        self.tracking.params()?;
        if let Some(f) = &self.size_filter {
            if !(f.min_area_um2 >= 0.0 && f.min_area_um2 <= f.max_area_um2) {
                return bad(format!(
                    "size_filter needs 0 <= min_area_um2 <= max_area_um2, got {} and {}",
                    f.min_area_um2, f.max_area_um2
                ));
            }
        }
        if a.co_culture && self.channels.fluorescence.len() != 2 {
            return bad(format!(
                "co_culture needs exactly two fluorescence channels, got {}",
                self.channels.fluorescence.len()
            ));
        }
        if !self.channels.nonfluor_threshold_au.is_finite() {
            return bad("nonfluor_threshold_au must be finite".into());
        }
        if self.filters.min_frames == 0 {
            return bad("filters.min_frames must be at least 1".into());
        }
        if !(self.igr.sigma_frames >= 0.0 && self.igr.sigma_frames.is_finite()) {
            return bad("igr.sigma_frames must be >= 0".into());
        }
        if let Some(p) = self.igr.phases.iter().find(|p| !(p.start_h < p.end_h)) {
            return bad(format!("phase {:?} must start before it ends", p.name));
        }
        Ok(())
    }

    fn check_replicate(&self, rep: &ReplicateSpec) -> Result<()> {
        rep.validate()?;
        if self.segmentation == SegmentationSource::Labels && rep.labels.is_none() {
            return Err(Error::InvalidConfig(format!(
                "{}: label segmentation needs labels and labels_sidecar",
                rep.origin_id
            )));
        }
        Ok(())
    }
}

/// Config for a single-replicate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub replicate: ReplicateSpec,
    pub workflow: WorkflowParams,
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<()> {
        self.workflow.validate()?;
        self.workflow.check_replicate(&self.replicate)
    }

    /// Config that analyzes a simulation written by [`Simulation::write`]
    /// into the same directory as the config.
    pub fn for_simulation(sim: &Simulation) -> AnalyzeConfig {
        let sc = &sim.truth.scenario;
        let max_link = (sim.truth.max_displacement_um() * 1.25).max(2.0 * sc.pixel_size_um);
        let t_end = sc.frame_times_h().last().copied().unwrap_or(0.0);
        let mut bounds = vec![0.0];
        bounds.extend(sc.rate_schedule.iter().map(|s| s.t_switch_h).filter(|&t| t > 0.0 && t < t_end));
        bounds.push(t_end);
        let phases = if bounds.len() > 2 {
            bounds
                .windows(2)
                .enumerate()
                .map(|(k, w)| Phase {
                    name: format!("phase {}", k + 1),
                    start_h: w[0],
                    end_h: w[1],
                })
                .collect()
        } else {
            Vec::new()
        };
        let co_culture = sc.strains.len() == 2 && sc.fluor_channels.len() == 2;
        AnalyzeConfig {
            replicate: ReplicateSpec {
                origin_id: sc.origin_id.clone(),
                stack: "stack.raw".into(),
                sidecar: "stack.json".into(),
                labels: Some("labels.raw".into()),
                labels_sidecar: Some("labels.json".into()),
                pixel_size_um: None,
                frame_interval_min: None,
            },
            workflow: WorkflowParams {
                segmentation: SegmentationSource::Threshold {
                    channel: "phase".into(),
                    threshold: 0.5,
                    polarity: Polarity::Bright,
                },
                tracking: TrackingConfig {
                    max_link_distance_um: max_link,
                    ..TrackingConfig::default()
                },
                size_filter: None,
                analyses: Analyses {
                    growth_measures: true,
                    co_culture,
                    single_cell_igr: true,
                },
                channels: ChannelRoles {
                    fluorescence: if co_culture { sc.fluor_channels.clone() } else { Vec::new() },
                    nonfluor_threshold_au: 0.0,
                },
                filters: FilterSettings::default(),
                igr: IgrSettings {
                    sigma_frames: 4.0,
                    phases,
                },
            },
        }
    }
}

/// Replicates sharing one workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub replicates: Vec<ReplicateSpec>,
    pub workflow: WorkflowParams,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Replicates processed concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_output() -> PathBuf {
    "out".into()
}

fn default_jobs() -> usize {
    1
}

impl BatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates.is_empty() {
            return Err(Error::InvalidConfig("batch has no replicates".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be at least 1".into()));
        }
        self.workflow.validate()?;
        let mut seen = BTreeSet::new();
        for r in &self.replicates {
            self.workflow.check_replicate(r)?;
            if !seen.insert(&r.origin_id) {
                return Err(Error::InvalidConfig(format!("duplicate origin_id {:?}", r.origin_id)));
            }
        }
        Ok(())
    }
}

/// Read a JSON config file.
pub fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Set `key` (dot-separated, numeric segments index arrays) to `raw`,
/// parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key {key:?}")));
    }
    let mut node = config;
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| json!({}))
            }
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("{key}: {part:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(i)
                    .ok_or_else(|| Error::InvalidConfig(format!("{key}: index {i} out of range for {len} items")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::InvalidConfig(format!("{key}: {part:?} is inside a non-object value"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Deserialize a config value, reporting schema problems as invalid config.
pub fn parse_config<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            let body: Vec<String> = sorted
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), canonical_json(v)))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything one replicate produced. Tables are present up to the last
/// stage that completed.
#[derive(Debug, Clone)]
pub struct ReplicateReport {
    pub origin_id: String,
    /// `ok` or `failed:<stage>[:<reason>]`.
    pub status: String,
    pub error: Option<String>,
    pub out_dir: PathBuf,
    pub config_sha256: String,
    pub fits: BTreeMap<String, GrowthFit>,
    pub series: BTreeMap<String, QuantitySeries>,
    pub detections: Option<DetectionTable>,
    pub tracklets: Option<TrackletTable>,
    pub lineage: Option<TrackletGraph>,
    pub strains: Option<StrainAssignment>,
    pub igr: Vec<IgrSeries>,
    pub warnings: Vec<String>,
}

impl ReplicateReport {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }

    /// Name of the stage that failed, if any.
    pub fn failed_stage(&self) -> Option<&str> {
        self.status.strip_prefix("failed:").map(|s| s.split(':').next().unwrap_or(s))
    }
}

struct Failure {
    status: String,
    error: Error,
}

fn at(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |error| Failure {
        status: format!("failed:{stage}"),
        error,
    }
}

#[derive(Default)]
struct State {
    meta: Option<StackMetadata>,
    shape: Option<(usize, usize, usize, usize)>,
    n_detections: Option<usize>,
    full_cycle: Option<usize>,
    report: Option<ReplicateReport>,
}

fn fit_json(fit: &GrowthFit) -> Value {
    json!({
        "mu_per_h": fit.mu_per_h(),
        "r2": fit.r_squared,
        "n": fit.n_points,
        "intercept_log": fit.intercept_log,
        "n_dropped": fit.n_dropped,
    })
}

fn fits_json(fits: &BTreeMap<String, GrowthFit>) -> Value {
    Value::Object(fits.iter().map(|(k, f)| (k.clone(), fit_json(f))).collect())
}

fn fit_from_json(key: &str, v: &Value) -> Result<GrowthFit> {
    let bad = || Error::InvalidInput(format!("fits.json entry {key} is malformed"));
    let num = |k: &str| v.get(k).and_then(Value::as_f64).ok_or_else(bad);
    let int = |k: &str| v.get(k).and_then(Value::as_u64).map(|n| n as usize).ok_or_else(bad);
    let measure = match key.split('_').next() {
        Some("CC") => Measure::CC,
        Some("TCA") => Measure::TCA,
        Some("TSCA") => Measure::TSCA,
        _ => return Err(bad()),
    };
    Ok(GrowthFit {
        measure,
        mu: Quantity::per_hour(num("mu_per_h")?),
        intercept_log: num("intercept_log")?,
        r_squared: num("r2")?,
        n_points: int("n")?,
        n_dropped: int("n_dropped")?,
    })
}

/// Read a replicate's fits.json.
pub fn read_fits(path: &Path) -> Result<BTreeMap<String, GrowthFit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let map = value
        .as_object()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not an object", path.display())))?;
    map.iter().map(|(k, v)| Ok((k.clone(), fit_from_json(k, v)?))).collect()
}

fn series_json(series: &BTreeMap<String, QuantitySeries>) -> Value {
    Value::Object(
        series
            .iter()
            .map(|(k, s)| {
                let unit = Unit::for_dimension(s.dimension()).map(Unit::token).unwrap_or("?");
                (
                    k.clone(),
                    json!({ "unit": unit, "times_h": s.times_h(), "values": s.values() }),
                )
            })
            .collect(),
    )
}

fn series_from_json(value: &Value) -> Result<BTreeMap<String, QuantitySeries>> {
    let Some(map) = value.as_object() else {
        return Ok(BTreeMap::new());
    };
    map.iter()
        .map(|(k, v)| {
            let bad = || Error::InvalidInput(format!("series {k} is malformed"));
            let unit = v.get("unit").and_then(Value::as_str).and_then(Unit::from_token).ok_or_else(bad)?;
            let nums = |key: &str| -> Result<Vec<f64>> {
                v.get(key)
                    .and_then(Value::as_array)
                    .ok_or_else(bad)?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(bad))
                    .collect()
            };
            let s = QuantitySeries::from_canonical(k.clone(), nums("times_h")?, nums("values")?, unit.dimension())?;
            Ok((k.clone(), s))
        })
        .collect()
}

/// Inputs for the per-replicate figures.
struct PlotInputs<'a> {
    fits: &'a BTreeMap<String, GrowthFit>,
    series: &'a BTreeMap<String, QuantitySeries>,
    lineage: Option<&'a TrackletGraph>,
    frame_interval: Quantity,
    strain_colors: Option<BTreeMap<u32, f64>>,
    igr: &'a [IgrSeries],
    show_igr: bool,
    phases: &'a [Phase],
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn render_plots(dir: &Path, p: &PlotInputs) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let path = plots.join(name);
        write_text(&path, &svg)?;
        written.push(path);
        Ok(())
    };
    for (key, fit) in p.fits {
        if let Some(series) = p.series.get(key) {
            emit(format!("growth_{key}.svg"), render_growth(series, fit)?)?;
        }
    }
    if let Some(tg) = p.lineage.filter(|tg| !tg.is_empty()) {
        emit(
            "lineage.svg".into(),
            render_lineage(tg, p.frame_interval, p.strain_colors.as_ref())?,
        )?;
    }
    if p.show_igr && !p.igr.is_empty() {
        emit("igr.svg".into(), render_igr(p.igr, p.phases)?)?;
    }
    Ok(written)
}

fn strain_colors(assign: &StrainAssignment) -> BTreeMap<u32, f64> {
    assign.strain.iter().map(|(&l, &s)| (l, s as f64)).collect()
}

/// Run the full workflow on one replicate, writing into `out_dir`.
///
/// Stage failures are recorded in the returned report and in report.json;
/// only an invalid configuration is returned as an error.
pub fn run_workflow(rep: &ReplicateSpec, params: &WorkflowParams, out_dir: &Path) -> Result<ReplicateReport> {
    params.validate()?;
    params.check_replicate(rep)?;
    let config_sha256 = sha256_hex(&canonical_json(&json!({ "replicate": rep, "workflow": params })));
    let mut report = ReplicateReport {
        origin_id: rep.origin_id.clone(),
        status: "ok".into(),
        error: None,
        out_dir: out_dir.to_path_buf(),
        config_sha256,
        fits: BTreeMap::new(),
        series: BTreeMap::new(),
        detections: None,
        tracklets: None,
        lineage: None,
        strains: None,
        igr: Vec::new(),
        warnings: Vec::new(),
    };
    let mut state = State::default();
    let outcome = std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir, e))
        .map_err(at("report"))
        .and_then(|_| {
            state.report = Some(report.clone());
            run_stages(rep, params, out_dir, &mut state)
        });
    if let Some(r) = state.report.take() {
        report = r;
    }
    if let Err(f) = outcome {
        warn!("{}: {} ({})", rep.origin_id, f.status, f.error);
        report.status = f.status;
        report.error = Some(f.error.to_string());
    } else {
        info!("{}: ok", rep.origin_id);
    }
    if let Err(e) = write_report_json(out_dir, params, &report, &state) {
        warn!("{}: cannot write report.json ({e})", rep.origin_id);
        if report.succeeded() {
            report.status = "failed:report".into();
            report.error = Some(e.to_string());
        }
    }
    Ok(report)
}

fn run_stages(
    rep: &ReplicateSpec,
    params: &WorkflowParams,
    dir: &Path,
    state: &mut State,
) -> std::result::Result<(), Failure> {
    let report = state.report.as_mut().expect("report initialized");

    // load
    let load = || -> Result<(ImageStack, Option<ImageStack>)> {
        let stack = load_stack(&rep.stack, &rep.sidecar)?;
        let m = stack.metadata();
        let meta = StackMetadata::new(
            rep.pixel_size_um.map(Quantity::um).unwrap_or(m.pixel_size),
            rep.frame_interval_min.map(Quantity::minutes).unwrap_or(m.frame_interval),
            m.channel_names.clone(),
            m.origin_id.clone(),
        )?;
        let stack = stack.with_metadata(meta)?;
        let labels = match (&params.segmentation, &rep.labels, &rep.labels_sidecar) {
            (SegmentationSource::Labels, Some(l), Some(s)) => {
                let labels = load_stack(l, s)?;
                let (t, h, w, _) = stack.shape();
                let (lt, lh, lw, _) = labels.shape();
                if (t, h, w) != (lt, lh, lw) {
                    return Err(Error::InconsistentInput(format!(
                        "label stack is {lt}x{lh}x{lw} but image stack is {t}x{h}x{w}"
                    )));
                }
                Some(labels)
            }
            _ => None,
        };
        Ok((stack, labels))
    };
    let (stack, labels) = load().map_err(at("load"))?;
    let meta = stack.metadata().clone();
    state.meta = Some(meta.clone());
    state.shape = Some(stack.shape());

    // segment
    let overlay = match &params.segmentation {
        SegmentationSource::Threshold {
            channel,
            threshold,
            polarity,
        } => {
            let c = meta
                .channel_index(channel)
                .ok_or_else(|| Error::InvalidInput(format!("segmentation channel {channel:?} not in stack")))
                .map_err(at("segment"))?;
            segment_threshold(&stack, c, *threshold, *polarity).map_err(at("segment"))?
        }
        SegmentationSource::Labels => {
            let labels = labels.as_ref().expect("label stack loaded");
            let ingested = ingest_label_masks(labels).map_err(at("segment"))?;
            if ingested.split_labels > 0 {
                report.warnings.push(format!(
                    "{} label(s) covered several disconnected blobs and were split",
                    ingested.split_labels
                ));
            }
            ingested.overlay
        }
    };

    // filter
    let overlay: Overlay = match &params.size_filter {
        Some(f) => size_filter(
            &overlay,
            Quantity::um2(f.min_area_um2),
            Quantity::um2(f.max_area_um2),
            meta.pixel_size,
        )
        .map_err(at("filter"))?,
        None => overlay,
    };
    state.n_detections = Some(overlay.n_detections());
    overlay.write_jsonl(&dir.join("overlay.jsonl")).map_err(at("filter"))?;
    overlay.write_rle(&dir.join("masks.rle")).map_err(at("filter"))?;

    // track
    let tg = (|| -> Result<TrackletGraph> {
        let graph = track(&overlay, &meta, &params.tracking.params()?)?;
        let tg = build_tracklets(&graph, &overlay)?;
        min_length_filter(&tg, params.filters.min_frames)
    })()
    .map_err(at("track"))?;

    // features
    let det = extract_detection_features(&overlay, &stack, Some(&tg)).map_err(at("features"))?;
    let tt = extract_tracklet_features(&tg, &det).map_err(at("features"))?;
    det.write_csv(&dir.join("detections.csv")).map_err(at("features"))?;
    tt.write_csv(&dir.join("tracklets.csv")).map_err(at("features"))?;
    report.detections = Some(det);
    report.tracklets = Some(tt);
    report.lineage = Some(tg);
    let det = report.detections.as_ref().expect("set above");
    let tt = report.tracklets.as_ref().expect("set above");
    let tg = report.lineage.as_ref().expect("set above");

    // analysis
    let a = &params.analyses;
    if a.growth_measures {
        let pop = population_series(det).map_err(at("analysis"))?;
        let tca = tca_series(&overlay, &meta).map_err(at("analysis"))?;
        for (measure, series) in [(Measure::CC, pop.cc), (Measure::TCA, tca), (Measure::TSCA, pop.tsca)] {
            let key = measure.to_string();
            match fit_loglinear(&series, measure) {
                Ok(fit) => {
                    report.fits.insert(key.clone(), fit);
                }
                Err(e) => report.warnings.push(format!("{key} fit: {e}")),
            }
            report.series.insert(key, series);
        }
    }
    if a.co_culture {
        let ch = &params.channels.fluorescence;
        if let Some(missing) = ch.iter().find(|c| meta.channel_index(c).is_none()) {
            return Err(Failure {
                status: "failed:analysis:missing_channel".into(),
                error: Error::InvalidInput(format!("missing fluorescence channel {missing}")),
            });
        }
        let assign = classify_strains(
            tt,
            [ch[0].as_str(), ch[1].as_str()],
            Quantity::au(params.channels.nonfluor_threshold_au),
        )
        .map_err(at("analysis"))?;
        let fits = per_strain_growth(det, &assign);
        for (s, fit) in fits.into_iter().enumerate() {
            let key = format!("TSCA_strain{s}");
            let series = strain_tsca_series(det, &assign, s).map_err(at("analysis"))?;
            match fit {
                Ok(fit) => {
                    report.fits.insert(key.clone(), fit);
                }
                Err(e) => report.warnings.push(format!("{key} fit: {e}")),
            }
            report.series.insert(key, series);
        }
        report.strains = Some(assign);
    }
    if a.single_cell_igr {
        let labels: BTreeSet<u32> = if params.filters.full_cycle {
            full_cycle_filter(tg)
        } else {
            tg.tracklets().map(|t| t.label).collect()
        };
        state.full_cycle = Some(full_cycle_filter(tg).len());
        report.igr = tracklet_igrs(det, &labels, meta.frame_interval, params.igr.sigma_frames)
            .map_err(at("analysis"))?;
        if report.igr.is_empty() {
            report.warnings.push("no cells qualified for IGR analysis".into());
        }
    }
    write_json(&dir.join("fits.json"), &fits_json(&report.fits)).map_err(at("analysis"))?;
    write_igr_csv(&dir.join("igr.csv"), &report.igr).map_err(at("analysis"))?;

    // report
    render_plots(
        dir,
        &PlotInputs {
            fits: &report.fits,
            series: &report.series,
            lineage: Some(tg),
            frame_interval: meta.frame_interval,
            strain_colors: report.strains.as_ref().map(strain_colors),
            igr: &report.igr,
            show_igr: a.single_cell_igr,
            phases: &params.igr.phases,
        },
    )
    .map_err(at("report"))?;
    Ok(())
}

fn write_report_json(dir: &Path, params: &WorkflowParams, report: &ReplicateReport, state: &State) -> Result<()> {
    let metadata = match (&state.meta, state.shape) {
        (Some(m), Some((t, h, w, _))) => json!({
            "pixel_size_um": m.pixel_size.canonical(),
            "frame_interval_min": m.frame_interval.value_in(Unit::Minute)?,
            "channels": m.channel_names,
            "n_frames": t,
            "height": h,
            "width": w,
        }),
        _ => Value::Null,
    };
    let error = report.error.as_ref().map(|message| {
        json!({ "stage": report.failed_stage(), "message": message })
    });
    let strains = report.strains.as_ref().map(|s| {
        json!({
            "channels": s.channels,
            "centers_au": s.centers,
            "members": [s.members(0).collect::<Vec<_>>(), s.members(1).collect::<Vec<_>>()],
            "discarded": s.discarded,
        })
    });
    let mut files: Vec<String> = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.retain(|f| f != "report.json");
    files.push("report.json".into());
    files.sort();
    let doc = json!({
        "origin_id": report.origin_id,
        "status": report.status,
        "error": error,
        "provenance": {
            "config_sha256": report.config_sha256,
            "version": env!("CARGO_PKG_VERSION"),
        },
        "params": params,
        "metadata": metadata,
        "counts": {
            "detections": state.n_detections,
            "tracklets": report.lineage.as_ref().map(TrackletGraph::len),
            "full_cycle": state.full_cycle,
            "igr_cells": report.igr.len(),
        },
        "fits": fits_json(&report.fits),
        "series": series_json(&report.series),
        "strains": strains,
        "warnings": report.warnings,
        "files": files,
    });
    write_json(&dir.join("report.json"), &doc)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Rebuild the lineage from exported detection and tracklet tables.
pub fn lineage_from_tables(det: &DetectionTable, tt: &TrackletTable) -> Result<TrackletGraph> {
    let mut members: BTreeMap<u32, Vec<(usize, u64)>> = BTreeMap::new();
    for r in det.rows.iter().filter(|r| r.label != 0) {
        members.entry(r.label).or_default().push((r.frame, r.id));
    }
    let tracklets = tt
        .rows
        .iter()
        .map(|row| {
            let mut m = members.remove(&row.label).ok_or_else(|| {
                Error::InconsistentInput(format!("tracklet {} has no detections", row.label))
            })?;
            m.sort_unstable();
            Ok(Tracklet {
                label: row.label,
                parent: row.parent,
                birth_frame: m[0].0,
                end_frame: m[m.len() - 1].0,
                detections: m.into_iter().map(|(_, id)| id).collect(),
                fate: row.fate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(label) = members.keys().next() {
        return Err(Error::InconsistentInput(format!("detections carry unknown label {label}")));
    }
    TrackletGraph::new(tracklets)
}

/// Re-render a replicate's plots from its exported files, without
/// recomputing any analysis. Returns the written paths.
pub fn rerender(dir: &Path) -> Result<Vec<PathBuf>> {
    let report_path = dir.join("report.json");
    let text = std::fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::json(&report_path, e))?;
    let fits = read_fits(&dir.join("fits.json"))?;
    let series = series_from_json(&doc["series"])?;
    let params: WorkflowParams = serde_json::from_value(doc["params"].clone())
        .map_err(|e| Error::InvalidInput(format!("report.json params: {e}")))?;
    let interval_min = doc["metadata"]["frame_interval_min"]
        .as_f64()
        .ok_or_else(|| Error::InvalidInput("report.json has no frame interval".into()))?;
    let det = DetectionTable::read_csv(&dir.join("detections.csv"), None)?;
    let tt = TrackletTable::read_csv(&dir.join("tracklets.csv"))?;
    let lineage = lineage_from_tables(&det, &tt)?;
    let igr_path = dir.join("igr.csv");
    let igr = if igr_path.exists() { read_igr_csv(&igr_path)? } else { Vec::new() };
    let strain_colors = doc["strains"]["members"].as_array().map(|groups| {
        groups
            .iter()
            .enumerate()
            .flat_map(|(s, g)| {
                g.as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(Value::as_u64)
                    .map(move |l| (l as u32, s as f64))
            })
            .collect()
    });
    render_plots(
        dir,
        &PlotInputs {
            fits: &fits,
            series: &series,
            lineage: Some(&lineage),
            frame_interval: Quantity::minutes(interval_min),
            strain_colors,
            igr: &igr,
            show_igr: params.analyses.single_cell_igr,
            phases: &params.igr.phases,
        },
    )
}

/// Cross-replicate summary of one fit key.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSummary {
    /// (origin_id, µ in 1/h) for every replicate that produced this fit.
    pub values: Vec<(String, f64)>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single replicate.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl MeasureSummary {
    pub fn from_values(values: Vec<(String, f64)>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.1).sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        Some(MeasureSummary { values, mean, std, min, max })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    /// Per-replicate reports ordered by origin_id.
    pub replicates: Vec<ReplicateReport>,
    pub measures: BTreeMap<String, MeasureSummary>,
}

impl AggregateReport {
    pub fn n_succeeded(&self) -> usize {
        self.replicates.iter().filter(|r| r.succeeded()).count()
    }
}

/// Run every replicate (up to `jobs` at once) and aggregate their fits
/// into `output/aggregate`.
pub fn run_batch(cfg: &BatchConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let mut specs: Vec<&ReplicateSpec> = cfg.replicates.iter().collect();
    specs.sort_by(|a, b| a.origin_id.cmp(&b.origin_id));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    info!("running {} replicates on {} worker(s)", specs.len(), cfg.jobs);
    let replicates = pool.install(|| {
        specs
            .par_iter()
            .map(|r| run_workflow(r, &cfg.workflow, &cfg.output.join(&r.origin_id)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut per_key: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for r in replicates.iter().filter(|r| r.succeeded()) {
        for (key, fit) in &r.fits {
            per_key.entry(key.clone()).or_default().push((r.origin_id.clone(), fit.mu_per_h()));
        }
    }
    let measures: BTreeMap<String, MeasureSummary> = per_key
        .into_iter()
        .filter_map(|(k, v)| MeasureSummary::from_values(v).map(|s| (k, s)))
        .collect();
    let agg = AggregateReport { replicates, measures };
    write_aggregate(&cfg.output.join("aggregate"), &agg)?;
    if agg.n_succeeded() == 0 {
        let statuses: Vec<String> = agg
            .replicates
            .iter()
            .map(|r| format!("{}: {}", r.origin_id, r.status))
            .collect();
        return Err(Error::BatchFailed(statuses.join(", ")));
    }
    Ok(agg)
}

/// Recompute the per-measure summaries of a batch output directory from its
/// aggregate.json replicate list and the replicates' fits.json files.
pub fn summaries_from_files(out: &Path) -> Result<(Vec<String>, BTreeMap<String, MeasureSummary>)> {
    let path = out.join("aggregate").join("aggregate.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut ok = Vec::new();
    let mut per_key: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for r in doc["replicates"].as_array().into_iter().flatten() {
        if r["status"] != "ok" {
            continue;
        }
        let origin = r["origin_id"]
            .as_str()
            .ok_or_else(|| Error::InvalidInput(format!("{}: replicate without origin_id", path.display())))?;
        for (key, fit) in read_fits(&out.join(origin).join("fits.json"))? {
            per_key.entry(key).or_default().push((origin.to_string(), fit.mu_per_h()));
        }
        ok.push(origin.to_string());
    }
    let summaries = per_key
        .into_iter()
        .filter_map(|(k, v)| MeasureSummary::from_values(v).map(|s| (k, s)))
        .collect();
    Ok((ok, summaries))
}

/// Re-render the rate distribution plots of a batch output directory.
/// Returns the origin ids of the successful replicates.
pub fn rerender_aggregate(out: &Path) -> Result<Vec<String>> {
    let (ok, summaries) = summaries_from_files(out)?;
    write_rate_plots(&out.join("aggregate").join("plots"), &summaries)?;
    Ok(ok)
}

fn write_rate_plots(plots: &Path, measures: &BTreeMap<String, MeasureSummary>) -> Result<()> {
    std::fs::create_dir_all(plots).map_err(|e| Error::io(plots, e))?;
    for (key, s) in measures {
        let svg = render_rate_distribution(key, &s.values)?;
        write_text(&plots.join(format!("rate_distribution_{key}.svg")), &svg)?;
    }
    Ok(())
}

fn write_aggregate(dir: &Path, agg: &AggregateReport) -> Result<()> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let replicates: Vec<Value> = agg
        .replicates
        .iter()
        .map(|r| {
            json!({
                "origin_id": r.origin_id,
                "status": r.status,
                "fits": format!("{}/fits.json", r.origin_id),
            })
        })
        .collect();
    let measures: serde_json::Map<String, Value> = agg
        .measures
        .iter()
        .map(|(k, s)| {
            let values: Vec<Value> = s
                .values
                .iter()
                .map(|(o, mu)| json!({ "origin_id": o, "mu_per_h": mu }))
                .collect();
            (
                k.clone(),
                json!({
                    "n": s.n(),
                    "mean": s.mean,
                    "std": s.std,
                    "min": s.min,
                    "max": s.max,
                    "single_replicate": s.n() == 1,
                    "replicates": values,
                }),
            )
        })
        .collect();
    let doc = json!({
        "n_replicates": agg.replicates.len(),
        "n_succeeded": agg.n_succeeded(),
        "version": env!("CARGO_PKG_VERSION"),
        "replicates": replicates,
        "measures": measures,
    });
    write_json(&dir.join("aggregate.json"), &doc)?;

    let csv_path = dir.join("growth_rates.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["origin_id", "measure", "mu_per_h", "r2", "n"])?;
    for r in agg.replicates.iter().filter(|r| r.succeeded()) {
        for (key, fit) in &r.fits {
            w.write_record([
                r.origin_id.clone(),
                key.clone(),
                fit.mu_per_h().to_string(),
                fit.r_squared.to_string(),
                fit.n_points.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    write_rate_plots(&plots, &agg.measures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{simulate, SimScenario};

    fn workflow() -> WorkflowParams {
        parse_config(json!({
            "segmentation": { "source": "threshold", "channel": "phase", "threshold": 0.5 },
            "tracking": { "max_link_distance_um": 3.0 }
        }))
        .unwrap()
    }

    fn sim_dir(dir: &Path, seed: u64, mu: f64) -> ReplicateSpec {
        let mut sc = SimScenario::basic(seed, mu, 16);
        sc.origin_id = format!("rep{seed}");
        let sim = simulate(&sc).unwrap();
        let d = dir.join(format!("in{seed}"));
        sim.write(&d).unwrap();
        let mut spec = AnalyzeConfig::for_simulation(&sim).replicate;
        spec.resolve_paths(&d);
        spec
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut v = json!({ "a": { "b": 1 }, "list": [{ "x": 1 }] });
        apply_override(&mut v, "a.b", "2.5").unwrap();
        apply_override(&mut v, "a.c.d", "hello").unwrap();
        apply_override(&mut v, "list.0.x", "true").unwrap();
        assert_eq!(v, json!({ "a": { "b": 2.5, "c": { "d": "hello" } }, "list": [{ "x": true }] }));
        assert!(apply_override(&mut v, "a.b.c", "1").is_err());
        assert!(apply_override(&mut v, "list.3.x", "1").is_err());
        assert!(apply_override(&mut v, "a..b", "1").is_err());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: Value = serde_json::from_str(r#"{"b":[{"z":1,"a":2}],"a":"x"}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":"x","b":[{"a":2,"z":1}]}"#);
    }

    #[test]
    fn config_validation() {
        let w = workflow();
        assert!(w.validate().is_ok());
        let mut none = w.clone();
        none.analyses.growth_measures = false;
        assert!(matches!(none.validate(), Err(Error::InvalidConfig(_))));
        let mut cc = w.clone();
        cc.analyses.co_culture = true;
        assert!(cc.validate().is_err());
        let rep = ReplicateSpec {
            origin_id: "a".into(),
            stack: "s".into(),
            sidecar: "j".into(),
            labels: None,
            labels_sidecar: None,
            pixel_size_um: Some(-0.1),
            frame_interval_min: None,
        };
        let msg = rep.validate().unwrap_err().to_string();
        assert!(msg.contains("pixel_size_um"), "{msg}");
        let ok = ReplicateSpec { pixel_size_um: None, ..rep.clone() };
        let cfg = BatchConfig {
            replicates: vec![ok.clone(), ok],
            workflow: w,
            output: "o".into(),
            jobs: 1,
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("duplicate"));
        assert!(parse_config::<WorkflowParams>(json!({ "segmentation": { "source": "labels" }, "bogus": 1 })).is_err());
    }

    #[test]
    fn noiseless_replicate_fits_exactly_and_rerenders_identically() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = sim_dir(tmp.path(), 3, 0.6);
        let mut params = workflow();
        params.analyses.single_cell_igr = true;
        let out = tmp.path().join("out");
        let rep = run_workflow(&spec, &params, &out).unwrap();
        assert!(rep.succeeded(), "{:?}", rep.error);
        assert!((rep.fits["TSCA"].r_squared - 1.0).abs() < 1e-3);
        for f in ["detections.csv", "tracklets.csv", "fits.json", "igr.csv", "overlay.jsonl", "masks.rle", "report.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let before: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(out.join("plots"))
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                let bytes = std::fs::read(&p).unwrap();
                (p, bytes)
            })
            .collect();
        assert!(before.len() >= 4);
        let written = rerender(&out).unwrap();
        assert_eq!(written.len(), before.len());
        for (p, bytes) in before {
            assert_eq!(std::fs::read(&p).unwrap(), bytes, "{}", p.display());
        }
        let fits = read_fits(&out.join("fits.json")).unwrap();
        assert_eq!(fits, rep.fits);
    }

    #[test]
    fn stage_failures_are_recorded() {
        let tmp = tempfile::tempdir().unwrap();
        let good = sim_dir(tmp.path(), 1, 0.5);
        let missing = ReplicateSpec {
            origin_id: "missing".into(),
            stack: tmp.path().join("nope.raw"),
            ..good.clone()
        };
        let cfg = BatchConfig {
            replicates: vec![missing, good.clone()],
            workflow: workflow(),
            output: tmp.path().join("out"),
            jobs: 2,
        };
        let agg = run_batch(&cfg).unwrap();
        assert_eq!(agg.replicates[0].status, "failed:load");
        assert_eq!(agg.replicates[0].failed_stage(), Some("load"));
        assert!(agg.replicates[1].succeeded());
        assert!(agg.measures["TSCA"].n() == 1 && agg.measures["TSCA"].std == 0.0);
        let doc: Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/missing/report.json")).unwrap()).unwrap();
        assert_eq!(doc["error"]["stage"], "load");

        let mut cc = workflow();
        cc.analyses.co_culture = true;
        cc.channels.fluorescence = vec!["gfp".into(), "rfp".into()];
        let rep = run_workflow(&good, &cc, &tmp.path().join("cc")).unwrap();
        assert_eq!(rep.status, "failed:analysis:missing_channel");

        let only_missing = BatchConfig {
            replicates: vec![ReplicateSpec {
                origin_id: "gone".into(),
                stack: tmp.path().join("gone.raw"),
                ..good
            }],
            workflow: workflow(),
            output: tmp.path().join("out2"),
            jobs: 1,
        };
        assert!(matches!(run_batch(&only_missing), Err(Error::BatchFailed(_))));
    }

    #[test]
    fn summary_statistics() {
        let s = MeasureSummary::from_values(vec![("a".into(), 1.0), ("b".into(), 3.0)]).unwrap();
        assert_eq!((s.mean, s.min, s.max), (2.0, 1.0, 3.0));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(MeasureSummary::from_values(Vec::new()).is_none());
    }
}
