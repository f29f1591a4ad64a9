//! Deterministic synthetic colonies with exact ground truth.
//!
//! Cells grow exponentially in continuous time and divide when their area
//! reaches a per-cell threshold. The lineage is simulated first, then laid
//! out on a grid of slots: the founders split the grid between them and
//! every division splits the mother's region into two halves along its
//! longer side, with each daughter centered in its half. Non-dividing cells
//! never move, and cells never touch.
//!
//! Each cell is drawn as an axis-aligned rectangle `cell_width_um` tall whose
//! pixel count is the rounded true area. Remainder pixels go into partial end
//! columns.
//!
//! Randomness comes from two Xoshiro256++ streams seeded through
//! `seed_from_u64`: one for the lineage (`seed`) and one for fluorescence
//! noise (`seed ^ FLUOR_STREAM`).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_tracklet_features, DetectionRow, DetectionTable, TrackletTable};
use crate::imagestack::{ImageStack, StackMetadata};
use crate::segmentation::{CellDetection, Overlay};
use crate::tracking::{build_tracklets, TrackingGraph, TrackletGraph};
use crate::units::{px_to_physical, Dimension, Quantity, QuantitySeries};

const FLUOR_STREAM: u64 = 0xD1B5_4A32_D192_ED03;
const GAP_PX: usize = 2;
const MAX_CELLS: usize = 200_000;
/// Frame times are compared against birth/division times with this slack.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainSpec {
    pub mu_star_per_h: f64,
    /// Mean fluorescence per fluorescence channel.
    #[serde(default)]
    pub fluor_means_au: Vec<f64>,
    #[serde(default)]
    pub fluor_std_au: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSwitch {
    pub t_switch_h: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub seed: u64,
    pub strains: Vec<StrainSpec>,
    #[serde(default)]
    pub fluor_channels: Vec<String>,
    pub n_initial_cells: usize,
    pub a0_um2: f64,
    pub a_div_um2: f64,
    /// Standard deviation of the log division threshold.
    #[serde(default)]
    pub a_div_noise: f64,
    /// Standard deviation of the log per-cell rate factor.
    #[serde(default)]
    pub mu_cell_cv: f64,
    pub frame_interval_min: f64,
    pub n_frames: usize,
    pub pixel_size_um: f64,
    #[serde(default = "default_cell_width")]
    pub cell_width_um: f64,
    /// Image size; when absent the image is sized to fit the colony.
    #[serde(default)]
    pub height_px: Option<usize>,
    #[serde(default)]
    pub width_px: Option<usize>,
    /// Multipliers on every strain rate from each switch time onwards.
    #[serde(default)]
    pub rate_schedule: Vec<RateSwitch>,
    #[serde(default = "default_origin")]
    pub origin_id: String,
}

fn default_cell_width() -> f64 {
    0.8
}

fn default_origin() -> String {
    "sim".into()
}

impl SimScenario {
    /// Single-strain scenario without noise or fluorescence.
    pub fn basic(seed: u64, mu_star_per_h: f64, n_frames: usize) -> Self {
        SimScenario {
            seed,
            strains: vec![StrainSpec {
                mu_star_per_h,
                fluor_means_au: vec![],
                fluor_std_au: 0.0,
            }],
            fluor_channels: vec![],
            n_initial_cells: 1,
            a0_um2: 1.0,
            a_div_um2: 2.0,
            a_div_noise: 0.0,
            mu_cell_cv: 0.0,
            frame_interval_min: 15.0,
            n_frames,
            pixel_size_um: 0.1,
            cell_width_um: default_cell_width(),
            height_px: None,
            width_px: None,
            rate_schedule: vec![],
            origin_id: default_origin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("scenario: {m}")));
        if self.strains.is_empty() {
            return bad("at least one strain is required");
        }
        if self.n_initial_cells == 0 || self.n_frames == 0 {
            return bad("n_initial_cells and n_frames must be positive");
        }
        for (name, v) in [
            ("a0_um2", self.a0_um2),
            ("a_div_um2", self.a_div_um2),
            ("frame_interval_min", self.frame_interval_min),
            ("pixel_size_um", self.pixel_size_um),
            ("cell_width_um", self.cell_width_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.a_div_noise >= 0.0 && self.mu_cell_cv >= 0.0) {
            return bad("noise parameters must be non-negative");
        }
        let n_fluor = self.fluor_channels.len();
        for s in &self.strains {
            if !(s.mu_star_per_h > 0.0 && s.mu_star_per_h.is_finite()) {
                return bad("mu_star_per_h must be positive");
            }
            if s.fluor_means_au.len() != n_fluor {
                return bad("every strain needs one fluorescence mean per fluorescence channel");
            }
            if !(s.fluor_std_au >= 0.0) {
                return bad("fluor_std_au must be non-negative");
            }
        }
        if self.fluor_channels.iter().any(|c| c == "phase") {
            return bad("channel name phase is reserved");
        }
        for w in self.rate_schedule.windows(2) {
            if w[1].t_switch_h <= w[0].t_switch_h {
                return bad("rate_schedule times must be strictly increasing");
            }
        }
        if self.rate_schedule.iter().any(|s| !(s.multiplier > 0.0) || !s.t_switch_h.is_finite()) {
            return bad("rate_schedule multipliers must be positive");
        }
        if self.height_px.is_some() != self.width_px.is_some() {
            return bad("height_px and width_px must be given together");
        }
        Ok(())
    }

    pub fn frame_interval_h(&self) -> f64 {
        self.frame_interval_min / 60.0
    }

    pub fn frame_times_h(&self) -> Vec<f64> {
        let dt = Quantity::minutes(self.frame_interval_min);
        (0..self.n_frames).map(|t| dt.scale(t as f64).canonical()).collect()
    }

    pub fn channel_names(&self) -> Vec<String> {
        std::iter::once("phase".to_string())
            .chain(self.fluor_channels.iter().cloned())
            .collect()
    }

    /// Rate multiplier pieces as `(start, end, multiplier)` from time 0.
    fn schedule_pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut pieces = Vec::new();
        let mut start = f64::NEG_INFINITY;
        let mut mult = 1.0;
        for s in &self.rate_schedule {
            pieces.push((start, s.t_switch_h, mult));
            start = s.t_switch_h;
            mult = s.multiplier;
        }
        pieces.push((start, f64::INFINITY, mult));
        pieces
    }
}

/// One simulated cell from birth to division (or past the last frame).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthCell {
    pub index: usize,
    pub parent: Option<usize>,
    pub strain: usize,
    pub birth_h: f64,
    pub birth_area_um2: f64,
    /// Division time; `None` when the cell outlives the movie.
    pub division_h: Option<f64>,
    pub threshold_um2: f64,
    pub rate_factor: f64,
    pub children: Vec<usize>,
}

/// Exact ground truth for a simulated movie.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scenario: SimScenario,
    pub cells: Vec<TruthCell>,
    /// Rendered detections, ids in (frame, first pixel) order.
    pub overlay: Overlay,
    pub detection_cell: BTreeMap<u64, usize>,
    /// Analytic area per detection in µm².
    pub true_area: BTreeMap<u64, f64>,
    pub links: TrackingGraph,
    pub lineage: TrackletGraph,
    pub frame_times_h: Vec<f64>,
}

impl GroundTruth {
    pub fn strain_of_detection(&self, id: u64) -> Option<usize> {
        self.detection_cell.get(&id).map(|&c| self.cells[c].strain)
    }

    pub fn strain_of_label(&self, label: u32) -> Option<usize> {
        let t = self.lineage.get(label)?;
        self.strain_of_detection(t.detections[0])
    }

    /// True cell count per frame.
    pub fn cc(&self) -> Vec<usize> {
        self.overlay.frames().iter().map(Vec::len).collect()
    }

    /// True total single-cell area per frame.
    pub fn tsca(&self) -> Result<QuantitySeries> {
        let values = self
            .overlay
            .frames()
            .iter()
            .map(|f| f.iter().map(|d| self.true_area[&d.id]).sum())
            .collect();
        QuantitySeries::from_canonical("TSCA", self.frame_times_h.clone(), values, Dimension::AREA)
    }

    /// Largest distance any cell moves between consecutive frames.
    pub fn max_displacement_um(&self) -> f64 {
        let px = self.scenario.pixel_size_um;
        self.links
            .edges()
            .iter()
            .map(|&(a, b)| {
                let (p, q) = (self.overlay.get(a).unwrap(), self.overlay.get(b).unwrap());
                let dx = p.centroid_px[0] - q.centroid_px[0];
                let dy = p.centroid_px[1] - q.centroid_px[1];
                (dx * dx + dy * dy).sqrt() * px
            })
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let label_of = self.lineage.label_index();
        let detections: Vec<_> = self
            .overlay
            .detections()
            .map(|d| {
                serde_json::json!({
                    "id": d.id,
                    "frame": d.frame,
                    "label": label_of[&d.id],
                    "strain": self.strain_of_detection(d.id),
                    "true_area_um2": self.true_area[&d.id],
                    "centroid_px": d.centroid_px,
                })
            })
            .collect();
        serde_json::json!({
            "frame_times_h": self.frame_times_h,
            "lineage": self.lineage.to_json(),
            "detections": detections,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Channels: `phase` (1 inside cells) followed by the fluorescence channels.
    pub stack: ImageStack,
    /// One channel holding the true tracklet label of every pixel, 0 outside.
    pub labels: ImageStack,
    pub truth: GroundTruth,
}

impl Simulation {
    /// Write `stack.raw`, `stack.json`, `labels.raw`, `labels.json`,
    /// `truth.json` and `scenario.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.stack.write_raw(&dir.join("stack.raw"))?;
        self.stack.metadata().write_sidecar(&dir.join("stack.json"))?;
        self.labels.write_raw(&dir.join("labels.raw"))?;
        self.labels.metadata().write_sidecar(&dir.join("labels.json"))?;
        write_json(&dir.join("truth.json"), &self.truth.to_json())?;
        let scenario = serde_json::to_value(&self.truth.scenario).map_err(|e| Error::json(dir, e))?;
        write_json(&dir.join("scenario.json"), &scenario)
    }
}

pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Time at which the integrated log growth from `start` reaches `target`.
fn time_to_grow(pieces: &[(f64, f64, f64)], mu: f64, start: f64, target: f64) -> f64 {
    if target <= 0.0 {
        return start;
    }
    let mut remaining = target;
    for &(lo, hi, mult) in pieces {
        if hi <= start {
            continue;
        }
        let from = lo.max(start);
        let rate = mu * mult;
        if hi.is_infinite() || rate * (hi - from) >= remaining {
            return from + remaining / rate;
        }
        remaining -= rate * (hi - from);
    }
    f64::INFINITY
}

/// Integrated log growth between `from` and `to`.
fn log_growth(pieces: &[(f64, f64, f64)], mu: f64, from: f64, to: f64) -> f64 {
    pieces
        .iter()
        .map(|&(lo, hi, mult)| {
            let a = lo.max(from);
            let b = hi.min(to);
            if b > a {
                mu * mult * (b - a)
            } else {
                0.0
            }
        })
        .sum()
}

fn simulate_lineage(sc: &SimScenario) -> Result<Vec<TruthCell>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(sc.seed);
    let pieces = sc.schedule_pieces();
    let t_end = *sc.frame_times_h().last().unwrap_or(&0.0);
    let mut cells: Vec<TruthCell> = Vec::new();
    let mut queue = VecDeque::new();
    let dt = sc.frame_interval_h();
    // Thresholds are redrawn until the cell lives at least one frame
    // interval, so that every cell is imaged at least once.
    let spawn = |cells: &mut Vec<TruthCell>,
                 rng: &mut Xoshiro256PlusPlus,
                 parent: Option<usize>,
                 strain: usize,
                 birth_h: f64,
                 birth_area_um2: f64|
     -> Result<usize> {
        let z_rate: f64 = StandardNormal.sample(rng);
        let rate_factor = (sc.mu_cell_cv * z_rate).exp();
        let mu = sc.strains[strain].mu_star_per_h * rate_factor;
        let mut threshold_um2 = f64::NAN;
        for _ in 0..1000 {
            let z_div: f64 = StandardNormal.sample(rng);
            let candidate = sc.a_div_um2 * (sc.a_div_noise * z_div).exp();
            if time_to_grow(&pieces, mu, birth_h, (candidate / birth_area_um2).ln()) - birth_h >= dt {
                threshold_um2 = candidate;
                break;
            }
        }
        if threshold_um2.is_nan() {
            return Err(Error::InvalidInput(format!(
                "a cell born at {birth_area_um2:.4} um2 cannot live one frame interval before dividing; raise a_div_um2 or lower the frame interval"
            )));
        }
        let index = cells.len();
        cells.push(TruthCell {
            index,
            parent,
            strain,
            birth_h,
            birth_area_um2,
            division_h: None,
            threshold_um2,
            rate_factor,
            children: vec![],
        });
        Ok(index)
    };
    for k in 0..sc.n_initial_cells {
        let i = spawn(&mut cells, &mut rng, None, k % sc.strains.len(), 0.0, sc.a0_um2)?;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        if cells.len() > MAX_CELLS {
            return Err(Error::ScenarioOverflow(format!("more than {MAX_CELLS} cells")));
        }
        let c = &cells[i];
        let mu = sc.strains[c.strain].mu_star_per_h * c.rate_factor;
        let td = time_to_grow(&pieces, mu, c.birth_h, (c.threshold_um2 / c.birth_area_um2).ln());
        if td > t_end + TIME_EPS {
            continue;
        }
        let (strain, birth) = (c.strain, c.birth_h);
        if first_frame_at_or_after(sc, birth) >= first_frame_at_or_after(sc, td) {
            return Err(Error::InvalidInput(format!(
                "cell {i} lives {:.4} h, shorter than the frame interval; lower the division noise or the frame interval",
                td - birth
            )));
        }
        let area = c.birth_area_um2 * log_growth(&pieces, mu, birth, td).exp();
        cells[i].division_h = Some(td);
        for _ in 0..2 {
            let d = spawn(&mut cells, &mut rng, Some(i), strain, td, area / 2.0)?;
            cells[i].children.push(d);
            queue.push_back(d);
        }
    }
    Ok(cells)
}

fn first_frame_at_or_after(sc: &SimScenario, t: f64) -> usize {
    let dt = sc.frame_interval_h();
    let mut k = ((t - TIME_EPS) / dt).ceil().max(0.0) as usize;
    while k > 0 && k as f64 * dt >= t - TIME_EPS {
        k -= 1;
    }
    while (k as f64 * dt) < t - TIME_EPS {
        k += 1;
    }
    k
}

/// Pixel footprint of a cell with `area_px` pixels and `width` rows, as
/// offsets from its top-left corner. Returns the column count too.
fn cell_shape(area_px: usize, width: usize) -> Option<(Vec<(usize, usize)>, usize)> {
    let full = area_px / width;
    if full == 0 {
        return None;
    }
    let rem = area_px % width;
    let (left, right) = (rem / 2, rem - rem / 2);
    let mut px = Vec::with_capacity(area_px);
    let mut col = 0;
    if left > 0 {
        px.extend((0..left).map(|r| (r, 0)));
        col = 1;
    }
    for c in col..col + full {
        px.extend((0..width).map(|r| (r, c)));
    }
    col += full;
    if right > 0 {
        px.extend((0..right).map(|r| (r, col)));
        col += 1;
    }
    Some((px, col))
}

#[derive(Debug, Clone, Copy)]
struct Region {
    row: usize,
    col: usize,
    rows: usize,
    cols: usize,
}

impl Region {
    /// Split into two halves along the longer pixel side that has at least
    /// two slots.
    fn split(self, slot_h: usize, slot_w: usize) -> Option<(Region, Region)> {
        let vertical_ok = self.rows >= 2;
        let horizontal_ok = self.cols >= 2;
        let split_rows = match (vertical_ok, horizontal_ok) {
            (false, false) => return None,
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.rows * slot_h > self.cols * slot_w,
        };
        Some(if split_rows {
            let h = self.rows / 2;
            (
                Region { rows: h, ..self },
                Region { row: self.row + h, rows: self.rows - h, ..self },
            )
        } else {
            let w = self.cols / 2;
            (
                Region { cols: w, ..self },
                Region { col: self.col + w, cols: self.cols - w, ..self },
            )
        })
    }
}

fn assign_founders(
    region: Region,
    founders: &[usize],
    slot: (usize, usize),
    out: &mut BTreeMap<usize, Region>,
) -> Result<()> {
    if founders.len() == 1 {
        out.insert(founders[0], region);
        return Ok(());
    }
    let (a, b) = region
        .split(slot.0, slot.1)
        .ok_or_else(|| Error::ScenarioOverflow("grid too small for the founder cells".into()))?;
    let k = founders.len() / 2;
    assign_founders(a, &founders[..k], slot, out)?;
    assign_founders(b, &founders[k..], slot, out)
}

/// Number of division levels observed below each cell.
fn depth_below(cells: &[TruthCell], i: usize) -> usize {
    cells[i]
        .children
        .iter()
        .map(|&c| 1 + depth_below(cells, c))
        .max()
        .unwrap_or(0)
}

fn auto_grid(levels: usize, slot_h: usize, slot_w: usize) -> (usize, usize) {
    let (mut rows, mut cols) = (1usize, 1usize);
    for _ in 0..levels {
        if rows * slot_h <= cols * slot_w {
            rows *= 2;
        } else {
            cols *= 2;
        }
    }
    (rows, cols)
}

pub fn simulate(sc: &SimScenario) -> Result<Simulation> {
    sc.validate()?;
    let cells = simulate_lineage(sc)?;
    let pieces = sc.schedule_pieces();
    let times = sc.frame_times_h();
    let px = sc.pixel_size_um;
    let width_px = ((sc.cell_width_um / px).round() as usize).max(1);

    // Alive cells and their true areas per frame.
    let mut alive: Vec<Vec<(usize, f64, usize)>> = vec![Vec::new(); times.len()];
    let mut max_len = 0;
    for c in &cells {
        let mu = sc.strains[c.strain].mu_star_per_h * c.rate_factor;
        let end = c.division_h.unwrap_or(f64::INFINITY);
        for (k, &t) in times.iter().enumerate() {
            if t + TIME_EPS >= c.birth_h && t + TIME_EPS < end {
                let area = c.birth_area_um2 * log_growth(&pieces, mu, c.birth_h, t).exp();
                let area_px = (area / (px * px)).round() as usize;
                let (_, len) = cell_shape(area_px, width_px).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "cell area {area:.4} um2 is below one column of {width_px} px; lower cell_width_um or pixel_size_um"
                    ))
                })?;
                max_len = max_len.max(len);
                alive[k].push((c.index, area, area_px));
            }
        }
    }

    let slot_w = max_len + 2 * GAP_PX;
    let slot_h = (width_px + 2 * GAP_PX).max(slot_w.div_ceil(2));
    let founders: Vec<usize> = cells.iter().filter(|c| c.parent.is_none()).map(|c| c.index).collect();
    let (grid_rows, grid_cols, height, width) = match (sc.height_px, sc.width_px) {
        (Some(h), Some(w)) => (h / slot_h, w / slot_w, h, w),
        _ => {
            let founder_levels = founders.len().next_power_of_two().trailing_zeros() as usize;
            let levels = founder_levels + founders.iter().map(|&f| depth_below(&cells, f)).max().unwrap_or(0);
            let (r, c) = auto_grid(levels, slot_h, slot_w);
            (r, c, r * slot_h, c * slot_w)
        }
    };
    if grid_rows == 0 || grid_cols == 0 {
        return Err(Error::ScenarioOverflow(format!(
            "image {height}x{width} px holds no {slot_h}x{slot_w} px slot"
        )));
    }

    let mut regions: BTreeMap<usize, Region> = BTreeMap::new();
    let full = Region { row: 0, col: 0, rows: grid_rows, cols: grid_cols };
    assign_founders(full, &founders, (slot_h, slot_w), &mut regions)?;
    for c in &cells {
        if c.children.is_empty() {
            continue;
        }
        let (a, b) = regions[&c.index].split(slot_h, slot_w).ok_or_else(|| {
            Error::ScenarioOverflow(format!("no room for the daughters of cell {}", c.index))
        })?;
        regions.insert(c.children[0], a);
        regions.insert(c.children[1], b);
    }

    // Render frames; detection ids follow (frame, first row-major pixel).
    let mut frames: Vec<Vec<CellDetection>> = Vec::with_capacity(times.len());
    let mut detection_cell = BTreeMap::new();
    let mut true_area = BTreeMap::new();
    let mut next_id = 1u64;
    for (k, cells_k) in alive.iter().enumerate() {
        let mut placed: Vec<(Vec<(u32, u32)>, usize, f64)> = cells_k
            .iter()
            .map(|&(ci, area, area_px)| {
                let (shape, len) = cell_shape(area_px, width_px).expect("checked above");
                let r = regions[&ci];
                let top = r.row * slot_h + (r.rows * slot_h - width_px) / 2;
                let left = r.col * slot_w + (r.cols * slot_w - len) / 2;
                let pixels = shape
                    .into_iter()
                    .map(|(dr, dc)| ((top + dr) as u32, (left + dc) as u32))
                    .collect();
                (pixels, ci, area)
            })
            .collect();
        placed.sort_by_key(|p| p.0.iter().min().copied());
        let mut dets = Vec::with_capacity(placed.len());
        for (pixels, ci, area) in placed {
            let id = next_id;
            next_id += 1;
            detection_cell.insert(id, ci);
            true_area.insert(id, area);
            dets.push(CellDetection::from_pixel_set(id, k, pixels));
        }
        frames.push(dets);
    }
    let overlay = Overlay::new(frames, height, width)?;

    // Truth links: a cell to itself in the next frame, a mother's last
    // detection to each daughter's first.
    let mut first_det: BTreeMap<usize, u64> = BTreeMap::new();
    let mut last_det: BTreeMap<usize, u64> = BTreeMap::new();
    let mut frame_of = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for d in overlay.detections() {
        let ci = detection_cell[&d.id];
        frame_of.insert(d.id, d.frame);
        if let Some(&prev) = last_det.get(&ci) {
            edges.insert((prev, d.id));
        }
        first_det.entry(ci).or_insert(d.id);
        last_det.insert(ci, d.id);
    }
    for c in &cells {
        for ch in &c.children {
            edges.insert((last_det[&c.index], first_det[ch]));
        }
    }
    let links = TrackingGraph::new(frame_of, edges)?;
    let lineage = build_tracklets(&links, &overlay)?;

    let meta = StackMetadata::new(
        Quantity::um(sc.pixel_size_um),
        Quantity::minutes(sc.frame_interval_min),
        sc.channel_names(),
        sc.origin_id.clone(),
    )?;
    let n_ch = meta.channel_names.len();
    let frame_len = height * width;
    let mut pixels = vec![0f32; times.len() * frame_len * n_ch];
    let mut label_pixels = vec![0f32; times.len() * frame_len];
    let label_of = lineage.label_index();
    let mut noise_rng = Xoshiro256PlusPlus::seed_from_u64(sc.seed ^ FLUOR_STREAM);
    for d in overlay.detections() {
        let strain = &sc.strains[cells[detection_cell[&d.id]].strain];
        let noise = Normal::new(0.0, strain.fluor_std_au)
            .map_err(|e| Error::InvalidInput(format!("fluorescence noise: {e}")))?;
        let base = d.frame * frame_len;
        for &(r, c) in &d.pixels {
            let p = base + r as usize * width + c as usize;
            label_pixels[p] = label_of[&d.id] as f32;
            pixels[p * n_ch] = 1.0;
            for (ch, mean) in strain.fluor_means_au.iter().enumerate() {
                pixels[p * n_ch + 1 + ch] = (mean + noise.sample(&mut noise_rng)) as f32;
            }
        }
    }
    let stack = ImageStack::new((times.len(), height, width, n_ch), pixels, meta.clone())?;
    let label_meta = StackMetadata {
        channel_names: vec!["label".into()],
        ..meta
    };
    let labels = ImageStack::new((times.len(), height, width, 1), label_pixels, label_meta)?;

    Ok(Simulation {
        stack,
        labels,
        truth: GroundTruth {
            scenario: sc.clone(),
            cells,
            overlay,
            detection_cell,
            true_area,
            links,
            lineage,
            frame_times_h: times,
        },
    })
}

/// Ground-truth feature tables with analytic areas and noise-free
/// fluorescence.
pub fn truth_tables(truth: &GroundTruth) -> Result<(DetectionTable, TrackletTable)> {
    let sc = &truth.scenario;
    let pixel = Quantity::um(sc.pixel_size_um);
    let label_of = truth.lineage.label_index();
    let rows = truth
        .overlay
        .detections()
        .map(|d| {
            let strain = &sc.strains[truth.cells[truth.detection_cell[&d.id]].strain];
            let mean_fluor = std::iter::once(1.0)
                .chain(strain.fluor_means_au.iter().copied())
                .map(Quantity::au)
                .collect();
            Ok(DetectionRow {
                id: d.id,
                frame: d.frame,
                time: Quantity::hours(truth.frame_times_h[d.frame]),
                label: label_of[&d.id],
                area: Quantity::um2(truth.true_area[&d.id]),
                centroid_x: px_to_physical(d.centroid_px[0], 1, pixel)?,
                centroid_y: px_to_physical(d.centroid_px[1], 1, pixel)?,
                mean_fluor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let det = DetectionTable {
        channels: sc.channel_names(),
        frame_times_h: truth.frame_times_h.clone(),
        rows,
    };
    let tt = extract_tracklet_features(&truth.lineage, &det)?;
    Ok((det, tt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::ingest_label_masks;
    use crate::tracking::Fate;

    #[test]
    fn exponential_area_without_division() {
        let mut sc = SimScenario::basic(1, std::f64::consts::LN_2, 5);
        sc.a_div_um2 = 100.0;
        let sim = simulate(&sc).unwrap();
        // Frame 4 is at 1 h.
        let d = &sim.truth.overlay.frame(4)[0];
        assert!((sim.truth.true_area[&d.id] - 2.0).abs() < 1e-12);
        assert_eq!(sim.truth.lineage.len(), 1);
    }

    #[test]
    fn noiseless_division_halves_area() {
        let sc = SimScenario::basic(1, 0.6, 8);
        let sim = simulate(&sc).unwrap();
        let root = &sim.truth.cells[0];
        assert!(root.division_h.is_some());
        for &c in &root.children {
            assert!((sim.truth.cells[c].birth_area_um2 - 1.0).abs() < 1e-12);
        }
        let (_, tt) = truth_tables(&sim.truth).unwrap();
        assert_eq!(tt.rows.len(), 3);
        assert_eq!(tt.rows[0].fate, Fate::Divided);
    }

    #[test]
    fn synchronized_counts_are_powers_of_two() {
        let mut sc = SimScenario::basic(3, 0.9, 30);
        sc.n_initial_cells = 2;
        let sim = simulate(&sc).unwrap();
        for n in sim.truth.cc() {
            assert!((n / 2).is_power_of_two(), "count {n}");
        }
    }

    #[test]
    fn rendered_area_tracks_true_area() {
        let mut sc = SimScenario::basic(9, 0.8, 25);
        sc.a_div_noise = 0.1;
        sc.mu_cell_cv = 0.1;
        let sim = simulate(&sc).unwrap();
        for d in sim.truth.overlay.detections() {
            let true_px = sim.truth.true_area[&d.id] / (sc.pixel_size_um * sc.pixel_size_um);
            let perimeter = crate::segmentation::polygon_area(&d.contour).unwrap().sqrt() * 4.0;
            assert!((d.area_px() - true_px).abs() <= 0.5 + 1e-9);
            assert!((d.area_px() - true_px).abs() <= perimeter);
        }
    }

    #[test]
    fn truth_tsca_is_sum_of_areas() {
        let sim = simulate(&SimScenario::basic(2, 0.7, 20)).unwrap();
        let (det, _) = truth_tables(&sim.truth).unwrap();
        let tsca = sim.truth.tsca().unwrap();
        for (k, &v) in tsca.values().iter().enumerate() {
            let s: f64 = det.rows.iter().filter(|r| r.frame == k).map(|r| r.area.canonical()).sum();
            assert!((s - v).abs() < 1e-12);
        }
    }

    #[test]
    fn label_images_reingest_to_truth_counts() {
        let mut sc = SimScenario::basic(5, 0.8, 20);
        sc.n_initial_cells = 3;
        sc.a_div_noise = 0.15;
        let sim = simulate(&sc).unwrap();
        let ing = ingest_label_masks(&sim.labels).unwrap();
        assert_eq!(ing.split_labels, 0);
        let counts: Vec<usize> = ing.overlay.frames().iter().map(Vec::len).collect();
        assert_eq!(counts, sim.truth.cc());
    }

    #[test]
    fn bit_deterministic() {
        let mut sc = SimScenario::basic(11, 0.7, 15);
        sc.a_div_noise = 0.2;
        sc.fluor_channels = vec!["gfp".into()];
        sc.strains[0].fluor_means_au = vec![5.0];
        sc.strains[0].fluor_std_au = 1.0;
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a, b);
        sc.seed = 12;
        assert_ne!(a.stack, simulate(&sc).unwrap().stack);
    }

    #[test]
    fn true_igr_drops_at_switch() {
        let mut sc = SimScenario::basic(1, 1.0, 40);
        sc.a_div_um2 = 1000.0;
        sc.frame_interval_min = 6.0;
        sc.rate_schedule = vec![RateSwitch { t_switch_h: 1.5, multiplier: 0.5 }];
        let sim = simulate(&sc).unwrap();
        let areas: Vec<f64> = sim.truth.overlay.detections().map(|d| sim.truth.true_area[&d.id]).collect();
        let rates: Vec<f64> = areas.windows(2).map(|w| (w[1] / w[0]).ln() / 0.1).collect();
        for (k, r) in rates.iter().enumerate() {
            let expected = if k < 15 { 1.0 } else { 0.5 };
            assert!((r - expected).abs() < 1e-9, "{k} {r}");
        }
    }

    #[test]
    fn too_small_image_overflows() {
        let mut sc = SimScenario::basic(1, 0.9, 30);
        sc.height_px = Some(40);
        sc.width_px = Some(40);
        assert!(matches!(simulate(&sc), Err(Error::ScenarioOverflow(_))));
    }

    #[test]
    fn cells_keep_a_gap() {
        let mut sc = SimScenario::basic(4, 0.9, 25);
        sc.n_initial_cells = 3;
        sc.a_div_noise = 0.1;
        let sim = simulate(&sc).unwrap();
        for f in sim.truth.overlay.frames() {
            for (i, a) in f.iter().enumerate() {
                for b in &f[i + 1..] {
                    let sep = a
                        .pixels
                        .iter()
                        .flat_map(|p| b.pixels.iter().map(move |q| {
                            (p.0 as i64 - q.0 as i64).abs().max((p.1 as i64 - q.1 as i64).abs())
                        }))
                        .min()
                        .unwrap();
                    assert!(sep >= 3, "cells {} and {} are {sep} px apart", a.id, b.id);
                }
            }
        }
    }
}
