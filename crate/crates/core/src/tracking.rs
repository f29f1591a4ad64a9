//! Tracking-by-detection and lineage contraction.
//!
//! Consecutive frames are linked one-to-one by a linear assignment with a
//! per-item non-assignment cost, then unmatched detections may be attached
//! as second daughters of nearby linked cells. The resulting detection graph
//! is contracted into tracklets (one per cell cycle) forming a lineage forest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagestack::StackMetadata;
use crate::segmentation::{CellDetection, Overlay};
use crate::units::{Dimension, Quantity, Unit};

/// Cost of leaving one tracked item unlinked.
pub const NO_ASSIGN_COST: f64 = 1.0;

/// A partial matching between rows and columns of a cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Total cost of a partial matching: matched costs plus `no_assign_cost`
/// for every unmatched row and column. Rows are summed in order, then the
/// unmatched columns.
pub fn matching_cost(cost: &[Vec<f64>], no_assign_cost: f64, pairs: &[(usize, usize)]) -> f64 {
    let n_cols = cost.first().map_or(0, Vec::len);
    let mut row_match = vec![None; cost.len()];
    let mut col_used = vec![false; n_cols];
    for &(r, c) in pairs {
        row_match[r] = Some(c);
        col_used[c] = true;
    }
    let mut total = 0.0;
    for (r, m) in row_match.iter().enumerate() {
        total += match m {
            Some(c) => cost[r][*c],
            None => no_assign_cost,
        };
    }
    for used in col_used {
        if !used {
            total += no_assign_cost;
        }
    }
    total
}

/// Minimum-cost partial assignment where each unmatched row or column costs
/// `no_assign_cost`.
///
/// The R×C problem is embedded in a square (R+C)×(R+C) matrix: the real
/// costs top-left, `no_assign_cost` on the diagonals of the two off blocks
/// (forbidden elsewhere) and zeros bottom-right; the square problem is then
/// solved exactly with shortest augmenting paths.
pub fn lap_solve(cost: &[Vec<f64>], no_assign_cost: f64) -> Result<Assignment> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("cost matrix rows differ in length".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost matrix has non-finite entries".into()));
    }
    if !(no_assign_cost.is_finite() && no_assign_cost >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "no-assign cost must be finite and >= 0, got {no_assign_cost}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: matching_cost(cost, no_assign_cost, &[]),
        });
    }

    let n = rows + cols;
    let max_abs = cost.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let forbidden = 2.0 * n as f64 * (max_abs + no_assign_cost) + 1.0;
    let mut square = vec![vec![0.0; n]; n];
    for (i, row) in square.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = match (i < rows, j < cols) {
                (true, true) => cost[i][j],
                (true, false) => {
                    if j - cols == i {
                        no_assign_cost
                    } else {
                        forbidden
                    }
                }
                (false, true) => {
                    if i - rows == j {
                        no_assign_cost
                    } else {
                        forbidden
                    }
                }
                (false, false) => 0.0,
            };
        }
    }
    let row_to_col = solve_square(&square);
    let pairs: Vec<(usize, usize)> = row_to_col
        .iter()
        .enumerate()
        .take(rows)
        .filter(|&(_, &c)| c < cols)
        .map(|(r, &c)| (r, c))
        .collect();
    Ok(Assignment {
        total_cost: matching_cost(cost, no_assign_cost, &pairs),
        pairs,
    })
}

/// Dense square assignment via shortest augmenting paths with dual
/// potentials (O(n³)). Returns the column assigned to each row. Among equal
/// reduced costs the lowest column index is taken first.
fn solve_square(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with index 0 as the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Cost-model knobs for frame-to-frame linking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    pub max_link_distance: Quantity,
    pub area_weight: f64,
    pub division_area_tolerance: f64,
    pub enable_divisions: bool,
}

impl TrackParams {
    pub fn new(
        max_link_distance: Quantity,
        area_weight: f64,
        division_area_tolerance: f64,
        enable_divisions: bool,
    ) -> Result<Self> {
        max_link_distance.expect_dimension(Dimension::LENGTH)?;
        if !(max_link_distance.canonical() > 0.0 && max_link_distance.canonical().is_finite()) {
            return Err(Error::InvalidInput("max_link_distance must be positive".into()));
        }
        if !(area_weight >= 0.0 && area_weight.is_finite()) {
            return Err(Error::InvalidInput("area_weight must be >= 0".into()));
        }
        if !(division_area_tolerance >= 0.0 && division_area_tolerance.is_finite()) {
            return Err(Error::InvalidInput("division_area_tolerance must be >= 0".into()));
        }
        Ok(TrackParams {
            max_link_distance,
            area_weight,
            division_area_tolerance,
            enable_divisions,
        })
    }
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams {
            max_link_distance: Quantity::um(5.0),
            area_weight: 0.1,
            division_area_tolerance: 0.3,
            enable_divisions: true,
        }
    }
}

/// Detection-level links between consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingGraph {
    frame_of: BTreeMap<u64, usize>,
    edges: BTreeSet<(u64, u64)>,
    successors: HashMap<u64, Vec<u64>>,
    predecessor: HashMap<u64, u64>,
}

impl TrackingGraph {
    /// Validate and index a detection graph. `nodes` maps detection id to frame.
    pub fn new(frame_of: BTreeMap<u64, usize>, edges: BTreeSet<(u64, u64)>) -> Result<Self> {
        let mut successors: HashMap<u64, Vec<u64>> = HashMap::new();
        let mut predecessor = HashMap::new();
        for &(a, b) in &edges {
            let (fa, fb) = match (frame_of.get(&a), frame_of.get(&b)) {
                (Some(fa), Some(fb)) => (*fa, *fb),
                _ => return Err(Error::InvalidGraph(format!("edge {a}->{b} has unknown node"))),
            };
            if fb != fa + 1 {
                return Err(Error::InvalidGraph(format!(
                    "edge {a}->{b} links frames {fa} and {fb}"
                )));
            }
            let out = successors.entry(a).or_default();
            out.push(b);
            if out.len() > 2 {
                return Err(Error::InvalidGraph(format!("node {a} has more than 2 successors")));
            }
            if predecessor.insert(b, a).is_some() {
                return Err(Error::InvalidGraph(format!("node {b} has more than 1 predecessor")));
            }
        }
        for out in successors.values_mut() {
            out.sort_unstable();
        }
        Ok(TrackingGraph {
            frame_of,
            edges,
            successors,
            predecessor,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.frame_of.iter().map(|(&id, &f)| (id, f))
    }

    pub fn edges(&self) -> &BTreeSet<(u64, u64)> {
        &self.edges
    }

    pub fn successors(&self, id: u64) -> &[u64] {
        self.successors.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn predecessor(&self, id: u64) -> Option<u64> {
        self.predecessor.get(&id).copied()
    }

    pub fn in_degree(&self, id: u64) -> usize {
        usize::from(self.predecessor.contains_key(&id))
    }

    pub fn out_degree(&self, id: u64) -> usize {
        self.successors(id).len()
    }

    /// Edges whose source has two successors.
    pub fn division_edges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.edges
            .iter()
            .copied()
            .filter(|&(a, _)| self.out_degree(a) == 2)
    }
}

struct Linkable {
    id: u64,
    x_um: f64,
    y_um: f64,
    area_px: f64,
}

impl Linkable {
    fn new(d: &CellDetection, pixel_um: f64) -> Self {
        Linkable {
            id: d.id,
            x_um: d.centroid_px[0] * pixel_um,
            y_um: d.centroid_px[1] * pixel_um,
            area_px: d.area_px(),
        }
    }

    fn distance(&self, other: &Linkable) -> f64 {
        (self.x_um - other.x_um).hypot(self.y_um - other.y_um)
    }
}

/// Link every pair of consecutive frames and assemble the detection graph.
pub fn track(
    overlay: &Overlay,
    meta: &StackMetadata,
    params: &TrackParams,
) -> Result<TrackingGraph> {
    let pixel_um = meta.pixel_size.value_in(Unit::Micrometer)?;
    let frame_links = (0..overlay.n_frames().saturating_sub(1))
        .into_par_iter()
        .map(|t| {
            let src: Vec<Linkable> = overlay.frame(t).iter().map(|d| Linkable::new(d, pixel_um)).collect();
            let dst: Vec<Linkable> =
                overlay.frame(t + 1).iter().map(|d| Linkable::new(d, pixel_um)).collect();
            link_frames(&src, &dst, params)
        })
        .collect::<Result<Vec<_>>>()?;

    let frame_of = overlay.detections().map(|d| (d.id, d.frame)).collect();
    let edges = frame_links.into_iter().flatten().collect();
    let graph = TrackingGraph::new(frame_of, edges)?;
    debug_assert!(graph.nodes().all(|(id, _)| graph.in_degree(id) <= 1));
    Ok(graph)
}

fn link_frames(src: &[Linkable], dst: &[Linkable], params: &TrackParams) -> Result<Vec<(u64, u64)>> {
    let max_link = params.max_link_distance.canonical();
    // Forbidden links cost more than leaving both ends unassigned, so they
    // can never be part of an optimal matching.
    let forbidden = 2.0 * NO_ASSIGN_COST + 1.0;

    // Split into independent subproblems along allowed links.
    let mut parent: Vec<usize> = (0..src.len() + dst.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut allowed = vec![vec![false; dst.len()]; src.len()];
    for (i, s) in src.iter().enumerate() {
        for (j, d) in dst.iter().enumerate() {
            if s.distance(d) <= max_link {
                allowed[i][j] = true;
                let (a, b) = (find(&mut parent, i), find(&mut parent, src.len() + j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..src.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().0.push(i);
    }
    for j in 0..dst.len() {
        let root = find(&mut parent, src.len() + j);
        groups.entry(root).or_default().1.push(j);
    }

    let mut daughters: Vec<Vec<usize>> = vec![Vec::new(); src.len()];
    let mut attached = vec![false; dst.len()];
    for (rows, cols) in groups.values() {
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let cost: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                cols.iter()
                    .map(|&j| {
                        if !allowed[i][j] {
                            return forbidden;
                        }
                        let (s, d) = (&src[i], &dst[j]);
                        s.distance(d) / max_link
                            + params.area_weight * (d.area_px - s.area_px).abs() / s.area_px
                    })
                    .collect()
            })
            .collect();
        for (r, c) in lap_solve(&cost, NO_ASSIGN_COST)?.pairs {
            let (i, j) = (rows[r], cols[c]);
            if allowed[i][j] {
                daughters[i].push(j);
                attached[j] = true;
            }
        }
    }

    if params.enable_divisions {
        let tol = params.division_area_tolerance;
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (j, d) in dst.iter().enumerate() {
            if attached[j] {
                continue;
            }
            for (i, s) in src.iter().enumerate() {
                if daughters[i].len() != 1 || !allowed[i][j] {
                    continue;
                }
                let summed = dst[daughters[i][0]].area_px + d.area_px;
                if summed >= (1.0 - tol) * s.area_px && summed <= (1.0 + tol) * s.area_px {
                    candidates.push((s.distance(d), i, j));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, i, j) in candidates {
            if !attached[j] && daughters[i].len() == 1 {
                daughters[i].push(j);
                attached[j] = true;
            }
        }
    }

    let mut links: Vec<(u64, u64)> = daughters
        .iter()
        .enumerate()
        .flat_map(|(i, ds)| ds.iter().map(move |&j| (src[i].id, dst[j].id)))
        .collect();
    links.sort_unstable();
    Ok(links)
}

/// How a tracklet ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Divided,
    Lost,
    MovieEnd,
}

impl Fate {
    pub fn as_str(self) -> &'static str {
        match self {
            Fate::Divided => "divided",
            Fate::Lost => "lost",
            Fate::MovieEnd => "movie_end",
        }
    }
}

/// One cell cycle: consecutive detections from birth to division or loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub label: u32,
    pub parent: Option<u32>,
    pub detections: Vec<u64>,
    pub birth_frame: usize,
    pub end_frame: usize,
    pub fate: Fate,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.birth_frame..=self.end_frame
    }
}

/// Lineage forest of tracklets; edges run parent to daughter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletGraph {
    tracklets: BTreeMap<u32, Tracklet>,
    children: BTreeMap<u32, Vec<u32>>,
}

impl TrackletGraph {
    pub fn new(tracklets: Vec<Tracklet>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tracklets {
            if t.label == 0 {
                return Err(Error::InvalidGraph("tracklet label 0 is reserved".into()));
            }
            if t.detections.is_empty() || t.end_frame < t.birth_frame {
                return Err(Error::InvalidGraph(format!("tracklet {} is empty", t.label)));
            }
            if t.detections.len() != t.end_frame - t.birth_frame + 1 {
                return Err(Error::InvalidGraph(format!(
                    "tracklet {} has {} detections over frames {}..={}",
                    t.label,
                    t.detections.len(),
                    t.birth_frame,
                    t.end_frame
                )));
            }
            let label = t.label;
            if map.insert(label, t).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate tracklet label {label}")));
            }
        }
        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for t in map.values() {
            if let Some(p) = t.parent {
                let parent = map.get(&p).ok_or_else(|| {
                    Error::InvalidGraph(format!("tracklet {} has unknown parent {p}", t.label))
                })?;
                if parent.end_frame + 1 != t.birth_frame {
                    return Err(Error::InvalidGraph(format!(
                        "tracklet {} is not born right after parent {p} ends",
                        t.label
                    )));
                }
                children.entry(p).or_default().push(t.label);
            }
        }
        for t in map.values() {
            let n_children = children.get(&t.label).map_or(0, Vec::len);
            if (t.fate == Fate::Divided) != (n_children == 2) {
                return Err(Error::InvalidGraph(format!(
                    "tracklet {} has fate {} and {n_children} daughters",
                    t.label,
                    t.fate.as_str()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in map.values() {
            for d in &t.detections {
                if !seen.insert(*d) {
                    return Err(Error::InvalidGraph(format!("detection {d} in two tracklets")));
                }
            }
        }
        Ok(TrackletGraph {
            tracklets: map,
            children,
        })
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    pub fn get(&self, label: u32) -> Option<&Tracklet> {
        self.tracklets.get(&label)
    }

    /// Tracklets in label order.
    pub fn tracklets(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values()
    }

    pub fn children(&self, label: u32) -> &[u32] {
        self.children.get(&label).map_or(&[], Vec::as_slice)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values().filter(|t| t.parent.is_none())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets
            .values()
            .filter(|t| self.children(t.label).is_empty())
    }

    /// Map detection id to tracklet label.
    pub fn label_index(&self) -> HashMap<u64, u32> {
        self.tracklets
            .values()
            .flat_map(|t| t.detections.iter().map(move |&d| (d, t.label)))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let records: Vec<TrackletRecord> = self
            .tracklets
            .values()
            .map(|t| TrackletRecord {
                label: t.label,
                parent: t.parent,
                frames: t.frames().collect(),
                detections: t.detections.clone(),
                fate: t.fate,
            })
            .collect();
        serde_json::json!({ "tracklets": records })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: TrackletDocument = serde_json::from_value(value.clone())
            .map_err(|e| Error::InvalidInput(format!("tracklet document: {e}")))?;
        let tracklets = doc
            .tracklets
            .into_iter()
            .map(|r| {
                let birth = *r.frames.first().ok_or_else(|| {
                    Error::InvalidGraph(format!("tracklet {} has no frames", r.label))
                })?;
                if r.frames.iter().enumerate().any(|(k, &f)| f != birth + k)
                    || r.frames.len() != r.detections.len()
                {
                    return Err(Error::InvalidGraph(format!(
                        "tracklet {} frames are not consecutive",
                        r.label
                    )));
                }
                Ok(Tracklet {
                    label: r.label,
                    parent: r.parent,
                    birth_frame: birth,
                    end_frame: birth + r.frames.len() - 1,
                    detections: r.detections,
                    fate: r.fate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TrackletGraph::new(tracklets)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        TrackletGraph::from_json(&value)
    }
}

#[derive(Serialize, Deserialize)]
struct TrackletRecord {
    label: u32,
    parent: Option<u32>,
    frames: Vec<usize>,
    detections: Vec<u64>,
    fate: Fate,
}

#[derive(Deserialize)]
struct TrackletDocument {
    tracklets: Vec<TrackletRecord>,
}

/// Contract maximal non-branching chains of the detection graph into
/// tracklets. Labels follow (birth frame, smallest detection id), from 1.
pub fn build_tracklets(graph: &TrackingGraph, overlay: &Overlay) -> Result<TrackletGraph> {
    let last_frame = overlay.n_frames().checked_sub(1);
    for (id, frame) in graph.nodes() {
        match overlay.get(id) {
            Some(d) if d.frame == frame => {}
            _ => {
                return Err(Error::InvalidGraph(format!(
                    "node {id} does not match the overlay"
                )))
            }
        }
    }

    struct Chain {
        detections: Vec<u64>,
        birth: usize,
        end: usize,
        fate: Fate,
        parent_detection: Option<u64>,
    }

    let mut chains = Vec::new();
    for (id, frame) in graph.nodes() {
        let starts_chain = match graph.predecessor(id) {
            None => true,
            Some(p) => graph.out_degree(p) == 2,
        };
        if !starts_chain {
            continue;
        }
        let mut detections = vec![id];
        let mut cur = id;
        while let [next] = graph.successors(cur) {
            cur = *next;
            detections.push(cur);
        }
        let end = frame + detections.len() - 1;
        let fate = match graph.out_degree(cur) {
            2 => Fate::Divided,
            _ if Some(end) == last_frame => Fate::MovieEnd,
            _ => Fate::Lost,
        };
        chains.push(Chain {
            detections,
            birth: frame,
            end,
            fate,
            parent_detection: graph.predecessor(id),
        });
    }

    chains.sort_by_key(|c| (c.birth, c.detections.iter().min().copied()));
    let mut label_of_last: HashMap<u64, u32> = HashMap::new();
    for (k, c) in chains.iter().enumerate() {
        label_of_last.insert(*c.detections.last().expect("chain is non-empty"), k as u32 + 1);
    }
    let tracklets = chains
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let parent = match c.parent_detection {
                Some(p) => Some(*label_of_last.get(&p).ok_or_else(|| {
                    Error::InvalidGraph(format!("division source {p} does not end a tracklet"))
                })?),
                None => None,
            };
            Ok(Tracklet {
                label: k as u32 + 1,
                parent,
                detections: c.detections,
                birth_frame: c.birth,
                end_frame: c.end,
                fate: c.fate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrackletGraph::new(tracklets)
}
