//! Population and single-cell readouts computed from feature tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DetectionTable, TrackletTable};
use crate::imagestack::StackMetadata;
use crate::segmentation::Overlay;
use crate::tracking::{Fate, Tracklet, TrackletGraph};
use crate::units::{Dimension, Quantity, QuantitySeries, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measure {
    /// Cell count.
    CC,
    /// Total colony area.
    TCA,
    /// Total single-cell area.
    TSCA,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Measure::CC => "CC",
            Measure::TCA => "TCA",
            Measure::TSCA => "TSCA",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub measure: Measure,
    pub mu: Quantity,
    pub intercept_log: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Points left out of the fit because they were not positive.
    pub n_dropped: usize,
}

impl GrowthFit {
    pub fn mu_per_h(&self) -> f64 {
        self.mu.canonical()
    }

    /// Fitted value at time `t_h`.
    pub fn predict(&self, t_h: f64) -> f64 {
        (self.intercept_log + self.mu_per_h() * t_h).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSeries {
    pub cc: QuantitySeries,
    pub tsca: QuantitySeries,
}

/// Cell count and total single-cell area per frame.
pub fn population_series(det: &DetectionTable) -> Result<PopulationSeries> {
    let n = det.frame_times_h.len();
    if n == 0 {
        return Err(Error::InsufficientData("detection table has no frames".into()));
    }
    let mut cc = vec![0.0; n];
    let mut tsca = vec![0.0; n];
    for r in &det.rows {
        if r.frame >= n {
            return Err(Error::InconsistentInput(format!(
                "detection {} in frame {} beyond {n} frames",
                r.id, r.frame
            )));
        }
        cc[r.frame] += 1.0;
        tsca[r.frame] += r.area.canonical();
    }
    Ok(PopulationSeries {
        cc: QuantitySeries::from_canonical("CC", det.frame_times_h.clone(), cc, Dimension::DIMENSIONLESS)?,
        tsca: QuantitySeries::from_canonical("TSCA", det.frame_times_h.clone(), tsca, Dimension::AREA)?,
    })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by the monotone chain method, counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

/// Total colony area: convex hull of all contour vertices per frame.
pub fn tca_series(overlay: &Overlay, meta: &StackMetadata) -> Result<QuantitySeries> {
    let px2 = meta.pixel_size.canonical().powi(2);
    let areas: Vec<f64> = (0..overlay.n_frames())
        .into_par_iter()
        .map(|t| {
            let pts: Vec<[f64; 2]> = overlay
                .frame(t)
                .iter()
                .flat_map(|d| d.contour.iter().copied())
                .collect();
            shoelace(&convex_hull(&pts)) * px2
        })
        .collect();
    let times = (0..overlay.n_frames()).map(|t| meta.frame_time(t).canonical()).collect();
    QuantitySeries::from_canonical("TCA", times, areas, Dimension::AREA)
}

/// Least-squares fit of ln(y) against time in hours.
pub fn fit_loglinear(series: &QuantitySeries, measure: Measure) -> Result<GrowthFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = series
        .times_h()
        .iter()
        .zip(series.values())
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .unzip();
    let n = t.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "{} has {n} positive points, need 2",
            series.name()
        )));
    }
    let nf = n as f64;
    let tm = t.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = t.iter().map(|ti| (ti - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&y).map(|(ti, yi)| (ti - tm) * (yi - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss_tot: f64 = y.iter().map(|yi| (yi - ym).powi(2)).sum();
    let ss_res: f64 = t
        .iter()
        .zip(&y)
        .map(|(ti, yi)| (yi - intercept - slope * ti).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(GrowthFit {
        measure,
        mu: Quantity::per_hour(slope),
        intercept_log: intercept,
        r_squared,
        n_points: n,
        n_dropped: series.len() - n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: [Vec<f64>; 2],
    pub iterations: usize,
    /// Within-cluster sum of squares after every assignment step.
    pub objective_trace: Vec<f64>,
}

impl KMeans {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Leading eigenvector of the sample covariance, sign fixed so that its
/// largest-magnitude component is positive.
fn principal_axis(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for p in points {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let mut v = if d == 1 {
        vec![1.0]
    } else if d == 2 {
        let (a, b, c) = (cov[0][0], cov[0][1], cov[1][1]);
        let lambda = (a + c) / 2.0 + (((a - c) / 2.0).powi(2) + b * b).sqrt();
        if b.abs() > 0.0 {
            vec![lambda - c, b]
        } else if a >= c {
            vec![1.0, 0.0]
        } else {
            vec![0.0, 1.0]
        }
    } else {
        let k = (0..d).max_by(|&i, &j| cov[i][i].total_cmp(&cov[j][j])).unwrap_or(0);
        let mut v = cov[k].clone();
        for _ in 0..500 {
            let next: Vec<f64> = (0..d).map(|a| (0..d).map(|b| cov[a][b] * v[b]).sum()).collect();
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v = next.into_iter().map(|x| x / norm).collect();
        }
        v
    };
    let pivot = (0..d).fold(0, |best, k| if v[k].abs() > v[best].abs() { k } else { best });
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Two-cluster Lloyd iterations seeded at the extremes of the first
/// principal coordinate.
pub fn kmeans2(points: &[Vec<f64>]) -> Result<KMeans> {
    if points.len() < 2 {
        return Err(Error::DegenerateInput("k-means needs at least 2 points".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput("k-means points must share a positive dimension".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("k-means points must be finite".into()));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::DegenerateInput("all k-means points are identical".into()));
    }
    let axis = principal_axis(points);
    let proj: Vec<f64> = points
        .iter()
        .map(|p| p.iter().zip(&axis).map(|(x, a)| x * a).sum())
        .collect();
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in proj.iter().enumerate() {
        if v < proj[lo] {
            lo = i;
        }
        if v > proj[hi] {
            hi = i;
        }
    }
    if proj[lo] == proj[hi] {
        return Err(Error::DegenerateInput("points have no spread along the principal axis".into()));
    }
    let mut centers = [points[lo].clone(), points[hi].clone()];
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < 100 {
        iterations += 1;
        let next: Vec<usize> = points
            .iter()
            .map(|p| usize::from(sq_dist(p, &centers[1]) < sq_dist(p, &centers[0])))
            .collect();
        trace.push(
            points
                .iter()
                .zip(&next)
                .map(|(p, &l)| sq_dist(p, &centers[l]))
                .sum(),
        );
        if next == labels {
            break;
        }
        labels = next;
        for (k, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            *center = (0..d).map(|a| members.iter().map(|p| p[a]).sum::<f64>() / m).collect();
        }
    }
    Ok(KMeans {
        labels,
        centers,
        iterations,
        objective_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrainAssignment {
    /// Strain index (0 or 1) per retained tracklet label.
    pub strain: BTreeMap<u32, usize>,
    /// Cluster centers in a.u., ordered like the fluorescence channels.
    pub centers: [Vec<f64>; 2],
    pub discarded: Vec<u32>,
    pub channels: [String; 2],
}

impl StrainAssignment {
    pub fn members(&self, strain: usize) -> impl Iterator<Item = u32> + '_ {
        self.strain.iter().filter(move |(_, &s)| s == strain).map(|(&l, _)| l)
    }
}

/// Split a two-strain co-culture by the per-tracklet median fluorescence.
pub fn classify_strains(
    tt: &TrackletTable,
    fluor_channels: [&str; 2],
    nonfluor_threshold: Quantity,
) -> Result<StrainAssignment> {
    nonfluor_threshold.expect_dimension(Dimension::INTENSITY)?;
    let idx = fluor_channels
        .iter()
        .map(|name| {
            tt.channels
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidInput(format!("missing fluorescence channel {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let thr = nonfluor_threshold.canonical();
    let mut rows: Vec<_> = tt.rows.iter().collect();
    rows.sort_by_key(|r| r.label);
    let mut kept = Vec::new();
    let mut points = Vec::new();
    let mut discarded = Vec::new();
    for r in rows {
        let p: Vec<f64> = idx.iter().map(|&c| r.median_fluor[c].canonical()).collect();
        if p.iter().all(|&v| v < thr) {
            discarded.push(r.label);
        } else {
            kept.push(r.label);
            points.push(p);
        }
    }
    let km = kmeans2(&points)?;
    let swap = km.centers[1][0] > km.centers[0][0];
    let strain: BTreeMap<u32, usize> = kept
        .iter()
        .zip(&km.labels)
        .map(|(&l, &k)| (l, if swap { 1 - k } else { k }))
        .collect();
    let centers = if swap {
        [km.centers[1].clone(), km.centers[0].clone()]
    } else {
        km.centers.clone()
    };
    if !(0..2).all(|s| strain.values().any(|&v| v == s)) {
        return Err(Error::DegenerateInput("a strain cluster is empty".into()));
    }
    Ok(StrainAssignment {
        strain,
        centers,
        discarded,
        channels: [fluor_channels[0].to_string(), fluor_channels[1].to_string()],
    })
}

/// Total single-cell area per frame restricted to one strain.
pub fn strain_tsca_series(det: &DetectionTable, assign: &StrainAssignment, strain: usize) -> Result<QuantitySeries> {
    let n = det.frame_times_h.len();
    let mut tsca = vec![0.0; n];
    for r in &det.rows {
        if assign.strain.get(&r.label) == Some(&strain) {
            tsca[r.frame] += r.area.canonical();
        }
    }
    QuantitySeries::from_canonical(
        format!("TSCA_strain{strain}"),
        det.frame_times_h.clone(),
        tsca,
        Dimension::AREA,
    )
}

/// Log-linear TSCA fit for each strain.
pub fn per_strain_growth(det: &DetectionTable, assign: &StrainAssignment) -> [Result<GrowthFit>; 2] {
    [0, 1].map(|s| {
        let series = strain_tsca_series(det, assign, s)?;
        let present = series.values().iter().filter(|&&v| v > 0.0).count();
        if present < 2 {
            return Err(Error::InsufficientData(format!(
                "strain {s} present in {present} frames, need 2"
            )));
        }
        fit_loglinear(&series, Measure::TSCA)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgrSeries {
    pub label: u32,
    /// Start time of each difference interval.
    pub times_h: Vec<f64>,
    /// Instantaneous growth rate in µm²/h.
    pub igr: Vec<f64>,
    pub sigma_frames: f64,
}

/// Normalized Gaussian kernel truncated at four standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as usize;
    let w: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Gaussian smoothing with mirror padding that repeats the edge sample.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let n = values.len();
    if sigma == 0.0 || n == 0 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let period = 2 * n as i64;
    let at = |i: i64| -> f64 {
        let j = i.rem_euclid(period) as usize;
        if j < n {
            values[j]
        } else {
            values[2 * n - 1 - j]
        }
    };
    (0..n as i64)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * at(i + k as i64 - radius))
                .sum()
        })
        .collect()
}

/// Area difference quotients between consecutive frames, smoothed with a
/// Gaussian of `sigma_frames` frames.
pub fn igr(areas: &[Quantity], interval: Quantity, sigma_frames: f64) -> Result<Vec<Quantity>> {
    interval.expect_dimension(Dimension::TIME)?;
    if areas.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "IGR needs at least 2 areas, got {}",
            areas.len()
        )));
    }
    if interval.canonical() <= 0.0 {
        return Err(Error::InvalidInput("frame interval must be positive".into()));
    }
    if !(sigma_frames >= 0.0 && sigma_frames.is_finite()) {
        return Err(Error::InvalidInput("sigma_frames must be finite and non-negative".into()));
    }
    let raw = areas
        .windows(2)
        .map(|w| w[1].try_sub(w[0])?.try_div(interval).map(|q| q.canonical()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(gaussian_smooth(&raw, sigma_frames)
        .into_iter()
        .map(|v| Quantity::from_canonical(v, Dimension::AREA_RATE))
        .collect())
}

/// IGR series for each requested tracklet, in label order.
pub fn tracklet_igrs(
    det: &DetectionTable,
    labels: &BTreeSet<u32>,
    interval: Quantity,
    sigma_frames: f64,
) -> Result<Vec<IgrSeries>> {
    let mut by_label: BTreeMap<u32, Vec<(usize, f64, Quantity)>> = BTreeMap::new();
    for r in &det.rows {
        if labels.contains(&r.label) {
            by_label
                .entry(r.label)
                .or_default()
                .push((r.frame, r.time.canonical(), r.area));
        }
    }
    by_label
        .into_par_iter()
        .map(|(label, mut rows)| {
            rows.sort_by_key(|r| r.0);
            let areas: Vec<Quantity> = rows.iter().map(|r| r.2).collect();
            let values = igr(&areas, interval, sigma_frames)?;
            Ok(IgrSeries {
                label,
                times_h: rows[..rows.len() - 1].iter().map(|r| r.1).collect(),
                igr: values.iter().map(Quantity::canonical).collect(),
                sigma_frames,
            })
        })
        .collect()
}

pub fn write_igr_csv(path: &Path, series: &[IgrSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label".to_string(),
        format!("time_{}", Unit::Hour.token()),
        format!("igr_{}", Unit::SquareMicrometerPerHour.token().replace('/', "_per_")),
    ])?;
    for s in series {
        for (t, v) in s.times_h.iter().zip(&s.igr) {
            w.write_record([s.label.to_string(), t.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_igr_csv(path: &Path) -> Result<Vec<IgrSeries>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out: Vec<IgrSeries> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || Error::InvalidInput(format!("malformed igr row in {}", path.display()));
        let label: u32 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let t: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let v: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        match out.last_mut() {
            Some(s) if s.label == label => {
                s.times_h.push(t);
                s.igr.push(v);
            }
            _ => out.push(IgrSeries {
                label,
                times_h: vec![t],
                igr: vec![v],
                sigma_frames: f64::NAN,
            }),
        }
    }
    Ok(out)
}

/// Labels of tracklets observed from birth to division.
pub fn full_cycle_filter(tg: &TrackletGraph) -> BTreeSet<u32> {
    tg.tracklets()
        .filter(|t| t.parent.is_some() && t.fate == Fate::Divided)
        .map(|t| t.label)
        .collect()
}

/// Drop tracklets shorter than `min_frames`.
///
/// Children of a removed tracklet become roots. When one daughter of a
/// division is removed, the surviving sister is detached as well and the
/// mother's fate becomes `lost`, since the division is no longer observed.
pub fn min_length_filter(tg: &TrackletGraph, min_frames: usize) -> Result<TrackletGraph> {
    if min_frames == 0 {
        return Err(Error::InvalidInput("min_frames must be at least 1".into()));
    }
    let removed: BTreeSet<u32> = tg
        .tracklets()
        .filter(|t| t.len() < min_frames)
        .map(|t| t.label)
        .collect();
    let broken_divisions: BTreeSet<u32> = tg
        .tracklets()
        .filter(|t| !removed.contains(&t.label) && t.fate == Fate::Divided)
        .filter(|t| tg.children(t.label).iter().any(|c| removed.contains(c)))
        .map(|t| t.label)
        .collect();
    let kept: Vec<Tracklet> = tg
        .tracklets()
        .filter(|t| !removed.contains(&t.label))
        .map(|t| {
            let mut t = t.clone();
            if let Some(p) = t.parent {
                if removed.contains(&p) || broken_divisions.contains(&p) {
                    t.parent = None;
                }
            }
            if broken_divisions.contains(&t.label) {
                t.fate = Fate::Lost;
            }
            t
        })
        .collect();
    TrackletGraph::new(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStat {
    pub time_h: f64,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation, 0 for fewer than two values.
    pub std: f64,
}

/// Per-frame mean and spread of a detection quantity over a label subset.
pub fn per_frame_stats<F>(det: &DetectionTable, include: impl Fn(u32) -> bool, value: F) -> Vec<FrameStat>
where
    F: Fn(&crate::features::DetectionRow) -> f64,
{
    let n = det.frame_times_h.len();
    let mut buckets = vec![Vec::new(); n];
    for r in det.rows.iter().filter(|r| include(r.label)) {
        buckets[r.frame].push(value(r));
    }
    buckets
        .into_iter()
        .zip(&det.frame_times_h)
        .map(|(vals, &time_h)| {
            let k = vals.len();
            let mean = if k == 0 { 0.0 } else { vals.iter().sum::<f64>() / k as f64 };
            let std = if k < 2 {
                0.0
            } else {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64).sqrt()
            };
            FrameStat { time_h, n: k, mean, std }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DetectionRow, TrackletRow};
    use proptest::prelude::*;

    fn det_row(id: u64, frame: usize, label: u32, area: f64) -> DetectionRow {
        DetectionRow {
            id,
            frame,
            time: Quantity::hours(frame as f64 * 0.25),
            label,
            area: Quantity::um2(area),
            centroid_x: Quantity::um(0.0),
            centroid_y: Quantity::um(0.0),
            mean_fluor: vec![],
        }
    }

    fn table(n_frames: usize, rows: Vec<DetectionRow>) -> DetectionTable {
        DetectionTable {
            channels: vec![],
            frame_times_h: (0..n_frames).map(|t| t as f64 * 0.25).collect(),
            rows,
        }
    }

    #[test]
    fn population_counts_and_areas() {
        let det = table(2, vec![det_row(1, 0, 0, 3.0), det_row(2, 0, 0, 5.0)]);
        let p = population_series(&det).unwrap();
        assert_eq!(p.cc.values(), &[2.0, 0.0]);
        assert_eq!(p.tsca.values(), &[8.0, 0.0]);
        assert_eq!(p.tsca.dimension(), Dimension::AREA);
    }

    #[test]
    fn hull_of_two_unit_squares() {
        let corners = [
            [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
            [3.0, 0.0], [4.0, 0.0], [4.0, 1.0], [3.0, 1.0],
        ];
        assert_eq!(shoelace(&convex_hull(&corners)), 4.0);
        assert_eq!(shoelace(&convex_hull(&corners[..2])), 0.0);
    }

    /// Gift-wrapping style oracle: a point is a hull vertex candidate if all
    /// other points lie on one side of some line through it.
    fn hull_area_oracle(points: &[[f64; 2]]) -> f64 {
        let mut on_hull = Vec::new();
        for (i, &a) in points.iter().enumerate() {
            for (j, &b) in points.iter().enumerate() {
                if i == j || a == b {
                    continue;
                }
                if points.iter().all(|&p| cross(a, b, p) >= 0.0) {
                    on_hull.push(a);
                    on_hull.push(b);
                }
            }
        }
        if on_hull.is_empty() {
            return 0.0;
        }
        let cx = on_hull.iter().map(|p| p[0]).sum::<f64>() / on_hull.len() as f64;
        let cy = on_hull.iter().map(|p| p[1]).sum::<f64>() / on_hull.len() as f64;
        on_hull.sort_by(|p, q| {
            let ap = (p[1] - cy).atan2(p[0] - cx);
            let aq = (q[1] - cy).atan2(q[0] - cx);
            ap.total_cmp(&aq).then(p[0].total_cmp(&q[0])).then(p[1].total_cmp(&q[1]))
        });
        on_hull.dedup();
        shoelace(&on_hull)
    }

    proptest! {
        #[test]
        fn hull_matches_oracle(pts in prop::collection::vec((0i32..12, 0i32..12), 3..25)) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x as f64, y as f64]).collect();
            let a = shoelace(&convex_hull(&pts));
            prop_assert!((a - hull_area_oracle(&pts)).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_loglinear_fit() {
        let t = vec![0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = t.iter().map(|t: &f64| 2.0 * (0.5 * t).exp()).collect();
        let s = QuantitySeries::from_canonical("y", t, y, Dimension::AREA).unwrap();
        let f = fit_loglinear(&s, Measure::TSCA).unwrap();
        assert!((f.mu.value_in(Unit::PerHour).unwrap() - 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.intercept_log - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_series_fit() {
        let s = QuantitySeries::from_canonical("y", vec![0.0, 1.0, 2.0], vec![7.0; 3], Dimension::AREA).unwrap();
        let f = fit_loglinear(&s, Measure::TSCA).unwrap();
        assert_eq!(f.mu_per_h(), 0.0);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn nonpositive_values_are_dropped() {
        let s = QuantitySeries::from_canonical("y", vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], Dimension::AREA).unwrap();
        let f = fit_loglinear(&s, Measure::CC).unwrap();
        assert_eq!(f.n_points, 2);
        assert_eq!(f.n_dropped, 1);
        let s = QuantitySeries::from_canonical("y", vec![0.0, 1.0], vec![0.0, 1.0], Dimension::AREA).unwrap();
        assert!(matches!(fit_loglinear(&s, Measure::CC), Err(Error::InsufficientData(_))));
    }

    /// Closed-form simple regression via the normal equations on raw sums.
    fn ols_oracle(t: &[f64], y: &[f64]) -> (f64, f64) {
        let n = t.len() as f64;
        let st: f64 = t.iter().sum();
        let sy: f64 = y.iter().sum();
        let stt: f64 = t.iter().map(|v| v * v).sum();
        let sty: f64 = t.iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = (n * sty - st * sy) / (n * stt - st * st);
        (slope, (sy - slope * st) / n)
    }

    proptest! {
        #[test]
        fn noisy_fit_matches_ols_oracle(
            noise in prop::collection::vec(-0.2f64..0.2, 3..30),
            mu in -1.0f64..1.0,
        ) {
            let t: Vec<f64> = (0..noise.len()).map(|i| i as f64 * 0.25).collect();
            let y: Vec<f64> = t.iter().zip(&noise).map(|(t, e)| (mu * t + e).exp()).collect();
            let s = QuantitySeries::from_canonical("y", t.clone(), y.clone(), Dimension::AREA).unwrap();
            let f = fit_loglinear(&s, Measure::TSCA).unwrap();
            let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
            let (slope, icpt) = ols_oracle(&t, &logs);
            prop_assert!((f.mu_per_h() - slope).abs() < 1e-9);
            prop_assert!((f.intercept_log - icpt).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&f.r_squared));
        }

        #[test]
        fn slope_invariant_under_scaling(
            noise in prop::collection::vec(-0.2f64..0.2, 3..20),
            k in 0.01f64..100.0,
        ) {
            let t: Vec<f64> = (0..noise.len()).map(|i| i as f64).collect();
            let y: Vec<f64> = t.iter().zip(&noise).map(|(t, e)| (0.3 * t + e).exp()).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
            let a = fit_loglinear(&QuantitySeries::from_canonical("y", t.clone(), y, Dimension::AREA).unwrap(), Measure::TSCA).unwrap();
            let b = fit_loglinear(&QuantitySeries::from_canonical("y", t, ys, Dimension::AREA).unwrap(), Measure::TSCA).unwrap();
            prop_assert!((a.mu_per_h() - b.mu_per_h()).abs() < 1e-9);
            prop_assert!((b.intercept_log - a.intercept_log - k.ln()).abs() < 1e-9);
        }
    }

    fn pts1(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn kmeans_examples() {
        let km = kmeans2(&pts1(&[1.0, 1.1, 9.0, 9.2])).unwrap();
        assert_eq!(km.labels, vec![0, 0, 1, 1]);
        let km = kmeans2(&pts1(&[3.0, -1.0])).unwrap();
        assert_ne!(km.labels[0], km.labels[1]);
        assert!(matches!(kmeans2(&pts1(&[2.0, 2.0, 2.0])), Err(Error::DegenerateInput(_))));
    }

    /// Best 1-D two-cluster objective over every split of the sorted values.
    fn best_split_objective(values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let sse = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        (1..v.len()).map(|k| sse(&v[..k]) + sse(&v[k..])).fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn kmeans_reaches_optimal_split_on_two_groups(
            a in prop::collection::vec(0.0f64..1.0, 1..15),
            b in prop::collection::vec(0.0f64..1.0, 1..15),
            gap in 2.0f64..20.0,
        ) {
            let mut v = a.clone();
            v.extend(b.iter().map(|x| x + gap));
            let km = kmeans2(&pts1(&v)).unwrap();
            prop_assert!((km.objective() - best_split_objective(&v)).abs() < 1e-9);
        }

        #[test]
        fn kmeans_objective_never_increases(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40),
        ) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
            prop_assume!(pts.iter().any(|p| p != &pts[0]));
            let km = kmeans2(&pts).unwrap();
            prop_assert!(km.iterations <= 100);
            for w in km.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    fn trow(label: u32, fl: [f64; 2]) -> TrackletRow {
        TrackletRow {
            label,
            parent: None,
            birth_time: Quantity::hours(0.0),
            end_time: Quantity::hours(1.0),
            lifetime: Quantity::hours(1.0),
            birth_area: Quantity::um2(1.0),
            end_area: Quantity::um2(2.0),
            fate: Fate::MovieEnd,
            n_detections: 5,
            median_fluor: vec![Quantity::au(fl[0]), Quantity::au(fl[1])],
        }
    }

    fn ttable(rows: Vec<TrackletRow>) -> TrackletTable {
        TrackletTable {
            channels: vec!["gfp".into(), "rfp".into()],
            rows,
        }
    }

    #[test]
    fn strain_classification() {
        let tt = ttable(vec![
            trow(1, [10.0, 1.0]),
            trow(2, [9.0, 2.0]),
            trow(3, [1.0, 12.0]),
            trow(4, [2.0, 9.0]),
            trow(5, [0.1, 0.2]),
        ]);
        let a = classify_strains(&tt, ["gfp", "rfp"], Quantity::au(0.5)).unwrap();
        let s: Vec<usize> = a.strain.values().copied().collect();
        assert_eq!(s, vec![0, 0, 1, 1]);
        assert_eq!(a.discarded, vec![5]);
        assert!(matches!(
            classify_strains(&tt, ["gfp", "cfp"], Quantity::au(0.5)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn strain_classification_ignores_row_order() {
        let rows = vec![
            trow(1, [10.0, 1.0]),
            trow(2, [9.0, 2.0]),
            trow(3, [1.0, 12.0]),
            trow(4, [2.0, 9.0]),
            trow(6, [5.0, 5.5]),
        ];
        let a = classify_strains(&ttable(rows.clone()), ["gfp", "rfp"], Quantity::au(0.5)).unwrap();
        let mut rev = rows;
        rev.reverse();
        let b = classify_strains(&ttable(rev), ["gfp", "rfp"], Quantity::au(0.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_strain_growth_errors_for_other() {
        let rows = (0..4).map(|f| det_row(f as u64 + 1, f, 1, 1.0 + f as f64)).collect();
        let det = table(4, rows);
        let assign = StrainAssignment {
            strain: BTreeMap::from([(1, 0)]),
            centers: [vec![1.0], vec![0.0]],
            discarded: vec![],
            channels: ["a".into(), "b".into()],
        };
        let [a, b] = per_strain_growth(&det, &assign);
        assert!(a.is_ok());
        assert!(matches!(b, Err(Error::InsufficientData(_))));
    }

    fn um2(v: &[f64]) -> Vec<Quantity> {
        v.iter().map(|&x| Quantity::um2(x)).collect()
    }

    #[test]
    fn igr_examples() {
        let g = igr(&um2(&[1.0, 2.0]), Quantity::hours(0.5), 0.0).unwrap();
        assert_eq!(g[0].value_in(Unit::SquareMicrometerPerHour).unwrap(), 2.0);
        let a: Vec<f64> = (0..20).map(|t| 1.0 + 0.2 * t as f64).collect();
        for sigma in [0.0, 1.0, 4.0, 9.0] {
            for v in igr(&um2(&a), Quantity::hours(1.0), sigma).unwrap() {
                assert!((v.canonical() - 0.2).abs() < 1e-12);
            }
        }
        assert!(matches!(igr(&um2(&[1.0]), Quantity::hours(1.0), 4.0), Err(Error::InsufficientData(_))));
        assert!(igr(&um2(&[1.0, 2.0]), Quantity::um(1.0), 4.0).is_err());
    }

    /// Direct convolution with explicit mirror indexing, written independently.
    fn smooth_oracle(x: &[f64], sigma: f64) -> Vec<f64> {
        let n = x.len() as i64;
        let r = (4.0 * sigma + 0.5).floor() as i64;
        let mirror = |mut i: i64| {
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - i - 1;
                } else {
                    return x[i as usize];
                }
            }
        };
        (0..n)
            .map(|i| {
                let mut num = 0.0;
                let mut den = 0.0;
                for k in -r..=r {
                    let w = (-(k * k) as f64 / (2.0 * sigma * sigma)).exp();
                    num += w * mirror(i + k);
                    den += w;
                }
                num / den
            })
            .collect()
    }

    proptest! {
        #[test]
        fn igr_matches_convolution_oracle(len in 2usize..40, mu in 0.1f64..1.5, sigma in 0.5f64..6.0) {
            let dt = 0.25;
            let a: Vec<f64> = (0..len).map(|t| (mu * t as f64 * dt).exp()).collect();
            let raw: Vec<f64> = a.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
            let got = igr(&um2(&a), Quantity::hours(dt), sigma).unwrap();
            for (g, o) in got.iter().zip(smooth_oracle(&raw, sigma)) {
                prop_assert!((g.canonical() - o).abs() < 1e-9);
            }
            let unsmoothed = igr(&um2(&a), Quantity::hours(dt), 0.0).unwrap();
            for (g, o) in unsmoothed.iter().zip(&raw) {
                prop_assert_eq!(g.canonical(), *o);
            }
        }
    }

    fn tl(label: u32, parent: Option<u32>, ids: std::ops::Range<u64>, birth: usize, fate: Fate) -> Tracklet {
        let n = (ids.end - ids.start) as usize;
        Tracklet {
            label,
            parent,
            detections: ids.collect(),
            birth_frame: birth,
            end_frame: birth + n - 1,
            fate,
        }
    }

    fn tree() -> TrackletGraph {
        // 1 (frames 0-3) -> 2 (4-7, divides), 3 (4-5) ; 2 -> 4 (8-9), 5 (8-9)
        TrackletGraph::new(vec![
            tl(1, None, 1..5, 0, Fate::Divided),
            tl(2, Some(1), 10..14, 4, Fate::Divided),
            tl(3, Some(1), 20..22, 4, Fate::Lost),
            tl(4, Some(2), 30..32, 8, Fate::MovieEnd),
            tl(5, Some(2), 40..42, 8, Fate::MovieEnd),
        ])
        .unwrap()
    }

    #[test]
    fn full_cycle_selection() {
        assert_eq!(full_cycle_filter(&tree()), BTreeSet::from([2]));
    }

    #[test]
    fn min_length_examples() {
        let g = tree();
        assert_eq!(min_length_filter(&g, 1).unwrap(), g);
        let f = min_length_filter(&g, 3).unwrap();
        let labels: Vec<u32> = f.tracklets().map(|t| t.label).collect();
        assert_eq!(labels, vec![1, 2]);
        assert_eq!(f.get(1).unwrap().fate, Fate::Lost);
        assert_eq!(f.get(2).unwrap().parent, None);
        assert_eq!(f.get(2).unwrap().fate, Fate::Lost);

        let g = TrackletGraph::new(vec![
            tl(1, None, 1..3, 0, Fate::Divided),
            tl(2, Some(1), 10..14, 2, Fate::MovieEnd),
            tl(3, Some(1), 20..24, 2, Fate::MovieEnd),
        ])
        .unwrap();
        let f = min_length_filter(&g, 3).unwrap();
        assert_eq!(f.roots().count(), 2);
        assert!(f.get(1).is_none());
    }

    #[test]
    fn frame_stats() {
        let det = table(2, vec![det_row(1, 0, 1, 2.0), det_row(2, 0, 2, 4.0), det_row(3, 1, 9, 1.0)]);
        let s = per_frame_stats(&det, |l| l < 5, |r| r.area.canonical());
        assert_eq!((s[0].n, s[0].mean, s[0].std), (2, 3.0, 1.0));
        assert_eq!((s[1].n, s[1].mean), (0, 0.0));
    }
}
