//! Per-frame cell instances: threshold segmentation, label-mask ingestion,
//! size filtering and the overlay interchange formats.
//!
//! Contours follow pixel edges: pixel `(row, col)` covers the square
//! `[col, col+1] x [row, row+1]`, so the contour of a simply connected mask
//! encloses exactly its pixel count. Centroids are the mean of the pixel
//! indices `(col, row)`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagestack::ImageStack;
use crate::units::{px_to_physical, Dimension, Quantity};

/// One segmented cell in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDetection {
    pub id: u64,
    pub frame: usize,
    /// `(row, col)` pairs in row-major order.
    pub pixels: Vec<(u32, u32)>,
    /// Closed polygon of `[x, y]` vertices, first vertex not repeated.
    pub contour: Vec<[f64; 2]>,
    /// `[x, y]` in pixel coordinates.
    pub centroid_px: [f64; 2],
}

impl CellDetection {
    fn from_pixels(id: u64, frame: usize, width: usize, indices: &[usize]) -> Self {
        let pixels = indices
            .iter()
            .map(|&i| ((i / width) as u32, (i % width) as u32))
            .collect();
        Self::from_pixel_set(id, frame, pixels)
    }

    /// Build a detection from `(row, col)` pixels, computing the contour and
    /// centroid. Pixels are sorted into row-major order.
    ///
    /// # Panics
    /// If `pixels` is empty.
    pub fn from_pixel_set(id: u64, frame: usize, mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "a detection needs at least one pixel");
        pixels.sort_unstable();
        pixels.dedup();
        let n = pixels.len() as f64;
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(r, c)| (sx + f64::from(c), sy + f64::from(r)));
        let contour = trace_outer_contour(&pixels);
        CellDetection {
            id,
            frame,
            pixels,
            contour,
            centroid_px: [sx / n, sy / n],
        }
    }

    pub fn area_px(&self) -> f64 {
        self.pixels.len() as f64
    }

    pub fn area(&self, pixel_size: Quantity) -> Result<Quantity> {
        px_to_physical(self.area_px(), 2, pixel_size)
    }
}

/// Segmentation result for a whole stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    frames: Vec<Vec<CellDetection>>,
    height: usize,
    width: usize,
    index: HashMap<u64, (usize, usize)>,
}

impl Overlay {
    pub fn new(frames: Vec<Vec<CellDetection>>, height: usize, width: usize) -> Result<Self> {
        let mut index = HashMap::new();
        let mut occupied = vec![u64::MAX; height * width];
        for (t, dets) in frames.iter().enumerate() {
            occupied.fill(u64::MAX);
            for (k, d) in dets.iter().enumerate() {
                if d.frame != t {
                    return Err(Error::InvalidInput(format!(
                        "detection {} claims frame {} but is stored in frame {t}",
                        d.id, d.frame
                    )));
                }
                if d.pixels.is_empty() {
                    return Err(Error::InvalidInput(format!("detection {} has no pixels", d.id)));
                }
                if index.insert(d.id, (t, k)).is_some() {
                    return Err(Error::InvalidInput(format!("duplicate detection id {}", d.id)));
                }
                for &(r, c) in &d.pixels {
                    let (r, c) = (r as usize, c as usize);
                    if r >= height || c >= width {
                        return Err(Error::InvalidInput(format!(
                            "detection {} pixel ({r},{c}) outside {height}x{width}",
                            d.id
                        )));
                    }
                    let slot = &mut occupied[r * width + c];
                    if *slot != u64::MAX {
                        return Err(Error::InvalidInput(format!(
                            "detections {} and {} overlap in frame {t}",
                            *slot, d.id
                        )));
                    }
                    *slot = d.id;
                }
            }
        }
        Ok(Overlay {
            frames,
            height,
            width,
            index,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self, t: usize) -> &[CellDetection] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<CellDetection>] {
        &self.frames
    }

    pub fn detections(&self) -> impl Iterator<Item = &CellDetection> {
        self.frames.iter().flatten()
    }

    pub fn n_detections(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, id: u64) -> Option<&CellDetection> {
        self.index.get(&id).map(|&(t, k)| &self.frames[t][k])
    }

    /// Export one JSON object per detection.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for d in self.detections() {
            let rec = DetectionRecord {
                id: d.id,
                frame: d.frame,
                contour: d.contour.clone(),
                area_px: d.area_px(),
                centroid: d.centroid_px,
            };
            let line = serde_json::to_string(&rec).map_err(|e| Error::json(path, e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Export masks as `frame id: start,len;start,len;...` over row-major indices.
    pub fn write_rle(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for d in self.detections() {
            writeln!(out, "{}", rle_line(d, self.width)).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Read an overlay back from its JSONL and RLE exports.
    pub fn read(
        jsonl: &Path,
        rle: &Path,
        n_frames: usize,
        height: usize,
        width: usize,
    ) -> Result<Overlay> {
        let mut masks: HashMap<u64, (usize, Vec<usize>)> = HashMap::new();
        let reader = BufReader::new(File::open(rle).map_err(|e| Error::io(rle, e))?);
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io(rle, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, frame, indices) = parse_rle_line(&line)?;
            masks.insert(id, (frame, indices));
        }

        let mut frames: Vec<Vec<CellDetection>> = vec![Vec::new(); n_frames];
        let reader = BufReader::new(File::open(jsonl).map_err(|e| Error::io(jsonl, e))?);
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io(jsonl, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DetectionRecord =
                serde_json::from_str(&line).map_err(|e| Error::json(jsonl, e))?;
            let (frame, indices) = masks.remove(&rec.id).ok_or_else(|| {
                Error::InconsistentInput(format!("detection {} has no mask", rec.id))
            })?;
            if frame != rec.frame || rec.frame >= n_frames {
                return Err(Error::InconsistentInput(format!(
                    "detection {} frame mismatch",
                    rec.id
                )));
            }
            let pixels = indices
                .iter()
                .map(|&i| ((i / width) as u32, (i % width) as u32))
                .collect();
            frames[frame].push(CellDetection {
                id: rec.id,
                frame,
                pixels,
                contour: rec.contour,
                centroid_px: rec.centroid,
            });
        }
        if let Some(id) = masks.keys().next() {
            return Err(Error::InconsistentInput(format!("mask {id} has no detection record")));
        }
        Overlay::new(frames, height, width)
    }
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    id: u64,
    frame: usize,
    contour: Vec<[f64; 2]>,
    area_px: f64,
    centroid: [f64; 2],
}

fn rle_line(d: &CellDetection, width: usize) -> String {
    let mut line = format!("{} {}:", d.frame, d.id);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &(r, c) in &d.pixels {
        let i = r as usize * width + c as usize;
        match runs.last_mut() {
            Some((start, len)) if *start + *len == i => *len += 1,
            _ => runs.push((i, 1)),
        }
    }
    for (k, (start, len)) in runs.iter().enumerate() {
        let sep = if k == 0 { " " } else { ";" };
        let _ = write!(line, "{sep}{start},{len}");
    }
    line
}

fn parse_rle_line(line: &str) -> Result<(u64, usize, Vec<usize>)> {
    let bad = || Error::InvalidInput(format!("malformed mask line: {line}"));
    let (head, body) = line.split_once(':').ok_or_else(bad)?;
    let mut head = head.split_whitespace();
    let frame: usize = head.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let id: u64 = head.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let mut indices = Vec::new();
    for run in body.trim().split(';').filter(|s| !s.is_empty()) {
        let (start, len) = run.split_once(',').ok_or_else(bad)?;
        let start: usize = start.trim().parse().map_err(|_| bad())?;
        let len: usize = len.trim().parse().map_err(|_| bad())?;
        indices.extend(start..start + len);
    }
    Ok((id, frame, indices))
}

/// Foreground selection for threshold segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Foreground is `value >= threshold`.
    Bright,
    /// Foreground is `value <= threshold`.
    Dark,
}

/// Group pixels into 8-connected components of equal key. Components come
/// out ordered by their first row-major pixel, each with sorted indices.
pub fn connected_components<F>(height: usize, width: usize, key: F) -> Vec<Vec<usize>>
where
    F: Fn(usize) -> Option<u32>,
{
    let mut seen = vec![false; height * width];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..height * width {
        if seen[start] {
            continue;
        }
        let Some(k) = key(start) else { continue };
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (r, c) = ((i / width) as i64, (i % width) as i64);
            for dr in -1..=1i64 {
                for dc in -1..=1i64 {
                    let (nr, nc) = (r + dr, c + dc);
                    if (dr == 0 && dc == 0)
                        || nr < 0
                        || nc < 0
                        || nr >= height as i64
                        || nc >= width as i64
                    {
                        continue;
                    }
                    let j = nr as usize * width + nc as usize;
                    if !seen[j] && key(j) == Some(k) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

fn assemble(per_frame: Vec<Vec<Vec<usize>>>, height: usize, width: usize) -> Result<Overlay> {
    let mut next_id = 1u64;
    let frames = per_frame
        .into_iter()
        .enumerate()
        .map(|(t, comps)| {
            comps
                .iter()
                .map(|c| {
                    let d = CellDetection::from_pixels(next_id, t, width, c);
                    next_id += 1;
                    d
                })
                .collect()
        })
        .collect();
    Overlay::new(frames, height, width)
}

/// Threshold one channel and split the foreground into 8-connected cells.
pub fn segment_threshold(
    stack: &ImageStack,
    channel: usize,
    threshold: f64,
    polarity: Polarity,
) -> Result<Overlay> {
    let (t, h, w, c) = stack.shape();
    if channel >= c {
        return Err(Error::IndexError {
            axis: "channel",
            index: channel,
            len: c,
        });
    }
    let per_frame = (0..t)
        .into_par_iter()
        .map(|ti| {
            let view = stack.channel(ti, channel)?;
            let fg = |i: usize| {
                let v = f64::from(view.at(i));
                let pass = match polarity {
                    Polarity::Bright => v >= threshold,
                    Polarity::Dark => v <= threshold,
                };
                pass.then_some(1)
            };
            Ok(connected_components(h, w, fg))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(per_frame, h, w)
}

/// Result of label-mask ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedLabels {
    pub overlay: Overlay,
    /// Number of (frame, label) pairs that covered more than one connected blob.
    pub split_labels: usize,
}

/// Turn an integer label stack (0 = background) into an overlay. Labels are
/// frame-local; disconnected blobs sharing a label become separate cells.
pub fn ingest_label_masks(labels: &ImageStack) -> Result<IngestedLabels> {
    let (t, h, w, c) = labels.shape();
    if c != 1 {
        return Err(Error::InvalidInput(format!(
            "label stack must have one channel, found {c}"
        )));
    }
    if let Some(v) = labels
        .pixels()
        .iter()
        .find(|v| v.fract() != 0.0 || **v < 0.0 || **v > u32::MAX as f32)
    {
        return Err(Error::InvalidInput(format!("label value {v} is not a non-negative integer")));
    }
    let per_frame = (0..t)
        .into_par_iter()
        .map(|ti| {
            let view = labels.channel(ti, 0)?;
            let key = |i: usize| {
                let v = view.at(i) as u32;
                (v != 0).then_some(v)
            };
            let comps = connected_components(h, w, key);
            let mut per_label: BTreeMap<u32, usize> = BTreeMap::new();
            for comp in &comps {
                *per_label.entry(view.at(comp[0]) as u32).or_default() += 1;
            }
            let splits = per_label.values().filter(|&&n| n > 1).count();
            Ok((comps, splits))
        })
        .collect::<Result<Vec<_>>>()?;
    let split_labels = per_frame.iter().map(|(_, s)| s).sum();
    let overlay = assemble(per_frame.into_iter().map(|(c, _)| c).collect(), h, w)?;
    Ok(IngestedLabels {
        overlay,
        split_labels,
    })
}

/// Drop detections whose physical area lies outside `[min_area, max_area]`.
pub fn size_filter(
    overlay: &Overlay,
    min_area: Quantity,
    max_area: Quantity,
    pixel_size: Quantity,
) -> Result<Overlay> {
    min_area.expect_dimension(Dimension::AREA)?;
    max_area.expect_dimension(Dimension::AREA)?;
    if min_area.canonical() > max_area.canonical() {
        return Err(Error::InvalidInput(format!(
            "size filter min {} exceeds max {}",
            min_area.canonical(),
            max_area.canonical()
        )));
    }
    let mut frames = Vec::with_capacity(overlay.n_frames());
    for dets in overlay.frames() {
        let mut kept = Vec::new();
        for d in dets {
            let a = d.area(pixel_size)?.canonical();
            if a >= min_area.canonical() && a <= max_area.canonical() {
                kept.push(d.clone());
            }
        }
        frames.push(kept);
    }
    Overlay::new(frames, overlay.height(), overlay.width())
}

/// Absolute shoelace area of a closed polygon.
pub fn polygon_area(contour: &[[f64; 2]]) -> Result<f64> {
    if contour.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "polygon needs at least 3 vertices, got {}",
            contour.len()
        )));
    }
    let n = contour.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let [x0, y0] = contour[i];
            let [x1, y1] = contour[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    Ok(twice.abs() / 2.0)
}

// Directions in image coordinates (y grows downwards).
const EAST: usize = 0;
const SOUTH: usize = 1;
const WEST: usize = 2;
const NORTH: usize = 3;
const STEP: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Trace the outer pixel-edge boundary of an 8-connected pixel set.
///
/// Boundary edges are walked with the interior on the right. Where two
/// pixels touch only at a corner, the walk turns left so both stay on the
/// same boundary.
fn trace_outer_contour(pixels: &[(u32, u32)]) -> Vec<[f64; 2]> {
    let (r0, c0) = pixels[0];
    let min_c = pixels.iter().map(|p| p.1).min().unwrap_or(0) as i64;
    let max_c = pixels.iter().map(|p| p.1).max().unwrap_or(0) as i64;
    let min_r = i64::from(r0);
    let max_r = pixels.iter().map(|p| p.0).max().unwrap_or(0) as i64;
    let bw = (max_c - min_c + 1) as usize;
    let bh = (max_r - min_r + 1) as usize;
    let mut mask = vec![false; bw * bh];
    for &(r, c) in pixels {
        mask[(i64::from(r) - min_r) as usize * bw + (i64::from(c) - min_c) as usize] = true;
    }
    let inside = |r: i64, c: i64| -> bool {
        let (lr, lc) = (r - min_r, c - min_c);
        lr >= 0 && lc >= 0 && (lr as usize) < bh && (lc as usize) < bw && mask[lr as usize * bw + lc as usize]
    };
    let edge_exists = |x: i64, y: i64, dir: usize| -> bool {
        match dir {
            EAST => inside(y, x) && !inside(y - 1, x),
            SOUTH => inside(y, x - 1) && !inside(y, x),
            WEST => inside(y - 1, x - 1) && !inside(y, x - 1),
            NORTH => inside(y - 1, x) && !inside(y - 1, x - 1),
            _ => unreachable!("direction index out of range"),
        }
    };

    let start = (i64::from(c0), i64::from(r0));
    let (mut x, mut y) = start;
    let mut dir = EAST;
    let mut contour = vec![[start.0 as f64, start.1 as f64]];
    loop {
        x += STEP[dir].0;
        y += STEP[dir].1;
        if (x, y) == start {
            break;
        }
        let next = [(dir + 3) % 4, dir, (dir + 1) % 4]
            .into_iter()
            .find(|&d| edge_exists(x, y, d))
            .expect("pixel-edge boundary is closed");
        if next != dir {
            contour.push([x as f64, y as f64]);
        }
        dir = next;
    }
    contour
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagestack::StackMetadata;
    use proptest::prelude::*;

    fn stack_from(frames: Vec<Vec<f32>>, h: usize, w: usize) -> ImageStack {
        let t = frames.len();
        let meta = StackMetadata::new(
            Quantity::um(1.0),
            Quantity::minutes(1.0),
            vec!["ch".into()],
            "t",
        )
        .unwrap();
        ImageStack::new((t, h, w, 1), frames.concat(), meta).unwrap()
    }

    /// Plain recursive flood fill, used as an independent connectivity oracle.
    fn flood_fill_count(mask: &[bool], h: usize, w: usize) -> usize {
        let mut seen = vec![false; h * w];
        let mut count = 0;
        for s in 0..h * w {
            if !mask[s] || seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                let (r, c) = (i / w, i % w);
                for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                    for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                        let j = nr * w + nc;
                        if mask[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn two_blocks() {
        let (h, w) = (8, 10);
        let mut f = vec![0.0f32; h * w];
        for r in 1..4 {
            for c in 1..4 {
                f[r * w + c] = 1.0;
                f[r * w + c + 5] = 1.0;
            }
        }
        let ov = segment_threshold(&stack_from(vec![f], h, w), 0, 0.5, Polarity::Bright).unwrap();
        assert_eq!(ov.frame(0).len(), 2);
        assert!(ov.frame(0).iter().all(|d| d.area_px() == 9.0));
        assert_eq!(ov.frame(0)[0].contour, vec![[1.0, 1.0], [4.0, 1.0], [4.0, 4.0], [1.0, 4.0]]);
        assert_eq!(ov.frame(0)[0].centroid_px, [2.0, 2.0]);
    }

    #[test]
    fn empty_frame() {
        let ov =
            segment_threshold(&stack_from(vec![vec![0.0; 16]], 4, 4), 0, 0.5, Polarity::Bright)
                .unwrap();
        assert_eq!(ov.n_detections(), 0);
    }

    #[test]
    fn diagonal_pixels_are_one_cell() {
        let f = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let mask: Vec<bool> = f.iter().map(|&v| v >= 0.5).collect();
        let ov = segment_threshold(&stack_from(vec![f], 3, 3), 0, 0.5, Polarity::Bright).unwrap();
        assert_eq!(ov.frame(0).len(), flood_fill_count(&mask, 3, 3));
        assert_eq!(ov.frame(0).len(), 1);
        let d = &ov.frame(0)[0];
        assert_eq!(polygon_area(&d.contour).unwrap(), 2.0);
        assert_eq!(d.contour.len(), 8);
    }

    #[test]
    fn dark_polarity() {
        let f = vec![0.9, 0.1, 0.9, 0.9];
        let ov = segment_threshold(&stack_from(vec![f], 2, 2), 0, 0.5, Polarity::Dark).unwrap();
        assert_eq!(ov.frame(0).len(), 1);
        assert_eq!(ov.frame(0)[0].pixels, vec![(0, 1)]);
    }

    #[test]
    fn channel_out_of_range() {
        let s = stack_from(vec![vec![0.0; 4]], 2, 2);
        assert!(matches!(
            segment_threshold(&s, 1, 0.5, Polarity::Bright),
            Err(Error::IndexError { .. })
        ));
    }

    #[test]
    fn ingest_labels() {
        let ing = ingest_label_masks(&stack_from(vec![vec![0.0, 1.0, 1.0, 2.0]], 1, 4)).unwrap();
        let areas: Vec<f64> = ing.overlay.frame(0).iter().map(|d| d.area_px()).collect();
        assert_eq!(areas, vec![2.0, 1.0]);
        assert_eq!(ing.split_labels, 0);

        let ing = ingest_label_masks(&stack_from(vec![vec![0.0; 4]], 2, 2)).unwrap();
        assert_eq!(ing.overlay.n_detections(), 0);

        let split = vec![3.0, 0.0, 0.0, 3.0, 0.0, 0.0];
        let mask: Vec<bool> = split.iter().map(|&v| v != 0.0).collect();
        let ing = ingest_label_masks(&stack_from(vec![split], 1, 6)).unwrap();
        assert_eq!(ing.overlay.frame(0).len(), flood_fill_count(&mask, 1, 6));
        assert_eq!(ing.overlay.frame(0).len(), 2);
        assert_eq!(ing.split_labels, 1);

        let err = ingest_label_masks(&stack_from(vec![vec![0.5, 0.0]], 1, 2)).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn adjacent_different_labels_stay_apart() {
        let ing = ingest_label_masks(&stack_from(vec![vec![1.0, 2.0, 2.0, 1.0]], 2, 2)).unwrap();
        assert_eq!(ing.overlay.frame(0).len(), 2);
    }

    #[test]
    fn size_filter_bounds() {
        // areas 0.5, 2.0 and 50 um2 at 0.5 um/px are 2, 8 and 200 px.
        let (h, w) = (20, 40);
        let mut f = vec![0.0f32; h * w];
        f[2] = 1.0;
        f[3] = 1.0; // 2 px
        for c in 10..18 {
            f[c] = 1.0; // 8 px
        }
        for r in 5..15 {
            for c in 20..40 {
                f[r * w + c] = 1.0; // 200 px
            }
        }
        let ov = segment_threshold(&stack_from(vec![f], h, w), 0, 0.5, Polarity::Bright).unwrap();
        let px = Quantity::um(0.5);
        let areas: Vec<f64> = ov.frame(0).iter().map(|d| d.area(px).unwrap().canonical()).collect();
        assert!(areas.contains(&2.0) && areas.contains(&50.0));
        let kept = size_filter(&ov, Quantity::um2(1.0), Quantity::um2(10.0), px).unwrap();
        assert_eq!(kept.frame(0).len(), 1);
        assert_eq!(kept.frame(0)[0].area(px).unwrap().canonical(), 2.0);
        let survivor = kept.frame(0)[0].id;
        assert!(ov.get(survivor).is_some());

        let all = size_filter(&ov, Quantity::um2(0.0), Quantity::um2(f64::INFINITY), px).unwrap();
        assert_eq!(all, ov);

        let err = size_filter(&ov, Quantity::um(1.0), Quantity::um(10.0), px).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn shoelace() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(polygon_area(&sq).unwrap(), 1.0);
        let tri = [[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]];
        assert_eq!(polygon_area(&tri).unwrap(), 6.0);
        let mut rev = sq;
        rev.reverse();
        assert_eq!(polygon_area(&rev).unwrap(), 1.0);
        assert!(polygon_area(&sq[..2]).is_err());
    }

    #[test]
    fn rle_round_trip_line() {
        let d = CellDetection::from_pixels(7, 3, 5, &[1, 2, 3, 6, 7, 8, 20]);
        let line = rle_line(&d, 5);
        assert_eq!(line, "3 7: 1,3;6,3;20,1");
        let (id, frame, idx) = parse_rle_line(&line).unwrap();
        assert_eq!((id, frame), (7, 3));
        assert_eq!(idx, vec![1, 2, 3, 6, 7, 8, 20]);
    }

    fn random_frame() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            (Just(h), Just(w), proptest::collection::vec(proptest::bool::weighted(0.4), h * w))
        })
    }

    proptest! {
        #[test]
        fn components_match_flood_fill((h, w, mask) in random_frame()) {
            let f: Vec<f32> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let s = stack_from(vec![f.clone(), f], h, w);
            let ov = segment_threshold(&s, 0, 0.5, Polarity::Bright).unwrap();
            prop_assert_eq!(ov.frame(0).len(), flood_fill_count(&mask, h, w));
            // Disjoint cover of the foreground.
            let total: usize = ov.frame(0).iter().map(|d| d.pixels.len()).sum();
            prop_assert_eq!(total, mask.iter().filter(|&&b| b).count());
            prop_assert!(total <= h * w);
            // Same frame content, same detections apart from ids and frame index.
            for (a, b) in ov.frame(0).iter().zip(ov.frame(1)) {
                prop_assert_eq!(&a.pixels, &b.pixels);
                prop_assert_eq!(&a.contour, &b.contour);
            }
            let again = segment_threshold(&s, 0, 0.5, Polarity::Bright).unwrap();
            prop_assert_eq!(again, ov.clone());
            // The outer contour encloses every pixel of the cell.
            for d in ov.frame(0) {
                prop_assert!(polygon_area(&d.contour).unwrap() >= d.area_px());
            }
        }

        #[test]
        fn rectangle_contour_area((r0, c0, bh, bw) in (0usize..5, 0usize..5, 1usize..8, 1usize..8)) {
            let (h, w) = (14, 14);
            let mut f = vec![0.0f32; h * w];
            for r in r0..r0 + bh {
                for c in c0..c0 + bw {
                    f[r * w + c] = 1.0;
                }
            }
            let ov = segment_threshold(&stack_from(vec![f], h, w), 0, 0.5, Polarity::Bright).unwrap();
            let d = &ov.frame(0)[0];
            let perimeter = 2.0 * (bh + bw) as f64;
            let area = polygon_area(&d.contour).unwrap();
            prop_assert!(area <= d.area_px() && area >= d.area_px() - perimeter);
            prop_assert_eq!(d.contour.len(), 4);
        }
    }
}
