//! Unit-aware feature tables.
//!
//! Per-detection rows carry spatial features, per-tracklet rows carry
//! temporal ones; the two are joined by the tracklet `label` (0 for
//! detections that belong to no tracklet).

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagestack::ImageStack;
use crate::segmentation::Overlay;
use crate::tracking::{Fate, TrackletGraph};
use crate::units::{px_to_physical, Dimension, Quantity, Unit};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub id: u64,
    pub frame: usize,
    pub time: Quantity,
    pub label: u32,
    pub area: Quantity,
    pub centroid_x: Quantity,
    pub centroid_y: Quantity,
    /// Mean intensity per channel over the cell mask.
    pub mean_fluor: Vec<Quantity>,
}

/// One row per detection, ordered by detection id.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTable {
    pub channels: Vec<String>,
    /// Acquisition time of every frame, including frames without cells.
    pub frame_times_h: Vec<f64>,
    pub rows: Vec<DetectionRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackletRow {
    pub label: u32,
    pub parent: Option<u32>,
    pub birth_time: Quantity,
    pub end_time: Quantity,
    pub lifetime: Quantity,
    pub birth_area: Quantity,
    pub end_area: Quantity,
    pub fate: Fate,
    pub n_detections: usize,
    pub median_fluor: Vec<Quantity>,
}

/// One row per tracklet, ordered by label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackletTable {
    pub channels: Vec<String>,
    pub rows: Vec<TrackletRow>,
}

pub fn extract_detection_features(
    overlay: &Overlay,
    stack: &ImageStack,
    tracklets: Option<&TrackletGraph>,
) -> Result<DetectionTable> {
    let (t, h, w, c) = stack.shape();
    if overlay.n_frames() != t || overlay.height() != h || overlay.width() != w {
        return Err(Error::InconsistentInput(format!(
            "overlay is {}x{}x{} but stack is {t}x{h}x{w}",
            overlay.n_frames(),
            overlay.height(),
            overlay.width()
        )));
    }
    let meta = stack.metadata();
    let labels = tracklets.map(TrackletGraph::label_index).unwrap_or_default();
    let detections: Vec<_> = overlay.detections().collect();
    let mut rows = detections
        .par_iter()
        .map(|d| {
            let frame = stack.frame(d.frame)?;
            let mut mean_fluor = Vec::with_capacity(c);
            for ch in 0..c {
                let view = frame.channel(ch)?;
                let sum: f64 = d
                    .pixels
                    .iter()
                    .map(|&(r, col)| f64::from(view.get(r as usize, col as usize)))
                    .sum();
                mean_fluor.push(Quantity::au(sum / d.area_px()));
            }
            Ok(DetectionRow {
                id: d.id,
                frame: d.frame,
                time: stack.time_of(d.frame)?,
                label: labels.get(&d.id).copied().unwrap_or(0),
                area: d.area(meta.pixel_size)?,
                centroid_x: px_to_physical(d.centroid_px[0], 1, meta.pixel_size)?,
                centroid_y: px_to_physical(d.centroid_px[1], 1, meta.pixel_size)?,
                mean_fluor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.id);
    Ok(DetectionTable {
        channels: meta.channel_names.clone(),
        frame_times_h: stack.frame_times_h(),
        rows,
    })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn extract_tracklet_features(
    tracklets: &TrackletGraph,
    detections: &DetectionTable,
) -> Result<TrackletTable> {
    let by_id: HashMap<u64, &DetectionRow> = detections.rows.iter().map(|r| (r.id, r)).collect();
    let n_channels = detections.channels.len();
    let mut rows = Vec::with_capacity(tracklets.len());
    for t in tracklets.tracklets() {
        let members = t
            .detections
            .iter()
            .map(|id| {
                by_id.get(id).copied().ok_or_else(|| {
                    Error::InconsistentInput(format!(
                        "tracklet {} detection {id} missing from detection table",
                        t.label
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let first = members[0];
        let last = members[members.len() - 1];
        let median_fluor = (0..n_channels)
            .map(|c| {
                let mut vals: Vec<f64> = members.iter().map(|r| r.mean_fluor[c].canonical()).collect();
                Quantity::au(median(&mut vals).unwrap_or(0.0))
            })
            .collect();
        rows.push(TrackletRow {
            label: t.label,
            parent: t.parent,
            birth_time: first.time,
            end_time: last.time,
            lifetime: last.time.try_sub(first.time)?,
            birth_area: first.area,
            end_area: last.area,
            fate: t.fate,
            n_detections: members.len(),
            median_fluor,
        });
    }
    Ok(TrackletTable {
        channels: detections.channels.clone(),
        rows,
    })
}

fn column(name: &str, unit: Unit) -> String {
    format!("{name}_{}", unit.token())
}

fn fmt(q: Quantity, unit: Unit) -> Result<String> {
    Ok(q.value_in(unit)?.to_string())
}

impl DetectionTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![
            "id".to_string(),
            "frame".into(),
            column("time", Unit::Hour),
            "label".into(),
            column("area", Unit::SquareMicrometer),
            column("cx", Unit::Micrometer),
            column("cy", Unit::Micrometer),
        ];
        h.extend(
            self.channels
                .iter()
                .map(|c| column(&format!("fluor_{c}"), Unit::ArbitraryUnit)),
        );
        h
    }

    /// Rows whose tracklet label is `label`.
    pub fn rows_with_label(&self, label: u32) -> impl Iterator<Item = &DetectionRow> {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.id.to_string(),
                r.frame.to_string(),
                fmt(r.time, Unit::Hour)?,
                r.label.to_string(),
                fmt(r.area, Unit::SquareMicrometer)?,
                fmt(r.centroid_x, Unit::Micrometer)?,
                fmt(r.centroid_y, Unit::Micrometer)?,
            ];
            for f in &r.mean_fluor {
                rec.push(fmt(*f, Unit::ArbitraryUnit)?);
            }
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a table written by [`DetectionTable::write_csv`]. Frame times are
    /// taken from `frame_times_h` when given, otherwise from the rows.
    pub fn read_csv(path: &Path, frame_times_h: Option<Vec<f64>>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let channels = parse_channel_columns(&header, 7, "fluor_", "_au")?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("bad value in column {}", header[i])))
            };
            rows.push(DetectionRow {
                id: num(0)? as u64,
                frame: num(1)? as usize,
                time: Quantity::hours(num(2)?),
                label: num(3)? as u32,
                area: Quantity::um2(num(4)?),
                centroid_x: Quantity::um(num(5)?),
                centroid_y: Quantity::um(num(6)?),
                mean_fluor: (0..channels.len())
                    .map(|c| num(7 + c).map(Quantity::au))
                    .collect::<Result<_>>()?,
            });
        }
        let frame_times_h = frame_times_h.unwrap_or_else(|| {
            let n = rows.iter().map(|r| r.frame + 1).max().unwrap_or(0);
            let mut times = vec![f64::NAN; n];
            for r in &rows {
                times[r.frame] = r.time.canonical();
            }
            times
        });
        Ok(DetectionTable {
            channels,
            frame_times_h,
            rows,
        })
    }
}

impl TrackletTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec![
            "label".to_string(),
            "parent".into(),
            column("birth", Unit::Hour),
            column("end", Unit::Hour),
            column("lifetime", Unit::Hour),
            column("birth_area", Unit::SquareMicrometer),
            column("end_area", Unit::SquareMicrometer),
            "fate".into(),
            "n_detections".into(),
        ];
        h.extend(
            self.channels
                .iter()
                .map(|c| column(&format!("medfluor_{c}"), Unit::ArbitraryUnit)),
        );
        h
    }

    pub fn row(&self, label: u32) -> Option<&TrackletRow> {
        self.rows
            .binary_search_by_key(&label, |r| r.label)
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.label.to_string(),
                r.parent.map(|p| p.to_string()).unwrap_or_default(),
                fmt(r.birth_time, Unit::Hour)?,
                fmt(r.end_time, Unit::Hour)?,
                fmt(r.lifetime, Unit::Hour)?,
                fmt(r.birth_area, Unit::SquareMicrometer)?,
                fmt(r.end_area, Unit::SquareMicrometer)?,
                r.fate.as_str().to_string(),
                r.n_detections.to_string(),
            ];
            for f in &r.median_fluor {
                rec.push(fmt(*f, Unit::ArbitraryUnit)?);
            }
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let channels = parse_channel_columns(&header, 9, "medfluor_", "_au")?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad value in column {}", header[i])))
            };
            let fate = match field(7) {
                "divided" => Fate::Divided,
                "lost" => Fate::Lost,
                "movie_end" => Fate::MovieEnd,
                other => return Err(Error::InvalidInput(format!("unknown fate {other}"))),
            };
            rows.push(TrackletRow {
                label: num(0)? as u32,
                parent: if field(1).is_empty() { None } else { Some(num(1)? as u32) },
                birth_time: Quantity::hours(num(2)?),
                end_time: Quantity::hours(num(3)?),
                lifetime: Quantity::hours(num(4)?),
                birth_area: Quantity::um2(num(5)?),
                end_area: Quantity::um2(num(6)?),
                fate,
                n_detections: num(8)? as usize,
                median_fluor: (0..channels.len())
                    .map(|c| num(9 + c).map(Quantity::au))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(TrackletTable { channels, rows })
    }
}

fn parse_channel_columns(header: &[String], skip: usize, prefix: &str, suffix: &str) -> Result<Vec<String>> {
    header
        .iter()
        .skip(skip)
        .map(|h| {
            h.strip_prefix(prefix)
                .and_then(|s| s.strip_suffix(suffix))
                .map(str::to_string)
                .ok_or_else(|| Error::InvalidInput(format!("unexpected column {h}")))
        })
        .collect()
}

/// Quick dimension audit used by tests and reports.
pub fn detection_row_dimensions_ok(r: &DetectionRow) -> bool {
    r.time.dimension() == Dimension::TIME
        && r.area.dimension() == Dimension::AREA
        && r.centroid_x.dimension() == Dimension::LENGTH
        && r.centroid_y.dimension() == Dimension::LENGTH
        && r.mean_fluor.iter().all(|f| f.dimension() == Dimension::INTENSITY)
}
