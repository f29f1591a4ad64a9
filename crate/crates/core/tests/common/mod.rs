#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cellflow::analysis::{fit_loglinear, IgrSeries, Measure};
use cellflow::report::{render_growth, render_igr, render_lineage, Phase};
use cellflow::segmentation::{segment_threshold, Polarity};
use cellflow::synthdata::{simulate, SimScenario};
use cellflow::tracking::{build_tracklets, track, Fate, TrackParams, Tracklet, TrackletGraph};
use cellflow::units::{Dimension, Quantity, QuantitySeries};

/// Canonical string of a lineage forest that ignores labels: each tracklet
/// becomes (birth, end, fate, sorted children), roots sorted.
pub fn canonical_forest(g: &TrackletGraph) -> Vec<String> {
    fn encode(g: &TrackletGraph, label: u32) -> String {
        let t = g.get(label).unwrap();
        let mut kids: Vec<String> = g.children(label).iter().map(|&c| encode(g, c)).collect();
        kids.sort();
        format!("({},{},{},[{}])", t.birth_frame, t.end_frame, t.fate.as_str(), kids.join(","))
    }
    let mut roots: Vec<String> = g.roots().map(|t| encode(g, t.label)).collect();
    roots.sort();
    roots
}

fn truth_scenario(seed: u64, founders: usize, noise: f64, frames: usize) -> SimScenario {
    let mut sc = SimScenario::basic(seed, 0.6, frames);
    sc.n_initial_cells = founders;
    sc.a_div_noise = noise;
    sc.mu_cell_cv = noise / 2.0;
    sc
}

/// Summary of one tracking-versus-truth comparison.
pub struct TruthCheck {
    pub cells: usize,
    pub links: usize,
    pub divisions: usize,
}

/// Simulate a colony of at most 128 cells, segment and track it, and
/// compare links, divisions and lineage shape with the ground truth.
pub fn check_tracking_against_truth(seed: u64) -> Result<TruthCheck, String> {
    let founders = 1 + (seed as usize % 4);
    let noise = if seed % 3 == 0 { 0.0 } else { 0.12 };
    // Longest movie that keeps the colony at or below 128 cells.
    let doublings = (128.0 / founders as f64).log2();
    let mut frames = (doublings * 2f64.ln() / 0.6 / 0.25) as usize + 2;
    let sim = loop {
        let sim = simulate(&truth_scenario(seed, founders, noise, frames)).map_err(|e| e.to_string())?;
        if sim.truth.cc().into_iter().max().unwrap() <= 128 {
            break sim;
        }
        frames -= 2;
    };

    let overlay = segment_threshold(&sim.stack, 0, 0.5, Polarity::Bright).map_err(|e| e.to_string())?;
    if overlay != sim.truth.overlay {
        return Err(format!("seed {seed}: segmentation differs from truth"));
    }
    let gate = (sim.truth.max_displacement_um() * 1.25).max(1.0);
    let params = TrackParams {
        max_link_distance: Quantity::um(gate),
        ..TrackParams::default()
    };
    let graph = track(&overlay, sim.stack.metadata(), &params).map_err(|e| e.to_string())?;
    if graph.edges() != sim.truth.links.edges() {
        let extra = graph.edges().difference(sim.truth.links.edges()).count();
        let missing = sim.truth.links.edges().difference(graph.edges()).count();
        return Err(format!("seed {seed}: {extra} extra and {missing} missing links (gate {gate:.2} um)"));
    }
    let divisions: BTreeSet<_> = graph.division_edges().collect();
    let truth_divisions: BTreeSet<_> = sim.truth.links.division_edges().collect();
    if divisions != truth_divisions {
        return Err(format!("seed {seed}: division edges differ"));
    }
    let lineage = build_tracklets(&graph, &overlay).map_err(|e| e.to_string())?;
    if canonical_forest(&lineage) != canonical_forest(&sim.truth.lineage) {
        return Err(format!("seed {seed}: lineage is not isomorphic to truth"));
    }
    Ok(TruthCheck {
        cells: sim.truth.cells.len(),
        links: graph.edges().len(),
        divisions: divisions.len(),
    })
}

/// Minimum over every partial matching, by enumeration.
pub fn brute_force_lap(cost: &[Vec<f64>], no_assign: f64) -> f64 {
    let cols = cost.first().map_or(0, Vec::len);
    fn go(cost: &[Vec<f64>], no_assign: f64, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            let free = used.iter().filter(|u| !**u).count() as f64;
            *best = best.min(acc + free * no_assign);
            return;
        }
        go(cost, no_assign, row + 1, used, acc + no_assign, best);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                go(cost, no_assign, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, no_assign, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn tracklet(label: u32, parent: Option<u32>, birth: usize, end: usize, fate: Fate) -> Tracklet {
    Tracklet {
        label,
        parent,
        detections: (birth..=end).map(|f| u64::from(label) * 100 + f as u64).collect(),
        birth_frame: birth,
        end_frame: end,
        fate,
    }
}

/// Fixed inputs for the golden figures, rendered.
pub fn golden_svgs() -> Vec<(&'static str, String)> {
    let times: Vec<f64> = (0..12).map(|k| k as f64 * 0.25).collect();
    let wobble = [1.0, 1.02, 0.99, 1.01, 0.98, 1.0, 1.03, 0.97, 1.0, 1.01, 0.99, 1.0];
    let values: Vec<f64> = times
        .iter()
        .zip(wobble)
        .map(|(t, w)| 1.5 * (0.55 * t).exp() * w)
        .collect();
    let series = QuantitySeries::from_canonical("TSCA", times, values, Dimension::AREA).unwrap();
    let fit = fit_loglinear(&series, Measure::TSCA).unwrap();
    let growth = render_growth(&series, &fit).unwrap();

    let lineage = TrackletGraph::new(vec![
        tracklet(1, None, 0, 3, Fate::Divided),
        tracklet(2, Some(1), 4, 8, Fate::Divided),
        tracklet(3, Some(1), 4, 9, Fate::MovieEnd),
        tracklet(4, Some(2), 9, 11, Fate::MovieEnd),
        tracklet(5, Some(2), 9, 10, Fate::Lost),
        tracklet(6, None, 2, 11, Fate::MovieEnd),
    ])
    .unwrap();
    let colors: BTreeMap<u32, f64> = (1..=6).map(|l| (l, 0.4 + 0.05 * l as f64)).collect();
    let lineage_svg = render_lineage(&lineage, Quantity::minutes(15.0), Some(&colors)).unwrap();

    let igr: Vec<IgrSeries> = (0..3)
        .map(|k| {
            let times_h: Vec<f64> = (0..10).map(|i| 0.5 + k as f64 * 0.25 + i as f64 * 0.25).collect();
            let igr = times_h
                .iter()
                .map(|&t| if t < 1.5 { 0.9 + 0.1 * k as f64 } else { 0.45 + 0.05 * k as f64 } + 0.02 * t)
                .collect();
            IgrSeries {
                label: k + 1,
                times_h,
                igr,
                sigma_frames: 0.0,
            }
        })
        .collect();
    let phases = [
        Phase {
            name: "aerobic".into(),
            start_h: 0.0,
            end_h: 1.5,
        },
        Phase {
            name: "anaerobic".into(),
            start_h: 1.5,
            end_h: 3.5,
        },
    ];
    let igr_svg = render_igr(&igr, &phases).unwrap();
    vec![("growth.svg", growth), ("lineage.svg", lineage_svg), ("igr.svg", igr_svg)]
}
