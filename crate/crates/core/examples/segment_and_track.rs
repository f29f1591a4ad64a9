//! Segment a simulated movie by thresholding, link detections and build
//! the lineage forest.

use cellflow::segmentation::{segment_threshold, Polarity};
use cellflow::synthdata::{simulate, SimScenario};
use cellflow::tracking::{build_tracklets, track, TrackParams};
use cellflow::units::Quantity;

fn main() -> cellflow::Result<()> {
    let mut sc = SimScenario::basic(3, 0.6, 24);
    sc.n_initial_cells = 3;
    sc.a_div_noise = 0.1;
    let sim = simulate(&sc)?;

    let overlay = segment_threshold(&sim.stack, 0, 0.5, Polarity::Bright)?;
    println!("{} detections, segmentation equals truth: {}", overlay.detections().count(), overlay == sim.truth.overlay);

    let params = TrackParams {
        max_link_distance: Quantity::um((sim.truth.max_displacement_um() * 1.25).max(1.0)),
        ..TrackParams::default()
    };
    let graph = track(&overlay, sim.stack.metadata(), &params)?;
    println!(
        "{} links, {} division edges, links equal truth: {}",
        graph.edges().len(),
        graph.division_edges().count(),
        graph.edges() == sim.truth.links.edges()
    );

    let lineage = build_tracklets(&graph, &overlay)?;
    println!("{} tracklets, {} roots", lineage.len(), lineage.roots().count());
    for t in lineage.roots() {
        println!("  root {} frames {}..={} fate {}", t.label, t.birth_frame, t.end_frame, t.fate.as_str());
    }
    Ok(())
}
