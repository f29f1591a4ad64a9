//! Split a two-strain co-culture by fluorescence and fit each strain.

use cellflow::analysis::{classify_strains, per_strain_growth};
use cellflow::features::{extract_detection_features, extract_tracklet_features};
use cellflow::segmentation::{segment_threshold, Polarity};
use cellflow::synthdata::{simulate, SimScenario, StrainSpec};
use cellflow::tracking::{build_tracklets, track, TrackParams};
use cellflow::units::Quantity;

fn main() -> cellflow::Result<()> {
    let mut sc = SimScenario::basic(21, 0.46, 36);
    sc.n_initial_cells = 4;
    sc.fluor_channels = vec!["gfp".into(), "rfp".into()];
    sc.strains = vec![
        StrainSpec { mu_star_per_h: 0.46, fluor_means_au: vec![60.0, 10.0], fluor_std_au: 10.0 },
        StrainSpec { mu_star_per_h: 0.49, fluor_means_au: vec![10.0, 60.0], fluor_std_au: 10.0 },
    ];
    let sim = simulate(&sc)?;

    let overlay = segment_threshold(&sim.stack, 0, 0.5, Polarity::Bright)?;
    let params = TrackParams {
        max_link_distance: Quantity::um((sim.truth.max_displacement_um() * 1.25).max(1.0)),
        ..TrackParams::default()
    };
    let lineage = build_tracklets(&track(&overlay, sim.stack.metadata(), &params)?, &overlay)?;
    let det = extract_detection_features(&overlay, &sim.stack, Some(&lineage))?;
    let tt = extract_tracklet_features(&lineage, &det)?;

    let assign = classify_strains(&tt, ["gfp", "rfp"], Quantity::au(0.0))?;
    for s in 0..2 {
        let mut by_truth = [0usize; 2];
        for label in assign.members(s) {
            if let Some(t) = sim.truth.strain_of_label(label) {
                by_truth[t] += 1;
            }
        }
        println!("cluster {s}: center {:?} au, tracklets by true strain {by_truth:?}", assign.centers[s]);
    }
    for (s, fit) in per_strain_growth(&det, &assign).into_iter().enumerate() {
        match fit {
            Ok(f) => println!("cluster {s}: mu = {:.4} 1/h", f.mu_per_h()),
            Err(e) => println!("cluster {s}: no fit ({e})"),
        }
    }
    Ok(())
}
