//! Instantaneous growth rate of full-cycle cells around a growth switch.

use cellflow::analysis::{full_cycle_filter, tracklet_igrs};
use cellflow::features::extract_detection_features;
use cellflow::segmentation::{segment_threshold, Polarity};
use cellflow::synthdata::{simulate, RateSwitch, SimScenario};
use cellflow::tracking::{build_tracklets, track, TrackParams};
use cellflow::units::Quantity;

fn main() -> cellflow::Result<()> {
    let mut sc = SimScenario::basic(4, 0.6, 121);
    sc.frame_interval_min = 2.0;
    sc.pixel_size_um = 0.05;
    sc.n_initial_cells = 4;
    sc.a_div_noise = 0.1;
    sc.rate_schedule = vec![RateSwitch { t_switch_h: 1.5, multiplier: 0.5 }];
    let sim = simulate(&sc)?;
    let meta = sim.stack.metadata();

    let overlay = segment_threshold(&sim.stack, 0, 0.5, Polarity::Bright)?;
    let params = TrackParams {
        max_link_distance: Quantity::um((sim.truth.max_displacement_um() * 1.25).max(0.1)),
        ..TrackParams::default()
    };
    let lineage = build_tracklets(&track(&overlay, meta, &params)?, &overlay)?;
    let det = extract_detection_features(&overlay, &sim.stack, Some(&lineage))?;
    let full = full_cycle_filter(&lineage);
    let series = tracklet_igrs(&det, &full, meta.frame_interval, 4.0)?;

    println!("{} full-cycle cells", series.len());
    for s in series.iter().filter(|s| s.times_h[0] < 1.5 && *s.times_h.last().unwrap() > 1.5).take(5) {
        let (k, _) = s
            .igr
            .windows(2)
            .map(|w| w[1] - w[0])
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        println!(
            "cell {}: IGR {:.3} -> {:.3} um2/h, steepest drop near {:.2} h",
            s.label,
            s.igr[0],
            s.igr[s.igr.len() - 1],
            s.times_h[k] + meta.frame_interval.value_in(cellflow::units::Unit::Hour)?
        );
    }
    Ok(())
}
