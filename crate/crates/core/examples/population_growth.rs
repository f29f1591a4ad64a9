//! Population growth rates from cell count, convex-hull area and summed
//! cell area.

use cellflow::analysis::{fit_loglinear, population_series, tca_series, Measure};
use cellflow::features::extract_detection_features;
use cellflow::segmentation::{segment_threshold, Polarity};
use cellflow::synthdata::{simulate, SimScenario};

fn main() -> cellflow::Result<()> {
    let sim = simulate(&SimScenario::basic(1, 0.55, 40))?;
    let overlay = segment_threshold(&sim.stack, 0, 0.5, Polarity::Bright)?;
    let det = extract_detection_features(&overlay, &sim.stack, None)?;
    let pop = population_series(&det)?;
    let tca = tca_series(&overlay, sim.stack.metadata())?;

    for (measure, series) in [(Measure::CC, &pop.cc), (Measure::TCA, &tca), (Measure::TSCA, &pop.tsca)] {
        let fit = fit_loglinear(series, measure)?;
        println!("{measure}: mu = {:.4} 1/h, R2 = {:.5}, n = {}", fit.mu_per_h(), fit.r_squared, fit.n_points);
    }
    println!("programmed mu = 0.55 1/h");
    Ok(())
}
