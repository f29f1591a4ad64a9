//! Render lineage, growth and rate-distribution figures as SVG.

use cellflow::analysis::{fit_loglinear, population_series, Measure};
use cellflow::features::extract_detection_features;
use cellflow::report::{render_growth, render_lineage, render_rate_distribution};
use cellflow::synthdata::{simulate, SimScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = SimScenario::basic(9, 0.6, 20);
    sc.n_initial_cells = 2;
    sc.a_div_noise = 0.1;
    let sim = simulate(&sc)?;
    let meta = sim.stack.metadata();
    let dir = std::env::temp_dir().join("cellflow_lineage_plot");
    std::fs::create_dir_all(&dir)?;

    let lineage = render_lineage(&sim.truth.lineage, meta.frame_interval, None)?;

    let det = extract_detection_features(&sim.truth.overlay, &sim.stack, Some(&sim.truth.lineage))?;
    let tsca = population_series(&det)?.tsca;
    let growth = render_growth(&tsca, &fit_loglinear(&tsca, Measure::TSCA)?)?;

    let rates: Vec<(String, f64)> = [0.58, 0.61, 0.6, 0.63].iter().enumerate().map(|(i, &m)| (format!("rep{i}"), m)).collect();
    let spread = render_rate_distribution("TSCA", &rates)?;

    for (name, svg) in [("lineage.svg", lineage), ("growth.svg", growth), ("rates.svg", spread)] {
        let path = dir.join(name);
        std::fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
