//! Simulate a noisy single-strain colony and write it to disk.

use cellflow::synthdata::{simulate, SimScenario};

fn main() -> cellflow::Result<()> {
    let mut sc = SimScenario::basic(7, 0.6, 32);
    sc.n_initial_cells = 2;
    sc.a_div_noise = 0.1;
    sc.mu_cell_cv = 0.05;
    let sim = simulate(&sc)?;
    let (t, h, w, c) = sim.stack.shape();
    println!("stack {t} frames, {h}x{w} px, {c} channel(s)");
    println!("{} cells, {} in the last frame", sim.truth.cells.len(), sim.truth.cc()[t - 1]);

    let dir = std::env::temp_dir().join("cellflow_simulate_colony");
    sim.write(&dir)?;
    println!("written to {}", dir.display());
    Ok(())
}
