//! Run a batch of simulated replicates in parallel and aggregate their
//! growth rates.

use cellflow::batch::{run_batch, AnalyzeConfig, BatchConfig};
use cellflow::synthdata::{simulate, SimScenario};

fn main() -> cellflow::Result<()> {
    let root = std::env::temp_dir().join("cellflow_batch_scaling");
    let mut replicates = Vec::new();
    let mut workflow = None;
    for k in 0..6u64 {
        let mut sc = SimScenario::basic(40 + k, 0.5 + 0.01 * k as f64, 32);
        sc.n_initial_cells = 2;
        sc.a_div_noise = 0.1;
        sc.origin_id = format!("rep{k}");
        let sim = simulate(&sc)?;
        let dir = root.join(&sc.origin_id);
        sim.write(&dir)?;
        let mut cfg = AnalyzeConfig::for_simulation(&sim);
        cfg.replicate.resolve_paths(&dir);
        replicates.push(cfg.replicate);
        workflow.get_or_insert(cfg.workflow);
    }
    let mut workflow = workflow.expect("at least one replicate");
    workflow.tracking.max_link_distance_um = 20.0;

    for jobs in [1, 4] {
        let cfg = BatchConfig {
            replicates: replicates.clone(),
            workflow: workflow.clone(),
            output: root.join(format!("out_jobs{jobs}")),
            jobs,
        };
        let start = std::time::Instant::now();
        let agg = run_batch(&cfg)?;
        println!("jobs {jobs}: {} replicates ok in {:.2} s", agg.n_succeeded(), start.elapsed().as_secs_f64());
        for (measure, m) in &agg.measures {
            println!("  {measure}: mean {:.4} std {:.4} over {}", m.mean, m.std, m.n());
        }
    }
    Ok(())
}
