use firecube_core::pipeline::{run_pipeline, PipelineConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(42, |s| s.parse().unwrap());
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.world.seed = seed;
    let out = run_pipeline(&cfg, dir.path()).unwrap();
    for (lead, o) in &out.leads {
        println!(
            "lead {lead}: model {:.4} clim {:.4} auroc {:.4}/{:.4} prev {:.4} n {} best {}",
            o.model.metrics.auprc,
            o.climatology.metrics.auprc,
            o.model.metrics.auroc,
            o.climatology.metrics.auroc,
            o.model.metrics.prevalence,
            o.model.metrics.n_pixels,
            o.best_epoch
        );
    }
    println!("elapsed {:?}", out.elapsed);
}
