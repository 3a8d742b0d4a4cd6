//! A small benchmark plan on the built-in synthetic data, with mean ± sd
//! tables over seeds.

use groupenc::benchmark::{run_benchmark, BenchmarkPlan};

fn main() -> groupenc::Result<()> {
    let out = std::env::temp_dir().join("groupenc_benchmark_example");
    let plan = BenchmarkPlan::parse(
        "datasets = synthetic\n\
         synthetic_points = 1500\n\
         dims = 2, 5\n\
         models = vae, groupenc\n\
         gammas = 4\n\
         seeds = 0, 1\n\
         epochs = 30\n\
         save_embeddings = false\n\
         output = run\n",
        &out,
    )?;
    let report = run_benchmark(&plan, 2)?;
    let names = vec!["synthetic".to_string()];
    println!("global SP\n{}", report.summary_csv(true, &names));
    println!("local SP\n{}", report.summary_csv(false, &names));
    println!("tables written to {}", plan.output.display());
    Ok(())
}
