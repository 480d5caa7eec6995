// Runs a command from a config with overrides, then re-runs it from the
// manifest it wrote and compares checksums.

use ks_particles::runner::{self, effective_config, verify_run, Command, RunManifest};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("ks_reproducible_run");
    let _ = std::fs::remove_dir_all(&root);
    let file = "n_steps = 20\n[initial]\nkind = \"gaussian\"\nmean = 0.0\nstd = 0.8\n";
    let table = effective_config(Command::Pde, Some(file), &["snapshot_every=5".to_string()])?;
    let dir = root.join("pde");
    let outcome = runner::run(Command::Pde, &table, &dir, Some(1))?;
    print!("{}", outcome.summary);

    let manifest = RunManifest::read(&dir)?;
    for o in &manifest.outputs {
        println!("{} {} bytes {}", &o.sha256[..12], o.bytes, o.path);
    }
    let report = verify_run(&dir, &root.join("again"), Some(1))?;
    println!("re-run identical: {}", report.all_match());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
