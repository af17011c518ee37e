//! Run every stage of the shipped replay fixture into a temporary directory
//! and print the report.
//!
//! `cargo run --example replay_pipeline`

use std::fs;
use std::path::Path;

use linkrot::pipeline::{Overrides, Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/replay_run");
    let out = std::env::temp_dir().join(format!("linkrot-replay-{}", std::process::id()));
    let overrides = Overrides {
        output_dir: Some(out.clone()),
        ..Default::default()
    };
    let cfg = PipelineConfig::load(&fixture.join("pipeline.toml"), &overrides)?;
    for run in Pipeline::new(cfg).run_all()? {
        println!("{run}");
    }
    println!("\n{}", fs::read_to_string(out.join("report.md"))?);
    fs::remove_dir_all(&out)?;
    Ok(())
}
