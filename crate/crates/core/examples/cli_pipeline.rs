//! Runs every `vrd` subcommand in order inside a scratch directory, the way
//! a shell script would drive the binary.
//!
//! Run with `cargo run --release --example cli_pipeline`.

use std::path::Path;

use clap::Parser;
use vrd::cli::{run, Cli};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("vrd_cli_example");
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), p("train"), "--n-images".into(), "300".into(), "--seed".into(), "5".into()],
        vec!["synth".into(), "--out".into(), p("test"), "--n-images".into(), "100".into(), "--seed".into(), "6".into()],
        vec!["build-freq".into(), "--data".into(), p("train"), "--out".into(), p("freq.json")],
        vec![
            "train-rel".into(), "--data".into(), p("train"), "--freq".into(), p("freq.json"),
            "--out".into(), p("rel.vrdm"), "--epochs".into(), "3".into(),
        ],
        vec!["train-attr".into(), "--data".into(), p("train"), "--out".into(), p("attr.vrdm"), "--epochs".into(), "3".into()],
        vec![
            "infer".into(), "--data".into(), p("test"), "--freq".into(), p("freq.json"), "--model".into(), p("rel.vrdm"),
            "--attr-model".into(), p("attr.vrdm"), "--out".into(), p("pred.jsonl"),
        ],
        vec![
            "eval".into(), "--data".into(), p("test"), "--predictions".into(), p("pred.jsonl"),
            "--out".into(), p("report.txt"), "--json".into(), p("report.json"),
        ],
    ];
    for args in steps {
        println!("$ vrd {}", args.join(" "));
        let cli = Cli::try_parse_from(std::iter::once("vrd".to_string()).chain(args))?;
        let out = run(&cli)?;
        if !out.is_empty() {
            println!("{}", out.trim_end());
        }
    }
    let manifest = Path::new(&p("rel.vrdm.manifest.json")).to_path_buf();
    println!("\nmanifest {}:\n{}", manifest.display(), std::fs::read_to_string(&manifest)?);
    Ok(())
}
