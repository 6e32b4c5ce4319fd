//! Writes plot-ready score maps for each scenario and method.
//!
//! Usage: `score_map [out_dir] [resolution]`

use std::path::PathBuf;

use dif::cli::{cmd_score_map, to_json, Algorithm, RunConfig, Scenario};
use dif::scoring::provenance_comment;

fn main() -> dif::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "score_maps".into()));
    let resolution = args.next().map_or(60, |r| r.parse().expect("resolution"));
    std::fs::create_dir_all(&dir)?;

    for name in ["ring", "single-blob", "two-blob", "sinusoid"] {
        let scenario = Scenario::by_name(name)?;
        for algo in Algorithm::ALL {
            let config = RunConfig::default().with_algorithm(algo);
            let (map, meta) = cmd_score_map(&config, &scenario, resolution)?;
            let path = dir.join(format!("{name}_{algo}.csv"));
            let mut buf = Vec::new();
            map.write_csv(&mut buf, &provenance_comment(&meta.config_hash, meta.seed))?;
            std::fs::write(&path, buf)?;
            std::fs::write(path.with_extension("json"), to_json(&meta))?;
            let (x, y, s) = map.argmin();
            println!("{:40} threshold={:.4} lowest score {s:.4} at ({x:.2}, {y:.2})", path.display().to_string(), meta.threshold);
        }
    }
    Ok(())
}
