//! fit, score and eval through the command layer, with files in a temp dir.

use dif::cli::{cmd_eval, cmd_fit, cmd_score, read_labels, RunConfig, ScoreFormat};
use dif::data::{gen_ring, save_csv, CsvOptions, RingParams};

fn main() -> dif::Result<()> {
    let dir = std::env::temp_dir().join(format!("dif-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (train, model) = (dir.join("ring.csv"), dir.join("ring.dif"));
    save_csv(&gen_ring(&RingParams::default(), 4)?, &train)?;

    let config = RunConfig::parse("seed = 4\nmode = deas\n")?;
    let csv = CsvOptions { label_column: Some("label".into()), ..Default::default() };
    let fitted = cmd_fit(&config, &train, &csv, &model)?;
    println!("{} trees, {} bytes", fitted.model.tree_count(), std::fs::metadata(&model)?.len());

    let scores = cmd_score(&model, &train, &csv, None, ScoreFormat::Csv)?;
    let labels = read_labels(&std::fs::read_to_string(&train)?, "label")?;
    let report = cmd_eval(&scores, &labels, None, config.seed)?;
    println!("{}", dif::cli::to_json(&report));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
