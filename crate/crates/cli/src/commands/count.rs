use clap::Args;
use serde_json::json;

use spectformer_core::model::config::named_configs;
use spectformer_core::model::count::{count_flops, count_params};

use crate::runconfig::RunConfig;
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct CountArgs {
    /// Named config or JSON config path to count.
    #[arg(long, conflicts_with = "all")]
    pub model: Option<String>,
    /// Count every published configuration.
    #[arg(long)]
    pub all: bool,
    /// Output format: table or json.
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Override the input resolution the FLOP count assumes.
    #[arg(long)]
    pub resolution: Option<usize>,
}

struct Row {
    name: String,
    params: u64,
    flops: u64,
}

pub fn cmd_count(args: &CountArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    let selected: Vec<(String, spectformer_core::model::config::ModelConfig)> = if args.all {
        named_configs()
            .into_iter()
            .map(|(n, c)| (n.to_string(), c))
            .collect()
    } else {
        let name = args
            .model
            .as_deref()
            .ok_or_else(|| CliError::Config("pass --model <name> or --all".into()))?;
        let run = RunConfig::resolve(name, None, None)?;
        vec![(name.to_string(), run.model)]
    };

    for (name, mut cfg) in selected {
        if let Some(res) = args.resolution {
            cfg.resolution = res;
        }
        cfg.validate().map_err(CliError::from)?;
        let params = count_params(&cfg).map_err(CliError::from)?;
        let flops = count_flops(&cfg).map_err(CliError::from)?.total();
        rows.push(Row { name, params, flops });
    }

    match args.format.as_str() {
        "json" => {
            let entries: Vec<_> = rows
                .iter()
                .map(|r| json!({ "name": r.name, "params": r.params, "flops": r.flops }))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&entries).map_err(|e| CliError::Other(e.to_string()))?
            );
        }
        "table" => {
            // FLOPs count one multiply-accumulate as a single operation,
            // matching the convention of the published model tables.
            println!(
                "{:<20} {:>14} {:>9} {:>16} {:>9}",
                "model", "params", "params(M)", "flops(MACs)", "flops(G)"
            );
            for r in &rows {
                println!(
                    "{:<20} {:>14} {:>9.2} {:>16} {:>9.2}",
                    r.name,
                    r.params,
                    r.params as f64 / 1e6,
                    r.flops,
                    r.flops as f64 / 1e9
                );
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown format {other:?}: expected table or json"
            )))
        }
    }
    Ok(())
}
