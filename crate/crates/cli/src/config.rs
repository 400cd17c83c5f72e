//! Command options: each section is both a set of CLI flags and a TOML table.
//! Flags win over the config file, which wins over built-in defaults.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

/// Settings shared by every command.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    /// Master seed for every random stream [default: 0]
    #[arg(long = "seed", global = true)]
    pub master_seed: Option<u64>,
    /// Worker threads [default: number of cores]
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Output directory [default: $IPAD_OUTPUT_DIR, else ./ipad-out]
    #[arg(long = "out", global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// 1, 2, 3, 4 or real_x
    #[arg(long)]
    pub design: Option<String>,
    /// Rows [default: 500]
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns [default: 500]
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of true signals [default: 25]
    #[arg(long)]
    pub s: Option<usize>,
    /// Signal amplitude [default: 4]
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub amplitude: Option<f64>,
    /// Noise variance of the response [default: 0.2]
    #[arg(long)]
    pub c: Option<f64>,
    /// Number of factors; design 3 requires 0 [default: 3, or 0 for design 3]
    #[arg(long)]
    pub r: Option<usize>,
    /// Factor signal strength [default: 1]
    #[arg(long)]
    pub theta: Option<f64>,
    /// Column correlation for design 3 [default: 0]
    #[arg(long)]
    pub rho: Option<f64>,
    /// Degrees of freedom of the design-2 chi-square [default: 8]
    #[arg(long)]
    pub nu: Option<u32>,
    /// Target FDR level [default: 0.2]
    #[arg(long)]
    pub q: Option<f64>,
    /// Replications [default: 100]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Largest factor count tried by PC_p1 [default: 8]
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Use knockoffs built from the true factor model
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub oracle: Option<bool>,
    /// Trees per forest for design 4 [default: 500]
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Design matrix CSV for design real_x
    #[arg(long)]
    pub x: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    /// Predictor CSV, one column per variable
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Response CSV with a single numeric column
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Whether the CSV files start with a header row [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
    /// Target FDR level [default: 0.2]
    #[arg(long)]
    pub q: Option<f64>,
    /// Use the knockoff+ threshold [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plus: Option<bool>,
    /// lcd or mda_diff [default: lcd]
    #[arg(long)]
    pub statistic: Option<String>,
    /// Independent knockoff draws [default: 1]
    #[arg(long)]
    pub draws: Option<usize>,
    /// Largest factor count tried by PC_p1 [default: 8]
    #[arg(long)]
    pub r_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastArgs {
    /// Panel CSV: header row, optional date column, one column per series
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Target series name, or its 0-based file column index [default: first series]
    #[arg(long)]
    pub target: Option<String>,
    /// Rolling window length [default: 120]
    #[arg(long)]
    pub window: Option<usize>,
    /// Comma-separated subset of ar,far,lasso,ipad [default: all four]
    #[arg(long)]
    pub methods: Option<String>,
    /// Knockoff draws averaged by the IPAD forecast [default: 100]
    #[arg(long)]
    pub draws: Option<usize>,
    /// Target FDR level for IPAD selection [default: 0.2]
    #[arg(long)]
    pub q: Option<f64>,
    /// Use the knockoff+ threshold [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plus: Option<bool>,
    /// Largest factor count tried by PC_p1 [default: 8]
    #[arg(long)]
    pub r_max: Option<usize>,
}

/// Layout of a config file: shared keys at the top, one table per command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub master_seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub simulate: Option<SimulateArgs>,
    pub select: Option<SelectArgs>,
    pub forecast: Option<ForecastArgs>,
}

impl FileConfig {
    pub fn common(&self) -> Common {
        Common {
            master_seed: self.master_seed,
            parallelism: self.parallelism,
            output_dir: self.output_dir.clone(),
        }
    }
}

/// Field-by-field `flag.or(file)`.
macro_rules! overlay {
    ($ty:ident { $($f:ident),* $(,)? }) => {
        impl $ty {
            pub fn overlay(self, file: Option<$ty>) -> $ty {
                let file = file.unwrap_or_default();
                $ty { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

overlay!(Common { master_seed, parallelism, output_dir });
overlay!(SimulateArgs {
    design, n, p, s, amplitude, c, r, theta, rho, nu, q, reps, r_max, oracle, n_trees, x
});
overlay!(SelectArgs { x, y, header, q, plus, statistic, draws, r_max });
overlay!(ForecastArgs { panel, target, window, methods, draws, q, plus, r_max });
