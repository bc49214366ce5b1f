//! `spectrum`: power spectrum of one CSV column.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use sharpness_core::signal::{power_spectrum, power_spectrum_standardized, write_spectrum_csv};

use crate::config::{self, overlay, overlay_opt, Common};
use crate::Outcome;

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    /// Headed CSV to read; `#` lines are skipped
    #[arg(long)]
    pub input: Option<String>,
    /// Column name, or a 0-based index
    #[arg(long)]
    pub column: Option<String>,
    /// Keep only the last N values
    #[arg(long)]
    pub last: Option<usize>,
    /// Standardize to zero mean and unit variance first
    #[arg(long)]
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub seed: u64,
    pub input: Option<String>,
    pub column: String,
    pub last: Option<usize>,
    pub standardize: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            seed: 0,
            input: None,
            column: "sharpness".into(),
            last: None,
            standardize: true,
        }
    }
}

/// Non-empty values of `column`, in file order.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let idx = match headers.iter().position(|h| h.trim() == column) {
        Some(i) => i,
        None => column
            .parse::<usize>()
            .ok()
            .filter(|i| *i < headers.len())
            .ok_or_else(|| anyhow!("invalid value for `column`: `{column}` is not in {}", path.display()))?,
    };
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|e| anyhow!("{} row {}: `{field}`: {e}", path.display(), row + 2))?;
        values.push(v);
    }
    Ok(values)
}

pub fn spectrum_cmd(common: &Common, args: &SpectrumArgs) -> Result<Outcome> {
    let mut cfg: SpectrumConfig = config::load(common.config.as_deref())?;
    overlay!(cfg, args; column, standardize);
    overlay_opt!(cfg, args; input, last);
    overlay!(cfg, common; seed);

    let input = cfg.input.clone().ok_or_else(|| anyhow!("`--input` is required"))?;
    let mut values = read_column(Path::new(&input), &cfg.column)?;
    if let Some(n) = cfg.last {
        values.drain(..values.len().saturating_sub(n));
    }
    if values.len() < 2 {
        bail!("column `{}` has {} values; need at least 2", cfg.column, values.len());
    }
    let power = if cfg.standardize {
        power_spectrum_standardized(&values)?
    } else {
        power_spectrum(&values)
    };
    let mut out = config::open_out(common.out.as_deref())?;
    write_spectrum_csv(&power, &mut out)?;
    out.flush()?;
    config::write_sidecar(common.out.as_deref(), &cfg)?;
    Ok(Outcome::default())
}
