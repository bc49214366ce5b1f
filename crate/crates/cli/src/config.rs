//! Config files, flag overlays, output files and sidecars.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Base seed; every random draw derives from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted, where allowed)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config; flags given on the command line take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sweeps
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with status 2 when a trajectory or training run diverges
    #[arg(long, global = true)]
    pub strict: bool,
}

/// Copies every flag that was given onto the config.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v; } )+
    };
}

/// Same, for config fields that are themselves optional.
macro_rules! overlay_opt {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = Some(v); } )+
    };
}

pub(crate) use {overlay, overlay_opt};

/// Reads a JSON config, or the defaults when no file is given. Errors name the
/// offending key.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow!("config {}: key `{}`: {}", path.display(), e.path(), e.inner()))
}

/// `x.csv` + `nullclines.csv` → `x.nullclines.csv`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// The main output: the `--out` file, or stdout.
pub fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn require_out<'a>(common: &'a Common, what: &str) -> Result<&'a Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| anyhow!("`--out` is required: {what} writes more than one file"))
}

/// Echoes the resolved config next to the output. Nothing is written for
/// stdout runs.
pub fn write_sidecar<T: Serialize>(out: Option<&Path>, cfg: &T) -> Result<()> {
    if let Some(out) = out {
        let path = sidecar_path(out);
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, cfg)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
