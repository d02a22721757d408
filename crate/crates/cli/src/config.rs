use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(clap::Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct Common {
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest path (default: <out>.manifest.json; none when writing to stdout).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Worker threads; LAPKIT_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn drop_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, x)| !x.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Values from the TOML file at `path`, overridden by every flag given on
/// the command line. Keys are the long flag names.
pub fn merge<T: Serialize + DeserializeOwned + Default>(cli: &T, path: Option<&Path>) -> Result<T, String> {
    let mut merged = Map::new();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", p.display()))?;
        let known: Vec<String> = match serde_json::to_value(T::default()).map_err(|e| e.to_string())? {
            Value::Object(m) => m.keys().cloned().collect(),
            _ => Vec::new(),
        };
        for (k, v) in table {
            if !known.contains(&k) {
                return Err(format!("unknown config key `{k}` in {}", p.display()));
            }
            merged.insert(k, serde_json::to_value(v).map_err(|e| e.to_string())?);
        }
    }
    merged.extend(drop_nulls(serde_json::to_value(cli).map_err(|e| e.to_string())?));
    serde_json::from_value(Value::Object(merged)).map_err(|e| format!("invalid configuration: {e}"))
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Value,
    pub threads: usize,
    pub wall_time_s: f64,
    pub output: Option<PathBuf>,
    pub exit_code: i32,
}

pub fn default_manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::LapArgs;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "model = \"laplacian3d\"\nalpha = 1.2\nbox = 6\nenergy-grid = [1.0, 2.0]\n").unwrap();
        let cli = LapArgs { alpha: Some(2.0), ..Default::default() };
        let m = merge(&cli, Some(&p)).unwrap();
        assert_eq!((m.alpha, m.box_radius, m.model.as_deref()), (Some(2.0), Some(6), Some("laplacian3d")));
        assert_eq!(m.energy_grid, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(default_manifest_path(Path::new("out/a.csv")), PathBuf::from("out/a.csv.manifest.json"));
    }
}
