//! Atomic output files and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use biharm_core::forward::QuadratureSettings;
use biharm_core::transport::TransportSettings;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::error::CliError;

/// Output directory that writes every file through a temporary sibling and
/// a rename, so readers never see a partial file.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let path = self.root.join(name);
        let io = |source| CliError::Output {
            path: path.clone(),
            source,
        };
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(io)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush().map_err(io)?;
        }
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report types serialize");
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        self.write_with(name, |w| {
            w.write_all(text.as_bytes())
                .map_err(|source| CliError::Output { path, source })
        })
    }

    /// Writes rows of numbers with a header, 17 significant digits each.
    pub fn write_table(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<f64>],
    ) -> Result<(), CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }
}

#[derive(Serialize)]
struct Settings {
    amplitude_quadrature: QuadratureSettings,
    oracle_corrections: QuadratureSettings,
    transport: TransportSettings,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    threads: Option<usize>,
    verdict: Option<&'a str>,
    settings: Settings,
    outputs: &'a [String],
    config: &'a RunConfig,
}

/// Writes `config.toml` (the resolved configuration, rerunnable as is) and
/// `manifest.json`.
pub fn write_manifest(
    out: &mut OutDir,
    command: &str,
    config: &RunConfig,
    threads: Option<usize>,
    verdict: Option<bool>,
) -> Result<(), CliError> {
    let toml_text = toml::to_string(config).expect("config serializes");
    out.write_text("config.toml", &toml_text)?;
    let outputs = out.files().to_vec();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads,
        verdict: verdict.map(|v| if v { "pass" } else { "fail" }),
        settings: Settings {
            amplitude_quadrature: QuadratureSettings::accurate(),
            oracle_corrections: QuadratureSettings::corrections(),
            transport: TransportSettings::default(),
        },
        outputs: &outputs,
        config,
    };
    out.write_json("manifest.json", &manifest)
}
