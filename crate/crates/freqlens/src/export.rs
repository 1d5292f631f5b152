//! Artifact writers: plot-ready CSV tables, 8-bit PGM heatmaps with
//! sidecar scaling metadata, and the per-run manifest that makes every
//! output reproducible.

use crate::attribution::AttributionProfile;
use crate::error::{Error, Result};
use crate::metrics::RctMap;
use crate::spectral::Spectrum2D;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// One row per coefficient: `channel,u,v,level,value`.
pub fn write_rct_csv(path: &Path, map: &RctMap) -> Result<()> {
    let (channels, height, width) = map.dims();
    write_grid_csv(path, channels, height, width, |c, u, v| map.get(c, u, v))
}

/// One row per coefficient: `channel,u,v,level,value`.
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum2D) -> Result<()> {
    let (channels, height, width) = spectrum.dims();
    write_grid_csv(path, channels, height, width, |c, u, v| {
        spectrum.get(c, u, v)
    })
}

fn write_grid_csv(
    path: &Path,
    channels: usize,
    height: usize,
    width: usize,
    value: impl Fn(usize, usize, usize) -> f64,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["channel", "u", "v", "level", "value"])?;
    for c in 0..channels {
        for u in 0..height {
            for v in 0..width {
                writer.write_record([
                    c.to_string(),
                    u.to_string(),
                    v.to_string(),
                    (u + v).to_string(),
                    value(c, u, v).to_string(),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// One row per frequency level: `level,score`.
pub fn write_profile_csv(path: &Path, profile: &AttributionProfile) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["level", "score"])?;
    for (level, score) in profile.scores().iter().enumerate() {
        writer.write_record([level.to_string(), score.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// Grouped long-format table for per-class bar figures:
/// `class,class_name,level,score`, one row per (class, level).
pub fn write_class_profiles_csv(
    path: &Path,
    profiles: &[AttributionProfile],
    class_names: &[String],
) -> Result<()> {
    if profiles.len() != class_names.len() {
        return Err(Error::InvalidArgument(format!(
            "{} profiles but {} class names",
            profiles.len(),
            class_names.len()
        )));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["class", "class_name", "level", "score"])?;
    for (profile, name) in profiles.iter().zip(class_names) {
        for (level, score) in profile.scores().iter().enumerate() {
            writer.write_record([
                profile.class().to_string(),
                name.clone(),
                level.to_string(),
                score.to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Linear min–max scaling bounds used for a PGM heatmap, written to
/// the sidecar JSON so raw values are recoverable.
#[derive(Debug, Clone, Serialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
    pub height: usize,
    pub width: usize,
    /// Multi-channel maps are pooled to one plane by the channel mean.
    pub channels_pooled: usize,
}

/// Write an RCT-style map as a binary 8-bit PGM (P5), channels pooled
/// by mean, values min–max scaled to 0..=255 (a constant map becomes
/// all zeros). The scaling bounds land in a sidecar `<path>.json`.
/// Returns the sidecar path.
pub fn write_rct_pgm(path: &Path, map: &RctMap) -> Result<PathBuf> {
    let (channels, height, width) = map.dims();
    let mut pooled = vec![0.0; height * width];
    for u in 0..height {
        for v in 0..width {
            let mut sum = 0.0;
            for c in 0..channels {
                sum += map.get(c, u, v);
            }
            pooled[u * width + v] = sum / channels as f64;
        }
    }

    let min = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut file = BufWriter::new(File::create(path)?);
    write!(file, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = pooled
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - min) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    file.write_all(&bytes)?;
    file.flush()?;

    let scale = PgmScale {
        min,
        max,
        height,
        width,
        channels_pooled: channels,
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    let sidecar = PathBuf::from(sidecar);
    write_json(&sidecar, &scale)?;
    Ok(sidecar)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

/// SHA-256 of a byte slice, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// A named input file and its content hash, recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(InputHash {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Everything needed to reproduce a run bit-identically on one
/// platform: tool version, full command configuration, seed, thread
/// count, input hashes, and the artifacts written.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputHash::of(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write the manifest itself (conventionally `manifest.json`).
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
