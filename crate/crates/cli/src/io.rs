use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use lcqp::LcqpInstance;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut text = String::new();
    if is_gz(path) {
        GzDecoder::new(BufReader::new(file)).read_to_string(&mut text)
    } else {
        BufReader::new(file).read_to_string(&mut text)
    }
    .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pretty JSON with a trailing newline; gzip when the name ends in `.gz`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    if is_gz(path) {
        // Fixed header fields so equal content gives equal bytes.
        let mut enc = flate2::GzBuilder::new().mtime(0).write(BufWriter::new(file), Compression::default());
        enc.write_all(text.as_bytes())?;
        finish(enc)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(text.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn finish(enc: GzEncoder<BufWriter<File>>) -> Result<()> {
    enc.finish()?.flush()?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<LcqpInstance> {
    read_json(path)
}

/// Instance files (`*.json`, `*.json.gz`) of a directory in name order,
/// skipping the manifest.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("manifest") {
            continue;
        }
        if name.ends_with(".json") || name.ends_with(".json.gz") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        anyhow::bail!("no instance files in {}", dir.display());
    }
    Ok(files)
}

pub fn read_dir_instances(dir: &Path) -> Result<Vec<LcqpInstance>> {
    instance_files(dir)?.iter().map(|p| read_instance(p)).collect()
}

/// `out.json` → `out.manifest.json`; a directory gets `manifest.json` inside.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("manifest.json");
    }
    let name = output.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    let stem = name.strip_suffix(".gz").unwrap_or(name);
    let stem = stem.strip_suffix(".json").unwrap_or(stem);
    output.with_file_name(format!("{stem}.manifest.json"))
}
