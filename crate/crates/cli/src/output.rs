//! Atomic file writers for CSV, JSON and binary PGM artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use ifslab_core::SampleCloud;
use serde::Serialize;

use crate::{io_error, CliError, Result};

pub const HEATMAP_SIZE: usize = 512;

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never observes a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
    }
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_error(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_cloud(path: &Path, cloud: &SampleCloud) -> Result<()> {
    let mut buf = Vec::new();
    cloud.write_csv(&mut buf)?;
    write_atomic(path, &buf)
}

/// Fixed-range histogram: `bins` equal cells over `[lo, hi)`, points outside
/// are dropped.
pub fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    for v in values {
        if v >= lo && v < hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    counts
}

pub fn histogram_csv(counts: &[u64], lo: f64, hi: f64) -> String {
    let width = (hi - lo) / counts.len() as f64;
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for (k, c) in counts.iter().enumerate() {
        let a = lo + k as f64 * width;
        s.push_str(&format!("{},{},{c}\n", fmt_f64(a), fmt_f64(a + width)));
    }
    s
}

/// Binary P5 greymap.
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Log-density occupancy image of a 2-D cloud over its bounding box:
/// pixel = round(255 ln(1 + c) / ln(1 + c_max)). Row 0 is the largest `w1`.
pub fn density_heatmap(cloud: &SampleCloud, size: usize) -> Result<Vec<u8>> {
    if cloud.dim() != 2 {
        return Err(CliError::Config(format!("heatmaps need 2-D clouds, got {}", cloud.dim())));
    }
    let (lo, hi) = cloud.bounds();
    let span = |a: usize| if hi[a] > lo[a] { hi[a] - lo[a] } else { 1.0 };
    let (sx, sy) = (span(0), span(1));
    let cell = |x: f64, lo: f64, s: f64| (((x - lo) / s * size as f64) as usize).min(size - 1);
    let mut counts = vec![0u64; size * size];
    for p in cloud.points() {
        let col = cell(p[0], lo[0], sx);
        let row = size - 1 - cell(p[1], lo[1], sy);
        counts[row * size + col] += 1;
    }
    let cmax = counts.iter().copied().max().unwrap_or(0);
    let denom = (1.0 + cmax as f64).ln();
    Ok(counts
        .iter()
        .map(|&c| if cmax == 0 { 0 } else { (255.0 * (1.0 + c as f64).ln() / denom).round() as u8 })
        .collect())
}
