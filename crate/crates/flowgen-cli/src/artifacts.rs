//! Artifact output: atomic file writes, CSV formatting, and flat binary
//! parameter checkpoints with a text layout header.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flowgen_core::generators::ParamSlice;

/// Writes through a temp file in the same directory plus rename, so an
/// interrupted run never leaves a truncated artifact behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut tmp = PathBuf::from(path);
    let file_name = path
        .file_name()
        .ok_or_else(|| anyhow!("artifact path has no file name: {}", path.display()))?;
    tmp.set_file_name(format!(
        ".{}.tmp.{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)
            .with_context(|| format!("creating temp file {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Shortest round-trip decimal formatting; stable across runs of the same
/// build, which is what the byte-identical determinism contract needs.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

/// CSV with a header row, comma delimiter, `.` decimals and LF endings.
pub struct CsvBuilder {
    buf: String,
    columns: usize,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn push_row(&mut self, iteration: usize, values: &[f64]) {
        debug_assert_eq!(values.len() + 1, self.columns);
        let _ = write!(self.buf, "{iteration}");
        for v in values {
            let _ = write!(self.buf, ",{}", format_value(*v));
        }
        self.buf.push('\n');
    }

    /// Row of raw floats (no leading iteration column).
    pub fn push_float_row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        let mut first = true;
        for v in values {
            if !first {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", format_value(*v));
            first = false;
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Writes a particle set as one point per row, columns `x0..x{n-1}`.
pub fn particles_csv(particles: &flowgen_core::ParticleSet) -> String {
    let header: Vec<String> = (0..particles.dim()).map(|i| format!("x{i}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvBuilder::new(&header_refs);
    for p in particles.points() {
        csv.push_float_row(p);
    }
    csv.finish()
}

const CHECKPOINT_MAGIC: &str = "flowgen-params v1";

/// Flat little-endian f64 checkpoint with a text header naming the layout.
pub fn write_checkpoint(path: &Path, layout: &[ParamSlice], values: &[f64]) -> Result<()> {
    let mut header = String::new();
    let _ = writeln!(header, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(header, "count {}", values.len());
    for slice in layout {
        let _ = writeln!(header, "slice {} {} {}", slice.name, slice.offset, slice.len);
    }
    let _ = writeln!(header, "data");
    let mut bytes = header.into_bytes();
    bytes.reserve(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Reads a checkpoint back, returning the layout and the flat parameters.
pub fn read_checkpoint(path: &Path) -> Result<(Vec<ParamSlice>, Vec<f64>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let data_tag = b"data\n";
    let header_end = bytes
        .windows(data_tag.len())
        .position(|w| w == data_tag)
        .ok_or_else(|| anyhow!("checkpoint missing data marker"))?
        + data_tag.len();
    let header = std::str::from_utf8(&bytes[..header_end]).context("checkpoint header")?;
    let mut lines = header.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        bail!("not a flowgen checkpoint");
    }
    let count_line = lines.next().ok_or_else(|| anyhow!("missing count line"))?;
    let count: usize = count_line
        .strip_prefix("count ")
        .ok_or_else(|| anyhow!("malformed count line"))?
        .parse()
        .context("parsing count")?;
    let mut layout = Vec::new();
    for line in lines {
        if line == "data" {
            break;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("slice") {
            bail!("malformed layout line `{line}`");
        }
        let name = parts
            .next()
            .ok_or_else(|| anyhow!("layout line missing name"))?
            .to_string();
        let offset: usize = parts
            .next()
            .ok_or_else(|| anyhow!("layout line missing offset"))?
            .parse()?;
        let len: usize = parts
            .next()
            .ok_or_else(|| anyhow!("layout line missing len"))?
            .parse()?;
        layout.push(ParamSlice { name, offset, len });
    }
    let raw = &bytes[header_end..];
    if raw.len() != count * 8 {
        bail!(
            "checkpoint payload is {} bytes, expected {}",
            raw.len(),
            count * 8
        );
    }
    let mut values = Vec::with_capacity(count);
    for chunk in raw.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
    }
    Ok((layout, values))
}
