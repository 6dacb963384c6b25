//! File formats.
//!
//! * Sequences: a JSON array of `[re, im]` pairs.
//! * Regions: `{"anchors": [[re, im], ...], "radii": [r, ...]}`.
//! * Grid fields: a JSON object with the grid, the dimension `d` and a flat
//!   array of interleaved `re, im` values in radial-major order, i.e. node
//!   `(i, j)`, component `c` starts at index `2 ((i n_theta + j) d + c)`.
//!   Values are decimal JSON numbers, so there is no byte order to declare.
//!   An optional boolean `mask` (one entry per node) defaults to all true.
//! * Level sets and solutions: CSV tables with a header row.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::cauchy::{GridField, PolarGrid};
use crate::error::{Error, Result};
use crate::geometry::DiskPoint;
use crate::region::RegionSpec;
use crate::sequence::FiniteSequence;

pub const GRID_FORMAT: &str = "dbar-grid-field";

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn json_error(what: &str, e: serde_json::Error) -> Error {
    Error::Format(format!("{what}: {e}"))
}

fn point(what: &str, i: usize, p: &[f64]) -> Result<DiskPoint> {
    if p.len() != 2 {
        return Err(Error::Format(format!("{what} entry {i}: expected [re, im], got {} numbers", p.len())));
    }
    DiskPoint::from_parts(p[0], p[1]).map_err(|e| Error::Format(format!("{what} entry {i}: {e}")))
}

/// Parse a sequence; errors name the line and column of malformed JSON and
/// the entry of an invalid point.
pub fn parse_sequence(text: &str) -> Result<FiniteSequence> {
    let raw: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| json_error("sequence", e))?;
    if raw.is_empty() {
        return Err(Error::Format("sequence: no points".into()));
    }
    let pts = raw.iter().enumerate().map(|(i, p)| point("sequence", i, p)).collect::<Result<Vec<_>>>()?;
    FiniteSequence::new(pts).map_err(|e| Error::Format(format!("sequence: {e}")))
}

pub fn read_sequence(path: &Path) -> Result<FiniteSequence> {
    parse_sequence(&read(path)?).map_err(|e| e.context(&path.display().to_string()))
}

pub fn sequence_json(seq: &FiniteSequence) -> String {
    serde_json::to_string_pretty(seq).expect("sequences serialize")
}

#[derive(Deserialize)]
struct RawRegion {
    anchors: Vec<Vec<f64>>,
    radii: Vec<f64>,
}

pub fn parse_region(text: &str) -> Result<RegionSpec> {
    let raw: RawRegion = serde_json::from_str(text).map_err(|e| json_error("region", e))?;
    let pts = raw.anchors.iter().enumerate().map(|(i, p)| point("region anchors", i, p)).collect::<Result<Vec<_>>>()?;
    let anchors = FiniteSequence::new(pts).map_err(|e| Error::Format(format!("region anchors: {e}")))?;
    RegionSpec::new(anchors, raw.radii).map_err(|e| Error::Format(format!("region: {e}")))
}

pub fn read_region(path: &Path) -> Result<RegionSpec> {
    parse_region(&read(path)?).map_err(|e| e.context(&path.display().to_string()))
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    format: String,
    grid: PolarGrid,
    dim: usize,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
}

pub fn grid_field_json(field: &GridField) -> String {
    let values = field.values().iter().flat_map(|v| [v.re, v.im]).collect();
    let all = field.mask().iter().all(|&m| m);
    let file = GridFile {
        format: GRID_FORMAT.into(),
        grid: *field.grid(),
        dim: field.dim(),
        values,
        mask: if all { None } else { Some(field.mask().to_vec()) },
    };
    serde_json::to_string(&file).expect("grid fields serialize")
}

pub fn parse_grid_field(text: &str) -> Result<GridField> {
    let file: GridFile = serde_json::from_str(text).map_err(|e| json_error("grid field", e))?;
    if file.format != GRID_FORMAT {
        return Err(Error::Format(format!("grid field: format is {:?}, expected {GRID_FORMAT:?}", file.format)));
    }
    let grid = PolarGrid::new(file.grid.n_r, file.grid.n_theta, file.grid.radius)
        .map_err(|e| Error::Format(format!("grid field: {e}")))?;
    if file.dim == 0 {
        return Err(Error::Format("grid field: dim must be positive".into()));
    }
    let expected = 2 * grid.len() * file.dim;
    if file.values.len() != expected {
        return Err(Error::Format(format!(
            "grid field: values has {} numbers, expected 2 * {} nodes * {} = {expected}",
            file.values.len(),
            grid.len(),
            file.dim
        )));
    }
    let values = file.values.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
    let mask = file.mask.unwrap_or_else(|| vec![true; grid.len()]);
    GridField::from_parts(grid, file.dim, values, mask).map_err(|e| Error::Format(format!("grid field: {e}")))
}

pub fn read_grid_field(path: &Path) -> Result<GridField> {
    parse_grid_field(&read(path)?).map_err(|e| e.context(&path.display().to_string()))
}

/// `re,im,abs_b` rows of `|B|` on the given points.
pub fn write_level_csv(out: &mut dyn Write, product: &BlaschkeProduct, points: &[Complex64]) -> Result<()> {
    writeln!(out, "re,im,abs_b")?;
    for &z in points {
        writeln!(out, "{},{},{}", z.re, z.im, product.eval(z).norm())?;
    }
    Ok(())
}

/// One sampled value of a `C^d`-valued function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub z: [f64; 2],
    pub value: Vec<[f64; 2]>,
}

pub fn samples(points: &[Complex64], values: &[Vec<Complex64>]) -> Vec<Sample> {
    points
        .iter()
        .zip(values)
        .map(|(z, v)| Sample { z: [z.re, z.im], value: v.iter().map(|c| [c.re, c.im]).collect() })
        .collect()
}

/// `re,im,re_0,im_0,...` rows.
pub fn write_samples_csv(out: &mut dyn Write, samples: &[Sample]) -> Result<()> {
    let dim = samples.first().map_or(1, |s| s.value.len());
    let mut header = String::from("re,im");
    for c in 0..dim {
        header.push_str(&format!(",re_{c},im_{c}"));
    }
    writeln!(out, "{header}")?;
    for s in samples {
        let mut row = format!("{},{}", s.z[0], s.z[1]);
        for v in &s.value {
            row.push_str(&format!(",{},{}", v[0], v[1]));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}
