//! Plain-text serialization of measures and flows.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value bit-for-bit. Layouts:
//!
//! * grid density: `# measure n=1 M=<cells> x_lo=<..> x_hi=<..>` followed by
//!   one cell value per line;
//! * atoms: `# atoms n=1 count=<K>` followed by `point,weight` lines;
//! * joint table: `# joint n=1 M=<cells> K=<controls> x_lo=<..> x_hi=<..>`,
//!   a comma-separated line of control values, then one row of `K` weights
//!   per cell;
//! * flow: a directory with `index.csv` (`# flow frames=<L+1> kind=<kind>`,
//!   then `k,t,file` rows) and one file per frame.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{CellGrid, DiscreteMeasure, Flow, GridDensity, JointTable, TimeGrid};
use crate::error::{MfgError, Result};

/// A frame type that can be stored as one file of a flow directory.
pub trait FrameIo: Sized {
    const KIND: &'static str;
    fn to_text(&self) -> String;
    fn from_text(text: &str) -> Result<Self>;
}

fn header_fields(line: &str, tag: &str) -> Result<Vec<(String, String)>> {
    let rest = line
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|l| l.strip_prefix(tag))
        .ok_or_else(|| MfgError::Parse(format!("expected `# {tag}` header, got `{line}`")))?;
    rest.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| MfgError::Parse(format!("malformed header field `{kv}`")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(fields: &[(String, String)], key: &str) -> Result<T> {
    let raw = fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| MfgError::Parse(format!("missing header field `{key}`")))?;
    raw.parse().map_err(|_| MfgError::Parse(format!("bad value `{raw}` for `{key}`")))
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| MfgError::Parse(format!("bad number `{s}`")))
}

fn body(text: &str) -> (Option<&str>, impl Iterator<Item = &str>) {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    (lines.next(), lines)
}

impl FrameIo for GridDensity {
    const KIND: &'static str = "grid";

    fn to_text(&self) -> String {
        let g = self.grid();
        let mut s = format!("# measure n=1 M={} x_lo={} x_hi={}\n", g.cells, g.x_lo, g.x_hi);
        for v in self.values() {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    fn from_text(text: &str) -> Result<Self> {
        let (head, rest) = body(text);
        let fields = header_fields(head.unwrap_or(""), "measure")?;
        let grid = CellGrid::new(field(&fields, "x_lo")?, field(&fields, "x_hi")?, field(&fields, "M")?)?;
        let values = rest.map(num).collect::<Result<Vec<_>>>()?;
        GridDensity::new(grid, values)
    }
}

impl FrameIo for DiscreteMeasure {
    const KIND: &'static str = "atoms";

    fn to_text(&self) -> String {
        let mut s = format!("# atoms n=1 count={}\n", self.len());
        for (x, w) in self.atoms() {
            let _ = writeln!(s, "{x},{w}");
        }
        s
    }

    fn from_text(text: &str) -> Result<Self> {
        let (head, rest) = body(text);
        let fields = header_fields(head.unwrap_or(""), "atoms")?;
        let count: usize = field(&fields, "count")?;
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for line in rest {
            let (x, w) = line
                .split_once(',')
                .ok_or_else(|| MfgError::Parse(format!("expected `point,weight`, got `{line}`")))?;
            points.push(num(x)?);
            weights.push(num(w)?);
        }
        if points.len() != count {
            return Err(MfgError::Parse(format!("header says {count} atoms, found {}", points.len())));
        }
        DiscreteMeasure::new(points, weights)
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn split_nums(line: &str) -> Result<Vec<f64>> {
    line.split(',').map(num).collect()
}

impl FrameIo for JointTable {
    const KIND: &'static str = "joint";

    fn to_text(&self) -> String {
        let g = self.grid();
        let k = self.controls().len();
        let mut s = format!("# joint n=1 M={} K={k} x_lo={} x_hi={}\n", g.cells, g.x_lo, g.x_hi);
        s.push_str(&join(self.controls()));
        s.push('\n');
        for i in 0..g.cells {
            s.push_str(&join(self.row(i)));
            s.push('\n');
        }
        s
    }

    fn from_text(text: &str) -> Result<Self> {
        let (head, mut rest) = body(text);
        let fields = header_fields(head.unwrap_or(""), "joint")?;
        let grid = CellGrid::new(field(&fields, "x_lo")?, field(&fields, "x_hi")?, field(&fields, "M")?)?;
        let k: usize = field(&fields, "K")?;
        let controls = split_nums(rest.next().unwrap_or(""))?;
        if controls.len() != k {
            return Err(MfgError::Parse(format!("header says K={k}, found {} controls", controls.len())));
        }
        let mut weights = Vec::with_capacity(grid.cells * k);
        for line in rest {
            let row = split_nums(line)?;
            if row.len() != k {
                return Err(MfgError::Parse(format!("row of {} weights, expected {k}", row.len())));
            }
            weights.extend(row);
        }
        JointTable::new(grid, Arc::from(controls), weights)
    }
}

pub fn write_grid_density(path: &Path, d: &GridDensity) -> Result<()> {
    Ok(fs::write(path, d.to_text())?)
}

pub fn read_grid_density(path: &Path) -> Result<GridDensity> {
    GridDensity::from_text(&fs::read_to_string(path)?)
}

pub fn write_discrete(path: &Path, d: &DiscreteMeasure) -> Result<()> {
    Ok(fs::write(path, d.to_text())?)
}

pub fn read_discrete(path: &Path) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_text(&fs::read_to_string(path)?)
}

pub fn write_joint_table(path: &Path, t: &JointTable) -> Result<()> {
    Ok(fs::write(path, t.to_text())?)
}

pub fn read_joint_table(path: &Path) -> Result<JointTable> {
    JointTable::from_text(&fs::read_to_string(path)?)
}

/// Writes `flow` into directory `dir` (created if missing).
pub fn write_flow<F: FrameIo>(dir: &Path, flow: &Flow<F>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = format!("# flow frames={} kind={}\n", flow.len(), F::KIND);
    for (k, (t, frame)) in flow.time().times().iter().zip(flow.frames()).enumerate() {
        let name = format!("frame_{k:05}.csv");
        fs::write(dir.join(&name), frame.to_text())?;
        let _ = writeln!(index, "{k},{t},{name}");
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

/// Reads a flow directory written by [`write_flow`].
pub fn read_flow<F: FrameIo>(dir: &Path) -> Result<Flow<F>> {
    let index = fs::read_to_string(dir.join("index.csv"))?;
    let (head, rest) = body(&index);
    let fields = header_fields(head.unwrap_or(""), "flow")?;
    let kind: String = field(&fields, "kind")?;
    if kind != F::KIND {
        return Err(MfgError::Parse(format!("flow holds `{kind}` frames, expected `{}`", F::KIND)));
    }
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for line in rest {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(MfgError::Parse(format!("bad index row `{line}`")));
        }
        times.push(num(parts[1])?);
        frames.push(F::from_text(&fs::read_to_string(dir.join(parts[2].trim()))?)?);
    }
    Flow::new(TimeGrid::from_times(times)?, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = CellGrid::new(-1.0, 2.0, 3).unwrap();
        let d = GridDensity::from_masses(g, &[0.1, 0.7, 0.2]).unwrap();
        write_grid_density(&dir.path().join("d.csv"), &d).unwrap();
        assert_eq!(read_grid_density(&dir.path().join("d.csv")).unwrap(), d);

        let a = DiscreteMeasure::new(vec![0.1, -3.5], vec![0.25, 0.75]).unwrap();
        write_discrete(&dir.path().join("a.csv"), &a).unwrap();
        assert_eq!(read_discrete(&dir.path().join("a.csv")).unwrap(), a);

        let t = JointTable::new(g, Arc::from(vec![0.0, 0.5]), vec![0.1, 0.0, 0.3, 0.4, 0.0, 0.2])
            .unwrap();
        let time = TimeGrid::uniform(0.3, 2).unwrap();
        let flow = Flow::new(time, vec![t.clone(), t.clone(), t]).unwrap();
        write_flow(&dir.path().join("q"), &flow).unwrap();
        assert_eq!(read_flow::<JointTable>(&dir.path().join("q")).unwrap(), flow);
        assert!(read_flow::<GridDensity>(&dir.path().join("q")).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(GridDensity::from_text("# measure n=1 M=2 x_lo=0\n1\n1\n").is_err());
        assert!(GridDensity::from_text("1\n1\n").is_err());
        assert!(DiscreteMeasure::from_text("# atoms n=1 count=2\n0,1\n").is_err());
    }
}
