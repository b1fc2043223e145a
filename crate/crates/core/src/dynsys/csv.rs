//! Trajectory CSV format.
//!
//! ```text
//! # system=<name> dim=<d> <key>=<value> ...
//! t,y1,...,yd
//! <t>,<y1>,...,<yd>
//! ```
//!
//! A file may hold several trajectories; each starts at its own `#` header line.
//! Numbers are written with Rust's shortest round-trip formatting, so an
//! export/ingest cycle is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::trajectory::Trajectory;
use crate::error::{Error, Result};

pub fn format_trajectory(system: &str, traj: &Trajectory) -> String {
    let dim = traj.dim();
    let mut out = format!("# system={system} dim={dim}");
    for (k, v) in &traj.meta {
        if k == "system" || k == "dim" {
            continue;
        }
        let _ = write!(out, " {k}={v}");
    }
    out.push('\n');
    out.push('t');
    for i in 1..=dim {
        let _ = write!(out, ",y{i}");
    }
    out.push('\n');
    for (t, row) in traj.times.iter().zip(&traj.states) {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv(path: &Path, system: &str, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, format_trajectory(system, traj))?;
    Ok(())
}

/// Read every trajectory in a CSV file.
pub fn ingest_csv(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectories(&text)
}

struct Block {
    meta: BTreeMap<String, String>,
    dim: usize,
    columns_seen: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Block {
    fn finish(self, header_line: usize) -> Result<Trajectory> {
        if !self.columns_seen {
            return Err(Error::Parse { line: header_line, reason: "missing column row".into() });
        }
        Trajectory::new(self.times, self.states, self.meta).map_err(|e| Error::Parse {
            line: header_line,
            reason: e.to_string(),
        })
    }
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Block)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if let Some((start, block)) = current.take() {
                out.push(block.finish(start)?);
            }
            current = Some((line_no, parse_header(header, line_no)?));
            continue;
        }
        let Some((_, block)) = current.as_mut() else {
            return Err(Error::Parse { line: line_no, reason: "data before '# system=...' header".into() });
        };
        if !block.columns_seen {
            let expected: Vec<String> =
                std::iter::once("t".to_string()).chain((1..=block.dim).map(|i| format!("y{i}"))).collect();
            let found: Vec<&str> = line.split(',').map(str::trim).collect();
            if found != expected {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected columns '{}', found '{line}'", expected.join(",")),
                });
            }
            block.columns_seen = true;
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != block.dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected {} columns, found {}", block.dim + 1, cells.len()),
            });
        }
        let mut values = Vec::with_capacity(cells.len());
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("non-numeric cell '{cell}' in column {}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: line_no, reason: format!("non-finite cell '{cell}'") });
            }
            values.push(v);
        }
        let t = values[0];
        if let Some(&prev) = block.times.last() {
            if !(t > prev) {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("time {t} does not increase (previous {prev})"),
                });
            }
        }
        block.times.push(t);
        block.states.push(values[1..].to_vec());
    }
    if let Some((start, block)) = current {
        out.push(block.finish(start)?);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 1, reason: "no trajectory header found".into() });
    }
    Ok(out)
}

fn parse_header(header: &str, line: usize) -> Result<Block> {
    let mut meta = BTreeMap::new();
    for token in header.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, reason: format!("malformed header token '{token}'") })?;
        meta.insert(k.to_string(), v.to_string());
    }
    if !meta.contains_key("system") {
        return Err(Error::Parse { line, reason: "header lacks system=<name>".into() });
    }
    let dim: usize = meta
        .get("dim")
        .ok_or_else(|| Error::Parse { line, reason: "header lacks dim=<d>".into() })?
        .parse()
        .map_err(|_| Error::Parse { line, reason: "dim is not an integer".into() })?;
    if dim == 0 {
        return Err(Error::Parse { line, reason: "dim must be positive".into() });
    }
    Ok(Block { meta, dim, columns_seen: false, times: Vec::new(), states: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "# system=toy dim=2 phi=1\nt,y1,y2\n0,1,2\n0.1,1.5,2.5\n0.2,2,3\n0.3,2.5,3.5\n0.4,3,4\n";

    #[test]
    fn parses_well_formed_file() {
        let trajs = parse_trajectories(WELL_FORMED).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].dim(), 2);
        assert_eq!(trajs[0].len(), 5);
        assert_eq!(trajs[0].meta["phi"], "1");
    }

    #[test]
    fn decreasing_time_cites_row() {
        let text = "# system=toy dim=2\nt,y1,y2\n0,1,2\n0.2,1,2\n0.1,1,2\n";
        match parse_trajectories(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_columns_and_bad_cells() {
        let text = "# system=toy dim=2\nt,y1\n0,1\n";
        assert!(matches!(parse_trajectories(text), Err(Error::Parse { line: 2, .. })));
        let text = "# system=toy dim=2\nt,y1,y2\n0,1,abc\n";
        assert!(matches!(parse_trajectories(text), Err(Error::Parse { line: 3, .. })));
        let text = "# system=toy dim=2\nt,y1,y2\n0,1\n";
        assert!(matches!(parse_trajectories(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn multiple_blocks() {
        let text = format!("{WELL_FORMED}{WELL_FORMED}");
        assert_eq!(parse_trajectories(&text).unwrap().len(), 2);
    }

    proptest::proptest! {
        #[test]
        fn export_ingest_is_bit_exact(
            rows in proptest::collection::vec(proptest::collection::vec(-1e300f64..1e300, 3), 1..20),
            dt in proptest::collection::vec(1e-6f64..1e3, 20),
        ) {
            let mut t = 0.0;
            let mut times = Vec::new();
            for d in dt.iter().take(rows.len()) {
                times.push(t);
                t += d;
            }
            let traj = Trajectory::new(times, rows, BTreeMap::from([("phi".to_string(), "0.9".to_string())])).unwrap();
            let back = parse_trajectories(&format_trajectory("toy", &traj)).unwrap().remove(0);
            proptest::prop_assert_eq!(&back.times, &traj.times);
            proptest::prop_assert_eq!(&back.states, &traj.states);
        }
    }
}
