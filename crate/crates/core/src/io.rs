//! CSV ingestion and output of series and datasets.
//!
//! Accepted headers are `t,x` (a scalar series), `t,x1,...,xq` (a vector
//! series) and `t,x,y` (a regression dataset). The `t` column must be
//! strictly increasing. An ingested series has no separate initial-state
//! row: its first observation plays the role of X_0.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::chains::Trajectory;
use crate::error::{Error, Result};
use crate::models::Dataset;

#[derive(Debug, Clone)]
pub enum Series {
    Trajectory(Trajectory),
    Dataset(Dataset),
}

enum Layout {
    Scalar,
    Vector(usize),
    Paired,
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let bad = || Error::Parse {
        line: 1,
        message: format!("unsupported header '{}'; expected t,x or t,x,y or t,x1,...,xq", cols.join(",")),
    };
    match cols.as_slice() {
        ["t", "x"] => Ok(Layout::Scalar),
        ["t", "x", "y"] => Ok(Layout::Paired),
        ["t", rest @ ..] if !rest.is_empty() => {
            for (j, c) in rest.iter().enumerate() {
                if *c != format!("x{}", j + 1) {
                    return Err(bad());
                }
            }
            Ok(Layout::Vector(rest.len()))
        }
        _ => Err(bad()),
    }
}

pub fn read_series<R: Read>(reader: R) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse { line: 1, message: "empty file".into() });
    }
    let layout = layout(&header)?;
    let width = header.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    let mut last_t: Option<f64> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Parse { line, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        let mut vals = Vec::with_capacity(width);
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("'{field}' is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite value '{field}'") });
            }
            vals.push(v);
        }
        if let Some(prev) = last_t {
            if vals[0] <= prev {
                return Err(Error::Data(format!("line {line}: t = {} does not increase (previous {prev})", vals[0])));
            }
        }
        last_t = Some(vals[0]);
        for (c, v) in columns.iter_mut().zip(&vals[1..]) {
            c.push(*v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Parse { line: 2, message: "file has a header but no rows".into() });
    }
    match layout {
        Layout::Scalar => Ok(Series::Trajectory(Trajectory::from_values(columns.remove(0), 1)?)),
        Layout::Paired => {
            let y = columns.remove(1);
            Ok(Series::Dataset(Dataset::new(columns.remove(0), y)?))
        }
        Layout::Vector(q) => {
            let rows = columns[0].len();
            let values = (0..rows).flat_map(|t| columns.iter().map(move |c| c[t])).collect();
            Ok(Series::Trajectory(Trajectory::from_values(values, q)?))
        }
    }
}

pub fn read_series_csv(path: &Path) -> Result<Series> {
    let mut data = String::new();
    File::open(path)?.read_to_string(&mut data)?;
    if data.trim().is_empty() {
        return Err(Error::Parse { line: 1, message: format!("{} is empty", path.display()) });
    }
    let mut s = read_series(data.as_bytes())?;
    if let Series::Dataset(d) = &mut s {
        d.provenance.source = Some(path.display().to_string());
    }
    Ok(s)
}

/// Rows t = 0..n with full round-trip precision.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let q = traj.dim();
    if q == 1 {
        writeln!(w, "t,x")?;
    } else {
        let names: Vec<String> = (1..=q).map(|j| format!("x{j}")).collect();
        writeln!(w, "t,{}", names.join(","))?;
    }
    for t in 0..traj.len() {
        write!(w, "{t}")?;
        for v in traj.state(t) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Rows t = 1..n.
pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    writeln!(w, "t,x,y")?;
    for (t, (x, y)) in data.x.iter().zip(&data.y).enumerate() {
        writeln!(w, "{},{x:.16e},{y:.16e}", t + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{simulate_chain, ChainSpec};

    fn parse(s: &str) -> Result<Series> {
        read_series(s.as_bytes())
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = simulate_chain(&ChainSpec::random_walk(), 50, 3).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        match read_series(buf.as_slice()).unwrap() {
            Series::Trajectory(t) => assert_eq!(t.raw(), traj.raw()),
            _ => panic!("expected a trajectory"),
        }
    }

    #[test]
    fn vector_round_trip() {
        let traj = simulate_chain(&ChainSpec::var1(vec![0.5, 0.0, 0.1, 0.3], vec![0.0, 0.0]), 20, 3).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        match read_series(buf.as_slice()).unwrap() {
            Series::Trajectory(t) => {
                assert_eq!(t.dim(), 2);
                assert_eq!(t.raw(), traj.raw());
            }
            _ => panic!("expected a trajectory"),
        }
    }

    #[test]
    fn dataset_round_trip() {
        let d = Dataset::new(vec![0.1, -2.5, 1e-300], vec![3.0, 1.0 / 3.0, -7.25]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &d).unwrap();
        match read_series(buf.as_slice()).unwrap() {
            Series::Dataset(e) => assert_eq!((e.x, e.y), (d.x, d.y)),
            _ => panic!("expected a dataset"),
        }
    }

    #[test]
    fn length_212() {
        let mut s = String::from("t,x\n");
        for t in 1..=212 {
            s.push_str(&format!("{t},{}\n", (t as f64).sqrt()));
        }
        match parse(&s).unwrap() {
            Series::Trajectory(t) => assert_eq!(t.len(), 212),
            _ => panic!(),
        }
    }

    #[test]
    fn errors_carry_lines() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("t,x\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("t,x\n1,2\n2,abc\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("t,x\n1,2\n1,3\n"), Err(Error::Data(_))));
        assert!(matches!(parse("t,z\n1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("t,x\n1,2,3\n"), Err(Error::Parse { line: 2, .. })));
    }
}
