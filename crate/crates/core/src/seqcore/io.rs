//! Text formats for sequences and warping paths.
//!
//! Sequence files hold a `dim=<d> len=<T>` header followed by one line per
//! frame with `d` space-separated floats. Path files are CSV with columns
//! `t,phi_x,phi_y`, all 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{FeatureSequence, WarpingPathPair};
use crate::error::{Error, Result};

pub fn format_sequence(seq: &FeatureSequence) -> String {
    let mut out = format!("dim={} len={}\n", seq.dim(), seq.len());
    for col in seq.data().column_iter() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_sequence(text: &str) -> Result<FeatureSequence> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty sequence file".into()))?;
    let mut dim = None;
    let mut len = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("len", v)) => len = v.parse::<usize>().ok(),
            _ => return Err(Error::Parse(format!("unexpected header field `{field}`"))),
        }
    }
    let (dim, len) = match (dim, len) {
        (Some(d), Some(l)) => (d, l),
        _ => return Err(Error::Parse(format!("bad sequence header `{header}`"))),
    };
    let mut values = Vec::with_capacity(dim * len);
    let mut frames = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad float `{tok}`", lineno + 2)))?;
            values.push(v);
        }
        if values.len() - before != dim {
            return Err(Error::Parse(format!(
                "line {}: expected {dim} values, found {}",
                lineno + 2,
                values.len() - before
            )));
        }
        frames += 1;
    }
    if frames != len {
        return Err(Error::Parse(format!("header says {len} frames, found {frames}")));
    }
    FeatureSequence::new(DMatrix::from_column_slice(dim, len, &values))
}

pub fn write_sequence(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, format_sequence(seq))?;
    Ok(())
}

pub fn read_sequence(path: &Path) -> Result<FeatureSequence> {
    parse_sequence(&fs::read_to_string(path)?)
}

pub fn format_path_csv(path: &WarpingPathPair) -> String {
    let mut out = String::from("t,phi_x,phi_y\n");
    for (t, (i, j)) in path.cells().enumerate() {
        let _ = writeln!(out, "{t},{i},{j}");
    }
    out
}

/// Parses a path CSV; `tx`/`ty` are taken from the final row.
pub fn parse_path_csv(text: &str) -> Result<WarpingPathPair> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("t,phi_x,phi_y") => {}
        other => return Err(Error::Parse(format!("bad path header {other:?}"))),
    }
    let mut cells = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("path row {}: bad index `{s}`", n + 1)))
        };
        if f.len() != 3 || parse(f[0])? != cells.len() {
            return Err(Error::Parse(format!("path row {}: malformed `{line}`", n + 1)));
        }
        cells.push((parse(f[1])?, parse(f[2])?));
    }
    let &(ex, ey) = cells.last().ok_or_else(|| Error::Parse("empty path file".into()))?;
    WarpingPathPair::from_cells(&cells, ex + 1, ey + 1)
}

pub fn write_path_csv(file: &Path, path: &WarpingPathPair) -> Result<()> {
    fs::write(file, format_path_csv(path))?;
    Ok(())
}

pub fn read_path_csv(file: &Path) -> Result<WarpingPathPair> {
    parse_path_csv(&fs::read_to_string(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::uniform_init_path;
    use proptest::prelude::*;

    #[test]
    fn sequence_format_layout() {
        let s = FeatureSequence::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.5, -3.0, 0.125])).unwrap();
        assert_eq!(format_sequence(&s), "dim=2 len=2\n1 -3\n2.5 0.125\n");
    }

    #[test]
    fn path_csv_is_zero_based() {
        let p = uniform_init_path(3, 2).unwrap();
        assert_eq!(format_path_csv(&p), "t,phi_x,phi_y\n0,0,0\n1,1,1\n2,2,1\n");
        assert_eq!(parse_path_csv(&format_path_csv(&p)).unwrap(), p);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(parse_sequence("dim=2 len=2\n1 2\n").is_err());
        assert!(parse_sequence("dim=2 len=1\n1 2 3\n").is_err());
        assert!(parse_sequence("size=2\n").is_err());
        assert!(parse_path_csv("t,phi_x,phi_y\n0,0,0\n2,1,1\n").is_err());
        assert!(parse_path_csv("a,b\n").is_err());
    }

    proptest! {
        #[test]
        fn sequence_text_roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 1..40), dim in 1usize..4) {
            let len = vals.len() / dim;
            prop_assume!(len >= 1);
            let s = FeatureSequence::new(DMatrix::from_column_slice(dim, len, &vals[..dim * len])).unwrap();
            prop_assert_eq!(parse_sequence(&format_sequence(&s)).unwrap(), s);
        }
    }
}
