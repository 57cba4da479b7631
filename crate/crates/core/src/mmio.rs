//! MatrixMarket `array` format (dense, column-major).

use std::fmt::Write as _;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

pub fn write_array(m: MatRef<'_, f64>, comment: &str) -> String {
    let mut out = String::with_capacity(32 + 24 * m.nrows() * m.ncols());
    out.push_str("%%MatrixMarket matrix array real general\n");
    for line in comment.lines() {
        let _ = writeln!(out, "% {line}");
    }
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(out, "{}", m[(i, j)]);
        }
    }
    out
}

pub fn read_array(text: &str) -> Result<Mat<f64>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("%%MatrixMarket matrix array real") {
        return Err(Error::InvalidParameter(format!(
            "unsupported MatrixMarket header: {header}"
        )));
    }
    let mut body = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let dims = body
        .next()
        .ok_or_else(|| Error::InvalidParameter("missing size line".into()))?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(rows)), Some(Ok(cols))) = (it.next(), it.next()) else {
        return Err(Error::InvalidParameter(format!("bad size line: {dims}")));
    };
    let values: Vec<f64> = body
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad value {l:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(Error::InvalidParameter(format!(
            "expected {} values, found {}",
            rows * cols,
            values.len()
        )));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| values[j * rows + i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn array_round_trip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let m = Mat::from_fn(rows, cols, |i, j| ((seed as f64) * 1e-19 + (i * 7 + j) as f64).sin() / 3.0);
            let back = read_array(&write_array(m.as_ref(), "test\nsecond line")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
