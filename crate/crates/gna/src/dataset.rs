//! Text loaders for regression data.
//!
//! Dense files hold one row per line with whitespace- or comma-separated
//! values. Sparse files use the LIBSVM layout `label idx:val idx:val ...`
//! with 1-based feature indices; labels form `b`, features form `A`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Parses a dense matrix from text. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_dense(text: &str, origin: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("invalid number `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Parses LIBSVM text into `(A, b)`. The feature count is the largest index seen.
pub fn parse_libsvm(text: &str, origin: &Path) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut labels = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap_or_default();
        let label: f64 = label
            .parse()
            .map_err(|_| parse_err(lineno + 1, format!("invalid label `{label}`")))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno + 1, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("invalid index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(lineno + 1, "feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("invalid value `{val}`")))?;
            width = width.max(idx);
            row.push((idx - 1, val));
        }
        labels.push(label);
        entries.push(row);
    }
    if labels.is_empty() || width == 0 {
        return Err(parse_err(0, "no data rows".into()));
    }
    let mut a = DMatrix::zeros(labels.len(), width);
    for (i, row) in entries.iter().enumerate() {
        for &(j, v) in row {
            a[(i, j)] = v;
        }
    }
    Ok((a, DVector::from_vec(labels)))
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    parse_dense(&text, path)
}

pub fn read_libsvm(path: &Path) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let text = read(path)?;
    parse_libsvm(&text, path)
}

/// Writes `(A, b)` in LIBSVM format, skipping exact zeros.
pub fn write_libsvm(path: &Path, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    use std::fmt::Write;
    let mut out = String::new();
    for i in 0..a.nrows() {
        let _ = write!(out, "{}", b[i]);
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Synthetic classification data with the layout of the Madelon benchmark:
/// a few informative features, exact linear combinations of them, and pure
/// noise columns; labels are `±1`.
///
/// `n × d` with `informative` latent features and `3·informative` redundant
/// combinations (clipped to `d`), so `AᵀA` is singular as in Madelon.
/// Deterministic under `seed`.
pub fn make_surrogate_dataset(
    n: usize,
    d: usize,
    informative: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if n == 0 || d == 0 || informative == 0 || informative > d {
        return Err(Error::InvalidInput(format!(
            "surrogate needs n, d ≥ 1 and 1 ≤ informative ≤ d, got n={n}, d={d}, informative={informative}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let latent = DMatrix::from_fn(n, informative, |_, _| gauss());
    let redundant = (3 * informative).min(d - informative);
    let mix = DMatrix::from_fn(informative, redundant, |_, _| gauss());
    let combos = &latent * mix;
    let mut a = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = if j < informative {
                latent[(i, j)]
            } else if j < informative + redundant {
                combos[(i, j - informative)]
            } else {
                gauss()
            };
        }
    }
    // labels: parity of the signs of the informative features
    let b = DVector::from_fn(n, |i, _| {
        let negatives = (0..informative).filter(|&j| latent[(i, j)] < 0.0).count();
        if negatives % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    });
    Ok((a, b))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_mixed_delimiters() {
        let m = parse_dense("1, 2 3\n# note\n\n4,5,6\n", Path::new("x")).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn dense_ragged_rows() {
        let err = parse_dense("1 2\n3\n", Path::new("data.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn libsvm_basic() {
        let (a, b) = parse_libsvm("1 1:0.5 3:2\n-1 2:1\n", Path::new("x")).unwrap();
        assert_eq!(b.as_slice(), &[1.0, -1.0]);
        assert_eq!(a, DMatrix::from_row_slice(2, 3, &[0.5, 0.0, 2.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn libsvm_rejects_zero_index() {
        assert!(parse_libsvm("1 0:1\n", Path::new("x")).is_err());
        assert!(parse_libsvm("1 a:1\n", Path::new("x")).is_err());
    }

    #[test]
    fn surrogate_shape_and_determinism() {
        let (a, b) = make_surrogate_dataset(40, 12, 3, 1).unwrap();
        assert_eq!(a.shape(), (40, 12));
        assert!(b.iter().all(|&v| v == 1.0 || v == -1.0));
        let (a2, b2) = make_surrogate_dataset(40, 12, 3, 1).unwrap();
        assert_eq!((a, b), (a2, b2));
        assert!(make_surrogate_dataset(4, 2, 3, 1).is_err());
    }

    #[test]
    fn libsvm_round_trip() {
        let dir = std::env::temp_dir().join(format!("gna-dataset-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.svm");
        let (a, b) = make_surrogate_dataset(7, 5, 2, 3).unwrap();
        write_libsvm(&path, &a, &b).unwrap();
        let (a2, b2) = read_libsvm(&path).unwrap();
        fs::remove_dir_all(&dir).unwrap();
        assert_eq!((a, b), (a2, b2));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_dense(Path::new("/nonexistent/a.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/a.txt"));
    }
}
