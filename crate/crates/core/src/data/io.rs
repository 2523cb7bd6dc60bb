use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Rating, RatingDataset};
use crate::error::{Error, Result};

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `user,item,rating` rows using dense indices.
pub fn write_ratings_csv(dataset: &RatingDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "user,item,rating")?;
        for t in dataset.triples() {
            writeln!(w, "{},{},{}", t.user, t.item, fmt_real(t.value))?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads a `user,item,rating` CSV. The shape is `shape` when given,
/// otherwise one past the largest index seen.
pub fn read_ratings_csv(path: &Path, shape: Option<(usize, usize)>) -> Result<RatingDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("user")) {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let user = fields[0].parse().map_err(|_| bad(format!("bad user {:?}", fields[0])))?;
        let item = fields[1].parse().map_err(|_| bad(format!("bad item {:?}", fields[1])))?;
        let value = fields[2].parse().map_err(|_| bad(format!("bad rating {:?}", fields[2])))?;
        triples.push(Rating::new(user, item, value));
    }
    if triples.is_empty() {
        return Err(Error::InvalidData(format!("{} contains no ratings", path.display())));
    }
    let (m, n) = shape.unwrap_or_else(|| {
        let m = triples.iter().map(|t| t.user).max().unwrap_or(0) + 1;
        let n = triples.iter().map(|t| t.item).max().unwrap_or(0) + 1;
        (m, n)
    });
    RatingDataset::new(m, n, triples)
}

/// One raw item id per line; blank lines and `#` comments are skipped.
pub fn read_keep_list(path: &Path) -> Result<HashSet<u64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut keep = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("bad item id {line:?}"),
        })?;
        keep.insert(id);
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let d = RatingDataset::new(
            3,
            2,
            vec![
                Rating::new(0, 1, 0.1 + 0.2),
                Rating::new(2, 0, -1.0 / 3.0),
                Rating::new(1, 1, 4.0),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_ratings_csv(&d, &path).unwrap();
        let back = read_ratings_csv(&path, Some((3, 2))).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn fmt_real_has_17_significant_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_real(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn keep_list_parses_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keep.txt");
        std::fs::write(&path, "# kept\n1\n\n42\n").unwrap();
        let keep = read_keep_list(&path).unwrap();
        assert_eq!(keep, [1u64, 42].into_iter().collect());
        std::fs::write(&path, "1\nabc\n").unwrap();
        assert!(matches!(read_keep_list(&path), Err(Error::Parse { line: 2, .. })));
    }
}
