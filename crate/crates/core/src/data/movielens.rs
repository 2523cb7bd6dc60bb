use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Rating, RatingDataset};
use crate::error::{Error, Result};

/// Field layout of the MovieLens rating files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovieLensFormat {
    /// `u.data`: `user<TAB>item<TAB>rating<TAB>timestamp`
    Ml100k,
    /// `ratings.dat`: `user::item::rating::timestamp`
    Ml1m,
}

impl MovieLensFormat {
    fn separator(self) -> &'static str {
        match self {
            MovieLensFormat::Ml100k => "\t",
            MovieLensFormat::Ml1m => "::",
        }
    }
}

impl FromStr for MovieLensFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml100k" | "ml-100k" => Ok(MovieLensFormat::Ml100k),
            "ml1m" | "ml-1m" => Ok(MovieLensFormat::Ml1m),
            other => Err(Error::InvalidArgument(format!(
                "unknown MovieLens format {other:?} (expected ml100k or ml1m)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MovieLensLoad {
    pub dataset: RatingDataset,
    /// Number of repeated `(user, item)` lines; the last occurrence wins.
    pub duplicates: usize,
    /// Lines dropped because their item was not on the keep-list.
    pub filtered: usize,
}

/// Loads a MovieLens rating file and re-indexes users and items densely in
/// ascending raw-id order. With `keep_items`, ratings of other items are
/// dropped before re-indexing.
pub fn load_movielens(
    path: &Path,
    format: MovieLensFormat,
    keep_items: Option<&HashSet<u64>>,
) -> Result<MovieLensLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_movielens(BufReader::new(file), path, format, keep_items)
}

pub fn parse_movielens<R: BufRead>(
    reader: R,
    path: &Path,
    format: MovieLensFormat,
    keep_items: Option<&HashSet<u64>>,
) -> Result<MovieLensLoad> {
    let sep = format.separator();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    // (user, item) -> (insertion order, rating); later lines overwrite.
    let mut entries: BTreeMap<(u64, u64), (usize, f64)> = BTreeMap::new();
    let mut duplicates = 0;
    let mut filtered = 0;
    let mut order = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() < 3 {
            return Err(parse_err(
                lineno,
                format!("expected at least 3 fields separated by {sep:?}, got {}", fields.len()),
            ));
        }
        let user: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad user id {:?}", fields[0])))?;
        let item: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad rating {:?}", fields[2])))?;
        if !rating.is_finite() {
            return Err(parse_err(lineno, format!("non-finite rating {rating}")));
        }
        if let Some(keep) = keep_items {
            if !keep.contains(&item) {
                filtered += 1;
                continue;
            }
        }
        if entries.insert((user, item), (order, rating)).is_some() {
            duplicates += 1;
        }
        order += 1;
    }
    if entries.is_empty() {
        return Err(Error::InvalidData(format!(
            "{} contains no ratings",
            path.display()
        )));
    }
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} duplicate (user, item) lines, kept the last of each",
            path.display()
        );
    }

    let users: BTreeSet<u64> = entries.keys().map(|&(u, _)| u).collect();
    let items: BTreeSet<u64> = entries.keys().map(|&(_, i)| i).collect();
    let user_labels: Vec<u64> = users.into_iter().collect();
    let item_labels: Vec<u64> = items.into_iter().collect();
    let user_index: BTreeMap<u64, usize> =
        user_labels.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<u64, usize> =
        item_labels.iter().enumerate().map(|(i, &u)| (u, i)).collect();

    let mut ordered: Vec<(usize, Rating)> = entries
        .into_iter()
        .map(|((u, i), (ord, r))| (ord, Rating::new(user_index[&u], item_index[&i], r)))
        .collect();
    ordered.sort_by_key(|&(ord, _)| ord);
    let triples = ordered.into_iter().map(|(_, t)| t).collect();

    let dataset = RatingDataset::with_labels(
        user_labels.len(),
        item_labels.len(),
        triples,
        user_labels,
        item_labels,
    )?;
    Ok(MovieLensLoad {
        dataset,
        duplicates,
        filtered,
    })
}
