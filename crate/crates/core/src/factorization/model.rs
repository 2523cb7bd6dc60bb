use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::fmt_real;
use crate::error::{Error, Result};

/// User and item factors. Stored one factor vector per column (`d × m` and
/// `d × n`) so each vector is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    users: DMatrix<f64>,
    items: DMatrix<f64>,
    lambda_u: f64,
    lambda_v: f64,
}

fn check_lambda(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {value}")));
    }
    Ok(())
}

impl FactorModel {
    /// All-zero factors.
    pub fn zeros(num_users: usize, num_items: usize, d: usize, lambda_u: f64, lambda_v: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("latent dimension must be at least 1".into()));
        }
        check_lambda("lambda_u", lambda_u)?;
        check_lambda("lambda_v", lambda_v)?;
        Ok(FactorModel {
            users: DMatrix::zeros(d, num_users),
            items: DMatrix::zeros(d, num_items),
            lambda_u,
            lambda_v,
        })
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn init(
        num_users: usize,
        num_items: usize,
        d: usize,
        lambda_u: f64,
        lambda_v: f64,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(num_users, num_items, d, lambda_u, lambda_v)?;
        if scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for x in model.users.iter_mut().chain(model.items.iter_mut()) {
                *x = rng.random_range(-scale..=scale);
            }
        }
        Ok(model)
    }

    /// From `U` (`m × d`) and `V` (`n × d`).
    pub fn from_factors(u: &DMatrix<f64>, v: &DMatrix<f64>, lambda_u: f64, lambda_v: f64) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::Shape {
                expected: format!("V with {} columns", u.ncols()),
                actual: v.ncols().to_string(),
            });
        }
        let mut model = Self::zeros(u.nrows(), v.nrows(), u.ncols(), lambda_u, lambda_v)?;
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("factor entries must be finite".into()));
        }
        model.users = u.transpose();
        model.items = v.transpose();
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.users.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.users.ncols()
    }

    pub fn num_items(&self) -> usize {
        self.items.ncols()
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn lambda_v(&self) -> f64 {
        self.lambda_v
    }

    pub fn user(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.users.as_slice()[i * d..(i + 1) * d]
    }

    pub fn item(&self, j: usize) -> &[f64] {
        let d = self.d();
        &self.items.as_slice()[j * d..(j + 1) * d]
    }

    pub fn user_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.d();
        &mut self.users.as_mut_slice()[i * d..(i + 1) * d]
    }

    pub fn item_mut(&mut self, j: usize) -> &mut [f64] {
        let d = self.d();
        &mut self.items.as_mut_slice()[j * d..(j + 1) * d]
    }

    /// `U` as an `m × d` matrix.
    pub fn user_factors(&self) -> DMatrix<f64> {
        self.users.transpose()
    }

    /// `V` as an `n × d` matrix.
    pub fn item_factors(&self) -> DMatrix<f64> {
        self.items.transpose()
    }

    pub(crate) fn user_columns_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.users
    }

    pub(crate) fn item_columns_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.items
    }

    pub fn predict(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.num_users() || j >= self.num_items() {
            return Err(Error::InvalidArgument(format!(
                "entry ({i}, {j}) outside a {}x{} model",
                self.num_users(),
                self.num_items()
            )));
        }
        Ok(self.predict_unchecked(i, j))
    }

    pub(crate) fn predict_unchecked(&self, i: usize, j: usize) -> f64 {
        self.user(i).iter().zip(self.item(j)).map(|(a, b)| a * b).sum()
    }

    /// The completed matrix `U Vᵀ`.
    pub fn completed(&self) -> DMatrix<f64> {
        self.users.transpose() * &self.items
    }

    pub fn is_finite(&self) -> bool {
        self.users.iter().chain(self.items.iter()).all(|x| x.is_finite())
    }

    /// Writes `U` and `V` as headerless CSV, one factor vector per row.
    pub fn write_csv(&self, user_path: &Path, item_path: &Path) -> Result<()> {
        write_matrix_csv(&self.users, user_path)?;
        write_matrix_csv(&self.items, item_path)
    }

    pub fn read_csv(user_path: &Path, item_path: &Path, lambda_u: f64, lambda_v: f64) -> Result<Self> {
        let u = read_matrix_csv(user_path)?;
        let v = read_matrix_csv(item_path)?;
        Self::from_factors(&u, &v, lambda_u, lambda_v)
    }
}

/// Each column of `columns` becomes one CSV row.
fn write_matrix_csv(columns: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for col in columns.column_iter() {
        let row: Vec<String> = col.iter().map(|&x| fmt_real(x)).collect();
        writeln!(out, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!("{} holds no factor rows", path.display())));
    }
    let d = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_is_an_inner_product() {
        let u = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        let v = DMatrix::from_row_slice(1, 1, &[3.0]);
        let m = FactorModel::from_factors(&u, &v, 0.0, 0.0).unwrap();
        assert_eq!(m.predict(0, 0).unwrap(), 6.0);
        assert_eq!(m.predict(1, 0).unwrap(), 0.0);
        assert!(m.predict(2, 0).is_err());
        assert!(m.predict(0, 1).is_err());
    }

    #[test]
    fn random_predictions_match_direct_sums() {
        let m = FactorModel::init(5, 7, 4, 1.0, 1.0, 1.0, 3).unwrap();
        let (u, v) = (m.user_factors(), m.item_factors());
        for i in 0..5 {
            for j in 0..7 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += u[(i, k)] * v[(j, k)];
                }
                assert!((m.predict(i, j).unwrap() - s).abs() < 1e-15);
                assert!((m.completed()[(i, j)] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = FactorModel::init(10, 12, 3, 1.0, 1.0, 0.05, 9).unwrap();
        let b = FactorModel::init(10, 12, 3, 1.0, 1.0, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.user_factors().iter().all(|x| x.abs() <= 0.05));
        assert!(FactorModel::zeros(1, 1, 0, 1.0, 1.0).is_err());
        assert!(FactorModel::zeros(1, 1, 1, -1.0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = FactorModel::init(4, 3, 2, 0.5, 2.0, 1.0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pu, pv) = (dir.path().join("u.csv"), dir.path().join("v.csv"));
        m.write_csv(&pu, &pv).unwrap();
        let back = FactorModel::read_csv(&pu, &pv, 0.5, 2.0).unwrap();
        assert_eq!(back, m);
    }
}
