//! Discrete memoryless MAC with two binary covert inputs and one non-covert
//! input of arbitrary finite alphabet.
//!
//! Both transition matrices store one row per input triple `(x1, x2, x3)`
//! in lexicographic order, `x1` most significant:
//! `(0,0,0), (0,0,1), ..., (1,1,|X3|-1)`. The covert symbol `0` is the
//! off-symbol.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row sums accepted from user input.
pub const INPUT_ROW_TOL: f64 = 1e-9;
/// Row-sum tolerance for channels constructed in code.
pub const ROW_TOL: f64 = 1e-12;

/// Which receiver a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Legitimate receiver.
    Y,
    /// Warden.
    Z,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Y => f.write_str("Y"),
            Side::Z => f.write_str("Z"),
        }
    }
}

/// On-disk layout of a channel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChannelFile {
    x3_size: usize,
    y_size: usize,
    z_size: usize,
    gamma_y: Vec<Vec<f64>>,
    gamma_z: Vec<Vec<f64>>,
}

/// A validated channel pair `(Γ_Y, Γ_Z)`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmc {
    x3_size: usize,
    y_size: usize,
    z_size: usize,
    gamma_y: Vec<Vec<f64>>,
    gamma_z: Vec<Vec<f64>>,
    ac_violations: Vec<usize>,
}

impl Dmc {
    /// Builds a channel from row-major matrices, validating shapes and row sums.
    ///
    /// Rows are accepted if they sum to one within [`INPUT_ROW_TOL`]. Entries
    /// are kept verbatim so that a load/save cycle is bit-exact.
    pub fn new(x3_size: usize, gamma_y: Vec<Vec<f64>>, gamma_z: Vec<Vec<f64>>) -> Result<Self> {
        let y_size = gamma_y.first().map_or(0, Vec::len);
        let z_size = gamma_z.first().map_or(0, Vec::len);
        Self::from_parts(x3_size, y_size, z_size, gamma_y, gamma_z)
    }

    fn from_parts(
        x3_size: usize,
        y_size: usize,
        z_size: usize,
        gamma_y: Vec<Vec<f64>>,
        gamma_z: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if x3_size == 0 || y_size == 0 || z_size == 0 {
            return Err(Error::Dimension(format!(
                "alphabet sizes must be positive (x3={x3_size}, y={y_size}, z={z_size})"
            )));
        }
        let rows = 4 * x3_size;
        check_matrix("gamma_y", &gamma_y, rows, y_size)?;
        check_matrix("gamma_z", &gamma_z, rows, z_size)?;

        let mut dmc = Dmc {
            x3_size,
            y_size,
            z_size,
            gamma_y,
            gamma_z,
            ac_violations: Vec::new(),
        };
        dmc.ac_violations = (0..x3_size)
            .filter(|&x3| !dmc.absolutely_continuous_at(x3))
            .collect();
        Ok(dmc)
    }

    /// The example channel shipped with the crate
    /// (`data/reference_channel.toml`): binary `X3`, six-letter `Y` and `Z`.
    pub fn reference() -> Self {
        Self::from_toml_str(include_str!("../data/reference_channel.toml"))
            .expect("bundled reference channel is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ChannelFile = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_parts(file.x3_size, file.y_size, file.z_size, file.gamma_y, file.gamma_z)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ChannelFile {
            x3_size: self.x3_size,
            y_size: self.y_size,
            z_size: self.z_size,
            gamma_y: self.gamma_y.clone(),
            gamma_z: self.gamma_z.clone(),
        };
        toml::to_string(&file).expect("channel serializes")
    }

    /// Short content hash over the canonical serialization.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn x3_size(&self) -> usize {
        self.x3_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn z_size(&self) -> usize {
        self.z_size
    }

    pub fn output_size(&self, side: Side) -> usize {
        match side {
            Side::Y => self.y_size,
            Side::Z => self.z_size,
        }
    }

    pub fn matrix(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::Y => &self.gamma_y,
            Side::Z => &self.gamma_z,
        }
    }

    /// Lexicographic row index of `(x1, x2, x3)`.
    #[inline]
    pub fn row_index(&self, x1: u8, x2: u8, x3: usize) -> usize {
        usize::from(x1) * 2 * self.x3_size + usize::from(x2) * self.x3_size + x3
    }

    /// Checked row lookup.
    pub fn row(&self, side: Side, x1: u8, x2: u8, x3: usize) -> Result<&[f64]> {
        if x1 > 1 || x2 > 1 {
            return Err(Error::OutOfRange(format!(
                "covert inputs are binary, got ({x1}, {x2})"
            )));
        }
        if x3 >= self.x3_size {
            return Err(Error::OutOfRange(format!(
                "x3={x3} not in alphabet of size {}",
                self.x3_size
            )));
        }
        Ok(self.row_unchecked(side, x1, x2, x3))
    }

    /// Row lookup for indices already known to be in range.
    #[inline]
    pub fn row_unchecked(&self, side: Side, x1: u8, x2: u8, x3: usize) -> &[f64] {
        &self.matrix(side)[self.row_index(x1, x2, x3)]
    }

    /// Symbols `x3` where `Γ_Z(·|1,0,x3)` or `Γ_Z(·|0,1,x3)` puts mass outside
    /// the support of `Γ_Z(·|0,0,x3)`.
    pub fn ac_violations(&self) -> &[usize] {
        &self.ac_violations
    }

    pub fn is_absolutely_continuous(&self, x3: usize) -> bool {
        !self.ac_violations.contains(&x3)
    }

    fn absolutely_continuous_at(&self, x3: usize) -> bool {
        let base = self.row_unchecked(Side::Z, 0, 0, x3);
        let on1 = self.row_unchecked(Side::Z, 1, 0, x3);
        let on2 = self.row_unchecked(Side::Z, 0, 1, x3);
        base.iter()
            .zip(on1.iter().zip(on2))
            .all(|(&b, (&a, &c))| b > 0.0 || (a == 0.0 && c == 0.0))
    }
}

/// Reads and validates a channel file.
pub fn load_channel(path: impl AsRef<Path>) -> Result<Dmc> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Dmc::from_toml_str(&text)
}

/// Writes a channel in the same format [`load_channel`] reads.
pub fn save_channel(dmc: &Dmc, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dmc.to_toml_string()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_matrix(name: &'static str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::Dimension(format!(
            "{name} has {} rows, expected 4 * x3_size = {rows}",
            m.len()
        )));
    }
    for (r, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Dimension(format!(
                "{name} row {r} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEntry {
                    matrix: name,
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > INPUT_ROW_TOL {
            return Err(Error::RowSum {
                matrix: name,
                row: r,
                sum,
                tol: INPUT_ROW_TOL,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_rows(rows: usize, cols: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0 / cols as f64; cols]; rows]
    }

    #[test]
    fn reference_dimensions() {
        let d = Dmc::reference();
        assert_eq!((d.x3_size(), d.y_size(), d.z_size()), (2, 6, 6));
        assert!(d.ac_violations().is_empty());
    }

    #[test]
    fn reference_rows() {
        let d = Dmc::reference();
        assert_eq!(
            d.row(Side::Z, 1, 0, 0).unwrap(),
            &[0.01, 0.12, 0.19, 0.15, 0.19, 0.34]
        );
        assert_eq!(
            d.row(Side::Y, 0, 0, 0).unwrap(),
            &[0.28, 0.26, 0.02, 0.01, 0.18, 0.25]
        );
    }

    #[test]
    fn row_index_is_bijection() {
        let d = Dmc::reference();
        let mut seen = vec![false; 4 * d.x3_size()];
        for x1 in 0..2u8 {
            for x2 in 0..2u8 {
                for x3 in 0..d.x3_size() {
                    let i = d.row_index(x1, x2, x3);
                    assert!(!seen[i]);
                    seen[i] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn singleton_x3() {
        let gy: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let mut r = vec![0.0; 4];
                r[i] = 1.0;
                r
            })
            .collect();
        let d = Dmc::new(1, gy, uniform_rows(4, 3)).unwrap();
        assert_eq!(d.row(Side::Y, 1, 0, 0).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.row(Side::Y, 0, 1, 0).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_rows() {
        let d = Dmc::reference();
        assert!(matches!(d.row(Side::Y, 0, 0, 2), Err(Error::OutOfRange(_))));
        assert!(matches!(d.row(Side::Z, 2, 0, 0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn bad_row_sum() {
        let mut gy = uniform_rows(8, 2);
        gy[3] = vec![0.5, 0.4];
        let err = Dmc::new(2, gy, uniform_rows(8, 2)).unwrap_err();
        assert!(matches!(err, Error::RowSum { row: 3, .. }));
    }

    #[test]
    fn tolerates_hand_typed_rounding() {
        let mut gy = uniform_rows(8, 2);
        gy[0] = vec![0.3, 0.7 + 5e-10];
        assert!(Dmc::new(2, gy, uniform_rows(8, 2)).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            Dmc::new(2, uniform_rows(7, 2), uniform_rows(8, 2)),
            Err(Error::Dimension(_))
        ));
        let mut gz = uniform_rows(8, 3);
        gz[5] = vec![0.5, 0.5];
        assert!(matches!(
            Dmc::new(2, uniform_rows(8, 2), gz),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn negative_entry_rejected() {
        let mut gy = uniform_rows(4, 2);
        gy[1] = vec![1.5, -0.5];
        assert!(matches!(
            Dmc::new(1, gy, uniform_rows(4, 2)),
            Err(Error::InvalidEntry { .. })
        ));
    }

    #[test]
    fn support_mismatch_recorded() {
        let mut gz = uniform_rows(8, 3);
        gz[0] = vec![1.0, 0.0, 0.0]; // (0,0,0)
        gz[4] = vec![0.0, 0.0, 1.0]; // (1,0,0)
        let d = Dmc::new(2, uniform_rows(8, 3), gz).unwrap();
        assert_eq!(d.ac_violations(), &[0]);
        assert!(d.is_absolutely_continuous(1));
    }

    #[test]
    fn parse_error() {
        assert!(matches!(
            Dmc::from_toml_str("x3_size = \"two\""),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let d = Dmc::reference();
        let back = Dmc::from_toml_str(&d.to_toml_string()).unwrap();
        assert_eq!(d, back);
        assert_eq!(d.content_hash(), back.content_hash());
    }
}
