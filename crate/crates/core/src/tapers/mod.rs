//! Orthonormal taper sets with per-taper weights.
//!
//! Thomson (DPSS) and sine tapers are generated natively; any other family
//! (multipeak, sine tapers with cepstrum-derived weights, ...) can be loaded
//! from CSV with [`import_tapers`].
//!
//! ```
//! use mtgd::tapers::{dpss_tapers, Weighting};
//!
//! let set = dpss_tapers(160, 4.0, 8, Weighting::Uniform).unwrap();
//! assert_eq!(set.count(), 8);
//! assert_eq!(set.len(), 160);
//! assert!(set.eigenvalues().unwrap()[0] > 0.999);
//! ```

mod tridiag;

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use tridiag::{largest_eigenpairs, SymTridiagonal};

use crate::error::{Error, Result};
use crate::export::{join_g17, read_numeric_csv, write_text};

/// Orthonormality tolerance for generated tapers.
pub const GENERATED_TOLERANCE: f64 = 1e-10;
/// Orthonormality tolerance for tapers read from files.
pub const IMPORTED_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperFamily {
    Thomson,
    Sine,
    Imported,
}

impl std::fmt::Display for TaperFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaperFamily::Thomson => "thomson",
            TaperFamily::Sine => "sine",
            TaperFamily::Imported => "imported",
        })
    }
}

/// Weighting scheme for generated DPSS tapers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Weights proportional to each taper's concentration eigenvalue.
    Eigenvalue,
}

/// N orthonormal tapers of length M (one per row) with weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperSet {
    tapers: Array2<f64>,
    weights: Vec<f64>,
    family: TaperFamily,
    eigenvalues: Option<Vec<f64>>,
    time_bandwidth: Option<f64>,
}

impl TaperSet {
    /// Validate and build a taper set. Weights are normalized to sum to 1.
    pub fn new(tapers: Array2<f64>, weights: Vec<f64>, family: TaperFamily, tolerance: f64) -> Result<Self> {
        let (n, m) = tapers.dim();
        if n == 0 {
            return Err(Error::invalid("taper set needs at least one taper"));
        }
        if m < 2 {
            return Err(Error::invalid(format!("taper length {m} is below 2")));
        }
        if weights.len() != n {
            return Err(Error::invalid(format!("{} weights for {n} tapers", weights.len())));
        }
        if tapers.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("taper values must be finite".into()));
        }
        check_orthonormal(&tapers, tolerance)?;
        let weights = normalize_weights(&weights)?;
        Ok(TaperSet {
            tapers,
            weights,
            family,
            eigenvalues: None,
            time_bandwidth: None,
        })
    }

    /// A single rectangular taper `1/sqrt(M)` with weight 1.
    pub fn rectangular(len: usize) -> Result<Self> {
        let v = 1.0 / (len as f64).sqrt();
        TaperSet::new(Array2::from_elem((1, len), v), vec![1.0], TaperFamily::Imported, GENERATED_TOLERANCE)
    }

    /// Replace the weights (normalized to sum 1; all must be non-negative).
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.count() {
            return Err(Error::invalid(format!("{} weights for {} tapers", weights.len(), self.count())));
        }
        self.weights = normalize_weights(weights)?;
        Ok(self)
    }

    /// The j-th taper alone, with weight 1.
    pub fn single(&self, j: usize) -> Result<Self> {
        if j >= self.count() {
            return Err(Error::invalid(format!("taper index {j} out of range")));
        }
        Ok(TaperSet {
            tapers: self.tapers.slice(ndarray::s![j..j + 1, ..]).to_owned(),
            weights: vec![1.0],
            family: self.family,
            eigenvalues: self.eigenvalues.as_ref().map(|e| vec![e[j]]),
            time_bandwidth: self.time_bandwidth,
        })
    }

    /// The first `n` tapers, re-weighted with the same scheme where it can be
    /// recovered (uniform or eigenvalue), otherwise renormalized.
    pub fn leading(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.count() {
            return Err(Error::invalid(format!("cannot take {n} of {} tapers", self.count())));
        }
        let weights = normalize_weights(&self.weights[..n])?;
        Ok(TaperSet {
            tapers: self.tapers.slice(ndarray::s![..n, ..]).to_owned(),
            weights,
            family: self.family,
            eigenvalues: self.eigenvalues.as_ref().map(|e| e[..n].to_vec()),
            time_bandwidth: self.time_bandwidth,
        })
    }

    pub fn tapers(&self) -> &Array2<f64> {
        &self.tapers
    }

    pub fn taper(&self, j: usize) -> ArrayView1<'_, f64> {
        self.tapers.row(j)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn family(&self) -> TaperFamily {
        self.family
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn time_bandwidth(&self) -> Option<f64> {
        self.time_bandwidth
    }

    /// Number of tapers N.
    pub fn count(&self) -> usize {
        self.tapers.nrows()
    }

    /// Taper length M.
    pub fn len(&self) -> usize {
        self.tapers.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.tapers.is_empty()
    }

    /// Largest off-diagonal |<w_i, w_j>| and largest | ||w_j|| - 1 |.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        orthonormality_error(&self.tapers)
    }
}

fn orthonormality_error(tapers: &Array2<f64>) -> (f64, f64) {
    let gram = tapers.dot(&tapers.t());
    let mut cross: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for ((i, j), &g) in gram.indexed_iter() {
        if i == j {
            norm = norm.max((g.sqrt() - 1.0).abs());
        } else {
            cross = cross.max(g.abs());
        }
    }
    (cross, norm)
}

fn check_orthonormal(tapers: &Array2<f64>, tolerance: f64) -> Result<()> {
    let (cross, norm) = orthonormality_error(tapers);
    if cross > tolerance {
        return Err(Error::InvalidData(format!(
            "tapers are not orthogonal: max |<w_i,w_j>| = {cross:e} exceeds {tolerance:e}"
        )));
    }
    if norm > tolerance {
        return Err(Error::InvalidData(format!(
            "tapers are not unit norm: max |norm - 1| = {norm:e} exceeds {tolerance:e}"
        )));
    }
    Ok(())
}

fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidData(format!("taper weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidData("taper weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Diagonal and off-diagonal of the Slepian tridiagonal matrix for length
/// `len` and half-bandwidth `w` (cycles per sample).
pub fn slepian_tridiagonal(len: usize, w: f64) -> Result<SymTridiagonal> {
    let m = len as f64;
    let c = (2.0 * PI * w).cos();
    let diag = (0..len)
        .map(|t| {
            let x = (m - 1.0 - 2.0 * t as f64) / 2.0;
            x * x * c
        })
        .collect();
    let off = (1..len).map(|t| t as f64 * (m - t as f64) / 2.0).collect();
    SymTridiagonal::new(diag, off)
}

/// Fraction of a taper's energy inside `[-w, w]`:
/// `sum_{m,n} v(m) v(n) sin(2 pi w (m-n)) / (pi (m-n))`.
pub fn concentration(taper: ArrayView1<'_, f64>, w: f64) -> f64 {
    let n = taper.len();
    let mut total = 0.0;
    for lag in 0..n {
        let r: f64 = (0..n - lag).map(|i| taper[i] * taper[i + lag]).sum();
        if lag == 0 {
            total += 2.0 * w * r;
        } else {
            let k = lag as f64;
            total += 2.0 * r * (2.0 * PI * w * k).sin() / (PI * k);
        }
    }
    total
}

/// Flip a taper so its mean is positive; zero-mean tapers get a positive
/// first non-negligible sample.
fn fix_sign(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let flip = if sum.abs() > 1e-8 * scale * (v.len() as f64).sqrt() {
        sum < 0.0
    } else {
        v.iter().find(|x| x.abs() > 1e-12 * scale).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Thomson discrete prolate spheroidal sequences.
///
/// Returns the `count` most band-concentrated sequences of length `len` for
/// time-bandwidth product `nw` (half-bandwidth `W = nw / len`).
pub fn dpss_tapers(len: usize, nw: f64, count: usize, weighting: Weighting) -> Result<TaperSet> {
    if !(nw > 0.0 && nw.is_finite()) {
        return Err(Error::invalid(format!("time-bandwidth product {nw} must be positive")));
    }
    if count == 0 {
        return Err(Error::invalid("need at least one taper"));
    }
    if len < 2 {
        return Err(Error::invalid(format!("taper length {len} is below 2")));
    }
    if count >= len {
        return Err(Error::invalid(format!("{count} tapers requested for length {len}")));
    }
    let w = nw / len as f64;
    if w >= 0.5 {
        return Err(Error::invalid(format!("half-bandwidth {w} must be below 0.5")));
    }
    if count as f64 > 2.0 * nw {
        log::warn!("{count} DPSS tapers exceed 2NW = {}; the trailing tapers are poorly concentrated", 2.0 * nw);
    }

    let t = slepian_tridiagonal(len, w)?;
    let pairs = largest_eigenpairs(&t, count)?;
    let mut rows: Vec<(f64, Vec<f64>)> = pairs
        .into_iter()
        .map(|(_, mut v)| {
            fix_sign(&mut v);
            let lambda = concentration(ArrayView1::from(&v), w);
            (lambda, v)
        })
        .collect();
    // stable sort keeps index order on ties
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));

    let eigenvalues: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let tapers = Array2::from_shape_fn((count, len), |(j, i)| rows[j].1[i]);
    let weights = match weighting {
        Weighting::Uniform => vec![1.0; count],
        Weighting::Eigenvalue => eigenvalues.clone(),
    };
    let mut set = TaperSet::new(tapers, weights, TaperFamily::Thomson, GENERATED_TOLERANCE)?;
    set.eigenvalues = Some(eigenvalues);
    set.time_bandwidth = Some(nw);
    Ok(set)
}

/// Sine tapers `sqrt(2/(M+1)) sin(pi j (t+1) / (M+1))`, `j = 1..=count`.
///
/// Weights default to uniform; pass `weights` to use an imported vector
/// (e.g. cepstrum-derived SWCE weights).
pub fn sine_tapers(len: usize, count: usize, weights: Option<&[f64]>) -> Result<TaperSet> {
    if count == 0 || count >= len {
        return Err(Error::invalid(format!("{count} sine tapers requested for length {len}")));
    }
    let m1 = (len + 1) as f64;
    let scale = (2.0 / m1).sqrt();
    let tapers = Array2::from_shape_fn((count, len), |(j, t)| {
        scale * (PI * (j + 1) as f64 * (t + 1) as f64 / m1).sin()
    });
    let weights = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; count],
    };
    TaperSet::new(tapers, weights, TaperFamily::Sine, GENERATED_TOLERANCE)
}

/// Load tapers from CSV (one taper per row) and optional weights (one value
/// per line). Missing weights default to uniform.
pub fn import_tapers(taper_path: impl AsRef<Path>, weight_path: Option<&Path>) -> Result<TaperSet> {
    let taper_path = taper_path.as_ref();
    let rows = read_numeric_csv(taper_path)?;
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidData(format!("{}: no tapers", taper_path.display())));
    }
    let m = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::InvalidData(format!(
            "{}: row {} has {} values, expected {m}",
            taper_path.display(),
            i + 1,
            r.len()
        )));
    }
    let tapers = Array2::from_shape_fn((n, m), |(j, t)| rows[j][t]);
    let weights = match weight_path {
        Some(p) => {
            let w: Vec<f64> = read_numeric_csv(p)?.into_iter().flatten().collect();
            if w.len() != n {
                return Err(Error::InvalidData(format!(
                    "{}: {} weights for {n} tapers",
                    p.display(),
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|v| **v <= 0.0) {
                return Err(Error::InvalidData(format!("{}: weight {bad} is not positive", p.display())));
            }
            w
        }
        None => vec![1.0; n],
    };
    TaperSet::new(tapers, weights, TaperFamily::Imported, IMPORTED_TOLERANCE)
}

/// Write tapers as `%.17g` CSV and, optionally, weights one per line.
pub fn write_tapers(set: &TaperSet, taper_path: impl AsRef<Path>, weight_path: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    for row in set.tapers.rows() {
        text.push_str(&join_g17(row.iter().copied()));
        text.push('\n');
    }
    write_text(taper_path, &text)?;
    if let Some(p) = weight_path {
        let mut w = String::new();
        for v in &set.weights {
            w.push_str(&crate::export::format_g17(*v));
            w.push('\n');
        }
        write_text(p, &w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slepian_matrix_two_by_two() {
        // M = 2, W = 0.25: cos(pi/2) kills the diagonal
        let t = slepian_tridiagonal(2, 0.25).unwrap();
        assert!(t.diag.iter().all(|d| d.abs() < 1e-16));
        assert_eq!(t.off, vec![0.5]);
        let (_, mut v) = largest_eigenpairs(&t, 1).unwrap().remove(0);
        fix_sign(&mut v);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-14 && (v[1] - h).abs() < 1e-14);
    }

    #[test]
    fn dpss_is_orthonormal() {
        let set = dpss_tapers(512, 4.0, 8, Weighting::Uniform).unwrap();
        let (cross, norm) = set.orthonormality_error();
        assert!(cross < 1e-10, "{cross}");
        assert!(norm < 1e-10, "{norm}");
        assert!(set.weights().iter().all(|w| (w - 0.125).abs() < 1e-15));
    }

    #[test]
    fn dpss_eigenvalues_descend_and_concentrate() {
        let set = dpss_tapers(512, 4.0, 8, Weighting::Eigenvalue).unwrap();
        let ev = set.eigenvalues().unwrap();
        assert!(ev.windows(2).all(|p| p[0] > p[1]));
        // reference ratios from scipy.signal.windows.dpss(512, 4, 8)
        let reference = [
            0.999999999706,
            0.999999972367,
            0.999998791537,
            0.999967587809,
            0.999410494316,
            0.992507721917,
            0.936664934733,
            0.698848768034,
        ];
        for (got, want) in ev.iter().zip(reference) {
            assert!((got - want).abs() < 1e-11, "{got} vs {want}");
        }
        assert!(ev[..6].iter().all(|&l| l > 0.99));
        let total: f64 = set.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dpss_sign_convention() {
        let set = dpss_tapers(64, 3.0, 5, Weighting::Uniform).unwrap();
        for j in 0..5 {
            let row = set.taper(j);
            let sum: f64 = row.sum();
            if j % 2 == 0 {
                assert!(sum > 0.0);
            } else {
                assert!(sum.abs() < 1e-10);
                assert!(row[0] > 0.0);
            }
        }
    }

    #[test]
    fn dpss_argument_errors() {
        assert!(dpss_tapers(16, 4.0, 16, Weighting::Uniform).is_err());
        assert!(dpss_tapers(16, 0.0, 2, Weighting::Uniform).is_err());
        assert!(dpss_tapers(16, -1.0, 2, Weighting::Uniform).is_err());
        assert!(dpss_tapers(16, 8.0, 2, Weighting::Uniform).is_err());
    }

    #[test]
    fn sine_taper_closed_form() {
        let set = sine_tapers(3, 1, None).unwrap();
        let row = set.taper(0);
        assert!((row[0] - 0.5).abs() < 1e-15);
        assert!((row[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((row[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sine_tapers_uniform_weights() {
        let set = sine_tapers(160, 6, None).unwrap();
        assert!(set.weights().iter().all(|w| (w - 1.0 / 6.0).abs() < 1e-15));
        assert!(sine_tapers(10, 10, None).is_err());
    }

    #[test]
    fn import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = dpss_tapers(128, 3.5, 5, Weighting::Eigenvalue).unwrap();
        let tp = dir.path().join("t.csv");
        let wp = dir.path().join("w.txt");
        write_tapers(&set, &tp, Some(&wp)).unwrap();
        let back = import_tapers(&tp, Some(&wp)).unwrap();
        assert_eq!(back.family(), TaperFamily::Imported);
        let diff = (&back.tapers - &set.tapers).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(diff < 1e-9);
        for (a, b) in back.weights().iter().zip(set.weights()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn import_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let tp = dir.path().join("t.csv");
        std::fs::write(&tp, "1,0,0,0\n1,0,0,0\n").unwrap();
        assert!(import_tapers(&tp, None).is_err());
        std::fs::write(&tp, "1,0,0,0\n0,1,0\n").unwrap();
        assert!(import_tapers(&tp, None).is_err());
        std::fs::write(&tp, "1,0,0,0\n0,1,0,0\n").unwrap();
        let wp = dir.path().join("w.txt");
        std::fs::write(&wp, "1\n0\n").unwrap();
        assert!(import_tapers(&tp, Some(&wp)).is_err());
        std::fs::write(&wp, "2\n2\n").unwrap();
        let set = import_tapers(&tp, Some(&wp)).unwrap();
        assert_eq!(set.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn subsets_keep_weights_normalized() {
        let set = dpss_tapers(64, 4.0, 8, Weighting::Eigenvalue).unwrap();
        let lead = set.leading(3).unwrap();
        assert_eq!(lead.count(), 3);
        assert!((lead.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let one = set.single(2).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        assert_eq!(one.taper(0), set.taper(2));
    }
}
