use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{read_json, write_json};

/// Relative variance floor against the global per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Rows per accumulation block; fixed so sums do not depend on threading.
const BLOCK: usize = 1024;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDoc", into = "MixtureDoc")]
pub struct GaussianMixture {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
    variance_floor: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct MixtureDoc {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    variance_floor: Vec<f64>,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidData(format!("ragged {what} matrix")));
    }
    Ok(Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("shape checked"))
}

impl From<GaussianMixture> for MixtureDoc {
    fn from(g: GaussianMixture) -> Self {
        MixtureDoc {
            weights: g.weights.to_vec(),
            means: to_rows(&g.means),
            variances: to_rows(&g.variances),
            variance_floor: g.variance_floor.to_vec(),
        }
    }
}

impl TryFrom<MixtureDoc> for GaussianMixture {
    type Error = Error;

    fn try_from(d: MixtureDoc) -> Result<Self> {
        GaussianMixture::new(
            Array1::from(d.weights),
            from_rows(&d.means, "mean")?,
            from_rows(&d.variances, "variance")?,
            Array1::from(d.variance_floor),
        )
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn blocks<'a>(features: ArrayView2<'a, f64>) -> impl IndexedParallelIterator<Item = ArrayView2<'a, f64>> {
    let t = features.nrows();
    (0..t.div_ceil(BLOCK)).into_par_iter().map(move |b| features.slice_move(s![b * BLOCK..((b + 1) * BLOCK).min(t), ..]))
}

fn check_features(features: ArrayView2<'_, f64>) -> Result<()> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(Error::InvalidData("empty feature matrix".into()));
    }
    if let Some(i) = features.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidData(format!("feature row {i} is not finite")));
    }
    Ok(())
}

impl GaussianMixture {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>, variance_floor: Array1<f64>) -> Result<Self> {
        let (c, d) = means.dim();
        if c == 0 || d == 0 {
            return Err(Error::invalid("mixture needs at least one component and dimension"));
        }
        if weights.len() != c || variances.dim() != (c, d) || variance_floor.len() != d {
            return Err(Error::invalid("mixture parameter shapes disagree"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || (weights.sum() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidData("mixture weights are not on the simplex".into()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite mixture mean".into()));
        }
        for row in variances.rows() {
            for (v, f) in row.iter().zip(&variance_floor) {
                if !(v.is_finite() && *v > 0.0 && v >= f) {
                    return Err(Error::InvalidData(format!("variance {v} below floor {f} or not positive")));
                }
            }
        }
        Ok(GaussianMixture {
            weights,
            means,
            variances,
            variance_floor,
        })
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn variances(&self) -> ArrayView2<'_, f64> {
        self.variances.view()
    }

    pub fn variance_floor(&self) -> ArrayView1<'_, f64> {
        self.variance_floor.view()
    }

    pub fn n_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn check_dim(&self, features: ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "features have dimension {}, model has {}",
                features.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `ln w_c - 0.5 * sum_d ln(2 pi var_cd)` per component.
    fn log_constants(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.variances.rows())
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>())
            .collect()
    }

    /// Per-component joint log densities `ln w_c + ln N(x | c)` into `out`.
    fn component_log_densities(&self, consts: &[f64], x: ArrayView1<'_, f64>, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mut q = 0.0;
            for ((xi, m), v) in x.iter().zip(self.means.row(c)).zip(self.variances.row(c)) {
                let d = xi - m;
                q += d * d / v;
            }
            *o = consts[c] - 0.5 * q;
        }
    }

    /// `ln p(x_t)` for every row.
    pub fn frame_log_likelihoods(&self, features: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_features(features)?;
        self.check_dim(features)?;
        let consts = self.log_constants();
        Ok(blocks(features)
            .flat_map_iter(|block| {
                let mut buf = vec![0.0; self.n_components()];
                block
                    .rows()
                    .into_iter()
                    .map(|x| {
                        self.component_log_densities(&consts, x, &mut buf);
                        log_sum_exp(&buf)
                    })
                    .collect::<Vec<_>>()
            })
            .collect())
    }

    /// Total log-likelihood `sum_t ln p(x_t)`, summed in row order.
    pub fn log_likelihood(&self, features: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(self.frame_log_likelihoods(features)?.iter().sum())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// Zeroth, first and second order statistics of one pass over the data.
struct Stats {
    n: Array1<f64>,
    f: Array2<f64>,
    s: Array2<f64>,
    ll: f64,
}

impl Stats {
    fn zeros(c: usize, d: usize) -> Self {
        Stats {
            n: Array1::zeros(c),
            f: Array2::zeros((c, d)),
            s: Array2::zeros((c, d)),
            ll: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        self.n += &other.n;
        self.f += &other.f;
        self.s += &other.s;
        self.ll += other.ll;
    }
}

fn accumulate(gmm: &GaussianMixture, features: ArrayView2<'_, f64>, second_order: bool) -> Stats {
    let (c, d) = gmm.means.dim();
    let consts = gmm.log_constants();
    let parts: Vec<Stats> = blocks(features)
        .map(|block| {
            let mut st = Stats::zeros(c, d);
            let mut buf = vec![0.0; c];
            for x in block.rows() {
                gmm.component_log_densities(&consts, x, &mut buf);
                let total = log_sum_exp(&buf);
                st.ll += total;
                for k in 0..c {
                    let g = (buf[k] - total).exp();
                    if g == 0.0 {
                        continue;
                    }
                    st.n[k] += g;
                    for (j, xj) in x.iter().enumerate() {
                        st.f[[k, j]] += g * xj;
                        if second_order {
                            st.s[[k, j]] += g * xj * xj;
                        }
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(c, d);
    for b in &parts {
        total.add(b);
    }
    total
}

fn global_floor(features: ArrayView2<'_, f64>) -> Array1<f64> {
    let var = features.var_axis(Axis(0), 0.0);
    var.mapv(|v| (VARIANCE_FLOOR * v).max(f64::MIN_POSITIVE))
}

/// Seeded k-means++ centres. Each draw is an inverse-CDF lookup with one
/// uniform variate, so duplicating every row leaves the chosen points
/// unchanged.
fn kmeans_pp(features: ArrayView2<'_, f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let t = features.nrows();
    let pick = |weights: &[f64], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if acc > target {
                return i;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(t - 1)
    };
    let mut centers = Array2::zeros((c, features.ncols()));
    let first = pick(&vec![1.0; t], rng);
    centers.row_mut(0).assign(&features.row(first));
    let dist = |x: ArrayView1<'_, f64>, m: ArrayView1<'_, f64>| x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut d2: Vec<f64> = features.rows().into_iter().map(|x| dist(x, centers.row(0))).collect();
    for k in 1..c {
        let next = if d2.iter().any(|v| *v > 0.0) {
            pick(&d2, rng)
        } else {
            pick(&vec![1.0; t], rng)
        };
        centers.row_mut(k).assign(&features.row(next));
        for (i, x) in features.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(dist(x, centers.row(k)));
        }
    }
    centers
}

/// Mixture from hard nearest-centre assignment.
fn from_centers(features: ArrayView2<'_, f64>, centers: Array2<f64>, floor: &Array1<f64>) -> GaussianMixture {
    let (c, d) = centers.dim();
    let mut n = vec![0.0; c];
    let mut f = Array2::<f64>::zeros((c, d));
    let mut s = Array2::<f64>::zeros((c, d));
    for x in features.rows() {
        let k = (0..c)
            .map(|k| (k, x.iter().zip(centers.row(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        n[k] += 1.0;
        for j in 0..d {
            f[[k, j]] += x[j];
            s[[k, j]] += x[j] * x[j];
        }
    }
    let global = features.var_axis(Axis(0), 0.0);
    let total: f64 = n.iter().sum();
    let mut means = centers;
    let mut variances = Array2::zeros((c, d));
    for k in 0..c {
        for j in 0..d {
            let v = if n[k] > 0.0 {
                let m = f[[k, j]] / n[k];
                means[[k, j]] = m;
                s[[k, j]] / n[k] - m * m
            } else {
                global[j]
            };
            variances[[k, j]] = v.max(floor[j]);
        }
    }
    let weights = Array1::from_iter(n.iter().map(|nk| nk / total));
    GaussianMixture {
        weights,
        means,
        variances,
        variance_floor: floor.clone(),
    }
}

fn maximize(prev: &GaussianMixture, st: &Stats, t: usize) -> GaussianMixture {
    let (c, d) = prev.means.dim();
    let mut next = prev.clone();
    for k in 0..c {
        let nk = st.n[k];
        next.weights[k] = nk / t as f64;
        if nk <= 0.0 {
            continue;
        }
        for j in 0..d {
            let m = st.f[[k, j]] / nk;
            next.means[[k, j]] = m;
            next.variances[[k, j]] = (st.s[[k, j]] / nk - m * m).max(prev.variance_floor[j]);
        }
    }
    let sum = next.weights.sum();
    next.weights /= sum;
    next
}

/// Result of [`train_gmm_em`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedGmm {
    pub model: GaussianMixture,
    /// Total log-likelihood of the initial model and after every iteration.
    pub log_likelihoods: Vec<f64>,
}

/// Maximum-likelihood mixture by EM from a seeded k-means++ start.
pub fn train_gmm_em(features: ArrayView2<'_, f64>, components: usize, iters: usize, seed: u64) -> Result<TrainedGmm> {
    check_features(features)?;
    let t = features.nrows();
    if components == 0 || components > t {
        return Err(Error::invalid(format!("cannot fit {components} components to {t} frames")));
    }
    if iters == 0 {
        return Err(Error::invalid("EM needs at least one iteration"));
    }
    let floor = global_floor(features);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(features, components, &mut rng);
    let mut model = from_centers(features, centers, &floor);
    let mut trace = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let st = accumulate(&model, features, true);
        trace.push(st.ll);
        model = maximize(&model, &st, t);
    }
    trace.push(model.log_likelihood(features)?);
    if let Some(i) = trace.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("EM log-likelihood diverged at iteration {i}")));
    }
    Ok(TrainedGmm { model, log_likelihoods: trace })
}

/// Means-only relevance-MAP adaptation of `ubm` towards `features`.
pub fn map_adapt(ubm: &GaussianMixture, features: ArrayView2<'_, f64>, relevance: f64) -> Result<GaussianMixture> {
    check_features(features)?;
    ubm.check_dim(features)?;
    if !(relevance > 0.0) {
        return Err(Error::invalid(format!("relevance factor {relevance} must be positive")));
    }
    let st = accumulate(ubm, features, false);
    let mut adapted = ubm.clone();
    for k in 0..ubm.n_components() {
        let nk = st.n[k];
        if nk <= 0.0 {
            continue;
        }
        let alpha = nk / (nk + relevance);
        for j in 0..ubm.dim() {
            let e = st.f[[k, j]] / nk;
            adapted.means[[k, j]] = alpha * e + (1.0 - alpha) * ubm.means[[k, j]];
        }
    }
    Ok(adapted)
}

/// Average per-frame log-likelihood ratio of `model` against `ubm`.
pub fn score_llr(model: &GaussianMixture, ubm: &GaussianMixture, features: ArrayView2<'_, f64>) -> Result<f64> {
    let a = model.frame_log_likelihoods(features)?;
    let b = ubm.frame_log_likelihoods(features)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64)
}
