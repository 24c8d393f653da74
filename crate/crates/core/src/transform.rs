//! Per-dimension normal-score transforms (Gaussian anamorphosis).
//!
//! Each dimension gets a smoothed CDF estimate `F` from a Gaussian kernel
//! mixture centred on the sample, tabulated on a uniform grid. The forward map
//! is `z = Phi^-1(F(x))`; forward and inverse both interpolate the same
//! `(x, z)` table piecewise-linearly, so they are exact inverses of each other
//! up to rounding. Outside the grid the latent coordinate is extended linearly
//! with slope `1 / s`, where `s` is the standard deviation of the kernel
//! mixture, so far tails behave like the Gaussian fit of the sample.

use nalgebra::DMatrix;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::parallel;

/// Grid resolution of a fitted table.
pub const GRID_POINTS: usize = 512;

/// The grid spans the sample range padded by this many bandwidths on each side.
pub const GRID_PAD_BANDWIDTHS: f64 = 4.0;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BandwidthRule {
    /// `1.06 * std * m^(-1/5)`
    #[default]
    Silverman,
    Fixed(f64),
}

impl BandwidthRule {
    fn bandwidth(&self, sorted: &[f64]) -> f64 {
        match *self {
            BandwidthRule::Silverman => {
                let m = sorted.len() as f64;
                let mean = sorted.iter().sum::<f64>() / m;
                let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
                1.06 * var.sqrt() * m.powf(-0.2)
            }
            BandwidthRule::Fixed(h) => h,
        }
    }
}

/// Fitted transform for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    grid: Vec<f64>,
    latent: Vec<f64>,
    cdf: Vec<f64>,
    bandwidth: f64,
    tail_scale: f64,
    sample: Vec<f64>,
}

impl ScoreTable {
    pub fn fit(sample: &[f64], rule: BandwidthRule) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "normal-score fit needs at least 2 values, got {}",
                sample.len()
            )));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("normal-score sample contains non-finite values".into()));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if lo == hi {
            return Err(Error::DegenerateSample { len: sorted.len() });
        }
        let bandwidth = rule.bandwidth(&sorted);
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
        }

        let m = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / m;
        let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let tail_scale = (var + bandwidth * bandwidth).sqrt();

        let start = lo - GRID_PAD_BANDWIDTHS * bandwidth;
        let stop = hi + GRID_PAD_BANDWIDTHS * bandwidth;
        let step = (stop - start) / (GRID_POINTS - 1) as f64;

        let full: Vec<f64> = (0..GRID_POINTS).map(|i| start + i as f64 * step).collect();
        let (above, below) = kernel_tail_sums(&sorted, bandwidth, &full);
        let mut grid = Vec::with_capacity(GRID_POINTS);
        let mut latent = Vec::with_capacity(GRID_POINTS);
        let mut cdf = Vec::with_capacity(GRID_POINTS);
        for (i, &x) in full.iter().enumerate() {
            let count = sorted.partition_point(|&s| s <= x);
            let (p, z) = cdf_and_score(sorted.len(), count, above[i], below[i]);
            // drop points where the score has stopped increasing in floating point
            if z.is_finite() && latent.last().is_none_or(|&prev| z > prev) {
                grid.push(x);
                latent.push(z);
                cdf.push(p);
            }
        }
        if grid.len() < 2 {
            return Err(Error::DegenerateSample { len: sorted.len() });
        }

        Ok(Self {
            grid,
            latent,
            cdf,
            bandwidth,
            tail_scale,
            sample: sorted,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn latent_values(&self) -> &[f64] {
        &self.latent
    }

    /// The smoothed CDF evaluated directly from the kernel mixture.
    pub fn smoothed_cdf(&self, x: f64) -> f64 {
        kde_cdf_and_score(&self.sample, self.bandwidth, x).0
    }

    /// Value mapped to the latent origin.
    pub fn median(&self) -> f64 {
        self.inverse(0.0)
    }

    /// Scale used to extend the table beyond the grid.
    pub fn tail_scale(&self) -> f64 {
        self.tail_scale
    }

    pub fn forward(&self, x: f64) -> f64 {
        let (first, last) = (0, self.grid.len() - 1);
        if x < self.grid[first] {
            self.latent[first] + (x - self.grid[first]) / self.tail_scale
        } else if x > self.grid[last] {
            self.latent[last] + (x - self.grid[last]) / self.tail_scale
        } else {
            interpolate(&self.grid, &self.latent, x)
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        let (first, last) = (0, self.latent.len() - 1);
        if z < self.latent[first] {
            self.grid[first] + (z - self.latent[first]) * self.tail_scale
        } else if z > self.latent[last] {
            self.grid[last] + (z - self.latent[last]) * self.tail_scale
        } else {
            interpolate(&self.latent, &self.grid, z)
        }
    }
}

/// Returns `(F(x), Phi^-1(F(x)))`, taking the upper tail through the complement
/// so that scores near the top of the range keep their precision.
///
/// With `t_s = Phi(-|x - s| / h)`, `A` the sum of `t_s` over samples above `x`
/// and `B` over the `p` samples at or below it, `m F = A + p - B` and
/// `m (1 - F) = B + (m - p) - A`. Each sum is accumulated outward from `x`,
/// where its terms only shrink, and stops once they fall below rounding.
fn kde_cdf_and_score(sorted: &[f64], h: f64, x: f64) -> (f64, f64) {
    let m = sorted.len();
    let p = sorted.partition_point(|&s| s <= x);
    let tail = |s: f64| normal_cdf(-(x - s).abs() / h);
    let above = outward_sum(sorted[p..].iter().map(|&s| tail(s)), p > 0);
    let below = outward_sum(sorted[..p].iter().rev().map(|&s| tail(s)), p < m);
    cdf_and_score(m, p, above, below)
}

/// `F` and `Phi^-1(F)` from the two tail sums, taking the quantile of
/// whichever of `F` and `1 - F` is smaller so both tails keep full precision.
fn cdf_and_score(m: usize, p: usize, above: f64, below: f64) -> (f64, f64) {
    let mf = m as f64;
    let lower = (p as f64 - below + above) / mf;
    if lower <= 0.5 {
        return (lower, normal_quantile(lower));
    }
    let upper = ((m - p) as f64 - above + below) / mf;
    (1.0 - upper, -normal_quantile(upper))
}

/// Kernel tails smaller than `Phi(-TAIL_CUTOFF)` are below the smallest normal `f64`.
const TAIL_CUTOFF: f64 = 37.0;

/// 4-point Gauss-Legendre rule on `[0, 1]`.
const GL_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// The normal density at the quadrature nodes of `[u, u + d]`, `[u + d, u + 2d]`, ...
/// Successive values differ by a factor `exp(-x d - d^2 / 2)`, which itself
/// shrinks by `exp(-d^2)` each step, so no exponentials are needed after setup.
struct NodeSweep {
    value: [f64; 4],
    ratio: [f64; 4],
    shrink: f64,
}

impl NodeSweep {
    fn new(u: f64, d: f64) -> Self {
        let x = GL_NODES.map(|c| u + d * c);
        Self {
            value: x.map(normal_pdf),
            ratio: x.map(|x| (-x * d - 0.5 * d * d).exp()),
            shrink: (-d * d).exp(),
        }
    }

    /// Integral of the density over the current interval divided by `|d|`; then steps on.
    fn next(&mut self) -> f64 {
        let mut sum = 0.0;
        for ((w, v), r) in GL_WEIGHTS.iter().zip(&mut self.value).zip(&mut self.ratio) {
            sum += w * *v;
            *v *= *r;
            *r *= self.shrink;
        }
        sum
    }
}

/// Tail sums of [`kde_cdf_and_score`] at every point of a uniform grid.
///
/// For each sample the kernel argument `u = (x - s) / h` advances by a fixed
/// step along the grid. Each tail `Phi(-|u|)` is evaluated exactly at the far
/// end and accumulated toward the sample by quadrature of the density, so
/// relative accuracy holds in both tails.
fn kernel_tail_sums(sorted: &[f64], h: f64, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = grid.len();
    let delta = (grid[g - 1] - grid[0]) / (g - 1) as f64 / h;
    let mut above = vec![0.0; g];
    let mut below = vec![0.0; g];
    for &s in sorted {
        let u = |i: usize| (grid[i] - s) / h;
        let split = grid.partition_point(|&x| x < s);

        // grid points below the sample, from the far tail up
        let first = grid.partition_point(|&x| (x - s) / h < -TAIL_CUTOFF);
        if first < split {
            let mut tail = normal_cdf(u(first));
            let mut sweep = NodeSweep::new(u(first), delta);
            for slot in &mut above[first..split] {
                *slot += tail;
                tail += delta * sweep.next();
            }
        }

        // grid points at or above it, from the far tail down
        let end = grid.partition_point(|&x| (x - s) / h <= TAIL_CUTOFF);
        if end > split {
            let mut tail = normal_cdf(-u(end - 1));
            let mut sweep = NodeSweep::new(u(end - 1), -delta);
            for slot in below[split..end].iter_mut().rev() {
                *slot += tail;
                tail += delta * sweep.next();
            }
        }
    }
    (above, below)
}

/// Sums non-increasing terms until they stop mattering. When `anchored`, the
/// sum is only ever used next to a count of at least one.
fn outward_sum(terms: impl Iterator<Item = f64>, anchored: bool) -> f64 {
    let floor = if anchored { 1.0 } else { 0.0 };
    let mut sum = 0.0;
    for t in terms {
        if t <= 1e-17 * (sum + floor) {
            break;
        }
        sum += t;
    }
    sum
}

/// Piecewise-linear interpolation on strictly increasing `xs`.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    let seg = xs.partition_point(|&g| g <= x).clamp(1, last) - 1;
    let (x0, x1) = (xs[seg], xs[seg + 1]);
    let (y0, y1) = (ys[seg], ys[seg + 1]);
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DimensionMap {
    Fitted(ScoreTable),
    /// Fallback for a dimension whose sample had no spread.
    Identity,
}

impl DimensionMap {
    pub fn forward(&self, x: f64) -> f64 {
        match self {
            DimensionMap::Fitted(t) => t.forward(x),
            DimensionMap::Identity => x,
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match self {
            DimensionMap::Fitted(t) => t.inverse(z),
            DimensionMap::Identity => z,
        }
    }
}

/// Independent normal-score transforms, one per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalScoreMap {
    dims: Vec<DimensionMap>,
}

impl NormalScoreMap {
    /// Fits one transform per slice in `samples`. A degenerate dimension falls
    /// back to the identity.
    pub fn fit(samples: &[Vec<f64>], rule: BandwidthRule) -> Result<Self> {
        let fitted = parallel::map_range(samples.len(), |k| fit_dimension(&samples[k], rule));
        let dims = fitted.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { dims })
    }

    /// Fits one transform per column of `rows` (members by dimensions).
    pub fn fit_columns(rows: &DMatrix<f64>, rule: BandwidthRule) -> Result<Self> {
        let fitted = parallel::map_range(rows.ncols(), |k| {
            let col: Vec<f64> = rows.column(k).iter().copied().collect();
            fit_dimension(&col, rule)
        });
        let dims = fitted.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { dims })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dimension(&self, k: usize) -> &DimensionMap {
        &self.dims[k]
    }

    pub fn identity_dimensions(&self) -> impl Iterator<Item = usize> + '_ {
        self.dims
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, DimensionMap::Identity))
            .map(|(k, _)| k)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dims.len());
        x.iter().zip(&self.dims).map(|(&v, m)| m.forward(v)).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.dims.len());
        z.iter().zip(&self.dims).map(|(&v, m)| m.inverse(v)).collect()
    }

    /// Applies the forward map to every row.
    pub fn forward_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(rows.nrows(), rows.ncols(), |j, k| self.dims[k].forward(rows[(j, k)]))
    }

    pub fn inverse_rows(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(rows.nrows(), rows.ncols(), |j, k| self.dims[k].inverse(rows[(j, k)]))
    }
}

fn fit_dimension(sample: &[f64], rule: BandwidthRule) -> Result<DimensionMap> {
    match ScoreTable::fit(sample, rule) {
        Ok(t) => Ok(DimensionMap::Fitted(t)),
        Err(Error::DegenerateSample { len }) => {
            log::warn!("degenerate sample of {len} values; using identity normal-score transform");
            Ok(DimensionMap::Identity)
        }
        Err(e) => Err(e),
    }
}
