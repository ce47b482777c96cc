//! Lorenz series generation, normalization, lagged regressor pairs,
//! chronological splits and the on-disk dataset format.

mod io;
mod lorenz;

pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_file, DatasetFile};
pub use lorenz::{rk4_step, simulate_lorenz, LorenzParams};

use crate::error::{Error, Result};

/// One regressor/output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Pair {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    /// `[y; x]`
    pub fn stacked(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.x.len() + 1);
        z.push(self.y);
        z.extend_from_slice(&self.x);
        z
    }
}

/// Affine map taking `[min, max]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / self.range()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * self.range()
    }

    /// Widths only stretch; the offset cancels.
    pub fn denormalize_width(&self, w: f64) -> f64 {
        w * self.range()
    }
}

pub fn normalize(series: &[f64]) -> Result<(Vec<f64>, Scale)> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("cannot normalize an empty series".into()));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::DegenerateRange(min));
    }
    let scale = Scale { min, max };
    Ok((series.iter().map(|&v| scale.normalize(v)).collect(), scale))
}

pub fn denormalize(series: &[f64], scale: Scale) -> Vec<f64> {
    series.iter().map(|&v| scale.denormalize(v)).collect()
}

/// Pair `k` has regressor `[s_{k−1}, …, s_{k−lags}]` and output `s_k`.
pub fn build_pairs(series: &[f64], lags: usize) -> Result<Vec<Pair>> {
    if series.len() <= lags {
        return Err(Error::TooShort {
            len: series.len(),
            lags,
        });
    }
    Ok((lags..series.len())
        .map(|k| Pair::new((1..=lags).map(|l| series[k - l]).collect(), series[k]))
        .collect())
}

/// Training, validation and test segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Pair>,
    pub validation: Vec<Pair>,
    pub test: Vec<Pair>,
}

/// Contiguous chronological segments `[0, n_train)`, then validation, then test.
pub fn split(pairs: &[Pair], n_train: usize, n_validation: usize, n_test: usize) -> Result<Split> {
    let requested = n_train + n_validation + n_test;
    if requested > pairs.len() {
        return Err(Error::InsufficientData {
            requested,
            available: pairs.len(),
        });
    }
    let (train, rest) = pairs.split_at(n_train);
    let (validation, rest) = rest.split_at(n_validation);
    Ok(Split {
        train: train.to_vec(),
        validation: validation.to_vec(),
        test: rest[..n_test].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// A normalized output series with its lagged pairs and split.
#[derive(Debug, Clone)]
pub struct SeriesDataset {
    /// Raw outputs before normalization.
    pub raw: Vec<f64>,
    pub series: Vec<f64>,
    pub scale: Scale,
    pub pairs: Vec<Pair>,
    pub split_sizes: SplitSizes,
}

impl SeriesDataset {
    pub fn from_series(raw: Vec<f64>, lags: usize, sizes: SplitSizes) -> Result<Self> {
        let (series, scale) = normalize(&raw)?;
        let pairs = build_pairs(&series, lags)?;
        split(&pairs, sizes.train, sizes.validation, sizes.test)?;
        Ok(Self {
            raw,
            series,
            scale,
            pairs,
            split_sizes: sizes,
        })
    }

    /// First state coordinate of a simulated Lorenz trajectory.
    pub fn lorenz(params: &LorenzParams, lags: usize, sizes: SplitSizes) -> Result<Self> {
        let states = simulate_lorenz(params)?;
        Self::from_series(states.iter().map(|s| s[0]).collect(), lags, sizes)
    }

    pub fn split(&self) -> Split {
        let s = self.split_sizes;
        split(&self.pairs, s.train, s.validation, s.test).expect("sizes validated at construction")
    }
}
