//! Toy 2D datasets and the energy-distance sample metric.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    TwoMoons,
    Checkerboard,
    EightGaussians,
    StdNormal,
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "two_moons" | "moons" => Ok(Self::TwoMoons),
            "checkerboard" => Ok(Self::Checkerboard),
            "eight_gaussians" | "8gaussians" => Ok(Self::EightGaussians),
            "std_normal" | "normal" => Ok(Self::StdNormal),
            _ => Err(Error::Config(format!("unknown dataset `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset2D {
    pub name: DatasetName,
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.05
}

/// Radius of the circle carrying the eight mixture centres.
pub const EIGHT_GAUSSIANS_RADIUS: f64 = 2.0;

pub fn eight_gaussian_centres() -> Vec<[f64; 2]> {
    (0..8)
        .map(|k| {
            let a = k as f64 * PI / 4.0;
            [EIGHT_GAUSSIANS_RADIUS * a.cos(), EIGHT_GAUSSIANS_RADIUS * a.sin()]
        })
        .collect()
}

impl Dataset2D {
    pub fn new(name: DatasetName, n: usize, noise: f64, seed: u64) -> Self {
        Self { name, n, noise, seed }
    }

    pub fn generate(&self) -> Result<Vec<Vec<f64>>> {
        if self.n == 0 {
            return Err(Error::Config("dataset size must be >= 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("dataset noise {} must be >= 0", self.noise)));
        }
        let mut r = rng::child(self.seed, "dataset");
        let jitter = |r: &mut rng::Rng| {
            let e: f64 = StandardNormal.sample(r);
            self.noise * e
        };
        let centres = eight_gaussian_centres();
        Ok((0..self.n)
            .map(|_| match self.name {
                DatasetName::TwoMoons => {
                    let th = r.random::<f64>() * PI;
                    let (x, y) = if r.random::<bool>() {
                        (th.cos(), th.sin())
                    } else {
                        (1.0 - th.cos(), 0.5 - th.sin())
                    };
                    vec![x + jitter(&mut r), y + jitter(&mut r)]
                }
                DatasetName::Checkerboard => {
                    let x = r.random::<f64>() * 4.0 - 2.0;
                    let shift = if r.random::<bool>() { -2.0 } else { 0.0 };
                    let y = r.random::<f64>() + shift + (x.floor().rem_euclid(2.0));
                    vec![x + jitter(&mut r), y + jitter(&mut r)]
                }
                DatasetName::EightGaussians => {
                    let c = centres[r.random_range(0..8)];
                    vec![c[0] + jitter(&mut r), c[1] + jitter(&mut r)]
                }
                DatasetName::StdNormal => {
                    let a: f64 = StandardNormal.sample(&mut r);
                    let b: f64 = StandardNormal.sample(&mut r);
                    vec![a, b]
                }
            })
            .collect())
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = a
        .par_iter()
        .map(|x| b.iter().map(|y| dist(x, y)).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// `2·E‖a-b‖ - E‖a-a'‖ - E‖b-b'‖` with every expectation taken over all
/// ordered pairs including the diagonal, so the value is never negative and
/// vanishes for identical sets.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("energy distance needs nonempty point sets".into()));
    }
    let d = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != d) {
        return Err(Error::Config("point sets have mismatched dimensions".into()));
    }
    // Both orders, so swapping the arguments is bitwise symmetric.
    let ab = 0.5 * (mean_pairwise(a, b) + mean_pairwise(b, a));
    let within = mean_pairwise(a, a) + mean_pairwise(b, b);
    Ok((2.0 * ab - within).max(0.0))
}
