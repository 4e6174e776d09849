//! Seeded test functions. Randomness comes from ChaCha8 seeded with a
//! 64-bit seed, so generated values are identical on every platform.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, GridFunction};
use crate::verify::io::load_function;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Independent `U[0,1)` cell values.
    UniformIid,
    /// Indicator of `{x_1 < 1/2}`.
    Step,
    /// Cell averages of `log(1/x_1)`.
    LogSingularity,
    /// Indicator of a random dyadic cube.
    Indicator,
    /// Values read from a grid file; dimension and depth come from the file.
    CustomFile(PathBuf),
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-iid" => Ok(Generator::UniformIid),
            "step" => Ok(Generator::Step),
            "log-singularity" => Ok(Generator::LogSingularity),
            "indicator" => Ok(Generator::Indicator),
            _ => match s.strip_prefix("custom-file:") {
                Some(path) if !path.is_empty() => Ok(Generator::CustomFile(path.into())),
                _ => Err(Error::UnknownGenerator(s.to_string())),
            },
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::UniformIid => write!(f, "uniform-iid"),
            Generator::Step => write!(f, "step"),
            Generator::LogSingularity => write!(f, "log-singularity"),
            Generator::Indicator => write!(f, "indicator"),
            Generator::CustomFile(p) => write!(f, "custom-file:{}", p.display()),
        }
    }
}

/// `∫_0^x log(1/t) dt = x - x log x`.
fn log_antiderivative(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x - x * x.ln()
    }
}

pub fn generate(gen: &Generator, dim: usize, depth: u32, seed: u64) -> Result<GridFunction<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match gen {
        Generator::UniformIid => {
            let n = 1usize << (dim as u32 * depth);
            GridFunction::new(dim, depth, (0..n).map(|_| rng.gen::<f64>()).collect())
        }
        Generator::Step => GridFunction::from_cells(dim, depth, |c| {
            let x: f64 = c.origin()[0];
            if x < 0.5 {
                1.0
            } else {
                0.0
            }
        }),
        Generator::LogSingularity => GridFunction::from_cells(dim, depth, |c| {
            let a: f64 = c.origin()[0];
            let b = a + c.side::<f64>();
            (log_antiderivative(b) - log_antiderivative(a)) / (b - a)
        }),
        Generator::Indicator => {
            let level = rng.gen_range(0..=depth);
            let coords: Vec<u32> = (0..dim).map(|_| rng.gen_range(0..1u32 << level)).collect();
            let cube = CubeId::new(level, &coords)?;
            GridFunction::from_cells(dim, depth, |c| if cube.contains(&c) { 1.0 } else { 0.0 })
        }
        Generator::CustomFile(path) => load_function(path),
    }
}

/// Seed of trial `i` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
