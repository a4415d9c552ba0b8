use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid latency model: {0}")]
pub struct LatencyModelError(pub String);

/// A distribution of non-negative durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LatencyModel {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Normal, clipped at zero.
    Gaussian { mean: f64, stddev: f64 },
    /// Replays recorded values cyclically.
    Trace { values: Vec<f64> },
}

impl LatencyModel {
    pub fn constant(value: f64) -> Self {
        LatencyModel::Constant { value }
    }

    pub fn validate(&self) -> Result<(), LatencyModelError> {
        let bad = |m: &str| Err(LatencyModelError(m.to_string()));
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            LatencyModel::Constant { value } if !ok(*value) => bad("constant must be >= 0"),
            LatencyModel::Uniform { lo, hi } if !(ok(*lo) && ok(*hi) && lo <= hi) => {
                bad("uniform needs 0 <= lo <= hi")
            }
            LatencyModel::Gaussian { mean, stddev } if !(mean.is_finite() && ok(*stddev)) => {
                bad("gaussian needs finite mean and stddev >= 0")
            }
            LatencyModel::Trace { values } if values.is_empty() || !values.iter().all(|v| ok(*v)) => {
                bad("trace needs at least one value, all >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LatencyModel::Constant { value } => *value,
            LatencyModel::Uniform { lo, hi } => (lo + hi) / 2.0,
            LatencyModel::Gaussian { mean, .. } => mean.max(0.0),
            LatencyModel::Trace { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// Draws the next value from `rng`. Trace models cycle with `index`.
    pub fn sample(&self, rng: &mut impl Rng, index: u64) -> f64 {
        let v = match self {
            LatencyModel::Constant { value } => *value,
            LatencyModel::Uniform { lo, hi } => {
                if hi > lo {
                    rng.gen_range(*lo..*hi)
                } else {
                    *lo
                }
            }
            LatencyModel::Gaussian { mean, stddev } => match Normal::new(*mean, *stddev) {
                Ok(n) => n.sample(rng),
                Err(_) => *mean,
            },
            LatencyModel::Trace { values } => values[(index % values.len() as u64) as usize],
        };
        v.max(0.0)
    }

    /// A value that depends only on `(seed, index)`.
    pub fn sample_at(&self, seed: u64, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index, 0x5eed));
        self.sample(&mut rng, index)
    }

    pub fn stream(&self, seed: u64) -> LatencyStream {
        LatencyStream {
            model: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            index: 0,
        }
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatencyModel::Constant { value } => write!(f, "constant:{value}"),
            LatencyModel::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            LatencyModel::Gaussian { mean, stddev } => write!(f, "gaussian:{mean},{stddev}"),
            LatencyModel::Trace { values } => {
                let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
                write!(f, "trace:{}", v.join(","))
            }
        }
    }
}

/// Parses `constant:0.3`, `uniform:0.2,0.8`, `gaussian:1.0,0.05` or
/// `trace:0.9,1.1,1.0`. A bare number means constant.
impl FromStr for LatencyModel {
    type Err = LatencyModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, args) = s.split_once(':').unwrap_or(("constant", s));
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| LatencyModelError(format!("{s}: {e}")))?;
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(LatencyModelError(format!("{kind} takes {n} value(s)")))
            }
        };
        let model = match kind.trim() {
            "constant" => {
                arity(1)?;
                LatencyModel::Constant { value: nums[0] }
            }
            "uniform" => {
                arity(2)?;
                LatencyModel::Uniform { lo: nums[0], hi: nums[1] }
            }
            "gaussian" => {
                arity(2)?;
                LatencyModel::Gaussian {
                    mean: nums[0],
                    stddev: nums[1],
                }
            }
            "trace" => LatencyModel::Trace { values: nums },
            other => return Err(LatencyModelError(format!("unknown kind `{other}`"))),
        };
        model.validate()?;
        Ok(model)
    }
}

/// A seeded sequence of draws from one model.
#[derive(Debug, Clone)]
pub struct LatencyStream {
    model: LatencyModel,
    rng: ChaCha8Rng,
    index: u64,
}

impl LatencyStream {
    pub fn next_secs(&mut self) -> f64 {
        let v = self.model.sample(&mut self.rng, self.index);
        self.index += 1;
        v
    }

    pub fn model(&self) -> &LatencyModel {
        &self.model
    }
}

/// Derives independent seeds for per-episode, per-purpose streams.
pub fn mix_seed(seed: u64, episode: u64, stream: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = seed
        ^ episode.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
