//! Run summaries and their statistics.

use std::fmt;

use dmkrr_core::validation::{HeuristicResult, SearchRange};
use dmkrr_core::{EstimatorForm, KernelKind, Metric};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::ExperimentConfig;

/// A float that survives JSON: non-finite values are written as `"inf"`, `"-inf"` or `"nan"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                match v {
                    "inf" => Ok(Num(f64::INFINITY)),
                    "-inf" => Ok(Num(f64::NEG_INFINITY)),
                    "nan" => Ok(Num(f64::NAN)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.*}", p, self.0),
            None => write!(f, "{}", self.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: Num,
    /// Population standard deviation.
    pub std: Num,
    pub min: Num,
    pub max: Num,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                count: 0,
                mean: Num(f64::NAN),
                std: Num(f64::NAN),
                min: Num(f64::NAN),
                max: Num(f64::NAN),
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if mean.is_finite() {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        Self {
            count: n,
            mean: Num(mean),
            std: Num(var.sqrt()),
            min: Num(values.iter().copied().fold(f64::INFINITY, f64::min)),
            max: Num(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        }
    }

    /// `mean ± std` with two decimals; small errors switch to exponent notation.
    pub fn table_cell(&self) -> String {
        let m = self.mean.0;
        if m != 0.0 && m.abs() < 0.01 {
            format!("{:.2e} ± {:.2e}", m, self.std.0)
        } else {
            format!("{:.2} ± {:.2}", self.mean, self.std)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub index: usize,
    /// Window offset in the training trajectory, when sliced from one.
    pub start: Option<usize>,
    pub pairs: usize,
    pub heuristic: HeuristicResult,
    pub range: SearchRange,
    pub best_trial: usize,
    pub eps: f64,
    pub lambda: f64,
    pub val_score: Num,
    pub ok_trials: usize,
    pub diverged_trials: usize,
    pub failed_trials: usize,
    pub solve_residual: Num,
    pub test: Stats,
    pub test_diverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub system: String,
    pub kernel: KernelKind,
    pub form: EstimatorForm,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub val_count: usize,
    pub trials: usize,
    pub test_count: usize,
    pub test_len: usize,
    pub dt: f64,
    pub dim: usize,
    pub pca_rank: Option<usize>,
    pub validation_metric: Metric,
    pub test_metric: Metric,
    /// Statistics of the per-subset mean test scores.
    pub test: Stats,
    /// Statistics of all test scores pooled over subsets.
    pub segments: Stats,
    pub table: String,
    pub subsets: Vec<SubsetSummary>,
    /// The config with `output_dir` cleared.
    pub config: ExperimentConfig,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trips_non_finite() {
        for v in [1.5, -0.0, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&Num(v)).unwrap();
            let back: Num = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits(), "{s}");
        }
        let s = serde_json::to_string(&Num(f64::NAN)).unwrap();
        assert_eq!(s, "\"nan\"");
        assert!(serde_json::from_str::<Num>("\"big\"").is_err());
    }

    #[test]
    fn population_stats() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean.0, 2.5);
        assert!((s.std.0 - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.min.0, s.max.0), (1.0, 4.0));
        assert_eq!(s.table_cell(), "2.50 ± 1.12");
        assert_eq!(Stats::of(&[1e-4, 3e-4]).table_cell(), "2.00e-4 ± 1.00e-4");
        let s = Stats::of(&[1.0, f64::INFINITY]);
        assert!(s.mean.0.is_infinite() && s.std.0.is_nan());
    }
}
