//! Derivative-free parameter search: seeded uniform random search and
//! exhaustive grid search. Both keep the full evaluation history.
//!
//! Candidates are generated up front in a fixed order, evaluated (possibly in
//! parallel), and reduced by candidate index, so the result never depends on
//! scheduling. Ties keep the earlier candidate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub low: f64,
    pub high: f64,
    /// Whether `high` itself may be sampled. `low` is always included.
    pub upper_inclusive: bool,
}

impl Dimension {
    pub fn half_open(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_string(),
            low,
            high,
            upper_inclusive: false,
        }
    }

    pub fn closed(name: &str, low: f64, high: f64) -> Self {
        Self {
            upper_inclusive: true,
            ..Self::half_open(name, low, high)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && (v < self.high || (self.upper_inclusive && v == self.high))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.upper_inclusive {
            rng.random_range(self.low..=self.high)
        } else {
            let u: f64 = rng.random();
            let v = self.low + (self.high - self.low) * u;
            if v >= self.high {
                self.high.next_down()
            } else {
                v
            }
        }
    }

    /// `k` evenly spaced values. Closed dimensions include both ends; for
    /// half-open ones the step is `(high − low)/k` so `high` is never hit.
    fn grid(&self, k: usize) -> Vec<f64> {
        if k == 1 {
            return vec![self.low];
        }
        let span = self.high - self.low;
        let step = if self.upper_inclusive {
            span / (k - 1) as f64
        } else {
            span / k as f64
        };
        (0..k)
            .map(|i| {
                if self.upper_inclusive && i == k - 1 {
                    self.high
                } else {
                    self.low + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("space", "no dimensions"));
        }
        for d in &dims {
            if !(d.low.is_finite() && d.high.is_finite() && d.low < d.high) {
                return Err(Error::invalid(
                    "space",
                    format!("dimension `{}` needs finite low < high, got [{}, {}]", d.name, d.low, d.high),
                ));
            }
        }
        Ok(Self { dims })
    }

    /// Alphas in [0.7, 1), threshold in [0, 5e-4).
    pub fn srmac_default() -> Self {
        Self::srmac_with_threshold(5e-4)
    }

    pub fn srmac_with_threshold(max_threshold: f64) -> Self {
        Self {
            dims: vec![
                Dimension::half_open("alpha_fast", 0.7, 1.0),
                Dimension::half_open("alpha_slow", 0.7, 1.0),
                Dimension::half_open("alpha_cross", 0.7, 1.0),
                Dimension::half_open("threshold", 0.0, max_threshold),
            ],
        }
    }

    /// W1 in [51, 111] ms, W2 in [545, 695] ms, β in [0, 0.1].
    pub fn terma_default() -> Self {
        Self {
            dims: vec![
                Dimension::closed("w1_ms", 51.0, 111.0),
                Dimension::closed("w2_ms", 545.0, 695.0),
                Dimension::closed("beta", 0.0, 0.1),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len() && self.dims.iter().zip(point).all(|(d, &v)| d.contains(v))
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// 1-based evaluation number.
    pub ofe_index: usize,
    pub params: Vec<f64>,
    pub fitness: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    /// 1-based evaluation number of the best candidate.
    pub best_ofe: usize,
    pub history: Vec<HistoryEntry>,
}

impl SearchResult {
    fn from_evaluations(candidates: Vec<Vec<f64>>, fitness: Vec<f64>) -> Self {
        let mut best = 0;
        let history: Vec<HistoryEntry> = candidates
            .into_iter()
            .zip(&fitness)
            .enumerate()
            .map(|(i, (params, &f))| {
                if f > fitness[best] {
                    best = i;
                }
                HistoryEntry {
                    ofe_index: i + 1,
                    params,
                    fitness: f,
                    best_so_far: fitness[best],
                }
            })
            .collect();
        let entry = &history[best];
        Self {
            best_params: entry.params.clone(),
            best_fitness: entry.fitness,
            best_ofe: entry.ofe_index,
            history,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.history.len()
    }

    /// Best candidate among the first `ofe` evaluations.
    pub fn best_within(&self, ofe: usize) -> Option<&HistoryEntry> {
        let prefix = &self.history[..ofe.min(self.history.len())];
        let mut best: Option<&HistoryEntry> = None;
        for e in prefix {
            if best.is_none_or(|b| e.fitness > b.fitness) {
                best = Some(e);
            }
        }
        best
    }

    /// CSV with columns `ofe_index,fitness,best_so_far`.
    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ofe_index", "fitness", "best_so_far"])?;
        for e in &self.history {
            out.write_record([e.ofe_index.to_string(), e.fitness.to_string(), e.best_so_far.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }
}

fn evaluate<F>(candidates: &[Vec<f64>], fitness: &F, exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let check = |c: &Vec<f64>| -> Result<f64> {
        let f = fitness(c)?;
        if f.is_nan() {
            return Err(Error::invalid("fitness", format!("NaN fitness for {c:?}")));
        }
        Ok(f)
    };
    match exec {
        Execution::Serial => candidates.iter().map(check).collect(),
        Execution::Parallel => candidates.par_iter().map(check).collect(),
    }
}

/// The `budget` candidates a random search with `seed` will evaluate.
pub fn random_candidates(space: &SearchSpace, budget: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget)
        .map(|_| space.dims.iter().map(|d| d.sample(&mut rng)).collect())
        .collect()
}

pub fn random_search<F>(space: &SearchSpace, budget: usize, seed: u64, fitness: F, exec: Execution) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if budget == 0 {
        return Err(Error::invalid("budget", "need at least one evaluation"));
    }
    let candidates = random_candidates(space, budget, seed);
    let f = evaluate(&candidates, &fitness, exec)?;
    Ok(SearchResult::from_evaluations(candidates, f))
}

/// Cartesian product in lexicographic order (last dimension varies fastest).
pub fn grid_points(space: &SearchSpace, points_per_dim: usize) -> Result<Vec<Vec<f64>>> {
    if points_per_dim == 0 {
        return Err(Error::invalid("points_per_dim", "must be positive"));
    }
    let axes: Vec<Vec<f64>> = space.dims.iter().map(|d| d.grid(points_per_dim)).collect();
    let mut points = vec![Vec::with_capacity(axes.len())];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

pub fn grid_search<F>(space: &SearchSpace, points_per_dim: usize, fitness: F, exec: Execution) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let candidates = grid_points(space, points_per_dim)?;
    let f = evaluate(&candidates, &fitness, exec)?;
    Ok(SearchResult::from_evaluations(candidates, f))
}
