//! Brute-force ground truth at tiny scale.
//!
//! For discrete marks and a horizon of at most four steps, the joint law of
//! the path is a finite tree: each node fixes the realized mark totals so
//! far, which pin `lambda_t` exactly; branches weight truncated-Poisson
//! count probabilities times multinomial mark-composition probabilities.
//! Aggregating leaves by the total per-atom event counts yields the exact
//! laws of both terminal statistics, with the probability excluded by the
//! Poisson truncation reported rather than renormalized, so the result is an
//! under-approximation with a certified gap.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{MarkDistribution, ModelParams};
use crate::numeric::{CompensatedSum, compensated_sum};
use crate::simulate::{simulate_path, SimulationConfig};

/// Enumeration horizon cap; the state space grows like (z_cap * atoms)^T.
pub const MAX_HORIZON: usize = 4;
/// Per-step count cap.
pub const MAX_COUNT_CAP: u64 = 12;
/// Maximum admissible truncation mass.
pub const TRUNCATION_MASS_CAP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("enumeration horizon must lie in 1..={MAX_HORIZON}, got {0}")]
    HorizonOutOfRange(usize),
    #[error("per-step count cap must lie in 1..={MAX_COUNT_CAP}, got {0}")]
    CountCapOutOfRange(u64),
    #[error("enumeration needs discrete marks (constant or finite table)")]
    ContinuousMarks,
    #[error("truncation mass {mass:e} exceeds {cap:e}; raise the count cap")]
    TruncationTooCoarse { mass: f64, cap: f64 },
    #[error("crosscheck needs at least one Monte Carlo path")]
    NoMonteCarloPaths,
}

/// Exact law of the terminal event count.
#[derive(Debug, Clone, Serialize)]
pub struct CountDistribution {
    /// (value, probability), sorted by value; probabilities sum to
    /// 1 - truncation_mass.
    pub probabilities: Vec<(u64, f64)>,
    pub truncation_mass: f64,
}

/// Exact law of the terminal mark total.
#[derive(Debug, Clone, Serialize)]
pub struct MarkSumDistribution {
    pub probabilities: Vec<(f64, f64)>,
    pub truncation_mass: f64,
}

impl CountDistribution {
    pub fn mean(&self) -> f64 {
        compensated_sum(self.probabilities.iter().map(|&(k, p)| k as f64 * p))
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.probabilities.iter().map(|&(_, p)| p))
    }
}

impl MarkSumDistribution {
    pub fn mean(&self) -> f64 {
        compensated_sum(self.probabilities.iter().map(|&(v, p)| v * p))
    }
}

/// Both terminal laws from one enumeration pass.
#[derive(Debug, Clone, Serialize)]
pub struct EnumeratedLaws {
    pub counts: CountDistribution,
    pub mark_sums: MarkSumDistribution,
}

// One mark composition of a step count z: its multinomial probability
// weight, the mark total it contributes, and the per-atom event counts.
struct Composition {
    weight: f64,
    mark_sum: f64,
    atom_counts: Vec<u32>,
}

fn mark_atoms(marks: &MarkDistribution) -> Option<Vec<(f64, f64)>> {
    match marks {
        MarkDistribution::Constant { value } => Some(vec![(*value, 1.0)]),
        MarkDistribution::DiscreteTable { atoms } => Some(atoms.clone()),
        MarkDistribution::Exponential { .. } => None,
    }
}

// All compositions of z events over the atoms, weight = z!/(prod c!) prod p^c.
fn compositions_for(z: u64, atoms: &[(f64, f64)], factorials: &[f64]) -> Vec<Composition> {
    let mut out = Vec::new();
    let mut counts = vec![0u32; atoms.len()];
    fn rec(
        atom: usize,
        remaining: u64,
        counts: &mut Vec<u32>,
        atoms: &[(f64, f64)],
        factorials: &[f64],
        out: &mut Vec<Composition>,
    ) {
        if atom + 1 == atoms.len() {
            counts[atom] = remaining as u32;
            let mut weight = factorials[counts.iter().map(|&c| c as usize).sum::<usize>()];
            let mut mark_sum = 0.0;
            for (i, &(value, prob)) in atoms.iter().enumerate() {
                let c = counts[i];
                weight *= prob.powi(c as i32) / factorials[c as usize];
                mark_sum += c as f64 * value;
            }
            out.push(Composition {
                weight,
                mark_sum,
                atom_counts: counts.clone(),
            });
            return;
        }
        for c in 0..=remaining {
            counts[atom] = c as u32;
            rec(atom + 1, remaining - c, counts, atoms, factorials, out);
        }
    }
    rec(0, z, &mut counts, atoms, factorials, &mut out);
    out
}

struct Enumerator<'a> {
    params: &'a ModelParams,
    horizon: usize,
    z_cap: u64,
    // compositions indexed by step count
    compositions: Vec<Vec<Composition>>,
    // leaf accumulators keyed by total per-atom counts
    leaves: BTreeMap<Vec<u32>, CompensatedSum>,
    truncation: CompensatedSum,
}

impl Enumerator<'_> {
    fn run(&mut self) {
        let mut history = Vec::with_capacity(self.horizon);
        let mut totals = vec![0u32; self.compositions[0][0].atom_counts.len()];
        self.step(0, 1.0, &mut history, &mut totals);
    }

    fn step(&mut self, depth: usize, prob: f64, history: &mut Vec<f64>, totals: &mut Vec<u32>) {
        if depth == self.horizon {
            self.leaves
                .entry(totals.clone())
                .or_insert_with(CompensatedSum::new)
                .add(prob);
            return;
        }
        // lambda from the realized history, newest lag first
        let kernel = self.params.kernel();
        let mut lambda = self.params.nu();
        for s in 1..=depth {
            lambda += kernel.value(s) * history[depth - s];
        }
        let mut pmf = (-lambda).exp();
        let mut cdf = 0.0;
        for z in 0..=self.z_cap {
            if z > 0 {
                pmf *= lambda / z as f64;
            }
            cdf += pmf;
            for comp_index in 0..self.compositions[z as usize].len() {
                let (weight, mark_sum) = {
                    let comp = &self.compositions[z as usize][comp_index];
                    for (total, delta) in totals.iter_mut().zip(&comp.atom_counts) {
                        *total += delta;
                    }
                    (comp.weight, comp.mark_sum)
                };
                history.push(mark_sum);
                self.step(depth + 1, prob * pmf * weight, history, totals);
                history.pop();
                let comp = &self.compositions[z as usize][comp_index];
                for (total, delta) in totals.iter_mut().zip(&comp.atom_counts) {
                    *total -= delta;
                }
            }
        }
        self.truncation.add(prob * (1.0 - cdf).max(0.0));
    }
}

/// Exhaustive enumeration of the terminal laws.
///
/// `z_cap` truncates each step's Poisson support; the excluded probability
/// is returned, and the call fails when it exceeds
/// [`TRUNCATION_MASS_CAP`].
pub fn enumerate_distribution(
    params: &ModelParams,
    horizon: usize,
    z_cap: u64,
) -> Result<EnumeratedLaws, OracleError> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(OracleError::HorizonOutOfRange(horizon));
    }
    if z_cap == 0 || z_cap > MAX_COUNT_CAP {
        return Err(OracleError::CountCapOutOfRange(z_cap));
    }
    let atoms = mark_atoms(params.marks()).ok_or(OracleError::ContinuousMarks)?;

    let max_events = z_cap as usize * horizon;
    let mut factorials = vec![1.0f64; max_events + 1];
    for k in 1..=max_events {
        factorials[k] = factorials[k - 1] * k as f64;
    }
    let compositions = (0..=z_cap)
        .map(|z| compositions_for(z, &atoms, &factorials))
        .collect();

    let mut enumerator = Enumerator {
        params,
        horizon,
        z_cap,
        compositions,
        leaves: BTreeMap::new(),
        truncation: CompensatedSum::new(),
    };
    enumerator.run();

    let truncation_mass = enumerator.truncation.value();
    if truncation_mass >= TRUNCATION_MASS_CAP {
        return Err(OracleError::TruncationTooCoarse {
            mass: truncation_mass,
            cap: TRUNCATION_MASS_CAP,
        });
    }

    let mut count_law: BTreeMap<u64, CompensatedSum> = BTreeMap::new();
    let mut mark_law: BTreeMap<u64, CompensatedSum> = BTreeMap::new();
    for (atom_counts, prob) in &enumerator.leaves {
        let total: u64 = atom_counts.iter().map(|&c| c as u64).sum();
        let mark_sum = compensated_sum(
            atom_counts
                .iter()
                .zip(&atoms)
                .map(|(&c, &(value, _))| c as f64 * value),
        );
        count_law
            .entry(total)
            .or_insert_with(CompensatedSum::new)
            .add(prob.value());
        mark_law
            .entry(mark_sum.to_bits())
            .or_insert_with(CompensatedSum::new)
            .add(prob.value());
    }

    Ok(EnumeratedLaws {
        counts: CountDistribution {
            probabilities: count_law
                .into_iter()
                .map(|(k, p)| (k, p.value()))
                .collect(),
            truncation_mass,
        },
        mark_sums: MarkSumDistribution {
            probabilities: mark_law
                .into_iter()
                .map(|(bits, p)| (f64::from_bits(bits), p.value()))
                .collect(),
            truncation_mass,
        },
    })
}

/// Total-variation distance between two count laws (missing support counts
/// fully).
pub fn tv_distance(a: &CountDistribution, b: &CountDistribution) -> f64 {
    let left: BTreeMap<u64, f64> = a.probabilities.iter().copied().collect();
    let right: BTreeMap<u64, f64> = b.probabilities.iter().copied().collect();
    let keys: std::collections::BTreeSet<u64> =
        left.keys().chain(right.keys()).copied().collect();
    0.5 * compensated_sum(keys.into_iter().map(|k| {
        (left.get(&k).copied().unwrap_or(0.0) - right.get(&k).copied().unwrap_or(0.0)).abs()
    }))
}

/// Monte Carlo vs enumeration comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub tv_distance: f64,
    /// 3 sqrt(support / n): the binomial concentration budget.
    pub threshold: f64,
    pub pass: bool,
    pub enumerated_mean: f64,
    pub mc_mean: f64,
    pub n_mc: usize,
    pub truncation_mass: f64,
}

/// Simulates `n_mc` paths and compares the empirical terminal-count law
/// against the enumerated one in total variation.
pub fn oracle_crosscheck(
    params: &ModelParams,
    horizon: usize,
    z_cap: u64,
    n_mc: usize,
    master_seed: u64,
) -> Result<CrosscheckReport, OracleError> {
    if n_mc == 0 {
        return Err(OracleError::NoMonteCarloPaths);
    }
    let laws = enumerate_distribution(params, horizon, z_cap)?;
    let config = SimulationConfig::terminal_only(horizon, n_mc, master_seed);
    let tally: BTreeMap<u64, u64> = (0..n_mc as u64)
        .into_par_iter()
        .fold(BTreeMap::new, |mut map: BTreeMap<u64, u64>, index| {
            *map.entry(simulate_path(params, &config, index).terminal_count)
                .or_insert(0) += 1;
            map
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let empirical = CountDistribution {
        probabilities: tally
            .iter()
            .map(|(&k, &c)| (k, c as f64 / n_mc as f64))
            .collect(),
        truncation_mass: 0.0,
    };
    let tv = tv_distance(&laws.counts, &empirical);
    let threshold = 3.0 * (laws.counts.probabilities.len() as f64 / n_mc as f64).sqrt();
    Ok(CrosscheckReport {
        tv_distance: tv,
        threshold,
        pass: tv < threshold,
        enumerated_mean: laws.counts.mean(),
        mc_mean: empirical.mean(),
        n_mc,
        truncation_mass: laws.counts.truncation_mass,
    })
}
