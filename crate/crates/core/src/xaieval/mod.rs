//! Quantitative checks of importance scores: deletion and mutation
//! faithfulness curves, stability under small edits, and scaling of the
//! scoring stage.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numcore::{Array, Scalar};
use crate::seqdata::{mask_residues, mutate_residues, one_hot_encode, ratio_to_count, Dataset, ProteinRecord};
use crate::seqscore::{neuron_weights, normalize_scores, raw_scores, sequence_score, Target};
use crate::sptmodel::SptModel;
use crate::trainer::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Delete,
    Mutate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Top,
    Bottom,
    Random,
}

/// How many residues to perturb per record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Amount {
    /// `max(1, floor(ratio * P))`; a ratio of exactly 0 perturbs nothing.
    Ratio(f64),
    Count(usize),
}

impl Amount {
    pub fn count_for(self, len: usize) -> usize {
        match self {
            Amount::Ratio(r) if r <= 0.0 => 0,
            Amount::Ratio(r) => ratio_to_count(r, len),
            Amount::Count(k) => k,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Amount::Ratio(r) => r,
            Amount::Count(k) => k as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mode: Mode,
    pub selection: Selection,
    pub amount: Amount,
    pub rng_seed: u64,
}

/// Positions to perturb. Top and bottom break ties toward the lower index.
pub fn select_positions(scores: &[f64], selection: Selection, k: usize, rng_seed: u64) -> Result<Vec<usize>> {
    let p = scores.len();
    if k > p {
        return Err(Error::Invalid(format!("cannot select {k} of {p} positions")));
    }
    let mut idx: Vec<usize> = (0..p).collect();
    match selection {
        Selection::Top => idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))),
        Selection::Bottom => idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b))),
        Selection::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut picked = sample(&mut rng, p, k).into_vec();
            picked.sort_unstable();
            return Ok(picked);
        }
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessCurve {
    pub mode: Mode,
    pub amounts: Vec<Amount>,
    pub accuracy_top: Vec<f64>,
    pub accuracy_bottom: Vec<f64>,
    pub accuracy_random: Vec<f64>,
    pub baseline: f64,
}

impl FaithfulnessCurve {
    /// `accuracy_bottom - accuracy_top` at each amount.
    pub fn gaps(&self) -> Vec<f64> {
        self.accuracy_bottom.iter().zip(&self.accuracy_top).map(|(b, t)| b - t).collect()
    }

    /// `amount,accuracy_top,accuracy_bottom,accuracy_random,baseline`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["amount", "accuracy_top", "accuracy_bottom", "accuracy_random", "baseline"])?;
        for i in 0..self.amounts.len() {
            w.write_record([
                self.amounts[i].value().to_string(),
                self.accuracy_top[i].to_string(),
                self.accuracy_bottom[i].to_string(),
                self.accuracy_random[i].to_string(),
                self.baseline.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("curve.csv", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// Per-record scores for each record's predicted class, computed once on the
/// unperturbed input.
pub fn predicted_class_scores<T: Scalar>(m: &SptModel<T>, ds: &Dataset, block_index: Option<usize>) -> Result<Vec<Vec<f64>>> {
    ds.records
        .par_iter()
        .map(|r| sequence_score(m, r, Target::Predicted, block_index).map(|s| s.scores))
        .collect()
}

fn perturbed_correct<T: Scalar>(
    m: &SptModel<T>,
    record: &ProteinRecord,
    positions: &[usize],
    mode: Mode,
    seed: u64,
) -> Result<bool> {
    let enc = match mode {
        Mode::Delete => mask_residues(&one_hot_encode::<T>(&record.sequence), positions.iter().copied())?,
        Mode::Mutate => one_hot_encode(&mutate_residues(&record.sequence, positions.iter().copied(), seed)?),
    };
    Ok(m.predict(&enc)? == record.label)
}

fn curve<T: Scalar>(
    m: &SptModel<T>,
    ds: &Dataset,
    scores: &[Vec<f64>],
    amounts: &[Amount],
    mode: Mode,
    rng_seed: u64,
) -> Result<FaithfulnessCurve> {
    if amounts.is_empty() {
        return Err(Error::Invalid("no perturbation amounts given".into()));
    }
    if scores.len() != ds.len() {
        return Err(Error::Invalid(format!("{} score vectors for {} records", scores.len(), ds.len())));
    }
    for (r, s) in ds.records.iter().zip(scores) {
        if r.len() != s.len() {
            return Err(Error::Invalid(format!("{}: {} scores for {} residues", r.id, s.len(), r.len())));
        }
    }
    let n = ds.len() as f64;
    let baseline_hits: Vec<bool> = ds
        .records
        .par_iter()
        .map(|r| Ok(m.predict(&one_hot_encode::<T>(&r.sequence))? == r.label))
        .collect::<Result<_>>()?;
    let baseline = baseline_hits.iter().filter(|&&h| h).count() as f64 / n;

    let selections = [Selection::Top, Selection::Bottom, Selection::Random];
    let mut acc = [vec![], vec![], vec![]];
    for (ai, &amount) in amounts.iter().enumerate() {
        for (si, &sel) in selections.iter().enumerate() {
            let hits = ds
                .records
                .par_iter()
                .enumerate()
                .map(|(ri, r)| {
                    let k = amount.count_for(r.len());
                    if k == 0 {
                        return Ok(baseline_hits[ri]);
                    }
                    let seed = derive_seed(rng_seed, &[ri as u64, ai as u64, si as u64]);
                    let positions = select_positions(&scores[ri], sel, k, seed)?;
                    perturbed_correct(m, r, &positions, mode, derive_seed(seed, &[1]))
                })
                .collect::<Result<Vec<bool>>>()?;
            acc[si].push(hits.iter().filter(|&&h| h).count() as f64 / n);
        }
    }
    let [accuracy_top, accuracy_bottom, accuracy_random] = acc;
    Ok(FaithfulnessCurve {
        mode,
        amounts: amounts.to_vec(),
        accuracy_top,
        accuracy_bottom,
        accuracy_random,
        baseline,
    })
}

/// Accuracy after zeroing the top, bottom and randomly scored residues.
pub fn deletion_curve<T: Scalar>(
    m: &SptModel<T>,
    ds: &Dataset,
    scores: &[Vec<f64>],
    amounts: &[Amount],
    rng_seed: u64,
) -> Result<FaithfulnessCurve> {
    curve(m, ds, scores, amounts, Mode::Delete, rng_seed)
}

/// Accuracy after substituting the selected residues.
pub fn mutation_curve<T: Scalar>(
    m: &SptModel<T>,
    ds: &Dataset,
    scores: &[Vec<f64>],
    amounts: &[Amount],
    rng_seed: u64,
) -> Result<FaithfulnessCurve> {
    curve(m, ds, scores, amounts, Mode::Mutate, rng_seed)
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx * syy).sqrt()))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Pairs evaluated.
    pub n: usize,
    /// Pairs whose correlation is undefined (a constant score vector).
    pub n_undefined: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub correlations: Vec<Option<f64>>,
}

impl StabilityReport {
    pub fn from_correlations(correlations: Vec<Option<f64>>) -> Self {
        let mut defined: Vec<f64> = correlations.iter().flatten().copied().collect();
        defined.sort_by(f64::total_cmp);
        let q = |p: f64| (!defined.is_empty()).then(|| quantile(&defined, p));
        Self {
            n: correlations.len(),
            n_undefined: correlations.len() - defined.len(),
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
            min: defined.first().copied(),
            max: defined.last().copied(),
            correlations,
        }
    }
}

/// An original record and an edited copy of equal length.
#[derive(Clone, Debug)]
pub struct StabilityPair {
    pub original: ProteinRecord,
    pub perturbed: ProteinRecord,
}

impl StabilityPair {
    /// Positions where the two sequences differ.
    pub fn changed(&self) -> Vec<usize> {
        (0..self.original.len())
            .filter(|&j| self.original.sequence[j] != self.perturbed.sequence[j])
            .collect()
    }
}

/// `n` pairs, each a seeded single-residue substitution of a seeded record.
pub fn single_substitution_pairs(ds: &Dataset, n: usize, rng_seed: u64) -> Result<Vec<StabilityPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|i| {
            let r = &ds.records[rng.random_range(0..ds.len())];
            let pos = rng.random_range(0..r.len());
            let mut perturbed = r.clone();
            perturbed.sequence = mutate_residues(&r.sequence, [pos], derive_seed(rng_seed, &[i as u64]))?;
            perturbed.id = format!("{}~{pos}", r.id);
            Ok(StabilityPair {
                original: r.clone(),
                perturbed,
            })
        })
        .collect()
}

/// Rank correlation between the scores of each pair, over positions not
/// edited. Both members are explained for the original's predicted class.
pub fn stability_report<T: Scalar>(m: &SptModel<T>, pairs: &[StabilityPair], block_index: Option<usize>) -> Result<StabilityReport> {
    let correlations = pairs
        .par_iter()
        .map(|pair| {
            if pair.original.len() != pair.perturbed.len() {
                return Err(Error::Invalid(format!(
                    "pair {}: lengths {} and {}",
                    pair.original.id,
                    pair.original.len(),
                    pair.perturbed.len()
                )));
            }
            let a = sequence_score(m, &pair.original, Target::Predicted, block_index)?;
            let b = sequence_score(m, &pair.perturbed, Target::Class(a.class), block_index)?;
            let changed = pair.changed();
            let keep = |s: &[f64]| -> Vec<f64> {
                s.iter()
                    .enumerate()
                    .filter(|(j, _)| !changed.contains(j))
                    .map(|(_, &v)| v)
                    .collect()
            };
            spearman(&keep(&a.scores), &keep(&b.scores))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport::from_correlations(correlations))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub length: usize,
    pub repeats: usize,
    /// Median wall time of one pass through pooling, weighting and normalization.
    pub median_seconds: f64,
}

/// Inner loop count per timed repeat, so each sample spans many clock ticks.
const TIMING_INNER: usize = 64;

/// Median scoring-stage time on random `P x D` feature maps and gradients.
pub fn timing_scaling(hidden: usize, lengths: &[usize], repeats: usize, rng_seed: u64) -> Result<Vec<TimingEntry>> {
    if repeats == 0 || hidden == 0 {
        return Err(Error::Invalid("repeats and hidden size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let inputs: Vec<_> = lengths
        .iter()
        .map(|&p| {
            let mut randn = |_, _| rng.sample::<f64, _>(StandardNormal);
            (Array::from_fn(p, hidden, &mut randn), Array::from_fn(p, hidden, &mut randn))
        })
        .collect();
    let pass = |a: &Array<f64>, grad: &Array<f64>| -> Result<()> {
        let s = normalize_scores(&raw_scores(&neuron_weights(std::hint::black_box(grad)), a)?);
        std::hint::black_box(s);
        Ok(())
    };
    for (a, grad) in &inputs {
        pass(a, grad)?;
    }
    // lengths are interleaved within each repeat so a slow spell hits all of them
    let mut times = vec![Vec::with_capacity(repeats); lengths.len()];
    for _ in 0..repeats {
        for ((a, grad), t) in inputs.iter().zip(&mut times) {
            let start = Instant::now();
            for _ in 0..TIMING_INNER {
                pass(a, grad)?;
            }
            t.push(start.elapsed().as_secs_f64() / TIMING_INNER as f64);
        }
    }
    let out = lengths
        .iter()
        .zip(times)
        .map(|(&length, mut t)| {
            t.sort_by(f64::total_cmp);
            TimingEntry {
                length,
                repeats,
                median_seconds: quantile(&t, 0.5),
            }
        })
        .collect();
    Ok(out)
}
