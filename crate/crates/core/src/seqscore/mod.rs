//! Gradient-weighted per-residue importance ("sequence score").
//!
//! For block `l` the feature map `A` is the `P x D` residue part of the
//! block's input `E_{l-1}`; the CLS row is held fixed. Neuron weights are the
//! column means of the logit gradient w.r.t. `A`, raw scores are `A w`, and
//! the final scores are rectified and divided by their maximum.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numcore::{Array, Graph, Scalar};
use crate::seqdata::{one_hot_encode, sequence_to_string, AminoAcid, EncodedSequence, ProteinRecord};
use crate::sptmodel::{argmax, DropPath, SptModel};
use crate::{Error, Result};

/// Maxima at or below this are treated as "no positive evidence".
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCapture<T = f64> {
    pub protein_id: String,
    /// 1-based.
    pub block_index: usize,
    /// `P x D`, CLS row removed.
    pub a: Array<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub protein_id: String,
    pub class: usize,
    pub predicted: usize,
    pub block_index: usize,
    pub residue_start: i64,
    pub residues: String,
    pub scores: Vec<f64>,
}

/// Which logit to explain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Target {
    #[default]
    Predicted,
    Class(usize),
}

fn check_block<T: Scalar>(m: &SptModel<T>, block_index: usize) -> Result<()> {
    let layers = m.config().layers;
    if block_index == 0 || block_index > layers {
        return Err(Error::Invalid(format!(
            "block index {block_index} outside 1..={layers}"
        )));
    }
    Ok(())
}

/// Input of block `block_index` (1-based), CLS row included.
fn block_input<T: Scalar>(m: &SptModel<T>, enc: &EncodedSequence<T>, block_index: usize) -> Result<Array<T>> {
    check_block(m, block_index)?;
    let mut g = Graph::new();
    let b = m.bind(&mut g, false);
    let x = g.constant(enc.matrix().clone());
    let mut e = m.embed_var(&mut g, &b, x)?;
    let mut drop = DropPath::off();
    for layer in 0..block_index - 1 {
        e = m.block_var(&mut g, &b, layer, e, &mut drop)?;
    }
    Ok(g.value(e).clone())
}

pub fn capture_activations<T: Scalar>(
    m: &SptModel<T>,
    protein_id: &str,
    enc: &EncodedSequence<T>,
    block_index: usize,
) -> Result<FeatureCapture<T>> {
    let e = block_input(m, enc, block_index)?;
    Ok(FeatureCapture {
        protein_id: protein_id.to_string(),
        block_index,
        a: e.slice_rows(1, e.rows()),
    })
}

/// Logits as a function of the residue rows `a` of block `block_index`'s input.
///
/// Returns the graph, the `A` leaf and the `1 x C` logits node.
pub fn logits_from_features<T: Scalar>(
    m: &SptModel<T>,
    cls: &Array<T>,
    a: &Array<T>,
    block_index: usize,
) -> Result<(Graph<T>, crate::numcore::Var, crate::numcore::Var)> {
    check_block(m, block_index)?;
    let mut g = Graph::new();
    let b = m.bind(&mut g, false);
    let cls = g.constant(cls.clone());
    let a_var = g.param(a.clone());
    let e = g.concat_rows(&[cls, a_var])?;
    let y = m.forward_from(&mut g, &b, block_index - 1, e, &mut DropPath::off())?;
    Ok((g, a_var, y))
}

struct Explained<T> {
    a: Array<T>,
    grad: Array<T>,
    class: usize,
    predicted: usize,
}

fn explain<T: Scalar>(m: &SptModel<T>, enc: &EncodedSequence<T>, target: Target, block_index: usize) -> Result<Explained<T>> {
    let e = block_input(m, enc, block_index)?;
    let cls = e.slice_rows(0, 1);
    let a = e.slice_rows(1, e.rows());
    let (g, a_var, y) = logits_from_features(m, &cls, &a, block_index)?;
    let logits = g.value(y).data();
    let predicted = argmax(logits);
    let classes = logits.len();
    let class = match target {
        Target::Predicted => predicted,
        Target::Class(c) if c < classes => c,
        Target::Class(c) => {
            return Err(Error::Invalid(format!("class {c} outside 0..{classes}")));
        }
    };
    let seed = Array::from_fn(1, classes, |_, k| if k == class { T::one() } else { T::zero() });
    let mut grads = g.backward_seeded(y, seed)?;
    Ok(Explained {
        grad: grads.take(a_var)?,
        a,
        class,
        predicted,
    })
}

/// `dy_c / dA`, `P x D`.
pub fn class_gradient<T: Scalar>(m: &SptModel<T>, enc: &EncodedSequence<T>, class: usize, block_index: usize) -> Result<Array<T>> {
    Ok(explain(m, enc, Target::Class(class), block_index)?.grad)
}

/// Column means of the gradient.
pub fn neuron_weights(grad: &Array<f64>) -> Vec<f64> {
    let inv = 1.0 / grad.rows() as f64;
    let mut w = vec![0.0; grad.cols()];
    for r in 0..grad.rows() {
        for (acc, &x) in w.iter_mut().zip(grad.row(r)) {
            *acc += x;
        }
    }
    w.iter_mut().for_each(|x| *x *= inv);
    w
}

/// `S_j = sum_k w_k A[j, k]`.
pub fn raw_scores(w: &[f64], a: &Array<f64>) -> Result<Vec<f64>> {
    if w.len() != a.cols() {
        return Err(Error::shape(
            "raw_scores",
            format!("weights of length {} against a {}x{} feature map", w.len(), a.rows(), a.cols()),
        ));
    }
    Ok((0..a.rows())
        .map(|j| a.row(j).iter().zip(w).map(|(x, y)| x * y).sum())
        .collect())
}

/// Rectifies and divides by the maximum; all zeros when nothing is positive.
pub fn normalize_scores(s: &[f64]) -> Vec<f64> {
    let max = s.iter().fold(0.0f64, |m, &x| m.max(x));
    if max <= SCORE_EPS {
        return vec![0.0; s.len()];
    }
    s.iter().map(|&x| x.max(0.0) / max).collect()
}

/// Pooling, weighting and normalization given `A` and its gradient.
pub fn scores_from(a: &Array<f64>, grad: &Array<f64>) -> Result<Vec<f64>> {
    if a.shape() != grad.shape() {
        return Err(Error::shape(
            "scores_from",
            format!("feature map {:?} vs gradient {:?}", a.shape(), grad.shape()),
        ));
    }
    Ok(normalize_scores(&raw_scores(&neuron_weights(grad), a)?))
}

pub fn sequence_score<T: Scalar>(
    m: &SptModel<T>,
    record: &ProteinRecord,
    target: Target,
    block_index: Option<usize>,
) -> Result<ImportanceScores> {
    let block_index = block_index.unwrap_or(m.config().layers);
    let enc = one_hot_encode::<T>(&record.sequence);
    let ex = explain(m, &enc, target, block_index)?;
    Ok(ImportanceScores {
        protein_id: record.id.clone(),
        class: ex.class,
        predicted: ex.predicted,
        block_index,
        residue_start: record.residue_start,
        residues: sequence_to_string(&record.sequence),
        scores: scores_from(&ex.a.cast(), &ex.grad.cast())?,
    })
}

/// Scores for a whole record list, in order.
pub fn score_records<T: Scalar>(
    m: &SptModel<T>,
    records: &[ProteinRecord],
    target: Target,
    block_index: Option<usize>,
) -> Vec<Result<ImportanceScores>> {
    records
        .par_iter()
        .map(|r| sequence_score(m, r, target, block_index))
        .collect()
}

#[derive(Serialize)]
struct ScoreRow {
    position: usize,
    residue_letter: char,
    residue_number: i64,
    score: f64,
}

impl ImportanceScores {
    fn rows(&self) -> impl Iterator<Item = ScoreRow> + '_ {
        self.residues.chars().zip(&self.scores).enumerate().map(|(j, (c, &s))| ScoreRow {
            position: j,
            residue_letter: c,
            residue_number: self.residue_start + j as i64,
            score: s,
        })
    }

    pub fn sequence(&self) -> Vec<AminoAcid> {
        self.residues.chars().filter_map(AminoAcid::from_letter).collect()
    }

    /// `position,residue_letter,residue_number,score`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("scores.csv", e))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            protein_id: &'a str,
            class: usize,
            predicted: usize,
            block_index: usize,
            residues: Vec<ScoreRow>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            protein_id: &self.protein_id,
            class: self.class,
            predicted: self.predicted,
            block_index: self.block_index,
            residues: self.rows().collect(),
        })?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
