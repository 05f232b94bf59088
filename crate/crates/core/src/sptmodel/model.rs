//! Parameters and forward pass of the sequence transformer.
//!
//! ```text
//! E0   = [cls; onehot * W_proj + b_proj] + pos[0..=P]
//! E'_l = MSA(Norm(E_{l-1})) + E_{l-1}
//! E_l  = MLP(Norm(E'_l)) + E'_l
//! z    = Norm(E_L[0])
//! y    = z * W_head + b_head
//! ```
//!
//! Parameters live in one flat list in canonical order; `Layout` maps roles
//! to indices into it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ModelConfig;
use crate::numcore::{Array, Graph, Scalar, Var};
use crate::seqdata::EncodedSequence;
use crate::{Error, Result};

const INIT_STD: f64 = 0.02;

/// Which learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Projection, CLS token and positional table.
    Embedding,
    /// Transformer block, numbered from 1 at the input side.
    Block(usize),
    /// Final norm and classifier.
    Head,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: ParamGroup,
    /// Subject to weight decay. Biases, norms, CLS and positions are not.
    pub decay: bool,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    proj_w: usize,
    proj_b: usize,
    cls: usize,
    pos: usize,
    blocks: Vec<BlockLayout>,
    norm_g: usize,
    norm_b: usize,
    head_w: usize,
    head_b: usize,
}

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    inits: Vec<Init>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, group: ParamGroup, init: Init, decay: bool) -> usize {
        self.specs.push(ParamSpec {
            name,
            rows,
            cols,
            group,
            decay,
        });
        self.inits.push(init);
        self.specs.len() - 1
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize, group: ParamGroup) -> usize {
        self.add(name, rows, cols, group, Init::Normal, true)
    }

    fn bias(&mut self, name: String, cols: usize, group: ParamGroup) -> usize {
        self.add(name, 1, cols, group, Init::Zeros, false)
    }

    fn norm(&mut self, prefix: &str, cols: usize, group: ParamGroup) -> (usize, usize) {
        (
            self.add(format!("{prefix}.scale"), 1, cols, group, Init::Ones, false),
            self.add(format!("{prefix}.shift"), 1, cols, group, Init::Zeros, false),
        )
    }
}

fn plan(cfg: &ModelConfig) -> (Layout, Vec<ParamSpec>, Vec<Init>) {
    let d = cfg.hidden;
    let mut b = LayoutBuilder {
        specs: Vec::new(),
        inits: Vec::new(),
    };
    let emb = ParamGroup::Embedding;
    let proj_w = b.weight("embed.proj.weight".into(), cfg.input_dim, d, emb);
    let proj_b = b.bias("embed.proj.bias".into(), d, emb);
    let cls = b.add("embed.cls".into(), 1, d, emb, Init::Normal, false);
    let pos = b.add("embed.pos".into(), cfg.max_len + 1, d, emb, Init::Normal, false);
    let blocks = (1..=cfg.layers)
        .map(|l| {
            let g = ParamGroup::Block(l);
            let p = format!("blocks.{l}");
            let (ln1_g, ln1_b) = b.norm(&format!("{p}.norm1"), d, g);
            let wq = b.weight(format!("{p}.attn.query.weight"), d, d, g);
            let bq = b.bias(format!("{p}.attn.query.bias"), d, g);
            let wk = b.weight(format!("{p}.attn.key.weight"), d, d, g);
            let bk = b.bias(format!("{p}.attn.key.bias"), d, g);
            let wv = b.weight(format!("{p}.attn.value.weight"), d, d, g);
            let bv = b.bias(format!("{p}.attn.value.bias"), d, g);
            let wo = b.weight(format!("{p}.attn.out.weight"), d, d, g);
            let bo = b.bias(format!("{p}.attn.out.bias"), d, g);
            let (ln2_g, ln2_b) = b.norm(&format!("{p}.norm2"), d, g);
            let w1 = b.weight(format!("{p}.mlp.fc1.weight"), d, cfg.mlp_size, g);
            let b1 = b.bias(format!("{p}.mlp.fc1.bias"), cfg.mlp_size, g);
            let w2 = b.weight(format!("{p}.mlp.fc2.weight"), cfg.mlp_size, d, g);
            let b2 = b.bias(format!("{p}.mlp.fc2.bias"), d, g);
            BlockLayout {
                ln1_g,
                ln1_b,
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln2_g,
                ln2_b,
                w1,
                b1,
                w2,
                b2,
            }
        })
        .collect();
    let (norm_g, norm_b) = b.norm("norm", d, ParamGroup::Head);
    let head_w = b.weight("head.weight".into(), d, cfg.num_classes, ParamGroup::Head);
    let head_b = b.bias("head.bias".into(), cfg.num_classes, ParamGroup::Head);
    let layout = Layout {
        proj_w,
        proj_b,
        cls,
        pos,
        blocks,
        norm_g,
        norm_b,
        head_w,
        head_b,
    };
    (layout, b.specs, b.inits)
}

/// Truncated normal at two standard deviations.
fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= 2.0 {
            return x * std;
        }
    }
}

/// Stochastic depth sampler. Draws one keep/drop decision per residual
/// branch per sample.
#[derive(Clone, Debug)]
pub struct DropPath {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl DropPath {
    /// Evaluation mode: every branch kept unscaled.
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn training(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: (rate > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// `None` when the branch is dropped, else the scale to apply to it.
    pub fn sample(&mut self) -> Option<f64> {
        match &mut self.rng {
            None => Some(1.0),
            Some(rng) => {
                let keep = 1.0 - self.rate;
                (rng.random::<f64>() < keep).then_some(1.0 / keep)
            }
        }
    }
}

/// Parameter leaves of one model on one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Sequence transformer classifier.
#[derive(Clone, Debug)]
pub struct SptModel<T = f64> {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    params: Vec<Array<T>>,
    layout: Layout,
}

impl<T: Scalar> PartialEq for SptModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Lowest index among the maxima.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> SptModel<T> {
    pub fn build(config: ModelConfig, rng_seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs, inits) = plan(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let params = specs
            .iter()
            .zip(&inits)
            .map(|(s, init)| match init {
                Init::Zeros => Array::zeros(s.rows, s.cols),
                Init::Ones => Array::filled(s.rows, s.cols, T::one()),
                Init::Normal => Array::from_fn(s.rows, s.cols, |_, _| T::of(trunc_normal(&mut rng, INIT_STD))),
            })
            .collect();
        Ok(Self {
            config,
            specs,
            params,
            layout,
        })
    }

    /// Rebuilds from parameters in canonical order (checkpoint loading).
    pub fn from_params(config: ModelConfig, params: Vec<Array<T>>) -> Result<Self> {
        config.validate()?;
        let (layout, specs, _) = plan(&config);
        if params.len() != specs.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(&params) {
            if p.shape() != [s.rows, s.cols] {
                return Err(Error::Checkpoint(format!(
                    "{}: expected shape {}x{}, got {:?}",
                    s.name,
                    s.rows,
                    s.cols,
                    p.shape()
                )));
            }
        }
        Ok(Self {
            config,
            specs,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Array<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Array<T>> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Array<T>> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(move |i| &mut self.params[i])
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.rows * s.cols).sum()
    }

    pub fn cast<U: Scalar>(&self) -> SptModel<U> {
        SptModel {
            config: self.config.clone(),
            specs: self.specs.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            layout: self.layout.clone(),
        }
    }

    /// Adds every parameter to `g`, as tracked leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// `(P+1) x D` input to the first block from a `P x 20` encoding node.
    pub fn embed_var(&self, g: &mut Graph<T>, b: &Bound, x: Var) -> Result<Var> {
        let p = g.value(x).rows();
        if p > self.config.max_len {
            return Err(Error::TooLong {
                len: p,
                max_len: self.config.max_len,
            });
        }
        let v = &b.vars;
        let l = &self.layout;
        let proj = g.matmul(x, v[l.proj_w])?;
        let ami = g.add_row(proj, v[l.proj_b])?;
        let e0 = g.concat_rows(&[v[l.cls], ami])?;
        if self.config.use_positional {
            let pos = g.slice_rows(v[l.pos], 0, p + 1)?;
            g.add(e0, pos)
        } else {
            Ok(e0)
        }
    }

    /// Multi-head self-attention of block `layer` (0-based) on `h`.
    pub fn attention_var(&self, g: &mut Graph<T>, b: &Bound, layer: usize, h: Var) -> Result<Var> {
        let v = &b.vars;
        let bl = &self.layout.blocks[layer];
        let q = g.matmul(h, v[bl.wq])?;
        let q = g.add_row(q, v[bl.bq])?;
        let k = g.matmul(h, v[bl.wk])?;
        let k = g.add_row(k, v[bl.bk])?;
        let val = g.matmul(h, v[bl.wv])?;
        let val = g.add_row(val, v[bl.bv])?;
        let dk = self.config.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let (lo, hi) = (i * dk, (i + 1) * dk);
            let (qi, ki, vi) = if self.config.heads == 1 {
                (q, k, val)
            } else {
                (g.slice_cols(q, lo, hi)?, g.slice_cols(k, lo, hi)?, g.slice_cols(val, lo, hi)?)
            };
            let scores = g.matmul_t(qi, ki)?;
            let scores = g.scale(scores, scale)?;
            let weights = g.softmax_rows(scores)?;
            heads.push(g.matmul(weights, vi)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
        let out = g.matmul(cat, v[bl.wo])?;
        g.add_row(out, v[bl.bo])
    }

    /// One pre-norm block (0-based `layer`).
    pub fn block_var(&self, g: &mut Graph<T>, b: &Bound, layer: usize, e: Var, drop: &mut DropPath) -> Result<Var> {
        let v = &b.vars;
        let bl = &self.layout.blocks[layer];
        let mut e = e;
        if let Some(s) = drop.sample() {
            let h = g.layer_norm_rows(e, v[bl.ln1_g], v[bl.ln1_b])?;
            let mut a = self.attention_var(g, b, layer, h)?;
            if s != 1.0 {
                a = g.scale(a, s)?;
            }
            e = g.add(e, a)?;
        }
        if let Some(s) = drop.sample() {
            let h = g.layer_norm_rows(e, v[bl.ln2_g], v[bl.ln2_b])?;
            let m = g.matmul(h, v[bl.w1])?;
            let m = g.add_row(m, v[bl.b1])?;
            let m = g.gelu(m)?;
            let m = g.matmul(m, v[bl.w2])?;
            let mut m = g.add_row(m, v[bl.b2])?;
            if s != 1.0 {
                m = g.scale(m, s)?;
            }
            e = g.add(e, m)?;
        }
        Ok(e)
    }

    /// Final norm of the CLS row, `1 x D`.
    pub fn pool_var(&self, g: &mut Graph<T>, b: &Bound, e: Var) -> Result<Var> {
        let cls = g.select_row(e, 0)?;
        g.layer_norm_rows(cls, b.vars[self.layout.norm_g], b.vars[self.layout.norm_b])
    }

    /// `1 x C` logits from the pooled representation.
    pub fn head_var(&self, g: &mut Graph<T>, b: &Bound, z: Var) -> Result<Var> {
        let y = g.matmul(z, b.vars[self.layout.head_w])?;
        g.add_row(y, b.vars[self.layout.head_b])
    }

    /// Runs blocks `first..L` (0-based) and the head on `e`.
    pub fn forward_from(&self, g: &mut Graph<T>, b: &Bound, first: usize, e: Var, drop: &mut DropPath) -> Result<Var> {
        let mut e = e;
        for layer in first..self.config.layers {
            e = self.block_var(g, b, layer, e, drop)?;
        }
        let z = self.pool_var(g, b, e)?;
        self.head_var(g, b, z)
    }

    /// Logits node for an encoding node `x`.
    pub fn logits_var(&self, g: &mut Graph<T>, b: &Bound, x: Var, drop: &mut DropPath) -> Result<Var> {
        let e = self.embed_var(g, b, x)?;
        self.forward_from(g, b, 0, e, drop)
    }

    fn eval_graph(&self) -> (Graph<T>, Bound) {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        (g, b)
    }

    /// `E0`, the `(P+1) x D` block input.
    pub fn embed(&self, enc: &EncodedSequence<T>) -> Result<Array<T>> {
        let (mut g, b) = self.eval_graph();
        let x = g.constant(enc.matrix().clone());
        let e = self.embed_var(&mut g, &b, x)?;
        Ok(g.value(e).clone())
    }

    /// Self-attention of block `layer` (0-based) applied directly to `e`.
    pub fn attention(&self, layer: usize, e: &Array<T>) -> Result<Array<T>> {
        self.check_layer(layer)?;
        let (mut g, b) = self.eval_graph();
        let h = g.constant(e.clone());
        let out = self.attention_var(&mut g, &b, layer, h)?;
        Ok(g.value(out).clone())
    }

    /// Runs all blocks on `e0` and returns `z`, the normed CLS row.
    pub fn encode(&self, e0: &Array<T>) -> Result<Array<T>> {
        let (mut g, b) = self.eval_graph();
        let mut e = g.constant(e0.clone());
        let mut drop = DropPath::off();
        for layer in 0..self.config.layers {
            e = self.block_var(&mut g, &b, layer, e, &mut drop)?;
        }
        let z = self.pool_var(&mut g, &b, e)?;
        Ok(g.value(z).clone())
    }

    /// Block inputs/outputs `[E0, E1, ..., EL]` in evaluation mode.
    pub fn hidden_states(&self, enc: &EncodedSequence<T>) -> Result<Vec<Array<T>>> {
        let (mut g, b) = self.eval_graph();
        let x = g.constant(enc.matrix().clone());
        let mut e = self.embed_var(&mut g, &b, x)?;
        let mut states = vec![g.value(e).clone()];
        let mut drop = DropPath::off();
        for layer in 0..self.config.layers {
            e = self.block_var(&mut g, &b, layer, e, &mut drop)?;
            states.push(g.value(e).clone());
        }
        Ok(states)
    }

    /// Raw class logits in evaluation mode.
    pub fn classify(&self, enc: &EncodedSequence<T>) -> Result<Vec<T>> {
        let (mut g, b) = self.eval_graph();
        let x = g.constant(enc.matrix().clone());
        let y = self.logits_var(&mut g, &b, x, &mut DropPath::off())?;
        Ok(g.value(y).data().to_vec())
    }

    pub fn predict(&self, enc: &EncodedSequence<T>) -> Result<usize> {
        Ok(argmax(&self.classify(enc)?))
    }

    pub(crate) fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.config.layers {
            return Err(Error::Invalid(format!(
                "layer {layer} out of range for a {}-layer model",
                self.config.layers
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{one_hot_encode, parse_sequence};

    fn micro() -> ModelConfig {
        let mut c = ModelConfig::new(1, 4, 1, 8, 2);
        c.max_len = 4;
        c
    }

    #[test]
    fn micro_param_count_by_hand() {
        // proj 4*20+4, cls 4, pos 5*4,
        // block: qkv 3*(16+4), out 16+4, norms 2*(4+4), mlp (32+8)+(32+4),
        // final norm 8, head 4*2+2
        let expected = (80 + 4) + 4 + 20 + (60 + 20 + 16 + 40 + 36) + 8 + 10;
        assert_eq!(expected, 298);
        let m = SptModel::<f64>::build(micro(), 0).unwrap();
        assert_eq!(m.param_count(), expected);
    }

    #[test]
    fn same_seed_same_params() {
        let a = SptModel::<f64>::build(micro(), 5).unwrap();
        let b = SptModel::<f64>::build(micro(), 5).unwrap();
        let c = SptModel::<f64>::build(micro(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_follows_roles() {
        let m = SptModel::<f64>::build(micro(), 1).unwrap();
        for (s, p) in m.specs().iter().zip(m.params()) {
            if s.name.ends_with(".bias") || s.name.ends_with(".shift") {
                assert!(p.data().iter().all(|&x| x == 0.0), "{}", s.name);
            } else if s.name.ends_with(".scale") {
                assert!(p.data().iter().all(|&x| x == 1.0), "{}", s.name);
            } else {
                assert!(p.data().iter().all(|&x| x.abs() <= 0.04), "{}", s.name);
                assert!(p.data().iter().any(|&x| x != 0.0), "{}", s.name);
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        assert!(SptModel::<f64>::build(ModelConfig::new(1, 10, 3, 8, 2), 0).is_err());
    }

    #[test]
    fn too_long_sequence_rejected() {
        let m = SptModel::<f64>::build(micro(), 0).unwrap();
        let enc = one_hot_encode(&parse_sequence("ACDEF").unwrap());
        assert!(matches!(m.classify(&enc), Err(Error::TooLong { len: 5, max_len: 4 })));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }

    #[test]
    fn drop_path_keep_rate() {
        let mut d = DropPath::training(0.1, 42);
        let n = 100_000;
        let kept: Vec<f64> = (0..n).filter_map(|_| d.sample()).collect();
        let frac = kept.len() as f64 / n as f64;
        assert!((frac - 0.9).abs() < 0.01, "{frac}");
        assert!(kept.iter().all(|&s| (s - 1.0 / 0.9).abs() < 1e-15));
        let mut off = DropPath::off();
        assert!((0..100).all(|_| off.sample() == Some(1.0)));
    }
}
