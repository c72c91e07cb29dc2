//! Autoregressive graph forecast model.
//!
//! Two stacked GRU networks factorize p(S, C) over sequence-encoded graphs:
//! the node stack consumes the previous node's attribute code and adjacency
//! vector and predicts the next node code (including a terminator); the edge
//! stack, initialized from the node stack's hidden state, predicts the edge
//! codes toward the previous `window` nodes one at a time, feeding each
//! prediction back in. Training is teacher-forced with summed cross-entropy,
//! manual backpropagation, and adaptive-moment updates.

mod checkpoint;
mod gru;
mod math;

pub use checkpoint::{load_model, save_model, CHECKPOINT_FORMAT_VERSION};

use crate::align::{interpret, AlignmentConfig};
use crate::atg::AtgTemplate;
use crate::error::{Error, Result};
use crate::graph::{
    to_sequence, validate_edge, AttackGraph, Edge, EntityAttr, EventType, GraphRole, Node,
    SequenceEncoding, EVENT_COUNT, TERMINATOR_CODE,
};
use crate::num::Real;
use gru::{CellCache, Gru, View};
use math::{add_assign, matvec_add, matvec_t_add, outer_add, softmax, softmax_ce};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Node output classes: attribute codes 0..=6 plus the terminator 7.
pub const NODE_VOCAB: usize = TERMINATOR_CODE as usize + 1;
/// Attribute embedding rows: the vocabulary plus a start-of-sequence row.
pub const NODE_SOS_ROW: usize = NODE_VOCAB;
/// Edge output classes: no-edge 0 plus event codes 1..=6.
pub const EDGE_VOCAB: usize = EVENT_COUNT + 1;
/// Edge embedding rows: the vocabulary plus a start-of-vector row.
pub const EDGE_START_ROW: usize = EDGE_VOCAB;

/// Hard cap on encodable graph length.
pub const MAX_SEQ_NODES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_embed_adj: usize,
    pub node_embed_attr: usize,
    pub node_hidden: usize,
    pub node_layers: usize,
    pub edge_embed: usize,
    pub edge_hidden: usize,
    pub edge_layers: usize,
    /// Adjacency window M.
    pub window: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Loss weight for no-edge (code 0) targets; 1.0 disables down-weighting.
    pub zero_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_embed_adj: 64,
            node_embed_attr: 256,
            node_hidden: 128,
            node_layers: 4,
            edge_embed: 32,
            edge_hidden: 64,
            edge_layers: 4,
            window: 5,
            batch_size: 16,
            epochs: 50,
            learning_rate: 1e-3,
            seed: 0,
            zero_weight: 1.0,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let dims = [
            self.node_embed_adj,
            self.node_embed_attr,
            self.node_hidden,
            self.node_layers,
            self.edge_embed,
            self.edge_hidden,
            self.edge_layers,
            self.window,
            self.batch_size,
            self.epochs.max(1),
        ];
        if dims.iter().any(|&d| d == 0) || self.learning_rate <= 0.0 {
            return Err(Error::invalid_input("model config dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TensorMeta {
    pub name: String,
    pub view: View,
}

struct Layout {
    metas: Vec<TensorMeta>,
    total: usize,
}

impl Layout {
    fn new() -> Self {
        Layout {
            metas: Vec::new(),
            total: 0,
        }
    }

    fn tensor(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> View {
        let view = View {
            off: self.total,
            rows,
            cols,
        };
        self.total += rows * cols;
        self.metas.push(TensorMeta {
            name: name.into(),
            view,
        });
        view
    }

    fn gru(&mut self, prefix: &str, in_dim: usize, hid: usize) -> Gru {
        Gru {
            in_dim,
            hid,
            wz: self.tensor(format!("{prefix}.wz"), hid, in_dim),
            uz: self.tensor(format!("{prefix}.uz"), hid, hid),
            bz: self.tensor(format!("{prefix}.bz"), hid, 1),
            wr: self.tensor(format!("{prefix}.wr"), hid, in_dim),
            ur: self.tensor(format!("{prefix}.ur"), hid, hid),
            br: self.tensor(format!("{prefix}.br"), hid, 1),
            wh: self.tensor(format!("{prefix}.wh"), hid, in_dim),
            uh: self.tensor(format!("{prefix}.uh"), hid, hid),
            bh: self.tensor(format!("{prefix}.bh"), hid, 1),
        }
    }
}

/// The forecast model: configuration plus one flat parameter vector with
/// named tensor views.
#[derive(Debug, Clone)]
pub struct ForecastModel<T> {
    pub cfg: ModelConfig,
    pub(crate) metas: Vec<TensorMeta>,
    pub(crate) params: Vec<T>,
    w_adj: View,
    b_adj: View,
    e_attr: View,
    node_gru: Vec<Gru>,
    w_nhead: View,
    b_nhead: View,
    e_edge: View,
    w_proj: View,
    b_proj: View,
    edge_gru: Vec<Gru>,
    w_ehead: View,
    b_ehead: View,
}

/// Per-epoch training metrics. The edge true-positive rate counts nonzero
/// edge targets only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub node_loss: f64,
    pub edge_loss: f64,
    pub node_tpr: f64,
    pub edge_tpr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch\tnode_loss\tedge_loss\tnode_tpr\tedge_tpr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\n",
                e.epoch, e.node_loss, e.edge_loss, e.node_tpr, e.edge_tpr
            ));
        }
        out
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct PassStats {
    node_loss: f64,
    edge_loss: f64,
    node_correct: usize,
    node_total: usize,
    edge_correct: usize,
    edge_total: usize,
}

impl PassStats {
    fn merge(&mut self, o: &PassStats) {
        self.node_loss += o.node_loss;
        self.edge_loss += o.edge_loss;
        self.node_correct += o.node_correct;
        self.node_total += o.node_total;
        self.edge_correct += o.edge_correct;
        self.edge_total += o.edge_total;
    }
}

impl<T: Real> ForecastModel<T> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layout = Layout::new();
        let adj_in = cfg.window * EDGE_VOCAB;
        let w_adj = layout.tensor("node.adj.w", cfg.node_embed_adj, adj_in);
        let b_adj = layout.tensor("node.adj.b", cfg.node_embed_adj, 1);
        let e_attr = layout.tensor("node.attr.table", NODE_SOS_ROW + 1, cfg.node_embed_attr);
        let node_in = cfg.node_embed_adj + cfg.node_embed_attr;
        let node_gru = (0..cfg.node_layers)
            .map(|l| {
                let input = if l == 0 { node_in } else { cfg.node_hidden };
                layout.gru(&format!("node.gru{l}"), input, cfg.node_hidden)
            })
            .collect();
        let w_nhead = layout.tensor("node.head.w", NODE_VOCAB, cfg.node_hidden);
        let b_nhead = layout.tensor("node.head.b", NODE_VOCAB, 1);
        let e_edge = layout.tensor("edge.table", EDGE_START_ROW + 1, cfg.edge_embed);
        let w_proj = layout.tensor("edge.proj.w", cfg.edge_hidden, cfg.node_hidden);
        let b_proj = layout.tensor("edge.proj.b", cfg.edge_hidden, 1);
        let edge_gru = (0..cfg.edge_layers)
            .map(|l| {
                let input = if l == 0 { cfg.edge_embed } else { cfg.edge_hidden };
                layout.gru(&format!("edge.gru{l}"), input, cfg.edge_hidden)
            })
            .collect();
        let w_ehead = layout.tensor("edge.head.w", EDGE_VOCAB, cfg.edge_hidden);
        let b_ehead = layout.tensor("edge.head.b", EDGE_VOCAB, 1);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = vec![T::zero(); layout.total];
        for meta in &layout.metas {
            let scale = (1.0 / meta.view.cols.max(1) as f64).sqrt().min(0.2);
            for p in meta.view.of_mut(&mut params) {
                *p = T::from_f64_lossy(rng.gen_range(-scale..scale));
            }
        }
        Ok(ForecastModel {
            cfg,
            metas: layout.metas,
            params,
            w_adj,
            b_adj,
            e_attr,
            node_gru,
            w_nhead,
            b_nhead,
            e_edge,
            w_proj,
            b_proj,
            edge_gru,
            w_ehead,
            b_ehead,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Multi-hot encoding of an adjacency vector over the window slots,
    /// nearest predecessor first; absent slots stay all-zero.
    fn adj_input(&self, adj: &[u8]) -> Vec<T> {
        let mut x = vec![T::zero(); self.cfg.window * EDGE_VOCAB];
        for (slot, &code) in adj.iter().enumerate().take(self.cfg.window) {
            x[slot * EDGE_VOCAB + code as usize] = T::one();
        }
        x
    }

    fn node_step_input(&self, params: &[T], attr_row: usize, adj: &[T]) -> Vec<T> {
        let mut emb = self.b_adj.of(params).to_vec();
        matvec_add(
            self.w_adj.of(params),
            self.cfg.node_embed_adj,
            self.cfg.window * EDGE_VOCAB,
            adj,
            &mut emb,
        );
        let table = self.e_attr.of(params);
        let row = &table[attr_row * self.cfg.node_embed_attr..(attr_row + 1) * self.cfg.node_embed_attr];
        emb.extend_from_slice(row);
        emb
    }

    fn head(&self, params: &[T], w: View, b: View, h: &[T]) -> Vec<T> {
        let mut logits = b.of(params).to_vec();
        matvec_add(w.of(params), w.rows, w.cols, h, &mut logits);
        logits
    }

    /// Runs one GRU stack step across layers; returns the per-layer caches
    /// and the top hidden state. `hidden` is updated in place.
    fn stack_step(
        &self,
        params: &[T],
        grus: &[Gru],
        hidden: &mut [Vec<T>],
        x: Vec<T>,
    ) -> Vec<CellCache<T>> {
        let mut caches = Vec::with_capacity(grus.len());
        let mut input = x;
        for (l, g) in grus.iter().enumerate() {
            let (h_new, cache) = g.step(params, &input, &hidden[l]);
            hidden[l] = h_new.clone();
            caches.push(cache);
            input = h_new;
        }
        caches
    }

    /// Teacher-forced forward (and optional backward) pass over one encoded
    /// graph. Returns the summed loss, the statistics, and fills `grads`
    /// when given.
    fn pass(
        &self,
        params: &[T],
        enc: &SequenceEncoding,
        mut grads: Option<&mut [T]>,
    ) -> Result<(T, PassStats)> {
        if enc.node_codes.is_empty() {
            return Err(Error::invalid_input("cannot train on an empty sequence"));
        }
        if enc.window != self.cfg.window {
            return Err(Error::invalid_input(format!(
                "encoding window {} does not match model window {}",
                enc.window, self.cfg.window
            )));
        }
        let n = enc.node_codes.len();
        let steps = n + 1;
        let hid = self.cfg.node_hidden;
        let zero_w = T::from_f64_lossy(self.cfg.zero_weight);

        let mut stats = PassStats::default();
        let mut loss = T::zero();
        let mut hidden = vec![vec![T::zero(); hid]; self.cfg.node_layers];
        let mut node_caches: Vec<Vec<CellCache<T>>> = Vec::with_capacity(steps);
        let mut adj_inputs: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut attr_rows: Vec<usize> = Vec::with_capacity(steps);
        let mut h_tops: Vec<Vec<T>> = Vec::with_capacity(steps);
        // Gradient flowing into the top hidden state at each step.
        let mut dh_tops: Vec<Vec<T>> = vec![vec![T::zero(); hid]; steps];

        for t in 0..steps {
            let (attr_row, adj) = if t == 0 {
                (NODE_SOS_ROW, self.adj_input(&[]))
            } else {
                (
                    enc.node_codes[t - 1] as usize,
                    self.adj_input(&enc.adj_vectors[t - 1]),
                )
            };
            let x = self.node_step_input(params, attr_row, &adj);
            let caches = self.stack_step(params, &self.node_gru, &mut hidden, x);
            let h_top = hidden[self.cfg.node_layers - 1].clone();

            let target = if t < n {
                enc.node_codes[t] as usize
            } else {
                TERMINATOR_CODE as usize
            };
            let logits = self.head(params, self.w_nhead, self.b_nhead, &h_top);
            let (l, dlogits) = softmax_ce(&logits, target);
            loss = loss + l;
            stats.node_loss += l.to_f64_lossy();
            stats.node_total += 1;
            if argmax(&logits) == target {
                stats.node_correct += 1;
            }
            if let Some(g) = grads.as_deref_mut() {
                outer_add(self.w_nhead.of_mut(g), &dlogits, &h_top);
                add_assign(self.b_nhead.of_mut(g), &dlogits);
                matvec_t_add(
                    self.w_nhead.of(params),
                    NODE_VOCAB,
                    hid,
                    &dlogits,
                    &mut dh_tops[t],
                );
            }

            // Edge stack for real nodes with at least one predecessor.
            if t >= 1 && t < n && !enc.adj_vectors[t].is_empty() {
                let (el, dh) = self.edge_pass(
                    params,
                    &h_top,
                    &enc.adj_vectors[t],
                    zero_w,
                    &mut stats,
                    grads.as_deref_mut(),
                )?;
                loss = loss + el;
                if let Some(dh) = dh {
                    add_assign(&mut dh_tops[t], &dh);
                }
            }

            node_caches.push(caches);
            adj_inputs.push(adj);
            attr_rows.push(attr_row);
            h_tops.push(h_top);
        }

        if let Some(g) = grads {
            // Backward through time over the node stack.
            let mut carry = vec![vec![T::zero(); hid]; self.cfg.node_layers];
            for t in (0..steps).rev() {
                let mut dx_above = dh_tops[t].clone();
                for l in (0..self.cfg.node_layers).rev() {
                    let mut dh = dx_above;
                    add_assign(&mut dh, &carry[l]);
                    let (dx, dh_prev) =
                        self.node_gru[l].step_backward(params, g, &node_caches[t][l], &dh);
                    carry[l] = dh_prev;
                    dx_above = dx;
                }
                // dx_above is the gradient of the step input.
                let (dadj_emb, dattr) = dx_above.split_at(self.cfg.node_embed_adj);
                outer_add(self.w_adj.of_mut(g), dadj_emb, &adj_inputs[t]);
                add_assign(self.b_adj.of_mut(g), dadj_emb);
                let row = attr_rows[t];
                let table = self.e_attr.of_mut(g);
                add_assign(
                    &mut table[row * self.cfg.node_embed_attr..(row + 1) * self.cfg.node_embed_attr],
                    dattr,
                );
            }
        }
        Ok((loss, stats))
    }

    /// Forward/backward through the edge stack for one node's adjacency
    /// vector. Returns the loss and, when training, the gradient with
    /// respect to the node stack's top hidden state.
    fn edge_pass(
        &self,
        params: &[T],
        h_node: &[T],
        targets: &[u8],
        zero_w: T,
        stats: &mut PassStats,
        mut grads: Option<&mut [T]>,
    ) -> Result<(T, Option<Vec<T>>)> {
        let hid = self.cfg.edge_hidden;
        let mut h0 = self.b_proj.of(params).to_vec();
        matvec_add(
            self.w_proj.of(params),
            hid,
            self.cfg.node_hidden,
            h_node,
            &mut h0,
        );
        let mut hidden = vec![vec![T::zero(); hid]; self.cfg.edge_layers];
        hidden[0] = h0;

        let table_cols = self.cfg.edge_embed;
        let mut loss = T::zero();
        let mut caches: Vec<Vec<CellCache<T>>> = Vec::with_capacity(targets.len());
        let mut rows: Vec<usize> = Vec::with_capacity(targets.len());
        let mut dh_tops: Vec<Vec<T>> = vec![vec![T::zero(); hid]; targets.len()];

        for (j, &target) in targets.iter().enumerate() {
            let row = if j == 0 {
                EDGE_START_ROW
            } else {
                targets[j - 1] as usize
            };
            let table = self.e_edge.of(params);
            let x = table[row * table_cols..(row + 1) * table_cols].to_vec();
            let step_caches = self.stack_step(params, &self.edge_gru, &mut hidden, x);
            let h_top = hidden[self.cfg.edge_layers - 1].clone();
            let logits = self.head(params, self.w_ehead, self.b_ehead, &h_top);
            let (mut l, mut dlogits) = softmax_ce(&logits, target as usize);
            if target == 0 {
                l = l * zero_w;
                for d in &mut dlogits {
                    *d = *d * zero_w;
                }
            }
            loss = loss + l;
            stats.edge_loss += l.to_f64_lossy();
            if target != 0 {
                stats.edge_total += 1;
                if argmax(&logits) == target as usize {
                    stats.edge_correct += 1;
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                outer_add(self.w_ehead.of_mut(g), &dlogits, &h_top);
                add_assign(self.b_ehead.of_mut(g), &dlogits);
                matvec_t_add(
                    self.w_ehead.of(params),
                    EDGE_VOCAB,
                    hid,
                    &dlogits,
                    &mut dh_tops[j],
                );
            }
            caches.push(step_caches);
            rows.push(row);
        }

        let Some(g) = grads else {
            return Ok((loss, None));
        };
        let mut carry = vec![vec![T::zero(); hid]; self.cfg.edge_layers];
        for j in (0..targets.len()).rev() {
            let mut dx_above = dh_tops[j].clone();
            for l in (0..self.cfg.edge_layers).rev() {
                let mut dh = dx_above;
                add_assign(&mut dh, &carry[l]);
                let (dx, dh_prev) = self.edge_gru[l].step_backward(params, g, &caches[j][l], &dh);
                carry[l] = dh_prev;
                dx_above = dx;
            }
            let row = rows[j];
            let table = self.e_edge.of_mut(g);
            add_assign(
                &mut table[row * table_cols..(row + 1) * table_cols],
                &dx_above,
            );
        }
        // carry[0] is the gradient at the projected initial state.
        let dproj = &carry[0];
        outer_add(self.w_proj.of_mut(g), dproj, h_node);
        add_assign(self.b_proj.of_mut(g), dproj);
        let mut dh_node = vec![T::zero(); self.cfg.node_hidden];
        matvec_t_add(
            self.w_proj.of(params),
            hid,
            self.cfg.node_hidden,
            dproj,
            &mut dh_node,
        );
        Ok((loss, Some(dh_node)))
    }

    /// Summed loss of one encoding under the given parameters.
    pub fn loss(&self, enc: &SequenceEncoding) -> Result<f64> {
        let (l, _) = self.pass(&self.params, enc, None)?;
        Ok(l.to_f64_lossy())
    }

    fn loss_at(&self, params: &[T], enc: &SequenceEncoding) -> Result<T> {
        Ok(self.pass(params, enc, None)?.0)
    }

    /// Analytic gradient of the summed loss on one encoding.
    fn grads(&self, enc: &SequenceEncoding) -> Result<(T, Vec<T>, PassStats)> {
        let mut g = vec![T::zero(); self.params.len()];
        let (l, stats) = self.pass(&self.params, enc, Some(&mut g))?;
        Ok((l, g, stats))
    }
}

fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr: T::from_f64_lossy(lr),
        }
    }

    fn step(&mut self, params: &mut [T], grads: &[T]) {
        let b1 = T::from_f64_lossy(0.9);
        let b2 = T::from_f64_lossy(0.999);
        let eps = T::from_f64_lossy(1e-8);
        let one = T::one();
        self.t += 1;
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (one - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (one - b2) * grads[i] * grads[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] = params[i] - self.lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Trains a fresh model on a corpus of sequence encodings. Deterministic for
/// a fixed config (seed included).
pub fn train<T: Real>(
    corpus: &[SequenceEncoding],
    cfg: &ModelConfig,
) -> Result<(ForecastModel<T>, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::invalid_input("training corpus is empty"));
    }
    if let Some(bad) = corpus.iter().find(|e| e.window != cfg.window) {
        return Err(Error::invalid_input(format!(
            "corpus encoding uses window {}, config says {}",
            bad.window, cfg.window
        )));
    }
    let model = ForecastModel::<T>::new(cfg.clone())?;
    train_in_place(model, corpus)
}

fn train_in_place<T: Real>(
    mut model: ForecastModel<T>,
    corpus: &[SequenceEncoding],
) -> Result<(ForecastModel<T>, TrainReport)> {
    let cfg = model.cfg.clone();
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = TrainReport { epochs: Vec::new() };
    let mut grads = vec![T::zero(); model.params.len()];
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_stats = PassStats::default();
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                *g = T::zero();
            }
            for &gi in batch {
                let mut sample_grads = vec![T::zero(); model.params.len()];
                let (_, stats) =
                    model.pass(&model.params, &corpus[gi], Some(&mut sample_grads))?;
                add_assign(&mut grads, &sample_grads);
                epoch_stats.merge(&stats);
            }
            let scale = T::one() / T::from_f64_lossy(batch.len() as f64);
            for g in &mut grads {
                *g = *g * scale;
            }
            adam.step(&mut model.params, &grads);
        }
        report.epochs.push(EpochStats {
            epoch,
            node_loss: epoch_stats.node_loss,
            edge_loss: epoch_stats.edge_loss,
            node_tpr: ratio(epoch_stats.node_correct, epoch_stats.node_total),
            edge_tpr: ratio(epoch_stats.edge_correct, epoch_stats.edge_total),
        });
    }
    Ok((model, report))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn shuffle(xs: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

/// Compares analytic gradients against central finite differences on an
/// evenly-spaced subset of at least 200 parameters; returns the maximum
/// relative error.
pub fn gradient_check<T: Real>(model: &ForecastModel<T>, sample: &SequenceEncoding) -> Result<f64> {
    if sample.node_codes.is_empty() {
        return Err(Error::invalid_input("gradient check needs a nonempty sequence"));
    }
    let (_, grads, _) = model.grads(sample)?;
    let total = model.params.len();
    let stride = (total / 200).max(1);
    // Central differences balance truncation against rounding noise around
    // eps ~ cbrt(machine epsilon) times the loss scale; 1e-4 keeps the
    // cancellation error well below the 1e-4 relative tolerance for losses
    // in the hundreds.
    let eps = T::from_f64_lossy(1e-4);
    let mut params = model.params.clone();
    let mut max_rel = 0.0f64;
    for i in (0..total).step_by(stride) {
        let orig = params[i];
        params[i] = orig + eps;
        let lp = model.loss_at(&params, sample)?.to_f64_lossy();
        params[i] = orig - eps;
        let lm = model.loss_at(&params, sample)?.to_f64_lossy();
        params[i] = orig;
        let numeric = (lp - lm) / (2.0 * eps.to_f64_lossy());
        let analytic = grads[i].to_f64_lossy();
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(max_rel)
}

#[derive(Debug, Clone, Copy)]
pub enum PredictMode {
    Greedy,
    Sample(u64),
}

/// Next-step prediction: the node code (possibly the terminator) and the
/// edge-code vector toward the previous `min(n, M)` nodes, nearest first.
pub fn predict_next<T: Real>(
    model: &ForecastModel<T>,
    g: &AttackGraph,
    mode: PredictMode,
) -> Result<(u8, Vec<u8>)> {
    if g.node_count() > MAX_SEQ_NODES {
        return Err(Error::invalid_input(format!(
            "graph exceeds the {MAX_SEQ_NODES}-node sequence bound"
        )));
    }
    let enc = to_sequence(g, model.cfg.window);
    let params = &model.params;
    let n = enc.node_codes.len();
    let mut rng = match mode {
        PredictMode::Greedy => None,
        PredictMode::Sample(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };

    let mut hidden = vec![vec![T::zero(); model.cfg.node_hidden]; model.cfg.node_layers];
    for t in 0..=n {
        let (attr_row, adj) = if t == 0 {
            (NODE_SOS_ROW, model.adj_input(&[]))
        } else {
            (
                enc.node_codes[t - 1] as usize,
                model.adj_input(&enc.adj_vectors[t - 1]),
            )
        };
        let x = model.node_step_input(params, attr_row, &adj);
        model.stack_step(params, &model.node_gru, &mut hidden, x);
    }
    let h_top = hidden[model.cfg.node_layers - 1].clone();
    let logits = model.head(params, model.w_nhead, model.b_nhead, &h_top);
    let node_code = select(&logits, &mut rng) as u8;
    if node_code == TERMINATOR_CODE {
        return Ok((node_code, Vec::new()));
    }

    let steps = n.min(model.cfg.window);
    let mut h0 = model.b_proj.of(params).to_vec();
    matvec_add(
        model.w_proj.of(params),
        model.cfg.edge_hidden,
        model.cfg.node_hidden,
        &h_top,
        &mut h0,
    );
    let mut ehidden = vec![vec![T::zero(); model.cfg.edge_hidden]; model.cfg.edge_layers];
    ehidden[0] = h0;
    let mut codes = Vec::with_capacity(steps);
    let mut prev_row = EDGE_START_ROW;
    for _ in 0..steps {
        let table = model.e_edge.of(params);
        let x = table[prev_row * model.cfg.edge_embed..(prev_row + 1) * model.cfg.edge_embed]
            .to_vec();
        model.stack_step(params, &model.edge_gru, &mut ehidden, x);
        let h = ehidden[model.cfg.edge_layers - 1].clone();
        let logits = model.head(params, model.w_ehead, model.b_ehead, &h);
        let code = select(&logits, &mut rng);
        codes.push(code as u8);
        prev_row = code;
    }
    Ok((node_code, codes))
}

fn select<T: Real>(logits: &[T], rng: &mut Option<ChaCha8Rng>) -> usize {
    match rng {
        None => argmax(logits),
        Some(rng) => {
            let probs = softmax(logits);
            let draw = rng.gen_range(0.0..1.0);
            let mut acc = 0.0f64;
            for (i, p) in probs.iter().enumerate() {
                acc += p.to_f64_lossy();
                if draw < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

/// When to stop extending an APG.
pub enum StopCriterion {
    /// Stop on terminator or exhausted step budget only.
    Budget,
    /// Additionally stop once the interpreted technique count exceeds the
    /// input graph's.
    AtgGain {
        templates: Vec<AtgTemplate>,
        align_cfg: AlignmentConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Terminator,
    BudgetExhausted,
    AtgCountIncreased,
}

#[derive(Debug)]
pub struct ForecastOutcome {
    pub graph: AttackGraph,
    pub steps: usize,
    pub reason: StopReason,
    pub diagnostics: Vec<String>,
}

/// Default forecast step budget.
pub const DEFAULT_STEP_BUDGET: usize = 5;

/// Autoregressively extends `apg` into an AFG. The input graph is contained
/// verbatim; predicted nodes and edges carry the forecast flag.
pub fn forecast<T: Real>(
    model: &ForecastModel<T>,
    apg: &AttackGraph,
    stop: &StopCriterion,
    budget: usize,
) -> Result<ForecastOutcome> {
    let mut graph = apg.clone().with_role(GraphRole::AFG);
    let mut diagnostics = Vec::new();
    let baseline = match stop {
        StopCriterion::Budget => 0,
        StopCriterion::AtgGain {
            templates,
            align_cfg,
        } => interpret(&graph, templates, align_cfg)?.len(),
    };
    let mut steps = 0;
    let mut reason = StopReason::BudgetExhausted;
    while steps < budget {
        let (code, adj) = predict_next(model, &graph, PredictMode::Greedy)?;
        if code == TERMINATOR_CODE {
            reason = StopReason::Terminator;
            break;
        }
        steps += 1;
        graph = materialize(&graph, code, &adj, &mut diagnostics)?;
        if let StopCriterion::AtgGain {
            templates,
            align_cfg,
        } = stop
        {
            if interpret(&graph, templates, align_cfg)?.len() > baseline {
                reason = StopReason::AtgCountIncreased;
                break;
            }
        }
    }
    if reason == StopReason::BudgetExhausted {
        if let StopCriterion::AtgGain { .. } = stop {
            diagnostics.push("no ATG-count increase within the step budget".into());
        }
    }
    Ok(ForecastOutcome {
        graph,
        steps,
        reason,
        diagnostics,
    })
}

/// Appends a predicted node and its edges to the graph. Edge direction is
/// recovered from the validation table; edges invalid under both endpoint
/// assignments are dropped with a diagnostic.
fn materialize(
    g: &AttackGraph,
    code: u8,
    adj: &[u8],
    diagnostics: &mut Vec<String>,
) -> Result<AttackGraph> {
    let attr = EntityAttr::from_code(code)?;
    let order = g.node_count();
    let mut id = format!("forecast{order}");
    while g.node_by_id(&id).is_some() {
        id.push('x');
    }
    let mut nodes = g.nodes().to_vec();
    let mut node = Node::new(id.clone(), attr, order);
    node.forecast = true;
    nodes.push(node);
    let mut edges = g.edges().to_vec();
    let mut seq = if g.edge_count() == 0 { 0 } else { g.max_seq() + 1 };
    let in_order = g.nodes_in_order();
    for (slot, &ec) in adj.iter().enumerate() {
        if ec == 0 {
            continue;
        }
        let Ok(event) = EventType::from_code(ec) else {
            diagnostics.push(format!("dropped edge with unknown code {ec}"));
            continue;
        };
        // Slot 0 is the nearest predecessor in node order.
        let Some(peer) = in_order.get(in_order.len() - 1 - slot) else {
            diagnostics.push(format!("dropped edge beyond graph start (slot {slot})"));
            continue;
        };
        // The earlier node is the subject when both directions validate.
        let (src, dst) = if validate_edge(peer.attr, event, attr) {
            (peer.id.clone(), id.clone())
        } else if validate_edge(attr, event, peer.attr) {
            (id.clone(), peer.id.clone())
        } else {
            diagnostics.push(format!(
                "dropped invalid {event} edge between {} and {id}",
                peer.id
            ));
            continue;
        };
        let mut e = Edge::new(src, dst, event, seq);
        e.forecast = true;
        edges.push(e);
        seq += 1;
    }
    AttackGraph::new(g.role, g.provenance.clone(), nodes, edges)
}
