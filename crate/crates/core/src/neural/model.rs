use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{self, LayerNormCache};
use super::vocab::{Vocabulary, PAD, UNK};
use super::{grl_backward, EncoderConfig, NeuralError};
use crate::corpus::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Normal(f64),
    Uniform(f64),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Whether weight decay applies (false for biases and norm parameters).
    pub decay: bool,
    pub(crate) init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
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

#[derive(Debug, Clone)]
struct ModelIds {
    embed: usize,
    layers: Vec<LayerIds>,
    lnf_g: usize,
    lnf_b: usize,
    label_w: usize,
    label_b: usize,
    domain_w: usize,
    domain_b: usize,
}

/// Flat parameter storage with named tensors in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, rows: usize, cols: usize, decay: bool, init: Init) -> usize {
        self.tensors.push(TensorSpec { name, rows, cols, offset: self.total, decay, init });
        self.total += rows * cols;
        self.tensors.len() - 1
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for t in &self.tensors {
            for m in &mut mask[t.range()] {
                *m = t.decay;
            }
        }
        mask
    }
}

fn build_layout(config: &EncoderConfig, vocab_size: usize, num_domains: usize) -> (ParamLayout, ModelIds) {
    let d = config.embedding_dim;
    let ff = config.feedforward_dim;
    let mut l = ParamLayout { tensors: Vec::new(), total: 0 };
    let affine = |fan_in: usize| Init::Uniform(1.0 / (fan_in as f64).sqrt());
    let embed = l.push("embedding".into(), vocab_size, d, true, Init::Normal(0.02));
    let mut layers = Vec::with_capacity(config.num_layers);
    for i in 0..config.num_layers {
        let p = format!("layer{i}.");
        layers.push(LayerIds {
            ln1_g: l.push(p.clone() + "ln1.gain", 1, d, false, Init::Ones),
            ln1_b: l.push(p.clone() + "ln1.bias", 1, d, false, Init::Zeros),
            wq: l.push(p.clone() + "attn.wq", d, d, true, affine(d)),
            bq: l.push(p.clone() + "attn.bq", 1, d, false, affine(d)),
            wk: l.push(p.clone() + "attn.wk", d, d, true, affine(d)),
            bk: l.push(p.clone() + "attn.bk", 1, d, false, affine(d)),
            wv: l.push(p.clone() + "attn.wv", d, d, true, affine(d)),
            bv: l.push(p.clone() + "attn.bv", 1, d, false, affine(d)),
            wo: l.push(p.clone() + "attn.wo", d, d, true, affine(d)),
            bo: l.push(p.clone() + "attn.bo", 1, d, false, affine(d)),
            ln2_g: l.push(p.clone() + "ln2.gain", 1, d, false, Init::Ones),
            ln2_b: l.push(p.clone() + "ln2.bias", 1, d, false, Init::Zeros),
            w1: l.push(p.clone() + "ff.w1", d, ff, true, affine(d)),
            b1: l.push(p.clone() + "ff.b1", 1, ff, false, affine(d)),
            w2: l.push(p.clone() + "ff.w2", ff, d, true, affine(ff)),
            b2: l.push(p + "ff.b2", 1, d, false, affine(ff)),
        });
    }
    let ids = ModelIds {
        embed,
        layers,
        lnf_g: l.push("final_ln.gain".into(), 1, d, false, Init::Ones),
        lnf_b: l.push("final_ln.bias".into(), 1, d, false, Init::Zeros),
        label_w: l.push("label_head.w".into(), d, Label::COUNT, true, affine(d)),
        label_b: l.push("label_head.b".into(), 1, Label::COUNT, false, affine(d)),
        domain_w: l.push("domain_head.w".into(), d, num_domains, true, affine(d)),
        domain_b: l.push("domain_head.b".into(), 1, num_domains, false, affine(d)),
    };
    (l, ids)
}

/// Per-example supervision. `None` masks the corresponding loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Target {
    pub label: Option<Label>,
    pub domain: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub label_logits: Array2<f64>,
    pub domain_logits: Array2<f64>,
    pub pooled: Array2<f64>,
}

/// Batch-mean loss terms and counts from a training forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub label: f64,
    pub domain: f64,
    pub label_correct: usize,
    pub label_count: usize,
    pub domain_correct: usize,
    pub domain_count: usize,
}

/// Gradient buffer shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients { data: vec![0.0; n] }
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

struct LayerCache {
    ln1: LayerNormCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln2: LayerNormCache,
    h2: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    ff_mask: Option<Array2<f64>>,
}

struct ExampleCache {
    tokens: Vec<u32>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    lnf: LayerNormCache,
    pooled: Array1<f64>,
}

/// Transformer encoder with mean pooling, a four-way label head and a domain
/// head attached through a gradient-reversal node.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    config: EncoderConfig,
    vocab: Vocabulary,
    domains: Vec<String>,
    /// Gradient-reversal coefficient used by `backward`.
    pub grl_lambda: f64,
    layout: ParamLayout,
    ids: ModelIds,
    params: Vec<f64>,
    positions: Array2<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn add_outer(mut g: ArrayViewMut2<f64>, a: &ArrayView1<f64>, b: &ArrayView1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            g.row_mut(i).scaled_add(ai, b);
        }
    }
}

impl ClassifierModel {
    pub fn new(vocab: Vocabulary, config: EncoderConfig, domains: Vec<String>, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        if vocab.len() < 2 {
            return Err(NeuralError::Config("vocabulary must contain the reserved tokens".into()));
        }
        let (layout, ids) = build_layout(&config, vocab.len(), domains.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for t in &layout.tensors {
            let slot = &mut params[t.range()];
            match t.init {
                Init::Normal(std) => {
                    let n = Normal::new(0.0, std).expect("valid std");
                    slot.iter_mut().for_each(|p| *p = n.sample(&mut rng));
                }
                Init::Uniform(a) => slot.iter_mut().for_each(|p| *p = rng.random_range(-a..=a)),
                Init::Ones => slot.iter_mut().for_each(|p| *p = 1.0),
                Init::Zeros => {}
            }
        }
        let positions = ops::sinusoidal_positions(config.max_seq_len, config.embedding_dim);
        let mut model = ClassifierModel { config, vocab, domains, grl_lambda: 0.0, layout, ids, params, positions };
        model.quantize();
        Ok(model)
    }

    /// Rebuilds a model from stored parts; used by the file loader.
    pub(crate) fn from_parts(
        config: EncoderConfig,
        vocab: Vocabulary,
        domains: Vec<String>,
        grl_lambda: f64,
        params: Vec<f64>,
    ) -> Result<Self, NeuralError> {
        config.validate()?;
        let (layout, ids) = build_layout(&config, vocab.len(), domains.len());
        if layout.total != params.len() {
            return Err(NeuralError::Dimension(format!("expected {} parameters, got {}", layout.total, params.len())));
        }
        let positions = ops::sinusoidal_positions(config.max_seq_len, config.embedding_dim);
        Ok(ClassifierModel { config, vocab, domains, grl_lambda, layout, ids, params, positions })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn domain_index(&self, domain: &str) -> Option<usize> {
        self.domains.iter().position(|d| d == domain)
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Rounds every parameter to the nearest f32 so that the stored model
    /// file reproduces the in-memory model exactly.
    pub fn quantize(&mut self) {
        self.params.iter_mut().for_each(|p| *p = f64::from(*p as f32));
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Indices of the shared encoder tensors (everything except the heads).
    pub fn encoder_range(&self) -> std::ops::Range<usize> {
        0..self.layout.tensors[self.ids.label_w].offset
    }

    pub fn label_head_range(&self) -> std::ops::Range<usize> {
        self.layout.tensors[self.ids.label_w].offset..self.layout.tensors[self.ids.domain_w].offset
    }

    pub fn domain_head_range(&self) -> std::ops::Range<usize> {
        self.layout.tensors[self.ids.domain_w].offset..self.layout.total
    }

    fn mat(&self, id: usize) -> ArrayView2<'_, f64> {
        let t = &self.layout.tensors[id];
        ArrayView2::from_shape((t.rows, t.cols), &self.params[t.range()]).expect("layout shape")
    }

    fn vecp(&self, id: usize) -> ArrayView1<'_, f64> {
        let t = &self.layout.tensors[id];
        ArrayView1::from(&self.params[t.range()])
    }

    pub fn encode(&self, text: &str) -> super::Encoded {
        super::encode(text, &self.vocab, &self.config)
    }

    fn prepare(&self, seq: &[u32]) -> Result<Vec<u32>, NeuralError> {
        let mut toks: Vec<u32> = seq.iter().copied().filter(|&t| t != PAD).collect();
        if let Some(&bad) = toks.iter().find(|&&t| t as usize >= self.vocab.len()) {
            return Err(NeuralError::Dimension(format!("token id {bad} outside vocabulary of {}", self.vocab.len())));
        }
        toks.truncate(self.config.max_seq_len);
        if toks.is_empty() {
            toks.push(UNK);
        }
        Ok(toks)
    }

    fn forward_example(&self, tokens: Vec<u32>, mut rng: Option<&mut ChaCha8Rng>) -> ExampleCache {
        let d = self.config.embedding_dim;
        let len = tokens.len();
        let p = self.config.dropout;
        let drop = p > 0.0 && rng.is_some();
        let scale = (d as f64).sqrt();
        let embed = self.mat(self.ids.embed);
        let mut x = Array2::zeros((len, d));
        for (t, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(t);
            row.assign(&self.positions.row(t));
            row.scaled_add(scale, &embed.row(tok as usize));
        }
        let emb_mask = if drop {
            let m = dropout_mask(rng.as_deref_mut().expect("rng"), len, d, p);
            x *= &m;
            Some(m)
        } else {
            None
        };

        let heads = self.config.num_heads;
        let dh = d / heads;
        let att_scale = 1.0 / (dh as f64).sqrt();
        let mut layers = Vec::with_capacity(self.ids.layers.len());
        for li in &self.ids.layers {
            let (h1, ln1) = ops::layer_norm(&x.view(), &self.vecp(li.ln1_g), &self.vecp(li.ln1_b));
            let q = h1.dot(&self.mat(li.wq)) + self.vecp(li.bq);
            let k = h1.dot(&self.mat(li.wk)) + self.vecp(li.bk);
            let v = h1.dot(&self.mat(li.wv)) + self.vecp(li.bv);
            let mut ctx = Array2::zeros((len, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * att_scale;
                ops::softmax_rows(&mut scores);
                ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                probs.push(scores);
            }
            let mut attn = ctx.dot(&self.mat(li.wo)) + self.vecp(li.bo);
            let attn_mask = if drop {
                let m = dropout_mask(rng.as_deref_mut().expect("rng"), len, d, p);
                attn *= &m;
                Some(m)
            } else {
                None
            };
            let x_mid = &x + &attn;
            let (h2, ln2) = ops::layer_norm(&x_mid.view(), &self.vecp(li.ln2_g), &self.vecp(li.ln2_b));
            let z1 = h2.dot(&self.mat(li.w1)) + self.vecp(li.b1);
            let a1 = z1.mapv(ops::gelu);
            let mut f = a1.dot(&self.mat(li.w2)) + self.vecp(li.b2);
            let ff_mask = if drop {
                let m = dropout_mask(rng.as_deref_mut().expect("rng"), len, d, p);
                f *= &m;
                Some(m)
            } else {
                None
            };
            x = x_mid + f;
            layers.push(LayerCache { ln1, h1, q, k, v, probs, ctx, attn_mask, ln2, h2, z1, a1, ff_mask });
        }
        let (y, lnf) = ops::layer_norm(&x.view(), &self.vecp(self.ids.lnf_g), &self.vecp(self.ids.lnf_b));
        let pooled = y.mean_axis(Axis(0)).expect("non-empty sequence");
        ExampleCache { tokens, emb_mask, layers, lnf, pooled }
    }

    fn heads(&self, pooled: &ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let label = pooled.dot(&self.mat(self.ids.label_w)) + self.vecp(self.ids.label_b);
        // The domain branch reads the pooled features through the reversal
        // node, which is the identity going forward.
        let domain = pooled.dot(&self.mat(self.ids.domain_w)) + self.vecp(self.ids.domain_b);
        (label, domain)
    }

    /// Inference forward pass (dropout off). PAD tokens are ignored.
    pub fn forward(&self, batch: &[Vec<u32>]) -> Result<ForwardOutput, NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::Dimension("empty batch".into()));
        }
        let b = batch.len();
        let mut out = ForwardOutput {
            label_logits: Array2::zeros((b, Label::COUNT)),
            domain_logits: Array2::zeros((b, self.num_domains())),
            pooled: Array2::zeros((b, self.config.embedding_dim)),
        };
        for (i, seq) in batch.iter().enumerate() {
            let cache = self.forward_example(self.prepare(seq)?, None);
            let (l, dm) = self.heads(&cache.pooled.view());
            out.label_logits.row_mut(i).assign(&l);
            out.domain_logits.row_mut(i).assign(&dm);
            out.pooled.row_mut(i).assign(&cache.pooled);
        }
        Ok(out)
    }

    /// Label probabilities for one text.
    pub fn predict_proba(&self, text: &str) -> [f64; 4] {
        let enc = self.encode(text);
        let out = self.forward(&[enc.ids]).expect("encoded ids are in range");
        let p = ops::softmax(&out.label_logits.row(0));
        [p[0], p[1], p[2], p[3]]
    }

    /// Forward plus backward for a batch. The returned gradients are those of
    /// the batch-mean loss `sum_i (CE_label_i + CE_domain_i) / B`, except that
    /// the domain term reaches the shared encoder through the reversal node
    /// (scaled by `-grl_lambda`). Dropout is active when `rng` is given.
    pub fn backward(
        &self,
        batch: &[Vec<u32>],
        targets: &[Target],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossBreakdown, Gradients), NeuralError> {
        if batch.is_empty() || batch.len() != targets.len() {
            return Err(NeuralError::Dimension(format!(
                "batch of {} sequences with {} targets",
                batch.len(),
                targets.len()
            )));
        }
        for t in targets {
            if let Some(dom) = t.domain {
                if dom >= self.num_domains() {
                    return Err(NeuralError::TargetOutOfRange(format!("domain target {dom} with {} domains", self.num_domains())));
                }
            }
        }
        let inv_b = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros(self.params.len());
        let mut loss = LossBreakdown::default();
        for (seq, target) in batch.iter().zip(targets) {
            let cache = self.forward_example(self.prepare(seq)?, rng.as_deref_mut());
            let (label_logits, domain_logits) = self.heads(&cache.pooled.view());
            let mut dlabel = Array1::zeros(Label::COUNT);
            if let Some(label) = target.label {
                let logp = ops::log_softmax(&label_logits.view());
                let ce = -logp[label.code()];
                loss.label += ce * inv_b;
                loss.label_count += 1;
                if super::argmax(label_logits.view()) == label.code() {
                    loss.label_correct += 1;
                }
                dlabel = logp.mapv(f64::exp);
                dlabel[label.code()] -= 1.0;
                dlabel *= inv_b;
            }
            let mut ddomain = Array1::zeros(self.num_domains());
            if let Some(dom) = target.domain {
                let logp = ops::log_softmax(&domain_logits.view());
                loss.domain += -logp[dom] * inv_b;
                loss.domain_count += 1;
                if super::argmax(domain_logits.view()) == dom {
                    loss.domain_correct += 1;
                }
                ddomain = logp.mapv(f64::exp);
                ddomain[dom] -= 1.0;
                ddomain *= inv_b;
            }
            self.backward_example(&cache, &dlabel, &ddomain, &mut grads);
        }
        loss.total = loss.label + loss.domain;
        Ok((loss, grads))
    }

    fn grad_mat<'g>(&self, grads: &'g mut Gradients, id: usize) -> ArrayViewMut2<'g, f64> {
        let t = &self.layout.tensors[id];
        ArrayViewMut2::from_shape((t.rows, t.cols), &mut grads.data[t.range()]).expect("layout shape")
    }

    fn grad_vec<'g>(&self, grads: &'g mut Gradients, id: usize) -> ArrayViewMut1<'g, f64> {
        let t = &self.layout.tensors[id];
        ArrayViewMut1::from(&mut grads.data[t.range()])
    }

    fn backward_example(&self, c: &ExampleCache, dlabel: &Array1<f64>, ddomain: &Array1<f64>, grads: &mut Gradients) {
        let pooled = c.pooled.view();
        add_outer(self.grad_mat(grads, self.ids.label_w), &pooled, &dlabel.view());
        self.grad_vec(grads, self.ids.label_b).scaled_add(1.0, dlabel);
        let mut dpooled = self.mat(self.ids.label_w).dot(dlabel);
        if !ddomain.is_empty() {
            add_outer(self.grad_mat(grads, self.ids.domain_w), &pooled, &ddomain.view());
            self.grad_vec(grads, self.ids.domain_b).scaled_add(1.0, ddomain);
            let upstream = self.mat(self.ids.domain_w).dot(ddomain);
            let reversed = grl_backward(upstream.as_slice().expect("contiguous"), self.grl_lambda);
            dpooled += &ArrayView1::from(&reversed[..]);
        }

        let len = c.tokens.len();
        let d = self.config.embedding_dim;
        let dy = Array2::from_shape_fn((len, d), |(_, j)| dpooled[j] / len as f64);
        let mut dx = {
            let gain = self.vecp(self.ids.lnf_g);
            let mut dg = Array1::zeros(d);
            let mut db = Array1::zeros(d);
            let dx = ops::layer_norm_backward(&dy.view(), &c.lnf, &gain, dg.view_mut(), db.view_mut());
            self.grad_vec(grads, self.ids.lnf_g).scaled_add(1.0, &dg);
            self.grad_vec(grads, self.ids.lnf_b).scaled_add(1.0, &db);
            dx
        };

        let heads = self.config.num_heads;
        let dh = d / heads;
        let att_scale = 1.0 / (dh as f64).sqrt();
        for (li, lc) in self.ids.layers.iter().zip(&c.layers).rev() {
            // feed-forward branch: x_out = x_mid + drop(gelu(h2 W1 + b1) W2 + b2)
            let mut df = dx.clone();
            if let Some(m) = &lc.ff_mask {
                df *= m;
            }
            self.grad_mat(grads, li.w2).scaled_add(1.0, &lc.a1.t().dot(&df));
            self.grad_vec(grads, li.b2).scaled_add(1.0, &df.sum_axis(Axis(0)));
            let da1 = df.dot(&self.mat(li.w2).t());
            let dz1 = &da1 * &lc.z1.mapv(ops::gelu_grad);
            self.grad_mat(grads, li.w1).scaled_add(1.0, &lc.h2.t().dot(&dz1));
            self.grad_vec(grads, li.b1).scaled_add(1.0, &dz1.sum_axis(Axis(0)));
            let dh2 = dz1.dot(&self.mat(li.w1).t());
            let mut dg = Array1::zeros(d);
            let mut db = Array1::zeros(d);
            let dx_mid = dx + ops::layer_norm_backward(&dh2.view(), &lc.ln2, &self.vecp(li.ln2_g), dg.view_mut(), db.view_mut());
            self.grad_vec(grads, li.ln2_g).scaled_add(1.0, &dg);
            self.grad_vec(grads, li.ln2_b).scaled_add(1.0, &db);

            // attention branch: x_mid = x_in + drop(ctx Wo + bo)
            let mut da = dx_mid.clone();
            if let Some(m) = &lc.attn_mask {
                da *= m;
            }
            self.grad_mat(grads, li.wo).scaled_add(1.0, &lc.ctx.t().dot(&da));
            self.grad_vec(grads, li.bo).scaled_add(1.0, &da.sum_axis(Axis(0)));
            let dctx = da.dot(&self.mat(li.wo).t());
            let mut dq = Array2::zeros((len, d));
            let mut dk = Array2::zeros((len, d));
            let mut dv = Array2::zeros((len, d));
            for (h, p) in lc.probs.iter().enumerate() {
                let cols = s![.., h * dh..(h + 1) * dh];
                let dctx_h = dctx.slice(cols);
                dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
                let dp = dctx_h.dot(&lc.v.slice(cols).t());
                let ds = ops::softmax_rows_backward(p, &dp) * att_scale;
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            let ht = lc.h1.t();
            self.grad_mat(grads, li.wq).scaled_add(1.0, &ht.dot(&dq));
            self.grad_vec(grads, li.bq).scaled_add(1.0, &dq.sum_axis(Axis(0)));
            self.grad_mat(grads, li.wk).scaled_add(1.0, &ht.dot(&dk));
            self.grad_vec(grads, li.bk).scaled_add(1.0, &dk.sum_axis(Axis(0)));
            self.grad_mat(grads, li.wv).scaled_add(1.0, &ht.dot(&dv));
            self.grad_vec(grads, li.bv).scaled_add(1.0, &dv.sum_axis(Axis(0)));
            let dh1 = dq.dot(&self.mat(li.wq).t()) + dk.dot(&self.mat(li.wk).t()) + dv.dot(&self.mat(li.wv).t());
            let mut dg = Array1::zeros(d);
            let mut db = Array1::zeros(d);
            dx = dx_mid + ops::layer_norm_backward(&dh1.view(), &lc.ln1, &self.vecp(li.ln1_g), dg.view_mut(), db.view_mut());
            self.grad_vec(grads, li.ln1_g).scaled_add(1.0, &dg);
            self.grad_vec(grads, li.ln1_b).scaled_add(1.0, &db);
        }

        if let Some(m) = &c.emb_mask {
            dx *= m;
        }
        let scale = (d as f64).sqrt();
        let mut gemb = self.grad_mat(grads, self.ids.embed);
        for (t, &tok) in c.tokens.iter().enumerate() {
            gemb.row_mut(tok as usize).scaled_add(scale, &dx.row(t));
        }
    }
}
