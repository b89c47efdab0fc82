//! Pre-norm causal decoder with optional MoE blocks, and its reverse pass.
//!
//! Each layer computes
//!   h1 = x + Attn(LN1(x))
//!   h2 = h1 + F(LN2(h1))
//! where F is the dense FFN, or at MoE layers either the expert mixture
//! (`replace_ffn`) or the dense FFN applied to the expert mixture
//! (`before_ffn`). The router picks experts per token.

use crate::config::MoePlacement;
use crate::error::{ModelError, Result};
use crate::params::{FfnIds, ParamId, ParameterSet};
use crate::tensor::{
    add_assign, col_sum_acc, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, matmul_acc,
    matmul_at_acc, matmul_bt_acc, softmax_in_place,
};

/// Selected experts and their renormalized gates for one token.
#[derive(Debug, Clone, PartialEq)]
pub struct GateVector {
    /// One entry per expert; zero for experts that were not selected.
    pub gates: Vec<f64>,
    /// Selected expert indices in ascending order.
    pub selected: Vec<usize>,
}

/// Keeps the `top_k` largest logits (ties to the lower index) and returns
/// the softmax restricted to them, which equals the full softmax
/// renormalized over the kept experts.
pub fn gate_from_logits(logits: &[f64], top_k: usize) -> GateVector {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut selected = order[..top_k].to_vec();
    selected.sort_unstable();
    let max = selected.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut gates = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for &i in &selected {
        gates[i] = (logits[i] - max).exp();
        sum += gates[i];
    }
    for &i in &selected {
        gates[i] /= sum;
    }
    GateVector { gates, selected }
}

/// Router logits `x · R` for one hidden vector, then [`gate_from_logits`].
pub fn gate(x: &[f64], router: &[f64], experts: usize, top_k: usize) -> GateVector {
    let mut logits = vec![0.0; experts];
    matmul_acc(&mut logits, x, router, 1, x.len(), experts);
    gate_from_logits(&logits, top_k)
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ExpertCache {
    rows: Vec<usize>,
    dense: DenseCache,
    y: Vec<f64>,
}

#[derive(Debug, Clone)]
struct MoeCache {
    gates: Vec<GateVector>,
    experts: Vec<ExpertCache>,
}

#[derive(Debug, Clone)]
enum FfnCache {
    Dense(DenseCache),
    Moe { moe: MoeCache, frozen: Option<DenseCache> },
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1_xhat: Vec<f64>,
    ln1_rstd: Vec<f64>,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2_xhat: Vec<f64>,
    ln2_rstd: Vec<f64>,
    u: Vec<f64>,
    ffn: FfnCache,
}

/// Everything the reverse pass needs, plus the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf_xhat: Vec<f64>,
    lnf_rstd: Vec<f64>,
    z: Vec<f64>,
    /// (sequence length × vocab) row-major.
    pub logits: Vec<f64>,
    /// Per MoE layer: number of (token, expert) evaluations performed.
    pub expert_evaluations: Vec<usize>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Gate vectors of every token at each MoE layer, in layer order.
    pub fn gates(&self) -> Vec<&[GateVector]> {
        self.layers
            .iter()
            .filter_map(|l| match &l.ffn {
                FfnCache::Moe { moe, .. } => Some(moe.gates.as_slice()),
                FfnCache::Dense(_) => None,
            })
            .collect()
    }
}

fn dense_forward(p: &ParameterSet, ids: FfnIds, input: Vec<f64>, m: usize, d: usize, f: usize) -> (Vec<f64>, DenseCache) {
    let pre = linear(&input, p.get(ids.w1), p.get(ids.b1), m, d, f);
    let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
    let out = linear(&act, p.get(ids.w2), p.get(ids.b2), m, f, d);
    (out, DenseCache { input, pre, act })
}

fn check_input(p: &ParameterSet, ids: &[u32]) -> Result<()> {
    let cfg = &p.config;
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > cfg.context {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            context: cfg.context,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(ModelError::InvalidToken {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(())
}

pub fn forward(p: &ParameterSet, ids: &[u32]) -> Result<ForwardCache> {
    forward_impl(p, ids, false)
}

/// The same network with every MoE block skipped, i.e. the plain backbone.
pub fn forward_dense(p: &ParameterSet, ids: &[u32]) -> Result<ForwardCache> {
    forward_impl(p, ids, true)
}

fn forward_impl(p: &ParameterSet, ids: &[u32], bypass_moe: bool) -> Result<ForwardCache> {
    check_input(p, ids)?;
    let cfg = &p.config;
    let (t, d, f, v) = (ids.len(), cfg.hidden, cfg.ffn_inner, cfg.vocab_size);
    let (nh, dh) = (cfg.heads, cfg.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();
    let lay = &p.layout;

    let mut h = vec![0.0; t * d];
    let (tok, pos) = (p.get(lay.tok_emb), p.get(lay.pos_emb));
    for (i, &id) in ids.iter().enumerate() {
        let row = &mut h[i * d..(i + 1) * d];
        row.copy_from_slice(&tok[id as usize * d..(id as usize + 1) * d]);
        add_assign(row, &pos[i * d..(i + 1) * d]);
    }

    let mut layers = Vec::with_capacity(cfg.layers);
    let mut expert_evaluations = Vec::new();
    for l in &lay.layers {
        let (a, ln1_xhat, ln1_rstd) = layer_norm(&h, p.get(l.ln1_g), p.get(l.ln1_b), d);
        let q = linear(&a, p.get(l.wq), p.get(l.bq), t, d, d);
        let k = linear(&a, p.get(l.wk), p.get(l.bk), t, d, d);
        let vv = linear(&a, p.get(l.wv), p.get(l.bv), t, d, d);
        let mut probs = vec![0.0; nh * t * t];
        let mut ctx = vec![0.0; t * d];
        for hd in 0..nh {
            let off = hd * dh;
            for i in 0..t {
                let row = &mut probs[hd * t * t + i * t..hd * t * t + (i + 1) * t];
                let qi = &q[i * d + off..i * d + off + dh];
                for j in 0..=i {
                    row[j] = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                }
                softmax_in_place(&mut row[..=i]);
                let out = &mut ctx[i * d + off..i * d + off + dh];
                for j in 0..=i {
                    let pj = row[j];
                    for (o, x) in out.iter_mut().zip(&vv[j * d + off..j * d + off + dh]) {
                        *o += pj * x;
                    }
                }
            }
        }
        let attn = linear(&ctx, p.get(l.wo), p.get(l.bo), t, d, d);
        add_assign(&mut h, &attn);

        let (u, ln2_xhat, ln2_rstd) = layer_norm(&h, p.get(l.ln2_g), p.get(l.ln2_b), d);
        let (out, ffn) = match (&l.moe, bypass_moe) {
            (Some(moe), false) => {
                let router = p.get(moe.router);
                let e_count = moe.experts.len();
                let gates: Vec<GateVector> = (0..t)
                    .map(|i| gate(&u[i * d..(i + 1) * d], router, e_count, cfg.top_k))
                    .collect();
                let mut mix = vec![0.0; t * d];
                let mut experts = Vec::with_capacity(e_count);
                let mut evaluations = 0;
                for (e, ids_e) in moe.experts.iter().enumerate() {
                    let rows: Vec<usize> = (0..t).filter(|&i| gates[i].gates[e] != 0.0).collect();
                    let mut input = Vec::with_capacity(rows.len() * d);
                    for &r in &rows {
                        input.extend_from_slice(&u[r * d..(r + 1) * d]);
                    }
                    evaluations += rows.len();
                    let (y, dense) = dense_forward(p, *ids_e, input, rows.len(), d, f);
                    for (n, &r) in rows.iter().enumerate() {
                        let g = gates[r].gates[e];
                        for (o, x) in mix[r * d..(r + 1) * d].iter_mut().zip(&y[n * d..(n + 1) * d]) {
                            *o += g * x;
                        }
                    }
                    experts.push(ExpertCache { rows, dense, y });
                }
                expert_evaluations.push(evaluations);
                let moe_cache = MoeCache { gates, experts };
                match cfg.moe_placement {
                    MoePlacement::ReplaceFfn => (
                        mix,
                        FfnCache::Moe {
                            moe: moe_cache,
                            frozen: None,
                        },
                    ),
                    MoePlacement::BeforeFfn => {
                        let (out, dense) = dense_forward(p, l.ffn, mix, t, d, f);
                        (
                            out,
                            FfnCache::Moe {
                                moe: moe_cache,
                                frozen: Some(dense),
                            },
                        )
                    }
                }
            }
            _ => {
                let (out, dense) = dense_forward(p, l.ffn, u.clone(), t, d, f);
                (out, FfnCache::Dense(dense))
            }
        };
        add_assign(&mut h, &out);
        layers.push(LayerCache {
            ln1_xhat,
            ln1_rstd,
            a,
            q,
            k,
            v: vv,
            probs,
            ctx,
            ln2_xhat,
            ln2_rstd,
            u,
            ffn,
        });
    }

    let (z, lnf_xhat, lnf_rstd) = layer_norm(&h, p.get(lay.lnf_g), p.get(lay.lnf_b), d);
    let logits = linear(&z, p.get(lay.head_w), p.get(lay.head_b), t, d, v);
    if !logits.iter().all(|x| x.is_finite()) {
        return Err(ModelError::NonFinite { tensor: "logits".into() });
    }
    Ok(ForwardCache {
        ids: ids.to_vec(),
        layers,
        lnf_xhat,
        lnf_rstd,
        z,
        logits,
        expert_evaluations,
    })
}

/// Gradient buffers; frozen tensors have no entry at all.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros(p: &ParameterSet) -> Self {
        Self {
            grads: p
                .params
                .iter()
                .map(|x| x.trainable.then(|| vec![0.0; x.tensor.len()]))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    fn take(&mut self, id: ParamId) -> Option<Vec<f64>> {
        self.grads[id].take()
    }

    fn put(&mut self, id: ParamId, g: Option<Vec<f64>>) {
        self.grads[id] = g;
    }

    fn has(&self, id: ParamId) -> bool {
        self.grads[id].is_some()
    }

    /// Adds another set of gradients with the same partition.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                add_assign(a, b);
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn check_finite(&self, p: &ParameterSet) -> Result<()> {
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.iter().all(|x| x.is_finite()) {
                    return Err(ModelError::NonFinite {
                        tensor: format!("grad of {}", p.params[i].name),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Adds `xᵀ·dy` and the column sums of `dy` into the weight and bias
/// gradients of a linear map, and returns `dy·Wᵀ` when `need_input`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    p: &ParameterSet,
    grads: &mut Gradients,
    w: ParamId,
    b: ParamId,
    x: &[f64],
    dy: &[f64],
    m: usize,
    k: usize,
    n: usize,
    dx: Option<&mut [f64]>,
) {
    if let Some(mut gw) = grads.take(w) {
        matmul_at_acc(&mut gw, x, dy, m, k, n);
        grads.put(w, Some(gw));
    }
    if let Some(mut gb) = grads.take(b) {
        col_sum_acc(&mut gb, dy, m, n);
        grads.put(b, Some(gb));
    }
    if let Some(dx) = dx {
        matmul_bt_acc(dx, dy, p.get(w), m, n, k);
    }
}

fn dense_backward(
    p: &ParameterSet,
    grads: &mut Gradients,
    ids: FfnIds,
    cache: &DenseCache,
    dout: &[f64],
    m: usize,
    d: usize,
    f: usize,
) -> Vec<f64> {
    let mut dact = vec![0.0; m * f];
    linear_backward(p, grads, ids.w2, ids.b2, &cache.act, dout, m, f, d, Some(&mut dact));
    for (g, &x) in dact.iter_mut().zip(&cache.pre) {
        *g *= gelu_grad(x);
    }
    let mut din = vec![0.0; m * d];
    linear_backward(p, grads, ids.w1, ids.b1, &cache.input, &dact, m, d, f, Some(&mut din));
    din
}

fn ln_backward(
    p: &ParameterSet,
    grads: &mut Gradients,
    g_id: ParamId,
    b_id: ParamId,
    dy: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    dx: &mut [f64],
) {
    let d = p.params[g_id].tensor.len();
    let mut gg = grads.take(g_id);
    let mut gb = grads.take(b_id);
    layer_norm_backward(dy, xhat, rstd, p.get(g_id), d, dx, gg.as_deref_mut(), gb.as_deref_mut());
    grads.put(g_id, gg);
    grads.put(b_id, gb);
}

/// Reverse pass from `dlogits` (same shape as the logits), accumulating into
/// `grads`. Only trainable tensors are touched; layers below the lowest
/// trainable one are skipped.
pub fn backward(p: &ParameterSet, cache: &ForwardCache, dlogits: &[f64], grads: &mut Gradients) -> Result<()> {
    let cfg = &p.config;
    let lay = &p.layout;
    let (t, d, f, v) = (cache.ids.len(), cfg.hidden, cfg.ffn_inner, cfg.vocab_size);
    let (nh, dh) = (cfg.heads, cfg.head_dim());
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dz = vec![0.0; t * d];
    linear_backward(p, grads, lay.head_w, lay.head_b, &cache.z, dlogits, t, d, v, Some(&mut dz));
    let mut dh_res = vec![0.0; t * d];
    ln_backward(p, grads, lay.lnf_g, lay.lnf_b, &dz, &cache.lnf_xhat, &cache.lnf_rstd, &mut dh_res);

    let Some(lowest) = p.lowest_trainable_layer() else {
        return grads.check_finite(p);
    };

    for (li, (l, c)) in lay.layers.iter().zip(&cache.layers).enumerate().rev() {
        if li < lowest {
            break;
        }
        // FFN sub-block: dh_res is the gradient of h2 = h1 + out
        let du = match &c.ffn {
            FfnCache::Dense(dense) => dense_backward(p, grads, l.ffn, dense, &dh_res, t, d, f),
            FfnCache::Moe { moe, frozen } => {
                let moe_ids = l.moe.as_ref().expect("moe cache implies moe layer");
                let dmix = match frozen {
                    Some(dense) => dense_backward(p, grads, l.ffn, dense, &dh_res, t, d, f),
                    None => dh_res.clone(),
                };
                let mut du = vec![0.0; t * d];
                let e_count = moe_ids.experts.len();
                let mut dgate = vec![0.0; t * e_count];
                for (e, (ids_e, ec)) in moe_ids.experts.iter().zip(&moe.experts).enumerate() {
                    let m = ec.rows.len();
                    if m == 0 {
                        continue;
                    }
                    let mut dy = vec![0.0; m * d];
                    for (n, &r) in ec.rows.iter().enumerate() {
                        let dm = &dmix[r * d..(r + 1) * d];
                        dgate[r * e_count + e] = dot(dm, &ec.y[n * d..(n + 1) * d]);
                        let g = moe.gates[r].gates[e];
                        for (o, x) in dy[n * d..(n + 1) * d].iter_mut().zip(dm) {
                            *o = g * x;
                        }
                    }
                    let din = dense_backward(p, grads, *ids_e, &ec.dense, &dy, m, d, f);
                    for (n, &r) in ec.rows.iter().enumerate() {
                        add_assign(&mut du[r * d..(r + 1) * d], &din[n * d..(n + 1) * d]);
                    }
                }
                // softmax restricted to the selected experts
                let mut dlogit = vec![0.0; t * e_count];
                for i in 0..t {
                    let gv = &moe.gates[i];
                    let s: f64 = gv.selected.iter().map(|&e| gv.gates[e] * dgate[i * e_count + e]).sum();
                    for &e in &gv.selected {
                        dlogit[i * e_count + e] = gv.gates[e] * (dgate[i * e_count + e] - s);
                    }
                }
                if let Some(mut gr) = grads.take(moe_ids.router) {
                    matmul_at_acc(&mut gr, &c.u, &dlogit, t, d, e_count);
                    grads.put(moe_ids.router, Some(gr));
                }
                matmul_bt_acc(&mut du, &dlogit, p.get(moe_ids.router), t, e_count, d);
                du
            }
        };
        ln_backward(p, grads, l.ln2_g, l.ln2_b, &du, &c.ln2_xhat, &c.ln2_rstd, &mut dh_res);

        // attention sub-block: dh_res is now the gradient of h1 = x + attn
        let mut dctx = vec![0.0; t * d];
        linear_backward(p, grads, l.wo, l.bo, &c.ctx, &dh_res, t, d, d, Some(&mut dctx));
        let mut dq = vec![0.0; t * d];
        let mut dk = vec![0.0; t * d];
        let mut dv = vec![0.0; t * d];
        let mut dp = vec![0.0; t];
        for hd in 0..nh {
            let off = hd * dh;
            for i in 0..t {
                let row = &c.probs[hd * t * t + i * t..hd * t * t + (i + 1) * t];
                let dci = &dctx[i * d + off..i * d + off + dh];
                let mut s = 0.0;
                for j in 0..=i {
                    dp[j] = dot(dci, &c.v[j * d + off..j * d + off + dh]);
                    s += row[j] * dp[j];
                    for (o, x) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                        *o += row[j] * x;
                    }
                }
                for j in 0..=i {
                    let ds = row[j] * (dp[j] - s) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for x in 0..dh {
                        dq[i * d + off + x] += ds * c.k[j * d + off + x];
                        dk[j * d + off + x] += ds * c.q[i * d + off + x];
                    }
                }
            }
        }
        let mut da = vec![0.0; t * d];
        linear_backward(p, grads, l.wq, l.bq, &c.a, &dq, t, d, d, Some(&mut da));
        linear_backward(p, grads, l.wk, l.bk, &c.a, &dk, t, d, d, Some(&mut da));
        linear_backward(p, grads, l.wv, l.bv, &c.a, &dv, t, d, d, Some(&mut da));
        ln_backward(p, grads, l.ln1_g, l.ln1_b, &da, &c.ln1_xhat, &c.ln1_rstd, &mut dh_res);
    }

    if lowest == 0 {
        if let Some(mut g) = grads.take(lay.tok_emb) {
            for (i, &id) in cache.ids.iter().enumerate() {
                add_assign(&mut g[id as usize * d..(id as usize + 1) * d], &dh_res[i * d..(i + 1) * d]);
            }
            grads.put(lay.tok_emb, Some(g));
        }
        if grads.has(lay.pos_emb) {
            let mut g = grads.take(lay.pos_emb).expect("checked");
            add_assign(&mut g[..t * d], &dh_res);
            grads.put(lay.pos_emb, Some(g));
        }
    }
    grads.check_finite(p)
}

/// Negative log-likelihood of `ids[t + 1]` under row `t` of the logits,
/// weighted by `coef[t]`, for every position but the last. Returns the
/// weighted sum and its gradient with respect to the logits.
pub fn weighted_nll(logits: &[f64], vocab: usize, ids: &[u32], coef: &[f64]) -> (f64, Vec<f64>) {
    let t = ids.len();
    debug_assert_eq!(coef.len(), t.saturating_sub(1));
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (pos, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = &logits[pos * vocab..(pos + 1) * vocab];
        let mut probs = row.to_vec();
        softmax_in_place(&mut probs);
        let target = ids[pos + 1] as usize;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += c * (lse - row[target]);
        let g = &mut grad[pos * vocab..(pos + 1) * vocab];
        for (gv, pv) in g.iter_mut().zip(&probs) {
            *gv = c * pv;
        }
        g[target] -= c;
    }
    (total, grad)
}

/// Mean next-token cross-entropy over the predicted positions.
pub fn clm_loss(logits: &[f64], vocab: usize, ids: &[u32]) -> f64 {
    let n = ids.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    weighted_nll(logits, vocab, ids, &vec![1.0 / n as f64; n]).0
}

/// Greedy decoding: appends the argmax token (lowest id on ties) until
/// `eos`, `max_new` new tokens, or the context limit.
pub fn generate(p: &ParameterSet, prefix: &[u32], max_new: usize, eos: Option<u32>) -> Result<Vec<u32>> {
    if prefix.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let v = p.config.vocab_size;
    let mut seq = prefix.to_vec();
    for _ in 0..max_new {
        if seq.len() >= p.config.context {
            break;
        }
        let logits = forward(p, &seq)?.logits;
        let last = &logits[(seq.len() - 1) * v..seq.len() * v];
        let mut best = 0;
        for (i, &x) in last.iter().enumerate() {
            if x > last[best] {
                best = i;
            }
        }
        seq.push(best as u32);
        if Some(best as u32) == eos {
            break;
        }
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitMode, ModelConfig};

    #[test]
    fn gate_examples() {
        let g = gate_from_logits(&[0.5; 4], 4);
        assert!(g.gates.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let g = gate_from_logits(&[0.1, 0.9, 0.3], 1);
        assert_eq!((g.selected.clone(), g.gates[1]), (vec![1], 1.0));
        let g = gate_from_logits(&[2.0, 1.0, 0.0, 0.0], 2);
        let e = std::f64::consts::E;
        assert!((g.gates[0] - e * e / (e * e + e)).abs() < 1e-12);
        assert!((g.gates[1] - e / (e * e + e)).abs() < 1e-12);
        // ties go to the lower index
        assert_eq!(gate_from_logits(&[1.0, 1.0, 1.0], 2).selected, vec![0, 1]);
    }

    #[test]
    fn loss_examples() {
        let ids: Vec<u32> = (0..11).map(|i| i % 64).collect();
        let logits = vec![0.0; 11 * 64];
        assert!((clm_loss(&logits, 64, &ids) - 64f64.ln()).abs() < 1e-12);

        let mut confident = vec![0.0; 3 * 4];
        confident[1] = 200.0;
        confident[4 + 2] = 200.0;
        assert!(clm_loss(&confident, 4, &[0, 1, 2]) < 1e-80);

        // vocab 2, three positions, two predictions
        let logits = [0.3, -0.2, 1.0, 0.5, 0.0, 0.0];
        let ids = [0, 1, 0];
        let nll = |a: f64, b: f64, pick_a: bool| {
            let lse = (a.exp() + b.exp()).ln();
            lse - if pick_a { a } else { b }
        };
        let want = (nll(0.3, -0.2, false) + nll(1.0, 0.5, true)) / 2.0;
        assert!((clm_loss(&logits, 2, &ids) - want).abs() < 1e-12);
    }

    #[test]
    fn shapes_and_errors() {
        let p = ParameterSet::init(&ModelConfig::tiny()).unwrap();
        let c = forward(&p, &[1, 2, 3]).unwrap();
        assert_eq!(c.logits.len(), 3 * 11);
        assert!(matches!(forward(&p, &[11]), Err(ModelError::InvalidToken { id: 11, .. })));
        assert!(matches!(forward(&p, &[1; 9]), Err(ModelError::SequenceTooLong { .. })));
        assert!(matches!(forward(&p, &[]), Err(ModelError::EmptySequence)));
    }

    #[test]
    fn causal_mask() {
        let p = ParameterSet::init(&ModelConfig::tiny()).unwrap();
        let a = forward(&p, &[1, 2, 3, 4, 5]).unwrap().logits;
        let b = forward(&p, &[1, 2, 3, 9, 0]).unwrap().logits;
        assert_eq!(a[..3 * 11], b[..3 * 11]);
        assert_ne!(a[3 * 11..], b[3 * 11..]);
    }

    #[test]
    fn gates_are_normalized() {
        let cfg = ModelConfig { top_k: 2, ..ModelConfig::tiny() };
        let p = ParameterSet::init(&cfg).unwrap();
        let c = forward(&p, &[1, 5, 7, 2]).unwrap();
        for layer in c.gates() {
            for g in layer {
                let s: f64 = g.selected.iter().map(|&i| g.gates[i]).sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert_eq!(g.gates.iter().filter(|&&x| x != 0.0).count(), 2);
            }
        }
    }

    #[test]
    fn top1_evaluates_one_expert_per_token() {
        let cfg = ModelConfig::desk();
        let p = ParameterSet::init(&cfg).unwrap();
        let c = forward(&p, &[2, 70, 80, 90, 100, 3]).unwrap();
        assert_eq!(c.expert_evaluations, vec![6, 6]);
    }

    #[test]
    fn generation() {
        let p = ParameterSet::init(&ModelConfig { init_mode: InitMode::Reuse, ..ModelConfig::tiny() }).unwrap();
        assert_eq!(generate(&p, &[1, 2], 0, None).unwrap(), vec![1, 2]);
        let a = generate(&p, &[1, 2], 4, None).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, generate(&p, &[1, 2], 4, None).unwrap());
        assert!(generate(&p, &[1; 7], 5, None).unwrap().len() == 8);
    }

    #[test]
    fn fully_masked_batch_has_zero_gradient() {
        let p = ParameterSet::init(&ModelConfig::tiny()).unwrap();
        let ids = [1, 2, 3, 4];
        let c = forward(&p, &ids).unwrap();
        let (loss, dl) = weighted_nll(&c.logits, 11, &ids, &[0.0; 3]);
        assert_eq!(loss, 0.0);
        let mut g = Gradients::zeros(&p);
        backward(&p, &c, &dl, &mut g).unwrap();
        assert!(g.grads.iter().flatten().all(|v| v.iter().all(|&x| x == 0.0)));
    }
}
