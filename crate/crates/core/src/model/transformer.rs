//! The dual-head toy model: a pre-LN causal transformer whose final hidden
//! states feed an LM head at every position and a small MLP regression head
//! at a single pooled position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{
    layer_norm, layer_norm_backward, matmul, matmul_backward, silu, silu_grad, softmax_in_place, LnCache,
};
use super::{HeadVariant, ModelError, ToyBackboneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerLayout>,
    lnf_g: usize,
    lnf_b: usize,
    lm_w: usize,
    lm_b: usize,
    r1_w: usize,
    r1_b: usize,
    r2_w: usize,
    r2_b: usize,
    total: usize,
}

impl Layout {
    fn new(c: &ToyBackboneConfig, variant: HeadVariant) -> Layout {
        let (v, h, s, f, m) = (c.vocab_size, c.hidden_size, c.max_seq_len, c.mlp_dim(), variant.inner_dim(c.hidden_size));
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let tok_emb = take(v * h);
        let pos_emb = take(s * h);
        let layers = (0..c.layers)
            .map(|_| LayerLayout {
                ln1_g: take(h),
                ln1_b: take(h),
                wq: take(h * h),
                wk: take(h * h),
                wv: take(h * h),
                wo: take(h * h),
                ln2_g: take(h),
                ln2_b: take(h),
                w1: take(h * f),
                b1: take(f),
                w2: take(f * h),
                b2: take(h),
            })
            .collect();
        let lnf_g = take(h);
        let lnf_b = take(h);
        let lm_w = take(h * v);
        let lm_b = take(v);
        let r1_w = take(h * m);
        let r1_b = take(m);
        let r2_w = take(m * 3);
        let r2_b = take(3);
        Layout { tok_emb, pos_emb, layers, lnf_g, lnf_b, lm_w, lm_b, r1_w, r1_b, r2_w, r2_b, total: off }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// First index of the regression-head parameters; they occupy the tail.
    pub fn regression_head_start(&self) -> usize {
        self.r1_w
    }
}

/// Where the regression head reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PoolStrategy {
    /// Hidden state of the final prompt token.
    Prefill,
    /// Hidden state at the first occurrence of `anchor` at or after the final
    /// prompt token.
    AnchorToken { anchor: u32 },
}

/// Selects one row of `hidden` (`len x h`, row-major).
pub fn pool(
    hidden: &[f64],
    hidden_size: usize,
    tokens: &[u32],
    prompt_len: usize,
    strategy: PoolStrategy,
) -> Result<Vec<f64>, ModelError> {
    let pos = pool_position(tokens, prompt_len, strategy)?;
    Ok(hidden[pos * hidden_size..(pos + 1) * hidden_size].to_vec())
}

fn pool_position(tokens: &[u32], prompt_len: usize, strategy: PoolStrategy) -> Result<usize, ModelError> {
    if prompt_len == 0 || prompt_len > tokens.len() {
        return Err(ModelError::EmptyPrompt);
    }
    match strategy {
        PoolStrategy::Prefill => Ok(prompt_len - 1),
        PoolStrategy::AnchorToken { anchor } => tokens[prompt_len - 1..]
            .iter()
            .position(|&t| t == anchor)
            .map(|p| p + prompt_len - 1)
            .ok_or(ModelError::AnchorNotFound(anchor)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Final layer-normalized hidden states, `len x h`.
    pub hidden_states: Vec<f64>,
    /// `len x vocab`.
    pub lm_logits: Vec<f64>,
    pub pooled: Vec<f64>,
    pub scores: [f64; 3],
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Vec<f64>,
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads x len x len`, zero above the diagonal.
    probs: Vec<f64>,
    o: Vec<f64>,
    ln2: LnCache,
    c: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
}

/// Activations kept for [`DualHeadModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    y: Vec<f64>,
    pool_pos: usize,
    z1: Vec<f64>,
    s1: Vec<f64>,
    /// Per-unit dropout multiplier (0 or 1/(1-p)); all ones when dropout is off.
    keep: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualHeadModel {
    pub config: ToyBackboneConfig,
    pub variant: HeadVariant,
    pub params: Vec<f64>,
}

impl DualHeadModel {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: ToyBackboneConfig, variant: HeadVariant) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config, variant);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; layout.total];
        let (v, h, s, f, m) =
            (config.vocab_size, config.hidden_size, config.max_seq_len, config.mlp_dim(), variant.inner_dim(config.hidden_size));
        let mut fill = |off: usize, n: usize, bound: f64, rng: &mut ChaCha8Rng| {
            for p in &mut params[off..off + n] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        let resid = 1.0 / (2.0 * config.layers as f64).sqrt();
        fill(layout.tok_emb, v * h, 0.5, &mut rng);
        fill(layout.pos_emb, s * h, 0.1, &mut rng);
        for l in &layout.layers {
            fill(l.wq, h * h, (1.0 / h as f64).sqrt(), &mut rng);
            fill(l.wk, h * h, (1.0 / h as f64).sqrt(), &mut rng);
            fill(l.wv, h * h, (1.0 / h as f64).sqrt(), &mut rng);
            fill(l.wo, h * h, resid * (1.0 / h as f64).sqrt(), &mut rng);
            fill(l.w1, h * f, (1.0 / h as f64).sqrt(), &mut rng);
            fill(l.w2, f * h, resid * (1.0 / f as f64).sqrt(), &mut rng);
        }
        fill(layout.lm_w, h * v, (1.0 / h as f64).sqrt(), &mut rng);
        fill(layout.r1_w, h * m, (1.0 / h as f64).sqrt(), &mut rng);
        fill(layout.r2_w, m * 3, (1.0 / m as f64).sqrt(), &mut rng);
        for l in &layout.layers {
            params[l.ln1_g..l.ln1_g + h].fill(1.0);
            params[l.ln2_g..l.ln2_g + h].fill(1.0);
        }
        params[layout.lnf_g..layout.lnf_g + h].fill(1.0);
        Ok(DualHeadModel { config, variant, params })
    }

    /// Rebuilds a model around an existing parameter vector.
    pub fn from_params(config: ToyBackboneConfig, variant: HeadVariant, params: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config, variant);
        if params.len() != layout.total {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(DualHeadModel { config, variant, params })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config, self.variant)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn slice(&self, off: usize, n: usize) -> &[f64] {
        &self.params[off..off + n]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        if tokens.len() > self.config.max_seq_len {
            return Err(ModelError::SequenceTooLong { len: tokens.len(), max: self.config.max_seq_len });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { token: t, vocab: self.config.vocab_size });
        }
        Ok(())
    }

    /// Inference forward pass with prefill pooling and dropout off.
    pub fn forward(&self, tokens: &[u32], prompt_len: usize) -> Result<ForwardOutput, ModelError> {
        self.forward_with(tokens, prompt_len, PoolStrategy::Prefill, None::<&mut ChaCha8Rng>).map(|(o, _)| o)
    }

    /// Regression scores only. Reads nothing past the pooled position, so
    /// appending tokens after the prompt cannot change the result.
    pub fn score(&self, prompt: &[u32]) -> Result<[f64; 3], ModelError> {
        self.forward(prompt, prompt.len()).map(|o| o.scores)
    }

    /// Full forward pass. Passing an RNG enables regression-head dropout.
    pub fn forward_with<R: Rng>(
        &self,
        tokens: &[u32],
        prompt_len: usize,
        strategy: PoolStrategy,
        dropout: Option<&mut R>,
    ) -> Result<(ForwardOutput, ForwardCache), ModelError> {
        let pool_pos = pool_position(tokens, prompt_len, strategy)?;
        self.check_tokens(tokens)?;
        let lay = self.layout();
        let c = &self.config;
        let (h, v, t_len) = (c.hidden_size, c.vocab_size, tokens.len());

        let mut x = vec![0.0; t_len * h];
        for (t, &tok) in tokens.iter().enumerate() {
            let e = self.slice(lay.tok_emb + tok as usize * h, h);
            let p = self.slice(lay.pos_emb + t * h, h);
            for i in 0..h {
                x[t * h + i] = e[i] + p[i];
            }
        }
        let mut layers = Vec::with_capacity(c.layers);
        for l in &lay.layers {
            let (x_next, cache) = self.layer_forward(l, x, t_len);
            layers.push(cache);
            x = x_next;
        }
        let (y, lnf) = layer_norm(&x, t_len, h, self.slice(lay.lnf_g, h), self.slice(lay.lnf_b, h));
        let lm_logits = matmul(&y, t_len, self.slice(lay.lm_w, h * v), h, v, Some(self.slice(lay.lm_b, v)));

        let pooled = y[pool_pos * h..(pool_pos + 1) * h].to_vec();
        let m = self.variant.inner_dim(h);
        let z1 = matmul(&pooled, 1, self.slice(lay.r1_w, h * m), h, m, Some(self.slice(lay.r1_b, m)));
        let s1: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();
        let keep: Vec<f64> = match dropout {
            Some(rng) => {
                let p = self.variant.dropout();
                (0..m).map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) }).collect()
            }
            None => vec![1.0; m],
        };
        let dropped: Vec<f64> = s1.iter().zip(&keep).map(|(a, b)| a * b).collect();
        let out = matmul(&dropped, 1, self.slice(lay.r2_w, m * 3), m, 3, Some(self.slice(lay.r2_b, 3)));
        let scores = [out[0], out[1], out[2]];

        let output = ForwardOutput { hidden_states: y.clone(), lm_logits, pooled, scores };
        let cache = ForwardCache { tokens: tokens.to_vec(), layers, lnf, y, pool_pos, z1, s1, keep };
        Ok((output, cache))
    }

    fn layer_forward(&self, l: &LayerLayout, x_in: Vec<f64>, t_len: usize) -> (Vec<f64>, LayerCache) {
        let c = &self.config;
        let (h, f, nh, hd) = (c.hidden_size, c.mlp_dim(), c.heads, c.head_dim());
        let (a, ln1) = layer_norm(&x_in, t_len, h, self.slice(l.ln1_g, h), self.slice(l.ln1_b, h));
        let q = matmul(&a, t_len, self.slice(l.wq, h * h), h, h, None);
        let k = matmul(&a, t_len, self.slice(l.wk, h * h), h, h, None);
        let v = matmul(&a, t_len, self.slice(l.wv, h * h), h, h, None);
        let scale = 1.0 / (hd as f64).sqrt();
        let mut probs = vec![0.0; nh * t_len * t_len];
        let mut o = vec![0.0; t_len * h];
        for head in 0..nh {
            let base = head * hd;
            for t in 0..t_len {
                let row = &mut probs[(head * t_len + t) * t_len..(head * t_len + t) * t_len + t + 1];
                for (u, r) in row.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for d in 0..hd {
                        dot += q[t * h + base + d] * k[u * h + base + d];
                    }
                    *r = dot * scale;
                }
                softmax_in_place(row);
                for (u, &p) in row.iter().enumerate() {
                    for d in 0..hd {
                        o[t * h + base + d] += p * v[u * h + base + d];
                    }
                }
            }
        }
        let attn = matmul(&o, t_len, self.slice(l.wo, h * h), h, h, None);
        let x_mid: Vec<f64> = x_in.iter().zip(&attn).map(|(a, b)| a + b).collect();
        let (cn, ln2) = layer_norm(&x_mid, t_len, h, self.slice(l.ln2_g, h), self.slice(l.ln2_b, h));
        let u = matmul(&cn, t_len, self.slice(l.w1, h * f), h, f, Some(self.slice(l.b1, f)));
        let act: Vec<f64> = u.iter().map(|&z| silu(z)).collect();
        let mlp = matmul(&act, t_len, self.slice(l.w2, f * h), f, h, Some(self.slice(l.b2, h)));
        let x_out: Vec<f64> = x_mid.iter().zip(&mlp).map(|(a, b)| a + b).collect();
        (x_out, LayerCache { x_in, ln1, a, q, k, v, probs, o, ln2, c: cn, u, act })
    }

    /// Logits of the last position only; used by the sampler.
    pub fn next_token_logits(&self, tokens: &[u32]) -> Result<Vec<f64>, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        self.check_tokens(tokens)?;
        let lay = self.layout();
        let c = &self.config;
        let (h, v, t_len) = (c.hidden_size, c.vocab_size, tokens.len());
        let mut x = vec![0.0; t_len * h];
        for (t, &tok) in tokens.iter().enumerate() {
            let e = self.slice(lay.tok_emb + tok as usize * h, h);
            let p = self.slice(lay.pos_emb + t * h, h);
            for i in 0..h {
                x[t * h + i] = e[i] + p[i];
            }
        }
        for l in &lay.layers {
            x = self.layer_forward(l, x, t_len).0;
        }
        let last = &x[(t_len - 1) * h..];
        let (y, _) = layer_norm(last, 1, h, self.slice(lay.lnf_g, h), self.slice(lay.lnf_b, h));
        Ok(matmul(&y, 1, self.slice(lay.lm_w, h * v), h, v, Some(self.slice(lay.lm_b, v))))
    }

    /// Gradient of `sum(dlogits * lm_logits) + dscores . scores` with respect
    /// to every parameter. `dlogits` is `len x vocab` or absent.
    pub fn backward(&self, cache: &ForwardCache, dlogits: Option<&[f64]>, dscores: [f64; 3]) -> Vec<f64> {
        let lay = self.layout();
        let c = &self.config;
        let (h, v, f, nh, hd) = (c.hidden_size, c.vocab_size, c.mlp_dim(), c.heads, c.head_dim());
        let t_len = cache.tokens.len();
        let mut g = vec![0.0; self.params.len()];

        let mut dy = vec![0.0; t_len * h];
        if let Some(dl) = dlogits {
            assert_eq!(dl.len(), t_len * v, "dlogits shape");
            let (before, rest) = g.split_at_mut(lay.lm_b);
            let dw = &mut before[lay.lm_w..lay.lm_w + h * v];
            dy = matmul_backward(&cache.y, dl, t_len, self.slice(lay.lm_w, h * v), h, v, dw, Some(&mut rest[..v]));
        }

        if dscores.iter().any(|&d| d != 0.0) {
            let m = self.variant.inner_dim(h);
            let dropped: Vec<f64> = cache.s1.iter().zip(&cache.keep).map(|(a, b)| a * b).collect();
            let (before, rest) = g.split_at_mut(lay.r2_b);
            let d_dropped = matmul_backward(
                &dropped,
                &dscores,
                1,
                self.slice(lay.r2_w, m * 3),
                m,
                3,
                &mut before[lay.r2_w..lay.r2_w + m * 3],
                Some(&mut rest[..3]),
            );
            let dz1: Vec<f64> =
                (0..m).map(|i| d_dropped[i] * cache.keep[i] * silu_grad(cache.z1[i])).collect();
            let pooled = &cache.y[cache.pool_pos * h..(cache.pool_pos + 1) * h];
            let (before, rest) = g.split_at_mut(lay.r1_b);
            let dpooled = matmul_backward(
                pooled,
                &dz1,
                1,
                self.slice(lay.r1_w, h * m),
                h,
                m,
                &mut before[lay.r1_w..lay.r1_w + h * m],
                Some(&mut rest[..m]),
            );
            for i in 0..h {
                dy[cache.pool_pos * h + i] += dpooled[i];
            }
        }

        let mut dx = {
            let (before, rest) = g.split_at_mut(lay.lnf_b);
            layer_norm_backward(
                &dy,
                &cache.lnf,
                t_len,
                h,
                self.slice(lay.lnf_g, h),
                &mut before[lay.lnf_g..lay.lnf_g + h],
                &mut rest[..h],
            )
        };

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // MLP branch.
            let dact = {
                let (before, rest) = g.split_at_mut(l.b2);
                matmul_backward(&lc.act, &dx, t_len, self.slice(l.w2, f * h), f, h, &mut before[l.w2..l.w2 + f * h], Some(&mut rest[..h]))
            };
            let du: Vec<f64> = dact.iter().zip(&lc.u).map(|(d, &u)| d * silu_grad(u)).collect();
            let dc = {
                let (before, rest) = g.split_at_mut(l.b1);
                matmul_backward(&lc.c, &du, t_len, self.slice(l.w1, h * f), h, f, &mut before[l.w1..l.w1 + h * f], Some(&mut rest[..f]))
            };
            let dmid = {
                let (before, rest) = g.split_at_mut(l.ln2_b);
                layer_norm_backward(&dc, &lc.ln2, t_len, h, self.slice(l.ln2_g, h), &mut before[l.ln2_g..l.ln2_g + h], &mut rest[..h])
            };
            for (a, b) in dx.iter_mut().zip(&dmid) {
                *a += b;
            }

            // Attention branch.
            let d_o = matmul_backward(&lc.o, &dx, t_len, self.slice(l.wo, h * h), h, h, &mut g[l.wo..l.wo + h * h], None);
            let scale = 1.0 / (hd as f64).sqrt();
            let mut dq = vec![0.0; t_len * h];
            let mut dk = vec![0.0; t_len * h];
            let mut dv = vec![0.0; t_len * h];
            let mut dp = vec![0.0; t_len];
            for head in 0..nh {
                let base = head * hd;
                for t in 0..t_len {
                    let p = &lc.probs[(head * t_len + t) * t_len..(head * t_len + t) * t_len + t + 1];
                    let mut dot_pd = 0.0;
                    for u in 0..=t {
                        let mut acc = 0.0;
                        for d in 0..hd {
                            acc += d_o[t * h + base + d] * lc.v[u * h + base + d];
                            dv[u * h + base + d] += p[u] * d_o[t * h + base + d];
                        }
                        dp[u] = acc;
                        dot_pd += p[u] * acc;
                    }
                    for u in 0..=t {
                        let ds = p[u] * (dp[u] - dot_pd) * scale;
                        for d in 0..hd {
                            dq[t * h + base + d] += ds * lc.k[u * h + base + d];
                            dk[u * h + base + d] += ds * lc.q[t * h + base + d];
                        }
                    }
                }
            }
            let mut da = matmul_backward(&lc.a, &dq, t_len, self.slice(l.wq, h * h), h, h, &mut g[l.wq..l.wq + h * h], None);
            let da_k = matmul_backward(&lc.a, &dk, t_len, self.slice(l.wk, h * h), h, h, &mut g[l.wk..l.wk + h * h], None);
            let da_v = matmul_backward(&lc.a, &dv, t_len, self.slice(l.wv, h * h), h, h, &mut g[l.wv..l.wv + h * h], None);
            for i in 0..da.len() {
                da[i] += da_k[i] + da_v[i];
            }
            let din = {
                let (before, rest) = g.split_at_mut(l.ln1_b);
                layer_norm_backward(&da, &lc.ln1, t_len, h, self.slice(l.ln1_g, h), &mut before[l.ln1_g..l.ln1_g + h], &mut rest[..h])
            };
            for (a, b) in dx.iter_mut().zip(&din) {
                *a += b;
            }
            debug_assert_eq!(lc.x_in.len(), dx.len());
        }

        for (t, &tok) in cache.tokens.iter().enumerate() {
            for i in 0..h {
                g[lay.tok_emb + tok as usize * h + i] += dx[t * h + i];
                g[lay.pos_emb + t * h + i] += dx[t * h + i];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::relative_error;

    fn tiny(variant: HeadVariant) -> DualHeadModel {
        let cfg = ToyBackboneConfig { vocab_size: 16, hidden_size: 8, layers: 1, heads: 2, max_seq_len: 12, seed: 3 };
        DualHeadModel::new(cfg, variant).unwrap()
    }

    fn objective(model: &DualHeadModel, tokens: &[u32], prompt_len: usize, wl: &[f64], ws: [f64; 3]) -> f64 {
        let out = model.forward(tokens, prompt_len).unwrap();
        out.lm_logits.iter().zip(wl).map(|(a, b)| a * b).sum::<f64>()
            + out.scores.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn full_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for variant in [HeadVariant::Evaluator, HeadVariant::Reward] {
            let model = tiny(variant);
            let tokens: Vec<u32> = (0..7).map(|_| rng.gen_range(0..16)).collect();
            let wl: Vec<f64> = (0..7 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ws = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (_, cache) = model.forward_with(&tokens, 4, PoolStrategy::Prefill, None::<&mut ChaCha8Rng>).unwrap();
            let analytic = model.backward(&cache, Some(&wl), ws);
            let mut probe = model.clone();
            let fd = crate::losses::fd::gradient(&model.params, 1e-5, |p| {
                probe.params.copy_from_slice(p);
                objective(&probe, &tokens, 4, &wl, ws)
            });
            assert!(relative_error(&analytic, &fd) < 1e-6, "{variant:?}");
        }
    }

    #[test]
    fn causal_logits() {
        let model = tiny(HeadVariant::Evaluator);
        let a = model.forward(&[1, 2, 3, 4, 5], 2).unwrap();
        let b = model.forward(&[1, 2, 3, 9, 9], 2).unwrap();
        assert_eq!(a.lm_logits[..3 * 16], b.lm_logits[..3 * 16]);
        assert_ne!(a.lm_logits[3 * 16..], b.lm_logits[3 * 16..]);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn next_token_logits_match_last_row() {
        let model = tiny(HeadVariant::Reward);
        let toks = [3, 1, 4, 1, 5];
        let full = model.forward(&toks, 5).unwrap();
        let last = model.next_token_logits(&toks).unwrap();
        assert_eq!(&full.lm_logits[4 * 16..], &last[..]);
    }

    #[test]
    fn anchor_pooling() {
        let model = tiny(HeadVariant::Evaluator);
        let toks = [1, 2, 7, 3];
        let out = model.forward(&toks, 3).unwrap();
        let anchored = pool(&out.hidden_states, 8, &toks, 3, PoolStrategy::AnchorToken { anchor: 7 }).unwrap();
        assert_eq!(anchored, out.pooled);
        assert_eq!(
            pool(&out.hidden_states, 8, &toks, 3, PoolStrategy::AnchorToken { anchor: 11 }),
            Err(ModelError::AnchorNotFound(11))
        );
        assert_eq!(model.forward(&toks, 0), Err(ModelError::EmptyPrompt));
    }

    #[test]
    fn input_validation() {
        let model = tiny(HeadVariant::Evaluator);
        assert!(matches!(model.forward(&[16], 1), Err(ModelError::TokenOutOfRange { .. })));
        assert!(matches!(model.forward(&[0; 13], 1), Err(ModelError::SequenceTooLong { .. })));
    }
}
