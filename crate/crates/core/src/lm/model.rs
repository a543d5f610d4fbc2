//! A small pre-norm decoder-only transformer with tied input/output
//! embeddings, learned absolute positions and a hand-written backward pass.
//!
//! All parameters live in one flat buffer described by [`ParamLayout`], so
//! optimisers, checksums and serialisation treat the model as a single
//! vector. The forward pass accepts an optional block of prefix embeddings
//! (virtual tokens) ahead of the token ids; the backward pass always returns
//! the gradient with respect to that prefix and, on request, with respect to
//! every parameter.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenizer::WordTokenizer;
use crate::scalar::{to_le_bytes, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f64,
}

impl LmConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(format!(
                "hidden size {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            ));
        }
        if self.vocab_size == 0 || self.layers == 0 || self.mlp_hidden == 0 || self.max_positions == 0 {
            return Err("vocab_size, layers, mlp_hidden and max_positions must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub range: Range<usize>,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockLayout {
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    wq: Range<usize>,
    bq: Range<usize>,
    wk: Range<usize>,
    bk: Range<usize>,
    wv: Range<usize>,
    bv: Range<usize>,
    wo: Range<usize>,
    bo: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
    w1: Range<usize>,
    b1: Range<usize>,
    w2: Range<usize>,
    b2: Range<usize>,
}

/// Where each named tensor sits in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    tok_emb: Range<usize>,
    pos_emb: Range<usize>,
    blocks: Vec<BlockLayout>,
    lnf_g: Range<usize>,
    lnf_b: Range<usize>,
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

struct LayoutBuilder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl LayoutBuilder {
    fn alloc(&mut self, name: String, shape: &[usize]) -> Range<usize> {
        let len: usize = shape.iter().product();
        let range = self.total..self.total + len;
        self.total += len;
        self.tensors.push(TensorSpec {
            name,
            range: range.clone(),
            shape: shape.to_vec(),
        });
        range
    }
}

impl ParamLayout {
    pub fn new(c: &LmConfig) -> Self {
        let d = c.hidden;
        let f = c.mlp_hidden;
        let mut b = LayoutBuilder {
            tensors: Vec::new(),
            total: 0,
        };
        let tok_emb = b.alloc("tok_emb".into(), &[c.vocab_size, d]);
        let pos_emb = b.alloc("pos_emb".into(), &[c.max_positions, d]);
        let blocks = (0..c.layers)
            .map(|l| {
                let mut a = |n: &str, s: &[usize]| b.alloc(format!("blocks.{l}.{n}"), s);
                BlockLayout {
                    ln1_g: a("ln1.weight", &[d]),
                    ln1_b: a("ln1.bias", &[d]),
                    wq: a("attn.wq", &[d, d]),
                    bq: a("attn.bq", &[d]),
                    wk: a("attn.wk", &[d, d]),
                    bk: a("attn.bk", &[d]),
                    wv: a("attn.wv", &[d, d]),
                    bv: a("attn.bv", &[d]),
                    wo: a("attn.wo", &[d, d]),
                    bo: a("attn.bo", &[d]),
                    ln2_g: a("ln2.weight", &[d]),
                    ln2_b: a("ln2.bias", &[d]),
                    w1: a("mlp.w1", &[d, f]),
                    b1: a("mlp.b1", &[f]),
                    w2: a("mlp.w2", &[f, d]),
                    b2: a("mlp.b2", &[d]),
                }
            })
            .collect();
        let lnf_g = b.alloc("ln_f.weight".into(), &[d]);
        let lnf_b = b.alloc("ln_f.bias".into(), &[d]);
        ParamLayout {
            tok_emb,
            pos_emb,
            blocks,
            lnf_g,
            lnf_b,
            tensors: b.tensors,
            total: b.total,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CausalLm<T: Scalar> {
    pub config: LmConfig,
    pub tokenizer: WordTokenizer,
    layout: ParamLayout,
    params: Vec<T>,
}

struct LnCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

struct BlockCache<T> {
    ln1: LnCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities, `[head][query][key]`, zero above the diagonal.
    probs: Vec<T>,
    attn: Vec<T>,
    ln2: LnCache<T>,
    h2: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
}

/// Activations retained for the backward pass.
pub struct Forward<T> {
    pub seq_len: usize,
    pub n_prefix: usize,
    ids: Vec<u32>,
    blocks: Vec<BlockCache<T>>,
    lnf: LnCache<T>,
    z: Vec<T>,
    /// `seq_len × vocab_size`, row-major.
    pub logits: Vec<T>,
}

impl<T: Scalar> Forward<T> {
    pub fn logits_at(&self, pos: usize, vocab: usize) -> &[T] {
        &self.logits[pos * vocab..(pos + 1) * vocab]
    }
}

// y[r, :] = x[r, :] · W + b, W stored `[in, out]`.
fn linear<T: Scalar>(x: &[T], rows: usize, w: &[T], b: &[T], n_in: usize, n_out: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let yr = &mut y[r * n_out..(r + 1) * n_out];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let wi = &w[i * n_out..(i + 1) * n_out];
            for (yj, &wij) in yr.iter_mut().zip(wi) {
                *yj += xi * wij;
            }
        }
    }
    y
}

// Returns dx; accumulates dW and db when `grads` is given.
fn linear_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    rows: usize,
    w: &[T],
    n_in: usize,
    n_out: usize,
    grads: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
        for (i, dxi) in dxr.iter_mut().enumerate() {
            let wi = &w[i * n_out..(i + 1) * n_out];
            *dxi = wi.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
        }
    }
    if let Some((dw, db)) = grads {
        for r in 0..rows {
            let dyr = &dy[r * n_out..(r + 1) * n_out];
            let xr = &x[r * n_in..(r + 1) * n_in];
            for (i, &xi) in xr.iter().enumerate() {
                let dwi = &mut dw[i * n_out..(i + 1) * n_out];
                for (g, &d) in dwi.iter_mut().zip(dyr) {
                    *g += xi * d;
                }
            }
            for (g, &d) in db.iter_mut().zip(dyr) {
                *g += d;
            }
        }
    }
    dx
}

fn layer_norm<T: Scalar>(x: &[T], rows: usize, d: usize, g: &[T], b: &[T], eps: T) -> (Vec<T>, LnCache<T>) {
    let dn = T::from_usize(d).unwrap();
    let mut y = vec![T::zero(); rows * d];
    let mut xhat = vec![T::zero(); rows * d];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mu = xr.iter().copied().sum::<T>() / dn;
        let var = xr.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / dn;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let xh = (xr[i] - mu) * rs;
            xhat[r * d + i] = xh;
            y[r * d + i] = xh * g[i] + b[i];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    dy: &[T],
    rows: usize,
    d: usize,
    g: &[T],
    grads: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let dn = T::from_usize(d).unwrap();
    let mut dx = vec![T::zero(); rows * d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let dxhat: Vec<T> = dyr.iter().zip(g).map(|(&a, &b)| a * b).collect();
        let mean_d = dxhat.iter().copied().sum::<T>() / dn;
        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / dn;
        for i in 0..d {
            dx[r * d + i] = cache.rstd[r] * (dxhat[i] - mean_d - xh[i] * mean_dx);
        }
    }
    if let Some((dg, db)) = grads {
        for r in 0..rows {
            for i in 0..d {
                let d_out = dy[r * d + i];
                dg[i] += d_out * cache.xhat[r * d + i];
                db[i] += d_out;
            }
        }
    }
    dx
}

const GELU_K: f64 = 0.044_715;

fn gelu<T: Scalar>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    half * u * (T::one() + (c * (u + T::lit(GELU_K) * u * u * u)).tanh())
}

fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let t = (c * (u + T::lit(GELU_K) * u * u * u)).tanh();
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::lit(3.0 * GELU_K) * u * u)
}

/// Splits a mutable gradient buffer into two disjoint tensor slices.
fn two_mut<'a, T>(buf: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start, "layout allocates weight before bias");
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.end - b.start])
}

impl<T: Scalar> CausalLm<T> {
    /// Random initialisation: token embeddings N(0, 0.3²), positions
    /// N(0, 0.02²), linear weights U(±1/√fan_in), biases 0, norms (1, 0).
    pub fn init<R: Rng + ?Sized>(config: LmConfig, tokenizer: WordTokenizer, rng: &mut R) -> Self {
        config.validate().expect("valid model config");
        assert_eq!(config.vocab_size, tokenizer.vocab_size(), "vocab size mismatch");
        let layout = ParamLayout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut normal = |range: &Range<usize>, std: f64, params: &mut [T]| {
            for p in &mut params[range.clone()] {
                let z: f64 = StandardNormal.sample(rng);
                *p = T::lit(z * std);
            }
        };
        normal(&layout.tok_emb, 0.3, &mut params);
        normal(&layout.pos_emb, 0.02, &mut params);
        for spec in &layout.tensors {
            let leaf = spec.name.rsplit('.').next().unwrap_or_default();
            if spec.shape.len() == 2 && spec.name.starts_with("blocks.") {
                let bound = 1.0 / (spec.shape[0] as f64).sqrt();
                for p in &mut params[spec.range.clone()] {
                    *p = T::lit(rng.random_range(-bound..bound));
                }
            } else if leaf == "weight" {
                params[spec.range.clone()].fill(T::one());
            }
        }
        CausalLm {
            config,
            tokenizer,
            layout,
            params,
        }
    }

    pub fn from_parts(config: LmConfig, tokenizer: WordTokenizer, params: Vec<T>) -> Result<Self, String> {
        config.validate()?;
        if config.vocab_size != tokenizer.vocab_size() {
            return Err(format!(
                "config vocab_size {} but tokenizer has {} entries",
                config.vocab_size,
                tokenizer.vocab_size()
            ));
        }
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(format!("expected {} parameters, got {}", layout.total, params.len()));
        }
        Ok(CausalLm {
            config,
            tokenizer,
            layout,
            params,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    /// Row of the token embedding table.
    pub fn token_embedding(&self, id: u32) -> &[T] {
        let d = self.config.hidden;
        let start = self.layout.tok_emb.start + id as usize * d;
        &self.params[start..start + d]
    }

    /// SHA-256 over the little-endian bytes of every parameter, in layout order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(to_le_bytes(&self.params));
        hex::encode(h.finalize())
    }

    fn p(&self, r: &Range<usize>) -> &[T] {
        &self.params[r.clone()]
    }

    /// Runs the network over `prefix` (row-major `n_prefix × hidden`)
    /// followed by `ids`. Positions are numbered from 0 at the first prefix
    /// row.
    pub fn forward(&self, prefix: &[T], ids: &[u32]) -> Forward<T> {
        let c = &self.config;
        let d = c.hidden;
        assert_eq!(prefix.len() % d, 0, "prefix is not a whole number of rows");
        let n_prefix = prefix.len() / d;
        let t = n_prefix + ids.len();
        assert!(t > 0, "empty sequence");
        assert!(
            t <= c.max_positions,
            "sequence of {t} exceeds {} positions",
            c.max_positions
        );
        let eps = T::lit(c.layer_norm_eps);

        let mut x = Vec::with_capacity(t * d);
        x.extend_from_slice(prefix);
        for &id in ids {
            assert!((id as usize) < c.vocab_size, "token id {id} out of range");
            x.extend_from_slice(self.token_embedding(id));
        }
        let pos = self.p(&self.layout.pos_emb);
        for (xi, pi) in x.iter_mut().zip(&pos[..t * d]) {
            *xi += *pi;
        }

        let heads = c.heads;
        let hd = c.head_dim();
        let scale = T::one() / T::from_usize(hd).unwrap().sqrt();
        let mut blocks = Vec::with_capacity(c.layers);
        for bl in &self.layout.blocks {
            let (h1, ln1) = layer_norm(&x, t, d, self.p(&bl.ln1_g), self.p(&bl.ln1_b), eps);
            let q = linear(&h1, t, self.p(&bl.wq), self.p(&bl.bq), d, d);
            let k = linear(&h1, t, self.p(&bl.wk), self.p(&bl.bk), d, d);
            let v = linear(&h1, t, self.p(&bl.wv), self.p(&bl.bv), d, d);
            let mut probs = vec![T::zero(); heads * t * t];
            let mut attn = vec![T::zero(); t * d];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t {
                    let qi = &q[i * d + off..i * d + off + hd];
                    let row = &mut probs[(h * t + i) * t..(h * t + i) * t + t];
                    let mut max = T::neg_infinity();
                    for j in 0..=i {
                        let kj = &k[j * d + off..j * d + off + hd];
                        let s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                    let mut z = T::zero();
                    for p in &mut row[..=i] {
                        *p = (*p - max).exp();
                        z += *p;
                    }
                    for p in &mut row[..=i] {
                        *p /= z;
                    }
                    let out = &mut attn[i * d + off..i * d + off + hd];
                    for (j, &pij) in row[..=i].iter().enumerate() {
                        let vj = &v[j * d + off..j * d + off + hd];
                        for (o, &vv) in out.iter_mut().zip(vj) {
                            *o += pij * vv;
                        }
                    }
                }
            }
            let o = linear(&attn, t, self.p(&bl.wo), self.p(&bl.bo), d, d);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += *oi;
            }
            let (h2, ln2) = layer_norm(&x, t, d, self.p(&bl.ln2_g), self.p(&bl.ln2_b), eps);
            let pre_act = linear(&h2, t, self.p(&bl.w1), self.p(&bl.b1), d, c.mlp_hidden);
            let act: Vec<T> = pre_act.iter().map(|&u| gelu(u)).collect();
            let m = linear(&act, t, self.p(&bl.w2), self.p(&bl.b2), c.mlp_hidden, d);
            for (xi, mi) in x.iter_mut().zip(&m) {
                *xi += *mi;
            }
            blocks.push(BlockCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                h2,
                pre_act,
                act,
            });
        }
        let (z, lnf) = layer_norm(&x, t, d, self.p(&self.layout.lnf_g), self.p(&self.layout.lnf_b), eps);
        let emb = self.p(&self.layout.tok_emb);
        let vocab = c.vocab_size;
        let mut logits = vec![T::zero(); t * vocab];
        for r in 0..t {
            let zr = &z[r * d..(r + 1) * d];
            for (vi, l) in logits[r * vocab..(r + 1) * vocab].iter_mut().enumerate() {
                *l = emb[vi * d..(vi + 1) * d].iter().zip(zr).map(|(&a, &b)| a * b).sum();
            }
        }
        Forward {
            seq_len: t,
            n_prefix,
            ids: ids.to_vec(),
            blocks,
            lnf,
            z,
            logits,
        }
    }

    /// Back-propagates `dlogits` (same shape as `fwd.logits`). Returns the
    /// gradient for the prefix rows; parameter gradients are added into
    /// `param_grads` when supplied.
    pub fn backward(&self, fwd: &Forward<T>, dlogits: &[T], mut param_grads: Option<&mut [T]>) -> Vec<T> {
        let c = &self.config;
        let d = c.hidden;
        let t = fwd.seq_len;
        let vocab = c.vocab_size;
        let f = c.mlp_hidden;
        assert_eq!(dlogits.len(), t * vocab);
        if let Some(g) = param_grads.as_deref() {
            assert_eq!(g.len(), self.layout.total);
        }
        let lay = &self.layout;
        let emb = self.p(&lay.tok_emb);

        // logits = z · Eᵀ
        let mut dz = vec![T::zero(); t * d];
        for r in 0..t {
            let dl = &dlogits[r * vocab..(r + 1) * vocab];
            let dzr = &mut dz[r * d..(r + 1) * d];
            for (vi, &g) in dl.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                for (a, &e) in dzr.iter_mut().zip(&emb[vi * d..(vi + 1) * d]) {
                    *a += g * e;
                }
            }
        }
        if let Some(grads) = param_grads.as_deref_mut() {
            let demb = &mut grads[lay.tok_emb.clone()];
            for r in 0..t {
                let zr = &fwd.z[r * d..(r + 1) * d];
                for (vi, &g) in dlogits[r * vocab..(r + 1) * vocab].iter().enumerate() {
                    if g == T::zero() {
                        continue;
                    }
                    for (a, &zz) in demb[vi * d..(vi + 1) * d].iter_mut().zip(zr) {
                        *a += g * zz;
                    }
                }
            }
        }
        let mut dx = layer_norm_backward(
            &fwd.lnf,
            &dz,
            t,
            d,
            self.p(&lay.lnf_g),
            param_grads.as_deref_mut().map(|g| two_mut(g, &lay.lnf_g, &lay.lnf_b)),
        );

        let heads = c.heads;
        let hd = c.head_dim();
        let scale = T::one() / T::from_usize(hd).unwrap().sqrt();
        for (bl, cache) in lay.blocks.iter().zip(&fwd.blocks).rev() {
            // x = x_mid + W2·gelu(W1·ln2(x_mid))
            let dact = linear_backward(
                &cache.act,
                &dx,
                t,
                self.p(&bl.w2),
                f,
                d,
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.w2, &bl.b2)),
            );
            let dpre: Vec<T> = dact
                .iter()
                .zip(&cache.pre_act)
                .map(|(&g, &u)| g * gelu_grad(u))
                .collect();
            let dh2 = linear_backward(
                &cache.h2,
                &dpre,
                t,
                self.p(&bl.w1),
                d,
                f,
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.w1, &bl.b1)),
            );
            let dmid = layer_norm_backward(
                &cache.ln2,
                &dh2,
                t,
                d,
                self.p(&bl.ln2_g),
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.ln2_g, &bl.ln2_b)),
            );
            for (a, b) in dx.iter_mut().zip(&dmid) {
                *a += *b;
            }

            // x_mid = x_in + Wo·attn(ln1(x_in))
            let dattn = linear_backward(
                &cache.attn,
                &dx,
                t,
                self.p(&bl.wo),
                d,
                d,
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.wo, &bl.bo)),
            );
            let mut dq = vec![T::zero(); t * d];
            let mut dk = vec![T::zero(); t * d];
            let mut dv = vec![T::zero(); t * d];
            let mut dp = vec![T::zero(); t];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t {
                    let row = &cache.probs[(h * t + i) * t..(h * t + i) * t + t];
                    let dai = &dattn[i * d + off..i * d + off + hd];
                    let mut dot = T::zero();
                    for j in 0..=i {
                        let vj = &cache.v[j * d + off..j * d + off + hd];
                        dp[j] = dai.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                        dot += row[j] * dp[j];
                        let dvj = &mut dv[j * d + off..j * d + off + hd];
                        for (g, &a) in dvj.iter_mut().zip(dai) {
                            *g += row[j] * a;
                        }
                    }
                    for j in 0..=i {
                        let ds = row[j] * (dp[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        for e in 0..hd {
                            dq[i * d + off + e] += ds * cache.k[j * d + off + e];
                            dk[j * d + off + e] += ds * cache.q[i * d + off + e];
                        }
                    }
                }
            }
            let mut dh1 = linear_backward(
                &cache.h1,
                &dq,
                t,
                self.p(&bl.wq),
                d,
                d,
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.wq, &bl.bq)),
            );
            for (src, w, wb) in [(&dk, &bl.wk, &bl.bk), (&dv, &bl.wv, &bl.bv)] {
                let part = linear_backward(
                    &cache.h1,
                    src,
                    t,
                    self.p(w),
                    d,
                    d,
                    param_grads.as_deref_mut().map(|g| two_mut(g, w, wb)),
                );
                for (a, b) in dh1.iter_mut().zip(&part) {
                    *a += *b;
                }
            }
            let din = layer_norm_backward(
                &cache.ln1,
                &dh1,
                t,
                d,
                self.p(&bl.ln1_g),
                param_grads.as_deref_mut().map(|g| two_mut(g, &bl.ln1_g, &bl.ln1_b)),
            );
            for (a, b) in dx.iter_mut().zip(&din) {
                *a += *b;
            }
        }

        if let Some(grads) = param_grads {
            let dpos = &mut grads[lay.pos_emb.clone()];
            for (a, b) in dpos[..t * d].iter_mut().zip(&dx) {
                *a += *b;
            }
            let demb = &mut grads[lay.tok_emb.clone()];
            for (r, &id) in fwd.ids.iter().enumerate() {
                let row = fwd.n_prefix + r;
                let dst = &mut demb[id as usize * d..(id as usize + 1) * d];
                for (a, b) in dst.iter_mut().zip(&dx[row * d..(row + 1) * d]) {
                    *a += *b;
                }
            }
        }
        dx.truncate(fwd.n_prefix * d);
        dx
    }
}

/// Mean token cross-entropy over positions with `Some` target, where the
/// target at position `i` is predicted by the logits at position `i`.
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(logits: &[T], vocab: usize, targets: &[Option<u32>]) -> (T, Vec<T>) {
    assert_eq!(logits.len(), targets.len() * vocab);
    let count = targets.iter().filter(|t| t.is_some()).count();
    let mut grad = vec![T::zero(); logits.len()];
    if count == 0 {
        return (T::zero(), grad);
    }
    let n = T::from_usize(count).unwrap();
    let mut loss = T::zero();
    for (pos, target) in targets.iter().enumerate() {
        let Some(target) = *target else { continue };
        let row = &logits[pos * vocab..(pos + 1) * vocab];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let z: T = row.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + z.ln();
        loss += lse - row[target as usize];
        let g = &mut grad[pos * vocab..(pos + 1) * vocab];
        for (gi, &l) in g.iter_mut().zip(row) {
            *gi = (l - lse).exp() / n;
        }
        g[target as usize] -= T::one() / n;
    }
    (loss / n, grad)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}
