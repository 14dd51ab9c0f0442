use rand::Rng;

use super::{shape_err, Graph, Mat, NnError, ParamId, ParamStore, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Applied only when the graph carries a dropout rate.
    pub dropout: f64,
    pub causal: bool,
}

impl AttentionConfig {
    pub fn new(model_dim: usize, heads: usize, ffn_dim: usize) -> Self {
        Self {
            model_dim,
            heads,
            ffn_dim,
            dropout: 0.0,
            causal: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::BadConfig(m));
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return bad(format!("model dim {} not divisible by {} heads", self.model_dim, self.heads));
        }
        if self.ffn_dim < self.model_dim {
            return bad(format!("ffn dim {} below model dim {}", self.ffn_dim, self.model_dim));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {}", self.dropout));
        }
        if self.causal {
            return bad("causal attention is not supported".into());
        }
        Ok(())
    }
}

/// `x W + b` with `W: [in x out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            w: store.xavier(format!("{name}.w"), n_in, n_out, rng),
            b: store.zeros(format!("{name}.b"), 1, n_out),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let dim = g.value(x).dim();
        if dim.1 != self.n_in {
            return Err(shape_err(format!("n x {}", self.n_in), dim));
        }
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        Ok(g.add_row(y, b))
    }

    pub fn zero(&self, store: &mut ParamStore) {
        store.value_mut(self.w).fill(0.0);
        store.value_mut(self.b).fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.ones(format!("{name}.gain"), 1, dim),
            bias: store.zeros(format!("{name}.bias"), 1, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LN_EPS)
    }
}

/// Intermediate results of one attention call.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub output: Var,
    /// Concatenated head outputs, before the output projection.
    pub context: Var,
    /// One `[m x n]` weight matrix per head.
    pub weights: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub cfg: AttentionConfig,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: AttentionConfig, rng: &mut R) -> Result<Self, NnError> {
        cfg.validate()?;
        let d = cfg.model_dim;
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            out: Linear::new(store, &format!("{name}.out"), d, d, rng),
            cfg,
        })
    }

    /// Queries `[m x d]` attend over keys/values `[n x d]`; `mask[j] == false`
    /// removes key `j`.
    pub fn trace(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        memory: Var,
        mask: Option<&[bool]>,
    ) -> Result<AttentionTrace, NnError> {
        let d = self.cfg.model_dim;
        let (qd, md) = (g.value(queries).dim(), g.value(memory).dim());
        if qd.1 != d || qd.0 == 0 {
            return Err(shape_err(format!("m x {d}"), qd));
        }
        if md.1 != d || md.0 == 0 {
            return Err(shape_err(format!("n x {d}"), md));
        }
        if let Some(m) = mask {
            if m.len() != md.0 {
                return Err(shape_err(format!("mask of {}", md.0), (1, m.len())));
            }
            if !m.iter().any(|&v| v) {
                return Err(NnError::AllMasked);
            }
        }
        let q = self.q.forward(g, store, queries)?;
        let k = self.k.forward(g, store, memory)?;
        let v = self.v.forward(g, store, memory)?;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.heads);
        let mut weights = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = g.slice_cols(q, h * hd, hd);
            let kh = g.slice_cols(k, h * hd, hd);
            let vh = g.slice_cols(v, h * hd, hd);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let w = g.softmax(scores, mask);
            let w = g.dropout(w);
            heads.push(g.matmul(w, vh));
            weights.push(w);
        }
        let context = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let output = self.out.forward(g, store, context)?;
        Ok(AttentionTrace {
            output,
            context,
            weights,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        memory: Var,
        mask: Option<&[bool]>,
    ) -> Result<Var, NnError> {
        Ok(self.trace(g, store, queries, memory, mask)?.output)
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: &AttentionConfig, rng: &mut R) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), cfg.model_dim, cfg.ffn_dim, rng),
            down: Linear::new(store, &format!("{name}.down"), cfg.ffn_dim, cfg.model_dim, rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let h = self.up.forward(g, store, x)?;
        let h = g.gelu(h);
        let h = g.dropout(h);
        self.down.forward(g, store, h)
    }
}

fn residual(g: &mut Graph, x: Var, update: Var) -> Var {
    let update = g.dropout(update);
    g.add(x, update)
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: AttentionConfig, rng: &mut R) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), cfg.model_dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), cfg.model_dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), &cfg, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: Option<&[bool]>) -> Result<Var, NnError> {
        let h = self.ln1.forward(g, store, x);
        let a = self.attn.forward(g, store, h, h, mask)?;
        let x = residual(g, x, a);
        let h = self.ln2.forward(g, store, x);
        let f = self.ffn.forward(g, store, h)?;
        Ok(residual(g, x, f))
    }

    /// Zeroes the residual-branch output projections, making the block the identity.
    pub fn zero_outputs(&self, store: &mut ParamStore) {
        self.attn.out.zero(store);
        self.ffn.down.zero(store);
    }
}

/// Pre-norm block: self-attention over queries, cross-attention into memory, FFN.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    ln1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ffn: FeedForward,
}

impl DecoderBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: AttentionConfig, rng: &mut R) -> Result<Self, NnError> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), cfg.model_dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), cfg, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), cfg.model_dim),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross"), cfg, rng)?,
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), cfg.model_dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), &cfg, rng),
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        memory: Var,
        mem_mask: Option<&[bool]>,
    ) -> Result<Var, NnError> {
        let h = self.ln1.forward(g, store, queries);
        let a = self.self_attn.forward(g, store, h, h, None)?;
        let x = residual(g, queries, a);
        let h = self.ln2.forward(g, store, x);
        let c = self.cross_attn.forward(g, store, h, memory, mem_mask)?;
        let x = residual(g, x, c);
        let h = self.ln3.forward(g, store, x);
        let f = self.ffn.forward(g, store, h)?;
        Ok(residual(g, x, f))
    }

    pub fn zero_outputs(&self, store: &mut ParamStore) {
        self.self_attn.out.zero(store);
        self.cross_attn.out.zero(store);
        self.ffn.down.zero(store);
    }
}

/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(..)`.
pub fn sinusoidal_positions(n: usize, d: usize) -> Result<Mat, NnError> {
    if d % 2 != 0 {
        return Err(NnError::OddDim(d));
    }
    Ok(Mat::from_shape_fn((n, d), |(p, j)| {
        let i = (j / 2) as f64;
        let angle = p as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array2;

    fn cfg(d: usize, h: usize) -> AttentionConfig {
        AttentionConfig::new(d, h, 2 * d)
    }

    fn randn(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut r = seeded(seed);
        Array2::from_shape_simple_fn((rows, cols), || crate::rng::gaussian(&mut r))
    }

    #[test]
    fn config_validation() {
        assert!(cfg(8, 3).validate().is_err());
        assert!(AttentionConfig::new(8, 2, 4).validate().is_err());
        assert!(cfg(8, 2).validate().is_ok());
    }

    #[test]
    fn single_key_returns_value() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "a", cfg(4, 1), &mut seeded(1)).unwrap();
        for lin in [&mha.q, &mha.k, &mha.v, &mha.out] {
            store.value_mut(lin.w).assign(&Array2::eye(4));
        }
        let mut g = Graph::new();
        let q = g.constant(randn(1, 4, 2));
        let kv = g.constant(randn(1, 4, 3));
        let out = mha.forward(&mut g, &store, q, kv, None).unwrap();
        assert_eq!(g.value(out), g.value(kv));
    }

    #[test]
    fn weights_are_distributions_and_masks_hold() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "a", cfg(8, 2), &mut seeded(4)).unwrap();
        let mask = [true, false, true, true, false];
        let run = |mem: Mat| {
            let mut g = Graph::new();
            let q = g.constant(randn(3, 8, 5));
            let m = g.constant(mem);
            let t = mha.trace(&mut g, &store, q, m, Some(&mask)).unwrap();
            let w: Vec<Mat> = t.weights.iter().map(|&w| g.value(w).clone()).collect();
            (g.value(t.output).clone(), w)
        };
        let mem = randn(5, 8, 6);
        let (out, weights) = run(mem.clone());
        for w in &weights {
            for row in w.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v >= 0.0));
                assert_eq!(row[1], 0.0);
                assert_eq!(row[4], 0.0);
            }
        }
        let mut perturbed = mem;
        perturbed.row_mut(1).fill(1e6);
        perturbed.row_mut(4).fill(-37.0);
        assert_eq!(run(perturbed).0, out);
    }

    #[test]
    fn all_masked_is_an_error() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "a", cfg(4, 2), &mut seeded(4)).unwrap();
        let mut g = Graph::new();
        let q = g.constant(randn(2, 4, 1));
        assert!(matches!(
            mha.forward(&mut g, &store, q, q, Some(&[false, false])),
            Err(NnError::AllMasked)
        ));
        let bad = g.constant(randn(2, 3, 1));
        assert!(matches!(
            mha.forward(&mut g, &store, bad, bad, None),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zeroed_blocks_are_identity() {
        for (n, d) in [(1, 64), (48, 64), (1, 256), (48, 256)] {
            let mut store = ParamStore::new();
            let enc = EncoderBlock::new(&mut store, "e", cfg(d, 4), &mut seeded(9)).unwrap();
            let dec = DecoderBlock::new(&mut store, "d", cfg(d, 4), &mut seeded(10)).unwrap();
            let mut g = Graph::new();
            let x = g.constant(randn(n, d, 11));
            let y = enc.forward(&mut g, &store, x, None).unwrap();
            assert_eq!(g.value(y).dim(), (n, d));
            enc.zero_outputs(&mut store);
            dec.zero_outputs(&mut store);
            let mut g = Graph::new();
            let x = g.constant(randn(n, d, 11));
            let mem = g.constant(randn(7, d, 12));
            let y = enc.forward(&mut g, &store, x, None).unwrap();
            assert_eq!(g.value(y), g.value(x));
            let z = dec.forward(&mut g, &store, x, mem, None).unwrap();
            assert_eq!(g.value(z), g.value(x));
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut store = ParamStore::new();
        let enc = EncoderBlock::new(&mut store, "e", cfg(16, 4), &mut seeded(13)).unwrap();
        let x = randn(6, 16, 14);
        let mask = [true, true, true, true, false, true];
        let mut xp = x.clone();
        xp.row_mut(0).assign(&x.row(3));
        xp.row_mut(3).assign(&x.row(0));
        let run = |m: Mat| {
            let mut g = Graph::new();
            let v = g.constant(m);
            let y = enc.forward(&mut g, &store, v, Some(&mask)).unwrap();
            g.value(y).clone()
        };
        let (y, yp) = (run(x), run(xp));
        for (a, b) in [(0, 3), (3, 0), (1, 1), (2, 2), (5, 5)] {
            for (u, v) in y.row(a).iter().zip(yp.row(b).iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_attention_with_one_memory_slot() {
        let mut store = ParamStore::new();
        let mha = MultiHeadAttention::new(&mut store, "c", cfg(8, 2), &mut seeded(15)).unwrap();
        let mut g = Graph::new();
        let q = g.constant(randn(5, 8, 16));
        let m = g.constant(randn(1, 8, 17));
        let t = mha.trace(&mut g, &store, q, m, None).unwrap();
        let v = mha.v.forward(&mut g, &store, m).unwrap();
        let v = g.value(v).row(0).to_owned();
        for row in g.value(t.context).rows() {
            for (a, b) in row.iter().zip(v.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decoder_ignores_masked_memory() {
        let mut store = ParamStore::new();
        let dec = DecoderBlock::new(&mut store, "d", cfg(8, 2), &mut seeded(18)).unwrap();
        let mask = [true, false, true];
        let run = |mem: Mat| {
            let mut g = Graph::new();
            let q = g.constant(randn(4, 8, 19));
            let m = g.constant(mem);
            let y = dec.forward(&mut g, &store, q, m, Some(&mask)).unwrap();
            g.value(y).clone()
        };
        let mem = randn(3, 8, 20);
        let mut other = mem.clone();
        other.row_mut(1).fill(123.0);
        assert_eq!(run(mem), run(other));
    }

    #[test]
    fn positions() {
        let pe = sinusoidal_positions(50, 8).unwrap();
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(matches!(sinusoidal_positions(3, 7), Err(NnError::OddDim(7))));
    }
}
