use ndarray::Array2;

use super::model::{attn_from_meta, attn_meta, kv, meta_get};
use super::{mean_vector, Arch, DetectError, Detector, Features, ForwardVars};
use crate::nn::{sinusoidal_positions, AttentionConfig, Checkpoint, EncoderBlock, Graph, LayerNorm, Linear, ParamId, ParamStore};
use crate::rng::{gaussian, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxSegConfig {
    pub d_enc: usize,
    /// The embedding is split into this many equal tokens.
    pub tokens: usize,
    pub attn: AttentionConfig,
    pub blocks: usize,
}

impl FxSegConfig {
    pub fn new(d_enc: usize) -> Self {
        Self {
            d_enc,
            tokens: 16,
            attn: AttentionConfig::new(128, 4, 256),
            blocks: 2,
        }
    }

    pub fn token_dim(&self) -> usize {
        self.d_enc / self.tokens
    }

    pub fn from_meta(ck: &Checkpoint) -> Result<Self, DetectError> {
        Ok(Self {
            d_enc: meta_get(ck, "d_enc")?,
            tokens: meta_get(ck, "tokens")?,
            attn: attn_from_meta(ck)?,
            blocks: meta_get(ck, "blocks")?,
        })
    }
}

/// Self-attention encoder over a fixed-length embedding cut into tokens,
/// classified from a prepended CLS token.
#[derive(Debug, Clone)]
pub struct FxSegment {
    pub cfg: FxSegConfig,
    store: ParamStore,
    input: Linear,
    cls: ParamId,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
    head: Linear,
}

impl FxSegment {
    pub fn new(cfg: FxSegConfig, seed: u64) -> Result<Self, DetectError> {
        cfg.attn.validate()?;
        if cfg.tokens == 0 || cfg.d_enc % cfg.tokens != 0 || cfg.d_enc == 0 {
            return Err(DetectError::DimMismatch {
                expected: cfg.tokens * cfg.token_dim().max(1),
                got: cfg.d_enc,
            });
        }
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let d = cfg.attn.model_dim;
        let input = Linear::new(&mut store, "input", cfg.token_dim(), d, &mut rng);
        let cls = store.add("cls", Array2::from_shape_simple_fn((1, d), || gaussian(&mut rng)));
        let blocks = (0..cfg.blocks)
            .map(|i| EncoderBlock::new(&mut store, &format!("enc{i}"), cfg.attn, &mut rng))
            .collect::<Result<_, _>>()?;
        let norm = LayerNorm::new(&mut store, "norm", d);
        let head = Linear::new(&mut store, "head", d, 1, &mut rng);
        Ok(Self {
            cfg,
            store,
            input,
            cls,
            blocks,
            norm,
            head,
        })
    }
}

impl Detector for FxSegment {
    type Input = Vec<f64>;

    fn arch(&self) -> Arch {
        Arch::FxSeg
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn meta(&self) -> Vec<(String, String)> {
        let mut m = vec![kv("arch", self.arch()), kv("d_enc", self.cfg.d_enc), kv("tokens", self.cfg.tokens)];
        m.extend(attn_meta(&self.cfg.attn));
        m.push(kv("blocks", self.cfg.blocks));
        m
    }

    /// Sequences are averaged over their valid frames.
    fn input_from(&self, features: Features) -> Result<Vec<f64>, DetectError> {
        Ok(match features {
            Features::Vector(v) => v,
            Features::Sequence(s) => mean_vector(&s),
        })
    }

    fn forward_on(&self, g: &mut Graph, x: &Vec<f64>) -> Result<ForwardVars, DetectError> {
        if x.len() != self.cfg.d_enc {
            return Err(DetectError::DimMismatch {
                expected: self.cfg.d_enc,
                got: x.len(),
            });
        }
        let store = &self.store;
        let input = g.constant(Array2::from_shape_vec((1, x.len()), x.clone()).expect("row"));
        let tokens = g.reshape(input, self.cfg.tokens, self.cfg.token_dim());
        let h = self.input.forward(g, store, tokens)?;
        let cls = g.param(store, self.cls);
        let h = g.concat_rows(&[cls, h]);
        let pe = g.constant(sinusoidal_positions(self.cfg.tokens + 1, self.cfg.attn.model_dim)?);
        let mut h = g.add(h, pe);
        for block in &self.blocks {
            h = block.forward(g, store, h, None)?;
        }
        let h = self.norm.forward(g, store, h);
        let pooled = g.row(h, 0);
        let logit = self.head.forward(g, store, pooled)?;
        Ok(ForwardVars { logit, pooled, input })
    }

    fn zero_head(&mut self) {
        self.head.zero(&mut self.store);
    }
}
