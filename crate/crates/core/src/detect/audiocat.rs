use ndarray::Array2;

use super::model::{attn_from_meta, attn_meta, check_sequence, kv, meta_get};
use super::{Arch, DetectError, Detector, EmbeddingSequence, Features, ForwardVars};
use crate::nn::{sinusoidal_positions, AttentionConfig, Checkpoint, DecoderBlock, Graph, LayerNorm, Linear, ParamId, ParamStore};
use crate::rng::{gaussian, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AudioCatConfig {
    /// Extractor output dimension.
    pub d_enc: usize,
    pub attn: AttentionConfig,
    /// Learned query tokens.
    pub queries: usize,
    /// Decoder blocks.
    pub blocks: usize,
}

impl AudioCatConfig {
    pub fn new(d_enc: usize) -> Self {
        Self {
            d_enc,
            attn: AttentionConfig::new(128, 4, 256),
            queries: 8,
            blocks: 2,
        }
    }

    pub fn from_meta(ck: &Checkpoint) -> Result<Self, DetectError> {
        Ok(Self {
            d_enc: meta_get(ck, "d_enc")?,
            attn: attn_from_meta(ck)?,
            queries: meta_get(ck, "queries")?,
            blocks: meta_get(ck, "blocks")?,
        })
    }
}

/// Learned queries cross-attending into projected extractor frames.
#[derive(Debug, Clone)]
pub struct AudioCat {
    pub cfg: AudioCatConfig,
    store: ParamStore,
    input: Linear,
    queries: ParamId,
    blocks: Vec<DecoderBlock>,
    norm: LayerNorm,
    head: Linear,
}

impl AudioCat {
    pub fn new(cfg: AudioCatConfig, seed: u64) -> Result<Self, DetectError> {
        cfg.attn.validate()?;
        if cfg.queries == 0 || cfg.d_enc == 0 {
            return Err(DetectError::EmptySequence);
        }
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let d = cfg.attn.model_dim;
        let input = Linear::new(&mut store, "input", cfg.d_enc, d, &mut rng);
        let q = Array2::from_shape_simple_fn((cfg.queries, d), || gaussian(&mut rng));
        let queries = store.add("queries", q);
        let blocks = (0..cfg.blocks)
            .map(|i| DecoderBlock::new(&mut store, &format!("dec{i}"), cfg.attn, &mut rng))
            .collect::<Result<_, _>>()?;
        let norm = LayerNorm::new(&mut store, "norm", d);
        let head = Linear::new(&mut store, "head", d, 1, &mut rng);
        Ok(Self {
            cfg,
            store,
            input,
            queries,
            blocks,
            norm,
            head,
        })
    }
}

impl Detector for AudioCat {
    type Input = EmbeddingSequence;

    fn arch(&self) -> Arch {
        Arch::AudioCat
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn meta(&self) -> Vec<(String, String)> {
        let mut m = vec![kv("arch", self.arch()), kv("d_enc", self.cfg.d_enc)];
        m.extend(attn_meta(&self.cfg.attn));
        m.push(kv("queries", self.cfg.queries));
        m.push(kv("blocks", self.cfg.blocks));
        m
    }

    fn input_from(&self, features: Features) -> Result<EmbeddingSequence, DetectError> {
        Ok(features.into_sequence())
    }

    fn forward_on(&self, g: &mut Graph, seq: &EmbeddingSequence) -> Result<ForwardVars, DetectError> {
        check_sequence(seq, self.cfg.d_enc)?;
        let store = &self.store;
        let input = g.constant(seq.vectors.clone());
        let h = self.input.forward(g, store, input)?;
        let pe = g.constant(sinusoidal_positions(seq.len(), self.cfg.attn.model_dim)?);
        let memory = g.add(h, pe);
        let mut q = g.param(store, self.queries);
        for block in &self.blocks {
            q = block.forward(g, store, q, memory, Some(&seq.mask))?;
        }
        let q = self.norm.forward(g, store, q);
        let pooled = g.mean_rows(q);
        let logit = self.head.forward(g, store, pooled)?;
        Ok(ForwardVars { logit, pooled, input })
    }

    fn zero_head(&mut self) {
        self.head.zero(&mut self.store);
    }
}
