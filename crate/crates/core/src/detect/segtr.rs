use super::model::{attn_from_meta, attn_meta, check_sequence, kv, meta_get};
use super::{self_similarity, Arch, DetectError, Detector, EmbeddingSequence, Features, ForwardVars, MAX_SEGMENTS};
use crate::nn::{sinusoidal_positions, AttentionConfig, Checkpoint, EncoderBlock, Graph, LayerNorm, Linear, ParamStore, Var};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegTrConfig {
    /// Segment embedding dimension (stage-1 pooled size).
    pub d_in: usize,
    pub max_seq: usize,
    pub attn: AttentionConfig,
    pub content_blocks: usize,
    pub structure_blocks: usize,
}

impl SegTrConfig {
    pub fn new(d_in: usize) -> Self {
        Self {
            d_in,
            max_seq: MAX_SEGMENTS,
            attn: AttentionConfig::new(128, 4, 256),
            content_blocks: 2,
            structure_blocks: 2,
        }
    }

    pub fn from_meta(ck: &Checkpoint) -> Result<Self, DetectError> {
        Ok(Self {
            d_in: meta_get(ck, "d_in")?,
            max_seq: meta_get(ck, "max_seq")?,
            attn: attn_from_meta(ck)?,
            content_blocks: meta_get(ck, "content_blocks")?,
            structure_blocks: meta_get(ck, "structure_blocks")?,
        })
    }
}

#[derive(Debug, Clone)]
struct Pathway {
    input: Linear,
    blocks: Vec<EncoderBlock>,
    norm: LayerNorm,
}

impl Pathway {
    fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        blocks: usize,
        cfg: AttentionConfig,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self, DetectError> {
        Ok(Self {
            input: Linear::new(store, &format!("{name}.input"), n_in, cfg.model_dim, rng),
            blocks: (0..blocks)
                .map(|i| EncoderBlock::new(store, &format!("{name}.enc{i}"), cfg, rng))
                .collect::<Result<_, _>>()?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), cfg.model_dim),
        })
    }

    /// Tokens -> projection + positions -> blocks -> masked mean.
    fn forward(&self, g: &mut Graph, store: &ParamStore, tokens: Var, mask: &[bool]) -> Result<Var, DetectError> {
        let h = self.input.forward(g, store, tokens)?;
        let (n, d) = g.value(h).dim();
        let pe = g.constant(sinusoidal_positions(n, d)?);
        let mut h = g.add(h, pe);
        for block in &self.blocks {
            h = block.forward(g, store, h, Some(mask))?;
        }
        let h = self.norm.forward(g, store, h);
        Ok(g.masked_mean_rows(h, mask))
    }
}

/// Dual-pathway track classifier: one encoder over segment embeddings, one
/// over the rows of their self-similarity matrix.
#[derive(Debug, Clone)]
pub struct SegmentTransformer {
    pub cfg: SegTrConfig,
    store: ParamStore,
    content: Pathway,
    structure: Pathway,
    head: Linear,
}

impl SegmentTransformer {
    pub fn new(cfg: SegTrConfig, seed: u64) -> Result<Self, DetectError> {
        cfg.attn.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let content = Pathway::new(&mut store, "content", cfg.d_in, cfg.content_blocks, cfg.attn, &mut rng)?;
        let structure = Pathway::new(&mut store, "structure", cfg.max_seq, cfg.structure_blocks, cfg.attn, &mut rng)?;
        let head = Linear::new(&mut store, "head", 2 * cfg.attn.model_dim, 1, &mut rng);
        Ok(Self {
            cfg,
            store,
            content,
            structure,
            head,
        })
    }

    fn check(&self, seq: &EmbeddingSequence) -> Result<(), DetectError> {
        check_sequence(seq, self.cfg.d_in)?;
        if seq.len() != self.cfg.max_seq {
            return Err(DetectError::DimMismatch {
                expected: self.cfg.max_seq,
                got: seq.len(),
            });
        }
        Ok(())
    }

    /// Pooled output of the content pathway.
    pub fn content_path(&self, g: &mut Graph, seq: &EmbeddingSequence) -> Result<(Var, Var), DetectError> {
        self.check(seq)?;
        let input = g.constant(seq.vectors.clone());
        Ok((self.content.forward(g, &self.store, input, &seq.mask)?, input))
    }

    /// Pooled output of the self-similarity pathway; each SSM row is a token.
    pub fn structure_path(&self, g: &mut Graph, seq: &EmbeddingSequence) -> Result<Var, DetectError> {
        self.check(seq)?;
        let ssm = self_similarity(seq);
        if !ssm.mask.iter().any(|&m| m) {
            return Err(DetectError::AllMasked);
        }
        let rows = g.constant(ssm.matrix);
        self.structure.forward(g, &self.store, rows, &ssm.mask)
    }
}

impl Detector for SegmentTransformer {
    type Input = EmbeddingSequence;

    fn arch(&self) -> Arch {
        Arch::SegTr
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn meta(&self) -> Vec<(String, String)> {
        let mut m = vec![kv("arch", self.arch()), kv("d_in", self.cfg.d_in), kv("max_seq", self.cfg.max_seq)];
        m.extend(attn_meta(&self.cfg.attn));
        m.push(kv("content_blocks", self.cfg.content_blocks));
        m.push(kv("structure_blocks", self.cfg.structure_blocks));
        m
    }

    fn input_from(&self, features: Features) -> Result<EmbeddingSequence, DetectError> {
        Ok(features.into_sequence())
    }

    fn forward_on(&self, g: &mut Graph, seq: &EmbeddingSequence) -> Result<ForwardVars, DetectError> {
        let (a, input) = self.content_path(g, seq)?;
        let b = self.structure_path(g, seq)?;
        let pooled = g.concat_cols(&[a, b]);
        let logit = self.head.forward(g, &self.store, pooled)?;
        Ok(ForwardVars { logit, pooled, input })
    }

    fn zero_head(&mut self) {
        self.head.zero(&mut self.store);
    }
}
