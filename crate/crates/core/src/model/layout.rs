use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PersonaMode};
use crate::numerics::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone)]
pub(crate) struct AttnIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    /// Outer-product weights, `[1 × d_model]`, split across heads.
    pub gamma: Option<ParamId>,
    /// Per-head gate logits, `[1 × n_heads]`.
    pub gate: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub(crate) struct LnIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct EncLayerIds {
    pub attn: AttnIds,
    pub ln1: LnIds,
    pub ffn: FfnIds,
    pub ln2: LnIds,
}

#[derive(Debug, Clone)]
pub(crate) struct DecLayerIds {
    pub self_attn: AttnIds,
    pub ln1: LnIds,
    pub cross_attn: AttnIds,
    pub ln2: LnIds,
    pub ffn: FfnIds,
    pub ln3: LnIds,
}

#[derive(Debug, Clone)]
pub(crate) struct PersonaIds {
    pub w_mu: ParamId,
    pub w_sigma: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct AlignIds {
    pub w_q: ParamId,
    pub w_k: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub enc_tok_emb: ParamId,
    pub dec_tok_emb: ParamId,
    pub user_emb: ParamId,
    pub persona: Option<PersonaIds>,
    pub enc: Vec<EncLayerIds>,
    pub dec: Vec<DecLayerIds>,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub align: Option<AlignIds>,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, shape: &[usize], values: Vec<f64>) -> ParamId {
        let t = Tensor::new(shape, values).expect("layout shapes are consistent");
        self.store.insert(&name, t).expect("layout names are unique")
    }

    fn uniform(&mut self, name: String, rows: usize, cols: usize, bound: f64) -> ParamId {
        let vals = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        self.add(name, &[rows, cols], vals)
    }

    /// Xavier/Glorot uniform.
    fn matrix(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(name, fan_in, fan_out, bound)
    }

    /// Embedding table with the Xavier bound of a `d × d` matrix.
    fn table(&mut self, name: String, rows: usize, d: usize) -> ParamId {
        let bound = (3.0 / d as f64).sqrt();
        self.uniform(name, rows, d, bound)
    }

    fn filled(&mut self, name: String, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, &[rows, cols], vec![v; rows * cols])
    }

    fn attn(&mut self, prefix: &str, c: &ModelConfig) -> AttnIds {
        let d = c.d_model;
        AttnIds {
            wq: self.matrix(format!("{prefix}.wq"), d, d),
            bq: self.filled(format!("{prefix}.bq"), 1, d, 0.0),
            wk: self.matrix(format!("{prefix}.wk"), d, d),
            bk: self.filled(format!("{prefix}.bk"), 1, d, 0.0),
            wv: self.matrix(format!("{prefix}.wv"), d, d),
            bv: self.filled(format!("{prefix}.bv"), 1, d, 0.0),
            wo: self.matrix(format!("{prefix}.wo"), d, d),
            bo: self.filled(format!("{prefix}.bo"), 1, d, 0.0),
            gamma: c.fame_on.then(|| {
                let g = 1.0 / (c.d_head() as f64).sqrt();
                self.filled(format!("{prefix}.gamma"), 1, d, g)
            }),
            gate: c
                .fame_on
                .then(|| self.filled(format!("{prefix}.gate"), 1, c.n_heads, 0.0)),
        }
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIds {
        LnIds {
            gain: self.filled(format!("{prefix}.gain"), 1, d, 1.0),
            bias: self.filled(format!("{prefix}.bias"), 1, d, 0.0),
        }
    }

    fn ffn(&mut self, prefix: &str, c: &ModelConfig) -> FfnIds {
        FfnIds {
            w1: self.matrix(format!("{prefix}.w1"), c.d_model, c.d_ff),
            b1: self.filled(format!("{prefix}.b1"), 1, c.d_ff, 0.0),
            w2: self.matrix(format!("{prefix}.w2"), c.d_ff, c.d_model),
            b2: self.filled(format!("{prefix}.b2"), 1, c.d_model, 0.0),
        }
    }
}

/// Creates and initializes every parameter for `c`.
pub(crate) fn build(c: &ModelConfig, rng: &mut ChaCha8Rng) -> (ParamStore, Layout) {
    let mut store = ParamStore::new();
    let mut b = Builder {
        store: &mut store,
        rng,
    };
    let (d, v) = (c.d_model, c.vocab_size);
    let enc_tok_emb = b.table("enc.tok_emb".into(), v, d);
    let dec_tok_emb = b.table("dec.tok_emb".into(), v, d);
    let user_emb = b.table("user_emb".into(), c.n_users + 1, d);
    let persona = (c.persona_mode != PersonaMode::Off).then(|| PersonaIds {
        w_mu: b.matrix("persona.w_mu".into(), d, d),
        w_sigma: b.filled("persona.w_sigma".into(), d, d, 0.0),
    });
    let enc = (0..c.n_layers_enc)
        .map(|l| EncLayerIds {
            attn: b.attn(&format!("enc.{l}.attn"), c),
            ln1: b.ln(&format!("enc.{l}.ln1"), d),
            ffn: b.ffn(&format!("enc.{l}.ffn"), c),
            ln2: b.ln(&format!("enc.{l}.ln2"), d),
        })
        .collect();
    let dec = (0..c.n_layers_dec)
        .map(|l| DecLayerIds {
            self_attn: b.attn(&format!("dec.{l}.self_attn"), c),
            ln1: b.ln(&format!("dec.{l}.ln1"), d),
            cross_attn: b.attn(&format!("dec.{l}.cross_attn"), c),
            ln2: b.ln(&format!("dec.{l}.ln2"), d),
            ffn: b.ffn(&format!("dec.{l}.ffn"), c),
            ln3: b.ln(&format!("dec.{l}.ln3"), d),
        })
        .collect();
    let out_w = b.matrix("out.w".into(), d, v);
    let out_b = b.filled("out.b".into(), 1, v, 0.0);
    let align = c.alignment_on.then(|| AlignIds {
        w_q: b.matrix("align.w_q".into(), d, d),
        w_k: b.matrix("align.w_k".into(), d, d),
    });
    let layout = Layout {
        enc_tok_emb,
        dec_tok_emb,
        user_emb,
        persona,
        enc,
        dec,
        out_w,
        out_b,
        align,
    };
    (store, layout)
}
