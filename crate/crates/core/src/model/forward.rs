//! Forward pass recorded on a tape.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::PersonaMode;
use super::layout::{AttnIds, DecLayerIds, EncLayerIds, FfnIds, LnIds};
use super::{positional_encoding, Paradox};
use crate::error::{bail, Result};
use crate::numerics::{ParamId, Tape, Tensor, Var};
use crate::tokenizer::CLS_ID;

const LN_EPS: f64 = 1e-5;

/// Source of the persona noise ε.
#[derive(Debug)]
pub enum Noise<'r> {
    Sample(&'r mut ChaCha8Rng),
    /// The same ε for every user; used to freeze the noise.
    Fixed(Vec<f64>),
    Zero,
}

/// Training/evaluation switches for one forward pass.
#[derive(Debug)]
pub struct Mode<'r> {
    pub training: bool,
    /// Dropout is applied only when training and a generator is present.
    pub dropout: Option<&'r mut ChaCha8Rng>,
    pub noise: Noise<'r>,
}

impl Mode<'_> {
    /// No dropout, no persona noise.
    pub fn eval() -> Self {
        Self {
            training: false,
            dropout: None,
            noise: Noise::Zero,
        }
    }
}

impl<'r> Mode<'r> {
    pub fn train(dropout: &'r mut ChaCha8Rng, noise: &'r mut ChaCha8Rng) -> Self {
        Self {
            training: true,
            dropout: Some(dropout),
            noise: Noise::Sample(noise),
        }
    }
}

/// Persona values recorded on the tape.
#[derive(Debug, Clone)]
pub(crate) struct PersonaVars {
    pub emb_u: Var,
    pub mu: Var,
    pub log_sigma: Var,
    pub tilde: Var,
    pub epsilon: Vec<f64>,
}

pub(crate) struct Fwd<'m, 'a, 'r> {
    pub model: &'m Paradox,
    pub tape: Tape<'m>,
    pub mode: &'a mut Mode<'r>,
}

impl<'m, 'a, 'r> Fwd<'m, 'a, 'r> {
    pub fn new(model: &'m Paradox, mode: &'a mut Mode<'r>) -> Self {
        Self {
            model,
            tape: Tape::new(),
            mode,
        }
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        self.tape.param(&self.model.params, id)
    }

    fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let (w, b) = (self.p(w), self.p(b));
        let y = self.tape.matmul(x, w)?;
        self.tape.add_row(y, b)
    }

    fn layer_norm(&mut self, x: Var, ids: &LnIds) -> Result<Var> {
        let (g, b) = (self.p(ids.gain), self.p(ids.bias));
        self.tape.layer_norm(x, g, b, LN_EPS)
    }

    /// Inverted dropout.
    fn dropout(&mut self, x: Var) -> Result<Var> {
        let p = self.model.config.dropout_p;
        if !self.mode.training || p == 0.0 {
            return Ok(x);
        }
        let Some(rng) = self.mode.dropout.as_deref_mut() else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - p);
        let n = self.tape.value(x).numel();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.tape.mul_const(x, mask)
    }

    /// Multi-head attention; each head mixes scaled dot-product and
    /// outer-product scores through a sigmoid gate when FAME is on.
    pub fn attention(&mut self, ids: &AttnIds, x_q: Var, x_kv: Var, causal: bool) -> Result<Var> {
        let c = &self.model.config;
        let (h, dh) = (c.n_heads, c.d_head());
        let q = self.linear(x_q, ids.wq, ids.bq)?;
        let k = self.linear(x_kv, ids.wk, ids.bk)?;
        let v = self.linear(x_kv, ids.wv, ids.bv)?;
        let gamma = ids.gamma.map(|g| self.p(g));
        let gate = ids.gate.map(|g| self.p(g));
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(h);
        for head in 0..h {
            let qh = self.tape.slice_cols(q, head * dh, dh)?;
            let kh = self.tape.slice_cols(k, head * dh, dh)?;
            let vh = self.tape.slice_cols(v, head * dh, dh)?;
            let s = self.tape.matmul_bt(qh, kh)?;
            let s = self.tape.scale(s, scale);
            let a = self.tape.softmax(s, causal)?;
            let a = self.dropout(a)?;
            let sdpa = self.tape.matmul(a, vh)?;
            let out = match (gamma, gate) {
                (Some(gamma), Some(gate)) => {
                    let gh = self.tape.slice_cols(gamma, head * dh, dh)?;
                    let qg = self.tape.mul_row(qh, gh)?;
                    let s = self.tape.matmul_bt(qg, kh)?;
                    let a = self.tape.softmax(s, causal)?;
                    let a = self.dropout(a)?;
                    let opa = self.tape.matmul(a, vh)?;
                    let g = self.tape.slice_cols(gate, head, 1)?;
                    self.tape.gated_mix(sdpa, opa, g)?
                }
                _ => sdpa,
            };
            heads.push(out);
        }
        let cat = self.tape.concat_cols(&heads)?;
        self.linear(cat, ids.wo, ids.bo)
    }

    fn ffn(&mut self, ids: &FfnIds, x: Var) -> Result<Var> {
        let hid = self.linear(x, ids.w1, ids.b1)?;
        let hid = self.tape.gelu(hid);
        let hid = self.dropout(hid)?;
        self.linear(hid, ids.w2, ids.b2)
    }

    fn enc_layer(&mut self, ids: &EncLayerIds, x: Var) -> Result<Var> {
        let a = self.attention(&ids.attn, x, x, false)?;
        let x = self.tape.add(x, a)?;
        let x = self.layer_norm(x, &ids.ln1)?;
        let f = self.ffn(&ids.ffn, x)?;
        let x = self.tape.add(x, f)?;
        self.layer_norm(x, &ids.ln2)
    }

    fn dec_layer(&mut self, ids: &DecLayerIds, y: Var, enc: Var) -> Result<Var> {
        let a = self.attention(&ids.self_attn, y, y, true)?;
        let y = self.tape.add(y, a)?;
        let y = self.layer_norm(y, &ids.ln1)?;
        let a = self.attention(&ids.cross_attn, y, enc, false)?;
        let y = self.tape.add(y, a)?;
        let y = self.layer_norm(y, &ids.ln2)?;
        let f = self.ffn(&ids.ffn, y)?;
        let y = self.tape.add(y, f)?;
        self.layer_norm(y, &ids.ln3)
    }

    fn check_length(&self, n: usize, what: &str) -> Result<()> {
        let max = self.model.config.max_length;
        if n == 0 {
            bail!(DegenerateInput, "{} sequence is empty", what);
        }
        if n > max {
            bail!(Contract, "{} sequence has {} tokens, max_length is {}", what, n, max);
        }
        Ok(())
    }

    /// Token embedding plus sinusoidal positions.
    fn embed_tokens(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.p(table);
        let e = self.tape.gather(t, ids)?;
        let pe = positional_encoding(ids.len(), self.model.config.d_model);
        let pe = self.tape.constant(pe);
        self.tape.add(e, pe)
    }

    /// `Emb_x + PE (+ Emb_u)`, the last term only with speaker ids on.
    pub fn embed_input(&mut self, ids: &[usize], user_row: usize) -> Result<Var> {
        let x = self.embed_tokens(self.model.layout.enc_tok_emb, ids)?;
        if !self.model.config.speaker_id_on {
            return Ok(x);
        }
        let table = self.p(self.model.layout.user_emb);
        let u = self.tape.gather(table, &[user_row])?;
        self.tape.add_row(x, u)
    }

    /// Contextual persona for the user at `row`; `None` when persona is off.
    pub fn persona(&mut self, row: usize) -> Result<Option<PersonaVars>> {
        let Some(ids) = self.model.layout.persona.clone() else {
            return Ok(None);
        };
        let d = self.model.config.d_model;
        let table = self.p(self.model.layout.user_emb);
        let emb_u = self.tape.gather(table, &[row])?;
        let w_mu = self.p(ids.w_mu);
        let w_sigma = self.p(ids.w_sigma);
        let mu = self.tape.matmul(emb_u, w_mu)?;
        let log_sigma = self.tape.matmul(emb_u, w_sigma)?;
        let noisy = self.model.config.persona_mode == PersonaMode::Randomized && self.mode.training;
        if !noisy {
            return Ok(Some(PersonaVars {
                emb_u,
                mu,
                log_sigma,
                tilde: mu,
                epsilon: vec![0.0; d],
            }));
        }
        let epsilon: Vec<f64> = match &mut self.mode.noise {
            Noise::Sample(rng) => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            Noise::Fixed(e) => {
                if e.len() != d {
                    bail!(Dimension, "fixed noise has {} entries, d_model is {}", e.len(), d);
                }
                e.clone()
            }
            Noise::Zero => vec![0.0; d],
        };
        let sigma = self.tape.exp(log_sigma);
        let scaled = self.tape.mul_const(sigma, epsilon.clone())?;
        let tilde = self.tape.add(mu, scaled)?;
        Ok(Some(PersonaVars {
            emb_u,
            mu,
            log_sigma,
            tilde,
            epsilon,
        }))
    }

    /// Encoder stack, then `h~ = h + Emb~_u`.
    pub fn encode(&mut self, ids: &[usize], user_row: usize, persona: Option<&PersonaVars>) -> Result<Var> {
        self.check_length(ids.len(), "encoder")?;
        let mut x = self.embed_input(ids, user_row)?;
        let layers = self.model.layout.enc.clone();
        for l in &layers {
            x = self.enc_layer(l, x)?;
        }
        match persona {
            Some(p) => self.tape.add_row(x, p.tilde),
            None => Ok(x),
        }
    }

    /// Final decoder hidden states, `[m × d_model]`.
    pub fn decode_hidden(&mut self, dec_in: &[usize], enc: Var) -> Result<Var> {
        self.check_length(dec_in.len(), "decoder")?;
        if dec_in[0] != CLS_ID {
            bail!(Contract, "decoder input must begin with [CLS], got id {}", dec_in[0]);
        }
        let mut y = self.embed_tokens(self.model.layout.dec_tok_emb, dec_in)?;
        let layers = self.model.layout.dec.clone();
        for l in &layers {
            y = self.dec_layer(l, y, enc)?;
        }
        Ok(y)
    }

    /// Raw vocabulary logits, `[m × |V|]`.
    pub fn decode_raw(&mut self, dec_in: &[usize], enc: Var) -> Result<Var> {
        let y = self.decode_hidden(dec_in, enc)?;
        let (w, b) = (self.model.layout.out_w, self.model.layout.out_b);
        self.linear(y, w, b)
    }

    /// Row-stochastic `|V| × |V|` alignment matrix built from the decoder
    /// embedding table.
    pub fn alignment(&mut self) -> Result<Option<Var>> {
        let Some(ids) = self.model.layout.align.clone() else {
            return Ok(None);
        };
        let e = self.p(self.model.layout.dec_tok_emb);
        let (wq, wk) = (self.p(ids.w_q), self.p(ids.w_k));
        let q = self.tape.matmul(e, wq)?;
        let k = self.tape.matmul(e, wk)?;
        let s = self.tape.matmul_bt(q, k)?;
        let s = self.tape.scale(s, 1.0 / (self.model.config.d_model as f64).sqrt());
        Ok(Some(self.tape.softmax(s, false)?))
    }

    /// `raw·A + raw`, or `raw` itself without alignment.
    pub fn align(&mut self, raw: Var, a: Option<Var>) -> Result<Var> {
        match a {
            Some(a) => {
                let shifted = self.tape.matmul(raw, a)?;
                self.tape.add(shifted, raw)
            }
            None => Ok(raw),
        }
    }
}

/// Reads a `[1 × n]` tape value as a plain vector.
pub(crate) fn row_vec(tape: &Tape<'_>, v: Var) -> Vec<f64> {
    tape.value(v).values().to_vec()
}

#[allow(dead_code)]
pub(crate) fn to_tensor(tape: &Tape<'_>, v: Var) -> Tensor {
    tape.value(v).clone()
}
