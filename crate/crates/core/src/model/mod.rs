//! The persona-conditioned encoder-decoder network, its alignment module
//! and the composite loss.

mod align;
mod config;
mod forward;
mod layout;

pub use align::{align_logits, alignment_matrix};
pub use config::{ModelConfig, PersonaMode};
pub use forward::{Mode, Noise};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::numerics::{ops, Gradients, ParamStore, Tape, Tensor, Var};
use crate::rng::{stream_rng, Stream};
use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};
use forward::{row_vec, Fwd, PersonaVars};
use layout::Layout;

/// A user as seen by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserRef {
    /// Index into the table of training users.
    Known(usize),
    /// Anyone else; served by the learnable `[UNK]` persona row.
    Unknown,
}

/// Persona of one user for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaState {
    pub user: UserRef,
    pub emb_u: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub sigma: Vec<f64>,
    pub emb_tilde: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl PersonaState {
    /// `−½ Σ (1 + 2 log σ − μ² − σ²)`.
    pub fn kl(&self) -> f64 {
        ops::kl_standard_normal(&self.mu, &self.log_sigma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// Persona-shifted hidden states, `[n × d_model]`.
    pub h_tilde: Tensor,
    /// `None` when persona mode is off.
    pub persona: Option<PersonaState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLogits {
    pub raw: Tensor,
    pub aligned: Tensor,
}

/// Attention block address, for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnSite {
    Encoder(usize),
    DecoderSelf(usize),
    DecoderCross(usize),
}

/// One training pair: encoder ids and target ids, both without specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: UserRef,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl Example {
    /// Teacher-forcing pair from `[CLS] target [SEP]`, truncated to `max_len`.
    pub fn decoder_io(&self, max_len: usize) -> (Vec<usize>, Vec<usize>) {
        let mut s = Vec::with_capacity(self.target.len() + 2);
        s.push(CLS_ID);
        s.extend_from_slice(&self.target);
        s.push(SEP_ID);
        s.truncate(max_len + 1);
        let targets = s[1..].to_vec();
        s.pop();
        (s, targets)
    }

    fn encoder_ids(&self, max_len: usize) -> &[usize] {
        &self.source[..self.source.len().min(max_len)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// `L1 + λ·L2`.
    pub total: f64,
    /// Token-mean cross-entropy.
    pub l1: f64,
    /// Mean KL over distinct users.
    pub l2: f64,
    pub tokens: usize,
}

impl LossParts {
    pub fn perplexity(&self) -> f64 {
        self.l1.exp()
    }
}

/// Composite loss from plain values. `L2` is the mean KL of `personas` in
/// randomized mode and 0 otherwise.
pub fn loss_total(
    aligned: &Tensor,
    targets: &[usize],
    personas: &[PersonaState],
    mode: PersonaMode,
    lambda: f64,
) -> Result<LossParts> {
    let (l1, cache) = ops::cross_entropy(aligned, targets, Some(PAD_ID))?;
    let l2 = if mode == PersonaMode::Randomized && !personas.is_empty() {
        personas.iter().map(PersonaState::kl).sum::<f64>() / personas.len() as f64
    } else {
        0.0
    };
    Ok(LossParts {
        total: l1 + lambda * l2,
        l1,
        l2,
        tokens: cache.count,
    })
}

/// Sinusoidal positions: `sin(p/10000^(2i/d))` on even columns, `cos` on odd.
pub fn positional_encoding(n: usize, d: usize) -> Tensor {
    let mut vals = vec![0.0; n * d];
    for p in 0..n {
        for i in (0..d).step_by(2) {
            let angle = p as f64 / 10000f64.powf(i as f64 / d as f64);
            vals[p * d + i] = angle.sin();
            if i + 1 < d {
                vals[p * d + i + 1] = angle.cos();
            }
        }
    }
    Tensor::new(&[n, d], vals).expect("shape matches")
}

/// Loss of one batch, still on its tape.
pub struct BatchLoss<'m> {
    tape: Tape<'m>,
    loss: Var,
    pub parts: LossParts,
}

impl BatchLoss<'_> {
    pub fn backward(self) -> Result<Gradients> {
        self.tape.backward(self.loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paradox {
    config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

impl PartialEq for Layout {
    fn eq(&self, _: &Self) -> bool {
        // Fully determined by the config.
        true
    }
}

impl Paradox {
    /// Fresh model with weights drawn from the init stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let (params, layout) = layout::build(&config, &mut rng);
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Model for `config` with every parameter taken from `blobs`.
    pub fn from_blobs<'b>(
        config: ModelConfig,
        blobs: impl IntoIterator<Item = (&'b str, &'b [usize], Vec<f64>)>,
    ) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        let mut seen = BTreeMap::new();
        for (name, shape, values) in blobs {
            model.params.assign(name, shape, values)?;
            seen.insert(String::from(name), ());
        }
        if let Some((missing, _)) = model.params.iter().find(|(n, _)| !seen.contains_key(*n)) {
            bail!(Compatibility, "checkpoint lacks parameter `{}`", missing);
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Row of the user table serving `user`.
    pub fn user_row(&self, user: UserRef) -> Result<usize> {
        let unk = self.config.n_users;
        match user {
            UserRef::Known(i) if i >= unk => {
                bail!(Index, "user index {} outside a table of {} users", i, unk)
            }
            UserRef::Known(i) if self.config.speaker_id_on => Ok(i),
            _ => Ok(unk),
        }
    }

    pub fn embed_input(&self, ids: &[usize], user: UserRef) -> Result<Tensor> {
        let row = self.user_row(user)?;
        let mut mode = Mode::eval();
        let mut f = Fwd::new(self, &mut mode);
        let v = f.embed_input(ids, row)?;
        Ok(f.tape.value(v).clone())
    }

    pub fn persona_sample(&self, user: UserRef, mode: &mut Mode<'_>) -> Result<Option<PersonaState>> {
        let row = self.user_row(user)?;
        let mut f = Fwd::new(self, mode);
        let p = f.persona(row)?;
        Ok(p.map(|p| persona_state(&f.tape, user, &p)))
    }

    pub fn encode(&self, ids: &[usize], user: UserRef, mode: &mut Mode<'_>) -> Result<EncoderOutput> {
        let row = self.user_row(user)?;
        let mut f = Fwd::new(self, mode);
        let p = f.persona(row)?;
        let h = f.encode(ids, row, p.as_ref())?;
        Ok(EncoderOutput {
            h_tilde: f.tape.value(h).clone(),
            persona: p.map(|p| persona_state(&f.tape, user, &p)),
        })
    }

    /// Evaluation-mode decoder pass over `dec_in` (which starts with `[CLS]`).
    pub fn decode_forward(&self, dec_in: &[usize], enc: &EncoderOutput) -> Result<DecoderLogits> {
        let mut mode = Mode::eval();
        let mut f = Fwd::new(self, &mut mode);
        let h = f.tape.constant_ref(&enc.h_tilde);
        let raw = f.decode_raw(dec_in, h)?;
        let a = f.alignment()?;
        let aligned = f.align(raw, a)?;
        Ok(DecoderLogits {
            raw: f.tape.value(raw).clone(),
            aligned: f.tape.value(aligned).clone(),
        })
    }

    /// Aligned logits of the last decoder position only. `a` is the
    /// alignment matrix, precomputed by the caller.
    pub fn next_token_logits(&self, dec_in: &[usize], enc: &EncoderOutput, a: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut mode = Mode::eval();
        let mut f = Fwd::new(self, &mut mode);
        let h = f.tape.constant_ref(&enc.h_tilde);
        let y = f.decode_hidden(dec_in, h)?;
        let last = f.tape.value(y).row(dec_in.len() - 1).to_vec();
        let d = last.len();
        let last = Tensor::new(&[1, d], last)?;
        let mut raw = ops::matmul(&last, self.params.get(self.layout.out_w))?;
        let bias = self.params.get(self.layout.out_b).values();
        raw.values_mut().iter_mut().zip(bias).for_each(|(r, b)| *r += b);
        match (a, self.config.alignment_on) {
            (Some(a), true) => {
                let mut out = ops::matmul(&raw, a)?;
                out.values_mut().iter_mut().zip(raw.values()).for_each(|(o, r)| *o += r);
                Ok(out.into_values())
            }
            (None, true) => bail!(Contract, "alignment is on but no alignment matrix was supplied"),
            _ => Ok(raw.into_values()),
        }
    }

    /// The `|V| × |V|` alignment matrix, `None` with alignment off.
    pub fn alignment_matrix(&self) -> Result<Option<Tensor>> {
        let mut mode = Mode::eval();
        let mut f = Fwd::new(self, &mut mode);
        let a = f.alignment()?;
        Ok(a.map(|a| f.tape.value(a).clone()))
    }

    /// One attention block applied in evaluation mode.
    pub fn attention(&self, site: AttnSite, x_q: &Tensor, x_kv: &Tensor, causal: bool) -> Result<Tensor> {
        let ids = match site {
            AttnSite::Encoder(l) => self.layout.enc.get(l).map(|l| &l.attn),
            AttnSite::DecoderSelf(l) => self.layout.dec.get(l).map(|l| &l.self_attn),
            AttnSite::DecoderCross(l) => self.layout.dec.get(l).map(|l| &l.cross_attn),
        };
        let Some(ids) = ids.cloned() else {
            bail!(Index, "no attention block at {:?}", site);
        };
        let mut mode = Mode::eval();
        let mut f = Fwd::new(self, &mut mode);
        let q = f.tape.constant_ref(x_q);
        let kv = f.tape.constant_ref(x_kv);
        let out = f.attention(&ids, q, kv, causal)?;
        Ok(f.tape.value(out).clone())
    }

    /// `L = L1 + λ·L2` over a batch, recorded for backpropagation. One
    /// persona is drawn per distinct user in the batch.
    pub fn batch_loss<'m>(&'m self, batch: &[Example], mode: &mut Mode<'_>) -> Result<BatchLoss<'m>> {
        if batch.is_empty() {
            bail!(DegenerateInput, "empty batch");
        }
        let mut f = Fwd::new(self, mode);
        let a = f.alignment()?;
        let (vars, parts) = self.batch_terms(&mut f, batch, a)?;
        let BatchVars { loss, .. } = vars;
        Ok(BatchLoss {
            tape: f.tape,
            loss,
            parts,
        })
    }

    fn batch_terms(&self, f: &mut Fwd<'_, '_, '_>, batch: &[Example], a: Option<Var>) -> Result<(BatchVars, LossParts)> {
        let max = self.config.max_length;
        let mut personas: BTreeMap<usize, Option<PersonaVars>> = BTreeMap::new();
        let mut logits = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for ex in batch {
            let row = self.user_row(ex.user)?;
            if !personas.contains_key(&row) {
                let p = f.persona(row)?;
                personas.insert(row, p);
            }
            let p = personas[&row].clone();
            let h = f.encode(ex.encoder_ids(max), row, p.as_ref())?;
            let (dec_in, tgt) = ex.decoder_io(max);
            logits.push(f.decode_raw(&dec_in, h)?);
            targets.extend(tgt);
        }
        let raw = f.tape.concat_rows(&logits)?;
        let aligned = f.align(raw, a)?;
        let l1 = f.tape.cross_entropy(aligned, &targets, Some(PAD_ID))?;
        let tokens = targets.iter().filter(|&&t| t != PAD_ID).count();
        let l1_value = f.tape.scalar(l1);
        let kls: Vec<Var> = if self.config.persona_mode == PersonaMode::Randomized {
            personas
                .values()
                .flatten()
                .map(|p| f.tape.kl_standard_normal(p.mu, p.log_sigma))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        if kls.is_empty() {
            let parts = LossParts {
                total: l1_value,
                l1: l1_value,
                l2: 0.0,
                tokens,
            };
            return Ok((BatchVars { loss: l1 }, parts));
        }
        let stacked = f.tape.concat_cols(&kls)?;
        let sum = f.tape.sum(stacked);
        let l2 = f.tape.scale(sum, 1.0 / kls.len() as f64);
        let weighted = f.tape.scale(l2, self.config.lambda);
        let loss = f.tape.add(l1, weighted)?;
        let parts = LossParts {
            total: f.tape.scalar(loss),
            l1: l1_value,
            l2: f.tape.scalar(l2),
            tokens,
        };
        Ok((BatchVars { loss }, parts))
    }

    /// Evaluation-mode loss over a whole split: token-mean `L1` across all
    /// examples and mean `L2` over the distinct users present.
    pub fn evaluate_loss(&self, examples: &[Example]) -> Result<LossParts> {
        if examples.is_empty() {
            bail!(DegenerateInput, "no examples to evaluate");
        }
        const CHUNK: usize = 16;
        let a = self.alignment_matrix()?;
        let mut nll = 0.0;
        let mut tokens = 0usize;
        for chunk in examples.chunks(CHUNK) {
            let mut mode = Mode::eval();
            let mut f = Fwd::new(self, &mut mode);
            let av = a.as_ref().map(|a| f.tape.constant_ref(a));
            let (_, parts) = self.batch_terms(&mut f, chunk, av)?;
            nll += parts.l1 * parts.tokens as f64;
            tokens += parts.tokens;
        }
        let l1 = nll / tokens as f64;
        let l2 = if self.config.persona_mode == PersonaMode::Randomized {
            let mut users: Vec<UserRef> = examples.iter().map(|e| e.user).collect();
            users.sort();
            users.dedup();
            let mut rows = BTreeMap::new();
            for u in users {
                rows.insert(self.user_row(u)?, u);
            }
            let mut total = 0.0;
            for &u in rows.values() {
                let p = self.persona_sample(u, &mut Mode::eval())?;
                total += p.map_or(0.0, |p| p.kl());
            }
            total / rows.len() as f64
        } else {
            0.0
        };
        Ok(LossParts {
            total: l1 + self.config.lambda * l2,
            l1,
            l2,
            tokens,
        })
    }
}

struct BatchVars {
    loss: Var,
}

fn persona_state(tape: &Tape<'_>, user: UserRef, p: &PersonaVars) -> PersonaState {
    let log_sigma = row_vec(tape, p.log_sigma);
    PersonaState {
        user,
        emb_u: row_vec(tape, p.emb_u),
        mu: row_vec(tape, p.mu),
        sigma: log_sigma.iter().map(|l| l.exp()).collect(),
        log_sigma,
        emb_tilde: row_vec(tape, p.tilde),
        epsilon: p.epsilon.clone(),
    }
}
