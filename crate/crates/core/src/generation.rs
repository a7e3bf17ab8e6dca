//! Greedy autoregressive generation from a seed word, conditioned on a
//! user's latest prior utterance.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::model::{EncoderOutput, Mode, Paradox, UserRef};
use crate::numerics::Tensor;
use crate::tokenizer::{Tokenizer, CLS_ID, SEP_ID};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub user: UserRef,
    pub history_text: String,
    pub seed_word: String,
    /// Upper bound on the decoder sequence, `[CLS]` included.
    pub max_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub text: String,
    /// Decoder sequence: `[CLS]`, seed tokens, generated tokens (no `[SEP]`).
    pub ids: Vec<usize>,
    /// Greedy steps taken.
    pub steps: usize,
}

impl GenerationRequest {
    pub fn validate(&self, model: &Paradox) -> Result<()> {
        if self.seed_word.trim().is_empty() {
            bail!(Contract, "seed word is empty");
        }
        if self.history_text.trim().is_empty() {
            bail!(Contract, "history text is empty");
        }
        let cap = model.config().max_length;
        if self.max_length < 2 || self.max_length > cap {
            bail!(
                Contract,
                "generation max_length {} outside 2..={}",
                self.max_length,
                cap
            );
        }
        model.user_row(self.user)?;
        Ok(())
    }
}

/// Greedy decoder over a frozen model. The alignment matrix depends only on
/// weights and is built once here.
#[derive(Debug)]
pub struct Generator<'m> {
    model: &'m Paradox,
    tokenizer: &'m Tokenizer,
    alignment: Option<Tensor>,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m Paradox, tokenizer: &'m Tokenizer) -> Result<Self> {
        if tokenizer.vocab.len() > model.config().vocab_size {
            bail!(
                Compatibility,
                "tokenizer has {} tokens, model vocabulary is {}",
                tokenizer.vocab.len(),
                model.config().vocab_size
            );
        }
        Ok(Self {
            model,
            tokenizer,
            alignment: model.alignment_matrix()?,
        })
    }

    fn history_ids(&self, req: &GenerationRequest) -> Result<Vec<usize>> {
        let mut ids = self.tokenizer.encode(&req.history_text);
        if ids.is_empty() {
            bail!(DegenerateInput, "history text encodes to no tokens");
        }
        ids.truncate(self.model.config().max_length);
        Ok(ids)
    }

    fn start(&self, req: &GenerationRequest) -> Result<Vec<usize>> {
        let seed = self.tokenizer.encode(&req.seed_word);
        if seed.is_empty() {
            bail!(Contract, "seed word encodes to no tokens");
        }
        let mut ids = Vec::with_capacity(req.max_length);
        ids.push(CLS_ID);
        ids.extend(seed);
        ids.truncate(req.max_length);
        Ok(ids)
    }

    fn argmax(logits: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }

    fn finish(&self, req: &GenerationRequest, ids: Vec<usize>, steps: usize) -> Result<Generated> {
        let seed_len = 1 + self.tokenizer.encode(&req.seed_word).len();
        let rest = self.tokenizer.decode(&ids[seed_len.min(ids.len())..])?;
        let seed = req.seed_word.split_whitespace().collect::<Vec<_>>().join(" ");
        let text = if rest.is_empty() {
            seed
        } else {
            alloc::format!("{seed} {rest}")
        };
        Ok(Generated { text, ids, steps })
    }

    /// Greedy decoding: append the argmax token until `[SEP]` or
    /// `max_length`. The encoder output is computed once, since it does
    /// not depend on the loop state.
    pub fn generate(&self, req: &GenerationRequest) -> Result<Generated> {
        req.validate(self.model)?;
        let history = self.history_ids(req)?;
        let enc = self.model.encode(&history, req.user, &mut Mode::eval())?;
        self.decode_loop(req, |_| Ok(enc.clone()))
    }

    fn decode_loop(
        &self,
        req: &GenerationRequest,
        mut encode: impl FnMut(&[usize]) -> Result<EncoderOutput>,
    ) -> Result<Generated> {
        let mut ids = self.start(req)?;
        let mut steps = 0;
        while ids.len() < req.max_length {
            let enc = encode(&ids)?;
            let logits = self
                .model
                .next_token_logits(&ids, &enc, self.alignment.as_ref())?;
            steps += 1;
            let next = Self::argmax(&logits);
            if next == SEP_ID {
                break;
            }
            ids.push(next);
        }
        self.finish(req, ids, steps)
    }

    /// The loop with the encoder invoked at every step, as a reference for
    /// [`Generator::generate`].
    pub fn generate_reencoding(&self, req: &GenerationRequest) -> Result<Generated> {
        req.validate(self.model)?;
        let history = self.history_ids(req)?;
        self.decode_loop(req, |_| self.model.encode(&history, req.user, &mut Mode::eval()))
    }
}
