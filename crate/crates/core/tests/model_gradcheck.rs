use paradox_core::model::{Example, Mode, ModelConfig, Noise, Paradox, PersonaMode, UserRef};
use paradox_core::rng::{stream_rng, Stream};
use rand::Rng;

fn batch() -> Vec<Example> {
    vec![
        Example {
            user: UserRef::Known(0),
            source: vec![4, 5, 6, 7],
            target: vec![8, 9, 10],
        },
        Example {
            user: UserRef::Known(1),
            source: vec![11, 12],
            target: vec![13, 14, 15, 16, 17],
        },
        Example {
            user: UserRef::Unknown,
            source: vec![18, 19, 4],
            target: vec![5],
        },
    ]
}

fn loss(m: &Paradox, eps: &[f64]) -> f64 {
    let mut mode = Mode {
        training: true,
        dropout: None,
        noise: Noise::Fixed(eps.to_vec()),
    };
    m.batch_loss(&batch(), &mut mode).unwrap().parts.total
}

/// Every element of every parameter, against central differences.
fn check(config: ModelConfig) {
    let mut m = Paradox::new(config, 21).unwrap();
    // Move off the symmetric initialization (zero biases, zero W_σ, gates at
    // 0, γ equal across dims) so that every gradient path is exercised.
    let mut rng = stream_rng(3, Stream::Init, 1);
    for id in m.params.ids().collect::<Vec<_>>() {
        for v in m.params.get_mut(id).values_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let eps: Vec<f64> = (0..m.config().d_model).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grads = {
        let mut mode = Mode {
            training: true,
            dropout: None,
            noise: Noise::Fixed(eps.clone()),
        };
        m.batch_loss(&batch(), &mut mode).unwrap().backward().unwrap()
    };
    m.params.zero_grads();
    m.params.accumulate(&grads).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for id in m.params.ids().collect::<Vec<_>>() {
        let analytic = m.params.get(id).grad().unwrap_or(&[]).to_vec();
        for k in 0..m.params.get(id).numel() {
            let orig = m.params.get(id).values()[k];
            m.params.get_mut(id).values_mut()[k] = orig + h;
            let up = loss(&m, &eps);
            m.params.get_mut(id).values_mut()[k] = orig - h;
            let down = loss(&m, &eps);
            m.params.get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(k).copied().unwrap_or(0.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "{}[{k}]: analytic {a}, numeric {numeric}", m.params.name(id));
        }
    }
    assert!(worst < 1e-4);
}

fn tiny() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers_enc: 1,
        n_layers_dec: 1,
        n_heads: 2,
        d_ff: 32,
        vocab_size: 20,
        n_users: 2,
        max_length: 40,
        persona_mode: PersonaMode::Randomized,
        ..ModelConfig::default()
    }
}

#[test]
fn full_model_gradients() {
    check(tiny());
}

#[test]
fn ablated_model_gradients() {
    check(ModelConfig {
        fame_on: false,
        alignment_on: false,
        persona_mode: PersonaMode::Linear,
        speaker_id_on: false,
        ..tiny()
    });
}
