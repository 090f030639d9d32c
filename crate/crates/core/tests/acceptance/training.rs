use occgame::net::ConvVariant;
use occgame::train::{decode_train_state, encode_train_state, TrainBatch, TrainConfig, TrainState};

use crate::common::{toy_faces, toy_masks};

const STEPS: u64 = 200;
const SEED: u64 = 21;

fn batch() -> TrainBatch {
    TrainBatch::new(toy_faces(SEED, 10, 32), toy_masks(SEED, 10, 32)).unwrap()
}

/// Runs `state` up to `until` steps, returning the ℓ1 term of each step.
fn advance(state: &mut TrainState, batch: &TrainBatch, until: u64) -> Vec<f64> {
    let mut l1 = Vec::new();
    while state.step < until {
        l1.push(state.train_step(batch).unwrap().l1);
    }
    l1
}

pub fn run() {
    let batch = batch();
    for variant in ConvVariant::ALL {
        let mut state = TrainState::new(TrainConfig::toy(variant, 32, SEED)).unwrap();
        let mut l1 = advance(&mut state, &batch, STEPS / 2);
        let midpoint = encode_train_state(&state).unwrap();
        l1.extend(advance(&mut state, &batch, STEPS));
        let ratio = l1[STEPS as usize - 1] / l1[9];
        println!("    {:<8} l1 step 10 {:.4} -> step 200 {:.4} (ratio {ratio:.3})", variant.name(), l1[9], l1[STEPS as usize - 1]);
        assert!(ratio <= 0.5, "{variant:?} l1 only fell to {ratio:.3} of its step-10 value");

        if variant == ConvVariant::Regular {
            let finished = encode_train_state(&state).unwrap();
            let mut resumed = decode_train_state(&midpoint).unwrap();
            advance(&mut resumed, &batch, STEPS);
            assert!(encode_train_state(&resumed).unwrap() == finished, "resumed run diverged");

            let mut rerun = TrainState::new(TrainConfig::toy(variant, 32, SEED)).unwrap();
            let l1_again = advance(&mut rerun, &batch, STEPS);
            assert!(encode_train_state(&rerun).unwrap() == finished, "rerun diverged");
            assert!(l1_again.iter().zip(&l1).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
