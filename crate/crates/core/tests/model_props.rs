mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use saros::corpus::{Block, Label};
use saros::model::{block_gradient, block_loss, pair_loss, LossConfig, ModelParams};

use common::{random_params, reference_block_gradient, reference_block_loss};

const N_ITEMS: usize = 12;

/// A block over disjoint random item sets, with random parameters.
fn instance() -> impl Strategy<Value = (ModelParams, Block, f64)> {
    (
        any::<u64>(),
        1usize..6,
        1usize..6,
        1usize..9,
        prop_oneof![Just(0.0), 1e-4..0.5f64],
    )
        .prop_map(|(seed, n_neg, n_pos, k, lambda)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, 3, N_ITEMS, k);
            let mut items: Vec<u32> = (0..N_ITEMS as u32).collect();
            rand::seq::SliceRandom::shuffle(items.as_mut_slice(), &mut rng);
            let block = Block {
                user: (seed % 3) as u32,
                index: 0,
                negatives: items[..n_neg].to_vec(),
                positives: items[n_neg..n_neg + n_pos].to_vec(),
            };
            (params, block, lambda)
        })
}

fn central_difference(params: &ModelParams, cfg: &LossConfig, block: &Block) -> Vec<(bool, usize, f64)> {
    let h = 1e-5;
    let k = params.dim();
    let mut rows: Vec<(bool, usize)> = vec![(true, block.user as usize)];
    rows.extend(block.negatives.iter().chain(&block.positives).map(|&i| (false, i as usize)));
    let mut out = Vec::new();
    for (is_user, r) in rows {
        for c in 0..k {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if is_user {
                plus.users.row_mut(r)[c] += h;
                minus.users.row_mut(r)[c] -= h;
            } else {
                plus.items.row_mut(r)[c] += h;
                minus.items.row_mut(r)[c] -= h;
            }
            let d = (block_loss(&plus, cfg, block).unwrap() - block_loss(&minus, cfg, block).unwrap())
                / (2.0 * h);
            out.push((is_user, r * k + c, d));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradient_matches_finite_differences((params, block, lambda) in instance()) {
        let cfg = LossConfig { lambda };
        let g = block_gradient(&params, &cfg, &block).unwrap();
        let k = params.dim();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (is_user, flat, d) in central_difference(&params, &cfg, &block) {
            let (row, c) = (flat / k, flat % k);
            let a = if is_user {
                g.user_grad[c]
            } else {
                g.items.iter().find(|(i, _)| *i as usize == row).map_or(0.0, |(_, v)| v[c])
            };
            analytic.push(a);
            numeric.push(d);
        }
        let err: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        prop_assert!(err / scale < 1e-5, "relative error {}", err / scale);
    }

    #[test]
    fn gradient_matches_reference((params, block, lambda) in instance()) {
        let cfg = LossConfig { lambda };
        let g = block_gradient(&params, &cfg, &block).unwrap();
        let (gu, gv) = reference_block_gradient(&params, lambda, block.user as usize, &block.negatives, &block.positives);
        let k = params.dim();
        let u = block.user as usize;
        for c in 0..k {
            prop_assert!((g.user_grad[c] - gu[u * k + c]).abs() < 1e-12);
        }
        for (i, v) in &g.items {
            for c in 0..k {
                prop_assert!((v[c] - gv[*i as usize * k + c]).abs() < 1e-12);
            }
        }
        let loss = block_loss(&params, &cfg, &block).unwrap();
        let reference = reference_block_loss(&params, lambda, u, &block.negatives, &block.positives);
        prop_assert!((loss - reference).abs() < 1e-12 * reference.max(1.0));
    }

    #[test]
    fn block_loss_ignores_order_within_sides(
        (params, block, lambda) in instance(),
        rot_neg in 0usize..6,
        rot_pos in 0usize..6,
    ) {
        let cfg = LossConfig { lambda };
        let mut permuted = block.clone();
        let n = permuted.negatives.len();
        permuted.negatives.rotate_left(rot_neg % n);
        permuted.negatives.reverse();
        let p = permuted.positives.len();
        permuted.positives.rotate_left(rot_pos % p);
        let a = block_loss(&params, &cfg, &block).unwrap();
        let b = block_loss(&params, &cfg, &permuted).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn flipping_the_label_swaps_the_pair((params, block, _l) in instance()) {
        let cfg = LossConfig { lambda: 0.0 };
        let u = block.user as usize;
        let (i, j) = (block.positives[0] as usize, block.negatives[0] as usize);
        let a = pair_loss(&params, &cfg, u, i, j, Label::Positive).unwrap();
        let b = pair_loss(&params, &cfg, u, j, i, Label::Negative).unwrap();
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1.0));
    }

    #[test]
    fn pair_loss_exceeds_its_regulariser((params, block, lambda) in instance(), y in any::<bool>()) {
        let cfg = LossConfig { lambda };
        let u = block.user as usize;
        let (i, j) = (block.positives[0] as usize, block.negatives[0] as usize);
        let y = if y { Label::Positive } else { Label::Negative };
        let norms: f64 = [params.users.row(u), params.items.row(i), params.items.row(j)]
            .iter()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>())
            .sum();
        let loss = pair_loss(&params, &cfg, u, i, j, y).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(loss > lambda * norms);
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), n_users in 1usize..5, n_items in 1usize..5, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = random_params(&mut rng, n_users, n_items, k);
        params.seed = seed;
        params.users.row_mut(0)[0] = 1e-300;
        let mut buf = Vec::new();
        params.write_checkpoint(&mut buf).unwrap();
        let back = ModelParams::read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(back, params);
    }
}

#[test]
fn margin_saturation_keeps_loss_finite() {
    let mut params = ModelParams::zeros(1, 2, 1);
    params.users.row_mut(0)[0] = 1e3;
    params.items.row_mut(0)[0] = 1e3;
    params.items.row_mut(1)[0] = -1e3;
    let cfg = LossConfig { lambda: 0.0 };
    let right = pair_loss(&params, &cfg, 0, 0, 1, Label::Positive).unwrap();
    let wrong = pair_loss(&params, &cfg, 0, 1, 0, Label::Positive).unwrap();
    assert_eq!(right, 0.0);
    assert_eq!(wrong, 2e6);
}
