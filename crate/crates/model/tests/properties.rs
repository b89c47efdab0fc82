use mtkit_model::model::gate_from_logits;
use mtkit_model::params::ParamGroup;
use mtkit_model::*;
use proptest::prelude::*;

fn desk_ids(len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..260, len..=len)
}

proptest! {
    #[test]
    fn gates_sum_to_one(logits in prop::collection::vec(-20.0f64..20.0, 1..12), k in 1usize..12) {
        let k = k.min(logits.len());
        let g = gate_from_logits(&logits, k);
        let s: f64 = g.selected.iter().map(|&i| g.gates[i]).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert_eq!(g.selected.len(), k);
        prop_assert_eq!(g.gates.iter().filter(|&&x| x != 0.0).count(), k);
        for (i, &x) in g.gates.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&x));
            if !g.selected.contains(&i) {
                prop_assert_eq!(x, 0.0);
            }
        }
        // the kept experts carry the largest logits
        let min_kept = g.selected.iter().map(|&i| logits[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(logits.iter().enumerate().all(|(i, &l)| g.selected.contains(&i) || l <= min_kept));
    }

    #[test]
    fn future_tokens_never_change_the_past(
        prefix in prop::collection::vec(0u32..11, 1..6),
        a in prop::collection::vec(0u32..11, 1..3),
        b in prop::collection::vec(0u32..11, 1..3),
    ) {
        let p = ParameterSet::init(&ModelConfig::tiny()).unwrap();
        let mut x = prefix.clone();
        x.extend(&a);
        let mut y = prefix.clone();
        y.extend(&b);
        let n = prefix.len() * 11;
        let lx = forward(&p, &x).unwrap().logits;
        let ly = forward(&p, &y).unwrap().logits;
        prop_assert_eq!(&lx[..n], &ly[..n]);
    }

    #[test]
    fn evaluation_count_is_top_k_per_token(ids in prop::collection::vec(0u32..11, 1..8), k in 1usize..=3) {
        let cfg = ModelConfig { top_k: k, ..ModelConfig::tiny() };
        let p = ParameterSet::init(&cfg).unwrap();
        let c = forward(&p, &ids).unwrap();
        prop_assert_eq!(&c.expert_evaluations, &vec![k * ids.len(); cfg.moe_layers().len()]);
        for layer in c.gates() {
            prop_assert_eq!(layer.len(), ids.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reuse_with_replacement_equals_dense(ids in desk_ids(24)) {
        let cfg = ModelConfig {
            moe_placement: MoePlacement::ReplaceFfn,
            init_mode: InitMode::Reuse,
            ..ModelConfig::desk()
        };
        let p = ParameterSet::init(&cfg).unwrap();
        let moe = forward(&p, &ids).unwrap().logits;
        let dense = forward_dense(&p, &ids).unwrap().logits;
        for (a, b) in moe.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn init_modes() {
    let base = ModelConfig::desk();
    let expert_vs_ffn = |p: &ParameterSet| -> Vec<bool> {
        let layer = &p.layout.layers[3];
        let moe = layer.moe.as_ref().unwrap();
        moe.experts
            .iter()
            .map(|e| {
                e.all()
                    .iter()
                    .zip(layer.ffn.all())
                    .all(|(&a, b)| p.params[a].tensor.bit_eq(&p.params[b].tensor))
            })
            .collect()
    };
    let reuse = ParameterSet::init(&ModelConfig { init_mode: InitMode::Reuse, ..base.clone() }).unwrap();
    assert_eq!(expert_vs_ffn(&reuse), vec![true; 8]);
    let mixed = ParameterSet::init(&base).unwrap();
    assert_eq!(expert_vs_ffn(&mixed), [vec![true; 4], vec![false; 4]].concat());
    let random = ParameterSet::init(&ModelConfig { init_mode: InitMode::Random, ..base }).unwrap();
    assert_eq!(expert_vs_ffn(&random), vec![false; 8]);
    let moe_ids: Vec<usize> = (0..random.params.len())
        .filter(|&i| random.params[i].group == ParamGroup::Moe)
        .collect();
    assert_ne!(random.checksum_of(&moe_ids), reuse.checksum_of(&moe_ids));
    assert_eq!(random.frozen_checksum(), reuse.frozen_checksum());
}

#[test]
fn unselected_expert_gets_zero_gradient() {
    let cfg = ModelConfig { top_k: 1, ..ModelConfig::tiny() };
    let p = ParameterSet::init(&cfg).unwrap();
    // two tokens, top-1 over three experts: every layer has an idle expert
    let ids = [1, 2];
    let c = forward(&p, &ids).unwrap();
    let (_, dl) = weighted_nll(&c.logits, 11, &ids, &[1.0]);
    let mut g = Gradients::zeros(&p);
    backward(&p, &c, &dl, &mut g).unwrap();
    let mut checked = 0;
    for (layer, gates) in p.layout.layers.iter().zip(c.gates()) {
        let moe = layer.moe.as_ref().unwrap();
        for (e, ids_e) in moe.experts.iter().enumerate() {
            let used = gates.iter().any(|gv| gv.selected.contains(&e));
            for id in ids_e.all() {
                let zero = g.get(id).unwrap().iter().all(|&x| x == 0.0);
                if !used {
                    assert!(zero, "{}", p.params[id].name);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 2 * 4);
}

#[test]
fn frozen_tensors_have_no_gradient_slot() {
    let p = ParameterSet::init(&ModelConfig::tiny()).unwrap();
    let g = Gradients::zeros(&p);
    for (i, param) in p.params.iter().enumerate() {
        assert_eq!(g.get(i).is_some(), param.trainable);
        assert_eq!(param.trainable, param.group == ParamGroup::Moe);
    }
}

#[test]
fn full_scale_preset_is_only_described() {
    let c = ModelConfig::full_scale();
    assert_eq!(c.moe_layers().len(), 3);
    assert_eq!(c.head_dim(), 128);
}
