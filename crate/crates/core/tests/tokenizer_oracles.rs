mod common;

use common::*;
use matdnn::features::FeatureSequence;
use matdnn::synth::{generate_corpus, SynthConfig};
use matdnn::tokenizer::*;
use ndarray::Array2;
use rand::Rng;

fn rows(f: &FeatureSequence) -> Vec<Vec<f64>> {
    (0..f.num_frames()).map(|t| f.frame(t).to_vec()).collect()
}

fn triples(l: &UtteranceLabels) -> Vec<(usize, usize, usize)> {
    l.segments.iter().map(|s| (s.start, s.end, s.token)).collect()
}

#[test]
fn decode_matches_exhaustive_search() {
    let mut rng = rng(11);
    let mut checked = 0;
    for case in 0..60 {
        let m = rng.random_range(1..=3);
        let dim = rng.random_range(1..=2);
        let t_len = rng.random_range(m..=12);
        let model = random_model(&mut rng, m, 2, dim);
        let frames = Array2::from_shape_fn((t_len, dim), |_| rng.random_range(-3.0..3.0));
        let f = seq(&format!("c{case}"), "s", frames);
        let decoded = decode(std::slice::from_ref(&f), &model).unwrap();
        let (best, score, second) = brute_decode(&rows(&f), &model);
        let got = joint_loglik(std::slice::from_ref(&f), &model, &decoded).unwrap();
        assert!((got - score).abs() < 1e-9, "case {case}: {got} vs {score}");
        if score - second > 1e-9 {
            assert_eq!(triples(&decoded.utterances[0]), best, "case {case}");
        }
        checked += 1;
    }
    assert!(checked >= 50);
}

#[test]
fn decode_ties_prefer_lower_token() {
    let mut rng = rng(2);
    let mut model = random_model(&mut rng, 2, 2, 1);
    model.hmms[1].states = model.hmms[0].states.clone();
    model.hmms[1].self_loop = model.hmms[0].self_loop.clone();
    model.token_lm = vec![0.5, 0.5];
    let frames = Array2::from_shape_fn((9, 1), |(t, _)| (t as f64).sin());
    let out = decode(&[seq("u", "s", frames)], &model).unwrap();
    assert!(out.utterances[0].segments.iter().all(|s| s.token == 0));
}

#[test]
fn sign_flips_give_boundaries_at_flips() {
    let frames = Array2::from_shape_fn((40, 1), |(t, _)| if (t / 10) % 2 == 0 { 1.0 } else { -1.0 });
    let g = |m: f64| Gaussian::new(vec![m], vec![0.01]);
    let model = TokenSetModel {
        psi: HyperParams::new(2, 2).unwrap(),
        hmms: vec![
            TokenHmm { token_id: 0, states: vec![g(1.0), g(1.0)], self_loop: vec![0.9, 0.9] },
            TokenHmm { token_id: 1, states: vec![g(-1.0), g(-1.0)], self_loop: vec![0.9, 0.9] },
        ],
        token_lm: vec![0.5, 0.5],
        feature_dim: 1,
        lm_weight: 1.0,
    };
    let out = decode(&[seq("u", "s", frames)], &model).unwrap();
    let cuts: Vec<usize> = out.utterances[0].segments[1..].iter().map(|s| s.start).collect();
    assert_eq!(cuts.len(), 3);
    for (c, want) in cuts.iter().zip([10, 20, 30]) {
        assert!(c.abs_diff(want) <= 1, "{cuts:?}");
    }
}

#[test]
fn joint_loglik_matches_closed_form() {
    let mut rng = rng(5);
    let model = random_model(&mut rng, 3, 2, 2);
    let frames = Array2::from_shape_fn((11, 2), |_| rng.random_range(-2.0..2.0));
    let f = seq("u", "s", frames);
    let labeling = TokenLabeling {
        utterances: vec![UtteranceLabels {
            utterance_id: "u".into(),
            segments: vec![
                Segment { token: 1, start: 0, end: 5 },
                Segment { token: 0, start: 5, end: 11 },
            ],
        }],
    };
    let r = rows(&f);
    let want = brute_segment_score(&model.hmms[1], &r[0..5])
        + model.token_lm[1].ln()
        + brute_segment_score(&model.hmms[0], &r[5..11])
        + model.token_lm[0].ln();
    let got = joint_loglik(&[f], &model, &labeling).unwrap();
    assert!((got - want).abs() < 1e-9);
}

#[test]
fn kmeans_matches_exhaustive_partition() {
    for seed in 0..10u64 {
        let mut rng = rng(100 + seed);
        let count = rng.random_range(4..=12);
        let centers = [[0.0, 0.0], [6.0, 6.0]];
        let points: Vec<Vec<f64>> = (0..count)
            .map(|i| {
                let c = centers[i % 2];
                vec![c[0] + rng.random_range(-0.5..0.5), c[1] + rng.random_range(-0.5..0.5)]
            })
            .collect();
        let sse = |assign: &[usize]| -> f64 {
            let mut total = 0.0;
            for g in 0..2 {
                let members: Vec<&Vec<f64>> = points.iter().zip(assign).filter(|(_, &a)| a == g).map(|(p, _)| p).collect();
                if members.is_empty() {
                    return f64::INFINITY;
                }
                for d in 0..2 {
                    let mean = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                    total += members.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>();
                }
            }
            total
        };
        let best = (0..1u32 << count)
            .map(|mask| (0..count).map(|i| ((mask >> i) & 1) as usize).collect::<Vec<_>>())
            .min_by(|a, b| sse(a).partial_cmp(&sse(b)).unwrap())
            .unwrap();
        let got = kmeans(&points, 2, seed);
        let same = |a: &[usize], b: &[usize]| a == b || a.iter().zip(b).all(|(x, y)| *x != *y);
        assert!(same(&got, &best), "seed {seed}: {got:?} vs {best:?}");
    }
}

#[test]
fn initialization_arithmetic() {
    let frames = Array2::from_shape_fn((30, 1), |(t, _)| if t < 10 { 0.0 } else { 5.0 + t as f64 });
    let l = initialize_labels(&[seq("u", "s", frames)], HyperParams::new(3, 2).unwrap(), 10, 0).unwrap();
    let spans: Vec<(usize, usize)> = l.utterances[0].segments.iter().map(|s| (s.start, s.end)).collect();
    assert_eq!(spans, vec![(0, 10), (10, 20), (20, 30)]);
    assert!(l.utterances[0].segments.iter().all(|s| s.token < 2));

    let short = seq("v", "s", Array2::zeros((2, 1)));
    let long = seq("w", "s", Array2::from_shape_fn((20, 1), |(t, _)| t as f64));
    let l = initialize_labels(&[short, long], HyperParams::new(3, 2).unwrap(), 10, 0).unwrap();
    assert_eq!(l.utterances[0].segments.len(), 1);
    assert_eq!(l.utterances[0].segments[0].end, 2);

    let tiny = seq("x", "s", Array2::zeros((12, 1)));
    assert!(initialize_labels(&[tiny], HyperParams::new(3, 4).unwrap(), 10, 0).is_err());
}

fn constant_corpus() -> (Vec<FeatureSequence>, TokenLabeling) {
    let frames = Array2::from_shape_fn((16, 2), |(t, d)| if t < 12 { 1.5 + d as f64 } else { -1.0 + t as f64 * 0.3 });
    let f = seq("u", "s", frames);
    let labeling = TokenLabeling {
        utterances: vec![UtteranceLabels {
            utterance_id: "u".into(),
            segments: vec![
                Segment { token: 0, start: 0, end: 4 },
                Segment { token: 0, start: 4, end: 8 },
                Segment { token: 0, start: 8, end: 12 },
                Segment { token: 1, start: 12, end: 16 },
            ],
        }],
    };
    (vec![f], labeling)
}

#[test]
fn constant_token_gets_floored_variance_and_smoothed_lm() {
    let (corpus, labeling) = constant_corpus();
    let psi = HyperParams::new(2, 2).unwrap();
    let (model, report) = estimate_models(&corpus, &labeling, psi, None, &EstimateOptions::default()).unwrap();
    assert_eq!(report.rescued, 0);
    let all: Vec<f64> = (0..16).flat_map(|t| corpus[0].frame(t).to_vec()).collect();
    for (s, g) in model.hmms[0].states.iter().enumerate() {
        assert_eq!(g.mean(), &[1.5, 2.5], "state {s}");
        for d in 0..2 {
            let col: Vec<f64> = all.iter().skip(d).step_by(2).copied().collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!((g.var()[d] - 1e-3 * var).abs() < 1e-12);
        }
    }
    assert!((model.token_lm[0] - 4.0 / 6.0).abs() < 1e-12);
    assert!((model.token_lm[1] - 2.0 / 6.0).abs() < 1e-12);
    assert!((model.token_lm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn reestimation_never_lowers_likelihood() {
    let c = generate_corpus(&SynthConfig { num_utterances: 5, seed: 3, ..SynthConfig::default() }).unwrap();
    let psi = HyperParams::new(3, 4).unwrap();
    let init = initialize_labels(&c.features, psi, 10, 0).unwrap();
    let opts = EstimateOptions::default();
    let (first, _) = estimate_models(&c.features, &init, psi, None, &opts).unwrap();
    let labeling = decode(&c.features, &first).unwrap();
    let before = joint_loglik(&c.features, &first, &labeling).unwrap();
    let (second, _) = estimate_models(&c.features, &labeling, psi, Some(&first), &opts).unwrap();
    let after = joint_loglik(&c.features, &second, &labeling).unwrap();
    assert!(after >= before - 1e-9, "{after} < {before}");
}

#[test]
fn zero_iterations_return_initial_labels() {
    let c = generate_corpus(&SynthConfig { num_utterances: 6, seed: 1, ..SynthConfig::default() }).unwrap();
    let psi = HyperParams::new(3, 4).unwrap();
    let opts = TrainOptions { max_iters: 0, ..TrainOptions::default() };
    let r = train_layer(&c.features, psi, &opts, None).unwrap();
    let init = initialize_labels(&c.features, psi, default_seg_len(psi), matdnn::seed::derive(0, &[0])).unwrap();
    assert_eq!(r.labeling, init);
    assert_eq!(r.report.iterations, 0);
    assert_eq!(r.report.loglik_trace.len(), 1);
}

#[test]
fn training_is_deterministic_and_valid() {
    let c = generate_corpus(&SynthConfig { num_utterances: 10, seed: 4, ..SynthConfig::default() }).unwrap();
    let psi = HyperParams::new(5, 8).unwrap();
    let opts = TrainOptions { seed: 9, ..TrainOptions::default() };
    let a = train_layer(&c.features, psi, &opts, None).unwrap();
    let b = train_layer(&c.features, psi, &opts, None).unwrap();
    assert_eq!(a.labeling, b.labeling);
    assert_eq!(a.model, b.model);
    a.labeling.validate(&c.features, psi).unwrap();
    assert_eq!(decode(&c.features, &a.model).unwrap(), decode(&c.features, &a.model).unwrap());
    for w in a.report.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0));
    }
}
