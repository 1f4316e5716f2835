mod common;

use std::collections::BTreeMap;

use matdnn::granularity::{layer_seed, train_grid, LayerGrid};
use matdnn::reinforcement::*;
use matdnn::synth::{generate_corpus, SynthConfig};
use matdnn::tokenizer::{train_layer, HyperParams, Segment, TokenLabeling, TrainOptions, UtteranceLabels};
use proptest::prelude::*;

fn bf(id: &str, b: Vec<bool>) -> BoundaryFunction {
    BoundaryFunction { utterance_id: id.into(), b }
}

fn random_layers() -> impl Strategy<Value = Vec<(usize, Vec<bool>)>> {
    (1usize..30).prop_flat_map(|junctures| {
        prop::collection::vec((1usize..10, prop::collection::vec(any::<bool>(), junctures)), 1..6)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fusion_is_weighted_average(layers in random_layers()) {
        let input: Vec<LayerBoundaries> = layers
            .iter()
            .enumerate()
            .map(|(i, (m, b))| LayerBoundaries {
                psi: HyperParams { m: *m, n: 2 + i },
                functions: vec![bf("u", b.clone())],
            })
            .collect();
        let fused = fuse_boundaries(&input).unwrap();
        let m_total: usize = layers.iter().map(|(m, _)| m).sum();
        let values = &fused[0].values;
        for j in 0..values.len() {
            let want: f64 = layers.iter().filter(|(_, b)| b[j]).map(|(m, _)| *m as f64 / m_total as f64).sum();
            prop_assert!((values[j] - want).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&values[j]));
            let all = layers.iter().all(|(_, b)| b[j]);
            let none = layers.iter().all(|(_, b)| !b[j]);
            prop_assert_eq!(values[j] == 1.0, all);
            prop_assert_eq!(values[j] == 0.0, none);
        }
        let peaks = pick_peaks(&fused[0], &PeakOptions::default());
        for w in peaks.windows(2) {
            prop_assert!(w[1] - w[0] >= PeakOptions::default().min_gap);
        }
        for &p in &peaks {
            prop_assert!(p >= 1 && p <= values.len());
            prop_assert!(values[p - 1] > 0.0, "peak at an unmarked juncture {}", p);
        }
        let spans = segments_from_peaks(&peaks, fused[0].num_frames());
        prop_assert_eq!(spans.first().unwrap().0, 0);
        prop_assert_eq!(spans.last().unwrap().1, fused[0].num_frames());
        for w in spans.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn separated_unanimous_boundaries_survive(
        gaps in prop::collection::vec(3usize..8, 0..6),
        tail in 1usize..6,
        layers in 1usize..5,
    ) {
        let mut marks = Vec::new();
        let mut j = 0;
        for g in &gaps {
            j += g;
            marks.push(j);
        }
        let t_len = j + tail + 1;
        let mut b = vec![false; t_len - 1];
        for &p in &marks {
            b[p - 1] = true;
        }
        let input: Vec<LayerBoundaries> = (0..layers)
            .map(|i| LayerBoundaries { psi: HyperParams { m: 3 + 2 * i, n: 4 }, functions: vec![bf("u", b.clone())] })
            .collect();
        let fused = fuse_boundaries(&input).unwrap();
        prop_assert_eq!(pick_peaks(&fused[0], &PeakOptions::default()), marks);
    }
}

#[test]
fn fusion_and_peak_examples() {
    let layers = vec![
        LayerBoundaries { psi: HyperParams { m: 3, n: 4 }, functions: vec![bf("u", vec![false, false, true])] },
        LayerBoundaries { psi: HyperParams { m: 9, n: 4 }, functions: vec![bf("u", vec![true, false, true])] },
    ];
    let f = fuse_boundaries(&layers).unwrap();
    assert_eq!(f[0].values, vec![0.75, 0.0, 1.0]);

    let mut values = vec![0.0; 12];
    values[4] = 1.0;
    let spike = FusedBoundary { utterance_id: "u".into(), values };
    assert_eq!(pick_peaks(&spike, &PeakOptions::default()), vec![5]);

    let low = FusedBoundary { utterance_id: "u".into(), values: vec![0.3; 10] };
    let none = pick_peaks(&low, &PeakOptions::default());
    assert!(none.is_empty());
    assert_eq!(segments_from_peaks(&none, 11), vec![(0, 11)]);

    let mut twin = vec![0.0; 12];
    twin[4] = 1.0;
    twin[5] = 1.0;
    let twin = FusedBoundary { utterance_id: "u".into(), values: twin };
    assert_eq!(pick_peaks(&twin, &PeakOptions::default()), vec![5]);
}

fn random_labeling(rng: &mut impl rand::Rng, lens: &[usize], m: usize, n: usize) -> TokenLabeling {
    TokenLabeling {
        utterances: lens
            .iter()
            .enumerate()
            .map(|(u, &t_len)| {
                let mut segments = Vec::new();
                let mut start = 0;
                while start < t_len {
                    let mut end = (start + rng.random_range(m..=m + 4)).min(t_len);
                    if t_len - end < m {
                        end = t_len;
                    }
                    segments.push(Segment { token: rng.random_range(0..n), start, end });
                    start = end;
                }
                UtteranceLabels { utterance_id: format!("u{u}"), segments }
            })
            .collect(),
    }
}

#[test]
fn documents_match_interval_intersection() {
    use rand::Rng;
    let mut rng = common::rng(21);
    for _ in 0..30 {
        let lens: Vec<usize> = (0..3).map(|_| rng.random_range(6..40)).collect();
        let psis = [HyperParams { m: 3, n: 4 }, HyperParams { m: 3, n: 6 }, HyperParams { m: 5, n: 4 }];
        let labelings: Vec<TokenLabeling> = psis.iter().map(|p| random_labeling(&mut rng, &lens, p.m, p.n)).collect();
        let layers: Vec<(HyperParams, &TokenLabeling)> = psis.iter().copied().zip(&labelings).collect();
        let segments: Vec<UtteranceSegments> = lens
            .iter()
            .enumerate()
            .map(|(u, &t_len)| {
                let mut cuts: Vec<usize> = (1..t_len).filter(|_| rng.random_bool(0.15)).collect();
                cuts.dedup();
                UtteranceSegments { utterance_id: format!("u{u}"), spans: segments_from_peaks(&cuts, t_len) }
            })
            .collect();
        let docs = build_documents(&segments, &layers).unwrap();
        let mut expected = Vec::new();
        for (u, seg) in segments.iter().enumerate() {
            for &(s, e) in &seg.spans {
                let mut words: BTreeMap<usize, u32> = BTreeMap::new();
                let mut offset = 0;
                for (psi, l) in &layers {
                    for t in &l.utterances[u].segments {
                        if t.start.max(s) < t.end.min(e) {
                            *words.entry(offset + t.token).or_default() += 1;
                        }
                    }
                    offset += psi.n;
                }
                expected.push((s, e, words));
            }
        }
        let got: Vec<(usize, usize, BTreeMap<usize, u32>)> = docs.into_iter().map(|d| (d.start, d.end, d.words)).collect();
        assert_eq!(got, expected);
        assert_eq!(vocab_size(&layers), 14);
    }
}

#[test]
fn reinforce_sweep_on_synthetic_grid() {
    let c = generate_corpus(&SynthConfig { num_utterances: 20, seed: 2, ..SynthConfig::default() }).unwrap();
    let grid = LayerGrid::new(vec![3, 5], vec![4, 8]).unwrap();
    let set = train_grid(&c.features, &grid, &TrainOptions::default(), None).unwrap();
    for (psi, layer) in &set.layers {
        let functions = layer_boundaries(&layer.labeling);
        for (f, u) in functions.iter().zip(&layer.labeling.utterances) {
            assert_eq!(f.b.iter().filter(|&&x| x).count(), u.segments.len() - 1, "{psi}");
        }
    }
    let out = reinforce(&set, &c.features, &grid, &ReinforceOptions::default()).unwrap();
    assert_eq!(out.lda.len(), 2);
    for psi in grid.pairs() {
        out.initial[&psi].validate(&c.features, psi).unwrap();
    }
    let again = reinforce(&set, &c.features, &grid, &ReinforceOptions::default()).unwrap();
    assert_eq!(out.initial, again.initial);
    let retrained = train_grid(&c.features, &grid, &TrainOptions::default(), Some(&out.initial)).unwrap();
    for (psi, layer) in &retrained.layers {
        layer.labeling.validate(&c.features, *psi).unwrap();
    }
}

#[test]
fn single_layer_reinforcement_keeps_segmentation() {
    let c = generate_corpus(&SynthConfig { num_utterances: 10, seed: 6, ..SynthConfig::default() }).unwrap();
    let grid = LayerGrid::new(vec![3], vec![4]).unwrap();
    let set = train_grid(&c.features, &grid, &TrainOptions::default(), None).unwrap();
    let out = reinforce(&set, &c.features, &grid, &ReinforceOptions::default()).unwrap();
    let old = &set.layers[&HyperParams { m: 3, n: 4 }].labeling;
    for (seg, u) in out.segments.iter().zip(&old.utterances) {
        let spans: Vec<(usize, usize)> = u.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(seg.spans, spans, "{}", u.utterance_id);
    }
}

#[test]
fn grid_layers_are_independent() {
    let c = generate_corpus(&SynthConfig { num_utterances: 12, seed: 8, ..SynthConfig::default() }).unwrap();
    let opts = TrainOptions { seed: 4, ..TrainOptions::default() };
    let grid = LayerGrid::new(vec![3, 5], vec![4, 8]).unwrap();
    let set = train_grid(&c.features, &grid, &opts, None).unwrap();
    let psi = HyperParams { m: 5, n: 4 };
    let alone = train_layer(&c.features, psi, &TrainOptions { seed: layer_seed(4, psi), ..opts }, None).unwrap();
    assert_eq!(set.layers[&psi].labeling, alone.labeling);
    assert_eq!(set.layers[&psi].model, alone.model);

    let single = LayerGrid::new(vec![5], vec![4]).unwrap();
    let one = train_grid(&c.features, &single, &opts, None).unwrap();
    assert_eq!(one.layers.len(), 1);
    assert_eq!(one.layers[&psi].labeling, alone.labeling);
}

#[test]
fn default_grid_is_sixteen_layers() {
    assert_eq!(LayerGrid::default().len(), 16);
}
