use std::collections::BTreeMap;

use matdnn::eval::{abx_error, abx_items, AbxMode, AbxOptions};
use matdnn::synth::{generate_corpus, SynthConfig};
use ndarray::Array1;

#[test]
fn phone_clusters_are_separated() {
    let c = generate_corpus(&SynthConfig::default()).unwrap();
    let noise = c.config.phone_noise_std;
    let mut sums: BTreeMap<(String, String), (Array1<f64>, usize)> = BTreeMap::new();
    for (f, u) in c.features.iter().zip(&c.gold.utterances) {
        for p in &u.phones {
            let e = sums
                .entry((f.speaker_id.clone(), p.symbol.clone()))
                .or_insert_with(|| (Array1::zeros(f.dim()), 0));
            for t in p.start..p.end {
                e.0 += &ndarray::ArrayView1::from(f.frame(t));
                e.1 += 1;
            }
        }
    }
    let centroids: BTreeMap<_, Array1<f64>> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let mut dists = Vec::new();
    for ((s1, p1), c1) in &centroids {
        for ((s2, p2), c2) in &centroids {
            if s1 == s2 && p1 < p2 {
                dists.push((c1 - c2).mapv(|v| v * v).sum().sqrt());
            }
        }
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    assert!(mean >= 4.0 * noise, "{mean}");
}

#[test]
fn corpus_structure() {
    let c = generate_corpus(&SynthConfig { num_utterances: 12, ..SynthConfig::default() }).unwrap();
    for (f, u) in c.features.iter().zip(&c.gold.utterances) {
        assert_eq!(f.num_frames(), u.phones.iter().map(|p| p.len()).sum::<usize>());
        for w in &u.words {
            assert!(u.phones.iter().any(|p| p.start == w.start));
            assert!(u.phones.iter().any(|p| p.end == w.end));
        }
    }
    let again = generate_corpus(&SynthConfig { num_utterances: 12, ..SynthConfig::default() }).unwrap();
    assert_eq!(c.features, again.features);
    assert_eq!(c.gold, again.gold);
}

#[test]
fn speaker_offset_raises_across_speaker_error() {
    let errors: Vec<f64> = [0.8, 3.0, 6.0]
        .iter()
        .map(|&s| {
            let c = generate_corpus(&SynthConfig { speaker_offset_std: s, num_utterances: 40, seed: 1, ..SynthConfig::default() })
                .unwrap();
            abx_error(&c.features, &abx_items(&c.gold), AbxMode::Across, &AbxOptions::default()).unwrap().error
        })
        .collect();
    assert!(errors[0] < errors[1] && errors[1] < errors[2], "{errors:?}");
}
