use dynscale_core::scheduler::{PatchSizeDistribution, ScoreMode, ScoreTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn uniform_fixed_two_sizes_split_evenly() {
    let d = PatchSizeDistribution::uniform_fixed(&[25, 50]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 10_000;
    let hits = (0..n).filter(|_| d.sample(&mut rng) == 25).count() as f64 / n as f64;
    assert!((0.47..=0.53).contains(&hits), "{hits}");
    assert!((0.47..=0.53).contains(&(1.0 - hits)));
}

#[test]
fn multinomial_emphasized_sizes_drawn_twice_as_often() {
    let d = PatchSizeDistribution::multinomial(45, 75, &[55, 65]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for _ in 0..n {
        *counts.entry(d.sample(&mut rng)).or_default() += 1;
    }
    let emph = (counts[&55] + counts[&65]) as f64 / 2.0;
    let others: Vec<f64> = counts
        .iter()
        .filter(|(s, _)| **s != 55 && **s != 65)
        .map(|(_, c)| *c as f64)
        .collect();
    let ratio = emph / (others.iter().sum::<f64>() / others.len() as f64);
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}

#[test]
fn uniform_range_covers_every_integer() {
    let d = PatchSizeDistribution::uniform_range(7, 12).unwrap();
    assert_eq!(d.candidates(), &[7, 8, 9, 10, 11, 12]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seen: std::collections::BTreeSet<_> = (0..2000).map(|_| d.sample(&mut rng)).collect();
    assert_eq!(seen.len(), 6);
}

/// Batch accuracies drawn from N(mu_size, 0.05) with a 0.05 gap at the top.
fn simulated_run(seed: u64) -> usize {
    let sizes = [25, 45, 65, 85];
    let means = [0.70, 0.78, 0.83, 0.78];
    let d = PatchSizeDistribution::uniform_fixed(&sizes).unwrap();
    let mut table = ScoreTable::new(ScoreMode::Accuracy, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let s = d.sample(&mut rng);
        let mu = means[sizes.iter().position(|&x| x == s).unwrap()];
        let noise: f64 = rng.sample(rand_distr::StandardNormal);
        table.update(s, mu + 0.05 * noise).unwrap();
    }
    table.best_size().unwrap()
}

#[test]
fn best_size_recovers_true_argmax() {
    let hits = (0..100).filter(|&s| simulated_run(s) == 65).count();
    assert!(hits >= 99, "{hits}/100");
}

#[test]
fn best_size_invariant_under_positive_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let sizes = [9, 17, 33];
        let mut a = ScoreTable::new(ScoreMode::Accuracy, &sizes);
        let mut b = ScoreTable::new(ScoreMode::Accuracy, &sizes);
        let scale = rng.random_range(0.01..100.0);
        for _ in 0..50 {
            let s = sizes[rng.random_range(0..3)];
            let v: f64 = rng.random();
            a.update(s, v).unwrap();
            b.update(s, v * scale).unwrap();
        }
        assert_eq!(a.best_size().unwrap(), b.best_size().unwrap());
    }
}

#[test]
fn loss_mode_prefers_lowest_mean() {
    let mut t = ScoreTable::new(ScoreMode::Loss, &[8, 16]);
    t.update(8, 0.4).unwrap();
    t.update(16, 0.2).unwrap();
    assert_eq!(t.best_size().unwrap(), 16);
}
