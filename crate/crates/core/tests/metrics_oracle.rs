use dynscale_core::metrics::ConfusionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Brute {
    oa: f64,
    aa: f64,
    kappa: f64,
    f1: Vec<Option<f64>>,
}

/// Recomputes every metric by scanning pixels, never forming a matrix.
fn brute(labels: &[u8], preds: &[u8], void: &[bool], classes: usize) -> Brute {
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| !void[i]).collect();
    let n = idx.len() as f64;
    let correct = idx.iter().filter(|&&i| labels[i] == preds[i]).count() as f64;
    let count = |f: &dyn Fn(usize) -> bool| idx.iter().filter(|&&i| f(i)).count() as f64;
    let mut recalls = Vec::new();
    let mut p_e = 0.0;
    let mut f1 = Vec::new();
    for c in 0..classes as u8 {
        let in_ref = count(&|i| labels[i] == c);
        let in_pred = count(&|i| preds[i] == c);
        let tp = count(&|i| labels[i] == c && preds[i] == c);
        if in_ref > 0.0 {
            recalls.push(tp / in_ref);
        }
        p_e += (in_ref / n) * (in_pred / n);
        let (fp, fn_) = (in_pred - tp, in_ref - tp);
        f1.push(if in_ref + in_pred == 0.0 {
            None
        } else {
            Some(2.0 * tp / (2.0 * tp + fp + fn_))
        });
    }
    let oa = correct / n;
    Brute {
        oa,
        aa: recalls.iter().sum::<f64>() / recalls.len() as f64,
        kappa: (oa - p_e) / (1.0 - p_e),
        f1,
    }
}

#[test]
fn metrics_match_brute_force_on_200_map_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..200 {
        let classes = rng.random_range(2..=6);
        let n = rng.random_range(50..400);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes) as u8).collect();
        let preds: Vec<u8> = labels
            .iter()
            .map(|&l| if rng.random_bool(0.6) { l } else { rng.random_range(0..classes) as u8 })
            .collect();
        let void: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let mut m = ConfusionMatrix::new(classes);
        m.accumulate(&labels, &preds, &void).unwrap();
        let b = brute(&labels, &preds, &void, classes);
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() <= 1e-12;
        assert!(close(m.overall_accuracy(), b.oa), "case {case}");
        assert!(close(m.average_accuracy(), b.aa), "case {case}");
        assert!(close(m.kappa(), b.kappa), "case {case}");
        for (got, want) in m.f1_per_class().iter().zip(&b.f1) {
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-12, "case {case}"),
                (None, None) => {}
                _ => panic!("case {case}: presence differs"),
            }
        }
    }
}

#[test]
fn worked_kappa_example() {
    // p_o = 80/100, p_e = (40*40 + 60*60) / 100^2 = 0.52, kappa = 0.28 / 0.48
    let m = ConfusionMatrix::from_rows(&[vec![30, 10], vec![10, 50]]).unwrap();
    assert!((m.kappa().unwrap() - 0.5833).abs() < 1e-4);
    assert!((m.kappa().unwrap() - 0.28 / 0.48).abs() < 1e-12);
}

#[test]
fn random_predictions_give_near_zero_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mut m = ConfusionMatrix::new(2);
    m.accumulate(&labels, &preds, &vec![false; n]).unwrap();
    assert!(m.kappa().unwrap().abs() < 0.05);
}

#[test]
fn perfect_predictions() {
    let labels = vec![0u8, 1, 2, 1, 0];
    let mut m = ConfusionMatrix::new(3);
    m.accumulate(&labels, &labels, &[false; 5]).unwrap();
    assert_eq!(m.overall_accuracy(), Some(1.0));
    assert_eq!(m.kappa(), Some(1.0));
    assert_eq!(m.mean_f1(), Some(1.0));
}
