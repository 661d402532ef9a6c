//! Link prediction on a tiny graph where `r2` is the composition `r1 ∘ r1`.

use vulnkg::kg::{IndexedSplits, SplitSet};
use vulnkg::tucker::{evaluate_ranking, predict_tail, train, RankingMode, TrainConfig};
use vulnkg::Triple;

struct Toy {
    splits: IndexedSplits,
    held_out: Vec<Triple>,
}

/// Four groups of three leaves, a hub and a target. `r1` links each leaf to
/// its hub and each hub to its target; `r2` links leaves straight to the
/// target. One leaf per group has its `r2` triple held out.
fn toy_graph() -> Toy {
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for g in 0..4 {
        let hub = format!("hub{g}");
        let target = format!("target{g}");
        train.push(Triple::new(&hub, "r1", &target));
        for l in 0..3 {
            let leaf = format!("leaf{g}{l}");
            train.push(Triple::new(&leaf, "r1", &hub));
            let composed = Triple::new(&leaf, "r2", &target);
            if l == 0 {
                held_out.push(composed);
            } else {
                train.push(composed);
            }
        }
    }
    let splits = SplitSet {
        train,
        valid: Vec::new(),
        test: held_out.clone(),
    }
    .augment_reverse()
    .unwrap();
    Toy {
        splits: IndexedSplits::from_splits(&splits),
        held_out,
    }
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        lr: 0.01,
        batch_size: 8,
        edim: 20,
        rdim: 20,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn composed_triples_are_recovered() {
    let toy = toy_graph();
    assert_eq!(toy.splits.entities.len(), 20);
    let started = std::time::Instant::now();
    let outcome = train(&toy.splits, &toy_config()).unwrap();
    assert!(started.elapsed().as_secs() < 120);

    let held_out: Vec<_> = toy
        .splits
        .test
        .iter()
        .copied()
        .filter(|t| toy.splits.relations.name(t.relation) == Some("r2"))
        .collect();
    assert_eq!(held_out.len(), 4);
    let report = evaluate_ranking(
        &outcome.params,
        &held_out,
        &toy.splits.all_known(),
        RankingMode::Filtered,
        &[],
    )
    .unwrap();
    assert!(report.hits(1) >= 0.9, "{report:?}");

    for t in &toy.held_out {
        let pred = predict_tail(&outcome.params, &toy.splits, &t.head, "r2", 1, RankingMode::Raw).unwrap();
        assert_eq!(pred.candidates[0].0, t.tail);
    }
}

#[test]
fn early_loss_trend_is_downward() {
    let toy = toy_graph();
    let config = TrainConfig {
        epochs: 5,
        ..toy_config()
    };
    let losses = train(&toy.splits, &config).unwrap().losses;
    assert!(losses.iter().all(|l| l.is_finite()));
    let upticks = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(upticks <= 1, "{losses:?}");
}
