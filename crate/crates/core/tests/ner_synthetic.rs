use vulnkg::labeling::{label_record, Gazetteer};
use vulnkg::ner::{evaluate_ner, predict, train_two_stage, IobSource, TrainOptions};
use vulnkg::synth::{generate_records, SynthConfig};

#[test]
fn ner_generalizes_to_held_out_records() {
    let records = generate_records(&SynthConfig { records: 5000, ..SynthConfig::default() });
    let gaz = Gazetteer::starter();
    let labeled: Vec<_> = records.iter().map(|r| label_record(r, &gaz)).collect();
    let (train, held_out) = labeled.split_at(4000);
    let t0 = std::time::Instant::now();
    let models = train_two_stage(train, &TrainOptions::default(), IobSource::Predicted).unwrap();
    let pred: Vec<_> = held_out
        .iter()
        .map(|s| predict(&models, &s.iter().map(|t| t.token.clone()).collect::<Vec<_>>()))
        .collect();
    let report = evaluate_ner(&pred, held_out).unwrap();
    eprintln!("trained in {:?}: {:#?}", t0.elapsed(), report.micro);
    for (k, v) in &report.per_class {
        eprintln!("{k}: p {:.3} r {:.3} f {:.3}", v.precision, v.recall, v.f1);
    }
    assert!(report.micro.f1 >= 0.80, "micro F1 {}", report.micro.f1);
}
