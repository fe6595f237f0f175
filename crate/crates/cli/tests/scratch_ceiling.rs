use lvsm::eval::evaluate;
use lvsm::inference::BpOptions;
use lvsm::objectives::Backend;
use lvsm::simulation::{generate, GeneratorConfig, GibbsOptions};

#[test]
fn ceiling() {
    let mut accs = Vec::new();
    for t in 0..5u64 {
        let gen = GeneratorConfig::hidden_chain(20, t);
        let data = generate(&gen, &GibbsOptions::default()).unwrap();
        let backend = Backend::Bp(BpOptions { decode_polish: 0, ..BpOptions::default() });
        let rep = evaluate(&data.graph, &data.weights, &data.test, 1.0, &backend).unwrap();
        accs.push(rep.accuracy_pct);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    println!("bayes-ceiling accs {accs:?} mean {mean:.2}");
}
