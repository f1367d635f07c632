//! Mittag-Leffler values against a frozen 40-digit reference table
//! (`tests/data/ml_reference.csv`, produced by `gen_ml_reference.py`).

use fracinv::mlf::{ml_eval_with, MlOptions, MlQuery};

struct Row {
    alpha: f64,
    beta: f64,
    x: f64,
    value: f64,
}

fn rows() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ml_reference.csv");
    let mut rdr = csv::Reader::from_path(path).expect("reference table");
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let f = |i: usize| r[i].parse::<f64>().unwrap();
            Row { alpha: f(0), beta: f(1), x: f(2), value: f(3) }
        })
        .collect()
}

#[test]
fn matches_reference_table() {
    let opts = MlOptions::default();
    let mut failures = Vec::new();
    let table = rows();
    assert!(table.len() > 400);
    for row in &table {
        let q = MlQuery::new(row.alpha, row.beta, -row.x).unwrap();
        let got = ml_eval_with(&q, &opts).unwrap();
        let err = (got.value - row.value).abs();
        let ok = if row.x <= 50.0 { err <= 1e-12 } else { err <= 1e-10 * row.value.abs() };
        if !ok {
            failures.push(format!(
                "alpha={} beta={} x={} want={:e} got={:e} ({}) err={:e}",
                row.alpha, row.beta, row.x, row.value, got.value, got.branch, err
            ));
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}
