//! Acceptance criterion for the command-line surface: table shape, trace
//! schema, and result-file round-trip fidelity.

use std::fs;
use std::path::Path;
use std::process::Command;

use bestsubset::{parse_libsvm, residual, Dataset, EvalCounters, LossSpec, Model, SparseIterate, Task};
use serde::Deserialize;

const TRAIN: &str = "\
1.5 1:0.9 2:-0.3 4:1.1
-0.2 1:0.2 3:0.7 5:-0.4
2.4 2:1.3 4:0.8
0.3 1:-0.5 3:0.2 5:1.0
-1.1 2:-0.9 3:0.4 4:-0.2
1.9 1:1.2 4:0.9 5:0.3
-0.7 2:0.5 3:-1.1
0.8 1:0.4 2:0.2 5:0.6
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bestsubset"))
}

#[derive(Deserialize)]
struct ResultFile {
    n: usize,
    s: usize,
    support: Vec<usize>,
    values: Vec<f64>,
    f: f64,
    residual: f64,
    iterations: u64,
    ge: u64,
    cg: u64,
    status: String,
}

fn write_train(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("train.txt");
    fs::write(&path, TRAIN).unwrap();
    path
}

#[test]
fn criterion_10_cli_conformance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_train(dir.path());

    // (a) bench over three algorithms: header plus exactly three rows
    let table = dir.path().join("bench.csv");
    let status = bin()
        .args([
            "bench",
            "--data",
            data.to_str().unwrap(),
            "--loss",
            "ls",
            "--s",
            "2",
            "--alg",
            "pg,apg,apg+",
            "--table",
            table.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dataset,algorithm,s,cpu_seconds,ge,cg,metric,converged");
    assert_eq!(lines.len(), 4, "expected 3 data rows, got {}", lines.len() - 1);
    let mut ge = std::collections::HashMap::new();
    for (row, alg) in lines[1..].iter().zip(["pg", "apg", "apg+"]) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[0], "train");
        assert_eq!(fields[1], alg);
        assert_eq!(fields[2], "2");
        fields[3].parse::<f64>().unwrap();
        ge.insert(alg, fields[4].parse::<u64>().unwrap());
        fields[5].parse::<u64>().unwrap();
        fields[6].parse::<f64>().unwrap();
        fields[7].parse::<bool>().unwrap();
    }
    assert!(ge["apg"] < ge["pg"], "extrapolation should reduce gradient evaluations");

    // (b) solve with trace and result outputs; validate the trace schema
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("result.json");
    let status = bin()
        .args([
            "solve",
            "--data",
            data.to_str().unwrap(),
            "--loss",
            "ls",
            "--s",
            "2",
            "--alg",
            "apg+",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "solve should converge");

    let text = fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,step_type,f,residual,t_k,support_changed,ge_cum,cg_cum");
    let mut prev_k: Option<u64> = None;
    let mut prev_ge = 0u64;
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8);
        let k = fields[0].parse::<u64>().unwrap();
        if let Some(p) = prev_k {
            assert!(k > p, "k must be strictly increasing");
        }
        prev_k = Some(k);
        assert!(["pg", "extrapolated", "newton", "newton_failed"].contains(&fields[1]));
        fields[2].parse::<f64>().unwrap();
        fields[3].parse::<f64>().unwrap();
        fields[4].parse::<f64>().unwrap();
        fields[5].parse::<bool>().unwrap();
        let ge = fields[6].parse::<u64>().unwrap();
        assert_eq!(ge, prev_ge + 1, "ge_cum must increment by exactly 1 per iteration");
        prev_ge = ge;
        fields[7].parse::<u64>().unwrap();
    }

    // (c) result-file round-trip: rebuilding the iterate and re-evaluating
    // on the same data reproduces the stored objective and residual
    let parsed: ResultFile = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(parsed.status, "converged");
    assert!(parsed.residual < 1e-6);
    assert_eq!(parsed.ge, parsed.iterations);
    assert!(parsed.cg < 1_000);

    let raw = parse_libsvm(std::io::Cursor::new(TRAIN), Task::Regression, 0).unwrap();
    let model = Model::new(
        Dataset::new(raw.x, raw.y, Task::Regression).unwrap(),
        LossSpec::LeastSquares,
    )
    .unwrap();
    let w = SparseIterate::new(parsed.support.clone(), parsed.values.clone(), parsed.n);
    let state = model.make_state(w).unwrap();
    assert!(
        (state.objective() - parsed.f).abs() <= 1e-10 * (1.0 + parsed.f.abs()),
        "objective round-trip: {} vs {}",
        state.objective(),
        parsed.f
    );
    let lambda = 0.999 / model.lipschitz_estimate().unwrap();
    let mut c = EvalCounters::default();
    let res = residual(&model, &state, lambda, parsed.s, &mut c);
    assert!(
        (res - parsed.residual).abs() <= 1e-10 * (1.0 + parsed.residual.abs()),
        "residual round-trip: {res} vs {}",
        parsed.residual
    );

    println!("criterion 10 (bench table shape, trace schema, result round-trip): PASS");
}
