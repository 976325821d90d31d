use std::path::Path;
use std::process::{Command, Output};

use lvmrs_cli::record::parse_records;
use lvmrs_cli::scorefile::{parse_binary, write_csv};
use tempfile::TempDir;

fn lvmrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvmrs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = lvmrs(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn code(args: &[&str]) -> i32 {
    lvmrs(args).status.code().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write(path: &str, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn table_value(out: &[u8], key: &str) -> f64 {
    let text = String::from_utf8_lossy(out);
    text.lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.next().unwrap().parse().unwrap())
        })
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn linear_fixture(dir: &TempDir) -> (String, String, String) {
    let (w, x, y) = (p(dir, "w.csv"), p(dir, "x.csv"), p(dir, "y.txt"));
    write(&w, "1.0,0.2\n-0.5,0.8\n0.1,-1.0\n");
    write(&x, "1.5,0.3\n-0.6,1.2\n0.2,-2.0\n0.05,0.0\n");
    write(&y, "0\n1\n2\n0\n");
    (w, x, y)
}

#[test]
fn csv_and_binary_scores_give_identical_certificates() {
    let dir = TempDir::new().unwrap();
    let (w, x, _) = linear_fixture(&dir);
    let bin = p(&dir, "s.bin");
    let csv = p(&dir, "s.csv");
    ok(&[
        "sample",
        "--model",
        "linear",
        "--weights",
        &w,
        "--inputs",
        &x,
        "--sigma",
        "0.5",
        "--n",
        "600",
        "--seed",
        "3",
        "--out",
        &bin,
    ]);
    ok(&[
        "sample",
        "--model",
        "linear",
        "--weights",
        &w,
        "--inputs",
        &x,
        "--sigma",
        "0.5",
        "--n",
        "600",
        "--seed",
        "3",
        "--format",
        "csv",
        "--out",
        &csv,
    ]);

    // the library writer agrees with the command
    let set = parse_binary(&std::fs::read(&bin).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_csv(&set, &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(&csv).unwrap());

    let common = ["--n0", "100", "--t-count", "12", "--seed", "3"];
    let from_bin = ok(&[&["certify", "--scores", &bin][..], &common].concat());
    let from_csv = ok(&[
        &["certify", "--scores", &csv, "--sigma", "0.5"][..],
        &common,
    ]
    .concat());
    assert_eq!(from_bin, from_csv);
    let recs = parse_records(from_bin.as_slice()).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs
        .iter()
        .all(|r| r.n0 == 100 && r.n == 500 && r.sigma == 0.5));
    assert!(recs.iter().any(|r| r.radius > 0.0));
}

#[test]
fn certify_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let (w, x, y) = linear_fixture(&dir);
    let (a, b, c) = (p(&dir, "a.jsonl"), p(&dir, "b.jsonl"), p(&dir, "c.jsonl"));
    let base = [
        "certify",
        "--model",
        "linear",
        "--weights",
        &w,
        "--inputs",
        &x,
        "--labels",
        &y,
        "--sigma",
        "0.25",
        "--n0",
        "200",
        "--n",
        "2000",
        "--seed",
        "11",
    ];
    ok(&[&base[..], &["--out", &a]].concat());
    ok(&[&base[..], &["--out", &b]].concat());
    ok(&[&base[..], &["--out", &c, "--jobs", "1"]].concat());
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert_eq!(first, std::fs::read(&c).unwrap());
    let recs = parse_records(first.as_slice()).unwrap();
    assert_eq!(
        recs.iter().map(|r| r.label).collect::<Vec<_>>(),
        vec![Some(0), Some(1), Some(2), Some(0)]
    );

    let mut reseeded = base.to_vec();
    *reseeded.last_mut().unwrap() = "12";
    let other = ok(&reseeded);
    assert_ne!(first, other);
}

#[test]
fn symmetric_threshold_input_certifies_nothing() {
    let out = ok(&[
        "certify",
        "--model",
        "threshold_1d",
        "--sigma",
        "1",
        "--n0",
        "1000",
        "--n",
        "100000",
    ]);
    let recs = parse_records(out.as_slice()).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(recs[0].radius < 0.05, "{:?}", recs[0]);

    let out = ok(&[
        "certify",
        "--model",
        "threshold_1d",
        "--sigma",
        "1",
        "--n0",
        "1000",
        "--n",
        "100000",
        "--x",
        "1.0",
    ]);
    let r = &parse_records(out.as_slice()).unwrap()[0];
    assert_eq!(r.prediction, lvmrs::Prediction::Class(1));
    assert!(r.radius > 0.5 && r.radius < 1.0, "{r:?}");
}

#[test]
fn hardmax_clopper_pearson_baseline() {
    let out = ok(&[
        "certify",
        "--model",
        "threshold",
        "--x",
        "0.8",
        "--sigma",
        "0.5",
        "--n0",
        "100",
        "--n",
        "5000",
        "--maps",
        "hardmax",
        "--method",
        "clopper-pearson",
    ]);
    let r = &parse_records(out.as_slice()).unwrap()[0];
    assert_eq!(r.map, lvmrs::MapKind::Hardmax);
    assert_eq!(r.temperature, 1.0);
    assert!(r.radius > 0.0 && r.radius < 0.8);
}

#[test]
fn bounds_command_examples() {
    let out = ok(&[
        "bounds",
        "--lipschitz",
        "5",
        "--mass",
        "3",
        "--optimal",
        "--case",
        "vector",
    ]);
    assert!((table_value(&out, "optimal_sigma") - 0.3385).abs() < 1e-4);
    assert!((table_value(&out, "bound") / 5.0 - 0.79).abs() < 0.005);

    let out = ok(&[
        "bounds",
        "--lipschitz",
        "1",
        "--mass",
        "1",
        "--sigma",
        "1e6",
    ]);
    assert!(table_value(&out, "bound") < 1e-6);

    let out = ok(&[
        "bounds",
        "--lipschitz",
        "5",
        "--mass",
        "3",
        "--sigma",
        "0.4",
        "--case",
        "elementwise",
    ]);
    assert!((table_value(&out, "bound") - 2.733).abs() < 1e-3);

    assert_eq!(code(&["bounds", "--lipschitz", "0", "--sigma", "1"]), 2);
    assert_eq!(code(&["bounds", "--lipschitz", "1", "--sigma=-1"]), 2);
}

fn record_line(id: u64, prediction: &str, radius: f64) -> String {
    format!(
        "{{\"input_id\":{id},\"prediction\":{prediction},\"radius\":{radius},\"rule\":\"R2\",\"map\":\"softmax\",\
         \"temperature\":0.5,\"mass\":1.0,\"alpha\":0.001,\"sigma\":0.25,\"n0\":100,\"n\":1000,\"seed\":0}}\n"
    )
}

fn curve(args: &[&str]) -> Vec<(f64, f64)> {
    let out = ok(&[&["curve"][..], args].concat());
    let mut r = csv::Reader::from_reader(out.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["epsilon", "certified_accuracy"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn curve_command_examples() {
    let dir = TempDir::new().unwrap();
    let (certs, labels) = (p(&dir, "c.jsonl"), p(&dir, "y.txt"));
    write(
        &certs,
        &(record_line(0, "1", 0.3) + &record_line(1, "0", 0.7) + &record_line(2, "2", 0.9)),
    );
    write(&labels, "1\n0\n0\n");
    let rows = curve(&[
        "--certificates",
        &certs,
        "--labels",
        &labels,
        "--eps",
        "0,0.5,0.8",
    ]);
    assert_eq!(rows, vec![(0.0, 2.0 / 3.0), (0.5, 1.0 / 3.0), (0.8, 0.0)]);

    write(
        &certs,
        &(record_line(0, "1", 0.3) + &record_line(1, "0", 0.7)),
    );
    write(&labels, "1\n0\n");
    assert_eq!(
        curve(&[
            "--certificates",
            &certs,
            "--labels",
            &labels,
            "--eps",
            "0.5"
        ]),
        vec![(0.5, 0.5)]
    );

    write(
        &certs,
        &(record_line(0, "\"abstain\"", 0.0) + &record_line(1, "\"abstain\"", 0.0)),
    );
    assert_eq!(
        curve(&[
            "--certificates",
            &certs,
            "--labels",
            &labels,
            "--eps",
            "0,0.1"
        ]),
        vec![(0.0, 0.0), (0.1, 0.0)]
    );

    // labels are required one way or another
    assert_eq!(code(&["curve", "--certificates", &certs, "--eps", "0"]), 2);
    write(&labels, "1\n");
    assert_eq!(
        code(&[
            "curve",
            "--certificates",
            &certs,
            "--labels",
            &labels,
            "--eps",
            "0"
        ]),
        3
    );
}

#[test]
fn curve_reads_labels_from_certify_output() {
    let dir = TempDir::new().unwrap();
    let (w, x, y) = linear_fixture(&dir);
    let certs = p(&dir, "c.jsonl");
    ok(&[
        "certify",
        "--model",
        "linear",
        "--weights",
        &w,
        "--inputs",
        &x,
        "--labels",
        &y,
        "--sigma",
        "0.25",
        "--n0",
        "100",
        "--n",
        "1000",
        "--out",
        &certs,
    ]);
    let embedded = curve(&["--certificates", &certs, "--eps", "0,0.1,0.2"]);
    let explicit = curve(&[
        "--certificates",
        &certs,
        "--labels",
        &y,
        "--eps",
        "0,0.1,0.2",
    ]);
    assert_eq!(embedded, explicit);
    assert!(embedded.windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn exit_codes_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    let bin = p(&dir, "s.bin");
    ok(&[
        "sample",
        "--model",
        "threshold",
        "--sigma",
        "1",
        "--n",
        "50",
        "--out",
        &bin,
    ]);

    // conflicting sigma is a usage error
    let out = lvmrs(&["certify", "--scores", &bin, "--sigma", "2", "--n0", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conflicts"));

    // wrong --n names expected and found
    let out = lvmrs(&["certify", "--scores", &bin, "--n0", "10", "--n", "30"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected 40"));

    // truncated binary names the byte offset
    let bytes = std::fs::read(&bin).unwrap();
    let cut = p(&dir, "cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let out = lvmrs(&["certify", "--scores", &cut, "--n0", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset 38"));

    // bad CSV names the line
    let csv = p(&dir, "bad.csv");
    write(
        &csv,
        "input_id,sample_id,logit_0,logit_1\n0,0,1,2\n0,1,1,oops\n0,2,1,2\n",
    );
    let out = lvmrs(&["certify", "--scores", &csv, "--sigma", "1", "--n0", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(code(&["certify", "--scores", &csv]), 2);
    assert_eq!(
        code(&["certify", "--model", "nope", "--sigma", "1", "--n0", "5", "--n", "5"]),
        2
    );
    assert_eq!(
        code(&["certify", "--model", "threshold", "--n0", "5", "--n", "5"]),
        2
    );
    assert_eq!(
        code(&[
            "certify",
            "--model",
            "threshold",
            "--sigma",
            "1",
            "--n0",
            "5",
            "--n",
            "5",
            "--alpha",
            "1.5"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "certify",
            "--model",
            "threshold",
            "--sigma",
            "1",
            "--n0",
            "5",
            "--n",
            "5",
            "--jobs",
            "0"
        ]),
        2
    );
    assert_eq!(
        code(&["certify", "--scores", &p(&dir, "missing.bin"), "--n0", "5"]),
        3
    );
    assert_eq!(code(&["--help"]), 0);
    assert!(Path::new(&bin).exists());
}

#[test]
fn every_record_revalidates() {
    let dir = TempDir::new().unwrap();
    let (w, x, _) = linear_fixture(&dir);
    for maps in [
        "hardmax",
        "softmax",
        "sparsemax",
        "hardmax,softmax,sparsemax",
    ] {
        let out = ok(&[
            "certify",
            "--model",
            "linear",
            "--weights",
            &w,
            "--inputs",
            &x,
            "--sigma",
            "1",
            "--n0",
            "50",
            "--n",
            "300",
            "--maps",
            maps,
            "--t-count",
            "5",
            "--mass",
            "2",
        ]);
        let recs = parse_records(out.as_slice()).unwrap();
        for r in &recs {
            r.validate().unwrap();
            assert_eq!(r.mass, 2.0);
            let again = parse_records(format!("{}\n", r.to_json_line()).as_bytes()).unwrap();
            assert_eq!(&again[0], r);
        }
    }
}
