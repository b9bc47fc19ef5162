use std::fs;

use regionfl::geo::{label_distance, vehicle_sites, WeightMatrix};
use regionfl::synth::{generate, load, save, SynthConfig, SynthOutput, MANIFEST_FILE};
use regionfl::Error;

fn benchmark(seed: u64) -> SynthOutput {
    generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn assert_parse_error(err: Error, line: usize) {
    match err {
        Error::Parse { line: l, .. } => assert_eq!(l, line, "{err}"),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn save_then_load_is_identity() {
    let out = benchmark(4);
    let dir = tempfile::tempdir().unwrap();
    save(&out, dir.path()).unwrap();
    let back = load(dir.path()).unwrap();
    assert_eq!(back.config, out.config);
    assert_eq!(back.fleet, out.fleet);
    assert_eq!(back.datasets, out.datasets);
    assert_eq!(back.class_prototypes, out.class_prototypes);
}

#[test]
fn saving_twice_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save(&benchmark(2), a.path()).unwrap();
    save(&benchmark(2), b.path()).unwrap();
    for name in [MANIFEST_FILE, "fleet.tsv", "prototypes.txt", "datasets/av_0007.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn missing_header_is_a_parse_error_on_line_one() {
    let dir = tempfile::tempdir().unwrap();
    save(&benchmark(1), dir.path()).unwrap();
    let file = dir.path().join("datasets/av_0003.csv");
    let text = fs::read_to_string(&file).unwrap();
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(&file, body).unwrap();
    assert_parse_error(load(dir.path()).unwrap_err(), 1);
}

#[test]
fn truncated_rows_are_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    save(&benchmark(1), dir.path()).unwrap();
    let file = dir.path().join("datasets/av_0000.csv");
    let text = fs::read_to_string(&file).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    fs::write(&file, lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    let err = load(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
    assert!(err.to_string().contains("av_0000.csv"), "{err}");
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    save(&benchmark(1), dir.path()).unwrap();
    let file = dir.path().join("fleet.tsv");
    let text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[3] = lines[3].replacen('\t', "\tnot-a-number", 1);
    fs::write(&file, lines.join("\n") + "\n").unwrap();
    assert_parse_error(load(dir.path()).unwrap_err(), 4);
}

#[test]
fn label_counts_match_dataset_histograms() {
    for seed in 0..3 {
        let out = benchmark(seed);
        for (av, data) in out.fleet.iter().zip(&out.datasets) {
            assert_eq!(av.label_counts, data.label_histogram());
            // Two labels per vehicle at the default skew.
            assert_eq!(av.label_counts.iter().filter(|&&c| c > 0).count(), 2);
        }
    }
}

#[test]
fn same_city_vehicles_have_closer_label_distributions() {
    for seed in 0..3 {
        let out = benchmark(seed);
        let sites = vehicle_sites(&out.fleet).unwrap();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for i in 0..sites.len() {
            for j in i + 1..sites.len() {
                let d = label_distance(&sites[i].abundance, &sites[j].abundance, &WeightMatrix::Identity).unwrap();
                if out.fleet[i].city == out.fleet[j].city {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&intra) < mean(&inter), "seed {seed}: {} vs {}", mean(&intra), mean(&inter));
    }
}
