use nlcnn_core::augment::{apply_pipeline, AugmentOp, AugmentSpec, Granularity};
use nlcnn_core::dataset::{
    fit_normalize, format_run, format_windows_csv, load_run, load_tep_dir, make_windows, parse_windows_csv,
    run_file_name, write_run, RawRun, Split, FAULT_ONSET, TEST_ROWS, TRAIN_FAULTY_ROWS,
};
use nlcnn_core::{SeededRng, Tensor};

fn run_matrix(rows: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let data = (0..rows * 52).map(|i| 3.0 * rng.normal() + (i % 52) as f64).collect();
    Tensor::matrix(rows, 52, data).unwrap()
}

fn write_fixture(dir: &std::path::Path, fault: usize, split: Split, rows: usize, transposed: bool) {
    let m = run_matrix(rows, (fault * 10 + rows) as u64);
    let m = if transposed { m.transpose().unwrap() } else { m };
    let run = RawRun {
        matrix: m,
        fault_id: fault,
        split,
    };
    write_run(&run, dir.join(run_file_name(fault, split))).unwrap();
}

#[test]
fn directory_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 0, Split::Train, 500, true);
    write_fixture(dir.path(), 0, Split::Test, TEST_ROWS, false);
    for f in [3, 7] {
        write_fixture(dir.path(), f, Split::Train, TRAIN_FAULTY_ROWS, false);
        write_fixture(dir.path(), f, Split::Test, TEST_ROWS, f == 7);
    }
    // 20-sample windows tile every run exactly
    let data = load_tep_dir(dir.path(), &[7, 3], 20, 20).unwrap();
    assert_eq!(data.classes, vec![0, 7, 3]);
    assert_eq!(data.train.label_counts(3), vec![25, 24, 24]);
    // test: normal run 48 windows; faulty runs 8 normal + 40 faulty each
    assert_eq!(data.test.label_counts(3), vec![48 + 16, 40, 40]);
    assert_eq!(data.test.dropped, 0);

    // train statistics of the normalized training windows
    let rows: Vec<&[f64]> = data
        .train
        .windows
        .iter()
        .flat_map(|w| w.data.data().chunks(52))
        .collect();
    let n = rows.len() as f64;
    for c in 0..52 {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-10, "column {c} mean {mean}");
        assert!((var.sqrt() - 1.0).abs() <= 1e-10, "column {c} std {}", var.sqrt());
    }
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), 0, Split::Train, 500, false);
    assert!(load_tep_dir(dir.path(), &[1], 40, 10).is_err());
    assert!(load_tep_dir(dir.path(), &[22], 40, 10).is_err());
}

#[test]
fn onset_rule_counts() {
    let run = RawRun {
        matrix: run_matrix(TEST_ROWS, 1),
        fault_id: 5,
        split: Split::Test,
    };
    for (win, stride) in [(20, 20), (40, 10), (40, 40), (30, 7), (1, 1)] {
        let ds = make_windows(&run, win, stride).unwrap();
        let starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|s| s + win <= TEST_ROWS).collect();
        let normal = starts.iter().filter(|&&s| s + win - 1 < FAULT_ONSET).count();
        let faulty = starts.iter().filter(|&&s| s >= FAULT_ONSET).count();
        let counts = ds.label_counts(6);
        assert_eq!((counts[0], counts[5]), (normal, faulty), "{win}/{stride}");
        assert_eq!(normal + faulty + ds.dropped, starts.len());
    }
}

#[test]
fn normalization_ignores_test_rows() {
    let train = RawRun {
        matrix: run_matrix(TRAIN_FAULTY_ROWS, 2),
        fault_id: 1,
        split: Split::Train,
    };
    let stats = fit_normalize(&[&train]).unwrap();
    let path = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(path.path(), format_run(&train)).unwrap();
    let reloaded = load_run(path.path(), 1, Split::Train).unwrap();
    assert_eq!(reloaded, train);
    assert_eq!(fit_normalize(&[&reloaded]).unwrap(), stats);
}

#[test]
fn augmented_windows_survive_csv() {
    let run = RawRun {
        matrix: run_matrix(TRAIN_FAULTY_ROWS, 3),
        fault_id: 2,
        split: Split::Train,
    };
    let mut ds = make_windows(&run, 40, 40).unwrap();
    let specs = [
        AugmentSpec::new(AugmentOp::BiDirectionalFlip, 0.5).unwrap(),
        AugmentSpec::new(
            AugmentOp::ExponentAugment {
                granularity: Granularity::PerRow,
                lo: -2.0,
                hi: 4.0,
            },
            0.5,
        )
        .unwrap(),
    ];
    let mut rng = SeededRng::new(9);
    for w in &mut ds.windows {
        w.data = apply_pipeline(&w.data, &specs, &mut rng).unwrap();
    }
    let back = parse_windows_csv(&format_windows_csv(&ds), 40).unwrap();
    assert_eq!(back.windows, ds.windows);
}
