//! Tennessee Eastman Process run files, normalization, windowing, and a
//! synthetic task with a known generating exponent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::constraints::{DEFAULT_V_MAX, DEFAULT_V_MIN};
use crate::error::{Error, Result};
use crate::numerics::{signed_pow, SeededRng, Tensor, DEFAULT_EPS};

/// Measured variables per sample.
pub const TEP_VARIABLES: usize = 52;
/// Rows of a faulty training run.
pub const TRAIN_FAULTY_ROWS: usize = 480;
/// Rows of a test run.
pub const TEST_ROWS: usize = 960;
/// First faulty sample (0-based) of a test run.
pub const FAULT_ONSET: usize = 160;
pub const MAX_FAULT_ID: usize = 21;

pub const DEFAULT_WIN_LEN: usize = 40;
pub const DEFAULT_WIN_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// File name of a run: `dNN.dat` or `dNN_te.dat`.
pub fn run_file_name(fault_id: usize, split: Split) -> String {
    match split {
        Split::Train => format!("d{fault_id:02}.dat"),
        Split::Test => format!("d{fault_id:02}_te.dat"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    /// `samples x 52`
    pub matrix: Tensor,
    pub fault_id: usize,
    pub split: Split,
}

fn parse_matrix(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut cols = None;
    let mut rows = 0;
    let mut data = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("`{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("non-finite value `{tok}`"),
                });
            }
            data.push(v);
        }
        let n = data.len() - before;
        if n == 0 {
            continue;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {c} values, found {n}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Parse {
        line: 0,
        msg: "file contains no data".into(),
    })?;
    Ok((rows, cols, data))
}

/// Parses a run from whitespace-delimited text, fixing `52 x N` orientation
/// and validating the row count for the split.
pub fn parse_run(text: &str, fault_id: usize, split: Split) -> Result<RawRun> {
    if fault_id > MAX_FAULT_ID {
        return Err(Error::InvalidArgument(format!(
            "fault id {fault_id} outside 0..={MAX_FAULT_ID}"
        )));
    }
    let (rows, cols, data) = parse_matrix(text)?;
    let mut matrix = Tensor::matrix(rows, cols, data)?;
    if cols != TEP_VARIABLES {
        if rows == TEP_VARIABLES && cols > TEP_VARIABLES {
            matrix = matrix.transpose()?;
        } else {
            return Err(Error::InvalidArgument(format!(
                "run is {rows}x{cols}; neither dimension is {TEP_VARIABLES}"
            )));
        }
    }
    let (rows, _) = matrix.dims2()?;
    let expected = match (split, fault_id) {
        (Split::Test, _) => Some(TEST_ROWS),
        (Split::Train, 0) => None,
        (Split::Train, _) => Some(TRAIN_FAULTY_ROWS),
    };
    if let Some(expected) = expected {
        if rows != expected {
            return Err(Error::RowCount {
                what: run_file_name(fault_id, split),
                expected,
                actual: rows,
            });
        }
    }
    Ok(RawRun {
        matrix,
        fault_id,
        split,
    })
}

pub fn load_run(path: impl AsRef<Path>, fault_id: usize, split: Split) -> Result<RawRun> {
    let text = fs::read_to_string(path)?;
    parse_run(&text, fault_id, split)
}

/// Text form read by [`parse_run`]: one sample per line, shortest
/// round-trip decimal representation.
pub fn format_run(run: &RawRun) -> String {
    let (_, cols) = run.matrix.dims2().expect("2-D run");
    let mut out = String::new();
    for row in run.matrix.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_run(run: &RawRun, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_run(run))?;
    Ok(())
}

/// Per-column statistics fitted on training data (population std).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_normalize(runs: &[&RawRun]) -> Result<NormStats> {
    let cols = match runs.first() {
        Some(r) => r.matrix.dims2()?.1,
        None => return Err(Error::InvalidArgument("no training runs".into())),
    };
    let mut count = 0usize;
    let mut sum = vec![0.0; cols];
    for run in runs {
        let (r, c) = run.matrix.dims2()?;
        if c != cols {
            return Err(Error::ShapeMismatch {
                expected: vec![r, cols],
                actual: vec![r, c],
            });
        }
        for row in run.matrix.data().chunks(cols) {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        count += r;
    }
    if count < 2 {
        return Err(Error::InvalidArgument("need at least 2 training rows".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; cols];
    for run in runs {
        for row in run.matrix.data().chunks(cols) {
            for ((q, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
    }
    let std: Vec<f64> = sq.iter().map(|q| (q / count as f64).sqrt()).collect();
    if let Some(col) = std.iter().position(|&s| !(s > 1e-12 * 1f64.max(s))) {
        return Err(Error::DegenerateColumn(col));
    }
    Ok(NormStats { mean, std })
}

pub fn normalize_matrix(m: &Tensor, stats: &NormStats) -> Result<Tensor> {
    let (_, cols) = m.dims2()?;
    if cols != stats.mean.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![stats.mean.len()],
            actual: vec![cols],
        });
    }
    let data = m
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v - stats.mean[i % cols]) / stats.std[i % cols])
        .collect();
    Tensor::new(m.shape().to_vec(), data)
}

pub fn apply_normalize(run: &RawRun, stats: &NormStats) -> Result<RawRun> {
    Ok(RawRun {
        matrix: normalize_matrix(&run.matrix, stats)?,
        fault_id: run.fault_id,
        split: run.split,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub win_len: usize,
    pub stride: usize,
    /// Test windows straddling the fault onset that were discarded.
    pub dropped: usize,
}

impl WindowedDataset {
    pub fn empty(win_len: usize, stride: usize) -> Self {
        Self {
            windows: Vec::new(),
            win_len,
            stride,
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn channels(&self) -> Option<usize> {
        self.windows.first().map(|w| w.data.shape()[1])
    }

    pub fn label_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for w in &self.windows {
            if w.label < classes {
                counts[w.label] += 1;
            }
        }
        counts
    }

    pub fn extend(&mut self, other: WindowedDataset) {
        self.dropped += other.dropped;
        self.windows.extend(other.windows);
    }

    /// Maps every label through `f`.
    pub fn relabel(&mut self, f: impl Fn(usize) -> usize) {
        for w in &mut self.windows {
            w.label = f(w.label);
        }
    }
}

/// Slides a window over a run and labels it.
///
/// Training windows carry the run's fault id. Test windows of a faulty run
/// are normal (0) when they end before [`FAULT_ONSET`], faulty when they
/// start at or after it, and dropped otherwise.
pub fn make_windows(run: &RawRun, win_len: usize, stride: usize) -> Result<WindowedDataset> {
    let (rows, cols) = run.matrix.dims2()?;
    if win_len == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window length and stride must be >= 1".into()));
    }
    if win_len > rows {
        return Err(Error::InvalidArgument(format!(
            "window length {win_len} exceeds {rows} rows"
        )));
    }
    let mut ds = WindowedDataset::empty(win_len, stride);
    let mut start = 0;
    while start + win_len <= rows {
        let end = start + win_len - 1;
        let label = match run.split {
            Split::Train => Some(run.fault_id),
            Split::Test if run.fault_id == 0 => Some(0),
            Split::Test if start >= FAULT_ONSET => Some(run.fault_id),
            Split::Test if end < FAULT_ONSET => Some(0),
            Split::Test => None,
        };
        match label {
            Some(label) => {
                let data = run.matrix.data()[start * cols..(end + 1) * cols].to_vec();
                ds.windows.push(Window {
                    data: Tensor::matrix(win_len, cols, data)?,
                    label,
                });
            }
            None => ds.dropped += 1,
        }
        start += stride;
    }
    Ok(ds)
}

/// Writes windows as CSV: `label,t0_c0,t0_c1,...` with values row-major.
pub fn write_windows_csv(ds: &WindowedDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_windows_csv(ds))?;
    Ok(())
}

pub fn format_windows_csv(ds: &WindowedDataset) -> String {
    let cols = ds.channels().unwrap_or(0);
    let mut out = String::from("label");
    for t in 0..ds.win_len {
        for c in 0..cols {
            let _ = write!(out, ",t{t}_c{c}");
        }
    }
    out.push('\n');
    for w in &ds.windows {
        let _ = write!(out, "{}", w.label);
        for v in w.data.data() {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

pub fn read_windows_csv(path: impl AsRef<Path>, stride: usize) -> Result<WindowedDataset> {
    parse_windows_csv(&fs::read_to_string(path)?, stride)
}

pub fn parse_windows_csv(text: &str, stride: usize) -> Result<WindowedDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.first() != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with `label`".into(),
        });
    }
    let (win_len, cols) = match fields.last().and_then(|f| f.strip_prefix('t')) {
        Some(last) if fields.len() > 1 => {
            let (t, c) = last.split_once("_c").ok_or(Error::Parse {
                line: 1,
                msg: format!("bad column `{last}`"),
            })?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("bad column `{last}`"),
                })
            };
            (parse(t)? + 1, parse(c)? + 1)
        }
        _ => (0, 0),
    };
    if win_len * cols + 1 != fields.len() {
        return Err(Error::Parse {
            line: 1,
            msg: "header size does not match its last column".into(),
        });
    }
    let mut ds = WindowedDataset::empty(win_len, stride);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let mut parts = line.split(',');
        let label = parts
            .next()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or(Error::Parse {
                line: lineno,
                msg: "bad label".into(),
            })?;
        let values = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        if values.len() != win_len * cols {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} values, found {}", win_len * cols, values.len()),
            });
        }
        ds.windows.push(Window {
            data: Tensor::matrix(win_len, cols, values)?,
            label,
        });
    }
    Ok(ds)
}

/// Normalized, windowed train and test sets built from a directory of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TepData {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub stats: NormStats,
    /// Fault id of each class index; class 0 is the normal condition.
    pub classes: Vec<usize>,
}

/// Loads `d00.dat`, `d00_te.dat` and the train/test files of `faults` from
/// `dir`. Normalization is fitted on the training runs only. Labels are
/// mapped to class indices in the order of [`TepData::classes`].
pub fn load_tep_dir(dir: impl AsRef<Path>, faults: &[usize], win_len: usize, stride: usize) -> Result<TepData> {
    let dir = dir.as_ref();
    let mut classes = vec![0];
    for &f in faults {
        if f == 0 || f > MAX_FAULT_ID {
            return Err(Error::InvalidArgument(format!(
                "fault id {f} outside 1..={MAX_FAULT_ID}"
            )));
        }
        if !classes.contains(&f) {
            classes.push(f);
        }
    }
    let load = |f: usize, split: Split| load_run(dir.join(run_file_name(f, split)), f, split);
    let train_runs = classes
        .iter()
        .map(|&f| load(f, Split::Train))
        .collect::<Result<Vec<_>>>()?;
    let test_runs = classes
        .iter()
        .map(|&f| load(f, Split::Test))
        .collect::<Result<Vec<_>>>()?;
    let stats = fit_normalize(&train_runs.iter().collect::<Vec<_>>())?;
    let class_of = |fault: usize| classes.iter().position(|&c| c == fault).expect("known fault");
    let window_all = |runs: &[RawRun]| -> Result<WindowedDataset> {
        let mut ds = WindowedDataset::empty(win_len, stride);
        for run in runs {
            ds.extend(make_windows(&apply_normalize(run, &stats)?, win_len, stride)?);
        }
        ds.relabel(class_of);
        Ok(ds)
    };
    Ok(TepData {
        train: window_all(&train_runs)?,
        test: window_all(&test_runs)?,
        stats,
        classes,
    })
}

/// Parameters of the synthetic two-class task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub win_len: usize,
    pub channels: usize,
    /// Generating exponent `g`.
    pub exponent: f64,
    /// Std of the Gaussian noise added after labeling.
    pub noise: f64,
    pub count: usize,
    /// Minimum `|Σ signed_pow(x, g)|` of an accepted clean window.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            win_len: 8,
            channels: 2,
            exponent: 2.0,
            noise: 0.05,
            count: 400,
            margin: 0.5,
            seed: 0,
        }
    }
}

/// Generated windows plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub dataset: WindowedDataset,
    pub params: SyntheticParams,
}

pub const SYNTHETIC_RETRY_BUDGET: usize = 10_000;

/// The generating feature `Σ signed_pow(x, g)`.
pub fn synthetic_feature(x: &Tensor, exponent: f64) -> f64 {
    x.data().iter().map(|&v| signed_pow(v, exponent, DEFAULT_EPS)).sum()
}

/// Two balanced classes separated by the sign of `Σ signed_pow(x, g)`.
///
/// Clean entries are standard normal; a window of class 1 (0) is accepted
/// when the feature exceeds `margin` (is below `-margin`). Noise with std
/// `noise` is added after acceptance, so the clean task is exactly separable
/// and the noisy one nearly so. Labels alternate 0, 1, 0, ...
pub fn gen_synthetic(params: SyntheticParams) -> Result<SyntheticTask> {
    let SyntheticParams {
        win_len,
        channels,
        exponent,
        noise,
        count,
        margin,
        seed,
    } = params;
    if !(DEFAULT_V_MIN < exponent && exponent < DEFAULT_V_MAX) {
        return Err(Error::InvalidArgument(format!(
            "exponent {exponent} outside ({DEFAULT_V_MIN}, {DEFAULT_V_MAX})"
        )));
    }
    if !(noise >= 0.0) || !(margin >= 0.0) || win_len == 0 || channels == 0 {
        return Err(Error::InvalidArgument("invalid synthetic task parameters".into()));
    }
    let mut rng = SeededRng::new(seed);
    let n = win_len * channels;
    let mut ds = WindowedDataset::empty(win_len, win_len);
    for i in 0..count {
        let label = i % 2;
        let mut accepted = None;
        for _ in 0..SYNTHETIC_RETRY_BUDGET {
            let data: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let x = Tensor::matrix(win_len, channels, data)?;
            let f = synthetic_feature(&x, exponent);
            if (label == 1 && f > margin) || (label == 0 && f < -margin) {
                accepted = Some(x);
                break;
            }
        }
        let mut x = accepted.ok_or(Error::RetryBudget(SYNTHETIC_RETRY_BUDGET))?;
        if noise > 0.0 {
            for v in x.data_mut() {
                *v += noise * rng.normal();
            }
        }
        ds.windows.push(Window { data: x, label });
    }
    Ok(SyntheticTask { dataset: ds, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = SeededRng::new(seed);
        let data = (0..rows * cols)
            .map(|i| rng.normal() * (1.0 + (i % cols) as f64) + i as f64 % 7.0)
            .collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    fn text_of(m: &Tensor) -> String {
        format_run(&RawRun {
            matrix: m.clone(),
            fault_id: 0,
            split: Split::Train,
        })
    }

    #[test]
    fn loads_expected_shapes() {
        let train = parse_run(&text_of(&fixture(480, 52, 1)), 3, Split::Train).unwrap();
        assert_eq!(train.matrix.shape(), &[480, 52]);
        let test = parse_run(&text_of(&fixture(960, 52, 2)), 3, Split::Test).unwrap();
        assert_eq!(test.matrix.shape(), &[960, 52]);
    }

    #[test]
    fn transposed_file_is_fixed() {
        let m = fixture(960, 52, 3);
        let run = parse_run(&text_of(&m.transpose().unwrap()), 0, Split::Test).unwrap();
        assert_eq!(run.matrix, m);
    }

    #[test]
    fn load_errors() {
        let err = parse_run(&text_of(&fixture(479, 52, 4)), 1, Split::Train).unwrap_err();
        assert!(
            matches!(
                err,
                Error::RowCount {
                    expected: 480,
                    actual: 479,
                    ..
                }
            ),
            "{err}"
        );
        assert!(parse_run(&text_of(&fixture(10, 51, 4)), 1, Split::Train).is_err());
        assert!(matches!(
            parse_run("1 2\n3 x\n", 0, Split::Train),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_run("1 2\n3\n", 0, Split::Train),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_run("", 0, Split::Train).is_err());
        // normal training runs may have any length
        assert!(parse_run(&text_of(&fixture(500, 52, 5)), 0, Split::Train).is_ok());
    }

    #[test]
    fn run_text_round_trips_bitwise() {
        let m = fixture(30, 52, 6);
        let run = RawRun {
            matrix: m.clone(),
            fault_id: 0,
            split: Split::Train,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(run_file_name(0, Split::Train));
        write_run(&run, &path).unwrap();
        let back = load_run(&path, 0, Split::Train).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.matrix), bits(&m));
    }

    #[test]
    fn file_names() {
        assert_eq!(run_file_name(0, Split::Train), "d00.dat");
        assert_eq!(run_file_name(7, Split::Test), "d07_te.dat");
    }

    #[test]
    fn normalization_example() {
        let run = RawRun {
            matrix: Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap(),
            fault_id: 0,
            split: Split::Train,
        };
        let stats = fit_normalize(&[&run]).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let out = apply_normalize(&run, &stats).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in out.matrix.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let run = RawRun {
            matrix: Tensor::matrix(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap(),
            fault_id: 0,
            split: Split::Train,
        };
        assert!(matches!(fit_normalize(&[&run]), Err(Error::DegenerateColumn(1))));
    }

    #[test]
    fn standardized_data_is_fixed_point() {
        let run = RawRun {
            matrix: fixture(200, 4, 9),
            fault_id: 0,
            split: Split::Train,
        };
        let stats = fit_normalize(&[&run]).unwrap();
        let norm = apply_normalize(&run, &stats).unwrap();
        let again = fit_normalize(&[&norm]).unwrap();
        for (m, s) in again.mean.iter().zip(&again.std) {
            assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        }
        let twice = apply_normalize(&norm, &again).unwrap();
        assert!(twice.matrix.max_abs_diff(&norm.matrix) < 1e-12);
    }

    #[test]
    fn test_window_labels() {
        let run = RawRun {
            matrix: fixture(960, 52, 10),
            fault_id: 4,
            split: Split::Test,
        };
        let ds = make_windows(&run, 20, 20).unwrap();
        let normal = ds.windows.iter().filter(|w| w.label == 0).count();
        let faulty = ds.windows.iter().filter(|w| w.label == 4).count();
        assert_eq!((normal, faulty, ds.dropped), (8, 40, 0));

        let ds = make_windows(&run, 40, 10).unwrap();
        let total = (960 - 40) / 10 + 1;
        let normal = ds.windows.iter().filter(|w| w.label == 0).count();
        // normal: start + 39 < 160 -> start <= 120 -> 13; faulty: start >= 160 -> 16..=92 -> 77
        assert_eq!(normal, 13);
        assert_eq!(ds.len() - normal, 77);
        assert_eq!(ds.len() + ds.dropped, total);
    }

    #[test]
    fn train_and_whole_windows() {
        let run = RawRun {
            matrix: fixture(480, 52, 11),
            fault_id: 2,
            split: Split::Train,
        };
        let ds = make_windows(&run, 40, 40).unwrap();
        assert_eq!(ds.len(), 12);
        assert!(ds.windows.iter().all(|w| w.label == 2));
        assert_eq!(make_windows(&run, 480, 7).unwrap().len(), 1);
        assert!(make_windows(&run, 481, 1).is_err());
        assert_eq!(ds.windows[1].data.data()[0], run.matrix.at(40, 0));
    }

    #[test]
    fn windows_csv_round_trip() {
        let run = RawRun {
            matrix: fixture(480, 52, 12),
            fault_id: 1,
            split: Split::Train,
        };
        let ds = make_windows(&run, 40, 80).unwrap();
        let back = parse_windows_csv(&format_windows_csv(&ds), 80).unwrap();
        assert_eq!(back.windows, ds.windows);
        assert_eq!(back.win_len, 40);
    }

    #[test]
    fn synthetic_clean_is_separable() {
        let params = SyntheticParams {
            noise: 0.0,
            count: 300,
            seed: 4,
            ..Default::default()
        };
        let task = gen_synthetic(params).unwrap();
        assert_eq!(task.dataset.len(), 300);
        for w in &task.dataset.windows {
            let f = synthetic_feature(&w.data, 2.0);
            if w.label == 1 {
                assert!(f > params.margin);
            } else {
                assert!(f < -params.margin);
            }
        }
        assert_eq!(task.dataset.label_counts(2), vec![150, 150]);
    }

    #[test]
    fn synthetic_edge_cases() {
        let empty = gen_synthetic(SyntheticParams {
            count: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(empty.dataset.is_empty());
        let a = gen_synthetic(SyntheticParams {
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        let b = gen_synthetic(SyntheticParams {
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(format_windows_csv(&a.dataset), format_windows_csv(&b.dataset));
        let impossible = SyntheticParams {
            margin: 1e9,
            count: 1,
            ..Default::default()
        };
        assert!(matches!(gen_synthetic(impossible), Err(Error::RetryBudget(_))));
        assert!(gen_synthetic(SyntheticParams {
            exponent: 4.0,
            ..Default::default()
        })
        .is_err());
    }
}
