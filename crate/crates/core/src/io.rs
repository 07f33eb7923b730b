//! Plain-text persistence: headerless matrix CSVs, `key=value` files and
//! result tables. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial write.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::graph::{Adjacency, GraphLaplacian, LAPLACIAN_TOL};
use crate::kernels::Matrix;
use crate::solver::SolverConfig;
use crate::synth::{LowRankParams, PerturbationSpec, SyntheticDataset};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

/// 17 significant digits: enough for every `f64` to parse back to itself.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 24);
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| format_value(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

/// Parses a headerless numeric CSV. `origin` names the source in errors;
/// rows and columns in errors are 1-based.
pub fn parse_matrix(text: &str, origin: &str) -> Result<Matrix> {
    let parse_err = |row: usize, column: usize, message: String| Error::Parse { path: origin.to_string(), row, column, message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(i + 1, 0, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(i + 1, record.len().min(w) + 1, format!("expected {w} columns, found {}", record.len())));
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| parse_err(i + 1, j + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(i + 1, j + 1, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| parse_err(0, 0, "no data rows".into()))?;
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_matrix(&text, &path.display().to_string())
}

/// Ordered `key=value` pairs. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            row: i + 1,
            column: 1,
            message: format!("expected key=value, found {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_key_values(&text, &path.display().to_string())
}

pub fn key_values_to_string(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn write_key_values(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    write_atomic(path, key_values_to_string(pairs).as_bytes())
}

/// Applies `pairs` on top of `cfg`; unknown keys are errors.
pub fn apply_config(cfg: &mut SolverConfig, pairs: &[(String, String)]) -> Result<()> {
    for (k, v) in pairs {
        cfg.set(k, v)?;
    }
    cfg.validate()
}

pub fn read_config(path: &Path) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    apply_config(&mut cfg, &read_key_values(path)?)?;
    Ok(cfg)
}

/// A CSV table with a header row.
pub fn table_to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| invalid(format!("table encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(invalid(format!("table row has {} fields, header has {}", row.len(), header.len())));
        }
        w.write_record(row).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input"))
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, table_to_csv(header, rows)?.as_bytes())
}

/// Matrix files of a saved dataset.
pub const DATASET_FILES: [&str; 7] = ["X.csv", "L0.csv", "M.csv", "Phi0.csv", "W.csv", "P.csv", "Y.csv"];

fn dataset_manifest(ds: &SyntheticDataset) -> Vec<(String, String)> {
    let LowRankParams { p, n, r, q, mu } = ds.params;
    let mut pairs: Vec<(String, String)> = vec![
        ("seed".into(), ds.seed.to_string()),
        ("p".into(), p.to_string()),
        ("n".into(), n.to_string()),
        ("r".into(), r.to_string()),
        ("q".into(), q.to_string()),
        ("mu".into(), mu.to_string()),
        ("components".into(), ds.components.to_string()),
    ];
    if let Some(spec) = ds.perturbation {
        pairs.push(("density".into(), spec.density.to_string()));
        pairs.push(("amplitude".into(), spec.amplitude.label()));
    }
    pairs
}

/// Writes the dataset matrices and `manifest.txt` into `dir` (created if
/// missing). `extra` is appended to the manifest.
pub fn save_dataset(dir: &Path, ds: &SyntheticDataset, extra: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mats = [&ds.x, &ds.lowrank, &ds.sparse, ds.laplacian.matrix(), ds.adjacency.weights(), &ds.basis, &ds.coefficients];
    for (name, m) in DATASET_FILES.iter().zip(mats) {
        write_matrix(&dir.join(name), m)?;
    }
    let mut manifest = dataset_manifest(ds);
    manifest.extend_from_slice(extra);
    write_key_values(&dir.join("manifest.txt"), &manifest)
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn required<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T> {
    let v = lookup(pairs, key).ok_or_else(|| invalid(format!("manifest lacks {key}")))?;
    v.parse().map_err(|_| invalid(format!("manifest value {key}={v} does not parse")))
}

pub fn load_dataset(dir: &Path) -> Result<SyntheticDataset> {
    let manifest = read_key_values(&dir.join("manifest.txt"))?;
    let params = LowRankParams {
        p: required(&manifest, "p")?,
        n: required(&manifest, "n")?,
        r: required(&manifest, "r")?,
        q: required(&manifest, "q")?,
        mu: required(&manifest, "mu")?,
    };
    let perturbation = match lookup(&manifest, "density") {
        Some(_) => Some(PerturbationSpec::new(required(&manifest, "density")?, required(&manifest, "amplitude")?)?),
        None => None,
    };
    let m: Vec<Matrix> = DATASET_FILES.iter().map(|f| read_matrix(&dir.join(f))).collect::<Result<_>>()?;
    let [x, lowrank, sparse, phi, w, basis, coefficients]: [Matrix; 7] = m.try_into().expect("seven files");
    if x.shape() != (params.p, params.n) {
        return Err(invalid(format!("X is {:?}, manifest says {}x{}", x.shape(), params.p, params.n)));
    }
    Ok(SyntheticDataset {
        params,
        seed: required(&manifest, "seed")?,
        x,
        lowrank,
        sparse,
        laplacian: GraphLaplacian::new(phi, LAPLACIAN_TOL)?,
        adjacency: Adjacency::new(w)?,
        basis,
        coefficients,
        components: required(&manifest, "components")?,
        perturbation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ragged_rows_report_position() {
        let err = parse_matrix("1,2,3\n4,5\n", "m.csv").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (2, 3)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_field_reports_position() {
        match parse_matrix("1,2\n3,x\n", "m.csv").unwrap_err() {
            Error::Parse { row, column, message, .. } => {
                assert_eq!((row, column), (2, 2));
                assert!(message.contains("\"x\""));
            }
            other => panic!("{other}"),
        }
        assert!(matches!(parse_matrix("1,NaN\n", "m").unwrap_err(), Error::Parse { column: 2, .. }));
        assert!(parse_matrix("", "m").is_err());
    }

    #[test]
    fn whitespace_and_blank_lines_tolerated() {
        let m = parse_matrix(" 1 , 2\n\n3,4 \n", "m").unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn key_values_skip_comments() {
        let pairs = parse_key_values("# header\ngamma = 0.5 # inline\n\nbeta=2\n", "c").unwrap();
        assert_eq!(pairs, vec![("gamma".into(), "0.5".into()), ("beta".into(), "2".into())]);
        assert!(parse_key_values("gamma 0.5\n", "c").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut cfg = SolverConfig::default();
        assert!(apply_config(&mut cfg, &[("gama".into(), "1".into())]).is_err());
        apply_config(&mut cfg, &[("gamma".into(), "0.25".into())]).unwrap();
        assert_eq!(cfg.gamma, 0.25);
    }

    #[test]
    fn table_rows_must_match_header() {
        assert!(table_to_csv(&["a", "b"], &[vec!["1".into()]]).is_err());
        let text = table_to_csv(&["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(text, "a,b\n1,2\n");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = crate::synth::generate_lowrank(LowRankParams::default(), 4, &mut crate::rng::seeded(4)).unwrap();
        let spec = PerturbationSpec::new(0.2, crate::synth::AmplitudeLaw::SignedUnit).unwrap();
        let ds = ds.perturb(spec, &mut crate::rng::seeded(5)).unwrap();
        save_dataset(dir.path(), &ds, &[]).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.laplacian, ds.laplacian);
        assert_eq!(back.coefficients, ds.coefficients);
        assert_eq!(back.perturbation, ds.perturbation);
        assert_eq!((back.seed, back.components, back.params), (ds.seed, ds.components, ds.params));
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        write_matrix(&dir.path().join("a.csv"), &Matrix::identity(2, 2)).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.csv")]);
    }

    proptest! {
        #[test]
        fn matrix_text_round_trip_is_bitwise(rows in 1usize..5, cols in 1usize..5, bits in prop::collection::vec(any::<u64>(), 16)) {
            let m = Matrix::from_fn(rows, cols, |i, j| {
                let v = f64::from_bits(bits[i * 4 + j]);
                if v.is_finite() { v } else { (i as f64) - 0.1 * j as f64 }
            });
            let back = parse_matrix(&matrix_to_csv(&m), "mem").unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0)));
        }
    }
}
