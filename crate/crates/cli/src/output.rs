//! Number formatting, trajectory CSV, plot summaries and atomic file writes.

use crate::error::CliError;
use powerjsr::{Sinr, Trajectory};
use std::io::Write;
use std::path::Path;

pub const SIG_DIGITS: usize = 12;

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `%.12g`-style rendering: 12 significant digits, trailing zeros dropped,
/// scientific notation outside `1e-5 ≤ |x| < 1e12`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_owned()
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

/// `x` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["n".to_owned(), "switch_index".to_owned(), "c".to_owned()];
    h.extend((1..=dim).map(|i| format!("P_{i}")));
    h.extend((1..=dim).map(|i| format!("gamma_{i}")));
    h.push("norm_inf".to_owned());
    h
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(format!("csv: {e}"))
}

/// One row per recorded power vector. `switch_index`, `c` and the SINR
/// columns describe the transition out of that row and are empty on the
/// final row; SINR columns are also empty without gains.
pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>, CliError> {
    let dim = traj.powers[0].len();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(dim)).map_err(csv_err)?;
    for (n, p) in traj.powers.iter().enumerate() {
        let mut row = vec![n.to_string()];
        match (traj.switch_indices.get(n), traj.c_values.get(n)) {
            (Some(i), Some(c)) => {
                row.push(i.to_string());
                row.push(fmt_num(*c));
            }
            _ => row.extend([String::new(), String::new()]),
        }
        row.extend(p.values().iter().map(|&x| fmt_num(x)));
        match traj.sinrs.get(n).and_then(Option::as_ref) {
            Some(g) => row.extend(g.0.iter().map(|s| match s {
                Sinr::Finite(x) => fmt_num(*x),
                Sinr::Unbounded => "inf".to_owned(),
            })),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        row.push(fmt_num(traj.norms[n]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(format!("csv: {e}")))
}

/// Columns of a trajectory CSV needed for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub dim: usize,
    pub switch_indices: Vec<usize>,
    pub c_column: Vec<String>,
    pub norm_column: Vec<String>,
}

pub fn read_trajectory_csv(bytes: &[u8]) -> Result<CsvTrajectory, CliError> {
    let bad = |msg: String| CliError::Replay(msg);
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_owned).collect();
    if header.len() < 6 || !(header.len() - 4).is_multiple_of(2) {
        return Err(bad(format!("unexpected header with {} columns", header.len())));
    }
    let dim = (header.len() - 4) / 2;
    if header != csv_header(dim) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = CsvTrajectory { dim, switch_indices: Vec::new(), c_column: Vec::new(), norm_column: Vec::new() };
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec[0] != k.to_string() {
            return Err(bad(format!("row {k} has n = {}", &rec[0])));
        }
        if !rec[1].is_empty() {
            let i = rec[1].parse().map_err(|_| bad(format!("row {k}: bad switch_index `{}`", &rec[1])))?;
            out.switch_indices.push(i);
            out.c_column.push(rec[2].to_owned());
        }
        out.norm_column.push(rec[header.len() - 1].to_owned());
    }
    Ok(out)
}

/// `trajectory,n,log10_norm` rows for every trajectory, in order.
pub fn plot_summary<'a>(runs: impl IntoIterator<Item = (&'a str, &'a Trajectory)>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trajectory", "n", "log10_norm"]).map_err(csv_err)?;
    for (label, t) in runs {
        for (n, x) in t.norms.iter().enumerate() {
            w.write_record([label, &n.to_string(), &fmt_num(x.log10())]).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Internal(format!("csv: {e}")))
}

/// Pretty JSON with every non-integer number rounded to [`SIG_DIGITS`].
pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    fn round(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Number(n) if n.is_f64() => {
                if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(round),
            serde_json::Value::Object(o) => o.values_mut().for_each(round),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
    round(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use powerjsr::switching::{run_trajectory, Thresholds};
    use powerjsr::{CSchedule, Matrix, PowerVector, SwitchingPolicy, UpdateSet};

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.5), "0.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0f64.sqrt() * 100.0), "141.421356237");
        assert_eq!(fmt_num(1.618033988749895), "1.61803398875");
        assert_eq!(fmt_num(9.9999999999999), "10");
        assert_eq!(fmt_num(1e-7), "1e-7");
        assert_eq!(fmt_num(-2.5e-9), "-2.5e-9");
        assert_eq!(fmt_num(1.5e12), "1.5e12");
        assert_eq!(fmt_num(123456789012.0), "123456789012");
        assert_eq!(fmt_num(0.0001), "0.0001");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
    }

    #[test]
    fn csv_layout_and_read_back() {
        let set = UpdateSet::new(vec![Matrix::from_rows(&[[0.0, 0.1], [0.2, 0.0]]).unwrap()]).unwrap();
        let t = run_trajectory(
            &set,
            &CSchedule::Constant { c0: 1.0 },
            &SwitchingPolicy::IidUniform { seed: 1 },
            &PowerVector::new(vec![1.0, 1.0]).unwrap(),
            2,
            None,
            Thresholds::default(),
        )
        .unwrap();
        let text = String::from_utf8(trajectory_csv(&t).unwrap()).unwrap();
        assert_eq!(
            text,
            "n,switch_index,c,P_1,P_2,gamma_1,gamma_2,norm_inf\n0,0,1,1,1,,,1\n1,0,1,0.1,0.2,,,0.2\n2,,,0.02,0.02,,,0.02\n"
        );
        let back = read_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(back.dim, 2);
        assert_eq!(back.switch_indices, vec![0, 0]);
        assert_eq!(back.norm_column, vec!["1", "0.2", "0.02"]);
        assert!(read_trajectory_csv(b"a,b\n1,2\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
