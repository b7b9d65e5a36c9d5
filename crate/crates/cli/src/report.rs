//! Writes run artifacts as CSV tables and a JSON summary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::runner::RunArtifacts;

pub const ITERATES_HEADER: [&str; 4] = ["iter", "step_vnorm", "qvi_residual", "min_node_delta"];
pub const SENSITIVITY_HEADER: [&str; 2] = ["s", "quotient_error_vnorm"];
pub const SOLUTION_HEADER: [&str; 5] = ["x", "u", "phi_u", "lambda", "class"];
pub const ALPHA_HEADER: [&str; 2] = ["x", "alpha"];

/// Exponent form with 18 significant digits; parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

/// Writes all artifacts into `dir` and returns the paths written, in order.
pub fn emit_report(artifacts: &RunArtifacts, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in &artifacts.extremal {
        let label = a.which.label();
        let path = dir.join(format!("iterates_{label}.csv"));
        write_csv(
            &path,
            ITERATES_HEADER,
            a.records.iter().map(|r| {
                [
                    r.iter.to_string(),
                    num(r.step_vnorm),
                    num(r.qvi_residual),
                    num(r.min_node_delta),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join(format!("solution_{label}.csv"));
        write_csv(
            &path,
            SOLUTION_HEADER,
            a.rows.iter().map(|r| {
                [
                    num(r.x),
                    num(r.u),
                    num(r.phi_u),
                    num(r.lambda),
                    r.class.to_string(),
                ]
            }),
        )?;
        written.push(path);
    }
    if let Some(s) = &artifacts.sensitivity {
        let label = s.which.label();
        let path = dir.join(format!("sensitivity_{label}.csv"));
        write_csv(
            &path,
            SENSITIVITY_HEADER,
            s.table
                .iter()
                .map(|e| [num(e.s), num(e.quotient_error_vnorm)]),
        )?;
        written.push(path);

        let path = dir.join(format!("alpha_{label}.csv"));
        write_csv(
            &path,
            ALPHA_HEADER,
            s.alpha.iter().map(|&(x, a)| [num(x), num(a)]),
        )?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&artifacts.summary)
        .map_err(|e| io::Error::new(io::ErrorKind::Other, e))?;
    fs::write(&path, json + "\n")?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, ITERATES_HEADER, Vec::<[String; 4]>::new()).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "iter,step_vnorm,qvi_residual,min_node_delta\n"
        );
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-13, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
