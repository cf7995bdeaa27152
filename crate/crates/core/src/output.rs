//! CSV formatting and atomic file writes.

use crate::simcore::Trajectory;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const TRAJECTORY_HEADER: &str = "t,y,u,u_nom,z";

/// Fixed (non-exponent) notation with 17 significant digits, which
/// round-trips every finite `f64`. Negative zero prints as `0`.
pub fn fmt_sig17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.0000000000000000".into();
    }
    // The exponent of the value after rounding to 17 digits, so that a value
    // like 9.99999999999999999e-1 gets the decimals of 1.0.
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').map_or(0, |i| i + 1)..]
        .parse()
        .unwrap_or(0);
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(96 * (traj.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for i in 0..traj.len() {
        let row = [traj.t[i], traj.y[i], traj.u[i], traj.u_nom[i], traj.z[i]];
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&fmt_sig17(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses a trajectory CSV produced by [`trajectory_csv`] back into columns.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<[f64; 5]>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err("missing trajectory header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut row = [0.0; 5];
            let mut fields = line.split(',');
            for slot in row.iter_mut() {
                let f = fields
                    .next()
                    .ok_or(format!("row {}: too few fields", i + 1))?;
                *slot = f
                    .parse()
                    .map_err(|_| format!("row {}: bad number `{f}`", i + 1))?;
            }
            if fields.next().is_some() {
                return Err(format!("row {}: too many fields", i + 1));
            }
            Ok(row)
        })
        .collect()
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name")
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

/// Renders a small aligned text table.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_examples() {
        assert_eq!(fmt_sig17(1.0), "1.0000000000000000");
        assert_eq!(fmt_sig17(-0.0), "0.0000000000000000");
        assert_eq!(fmt_sig17(0.1), "0.10000000000000001");
        assert_eq!(fmt_sig17(12345.5), "12345.500000000000");
        assert_eq!(fmt_sig17(1e20), "100000000000000000000");
        assert_eq!(fmt_sig17(-2.5e-3), "-0.0025000000000000001");
        assert!(!fmt_sig17(1e-300).contains('e'));
    }

    #[test]
    fn sig17_round_trips_edge_values() {
        for x in [
            f64::MIN_POSITIVE,
            f64::MAX,
            -f64::MAX,
            5e-324,
            0.999_999_999_999_999_9,
            1.0 / 3.0,
        ] {
            assert_eq!(fmt_sig17(x).parse::<f64>().unwrap(), x, "{x}");
        }
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nested").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        let leftovers = std::fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn table_alignment() {
        let t = text_table(&["a", "bb"], &[vec!["long".into(), "x".into()]]);
        assert_eq!(t, "a     bb\nlong  x\n");
    }
}
