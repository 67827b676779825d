//! Channel file reader/writer.
//!
//! Layout:
//!
//! ```text
//! K,N_c,N_T          <- dimension header (numbers, e.g. `3,32,8`)
//! k,i,p,re,im        <- column names (optional when reading)
//! 0,0,0,1.2345678901234567e-5,-3.0000000000000000e-6
//! ...
//! ```
//!
//! Every `(k, i, p)` triple must appear exactly once. Values are written with
//! 17 significant digits so that a save/load cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{IsacError, Result};
use crate::scenario::ChannelSet;

pub const COLUMNS: &str = "k,i,p,re,im";

pub fn channels_to_string(channels: &ChannelSet) -> String {
    let (k, n_c, n_t) = (channels.n_users(), channels.n_sc(), channels.n_tx());
    let mut out = String::with_capacity(64 * k * n_c * n_t + 32);
    let _ = writeln!(out, "{k},{n_c},{n_t}");
    let _ = writeln!(out, "{COLUMNS}");
    for u in 0..k {
        for i in 0..n_c {
            for (p, h) in channels.h(u, i).iter().enumerate() {
                let _ = writeln!(out, "{u},{i},{p},{:.16e},{:.16e}", h.re, h.im);
            }
        }
    }
    out
}

pub fn save_channels(channels: &ChannelSet, path: &Path) -> Result<()> {
    fs::write(path, channels_to_string(channels)).map_err(|source| IsacError::Io { path: path.to_path_buf(), source })
}

pub fn load_channels(path: &Path) -> Result<ChannelSet> {
    let text = fs::read_to_string(path).map_err(|source| IsacError::Io { path: path.to_path_buf(), source })?;
    parse_channels(&text, path)
}

pub fn parse_channels(text: &str, path: &Path) -> Result<ChannelSet> {
    let perr = |line: usize, field: &str, msg: String| IsacError::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        msg,
    };

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "K,N_c,N_T", "empty file".into()))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 3 {
        return Err(perr(hl + 1, "K,N_c,N_T", format!("expected 3 header fields, got {}", dims.len())));
    }
    let mut parsed = [0usize; 3];
    for (slot, (name, raw)) in parsed.iter_mut().zip(["K", "N_c", "N_T"].iter().zip(&dims)) {
        *slot = raw.parse().map_err(|_| perr(hl + 1, name, format!("`{raw}` is not a non-negative integer")))?;
    }
    let [k, n_c, n_t] = parsed;
    if k == 0 || n_c == 0 || n_t == 0 {
        return Err(IsacError::dim(format!("header dimensions must be >= 1, got {k},{n_c},{n_t}")));
    }

    let total = k * n_c * n_t;
    let mut h = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    let mut count = 0usize;
    let names = ["k", "i", "p", "re", "im"];

    for (ln, line) in lines {
        let line_no = ln + 1;
        if line.trim() == COLUMNS {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(perr(line_no, "row", format!("expected 5 fields, got {}", fields.len())));
        }
        let mut idx = [0usize; 3];
        for c in 0..3 {
            idx[c] =
                fields[c].parse().map_err(|_| perr(line_no, names[c], format!("`{}` is not an index", fields[c])))?;
        }
        let mut val = [0f64; 2];
        for c in 0..2 {
            val[c] = fields[3 + c]
                .parse()
                .map_err(|_| perr(line_no, names[3 + c], format!("`{}` is not a number", fields[3 + c])))?;
            if !val[c].is_finite() {
                return Err(perr(line_no, names[3 + c], "value is not finite".into()));
            }
        }
        let [u, i, p] = idx;
        if u >= k || i >= n_c || p >= n_t {
            return Err(IsacError::dim(format!(
                "line {line_no}: index ({u},{i},{p}) outside header dimensions {k},{n_c},{n_t}"
            )));
        }
        let flat = (u * n_c + i) * n_t + p;
        if seen[flat] {
            return Err(perr(line_no, "row", format!("duplicate entry ({u},{i},{p})")));
        }
        seen[flat] = true;
        h[flat] = Complex64::new(val[0], val[1]);
        count += 1;
    }

    if count != total {
        let missing_user = (0..k).find(|&u| seen[u * n_c * n_t..(u + 1) * n_c * n_t].iter().any(|s| !s));
        return Err(IsacError::dim(format!(
            "header declares {k} users x {n_c} subcarriers x {n_t} antennas = {total} entries, found {count}{}",
            missing_user.map(|u| format!(" (user {u} incomplete)")).unwrap_or_default()
        )));
    }
    ChannelSet::from_flat(k, n_c, n_t, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn header_user_count_mismatch_is_dimension_error() {
        let mut text = String::from("3,1,1\nk,i,p,re,im\n");
        text.push_str("0,0,0,1.0,0.0\n1,0,0,2.0,0.5\n");
        let err = parse_channels(&text, p()).unwrap_err();
        assert!(matches!(err, IsacError::Dimension(_)), "{err}");
        assert!(err.to_string().contains("user 2"));
    }

    #[test]
    fn non_numeric_field_reports_location() {
        let text = "1,1,2\nk,i,p,re,im\n0,0,0,1.0,0.0\n0,0,1,abc,0.0\n";
        match parse_channels(text, p()).unwrap_err() {
            IsacError::Parse { line, field, .. } => {
                assert_eq!(line, 4);
                assert_eq!(field, "re");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_and_out_of_range_rows() {
        let dup = "1,1,1\n0,0,0,1,0\n0,0,0,1,0\n";
        assert!(matches!(parse_channels(dup, p()), Err(IsacError::Parse { .. })));
        let oob = "1,1,1\n0,3,0,1,0\n";
        assert!(matches!(parse_channels(oob, p()), Err(IsacError::Dimension(_))));
    }

    #[test]
    fn save_load_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h: Vec<_> =
            (0..2 * 3 * 4).map(|n| Complex64::new((n as f64 * 0.37).sin() * 1e-5, (n as f64).cos() / 3.0)).collect();
        let c = ChannelSet::from_flat(2, 3, 4, h).unwrap();
        save_channels(&c, &path).unwrap();
        assert_eq!(load_channels(&path).unwrap(), c);
        assert!(matches!(load_channels(&dir.path().join("missing.csv")), Err(IsacError::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            vals in prop::collection::vec((-1e3f64..1e3, -1e-9f64..1e-9), 12),
            scale in -30i32..5,
        ) {
            let s = 10f64.powi(scale);
            let h: Vec<_> = vals.iter().map(|&(a, b)| Complex64::new(a * s, b)).collect();
            let c = ChannelSet::from_flat(1, 3, 4, h).unwrap();
            let back = parse_channels(&channels_to_string(&c), p()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
