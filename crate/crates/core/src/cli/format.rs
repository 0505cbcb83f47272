//! Datum, state and Hamiltonian files.
//!
//! A datum is read either from TOML
//!
//! ```toml
//! version = 1
//! m = 1
//! p = [1.0, 1.0]
//!
//! [[maps]]
//! label = "Q"
//! kind = "classical"
//! rows = [[1.0, 0.0]]
//!
//! [[maps]]
//! rows = [[0.0, 1.0]]
//! ```
//!
//! or from CSV blocks, where `m,<modes>` and `p,<w1>,<w2>,...` set the header
//! and every `map[,kind[,label]]` line opens a block of numeric rows:
//!
//! ```text
//! m,1
//! p,1,1
//! map,classical,Q
//! 1,0
//! map
//! 0,1
//! ```
//!
//! Lines starting with `#` and blank lines are ignored in CSV input.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use toml::Spanned;

use crate::datum::{BLDatum, BLMap};
use crate::entropy::{GaussianJoint, SystemKind};
use crate::error::{Error, Result};
use crate::symplectic::{self, CovMatrix, MapKind};
use crate::apps::QuadHamiltonian;

pub const FORMAT_VERSION: i64 = 1;

/// A parsed datum together with the optional per-map labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatumFile {
    pub datum: BLDatum,
    pub labels: Vec<Option<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDatum {
    version: Spanned<i64>,
    m: Spanned<i64>,
    p: Spanned<Vec<f64>>,
    #[serde(default)]
    maps: Vec<RawMap>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    rows: Spanned<Vec<Vec<f64>>>,
    kind: Option<Spanned<String>>,
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    version: Spanned<i64>,
    x_dim: Spanned<i64>,
    kind: Option<Spanned<String>>,
    cov: Spanned<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHamiltonian {
    version: Spanned<i64>,
    m1: Spanned<i64>,
    m2: Spanned<i64>,
    h: Spanned<Vec<Vec<f64>>>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse_error(src: &str, span: &std::ops::Range<usize>, message: impl Into<String>) -> Error {
    Error::Parse { line: line_of(src, span.start), message: message.into() }
}

fn toml_error(src: &str, e: toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| line_of(src, s.start));
    Error::Parse { line, message: e.message().to_string() }
}

fn check_version(src: &str, v: &Spanned<i64>) -> Result<()> {
    if *v.get_ref() != FORMAT_VERSION {
        return Err(parse_error(src, &v.span(), format!("unsupported version {}", v.get_ref())));
    }
    Ok(())
}

fn positive(src: &str, v: &Spanned<i64>, field: &str) -> Result<usize> {
    match usize::try_from(*v.get_ref()) {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(parse_error(src, &v.span(), format!("{field} must be a positive integer"))),
    }
}

fn nonnegative(src: &str, v: &Spanned<i64>, field: &str) -> Result<usize> {
    usize::try_from(*v.get_ref())
        .map_err(|_| parse_error(src, &v.span(), format!("{field} must be a nonnegative integer")))
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err("matrix has no entries".into());
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(format!("row {} has {} entries, expected {ncols}", i + 1, rows[i].len()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err("matrix entries must be finite".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn parse_kind(s: &str) -> Option<MapKind> {
    match s.to_ascii_lowercase().as_str() {
        "quantum" => Some(MapKind::Quantum),
        "classical" => Some(MapKind::Classical),
        _ => None,
    }
}

fn parse_system_kind(s: &str) -> Option<SystemKind> {
    parse_kind(s).map(SystemKind::from)
}

fn kind_name(k: Option<MapKind>) -> String {
    k.map_or_else(|| "unclassified".to_string(), |k| k.to_string())
}

struct MapEntry {
    matrix: DMatrix<f64>,
    declared: Option<MapKind>,
    label: Option<String>,
}

fn assemble(modes: usize, entries: Vec<MapEntry>, weights: Vec<f64>) -> Result<DatumFile> {
    let mut maps = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for (index, e) in entries.into_iter().enumerate() {
        let map = BLMap::new(e.matrix)?;
        if let Some(declared) = e.declared {
            if map.kind() != Some(declared) {
                return Err(Error::KindMismatch {
                    index,
                    declared: declared.to_string(),
                    actual: kind_name(map.kind()),
                });
            }
        }
        maps.push(map);
        labels.push(e.label);
    }
    Ok(DatumFile { datum: BLDatum::new(modes, maps, weights)?, labels })
}

pub fn parse_datum_toml(src: &str) -> Result<DatumFile> {
    let raw: RawDatum = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    check_version(src, &raw.version)?;
    let modes = positive(src, &raw.m, "m")?;
    if raw.maps.is_empty() {
        return Err(Error::Parse { line: 0, message: "datum has no maps".into() });
    }
    if raw.p.get_ref().len() != raw.maps.len() {
        return Err(parse_error(
            src,
            &raw.p.span(),
            format!("p has {} weights but there are {} maps", raw.p.get_ref().len(), raw.maps.len()),
        ));
    }
    let mut entries = Vec::with_capacity(raw.maps.len());
    for (i, m) in raw.maps.into_iter().enumerate() {
        let matrix = rows_to_matrix(m.rows.get_ref())
            .map_err(|msg| parse_error(src, &m.rows.span(), format!("maps[{i}].rows: {msg}")))?;
        let declared = match &m.kind {
            None => None,
            Some(k) => Some(parse_kind(k.get_ref()).ok_or_else(|| {
                parse_error(src, &k.span(), format!("maps[{i}].kind: unknown kind {:?}", k.get_ref()))
            })?),
        };
        entries.push(MapEntry { matrix, declared, label: m.label });
    }
    assemble(modes, entries, raw.p.into_inner())
}

fn csv_floats(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .enumerate()
        .map(|(j, f)| {
            f.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("field {}: cannot parse {:?} as a number", j + 1, f.trim()),
            })
        })
        .collect()
}

pub fn parse_datum_csv(src: &str) -> Result<DatumFile> {
    let mut modes = None;
    let mut weights = None;
    // (declared kind, label, rows, line of the block header)
    let mut blocks: Vec<(Option<MapKind>, Option<String>, Vec<Vec<f64>>, usize)> = Vec::new();
    for (k, raw_line) in src.lines().enumerate() {
        let line = k + 1;
        let text = raw_line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        match fields[0] {
            "m" => {
                if fields.len() != 2 {
                    return Err(Error::Parse { line, message: "expected `m,<modes>`".into() });
                }
                match fields[1].parse::<usize>() {
                    Ok(n) if n > 0 => modes = Some(n),
                    _ => {
                        return Err(Error::Parse { line, message: "m must be a positive integer".into() })
                    }
                }
            }
            "p" => weights = Some(csv_floats(&fields[1..], line)?),
            "map" => {
                if fields.len() > 3 {
                    return Err(Error::Parse { line, message: "expected `map[,kind[,label]]`".into() });
                }
                let declared = match fields.get(1).filter(|s| !s.is_empty()) {
                    None => None,
                    Some(s) => Some(parse_kind(s).ok_or_else(|| Error::Parse {
                        line,
                        message: format!("field 2: unknown kind {s:?}"),
                    })?),
                };
                let label = fields.get(2).filter(|s| !s.is_empty()).map(|s| s.to_string());
                blocks.push((declared, label, Vec::new(), line));
            }
            _ => {
                let row = csv_floats(&fields, line)?;
                match blocks.last_mut() {
                    Some(b) => b.2.push(row),
                    None => return Err(Error::Parse { line, message: "matrix row outside a map block".into() }),
                }
            }
        }
    }
    let modes = modes.ok_or(Error::Parse { line: 0, message: "missing `m` line".into() })?;
    let weights = weights.ok_or(Error::Parse { line: 0, message: "missing `p` line".into() })?;
    if blocks.is_empty() {
        return Err(Error::Parse { line: 0, message: "datum has no maps".into() });
    }
    if weights.len() != blocks.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("p has {} weights but there are {} maps", weights.len(), blocks.len()),
        });
    }
    let mut entries = Vec::with_capacity(blocks.len());
    for (i, (declared, label, rows, line)) in blocks.into_iter().enumerate() {
        let matrix =
            rows_to_matrix(&rows).map_err(|msg| Error::Parse { line, message: format!("map {i}: {msg}") })?;
        entries.push(MapEntry { matrix, declared, label });
    }
    assemble(modes, entries, weights)
}

fn is_csv(path: &Path, src: &str) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => true,
        Some(e) if e.eq_ignore_ascii_case("toml") => false,
        _ => src
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .is_some_and(|l| l.starts_with("m,")),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a datum in either format, chosen by extension and then by content.
pub fn parse_datum(path: &Path) -> Result<DatumFile> {
    let src = read(path)?;
    if is_csv(path, &src) {
        parse_datum_csv(&src)
    } else {
        parse_datum_toml(&src)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn toml_rows(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| format!("[{}]", r.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn datum_to_toml(file: &DatumFile) -> String {
    let d = &file.datum;
    let mut s = String::new();
    let weights: Vec<String> = d.weights().iter().map(|&w| num(w)).collect();
    let _ = writeln!(s, "version = {FORMAT_VERSION}\nm = {}\np = [{}]", d.modes(), weights.join(", "));
    for (i, map) in d.maps().iter().enumerate() {
        s.push_str("\n[[maps]]\n");
        if let Some(Some(label)) = file.labels.get(i) {
            let _ = writeln!(s, "label = {label:?}");
        }
        if let Some(k) = map.kind() {
            let _ = writeln!(s, "kind = \"{k}\"");
        }
        let _ = writeln!(s, "rows = {}", toml_rows(map.matrix()));
    }
    s
}

pub fn datum_to_csv(file: &DatumFile) -> String {
    let d = &file.datum;
    let mut s = String::new();
    let weights: Vec<String> = d.weights().iter().map(|&w| num(w)).collect();
    let _ = writeln!(s, "m,{}\np,{}", d.modes(), weights.join(","));
    for (i, map) in d.maps().iter().enumerate() {
        s.push_str("map");
        let label = file.labels.get(i).cloned().flatten();
        match (map.kind(), label) {
            (k, Some(l)) => {
                let _ = write!(s, ",{},{l}", k.map(|k| k.to_string()).unwrap_or_default());
            }
            (Some(k), None) => {
                let _ = write!(s, ",{k}");
            }
            (None, None) => {}
        }
        s.push('\n');
        for r in map.matrix().row_iter() {
            let _ = writeln!(s, "{}", r.iter().map(|&x| num(x)).collect::<Vec<_>>().join(","));
        }
    }
    s
}

pub fn parse_state_str(src: &str) -> Result<GaussianJoint> {
    let raw: RawState = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    check_version(src, &raw.version)?;
    let x_dim = positive(src, &raw.x_dim, "x_dim")?;
    let kind = match &raw.kind {
        None => SystemKind::Quantum,
        Some(k) => parse_system_kind(k.get_ref())
            .ok_or_else(|| parse_error(src, &k.span(), format!("kind: unknown kind {:?}", k.get_ref())))?,
    };
    let m = rows_to_matrix(raw.cov.get_ref()).map_err(|msg| parse_error(src, &raw.cov.span(), format!("cov: {msg}")))?;
    if !m.is_square() {
        return Err(parse_error(src, &raw.cov.span(), "cov must be square"));
    }
    let joint = GaussianJoint::new(CovMatrix::new(m)?, x_dim, kind)?;
    check_physical(&joint)?;
    Ok(joint)
}

/// A quantum covariance for quantum `X`; otherwise positive definite with a
/// quantum memory block.
fn check_physical(joint: &GaussianJoint) -> Result<()> {
    let quantum = |g: &CovMatrix| -> Result<()> {
        if symplectic::is_quantum_covariance(g, symplectic::STATE_TOL) {
            Ok(())
        } else {
            Err(Error::StateInvalid { nu_min: symplectic::nu_min(g).unwrap_or(f64::NAN) })
        }
    };
    match joint.kind_x() {
        SystemKind::Quantum => quantum(joint.cov()),
        SystemKind::Classical => {
            if !joint.cov().is_positive_definite() {
                return Err(Error::InvalidArgument("cov is not positive definite".into()));
            }
            if joint.m_dim() > 0 {
                quantum(&joint.m_block())?;
            }
            Ok(())
        }
    }
}

/// Reads a joint state `γ_XM` with `X` the leading `x_dim` coordinates.
pub fn parse_state(path: &Path) -> Result<GaussianJoint> {
    parse_state_str(&read(path)?)
}

pub fn state_to_toml(joint: &GaussianJoint) -> String {
    let kind = match joint.kind_x() {
        SystemKind::Quantum => "quantum",
        SystemKind::Classical => "classical",
    };
    format!(
        "version = {FORMAT_VERSION}\nx_dim = {}\nkind = \"{kind}\"\ncov = {}\n",
        joint.x_dim(),
        toml_rows(joint.cov().matrix())
    )
}

pub fn parse_hamiltonian_str(src: &str) -> Result<QuadHamiltonian> {
    let raw: RawHamiltonian = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    check_version(src, &raw.version)?;
    let m1 = positive(src, &raw.m1, "m1")?;
    let m2 = nonnegative(src, &raw.m2, "m2")?;
    let h = rows_to_matrix(raw.h.get_ref()).map_err(|msg| parse_error(src, &raw.h.span(), format!("h: {msg}")))?;
    QuadHamiltonian::new(h, m1, m2)
}

pub fn parse_hamiltonian(path: &Path) -> Result<QuadHamiltonian> {
    parse_hamiltonian_str(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EUR: &str = "version = 1\nm = 1\np = [1.0, 1.0]\n\n[[maps]]\nkind = \"classical\"\nrows = [[1.0, 0.0]]\n\n[[maps]]\nkind = \"classical\"\nrows = [[0.0, 1.0]]\n";

    #[test]
    fn toml_datum() {
        let f = parse_datum_toml(EUR).unwrap();
        assert_eq!(f.datum.len(), 2);
        assert_eq!(f.datum.weights(), &[1.0, 1.0]);
        assert!(f.datum.maps().iter().all(|m| m.kind() == Some(MapKind::Classical)));
    }

    #[test]
    fn declared_kind_is_checked() {
        let src = EUR.replacen("classical", "quantum", 1);
        match parse_datum_toml(&src) {
            Err(Error::KindMismatch { index, declared, actual }) => {
                assert_eq!(index, 0);
                assert_eq!(declared, "quantum");
                assert_eq!(actual, "classical");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_maps_rejected() {
        let src = "version = 1\nm = 1\np = []\n";
        assert!(matches!(parse_datum_toml(src), Err(Error::Parse { .. })));
    }

    #[test]
    fn ragged_rows_report_line() {
        let src = "version = 1\nm = 1\np = [2.0]\n\n[[maps]]\nrows = [[1.0, 0.0], [0.0]]\n";
        match parse_datum_toml(src) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("maps[0].rows"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        let src = "version = 1\nm = 1\np = [1.0,\n";
        match parse_datum_toml(src) {
            Err(Error::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_datum_and_round_trip() {
        let src = "# position and momentum\nm,1\np,1,1\nmap,classical,Q\n1,0\nmap\n0,1\n";
        let f = parse_datum_csv(src).unwrap();
        assert_eq!(f.labels, vec![Some("Q".to_string()), None]);
        assert_eq!(parse_datum_csv(&datum_to_csv(&f)).unwrap(), f);
        assert_eq!(parse_datum_toml(&datum_to_toml(&f)).unwrap(), f);
    }

    #[test]
    fn csv_bad_number_reports_line_and_field() {
        let src = "m,1\np,2\nmap\n1,x\n";
        match parse_datum_csv(src) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("field 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn awkward_floats_round_trip() {
        let a = 0.1 + 0.2;
        let src = format!("m,1\np,2\nmap\n{},{}\n{},{}\n", num(a), num(-1.5e-7), num(1.0 / 3.0), num(7e3));
        let f = parse_datum_csv(&src).unwrap();
        let back = parse_datum_toml(&datum_to_toml(&f)).unwrap();
        assert_eq!(back.datum.maps()[0].matrix(), f.datum.maps()[0].matrix());
        assert_eq!(back.datum.maps()[0].matrix()[(0, 0)], a);
    }

    #[test]
    fn state_file() {
        let src = "version = 1\nx_dim = 2\nkind = \"quantum\"\ncov = [[1.0, 0.0], [0.0, 1.0]]\n";
        let j = parse_state_str(src).unwrap();
        assert_eq!(j.x_dim(), 2);
        assert_eq!(parse_state_str(&state_to_toml(&j)).unwrap(), j);
        let bad = src.replace("1.0, 0.0]", "0.1, 0.0]");
        assert!(matches!(parse_state_str(&bad), Err(Error::StateInvalid { .. })));
    }

    #[test]
    fn hamiltonian_file() {
        let src = "version = 1\nm1 = 1\nm2 = 1\nh = [[0.0,0.0,1.0,0.0],[0.0,0.0,0.0,-1.0],[1.0,0.0,0.0,0.0],[0.0,-1.0,0.0,0.0]]\n";
        let h = parse_hamiltonian_str(src).unwrap();
        assert!(h.is_symmetric());
        assert_eq!(h.partition(), (1, 1));
    }
}
