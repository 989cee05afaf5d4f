//! Point-cloud and correspondence files.
//!
//! XYZ: one point per line as three whitespace-separated decimals; `#`
//! starts a comment, blank lines are ignored.
//!
//! PLY: ASCII 1.0 only. The `vertex` element's `x`, `y` and `z` properties
//! are read; every other element and property is skipped. Writing emits a
//! single `vertex` element with `double` coordinates.
//!
//! Coordinates are written with the shortest representation that parses
//! back to the same `f64`, so save-then-load is exact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::icp::CorrespondencePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
}

impl CloudFormat {
    /// `.ply` selects PLY; anything else is read as XYZ.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::Xyz,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct LineParser<'a> {
    path: &'a Path,
    line_no: usize,
    line: &'a str,
}

impl LineParser<'_> {
    fn error(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line_no,
            column,
            message: message.into(),
        }
    }

    /// Whitespace-separated tokens with their 1-based columns.
    fn tokens(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in self.line.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    out.push((s + 1, &self.line[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s + 1, &self.line[s..]));
        }
        out
    }

    fn number(&self, column: usize, token: &str) -> Result<f64> {
        let v: f64 = token
            .parse()
            .map_err(|_| self.error(column, format!("expected a number, found `{token}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFiniteCoordinate {
                path: self.path.to_path_buf(),
                line: self.line_no,
            });
        }
        Ok(v)
    }

    fn numbers<const N: usize>(&self) -> Result<[f64; N]> {
        let tokens = self.tokens();
        if tokens.len() != N {
            let column = tokens.get(N).map_or(self.line.len() + 1, |t| t.0);
            return Err(self.error(
                column,
                format!("expected {N} values, found {}", tokens.len()),
            ));
        }
        let mut out = [0.0; N];
        for (slot, (column, token)) in out.iter_mut().zip(tokens) {
            *slot = self.number(column, token)?;
        }
        Ok(out)
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

fn cloud_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let parser = LineParser {
            path,
            line_no: i + 1,
            line,
        };
        let [x, y, z] = parser.numbers::<3>()?;
        points.push(Point3::new(x, y, z));
    }
    Ok(PointCloud::with_id(points, cloud_id(path)))
}

struct PlyElement {
    name: String,
    count: usize,
    /// `None` for list properties.
    properties: Vec<(String, bool)>,
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let header_error = |line_no: usize, message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        column: 1,
        message: message.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(header_error(1, "missing `ply` magic line")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((i, raw)) = lines.next() else {
            return Err(header_error(text.lines().count(), "missing `end_header`"));
        };
        let words: Vec<&str> = raw.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", "1.0"] => saw_format = true,
            ["format", other, ..] => {
                return Err(header_error(i + 1, &format!("unsupported PLY format `{other}`; only ascii 1.0 is read")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| header_error(i + 1, "element count is not an integer"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => match elements.last_mut() {
                Some(e) => e.properties.push((name.to_string(), true)),
                None => return Err(header_error(i + 1, "property before any element")),
            },
            ["property", _, name] => match elements.last_mut() {
                Some(e) => e.properties.push((name.to_string(), false)),
                None => return Err(header_error(i + 1, "property before any element")),
            },
            ["end_header"] => break,
            _ => return Err(header_error(i + 1, &format!("unrecognized header line `{}`", raw.trim()))),
        }
    }
    if !saw_format {
        return Err(header_error(1, "missing `format` line"));
    }

    let mut points = Vec::new();
    for element in &elements {
        let axes = if element.name == "vertex" {
            let find = |axis: &str| {
                element
                    .properties
                    .iter()
                    .position(|(n, list)| n == axis && !list)
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(header_error(1, "vertex element lacks x/y/z properties")),
            }
        } else {
            None
        };
        let mut read = 0;
        while read < element.count {
            let Some((i, raw)) = lines.next() else {
                return Err(header_error(
                    text.lines().count(),
                    &format!("file ends before all {} `{}` entries", element.count, element.name),
                ));
            };
            if raw.trim().is_empty() {
                continue;
            }
            read += 1;
            let Some(axes) = axes else { continue };
            let parser = LineParser {
                path,
                line_no: i + 1,
                line: raw,
            };
            let tokens = parser.tokens();
            // Walk properties, expanding lists, to find each scalar's token.
            let mut slots = Vec::with_capacity(element.properties.len());
            let mut cursor = 0;
            for (_, is_list) in &element.properties {
                slots.push(cursor);
                if *is_list {
                    let (column, token) = *tokens
                        .get(cursor)
                        .ok_or_else(|| parser.error(raw.len() + 1, "missing list length"))?;
                    let n: usize = token
                        .parse()
                        .map_err(|_| parser.error(column, "list length is not an integer"))?;
                    cursor += 1 + n;
                } else {
                    cursor += 1;
                }
            }
            if tokens.len() < cursor {
                return Err(parser.error(
                    raw.len() + 1,
                    format!("expected {cursor} values, found {}", tokens.len()),
                ));
            }
            let mut xyz = [0.0; 3];
            for (value, &prop) in xyz.iter_mut().zip(&axes) {
                let (column, token) = tokens[slots[prop]];
                *value = parser.number(column, token)?;
            }
            points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
        }
    }
    Ok(PointCloud::with_id(points, cloud_id(path)))
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = read_text(path)?;
    match format {
        CloudFormat::Xyz => parse_xyz(&text, path),
        CloudFormat::PlyAscii => parse_ply(&text, path),
    }
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> String {
    let mut out = String::new();
    if format == CloudFormat::PlyAscii {
        let _ = write!(
            out,
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
            cloud.len()
        );
    }
    for p in cloud.iter() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    write_atomic(path, format_cloud(cloud, format).as_bytes())
}

/// Reads `sx sy sz tx ty tz` lines.
pub fn parse_correspondences(text: &str, path: &Path) -> Result<Vec<CorrespondencePair>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let parser = LineParser {
            path,
            line_no: i + 1,
            line,
        };
        let [sx, sy, sz, tx, ty, tz] = parser.numbers::<6>()?;
        pairs.push(CorrespondencePair::new(
            Point3::new(sx, sy, sz),
            Point3::new(tx, ty, tz),
        ));
    }
    Ok(pairs)
}

pub fn load_correspondences(path: &Path) -> Result<Vec<CorrespondencePair>> {
    parse_correspondences(&read_text(path)?, path)
}

pub fn format_correspondences(pairs: &[CorrespondencePair]) -> String {
    let mut out = String::from("# sx sy sz tx ty tz\n");
    for p in pairs {
        let (s, t) = (p.source_point, p.target_point);
        let _ = writeln!(out, "{} {} {} {} {} {}", s.x, s.y, s.z, t.x, t.y, t.z);
    }
    out
}

/// Path with `suffix` appended to the full file name.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test.xyz")
    }

    #[test]
    fn xyz_basics() {
        let c = parse_xyz("0 0 0\n1 2 3\n", p()).unwrap();
        assert_eq!(c.points, vec![Point3::origin(), Point3::new(1.0, 2.0, 3.0)]);
        let c = parse_xyz("# header\n\n  4 5 6 # trailing\n\t7\t8\t9\n", p()).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn xyz_errors_name_the_line() {
        match parse_xyz("0 0 0\n1 nan 3\n", p()) {
            Err(Error::NonFiniteCoordinate { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_xyz("0 0 0\n1 2\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_xyz("1 2 3 4\n", p()) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 7)),
            other => panic!("{other:?}"),
        }
        match parse_xyz("1 2 abc\n", p()) {
            Err(Error::Parse { column, message, .. }) => {
                assert_eq!(column, 5);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ply_with_extra_elements_and_properties() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float y\nproperty uchar red\nproperty float x\nproperty list uchar int tags\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n2 255 1 2 7 8 3\n5 0 4 0 6\n3 0 1 1\n";
        let c = parse_ply(text, Path::new("a.ply")).unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn ply_empty_and_errors() {
        let empty = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(parse_ply(empty, Path::new("e.ply")).unwrap().is_empty());
        let binary = empty.replace("ascii", "binary_little_endian");
        assert!(matches!(parse_ply(&binary, Path::new("b.ply")), Err(Error::Parse { line: 2, .. })));
        let short = empty.replace("vertex 0", "vertex 2") + "1 2 3\n";
        assert!(matches!(parse_ply(&short, Path::new("s.ply")), Err(Error::Parse { .. })));
        let nan = empty.replace("vertex 0", "vertex 1") + "1 inf 3\n";
        assert!(matches!(
            parse_ply(&nan, Path::new("n.ply")),
            Err(Error::NonFiniteCoordinate { line: 8, .. })
        ));
        assert!(matches!(parse_ply("hello\n", Path::new("h.ply")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_cloud_files() {
        let empty = PointCloud::default();
        assert_eq!(format_cloud(&empty, CloudFormat::Xyz), "");
        let ply = format_cloud(&empty, CloudFormat::PlyAscii);
        assert!(ply.ends_with("end_header\n"));
        assert!(parse_ply(&ply, Path::new("e.ply")).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![Point3::new(0.1, -2.5e-7, 3.0e12), Point3::new(1.0 / 3.0, 2.0, -0.0)]);
        for (name, format) in [("c.xyz", CloudFormat::Xyz), ("c.ply", CloudFormat::PlyAscii)] {
            let path = dir.path().join(name);
            assert_eq!(CloudFormat::from_path(&path), format);
            save_cloud(&cloud, &path, format).unwrap();
            assert_eq!(load_cloud(&path, format).unwrap().points, cloud.points);
        }
        let missing = dir.path().join("nope.xyz");
        match load_cloud(&missing, CloudFormat::Xyz) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn correspondences() {
        let text = "# marked by hand\n1 2 3 4 5 6\n\n7 8 9 10 11 12 # last\n";
        let pairs = parse_correspondences(text, Path::new("c.txt")).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].target_point, Point3::new(10.0, 11.0, 12.0));
        let again = parse_correspondences(&format_correspondences(&pairs), Path::new("c.txt")).unwrap();
        assert_eq!(again, pairs);
        assert!(matches!(
            parse_correspondences("1 2 3 4 5\n", Path::new("c.txt")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            pts in prop::collection::vec(prop::array::uniform3(prop::num::f64::NORMAL | prop::num::f64::ZERO), 0..40),
            ply in any::<bool>(),
        ) {
            let cloud = PointCloud::new(pts.into_iter().map(Point3::from).collect());
            let format = if ply { CloudFormat::PlyAscii } else { CloudFormat::Xyz };
            let text = format_cloud(&cloud, format);
            let back = match format {
                CloudFormat::Xyz => parse_xyz(&text, Path::new("p.xyz")),
                CloudFormat::PlyAscii => parse_ply(&text, Path::new("p.ply")),
            }.unwrap();
            prop_assert_eq!(back.points, cloud.points);
        }
    }
}
