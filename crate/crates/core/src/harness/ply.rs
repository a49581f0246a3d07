//! ASCII PLY vertex reader.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::linalg::Point3;

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    /// Property rows are variable-length (`property list ...`).
    has_list: bool,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_ply(&text)
}

/// Reads `x`, `y`, `z` of every vertex; everything else is skipped.
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(n, "missing `ply` magic")),
        None => return Err(parse_err(1, "empty file")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(n, "only `format ascii` is supported"));
                }
                saw_format = true;
            }
            Some("element") => {
                let (Some(name), Some(count)) = (tok.next(), tok.next()) else {
                    return Err(parse_err(n, "element needs a name and a count"));
                };
                let count = count
                    .parse()
                    .map_err(|_| parse_err(n, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let Some(el) = elements.last_mut() else {
                    return Err(parse_err(n, "property before any element"));
                };
                let rest: Vec<&str> = tok.collect();
                match rest.as_slice() {
                    ["list", _, _, name] => {
                        el.has_list = true;
                        el.properties.push(name.to_string());
                    }
                    [_, name] => el.properties.push(name.to_string()),
                    _ => return Err(parse_err(n, "malformed property line")),
                }
            }
            Some("end_header") => {
                header_end = Some(n);
                break;
            }
            Some(other) => return Err(parse_err(n, format!("unexpected header keyword `{other}`"))),
        }
    }
    let Some(header_end) = header_end else {
        return Err(parse_err(text.lines().count().max(1), "missing end_header"));
    };
    if !saw_format {
        return Err(parse_err(header_end, "missing format line"));
    }
    let Some(vertex) = elements.iter().find(|e| e.name == "vertex") else {
        return Err(parse_err(header_end, "no vertex element"));
    };
    if vertex.has_list {
        return Err(parse_err(header_end, "list properties on vertices are not supported"));
    }
    let col = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| parse_err(header_end, format!("vertex element lacks `{axis}`")))
    };
    let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);

    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut points = Vec::with_capacity(vertex.count);
    let mut last_line = header_end;
    for el in &elements {
        for found in 0..el.count {
            let Some((n, line)) = body.next() else {
                return Err(parse_err(
                    last_line,
                    format!("expected {} {} entries, found {found}", el.count, el.name),
                ));
            };
            last_line = n;
            if el.name != "vertex" {
                continue;
            }
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() < el.properties.len() {
                return Err(parse_err(
                    n,
                    format!("expected {} values, found {}", el.properties.len(), values.len()),
                ));
            }
            let get = |c: usize| -> Result<f64> {
                values[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(n, format!("bad coordinate `{}`", values[c])))
            };
            points.push(Point3::new(get(cx)?, get(cy)?, get(cz)?));
        }
    }
    if points.is_empty() {
        return Err(parse_err(header_end, "no vertices"));
    }
    Ok(PointCloud::new(points).with_diameter())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "ply
format ascii 1.0
comment unit cube
element vertex 8
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
1 1 0
0 0 1
1 0 1
0 1 1
1 1 1
4 0 1 3 2
";

    #[test]
    fn unit_cube() {
        let c = parse_ply(CUBE).unwrap();
        assert_eq!(c.len(), 8);
        assert!((c.diameter() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn extra_properties_are_ignored() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty uchar red\nproperty float x\nproperty float y\nproperty float z\nproperty uchar green\nend_header\n255 1 2 3 0\n0 4 5 6 9\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn truncated_vertex_list() {
        let text = CUBE.lines().take(12).collect::<Vec<_>>().join("\n");
        let err = parse_ply(&text).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 12);
                assert!(message.contains("expected 8"), "{message}");
                assert!(message.contains("found 2"), "{message}");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(parse_ply("plx\n"), Err(Error::Parse { line: 1, .. })));
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(parse_ply(bin), Err(Error::Parse { line: 2, .. })));
        let bad_count = "ply\nformat ascii 1.0\nelement vertex lots\nend_header\n";
        assert!(matches!(parse_ply(bad_count), Err(Error::Parse { line: 3, .. })));
        let no_z = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n";
        assert!(matches!(parse_ply(no_z), Err(Error::Parse { line: 6, .. })));
        let short_row = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2\n";
        assert!(matches!(parse_ply(short_row), Err(Error::Parse { line: 8, .. })));
    }
}
