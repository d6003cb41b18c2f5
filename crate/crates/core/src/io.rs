//! Point cloud files: whitespace-separated xyz, csv with a header row, and
//! ASCII ply (vertex x/y/z only).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    Xyz,
    Csv,
    PlyAscii,
}

impl CloudFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "xyz" | "txt" => Ok(CloudFormat::Xyz),
            "csv" => Ok(CloudFormat::Csv),
            "ply" => Ok(CloudFormat::PlyAscii),
            _ => Err(Error::Config(format!(
                "cannot infer cloud format from '{}'; use .xyz, .csv or .ply",
                path.display()
            ))),
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudFormat::Xyz),
            "csv" => Ok(CloudFormat::Csv),
            "ply" | "ply-ascii" => Ok(CloudFormat::PlyAscii),
            other => Err(Error::Config(format!("unknown cloud format '{other}'"))),
        }
    }
}

/// A parsed cloud plus any non-fatal warnings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub cloud: PointCloud,
    pub warnings: Vec<String>,
}

pub fn load_cloud(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    let format = match format {
        Some(f) => f,
        None => CloudFormat::from_path(path)?,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_cloud(&text, format, path)?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.cloud)
}

pub fn parse_cloud(text: &str, format: CloudFormat, path: &Path) -> Result<Parsed> {
    match format {
        CloudFormat::Xyz => parse_xyz(text, path).map(|cloud| Parsed {
            cloud,
            warnings: Vec::new(),
        }),
        CloudFormat::Csv => parse_csv(text, path).map(|cloud| Parsed {
            cloud,
            warnings: Vec::new(),
        }),
        CloudFormat::PlyAscii => parse_ply(text, path),
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_number(field: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: '{field}'")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value '{field}'")));
    }
    Ok(v)
}

fn collect_rows<'a>(
    rows: impl Iterator<Item = (usize, Vec<&'a str>)>,
    path: &Path,
) -> Result<PointCloud> {
    let mut dim = None;
    let mut flat = Vec::new();
    let mut count = 0;
    for (line, fields) in rows {
        let d = *dim.get_or_insert(fields.len());
        if fields.len() != d {
            return Err(parse_err(
                path,
                line,
                format!("expected {d} fields, found {}", fields.len()),
            ));
        }
        for f in fields {
            flat.push(parse_number(f, path, line)?);
        }
        count += 1;
    }
    let Some(d) = dim else {
        return Err(parse_err(path, 0, "file contains no points"));
    };
    PointCloud::new(nalgebra::DMatrix::from_column_slice(d, count, &flat))
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !is_skippable(l))
        .map(|(i, l)| (i + 1, l.split_whitespace().collect()));
    collect_rows(rows, path)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !is_skippable(l));
    let Some((header_line, header)) = lines.next() else {
        return Err(parse_err(path, 0, "empty csv file"));
    };
    let columns = header.split(',').count();
    if header.split(',').any(|h| h.trim().parse::<f64>().is_ok()) {
        return Err(parse_err(
            path,
            header_line + 1,
            "csv header row is missing",
        ));
    }
    let rows = lines.map(|(i, l)| (i + 1, l.split(',').collect::<Vec<_>>()));
    let cloud = collect_rows(rows, path)?;
    if cloud.dim() != columns {
        return Err(parse_err(
            path,
            header_line + 1,
            format!("header has {columns} columns but rows have {}", cloud.dim()),
        ));
    }
    Ok(cloud)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

pub fn parse_ply(text: &str, path: &Path) -> Result<Parsed> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(path, n, "missing 'ply' magic line")),
        None => return Err(parse_err(path, 0, "empty file")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(parse_err(path, 0, "header is not terminated by end_header"));
        };
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                if words.next() != Some("ascii") {
                    return Err(parse_err(path, n, "only ascii ply is supported"));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = words.next().unwrap_or_default().to_string();
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, n, "element count missing or invalid"))?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let Some(el) = elements.last_mut() else {
                    return Err(parse_err(path, n, "property before any element"));
                };
                let rest: Vec<&str> = words.collect();
                if rest.first() == Some(&"list") {
                    el.has_list = true;
                    el.properties
                        .push(rest.last().copied().unwrap_or_default().to_string());
                } else if rest.len() == 2 {
                    el.properties.push(rest[1].to_string());
                } else {
                    return Err(parse_err(path, n, "malformed property line"));
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(
                    path,
                    n,
                    format!("unexpected header keyword '{other}'"),
                ))
            }
        }
    }
    if !saw_format {
        return Err(parse_err(path, 0, "ply header has no format line"));
    }

    let mut warnings = Vec::new();
    let mut vertices = None;
    for el in &elements {
        if el.name != "vertex" {
            warnings.push(format!(
                "ignoring ply element '{}' ({} entries)",
                el.name, el.count
            ));
            for _ in 0..el.count {
                if lines.next().is_none() {
                    return Err(parse_err(
                        path,
                        0,
                        format!("truncated '{}' element", el.name),
                    ));
                }
            }
            continue;
        }
        if el.has_list {
            return Err(parse_err(
                path,
                0,
                "list properties on vertices are not supported",
            ));
        }
        let axis = |name: &str| el.properties.iter().position(|p| p == name);
        let (Some(x), Some(y), Some(z)) = (axis("x"), axis("y"), axis("z")) else {
            return Err(parse_err(path, 0, "vertex element lacks x, y or z"));
        };
        let mut flat = Vec::with_capacity(3 * el.count);
        for _ in 0..el.count {
            let Some((n, line)) = lines.next() else {
                return Err(parse_err(path, 0, "truncated vertex element"));
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != el.properties.len() {
                return Err(parse_err(
                    path,
                    n,
                    format!(
                        "expected {} vertex fields, found {}",
                        el.properties.len(),
                        fields.len()
                    ),
                ));
            }
            for i in [x, y, z] {
                flat.push(parse_number(fields[i], path, n)?);
            }
        }
        if el.properties.len() > 3 {
            warnings.push("ignoring vertex properties other than x, y, z".to_string());
        }
        vertices = Some(flat);
    }
    let Some(flat) = vertices else {
        return Err(parse_err(path, 0, "ply file has no vertex element"));
    };
    if flat.is_empty() {
        return Err(parse_err(path, 0, "ply file has no vertices"));
    }
    let n = flat.len() / 3;
    Ok(Parsed {
        cloud: PointCloud::new(nalgebra::DMatrix::from_column_slice(3, n, &flat))?,
        warnings,
    })
}

/// 17 significant digits, enough to round-trip any `f64`.
fn push_number(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

pub fn format_cloud(cloud: &PointCloud, format: CloudFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        CloudFormat::Xyz => {
            for p in cloud.points() {
                join(&mut out, p, " ");
            }
        }
        CloudFormat::Csv => {
            let header: Vec<String> = (0..cloud.dim()).map(axis_name).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            for p in cloud.points() {
                join(&mut out, p, ",");
            }
        }
        CloudFormat::PlyAscii => {
            if cloud.dim() != 3 {
                return Err(Error::invalid("ply output requires a 3-D cloud"));
            }
            out.push_str("ply\nformat ascii 1.0\n");
            writeln!(out, "element vertex {}", cloud.len()).expect("writing to a String");
            out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
            for p in cloud.points() {
                join(&mut out, p, " ");
            }
        }
    }
    Ok(out)
}

fn axis_name(i: usize) -> String {
    match i {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("x{i}"),
    }
}

fn join(out: &mut String, p: &[f64], sep: &str) {
    for (i, &v) in p.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        push_number(out, v);
    }
    out.push('\n');
}

pub fn save_cloud(path: &Path, cloud: &PointCloud, format: Option<CloudFormat>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => CloudFormat::from_path(path)?,
    };
    write_text(path, &format_cloud(cloud, format)?)
}

/// Writes `text` to `path`, creating missing parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
