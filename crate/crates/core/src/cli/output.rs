//! Output files: zonotope lists as JSON, per-step metrics as CSV, and SVG
//! plots. Files are written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engine::ReachResult;
use crate::zonotope::{write_numbers, Zonotope, ZonotopeJson};

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Writes several files; on failure the ones already renamed are removed.
pub fn write_all_atomic(files: &[(PathBuf, String)]) -> io::Result<()> {
    let mut written: Vec<&Path> = Vec::new();
    for (path, contents) in files {
        if let Err(e) = write_atomic(path, contents) {
            for done in written {
                let _ = fs::remove_file(done);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(())
}

/// `{"tau": .., "horizon": .., "sets": [..]}`.
pub fn lambda_sets_json<'a>(tau: f64, horizon: f64, sets: impl IntoIterator<Item = &'a Zonotope>) -> String {
    let mut out = String::from("{\"tau\":");
    write_numbers(&mut out, std::iter::once(tau));
    out.push_str(",\"horizon\":");
    write_numbers(&mut out, std::iter::once(horizon));
    out.push_str(",\"sets\":[\n");
    for (i, z) in sets.into_iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
        }
        out.push_str(&z.to_json());
    }
    out.push_str("\n]}\n");
    out
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSetsFile {
    pub tau: f64,
    pub horizon: f64,
    pub sets: Vec<ZonotopeJson>,
}

/// Anything `plot` accepts: a sets file, a bare list, or one zonotope.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SetsDocument {
    Sets(LambdaSetsFile),
    List(Vec<ZonotopeJson>),
    Single(ZonotopeJson),
}

impl SetsDocument {
    pub fn into_zonotopes(self) -> crate::Result<Vec<Zonotope>> {
        let list = match self {
            SetsDocument::Sets(f) => f.sets,
            SetsDocument::List(l) => l,
            SetsDocument::Single(z) => vec![z],
        };
        list.into_iter().map(Zonotope::try_from).collect()
    }
}

pub const METRICS_HEADER: &str = "i,t,gen_count,kappa,eta,lambda_min,wall_ms";

/// One CSV row per step; `gaps`, when given, adds the `gap` column.
pub fn metrics_csv(result: &ReachResult, gaps: Option<&[f64]>) -> String {
    let mut out = String::from(METRICS_HEADER);
    if gaps.is_some() {
        out.push_str(",gap");
    }
    out.push('\n');
    let opt = |x: Option<String>| x.unwrap_or_default();
    for (i, step) in result.steps.iter().enumerate() {
        write!(
            out,
            "{},{},{},{},{},{},{:.6}",
            i,
            i as f64 * result.tau,
            result.lambda_gen_count(i),
            opt(step.kappa().map(|k| k.to_string())),
            opt(step.eta.map(|k| k.to_string())),
            opt(step.lambda_min().map(|l| format!("{l:.17e}"))),
            step.wall.as_secs_f64() * 1e3,
        )
        .expect("writing to a String");
        if let Some(g) = gaps {
            write!(out, ",{:.17e}", g[i]).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 48.0;
const FILL: &str = "#3b7dd8";

/// Samples of `y = x²/2` and `y = x − x²/2 + 1` on `[0,1]`.
fn closed_form_curves() -> [Vec<[f64; 2]>; 2] {
    let xs = (0..256).map(|k| k as f64 / 255.0);
    [
        xs.clone().map(|x| [x, x * x / 2.0]).collect(),
        xs.map(|x| [x, x - x * x / 2.0 + 1.0]).collect(),
    ]
}

/// SVG with one filled polygon per zonotope projected onto `dims`
/// (0-based), an axis box with extent labels, and optionally the
/// closed-form double-integrator boundary.
pub fn render_svg(sets: &[Zonotope], dims: [usize; 2], overlay: bool) -> crate::Result<String> {
    let polygons: Vec<Vec<[f64; 2]>> = sets
        .iter()
        .map(|z| z.project(&dims).map(|p| p.vertices_2d()))
        .collect::<crate::Result<_>>()?;
    let curves = overlay.then(closed_form_curves);

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let all_points = polygons.iter().flatten().chain(curves.iter().flatten().flatten());
    for p in all_points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    for k in 0..2 {
        let pad = 0.05 * (hi[k] - lo[k]).max(1e-9);
        lo[k] -= pad;
        hi[k] += pad;
    }
    let span = CANVAS - 2.0 * MARGIN;
    let map = |p: [f64; 2]| {
        (
            MARGIN + (p[0] - lo[0]) / (hi[0] - lo[0]) * span,
            CANVAS - MARGIN - (p[1] - lo[1]) / (hi[1] - lo[1]) * span,
        )
    };

    let mut svg = String::new();
    let w = |svg: &mut String, s: std::fmt::Arguments| svg.write_fmt(s).expect("writing to a String");
    w(
        &mut svg,
        format_args!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" viewBox=\"0 0 {CANVAS} {CANVAS}\">\n"
        ),
    );
    w(&mut svg, format_args!("<rect x=\"0\" y=\"0\" width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"white\"/>\n"));
    w(
        &mut svg,
        format_args!(
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
        ),
    );
    let label = |svg: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        svg.write_fmt(format_args!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"{anchor}\">{text}</text>\n"
        ))
        .expect("writing to a String");
    };
    label(&mut svg, MARGIN, CANVAS - MARGIN + 16.0, "start", format!("{:.3}", lo[0]));
    label(&mut svg, CANVAS - MARGIN, CANVAS - MARGIN + 16.0, "end", format!("{:.3}", hi[0]));
    label(&mut svg, MARGIN - 4.0, CANVAS - MARGIN, "end", format!("{:.3}", lo[1]));
    label(&mut svg, MARGIN - 4.0, MARGIN + 12.0, "end", format!("{:.3}", hi[1]));
    label(&mut svg, CANVAS / 2.0, CANVAS - 12.0, "middle", format!("x{}", dims[0] + 1));
    label(&mut svg, 14.0, CANVAS / 2.0, "middle", format!("x{}", dims[1] + 1));

    if let Some(curves) = &curves {
        for curve in curves {
            let pts: Vec<String> = curve
                .iter()
                .map(|&p| {
                    let (x, y) = map(p);
                    format!("{x:.3},{y:.3}")
                })
                .collect();
            w(
                &mut svg,
                format_args!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
                    pts.join(" ")
                ),
            );
        }
    }
    for poly in &polygons {
        let pts: Vec<String> = poly
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        w(
            &mut svg,
            format_args!(
                "<polygon points=\"{}\" fill=\"{FILL}\" fill-opacity=\"0.35\" stroke=\"{FILL}\" stroke-width=\"0.8\"/>\n",
                pts.join(" ")
            ),
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
