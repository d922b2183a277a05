//! Text persistence of fields and checkpoints.
//!
//! ```text
//! # segfield v1 nx=5 ny=5 hx=0.25 hy=0.25 ox=0 oy=0 comp=3
//! # domain shape=disk cx=0.5 cy=0.5 radius=0.45
//! # meta beta=1000 sweeps=12 total=3.38 interaction=0.16
//! <ny rows of nx values>
//!
//! <ny rows of nx values>
//! ...
//! ```
//!
//! Rows run from `j = 0` (bottom) upwards. The `domain` line is needed to
//! rebuild the mask; files without it are read as rectangles. The `meta`
//! line is written for checkpoints only. Every float is printed in its
//! shortest round-trip form, so `load(dump(x))` is bit-identical to `x`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::energy::{energy, TripletState};
use crate::error::{Result, SegError};
use crate::grid::{Field, Grid, Shape};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub beta: f64,
    pub sweeps: usize,
    pub total: f64,
    pub interaction: f64,
}

fn header(grid: &Grid, comp: usize) -> String {
    let (ox, oy) = grid.origin();
    let mut s = format!(
        "# segfield v1 nx={} ny={} hx={} hy={} ox={} oy={} comp={comp}\n",
        grid.nx(),
        grid.ny(),
        fmt_f64(grid.hx()),
        fmt_f64(grid.hy()),
        fmt_f64(ox),
        fmt_f64(oy)
    );
    match *grid.shape() {
        Shape::Rectangle => s.push_str("# domain shape=rectangle\n"),
        Shape::Disk { cx, cy, radius } => {
            let _ = writeln!(
                s,
                "# domain shape=disk cx={} cy={} radius={}",
                fmt_f64(cx),
                fmt_f64(cy),
                fmt_f64(radius)
            );
        }
    }
    s
}

fn body(out: &mut String, fields: &[&Field]) {
    for (c, f) in fields.iter().enumerate() {
        if c > 0 {
            out.push('\n');
        }
        let g = f.grid();
        for j in 0..g.ny() {
            let row: Vec<String> = (0..g.nx()).map(|i| fmt_f64(f.values()[g.index(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
}

pub fn format_fields(fields: &[&Field], meta: Option<&CheckpointMeta>) -> Result<String> {
    let first = fields
        .first()
        .ok_or_else(|| SegError::InvalidArgument("nothing to dump".into()))?;
    if fields.iter().any(|f| **f.grid() != **first.grid()) {
        return Err(SegError::InvalidArgument("fields live on different grids".into()));
    }
    let mut s = header(first.grid(), fields.len());
    if let Some(m) = meta {
        let _ = writeln!(
            s,
            "# meta beta={} sweeps={} total={} interaction={}",
            fmt_f64(m.beta),
            m.sweeps,
            fmt_f64(m.total),
            fmt_f64(m.interaction)
        );
    }
    body(&mut s, fields);
    Ok(s)
}

pub fn dump_field(f: &Field, path: &Path) -> Result<()> {
    fs::write(path, format_fields(&[f], None)?)?;
    Ok(())
}

pub fn checkpoint_text(s: &TripletState) -> Result<String> {
    let e = energy(s);
    let meta = CheckpointMeta {
        beta: s.beta,
        sweeps: s.sweeps,
        total: e.total,
        interaction: e.interaction,
    };
    format_fields(&[&s.u[0], &s.u[1], &s.u[2]], Some(&meta))
}

pub fn dump_checkpoint(s: &TripletState, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_text(s)?)?;
    Ok(())
}

/// Parsed contents of a field file.
#[derive(Clone, Debug)]
pub struct FieldFile {
    pub fields: Vec<Field>,
    pub meta: Option<CheckpointMeta>,
}

fn key_values<'a>(line: &'a str, prefix: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let rest = line
        .strip_prefix(prefix)
        .ok_or_else(|| SegError::Format(format!("expected `{prefix}`, found `{line}`")))?;
    rest.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| SegError::Format(format!("malformed header token `{tok}`")))
        })
        .collect()
}

fn lookup<'a>(kv: &[(&str, &'a str)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| SegError::Format(format!("header lacks `{key}=`")))
}

fn parse_tok<T: std::str::FromStr>(kv: &[(&str, &str)], key: &str) -> Result<T> {
    let v = lookup(kv, key)?;
    v.parse()
        .map_err(|_| SegError::Format(format!("malformed header token `{key}={v}`")))
}

const HEADER_KEYS: [&str; 7] = ["nx", "ny", "hx", "hy", "ox", "oy", "comp"];

pub fn parse_fields(text: &str) -> Result<FieldFile> {
    let mut lines = text.lines().peekable();
    let first = lines.next().ok_or_else(|| SegError::Format("empty file".into()))?;
    let kv = key_values(first, "# segfield v1")?;
    if let Some((k, v)) = kv.iter().find(|(k, _)| !HEADER_KEYS.contains(k)) {
        return Err(SegError::Format(format!("malformed header token `{k}={v}`")));
    }
    let nx: usize = parse_tok(&kv, "nx")?;
    let ny: usize = parse_tok(&kv, "ny")?;
    let hx: f64 = parse_tok(&kv, "hx")?;
    let hy: f64 = parse_tok(&kv, "hy")?;
    let ox: f64 = parse_tok(&kv, "ox")?;
    let oy: f64 = parse_tok(&kv, "oy")?;
    let comp: usize = parse_tok(&kv, "comp")?;
    if comp == 0 {
        return Err(SegError::Format("malformed header token `comp=0`".into()));
    }

    let mut shape = Shape::Rectangle;
    let mut meta = None;
    while let Some(line) = lines.peek() {
        if line.starts_with("# domain") {
            let kv = key_values(line, "# domain")?;
            shape = match lookup(&kv, "shape")? {
                "rectangle" => Shape::Rectangle,
                "disk" => Shape::Disk {
                    cx: parse_tok(&kv, "cx")?,
                    cy: parse_tok(&kv, "cy")?,
                    radius: parse_tok(&kv, "radius")?,
                },
                other => return Err(SegError::Format(format!("malformed header token `shape={other}`"))),
            };
        } else if line.starts_with("# meta") {
            let kv = key_values(line, "# meta")?;
            meta = Some(CheckpointMeta {
                beta: parse_tok(&kv, "beta")?,
                sweeps: parse_tok(&kv, "sweeps")?,
                total: parse_tok(&kv, "total")?,
                interaction: parse_tok(&kv, "interaction")?,
            });
        } else {
            break;
        }
        lines.next();
    }
    let grid = Arc::new(Grid::new(nx, ny, hx, hy, ox, oy, shape)?);

    let rows: Vec<&str> = lines.collect();
    let mut blocks: Vec<Vec<&str>> = vec![Vec::new()];
    for r in rows {
        if r.trim().is_empty() {
            blocks.push(Vec::new());
        } else {
            blocks.last_mut().unwrap().push(r);
        }
    }
    while blocks.len() > 1 && blocks.last().unwrap().is_empty() {
        blocks.pop();
    }
    let found: usize = blocks.iter().map(Vec::len).sum();
    if found != comp * ny {
        return Err(SegError::Format(format!(
            "expected {} rows ({comp} components of {ny}), found {found}",
            comp * ny
        )));
    }
    if blocks.len() != comp {
        return Err(SegError::Format(format!("expected {comp} components, found {}", blocks.len())));
    }
    let mut fields = Vec::with_capacity(comp);
    for (c, block) in blocks.iter().enumerate() {
        if block.len() != ny {
            return Err(SegError::Format(format!(
                "component {}: expected {ny} rows, found {}",
                c + 1,
                block.len()
            )));
        }
        let mut values = vec![0.0; nx * ny];
        for (j, row) in block.iter().enumerate() {
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != nx {
                return Err(SegError::Format(format!(
                    "component {}, row {j}: expected {nx} values, found {}",
                    c + 1,
                    toks.len()
                )));
            }
            for (i, t) in toks.iter().enumerate() {
                values[grid.index(i, j)] = t
                    .parse()
                    .map_err(|_| SegError::Format(format!("component {}, row {j}: bad value `{t}`", c + 1)))?;
            }
        }
        fields.push(Field::from_values(grid.clone(), values)?);
    }
    Ok(FieldFile { fields, meta })
}

pub fn load_fields(path: &Path) -> Result<FieldFile> {
    parse_fields(&fs::read_to_string(path)?)
}

pub fn load_field(path: &Path) -> Result<Field> {
    let mut f = load_fields(path)?;
    if f.fields.len() != 1 {
        return Err(SegError::Format(format!("expected comp=1, found comp={}", f.fields.len())));
    }
    Ok(f.fields.remove(0))
}

/// Reads a `comp=3` file as a state; `β` and the sweep count come from the
/// `meta` line. Invariants are not checked here.
pub fn parse_checkpoint(text: &str) -> Result<TripletState> {
    let f = parse_fields(text)?;
    let meta = f.meta.ok_or_else(|| SegError::Format("checkpoint lacks the `# meta` line".into()))?;
    let [a, b, c]: [Field; 3] = f
        .fields
        .try_into()
        .map_err(|v: Vec<Field>| SegError::Format(format!("expected comp=3, found comp={}", v.len())))?;
    let mut s = TripletState::from_fields([a, b, c], meta.beta)?;
    s.sweeps = meta.sweeps;
    Ok(s)
}

pub fn load_checkpoint(path: &Path) -> Result<TripletState> {
    parse_checkpoint(&fs::read_to_string(path)?)
}
