//! Extended-XYZ reading and writing.
//!
//! Each frame is an atom-count line, a comment line of `key=value` pairs and one
//! line per atom. The comment line must carry `energy=<kcal/mol>` for training
//! data; `Properties=` selects the per-atom columns (default
//! `species:S:1:pos:R:3`, plus `forces:R:3` when seven columns are present).
//! Unknown keys and columns are ignored.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{elements, Conformation, Dataset};
use crate::error::{Error, Result};

pub fn parse_extxyz(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_extxyz_str(&text, Some(path.display().to_string()))
}

pub fn parse_extxyz_str(text: &str, source: Option<String>) -> Result<Dataset> {
    let lines: Vec<&str> = text.lines().collect();
    let mut conformations = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let (conf, next) = parse_frame(&lines, at)?;
        conformations.push(conf);
        at = next;
    }
    Ok(Dataset {
        conformations,
        source,
        seed: None,
    })
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line + 1,
        msg: msg.into(),
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Columns {
    species: usize,
    pos: usize,
    forces: Option<usize>,
    width: usize,
}

fn parse_properties(spec: &str, line: usize) -> Result<Columns> {
    let fields: Vec<&str> = spec.split(':').collect();
    if !fields.len().is_multiple_of(3) {
        return Err(parse_err(line, format!("malformed Properties `{spec}`")));
    }
    let mut cols = Columns::default();
    let (mut species, mut pos) = (None, None);
    for chunk in fields.chunks(3) {
        let count: usize = chunk[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad column count in Properties `{spec}`")))?;
        match chunk[0] {
            "species" => species = Some(cols.width),
            "pos" if count == 3 => pos = Some(cols.width),
            "forces" | "force" if count == 3 => cols.forces = Some(cols.width),
            _ => {}
        }
        cols.width += count;
    }
    cols.species = species.ok_or_else(|| parse_err(line, "Properties lacks `species`"))?;
    cols.pos = pos.ok_or_else(|| parse_err(line, "Properties lacks `pos:R:3`"))?;
    Ok(cols)
}

/// Splits a comment line into `key=value` pairs, honouring double quotes.
fn comment_pairs(line: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut chars = line.trim().chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|&c| c != '=' && !c.is_whitespace()) {
            key.push(c);
        }
        let mut value = String::new();
        if chars.next_if_eq(&'=').is_some() {
            if chars.next_if_eq(&'"').is_some() {
                for c in chars.by_ref() {
                    if c == '"' {
                        break;
                    }
                    value.push(c);
                }
            } else {
                while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                    value.push(c);
                }
            }
        }
        pairs.push((key, value));
    }
    pairs
}

fn parse_frame(lines: &[&str], start: usize) -> Result<(Conformation, usize)> {
    let n: usize = lines[start]
        .trim()
        .parse()
        .map_err(|_| parse_err(start, format!("expected atom count, found `{}`", lines[start].trim())))?;
    let comment_line = start + 1;
    let comment = lines
        .get(comment_line)
        .ok_or_else(|| parse_err(comment_line, "missing comment line"))?;

    let mut energy = None;
    let mut molecule_id = None;
    let mut columns = None;
    for (key, value) in comment_pairs(comment) {
        match key.to_ascii_lowercase().as_str() {
            "energy" => {
                let e: f64 = value
                    .parse()
                    .map_err(|_| parse_err(comment_line, format!("bad energy `{value}`")))?;
                energy = Some(e);
            }
            "properties" => columns = Some(parse_properties(&value, comment_line)?),
            "molecule_id" => molecule_id = Some(value),
            _ => {}
        }
    }

    let mut z = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut forces = Vec::with_capacity(n);
    let mut has_forces = true;
    for a in 0..n {
        let line_no = start + 2 + a;
        let line = lines
            .get(line_no)
            .ok_or_else(|| parse_err(line_no, format!("frame ends after {a} of {n} atoms")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let cols = match &columns {
            Some(c) => *c,
            None => Columns {
                species: 0,
                pos: 1,
                forces: (tokens.len() >= 7).then_some(4),
                width: 4,
            },
        };
        if tokens.len() < cols.width.max(cols.pos + 3) {
            return Err(parse_err(
                line_no,
                format!("expected {} columns, found {}", cols.width, tokens.len()),
            ));
        }
        let zi = elements::atomic_number(tokens[cols.species])
            .ok_or_else(|| parse_err(line_no, format!("unknown element `{}`", tokens[cols.species])))?;
        let vec3 = |offset: usize| -> Result<[f64; 3]> {
            let mut v = [0.0; 3];
            for (k, slot) in v.iter_mut().enumerate() {
                let tok = tokens
                    .get(offset + k)
                    .ok_or_else(|| parse_err(line_no, "missing coordinate"))?;
                *slot = tok
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad number `{tok}`")))?;
            }
            Ok(v)
        };
        z.push(zi);
        positions.push(vec3(cols.pos)?);
        match cols.forces {
            Some(off) if has_forces => forces.push(vec3(off)?),
            _ => has_forces = false,
        }
    }

    let mut conf = Conformation::new(z, positions).map_err(|e| parse_err(start, e.to_string()))?;
    conf.energy = energy;
    if has_forces && n > 0 {
        conf.forces = Some(forces);
    }
    if let Some(id) = molecule_id {
        conf.molecule_id = id;
    }
    Ok((conf, start + 2 + n))
}

fn push_vec3(out: &mut String, v: &[f64; 3]) {
    for x in v {
        let _ = write!(out, " {x:?}");
    }
}

/// Writes frames in the layout accepted by [`parse_extxyz`]; values round-trip exactly.
pub fn write_extxyz<W: Write>(mut out: W, ds: &Dataset) -> Result<()> {
    for conf in ds {
        let mut s = String::new();
        let _ = writeln!(s, "{}", conf.n_atoms());
        s.push_str("Properties=species:S:1:pos:R:3");
        if conf.forces.is_some() {
            s.push_str(":forces:R:3");
        }
        if let Some(e) = conf.energy {
            let _ = write!(s, " energy={e:?}");
        }
        if conf.molecule_id.chars().any(|c| c.is_whitespace() || c == '=') {
            let _ = write!(s, " molecule_id=\"{}\"", conf.molecule_id);
        } else if !conf.molecule_id.is_empty() {
            let _ = write!(s, " molecule_id={}", conf.molecule_id);
        }
        s.push('\n');
        for (a, (&zi, r)) in conf.z.iter().zip(&conf.positions).enumerate() {
            s.push_str(elements::symbol(zi).unwrap_or("X"));
            push_vec3(&mut s, r);
            if let Some(f) = &conf.forces {
                push_vec3(&mut s, &f[a]);
            }
            s.push('\n');
        }
        out.write_all(s.as_bytes())?;
    }
    Ok(())
}

pub fn write_extxyz_path(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_extxyz(file, ds)
}
