//! SMILES subset parser producing molecular graphs.
//!
//! Supported: organic-subset atoms (B, C, N, O, P, S, F, Cl, Br, I), bracket
//! atoms, bonds `-`/`=`/`#`, branches, ring closures (single digit and `%nn`).
//! Stereo markers and aromatic perception are out of scope; unsupported
//! tokens fail with their position.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DataError, Dataset, Graph, LoadStats, Task};

/// Supported elements, in one-hot slot order.
pub const ELEMENTS: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

/// Feature layout: one-hot element identity + scalar degree.
pub const SMILES_FEATURE_DIM: usize = ELEMENTS.len() + 1;

fn element_slot(sym: &str) -> Option<usize> {
    ELEMENTS.iter().position(|&e| e == sym)
}

fn err(pos: usize, msg: impl Into<String>) -> DataError {
    DataError::Smiles {
        pos,
        msg: msg.into(),
    }
}

/// Parses one SMILES string into a graph: one node per heavy atom, one
/// undirected edge per bond. Node features are element one-hot plus degree.
pub fn parse_smiles(s: &str) -> Result<Graph, DataError> {
    let bytes = s.as_bytes();
    let mut atoms: Vec<usize> = Vec::new(); // element slot per atom
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut branch_stack: Vec<Option<usize>> = Vec::new();
    let mut ring_open: HashMap<u16, (usize, usize)> = HashMap::new(); // digit -> (atom, pos)
    let mut i = 0usize;

    let add_atom = |slot: usize, prev: &mut Option<usize>, atoms: &mut Vec<usize>, edges: &mut Vec<(u32, u32)>| {
        let id = atoms.len();
        atoms.push(slot);
        if let Some(p) = *prev {
            edges.push((p as u32, id as u32));
        }
        *prev = Some(id);
    };

    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            'A'..='Z' => {
                // two-character symbols first
                let two = if i + 1 < bytes.len() {
                    &s[i..i + 2]
                } else {
                    &s[i..i + 1]
                };
                let (sym, advance) = if element_slot(two).is_some() && two.len() == 2 {
                    (two, 2)
                } else {
                    (&s[i..i + 1], 1)
                };
                let slot = element_slot(sym)
                    .ok_or_else(|| err(i, format!("unsupported atom `{sym}`")))?;
                add_atom(slot, &mut prev, &mut atoms, &mut edges);
                i += advance;
            }
            '[' => {
                let close = s[i..]
                    .find(']')
                    .map(|k| i + k)
                    .ok_or_else(|| err(i, "unclosed bracket atom"))?;
                let inner = &s[i + 1..close];
                let slot = bracket_element(inner)
                    .ok_or_else(|| err(i, format!("unsupported bracket atom `[{inner}]`")))?;
                add_atom(slot, &mut prev, &mut atoms, &mut edges);
                i = close + 1;
            }
            '-' | '=' | '#' => {
                // bond order is not modeled; the bond itself comes from the
                // following atom or ring closure
                if prev.is_none() {
                    return Err(err(i, "bond symbol with no preceding atom"));
                }
                i += 1;
            }
            '(' => {
                if prev.is_none() {
                    return Err(err(i, "branch opened before any atom"));
                }
                branch_stack.push(prev);
                i += 1;
            }
            ')' => {
                prev = branch_stack
                    .pop()
                    .ok_or_else(|| err(i, "unmatched `)`"))?;
                i += 1;
            }
            '0'..='9' | '%' => {
                let (digit, advance) = if c == '%' {
                    if i + 2 >= bytes.len()
                        || !bytes[i + 1].is_ascii_digit()
                        || !bytes[i + 2].is_ascii_digit()
                    {
                        return Err(err(i, "`%` ring closure needs two digits"));
                    }
                    (s[i + 1..i + 3].parse::<u16>().unwrap(), 3)
                } else {
                    (c as u16 - '0' as u16, 1)
                };
                let cur = prev.ok_or_else(|| err(i, "ring closure before any atom"))?;
                match ring_open.remove(&digit) {
                    Some((other, _)) => {
                        if other == cur {
                            return Err(err(i, format!("ring closure {digit} bonds atom to itself")));
                        }
                        edges.push((other as u32, cur as u32));
                    }
                    None => {
                        ring_open.insert(digit, (cur, i));
                    }
                }
                i += advance;
            }
            '/' | '\\' | '@' => return Err(err(i, format!("stereo marker `{c}` not supported"))),
            other if other.is_whitespace() => break, // trailing annotations
            other => return Err(err(i, format!("unsupported token `{other}`"))),
        }
    }

    if let Some((&digit, &(_, pos))) = ring_open.iter().min_by_key(|(_, &(_, p))| p) {
        return Err(err(pos, format!("unmatched ring closure digit {digit}")));
    }
    if !branch_stack.is_empty() {
        return Err(err(s.len(), "unmatched `(`"));
    }
    if atoms.is_empty() {
        return Err(err(0, "no atoms"));
    }

    let n = atoms.len();
    let mut degrees = vec![0usize; n];
    {
        // degree over deduplicated undirected bonds
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in &edges {
            if seen.insert((a.min(b), a.max(b))) {
                degrees[a as usize] += 1;
                degrees[b as usize] += 1;
            }
        }
    }
    let mut features = Vec::with_capacity(n * SMILES_FEATURE_DIM);
    for (atom, &slot) in atoms.iter().enumerate() {
        for j in 0..ELEMENTS.len() {
            features.push(if j == slot { 1.0 } else { 0.0 });
        }
        features.push(degrees[atom] as f32);
    }
    Graph::new(n, edges, features, SMILES_FEATURE_DIM)
}

/// Extracts the element from a bracket-atom body such as `NH4+` or `13C`.
fn bracket_element(inner: &str) -> Option<usize> {
    let rest = inner.trim_start_matches(|c: char| c.is_ascii_digit()); // isotope
    if rest.len() >= 2 {
        if let Some(slot) = element_slot(&rest[0..2]) {
            return Some(slot);
        }
    }
    if rest.is_empty() {
        return None;
    }
    element_slot(&rest[0..1])
}

/// Minimal quoted-field CSV row splitter (RFC 4180 quoting).
pub(crate) fn split_csv_row(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes => {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            }
            '"' => in_quotes = true,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut cur));
            }
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Loads a BBBP-style CSV (`name,p_np,smiles` header). Rows whose SMILES
/// falls outside the supported subset are skipped and counted.
pub fn load_bbbp(path: &Path) -> Result<(Dataset, LoadStats), DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| DataError::Parse {
        file: file.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols = split_csv_row(header);
    let col = |name: &str| {
        cols.iter()
            .position(|c| c.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| DataError::Parse {
                file: file.clone(),
                line: 1,
                msg: format!("header missing `{name}` column"),
            })
    };
    let label_col = col("p_np")?;
    let smiles_col = col("smiles")?;

    let mut graphs = Vec::new();
    let mut stats = LoadStats::default();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields = split_csv_row(raw);
        if fields.len() <= label_col.max(smiles_col) {
            return Err(DataError::Parse {
                file: file.clone(),
                line,
                msg: format!("row has {} fields, need {}", fields.len(), cols.len()),
            });
        }
        let label: u32 = fields[label_col].trim().parse().map_err(|e| DataError::Parse {
            file: file.clone(),
            line,
            msg: format!("bad label `{}`: {e}", fields[label_col]),
        })?;
        match parse_smiles(fields[smiles_col].trim()) {
            Ok(mut g) => {
                g.graph_label = Some(label);
                graphs.push(g);
            }
            Err(_) => stats.skipped += 1,
        }
    }

    let dataset = Dataset {
        name: "bbbp".into(),
        task: Task::GraphClassification,
        num_classes: 2,
        feature_dim: SMILES_FEATURE_DIM,
        graphs,
    };
    dataset.validate()?;
    Ok((dataset, stats))
}
