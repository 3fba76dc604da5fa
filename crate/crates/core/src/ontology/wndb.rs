//! Reader for the WordNet 3.0 database files (`data.*`, `index.*`, `index.sense`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;

use super::{Ontology, OntologyBuilder, Pos, Synset, SynsetId, WnRelation};
use crate::error::{Error, Result};

const FILES: [&str; 4] = ["noun", "verb", "adj", "adv"];

/// Counters collected while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub synsets: usize,
    pub core_entries: usize,
    /// Core-list entries that could not be mapped to a parsed synset.
    pub unmapped_core: usize,
}

struct Record {
    offset: u32,
    pos: Pos,
    lemmas: Vec<String>,
    gloss: String,
    pointers: Vec<(WnRelation, &'static str, u32)>,
    line: usize,
}

/// Loads every synset, gloss, lemma and the synset-level relations from a
/// WordNet 3.0 `dict` directory. Lexical antonym links are lifted to the pair
/// of containing synsets. When a core list is given (one sense key per line,
/// optionally in the `pos [key] word` layout of the published list), entries
/// that do not resolve are counted in the report and skipped.
pub fn load_wordnet(dir: &Path, core_list: Option<&Path>) -> Result<(Ontology, LoadReport)> {
    let mut records: Vec<Record> = Vec::new();
    let mut by_offset: HashMap<(&'static str, u32), usize> = HashMap::new();
    for file in FILES {
        let path = dir.join(format!("data.{file}"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let name = path.display().to_string();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with("  ") || line.trim().is_empty() {
                continue;
            }
            let rec = parse_data_line(line).map_err(|m| Error::parse(&name, n + 1, m))?;
            if by_offset.insert((file, rec.offset), records.len()).is_some() {
                return Err(Error::parse(&name, n + 1, format!("duplicate offset {:08}", rec.offset)));
            }
            records.push(Record { line: n + 1, ..rec });
        }
    }

    let file_of = |pos: Pos| pos.file_suffix();
    let mut sense_no: Vec<Option<u32>> = vec![None; records.len()];
    for file in FILES {
        let path = dir.join(format!("index.{file}"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let name = path.display().to_string();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with("  ") || line.trim().is_empty() {
                continue;
            }
            let (lemma, offsets) = parse_index_line(line).map_err(|m| Error::parse(&name, n + 1, m))?;
            for (i, off) in offsets.into_iter().enumerate() {
                let &r = by_offset.get(&(file, off)).ok_or_else(|| {
                    Error::parse(&name, n + 1, format!("offset {off:08} not found in data.{file}"))
                })?;
                if records[r].lemmas[0].to_lowercase() == lemma {
                    sense_no[r] = Some(i as u32 + 1);
                }
            }
        }
    }

    let mut builder = OntologyBuilder::new();
    let mut ids = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let data_name = dir.join(format!("data.{}", file_of(rec.pos))).display().to_string();
        let sense = sense_no[r].ok_or_else(|| {
            Error::parse(&data_name, rec.line, format!("first lemma `{}` has no index entry", rec.lemmas[0]))
        })?;
        let id = SynsetId::new(&rec.lemmas[0].to_lowercase(), rec.pos, sense)
            .map_err(|e| Error::parse(&data_name, rec.line, e.to_string()))?;
        ids.push(id.clone());
        builder.add_synset(Synset {
            id,
            lemmas: rec.lemmas.clone(),
            gloss: rec.gloss.clone(),
            pos: rec.pos,
        });
    }
    for (r, rec) in records.iter().enumerate() {
        for &(rel, target_file, target_off) in &rec.pointers {
            let &t = by_offset.get(&(target_file, target_off)).ok_or_else(|| {
                Error::parse(
                    dir.join(format!("data.{}", file_of(rec.pos))).display().to_string(),
                    rec.line,
                    format!("pointer to missing offset {target_off:08} in data.{target_file}"),
                )
            })?;
            builder.add_edge(rel, ids[r].clone(), ids[t].clone());
        }
    }

    let mut report = LoadReport {
        synsets: records.len(),
        ..LoadReport::default()
    };
    if let Some(core_path) = core_list {
        let keys = read_sense_index(dir)?;
        let text = fs::read_to_string(core_path).map_err(|e| Error::io(core_path, e))?;
        for line in text.lines() {
            let Some(key) = core_key(line) else { continue };
            report.core_entries += 1;
            let resolved = keys
                .get(key)
                .and_then(|&(file, off)| by_offset.get(&(file, off)))
                .map(|&r| ids[r].clone());
            match resolved {
                Some(id) => builder.add_core(id),
                None => {
                    report.unmapped_core += 1;
                    warn!("core sense key {key} does not map to a synset");
                }
            }
        }
    }
    let onto = builder.build()?;
    Ok((onto, report))
}

fn parse_data_line(line: &str) -> std::result::Result<Record, String> {
    let (fields, gloss) = line.split_once('|').ok_or("missing `|` gloss separator")?;
    let gloss = gloss.trim().to_string();
    if gloss.is_empty() {
        return Err("empty gloss".into());
    }
    let mut tok = fields.split_ascii_whitespace();
    let mut next = |what: &str| tok.next().ok_or_else(|| format!("truncated record: missing {what}"));
    let offset = parse_offset(next("offset")?)?;
    next("lex_filenum")?;
    let ss_type = next("ss_type")?;
    let pos = single_char(ss_type)
        .and_then(Pos::from_char)
        .ok_or_else(|| format!("bad ss_type `{ss_type}`"))?;
    let w_cnt = usize::from_str_radix(next("w_cnt")?, 16).map_err(|e| format!("bad w_cnt: {e}"))?;
    if w_cnt == 0 {
        return Err("synset without lemmas".into());
    }
    let mut lemmas = Vec::with_capacity(w_cnt);
    for _ in 0..w_cnt {
        lemmas.push(strip_marker(next("word")?).to_string());
        next("lex_id")?;
    }
    let p_cnt: usize = next("p_cnt")?.parse().map_err(|e| format!("bad p_cnt: {e}"))?;
    let mut pointers = Vec::new();
    for _ in 0..p_cnt {
        let symbol = next("pointer symbol")?;
        let target = parse_offset(next("pointer offset")?)?;
        let tpos = next("pointer pos")?;
        next("source/target")?;
        let tfile = single_char(tpos)
            .and_then(Pos::from_char)
            .ok_or_else(|| format!("bad pointer pos `{tpos}`"))?
            .file_suffix();
        if let Some(rel) = WnRelation::from_pointer(symbol) {
            pointers.push((rel, tfile, target));
        }
    }
    Ok(Record {
        offset,
        pos,
        lemmas,
        gloss,
        pointers,
        line: 0,
    })
}

fn parse_index_line(line: &str) -> std::result::Result<(String, Vec<u32>), String> {
    let tok: Vec<&str> = line.split_ascii_whitespace().collect();
    if tok.len() < 4 {
        return Err("truncated index entry".into());
    }
    let synset_cnt: usize = tok[2].parse().map_err(|e| format!("bad synset_cnt: {e}"))?;
    if tok.len() < synset_cnt + 4 {
        return Err("index entry lists fewer offsets than synset_cnt".into());
    }
    let offsets = tok[tok.len() - synset_cnt..]
        .iter()
        .map(|s| parse_offset(s))
        .collect::<std::result::Result<_, _>>()?;
    Ok((tok[0].to_string(), offsets))
}

/// `index.sense`: sense key -> (data file, offset).
fn read_sense_index(dir: &Path) -> Result<HashMap<String, (&'static str, u32)>> {
    let path = dir.join("index.sense");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let name = path.display().to_string();
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let mut tok = line.split_ascii_whitespace();
        let (Some(key), Some(off)) = (tok.next(), tok.next()) else {
            continue;
        };
        let offset = parse_offset(off).map_err(|m| Error::parse(&name, n + 1, m))?;
        let pos = key
            .split_once('%')
            .and_then(|(_, rest)| rest.bytes().next())
            .filter(u8::is_ascii_digit)
            .and_then(|d| Pos::from_ss_type(d - b'0'))
            .ok_or_else(|| Error::parse(&name, n + 1, format!("bad sense key `{key}`")))?;
        out.insert(key.to_string(), (pos.file_suffix(), offset));
    }
    Ok(out)
}

fn core_key(line: &str) -> Option<&str> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    if let (Some(open), Some(close)) = (line.find('['), line.find(']')) {
        if open < close {
            return Some(line[open + 1..close].trim());
        }
    }
    line.split_ascii_whitespace().next()
}

fn parse_offset(s: &str) -> std::result::Result<u32, String> {
    if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("malformed byte offset `{s}`"));
    }
    s.parse().map_err(|e| format!("malformed byte offset `{s}`: {e}"))
}

fn single_char(s: &str) -> Option<char> {
    let mut c = s.chars();
    match (c.next(), c.next()) {
        (Some(ch), None) => Some(ch),
        _ => None,
    }
}

/// Adjective lemmas may carry a syntactic marker such as `(a)`, `(p)` or `(ip)`.
fn strip_marker(word: &str) -> &str {
    match word.strip_suffix(')').and_then(|w| w.rfind('(').map(|i| &w[..i])) {
        Some(stem) if !stem.is_empty() => stem,
        _ => word,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_noun_record() {
        let line = "02084071 05 n 03 dog 0 domestic_dog 0 Canis_familiaris 0 002 @ 02083346 n 0000 %p 02158846 n 0000 | a member of the genus Canis; \"the dog barked all night\"  ";
        let rec = parse_data_line(line).unwrap();
        assert_eq!(rec.offset, 2084071);
        assert_eq!(rec.lemmas, ["dog", "domestic_dog", "Canis_familiaris"]);
        assert_eq!(rec.gloss, "a member of the genus Canis; \"the dog barked all night\"");
        assert_eq!(rec.pointers.len(), 2);
        assert_eq!(rec.pointers[0], (WnRelation::Hypernym, "noun", 2083346));
    }

    #[test]
    fn parses_verb_frames_and_satellite_markers() {
        let verb = "00001740 29 v 04 breathe 0 take_a_breath 0 respire 0 suspire 3 001 @ 00002000 v 0000 02 + 02 00 + 08 01 | draw air into, and expel out of, the lungs";
        let rec = parse_data_line(verb).unwrap();
        assert_eq!(rec.pos, Pos::Verb);
        assert_eq!(rec.lemmas.len(), 4);
        let adj = "00002312 00 s 01 abaxial(p) 0 001 & 00002098 a 0000 | facing away";
        let rec = parse_data_line(adj).unwrap();
        assert_eq!(rec.pos, Pos::Satellite);
        assert_eq!(rec.lemmas, ["abaxial"]);
        assert!(rec.pointers.is_empty());
    }

    #[test]
    fn malformed_offsets_are_rejected() {
        assert!(parse_data_line("0208407x 05 n 01 dog 0 000 | gloss").is_err());
        assert!(parse_data_line("02084071 05 n 01 dog 0 001 @ 123 n 0000 | gloss").is_err());
        assert!(parse_data_line("02084071 05 n 01 dog 0 000 |   ").is_err());
    }

    #[test]
    fn core_list_layouts() {
        assert_eq!(core_key("n [dog%1:05:00::] dog"), Some("dog%1:05:00::"));
        assert_eq!(core_key("dog%1:05:00::"), Some("dog%1:05:00::"));
        assert_eq!(core_key("  "), None);
        assert_eq!(core_key("# comment"), None);
    }

    #[test]
    fn index_entries() {
        let (lemma, offs) = parse_index_line("dog n 7 5 @ ~ #m #p %p 7 1 02084071 10114209 10023039 09886220 07676602 03901548 02710044  ").unwrap();
        assert_eq!(lemma, "dog");
        assert_eq!(offs.len(), 7);
        assert_eq!(offs[0], 2084071);
    }
}
