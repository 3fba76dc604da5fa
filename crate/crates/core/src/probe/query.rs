use serde::{Deserialize, Serialize};

use super::{ProbeInstance, HEAD_SLOT};
use crate::error::{Error, Result};
use crate::lm::render_with_gloss;

/// How the head fills its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repr {
    Lemma,
    Synset,
    Slash,
}

impl Repr {
    pub const ALL: [Repr; 3] = [Repr::Lemma, Repr::Synset, Repr::Slash];

    pub fn parse(s: &str) -> Option<Repr> {
        match s.to_ascii_lowercase().as_str() {
            "lemma" | "lem" => Some(Repr::Lemma),
            "synset" | "syn" => Some(Repr::Synset),
            "slash" => Some(Repr::Slash),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Repr::Lemma => "lemma",
            Repr::Synset => "synset",
            Repr::Slash => "slash",
        }
    }
}

/// Which gloss information is used. `avg` selects the gloss-averaged sense
/// table and does not change the text; `pre` prepends the gloss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GlossMode {
    pub avg: bool,
    pub pre: bool,
}

impl GlossMode {
    pub const ALL: [GlossMode; 4] = [
        GlossMode { avg: false, pre: false },
        GlossMode { avg: true, pre: false },
        GlossMode { avg: false, pre: true },
        GlossMode { avg: true, pre: true },
    ];

    /// Subset of `avg,pre` separated by `,` or `+` (so labels parse back);
    /// empty or `none` for neither.
    pub fn parse(s: &str) -> Option<GlossMode> {
        let mut mode = GlossMode::default();
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
            match part {
                "avg" => mode.avg = true,
                "pre" => mode.pre = true,
                _ => return None,
            }
        }
        Some(mode)
    }

    pub fn label(self) -> &'static str {
        match (self.avg, self.pre) {
            (false, false) => "none",
            (true, false) => "avg",
            (false, true) => "pre",
            (true, true) => "avg+pre",
        }
    }
}

pub fn render_query(inst: &ProbeInstance, repr: Repr, gloss: GlossMode) -> Result<String> {
    let token = inst.head.to_token();
    let lemma = inst.head_lemma.trim();
    if lemma.is_empty() && repr != Repr::Synset {
        return Err(Error::Query(format!("instance {} has no head lemma", inst.id)));
    }
    let head = match repr {
        Repr::Lemma => lemma.to_string(),
        Repr::Synset => token,
        Repr::Slash => format!("{lemma} / {token}"),
    };
    let text = inst.assertion.replacen(HEAD_SLOT, &head, 1);
    if gloss.pre {
        render_with_gloss(&inst.head, &inst.gloss, &text)
    } else {
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::test_support::instance;
    use crate::triple::Source;

    #[test]
    fn representations() {
        let inst = instance("x", Source::WordNet, "Hypernym", "pen.n.01", &["tool.n.01"], true);
        let plain = GlossMode::default();
        let lemma = render_query(&inst, Repr::Lemma, plain).unwrap();
        assert_eq!(lemma, "pen is a type of [MASK] .");
        assert!(!lemma.contains("<WN:"));
        assert_eq!(render_query(&inst, Repr::Synset, plain).unwrap(), "<WN:pen.n.01> is a type of [MASK] .");
        assert!(render_query(&inst, Repr::Slash, plain).unwrap().contains("pen / <WN:pen.n.01>"));
        assert_eq!(
            render_query(&inst, Repr::Synset, GlossMode { avg: true, pre: true }).unwrap(),
            "<WN:pen.n.01> can be defined as : gloss of pen.n.01 . [SEP] <WN:pen.n.01> is a type of [MASK] ."
        );
        assert_eq!(render_query(&inst, Repr::Synset, GlossMode { avg: true, pre: false }).unwrap(), render_query(&inst, Repr::Synset, plain).unwrap());
        let mut empty = inst.clone();
        empty.head_lemma.clear();
        assert!(render_query(&empty, Repr::Lemma, plain).is_err());
        assert!(render_query(&empty, Repr::Synset, plain).is_ok());
    }

    #[test]
    fn parsing() {
        assert_eq!(GlossMode::parse("avg,pre"), Some(GlossMode { avg: true, pre: true }));
        assert_eq!(GlossMode::parse("none"), Some(GlossMode::default()));
        assert_eq!(GlossMode::parse("post"), None);
        for g in GlossMode::ALL {
            assert_eq!(GlossMode::parse(g.label()), Some(g));
        }
        assert_eq!(Repr::parse("Syn"), Some(Repr::Synset));
    }
}
