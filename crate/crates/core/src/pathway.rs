//! Modalities, granularity levels and the routing pathway alphabet.
//!
//! A [`Pathway`] is either the no-retrieval option or a granularity of one
//! modality. Pathways are totally ordered: `none` first, then by modality
//! (text, table, image, video) and, within a modality, from fine to coarse.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type PathwaySet = BTreeSet<Pathway>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Text,
    Table,
    Image,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Text,
        Modality::Table,
        Modality::Image,
        Modality::Video,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Table => "table",
            Modality::Image => "image",
            Modality::Video => "video",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Unit size of the entries in a corpus. Declaration order is the canonical
/// order: modality-major, fine-to-coarse within a modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Paragraph,
    Passage,
    Section,
    Document,
    Table,
    Image,
    Clip,
    Sequence,
    Segment,
    Video,
}

impl Granularity {
    pub const ALL: [Granularity; 10] = [
        Granularity::Paragraph,
        Granularity::Passage,
        Granularity::Section,
        Granularity::Document,
        Granularity::Table,
        Granularity::Image,
        Granularity::Clip,
        Granularity::Sequence,
        Granularity::Segment,
        Granularity::Video,
    ];

    pub fn modality(self) -> Modality {
        use Granularity::*;
        match self {
            Paragraph | Passage | Section | Document => Modality::Text,
            Table => Modality::Table,
            Image => Modality::Image,
            Clip | Sequence | Segment | Video => Modality::Video,
        }
    }

    pub fn label(self) -> &'static str {
        use Granularity::*;
        match self {
            Paragraph => "paragraph",
            Passage => "passage",
            Section => "section",
            Document => "document",
            Table => "table",
            Image => "image",
            Clip => "clip",
            Sequence => "sequence",
            Segment => "segment",
            Video => "video",
        }
    }
}

/// Level of a granularity inside its modality under a given scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GranularityLevel {
    pub modality: Modality,
    /// 1-based; higher is coarser.
    pub ordinal: u8,
    pub label: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum GranularityScheme {
    /// none, paragraph, document, table, image, clip, video
    #[default]
    #[serde(rename = "default7")]
    Default7,
    /// Four text and four video levels.
    #[serde(rename = "extended")]
    Extended,
}

impl GranularityScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            GranularityScheme::Default7 => "default7",
            GranularityScheme::Extended => "extended",
        }
    }

    pub fn granularities(self, modality: Modality) -> &'static [Granularity] {
        use Granularity::*;
        match (self, modality) {
            (GranularityScheme::Default7, Modality::Text) => &[Paragraph, Document],
            (GranularityScheme::Extended, Modality::Text) => &[Paragraph, Passage, Section, Document],
            (_, Modality::Table) => &[Table],
            (_, Modality::Image) => &[Image],
            (GranularityScheme::Default7, Modality::Video) => &[Clip, Video],
            (GranularityScheme::Extended, Modality::Video) => &[Clip, Sequence, Segment, Video],
        }
    }

    pub fn level(self, granularity: Granularity) -> Option<GranularityLevel> {
        let modality = granularity.modality();
        self.granularities(modality)
            .iter()
            .position(|&g| g == granularity)
            .map(|i| GranularityLevel {
                modality,
                ordinal: (i + 1) as u8,
                label: granularity.label(),
            })
    }

    /// Every pathway of the scheme, `none` included, in canonical order.
    pub fn pathways(self) -> Vec<Pathway> {
        std::iter::once(Pathway::None)
            .chain(
                Modality::ALL
                    .into_iter()
                    .flat_map(|m| self.granularities(m).iter().map(|&g| Pathway::Target(g))),
            )
            .collect()
    }

    pub fn contains(self, pathway: Pathway) -> bool {
        match pathway {
            Pathway::None => true,
            Pathway::Target(g) => self.level(g).is_some(),
        }
    }

    /// Position of `pathway` in [`Self::pathways`].
    pub fn index_of(self, pathway: Pathway) -> Option<usize> {
        self.pathways().iter().position(|&p| p == pathway)
    }
}

impl fmt::Display for GranularityScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GranularityScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default7" | "default" => Ok(GranularityScheme::Default7),
            "extended" => Ok(GranularityScheme::Extended),
            _ => Err(Error::invalid(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pathway {
    None,
    Target(Granularity),
}

impl Pathway {
    pub fn label(self) -> &'static str {
        match self {
            Pathway::None => "none",
            Pathway::Target(g) => g.label(),
        }
    }

    /// Capitalized form used in router prompts ("No", "Paragraph", ...).
    pub fn prompt_name(self) -> String {
        match self {
            Pathway::None => "No".to_string(),
            Pathway::Target(g) => {
                let label = g.label();
                let mut chars = label.chars();
                match chars.next() {
                    Some(c) => c.to_ascii_uppercase().to_string() + chars.as_str(),
                    None => String::new(),
                }
            }
        }
    }

    pub fn modality(self) -> Option<Modality> {
        match self {
            Pathway::None => None,
            Pathway::Target(g) => Some(g.modality()),
        }
    }

    pub fn is_none(self) -> bool {
        matches!(self, Pathway::None)
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pathway {
    type Err = Error;

    /// Scheme-independent parse of a single label.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "no" || lower == "none" {
            return Ok(Pathway::None);
        }
        Granularity::ALL
            .into_iter()
            .find(|g| g.label() == lower)
            .map(Pathway::Target)
            .ok_or_else(|| Error::UnknownLabel(s.trim().to_string()))
    }
}

impl Serialize for Pathway {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Pathway {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a router label such as `"Paragraph+Image"` into a pathway set.
pub fn pathway_parse(label: &str, scheme: GranularityScheme) -> Result<PathwaySet> {
    if label.trim().is_empty() {
        return Err(Error::EmptyLabel);
    }
    let mut set = PathwaySet::new();
    for part in label.split('+') {
        let pathway: Pathway = part.parse()?;
        if !scheme.contains(pathway) {
            return Err(Error::UnknownLabel(part.trim().to_string()));
        }
        set.insert(pathway);
    }
    check_exclusive(&set, label)?;
    Ok(set)
}

/// Canonical lowercase form, `+`-joined in canonical order.
pub fn pathway_format(set: &PathwaySet) -> String {
    set.iter().map(|p| p.label()).collect::<Vec<_>>().join("+")
}

/// Parses a list of labels (as found in JSON datasets) under `scheme`.
pub fn parse_label_list<S: AsRef<str>>(labels: &[S], scheme: GranularityScheme) -> Result<PathwaySet> {
    let joined = labels.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join("+");
    pathway_parse(&joined, scheme)
}

pub(crate) fn check_exclusive(set: &PathwaySet, context: &str) -> Result<()> {
    if set.contains(&Pathway::None) && set.len() > 1 {
        return Err(Error::NoneIsExclusive(context.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[Pathway]) -> PathwaySet {
        items.iter().copied().collect()
    }

    #[test]
    fn default_universe_has_seven_pathways_in_canonical_order() {
        let labels: Vec<_> = GranularityScheme::Default7
            .pathways()
            .into_iter()
            .map(Pathway::label)
            .collect();
        assert_eq!(
            labels,
            ["none", "paragraph", "document", "table", "image", "clip", "video"]
        );
        let mut sorted = GranularityScheme::Default7.pathways();
        sorted.sort();
        assert_eq!(sorted, GranularityScheme::Default7.pathways());
    }

    #[test]
    fn extended_universe_slots_levels_by_ordinal() {
        let labels: Vec<_> = GranularityScheme::Extended
            .pathways()
            .into_iter()
            .map(Pathway::label)
            .collect();
        assert_eq!(
            labels,
            [
                "none", "paragraph", "passage", "section", "document", "table", "image", "clip",
                "sequence", "segment", "video"
            ]
        );
    }

    #[test]
    fn levels_are_contiguous_from_one() {
        for scheme in [GranularityScheme::Default7, GranularityScheme::Extended] {
            for m in Modality::ALL {
                let ordinals: Vec<u8> = scheme
                    .granularities(m)
                    .iter()
                    .map(|&g| scheme.level(g).unwrap().ordinal)
                    .collect();
                let expected: Vec<u8> = (1..=ordinals.len() as u8).collect();
                assert_eq!(ordinals, expected);
            }
        }
        let doc = GranularityScheme::Default7.level(Granularity::Document).unwrap();
        assert_eq!((doc.modality, doc.ordinal, doc.label), (Modality::Text, 2, "document"));
        assert!(GranularityScheme::Default7.level(Granularity::Passage).is_none());
    }

    #[test]
    fn modality_parse_is_case_insensitive() {
        assert_eq!("VIDEO".parse::<Modality>().unwrap(), Modality::Video);
        assert_eq!(Modality::Table.to_string(), "table");
        assert!("audio".parse::<Modality>().is_err());
    }

    #[test]
    fn parse_prompt_examples() {
        let s = GranularityScheme::Default7;
        assert_eq!(
            pathway_parse("Paragraph+Image", s).unwrap(),
            set(&[Pathway::Target(Granularity::Paragraph), Pathway::Target(Granularity::Image)])
        );
        assert_eq!(pathway_parse("No", s).unwrap(), set(&[Pathway::None]));
        assert_eq!(pathway_parse("None", s).unwrap(), set(&[Pathway::None]));
        assert_eq!(
            pathway_parse("image + IMAGE", s).unwrap(),
            set(&[Pathway::Target(Granularity::Image)])
        );
    }

    #[test]
    fn parse_errors() {
        let s = GranularityScheme::Default7;
        assert!(matches!(pathway_parse("No+Image", s), Err(Error::NoneIsExclusive(_))));
        assert!(matches!(pathway_parse("Banana", s), Err(Error::UnknownLabel(_))));
        assert!(matches!(pathway_parse("Passage", s), Err(Error::UnknownLabel(_))));
        assert!(matches!(pathway_parse("  ", s), Err(Error::EmptyLabel)));
        assert!(pathway_parse("Passage", GranularityScheme::Extended).is_ok());
    }

    #[test]
    fn prompt_names() {
        assert_eq!(Pathway::None.prompt_name(), "No");
        assert_eq!(Pathway::Target(Granularity::Clip).prompt_name(), "Clip");
    }

    fn scheme_strategy() -> impl Strategy<Value = GranularityScheme> {
        prop_oneof![Just(GranularityScheme::Default7), Just(GranularityScheme::Extended)]
    }

    proptest! {
        #[test]
        fn parse_format_roundtrip(scheme in scheme_strategy(), mask in 0u32..(1 << 11), use_none in any::<bool>()) {
            let universe = scheme.pathways();
            let set: PathwaySet = if use_none {
                set(&[Pathway::None])
            } else {
                universe.iter().skip(1).enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, p)| *p)
                    .collect()
            };
            prop_assume!(!set.is_empty());
            let text = pathway_format(&set);
            prop_assert_eq!(pathway_parse(&text, scheme).unwrap(), set);
        }
    }
}
