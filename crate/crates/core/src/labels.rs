//! The five territorial-control indicators and their text/vector codecs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One binary indicator. Declaration order is the canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Military,
    Location,
    MilitaryCasualties,
    CivilianCasualties,
    IsisVictory,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Military,
        Label::Location,
        Label::MilitaryCasualties,
        Label::CivilianCasualties,
        Label::IsisVictory,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Label::Military => "t_mil",
            Label::Location => "t_loc",
            Label::MilitaryCasualties => "t_milcas",
            Label::CivilianCasualties => "t_civcas",
            Label::IsisVictory => "t_isis_vic",
        }
    }

    pub const fn description(self) -> &'static str {
        match self {
            Label::Military => "Event is about war/military operations",
            Label::Location => "Event report includes reference to specific location",
            Label::MilitaryCasualties => "Event report mentions military casualties",
            Label::CivilianCasualties => "Event report mentions civilian casualties",
            Label::IsisVictory => "ISIS won the conflict",
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Canonical label names, in order.
pub const LABEL_NAMES: [&str; 5] = [
    Label::Military.name(),
    Label::Location.name(),
    Label::MilitaryCasualties.name(),
    Label::CivilianCasualties.name(),
    Label::IsisVictory.name(),
];

/// Truth values for the five indicators.
///
/// Serialized as an object with exactly the five label names as boolean
/// fields; unknown or missing names are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSet {
    pub t_mil: bool,
    pub t_loc: bool,
    pub t_milcas: bool,
    pub t_civcas: bool,
    pub t_isis_vic: bool,
}

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet {
        t_mil: false,
        t_loc: false,
        t_milcas: false,
        t_civcas: false,
        t_isis_vic: false,
    };

    pub const FULL: LabelSet = LabelSet {
        t_mil: true,
        t_loc: true,
        t_milcas: true,
        t_civcas: true,
        t_isis_vic: true,
    };

    pub fn from_labels<I: IntoIterator<Item = Label>>(labels: I) -> Self {
        let mut set = Self::EMPTY;
        for l in labels {
            set.set(l, true);
        }
        set
    }

    pub fn get(&self, label: Label) -> bool {
        match label {
            Label::Military => self.t_mil,
            Label::Location => self.t_loc,
            Label::MilitaryCasualties => self.t_milcas,
            Label::CivilianCasualties => self.t_civcas,
            Label::IsisVictory => self.t_isis_vic,
        }
    }

    pub fn set(&mut self, label: Label, value: bool) {
        let slot = match label {
            Label::Military => &mut self.t_mil,
            Label::Location => &mut self.t_loc,
            Label::MilitaryCasualties => &mut self.t_milcas,
            Label::CivilianCasualties => &mut self.t_civcas,
            Label::IsisVictory => &mut self.t_isis_vic,
        };
        *slot = value;
    }

    /// True labels in canonical order.
    pub fn iter_true(&self) -> impl Iterator<Item = Label> + '_ {
        Label::ALL.into_iter().filter(|l| self.get(*l))
    }

    /// 5-bit vector in canonical order (position i is 1 iff label i holds).
    pub fn encode(&self) -> [u8; 5] {
        Label::ALL.map(|l| u8::from(self.get(l)))
    }

    pub fn from_bits(bits: [bool; 5]) -> Self {
        let mut set = Self::EMPTY;
        for (l, b) in Label::ALL.into_iter().zip(bits) {
            set.set(l, b);
        }
        set
    }

    /// Bit i of the mask is label i.
    pub fn from_mask(mask: u8) -> Self {
        Self::from_bits(std::array::from_fn(|i| mask >> i & 1 == 1))
    }

    pub fn to_mask(&self) -> u8 {
        Label::ALL
            .into_iter()
            .fold(0, |m, l| m | (u8::from(self.get(l)) << l.index()))
    }

    /// Every one of the 32 possible label sets.
    pub fn all_sets() -> impl Iterator<Item = LabelSet> {
        (0u8..32).map(Self::from_mask)
    }

    /// Names of the true labels, canonical order, joined by `", "`.
    pub fn render(&self) -> String {
        self.iter_true().map(Label::name).collect::<Vec<_>>().join(", ")
    }

    /// Total inverse of [`LabelSet::render`]; see [`parse_label_string`].
    pub fn parse(text: &str) -> ParsedLabels {
        parse_label_string(text)
    }
}

pub fn encode_labels(labels: &LabelSet) -> [u8; 5] {
    labels.encode()
}

pub fn render_label_string(labels: &LabelSet) -> String {
    labels.render()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedLabels {
    pub labels: LabelSet,
    pub unknown_tokens: Vec<String>,
}

/// Splits on commas and trims each piece. Recognised names set their label
/// (duplicates are harmless); other non-empty pieces are collected verbatim.
/// Never fails.
pub fn parse_label_string(text: &str) -> ParsedLabels {
    let mut parsed = ParsedLabels::default();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token.parse::<Label>() {
            Ok(label) => parsed.labels.set(label, true),
            Err(unknown) => parsed.unknown_tokens.push(unknown),
        }
    }
    parsed
}

/// Union, used to lift sentence-level annotations to article level.
impl std::ops::BitOr for LabelSet {
    type Output = LabelSet;

    fn bitor(self, rhs: LabelSet) -> LabelSet {
        LabelSet::from_mask(self.to_mask() | rhs.to_mask())
    }
}

impl std::ops::BitOrAssign for LabelSet {
    fn bitor_assign(&mut self, rhs: LabelSet) {
        *self = *self | rhs;
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
