//! Fingering model for the 14-actuator covered-key flute.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::midi_ingest::{note_name, parse_note_name};
use crate::{HIGHEST_NOTE, LOWEST_NOTE};

/// Default table shipped with the crate.
pub const DEFAULT_TABLE_TEXT: &str = include_str!("../../../tables/boehm_default.fingering");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FingeringError {
    #[error("MIDI note {0} is outside the playable range {LOWEST_NOTE}..={HIGHEST_NOTE}")]
    Range(i32),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fingering table has no entry for {0}")]
    Missing(String),
}

/// One actuator of the fingering mechanism.
///
/// Keys close their tone hole when pressed; levers open a linked key.
/// Both are represented the same way here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyId {
    LowC,
    CSharp,
    DSharpLever,
    D,
    DSharpTrillLever,
    E,
    DTrillLever,
    F,
    GSharpLever,
    G,
    A,
    BFlat,
    C,
    B,
}

impl KeyId {
    pub const ALL: [KeyId; 14] = [
        KeyId::LowC,
        KeyId::CSharp,
        KeyId::DSharpLever,
        KeyId::D,
        KeyId::DSharpTrillLever,
        KeyId::E,
        KeyId::DTrillLever,
        KeyId::F,
        KeyId::GSharpLever,
        KeyId::G,
        KeyId::A,
        KeyId::BFlat,
        KeyId::C,
        KeyId::B,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyId::LowC => "LowC",
            KeyId::CSharp => "CSharp",
            KeyId::DSharpLever => "DSharpLever",
            KeyId::D => "D",
            KeyId::DSharpTrillLever => "DSharpTrillLever",
            KeyId::E => "E",
            KeyId::DTrillLever => "DTrillLever",
            KeyId::F => "F",
            KeyId::GSharpLever => "GSharpLever",
            KeyId::G => "G",
            KeyId::A => "A",
            KeyId::BFlat => "BFlat",
            KeyId::C => "C",
            KeyId::B => "B",
        }
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KeyId {
    type Err = FingeringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeyId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FingeringError::UnknownKey(s.to_string()))
    }
}

/// Set of engaged actuators, one bit per [`KeyId`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyMask(u16);

impl KeyMask {
    pub const EMPTY: KeyMask = KeyMask(0);
    const FULL: u16 = (1 << 14) - 1;

    pub fn from_bits(bits: u16) -> Self {
        KeyMask(bits & Self::FULL)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, key: KeyId) -> bool {
        self.0 & (1 << key.index()) != 0
    }

    pub fn insert(&mut self, key: KeyId) {
        self.0 |= 1 << key.index();
    }

    pub fn remove(&mut self, key: KeyId) {
        self.0 &= !(1 << key.index());
    }

    pub fn with(mut self, key: KeyId) -> Self {
        self.insert(key);
        self
    }

    pub fn without(mut self, key: KeyId) -> Self {
        self.remove(key);
        self
    }

    pub fn union(self, other: KeyMask) -> Self {
        KeyMask(self.0 | other.0)
    }

    pub fn intersection(self, other: KeyMask) -> Self {
        KeyMask(self.0 & other.0)
    }

    /// `self \ other`
    pub fn difference(self, other: KeyMask) -> Self {
        KeyMask(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = KeyId> {
        KeyId::ALL.into_iter().filter(move |k| self.contains(*k))
    }
}

impl FromIterator<KeyId> for KeyMask {
    fn from_iter<I: IntoIterator<Item = KeyId>>(iter: I) -> Self {
        let mut m = KeyMask::EMPTY;
        for k in iter {
            m.insert(k);
        }
        m
    }
}

impl fmt::Display for KeyMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let names: Vec<_> = self.iter().map(KeyId::name).collect();
        f.write_str(&names.join(", "))
    }
}

impl Serialize for KeyMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for KeyMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let keys = Vec::<KeyId>::deserialize(d)?;
        Ok(keys.into_iter().collect())
    }
}

/// Keys to press and release when moving between two fingerings.
pub fn transition_diff(from: KeyMask, to: KeyMask) -> (KeyMask, KeyMask) {
    (to.difference(from), from.difference(to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Register {
    Low,
    Middle,
    High,
}

/// Register boundaries; both bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterBounds {
    pub low_max: u8,
    pub high_min: u8,
}

impl Default for RegisterBounds {
    fn default() -> Self {
        // C#5 tops the fundamental-mode register
        Self {
            low_max: 73,
            high_min: 94,
        }
    }
}

impl RegisterBounds {
    pub fn classify(&self, note: u8) -> Result<Register, FingeringError> {
        check_range(note.into())?;
        Ok(if note >= self.high_min {
            Register::High
        } else if note <= self.low_max {
            Register::Low
        } else {
            Register::Middle
        })
    }
}

pub fn classify_register(note: u8, low_register_max: u8) -> Result<Register, FingeringError> {
    RegisterBounds {
        low_max: low_register_max,
        ..RegisterBounds::default()
    }
    .classify(note)
}

fn check_range(note: i32) -> Result<u8, FingeringError> {
    u8::try_from(note)
        .ok()
        .filter(|n| (LOWEST_NOTE..=HIGHEST_NOTE).contains(n))
        .ok_or(FingeringError::Range(note))
}

const TABLE_LEN: usize = (HIGHEST_NOTE - LOWEST_NOTE + 1) as usize;

/// Total map from every playable note to its fingering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingeringTable {
    version: String,
    masks: [KeyMask; TABLE_LEN],
}

impl Default for FingeringTable {
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE_TEXT).expect("shipped fingering table parses")
    }
}

impl FingeringTable {
    /// Strict parse of the table file format.
    pub fn parse(text: &str) -> Result<Self, FingeringError> {
        let mut version = String::from("unversioned");
        let mut masks: [Option<KeyMask>; TABLE_LEN] = [None; TABLE_LEN];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| FingeringError::Parse { line, message };
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (head, rest) = content
                .split_once(char::is_whitespace)
                .unwrap_or((content, ""));
            let rest = rest.trim();
            if head == "version" {
                if rest.is_empty() {
                    return Err(err("empty version tag".into()));
                }
                version = rest.to_string();
                continue;
            }
            let note = parse_note_name(head).ok_or_else(|| err(format!("invalid note `{head}`")))?;
            let note = check_range(note).map_err(|e| err(e.to_string()))?;
            let mask = if rest.is_empty() || rest == "-" {
                KeyMask::EMPTY
            } else {
                rest.split(',')
                    .map(|k| k.trim().parse::<KeyId>())
                    .collect::<Result<KeyMask, _>>()
                    .map_err(|e| err(e.to_string()))?
            };
            let slot = &mut masks[usize::from(note - LOWEST_NOTE)];
            if slot.is_some() {
                return Err(err(format!("duplicate entry for {head}")));
            }
            *slot = Some(mask);
        }
        let mut out = [KeyMask::EMPTY; TABLE_LEN];
        for (i, m) in masks.iter().enumerate() {
            out[i] = m.ok_or_else(|| FingeringError::Missing(note_name(LOWEST_NOTE + i as u8)))?;
        }
        Ok(Self {
            version,
            masks: out,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn lookup(&self, note: u8) -> Result<KeyMask, FingeringError> {
        let note = check_range(note.into())?;
        Ok(self.masks[usize::from(note - LOWEST_NOTE)])
    }

    /// Notes fingered with exactly `mask`, ascending.
    pub fn notes_for(&self, mask: KeyMask) -> impl Iterator<Item = u8> + '_ {
        (LOWEST_NOTE..=HIGHEST_NOTE).filter(move |&n| self.masks[usize::from(n - LOWEST_NOTE)] == mask)
    }

    /// The note a fingering sounds when the player aims at `intended`.
    ///
    /// Octave-sharing fingerings are told apart by breath, so the candidate
    /// closest to the intended note wins (lower on ties).
    pub fn sounding_note(&self, mask: KeyMask, intended: u8) -> Option<u8> {
        self.notes_for(mask)
            .min_by_key(|&n| (i32::from(n) - i32::from(intended)).abs())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("version {}\n", self.version);
        for (i, m) in self.masks.iter().enumerate() {
            out.push_str(&format!("{} {}\n", note_name(LOWEST_NOTE + i as u8), m));
        }
        out
    }
}

pub fn lookup_fingering(note: u8, table: &FingeringTable) -> Result<KeyMask, FingeringError> {
    table.lookup(note)
}
