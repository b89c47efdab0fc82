//! Code-point range tables assigning every Unicode scalar value to one
//! character class. The tables are listed in `SCRIPTS.md`; keep both in sync.
//!
//! Classes are tested in a fixed order (whitespace, nonprintable, punctuation,
//! digit, then the letter scripts) so that a scalar value that sits in
//! several tables lands in the first one.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptClass {
    Cjk,
    Latin,
    Arabic,
    Cyrillic,
    Devanagari,
    OtherLetter,
    Digit,
    Punctuation,
    Whitespace,
    Nonprintable,
    Other,
}

impl ScriptClass {
    pub const ALL: [ScriptClass; 11] = [
        ScriptClass::Cjk,
        ScriptClass::Latin,
        ScriptClass::Arabic,
        ScriptClass::Cyrillic,
        ScriptClass::Devanagari,
        ScriptClass::OtherLetter,
        ScriptClass::Digit,
        ScriptClass::Punctuation,
        ScriptClass::Whitespace,
        ScriptClass::Nonprintable,
        ScriptClass::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptClass::Cjk => "cjk",
            ScriptClass::Latin => "latin",
            ScriptClass::Arabic => "arabic",
            ScriptClass::Cyrillic => "cyrillic",
            ScriptClass::Devanagari => "devanagari",
            ScriptClass::OtherLetter => "other_letter",
            ScriptClass::Digit => "digit",
            ScriptClass::Punctuation => "punctuation",
            ScriptClass::Whitespace => "whitespace",
            ScriptClass::Nonprintable => "nonprintable",
            ScriptClass::Other => "other",
        }
    }

    /// Letter classes count towards the denominator of script ratios.
    pub fn is_letter_like(self) -> bool {
        !matches!(
            self,
            ScriptClass::Whitespace | ScriptClass::Punctuation | ScriptClass::Digit
        )
    }

    fn index(self) -> usize {
        self as usize
    }
}

type Range = (u32, u32);

pub(crate) const CJK: &[Range] = &[
    (0x3400, 0x4DBF),   // Extension A
    (0x4E00, 0x9FFF),   // Unified Ideographs
    (0xF900, 0xFAFF),   // Compatibility Ideographs
    (0x20000, 0x2A6DF), // Extension B
    (0x2A700, 0x2EBEF), // Extensions C-F
    (0x2F800, 0x2FA1F), // Compatibility Supplement
    (0x30000, 0x3134F), // Extension G
];

const LATIN: &[Range] = &[
    (0x0041, 0x005A),
    (0x0061, 0x007A),
    (0x00AA, 0x00AA),
    (0x00BA, 0x00BA),
    (0x00C0, 0x00D6),
    (0x00D8, 0x00F6),
    (0x00F8, 0x00FF),
    (0x0100, 0x024F), // Extended-A, Extended-B
    (0x0250, 0x02AF), // IPA
    (0x1E00, 0x1EFF), // Extended Additional
    (0x2C60, 0x2C7F), // Extended-C
    (0xA720, 0xA7FF), // Extended-D
    (0xFF21, 0xFF3A), // fullwidth A-Z
    (0xFF41, 0xFF5A), // fullwidth a-z
];

const CYRILLIC: &[Range] = &[(0x0400, 0x04FF), (0x0500, 0x052F), (0x1C80, 0x1C8F)];

const ARABIC: &[Range] = &[
    (0x0600, 0x06FF),
    (0x0750, 0x077F),
    (0x08A0, 0x08FF),
    (0xFB50, 0xFDFF),
    (0xFE70, 0xFEFE),
];

const DEVANAGARI: &[Range] = &[(0x0900, 0x097F), (0xA8E0, 0xA8FF)];

const PUNCTUATION: &[Range] = &[
    (0x0021, 0x002F),
    (0x003A, 0x0040),
    (0x005B, 0x0060),
    (0x007B, 0x007E),
    (0x00A1, 0x00A9),
    (0x00AB, 0x00B1),
    (0x00B4, 0x00B4),
    (0x00B6, 0x00B8),
    (0x00BB, 0x00BB),
    (0x00BF, 0x00BF),
    (0x00D7, 0x00D7),
    (0x00F7, 0x00F7),
    (0x037E, 0x037E), // Greek question mark
    (0x0387, 0x0387),
    (0x055A, 0x055F), // Armenian
    (0x0589, 0x058A),
    (0x060C, 0x060D), // Arabic comma
    (0x061B, 0x061B),
    (0x061D, 0x061F),
    (0x066A, 0x066D),
    (0x06D4, 0x06D4),
    (0x0964, 0x0965), // danda
    (0x0E5A, 0x0E5B), // Thai
    (0x0F04, 0x0F12), // Tibetan marks
    (0x104A, 0x104F), // Myanmar
    (0x1361, 0x1368), // Ethiopic
    (0x17D4, 0x17DA), // Khmer
    (0x2010, 0x2027), // General Punctuation
    (0x2030, 0x205E),
    (0x20A0, 0x20CF), // currency
    (0x2E00, 0x2E7F), // Supplemental Punctuation
    (0x3000, 0x303F), // CJK Symbols and Punctuation
    (0x30FB, 0x30FB),
    (0xFE10, 0xFE1F), // vertical forms
    (0xFE30, 0xFE4F), // CJK compatibility forms
    (0xFE50, 0xFE6B), // small forms
    (0xFF01, 0xFF0F), // fullwidth ASCII punctuation
    (0xFF1A, 0xFF20),
    (0xFF3B, 0xFF40),
    (0xFF5B, 0xFF65),
];

const NONPRINTABLE: &[Range] = &[
    (0x00AD, 0x00AD), // soft hyphen
    (0x200B, 0x200F), // zero-width and direction marks
    (0x202A, 0x202E),
    (0x2060, 0x2064),
    (0x2066, 0x206F),
    (0xFEFF, 0xFEFF),
    (0xFFF9, 0xFFFD), // interlinear annotations, replacement character
    (0xE000, 0xF8FF), // private use
];

fn in_ranges(cp: u32, ranges: &[Range]) -> bool {
    ranges.iter().any(|&(lo, hi)| lo <= cp && cp <= hi)
}

pub fn classify(c: char) -> ScriptClass {
    let cp = c as u32;
    if c.is_whitespace() {
        ScriptClass::Whitespace
    } else if c.is_control() || in_ranges(cp, NONPRINTABLE) {
        ScriptClass::Nonprintable
    } else if in_ranges(cp, PUNCTUATION) {
        ScriptClass::Punctuation
    } else if c.is_numeric() {
        ScriptClass::Digit
    } else if in_ranges(cp, CJK) {
        ScriptClass::Cjk
    } else if in_ranges(cp, LATIN) {
        ScriptClass::Latin
    } else if in_ranges(cp, CYRILLIC) {
        ScriptClass::Cyrillic
    } else if in_ranges(cp, ARABIC) {
        ScriptClass::Arabic
    } else if in_ranges(cp, DEVANAGARI) {
        ScriptClass::Devanagari
    } else if c.is_alphabetic() || is_combining_mark(cp) {
        ScriptClass::OtherLetter
    } else {
        ScriptClass::Other
    }
}

// Dependent vowel signs and tone marks of Brahmic and Southeast Asian scripts
// are not `Alphabetic` in every case; they still belong to the letter stream.
fn is_combining_mark(cp: u32) -> bool {
    matches!(cp, 0x0300..=0x036F | 0x0E31..=0x0E4E | 0x0EB1..=0x0ECD | 0x0F18..=0x0FBC | 0x102B..=0x103E | 0x17B4..=0x17D3)
}

/// Per-class scalar counts of a string.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptHistogram {
    counts: [u64; 11],
}

impl ScriptHistogram {
    pub fn of(text: &str) -> Self {
        let mut hist = Self::default();
        for c in text.chars() {
            hist.counts[classify(c).index()] += 1;
        }
        hist
    }

    pub fn get(&self, class: ScriptClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn cjk(&self) -> u64 {
        self.get(ScriptClass::Cjk)
    }

    /// Scalars that are neither whitespace, punctuation nor digits.
    pub fn letter_like(&self) -> u64 {
        ScriptClass::ALL
            .iter()
            .filter(|c| c.is_letter_like())
            .map(|&c| self.get(c))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScriptClass, u64)> + '_ {
        ScriptClass::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

impl Add for ScriptHistogram {
    type Output = ScriptHistogram;

    fn add(mut self, rhs: ScriptHistogram) -> ScriptHistogram {
        self += rhs;
        self
    }
}

impl AddAssign for ScriptHistogram {
    fn add_assign(&mut self, rhs: ScriptHistogram) {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            *a += b;
        }
    }
}

pub fn script_histogram(text: &str) -> ScriptHistogram {
    ScriptHistogram::of(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(pairs: &[(ScriptClass, u64)]) -> ScriptHistogram {
        let mut h = ScriptHistogram::default();
        for &(c, n) in pairs {
            h.counts[c.index()] = n;
        }
        h
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(script_histogram(""), ScriptHistogram::default());
    }

    #[test]
    fn mixed_cjk_latin() {
        // U+4F60, U+597D fall in 4E00-9FFF; 'a', 'b' in 0061-007A
        assert_eq!(
            script_histogram("你好ab"),
            hist(&[(ScriptClass::Cjk, 2), (ScriptClass::Latin, 2)])
        );
    }

    #[test]
    fn ascii_classes() {
        assert_eq!(
            script_histogram("a 1."),
            hist(&[
                (ScriptClass::Latin, 1),
                (ScriptClass::Whitespace, 1),
                (ScriptClass::Digit, 1),
                (ScriptClass::Punctuation, 1),
            ])
        );
    }

    #[test]
    fn cjk_punctuation_is_punctuation() {
        assert_eq!(classify('。'), ScriptClass::Punctuation);
        assert_eq!(classify('、'), ScriptClass::Punctuation);
        assert_eq!(classify('\u{3000}'), ScriptClass::Whitespace);
        assert_eq!(classify('，'), ScriptClass::Punctuation);
    }

    #[test]
    fn other_scripts() {
        assert_eq!(classify('ж'), ScriptClass::Cyrillic);
        assert_eq!(classify('ب'), ScriptClass::Arabic);
        assert_eq!(classify('क'), ScriptClass::Devanagari);
        assert_eq!(classify('α'), ScriptClass::OtherLetter);
        assert_eq!(classify('ก'), ScriptClass::OtherLetter);
        assert_eq!(classify('é'), ScriptClass::Latin);
        assert_eq!(classify('©'), ScriptClass::Punctuation);
        assert_eq!(classify('😀'), ScriptClass::Other);
        assert_eq!(classify('\u{0}'), ScriptClass::Nonprintable);
        assert_eq!(classify('\u{200B}'), ScriptClass::Nonprintable);
        assert_eq!(classify('٣'), ScriptClass::Digit);
        assert_eq!(classify('１'), ScriptClass::Digit);
    }

    proptest! {
        #[test]
        fn histogram_is_additive(a in ".{0,40}", b in ".{0,40}") {
            let joined = format!("{a}{b}");
            prop_assert_eq!(script_histogram(&joined), script_histogram(&a) + script_histogram(&b));
        }

        #[test]
        fn histogram_total_is_scalar_count(s in ".{0,80}") {
            prop_assert_eq!(script_histogram(&s).total(), s.chars().count() as u64);
        }
    }
}
