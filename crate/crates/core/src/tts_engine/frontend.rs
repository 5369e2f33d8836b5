//! Text normalization and dictionary grapheme-to-phoneme conversion.
//!
//! The inventory is 39 ARPAbet phonemes, a pause symbol and 26 letter
//! symbols used to spell out words missing from the lexicon. Every sequence
//! starts and ends with a pause.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::nn::Mat;

pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub const PAU: usize = ARPABET.len();
const LETTER_BASE: usize = PAU + 1;
pub const N_PHONEMES: usize = LETTER_BASE + 26;
/// One-hot phoneme plus position-in-word, position-in-utterance, pause-after,
/// sentence-end and question flags.
pub const LING_DIM: usize = N_PHONEMES + 5;

const BUILTIN_LEXICON: &str = include_str!("lexicon.txt");

pub fn symbol(id: usize) -> String {
    match id {
        i if i < PAU => ARPABET[i].to_string(),
        PAU => "PAU".to_string(),
        i if i < N_PHONEMES => format!("<{}>", (b'a' + (i - LETTER_BASE) as u8) as char),
        _ => "?".to_string(),
    }
}

pub fn phoneme_id(sym: &str) -> Option<usize> {
    if sym == "PAU" {
        return Some(PAU);
    }
    let base = sym.trim_end_matches(|c: char| c.is_ascii_digit());
    ARPABET.iter().position(|&p| p == base)
}

fn letter_id(c: char) -> Option<usize> {
    c.is_ascii_lowercase().then(|| LETTER_BASE + (c as u8 - b'a') as usize)
}

/// Whether a phoneme is produced with vocal-fold vibration.
pub fn is_voiced(id: usize) -> bool {
    match id {
        PAU => false,
        i if i < PAU => !matches!(ARPABET[i], "P" | "T" | "K" | "F" | "TH" | "S" | "SH" | "CH" | "HH"),
        i if i < N_PHONEMES => {
            let c = (b'a' + (i - LETTER_BASE) as u8) as char;
            !matches!(c, 'c' | 'f' | 'h' | 'k' | 'p' | 'q' | 's' | 't' | 'x')
        }
        _ => false,
    }
}

pub fn is_vowel(id: usize) -> bool {
    match id {
        i if i < PAU => ARPABET[i].starts_with(['A', 'E', 'I', 'O', 'U']),
        i if (LETTER_BASE..N_PHONEMES).contains(&i) => {
            matches!((b'a' + (i - LETTER_BASE) as u8) as char, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
        }
        _ => false,
    }
}

/// Approximate first three formant frequencies (Hz), used for synthetic
/// speech and test signals.
pub fn formants(id: usize) -> [f64; 3] {
    let sym = if id < PAU { ARPABET[id] } else { "" };
    match sym {
        "AA" => [730.0, 1090.0, 2440.0],
        "AE" => [660.0, 1720.0, 2410.0],
        "AH" => [640.0, 1190.0, 2390.0],
        "AO" => [570.0, 840.0, 2410.0],
        "AW" => [700.0, 1100.0, 2400.0],
        "AY" => [700.0, 1500.0, 2500.0],
        "EH" => [530.0, 1840.0, 2480.0],
        "ER" => [490.0, 1350.0, 1690.0],
        "EY" => [480.0, 2000.0, 2600.0],
        "IH" => [390.0, 1990.0, 2550.0],
        "IY" => [270.0, 2290.0, 3010.0],
        "OW" => [450.0, 900.0, 2400.0],
        "OY" => [500.0, 1000.0, 2500.0],
        "UH" => [440.0, 1020.0, 2240.0],
        "UW" => [300.0, 870.0, 2240.0],
        "M" | "N" | "NG" => [280.0, 1300.0, 2500.0],
        "L" | "R" | "W" | "Y" => [360.0, 1200.0, 2300.0],
        _ => [500.0, 1500.0, 2500.0],
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> &'static Lexicon {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| Lexicon::parse(BUILTIN_LEXICON).expect("shipped lexicon parses"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse { path: path.to_path_buf(), line, msg },
            other => other,
        })
    }

    /// Parses `word<TAB>PH1 PH2 ...` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { path: "<lexicon>".into(), line: i + 1, msg };
            let (word, pron) = line
                .split_once('\t')
                .or_else(|| line.split_once(' '))
                .ok_or_else(|| perr("expected `word<TAB>phonemes`".into()))?;
            let ids = pron
                .split_whitespace()
                .map(|p| phoneme_id(p).ok_or_else(|| perr(format!("unknown phoneme `{p}`"))))
                .collect::<Result<Vec<_>>>()?;
            if ids.is_empty() {
                return Err(perr(format!("`{word}` has no phonemes")));
            }
            entries.insert(word.trim().to_lowercase(), ids);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, word: &str) -> Option<&[usize]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Dictionary pronunciation, or letter symbols for unknown words.
    pub fn pronounce(&self, word: &str) -> Vec<usize> {
        match self.get(word) {
            Some(p) => p.to_vec(),
            None => word.chars().filter_map(letter_id).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phone {
    pub id: usize,
    /// Index into [`LinguisticSequence::words`]; `None` for pauses.
    pub word: Option<usize>,
    pub pos_in_word: f64,
    pub pause_after: bool,
    pub sentence_end: bool,
    pub question: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticSequence {
    pub words: Vec<String>,
    pub phones: Vec<Phone>,
}

impl LinguisticSequence {
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.phones.iter().map(|p| p.id).collect()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.phones.iter().map(|p| symbol(p.id)).collect()
    }

    /// `N×LING_DIM` per-phoneme features.
    pub fn features(&self) -> Mat {
        let n = self.phones.len();
        let mut m = Mat::zeros(n, LING_DIM);
        let denom = n.saturating_sub(1).max(1) as f64;
        for (i, p) in self.phones.iter().enumerate() {
            let row = m.row_mut(i);
            row[p.id] = 1.0;
            row[N_PHONEMES] = p.pos_in_word;
            row[N_PHONEMES + 1] = i as f64 / denom;
            row[N_PHONEMES + 2] = p.pause_after as u8 as f64;
            row[N_PHONEMES + 3] = p.sentence_end as u8 as f64;
            row[N_PHONEMES + 4] = p.question as u8 as f64;
        }
        m
    }
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

/// Spells a cardinal in words; numbers past 9999 are read digit by digit.
pub fn number_words(digits: &str) -> Vec<String> {
    let n: Option<u32> = if digits.len() <= 4 { digits.parse().ok() } else { None };
    let Some(mut n) = n else {
        return digits.chars().filter_map(|c| c.to_digit(10)).map(|d| ONES[d as usize].to_string()).collect();
    };
    if n == 0 {
        return vec!["zero".into()];
    }
    let mut out = Vec::new();
    if n >= 1000 {
        out.push(ONES[(n / 1000) as usize].to_string());
        out.push("thousand".into());
        n %= 1000;
    }
    if n >= 100 {
        out.push(ONES[(n / 100) as usize].to_string());
        out.push("hundred".into());
        n %= 100;
    }
    if n >= 20 {
        out.push(TENS[(n / 10) as usize].to_string());
        n %= 10;
        if n > 0 {
            out.push(ONES[n as usize].to_string());
        }
    } else if n > 0 {
        out.push(ONES[n as usize].to_string());
    }
    out
}

#[derive(Debug, PartialEq)]
enum Token {
    Word(String),
    Punct(char),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<Token>| {
        let w = cur.trim_matches('\'').to_string();
        cur.clear();
        if w.is_empty() {
            return;
        }
        if w.chars().all(|c| c.is_ascii_digit()) {
            out.extend(number_words(&w).into_iter().map(Token::Word));
        } else {
            out.push(Token::Word(w));
        }
    };
    for c in text.to_lowercase().chars() {
        if c.is_ascii_alphanumeric() || c == '\'' {
            // Split digit/letter boundaries ("5pm" → 5, pm).
            if let Some(last) = cur.chars().last() {
                if last.is_ascii_digit() != c.is_ascii_digit() && c != '\'' && last != '\'' {
                    flush(&mut cur, &mut out);
                }
            }
            cur.push(c);
        } else {
            flush(&mut cur, &mut out);
            if matches!(c, '.' | ',' | '!' | '?' | ';' | ':') {
                out.push(Token::Punct(c));
            }
        }
    }
    flush(&mut cur, &mut out);
    out
}

fn pause(sentence_end: bool, question: bool) -> Phone {
    Phone { id: PAU, word: None, pos_in_word: 0.0, pause_after: false, sentence_end, question }
}

/// Converts text to a phoneme sequence with per-phoneme context flags.
pub fn text_to_linguistic(text: &str, lexicon: &Lexicon) -> Result<LinguisticSequence> {
    let tokens = tokenize(text);
    let mut words = Vec::new();
    let mut phones = vec![pause(false, false)];
    for tok in tokens {
        match tok {
            Token::Word(w) => {
                let pron = lexicon.pronounce(&w);
                if pron.is_empty() {
                    continue;
                }
                let wi = words.len();
                words.push(w);
                let denom = pron.len().saturating_sub(1).max(1) as f64;
                for (k, id) in pron.into_iter().enumerate() {
                    phones.push(Phone {
                        id,
                        word: Some(wi),
                        pos_in_word: k as f64 / denom,
                        pause_after: false,
                        sentence_end: false,
                        question: false,
                    });
                }
            }
            Token::Punct(c) => {
                let Some(last) = phones.iter_mut().rev().find(|p| p.id != PAU) else { continue };
                if last.pause_after {
                    continue;
                }
                last.pause_after = true;
                last.sentence_end = matches!(c, '.' | '!' | '?');
                last.question = c == '?';
                let (end, q) = (last.sentence_end, last.question);
                phones.push(pause(end, q));
            }
        }
    }
    if words.is_empty() {
        return Err(Error::invalid("text is empty after normalization"));
    }
    if phones.last().map(|p| p.id) != Some(PAU) {
        phones.push(pause(false, false));
    }
    // Consecutive pauses collapse into one.
    phones.dedup_by(|b, a| a.id == PAU && b.id == PAU);
    Ok(LinguisticSequence { words, phones })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> &'static Lexicon {
        Lexicon::builtin()
    }

    #[test]
    fn inventory_sizes() {
        assert_eq!(N_PHONEMES, 66);
        assert_eq!(LING_DIM, N_PHONEMES + 5);
        assert!(lex().len() >= 200);
    }

    #[test]
    fn hello_from_lexicon() {
        let s = text_to_linguistic("hello", lex()).unwrap();
        assert_eq!(s.symbols(), ["PAU", "HH", "AH", "L", "OW", "PAU"]);
        let lexical: Vec<_> = s.phones.iter().filter(|p| p.id != PAU).map(|p| symbol(p.id)).collect();
        assert_eq!(lexical, ["HH", "AH", "L", "OW"]);
    }

    #[test]
    fn shipped_file_is_the_source_of_truth() {
        let line = BUILTIN_LEXICON.lines().find(|l| l.starts_with("hello\t")).unwrap();
        let want: Vec<usize> = line.split('\t').nth(1).unwrap().split(' ').map(|p| phoneme_id(p).unwrap()).collect();
        assert_eq!(lex().get("hello").unwrap(), want.as_slice());
    }

    #[test]
    fn empty_text_rejected() {
        assert!(text_to_linguistic("", lex()).is_err());
        assert!(text_to_linguistic(" ... !", lex()).is_err());
    }

    #[test]
    fn numbers_and_final_pause_flag() {
        let s = text_to_linguistic("2 cats.", lex()).unwrap();
        assert_eq!(s.words, ["two", "cats"]);
        let last = s.phones.iter().rev().find(|p| p.id != PAU).unwrap();
        assert_eq!(symbol(last.id), "S");
        assert!(last.pause_after);
        assert!(last.sentence_end);
    }

    #[test]
    fn cardinals() {
        assert_eq!(number_words("0"), ["zero"]);
        assert_eq!(number_words("17"), ["seventeen"]);
        assert_eq!(number_words("40"), ["forty"]);
        assert_eq!(number_words("305"), ["three", "hundred", "five"]);
        assert_eq!(number_words("9999"), ["nine", "thousand", "nine", "hundred", "ninety", "nine"]);
        assert_eq!(number_words("12345").len(), 5);
    }

    #[test]
    fn oov_falls_back_to_letters() {
        let s = text_to_linguistic("zqx", lex()).unwrap();
        assert_eq!(s.symbols(), ["PAU", "<z>", "<q>", "<x>", "PAU"]);
    }

    #[test]
    fn feature_rows() {
        let s = text_to_linguistic("hello, world?", lex()).unwrap();
        let f = s.features();
        assert_eq!(f.cols, LING_DIM);
        assert_eq!(f.rows, s.len());
        for r in 0..f.rows {
            assert_eq!(f.row(r)[..N_PHONEMES].iter().sum::<f64>(), 1.0);
            assert!(f.row(r)[N_PHONEMES..].iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let q = s.phones.iter().rev().find(|p| p.id != PAU).unwrap();
        assert!(q.question);
        assert_eq!(s.phones.iter().filter(|p| p.id == PAU).count(), 3);
    }
}
