use serde::{Deserialize, Serialize};

pub const STOPWORDS_VERSION: &str = "en-1";

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me",
    "more", "most", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "out", "over", "own", "same", "she", "should", "so", "some",
    "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "us", "using", "very", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "would", "you", "your",
];

/// Tokenization settings stored alongside a trained embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPipelineConfig {
    pub stopwords_version: String,
    pub stopwords: Vec<String>,
    pub min_token_len: usize,
    pub stemming: bool,
}

impl Default for TextPipelineConfig {
    fn default() -> Self {
        Self {
            stopwords_version: STOPWORDS_VERSION.to_string(),
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            min_token_len: 2,
            stemming: true,
        }
    }
}

impl TextPipelineConfig {
    fn keep(&self, token: &str) -> bool {
        token.chars().count() >= self.min_token_len
            && self.stopwords.binary_search_by(|s| s.as_str().cmp(token)).is_err()
    }

    /// Lowercase alphanumeric tokens, stopwords and short tokens removed, then
    /// suffix-stemmed to a fixed point. Running it again on the joined output
    /// returns the same tokens.
    pub fn preprocess(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .filter(|t| self.keep(t))
            .map(|t| if self.stemming { stem(&t) } else { t })
            .filter(|t| self.keep(t))
            .collect()
    }
}

const MIN_STEM: usize = 3;

fn strip_once(word: &str) -> Option<&str> {
    let n = word.len();
    let stem_ok = |s: &str| s.chars().count() >= MIN_STEM;
    for suffix in ["ing", "ed"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem_ok(stem) {
                return Some(stem);
            }
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if ["s", "x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s)) && stem_ok(stem) {
            return Some(stem);
        }
    }
    if n > 1 && word.ends_with('s') && !word.ends_with("ss") {
        let stem = &word[..n - 1];
        if stem_ok(stem) {
            return Some(stem);
        }
    }
    None
}

/// Light suffix stemmer (-ing, -ed, -es, -s) applied until nothing changes.
pub fn stem(word: &str) -> String {
    let mut current = word;
    while let Some(next) = strip_once(current) {
        current = next;
    }
    current.to_string()
}
