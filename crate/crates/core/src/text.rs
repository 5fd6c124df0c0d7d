//! Tokenizer shared by BM25, the hashed embedder and the semantic scorer:
//! lowercase, split on anything that is not alphanumeric. No stemming, no stopwords.

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Number of whitespace-separated words, used for word-limit reporting.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
