use super::{EmbedError, Embedder, EmbeddingVector, Normalization};
use crate::hashing::fnv1a64;

/// Offline embedder: hashed token unigram and bigram counts.
///
/// Tokens are maximal runs of identifier characters (`[A-Za-z0-9_]` and other
/// alphanumerics) or of operator characters (anything else that is not
/// whitespace). Bigrams pair adjacent tokens on the same line, so reordering
/// whole lines only moves features around and leaves the vector unchanged.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dim: usize,
    normalization: Normalization,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Ident,
    Operator,
    Space,
}

fn class_of(c: char) -> CharClass {
    if c.is_alphanumeric() || c == '_' {
        CharClass::Ident
    } else if c.is_whitespace() {
        CharClass::Space
    } else {
        CharClass::Operator
    }
}

/// Splits one line into identifier and operator runs.
pub fn tokenize(line: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, CharClass)> = None;
    for (i, c) in line.char_indices() {
        let class = class_of(c);
        if let Some((s, cls)) = start {
            if cls == class {
                continue;
            }
            tokens.push(&line[s..i]);
            start = None;
        }
        if class != CharClass::Space {
            start = Some((i, class));
        }
    }
    if let Some((s, _)) = start {
        tokens.push(&line[s..]);
    }
    tokens
}

impl HashedEmbedder {
    pub fn new(dim: usize, normalization: Normalization) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be at least 1".into()));
        }
        Ok(Self { dim, normalization })
    }

    fn bucket(&self, feature: &[u8]) -> usize {
        (fnv1a64(feature) % self.dim as u64) as usize
    }
}

impl Embedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!(
            "hashed_local(dim={}, normalization={:?})",
            self.dim, self.normalization
        )
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut counts = vec![0.0f64; self.dim];
        let mut feature = Vec::with_capacity(64);
        for line in text.lines() {
            let tokens = tokenize(line);
            for tok in &tokens {
                feature.clear();
                feature.extend_from_slice(b"1\x1f");
                feature.extend_from_slice(tok.as_bytes());
                counts[self.bucket(&feature)] += 1.0;
            }
            for pair in tokens.windows(2) {
                feature.clear();
                feature.extend_from_slice(b"2\x1f");
                feature.extend_from_slice(pair[0].as_bytes());
                feature.push(0x1f);
                feature.extend_from_slice(pair[1].as_bytes());
                counts[self.bucket(&feature)] += 1.0;
            }
        }
        self.normalization.apply(EmbeddingVector::new(counts)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_text;

    const SNIPPET: &str =
        "int copy(char *dst, const char *src) {\n    strcpy(dst, src);\n    return 0;\n}\n";

    #[test]
    fn tokenizer_splits_identifiers_and_operator_runs() {
        assert_eq!(
            tokenize("p->len += 1;"),
            vec!["p", "->", "len", "+=", "1", ";"]
        );
        assert_eq!(
            tokenize("  strcpy(dst, src));"),
            vec!["strcpy", "(", "dst", ",", "src", "));"]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn deterministic() {
        let e = HashedEmbedder::new(256, Normalization::L2).unwrap();
        let a = e.embed(SNIPPET).unwrap();
        let b = e.embed(SNIPPET).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn l2_output_has_unit_norm() {
        let e = HashedEmbedder::new(256, Normalization::L2).unwrap();
        let v = embed_text(SNIPPET, &e).unwrap();
        assert_eq!(v.dim(), 256);
        assert!((v.norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn raw_counts_without_normalization() {
        let e = HashedEmbedder::new(64, Normalization::None).unwrap();
        let v = e.embed("a b").unwrap();
        // two unigrams + one bigram
        assert_eq!(v.values().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn empty_text_rejected() {
        let e = HashedEmbedder::new(8, Normalization::L2).unwrap();
        assert!(matches!(embed_text("", &e), Err(EmbedError::EmptyText)));
        assert!(matches!(
            embed_text(" \n\t", &e),
            Err(EmbedError::EmptyText)
        ));
    }

    #[test]
    fn line_permutation_preserves_vector() {
        let e = HashedEmbedder::new(128, Normalization::L2).unwrap();
        let a = e.embed("x = y + 1;\nfree(p);\nreturn x;").unwrap();
        let b = e.embed("return x;\nx = y + 1;\nfree(p);").unwrap();
        assert_eq!(a, b);
        let c = e.embed("return x;\nx = 1 + y;\nfree(p);").unwrap();
        assert_ne!(a, c);
    }
}
