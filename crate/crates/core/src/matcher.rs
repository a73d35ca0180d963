//! Candidate (post, claim) pairing by a weighted mix of token overlap and
//! embedding similarity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Claim, PairCandidate, Post};
use crate::exec::Execution;

pub const OFFLINE_EMBEDDER_ID: &str = "hashed-ngram";
pub const OFFLINE_DIMENSION: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("the claim store is empty")]
    EmptyClaimStore,
    #[error("no embedder registered under {0:?}")]
    UnknownEmbedder(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("vector dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid matcher config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Weight on the token score; the semantic score gets `1 - alpha`.
    pub alpha: f64,
    pub top_k: usize,
    pub min_combined_score: f64,
    pub embedder_id: String,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            top_k: 1,
            min_combined_score: 0.0,
            embedder_id: OFFLINE_EMBEDDER_ID.to_string(),
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(MatchError::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.top_k == 0 {
            return Err(MatchError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !self.min_combined_score.is_finite() {
            return Err(MatchError::InvalidConfig(
                "min_combined_score must be finite".into(),
            ));
        }
        Ok(())
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Lowercased word tokens with URLs and @-mentions dropped and hashtag
/// markers stripped.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    for chunk in text.split_whitespace() {
        let chunk = chunk.trim_start_matches(['(', '[', '{', '"', '\'', '<']);
        if chunk.starts_with('@') || is_url(chunk) {
            continue;
        }
        let chunk = chunk.trim_start_matches('#');
        for word in chunk.split(|c: char| !(c.is_alphanumeric() || c == '_')) {
            if !word.is_empty() {
                tokens.insert(word.to_lowercase());
            }
        }
    }
    tokens
}

/// Jaccard index; 0 when both sets are empty.
pub fn token_similarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, MatchError> {
    if u.len() != v.len() {
        return Err(MatchError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, MatchError>;

    fn embed(&self, text: &str) -> Result<Vec<f64>, MatchError> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| MatchError::Provider("embedder returned no vector".into()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Offline embedder: signed hashed character trigram counts folded into a
/// fixed number of buckets, then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dimension: usize,
    n: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self {
            dimension: OFFLINE_DIMENSION,
            n: 3,
        }
    }
}

impl HashedNgramEmbedder {
    pub fn new(dimension: usize, n: usize) -> Self {
        assert!(dimension > 0 && n > 0);
        Self { dimension, n }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.dimension];
        let normalized = text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        if normalized.is_empty() {
            return vector;
        }
        let chars: Vec<char> = format!(" {normalized} ").chars().collect();
        let mut buf = String::new();
        for window in chars.windows(self.n.min(chars.len())) {
            buf.clear();
            buf.extend(window);
            let h = fnv1a(buf.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            vector[bucket] += sign;
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            vector.iter_mut().for_each(|x| *x /= norm);
        }
        vector
    }
}

impl Embedder for HashedNgramEmbedder {
    fn id(&self) -> &str {
        OFFLINE_EMBEDDER_ID
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, MatchError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[derive(Clone)]
pub struct EmbedderRegistry {
    embedders: BTreeMap<String, Arc<dyn Embedder>>,
}

impl Default for EmbedderRegistry {
    /// A registry holding only the offline embedder.
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(Arc::new(HashedNgramEmbedder::default()));
        registry
    }
}

impl EmbedderRegistry {
    pub fn empty() -> Self {
        Self {
            embedders: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, embedder: Arc<dyn Embedder>) {
        self.embedders.insert(embedder.id().to_string(), embedder);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Embedder>, MatchError> {
        self.embedders
            .get(id)
            .cloned()
            .ok_or_else(|| MatchError::UnknownEmbedder(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.embedders.keys().map(String::as_str)
    }
}

/// Embeds `text` with the embedder registered as `embedder_id`.
pub fn embed(
    registry: &EmbedderRegistry,
    embedder_id: &str,
    text: &str,
) -> Result<Vec<f64>, MatchError> {
    registry.get(embedder_id)?.embed(text)
}

/// Weighted mix; negative cosine is clamped to zero first.
pub fn combine_scores(alpha: f64, token_score: f64, semantic_score: f64) -> f64 {
    alpha * token_score + (1.0 - alpha) * semantic_score.max(0.0)
}

struct Indexed<'a> {
    id: &'a str,
    tokens: BTreeSet<String>,
    vector: Vec<f64>,
}

/// One claim scored against a post.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredClaim {
    pub claim_id: String,
    pub token_score: f64,
    pub semantic_score: f64,
    pub combined_score: f64,
}

pub struct Matcher {
    config: MatcherConfig,
    embedder: Arc<dyn Embedder>,
    execution: Execution,
}

impl Matcher {
    pub fn new(config: MatcherConfig, registry: &EmbedderRegistry) -> Result<Self, MatchError> {
        config.validate()?;
        let embedder = registry.get(&config.embedder_id)?;
        Ok(Self {
            config,
            embedder,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    fn index<'a>(&self, items: &[(&'a str, &'a str)]) -> Result<Vec<Indexed<'a>>, MatchError> {
        let texts: Vec<&str> = items.iter().map(|(_, text)| *text).collect();
        let vectors = self.embedder.embed_batch(&texts)?;
        if vectors.len() != items.len() {
            return Err(MatchError::Provider(format!(
                "expected {} vectors, got {}",
                items.len(),
                vectors.len()
            )));
        }
        Ok(items
            .iter()
            .zip(vectors)
            .map(|((id, text), vector)| Indexed {
                id,
                tokens: tokenize(text),
                vector,
            })
            .collect())
    }

    fn rank_indexed(
        &self,
        post: &Indexed<'_>,
        claims: &[Indexed<'_>],
    ) -> Result<Vec<ScoredClaim>, MatchError> {
        let mut scored = Vec::with_capacity(claims.len());
        for claim in claims {
            let token_score = token_similarity(&post.tokens, &claim.tokens);
            let semantic_score = cosine(&post.vector, &claim.vector)?;
            let combined_score = combine_scores(self.config.alpha, token_score, semantic_score);
            if combined_score >= self.config.min_combined_score {
                scored.push(ScoredClaim {
                    claim_id: claim.id.to_string(),
                    token_score,
                    semantic_score,
                    combined_score,
                });
            }
        }
        scored.sort_by(|a, b| {
            b.combined_score
                .total_cmp(&a.combined_score)
                .then_with(|| a.claim_id.cmp(&b.claim_id))
        });
        scored.truncate(self.config.top_k);
        Ok(scored)
    }

    /// Ranks claims for a single free-text post, best first, at most `top_k`.
    pub fn rank(&self, post_text: &str, claims: &[Claim]) -> Result<Vec<ScoredClaim>, MatchError> {
        let claims = unique_by_id(claims, |c| &c.id);
        if claims.is_empty() {
            return Err(MatchError::EmptyClaimStore);
        }
        let claim_items: Vec<_> = claims
            .iter()
            .map(|c| (c.id.as_str(), c.text.as_str()))
            .collect();
        let indexed_claims = self.index(&claim_items)?;
        let post = self
            .index(&[("", post_text)])?
            .pop()
            .expect("one post indexed");
        self.rank_indexed(&post, &indexed_claims)
    }

    /// Keeps the `top_k` best claims per post, then sorts all kept pairs by
    /// combined score descending with ties broken by (post_id, claim_id).
    /// Duplicate ids in either input are collapsed to their first occurrence.
    pub fn pair_candidates(
        &self,
        posts: &[Post],
        claims: &[Claim],
    ) -> Result<Vec<PairCandidate>, MatchError> {
        let claims = unique_by_id(claims, |c| &c.id);
        if claims.is_empty() {
            return Err(MatchError::EmptyClaimStore);
        }
        let posts = unique_by_id(posts, |p| &p.id);

        let claim_items: Vec<_> = claims
            .iter()
            .map(|c| (c.id.as_str(), c.text.as_str()))
            .collect();
        let post_items: Vec<_> = posts
            .iter()
            .map(|p| (p.id.as_str(), p.text.as_str()))
            .collect();
        let indexed_claims = self.index(&claim_items)?;
        let indexed_posts = self.index(&post_items)?;

        let per_post = self.execution.map(&indexed_posts, |post| {
            self.rank_indexed(post, &indexed_claims)
        });

        let mut pairs = Vec::new();
        for (post, ranked) in indexed_posts.iter().zip(per_post) {
            for scored in ranked? {
                pairs.push(PairCandidate {
                    pair_id: PairCandidate::make_id(post.id, &scored.claim_id),
                    post_id: post.id.to_string(),
                    claim_id: scored.claim_id,
                    token_score: scored.token_score,
                    semantic_score: scored.semantic_score,
                    combined_score: scored.combined_score,
                });
            }
        }
        sort_pairs(&mut pairs);
        Ok(pairs)
    }
}

/// Combined score descending, then post id, then claim id.
pub fn sort_pairs(pairs: &mut [PairCandidate]) {
    pairs.sort_by(|a, b| {
        b.combined_score
            .total_cmp(&a.combined_score)
            .then_with(|| a.post_id.cmp(&b.post_id))
            .then_with(|| a.claim_id.cmp(&b.claim_id))
    });
}

fn unique_by_id<T>(items: &[T], id: impl Fn(&T) -> &String) -> Vec<&T> {
    let mut seen = HashSet::new();
    items
        .iter()
        .filter(|item| seen.insert(id(item).clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenize_rules() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n").is_empty());
        assert_eq!(
            tokenize("Vaccinated people EMIT Bluetooth!"),
            set(&["vaccinated", "people", "emit", "bluetooth"])
        );
        assert_eq!(
            tokenize("check https://x.co @bob #VaccineBluetooth"),
            set(&["check", "vaccinebluetooth"])
        );
        assert_eq!(tokenize("a a A"), set(&["a"]));
    }

    #[test]
    fn jaccard_examples() {
        let abc = set(&["a", "b", "c"]);
        assert_eq!(token_similarity(&abc, &abc), 1.0);
        assert_eq!(token_similarity(&abc, &set(&["x", "y"])), 0.0);
        assert_eq!(token_similarity(&abc, &set(&["b", "c", "d"])), 0.5);
        assert_eq!(token_similarity(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(MatchError::DimensionMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn offline_embedding_is_unit_norm_and_deterministic() {
        let e = HashedNgramEmbedder::default();
        let a = e.embed_text("Vaccinated people emit Bluetooth signals.");
        let b = e.embed_text("Vaccinated people emit Bluetooth signals.");
        assert_eq!(a, b);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!(e.embed_text("").iter().all(|&x| x == 0.0));
        assert!(e.embed_text("   ").iter().all(|&x| x == 0.0));
        assert_eq!(a.len(), OFFLINE_DIMENSION);
    }

    #[test]
    fn unknown_embedder_is_rejected() {
        let registry = EmbedderRegistry::default();
        assert!(matches!(
            embed(&registry, "nope", "x"),
            Err(MatchError::UnknownEmbedder(_))
        ));
        let config = MatcherConfig {
            embedder_id: "nope".into(),
            ..MatcherConfig::default()
        };
        assert!(Matcher::new(config, &registry).is_err());
    }

    #[test]
    fn config_bounds() {
        let bad_alpha = MatcherConfig {
            alpha: 1.5,
            ..MatcherConfig::default()
        };
        assert!(bad_alpha.validate().is_err());
        let bad_k = MatcherConfig {
            top_k: 0,
            ..MatcherConfig::default()
        };
        assert!(bad_k.validate().is_err());
    }

    #[test]
    fn single_pair() {
        let matcher = Matcher::new(MatcherConfig::default(), &EmbedderRegistry::default()).unwrap();
        let pairs = matcher
            .pair_candidates(
                &[Post::new("p1", "hello world")],
                &[Claim::new("c1", "world peace")],
            )
            .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].pair_id, "p1::c1");
    }

    #[test]
    fn empty_claims_error() {
        let matcher = Matcher::new(MatcherConfig::default(), &EmbedderRegistry::default()).unwrap();
        assert_eq!(
            matcher.pair_candidates(&[Post::new("p", "x")], &[]),
            Err(MatchError::EmptyClaimStore)
        );
    }

    #[test]
    fn threshold_filters_everything_above_one() {
        let config = MatcherConfig {
            min_combined_score: 1.01,
            ..MatcherConfig::default()
        };
        let matcher = Matcher::new(config, &EmbedderRegistry::default()).unwrap();
        let pairs = matcher
            .pair_candidates(
                &[Post::new("p", "same text")],
                &[Claim::new("c", "same text")],
            )
            .unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn figure_tweet_ranks_its_claim_first() {
        let claims = vec![
            Claim::new("c-bt", "Vaccininated people emit Bluetooth signals."),
            Claim::new("c-5g", "5G towers spread the coronavirus."),
            Claim::new("c-mask", "Wearing masks causes oxygen deficiency."),
        ];
        let matcher = Matcher::new(MatcherConfig::default(), &EmbedderRegistry::default()).unwrap();
        let ranked = matcher
            .rank(
                "omg my dad got vaccinated yesterday and I just connected him to bluetooth",
                &claims,
            )
            .unwrap();
        assert_eq!(ranked[0].claim_id, "c-bt");
    }
}
