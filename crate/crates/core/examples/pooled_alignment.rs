//! Filtered contextual-token pooling: the content-word filter and the
//! backend tokenize the same text differently; spans are aligned by offset
//! and only backend pieces under a kept word are averaged.

use std::sync::Arc;

use crowdmatch::embed::{pooled_contextual_embed, ContextHashBackend, EmbeddingProvider, PooledEmbedder, TokenEmbeddingBackend};
use crowdmatch::model::cosine_similarity;
use crowdmatch::text::{align_tokens, normalize, StopwordFilter, TokenFilter};

fn main() -> crowdmatch::Result<()> {
    let text = "The subtitles are never synchronized";
    let normalized = normalize(text);
    let backend = ContextHashBackend::new(64)?;
    let filter = StopwordFilter::default();

    let kept = filter.kept_spans(&normalized);
    let (pieces, _) = backend.contextual_token_embeddings(&normalized)?;
    let alignment = align_tokens(&kept, &pieces);

    println!("text: {normalized:?}");
    for (word, targets) in kept.iter().zip(&alignment.mapping) {
        let names: Vec<&str> = targets.iter().map(|&j| pieces[j].text.as_str()).collect();
        println!("  {:<14} [{:>2},{:>2}) -> {names:?}", word.text, word.start, word.end);
    }
    let all: Vec<usize> = (0..kept.len()).collect();
    println!("pooled pieces: {:?} of {}", alignment.project(&all), pieces.len());

    let v = pooled_contextual_embed(&backend, &filter, text)?;
    println!("vector: {} ({} dims)", v.provider_id(), v.dim());

    let provider = PooledEmbedder::new(Arc::new(backend), Arc::new(filter));
    let a = provider.embed("Subtitles out of sync")?;
    let b = provider.embed("subtitle synchronisation is broken")?;
    println!("cosine(a, b) = {:.4}", cosine_similarity(&a, &b)?);
    Ok(())
}
