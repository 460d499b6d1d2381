//! The deterministic reference embedder: signed feature hashing over
//! content words.
//!
//!     cargo run --example hash_embedding -- "audio cuts off" "sound keeps dropping"

use crowdmatch::embed::{EmbeddingProvider, HashEmbedder};
use crowdmatch::model::{cosine_similarity, percent};

fn main() -> crowdmatch::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = match args.as_slice() {
        [a, b, ..] => (a.clone(), b.clone()),
        _ => ("The audio keeps cutting off".to_string(), "Audio cuts off on Android".to_string()),
    };

    let provider = HashEmbedder::new(384)?;
    let va = provider.embed(&a)?;
    let vb = provider.embed(&b)?;

    let nonzero = |v: &crowdmatch::model::EmbeddingVector| v.values().iter().filter(|x| **x != 0.0).count();
    println!("provider   {} (dim {})", provider.provider_id(), provider.dim());
    println!("a          {a:?}: {} non-zero buckets", nonzero(&va));
    println!("b          {b:?}: {} non-zero buckets", nonzero(&vb));
    let cos = cosine_similarity(&va, &vb)?;
    println!("cosine     {cos:.6} ({:.1}%)", percent(cos));

    // Stopwords never reach the hash, so padding a query does not move it.
    let padded = provider.embed(&format!("{a} and the of it is"))?;
    println!("padded     cosine to a = {:.6}", cosine_similarity(&va, &padded)?);
    Ok(())
}
