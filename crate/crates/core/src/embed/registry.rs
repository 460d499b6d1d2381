use std::collections::BTreeMap;
use std::sync::Arc;

use crate::embed::{ContextHashBackend, EmbeddingProvider, HashEmbedder, PooledEmbedder, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::text::StopwordFilter;

/// Directory of providers keyed by provider id.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    providers: BTreeMap<String, Arc<dyn EmbeddingProvider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        ProviderRegistry::default()
    }

    /// `ref-384` and `pooled:hashctx-384:stopword-v1`, both model-free.
    pub fn with_builtins() -> Self {
        ProviderRegistry::with_builtins_using(StopwordFilter::default())
    }

    pub fn with_builtins_using(filter: StopwordFilter) -> Self {
        let mut registry = ProviderRegistry::new();
        let reference = HashEmbedder::with_filter(DEFAULT_DIM, filter.clone())
            .expect("default dimension is valid");
        let backend = ContextHashBackend::new(DEFAULT_DIM).expect("default dimension is valid");
        let pooled = PooledEmbedder::new(Arc::new(backend), Arc::new(filter));
        registry
            .register(Arc::new(reference))
            .and_then(|_| registry.register(Arc::new(pooled)))
            .expect("builtin ids are distinct");
        registry
    }

    pub fn register(&mut self, provider: Arc<dyn EmbeddingProvider>) -> Result<()> {
        let id = provider.provider_id().to_string();
        if self.providers.contains_key(&id) {
            return Err(Error::DuplicateProvider(id));
        }
        self.providers.insert(id, provider);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn EmbeddingProvider>> {
        self.providers
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownProvider(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.providers.contains_key(id)
    }

    /// Registered ids in ascending order.
    pub fn list(&self) -> Vec<String> {
        self.providers.keys().cloned().collect()
    }
}

impl std::fmt::Debug for ProviderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderRegistry")
            .field("providers", &self.list())
            .finish()
    }
}
