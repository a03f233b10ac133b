use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::provenance::Service;

/// Ordered set of services. Position in the list is the row/column index used
/// by every embedding matrix, so the order is part of a trained model.
#[derive(Debug, Clone, Default)]
pub struct ServiceVocabulary {
    services: Vec<Service>,
    index: HashMap<String, usize>,
}

impl ServiceVocabulary {
    /// Builds a vocabulary sorted by service id. Later duplicates are ignored.
    pub fn from_services<I: IntoIterator<Item = Service>>(services: I) -> Self {
        let mut list: Vec<Service> = services.into_iter().collect();
        list.sort_by(|a, b| a.id.cmp(&b.id));
        list.dedup_by(|a, b| a.id == b.id);
        Self::from_ordered(list)
    }

    fn from_ordered(services: Vec<Service>) -> Self {
        let index = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        Self { services, index }
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.get(id).ok_or_else(|| Error::UnknownService(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn id(&self, index: usize) -> &str {
        &self.services[index].id
    }

    pub fn service(&self, index: usize) -> &Service {
        &self.services[index]
    }

    pub fn services(&self) -> &[Service] {
        &self.services
    }
}

impl PartialEq for ServiceVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.services == other.services
    }
}

impl Serialize for ServiceVocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.services.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ServiceVocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let services = Vec::<Service>::deserialize(d)?;
        let vocab = Self::from_ordered(services);
        if vocab.index.len() != vocab.services.len() {
            return Err(serde::de::Error::custom("duplicate service id in vocabulary"));
        }
        Ok(vocab)
    }
}
