//! Panoramas the server can show, addressed by opaque ids.

use std::collections::BTreeMap;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use whichcountry_core::evalkit::DatasetManifest;
use whichcountry_core::knowledge::{CountryCode, CountryRegistry};

use crate::error::{ErrorKind, GatewayError};

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogItem {
    pub id: String,
    pub path: PathBuf,
    pub truth: CountryCode,
    pub north_offset_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    items: Vec<CatalogItem>,
    by_id: BTreeMap<String, usize>,
}

/// First 16 hex digits of SHA-256 over the path; reveals nothing about the
/// file name.
pub fn panorama_id(path: &std::path::Path) -> String {
    let digest = Sha256::digest(path.to_string_lossy().as_bytes());
    hex::encode(&digest[..8])
}

impl Catalog {
    pub fn from_manifest(manifest: &DatasetManifest, registry: &CountryRegistry) -> Result<Self, GatewayError> {
        let mut catalog = Catalog::default();
        for item in &manifest.items {
            if !registry.contains(&item.truth) {
                return Err(GatewayError::new(
                    ErrorKind::Data,
                    format!("{}: truth {} is not in the registry", item.path.display(), item.truth),
                ));
            }
            let id = panorama_id(&item.path);
            if catalog.by_id.insert(id.clone(), catalog.items.len()).is_some() {
                return Err(GatewayError::new(ErrorKind::Data, format!("panorama id collision {id}")));
            }
            catalog.items.push(CatalogItem {
                id,
                path: item.path.clone(),
                truth: item.truth,
                north_offset_deg: item.north_offset_deg,
            });
        }
        Ok(catalog)
    }

    pub fn get(&self, id: &str) -> Option<&CatalogItem> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn read(&self, id: &str) -> Result<(Vec<u8>, &CatalogItem), GatewayError> {
        let item = self
            .get(id)
            .ok_or_else(|| GatewayError::not_found(format!("unknown panorama {id}")))?;
        let bytes = std::fs::read(&item.path).map_err(|e| GatewayError::io(&item.path, e))?;
        Ok((bytes, item))
    }
}
