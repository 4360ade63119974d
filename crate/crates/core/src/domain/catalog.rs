//! Item and ad catalogs with cached one-hot features.
//!
//! CSV layouts (with header row):
//!
//! * `items.csv`: `id,like_score,finish_score,comment_score,follow_score,group_score`
//! * `ads.csv`: `id,image_size,bid_price,hidden_cost,predicted_ctr,predicted_recall`

use std::path::Path;

use super::embed::active_positions;
use super::{AdId, AdItem, FeatureSchema, ItemId, RegularItem};
use crate::error::{RamError, Result};

#[derive(Clone, Debug)]
pub struct Catalog {
    pub schema: FeatureSchema,
    items: Vec<RegularItem>,
    ads: Vec<AdItem>,
    item_active: Vec<Vec<usize>>,
    ad_active: Vec<Vec<usize>>,
}

impl Catalog {
    /// Ids must be dense: item `i` has id `i`.
    pub fn new(schema: FeatureSchema, items: Vec<RegularItem>, ads: Vec<AdItem>) -> Result<Self> {
        for (i, it) in items.iter().enumerate() {
            if it.id.0 as usize != i {
                return Err(RamError::Input(format!(
                    "item at position {i} has id {}",
                    it.id.0
                )));
            }
            if it.scores().iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(RamError::Input(format!(
                    "item {i} has a score outside [0,1]"
                )));
            }
        }
        for (i, ad) in ads.iter().enumerate() {
            if ad.id.0 as usize != i {
                return Err(RamError::Input(format!(
                    "ad at position {i} has id {}",
                    ad.id.0
                )));
            }
            let probs_ok = (0.0..=1.0).contains(&ad.predicted_ctr)
                && (0.0..=1.0).contains(&ad.predicted_recall);
            if !(ad.bid_price >= 0.0 && ad.hidden_cost >= 0.0 && probs_ok) {
                return Err(RamError::Input(format!("ad {i} has out-of-range fields")));
            }
        }
        let item_active = items
            .iter()
            .map(|it| schema.item_features(it).map(|f| active_positions(&f)))
            .collect::<Result<_>>()?;
        let ad_active = ads
            .iter()
            .map(|ad| schema.ad_features(ad).map(|f| active_positions(&f)))
            .collect::<Result<_>>()?;
        Ok(Catalog {
            schema,
            items,
            ads,
            item_active,
            ad_active,
        })
    }

    pub fn items(&self) -> &[RegularItem] {
        &self.items
    }

    pub fn ads(&self) -> &[AdItem] {
        &self.ads
    }

    pub fn item(&self, id: ItemId) -> Result<&RegularItem> {
        self.items
            .get(id.0 as usize)
            .ok_or_else(|| RamError::Input(format!("unknown item id {}", id.0)))
    }

    pub fn ad(&self, id: AdId) -> Result<&AdItem> {
        self.ads
            .get(id.0 as usize)
            .ok_or_else(|| RamError::Input(format!("unknown ad id {}", id.0)))
    }

    pub fn item_active(&self, id: ItemId) -> &[usize] {
        &self.item_active[id.0 as usize]
    }

    pub fn ad_active(&self, id: AdId) -> &[usize] {
        &self.ad_active[id.0 as usize]
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        write_rows(&dir.join("items.csv"), &self.items)?;
        write_rows(&dir.join("ads.csv"), &self.ads)
    }

    pub fn read_csv(dir: &Path, schema: FeatureSchema) -> Result<Self> {
        let items = read_rows(&dir.join("items.csv"))?;
        let ads = read_rows(&dir.join("ads.csv"))?;
        Catalog::new(schema, items, ads)
    }
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| RamError::io(path, e))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> RamError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => RamError::io(path, io),
        other => RamError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}
