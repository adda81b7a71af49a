//! Non-compliant land share estimation from land-cover transition
//! tables, current land use, and census crop areas.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use thiserror::Error;

use crate::sam::{NonCompliantShareTable, RawMaterialMap};

#[derive(Debug, Error)]
pub enum LandShareError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record in {file} at line {line}: {reason}")]
    MalformedRecord {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate key ({0}, {1}, {2}) in transition table")]
    DuplicateTransition(String, String, i32),
    #[error("no land-use entry for activity '{0}' in region '{1}'")]
    MissingLandUse(String, String),
    #[error("negative hectares for ({0}, {1})")]
    NegativeHectares(String, String),
    #[error("crop '{0}' is not mapped to an activity")]
    UnmappedCrop(String),
    #[error("crop '{0}' has zero total planted area")]
    ZeroTotalArea(String),
    #[error("linkage cycle involving '{0}'")]
    LinkageCycle(String),
    #[error("linkage target '{0}' has no share")]
    MissingLinkageTarget(String),
}

/// Hectares of forest converted to productive use, keyed by
/// (activity, region, year).
#[derive(Debug, Clone, Default)]
pub struct TransitionTable {
    entries: BTreeMap<(String, String, i32), f64>,
}

impl TransitionTable {
    pub fn insert(
        &mut self,
        activity: &str,
        region: &str,
        year: i32,
        hectares: f64,
    ) -> Result<(), LandShareError> {
        if hectares < 0.0 {
            return Err(LandShareError::NegativeHectares(
                activity.to_string(),
                region.to_string(),
            ));
        }
        let key = (activity.to_string(), region.to_string(), year);
        if self.entries.contains_key(&key) {
            return Err(LandShareError::DuplicateTransition(
                key.0, key.1, key.2,
            ));
        }
        self.entries.insert(key, hectares);
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &(String, String, i32)> {
        self.entries.keys()
    }

    pub fn converted(&self, activity: &str, region: &str, years: &BTreeSet<i32>) -> f64 {
        years
            .iter()
            .map(|y| {
                self.entries
                    .get(&(activity.to_string(), region.to_string(), *y))
                    .copied()
                    .unwrap_or(0.0)
            })
            .sum()
    }

    pub fn load(path: &Path) -> Result<Self, LandShareError> {
        let mut table = TransitionTable::default();
        for (line, fields) in read_csv(path, &["activity", "region", "year", "hectares"])? {
            let year: i32 = fields[2].parse().map_err(|_| malformed(path, line, "year"))?;
            let ha: f64 = fields[3]
                .parse()
                .map_err(|_| malformed(path, line, "hectares"))?;
            table.insert(&fields[0], &fields[1], year, ha)?;
        }
        Ok(table)
    }
}

/// Hectares in use in the final observed year, keyed by (activity, region).
#[derive(Debug, Clone, Default)]
pub struct LandUseTable {
    entries: BTreeMap<(String, String), f64>,
}

impl LandUseTable {
    pub fn insert(&mut self, activity: &str, region: &str, hectares: f64) {
        self.entries
            .insert((activity.to_string(), region.to_string()), hectares);
    }

    pub fn activities(&self) -> BTreeSet<String> {
        self.entries.keys().map(|(a, _)| a.clone()).collect()
    }

    pub fn regions_of(&self, activity: &str) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .filter(|((a, _), _)| a == activity)
            .map(|((_, r), &ha)| (r.clone(), ha))
            .collect()
    }

    pub fn get(&self, activity: &str, region: &str) -> Option<f64> {
        self.entries
            .get(&(activity.to_string(), region.to_string()))
            .copied()
    }

    pub fn load(path: &Path) -> Result<Self, LandShareError> {
        let mut table = LandUseTable::default();
        for (line, fields) in read_csv(path, &["activity", "region", "hectares"])? {
            let ha: f64 = fields[2]
                .parse()
                .map_err(|_| malformed(path, line, "hectares"))?;
            table.insert(&fields[0], &fields[1], ha);
        }
        Ok(table)
    }
}

/// Planted area per (crop, region).
#[derive(Debug, Clone, Default)]
pub struct CensusAreaTable {
    entries: BTreeMap<(String, String), f64>,
}

impl CensusAreaTable {
    pub fn insert(&mut self, crop: &str, region: &str, area: f64) {
        self.entries
            .insert((crop.to_string(), region.to_string()), area);
    }

    pub fn crops(&self) -> BTreeSet<String> {
        self.entries.keys().map(|(c, _)| c.clone()).collect()
    }

    pub fn regions_of(&self, crop: &str) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .filter(|((c, _), _)| c == crop)
            .map(|((_, r), &a)| (r.clone(), a))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, LandShareError> {
        let mut table = CensusAreaTable::default();
        for (line, fields) in read_csv(path, &["crop", "region", "area"])? {
            let area: f64 = fields[2]
                .parse()
                .map_err(|_| malformed(path, line, "area"))?;
            table.insert(&fields[0], &fields[1], area);
        }
        Ok(table)
    }
}

fn malformed(path: &Path, line: usize, field: &str) -> LandShareError {
    LandShareError::MalformedRecord {
        file: path.display().to_string(),
        line,
        reason: format!("invalid {field}"),
    }
}

fn read_csv(
    path: &Path,
    header: &[&str],
) -> Result<Vec<(usize, Vec<String>)>, LandShareError> {
    let content = std::fs::read_to_string(path).map_err(|e| LandShareError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = trimmed.split(',').map(|s| s.trim().to_string()).collect();
        if i == 0 && fields.iter().map(String::as_str).eq(header.iter().copied()) {
            continue;
        }
        if fields.len() != header.len() {
            return Err(LandShareError::MalformedRecord {
                file: path.display().to_string(),
                line: lineno,
                reason: format!("expected {} fields", header.len()),
            });
        }
        out.push((lineno, fields));
    }
    Ok(out)
}

/// Per-(activity, region) share of land converted from forest in the
/// cutoff years, relative to land currently in use.
pub fn activity_share(
    transitions: &TransitionTable,
    landuse: &LandUseTable,
    cutoff_years: &BTreeSet<i32>,
) -> Result<BTreeMap<(String, String), f64>, LandShareError> {
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for (a, r, _) in transitions.keys() {
        pairs.insert((a.clone(), r.clone()));
    }
    let mut shares = BTreeMap::new();
    for (activity, region) in pairs {
        let used = landuse
            .get(&activity, &region)
            .ok_or_else(|| LandShareError::MissingLandUse(activity.clone(), region.clone()))?;
        if used <= 0.0 {
            return Err(LandShareError::NegativeHectares(
                activity.clone(),
                region.clone(),
            ));
        }
        let converted = transitions.converted(&activity, &region, cutoff_years);
        let mut share = converted / used;
        if share > 1.0 {
            warn!(
                "converted hectares exceed land in use for ({activity}, {region}); \
                 share clamped from {share:.4} to 1.0"
            );
            share = 1.0;
        }
        shares.insert((activity, region), share);
    }
    Ok(shares)
}

/// Area-weighted national aggregation of regional activity shares to
/// product-level shares.
pub fn product_shares(
    activity_shares: &BTreeMap<(String, String), f64>,
    census: &CensusAreaTable,
    crop_to_activity: &HashMap<String, String>,
) -> Result<NonCompliantShareTable, LandShareError> {
    let mut out = NonCompliantShareTable::new();
    for crop in census.crops() {
        let activity = crop_to_activity
            .get(&crop)
            .ok_or_else(|| LandShareError::UnmappedCrop(crop.clone()))?;
        let mut total_area = 0.0;
        let mut weighted = 0.0;
        for (region, area) in census.regions_of(&crop) {
            if area < 0.0 {
                return Err(LandShareError::NegativeHectares(crop.clone(), region));
            }
            let share = activity_shares
                .get(&(activity.clone(), region.clone()))
                .copied()
                .unwrap_or(0.0);
            total_area += area;
            weighted += area * share;
        }
        if total_area <= 0.0 {
            return Err(LandShareError::ZeroTotalArea(crop));
        }
        out.insert(crop, weighted / total_area);
    }
    Ok(out)
}

/// Copies the share of each derived product's raw material, resolving
/// chains transitively. Existing entries are left unchanged.
pub fn propagate_indirect(
    shares: &NonCompliantShareTable,
    linkage: &RawMaterialMap,
) -> Result<NonCompliantShareTable, LandShareError> {
    let mut out = shares.clone();
    for derived in linkage.keys() {
        if out.contains_key(derived) {
            continue;
        }
        let mut target = derived.as_str();
        let mut hops = 0;
        while let Some(next) = linkage.get(target) {
            target = next;
            hops += 1;
            if hops > linkage.len() {
                return Err(LandShareError::LinkageCycle(derived.clone()));
            }
            if shares.contains_key(target) {
                break;
            }
        }
        let share = *shares
            .get(target)
            .ok_or_else(|| LandShareError::MissingLinkageTarget(target.to_string()))?;
        out.insert(derived.clone(), share);
    }
    Ok(out)
}

/// National share per activity, fanned out to the SAM accounts it
/// drives (`a-X`, `c-X`, `fland-X`). Activities with census crops take
/// the census-area-weighted mean over their crops' product shares;
/// activities without census coverage take the land-use-area-weighted
/// mean of their regional shares.
pub fn account_shares(
    activity_shares: &BTreeMap<(String, String), f64>,
    landuse: &LandUseTable,
    census: &CensusAreaTable,
    crop_to_activity: &HashMap<String, String>,
) -> Result<NonCompliantShareTable, LandShareError> {
    let by_crop = product_shares(activity_shares, census, crop_to_activity)?;
    let mut out = NonCompliantShareTable::new();
    for activity in landuse.activities() {
        let crops: Vec<&String> = crop_to_activity
            .iter()
            .filter(|(_, a)| **a == activity)
            .map(|(c, _)| c)
            .collect();
        let share = if crops.is_empty() {
            let mut total = 0.0;
            let mut weighted = 0.0;
            for (region, ha) in landuse.regions_of(&activity) {
                if let Some(&s) = activity_shares.get(&(activity.clone(), region)) {
                    total += ha;
                    weighted += ha * s;
                }
            }
            if total <= 0.0 {
                return Err(LandShareError::ZeroTotalArea(activity.clone()));
            }
            weighted / total
        } else {
            let mut total = 0.0;
            let mut weighted = 0.0;
            for crop in crops {
                let area: f64 = census.regions_of(crop).iter().map(|(_, a)| a).sum();
                total += area;
                weighted += area * by_crop[crop];
            }
            weighted / total
        };
        for prefix in ["a-", "c-", "fland-"] {
            out.insert(format!("{prefix}{activity}"), share);
        }
    }
    Ok(out)
}

/// Reads a `crop,activity` CSV mapping census crops to SAM activities.
pub fn load_crop_map(path: &Path) -> Result<HashMap<String, String>, LandShareError> {
    let mut out = HashMap::new();
    for (_, fields) in read_csv(path, &["crop", "activity"])? {
        out.insert(fields[0].clone(), fields[1].clone());
    }
    Ok(out)
}

/// Writes a `account,share` CSV consumable by the SAM splitter.
pub fn save_shares(shares: &NonCompliantShareTable, path: &Path) -> Result<(), LandShareError> {
    let mut rows: Vec<(&String, &f64)> = shares.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = String::from("account,share\n");
    for (account, share) in rows {
        out.push_str(&format!("{account},{share}\n"));
    }
    std::fs::write(path, out).map_err(|e| LandShareError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads a `account,share` CSV.
pub fn load_shares(path: &Path) -> Result<NonCompliantShareTable, LandShareError> {
    let mut out = NonCompliantShareTable::new();
    for (line, fields) in read_csv(path, &["account", "share"])? {
        let share: f64 = fields[1]
            .parse()
            .map_err(|_| malformed(path, line, "share"))?;
        out.insert(fields[0].clone(), share);
    }
    Ok(out)
}

/// Reads a `derived_product,raw_material` CSV.
pub fn load_linkage(path: &Path) -> Result<RawMaterialMap, LandShareError> {
    let mut out = RawMaterialMap::new();
    for (_, fields) in read_csv(path, &["derived_product", "raw_material"])? {
        out.insert(fields[0].clone(), fields[1].clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn years(list: &[i32]) -> BTreeSet<i32> {
        list.iter().copied().collect()
    }

    #[test]
    fn activity_share_formula() {
        // D = (5, 3), L = 400 -> 8/400 = 0.02.
        let mut t = TransitionTable::default();
        t.insert("crop", "north", 2021, 5.0).unwrap();
        t.insert("crop", "north", 2022, 3.0).unwrap();
        let mut l = LandUseTable::default();
        l.insert("crop", "north", 400.0);
        let shares = activity_share(&t, &l, &years(&[2021, 2022])).unwrap();
        assert_eq!(shares[&("crop".into(), "north".into())], 0.02);
    }

    #[test]
    fn account_shares_weight_by_census_or_landuse_area() {
        let mut shares = BTreeMap::new();
        shares.insert(("crop".to_string(), "a".to_string()), 0.10);
        shares.insert(("crop".to_string(), "b".to_string()), 0.02);
        shares.insert(("lvst".to_string(), "a".to_string()), 0.04);
        shares.insert(("lvst".to_string(), "b".to_string()), 0.08);
        let mut landuse = LandUseTable::default();
        landuse.insert("crop", "a", 500.0);
        landuse.insert("crop", "b", 500.0);
        landuse.insert("lvst", "a", 300.0);
        landuse.insert("lvst", "b", 100.0);
        let mut census = CensusAreaTable::default();
        census.insert("soy", "a", 70.0);
        census.insert("soy", "b", 30.0);
        let map: HashMap<String, String> =
            [("soy".to_string(), "crop".to_string())].into_iter().collect();
        let out = account_shares(&shares, &landuse, &census, &map).unwrap();
        // crop via its census crop: 0.7*0.10 + 0.3*0.02.
        for account in ["a-crop", "c-crop", "fland-crop"] {
            assert!((out[account] - 0.076).abs() < 1e-12);
        }
        // lvst has no census crops: land-use weighted regional mean.
        let lvst = (300.0 * 0.04 + 100.0 * 0.08) / 400.0;
        for account in ["a-lvst", "c-lvst", "fland-lvst"] {
            assert!((out[account] - lvst).abs() < 1e-12);
        }
    }

    #[test]
    fn activity_share_zero_conversion() {
        let mut t = TransitionTable::default();
        t.insert("crop", "north", 2021, 0.0).unwrap();
        t.insert("crop", "north", 2022, 0.0).unwrap();
        let mut l = LandUseTable::default();
        l.insert("crop", "north", 100.0);
        let shares = activity_share(&t, &l, &years(&[2021, 2022])).unwrap();
        assert_eq!(shares[&("crop".into(), "north".into())], 0.0);
    }

    #[test]
    fn activity_share_clamps_noisy_input() {
        let mut t = TransitionTable::default();
        t.insert("crop", "north", 2021, 60.0).unwrap();
        t.insert("crop", "north", 2022, 50.0).unwrap();
        let mut l = LandUseTable::default();
        l.insert("crop", "north", 100.0);
        let shares = activity_share(&t, &l, &years(&[2021, 2022])).unwrap();
        assert_eq!(shares[&("crop".into(), "north".into())], 1.0);
    }

    #[test]
    fn activity_share_missing_landuse() {
        let mut t = TransitionTable::default();
        t.insert("crop", "north", 2021, 1.0).unwrap();
        let l = LandUseTable::default();
        let err = activity_share(&t, &l, &years(&[2021])).unwrap_err();
        assert!(matches!(err, LandShareError::MissingLandUse(_, _)));
    }

    #[test]
    fn product_share_single_region() {
        let mut shares = BTreeMap::new();
        shares.insert(("crop".to_string(), "north".to_string()), 0.02);
        let mut census = CensusAreaTable::default();
        census.insert("soy", "north", 120.0);
        let map = HashMap::from([("soy".to_string(), "crop".to_string())]);
        let out = product_shares(&shares, &census, &map).unwrap();
        assert_eq!(out["soy"], 0.02);
    }

    #[test]
    fn product_share_weighted_mean() {
        // 70/30 across regions with shares 0.10/0.00 -> 0.07.
        let mut shares = BTreeMap::new();
        shares.insert(("crop".to_string(), "a".to_string()), 0.10);
        shares.insert(("crop".to_string(), "b".to_string()), 0.00);
        let mut census = CensusAreaTable::default();
        census.insert("soy", "a", 70.0);
        census.insert("soy", "b", 30.0);
        let map = HashMap::from([("soy".to_string(), "crop".to_string())]);
        let out = product_shares(&shares, &census, &map).unwrap();
        assert!((out["soy"] - 0.07).abs() < 1e-15);
    }

    #[test]
    fn product_share_zero_area() {
        let shares = BTreeMap::new();
        let mut census = CensusAreaTable::default();
        census.insert("soy", "a", 0.0);
        let map = HashMap::from([("soy".to_string(), "crop".to_string())]);
        let err = product_shares(&shares, &census, &map).unwrap_err();
        assert!(matches!(err, LandShareError::ZeroTotalArea(_)));
    }

    #[test]
    fn product_share_unmapped_crop() {
        let shares = BTreeMap::new();
        let mut census = CensusAreaTable::default();
        census.insert("soy", "a", 1.0);
        let err = product_shares(&shares, &census, &HashMap::new()).unwrap_err();
        assert!(matches!(err, LandShareError::UnmappedCrop(_)));
    }

    #[test]
    fn propagate_direct_copy() {
        let mut shares = NonCompliantShareTable::new();
        shares.insert("soybeans".into(), 0.25);
        let mut linkage = RawMaterialMap::new();
        linkage.insert("soybean-oil".into(), "soybeans".into());
        let out = propagate_indirect(&shares, &linkage).unwrap();
        assert_eq!(out["soybean-oil"], 0.25);
        assert_eq!(out["soybeans"], 0.25);
    }

    #[test]
    fn propagate_transitive_chain() {
        // leather <- cattle <- pasture (0.04).
        let mut shares = NonCompliantShareTable::new();
        shares.insert("pasture".into(), 0.04);
        let mut linkage = RawMaterialMap::new();
        linkage.insert("leather".into(), "cattle".into());
        linkage.insert("cattle".into(), "pasture".into());
        let out = propagate_indirect(&shares, &linkage).unwrap();
        assert_eq!(out["leather"], 0.04);
        assert_eq!(out["cattle"], 0.04);
    }

    #[test]
    fn propagate_cycle_error() {
        let shares = NonCompliantShareTable::new();
        let mut linkage = RawMaterialMap::new();
        linkage.insert("a".into(), "b".into());
        linkage.insert("b".into(), "a".into());
        let err = propagate_indirect(&shares, &linkage).unwrap_err();
        assert!(matches!(err, LandShareError::LinkageCycle(_)));
    }

    #[test]
    fn propagate_is_idempotent() {
        let mut shares = NonCompliantShareTable::new();
        shares.insert("x".into(), 0.3);
        let mut linkage = RawMaterialMap::new();
        linkage.insert("y".into(), "x".into());
        let once = propagate_indirect(&shares, &linkage).unwrap();
        let twice = propagate_indirect(&once, &linkage).unwrap();
        assert_eq!(once, twice);
    }
}
