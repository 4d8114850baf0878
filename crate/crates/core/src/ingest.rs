//! Loading regions and attribute data, ratio construction, and
//! standardization.
//!
//! Region order is input-file order and defines the row index used by
//! every matrix and vector downstream. All loaded structures are
//! immutable after construction.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polygon geometry for rendering: one or more closed rings in lon/lat.
///
/// Holes and multi-polygon parts are stored as additional rings; the
/// renderer uses the even-odd fill rule so no ring bookkeeping is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry<T> {
    pub rings: Vec<Vec<(T, T)>>,
}

/// A single region: identifier, display name, centroid, optional polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub id: String,
    pub name: String,
    pub lon: T,
    pub lat: T,
    pub geometry: Option<Geometry<T>>,
}

/// Ordered collection of regions; the order defines row indices 0..n-1.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet<T> {
    regions: Vec<Region<T>>,
}

/// Input format for [`load_regions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionFormat {
    Csv,
    GeoJson,
}

impl<T: Scalar> RegionSet<T> {
    /// Builds a region set, validating id uniqueness and coordinate ranges.
    pub fn from_regions(regions: Vec<Region<T>>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::EmptyInput("region list".into()));
        }
        let mut seen = HashSet::new();
        for (row, r) in regions.iter().enumerate() {
            let row = row + 1;
            if r.id.is_empty() {
                return Err(Error::EmptyRegionId { row });
            }
            if !seen.insert(r.id.clone()) {
                return Err(Error::DuplicateRegion(r.id.clone()));
            }
            check_coordinate(r.lon, r.lat, row)?;
        }
        Ok(Self { regions })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn get(&self, index: usize) -> &Region<T> {
        &self.regions[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Region<T>> {
        self.regions.iter()
    }

    /// Row index of a region id, if present.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// True when every region carries polygon geometry.
    pub fn has_full_geometry(&self) -> bool {
        self.regions.iter().all(|r| r.geometry.is_some())
    }

    /// Returns a copy with the given geometry attached per region.
    pub fn with_geometry(&self, geometries: Vec<Geometry<T>>) -> Result<Self> {
        if geometries.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: geometries.len(),
            });
        }
        let regions = self
            .regions
            .iter()
            .zip(geometries)
            .map(|(r, g)| Region {
                geometry: Some(g),
                ..r.clone()
            })
            .collect();
        Ok(Self { regions })
    }
}

fn check_coordinate<T: Scalar>(lon: T, lat: T, row: usize) -> Result<()> {
    let (lon, lat) = (lon.as_f64(), lat.as_f64());
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::BadCoordinate {
            row,
            detail: format!("lon {lon} outside [-180, 180]"),
        });
    }
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(Error::BadCoordinate {
            row,
            detail: format!("lat {lat} outside [-90, 90]"),
        });
    }
    Ok(())
}

/// Loads a region set from `regions.csv` (header `region_id,name,lon,lat`)
/// or an RFC 7946 GeoJSON FeatureCollection whose features carry a
/// `region_id` property. File order is preserved.
pub fn load_regions<T: Scalar>(path: &Path, format: RegionFormat) -> Result<RegionSet<T>> {
    match format {
        RegionFormat::Csv => load_regions_csv(path),
        RegionFormat::GeoJson => load_regions_geojson(path),
    }
}

fn load_regions_csv<T: Scalar>(path: &Path) -> Result<RegionSet<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    let expect = ["region_id", "name", "lon", "lat"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            detail: format!(
                "expected header `region_id,name,lon,lat`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut regions = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        if record.len() != 4 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row,
                detail: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let lon = parse_coord::<T>(&record[2], "lon", row)?;
        let lat = parse_coord::<T>(&record[3], "lat", row)?;
        regions.push(Region {
            id: record[0].to_string(),
            name: record[1].to_string(),
            lon,
            lat,
            geometry: None,
        });
    }
    if regions.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    RegionSet::from_regions(regions)
}

fn parse_coord<T: Scalar>(raw: &str, which: &str, row: usize) -> Result<T> {
    let v: f64 = raw.parse().map_err(|_| Error::BadCoordinate {
        row,
        detail: format!("cannot parse {which} `{raw}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::BadCoordinate {
            row,
            detail: format!("{which} `{raw}` is not finite"),
        });
    }
    Ok(T::of_f64(v))
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        detail: e.to_string(),
    }
}

fn load_regions_geojson<T: Scalar>(path: &Path) -> Result<RegionSet<T>> {
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let parse_err = |row: usize, detail: String| Error::Parse {
        path: path.display().to_string(),
        row,
        detail,
    };
    let root: Value = serde_json::from_str(&text).map_err(|e| parse_err(0, e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(0, "not a FeatureCollection with `features`".into()))?;
    if features.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }

    let mut regions = Vec::with_capacity(features.len());
    for (idx, feature) in features.iter().enumerate() {
        let row = idx + 1;
        let props = feature
            .get("properties")
            .and_then(Value::as_object)
            .ok_or_else(|| parse_err(row, "feature has no properties".into()))?;
        let id = match props.get("region_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(parse_err(row, "missing `region_id` property".into())),
        };
        let name = props
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();

        let geometry = feature.get("geometry");
        let point = geometry.and_then(point_coords);
        let lon = prop_number(props, "lon").or(point.map(|p| p.0));
        let lat = prop_number(props, "lat").or(point.map(|p| p.1));
        let (lon, lat) = match (lon, lat) {
            (Some(lon), Some(lat)) => (T::of_f64(lon), T::of_f64(lat)),
            _ => {
                return Err(Error::BadCoordinate {
                    row,
                    detail: "no lon/lat properties and no Point geometry".into(),
                })
            }
        };

        regions.push(Region {
            id,
            name,
            lon,
            lat,
            geometry: geometry.and_then(|g| polygon_rings::<T>(g)),
        });
    }
    RegionSet::from_regions(regions)
}

fn prop_number(props: &serde_json::Map<String, Value>, key: &str) -> Option<f64> {
    props.get(key).and_then(Value::as_f64)
}

fn point_coords(geometry: &Value) -> Option<(f64, f64)> {
    if geometry.get("type")?.as_str()? != "Point" {
        return None;
    }
    let coords = geometry.get("coordinates")?.as_array()?;
    Some((coords.first()?.as_f64()?, coords.get(1)?.as_f64()?))
}

fn polygon_rings<T: Scalar>(geometry: &Value) -> Option<Geometry<T>> {
    let kind = geometry.get("type")?.as_str()?;
    let coords = geometry.get("coordinates")?;
    let mut rings = Vec::new();
    match kind {
        "Polygon" => collect_rings(coords, &mut rings)?,
        "MultiPolygon" => {
            for polygon in coords.as_array()? {
                collect_rings(polygon, &mut rings)?;
            }
        }
        _ => return None,
    }
    if rings.is_empty() {
        None
    } else {
        Some(Geometry { rings })
    }
}

fn collect_rings<T: Scalar>(polygon: &Value, out: &mut Vec<Vec<(T, T)>>) -> Option<()> {
    for ring in polygon.as_array()? {
        let mut points = Vec::new();
        for pt in ring.as_array()? {
            let pt = pt.as_array()?;
            points.push((
                T::of_f64(pt.first()?.as_f64()?),
                T::of_f64(pt.get(1)?.as_f64()?),
            ));
        }
        out.push(points);
    }
    Some(())
}

/// Writes a region set as a GeoJSON FeatureCollection (used for fixture
/// generation and map joins).
pub fn write_regions_geojson<T: Scalar>(regions: &RegionSet<T>, path: &Path) -> Result<()> {
    let features: Vec<Value> = regions
        .iter()
        .map(|r| {
            let geometry = match &r.geometry {
                Some(g) => {
                    let rings: Vec<Value> = g
                        .rings
                        .iter()
                        .map(|ring| {
                            Value::Array(
                                ring.iter()
                                    .map(|(x, y)| serde_json::json!([x.as_f64(), y.as_f64()]))
                                    .collect(),
                            )
                        })
                        .collect();
                    serde_json::json!({ "type": "Polygon", "coordinates": rings })
                }
                None => serde_json::json!({
                    "type": "Point",
                    "coordinates": [r.lon.as_f64(), r.lat.as_f64()],
                }),
            };
            serde_json::json!({
                "type": "Feature",
                "properties": {
                    "region_id": r.id,
                    "name": r.name,
                    "lon": r.lon.as_f64(),
                    "lat": r.lat.as_f64(),
                },
                "geometry": geometry,
            })
        })
        .collect();
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    fs::write(
        path,
        serde_json::to_string_pretty(&doc).expect("geojson serialization"),
    )?;
    Ok(())
}

/// Per-region case counts by chapter, joined against a region set.
#[derive(Debug, Clone)]
pub struct ChapterCounts {
    chapters: Vec<String>,
    /// counts[chapter][region]
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
    region_ids: Vec<String>,
}

impl ChapterCounts {
    /// Builds counts from `(region_id, chapter, count, total)` rows.
    ///
    /// Chapters are ordered by first appearance. The per-region total must
    /// be consistent across rows and no chapter count may exceed it.
    pub fn from_rows<T: Scalar>(
        regions: &RegionSet<T>,
        rows: &[(String, String, u64, u64)],
    ) -> Result<Self> {
        let n = regions.len();
        let mut chapters: Vec<String> = Vec::new();
        let mut counts: Vec<Vec<u64>> = Vec::new();
        let mut totals: Vec<Option<u64>> = vec![None; n];
        let mut seen: HashSet<(usize, usize)> = HashSet::new();

        for (row_no, (region_id, chapter, count, total)) in rows.iter().enumerate() {
            let row_no = row_no + 1;
            let region = regions.index_of(region_id).ok_or_else(|| Error::Parse {
                path: "counts".into(),
                row: row_no,
                detail: format!("unknown region `{region_id}`"),
            })?;
            let chapter_idx = match chapters.iter().position(|c| c == chapter) {
                Some(i) => i,
                None => {
                    chapters.push(chapter.clone());
                    counts.push(vec![0; n]);
                    chapters.len() - 1
                }
            };
            if !seen.insert((region, chapter_idx)) {
                return Err(Error::Parse {
                    path: "counts".into(),
                    row: row_no,
                    detail: format!("duplicate (region `{region_id}`, chapter `{chapter}`)"),
                });
            }
            match totals[region] {
                None => totals[region] = Some(*total),
                Some(t) if t != *total => {
                    return Err(Error::Parse {
                        path: "counts".into(),
                        row: row_no,
                        detail: format!(
                            "inconsistent total for region `{region_id}`: {t} vs {total}"
                        ),
                    })
                }
                _ => {}
            }
            if count > total {
                return Err(Error::CountExceedsTotal {
                    region: region_id.clone(),
                    chapter: chapter.clone(),
                });
            }
            counts[chapter_idx][region] = *count;
        }

        if chapters.is_empty() {
            return Err(Error::EmptyInput("counts".into()));
        }
        Ok(Self {
            chapters,
            counts,
            totals: totals.into_iter().map(|t| t.unwrap_or(0)).collect(),
            region_ids: regions.iter().map(|r| r.id.clone()).collect(),
        })
    }

    pub fn chapters(&self) -> &[String] {
        &self.chapters
    }

    pub fn n_regions(&self) -> usize {
        self.totals.len()
    }

    pub fn total(&self, region: usize) -> u64 {
        self.totals[region]
    }

    pub fn count(&self, chapter: usize, region: usize) -> u64 {
        self.counts[chapter][region]
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    /// National ratio per chapter: total cases over total case volume.
    pub fn national_ratios<T: Scalar>(&self) -> Vec<(String, T)> {
        let total: u64 = self.totals.iter().sum();
        self.chapters
            .iter()
            .zip(&self.counts)
            .map(|(name, per_region)| {
                let cases: u64 = per_region.iter().sum();
                let ratio = if total == 0 {
                    T::zero()
                } else {
                    T::of_f64(cases as f64 / total as f64)
                };
                (name.clone(), ratio)
            })
            .collect()
    }
}

/// Loads `counts.csv` (header `region_id,chapter,count,total`) and joins
/// it against the region set.
pub fn load_counts<T: Scalar>(path: &Path, regions: &RegionSet<T>) -> Result<ChapterCounts> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    let expect = ["region_id", "chapter", "count", "total"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            detail: "expected header `region_id,chapter,count,total`".into(),
        });
    }

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let count: u64 = record[2].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            row,
            detail: format!("bad count `{}`", &record[2]),
        })?;
        let total: u64 = record[3].parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            row,
            detail: format!("bad total `{}`", &record[3]),
        })?;
        rows.push((record[0].to_string(), record[1].to_string(), count, total));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    ChapterCounts::from_rows(regions, &rows)
}

/// Provenance of an attribute column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Raw,
    Ratio,
    Zscored,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Raw => "raw",
            ColumnKind::Ratio => "ratio",
            ColumnKind::Zscored => "zscored",
        };
        f.write_str(s)
    }
}

/// Named numeric columns aligned with a region set's row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable<T> {
    n: usize,
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    kinds: Vec<ColumnKind>,
}

impl<T: Scalar> AttributeTable<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            names: Vec::new(),
            columns: Vec::new(),
            kinds: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Adds a column; values must be finite and of length n.
    pub fn push_column(&mut self, name: &str, values: Vec<T>, kind: ColumnKind) -> Result<()> {
        if self.names.iter().any(|existing| existing == name) {
            return Err(Error::NameClash(name.to_string()));
        }
        if values.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite value in column `{name}`"
            )));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        self.kinds.push(kind);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[T]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn kind(&self, name: &str) -> Result<ColumnKind> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.kinds[i])
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Z-scored copy of a column (sample standard deviation, n-1).
    pub fn zscore_column(&self, name: &str) -> Result<Vec<T>> {
        let col = self.column(name)?;
        zscore(col).map_err(|e| match e {
            Error::ZeroVariance(_) => Error::ZeroVariance(name.to_string()),
            other => other,
        })
    }

    /// Writes the table as wide CSV `region_id,<col1>,...` in region order.
    pub fn write_csv(&self, path: &Path, regions: &RegionSet<T>) -> Result<()> {
        if regions.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: regions.len(),
            });
        }
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
        let mut header = vec!["region_id".to_string()];
        header.extend(self.names.iter().cloned());
        writer
            .write_record(&header)
            .map_err(|e| csv_error(path, 0, e))?;
        for (i, region) in regions.iter().enumerate() {
            let mut record = vec![region.id.clone()];
            record.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            writer
                .write_record(&record)
                .map_err(|e| csv_error(path, i + 1, e))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Loads a wide attribute CSV (`region_id,<col1>,...`) joined against the
/// region set. Every region must appear exactly once and every cell must
/// parse to a finite number; missing values are a load-time error.
pub fn load_attributes<T: Scalar>(
    path: &Path,
    regions: &RegionSet<T>,
) -> Result<AttributeTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    if headers.is_empty() || &headers[0] != "region_id" {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 0,
            detail: "first column must be `region_id`".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }

    let n = regions.len();
    let mut columns: Vec<Vec<Option<T>>> = vec![vec![None; n]; names.len()];
    let mut seen_rows = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        if record.len() != names.len() + 1 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                row,
                detail: format!("expected {} fields, got {}", names.len() + 1, record.len()),
            });
        }
        let region = regions.index_of(&record[0]).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            row,
            detail: format!("unknown region `{}`", &record[0]),
        })?;
        for (c, raw) in record.iter().skip(1).enumerate() {
            let value: f64 = raw.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row,
                detail: format!("bad value `{raw}` in column `{}`", names[c]),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    row,
                    detail: format!("non-finite value in column `{}`", names[c]),
                });
            }
            if columns[c][region].replace(T::of_f64(value)).is_some() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    row,
                    detail: format!("duplicate row for region `{}`", &record[0]),
                });
            }
        }
        seen_rows += 1;
    }
    if seen_rows == 0 {
        return Err(Error::EmptyInput(path.display().to_string()));
    }

    let mut table = AttributeTable::new(n);
    for (c, name) in names.iter().enumerate() {
        let mut values = Vec::with_capacity(n);
        for (region, v) in columns[c].iter().enumerate() {
            match v {
                Some(v) => values.push(*v),
                None => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        row: 0,
                        detail: format!(
                            "missing value for region `{}` in column `{name}`",
                            regions.get(region).id
                        ),
                    })
                }
            }
        }
        table.push_column(name, values, ColumnKind::Raw)?;
    }
    Ok(table)
}

/// Per-chapter outcome ratios: chapter cases over all cases per region.
pub fn compute_ratios<T: Scalar>(counts: &ChapterCounts) -> Result<AttributeTable<T>> {
    let n = counts.n_regions();
    for region in 0..n {
        if counts.total(region) == 0 {
            return Err(Error::ZeroDenominator(counts.region_ids()[region].clone()));
        }
    }
    let mut table = AttributeTable::new(n);
    for (chapter_idx, chapter) in counts.chapters().iter().enumerate() {
        let values: Vec<T> = (0..n)
            .map(|region| {
                T::of_f64(counts.count(chapter_idx, region) as f64 / counts.total(region) as f64)
            })
            .collect();
        table.push_column(chapter, values, ColumnKind::Ratio)?;
    }
    Ok(table)
}

pub(crate) fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Sample standard deviation with denominator n-1.
pub(crate) fn sample_sd<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (ss / T::of_usize(xs.len() - 1)).sqrt()
}

/// Standardizes a column to mean 0 and sample standard deviation 1.
pub fn zscore<T: Scalar>(xs: &[T]) -> Result<Vec<T>> {
    if xs.len() < 2 {
        return Err(Error::TooFewObservations(xs.len()));
    }
    let m = mean(xs);
    let sd = sample_sd(xs);
    if sd == T::zero() {
        return Err(Error::ZeroVariance("input".into()));
    }
    if !sd.is_finite() {
        return Err(Error::NumericalFailure(
            "non-finite standard deviation".into(),
        ));
    }
    Ok(xs.iter().map(|&x| (x - m) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn temp_file(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn two_region_csv() -> tempfile::NamedTempFile {
        temp_file(
            "region_id,name,lon,lat\nA,Alpha,100.0,15.0\nB,Beta,101.0,15.5\n",
            ".csv",
        )
    }

    #[test]
    fn loads_csv_in_file_order() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs.index_of("A"), Some(0));
        assert_eq!(rs.index_of("B"), Some(1));
        assert_eq!(rs.get(0).name, "Alpha");
        assert_eq!(rs.get(1).lat, 15.5);
    }

    #[test]
    fn duplicate_region_id_rejected() {
        let f = temp_file(
            "region_id,name,lon,lat\nA,Alpha,100.0,15.0\nA,Again,101.0,15.5\n",
            ".csv",
        );
        let err = load_regions::<f64>(f.path(), RegionFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::DuplicateRegion(id) if id == "A"));
    }

    #[test]
    fn bad_coordinate_reports_row() {
        let f = temp_file(
            "region_id,name,lon,lat\nA,Alpha,100.0,15.0\nB,Beta,foo,15.5\n",
            ".csv",
        );
        let err = load_regions::<f64>(f.path(), RegionFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::BadCoordinate { row: 2, .. }));
    }

    #[test]
    fn out_of_range_latitude_rejected() {
        let f = temp_file("region_id,name,lon,lat\nA,Alpha,100.0,95.0\n", ".csv");
        let err = load_regions::<f64>(f.path(), RegionFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::BadCoordinate { row: 1, .. }));
    }

    #[test]
    fn empty_csv_rejected() {
        let f = temp_file("region_id,name,lon,lat\n", ".csv");
        let err = load_regions::<f64>(f.path(), RegionFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn geojson_points_preserve_feature_order() {
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature",
                 "properties": {"region_id": "A", "name": "Alpha", "lon": 100.0, "lat": 15.0},
                 "geometry": {"type": "Point", "coordinates": [100.0, 15.0]}},
                {"type": "Feature",
                 "properties": {"region_id": "B", "name": "Beta"},
                 "geometry": {"type": "Point", "coordinates": [101.0, 15.5]}},
                {"type": "Feature",
                 "properties": {"region_id": "C", "name": "Gamma", "lon": 102.0, "lat": 16.0},
                 "geometry": null},
            ],
        });
        let f = temp_file(&doc.to_string(), ".geojson");
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::GeoJson).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs.index_of("A"), Some(0));
        assert_eq!(rs.index_of("B"), Some(1));
        assert_eq!(rs.index_of("C"), Some(2));
        // B's coordinates come from the Point geometry fallback.
        assert_eq!(rs.get(1).lon, 101.0);
        assert_eq!(rs.get(1).lat, 15.5);
    }

    #[test]
    fn geojson_polygons_are_retained() {
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature",
                 "properties": {"region_id": "A", "name": "Alpha", "lon": 0.5, "lat": 0.5},
                 "geometry": {"type": "Polygon",
                              "coordinates": [[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0],[0.0,0.0]]]}},
            ],
        });
        let f = temp_file(&doc.to_string(), ".geojson");
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::GeoJson).unwrap();
        let geometry = rs.get(0).geometry.as_ref().unwrap();
        assert_eq!(geometry.rings.len(), 1);
        assert_eq!(geometry.rings[0].len(), 5);
        assert!(rs.has_full_geometry());
    }

    #[test]
    fn ratios_match_hand_arithmetic() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let rs = {
            // extend to three regions for the fixture
            let mut regions: Vec<Region<f64>> = rs.iter().cloned().collect();
            regions.push(Region {
                id: "C".into(),
                name: "Gamma".into(),
                lon: 102.0,
                lat: 16.0,
                geometry: None,
            });
            RegionSet::from_regions(regions).unwrap()
        };
        let rows = vec![
            ("A".to_string(), "C1".to_string(), 3u64, 10u64),
            ("B".to_string(), "C1".to_string(), 5, 20),
            ("C".to_string(), "C1".to_string(), 7, 70),
        ];
        let counts = ChapterCounts::from_rows(&rs, &rows).unwrap();
        let table: AttributeTable<f64> = compute_ratios(&counts).unwrap();
        assert_eq!(table.column("C1").unwrap(), &[0.3, 0.25, 0.1]);
    }

    #[test]
    fn ratio_arithmetic_edge_cases() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let rows = vec![
            ("A".to_string(), "C1".to_string(), 10u64, 100u64),
            ("B".to_string(), "C1".to_string(), 0, 50),
        ];
        let counts = ChapterCounts::from_rows(&rs, &rows).unwrap();
        let table: AttributeTable<f64> = compute_ratios(&counts).unwrap();
        assert_eq!(table.column("C1").unwrap(), &[0.10, 0.0]);
    }

    #[test]
    fn zero_total_is_rejected() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let rows = vec![
            ("A".to_string(), "C1".to_string(), 0u64, 0u64),
            ("B".to_string(), "C1".to_string(), 1, 10),
        ];
        let counts = ChapterCounts::from_rows(&rs, &rows).unwrap();
        let err = compute_ratios::<f64>(&counts).unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator(id) if id == "A"));
    }

    #[test]
    fn count_above_total_is_rejected() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let rows = vec![("A".to_string(), "C1".to_string(), 11u64, 10u64)];
        let err = ChapterCounts::from_rows(&rs, &rows).unwrap_err();
        assert!(matches!(err, Error::CountExceedsTotal { .. }));
    }

    #[test]
    fn national_ratio_hand_example() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let rows = vec![
            ("A".to_string(), "C1".to_string(), 10u64, 100u64),
            ("B".to_string(), "C1".to_string(), 20, 100),
        ];
        let counts = ChapterCounts::from_rows(&rs, &rows).unwrap();
        let ratios = counts.national_ratios::<f64>();
        assert_eq!(ratios, vec![("C1".to_string(), 0.15)]);
    }

    #[test]
    fn zscore_hand_example() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zscore_rejects_constant_and_short_input() {
        assert!(matches!(
            zscore(&[5.0, 5.0, 5.0]).unwrap_err(),
            Error::ZeroVariance(_)
        ));
        assert!(matches!(
            zscore(&[1.0]).unwrap_err(),
            Error::TooFewObservations(1)
        ));
    }

    #[test]
    fn zscore_is_idempotent() {
        let x = vec![0.3, -1.2, 4.5, 2.2, 0.0, 9.1];
        let z1 = zscore(&x).unwrap();
        let z2 = zscore(&z1).unwrap();
        for (a, b) in z1.iter().zip(&z2) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        let m: f64 = mean(&z1);
        assert!(m.abs() < 1e-9);
        assert!((sample_sd(&z1) - 1.0_f64).abs() < 1e-9);
    }

    #[test]
    fn attribute_table_rejects_bad_columns() {
        let mut table: AttributeTable<f64> = AttributeTable::new(2);
        table
            .push_column("a", vec![1.0, 2.0], ColumnKind::Raw)
            .unwrap();
        assert!(matches!(
            table.push_column("a", vec![1.0, 2.0], ColumnKind::Raw),
            Err(Error::NameClash(_))
        ));
        assert!(matches!(
            table.push_column("b", vec![1.0], ColumnKind::Raw),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            table.push_column("c", vec![1.0, f64::NAN], ColumnKind::Raw),
            Err(Error::NumericalFailure(_))
        ));
        assert!(matches!(
            table.column("missing"),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn attributes_round_trip_through_csv() {
        let f = two_region_csv();
        let rs: RegionSet<f64> = load_regions(f.path(), RegionFormat::Csv).unwrap();
        let mut table: AttributeTable<f64> = AttributeTable::new(2);
        table
            .push_column("x", vec![0.123456789012345, -7.25], ColumnKind::Raw)
            .unwrap();
        table
            .push_column("y", vec![1e-17, 3.5e300], ColumnKind::Raw)
            .unwrap();
        let out = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        table.write_csv(out.path(), &rs).unwrap();
        let reloaded: AttributeTable<f64> = load_attributes(out.path(), &rs).unwrap();
        assert_eq!(reloaded.column("x").unwrap(), table.column("x").unwrap());
        assert_eq!(reloaded.column("y").unwrap(), table.column("y").unwrap());
    }

    #[test]
    fn attributes_with_missing_value_rejected() {
        let regions = temp_file(
            "region_id,name,lon,lat\nA,Alpha,100.0,15.0\nB,Beta,101.0,15.5\n",
            ".csv",
        );
        let rs: RegionSet<f64> = load_regions(regions.path(), RegionFormat::Csv).unwrap();
        let attrs = temp_file("region_id,x\nA,1.0\n", ".csv");
        let err = load_attributes::<f64>(attrs.path(), &rs).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let attrs = temp_file("region_id,x\nA,1.0\nB,nan\n", ".csv");
        assert!(load_attributes::<f64>(attrs.path(), &rs).is_err());
    }
}
