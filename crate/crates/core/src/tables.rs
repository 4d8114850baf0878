//! CSV and GeoJSON emitters for analysis results.
//!
//! All numeric fields are written with the shortest round-trip decimal
//! representation, so identical results serialize to identical bytes.

use crate::autocorr::{GlobalMoranResult, LocalMoranResult};
use crate::ingest::{ChapterCounts, RegionSet};
use crate::pca::PcaResult;
use crate::scalar::Scalar;
use crate::sdm::SdmFit;
use crate::weights::SpatialWeights;

pub(crate) fn csv_buffer(
    build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer).expect("in-memory csv write");
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("utf8 csv")
}

/// `from_id,to_id,weight` audit export of the weights matrix.
pub fn weights_csv<T: Scalar>(weights: &SpatialWeights<T>, regions: &RegionSet<T>) -> String {
    csv_buffer(|w| {
        w.write_record(["from_id", "to_id", "weight"])?;
        for (i, neighbors, weight) in weights.rows() {
            for &j in neighbors {
                w.write_record([
                    regions.get(i).id.as_str(),
                    regions.get(j).id.as_str(),
                    &format!("{weight}"),
                ])?;
            }
        }
        Ok(())
    })
}

/// `column,population_ratio` table of national chapter shares.
pub fn population_ratio_csv<T: Scalar>(counts: &ChapterCounts) -> String {
    csv_buffer(|w| {
        w.write_record(["column", "population_ratio"])?;
        for (name, ratio) in counts.national_ratios::<T>() {
            w.write_record([name.as_str(), &format!("{ratio}")])?;
        }
        Ok(())
    })
}

/// `column,I,p_value,nsim,seed` table of global Moran results.
pub fn moran_table_csv<T: Scalar>(rows: &[(String, GlobalMoranResult<T>)]) -> String {
    csv_buffer(|w| {
        w.write_record(["column", "I", "p_value", "nsim", "seed"])?;
        for (name, result) in rows {
            w.write_record([
                name.as_str(),
                &format!("{}", result.i_obs),
                &format!("{}", result.p_value),
                &result.nsim.to_string(),
                &result.seed.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `region_id,local_I,p_value,z,z_lag,label` table of LISA results.
pub fn lisa_csv<T: Scalar>(regions: &RegionSet<T>, lisa: &LocalMoranResult<T>) -> String {
    csv_buffer(|w| {
        w.write_record(["region_id", "local_I", "p_value", "z", "z_lag", "label"])?;
        for (region, row) in regions.iter().zip(&lisa.regions) {
            w.write_record([
                region.id.as_str(),
                &format!("{}", row.local_i),
                &format!("{}", row.p_value),
                &format!("{}", row.z),
                &format!("{}", row.z_lag),
                row.label.code(),
            ])?;
        }
        Ok(())
    })
}

/// FeatureCollection carrying the LISA fields as feature properties;
/// regions without polygons fall back to point geometry.
pub fn lisa_geojson<T: Scalar>(regions: &RegionSet<T>, lisa: &LocalMoranResult<T>) -> String {
    let features: Vec<serde_json::Value> = regions
        .iter()
        .zip(&lisa.regions)
        .map(|(region, row)| {
            let geometry = match &region.geometry {
                Some(g) => {
                    let rings: Vec<serde_json::Value> = g
                        .rings
                        .iter()
                        .map(|ring| {
                            serde_json::Value::Array(
                                ring.iter()
                                    .map(|(x, y)| serde_json::json!([x.as_f64(), y.as_f64()]))
                                    .collect(),
                            )
                        })
                        .collect();
                    serde_json::json!({"type": "Polygon", "coordinates": rings})
                }
                None => serde_json::json!({
                    "type": "Point",
                    "coordinates": [region.lon.as_f64(), region.lat.as_f64()],
                }),
            };
            serde_json::json!({
                "type": "Feature",
                "properties": {
                    "region_id": region.id,
                    "name": region.name,
                    "label": row.label.code(),
                    "local_I": row.local_i.as_f64(),
                    "p_value": row.p_value,
                    "z": row.z.as_f64(),
                    "z_lag": row.z_lag.as_f64(),
                },
                "geometry": geometry,
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    serde_json::to_string_pretty(&doc).expect("geojson serialization")
}

/// One summary line of the per-column SDM analysis.
#[derive(Debug, Clone)]
pub struct SdmSummaryEntry<T> {
    pub column: String,
    pub fit: SdmFit<T>,
    /// p-value of the residual spatial-autocorrelation diagnostic.
    pub lm_p: f64,
    pub aic_ols: f64,
    pub delta_aic: f64,
    pub lr_statistic: f64,
    pub preferred: String,
}

/// Alphabetically sorted `name+`/`name-` tokens of the significant
/// coefficients in a block.
fn significant_tokens<T: Scalar>(
    names: &[String],
    coefficients: &[T],
    p_values: &[f64],
    alpha: f64,
) -> String {
    let mut tokens: Vec<String> = names
        .iter()
        .zip(coefficients)
        .zip(p_values)
        .filter(|(_, &p)| p.is_finite() && p < alpha)
        .map(|((name, &c), _)| {
            let sign = if c >= T::zero() { '+' } else { '-' };
            format!("{name}{sign}")
        })
        .collect();
    tokens.sort();
    tokens.join(";")
}

/// `column,rho,p_rho,direct_significant,indirect_significant,aic,lm_p`
/// summary table. Significant-effect fields hold `;`-joined sign-suffixed
/// covariate names.
pub fn sdm_summary_csv<T: Scalar>(rows: &[SdmSummaryEntry<T>], alpha: f64) -> String {
    csv_buffer(|w| {
        w.write_record([
            "column",
            "rho",
            "p_rho",
            "direct_significant",
            "indirect_significant",
            "aic",
            "lm_p",
        ])?;
        for row in rows {
            let fit = &row.fit;
            let p = fit.p;
            let covariate_names: Vec<String> = fit.coef_names[1..=p].to_vec();
            let direct =
                significant_tokens(&covariate_names, fit.beta(), &fit.p_values[1..=p], alpha);
            let indirect =
                significant_tokens(&covariate_names, fit.theta(), &fit.p_values[p + 1..], alpha);
            w.write_record([
                row.column.as_str(),
                &format!("{}", fit.rho),
                &format!("{}", fit.rho_p),
                &direct,
                &indirect,
                &format!("{}", fit.aic),
                &format!("{}", row.lm_p),
            ])?;
        }
        Ok(())
    })
}

/// `column,aic_ols,aic_sdm,delta_aic,lr_statistic,preferred` comparison
/// table for SDM versus the non-spatial baseline.
pub fn model_compare_csv<T: Scalar>(rows: &[SdmSummaryEntry<T>]) -> String {
    csv_buffer(|w| {
        w.write_record([
            "column",
            "aic_ols",
            "aic_sdm",
            "delta_aic",
            "lr_statistic",
            "preferred",
        ])?;
        for row in rows {
            w.write_record([
                row.column.as_str(),
                &format!("{}", row.aic_ols),
                &format!("{}", row.fit.aic),
                &format!("{}", row.delta_aic),
                &format!("{}", row.lr_statistic),
                &row.preferred,
            ])?;
        }
        Ok(())
    })
}

/// `name,estimate,se,p_value` rows for every parameter of one fit.
pub fn sdm_full_csv<T: Scalar>(fit: &SdmFit<T>) -> String {
    csv_buffer(|w| {
        w.write_record(["name", "estimate", "se", "p_value"])?;
        w.write_record([
            "rho",
            &format!("{}", fit.rho),
            &format!("{}", fit.rho_se),
            &format!("{}", fit.rho_p),
        ])?;
        for (i, name) in fit.coef_names.iter().enumerate() {
            w.write_record([
                name.as_str(),
                &format!("{}", fit.coefficients[i]),
                &format!("{}", fit.se[i]),
                &format!("{}", fit.p_values[i]),
            ])?;
        }
        w.write_record([
            "sigma2",
            &format!("{}", fit.sigma2),
            &format!("{}", fit.sigma2_se),
            "",
        ])?;
        Ok(())
    })
}

/// Square named matrix (correlations) with a leading `name` column.
pub fn matrix_csv<T: Scalar>(names: &[String], matrix: &nalgebra::DMatrix<T>) -> String {
    csv_buffer(|w| {
        let mut header = vec!["name".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in names.iter().enumerate() {
            let mut record = vec![name.clone()];
            for j in 0..names.len() {
                record.push(format!("{}", matrix[(i, j)]));
            }
            w.write_record(&record)?;
        }
        Ok(())
    })
}

/// Loadings per variable plus eigenvalue and explained-ratio rows.
pub fn loadings_csv<T: Scalar>(pca: &PcaResult<T>) -> String {
    csv_buffer(|w| {
        let p = pca.names.len();
        let mut header = vec!["name".to_string()];
        header.extend((1..=p).map(|j| format!("PC{j}")));
        w.write_record(&header)?;
        for (i, name) in pca.names.iter().enumerate() {
            let mut record = vec![name.clone()];
            for j in 0..p {
                record.push(format!("{}", pca.loadings[(i, j)]));
            }
            w.write_record(&record)?;
        }
        let mut eigen_row = vec!["eigenvalue".to_string()];
        eigen_row.extend(pca.eigenvalues.iter().map(|v| format!("{v}")));
        w.write_record(&eigen_row)?;
        let mut explained_row = vec!["explained_ratio".to_string()];
        explained_row.extend(pca.explained.iter().map(|v| format!("{v}")));
        w.write_record(&explained_row)?;
        Ok(())
    })
}

/// `region_id,PC1..PCp` component scores.
pub fn scores_csv<T: Scalar>(pca: &PcaResult<T>, regions: &RegionSet<T>) -> String {
    csv_buffer(|w| {
        let p = pca.names.len();
        let mut header = vec!["region_id".to_string()];
        header.extend((1..=p).map(|j| format!("PC{j}")));
        w.write_record(&header)?;
        for (i, region) in regions.iter().enumerate() {
            let mut record = vec![region.id.clone()];
            for j in 0..p {
                record.push(format!("{}", pca.scores[(i, j)]));
            }
            w.write_record(&record)?;
        }
        Ok(())
    })
}
