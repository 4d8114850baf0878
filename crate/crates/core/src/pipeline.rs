//! Config-driven end-to-end analysis: ingest, weights, Moran/LISA, SDM
//! versus OLS, PCA, and map emission, with a reproducibility manifest.
//!
//! The config file is flat `key = value` text. Any stage failure aborts
//! the run with the stage name attached and removes every file the run
//! had written; the manifest lists each produced artifact together with
//! the config hash and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autocorr::{global_moran_test, local_moran, LisaOptions, LisaTail, LocalMoranResult};
use crate::error::{Error, Result};
use crate::ingest::{self, AttributeTable, ChapterCounts, RegionFormat, RegionSet};
use crate::pca::{correlation_matrix, pca_fit};
use crate::render::{render_choropleth, ChoroplethData, RenderOptions};
use crate::scalar::LinalgScalar;
use crate::sdm::{build_design, fit_ols, fit_sdm, lm_residual_test, model_compare, SdmOptions};
use crate::tables::{self, SdmSummaryEntry};
use crate::weights::SpatialWeights;

/// Pipeline configuration. `counts` and `attributes` are mutually
/// exclusive outcome sources: counts are turned into chapter ratios,
/// attributes are used as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub regions: PathBuf,
    /// Explicit region format; inferred from the extension when `None`.
    pub regions_format: Option<RegionFormat>,
    pub counts: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    /// Covariate column selection; empty means every column of the file.
    pub covariate_columns: Vec<String>,
    /// Outcome column selection; empty means every outcome column.
    pub outcomes: Vec<String>,
    pub k: usize,
    pub nsim: usize,
    pub seed: u64,
    pub alpha: f64,
    pub standardize_covariates: bool,
    pub lisa_tail: LisaTail,
    pub fdr: bool,
    pub out_dir: PathBuf,
    pub ramp_low: String,
    pub ramp_high: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            regions: PathBuf::new(),
            regions_format: None,
            counts: None,
            attributes: None,
            covariates: None,
            covariate_columns: Vec::new(),
            outcomes: Vec::new(),
            k: 7,
            nsim: 999,
            seed: 1,
            alpha: 0.05,
            standardize_covariates: true,
            lisa_tail: LisaTail::Directed,
            fdr: false,
            out_dir: PathBuf::from("out"),
            ramp_low: "#ffffcc".to_string(),
            ramp_high: "#800026".to_string(),
        }
    }
}

impl PipelineConfig {
    /// Parses a flat `key = value` config file. `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Parses config text; unknown keys are rejected.
    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad integer for `{key}`: `{v}`")))
            };
            match key {
                "regions" => config.regions = PathBuf::from(value),
                "regions_format" => {
                    config.regions_format = Some(match value {
                        "csv" => RegionFormat::Csv,
                        "geojson" => RegionFormat::GeoJson,
                        other => {
                            return Err(Error::InvalidConfig(format!(
                                "bad regions_format `{other}`"
                            )))
                        }
                    })
                }
                "counts" => config.counts = Some(PathBuf::from(value)),
                "attributes" => config.attributes = Some(PathBuf::from(value)),
                "covariates" => config.covariates = Some(PathBuf::from(value)),
                "covariate_columns" => config.covariate_columns = split_list(value),
                "outcomes" => config.outcomes = split_list(value),
                "k" => config.k = parse_usize(value)?,
                "nsim" => config.nsim = parse_usize(value)?,
                "seed" => {
                    config.seed = value.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad integer for `seed`: `{value}`"))
                    })?
                }
                "alpha" => {
                    config.alpha = value.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad number for `alpha`: `{value}`"))
                    })?
                }
                "standardize_covariates" => config.standardize_covariates = parse_bool(value)?,
                "lisa_tail" => config.lisa_tail = value.parse()?,
                "fdr" => config.fdr = parse_bool(value)?,
                "out" => config.out_dir = PathBuf::from(value),
                "ramp_low" => config.ramp_low = value.to_string(),
                "ramp_high" => config.ramp_high = value.to_string(),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown config key `{other}`"
                    )))
                }
            }
        }
        Ok(config)
    }

    /// Field-level validation (file contents are checked at load time).
    pub fn validate(&self) -> Result<()> {
        if self.regions.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("`regions` is required".into()));
        }
        match (&self.counts, &self.attributes) {
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of `counts` or `attributes` is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "`counts` and `attributes` are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        if self.covariates.is_none() {
            return Err(Error::InvalidConfig("`covariates` is required".into()));
        }
        if self.covariates == self.attributes && self.covariate_columns.is_empty() {
            return Err(Error::InvalidConfig(
                "`covariate_columns` must be given when covariates share the attributes file"
                    .into(),
            ));
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.nsim < 99 {
            return Err(Error::TooFewSimulations(self.nsim));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("`out` is required".into()));
        }
        Ok(())
    }

    fn format(&self) -> RegionFormat {
        self.regions_format.unwrap_or_else(|| {
            match self.regions.extension().and_then(|e| e.to_str()) {
                Some("geojson") | Some("json") => RegionFormat::GeoJson,
                _ => RegionFormat::Csv,
            }
        })
    }

    /// Canonical one-line-per-field rendering; the basis of the hash.
    pub fn canonical_string(&self) -> String {
        let fmt = match self.regions_format {
            None => "auto".to_string(),
            Some(RegionFormat::Csv) => "csv".to_string(),
            Some(RegionFormat::GeoJson) => "geojson".to_string(),
        };
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut fields: Vec<(&str, String)> = vec![
            ("alpha", self.alpha.to_string()),
            ("attributes", path(&self.attributes)),
            ("counts", path(&self.counts)),
            ("covariate_columns", self.covariate_columns.join(",")),
            ("covariates", path(&self.covariates)),
            ("fdr", self.fdr.to_string()),
            ("k", self.k.to_string()),
            ("lisa_tail", self.lisa_tail.to_string()),
            ("nsim", self.nsim.to_string()),
            ("out", self.out_dir.display().to_string()),
            ("outcomes", self.outcomes.join(",")),
            ("ramp_high", self.ramp_high.clone()),
            ("ramp_low", self.ramp_low.clone()),
            ("regions", self.regions.display().to_string()),
            ("regions_format", fmt),
            ("seed", self.seed.to_string()),
            (
                "standardize_covariates",
                self.standardize_covariates.to_string(),
            ),
        ];
        fields.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (key, value) in fields {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    /// SHA-256 of the canonical field rendering: changes iff any config
    /// field changes.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(Error::InvalidConfig(format!("bad boolean `{other}`"))),
    }
}

/// Plain-text key/value manifest of a pipeline run.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Artifact filenames in creation order.
    pub fn artifacts(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k == "artifact")
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }
}

/// Runs the whole pipeline; on any failure, every file written so far is
/// removed and the error carries the failed stage name.
pub fn run_pipeline<T: LinalgScalar>(config: &PipelineConfig) -> Result<Manifest> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    match run_stages::<T>(config, &mut written) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            for path in &written {
                let _ = fs::remove_file(path);
            }
            Err(e)
        }
    }
}

struct Emitter<'a> {
    out_dir: &'a Path,
    written: &'a mut Vec<PathBuf>,
    artifacts: Vec<String>,
}

impl<'a> Emitter<'a> {
    fn emit(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out_dir.join(name);
        // track before writing so a partial write is cleaned up too
        self.written.push(path.clone());
        fs::write(&path, contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

fn run_stages<T: LinalgScalar>(
    config: &PipelineConfig,
    written: &mut Vec<PathBuf>,
) -> Result<Manifest> {
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    // ingest
    let regions: RegionSet<T> =
        ingest::load_regions(&config.regions, config.format()).map_err(stage("ingest"))?;
    let (outcome_table, counts): (AttributeTable<T>, Option<ChapterCounts>) =
        match (&config.counts, &config.attributes) {
            (Some(path), None) => {
                let counts = ingest::load_counts(path, &regions).map_err(stage("ingest"))?;
                let table = ingest::compute_ratios(&counts).map_err(stage("ingest"))?;
                (table, Some(counts))
            }
            (None, Some(path)) => (
                ingest::load_attributes(path, &regions).map_err(stage("ingest"))?,
                None,
            ),
            _ => unreachable!("validated"),
        };
    let covariates_path = config.covariates.as_ref().expect("validated");
    let covariate_table: AttributeTable<T> = if Some(covariates_path) == config.attributes.as_ref()
    {
        outcome_table.clone()
    } else {
        ingest::load_attributes(covariates_path, &regions).map_err(stage("ingest"))?
    };

    // column validation before any computation
    let outcomes: Vec<String> = if config.outcomes.is_empty() {
        outcome_table.names().to_vec()
    } else {
        config.outcomes.clone()
    };
    let covariate_names: Vec<String> = if config.covariate_columns.is_empty() {
        covariate_table.names().to_vec()
    } else {
        config.covariate_columns.clone()
    };
    (|| -> Result<()> {
        let mut filenames = std::collections::HashSet::new();
        for name in &outcomes {
            outcome_table.column(name)?;
            if !filenames.insert(sanitize_filename(name)) {
                return Err(Error::NameClash(name.clone()));
            }
        }
        for name in &covariate_names {
            covariate_table.column(name)?;
        }
        Ok(())
    })()
    .map_err(stage("validate"))?;

    let mut manifest = Manifest::default();
    manifest.push("config_hash", config.config_hash());
    manifest.push("seed", config.seed.to_string());
    manifest.push("k", config.k.to_string());
    manifest.push("nsim", config.nsim.to_string());
    manifest.push("alpha", config.alpha.to_string());
    manifest.push("lisa_tail", config.lisa_tail.to_string());
    manifest.push(
        "standardize_covariates",
        config.standardize_covariates.to_string(),
    );
    manifest.push("n_regions", regions.len().to_string());

    let mut emitter = Emitter {
        out_dir: &config.out_dir,
        written,
        artifacts: Vec::new(),
    };

    // weights
    let weights = SpatialWeights::build_knn(&regions, config.k).map_err(stage("weights"))?;
    emitter
        .emit("weights.csv", &tables::weights_csv(&weights, &regions))
        .map_err(stage("weights"))?;

    // covariate columns, optionally standardized
    let covariate_columns: Vec<(String, Vec<T>)> = covariate_names
        .iter()
        .map(|name| {
            let col = covariate_table.column(name)?;
            let values = if config.standardize_covariates {
                covariate_table.zscore_column(name)?
            } else {
                col.to_vec()
            };
            Ok((name.clone(), values))
        })
        .collect::<Result<_>>()
        .map_err(stage("covariates"))?;

    // population ratios (counts input only)
    if let Some(counts) = &counts {
        emitter
            .emit(
                "population_ratio.csv",
                &tables::population_ratio_csv::<T>(counts),
            )
            .map_err(stage("tables"))?;
    }

    // global Moran per outcome column
    let mut moran_rows = Vec::new();
    for name in &outcomes {
        let col = outcome_table.column(name).map_err(stage("moran"))?;
        let result =
            global_moran_test(col, &weights, config.nsim, config.seed).map_err(stage("moran"))?;
        moran_rows.push((name.clone(), result));
    }
    emitter
        .emit("moran_global.csv", &tables::moran_table_csv(&moran_rows))
        .map_err(stage("moran"))?;

    // LISA per outcome column, with maps when geometry allows
    let lisa_options = LisaOptions {
        nsim: config.nsim,
        seed: config.seed,
        alpha: config.alpha,
        tail: config.lisa_tail,
        fdr: config.fdr,
    };
    let render_options = RenderOptions {
        ramp_low: config.ramp_low.clone(),
        ramp_high: config.ramp_high.clone(),
        ..RenderOptions::default()
    };
    let has_geometry = regions.has_full_geometry();
    for name in &outcomes {
        let col = outcome_table.column(name).map_err(stage("lisa"))?;
        let lisa = local_moran(col, &weights, &lisa_options).map_err(stage("lisa"))?;
        emit_lisa_outputs(
            &mut emitter,
            &regions,
            name,
            col,
            &lisa,
            has_geometry,
            &render_options,
        )
        .map_err(stage("lisa"))?;
    }

    // SDM vs OLS per outcome column
    let x_ref: Vec<(&str, &[T])> = covariate_columns
        .iter()
        .map(|(name, col)| (name.as_str(), col.as_slice()))
        .collect();
    let design = build_design(&x_ref, &weights).map_err(stage("sdm"))?;
    let mut summary_rows = Vec::new();
    for name in &outcomes {
        let col = outcome_table.column(name).map_err(stage("sdm"))?;
        let fit = fit_sdm(col, &x_ref, &weights, &SdmOptions::default()).map_err(stage("sdm"))?;
        let ols = fit_ols(col, &design).map_err(stage("sdm"))?;
        let comparison = model_compare(&fit, &ols).map_err(stage("sdm"))?;
        let lm =
            lm_residual_test(&fit, &weights, config.nsim, config.seed).map_err(stage("sdm"))?;
        emitter
            .emit(
                &format!("sdm_full_{}.csv", sanitize_filename(name)),
                &tables::sdm_full_csv(&fit),
            )
            .map_err(stage("sdm"))?;
        summary_rows.push(SdmSummaryEntry {
            column: name.clone(),
            fit,
            lm_p: lm.p_value,
            aic_ols: ols.aic.as_f64(),
            delta_aic: comparison.delta_aic.as_f64(),
            lr_statistic: comparison.lr_statistic.as_f64(),
            preferred: comparison.preferred.to_string(),
        });
    }
    emitter
        .emit(
            "sdm_summary.csv",
            &tables::sdm_summary_csv(&summary_rows, config.alpha),
        )
        .map_err(stage("sdm"))?;
    emitter
        .emit(
            "model_compare.csv",
            &tables::model_compare_csv(&summary_rows),
        )
        .map_err(stage("sdm"))?;

    // PCA over the outcome columns, then LISA on PC1
    if outcomes.len() >= 2 {
        let outcome_refs: Vec<(&str, &[T])> = outcomes
            .iter()
            .map(|name| outcome_table.column(name).map(|col| (name.as_str(), col)))
            .collect::<Result<_>>()
            .map_err(stage("pca"))?;
        let corr = correlation_matrix(&outcome_refs).map_err(stage("pca"))?;
        emitter
            .emit(
                "chapter_correlations.csv",
                &tables::matrix_csv(&outcomes, &corr),
            )
            .map_err(stage("pca"))?;
        let pca = pca_fit(&outcome_refs).map_err(stage("pca"))?;
        emitter
            .emit("pca_loadings.csv", &tables::loadings_csv(&pca))
            .map_err(stage("pca"))?;
        emitter
            .emit("pca_scores.csv", &tables::scores_csv(&pca, &regions))
            .map_err(stage("pca"))?;

        let pc1 = pca.score_column(0);
        let lisa = local_moran(&pc1, &weights, &lisa_options).map_err(stage("pca-lisa"))?;
        emit_lisa_outputs(
            &mut emitter,
            &regions,
            "PC1",
            &pc1,
            &lisa,
            has_geometry,
            &render_options,
        )
        .map_err(stage("pca-lisa"))?;
    }

    for artifact in &emitter.artifacts {
        manifest.push("artifact", artifact.clone());
    }
    manifest.push("artifact", "manifest.txt");
    let text = manifest.to_text();
    let path = config.out_dir.join("manifest.txt");
    written.push(path.clone());
    fs::write(&path, text).map_err(|e| Error::from(e).in_stage("manifest"))?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn emit_lisa_outputs<T: LinalgScalar>(
    emitter: &mut Emitter<'_>,
    regions: &RegionSet<T>,
    column: &str,
    values: &[T],
    lisa: &LocalMoranResult<T>,
    has_geometry: bool,
    render_options: &RenderOptions,
) -> Result<()> {
    let base = sanitize_filename(column);
    emitter.emit(
        &format!("lisa_{base}.csv"),
        &tables::lisa_csv(regions, lisa),
    )?;
    emitter.emit(
        &format!("lisa_{base}.geojson"),
        &tables::lisa_geojson(regions, lisa),
    )?;
    if has_geometry {
        let labels: Vec<_> = lisa.regions.iter().map(|r| r.label).collect();
        let value_map = render_choropleth(
            regions,
            &ChoroplethData::Values(values),
            &RenderOptions {
                title: Some(format!("{column} values")),
                ..render_options.clone()
            },
        )?;
        emitter.emit(&format!("value_{base}.svg"), &value_map)?;
        let lisa_map = render_choropleth(
            regions,
            &ChoroplethData::Labels(&labels),
            &RenderOptions {
                title: Some(format!("{column} LISA clusters")),
                ..render_options.clone()
            },
        )?;
        emitter.emit(&format!("lisa_{base}.svg"), &lisa_map)?;
    }
    Ok(())
}

/// Column names become artifact filenames; anything outside
/// `[A-Za-z0-9.-]` maps to `_`.
pub fn sanitize_filename(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
