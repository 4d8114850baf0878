//! Command-line driver for the regionstat library.
//!
//! Subcommands mirror the analysis stages (`weights`, `moran`, `lisa`,
//! `sdm`, `pca`, `render`), `pipeline` runs everything from a config
//! file, and `synth` writes reproducible synthetic fixtures.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use regionstat::autocorr::{global_moran_test, local_moran, LisaLabel, LisaOptions, LisaTail};
use regionstat::ingest::{
    self, load_attributes, load_regions, AttributeTable, RegionFormat, RegionSet,
};
use regionstat::pca::{correlation_matrix, pca_fit};
use regionstat::pipeline::{run_pipeline, sanitize_filename, PipelineConfig};
use regionstat::render::{render_choropleth, ChoroplethData, RenderOptions};
use regionstat::sdm::{
    build_design, fit_ols, fit_sdm, lm_residual_test, model_compare, SdmOptions,
};
use regionstat::synth::{
    add_square_geometry, gen_lattice, gen_sdm, CovariateSpec, DgpSpec, LatticeKind,
};
use regionstat::tables;
use regionstat::weights::SpatialWeights;

#[derive(Parser)]
#[command(
    name = "regionstat",
    version,
    about = "KNN spatial weights, Moran's I / LISA, spatial Durbin models, and PCA over regional data"
)]
struct Cli {
    /// Pipeline config file (used by `pipeline`; other subcommands take
    /// explicit flags)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for permutation tests and generators
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo permutations
    #[arg(long, global = true)]
    nsim: Option<usize>,
    /// Neighbors per region in the KNN weights
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Significance level
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Output directory (`render` treats this as the SVG file path)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RegionArgs {
    /// Region file: CSV (`region_id,name,lon,lat`) or GeoJSON
    #[arg(long)]
    regions: PathBuf,
    /// Force the region format instead of inferring from the extension
    #[arg(long, value_parser = ["csv", "geojson"])]
    regions_format: Option<String>,
}

impl RegionArgs {
    fn load(&self) -> Result<RegionSet<f64>> {
        let format = match self.regions_format.as_deref() {
            Some("csv") => RegionFormat::Csv,
            Some("geojson") => RegionFormat::GeoJson,
            Some(_) => unreachable!("clap validates"),
            None => match self.regions.extension().and_then(|e| e.to_str()) {
                Some("geojson") | Some("json") => RegionFormat::GeoJson,
                _ => RegionFormat::Csv,
            },
        };
        load_regions(&self.regions, format)
            .with_context(|| format!("loading regions from {}", self.regions.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the row-standardized KNN weights and export `weights.csv`
    Weights {
        #[command(flatten)]
        regions: RegionArgs,
    },
    /// Global Moran permutation tests; writes `moran_global.csv`
    Moran {
        #[command(flatten)]
        regions: RegionArgs,
        /// Wide attribute CSV (`region_id,<col>,...`)
        #[arg(long)]
        attributes: PathBuf,
        /// Columns to analyze (default: all)
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Local Moran / LISA for one column; writes `lisa_<column>.csv` and
    /// `lisa_<column>.geojson`
    Lisa {
        #[command(flatten)]
        regions: RegionArgs,
        #[arg(long)]
        attributes: PathBuf,
        #[arg(long)]
        column: String,
        /// Permutation tail: greater, two-sided, or directed
        #[arg(long, default_value = "directed")]
        tail: String,
        /// Apply a Benjamini-Hochberg gate across regions
        #[arg(long)]
        fdr: bool,
    },
    /// Spatial Durbin model vs OLS for one outcome; writes
    /// `sdm_full_<column>.csv`, `sdm_summary.csv`, `model_compare.csv`
    Sdm {
        #[command(flatten)]
        regions: RegionArgs,
        #[arg(long)]
        attributes: PathBuf,
        /// Outcome column in the attributes file
        #[arg(long)]
        outcome: String,
        /// Covariates file (defaults to the attributes file)
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Covariate columns (default: all columns of the covariates file)
        #[arg(long, value_delimiter = ',')]
        covariate_columns: Vec<String>,
        /// Use covariates as provided instead of z-scoring them
        #[arg(long)]
        no_standardize: bool,
    },
    /// PCA over attribute columns; writes loadings, scores, correlations
    Pca {
        #[command(flatten)]
        regions: RegionArgs,
        #[arg(long)]
        attributes: PathBuf,
        /// Columns to decompose (default: all)
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Run the full pipeline from `--config`
    Pipeline,
    /// Write a synthetic fixture (regions.csv, regions.geojson,
    /// attributes.csv, synth_manifest.txt) drawn from the SDM process
    Synth {
        /// Number of regions
        #[arg(long, default_value_t = 76)]
        n: usize,
        /// Lattice kind: ring or grid
        #[arg(long, default_value = "ring")]
        lattice: String,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 0.0)]
        intercept: f64,
        /// Comma-separated direct coefficients
        #[arg(long, value_delimiter = ',', default_value = "1.5,-2.0")]
        beta: Vec<f64>,
        /// Comma-separated lag coefficients (must match beta's length)
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.5")]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        /// Number of outcome columns to generate
        #[arg(long, default_value_t = 1)]
        outcomes: usize,
    },
    /// Render a choropleth SVG from a value column or a LISA table
    Render {
        #[command(flatten)]
        regions: RegionArgs,
        /// Attributes file for a value map
        #[arg(long, conflicts_with = "lisa")]
        attributes: Option<PathBuf>,
        /// Column of the attributes file to paint
        #[arg(long, requires = "attributes")]
        column: Option<String>,
        /// `lisa_<column>.csv` output to paint as a cluster map
        #[arg(long)]
        lisa: Option<PathBuf>,
        #[arg(long, default_value = "#ffffcc")]
        ramp_low: String,
        #[arg(long, default_value = "#800026")]
        ramp_high: String,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(1);
    let nsim = cli.nsim.unwrap_or(999);
    let k = cli.k.unwrap_or(7);
    let alpha = cli.alpha.unwrap_or(0.05);

    match cli.command {
        Command::Weights { regions } => {
            let regions = regions.load()?;
            let weights = SpatialWeights::build_knn(&regions, k)?;
            let dir = out_dir(&cli.out)?;
            write_artifact(
                &dir,
                "weights.csv",
                &tables::weights_csv(&weights, &regions),
            )?;
        }
        Command::Moran {
            regions,
            attributes,
            columns,
        } => {
            let regions = regions.load()?;
            let table = load_attributes::<f64>(&attributes, &regions)?;
            let weights = SpatialWeights::build_knn(&regions, k)?;
            let columns = columns_or_all(&table, &columns);
            let mut rows = Vec::new();
            for name in &columns {
                let col = table.column(name)?;
                let result = global_moran_test(col, &weights, nsim, seed)
                    .with_context(|| format!("column `{name}`"))?;
                println!("{name}: I = {:.6}, p = {}", result.i_obs, result.p_value);
                rows.push((name.clone(), result));
            }
            let dir = out_dir(&cli.out)?;
            write_artifact(&dir, "moran_global.csv", &tables::moran_table_csv(&rows))?;
        }
        Command::Lisa {
            regions,
            attributes,
            column,
            tail,
            fdr,
        } => {
            let regions = regions.load()?;
            let table = load_attributes::<f64>(&attributes, &regions)?;
            let weights = SpatialWeights::build_knn(&regions, k)?;
            let col = table.column(&column)?;
            let options = LisaOptions {
                nsim,
                seed,
                alpha,
                tail: tail.parse::<LisaTail>()?,
                fdr,
            };
            let lisa = local_moran(col, &weights, &options)?;
            let dir = out_dir(&cli.out)?;
            let base = sanitize_filename(&column);
            write_artifact(
                &dir,
                &format!("lisa_{base}.csv"),
                &tables::lisa_csv(&regions, &lisa),
            )?;
            write_artifact(
                &dir,
                &format!("lisa_{base}.geojson"),
                &tables::lisa_geojson(&regions, &lisa),
            )?;
        }
        Command::Sdm {
            regions,
            attributes,
            outcome,
            covariates,
            covariate_columns,
            no_standardize,
        } => {
            let regions = regions.load()?;
            let table = load_attributes::<f64>(&attributes, &regions)?;
            let covariates_path = covariates.unwrap_or_else(|| attributes.clone());
            let cov_table = if covariates_path == attributes {
                table.clone()
            } else {
                load_attributes::<f64>(&covariates_path, &regions)?
            };
            let names = if covariate_columns.is_empty() {
                if covariates_path == attributes {
                    bail!(
                        "--covariate-columns is required when covariates share the attributes file"
                    );
                }
                cov_table.names().to_vec()
            } else {
                covariate_columns
            };
            let weights = SpatialWeights::build_knn(&regions, k)?;
            let columns: Vec<(String, Vec<f64>)> = names
                .iter()
                .map(|name| {
                    let values = if no_standardize {
                        cov_table.column(name).map(<[f64]>::to_vec)
                    } else {
                        cov_table.zscore_column(name)
                    }?;
                    Ok((name.clone(), values))
                })
                .collect::<Result<_>>()?;
            let x: Vec<(&str, &[f64])> = columns
                .iter()
                .map(|(name, col)| (name.as_str(), col.as_slice()))
                .collect();
            let y = table.column(&outcome)?;

            let fit = fit_sdm(y, &x, &weights, &SdmOptions::default())?;
            let design = build_design(&x, &weights)?;
            let ols = fit_ols(y, &design)?;
            let comparison = model_compare(&fit, &ols)?;
            let lm = lm_residual_test(&fit, &weights, nsim, seed)?;
            println!(
                "{outcome}: rho = {:.4} (p = {:.4}), aic = {:.2} vs ols {:.2}, lm_p = {}",
                fit.rho, fit.rho_p, fit.aic, ols.aic, lm.p_value
            );

            let dir = out_dir(&cli.out)?;
            let rows = vec![tables::SdmSummaryEntry {
                column: outcome.clone(),
                lm_p: lm.p_value,
                aic_ols: ols.aic,
                delta_aic: comparison.delta_aic,
                lr_statistic: comparison.lr_statistic,
                preferred: comparison.preferred.to_string(),
                fit,
            }];
            write_artifact(
                &dir,
                &format!("sdm_full_{}.csv", sanitize_filename(&outcome)),
                &tables::sdm_full_csv(&rows[0].fit),
            )?;
            write_artifact(
                &dir,
                "sdm_summary.csv",
                &tables::sdm_summary_csv(&rows, alpha),
            )?;
            write_artifact(&dir, "model_compare.csv", &tables::model_compare_csv(&rows))?;
        }
        Command::Pca {
            regions,
            attributes,
            columns,
        } => {
            let regions = regions.load()?;
            let table = load_attributes::<f64>(&attributes, &regions)?;
            let columns = columns_or_all(&table, &columns);
            let refs: Vec<(&str, &[f64])> = columns
                .iter()
                .map(|name| table.column(name).map(|col| (name.as_str(), col)))
                .collect::<regionstat::Result<_>>()?;
            let corr = correlation_matrix(&refs)?;
            let pca = pca_fit(&refs)?;
            println!(
                "PC1 explains {:.1}% of total variance",
                pca.explained[0] * 100.0
            );
            let dir = out_dir(&cli.out)?;
            write_artifact(
                &dir,
                "chapter_correlations.csv",
                &tables::matrix_csv(&columns, &corr),
            )?;
            write_artifact(&dir, "pca_loadings.csv", &tables::loadings_csv(&pca))?;
            write_artifact(&dir, "pca_scores.csv", &tables::scores_csv(&pca, &regions))?;
        }
        Command::Pipeline => {
            let config_path = cli.config.clone().context("`pipeline` requires --config")?;
            let mut config = PipelineConfig::from_file(&config_path)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(nsim) = cli.nsim {
                config.nsim = nsim;
            }
            if let Some(k) = cli.k {
                config.k = k;
            }
            if let Some(alpha) = cli.alpha {
                config.alpha = alpha;
            }
            if let Some(out) = &cli.out {
                config.out_dir = out.clone();
            }
            let manifest = run_pipeline::<f64>(&config)?;
            println!(
                "pipeline complete: {} artifacts in {}",
                manifest.artifacts().len(),
                config.out_dir.display()
            );
        }
        Command::Synth {
            n,
            lattice,
            rho,
            intercept,
            beta,
            theta,
            sigma,
            outcomes,
        } => {
            if outcomes == 0 {
                bail!("--outcomes must be at least 1");
            }
            let kind = lattice.parse::<LatticeKind>()?;
            let regions = gen_lattice::<f64>(n, kind, k)?;
            let spacing = match kind {
                LatticeKind::Ring => 360.0 / n as f64,
                LatticeKind::Grid => 0.1,
            };
            let regions_geo = add_square_geometry(&regions, spacing * 0.45);
            let weights = SpatialWeights::build_knn(&regions, k)?;

            let p = beta.len();
            let base_spec = DgpSpec {
                rho,
                intercept,
                beta: beta.clone(),
                theta: theta.clone(),
                sigma,
                seed,
                covariates: CovariateSpec::Normal { p },
            };
            // Shared covariates across outcome columns: draw them once,
            // then reuse for every outcome seed.
            let first = gen_sdm(&weights, &base_spec)?;
            let mut table = AttributeTable::<f64>::new(n);
            for (j, col) in first.x.iter().enumerate() {
                table.push_column(&format!("x{}", j + 1), col.clone(), ingest::ColumnKind::Raw)?;
            }
            let supplied = CovariateSpec::Supplied(first.x.clone());
            for c in 0..outcomes {
                let sample = if c == 0 {
                    first.clone()
                } else {
                    gen_sdm(
                        &weights,
                        &DgpSpec {
                            seed: seed.wrapping_add(c as u64),
                            covariates: supplied.clone(),
                            ..base_spec.clone()
                        },
                    )?
                };
                let name = if outcomes == 1 {
                    "y".to_string()
                } else {
                    format!("y{}", c + 1)
                };
                table.push_column(&name, sample.y, ingest::ColumnKind::Raw)?;
            }

            let dir = out_dir(&cli.out)?;
            let regions_csv = {
                let mut out = String::from("region_id,name,lon,lat\n");
                for r in regions.iter() {
                    out.push_str(&format!("{},{},{},{}\n", r.id, r.name, r.lon, r.lat));
                }
                out
            };
            write_artifact(&dir, "regions.csv", &regions_csv)?;
            ingest::write_regions_geojson(&regions_geo, &dir.join("regions.geojson"))?;
            println!("wrote {}", dir.join("regions.geojson").display());
            table.write_csv(&dir.join("attributes.csv"), &regions)?;
            println!("wrote {}", dir.join("attributes.csv").display());

            let manifest = format!(
                "kind=sdm-dgp\nlattice={lattice}\nn={n}\nk={k}\nrho={rho}\nintercept={intercept}\n\
                 beta={}\ntheta={}\nsigma={sigma}\nseed={seed}\noutcomes={outcomes}\n",
                join_f64(&beta),
                join_f64(&theta),
            );
            write_artifact(&dir, "synth_manifest.txt", &manifest)?;
        }
        Command::Render {
            regions,
            attributes,
            column,
            lisa,
            ramp_low,
            ramp_high,
        } => {
            let regions = regions.load()?;
            let options = RenderOptions {
                ramp_low,
                ramp_high,
                ..RenderOptions::default()
            };
            let svg = match (attributes, lisa) {
                (Some(attrs), None) => {
                    let column = column.context("--column is required with --attributes")?;
                    let table = load_attributes::<f64>(&attrs, &regions)?;
                    let values = table.column(&column)?;
                    render_choropleth(
                        &regions,
                        &ChoroplethData::Values(values),
                        &RenderOptions {
                            title: Some(format!("{column} values")),
                            ..options
                        },
                    )?
                }
                (None, Some(lisa_path)) => {
                    let labels = read_lisa_labels(&lisa_path, &regions)?;
                    render_choropleth(
                        &regions,
                        &ChoroplethData::Labels(&labels),
                        &RenderOptions {
                            title: Some("LISA clusters".to_string()),
                            ..options
                        },
                    )?
                }
                _ => bail!("render needs exactly one of --attributes/--column or --lisa"),
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("map.svg"));
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn columns_or_all(table: &AttributeTable<f64>, requested: &[String]) -> Vec<String> {
    if requested.is_empty() {
        table.names().to_vec()
    } else {
        requested.to_vec()
    }
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Reads the `label` column of a `lisa_<column>.csv` file, joined against
/// the region order.
fn read_lisa_labels(path: &Path, regions: &RegionSet<f64>) -> Result<Vec<LisaLabel>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .context("empty LISA file")?
        .split(',')
        .collect();
    let id_idx = header
        .iter()
        .position(|h| *h == "region_id")
        .context("missing region_id column")?;
    let label_idx = header
        .iter()
        .position(|h| *h == "label")
        .context("missing label column")?;
    let mut labels = vec![None; regions.len()];
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let id = fields.get(id_idx).context("short LISA row")?;
        let raw = fields.get(label_idx).context("short LISA row")?;
        let label = match *raw {
            "HH" => LisaLabel::HighHigh,
            "LL" => LisaLabel::LowLow,
            "HL" => LisaLabel::HighLow,
            "LH" => LisaLabel::LowHigh,
            "Insignificant" => LisaLabel::Insignificant,
            other => bail!("unknown label `{other}`"),
        };
        let idx = regions
            .index_of(id)
            .with_context(|| format!("unknown region `{id}` in LISA file"))?;
        labels[idx] = Some(label);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.with_context(|| format!("region `{}` missing from LISA file", regions.get(i).id))
        })
        .collect()
}
