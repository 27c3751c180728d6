use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use relight_core::config::RunConfig;
use relight_core::enhance::{enhance_pipeline, RatioSource};
use relight_core::hog::compute_hog;
use relight_core::image::{extract_illumination, load_image, save_image, Image, Map};
use relight_core::metrics::{psnr, ssim};
use relight_core::priors::{train_prior as run_training, PriorKind};
use relight_core::tensor::{load_prior_model, save_prior_model, write_tensor};
use relight_core::unfold::{decompose as run_decompose, ProxL};
use relight_core::CoreError;

use crate::{CliError, PriorKindArg};

type CmdResult = Result<(), CliError>;

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(RunConfig::from_file(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn map_as_gray(m: &Map) -> Result<Image, CoreError> {
    Image::from_channels(std::slice::from_ref(m))
}

fn image_dims(img: &Image) -> Vec<u32> {
    if img.channels() == 1 {
        vec![img.height() as u32, img.width() as u32]
    } else {
        vec![
            img.height() as u32,
            img.width() as u32,
            img.channels() as u32,
        ]
    }
}

pub fn decompose(
    input: &Path,
    out_prefix: &str,
    config: Option<&Path>,
    stages: Option<usize>,
    prior: Option<&Path>,
) -> CmdResult {
    let mut cfg = load_config(config)?;
    if let Some(k) = stages {
        cfg.set("unfold.stages", &k.to_string(), 0)?;
    }
    let model = prior.map(load_prior_model).transpose()?;
    let mut unfold_cfg = cfg.unfold_config(model.clone())?;
    if let Some(model) = model {
        // An explicit --prior always selects the learned operator.
        unfold_cfg.prox_l = ProxL::Learned(model);
    }

    let img = load_image(input)?;
    let parts = run_decompose(&img, &unfold_cfg)?;

    let l_img = map_as_gray(&parts.illumination)?;
    save_image(&l_img, format!("{out_prefix}_L.png"))?;
    save_image(&parts.reflectance, format!("{out_prefix}_R.png"))?;
    // Preview remap of the signed residual from [-1, 1] to [0, 1]; the
    // tensor file next to it carries the exact values.
    let n_preview = parts.noise.map_values(|v| (v + 1.0) / 2.0);
    save_image(&n_preview, format!("{out_prefix}_N.png"))?;

    write_tensor(
        format!("{out_prefix}_L.cuet"),
        &[
            parts.illumination.height() as u32,
            parts.illumination.width() as u32,
        ],
        parts.illumination.data(),
    )?;
    write_tensor(
        format!("{out_prefix}_R.cuet"),
        &image_dims(&parts.reflectance),
        parts.reflectance.data(),
    )?;
    write_tensor(
        format!("{out_prefix}_N.cuet"),
        &image_dims(&parts.noise),
        parts.noise.data(),
    )?;

    if let Some(history) = &parts.stage_history {
        let mut residuals = Vec::with_capacity(history.len());
        for snap in history {
            let tag = format!("{out_prefix}_stage{}", snap.stage);
            write_tensor(
                format!("{tag}_L.cuet"),
                &[
                    snap.illumination.height() as u32,
                    snap.illumination.width() as u32,
                ],
                snap.illumination.data(),
            )?;
            write_tensor(
                format!("{tag}_R.cuet"),
                &image_dims(&snap.reflectance),
                snap.reflectance.data(),
            )?;
            write_tensor(
                format!("{tag}_N.cuet"),
                &image_dims(&snap.noise),
                snap.noise.data(),
            )?;
            residuals.push(snap.residual_norm);
        }
        write_tensor(
            format!("{out_prefix}_residuals.cuet"),
            &[residuals.len() as u32],
            &residuals,
        )?;
    }
    Ok(())
}

pub fn enhance(
    input: &Path,
    ratio: Option<f64>,
    reference: Option<&Path>,
    out: &Path,
    config: Option<&Path>,
) -> CmdResult {
    let cfg = load_config(config)?;
    let unfold_cfg = cfg.unfold_config(None)?;
    let enhance_cfg = cfg.enhance_config();

    let img = load_image(input)?;
    let (enhanced, ref_image) = match (ratio, reference) {
        (Some(r), None) => {
            let (enhanced, _) =
                enhance_pipeline(&img, RatioSource::Value(r), &unfold_cfg, &enhance_cfg)?;
            (enhanced, None)
        }
        (None, Some(path)) => {
            let reference_img = load_image(path)?;
            let (enhanced, _) = enhance_pipeline(
                &img,
                RatioSource::Reference(&reference_img),
                &unfold_cfg,
                &enhance_cfg,
            )?;
            (enhanced, Some(reference_img))
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --ratio and --ref is required".to_string(),
            ))
        }
    };
    save_image(&enhanced, out)?;
    if let Some(reference_img) = ref_image {
        let p = psnr(&enhanced, &reference_img)?;
        let s = ssim(&enhanced, &reference_img)?;
        println!("psnr_db={p} ssim={s}");
    }
    Ok(())
}

fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>, CoreError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push((name.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn train_prior(
    kind: PriorKindArg,
    data: &Path,
    epochs: usize,
    seed: u64,
    out: &Path,
    config: Option<&Path>,
) -> CmdResult {
    let mut cfg = load_config(config)?;
    cfg.set("train.epochs", &epochs.to_string(), 0)?;
    cfg.set("seed", &seed.to_string(), 0)?;

    let files = list_pngs(data)?;
    if files.is_empty() {
        return Err(CliError::Core(CoreError::format(format!(
            "no PNG files in {}",
            data.display()
        ))));
    }
    let mut images = Vec::with_capacity(files.len());
    for (_, path) in &files {
        images.push(load_image(path)?);
    }

    let kind = match kind {
        PriorKindArg::Illumination => PriorKind::Illumination,
        PriorKindArg::Noise => PriorKind::Noise,
    };
    let outcome = run_training(kind, &images, &cfg.train_config(), &cfg.mae_config())?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("{epoch},{loss}");
    }
    save_prior_model(&outcome.model, out)?;
    Ok(())
}

pub fn eval(pred: &Path, gt: &Path, out: &Path) -> CmdResult {
    let pred_files = list_pngs(pred)?;
    let gt_files = list_pngs(gt)?;

    let gt_names: std::collections::BTreeMap<&str, &PathBuf> =
        gt_files.iter().map(|(n, p)| (n.as_str(), p)).collect();
    let pred_names: std::collections::BTreeSet<&str> =
        pred_files.iter().map(|(n, _)| n.as_str()).collect();

    for (name, _) in &pred_files {
        if !gt_names.contains_key(name.as_str()) {
            eprintln!("relight: no ground truth for {name}, skipping");
        }
    }
    for (name, _) in &gt_files {
        if !pred_names.contains(name.as_str()) {
            eprintln!("relight: no prediction for {name}, skipping");
        }
    }

    let mut rows = Vec::new();
    for (name, pred_path) in &pred_files {
        let Some(gt_path) = gt_names.get(name.as_str()) else {
            continue;
        };
        let a = load_image(pred_path)?;
        let b = load_image(gt_path)?;
        let p = psnr(&a, &b)?;
        let s = ssim(&a, &b)?;
        rows.push((name.clone(), p, s));
    }
    if rows.is_empty() {
        return Err(CliError::Core(CoreError::format(
            "no matching filenames between the two directories",
        )));
    }

    let mut csv = BufWriter::new(File::create(out).map_err(CoreError::Io)?);
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (name, p, s) in &rows {
        writeln!(csv, "{name},{p},{s}").map_err(CoreError::Io)?;
        psnr_sum += p;
        ssim_sum += s;
    }
    let n = rows.len() as f64;
    writeln!(csv, "mean,{},{}", psnr_sum / n, ssim_sum / n).map_err(CoreError::Io)?;
    csv.flush().map_err(CoreError::Io)?;
    Ok(())
}

pub fn hog(input: &Path, out: &Path, config: Option<&Path>) -> CmdResult {
    let cfg = load_config(config)?;
    let hog_cfg = cfg.hog_config();
    let img = load_image(input)?;
    let lum = extract_illumination(&img);

    // Crop down to whole cells.
    let h = lum.height() - lum.height() % hog_cfg.cell_size;
    let w = lum.width() - lum.width() % hog_cfg.cell_size;
    if h == 0 || w == 0 {
        return Err(CliError::Core(CoreError::argument(format!(
            "image {}x{} is smaller than one {}-pixel cell",
            lum.height(),
            lum.width(),
            hog_cfg.cell_size
        ))));
    }
    let cropped = Map::from_fn(h, w, |x, y| lum.get(x, y));

    let feature = compute_hog(&cropped, &hog_cfg)?;
    write_tensor(
        out,
        &[
            feature.layout.blocks_y as u32,
            feature.layout.blocks_x as u32,
            (feature.layout.block_size * feature.layout.block_size) as u32,
            feature.layout.bins as u32,
        ],
        &feature.values,
    )?;
    Ok(())
}
