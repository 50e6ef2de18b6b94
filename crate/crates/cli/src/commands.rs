use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use rfae::dataset::{
    augment_with_uniform_noise, encode_labels, encode_labels_with, generate_artificial_tree, load_csv,
    stratified_split, write_csv, LabelColumn, SplitSpec, TreeSpec,
};
use rfae::evaluation::{evaluate_embedding, EvaluationInput};
use rfae::network::write_loss_history;
use rfae::persistence::{load, save};
use rfae::pipeline::{Extension, FitArtifacts, RfAe, RfAeConfig};
use rfae::rng::derive_seed;
use rfae::target::load_embedding;

use crate::args::{EvaluateArgs, FitArgs, GenTreeArgs, PlotArgs, TargetArg, TransformArgs};
use crate::output::{numbered, read_column, read_features, sink, write_matrix};
use crate::svg::{scatter_svg, PlotData};

/// Precision of the network in models written by the CLI.
type Model = RfAe<f32>;

pub fn gen_tree(a: &GenTreeArgs) -> Result<()> {
    let spec = TreeSpec {
        branch_lengths: vec![a.branch_length as usize; a.branches as usize],
        noise_sd: a.noise_sd,
        extra_points: a.extra_points,
        seed: a.seed,
    };
    let mut data = generate_artificial_tree(&spec)?;
    if let Some(snr) = a.snr {
        data = augment_with_uniform_noise(&data, snr, derive_seed(a.seed, "snr-noise", 0))?;
    }
    let split = SplitSpec {
        test_fraction: a.test_fraction,
        seed: derive_seed(a.seed, "split", 0),
        stratified: true,
    };
    let (train, test) = stratified_split(&data, &split)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    write_csv(a.out_dir.join("train.csv"), &data.subset(&train))?;
    write_csv(a.out_dir.join("test.csv"), &data.subset(&test))?;
    log::info!(
        "wrote {} train and {} test rows with {} features to {}",
        train.len(),
        test.len(),
        data.n_features(),
        a.out_dir.display()
    );
    Ok(())
}

fn fit_config(a: &FitArgs) -> RfAeConfig {
    let mut cfg = RfAeConfig::new(a.seed);
    cfg.forest.n_trees = a.n_trees;
    cfg.n_prototypes = a.n_prototypes;
    cfg.hidden = a.hidden.clone();
    cfg.clamp_hidden = !a.no_clamp_hidden;
    cfg.latent_dim = a.latent_dim;
    cfg.diffusion.t = a.diffusion_t;
    cfg.kernel_extensions = !a.no_kernel_extensions;
    cfg.train.lambda = a.lambda;
    cfg.train.epochs = a.epochs;
    cfg.train.batch_size = a.batch_size;
    cfg.train.lr = a.lr;
    cfg.train.weight_decay = a.weight_decay;
    cfg
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let cfg = fit_config(a);
    cfg.train.validate()?;
    let data = load_csv(&a.train, &LabelColumn::from(a.label_column.as_str()))
        .with_context(|| format!("reading {}", a.train.display()))?;
    let n_proto = cfg.n_prototypes.resolve(data.n_samples());
    if n_proto < data.n_classes() || n_proto > data.n_samples() {
        bail!(
            "{n_proto} prototypes cannot cover {} classes from {} rows",
            data.n_classes(),
            data.n_samples()
        );
    }
    log::info!(
        "training on {} rows, {} features, {} classes",
        data.n_samples(),
        data.n_features(),
        data.n_classes()
    );
    let target = match &a.target {
        TargetArg::Diffusion => None,
        TargetArg::File(p) => Some(
            load_embedding::<f64>(p, data.n_samples())
                .map_err(|e| e.in_stage("target"))
                .with_context(|| format!("loading target {}", p.display()))?,
        ),
    };
    let (model, artifacts) = Model::fit_detailed(&data, &cfg, target)?;
    save(&model, &a.model).with_context(|| format!("saving {}", a.model.display()))?;
    log::info!("model written to {}", a.model.display());
    if let Some(p) = &a.loss_history {
        write_loss_history(p, &model.history)?;
    }
    if let Some(dir) = &a.dump_dir {
        dump(dir, &model, &artifacts, a.dump_proximities)?;
    }
    Ok(())
}

fn dump(dir: &Path, model: &Model, art: &FitArtifacts, proximities: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let d = model.latent_dim();
    let mut times = String::from("stage,seconds\n");
    for (stage, secs) in &art.stage_seconds {
        times.push_str(&format!("{stage},{secs}\n"));
    }
    fs::write(dir.join("stage_times.csv"), times)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&model.config)?)?;
    write_loss_history(dir.join("loss_history.csv"), &model.history)?;
    let medoids = Array2::from_shape_fn((model.n_prototypes(), 2), |(k, c)| {
        let m = model.medoids.indices[k];
        if c == 0 { m as f64 } else { model.y_train[m] as f64 }
    });
    write_matrix(&dir.join("medoids.csv"), &["index".into(), "class".into()], medoids.view())?;
    write_matrix(
        &dir.join("p_star.csv"),
        &numbered("p", model.n_prototypes()),
        model.train_p_star.view(),
    )?;
    write_matrix(&dir.join("target_raw.csv"), &numbered("z", d), art.raw_target.view())?;
    write_matrix(&dir.join("target.csv"), &numbered("z", d), model.target.coords.view())?;
    let z = model.embed_training()?.mapv(f64::from);
    write_matrix(&dir.join("embedding_train.csv"), &numbered("z", d), z.view())?;
    if proximities {
        let n = art.rfgap.nrows();
        write_matrix(&dir.join("rfgap.csv"), &numbered("x", n), art.rfgap.view())?;
        write_matrix(&dir.join("transition.csv"), &numbered("x", n), art.transition.view())?;
        write_matrix(&dir.join("dissimilarity.csv"), &numbered("x", n), art.dissimilarity.view())?;
    }
    log::info!("artifacts written to {}", dir.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    load(path).with_context(|| format!("loading model {}", path.display()))
}

fn check_width(model: &Model, found: usize) -> Result<()> {
    if found != model.n_features() {
        bail!(
            "dimension mismatch: model expects {} features, input has {found}",
            model.n_features()
        );
    }
    Ok(())
}

pub fn transform(a: &TransformArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (x, _) = read_features(&a.input, &a.label_column)?;
    let d = model.latent_dim();
    let z = if x.nrows() == 0 {
        Array2::zeros((0, d))
    } else {
        check_width(&model, x.ncols())?;
        model.transform_with(x.view(), a.extension)?
    };
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    let mut header = vec!["index".to_string()];
    header.extend(numbered("z", d));
    header.push("method".into());
    w.write_record(&header)?;
    for (i, row) in z.outer_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        rec.push(a.extension.name().into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (x_raw, labels) = read_features(&a.test, &a.label_column)?;
    let Some(labels) = labels else {
        bail!("{} has no label column {:?}", a.test.display(), a.label_column);
    };
    check_width(&model, x_raw.ncols())?;
    let y_test = encode_labels_with(&labels, &model.class_names)?;
    let x_test = model.normalizer.apply(x_raw.view())?;
    let methods: Vec<Extension> = if a.extensions.is_empty() {
        let mut m = vec![Extension::RfAe];
        m.extend(
            [Extension::LeastSquares, Extension::Nystrom, Extension::LinearReconstruction]
                .into_iter()
                .filter(|e| e.kind().is_some_and(|k| model.extension(k).is_some())),
        );
        m
    } else {
        a.extensions.clone()
    };
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(["method", "qnx_sia", "trust_sia", "spear_sia", "pearson_sia", "knn_acc"])?;
    for method in methods {
        let z_train = model.embed_training_with(method)?;
        let z_test = model.transform_with(x_raw.view(), method)?;
        let input = EvaluationInput {
            x_train: model.x_train.view(),
            y_train: &model.y_train,
            x_test: x_test.view(),
            y_test: &y_test,
            n_classes: model.class_names.len(),
            z_train: z_train.view(),
            z_test: z_test.view(),
        };
        let r = evaluate_embedding(&input, a.seed).with_context(|| format!("evaluating {}", method.name()))?;
        log::info!(
            "{}: k-NN accuracy {:.4}, baseline classifier accuracy {:.4}",
            method.name(),
            r.knn_accuracy,
            r.baseline_accuracy
        );
        w.write_record([
            method.name().to_string(),
            r.sia.qnx.to_string(),
            r.sia.trust.to_string(),
            r.sia.spearman.to_string(),
            r.sia.pearson.to_string(),
            r.knn_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let x = read_column(&a.embedding, "z1")?;
    let y = read_column(&a.embedding, "z2")?;
    let parse = |v: &Vec<String>, name: &str| -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .with_context(|| format!("row {i}: {name} is not a finite number: {s:?}"))
            })
            .collect()
    };
    let points: Vec<(f64, f64)> = parse(&x, "z1")?.into_iter().zip(parse(&y, "z2")?).collect();
    let raw_labels = match &a.labels {
        Some(p) => Some(read_column(p, &a.label_column)?),
        None => read_column(&a.embedding, &a.label_column).ok(),
    };
    let (labels, classes) = match raw_labels {
        Some(raw) => {
            if raw.len() != points.len() {
                bail!("row mismatch: {} embedding rows but {} labels", points.len(), raw.len());
            }
            encode_labels(&raw)
        }
        None => (vec![0; points.len()], vec!["all".to_string()]),
    };
    let svg = scatter_svg(&PlotData {
        points: &points,
        labels: &labels,
        classes: &classes,
        title: a.title.as_deref(),
    });
    fs::write(&a.out, svg).with_context(|| format!("cannot write {}", a.out.display()))?;
    Ok(())
}
