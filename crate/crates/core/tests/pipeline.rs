use compsnn::demographics::DemographicVector;
use compsnn::density::DensityGrid;
use compsnn::experiment::{evaluate, prepare, run_benchmark, train, ExperimentConfig, PreparedData, TrainConfig};
use compsnn::explain::{export_activation_map, render_svg, ActivationKind, ActivationMap, ActivationPoint, MapStyle};
use compsnn::features::RawTrajectory;
use compsnn::graph::Spectrum;
use compsnn::model::{ModelKind, ModelParams};
use compsnn::synth::{generate_synthetic_dataset, SyntheticWorld};

fn small(seed: u64, n: usize) -> (PreparedData, ExperimentConfig) {
    let recs = generate_synthetic_dataset(seed, n, &SyntheticWorld::default()).unwrap();
    let trajs: Vec<RawTrajectory> = recs.iter().map(|r| r.trajectory.clone()).collect();
    let demos: Vec<DemographicVector> = recs.iter().map(|r| r.demographics).collect();
    let cfg = ExperimentConfig {
        seed,
        n_traj: n,
        grid_target: 40,
        epochs: 4,
        ..ExperimentConfig::default()
    };
    (prepare(&trajs, &demos, &cfg).unwrap(), cfg)
}

#[test]
fn prepared_inputs_have_model_shapes() {
    let (data, _) = small(11, 20);
    let n = data.node_count();
    assert_eq!(data.train.len() + data.val.len(), 20);
    assert_eq!(data.val.len(), 4);
    assert!(data.graph.is_connected());
    assert_eq!(data.spectrum.len(), n);
    for ex in data.train.iter().chain(&data.val) {
        assert_eq!(ex.input.node_signal.len(), n * 8);
        assert_eq!(ex.input.visits.len(), n);
        assert_eq!(ex.input.series.shape()[0], 10);
        assert!(ex.target.iter().all(|u| (0.0..=1.0).contains(u)));
    }
    assert!(data.epsilon.iter().all(|&e| e >= 1e-3));
}

#[test]
fn training_is_reproducible_and_monotone_in_best_epoch() {
    let (data, cfg) = small(12, 16);
    let mc = data.model_config(&cfg);
    let tc = TrainConfig::from(&cfg);
    for kind in ModelKind::ALL {
        let a = train(kind, &data.train, &data.val, &data.spectrum, &mc, &tc).unwrap();
        let b = train(kind, &data.train, &data.val, &data.spectrum, &mc, &tc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(
            a.params.to_checkpoint_json(a.seed, a.best_epoch),
            b.params.to_checkpoint_json(b.seed, b.best_epoch)
        );
        assert_eq!(a.history.val_loss.len(), cfg.epochs + 1);
        assert!(a.history.val_loss[a.best_epoch] <= a.history.val_loss[0]);
    }
}

#[test]
fn checkpoint_reload_reproduces_validation_losses() {
    let (data, cfg) = small(13, 16);
    let o = train(
        ModelKind::CompSnn,
        &data.train,
        &data.val,
        &data.spectrum,
        &data.model_config(&cfg),
        &TrainConfig::from(&cfg),
    )
    .unwrap();
    let text = o.params.to_checkpoint_json(o.seed, o.best_epoch);
    let (back, seed, epoch) = ModelParams::from_checkpoint_json(&text).unwrap();
    assert_eq!((seed, epoch), (o.seed, o.best_epoch));
    assert_eq!(back.config, o.params.config);
    let spectrum = Spectrum::decode(&data.spectrum.encode()).unwrap();
    assert_eq!(
        evaluate(&back, &data.val, &spectrum).unwrap(),
        evaluate(&o.params, &data.val, &data.spectrum).unwrap()
    );
}

#[test]
fn benchmark_report_is_consistent() {
    let (data, cfg) = small(14, 16);
    let (outcomes, report) = run_benchmark(&data, &cfg, &ModelKind::ALL).unwrap();
    assert_eq!(outcomes.len(), 4);
    for (o, m) in outcomes.iter().zip(&report.models) {
        assert_eq!(o.kind.to_string(), m.model);
        assert!((m.mean - o.history.val_loss[o.best_epoch]).abs() < 1e-12);
        assert!(m.ci_low <= m.mean && m.mean <= m.ci_high);
        assert_eq!(m.histogram.iter().sum::<usize>(), data.val.len());
    }
    assert_eq!(report.summary_csv().lines().count(), 5);
}

#[test]
fn explain_values_match_the_cnn_on_real_inputs() {
    let (data, cfg) = small(15, 12);
    let params = ModelParams::new(ModelKind::CompSnn, data.model_config(&cfg), 3).unwrap();
    let rep = &data.representations[0];
    let input = data.scaler.apply(rep).unwrap();
    let acts = params.cnn.as_ref().unwrap().activations(&input.series).unwrap();
    let map = export_activation_map(&params, &input, &rep.features, ActivationKind::AttentionTimesFeature(5)).unwrap();
    assert_eq!(map.points.len(), rep.trajectory.len());
    for (t, p) in map.points.iter().enumerate() {
        assert_eq!(p.value, acts.attention[t] * acts.feature(5)[t]);
        assert_eq!((p.x, p.y), (rep.trajectory.samples[t].x, rep.trajectory.samples[t].y));
    }
    let svg = render_svg(&map, &data.grid, &MapStyle::default()).unwrap();
    assert_eq!(svg, render_svg(&map, &data.grid, &MapStyle::default()).unwrap());
}

fn grid() -> DensityGrid {
    serde_json::from_str(
        r#"{"bounds":{"x_min":0.0,"x_max":20.0,"y_min":0.0,"y_max":10.0},"cell_size":2.0,
            "counts":{"rows":5,"cols":10,"data":[1,1,1,1,1,1,1,1,1,1,0,0,0,0,0,0,0,0,0,0,
            1,1,1,1,1,1,1,1,1,1,0,0,0,0,0,0,0,0,0,0,1,1,1,1,1,1,1,1,1,1]}}"#,
    )
    .unwrap()
}

#[test]
fn hundred_point_map_is_conformant_svg() {
    let points = (0..100)
        .map(|i| ActivationPoint {
            x: (i % 20) as f64 + 0.5,
            y: (i / 20) as f64 * 2.0 + 0.3,
            value: i as f64 / 99.0,
        })
        .collect();
    let map = ActivationMap {
        kind: ActivationKind::Attention,
        points,
    };
    let svg = render_svg(&map, &grid(), &MapStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.tag_name().namespace(), Some("http://www.w3.org/2000/svg"));
    let circles: Vec<_> = root.descendants().filter(|n| n.has_tag_name("circle")).collect();
    assert_eq!(circles.len(), 100);
    let r = |n: &roxmltree::Node| n.attribute("r").unwrap().parse::<f64>().unwrap();
    assert_eq!(r(&circles[0]), 0.5);
    assert_eq!(r(&circles[99]), 4.0);
    for c in &circles {
        let o: f64 = c.attribute("fill-opacity").unwrap().parse().unwrap();
        assert!((0.15..=1.0).contains(&o));
    }
}
