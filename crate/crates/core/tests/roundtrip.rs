use mdl_select::codes::MicScheme;
use mdl_select::dataio::{format_model, format_prior, load_model, load_prior, save_model, save_prior};
use mdl_select::mic::{run_mic, MicSearchConfig};
use mdl_select::replay::recompute_tdl;
use mdl_select::synth::{generate, generate_transfer, ScenarioKind, ScenarioSpec, TransferSpec};
use mdl_select::tpc::{run_tpc, run_tpc_forward_backward, TpcConfig};
use mdl_select::transfer::{build_prior, run_transfer_tpc, PriorOptions};
use mdl_select::TransferSetting;

#[test]
fn partial_mic_model_reloads_and_replays() {
    let (data, _) = generate(&ScenarioSpec::new(ScenarioKind::Full, 0)).unwrap();
    let model = run_mic(&data, &MicSearchConfig::new(MicScheme::Partial)).unwrap();
    assert!(!model.events.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&path, &model).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let replayed = recompute_tdl(&data, &back, None).unwrap();
    assert!((replayed - back.total_tdl).abs() < 1e-6, "{replayed} vs {}", back.total_tdl);
    assert_eq!(format_model(&back).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn every_multitask_scheme_replays() {
    let spec = ScenarioSpec {
        m: 300,
        ..ScenarioSpec::new(ScenarioKind::Partial, 2)
    };
    let (data, _) = generate(&spec).unwrap();
    for scheme in [MicScheme::Partial, MicScheme::Full, MicScheme::Ric] {
        let model = run_mic(&data, &MicSearchConfig::new(scheme)).unwrap();
        let text = format_model(&model).unwrap();
        let back = mdl_select::dataio::parse_model(&text, "mem").unwrap();
        assert_eq!(format_model(&back).unwrap(), text);
        let replayed = recompute_tdl(&data, &back, None).unwrap();
        assert!((replayed - model.total_tdl).abs() < 1e-6, "{scheme:?}");
    }
}

#[test]
fn transfer_model_and_prior_round_trip() {
    let inst = generate_transfer(&TransferSpec::new(9)).unwrap();
    let models: Vec<_> = inst
        .train
        .iter()
        .map(|d| run_tpc(d, &TpcConfig::default()).unwrap())
        .collect();
    let classes = inst.test.class_map.as_ref().unwrap();
    let prior = build_prior(&models, &inst.test.feature_names, classes, &PriorOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let prior_path = dir.path().join("prior.txt");
    save_prior(&prior_path, &prior).unwrap();
    let prior_back = load_prior(&prior_path).unwrap();
    assert_eq!(prior_back, prior);
    assert_eq!(format_prior(&prior_back).unwrap(), std::fs::read_to_string(&prior_path).unwrap());

    for setting in [TransferSetting::ClassAndFeature, TransferSetting::FeatureOnly] {
        let model = run_transfer_tpc(&inst.test, &prior_back, setting, &TpcConfig::default()).unwrap();
        let path = dir.path().join("transfer.txt");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.setting, Some(setting));
        let replayed = recompute_tdl(&inst.test, &back, Some(&prior_back)).unwrap();
        assert!((replayed - model.total_tdl).abs() < 1e-6);
    }
}

#[test]
fn forward_backward_model_with_removals_round_trips() {
    let inst = generate_transfer(&TransferSpec::new(4)).unwrap();
    let data = &inst.train[0];
    let config = TpcConfig {
        extra_steps: 4,
        ..TpcConfig::default()
    };
    let model = run_tpc_forward_backward(data, &config).unwrap();
    let text = format_model(&model).unwrap();
    let back = mdl_select::dataio::parse_model(&text, "mem").unwrap();
    assert_eq!(back, model);
    let replayed = recompute_tdl(data, &back, None).unwrap();
    assert!((replayed - model.total_tdl).abs() < 1e-6);
}
