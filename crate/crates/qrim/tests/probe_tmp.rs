use qrim::cfar::CfarConfig;
use qrim::experiment::{build_patchset, evaluate_model, generate_split, score_raw_maps, DatasetConfig, Split};
use qrim::metrics::MatchConfig;
use qrim::nn::{fit, BatchNorm, Conv2d, ConvBlock, DenoiserModel, PatchSet, TrainConfig, Activation};
use qrim::quant::WeightScheme;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn model_bn1(seed: u64) -> DenoiserModel<f32> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let blocks = vec![
        ConvBlock::new(Conv2d::init(2, 16, &mut rng), Some(BatchNorm::new(16)), Activation::Relu, WeightScheme::None, 32),
        ConvBlock::new(Conv2d::init(16, 8, &mut rng), Some(BatchNorm::new(8)), Activation::Relu, WeightScheme::None, 32),
        ConvBlock::new(Conv2d::init(8, 2, &mut rng), None, Activation::Linear, WeightScheme::None, 32),
    ];
    DenoiserModel::from_blocks(blocks, None).unwrap()
}

#[test]
fn bn_everywhere_probe() {
    let mut d = DatasetConfig::default();
    d.seed = 7;
    d.scene.noise_std = 3.0;
    let train = generate_split(&d, Split::Train, 256).unwrap();
    let val = generate_split(&d, Split::Val, 64).unwrap();
    let test = generate_split(&d, Split::Test, 64).unwrap();
    let train_set: PatchSet<f32> = build_patchset(&train).unwrap();
    let val_set: PatchSet<f32> = build_patchset(&val).unwrap();
    let cfar = CfarConfig::from_pfa(8, 2, 1e-5, true).unwrap();
    let mc = MatchConfig::default();
    let intf_b = score_raw_maps(&test, true, &cfar, &mc).unwrap();
    eprintln!("interfered baseline {:.4}", intf_b.f1);
    for (lr, seed) in [(1e-3, 1u64), (3e-3, 1), (1e-2, 1)] {
        let mut model = model_bn1(900 + seed);
        let tc = TrainConfig { lr, batch: 8, max_epochs: 40, patience: 5, seed };
        let out = fit(&mut model, &train_set, &val_set, &tc).unwrap();
        let s = evaluate_model(&model, &test, &cfar, &mc).unwrap();
        eprintln!(
            "BN1 lr {lr:.0e}: {} ep, val {:.3e}, F1 {:.4} (p {:.3} r {:.3})",
            out.epochs, out.best_val_mse, s.f1, s.precision, s.recall
        );
    }
}
