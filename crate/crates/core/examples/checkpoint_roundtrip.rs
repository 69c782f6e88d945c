//! Saves a PCT model to the binary checkpoint format and checks inference is bit-identical.

use vrfam::models::{Checkpoint, Model, ModelKind, ModelSpec, TrainedOn};
use vrfam::tensor::Tensor;

fn main() -> vrfam::Result<()> {
    let spec = ModelSpec::new(ModelKind::Pct, 50, 3);
    let model = Model::build(&spec, 42)?;
    println!("{} parameter tensors, {} attention blocks", model.params().len(), model.attention_blocks());

    let trained_on = TrainedOn { passcode: "2648".into(), window_size: 50, split_seed: 0 };
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("pct.bin");
    Checkpoint::from_model(&model, trained_on).save(&path)?;
    let restored = Checkpoint::load(&path)?;
    println!("checkpoint v{} trained on {:?}, {} bytes", restored.format_version, restored.trained_on, std::fs::metadata(&path).unwrap().len());

    let x = Tensor::new(vec![2, 50, 3], (0..300).map(|i| (i as f32 * 0.37).sin()).collect())?;
    let a = model.predict(x.clone())?;
    let b = restored.to_model()?.predict(x)?;
    assert_eq!(a.data(), b.data());
    println!("familiar probabilities {:?} reproduced exactly", [a.at(&[0, 1]), a.at(&[1, 1])]);
    Ok(())
}
