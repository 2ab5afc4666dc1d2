//! Model persistence: one schema-versioned JSON document per checkpoint.
//!
//! Floating-point values are written in shortest-round-trip decimal form,
//! so `load(save(model))` reproduces every parameter bit for bit, and the
//! serialization itself is deterministic (struct fields in declaration
//! order, maps in key order). Byte-identical checkpoints across runs are
//! therefore a faithful witness of a deterministic training run.

use std::fs;
use std::path::Path;

use super::{TrainError, TrainedModel};

/// Version tag written into every checkpoint.
pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Serializes a model to pretty-printed JSON bytes (trailing newline
/// included). The output is a pure function of the model.
pub fn model_to_json_bytes(model: &TrainedModel) -> Result<Vec<u8>, TrainError> {
    let mut bytes =
        serde_json::to_vec_pretty(model).map_err(|e| TrainError::MalformedCheckpoint {
            detail: format!("serialization failed: {e}"),
        })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Validates and writes a checkpoint file.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), TrainError> {
    model.validate()?;
    fs::write(path, model_to_json_bytes(model)?)?;
    Ok(())
}

/// Reads, parses, and validates a checkpoint file.
pub fn load_model(path: &Path) -> Result<TrainedModel, TrainError> {
    let bytes = fs::read(path)?;
    let model: TrainedModel =
        serde_json::from_slice(&bytes).map_err(|e| TrainError::MalformedCheckpoint {
            detail: e.to_string(),
        })?;
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ConditionLabel, EpisodeSplit, FeatureVector, LabeledSample};
    use crate::training::{fit, predict, TrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_split(seed: u64) -> EpisodeSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut id = 0;
        let mut sample = |class: u8, rng: &mut ChaCha8Rng| {
            let mut arr = [
                40.0, 40.0, 40.0, 1.1, 1.3, 12.0, 12.5, 30.0, 45.0, 1.0, 1.0, 25.0, 60.0, 6.0,
                6.0, 6.0, 5.0, 3.0, 3.0, 2.5, 4.0, 0.6, 1500.0, 0.55,
            ];
            arr[7] += class as f64 * 10.0 + rng.random::<f64>();
            arr[12] += class as f64 * 8.0 + rng.random::<f64>();
            id += 1;
            LabeledSample {
                id,
                x: FeatureVector::from_array(arr),
                y: ConditionLabel::from_class(class as i64).unwrap(),
            }
        };
        let mut support = Vec::new();
        let mut query = Vec::new();
        let mut test = Vec::new();
        for class in 1..=3u8 {
            for _ in 0..3 {
                support.push(sample(class, &mut rng));
                query.push(sample(class, &mut rng));
            }
            test.push(sample(class, &mut rng));
        }
        let unlabeled = (0..9)
            .map(|i| sample((i % 3) as u8 + 1, &mut rng).x)
            .collect();
        EpisodeSplit {
            support,
            query,
            unlabeled,
            test,
        }
    }

    fn trained() -> crate::training::TrainedModel {
        let config = TrainConfig {
            epochs: 8,
            ..TrainConfig::default()
        };
        fit(&tiny_split(5), &config).unwrap()
    }

    #[test]
    fn round_trip_preserves_every_prediction() {
        let model = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let mut arr = [0.0; 24];
            for a in arr.iter_mut() {
                *a = rng.random::<f64>() * 100.0;
            }
            let x = FeatureVector::from_array(arr);
            let (la, pa) = predict(&model, &x).unwrap();
            let (lb, pb) = predict(&loaded, &x).unwrap();
            assert_eq!(la, lb);
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn missing_field_is_a_malformed_checkpoint() {
        let model = trained();
        let bytes = model_to_json_bytes(&model).unwrap();
        let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        value.as_object_mut().unwrap().remove("radius_net");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, serde_json::to_vec(&value).unwrap()).unwrap();
        match load_model(&path) {
            Err(e @ crate::training::TrainError::MalformedCheckpoint { .. }) => {
                assert!(e.to_string().contains("malformed checkpoint"));
            }
            other => panic!("expected malformed checkpoint, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut model = trained();
        model.schema = 2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.json");
        // save_model validates, so write the bytes directly.
        std::fs::write(&path, model_to_json_bytes(&model).unwrap()).unwrap();
        match load_model(&path) {
            Err(crate::training::TrainError::MalformedCheckpoint { detail }) => {
                assert!(detail.contains("schema"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let model = trained();
        let bytes = model_to_json_bytes(&model).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truncated.json");
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(crate::training::TrainError::MalformedCheckpoint { .. })
        ));
    }

    #[test]
    fn serialization_is_deterministic() {
        let a = trained();
        let b = trained();
        assert_eq!(
            model_to_json_bytes(&a).unwrap(),
            model_to_json_bytes(&b).unwrap()
        );
    }
}
