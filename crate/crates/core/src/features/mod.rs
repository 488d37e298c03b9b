//! FOA audio, spectral features and synthetic scenes.

pub mod audio;
pub mod corpus;
pub mod extract;
pub mod spectral;
pub mod synth;

pub use audio::{AudioClip, DEFAULT_SAMPLE_RATE, FOA_CHANNELS};
pub use corpus::{extract_corpus, scene_seeds, synth_scenes};
pub use extract::{extract_features, intensity_direction, FeatureFile, FeatureStats, FeatureTensor, FEATURE_CHANNELS};
pub use spectral::{intensity_vectors, log_mel, stft, MelFilterbank, SpectralConfig, Spectrogram};
pub use synth::{
    class_bands, direction_of, read_annotations, random_scene, synth_foa_scene, unit_vector, write_annotations,
    EventAnnotation, EventSpec, RandomSceneConfig, SceneSpec, LABEL_HOP_S, MAX_POLYPHONY,
};
