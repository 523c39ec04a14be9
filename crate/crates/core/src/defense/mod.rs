//! Countermeasures against a trained adversary: adversarial training of
//! the victims, re-attack protocols against hardened victims, and a
//! recurrent detector over observable episode signals.

mod detect;
mod dual;

pub use detect::{
    auc, collect_detection_episodes, detection_curve, episode_score, label_shuffle_control, read_dataset, shuffle_labels, train_detector, write_dataset,
    CurvePoint as DetectionPoint, DetectionEpisode, Detector, DetectorConfig, Signal,
};
pub use dual::{dual_adversarial_train, rerun_attack_protocols, DualTrainingConfig, Protocol, ProtocolRow};
