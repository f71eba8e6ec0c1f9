use serde::{Deserialize, Serialize};

use super::ClientState;
use crate::data::{add_cosine_noise, add_gaussian_noise, add_sap_noise, flip_labels};
use crate::error::{Error, Result};
use crate::vaguegan::{
    augment_poisongan, generate_poisoned, train_unsupervised, train_vaguegan, CodeSpec, GanConfig,
};

pub const FLIP_SOURCE: usize = 6;
pub const FLIP_TARGET: usize = 0;
pub const GAUSSIAN_LIGHT_VAR: f64 = 0.1;
pub const GAUSSIAN_HEAVY_VAR: f64 = 0.3;
pub const SAP_PIXEL_FRAC: f64 = 0.3;
pub const SAP_SALT_RATIO: f64 = 0.5;
pub const COSINE_AMPLITUDE: f64 = 2.0;
pub const COSINE_FREQUENCY: f64 = 0.5;
pub const AUGMENT_FRAC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTag {
    None,
    LabelFlip,
    LabelFlipAugment,
    GaussianLight,
    GaussianHeavy,
    SapNoise,
    CosineNoise,
    VagueGan,
    VagueGanUnsupervised,
}

impl AttackTag {
    pub const ALL: [AttackTag; 9] = [
        AttackTag::None,
        AttackTag::LabelFlip,
        AttackTag::LabelFlipAugment,
        AttackTag::GaussianLight,
        AttackTag::GaussianHeavy,
        AttackTag::SapNoise,
        AttackTag::CosineNoise,
        AttackTag::VagueGan,
        AttackTag::VagueGanUnsupervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackTag::None => "none",
            AttackTag::LabelFlip => "label_flip",
            AttackTag::LabelFlipAugment => "label_flip_augment",
            AttackTag::GaussianLight => "gaussian_light",
            AttackTag::GaussianHeavy => "gaussian_heavy",
            AttackTag::SapNoise => "sap_noise",
            AttackTag::CosineNoise => "cosine_noise",
            AttackTag::VagueGan => "vague_gan",
            AttackTag::VagueGanUnsupervised => "vague_gan_unsupervised",
        }
    }

    pub fn needs_gan(self) -> bool {
        matches!(
            self,
            AttackTag::LabelFlipAugment | AttackTag::VagueGan | AttackTag::VagueGanUnsupervised
        )
    }
}

impl std::fmt::Display for AttackTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unsupervised GAN settings: the configured codes, or the default layout.
pub(crate) fn unsupervised_cfg(cfg: &GanConfig) -> GanConfig {
    let mut cfg = cfg.clone();
    cfg.code.get_or_insert_with(CodeSpec::default);
    cfg
}

/// Poison a malicious client's data once, before federated training. `seed`
/// drives every random choice of the attack (noise draws, GAN training).
pub fn apply_attack(client: &ClientState, gan_cfg: Option<&GanConfig>, seed: u64) -> Result<ClientState> {
    if !client.is_malicious || client.attack == AttackTag::None {
        return Err(Error::precondition(format!(
            "client {} is benign and cannot be poisoned",
            client.id
        )));
    }
    let ds = &client.dataset;
    let gan = || {
        gan_cfg.cloned().map(|mut c| {
            c.seed = seed;
            c
        })
        .ok_or_else(|| Error::precondition(format!("attack {} needs a GAN config", client.attack)))
    };
    let poisoned = match client.attack {
        AttackTag::None => unreachable!("rejected above"),
        AttackTag::LabelFlip => flip_labels(ds, FLIP_SOURCE, FLIP_TARGET)?,
        AttackTag::LabelFlipAugment => {
            let augmented = augment_poisongan(ds, AUGMENT_FRAC, &gan()?, seed)?;
            flip_labels(&augmented, FLIP_SOURCE, FLIP_TARGET)?
        }
        AttackTag::GaussianLight => add_gaussian_noise(ds, 0.0, GAUSSIAN_LIGHT_VAR, seed)?,
        AttackTag::GaussianHeavy => add_gaussian_noise(ds, 0.0, GAUSSIAN_HEAVY_VAR, seed)?,
        AttackTag::SapNoise => add_sap_noise(ds, SAP_PIXEL_FRAC, SAP_SALT_RATIO, seed)?,
        AttackTag::CosineNoise => add_cosine_noise(ds, COSINE_AMPLITUDE, COSINE_FREQUENCY),
        AttackTag::VagueGan => {
            let cfg = gan()?;
            cfg.validate(false)?;
            generate_poisoned(&train_vaguegan(ds, &cfg)?, ds)?
        }
        AttackTag::VagueGanUnsupervised => {
            let cfg = unsupervised_cfg(&gan()?);
            cfg.validate(false)?;
            generate_poisoned(&train_unsupervised(ds, &cfg)?, ds)?
        }
    };
    Ok(ClientState {
        dataset: poisoned,
        ..client.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn client(attack: AttackTag) -> ClientState {
        let ds = gen_synthetic(10, 16, 40, 1.0, 2).unwrap();
        ClientState::malicious(3, ds, attack).unwrap()
    }

    #[test]
    fn label_flip_matches_transform() {
        let c = client(AttackTag::LabelFlip);
        let out = apply_attack(&c, None, 1).unwrap();
        assert_eq!(out.dataset, flip_labels(&c.dataset, 6, 0).unwrap());
        assert!(out.is_malicious);
    }

    #[test]
    fn benign_clients_are_rejected() {
        let ds = gen_synthetic(10, 16, 40, 1.0, 2).unwrap();
        assert!(apply_attack(&ClientState::benign(0, ds.clone()), None, 1).is_err());
        assert!(ClientState::malicious(0, ds, AttackTag::None).is_err());
    }

    #[test]
    fn gan_attacks_need_a_config_and_keep_size() {
        let c = client(AttackTag::VagueGan);
        assert!(apply_attack(&c, None, 1).is_err());
        let cfg = GanConfig {
            epochs: 2,
            noise_dim: 4,
            gen_hidden: vec![6],
            disc_hidden: vec![6, 6],
            ..GanConfig::default()
        };
        let out = apply_attack(&c, Some(&cfg), 1).unwrap();
        assert_eq!(out.dataset.len(), c.dataset.len());
        assert_eq!(out.dataset.labels, c.dataset.labels);
        let aug = apply_attack(&client(AttackTag::LabelFlipAugment), Some(&cfg), 1).unwrap();
        assert_eq!(aug.dataset.len(), 44);
        assert!(!aug.dataset.labels.contains(&6));
        let un = apply_attack(&client(AttackTag::VagueGanUnsupervised), Some(&cfg), 1).unwrap();
        assert_eq!(un.dataset.labels, c.dataset.labels);
    }

    #[test]
    fn every_noise_attack_keeps_size() {
        for tag in [
            AttackTag::GaussianLight,
            AttackTag::GaussianHeavy,
            AttackTag::SapNoise,
            AttackTag::CosineNoise,
        ] {
            let c = client(tag);
            let out = apply_attack(&c, None, 4).unwrap();
            assert_eq!(out.dataset.len(), c.dataset.len());
            assert_ne!(out.dataset.features, c.dataset.features, "{tag}");
        }
    }
}
