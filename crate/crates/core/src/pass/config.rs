//! Training hyperparameters, shipped profiles, and the flat key/value config file.
//!
//! Config files are TOML with flat keys named after the hyperparameters:
//!
//! ```toml
//! lambda = 10
//! K = 3
//! T_fc = 10000
//! A_star = 0.95
//! alpha1 = 1e-2
//! ```
//!
//! MultiPASS files use the paired keys `lambda_a`, `lambda_b`, `K_a`, `K_b`,
//! `T_atrain_a`, `T_atrain_b`, `A_star_1`, `A_star_2`, `attr_a`, `attr_b`.

use serde::{Deserialize, Serialize};

use super::{PassError, Schedule};

/// One adversarial ensemble and the attribute it suppresses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub attribute: String,
    /// Weight of this ensemble's debiasing loss in `L_br`.
    pub lambda: f64,
    /// Ensemble size.
    pub k: usize,
    /// Stage-2 iterations.
    pub t_atrain: usize,
    /// Stage-4 validation accuracy that stops member training.
    pub a_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassConfig {
    /// One entry for PASS, two for MultiPASS.
    pub adversaries: Vec<AdversaryConfig>,
    /// Width of the transformed descriptor.
    pub out_dim: usize,
    /// Hidden widths of every discriminator.
    pub disc_hidden: [usize; 2],
    pub t_fc: usize,
    pub t_deb: usize,
    pub t_plat: usize,
    pub t_ep: usize,
    pub n_ep: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
    /// Fraction of training rows held out (stratified by the first attribute) for the A* check.
    pub val_fraction: f64,
    /// Stage-4 accuracy is measured every this many iterations.
    pub acc_check_every: usize,
    pub seed: u64,
}

/// Names accepted by [`PassConfig::profile`].
pub const PROFILES: &[&str] = &[
    "desk",
    "desk-multipass",
    "arcface-pass-g",
    "arcface-pass-s",
    "arcface-multipass",
];

impl PassConfig {
    /// Full-scale gender suppression on 512-d ArcFace descriptors.
    pub fn arcface_pass_g() -> Self {
        Self {
            adversaries: vec![AdversaryConfig {
                attribute: "gender".into(),
                lambda: 10.0,
                k: 3,
                t_atrain: 30_000,
                a_star: 0.95,
            }],
            out_dim: 256,
            disc_hidden: [128, 64],
            t_fc: 10_000,
            t_deb: 1_200,
            t_plat: 2_000,
            t_ep: 40,
            n_ep: 120,
            alpha1: 1e-2,
            alpha2: 1e-3,
            alpha3: 1e-4,
            batch_size: 400,
            schedule: Schedule::Oat,
            val_fraction: 0.1,
            acc_check_every: 50,
            seed: 0,
        }
    }

    /// Same scale, suppressing skintone with two members.
    pub fn arcface_pass_s() -> Self {
        let mut c = Self::arcface_pass_g();
        c.adversaries[0] = AdversaryConfig {
            attribute: "skintone".into(),
            lambda: 10.0,
            k: 2,
            t_atrain: 30_000,
            a_star: 0.95,
        };
        c
    }

    /// Same scale, gender (a) and race (b) together.
    pub fn arcface_multipass() -> Self {
        let mut c = Self::arcface_pass_g();
        c.adversaries = vec![
            AdversaryConfig {
                attribute: "gender".into(),
                lambda: 10.0,
                k: 3,
                t_atrain: 30_000,
                a_star: 0.95,
            },
            AdversaryConfig {
                attribute: "race".into(),
                lambda: 10.0,
                k: 2,
                t_atrain: 30_000,
                a_star: 0.95,
            },
        ];
        c
    }

    /// Small-scale profile for laptops and tests: 64-wide descriptors, batch 64,
    /// iteration counts cut down by roughly two orders of magnitude. Rates and
    /// the plateau budget were calibrated on the synthetic generator.
    pub fn desk() -> Self {
        Self {
            adversaries: vec![AdversaryConfig {
                attribute: "gender".into(),
                lambda: 10.0,
                k: 3,
                t_atrain: 300,
                a_star: 0.95,
            }],
            out_dim: 64,
            disc_hidden: [128, 64],
            t_fc: 400,
            t_deb: 12,
            t_plat: 100,
            t_ep: 40,
            n_ep: 60,
            alpha1: 1e-1,
            alpha2: 5e-2,
            alpha3: 1e-2,
            batch_size: 64,
            schedule: Schedule::Oat,
            val_fraction: 0.1,
            acc_check_every: 10,
            seed: 0,
        }
    }

    pub fn desk_multipass() -> Self {
        let mut c = Self::desk();
        let mut b = c.adversaries[0].clone();
        b.attribute = "skintone".into();
        b.k = 2;
        c.adversaries.push(b);
        c
    }

    pub fn profile(name: &str) -> Result<Self, PassError> {
        match name {
            "desk" => Ok(Self::desk()),
            "desk-multipass" => Ok(Self::desk_multipass()),
            "arcface-pass-g" => Ok(Self::arcface_pass_g()),
            "arcface-pass-s" => Ok(Self::arcface_pass_s()),
            "arcface-multipass" => Ok(Self::arcface_multipass()),
            other => Err(PassError::config(
                "profile",
                format!("unknown profile {other:?}; known: {}", PROFILES.join(", ")),
            )),
        }
    }

    pub fn validate(&self) -> Result<(), PassError> {
        fn positive(field: &str, v: usize) -> Result<(), PassError> {
            if v == 0 {
                return Err(PassError::config(field, "must be >= 1"));
            }
            Ok(())
        }
        fn rate(field: &str, v: f64) -> Result<(), PassError> {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PassError::config(field, format!("must be > 0, got {v}")));
            }
            Ok(())
        }
        if self.adversaries.is_empty() {
            return Err(PassError::config("attr", "at least one adversary is required"));
        }
        let paired = self.adversaries.len() > 1;
        for (i, a) in self.adversaries.iter().enumerate() {
            let name = |base: &str| field_name(base, i, paired);
            if a.attribute.is_empty() {
                return Err(PassError::config(&name("attr"), "must be non-empty"));
            }
            if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
                return Err(PassError::config(
                    &name("lambda"),
                    format!("must be >= 0, got {}", a.lambda),
                ));
            }
            positive(&name("K"), a.k)?;
            positive(&name("T_atrain"), a.t_atrain)?;
            if !(a.a_star > 0.0 && a.a_star <= 1.0) {
                return Err(PassError::config(
                    &name("A_star"),
                    format!("must lie in (0, 1], got {}", a.a_star),
                ));
            }
        }
        if paired && self.adversaries[0].attribute == self.adversaries[1].attribute {
            return Err(PassError::config("attr_b", "must differ from attr_a"));
        }
        positive("out_dim", self.out_dim)?;
        positive("disc_hidden", self.disc_hidden[0])?;
        positive("disc_hidden", self.disc_hidden[1])?;
        positive("T_fc", self.t_fc)?;
        positive("T_deb", self.t_deb)?;
        positive("T_plat", self.t_plat)?;
        positive("T_ep", self.t_ep)?;
        positive("batch_size", self.batch_size)?;
        positive("acc_check_every", self.acc_check_every)?;
        rate("alpha1", self.alpha1)?;
        rate("alpha2", self.alpha2)?;
        rate("alpha3", self.alpha3)?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(PassError::config(
                "val_fraction",
                format!("must lie in (0, 1), got {}", self.val_fraction),
            ));
        }
        Ok(())
    }

    /// Applies a flat TOML config on top of `self`.
    pub fn apply_toml(&mut self, text: &str) -> Result<(), PassError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            PassError::config("config", e.message().replace('\n', " "))
        })?;
        file.apply(self)?;
        self.validate()
    }

    /// Renders the flat key/value form read by [`PassConfig::apply_toml`].
    pub fn to_toml(&self) -> String {
        let mut file = ConfigFile {
            out_dim: Some(self.out_dim),
            disc_hidden: Some(self.disc_hidden),
            t_fc: Some(self.t_fc),
            t_deb: Some(self.t_deb),
            t_plat: Some(self.t_plat),
            t_ep: Some(self.t_ep),
            n_ep: Some(self.n_ep),
            alpha1: Some(self.alpha1),
            alpha2: Some(self.alpha2),
            alpha3: Some(self.alpha3),
            batch_size: Some(self.batch_size),
            schedule: Some(self.schedule),
            val_fraction: Some(self.val_fraction),
            acc_check_every: Some(self.acc_check_every),
            seed: Some(self.seed),
            ..ConfigFile::default()
        };
        match self.adversaries.as_slice() {
            [a] => {
                file.attr = Some(a.attribute.clone());
                file.lambda = Some(a.lambda);
                file.k = Some(a.k);
                file.t_atrain = Some(a.t_atrain);
                file.a_star = Some(a.a_star);
            }
            [a, b, ..] => {
                file.attr_a = Some(a.attribute.clone());
                file.attr_b = Some(b.attribute.clone());
                file.lambda_a = Some(a.lambda);
                file.lambda_b = Some(b.lambda);
                file.k_a = Some(a.k);
                file.k_b = Some(b.k);
                file.t_atrain_a = Some(a.t_atrain);
                file.t_atrain_b = Some(b.t_atrain);
                file.a_star_1 = Some(a.a_star);
                file.a_star_2 = Some(b.a_star);
            }
            [] => {}
        }
        toml::to_string(&file).expect("flat config always serializes")
    }
}

fn field_name(base: &str, index: usize, paired: bool) -> String {
    if !paired {
        return base.to_string();
    }
    match base {
        "A_star" => format!("A_star_{}", index + 1),
        _ => format!("{base}_{}", if index == 0 { 'a' } else { 'b' }),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    attr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(rename = "T_atrain", skip_serializing_if = "Option::is_none")]
    t_atrain: Option<usize>,
    #[serde(rename = "A_star", skip_serializing_if = "Option::is_none")]
    a_star: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    attr_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attr_b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_b: Option<f64>,
    #[serde(rename = "K_a", skip_serializing_if = "Option::is_none")]
    k_a: Option<usize>,
    #[serde(rename = "K_b", skip_serializing_if = "Option::is_none")]
    k_b: Option<usize>,
    #[serde(rename = "T_atrain_a", skip_serializing_if = "Option::is_none")]
    t_atrain_a: Option<usize>,
    #[serde(rename = "T_atrain_b", skip_serializing_if = "Option::is_none")]
    t_atrain_b: Option<usize>,
    #[serde(rename = "A_star_1", skip_serializing_if = "Option::is_none")]
    a_star_1: Option<f64>,
    #[serde(rename = "A_star_2", skip_serializing_if = "Option::is_none")]
    a_star_2: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    out_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    disc_hidden: Option<[usize; 2]>,
    #[serde(rename = "T_fc", skip_serializing_if = "Option::is_none")]
    t_fc: Option<usize>,
    #[serde(rename = "T_deb", skip_serializing_if = "Option::is_none")]
    t_deb: Option<usize>,
    #[serde(rename = "T_plat", skip_serializing_if = "Option::is_none")]
    t_plat: Option<usize>,
    #[serde(rename = "T_ep", skip_serializing_if = "Option::is_none")]
    t_ep: Option<usize>,
    #[serde(rename = "N_ep", skip_serializing_if = "Option::is_none")]
    n_ep: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<Schedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    val_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_check_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigFile {
    fn apply(self, c: &mut PassConfig) -> Result<(), PassError> {
        let single = [
            self.attr.is_some(),
            self.lambda.is_some(),
            self.k.is_some(),
            self.t_atrain.is_some(),
            self.a_star.is_some(),
        ];
        let paired = [
            self.attr_a.is_some() || self.attr_b.is_some(),
            self.lambda_a.is_some() || self.lambda_b.is_some(),
            self.k_a.is_some() || self.k_b.is_some(),
            self.t_atrain_a.is_some() || self.t_atrain_b.is_some(),
            self.a_star_1.is_some() || self.a_star_2.is_some(),
        ];
        if single.iter().any(|&s| s) {
            if c.adversaries.len() != 1 {
                return Err(PassError::config(
                    "lambda",
                    "single-attribute keys (attr, lambda, K, T_atrain, A_star) need a PASS profile; use the _a/_b keys for MultiPASS",
                ));
            }
            let a = &mut c.adversaries[0];
            set(&mut a.attribute, self.attr);
            set(&mut a.lambda, self.lambda);
            set(&mut a.k, self.k);
            set(&mut a.t_atrain, self.t_atrain);
            set(&mut a.a_star, self.a_star);
        }
        if paired.iter().any(|&s| s) {
            if c.adversaries.len() != 2 {
                return Err(PassError::config(
                    "lambda_a",
                    "paired keys (_a/_b, A_star_1/2) need a MultiPASS profile",
                ));
            }
            let (a, b) = c.adversaries.split_at_mut(1);
            let (a, b) = (&mut a[0], &mut b[0]);
            set(&mut a.attribute, self.attr_a);
            set(&mut b.attribute, self.attr_b);
            set(&mut a.lambda, self.lambda_a);
            set(&mut b.lambda, self.lambda_b);
            set(&mut a.k, self.k_a);
            set(&mut b.k, self.k_b);
            set(&mut a.t_atrain, self.t_atrain_a);
            set(&mut b.t_atrain, self.t_atrain_b);
            set(&mut a.a_star, self.a_star_1);
            set(&mut b.a_star, self.a_star_2);
        }
        set(&mut c.out_dim, self.out_dim);
        set(&mut c.disc_hidden, self.disc_hidden);
        set(&mut c.t_fc, self.t_fc);
        set(&mut c.t_deb, self.t_deb);
        set(&mut c.t_plat, self.t_plat);
        set(&mut c.t_ep, self.t_ep);
        set(&mut c.n_ep, self.n_ep);
        set(&mut c.alpha1, self.alpha1);
        set(&mut c.alpha2, self.alpha2);
        set(&mut c.alpha3, self.alpha3);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.schedule, self.schedule);
        set(&mut c.val_fraction, self.val_fraction);
        set(&mut c.acc_check_every, self.acc_check_every);
        set(&mut c.seed, self.seed);
        Ok(())
    }
}
