//! Feature-modifiability masks and the post-processing applied to generator output.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nslkdd::{
    AttackCategory, EncodedVector, FeatureKind, FeatureSchema, FeatureSet, FeatureVector,
    NUM_FEATURES,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("normal traffic has no functional-feature mask")]
    NoMaskForNormal,
    #[error("no ablation feature list is defined for {0}")]
    NoAblationDefined(AttackCategory),
    #[error("mask is for {mask}, record is {record}")]
    CategoryMismatch {
        mask: AttackCategory,
        record: AttackCategory,
    },
    #[error("feature `{0}` is not part of the schema")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskSetting {
    FunctionalOnly,
    Ablation,
}

impl MaskSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskSetting::FunctionalOnly => "functional_only",
            MaskSetting::Ablation => "ablation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "functional_only" | "functional" => Some(MaskSetting::FunctionalOnly),
            "ablation" => Some(MaskSetting::Ablation),
            _ => None,
        }
    }
}

impl fmt::Display for MaskSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `modifiable[i]` is true when the generator may change feature `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    pub modifiable: [bool; NUM_FEATURES],
    pub category: AttackCategory,
    pub setting: MaskSetting,
}

/// Feature sets that carry an attack's function and must stay untouched.
pub fn functional_sets(category: AttackCategory) -> Result<&'static [FeatureSet], ConstraintError> {
    use FeatureSet::*;
    match category {
        AttackCategory::Normal => Err(ConstraintError::NoMaskForNormal),
        AttackCategory::Probe => Ok(&[Intrinsic, TimeBased, HostBased]),
        AttackCategory::DoS => Ok(&[Intrinsic, TimeBased]),
        AttackCategory::U2R | AttackCategory::R2L => Ok(&[Intrinsic, Content]),
    }
}

const DOS_EXTRA_FROZEN: [&str; 12] = [
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "num_root",
    "num_file_creations",
    "is_guest_login",
    "dst_host_count",
    "dst_host_rerror_rate",
    "dst_host_serror_rate",
    "dst_host_same_srv_rate",
    "dst_host_same_src_port_rate",
];

const U2R_R2L_EXTRA_FROZEN: [&str; 9] = [
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_srv_serror_rate",
    "dst_host_srv_count",
    "dst_host_diff_srv_rate",
    "dst_host_srv_rerror_rate",
];

/// Extra nonfunctional features frozen in the ablation setting.
pub fn ablation_features(
    category: AttackCategory,
) -> Result<&'static [&'static str], ConstraintError> {
    match category {
        AttackCategory::DoS => Ok(&DOS_EXTRA_FROZEN),
        AttackCategory::U2R | AttackCategory::R2L => Ok(&U2R_R2L_EXTRA_FROZEN),
        AttackCategory::Probe => Err(ConstraintError::NoAblationDefined(category)),
        AttackCategory::Normal => Err(ConstraintError::NoMaskForNormal),
    }
}

pub fn functional_mask(
    category: AttackCategory,
    schema: &FeatureSchema,
) -> Result<FeatureMask, ConstraintError> {
    let frozen = functional_sets(category)?;
    let mut modifiable = [false; NUM_FEATURES];
    for (i, spec) in schema.features.iter().enumerate() {
        modifiable[i] = !frozen.contains(&spec.set) && spec.kind != FeatureKind::DiscreteMulti;
    }
    Ok(FeatureMask {
        modifiable,
        category,
        setting: MaskSetting::FunctionalOnly,
    })
}

pub fn ablation_mask(
    category: AttackCategory,
    schema: &FeatureSchema,
) -> Result<FeatureMask, ConstraintError> {
    let extra = ablation_features(category)?;
    let mut mask = functional_mask(category, schema)?;
    for name in extra {
        let idx = schema
            .features
            .iter()
            .position(|f| f.name == *name)
            .ok_or_else(|| ConstraintError::UnknownFeature(name.to_string()))?;
        mask.modifiable[idx] = false;
    }
    mask.setting = MaskSetting::Ablation;
    Ok(mask)
}

pub fn mask_for(
    category: AttackCategory,
    setting: MaskSetting,
    schema: &FeatureSchema,
) -> Result<FeatureMask, ConstraintError> {
    match setting {
        MaskSetting::FunctionalOnly => functional_mask(category, schema),
        MaskSetting::Ablation => ablation_mask(category, schema),
    }
}

impl FeatureMask {
    pub fn modifiable_count(&self) -> usize {
        self.modifiable.iter().filter(|m| **m).count()
    }

    /// U2R and R2L records share one mask.
    pub fn accepts(&self, category: AttackCategory) -> bool {
        use AttackCategory::*;
        category == self.category || matches!((self.category, category), (U2R, R2L) | (R2L, U2R))
    }

    /// Audit listing: `name<TAB>modifiable|frozen`, one line per feature.
    pub fn to_text(&self, schema: &FeatureSchema) -> String {
        let mut out = format!(
            "# mask category={} setting={}\n",
            self.category, self.setting
        );
        for (spec, m) in schema.features.iter().zip(self.modifiable) {
            out.push_str(&spec.name);
            out.push('\t');
            out.push_str(if m { "modifiable" } else { "frozen" });
            out.push('\n');
        }
        out
    }
}

/// Takes `generated` on modifiable positions and `original` elsewhere, bit for bit.
pub fn apply_mask(
    original: &EncodedVector,
    generated: &FeatureVector,
    mask: &FeatureMask,
) -> Result<EncodedVector, ConstraintError> {
    if !mask.accepts(original.category) {
        return Err(ConstraintError::CategoryMismatch {
            mask: mask.category,
            record: original.category,
        });
    }
    let mut values = original.values;
    for i in 0..NUM_FEATURES {
        if mask.modifiable[i] {
            values[i] = generated[i];
        }
    }
    Ok(EncodedVector {
        values,
        category: original.category,
    })
}

/// Clamps into [0, 1].
pub fn clamp_unit(vector: &mut FeatureVector) {
    for v in vector.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Threshold binary features at 0.5; ties go to 1.
pub fn binarize(vector: &mut FeatureVector, schema: &FeatureSchema) {
    for (v, spec) in vector.iter_mut().zip(&schema.features) {
        if spec.kind == FeatureKind::DiscreteBinary {
            *v = if *v >= 0.5 { 1.0 } else { 0.0 };
        }
    }
}

pub fn postprocess(vector: &FeatureVector, schema: &FeatureSchema) -> FeatureVector {
    let mut out = *vector;
    clamp_unit(&mut out);
    binarize(&mut out, schema);
    out
}

/// Checks that `adversarial` leaves frozen features of `original` untouched,
/// lies in [0, 1], and (if `discrete`) has binary features in {0, 1}.
pub fn violations(
    original: &EncodedVector,
    adversarial: &FeatureVector,
    mask: &FeatureMask,
    schema: &FeatureSchema,
    discrete: bool,
) -> ConstraintViolations {
    let mut v = ConstraintViolations::default();
    for i in 0..NUM_FEATURES {
        let x = adversarial[i];
        if !mask.modifiable[i] && x.to_bits() != original.values[i].to_bits() {
            v.frozen += 1;
        }
        if !(0.0..=1.0).contains(&x) {
            v.range += 1;
        }
        if discrete
            && schema.features[i].kind == FeatureKind::DiscreteBinary
            && x != 0.0
            && x != 1.0
        {
            v.binary += 1;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstraintViolations {
    pub frozen: usize,
    pub range: usize,
    pub binary: usize,
}

impl ConstraintViolations {
    pub fn total(&self) -> usize {
        self.frozen + self.range + self.binary
    }

    pub fn add(&mut self, other: ConstraintViolations) {
        self.frozen += other.frozen;
        self.range += other.range;
        self.binary += other.binary;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nslkdd::{build_schema, feature_index, parse_record, FEATURE_LAYOUT};

    pub(crate) fn toy_schema() -> FeatureSchema {
        let mut f = vec!["0"; 41];
        f[1] = "tcp";
        f[2] = "http";
        f[3] = "SF";
        let line = format!("{},normal,21", f.join(","));
        build_schema(&[parse_record(&line).unwrap()]).unwrap()
    }

    fn indices(mask: &FeatureMask) -> Vec<usize> {
        (0..NUM_FEATURES)
            .filter(|&i| mask.modifiable[i])
            .map(|i| i + 1)
            .collect()
    }

    #[test]
    fn dos_functional_mask() {
        let m = functional_mask(AttackCategory::DoS, &toy_schema()).unwrap();
        let expected: Vec<usize> = (10..=22).chain(32..=41).collect();
        assert_eq!(indices(&m), expected);
        assert_eq!(m.modifiable_count(), 23);
    }

    #[test]
    fn u2r_and_probe_functional_masks() {
        let schema = toy_schema();
        let u2r = functional_mask(AttackCategory::U2R, &schema).unwrap();
        assert_eq!(indices(&u2r), (23..=41).collect::<Vec<_>>());
        assert_eq!(u2r.modifiable_count(), 19);
        let r2l = functional_mask(AttackCategory::R2L, &schema).unwrap();
        assert_eq!(r2l.modifiable, u2r.modifiable);
        let probe = functional_mask(AttackCategory::Probe, &schema).unwrap();
        assert_eq!(indices(&probe), (10..=22).collect::<Vec<_>>());
        assert_eq!(probe.modifiable_count(), 13);
        assert_eq!(
            functional_mask(AttackCategory::Normal, &schema),
            Err(ConstraintError::NoMaskForNormal)
        );
    }

    #[test]
    fn ablation_masks() {
        let schema = toy_schema();
        let dos = ablation_mask(AttackCategory::DoS, &schema).unwrap();
        assert_eq!(dos.modifiable_count(), 11);
        assert_eq!(dos.setting, MaskSetting::Ablation);
        let u2r = ablation_mask(AttackCategory::U2R, &schema).unwrap();
        assert_eq!(u2r.modifiable_count(), 10);
        assert_eq!(
            ablation_mask(AttackCategory::Probe, &schema),
            Err(ConstraintError::NoAblationDefined(AttackCategory::Probe))
        );
    }

    #[test]
    fn ablation_is_proper_subset_and_lists_are_nonfunctional() {
        let schema = toy_schema();
        for c in [
            AttackCategory::DoS,
            AttackCategory::U2R,
            AttackCategory::R2L,
        ] {
            let f = functional_mask(c, &schema).unwrap();
            let a = ablation_mask(c, &schema).unwrap();
            assert!((0..NUM_FEATURES).all(|i| !a.modifiable[i] || f.modifiable[i]));
            assert!(a.modifiable_count() < f.modifiable_count());
            for name in ablation_features(c).unwrap() {
                let i = feature_index(name).unwrap();
                assert!(
                    f.modifiable[i],
                    "{name} must be modifiable under the functional mask"
                );
            }
        }
    }

    #[test]
    fn intrinsic_and_multi_never_modifiable() {
        let schema = toy_schema();
        for c in [
            AttackCategory::DoS,
            AttackCategory::Probe,
            AttackCategory::U2R,
            AttackCategory::R2L,
        ] {
            let m = functional_mask(c, &schema).unwrap();
            for (i, (name, kind, set)) in FEATURE_LAYOUT.iter().enumerate() {
                if *set == FeatureSet::Intrinsic || *kind == FeatureKind::DiscreteMulti {
                    assert!(!m.modifiable[i], "{name}");
                }
            }
        }
    }

    fn dos_record() -> EncodedVector {
        let mut values = [0.0; NUM_FEATURES];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i as f64 + 0.5) / 50.0;
        }
        EncodedVector {
            values,
            category: AttackCategory::DoS,
        }
    }

    #[test]
    fn apply_mask_elementwise() {
        let schema = toy_schema();
        let original = dos_record();
        let generated: FeatureVector = std::array::from_fn(|i| 1.0 - i as f64 / 100.0);
        let mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        let out = apply_mask(&original, &generated, &mask).unwrap();
        for i in 0..NUM_FEATURES {
            let expected = if mask.modifiable[i] {
                generated[i]
            } else {
                original.values[i]
            };
            assert_eq!(out.values[i].to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn apply_mask_identities() {
        let schema = toy_schema();
        let original = dos_record();
        let mut mask = functional_mask(AttackCategory::DoS, &schema).unwrap();
        assert_eq!(
            apply_mask(&original, &original.values, &mask).unwrap(),
            original
        );
        mask.modifiable = [false; NUM_FEATURES];
        assert_eq!(
            apply_mask(&original, &[0.9; NUM_FEATURES], &mask).unwrap(),
            original
        );
    }

    #[test]
    fn apply_mask_rejects_other_category() {
        let schema = toy_schema();
        let mask = functional_mask(AttackCategory::U2R, &schema).unwrap();
        let err = apply_mask(&dos_record(), &[0.0; NUM_FEATURES], &mask).unwrap_err();
        assert!(matches!(err, ConstraintError::CategoryMismatch { .. }));
        let mut r2l = dos_record();
        r2l.category = AttackCategory::R2L;
        assert!(apply_mask(&r2l, &[0.0; NUM_FEATURES], &mask).is_ok());
    }

    #[test]
    fn postprocess_rules() {
        let schema = toy_schema();
        let logged_in = feature_index("logged_in").unwrap();
        let root_shell = feature_index("root_shell").unwrap();
        let hot = feature_index("hot").unwrap();
        let mut v = [0.2; NUM_FEATURES];
        v[0] = 1.3;
        v[5] = -0.2;
        v[logged_in] = 0.5;
        v[root_shell] = 0.4999;
        v[hot] = 0.73;
        let out = postprocess(&v, &schema);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[5], 0.0);
        assert_eq!(out[logged_in], 1.0);
        assert_eq!(out[root_shell], 0.0);
        assert_eq!(out[hot], 0.73);
    }

    #[test]
    fn mask_text_lists_every_feature() {
        let schema = toy_schema();
        let mask = ablation_mask(AttackCategory::DoS, &schema).unwrap();
        let text = mask.to_text(&schema);
        assert_eq!(text.lines().count(), 42);
        assert!(text.contains("hot\tfrozen"));
        assert!(text.contains("num_shells\tmodifiable"));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn postprocessed_vectors_are_valid(raw in prop::array::uniform32(-2.0f64..3.0)) {
            let schema = tests::toy_schema();
            let mut v = [0.0; NUM_FEATURES];
            v[..32].copy_from_slice(&raw);
            v[32..].copy_from_slice(&raw[..9]);
            let out = postprocess(&v, &schema);
            for (x, spec) in out.iter().zip(&schema.features) {
                prop_assert!((0.0..=1.0).contains(x));
                if spec.kind == FeatureKind::DiscreteBinary {
                    prop_assert!(*x == 0.0 || *x == 1.0);
                }
            }
        }
    }
}
