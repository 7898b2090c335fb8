//! Seeded synthetic dumps with planted structure, for tests, benches and
//! demos. Nothing here touches a real model.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::store::{AnswerGroup, Dump, DumpHeader, EvidenceGroup, InstanceRecord, LayerKind};

/// A dump in which conflict (and optionally source-selection) information
/// becomes linearly decodable from a given layer onwards.
///
/// Every question yields one with_e_M and one with_e_C record. Noise is
/// `N(0, 1)` per component. From `conflict_onset` on, the two evidence groups
/// have means `∓(separation/2)·s` for a fixed random sign vector `s`, so the
/// class means differ by `separation` standard deviations in every
/// component. From `selection_onset` on, with_e_C records additionally
/// carry `±(separation/2)·t` by answer group along a second sign vector `t`.
#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub questions: usize,
    pub kinds: Vec<LayerKind>,
    pub conflict_onset: usize,
    pub selection_onset: Option<usize>,
    pub separation: f64,
    /// Fraction of with_e_C records whose answer matched neither side.
    pub unmatched_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    /// 32 layers, d = 64, 200 questions (400 records), signal from layer 8.
    fn default() -> Self {
        PlantedSpec {
            num_layers: 32,
            hidden_dim: 64,
            questions: 200,
            kinds: vec![LayerKind::Hidden],
            conflict_onset: 8,
            selection_onset: None,
            separation: 2.0,
            unmatched_fraction: 0.0,
            seed: 0x5eed,
        }
    }
}

fn sign_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

impl PlantedSpec {
    pub fn build(&self) -> Dump {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = self.hidden_dim;
        let conflict_dir = sign_vector(&mut rng, d);
        let selection_dir = sign_vector(&mut rng, d);
        let half = self.separation / 2.0;

        let mut header = DumpHeader::new("planted-synthetic", self.num_layers, d, self.kinds.clone());
        header.dataset_name = "planted".into();
        header.prompt_template_id = "none".into();
        header.created_utc = "1970-01-01T00:00:00Z".into();

        let mut records = Vec::with_capacity(self.questions * 2);
        for q in 0..self.questions {
            let ec_answer = if rng.random::<f64>() < self.unmatched_fraction {
                AnswerGroup::Unmatched
            } else if rng.random::<bool>() {
                AnswerGroup::MatchedAC
            } else {
                AnswerGroup::MatchedAM
            };
            for (evidence, answer) in [
                (EvidenceGroup::WithEM, AnswerGroup::MatchedAM),
                (EvidenceGroup::WithEC, ec_answer),
            ] {
                let conflict_sign = if evidence == EvidenceGroup::WithEC { half } else { -half };
                let selection_sign = match answer {
                    AnswerGroup::MatchedAC if evidence == EvidenceGroup::WithEC => half,
                    AnswerGroup::MatchedAM if evidence == EvidenceGroup::WithEC => -half,
                    _ => 0.0,
                };
                let mut activations = Vec::with_capacity(self.num_layers * self.kinds.len() * d);
                for layer in 0..self.num_layers {
                    let c = if layer >= self.conflict_onset {
                        conflict_sign
                    } else {
                        0.0
                    };
                    let s = match self.selection_onset {
                        Some(onset) if layer >= onset => selection_sign,
                        _ => 0.0,
                    };
                    for _ in &self.kinds {
                        for j in 0..d {
                            let noise: f64 = StandardNormal.sample(&mut rng);
                            activations.push((noise + c * conflict_dir[j] + s * selection_dir[j]) as f32);
                        }
                    }
                }
                let tag = if evidence == EvidenceGroup::WithEC { "ec" } else { "em" };
                records.push(InstanceRecord {
                    instance_id: format!("q{q:05}-{tag}"),
                    question_key: format!("q{q:05}"),
                    evidence_group: evidence,
                    answer_group: answer,
                    activations,
                });
            }
        }
        Dump::new(header, records).expect("planted dump is well-formed")
    }
}

/// with_e_C records split evenly into a contextual-answer group whose
/// components are unit-variance Laplace and a parametric-answer group whose
/// components are standard normal, at every layer.
pub fn heavy_tail_dump(per_group: usize, num_layers: usize, hidden_dim: usize, seed: u64) -> Dump {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).expect("valid normal");
    // Laplace(0, b) has variance 2b²; b = 1/√2 gives unit variance.
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let mut header = DumpHeader::new("heavy-tail-synthetic", num_layers, hidden_dim, vec![LayerKind::Hidden]);
    header.dataset_name = "laplace-vs-gaussian".into();
    header.created_utc = "1970-01-01T00:00:00Z".into();

    let mut records = Vec::with_capacity(per_group * 2);
    for i in 0..per_group * 2 {
        let contextual = i % 2 == 0;
        let activations = (0..num_layers * hidden_dim)
            .map(|_| {
                let v = if contextual {
                    // Inverse CDF of the Laplace distribution.
                    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                } else {
                    gauss.sample(&mut rng)
                };
                v as f32
            })
            .collect();
        records.push(InstanceRecord {
            instance_id: format!("r{i:05}"),
            question_key: format!("q{:05}", i / 2),
            evidence_group: EvidenceGroup::WithEC,
            answer_group: if contextual {
                AnswerGroup::MatchedAC
            } else {
                AnswerGroup::MatchedAM
            },
            activations,
        });
    }
    Dump::new(header, records).expect("heavy-tail dump is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_shape_and_counts() {
        let spec = PlantedSpec {
            num_layers: 3,
            hidden_dim: 4,
            questions: 10,
            unmatched_fraction: 0.3,
            ..PlantedSpec::default()
        };
        let dump = spec.build();
        assert_eq!(dump.records.len(), 20);
        assert_eq!(dump.count(EvidenceGroup::WithEC), 10);
        assert_eq!(dump.records[0].activations.len(), 12);
        assert_eq!(spec.build(), dump);
    }

    #[test]
    fn heavy_tail_groups_alternate() {
        let dump = heavy_tail_dump(5, 2, 8, 1);
        assert_eq!(dump.records.len(), 10);
        assert_eq!(dump.records[0].answer_group, AnswerGroup::MatchedAC);
        assert_eq!(dump.records[1].answer_group, AnswerGroup::MatchedAM);
    }
}
