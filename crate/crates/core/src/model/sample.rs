use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Episode, EpisodeModel, Stream, StreamMap};

/// Every latent draw behind one sampled episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentTrace {
    pub top: usize,
    pub sub_states: StreamMap<usize>,
    pub labs_path: Vec<usize>,
    pub neuro_path: Vec<usize>,
    pub meds_path: Vec<usize>,
}

impl EpisodeModel {
    /// Draws one episode by ancestral sampling: top state, scalars, then for
    /// each stream a sub-model state and the stream itself.
    pub fn sample_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> (Episode, LatentTrace) {
        let z = self.top.sample(rng);
        let scalars = &self.scalars[z];
        let age = scalars.age.sample(rng);
        let sex = scalars.sex.sample(rng);
        let death = scalars.death.sample(rng);

        let draw_state = |s: Stream, rng: &mut R| self.mixing[s].row(z).sample(rng);

        let k_beds = draw_state(Stream::Beds, rng);
        let beds = self.beds.state(k_beds).sample(rng);
        let k_adm = draw_state(Stream::AdmissionDx, rng);
        let admission_dx = self.diagnoses.state(k_adm).sample(rng);
        let k_dis = draw_state(Stream::DischargeDx, rng);
        let discharge_dx = self.diagnoses.state(k_dis).sample(rng);
        let k_labs = draw_state(Stream::Labs, rng);
        let (labs, labs_path) = self.labs.state(k_labs).sample(self.labs.emission(), rng);
        let k_neuro = draw_state(Stream::Neuro, rng);
        let (neuro, neuro_path) = self.neuro.state(k_neuro).sample(self.neuro.emission(), rng);
        let k_meds = draw_state(Stream::Meds, rng);
        let (meds, meds_path) = self.meds.state(k_meds).sample(self.meds.emission(), rng);

        let episode = Episode {
            age: Some(age),
            sex: Some(sex),
            death: Some(death),
            beds,
            admission_dx,
            discharge_dx,
            labs,
            neuro,
            meds,
        };
        let trace = LatentTrace {
            top: z,
            sub_states: StreamMap {
                beds: k_beds,
                admission_dx: k_adm,
                discharge_dx: k_dis,
                labs: k_labs,
                neuro: k_neuro,
                meds: k_meds,
            },
            labs_path,
            neuro_path,
            meds_path,
        };
        (episode, trace)
    }
}
