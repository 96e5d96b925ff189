use cmqe_core::corpus::{Channel, Corpus, Instance};
use cmqe_core::embedding::{
    assemble_features, mean_pool, read_embedding_cache, EmbeddingCache, FeatureMatrix,
    FeatureVector, PooledEmbedding, ReferenceEncoder,
};
use rayon::prelude::*;

use crate::config::{EncoderSettings, EncoderSpec};
use crate::error::{CliError, Result};

/// How many missing ids an error message lists before summarising.
const MISSING_SHOWN: usize = 10;

pub enum ChannelSource {
    Reference(ReferenceEncoder),
    Cache(EmbeddingCache),
}

impl ChannelSource {
    pub fn dim(&self) -> usize {
        match self {
            ChannelSource::Reference(e) => e.dim(),
            ChannelSource::Cache(c) => c.dim,
        }
    }

    fn pooled(&self, inst: &Instance, channel: Channel) -> Result<PooledEmbedding> {
        match self {
            ChannelSource::Reference(enc) => {
                Ok(mean_pool(&enc.encode(&inst.id, inst.text(channel))?)?)
            }
            ChannelSource::Cache(cache) => {
                let seq = cache.get(&inst.id).expect("ids checked before pooling");
                Ok(mean_pool(seq)?)
            }
        }
    }
}

pub struct FeatureBuilder {
    sources: [ChannelSource; 3],
}

impl FeatureBuilder {
    pub fn open(settings: &EncoderSettings) -> Result<Self> {
        let open = |c: Channel| -> Result<ChannelSource> {
            let s = settings.get(c);
            Ok(match &s.encoder {
                EncoderSpec::Reference => ChannelSource::Reference(
                    ReferenceEncoder::new(s.dim, settings.seed)
                        .map_err(|e| CliError::Usage(format!("{c}: {e}")))?,
                ),
                EncoderSpec::Cache(p) => ChannelSource::Cache(
                    read_embedding_cache(p)
                        .map_err(|e| CliError::Runtime(format!("{c} cache: {e}")))?,
                ),
            })
        };
        Ok(FeatureBuilder {
            sources: [
                open(Channel::English)?,
                open(Channel::Hindi)?,
                open(Channel::Hinglish)?,
            ],
        })
    }

    pub fn segment_dims(&self) -> [usize; 3] {
        [
            self.sources[0].dim(),
            self.sources[1].dim(),
            self.sources[2].dim(),
        ]
    }

    /// Every cache-backed channel must hold every instance id.
    fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        for (channel, src) in Channel::ALL.iter().zip(&self.sources) {
            let ChannelSource::Cache(cache) = src else {
                continue;
            };
            let missing: Vec<&str> = corpus.ids().filter(|id| cache.get(id).is_none()).collect();
            if !missing.is_empty() {
                let shown = missing
                    .iter()
                    .take(MISSING_SHOWN)
                    .copied()
                    .collect::<Vec<_>>()
                    .join(", ");
                let more = missing.len().saturating_sub(MISSING_SHOWN);
                let tail = if more > 0 {
                    format!(" and {more} more")
                } else {
                    String::new()
                };
                return Err(CliError::Runtime(format!(
                    "{channel} cache lacks {} of {} instance ids: {shown}{tail}",
                    missing.len(),
                    corpus.len()
                )));
            }
        }
        Ok(())
    }

    /// One row per instance, in corpus order.
    pub fn build(&self, corpus: &Corpus) -> Result<FeatureMatrix> {
        self.check_coverage(corpus)?;
        let vectors: Vec<FeatureVector> = corpus
            .instances
            .par_iter()
            .map(|inst| {
                let [en, hi, cm] = [Channel::English, Channel::Hindi, Channel::Hinglish];
                let e = self.sources[0].pooled(inst, en)?;
                let h = self.sources[1].pooled(inst, hi)?;
                let c = self.sources[2].pooled(inst, cm)?;
                Ok(assemble_features(&e, &h, &c, &inst.id)?)
            })
            .collect::<Result<_>>()?;
        Ok(FeatureMatrix::from_vectors(&vectors)?)
    }
}
