use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::WordHmm;
use crate::binio::*;
use crate::error::{Error, Result};
use crate::mixtures::{BernoulliMixture, EmissionKind, GaussianMixture, Mixture};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"WHMM";
const VERSION: u32 = 1;
const KIND: &str = "WHMM";

#[derive(Debug, Clone, PartialEq)]
pub struct Recognition<T> {
    /// Index into the vocabulary.
    pub word: usize,
    pub label: String,
    pub scores: Vec<T>,
}

/// One model per vocabulary word; picks the word of maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer<T, E> {
    models: Vec<WordHmm<T, E>>,
}

/// Index of the first maximum.
pub fn argmax_first<T: Real>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

impl<T: Real, E: Mixture<T>> Recognizer<T, E> {
    pub fn new(models: Vec<WordHmm<T, E>>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidInput("empty vocabulary".into()))?;
        let dim = first.dim();
        if let Some(m) = models.iter().find(|m| m.dim() != dim) {
            return Err(Error::shape(
                format!("feature dimension {dim}"),
                format!("{} for word `{}`", m.dim(), m.label()),
            ));
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[WordHmm<T, E>] {
        &self.models
    }

    pub fn labels(&self) -> Vec<String> {
        self.models.iter().map(|m| m.label().to_string()).collect()
    }

    pub fn kind(&self) -> EmissionKind {
        E::KIND
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    /// Forward scoring; ties resolve to the earliest word.
    pub fn recognize(&self, seq: &[E::Obs]) -> Result<Recognition<T>> {
        let scores = self
            .models
            .iter()
            .map(|m| m.forward_log_likelihood(seq))
            .collect::<Result<Vec<T>>>()?;
        Ok(self.pick(scores))
    }

    /// Best-path scoring, for diagnostics.
    pub fn recognize_viterbi(&self, seq: &[E::Obs]) -> Result<Recognition<T>> {
        let scores = self
            .models
            .iter()
            .map(|m| m.viterbi(seq).map(|v| v.0))
            .collect::<Result<Vec<T>>>()?;
        Ok(self.pick(scores))
    }

    fn pick(&self, scores: Vec<T>) -> Recognition<T> {
        let word = argmax_first(&scores);
        Recognition {
            word,
            label: self.models[word].label().to_string(),
            scores,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, self.models.len() as u32)?;
        for m in &self.models {
            let bytes = m.label().as_bytes();
            put_u32(w, bytes.len() as u32)?;
            w.write_all(bytes)?;
            let n = m.n_states();
            put_u32(w, n as u32)?;
            for q in 0..n {
                for r in 0..n {
                    put_f64(w, m.transitions()[(q, r)].as_f64())?;
                }
            }
            put_u32(w, E::KIND.tag())?;
            for e in m.emissions() {
                e.write_to(w)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let count = read_header(r)?;
        let mut models = Vec::with_capacity(count);
        for _ in 0..count {
            let (label, trans, tag) = read_word_header::<T>(r)?;
            if tag != E::KIND.tag() {
                return Err(Error::format(KIND, format!("word `{label}` has emission tag {tag}, expected {}", E::KIND.tag())));
            }
            let emissions = (0..trans.nrows()).map(|_| E::read_from(r)).collect::<Result<Vec<E>>>()?;
            models.push(WordHmm::new(label, trans, emissions).map_err(|e| Error::format(KIND, e.to_string()))?);
        }
        Self::new(models)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_header(r: &mut impl Read) -> Result<usize> {
    expect_magic(r, MAGIC, KIND)?;
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::format(KIND, format!("unsupported version {version}")));
    }
    get_count(r, 1 << 16, KIND, "vocabulary size")
}

fn read_word_header<T: Real>(r: &mut impl Read) -> Result<(String, DMatrix<T>, u32)> {
    let len = get_count(r, 1 << 12, KIND, "label length")?;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    let label = String::from_utf8(bytes).map_err(|_| Error::format(KIND, "label is not UTF-8"))?;
    let n = get_count(r, 1 << 10, KIND, "state count")?;
    let mut trans = DMatrix::zeros(n, n);
    for q in 0..n {
        for s in 0..n {
            trans[(q, s)] = T::lit(get_f64(r)?);
        }
    }
    Ok((label, trans, get_u32(r)?))
}

/// A model file of either emission kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyRecognizer<T> {
    Binary(Recognizer<T, BernoulliMixture<T>>),
    Real(Recognizer<T, GaussianMixture<T>>),
}

impl<T: Real> AnyRecognizer<T> {
    pub fn kind(&self) -> EmissionKind {
        match self {
            AnyRecognizer::Binary(_) => EmissionKind::Binary,
            AnyRecognizer::Real(_) => EmissionKind::Real,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            AnyRecognizer::Binary(r) => r.labels(),
            AnyRecognizer::Real(r) => r.labels(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut peek = bytes.as_slice();
        let count = read_header(&mut peek)?;
        if count == 0 {
            return Err(Error::format(KIND, "empty vocabulary"));
        }
        let (_, _, tag) = read_word_header::<T>(&mut peek)?;
        let mut r = bytes.as_slice();
        match tag {
            0 => Ok(AnyRecognizer::Binary(Recognizer::read_from(&mut r)?)),
            1 => Ok(AnyRecognizer::Real(Recognizer::read_from(&mut r)?)),
            other => Err(Error::format(KIND, format!("unknown emission tag {other}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            AnyRecognizer::Binary(r) => r.save(path),
            AnyRecognizer::Real(r) => r.save(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(label: &str, p: f64) -> WordHmm<f64, BernoulliMixture<f64>> {
        let e = BernoulliMixture::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[p, 1.0 - p])).unwrap();
        let t = WordHmm::<f64, BernoulliMixture<f64>>::left_right_transitions(2, 0.7);
        WordHmm::new(label, t, vec![e.clone(), e]).unwrap()
    }

    #[test]
    fn single_word_always_wins() {
        let r = Recognizer::new(vec![word("only", 0.3)]).unwrap();
        for seq in [vec![vec![0]], vec![vec![1], vec![]]] {
            assert_eq!(r.recognize(&seq).unwrap().label, "only");
        }
    }

    #[test]
    fn ties_go_to_first_word() {
        let r = Recognizer::new(vec![word("a", 0.4), word("b", 0.4), word("c", 0.4)]).unwrap();
        assert_eq!(r.recognize(&[vec![0]]).unwrap().word, 0);
    }

    #[test]
    fn disjoint_supports_separate() {
        let r = Recognizer::new(vec![word("a", 0.999), word("b", 0.001)]).unwrap();
        let from_a = vec![vec![0], vec![0], vec![0]];
        let from_b = vec![vec![1], vec![1]];
        assert_eq!(r.recognize(&from_a).unwrap().label, "a");
        assert_eq!(r.recognize(&from_b).unwrap().label, "b");
        assert_eq!(r.recognize_viterbi(&from_b).unwrap().label, "b");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = Recognizer::new(vec![word("a", 0.5)]).unwrap();
        assert!(r.recognize(&[vec![5]]).is_err());
        let e3 = BernoulliMixture::new(vec![1.0], DMatrix::from_element(1, 3, 0.5)).unwrap();
        let w3 = WordHmm::new("x", DMatrix::from_element(1, 1, 1.0), vec![e3]).unwrap();
        assert!(Recognizer::new(vec![word("a", 0.5), w3]).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let r = Recognizer::new(vec![word("zéro", 0.2), word("un", 0.9)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.whmm");
        r.save(&path).unwrap();
        match AnyRecognizer::<f64>::load(&path).unwrap() {
            AnyRecognizer::Binary(back) => assert_eq!(back, r),
            other => panic!("wrong kind {:?}", other.kind()),
        }
        assert!(Recognizer::<f64, GaussianMixture<f64>>::load(&path).is_err());
    }
}
