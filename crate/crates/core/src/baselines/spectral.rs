//! Similarity-graph baselines: semantic sets, Laplacian eigenvalues, degree and eccentricity.

use crate::domain::{Method, Response, SimilarityMatrix, UncertaintyScore};
use crate::entailment::{entail_probability, EntailmentGateway, NliPair};
use crate::estimation::EstimationError;

use super::eigen::symmetric_eigen;
use super::lexical::LexicalSimilarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// Mean of the two directional entailment probabilities between full responses.
    EntailSym,
    Lexical,
}

/// `out[i][j]` = P(entail | hypothesis = response i, premise = response j); diagonal is 1.
pub fn directional_entailment(
    responses: &[&Response],
    gateway: &EntailmentGateway,
) -> Result<Vec<Vec<f64>>, EstimationError> {
    let m = responses.len();
    let mut pairs = Vec::with_capacity(m * m.saturating_sub(1));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                pairs.push(NliPair::new(responses[i].text.clone(), responses[j].text.clone()));
            }
        }
    }
    let judgments = gateway.score_cached(&pairs)?;
    let mut it = judgments.iter();
    let mut out = vec![vec![1.0; m]; m];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j {
                let j = it.next().expect("one judgment per pair");
                *cell = entail_probability(j).map_err(|e| EstimationError::NonFinite(e.to_string()))?;
            }
        }
    }
    Ok(out)
}

pub fn similarity_matrix(
    responses: &[&Response],
    kind: SimilarityKind,
    gateway: &EntailmentGateway,
    lexical: &dyn LexicalSimilarity,
) -> Result<SimilarityMatrix, EstimationError> {
    let m = responses.len();
    if m < 2 {
        return Err(EstimationError::TooFewResponses { usable: m });
    }
    let rows = match kind {
        SimilarityKind::EntailSym => directional_entailment(responses, gateway)?,
        SimilarityKind::Lexical => (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 1.0 } else { lexical.similarity(&responses[i].text, &responses[j].text) })
                    .collect()
            })
            .collect(),
    };
    SimilarityMatrix::from_rows(&rows).map_err(EstimationError::Numerical)
}

/// Cluster label per response, numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticPartition {
    pub labels: Vec<usize>,
}

impl SemanticPartition {
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |&l| l + 1)
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Union-find over edges where entailment exceeds `threshold` in both directions.
pub fn semantic_partition(directional: &[Vec<f64>], threshold: f64) -> SemanticPartition {
    let m = directional.len();
    let mut parent: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in i + 1..m {
            if directional[i][j] > threshold && directional[j][i] > threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut canon: Vec<Option<usize>> = vec![None; m];
    let mut next = 0;
    let labels = (0..m)
        .map(|i| {
            let root = find(&mut parent, i);
            *canon[root].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    SemanticPartition { labels }
}

/// Number of semantic sets.
pub fn numsets(
    responses: &[&Response],
    gateway: &EntailmentGateway,
    threshold: f64,
) -> Result<UncertaintyScore, EstimationError> {
    if responses.is_empty() {
        return Err(EstimationError::TooFewResponses { usable: 0 });
    }
    let directional = directional_entailment(responses, gateway)?;
    let partition = semantic_partition(&directional, threshold);
    Ok(UncertaintyScore::new(Method::Numsets, partition.num_clusters() as f64))
}

/// `L = I - D^{-1/2} S D^{-1/2}` with `D_ii` the row sums of `S`, as rows.
pub fn laplacian(s: &SimilarityMatrix) -> Result<Vec<Vec<f64>>, EstimationError> {
    let m = s.m();
    let d = s.row_sums();
    if let Some(i) = d.iter().position(|&x| x <= 0.0) {
        return Err(EstimationError::Numerical(format!("zero row sum at {i}")));
    }
    let inv_sqrt: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    Ok((0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    id - inv_sqrt[i] * s.get(i, j) * inv_sqrt[j]
                })
                .collect()
        })
        .collect())
}

fn spectrum(s: &SimilarityMatrix) -> Result<super::SpectralDecomposition, EstimationError> {
    symmetric_eigen(&laplacian(s)?).map_err(|e| EstimationError::Numerical(e.to_string()))
}

/// `Σ_k max(0, 1 - λ_k)` over the Laplacian spectrum.
pub fn eigv_uncertainty(s: &SimilarityMatrix) -> Result<UncertaintyScore, EstimationError> {
    let value = spectrum(s)?.eigenvalues.iter().map(|l| (1.0 - l).max(0.0)).sum();
    Ok(UncertaintyScore::new(Method::Eigv, value))
}

/// `trace(m·I - D) / m²`.
pub fn deg_uncertainty(s: &SimilarityMatrix) -> UncertaintyScore {
    let m = s.m() as f64;
    let trace_d: f64 = s.row_sums().iter().sum();
    UncertaintyScore::new(Method::Deg, ((m * m - trace_d) / (m * m)).max(0.0))
}

/// Norm of the centred spectral embedding built from the eigenvectors whose
/// eigenvalue is below `cutoff` (at least one).
///
/// The value only depends on the span of the retained eigenvectors, so it is
/// well defined whenever the cutoff does not split a repeated eigenvalue.
pub fn ecc_uncertainty(s: &SimilarityMatrix, cutoff: f64) -> Result<UncertaintyScore, EstimationError> {
    let spec = spectrum(s)?;
    let m = s.m();
    let k = spec.eigenvalues.iter().filter(|&&l| l < cutoff).count().max(1);
    let mut total = 0.0;
    for u in &spec.eigenvectors[..k] {
        let mean = u.iter().sum::<f64>() / m as f64;
        total += u.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    }
    Ok(UncertaintyScore::new(Method::Ecc, total.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::LcsF1;
    use crate::entailment::MockScorer;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn laplacian_closed_forms() {
        let l = laplacian(&SimilarityMatrix::ones(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 - 1.0 / 3.0 } else { -1.0 / 3.0 };
                assert!(close(l[i][j], expected, 1e-15));
            }
        }
        let spec = symmetric_eigen(&l).unwrap();
        assert!(close(spec.eigenvalues[0], 0.0, 1e-12));
        assert!(close(spec.eigenvalues[1], 1.0, 1e-12));
        assert!(close(spec.eigenvalues[2], 1.0, 1e-12));

        let l = laplacian(&SimilarityMatrix::identity(3)).unwrap();
        assert!(l.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn eigv_closed_forms() {
        assert!(close(eigv_uncertainty(&SimilarityMatrix::ones(3)).unwrap().value, 1.0, 1e-12));
        assert!(close(eigv_uncertainty(&SimilarityMatrix::identity(3)).unwrap().value, 3.0, 1e-12));
        let blocks = SimilarityMatrix::from_blocks(&[0, 0, 1, 1]);
        assert!(close(eigv_uncertainty(&blocks).unwrap().value, 2.0, 1e-12));
        assert!(!eigv_uncertainty(&blocks).unwrap().bounded01);
    }

    #[test]
    fn deg_closed_forms() {
        assert!(close(deg_uncertainty(&SimilarityMatrix::ones(3)).value, 0.0, 1e-15));
        assert!(close(deg_uncertainty(&SimilarityMatrix::identity(3)).value, 2.0 / 3.0, 1e-15));
        assert_eq!(deg_uncertainty(&SimilarityMatrix::ones(1)).value, 0.0);
    }

    #[test]
    fn ecc_closed_forms() {
        assert!(close(ecc_uncertainty(&SimilarityMatrix::ones(3), 0.9).unwrap().value, 0.0, 1e-12));
        // Two blocks of two: retained span is the block indicators; centred norm² = 1/2 + 1/2.
        let blocks = SimilarityMatrix::from_blocks(&[0, 0, 1, 1]);
        assert!(close(ecc_uncertainty(&blocks, 0.9).unwrap().value, 1.0, 1e-12));
    }

    #[test]
    fn partition_components() {
        let yes = 0.9;
        let no = 0.1;
        let all = vec![vec![1.0, yes, yes], vec![yes, 1.0, yes], vec![yes, yes, 1.0]];
        assert_eq!(semantic_partition(&all, 0.5).num_clusters(), 1);
        let none = vec![vec![1.0, no, no], vec![no, 1.0, no], vec![no, no, 1.0]];
        assert_eq!(semantic_partition(&none, 0.5).num_clusters(), 3);
        let ab = vec![vec![1.0, yes, no], vec![yes, 1.0, no], vec![no, no, 1.0]];
        let p = semantic_partition(&ab, 0.5);
        assert_eq!(p.labels, vec![0, 0, 1]);
        // One direction only does not merge.
        let one_way = vec![vec![1.0, yes], vec![no, 1.0]];
        assert_eq!(semantic_partition(&one_way, 0.5).num_clusters(), 2);
        // Transitive closure: a~b, b~c ⇒ one set.
        let chain = vec![vec![1.0, yes, no], vec![yes, 1.0, yes], vec![no, yes, 1.0]];
        assert_eq!(semantic_partition(&chain, 0.5).num_clusters(), 1);
    }

    #[test]
    fn mock_similarity_matrices() {
        let gw = EntailmentGateway::uncached(Box::new(MockScorer::new()));
        let a = Response::new("Ada was born in 1815.");
        let b = Response::new("Ada was born in 1816.");
        let same = similarity_matrix(&[&a, &a, &a], SimilarityKind::EntailSym, &gw, &LcsF1).unwrap();
        let p_entail = 1.0 / (1.0 + (-6.0f64).exp());
        for i in 0..3 {
            assert_eq!(same.get(i, i), 1.0);
            for j in 0..3 {
                if i != j {
                    assert!(close(same.get(i, j), p_entail, 1e-15));
                }
            }
        }
        let diff = similarity_matrix(&[&a, &b], SimilarityKind::EntailSym, &gw, &LcsF1).unwrap();
        assert!(close(diff.get(0, 1), 1.0 / (1.0 + 6.0f64.exp()), 1e-15));
        assert_eq!(numsets(&[&a, &a, &b], &gw, 0.5).unwrap().value, 2.0);
        let lex = similarity_matrix(&[&a, &a], SimilarityKind::Lexical, &gw, &LcsF1).unwrap();
        assert_eq!(lex.get(0, 1), 1.0);
    }
}
