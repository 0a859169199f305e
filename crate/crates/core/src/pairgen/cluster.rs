use serde::{Deserialize, Serialize};

use super::text::{normalize_transcript, normalized_levenshtein};
use super::PairGenConfig;
use crate::datamodel::Utterance;
use crate::error::{Error, Result};

/// Utterances judged to share the same spoken content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentCluster {
    pub cluster_id: usize,
    /// Sorted by utt_id.
    pub member_ids: Vec<String>,
    pub representative_transcript: String,
}

const UNVISITED: isize = -2;
const NOISE: isize = -1;

/// DBSCAN over a precomputed distance matrix. Returns one label per point,
/// `-1` for noise. Points are visited in index order.
pub fn dbscan(distances: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<isize> {
    let n = distances.len();
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| distances[i][j] <= eps).collect()
    };
    let mut labels = vec![UNVISITED; n];
    let mut next = 0isize;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = neighbours(i);
        if seeds.len() < min_samples {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = cluster;
        let mut queue = std::collections::VecDeque::from(seeds);
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                // border point
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let reach = neighbours(j);
            if reach.len() >= min_samples {
                queue.extend(reach);
            }
        }
    }
    labels
}

/// Groups utterances by transcript similarity. Utterances are ordered by
/// utt_id before clustering; noise points become singleton clusters, and
/// cluster ids follow the order of each cluster's first member.
pub fn cluster_transcripts(utts: &[Utterance], cfg: &PairGenConfig) -> Result<Vec<ContentCluster>> {
    cfg.validate()?;
    let mut items: Vec<(&str, String)> = utts
        .iter()
        .map(|u| {
            u.transcript
                .as_deref()
                .map(|t| (u.utt_id.as_str(), normalize_transcript(t)))
                .ok_or_else(|| Error::MissingTranscript(u.utt_id.clone()))
        })
        .collect::<Result<_>>()?;
    items.sort_by(|a, b| a.0.cmp(b.0));

    let n = items.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = normalized_levenshtein(&items[i].1, &items[j].1);
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let labels = dbscan(&distances, cfg.eps, cfg.min_samples);

    // Renumber: every noise point gets its own group, then groups are ordered
    // by their lowest member index.
    let mut dense: std::collections::HashMap<isize, usize> = Default::default();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let g = if label == NOISE {
            groups.push(Vec::new());
            groups.len() - 1
        } else {
            *dense.entry(label).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            })
        };
        groups[g].push(i);
    }

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(cluster_id, members)| ContentCluster {
            cluster_id,
            representative_transcript: items[members[0]].1.clone(),
            member_ids: members.iter().map(|&i| items[i].0.to_string()).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, text: &str) -> Utterance {
        Utterance {
            utt_id: id.into(),
            wav_path: format!("{id}.wav").into(),
            system_id: "s".into(),
            mos: Some(3.0),
            transcript: Some(text.into()),
            sample_rate: 16_000,
        }
    }

    /// Connected components of the radius graph, by brute force union-find.
    fn components_oracle(texts: &[&str], eps: f64) -> Vec<Vec<usize>> {
        let n = texts.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for i in 0..n {
            for j in 0..n {
                let d = normalized_levenshtein(
                    &normalize_transcript(texts[i]),
                    &normalize_transcript(texts[j]),
                );
                if d <= eps {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<_> = groups.into_values().collect();
        out.sort();
        out
    }

    fn as_index_groups(clusters: &[ContentCluster], ids: &[&str]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = clusters
            .iter()
            .map(|c| {
                let mut v: Vec<usize> = c
                    .member_ids
                    .iter()
                    .map(|m| ids.iter().position(|i| i == m).unwrap())
                    .collect();
                v.sort();
                v
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn single_utterance_is_singleton() {
        let clusters = cluster_transcripts(&[utt("a", "hi")], &PairGenConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].member_ids, ["a"]);
    }

    #[test]
    fn duplicate_groups_form_two_clusters() {
        let texts = ["the cat sat down", "a dog ran off", "The cat sat down.", "a dog ran off"];
        let ids = ["u1", "u2", "u3", "u4"];
        let utts: Vec<_> = ids.iter().zip(texts).map(|(i, t)| utt(i, t)).collect();
        let cfg = PairGenConfig {
            eps: 0.2,
            ..PairGenConfig::default()
        };
        let clusters = cluster_transcripts(&utts, &cfg).unwrap();
        assert_eq!(clusters.len(), 2);
        assert!(clusters.iter().all(|c| c.member_ids.len() == 2));
        assert_eq!(as_index_groups(&clusters, &ids), components_oracle(&texts, 0.2));
        assert_eq!(clusters[0].member_ids, ["u1", "u3"]);
        assert_eq!(clusters[0].representative_transcript, "the cat sat down");
    }

    #[test]
    fn distant_transcripts_stay_apart() {
        let texts = ["alpha bravo", "charlie delta", "echo foxtrot"];
        let ids = ["a", "b", "c"];
        let utts: Vec<_> = ids.iter().zip(texts).map(|(i, t)| utt(i, t)).collect();
        let clusters = cluster_transcripts(&utts, &PairGenConfig::default()).unwrap();
        assert_eq!(clusters.len(), 3);
        assert_eq!(as_index_groups(&clusters, &ids), components_oracle(&texts, 0.2));
    }

    #[test]
    fn chains_join_through_density_connectivity() {
        // each neighbour differs by one character out of ten
        let texts = ["aaaaaaaaaa", "aaaaaaaaab", "aaaaaaaabb", "aaaaaaabbb", "zzzzzzzzzz"];
        let ids = ["a", "b", "c", "d", "e"];
        let utts: Vec<_> = ids.iter().zip(texts).map(|(i, t)| utt(i, t)).collect();
        let cfg = PairGenConfig {
            eps: 0.1,
            ..PairGenConfig::default()
        };
        let clusters = cluster_transcripts(&utts, &cfg).unwrap();
        assert_eq!(as_index_groups(&clusters, &ids), components_oracle(&texts, 0.1));
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn min_samples_turns_sparse_points_into_singletons() {
        let texts = ["same words", "same words", "same words", "other thing"];
        let ids = ["a", "b", "c", "d"];
        let utts: Vec<_> = ids.iter().zip(texts).map(|(i, t)| utt(i, t)).collect();
        let cfg = PairGenConfig {
            min_samples: 3,
            ..PairGenConfig::default()
        };
        let clusters = cluster_transcripts(&utts, &cfg).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].member_ids, ["a", "b", "c"]);
        assert_eq!(clusters[1].member_ids, ["d"]);
    }

    #[test]
    fn input_order_does_not_matter() {
        let texts = ["one two", "three four", "one two", "five six", "three four!"];
        let ids = ["e", "d", "c", "b", "a"];
        let mut utts: Vec<_> = ids.iter().zip(texts).map(|(i, t)| utt(i, t)).collect();
        let first = cluster_transcripts(&utts, &PairGenConfig::default()).unwrap();
        utts.reverse();
        let second = cluster_transcripts(&utts, &PairGenConfig::default()).unwrap();
        assert_eq!(first, second);
        let total: usize = first.iter().map(|c| c.member_ids.len()).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn missing_transcript_is_an_error() {
        let mut u = utt("a", "x");
        u.transcript = None;
        assert!(matches!(
            cluster_transcripts(&[u], &PairGenConfig::default()),
            Err(Error::MissingTranscript(_))
        ));
    }
}
