#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use mixgen_core::dataio::{save_png, tensor_file::write_tensor_file, write_manifest, ManifestRecord};
use mixgen_core::metrics::GroundTruth;
use mixgen_core::ImageTensor;

const WORDS: [&str; 12] = [
    "a", "dog", "cat", "runs", "on", "the", "grass", "near", "red", "car", "under", "sky",
];

pub fn caption(i: usize) -> String {
    let len = 3 + (i * 7) % 9;
    (0..len).map(|k| WORDS[(i * 5 + k * 3) % WORDS.len()]).collect::<Vec<_>>().join(" ")
}

/// Deterministic gradient image, distinct for every `i`.
pub fn synthetic_image(i: usize, h: usize, w: usize) -> ImageTensor {
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (x * (3 + c) + y * (5 + i % 7) + i * 13 + c * 40) % 256;
                data.push(v as f32 / 255.0);
            }
        }
    }
    ImageTensor::new(h, w, data).unwrap()
}

/// Writes `n` PNGs of `h x w` and a manifest with one caption per image.
pub fn synthetic_manifest(dir: &Path, n: usize, h: usize, w: usize) -> PathBuf {
    let image_dir = dir.join("src");
    std::fs::create_dir_all(&image_dir).unwrap();
    let records: Vec<ManifestRecord> = (0..n)
        .map(|i| {
            let name = format!("src/{i:05}.png");
            save_png(&synthetic_image(i, h, w), &dir.join(&name)).unwrap();
            ManifestRecord {
                id: format!("s{i}"),
                image: name,
                captions: vec![caption(i)],
            }
        })
        .collect();
    let path = dir.join("manifest.jsonl");
    write_manifest(std::fs::File::create(&path).unwrap(), &records).unwrap();
    path
}

/// Writes an `n x n` score matrix, one caption per image, whose best ranks
/// put exactly `tr[k]` images and `ir[k]` texts within the top 1, 5 and 10.
///
/// The ground-truth score is 1; a set of off-diagonal cells scored 2 pushes
/// it down. Row sums fix text-retrieval ranks, column sums image-retrieval
/// ranks, and the cells are placed greedily to meet both.
pub fn recall_fixture(dir: &Path, n: usize, tr: [usize; 3], ir: [usize; 3]) -> (PathBuf, PathBuf) {
    let demands = |hits: [usize; 3], extra: usize| -> Vec<usize> {
        let mut d = vec![0; hits[0]];
        d.extend(std::iter::repeat_n(1, hits[1] - hits[0]));
        d.extend(std::iter::repeat_n(5, hits[2] - hits[1]));
        let tail = n - hits[2];
        d.extend((0..tail).map(|k| 10 + extra / tail + usize::from(k < extra % tail)));
        d
    };
    let base = |hits: [usize; 3]| (hits[1] - hits[0]) + 5 * (hits[2] - hits[1]) + 10 * (n - hits[2]);
    let (row_base, col_base) = (base(tr), base(ir));
    let total = row_base.max(col_base);
    let rows = demands(tr, total - row_base);
    // Reverse the column layout so heavy rows and heavy columns differ.
    let mut cols = demands(ir, total - col_base);
    cols.reverse();

    let mut scores = vec![0.0f32; n * n];
    for i in 0..n {
        scores[i * n + i] = 1.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(rows[i]));
    for i in order {
        let mut candidates: Vec<usize> = (0..n).filter(|&j| j != i && cols[j] > 0).collect();
        candidates.sort_by_key(|&j| (std::cmp::Reverse(cols[j]), j));
        assert!(candidates.len() >= rows[i], "fixture degrees are not realizable");
        for &j in &candidates[..rows[i]] {
            scores[i * n + j] = 2.0;
            cols[j] -= 1;
        }
    }
    assert!(cols.iter().all(|&c| c == 0));

    let scores_path = dir.join("scores.mxtn");
    write_tensor_file(&scores_path, &[n, n], &scores).unwrap();
    let gt_path = dir.join("gt.json");
    std::fs::write(&gt_path, GroundTruth::consecutive(n, 1).to_json()).unwrap();
    (scores_path, gt_path)
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn mixgen(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mixgen")).args(args).output().unwrap();
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
