#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde_json::json;

pub struct Fixture {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub images: PathBuf,
    pub word_embeddings: PathBuf,
    pub lm_scores: PathBuf,
    pub image_embeddings: PathBuf,
    pub detections: PathBuf,
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn jsonl(rows: &[serde_json::Value]) -> String {
    rows.iter().map(|r| r.to_string() + "\n").collect()
}

fn textured(w: u32, h: u32, salt: u8) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7) as u8 ^ salt, (y * 5) as u8, ((x + y) as u8).wrapping_mul(3).wrapping_add(salt)]))
}

/// Five instances: three perturbable ones, one yes/no question and one
/// whose image file is missing.
pub fn fixture(root: &Path) -> Fixture {
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for (name, salt) in [("img1.png", 11u8), ("img2.png", 42), ("img3.png", 77), ("img5.png", 99)] {
        textured(48, 40, salt).save(images.join(name)).unwrap();
    }
    let corpus = root.join("corpus.jsonl");
    write(
        &corpus,
        &jsonl(&[
            json!({"id": "q1", "image": "img1.png", "question": "What color is the car?", "answers": ["red", "red", "maroon"], "question_type": "what color", "answer_type": "other"}),
            json!({"id": "q2", "image": "img2.png", "question": "How many dogs are on the grass?", "answers": ["2", "2", "3"], "question_type": "how many", "answer_type": "number"}),
            json!({"id": "q3", "image": "img3.png", "question": "Is the man smiling?", "answers": ["yes"], "question_type": "is the", "answer_type": "yes/no"}),
            json!({"id": "q4", "image": "missing.png", "question": "What is the woman holding?", "answers": ["umbrella"], "question_type": "what is", "answer_type": "other"}),
            json!({"id": "q5", "image": "img5.png", "question": "What color is the bus?", "answers": ["yellow", "orange"], "question_type": "what color", "answer_type": "other"}),
        ]),
    );
    let word_embeddings = root.join("vectors.txt");
    write(
        &word_embeddings,
        "car 1.0 0.0 0.0 0.0\ntruck 0.9 0.1 0.0 0.0\ncars 0.97 0.0 0.0 0.0\nbus 0.8 0.2 0.0 0.0\n\
         dogs 0.0 1.0 0.0 0.0\npuppies 0.0 0.9 0.1 0.0\ncats 0.0 0.8 0.2 0.0\n\
         grass 0.0 0.0 1.0 0.0\nlawn 0.0 0.0 0.9 0.1\nwoman 0.0 0.0 0.0 1.0\ngirl 0.0 0.0 0.1 0.9\n",
    );
    let lm_scores = root.join("lm.json");
    write(
        &lm_scores,
        &json!({
            "What color is the car?": 10.0,
            "What color is the truck?": 10.3,
            "What color is the bus?": 10.9,
            "What color is not the car?": 10.25,
            "How many dogs are on the grass?": 12.0,
            "How many dogs are on the lawn?": 12.2,
            "How many puppies are on the grass?": 12.7,
        })
        .to_string(),
    );
    let image_embeddings = root.join("image_embeddings.json");
    write(
        &image_embeddings,
        &json!({
            "img1.png": [1.0, 0.0, 0.0],
            "img2.png": [0.0, 1.0, 0.0],
            "img3.png": [0.0, 0.0, 1.0],
            "missing.png": [0.5, 0.5, 0.0],
            "img5.png": [0.9, 0.1, 0.0],
            "pool_a.png": [0.95, 0.05, 0.0],
            "pool_b.png": [0.9, 0.0, 0.1],
            "pool_c.png": [0.1, 0.9, 0.0],
        })
        .to_string(),
    );
    let det = |label: &str, x: u32, y: u32, w: u32, h: u32, score: f64| {
        json!({"class_label": label, "bbox": {"x": x, "y": y, "w": w, "h": h}, "score": score})
    };
    let detections = root.join("detections.json");
    write(
        &detections,
        &json!({
            "img1.png": [det("car", 4, 4, 12, 10, 0.93), det("tree", 30, 4, 10, 20, 0.8)],
            "img2.png": [det("dog", 20, 20, 10, 8, 0.9), det("dog", 2, 2, 8, 8, 0.7), det("grass", 0, 30, 48, 10, 0.6)],
            "img5.png": [det("bus", 10, 10, 16, 12, 0.88)],
            "missing.png": [det("woman", 5, 5, 10, 20, 0.9)],
            "pool_a.png": [det("car", 1, 1, 5, 5, 0.9), det("road", 1, 10, 20, 5, 0.9)],
            "pool_b.png": [det("tree", 1, 1, 5, 5, 0.9)],
            "pool_c.png": [det("cat", 1, 1, 5, 5, 0.9), det("sofa", 6, 6, 5, 5, 0.9)],
        })
        .to_string(),
    );
    Fixture { root: root.to_path_buf(), corpus, images, word_embeddings, lm_scores, image_embeddings, detections }
}
