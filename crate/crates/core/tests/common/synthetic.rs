//! Generator for stories in the bAbI single-supporting-fact format, used
//! where tests need task files on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PEOPLE: [&str; 4] = ["Mary", "John", "Sandra", "Daniel"];
const PLACES: [&str; 6] = [
    "bathroom", "hallway", "garden", "office", "kitchen", "bedroom",
];
const MOVES: [&str; 4] = [
    "moved to the",
    "went to the",
    "journeyed to the",
    "travelled back to the",
];

/// Stories of five question blocks, each two movements followed by a
/// "Where is X?" question about someone who has moved. Returns the text
/// and the number of questions.
pub fn task1_text(questions: usize, seed: u64) -> (String, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut asked = 0;
    while asked < questions {
        let mut where_: Vec<Option<(&str, usize)>> = vec![None; PEOPLE.len()];
        let mut id = 1;
        for _ in 0..5 {
            if asked == questions {
                break;
            }
            for _ in 0..2 {
                let who = rng.random_range(0..PEOPLE.len());
                let place = *PLACES.choose(&mut rng).unwrap();
                let verb = *MOVES.choose(&mut rng).unwrap();
                let _ = writeln!(out, "{id} {} {verb} {place}.", PEOPLE[who]);
                where_[who] = Some((place, id));
                id += 1;
            }
            let known: Vec<usize> = (0..PEOPLE.len()).filter(|&p| where_[p].is_some()).collect();
            let who = *known.choose(&mut rng).unwrap();
            let (place, line) = where_[who].unwrap();
            let _ = writeln!(out, "{id} Where is {}? \t{place}\t{line}", PEOPLE[who]);
            id += 1;
            asked += 1;
        }
    }
    (out, questions)
}

/// Writes `qa{task}_{train,valid,test}.txt` under `dir`.
pub fn write_task(dir: &Path, task: u8, train: usize, valid: usize, test: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    for (split, n, offset) in [("train", train, 0), ("valid", valid, 1), ("test", test, 2)] {
        let (text, _) = task1_text(n, seed.wrapping_mul(31).wrapping_add(offset));
        fs::write(dir.join(format!("qa{task}_{split}.txt")), text).unwrap();
    }
}
