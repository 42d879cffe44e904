// SPDX-License-Identifier: Apache-2.0

//! Exact match and token F1 against alias lists.

use ragscale::metrics::{exact_match, f1, normalize_answer};

fn main() {
    let cases: [(&str, &[&str]); 5] = [
        ("The Eiffel Tower", &["Eiffel Tower", "La tour Eiffel"]),
        ("eiffel tower, paris", &["Eiffel Tower"]),
        ("Sprite!", &["Sprite", "Sprite (soft drink)"]),
        ("an apple a day", &["apple"]),
        ("", &["anything"]),
    ];
    for (pred, gold) in cases {
        println!(
            "{pred:>22}  norm {:?}  EM {}  F1 {:.3}",
            normalize_answer(pred),
            exact_match(pred, gold),
            f1(pred, gold)
        );
    }
}
