//! COCO-style run-length encoding of a binary mask, and its JSON form.
//!
//!     cargo run -p grex --example rle_codec

use grex::core::geometry::{rle_decode, rle_encode, BinaryMask};

fn main() {
    // a 6x8 mask with a filled 3x4 rectangle
    let mask = BinaryMask::from_fn(6, 8, |y, x| (1..4).contains(&y) && (2..6).contains(&x));
    let rle = rle_encode(&mask);
    println!("area {} -> counts {:?}", mask.area(), rle.counts);
    println!("json: {}", serde_json::to_string(&rle).unwrap());

    let back = rle_decode(&rle).unwrap();
    assert_eq!(back, mask);
    for y in 0..back.height() {
        let row: String = (0..back.width()).map(|x| if back.get(y, x) { '#' } else { '.' }).collect();
        println!("  {row}");
    }

    // runs that do not add up to h*w are rejected
    let mut broken = rle.clone();
    broken.counts.push(3);
    println!("tampered: {}", rle_decode(&broken).unwrap_err());
}
