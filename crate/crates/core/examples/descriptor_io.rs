//! Writes descriptors to the binary format and reads them back.
//!
//!     cargo run --example descriptor_io

use pass_core::data::{generate_synthetic, read_descriptors, write_descriptors, AttributeSpec, SynthSpec};

fn main() {
    let set = generate_synthetic(&SynthSpec {
        n_identities: 10,
        samples_per_identity: 5,
        dim: 32,
        attributes: vec![
            AttributeSpec::balanced("gender", 2, 0.5),
            AttributeSpec::balanced("skintone", 3, 0.5),
        ],
        cluster_spread: 0.1,
        seed: 4,
    })
    .unwrap();
    let dir = std::env::temp_dir().join("pass-descriptor-io");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("descriptors.bin");
    write_descriptors(&set, &path).unwrap();
    let back = read_descriptors(&path).unwrap();
    println!("{} rows x {} dims, attributes {:?}, {} bytes",
        back.len(), back.dim(), back.attribute_names(), std::fs::metadata(&path).unwrap().len());
    assert_eq!(back, set);
    println!("round trip exact");
}
