//! Subject-disjoint splits for every supported protocol.

use vsr::data::{conforming_manifest, make_split, Protocol};
use vsr::Rng;

// avletters splits repetitions within each subject, so it is not subject-disjoint.
fn main() -> vsr::Result<()> {
    let names = ["oulu", "cuave", "avletters", "avletters2-fold-1", "avletters2-fold-5"];
    for name in names {
        let protocol: Protocol = name.parse()?;
        let manifest = conforming_manifest(&protocol);
        let split = make_split(&manifest, &protocol, &mut Rng::with_stream(0, 3))?;
        let (train, val, test) = split.counts();
        println!(
            "{name:<18} {} subjects, train {train:>4} val {val:>4} test {test:>4}, subject-disjoint {}",
            manifest.subjects().len(),
            split.subject_disjoint(&manifest)
        );
    }
    Ok(())
}
