//! Golden checks of the bundled wordlist and lexicon files: they must
//! parse, validate, and keep their published contents.

use std::path::{Path, PathBuf};

use embias::modify::StereotypeLexicon;
use embias::weat::WeatTest;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn bundled_tests_parse_and_validate() {
    for name in ["weat6", "weat7", "weat8"] {
        let test = WeatTest::load(&data_dir().join(format!("weat/{name}.toml"))).unwrap();
        assert_eq!(test.name, name);
        assert_eq!(test.language, "en");
        for list in [&test.x, &test.y, &test.a, &test.b] {
            assert_eq!(list.len(), 8, "{name}: lists are eight words each");
        }
    }
}

#[test]
fn bundled_test_contents_are_pinned() {
    let weat6 = WeatTest::load(&data_dir().join("weat/weat6.toml")).unwrap();
    assert_eq!(weat6.x[0], "executive");
    assert_eq!(weat6.y[0], "home");
    // The career/family test shares the gender terms of the other two.
    let weat7 = WeatTest::load(&data_dir().join("weat/weat7.toml")).unwrap();
    assert_eq!(weat6.a, weat7.a);
    assert_eq!(weat6.b, weat7.b);
    assert_eq!(weat7.x[0], "math");
    assert_eq!(weat7.y[0], "poetry");
    let weat8 = WeatTest::load(&data_dir().join("weat/weat8.toml")).unwrap();
    assert_eq!(weat8.x[0], "science");
    assert!(weat8.a.contains(&"grandfather".to_string()));
    assert!(weat8.b.contains(&"grandmother".to_string()));
}

#[test]
fn bundled_lexicon_covers_the_test_words() {
    let lexicon =
        StereotypeLexicon::load(&data_dir().join("lexicon/gender_career_family.toml")).unwrap();
    lexicon.validate().unwrap();
    for name in ["weat6", "weat7", "weat8"] {
        let test = WeatTest::load(&data_dir().join(format!("weat/{name}.toml"))).unwrap();
        for w in &test.x {
            assert!(lexicon.concept1.contains(w), "{name}: {w} missing from concept1");
        }
        for w in &test.y {
            assert!(lexicon.concept2.contains(w), "{name}: {w} missing from concept2");
        }
        for w in &test.a {
            assert!(lexicon.group1.contains(w), "{name}: {w} missing from group1");
        }
        for w in &test.b {
            assert!(lexicon.group2.contains(w), "{name}: {w} missing from group2");
        }
    }
}
