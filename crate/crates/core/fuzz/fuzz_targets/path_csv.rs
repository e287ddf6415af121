#![no_main]

use levy_ito::CadlagPath;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(path) = CadlagPath::read_csv(data) {
        let text = path.to_csv_string();
        let again = CadlagPath::from_csv_str(&text).expect("written csv parses");
        assert_eq!(again.to_csv_string(), text);
        for k in 0..path.grid().len() {
            assert_eq!(path.value(k).len(), path.dim());
            assert_eq!(path.left(k).len(), path.dim());
        }
    }
});
